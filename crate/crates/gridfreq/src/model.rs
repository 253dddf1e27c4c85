//! Domain types and scenario configuration.
//!
//! All quantities are per-unit deviations from a pre-disturbance operating
//! point: `freq` is frequency deviation in p.u. (multiply by 50 to get Hz
//! deviation at a 50 Hz nominal), powers are deviations from the baseline
//! dispatch. `baseline_setpoint` exists only so reports can show absolute
//! megawatt-scale numbers; the dynamics never use it.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Nominal grid frequency in Hz; also the p.u. -> Hz deviation scale.
pub const NOMINAL_HZ: f64 = 50.0;

/// Convert a per-unit frequency deviation to an absolute frequency in Hz.
pub fn pu_to_hz(freq_pu: f64) -> f64 {
    NOMINAL_HZ + NOMINAL_HZ * freq_pu
}

/// Convert a per-unit frequency deviation to a frequency deviation in Hz.
pub fn pu_to_hz_dev(freq_pu: f64) -> f64 {
    NOMINAL_HZ * freq_pu
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("schedule produces nonpositive {field} for area {area} at t = {time}")]
    NonpositiveScheduledValue {
        field: &'static str,
        area: usize,
        time: f64,
    },
    #[error("schedule references area {area} but the system has {n_areas} areas")]
    ScheduleAreaOutOfRange { area: usize, n_areas: usize },
}

/// Static parameters of one control area.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AreaParams {
    /// Rotational inertia M (p.u. * s^2).
    pub inertia: f64,
    /// Load-damping coefficient D (p.u.).
    pub damping: f64,
    /// Quadratic generation cost coefficient a ($ / p.u.^2).
    pub cost_quad: f64,
    /// Linear generation cost coefficient b ($ / p.u.).
    pub cost_lin: f64,
    /// Lower generation capacity (p.u. deviation).
    pub cap_lo: f64,
    /// Upper generation capacity (p.u. deviation).
    pub cap_hi: f64,
    /// Lower edge of the safe frequency band (p.u. deviation, negative).
    pub freq_lo: f64,
    /// Upper edge of the safe frequency band (p.u. deviation, positive).
    pub freq_hi: f64,
    /// Barrier convergence rate beta (1/s) of the safety corrector.
    pub cbf_gain: f64,
    /// Absolute dispatch the deviations are measured from (display only).
    #[serde(default)]
    pub baseline_setpoint: f64,
}

/// One tie line between two areas. The listed order fixes the flow sign:
/// a positive flow on edge (i, j) goes from `i` (tail) to `j` (head).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TieLineParams {
    /// Tail area index (0-based).
    pub i: usize,
    /// Head area index (0-based).
    pub j: usize,
    /// Susceptance used by the linearized coupling (p.u.).
    pub b_linear: f64,
    /// Susceptance used by the sine coupling (p.u.).
    pub b_nonlinear: f64,
}

/// How a piecewise load signal interpolates between breakpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpMode {
    /// Hold the value of the latest breakpoint at or before t.
    StepHold,
    /// Linear interpolation between breakpoints, held flat outside.
    LinearInterpolate,
}

/// One per-area load signal: breakpoints `(time, value)` plus a mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PiecewiseSignal {
    pub mode: InterpMode,
    pub points: Vec<(f64, f64)>,
}

impl PiecewiseSignal {
    /// Constant signal, convenient for tests and quiet areas.
    pub fn constant(value: f64) -> Self {
        PiecewiseSignal {
            mode: InterpMode::StepHold,
            points: vec![(0.0, value)],
        }
    }

    /// Evaluate at time t (defined for all t: ends are held flat).
    pub fn value_at(&self, t: f64) -> f64 {
        let pts = &self.points;
        if pts.is_empty() {
            return 0.0;
        }
        if t <= pts[0].0 {
            return pts[0].1;
        }
        // Index of the last breakpoint with time <= t.
        let k = match pts.binary_search_by(|p| p.0.partial_cmp(&t).unwrap()) {
            Ok(exact) => exact,
            Err(ins) => ins - 1,
        };
        match self.mode {
            InterpMode::StepHold => pts[k].1,
            InterpMode::LinearInterpolate => {
                if k + 1 >= pts.len() {
                    return pts[k].1;
                }
                let (t0, v0) = pts[k];
                let (t1, v1) = pts[k + 1];
                v0 + (v1 - v0) * (t - t0) / (t1 - t0)
            }
        }
    }

    /// Index of the breakpoint interval active at time t (for detecting
    /// segment changes of step-hold profiles).
    pub fn segment_index(&self, t: f64) -> usize {
        let pts = &self.points;
        if pts.is_empty() || t <= pts[0].0 {
            return 0;
        }
        match pts.binary_search_by(|p| p.0.partial_cmp(&t).unwrap()) {
            Ok(exact) => exact,
            Err(ins) => ins - 1,
        }
    }
}

/// Net-load signals for every area plus the controller-side scaling.
///
/// The plant always integrates the true load; the controller's measurements
/// (both layers) see the true load multiplied by `prediction_error_factor`,
/// modelling a systematic prediction error.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoadProfile {
    pub signals: Vec<PiecewiseSignal>,
    #[serde(default = "default_prediction_factor")]
    pub prediction_error_factor: f64,
}

fn default_prediction_factor() -> f64 {
    1.0
}

/// Load values at one instant, split by who observes them.
#[derive(Debug, Clone)]
pub struct LoadSample {
    /// True net load integrated by the plant.
    pub plant: DVector<f64>,
    /// Scaled net load the controller acts on.
    pub controller: DVector<f64>,
}

impl LoadProfile {
    /// Constant zero load for n areas.
    pub fn zero(n: usize) -> Self {
        LoadProfile {
            signals: vec![PiecewiseSignal::constant(0.0); n],
            prediction_error_factor: 1.0,
        }
    }

    /// Evaluate all areas at time t, returning plant and controller views.
    pub fn load_at(&self, t: f64) -> LoadSample {
        let plant = DVector::from_iterator(
            self.signals.len(),
            self.signals.iter().map(|s| s.value_at(t)),
        );
        let controller = &plant * self.prediction_error_factor;
        LoadSample { plant, controller }
    }

    /// Per-area breakpoint interval indices at time t. Two instants with
    /// equal segment vectors see the same constant load under step-hold.
    pub fn segment_at(&self, t: f64) -> Vec<usize> {
        self.signals.iter().map(|s| s.segment_index(t)).collect()
    }

    /// True iff every signal holds a constant value (step-hold semantics).
    pub fn is_piecewise_constant(&self) -> bool {
        self.signals.iter().all(|s| s.mode == InterpMode::StepHold)
    }
}

/// Which physical parameter a schedule entry rescales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduledField {
    Inertia,
    Damping,
}

/// One multiplicative override: from `time` on, the area's field becomes
/// `factor` times its base value. A later entry on the same (area, field)
/// replaces the earlier one; factors do not compose.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub time: f64,
    pub area: usize,
    pub field: ScheduledField,
    pub factor: f64,
}

/// Time-ordered parameter overrides modelling inertia and damping changes
/// the controller is not told about.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ParameterSchedule {
    pub entries: Vec<ScheduleEntry>,
}

impl ParameterSchedule {
    /// Effective parameters at time t: base values with every entry whose
    /// activation time is <= t applied (later activation wins; list order
    /// breaks ties).
    pub fn params_at(&self, base: &[AreaParams], t: f64) -> Result<Vec<AreaParams>, ModelError> {
        let mut out: Vec<AreaParams> = base.to_vec();
        // Stable sort by time keeps list order for equal activation times.
        let mut active: Vec<&ScheduleEntry> =
            self.entries.iter().filter(|e| e.time <= t).collect();
        active.sort_by(|a, b| a.time.partial_cmp(&b.time).unwrap());
        for e in active {
            if e.area >= out.len() {
                return Err(ModelError::ScheduleAreaOutOfRange {
                    area: e.area,
                    n_areas: out.len(),
                });
            }
            match e.field {
                ScheduledField::Inertia => {
                    out[e.area].inertia = base[e.area].inertia * e.factor;
                    if out[e.area].inertia <= 0.0 {
                        return Err(ModelError::NonpositiveScheduledValue {
                            field: "inertia",
                            area: e.area,
                            time: e.time,
                        });
                    }
                }
                ScheduledField::Damping => {
                    out[e.area].damping = base[e.area].damping * e.factor;
                    if out[e.area].damping <= 0.0 {
                        return Err(ModelError::NonpositiveScheduledValue {
                            field: "damping",
                            area: e.area,
                            time: e.time,
                        });
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Area connectivity: which areas exist and how tie lines join them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Topology {
    pub n_areas: usize,
    pub tie_lines: Vec<TieLineParams>,
}

/// Which coupling the plant integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantMode {
    Linear,
    Nonlinear,
}

/// Which controller produces the applied generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerMode {
    /// Reference generator plus safety corrector.
    FoCbf,
    /// Reference generator applied directly (comparison baseline).
    FoPlain,
}

impl ControllerMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ControllerMode::FoCbf => "fo_cbf",
            ControllerMode::FoPlain => "fo_plain",
        }
    }
}

/// Time-stepping scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Explicit Euler with a post-step box clamp on the reference (default).
    Euler,
    /// Classic fourth-order Runge-Kutta on the projected field, with stage
    /// states clamped to the box and a final clamp.
    Rk4,
}

impl Default for Scheme {
    fn default() -> Self {
        Scheme::Euler
    }
}

/// Initial plant and controller state, by field.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitialState {
    /// Reduced inter-area angles (length n_areas - 1, rad).
    pub alpha: Vec<f64>,
    /// Frequency deviations (p.u.).
    pub w: Vec<f64>,
    /// Generation reference deviations (p.u.).
    pub reference: Vec<f64>,
    /// Dispatch multipliers.
    pub multiplier: Vec<f64>,
}

/// Simulation section of a scenario: modes, stepping, initial state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimSection {
    pub plant_mode: PlantMode,
    pub controller_mode: ControllerMode,
    pub dt: f64,
    pub t_end: f64,
    pub initial: InitialState,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_decimate")]
    pub decimate: usize,
    #[serde(default)]
    pub scheme: Scheme,
    /// When true the controller uses the scheduled (true) inertia/damping
    /// instead of the base values. Off by default: parameter drift is
    /// something the controller normally does not observe.
    #[serde(default)]
    pub controller_tracks_schedule: bool,
}

fn default_decimate() -> usize {
    1
}

/// A complete, serializable description of one simulation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub topology: Topology,
    pub areas: Vec<AreaParams>,
    pub load: LoadProfile,
    #[serde(default)]
    pub schedule: Option<ParameterSchedule>,
    pub sim: SimSection,
}

/// Outcome of config validation: the list of violated requirements.
/// An empty list means the scenario is runnable.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_runnable(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.violations.is_empty() {
            write!(f, "config valid")
        } else {
            for v in &self.violations {
                writeln!(f, "- {v}")?;
            }
            Ok(())
        }
    }
}

/// Check every structural and numeric requirement on a scenario config.
/// Returns the full list of violations rather than stopping at the first.
pub fn validate(config: &ScenarioConfig) -> ValidationReport {
    let mut v: Vec<String> = Vec::new();
    let n = config.topology.n_areas;

    if n == 0 {
        v.push("topology: n_areas must be at least 1".to_string());
    }
    if config.areas.len() != n {
        v.push(format!(
            "areas: expected {n} entries to match n_areas, found {}",
            config.areas.len()
        ));
    }

    for (idx, a) in config.areas.iter().enumerate() {
        if !(a.inertia > 0.0) {
            v.push(format!("area {idx}: inertia must be positive"));
        }
        if !(a.damping > 0.0) {
            v.push(format!("area {idx}: damping must be positive"));
        }
        if !(a.cost_quad > 0.0) {
            v.push(format!("area {idx}: cost_quad must be positive"));
        }
        if !(a.cost_lin > 0.0) {
            v.push(format!("area {idx}: cost_lin must be positive"));
        }
        if !(a.cbf_gain > 0.0) {
            v.push(format!("area {idx}: cbf_gain must be positive"));
        }
        if !(a.cap_lo <= a.cap_hi) {
            v.push(format!("area {idx}: cap_lo must not exceed cap_hi"));
        }
        if !(a.freq_lo < 0.0 && 0.0 < a.freq_hi) {
            v.push(format!(
                "area {idx}: safe band must straddle zero (freq_lo < 0 < freq_hi)"
            ));
        }
    }

    // Tie lines: valid endpoints, no self-loops, positive susceptances,
    // at most one line per unordered pair.
    let mut seen_pairs: Vec<(usize, usize)> = Vec::new();
    for (e, line) in config.topology.tie_lines.iter().enumerate() {
        if line.i >= n || line.j >= n {
            v.push(format!(
                "tie line {e}: endpoint out of range (areas are 0..{n})"
            ));
            continue;
        }
        if line.i == line.j {
            v.push(format!("tie line {e}: self-loops are not allowed"));
        }
        if !(line.b_linear > 0.0) {
            v.push(format!("tie line {e}: b_linear must be positive"));
        }
        if !(line.b_nonlinear > 0.0) {
            v.push(format!("tie line {e}: b_nonlinear must be positive"));
        }
        let key = (line.i.min(line.j), line.i.max(line.j));
        if seen_pairs.contains(&key) {
            v.push(format!(
                "tie line {e}: duplicate line between areas {} and {}",
                key.0, key.1
            ));
        }
        seen_pairs.push(key);
    }

    if n > 0 && config.areas.len() == n && !is_connected(n, &config.topology.tie_lines) {
        v.push("topology: tie lines must form a connected graph".to_string());
    }

    // Load profile.
    if config.load.signals.len() != n {
        v.push(format!(
            "load: expected {n} signals to match n_areas, found {}",
            config.load.signals.len()
        ));
    }
    if !(config.load.prediction_error_factor > 0.0)
        || !config.load.prediction_error_factor.is_finite()
    {
        v.push("load: prediction_error_factor must be positive and finite".to_string());
    }
    for (idx, s) in config.load.signals.iter().enumerate() {
        if s.points.is_empty() {
            v.push(format!("load signal {idx}: needs at least one breakpoint"));
        }
        for w in s.points.windows(2) {
            if !(w[0].0 < w[1].0) {
                v.push(format!(
                    "load signal {idx}: breakpoint times must be strictly increasing"
                ));
                break;
            }
        }
        if s.points.iter().any(|(t, val)| !t.is_finite() || !val.is_finite()) {
            v.push(format!("load signal {idx}: breakpoints must be finite"));
        }
    }

    // Schedule.
    if let Some(schedule) = &config.schedule {
        for (k, e) in schedule.entries.iter().enumerate() {
            if e.area >= n {
                v.push(format!("schedule entry {k}: area {} out of range", e.area));
            }
            if !(e.factor > 0.0) || !e.factor.is_finite() {
                let name = match e.field {
                    ScheduledField::Inertia => "inertia",
                    ScheduledField::Damping => "damping",
                };
                v.push(format!(
                    "schedule entry {k}: factor must be positive (nonpositive {name} is not physical)"
                ));
            }
            if !e.time.is_finite() || e.time < 0.0 {
                v.push(format!(
                    "schedule entry {k}: time must be finite and nonnegative"
                ));
            }
        }
    }

    // Sim section.
    let sim = &config.sim;
    if !(sim.dt > 0.0) || !sim.dt.is_finite() {
        v.push("sim: dt must be positive and finite".to_string());
    }
    if !(sim.t_end >= sim.dt) || !sim.t_end.is_finite() {
        v.push("sim: t_end must be finite and at least one step long".to_string());
    }
    if sim.decimate == 0 {
        v.push("sim: decimate must be at least 1".to_string());
    }
    let n_red = n.saturating_sub(1);
    if sim.initial.alpha.len() != n_red {
        v.push(format!(
            "sim: initial alpha must have length {n_red} (areas minus one)"
        ));
    }
    if sim.initial.w.len() != n {
        v.push(format!("sim: initial w must have length {n}"));
    }
    if sim.initial.reference.len() != n {
        v.push(format!("sim: initial reference must have length {n}"));
    }
    if sim.initial.multiplier.len() != n {
        v.push(format!("sim: initial multiplier must have length {n}"));
    }
    let all_finite = sim
        .initial
        .alpha
        .iter()
        .chain(&sim.initial.w)
        .chain(&sim.initial.reference)
        .chain(&sim.initial.multiplier)
        .all(|x| x.is_finite());
    if !all_finite {
        v.push("sim: initial state must be finite".to_string());
    }
    if config.areas.len() == n && sim.initial.reference.len() == n {
        for (idx, (r, a)) in sim
            .initial
            .reference
            .iter()
            .zip(config.areas.iter())
            .enumerate()
        {
            if *r < a.cap_lo || *r > a.cap_hi {
                v.push(format!(
                    "sim: initial reference for area {idx} lies outside the capacity box"
                ));
            }
        }
    }

    ValidationReport { violations: v }
}

/// Breadth-first connectivity over the undirected tie-line graph.
fn is_connected(n: usize, lines: &[TieLineParams]) -> bool {
    if n <= 1 {
        return true;
    }
    let mut adj = vec![Vec::new(); n];
    for l in lines {
        if l.i < n && l.j < n && l.i != l.j {
            adj[l.i].push(l.j);
            adj[l.j].push(l.i);
        }
    }
    let mut seen = vec![false; n];
    let mut queue = std::collections::VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for &w in &adj[u] {
            if !seen[w] {
                seen[w] = true;
                count += 1;
                queue.push_back(w);
            }
        }
    }
    count == n
}
