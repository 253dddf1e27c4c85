//! Deterministic fixed-step closed-loop simulation with runtime monitors.
//!
//! A run advances plant and controller together with explicit Euler (the
//! reference is clamped back into its capacity box after every step, making
//! the scheme a projected Euler method) or optionally with RK4 on the
//! projected field. Every step also evaluates the monitor suite: safety and
//! capacity margins, barrier residuals, out-of-band monotonicity, an energy
//! function with its finite-difference rate, and the running metric
//! accumulators. Everything is deterministic given the config.

use nalgebra::{DMatrix, DVector};
use serde_json::json;
use thiserror::Error;

use crate::control::{self, ControllerState, CorrectorBounds};
use crate::graph::{self, GraphError, IncidenceMatrices};
use crate::model::{
    validate, AreaParams, ControllerMode, ModelError, PlantMode, ScenarioConfig, Scheme,
    ValidationReport, NOMINAL_HZ,
};
use crate::oracle::{self, Equilibrium};
use crate::plant::{self, PlantError, PlantState};
use crate::projection::{self, ProjectionError};

/// Settling band on the frequency deviation, in Hz: the settling time is
/// the first instant after which every |deviation| stays within this band.
pub const SETTLING_BAND_HZ: f64 = 0.002;

/// Slack allowed on safety margins by the invariant check, in p.u.
/// Covers discretization at the default dt; the shipped scenarios hold
/// margins >= 0 outright.
pub const CHECK_SAFETY_SLACK_PU: f64 = 1e-6;

/// Tolerance on barrier residuals in the invariant check (p.u.).
pub const CHECK_CBF_RESIDUAL_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario config is not runnable:\n{0}")]
    InvalidConfig(ValidationReport),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error("state became non-finite at t = {t} s; partial trajectory retained")]
    NonFinite { t: f64, trajectory: Box<Trajectory> },
}

/// Monitor outputs evaluated at one instant.
#[derive(Debug, Clone)]
pub struct MonitorValues {
    /// Per-area distance to the nearer band edge (p.u.); negative = outside.
    pub safety_margin: Vec<f64>,
    /// Per-area distance of the applied power to the nearer capacity bound.
    pub capacity_margin: Vec<f64>,
    /// Barrier residual raw_lo - applied (<= 0 means the lower barrier holds).
    pub cbf_residual_lo: Vec<f64>,
    /// Barrier residual applied - raw_hi (<= 0 means the upper barrier holds).
    pub cbf_residual_hi: Vec<f64>,
    /// True when the area is in band, or outside but moving toward it
    /// (judged on the analytic frequency derivative).
    pub monotone_ok: Vec<bool>,
    /// Areas whose safety interval was empty at this instant.
    pub infeasible_areas: Vec<usize>,
    /// Energy function value (NaN when not applicable).
    pub lyapunov: f64,
    /// Backward finite difference of the energy function (NaN at segment
    /// starts and when not applicable).
    pub lyapunov_rate: f64,
    /// Analytic frequency derivatives (p.u./s).
    pub freq_dot: DVector<f64>,
}

/// One recorded instant of a run.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub t: f64,
    pub plant: PlantState,
    pub ctrl: ControllerState,
    /// Generation actually applied to the plant.
    pub applied: DVector<f64>,
    /// Net load as the controller saw it.
    pub load_view: DVector<f64>,
    /// Per-edge tie-line flows (signed tail -> head).
    pub flows: DVector<f64>,
    /// Safety intervals per area.
    pub bounds: Vec<CorrectorBounds>,
    pub monitors: MonitorValues,
    /// Instantaneous generation cost ($).
    pub cost: f64,
}

/// Ordered records plus the shape metadata needed to interpret them.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
    pub n_areas: usize,
    pub n_edges: usize,
    pub dt: f64,
}

/// Summary of the energy-function monitor over a run.
#[derive(Debug, Clone)]
pub struct LyapunovSummary {
    /// Whether the monitor was ever active (linear plant, piecewise-constant
    /// load, exact controller-side load knowledge).
    pub active: bool,
    /// Largest backward finite-difference rate seen within any segment.
    pub max_rate: f64,
    /// Value at the first instant of the last constant-load segment.
    pub last_segment_start_value: f64,
    pub last_segment_start_time: f64,
    /// Value at the final instant.
    pub final_value: f64,
}

impl Default for LyapunovSummary {
    fn default() -> Self {
        LyapunovSummary {
            active: false,
            max_rate: f64::NAN,
            last_segment_start_value: f64::NAN,
            last_segment_start_time: f64::NAN,
            final_value: f64::NAN,
        }
    }
}

/// End-of-run metrics. Extremes and integrals are accumulated at every
/// step regardless of record decimation.
#[derive(Debug, Clone)]
pub struct Metrics {
    /// Per-area minimum absolute frequency (Hz).
    pub nadir_hz: Vec<f64>,
    /// Per-area maximum absolute frequency (Hz).
    pub zenith_hz: Vec<f64>,
    /// First time after which every |deviation| <= SETTLING_BAND_HZ holds
    /// through the end; None if the run never settles.
    pub settling_time_s: Option<f64>,
    /// Latest first-entry time among areas that started outside the safe
    /// band; None when no area started outside (or one never entered).
    pub safe_entry_time_s: Option<f64>,
    /// Per-area first entry times for areas that started outside.
    pub entry_time_s: Vec<Option<f64>>,
    /// Number of evaluated instants with at least one area out of band.
    pub violation_count: u64,
    /// Time integral of band exceedance summed over areas (Hz * s).
    pub violation_integral_hz_s: f64,
    /// Largest |frequency derivative| seen (Hz/s).
    pub max_rocof_hz_s: f64,
    /// Instantaneous generation cost at the final instant ($).
    pub final_cost: f64,
    /// Distance of the final state to the oracle equilibrium for the final
    /// load; None when that dispatch is infeasible.
    pub steady_residual: Option<f64>,
    /// Per-area worst safety margin over the run (Hz deviation).
    pub min_safety_margin_hz: Vec<f64>,
    /// Worst capacity margin over the run (p.u.).
    pub min_capacity_margin: f64,
    /// Out-of-band instants whose analytic drift pointed away from the band.
    pub monotone_violation_count: u64,
    /// Total infeasible-interval events over the run.
    pub infeasible_event_count: u64,
    /// Largest per-edge angle difference magnitude seen (rad).
    pub max_edge_angle_rad: f64,
    pub lyapunov: LyapunovSummary,
}

impl Metrics {
    /// The stable JSON export: one object, fixed keys.
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "nadir_hz": self.nadir_hz,
            "zenith_hz": self.zenith_hz,
            "settling_time_s": self.settling_time_s,
            "safe_entry_time_s": self.safe_entry_time_s,
            "violation_count": self.violation_count,
            "violation_integral_hz_s": self.violation_integral_hz_s,
            "max_rocof_hz_s": self.max_rocof_hz_s,
            "final_cost": self.final_cost,
            "steady_residual": self.steady_residual,
        })
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub trajectory: Trajectory,
    pub metrics: Metrics,
    /// Full-resolution frequency deviations, stride n_areas, one slice per
    /// evaluated instant (p.u.). Kept flat so long runs stay cheap.
    pub freq_trace: Vec<f64>,
    pub n_areas: usize,
    pub dt: f64,
    pub steps: usize,
}

impl SimOutput {
    /// Frequency deviation of `area` at step `k` (p.u.), full resolution.
    pub fn freq_at(&self, k: usize, area: usize) -> f64 {
        self.freq_trace[k * self.n_areas + area]
    }
}

/// Energy of the deviation from an equilibrium: stiffness-weighted angle
/// energy, inertia-weighted kinetic energy, and the squared controller
/// offsets.
pub fn lyapunov(
    plant_state: &PlantState,
    ctrl: &ControllerState,
    eq: &Equilibrium,
    params: &[AreaParams],
    stiffness: &DMatrix<f64>,
) -> f64 {
    let alpha_hat = &plant_state.alpha - &eq.plant.alpha;
    let freq_hat = &plant_state.freq - &eq.plant.freq;
    let ref_hat = &ctrl.reference - &eq.ctrl.reference;
    let mult_hat = &ctrl.multiplier - &eq.ctrl.multiplier;
    let angle_term = 0.5 * alpha_hat.dot(&(stiffness * &alpha_hat));
    let kinetic: f64 = (0..params.len())
        .map(|i| 0.5 * params[i].inertia * freq_hat[i] * freq_hat[i])
        .sum();
    angle_term + kinetic + 0.5 * ref_hat.norm_squared() + 0.5 * mult_hat.norm_squared()
}

/// A validated scenario ready to run.
#[derive(Debug)]
pub struct Simulator {
    pub config: ScenarioConfig,
    mats: IncidenceMatrices,
    stiffness: DMatrix<f64>,
    cap_lo: DVector<f64>,
    cap_hi: DVector<f64>,
    /// Piecewise-constant timeline of true (scheduled) parameters:
    /// entry k holds the parameters valid from its activation time on.
    param_timeline: Vec<(f64, Vec<AreaParams>)>,
}

/// Everything evaluated at one instant of the closed loop.
struct Instant<'a> {
    load_view: DVector<f64>,
    params_true: &'a [AreaParams],
    deltas: DVector<f64>,
    flows: DVector<f64>,
    bounds: Vec<CorrectorBounds>,
    applied: DVector<f64>,
    infeasible: Vec<usize>,
    alpha_dot: DVector<f64>,
    freq_dot: DVector<f64>,
    reference_dot: DVector<f64>,
    multiplier_dot: DVector<f64>,
}

impl Simulator {
    pub fn new(config: ScenarioConfig) -> Result<Self, SimError> {
        let report = validate(&config);
        if !report.is_runnable() {
            return Err(SimError::InvalidConfig(report));
        }
        let mats = graph::build(&config.topology)?;
        let stiffness = graph::reduced_stiffness(&mats, &config.topology.tie_lines);
        let (cap_lo, cap_hi) = control::capacity_box(&config.areas);

        // Collapse the schedule into a time-sorted snapshot list so stage
        // evaluations at arbitrary times stay O(log E).
        let mut times: Vec<f64> = config
            .schedule
            .as_ref()
            .map(|s| s.entries.iter().map(|e| e.time).collect())
            .unwrap_or_default();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup();
        let mut param_timeline = vec![(f64::NEG_INFINITY, config.areas.clone())];
        if let Some(schedule) = &config.schedule {
            for &t in &times {
                param_timeline.push((t, schedule.params_at(&config.areas, t)?));
            }
        }

        Ok(Simulator {
            config,
            mats,
            stiffness,
            cap_lo,
            cap_hi,
            param_timeline,
        })
    }

    /// True (scheduled) parameters at time t.
    pub fn params_true_at(&self, t: f64) -> &[AreaParams] {
        let idx = self
            .param_timeline
            .partition_point(|(time, _)| *time <= t)
            .saturating_sub(1);
        &self.param_timeline[idx].1
    }

    /// Parameters the controller believes in at time t.
    fn params_ctrl_at(&self, t: f64) -> &[AreaParams] {
        if self.config.sim.controller_tracks_schedule {
            self.params_true_at(t)
        } else {
            &self.config.areas
        }
    }

    pub fn stiffness(&self) -> &DMatrix<f64> {
        &self.stiffness
    }

    pub fn incidence(&self) -> &IncidenceMatrices {
        &self.mats
    }

    /// Evaluate measurements, controller output and derivatives at (t, state).
    fn eval(
        &self,
        t: f64,
        plant_state: &PlantState,
        ctrl: &ControllerState,
    ) -> Result<Instant<'_>, SimError> {
        let sample = self.config.load.load_at(t);
        let params_true = self.params_true_at(t);
        let params_ctrl = self.params_ctrl_at(t);

        let deltas = graph::edge_angle_differences(&self.mats, &plant_state.alpha)?;
        let flows = graph::edge_flows(
            &self.mats,
            &self.config.topology.tie_lines,
            &plant_state.alpha,
            self.config.sim.plant_mode,
        )?;
        let phi = graph::net_area_power(&self.mats, &flows)?;

        let bounds =
            control::corrector_bounds_all(&plant_state.freq, &sample.controller, &phi, params_ctrl);
        let n = self.mats.n_areas;
        let mut applied = DVector::zeros(n);
        let mut infeasible = Vec::new();
        match self.config.sim.controller_mode {
            ControllerMode::FoCbf => {
                for i in 0..n {
                    let (value, infeas) =
                        control::corrector_apply(ctrl.reference[i], &bounds[i], &params_ctrl[i]);
                    applied[i] = value;
                    if infeas {
                        infeasible.push(i);
                    }
                }
            }
            ControllerMode::FoPlain => {
                for i in 0..n {
                    applied[i] = control::baseline_apply(ctrl.reference[i]);
                }
            }
        }

        let plant_der = plant::rhs_with_net_power(
            plant_state,
            &applied,
            &sample.plant,
            params_true,
            &self.mats,
            &phi,
        );
        let fo = control::fo_rhs(ctrl, &plant_state.freq, &sample.controller, params_ctrl);
        let reference_dot = projection::project_field(
            &fo.reference_dot_raw,
            &ctrl.reference,
            &self.cap_lo,
            &self.cap_hi,
        )?;

        Ok(Instant {
            load_view: sample.controller,
            params_true,
            deltas,
            flows,
            bounds,
            applied,
            infeasible,
            alpha_dot: plant_der.alpha_dot,
            freq_dot: plant_der.freq_dot,
            reference_dot,
            multiplier_dot: fo.multiplier_dot,
        })
    }

    /// Run the scenario to the end, producing records, metrics and the
    /// full-resolution frequency trace.
    pub fn run(&self) -> Result<SimOutput, SimError> {
        let sim = &self.config.sim;
        let n = self.mats.n_areas;
        let dt = sim.dt;
        let steps = (sim.t_end / dt).round().max(1.0) as usize;
        let decimate = sim.decimate.max(1);

        let mut plant_state = PlantState {
            alpha: DVector::from_vec(sim.initial.alpha.clone()),
            freq: DVector::from_vec(sim.initial.w.clone()),
        };
        let mut ctrl = ControllerState {
            reference: DVector::from_vec(sim.initial.reference.clone()),
            multiplier: DVector::from_vec(sim.initial.multiplier.clone()),
        };

        let mut trajectory = Trajectory {
            records: Vec::with_capacity(steps / decimate + 2),
            n_areas: n,
            n_edges: self.mats.n_edges,
            dt,
        };
        let mut freq_trace: Vec<f64> = Vec::with_capacity((steps + 1) * n);

        // The energy monitor only certifies dissipation on the linear plant
        // under piecewise-constant load the controller knows exactly.
        let lyapunov_active = sim.plant_mode == PlantMode::Linear
            && self.config.load.is_piecewise_constant()
            && self.config.load.prediction_error_factor == 1.0;

        let mut acc = Accumulators::new(n, &self.config.areas, sim.initial.w.as_slice());
        let mut lyap = LyapunovTracker::new(lyapunov_active);

        for k in 0..=steps {
            let t = k as f64 * dt;
            let inst = self.eval(t, &plant_state, &ctrl)?;

            let (v_now, v_rate) = lyap.observe(self, t, &plant_state, &ctrl, &inst);
            let monitors = self.monitors(&plant_state, &inst, v_now, v_rate);
            let cost = control::generation_cost(&inst.applied, &self.config.areas);

            freq_trace.extend_from_slice(plant_state.freq.as_slice());
            acc.observe(
                t,
                dt,
                k == steps,
                &plant_state,
                &inst,
                &monitors,
                &self.config.areas,
            );

            if k % decimate == 0 || k == steps {
                trajectory.records.push(TrajectoryRecord {
                    t,
                    plant: plant_state.clone(),
                    ctrl: ctrl.clone(),
                    applied: inst.applied.clone(),
                    load_view: inst.load_view.clone(),
                    flows: inst.flows.clone(),
                    bounds: inst.bounds.clone(),
                    monitors,
                    cost,
                });
            }

            if k == steps {
                acc.final_cost = cost;
                break;
            }

            match sim.scheme {
                Scheme::Euler => {
                    plant_state.alpha += dt * &inst.alpha_dot;
                    plant_state.freq += dt * &inst.freq_dot;
                    ctrl.reference += dt * &inst.reference_dot;
                    ctrl.reference =
                        projection::clamp_point(&ctrl.reference, &self.cap_lo, &self.cap_hi);
                    ctrl.multiplier += dt * &inst.multiplier_dot;
                }
                Scheme::Rk4 => {
                    self.rk4_advance(t, dt, &mut plant_state, &mut ctrl, &inst)?;
                }
            }

            if !(plant_state.is_finite() && ctrl.is_finite()) {
                return Err(SimError::NonFinite {
                    t: (k + 1) as f64 * dt,
                    trajectory: Box::new(trajectory),
                });
            }
        }

        let metrics = acc.finish(
            steps as f64 * dt,
            dt,
            &self.config,
            &plant_state,
            &ctrl,
            lyap.summary(),
        );

        Ok(SimOutput {
            trajectory,
            metrics,
            freq_trace,
            n_areas: n,
            dt,
            steps,
        })
    }

    /// Classic RK4 on the projected field. Stage states are clamped into
    /// the capacity box before evaluation (the projected field is only
    /// defined there) and the final state is clamped again. True parameters
    /// are frozen at the step start; loads are sampled at stage times.
    fn rk4_advance(
        &self,
        t: f64,
        dt: f64,
        plant_state: &mut PlantState,
        ctrl: &mut ControllerState,
        k1: &Instant,
    ) -> Result<(), SimError> {
        let stage = |base_plant: &PlantState,
                     base_ctrl: &ControllerState,
                     inst: &Instant,
                     h: f64|
         -> (PlantState, ControllerState) {
            let plant_s = PlantState {
                alpha: &base_plant.alpha + h * &inst.alpha_dot,
                freq: &base_plant.freq + h * &inst.freq_dot,
            };
            let ctrl_s = ControllerState {
                reference: projection::clamp_point(
                    &(&base_ctrl.reference + h * &inst.reference_dot),
                    &self.cap_lo,
                    &self.cap_hi,
                ),
                multiplier: &base_ctrl.multiplier + h * &inst.multiplier_dot,
            };
            (plant_s, ctrl_s)
        };

        let (p2, c2) = stage(plant_state, ctrl, k1, 0.5 * dt);
        let k2 = self.eval(t + 0.5 * dt, &p2, &c2)?;
        let (p3, c3) = stage(plant_state, ctrl, &k2, 0.5 * dt);
        let k3 = self.eval(t + 0.5 * dt, &p3, &c3)?;
        let (p4, c4) = stage(plant_state, ctrl, &k3, dt);
        let k4 = self.eval(t + dt, &p4, &c4)?;

        let sixth = dt / 6.0;
        plant_state.alpha += sixth
            * (&k1.alpha_dot + 2.0 * &k2.alpha_dot + 2.0 * &k3.alpha_dot + &k4.alpha_dot);
        plant_state.freq +=
            sixth * (&k1.freq_dot + 2.0 * &k2.freq_dot + 2.0 * &k3.freq_dot + &k4.freq_dot);
        ctrl.reference += sixth
            * (&k1.reference_dot
                + 2.0 * &k2.reference_dot
                + 2.0 * &k3.reference_dot
                + &k4.reference_dot);
        ctrl.reference = projection::clamp_point(&ctrl.reference, &self.cap_lo, &self.cap_hi);
        ctrl.multiplier += sixth
            * (&k1.multiplier_dot
                + 2.0 * &k2.multiplier_dot
                + 2.0 * &k3.multiplier_dot
                + &k4.multiplier_dot);
        Ok(())
    }

    fn monitors(
        &self,
        plant_state: &PlantState,
        inst: &Instant,
        lyapunov: f64,
        lyapunov_rate: f64,
    ) -> MonitorValues {
        let n = self.mats.n_areas;
        let areas = &self.config.areas;
        let mut safety_margin = Vec::with_capacity(n);
        let mut capacity_margin = Vec::with_capacity(n);
        let mut cbf_residual_lo = Vec::with_capacity(n);
        let mut cbf_residual_hi = Vec::with_capacity(n);
        let mut monotone_ok = Vec::with_capacity(n);
        for i in 0..n {
            let w = plant_state.freq[i];
            let margin = (w - areas[i].freq_lo).min(areas[i].freq_hi - w);
            safety_margin.push(margin);
            capacity_margin
                .push((inst.applied[i] - areas[i].cap_lo).min(areas[i].cap_hi - inst.applied[i]));
            cbf_residual_lo.push(inst.bounds[i].raw_lo - inst.applied[i]);
            cbf_residual_hi.push(inst.applied[i] - inst.bounds[i].raw_hi);
            let ok = if margin >= 0.0 {
                true
            } else if w < areas[i].freq_lo {
                inst.freq_dot[i] >= 0.0
            } else {
                inst.freq_dot[i] <= 0.0
            };
            monotone_ok.push(ok);
        }
        MonitorValues {
            safety_margin,
            capacity_margin,
            cbf_residual_lo,
            cbf_residual_hi,
            monotone_ok,
            infeasible_areas: inst.infeasible.clone(),
            lyapunov,
            lyapunov_rate,
            freq_dot: inst.freq_dot.clone(),
        }
    }
}

/// Per-step metric accumulators (full resolution, independent of record
/// decimation).
struct Accumulators {
    nadir_hz: Vec<f64>,
    zenith_hz: Vec<f64>,
    min_safety_margin_hz: Vec<f64>,
    min_capacity_margin: f64,
    violation_count: u64,
    violation_integral_hz_s: f64,
    monotone_violation_count: u64,
    infeasible_event_count: u64,
    max_rocof_hz_s: f64,
    max_edge_angle_rad: f64,
    started_outside: Vec<bool>,
    entry_time_s: Vec<Option<f64>>,
    last_outside_settle_band: Option<f64>,
    final_cost: f64,
}

impl Accumulators {
    fn new(n: usize, areas: &[AreaParams], w0: &[f64]) -> Self {
        let started_outside = (0..n)
            .map(|i| w0[i] < areas[i].freq_lo || w0[i] > areas[i].freq_hi)
            .collect();
        Accumulators {
            nadir_hz: vec![f64::INFINITY; n],
            zenith_hz: vec![f64::NEG_INFINITY; n],
            min_safety_margin_hz: vec![f64::INFINITY; n],
            min_capacity_margin: f64::INFINITY,
            violation_count: 0,
            violation_integral_hz_s: 0.0,
            monotone_violation_count: 0,
            infeasible_event_count: 0,
            max_rocof_hz_s: 0.0,
            max_edge_angle_rad: 0.0,
            started_outside,
            entry_time_s: vec![None; n],
            last_outside_settle_band: None,
            final_cost: 0.0,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn observe(
        &mut self,
        t: f64,
        dt: f64,
        is_final: bool,
        plant_state: &PlantState,
        inst: &Instant,
        monitors: &MonitorValues,
        areas: &[AreaParams],
    ) {
        let n = areas.len();
        let mut any_violation = false;
        let mut any_outside_settle = false;
        for i in 0..n {
            let w = plant_state.freq[i];
            let hz = NOMINAL_HZ + NOMINAL_HZ * w;
            if hz < self.nadir_hz[i] {
                self.nadir_hz[i] = hz;
            }
            if hz > self.zenith_hz[i] {
                self.zenith_hz[i] = hz;
            }
            let margin_hz = NOMINAL_HZ * monitors.safety_margin[i];
            if margin_hz < self.min_safety_margin_hz[i] {
                self.min_safety_margin_hz[i] = margin_hz;
            }
            if monitors.capacity_margin[i] < self.min_capacity_margin {
                self.min_capacity_margin = monitors.capacity_margin[i];
            }
            if monitors.safety_margin[i] < 0.0 {
                any_violation = true;
                if !is_final {
                    self.violation_integral_hz_s +=
                        NOMINAL_HZ * (-monitors.safety_margin[i]) * dt;
                }
                if !monitors.monotone_ok[i] {
                    self.monotone_violation_count += 1;
                }
            } else if self.started_outside[i] && self.entry_time_s[i].is_none() {
                self.entry_time_s[i] = Some(t);
            }
            let rocof = NOMINAL_HZ * monitors.freq_dot[i].abs();
            if rocof > self.max_rocof_hz_s {
                self.max_rocof_hz_s = rocof;
            }
            if (NOMINAL_HZ * w).abs() > SETTLING_BAND_HZ {
                any_outside_settle = true;
            }
        }
        if any_violation {
            self.violation_count += 1;
        }
        if any_outside_settle {
            self.last_outside_settle_band = Some(t);
        }
        self.infeasible_event_count += inst.infeasible.len() as u64;
        for e in 0..inst.deltas.len() {
            let mag = inst.deltas[e].abs();
            if mag > self.max_edge_angle_rad {
                self.max_edge_angle_rad = mag;
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        self,
        t_end: f64,
        dt: f64,
        config: &ScenarioConfig,
        plant_state: &PlantState,
        ctrl: &ControllerState,
        lyapunov: LyapunovSummary,
    ) -> Metrics {
        let settled = match self.last_outside_settle_band {
            None => Some(0.0),
            Some(last) if last < t_end => Some(last + dt),
            Some(_) => None,
        };
        let entries: Vec<Option<f64>> = self
            .started_outside
            .iter()
            .zip(self.entry_time_s.iter())
            .filter_map(|(started, entry)| started.then_some(*entry))
            .collect();
        let safe_entry = if entries.is_empty() {
            None
        } else if entries.iter().all(|e| e.is_some()) {
            entries.iter().map(|e| e.unwrap()).fold(None, |acc: Option<f64>, t| {
                Some(acc.map_or(t, |a| a.max(t)))
            })
        } else {
            None
        };

        let final_load = config.load.load_at(t_end).plant;
        let steady_residual = oracle::solve_steady_qp(&final_load, &config.areas)
            .ok()
            .map(|sol| {
                let d_alpha = plant_state.alpha.norm_squared();
                let d_freq = plant_state.freq.norm_squared();
                let d_ref = (&ctrl.reference - &sol.dispatch).norm_squared();
                let d_mult = (&ctrl.multiplier - &sol.multiplier).norm_squared();
                (d_alpha + d_freq + d_ref + d_mult).sqrt()
            });

        Metrics {
            nadir_hz: self.nadir_hz,
            zenith_hz: self.zenith_hz,
            settling_time_s: settled,
            safe_entry_time_s: safe_entry,
            entry_time_s: self.entry_time_s,
            violation_count: self.violation_count,
            violation_integral_hz_s: self.violation_integral_hz_s,
            max_rocof_hz_s: self.max_rocof_hz_s,
            final_cost: self.final_cost,
            steady_residual,
            min_safety_margin_hz: self.min_safety_margin_hz,
            min_capacity_margin: self.min_capacity_margin,
            monotone_violation_count: self.monotone_violation_count,
            infeasible_event_count: self.infeasible_event_count,
            max_edge_angle_rad: self.max_edge_angle_rad,
            lyapunov,
        }
    }
}

/// Tracks the energy function across constant-load segments.
struct LyapunovTracker {
    active: bool,
    segment: Vec<usize>,
    equilibrium: Option<Equilibrium>,
    prev_value: f64,
    prev_valid: bool,
    summary: LyapunovSummary,
}

impl LyapunovTracker {
    fn new(active: bool) -> Self {
        LyapunovTracker {
            active,
            segment: Vec::new(),
            equilibrium: None,
            prev_value: f64::NAN,
            prev_valid: false,
            summary: LyapunovSummary {
                active,
                ..LyapunovSummary::default()
            },
        }
    }

    /// Returns (value, backward rate) for this instant, NaN when inactive.
    fn observe(
        &mut self,
        simulator: &Simulator,
        t: f64,
        plant_state: &PlantState,
        ctrl: &ControllerState,
        inst: &Instant,
    ) -> (f64, f64) {
        if !self.active {
            return (f64::NAN, f64::NAN);
        }
        let segment = simulator.config.load.segment_at(t);
        let segment_changed = segment != self.segment || self.equilibrium.is_none();
        if segment_changed {
            self.segment = segment;
            let load = simulator.config.load.load_at(t).plant;
            self.equilibrium =
                oracle::equilibrium(&load, &simulator.config.areas, &simulator.mats).ok();
            self.prev_valid = false;
        }
        let Some(eq) = &self.equilibrium else {
            return (f64::NAN, f64::NAN);
        };
        let value = lyapunov(plant_state, ctrl, eq, inst.params_true, &simulator.stiffness);
        let rate = if self.prev_valid {
            (value - self.prev_value) / simulator.config.sim.dt
        } else {
            f64::NAN
        };
        if segment_changed {
            self.summary.last_segment_start_value = value;
            self.summary.last_segment_start_time = t;
        }
        if rate.is_finite() && !(rate <= self.summary.max_rate) {
            self.summary.max_rate = rate;
        }
        self.summary.final_value = value;
        self.prev_value = value;
        self.prev_valid = true;
        (value, rate)
    }

    fn summary(self) -> LyapunovSummary {
        self.summary
    }
}

/// Invariant suite over a finished run: capacity everywhere, safety (with
/// entry semantics for areas that started outside), barrier residuals under
/// the corrector, and monotone approach while out of band. Returns an empty
/// list when everything holds.
pub fn check_invariants(output: &SimOutput, config: &ScenarioConfig) -> Vec<String> {
    let mut failures = Vec::new();
    let n = output.n_areas;
    let slack_pu = CHECK_SAFETY_SLACK_PU;
    let corrector_on = config.sim.controller_mode == ControllerMode::FoCbf;

    if output.metrics.min_capacity_margin < 0.0 {
        failures.push(format!(
            "capacity violated: worst margin {} p.u.",
            output.metrics.min_capacity_margin
        ));
    }

    let started_outside: Vec<bool> = (0..n)
        .map(|i| {
            let w0 = output.freq_at(0, i);
            w0 < config.areas[i].freq_lo || w0 > config.areas[i].freq_hi
        })
        .collect();

    for i in 0..n {
        if started_outside[i] {
            match output.metrics.entry_time_s.get(i).copied().flatten() {
                None => failures.push(format!("area {i}: never entered the safe band")),
                Some(entry) => {
                    // After entry the band must hold (up to the slack).
                    for rec in &output.trajectory.records {
                        if rec.t >= entry && rec.monitors.safety_margin[i] < -slack_pu {
                            failures.push(format!(
                                "area {i}: left the safe band at t = {} s after entering",
                                rec.t
                            ));
                            break;
                        }
                    }
                }
            }
        } else if output.metrics.min_safety_margin_hz[i] < -CHECK_SAFETY_SLACK_PU * NOMINAL_HZ {
            failures.push(format!(
                "area {i}: safe band violated (worst margin {} Hz)",
                output.metrics.min_safety_margin_hz[i]
            ));
        }
    }

    if corrector_on {
        if output.metrics.monotone_violation_count > 0 {
            failures.push(format!(
                "{} out-of-band instants drifted away from the band",
                output.metrics.monotone_violation_count
            ));
        }
        for rec in &output.trajectory.records {
            for i in 0..n {
                if rec.bounds[i].feasible
                    && (rec.monitors.cbf_residual_lo[i] > CHECK_CBF_RESIDUAL_TOL
                        || rec.monitors.cbf_residual_hi[i] > CHECK_CBF_RESIDUAL_TOL)
                {
                    failures.push(format!(
                        "area {i}: barrier residual positive at t = {} s",
                        rec.t
                    ));
                }
            }
        }
    }

    failures
}
