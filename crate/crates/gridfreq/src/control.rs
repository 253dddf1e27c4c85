//! Two-layer frequency controller.
//!
//! Layer one (`fo_rhs`) is a projected-gradient flow that steers the
//! generation reference toward the cheapest dispatch balancing the
//! (predicted) net load, using only local measurements per area. Layer two
//! (`corrector_bounds` / `corrector_apply`) clamps the applied generation
//! into a per-area interval that keeps the frequency inside its safe band
//! and inside capacity; the interval comes from barrier conditions on both
//! band edges and the clamp is the exact minimizer of the distance to the
//! reference over that interval.
//!
//! Everything is decentralized: area `i` uses its own frequency, its own
//! (error-scaled) load, and the measured net power on its own tie lines.

use nalgebra::DVector;

use crate::model::AreaParams;
use crate::projection;

/// Controller state: generation references and dispatch multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    /// Generation reference deviations (p.u.), kept inside the capacity box.
    pub reference: DVector<f64>,
    /// Multiplier estimates for the per-area balance constraints.
    pub multiplier: DVector<f64>,
}

impl ControllerState {
    pub fn zeros(n_areas: usize) -> Self {
        ControllerState {
            reference: DVector::zeros(n_areas),
            multiplier: DVector::zeros(n_areas),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.reference.iter().all(|x| x.is_finite())
            && self.multiplier.iter().all(|x| x.is_finite())
    }
}

/// Raw (unprojected) right-hand side of the reference-generator flow.
#[derive(Debug, Clone)]
pub struct FoDerivative {
    /// Gradient field on the references, before box projection.
    pub reference_dot_raw: DVector<f64>,
    /// Multiplier dynamics (balance residual).
    pub multiplier_dot: DVector<f64>,
}

/// Reference-generator dynamics: per area,
///
/// * reference_dot = -cost_quad * ref - cost_lin - multiplier - freq
///   (projected onto the capacity box by the caller),
/// * multiplier_dot = ref - load.
///
/// `load` is the controller's view of the net load.
pub fn fo_rhs(
    ctrl: &ControllerState,
    freq: &DVector<f64>,
    load: &DVector<f64>,
    params: &[AreaParams],
) -> FoDerivative {
    let n = params.len();
    let reference_dot_raw = DVector::from_iterator(
        n,
        (0..n).map(|i| {
            -params[i].cost_quad * ctrl.reference[i]
                - params[i].cost_lin
                - ctrl.multiplier[i]
                - freq[i]
        }),
    );
    let multiplier_dot = &ctrl.reference - load;
    FoDerivative {
        reference_dot_raw,
        multiplier_dot,
    }
}

/// Capacity box of the references as a pair of vectors.
pub fn capacity_box(params: &[AreaParams]) -> (DVector<f64>, DVector<f64>) {
    let lo = DVector::from_iterator(params.len(), params.iter().map(|p| p.cap_lo));
    let hi = DVector::from_iterator(params.len(), params.iter().map(|p| p.cap_hi));
    (lo, hi)
}

/// Safety interval of one area at one instant.
#[derive(Debug, Clone, Copy)]
pub struct CorrectorBounds {
    /// Barrier lower bound before capacity intersection.
    pub raw_lo: f64,
    /// Barrier upper bound before capacity intersection.
    pub raw_hi: f64,
    /// Effective lower bound: max(cap_lo, raw_lo).
    pub lo: f64,
    /// Effective upper bound: min(cap_hi, raw_hi).
    pub hi: f64,
    /// Whether the effective interval is nonempty.
    pub feasible: bool,
}

/// Barrier bounds for one area. The lower bound is the generation below
/// which the frequency could fall out of the band faster than the barrier
/// rate allows; symmetric for the upper bound:
///
/// * raw_lo = damping * freq + load + phi + cbf_gain * inertia * (freq_lo - freq)
/// * raw_hi = damping * freq + load + phi - cbf_gain * inertia * (freq - freq_hi)
///
/// `phi` is the measured net tie-line power leaving the area, `load` the
/// controller's view of the area's net load, and inertia/damping the
/// controller's model of the plant (nominal unless it tracks the schedule).
pub fn corrector_bounds(freq: f64, load: f64, phi: f64, params: &AreaParams) -> CorrectorBounds {
    let common = params.damping * freq + load + phi;
    let raw_lo = common + params.cbf_gain * params.inertia * (params.freq_lo - freq);
    let raw_hi = common - params.cbf_gain * params.inertia * (freq - params.freq_hi);
    let lo = params.cap_lo.max(raw_lo);
    let hi = params.cap_hi.min(raw_hi);
    CorrectorBounds {
        raw_lo,
        raw_hi,
        lo,
        hi,
        feasible: lo <= hi,
    }
}

/// Bounds for all areas at once.
pub fn corrector_bounds_all(
    freq: &DVector<f64>,
    load: &DVector<f64>,
    phi: &DVector<f64>,
    params: &[AreaParams],
) -> Vec<CorrectorBounds> {
    (0..params.len())
        .map(|i| corrector_bounds(freq[i], load[i], phi[i], &params[i]))
        .collect()
}

/// Apply the safety corrector to one reference value: the applied power is
/// the point of `[lo, hi]` nearest the reference,
///
/// `applied = min(max(reference, lo), hi)`,
///
/// which is the unique minimizer of (p - reference)^2 over the interval.
/// When the interval is empty the corrector falls back to the midpoint of
/// the raw barrier bounds clamped into capacity, and reports the
/// infeasibility so the caller can log it; capacity is never violated.
pub fn corrector_apply(reference: f64, bounds: &CorrectorBounds, params: &AreaParams) -> (f64, bool) {
    if bounds.feasible {
        (reference.max(bounds.lo).min(bounds.hi), false)
    } else {
        let midpoint = 0.5 * (bounds.raw_lo + bounds.raw_hi);
        (midpoint.clamp(params.cap_lo, params.cap_hi), true)
    }
}

/// Baseline without the safety layer: the reference is applied as-is.
pub fn baseline_apply(reference: f64) -> f64 {
    reference
}

/// Per-area sensitivity constants of the corrected output with respect to
/// (reference, own frequency, angle vector):
///
/// `L_i = max(1, |damping - cbf_gain * inertia|, ||row_i of the linear
/// coupling matrix||)`.
///
/// The corrected applied power is Lipschitz with these constants, which is
/// what makes the closed loop well posed despite the clamping.
pub fn lipschitz_constants(
    params: &[AreaParams],
    coupling: &nalgebra::DMatrix<f64>,
) -> Vec<f64> {
    (0..params.len())
        .map(|i| {
            let gain = (params[i].damping - params[i].cbf_gain * params[i].inertia).abs();
            let row_norm = coupling.row(i).norm();
            1.0f64.max(gain).max(row_norm)
        })
        .collect()
}

/// Instantaneous generation cost sum over areas: 0.5 * a * p^2 + b * p.
pub fn generation_cost(applied: &DVector<f64>, params: &[AreaParams]) -> f64 {
    (0..params.len())
        .map(|i| 0.5 * params[i].cost_quad * applied[i] * applied[i] + params[i].cost_lin * applied[i])
        .sum()
}

/// Project the raw reference field onto the capacity box at the current
/// reference point (thin wrapper so callers keep one import).
pub fn project_reference_field(
    raw: &DVector<f64>,
    reference: &DVector<f64>,
    params: &[AreaParams],
) -> Result<DVector<f64>, projection::ProjectionError> {
    let (lo, hi) = capacity_box(params);
    projection::project_field(raw, reference, &lo, &hi)
}
