//! Independent reference solutions used to cross-check the controller and
//! simulator: the steady-state dispatch problem in closed form, the
//! closed-loop equilibrium, and a grid-search solution of the corrector's
//! one-dimensional projection problem that deliberately avoids the
//! min/max composition used by the production code.

use nalgebra::DVector;
use thiserror::Error;

use crate::control::ControllerState;
use crate::graph::IncidenceMatrices;
use crate::model::AreaParams;
use crate::plant::PlantState;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("steady-state dispatch infeasible: load outside capacity for areas {areas:?}")]
    Infeasible { areas: Vec<usize> },
    #[error("dimension mismatch: {what} has length {found}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
}

/// Optimal steady-state dispatch plus certificates.
#[derive(Debug, Clone)]
pub struct SteadyState {
    /// Optimal generation deviations (equal to the loads).
    pub dispatch: DVector<f64>,
    /// Optimal multipliers: -cost_quad * load - cost_lin.
    pub multiplier: DVector<f64>,
    /// Optimal cost sum 0.5 * a * d^2 + b * d.
    pub cost: f64,
    /// Areas whose load sits exactly on a capacity bound. The dispatch is
    /// still unique there, but the multiplier loses its usual uniqueness
    /// margin, so downstream convergence checks should avoid such loads.
    pub boundary: Vec<usize>,
}

/// Solve the steady-state dispatch problem
///
///   minimize sum_i 0.5 * a_i * p_i^2 + b_i * p_i
///   subject to p_i = load_i, cap_lo_i <= p_i <= cap_hi_i.
///
/// The per-area balance pins p to the load, so feasibility is exactly
/// `load_i` within capacity, and the stationarity condition yields the
/// multipliers in closed form.
pub fn solve_steady_qp(
    load: &DVector<f64>,
    params: &[AreaParams],
) -> Result<SteadyState, OracleError> {
    if load.len() != params.len() {
        return Err(OracleError::DimensionMismatch {
            what: "load",
            expected: params.len(),
            found: load.len(),
        });
    }
    let mut infeasible = Vec::new();
    let mut boundary = Vec::new();
    for i in 0..params.len() {
        if load[i] < params[i].cap_lo || load[i] > params[i].cap_hi {
            infeasible.push(i);
        } else if load[i] == params[i].cap_lo || load[i] == params[i].cap_hi {
            boundary.push(i);
        }
    }
    if !infeasible.is_empty() {
        return Err(OracleError::Infeasible { areas: infeasible });
    }
    let dispatch = load.clone();
    let multiplier = DVector::from_iterator(
        params.len(),
        (0..params.len()).map(|i| -params[i].cost_quad * load[i] - params[i].cost_lin),
    );
    let cost = (0..params.len())
        .map(|i| 0.5 * params[i].cost_quad * load[i] * load[i] + params[i].cost_lin * load[i])
        .sum();
    Ok(SteadyState {
        dispatch,
        multiplier,
        cost,
        boundary,
    })
}

/// Closed-loop equilibrium for a constant load.
#[derive(Debug, Clone)]
pub struct Equilibrium {
    pub plant: PlantState,
    pub ctrl: ControllerState,
    pub steady: SteadyState,
}

/// The closed loop is at rest exactly when the frequency deviations are
/// zero, the references equal the optimal dispatch, the multipliers take
/// their optimal values, and the reduced angles solve the zero-flow
/// balance — which pins them to zero in deviation coordinates.
pub fn equilibrium(
    load: &DVector<f64>,
    params: &[AreaParams],
    mats: &IncidenceMatrices,
) -> Result<Equilibrium, OracleError> {
    if load.len() != mats.n_areas {
        return Err(OracleError::DimensionMismatch {
            what: "load",
            expected: mats.n_areas,
            found: load.len(),
        });
    }
    let steady = solve_steady_qp(load, params)?;
    let plant = PlantState {
        alpha: DVector::zeros(mats.n_areas.saturating_sub(1)),
        freq: DVector::zeros(mats.n_areas),
    };
    let ctrl = ControllerState {
        reference: steady.dispatch.clone(),
        multiplier: steady.multiplier.clone(),
    };
    Ok(Equilibrium { plant, ctrl, steady })
}

/// Brute-force minimizer of (p - reference)^2 over [lo, hi] by grid search
/// at the requested resolution, finished with an explicit comparison of the
/// interval endpoints. Intentionally structured as enumeration + argmin so
/// it shares nothing with the production clamp.
///
/// The interval is swept coarsely first when it is much wider than the
/// resolution; the winning cell is then re-swept at exactly `resolution`
/// spacing, so the returned point is within one resolution of the true
/// minimizer without quadratic blowup on wide intervals.
pub fn corrector_qp_bruteforce(reference: f64, lo: f64, hi: f64, resolution: f64) -> f64 {
    assert!(lo <= hi, "brute-force QP needs a nonempty interval");
    assert!(resolution > 0.0, "resolution must be positive");

    let objective = |p: f64| (p - reference) * (p - reference);

    let sweep = |from: f64, to: f64, step: f64| -> f64 {
        let mut best_p = from;
        let mut best_val = objective(from);
        let count = ((to - from) / step).ceil() as usize;
        for k in 1..=count {
            let p = (from + step * k as f64).min(to);
            let val = objective(p);
            if val < best_val {
                best_val = val;
                best_p = p;
            }
        }
        best_p
    };

    const MAX_CELLS: f64 = 20_000.0;
    let width = hi - lo;
    let mut best = if width <= resolution * MAX_CELLS {
        sweep(lo, hi, resolution)
    } else {
        let coarse_step = width / MAX_CELLS;
        let coarse_best = sweep(lo, hi, coarse_step);
        let fine_lo = (coarse_best - coarse_step).max(lo);
        let fine_hi = (coarse_best + coarse_step).min(hi);
        sweep(fine_lo, fine_hi, resolution)
    };

    // Endpoint refinement: the exact ends always compete.
    for p in [lo, hi] {
        if objective(p) < objective(best) {
            best = p;
        }
    }
    best
}

/// Default grid resolution for the brute-force corrector solution (p.u.).
pub const BRUTEFORCE_RESOLUTION: f64 = 1e-6;
