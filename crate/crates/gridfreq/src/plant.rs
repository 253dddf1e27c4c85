//! Multi-area swing dynamics.
//!
//! Each area carries aggregate inertia and load damping; areas exchange
//! power over tie lines. States are deviations from the pre-disturbance
//! operating point: reduced angles `alpha` (against the last area) and
//! per-area frequency deviations `freq`.

use nalgebra::DVector;
use thiserror::Error;

use crate::graph::{self, GraphError, IncidenceMatrices};
use crate::model::{AreaParams, PlantMode, TieLineParams};

#[derive(Debug, Error)]
pub enum PlantError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("dimension mismatch: expected {expected} {what}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
}

/// Plant state: reduced angles and frequency deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    /// Reduced inter-area angles (length N-1, rad).
    pub alpha: DVector<f64>,
    /// Frequency deviations (length N, p.u.).
    pub freq: DVector<f64>,
}

impl PlantState {
    pub fn zeros(n_areas: usize) -> Self {
        PlantState {
            alpha: DVector::zeros(n_areas.saturating_sub(1)),
            freq: DVector::zeros(n_areas),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.alpha.iter().all(|x| x.is_finite()) && self.freq.iter().all(|x| x.is_finite())
    }
}

/// Time derivative of the plant state.
#[derive(Debug, Clone)]
pub struct PlantDerivative {
    pub alpha_dot: DVector<f64>,
    pub freq_dot: DVector<f64>,
}

fn check_lengths(
    state: &PlantState,
    applied: &DVector<f64>,
    load: &DVector<f64>,
    params: &[AreaParams],
    mats: &IncidenceMatrices,
) -> Result<(), PlantError> {
    let n = mats.n_areas;
    if state.freq.len() != n {
        return Err(PlantError::DimensionMismatch {
            what: "frequency deviations",
            expected: n,
            found: state.freq.len(),
        });
    }
    if state.alpha.len() != n.saturating_sub(1) {
        return Err(PlantError::DimensionMismatch {
            what: "reduced angles",
            expected: n.saturating_sub(1),
            found: state.alpha.len(),
        });
    }
    if applied.len() != n {
        return Err(PlantError::DimensionMismatch {
            what: "applied generation",
            expected: n,
            found: applied.len(),
        });
    }
    if load.len() != n {
        return Err(PlantError::DimensionMismatch {
            what: "net loads",
            expected: n,
            found: load.len(),
        });
    }
    if params.len() != n {
        return Err(PlantError::DimensionMismatch {
            what: "area parameter sets",
            expected: n,
            found: params.len(),
        });
    }
    Ok(())
}

/// Swing-equation right-hand side with the chosen tie-line coupling:
///
/// * `alpha_dot = freq_i - freq_N` (reduced angle kinematics),
/// * `inertia_i * freq_dot_i = -damping_i * freq_i + applied_i - load_i - phi_i`,
///
/// where `phi` is the net tie-line power leaving each area (linear or sine
/// coupling per `mode`).
pub fn rhs(
    state: &PlantState,
    applied: &DVector<f64>,
    load: &DVector<f64>,
    params: &[AreaParams],
    mats: &IncidenceMatrices,
    lines: &[TieLineParams],
    mode: PlantMode,
) -> Result<PlantDerivative, PlantError> {
    check_lengths(state, applied, load, params, mats)?;
    let flows = graph::edge_flows(mats, lines, &state.alpha, mode)?;
    let phi = graph::net_area_power(mats, &flows)?;
    Ok(rhs_with_net_power(state, applied, load, params, mats, &phi))
}

/// Same as [`rhs`] but with the net tie-line powers already computed
/// (the simulator reuses the measured flows for both plant and monitors).
pub fn rhs_with_net_power(
    state: &PlantState,
    applied: &DVector<f64>,
    load: &DVector<f64>,
    params: &[AreaParams],
    mats: &IncidenceMatrices,
    phi: &DVector<f64>,
) -> PlantDerivative {
    let n = mats.n_areas;
    let alpha_dot = &mats.diff_map * &state.freq;
    let freq_dot = DVector::from_iterator(
        n,
        (0..n).map(|i| {
            (-params[i].damping * state.freq[i] + applied[i] - load[i] - phi[i])
                / params[i].inertia
        }),
    );
    PlantDerivative {
        alpha_dot,
        freq_dot,
    }
}
