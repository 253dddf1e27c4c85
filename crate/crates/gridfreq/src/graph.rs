//! Tie-line graph machinery: incidence matrices and network flows.
//!
//! Areas are nodes, tie lines are edges oriented tail -> head by their
//! listed endpoint order. Angles live in reduced coordinates: the last
//! area is the reference and `alpha` stacks the first N-1 angle
//! differences against it.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::model::{PlantMode, TieLineParams, Topology};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("tie lines do not form a connected graph over {n_areas} areas")]
    Disconnected { n_areas: usize },
    #[error("tie line {edge} has endpoint out of range for {n_areas} areas")]
    EndpointOutOfRange { edge: usize, n_areas: usize },
    #[error("dimension mismatch: expected {expected} {what}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
}

/// Signed incidence structure of the tie-line graph.
#[derive(Debug, Clone)]
pub struct IncidenceMatrices {
    /// Full incidence F (N x M): +1 at the tail of an edge, -1 at the head.
    pub full: DMatrix<f64>,
    /// Reduced incidence (N-1 x M): F with the last (reference) row dropped.
    pub reduced: DMatrix<f64>,
    /// Angle-difference map T = [I, -1] (N-1 x N): alpha_dot = T w.
    pub diff_map: DMatrix<f64>,
    pub n_areas: usize,
    pub n_edges: usize,
}

/// Build incidence matrices for a topology, checking connectivity and
/// endpoint validity.
pub fn build(topology: &Topology) -> Result<IncidenceMatrices, GraphError> {
    let n = topology.n_areas;
    let m = topology.tie_lines.len();
    for (e, line) in topology.tie_lines.iter().enumerate() {
        if line.i >= n || line.j >= n {
            return Err(GraphError::EndpointOutOfRange { edge: e, n_areas: n });
        }
    }
    if !connected(n, &topology.tie_lines) {
        return Err(GraphError::Disconnected { n_areas: n });
    }

    let mut full = DMatrix::zeros(n, m);
    for (e, line) in topology.tie_lines.iter().enumerate() {
        full[(line.i, e)] = 1.0;
        full[(line.j, e)] = -1.0;
    }
    let reduced = full.rows(0, n.saturating_sub(1)).into_owned();

    let n_red = n.saturating_sub(1);
    let mut diff_map = DMatrix::zeros(n_red, n);
    for r in 0..n_red {
        diff_map[(r, r)] = 1.0;
        if n >= 1 {
            diff_map[(r, n - 1)] = -1.0;
        }
    }

    Ok(IncidenceMatrices {
        full,
        reduced,
        diff_map,
        n_areas: n,
        n_edges: m,
    })
}

fn connected(n: usize, lines: &[TieLineParams]) -> bool {
    if n <= 1 {
        return true;
    }
    let mut adj = vec![Vec::new(); n];
    for l in lines {
        adj[l.i].push(l.j);
        adj[l.j].push(l.i);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    count == n
}

/// Angle difference across every edge: delta = reduced_incidence^T * alpha.
pub fn edge_angle_differences(
    mats: &IncidenceMatrices,
    alpha: &DVector<f64>,
) -> Result<DVector<f64>, GraphError> {
    if alpha.len() != mats.n_areas.saturating_sub(1) {
        return Err(GraphError::DimensionMismatch {
            what: "reduced angles",
            expected: mats.n_areas.saturating_sub(1),
            found: alpha.len(),
        });
    }
    Ok(mats.reduced.transpose() * alpha)
}

/// Per-edge tie-line power flows, signed tail -> head.
///
/// Linear coupling uses `b_linear * delta`; the sine coupling uses
/// `b_nonlinear * sin(delta)`.
pub fn edge_flows(
    mats: &IncidenceMatrices,
    lines: &[TieLineParams],
    alpha: &DVector<f64>,
    mode: PlantMode,
) -> Result<DVector<f64>, GraphError> {
    if lines.len() != mats.n_edges {
        return Err(GraphError::DimensionMismatch {
            what: "tie lines",
            expected: mats.n_edges,
            found: lines.len(),
        });
    }
    let delta = edge_angle_differences(mats, alpha)?;
    let flows = DVector::from_iterator(
        lines.len(),
        lines.iter().zip(delta.iter()).map(|(l, d)| match mode {
            PlantMode::Linear => l.b_linear * d,
            PlantMode::Nonlinear => l.b_nonlinear * d.sin(),
        }),
    );
    Ok(flows)
}

/// Net tie-line power leaving each area: the signed per-area sum of edge
/// flows (equivalently `F * flows`). This is what each area can measure
/// locally by summing its own tie-line meters.
pub fn net_area_power(
    mats: &IncidenceMatrices,
    flows: &DVector<f64>,
) -> Result<DVector<f64>, GraphError> {
    if flows.len() != mats.n_edges {
        return Err(GraphError::DimensionMismatch {
            what: "edge flows",
            expected: mats.n_edges,
            found: flows.len(),
        });
    }
    Ok(&mats.full * flows)
}

/// Net tie-line power per area under the linear coupling, i.e. the
/// composition full * diag(b_linear) * reduced^T applied to alpha.
pub fn net_tieline_power_linear(
    mats: &IncidenceMatrices,
    lines: &[TieLineParams],
    alpha: &DVector<f64>,
) -> Result<DVector<f64>, GraphError> {
    let flows = edge_flows(mats, lines, alpha, PlantMode::Linear)?;
    net_area_power(mats, &flows)
}

/// Linear coupling matrix full * diag(b_linear) * reduced^T (N x N-1),
/// precomputed once per run for the plant right-hand side.
pub fn coupling_matrix(mats: &IncidenceMatrices, lines: &[TieLineParams]) -> DMatrix<f64> {
    let mut weighted = mats.full.clone();
    for (e, line) in lines.iter().enumerate() {
        for r in 0..mats.n_areas {
            weighted[(r, e)] *= line.b_linear;
        }
    }
    weighted * mats.reduced.transpose()
}

/// Reduced stiffness reduced * diag(b_linear) * reduced^T (N-1 x N-1);
/// symmetric positive definite on connected graphs. Used by the energy
/// function.
pub fn reduced_stiffness(mats: &IncidenceMatrices, lines: &[TieLineParams]) -> DMatrix<f64> {
    let n_red = mats.n_areas.saturating_sub(1);
    let mut weighted = mats.reduced.clone();
    for (e, line) in lines.iter().enumerate() {
        for r in 0..n_red {
            weighted[(r, e)] *= line.b_linear;
        }
    }
    weighted * mats.reduced.transpose()
}
