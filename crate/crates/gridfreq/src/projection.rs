//! Component-wise projection of a vector field onto a box.
//!
//! The projected field keeps the flow of an ODE inside box constraints:
//! at an active bound, any outward component of the field is zeroed, and
//! nothing else changes. Boundary activity is detected by exact equality,
//! which is sound here because states only reach a bound by being clamped
//! to it.

use nalgebra::DVector;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProjectionError {
    #[error("dimension mismatch: x has {x}, field has {f}, lo has {lo}, hi has {hi}")]
    DimensionMismatch {
        x: usize,
        f: usize,
        lo: usize,
        hi: usize,
    },
    #[error("point lies outside the box at component {index} (x = {value}, box = [{lo}, {hi}])")]
    OutsideBox {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
}

fn check_dims(
    x: &DVector<f64>,
    field: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> Result<(), ProjectionError> {
    if x.len() != field.len() || x.len() != lo.len() || x.len() != hi.len() {
        return Err(ProjectionError::DimensionMismatch {
            x: x.len(),
            f: field.len(),
            lo: lo.len(),
            hi: hi.len(),
        });
    }
    Ok(())
}

fn check_inside(
    x: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> Result<(), ProjectionError> {
    for i in 0..x.len() {
        if x[i] < lo[i] || x[i] > hi[i] {
            return Err(ProjectionError::OutsideBox {
                index: i,
                value: x[i],
                lo: lo[i],
                hi: hi[i],
            });
        }
    }
    Ok(())
}

/// Project a field component-wise at a point inside the box: zero the
/// component where the point sits at its lower bound and the field points
/// down, or at its upper bound and the field points up; pass it through
/// unchanged otherwise.
pub fn project_field(
    field: &DVector<f64>,
    x: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> Result<DVector<f64>, ProjectionError> {
    check_dims(x, field, lo, hi)?;
    check_inside(x, lo, hi)?;
    let mut out = field.clone();
    for i in 0..x.len() {
        let at_lo = x[i] == lo[i];
        let at_hi = x[i] == hi[i];
        if (at_lo && field[i] <= 0.0) || (at_hi && field[i] >= 0.0) {
            out[i] = 0.0;
        }
    }
    Ok(out)
}

/// Clamp a point into the box component-wise (used after explicit steps so
/// the state lands exactly on a bound rather than beyond it).
pub fn clamp_point(x: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        x.len(),
        (0..x.len()).map(|i| x[i].clamp(lo[i], hi[i])),
    )
}

/// Residuals of the two variational inequalities the projection satisfies
/// against a reference point `x_e` inside the same box:
///
/// * `r1 = (x - x_e)^T projected_field  -  (x - x_e)^T field` must be <= 0:
///   projecting never increases the inner product with `x - x_e`.
/// * `r2 = (x - x_e)^T field_at_xe` must be <= 0 whenever the projected
///   field vanishes at `x_e` (i.e. `x_e` is an equilibrium of the
///   projected flow).
///
/// Both residuals are returned for the caller to assert against a
/// tolerance.
pub fn check_normal_cone_inequalities(
    field_at_x: &DVector<f64>,
    field_at_xe: &DVector<f64>,
    x: &DVector<f64>,
    x_e: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> Result<(f64, f64), ProjectionError> {
    check_dims(x, field_at_x, lo, hi)?;
    check_dims(x_e, field_at_xe, lo, hi)?;
    check_inside(x, lo, hi)?;
    check_inside(x_e, lo, hi)?;
    let diff = x - x_e;
    let projected = project_field(field_at_x, x, lo, hi)?;
    let r1 = diff.dot(&projected) - diff.dot(field_at_x);
    let r2 = diff.dot(field_at_xe);
    Ok((r1, r2))
}
