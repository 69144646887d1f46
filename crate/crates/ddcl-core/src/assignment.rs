//! Soft and hard assignment computation and the assignment-covariance
//! diagnostics Σ_q, K (concentration) and I (separation force).

use crate::error::{DdclError, Result};
use crate::numerics::{sq_dist_to_col, Matrix};
use crate::simplex::AssignmentVector;

/// Covariance of a soft assignment: diag(q) − q qᵀ. Symmetric PSD with
/// Σ q in its kernel and trace 1 − ‖q‖².
#[derive(Debug, Clone)]
pub struct AssignmentCovariance {
    pub sigma: Matrix,
}

/// Temperature-scaled softmax of negative squared distances:
/// q_j ∝ exp(−‖z − p_j‖² / T).
///
/// Distances are shifted by their minimum before exponentiation so the
/// computation cannot overflow for any T ≥ 1e−8.
pub fn soft_assign(z: &[f64], p: &Matrix, t: f64) -> Result<AssignmentVector> {
    if t <= 0.0 || !t.is_finite() {
        return Err(DdclError::InvalidConfig(format!(
            "temperature must be positive, got {t}"
        )));
    }
    if z.len() != p.rows() {
        return Err(DdclError::shape(
            "soft_assign",
            format!("feature dim {}", p.rows()),
            format!("{}", z.len()),
        ));
    }
    let k = p.cols();
    let mut d = vec![0.0; k];
    let mut min = f64::INFINITY;
    for (j, dj) in d.iter_mut().enumerate() {
        *dj = sq_dist_to_col(z, p, j);
        if !dj.is_finite() {
            return Err(DdclError::non_finite("squared distance in soft_assign"));
        }
        if *dj < min {
            min = *dj;
        }
    }
    let mut w = vec![0.0; k];
    let mut sum = 0.0;
    for j in 0..k {
        w[j] = (-(d[j] - min) / t).exp();
        sum += w[j];
    }
    for wj in &mut w {
        *wj /= sum;
    }
    Ok(AssignmentVector::from_normalized(w))
}

/// Soft assignments for every row of a feature batch.
pub fn soft_assign_batch(z: &Matrix, p: &Matrix, t: f64) -> Result<Vec<AssignmentVector>> {
    if t <= 0.0 || !t.is_finite() {
        return Err(DdclError::InvalidConfig(format!(
            "temperature must be positive, got {t}"
        )));
    }
    if z.cols() != p.rows() {
        return Err(DdclError::shape(
            "soft_assign_batch",
            format!("feature dim {}", p.rows()),
            format!("{}", z.cols()),
        ));
    }
    crate::parallel::map_indexed(z.rows(), |i| soft_assign(z.row(i), p, t))
        .into_iter()
        .collect()
}

/// Index of the nearest prototype (0-based), ties broken by lowest index.
pub fn hard_assign(z: &[f64], p: &Matrix) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for j in 0..p.cols() {
        let d = sq_dist_to_col(z, p, j);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

/// Hard assignments for every row of a feature batch.
pub fn hard_assign_batch(z: &Matrix, p: &Matrix) -> Vec<usize> {
    crate::parallel::map_indexed(z.rows(), |i| hard_assign(z.row(i), p))
}

/// Assignment covariance Σ_q = diag(q) − q qᵀ.
pub fn sigma(q: &AssignmentVector) -> AssignmentCovariance {
    let k = q.k();
    let qs = q.as_slice();
    let sigma = Matrix::from_fn(k, k, |i, j| {
        let d = if i == j { qs[i] } else { 0.0 };
        d - qs[i] * qs[j]
    });
    AssignmentCovariance { sigma }
}

/// Concentration K(q) = ‖q‖² ∈ [1/k, 1].
pub fn concentration(q: &AssignmentVector) -> f64 {
    q.as_slice().iter().map(|v| v * v).sum()
}

/// Separation force I(Σ_q) = tr(Σ_q) = 1 − K(q) ∈ [0, (k−1)/k].
pub fn separation_force_trace(q: &AssignmentVector) -> f64 {
    1.0 - concentration(q)
}
