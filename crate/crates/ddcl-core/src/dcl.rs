//! The dual competitive layer: prototypes as differentiable outputs
//! P = XᵀW₂, its backward pass, the vanilla-competitive-layer quantization
//! error, and the competitive-Hebbian adjacency diagnostic.

use crate::error::{DdclError, Result};
use crate::numerics::{sq_dist_to_col, Matrix};
use serde::{Deserialize, Serialize};

/// How prototypes are parameterized during training.
///
/// `DirectP` keeps P as a free d×k parameter; `DualW2` recomputes
/// P = XᵀW₂ from the current batch, confining updates to the data subspace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrototypeMode {
    DirectP,
    DualW2,
}

/// Forward pass of the dual layer: P = XᵀW₂, each prototype column a linear
/// combination of batch samples.
pub fn dcl_forward(x: &Matrix, w2: &Matrix) -> Result<Matrix> {
    if x.rows() != w2.rows() {
        return Err(DdclError::shape(
            "dcl_forward",
            format!("{} weight rows", x.rows()),
            format!("{}", w2.rows()),
        ));
    }
    x.transpose().matmul(w2)
}

/// Backward pass for P = XᵀW₂ under an upstream gradient G = ∂L/∂P:
/// returns (∂L/∂W₂ = X G, ∂L/∂X = W₂ Gᵀ transposed to batch layout).
pub fn dcl_backward(x: &Matrix, w2: &Matrix, grad_p: &Matrix) -> Result<(Matrix, Matrix)> {
    if grad_p.rows() != x.cols() || grad_p.cols() != w2.cols() {
        return Err(DdclError::shape(
            "dcl_backward",
            format!("grad_P of {}x{}", x.cols(), w2.cols()),
            format!("{}x{}", grad_p.rows(), grad_p.cols()),
        ));
    }
    let grad_w2 = x.matmul(grad_p)?;
    let grad_x = w2.matmul(&grad_p.transpose())?;
    Ok((grad_w2, grad_x))
}

/// Vanilla competitive layer quantization error: Σ_i min_j ‖x_i − w_j‖²
/// with prototypes as rows of `w1`.
pub fn vcl_quantization(x: &Matrix, w1: &Matrix) -> Result<f64> {
    if x.cols() != w1.cols() {
        return Err(DdclError::shape(
            "vcl_quantization",
            format!("feature dim {}", x.cols()),
            format!("{}", w1.cols()),
        ));
    }
    let k = w1.rows();
    Ok(crate::parallel::sum_indexed(x.rows(), |i| {
        let xi = x.row(i);
        (0..k)
            .map(|j| {
                xi.iter()
                    .zip(w1.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min)
    }))
}

/// Competitive-Hebbian adjacency: E_ij = 1 iff some sample has first winner
/// i and second winner j (in either order). Diagnostic only; symmetric with
/// zero diagonal.
pub fn chl_adjacency(x: &Matrix, p: &Matrix) -> Result<Matrix> {
    let k = p.cols();
    if k < 2 {
        return Err(DdclError::InvalidConfig(format!(
            "chl_adjacency needs k >= 2, got {k}"
        )));
    }
    if x.cols() != p.rows() {
        return Err(DdclError::shape(
            "chl_adjacency",
            format!("feature dim {}", p.rows()),
            format!("{}", x.cols()),
        ));
    }
    let mut e = Matrix::zeros(k, k);
    for i in 0..x.rows() {
        let z = x.row(i);
        let (mut w1, mut w2) = (usize::MAX, usize::MAX);
        let (mut d1, mut d2) = (f64::INFINITY, f64::INFINITY);
        for j in 0..k {
            let d = sq_dist_to_col(z, p, j);
            if d < d1 {
                d2 = d1;
                w2 = w1;
                d1 = d;
                w1 = j;
            } else if d < d2 {
                d2 = d;
                w2 = j;
            }
        }
        if w1 != w2 && w2 != usize::MAX {
            e.set(w1, w2, 1.0);
            e.set(w2, w1, 1.0);
        }
    }
    Ok(e)
}
