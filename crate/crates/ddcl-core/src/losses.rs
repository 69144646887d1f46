//! Scalar objectives: the soft quantization loss, the simplex-constrained
//! reconstruction loss, the prototype-variance gap between them, the three
//! regularizers, their weighted total, the reduced frozen-feature energy, and
//! the soft cross-entropy head loss.
//!
//! The total loss is a batch mean; the reduced energy keeps its quantization
//! term as a sum over samples. Both normalizations are deliberate and match
//! the objects whose monotonicity and decomposition the tests verify.

use crate::assignment::sigma;
use crate::error::{DdclError, Result};
use crate::numerics::{sq_dist_to_col, Matrix};
use crate::parallel;
use crate::simplex::{entropy, kl_to_uniform, AssignmentVector, LOG_FLOOR};
use serde::{Deserialize, Serialize};

/// Non-negative weights for the composite objective.
///
/// `entropy_sign` selects how the mean-entropy term enters the total:
/// −1 (default) rewards entropy and keeps assignments soft; +1 penalizes it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossWeights {
    pub beta: f64,
    pub gamma: f64,
    pub eta: f64,
    pub lambda: f64,
    pub entropy_sign: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            beta: 0.0,
            gamma: 0.0,
            eta: 0.0,
            lambda: 0.0,
            entropy_sign: -1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("eta", self.eta),
            ("lambda", self.lambda),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(DdclError::InvalidConfig(format!(
                    "loss weight {name} must be non-negative and finite, got {v}"
                )));
            }
        }
        if self.entropy_sign != 1.0 && self.entropy_sign != -1.0 {
            return Err(DdclError::InvalidConfig(format!(
                "entropy_sign must be +1 or -1, got {}",
                self.entropy_sign
            )));
        }
        Ok(())
    }

    /// Coercivity of the reduced energy requires lambda > 2 eta C(k,2).
    pub fn coercivity_ok(&self, k: usize) -> bool {
        let pairs = (k * k.saturating_sub(1)) as f64 / 2.0;
        self.eta == 0.0 || self.lambda > 2.0 * self.eta * pairs
    }
}

/// Every term of the composite objective, plus their weighted total.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_q: f64,
    pub l_ols: f64,
    pub v: f64,
    pub l_bal: f64,
    pub l_ent: f64,
    pub l_sep: f64,
    pub l_quad: f64,
    pub total: f64,
}

fn check_batch(op: &'static str, z: &Matrix, p: &Matrix, q: &[AssignmentVector]) -> Result<()> {
    if z.rows() == 0 {
        return Err(DdclError::EmptyBatch(op));
    }
    if q.len() != z.rows() {
        return Err(DdclError::shape(
            op,
            format!("{} assignments", z.rows()),
            format!("{}", q.len()),
        ));
    }
    if z.cols() != p.rows() {
        return Err(DdclError::shape(
            op,
            format!("feature dim {}", z.cols()),
            format!("prototype dim {}", p.rows()),
        ));
    }
    if q.iter().any(|qi| qi.k() != p.cols()) {
        return Err(DdclError::shape(
            op,
            format!("assignment length {}", p.cols()),
            "mismatched assignment length",
        ));
    }
    Ok(())
}

/// Prototype mixture p̄ = P q for one sample.
pub fn mixture(p: &Matrix, q: &AssignmentVector) -> Vec<f64> {
    let (d, k) = (p.rows(), p.cols());
    let qs = q.as_slice();
    let mut out = vec![0.0; d];
    for i in 0..d {
        let prow = p.row(i);
        let mut acc = 0.0;
        for j in 0..k {
            acc += prow[j] * qs[j];
        }
        out[i] = acc;
    }
    out
}

/// Per-sample soft quantization loss Σ_j q_j ‖z − p_j‖².
pub fn quantization_loss_sample(z: &[f64], p: &Matrix, q: &AssignmentVector) -> f64 {
    q.as_slice()
        .iter()
        .enumerate()
        .map(|(j, &qj)| qj * sq_dist_to_col(z, p, j))
        .sum()
}

/// Batch-mean soft quantization loss (1/N) Σ_n Σ_j q_nj ‖z_n − p_j‖².
pub fn quantization_loss(z: &Matrix, p: &Matrix, q: &[AssignmentVector]) -> Result<f64> {
    check_batch("quantization_loss", z, p, q)?;
    let n = z.rows();
    Ok(parallel::sum_indexed(n, |i| quantization_loss_sample(z.row(i), p, &q[i])) / n as f64)
}

/// Per-sample reconstruction loss ‖z − P q‖².
pub fn ols_loss_sample(z: &[f64], p: &Matrix, q: &AssignmentVector) -> f64 {
    let pbar = mixture(p, q);
    z.iter()
        .zip(&pbar)
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// Batch-mean simplex-constrained reconstruction loss (1/N) Σ_n ‖z_n − P q_n‖².
pub fn ols_loss(z: &Matrix, p: &Matrix, q: &[AssignmentVector]) -> Result<f64> {
    check_batch("ols_loss", z, p, q)?;
    let n = z.rows();
    Ok(parallel::sum_indexed(n, |i| ols_loss_sample(z.row(i), p, &q[i])) / n as f64)
}

/// Per-sample weighted prototype variance Σ_j q_j ‖p_j − P q‖².
///
/// Computed in this centered form (not as a difference of squares) so the
/// decomposition identity holds to tight absolute tolerance at d = 512.
pub fn variance_term_sample(p: &Matrix, q: &AssignmentVector) -> f64 {
    let pbar = mixture(p, q);
    let (d, _) = (p.rows(), p.cols());
    q.as_slice()
        .iter()
        .enumerate()
        .map(|(j, &qj)| {
            if qj == 0.0 {
                return 0.0;
            }
            let mut acc = 0.0;
            for i in 0..d {
                let diff = p.get(i, j) - pbar[i];
                acc += diff * diff;
            }
            qj * acc
        })
        .sum()
}

/// Batch-mean weighted prototype variance, always ≥ 0.
pub fn variance_term(p: &Matrix, q: &[AssignmentVector]) -> f64 {
    if q.is_empty() {
        return 0.0;
    }
    let n = q.len();
    parallel::sum_indexed(n, |i| variance_term_sample(p, &q[i])) / n as f64
}

/// Mean assignment over the batch.
pub fn mean_assignment(q: &[AssignmentVector]) -> AssignmentVector {
    let k = q[0].k();
    let n = q.len() as f64;
    let mut acc = vec![0.0; k];
    for qi in q {
        for (a, &b) in acc.iter_mut().zip(qi.as_slice()) {
            *a += b;
        }
    }
    for a in &mut acc {
        *a /= n;
    }
    AssignmentVector::from_normalized(acc)
}

/// Negative sum of pairwise squared prototype distances −Σ_{i<j} ‖p_i − p_j‖².
pub fn separation_penalty(p: &Matrix) -> f64 {
    let k = p.cols();
    let mut acc = 0.0;
    for i in 0..k {
        for j in (i + 1)..k {
            let mut d = 0.0;
            for r in 0..p.rows() {
                let diff = p.get(r, i) - p.get(r, j);
                d += diff * diff;
            }
            acc += d;
        }
    }
    -acc
}

/// The three regularizers: (balance KL, mean entropy, separation penalty).
pub fn regularizers(p: &Matrix, q: &[AssignmentVector]) -> (f64, f64, f64) {
    let l_bal = kl_to_uniform(&mean_assignment(q));
    let l_ent = q.iter().map(entropy).sum::<f64>() / q.len() as f64;
    (l_bal, l_ent, separation_penalty(p))
}

/// Full weighted objective over a batch.
pub fn total_loss(
    z: &Matrix,
    p: &Matrix,
    q: &[AssignmentVector],
    w: &LossWeights,
) -> Result<LossBreakdown> {
    w.validate()?;
    check_batch("total_loss", z, p, q)?;
    let l_q = quantization_loss(z, p, q)?;
    let l_ols = ols_loss(z, p, q)?;
    let v = variance_term(p, q);
    let (l_bal, l_ent, l_sep) = regularizers(p, q);
    let fro = p.frobenius_norm();
    let l_quad = 0.5 * w.lambda * fro * fro;
    let total = l_q + w.beta * l_bal + w.entropy_sign * w.gamma * l_ent + w.eta * l_sep + l_quad;
    Ok(LossBreakdown {
        l_q,
        l_ols,
        v,
        l_bal,
        l_ent,
        l_sep,
        l_quad,
        total,
    })
}

/// Reduced frozen-feature energy and whether the coercivity condition on
/// (lambda, eta) held when it was computed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyReport {
    pub value: f64,
    pub coercivity_ok: bool,
}

/// Reduced energy E(P, Q): un-normalized quantization sum over samples plus
/// the weighted regularizer terms.
pub fn energy(
    z: &Matrix,
    p: &Matrix,
    q: &[AssignmentVector],
    w: &LossWeights,
) -> Result<EnergyReport> {
    w.validate()?;
    check_batch("energy", z, p, q)?;
    let n = z.rows();
    let quant = parallel::sum_indexed(n, |i| quantization_loss_sample(z.row(i), p, &q[i]));
    let (l_bal, l_ent, l_sep) = regularizers(p, q);
    let fro = p.frobenius_norm();
    let value = quant
        + w.beta * l_bal
        + w.entropy_sign * w.gamma * l_ent
        + w.eta * l_sep
        + 0.5 * w.lambda * fro * fro;
    Ok(EnergyReport {
        value,
        coercivity_ok: w.coercivity_ok(p.cols()),
    })
}

/// Soft cross-entropy −(1/N) Σ_n Σ_j q_nj log ŝ_nj with log-sum-exp
/// stabilized softmax over the logit rows.
pub fn soft_cross_entropy(logits: &Matrix, targets: &[AssignmentVector]) -> Result<f64> {
    if logits.rows() == 0 {
        return Err(DdclError::EmptyBatch("soft_cross_entropy"));
    }
    if targets.len() != logits.rows() || targets.iter().any(|t| t.k() != logits.cols()) {
        return Err(DdclError::shape(
            "soft_cross_entropy",
            format!("{} targets of length {}", logits.rows(), logits.cols()),
            format!("{}", targets.len()),
        ));
    }
    let n = logits.rows();
    let total = parallel::sum_indexed(n, |i| {
        let row = logits.row(i);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        targets[i]
            .as_slice()
            .iter()
            .zip(row)
            .map(|(&qj, &lj)| {
                if qj == 0.0 {
                    0.0
                } else {
                    -qj * (lj - lse)
                }
            })
            .sum::<f64>()
    });
    Ok(total / n as f64)
}

/// Log-probabilities for one logit row (softmax in log space).
pub fn log_softmax_row(row: &[f64]) -> Vec<f64> {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    row.iter().map(|&v| v - lse).collect()
}

/// Cross-entropy against probability targets given directly (clamped log).
pub fn soft_cross_entropy_probs(probs: &Matrix, targets: &[AssignmentVector]) -> f64 {
    let n = probs.rows();
    parallel::sum_indexed(n, |i| {
        targets[i]
            .as_slice()
            .iter()
            .zip(probs.row(i))
            .map(|(&qj, &sj)| if qj == 0.0 { 0.0 } else { -qj * sj.max(LOG_FLOOR).ln() })
            .sum::<f64>()
    }) / n as f64
}

/// Mean ∇_P V over a batch, 2 P Σ̄ with Σ̄ the mean assignment covariance;
/// returns its Frobenius norm. This is the implicit separation force the
/// trainer logs each epoch.
pub fn grad_pv_norm(p: &Matrix, q: &[AssignmentVector]) -> f64 {
    if q.is_empty() {
        return 0.0;
    }
    let k = p.cols();
    let n = q.len();
    let mut mean_sigma = Matrix::zeros(k, k);
    for qi in q {
        mean_sigma.add_scaled(&sigma(qi).sigma, 1.0 / n as f64);
    }
    let mut g = p.matmul(&mean_sigma).expect("k x k");
    g.scale(2.0);
    g.frobenius_norm()
}
