//! Single-pass streaming training: per-batch prototype gradient steps plus
//! Widrow–Hoff assignment refinement with simplex projection, and the
//! weighted incremental objective over truncated feature prefixes.

use crate::assignment::{concentration, hard_assign_batch, soft_assign_batch};
use crate::batch_trainer::{anneal, separation, TraceRow, TrainTrace};
use crate::error::{DdclError, Result};
use crate::gradients::{grad_p, PLossKind};
use crate::losses::quantization_loss;
use crate::metrics;
use crate::numerics::{Matrix, Rng};
use crate::simplex::{project, AssignmentVector};

/// One Widrow–Hoff update of an assignment vector against a prototype row:
/// e = z_t − rᵀq, then project(q + μ e r) back onto the simplex.
pub fn widrow_hoff_step(
    q_prev: &AssignmentVector,
    r: &[f64],
    z_t: f64,
    mu: f64,
) -> Result<AssignmentVector> {
    if mu <= 0.0 {
        return Err(DdclError::InvalidConfig(format!(
            "widrow_hoff step size must be positive, got {mu}"
        )));
    }
    if r.len() != q_prev.k() {
        return Err(DdclError::shape(
            "widrow_hoff_step",
            format!("row of length {}", q_prev.k()),
            format!("{}", r.len()),
        ));
    }
    let e = z_t - crate::numerics::dot(r, q_prev.as_slice());
    let updated: Vec<f64> = q_prev
        .as_slice()
        .iter()
        .zip(r)
        .map(|(&q, &rj)| q + mu * e * rj)
        .collect();
    project(&updated)
}

/// Weighted incremental objective L_inc = Σ_t α_t L^(t) with
/// L^(t) = (1/N) Σ_n ‖z_{n,1:t} − P_{1:t} q_n^(t)‖².
///
/// `q_per_step[t]` holds the per-sample assignments after prototype row t+1
/// became available.
pub fn incremental_objective(
    z: &Matrix,
    p: &Matrix,
    q_per_step: &[Vec<AssignmentVector>],
    alpha: &[f64],
) -> Result<f64> {
    let d = p.rows();
    if alpha.len() != d || q_per_step.len() != d {
        return Err(DdclError::shape(
            "incremental_objective",
            format!("{d} step weights and assignment snapshots"),
            format!("{} and {}", alpha.len(), q_per_step.len()),
        ));
    }
    if let Some(&bad) = alpha.iter().find(|&&a| a < 0.0) {
        return Err(DdclError::InvalidConfig(format!(
            "step weights must be non-negative, got {bad}"
        )));
    }
    let n = z.rows();
    let mut total = 0.0;
    for t in 0..d {
        if alpha[t] == 0.0 {
            continue;
        }
        let mut step_loss = 0.0;
        for i in 0..n {
            let q = &q_per_step[t][i];
            let mut err = 0.0;
            for row in 0..=t {
                let recon = crate::numerics::dot(p.row(row), q.as_slice());
                let diff = z.get(i, row) - recon;
                err += diff * diff;
            }
            step_loss += err;
        }
        total += alpha[t] * step_loss / n as f64;
    }
    Ok(total)
}

/// Row-generating streaming pass over a reference batch: prototype rows
/// appear one feature dimension at a time as XᵀW₂ rows while every sample's
/// assignment is refined by Widrow–Hoff. Returns the completed prototype
/// matrix, the per-step assignment snapshots, and the final assignments.
pub fn widrow_hoff_pass(
    z: &Matrix,
    w2: &Matrix,
    mu: f64,
) -> Result<(Matrix, Vec<Vec<AssignmentVector>>, Vec<AssignmentVector>)> {
    if z.rows() != w2.rows() {
        return Err(DdclError::shape(
            "widrow_hoff_pass",
            format!("{} weight rows", z.rows()),
            format!("{}", w2.rows()),
        ));
    }
    let (n, d, k) = (z.rows(), z.cols(), w2.cols());
    let mut p = Matrix::zeros(d, k);
    let mut q: Vec<AssignmentVector> = vec![AssignmentVector::uniform(k); n];
    let mut snapshots = Vec::with_capacity(d);
    for t in 0..d {
        // DCL output row t: column t of Z combined through W2
        let mut row = vec![0.0; k];
        for j in 0..k {
            row[j] = (0..n).map(|i| z.get(i, t) * w2.get(i, j)).sum();
        }
        for (j, &v) in row.iter().enumerate() {
            p.set(t, j, v);
        }
        let refined = crate::parallel::map_indexed(n, |i| {
            widrow_hoff_step(&q[i], &row, z.get(i, t), mu)
        });
        q = refined.into_iter().collect::<Result<Vec<_>>>()?;
        snapshots.push(q.clone());
    }
    Ok((p, snapshots, q))
}

/// Configuration of the streaming trainer.
#[derive(Debug, Clone)]
pub struct StreamConfig {
    pub k: usize,
    pub batch_size: usize,
    pub t0: f64,
    pub t_min: f64,
    pub tau: f64,
    pub lr: f64,
    pub lambda: f64,
    /// Widrow–Hoff refinement step; halved whenever a projection moves an
    /// assignment by more than 0.5 in the ∞-norm.
    pub mu: f64,
    /// Widrow–Hoff sweeps over the feature dimensions per arriving batch.
    pub refine_sweeps: usize,
    pub seed: u64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            k: 2,
            batch_size: 50,
            t0: 2.0,
            t_min: 0.3,
            tau: 30.0,
            lr: 0.5,
            lambda: 0.0,
            mu: 0.05,
            refine_sweeps: 1,
            seed: 0,
        }
    }
}

/// Mutable state of a streaming run.
pub struct StreamState {
    pub prototypes: Matrix,
    /// Simplex-valid assignment per seen sample (indexed like the dataset).
    pub assignments: Vec<Option<AssignmentVector>>,
    pub samples_seen: usize,
    pub batches_seen: usize,
    pub temperature: f64,
    pub mu: f64,
    pub warnings: Vec<String>,
}

/// Outcome of a single-pass streaming run.
pub struct StreamOutcome {
    pub prototypes: Matrix,
    pub trace: TrainTrace,
    pub predictions: Vec<usize>,
    pub first_batch_separation: f64,
    pub final_separation: f64,
    pub warnings: Vec<String>,
    /// Max |Σq − 1| and most negative entry observed across every
    /// Widrow–Hoff refinement, for the feasibility invariant.
    pub max_simplex_violation: f64,
}

/// Single-pass streaming training: each arriving batch gets soft assignments
/// at the annealed temperature, one prototype gradient step on the
/// quantization loss, and Widrow–Hoff refinement sweeps of its stored
/// assignments. Trace rows are indexed by samples seen; metric columns use
/// predictions over all samples seen so far against the current prototypes.
pub fn stream_train(
    features: &Matrix,
    labels: Option<&[usize]>,
    order: &[usize],
    config: &StreamConfig,
) -> Result<StreamOutcome> {
    let n = features.rows();
    let d = features.cols();
    if config.k == 0 || n < config.k {
        return Err(DdclError::InvalidConfig(format!(
            "stream_train needs n >= k >= 1, got n={n} k={}",
            config.k
        )));
    }
    if config.batch_size == 0 {
        return Err(DdclError::InvalidConfig("batch_size must be >= 1".into()));
    }
    let mut rng = Rng::new(config.seed);
    let mut state = StreamState {
        prototypes: Matrix::zeros(d, config.k),
        assignments: vec![None; n],
        samples_seen: 0,
        batches_seen: 0,
        temperature: config.t0,
        mu: config.mu,
        warnings: Vec::new(),
    };
    let mut seen_order: Vec<usize> = Vec::with_capacity(n);
    let mut consumed = vec![false; n];
    let mut initialized = false;
    let mut trace = TrainTrace::default();
    let mut first_batch_sep = None;
    let mut max_violation: f64 = 0.0;

    for chunk in order.chunks(config.batch_size) {
        if chunk.is_empty() {
            state.warnings.push("skipped an empty stream batch".into());
            continue;
        }
        for &i in chunk {
            assert!(!consumed[i], "sample {i} appeared twice in a single-pass stream");
            consumed[i] = true;
        }
        seen_order.extend_from_slice(chunk);
        state.samples_seen += chunk.len();
        state.temperature = anneal(config.t0, config.t_min, config.tau, state.batches_seen);
        let zb = Matrix::from_fn(chunk.len(), d, |i, j| features.get(chunk[i], j));

        if !initialized {
            // prototypes start together at the first batch's mean with a
            // tiny symmetry-breaking jitter, so separation grows from the
            // data center as competition differentiates them
            if chunk.len() >= config.k {
                let mut mean = vec![0.0; d];
                for i in 0..chunk.len() {
                    for (m, &v) in mean.iter_mut().zip(zb.row(i)) {
                        *m += v / chunk.len() as f64;
                    }
                }
                let spread: f64 = (0..chunk.len())
                    .map(|i| {
                        zb.row(i)
                            .iter()
                            .zip(&mean)
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>()
                    })
                    .sum::<f64>()
                    / chunk.len() as f64;
                let jitter = 0.01 * spread.sqrt().max(1e-6);
                for j in 0..config.k {
                    for r in 0..d {
                        state.prototypes.set(r, j, mean[r] + jitter * rng.normal());
                    }
                }
                initialized = true;
            } else {
                state
                    .warnings
                    .push("first batch smaller than k; waiting for more samples".into());
                state.batches_seen += 1;
                continue;
            }
        }

        // soft assignments at the current temperature
        let q = soft_assign_batch(&zb, &state.prototypes, state.temperature)?;
        // one gradient step on the batch quantization loss
        let mut grad = Matrix::zeros(d, config.k);
        for i in 0..chunk.len() {
            let g = grad_p(PLossKind::Quantization, zb.row(i), &state.prototypes, &q[i], 0.0)?;
            grad.add_scaled(&g, 1.0 / chunk.len() as f64);
        }
        if config.lambda > 0.0 {
            grad.add_scaled(&state.prototypes, config.lambda);
        }
        state.prototypes.add_scaled(&grad, -config.lr);
        if !state.prototypes.is_finite() {
            return Err(DdclError::NonFinite {
                term: "streaming prototype update".into(),
                at: Some(format!("batch {}", state.batches_seen)),
            });
        }

        // Widrow-Hoff refinement of the batch's stored assignments
        for (bi, &i) in chunk.iter().enumerate() {
            let mut qi = q[bi].clone();
            for _ in 0..config.refine_sweeps {
                for t in 0..d {
                    let row: Vec<f64> =
                        (0..config.k).map(|j| state.prototypes.get(t, j)).collect();
                    let before = qi.clone();
                    qi = widrow_hoff_step(&qi, &row, zb.get(bi, t), state.mu)?;
                    let moved = qi
                        .as_slice()
                        .iter()
                        .zip(before.as_slice())
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    if moved > 0.5 {
                        state.mu *= 0.5;
                        state.warnings.push(format!(
                            "halved widrow-hoff step to {} after a {moved:.3} jump",
                            state.mu
                        ));
                    }
                    let sum: f64 = qi.as_slice().iter().sum();
                    let min = qi.as_slice().iter().cloned().fold(f64::INFINITY, f64::min);
                    max_violation = max_violation.max((sum - 1.0).abs()).max((-min).max(0.0));
                }
            }
            state.assignments[i] = Some(qi);
        }
        state.batches_seen += 1;

        // diagnostics over everything seen so far
        let t_now = state.temperature;
        let seen = Matrix::from_fn(seen_order.len(), d, |i, j| features.get(seen_order[i], j));
        let q_seen = soft_assign_batch(&seen, &state.prototypes, t_now)?;
        let l_q = quantization_loss(&seen, &state.prototypes, &q_seen)?;
        let l_ols = crate::losses::ols_loss(&seen, &state.prototypes, &q_seen)?;
        let v = crate::losses::variance_term(&state.prototypes, &q_seen);
        let k_mean = q_seen.iter().map(concentration).sum::<f64>() / q_seen.len() as f64;
        let s = separation(&state.prototypes);
        if first_batch_sep.is_none() {
            first_batch_sep = Some(s);
        }
        let (acc, nmi_v, ari_v) = match labels {
            Some(truth) => {
                let pred = hard_assign_batch(&seen, &state.prototypes);
                let truth_seen: Vec<usize> = seen_order.iter().map(|&i| truth[i]).collect();
                (
                    Some(metrics::clustering_accuracy(&truth_seen, &pred)?),
                    Some(metrics::nmi(&truth_seen, &pred)?),
                    Some(metrics::ari(&truth_seen, &pred)?),
                )
            }
            None => (None, None, None),
        };
        trace.rows.push(TraceRow {
            epoch: state.batches_seen - 1,
            t: t_now,
            l_q,
            l_ols,
            v,
            s,
            k_mean,
            i_mean: 1.0 - k_mean,
            grad_pv_norm: crate::losses::grad_pv_norm(&state.prototypes, &q_seen),
            acc,
            nmi: nmi_v,
            ari: ari_v,
            samples_seen: Some(state.samples_seen),
        });
    }

    let predictions = hard_assign_batch(features, &state.prototypes);
    Ok(StreamOutcome {
        final_separation: separation(&state.prototypes),
        first_batch_separation: first_batch_sep.unwrap_or(0.0),
        prototypes: state.prototypes,
        trace,
        predictions,
        warnings: state.warnings,
        max_simplex_violation: max_violation,
    })
}
