//! The unified batch training loop: temperature annealing, loss selection,
//! optional stop-gradient, dual or direct prototype parameterization,
//! per-epoch diagnostics, collapse detection, feedback correlation, and the
//! stability-margin monitor.

use crate::assignment::{concentration, hard_assign_batch, soft_assign_batch};
use crate::backbone::{mlp_backward, mlp_forward, ForwardMode, MlpParams, SgdState};
use crate::datasets::LabeledDataset;
use crate::dcl::{dcl_backward, dcl_forward, PrototypeMode};
use crate::error::{DdclError, Result};
use crate::gradients::{chain_correction, grad_p, grad_z_with_q, PLossKind, ZLossKind};
use crate::losses::{log_softmax_row, total_loss, LossWeights};
use crate::metrics;
use crate::numerics::{dot, pearson_corr, Matrix, Rng};
use crate::simplex::AssignmentVector;
use serde::{Deserialize, Serialize};

/// Objective driving the parameter updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Quantization,
    Ols,
    SoftCe,
}

/// All hyperparameters of one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub k: usize,
    pub t0: f64,
    pub t_min: f64,
    pub tau: f64,
    pub beta: f64,
    pub gamma: f64,
    pub eta: f64,
    /// Linear ramp of eta from 0 to its full value over this many epochs
    /// (0 disables the ramp).
    pub eta_ramp_epochs: usize,
    pub lambda: f64,
    pub lr_backbone: f64,
    pub lr_dcl: f64,
    pub epochs: usize,
    pub seed: u64,
    pub stop_gradient: bool,
    pub loss_kind: LossKind,
    pub prototype_mode: PrototypeMode,
    /// −1 rewards assignment entropy (keeps assignments soft), +1 penalizes it.
    pub entropy_sign: f64,
    /// Mini-batch size; None trains full-batch.
    pub batch_size: Option<usize>,
    pub momentum: f64,
    /// Epoch-indexed phase switch: keep stop-gradient on until this epoch,
    /// then release it (None keeps the `stop_gradient` flag for the whole
    /// run).
    pub release_stop_gradient_at: Option<usize>,
    /// Prototype init places each prototype at
    /// mean + init_dispersion · (sample − mean); 1 puts prototypes exactly
    /// on data samples, larger values start them over-dispersed.
    pub init_dispersion: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            k: 2,
            t0: 0.5,
            t_min: 0.5,
            tau: 80.0,
            beta: 0.0,
            gamma: 0.0,
            eta: 0.0,
            eta_ramp_epochs: 0,
            lambda: 0.0,
            lr_backbone: 0.01,
            lr_dcl: 0.1,
            epochs: 200,
            seed: 0,
            stop_gradient: true,
            loss_kind: LossKind::Quantization,
            prototype_mode: PrototypeMode::DirectP,
            entropy_sign: -1.0,
            batch_size: None,
            momentum: 0.0,
            init_dispersion: 1.0,
            release_stop_gradient_at: None,
        }
    }
}

impl RunConfig {
    pub fn weights(&self) -> LossWeights {
        LossWeights {
            beta: self.beta,
            gamma: self.gamma,
            eta: self.eta,
            lambda: self.lambda,
            entropy_sign: self.entropy_sign,
        }
    }

    /// Validate hard preconditions; returns soft warnings.
    pub fn validate(&self, n: usize) -> Result<Vec<String>> {
        if self.k < 2 {
            return Err(DdclError::InvalidConfig(format!("k must be >= 2, got {}", self.k)));
        }
        if n < self.k {
            return Err(DdclError::InvalidConfig(format!(
                "need n >= k, got n={n} k={}",
                self.k
            )));
        }
        if !(self.t_min > 0.0 && self.t0 >= self.t_min) {
            return Err(DdclError::InvalidConfig(format!(
                "need T0 >= T_min > 0, got T0={} T_min={}",
                self.t0, self.t_min
            )));
        }
        if self.tau <= 0.0 {
            return Err(DdclError::InvalidConfig(format!("tau must be > 0, got {}", self.tau)));
        }
        if self.lr_backbone < 0.0 || self.lr_dcl < 0.0 {
            return Err(DdclError::InvalidConfig(
                "learning rates must be non-negative".into(),
            ));
        }
        self.weights().validate()?;
        let mut warnings = Vec::new();
        if self.eta > 0.0 && !self.weights().coercivity_ok(self.k) {
            warnings.push(format!(
                "lambda={} does not dominate 2*eta*C(k,2)={}; the reduced energy is not coercive",
                self.lambda,
                self.eta * (self.k * (self.k - 1)) as f64
            ));
        }
        let batch = self.batch_size.unwrap_or(n);
        if batch < 2 * self.k {
            warnings.push(format!(
                "batch size {batch} below the recommended 2k = {}",
                2 * self.k
            ));
        }
        if self.lr_dcl == 0.0 {
            warnings.push("lr_dcl = 0: prototypes are frozen".into());
        }
        if self.init_dispersion <= 0.0 {
            return Err(DdclError::InvalidConfig(format!(
                "init_dispersion must be positive, got {}",
                self.init_dispersion
            )));
        }
        if self.init_dispersion != 1.0 && self.prototype_mode == PrototypeMode::DualW2 {
            warnings.push(
                "init_dispersion is ignored in dual mode (one-hot weight columns)".into(),
            );
        }
        Ok(warnings)
    }

    fn eta_at(&self, epoch: usize) -> f64 {
        if self.eta_ramp_epochs == 0 {
            self.eta
        } else {
            self.eta * ((epoch as f64 / self.eta_ramp_epochs as f64).min(1.0))
        }
    }
}

/// Annealing schedule T(t) = max(T₀ e^{−t/τ}, T_min).
pub fn anneal(t0: f64, t_min: f64, tau: f64, epoch: usize) -> f64 {
    (t0 * (-(epoch as f64) / tau).exp()).max(t_min)
}

/// Mean pairwise squared prototype distance S(P).
pub fn separation(p: &Matrix) -> f64 {
    let k = p.cols();
    if k < 2 {
        return 0.0;
    }
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
    acc / ((k * (k - 1)) as f64 / 2.0)
}

/// One per-epoch diagnostics record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: usize,
    pub t: f64,
    pub l_q: f64,
    pub l_ols: f64,
    pub v: f64,
    pub s: f64,
    pub k_mean: f64,
    pub i_mean: f64,
    pub grad_pv_norm: f64,
    pub acc: Option<f64>,
    pub nmi: Option<f64>,
    pub ari: Option<f64>,
    /// Streaming traces index rows by samples seen; batch traces leave this
    /// empty.
    pub samples_seen: Option<usize>,
}

/// Per-epoch training trace with a fixed CSV schema.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
}

impl TrainTrace {
    pub const CSV_HEADER: &'static str =
        "epoch,T,l_q,l_ols,v,s,k_mean,i_mean,grad_pv_norm,acc,nmi,ari";

    pub fn to_csv(&self) -> String {
        let streaming = self.rows.iter().any(|r| r.samples_seen.is_some());
        let mut out = String::from(Self::CSV_HEADER);
        if streaming {
            out.push_str(",samples_seen");
        }
        out.push('\n');
        let fmt_opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.epoch,
                r.t,
                r.l_q,
                r.l_ols,
                r.v,
                r.s,
                r.k_mean,
                r.i_mean,
                r.grad_pv_norm,
                fmt_opt(r.acc),
                fmt_opt(r.nmi),
                fmt_opt(r.ari)
            ));
            if streaming {
                out.push_str(&format!(",{}", r.samples_seen.unwrap_or(0)));
            }
            out.push('\n');
        }
        out
    }

    pub fn column(&self, f: impl Fn(&TraceRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }
}

/// Collapse verdict from the separation trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CollapseVerdict {
    pub collapsed: bool,
    pub final_s: f64,
    pub threshold: f64,
}

/// Collapsed iff the final separation fell below
/// max(1e−6, 1e−3 · initial separation).
pub fn detect_collapse(trace: &TrainTrace, p_init: &Matrix, p_final: &Matrix) -> Result<CollapseVerdict> {
    if trace.rows.is_empty() {
        return Err(DdclError::DegenerateInput("empty trace".into()));
    }
    let threshold = (1e-3 * separation(p_init)).max(1e-6);
    let final_s = separation(p_final);
    Ok(CollapseVerdict {
        collapsed: final_s < threshold,
        final_s,
        threshold,
    })
}

/// Pearson correlation between the separation and mean-concentration
/// columns of a trace.
pub fn feedback_correlation(trace: &TrainTrace) -> Result<f64> {
    pearson_corr(&trace.column(|r| r.s), &trace.column(|r| r.k_mean))
}

/// Learning-rate-ratio stability check: the backbone/DCL ratio must stay
/// below 1 + 4‖P‖_F / (T · ‖∇_z f‖_F).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityMargin {
    pub ratio_bound: f64,
    pub current_ratio: f64,
    pub ok: bool,
}

pub fn stability_margin(
    p: &Matrix,
    t: f64,
    jacobian_norm: f64,
    lr_backbone: f64,
    lr_dcl: f64,
) -> StabilityMargin {
    let current_ratio = if lr_dcl > 0.0 {
        lr_backbone / lr_dcl
    } else {
        f64::INFINITY
    };
    if jacobian_norm <= 0.0 {
        return StabilityMargin {
            ratio_bound: f64::INFINITY,
            current_ratio,
            ok: true,
        };
    }
    let ratio_bound = 1.0 + 4.0 * p.frobenius_norm() / (t * jacobian_norm);
    StabilityMargin {
        ratio_bound,
        current_ratio,
        ok: current_ratio < ratio_bound,
    }
}

/// Final state of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub prototypes: Matrix,
    pub initial_prototypes: Matrix,
    pub assignments: Vec<AssignmentVector>,
    pub trace: TrainTrace,
    pub warnings: Vec<String>,
}

enum PrototypeParam {
    Direct(Matrix),
    Dual { w2: Matrix },
}

struct SoftCeHead {
    w: Matrix,
    b: Vec<f64>,
}

fn check_finite(term: &str, value: f64, epoch: usize) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(DdclError::NonFinite {
            term: term.to_string(),
            at: Some(format!("epoch {epoch}")),
        })
    }
}

/// Run the batch training loop on a dataset, optionally through a trainable
/// backbone. Deterministic given the config seed; emits one trace row per
/// epoch (metrics columns populated when labels are present).
pub fn train(
    data: &LabeledDataset,
    config: &RunConfig,
    mut backbone: Option<&mut MlpParams>,
) -> Result<TrainOutcome> {
    let n = data.n();
    let mut warnings = config.validate(n)?;
    let mut rng = Rng::new(config.seed);
    let x = &data.features;
    let weights = config.weights();

    // feature space the prototypes live in
    let initial_features = match backbone.as_deref() {
        Some(bb) => mlp_forward(bb, x, ForwardMode::Eval)?.0,
        None => x.clone(),
    };
    let feat_dim = initial_features.cols();

    let batch = config.batch_size.unwrap_or(n).min(n);
    // prototype init: k distinct reference positions
    let init_positions = rng.sample_without_replacement(batch.max(config.k), config.k);
    let init_samples = rng.sample_without_replacement(n, config.k);
    let feature_mean: Vec<f64> = (0..feat_dim)
        .map(|j| (0..n).map(|i| initial_features.get(i, j)).sum::<f64>() / n as f64)
        .collect();
    let mut proto = match config.prototype_mode {
        PrototypeMode::DirectP => {
            let c = config.init_dispersion;
            let p = Matrix::from_fn(feat_dim, config.k, |i, j| {
                feature_mean[i] + c * (initial_features.get(init_samples[j], i) - feature_mean[i])
            });
            PrototypeParam::Direct(p)
        }
        PrototypeMode::DualW2 => {
            // one-hot columns: prototype j is the sample at a fixed position
            // of the current batch
            let mut w2 = Matrix::zeros(batch, config.k);
            for (j, &pos) in init_positions.iter().enumerate() {
                w2.set(pos, j, 1.0);
            }
            PrototypeParam::Dual { w2 }
        }
    };

    let mut head = if config.loss_kind == LossKind::SoftCe {
        let mut w = Matrix::randn(feat_dim, config.k, &mut rng);
        w.scale(0.01);
        Some(SoftCeHead {
            w,
            b: vec![0.0; config.k],
        })
    } else {
        None
    };

    let mut sgd = SgdState::new(config.momentum);
    let mut p_current = match &proto {
        PrototypeParam::Direct(p) => p.clone(),
        PrototypeParam::Dual { w2 } => {
            let ref_batch = Matrix::from_fn(batch, feat_dim, |i, j| {
                initial_features.get(i % n, j)
            });
            dcl_forward(&ref_batch, w2)?
        }
    };
    let p_init = p_current.clone();

    let mut trace = TrainTrace::default();

    for epoch in 0..config.epochs {
        let t = anneal(config.t0, config.t_min, config.tau, epoch);
        let eta_t = config.eta_at(epoch);
        let stop_gradient = match config.release_stop_gradient_at {
            Some(release) => epoch < release,
            None => config.stop_gradient,
        };

        // batch order for this epoch
        let order: Vec<usize> = if config.batch_size.is_some() {
            let mut idx: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut idx);
            idx
        } else {
            (0..n).collect()
        };

        for chunk in order.chunks(batch) {
            if chunk.len() < batch {
                // dual-mode weight shapes are pinned to the reference batch
                // length; skip the short remainder
                continue;
            }
            let xb = Matrix::from_fn(chunk.len(), x.cols(), |i, j| x.get(chunk[i], j));
            let (z, cache) = match backbone.as_deref() {
                Some(bb) => {
                    let (z, c) = mlp_forward(bb, &xb, ForwardMode::Train)?;
                    (z, Some(c))
                }
                None => (xb.clone(), None),
            };
            let p = match &proto {
                PrototypeParam::Direct(p) => p.clone(),
                PrototypeParam::Dual { w2 } => dcl_forward(&z, w2)?,
            };
            let q = soft_assign_batch(&z, &p, t)?;
            let b_len = chunk.len() as f64;

            // co-gradients of the balance and entropy regularizers w.r.t.
            // the assignments; they reach P and the features only through
            // the softmax chain, so they vanish under stop-gradient
            let reg_cograd: Option<Vec<Vec<f64>>> = if !stop_gradient
                && (config.beta > 0.0 || config.gamma > 0.0)
            {
                let mean_q = crate::losses::mean_assignment(&q);
                let bal: Vec<f64> = (0..config.k)
                    .map(|j| {
                        let m = mean_q.as_slice()[j].max(1e-30);
                        config.beta * ((config.k as f64 * m).ln() + 1.0) / b_len
                    })
                    .collect();
                Some(
                    q.iter()
                        .map(|qi| {
                            (0..config.k)
                                .map(|j| {
                                    let qv = qi.as_slice()[j].max(1e-30);
                                    bal[j]
                                        + config.entropy_sign * config.gamma
                                            * (-(qv.ln() + 1.0))
                                            / b_len
                                })
                                .collect()
                        })
                        .collect(),
                )
            } else {
                None
            };

            // prototype-space gradient of the selected objective
            let mut grad_p_total = Matrix::zeros(feat_dim, config.k);
            match config.loss_kind {
                LossKind::Quantization | LossKind::Ols => {
                    let kind = if config.loss_kind == LossKind::Quantization {
                        PLossKind::Quantization
                    } else {
                        PLossKind::Ols
                    };
                    let per_sample = crate::parallel::map_indexed(chunk.len(), |i| {
                        grad_p(kind, z.row(i), &p, &q[i], 0.0).expect("shapes checked")
                    });
                    for g in &per_sample {
                        grad_p_total.add_scaled(g, 1.0 / b_len);
                    }
                }
                LossKind::SoftCe => {
                    let head_ref = head.as_ref().expect("head exists for SoftCe");
                    // q-path gradient of the soft cross-entropy:
                    // column m += (2/T) q_m (c_m - q·c)(z - p_m) / B
                    // with c_j = -log s_j
                    let per_sample = crate::parallel::map_indexed(chunk.len(), |i| {
                        let logits: Vec<f64> = (0..config.k)
                            .map(|j| dot(z.row(i), &head_ref.w.col(j)) + head_ref.b[j])
                            .collect();
                        let logp = log_softmax_row(&logits);
                        let c: Vec<f64> = logp.iter().map(|lp| -lp).collect();
                        let qc = dot(q[i].as_slice(), &c);
                        let mut g = Matrix::zeros(feat_dim, config.k);
                        for m in 0..config.k {
                            let coef = (2.0 / t) * q[i].as_slice()[m] * (c[m] - qc);
                            for r in 0..feat_dim {
                                g.set(r, m, coef * (z.get(i, r) - p.get(r, m)));
                            }
                        }
                        g
                    });
                    for g in &per_sample {
                        grad_p_total.add_scaled(g, 1.0 / b_len);
                    }
                }
            }
            if let Some(cograds) = &reg_cograd {
                // chain term of the q-dependent regularizers:
                // column m += (2/T) q_m (g_m - q·g)(z - p_m) per sample
                for (i, g) in cograds.iter().enumerate() {
                    let qi = q[i].as_slice();
                    let qg = dot(qi, g);
                    for m in 0..config.k {
                        let coef = (2.0 / t) * qi[m] * (g[m] - qg);
                        if coef == 0.0 {
                            continue;
                        }
                        for r in 0..feat_dim {
                            grad_p_total.set(
                                r,
                                m,
                                grad_p_total.get(r, m) + coef * (z.get(i, r) - p.get(r, m)),
                            );
                        }
                    }
                }
            }
            if eta_t > 0.0 {
                let gsep = grad_p(PLossKind::Separation, &[], &p, &AssignmentVector::uniform(config.k), 0.0)?;
                grad_p_total.add_scaled(&gsep, eta_t);
            }
            if config.lambda > 0.0 {
                grad_p_total.add_scaled(&p, config.lambda);
            }
            if !grad_p_total.is_finite() {
                return Err(DdclError::NonFinite {
                    term: "prototype gradient".into(),
                    at: Some(format!("epoch {epoch}")),
                });
            }

            // backbone gradient in feature space
            let grad_z_total = if backbone.is_some() {
                let mut gz = Matrix::zeros(chunk.len(), feat_dim);
                match config.loss_kind {
                    LossKind::Quantization | LossKind::Ols => {
                        let kind = if config.loss_kind == LossKind::Quantization {
                            ZLossKind::Quantization
                        } else {
                            ZLossKind::Ols
                        };
                        let rows = crate::parallel::map_indexed(chunk.len(), |i| {
                            grad_z_with_q(kind, z.row(i), &p, &q[i], t, stop_gradient)
                                .expect("shapes checked")
                        });
                        for (i, row) in rows.into_iter().enumerate() {
                            for (j, v) in row.into_iter().enumerate() {
                                gz.set(i, j, v / b_len);
                            }
                        }
                        if let Some(cograds) = &reg_cograd {
                            for (i, g) in cograds.iter().enumerate() {
                                let corr = chain_correction(&p, &q[i], g, t);
                                for (j, c) in corr.into_iter().enumerate() {
                                    gz.set(i, j, gz.get(i, j) + c);
                                }
                            }
                        }
                    }
                    LossKind::SoftCe => {
                        let head_ref = head.as_ref().expect("head exists");
                        for i in 0..chunk.len() {
                            let logits: Vec<f64> = (0..config.k)
                                .map(|j| dot(z.row(i), &head_ref.w.col(j)) + head_ref.b[j])
                                .collect();
                            let logp = log_softmax_row(&logits);
                            // head path
                            for r in 0..feat_dim {
                                let mut acc = 0.0;
                                for j in 0..config.k {
                                    acc += (logp[j].exp() - q[i].as_slice()[j])
                                        * head_ref.w.get(r, j);
                                }
                                gz.set(i, r, acc / b_len);
                            }
                            // q path unless targets are stop-gradiented
                            if !stop_gradient {
                                let c: Vec<f64> = logp.iter().map(|lp| -lp).collect();
                                let corr = chain_correction(&p, &q[i], &c, t);
                                for r in 0..feat_dim {
                                    gz.set(i, r, gz.get(i, r) + corr[r] / b_len);
                                }
                            }
                        }
                        if let Some(cograds) = &reg_cograd {
                            for (i, g) in cograds.iter().enumerate() {
                                let corr = chain_correction(&p, &q[i], g, t);
                                for (j, c) in corr.into_iter().enumerate() {
                                    gz.set(i, j, gz.get(i, j) + c);
                                }
                            }
                        }
                    }
                }
                Some(gz)
            } else {
                None
            };

            // update head
            if let Some(h) = head.as_mut() {
                let mut grad_logits = Matrix::zeros(chunk.len(), config.k);
                for i in 0..chunk.len() {
                    let logits: Vec<f64> = (0..config.k)
                        .map(|j| dot(z.row(i), &h.w.col(j)) + h.b[j])
                        .collect();
                    let logp = log_softmax_row(&logits);
                    for j in 0..config.k {
                        grad_logits
                            .set(i, j, (logp[j].exp() - q[i].as_slice()[j]) / b_len);
                    }
                }
                let gw = z.transpose().matmul(&grad_logits)?;
                h.w.add_scaled(&gw, -config.lr_backbone);
                for j in 0..config.k {
                    let gb: f64 = (0..chunk.len()).map(|i| grad_logits.get(i, j)).sum();
                    h.b[j] -= config.lr_backbone * gb;
                }
            }

            // update prototypes (and collect the dual-route feature gradient)
            let mut grad_z_dcl: Option<Matrix> = None;
            match &mut proto {
                PrototypeParam::Direct(pm) => {
                    pm.add_scaled(&grad_p_total, -config.lr_dcl);
                    p_current = pm.clone();
                }
                PrototypeParam::Dual { w2 } => {
                    let (gw2, gx) = dcl_backward(&z, w2, &grad_p_total)?;
                    w2.add_scaled(&gw2, -config.lr_dcl);
                    grad_z_dcl = Some(gx);
                    p_current = dcl_forward(&z, w2)?;
                }
            }
            if !p_current.is_finite() {
                return Err(DdclError::NonFinite {
                    term: "prototype matrix after update".into(),
                    at: Some(format!("epoch {epoch}")),
                });
            }

            // update backbone
            if let (Some(bb), Some(cache)) = (backbone.as_deref_mut(), cache.as_ref()) {
                let mut gz = grad_z_total.expect("computed when backbone present");
                if let Some(gx) = grad_z_dcl {
                    gz.add_scaled(&gx, 1.0);
                }
                let grads = mlp_backward(bb, cache, &gz)?;
                sgd.step(bb, &grads, config.lr_backbone);
                bb.update_running_stats(cache);
            }
        }

        // epoch diagnostics on the full dataset at the current parameters
        let z_full = match backbone.as_deref() {
            Some(bb) => mlp_forward(bb, x, ForwardMode::Eval)?.0,
            None => x.clone(),
        };
        let q_full = soft_assign_batch(&z_full, &p_current, t)?;
        let breakdown = total_loss(&z_full, &p_current, &q_full, &weights)?;
        check_finite("l_q", breakdown.l_q, epoch)?;
        check_finite("l_ols", breakdown.l_ols, epoch)?;
        check_finite("l_bal", breakdown.l_bal, epoch)?;
        check_finite("l_ent", breakdown.l_ent, epoch)?;
        check_finite("l_sep", breakdown.l_sep, epoch)?;
        check_finite("total", breakdown.total, epoch)?;
        let k_mean =
            q_full.iter().map(concentration).sum::<f64>() / q_full.len() as f64;
        let (acc, nmi_v, ari_v) = match &data.labels {
            Some(truth) => {
                let pred = hard_assign_batch(&z_full, &p_current);
                (
                    Some(metrics::clustering_accuracy(truth, &pred)?),
                    Some(metrics::nmi(truth, &pred)?),
                    Some(metrics::ari(truth, &pred)?),
                )
            }
            None => (None, None, None),
        };
        trace.rows.push(TraceRow {
            epoch,
            t,
            l_q: breakdown.l_q,
            l_ols: breakdown.l_ols,
            v: breakdown.v,
            s: separation(&p_current),
            k_mean,
            i_mean: 1.0 - k_mean,
            grad_pv_norm: crate::losses::grad_pv_norm(&p_current, &q_full),
            acc,
            nmi: nmi_v,
            ari: ari_v,
            samples_seen: None,
        });
    }

    let z_final = match backbone.as_deref() {
        Some(bb) => mlp_forward(bb, x, ForwardMode::Eval)?.0,
        None => x.clone(),
    };
    let t_final = anneal(
        config.t0,
        config.t_min,
        config.tau,
        config.epochs.saturating_sub(1),
    );
    let assignments = soft_assign_batch(&z_final, &p_current, t_final)?;
    if config.epochs == 0 {
        warnings.push("zero epochs requested: returning the initialization".into());
    }
    Ok(TrainOutcome {
        prototypes: p_current,
        initial_prototypes: p_init,
        assignments,
        trace,
        warnings,
    })
}
