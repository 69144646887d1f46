//! Trainable MLP feature extractor: linear → batchnorm → ReLU hidden layers,
//! a plain linear output layer, and exact hand-derived backprop including the
//! batch-statistics terms.

use crate::error::{DdclError, Result};
use crate::numerics::{Matrix, Rng};
use serde::{Deserialize, Serialize};

const BN_EPS: f64 = 1e-5;

/// Per-feature batch normalization parameters and running statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
}

impl BatchNorm {
    fn new(dim: usize, momentum: f64) -> Self {
        BatchNorm {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            momentum,
        }
    }
}

/// One layer: x W + b, optional batchnorm, optional ReLU.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Layer {
    pub w: Matrix,
    pub b: Vec<f64>,
    pub bn: Option<BatchNorm>,
    pub relu: bool,
}

/// The full feature extractor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    Train,
    Eval,
}

/// Everything the backward pass needs from one layer's forward.
#[derive(Debug, Clone)]
pub struct LayerCache {
    input: Matrix,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
    x_hat: Matrix,
    pre_act: Matrix,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
    mode: ForwardMode,
    batch: usize,
}

impl ForwardCache {
    /// Biased batch statistics of layer `l`'s pre-normalization activations.
    pub fn batch_stats(&self, l: usize) -> (&[f64], &[f64]) {
        (&self.layers[l].batch_mean, &self.layers[l].batch_var)
    }
}

/// Gradients for one layer's parameters.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub w: Matrix,
    pub b: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MlpGradients {
    pub layers: Vec<LayerGrads>,
    pub grad_input: Matrix,
}

impl MlpParams {
    /// He-style fan-in scaled Gaussian init. Hidden layers get
    /// batchnorm (scale 1, shift 0, momentum 0.9) and ReLU; the final layer
    /// is plain linear.
    pub fn new(dims: &[usize], rng: &mut Rng) -> Result<Self> {
        Self::build(dims, rng, false)
    }

    /// As [`MlpParams::new`] but with batchnorm (no ReLU) on the output
    /// layer as well, pinning the feature scale — end-to-end prototype
    /// training is unstable when the backbone can inflate all distances
    /// at once.
    pub fn with_final_batchnorm(dims: &[usize], rng: &mut Rng) -> Result<Self> {
        Self::build(dims, rng, true)
    }

    fn build(dims: &[usize], rng: &mut Rng, final_bn: bool) -> Result<Self> {
        if dims.len() < 2 {
            return Err(DdclError::InvalidConfig(
                "backbone needs at least input and output dims".into(),
            ));
        }
        let mut layers = Vec::new();
        for i in 0..dims.len() - 1 {
            let (d_in, d_out) = (dims[i], dims[i + 1]);
            let scale = (2.0 / d_in as f64).sqrt();
            let mut w = Matrix::randn(d_in, d_out, rng);
            w.scale(scale);
            let hidden = i + 1 < dims.len() - 1;
            layers.push(Layer {
                w,
                b: vec![0.0; d_out],
                bn: if hidden || final_bn {
                    Some(BatchNorm::new(d_out, 0.9))
                } else {
                    None
                },
                relu: hidden,
            });
        }
        Ok(MlpParams { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().w.cols()
    }

    /// Fold the cached batch statistics of a train-mode forward into the
    /// running statistics: r ← m·r + (1−m)·batch.
    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        for (layer, lc) in self.layers.iter_mut().zip(&cache.layers) {
            if let Some(bn) = layer.bn.as_mut() {
                let m = bn.momentum;
                for j in 0..bn.running_mean.len() {
                    bn.running_mean[j] = m * bn.running_mean[j] + (1.0 - m) * lc.batch_mean[j];
                    bn.running_var[j] = m * bn.running_var[j] + (1.0 - m) * lc.batch_var[j];
                }
            }
        }
    }
}

/// Forward pass. Pure: train mode reads batch statistics into the cache but
/// does not touch the running statistics (see
/// [`MlpParams::update_running_stats`]).
pub fn mlp_forward(params: &MlpParams, x: &Matrix, mode: ForwardMode) -> Result<(Matrix, ForwardCache)> {
    if x.cols() != params.input_dim() {
        return Err(DdclError::shape(
            "mlp_forward",
            format!("input dim {}", params.input_dim()),
            format!("{}", x.cols()),
        ));
    }
    let n = x.rows();
    if mode == ForwardMode::Train && n < 2 {
        return Err(DdclError::InvalidConfig(
            "train-mode forward needs batch size >= 2 for batch statistics".into(),
        ));
    }
    let mut cur = x.clone();
    let mut caches = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let input = cur;
        let mut u = input.matmul(&layer.w)?;
        for r in 0..n {
            let row = u.row_mut(r);
            for (v, &bj) in row.iter_mut().zip(&layer.b) {
                *v += bj;
            }
        }
        let d_out = layer.w.cols();
        let (mut batch_mean, mut batch_var) = (vec![0.0; d_out], vec![0.0; d_out]);
        let mut x_hat = Matrix::zeros(0, 0);
        if let Some(bn) = &layer.bn {
            let (mean, var) = match mode {
                ForwardMode::Train => {
                    for j in 0..d_out {
                        let mut m = 0.0;
                        for r in 0..n {
                            m += u.get(r, j);
                        }
                        m /= n as f64;
                        let mut v = 0.0;
                        for r in 0..n {
                            let diff = u.get(r, j) - m;
                            v += diff * diff;
                        }
                        v /= n as f64;
                        batch_mean[j] = m;
                        batch_var[j] = v;
                    }
                    (batch_mean.clone(), batch_var.clone())
                }
                ForwardMode::Eval => (bn.running_mean.clone(), bn.running_var.clone()),
            };
            x_hat = Matrix::from_fn(n, d_out, |r, j| {
                (u.get(r, j) - mean[j]) / (var[j] + BN_EPS).sqrt()
            });
            u = Matrix::from_fn(n, d_out, |r, j| bn.gamma[j] * x_hat.get(r, j) + bn.beta[j]);
        }
        let pre_act = u.clone();
        if layer.relu {
            for v in u.data_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        caches.push(LayerCache {
            input,
            batch_mean,
            batch_var,
            x_hat,
            pre_act,
        });
        cur = u;
    }
    Ok((
        cur,
        ForwardCache {
            layers: caches,
            mode,
            batch: n,
        },
    ))
}

/// Exact backprop through linear / batchnorm / ReLU, including the batch
/// statistics terms in train mode. ReLU subgradient at 0 is 0.
pub fn mlp_backward(
    params: &MlpParams,
    cache: &ForwardCache,
    grad_features: &Matrix,
) -> Result<MlpGradients> {
    let n = cache.batch;
    if grad_features.rows() != n || grad_features.cols() != params.output_dim() {
        return Err(DdclError::shape(
            "mlp_backward",
            format!("{}x{} upstream gradient", n, params.output_dim()),
            format!("{}x{}", grad_features.rows(), grad_features.cols()),
        ));
    }
    let mut grad = grad_features.clone();
    let mut layer_grads: Vec<LayerGrads> = Vec::with_capacity(params.layers.len());
    for (layer, lc) in params.layers.iter().zip(&cache.layers).rev() {
        if lc.input.rows() != n {
            return Err(DdclError::shape(
                "mlp_backward",
                format!("cache for batch of {n}"),
                format!("{}", lc.input.rows()),
            ));
        }
        let d_out = layer.w.cols();
        if layer.relu {
            for r in 0..n {
                for j in 0..d_out {
                    if lc.pre_act.get(r, j) <= 0.0 {
                        grad.set(r, j, 0.0);
                    }
                }
            }
        }
        let (mut g_gamma, mut g_beta) = (vec![0.0; d_out], vec![0.0; d_out]);
        if let Some(bn) = &layer.bn {
            for j in 0..d_out {
                for r in 0..n {
                    g_gamma[j] += grad.get(r, j) * lc.x_hat.get(r, j);
                    g_beta[j] += grad.get(r, j);
                }
            }
            match cache.mode {
                ForwardMode::Train => {
                    // d/du of y = gamma * (u - mean)/sqrt(var + eps) + beta
                    // with mean/var functions of the batch
                    let mut next = Matrix::zeros(n, d_out);
                    for j in 0..d_out {
                        let inv_std = 1.0 / (lc.batch_var[j] + BN_EPS).sqrt();
                        let mut sum_dxhat = 0.0;
                        let mut sum_dxhat_xhat = 0.0;
                        for r in 0..n {
                            let dxh = grad.get(r, j) * bn.gamma[j];
                            sum_dxhat += dxh;
                            sum_dxhat_xhat += dxh * lc.x_hat.get(r, j);
                        }
                        for r in 0..n {
                            let dxh = grad.get(r, j) * bn.gamma[j];
                            let du = inv_std / n as f64
                                * (n as f64 * dxh
                                    - sum_dxhat
                                    - lc.x_hat.get(r, j) * sum_dxhat_xhat);
                            next.set(r, j, du);
                        }
                    }
                    grad = next;
                }
                ForwardMode::Eval => {
                    for j in 0..d_out {
                        let inv_std = 1.0 / (bn.running_var[j] + BN_EPS).sqrt();
                        for r in 0..n {
                            grad.set(r, j, grad.get(r, j) * bn.gamma[j] * inv_std);
                        }
                    }
                }
            }
        }
        let g_w = lc.input.transpose().matmul(&grad)?;
        let mut g_b = vec![0.0; d_out];
        for j in 0..d_out {
            for r in 0..n {
                g_b[j] += grad.get(r, j);
            }
        }
        grad = grad.matmul(&layer.w.transpose())?;
        layer_grads.push(LayerGrads {
            w: g_w,
            b: g_b,
            gamma: g_gamma,
            beta: g_beta,
        });
    }
    layer_grads.reverse();
    Ok(MlpGradients {
        layers: layer_grads,
        grad_input: grad,
    })
}

/// Plain SGD step with optional momentum buffers.
#[derive(Debug, Clone)]
pub struct SgdState {
    momentum: f64,
    velocity: Option<Vec<LayerGrads>>,
}

impl SgdState {
    pub fn new(momentum: f64) -> Self {
        SgdState {
            momentum,
            velocity: None,
        }
    }

    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpGradients, lr: f64) {
        let effective: Vec<LayerGrads> = if self.momentum > 0.0 {
            let vel = self.velocity.get_or_insert_with(|| {
                grads
                    .layers
                    .iter()
                    .map(|g| LayerGrads {
                        w: Matrix::zeros(g.w.rows(), g.w.cols()),
                        b: vec![0.0; g.b.len()],
                        gamma: vec![0.0; g.gamma.len()],
                        beta: vec![0.0; g.beta.len()],
                    })
                    .collect()
            });
            for (v, g) in vel.iter_mut().zip(&grads.layers) {
                v.w.scale(self.momentum);
                v.w.add_scaled(&g.w, 1.0);
                for (a, b) in v.b.iter_mut().zip(&g.b) {
                    *a = self.momentum * *a + b;
                }
                for (a, b) in v.gamma.iter_mut().zip(&g.gamma) {
                    *a = self.momentum * *a + b;
                }
                for (a, b) in v.beta.iter_mut().zip(&g.beta) {
                    *a = self.momentum * *a + b;
                }
            }
            vel.clone()
        } else {
            grads.layers.clone()
        };
        for (layer, g) in params.layers.iter_mut().zip(&effective) {
            layer.w.add_scaled(&g.w, -lr);
            for (b, gb) in layer.b.iter_mut().zip(&g.b) {
                *b -= lr * gb;
            }
            if let Some(bn) = layer.bn.as_mut() {
                for (x, gx) in bn.gamma.iter_mut().zip(&g.gamma) {
                    *x -= lr * gx;
                }
                for (x, gx) in bn.beta.iter_mut().zip(&g.beta) {
                    *x -= lr * gx;
                }
            }
        }
    }
}

/// Hutchinson estimate of the feature-Jacobian Frobenius norm at a probe
/// input: sqrt of the mean of ‖Jv‖² over seeded standard-normal directions,
/// with forward-difference Jacobian-vector products in eval mode.
pub fn jacobian_norm_estimate(
    params: &MlpParams,
    z_probe: &[f64],
    iters: usize,
    seed: u64,
) -> Result<f64> {
    if iters == 0 {
        return Err(DdclError::InvalidConfig(
            "jacobian_norm_estimate needs iters >= 1".into(),
        ));
    }
    let d = params.input_dim();
    if z_probe.len() != d {
        return Err(DdclError::shape(
            "jacobian_norm_estimate",
            format!("probe of dim {d}"),
            format!("{}", z_probe.len()),
        ));
    }
    let h = 1e-6;
    let base = Matrix::from_vec_unchecked(1, d, z_probe.to_vec());
    let (f0, _) = mlp_forward(params, &base, ForwardMode::Eval)?;
    let mut rng = Rng::new(seed);
    let mut acc = 0.0;
    for _ in 0..iters {
        let v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let probe = Matrix::from_vec_unchecked(
            1,
            d,
            z_probe.iter().zip(&v).map(|(z, vi)| z + h * vi).collect(),
        );
        let (f1, _) = mlp_forward(params, &probe, ForwardMode::Eval)?;
        let jv_sq: f64 = f0
            .row(0)
            .iter()
            .zip(f1.row(0))
            .map(|(a, b)| {
                let jv = (b - a) / h;
                jv * jv
            })
            .sum();
        acc += jv_sq;
    }
    Ok((acc / iters as f64).sqrt())
}

/// Flat CSV checkpoint: one line per tensor,
/// `layer,tensor,rows,cols,v0,v1,...` in row-major order.
pub fn save_checkpoint(params: &MlpParams, path: &std::path::Path) -> Result<()> {
    let mut out = String::new();
    for (l, layer) in params.layers.iter().enumerate() {
        let mut tensor = |name: &str, rows: usize, cols: usize, vals: &[f64]| {
            out.push_str(&format!("{l},{name},{rows},{cols}"));
            for v in vals {
                out.push_str(&format!(",{v:.17e}"));
            }
            out.push('\n');
        };
        tensor("w", layer.w.rows(), layer.w.cols(), layer.w.data());
        tensor("b", 1, layer.b.len(), &layer.b);
        if let Some(bn) = &layer.bn {
            tensor("gamma", 1, bn.gamma.len(), &bn.gamma);
            tensor("beta", 1, bn.beta.len(), &bn.beta);
            tensor("running_mean", 1, bn.running_mean.len(), &bn.running_mean);
            tensor("running_var", 1, bn.running_var.len(), &bn.running_var);
        }
    }
    std::fs::write(path, out).map_err(|e| DdclError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Load a checkpoint saved by [`save_checkpoint`] into matching parameters.
pub fn load_checkpoint(params: &mut MlpParams, path: &std::path::Path) -> Result<()> {
    let text = std::fs::read_to_string(path).map_err(|e| DdclError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    for (lineno, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 5 {
            return Err(DdclError::Csv {
                row: lineno,
                col: 0,
                msg: "checkpoint line needs layer,tensor,rows,cols,values".into(),
            });
        }
        let parse = |s: &str, col: usize| -> Result<f64> {
            s.parse().map_err(|_| DdclError::Csv {
                row: lineno,
                col,
                msg: format!("not a number: {s}"),
            })
        };
        let l: usize = fields[0].parse().map_err(|_| DdclError::Csv {
            row: lineno,
            col: 0,
            msg: "bad layer index".into(),
        })?;
        let rows: usize = fields[2].parse().unwrap_or(0);
        let cols: usize = fields[3].parse().unwrap_or(0);
        let mut vals = Vec::with_capacity(rows * cols);
        for (i, f) in fields[4..].iter().enumerate() {
            vals.push(parse(f, 4 + i)?);
        }
        if vals.len() != rows * cols {
            return Err(DdclError::Csv {
                row: lineno,
                col: 4,
                msg: format!("expected {} values, got {}", rows * cols, vals.len()),
            });
        }
        let layer = params.layers.get_mut(l).ok_or_else(|| DdclError::Csv {
            row: lineno,
            col: 0,
            msg: format!("no layer {l} in target"),
        })?;
        match fields[1] {
            "w" => layer.w = Matrix::from_vec(rows, cols, vals)?,
            "b" => layer.b = vals,
            "gamma" => layer.bn.as_mut().map(|bn| bn.gamma = vals).unwrap_or(()),
            "beta" => layer.bn.as_mut().map(|bn| bn.beta = vals).unwrap_or(()),
            "running_mean" => layer
                .bn
                .as_mut()
                .map(|bn| bn.running_mean = vals)
                .unwrap_or(()),
            "running_var" => layer
                .bn
                .as_mut()
                .map(|bn| bn.running_var = vals)
                .unwrap_or(()),
            other => {
                return Err(DdclError::Csv {
                    row: lineno,
                    col: 1,
                    msg: format!("unknown tensor {other}"),
                })
            }
        }
    }
    Ok(())
}
