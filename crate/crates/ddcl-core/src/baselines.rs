//! Comparison methods: Lloyd k-means with k-means++ seeding, single-pass
//! mini-batch k-means, PCA + standardization preprocessing, and a
//! DeepCluster-style alternating baseline sharing the MLP backbone.

use crate::assignment::hard_assign_batch;
use crate::backbone::{mlp_backward, mlp_forward, ForwardMode, MlpParams, SgdState};
use crate::datasets::LabeledDataset;
use crate::error::{DdclError, Result};
use crate::losses::log_softmax_row;
use crate::metrics;
use crate::numerics::{dot, sq_dist_to_col, sym_eig, Matrix, Rng};
use crate::parallel;

/// Result of a k-means fit.
#[derive(Debug, Clone)]
pub struct KmeansResult {
    /// Centroids as columns (d×k), matching the prototype convention.
    pub centroids: Matrix,
    pub labels: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
    pub n_init: usize,
}

pub(crate) fn kmeans_pp_seed(z: &Matrix, k: usize, rng: &mut Rng) -> Vec<usize> {
    let n = z.rows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.below(n));
    let mut min_d: Vec<f64> = (0..n)
        .map(|i| {
            z.row(i)
                .iter()
                .zip(z.row(chosen[0]))
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        })
        .collect();
    while chosen.len() < k {
        let total: f64 = min_d.iter().sum();
        let next = if total <= 0.0 {
            // all remaining mass at distance zero: fall back to uniform
            rng.below(n)
        } else {
            let mut target = rng.next_f64() * total;
            let mut pick = n - 1;
            for (i, &d) in min_d.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        };
        chosen.push(next);
        for i in 0..n {
            let d: f64 = z
                .row(i)
                .iter()
                .zip(z.row(next))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d < min_d[i] {
                min_d[i] = d;
            }
        }
    }
    chosen
}

fn lloyd_run(z: &Matrix, k: usize, max_iter: usize, rng: &mut Rng) -> KmeansResult {
    let (n, d) = (z.rows(), z.cols());
    let seeds = kmeans_pp_seed(z, k, rng);
    let mut centroids = Matrix::from_fn(d, k, |i, j| z.get(seeds[j], i));
    let mut labels = vec![0usize; n];
    let mut iterations = 0;
    for it in 0..max_iter {
        iterations = it + 1;
        let new_labels = hard_assign_batch(z, &centroids);
        // means per cluster
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (i, &c) in new_labels.iter().enumerate() {
            counts[c] += 1;
            for (s, &v) in sums[c].iter_mut().zip(z.row(i)) {
                *s += v;
            }
        }
        // empty clusters take the sample farthest from its own centroid
        let mut taken: Vec<usize> = Vec::new();
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let mut far = usize::MAX;
            let mut far_d = -1.0;
            for i in 0..n {
                if taken.contains(&i) {
                    continue;
                }
                let dist = sq_dist_to_col(z.row(i), &centroids, new_labels[i]);
                if dist > far_d {
                    far_d = dist;
                    far = i;
                }
            }
            taken.push(far);
            counts[c] = 1;
            sums[c] = z.row(far).to_vec();
        }
        let new_centroids = Matrix::from_fn(d, k, |i, j| sums[j][i] / counts[j] as f64);
        let converged = new_labels == labels && it > 0;
        labels = new_labels;
        centroids = new_centroids;
        if converged {
            break;
        }
    }
    let labels = hard_assign_batch(z, &centroids);
    let inertia = parallel::sum_indexed(n, |i| sq_dist_to_col(z.row(i), &centroids, labels[i]));
    KmeansResult {
        centroids,
        labels,
        inertia,
        iterations,
        n_init: 1,
    }
}

/// Best-of-`n_init` Lloyd k-means with k-means++ seeding and empty-cluster
/// reassignment. Deterministic given the seed; ties on inertia go to the
/// lowest restart index.
pub fn kmeans(z: &Matrix, k: usize, n_init: usize, max_iter: usize, seed: u64) -> Result<KmeansResult> {
    if z.rows() < k || k == 0 {
        return Err(DdclError::InvalidConfig(format!(
            "kmeans needs n >= k >= 1, got n={} k={k}",
            z.rows()
        )));
    }
    let seeds: Vec<u64> = {
        let mut root = Rng::new(seed);
        (0..n_init.max(1)).map(|_| root.next_u64()).collect()
    };
    let runs = parallel::map_indexed(seeds.len(), |r| {
        let mut rng = Rng::new(seeds[r]);
        lloyd_run(z, k, max_iter, &mut rng)
    });
    let mut best = 0;
    for (i, run) in runs.iter().enumerate() {
        if run.inertia < runs[best].inertia {
            best = i;
        }
    }
    let mut out = runs.into_iter().nth(best).unwrap();
    out.n_init = n_init.max(1);
    Ok(out)
}

/// Single-pass online k-means with per-center counts as step sizes:
/// on each batch, assign to the nearest center, then move each center
/// toward its assigned points with learning rate 1/count.
pub fn minibatch_kmeans(
    z: &Matrix,
    order: &[usize],
    k: usize,
    batch_size: usize,
    seed: u64,
) -> Result<KmeansResult> {
    if batch_size == 0 {
        return Err(DdclError::InvalidConfig("batch_size must be >= 1".into()));
    }
    if z.rows() < k {
        return Err(DdclError::InvalidConfig(format!(
            "minibatch_kmeans needs n >= k, got n={} k={k}",
            z.rows()
        )));
    }
    let d = z.cols();
    let mut rng = Rng::new(seed);
    // k-means++ seeding on the stream head
    let head: Vec<usize> = order.iter().copied().take(k.max(4 * batch_size)).collect();
    let head_z = Matrix::from_fn(head.len(), d, |i, j| z.get(head[i], j));
    let picks = kmeans_pp_seed(&head_z, k, &mut rng);
    let mut centroids = Matrix::from_fn(d, k, |i, j| z.get(head[picks[j]], i));
    let mut counts = vec![1usize; k];
    let mut steps = 0usize;
    for chunk in order.chunks(batch_size) {
        let assigned: Vec<usize> = chunk
            .iter()
            .map(|&i| crate::assignment::hard_assign(z.row(i), &centroids))
            .collect();
        for (&i, &c) in chunk.iter().zip(&assigned) {
            counts[c] += 1;
            let lr = 1.0 / counts[c] as f64;
            for r in 0..d {
                let cur = centroids.get(r, c);
                centroids.set(r, c, cur + lr * (z.get(i, r) - cur));
            }
        }
        steps += 1;
    }
    let labels = hard_assign_batch(z, &centroids);
    let inertia =
        parallel::sum_indexed(z.rows(), |i| sq_dist_to_col(z.row(i), &centroids, labels[i]));
    Ok(KmeansResult {
        centroids,
        labels,
        inertia,
        iterations: steps,
        n_init: 1,
    })
}

/// Options for [`pca_standardize`].
#[derive(Debug, Clone, Copy)]
pub struct PcaOptions {
    pub n_components: usize,
    pub whiten: bool,
    /// Per-feature zero-mean/unit-variance scaling of the projected scores.
    pub standardize: bool,
}

/// Fitted PCA transform: center, projection directions (columns), and the
/// scaling applied to the scores.
#[derive(Debug, Clone)]
pub struct PcaTransform {
    pub mean: Vec<f64>,
    pub components: Matrix,
    pub eigenvalues: Vec<f64>,
    pub score_scale: Vec<f64>,
    pub score_shift: Vec<f64>,
}

impl PcaTransform {
    pub fn apply(&self, z: &Matrix) -> Matrix {
        let (n, m) = (z.rows(), self.components.cols());
        Matrix::from_fn(n, m, |i, j| {
            let mut acc = 0.0;
            for r in 0..z.cols() {
                acc += (z.get(i, r) - self.mean[r]) * self.components.get(r, j);
            }
            (acc - self.score_shift[j]) * self.score_scale[j]
        })
    }
}

/// Center, project onto the top principal directions, then optionally
/// whiten and standardize. Uses the covariance eigenbasis when d <= n and
/// the Gram-matrix route otherwise; eigenvector signs follow the
/// largest-magnitude-component-positive convention.
pub fn pca_standardize(z: &Matrix, opts: PcaOptions) -> Result<(Matrix, PcaTransform)> {
    let (n, d) = (z.rows(), z.cols());
    let m = opts.n_components;
    if m == 0 || m > n.min(d) {
        return Err(DdclError::InvalidConfig(format!(
            "n_components must be in [1, min(n, d)] = [1, {}], got {m}",
            n.min(d)
        )));
    }
    let mean: Vec<f64> = (0..d)
        .map(|j| (0..n).map(|i| z.get(i, j)).sum::<f64>() / n as f64)
        .collect();
    let centered = Matrix::from_fn(n, d, |i, j| z.get(i, j) - mean[j]);
    let denom = (n.max(2) - 1) as f64;

    let (eigenvalues, components) = if d <= n {
        let cov = {
            let ct = centered.transpose();
            let mut c = ct.matmul(&centered)?;
            c.scale(1.0 / denom);
            c
        };
        let (vals, vecs) = sym_eig(&cov)?;
        let comp = Matrix::from_fn(d, m, |i, j| vecs.get(i, j));
        (vals[..m].to_vec(), comp)
    } else {
        // Gram route for d > n: eigenvectors of X Xᵀ map to Xᵀ u / ‖Xᵀ u‖
        let gram = {
            let mut g = centered.matmul(&centered.transpose())?;
            g.scale(1.0 / denom);
            g
        };
        let (vals, vecs) = sym_eig(&gram)?;
        let mut comp = Matrix::zeros(d, m);
        for j in 0..m {
            let u = vecs.col(j);
            let mut v = vec![0.0; d];
            for r in 0..n {
                for c in 0..d {
                    v[c] += centered.get(r, c) * u[r];
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
            // sign convention as in sym_eig
            let mut best = 0usize;
            for (i, x) in v.iter().enumerate() {
                if x.abs() > v[best].abs() {
                    best = i;
                }
            }
            let flip = if v[best] < 0.0 { -1.0 } else { 1.0 };
            for c in 0..d {
                comp.set(c, j, flip * v[c] / norm);
            }
        }
        (vals[..m].to_vec(), comp)
    };

    let scores = centered.matmul(&components)?;
    let mut score_scale = vec![1.0; m];
    let mut score_shift = vec![0.0; m];
    if opts.whiten {
        for j in 0..m {
            score_scale[j] = 1.0 / eigenvalues[j].max(1e-12).sqrt();
        }
    }
    if opts.standardize {
        // subsumes whitening: zero-mean unit-variance scores per component
        for j in 0..m {
            let col_mean: f64 = (0..n).map(|i| scores.get(i, j)).sum::<f64>() / n as f64;
            let sd: f64 = ((0..n)
                .map(|i| (scores.get(i, j) - col_mean).powi(2))
                .sum::<f64>()
                / n as f64)
                .sqrt()
                .max(1e-12);
            score_shift[j] = col_mean;
            score_scale[j] = 1.0 / sd;
        }
    }
    let out = Matrix::from_fn(scores.rows(), m, |i, j| {
        (scores.get(i, j) - score_shift[j]) * score_scale[j]
    });
    Ok((
        out,
        PcaTransform {
            mean,
            components,
            eigenvalues,
            score_scale,
            score_shift,
        },
    ))
}

/// Row-wise ℓ₂ normalization (zero rows left untouched).
pub fn l2_normalize_rows(z: &Matrix) -> Matrix {
    Matrix::from_fn(z.rows(), z.cols(), |i, j| {
        let norm = z.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            z.get(i, j) / norm
        } else {
            z.get(i, j)
        }
    })
}

/// Configuration for [`deepcluster_lite`].
#[derive(Debug, Clone)]
pub struct DeepClusterConfig {
    pub k: usize,
    pub rounds: usize,
    /// Hidden/output dims of an MLP backbone; None runs on frozen features.
    pub backbone_dims: Option<Vec<usize>>,
    pub pca_components: Option<usize>,
    pub whiten: bool,
    pub l2_normalize: bool,
    pub kmeans_n_init: usize,
    pub head_epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

/// Per-round metrics of the alternating baseline.
#[derive(Debug, Clone)]
pub struct DeepClusterTrace {
    pub rows: Vec<(usize, Option<f64>, Option<f64>, Option<f64>)>,
}

/// DeepCluster-style alternating baseline: preprocess features, k-means for
/// pseudo-labels, then train a linear head (and the backbone when present)
/// on the pseudo-labels with inverse-cluster-frequency sample weights.
/// Returns the final pseudo-labels and the per-round metric trace.
pub fn deepcluster_lite(
    data: &LabeledDataset,
    config: &DeepClusterConfig,
) -> Result<(Vec<usize>, DeepClusterTrace)> {
    let mut rng = Rng::new(config.seed);
    let x = &data.features;
    let n = x.rows();
    if n < config.k {
        return Err(DdclError::InvalidConfig(format!(
            "deepcluster_lite needs n >= k, got n={n} k={}",
            config.k
        )));
    }
    let mut backbone = match &config.backbone_dims {
        Some(dims) => {
            let mut full = vec![x.cols()];
            full.extend_from_slice(dims);
            Some(MlpParams::new(&full, &mut rng)?)
        }
        None => None,
    };
    let feat_dim = backbone
        .as_ref()
        .map(|b| b.output_dim())
        .unwrap_or(x.cols());
    let mut head_w = Matrix::randn(feat_dim, config.k, &mut rng);
    head_w.scale(0.01);
    let mut head_b = vec![0.0; config.k];
    let mut sgd = SgdState::new(0.0);
    let mut labels: Vec<usize> = vec![0; n];
    let mut trace = DeepClusterTrace { rows: Vec::new() };

    for round in 0..config.rounds {
        // extract features
        let feats = match &backbone {
            Some(bb) => mlp_forward(bb, x, ForwardMode::Eval)?.0,
            None => x.clone(),
        };
        // preprocess for the clustering stage
        let mut zc = feats.clone();
        if let Some(m) = config.pca_components {
            let m = m.min(zc.rows().min(zc.cols()));
            let (proj, _) = pca_standardize(
                &zc,
                PcaOptions {
                    n_components: m,
                    whiten: config.whiten,
                    standardize: false,
                },
            )?;
            zc = proj;
        }
        if config.l2_normalize {
            zc = l2_normalize_rows(&zc);
        }
        let km = kmeans(&zc, config.k, config.kmeans_n_init, 100, rng.next_u64())?;
        labels = km.labels;

        // inverse-frequency sample weights (uniform cluster sampling)
        let mut counts = vec![0usize; config.k];
        for &l in &labels {
            counts[l] += 1;
        }
        let weights: Vec<f64> = labels
            .iter()
            .map(|&l| 1.0 / counts[l].max(1) as f64)
            .collect();
        let wsum: f64 = weights.iter().sum();

        // head (+ backbone) training on pseudo-labels
        for _ in 0..config.head_epochs {
            let (feats, cache) = match &backbone {
                Some(bb) => {
                    let (f, c) = mlp_forward(bb, x, ForwardMode::Train)?;
                    (f, Some(c))
                }
                None => (x.clone(), None),
            };
            // logits and CE gradient rows
            let mut grad_logits = Matrix::zeros(n, config.k);
            for i in 0..n {
                let logits: Vec<f64> = (0..config.k)
                    .map(|j| dot(feats.row(i), &head_w.col(j)) + head_b[j])
                    .collect();
                let logp = log_softmax_row(&logits);
                let w = weights[i] / wsum;
                for j in 0..config.k {
                    let p = logp[j].exp();
                    let t = if labels[i] == j { 1.0 } else { 0.0 };
                    grad_logits.set(i, j, w * (p - t));
                }
            }
            // head gradients
            let grad_w = feats.transpose().matmul(&grad_logits)?;
            let mut grad_b = vec![0.0; config.k];
            for j in 0..config.k {
                for i in 0..n {
                    grad_b[j] += grad_logits.get(i, j);
                }
            }
            // backbone gradient through the head
            if let (Some(bb), Some(cache)) = (backbone.as_mut(), cache.as_ref()) {
                let grad_feats = grad_logits.matmul(&head_w.transpose())?;
                let grads = mlp_backward(bb, cache, &grad_feats)?;
                sgd.step(bb, &grads, config.lr);
                bb.update_running_stats(cache);
            }
            head_w.add_scaled(&grad_w, -config.lr);
            for (b, g) in head_b.iter_mut().zip(&grad_b) {
                *b -= config.lr * g;
            }
        }

        let (acc, nmi_v, ari_v) = match &data.labels {
            Some(truth) => (
                Some(metrics::clustering_accuracy(truth, &labels)?),
                Some(metrics::nmi(truth, &labels)?),
                Some(metrics::ari(truth, &labels)?),
            ),
            None => (None, None, None),
        };
        trace.rows.push((round, acc, nmi_v, ari_v));
    }
    Ok((labels, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{make_blobs, make_moons};

    #[test]
    fn kmeans_perfect_when_k_equals_n() {
        let mut rng = Rng::new(1);
        let z = Matrix::randn(5, 2, &mut rng);
        let r = kmeans(&z, 5, 5, 50, 7).unwrap();
        assert!(r.inertia < 1e-12);
    }

    #[test]
    fn kmeans_symmetric_pairs() {
        let z = Matrix::from_rows(vec![
            vec![-1.0, 0.0],
            vec![-1.2, 0.0],
            vec![4.0, 0.0],
            vec![4.2, 0.0],
        ])
        .unwrap();
        let r = kmeans(&z, 2, 10, 50, 3).unwrap();
        let mut cols: Vec<f64> = (0..2).map(|j| r.centroids.get(0, j)).collect();
        cols.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((cols[0] + 1.1).abs() < 1e-9);
        assert!((cols[1] - 4.1).abs() < 1e-9);
    }

    #[test]
    fn kmeans_beats_random_centroid_draws() {
        let mut rng = Rng::new(5);
        let z = Matrix::randn(20, 2, &mut rng);
        let fit = kmeans(&z, 3, 10, 100, 11).unwrap();
        let mut oracle_best = f64::INFINITY;
        for _ in 0..1000 {
            let picks = rng.sample_without_replacement(20, 3);
            let c = Matrix::from_fn(2, 3, |i, j| z.get(picks[j], i));
            let labels = hard_assign_batch(&z, &c);
            let inertia: f64 = (0..20)
                .map(|i| sq_dist_to_col(z.row(i), &c, labels[i]))
                .sum();
            oracle_best = oracle_best.min(inertia);
        }
        assert!(fit.inertia <= oracle_best + 1e-9);
    }

    #[test]
    fn kmeans_inertia_matches_label_distances() {
        let data = make_blobs(60, 3, 5.0, 0.4, 2).unwrap();
        let r = kmeans(&data.features, 3, 5, 100, 13).unwrap();
        let direct: f64 = (0..60)
            .map(|i| sq_dist_to_col(data.features.row(i), &r.centroids, r.labels[i]))
            .sum();
        assert!((direct - r.inertia).abs() < 1e-9);
    }

    #[test]
    fn kmeans_rejects_small_n() {
        let z = Matrix::zeros(2, 2);
        assert!(kmeans(&z, 3, 1, 10, 0).is_err());
    }

    #[test]
    fn lloyd_inertia_non_increasing_within_one_init() {
        // run Lloyd manually and watch the objective
        let data = make_blobs(80, 4, 6.0, 0.8, 3).unwrap();
        let z = &data.features;
        let mut rng = Rng::new(17);
        let seeds = kmeans_pp_seed(z, 4, &mut rng);
        let mut c = Matrix::from_fn(2, 4, |i, j| z.get(seeds[j], i));
        let mut last = f64::INFINITY;
        for _ in 0..20 {
            let labels = hard_assign_batch(z, &c);
            let inertia: f64 = (0..z.rows())
                .map(|i| sq_dist_to_col(z.row(i), &c, labels[i]))
                .sum();
            assert!(inertia <= last + 1e-9);
            last = inertia;
            let mut sums = vec![vec![0.0; 2]; 4];
            let mut counts = vec![0usize; 4];
            for (i, &l) in labels.iter().enumerate() {
                counts[l] += 1;
                for (s, &v) in sums[l].iter_mut().zip(z.row(i)) {
                    *s += v;
                }
            }
            for j in 0..4 {
                if counts[j] > 0 {
                    for i in 0..2 {
                        c.set(i, j, sums[j][i] / counts[j] as f64);
                    }
                }
            }
        }
    }

    #[test]
    fn minibatch_single_cluster_converges_to_mean() {
        let mut rng = Rng::new(7);
        let z = Matrix::from_fn(500, 2, |_, j| 3.0 * f64::from(j == 0) + 0.3 * rng.normal());
        let order: Vec<usize> = (0..500).collect();
        let r = minibatch_kmeans(&z, &order, 1, 50, 9).unwrap();
        let mean0: f64 = (0..500).map(|i| z.get(i, 0)).sum::<f64>() / 500.0;
        assert!((r.centroids.get(0, 0) - mean0).abs() / mean0.abs() < 0.01);
    }

    #[test]
    fn minibatch_deterministic_and_accurate_on_blobs() {
        let data = make_blobs(400, 4, 6.0, 0.5, 21).unwrap();
        let mut order: Vec<usize> = (0..400).collect();
        let mut rng = Rng::new(33);
        rng.shuffle(&mut order);
        let a = minibatch_kmeans(&data.features, &order, 4, 50, 5).unwrap();
        let b = minibatch_kmeans(&data.features, &order, 4, 50, 5).unwrap();
        assert_eq!(a.labels, b.labels);
        let acc =
            metrics::clustering_accuracy(data.labels.as_ref().unwrap(), &a.labels).unwrap();
        assert!(acc > 0.9, "acc {acc}");
    }

    #[test]
    fn pca_line_reconstructs() {
        // data on a line in 2-D: one component explains everything
        let mut rng = Rng::new(11);
        let z = Matrix::from_fn(40, 2, |i, j| {
            let t = i as f64 / 10.0 + 0.001 * rng.normal() * 0.0;
            if j == 0 {
                t
            } else {
                2.0 * t + 1.0
            }
        });
        let (proj, tf) = pca_standardize(
            &z,
            PcaOptions {
                n_components: 1,
                whiten: false,
                standardize: false,
            },
        )
        .unwrap();
        // reconstruction error via the single direction
        let mut err = 0.0;
        for i in 0..40 {
            for j in 0..2 {
                let rec = tf.mean[j] + proj.get(i, 0) * tf.components.get(j, 0);
                err += (z.get(i, j) - rec).powi(2);
            }
        }
        assert!(err < 1e-18);
    }

    #[test]
    fn pca_orthonormal_and_diagonalizes() {
        let mut rng = Rng::new(13);
        let z = Matrix::randn(50, 6, &mut rng);
        let (proj, tf) = pca_standardize(
            &z,
            PcaOptions {
                n_components: 4,
                whiten: false,
                standardize: false,
            },
        )
        .unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let d = dot(&tf.components.col(a), &tf.components.col(b));
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-10);
            }
        }
        // projected covariance diagonal
        let n = 50.0;
        for a in 0..4 {
            for b in 0..4 {
                if a == b {
                    continue;
                }
                let ma: f64 = (0..50).map(|i| proj.get(i, a)).sum::<f64>() / n;
                let mb: f64 = (0..50).map(|i| proj.get(i, b)).sum::<f64>() / n;
                let cov: f64 = (0..50)
                    .map(|i| (proj.get(i, a) - ma) * (proj.get(i, b) - mb))
                    .sum::<f64>()
                    / (n - 1.0);
                assert!(cov.abs() < 1e-8, "cov({a},{b}) = {cov}");
            }
        }
    }

    #[test]
    fn pca_gram_route_matches_covariance_route() {
        // same data seen tall (n > d) and wide (d > n) must give the same
        // projected geometry
        let mut rng = Rng::new(15);
        let z = Matrix::randn(10, 4, &mut rng);
        let (proj_a, _) = pca_standardize(
            &z,
            PcaOptions {
                n_components: 3,
                whiten: false,
                standardize: false,
            },
        )
        .unwrap();
        // embed in 30 dims via a fixed orthogonal-ish padding (zeros)
        let z_wide = Matrix::from_fn(10, 30, |i, j| if j < 4 { z.get(i, j) } else { 0.0 });
        let (proj_b, _) = pca_standardize(
            &z_wide,
            PcaOptions {
                n_components: 3,
                whiten: false,
                standardize: false,
            },
        )
        .unwrap();
        for i in 0..10 {
            for j in 0..3 {
                assert!(
                    (proj_a.get(i, j).abs() - proj_b.get(i, j).abs()).abs() < 1e-8,
                    "({i},{j})"
                );
            }
        }
    }

    #[test]
    fn pca_standardize_gives_unit_variance() {
        let mut rng = Rng::new(17);
        let z = Matrix::randn(60, 5, &mut rng);
        let (proj, _) = pca_standardize(
            &z,
            PcaOptions {
                n_components: 3,
                whiten: false,
                standardize: true,
            },
        )
        .unwrap();
        for j in 0..3 {
            let m: f64 = (0..60).map(|i| proj.get(i, j)).sum::<f64>() / 60.0;
            let v: f64 = (0..60).map(|i| (proj.get(i, j) - m).powi(2)).sum::<f64>() / 60.0;
            assert!(m.abs() < 1e-10);
            assert!((v - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn pca_rejects_too_many_components() {
        let z = Matrix::zeros(5, 3);
        assert!(pca_standardize(
            &z,
            PcaOptions {
                n_components: 4,
                whiten: false,
                standardize: false
            }
        )
        .is_err());
    }

    #[test]
    fn deepcluster_easy_blobs_reach_high_acc() {
        let data = make_blobs(120, 3, 8.0, 0.3, 19).unwrap();
        let config = DeepClusterConfig {
            k: 3,
            rounds: 1,
            backbone_dims: None,
            pca_components: None,
            whiten: false,
            l2_normalize: false,
            kmeans_n_init: 10,
            head_epochs: 5,
            lr: 0.1,
            seed: 7,
        };
        let (labels, trace) = deepcluster_lite(&data, &config).unwrap();
        let acc = metrics::clustering_accuracy(data.labels.as_ref().unwrap(), &labels).unwrap();
        assert!(acc > 0.95, "acc {acc}");
        assert_eq!(trace.rows.len(), 1);
    }

    #[test]
    fn deepcluster_moons_comparable_to_kmeans() {
        let data = make_moons(200, 0.05, 23).unwrap();
        let config = DeepClusterConfig {
            k: 2,
            rounds: 2,
            backbone_dims: None,
            pca_components: None,
            whiten: false,
            l2_normalize: false,
            kmeans_n_init: 10,
            head_epochs: 5,
            lr: 0.1,
            seed: 9,
        };
        let (labels, _) = deepcluster_lite(&data, &config).unwrap();
        let acc_dc =
            metrics::clustering_accuracy(data.labels.as_ref().unwrap(), &labels).unwrap();
        let km = kmeans(&data.features, 2, 10, 100, 4).unwrap();
        let acc_km =
            metrics::clustering_accuracy(data.labels.as_ref().unwrap(), &km.labels).unwrap();
        assert!((acc_dc - acc_km).abs() < 0.15, "dc {acc_dc} vs km {acc_km}");
    }
}
