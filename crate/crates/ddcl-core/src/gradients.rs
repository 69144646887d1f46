//! Exact analytic gradients of the per-sample losses with stop-gradient
//! semantics, plus the finite-difference verification harness.
//!
//! All formulas are hand-derived; the FD oracle is the test-side check, never
//! the implementation path.

use crate::assignment::{sigma, soft_assign};
use crate::error::{DdclError, Result};
use crate::losses::mixture;
use crate::numerics::{sq_dist_to_col, sq_norm, Matrix};
use crate::simplex::AssignmentVector;

/// Loss selector for assignment-space gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QLossKind {
    Quantization,
    Ols,
    Variance,
}

/// Loss selector for prototype-space gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PLossKind {
    Quantization,
    Ols,
    Variance,
    Separation,
    Quadratic,
}

/// Loss selector for feature-space gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZLossKind {
    Quantization,
    Ols,
}

/// ∇_q of the selected per-sample loss at fixed (z, P).
pub fn grad_q(kind: QLossKind, z: &[f64], p: &Matrix, q: &AssignmentVector) -> Result<Vec<f64>> {
    if z.len() != p.rows() || q.k() != p.cols() {
        return Err(DdclError::shape(
            "grad_q",
            format!("z len {}, q len {}", p.rows(), p.cols()),
            format!("{}, {}", z.len(), q.k()),
        ));
    }
    let k = p.cols();
    Ok(match kind {
        // distance vector; constant in q
        QLossKind::Quantization => (0..k).map(|j| sq_dist_to_col(z, p, j)).collect(),
        QLossKind::Ols => {
            let pbar = mixture(p, q);
            let resid: Vec<f64> = pbar.iter().zip(z).map(|(a, b)| a - b).collect();
            (0..k)
                .map(|j| 2.0 * (0..p.rows()).map(|i| p.get(i, j) * resid[i]).sum::<f64>())
                .collect()
        }
        QLossKind::Variance => {
            let pbar = mixture(p, q);
            (0..k)
                .map(|j| {
                    let col_sq: f64 = (0..p.rows()).map(|i| p.get(i, j) * p.get(i, j)).sum();
                    let proj: f64 = (0..p.rows()).map(|i| p.get(i, j) * pbar[i]).sum();
                    col_sq - 2.0 * proj
                })
                .collect()
        }
    })
}

/// ∇_P of the selected per-sample loss at fixed (z, q).
///
/// `lambda` is only read for the quadratic term (λ/2)‖P‖², whose gradient is
/// λP; the separation gradient is returned unweighted.
pub fn grad_p(
    kind: PLossKind,
    z: &[f64],
    p: &Matrix,
    q: &AssignmentVector,
    lambda: f64,
) -> Result<Matrix> {
    let (d, k) = (p.rows(), p.cols());
    if matches!(kind, PLossKind::Quantization | PLossKind::Ols | PLossKind::Variance)
        && (z.len() != d || q.k() != k)
    {
        return Err(DdclError::shape(
            "grad_p",
            format!("z len {d}, q len {k}"),
            format!("{}, {}", z.len(), q.k()),
        ));
    }
    Ok(match kind {
        // 2 (P − z 1ᵀ) diag(q)
        PLossKind::Quantization => {
            let qs = q.as_slice();
            Matrix::from_fn(d, k, |i, j| 2.0 * (p.get(i, j) - z[i]) * qs[j])
        }
        // 2 (P q − z) qᵀ
        PLossKind::Ols => {
            let pbar = mixture(p, q);
            let qs = q.as_slice();
            Matrix::from_fn(d, k, |i, j| 2.0 * (pbar[i] - z[i]) * qs[j])
        }
        // 2 P Σ_q
        PLossKind::Variance => {
            let s = sigma(q).sigma;
            let mut g = p.matmul(&s).expect("k x k");
            g.scale(2.0);
            g
        }
        // column j of ∇(−Σ_{i<j}‖p_i − p_j‖²) is −2 Σ_{i≠j} (p_j − p_i)
        PLossKind::Separation => {
            let mut colsum = vec![0.0; d];
            for i in 0..d {
                colsum[i] = (0..k).map(|j| p.get(i, j)).sum();
            }
            Matrix::from_fn(d, k, |i, j| {
                -2.0 * (k as f64 * p.get(i, j) - colsum[i])
            })
        }
        PLossKind::Quadratic => {
            let mut g = p.clone();
            g.scale(lambda);
            g
        }
    })
}

/// ∇_z of the selected per-sample loss, with q recomputed internally as
/// soft_assign(z, P, T).
///
/// Stop-gradient treats q as a constant: both losses reduce to 2 (z − P q).
/// The full gradient adds the chain-rule term through the softmax,
/// (2/T) P Σ_q ∇_q(loss).
pub fn grad_z(
    kind: ZLossKind,
    z: &[f64],
    p: &Matrix,
    t: f64,
    stop_gradient: bool,
) -> Result<Vec<f64>> {
    let q = soft_assign(z, p, t)?;
    grad_z_with_q(kind, z, p, &q, t, stop_gradient)
}

/// As [`grad_z`] but with the soft assignment supplied by the caller (the
/// trainers already have it).
pub fn grad_z_with_q(
    kind: ZLossKind,
    z: &[f64],
    p: &Matrix,
    q: &AssignmentVector,
    t: f64,
    stop_gradient: bool,
) -> Result<Vec<f64>> {
    let pbar = mixture(p, q);
    let mut g: Vec<f64> = z.iter().zip(&pbar).map(|(a, b)| 2.0 * (a - b)).collect();
    if stop_gradient {
        return Ok(g);
    }
    let gq = match kind {
        ZLossKind::Quantization => grad_q(QLossKind::Quantization, z, p, q)?,
        ZLossKind::Ols => grad_q(QLossKind::Ols, z, p, q)?,
    };
    g.iter_mut()
        .zip(chain_correction(p, q, &gq, t))
        .for_each(|(a, b)| *a += b);
    Ok(g)
}

/// The softmax chain-rule term (2/T) P Σ_q g for a length-k co-gradient g.
pub fn chain_correction(p: &Matrix, q: &AssignmentVector, g: &[f64], t: f64) -> Vec<f64> {
    let s = sigma(q).sigma;
    let k = p.cols();
    let mut sg = vec![0.0; k];
    for i in 0..k {
        sg[i] = (0..k).map(|j| s.get(i, j) * g[j]).sum();
    }
    let d = p.rows();
    let mut out = vec![0.0; d];
    for i in 0..d {
        out[i] = (2.0 / t) * (0..k).map(|j| p.get(i, j) * sg[j]).sum::<f64>();
    }
    out
}

/// Side-by-side analytic vs central-finite-difference gradient report.
#[derive(Debug, Clone)]
pub struct GradReport {
    pub analytic: Matrix,
    pub numeric: Matrix,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

impl GradReport {
    /// Entrywise gate: each entry must satisfy the relative tolerance or be
    /// absolutely tiny (near-zero true gradients sit below the cancellation
    /// noise floor of central differences).
    pub fn passes(&self, rel_tol: f64, abs_escape: f64) -> bool {
        self.analytic
            .data()
            .iter()
            .zip(self.numeric.data())
            .all(|(a, n)| {
                let abs = (a - n).abs();
                let rel = abs / a.abs().max(n.abs()).max(1e-10);
                rel <= rel_tol || abs <= abs_escape
            })
    }
}

/// Central finite differences of a scalar function at `point`, compared
/// entrywise against the supplied analytic gradient.
///
/// Relative errors use max(|analytic|, |numeric|, 1e−10) denominators.
pub fn finite_diff_check<F>(loss: F, analytic: &Matrix, point: &Matrix, h: f64) -> Result<GradReport>
where
    F: Fn(&Matrix) -> f64,
{
    if !(1e-8..=1e-2).contains(&h) {
        return Err(DdclError::InvalidConfig(format!(
            "finite-difference step {h} outside [1e-8, 1e-2]"
        )));
    }
    if (analytic.rows(), analytic.cols()) != (point.rows(), point.cols()) {
        return Err(DdclError::shape(
            "finite_diff_check",
            format!("{}x{}", point.rows(), point.cols()),
            format!("{}x{}", analytic.rows(), analytic.cols()),
        ));
    }
    let mut numeric = Matrix::zeros(point.rows(), point.cols());
    let mut probe = point.clone();
    for r in 0..point.rows() {
        for c in 0..point.cols() {
            let orig = probe.get(r, c);
            probe.set(r, c, orig + h);
            let plus = loss(&probe);
            probe.set(r, c, orig - h);
            let minus = loss(&probe);
            probe.set(r, c, orig);
            numeric.set(r, c, (plus - minus) / (2.0 * h));
        }
    }
    let mut max_rel = 0.0f64;
    let mut max_abs = 0.0f64;
    for (a, n) in analytic.data().iter().zip(numeric.data()) {
        let abs = (a - n).abs();
        let rel = abs / a.abs().max(n.abs()).max(1e-10);
        max_abs = max_abs.max(abs);
        max_rel = max_rel.max(rel);
    }
    Ok(GradReport {
        analytic: analytic.clone(),
        numeric,
        max_rel_err: max_rel,
        max_abs_err: max_abs,
    })
}

/// First-order force separating a symmetric prototype perturbation
/// p_i = p* + εu, p_j = p* − εu: the component along u of the gradient
/// difference ∂L/∂p_i − ∂L/∂p_j for the two-prototype instance.
///
/// Returns (force under the quantization loss, force under the
/// reconstruction loss). With q from soft assignment and z − p* ⊥ u, the
/// first equals 2ε(q_i + q_j) and the second vanishes at first order.
pub fn collapse_forces(p_star: &[f64], u: &[f64], z: &[f64], eps: f64, t: f64) -> Result<(f64, f64)> {
    let d = p_star.len();
    if u.len() != d || z.len() != d {
        return Err(DdclError::shape(
            "collapse_forces",
            format!("vectors of length {d}"),
            format!("{}, {}", u.len(), z.len()),
        ));
    }
    let norm = sq_norm(u).sqrt();
    if norm == 0.0 {
        return Err(DdclError::DegenerateInput("direction u must be nonzero".into()));
    }
    let un: Vec<f64> = u.iter().map(|x| x / norm).collect();
    let p = Matrix::from_fn(d, 2, |i, j| {
        if j == 0 {
            p_star[i] + eps * un[i]
        } else {
            p_star[i] - eps * un[i]
        }
    });
    let q = soft_assign(z, &p, t)?;
    let g_lq = grad_p(PLossKind::Quantization, z, &p, &q, 0.0)?;
    let g_lols = grad_p(PLossKind::Ols, z, &p, &q, 0.0)?;
    let along = |g: &Matrix| -> f64 {
        (0..d).map(|i| (g.get(i, 0) - g.get(i, 1)) * un[i]).sum()
    };
    Ok((along(&g_lq), along(&g_lols)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{ols_loss_sample, quantization_loss_sample, variance_term_sample};
    use crate::numerics::Rng;

    fn random_q(k: usize, rng: &mut Rng) -> AssignmentVector {
        let raw: Vec<f64> = (0..k).map(|_| -rng.next_f64().max(1e-12).ln()).collect();
        let s: f64 = raw.iter().sum();
        AssignmentVector::from_normalized(raw.iter().map(|x| x / s).collect())
    }

    #[test]
    fn grad_q_quantization_is_distance_row() {
        let p = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 2.0]).unwrap();
        let q = AssignmentVector::uniform(2);
        let g = grad_q(QLossKind::Quantization, &[0.0, 0.0], &p, &q).unwrap();
        assert_eq!(g, vec![1.0, 4.0]);
    }

    #[test]
    fn grad_q_ols_zero_at_exact_reconstruction() {
        // P q = z
        let p = Matrix::from_vec(2, 2, vec![1.0, -1.0, 1.0, -1.0]).unwrap();
        let q = AssignmentVector::uniform(2);
        let g = grad_q(QLossKind::Ols, &[0.0, 0.0], &p, &q).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-15));
    }

    /// Finite differences over q restricted to sum-zero directions, matching
    /// the simplex-tangent degrees of freedom.
    fn fd_grad_q(
        loss: impl Fn(&AssignmentVector) -> f64,
        q: &AssignmentVector,
        h: f64,
    ) -> Vec<Vec<f64>> {
        // directions e_a - e_b for a < b, with the matching analytic
        // directional derivative computed by the caller
        let k = q.k();
        let mut dirs = Vec::new();
        for a in 0..k {
            for b in (a + 1)..k {
                let mut qp = q.as_slice().to_vec();
                let mut qm = q.as_slice().to_vec();
                qp[a] += h;
                qp[b] -= h;
                qm[a] -= h;
                qm[b] += h;
                let dd = (loss(&AssignmentVector::from_normalized_test(qp))
                    - loss(&AssignmentVector::from_normalized_test(qm)))
                    / (2.0 * h);
                let mut dir = vec![0.0; k];
                dir[a] = 1.0;
                dir[b] = -1.0;
                dirs.push((dir, dd));
            }
        }
        dirs.into_iter()
            .map(|(dir, dd)| {
                let mut v = dir;
                v.push(dd);
                v
            })
            .collect()
    }

    #[test]
    fn grad_q_matches_directional_fd() {
        let mut rng = Rng::new(3);
        for _ in 0..30 {
            let (d, k) = (4, 3);
            let zr = Matrix::randn(1, d, &mut rng);
            let z = zr.row(0).to_vec();
            let p = Matrix::randn(d, k, &mut rng);
            // keep q safely interior so +-h stays feasible
            let q = {
                let raw: Vec<f64> = (0..k).map(|_| 0.5 + rng.next_f64()).collect();
                let s: f64 = raw.iter().sum();
                AssignmentVector::from_normalized(raw.iter().map(|x| x / s).collect())
            };
            let h = 1e-5;
            for kind in [QLossKind::Quantization, QLossKind::Ols, QLossKind::Variance] {
                let g = grad_q(kind, &z, &p, &q).unwrap();
                let loss = |qq: &AssignmentVector| match kind {
                    QLossKind::Quantization => quantization_loss_sample(&z, &p, qq),
                    QLossKind::Ols => ols_loss_sample(&z, &p, qq),
                    QLossKind::Variance => variance_term_sample(&p, qq),
                };
                for entry in fd_grad_q(loss, &q, h) {
                    let (dir, dd) = (&entry[..k], entry[k]);
                    let analytic: f64 = g.iter().zip(dir).map(|(a, b)| a * b).sum();
                    let rel = (analytic - dd).abs() / analytic.abs().max(dd.abs()).max(1e-10);
                    assert!(rel < 1e-5, "{kind:?}: analytic {analytic} vs fd {dd}");
                }
            }
        }
    }

    #[test]
    fn grad_p_hand_example() {
        // L_q with z=(0,0), p1=(0,0), p2=(2,0), q=(1/2,1/2)
        let p = Matrix::from_vec(2, 2, vec![0.0, 2.0, 0.0, 0.0]).unwrap();
        let q = AssignmentVector::uniform(2);
        let g = grad_p(PLossKind::Quantization, &[0.0, 0.0], &p, &q, 0.0).unwrap();
        assert_eq!(g.col(0), vec![0.0, 0.0]);
        assert_eq!(g.col(1), vec![2.0, 0.0]);
    }

    #[test]
    fn grad_p_variance_zero_for_one_hot() {
        let mut rng = Rng::new(5);
        let p = Matrix::randn(3, 4, &mut rng);
        let q = AssignmentVector::one_hot(4, 2);
        let g = grad_p(PLossKind::Variance, &[0.0; 3], &p, &q, 0.0).unwrap();
        assert!(g.max_abs() < 1e-15);
    }

    #[test]
    fn grad_p_decomposition_consistency() {
        let mut rng = Rng::new(7);
        for _ in 0..30 {
            let (d, k) = (3, 4);
            let zr = Matrix::randn(1, d, &mut rng);
            let z = zr.row(0).to_vec();
            let p = Matrix::randn(d, k, &mut rng);
            let q = random_q(k, &mut rng);
            let glq = grad_p(PLossKind::Quantization, &z, &p, &q, 0.0).unwrap();
            let gols = grad_p(PLossKind::Ols, &z, &p, &q, 0.0).unwrap();
            let gv = grad_p(PLossKind::Variance, &z, &p, &q, 0.0).unwrap();
            for i in 0..d {
                for j in 0..k {
                    let lhs = glq.get(i, j) - gols.get(i, j);
                    assert!((lhs - gv.get(i, j)).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn grad_p_all_kinds_match_fd() {
        let mut rng = Rng::new(9);
        let (d, k) = (3, 4);
        let zr = Matrix::randn(1, d, &mut rng);
        let z = zr.row(0).to_vec();
        let p = Matrix::randn(d, k, &mut rng);
        let q = random_q(k, &mut rng);
        let lambda = 0.37;
        let cases: Vec<(PLossKind, Box<dyn Fn(&Matrix) -> f64>)> = vec![
            (
                PLossKind::Quantization,
                Box::new({
                    let z = z.clone();
                    let q = q.clone();
                    move |pp: &Matrix| quantization_loss_sample(&z, pp, &q)
                }),
            ),
            (
                PLossKind::Ols,
                Box::new({
                    let z = z.clone();
                    let q = q.clone();
                    move |pp: &Matrix| ols_loss_sample(&z, pp, &q)
                }),
            ),
            (
                PLossKind::Variance,
                Box::new({
                    let q = q.clone();
                    move |pp: &Matrix| variance_term_sample(pp, &q)
                }),
            ),
            (
                PLossKind::Separation,
                Box::new(|pp: &Matrix| crate::losses::separation_penalty(pp)),
            ),
            (
                PLossKind::Quadratic,
                Box::new(move |pp: &Matrix| {
                    let f = pp.frobenius_norm();
                    0.5 * lambda * f * f
                }),
            ),
        ];
        for (kind, loss) in cases {
            let analytic = grad_p(kind, &z, &p, &q, lambda).unwrap();
            let report = finite_diff_check(loss, &analytic, &p, 1e-5).unwrap();
            assert!(
                report.max_rel_err < 1e-5,
                "{kind:?}: rel err {}",
                report.max_rel_err
            );
        }
    }

    #[test]
    fn grad_z_stop_gradient_identity() {
        let mut rng = Rng::new(11);
        for _ in 0..20 {
            let (d, k) = (4, 3);
            let zr = Matrix::randn(1, d, &mut rng);
            let z = zr.row(0).to_vec();
            let p = Matrix::randn(d, k, &mut rng);
            let a = grad_z(ZLossKind::Quantization, &z, &p, 0.8, true).unwrap();
            let b = grad_z(ZLossKind::Ols, &z, &p, 0.8, true).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn grad_z_zero_at_mixture_fixed_point() {
        // z exactly at P q for the uniform q of two symmetric prototypes
        let p = Matrix::from_vec(2, 2, vec![1.0, -1.0, 0.0, 0.0]).unwrap();
        let z = [0.0, 0.0];
        let g = grad_z(ZLossKind::Ols, &z, &p, 1.0, true).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn grad_z_full_matches_fd_of_composed_loss() {
        let mut rng = Rng::new(13);
        for kind in [ZLossKind::Quantization, ZLossKind::Ols] {
            for _ in 0..10 {
                let (d, k) = (3, 4);
                let zr = Matrix::randn(1, d, &mut rng);
                let p = Matrix::randn(d, k, &mut rng);
                let t = 0.5 + rng.next_f64();
                let analytic_vec = grad_z(kind, zr.row(0), &p, t, false).unwrap();
                let analytic = Matrix::from_vec_unchecked(1, d, analytic_vec);
                let loss = |zz: &Matrix| {
                    let q = soft_assign(zz.row(0), &p, t).unwrap();
                    match kind {
                        ZLossKind::Quantization => quantization_loss_sample(zz.row(0), &p, &q),
                        ZLossKind::Ols => ols_loss_sample(zz.row(0), &p, &q),
                    }
                };
                let report = finite_diff_check(loss, &analytic, &zr, 1e-5).unwrap();
                assert!(
                    report.max_rel_err < 1e-4,
                    "{kind:?}: rel err {}",
                    report.max_rel_err
                );
            }
        }
    }

    #[test]
    fn full_gradient_gap_is_variance_chain_term() {
        // grad_z Lq - grad_z LOLS under full gradient equals the chain
        // correction applied to grad_q V
        let mut rng = Rng::new(17);
        for _ in 0..20 {
            let (d, k) = (4, 3);
            let zr = Matrix::randn(1, d, &mut rng);
            let z = zr.row(0).to_vec();
            let p = Matrix::randn(d, k, &mut rng);
            let t = 0.7;
            let q = soft_assign(&z, &p, t).unwrap();
            let a = grad_z(ZLossKind::Quantization, &z, &p, t, false).unwrap();
            let b = grad_z(ZLossKind::Ols, &z, &p, t, false).unwrap();
            let gv = grad_q(QLossKind::Variance, &z, &p, &q).unwrap();
            let want = chain_correction(&p, &q, &gv, t);
            for i in 0..d {
                assert!((a[i] - b[i] - want[i]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn fd_check_exact_for_quadratic() {
        let mut rng = Rng::new(19);
        let m = Matrix::randn(3, 3, &mut rng);
        let mut analytic = m.clone();
        analytic.scale(2.0);
        let report = finite_diff_check(
            |x: &Matrix| x.data().iter().map(|v| v * v).sum(),
            &analytic,
            &m,
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_err <= 1e-8);
    }

    #[test]
    fn fd_check_rejects_bad_step() {
        let m = Matrix::zeros(1, 1);
        assert!(finite_diff_check(|_| 0.0, &m, &m, 1e-9).is_err());
        assert!(finite_diff_check(|_| 0.0, &m, &m, 0.1).is_err());
    }

    #[test]
    fn collapse_force_dichotomy() {
        // z - p* orthogonal to u so the two perturbed prototypes stay
        // exactly equidistant from z
        let p_star = [0.5, 0.5];
        let u = [1.0, 0.0];
        let z = [0.5, 1.7];
        let eps = 1e-3;
        let (f_lq, f_lols) = collapse_forces(&p_star, &u, &z, eps, 0.5).unwrap();
        // q_i = q_j = 1/2, so 2 eps (q_i + q_j) = 2 eps
        assert!((f_lq - 2.0 * eps).abs() < 1e-8);
        assert!(f_lols.abs() <= 1e-8);
    }

    #[test]
    fn variance_force_norm_monotone_in_t() {
        // monotone for k = 2, where sigma is q(1-q) times a fixed matrix
        // (the general-k claim fails: the norm can overshoot and settle)
        let mut rng = Rng::new(23);
        for _ in 0..20 {
            let (d, k) = (3, 2);
            let zr = Matrix::randn(1, d, &mut rng);
            let z = zr.row(0).to_vec();
            let p = Matrix::randn(d, k, &mut rng);
            let mut last = -1.0;
            for i in 0..20 {
                let t = 10f64.powf(-2.0 + 4.0 * i as f64 / 19.0);
                let q = soft_assign(&z, &p, t).unwrap();
                let g = grad_p(PLossKind::Variance, &z, &p, &q, 0.0).unwrap();
                let norm = g.frobenius_norm();
                assert!(norm >= last - 1e-10, "t={t}");
                last = norm;
            }
        }
    }
}

#[cfg(test)]
impl AssignmentVector {
    /// Test-only constructor that tolerates the small sum drift introduced
    /// by directional finite-difference probes.
    fn from_normalized_test(q: Vec<f64>) -> Self {
        AssignmentVector::new(q).expect("probe point left the simplex")
    }
}
