//! Discrete-time projected gradient descent on the frozen-feature energy
//! E(P, Q), with backtracking that enforces monotone energy decrease, a
//! boundedness check, and KKT-residual reporting.

use crate::error::{DdclError, Result};
use crate::losses::{energy, mean_assignment, LossWeights};
use crate::numerics::{sq_dist_to_col, Matrix};
use crate::simplex::{project, AssignmentVector, LOG_FLOOR};
use serde::{Deserialize, Serialize};

/// ∇_P E: the un-normalized quantization sum plus separation and quadratic
/// terms.
pub fn energy_grad_p(
    z: &Matrix,
    p: &Matrix,
    q: &[AssignmentVector],
    w: &LossWeights,
) -> Result<Matrix> {
    let (d, k) = (p.rows(), p.cols());
    let n = z.rows();
    if q.len() != n || z.cols() != d {
        return Err(DdclError::shape(
            "energy_grad_p",
            format!("{n} assignments over dim {d}"),
            format!("{} over {}", q.len(), z.cols()),
        ));
    }
    // quantization: sum_n 2 q_nj (p_j - z_n)
    let mut col_weight = vec![0.0; k];
    for qi in q {
        for (j, &v) in qi.as_slice().iter().enumerate() {
            col_weight[j] += v;
        }
    }
    let mut weighted_sum = Matrix::zeros(d, k); // sum_n q_nj z_n per column
    for (i, qi) in q.iter().enumerate() {
        let zi = z.row(i);
        for (j, &v) in qi.as_slice().iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            for r in 0..d {
                weighted_sum.set(r, j, weighted_sum.get(r, j) + v * zi[r]);
            }
        }
    }
    let mut g = Matrix::from_fn(d, k, |r, j| {
        2.0 * (col_weight[j] * p.get(r, j) - weighted_sum.get(r, j))
    });
    if w.eta > 0.0 {
        // eta * grad of -sum_{i<j} ||p_i - p_j||^2
        let mut colsum = vec![0.0; d];
        for r in 0..d {
            colsum[r] = (0..k).map(|j| p.get(r, j)).sum();
        }
        for r in 0..d {
            for j in 0..k {
                let gsep = -2.0 * (k as f64 * p.get(r, j) - colsum[r]);
                g.set(r, j, g.get(r, j) + w.eta * gsep);
            }
        }
    }
    if w.lambda > 0.0 {
        g.add_scaled(p, w.lambda);
    }
    Ok(g)
}

/// ∇_{q_n} E for sample `idx`: distance vector plus the balance and entropy
/// terms (both carry the 1/N of their definitions).
pub fn energy_grad_q(
    z: &Matrix,
    p: &Matrix,
    q: &[AssignmentVector],
    w: &LossWeights,
    idx: usize,
    mean_q: &AssignmentVector,
) -> Vec<f64> {
    let k = p.cols();
    let n = z.rows() as f64;
    let zi = z.row(idx);
    let mut g: Vec<f64> = (0..k).map(|j| sq_dist_to_col(zi, p, j)).collect();
    if w.beta > 0.0 {
        // d KL(mean_q || uniform) / d q_idx,j = (log(k mean_q_j) + 1)/N
        for (j, gj) in g.iter_mut().enumerate() {
            let m = mean_q.as_slice()[j].max(LOG_FLOOR);
            *gj += w.beta * ((k as f64 * m).ln() + 1.0) / n;
        }
    }
    if w.gamma > 0.0 {
        // d H(q)/dq_j = -(log q_j + 1); L_ent carries 1/N
        for (j, gj) in g.iter_mut().enumerate() {
            let qv = q[idx].as_slice()[j].max(LOG_FLOOR);
            *gj += w.entropy_sign * w.gamma * (-(qv.ln() + 1.0)) / n;
        }
    }
    g
}

/// One explicit step of the projected flow: plain descent on P, projected
/// descent on every q_n.
pub fn flow_step(
    z: &Matrix,
    p: &Matrix,
    q: &[AssignmentVector],
    w: &LossWeights,
    step_p: f64,
    step_q: f64,
) -> Result<(Matrix, Vec<AssignmentVector>)> {
    if step_p < 0.0 || step_q < 0.0 {
        return Err(DdclError::InvalidConfig(
            "flow step sizes must be non-negative".into(),
        ));
    }
    let gp = energy_grad_p(z, p, q, w)?;
    if !gp.is_finite() {
        return Err(DdclError::non_finite("prototype gradient of the energy"));
    }
    let mut p_next = p.clone();
    p_next.add_scaled(&gp, -step_p);
    let mean_q = mean_assignment(q);
    let q_next = crate::parallel::map_indexed(q.len(), |i| {
        let g = energy_grad_q(z, p, q, w, i, &mean_q);
        let moved: Vec<f64> = q[i]
            .as_slice()
            .iter()
            .zip(&g)
            .map(|(&qv, &gv)| qv - step_q * gv)
            .collect();
        project(&moved)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok((p_next, q_next))
}

/// KKT residual: ‖∇_P E‖_F plus the per-sample projected-step displacement
/// rate Σ_n ‖project(q_n − s ∇_q E) − q_n‖ / s.
pub fn kkt_residual(
    z: &Matrix,
    p: &Matrix,
    q: &[AssignmentVector],
    w: &LossWeights,
    probe_step: f64,
) -> Result<f64> {
    if !(probe_step > 0.0 && probe_step <= 1e-4) {
        return Err(DdclError::InvalidConfig(format!(
            "probe step must be in (0, 1e-4], got {probe_step}"
        )));
    }
    let gp = energy_grad_p(z, p, q, w)?;
    let mut residual = gp.frobenius_norm();
    let mean_q = mean_assignment(q);
    let per_sample = crate::parallel::map_indexed(q.len(), |i| {
        let g = energy_grad_q(z, p, q, w, i, &mean_q);
        let moved: Vec<f64> = q[i]
            .as_slice()
            .iter()
            .zip(&g)
            .map(|(&qv, &gv)| qv - probe_step * gv)
            .collect();
        let projected = project(&moved).expect("finite probe");
        let disp: f64 = projected
            .as_slice()
            .iter()
            .zip(q[i].as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        disp / probe_step
    });
    residual += per_sample.iter().sum::<f64>();
    Ok(residual)
}

/// Certificate of one flow run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowCertificate {
    pub energies: Vec<f64>,
    pub max_energy_increase: f64,
    pub final_kkt_residual: f64,
    pub bounded: bool,
    pub max_prototype_norm: f64,
    pub steps: usize,
    pub coercivity_ok: bool,
    pub final_step_p: f64,
    pub final_step_q: f64,
}

/// Run the projected flow with backtracking: any step that increases the
/// energy is retried at half the step sizes. The certificate records the
/// energy series, the largest accepted increase, boundedness against
/// `norm_cap`, and the final KKT residual.
#[allow(clippy::too_many_arguments)]
pub fn run_flow(
    z: &Matrix,
    p_init: &Matrix,
    q_init: &[AssignmentVector],
    w: &LossWeights,
    steps: usize,
    mut step_p: f64,
    mut step_q: f64,
    norm_cap: f64,
) -> Result<FlowCertificate> {
    w.validate()?;
    let report = energy(z, p_init, q_init, w)?;
    let coercivity_ok = report.coercivity_ok;
    let mut p = p_init.clone();
    let mut q = q_init.to_vec();
    let mut e_current = report.value;
    let mut energies = Vec::with_capacity(steps + 1);
    energies.push(e_current);
    let mut max_increase: f64 = 0.0;
    let mut max_norm = p.frobenius_norm();
    let mut bounded = max_norm <= norm_cap;

    let (init_step_p, init_step_q) = (step_p, step_q);
    for _ in 0..steps {
        if step_p == 0.0 && step_q == 0.0 {
            energies.push(e_current);
            continue;
        }
        let mut attempt = 0;
        loop {
            let (p_next, q_next) = flow_step(z, &p, &q, w, step_p, step_q)?;
            let e_next = energy(z, &p_next, &q_next, w)?.value;
            if e_next <= e_current || attempt >= 60 {
                max_increase = max_increase.max(e_next - e_current);
                p = p_next;
                q = q_next;
                e_current = e_next;
                // recover from early halving, never past the initial steps
                step_p = (step_p * 1.1).min(init_step_p);
                step_q = (step_q * 1.1).min(init_step_q);
                break;
            }
            step_p *= 0.5;
            step_q *= 0.5;
            attempt += 1;
        }
        energies.push(e_current);
        let norm = p.frobenius_norm();
        max_norm = max_norm.max(norm);
        if norm > norm_cap || !norm.is_finite() {
            bounded = false;
            break;
        }
    }
    let final_kkt_residual = kkt_residual(z, &p, &q, w, 1e-5)?;
    Ok(FlowCertificate {
        steps: energies.len() - 1,
        energies,
        max_energy_increase: max_increase,
        final_kkt_residual,
        bounded,
        max_prototype_norm: max_norm,
        coercivity_ok,
        final_step_p: step_p,
        final_step_q: step_q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::make_blobs;
    use crate::numerics::Rng;

    fn random_q(n: usize, k: usize, rng: &mut Rng) -> Vec<AssignmentVector> {
        (0..n)
            .map(|_| {
                let raw: Vec<f64> = (0..k).map(|_| rng.next_f64() + 0.05).collect();
                let s: f64 = raw.iter().sum();
                AssignmentVector::from_normalized(raw.iter().map(|x| x / s).collect())
            })
            .collect()
    }

    #[test]
    fn energy_grads_match_fd() {
        let mut rng = Rng::new(1);
        let z = Matrix::randn(5, 3, &mut rng);
        let p = Matrix::randn(3, 4, &mut rng);
        let q = random_q(5, 4, &mut rng);
        let w = LossWeights {
            beta: 0.2,
            gamma: 0.3,
            eta: 0.01,
            lambda: 1.0,
            entropy_sign: -1.0,
        };
        let analytic = energy_grad_p(&z, &p, &q, &w).unwrap();
        let rep = crate::gradients::finite_diff_check(
            |pp: &Matrix| energy(&z, pp, &q, &w).unwrap().value,
            &analytic,
            &p,
            1e-5,
        )
        .unwrap();
        assert!(rep.max_rel_err < 1e-5, "grad_P rel err {}", rep.max_rel_err);

        // q-gradient against directional finite differences on sum-zero
        // directions (tangent to the simplex)
        let mean_q = mean_assignment(&q);
        for idx in 0..5 {
            let g = energy_grad_q(&z, &p, &q, &w, idx, &mean_q);
            for a in 0..4 {
                for b in (a + 1)..4 {
                    let h = 1e-6;
                    let perturb = |sign: f64| {
                        let mut qs: Vec<AssignmentVector> = q.clone();
                        let mut vals = qs[idx].as_slice().to_vec();
                        vals[a] += sign * h;
                        vals[b] -= sign * h;
                        qs[idx] = AssignmentVector::from_normalized(vals);
                        energy(&z, &p, &qs, &w).unwrap().value
                    };
                    let fd = (perturb(1.0) - perturb(-1.0)) / (2.0 * h);
                    let an = g[a] - g[b];
                    let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-8);
                    assert!(rel < 1e-4, "sample {idx} dir ({a},{b}): {an} vs {fd}");
                }
            }
        }
    }

    #[test]
    fn fixed_point_stays_fixed() {
        // k=1 with q forced to (1): stationary P solves 2 sum (p - z) + lambda p = 0
        let mut rng = Rng::new(2);
        let z = Matrix::randn(6, 2, &mut rng);
        let w = LossWeights {
            lambda: 0.5,
            ..LossWeights::default()
        };
        let n = 6.0;
        let p_star = Matrix::from_fn(2, 1, |r, _| {
            let sum: f64 = (0..6).map(|i| z.get(i, r)).sum();
            2.0 * sum / (2.0 * n + 0.5)
        });
        let q = vec![AssignmentVector::one_hot(1, 0); 6];
        let (p2, q2) = flow_step(&z, &p_star, &q, &w, 1e-3, 1e-3).unwrap();
        for (a, b) in p2.data().iter().zip(p_star.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(q2[0].as_slice(), &[1.0]);
        // residual reduces to the prototype gradient norm, which vanishes
        let r = kkt_residual(&z, &p_star, &q, &w, 1e-5).unwrap();
        assert!(r < 1e-9, "residual {r}");
    }

    #[test]
    fn single_sample_descends_toward_feature() {
        let z = Matrix::from_vec(1, 2, vec![2.0, -1.0]).unwrap();
        let w = LossWeights {
            lambda: 0.1,
            ..LossWeights::default()
        };
        let mut p = Matrix::zeros(2, 1);
        let q = vec![AssignmentVector::one_hot(1, 0)];
        let mut last = energy(&z, &p, &q, &w).unwrap().value;
        for _ in 0..200 {
            let (pn, _) = flow_step(&z, &p, &q, &w, 0.05, 0.0).unwrap();
            p = pn;
            let e = energy(&z, &p, &q, &w).unwrap().value;
            assert!(e <= last + 1e-12);
            last = e;
        }
        // settles near z, shrunk slightly by lambda
        assert!((p.get(0, 0) - 2.0 * 2.0 / 2.1).abs() < 1e-6);
    }

    #[test]
    fn small_steps_decrease_energy_on_random_instances() {
        let mut rng = Rng::new(3);
        for _ in 0..10 {
            let z = Matrix::randn(8, 2, &mut rng);
            let p = Matrix::randn(2, 3, &mut rng);
            let q = random_q(8, 3, &mut rng);
            let w = LossWeights {
                beta: 0.1,
                gamma: 0.1,
                eta: 0.001,
                lambda: 0.1,
                entropy_sign: -1.0,
            };
            let e0 = energy(&z, &p, &q, &w).unwrap().value;
            let (p1, q1) = flow_step(&z, &p, &q, &w, 1e-3, 1e-3).unwrap();
            let e1 = energy(&z, &p1, &q1, &w).unwrap().value;
            assert!(e1 <= e0 + 1e-12, "e0={e0} e1={e1}");
        }
    }

    #[test]
    fn far_from_stationary_has_large_residual() {
        let mut rng = Rng::new(4);
        let z = Matrix::randn(10, 2, &mut rng);
        let p = Matrix::randn(2, 3, &mut rng);
        let q = random_q(10, 3, &mut rng);
        let r = kkt_residual(&z, &p, &q, &LossWeights::default(), 1e-5).unwrap();
        assert!(r > 1e-2, "residual {r}");
    }

    #[test]
    fn interior_projection_equals_centering() {
        // for interior q and a small step, the projected update equals
        // subtracting the mean of the gradient
        let mut rng = Rng::new(5);
        let z = Matrix::randn(4, 2, &mut rng);
        let p = Matrix::randn(2, 3, &mut rng);
        let q = vec![AssignmentVector::uniform(3); 4];
        let w = LossWeights::default();
        let mean_q = mean_assignment(&q);
        let step = 1e-6;
        for i in 0..4 {
            let g = energy_grad_q(&z, &p, &q, &w, i, &mean_q);
            let moved: Vec<f64> = q[i]
                .as_slice()
                .iter()
                .zip(&g)
                .map(|(&qv, &gv)| qv - step * gv)
                .collect();
            let projected = project(&moved).unwrap();
            let gmean: f64 = g.iter().sum::<f64>() / 3.0;
            for j in 0..3 {
                let tangent = q[i].as_slice()[j] - step * (g[j] - gmean);
                assert!((projected.as_slice()[j] - tangent).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_steps_keep_energy_constant() {
        let mut rng = Rng::new(6);
        let z = Matrix::randn(5, 2, &mut rng);
        let p = Matrix::randn(2, 2, &mut rng);
        let q = random_q(5, 2, &mut rng);
        let w = LossWeights {
            lambda: 0.2,
            ..LossWeights::default()
        };
        let cert = run_flow(&z, &p, &q, &w, 20, 0.0, 0.0, 1e6).unwrap();
        let e0 = cert.energies[0];
        assert!(cert.energies.iter().all(|&e| e == e0));
    }

    #[test]
    fn coercivity_violation_flagged_but_runs() {
        let mut rng = Rng::new(7);
        let z = Matrix::randn(5, 2, &mut rng);
        let p = Matrix::randn(2, 3, &mut rng);
        let q = random_q(5, 3, &mut rng);
        let w = LossWeights {
            eta: 1.0,
            lambda: 0.01,
            ..LossWeights::default()
        };
        let cert = run_flow(&z, &p, &q, &w, 50, 1e-3, 1e-3, 1e9).unwrap();
        assert!(!cert.coercivity_ok);
        assert_eq!(cert.steps, 50);
    }

    #[test]
    fn blobs_flow_certificate() {
        let data = make_blobs(100, 3, 5.0, 0.5, 11).unwrap();
        let mut rng = Rng::new(12);
        let picks = rng.sample_without_replacement(100, 3);
        let p = Matrix::from_fn(2, 3, |r, j| data.features.get(picks[j], r));
        let q = vec![AssignmentVector::uniform(3); 100];
        let w = LossWeights {
            beta: 0.1,
            gamma: 0.1,
            eta: 1e-3,
            lambda: 0.05,
            entropy_sign: -1.0,
        };
        let cert = run_flow(&data.features, &p, &q, &w, 800, 1e-3, 2e-2, 1e4).unwrap();
        assert!(cert.coercivity_ok);
        assert!(cert.bounded);
        assert!(cert.max_energy_increase <= 1e-9, "increase {}", cert.max_energy_increase);
        assert!(
            cert.final_kkt_residual < 1e-2,
            "kkt residual {}",
            cert.final_kkt_residual
        );
    }
}
