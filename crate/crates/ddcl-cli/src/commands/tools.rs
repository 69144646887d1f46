//! Thin subcommands over the library: the finite-difference gradient suite,
//! the reduced-flow certificate, dataset generation, and metric comparison
//! of two label files.

use crate::common::{ensure_out_dir, write_text};
use ddcl_core::batch_trainer::separation;
use ddcl_core::datasets::{
    load_csv, make_blobs, make_circles, make_madelon_style, make_moons, make_spiral, save_csv,
    LabeledDataset,
};
use ddcl_core::error::{DdclError, Result};
use ddcl_core::gradients::{
    finite_diff_check, grad_p, grad_q, grad_z, PLossKind, QLossKind, ZLossKind,
};
use ddcl_core::losses::{
    energy, ols_loss_sample, quantization_loss_sample, total_loss, variance_term_sample,
    LossWeights,
};
use ddcl_core::metrics;
use ddcl_core::numerics::{Matrix, Rng};
use ddcl_core::reduced_flow::run_flow;
use ddcl_core::simplex::AssignmentVector;
use std::path::Path;

fn random_q(k: usize, rng: &mut Rng) -> AssignmentVector {
    let raw: Vec<f64> = (0..k).map(|_| rng.next_f64() + 0.05).collect();
    let s: f64 = raw.iter().sum();
    AssignmentVector::new(raw.iter().map(|x| x / s).collect()).unwrap()
}

/// Cross-check every analytic gradient against central finite differences.
/// Returns the worst relative error seen; the command exits nonzero above
/// the tolerance.
pub fn gradcheck(seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let mut worst: f64 = 0.0;
    let mut bump = |name: &str, rel: f64, tol: f64| -> Result<()> {
        if rel > worst {
            worst = rel;
        }
        if rel > tol {
            return Err(DdclError::Data(format!("{name} rel err {rel} above {tol}")));
        }
        println!("  {name:<42} max rel err {rel:.3e}");
        Ok(())
    };

    for &(d, k) in &[(2usize, 2usize), (20, 5)] {
        let zr = Matrix::randn(1, d, &mut rng);
        let z = zr.row(0).to_vec();
        let p = Matrix::randn(d, k, &mut rng);
        let q = random_q(k, &mut rng);
        let lambda = 0.3;

        // prototype-space gradients
        for kind in [
            PLossKind::Quantization,
            PLossKind::Ols,
            PLossKind::Variance,
            PLossKind::Separation,
            PLossKind::Quadratic,
        ] {
            let analytic = grad_p(kind, &z, &p, &q, lambda)?;
            let zc = z.clone();
            let qc = q.clone();
            let loss = move |pp: &Matrix| match kind {
                PLossKind::Quantization => quantization_loss_sample(&zc, pp, &qc),
                PLossKind::Ols => ols_loss_sample(&zc, pp, &qc),
                PLossKind::Variance => variance_term_sample(pp, &qc),
                PLossKind::Separation => ddcl_core::losses::separation_penalty(pp),
                PLossKind::Quadratic => {
                    let f = pp.frobenius_norm();
                    0.5 * lambda * f * f
                }
            };
            let rep = finite_diff_check(loss, &analytic, &p, 1e-5)?;
            bump(&format!("grad_p {kind:?} d={d} k={k}"), rep.max_rel_err, 1e-5)?;
        }

        // assignment-space gradients along simplex-tangent directions
        for kind in [QLossKind::Quantization, QLossKind::Ols, QLossKind::Variance] {
            let g = grad_q(kind, &z, &p, &q)?;
            let mut rel_worst: f64 = 0.0;
            let h = 1e-5;
            for a in 0..k {
                for b in (a + 1)..k {
                    let eval = |sign: f64| {
                        let mut vals = q.as_slice().to_vec();
                        vals[a] += sign * h;
                        vals[b] -= sign * h;
                        let qq = AssignmentVector::new(vals).unwrap();
                        match kind {
                            QLossKind::Quantization => quantization_loss_sample(&z, &p, &qq),
                            QLossKind::Ols => ols_loss_sample(&z, &p, &qq),
                            QLossKind::Variance => variance_term_sample(&p, &qq),
                        }
                    };
                    let fd = (eval(1.0) - eval(-1.0)) / (2.0 * h);
                    let an = g[a] - g[b];
                    let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-10);
                    rel_worst = rel_worst.max(rel);
                }
            }
            bump(&format!("grad_q {kind:?} d={d} k={k}"), rel_worst, 1e-5)?;
        }

        // feature-space gradients: stop-gradient mode against its closed
        // form 2(z - Pq), full mode against FD of the composed loss
        let t = 0.7;
        for kind in [ZLossKind::Quantization, ZLossKind::Ols] {
            let analytic_stop = grad_z(kind, &z, &p, t, true)?;
            let q = ddcl_core::assignment::soft_assign(&z, &p, t)?;
            let pbar = ddcl_core::losses::mixture(&p, &q);
            let mut rel_worst: f64 = 0.0;
            for i in 0..d {
                let want = 2.0 * (z[i] - pbar[i]);
                let rel = (want - analytic_stop[i]).abs() / want.abs().max(1e-10);
                rel_worst = rel_worst.max(rel);
            }
            bump(&format!("grad_z {kind:?} stop d={d}"), rel_worst, 1e-12)?;

            let analytic = Matrix::from_vec_unchecked(1, d, grad_z(kind, &z, &p, t, false)?);
            let pc = p.clone();
            let loss = move |zz: &Matrix| {
                let zrow = zz.row(0);
                let q = ddcl_core::assignment::soft_assign(zrow, &pc, t).unwrap();
                match kind {
                    ZLossKind::Quantization => quantization_loss_sample(zrow, &pc, &q),
                    ZLossKind::Ols => ols_loss_sample(zrow, &pc, &q),
                }
            };
            let rep = finite_diff_check(loss, &analytic, &zr, 1e-5)?;
            bump(&format!("grad_z {kind:?} full d={d}"), rep.max_rel_err, 1e-4)?;
        }

        // composite objectives
        let n = 6;
        let zb = Matrix::randn(n, d, &mut rng);
        let qb: Vec<AssignmentVector> = (0..n).map(|_| random_q(k, &mut rng)).collect();
        let w = LossWeights {
            beta: 0.2,
            gamma: 0.1,
            eta: 0.01,
            lambda: 0.5,
            entropy_sign: -1.0,
        };
        // total loss w.r.t. P: per-sample mean of the quantization gradient
        // plus the weighted regularizer gradients
        let mut analytic = Matrix::zeros(d, k);
        for i in 0..n {
            let g = grad_p(PLossKind::Quantization, zb.row(i), &p, &qb[i], 0.0)?;
            analytic.add_scaled(&g, 1.0 / n as f64);
        }
        analytic.add_scaled(&grad_p(PLossKind::Separation, &z, &p, &q, 0.0)?, w.eta);
        analytic.add_scaled(&p, w.lambda);
        let zbc = zb.clone();
        let qbc = qb.clone();
        let wc = w.clone();
        let rep = finite_diff_check(
            move |pp: &Matrix| total_loss(&zbc, pp, &qbc, &wc).unwrap().total,
            &analytic,
            &p,
            1e-5,
        )?;
        bump(&format!("grad_p total_loss d={d} k={k}"), rep.max_rel_err, 1e-5)?;

        let analytic = ddcl_core::reduced_flow::energy_grad_p(&zb, &p, &qb, &w)?;
        let zbc = zb.clone();
        let qbc = qb.clone();
        let wc = w.clone();
        let rep = finite_diff_check(
            move |pp: &Matrix| energy(&zbc, pp, &qbc, &wc).unwrap().value,
            &analytic,
            &p,
            1e-5,
        )?;
        bump(&format!("grad_p energy d={d} k={k}"), rep.max_rel_err, 1e-5)?;
    }
    Ok(worst)
}

/// Run the reduced flow on a frozen dataset and emit the certificate JSON
/// plus the energy series CSV.
pub fn flow(data: Option<&Path>, out_dir: &Path, steps: usize, seed: u64) -> Result<bool> {
    ensure_out_dir(out_dir)?;
    let dataset = match data {
        Some(path) => load_csv(path, None)?,
        None => make_blobs(400, 4, 6.0, 0.5, seed)?,
    };
    let k = dataset.n_classes().unwrap_or(4).max(2);
    let mut rng = Rng::new(seed);
    let picks = rng.sample_without_replacement(dataset.n(), k);
    let p = Matrix::from_fn(dataset.dim(), k, |r, j| dataset.features.get(picks[j], r));
    let q = vec![AssignmentVector::uniform(k); dataset.n()];
    let w = LossWeights {
        beta: 0.1,
        gamma: 0.1,
        eta: 1e-3,
        lambda: 0.05,
        entropy_sign: -1.0,
    };
    let cert = run_flow(&dataset.features, &p, &q, &w, steps, 1e-3, 2e-2, 1e6)?;
    let mut csv = String::from("step,energy\n");
    for (i, e) in cert.energies.iter().enumerate() {
        csv.push_str(&format!("{i},{e}\n"));
    }
    write_text(&out_dir.join("energy.csv"), &csv)?;
    write_text(
        &out_dir.join("flow_certificate.json"),
        &serde_json::to_string_pretty(&cert).unwrap(),
    )?;
    println!(
        "flow: {} steps, max increase {:.3e}, bounded {}, final KKT residual {:.3e}, final S {:.4}",
        cert.steps,
        cert.max_energy_increase,
        cert.bounded,
        cert.final_kkt_residual,
        separation(&p)
    );
    Ok(cert.bounded && cert.max_energy_increase <= 1e-9 && cert.final_kkt_residual < 1e-3)
}

/// Generate a named synthetic dataset as CSV (labels in the last column).
#[allow(clippy::too_many_arguments)]
pub fn gen_data(
    name: &str,
    n: usize,
    k: usize,
    d: usize,
    noise: f64,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let data: LabeledDataset = match name {
        "moons" => make_moons(n, noise, seed)?,
        "circles" => make_circles(n, noise, 0.5, seed)?,
        "spiral" => make_spiral(n, 2.0, noise, seed)?,
        "blobs" => make_blobs(n, k.max(1), 6.0, if noise > 0.0 { noise } else { 0.5 }, seed)?,
        "madelon" => make_madelon_style(n, d.max(1), 5, 4.0, seed)?,
        other => {
            return Err(DdclError::InvalidConfig(format!(
                "unknown dataset {other}; expected moons|circles|spiral|blobs|madelon"
            )))
        }
    };
    save_csv(&data, out)?;
    println!("wrote {} samples x {} features to {}", data.n(), data.dim(), out.display());
    Ok(())
}

/// Compare two single-column label files (or last-column label CSVs).
pub fn compare_metrics(truth: &Path, pred: &Path) -> Result<(f64, f64, f64)> {
    let read_labels = |path: &Path| -> Result<Vec<usize>> {
        let text = std::fs::read_to_string(path).map_err(|e| DdclError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(row, l)| {
                let cell = l.split(',').next_back().unwrap().trim();
                cell.parse::<usize>().map_err(|_| DdclError::Csv {
                    row,
                    col: 0,
                    msg: format!("not an integer label: {cell}"),
                })
            })
            .collect()
    };
    let a = read_labels(truth)?;
    let b = read_labels(pred)?;
    let acc = metrics::clustering_accuracy(&a, &b)?;
    let nmi = metrics::nmi(&a, &b)?;
    let ari = metrics::ari(&a, &b)?;
    println!("acc {acc:.6}  nmi {nmi:.6}  ari {ari:.6}");
    Ok((acc, nmi, ari))
}
