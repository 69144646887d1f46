//! Acceptance suite: one test per release criterion, each printing a
//! pass/fail line through the harness. Run with
//! `cargo test -p ddcl-cli --test acceptance`.
//!
//! The digits-based criteria look for `data/digits.csv` (or
//! `DDCL_DIGITS_CSV`) and regenerate it with `scripts/fetch_digits.py` when
//! python with sklearn is available.

use ddcl_cli::commands::{block1, block2, block3, block5, block6};
use ddcl_cli::common::{load_digits_pca, mean_std};
use ddcl_cli::summary::ExperimentSummary;
use ddcl_core::assignment::soft_assign;
use ddcl_core::backbone::{mlp_backward, mlp_forward, ForwardMode, MlpParams};
use ddcl_core::batch_trainer::{feedback_correlation, train};
use ddcl_core::datasets::make_blobs;
use ddcl_core::gradients::{
    chain_correction, collapse_forces, finite_diff_check, grad_p, grad_q, grad_z, PLossKind,
    QLossKind, ZLossKind,
};
use ddcl_core::losses::{
    mixture, ols_loss, ols_loss_sample, quantization_loss, quantization_loss_sample,
    separation_penalty, variance_term, variance_term_sample, LossWeights,
};
use ddcl_core::metrics::{ari, clustering_accuracy, nmi, ContingencyTable};
use ddcl_core::numerics::{dot, Matrix, Rng};
use ddcl_core::reduced_flow::run_flow;
use ddcl_core::simplex::{project, AssignmentVector};
use std::path::PathBuf;
use std::sync::OnceLock;

fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .unwrap()
}

fn out_dir(name: &str) -> PathBuf {
    let dir = workspace_root().join("target/acceptance").join(name);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Locate or regenerate the digits table; None when unavailable.
fn digits_csv() -> Option<PathBuf> {
    if let Ok(path) = std::env::var("DDCL_DIGITS_CSV") {
        let p = PathBuf::from(path);
        if p.exists() {
            return Some(p);
        }
    }
    let default = workspace_root().join("data/digits.csv");
    if default.exists() {
        return Some(default);
    }
    let script = workspace_root().join("scripts/fetch_digits.py");
    let status = std::process::Command::new("python3")
        .arg(&script)
        .arg(&default)
        .status()
        .ok()?;
    if status.success() && default.exists() {
        Some(default)
    } else {
        None
    }
}

fn random_simplex_point(k: usize, rng: &mut Rng) -> AssignmentVector {
    let raw: Vec<f64> = (0..k).map(|_| rng.next_f64() + 1e-3).collect();
    let s: f64 = raw.iter().sum();
    AssignmentVector::new(raw.iter().map(|x| x / s).collect()).unwrap()
}

static BLOCK1: OnceLock<ExperimentSummary> = OnceLock::new();
fn block1_summary() -> &'static ExperimentSummary {
    BLOCK1.get_or_init(|| {
        block1::run(&out_dir("block1"), 10)
            .expect("block1 runs data-free")
            .summary
    })
}

fn check_detail(summary: &ExperimentSummary, name: &str) -> (bool, String) {
    let c = summary
        .checks
        .iter()
        .find(|c| c.name == name)
        .unwrap_or_else(|| panic!("missing check {name}"));
    (c.passed, c.detail.clone())
}

#[test]
fn criterion_01_decomposition_identity() {
    let mut rng = Rng::new(101);
    let mut instances = 0usize;
    let mut worst_gap = 0.0f64;
    let mut worst_v = 0.0f64;
    for &(d, k) in &[(2usize, 2usize), (2, 10), (64, 2), (64, 10), (512, 2), (512, 10)] {
        for _ in 0..1700 {
            let n = 1 + rng.below(4);
            let z = Matrix::randn(n, d, &mut rng);
            let p = Matrix::randn(d, k, &mut rng);
            let t = 10f64.powf(rng.uniform(-2.0, 2.0));
            // half softmax assignments, half generic simplex points
            let q: Vec<AssignmentVector> = (0..n)
                .map(|i| {
                    if rng.next_f64() < 0.5 {
                        soft_assign(z.row(i), &p, t).unwrap()
                    } else {
                        random_simplex_point(k, &mut rng)
                    }
                })
                .collect();
            let lq = quantization_loss(&z, &p, &q).unwrap();
            let lols = ols_loss(&z, &p, &q).unwrap();
            let v = variance_term(&p, &q);
            let gap = (lq - lols - v).abs();
            assert!(gap <= 1e-9, "identity violated: d={d} k={k} gap={gap}");
            assert!(v >= -1e-12, "negative variance: {v}");
            worst_gap = worst_gap.max(gap);
            worst_v = worst_v.min(v);
            instances += 1;

            // corollary: per-sample variance below a quarter of the squared
            // prototype diameter
            let mut diam2 = 0.0f64;
            for a in 0..k {
                for b in (a + 1)..k {
                    let dist: f64 = (0..d)
                        .map(|r| (p.get(r, a) - p.get(r, b)).powi(2))
                        .sum();
                    diam2 = diam2.max(dist);
                }
            }
            for qi in &q {
                assert!(variance_term_sample(&p, qi) <= 0.25 * diam2 + 1e-9);
            }
        }
    }
    assert!(instances >= 10_000);
    println!(
        "criterion 1: {instances} instances, worst |L_q - L_OLS - V| = {worst_gap:.3e}, min V = {worst_v:.3e}"
    );
}

#[test]
fn criterion_02_gradient_exactness() {
    let mut rng = Rng::new(202);
    let mut worst: f64 = 0.0;
    for &(d, k) in &[(2usize, 2usize), (2, 5), (20, 2), (20, 5)] {
        for _ in 0..100 {
            let zr = Matrix::randn(1, d, &mut rng);
            let z = zr.row(0).to_vec();
            let p = Matrix::randn(d, k, &mut rng);
            let q = random_simplex_point(k, &mut rng);
            let lambda = 0.4;

            for kind in [
                PLossKind::Quantization,
                PLossKind::Ols,
                PLossKind::Variance,
                PLossKind::Separation,
                PLossKind::Quadratic,
            ] {
                let analytic = grad_p(kind, &z, &p, &q, lambda).unwrap();
                let zc = z.clone();
                let qc = q.clone();
                let rep = finite_diff_check(
                    move |pp: &Matrix| match kind {
                        PLossKind::Quantization => quantization_loss_sample(&zc, pp, &qc),
                        PLossKind::Ols => ols_loss_sample(&zc, pp, &qc),
                        PLossKind::Variance => variance_term_sample(pp, &qc),
                        PLossKind::Separation => separation_penalty(pp),
                        PLossKind::Quadratic => {
                            let f = pp.frobenius_norm();
                            0.5 * lambda * f * f
                        }
                    },
                    &analytic,
                    &p,
                    1e-5,
                )
                .unwrap();
                assert!(rep.passes(1e-5, 1e-8), "{kind:?} rel {}", rep.max_rel_err);
                worst = worst.max(rep.max_rel_err);
            }

            // assignment gradients along simplex-tangent directions
            for kind in [QLossKind::Quantization, QLossKind::Ols, QLossKind::Variance] {
                let g = grad_q(kind, &z, &p, &q).unwrap();
                let h = 1e-5;
                for a in 0..k {
                    for b in (a + 1)..k {
                        if q.as_slice()[a] < 2.0 * h || q.as_slice()[b] < 2.0 * h {
                            continue;
                        }
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
                        let abs = (an - fd).abs();
                        let rel = abs / an.abs().max(fd.abs()).max(1e-10);
                        assert!(rel <= 1e-5 || abs <= 1e-8, "{kind:?} rel {rel}");
                        worst = worst.max(rel.min(1e-5));
                    }
                }
            }

            // full-chain feature gradient at 1e-4
            let t = 0.3 + rng.next_f64() * 2.0;
            for kind in [ZLossKind::Quantization, ZLossKind::Ols] {
                let analytic =
                    Matrix::from_vec_unchecked(1, d, grad_z(kind, &z, &p, t, false).unwrap());
                let pc = p.clone();
                let rep = finite_diff_check(
                    move |zz: &Matrix| {
                        let q = soft_assign(zz.row(0), &pc, t).unwrap();
                        match kind {
                            ZLossKind::Quantization => quantization_loss_sample(zz.row(0), &pc, &q),
                            ZLossKind::Ols => ols_loss_sample(zz.row(0), &pc, &q),
                        }
                    },
                    &analytic,
                    &zr,
                    1e-5,
                )
                .unwrap();
                assert!(rep.passes(1e-4, 1e-8), "grad_z {kind:?} rel {}", rep.max_rel_err);
            }
        }
    }

    // MLP backprop at 1e-4 over widths and batch sizes
    for &(width, batch) in &[(4usize, 2usize), (4, 8), (16, 2), (16, 8)] {
        let mut prng = Rng::new(4040 + width as u64 * 10 + batch as u64);
        let p = MlpParams::new(&[3, width, width / 2 + 1, 2], &mut prng).unwrap();
        let x = Matrix::randn(batch, 3, &mut prng);
        let probe = Matrix::randn(batch, 2, &mut prng);
        let (_, cache) = mlp_forward(&p, &x, ForwardMode::Train).unwrap();
        let grads = mlp_backward(&p, &cache, &probe).unwrap();
        let rep = finite_diff_check(
            |xx: &Matrix| {
                let (f, _) = mlp_forward(&p, xx, ForwardMode::Train).unwrap();
                dot(f.data(), probe.data())
            },
            &grads.grad_input,
            &x,
            1e-5,
        )
        .unwrap();
        assert!(rep.passes(1e-4, 1e-8), "mlp grad_input rel {}", rep.max_rel_err);
    }
    println!("criterion 2: all analytic gradients within tolerance (worst tracked {worst:.2e})");
}

#[test]
fn criterion_03_stop_gradient_equivalence() {
    let mut rng = Rng::new(303);
    let mut worst_eq = 0.0f64;
    let mut worst_resid = 0.0f64;
    for _ in 0..100 {
        let d = 2 + rng.below(16);
        let k = 2 + rng.below(6);
        let zr = Matrix::randn(1, d, &mut rng);
        let z = zr.row(0).to_vec();
        let p = Matrix::randn(d, k, &mut rng);
        let t = 0.3 + rng.next_f64() * 2.0;

        let a = grad_z(ZLossKind::Quantization, &z, &p, t, true).unwrap();
        let b = grad_z(ZLossKind::Ols, &z, &p, t, true).unwrap();
        for (x, y) in a.iter().zip(&b) {
            worst_eq = worst_eq.max((x - y).abs());
            assert!((x - y).abs() <= 1e-12);
        }

        // full-gradient difference equals the variance chain term
        let fa = grad_z(ZLossKind::Quantization, &z, &p, t, false).unwrap();
        let fb = grad_z(ZLossKind::Ols, &z, &p, t, false).unwrap();
        let q = soft_assign(&z, &p, t).unwrap();
        let gv = grad_q(QLossKind::Variance, &z, &p, &q).unwrap();
        let want = chain_correction(&p, &q, &gv, t);
        for i in 0..d {
            let resid = (fa[i] - fb[i] - want[i]).abs();
            worst_resid = worst_resid.max(resid);
            assert!(resid <= 1e-10, "residual {resid}");
        }
    }
    println!(
        "criterion 3: stop-gradient equality within {worst_eq:.2e}; full-gradient gap matches the variance term within {worst_resid:.2e}"
    );
}

#[test]
fn criterion_04a_collapse_forces_microinstance() {
    let mut rng = Rng::new(404);
    for _ in 0..50 {
        let d = 2 + rng.below(4);
        let p_star: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let mut u: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut u {
            *x /= norm;
        }
        // z - p* orthogonal to u so the perturbed prototypes stay equidistant
        let mut w: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let proj = dot(&w, &u);
        for (wi, ui) in w.iter_mut().zip(&u) {
            *wi -= proj * ui;
        }
        let z: Vec<f64> = p_star.iter().zip(&w).map(|(a, b)| a + b).collect();
        let eps = 1e-3;
        let t = 0.2 + rng.next_f64();
        let (f_lq, f_lols) = collapse_forces(&p_star, &u, &z, eps, t).unwrap();
        let p = Matrix::from_fn(d, 2, |i, j| {
            if j == 0 {
                p_star[i] + eps * u[i]
            } else {
                p_star[i] - eps * u[i]
            }
        });
        let q = soft_assign(&z, &p, t).unwrap();
        let expected = 2.0 * eps * (q.as_slice()[0] + q.as_slice()[1]);
        assert!(
            (f_lq - expected).abs() <= 1e-8,
            "quantization force {f_lq} vs {expected}"
        );
        assert!(f_lols.abs() <= 1e-8, "reconstruction force {f_lols}");
    }
    println!("criterion 4a: micro-instance forces match 2eps(q_i+q_j) and 0");
}

#[test]
fn criterion_04b_block1_collapse_counts() {
    let summary = block1_summary();
    let (lq_ok, lq_detail) = check_detail(summary, "lq_zero_collapses");
    println!("criterion 4b (quantization side): {lq_detail}");
    assert!(lq_ok, "{lq_detail}");
    let (ols_ok, ols_detail) = check_detail(summary, "lols_collapses_at_hot_t");
    println!("criterion 4b (reconstruction side): {ols_detail}");
    assert!(
        ols_ok,
        "reconstruction-loss collapse at T=1.0 does not occur under these dynamics \
         (both losses settle at spread fixed points from data-sample init; see the \
         project notes for the escape-rate analysis): {ols_detail}"
    );
}

#[test]
fn criterion_05_block1_accuracy() {
    let summary = block1_summary();
    let (moons_ok, moons_detail) = check_detail(summary, "moons_acc_near_0847");
    let (blobs_ok, blobs_detail) = check_detail(summary, "blobs_acc_above_09");
    let (v_ok, v_detail) = check_detail(summary, "v_violations_zero");
    println!("criterion 5: {moons_detail}; {blobs_detail}; {v_detail}");
    assert!(moons_ok, "{moons_detail}");
    assert!(blobs_ok, "{blobs_detail}");
    assert!(v_ok, "{v_detail}");
}

#[test]
fn criterion_06_feedback_cycle() {
    // data-free side: the block-1 diagnostic on moons
    let summary = block1_summary();
    let (moons_ok, moons_detail) = check_detail(summary, "moons_feedback_negative");
    println!("criterion 6 (moons): {moons_detail}");
    assert!(moons_ok, "{moons_detail}");

    // digits side when the table is available
    match digits_csv() {
        Some(path) => {
            let data = load_digits_pca(&path, 20).unwrap();
            let corrs: Vec<f64> = (0..5)
                .map(|s| {
                    let out = train(
                        &data,
                        &block2::ddcl_config(s, ddcl_core::batch_trainer::LossKind::Quantization),
                        None,
                    )
                    .unwrap();
                    feedback_correlation(&out.trace).unwrap()
                })
                .collect();
            let (mean, _) = mean_std(&corrs);
            println!("criterion 6 (digits): mean corr(S,K) {mean:.3} over 5 seeds");
            assert!(mean <= -0.5, "digits corr {mean}");
        }
        None => {
            eprintln!(
                "criterion 6 (digits): SKIPPED - digits table unavailable; run \
                 scripts/fetch_digits.py and re-run"
            );
        }
    }
}

#[test]
fn criterion_07_variance_monotone_in_temperature() {
    let mut rng = Rng::new(707);
    for _ in 0..100 {
        let d = 1 + rng.below(8);
        let k = 2;
        let zr = Matrix::randn(1, d, &mut rng);
        let z: Vec<f64> = zr.row(0).iter().map(|v| v * 2.0).collect();
        let mut p = Matrix::randn(d, k, &mut rng);
        p.scale(2.0);
        let mut last = -1.0f64;
        for i in 0..20 {
            let t = 10f64.powf(-2.0 + 4.0 * i as f64 / 19.0);
            let q = soft_assign(&z, &p, t).unwrap();
            let v = variance_term_sample(&p, &q);
            assert!(v >= last - 1e-10, "V decreased at T={t}: {v} < {last}");
            last = v;
        }
        // endpoint limits
        let q_cold = soft_assign(&z, &p, 1e-8).unwrap();
        assert!(variance_term_sample(&p, &q_cold) <= 1e-10);
        let q_hot = soft_assign(&z, &p, 1e8).unwrap();
        let var_p = {
            let mean: Vec<f64> = (0..d)
                .map(|r| (0..k).map(|j| p.get(r, j)).sum::<f64>() / k as f64)
                .collect();
            (0..k)
                .map(|j| {
                    (0..d)
                        .map(|r| (p.get(r, j) - mean[r]).powi(2))
                        .sum::<f64>()
                })
                .sum::<f64>()
                / k as f64
        };
        assert!((variance_term_sample(&p, &q_hot) - var_p).abs() <= 1e-6);
    }
    println!("criterion 7: V(T) non-decreasing on the 20-point grid with correct endpoints");
}

#[test]
fn criterion_08_lyapunov_certificate() {
    let data = make_blobs(400, 4, 6.0, 0.5, 1).unwrap();
    let mut rng = Rng::new(808);
    let picks = rng.sample_without_replacement(400, 4);
    let p = Matrix::from_fn(2, 4, |r, j| data.features.get(picks[j], r));
    let q = vec![AssignmentVector::uniform(4); 400];
    let w = LossWeights {
        beta: 0.1,
        gamma: 0.1,
        eta: 1e-3,
        lambda: 0.05,
        entropy_sign: -1.0,
    };
    let cert = run_flow(&data.features, &p, &q, &w, 2000, 1e-3, 2e-2, 1e6).unwrap();
    println!(
        "criterion 8: max increase {:.2e}, bounded {}, final KKT residual {:.2e}",
        cert.max_energy_increase, cert.bounded, cert.final_kkt_residual
    );
    assert!(cert.coercivity_ok);
    assert!(cert.max_energy_increase <= 1e-9);
    assert!(cert.bounded);
    assert!(cert.final_kkt_residual < 1e-3);
}

#[test]
fn criterion_09_high_dimensional_ordering() {
    let out = block3::run(&out_dir("block3"), 5).unwrap();
    for c in &out.summary.checks {
        println!("criterion 9: [{}] {}: {}", if c.passed { "ok" } else { "FAIL" }, c.name, c.detail);
    }
    assert!(out.summary.all_checks_pass());
}

#[test]
fn criterion_10_end_to_end_ordering() {
    let Some(path) = digits_cssv_or_skip("criterion 10") else {
        return;
    };
    let out = block5::run(&path, &out_dir("block5"), 3).unwrap();
    for c in &out.summary.checks {
        println!(
            "criterion 10: [{}] {}: {}",
            if c.passed { "ok" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    let (dc_ok, dc_detail) = check_detail(&out.summary, "lq_beats_deepcluster_e2e");
    assert!(dc_ok, "{dc_detail}");
    let (warm_ok, warm_detail) =
        check_detail(&out.summary, "early_traces_agree_under_stop_gradient");
    assert!(warm_ok, "{warm_detail}");
    let (order_ok, order_detail) = check_detail(&out.summary, "lq_beats_lols_e2e");
    assert!(
        order_ok,
        "quantization-over-reconstruction ordering does not hold from random init \
         under any tested end-to-end configuration (the excluded warm-up phase appears \
         to be load-bearing; see the project notes): {order_detail}"
    );
}

fn digits_cssv_or_skip(tag: &str) -> Option<PathBuf> {
    match digits_csv() {
        Some(p) => Some(p),
        None => {
            eprintln!("{tag}: SKIPPED - digits table unavailable (scripts/fetch_digits.py)");
            None
        }
    }
}

#[test]
fn criterion_11_streaming_parity() {
    let path = digits_csv();
    let out = block6::run(path.as_deref(), &out_dir("block6"), 5).unwrap();
    for c in &out.summary.checks {
        println!(
            "criterion 11: [{}] {}: {}",
            if c.passed { "ok" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    assert!(out.summary.all_checks_pass());
}

#[test]
fn criterion_12_metric_oracles() {
    // exact assignment solver equals factorial brute force for k <= 6
    fn permutations(k: usize) -> Vec<Vec<usize>> {
        if k == 1 {
            return vec![vec![0]];
        }
        let mut out = Vec::new();
        for p in permutations(k - 1) {
            for pos in 0..k {
                let mut q = p.clone();
                q.insert(pos, k - 1);
                out.push(q);
            }
        }
        out
    }
    let mut rng = Rng::new(1212);
    for k in 2..=6 {
        for _ in 0..20 {
            let n = 40;
            let y_true: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
            let y_pred: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
            let fast = clustering_accuracy(&y_true, &y_pred).unwrap();
            let mut best = 0usize;
            for perm in permutations(k) {
                let agree = y_true
                    .iter()
                    .zip(&y_pred)
                    .filter(|&(&t, &p)| t == perm[p])
                    .count();
                best = best.max(agree);
            }
            assert!((fast - best as f64 / n as f64).abs() < 1e-12, "k={k}");
        }
    }

    // chance-level adjusted index for independent labelings
    for seed in 0..20 {
        let mut r = Rng::new(9000 + seed);
        let y_true: Vec<usize> = (0..1000).map(|_| r.below(4)).collect();
        let y_pred: Vec<usize> = (0..1000).map(|_| r.below(4)).collect();
        let v = ari(&y_true, &y_pred).unwrap();
        assert!(v.abs() <= 0.05, "seed {seed}: |ARI| = {}", v.abs());
    }

    // direct-formula oracles at 1e-10
    for _ in 0..50 {
        let n = 60;
        let y_true: Vec<usize> = (0..n).map(|_| rng.below(3)).collect();
        let y_pred: Vec<usize> = (0..n).map(|_| rng.below(4)).collect();
        let table = ContingencyTable::new(&y_true, &y_pred).unwrap();
        let nf = n as f64;
        let mut mi = 0.0;
        let (mut ht, mut hp) = (0.0, 0.0);
        for (i, row) in table.counts.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                if c > 0 {
                    let pij = c as f64 / nf;
                    mi += pij
                        * ((c as f64 * nf)
                            / (table.row_marginals[i] as f64 * table.col_marginals[j] as f64))
                            .ln();
                }
            }
        }
        for &c in &table.row_marginals {
            let p = c as f64 / nf;
            ht -= p * p.ln();
        }
        for &c in &table.col_marginals {
            let p = c as f64 / nf;
            hp -= p * p.ln();
        }
        let nmi_oracle = mi / (ht * hp).sqrt();
        assert!((nmi(&y_true, &y_pred).unwrap() - nmi_oracle).abs() <= 1e-10);

        let choose2 = |x: usize| x as f64 * (x as f64 - 1.0) / 2.0;
        let sum_ij: f64 = table.counts.iter().flatten().map(|&c| choose2(c)).sum();
        let sum_a: f64 = table.row_marginals.iter().map(|&c| choose2(c)).sum();
        let sum_b: f64 = table.col_marginals.iter().map(|&c| choose2(c)).sum();
        let total = choose2(n);
        let expected = sum_a * sum_b / total;
        let ari_oracle = (sum_ij - expected) / (0.5 * (sum_a + sum_b) - expected);
        assert!((ari(&y_true, &y_pred).unwrap() - ari_oracle).abs() <= 1e-10);
    }
    println!("criterion 12: assignment solver, chance-level, and plug-in oracles all match");
}

#[test]
fn criterion_13_projection_optimality() {
    // independent oracle: enumerate all support patterns and keep the
    // feasible equality-constrained optimum closest to v
    fn oracle(v: &[f64]) -> Vec<f64> {
        let k = v.len();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 1u32..(1 << k) {
            let support: Vec<usize> = (0..k).filter(|&i| mask & (1 << i) != 0).collect();
            let s: f64 = support.iter().map(|&i| v[i]).sum();
            let shift = (s - 1.0) / support.len() as f64;
            let mut cand = vec![0.0; k];
            let mut ok = true;
            for &i in &support {
                let x = v[i] - shift;
                if x < -1e-12 {
                    ok = false;
                    break;
                }
                cand[i] = x.max(0.0);
            }
            if !ok {
                continue;
            }
            let dist: f64 = cand.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
            if best.as_ref().map_or(true, |(d, _)| dist < *d) {
                best = Some((dist, cand));
            }
        }
        best.unwrap().1
    }

    let mut rng = Rng::new(1313);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let k = 2 + (i % 7);
        let v: Vec<f64> = (0..k).map(|_| rng.normal() * 3.0).collect();
        let got = project(&v).unwrap();
        let want = oracle(&v);
        for (a, b) in got.as_slice().iter().zip(&want) {
            let gap = (a - b).abs();
            worst = worst.max(gap);
            assert!(gap <= 1e-10, "k={k} v={v:?}");
        }
    }
    println!("criterion 13: 1000 projections match the active-set oracle (worst gap {worst:.2e})");
}

#[test]
fn mixture_helper_consistency() {
    // the reconstruction loss used throughout equals ||z - mixture||^2
    let mut rng = Rng::new(99);
    let z = Matrix::randn(1, 4, &mut rng);
    let p = Matrix::randn(4, 3, &mut rng);
    let q = random_simplex_point(3, &mut rng);
    let m = mixture(&p, &q);
    let direct: f64 = z.row(0).iter().zip(&m).map(|(a, b)| (a - b) * (a - b)).sum();
    assert!((ols_loss_sample(z.row(0), &p, &q) - direct).abs() < 1e-12);
}
