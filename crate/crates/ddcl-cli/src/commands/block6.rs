//! Streaming comparison: single-pass incremental prototype training against
//! mini-batch k-means on the same sample stream.

use crate::common::{ensure_out_dir, load_digits_pca, mean_std, write_text};
use crate::summary::{check, method_summary, ExperimentSummary, StructuralChecks};
use crate::svg::{line_chart, Series};
use ddcl_core::baselines::minibatch_kmeans;
use ddcl_core::datasets::{make_blobs, LabeledDataset};
use ddcl_core::error::Result;
use ddcl_core::incremental_trainer::{stream_train, StreamConfig};
use ddcl_core::metrics;
use ddcl_core::numerics::Rng;
use std::path::Path;

pub fn stream_config(k: usize, seed: u64) -> StreamConfig {
    StreamConfig {
        k,
        batch_size: 50,
        t0: 2.0,
        t_min: 0.3,
        tau: 30.0,
        lr: 0.5,
        lambda: 0.0,
        mu: 0.05,
        refine_sweeps: 1,
        seed,
    }
}

pub struct Block6Outcome {
    pub summary: ExperimentSummary,
}

pub fn run(digits_csv: Option<&Path>, out_dir: &Path, seeds: usize) -> Result<Block6Outcome> {
    ensure_out_dir(out_dir)?;
    let (data, k) = match digits_csv {
        Some(path) => (load_digits_pca(path, 20)?, 10),
        None => (make_blobs(1200, 4, 6.0, 0.5, 1)?, 4),
    };
    let truth = data.labels.clone().expect("labeled stream");
    run_on(&data, k, out_dir, seeds, &truth)
}

fn run_on(
    data: &LabeledDataset,
    k: usize,
    out_dir: &Path,
    seeds: usize,
    truth: &[usize],
) -> Result<Block6Outcome> {
    let n = data.n();
    let mut ddcl_accs = Vec::new();
    let mut ddcl_nmis = Vec::new();
    let mut ddcl_aris = Vec::new();
    let mut mbk_accs = Vec::new();
    let mut mbk_nmis = Vec::new();
    let mut mbk_aris = Vec::new();
    let mut max_violation: f64 = 0.0;
    let mut sep_growth_ok = true;
    let mut acc_series = Vec::new();
    let mut sep_series = Vec::new();

    for seed in 0..seeds {
        let mut order: Vec<usize> = (0..n).collect();
        let mut order_rng = Rng::new(5000 + seed as u64);
        order_rng.shuffle(&mut order);

        let out = stream_train(
            &data.features,
            Some(truth),
            &order,
            &stream_config(k, seed as u64),
        )?;
        max_violation = max_violation.max(out.max_simplex_violation);
        if out.final_separation < out.first_batch_separation {
            sep_growth_ok = false;
        }
        ddcl_accs.push(metrics::clustering_accuracy(truth, &out.predictions)?);
        ddcl_nmis.push(metrics::nmi(truth, &out.predictions)?);
        ddcl_aris.push(metrics::ari(truth, &out.predictions)?);
        write_text(
            &out_dir.join(format!("trace_incremental_seed{seed}.csv")),
            &out.trace.to_csv(),
        )?;
        if seed == 0 {
            acc_series.push(Series {
                label: "incremental".into(),
                points: out
                    .trace
                    .rows
                    .iter()
                    .map(|r| (r.samples_seen.unwrap_or(0) as f64, r.acc.unwrap_or(0.0)))
                    .collect(),
            });
            sep_series.push(Series {
                label: "S(P)".into(),
                points: out
                    .trace
                    .rows
                    .iter()
                    .map(|r| (r.samples_seen.unwrap_or(0) as f64, r.s))
                    .collect(),
            });
        }

        let mbk = minibatch_kmeans(&data.features, &order, k, 50, 9000 + seed as u64)?;
        mbk_accs.push(metrics::clustering_accuracy(truth, &mbk.labels)?);
        mbk_nmis.push(metrics::nmi(truth, &mbk.labels)?);
        mbk_aris.push(metrics::ari(truth, &mbk.labels)?);
    }

    write_text(
        &out_dir.join("accuracy_vs_samples.svg"),
        &line_chart(
            "Streaming accuracy vs samples seen (seed 0)",
            "samples seen",
            "accuracy over seen samples",
            &acc_series,
            false,
        ),
    )?;
    write_text(
        &out_dir.join("separation_vs_samples.svg"),
        &line_chart(
            "Prototype separation along the stream (seed 0)",
            "samples seen",
            "S(P)",
            &sep_series,
            false,
        ),
    )?;

    let (ddcl_mean, ddcl_std) = mean_std(&ddcl_accs);
    let (mbk_mean, mbk_std) = mean_std(&mbk_accs);
    let pooled = ((ddcl_std * ddcl_std + mbk_std * mbk_std) / 2.0).sqrt();
    let parity = (ddcl_mean - mbk_mean).abs() <= 2.0 * pooled.max(1e-6);

    let checks = vec![
        check(
            "streaming_parity",
            parity,
            format!(
                "incremental {ddcl_mean:.3}±{ddcl_std:.3} vs mini-batch {mbk_mean:.3}±{mbk_std:.3}"
            ),
        ),
        check(
            "simplex_feasible_every_step",
            max_violation <= 1e-9,
            format!("max violation {max_violation:.2e}"),
        ),
        check(
            "separation_endpoint_grows",
            sep_growth_ok,
            "final S(P) at or above the first-batch value in every run".into(),
        ),
    ];

    let methods = vec![
        method_summary("DDCL(incremental)", &ddcl_accs, &ddcl_nmis, &ddcl_aris),
        method_summary("MiniBatchKMeans", &mbk_accs, &mbk_nmis, &mbk_aris),
    ];
    let summary = ExperimentSummary {
        block: "block6".into(),
        seeds,
        methods,
        structural: StructuralChecks {
            v_violations: 0,
            collapse_counts: None,
            feedback_correlation: None,
            lyapunov: None,
            simplex_violation_max: Some(max_violation),
        },
        checks,
    };
    write_text(
        &out_dir.join("summary.json"),
        &serde_json::to_string_pretty(&summary).unwrap(),
    )?;
    Ok(Block6Outcome { summary })
}
