//! Structural verification on synthetic 2-D datasets: the loss-gap identity,
//! collapse counting across temperatures, accuracy, and the feedback
//! correlation diagnostic.

use crate::common::{ensure_out_dir, mean_std, standardize, write_text};
use crate::summary::{check, method_summary, ExperimentSummary, StructuralChecks};
use crate::svg::{line_chart, Series};
use ddcl_core::batch_trainer::{
    detect_collapse, feedback_correlation, train, LossKind, RunConfig,
};
use ddcl_core::datasets::{make_blobs, make_circles, make_moons, make_spiral, LabeledDataset};
use ddcl_core::error::Result;
use serde_json::json;
use std::collections::BTreeMap;
use std::path::Path;

pub const TEMPERATURES: [f64; 3] = [0.1, 0.5, 1.0];

pub fn datasets() -> Result<Vec<(LabeledDataset, usize)>> {
    Ok(vec![
        (make_moons(300, 0.05, 1)?, 2),
        (make_circles(300, 0.05, 0.5, 1)?, 2),
        (make_spiral(300, 2.0, 0.05, 1)?, 2),
        (make_blobs(400, 4, 6.0, 0.5, 1)?, 4),
    ])
}

pub fn sweep_config(k: usize, t: f64, seed: u64, loss_kind: LossKind) -> RunConfig {
    RunConfig {
        k,
        t0: t,
        t_min: t,
        tau: 80.0,
        lambda: 0.05,
        lr_dcl: 0.5,
        epochs: 300,
        seed,
        loss_kind,
        ..RunConfig::default()
    }
}

/// Feedback diagnostic: an over-dispersed start relaxes its separation while
/// annealing sharpens the assignments, exposing both arms of the cycle.
pub fn feedback_config(seed: u64) -> RunConfig {
    RunConfig {
        k: 2,
        t0: 1.0,
        t_min: 0.1,
        tau: 40.0,
        lambda: 0.05,
        lr_dcl: 0.03,
        epochs: 250,
        seed,
        loss_kind: LossKind::Quantization,
        init_dispersion: 2.0,
        ..RunConfig::default()
    }
}

pub struct Block1Outcome {
    pub summary: ExperimentSummary,
}

pub fn run(out_dir: &Path, seeds: usize) -> Result<Block1Outcome> {
    ensure_out_dir(out_dir)?;
    let mut v_violations = 0usize;
    let mut collapse_counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut acc_by_method: BTreeMap<String, (Vec<f64>, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut moons_accs: Vec<f64> = Vec::new();
    let mut blobs_accs: Vec<f64> = Vec::new();
    let mut lq_collapses = 0usize;
    let mut sep_plot: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();

    for (data, k) in datasets()? {
        let std_data = LabeledDataset {
            features: standardize(&data.features),
            labels: data.labels.clone(),
            name: data.name.clone(),
        };
        for loss_kind in [LossKind::Quantization, LossKind::Ols] {
            let loss_tag = match loss_kind {
                LossKind::Quantization => "lq",
                LossKind::Ols => "lols",
                LossKind::SoftCe => "softce",
            };
            for &t in &TEMPERATURES {
                let runs = ddcl_core::parallel::map_indexed(seeds, |s| {
                    let config = sweep_config(k, t, s as u64, loss_kind);
                    train(&std_data, &config, None)
                });
                let mut final_seps = Vec::new();
                for (s, run) in runs.into_iter().enumerate() {
                    let out = run?;
                    for row in &out.trace.rows {
                        if row.v < -1e-12 {
                            v_violations += 1;
                        }
                    }
                    let verdict =
                        detect_collapse(&out.trace, &out.initial_prototypes, &out.prototypes)?;
                    if verdict.collapsed {
                        *collapse_counts
                            .entry(format!("{}_{}_T{t}", std_data.name, loss_tag))
                            .or_default() += 1;
                        if loss_kind == LossKind::Quantization {
                            lq_collapses += 1;
                        }
                    }
                    final_seps.push(verdict.final_s);
                    let acc = out.trace.rows.last().and_then(|r| r.acc).unwrap_or(0.0);
                    let entry = acc_by_method
                        .entry(format!("DDCL({loss_tag}) {}", std_data.name))
                        .or_default();
                    entry.0.push(acc);
                    entry
                        .1
                        .push(out.trace.rows.last().and_then(|r| r.nmi).unwrap_or(0.0));
                    entry
                        .2
                        .push(out.trace.rows.last().and_then(|r| r.ari).unwrap_or(0.0));
                    if loss_kind == LossKind::Quantization {
                        if std_data.name == "moons" {
                            moons_accs.push(acc);
                        }
                        if std_data.name == "blobs" {
                            blobs_accs.push(acc);
                        }
                    }
                    let trace_path = out_dir.join(format!(
                        "trace_{}_{}_T{t}_seed{s}.csv",
                        std_data.name, loss_tag
                    ));
                    write_text(&trace_path, &out.trace.to_csv())?;
                }
                let (sep_mean, _) = mean_std(&final_seps);
                sep_plot
                    .entry(format!("{} {}", std_data.name, loss_tag))
                    .or_default()
                    .push((t, sep_mean));
            }
        }
    }

    // feedback diagnostic on moons
    let moons = datasets()?.remove(0).0;
    let std_moons = LabeledDataset {
        features: standardize(&moons.features),
        labels: moons.labels.clone(),
        name: moons.name.clone(),
    };
    let corr_runs = ddcl_core::parallel::map_indexed(seeds, |s| {
        let out = train(&std_moons, &feedback_config(s as u64), None)?;
        feedback_correlation(&out.trace)
    });
    let corrs: Vec<f64> = corr_runs.into_iter().collect::<Result<Vec<_>>>()?;
    let (corr_mean, _) = mean_std(&corrs);

    // separation-vs-T figure
    let series: Vec<Series> = sep_plot
        .into_iter()
        .map(|(label, points)| Series { label, points })
        .collect();
    write_text(
        &out_dir.join("separation_vs_temperature.svg"),
        &line_chart(
            "Final prototype separation vs temperature",
            "temperature",
            "mean final S(P)",
            &series,
            true,
        ),
    )?;

    let (moons_mean, _) = mean_std(&moons_accs);
    let (blobs_mean, _) = mean_std(&blobs_accs);
    let ols_t1_collapses: usize = collapse_counts
        .iter()
        .filter(|(k, _)| (k.starts_with("moons_lols") || k.starts_with("circles_lols")) && k.ends_with("T1"))
        .map(|(_, v)| v)
        .sum();

    let checks = vec![
        check(
            "v_violations_zero",
            v_violations == 0,
            format!("{v_violations} negative variance rows"),
        ),
        check(
            "lq_zero_collapses",
            lq_collapses == 0,
            format!("{lq_collapses} quantization-loss collapses"),
        ),
        check(
            "lols_collapses_at_hot_t",
            ols_t1_collapses > 0,
            format!("{ols_t1_collapses} reconstruction-loss collapses at T=1.0 on moons/circles"),
        ),
        check(
            "moons_acc_near_0847",
            (moons_mean - 0.847).abs() <= 0.05,
            format!("moons mean acc {moons_mean:.3}"),
        ),
        check(
            "blobs_acc_above_09",
            blobs_mean > 0.9,
            format!("blobs mean acc {blobs_mean:.3}"),
        ),
        check(
            "moons_feedback_negative",
            corr_mean <= -0.3,
            format!("moons mean corr(S,K) {corr_mean:.3}"),
        ),
    ];

    let methods = acc_by_method
        .into_iter()
        .map(|(name, (a, n, r))| method_summary(&name, &a, &n, &r))
        .collect();
    let summary = ExperimentSummary {
        block: "block1".into(),
        seeds,
        methods,
        structural: StructuralChecks {
            v_violations,
            collapse_counts: Some(json!(collapse_counts)),
            feedback_correlation: Some(corr_mean),
            lyapunov: None,
            simplex_violation_max: None,
        },
        checks,
    };
    write_text(
        &out_dir.join("summary.json"),
        &serde_json::to_string_pretty(&summary).unwrap(),
    )?;
    Ok(Block1Outcome { summary })
}
