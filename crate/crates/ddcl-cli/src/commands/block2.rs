//! Digits benchmark: annealed prototype training on standardized principal
//! components against the alternating baseline and k-means, plus the
//! feedback-correlation and annealing-ablation measurements.

use crate::common::{ensure_out_dir, load_digits_pca, load_digits_raw, mean_std, write_text};
use crate::summary::{check, method_summary, ExperimentSummary, StructuralChecks};
use crate::svg::{line_chart, Series};
use ddcl_core::baselines::{deepcluster_lite, kmeans, DeepClusterConfig};
use ddcl_core::batch_trainer::{feedback_correlation, train, LossKind, RunConfig};
use ddcl_core::error::Result;
use ddcl_core::metrics;
use std::path::Path;

pub fn ddcl_config(seed: u64, loss_kind: LossKind) -> RunConfig {
    RunConfig {
        k: 10,
        t0: 2.0,
        t_min: 0.5,
        tau: 80.0,
        lambda: 0.05,
        lr_dcl: 0.2,
        epochs: 130,
        seed,
        loss_kind,
        ..RunConfig::default()
    }
}

fn fixed_t_config(seed: u64, t: f64) -> RunConfig {
    RunConfig {
        t0: t,
        t_min: t,
        ..ddcl_config(seed, LossKind::Quantization)
    }
}

pub struct Block2Outcome {
    pub summary: ExperimentSummary,
}

pub fn run(digits_csv: &Path, out_dir: &Path, seeds: usize) -> Result<Block2Outcome> {
    ensure_out_dir(out_dir)?;
    let data = load_digits_pca(digits_csv, 20)?;
    let raw = load_digits_raw(digits_csv)?;
    let truth = data.labels.clone().expect("digits table carries labels");

    let mut methods = Vec::new();
    let mut v_violations = 0usize;
    let mut corrs = Vec::new();
    let mut lq_accs = Vec::new();

    // DDCL arms
    for loss_kind in [LossKind::Quantization, LossKind::Ols] {
        let tag = if loss_kind == LossKind::Quantization {
            "DDCL(lq)"
        } else {
            "DDCL(lols)"
        };
        let runs = ddcl_core::parallel::map_indexed(seeds, |s| {
            train(&data, &ddcl_config(s as u64, loss_kind), None)
        });
        let (mut accs, mut nmis, mut aris) = (Vec::new(), Vec::new(), Vec::new());
        for (s, run) in runs.into_iter().enumerate() {
            let out = run?;
            v_violations += out.trace.rows.iter().filter(|r| r.v < -1e-12).count();
            let last = out.trace.rows.last().unwrap();
            accs.push(last.acc.unwrap());
            nmis.push(last.nmi.unwrap());
            aris.push(last.ari.unwrap());
            if loss_kind == LossKind::Quantization {
                corrs.push(feedback_correlation(&out.trace)?);
                lq_accs.push(last.acc.unwrap());
            }
            write_text(
                &out_dir.join(format!(
                    "trace_{}_seed{s}.csv",
                    tag.replace(['(', ')'], "_")
                )),
                &out.trace.to_csv(),
            )?;
        }
        methods.push(method_summary(tag, &accs, &nmis, &aris));
    }

    // DeepCluster-lite with an MLP over the reduced features
    {
        let runs = ddcl_core::parallel::map_indexed(seeds, |s| {
            let config = DeepClusterConfig {
                k: 10,
                rounds: 10,
                backbone_dims: Some(vec![64, 32]),
                pca_components: Some(16),
                whiten: true,
                l2_normalize: true,
                kmeans_n_init: 20,
                head_epochs: 10,
                lr: 0.05,
                seed: s as u64,
            };
            deepcluster_lite(&data, &config)
        });
        let (mut accs, mut nmis, mut aris) = (Vec::new(), Vec::new(), Vec::new());
        for run in runs {
            let (labels, _) = run?;
            accs.push(metrics::clustering_accuracy(&truth, &labels)?);
            nmis.push(metrics::nmi(&truth, &labels)?);
            aris.push(metrics::ari(&truth, &labels)?);
        }
        methods.push(method_summary("DeepCluster-lite", &accs, &nmis, &aris));
    }

    // k-means on the raw 64-d table and on the reduced features
    for (tag, feats) in [("k-means(raw)", &raw.features), ("k-means+PCA", &data.features)] {
        let runs = ddcl_core::parallel::map_indexed(seeds, |s| {
            kmeans(feats, 10, 20, 100, 1000 + s as u64)
        });
        let (mut accs, mut nmis, mut aris) = (Vec::new(), Vec::new(), Vec::new());
        for run in runs {
            let r = run?;
            accs.push(metrics::clustering_accuracy(&truth, &r.labels)?);
            nmis.push(metrics::nmi(&truth, &r.labels)?);
            aris.push(metrics::ari(&truth, &r.labels)?);
        }
        methods.push(method_summary(tag, &accs, &nmis, &aris));
    }

    // annealing ablation: schedule vs fixed temperatures
    let mut ablation = Vec::new();
    for (tag, t) in [("fixed_T0.1", 0.1), ("fixed_T0.5", 0.5), ("fixed_T2.0", 2.0)] {
        let runs = ddcl_core::parallel::map_indexed(seeds, |s| {
            train(&data, &fixed_t_config(s as u64, t), None)
        });
        let mut accs = Vec::new();
        for run in runs {
            accs.push(run?.trace.rows.last().unwrap().acc.unwrap());
        }
        let (mean, _) = mean_std(&accs);
        ablation.push((tag.to_string(), mean));
    }
    let (annealed_mean, _) = mean_std(&lq_accs);
    let ablation_ok = ablation
        .iter()
        .filter(|(tag, _)| tag != "fixed_T0.5")
        .all(|(_, m)| annealed_mean > *m);

    // accuracy-over-epochs figure for one representative run
    {
        let out = train(&data, &ddcl_config(0, LossKind::Quantization), None)?;
        let pts: Vec<(f64, f64)> = out
            .trace
            .rows
            .iter()
            .map(|r| (r.epoch as f64, r.acc.unwrap_or(0.0)))
            .collect();
        write_text(
            &out_dir.join("accuracy_curve_seed0.svg"),
            &line_chart(
                "Digits accuracy over training (seed 0)",
                "epoch",
                "accuracy",
                &[Series {
                    label: "DDCL(lq)".into(),
                    points: pts,
                }],
                false,
            ),
        )?;
    }

    let (corr_mean, _) = mean_std(&corrs);
    let checks = vec![
        check(
            "ddcl_lq_acc_in_range",
            (0.50..=0.70).contains(&annealed_mean),
            format!("annealed quantization-loss mean acc {annealed_mean:.3}"),
        ),
        check(
            "feedback_strongly_negative",
            corr_mean <= -0.5,
            format!("mean corr(S,K) {corr_mean:.3}"),
        ),
        check(
            "annealing_beats_fixed_extremes",
            ablation_ok,
            format!("annealed {annealed_mean:.3} vs {ablation:?}"),
        ),
        check(
            "v_violations_zero",
            v_violations == 0,
            format!("{v_violations} negative variance rows"),
        ),
    ];

    let summary = ExperimentSummary {
        block: "block2".into(),
        seeds,
        methods,
        structural: StructuralChecks {
            v_violations,
            collapse_counts: None,
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
    Ok(Block2Outcome { summary })
}
