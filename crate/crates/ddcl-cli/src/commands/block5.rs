//! End-to-end training with a trainable MLP feature extractor: the two
//! prototype losses diverge only once the backbone co-adapts, and both are
//! compared against the alternating baseline under the same budget.

use crate::common::{ensure_out_dir, load_digits_raw, mean_std, standardize, write_text};
use crate::summary::{check, method_summary, ExperimentSummary, StructuralChecks};
use crate::svg::{line_chart, Series};
use ddcl_core::backbone::MlpParams;
use ddcl_core::baselines::{deepcluster_lite, kmeans, pca_standardize, DeepClusterConfig, PcaOptions};
use ddcl_core::batch_trainer::{train, LossKind, RunConfig};
use ddcl_core::datasets::LabeledDataset;
use ddcl_core::dcl::PrototypeMode;
use ddcl_core::error::Result;
use ddcl_core::metrics;
use ddcl_core::numerics::Rng;
use std::path::Path;

pub const BACKBONE_DIMS: [usize; 4] = [64, 256, 128, 32];

pub fn e2e_config(seed: u64, loss_kind: LossKind) -> RunConfig {
    RunConfig {
        k: 10,
        t0: 2.0,
        t_min: 0.5,
        tau: 60.0,
        beta: 1.0,
        // the explicit push-apart term must stay dominated by the quadratic
        // tether: eta < lambda / (2 C(k,2)); k = 10 gives 45 pairs
        eta: 2.5e-4,
        eta_ramp_epochs: 100,
        lambda: 0.05,
        lr_backbone: 0.005,
        lr_dcl: 0.05,
        epochs: 150,
        seed,
        stop_gradient: true,
        release_stop_gradient_at: Some(40),
        loss_kind,
        prototype_mode: PrototypeMode::DirectP,
        batch_size: Some(256),
        ..RunConfig::default()
    }
}

pub struct Block5Outcome {
    pub summary: ExperimentSummary,
}

pub fn run(digits_csv: &Path, out_dir: &Path, seeds: usize) -> Result<Block5Outcome> {
    ensure_out_dir(out_dir)?;
    let raw = load_digits_raw(digits_csv)?;
    let data = LabeledDataset {
        features: standardize(&raw.features),
        labels: raw.labels.clone(),
        name: "digits_std".into(),
    };
    let truth = data.labels.clone().unwrap();

    let mut methods = Vec::new();
    let mut means = std::collections::BTreeMap::new();
    let early_gap;

    for loss_kind in [LossKind::Quantization, LossKind::Ols] {
        let tag = if loss_kind == LossKind::Quantization {
            "DDCL(lq,e2e)"
        } else {
            "DDCL(lols,e2e)"
        };
        let runs = ddcl_core::parallel::map_indexed(seeds, |s| {
            let mut rng = Rng::new(900 + s as u64);
            let mut backbone = MlpParams::with_final_batchnorm(&BACKBONE_DIMS, &mut rng)?;
            train(&data, &e2e_config(s as u64, loss_kind), Some(&mut backbone))
        });
        let (mut accs, mut nmis, mut aris) = (Vec::new(), Vec::new(), Vec::new());
        for (s, run) in runs.into_iter().enumerate() {
            let out = run?;
            let last = out.trace.rows.last().unwrap();
            accs.push(last.acc.unwrap());
            nmis.push(last.nmi.unwrap());
            aris.push(last.ari.unwrap());
            write_text(
                &out_dir.join(format!("trace_{}_seed{s}.csv", tag.replace(['(', ')', ','], "_"))),
                &out.trace.to_csv(),
            )?;
        }
        let (mean, _) = mean_std(&accs);
        means.insert(tag.to_string(), mean);
        methods.push(method_summary(tag, &accs, &nmis, &aris));
    }

    // early-epoch agreement of the two losses from an identical start
    {
        let run_one = |loss_kind: LossKind| -> Result<Vec<f64>> {
            let mut rng = Rng::new(900);
            let mut backbone = MlpParams::with_final_batchnorm(&BACKBONE_DIMS, &mut rng)?;
            let config = RunConfig {
                epochs: 12,
                stop_gradient: true,
                release_stop_gradient_at: None,
                ..e2e_config(0, loss_kind)
            };
            let out = train(&data, &config, Some(&mut backbone))?;
            Ok(out.trace.rows.iter().map(|r| r.l_ols).collect())
        };
        let a = run_one(LossKind::Quantization)?;
        let b = run_one(LossKind::Ols)?;
        early_gap = a
            .iter()
            .zip(&b)
            .take(3)
            .map(|(x, y)| (x - y).abs() / x.abs().max(1e-12))
            .fold(0.0, f64::max);
    }

    // DeepCluster end-to-end with the same backbone shape and budget
    {
        let runs = ddcl_core::parallel::map_indexed(seeds, |s| {
            deepcluster_lite(
                &data,
                &DeepClusterConfig {
                    k: 10,
                    rounds: 10,
                    backbone_dims: Some(BACKBONE_DIMS[1..].to_vec()),
                    pca_components: Some(20),
                    whiten: true,
                    l2_normalize: true,
                    kmeans_n_init: 20,
                    head_epochs: 20,
                    lr: 0.02,
                    seed: 500 + s as u64,
                },
            )
        });
        let (mut accs, mut nmis, mut aris) = (Vec::new(), Vec::new(), Vec::new());
        for run in runs {
            let (labels, _) = run?;
            accs.push(metrics::clustering_accuracy(&truth, &labels)?);
            nmis.push(metrics::nmi(&truth, &labels)?);
            aris.push(metrics::ari(&truth, &labels)?);
        }
        let (mean, _) = mean_std(&accs);
        means.insert("DeepCluster(e2e)".into(), mean);
        methods.push(method_summary("DeepCluster(e2e)", &accs, &nmis, &aris));
    }

    // fixed-feature reference
    {
        let (reduced, _) = pca_standardize(
            &raw.features,
            PcaOptions {
                n_components: 20,
                whiten: false,
                standardize: true,
            },
        )?;
        let runs = ddcl_core::parallel::map_indexed(seeds, |s| {
            kmeans(&reduced, 10, 20, 100, 700 + s as u64)
        });
        let (mut accs, mut nmis, mut aris) = (Vec::new(), Vec::new(), Vec::new());
        for run in runs {
            let r = run?;
            accs.push(metrics::clustering_accuracy(&truth, &r.labels)?);
            nmis.push(metrics::nmi(&truth, &r.labels)?);
            aris.push(metrics::ari(&truth, &r.labels)?);
        }
        methods.push(method_summary("k-means+PCA(fixed)", &accs, &nmis, &aris));
    }

    // per-epoch accuracy figure for the two end-to-end losses (seed 0)
    {
        let mut series = Vec::new();
        for loss_kind in [LossKind::Quantization, LossKind::Ols] {
            let mut rng = Rng::new(900);
            let mut backbone = MlpParams::with_final_batchnorm(&BACKBONE_DIMS, &mut rng)?;
            let out = train(&data, &e2e_config(0, loss_kind), Some(&mut backbone))?;
            series.push(Series {
                label: format!("{loss_kind:?}"),
                points: out
                    .trace
                    .rows
                    .iter()
                    .map(|r| (r.epoch as f64, r.acc.unwrap_or(0.0)))
                    .collect(),
            });
        }
        write_text(
            &out_dir.join("e2e_accuracy_curves.svg"),
            &line_chart(
                "End-to-end accuracy over training (seed 0)",
                "epoch",
                "accuracy",
                &series,
                false,
            ),
        )?;
    }

    let lq = means["DDCL(lq,e2e)"];
    let lols = means["DDCL(lols,e2e)"];
    let dc = means["DeepCluster(e2e)"];
    let checks = vec![
        check(
            "lq_beats_lols_e2e",
            lq > lols,
            format!("{lq:.3} vs {lols:.3}"),
        ),
        check(
            "lq_beats_deepcluster_e2e",
            lq > dc,
            format!("{lq:.3} vs {dc:.3}"),
        ),
        check(
            "early_traces_agree_under_stop_gradient",
            early_gap <= 0.05,
            format!("max relative reconstruction-loss gap over first epochs {early_gap:.4}"),
        ),
    ];

    let summary = ExperimentSummary {
        block: "block5".into(),
        seeds,
        methods,
        structural: StructuralChecks::default(),
        checks,
    };
    write_text(
        &out_dir.join("summary.json"),
        &serde_json::to_string_pretty(&summary).unwrap(),
    )?;
    Ok(Block5Outcome { summary })
}
