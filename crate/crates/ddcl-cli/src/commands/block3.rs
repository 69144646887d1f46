//! High-dimensional sweep: the same two-cluster problem embedded in rising
//! ambient noise, comparing subspace-confined prototype training against
//! ambient-space methods.

use crate::common::{ensure_out_dir, mean_std, write_text};
use crate::summary::{check, method_summary, ExperimentSummary, StructuralChecks};
use crate::svg::{line_chart, Series};
use ddcl_core::baselines::{deepcluster_lite, kmeans, pca_standardize, DeepClusterConfig, PcaOptions};
use ddcl_core::batch_trainer::{train, LossKind, RunConfig};
use ddcl_core::datasets::make_madelon_style;
use ddcl_core::dcl::PrototypeMode;
use ddcl_core::error::Result;
use ddcl_core::metrics;
use std::collections::BTreeMap;
use std::path::Path;

pub const DIMS: [usize; 6] = [10, 50, 200, 500, 1000, 5000];
const N: usize = 100;

/// Top eigenvalue of XᵀX by power iteration (v ← Xᵀ(Xv)), used to scale the
/// dual-mode learning rate.
pub fn gram_top_eigenvalue(z: &ddcl_core::numerics::Matrix, seed: u64) -> f64 {
    let (n, d) = (z.rows(), z.cols());
    let mut rng = ddcl_core::numerics::Rng::new(seed);
    let mut v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    let mut eig = 1.0;
    for _ in 0..50 {
        let mut zv = vec![0.0; n];
        for i in 0..n {
            zv[i] = ddcl_core::numerics::dot(z.row(i), &v);
        }
        let mut next = vec![0.0; d];
        for i in 0..n {
            for (nj, &zij) in next.iter_mut().zip(z.row(i)) {
                *nj += zij * zv[i];
            }
        }
        let norm: f64 = next.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
        eig = norm;
        for (vi, ni) in v.iter_mut().zip(&next) {
            *vi = ni / norm;
        }
    }
    eig
}

pub fn ddcl_config(seed: u64, loss_kind: LossKind, gram_top: f64) -> RunConfig {
    // dual-mode updates pull back through the batch Gram matrix; scale the
    // step so the effective prototype step along the leading data direction
    // stays 0.5
    RunConfig {
        k: 2,
        t0: 2.0,
        t_min: 0.5,
        tau: 40.0,
        lambda: 0.05,
        lr_dcl: 0.5 / gram_top.max(1.0),
        epochs: 200,
        seed,
        loss_kind,
        prototype_mode: PrototypeMode::DualW2,
        ..RunConfig::default()
    }
}

pub struct Block3Outcome {
    pub summary: ExperimentSummary,
}

pub fn run(out_dir: &Path, seeds: usize) -> Result<Block3Outcome> {
    ensure_out_dir(out_dir)?;
    // mean acc per (method, d)
    let mut table: BTreeMap<(String, usize), (f64, f64)> = BTreeMap::new();
    let mut methods_out = Vec::new();

    for &d in &DIMS {
        let mut per_method: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for seed in 0..seeds {
            let data = make_madelon_style(N, d, 5, 4.0, 7 + seed as u64)?;
            let truth = data.labels.clone().unwrap();

            let gram_top = gram_top_eigenvalue(&data.features, 42);
            for loss_kind in [LossKind::Quantization, LossKind::Ols] {
                let tag = if loss_kind == LossKind::Quantization {
                    "DDCL(lq)"
                } else {
                    "DDCL(lols)"
                };
                let out = train(&data, &ddcl_config(seed as u64, loss_kind, gram_top), None)?;
                let acc = out.trace.rows.last().unwrap().acc.unwrap();
                per_method.entry(tag.into()).or_default().push(acc);
            }

            let km = kmeans(&data.features, 2, 20, 100, 100 + seed as u64)?;
            per_method
                .entry("k-means(raw)".into())
                .or_default()
                .push(metrics::clustering_accuracy(&truth, &km.labels)?);

            let m = 10.min(N.min(d));
            let (reduced, _) = pca_standardize(
                &data.features,
                PcaOptions {
                    n_components: m,
                    whiten: true,
                    standardize: false,
                },
            )?;
            let km_pca = kmeans(&reduced, 2, 20, 100, 200 + seed as u64)?;
            per_method
                .entry("k-means+PCA".into())
                .or_default()
                .push(metrics::clustering_accuracy(&truth, &km_pca.labels)?);

            let dc = deepcluster_lite(
                &data,
                &DeepClusterConfig {
                    k: 2,
                    rounds: 6,
                    backbone_dims: Some(vec![32, 16]),
                    pca_components: Some(m),
                    whiten: true,
                    l2_normalize: true,
                    kmeans_n_init: 20,
                    head_epochs: 8,
                    lr: 0.05,
                    seed: 300 + seed as u64,
                },
            )?;
            per_method
                .entry("DeepCluster-lite".into())
                .or_default()
                .push(metrics::clustering_accuracy(&truth, &dc.0)?);
        }
        for (m, accs) in per_method {
            let (mean, std) = mean_std(&accs);
            table.insert((m, d), (mean, std));
        }
    }

    // table CSV
    {
        let mut csv = String::from("method,d,acc_mean,acc_std\n");
        for ((m, d), (mean, std)) in &table {
            csv.push_str(&format!("{m},{d},{mean},{std}\n"));
        }
        write_text(&out_dir.join("accuracy_by_dimension.csv"), &csv)?;
    }

    // log-axis accuracy plot with the d = n transition implicit in the axis
    let mut by_method: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for ((m, d), (mean, _)) in &table {
        by_method
            .entry(m.clone())
            .or_default()
            .push((*d as f64, *mean));
    }
    let series: Vec<Series> = by_method
        .iter()
        .map(|(label, points)| Series {
            label: label.clone(),
            points: points.clone(),
        })
        .collect();
    write_text(
        &out_dir.join("accuracy_vs_dimension.svg"),
        &line_chart(
            &format!("Accuracy vs ambient dimension (n = {N})"),
            "dimension",
            "mean accuracy",
            &series,
            true,
        ),
    )?;

    let lq_ge_ols_everywhere = DIMS.iter().all(|&d| {
        table[&("DDCL(lq)".to_string(), d)].0 >= table[&("DDCL(lols)".to_string(), d)].0 - 1e-12
    });
    let lq_d10 = table[&("DDCL(lq)".to_string(), 10)].0;
    let lq_d200 = table[&("DDCL(lq)".to_string(), 200)].0;
    let dc_d200 = table[&("DeepCluster-lite".to_string(), 200)].0;

    let checks = vec![
        check(
            "lq_ge_lols_at_every_d",
            lq_ge_ols_everywhere,
            format!(
                "per-d means {:?}",
                DIMS.iter()
                    .map(|&d| (
                        d,
                        table[&("DDCL(lq)".to_string(), d)].0,
                        table[&("DDCL(lols)".to_string(), d)].0
                    ))
                    .collect::<Vec<_>>()
            ),
        ),
        check(
            "lq_d10_above_095",
            lq_d10 >= 0.95,
            format!("d=10 mean acc {lq_d10:.3}"),
        ),
        check(
            "lq_beats_deepcluster_at_d200",
            lq_d200 > dc_d200,
            format!("d=200: {lq_d200:.3} vs {dc_d200:.3}"),
        ),
    ];

    for (name, _) in by_method.iter() {
        let accs: Vec<f64> = DIMS
            .iter()
            .map(|&d| table[&(name.clone(), d)].0)
            .collect();
        methods_out.push(method_summary(name, &accs, &[], &[]));
    }

    let summary = ExperimentSummary {
        block: "block3".into(),
        seeds,
        methods: methods_out,
        structural: StructuralChecks::default(),
        checks,
    };
    write_text(
        &out_dir.join("summary.json"),
        &serde_json::to_string_pretty(&summary).unwrap(),
    )?;
    Ok(Block3Outcome { summary })
}
