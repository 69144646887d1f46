//! Shared helpers for the experiment commands: output directories,
//! preprocessing, aggregation, and the digits feature table.

use ddcl_core::baselines::{pca_standardize, PcaOptions};
use ddcl_core::datasets::{load_csv, LabeledDataset};
use ddcl_core::error::{DdclError, Result};
use ddcl_core::numerics::Matrix;
use std::path::{Path, PathBuf};

pub fn ensure_out_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| DdclError::Io {
        path: out.display().to_string(),
        source: e,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| DdclError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Per-feature zero-mean unit-variance scaling of a feature batch.
pub fn standardize(features: &Matrix) -> Matrix {
    let (n, d) = (features.rows(), features.cols());
    let mut mean = vec![0.0; d];
    let mut sd = vec![0.0; d];
    for j in 0..d {
        let m: f64 = (0..n).map(|i| features.get(i, j)).sum::<f64>() / n as f64;
        let v: f64 = (0..n).map(|i| (features.get(i, j) - m).powi(2)).sum::<f64>() / n as f64;
        mean[j] = m;
        sd[j] = v.sqrt().max(1e-12);
    }
    Matrix::from_fn(n, d, |i, j| (features.get(i, j) - mean[j]) / sd[j])
}

/// Load the digits table (1797×64 features, labels in the last column) and
/// reduce it to standardized principal components.
pub fn load_digits_pca(path: &Path, components: usize) -> Result<LabeledDataset> {
    let raw = load_digits_raw(path)?;
    let (proj, _) = pca_standardize(
        &raw.features,
        PcaOptions {
            n_components: components,
            whiten: false,
            standardize: true,
        },
    )?;
    Ok(LabeledDataset {
        features: proj,
        labels: raw.labels,
        name: format!("digits_pca{components}"),
    })
}

pub fn load_digits_raw(path: &Path) -> Result<LabeledDataset> {
    if !path.exists() {
        return Err(DdclError::Data(format!(
            "digits table not found at {}; generate it with scripts/fetch_digits.py \
             (see the README data section)",
            path.display()
        )));
    }
    let data = load_csv(path, Some(64))?;
    if data.dim() != 64 {
        return Err(DdclError::Data(format!(
            "expected 64 feature columns plus a label column, got {} features",
            data.dim()
        )));
    }
    Ok(data)
}

/// Sample mean and n−1 standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn out_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
