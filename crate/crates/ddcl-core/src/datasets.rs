//! Seeded synthetic generators for the experiment suites and CSV ingestion
//! for external feature tables.

use crate::error::{DdclError, Result};
use crate::numerics::{Matrix, Rng};

/// A feature batch with optional integer labels.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub features: Matrix,
    pub labels: Option<Vec<usize>>,
    pub name: String,
}

impl LabeledDataset {
    pub fn n(&self) -> usize {
        self.features.rows()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Number of distinct labels, when labels are present.
    pub fn n_classes(&self) -> Option<usize> {
        self.labels.as_ref().map(|ls| {
            let mut seen: Vec<usize> = ls.clone();
            seen.sort_unstable();
            seen.dedup();
            seen.len()
        })
    }
}

fn split_counts(n: usize, parts: usize) -> Vec<usize> {
    // near-balanced: the first (n mod parts) classes get one extra
    let base = n / parts;
    (0..parts).map(|i| base + usize::from(i < n % parts)).collect()
}

/// Two interleaved half-circles with Gaussian noise; balanced classes.
pub fn make_moons(n: usize, noise_sd: f64, seed: u64) -> Result<LabeledDataset> {
    if n < 2 {
        return Err(DdclError::InvalidConfig("make_moons needs n >= 2".into()));
    }
    let counts = split_counts(n, 2);
    let mut rng = Rng::new(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (cls, &m) in counts.iter().enumerate() {
        for i in 0..m {
            let t = std::f64::consts::PI * i as f64 / (m.max(2) - 1) as f64;
            let (x, y) = if cls == 0 {
                (t.cos(), t.sin())
            } else {
                (1.0 - t.cos(), 0.5 - t.sin())
            };
            rows.push(vec![x + noise_sd * rng.normal(), y + noise_sd * rng.normal()]);
            labels.push(cls);
        }
    }
    Ok(LabeledDataset {
        features: Matrix::from_rows(rows)?,
        labels: Some(labels),
        name: "moons".into(),
    })
}

/// Concentric circles with radius ratio `radius_ratio` for the inner class.
pub fn make_circles(n: usize, noise_sd: f64, radius_ratio: f64, seed: u64) -> Result<LabeledDataset> {
    if n < 2 {
        return Err(DdclError::InvalidConfig("make_circles needs n >= 2".into()));
    }
    let counts = split_counts(n, 2);
    let mut rng = Rng::new(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (cls, &m) in counts.iter().enumerate() {
        let radius = if cls == 0 { 1.0 } else { radius_ratio };
        for i in 0..m {
            let t = std::f64::consts::TAU * i as f64 / m as f64;
            rows.push(vec![
                radius * t.cos() + noise_sd * rng.normal(),
                radius * t.sin() + noise_sd * rng.normal(),
            ]);
            labels.push(cls);
        }
    }
    Ok(LabeledDataset {
        features: Matrix::from_rows(rows)?,
        labels: Some(labels),
        name: "circles".into(),
    })
}

/// Two-arm Archimedean spiral; arms are the classes, radius grows
/// monotonically along each arm.
pub fn make_spiral(n: usize, turns: f64, noise_sd: f64, seed: u64) -> Result<LabeledDataset> {
    if n < 2 {
        return Err(DdclError::InvalidConfig("make_spiral needs n >= 2".into()));
    }
    let counts = split_counts(n, 2);
    let mut rng = Rng::new(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let t_max = turns * std::f64::consts::TAU;
    for (cls, &m) in counts.iter().enumerate() {
        for i in 0..m {
            let frac = (i as f64 + 0.5) / m as f64;
            let t = frac * t_max;
            let r = frac;
            let angle = t + cls as f64 * std::f64::consts::PI;
            rows.push(vec![
                r * angle.cos() + noise_sd * rng.normal(),
                r * angle.sin() + noise_sd * rng.normal(),
            ]);
            labels.push(cls);
        }
    }
    Ok(LabeledDataset {
        features: Matrix::from_rows(rows)?,
        labels: Some(labels),
        name: "spiral".into(),
    })
}

/// Isotropic 2-D Gaussian clusters at seeded centers drawn uniformly from
/// the square [−centers_box, centers_box]²; a center is redrawn while it
/// sits within 6 cluster standard deviations of an earlier one, so the
/// reference clusters stay unambiguous.
pub fn make_blobs(n: usize, k: usize, centers_box: f64, cluster_sd: f64, seed: u64) -> Result<LabeledDataset> {
    if n < k || k == 0 {
        return Err(DdclError::InvalidConfig(format!(
            "make_blobs needs n >= k >= 1, got n={n} k={k}"
        )));
    }
    let mut rng = Rng::new(seed);
    let min_gap = 6.0 * cluster_sd;
    let mut centers: Vec<(f64, f64)> = Vec::with_capacity(k);
    while centers.len() < k {
        let mut candidate = (
            rng.uniform(-centers_box, centers_box),
            rng.uniform(-centers_box, centers_box),
        );
        let mut tries = 0;
        while centers.iter().any(|c| {
            let (dx, dy) = (c.0 - candidate.0, c.1 - candidate.1);
            (dx * dx + dy * dy).sqrt() < min_gap
        }) && tries < 1000
        {
            candidate = (
                rng.uniform(-centers_box, centers_box),
                rng.uniform(-centers_box, centers_box),
            );
            tries += 1;
        }
        centers.push(candidate);
    }
    let counts = split_counts(n, k);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (cls, &m) in counts.iter().enumerate() {
        for _ in 0..m {
            rows.push(vec![
                centers[cls].0 + cluster_sd * rng.normal(),
                centers[cls].1 + cluster_sd * rng.normal(),
            ]);
            labels.push(cls);
        }
    }
    Ok(LabeledDataset {
        features: Matrix::from_rows(rows)?,
        labels: Some(labels),
        name: "blobs".into(),
    })
}

/// Two Gaussian clusters separated along `d_informative` informative
/// dimensions (class-mean gap = `separation` per informative dimension);
/// all remaining dimensions are pure standard-normal noise.
pub fn make_madelon_style(
    n: usize,
    d: usize,
    d_informative: usize,
    separation: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if d_informative > d {
        return Err(DdclError::InvalidConfig(format!(
            "d_informative {d_informative} exceeds d {d}"
        )));
    }
    if n < 2 {
        return Err(DdclError::InvalidConfig("make_madelon_style needs n >= 2".into()));
    }
    let counts = split_counts(n, 2);
    let mut rng = Rng::new(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (cls, &m) in counts.iter().enumerate() {
        let shift = if cls == 0 { -separation / 2.0 } else { separation / 2.0 };
        for _ in 0..m {
            let mut row = Vec::with_capacity(d);
            for j in 0..d {
                let base = rng.normal();
                row.push(if j < d_informative { base + shift } else { base });
            }
            rows.push(row);
            labels.push(cls);
        }
    }
    Ok(LabeledDataset {
        features: Matrix::from_rows(rows)?,
        labels: Some(labels),
        name: format!("madelon_d{d}"),
    })
}

/// Parse a rectangular numeric CSV into a dataset. An optional single
/// header row is detected by its first cell failing to parse as a number.
/// `label_column`, when given, is split out as integer labels (conventionally
/// the last column).
pub fn load_csv(path: &std::path::Path, label_column: Option<usize>) -> Result<LabeledDataset> {
    let text = std::fs::read_to_string(path).map_err(|e| DdclError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    parse_csv(&text, label_column, path.display().to_string())
}

pub(crate) fn parse_csv(text: &str, label_column: Option<usize>, name: String) -> Result<LabeledDataset> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut width: Option<usize> = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if rows.is_empty() && width.is_none() {
            // header detection: first cell of the first line not numeric
            if cells[0].trim().parse::<f64>().is_err() {
                width = Some(cells.len());
                continue;
            }
        }
        if let Some(w) = width {
            if cells.len() != w {
                return Err(DdclError::Csv {
                    row: lineno,
                    col: cells.len().min(w),
                    msg: format!("ragged row: expected {w} cells, got {}", cells.len()),
                });
            }
        } else {
            width = Some(cells.len());
        }
        let mut row = Vec::with_capacity(cells.len());
        for (col, cell) in cells.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| DdclError::Csv {
                row: lineno,
                col,
                msg: format!("non-numeric cell {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(DdclError::Csv {
                    row: lineno,
                    col,
                    msg: format!("non-finite value {v}"),
                });
            }
            row.push(v);
        }
        if let Some(lc) = label_column {
            if lc >= row.len() {
                return Err(DdclError::Csv {
                    row: lineno,
                    col: lc,
                    msg: format!("label column {lc} out of range for width {}", row.len()),
                });
            }
            let raw = row.remove(lc);
            if raw < 0.0 || raw.fract() != 0.0 {
                return Err(DdclError::Csv {
                    row: lineno,
                    col: lc,
                    msg: format!("label {raw} is not a non-negative integer"),
                });
            }
            labels.push(raw as usize);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(DdclError::Data(format!("{name}: no data rows")));
    }
    Ok(LabeledDataset {
        features: Matrix::from_rows(rows)?,
        labels: if label_column.is_some() { Some(labels) } else { None },
        name,
    })
}

/// Write a dataset to CSV, labels (if any) as the last column.
pub fn save_csv(data: &LabeledDataset, path: &std::path::Path) -> Result<()> {
    let mut out = String::new();
    for i in 0..data.n() {
        let mut cells: Vec<String> = data.features.row(i).iter().map(|v| format!("{v:.17e}")).collect();
        if let Some(ls) = &data.labels {
            cells.push(format!("{}", ls[i]));
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| DdclError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moons_on_arcs_without_noise() {
        let data = make_moons(300, 0.0, 1).unwrap();
        let labels = data.labels.as_ref().unwrap();
        assert_eq!(labels.iter().filter(|&&l| l == 0).count(), 150);
        for i in 0..data.n() {
            let (x, y) = (data.features.get(i, 0), data.features.get(i, 1));
            let r = if labels[i] == 0 {
                (x * x + y * y).sqrt()
            } else {
                ((x - 1.0).powi(2) + (y - 0.5).powi(2)).sqrt()
            };
            assert!((r - 1.0).abs() < 1e-12, "sample {i} off its arc");
        }
    }

    #[test]
    fn circles_exact_radii_and_balance() {
        let data = make_circles(100, 0.0, 0.5, 2).unwrap();
        let labels = data.labels.as_ref().unwrap();
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 50);
        for i in 0..data.n() {
            let r = (data.features.get(i, 0).powi(2) + data.features.get(i, 1).powi(2)).sqrt();
            let want = if labels[i] == 0 { 1.0 } else { 0.5 };
            assert!((r - want).abs() < 1e-12);
        }
    }

    #[test]
    fn spiral_monotone_radius_per_arm() {
        let data = make_spiral(200, 2.0, 0.0, 3).unwrap();
        let labels = data.labels.as_ref().unwrap();
        for cls in 0..2 {
            let mut last = -1.0;
            for i in 0..data.n() {
                if labels[i] != cls {
                    continue;
                }
                let r = (data.features.get(i, 0).powi(2) + data.features.get(i, 1).powi(2)).sqrt();
                assert!(r > last, "radius not monotone along arm {cls}");
                last = r;
            }
        }
    }

    #[test]
    fn blobs_zero_sd_and_near_balance() {
        let data = make_blobs(10, 3, 5.0, 0.0, 4).unwrap();
        let labels = data.labels.as_ref().unwrap();
        let counts: Vec<usize> = (0..3)
            .map(|c| labels.iter().filter(|&&l| l == c).count())
            .collect();
        assert_eq!(counts.iter().sum::<usize>(), 10);
        assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
        // zero within-cluster variance
        for cls in 0..3 {
            let pts: Vec<usize> = (0..10).filter(|&i| labels[i] == cls).collect();
            for w in pts.windows(2) {
                assert_eq!(data.features.row(w[0]), data.features.row(w[1]));
            }
        }
    }

    #[test]
    fn madelon_gap_matches_separation() {
        let data = make_madelon_style(2000, 8, 3, 4.0, 5).unwrap();
        let labels = data.labels.as_ref().unwrap();
        for j in 0..3 {
            let mean = |cls: usize| {
                let vals: Vec<f64> = (0..data.n())
                    .filter(|&i| labels[i] == cls)
                    .map(|i| data.features.get(i, j))
                    .collect();
                vals.iter().sum::<f64>() / vals.len() as f64
            };
            let gap = mean(1) - mean(0);
            assert!((gap - 4.0).abs() < 0.2, "dim {j} gap {gap}");
        }
        assert!(make_madelon_style(10, 3, 5, 1.0, 0).is_err());
    }

    #[test]
    fn generators_deterministic() {
        for (a, b) in [
            (make_moons(50, 0.1, 9).unwrap(), make_moons(50, 0.1, 9).unwrap()),
            (make_blobs(50, 4, 5.0, 0.5, 9).unwrap(), make_blobs(50, 4, 5.0, 0.5, 9).unwrap()),
            (
                make_spiral(50, 2.0, 0.05, 9).unwrap(),
                make_spiral(50, 2.0, 0.05, 9).unwrap(),
            ),
            (
                make_circles(50, 0.05, 0.5, 9).unwrap(),
                make_circles(50, 0.05, 0.5, 9).unwrap(),
            ),
            (
                make_madelon_style(40, 10, 5, 4.0, 9).unwrap(),
                make_madelon_style(40, 10, 5, 4.0, 9).unwrap(),
            ),
        ] {
            assert_eq!(a.features.data(), b.features.data());
            assert_eq!(a.labels, b.labels);
        }
    }

    #[test]
    fn csv_roundtrip_bit_identical() {
        let data = make_blobs(20, 3, 5.0, 0.7, 11).unwrap();
        let dir = std::env::temp_dir().join("ddcl_csv_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("blobs.csv");
        save_csv(&data, &path).unwrap();
        let back = load_csv(&path, Some(2)).unwrap();
        assert_eq!(back.features.data(), data.features.data());
        assert_eq!(back.labels, data.labels);
    }

    #[test]
    fn csv_without_labels_and_with_header() {
        let text = "a,b\n1.0,2.0\n3.0,4.0\n";
        let data = parse_csv(text, None, "t".into()).unwrap();
        assert_eq!(data.n(), 2);
        assert_eq!(data.dim(), 2);
        assert!(data.labels.is_none());
    }

    #[test]
    fn csv_diagnostics() {
        let ragged = "1.0,2.0\n3.0\n";
        match parse_csv(ragged, None, "t".into()) {
            Err(DdclError::Csv { row, .. }) => assert_eq!(row, 1),
            other => panic!("expected csv error, got {other:?}"),
        }
        let bad = "1.0,2.0\n3.0,x\n";
        match parse_csv(bad, None, "t".into()) {
            Err(DdclError::Csv { row, col, .. }) => {
                assert_eq!((row, col), (1, 1));
            }
            other => panic!("expected csv error, got {other:?}"),
        }
    }
}
