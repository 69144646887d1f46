//! Minimal dense linear-algebra substrate, seeded RNG, and statistical helpers.
//!
//! Everything is 64-bit and row-major. Feature batches store samples as rows
//! (n×d); prototype matrices store prototypes as columns (d×k).

use crate::error::{DdclError, Result};
use crate::parallel;
use serde::{Deserialize, Serialize};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Build from a flat row-major buffer, rejecting wrong lengths and
    /// non-finite entries. Use this for external inputs.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(DdclError::shape(
                "Matrix::from_vec",
                format!("{} values for {rows}x{cols}", rows * cols),
                format!("{}", data.len()),
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(DdclError::NonFinite {
                term: "matrix entry".into(),
                at: Some(format!("({}, {})", pos / cols.max(1), pos % cols.max(1))),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Build without the finiteness scan. For internal arithmetic results.
    pub fn from_vec_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map(|x| x.len()).unwrap_or(0);
        if rows.iter().any(|row| row.len() != c) {
            return Err(DdclError::shape(
                "Matrix::from_rows",
                format!("uniform row length {c}"),
                "ragged rows",
            ));
        }
        Self::from_vec(r, c, rows.into_iter().flatten().collect())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Standard-normal entries from the given RNG.
    pub fn randn(rows: usize, cols: usize, rng: &mut Rng) -> Self {
        let data = (0..rows * cols).map(|_| rng.normal()).collect();
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    /// `self * other`, parallelized over output rows.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(DdclError::shape(
                "matmul",
                format!("inner dims to agree ({} vs {})", self.cols, other.rows),
                format!("{}x{} * {}x{}", self.rows, self.cols, other.rows, other.cols),
            ));
        }
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let rows = parallel::map_indexed(n, |i| {
            let a = self.row(i);
            let mut out = vec![0.0; m];
            for (l, &ail) in a.iter().enumerate().take(k) {
                if ail == 0.0 {
                    continue;
                }
                let brow = other.row(l);
                for j in 0..m {
                    out[j] += ail * brow[j];
                }
            }
            out
        });
        Ok(Matrix::from_vec_unchecked(n, m, rows.into_iter().flatten().collect()))
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    /// `self += c * other`.
    pub fn add_scaled(&mut self, other: &Matrix, c: f64) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += c * b;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Maximum absolute entry (0 for empty).
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Squared Euclidean norm of a slice.
pub fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Squared distance between a sample row and prototype column `j` of `p`.
pub fn sq_dist_to_col(z: &[f64], p: &Matrix, j: usize) -> f64 {
    let mut acc = 0.0;
    for (i, &zi) in z.iter().enumerate() {
        let diff = zi - p.get(i, j);
        acc += diff * diff;
    }
    acc
}

/// All pairwise squared distances between rows of `z` (n×d) and columns of
/// `p` (d×k); entry (n, j) = ‖z_n − p_j‖².
pub fn pairwise_sq_dists(z: &Matrix, p: &Matrix) -> Result<Matrix> {
    if z.cols() != p.rows() {
        return Err(DdclError::shape(
            "pairwise_sq_dists",
            format!("feature dim {} on both sides", z.cols()),
            format!("samples {}x{}, prototypes {}x{}", z.rows(), z.cols(), p.rows(), p.cols()),
        ));
    }
    let (n, k) = (z.rows(), p.cols());
    let rows = parallel::map_indexed(n, |i| {
        let zi = z.row(i);
        (0..k).map(|j| sq_dist_to_col(zi, p, j)).collect::<Vec<f64>>()
    });
    Ok(Matrix::from_vec_unchecked(n, k, rows.into_iter().flatten().collect()))
}

/// Pearson correlation coefficient of two equal-length series.
///
/// Series shorter than 3 or (numerically) constant are rejected: such traces
/// are too short or too flat to diagnose feedback.
pub fn pearson_corr(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(DdclError::shape(
            "pearson_corr",
            "equal lengths",
            format!("{} vs {}", a.len(), b.len()),
        ));
    }
    if a.len() < 3 {
        return Err(DdclError::DegenerateInput(format!(
            "pearson_corr needs length >= 3, got {}",
            a.len()
        )));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sa = 0.0;
    let mut sb = 0.0;
    let mut sab = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        sa += (x - ma) * (x - ma);
        sb += (y - mb) * (y - mb);
        sab += (x - ma) * (y - mb);
    }
    let denom = (sa * sb).sqrt();
    if denom < 1e-300 || !denom.is_finite() {
        return Err(DdclError::DegenerateInput(
            "pearson_corr got a constant series".into(),
        ));
    }
    Ok((sab / denom).clamp(-1.0, 1.0))
}

/// Seeded portable PRNG with a frozen output sequence.
///
/// The generator is SplitMix64 (Steele, Lea & Flood 2014): state advances by
/// the odd constant 0x9E3779B97F4A7C15 and each output is the finalized mix
/// of the new state. `next_f64` takes the top 53 bits scaled to [0,1);
/// `normal` is one Box–Muller cosine draw from two consecutive uniforms.
/// Identical seeds give bit-identical streams on every platform.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal via Box–Muller (cosine branch; two uniforms per draw).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64(); // (0, 1]
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform integer in [0, n) by 128-bit multiply (Lemire reduction
    /// without rejection; bias is < 2^-64 and irrelevant at our scales).
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// `count` distinct indices from [0, n), in draw order.
    pub fn sample_without_replacement(&mut self, n: usize, count: usize) -> Vec<usize> {
        assert!(count <= n, "cannot draw {count} distinct indices from {n}");
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..count {
            let j = i + self.below(n - i);
            pool.swap(i, j);
        }
        pool.truncate(count);
        pool
    }

    /// Derive an independent stream for a sub-task, leaving `self` advanced
    /// by one step.
    pub fn fork(&mut self) -> Rng {
        Rng::new(self.next_u64() ^ 0xA5A5_A5A5_5A5A_5A5A)
    }
}

/// Eigendecomposition of a symmetric matrix by the cyclic Jacobi method.
///
/// Returns (eigenvalues, eigenvectors-as-columns) sorted by descending
/// eigenvalue. Deterministic; adequate for the moderate dimensions used here.
pub fn sym_eig(m: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    if m.rows() != m.cols() {
        return Err(DdclError::shape(
            "sym_eig",
            "square matrix",
            format!("{}x{}", m.rows(), m.cols()),
        ));
    }
    let n = m.rows();
    let mut a = m.clone();
    let mut v = Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 });
    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a.get(i, j) * a.get(i, j);
            }
        }
        if off.sqrt() < 1e-14 * (1.0 + a.frobenius_norm()) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..n {
                    let aip = a.get(i, p);
                    let aiq = a.get(i, q);
                    a.set(i, p, c * aip - s * aiq);
                    a.set(i, q, s * aip + c * aiq);
                }
                for j in 0..n {
                    let apj = a.get(p, j);
                    let aqj = a.get(q, j);
                    a.set(p, j, c * apj - s * aqj);
                    a.set(q, j, s * apj + c * aqj);
                }
                for i in 0..n {
                    let vip = v.get(i, p);
                    let viq = v.get(i, q);
                    v.set(i, p, c * vip - s * viq);
                    v.set(i, q, s * vip + c * viq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let evals: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
    order.sort_by(|&i, &j| evals[j].partial_cmp(&evals[i]).unwrap().then(i.cmp(&j)));
    let sorted_vals: Vec<f64> = order.iter().map(|&i| evals[i]).collect();
    let mut vecs = Matrix::zeros(n, n);
    for (new_j, &old_j) in order.iter().enumerate() {
        // sign convention: largest-magnitude component made positive
        let col = v.col(old_j);
        let mut best = 0usize;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > col[best].abs() {
                best = i;
            }
        }
        let flip = if col[best] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vecs.set(i, new_j, flip * col[i]);
        }
    }
    Ok((sorted_vals, vecs))
}
