//! Unsupervised clustering evaluation: permutation-matched accuracy via an
//! exact assignment solver, normalized mutual information, and the adjusted
//! Rand index.

use crate::error::{DdclError, Result};

/// Joint label-count table with marginals.
#[derive(Debug, Clone)]
pub struct ContingencyTable {
    pub counts: Vec<Vec<usize>>,
    pub row_marginals: Vec<usize>,
    pub col_marginals: Vec<usize>,
    pub n: usize,
}

impl ContingencyTable {
    /// Build from two equal-length label sequences. Labels are compacted to
    /// dense indices in first-appearance order.
    pub fn new(y_true: &[usize], y_pred: &[usize]) -> Result<Self> {
        if y_true.len() != y_pred.len() {
            return Err(DdclError::shape(
                "ContingencyTable",
                format!("{} labels", y_true.len()),
                format!("{}", y_pred.len()),
            ));
        }
        if y_true.is_empty() {
            return Err(DdclError::EmptyBatch("ContingencyTable"));
        }
        let compact = |ys: &[usize]| {
            let mut map: Vec<usize> = Vec::new();
            let idx: Vec<usize> = ys
                .iter()
                .map(|&y| match map.iter().position(|&m| m == y) {
                    Some(i) => i,
                    None => {
                        map.push(y);
                        map.len() - 1
                    }
                })
                .collect();
            (idx, map.len())
        };
        let (ti, kt) = compact(y_true);
        let (pi, kp) = compact(y_pred);
        let mut counts = vec![vec![0usize; kp]; kt];
        for (&a, &b) in ti.iter().zip(&pi) {
            counts[a][b] += 1;
        }
        let row_marginals: Vec<usize> = counts.iter().map(|r| r.iter().sum()).collect();
        let col_marginals: Vec<usize> =
            (0..kp).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
        Ok(ContingencyTable {
            counts,
            row_marginals,
            col_marginals,
            n: y_true.len(),
        })
    }
}

/// Exact minimum-cost assignment on a square cost matrix (augmenting-path
/// method with potentials, O(k³)). Returns the column matched to each row.
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based potentials; way[j] = previous column on the augmenting path
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1]; // row matched to column j
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

/// Hungarian-matched clustering accuracy: the best over label permutations
/// of the mean agreement between true and predicted labels.
pub fn clustering_accuracy(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(y_true, y_pred)?;
    let kt = table.counts.len();
    let kp = table.counts[0].len();
    let k = kt.max(kp);
    if k > 64 {
        return Err(DdclError::InvalidConfig(format!(
            "clustering_accuracy supports at most 64 labels, got {k}"
        )));
    }
    // maximize matched counts == minimize negated counts on a padded square
    let cost: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| {
                    if i < kt && j < kp {
                        -(table.counts[i][j] as f64)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let matching = hungarian(&cost);
    let mut matched = 0usize;
    for (i, &j) in matching.iter().enumerate() {
        if i < kt && j < kp {
            matched += table.counts[i][j];
        }
    }
    Ok(matched as f64 / table.n as f64)
}

fn entropy_of_marginals(marginals: &[usize], n: usize) -> f64 {
    marginals
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information MI / sqrt(H_true · H_pred) with natural
/// logs. Conventions: 1 when both partitions are identical, 0 when either
/// entropy vanishes while the partitions differ.
pub fn nmi(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(y_true, y_pred)?;
    if same_partition(y_true, y_pred) {
        return Ok(1.0);
    }
    let n = table.n as f64;
    let h_t = entropy_of_marginals(&table.row_marginals, table.n);
    let h_p = entropy_of_marginals(&table.col_marginals, table.n);
    if h_t < 1e-300 || h_p < 1e-300 {
        // at least one side is a single cluster and the partitions differ
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (i, row) in table.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let pij = c as f64 / n;
            let pi = table.row_marginals[i] as f64 / n;
            let pj = table.col_marginals[j] as f64 / n;
            mi += pij * (pij / (pi * pj)).ln();
        }
    }
    Ok((mi / (h_t * h_p).sqrt()).clamp(0.0, 1.0))
}

fn same_partition(a: &[usize], b: &[usize]) -> bool {
    // identical as partitions: co-membership agrees on every pair; with
    // compacted first-appearance indices this is plain equality
    let compact = |ys: &[usize]| {
        let mut map: Vec<usize> = Vec::new();
        ys.iter()
            .map(|&y| match map.iter().position(|&m| m == y) {
                Some(i) => i,
                None => {
                    map.push(y);
                    map.len() - 1
                }
            })
            .collect::<Vec<usize>>()
    };
    compact(a) == compact(b)
}

fn choose2(x: usize) -> f64 {
    (x as f64) * (x as f64 - 1.0) / 2.0
}

/// Adjusted Rand index via pair counting on the contingency table. 1 for
/// identical partitions, about 0 for independent random labelings.
pub fn ari(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(y_true, y_pred)?;
    let sum_ij: f64 = table
        .counts
        .iter()
        .flat_map(|r| r.iter())
        .map(|&c| choose2(c))
        .sum();
    let sum_a: f64 = table.row_marginals.iter().map(|&c| choose2(c)).sum();
    let sum_b: f64 = table.col_marginals.iter().map(|&c| choose2(c)).sum();
    let total = choose2(table.n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_a * sum_b / total;
    let max_index = 0.5 * (sum_a + sum_b);
    let denom = max_index - expected;
    if denom.abs() < 1e-300 {
        // both partitions degenerate in the same way (all-singletons or
        // one cluster); identical iff the index is too
        return Ok(if same_partition(y_true, y_pred) { 1.0 } else { 0.0 });
    }
    Ok((sum_ij - expected) / denom)
}
