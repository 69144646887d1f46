//! Geometry of the probability simplex: Euclidean projection, entropy, and
//! KL divergence to the uniform distribution.

use crate::error::{DdclError, Result};
use serde::{Deserialize, Serialize};

/// Entries at or below this after thresholding are snapped to exactly zero,
/// keeping the 0·log 0 branch of the entropy deterministic.
const SNAP: f64 = 1e-15;

/// Logs are clamped at this floor to avoid -inf on snapped-zero entries.
pub(crate) const LOG_FLOOR: f64 = 1e-30;

/// A point on the probability simplex: non-negative entries summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentVector(Vec<f64>);

impl AssignmentVector {
    /// Validate and wrap. Requires k >= 1, entries >= 0 and summing to one
    /// within 1e-9.
    pub fn new(q: Vec<f64>) -> Result<Self> {
        if q.is_empty() {
            return Err(DdclError::DegenerateInput(
                "assignment vector must have k >= 1".into(),
            ));
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(DdclError::non_finite("assignment vector"));
        }
        if let Some(&bad) = q.iter().find(|&&v| v < 0.0) {
            return Err(DdclError::DegenerateInput(format!(
                "assignment entry {bad} is negative"
            )));
        }
        let sum: f64 = q.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DdclError::DegenerateInput(format!(
                "assignment entries sum to {sum}, not 1"
            )));
        }
        Ok(AssignmentVector(q))
    }

    /// One-hot vertex e_j of the k-simplex.
    pub fn one_hot(k: usize, j: usize) -> Self {
        let mut q = vec![0.0; k];
        q[j] = 1.0;
        AssignmentVector(q)
    }

    /// Uniform distribution over k entries.
    pub fn uniform(k: usize) -> Self {
        AssignmentVector(vec![1.0 / k as f64; k])
    }

    /// Wrap values already known to satisfy the invariant.
    pub(crate) fn from_normalized(q: Vec<f64>) -> Self {
        debug_assert!((q.iter().sum::<f64>() - 1.0).abs() <= 1e-9 && q.iter().all(|&v| v >= 0.0));
        AssignmentVector(q)
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Index of the largest entry, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.0.iter().enumerate() {
            if v > self.0[best] {
                best = i;
            }
        }
        best
    }
}

/// Euclidean projection onto the probability simplex.
///
/// Sorting-based exact algorithm: sort descending, find the largest prefix
/// rho whose running threshold keeps v_(rho) positive, subtract the
/// threshold and clip. O(k log k); ties in the sort are broken by original
/// index so the output is platform-independent.
pub fn project(v: &[f64]) -> Result<AssignmentVector> {
    if v.is_empty() {
        return Err(DdclError::DegenerateInput(
            "cannot project an empty vector".into(),
        ));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(DdclError::non_finite("simplex projection input"));
    }
    let k = v.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| v[j].partial_cmp(&v[i]).unwrap().then(i.cmp(&j)));

    let mut prefix = 0.0;
    let mut rho = 0;
    let mut theta = 0.0;
    for (r, &idx) in order.iter().enumerate() {
        prefix += v[idx];
        let t = (prefix - 1.0) / (r + 1) as f64;
        if v[idx] - t > 0.0 {
            rho = r + 1;
            theta = t;
        }
    }
    debug_assert!(rho >= 1);
    let mut q: Vec<f64> = v
        .iter()
        .map(|&x| {
            let y = (x - theta).max(0.0);
            if y <= SNAP {
                0.0
            } else {
                y
            }
        })
        .collect();
    // renormalize the residual rounding error onto the active set
    let sum: f64 = q.iter().sum();
    if sum > 0.0 && (sum - 1.0).abs() > 0.0 {
        for x in &mut q {
            if *x > 0.0 {
                *x /= sum;
            }
        }
    }
    Ok(AssignmentVector::from_normalized(q))
}

/// Shannon entropy in nats, with 0·log 0 := 0. Range [0, log k].
pub fn entropy(q: &AssignmentVector) -> f64 {
    q.as_slice()
        .iter()
        .map(|&p| if p <= 0.0 { 0.0 } else { -p * p.max(LOG_FLOOR).ln() })
        .sum()
}

/// KL(q ‖ uniform) = log k − H(q).
pub fn kl_to_uniform(q: &AssignmentVector) -> f64 {
    ((q.k() as f64).ln() - entropy(q)).max(0.0)
}
