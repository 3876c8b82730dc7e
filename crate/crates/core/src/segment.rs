//! Penalized optimal partitioning with squared-error loss.
//!
//! A changepoint `i` (1-based, `1 <= i < N`) separates data points `i` and
//! `i + 1`. Among segmentations with equal penalized cost the one with fewer
//! changepoints wins, then the lexicographically smallest changepoint list.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance under which two penalized costs count as tied.
const TIE_RTOL: f64 = 1e-12;

/// Largest sequence the exhaustive oracle accepts.
pub const BRUTE_FORCE_MAX_LEN: usize = 16;

pub(crate) fn costs_tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_RTOL * a.abs().max(b.abs())
}

/// Prefix sums of `d` and `d²` for O(1) segment costs.
#[derive(Debug, Clone)]
pub struct CumulativeSums {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl CumulativeSums {
    pub fn new(values: &[f64]) -> Self {
        let mut sum = Vec::with_capacity(values.len() + 1);
        let mut sum_sq = Vec::with_capacity(values.len() + 1);
        let (mut s, mut q) = (0.0, 0.0);
        sum.push(s);
        sum_sq.push(q);
        for &v in values {
            s += v;
            q += v * v;
            sum.push(s);
            sum_sq.push(q);
        }
        Self { sum, sum_sq }
    }

    pub fn len(&self) -> usize {
        self.sum.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Squared-error cost of the half-open 0-based range `start..end`, clamped at 0.
    pub fn cost(&self, start: usize, end: usize) -> f64 {
        let n = (end - start) as f64;
        let s = self.sum[end] - self.sum[start];
        let q = self.sum_sq[end] - self.sum_sq[start];
        (q - s * s / n).max(0.0)
    }

    pub fn mean(&self, start: usize, end: usize) -> f64 {
        (self.sum[end] - self.sum[start]) / (end - start) as f64
    }
}

/// An optimal segmentation at a given penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    /// Sorted 1-based changepoint indices.
    pub changepoints: Vec<usize>,
    /// Mean of each segment.
    pub means: Vec<f64>,
    pub data_cost: f64,
    pub penalized_cost: f64,
    pub penalty: f64,
}

impl Segmentation {
    fn from_changepoints(values: &[f64], changepoints: Vec<usize>, penalty: f64) -> Self {
        let (means, data_cost) = segment_means_and_cost(values, &changepoints);
        let penalized_cost = data_cost + penalty * changepoints.len() as f64;
        Self {
            changepoints,
            means,
            data_cost,
            penalized_cost,
            penalty,
        }
    }

    pub fn segment_count(&self) -> usize {
        self.changepoints.len() + 1
    }
}

/// Per-segment means and the total squared error, computed from residuals.
pub fn segment_means_and_cost(values: &[f64], changepoints: &[usize]) -> (Vec<f64>, f64) {
    let mut bounds = Vec::with_capacity(changepoints.len() + 2);
    bounds.push(0);
    bounds.extend_from_slice(changepoints);
    bounds.push(values.len());
    let mut means = Vec::with_capacity(bounds.len() - 1);
    let mut cost = 0.0;
    for w in bounds.windows(2) {
        let seg = &values[w[0]..w[1]];
        let mean = seg.iter().sum::<f64>() / seg.len() as f64;
        cost += seg.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
        means.push(mean);
    }
    (means, cost)
}

fn check_penalty(penalty: f64) -> Result<()> {
    if penalty > 0.0 && penalty.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "penalty must be a finite value > 0, got {penalty}"
        )))
    }
}

#[derive(Clone, Copy)]
struct Best {
    cost: f64,
    changes: usize,
    next: usize,
}

impl Best {
    fn beats(&self, other: &Best) -> bool {
        if costs_tied(self.cost, other.cost) {
            self.changes < other.changes
        } else {
            self.cost < other.cost
        }
    }
}

/// Globally optimal segmentation of `values` at `penalty` (O(N²) dynamic program).
///
/// The recursion runs over suffixes so that reconstruction can walk forward
/// and take the earliest admissible changepoint at every step.
#[allow(clippy::needless_range_loop)]
pub fn opart(values: &[f64], penalty: f64) -> Result<Segmentation> {
    check_penalty(penalty)?;
    let n = values.len();
    if n == 0 {
        return Err(Error::Domain("cannot segment an empty sequence".into()));
    }
    let sums = CumulativeSums::new(values);
    // best[s]: optimum for values[s..n], first segment ending at `next`.
    let mut best = vec![
        Best {
            cost: 0.0,
            changes: 0,
            next: n,
        };
        n + 1
    ];
    for s in (0..n).rev() {
        let mut current = Best {
            cost: sums.cost(s, n),
            changes: 0,
            next: n,
        };
        for t in s + 1..n {
            let candidate = Best {
                cost: sums.cost(s, t) + penalty + best[t].cost,
                changes: best[t].changes + 1,
                next: t,
            };
            // Strict comparison keeps the earliest end among ties.
            if candidate.beats(&current) {
                current = candidate;
            }
        }
        best[s] = current;
    }

    let mut changepoints = Vec::with_capacity(best[0].changes);
    let mut s = 0;
    while best[s].next < n {
        s = best[s].next;
        changepoints.push(s);
    }
    Ok(Segmentation::from_changepoints(
        values,
        changepoints,
        penalty,
    ))
}

/// Exhaustive search over all `2^(N-1)` changepoint subsets (test oracle).
pub fn brute_force_opart(values: &[f64], penalty: f64) -> Result<Segmentation> {
    check_penalty(penalty)?;
    let n = values.len();
    if n == 0 || n > BRUTE_FORCE_MAX_LEN {
        return Err(Error::Domain(format!(
            "brute force requires 1 <= N <= {BRUTE_FORCE_MAX_LEN}, got {n}"
        )));
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for mask in 0u32..(1 << (n - 1)) {
        let changepoints: Vec<usize> = (1..n).filter(|i| mask >> (i - 1) & 1 == 1).collect();
        let (_, data_cost) = segment_means_and_cost(values, &changepoints);
        let cost = data_cost + penalty * changepoints.len() as f64;
        let better = match &best {
            None => true,
            Some((best_cost, best_cps)) => {
                if costs_tied(cost, *best_cost) {
                    (changepoints.len(), &changepoints) < (best_cps.len(), best_cps)
                } else {
                    cost < *best_cost
                }
            }
        };
        if better {
            best = Some((cost, changepoints));
        }
    }
    let (_, changepoints) = best.expect("at least one subset enumerated");
    Ok(Segmentation::from_changepoints(
        values,
        changepoints,
        penalty,
    ))
}

/// Minimal data cost for each exact segment count `1..=k_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentCosts {
    costs: Vec<f64>,
}

impl SegmentCosts {
    /// Wrap precomputed costs `C_1..C_k`; they must be finite, non-negative and non-increasing.
    pub fn new(costs: Vec<f64>) -> Result<Self> {
        if costs.is_empty() {
            return Err(Error::Domain("segment costs must not be empty".into()));
        }
        if costs.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Domain(
                "segment costs must be finite and >= 0".into(),
            ));
        }
        if costs.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Domain("segment costs must be non-increasing".into()));
        }
        Ok(Self { costs })
    }

    pub fn k_max(&self) -> usize {
        self.costs.len()
    }

    /// Cost of the best segmentation with exactly `k` segments (1-based).
    pub fn cost(&self, k: usize) -> f64 {
        self.costs[k - 1]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.costs
    }
}

/// Segment-neighbourhood dynamic program, O(k_max·N²).
#[allow(clippy::needless_range_loop)]
pub fn segment_costs(values: &[f64], k_max: usize) -> Result<SegmentCosts> {
    let n = values.len();
    if k_max == 0 || k_max > n {
        return Err(Error::Domain(format!(
            "k_max must lie in 1..={n}, got {k_max}"
        )));
    }
    let sums = CumulativeSums::new(values);
    // prev[t]: best cost of values[0..t] with k segments.
    let mut prev: Vec<f64> = (0..=n)
        .map(|t| {
            if t == 0 {
                f64::INFINITY
            } else {
                sums.cost(0, t)
            }
        })
        .collect();
    let mut costs = vec![prev[n]];
    for k in 2..=k_max {
        let mut next = vec![f64::INFINITY; n + 1];
        for t in k..=n {
            next[t] = (k - 1..t)
                .map(|s| prev[s] + sums.cost(s, t))
                .fold(f64::INFINITY, f64::min);
        }
        // Rounding can leave C_k a hair above C_{k-1}.
        costs.push(next[n].min(costs[k - 2]));
        prev = next;
    }
    SegmentCosts::new(costs)
}

/// Changepoints of the best segmentation with exactly `k` segments.
#[allow(clippy::needless_range_loop)]
pub fn best_k_segmentation(values: &[f64], k: usize) -> Result<Vec<usize>> {
    let n = values.len();
    if k == 0 || k > n {
        return Err(Error::Domain(format!("k must lie in 1..={n}, got {k}")));
    }
    let sums = CumulativeSums::new(values);
    let mut cost: Vec<Vec<f64>> = vec![(0..=n)
        .map(|t| {
            if t == 0 {
                f64::INFINITY
            } else {
                sums.cost(0, t)
            }
        })
        .collect()];
    // start[j][t]: first index of the last segment in the best (j+1)-segment split of values[0..t].
    let mut start = vec![vec![0; n + 1]];
    for j in 1..k {
        let mut c = vec![f64::INFINITY; n + 1];
        let mut s_best = vec![0; n + 1];
        for t in j + 1..=n {
            for s in j..t {
                let v = cost[j - 1][s] + sums.cost(s, t);
                if v < c[t] {
                    c[t] = v;
                    s_best[t] = s;
                }
            }
        }
        cost.push(c);
        start.push(s_best);
    }
    let mut changepoints = Vec::with_capacity(k - 1);
    let mut t = n;
    for j in (1..k).rev() {
        t = start[j][t];
        changepoints.push(t);
    }
    changepoints.reverse();
    Ok(changepoints)
}
