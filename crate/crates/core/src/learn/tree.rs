use serde::{Deserialize, Serialize};

use super::IntervalDataset;
use crate::error::{Error, Result};
use crate::penaltypath::TargetInterval;

/// Constant prediction minimizing total squared hinge loss over a set of targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeafFit {
    pub value: f64,
    pub loss: f64,
}

fn total_loss(lowers: &[f64], uppers: &[f64], y: f64) -> f64 {
    let below: f64 = lowers.iter().map(|&a| (a - y).max(0.0).powi(2)).sum();
    let above: f64 = uppers.iter().map(|&b| (y - b).max(0.0).powi(2)).sum();
    below + above
}

/// Exact minimizer of `Σ ReLU(y_l + m - y)² + ReLU(y - y_u + m)²`.
///
/// The objective is convex and piecewise quadratic with breakpoints at the
/// shifted bounds. When a zero-loss region exists its midpoint is returned
/// (its finite end if half-infinite, 0 if unbounded); otherwise the
/// derivative, which is piecewise linear and non-decreasing, is swept over
/// the sorted breakpoints to find its root.
pub fn mmit_leaf_value<'a>(
    targets: impl IntoIterator<Item = &'a TargetInterval>,
    margin: f64,
) -> LeafFit {
    let mut lowers = Vec::new();
    let mut uppers = Vec::new();
    for t in targets {
        if t.lower.is_finite() {
            lowers.push(t.lower + margin);
        }
        if t.upper.is_finite() {
            uppers.push(t.upper - margin);
        }
    }
    lowers.sort_by(f64::total_cmp);
    uppers.sort_by(f64::total_cmp);
    let max_lower = lowers.last().copied().unwrap_or(f64::NEG_INFINITY);
    let min_upper = uppers.first().copied().unwrap_or(f64::INFINITY);

    if max_lower <= min_upper {
        let value = match (max_lower.is_finite(), min_upper.is_finite()) {
            (true, true) => (max_lower + min_upper) / 2.0,
            (true, false) => max_lower,
            (false, true) => min_upper,
            (false, false) => 0.0,
        };
        return LeafFit { value, loss: 0.0 };
    }

    // Half the derivative: Σ_{b<y}(y - b) - Σ_{a>y}(a - y).
    let prefix = |v: &[f64]| {
        let mut p = Vec::with_capacity(v.len() + 1);
        p.push(0.0);
        let mut s = 0.0;
        for x in v {
            s += x;
            p.push(s);
        }
        p
    };
    let lower_sums = prefix(&lowers);
    let upper_sums = prefix(&uppers);
    // Upper terms with b < y and lower terms with a > y: (count, sum) of each.
    let active = |y: f64| {
        let n_upper = uppers.partition_point(|&b| b < y);
        let first_lower = lowers.partition_point(|&a| a <= y);
        let n_lower = lowers.len() - first_lower;
        let sum_lower = lower_sums[lowers.len()] - lower_sums[first_lower];
        (n_upper, upper_sums[n_upper], n_lower, sum_lower)
    };
    let slope_at = |y: f64| {
        let (nb, sb, na, sa) = active(y);
        (nb as f64 * y - sb) - (sa - na as f64 * y)
    };

    let mut events: Vec<f64> = lowers.iter().chain(&uppers).copied().collect();
    events.sort_by(f64::total_cmp);
    events.dedup();
    // The derivative is negative at the first breakpoint and non-negative at the last.
    let k = events.partition_point(|&e| slope_at(e) < 0.0);
    let right = events[k];
    let value = if slope_at(right) == 0.0 || k == 0 {
        right
    } else {
        let left = events[k - 1];
        let (nb, sb, na, sa) = active(0.5 * (left + right));
        ((sb + sa) / (nb + na) as f64).clamp(left, right)
    };
    LeafFit {
        value,
        loss: total_loss(&lowers, &uppers, value),
    }
}

/// Hyperparameters of the interval regression tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeHyper {
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub margin: f64,
}

impl std::fmt::Display for TreeHyper {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "max_depth={};min_samples_split={};margin={}",
            self.max_depth, self.min_samples_split, self.margin
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub root: TreeNode,
    pub hyper: TreeHyper,
}

impl TreeModel {
    /// Rows with `x[feature] <= threshold` go left.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn depth(node: &TreeNode) -> usize {
            match node {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + depth(left).max(depth(right)),
            }
        }
        depth(&self.root)
    }

    pub fn leaves(&self) -> usize {
        fn leaves(node: &TreeNode) -> usize {
            match node {
                TreeNode::Leaf { .. } => 1,
                TreeNode::Split { left, right, .. } => leaves(left) + leaves(right),
            }
        }
        leaves(&self.root)
    }
}

struct Split {
    feature: usize,
    threshold: f64,
    loss: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

fn best_split(data: &IntervalDataset, rows: &[usize], margin: f64) -> Option<Split> {
    let mut best: Option<Split> = None;
    for feature in 0..data.width() {
        let mut order = rows.to_vec();
        order.sort_by(|&a, &b| {
            data.features[[a, feature]]
                .total_cmp(&data.features[[b, feature]])
                .then(a.cmp(&b))
        });
        for cut in 1..order.len() {
            let lo = data.features[[order[cut - 1], feature]];
            let hi = data.features[[order[cut], feature]];
            if lo == hi {
                continue;
            }
            let left = mmit_leaf_value(order[..cut].iter().map(|&i| &data.targets[i]), margin);
            let right = mmit_leaf_value(order[cut..].iter().map(|&i| &data.targets[i]), margin);
            let loss = left.loss + right.loss;
            if best.as_ref().is_none_or(|b| loss < b.loss) {
                best = Some(Split {
                    feature,
                    threshold: lo + (hi - lo) / 2.0,
                    loss,
                    left: order[..cut].to_vec(),
                    right: order[cut..].to_vec(),
                });
            }
        }
    }
    best
}

fn grow(data: &IntervalDataset, rows: &[usize], depth: usize, hyper: &TreeHyper) -> TreeNode {
    let leaf = mmit_leaf_value(rows.iter().map(|&i| &data.targets[i]), hyper.margin);
    if depth >= hyper.max_depth || rows.len() < hyper.min_samples_split || leaf.loss == 0.0 {
        return TreeNode::Leaf { value: leaf.value };
    }
    match best_split(data, rows, hyper.margin) {
        Some(split) if leaf.loss - split.loss > 1e-12 * leaf.loss => TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(grow(data, &split.left, depth + 1, hyper)),
            right: Box::new(grow(data, &split.right, depth + 1, hyper)),
        },
        _ => TreeNode::Leaf { value: leaf.value },
    }
}

/// Greedy top-down tree: each node takes the split with the smallest summed
/// leaf loss (ties to the lowest feature index, then the lowest threshold).
pub fn train_mmit(data: &IntervalDataset, hyper: TreeHyper) -> Result<TreeModel> {
    if data.is_empty() {
        return Err(Error::Pipeline("cannot train on an empty dataset".into()));
    }
    if !(hyper.margin >= 0.0 && hyper.margin.is_finite()) {
        return Err(Error::Config(format!(
            "tree margin must be finite and >= 0, got {}",
            hyper.margin
        )));
    }
    let rows: Vec<usize> = (0..data.len()).collect();
    Ok(TreeModel {
        root: grow(data, &rows, 0, &hyper),
        hyper,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interval(lower: f64, upper: f64) -> TargetInterval {
        TargetInterval { lower, upper }
    }

    #[test]
    fn leaf_single_target() {
        let fit = mmit_leaf_value(&[interval(1.0, 5.0)], 1.0);
        assert_eq!(
            fit,
            LeafFit {
                value: 3.0,
                loss: 0.0
            }
        );
    }

    #[test]
    fn leaf_two_disjoint_targets() {
        let fit = mmit_leaf_value(&[interval(0.0, 2.0), interval(4.0, 6.0)], 1.0);
        assert!((fit.value - 3.0).abs() < 1e-12);
        assert!((fit.loss - 8.0).abs() < 1e-12);
    }

    #[test]
    fn leaf_unbounded_and_half_infinite() {
        let all = interval(f64::NEG_INFINITY, f64::INFINITY);
        assert_eq!(
            mmit_leaf_value(&[all, all], 1.0),
            LeafFit {
                value: 0.0,
                loss: 0.0
            }
        );
        let right = interval(0.0, f64::INFINITY);
        assert_eq!(mmit_leaf_value(&[right], 1.0).value, 1.0);
        let left = interval(f64::NEG_INFINITY, 0.0);
        assert_eq!(
            mmit_leaf_value(&[left, right], 0.0),
            LeafFit {
                value: 0.0,
                loss: 0.0
            }
        );
        // Left- and right-censored targets that conflict.
        let fit = mmit_leaf_value(
            &[
                interval(f64::NEG_INFINITY, 0.0),
                interval(2.0, f64::INFINITY),
            ],
            1.0,
        );
        assert!((fit.value - 1.0).abs() < 1e-12);
        assert!((fit.loss - 8.0).abs() < 1e-12);
    }

    #[test]
    fn leaf_weighted_toward_majority() {
        // Two rows want y <= -1, one wants y >= 3: minimizer of 2(y+1)² + (3-y)² is 1/3.
        let t = [
            interval(f64::NEG_INFINITY, 0.0),
            interval(f64::NEG_INFINITY, 0.0),
            interval(2.0, f64::INFINITY),
        ];
        let fit = mmit_leaf_value(&t, 1.0);
        assert!((fit.value - 1.0 / 3.0).abs() < 1e-12);
    }

    fn two_cluster_data() -> IntervalDataset {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![(i % 3) as f64, i as f64]).collect();
        let targets = (0..10)
            .map(|i| {
                if i < 5 {
                    interval(0.0, 2.0)
                } else {
                    interval(10.0, 12.0)
                }
            })
            .collect();
        IntervalDataset::new(&rows, targets, vec!["noise".into(), "x".into()]).unwrap()
    }

    #[test]
    fn separable_tree_depth_one() {
        let data = two_cluster_data();
        let hyper = TreeHyper {
            max_depth: 4,
            min_samples_split: 2,
            margin: 1.0,
        };
        let tree = train_mmit(&data, hyper).unwrap();
        assert_eq!(tree.depth(), 1);
        match &tree.root {
            TreeNode::Split {
                feature, threshold, ..
            } => {
                assert_eq!(*feature, 1);
                assert_eq!(*threshold, 4.5);
            }
            TreeNode::Leaf { .. } => panic!("expected a split"),
        }
        let preds: Vec<f64> = (0..10)
            .map(|i| tree.predict(data.features.row(i).as_slice().unwrap()))
            .collect();
        assert_eq!(
            crate::learn::mean_squared_hinge(&preds, &data.targets, 1.0),
            0.0
        );
    }

    #[test]
    fn stopping_rules_give_single_leaf() {
        let data = two_cluster_data();
        let all = mmit_leaf_value(&data.targets, 1.0);
        for hyper in [
            TreeHyper {
                max_depth: 0,
                min_samples_split: 2,
                margin: 1.0,
            },
            TreeHyper {
                max_depth: 3,
                min_samples_split: 11,
                margin: 1.0,
            },
        ] {
            let tree = train_mmit(&data, hyper).unwrap();
            assert_eq!(tree.root, TreeNode::Leaf { value: all.value });
        }
    }
}
