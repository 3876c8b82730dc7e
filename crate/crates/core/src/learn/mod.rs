//! Interval-regression learners for the log-penalty.
//!
//! All learners minimize the squared hinge loss
//! `ReLU(y_l - ŷ + m)² + ReLU(ŷ - y_u + m)²`, which is zero exactly when the
//! prediction sits inside the target interval shrunk by the margin `m`.

mod linear;
mod mlp;
mod optim;
mod tree;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::penaltypath::TargetInterval;

pub use linear::{linear_loss_and_gradient, train_linear, LinearModel};
pub use mlp::{train_mlp, MlpArch, MlpModel, HIDDEN_WIDTHS, MAX_HIDDEN_LAYERS};
pub use optim::{Adam, EarlyStopping, Progress, TrainOptions, TrainReport};
pub use tree::{mmit_leaf_value, train_mmit, LeafFit, TreeHyper, TreeModel, TreeNode};

/// Squared hinge loss of one prediction and its derivative in `yhat`.
/// Infinite bounds contribute nothing.
pub fn squared_hinge(yhat: f64, target: &TargetInterval, margin: f64) -> (f64, f64) {
    let below = (target.lower - yhat + margin).max(0.0);
    let above = (yhat - target.upper + margin).max(0.0);
    (below * below + above * above, 2.0 * (above - below))
}

/// Mean squared hinge loss over a batch of predictions.
pub fn mean_squared_hinge(predictions: &[f64], targets: &[TargetInterval], margin: f64) -> f64 {
    let total: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(&p, t)| squared_hinge(p, t, margin).0)
        .sum();
    total / predictions.len().max(1) as f64
}

/// The unsupervised baseline: `log λ = log log N`.
pub fn bic_predict(length: usize) -> Result<f64> {
    if length <= 1 {
        return Err(Error::Domain(format!(
            "log log N needs N >= 2, got {length}"
        )));
    }
    Ok((length as f64).ln().ln())
}

/// Feature rows paired with target intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalDataset {
    pub features: Array2<f64>,
    pub targets: Vec<TargetInterval>,
    pub feature_names: Vec<String>,
}

impl IntervalDataset {
    pub fn new(
        rows: &[Vec<f64>],
        targets: Vec<TargetInterval>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let width = feature_names.len();
        if rows.len() != targets.len() {
            return Err(Error::Pipeline(format!(
                "{} feature rows but {} targets",
                rows.len(),
                targets.len()
            )));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != width) {
            return Err(Error::Pipeline(format!(
                "feature row of width {} where {width} names were given",
                r.len()
            )));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Pipeline(
                "non-finite feature value in dataset".into(),
            ));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let features = Array2::from_shape_vec((rows.len(), width), flat)
            .map_err(|e| Error::Pipeline(e.to_string()))?;
        Ok(Self {
            features,
            targets,
            feature_names,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn width(&self) -> usize {
        self.features.ncols()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select(ndarray::Axis(0), indices),
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }
}
