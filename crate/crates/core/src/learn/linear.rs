use serde::{Deserialize, Serialize};

use super::optim::{minimize, TrainOptions, TrainReport};
use super::{squared_hinge, IntervalDataset};
use crate::error::{Error, Result};

/// `log λ = xᵀw + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn zeros(width: usize) -> Self {
        Self {
            weights: vec![0.0; width],
            intercept: 0.0,
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    fn from_params(params: &[f64]) -> Self {
        let (weights, intercept) = params.split_at(params.len() - 1);
        Self {
            weights: weights.to_vec(),
            intercept: intercept[0],
        }
    }

    fn to_params(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.push(self.intercept);
        p
    }
}

/// Mean squared hinge loss of the linear model with parameters `[w.., b]`,
/// writing its gradient into `grad`.
pub fn linear_loss_and_gradient(
    params: &[f64],
    data: &IntervalDataset,
    margin: f64,
    grad: &mut [f64],
) -> f64 {
    let width = data.width();
    let n = data.len() as f64;
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut loss = 0.0;
    for (row, target) in data.features.rows().into_iter().zip(&data.targets) {
        let yhat = params[width] + row.iter().zip(params).map(|(x, w)| x * w).sum::<f64>();
        let (l, d) = squared_hinge(yhat, target, margin);
        loss += l;
        for (g, x) in grad.iter_mut().zip(row.iter()) {
            *g += d * x / n;
        }
        grad[width] += d / n;
    }
    loss / n
}

fn l1_norm(weights: &[f64]) -> f64 {
    weights.iter().map(|w| w.abs()).sum()
}

/// Fit by full-batch Adam on mean squared hinge loss plus `l1_strength·‖w‖₁`.
///
/// The L1 term is handled by a soft-threshold step after every update; the
/// intercept is never penalized. Parameters start at zero, so the result
/// depends only on the data and options.
pub fn train_linear(
    data: &IntervalDataset,
    l1_strength: f64,
    options: &TrainOptions,
) -> Result<(LinearModel, TrainReport)> {
    if data.is_empty() {
        return Err(Error::Pipeline("cannot train on an empty dataset".into()));
    }
    if !(l1_strength >= 0.0 && l1_strength.is_finite()) {
        return Err(Error::Config(format!(
            "l1 strength must be finite and >= 0, got {l1_strength}"
        )));
    }
    let width = data.width();
    let mut params = LinearModel::zeros(width).to_params();
    let threshold = options.learning_rate * l1_strength;
    let report = minimize(
        &mut params,
        options,
        |p, g| {
            linear_loss_and_gradient(p, data, options.margin, g)
                + l1_strength * l1_norm(&p[..width])
        },
        |p| {
            if threshold > 0.0 {
                for w in &mut p[..width] {
                    *w = w.signum() * (w.abs() - threshold).max(0.0);
                }
            }
        },
    )?;
    Ok((LinearModel::from_params(&params), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::penaltypath::TargetInterval;

    fn mean_loss(model: &LinearModel, data: &IntervalDataset, margin: f64) -> f64 {
        let preds: Vec<f64> = data
            .features
            .rows()
            .into_iter()
            .map(|r| model.predict(r.as_slice().expect("row-major dataset")))
            .collect();
        crate::learn::mean_squared_hinge(&preds, &data.targets, margin)
    }

    fn interval(lower: f64, upper: f64) -> TargetInterval {
        TargetInterval { lower, upper }
    }

    fn fast() -> TrainOptions {
        TrainOptions {
            learning_rate: 0.01,
            ..TrainOptions::default()
        }
    }

    #[test]
    fn constant_model_predicts_intercept() {
        let m = LinearModel {
            weights: vec![0.0, 0.0],
            intercept: 2.5,
        };
        assert_eq!(m.predict(&[10.0, -3.0]), 2.5);
    }

    #[test]
    fn fits_separable_data() {
        // y = x lies 2 inside every interval; margin 1 leaves slack.
        let xs = [-2.0, -1.0, 0.0, 1.0, 2.0, 3.0];
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        let targets = xs.iter().map(|&x| interval(x - 2.0, x + 2.0)).collect();
        let data = IntervalDataset::new(&rows, targets, vec!["x".into()]).unwrap();
        let (model, report) = train_linear(&data, 0.0, &fast()).unwrap();
        assert!(report.best_loss < 1e-6, "loss {}", report.best_loss);
        assert!(mean_loss(&model, &data, 1.0) < 1e-6);
        assert!(report.stop_iteration <= 12000);
    }

    #[test]
    fn huge_l1_zeroes_weights() {
        let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let targets = (0..8).map(|i| interval(i as f64, i as f64 + 3.0)).collect();
        let data = IntervalDataset::new(&rows, targets, vec!["a".into(), "b".into()]).unwrap();
        let (model, _) = train_linear(&data, 1e6, &fast()).unwrap();
        assert!(model.weights.iter().all(|&w| w == 0.0));
        assert!(model.intercept > 0.0);
    }

    #[test]
    fn intercept_only() {
        let rows = vec![vec![]; 4];
        let targets = vec![
            interval(0.0, 6.0),
            interval(1.0, f64::INFINITY),
            interval(f64::NEG_INFINITY, 5.0),
            interval(-1.0, 7.0),
        ];
        let data = IntervalDataset::new(&rows, targets, vec![]).unwrap();
        let (model, report) = train_linear(&data, 0.0, &fast()).unwrap();
        assert!(report.best_loss < 1e-6);
        assert!(model.intercept >= 2.0 - 1e-3 && model.intercept <= 4.0 + 1e-3);
    }

    #[test]
    fn never_worse_than_zero_model() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![(i as f64).sin()]).collect();
        let targets = (0..10)
            .map(|i| interval(i as f64 * 0.3, i as f64 * 0.3 + 0.5))
            .collect();
        let data = IntervalDataset::new(&rows, targets, vec!["x".into()]).unwrap();
        let zero = mean_loss(&LinearModel::zeros(1), &data, 1.0);
        let (_, report) = train_linear(&data, 0.0, &TrainOptions::default()).unwrap();
        assert!(report.best_loss <= zero);
        let best = report.losses.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(best <= report.best_loss && report.best_loss - best < 1e-6);
    }
}
