use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Full-batch optimizer settings shared by the linear model and the MLP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    pub learning_rate: f64,
    pub max_iterations: usize,
    pub patience: usize,
    /// A loss counts as an improvement only if it beats the best by more than this.
    pub min_improvement: f64,
    pub margin: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            max_iterations: 12000,
            patience: 20,
            min_improvement: 1e-9,
            margin: 1.0,
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.max_iterations == 0 || self.patience == 0 {
            return Err(Error::Config(
                "max_iterations and patience must be positive".into(),
            ));
        }
        if [self.min_improvement, self.margin]
            .iter()
            .any(|v| v.is_nan() || *v < 0.0)
        {
            return Err(Error::Config(
                "min_improvement and margin must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.learning_rate * (*m / c1) / ((*v / c2).sqrt() + self.epsilon);
        }
    }
}

/// Outcome of feeding one loss value to [`EarlyStopping`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Progress {
    Improved,
    Waiting,
    Stop,
}

/// Stops once `patience` consecutive iterations fail to improve the best loss.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    min_improvement: f64,
    best_loss: f64,
    best_iteration: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_improvement: f64) -> Self {
        Self {
            patience,
            min_improvement,
            best_loss: f64::INFINITY,
            best_iteration: 0,
        }
    }

    /// Record the loss of 1-based `iteration`.
    pub fn observe(&mut self, iteration: usize, loss: f64) -> Progress {
        if loss < self.best_loss - self.min_improvement {
            self.best_loss = loss;
            self.best_iteration = iteration;
            Progress::Improved
        } else if iteration - self.best_iteration >= self.patience {
            Progress::Stop
        } else {
            Progress::Waiting
        }
    }

    pub fn best_loss(&self) -> f64 {
        self.best_loss
    }

    pub fn best_iteration(&self) -> usize {
        self.best_iteration
    }
}

/// How a training run ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Last iteration whose loss was evaluated.
    pub stop_iteration: usize,
    pub best_iteration: usize,
    pub best_loss: f64,
    /// `true` when patience ran out before `max_iterations`.
    pub early_stopped: bool,
    /// Objective at every iteration, `losses[t - 1]` for iteration `t`.
    pub losses: Vec<f64>,
}

/// Full-batch Adam with early stopping; leaves `params` at the best iterate.
///
/// `objective` writes the gradient of the smooth part into its second
/// argument and returns the full objective; `after_step` runs after every
/// Adam update (used for proximal steps).
pub(crate) fn minimize(
    params: &mut Vec<f64>,
    options: &TrainOptions,
    mut objective: impl FnMut(&[f64], &mut [f64]) -> f64,
    mut after_step: impl FnMut(&mut [f64]),
) -> Result<TrainReport> {
    options.validate()?;
    let mut adam = Adam::new(params.len(), options.learning_rate);
    let mut stopping = EarlyStopping::new(options.patience, options.min_improvement);
    let mut grad = vec![0.0; params.len()];
    let mut best = params.clone();
    let mut losses = Vec::new();
    let mut early_stopped = false;

    for iteration in 1..=options.max_iterations {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let loss = objective(params, &mut grad);
        if !loss.is_finite() {
            return Err(Error::Training { iteration });
        }
        losses.push(loss);
        match stopping.observe(iteration, loss) {
            Progress::Improved => best.copy_from_slice(params),
            Progress::Waiting => {}
            Progress::Stop => {
                early_stopped = true;
                break;
            }
        }
        if iteration == options.max_iterations {
            break;
        }
        adam.step(params, &grad);
        after_step(params);
    }
    *params = best;
    Ok(TrainReport {
        stop_iteration: losses.len(),
        best_iteration: stopping.best_iteration(),
        best_loss: stopping.best_loss(),
        early_stopped,
        losses,
    })
}
