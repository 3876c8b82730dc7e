use ndarray::{Array2, ArrayView2, ArrayViewMut2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{minimize, TrainOptions, TrainReport};
use super::{squared_hinge, IntervalDataset};
use crate::error::{Error, Result};

pub const MAX_HIDDEN_LAYERS: usize = 4;
pub const HIDDEN_WIDTHS: [usize; 9] = [2, 4, 8, 16, 32, 64, 128, 256, 512];

/// Hidden-layer count and the shared width of every hidden layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MlpArch {
    pub hidden_layers: usize,
    pub width: usize,
}

impl MlpArch {
    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_HIDDEN_LAYERS).contains(&self.hidden_layers) {
            return Err(Error::Config(format!(
                "hidden layer count must be in 1..={MAX_HIDDEN_LAYERS}, got {}",
                self.hidden_layers
            )));
        }
        if !HIDDEN_WIDTHS.contains(&self.width) {
            return Err(Error::Config(format!(
                "hidden width must be one of {HIDDEN_WIDTHS:?}, got {}",
                self.width
            )));
        }
        Ok(())
    }

    /// All 36 architectures, shallow and narrow first.
    pub fn grid() -> Vec<MlpArch> {
        (1..=MAX_HIDDEN_LAYERS)
            .flat_map(|hidden_layers| {
                HIDDEN_WIDTHS.iter().map(move |&width| MlpArch {
                    hidden_layers,
                    width,
                })
            })
            .collect()
    }

    pub fn layer_sizes(&self, inputs: usize) -> Vec<usize> {
        let mut sizes = vec![inputs];
        sizes.extend(std::iter::repeat_n(self.width, self.hidden_layers));
        sizes.push(1);
        sizes
    }
}

impl std::fmt::Display for MlpArch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "layers={};width={}", self.hidden_layers, self.width)
    }
}

/// Fully connected network with rectifier hidden layers and a linear output.
///
/// Parameters are stored flat: for each layer a row-major `fan_in × fan_out`
/// weight matrix followed by `fan_out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layer_sizes: Vec<usize>,
    pub params: Vec<f64>,
    pub seed: u64,
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl MlpModel {
    pub fn new(layer_sizes: Vec<usize>, params: Vec<f64>, seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes[layer_sizes.len() - 1] != 1 {
            return Err(Error::Config(
                "an MLP needs an input layer and a single output".into(),
            ));
        }
        let expected = param_count(&layer_sizes);
        if params.len() != expected {
            return Err(Error::Config(format!(
                "layer sizes {layer_sizes:?} need {expected} parameters, got {}",
                params.len()
            )));
        }
        Ok(Self {
            layer_sizes,
            params,
            seed,
        })
    }

    /// Uniform Glorot initialization with zero biases.
    pub fn init(layer_sizes: Vec<usize>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(param_count(&layer_sizes));
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.random_range(-a..=a)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self {
            layer_sizes,
            params,
            seed,
        }
    }

    pub fn inputs(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let row = ArrayView2::from_shape((1, x.len()), x).expect("contiguous row");
        self.predict_batch(row)[0]
    }

    pub fn predict_batch(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let acts = forward(&self.layer_sizes, &self.params, x);
        acts.last().expect("output layer").column(0).to_vec()
    }

    /// Mean squared hinge loss on `data` and its gradient with respect to `params`.
    pub fn loss_and_gradient(&self, data: &IntervalDataset, margin: f64) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let loss = loss_and_gradient(&self.layer_sizes, &self.params, data, margin, &mut grad);
        (loss, grad)
    }
}

/// `dst = a · b`, overwriting `dst`.
fn gemm_into(mut dst: ArrayViewMut2<'_, f64>, a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) {
    let (m, k) = a.dim();
    let n = b.ncols();
    assert_eq!((b.nrows(), dst.dim()), (k, (m, n)), "matrix shapes");
    if k == 0 {
        dst.fill(0.0);
        return;
    }
    let (ds, as_, bs) = (
        dst.strides().to_vec(),
        a.strides().to_vec(),
        b.strides().to_vec(),
    );
    // SAFETY: the pointers and strides come from live ndarray views whose
    // shapes were checked above, and `dst` is borrowed mutably.
    unsafe {
        gemm::gemm(
            m,
            n,
            k,
            dst.as_mut_ptr(),
            ds[1],
            ds[0],
            false,
            a.as_ptr(),
            as_[1],
            as_[0],
            b.as_ptr(),
            bs[1],
            bs[0],
            0.0,
            1.0,
            false,
            false,
            false,
            gemm::Parallelism::None,
        );
    }
}

fn matmul(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = Array2::zeros((a.nrows(), b.ncols()));
    gemm_into(out.view_mut(), a, b);
    out
}

fn layer_views<'a>(
    sizes: &[usize],
    params: &'a [f64],
) -> Vec<(ArrayView2<'a, f64>, ArrayView2<'a, f64>)> {
    let mut views = Vec::with_capacity(sizes.len() - 1);
    let mut offset = 0;
    for w in sizes.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let weights = ArrayView2::from_shape(
            (fan_in, fan_out),
            &params[offset..offset + fan_in * fan_out],
        )
        .expect("weight block");
        offset += fan_in * fan_out;
        let bias = ArrayView2::from_shape((1, fan_out), &params[offset..offset + fan_out])
            .expect("bias block");
        offset += fan_out;
        views.push((weights, bias));
    }
    views
}

/// Activations of every layer, input first; hidden layers are rectified.
fn forward(sizes: &[usize], params: &[f64], x: ArrayView2<'_, f64>) -> Vec<Array2<f64>> {
    let views = layer_views(sizes, params);
    let last = views.len() - 1;
    let mut acts = Vec::with_capacity(views.len() + 1);
    acts.push(x.to_owned());
    for (l, (weights, bias)) in views.iter().enumerate() {
        let mut z = matmul(acts[l].view(), *weights);
        z += bias;
        if l < last {
            z.mapv_inplace(|v| v.max(0.0));
        }
        acts.push(z);
    }
    acts
}

fn loss_and_gradient(
    sizes: &[usize],
    params: &[f64],
    data: &IntervalDataset,
    margin: f64,
    grad: &mut [f64],
) -> f64 {
    let n = data.len() as f64;
    let acts = forward(sizes, params, data.features.view());
    let output = acts.last().expect("output layer");
    let mut loss = 0.0;
    let mut delta = Array2::zeros((data.len(), 1));
    for ((d, &yhat), target) in delta.iter_mut().zip(output.column(0)).zip(&data.targets) {
        let (l, dl) = squared_hinge(yhat, target, margin);
        loss += l;
        *d = dl / n;
    }

    let views = layer_views(sizes, params);
    let mut offsets = Vec::with_capacity(views.len());
    let mut offset = 0;
    for w in sizes.windows(2) {
        offsets.push(offset);
        offset += w[0] * w[1] + w[1];
    }
    for l in (0..views.len()).rev() {
        let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
        let start = offsets[l];
        let (gw, gb) =
            grad[start..start + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
        let mut gw = ArrayViewMut2::from_shape((fan_in, fan_out), gw).expect("weight grad block");
        gemm_into(gw.view_mut(), acts[l].t(), delta.view());
        for (g, s) in gb.iter_mut().zip(delta.sum_axis(Axis(0))) {
            *g = s;
        }
        if l > 0 {
            let mut back = matmul(delta.view(), views[l].0.t());
            back.zip_mut_with(&acts[l], |d, &a| {
                if a <= 0.0 {
                    *d = 0.0;
                }
            });
            delta = back;
        }
    }
    loss / n
}

/// Train an MLP by full-batch Adam with early stopping; returns the best iterate.
pub fn train_mlp(
    data: &IntervalDataset,
    arch: MlpArch,
    options: &TrainOptions,
    seed: u64,
) -> Result<(MlpModel, TrainReport)> {
    arch.validate()?;
    if data.is_empty() {
        return Err(Error::Pipeline("cannot train on an empty dataset".into()));
    }
    let mut model = MlpModel::init(arch.layer_sizes(data.width()), seed);
    let sizes = model.layer_sizes.clone();
    let report = minimize(
        &mut model.params,
        options,
        |p, g| loss_and_gradient(&sizes, p, data, options.margin, g),
        |_| {},
    )?;
    Ok((model, report))
}
