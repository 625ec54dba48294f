use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MlError;
use crate::num::{count, lit, to_f64, Real};

/// Outputs are clamped to `[CLAMP, 1 - CLAMP]` before taking logs.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// Sigmoid output, cross-entropy loss.
    Classification,
    /// Identity output, squared-error loss.
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    /// `outputs x inputs`.
    pub weights: Array2<T>,
    pub bias: Array1<T>,
}

/// Fully connected network with `tanh` hidden units.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T> {
    pub layers: Vec<Layer<T>>,
    pub activation: Activation,
    pub head: Head,
}

/// Inputs `m x d` with one target per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub x: Array2<T>,
    pub y: Array1<T>,
}

impl<T: Real> Dataset<T> {
    pub fn new(x: Array2<T>, y: Array1<T>) -> Result<Self, MlError> {
        if x.nrows() != y.len() {
            return Err(MlError::Shape(format!("{} rows but {} targets", x.nrows(), y.len())));
        }
        Ok(Self { x, y })
    }

    pub fn from_rows(rows: &[Vec<f64>], targets: &[f64]) -> Result<Self, MlError> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(MlError::Shape("ragged input rows".into()));
        }
        let flat = rows.iter().flatten().map(|&v| lit::<T>(v)).collect();
        let x = Array2::from_shape_vec((rows.len(), d), flat).map_err(|e| MlError::Shape(e.to_string()))?;
        Self::new(x, targets.iter().map(|&v| lit(v)).collect())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

fn sigmoid<T: Real>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

impl<T: Real> MlpParams<T> {
    /// Layer sizes `inputs -> hidden[0] -> ... -> 1`, weights and biases
    /// drawn uniformly from `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn init(inputs: usize, hidden: &[usize], head: Head, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sizes = vec![inputs];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let r = 1.0 / (fan_in as f64).sqrt();
                let weights = Array2::from_shape_simple_fn((fan_out, fan_in), || lit(rng.gen_range(-r..=r)));
                let bias = Array1::from_shape_simple_fn(fan_out, || lit(rng.gen_range(-r..=r)));
                Layer { weights, bias }
            })
            .collect();
        Self {
            layers,
            activation: Activation::Tanh,
            head,
        }
    }

    /// Same shapes with every parameter zero.
    pub fn zeros_like(&self) -> Self {
        let layers = self
            .layers
            .iter()
            .map(|l| Layer {
                weights: Array2::zeros(l.weights.raw_dim()),
                bias: Array1::zeros(l.bias.len()),
            })
            .collect();
        Self {
            layers,
            activation: self.activation,
            head: self.head,
        }
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn weight_norm_sq(&self) -> T {
        self.layers.iter().map(|l| l.weights.iter().map(|&w| w * w).sum::<T>()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Parameters in layer order, weights row-major before biases.
    pub fn flatten(&self) -> Vec<T> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn set_flat(&mut self, k: usize, value: T) {
        let mut k = k;
        for l in &mut self.layers {
            let nw = l.weights.len();
            if k < nw {
                let c = l.weights.ncols();
                l.weights[(k / c, k % c)] = value;
                return;
            }
            k -= nw;
            if k < l.bias.len() {
                l.bias[k] = value;
                return;
            }
            k -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    fn check_input(&self, x: &ArrayView2<T>) -> Result<(), MlError> {
        if x.ncols() != self.inputs() {
            return Err(MlError::Shape(format!("expected {} inputs, got {}", self.inputs(), x.ncols())));
        }
        Ok(())
    }

    /// Pre-head output `z` and the activations of every layer input.
    fn forward_cached(&self, x: ArrayView2<T>) -> (Vec<Array2<T>>, Array1<T>) {
        let mut acts = vec![x.to_owned()];
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            let mut z = acts[k].dot(&l.weights.t());
            for mut row in z.rows_mut() {
                row.scaled_add(T::one(), &l.bias);
            }
            if k == last {
                return (acts, z.column(0).to_owned());
            }
            z.mapv_inplace(T::tanh);
            acts.push(z);
        }
        unreachable!("network has at least one layer")
    }

    fn apply_head(&self, z: T) -> T {
        match self.head {
            Head::Classification => sigmoid(z),
            Head::Regression => z,
        }
    }

    /// Network output for every row of `x`.
    pub fn predict(&self, x: ArrayView2<T>) -> Result<Array1<T>, MlError> {
        self.check_input(&x)?;
        let (_, z) = self.forward_cached(x);
        Ok(z.mapv(|v| self.apply_head(v)))
    }

    /// Network output for a single input vector.
    pub fn forward(&self, x: ArrayView1<T>) -> Result<T, MlError> {
        let row = x.insert_axis(Axis(0));
        Ok(self.predict(row)?[0])
    }

    /// Training objective and its gradient.
    ///
    /// Classification: mean cross entropy plus `lambda / 2m` times the sum of
    /// squared weights. Regression: mean squared error plus the same penalty.
    /// The gradient ignores the probability clamp, which only guards the logs.
    pub fn loss_and_gradient(&self, data: &Dataset<T>, lambda: T) -> Result<(T, MlpParams<T>), MlError> {
        if data.is_empty() {
            return Err(MlError::EmptyBatch);
        }
        self.check_input(&data.x.view())?;
        let m: T = count(data.len());
        let (acts, z) = self.forward_cached(data.x.view());
        let h = z.mapv(|v| self.apply_head(v));
        let data_loss = self.data_loss(&h, &data.y, m);
        let two: T = lit(2.0);
        let loss = data_loss + lambda / (two * m) * self.weight_norm_sq();

        let dz: Array1<T> = match self.head {
            Head::Classification => (&h - &data.y) / m,
            Head::Regression => (&h - &data.y) * (two / m),
        };
        let mut delta = dz.insert_axis(Axis(1));
        let mut grad = self.zeros_like();
        for k in (0..self.layers.len()).rev() {
            let l = &self.layers[k];
            let g = &mut grad.layers[k];
            g.weights = delta.t().dot(&acts[k]);
            g.weights.scaled_add(lambda / m, &l.weights);
            g.bias = delta.sum_axis(Axis(0));
            if k > 0 {
                let mut back = delta.dot(&l.weights);
                back.zip_mut_with(&acts[k], |d, &a| *d = *d * (T::one() - a * a));
                delta = back;
            }
        }
        Ok((loss, grad))
    }

    fn data_loss(&self, h: &Array1<T>, y: &Array1<T>, m: T) -> T {
        match self.head {
            Head::Classification => {
                let lo: T = lit(PROB_CLAMP);
                let hi = T::one() - lo;
                let s: T = h
                    .iter()
                    .zip(y.iter())
                    .map(|(&p, &t)| {
                        let p = p.max(lo).min(hi);
                        -(t * p.ln() + (T::one() - t) * (T::one() - p).ln())
                    })
                    .sum();
                s / m
            }
            Head::Regression => h.iter().zip(y.iter()).map(|(&p, &t)| (p - t) * (p - t)).sum::<T>() / m,
        }
    }

    pub fn objective(&self, data: &Dataset<T>, lambda: T) -> Result<T, MlError> {
        if data.is_empty() {
            return Err(MlError::EmptyBatch);
        }
        let h = self.predict(data.x.view())?;
        let m: T = count(data.len());
        Ok(self.data_loss(&h, &data.y, m) + lambda / (lit::<T>(2.0) * m) * self.weight_norm_sq())
    }
}

/// Mean cross entropy with the weight penalty `lambda / 2m * sum w^2`.
pub fn loss_classification<T: Real>(p: &MlpParams<T>, batch: &Dataset<T>, lambda: T) -> Result<T, MlError> {
    classification_view(p).objective(batch, lambda)
}

/// Mean squared error.
pub fn loss_regression<T: Real>(p: &MlpParams<T>, batch: &Dataset<T>) -> Result<T, MlError> {
    let mut q = p.clone();
    q.head = Head::Regression;
    q.objective(batch, T::zero())
}

fn classification_view<T: Real>(p: &MlpParams<T>) -> std::borrow::Cow<'_, MlpParams<T>> {
    if p.head == Head::Classification {
        std::borrow::Cow::Borrowed(p)
    } else {
        let mut q = p.clone();
        q.head = Head::Classification;
        std::borrow::Cow::Owned(q)
    }
}

/// Largest number of coordinates compared by [`gradient_check`].
pub const GRADIENT_CHECK_PARAMS: usize = 200;
pub const GRADIENT_CHECK_STEP: f64 = 1e-5;
/// Denominator floor. Central differences at the step above carry an
/// absolute error near `1e-11`, so coordinates with gradients below this
/// are compared in absolute terms.
pub const GRADIENT_CHECK_FLOOR: f64 = 1e-5;

/// Max over sampled coordinates of `|analytic - numeric| / max(|analytic|, |numeric|, floor)`
/// with central differences of the training objective.
pub fn gradient_check<T: Real>(p: &MlpParams<T>, batch: &Dataset<T>, lambda: T) -> Result<f64, MlError> {
    let (_, grad) = p.loss_and_gradient(batch, lambda)?;
    let analytic = grad.flatten();
    let base = p.flatten();
    let n = base.len();
    let stride = n.div_ceil(GRADIENT_CHECK_PARAMS).max(1);
    let h: T = lit(GRADIENT_CHECK_STEP);
    let mut q = p.clone();
    let mut worst = 0.0f64;
    for k in (0..n).step_by(stride) {
        q.set_flat(k, base[k] + h);
        let up = q.objective(batch, lambda)?;
        q.set_flat(k, base[k] - h);
        let down = q.objective(batch, lambda)?;
        q.set_flat(k, base[k]);
        let numeric = to_f64((up - down) / (h + h));
        let a = to_f64(analytic[k]);
        let denom = a.abs().max(numeric.abs()).max(GRADIENT_CHECK_FLOOR);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDocument {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Plain JSON form of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub activation: Activation,
    pub head: Head,
    pub layers: Vec<LayerDocument>,
}

impl<T: Real> MlpParams<T> {
    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            activation: self.activation,
            head: self.head,
            layers: self
                .layers
                .iter()
                .map(|l| LayerDocument {
                    inputs: l.weights.ncols(),
                    outputs: l.weights.nrows(),
                    weights: l.weights.iter().map(|&v| to_f64(v)).collect(),
                    bias: l.bias.iter().map(|&v| to_f64(v)).collect(),
                })
                .collect(),
        }
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self, MlError> {
        if doc.layers.is_empty() {
            return Err(MlError::Format("model has no layers".into()));
        }
        let mut layers = Vec::with_capacity(doc.layers.len());
        for (k, l) in doc.layers.iter().enumerate() {
            if k > 0 && l.inputs != doc.layers[k - 1].outputs {
                return Err(MlError::Format(format!("layer {k} input width does not chain")));
            }
            if l.bias.len() != l.outputs {
                return Err(MlError::Format(format!("layer {k} bias length")));
            }
            let weights = Array2::from_shape_vec((l.outputs, l.inputs), l.weights.iter().map(|&v| lit(v)).collect())
                .map_err(|e| MlError::Format(format!("layer {k}: {e}")))?;
            layers.push(Layer {
                weights,
                bias: l.bias.iter().map(|&v| lit(v)).collect(),
            });
        }
        if doc.layers.last().map(|l| l.outputs) != Some(1) {
            return Err(MlError::Format("network must have a single output".into()));
        }
        let p = Self {
            layers,
            activation: doc.activation,
            head: doc.head,
        };
        if !p.is_finite() {
            return Err(MlError::Format("non-finite parameter".into()));
        }
        Ok(p)
    }
}
