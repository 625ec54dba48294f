use serde::{Deserialize, Serialize};

use super::{Dataset, Head, MlError, MlpParams};
use crate::num::{lit, Real};

pub const HIDDEN_LAYERS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub lambda: f64,
    pub seed: u64,
    pub hidden_width: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 5000,
            lambda: 1e-3,
            seed: 0,
            hidden_width: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), MlError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(MlError::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(MlError::Config(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if self.hidden_width == 0 {
            return Err(MlError::Config("hidden_width must be positive".into()));
        }
        Ok(())
    }

    /// Fresh network with the configured width and seed.
    pub fn init<T: Real>(&self, inputs: usize, head: Head) -> MlpParams<T> {
        MlpParams::init(inputs, &[self.hidden_width; HIDDEN_LAYERS], head, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained<T> {
    pub params: MlpParams<T>,
    /// Objective before each update.
    pub loss_history: Vec<T>,
}

/// Full-batch gradient descent for `cfg.epochs` steps.
pub fn train<T: Real>(p0: MlpParams<T>, data: &Dataset<T>, cfg: &TrainConfig) -> Result<Trained<T>, MlError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(MlError::EmptyBatch);
    }
    let lr: T = lit(cfg.learning_rate);
    let lambda: T = lit(cfg.lambda);
    let mut p = p0;
    let mut loss_history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let (loss, grad) = p.loss_and_gradient(data, lambda)?;
        if !loss.is_finite() {
            return Err(MlError::DivergenceDetected { epoch });
        }
        loss_history.push(loss);
        for (l, g) in p.layers.iter_mut().zip(&grad.layers) {
            l.weights.scaled_add(-lr, &g.weights);
            l.bias.scaled_add(-lr, &g.bias);
        }
    }
    if !p.is_finite() {
        return Err(MlError::DivergenceDetected { epoch: cfg.epochs });
    }
    Ok(Trained { params: p, loss_history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array1, Array2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    /// Two Gaussian blobs centred at `(+-2, +-2)` with unit spread, trimmed to
    /// a margin around the separating line `x + y = 0`.
    fn blobs(seed: u64, m: usize) -> Dataset<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 1.0).unwrap();
        let mut rows = Vec::new();
        let mut ys = Vec::new();
        while ys.len() < m {
            let label = ys.len() % 2;
            let c = if label == 1 { 2.0 } else { -2.0 };
            let (a, b) = (c + n.sample(&mut rng), c + n.sample(&mut rng));
            if (a + b) * (2.0 * label as f64 - 1.0) < 0.5 {
                continue;
            }
            rows.push(vec![a, b]);
            ys.push(label as f64);
        }
        Dataset::from_rows(&rows, &ys).unwrap()
    }

    fn accuracy(p: &MlpParams<f64>, d: &Dataset<f64>) -> f64 {
        let h = p.predict(d.x.view()).unwrap();
        let hits = h.iter().zip(d.y.iter()).filter(|(&h, &y)| (h > 0.5) == (y == 1.0)).count();
        hits as f64 / d.len() as f64
    }

    #[test]
    fn separable_blobs_are_learned() {
        let data = blobs(7, 200);
        // the generating line separates the sample by construction
        assert!(data.x.rows().into_iter().zip(data.y.iter()).all(|(r, &y)| ((r[0] + r[1]) > 0.0) == (y == 1.0)));
        let cfg = TrainConfig {
            epochs: 2000,
            hidden_width: 8,
            ..Default::default()
        };
        let out = train(cfg.init(2, Head::Classification), &data, &cfg).unwrap();
        assert!(accuracy(&out.params, &data) >= 0.99);
    }

    #[test]
    fn convex_case_loss_never_increases() {
        let data = blobs(3, 100);
        let cfg = TrainConfig {
            epochs: 300,
            learning_rate: 0.05,
            ..Default::default()
        };
        let p0 = MlpParams::init(2, &[], Head::Classification, 1);
        let out = train(p0, &data, &cfg).unwrap();
        assert!(out.loss_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn huge_lambda_flattens_the_classifier() {
        let data = blobs(11, 200);
        // lr = m / lambda removes the weights in one step; the unpenalized
        // output bias then needs about 4 / lr epochs per e-fold
        let cfg = TrainConfig {
            lambda: 1e6,
            learning_rate: 2e-4,
            epochs: 60_000,
            hidden_width: 8,
            ..Default::default()
        };
        let out = train(cfg.init(2, Head::Classification), &data, &cfg).unwrap();
        let h = out.params.predict(data.x.view()).unwrap();
        assert!(h.iter().all(|v| (v - 0.5).abs() <= 0.01), "{h:?}");
    }

    #[test]
    fn deterministic_for_a_seed() {
        let data = blobs(5, 50);
        let cfg = TrainConfig {
            epochs: 50,
            hidden_width: 6,
            seed: 9,
            ..Default::default()
        };
        let a = train(cfg.init(2, Head::Classification), &data, &cfg).unwrap();
        let b = train(cfg.init(2, Head::Classification), &data, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_is_reported() {
        let x = Array2::from_elem((4, 1), 1e3);
        let data = Dataset::new(x, Array1::from_elem(4, 1e3)).unwrap();
        let cfg = TrainConfig {
            learning_rate: 10.0,
            epochs: 200,
            ..Default::default()
        };
        let p0 = MlpParams::init(1, &[], Head::Regression, 0);
        assert!(matches!(train(p0, &data, &cfg), Err(MlError::DivergenceDetected { .. })));
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { lambda: -1.0, ..Default::default() },
            TrainConfig { hidden_width: 0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(MlError::Config(_))));
        }
    }
}
