//! Two-layer perceptron `y = w2 . relu(W1 x + b1) + b2` over the two input
//! features, trained by plain minibatch SGD on squared error.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{Normalizer, SupervisedBatch};
use crate::rng;

pub const INPUTS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub hidden_units: usize,
    /// Threshold coefficient applied to the last-epoch mean training loss.
    pub alpha: f64,
    pub seed: u64,
}

/// See the README for how this value was chosen.
pub const DEFAULT_ALPHA: f64 = 10.0;

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            learning_rate: 3e-5,
            batch_size: 1,
            epochs: 100,
            hidden_units: 32,
            alpha: DEFAULT_ALPHA,
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning_rate", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", "must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::param("epochs", "must be positive"));
        }
        if self.hidden_units == 0 {
            return Err(Error::param("hidden_units", "must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::param("alpha", "must be positive"));
        }
        Ok(())
    }
}

/// Network weights. `w1` holds one row of input weights per hidden unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub w1: Vec<[f64; INPUTS]>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl MlpParams {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            w1: vec![[0.0; INPUTS]; hidden],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
        }
    }

    pub fn hidden_units(&self) -> usize {
        self.b1.len()
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias.
    pub fn init<R: Rng + ?Sized>(hidden: usize, rng: &mut R) -> Self {
        let a1 = 1.0 / (INPUTS as f64).sqrt();
        let a2 = 1.0 / (hidden as f64).sqrt();
        let mut p = Self::zeros(hidden);
        for row in &mut p.w1 {
            for w in row.iter_mut() {
                *w = rng.random_range(-a1..a1);
            }
        }
        for b in &mut p.b1 {
            *b = rng.random_range(-a1..a1);
        }
        for w in &mut p.w2 {
            *w = rng.random_range(-a2..a2);
        }
        p.b2 = rng.random_range(-a2..a2);
        p
    }

    pub fn is_finite(&self) -> bool {
        self.w1
            .iter()
            .flatten()
            .chain(&self.b1)
            .chain(&self.w2)
            .all(|v| v.is_finite())
            && self.b2.is_finite()
    }

    /// Flattened view in serialization order: W1 row-major, b1, w2, b2.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.w1.iter().flatten().copied().collect();
        v.extend(&self.b1);
        v.extend(&self.w2);
        v.push(self.b2);
        v
    }

    pub fn from_flat(hidden: usize, flat: &[f64]) -> Option<Self> {
        if flat.len() != hidden * (INPUTS + 2) + 1 {
            return None;
        }
        let (w1, rest) = flat.split_at(hidden * INPUTS);
        let (b1, rest) = rest.split_at(hidden);
        let (w2, b2) = rest.split_at(hidden);
        Some(Self {
            w1: w1.chunks(INPUTS).map(|c| [c[0], c[1]]).collect(),
            b1: b1.to_vec(),
            w2: w2.to_vec(),
            b2: b2[0],
        })
    }

    fn axpy(&mut self, scale: f64, g: &MlpParams) {
        for (row, grow) in self.w1.iter_mut().zip(&g.w1) {
            for (w, gw) in row.iter_mut().zip(grow) {
                *w += scale * gw;
            }
        }
        for (b, gb) in self.b1.iter_mut().zip(&g.b1) {
            *b += scale * gb;
        }
        for (w, gw) in self.w2.iter_mut().zip(&g.w2) {
            *w += scale * gw;
        }
        self.b2 += scale * g.b2;
    }

    fn clear(&mut self) {
        self.w1.iter_mut().for_each(|r| *r = [0.0; INPUTS]);
        self.b1.iter_mut().for_each(|b| *b = 0.0);
        self.w2.iter_mut().for_each(|w| *w = 0.0);
        self.b2 = 0.0;
    }
}

pub fn forward(params: &MlpParams, x: [f64; INPUTS]) -> f64 {
    let mut y = params.b2;
    for ((row, b), w2) in params.w1.iter().zip(&params.b1).zip(&params.w2) {
        let a = row[0] * x[0] + row[1] * x[1] + b;
        if a > 0.0 {
            y += w2 * a;
        }
    }
    y
}

/// Squared error of one sample; its gradient is added into `grad`.
pub fn accumulate_gradient(
    params: &MlpParams,
    x: [f64; INPUTS],
    y: f64,
    grad: &mut MlpParams,
) -> f64 {
    let err = forward(params, x) - y;
    let dy = 2.0 * err;
    grad.b2 += dy;
    for (j, ((row, b), w2)) in params.w1.iter().zip(&params.b1).zip(&params.w2).enumerate() {
        let a = row[0] * x[0] + row[1] * x[1] + b;
        if a > 0.0 {
            grad.w2[j] += dy * a;
            let da = dy * w2;
            grad.b1[j] += da;
            grad.w1[j][0] += da * x[0];
            grad.w1[j][1] += da * x[1];
        }
    }
    err * err
}

/// Loss `(f(x) - y)^2` and its gradient with respect to every parameter.
pub fn loss_and_gradient(params: &MlpParams, x: [f64; INPUTS], y: f64) -> (f64, MlpParams) {
    let mut g = MlpParams::zeros(params.hidden_units());
    let loss = accumulate_gradient(params, x, y, &mut g);
    (loss, g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub params: MlpParams,
    pub hyperparams: Hyperparams,
    pub normalizer: Normalizer,
    pub per_epoch_mean_loss: Vec<f64>,
    /// Mean per-sample training loss over the final epoch.
    pub mean_last_epoch_loss: f64,
    /// Per-sample losses of the final epoch, in visiting order. Not persisted.
    #[serde(skip)]
    pub last_epoch_losses: Vec<f64>,
    pub train_wall_time_s: f64,
}

/// Trains on an already-normalized batch. Losses are accumulated in visiting
/// order, so a fixed seed reproduces the parameters bit for bit.
pub fn train(
    batch: &SupervisedBatch,
    normalizer: Normalizer,
    hp: &Hyperparams,
) -> Result<TrainedModel> {
    hp.validate()?;
    if batch.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let started = Instant::now();
    let n = batch.len();
    let mut init_rng = rng::stream("mlp-init", &[hp.seed.into()]);
    let mut params = MlpParams::init(hp.hidden_units, &mut init_rng);
    let mut grad = MlpParams::zeros(hp.hidden_units);
    let mut order: Vec<usize> = (0..n).collect();
    let mut per_epoch = Vec::with_capacity(hp.epochs);
    let mut losses = vec![0.0; n];

    for epoch in 0..hp.epochs {
        let mut perm_rng = rng::stream("mlp-permutation", &[hp.seed.into(), (epoch as u64).into()]);
        order.sort_unstable();
        order.shuffle(&mut perm_rng);
        let mut visited = 0;
        for chunk in order.chunks(hp.batch_size) {
            grad.clear();
            for &i in chunk {
                losses[visited] =
                    accumulate_gradient(&params, batch.inputs[i], batch.targets[i], &mut grad);
                visited += 1;
            }
            params.axpy(-hp.learning_rate / chunk.len() as f64, &grad);
        }
        let mean = losses.iter().sum::<f64>() / n as f64;
        if !mean.is_finite() || !params.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        per_epoch.push(mean);
    }

    Ok(TrainedModel {
        params,
        hyperparams: hp.clone(),
        normalizer,
        mean_last_epoch_loss: *per_epoch.last().expect("epochs > 0"),
        per_epoch_mean_loss: per_epoch,
        last_epoch_losses: losses,
        train_wall_time_s: started.elapsed().as_secs_f64(),
    })
}

/// `alpha * mean_last_epoch_loss`.
pub fn threshold(model: &TrainedModel, alpha: f64) -> f64 {
    alpha * model.mean_last_epoch_loss
}

pub fn sample_losses(model: &TrainedModel, batch: &SupervisedBatch) -> Vec<f64> {
    batch
        .inputs
        .iter()
        .zip(&batch.targets)
        .map(|(&x, &y)| (forward(&model.params, x) - y).powi(2))
        .collect()
}

/// Flags every sample whose squared error strictly exceeds `threshold`.
pub fn detect(model: &TrainedModel, threshold: f64, val: &SupervisedBatch) -> Vec<bool> {
    sample_losses(model, val)
        .into_iter()
        .map(|l| l > threshold)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::FeatureRow;
    use rand::SeedableRng;

    fn one_unit(w1: [f64; 2], b1: f64, w2: f64, b2: f64) -> MlpParams {
        MlpParams {
            w1: vec![w1],
            b1: vec![b1],
            w2: vec![w2],
            b2,
        }
    }

    fn identity_normalizer() -> Normalizer {
        Normalizer {
            value_min: 0.0,
            value_max: 1.0,
            delta_min: 0.0,
            delta_max: 1.0,
        }
    }

    #[test]
    fn forward_examples() {
        assert_eq!(forward(&MlpParams::zeros(32), [0.3, 0.7]), 0.0);
        let mut bias_only = MlpParams::zeros(4);
        bias_only.b2 = 1.25;
        assert_eq!(forward(&bias_only, [9.0, -3.0]), 1.25);
        assert_eq!(
            forward(&one_unit([1.0, 0.0], 0.0, 2.0, 1.0), [3.0, 0.4]),
            7.0
        );
        assert_eq!(
            forward(&one_unit([1.0, 0.0], 0.0, 2.0, 1.0), [-3.0, 0.4]),
            1.0
        );
    }

    #[test]
    fn init_bounds() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let p = MlpParams::init(32, &mut r);
        let a1 = 1.0 / 2f64.sqrt();
        let a2 = 1.0 / 32f64.sqrt();
        assert!(p.w1.iter().flatten().chain(&p.b1).all(|v| v.abs() < a1));
        assert!(p
            .w2
            .iter()
            .chain(std::iter::once(&p.b2))
            .all(|v| v.abs() < a2));
    }

    #[test]
    fn flat_round_trip() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let p = MlpParams::init(5, &mut r);
        assert_eq!(MlpParams::from_flat(5, &p.to_flat()).unwrap(), p);
        assert!(MlpParams::from_flat(4, &p.to_flat()).is_none());
    }

    fn constant_batch(n: usize) -> SupervisedBatch {
        let rows = vec![
            FeatureRow {
                value: 0.5,
                delta_t: 0.5,
                label: false
            };
            n
        ];
        crate::pipeline::make_supervised(&rows).unwrap()
    }

    #[test]
    fn learns_a_constant() {
        let hp = Hyperparams {
            epochs: 50,
            ..Hyperparams::default()
        };
        let m = train(&constant_batch(500), identity_normalizer(), &hp).unwrap();
        assert_eq!(m.per_epoch_mean_loss.len(), 50);
        assert_eq!(
            m.mean_last_epoch_loss,
            *m.per_epoch_mean_loss.last().unwrap()
        );
        assert!(m.mean_last_epoch_loss < m.per_epoch_mean_loss[0]);
    }

    #[test]
    fn training_is_reproducible() {
        let hp = Hyperparams {
            epochs: 5,
            batch_size: 3,
            seed: 9,
            ..Hyperparams::default()
        };
        let b = constant_batch(50);
        let a = train(&b, identity_normalizer(), &hp).unwrap();
        let c = train(&b, identity_normalizer(), &hp).unwrap();
        assert_eq!(a.params, c.params);
        assert_eq!(a.per_epoch_mean_loss, c.per_epoch_mean_loss);
        let other = train(&b, identity_normalizer(), &Hyperparams { seed: 10, ..hp }).unwrap();
        assert_ne!(a.params, other.params);
    }

    #[test]
    fn divergence_is_reported() {
        let mut b = constant_batch(20);
        b.targets.iter_mut().for_each(|t| *t = 1e200);
        let hp = Hyperparams {
            learning_rate: 1.0,
            epochs: 10,
            ..Hyperparams::default()
        };
        assert!(matches!(
            train(&b, identity_normalizer(), &hp),
            Err(Error::NonFiniteLoss { .. })
        ));
    }

    fn model_with_mean_loss(l: f64) -> TrainedModel {
        TrainedModel {
            params: MlpParams::zeros(1),
            hyperparams: Hyperparams::default(),
            normalizer: identity_normalizer(),
            per_epoch_mean_loss: vec![l],
            mean_last_epoch_loss: l,
            last_epoch_losses: vec![],
            train_wall_time_s: 0.0,
        }
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(threshold(&model_with_mean_loss(0.04), 2.0), 0.08);
        assert_eq!(threshold(&model_with_mean_loss(0.04), 1.0), 0.04);
        assert_eq!(threshold(&model_with_mean_loss(0.0), 3.0), 0.0);
        let m = model_with_mean_loss(0.0123);
        assert_eq!(threshold(&m, 2.0 * 1.7), 2.0 * threshold(&m, 1.7));
    }

    #[test]
    fn detection_is_strict() {
        // zero network predicts 0, so the loss is y^2
        let m = model_with_mean_loss(0.04);
        let val = SupervisedBatch {
            inputs: vec![[0.0, 0.0]; 4],
            targets: vec![0.1, 0.5_f64.sqrt(), 0.0, 0.5],
            labels: vec![false; 4],
        };
        let losses = sample_losses(&m, &val);
        assert_eq!(detect(&m, 0.08, &val)[..2], [false, true]);
        assert_eq!(detect(&m, 0.0, &val), vec![true, true, false, true]);
        assert!(!detect(&m, losses[3], &val)[3]);
    }
}
