//! Full-batch gradient descent with step halving.

use serde::{Deserialize, Serialize};

use super::init::spectral_init;
use super::interface::{ConditioningInterface, EncoderKind, Gradients};
use super::BiasPair;
use crate::error::{Error, Result};
use crate::rng;

/// Encoder activation and the oracle biases it should produce.
pub type TrainingPair = (Vec<f64>, BiasPair);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitScheme {
    /// Principal directions of the inputs and least-squares read-outs.
    Spectral,
    /// I.i.d. Gaussian weights, std `1/√fan_in`, from the configured seed.
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrainConfig {
    pub kind: EncoderKind,
    pub rank: usize,
    pub use_bias: bool,
    pub init: InitScheme,
    pub learning_rate: f64,
    /// Multiplier applied to the step after every accepted iteration; 1.0
    /// keeps the step fixed apart from halving.
    pub lr_growth: f64,
    pub max_iterations: usize,
    /// Stop when the relative loss change falls below this.
    pub tolerance: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(kind: EncoderKind, rank: usize, seed: u64) -> Self {
        Self {
            kind,
            rank,
            use_bias: false,
            init: InitScheme::Spectral,
            learning_rate: 0.05,
            lr_growth: 1.0,
            max_iterations: 5000,
            tolerance: 1e-9,
            seed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub interface: ConditioningInterface,
    /// Loss before the first step followed by the loss after every accepted step.
    pub loss_history: Vec<f64>,
    pub final_learning_rate: f64,
    pub converged: bool,
}

/// `MSE(b̂_enc, b_enc) + MSE(b̂_dec, b_dec)`, each averaged over samples and units.
pub fn loss_and_gradient(
    iface: &ConditioningInterface,
    pairs: &[TrainingPair],
) -> Result<(f64, Gradients)> {
    let w = 1.0 / (pairs.len() * iface.dim()) as f64;
    let mut grad = iface.zero_gradients();
    let mut loss = 0.0;
    for (x, target) in pairs {
        loss += iface.accumulate_gradient(x, target, w, w, &mut grad)?;
    }
    Ok((loss, grad))
}

pub fn loss(iface: &ConditioningInterface, pairs: &[TrainingPair]) -> Result<f64> {
    let w = 1.0 / (pairs.len() * iface.dim()) as f64;
    let mut loss = 0.0;
    for (x, target) in pairs {
        let out = iface.forward(x)?;
        let se = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>();
        loss += w * (se(&out.b_enc, &target.b_enc) + se(&out.b_dec, &target.b_dec));
    }
    Ok(loss)
}

/// Minimizes the joint bias MSE. A step that raises the loss is rejected and
/// retried at half the learning rate, so the recorded history never increases.
pub fn train_interface(pairs: &[TrainingPair], cfg: &TrainConfig) -> Result<TrainOutcome> {
    if pairs.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "training needs at least 2 pairs, got {}",
            pairs.len()
        )));
    }
    let dim = pairs[0].0.len();
    for (x, b) in pairs {
        for (context, len) in [
            ("training input", x.len()),
            ("training b_enc", b.b_enc.len()),
            ("training b_dec", b.b_dec.len()),
        ] {
            if len != dim {
                return Err(Error::DimensionMismatch {
                    context,
                    expected: dim,
                    found: len,
                });
            }
        }
    }
    let mut iface = match cfg.init {
        InitScheme::Spectral => spectral_init(cfg.kind, cfg.rank, cfg.use_bias, pairs)?,
        InitScheme::Random => ConditioningInterface::init(
            cfg.kind,
            cfg.rank,
            dim,
            cfg.use_bias,
            &mut rng::stream(cfg.seed, 0),
        )?,
    };

    let (mut loss, mut grad) = loss_and_gradient(&iface, pairs)?;
    if !loss.is_finite() {
        return Err(Error::DivergedTraining { iteration: 0 });
    }
    let mut history = vec![loss];
    let mut lr = cfg.learning_rate;
    let mut converged = false;
    'outer: for iteration in 1..=cfg.max_iterations {
        loop {
            let mut candidate = iface.clone();
            candidate.apply(-lr, &grad);
            let (new_loss, new_grad) = loss_and_gradient(&candidate, pairs)?;
            if new_loss.is_nan() {
                return Err(Error::DivergedTraining { iteration });
            }
            if new_loss <= loss {
                let rel_change = (loss - new_loss) / loss.max(f64::MIN_POSITIVE);
                iface = candidate;
                grad = new_grad;
                loss = new_loss;
                history.push(loss);
                lr *= cfg.lr_growth;
                if rel_change < cfg.tolerance {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            lr *= 0.5;
            if lr < 1e-300 {
                converged = true;
                break 'outer;
            }
        }
    }
    Ok(TrainOutcome {
        interface: iface,
        loss_history: history,
        final_learning_rate: lr,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal_vec, stream};

    fn pairs(n: usize, dim: usize, seed: u64) -> Vec<TrainingPair> {
        let mut r = stream(seed, 0);
        (0..n)
            .map(|_| {
                let x = normal_vec(&mut r, dim, 1.0);
                let b_enc = x.iter().map(|v| 0.3 * v).collect();
                let b_dec = x.iter().rev().map(|v| 0.2 * v.max(0.0)).collect();
                (x, BiasPair { b_enc, b_dec })
            })
            .collect()
    }

    #[test]
    fn loss_history_is_non_increasing() {
        let data = pairs(32, 6, 1);
        let cfg = TrainConfig {
            max_iterations: 300,
            learning_rate: 5.0,
            init: InitScheme::Random,
            ..TrainConfig::new(EncoderKind::Linear, 2, 4)
        };
        let out = train_interface(&data, &cfg).unwrap();
        assert!(out.loss_history.windows(2).all(|w| w[1] <= w[0]));
        assert!(out.loss_history.last().unwrap() < &out.loss_history[0]);
        assert!(out.final_learning_rate < 5.0);
    }

    #[test]
    fn rejects_tiny_or_ragged_datasets() {
        let data = pairs(2, 3, 0);
        let cfg = TrainConfig::new(EncoderKind::Linear, 1, 0);
        assert!(train_interface(&data[..1], &cfg).is_err());
        let mut ragged = data.clone();
        ragged[1].1.b_dec.pop();
        assert!(matches!(
            train_interface(&ragged, &cfg),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn batch_loss_matches_gradient_pass() {
        let data = pairs(8, 5, 2);
        let iface = ConditioningInterface::init(EncoderKind::Mlp, 2, 5, true, &mut stream(9, 0)).unwrap();
        let (l, _) = loss_and_gradient(&iface, &data).unwrap();
        assert!((l - loss(&iface, &data).unwrap()).abs() < 1e-14);
    }
}
