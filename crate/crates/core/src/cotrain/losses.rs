//! The three training losses and the temporal ensemble that feeds the third.
//! Losses are sums over samples, not means.

use super::config::{LossWeights, TrainConfig};
use crate::error::{Error, Result};
use crate::nn::PROB_FLOOR;

fn nll_sum(predictions: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::EmptyMatched);
    }
    if predictions.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    for (p, &y) in predictions.iter().zip(labels) {
        let py = p.get(y).ok_or_else(|| {
            Error::Dimension(format!("label {y} out of range for {} classes", p.len()))
        })?;
        total -= py.max(PROB_FLOOR).ln();
    }
    Ok(total)
}

/// Negative log-likelihood of the pseudo labels under the rule-based predictions.
pub fn loss_denoiser(predictions: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    nll_sum(predictions, labels)
}

/// Negative log-likelihood of the pseudo labels under the classifier.
pub fn loss_classifier(predictions: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    nll_sum(predictions, labels)
}

/// Sum of squared distances between predictions and ensemble targets.
pub fn loss_selftrain(predictions: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    let mut total = 0.0;
    for (z, p) in predictions.iter().zip(targets) {
        if z.len() != p.len() {
            return Err(Error::Dimension("prediction/target width mismatch".into()));
        }
        total += z.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total)
}

/// `c1 l1 + c2 l2 + c3 l3` with the mode's effective weights.
pub fn total_loss(l1: f64, l2: f64, l3: f64, config: &TrainConfig) -> Result<f64> {
    config.validate()?;
    Ok(weighted_total(l1, l2, l3, config.loss_weights()?))
}

pub fn weighted_total(l1: f64, l2: f64, l3: f64, w: LossWeights) -> f64 {
    // Excluded terms are skipped so a meaningless loss cannot leak in as NaN.
    let mut t = 0.0;
    if w.c1 != 0.0 {
        t += w.c1 * l1;
    }
    if w.c2 != 0.0 {
        t += w.c2 * l2;
    }
    if w.c3 != 0.0 {
        t += w.c3 * l3;
    }
    t
}

/// Exponential moving average of classifier outputs over unmatched samples.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState {
    pub accumulated: Vec<Vec<f64>>,
    pub epoch: u32,
}

impl EnsembleState {
    pub fn new(samples: usize, num_classes: usize) -> Self {
        EnsembleState {
            accumulated: vec![vec![0.0; num_classes]; samples],
            epoch: 0,
        }
    }

    /// `Z <- a Z + (1 - a) z`, `t <- t + 1`; returns the bias-corrected
    /// targets `Z / (1 - a^t)`.
    pub fn update(&mut self, predictions: &[Vec<f64>], alpha: f64) -> Result<Vec<Vec<f64>>> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Config(format!("alpha={alpha} outside (0, 1)")));
        }
        if predictions.len() != self.accumulated.len() {
            return Err(Error::Dimension(format!(
                "{} predictions for an ensemble of {}",
                predictions.len(),
                self.accumulated.len()
            )));
        }
        for (z, p) in self.accumulated.iter_mut().zip(predictions) {
            if z.len() != p.len() {
                return Err(Error::Dimension("ensemble width mismatch".into()));
            }
            for (zc, pc) in z.iter_mut().zip(p) {
                *zc = alpha * *zc + (1.0 - alpha) * pc;
            }
        }
        self.epoch += 1;
        let correction = 1.0 - alpha.powi(self.epoch as i32);
        Ok(self
            .accumulated
            .iter()
            .map(|z| z.iter().map(|v| v / correction).collect())
            .collect())
    }
}

pub fn ensemble_update(
    state: &mut EnsembleState,
    predictions: &[Vec<f64>],
    alpha: f64,
) -> Result<Vec<Vec<f64>>> {
    state.update(predictions, alpha)
}
