//! Feed-forward classifier over document embeddings.

use crate::error::{Error, Result};
use crate::nn::{self, init_params, softmax, MlpGrads, MlpParams};

#[derive(Debug, Clone, PartialEq)]
pub struct NeuralClassifier {
    pub mlp: MlpParams,
}

impl NeuralClassifier {
    pub fn new(mlp: MlpParams) -> Result<Self> {
        mlp.check_consistent()?;
        if mlp.out_dim() < 2 {
            return Err(Error::Dimension("classifier needs at least 2 outputs".into()));
        }
        Ok(NeuralClassifier { mlp })
    }

    pub fn init(embedding_dim: usize, hidden: usize, num_classes: usize, seed: u64) -> Result<Self> {
        Self::new(init_params(embedding_dim, hidden, num_classes, seed)?)
    }

    pub fn num_classes(&self) -> usize {
        self.mlp.out_dim()
    }

    pub fn embedding_dim(&self) -> usize {
        self.mlp.in_dim()
    }
}

/// Class distribution `softmax(f(B_i))`.
pub fn classify(net: &NeuralClassifier, embedding: &[f64]) -> Result<Vec<f64>> {
    let (_, logits) = net.mlp.forward(embedding)?;
    Ok(softmax(&logits))
}

/// Argmax class and its probability (lowest index on ties).
pub fn confidence(distribution: &[f64]) -> (usize, f64) {
    let c = nn::argmax(distribution);
    (c, distribution.get(c).copied().unwrap_or(0.0))
}

/// Forward state for one document, kept for backprop.
#[derive(Debug, Clone)]
pub struct ClassifierSample<'a> {
    input: &'a [f64],
    hidden: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl<'a> ClassifierSample<'a> {
    pub fn forward(net: &NeuralClassifier, embedding: &'a [f64]) -> Result<Self> {
        let (hidden, logits) = net.mlp.forward(embedding)?;
        Ok(ClassifierSample {
            input: embedding,
            hidden,
            probabilities: softmax(&logits),
        })
    }

    /// Accumulates `scale * d(-ln p[target])/dθ`; returns the unscaled loss.
    pub fn backward_nll(
        &self,
        net: &NeuralClassifier,
        target: usize,
        scale: f64,
        grads: &mut MlpGrads,
    ) -> Result<f64> {
        let (loss, dz) = nn::cross_entropy(&self.probabilities, target)?;
        let up: Vec<f64> = dz.iter().map(|g| g * scale).collect();
        net.mlp.accumulate_backward(self.input, &self.hidden, &up, grads);
        Ok(loss)
    }

    /// Accumulates `scale * d||p - target||^2/dθ` with `target` held fixed;
    /// returns the unscaled squared distance.
    pub fn backward_squared(
        &self,
        net: &NeuralClassifier,
        target: &[f64],
        scale: f64,
        grads: &mut MlpGrads,
    ) -> f64 {
        let diff: Vec<f64> = self
            .probabilities
            .iter()
            .zip(target)
            .map(|(p, t)| p - t)
            .collect();
        let dist = diff.iter().map(|d| d * d).sum();
        let dp: Vec<f64> = diff.iter().map(|d| 2.0 * d * scale).collect();
        let up = nn::softmax_backward(&self.probabilities, &dp);
        net.mlp.accumulate_backward(self.input, &self.hidden, &up, grads);
        dist
    }
}
