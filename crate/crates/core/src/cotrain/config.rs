use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which components take part in training and inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Denoiser, classifier and self-training on unmatched samples.
    Full,
    /// Denoiser only.
    RuleOnly,
    /// Classifier on majority-vote labels.
    NeuralOnly,
    /// Classifier on majority-vote labels plus self-training.
    NeuralSelf,
    /// Denoiser and classifier, no self-training.
    RuleNeural,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::Full,
        Mode::RuleOnly,
        Mode::NeuralOnly,
        Mode::NeuralSelf,
        Mode::RuleNeural,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::RuleOnly => "rule-only",
            Mode::NeuralOnly => "neural-only",
            Mode::NeuralSelf => "neural-self",
            Mode::RuleNeural => "rule-neural",
        }
    }

    pub fn uses_denoiser(self) -> bool {
        matches!(self, Mode::Full | Mode::RuleOnly | Mode::RuleNeural)
    }

    pub fn uses_classifier(self) -> bool {
        !matches!(self, Mode::RuleOnly)
    }

    pub fn uses_self_training(self) -> bool {
        matches!(self, Mode::Full | Mode::NeuralSelf)
    }

    pub(crate) fn code(self) -> u8 {
        Mode::ALL.iter().position(|&m| m == self).unwrap() as u8
    }

    pub(crate) fn from_code(code: u8) -> Option<Mode> {
        Mode::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == norm)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown mode `{s}` (expected full, rule-only, neural-only, neural-self or rule-neural)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// Momentum of the temporal ensemble.
    pub alpha: f64,
    pub lr: f64,
    pub hidden: usize,
    pub max_epochs: usize,
    /// Epochs without a dev improvement before stopping.
    pub patience: usize,
    /// Matched samples have more than `threshold_p` votes.
    pub threshold_p: usize,
    pub seed: u64,
    pub mode: Mode,
    /// Fraction of matched training samples with gold labels whose pseudo
    /// labels are replaced by gold and held fixed.
    pub clean_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            c1: 0.2,
            c2: 0.7,
            c3: 0.1,
            alpha: 0.6,
            lr: 0.02,
            hidden: 128,
            max_epochs: 500,
            patience: 50,
            threshold_p: 0,
            seed: 0,
            mode: Mode::Full,
            clean_fraction: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, c) in [("c1", self.c1), ("c2", self.c2), ("c3", self.c3)] {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::Config(format!("{name}={c} outside [0, 1]")));
            }
        }
        let sum = self.c1 + self.c2 + self.c3;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("c1 + c2 + c3 = {sum}, expected 1")));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha={} outside (0, 1)", self.alpha)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr={} must be positive", self.lr)));
        }
        if self.hidden == 0 {
            return Err(Error::Config("hidden width must be positive".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.clean_fraction) {
            return Err(Error::Config(format!(
                "clean_fraction={} outside [0, 1]",
                self.clean_fraction
            )));
        }
        self.loss_weights().map(|_| ())
    }

    /// Loss weights after the mode drops components; the survivors are
    /// rescaled to sum to one.
    pub fn loss_weights(&self) -> Result<LossWeights> {
        effective_weights(self.c1, self.c2, self.c3, self.mode)
    }
}

pub fn effective_weights(c1: f64, c2: f64, c3: f64, mode: Mode) -> Result<LossWeights> {
    let keep = [
        mode.uses_denoiser(),
        mode.uses_classifier(),
        mode.uses_self_training(),
    ];
    let raw = [c1, c2, c3];
    let mut w = [0.0; 3];
    let mut total = 0.0;
    for i in 0..3 {
        if keep[i] {
            w[i] = raw[i];
            total += raw[i];
        }
    }
    if total <= 0.0 {
        return Err(Error::Config(format!(
            "mode {mode} leaves all loss weights at zero"
        )));
    }
    Ok(LossWeights {
        c1: w[0] / total,
        c2: w[1] / total,
        c3: w[2] / total,
    })
}
