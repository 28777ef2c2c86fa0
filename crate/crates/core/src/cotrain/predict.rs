//! Inference and evaluation.

use serde::{Deserialize, Serialize};

use super::config::Mode;
use super::train::TrainedModel;
use crate::classifier::{classify, confidence, NeuralClassifier};
use crate::corpus::{Document, EmbeddingMatrix, Split};
use crate::denoiser::{majority_vote, AttentionNet, DenoiserSample};
use crate::error::{Error, Result};
use crate::rules::WeakLabelMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Denoiser,
    Classifier,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub confidence: f64,
    pub origin: Origin,
}

/// Combines the two heads: agreement keeps the larger confidence, conflict
/// goes to the more confident head. Exact ties favour the classifier.
pub fn combine(denoiser: (usize, f64), classifier: (usize, f64)) -> Prediction {
    let (dc, dp) = denoiser;
    let (cc, cp) = classifier;
    if dp > cp {
        Prediction {
            class: dc,
            confidence: dp,
            origin: Origin::Denoiser,
        }
    } else {
        Prediction {
            class: cc,
            confidence: cp,
            origin: Origin::Classifier,
        }
    }
}

pub(crate) fn predict_with(
    attention: &AttentionNet,
    classifier: &NeuralClassifier,
    mode: Mode,
    embedding: &[f64],
    row: &[i32],
) -> Result<Prediction> {
    let m = classifier.num_classes();
    let has_votes = row.iter().any(|&v| v >= 0);
    let denoiser = || -> Result<(usize, f64)> {
        let s = DenoiserSample::forward(attention, embedding, row, m)?;
        Ok(confidence(&s.prediction))
    };
    let neural = || -> Result<(usize, f64)> { Ok(confidence(&classify(classifier, embedding)?)) };
    match mode {
        Mode::RuleOnly => {
            let (class, conf) = denoiser()?;
            Ok(Prediction {
                class,
                confidence: conf,
                origin: Origin::Denoiser,
            })
        }
        Mode::NeuralOnly | Mode::NeuralSelf => {
            let (class, conf) = neural()?;
            Ok(Prediction {
                class,
                confidence: conf,
                origin: Origin::Classifier,
            })
        }
        Mode::Full | Mode::RuleNeural => {
            let c = neural()?;
            if !has_votes {
                return Ok(Prediction {
                    class: c.0,
                    confidence: c.1,
                    origin: Origin::Classifier,
                });
            }
            Ok(combine(denoiser()?, c))
        }
    }
}

pub fn predict(model: &TrainedModel, embedding: &[f64], row: &[i32]) -> Result<Prediction> {
    model.predict(embedding, row)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleCountBucket {
    pub votes: usize,
    pub total: usize,
    pub correct: usize,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub split: String,
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Majority-vote label disagreement with gold on matched training samples.
    pub majority_noise: Option<f64>,
    /// Same for the model's denoised pseudo labels.
    pub denoised_noise: Option<f64>,
    pub noise_samples: usize,
    /// Accuracy grouped by the number of rules that voted on a document.
    pub by_rule_count: Vec<RuleCountBucket>,
}

impl Metrics {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Invalid(format!("bad metrics report: {e}")))
    }
}

/// Accuracy of `model` on `split`, plus label-noise and rule-count breakdowns.
///
/// Every document of the split must carry a gold label.
pub fn evaluate(
    model: &TrainedModel,
    documents: &[Document],
    embeddings: &EmbeddingMatrix,
    weak_labels: &WeakLabelMatrix,
    split: Split,
) -> Result<Metrics> {
    if embeddings.n() != documents.len() || weak_labels.n() != documents.len() {
        return Err(Error::Dimension(
            "documents, embeddings and weak labels disagree in length".into(),
        ));
    }
    if embeddings.d() != model.embedding_dim() {
        return Err(Error::Dimension(format!(
            "embeddings have dimension {}, model expects {}",
            embeddings.d(),
            model.embedding_dim()
        )));
    }
    if weak_labels.k() != model.num_sources() {
        return Err(Error::Dimension(format!(
            "weak labels have {} sources, model expects {}",
            weak_labels.k(),
            model.num_sources()
        )));
    }
    let idx: Vec<usize> = (0..documents.len())
        .filter(|&i| documents[i].split == split)
        .collect();
    if idx.is_empty() {
        return Err(Error::MissingGold(format!("split `{split}` is empty")));
    }
    if let Some(&i) = idx.iter().find(|&&i| documents[i].gold_label.is_none()) {
        return Err(Error::MissingGold(format!(
            "document `{}` in split `{split}` has no gold label",
            documents[i].id
        )));
    }

    let k = weak_labels.k();
    let mut buckets: Vec<RuleCountBucket> = (0..=k)
        .map(|votes| RuleCountBucket {
            votes,
            total: 0,
            correct: 0,
            accuracy: None,
        })
        .collect();
    let mut correct = 0;
    for &i in &idx {
        let p = model.predict(&embeddings.row_f64(i), weak_labels.row(i))?;
        let ok = Some(p.class) == documents[i].gold_label;
        let b = &mut buckets[weak_labels.vote_count(i)];
        b.total += 1;
        if ok {
            b.correct += 1;
            correct += 1;
        }
    }
    for b in &mut buckets {
        b.accuracy = (b.total > 0).then(|| b.correct as f64 / b.total as f64);
    }

    let m = model.num_classes();
    let mut judged = 0;
    let mut majority_wrong = 0;
    let mut denoised_wrong = 0;
    for (&i, &y) in model
        .pseudo_labels
        .indices
        .iter()
        .zip(&model.pseudo_labels.labels)
    {
        let Some(gold) = documents.get(i).and_then(|d| d.gold_label) else {
            continue;
        };
        judged += 1;
        if majority_vote(weak_labels.row(i), m)? != gold {
            majority_wrong += 1;
        }
        if y != gold {
            denoised_wrong += 1;
        }
    }
    let ratio = |w: usize| (judged > 0).then(|| w as f64 / judged as f64);

    Ok(Metrics {
        split: split.to_string(),
        total: idx.len(),
        correct,
        accuracy: correct as f64 / idx.len() as f64,
        majority_noise: ratio(majority_wrong),
        denoised_noise: ratio(denoised_wrong),
        noise_samples: judged,
        by_rule_count: buckets,
    })
}
