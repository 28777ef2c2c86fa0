//! The co-training loop.
//!
//! Each epoch:
//! 1. run the denoiser on the matched set, supervised by the previous pseudo labels;
//! 2. average the conditional scores into global reliability and renew the
//!    pseudo labels by weighted voting;
//! 3. run the classifier on matched (renewed labels) and unmatched samples
//!    (temporal-ensemble targets);
//! 4. take one full-batch Adam step on the weighted sum of the three losses.
//!
//! The returned networks are the snapshot with the best dev accuracy; the
//! reliability scores and pseudo labels are those of the last epoch run.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{LossWeights, TrainConfig};
use super::losses::{weighted_total, EnsembleState};
use super::predict::{predict_with, Prediction};
use crate::classifier::{ClassifierSample, NeuralClassifier};
use crate::corpus::{ClassCatalog, Document, EmbeddingMatrix, Split};
use crate::denoiser::{
    global_reliability, majority_vote, weighted_vote, AttentionNet, DenoiserSample, Provenance,
    PseudoLabels,
};
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, MlpGrads};
use crate::rules::{partition_matched, MatchPartition, WeakLabelMatrix};

/// Everything training needs, aligned by corpus index.
#[derive(Debug, Clone, Copy)]
pub struct TrainingData<'a> {
    pub documents: &'a [Document],
    pub embeddings: &'a EmbeddingMatrix,
    pub weak_labels: &'a WeakLabelMatrix,
    pub catalog: &'a ClassCatalog,
    pub rule_names: &'a [String],
}

impl TrainingData<'_> {
    pub fn validate(&self) -> Result<()> {
        let n = self.documents.len();
        if self.embeddings.n() != n {
            return Err(Error::EmbeddingCount {
                expected: n,
                found: self.embeddings.n(),
            });
        }
        if self.weak_labels.n() != n {
            return Err(Error::Dimension(format!(
                "weak-label matrix has {} rows for {n} documents",
                self.weak_labels.n()
            )));
        }
        if self.weak_labels.k() != self.rule_names.len() {
            return Err(Error::Dimension(format!(
                "{} rule names for {} sources",
                self.rule_names.len(),
                self.weak_labels.k()
            )));
        }
        if self.weak_labels.num_classes() != self.catalog.len() {
            return Err(Error::Dimension(format!(
                "weak labels use {} classes, catalog has {}",
                self.weak_labels.num_classes(),
                self.catalog.len()
            )));
        }
        Ok(())
    }
}

/// Seeds for each random stream, all derived from the config seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedPlan {
    pub attention: u64,
    pub classifier: u64,
    pub clean_labels: u64,
}

impl SeedPlan {
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SeedPlan {
            attention: rng.random(),
            classifier: rng.random(),
            clean_labels: rng.random(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub total: f64,
    pub dev_accuracy: Option<f64>,
    /// Disagreement of the pseudo labels with gold on matched training samples.
    pub pseudo_noise: Option<f64>,
    /// Same, for the initial majority-vote labels.
    pub majority_noise: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub config: TrainConfig,
    pub attention: AttentionNet,
    pub classifier: NeuralClassifier,
    /// Global reliability from the last epoch run.
    pub reliability: Vec<f64>,
    /// Pseudo labels on the matched training set after the last epoch.
    pub pseudo_labels: PseudoLabels,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub class_names: Vec<String>,
    pub rule_names: Vec<String>,
}

impl TrainedModel {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn num_sources(&self) -> usize {
        self.rule_names.len()
    }

    pub fn embedding_dim(&self) -> usize {
        self.classifier.embedding_dim()
    }

    pub fn predict(&self, embedding: &[f64], row: &[i32]) -> Result<Prediction> {
        if row.len() != self.num_sources() {
            return Err(Error::Dimension(format!(
                "{} votes for a model with {} sources",
                row.len(),
                self.num_sources()
            )));
        }
        predict_with(
            &self.attention,
            &self.classifier,
            self.config.mode,
            embedding,
            row,
        )
    }

    /// Rule names with global reliability, highest first (stable on ties).
    pub fn reliability_ranking(&self) -> Vec<(String, f64)> {
        let mut rows: Vec<(String, f64)> = self
            .rule_names
            .iter()
            .cloned()
            .zip(self.reliability.iter().copied())
            .collect();
        rows.sort_by(|a, b| b.1.total_cmp(&a.1));
        rows
    }

    /// `rule_name<TAB>a_j` lines sorted by descending reliability.
    pub fn reliability_report(&self) -> String {
        self.reliability_ranking()
            .into_iter()
            .map(|(name, a)| format!("{name}\t{a:.6}\n"))
            .collect()
    }

    /// `epoch<TAB>l1<TAB>l2<TAB>l3<TAB>total<TAB>dev_acc` lines.
    pub fn train_log_tsv(&self) -> String {
        train_log_tsv(&self.log)
    }
}

pub fn train_log_tsv(log: &[EpochLog]) -> String {
    let mut out = String::new();
    for e in log {
        let dev = e
            .dev_accuracy
            .map_or_else(|| "nan".to_string(), |a| format!("{a:.6}"));
        out.push_str(&format!(
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{dev}\n",
            e.epoch, e.l1, e.l2, e.l3, e.total
        ));
    }
    out
}

fn noise(labels: &[usize], indices: &[usize], documents: &[Document]) -> Option<f64> {
    let mut judged = 0usize;
    let mut wrong = 0usize;
    for (&i, &y) in indices.iter().zip(labels) {
        if let Some(g) = documents[i].gold_label {
            judged += 1;
            if g != y {
                wrong += 1;
            }
        }
    }
    (judged > 0).then(|| wrong as f64 / judged as f64)
}

/// Matched/unmatched partition restricted to the training split.
pub fn training_partition(
    documents: &[Document],
    weak_labels: &WeakLabelMatrix,
    threshold_p: usize,
) -> Result<MatchPartition> {
    let part = partition_matched(weak_labels, threshold_p)?;
    Ok(part.filter(|i| documents[i].split == Split::Train))
}

/// Indices of matched samples whose pseudo labels are pinned to gold.
fn pick_clean(
    matched: &[usize],
    documents: &[Document],
    fraction: f64,
    seed: u64,
) -> Vec<Option<usize>> {
    let mut with_gold: Vec<usize> = (0..matched.len())
        .filter(|&p| documents[matched[p]].gold_label.is_some())
        .collect();
    let count = (fraction * with_gold.len() as f64 + 1e-9).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    with_gold.shuffle(&mut rng);
    let mut pinned = vec![None; matched.len()];
    for &p in with_gold.iter().take(count) {
        pinned[p] = documents[matched[p]].gold_label;
    }
    pinned
}

struct Snapshot {
    attention: AttentionNet,
    classifier: NeuralClassifier,
    epoch: usize,
}

pub fn train(data: TrainingData<'_>, config: &TrainConfig) -> Result<TrainedModel> {
    train_with_init(data, config, None)
}

/// Like [`train`], optionally starting from given networks instead of the
/// seeded initialisation.
pub fn train_with_init(
    data: TrainingData<'_>,
    config: &TrainConfig,
    init: Option<(AttentionNet, NeuralClassifier)>,
) -> Result<TrainedModel> {
    config.validate()?;
    data.validate()?;
    let weights: LossWeights = config.loss_weights()?;
    let mode = config.mode;
    let m = data.catalog.len();
    let d = data.embeddings.d();
    let docs = data.documents;
    let matrix = data.weak_labels;
    let embeddings: Vec<Vec<f64>> = (0..docs.len()).map(|i| data.embeddings.row_f64(i)).collect();

    let partition = training_partition(docs, matrix, config.threshold_p)?;
    if partition.matched.is_empty() {
        return Err(Error::EmptyMatched);
    }
    let matched = &partition.matched;
    // Self-training only ever looks at the unmatched set in modes that use it.
    let unmatched: &[usize] = if mode.uses_self_training() {
        &partition.unmatched
    } else {
        &[]
    };
    let dev: Vec<usize> = (0..docs.len())
        .filter(|&i| docs[i].split == Split::Dev && docs[i].gold_label.is_some())
        .collect();

    let seeds = SeedPlan::from_seed(config.seed);
    let pinned = pick_clean(matched, docs, config.clean_fraction, seeds.clean_labels);
    let majority: Vec<usize> = matched
        .iter()
        .map(|&i| majority_vote(matrix.row(i), m))
        .collect::<Result<_>>()?;
    let majority_noise = noise(&majority, matched, docs);
    let pin = |labels: Vec<usize>| -> Vec<usize> {
        labels
            .into_iter()
            .zip(&pinned)
            .map(|(y, p)| p.unwrap_or(y))
            .collect()
    };
    let mut labels = pin(majority.clone());
    let mut provenance = Provenance::MajorityInit;

    let (mut attention, mut classifier) = match init {
        Some(pair) => pair,
        None => (
            AttentionNet::init(d, config.hidden, seeds.attention)?,
            NeuralClassifier::init(d, config.hidden, m, seeds.classifier)?,
        ),
    };
    if attention.embedding_dim() != d || classifier.embedding_dim() != d {
        return Err(Error::Dimension("initial networks do not match embedding dim".into()));
    }
    let adam = AdamConfig::with_lr(config.lr);
    let mut att_opt = AdamState::new(&attention.mlp, adam);
    let mut cls_opt = AdamState::new(&classifier.mlp, adam);
    let mut ensemble = EnsembleState::new(unmatched.len(), m);

    let mut log = Vec::new();
    let mut reliability = Vec::new();
    let mut best: Option<(f64, Snapshot)> = None;
    let mut since_best = 0usize;

    for epoch in 1..=config.max_epochs {
        // Denoiser forward on the matched set.
        let samples: Vec<DenoiserSample> = matched
            .iter()
            .map(|&i| DenoiserSample::forward(&attention, &embeddings[i], matrix.row(i), m))
            .collect::<Result<_>>()?;
        let conditional: Vec<Vec<f64>> = samples.iter().map(|s| s.conditional.clone()).collect();
        reliability = global_reliability(&conditional)?;

        let mut att_grads: MlpGrads = attention.mlp.zeros_like();
        let mut l1 = 0.0;
        let renewed = if mode.uses_denoiser() {
            for (s, &y) in samples.iter().zip(&labels) {
                l1 += s.backward_nll(&attention, y, weights.c1, &mut att_grads)?;
            }
            let votes: Vec<usize> = matched
                .iter()
                .map(|&i| weighted_vote(matrix.row(i), &reliability, m))
                .collect::<Result<_>>()?;
            provenance = Provenance::Weighted;
            pin(votes)
        } else {
            labels.clone()
        };

        let mut cls_grads: MlpGrads = classifier.mlp.zeros_like();
        let mut l2 = 0.0;
        let mut l3 = 0.0;
        if mode.uses_classifier() {
            for (&i, &y) in matched.iter().zip(&renewed) {
                let s = ClassifierSample::forward(&classifier, &embeddings[i])?;
                l2 += s.backward_nll(&classifier, y, weights.c2, &mut cls_grads)?;
            }
            if mode.uses_self_training() && !unmatched.is_empty() {
                let samples: Vec<ClassifierSample> = unmatched
                    .iter()
                    .map(|&i| ClassifierSample::forward(&classifier, &embeddings[i]))
                    .collect::<Result<_>>()?;
                let preds: Vec<Vec<f64>> =
                    samples.iter().map(|s| s.probabilities.clone()).collect();
                let targets = ensemble.update(&preds, config.alpha)?;
                for (s, p) in samples.iter().zip(&targets) {
                    l3 += s.backward_squared(&classifier, p, weights.c3, &mut cls_grads);
                }
            }
        }

        let total = weighted_total(l1, l2, l3, weights);
        if !total.is_finite() {
            return Err(Error::NonFiniteLoss(epoch));
        }
        if mode.uses_denoiser() {
            att_opt.step(&mut attention.mlp, &att_grads)?;
        }
        if mode.uses_classifier() {
            cls_opt.step(&mut classifier.mlp, &cls_grads)?;
        }
        labels = renewed;

        let dev_accuracy = if dev.is_empty() {
            None
        } else {
            let mut correct = 0usize;
            for &i in &dev {
                let p = predict_with(&attention, &classifier, mode, &embeddings[i], matrix.row(i))?;
                if Some(p.class) == docs[i].gold_label {
                    correct += 1;
                }
            }
            Some(correct as f64 / dev.len() as f64)
        };
        log.push(EpochLog {
            epoch,
            l1,
            l2,
            l3,
            total,
            dev_accuracy,
            pseudo_noise: noise(&labels, matched, docs),
            majority_noise,
        });

        let score = dev_accuracy.unwrap_or(f64::NEG_INFINITY);
        let improved = match &best {
            None => true,
            // Without a dev set every epoch "improves", so the last one is kept.
            Some((b, _)) => dev_accuracy.is_none() || score > *b,
        };
        if improved {
            best = Some((
                score,
                Snapshot {
                    attention: attention.clone(),
                    classifier: classifier.clone(),
                    epoch,
                },
            ));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }

    let (_, snap) = best.expect("at least one epoch ran");
    Ok(TrainedModel {
        config: config.clone(),
        attention: snap.attention,
        classifier: snap.classifier,
        reliability,
        pseudo_labels: PseudoLabels {
            indices: matched.clone(),
            labels,
            provenance,
        },
        log,
        best_epoch: snap.epoch,
        class_names: data.catalog.names().to_vec(),
        rule_names: data.rule_names.to_vec(),
    })
}
