//! Synthetic corpora with known ground truth: two Gaussian classes and
//! labeling sources of chosen accuracy and coverage.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::{split_corpus, ClassCatalog, Document, EmbeddingMatrix, Split, SplitRatios};
use crate::cotrain::TrainingData;
use crate::error::{Error, Result};
use crate::rules::{WeakLabelMatrix, ABSTAIN};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceSpec {
    /// Probability a vote equals the gold class.
    pub accuracy: f64,
    /// Probability the source votes at all.
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n: usize,
    pub d: usize,
    pub sources: Vec<SourceSpec>,
    /// Distance between the two class means.
    pub separation: f64,
    pub noise_std: f64,
    pub ratios: SplitRatios,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        let src = |accuracy| SourceSpec {
            accuracy,
            coverage: 0.5,
        };
        SyntheticConfig {
            n: 500,
            d: 16,
            sources: vec![src(0.9), src(0.9), src(0.6), src(0.6)],
            separation: 4.0,
            noise_std: 1.0,
            ratios: SplitRatios::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub catalog: ClassCatalog,
    pub documents: Vec<Document>,
    pub embeddings: EmbeddingMatrix,
    pub weak_labels: WeakLabelMatrix,
    pub rule_names: Vec<String>,
}

impl SyntheticCorpus {
    pub fn training_data(&self) -> TrainingData<'_> {
        TrainingData {
            documents: &self.documents,
            embeddings: &self.embeddings,
            weak_labels: &self.weak_labels,
            catalog: &self.catalog,
            rule_names: &self.rule_names,
        }
    }
}

pub fn generate(config: &SyntheticConfig) -> Result<SyntheticCorpus> {
    if config.d == 0 || config.sources.is_empty() {
        return Err(Error::Invalid("synthetic corpus needs d > 0 and a source".into()));
    }
    for s in &config.sources {
        if !(0.0..=1.0).contains(&s.accuracy) || !(0.0..=1.0).contains(&s.coverage) {
            return Err(Error::Invalid(format!("bad source spec {s:?}")));
        }
    }
    let noise = Normal::new(0.0, config.noise_std)
        .map_err(|e| Error::Invalid(format!("bad noise_std: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let catalog = ClassCatalog::new(["NEG", "POS"])?;

    // Class means at +-separation/2 along a random unit direction.
    let mut dir: Vec<f64> = (0..config.d).map(|_| noise.sample(&mut rng)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    dir.iter_mut().for_each(|v| *v /= norm);

    let k = config.sources.len();
    let mut documents = Vec::with_capacity(config.n);
    let mut rows = Vec::with_capacity(config.n);
    let mut votes = Vec::with_capacity(config.n * k);
    for i in 0..config.n {
        let gold = rng.random_range(0..2usize);
        let sign = if gold == 1 { 0.5 } else { -0.5 };
        rows.push(
            dir.iter()
                .map(|u| sign * config.separation * u + noise.sample(&mut rng))
                .collect::<Vec<f64>>(),
        );
        for s in &config.sources {
            let v = if rng.random_bool(s.coverage) {
                if rng.random_bool(s.accuracy) {
                    gold as i32
                } else {
                    1 - gold as i32
                }
            } else {
                ABSTAIN
            };
            votes.push(v);
        }
        documents.push(Document {
            id: format!("syn-{i}"),
            text: String::new(),
            gold_label: Some(gold),
            split: Split::Train,
        });
    }
    let documents = split_corpus(documents, config.ratios, rng.random())?;
    let embeddings = EmbeddingMatrix::from_rows(&rows, &documents)?;
    let weak_labels = WeakLabelMatrix::new(config.n, k, 2, votes)?;
    let rule_names = (0..k)
        .map(|j| format!("src{j}_acc{:.0}", config.sources[j].accuracy * 100.0))
        .collect();
    Ok(SyntheticCorpus {
        catalog,
        documents,
        embeddings,
        weak_labels,
        rule_names,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empirical_source_accuracy_matches_spec() {
        let c = generate(&SyntheticConfig {
            n: 4000,
            ..Default::default()
        })
        .unwrap();
        for (j, spec) in [0.9, 0.9, 0.6, 0.6].iter().enumerate() {
            let mut hits = 0;
            let mut correct = 0;
            for (i, d) in c.documents.iter().enumerate() {
                let v = c.weak_labels.get(i, j);
                if v >= 0 {
                    hits += 1;
                    if Some(v as usize) == d.gold_label {
                        correct += 1;
                    }
                }
            }
            let cov = hits as f64 / 4000.0;
            let acc = correct as f64 / hits as f64;
            assert!((cov - 0.5).abs() < 0.04, "coverage {cov}");
            assert!((acc - spec).abs() < 0.04, "accuracy {acc}");
        }
    }

    #[test]
    fn deterministic_and_split() {
        let a = generate(&SyntheticConfig::default()).unwrap();
        let b = generate(&SyntheticConfig::default()).unwrap();
        assert_eq!(a.embeddings, b.embeddings);
        assert_eq!(a.weak_labels, b.weak_labels);
        let dev = a.documents.iter().filter(|d| d.split == Split::Dev).count();
        let test = a.documents.iter().filter(|d| d.split == Split::Test).count();
        assert_eq!((dev, test), (50, 50));
        a.training_data().validate().unwrap();
    }
}
