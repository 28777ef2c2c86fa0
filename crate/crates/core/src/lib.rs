//! Weak supervision for text classification.
//!
//! Labeling rules vote on documents, an attention-based denoiser estimates how
//! far each rule can be trusted per document, and a neural classifier is
//! co-trained with it on the matched documents and self-trained on the rest.

pub mod checkpoint;
pub mod classifier;
pub mod corpus;
pub mod cotrain;
pub mod denoiser;
pub mod error;
pub mod gradcheck;
pub mod nn;
pub mod rules;
pub mod synthetic;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use corpus::{ClassCatalog, Document, EmbeddingMatrix, ExternalScoreTable, ScoreSet, Split};
pub use cotrain::{train, Mode, Prediction, TrainConfig, TrainedModel, TrainingData};
pub use error::{Error, Result};
pub use rules::{build_weak_label_matrix, parse_rules, RuleSet, WeakLabelMatrix};
