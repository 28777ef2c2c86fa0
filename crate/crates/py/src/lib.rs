//! Python bindings: rule parsing, weak labels, voting, training and
//! prediction. Documents are passed as dicts with `id`, `text` and optional
//! `label` and `split` keys, like the JSON-lines corpus format.

use std::collections::HashMap;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use weaksup::cotrain::Origin;
use weaksup::rules::partition_matched;
use weaksup::{
    build_weak_label_matrix, ClassCatalog, Document, EmbeddingMatrix, Mode, ScoreSet, Split,
    WeakLabelMatrix,
};

fn py_err(e: weaksup::Error) -> PyErr {
    match e {
        weaksup::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

type PyDoc = HashMap<String, Option<String>>;

fn to_documents(docs: Vec<PyDoc>, catalog: &ClassCatalog) -> PyResult<Vec<Document>> {
    docs.into_iter()
        .enumerate()
        .map(|(n, mut d)| {
            let mut field = |k: &str| d.remove(k).flatten();
            let id = field("id")
                .ok_or_else(|| PyValueError::new_err(format!("document {n} has no id")))?;
            let text = field("text").unwrap_or_default();
            let gold_label = field("label")
                .map(|l| catalog.resolve(&l))
                .transpose()
                .map_err(py_err)?;
            let split = match field("split") {
                Some(s) => s.parse::<Split>().map_err(py_err)?,
                None => Split::Train,
            };
            Ok(Document {
                id,
                text,
                gold_label,
                split,
            })
        })
        .collect()
}

fn to_matrix(rows: &[Vec<i32>], num_classes: usize) -> PyResult<WeakLabelMatrix> {
    let k = rows.first().map_or(0, Vec::len);
    WeakLabelMatrix::from_rows(rows, k, num_classes).map_err(py_err)
}

fn matrix_rows(m: &WeakLabelMatrix) -> Vec<Vec<i32>> {
    m.rows().map(<[i32]>::to_vec).collect()
}

/// A parsed rule program bound to its class names.
#[pyclass(name = "RuleSet", module = "pyweaksup")]
struct PyRuleSet {
    rules: weaksup::RuleSet,
    catalog: ClassCatalog,
}

#[pymethods]
impl PyRuleSet {
    #[getter]
    fn names(&self) -> Vec<String> {
        self.rules.names()
    }

    #[getter]
    fn classes(&self) -> Vec<String> {
        self.catalog.names().to_vec()
    }

    fn __len__(&self) -> usize {
        self.rules.len()
    }

    /// Weak-label rows (`-1` for abstain) for the given documents.
    fn weak_labels(&self, documents: Vec<PyDoc>) -> PyResult<Vec<Vec<i32>>> {
        let docs = to_documents(documents, &self.catalog)?;
        let m = build_weak_label_matrix(&self.rules, &docs, &ScoreSet::new()).map_err(py_err)?;
        Ok(matrix_rows(&m))
    }

    fn __repr__(&self) -> String {
        format!("RuleSet({} rules)", self.rules.len())
    }
}

#[pyfunction]
fn parse_rules(source: &str, classes: Vec<String>) -> PyResult<PyRuleSet> {
    let catalog = ClassCatalog::new(classes).map_err(py_err)?;
    let rules = weaksup::parse_rules(source, &catalog).map_err(py_err)?;
    Ok(PyRuleSet { rules, catalog })
}

/// `(matched, unmatched)` row indices; matched rows have more than `p` votes.
#[pyfunction]
#[pyo3(signature = (rows, p = 0))]
fn partition(rows: Vec<Vec<i32>>, p: usize) -> PyResult<(Vec<usize>, Vec<usize>)> {
    let max_class = rows.iter().flatten().copied().max().unwrap_or(0).max(1);
    let m = to_matrix(&rows, max_class as usize + 1)?;
    let part = partition_matched(&m, p).map_err(py_err)?;
    Ok((part.matched, part.unmatched))
}

#[pyfunction]
fn majority_vote(row: Vec<i32>, num_classes: usize) -> PyResult<usize> {
    weaksup::denoiser::majority_vote(&row, num_classes).map_err(py_err)
}

#[pyfunction]
fn weighted_vote(row: Vec<i32>, reliability: Vec<f64>, num_classes: usize) -> PyResult<usize> {
    weaksup::denoiser::weighted_vote(&row, &reliability, num_classes).map_err(py_err)
}

#[pyfunction]
fn softmax(logits: Vec<f64>) -> Vec<f64> {
    weaksup::nn::softmax(&logits)
}

#[pyclass(name = "TrainConfig", module = "pyweaksup", get_all, set_all, from_py_object)]
#[derive(Clone)]
struct PyTrainConfig {
    c1: f64,
    c2: f64,
    c3: f64,
    alpha: f64,
    lr: f64,
    hidden: usize,
    max_epochs: usize,
    patience: usize,
    threshold_p: usize,
    seed: u64,
    mode: String,
    clean_fraction: f64,
}

impl PyTrainConfig {
    fn to_core(&self) -> PyResult<weaksup::TrainConfig> {
        let c = weaksup::TrainConfig {
            c1: self.c1,
            c2: self.c2,
            c3: self.c3,
            alpha: self.alpha,
            lr: self.lr,
            hidden: self.hidden,
            max_epochs: self.max_epochs,
            patience: self.patience,
            threshold_p: self.threshold_p,
            seed: self.seed,
            mode: self.mode.parse::<Mode>().map_err(py_err)?,
            clean_fraction: self.clean_fraction,
        };
        c.validate().map_err(py_err)?;
        Ok(c)
    }

    fn from_core(c: &weaksup::TrainConfig) -> Self {
        PyTrainConfig {
            c1: c.c1,
            c2: c.c2,
            c3: c.c3,
            alpha: c.alpha,
            lr: c.lr,
            hidden: c.hidden,
            max_epochs: c.max_epochs,
            patience: c.patience,
            threshold_p: c.threshold_p,
            seed: c.seed,
            mode: c.mode.as_str().to_string(),
            clean_fraction: c.clean_fraction,
        }
    }
}

#[pymethods]
impl PyTrainConfig {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, pyo3::types::PyDict>>) -> PyResult<Self> {
        let mut c = Self::from_core(&weaksup::TrainConfig::default());
        if let Some(kw) = kwargs {
            let py_self = Bound::new(kw.py(), c.clone())?;
            for (k, v) in kw.iter() {
                let key: String = k.extract()?;
                if !py_self.hasattr(key.as_str())? {
                    return Err(PyValueError::new_err(format!("unknown option `{key}`")));
                }
                py_self.setattr(key.as_str(), v)?;
            }
            c = py_self.borrow().clone();
        }
        c.to_core()?;
        Ok(c)
    }

    fn __repr__(&self) -> String {
        format!(
            "TrainConfig(mode={:?}, c=({}, {}, {}), alpha={}, lr={}, hidden={}, max_epochs={}, seed={})",
            self.mode, self.c1, self.c2, self.c3, self.alpha, self.lr, self.hidden, self.max_epochs, self.seed
        )
    }
}

/// A trained denoiser and classifier pair.
#[pyclass(name = "Model", module = "pyweaksup")]
struct PyModel {
    inner: weaksup::TrainedModel,
}

#[pymethods]
impl PyModel {
    /// `(class_name, confidence, origin)` with origin `denoiser` or `classifier`.
    fn predict(&self, embedding: Vec<f64>, row: Vec<i32>) -> PyResult<(String, f64, String)> {
        let p = self.inner.predict(&embedding, &row).map_err(py_err)?;
        let origin = match p.origin {
            Origin::Denoiser => "denoiser",
            Origin::Classifier => "classifier",
        };
        Ok((self.inner.class_names[p.class].clone(), p.confidence, origin.into()))
    }

    /// Rule name to global reliability.
    #[getter]
    fn reliability(&self) -> HashMap<String, f64> {
        self.inner
            .rule_names
            .iter()
            .cloned()
            .zip(self.inner.reliability.iter().copied())
            .collect()
    }

    /// `(rule, reliability)` pairs, highest first.
    fn ranking(&self) -> Vec<(String, f64)> {
        self.inner.reliability_ranking()
    }

    #[getter]
    fn best_epoch(&self) -> usize {
        self.inner.best_epoch
    }

    #[getter]
    fn epochs_run(&self) -> usize {
        self.inner.log.len()
    }

    #[getter]
    fn config(&self) -> PyTrainConfig {
        PyTrainConfig::from_core(&self.inner.config)
    }

    #[getter]
    fn classes(&self) -> Vec<String> {
        self.inner.class_names.clone()
    }

    /// Pseudo labels on the matched training rows as `{row_index: class}`.
    #[getter]
    fn pseudo_labels(&self) -> HashMap<usize, usize> {
        let pl = &self.inner.pseudo_labels;
        pl.indices.iter().copied().zip(pl.labels.iter().copied()).collect()
    }

    fn save(&self, path: &str) -> PyResult<()> {
        weaksup::save_checkpoint(path, &self.inner).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let inner = weaksup::load_checkpoint(path).map_err(py_err)?;
        Ok(PyModel { inner })
    }

    fn train_log(&self) -> String {
        self.inner.train_log_tsv()
    }
}

#[pyfunction]
#[pyo3(signature = (documents, embeddings, rules, config = None))]
fn train(
    py: Python<'_>,
    documents: Vec<PyDoc>,
    embeddings: Vec<Vec<f64>>,
    rules: &PyRuleSet,
    config: Option<PyTrainConfig>,
) -> PyResult<PyModel> {
    let config = match config {
        Some(c) => c.to_core()?,
        None => weaksup::TrainConfig::default(),
    };
    let docs = to_documents(documents, &rules.catalog)?;
    let emb = EmbeddingMatrix::from_rows(&embeddings, &docs).map_err(py_err)?;
    let matrix = build_weak_label_matrix(&rules.rules, &docs, &ScoreSet::new()).map_err(py_err)?;
    let names = rules.rules.names();
    let catalog = &rules.catalog;
    let inner = py
        .detach(|| {
            weaksup::train(
                weaksup::TrainingData {
                    documents: &docs,
                    embeddings: &emb,
                    weak_labels: &matrix,
                    catalog,
                    rule_names: &names,
                },
                &config,
            )
        })
        .map_err(py_err)?;
    Ok(PyModel { inner })
}

#[pymodule]
fn pyweaksup(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRuleSet>()?;
    m.add_class::<PyTrainConfig>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(parse_rules, m)?)?;
    m.add_function(wrap_pyfunction!(partition, m)?)?;
    m.add_function(wrap_pyfunction!(majority_vote, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_vote, m)?)?;
    m.add_function(wrap_pyfunction!(softmax, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    Ok(())
}
