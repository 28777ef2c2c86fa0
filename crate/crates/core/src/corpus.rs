//! Documents, class catalogs, precomputed embeddings and external score tables.
//!
//! Corpus index `i` is the join key everywhere: row `i` of the embedding
//! matrix and row `i` of the weak-label matrix both describe `documents[i]`.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::nn::DenseMatrix;

pub const EMBEDDING_MAGIC: &[u8; 4] = b"WSE1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::Invalid(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub gold_label: Option<usize>,
    pub split: Split,
}

/// Ordered list of target class names. Class `i` is `names[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassCatalog {
    names: Vec<String>,
}

impl ClassCatalog {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(Error::Catalog(format!(
                "need at least 2 classes, got {}",
                names.len()
            )));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if n.is_empty() {
                return Err(Error::Catalog("empty class name".into()));
            }
            if !seen.insert(n.as_str()) {
                return Err(Error::Catalog(format!("duplicate class `{n}`")));
            }
        }
        Ok(ClassCatalog { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn resolve(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::UnknownClass(name.to_string()))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DocumentRecord {
    id: String,
    text: String,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    split: Option<String>,
}

/// Result of reading a documents file.
#[derive(Debug, Clone)]
pub struct LoadedDocuments {
    pub documents: Vec<Document>,
    /// Number of records that carried an explicit `split` key. Records
    /// without one default to `train`.
    pub explicit_splits: usize,
}

pub fn load_documents(path: impl AsRef<Path>, catalog: &ClassCatalog) -> Result<Vec<Document>> {
    load_documents_detailed(path, catalog).map(|l| l.documents)
}

pub fn load_documents_detailed(
    path: impl AsRef<Path>,
    catalog: &ClassCatalog,
) -> Result<LoadedDocuments> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_documents(BufReader::new(file), catalog).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Parses the JSON-lines documents format from any reader. Blank lines are skipped.
pub fn parse_documents(reader: impl BufRead, catalog: &ClassCatalog) -> Result<LoadedDocuments> {
    let mut documents = Vec::new();
    let mut ids = HashSet::new();
    let mut explicit_splits = 0;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<documents>", e))?;
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DocumentRecord = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: lineno,
            message: e.to_string(),
        })?;
        let gold_label = match rec.label.as_deref() {
            Some(name) => Some(catalog.resolve(name)?),
            None => None,
        };
        let split = match rec.split.as_deref() {
            Some(s) => {
                explicit_splits += 1;
                s.parse().map_err(|_| Error::Malformed {
                    line: lineno,
                    message: format!("unknown split `{s}`"),
                })?
            }
            None => Split::Train,
        };
        if !ids.insert(rec.id.clone()) {
            return Err(Error::DuplicateId(rec.id));
        }
        documents.push(Document {
            id: rec.id,
            text: rec.text,
            gold_label,
            split,
        });
    }
    Ok(LoadedDocuments {
        documents,
        explicit_splits,
    })
}

/// Writes documents back out in the JSON-lines format.
pub fn save_documents(
    path: impl AsRef<Path>,
    documents: &[Document],
    catalog: &ClassCatalog,
) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for d in documents {
        let mut obj = serde_json::Map::new();
        obj.insert("id".into(), d.id.clone().into());
        obj.insert("text".into(), d.text.clone().into());
        if let Some(g) = d.gold_label {
            let name = catalog
                .name(g)
                .ok_or_else(|| Error::UnknownClass(g.to_string()))?;
            obj.insert("label".into(), name.into());
        }
        obj.insert("split".into(), d.split.as_str().into());
        out.push_str(&serde_json::Value::Object(obj).to_string());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// 64-bit FNV-1a over the concatenated ids, used to detect misaligned embedding files.
pub fn id_hash<'a>(ids: impl IntoIterator<Item = &'a str>) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for id in ids {
        for &b in id.as_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(PRIME);
        }
    }
    h
}

pub fn corpus_id_hash(documents: &[Document]) -> u64 {
    id_hash(documents.iter().map(|d| d.id.as_str()))
}

/// Row-major `n x d` matrix of document features, stored as the file stores it (f32).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n: usize,
    d: usize,
    values: Vec<f32>,
    id_hash: u64,
}

impl EmbeddingMatrix {
    pub fn new(n: usize, d: usize, values: Vec<f32>, id_hash: u64) -> Result<Self> {
        if d == 0 {
            return Err(Error::Embedding("dimension must be positive".into()));
        }
        if values.len() != n * d {
            return Err(Error::Embedding(format!(
                "expected {} values for {n}x{d}, got {}",
                n * d,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Embedding(format!(
                "non-finite value at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        Ok(EmbeddingMatrix {
            n,
            d,
            values,
            id_hash,
        })
    }

    /// Builds a matrix aligned with `documents` from f64 rows (narrowed to f32).
    pub fn from_rows(rows: &[Vec<f64>], documents: &[Document]) -> Result<Self> {
        if rows.len() != documents.len() {
            return Err(Error::EmbeddingCount {
                expected: documents.len(),
                found: rows.len(),
            });
        }
        let d = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * d);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::Embedding(format!(
                    "row {i} has {} values, expected {d}",
                    r.len()
                )));
            }
            values.extend(r.iter().map(|&v| v as f32));
        }
        Self::new(rows.len(), d, values, corpus_id_hash(documents))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn id_hash(&self) -> u64 {
        self.id_hash
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    /// Row `i` widened to f64.
    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&v| f64::from(v)).collect()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        DenseMatrix::from_vec(
            self.n,
            self.d,
            self.values.iter().map(|&v| f64::from(v)).collect(),
        )
        .expect("shape checked at construction")
    }

    /// Errors when the stored id hash does not match `documents`.
    pub fn check_alignment(&self, documents: &[Document]) -> Result<()> {
        if self.n != documents.len() {
            return Err(Error::EmbeddingCount {
                expected: documents.len(),
                found: self.n,
            });
        }
        let expected = corpus_id_hash(documents);
        if expected != self.id_hash {
            return Err(Error::Embedding(format!(
                "document id hash mismatch (file {:016x}, corpus {expected:016x})",
                self.id_hash
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(12 + 4 * self.values.len() + 8);
        buf.extend_from_slice(EMBEDDING_MAGIC);
        buf.extend_from_slice(&(self.n as u32).to_le_bytes());
        buf.extend_from_slice(&(self.d as u32).to_le_bytes());
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&self.id_hash.to_le_bytes());
        buf
    }

    pub fn from_bytes(bytes: &[u8], expected_n: usize) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(Error::Embedding("truncated header".into()));
        }
        if &bytes[..4] != EMBEDDING_MAGIC {
            return Err(Error::Embedding("magic mismatch".into()));
        }
        let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        if n != expected_n {
            return Err(Error::EmbeddingCount {
                expected: expected_n,
                found: n,
            });
        }
        let payload = n
            .checked_mul(d)
            .and_then(|c| c.checked_mul(4))
            .ok_or_else(|| Error::Embedding("header overflows".into()))?;
        let total = 12 + payload + 8;
        if bytes.len() < total {
            return Err(Error::Embedding(format!(
                "truncated payload: {} bytes, expected {total}",
                bytes.len()
            )));
        }
        if bytes.len() > total {
            return Err(Error::Embedding(format!(
                "{} trailing bytes after id hash",
                bytes.len() - total
            )));
        }
        let values = bytes[12..12 + payload]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let id_hash = u64::from_le_bytes(bytes[12 + payload..total].try_into().unwrap());
        Self::new(n, d, values, id_hash)
    }
}

pub fn load_embeddings(path: impl AsRef<Path>, expected_n: usize) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingMatrix::from_bytes(&bytes, expected_n)
}

pub fn save_embeddings(path: impl AsRef<Path>, matrix: &EmbeddingMatrix) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, matrix.to_bytes()).map_err(|e| Error::io(path, e))
}

/// Per-document real-valued scores from a third-party tool, keyed by document id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExternalScoreTable {
    pub name: String,
    pub scores: HashMap<String, f64>,
}

impl ExternalScoreTable {
    pub fn new(name: impl Into<String>) -> Self {
        ExternalScoreTable {
            name: name.into(),
            scores: HashMap::new(),
        }
    }

    pub fn get(&self, doc_id: &str) -> Option<f64> {
        self.scores.get(doc_id).copied()
    }

    /// Reads `doc_id<TAB>value` lines. Unknown document ids are rejected.
    pub fn parse(
        name: impl Into<String>,
        reader: impl BufRead,
        documents: &[Document],
    ) -> Result<Self> {
        let known: HashSet<&str> = documents.iter().map(|d| d.id.as_str()).collect();
        let mut table = ExternalScoreTable::new(name);
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<scores>", e))?;
            let lineno = lineno + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (id, value) = line.split_once('\t').ok_or_else(|| Error::Malformed {
                line: lineno,
                message: "expected `doc_id<TAB>value`".into(),
            })?;
            let value: f64 = value.trim().parse().map_err(|_| Error::Malformed {
                line: lineno,
                message: format!("bad score `{value}`"),
            })?;
            if !value.is_finite() {
                return Err(Error::Malformed {
                    line: lineno,
                    message: "non-finite score".into(),
                });
            }
            if !known.contains(id) {
                return Err(Error::Malformed {
                    line: lineno,
                    message: format!("unknown document id `{id}`"),
                });
            }
            table.scores.insert(id.to_string(), value);
        }
        Ok(table)
    }

    /// Loads a score file; the table is named after the file stem.
    pub fn load(path: impl AsRef<Path>, documents: &[Document]) -> Result<Self> {
        let path = path.as_ref();
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(name, BufReader::new(file), documents)
    }

    pub fn write(&self, mut w: impl Write) -> std::io::Result<()> {
        let mut ids: Vec<&String> = self.scores.keys().collect();
        ids.sort();
        for id in ids {
            writeln!(w, "{id}\t{}", self.scores[id])?;
        }
        Ok(())
    }
}

/// Collection of named score tables, looked up by `EXTERNAL("name", ...)` rules.
#[derive(Debug, Clone, Default)]
pub struct ScoreSet {
    tables: HashMap<String, ExternalScoreTable>,
}

impl ScoreSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, table: ExternalScoreTable) {
        self.tables.insert(table.name.clone(), table);
    }

    pub fn get(&self, name: &str) -> Option<&ExternalScoreTable> {
        self.tables.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tables.keys().map(String::as_str)
    }
}

impl FromIterator<ExternalScoreTable> for ScoreSet {
    fn from_iter<I: IntoIterator<Item = ExternalScoreTable>>(iter: I) -> Self {
        let mut set = ScoreSet::new();
        for t in iter {
            set.insert(t);
        }
        set
    }
}

/// Split fractions for `(train, dev, test)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            dev: 0.1,
            test: 0.1,
        }
    }
}

/// Reassigns every document's split by a seeded uniform shuffle.
///
/// Dev and test receive `floor(ratio * n)` documents; the remainder goes to train.
pub fn split_corpus(
    mut documents: Vec<Document>,
    ratios: SplitRatios,
    seed: u64,
) -> Result<Vec<Document>> {
    let SplitRatios { train, dev, test } = ratios;
    if [train, dev, test].iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::Ratios("ratios must be nonnegative".into()));
    }
    if ((train + dev + test) - 1.0).abs() > 1e-9 {
        return Err(Error::Ratios(format!(
            "ratios sum to {}, expected 1",
            train + dev + test
        )));
    }
    let n = documents.len();
    if n < 3 && train > 0.0 && dev > 0.0 && test > 0.0 {
        return Err(Error::SplitTooSmall(n));
    }
    // Nudge before flooring so that e.g. 0.1 * 10 lands on 1, not 0.999...
    let n_dev = (dev * n as f64 + 1e-9).floor() as usize;
    let n_test = (test * n as f64 + 1e-9).floor() as usize;

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    for (rank, &i) in order.iter().enumerate() {
        documents[i].split = if rank < n_dev {
            Split::Dev
        } else if rank < n_dev + n_test {
            Split::Test
        } else {
            Split::Train
        };
    }
    Ok(documents)
}
