//! Binary model checkpoint.
//!
//! Little-endian layout:
//!
//! ```text
//! "WSM1" u32 version
//! u32 hidden, u32 d, u32 m, u32 k, u64 seed
//! f64 c1, c2, c3, alpha, lr, clean_fraction
//! u32 max_epochs, u32 threshold_p, u32 patience, u8 mode, u32 best_epoch
//! names:   u32 count, then (u32 len, utf-8 bytes) for classes, then rules
//! tensors: attention W1 b1 W2 b2, classifier W1 b1 W2 b2,
//!          each u32 rows, u32 cols, rows*cols f64
//! u32 k, k f64 reliability
//! u8 provenance, u32 count, count (u32 index, u32 label)
//! u32 epochs, each u32 epoch, f64 l1 l2 l3 total, then three optional f64
//!          (u8 present flag, f64 value) for dev accuracy, pseudo noise, majority noise
//! ```

use std::path::Path;

use crate::classifier::NeuralClassifier;
use crate::cotrain::{EpochLog, Mode, TrainConfig, TrainedModel};
use crate::denoiser::{AttentionNet, Provenance, PseudoLabels};
use crate::error::{Error, Result};
use crate::nn::{DenseMatrix, MlpParams};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"WSM1";
const VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0
            .extend_from_slice(&u32::try_from(v).expect("checkpoint count fits u32").to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn opt(&mut self, v: Option<f64>) {
        self.u8(v.is_some() as u8);
        self.f64(v.unwrap_or(0.0));
    }
    fn names(&mut self, names: &[String]) {
        self.u32(names.len());
        for n in names {
            self.u32(n.len());
            self.0.extend_from_slice(n.as_bytes());
        }
    }
    fn tensor(&mut self, rows: usize, cols: usize, values: &[f64]) {
        self.u32(rows);
        self.u32(cols);
        for &v in values {
            self.f64(v);
        }
    }
    fn mlp(&mut self, p: &MlpParams) {
        self.tensor(p.w1.rows(), p.w1.cols(), p.w1.as_slice());
        self.tensor(p.b1.len(), 1, &p.b1);
        self.tensor(p.w2.rows(), p.w2.cols(), p.w2.as_slice());
        self.tensor(p.b2.len(), 1, &p.b2);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| corrupt(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn finite(&mut self, what: &str) -> Result<f64> {
        let v = self.f64()?;
        if !v.is_finite() {
            return Err(corrupt(format!("non-finite {what}")));
        }
        Ok(v)
    }
    fn opt(&mut self) -> Result<Option<f64>> {
        let flag = self.u8()?;
        let v = self.f64()?;
        match flag {
            0 => Ok(None),
            1 => Ok(Some(v)),
            f => Err(corrupt(format!("bad option flag {f}"))),
        }
    }
    fn names(&mut self) -> Result<Vec<String>> {
        let count = self.u32()?;
        let mut out = Vec::new();
        for _ in 0..count {
            let len = self.u32()?;
            let raw = self.take(len)?;
            out.push(
                String::from_utf8(raw.to_vec()).map_err(|_| corrupt("name is not valid utf-8"))?,
            );
        }
        Ok(out)
    }
    fn tensor(&mut self, rows: usize, cols: usize, what: &str) -> Result<Vec<f64>> {
        let (r, c) = (self.u32()?, self.u32()?);
        if (r, c) != (rows, cols) {
            return Err(corrupt(format!(
                "{what} has shape {r}x{c}, expected {rows}x{cols}"
            )));
        }
        (0..r * c).map(|_| self.finite(what)).collect()
    }
    fn mlp(&mut self, d: usize, h: usize, out: usize, what: &str) -> Result<MlpParams> {
        let w1 = self.tensor(h, d, what)?;
        let b1 = self.tensor(h, 1, what)?;
        let w2 = self.tensor(out, h, what)?;
        let b2 = self.tensor(out, 1, what)?;
        Ok(MlpParams {
            w1: DenseMatrix::from_vec(h, d, w1)?,
            b1,
            w2: DenseMatrix::from_vec(out, h, w2)?,
            b2,
        })
    }
}

pub fn to_bytes(model: &TrainedModel) -> Vec<u8> {
    let c = &model.config;
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(CHECKPOINT_MAGIC);
    w.u32(VERSION as usize);
    w.u32(c.hidden);
    w.u32(model.embedding_dim());
    w.u32(model.num_classes());
    w.u32(model.num_sources());
    w.u64(c.seed);
    for v in [c.c1, c.c2, c.c3, c.alpha, c.lr, c.clean_fraction] {
        w.f64(v);
    }
    w.u32(c.max_epochs);
    w.u32(c.threshold_p);
    w.u32(c.patience);
    w.u8(c.mode.code());
    w.u32(model.best_epoch);
    w.names(&model.class_names);
    w.names(&model.rule_names);
    w.mlp(&model.attention.mlp);
    w.mlp(&model.classifier.mlp);
    w.u32(model.reliability.len());
    for &a in &model.reliability {
        w.f64(a);
    }
    w.u8(match model.pseudo_labels.provenance {
        Provenance::MajorityInit => 0,
        Provenance::Weighted => 1,
    });
    w.u32(model.pseudo_labels.len());
    for (&i, &y) in model
        .pseudo_labels
        .indices
        .iter()
        .zip(&model.pseudo_labels.labels)
    {
        w.u32(i);
        w.u32(y);
    }
    w.u32(model.log.len());
    for e in &model.log {
        w.u32(e.epoch);
        for v in [e.l1, e.l2, e.l3, e.total] {
            w.f64(v);
        }
        w.opt(e.dev_accuracy);
        w.opt(e.pseudo_noise);
        w.opt(e.majority_noise);
    }
    w.0
}

pub fn from_bytes(bytes: &[u8]) -> Result<TrainedModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4).ok() != Some(CHECKPOINT_MAGIC.as_slice()) {
        return Err(corrupt("bad magic, not a model checkpoint"));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let hidden = r.u32()?;
    let d = r.u32()?;
    let m = r.u32()?;
    let k = r.u32()?;
    if hidden == 0 || d == 0 || m < 2 || k == 0 {
        return Err(corrupt(format!(
            "implausible dimensions hidden={hidden} d={d} m={m} k={k}"
        )));
    }
    let seed = r.u64()?;
    let c1 = r.finite("c1")?;
    let c2 = r.finite("c2")?;
    let c3 = r.finite("c3")?;
    let alpha = r.finite("alpha")?;
    let lr = r.finite("lr")?;
    let clean_fraction = r.finite("clean_fraction")?;
    let max_epochs = r.u32()?;
    let threshold_p = r.u32()?;
    let patience = r.u32()?;
    let code = r.u8()?;
    let mode = Mode::from_code(code).ok_or_else(|| corrupt(format!("unknown mode code {code}")))?;
    let best_epoch = r.u32()?;
    let config = TrainConfig {
        c1,
        c2,
        c3,
        alpha,
        lr,
        hidden,
        max_epochs,
        patience,
        threshold_p,
        seed,
        mode,
        clean_fraction,
    };
    config
        .validate()
        .map_err(|e| corrupt(format!("stored config invalid: {e}")))?;

    let class_names = r.names()?;
    let rule_names = r.names()?;
    if class_names.len() != m || rule_names.len() != k {
        return Err(corrupt("name tables disagree with stored dimensions"));
    }
    let attention = AttentionNet::new(r.mlp(d, hidden, 1, "attention tensor")?)?;
    let classifier = NeuralClassifier::new(r.mlp(d, hidden, m, "classifier tensor")?)?;
    if r.u32()? != k {
        return Err(corrupt("reliability length disagrees with k"));
    }
    let reliability = (0..k)
        .map(|_| r.finite("reliability"))
        .collect::<Result<Vec<_>>>()?;
    let provenance = match r.u8()? {
        0 => Provenance::MajorityInit,
        1 => Provenance::Weighted,
        p => return Err(corrupt(format!("bad provenance {p}"))),
    };
    let count = r.u32()?;
    let mut indices = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..count {
        indices.push(r.u32()?);
        let y = r.u32()?;
        if y >= m {
            return Err(corrupt(format!("pseudo label {y} outside {m} classes")));
        }
        labels.push(y);
    }
    let epochs = r.u32()?;
    let mut log = Vec::new();
    for _ in 0..epochs {
        log.push(EpochLog {
            epoch: r.u32()?,
            l1: r.f64()?,
            l2: r.f64()?,
            l3: r.f64()?,
            total: r.f64()?,
            dev_accuracy: r.opt()?,
            pseudo_noise: r.opt()?,
            majority_noise: r.opt()?,
        });
    }
    if r.pos != bytes.len() {
        return Err(corrupt(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok(TrainedModel {
        config,
        attention,
        classifier,
        reliability,
        pseudo_labels: PseudoLabels {
            indices,
            labels,
            provenance,
        },
        log,
        best_epoch,
        class_names,
        rule_names,
    })
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &TrainedModel) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
