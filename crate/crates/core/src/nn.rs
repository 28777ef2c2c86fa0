//! Small dense numeric kernel: matrices, two-layer tanh networks, softmax,
//! cross-entropy and Adam. Everything is f64 and single-sample; callers loop.

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Probabilities are clamped to this floor before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `self * x`
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    /// `self^T * y`
    pub fn matvec_t(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(self.row(r)) {
                *o += w * yr;
            }
        }
        out
    }

    /// `self += scale * a b^T`
    pub fn add_outer(&mut self, a: &[f64], b: &[f64], scale: f64) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (r, &ar) in a.iter().enumerate() {
            let s = ar * scale;
            if s == 0.0 {
                continue;
            }
            for (w, &bc) in self.row_mut(r).iter_mut().zip(b) {
                *w += s * bc;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Two-layer feed-forward network: `W2 tanh(W1 x + b1) + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub w1: DenseMatrix,
    pub b1: Vec<f64>,
    pub w2: DenseMatrix,
    pub b2: Vec<f64>,
}

/// Gradients share the parameter layout.
pub type MlpGrads = MlpParams;

pub const TENSOR_NAMES: [&str; 4] = ["W1", "b1", "W2", "b2"];

impl MlpParams {
    pub fn zeros(in_dim: usize, hidden: usize, out_dim: usize) -> Self {
        MlpParams {
            w1: DenseMatrix::zeros(hidden, in_dim),
            b1: vec![0.0; hidden],
            w2: DenseMatrix::zeros(out_dim, hidden),
            b2: vec![0.0; out_dim],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.in_dim(), self.hidden_dim(), self.out_dim())
    }

    pub fn in_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.w2.rows()
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn tensors(&self) -> [&[f64]; 4] {
        [
            self.w1.as_slice(),
            &self.b1,
            self.w2.as_slice(),
            &self.b2,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.as_mut_slice(),
            &mut self.b1,
            self.w2.as_mut_slice(),
            &mut self.b2,
        ]
    }

    pub fn check_consistent(&self) -> Result<()> {
        if self.b1.len() != self.w1.rows()
            || self.w2.cols() != self.w1.rows()
            || self.b2.len() != self.w2.rows()
        {
            return Err(Error::Dimension(format!(
                "inconsistent MLP shapes: W1 {}x{}, b1 {}, W2 {}x{}, b2 {}",
                self.w1.rows(),
                self.w1.cols(),
                self.b1.len(),
                self.w2.rows(),
                self.w2.cols(),
                self.b2.len()
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &MlpParams, scale: f64) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.in_dim() {
            return Err(Error::Dimension(format!(
                "input has length {}, network expects {}",
                x.len(),
                self.in_dim()
            )));
        }
        Ok(())
    }

    /// Returns `(hidden, output)` with `hidden = tanh(W1 x + b1)` and
    /// `output = W2 hidden + b2` (raw logits).
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_input(x)?;
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut hidden = self.w1.matvec(x);
        for (h, b) in hidden.iter_mut().zip(&self.b1) {
            *h = (*h + b).tanh();
        }
        let mut out = self.w2.matvec(&hidden);
        for (o, b) in out.iter_mut().zip(&self.b2) {
            *o += b;
        }
        (hidden, out)
    }

    /// Exact gradients of `upstream . output(x)` with respect to every
    /// parameter and to the input.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<(MlpGrads, Vec<f64>)> {
        self.check_input(x)?;
        if upstream.len() != self.out_dim() {
            return Err(Error::Dimension(format!(
                "upstream gradient has length {}, network output is {}",
                upstream.len(),
                self.out_dim()
            )));
        }
        let (hidden, _) = self.forward_unchecked(x);
        let mut grads = self.zeros_like();
        let dx = self.accumulate_backward(x, &hidden, upstream, &mut grads);
        Ok((grads, dx))
    }

    /// Adds this sample's parameter gradients into `grads` and returns the
    /// input gradient. `hidden` must come from `forward` on the same `x`.
    pub(crate) fn accumulate_backward(
        &self,
        x: &[f64],
        hidden: &[f64],
        upstream: &[f64],
        grads: &mut MlpGrads,
    ) -> Vec<f64> {
        grads.w2.add_outer(upstream, hidden, 1.0);
        for (g, u) in grads.b2.iter_mut().zip(upstream) {
            *g += u;
        }
        let dh = self.w2.matvec_t(upstream);
        let dpre: Vec<f64> = dh
            .iter()
            .zip(hidden)
            .map(|(d, h)| d * (1.0 - h * h))
            .collect();
        grads.w1.add_outer(&dpre, x, 1.0);
        for (g, d) in grads.b1.iter_mut().zip(&dpre) {
            *g += d;
        }
        self.w1.matvec_t(&dpre)
    }
}

/// Glorot-uniform weights from a seeded ChaCha8 stream, zero biases.
pub fn init_params(in_dim: usize, hidden: usize, out_dim: usize, seed: u64) -> Result<MlpParams> {
    if in_dim == 0 || hidden == 0 || out_dim == 0 {
        return Err(Error::Dimension(format!(
            "layer sizes must be positive ({in_dim}, {hidden}, {out_dim})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = MlpParams::zeros(in_dim, hidden, out_dim);
    let b1 = glorot_bound(in_dim, hidden);
    let dist = Uniform::new_inclusive(-b1, b1).expect("finite bound");
    for w in p.w1.as_mut_slice() {
        *w = dist.sample(&mut rng);
    }
    let b2 = glorot_bound(hidden, out_dim);
    let dist = Uniform::new_inclusive(-b2, b2).expect("finite bound");
    for w in p.w2.as_mut_slice() {
        *w = dist.sample(&mut rng);
    }
    Ok(p)
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    if logits.is_empty() {
        return Vec::new();
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Gradient of `L(softmax(z))` wrt `z`, given `p = softmax(z)` and `g = dL/dp`.
pub fn softmax_backward(p: &[f64], g: &[f64]) -> Vec<f64> {
    let gp = dot(g, p);
    p.iter().zip(g).map(|(pi, gi)| pi * (gi - gp)).collect()
}

/// `-ln p[target]` (with `p` clamped to `PROB_FLOOR`) and its gradient with
/// respect to the logits that produced `p`, which is `p - onehot(target)`.
pub fn cross_entropy(probabilities: &[f64], target: usize) -> Result<(f64, Vec<f64>)> {
    if target >= probabilities.len() {
        return Err(Error::Dimension(format!(
            "target class {target} out of range for {} classes",
            probabilities.len()
        )));
    }
    let loss = -probabilities[target].max(PROB_FLOOR).ln();
    let mut grad = probabilities.to_vec();
    grad[target] -= 1.0;
    Ok((loss, grad))
}

pub fn argmax(values: &[f64]) -> usize {
    // First maximum wins, so ties go to the lowest index.
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Default::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for one `MlpParams`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    m: MlpParams,
    v: MlpParams,
}

impl AdamState {
    pub fn new(params: &MlpParams, config: AdamConfig) -> Self {
        AdamState {
            config,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn first_moment(&self) -> &MlpParams {
        &self.m
    }

    pub fn second_moment(&self) -> &MlpParams {
        &self.v
    }

    /// One bias-corrected Adam update. Parameters are left untouched when any
    /// gradient entry is non-finite.
    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpGrads) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::GradientOverflow);
        }
        if grads.num_params() != params.num_params() || params.num_params() != self.m.num_params()
        {
            return Err(Error::Dimension("Adam shapes disagree".into()));
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
