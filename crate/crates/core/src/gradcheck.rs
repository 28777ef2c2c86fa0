//! Finite-difference gradient checks.
//!
//! Relative error of an analytic entry `a` against its numeric estimate `n`
//! is `|a - n| / max(|a|, |n|, REL_ERROR_FLOOR)`. The floor keeps entries whose
//! true gradient is zero (e.g. the output bias of the attention net, which a
//! softmax over sources cancels) from dividing rounding noise by zero.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classifier::{classify, ClassifierSample, NeuralClassifier};
use crate::denoiser::{AttentionNet, DenoiserSample};
use crate::error::Result;
use crate::nn::{MlpGrads, MlpParams, PROB_FLOOR, TENSOR_NAMES};

pub const REL_ERROR_FLOOR: f64 = 1e-6;
pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_TOLERANCE: f64 = 1e-5;

/// Five-point central-difference gradient of `f` at `params`; truncation
/// error is O(step^4).
pub fn numeric_mlp_gradient(
    params: &MlpParams,
    step: f64,
    f: impl Fn(&MlpParams) -> f64,
) -> MlpGrads {
    let mut out = params.zeros_like();
    let mut probe = params.clone();
    for t in 0..4 {
        for e in 0..params.tensors()[t].len() {
            let orig = params.tensors()[t][e];
            let mut at = |offset: f64| {
                probe.tensors_mut()[t][e] = orig + offset;
                f(&probe)
            };
            let (p2, p1, m1, m2) = (at(2.0 * step), at(step), at(-step), at(-2.0 * step));
            probe.tensors_mut()[t][e] = orig;
            out.tensors_mut()[t][e] = (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * step);
        }
    }
    out
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Worst entry error per tensor, in `TENSOR_NAMES` order.
pub fn tensor_errors(analytic: &MlpGrads, numeric: &MlpGrads) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (t, (a, n)) in analytic.tensors().iter().zip(numeric.tensors()).enumerate() {
        out[t] = a
            .iter()
            .zip(n.iter())
            .map(|(&x, &y)| rel_error(x, y))
            .fold(0.0, f64::max);
    }
    out
}

pub fn max_rel_error(analytic: &MlpGrads, numeric: &MlpGrads) -> f64 {
    tensor_errors(analytic, numeric).into_iter().fold(0.0, f64::max)
}

/// Which loss a check differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradPath {
    /// Attention through the rule prediction into the denoiser loss.
    Attention,
    /// Classifier into its loss on matched samples.
    Classifier,
    /// Classifier into the squared distance to fixed ensemble targets.
    SelfTrain,
    /// Weighted sum of all three, against both networks.
    Joint,
}

impl GradPath {
    pub const ALL: [GradPath; 4] = [
        GradPath::Attention,
        GradPath::Classifier,
        GradPath::SelfTrain,
        GradPath::Joint,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GradPath::Attention => "attention",
            GradPath::Classifier => "classifier",
            GradPath::SelfTrain => "self-train",
            GradPath::Joint => "joint",
        }
    }
}

/// A tiny co-training problem: `n = 6`, `k = 3`, `m = 2`, `d = 4`.
/// Rows 0..4 carry votes, rows 4..6 abstain everywhere.
#[derive(Debug, Clone)]
pub struct MicroInstance {
    pub embeddings: Vec<Vec<f64>>,
    pub votes: Vec<Vec<i32>>,
    pub labels: Vec<usize>,
    pub targets: Vec<Vec<f64>>,
    pub attention: AttentionNet,
    pub classifier: NeuralClassifier,
    pub weights: [f64; 3],
}

pub const MICRO_N: usize = 6;
pub const MICRO_K: usize = 3;
pub const MICRO_M: usize = 2;
pub const MICRO_D: usize = 4;
const MICRO_HIDDEN: usize = 5;
const MICRO_MATCHED: usize = 4;

fn randomize_biases(p: &mut MlpParams, rng: &mut ChaCha8Rng) {
    for b in p.b1.iter_mut().chain(p.b2.iter_mut()) {
        *b = rng.random_range(-0.5..0.5);
    }
}

impl MicroInstance {
    pub fn random(seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let embeddings = (0..MICRO_N)
            .map(|_| (0..MICRO_D).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let mut votes = Vec::with_capacity(MICRO_N);
        for i in 0..MICRO_N {
            let mut row: Vec<i32> = (0..MICRO_K)
                .map(|_| {
                    if i < MICRO_MATCHED && rng.random_bool(0.7) {
                        rng.random_range(0..MICRO_M as i32)
                    } else {
                        -1
                    }
                })
                .collect();
            if i < MICRO_MATCHED && row.iter().all(|&v| v < 0) {
                let j = rng.random_range(0..MICRO_K);
                row[j] = rng.random_range(0..MICRO_M as i32);
            }
            votes.push(row);
        }
        let labels = (0..MICRO_MATCHED)
            .map(|_| rng.random_range(0..MICRO_M))
            .collect();
        let targets = (MICRO_MATCHED..MICRO_N)
            .map(|_| {
                let a: f64 = rng.random();
                vec![a, 1.0 - a]
            })
            .collect();
        let mut attention = AttentionNet::init(MICRO_D, MICRO_HIDDEN, rng.random())?;
        let mut classifier = NeuralClassifier::init(MICRO_D, MICRO_HIDDEN, MICRO_M, rng.random())?;
        randomize_biases(&mut attention.mlp, &mut rng);
        randomize_biases(&mut classifier.mlp, &mut rng);
        let w: [f64; 3] = [rng.random_range(0.1..1.0), rng.random_range(0.1..1.0), rng.random_range(0.1..1.0)];
        let s: f64 = w.iter().sum();
        Ok(MicroInstance {
            embeddings,
            votes,
            labels,
            targets,
            attention,
            classifier,
            weights: [w[0] / s, w[1] / s, w[2] / s],
        })
    }

    fn matched(&self) -> std::ops::Range<usize> {
        0..MICRO_MATCHED
    }

    fn unmatched(&self) -> std::ops::Range<usize> {
        MICRO_MATCHED..MICRO_N
    }

    /// Loss terms computed by plain forward evaluation, no backprop code involved.
    pub fn losses(&self, attention: &AttentionNet, classifier: &NeuralClassifier) -> [f64; 3] {
        let mut l = [0.0; 3];
        for (p, i) in self.matched().enumerate() {
            let z = DenoiserSample::forward(attention, &self.embeddings[i], &self.votes[i], MICRO_M)
                .expect("micro forward")
                .prediction;
            l[0] -= z[self.labels[p]].max(PROB_FLOOR).ln();
            let zc = classify(classifier, &self.embeddings[i]).expect("micro forward");
            l[1] -= zc[self.labels[p]].max(PROB_FLOOR).ln();
        }
        for (u, i) in self.unmatched().enumerate() {
            let zc = classify(classifier, &self.embeddings[i]).expect("micro forward");
            l[2] += zc
                .iter()
                .zip(&self.targets[u])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        l
    }

    /// Analytic gradients of `sum_t scale[t] * l_t` for the attention net and classifier.
    pub fn analytic(&self, scale: [f64; 3]) -> Result<(MlpGrads, MlpGrads)> {
        let mut ga = self.attention.mlp.zeros_like();
        let mut gc = self.classifier.mlp.zeros_like();
        for (p, i) in self.matched().enumerate() {
            if scale[0] != 0.0 {
                let s =
                    DenoiserSample::forward(&self.attention, &self.embeddings[i], &self.votes[i], MICRO_M)?;
                s.backward_nll(&self.attention, self.labels[p], scale[0], &mut ga)?;
            }
            if scale[1] != 0.0 {
                let s = ClassifierSample::forward(&self.classifier, &self.embeddings[i])?;
                s.backward_nll(&self.classifier, self.labels[p], scale[1], &mut gc)?;
            }
        }
        if scale[2] != 0.0 {
            for (u, i) in self.unmatched().enumerate() {
                let s = ClassifierSample::forward(&self.classifier, &self.embeddings[i])?;
                s.backward_squared(&self.classifier, &self.targets[u], scale[2], &mut gc);
            }
        }
        Ok((ga, gc))
    }

    fn scale_for(&self, path: GradPath) -> [f64; 3] {
        match path {
            GradPath::Attention => [1.0, 0.0, 0.0],
            GradPath::Classifier => [0.0, 1.0, 0.0],
            GradPath::SelfTrain => [0.0, 0.0, 1.0],
            GradPath::Joint => self.weights,
        }
    }

    fn objective(&self, scale: [f64; 3], att: &AttentionNet, cls: &NeuralClassifier) -> f64 {
        let l = self.losses(att, cls);
        scale.iter().zip(l).map(|(c, v)| c * v).sum()
    }

    /// Numeric gradients of the same objective as [`Self::analytic`].
    pub fn numeric(&self, scale: [f64; 3], step: f64) -> (MlpGrads, MlpGrads) {
        let ga = numeric_mlp_gradient(&self.attention.mlp, step, |p| {
            let att = AttentionNet { mlp: p.clone() };
            self.objective(scale, &att, &self.classifier)
        });
        let gc = numeric_mlp_gradient(&self.classifier.mlp, step, |p| {
            let cls = NeuralClassifier { mlp: p.clone() };
            self.objective(scale, &self.attention, &cls)
        });
        (ga, gc)
    }
}

/// Tensor name such as `attention.W1` or `classifier.b2`.
pub fn tensor_label(network: usize, tensor: usize) -> String {
    let net = if network == 0 { "attention" } else { "classifier" };
    format!("{net}.{}", TENSOR_NAMES[tensor])
}

fn corrupt(grads: &mut (MlpGrads, MlpGrads), name: &str) -> bool {
    for net in 0..2 {
        for t in 0..4 {
            if tensor_label(net, t) == name {
                let g = if net == 0 { &mut grads.0 } else { &mut grads.1 };
                if let Some(v) = g.tensors_mut()[t].first_mut() {
                    *v += 0.1 * (1.0 + v.abs());
                    return true;
                }
            }
        }
    }
    false
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    pub path: GradPath,
    pub max_error: f64,
    pub worst_tensor: String,
    pub worst_trial: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub seed: u64,
    pub trials: usize,
    pub tolerance: f64,
    pub paths: Vec<PathResult>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.paths.iter().all(|p| p.max_error < self.tolerance)
    }

    pub fn worst(&self) -> Option<&PathResult> {
        self.paths
            .iter()
            .max_by(|a, b| a.max_error.total_cmp(&b.max_error))
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "gradcheck seed={} trials={} tolerance={:e}",
            self.seed, self.trials, self.tolerance
        )?;
        for p in &self.paths {
            let verdict = if p.max_error < self.tolerance { "ok" } else { "FAIL" };
            writeln!(
                f,
                "{:<10} {verdict:<4} max_rel_error={:.3e} worst={} trial={}",
                p.path.as_str(),
                p.max_error,
                p.worst_tensor,
                p.worst_trial
            )?;
        }
        if self.passed() {
            writeln!(f, "PASS")
        } else {
            let w = self.worst().expect("nonempty report");
            writeln!(f, "FAIL worst tensor {} ({:.3e})", w.worst_tensor, w.max_error)
        }
    }
}

/// Runs every path on `trials` micro-instances drawn from `seed`.
///
/// `corrupt_tensor` perturbs the analytic gradient of the named tensor
/// (e.g. `classifier.W1`) so failure reporting can be exercised.
pub fn run_gradcheck(
    seed: u64,
    trials: usize,
    corrupt_tensor: Option<&str>,
) -> Result<GradcheckReport> {
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let instances: Vec<MicroInstance> = (0..trials)
        .map(|_| MicroInstance::random(seeds.random()))
        .collect::<Result<_>>()?;
    let mut paths = Vec::new();
    for path in GradPath::ALL {
        let mut res = PathResult {
            path,
            max_error: 0.0,
            worst_tensor: tensor_label(0, 0),
            worst_trial: 0,
        };
        for (trial, inst) in instances.iter().enumerate() {
            let scale = inst.scale_for(path);
            let mut analytic = inst.analytic(scale)?;
            if let Some(name) = corrupt_tensor {
                corrupt(&mut analytic, name);
            }
            let numeric = inst.numeric(scale, DEFAULT_STEP);
            let errs = [
                tensor_errors(&analytic.0, &numeric.0),
                tensor_errors(&analytic.1, &numeric.1),
            ];
            for (net, row) in errs.iter().enumerate() {
                for (t, &e) in row.iter().enumerate() {
                    if e > res.max_error {
                        res.max_error = e;
                        res.worst_tensor = tensor_label(net, t);
                        res.worst_trial = trial;
                    }
                }
            }
        }
        paths.push(res);
    }
    Ok(GradcheckReport {
        seed,
        trials,
        tolerance: DEFAULT_TOLERANCE,
        paths,
    })
}
