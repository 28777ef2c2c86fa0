//! Label denoiser: conditional source attention, reliability scores,
//! reliability-weighted voting and the rule-based soft prediction.
//!
//! For document `i` with embedding `B_i` and votes `y_i1..y_ik`, the attention
//! net scores each source on the input `B_i + y_ij` (the integer vote, `-1` for
//! abstain, added to every embedding component). The scores are normalised by
//! a softmax over all `k` sources and then masked to the sources that voted;
//! the masked scores are not renormalised.

use crate::error::{Error, Result};
use crate::nn::{self, init_params, softmax, softmax_backward, MlpGrads, MlpParams};

/// Two-layer network producing one unnormalised score per (document, source).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionNet {
    pub mlp: MlpParams,
}

impl AttentionNet {
    pub fn new(mlp: MlpParams) -> Result<Self> {
        mlp.check_consistent()?;
        if mlp.out_dim() != 1 {
            return Err(Error::Dimension(format!(
                "attention net must have one output, has {}",
                mlp.out_dim()
            )));
        }
        Ok(AttentionNet { mlp })
    }

    pub fn init(embedding_dim: usize, hidden: usize, seed: u64) -> Result<Self> {
        Self::new(init_params(embedding_dim, hidden, 1, seed)?)
    }

    pub fn embedding_dim(&self) -> usize {
        self.mlp.in_dim()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    MajorityInit,
    Weighted,
}

/// Hard labels over the matched set, aligned with `indices`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoLabels {
    pub indices: Vec<usize>,
    pub labels: Vec<usize>,
    pub provenance: Provenance,
}

impl PseudoLabels {
    pub fn get(&self, corpus_index: usize) -> Option<usize> {
        self.indices
            .iter()
            .position(|&i| i == corpus_index)
            .map(|p| self.labels[p])
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Per-sample conditional scores `a_ij` plus their column means `a_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityState {
    pub conditional: Vec<Vec<f64>>,
    pub global: Vec<f64>,
}

fn tally(row: &[i32], m: usize, weight: impl Fn(usize) -> f64) -> Result<Vec<f64>> {
    let mut scores = vec![0.0; m];
    let mut any = false;
    for (j, &v) in row.iter().enumerate() {
        if v < 0 {
            continue;
        }
        let c = v as usize;
        if c >= m {
            return Err(Error::Invalid(format!("vote {v} outside {m} classes")));
        }
        scores[c] += weight(j);
        any = true;
    }
    if !any {
        return Err(Error::NoVotes);
    }
    Ok(scores)
}

/// Most-voted class; ties go to the lowest class index.
pub fn majority_vote(row: &[i32], m: usize) -> Result<usize> {
    let counts = tally(row, m, |_| 1.0)?;
    Ok(nn::argmax(&counts))
}

/// `argmax_r sum_j a_j [y_j == r]` with lowest-index tie-break.
pub fn weighted_vote(row: &[i32], reliability: &[f64], m: usize) -> Result<usize> {
    if reliability.len() != row.len() {
        return Err(Error::Dimension(format!(
            "{} reliability scores for {} sources",
            reliability.len(),
            row.len()
        )));
    }
    let scores = tally(row, m, |j| reliability[j])?;
    Ok(nn::argmax(&scores))
}

fn attention_input(embedding: &[f64], vote: i32) -> Vec<f64> {
    let shift = f64::from(vote);
    embedding.iter().map(|b| b + shift).collect()
}

/// Softmax-normalised attention over all sources of one document.
pub fn attention_scores(net: &AttentionNet, embedding: &[f64], row: &[i32]) -> Result<Vec<f64>> {
    if embedding.len() != net.embedding_dim() {
        return Err(Error::Dimension(format!(
            "embedding has length {}, attention net expects {}",
            embedding.len(),
            net.embedding_dim()
        )));
    }
    let raw: Vec<f64> = row
        .iter()
        .map(|&v| net.mlp.forward_unchecked(&attention_input(embedding, v)).1[0])
        .collect();
    Ok(softmax(&raw))
}

/// Zeroes the scores of abstaining sources.
pub fn conditional_reliability(q: &[f64], row: &[i32]) -> Result<Vec<f64>> {
    if q.len() != row.len() {
        return Err(Error::Dimension(format!(
            "{} scores for {} sources",
            q.len(),
            row.len()
        )));
    }
    Ok(q.iter()
        .zip(row)
        .map(|(&s, &v)| if v >= 0 { s } else { 0.0 })
        .collect())
}

/// Column means of the conditional scores over matched samples.
pub fn global_reliability(conditional: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = conditional.first().ok_or(Error::EmptyMatched)?;
    let k = first.len();
    let mut sums = vec![0.0; k];
    for row in conditional {
        if row.len() != k {
            return Err(Error::Dimension("ragged conditional scores".into()));
        }
        for (s, a) in sums.iter_mut().zip(row) {
            *s += a;
        }
    }
    let n = conditional.len() as f64;
    Ok(sums.into_iter().map(|s| s / n).collect())
}

/// Per-class evidence `sum_j a_ij [y_ij == r]`, before the softmax.
fn rule_logits(row: &[i32], conditional: &[f64], m: usize) -> Vec<f64> {
    let mut y = vec![0.0; m];
    for (&v, &a) in row.iter().zip(conditional) {
        if v >= 0 && (v as usize) < m {
            y[v as usize] += a;
        }
    }
    y
}

/// Soft prediction of the rule-based classifier for one document.
pub fn rule_prediction(row: &[i32], conditional: &[f64], m: usize) -> Result<Vec<f64>> {
    if row.len() != conditional.len() {
        return Err(Error::Dimension(format!(
            "{} scores for {} sources",
            conditional.len(),
            row.len()
        )));
    }
    Ok(softmax(&rule_logits(row, conditional, m)))
}

/// Forward state of the denoiser for one document, kept for backprop.
#[derive(Debug, Clone)]
pub struct DenoiserSample {
    inputs: Vec<Vec<f64>>,
    hiddens: Vec<Vec<f64>>,
    row: Vec<i32>,
    pub q: Vec<f64>,
    pub conditional: Vec<f64>,
    pub prediction: Vec<f64>,
}

impl DenoiserSample {
    pub fn forward(net: &AttentionNet, embedding: &[f64], row: &[i32], m: usize) -> Result<Self> {
        if embedding.len() != net.embedding_dim() {
            return Err(Error::Dimension(format!(
                "embedding has length {}, attention net expects {}",
                embedding.len(),
                net.embedding_dim()
            )));
        }
        let mut inputs = Vec::with_capacity(row.len());
        let mut hiddens = Vec::with_capacity(row.len());
        let mut raw = Vec::with_capacity(row.len());
        for &v in row {
            let x = attention_input(embedding, v);
            let (h, out) = net.mlp.forward_unchecked(&x);
            raw.push(out[0]);
            inputs.push(x);
            hiddens.push(h);
        }
        let q = softmax(&raw);
        let conditional = conditional_reliability(&q, row)?;
        let prediction = rule_prediction(row, &conditional, m)?;
        Ok(DenoiserSample {
            inputs,
            hiddens,
            row: row.to_vec(),
            q,
            conditional,
            prediction,
        })
    }

    /// Accumulates `scale * d(-ln z[target]) / dW` into `grads`; returns the
    /// unscaled loss.
    pub fn backward_nll(
        &self,
        net: &AttentionNet,
        target: usize,
        scale: f64,
        grads: &mut MlpGrads,
    ) -> Result<f64> {
        let (loss, dy) = nn::cross_entropy(&self.prediction, target)?;
        // d/da_ij = dy[vote] for voting sources, 0 for masked ones.
        let da: Vec<f64> = self
            .row
            .iter()
            .map(|&v| if v >= 0 { dy[v as usize] } else { 0.0 })
            .collect();
        let draw = softmax_backward(&self.q, &da);
        for ((x, h), g) in self.inputs.iter().zip(&self.hiddens).zip(draw) {
            if g != 0.0 {
                net.mlp.accumulate_backward(x, h, &[scale * g], grads);
            }
        }
        Ok(loss)
    }
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::gradcheck::{max_rel_error, numeric_mlp_gradient, DEFAULT_STEP};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const POS: i32 = 0;
    const NEG: i32 = 1;

    #[test]
    fn majority_examples() {
        assert_eq!(majority_vote(&[POS, POS, NEG], 2).unwrap(), 0);
        assert_eq!(majority_vote(&[2, -1, -1], 3).unwrap(), 2);
        assert_eq!(majority_vote(&[0, 1], 2).unwrap(), 0);
        assert!(matches!(majority_vote(&[-1, -1], 2), Err(Error::NoVotes)));
    }

    #[test]
    fn weighted_case_study() {
        let a = [0.1074, 0.1074, 0.2482];
        assert_eq!(weighted_vote(&[POS, POS, NEG], &a, 2).unwrap(), NEG as usize);
        assert!(weighted_vote(&[-1, -1, -1], &a, 2).is_err());
        assert!(weighted_vote(&[0, 1], &a, 2).is_err());
    }

    fn net(d: usize, h: usize, seed: u64) -> AttentionNet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut n = AttentionNet::init(d, h, seed).unwrap();
        for b in n.mlp.b1.iter_mut().chain(n.mlp.b2.iter_mut()) {
            *b = rng.random_range(-0.5..0.5);
        }
        n
    }

    #[test]
    fn single_source_gets_all_attention() {
        let q = attention_scores(&net(3, 4, 1), &[0.1, 0.2, 0.3], &[1]).unwrap();
        assert_eq!(q, vec![1.0]);
    }

    #[test]
    fn identical_votes_share_attention() {
        let q = attention_scores(&net(3, 4, 2), &[0.5, -0.2, 0.3], &[1, 1]).unwrap();
        assert_eq!(q, vec![0.5, 0.5]);
    }

    #[test]
    fn attention_matches_reference() {
        // Direct evaluation of W2 tanh(W1 (y + B) + b1) + b2 then softmax.
        let n = net(4, 5, 3);
        let b = [0.3, -0.7, 0.1, 0.9];
        let row = [1, -1, 0];
        let q = attention_scores(&n, &b, &row).unwrap();
        let mut raw = Vec::new();
        for &v in &row {
            let mut s = n.mlp.b2[0];
            for r in 0..5 {
                let mut pre = n.mlp.b1[r];
                for c in 0..4 {
                    pre += n.mlp.w1.get(r, c) * (b[c] + v as f64);
                }
                s += n.mlp.w2.get(0, r) * pre.tanh();
            }
            raw.push(s);
        }
        let max = raw.iter().cloned().fold(f64::MIN, f64::max);
        let z: f64 = raw.iter().map(|r| (r - max).exp()).sum();
        for (qi, ri) in q.iter().zip(&raw) {
            assert!((qi - (ri - max).exp() / z).abs() < 1e-14);
        }
        assert!(attention_scores(&n, &[0.0; 3], &row).is_err());
    }

    #[test]
    fn conditional_examples() {
        let q = [0.2, 0.3, 0.5];
        assert_eq!(conditional_reliability(&q, &[0, 1, 0]).unwrap(), q.to_vec());
        assert_eq!(conditional_reliability(&q, &[-1, -1, -1]).unwrap(), vec![0.0; 3]);
        assert_eq!(conditional_reliability(&q, &[-1, 1, 0]).unwrap(), vec![0.0, 0.3, 0.5]);
    }

    #[test]
    fn global_examples() {
        assert_eq!(global_reliability(&[vec![0.2, 0.8]]).unwrap(), vec![0.2, 0.8]);
        assert_eq!(
            global_reliability(&[vec![0.5, 0.5, 0.0], vec![0.0, 0.5, 0.5]]).unwrap(),
            vec![0.25, 0.5, 0.25]
        );
        assert!(matches!(global_reliability(&[]), Err(Error::EmptyMatched)));
    }

    #[test]
    fn rule_prediction_examples() {
        let z = rule_prediction(&[0, 0], &[0.5, 0.5], 2).unwrap();
        let e = std::f64::consts::E;
        assert!((z[0] - e / (1.0 + e)).abs() < 1e-15);
        assert!((z[0] - 0.7311).abs() < 1e-4);
        assert_eq!(rule_prediction(&[0, 1, 2], &[0.0; 3], 3).unwrap(), vec![1.0 / 3.0; 3]);
        let z = rule_prediction(&[0, 1, 2, 2], &[0.3, 0.3, 0.1, 0.1], 3).unwrap();
        assert_eq!(z[0], z[1]);
    }

    #[test]
    fn denoiser_loss_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..20 {
            let n = net(4, 6, trial);
            let emb: Vec<Vec<f64>> = (0..5)
                .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let rows: Vec<Vec<i32>> = (0..5)
                .map(|_| {
                    let mut r: Vec<i32> = (0..3).map(|_| rng.random_range(-1..3)).collect();
                    r[0] = rng.random_range(0..3);
                    r
                })
                .collect();
            let targets: Vec<usize> = (0..5).map(|_| rng.random_range(0..3)).collect();
            let loss = |p: &MlpParams| {
                let a = AttentionNet { mlp: p.clone() };
                (0..5)
                    .map(|i| {
                        let s = DenoiserSample::forward(&a, &emb[i], &rows[i], 3).unwrap();
                        -s.prediction[targets[i]].ln()
                    })
                    .sum::<f64>()
            };
            let mut grads = n.mlp.zeros_like();
            for i in 0..5 {
                let s = DenoiserSample::forward(&n, &emb[i], &rows[i], 3).unwrap();
                s.backward_nll(&n, targets[i], 1.0, &mut grads).unwrap();
            }
            let numeric = numeric_mlp_gradient(&n.mlp, DEFAULT_STEP, loss);
            let err = max_rel_error(&grads, &numeric);
            assert!(err < 1e-5, "trial {trial}: {err}");
        }
    }

    fn brute_force_vote(row: &[i32], a: &[f64], m: usize) -> usize {
        // Full score table, then the first class attaining the maximum.
        let table: Vec<f64> = (0..m)
            .map(|r| {
                (0..row.len())
                    .filter(|&j| row[j] == r as i32)
                    .map(|j| a[j])
                    .sum()
            })
            .collect();
        let best = table.iter().cloned().fold(f64::MIN, f64::max);
        table.iter().position(|&s| s == best).unwrap()
    }

    fn arb_row() -> impl Strategy<Value = (Vec<i32>, usize)> {
        (1usize..=6, 2usize..=4).prop_flat_map(|(k, m)| {
            (prop::collection::vec(-1i32..m as i32, k), Just(m))
                .prop_filter("needs a vote", |(r, _)| r.iter().any(|&v| v >= 0))
        })
    }

    proptest! {
        #[test]
        fn weighted_vote_matches_table((row, m) in arb_row(), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<f64> = row.iter().map(|_| rng.random_range(0.0..1.0)).collect();
            prop_assert_eq!(weighted_vote(&row, &a, m).unwrap(), brute_force_vote(&row, &a, m));
            let uniform = vec![0.37; row.len()];
            prop_assert_eq!(weighted_vote(&row, &uniform, m).unwrap(), majority_vote(&row, m).unwrap());
        }

        #[test]
        fn weighted_vote_scale_invariant((row, m) in arb_row(), seed in any::<u64>(), scale in 0.01f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // Dyadic weights keep the scaled sums exact, so ties stay ties.
            let a: Vec<f64> = row.iter().map(|_| rng.random_range(0..16) as f64 / 16.0).collect();
            let pow2 = 2f64.powi((scale.log2().round()) as i32);
            let scaled: Vec<f64> = a.iter().map(|v| v * pow2).collect();
            prop_assert_eq!(weighted_vote(&row, &a, m).unwrap(), weighted_vote(&row, &scaled, m).unwrap());
        }

        #[test]
        fn attention_sums_to_one(seed in any::<u64>(), k in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = net(3, 4, seed);
            let b: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let row: Vec<i32> = (0..k).map(|_| rng.random_range(-1..3)).collect();
            let q = attention_scores(&n, &b, &row).unwrap();
            prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn masking_is_idempotent(q in prop::collection::vec(0.0f64..1.0, 1..6), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let row: Vec<i32> = q.iter().map(|_| rng.random_range(-1..2)).collect();
            let once = conditional_reliability(&q, &row).unwrap();
            prop_assert_eq!(conditional_reliability(&once, &row).unwrap(), once);
        }

        #[test]
        fn rule_prediction_is_class_equivariant((row, m) in arb_row(), seed in any::<u64>(), shift in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<f64> = row.iter().map(|_| rng.random_range(0.0..1.0)).collect();
            let z = rule_prediction(&row, &a, m).unwrap();
            prop_assert!((z.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            // Relabel class r as (r + shift) mod m.
            let permuted: Vec<i32> = row.iter().map(|&v| if v < 0 { v } else { (v + shift as i32) % m as i32 }).collect();
            let zp = rule_prediction(&permuted, &a, m).unwrap();
            for r in 0..m {
                prop_assert!((z[r] - zp[(r + shift) % m]).abs() < 1e-12);
            }
        }
    }
}
