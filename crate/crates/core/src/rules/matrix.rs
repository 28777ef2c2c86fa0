use std::io::{BufRead, Write};

use super::eval::{evaluate_prepared, PreparedDoc};
use super::{RuleKind, RuleSet};
use crate::corpus::{Document, ScoreSet};
use crate::error::{Error, Result};

pub const ABSTAIN: i32 = -1;

/// `n x k` votes, row-major; each entry is `-1` or a class index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeakLabelMatrix {
    n: usize,
    k: usize,
    num_classes: usize,
    votes: Vec<i32>,
}

impl WeakLabelMatrix {
    pub fn new(n: usize, k: usize, num_classes: usize, votes: Vec<i32>) -> Result<Self> {
        if votes.len() != n * k {
            return Err(Error::Dimension(format!(
                "{} votes for a {n}x{k} matrix",
                votes.len()
            )));
        }
        if let Some(v) = votes
            .iter()
            .find(|&&v| v < ABSTAIN || v >= num_classes as i32)
        {
            return Err(Error::Invalid(format!(
                "vote {v} outside -1..{num_classes}"
            )));
        }
        Ok(WeakLabelMatrix {
            n,
            k,
            num_classes,
            votes,
        })
    }

    pub fn from_rows(rows: &[Vec<i32>], k: usize, num_classes: usize) -> Result<Self> {
        if let Some(r) = rows.iter().find(|r| r.len() != k) {
            return Err(Error::Dimension(format!(
                "row of length {} in a matrix with {k} sources",
                r.len()
            )));
        }
        Self::new(rows.len(), k, num_classes, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn row(&self, i: usize) -> &[i32] {
        &self.votes[i * self.k..(i + 1) * self.k]
    }

    pub fn get(&self, i: usize, j: usize) -> i32 {
        self.votes[i * self.k + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[i32]> {
        self.votes.chunks(self.k.max(1)).take(self.n)
    }

    pub fn vote_count(&self, i: usize) -> usize {
        self.row(i).iter().filter(|&&v| v >= 0).count()
    }

    /// Keeps only the listed columns, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Result<Self> {
        if let Some(&c) = columns.iter().find(|&&c| c >= self.k) {
            return Err(Error::Dimension(format!("column {c} out of range")));
        }
        let votes = (0..self.n)
            .flat_map(|i| columns.iter().map(move |&j| self.get(i, j)))
            .collect();
        Self::new(self.n, columns.len(), self.num_classes, votes)
    }

    /// Writes `doc_id<TAB>v_1<TAB>...<TAB>v_k` lines.
    pub fn write_tsv(&self, documents: &[Document], mut w: impl Write) -> Result<()> {
        if documents.len() != self.n {
            return Err(Error::Dimension(format!(
                "{} documents for {} matrix rows",
                documents.len(),
                self.n
            )));
        }
        let mut out = String::new();
        for (i, d) in documents.iter().enumerate() {
            out.push_str(&d.id);
            for v in self.row(i) {
                out.push('\t');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        w.write_all(out.as_bytes())
            .map_err(|e| Error::io("<weak labels>", e))
    }

    /// Reads the TSV export back, checking row ids against `documents`.
    pub fn read_tsv(reader: impl BufRead, documents: &[Document], num_classes: usize) -> Result<Self> {
        let mut rows = Vec::new();
        let mut k = None;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<weak labels>", e))?;
            let lineno = lineno + 1;
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let id = fields.next().unwrap_or_default();
            let expected = documents.get(rows.len()).map(|d| d.id.as_str());
            if expected != Some(id) {
                return Err(Error::Malformed {
                    line: lineno,
                    message: format!("row id `{id}` does not match corpus order"),
                });
            }
            let row = fields
                .map(|f| f.parse::<i32>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Malformed {
                    line: lineno,
                    message: e.to_string(),
                })?;
            match k {
                None => k = Some(row.len()),
                Some(k) if k != row.len() => {
                    return Err(Error::Malformed {
                        line: lineno,
                        message: format!("expected {k} votes, found {}", row.len()),
                    })
                }
                _ => {}
            }
            rows.push(row);
        }
        if rows.len() != documents.len() {
            return Err(Error::Dimension(format!(
                "{} rows for {} documents",
                rows.len(),
                documents.len()
            )));
        }
        Self::from_rows(&rows, k.unwrap_or(0), num_classes)
    }
}

/// Applies every rule to every document. Column `j` is rule `j`.
pub fn build_weak_label_matrix(
    rules: &RuleSet,
    corpus: &[Document],
    scores: &ScoreSet,
) -> Result<WeakLabelMatrix> {
    for r in rules.rules() {
        if let RuleKind::External { score, .. } = &r.kind {
            if scores.get(score).is_none() {
                return Err(Error::Invalid(format!(
                    "rule `{}` needs external score table `{score}`",
                    r.name
                )));
            }
        }
    }
    let k = rules.len();
    let mut votes = Vec::with_capacity(corpus.len() * k);
    for doc in corpus {
        let prepared = PreparedDoc::new(doc);
        for r in rules.rules() {
            votes.push(if evaluate_prepared(r, &prepared, scores) {
                r.target as i32
            } else {
                ABSTAIN
            });
        }
    }
    WeakLabelMatrix::new(corpus.len(), k, rules.num_classes(), votes)
}

/// Matched rows have strictly more than `threshold` votes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchPartition {
    pub matched: Vec<usize>,
    pub unmatched: Vec<usize>,
    pub threshold: usize,
}

impl MatchPartition {
    /// Restricts both sides to indices accepted by `keep`, preserving order.
    pub fn filter(&self, mut keep: impl FnMut(usize) -> bool) -> MatchPartition {
        MatchPartition {
            matched: self.matched.iter().copied().filter(|&i| keep(i)).collect(),
            unmatched: self.unmatched.iter().copied().filter(|&i| keep(i)).collect(),
            threshold: self.threshold,
        }
    }
}

pub fn partition_matched(matrix: &WeakLabelMatrix, p: usize) -> Result<MatchPartition> {
    if matrix.k() == 0 || p >= matrix.k() {
        return Err(Error::ThresholdOutOfRange { p, k: matrix.k() });
    }
    let (matched, unmatched) = (0..matrix.n()).partition(|&i| matrix.vote_count(i) > p);
    Ok(MatchPartition {
        matched,
        unmatched,
        threshold: p,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleStats {
    pub coverage: f64,
    /// `None` when the rule never fires or no gold labels exist for its hits.
    pub accuracy: Option<f64>,
    pub hits: usize,
    pub correct: usize,
}

/// Per-rule coverage and empirical accuracy. Accuracy is computed over the
/// rule's hits that have a gold label.
pub fn rule_stats(matrix: &WeakLabelMatrix, gold: Option<&[Option<usize>]>) -> Vec<RuleStats> {
    let n = matrix.n();
    (0..matrix.k())
        .map(|j| {
            let mut hits = 0;
            let mut judged = 0;
            let mut correct = 0;
            for i in 0..n {
                let v = matrix.get(i, j);
                if v < 0 {
                    continue;
                }
                hits += 1;
                if let Some(Some(g)) = gold.map(|g| g[i]) {
                    judged += 1;
                    if v as usize == g {
                        correct += 1;
                    }
                }
            }
            RuleStats {
                coverage: if n == 0 { 0.0 } else { hits as f64 / n as f64 },
                accuracy: (judged > 0).then(|| correct as f64 / judged as f64),
                hits,
                correct,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ClassCatalog, Split};
    use crate::rules::{parse_rules, Rule};
    use proptest::prelude::*;

    fn docs(texts: &[&str]) -> Vec<Document> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Document {
                id: format!("d{i}"),
                text: t.to_string(),
                gold_label: None,
                split: Split::Train,
            })
            .collect()
    }

    #[test]
    fn single_row_composition() {
        let cat = ClassCatalog::new(["A", "B"]).unwrap();
        let rs = RuleSet::new(
            vec![
                Rule::keyword("r1", ["zebra"], 1).unwrap(),
                Rule::keyword("r2", ["apple"], 0).unwrap(),
                Rule::keyword("r3", ["mango"], 1).unwrap(),
            ],
            &cat,
        )
        .unwrap();
        let m = build_weak_label_matrix(&rs, &docs(&["an apple a day"]), &ScoreSet::new()).unwrap();
        assert_eq!(m.row(0), &[-1, 0, -1]);

        let empty = build_weak_label_matrix(&rs, &[], &ScoreSet::new()).unwrap();
        assert_eq!((empty.n(), empty.k()), (0, 3));
    }

    #[test]
    fn case_study_row() {
        let cat = ClassCatalog::new(["POSITIVE", "NEGATIVE"]).unwrap();
        let src = r#"
rule keyword_mood: HAS(["pleased"]) => POSITIVE
rule keyword_service: HAS(["friendly"]) => POSITIVE
rule keyword_general: HAS(["awful"]) => NEGATIVE
"#;
        let rs = parse_rules(src, &cat).unwrap();
        let review = "My husband tried this place. He was pleased with his experience and he \
            wanted to take me there for dinner. We started with calamari which was so greasy we \
            could hardly eat it...The bright light is the service. Friendly and attentive! The \
            staff made an awful dining experience somewhat tolerable.";
        let m = build_weak_label_matrix(&rs, &docs(&[review]), &ScoreSet::new()).unwrap();
        assert_eq!(m.row(0), &[0, 0, 1]);
    }

    #[test]
    fn missing_score_table_is_error() {
        let cat = ClassCatalog::new(["A", "B"]).unwrap();
        let rs = parse_rules(r#"rule p: EXTERNAL("polarity", > 0.5) => A"#, &cat).unwrap();
        assert!(build_weak_label_matrix(&rs, &docs(&["x"]), &ScoreSet::new()).is_err());
    }

    #[test]
    fn partition_examples() {
        let m = WeakLabelMatrix::from_rows(&[vec![-1, -1, 0], vec![-1, -1, -1]], 3, 2).unwrap();
        let p0 = partition_matched(&m, 0).unwrap();
        assert_eq!((p0.matched, p0.unmatched), (vec![0], vec![1]));
        let p1 = partition_matched(&m, 1).unwrap();
        assert_eq!((p1.matched, p1.unmatched), (vec![], vec![0, 1]));
        assert!(partition_matched(&m, 3).is_err());
    }

    #[test]
    fn stats_examples() {
        let m = WeakLabelMatrix::from_rows(
            &[vec![0, -1], vec![-1, -1], vec![1, -1], vec![-1, -1]],
            2,
            2,
        )
        .unwrap();
        let gold = [Some(0), Some(1), Some(1), Some(0)];
        let s = rule_stats(&m, Some(&gold));
        assert_eq!(s[0].coverage, 0.5);
        assert_eq!(s[0].accuracy, Some(1.0));
        assert_eq!(s[1].coverage, 0.0);
        assert_eq!(s[1].accuracy, None);
        assert_eq!(rule_stats(&m, None)[0].accuracy, None);
    }

    #[test]
    fn rejects_out_of_range_votes() {
        assert!(WeakLabelMatrix::from_rows(&[vec![2]], 1, 2).is_err());
        assert!(WeakLabelMatrix::from_rows(&[vec![-2]], 1, 2).is_err());
    }

    #[test]
    fn tsv_round_trip() {
        let d = docs(&["a", "b"]);
        let m = WeakLabelMatrix::from_rows(&[vec![1, -1], vec![-1, 0]], 2, 2).unwrap();
        let mut buf = Vec::new();
        m.write_tsv(&d, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "d0\t1\t-1\nd1\t-1\t0\n");
        assert_eq!(WeakLabelMatrix::read_tsv(&buf[..], &d, 2).unwrap(), m);
    }

    fn arb_matrix() -> impl Strategy<Value = WeakLabelMatrix> {
        (1usize..6, 2usize..5, 0usize..20).prop_flat_map(|(k, m, n)| {
            prop::collection::vec(-1i32..m as i32, n * k)
                .prop_map(move |v| WeakLabelMatrix::new(n, k, m, v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn partition_is_disjoint_cover(m in arb_matrix(), p_raw in 0usize..6) {
            let p = p_raw % m.k();
            let part = partition_matched(&m, p).unwrap();
            let mut all: Vec<usize> = part.matched.iter().chain(&part.unmatched).copied().collect();
            all.sort();
            prop_assert_eq!(all, (0..m.n()).collect::<Vec<_>>());
            for &i in &part.matched {
                prop_assert!(m.vote_count(i) > p);
            }
            for &i in &part.unmatched {
                prop_assert!(m.vote_count(i) <= p);
            }
            if p == m.k() - 1 {
                for &i in &part.matched {
                    prop_assert_eq!(m.vote_count(i), m.k());
                }
            }
        }

        #[test]
        fn columns_are_independent(texts in prop::collection::vec("[a-c ]{0,12}", 0..10), drop in 0usize..3) {
            let cat = ClassCatalog::new(["X", "Y"]).unwrap();
            let rules = vec![
                Rule::keyword("a", ["a"], 0).unwrap(),
                Rule::regex("b", "b+c", 1).unwrap(),
                Rule::length("c", crate::rules::Comparator::Ge, 2, 1),
            ];
            let d = docs(&texts.iter().map(String::as_str).collect::<Vec<_>>());
            let full = build_weak_label_matrix(&RuleSet::new(rules.clone(), &cat).unwrap(), &d, &ScoreSet::new()).unwrap();
            let mut fewer = rules;
            fewer.remove(drop);
            let kept: Vec<usize> = (0..3).filter(|&j| j != drop).collect();
            let partial = build_weak_label_matrix(&RuleSet::new(fewer, &cat).unwrap(), &d, &ScoreSet::new()).unwrap();
            prop_assert_eq!(partial, full.select_columns(&kept).unwrap());
        }
    }
}
