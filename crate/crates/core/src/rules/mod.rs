//! Labeling rules: the DSL, rule evaluation, and the weak-label matrix.

mod eval;
mod matrix;
mod parser;

use std::collections::HashSet;
use std::fmt;

use regex::{Regex, RegexBuilder};

use crate::corpus::ClassCatalog;
use crate::error::{Error, Result};

pub use eval::{evaluate_rule, tokenize_words};
pub use matrix::{
    build_weak_label_matrix, partition_matched, rule_stats, MatchPartition, RuleStats,
    WeakLabelMatrix, ABSTAIN,
};
pub use parser::parse_rules;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparator {
    Lt,
    Le,
    Gt,
    Ge,
}

impl Comparator {
    pub fn holds<T: PartialOrd>(self, lhs: T, rhs: T) -> bool {
        match self {
            Comparator::Lt => lhs < rhs,
            Comparator::Le => lhs <= rhs,
            Comparator::Gt => lhs > rhs,
            Comparator::Ge => lhs >= rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
        }
    }
}

/// A compiled case-insensitive regex that remembers its source pattern.
#[derive(Debug, Clone)]
pub struct Pattern {
    source: String,
    compiled: Regex,
}

impl Pattern {
    pub fn new(source: &str) -> Result<Self> {
        let compiled = RegexBuilder::new(source)
            .case_insensitive(true)
            .build()
            .map_err(|e| Error::Invalid(format!("invalid regex `{source}`: {e}")))?;
        Ok(Pattern {
            source: source.to_string(),
            compiled,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.source
    }

    pub fn is_match(&self, text: &str) -> bool {
        self.compiled.is_match(text)
    }
}

impl PartialEq for Pattern {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RuleKind {
    /// Fires when any keyword (possibly multi-word) occurs as a token sequence.
    Keyword(Vec<String>),
    Regex(Pattern),
    /// Compares the whitespace token count against `bound`.
    Length { cmp: Comparator, bound: u64 },
    /// Compares a precomputed per-document score against `threshold`.
    External {
        score: String,
        cmp: Comparator,
        threshold: f64,
    },
}

impl RuleKind {
    pub fn kind_name(&self) -> &'static str {
        match self {
            RuleKind::Keyword(_) => "HAS",
            RuleKind::Regex(_) => "MATCH",
            RuleKind::Length { .. } => "LENGTH",
            RuleKind::External { .. } => "EXTERNAL",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub name: String,
    pub kind: RuleKind,
    pub target: usize,
}

impl Rule {
    pub fn keyword<S: Into<String>>(
        name: &str,
        words: impl IntoIterator<Item = S>,
        target: usize,
    ) -> Result<Self> {
        let words: Vec<String> = words.into_iter().map(Into::into).collect();
        if words.is_empty() {
            return Err(Error::Invalid("empty keyword list".into()));
        }
        Ok(Rule {
            name: name.to_string(),
            kind: RuleKind::Keyword(words),
            target,
        })
    }

    pub fn regex(name: &str, pattern: &str, target: usize) -> Result<Self> {
        Ok(Rule {
            name: name.to_string(),
            kind: RuleKind::Regex(Pattern::new(pattern)?),
            target,
        })
    }

    pub fn length(name: &str, cmp: Comparator, bound: u64, target: usize) -> Self {
        Rule {
            name: name.to_string(),
            kind: RuleKind::Length { cmp, bound },
            target,
        }
    }

    pub fn external(name: &str, score: &str, cmp: Comparator, threshold: f64, target: usize) -> Self {
        Rule {
            name: name.to_string(),
            kind: RuleKind::External {
                score: score.to_string(),
                cmp,
                threshold,
            },
            target,
        }
    }
}

/// Ordered rules; position `j` is column `j` of the weak-label matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleSet {
    rules: Vec<Rule>,
    num_classes: usize,
}

impl RuleSet {
    pub fn new(rules: Vec<Rule>, catalog: &ClassCatalog) -> Result<Self> {
        if rules.is_empty() {
            return Err(Error::NoRules);
        }
        let mut names = HashSet::new();
        for r in &rules {
            if !names.insert(r.name.as_str()) {
                return Err(Error::Invalid(format!("duplicate rule name `{}`", r.name)));
            }
            if r.target >= catalog.len() {
                return Err(Error::UnknownClass(r.target.to_string()));
            }
            if let RuleKind::Keyword(words) = &r.kind {
                if words.is_empty() {
                    return Err(Error::Invalid("empty keyword list".into()));
                }
            }
        }
        Ok(RuleSet {
            rules,
            num_classes: catalog.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn names(&self) -> Vec<String> {
        self.rules.iter().map(|r| r.name.clone()).collect()
    }

    /// Renders the rules back into DSL source, one per line.
    pub fn to_source(&self, catalog: &ClassCatalog) -> String {
        let mut out = String::new();
        for r in &self.rules {
            out.push_str(&RuleDisplay { rule: r, catalog }.to_string());
            out.push('\n');
        }
        out
    }
}

struct RuleDisplay<'a> {
    rule: &'a Rule,
    catalog: &'a ClassCatalog,
}

fn quote(s: &str) -> String {
    let mut q = String::with_capacity(s.len() + 2);
    q.push('"');
    for c in s.chars() {
        match c {
            '"' => q.push_str("\\\""),
            '\\' => q.push_str("\\\\"),
            '\n' => q.push_str("\\n"),
            '\t' => q.push_str("\\t"),
            c => q.push(c),
        }
    }
    q.push('"');
    q
}

impl fmt::Display for RuleDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = self.rule;
        write!(f, "rule {}: ", r.name)?;
        match &r.kind {
            RuleKind::Keyword(words) => {
                let list: Vec<String> = words.iter().map(|w| quote(w)).collect();
                write!(f, "HAS([{}])", list.join(", "))?;
            }
            RuleKind::Regex(p) => write!(f, "MATCH({})", quote(p.as_str()))?,
            RuleKind::Length { cmp, bound } => write!(f, "LENGTH({} {bound})", cmp.symbol())?,
            RuleKind::External {
                score,
                cmp,
                threshold,
            } => write!(f, "EXTERNAL({}, {} {threshold:?})", quote(score), cmp.symbol())?,
        }
        let class = self.catalog.name(r.target).unwrap_or("?");
        write!(f, " => {class}")
    }
}
