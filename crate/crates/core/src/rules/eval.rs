use super::{Rule, RuleKind};
use crate::corpus::{Document, ScoreSet};

/// Lowercased alphanumeric runs; everything else separates tokens.
pub fn tokenize_words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn contains_sequence(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

pub(crate) struct PreparedDoc<'a> {
    pub doc: &'a Document,
    pub tokens: Vec<String>,
    pub whitespace_len: u64,
}

impl<'a> PreparedDoc<'a> {
    pub fn new(doc: &'a Document) -> Self {
        PreparedDoc {
            doc,
            tokens: tokenize_words(&doc.text),
            whitespace_len: doc.text.split_whitespace().count() as u64,
        }
    }
}

pub(crate) fn evaluate_prepared(rule: &Rule, prepared: &PreparedDoc<'_>, scores: &ScoreSet) -> bool {
    match &rule.kind {
        RuleKind::Keyword(words) => words
            .iter()
            .any(|w| contains_sequence(&prepared.tokens, &tokenize_words(w))),
        RuleKind::Regex(p) => p.is_match(&prepared.doc.text),
        RuleKind::Length { cmp, bound } => cmp.holds(prepared.whitespace_len, *bound),
        RuleKind::External {
            score,
            cmp,
            threshold,
        } => scores
            .get(score)
            .and_then(|t| t.get(&prepared.doc.id))
            .is_some_and(|v| cmp.holds(v, *threshold)),
    }
}

/// Returns the rule's target class when it fires on `doc`, or -1.
///
/// A missing score table or a document without a score abstains.
pub fn evaluate_rule(rule: &Rule, doc: &Document, scores: &ScoreSet) -> i32 {
    if evaluate_prepared(rule, &PreparedDoc::new(doc), scores) {
        rule.target as i32
    } else {
        super::ABSTAIN
    }
}
