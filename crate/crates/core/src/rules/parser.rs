//! Line-oriented recursive-descent parser for the rule DSL:
//!
//! ```text
//! rule <name> ":" <body> "=>" <CLASS>
//! body := HAS "(" "[" string ("," string)* "]" ")"
//!       | MATCH "(" string ")"
//!       | LENGTH "(" cmp integer ")"
//!       | EXTERNAL "(" string "," cmp real ")"
//! cmp  := "<" | "<=" | ">" | ">="
//! ```
//!
//! `#` starts a comment that runs to the end of the line.

use super::{Comparator, Pattern, Rule, RuleKind, RuleSet};
use crate::corpus::ClassCatalog;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Number(String),
    Op(String),
    Colon,
    Comma,
    LParen,
    RParen,
    LBracket,
    RBracket,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    col: usize,
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Str(s) => format!("string \"{s}\""),
        Tok::Number(s) => format!("number {s}"),
        Tok::Op(s) => format!("`{s}`"),
        Tok::Colon => "`:`".into(),
        Tok::Comma => "`,`".into(),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::LBracket => "`[`".into(),
        Tok::RBracket => "`]`".into(),
    }
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '-' || c == '.'
}

fn lex_line(line: &str, lineno: usize) -> Result<Vec<Spanned>> {
    let err = |col: usize, message: String| Error::Syntax {
        line: lineno,
        column: col,
        message,
    };
    let chars: Vec<char> = line.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        match c {
            '#' => break,
            c if c.is_whitespace() => i += 1,
            ':' => {
                toks.push(Spanned { tok: Tok::Colon, col });
                i += 1;
            }
            ',' => {
                toks.push(Spanned { tok: Tok::Comma, col });
                i += 1;
            }
            '(' => {
                toks.push(Spanned { tok: Tok::LParen, col });
                i += 1;
            }
            ')' => {
                toks.push(Spanned { tok: Tok::RParen, col });
                i += 1;
            }
            '[' => {
                toks.push(Spanned { tok: Tok::LBracket, col });
                i += 1;
            }
            ']' => {
                toks.push(Spanned { tok: Tok::RBracket, col });
                i += 1;
            }
            '"' => {
                let mut s = String::new();
                i += 1;
                loop {
                    match chars.get(i) {
                        None => return Err(err(col, "unterminated string".into())),
                        Some('"') => {
                            i += 1;
                            break;
                        }
                        Some('\\') => {
                            let esc = match chars.get(i + 1) {
                                Some('"') => '"',
                                Some('\\') => '\\',
                                Some('n') => '\n',
                                Some('t') => '\t',
                                Some(other) => {
                                    return Err(err(i + 1, format!("unknown escape `\\{other}`")))
                                }
                                None => return Err(err(col, "unterminated string".into())),
                            };
                            s.push(esc);
                            i += 2;
                        }
                        Some(&ch) => {
                            s.push(ch);
                            i += 1;
                        }
                    }
                }
                toks.push(Spanned { tok: Tok::Str(s), col });
            }
            '<' | '>' | '=' | '!' => {
                let start = i;
                while i < chars.len() && matches!(chars[i], '<' | '>' | '=' | '!') {
                    i += 1;
                }
                let op: String = chars[start..i].iter().collect();
                toks.push(Spanned { tok: Tok::Op(op), col });
            }
            c if c.is_ascii_digit() || c == '-' || c == '+' => {
                let start = i;
                i += 1;
                while i < chars.len() {
                    let d = chars[i];
                    let exp_sign = (d == '-' || d == '+') && matches!(chars[i - 1], 'e' | 'E');
                    if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                        i += 1;
                    } else {
                        break;
                    }
                }
                let text: String = chars[start..i].iter().collect();
                toks.push(Spanned {
                    tok: Tok::Number(text),
                    col,
                });
            }
            c if is_ident_char(c) => {
                let start = i;
                while i < chars.len() && is_ident_char(chars[i]) {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                toks.push(Spanned {
                    tok: Tok::Ident(text),
                    col,
                });
            }
            other => return Err(err(col, format!("unexpected character `{other}`"))),
        }
    }
    Ok(toks)
}

struct LineParser<'a> {
    toks: Vec<Spanned>,
    pos: usize,
    line: usize,
    end_col: usize,
    catalog: &'a ClassCatalog,
}

impl<'a> LineParser<'a> {
    fn error(&self, col: usize, message: impl Into<String>) -> Error {
        Error::Syntax {
            line: self.line,
            column: col,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<&Spanned> {
        self.toks.get(self.pos)
    }

    fn col(&self) -> usize {
        self.peek().map_or(self.end_col, |t| t.col)
    }

    fn next(&mut self, what: &str) -> Result<Spanned> {
        match self.toks.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(t.clone())
            }
            None => Err(self.error(self.end_col, format!("expected {what}, found end of line"))),
        }
    }

    fn expect(&mut self, want: Tok) -> Result<()> {
        let what = describe(&want);
        let t = self.next(&what)?;
        if t.tok == want {
            Ok(())
        } else {
            Err(self.error(t.col, format!("expected {what}, found {}", describe(&t.tok))))
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, usize)> {
        let t = self.next(what)?;
        match t.tok {
            Tok::Ident(s) => Ok((s, t.col)),
            other => Err(self.error(t.col, format!("expected {what}, found {}", describe(&other)))),
        }
    }

    fn string(&mut self) -> Result<(String, usize)> {
        let t = self.next("string")?;
        match t.tok {
            Tok::Str(s) => Ok((s, t.col)),
            other => Err(self.error(t.col, format!("expected string, found {}", describe(&other)))),
        }
    }

    fn comparator(&mut self) -> Result<Comparator> {
        let t = self.next("comparator")?;
        match &t.tok {
            Tok::Op(op) => match op.as_str() {
                "<" => Ok(Comparator::Lt),
                "<=" => Ok(Comparator::Le),
                ">" => Ok(Comparator::Gt),
                ">=" => Ok(Comparator::Ge),
                other => Err(self.error(t.col, format!("unknown comparator `{other}`"))),
            },
            other => Err(self.error(t.col, format!("expected comparator, found {}", describe(other)))),
        }
    }

    fn number(&mut self) -> Result<(String, usize)> {
        let t = self.next("number")?;
        match t.tok {
            Tok::Number(s) => Ok((s, t.col)),
            other => Err(self.error(t.col, format!("expected number, found {}", describe(&other)))),
        }
    }

    fn rule(&mut self) -> Result<Rule> {
        let (kw, col) = self.ident("`rule`")?;
        if kw != "rule" {
            return Err(self.error(col, format!("expected `rule`, found `{kw}`")));
        }
        let (name, _) = self.ident("rule name")?;
        self.expect(Tok::Colon)?;
        let kind = self.body()?;
        let arrow_col = self.col();
        match self.next("`=>`")?.tok {
            Tok::Op(op) if op == "=>" => {}
            other => {
                return Err(self.error(arrow_col, format!("expected `=>`, found {}", describe(&other))))
            }
        }
        let (class, class_col) = self.ident("class name")?;
        let target = self.catalog.index_of(&class).ok_or_else(|| {
            self.error(class_col, format!("unknown class `{class}`"))
        })?;
        if let Some(extra) = self.peek() {
            return Err(self.error(extra.col, format!("unexpected {}", describe(&extra.tok))));
        }
        Ok(Rule { name, kind, target })
    }

    fn body(&mut self) -> Result<RuleKind> {
        let (head, col) = self.ident("rule body")?;
        self.expect(Tok::LParen)?;
        let kind = match head.as_str() {
            "HAS" => {
                let open = self.col();
                self.expect(Tok::LBracket)?;
                let mut words = Vec::new();
                if matches!(self.peek(), Some(Spanned { tok: Tok::RBracket, .. })) {
                    return Err(self.error(open, "empty keyword list"));
                }
                loop {
                    let (w, wcol) = self.string()?;
                    if w.trim().is_empty() {
                        return Err(self.error(wcol, "empty keyword"));
                    }
                    words.push(w);
                    let t = self.next("`,` or `]`")?;
                    match t.tok {
                        Tok::Comma => continue,
                        Tok::RBracket => break,
                        other => {
                            return Err(self.error(
                                t.col,
                                format!("expected `,` or `]`, found {}", describe(&other)),
                            ))
                        }
                    }
                }
                RuleKind::Keyword(words)
            }
            "MATCH" => {
                let (pat, pcol) = self.string()?;
                let pattern = Pattern::new(&pat).map_err(|e| self.error(pcol, e.to_string()))?;
                RuleKind::Regex(pattern)
            }
            "LENGTH" => {
                let cmp = self.comparator()?;
                let (num, ncol) = self.number()?;
                let bound: u64 = num
                    .parse()
                    .map_err(|_| self.error(ncol, format!("expected nonnegative integer, found `{num}`")))?;
                RuleKind::Length { cmp, bound }
            }
            "EXTERNAL" => {
                let (score, _) = self.string()?;
                self.expect(Tok::Comma)?;
                let cmp = self.comparator()?;
                let (num, ncol) = self.number()?;
                let threshold: f64 = num
                    .parse()
                    .ok()
                    .filter(|v: &f64| v.is_finite())
                    .ok_or_else(|| self.error(ncol, format!("expected real number, found `{num}`")))?;
                RuleKind::External {
                    score,
                    cmp,
                    threshold,
                }
            }
            other => {
                return Err(self.error(
                    col,
                    format!("unknown rule form `{other}` (expected HAS, MATCH, LENGTH or EXTERNAL)"),
                ))
            }
        };
        self.expect(Tok::RParen)?;
        Ok(kind)
    }
}

/// Parses DSL source into a rule set. Rule order is file order.
pub fn parse_rules(source: &str, catalog: &ClassCatalog) -> Result<RuleSet> {
    let mut rules: Vec<Rule> = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let lineno = idx + 1;
        let toks = lex_line(line, lineno)?;
        if toks.is_empty() {
            continue;
        }
        let mut p = LineParser {
            toks,
            pos: 0,
            line: lineno,
            end_col: line.chars().count() + 1,
            catalog,
        };
        let rule = p.rule()?;
        if rules.iter().any(|r| r.name == rule.name) {
            return Err(Error::Syntax {
                line: lineno,
                column: 1,
                message: format!("duplicate rule name `{}`", rule.name),
            });
        }
        rules.push(rule);
    }
    RuleSet::new(rules, catalog)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn youtube() -> ClassCatalog {
        ClassCatalog::new(["SPAM", "HAM"]).unwrap()
    }

    fn single(src: &str) -> Rule {
        parse_rules(src, &youtube()).unwrap().rules()[0].clone()
    }

    fn syntax_message(src: &str) -> (usize, usize, String) {
        match parse_rules(src, &youtube()) {
            Err(Error::Syntax {
                line,
                column,
                message,
            }) => (line, column, message),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn keyword_rule() {
        let r = single(r#"rule r_sub: HAS(["subscribe"]) => SPAM"#);
        assert_eq!(r.name, "r_sub");
        assert_eq!(r.kind, RuleKind::Keyword(vec!["subscribe".into()]));
        assert_eq!(r.target, 0);
    }

    #[test]
    fn regex_rule() {
        let r = single(r#"rule r_co: MATCH("check.*out") => SPAM"#);
        match r.kind {
            RuleKind::Regex(p) => assert_eq!(p.as_str(), "check.*out"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn length_rule() {
        let r = single("rule r_short: LENGTH(< 5) => HAM");
        assert_eq!(
            r.kind,
            RuleKind::Length {
                cmp: Comparator::Lt,
                bound: 5
            }
        );
        assert_eq!(r.target, 1);
    }

    #[test]
    fn external_rule() {
        let r = single(r#"rule pol: EXTERNAL("polarity", > 0.9) => HAM"#);
        assert_eq!(
            r.kind,
            RuleKind::External {
                score: "polarity".into(),
                cmp: Comparator::Gt,
                threshold: 0.9
            }
        );
    }

    #[test]
    fn comments_and_blank_lines() {
        let src = "# youtube rules\n\nrule a: HAS([\"my\"]) => SPAM # trailing\n  \nrule b: LENGTH(>= 3) => HAM\n";
        let rs = parse_rules(src, &youtube()).unwrap();
        assert_eq!(rs.names(), vec!["a", "b"]);
    }

    #[test]
    fn empty_keyword_list_is_error() {
        let cat = ClassCatalog::new(["POS", "NEG"]).unwrap();
        let err = parse_rules("rule bad: HAS([]) => POS", &cat).unwrap_err();
        assert!(err.to_string().contains("empty keyword list"), "{err}");
    }

    #[test]
    fn errors_carry_positions() {
        let (line, col, msg) = syntax_message("rule a: HAS([\"x\"]) => SPAM\nrule b: HAS([\"y\"]) => EGGS");
        assert_eq!((line, col), (2, 23));
        assert!(msg.contains("unknown class"));

        let (_, col, msg) = syntax_message("rule a: LENGTH(== 5) => HAM");
        assert_eq!(col, 16);
        assert!(msg.contains("unknown comparator"));

        let (_, _, msg) = syntax_message("rule a: MATCH(\"(unclosed\") => HAM");
        assert!(msg.contains("invalid regex"));

        let (_, _, msg) = syntax_message("rule a: HAS([\"x\"] => HAM");
        assert!(msg.contains("expected `)`"));

        let (_, _, msg) = syntax_message("rule a: FOO(\"x\") => HAM");
        assert!(msg.contains("unknown rule form"));

        let (_, _, msg) = syntax_message("rule a: LENGTH(< -1) => HAM");
        assert!(msg.contains("nonnegative"));

        let (_, _, msg) = syntax_message("rule a: HAS([\"x\"]) => HAM extra");
        assert!(msg.contains("unexpected"));

        let (_, _, msg) = syntax_message("rule a: HAS([\"x\"]) =>");
        assert!(msg.contains("end of line"));
    }

    #[test]
    fn empty_source_has_no_rules() {
        assert!(matches!(
            parse_rules("# nothing here\n", &youtube()),
            Err(Error::NoRules)
        ));
    }

    #[test]
    fn duplicate_names_rejected() {
        let src = "rule a: LENGTH(< 5) => HAM\nrule a: LENGTH(> 5) => SPAM";
        assert!(parse_rules(src, &youtube()).is_err());
    }

    #[test]
    fn escapes_round_trip() {
        let src = r#"rule q: HAS(["say \"hi\"", "back\\slash"]) => HAM"#;
        let rs = parse_rules(src, &youtube()).unwrap();
        assert_eq!(
            rs.rules()[0].kind,
            RuleKind::Keyword(vec!["say \"hi\"".into(), "back\\slash".into()])
        );
        assert_eq!(parse_rules(&rs.to_source(&youtube()), &youtube()).unwrap(), rs);
    }

    fn arb_rule(idx: usize) -> impl Strategy<Value = Rule> {
        let name = format!("r{idx}");
        let cmp = prop_oneof![
            Just(Comparator::Lt),
            Just(Comparator::Le),
            Just(Comparator::Gt),
            Just(Comparator::Ge)
        ];
        let kw = prop::collection::vec("[a-z\"\\\\ ]{0,6}[a-z]", 1..4).prop_map(RuleKind::Keyword);
        let re = prop_oneof![Just("check.*out"), Just("^a+b?$"), Just("(x|y)\\d")]
            .prop_map(|p| RuleKind::Regex(Pattern::new(p).unwrap()));
        let len = (cmp.clone(), 0u64..1000).prop_map(|(cmp, bound)| RuleKind::Length { cmp, bound });
        let ext = ("[a-z_]{1,8}", cmp, -1e6f64..1e6).prop_map(|(score, cmp, threshold)| {
            RuleKind::External {
                score,
                cmp,
                threshold,
            }
        });
        (prop_oneof![kw, re, len, ext], 0usize..2).prop_map(move |(kind, target)| Rule {
            name: name.clone(),
            kind,
            target,
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(rules in (1usize..6).prop_flat_map(|k| {
            (0..k).map(arb_rule).collect::<Vec<_>>()
        })) {
            let cat = youtube();
            let rs = RuleSet::new(rules, &cat).unwrap();
            let src = rs.to_source(&cat);
            let back = parse_rules(&src, &cat).unwrap();
            prop_assert_eq!(back, rs);
        }
    }
}
