//! BNF grammars and the dynamic structured (DSGE) genotype mapping.

mod dsge;

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

pub use dsge::{random_genotype, Decoder, Derivation, Genotype, Limits, TraceStep, CODON_MAX};

/// The grammar shipped with the library.
pub const DEFAULT_GRAMMAR: &str = include_str!("../../data/grammar.bnf");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        ParseError {
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Symbol {
    Terminal(String),
    NonTerminal(usize),
}

#[derive(Debug, Clone)]
pub struct Rule {
    pub name: String,
    pub alternatives: Vec<Vec<Symbol>>,
    line: usize,
}

#[derive(Debug, Clone)]
pub struct Grammar {
    rules: Vec<Rule>,
    by_name: HashMap<String, usize>,
    /// `recursive[r][a]`: alternative `a` of rule `r` can derive rule `r` again.
    recursive: Vec<Vec<bool>>,
}

impl Grammar {
    pub fn default_grammar() -> Self {
        parse_bnf(DEFAULT_GRAMMAR).expect("shipped grammar parses")
    }

    /// The start rule is the first rule in the text.
    pub fn start(&self) -> usize {
        0
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn rule(&self, index: usize) -> &Rule {
        &self.rules[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn nonterminal_count(&self) -> usize {
        self.rules.len()
    }

    pub fn is_recursive_alternative(&self, rule: usize, alternative: usize) -> bool {
        self.recursive[rule][alternative]
    }

    pub fn is_recursive_rule(&self, rule: usize) -> bool {
        self.recursive[rule].iter().any(|&r| r)
    }

    /// First alternative of `rule` that cannot recurse back into it.
    pub fn first_non_recursive(&self, rule: usize) -> Option<usize> {
        self.recursive[rule].iter().position(|&r| !r)
    }
}

impl fmt::Display for Grammar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for rule in &self.rules {
            write!(f, "<{}> ::=", rule.name)?;
            for (i, alt) in rule.alternatives.iter().enumerate() {
                if i > 0 {
                    f.write_str(" |")?;
                }
                for sym in alt {
                    match sym {
                        Symbol::Terminal(t) => write!(f, " {t}")?,
                        Symbol::NonTerminal(n) => write!(f, " <{}>", self.rules[*n].name)?,
                    }
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Parses BNF text: `<name> ::= alt | alt ...`, rules may continue over
/// several lines, `#` starts a comment.
pub fn parse_bnf(text: &str) -> Result<Grammar, ParseError> {
    // (name, line, body)
    let mut raw: Vec<(String, usize, String)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some((lhs, rhs)) = line.split_once("::=") {
            let name = parse_lhs(lhs.trim(), lineno)?;
            raw.push((name, lineno, rhs.to_string()));
        } else {
            match raw.last_mut() {
                Some((_, _, body)) => {
                    body.push(' ');
                    body.push_str(line);
                }
                None => return Err(ParseError::new(lineno, "text before the first rule")),
            }
        }
    }
    if raw.is_empty() {
        return Err(ParseError::new(1, "grammar has no rules"));
    }

    let mut by_name = HashMap::new();
    for (idx, (name, line, _)) in raw.iter().enumerate() {
        if by_name.insert(name.clone(), idx).is_some() {
            return Err(ParseError::new(*line, format!("duplicate rule for <{name}>")));
        }
    }

    let mut rules = Vec::with_capacity(raw.len());
    for (name, line, body) in &raw {
        let mut alternatives = Vec::new();
        for alt in body.split('|') {
            if alt.trim().is_empty() {
                return Err(ParseError::new(*line, format!("empty alternative in <{name}>")));
            }
            alternatives.push(parse_alternative(alt, *line, &by_name)?);
        }
        rules.push(Rule {
            name: name.clone(),
            alternatives,
            line: *line,
        });
    }

    let recursive = recursion_table(&rules);
    let grammar = Grammar {
        rules,
        by_name,
        recursive,
    };
    for (r, rule) in grammar.rules.iter().enumerate() {
        if grammar.first_non_recursive(r).is_none() {
            return Err(ParseError::new(
                rule.line,
                format!("<{}> has no non-recursive alternative", rule.name),
            ));
        }
    }
    Ok(grammar)
}

fn parse_lhs(lhs: &str, line: usize) -> Result<String, ParseError> {
    let name = lhs
        .strip_prefix('<')
        .and_then(|s| s.strip_suffix('>'))
        .filter(|s| !s.is_empty() && !s.contains(['<', '>']))
        .ok_or_else(|| ParseError::new(line, format!("malformed rule name `{lhs}`")))?;
    Ok(name.to_string())
}

fn parse_alternative(text: &str, line: usize, by_name: &HashMap<String, usize>) -> Result<Vec<Symbol>, ParseError> {
    let mut symbols = Vec::new();
    let mut rest = text;
    while !rest.is_empty() {
        match rest.find('<') {
            Some(open) => {
                push_terminals(&rest[..open], &mut symbols);
                let close = rest[open..]
                    .find('>')
                    .map(|c| open + c)
                    .ok_or_else(|| ParseError::new(line, "unterminated `<`"))?;
                let name = &rest[open + 1..close];
                let idx = by_name
                    .get(name)
                    .copied()
                    .ok_or_else(|| ParseError::new(line, format!("undefined nonterminal <{name}>")))?;
                symbols.push(Symbol::NonTerminal(idx));
                rest = &rest[close + 1..];
            }
            None => {
                push_terminals(rest, &mut symbols);
                rest = "";
            }
        }
    }
    Ok(symbols)
}

fn push_terminals(text: &str, out: &mut Vec<Symbol>) {
    out.extend(text.split_whitespace().map(|t| Symbol::Terminal(t.to_string())));
}

#[allow(clippy::needless_range_loop)]
fn recursion_table(rules: &[Rule]) -> Vec<Vec<bool>> {
    let n = rules.len();
    // reach[a][b]: rule b is derivable from rule a in one or more steps.
    let mut reach = vec![vec![false; n]; n];
    for (a, rule) in rules.iter().enumerate() {
        for alt in &rule.alternatives {
            for sym in alt {
                if let Symbol::NonTerminal(b) = sym {
                    reach[a][*b] = true;
                }
            }
        }
    }
    for k in 0..n {
        for a in 0..n {
            if reach[a][k] {
                for b in 0..n {
                    if reach[k][b] {
                        reach[a][b] = true;
                    }
                }
            }
        }
    }
    rules
        .iter()
        .enumerate()
        .map(|(r, rule)| {
            rule.alternatives
                .iter()
                .map(|alt| {
                    alt.iter().any(|sym| match sym {
                        Symbol::NonTerminal(m) => *m == r || reach[*m][r],
                        Symbol::Terminal(_) => false,
                    })
                })
                .collect()
        })
        .collect()
}
