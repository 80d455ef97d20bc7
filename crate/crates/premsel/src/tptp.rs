//! Parsing of the line-oriented `C`/`+`/`-` dataset format and
//! tokenization of TPTP first-order formulae, just deep enough to count
//! functor-symbol occurrences.
//!
//! A functor symbol is an identifier starting with a lowercase letter
//! (constants and predicate symbols included), a single-quoted atom, or a
//! numeric literal. Variables (uppercase or underscore start), `$`-defined
//! symbols, connectives, quantifiers, brackets and equality are not content;
//! neither are the `fof(...)` wrapper's name and role arguments.

use std::collections::{BTreeMap, HashSet};

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TptpError {
    #[error("input contains no conjecture blocks")]
    EmptyInput,
    #[error("line {line}: unknown prefix (expected \"C \", \"+ \" or \"- \")")]
    MalformedLine { line: usize },
    #[error("line {line}: axiom before any conjecture")]
    OrphanAxiom { line: usize },
    #[error("unterminated single-quoted atom at byte {pos}")]
    UnbalancedQuote { pos: usize },
    #[error("byte {byte:#04x} at {pos} is outside the TPTP token alphabet")]
    UnexpectedCharacter { byte: u8, pos: usize },
}

/// One dataset example: a conjecture with its useful (`+`) and redundant
/// (`-`) premises.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawExampleBlock {
    pub conjecture: String,
    pub positives: Vec<String>,
    pub negatives: Vec<String>,
}

impl RawExampleBlock {
    /// Number of axioms (positive and negative) attached to the conjecture.
    pub fn axiom_count(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }
}

/// Occurrence counts of functor symbols within one formula. Absent symbols
/// have count zero; stored counts are always at least one.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FunctorCounts {
    pub counts: BTreeMap<String, u32>,
}

impl FunctorCounts {
    pub fn total(&self) -> u64 {
        self.counts.values().map(|&c| c as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Parse the `C`/`+`/`-` stream: a `C` line opens a block, each following
/// `+`/`-` line attaches to it, blank lines are skipped.
pub fn parse_dataset_stream(text: &str) -> Result<Vec<RawExampleBlock>, TptpError> {
    let mut blocks: Vec<RawExampleBlock> = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = raw_line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let (prefix, rest) = match line.split_at_checked(2) {
            Some((p, rest)) => (p, rest.trim()),
            None => return Err(TptpError::MalformedLine { line: line_no }),
        };
        if rest.is_empty() {
            return Err(TptpError::MalformedLine { line: line_no });
        }
        match prefix {
            "C " => blocks.push(RawExampleBlock {
                conjecture: rest.to_string(),
                positives: Vec::new(),
                negatives: Vec::new(),
            }),
            "+ " => match blocks.last_mut() {
                Some(b) => b.positives.push(rest.to_string()),
                None => return Err(TptpError::OrphanAxiom { line: line_no }),
            },
            "- " => match blocks.last_mut() {
                Some(b) => b.negatives.push(rest.to_string()),
                None => return Err(TptpError::OrphanAxiom { line: line_no }),
            },
            _ => return Err(TptpError::MalformedLine { line: line_no }),
        }
    }
    if blocks.is_empty() {
        return Err(TptpError::EmptyInput);
    }
    Ok(blocks)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Token {
    /// Identifier starting with a lowercase letter.
    Lower(String),
    /// Variable: identifier starting with an uppercase letter or underscore.
    Upper(String),
    /// Single-quoted atom. Atoms whose content is a plain lower word are
    /// normalized to `Lower`; otherwise the quotes stay part of the symbol.
    Quoted(String),
    /// `$`- or `$$`-prefixed defined symbol, e.g. `$true`.
    Defined(String),
    /// Integer, rational or real literal, sign included.
    Number(String),
    /// Connectives, quantifiers, brackets and separators.
    Punct(&'static str),
}

impl Token {
    /// The symbol string when this token names a functor, else `None`.
    pub fn functor(&self) -> Option<&str> {
        match self {
            Token::Lower(s) | Token::Quoted(s) | Token::Number(s) => Some(s),
            _ => None,
        }
    }
}

/// Tokenize one TPTP formula. `%` starts a comment running to the end of
/// the input line.
pub fn tokenize(formula: &str) -> Result<Vec<Token>, TptpError> {
    let bytes = formula.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b' ' | b'\t' | b'\r' | b'\n' => i += 1,
            b'%' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'a'..=b'z' => {
                let start = i;
                i = scan_word(bytes, i);
                tokens.push(Token::Lower(formula[start..i].to_string()));
            }
            b'A'..=b'Z' | b'_' => {
                let start = i;
                i = scan_word(bytes, i);
                tokens.push(Token::Upper(formula[start..i].to_string()));
            }
            b'0'..=b'9' => {
                let start = i;
                i = scan_number(bytes, i);
                tokens.push(Token::Number(formula[start..i].to_string()));
            }
            b'+' | b'-' => {
                // Signs occur only as part of numeric literals in FOF.
                if i + 1 < bytes.len() && bytes[i + 1].is_ascii_digit() {
                    let start = i;
                    i = scan_number(bytes, i + 1);
                    tokens.push(Token::Number(formula[start..i].to_string()));
                } else {
                    return Err(TptpError::UnexpectedCharacter { byte: b, pos: i });
                }
            }
            b'\'' => {
                let start = i;
                i += 1;
                let content_start = i;
                loop {
                    if i >= bytes.len() {
                        return Err(TptpError::UnbalancedQuote { pos: start });
                    }
                    match bytes[i] {
                        b'\\' => i += 2,
                        b'\'' => break,
                        _ => i += 1,
                    }
                }
                if i > bytes.len() {
                    // A trailing backslash escaped past the end.
                    return Err(TptpError::UnbalancedQuote { pos: start });
                }
                let content = &formula[content_start..i];
                i += 1;
                if is_lower_word(content) {
                    tokens.push(Token::Lower(content.to_string()));
                } else {
                    tokens.push(Token::Quoted(formula[start..i].to_string()));
                }
            }
            b'$' => {
                let start = i;
                i += 1;
                if i < bytes.len() && bytes[i] == b'$' {
                    i += 1;
                }
                if i >= bytes.len() || !bytes[i].is_ascii_lowercase() {
                    return Err(TptpError::UnexpectedCharacter {
                        byte: b,
                        pos: start,
                    });
                }
                i = scan_word(bytes, i);
                tokens.push(Token::Defined(formula[start..i].to_string()));
            }
            b'(' => push_punct(&mut tokens, "(", &mut i, 1),
            b')' => push_punct(&mut tokens, ")", &mut i, 1),
            b'[' => push_punct(&mut tokens, "[", &mut i, 1),
            b']' => push_punct(&mut tokens, "]", &mut i, 1),
            b',' => push_punct(&mut tokens, ",", &mut i, 1),
            b'.' => push_punct(&mut tokens, ".", &mut i, 1),
            b':' => push_punct(&mut tokens, ":", &mut i, 1),
            b'&' => push_punct(&mut tokens, "&", &mut i, 1),
            b'|' => push_punct(&mut tokens, "|", &mut i, 1),
            b'?' => push_punct(&mut tokens, "?", &mut i, 1),
            b'!' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    push_punct(&mut tokens, "!=", &mut i, 2);
                } else {
                    push_punct(&mut tokens, "!", &mut i, 1);
                }
            }
            b'~' => match bytes.get(i + 1) {
                Some(&b'&') => push_punct(&mut tokens, "~&", &mut i, 2),
                Some(&b'|') => push_punct(&mut tokens, "~|", &mut i, 2),
                _ => push_punct(&mut tokens, "~", &mut i, 1),
            },
            b'=' => {
                if bytes.get(i + 1) == Some(&b'>') {
                    push_punct(&mut tokens, "=>", &mut i, 2);
                } else {
                    push_punct(&mut tokens, "=", &mut i, 1);
                }
            }
            b'<' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    if bytes.get(i + 2) == Some(&b'>') {
                        push_punct(&mut tokens, "<=>", &mut i, 3);
                    } else {
                        push_punct(&mut tokens, "<=", &mut i, 2);
                    }
                } else if bytes.get(i + 1) == Some(&b'~') && bytes.get(i + 2) == Some(&b'>') {
                    push_punct(&mut tokens, "<~>", &mut i, 3);
                } else {
                    return Err(TptpError::UnexpectedCharacter { byte: b, pos: i });
                }
            }
            _ => return Err(TptpError::UnexpectedCharacter { byte: b, pos: i }),
        }
    }
    Ok(tokens)
}

fn push_punct(tokens: &mut Vec<Token>, p: &'static str, i: &mut usize, len: usize) {
    tokens.push(Token::Punct(p));
    *i += len;
}

fn scan_word(bytes: &[u8], mut i: usize) -> usize {
    while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
        i += 1;
    }
    i
}

/// Consume the remainder of a numeric literal whose first digit is at `i`:
/// integer, rational `a/b`, or real with fraction and/or exponent.
fn scan_number(bytes: &[u8], mut i: usize) -> usize {
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    if i < bytes.len() && bytes[i] == b'/' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit) {
        i += 1;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        return i;
    }
    if i < bytes.len() && bytes[i] == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit) {
        i += 1;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
    }
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        if j < bytes.len() && bytes[j].is_ascii_digit() {
            i = j;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
        }
    }
    i
}

fn is_lower_word(s: &str) -> bool {
    let bytes = s.as_bytes();
    match bytes.first() {
        Some(b'a'..=b'z') => bytes[1..]
            .iter()
            .all(|&b| b.is_ascii_alphanumeric() || b == b'_'),
        _ => false,
    }
}

/// Count functor-symbol occurrences in one formula.
///
/// When the formula is wrapped as `fof(name, role, body [, annotations]).`
/// (or `cnf`), only the body is counted; the name and role are metadata.
/// Unwrapped input is counted in full.
pub fn extract_functors(formula: &str) -> Result<FunctorCounts, TptpError> {
    let tokens = tokenize(formula)?;
    let mut counts = BTreeMap::new();
    for token in body_tokens(&tokens) {
        if let Some(symbol) = token.functor() {
            *counts.entry(symbol.to_string()).or_insert(0) += 1;
        }
    }
    Ok(FunctorCounts { counts })
}

/// The slice of tokens forming the formula body: the third argument of a
/// `fof`/`cnf` wrapper when present, otherwise the whole token list.
pub(crate) fn body_tokens(tokens: &[Token]) -> &[Token] {
    let wrapped = matches!(tokens.first(), Some(Token::Lower(w)) if w == "fof" || w == "cnf")
        && matches!(tokens.get(1), Some(Token::Punct("(")))
        && tokens.get(2).is_some() // name: any single token
        && matches!(tokens.get(3), Some(Token::Punct(",")))
        && matches!(tokens.get(4), Some(Token::Lower(_)))
        && matches!(tokens.get(5), Some(Token::Punct(",")));
    if !wrapped {
        return tokens;
    }
    let body_start = 6;
    let mut parens = 1usize; // inside the wrapper's parenthesis
    let mut brackets = 0usize;
    for (offset, token) in tokens[body_start..].iter().enumerate() {
        match token {
            Token::Punct("(") => parens += 1,
            Token::Punct(")") => {
                parens -= 1;
                if parens == 0 {
                    return &tokens[body_start..body_start + offset];
                }
            }
            Token::Punct("[") => brackets += 1,
            Token::Punct("]") => brackets = brackets.saturating_sub(1),
            // A separator at wrapper depth (outside any variable list)
            // ends the body; annotations follow.
            Token::Punct(",") if parens == 1 && brackets == 0 => {
                return &tokens[body_start..body_start + offset];
            }
            _ => {}
        }
    }
    &tokens[body_start..]
}

/// Corpus-level statistics over parsed blocks.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CorpusStats {
    pub blocks: usize,
    pub unique_formulae: usize,
    pub pairs: usize,
    pub min_axioms: usize,
    pub mean_axioms: f64,
    pub max_axioms: usize,
}

pub fn corpus_statistics(blocks: &[RawExampleBlock]) -> Result<CorpusStats, TptpError> {
    if blocks.is_empty() {
        return Err(TptpError::EmptyInput);
    }
    let mut unique: HashSet<&str> = HashSet::new();
    let mut pairs = 0usize;
    let mut min_axioms = usize::MAX;
    let mut max_axioms = 0usize;
    for block in blocks {
        unique.insert(&block.conjecture);
        for f in block.positives.iter().chain(&block.negatives) {
            unique.insert(f);
        }
        let axioms = block.axiom_count();
        pairs += axioms;
        min_axioms = min_axioms.min(axioms);
        max_axioms = max_axioms.max(axioms);
    }
    Ok(CorpusStats {
        blocks: blocks.len(),
        unique_formulae: unique.len(),
        pairs,
        min_axioms,
        mean_axioms: pairs as f64 / blocks.len() as f64,
        max_axioms,
    })
}
