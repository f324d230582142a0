//! Annotated sentences: tokens, targets with evoked frames, and frame-element
//! fillers. This is both the gold input for training and the parser's output.
//!
//! Offsets on tokens are in Unicode scalar values (chars) into `text`. Target
//! and filler spans are half-open token ranges.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::jsonl::{read_jsonl, JsonlError};
use crate::lexicon::FrameLexicon;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn new(text: impl Into<String>, start: usize, end: usize) -> Self {
        Self {
            text: text.into(),
            start,
            end,
        }
    }
}

/// Splits pre-segmented text on whitespace, recording char offsets.
pub fn tokenize_whitespace(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    let mut pos = 0;
    for c in text.chars() {
        if c.is_whitespace() {
            if !current.is_empty() {
                tokens.push(Token::new(std::mem::take(&mut current), start, pos));
            }
        } else {
            if current.is_empty() {
                start = pos;
            }
            current.push(c);
        }
        pos += 1;
    }
    if !current.is_empty() {
        tokens.push(Token::new(current, start, pos));
    }
    tokens
}

/// Checks that tokens are non-empty, ordered and non-overlapping.
pub fn tokens_well_formed(tokens: &[Token]) -> bool {
    tokens.iter().all(|t| t.start < t.end) && tokens.windows(2).all(|w| w[0].end <= w[1].start)
}

/// Surface string of a token span. Adjacent tokens are concatenated, tokens
/// separated by a gap in the source are joined with one space.
pub fn span_surface(tokens: &[Token], start: usize, end: usize) -> String {
    let mut out = String::new();
    for (i, t) in tokens[start..end].iter().enumerate() {
        if i > 0 && tokens[start + i - 1].end < t.start {
            out.push(' ');
        }
        out.push_str(&t.text);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeFiller {
    pub start: usize,
    pub end: usize,
    pub fe_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetAnnotation {
    pub start: usize,
    pub end: usize,
    #[serde(default)]
    pub lu_id: Option<String>,
    pub frame_id: String,
    #[serde(default)]
    pub fes: Vec<FeFiller>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedSentence {
    pub doc_id: String,
    pub sentence_index: usize,
    #[serde(default)]
    pub split: Option<String>,
    pub text: String,
    pub tokens: Vec<Token>,
    #[serde(default)]
    pub targets: Vec<TargetAnnotation>,
}

impl AnnotatedSentence {
    pub fn span_text(&self, start: usize, end: usize) -> String {
        span_surface(&self.tokens, start, end)
    }

    /// Human-readable record name used in error messages.
    pub fn record_name(&self) -> String {
        format!("{}#{}", self.doc_id, self.sentence_index)
    }

    /// Checks spans and lexicon references. Returns a message naming the
    /// first problem.
    pub fn check(&self, lex: &FrameLexicon) -> Result<(), String> {
        let n = self.tokens.len();
        if !tokens_well_formed(&self.tokens) {
            return Err(format!("{}: tokens overlap or are empty", self.record_name()));
        }
        for t in &self.targets {
            if !(t.start < t.end && t.end <= n) {
                return Err(format!(
                    "{}: target span [{}, {}) out of range",
                    self.record_name(),
                    t.start,
                    t.end
                ));
            }
            if lex.frame(&t.frame_id).is_none() {
                return Err(format!("{}: unknown frame '{}'", self.record_name(), t.frame_id));
            }
            if let Some(lu) = &t.lu_id {
                if lex.lexical_unit(lu).is_none() {
                    return Err(format!("{}: unknown lexical unit '{}'", self.record_name(), lu));
                }
            }
            for f in &t.fes {
                if !(f.start < f.end && f.end <= n) {
                    return Err(format!(
                        "{}: filler span [{}, {}) out of range",
                        self.record_name(),
                        f.start,
                        f.end
                    ));
                }
                match lex.frame_element(&f.fe_id) {
                    None => return Err(format!("{}: unknown frame element '{}'", self.record_name(), f.fe_id)),
                    Some(fe) if fe.frame_id != t.frame_id => {
                        return Err(format!(
                            "{}: frame element '{}' does not belong to frame '{}'",
                            self.record_name(),
                            f.fe_id,
                            t.frame_id
                        ))
                    }
                    Some(_) => {}
                }
            }
        }
        Ok(())
    }
}

/// Reads an annotation file (header line with `format_version: 1` required).
pub fn read_annotations<R: BufRead>(reader: R) -> Result<Vec<AnnotatedSentence>, JsonlError> {
    Ok(read_jsonl(reader, true)?.records)
}
