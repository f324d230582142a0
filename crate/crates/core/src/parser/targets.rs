use serde::{Deserialize, Serialize};

use crate::annotation::{span_surface, Token};
use crate::lexicon::{lookup_normalized, FrameLexicon};
use crate::normalize::normalize_lemma;

/// Longest n-gram considered when matching lexical units.
pub const MAX_TARGET_TOKENS: usize = 4;

/// A target word span and the lexical units it matched.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSpan {
    pub token_start: usize,
    pub token_end: usize,
    #[serde(default)]
    pub lu_ids: Vec<String>,
}

impl TargetSpan {
    pub fn new(token_start: usize, token_end: usize) -> Self {
        Self {
            token_start,
            token_end,
            lu_ids: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.token_end - self.token_start
    }

    pub fn is_empty(&self) -> bool {
        self.token_end <= self.token_start
    }
}

/// Retrieval-based target identification: a greedy left-to-right scan that
/// takes, at each position, the longest n-gram (n <= 4) whose normalized
/// surface is a known lemma. Matched spans never overlap.
pub fn identify_targets(tokens: &[Token], lex: &FrameLexicon) -> Vec<TargetSpan> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let longest = MAX_TARGET_TOKENS.min(tokens.len() - i);
        let hit = (1..=longest).rev().find_map(|n| {
            let surface = normalize_lemma(&span_surface(tokens, i, i + n));
            let lus = lookup_normalized(lex, &surface);
            (!lus.is_empty()).then(|| TargetSpan {
                token_start: i,
                token_end: i + n,
                lu_ids: lus.iter().map(|lu| lu.id.clone()).collect(),
            })
        });
        match hit {
            Some(span) => {
                i = span.token_end;
                out.push(span);
            }
            None => i += 1,
        }
    }
    out
}
