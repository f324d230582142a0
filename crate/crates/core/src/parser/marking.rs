use serde::{Deserialize, Serialize};

use super::targets::TargetSpan;
use super::ParserError;
use crate::annotation::Token;

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const TARGET_MARK: &str = "[T]";
pub const FRAME_MARK: &str = "[F]";

/// Encoder input for one target:
/// `[CLS] c_0 .. [T] t_1 .. t_l [T] .. c_{n-1} [SEP]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkedInput {
    pub symbols: Vec<String>,
    pub target_mask: Vec<u8>,
    token_start: usize,
    token_end: usize,
}

impl MarkedInput {
    pub fn token_count(&self) -> usize {
        self.symbols.len() - 4
    }

    pub fn target_span(&self) -> (usize, usize) {
        (self.token_start, self.token_end)
    }

    /// Symbol position of a sentence token.
    pub fn symbol_of_token(&self, token: usize) -> usize {
        if token < self.token_start {
            token + 1
        } else if token < self.token_end {
            token + 2
        } else {
            token + 3
        }
    }

    /// Sentence token at a symbol position; `None` for markers and anything
    /// past the separator.
    pub fn token_of_symbol(&self, symbol: usize) -> Option<usize> {
        let open = self.token_start + 1;
        let close = self.token_end + 2;
        let sep = self.symbols.len() - 1;
        if symbol == 0 || symbol == open || symbol == close || symbol >= sep {
            None
        } else if symbol < open {
            Some(symbol - 1)
        } else if symbol < close {
            Some(symbol - 2)
        } else {
            Some(symbol - 3)
        }
    }

    /// The symbol sequence used for frame-element modeling: the marked input
    /// followed by `[F] frame_name [F]`. Prefix positions are unchanged.
    pub fn with_frame(&self, frame_name: &str) -> Vec<String> {
        let mut s = self.symbols.clone();
        s.push(FRAME_MARK.to_string());
        s.push(frame_name.to_string());
        s.push(FRAME_MARK.to_string());
        s
    }
}

pub fn mark_target(tokens: &[Token], span: &TargetSpan) -> Result<MarkedInput, ParserError> {
    if !(span.token_start < span.token_end && span.token_end <= tokens.len()) {
        return Err(ParserError::Argument(format!(
            "target span [{}, {}) invalid for {} tokens",
            span.token_start,
            span.token_end,
            tokens.len()
        )));
    }
    let mut symbols = Vec::with_capacity(tokens.len() + 4);
    let mut mask = Vec::with_capacity(tokens.len() + 4);
    symbols.push(CLS.to_string());
    mask.push(0);
    for (i, tok) in tokens.iter().enumerate() {
        if i == span.token_start {
            symbols.push(TARGET_MARK.to_string());
            mask.push(0);
        }
        symbols.push(tok.text.clone());
        mask.push(u8::from(i >= span.token_start && i < span.token_end));
        if i + 1 == span.token_end {
            symbols.push(TARGET_MARK.to_string());
            mask.push(0);
        }
    }
    symbols.push(SEP.to_string());
    mask.push(0);
    Ok(MarkedInput {
        symbols,
        target_mask: mask,
        token_start: span.token_start,
        token_end: span.token_end,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(n: usize) -> Vec<Token> {
        (0..n).map(|i| Token::new(format!("w{i}"), i * 3, i * 3 + 2)).collect()
    }

    #[test]
    fn five_tokens_single_target() {
        let m = mark_target(&toks(5), &TargetSpan::new(2, 3)).unwrap();
        assert_eq!(m.symbols.len(), 9);
        assert_eq!(m.symbols[0], CLS);
        assert_eq!(m.symbols[3], TARGET_MARK);
        assert_eq!(m.symbols[5], TARGET_MARK);
        assert_eq!(m.symbols[8], SEP);
        assert_eq!(m.target_mask, vec![0, 0, 0, 0, 1, 0, 0, 0, 0]);
    }

    #[test]
    fn whole_sentence_target() {
        let m = mark_target(&toks(3), &TargetSpan::new(0, 3)).unwrap();
        assert_eq!(m.symbols[1], TARGET_MARK);
        assert_eq!(m.symbols[5], TARGET_MARK);
        assert_eq!(m.symbols[6], SEP);
    }

    #[test]
    fn mask_sum_equals_span_length() {
        let m = mark_target(&toks(7), &TargetSpan::new(3, 5)).unwrap();
        assert_eq!(m.target_mask.iter().map(|&x| x as usize).sum::<usize>(), 2);
        assert_eq!(m.symbols.iter().filter(|s| *s == TARGET_MARK).count(), 2);
    }

    #[test]
    fn out_of_range_span_is_rejected() {
        assert!(mark_target(&toks(3), &TargetSpan::new(2, 4)).is_err());
        assert!(mark_target(&toks(3), &TargetSpan::new(2, 2)).is_err());
    }

    #[test]
    fn token_symbol_mapping_round_trips() {
        let m = mark_target(&toks(6), &TargetSpan::new(2, 4)).unwrap();
        for t in 0..6 {
            let s = m.symbol_of_token(t);
            assert_eq!(m.symbols[s], format!("w{t}"));
            assert_eq!(m.token_of_symbol(s), Some(t));
        }
        let markers: Vec<_> = (0..m.symbols.len())
            .filter(|&s| m.token_of_symbol(s).is_none())
            .collect();
        assert_eq!(markers, [0, 3, 6, 9]);
    }
}
