use unicode_normalization::UnicodeNormalization;

/// Normalizes a lemma for lexicon lookup: NFC, then lowercase Latin-script
/// letters only. Other scripts are left untouched.
pub fn normalize_lemma(s: &str) -> String {
    s.nfc()
        .flat_map(|c| {
            let lower: Box<dyn Iterator<Item = char>> = if is_latin(c) {
                Box::new(c.to_lowercase())
            } else {
                Box::new(std::iter::once(c))
            };
            lower
        })
        .collect()
}

/// Normalization used when comparing answer strings: NFC, full lowercase,
/// trimmed, internal whitespace collapsed to single spaces.
pub fn normalize_text(s: &str) -> String {
    let nfc: String = s.nfc().collect::<String>().to_lowercase();
    nfc.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn is_latin(c: char) -> bool {
    matches!(c as u32,
        0x0041..=0x005A
        | 0x0061..=0x007A
        | 0x00C0..=0x00D6
        | 0x00D8..=0x00F6
        | 0x00F8..=0x024F
        | 0x1E00..=0x1EFF
        | 0x2C60..=0x2C7F
        | 0xA720..=0xA7FF
        | 0xFF21..=0xFF3A
        | 0xFF41..=0xFF5A)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latin_is_lowercased() {
        assert_eq!(normalize_lemma("Travel"), "travel");
        assert_eq!(normalize_lemma("ÉTÉ"), "été");
    }

    #[test]
    fn non_latin_case_is_kept() {
        // Greek capital sigma keeps its case.
        assert_eq!(normalize_lemma("Σ"), "Σ");
        assert_eq!(normalize_lemma("旅行"), "旅行");
    }

    #[test]
    fn composes_to_nfc() {
        let decomposed = "e\u{0301}";
        assert_eq!(normalize_lemma(decomposed), "\u{00e9}");
    }

    #[test]
    fn text_normalization_collapses_whitespace() {
        assert_eq!(normalize_text("  The   Answer "), "the answer");
    }
}
