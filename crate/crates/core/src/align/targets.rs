//! Text to aligner target sequences.
//!
//! Whitespace and punctuation are stripped. Every remaining code point becomes
//! one target, except that a consonant followed by a dependent vowel sign is
//! first tried as a single cluster target (`క` + `ా` → `కా`) when the aligner
//! vocabulary contains that cluster; otherwise the two code points are looked
//! up separately. Code points absent from the vocabulary are dropped and
//! reported.

use std::collections::HashMap;

/// Targets extracted from one utterance's text.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TargetSequence {
    /// Vocabulary indices, in text order.
    pub indices: Vec<usize>,
    /// Grapheme string for each index.
    pub graphemes: Vec<String>,
    /// Graphemes that were not in the vocabulary.
    pub dropped: Vec<String>,
}

impl TargetSequence {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

fn is_separator(c: char) -> bool {
    c.is_whitespace()
        || c.is_ascii_punctuation()
        || matches!(c,
            '\u{00A1}'..='\u{00BF}'
            | '\u{0964}' | '\u{0965}'   // danda, double danda
            | '\u{200B}'..='\u{200D}'   // zero-width space / (non-)joiner
            | '\u{2010}'..='\u{205F}'   // general punctuation
            | '\u{3000}'..='\u{303F}'
            | '\u{FEFF}')
}

fn is_consonant(c: char) -> bool {
    matches!(c,
        '\u{0915}'..='\u{0939}' | '\u{0958}'..='\u{095F}'   // Devanagari
        | '\u{0C15}'..='\u{0C39}' | '\u{0C58}'..='\u{0C5A}' // Telugu
        | '\u{0B95}'..='\u{0BB9}')                          // Tamil
}

fn is_vowel_sign(c: char) -> bool {
    matches!(c,
        '\u{093E}'..='\u{094C}' | '\u{0962}'..='\u{0963}'
        | '\u{0C3E}'..='\u{0C4C}' | '\u{0C56}' | '\u{0C62}'..='\u{0C63}'
        | '\u{0BBE}'..='\u{0BCC}' | '\u{0BD7}')
}

/// Converts `text` to targets over `vocab`. `blank_index` is never emitted
/// as a target even if its string occurs in the text.
pub fn text_to_targets(text: &str, vocab: &HashMap<&str, usize>, blank_index: usize) -> TargetSequence {
    let mut out = TargetSequence::default();
    let lookup = |g: &str| vocab.get(g).copied().filter(|&i| i != blank_index);
    let push = |out: &mut TargetSequence, g: &str| match lookup(g) {
        Some(i) => {
            out.indices.push(i);
            out.graphemes.push(g.to_string());
        }
        None => out.dropped.push(g.to_string()),
    };

    let chars: Vec<char> = text.chars().filter(|&c| !is_separator(c)).collect();
    let mut i = 0;
    let mut buf = [0u8; 4];
    while i < chars.len() {
        let c = chars[i];
        if is_consonant(c) && i + 1 < chars.len() && is_vowel_sign(chars[i + 1]) {
            let cluster: String = [c, chars[i + 1]].iter().collect();
            if lookup(&cluster).is_some() {
                push(&mut out, &cluster);
                i += 2;
                continue;
            }
        }
        push(&mut out, c.encode_utf8(&mut buf));
        i += 1;
    }
    if !out.dropped.is_empty() {
        log::debug!("dropped {} graphemes not in vocab: {:?}", out.dropped.len(), out.dropped);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab<'a>(v: &[&'a str]) -> HashMap<&'a str, usize> {
        v.iter().enumerate().map(|(i, g)| (*g, i)).collect()
    }

    #[test]
    fn strips_whitespace_and_punctuation() {
        let v = vocab(&["<b>", "ట", "మ", "ా"]);
        let t = text_to_targets("టమా, ట!\u{0964}", &v, 0);
        assert_eq!(t.graphemes, vec!["ట", "మ", "ా", "ట"]);
        assert_eq!(t.indices, vec![1, 2, 3, 1]);
        assert!(t.dropped.is_empty());
    }

    #[test]
    fn cluster_preferred_when_in_vocab() {
        let v = vocab(&["<b>", "క", "ా", "కా"]);
        let t = text_to_targets("కా", &v, 0);
        assert_eq!(t.graphemes, vec!["కా"]);
    }

    #[test]
    fn unknown_graphemes_dropped() {
        let v = vocab(&["_", "क"]);
        let t = text_to_targets("क9ख", &v, 0);
        assert_eq!(t.graphemes, vec!["क"]);
        assert_eq!(t.dropped, vec!["9", "ख"]);
    }

    #[test]
    fn blank_string_never_a_target() {
        let v = vocab(&["ழ", "ல"]);
        let t = text_to_targets("ழல", &v, 0);
        assert_eq!(t.indices, vec![1]);
    }
}
