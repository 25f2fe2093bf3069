//! Small text helpers shared by the parsers.

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// Lowercases and strips diacritics so that `Toxicité` and `toxicite` compare
/// equal. Typographic apostrophes are folded to `'`.
pub fn fold(s: &str) -> String {
    s.nfd()
        .filter(|c| !is_combining_mark(*c))
        .map(|c| match c {
            '\u{2019}' | '\u{2018}' | '`' => '\'',
            _ => c,
        })
        .flat_map(char::to_lowercase)
        .collect()
}

/// Maximal whitespace-separated tokens.
pub fn word_count(s: &str) -> usize {
    s.split_whitespace().count()
}

/// Collapses every run of whitespace (including newlines) to a single space.
pub fn single_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_accents_and_case() {
        assert_eq!(fold("Toxicité ÉLEVÉE"), "toxicite elevee");
        assert_eq!(fold("l’auteur"), "l'auteur");
    }

    #[test]
    fn counts_words() {
        assert_eq!(word_count("  un  deux\ttrois\nquatre "), 4);
        assert_eq!(word_count(""), 0);
        assert_eq!(word_count("<email> et <url>"), 3);
    }
}
