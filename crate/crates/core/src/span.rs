//! Half-open character offsets into a string.
//!
//! All offsets in the file formats count Unicode scalar values, not bytes,
//! so that files produced by Python or JavaScript analyzers line up for
//! non-Latin scripts.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CharSpan {
    pub start: usize,
    pub end: usize,
}

impl CharSpan {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// The substring of `text` covered by this span, or `None` when the span
    /// is inverted or runs past the end of `text`.
    pub fn slice<'a>(&self, text: &'a str) -> Option<&'a str> {
        if self.start > self.end {
            return None;
        }
        let start = byte_offset(text, self.start)?;
        let end = byte_offset(text, self.end)?;
        Some(&text[start..end])
    }

    /// Locate the first occurrence of `needle` in `haystack`, preferring a
    /// match bounded by non-alphanumeric characters.
    pub fn find(haystack: &str, needle: &str) -> Option<CharSpan> {
        if needle.is_empty() {
            return None;
        }
        let mut fallback = None;
        for (byte_start, _) in haystack.match_indices(needle) {
            let byte_end = byte_start + needle.len();
            let before = haystack[..byte_start].chars().next_back();
            let after = haystack[byte_end..].chars().next();
            let bounded = !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric);
            let start = haystack[..byte_start].chars().count();
            let span = CharSpan::new(start, start + needle.chars().count());
            if bounded {
                return Some(span);
            }
            fallback.get_or_insert(span);
        }
        fallback
    }
}

fn byte_offset(text: &str, char_idx: usize) -> Option<usize> {
    if char_idx == 0 {
        return Some(0);
    }
    let mut count = 0;
    for (byte, _) in text.char_indices() {
        if count == char_idx {
            return Some(byte);
        }
        count += 1;
    }
    (count == char_idx).then_some(text.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slices_by_characters() {
        let text = "活用する方法";
        assert_eq!(CharSpan::new(0, 4).slice(text), Some("活用する"));
        assert_eq!(CharSpan::new(4, 6).slice(text), Some("方法"));
        assert_eq!(CharSpan::new(6, 6).slice(text), Some(""));
        assert_eq!(CharSpan::new(5, 7).slice(text), None);
        assert_eq!(CharSpan::new(3, 2).slice(text), None);
    }

    #[test]
    fn find_prefers_word_boundaries() {
        let text = "the focalization of the focal length";
        let span = CharSpan::find(text, "focal").unwrap();
        assert_eq!(span.slice(text), Some("focal"));
        assert_eq!(span.start, 24);
        assert_eq!(CharSpan::find("abc", "b"), Some(CharSpan::new(1, 2)));
        assert_eq!(CharSpan::find("abc", "z"), None);
    }
}
