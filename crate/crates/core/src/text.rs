//! Text utilities shared by ingestion and the pipeline: normalization,
//! sentence splitting, script-aware substring matching and digests.

use sha2::{Digest, Sha256};

/// Sentence terminators. Includes the Devanagari danda and double danda.
pub const SENTENCE_TERMINATORS: [char; 6] = ['.', '!', '?', '…', '।', '॥'];

/// Collapses runs of whitespace into a single space, strips control
/// characters and trims both ends.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.chars() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
            continue;
        }
        if c.is_control() {
            continue;
        }
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        out.push(c);
    }
    out
}

fn is_terminator(c: char) -> bool {
    SENTENCE_TERMINATORS.contains(&c)
}

// Closing quotes and brackets that may trail a terminator ("...end." she said).
fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '”' | '’' | '»')
}

/// Splits `text` into sentences, returned as trimmed slices of the input.
///
/// A sentence ends at a run of terminators (optionally followed by closing
/// quotes or brackets) that is followed by whitespace or the end of text.
/// A trailing fragment without a terminator counts as a sentence.
/// Abbreviations are not special-cased.
pub fn split_sentences(text: &str) -> Vec<&str> {
    sentence_spans(text)
        .into_iter()
        .map(|(s, e)| &text[s..e])
        .collect()
}

/// Number of sentences in `text` under [`split_sentences`].
pub fn count_sentences(text: &str) -> usize {
    sentence_spans(text).len()
}

/// Returns the prefix of `text` holding at most `max` sentences, with the
/// original spacing between them preserved.
pub fn first_sentences(text: &str, max: usize) -> &str {
    let spans = sentence_spans(text);
    match spans.get(..max.min(spans.len())) {
        Some([]) | None => "",
        Some(kept) => &text[kept[0].0..kept[kept.len() - 1].1],
    }
}

/// Like [`first_sentences`], but drops an unterminated trailing fragment when
/// at least one complete sentence precedes it. Used for completions cut off
/// by the output-token limit.
pub fn complete_sentences(text: &str, max: usize) -> &str {
    let spans = sentence_spans(text);
    let complete: Vec<_> = spans
        .iter()
        .copied()
        .filter(|&(_, e)| text[..e].chars().next_back().is_some_and(|c| is_terminator(c) || is_closer(c)))
        .collect();
    if complete.is_empty() {
        return first_sentences(text, max);
    }
    let kept = &complete[..max.min(complete.len())];
    &text[kept[0].0..kept[kept.len() - 1].1]
}

fn sentence_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut start: Option<usize> = None;
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if start.is_none() {
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            start = Some(pos);
        }
        if is_terminator(c) {
            let mut j = i;
            while j + 1 < chars.len() && is_terminator(chars[j + 1].1) {
                j += 1;
            }
            while j + 1 < chars.len() && is_closer(chars[j + 1].1) {
                j += 1;
            }
            let at_boundary = j + 1 >= chars.len() || chars[j + 1].1.is_whitespace();
            if at_boundary {
                let end = chars[j].0 + chars[j].1.len_utf8();
                spans.push((start.take().unwrap(), end));
                i = j + 1;
                continue;
            }
            i = j + 1;
            continue;
        }
        i += 1;
    }
    if let Some(s) = start {
        let end = text.trim_end().len();
        if end > s {
            spans.push((s, end));
        }
    }
    spans
}

/// Lowercases text for matching. Scripts without case (Devanagari among
/// them) are unchanged, so matching on them degrades to a raw substring test.
pub fn fold(text: &str) -> String {
    text.to_lowercase()
}

/// Script-aware, case-insensitive substring test.
pub fn contains_folded(haystack: &str, needle: &str) -> bool {
    fold(haystack).contains(&fold(needle))
}

pub(crate) fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
        || ('\u{0300}'..='\u{036F}').contains(&c)
        || (('\u{0900}'..='\u{097F}').contains(&c) && !matches!(c, '।' | '॥'))
}

/// Finds `token` in `haystack` at word boundaries; returns the byte offset of
/// the first occurrence. Both sides should already be folded.
pub(crate) fn find_word(haystack: &str, token: &str) -> Option<usize> {
    if token.is_empty() {
        return None;
    }
    let mut from = 0;
    while let Some(rel) = haystack[from..].find(token) {
        let at = from + rel;
        let end = at + token.len();
        let before_ok = haystack[..at].chars().next_back().is_none_or(|c| !is_word_char(c));
        let after_ok = haystack[end..].chars().next().is_none_or(|c| !is_word_char(c));
        if before_ok && after_ok {
            return Some(at);
        }
        from = at + haystack[at..].chars().next().map_or(1, char::len_utf8);
    }
    None
}

/// Hex SHA-256 digest of `text`, truncated to 16 hex characters.
pub fn short_digest(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    hex::encode(&digest[..8])
}
