//! Deterministic text handling: sentence segmentation, word tokenization for
//! frequency counting, and prefix stripping.

use std::collections::HashSet;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const ABBREVIATIONS_FILE: &str = include_str!("../data/abbreviations.txt");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TextError {
    #[error("empty text")]
    EmptyText,
    #[error("empty prefix")]
    EmptyPrefix,
    #[error("prefix mismatch: text does not start with {prefix:?}")]
    PrefixMismatch { prefix: String },
    #[error("empty continuation")]
    EmptyContinuation,
}

/// One sentence of a text, with its byte span in the source string.
///
/// `text` is the trimmed slice `source[start..end]`; whatever lies between two
/// consecutive spans is the original separator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub index: usize,
    pub start: usize,
    pub end: usize,
}

/// A lowercased word used for frequency statistics.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WordToken(String);

impl WordToken {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl AsRef<str> for WordToken {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for WordToken {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn abbreviations() -> &'static HashSet<String> {
    static SET: OnceLock<HashSet<String>> = OnceLock::new();
    SET.get_or_init(|| {
        ABBREVIATIONS_FILE
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect()
    })
}

/// Returns true if `word` (without its trailing period) is a known abbreviation.
pub fn is_abbreviation(word: &str) -> bool {
    let word = word.trim_start_matches(is_opening);
    !word.is_empty() && abbreviations().contains(&word.to_lowercase())
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '…')
}

fn is_closing(c: char) -> bool {
    matches!(c, '"' | '\'' | '”' | '’' | ')' | ']' | '»')
}

fn is_opening(c: char) -> bool {
    matches!(c, '"' | '\'' | '“' | '‘' | '(' | '[' | '«')
}

fn starts_new_sentence(c: char) -> bool {
    c.is_uppercase() || is_opening(c)
}

/// Split `text` into sentences.
///
/// A boundary is a run of `.`, `!`, `?` (plus any closing quotes or brackets)
/// followed by whitespace and then an uppercase letter or an opening quote.
/// A lone period after a word from the shipped abbreviation list is not a
/// boundary.
pub fn segment_sentences(text: &str) -> Result<Vec<Sentence>, TextError> {
    let content_end = text.trim_end().len();
    let Some(first) = text.find(|c: char| !c.is_whitespace()) else {
        return Err(TextError::EmptyText);
    };

    let mut out = Vec::new();
    let mut start = first;
    let mut chars = text[..content_end].char_indices().peekable();

    while let Some((i, c)) = chars.next() {
        if i < start || !is_terminator(c) {
            continue;
        }
        let mut end = i + c.len_utf8();
        let mut run_len = 1;
        while let Some(&(j, d)) = chars.peek() {
            if is_terminator(d) {
                run_len += 1;
            } else if !is_closing(d) {
                break;
            }
            end = j + d.len_utf8();
            chars.next();
        }

        let rest = &text[end..content_end];
        if !rest.starts_with(char::is_whitespace) {
            continue;
        }
        let next_start = end + (rest.len() - rest.trim_start().len());
        let Some(next) = text[next_start..].chars().next() else {
            continue;
        };
        if !starts_new_sentence(next) {
            continue;
        }
        if c == '.' && run_len == 1 {
            let before = &text[start..i];
            let word = before
                .rsplit(char::is_whitespace)
                .next()
                .unwrap_or(before);
            if is_abbreviation(word) {
                continue;
            }
        }

        out.push(Sentence {
            text: text[start..end].to_string(),
            index: out.len(),
            start,
            end,
        });
        start = next_start;
    }

    out.push(Sentence {
        text: text[start..content_end].to_string(),
        index: out.len(),
        start,
        end: content_end,
    });
    Ok(out)
}

/// Lowercased word tokens. Letters and digits form words; an apostrophe is
/// kept only between two alphanumeric characters (`it's`), and `’` is folded
/// to `'`.
pub fn tokenize_words(sentence: &str) -> Vec<WordToken> {
    let chars: Vec<char> = sentence.chars().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();

    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
        } else if matches!(c, '\'' | '’')
            && !current.is_empty()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric())
        {
            current.push('\'');
        } else if !current.is_empty() {
            tokens.push(WordToken(std::mem::take(&mut current)));
        }
    }
    if !current.is_empty() {
        tokens.push(WordToken(current));
    }
    tokens
}

/// Remove `prefix` from the front of `text`, returning the left-trimmed rest.
///
/// Runs of whitespace in either string match each other; comparison is
/// otherwise literal and case-sensitive.
pub fn strip_prefix<'a>(text: &'a str, prefix: &str) -> Result<&'a str, TextError> {
    let mut words = prefix.split_whitespace().peekable();
    if words.peek().is_none() {
        return Err(TextError::EmptyPrefix);
    }
    let mismatch = || TextError::PrefixMismatch {
        prefix: prefix.to_string(),
    };

    let mut rest = text.trim_start();
    let mut first = true;
    for word in words {
        if !first {
            let trimmed = rest.trim_start();
            if trimmed.len() == rest.len() {
                return Err(mismatch());
            }
            rest = trimmed;
        }
        first = false;
        rest = rest.strip_prefix(word).ok_or_else(mismatch)?;
    }

    let continuation = rest.trim_start();
    if continuation.trim_end().is_empty() {
        return Err(TextError::EmptyContinuation);
    }
    Ok(continuation)
}

/// Drop the final sentence when it does not end with terminal punctuation.
///
/// A text with a single sentence is returned unchanged.
pub fn trim_incomplete_last_sentence(text: &str) -> Result<String, TextError> {
    let sentences = segment_sentences(text)?;
    let last = sentences.last().expect("segmentation yields at least one sentence");
    let complete = last
        .text
        .trim_end_matches(is_closing)
        .ends_with(is_terminator);
    if complete || sentences.len() == 1 {
        return Ok(text.to_string());
    }
    let keep = &sentences[sentences.len() - 2];
    Ok(text[..keep.end].to_string())
}
