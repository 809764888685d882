//! Whitespace-plus-punctuation tokenization with byte offsets.
//!
//! A token is either a maximal run of alphanumeric characters (`_` counts as
//! alphanumeric) or a single non-whitespace, non-alphanumeric character.
//! Offsets are byte offsets into the source string; [`char_to_byte`] and
//! [`byte_to_char`] convert to and from the code-point offsets used in the
//! JSON interchange formats.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    /// Byte offset of the first byte.
    pub start: usize,
    /// Byte offset one past the last byte.
    pub end: usize,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut word_start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if is_word_char(c) {
            if word_start.is_none() {
                word_start = Some(i);
            }
            continue;
        }
        if let Some(s) = word_start.take() {
            tokens.push(Token {
                surface: text[s..i].to_string(),
                start: s,
                end: i,
            });
        }
        if !c.is_whitespace() {
            let end = i + c.len_utf8();
            tokens.push(Token {
                surface: text[i..end].to_string(),
                start: i,
                end,
            });
        }
    }
    if let Some(s) = word_start {
        tokens.push(Token {
            surface: text[s..].to_string(),
            start: s,
            end: text.len(),
        });
    }
    tokens
}

/// Token surfaces only.
pub fn words(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.surface).collect()
}

pub fn char_to_byte(text: &str, char_offset: usize) -> Option<usize> {
    if char_offset == 0 {
        return Some(0);
    }
    let mut count = 0;
    for (i, _) in text.char_indices() {
        if count == char_offset {
            return Some(i);
        }
        count += 1;
    }
    (count == char_offset).then_some(text.len())
}

pub fn byte_to_char(text: &str, byte_offset: usize) -> usize {
    text[..byte_offset].chars().count()
}
