//! Rule-based part-of-speech proxy.
//!
//! Closed-class words come from small built-in lists; open-class words are
//! guessed from capitalization and suffixes. The tagger is only meant to
//! give syntactic-pattern comparisons some discriminative power.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Pos {
    Det,
    Adp,
    Pron,
    Cconj,
    Sconj,
    Aux,
    Part,
    Num,
    Punct,
    Adv,
    Adj,
    Verb,
    Propn,
    Noun,
}

const DET: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "each", "every", "some", "any", "no", "another",
    "all", "both", "either", "neither",
];
const ADP: &[&str] = &[
    "at", "in", "on", "of", "to", "for", "from", "by", "with", "about", "against", "between", "into",
    "through", "during", "before", "after", "above", "below", "under", "over", "near", "across", "along",
    "around", "behind", "beside", "beyond", "inside", "outside", "within", "without", "toward", "towards",
    "upon", "via", "per", "like",
];
const PRON: &[&str] = &[
    "i", "me", "my", "mine", "you", "your", "yours", "he", "him", "his", "she", "her", "hers", "it", "its",
    "we", "us", "our", "ours", "they", "them", "their", "theirs", "who", "whom", "whose", "which", "what",
    "myself", "himself", "herself", "itself", "themselves",
];
const CCONJ: &[&str] = &["and", "or", "but", "nor", "yet", "so"];
const SCONJ: &[&str] = &["if", "because", "although", "though", "while", "whereas", "since", "unless", "where", "when", "whether", "than"];
const AUX: &[&str] = &[
    "is", "are", "was", "were", "be", "been", "being", "am", "has", "have", "had", "having", "do", "does",
    "did", "will", "would", "shall", "should", "can", "could", "may", "might", "must",
];
const PART: &[&str] = &["not", "n't", "'s", "up", "off", "out"];
const ADV: &[&str] = &["very", "also", "too", "just", "now", "then", "there", "here", "still", "already"];

fn lower_ascii(word: &str, buf: &mut [u8; 32]) -> Option<usize> {
    if word.len() > buf.len() || !word.is_ascii() {
        return None;
    }
    for (b, c) in buf.iter_mut().zip(word.bytes()) {
        *b = c.to_ascii_lowercase();
    }
    Some(word.len())
}

pub fn tag_word(word: &str) -> Pos {
    let Some(first) = word.chars().next() else {
        return Pos::Punct;
    };
    if !first.is_alphanumeric() && first != '_' {
        return Pos::Punct;
    }
    if word.chars().all(|c| c.is_ascii_digit()) {
        return Pos::Num;
    }
    let mut buf = [0u8; 32];
    if let Some(n) = lower_ascii(word, &mut buf) {
        let lw = core::str::from_utf8(&buf[..n]).unwrap_or(word);
        let lists: [(&[&str], Pos); 8] = [
            (DET, Pos::Det),
            (ADP, Pos::Adp),
            (PRON, Pos::Pron),
            (CCONJ, Pos::Cconj),
            (SCONJ, Pos::Sconj),
            (AUX, Pos::Aux),
            (PART, Pos::Part),
            (ADV, Pos::Adv),
        ];
        for (list, pos) in lists {
            if list.contains(&lw) {
                return pos;
            }
        }
        if first.is_uppercase() {
            return Pos::Propn;
        }
        if lw.len() > 4 && lw.ends_with("ly") {
            return Pos::Adv;
        }
        for suffix in ["ing", "ed", "ize", "ise", "ate"] {
            if lw.len() > suffix.len() + 2 && lw.ends_with(suffix) {
                return Pos::Verb;
            }
        }
        for suffix in ["ous", "ful", "ive", "able", "ible", "al", "ic", "less", "ish"] {
            if lw.len() > suffix.len() + 2 && lw.ends_with(suffix) {
                return Pos::Adj;
            }
        }
        return Pos::Noun;
    }
    if first.is_uppercase() {
        Pos::Propn
    } else {
        Pos::Noun
    }
}

pub fn tag_words<S: AsRef<str>>(words: &[S]) -> Vec<Pos> {
    words.iter().map(|w| tag_word(w.as_ref())).collect()
}

pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = alloc::vec![0usize; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - levenshtein / max(len)`, with two empty sequences scoring 1.
pub fn edit_similarity<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(a, b) as f64 / longest as f64
}
