//! Sentence discretization into head/relation/tail text blocks and grouping
//! of blocks under shared semantic constraints.
//!
//! Entity blocks cover their mention's token range. The relation block of a
//! triple covers the tokens strictly between head and tail; when the two are
//! adjacent it is the empty span at the boundary and never becomes a
//! replacement candidate.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use serde::{Deserialize, Serialize};

use crate::corpus::{Instance, Sentence, Triple};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Head,
    Relation,
    Tail,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Head => "head",
            Role::Relation => "relation",
            Role::Tail => "tail",
        })
    }
}

/// How sentences are cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Role spans carrying their semantic tags.
    #[default]
    Labeled,
    /// Role spans with tags dropped, so grouping is by role and relation only.
    NoLabel,
    /// Every token of every role span becomes its own block.
    Full,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextBlock {
    /// `<sentence>#<triple>:<role>` plus `.<token>` under [`SplitMode::Full`].
    pub id: String,
    pub span_text: String,
    pub role: Role,
    /// Entity tag for head/tail blocks, relation name for relation blocks.
    pub label_tag: String,
    /// Relation of the owning triple.
    pub relation: String,
    /// Entity tags of the owning triple's head and tail.
    pub pair_tags: (String, String),
    /// Up to `context_width` tokens left of the cut, then up to
    /// `context_width` right of it.
    pub context_tokens: Vec<String>,
    /// Token range `[start, end)` in the source sentence.
    pub cut: (usize, usize),
    /// Cut relative to the start of the role span it belongs to.
    pub offset_in_role: (usize, usize),
    pub source_sentence: String,
    pub source_triple: usize,
}

impl TextBlock {
    pub fn is_empty(&self) -> bool {
        self.cut.0 == self.cut.1
    }
}

/// Index of one block group.
///
/// Entity blocks group by `(role, relation, entity tag)`. Relation blocks
/// group by the head and tail tags of their triple (`relation` is empty and
/// `entity_tag` holds `"<head tag>|<tail tag>"`) so that a relation span can
/// be exchanged for one expressing a different relation between entities of
/// the same types.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub role: Role,
    pub relation: String,
    pub entity_tag: String,
}

impl GroupKey {
    pub fn of(block: &TextBlock) -> Self {
        match block.role {
            Role::Head | Role::Tail => Self {
                role: block.role,
                relation: block.relation.clone(),
                entity_tag: block.label_tag.clone(),
            },
            Role::Relation => Self {
                role: Role::Relation,
                relation: String::new(),
                entity_tag: format!("{}|{}", block.pair_tags.0, block.pair_tags.1),
            },
        }
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.role, self.relation, self.entity_tag)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BlockLibrary {
    pub groups: BTreeMap<GroupKey, Vec<TextBlock>>,
}

impl BlockLibrary {
    pub fn block_count(&self) -> usize {
        self.groups.values().map(Vec::len).sum()
    }

    pub fn iter_blocks(&self) -> impl Iterator<Item = &TextBlock> {
        self.groups.values().flatten()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedTriple {
    pub sentence: String,
    pub triple: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Encoded {
    pub blocks: Vec<TextBlock>,
    pub skipped: Vec<SkippedTriple>,
}

/// Token range between head and tail, whichever comes first.
pub fn relation_span(triple: &Triple) -> (usize, usize) {
    let (h, t) = (&triple.head, &triple.tail);
    if h.token_end <= t.token_start {
        (h.token_end, t.token_start)
    } else {
        (t.token_end, h.token_start)
    }
}

/// Token range of `role` in `triple`.
pub fn role_span(triple: &Triple, role: Role) -> (usize, usize) {
    match role {
        Role::Head => (triple.head.token_start, triple.head.token_end),
        Role::Tail => (triple.tail.token_start, triple.tail.token_end),
        Role::Relation => relation_span(triple),
    }
}

fn context(sentence: &Sentence, cut: (usize, usize), width: usize) -> Vec<String> {
    let left = cut.0.saturating_sub(width)..cut.0;
    let right = cut.1..(cut.1 + width).min(sentence.len());
    left.chain(right).map(|i| sentence.tokens[i].surface.clone()).collect()
}

/// Splits every triple of `instance` into head, relation and tail blocks.
/// Triples whose head and tail overlap are skipped and reported.
pub fn encode(instance: &Instance, context_width: usize, mode: SplitMode) -> Encoded {
    let sentence = &instance.sentence;
    let mut out = Encoded::default();
    for (ti, triple) in instance.triples.iter().enumerate() {
        if triple.head.overlaps(&triple.tail) {
            out.skipped.push(SkippedTriple {
                sentence: sentence.id.clone(),
                triple: ti,
                reason: "head and tail spans overlap".into(),
            });
            continue;
        }
        let (head_tag, tail_tag) = match mode {
            SplitMode::NoLabel => (String::new(), String::new()),
            _ => (triple.head.tag.clone(), triple.tail.tag.clone()),
        };
        for role in [Role::Head, Role::Relation, Role::Tail] {
            let span = role_span(triple, role);
            let label_tag = match role {
                Role::Head => head_tag.clone(),
                Role::Tail => tail_tag.clone(),
                Role::Relation => triple.relation.clone(),
            };
            let base_id = format!("{}#{}:{}", sentence.id, ti, role);
            let make = |id: String, cut: (usize, usize)| TextBlock {
                id,
                span_text: sentence.covered_text(cut.0, cut.1).to_string(),
                role,
                label_tag: label_tag.clone(),
                relation: triple.relation.clone(),
                pair_tags: (head_tag.clone(), tail_tag.clone()),
                context_tokens: context(sentence, cut, context_width),
                cut,
                offset_in_role: (cut.0 - span.0, cut.1 - span.0),
                source_sentence: sentence.id.clone(),
                source_triple: ti,
            };
            if mode == SplitMode::Full && span.1 > span.0 {
                for tok in span.0..span.1 {
                    out.blocks.push(make(format!("{base_id}.{tok}"), (tok, tok + 1)));
                }
            } else {
                out.blocks.push(make(base_id, span));
            }
        }
    }
    out
}

/// Rebuilds the sentence text from its blocks, verifying every block against
/// the sentence on the way. Text not covered by any block is taken from the
/// sentence.
pub fn reconstruct(sentence: &Sentence, blocks: &[TextBlock]) -> Result<String> {
    let fail = |reason: String| Error::Reconstruction {
        sentence: sentence.id.clone(),
        reason,
    };
    // (byte start, byte end, text) of every non-empty block
    let mut pieces: Vec<(usize, usize, &str)> = Vec::with_capacity(blocks.len());
    for b in blocks {
        if b.source_sentence != sentence.id {
            return Err(fail(format!("block {} belongs to {}", b.id, b.source_sentence)));
        }
        let (s, e) = b.cut;
        if s > e || e > sentence.len() {
            return Err(fail(format!("block {} cut {s}..{e} out of bounds", b.id)));
        }
        if sentence.covered_text(s, e) != b.span_text {
            return Err(fail(format!("block {} text does not match its cut {s}..{e}", b.id)));
        }
        let (bs, be) = sentence.byte_span(s, e);
        if bs < be {
            pieces.push((bs, be, b.span_text.as_str()));
        }
    }
    pieces.sort_by_key(|p| (p.0, core::cmp::Reverse(p.1)));
    let mut out = String::with_capacity(sentence.text.len());
    let mut pos = 0;
    for (s, e, text) in pieces {
        if e <= pos {
            continue;
        }
        if s > pos {
            out.push_str(&sentence.text[pos..s]);
        }
        let from = pos.max(s);
        out.push_str(&text[from - s..]);
        pos = e;
    }
    out.push_str(&sentence.text[pos..]);
    Ok(out)
}

/// Partitions blocks by [`GroupKey`]. Input order is kept inside groups.
pub fn group_blocks(blocks: impl IntoIterator<Item = TextBlock>) -> BlockLibrary {
    let mut groups: BTreeMap<GroupKey, Vec<TextBlock>> = BTreeMap::new();
    for b in blocks {
        groups.entry(GroupKey::of(&b)).or_default().push(b);
    }
    BlockLibrary { groups }
}
