//! Triple-annotated corpus model.
//!
//! A [`Sentence`] owns its text and tokenization; an [`EntityMention`] is a
//! token range inside it; a [`Triple`] ties two mentions with a relation name
//! from the [`RelationSchema`]. The dense `n × K × n` label tensor used by
//! joint extraction models is represented sparsely by [`TagAssignment`].
//!
//! # Tagging convention
//!
//! Every triple contributes one cell `(head start token, relation index, tail
//! start token)`. The cell's tag id packs the head and tail span lengths and
//! the head and tail entity tags in mixed radix:
//!
//! ```text
//! tag = 1 + (((head_len - 1) * L + (tail_len - 1)) * E + head_tag) * E + tail_tag
//! ```
//!
//! where `L` is [`TagScheme::max_span`] and `E` the number of entity tags.
//! Tag `0` is the null tag of every other cell, so the vocabulary size is
//! `T = 1 + L² E²`. The convention is a stand-in: the common joint-extraction
//! formulations fix only the tensor shape.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::text::{self, Token};

/// Ordered relation set plus the entity tag vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSchema {
    relations: Vec<String>,
    entity_tags: Vec<String>,
}

impl RelationSchema {
    pub fn new<R, T>(relations: R, entity_tags: T) -> Result<Self>
    where
        R: IntoIterator,
        R::Item: Into<String>,
        T: IntoIterator,
        T::Item: Into<String>,
    {
        let relations: Vec<String> = relations.into_iter().map(Into::into).collect();
        let entity_tags: BTreeSet<String> = entity_tags.into_iter().map(Into::into).collect();
        let schema = Self {
            relations,
            entity_tags: entity_tags.into_iter().collect(),
        };
        schema.validate()?;
        Ok(schema)
    }

    /// Schema covering every relation and tag in `instances`, both sorted.
    pub fn infer<'a, I>(instances: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Instance>,
    {
        let mut relations = BTreeSet::new();
        let mut tags = BTreeSet::new();
        for inst in instances {
            for t in &inst.triples {
                relations.insert(t.relation.clone());
                tags.insert(t.head.tag.clone());
                tags.insert(t.tail.tag.clone());
            }
        }
        Self::new(relations, tags)
    }

    pub fn validate(&self) -> Result<()> {
        if self.relations.is_empty() {
            return Err(Error::Schema("relation set is empty".into()));
        }
        let mut seen = BTreeSet::new();
        for r in &self.relations {
            if !seen.insert(r.as_str()) {
                return Err(Error::Schema(format!("duplicate relation {r:?}")));
            }
        }
        let mut tags = self.entity_tags.clone();
        tags.sort();
        tags.dedup();
        if tags != self.entity_tags {
            return Err(Error::Schema("entity tags must be sorted and unique".into()));
        }
        Ok(())
    }

    pub fn relations(&self) -> &[String] {
        &self.relations
    }

    pub fn entity_tags(&self) -> &[String] {
        &self.entity_tags
    }

    /// K.
    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    pub fn relation_index(&self, name: &str) -> Option<usize> {
        self.relations.iter().position(|r| r == name)
    }

    pub fn tag_index(&self, tag: &str) -> Option<usize> {
        self.entity_tags.binary_search_by(|t| t.as_str().cmp(tag)).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sentence {
    pub id: String,
    pub text: String,
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens = text::tokenize(&text);
        Self {
            id: id.into(),
            text,
            tokens,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Byte range covered by tokens `[start, end)`. An empty token range maps
    /// to the empty byte range right after token `start - 1`.
    pub fn byte_span(&self, start: usize, end: usize) -> (usize, usize) {
        debug_assert!(start <= end && end <= self.tokens.len());
        if start == end {
            let at = if start == 0 { 0 } else { self.tokens[start - 1].end };
            (at, at)
        } else {
            (self.tokens[start].start, self.tokens[end - 1].end)
        }
    }

    pub fn covered_text(&self, start: usize, end: usize) -> &str {
        let (a, b) = self.byte_span(start, end);
        &self.text[a..b]
    }

    pub fn token_starting_at(&self, byte: usize) -> Option<usize> {
        self.tokens.binary_search_by(|t| t.start.cmp(&byte)).ok()
    }

    pub fn token_ending_at(&self, byte: usize) -> Option<usize> {
        self.tokens.binary_search_by(|t| t.end.cmp(&byte)).ok()
    }

    /// Token range whose bytes are exactly `[start, end)`.
    pub fn token_range(&self, start: usize, end: usize) -> Option<(usize, usize)> {
        let a = self.token_starting_at(start)?;
        let b = self.token_ending_at(end)?;
        (a <= b).then_some((a, b + 1))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityMention {
    /// Inclusive.
    pub token_start: usize,
    /// Exclusive.
    pub token_end: usize,
    pub surface: String,
    pub tag: String,
}

impl EntityMention {
    pub fn len(&self) -> usize {
        self.token_end - self.token_start
    }

    pub fn is_empty(&self) -> bool {
        self.token_end == self.token_start
    }

    pub fn overlaps(&self, other: &EntityMention) -> bool {
        self.token_start < other.token_end && other.token_start < self.token_end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityMention,
    pub relation: String,
    pub tail: EntityMention,
}

/// A sentence with its gold triples.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Instance {
    pub sentence: Sentence,
    pub triples: Vec<Triple>,
}

impl Instance {
    pub fn id(&self) -> &str {
        &self.sentence.id
    }

    /// Checks that every mention lies inside the sentence and that its
    /// surface equals the covered text.
    pub fn validate(&self) -> Result<()> {
        let s = &self.sentence;
        for t in &self.triples {
            for m in [&t.head, &t.tail] {
                if m.token_start >= m.token_end || m.token_end > s.len() {
                    return Err(Error::Alignment {
                        sentence: s.id.clone(),
                        surface: m.surface.clone(),
                        reason: format!("token range {}..{} out of bounds", m.token_start, m.token_end),
                    });
                }
                if s.covered_text(m.token_start, m.token_end) != m.surface {
                    return Err(Error::Alignment {
                        sentence: s.id.clone(),
                        surface: m.surface.clone(),
                        reason: "surface differs from covered text".into(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn to_record(&self) -> RawRecord {
        let text = &self.sentence.text;
        let mention = |m: &EntityMention| RawMention {
            surface: m.surface.clone(),
            char_start: Some(text::byte_to_char(text, self.sentence.tokens[m.token_start].start)),
            tag: m.tag.clone(),
        };
        RawRecord {
            id: Some(self.sentence.id.clone()),
            text: text.clone(),
            triples: self
                .triples
                .iter()
                .map(|t| RawTriple {
                    head: mention(&t.head),
                    relation: t.relation.clone(),
                    tail: mention(&t.tail),
                })
                .collect(),
        }
    }
}

/// One line of the JSON-lines interchange format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    #[serde(default)]
    pub id: Option<String>,
    pub text: String,
    #[serde(default)]
    pub triples: Vec<RawTriple>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTriple {
    pub head: RawMention,
    pub relation: String,
    pub tail: RawMention,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawMention {
    pub surface: String,
    /// Code-point offset of the mention in `text`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub char_start: Option<usize>,
    pub tag: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Aligned {
    pub instance: Instance,
    /// Mentions resolved by first match because no offset was given.
    pub warnings: Vec<String>,
}

/// Resolves a raw record's mentions to token ranges.
///
/// Mentions with `char_start` must sit exactly at that offset; mentions
/// without one take the first token-aligned occurrence and produce a warning.
pub fn align_record(index: usize, raw: &RawRecord) -> Result<Aligned> {
    let id = raw.id.clone().unwrap_or_else(|| format!("rec-{index}"));
    if id.is_empty() {
        return Err(Error::MalformedRecord {
            index,
            reason: "empty id".into(),
        });
    }
    let sentence = Sentence::new(id, raw.text.clone());
    let mut warnings = Vec::new();
    let mut triples = Vec::with_capacity(raw.triples.len());
    for rt in &raw.triples {
        if rt.relation.is_empty() {
            return Err(Error::MalformedRecord {
                index,
                reason: "empty relation name".into(),
            });
        }
        let head = resolve_mention(index, &sentence, &rt.head, &mut warnings)?;
        let tail = resolve_mention(index, &sentence, &rt.tail, &mut warnings)?;
        triples.push(Triple {
            head,
            relation: rt.relation.clone(),
            tail,
        });
    }
    Ok(Aligned {
        instance: Instance { sentence, triples },
        warnings,
    })
}

fn resolve_mention(
    index: usize,
    sentence: &Sentence,
    raw: &RawMention,
    warnings: &mut Vec<String>,
) -> Result<EntityMention> {
    if raw.surface.is_empty() {
        return Err(Error::MalformedRecord {
            index,
            reason: "empty entity surface".into(),
        });
    }
    let align_err = |reason: String| Error::Alignment {
        sentence: sentence.id.clone(),
        surface: raw.surface.clone(),
        reason,
    };
    let (start, end) = match raw.char_start {
        Some(c) => {
            let b = text::char_to_byte(&sentence.text, c)
                .ok_or_else(|| align_err(format!("char offset {c} past end of text")))?;
            let e = b + raw.surface.len();
            if sentence.text.get(b..e) != Some(raw.surface.as_str()) {
                return Err(align_err(format!("surface not found at char offset {c}")));
            }
            sentence
                .token_range(b, e)
                .ok_or_else(|| align_err(format!("char offset {c} is not token-aligned")))?
        }
        None => {
            let found = sentence
                .text
                .match_indices(raw.surface.as_str())
                .find_map(|(b, s)| sentence.token_range(b, b + s.len()))
                .ok_or_else(|| align_err("surface not found in text".into()))?;
            warnings.push(format!(
                "sentence {}: mention {:?} has no offset, resolved by first match",
                sentence.id, raw.surface
            ));
            found
        }
    };
    Ok(EntityMention {
        token_start: start,
        token_end: end,
        surface: raw.surface.clone(),
        tag: raw.tag.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownRelationPolicy {
    #[default]
    Fail,
    Skip,
}

/// Drops (or rejects) triples whose relation is outside `schema`. Returns
/// the kept instances plus `(sentence id, relation)` for every skipped triple.
pub fn apply_schema(
    instances: Vec<Instance>,
    schema: &RelationSchema,
    policy: UnknownRelationPolicy,
) -> Result<(Vec<Instance>, Vec<(String, String)>)> {
    let mut skipped = Vec::new();
    let mut out = Vec::with_capacity(instances.len());
    for mut inst in instances {
        let mut kept = Vec::with_capacity(inst.triples.len());
        for t in inst.triples {
            if schema.relation_index(&t.relation).is_some() {
                kept.push(t);
                continue;
            }
            match policy {
                UnknownRelationPolicy::Fail => {
                    return Err(Error::UnknownRelation {
                        sentence: inst.sentence.id.clone(),
                        relation: t.relation,
                    })
                }
                UnknownRelationPolicy::Skip => skipped.push((inst.sentence.id.clone(), t.relation)),
            }
        }
        inst.triples = kept;
        out.push(inst);
    }
    Ok((out, skipped))
}

/// Span-length bound of the tagging convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagScheme {
    pub max_span: usize,
}

impl Default for TagScheme {
    fn default() -> Self {
        Self { max_span: 8 }
    }
}

impl TagScheme {
    /// Smallest scheme that can encode every mention in `instances`.
    pub fn fitting<'a, I>(instances: I) -> Self
    where
        I: IntoIterator<Item = &'a Instance>,
    {
        let max_span = instances
            .into_iter()
            .flat_map(|i| i.triples.iter())
            .flat_map(|t| [t.head.len(), t.tail.len()])
            .max()
            .unwrap_or(1)
            .max(1);
        Self { max_span }
    }

    pub fn vocab_size(&self, schema: &RelationSchema) -> usize {
        let l = self.max_span;
        let e = schema.entity_tags().len();
        1 + l * l * e * e
    }

    fn encode(&self, head_len: usize, tail_len: usize, head_tag: usize, tail_tag: usize, e: usize) -> u32 {
        let l = self.max_span;
        (1 + ((((head_len - 1) * l + (tail_len - 1)) * e + head_tag) * e + tail_tag)) as u32
    }

    fn decode(&self, tag: u32, e: usize) -> (usize, usize, usize, usize) {
        let l = self.max_span;
        let mut v = tag as usize - 1;
        let tail_tag = v % e;
        v /= e;
        let head_tag = v % e;
        v /= e;
        let tail_len = v % l + 1;
        let head_len = v / l + 1;
        (head_len, tail_len, head_tag, tail_tag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TagEntry {
    /// Head start token (row i).
    pub head: usize,
    /// Relation index k.
    pub relation: usize,
    /// Tail start token (column j).
    pub tail: usize,
    pub tag: u32,
}

/// Sparse stand-in for the `n × K × n` tag tensor of one sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagAssignment {
    /// Sorted by cell, one entry per non-null cell.
    pub entries: Vec<TagEntry>,
    /// Token count n.
    pub n: usize,
    /// Relation count K.
    pub k: usize,
    /// Tag vocabulary size T, including the null tag 0.
    pub tag_vocab_size: usize,
}

impl TagAssignment {
    pub fn cell_count(&self) -> usize {
        self.n * self.k * self.n
    }

    pub fn gold_tag(&self, head: usize, relation: usize, tail: usize) -> u32 {
        self.entries
            .binary_search_by(|e| (e.head, e.relation, e.tail).cmp(&(head, relation, tail)))
            .map(|i| self.entries[i].tag)
            .unwrap_or(0)
    }
}

pub fn triples_to_tags(
    sentence: &Sentence,
    triples: &[Triple],
    schema: &RelationSchema,
    scheme: TagScheme,
) -> Result<TagAssignment> {
    let e = schema.entity_tags().len();
    let mut cells: BTreeMap<(usize, usize, usize), u32> = BTreeMap::new();
    for t in triples {
        let k = schema.relation_index(&t.relation).ok_or_else(|| Error::UnknownRelation {
            sentence: sentence.id.clone(),
            relation: t.relation.clone(),
        })?;
        let mut tag_ids = [0usize; 2];
        for (slot, m) in [&t.head, &t.tail].into_iter().enumerate() {
            if m.is_empty() || m.token_end > sentence.len() {
                return Err(Error::Schema(format!(
                    "sentence {}: mention {:?} outside the sentence",
                    sentence.id, m.surface
                )));
            }
            if m.len() > scheme.max_span {
                return Err(Error::Schema(format!(
                    "sentence {}: mention {:?} spans {} tokens, scheme allows {}",
                    sentence.id,
                    m.surface,
                    m.len(),
                    scheme.max_span
                )));
            }
            tag_ids[slot] = schema.tag_index(&m.tag).ok_or_else(|| {
                Error::Schema(format!("sentence {}: entity tag {:?} not in schema", sentence.id, m.tag))
            })?;
        }
        let tag = scheme.encode(t.head.len(), t.tail.len(), tag_ids[0], tag_ids[1], e);
        let cell = (t.head.token_start, k, t.tail.token_start);
        match cells.get(&cell) {
            Some(&existing) if existing != tag => {
                return Err(Error::TagCollision {
                    sentence: sentence.id.clone(),
                    head: cell.0,
                    relation: cell.1,
                    tail: cell.2,
                })
            }
            _ => {
                cells.insert(cell, tag);
            }
        }
    }
    Ok(TagAssignment {
        entries: cells
            .into_iter()
            .map(|((head, relation, tail), tag)| TagEntry {
                head,
                relation,
                tail,
                tag,
            })
            .collect(),
        n: sentence.len(),
        k: schema.len(),
        tag_vocab_size: scheme.vocab_size(schema),
    })
}

/// Inverse of [`triples_to_tags`]; triples come back in cell order.
pub fn tags_to_triples(
    sentence: &Sentence,
    tags: &TagAssignment,
    schema: &RelationSchema,
    scheme: TagScheme,
) -> Result<Vec<Triple>> {
    let e = schema.entity_tags().len();
    let vocab = scheme.vocab_size(schema);
    let mut out = Vec::with_capacity(tags.entries.len());
    for entry in &tags.entries {
        if entry.tag == 0 || entry.tag as usize >= vocab {
            return Err(Error::Schema(format!("tag id {} outside vocabulary of {vocab}", entry.tag)));
        }
        let relation = schema
            .relations()
            .get(entry.relation)
            .ok_or_else(|| Error::Schema(format!("relation index {} out of range", entry.relation)))?;
        let (hl, tl, ht, tt) = scheme.decode(entry.tag, e);
        let mention = |start: usize, len: usize, tag: usize| -> Result<EntityMention> {
            let end = start + len;
            if end > sentence.len() {
                return Err(Error::Schema(format!(
                    "sentence {}: decoded span {start}..{end} past {} tokens",
                    sentence.id,
                    sentence.len()
                )));
            }
            Ok(EntityMention {
                token_start: start,
                token_end: end,
                surface: sentence.covered_text(start, end).to_string(),
                tag: schema.entity_tags()[tag].clone(),
            })
        };
        out.push(Triple {
            head: mention(entry.head, hl, ht)?,
            relation: relation.clone(),
            tail: mention(entry.tail, tl, tt)?,
        });
    }
    Ok(out)
}

/// Appends `round(rate · |dataset|)` instances drawn from `foreign`.
///
/// Originals come first, untouched and in order. Draws are without
/// replacement while the foreign pool suffices, with replacement otherwise.
/// Drawn instances are renamed `perturbed-<k>-<id>` so ids stay unique.
pub fn inject_perturbation(
    dataset: &[Instance],
    foreign: &[Instance],
    rate: f64,
    seed: u64,
) -> Result<Vec<Instance>> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Config(format!("perturbation rate {rate} outside [0, 1]")));
    }
    let count = libm::round(rate * dataset.len() as f64) as usize;
    let mut out = dataset.to_vec();
    if count == 0 {
        return Ok(out);
    }
    if foreign.is_empty() {
        return Err(Error::Config("perturbation rate > 0 with an empty foreign pool".into()));
    }
    let mut rng = seed::rng(seed);
    let picks: Vec<usize> = if count <= foreign.len() {
        index::sample(&mut rng, foreign.len(), count).into_vec()
    } else {
        (0..count).map(|_| rng.gen_range(0..foreign.len())).collect()
    };
    for (k, i) in picks.into_iter().enumerate() {
        let mut inst = foreign[i].clone();
        inst.sentence.id = format!("perturbed-{k}-{}", inst.sentence.id);
        out.push(inst);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn mention(s: &Sentence, start: usize, end: usize, tag: &str) -> EntityMention {
        EntityMention {
            token_start: start,
            token_end: end,
            surface: s.covered_text(start, end).to_string(),
            tag: tag.into(),
        }
    }

    fn raw(text: &str, triples: Vec<(&str, Option<usize>, &str, &str, Option<usize>)>) -> RawRecord {
        RawRecord {
            id: Some("s0".into()),
            text: text.into(),
            triples: triples
                .into_iter()
                .map(|(h, hc, r, t, tc)| RawTriple {
                    head: RawMention {
                        surface: h.into(),
                        char_start: hc,
                        tag: "x".into(),
                    },
                    relation: r.into(),
                    tail: RawMention {
                        surface: t.into(),
                        char_start: tc,
                        tag: "x".into(),
                    },
                })
                .collect(),
        }
    }

    #[test]
    fn minimal_record_aligns() {
        let a = align_record(0, &raw("a b c", vec![("a", Some(0), "rel0", "c", Some(4))])).unwrap();
        let t = &a.instance.triples[0];
        assert_eq!((t.head.token_start, t.head.token_end), (0, 1));
        assert_eq!((t.tail.token_start, t.tail.token_end), (2, 3));
        assert!(a.warnings.is_empty());
    }

    #[test]
    fn duplicate_surface_resolved_by_offset() {
        // "Paris" occurs at chars 0 and 19; the record points at the second.
        let text = "Paris is lovely ; Paris , France";
        let a = align_record(0, &raw(text, vec![("Paris", Some(18), "in", "France", Some(26))])).unwrap();
        let t = &a.instance.triples[0];
        assert_eq!((t.head.token_start, t.head.token_end), (4, 5));
        assert_eq!((t.tail.token_start, t.tail.token_end), (6, 7));
        // without offsets the first match wins, with a warning
        let b = align_record(0, &raw(text, vec![("Paris", None, "in", "France", None)])).unwrap();
        assert_eq!(b.instance.triples[0].head.token_start, 0);
        assert_eq!(b.warnings.len(), 2);
    }

    #[test]
    fn misaligned_offset_is_an_alignment_error() {
        let err = align_record(3, &raw("a b c", vec![("b", Some(0), "r", "c", Some(4))])).unwrap_err();
        assert!(matches!(err, Error::Alignment { ref sentence, .. } if sentence == "s0"));
        let err = align_record(3, &raw("ab c", vec![("a", Some(0), "r", "c", Some(3))])).unwrap_err();
        assert!(matches!(err, Error::Alignment { .. }));
    }

    #[test]
    fn schema_policy() {
        let a = align_record(0, &raw("a b c", vec![("a", Some(0), "known", "c", Some(4))])).unwrap();
        let b = align_record(1, &raw("a b c", vec![("a", Some(0), "other", "c", Some(4))])).unwrap();
        let schema = RelationSchema::new(["known"], ["x"]).unwrap();
        let data = vec![a.instance, b.instance];
        assert!(matches!(
            apply_schema(data.clone(), &schema, UnknownRelationPolicy::Fail),
            Err(Error::UnknownRelation { .. })
        ));
        let (kept, skipped) = apply_schema(data, &schema, UnknownRelationPolicy::Skip).unwrap();
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[1].triples.len(), 0);
        assert_eq!(skipped, vec![("s0".to_string(), "other".to_string())]);
    }

    #[test]
    fn schema_rejects_duplicates_and_empty() {
        assert!(RelationSchema::new(["a", "a"], ["x"]).is_err());
        assert!(RelationSchema::new(Vec::<String>::new(), ["x"]).is_err());
    }

    #[test]
    fn no_triples_no_entries() {
        let s = Sentence::new("s", "a b c");
        let schema = RelationSchema::new(["r"], ["x"]).unwrap();
        let tags = triples_to_tags(&s, &[], &schema, TagScheme::default()).unwrap();
        assert!(tags.entries.is_empty());
        assert_eq!(tags.n, 3);
    }

    #[test]
    fn head_start_tail_start_cell() {
        let s = Sentence::new("s", "t0 t1 t2 t3 t4 t5");
        let schema = RelationSchema::new(["r0", "r1", "r2"], ["x"]).unwrap();
        let triple = Triple {
            head: mention(&s, 0, 2, "x"),
            relation: "r2".into(),
            tail: mention(&s, 4, 5, "x"),
        };
        let tags = triples_to_tags(&s, &[triple.clone()], &schema, TagScheme::default()).unwrap();
        assert_eq!(tags.entries.len(), 1);
        let e = tags.entries[0];
        assert_eq!((e.head, e.relation, e.tail), (0, 2, 4));
        assert_eq!(tags.gold_tag(0, 2, 4), e.tag);
        assert_eq!(tags.gold_tag(0, 1, 4), 0);
        let back = tags_to_triples(&s, &tags, &schema, TagScheme::default()).unwrap();
        assert_eq!(back, vec![triple]);
    }

    #[test]
    fn unknown_relation_is_schema_error() {
        let s = Sentence::new("s", "a b");
        let schema = RelationSchema::new(["r"], ["x"]).unwrap();
        let t = Triple {
            head: mention(&s, 0, 1, "x"),
            relation: "nope".into(),
            tail: mention(&s, 1, 2, "x"),
        };
        assert!(matches!(
            triples_to_tags(&s, &[t], &schema, TagScheme::default()),
            Err(Error::UnknownRelation { .. })
        ));
    }

    /// Every span of a 5-token sentence, paired over two relations: each
    /// 2-triple configuration either round-trips or collides on a cell.
    #[test]
    fn two_triple_round_trip_brute_force() {
        let s = Sentence::new("s", "a b c d e");
        let schema = RelationSchema::new(["r0", "r1"], ["x", "y"]).unwrap();
        let scheme = TagScheme { max_span: 5 };
        let mut spans = Vec::new();
        for a in 0..5 {
            for b in a + 1..=5 {
                for tag in ["x", "y"] {
                    spans.push(mention(&s, a, b, tag));
                }
            }
        }
        let mut triples = Vec::new();
        for h in &spans {
            for t in &spans {
                for r in ["r0", "r1"] {
                    triples.push(Triple {
                        head: h.clone(),
                        relation: r.into(),
                        tail: t.clone(),
                    });
                }
            }
        }
        let mut checked = 0usize;
        // a fixed stride keeps the pair count manageable while covering every
        // first triple
        for (i, t1) in triples.iter().enumerate() {
            for t2 in triples.iter().skip(i).step_by(37) {
                let set: BTreeSet<Triple> = [t1.clone(), t2.clone()].into_iter().collect();
                let list: Vec<Triple> = set.iter().cloned().collect();
                let collides = list.len() == 2
                    && t1.head.token_start == t2.head.token_start
                    && t1.tail.token_start == t2.tail.token_start
                    && t1.relation == t2.relation;
                match triples_to_tags(&s, &list, &schema, scheme) {
                    Ok(tags) => {
                        assert!(!collides);
                        let back: BTreeSet<Triple> =
                            tags_to_triples(&s, &tags, &schema, scheme).unwrap().into_iter().collect();
                        assert_eq!(back, set);
                        checked += 1;
                    }
                    Err(Error::TagCollision { .. }) => assert!(collides),
                    Err(e) => panic!("{e}"),
                }
            }
        }
        assert!(checked > 10_000);
    }

    fn toy(n: usize, prefix: &str) -> Vec<Instance> {
        (0..n)
            .map(|i| Instance {
                sentence: Sentence::new(format!("{prefix}{i:03}"), format!("w{i} x")),
                triples: vec![],
            })
            .collect()
    }

    #[test]
    fn perturbation_counts_and_determinism() {
        let data = toy(100, "d");
        let foreign = toy(30, "f");
        assert_eq!(inject_perturbation(&data, &foreign, 0.0, 1).unwrap(), data);
        let out = inject_perturbation(&data, &foreign, 0.1, 9).unwrap();
        assert_eq!(out.len(), 110);
        assert_eq!(&out[..100], &data[..]);
        assert!(out[100..].iter().all(|i| i.id().starts_with("perturbed-")));
        assert_eq!(out, inject_perturbation(&data, &foreign, 0.1, 9).unwrap());
        // pool smaller than the draw count falls back to replacement
        let big = inject_perturbation(&data, &foreign[..3], 0.5, 9).unwrap();
        assert_eq!(big.len(), 150);
        assert!(matches!(inject_perturbation(&data, &[], 0.1, 1), Err(Error::Config(_))));
        assert!(inject_perturbation(&data, &foreign, 1.5, 1).is_err());
    }
}
