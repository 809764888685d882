//! Structure-consistent replacement.
//!
//! A replacement swaps the text at a block's cut for the surface of a matched
//! block from the same group, then rebuilds the sentence and remaps every
//! triple onto the new tokenization. Entity replacements are applied to
//! every token-aligned occurrence of the old entity surface, inside triples
//! or not, so a sentence never mentions both the old and the new entity.
//! Relation replacements swap the text between head and tail and relabel the
//! triple with the replacement block's relation.

use alloc::collections::{BTreeMap, BTreeSet, BinaryHeap};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::str::FromStr;
use serde::{Deserialize, Serialize};

use crate::corpus::{EntityMention, Instance, Sentence};
use crate::discretize::{role_span, GroupKey, Role};
use crate::error::{Error, Result};
use crate::matching::{candidate_order, CandidateQueue, MatchCandidate};
use crate::pos::{self, Pos};
use crate::text;

/// Which roles are replaced together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentMode {
    /// `(h,r,t)`: head, relation and tail of one triple.
    CoordinatedHrt,
    HeadOnly,
    TailOnly,
    /// `(r)`.
    RelationOnly,
    /// `(h,t)`.
    HtOnly,
    /// `(h,r,h)`: head and relation of one triple plus the head of the next
    /// triple in the sentence whose head surface differs.
    Hrh,
    /// `(t,r,t)`: the tail counterpart of [`AugmentMode::Hrh`].
    Trt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Target {
    Source,
    Second,
}

impl AugmentMode {
    pub const ALL: [AugmentMode; 7] = [
        AugmentMode::CoordinatedHrt,
        AugmentMode::HeadOnly,
        AugmentMode::TailOnly,
        AugmentMode::RelationOnly,
        AugmentMode::HtOnly,
        AugmentMode::Hrh,
        AugmentMode::Trt,
    ];

    fn steps(self) -> &'static [(Target, Role)] {
        use Role::*;
        use Target::*;
        match self {
            AugmentMode::CoordinatedHrt => &[(Source, Head), (Source, Relation), (Source, Tail)],
            AugmentMode::HeadOnly => &[(Source, Head)],
            AugmentMode::TailOnly => &[(Source, Tail)],
            AugmentMode::RelationOnly => &[(Source, Relation)],
            AugmentMode::HtOnly => &[(Source, Head), (Source, Tail)],
            AugmentMode::Hrh => &[(Source, Head), (Source, Relation), (Second, Head)],
            AugmentMode::Trt => &[(Source, Tail), (Source, Relation), (Second, Tail)],
        }
    }

    pub fn replaces_relation(self) -> bool {
        self.steps().iter().any(|(_, r)| *r == Role::Relation)
    }

    pub fn short_name(self) -> &'static str {
        match self {
            AugmentMode::CoordinatedHrt => "hrt",
            AugmentMode::HeadOnly => "h",
            AugmentMode::TailOnly => "t",
            AugmentMode::RelationOnly => "r",
            AugmentMode::HtOnly => "ht",
            AugmentMode::Hrh => "hrh",
            AugmentMode::Trt => "trt",
        }
    }

    fn single(role: Role) -> Self {
        match role {
            Role::Head => AugmentMode::HeadOnly,
            Role::Relation => AugmentMode::RelationOnly,
            Role::Tail => AugmentMode::TailOnly,
        }
    }
}

impl fmt::Display for AugmentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for AugmentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "hrt" | "coordinated_hrt" => AugmentMode::CoordinatedHrt,
            "h" | "head" | "head_only" => AugmentMode::HeadOnly,
            "t" | "tail" | "tail_only" => AugmentMode::TailOnly,
            "r" | "relation" | "relation_only" => AugmentMode::RelationOnly,
            "ht" | "ht_only" => AugmentMode::HtOnly,
            "hrh" => AugmentMode::Hrh,
            "trt" => AugmentMode::Trt,
            other => return Err(Error::Config(format!("unknown augmentation mode {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentPolicy {
    pub mode: AugmentMode,
    /// ε, the global threshold.
    pub epsilon: f64,
    /// ε₁, overrides ε for head and tail replacements.
    #[serde(default)]
    pub epsilon_entity: Option<f64>,
    /// ε₂, overrides ε for relation replacements.
    #[serde(default)]
    pub epsilon_relation: Option<f64>,
    pub max_per_sentence: usize,
    /// Combinations tried per sentence before giving up on filling the cap.
    pub max_attempts_per_sentence: usize,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            mode: AugmentMode::CoordinatedHrt,
            epsilon: 0.7,
            epsilon_entity: None,
            epsilon_relation: None,
            max_per_sentence: 3,
            max_attempts_per_sentence: 1_000,
        }
    }
}

impl AugmentPolicy {
    pub fn threshold(&self, role: Role) -> f64 {
        match role {
            Role::Head | Role::Tail => self.epsilon_entity.unwrap_or(self.epsilon),
            Role::Relation => self.epsilon_relation.unwrap_or(self.epsilon),
        }
    }

    /// Thresholds above 1 are allowed and simply admit nothing.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("epsilon", Some(self.epsilon)),
            ("epsilon_entity", self.epsilon_entity),
            ("epsilon_relation", self.epsilon_relation),
        ] {
            if let Some(v) = v {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Config(format!("{name} must be finite and nonnegative, got {v}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplacedSpan {
    pub triple: usize,
    pub role: Role,
    /// Θ of the candidate used.
    pub theta: f64,
    pub source_block: String,
    pub replacement_block: String,
    pub replacement_sentence: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_sentence: String,
    pub mode: AugmentMode,
    pub replaced: Vec<ReplacedSpan>,
}

impl Provenance {
    /// Mean Θ over the replaced spans.
    pub fn score(&self) -> f64 {
        if self.replaced.is_empty() {
            return 0.0;
        }
        self.replaced.iter().map(|r| r.theta).sum::<f64>() / self.replaced.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedInstance {
    pub sentence: Sentence,
    pub triples: Vec<crate::corpus::Triple>,
    pub provenance: Provenance,
}

impl AugmentedInstance {
    pub fn id(&self) -> &str {
        &self.sentence.id
    }

    pub fn to_instance(&self) -> Instance {
        Instance {
            sentence: self.sentence.clone(),
            triples: self.triples.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscardCode {
    WrongSentence,
    StaleCut,
    EmptyTarget,
    EmptyReplacement,
    OverlappingSpans,
    MentionInsideReplacedSpan,
    MisalignedSpan,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discard {
    pub code: DiscardCode,
    pub detail: String,
}

impl Discard {
    fn new(code: DiscardCode, detail: impl Into<String>) -> Self {
        Self {
            code,
            detail: detail.into(),
        }
    }
}

/// One replacement step, addressed relative to the current state of the
/// instance so that composed steps re-resolve offsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edit {
    pub triple: usize,
    pub role: Role,
    /// Cut relative to the start of the role span.
    pub offset_in_role: (usize, usize),
    pub replacement: String,
    /// New relation label, for relation edits.
    pub relation: Option<String>,
}

impl Edit {
    pub fn from_candidate(candidate: &MatchCandidate, triple: usize) -> Self {
        Self {
            triple,
            role: candidate.source.role,
            offset_in_role: candidate.source.offset_in_role,
            replacement: candidate.replacement.span_text.clone(),
            relation: (candidate.source.role == Role::Relation).then(|| candidate.replacement.relation.clone()),
        }
    }
}

fn overlaps(a: (usize, usize), b: (usize, usize)) -> bool {
    a.0 < b.1 && b.0 < a.1
}

/// Applies one edit and remaps every triple.
pub fn apply_edit(instance: &Instance, edit: &Edit) -> core::result::Result<Instance, Discard> {
    let s = &instance.sentence;
    let triple = instance
        .triples
        .get(edit.triple)
        .ok_or_else(|| Discard::new(DiscardCode::StaleCut, format!("no triple {}", edit.triple)))?;
    let span = role_span(triple, edit.role);
    let cut = (span.0 + edit.offset_in_role.0, span.0 + edit.offset_in_role.1);
    if cut.0 > cut.1 || cut.1 > span.1 {
        return Err(Discard::new(DiscardCode::StaleCut, format!("cut {cut:?} outside role span {span:?}")));
    }
    if cut.0 == cut.1 {
        return Err(Discard::new(DiscardCode::EmptyTarget, "empty target span"));
    }
    if edit.replacement.is_empty() {
        return Err(Discard::new(DiscardCode::EmptyReplacement, "empty replacement surface"));
    }
    let mentions: Vec<&EntityMention> = instance.triples.iter().flat_map(|t| [&t.head, &t.tail]).collect();
    let (cb, ce) = s.byte_span(cut.0, cut.1);

    // byte ranges to rewrite and their new text
    let mut byte_edits: Vec<(usize, usize, String)> = Vec::new();
    match edit.role {
        Role::Head | Role::Tail => {
            let m = if edit.role == Role::Head { &triple.head } else { &triple.tail };
            let (mb, me) = s.byte_span(m.token_start, m.token_end);
            let mut new_surface = String::with_capacity(me - mb + edit.replacement.len());
            new_surface.push_str(&s.text[mb..cb]);
            new_surface.push_str(&edit.replacement);
            new_surface.push_str(&s.text[ce..me]);
            if new_surface == m.surface {
                return Ok(instance.clone());
            }
            let mut ranges: BTreeSet<(usize, usize)> = mentions
                .iter()
                .filter(|x| x.surface == m.surface)
                .map(|x| (x.token_start, x.token_end))
                .collect();
            for (b, found) in s.text.match_indices(m.surface.as_str()) {
                if let Some(r) = s.token_range(b, b + found.len()) {
                    if !mentions.iter().any(|x| overlaps(r, (x.token_start, x.token_end))) {
                        ranges.insert(r);
                    }
                }
            }
            let ranges: Vec<(usize, usize)> = ranges.into_iter().collect();
            if ranges.windows(2).any(|w| overlaps(w[0], w[1])) {
                return Err(Discard::new(DiscardCode::OverlappingSpans, "occurrences of the entity overlap"));
            }
            for (a, z) in ranges {
                let (b, e) = s.byte_span(a, z);
                byte_edits.push((b, e, new_surface.clone()));
            }
        }
        Role::Relation => {
            if let Some(m) = mentions.iter().find(|x| overlaps(cut, (x.token_start, x.token_end))) {
                return Err(Discard::new(
                    DiscardCode::MentionInsideReplacedSpan,
                    format!("mention {:?} lies inside the relation span", m.surface),
                ));
            }
            byte_edits.push((cb, ce, edit.replacement.clone()));
        }
    }

    let mut new_text = String::with_capacity(s.text.len() + 16);
    let mut pos = 0;
    for (b, e, t) in &byte_edits {
        new_text.push_str(&s.text[pos..*b]);
        new_text.push_str(t);
        pos = *e;
    }
    new_text.push_str(&s.text[pos..]);

    let shift = |p: usize| -> usize {
        let mut out = p as isize;
        for (b, e, t) in &byte_edits {
            if *e <= p {
                out += t.len() as isize - (*e - *b) as isize;
            }
        }
        out as usize
    };
    let sentence = Sentence::new(s.id.clone(), new_text);
    let remap = |m: &EntityMention| -> core::result::Result<EntityMention, Discard> {
        let (mb, me) = s.byte_span(m.token_start, m.token_end);
        let (nb, ne) = match byte_edits.iter().find(|(b, e, _)| *b < me && mb < *e) {
            None => (shift(mb), shift(me)),
            Some((b, e, t)) if (*b, *e) == (mb, me) => (shift(mb), shift(mb) + t.len()),
            Some((b, e, _)) if mb <= *b && *e <= me => (shift(mb), shift(me)),
            Some(_) => {
                return Err(Discard::new(
                    DiscardCode::OverlappingSpans,
                    format!("mention {:?} partially overlaps a replaced span", m.surface),
                ))
            }
        };
        let (a, z) = sentence.token_range(nb, ne).ok_or_else(|| {
            Discard::new(DiscardCode::MisalignedSpan, format!("mention {:?} no longer token-aligned", m.surface))
        })?;
        Ok(EntityMention {
            token_start: a,
            token_end: z,
            surface: sentence.text[nb..ne].to_string(),
            tag: m.tag.clone(),
        })
    };
    let mut triples = Vec::with_capacity(instance.triples.len());
    for (i, t) in instance.triples.iter().enumerate() {
        let head = remap(&t.head)?;
        let tail = remap(&t.tail)?;
        if head.overlaps(&tail) {
            return Err(Discard::new(DiscardCode::OverlappingSpans, format!("triple {i} head and tail overlap")));
        }
        let relation = match (&edit.relation, i == edit.triple) {
            (Some(r), true) => r.clone(),
            _ => t.relation.clone(),
        };
        triples.push(crate::corpus::Triple { head, relation, tail });
    }
    Ok(Instance { sentence, triples })
}

/// Applies a single matched candidate to the instance its source block
/// came from.
pub fn apply_replacement(
    instance: &Instance,
    candidate: &MatchCandidate,
) -> core::result::Result<AugmentedInstance, Discard> {
    let src = &candidate.source;
    if src.source_sentence != instance.sentence.id {
        return Err(Discard::new(
            DiscardCode::WrongSentence,
            format!("block {} is not from sentence {}", src.id, instance.sentence.id),
        ));
    }
    let triple = instance
        .triples
        .get(src.source_triple)
        .ok_or_else(|| Discard::new(DiscardCode::StaleCut, format!("no triple {}", src.source_triple)))?;
    let span = role_span(triple, src.role);
    if (span.0 + src.offset_in_role.0, span.0 + src.offset_in_role.1) != src.cut
        || instance.sentence.covered_text(src.cut.0, src.cut.1.min(instance.sentence.len())) != src.span_text
    {
        return Err(Discard::new(DiscardCode::StaleCut, format!("block {} does not match the sentence", src.id)));
    }
    let rebuilt = apply_edit(instance, &Edit::from_candidate(candidate, src.source_triple))?;
    Ok(AugmentedInstance {
        sentence: rebuilt.sentence,
        triples: rebuilt.triples,
        provenance: Provenance {
            source_sentence: instance.sentence.id.clone(),
            mode: AugmentMode::single(src.role),
            replaced: alloc::vec![ReplacedSpan {
                triple: src.source_triple,
                role: src.role,
                theta: candidate.hybrid,
                source_block: src.id.clone(),
                replacement_block: candidate.replacement.id.clone(),
                replacement_sentence: candidate.replacement.source_sentence.clone(),
            }],
        },
    })
}

/// Candidates indexed by the (sentence, triple, role) of their source block,
/// each list in queue order.
pub type CandidateIndex<'a> = BTreeMap<(&'a str, usize, Role), Vec<&'a MatchCandidate>>;

pub fn index_candidates<'a, I>(queues: I) -> CandidateIndex<'a>
where
    I: IntoIterator<Item = &'a CandidateQueue>,
{
    let mut index: CandidateIndex<'a> = BTreeMap::new();
    for q in queues {
        for c in &q.entries {
            index
                .entry((c.source.source_sentence.as_str(), c.source.source_triple, c.source.role))
                .or_default()
                .push(c);
        }
    }
    for list in index.values_mut() {
        list.sort_by(|a, b| candidate_order(a, b));
    }
    index
}

#[derive(Debug, Clone, PartialEq)]
struct Combo {
    score: f64,
    triple: usize,
    picks: Vec<usize>,
}

impl Eq for Combo {}

impl Ord for Combo {
    // max-heap: higher score first, then lower triple, then lower picks
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.triple.cmp(&self.triple))
            .then_with(|| other.picks.cmp(&self.picks))
    }
}

impl PartialOrd for Combo {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Per-step candidate lists for one source triple under `mode`, each
/// filtered by its role threshold. `None` when the mode does not apply.
fn step_lists<'a>(
    instance: &Instance,
    triple: usize,
    policy: &AugmentPolicy,
    index: &CandidateIndex<'a>,
) -> Option<Vec<(usize, Role, Vec<&'a MatchCandidate>)>> {
    let id = instance.sentence.id.as_str();
    let src = &instance.triples[triple];
    let mut out = Vec::new();
    for &(target, role) in policy.mode.steps() {
        let t = match target {
            Target::Source => triple,
            Target::Second => {
                let surface = |i: usize| {
                    let tr = &instance.triples[i];
                    if role == Role::Head { &tr.head.surface } else { &tr.tail.surface }
                };
                let own = if role == Role::Head { &src.head.surface } else { &src.tail.surface };
                (0..instance.triples.len()).find(|&j| j != triple && surface(j) != own)?
            }
        };
        let threshold = policy.threshold(role);
        let list: Vec<&MatchCandidate> = index
            .get(&(id, t, role))
            .map(|l| l.iter().copied().filter(|c| c.hybrid >= threshold).collect())
            .unwrap_or_default();
        if list.is_empty() {
            return None;
        }
        out.push((t, role, list));
    }
    Some(out)
}

fn combo_score(lists: &[(usize, Role, Vec<&MatchCandidate>)], picks: &[usize]) -> f64 {
    lists.iter().zip(picks).map(|((_, _, l), &i)| l[i].hybrid).sum::<f64>() / picks.len() as f64
}

/// Generates augmented instances for one sentence.
pub fn augment_instance(
    instance: &Instance,
    index: &CandidateIndex<'_>,
    policy: &AugmentPolicy,
) -> Vec<AugmentedInstance> {
    let mut out = Vec::new();
    if policy.max_per_sentence == 0 {
        return out;
    }
    let lists: Vec<Option<Vec<(usize, Role, Vec<&MatchCandidate>)>>> = (0..instance.triples.len())
        .map(|t| step_lists(instance, t, policy, index))
        .collect();
    let mut heap = BinaryHeap::new();
    let mut seen: BTreeSet<(usize, Vec<usize>)> = BTreeSet::new();
    for (t, l) in lists.iter().enumerate() {
        if let Some(l) = l {
            let picks = alloc::vec![0; l.len()];
            seen.insert((t, picks.clone()));
            heap.push(Combo {
                score: combo_score(l, &picks),
                triple: t,
                picks,
            });
        }
    }
    let mut texts: BTreeSet<String> = BTreeSet::new();
    texts.insert(instance.sentence.text.clone());
    let mut attempts = 0;
    while let Some(combo) = heap.pop() {
        if out.len() >= policy.max_per_sentence || attempts >= policy.max_attempts_per_sentence {
            break;
        }
        attempts += 1;
        let l = lists[combo.triple].as_ref().expect("combo from a live triple");
        for k in 0..combo.picks.len() {
            if combo.picks[k] + 1 < l[k].2.len() {
                let mut next = combo.picks.clone();
                next[k] += 1;
                if seen.insert((combo.triple, next.clone())) {
                    heap.push(Combo {
                        score: combo_score(l, &next),
                        triple: combo.triple,
                        picks: next,
                    });
                }
            }
        }
        let mut current = instance.clone();
        let mut replaced = Vec::with_capacity(l.len());
        let mut ok = true;
        for ((t, role, list), &pick) in l.iter().zip(&combo.picks) {
            let c = list[pick];
            match apply_edit(&current, &Edit::from_candidate(c, *t)) {
                Ok(next) => current = next,
                Err(_) => {
                    ok = false;
                    break;
                }
            }
            replaced.push(ReplacedSpan {
                triple: *t,
                role: *role,
                theta: c.hybrid,
                source_block: c.source.id.clone(),
                replacement_block: c.replacement.id.clone(),
                replacement_sentence: c.replacement.source_sentence.clone(),
            });
        }
        if !ok || !texts.insert(current.sentence.text.clone()) {
            continue;
        }
        current.sentence.id = format!("{}~aug{}", instance.sentence.id, out.len());
        out.push(AugmentedInstance {
            sentence: current.sentence,
            triples: current.triples,
            provenance: Provenance {
                source_sentence: instance.sentence.id.clone(),
                mode: policy.mode,
                replaced,
            },
        });
    }
    out
}

/// Augments every instance, in sentence-id order. Output holds augmented
/// instances only.
pub fn augment_dataset<'a, Q>(dataset: &[Instance], queues: Q, policy: &AugmentPolicy) -> Result<Vec<AugmentedInstance>>
where
    Q: IntoIterator<Item = &'a CandidateQueue>,
{
    policy.validate()?;
    let index = index_candidates(queues);
    let mut order: Vec<&Instance> = dataset.iter().collect();
    order.sort_by(|a, b| a.sentence.id.cmp(&b.sentence.id));
    Ok(order
        .into_iter()
        .flat_map(|inst| augment_instance(inst, &index, policy))
        .collect())
}

/// Convenience for queue maps keyed by group.
pub fn augment_with_map(
    dataset: &[Instance],
    queues: &BTreeMap<GroupKey, CandidateQueue>,
    policy: &AugmentPolicy,
) -> Result<Vec<AugmentedInstance>> {
    augment_dataset(dataset, queues.values(), policy)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    /// ν.
    pub nu: f64,
    pub source_pattern: Vec<Pos>,
    pub candidate_pattern: Vec<Pos>,
}

/// ν = 1 − normalized edit distance between the POS patterns.
pub fn coherence(source_text: &str, candidate_text: &str) -> CoherenceReport {
    let source_pattern = pos::tag_words(&text::words(source_text));
    let candidate_pattern = pos::tag_words(&text::words(candidate_text));
    CoherenceReport {
        nu: pos::edit_similarity(&source_pattern, &candidate_pattern),
        source_pattern,
        candidate_pattern,
    }
}

pub fn coherence_score(source: &Sentence, candidate: &AugmentedInstance) -> CoherenceReport {
    coherence(&source.text, &candidate.sentence.text)
}
