//! Block similarity, the hybrid score and per-group candidate queues.
//!
//! Five component signals, each in `[0, 1]` and symmetric:
//!
//! | signal | definition |
//! |---|---|
//! | semantic | rescaled cosine of the spans embedded on their own |
//! | syntactic | POS-pattern edit similarity of the spans |
//! | lexical | Jaccard of lowercased span tokens |
//! | context | Jaccard of lowercased context tokens |
//! | contextual embedding | rescaled cosine of the spans pooled in sentence context |
//!
//! The hybrid score is their weighted mean `Σ wᵢcᵢ / Σ wᵢ`.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use serde::{Deserialize, Serialize};

use crate::corpus::Sentence;
use crate::discretize::{BlockLibrary, GroupKey, TextBlock};
use crate::embedding::{self, EmbeddingProvider, EmbeddingVector, SentenceEmbedding};
use crate::error::{Error, Result};
use crate::pos::{self, Pos};
use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityWeights {
    pub semantic: f64,
    pub syntactic: f64,
    pub lexical: f64,
    pub context: f64,
    pub contextual_embedding: f64,
}

impl Default for SimilarityWeights {
    fn default() -> Self {
        Self::from_array([1.0; 5])
    }
}

impl SimilarityWeights {
    pub fn from_array(w: [f64; 5]) -> Self {
        Self {
            semantic: w[0],
            syntactic: w[1],
            lexical: w[2],
            context: w[3],
            contextual_embedding: w[4],
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.semantic, self.syntactic, self.lexical, self.context, self.contextual_embedding]
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.as_array();
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Config("similarity weights must be finite and nonnegative".into()));
        }
        if w.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config("similarity weights sum to zero".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentScores {
    pub semantic: f64,
    pub syntactic: f64,
    pub lexical: f64,
    pub context: f64,
    pub contextual_embedding: f64,
}

impl ComponentScores {
    pub fn from_array(c: [f64; 5]) -> Self {
        Self {
            semantic: c[0],
            syntactic: c[1],
            lexical: c[2],
            context: c[3],
            contextual_embedding: c[4],
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.semantic, self.syntactic, self.lexical, self.context, self.contextual_embedding]
    }
}

/// Θ = Σ w·c / Σ w, evaluated as `1 − Σ w·(1−c) / Σ w` so that all-one
/// components give exactly 1.
pub fn hybrid_score(components: &ComponentScores, weights: &SimilarityWeights) -> Result<f64> {
    weights.validate()?;
    let w = weights.as_array();
    let c = components.as_array();
    let gap: f64 = w.iter().zip(&c).map(|(w, c)| w * (1.0 - c)).sum();
    let den: f64 = w.iter().sum();
    Ok((1.0 - gap / den).clamp(0.0, 1.0))
}

/// Why a pair of blocks cannot be scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectCode {
    EmptySpan,
    RoleMismatch,
    GroupMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub code: RejectCode,
    pub source: String,
    pub replacement: String,
}

/// Per-block inputs of the component signals.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockFeatures {
    span_words: BTreeSet<String>,
    context_words: BTreeSet<String>,
    pattern: Vec<Pos>,
    context_free: EmbeddingVector,
    contextual: EmbeddingVector,
}

impl BlockFeatures {
    /// `sentence_embedding` is the embedding of the block's source sentence.
    pub fn compute<P: EmbeddingProvider + ?Sized>(
        block: &TextBlock,
        provider: &P,
        sentence_embedding: &SentenceEmbedding,
    ) -> Result<Self> {
        if block.is_empty() {
            return Err(Error::EmptySpan { block: block.id.clone() });
        }
        let words = text::words(&block.span_text);
        Ok(Self {
            span_words: words.iter().map(|w| w.to_lowercase()).collect(),
            context_words: block.context_tokens.iter().map(|w| w.to_lowercase()).collect(),
            pattern: pos::tag_words(&words),
            context_free: provider.embed_text(&block.span_text)?.pooled,
            contextual: embedding::pool_span(sentence_embedding, block.cut, &block.id)?,
        })
    }
}

pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

pub fn scores_from_features(a: &BlockFeatures, b: &BlockFeatures) -> ComponentScores {
    ComponentScores {
        semantic: embedding::rescaled_cosine(&a.context_free, &b.context_free),
        syntactic: pos::edit_similarity(&a.pattern, &b.pattern),
        lexical: jaccard(&a.span_words, &b.span_words),
        context: jaccard(&a.context_words, &b.context_words),
        contextual_embedding: embedding::rescaled_cosine(&a.contextual, &b.contextual),
    }
}

/// Scores one block pair, embedding both source sentences with `provider`.
pub fn component_scores<P: EmbeddingProvider + ?Sized>(
    a: &TextBlock,
    b: &TextBlock,
    a_sentence: &Sentence,
    b_sentence: &Sentence,
    provider: &P,
) -> Result<core::result::Result<ComponentScores, Rejection>> {
    let reject = |code| {
        Ok(Err(Rejection {
            code,
            source: a.id.clone(),
            replacement: b.id.clone(),
        }))
    };
    if a.role != b.role {
        return reject(RejectCode::RoleMismatch);
    }
    if GroupKey::of(a) != GroupKey::of(b) {
        return reject(RejectCode::GroupMismatch);
    }
    if a.is_empty() || b.is_empty() {
        return reject(RejectCode::EmptySpan);
    }
    let ea = provider.embed_sentence(&a_sentence.text, &a_sentence.tokens)?;
    let eb = provider.embed_sentence(&b_sentence.text, &b_sentence.tokens)?;
    let fa = BlockFeatures::compute(a, provider, &ea)?;
    let fb = BlockFeatures::compute(b, provider, &eb)?;
    Ok(Ok(scores_from_features(&fa, &fb)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchCandidate {
    pub source: TextBlock,
    pub replacement: TextBlock,
    pub components: ComponentScores,
    /// Θ.
    pub hybrid: f64,
}

/// Queue order: hybrid descending, then source id, then replacement id.
pub fn candidate_order(a: &MatchCandidate, b: &MatchCandidate) -> Ordering {
    b.hybrid
        .total_cmp(&a.hybrid)
        .then_with(|| a.source.id.cmp(&b.source.id))
        .then_with(|| a.replacement.id.cmp(&b.replacement.id))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateQueue {
    pub group: GroupKey,
    pub entries: Vec<MatchCandidate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueConfig {
    pub weights: SimilarityWeights,
    /// Pre-filter on Θ.
    pub floor: f64,
    /// Per-group candidate cap, applied after sorting.
    pub cap: usize,
}

impl Default for QueueConfig {
    fn default() -> Self {
        Self {
            weights: SimilarityWeights::default(),
            floor: 0.0,
            cap: 5_000,
        }
    }
}

impl QueueConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if !(0.0..=1.0).contains(&self.floor) {
            return Err(Error::Config(format!("floor {} outside [0, 1]", self.floor)));
        }
        Ok(())
    }
}

/// Features of every non-empty block in `library`, keyed by block id.
pub fn library_features<P: EmbeddingProvider + ?Sized>(
    library: &BlockLibrary,
    sentences: &BTreeMap<String, Sentence>,
    provider: &P,
) -> Result<BTreeMap<String, BlockFeatures>> {
    let mut sentence_embeddings: BTreeMap<&str, SentenceEmbedding> = BTreeMap::new();
    let mut out = BTreeMap::new();
    for block in library.iter_blocks().filter(|b| !b.is_empty()) {
        let id = block.source_sentence.as_str();
        if !sentence_embeddings.contains_key(id) {
            let s = sentences
                .get(id)
                .ok_or_else(|| Error::Config(format!("block {} refers to unknown sentence {id}", block.id)))?;
            let emb = provider.embed_sentence(&s.text, &s.tokens)?;
            embedding::check_embedding(&emb, provider.dimension(), s.len())?;
            sentence_embeddings.insert(id, emb);
        }
        let features = BlockFeatures::compute(block, provider, &sentence_embeddings[id])?;
        out.insert(block.id.clone(), features);
    }
    Ok(out)
}

/// Candidate queue of one group: every ordered pair of distinct-surface,
/// non-empty blocks with Θ ≥ floor, sorted and capped.
pub fn group_queue(
    group: &GroupKey,
    blocks: &[TextBlock],
    features: &BTreeMap<String, BlockFeatures>,
    config: &QueueConfig,
) -> Result<CandidateQueue> {
    config.validate()?;
    let eligible: Vec<(&TextBlock, &BlockFeatures)> = blocks
        .iter()
        .filter(|b| !b.is_empty())
        .map(|b| {
            features
                .get(&b.id)
                .map(|f| (b, f))
                .ok_or_else(|| Error::Config(format!("missing features for block {}", b.id)))
        })
        .collect::<Result<_>>()?;
    let mut entries = Vec::new();
    for (i, (a, fa)) in eligible.iter().enumerate() {
        for (b, fb) in &eligible[i + 1..] {
            if a.span_text == b.span_text {
                continue;
            }
            let components = scores_from_features(fa, fb);
            let hybrid = hybrid_score(&components, &config.weights)?;
            if hybrid < config.floor {
                continue;
            }
            for (src, rep) in [(*a, *b), (*b, *a)] {
                entries.push(MatchCandidate {
                    source: src.clone(),
                    replacement: rep.clone(),
                    components,
                    hybrid,
                });
            }
        }
    }
    entries.sort_by(candidate_order);
    entries.truncate(config.cap);
    Ok(CandidateQueue {
        group: group.clone(),
        entries,
    })
}

pub fn build_queues<P: EmbeddingProvider + ?Sized>(
    library: &BlockLibrary,
    sentences: &BTreeMap<String, Sentence>,
    provider: &P,
    config: &QueueConfig,
) -> Result<BTreeMap<GroupKey, CandidateQueue>> {
    config.validate()?;
    let features = library_features(library, sentences, provider)?;
    library
        .groups
        .iter()
        .map(|(key, blocks)| Ok((key.clone(), group_queue(key, blocks, &features, config)?)))
        .collect()
}
