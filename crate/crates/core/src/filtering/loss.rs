use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::scorer::{log_softmax, PairScorer};
use crate::augment::AugmentedInstance;
use crate::corpus::{triples_to_tags, RelationSchema, Sentence, TagAssignment, TagScheme};
use crate::embedding::{check_embedding, EmbeddingProvider};
use crate::error::{Error, Result};


/// A distribution over the tag vocabulary for every cell of an `n × K × n`
/// tag tensor.
pub trait TagModel {
    /// Token count n.
    fn tokens(&self) -> usize;
    /// Relation count K.
    fn relations(&self) -> usize;
    /// Vocabulary size T, null tag included.
    fn num_tags(&self) -> usize;
    fn log_prob(&self, head: usize, relation: usize, tail: usize, tag: u32) -> f64;

    /// Σ over all cells of log P(null).
    fn total_null_log_prob(&self) -> f64 {
        let (n, k) = (self.tokens(), self.relations());
        let mut total = 0.0;
        for i in 0..n {
            for r in 0..k {
                for j in 0..n {
                    total += self.log_prob(i, r, j, 0);
                }
            }
        }
        total
    }
}

/// Explicit logits for every cell, for hand-set predictors.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLogits {
    n: usize,
    k: usize,
    t: usize,
    /// `[i][r][j][tag]`, row-major.
    logits: Vec<f64>,
}

impl DenseLogits {
    pub fn new(n: usize, k: usize, t: usize, logits: Vec<f64>) -> Result<Self> {
        if logits.len() != n * k * n * t || t == 0 {
            return Err(Error::Shape(format!(
                "{n}x{k}x{n} tensor over {t} tags needs {} logits, got {}",
                n * k * n * t,
                logits.len()
            )));
        }
        Ok(Self { n, k, t, logits })
    }

    pub fn uniform(n: usize, k: usize, t: usize) -> Self {
        Self {
            n,
            k,
            t,
            logits: alloc::vec![0.0; n * k * n * t],
        }
    }

    pub fn cell(&self, head: usize, relation: usize, tail: usize) -> &[f64] {
        let at = ((head * self.k + relation) * self.n + tail) * self.t;
        &self.logits[at..at + self.t]
    }
}

impl TagModel for DenseLogits {
    fn tokens(&self) -> usize {
        self.n
    }

    fn relations(&self) -> usize {
        self.k
    }

    fn num_tags(&self) -> usize {
        self.t
    }

    fn log_prob(&self, head: usize, relation: usize, tail: usize, tag: u32) -> f64 {
        log_softmax(self.cell(head, relation, tail))[tag as usize]
    }
}

/// Tag distribution induced by a pair scorer over a sentence's token
/// vectors. Cell `(i, k, j)` gives the null tag logit 0 and every non-null
/// tag the logit `log K + log softmax(v_ij)_k`, so a scorer with no
/// preference yields the uniform distribution over all T tags.
#[derive(Debug, Clone)]
pub struct ScorerTagModel<'a> {
    scorer: &'a PairScorer,
    t: usize,
    /// `W_h · l_i + b` per token.
    head_part: Vec<Vec<f64>>,
    /// `W_t · l_j` per token.
    tail_part: Vec<Vec<f64>>,
}

impl<'a> ScorerTagModel<'a> {
    pub fn new(scorer: &'a PairScorer, token_vectors: &[Vec<f64>], num_tags: usize) -> Result<Self> {
        scorer.validate()?;
        if num_tags == 0 {
            return Err(Error::Shape("tag vocabulary cannot be empty".into()));
        }
        let d = scorer.input_dim();
        for v in token_vectors {
            if v.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: v.len(),
                });
            }
        }
        let head_part = token_vectors
            .iter()
            .map(|l| {
                let mut a = scorer.w.matvec_cols(0..d, l);
                a.iter_mut().zip(&scorer.bias).for_each(|(x, b)| *x += b);
                a
            })
            .collect();
        let tail_part = token_vectors.iter().map(|l| scorer.w.matvec_cols(d..2 * d, l)).collect();
        Ok(Self {
            scorer,
            t: num_tags,
            head_part,
            tail_part,
        })
    }

    /// Per-relation log P(null) for cell row `(i, ·, j)`.
    fn null_row(&self, i: usize, j: usize) -> Vec<f64> {
        let h: Vec<f64> = self.head_part[i]
            .iter()
            .zip(&self.tail_part[j])
            .map(|(a, b)| (a + b).max(0.0))
            .collect();
        let v: Vec<f64> = (0..self.scorer.relations())
            .map(|c| (0..h.len()).map(|r| self.scorer.r_rel[(r, c)] * h[r]).sum())
            .collect();
        let k = libm::log(v.len() as f64);
        let others = (self.t - 1) as f64;
        log_softmax(&v)
            .into_iter()
            .map(|l| -libm::log1p(others * libm::exp(k + l)))
            .collect()
    }

    fn non_null_logit(&self, i: usize, relation: usize, j: usize) -> f64 {
        let h: Vec<f64> = self.head_part[i]
            .iter()
            .zip(&self.tail_part[j])
            .map(|(a, b)| (a + b).max(0.0))
            .collect();
        let v: Vec<f64> = (0..self.scorer.relations())
            .map(|c| (0..h.len()).map(|r| self.scorer.r_rel[(r, c)] * h[r]).sum())
            .collect();
        libm::log(v.len() as f64) + log_softmax(&v)[relation]
    }
}

impl TagModel for ScorerTagModel<'_> {
    fn tokens(&self) -> usize {
        self.head_part.len()
    }

    fn relations(&self) -> usize {
        self.scorer.relations()
    }

    fn num_tags(&self) -> usize {
        self.t
    }

    fn log_prob(&self, head: usize, relation: usize, tail: usize, tag: u32) -> f64 {
        let null = self.null_row(head, tail)[relation];
        if tag == 0 {
            null
        } else {
            self.non_null_logit(head, relation, tail) + null
        }
    }

    fn total_null_log_prob(&self) -> f64 {
        let n = self.tokens();
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                total += self.null_row(i, j).iter().sum::<f64>();
            }
        }
        total
    }
}

/// ζ: the negative gold log-likelihood summed over all `n·K·n` cells and
/// divided by `n·K·n`. Cells absent from `tags` hold the null tag, so only
/// the gold cells are visited individually.
pub fn consistency_loss<M: TagModel + ?Sized>(model: &M, tags: &TagAssignment) -> Result<f64> {
    if model.tokens() != tags.n || model.relations() != tags.k || model.num_tags() != tags.tag_vocab_size {
        return Err(Error::Shape(format!(
            "model covers n={} K={} T={}, tags have n={} K={} T={}",
            model.tokens(),
            model.relations(),
            model.num_tags(),
            tags.n,
            tags.k,
            tags.tag_vocab_size
        )));
    }
    let cells = tags.cell_count();
    if cells == 0 {
        return Ok(0.0);
    }
    let mut total = model.total_null_log_prob();
    for e in &tags.entries {
        if e.head >= tags.n || e.tail >= tags.n || e.relation >= tags.k || e.tag as usize >= tags.tag_vocab_size {
            return Err(Error::Shape(format!("tag entry {e:?} outside the tensor")));
        }
        total += model.log_prob(e.head, e.relation, e.tail, e.tag) - model.log_prob(e.head, e.relation, e.tail, 0);
    }
    Ok((-total / cells as f64).max(0.0))
}

/// ζ of one sentence under `scorer`, with token vectors from `provider`.
pub fn sentence_consistency<P: EmbeddingProvider + ?Sized>(
    scorer: &PairScorer,
    sentence: &Sentence,
    tags: &TagAssignment,
    provider: &P,
) -> Result<f64> {
    let emb = provider.embed_sentence(&sentence.text, &sentence.tokens)?;
    check_embedding(&emb, provider.dimension(), sentence.len())?;
    let vectors: Vec<Vec<f64>> = emb.per_token.iter().map(|v| v.to_f64()).collect();
    let model = ScorerTagModel::new(scorer, &vectors, tags.tag_vocab_size)?;
    consistency_loss(&model, tags)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyResult {
    pub id: String,
    pub zeta: f64,
    pub rank: usize,
    pub kept: bool,
}

/// `⌈fraction · count⌉`, ignoring float noise in the product.
pub fn keep_count(fraction: f64, count: usize) -> usize {
    let x = fraction * count as f64;
    let r = libm::round(x);
    let m = if (x - r).abs() < 1e-9 { r } else { libm::ceil(x) };
    (m as usize).min(count)
}

/// Ranks by ascending `(ζ, id)` and keeps the lowest `⌈keep_fraction · n⌉`.
pub fn rank_consistency(scored: Vec<(String, f64)>, keep_fraction: f64) -> Result<Vec<ConsistencyResult>> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::Config(format!("keep fraction must lie in (0, 1], got {keep_fraction}")));
    }
    let mut scored = scored;
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let keep = keep_count(keep_fraction, scored.len());
    Ok(scored
        .into_iter()
        .enumerate()
        .map(|(rank, (id, zeta))| ConsistencyResult {
            id,
            zeta,
            rank,
            kept: rank < keep,
        })
        .collect())
}

/// ζ for every augmented instance, then [`rank_consistency`].
pub fn filter_consistency<P: EmbeddingProvider + ?Sized>(
    instances: &[AugmentedInstance],
    scorer: &PairScorer,
    provider: &P,
    schema: &RelationSchema,
    scheme: TagScheme,
    keep_fraction: f64,
) -> Result<Vec<ConsistencyResult>> {
    let mut scored = Vec::with_capacity(instances.len());
    for inst in instances {
        let tags = triples_to_tags(&inst.sentence, &inst.triples, schema, scheme)?;
        scored.push((inst.id().into(), sentence_consistency(scorer, &inst.sentence, &tags, provider)?));
    }
    rank_consistency(scored, keep_fraction)
}

/// Token vectors as f64 rows, for callers building a [`ScorerTagModel`].
pub fn token_rows(per_token: &[crate::embedding::EmbeddingVector]) -> Vec<Vec<f64>> {
    per_token.iter().map(|v| v.to_f64()).collect()
}
