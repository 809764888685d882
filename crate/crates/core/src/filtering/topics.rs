use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::AugmentedInstance;
use crate::corpus::Sentence;
use crate::embedding::{cosine, rescaled_cosine, EmbeddingProvider, EmbeddingVector};
use crate::error::{Error, Result};
use crate::seed;
use crate::text;

const MAX_ITERATIONS: usize = 100;
const TERMS_PER_TOPIC: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicTerm {
    pub term: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub k_topics: usize,
    pub centroids: Vec<EmbeddingVector>,
    /// Highest-scoring class-based TF-IDF terms per topic.
    pub topic_terms: Vec<Vec<TopicTerm>>,
    pub assignments: BTreeMap<String, usize>,
}

fn to_f64(v: &EmbeddingVector) -> Vec<f64> {
    v.to_f64()
}

fn similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = libm::sqrt(a.iter().map(|x| x * x).sum::<f64>());
    let nb = libm::sqrt(b.iter().map(|x| x * x).sum::<f64>());
    if na == 0.0 || nb == 0.0 {
        return if na == nb { 1.0 } else { 0.0 };
    }
    dot / (na * nb)
}

/// Index of the most similar centroid, lowest index on ties.
fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_sim = f64::NEG_INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let s = similarity(point, c);
        if s > best_sim {
            best = i;
            best_sim = s;
        }
    }
    best
}

fn kmeans_pp(points: &[Vec<f64>], k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seed::rng(seed);
    let mut centroids = vec![points[rng.gen_range(0..points.len())].clone()];
    while centroids.len() < k {
        let weights: Vec<f64> = points
            .iter()
            .map(|p| {
                let s = centroids.iter().map(|c| similarity(p, c)).fold(f64::NEG_INFINITY, f64::max);
                (1.0 - s).max(0.0)
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let pick = if total <= 0.0 {
            // every point already coincides with a centroid
            centroids.len() % points.len()
        } else {
            let mut x = rng.gen::<f64>() * total;
            let mut idx = points.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                if x < *w {
                    idx = i;
                    break;
                }
                x -= w;
            }
            idx
        };
        centroids.push(points[pick].clone());
    }
    centroids
}

/// Seeded k-means++ over pooled sentence vectors with cosine assignment,
/// then class-based TF-IDF over each topic's words.
pub fn fit_topics<P: EmbeddingProvider + ?Sized>(
    sentences: &[Sentence],
    provider: &P,
    k_topics: usize,
    seed: u64,
) -> Result<TopicModel> {
    if k_topics == 0 {
        return Err(Error::Topic("k_topics must be at least 1".into()));
    }
    if sentences.len() < k_topics {
        return Err(Error::Topic(format!(
            "{} sentences cannot form {k_topics} topics",
            sentences.len()
        )));
    }
    let mut points = Vec::with_capacity(sentences.len());
    for s in sentences {
        points.push(to_f64(&provider.embed_sentence(&s.text, &s.tokens)?.pooled));
    }
    let mut centroids = kmeans_pp(&points, k_topics, seed);
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
    for _ in 0..MAX_ITERATIONS {
        let dim = points[0].len();
        let mut sums = vec![vec![0.0; dim]; k_topics];
        let mut counts = vec![0usize; k_topics];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k_topics {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        if next == labels {
            break;
        }
        labels = next;
    }

    // class-based TF-IDF
    let mut class_counts: Vec<BTreeMap<String, usize>> = vec![BTreeMap::new(); k_topics];
    let mut totals: BTreeMap<String, usize> = BTreeMap::new();
    for (s, &l) in sentences.iter().zip(&labels) {
        for w in text::words(&s.text) {
            if !w.chars().any(char::is_alphanumeric) {
                continue;
            }
            let w = w.to_lowercase();
            *class_counts[l].entry(w.clone()).or_default() += 1;
            *totals.entry(w).or_default() += 1;
        }
    }
    let words_per_class = totals.values().sum::<usize>() as f64 / k_topics as f64;
    let topic_terms = class_counts
        .iter()
        .map(|counts| {
            let size = counts.values().sum::<usize>().max(1) as f64;
            let mut terms: Vec<TopicTerm> = counts
                .iter()
                .map(|(term, &c)| TopicTerm {
                    term: term.clone(),
                    score: (c as f64 / size) * libm::log(1.0 + words_per_class / totals[term] as f64),
                })
                .collect();
            terms.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.term.cmp(&b.term)));
            terms.truncate(TERMS_PER_TOPIC);
            terms
        })
        .collect();

    Ok(TopicModel {
        k_topics,
        centroids: centroids
            .into_iter()
            .map(|c| EmbeddingVector(c.into_iter().map(|x| x as f32).collect()))
            .collect(),
        topic_terms,
        assignments: sentences.iter().map(|s| s.id.clone()).zip(labels).collect(),
    })
}

impl TopicModel {
    pub fn nearest_topic(&self, vector: &EmbeddingVector) -> usize {
        let mut best = 0;
        let mut best_sim = f64::NEG_INFINITY;
        for (i, c) in self.centroids.iter().enumerate() {
            let s = cosine(vector, c);
            if s > best_sim {
                best = i;
                best_sim = s;
            }
        }
        best
    }

    /// The modeled assignment when known, otherwise the nearest centroid.
    pub fn topic_of<P: EmbeddingProvider + ?Sized>(&self, sentence: &Sentence, provider: &P) -> Result<usize> {
        if let Some(&t) = self.assignments.get(&sentence.id) {
            return Ok(t);
        }
        let pooled = provider.embed_sentence(&sentence.text, &sentence.tokens)?.pooled;
        Ok(self.nearest_topic(&pooled))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicDecision {
    pub source_topic: usize,
    pub candidate_topic: usize,
    /// Rescaled cosine between the candidate and the source topic's centroid.
    pub affinity: f64,
    pub kept: bool,
}

pub fn topic_decision<P: EmbeddingProvider + ?Sized>(
    model: &TopicModel,
    provider: &P,
    source: &Sentence,
    candidate: &AugmentedInstance,
    min_affinity: f64,
) -> Result<TopicDecision> {
    if !(0.0..=1.0).contains(&min_affinity) {
        return Err(Error::Config(format!("min_affinity must lie in [0, 1], got {min_affinity}")));
    }
    let source_topic = model.topic_of(source, provider)?;
    let s = &candidate.sentence;
    let pooled = provider.embed_sentence(&s.text, &s.tokens)?.pooled;
    let candidate_topic = model.nearest_topic(&pooled);
    let affinity = rescaled_cosine(&pooled, &model.centroids[source_topic]);
    Ok(TopicDecision {
        source_topic,
        candidate_topic,
        affinity,
        kept: candidate_topic == source_topic || affinity >= min_affinity,
    })
}

/// Keeps a candidate on its source's topic, or close enough to it.
pub fn topic_filter<P: EmbeddingProvider + ?Sized>(
    model: &TopicModel,
    provider: &P,
    source: &Sentence,
    candidate: &AugmentedInstance,
    min_affinity: f64,
) -> Result<bool> {
    Ok(topic_decision(model, provider, source, candidate, min_affinity)?.kept)
}
