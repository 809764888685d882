//! The pipeline stages as plain functions over in-memory data.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use ssdau_core::augment::{self, coherence_score, AugmentedInstance};
use ssdau_core::corpus::{inject_perturbation, triples_to_tags, Instance, RelationSchema, Sentence, TagScheme};
use ssdau_core::discretize::{encode, group_blocks, BlockLibrary, GroupKey, SkippedTriple, SplitMode, TextBlock};
use ssdau_core::embedding::{EmbeddingProvider, HashEmbedder, ProviderKind};
use ssdau_core::filtering::loss::{rank_consistency, sentence_consistency, ConsistencyResult};
use ssdau_core::filtering::scorer::{
    accuracy, init_pretrained, train_scorer, training_examples, InitKind, PairScorer,
};
use ssdau_core::filtering::topics::{fit_topics, topic_decision, TopicModel};
use ssdau_core::matching::{group_queue, BlockFeatures, CandidateQueue, QueueConfig};
use ssdau_core::Error as CoreError;

use crate::cache::{BoxedProvider, FileCache};
use crate::config::{FilterConfig, FilterOrder, ProviderSettings, RunConfig};
use crate::error::{AppError, AppResult};
use crate::io::{self, LoadOptions, LoadReport};
use crate::service::ServiceProvider;

/// Builds the provider named by `settings`. A `file_cache` provider falls
/// through to the service when an endpoint is configured.
pub fn build_provider(settings: &ProviderSettings) -> AppResult<BoxedProvider> {
    settings.provider_config().validate()?;
    let service = || -> AppResult<Option<BoxedProvider>> {
        match settings.service_config() {
            Some(c) => Ok(Some(Box::new(ServiceProvider::new(c)?))),
            None => Ok(None),
        }
    };
    Ok(match settings.kind {
        ProviderKind::DeterministicTest => Box::new(HashEmbedder::new(settings.dimension)),
        ProviderKind::Service => service()?.expect("validated endpoint"),
        ProviderKind::FileCache => Box::new(FileCache::open(
            settings.path.clone().unwrap_or_default(),
            settings.dimension,
            service()?,
        )?),
    })
}

pub fn thread_pool(threads: usize) -> AppResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| AppError::Validation(format!("thread pool: {e}")))
}

pub fn load_options(config: &RunConfig) -> LoadOptions {
    LoadOptions {
        format: config.data.format,
        max_tokens: config.data.max_tokens,
        unknown_relation: config.data.unknown_relation,
        schema: None,
    }
}

pub fn load(config: &RunConfig) -> AppResult<(Vec<Instance>, LoadReport)> {
    io::load_dataset(Path::new(&config.data.path), &load_options(config))
}

/// Appends foreign instances when the config asks for it.
pub fn perturb(config: &RunConfig, dataset: &[Instance]) -> AppResult<Option<Vec<Instance>>> {
    let Some(p) = &config.perturb else {
        return Ok(None);
    };
    let options = LoadOptions {
        format: p.format,
        ..load_options(config)
    };
    let (foreign, _) = io::load_dataset(Path::new(&p.foreign), &options)?;
    Ok(Some(inject_perturbation(dataset, &foreign, p.rate, config.stage_seed("perturb"))?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockGroup {
    pub key: GroupKey,
    pub blocks: Vec<TextBlock>,
}

/// The persisted block library, with the source sentences matching needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlocksFile {
    pub context_width: usize,
    pub split_mode: SplitMode,
    pub sentences: Vec<SentenceRecord>,
    pub skipped: Vec<SkippedTriple>,
    pub groups: Vec<BlockGroup>,
}

impl BlocksFile {
    pub fn library(&self) -> BlockLibrary {
        BlockLibrary {
            groups: self.groups.iter().map(|g| (g.key.clone(), g.blocks.clone())).collect(),
        }
    }

    pub fn sentence_map(&self) -> BTreeMap<String, Sentence> {
        self.sentences
            .iter()
            .map(|s| (s.id.clone(), Sentence::new(s.id.clone(), s.text.clone())))
            .collect()
    }

    pub fn block_count(&self) -> usize {
        self.groups.iter().map(|g| g.blocks.len()).sum()
    }
}

fn sorted(dataset: &[Instance]) -> Vec<&Instance> {
    let mut v: Vec<&Instance> = dataset.iter().collect();
    v.sort_by(|a, b| a.sentence.id.cmp(&b.sentence.id));
    v
}

pub fn discretize(dataset: &[Instance], context_width: usize, mode: SplitMode) -> BlocksFile {
    let order = sorted(dataset);
    let encoded: Vec<_> = order.par_iter().map(|i| encode(i, context_width, mode)).collect();
    let mut blocks = Vec::new();
    let mut skipped = Vec::new();
    for e in encoded {
        blocks.extend(e.blocks);
        skipped.extend(e.skipped);
    }
    let library = group_blocks(blocks);
    BlocksFile {
        context_width,
        split_mode: mode,
        sentences: order
            .iter()
            .map(|i| SentenceRecord {
                id: i.sentence.id.clone(),
                text: i.sentence.text.clone(),
            })
            .collect(),
        skipped,
        groups: library
            .groups
            .into_iter()
            .map(|(key, blocks)| BlockGroup { key, blocks })
            .collect(),
    }
}

/// Candidate queues of every group, in group-key order. Sentences are
/// embedded in parallel and groups scored in parallel; the result does not
/// depend on scheduling.
pub fn match_blocks<P: EmbeddingProvider + Sync + ?Sized>(
    blocks: &BlocksFile,
    provider: &P,
    config: &QueueConfig,
) -> AppResult<Vec<CandidateQueue>> {
    config.validate()?;
    let sentences = blocks.sentence_map();
    let mut by_sentence: BTreeMap<&str, Vec<&TextBlock>> = BTreeMap::new();
    for b in blocks.groups.iter().flat_map(|g| &g.blocks).filter(|b| !b.is_empty()) {
        by_sentence.entry(b.source_sentence.as_str()).or_default().push(b);
    }
    let per_sentence: Vec<Vec<(String, BlockFeatures)>> = by_sentence
        .into_par_iter()
        .map(|(id, list)| {
            let s = sentences
                .get(id)
                .ok_or_else(|| CoreError::Config(format!("blocks refer to unknown sentence {id}")))?;
            let emb = provider.embed_sentence(&s.text, &s.tokens)?;
            ssdau_core::embedding::check_embedding(&emb, provider.dimension(), s.len())?;
            list.into_iter()
                .map(|b| Ok((b.id.clone(), BlockFeatures::compute(b, provider, &emb)?)))
                .collect::<Result<Vec<_>, CoreError>>()
        })
        .collect::<Result<_, CoreError>>()?;
    let features: BTreeMap<String, BlockFeatures> = per_sentence.into_iter().flatten().collect();
    let queues = blocks
        .groups
        .par_iter()
        .map(|g| group_queue(&g.key, &g.blocks, &features, config))
        .collect::<Result<Vec<_>, CoreError>>()?;
    Ok(queues)
}

/// Augmented instances in sentence-id order, each sentence's output in
/// candidate rank order.
pub fn augment_all(
    dataset: &[Instance],
    queues: &[CandidateQueue],
    policy: &augment::AugmentPolicy,
) -> AppResult<Vec<AugmentedInstance>> {
    policy.validate()?;
    let index = augment::index_candidates(queues);
    let order = sorted(dataset);
    let per: Vec<Vec<AugmentedInstance>> = order
        .par_iter()
        .map(|i| augment::augment_instance(i, &index, policy))
        .collect();
    Ok(per.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dropped {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerSummary {
    pub init: InitKind,
    pub examples: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub input: usize,
    pub coherence_dropped: Vec<Dropped>,
    pub topic_dropped: Vec<Dropped>,
    pub untaggable: Vec<Dropped>,
    pub consistency: Vec<ConsistencyResult>,
    pub k_topics: usize,
    pub scorer: Option<ScorerSummary>,
    pub kept: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    /// Kept instances in input order.
    pub kept: Vec<AugmentedInstance>,
    pub report: FilterReport,
    /// The trained scorer and its relation names, when there was data.
    pub scorer: Option<(PairScorer, Vec<String>)>,
}

fn initial_scorer(
    examples: &[ssdau_core::filtering::scorer::TrainingExample],
    d: usize,
    k: usize,
    f: &FilterConfig,
    seed: u64,
) -> AppResult<PairScorer> {
    let mut s = match f.init {
        InitKind::Zero => PairScorer::zeros(d, f.hidden_dim, k),
        InitKind::Random => PairScorer::random(d, f.hidden_dim, k, seed),
        InitKind::Pretrained | InitKind::PretrainedFallback => {
            init_pretrained(examples, f.hidden_dim, k, f.ridge, seed)?
        }
    };
    s.dropout_rate = f.dropout_rate;
    Ok(s)
}

fn source_of<'a>(sources: &BTreeMap<&str, &'a Instance>, a: &AugmentedInstance) -> AppResult<&'a Instance> {
    sources.get(a.provenance.source_sentence.as_str()).copied().ok_or_else(|| {
        AppError::Validation(format!(
            "{} derives from {:?}, which is not in the dataset",
            a.id(),
            a.provenance.source_sentence
        ))
    })
}

fn topic_pass<'a, P: EmbeddingProvider + Sync + ?Sized>(
    model: Option<&TopicModel>,
    list: Vec<&'a AugmentedInstance>,
    sources: &BTreeMap<&str, &Instance>,
    provider: &P,
    min_affinity: f64,
    report: &mut FilterReport,
) -> AppResult<Vec<&'a AugmentedInstance>> {
    let Some(model) = model else {
        return Ok(list);
    };
    let decisions = list
        .par_iter()
        .map(|a| {
            let src = source_of(sources, a)?;
            Ok(topic_decision(model, provider, &src.sentence, a, min_affinity)?)
        })
        .collect::<AppResult<Vec<_>>>()?;
    let mut kept = Vec::new();
    for (a, d) in list.into_iter().zip(decisions) {
        if d.kept {
            kept.push(a);
        } else {
            report.topic_dropped.push(Dropped {
                id: a.id().into(),
                reason: format!(
                    "topic {} differs from source topic {} with affinity {:.4}",
                    d.candidate_topic, d.source_topic, d.affinity
                ),
            });
        }
    }
    Ok(kept)
}

/// Coherence floor, topic filtering and consistency ranking, in the
/// configured order. The scorer trains on the gold triples of `dataset`.
pub fn filter<P: EmbeddingProvider + Sync + ?Sized>(
    dataset: &[Instance],
    augmented: &[AugmentedInstance],
    provider: &P,
    f: &FilterConfig,
    run_seed: u64,
) -> AppResult<FilterOutput> {
    let seed = |name: &str| ssdau_core::seed::derive_seed(run_seed, name);
    let mut report = FilterReport {
        input: augmented.len(),
        ..FilterReport::default()
    };
    let sources: BTreeMap<&str, &Instance> = dataset.iter().map(|i| (i.id(), i)).collect();

    let mut alive: Vec<&AugmentedInstance> = Vec::new();
    for a in augmented {
        let nu = coherence_score(&source_of(&sources, a)?.sentence, a).nu;
        if nu < f.nu_floor {
            report.coherence_dropped.push(Dropped {
                id: a.id().into(),
                reason: format!("coherence {nu:.4} below {}", f.nu_floor),
            });
        } else {
            alive.push(a);
        }
    }

    let topic_model = if f.k_topics > 0 && !dataset.is_empty() && !alive.is_empty() {
        let k = f.k_topics.min(dataset.len());
        report.k_topics = k;
        let sentences: Vec<Sentence> = dataset.iter().map(|i| i.sentence.clone()).collect();
        Some(fit_topics(&sentences, provider, k, seed("filter/topics"))?)
    } else {
        None
    };
    if f.order == FilterOrder::TopicsThenConsistency {
        alive = topic_pass(topic_model.as_ref(), alive, &sources, provider, f.min_affinity, &mut report)?;
    }

    let has_triples = dataset.iter().any(|i| !i.triples.is_empty());
    let mut scorer_out = None;
    if has_triples && !alive.is_empty() {
        let schema = RelationSchema::infer(dataset)?;
        let examples = training_examples(dataset, provider, &schema)?;
        let d = provider.dimension();
        let k = schema.relations().len();
        let init = initial_scorer(&examples, d, k, f, seed("filter/init"))?;
        let trained = train_scorer(&init, &examples, f.epochs, f.learning_rate, seed("filter/train"))?;
        report.scorer = Some(ScorerSummary {
            init: trained.scorer.init,
            examples: examples.len(),
            initial_loss: trained.losses[0],
            final_loss: *trained.losses.last().expect("at least one loss"),
            train_accuracy: accuracy(&trained.scorer, &examples)?,
        });
        let scorer = trained.scorer;

        let candidates: Vec<Instance> = alive.iter().map(|a| a.to_instance()).collect();
        let scheme = TagScheme::fitting(dataset.iter().chain(&candidates));
        let tagged: Vec<(usize, AppResult<f64>)> = alive
            .par_iter()
            .enumerate()
            .map(|(i, a)| {
                let zeta = triples_to_tags(&a.sentence, &a.triples, &schema, scheme)
                    .map_err(AppError::from)
                    .and_then(|tags| Ok(sentence_consistency(&scorer, &a.sentence, &tags, provider)?));
                (i, zeta)
            })
            .collect();
        let mut scored = Vec::new();
        let mut taggable = Vec::new();
        for (i, z) in tagged {
            match z {
                Ok(z) => {
                    scored.push((alive[i].id().to_string(), z));
                    taggable.push(alive[i]);
                }
                Err(AppError::Core(e @ (CoreError::TagCollision { .. } | CoreError::UnknownRelation { .. } | CoreError::Schema(_)))) => {
                    report.untaggable.push(Dropped {
                        id: alive[i].id().into(),
                        reason: e.to_string(),
                    })
                }
                Err(e) => return Err(e),
            }
        }
        report.consistency = rank_consistency(scored, f.keep_fraction)?;
        let kept_ids: BTreeSet<&str> = report
            .consistency
            .iter()
            .filter(|r| r.kept)
            .map(|r| r.id.as_str())
            .collect();
        alive = taggable.into_iter().filter(|a| kept_ids.contains(a.id())).collect();
        scorer_out = Some((scorer, schema.relations().to_vec()));
    } else {
        alive.clear();
    }

    if f.order == FilterOrder::ConsistencyThenTopics {
        alive = topic_pass(topic_model.as_ref(), alive, &sources, provider, f.min_affinity, &mut report)?;
    }
    report.kept = alive.len();
    Ok(FilterOutput {
        kept: alive.into_iter().cloned().collect(),
        report,
        scorer: scorer_out,
    })
}

/// Originals first, verbatim and in input order, then the kept augmented
/// instances.
pub fn append(dataset: &[Instance], kept: &[AugmentedInstance]) -> Vec<Instance> {
    dataset
        .iter()
        .cloned()
        .chain(kept.iter().map(AugmentedInstance::to_instance))
        .collect()
}
