//! The `ssdau` command line.
//!
//! Every subcommand prints a JSON report on stdout and writes artifacts to
//! files. Exit codes: 0 success, 2 invalid input or configuration, 3 stage
//! failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;
use ssdau_core::augment::AugmentMode;
use ssdau_core::corpus::{inject_perturbation, UnknownRelationPolicy};
use ssdau_core::discretize::{encode, SplitMode};
use ssdau_core::embedding::{EmbeddingProvider, ProviderKind};
use ssdau_core::evaluate::{evaluate_corpus, parse_bins, sweep, Averaging, MatchMode};
use ssdau_core::filtering::scorer::InitKind;
use ssdau_core::matching::{CandidateQueue, SimilarityWeights};

use crate::cache::FileCache;
use crate::config::{FilterOrder, RunConfig};
use crate::error::{AppError, AppResult};
use crate::io::{self, DatasetFormat, LoadOptions};
use crate::pipeline;
use crate::stages::{self, BlocksFile};

fn enum_arg<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|e| e.to_string())
}

fn weights_arg(s: &str) -> Result<SimilarityWeights, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    let arr: [f64; 5] = parts
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected 5 weights, got {}", v.len()))?;
    Ok(SimilarityWeights::from_array(arr))
}

#[derive(Debug, Parser)]
#[command(name = "ssdau", version, about = "Structure-preserving augmentation for triple-annotated corpora")]
pub struct Cli {
    /// Run configuration supplying defaults; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct DataArgs {
    #[arg(long, value_parser = enum_arg::<DatasetFormat>)]
    pub format: Option<DatasetFormat>,
    #[arg(long)]
    pub max_tokens: Option<usize>,
    #[arg(long, value_parser = enum_arg::<UnknownRelationPolicy>)]
    pub unknown_relation: Option<UnknownRelationPolicy>,
}

#[derive(Debug, Args, Default)]
pub struct ProviderArgs {
    /// deterministic_test, service or file_cache.
    #[arg(long, value_parser = enum_arg::<ProviderKind>)]
    pub provider: Option<ProviderKind>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Cache directory for the file_cache provider.
    #[arg(long)]
    pub cache_dir: Option<String>,
}

#[derive(Debug, Args, Default)]
pub struct PolicyArgs {
    #[arg(long)]
    pub mode: Option<AugmentMode>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub epsilon_entity: Option<f64>,
    #[arg(long)]
    pub epsilon_relation: Option<f64>,
    #[arg(long)]
    pub max_per_sentence: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and validate a dataset.
    LoadCheck {
        path: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Split sentences into text blocks and group them.
    Discretize {
        dataset: PathBuf,
        #[arg(long)]
        context_width: Option<usize>,
        #[arg(long, value_parser = enum_arg::<SplitMode>)]
        split_mode: Option<SplitMode>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Embed every sentence and block span into a file cache.
    EmbedWarm {
        dataset: PathBuf,
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        context_width: Option<usize>,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Score block pairs into per-group candidate queues.
    Match {
        blocks: PathBuf,
        #[arg(long)]
        floor: Option<f64>,
        /// semantic,syntactic,lexical,context,contextual_embedding
        #[arg(long, value_parser = weights_arg)]
        weights: Option<SimilarityWeights>,
        #[arg(long)]
        cap: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Generate augmented instances from candidate queues.
    Augment {
        dataset: PathBuf,
        #[arg(long)]
        queues: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        policy: PolicyArgs,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Coherence, topic and consistency filtering of augmented instances.
    Filter {
        augmented: PathBuf,
        /// The dataset the instances were generated from.
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        keep: Option<f64>,
        /// Topic count; 0 disables topic filtering.
        #[arg(long)]
        topics: Option<usize>,
        #[arg(long)]
        min_affinity: Option<f64>,
        #[arg(long)]
        nu_floor: Option<f64>,
        #[arg(long, value_parser = enum_arg::<FilterOrder>)]
        order: Option<FilterOrder>,
        #[arg(long, value_parser = enum_arg::<InitKind>)]
        init: Option<InitKind>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write final.jsonl: originals followed by kept instances.
        #[arg(long)]
        append: bool,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Triple-set metrics of predictions against gold.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long, default_value = "exact")]
        mode: MatchMode,
        /// Average per sentence instead of pooling counts.
        #[arg(long = "macro")]
        macro_average: bool,
    },
    /// Augmented-instance counts per role and Θ bin.
    Sweep {
        dataset: PathBuf,
        #[arg(long)]
        queues: PathBuf,
        /// lo:hi:step
        #[arg(long, default_value = "0.5:1.0:0.1")]
        bins: String,
        #[arg(long)]
        name: Option<String>,
        #[command(flatten)]
        policy: PolicyArgs,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Append foreign instances at a given rate.
    Perturb {
        dataset: PathBuf,
        #[arg(long)]
        foreign: PathBuf,
        #[arg(long)]
        rate: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Every stage in sequence, with a manifest.
    AugmentAll {
        dataset: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        append: bool,
        #[command(flatten)]
        policy: PolicyArgs,
        #[command(flatten)]
        provider: ProviderArgs,
    },
}

fn path_string(p: &Path) -> String {
    p.display().to_string()
}

fn base_config(config: Option<&Path>, dataset: Option<&Path>, seed: Option<u64>) -> AppResult<(RunConfig, bool)> {
    let (mut c, seeded) = match config {
        Some(p) => (RunConfig::load(p)?, true),
        None => (RunConfig::new(0, ""), false),
    };
    if let Some(d) = dataset {
        c.data.path = path_string(d);
    }
    if let Some(s) = seed {
        c.seed = s;
    }
    Ok((c, seeded || seed.is_some()))
}

fn require_seed(seeded: bool) -> AppResult<()> {
    if seeded {
        Ok(())
    } else {
        Err(AppError::Validation("a seed is required: pass --seed or --config".into()))
    }
}

impl DataArgs {
    fn apply(&self, c: &mut RunConfig) {
        if let Some(f) = self.format {
            c.data.format = f;
        }
        if let Some(m) = self.max_tokens {
            c.data.max_tokens = m;
        }
        if let Some(u) = self.unknown_relation {
            c.data.unknown_relation = u;
        }
    }
}

impl ProviderArgs {
    fn apply(&self, c: &mut RunConfig) {
        let p = &mut c.provider;
        if let Some(k) = self.provider {
            p.kind = k;
        }
        if let Some(d) = self.dim {
            p.dimension = d;
        }
        if let Some(e) = &self.endpoint {
            p.endpoint = Some(e.clone());
        }
        if let Some(d) = &self.cache_dir {
            p.path = Some(d.clone());
        }
    }
}

impl PolicyArgs {
    fn apply(&self, c: &mut RunConfig) {
        let p = &mut c.policy;
        if let Some(m) = self.mode {
            p.mode = m;
        }
        if let Some(e) = self.epsilon {
            p.epsilon = e;
        }
        if self.epsilon_entity.is_some() {
            p.epsilon_entity = self.epsilon_entity;
        }
        if self.epsilon_relation.is_some() {
            p.epsilon_relation = self.epsilon_relation;
        }
        if let Some(m) = self.max_per_sentence {
            p.max_per_sentence = m;
        }
    }
}

fn load_with(c: &RunConfig) -> AppResult<Vec<ssdau_core::corpus::Instance>> {
    io::must_exist(Path::new(&c.data.path))?;
    Ok(stages::load(c)?.0)
}

fn stage<T>(name: &str, r: AppResult<T>) -> AppResult<T> {
    r.map_err(|e| match e {
        AppError::Core(_) if e.exit_code() == 3 => e.in_stage(name),
        other => other,
    })
}

/// Runs one parsed command and returns its JSON report.
pub fn run(cli: Cli) -> AppResult<serde_json::Value> {
    let cfg = cli.config.as_deref();
    let value = match cli.command {
        Command::LoadCheck { path, data } => {
            let (mut c, _) = base_config(cfg, Some(&path), None)?;
            data.apply(&mut c);
            io::must_exist(&path)?;
            let (_, report) = stages::load(&c)?;
            to_value(&report)
        }
        Command::Discretize {
            dataset,
            context_width,
            split_mode,
            out,
            data,
        } => {
            let (mut c, _) = base_config(cfg, Some(&dataset), None)?;
            data.apply(&mut c);
            let width = context_width.unwrap_or(c.context_width);
            let mode = split_mode.unwrap_or(c.split_mode);
            let instances = load_with(&c)?;
            let blocks = stages::discretize(&instances, width, mode);
            io::write_json(&out, &blocks)?;
            json!({
                "sentences": blocks.sentences.len(),
                "blocks": blocks.block_count(),
                "groups": blocks.groups.len(),
                "skipped": blocks.skipped,
                "out": path_string(&out),
            })
        }
        Command::EmbedWarm {
            dataset,
            cache,
            context_width,
            data,
            provider,
        } => {
            let (mut c, _) = base_config(cfg, Some(&dataset), None)?;
            data.apply(&mut c);
            provider.apply(&mut c);
            let instances = load_with(&c)?;
            let mut inner_settings = c.provider.clone();
            if inner_settings.kind == ProviderKind::FileCache {
                inner_settings.kind = if inner_settings.endpoint.is_some() {
                    ProviderKind::Service
                } else {
                    ProviderKind::DeterministicTest
                };
            }
            let inner = stages::build_provider(&inner_settings)?;
            let store = FileCache::open(&cache, c.provider.dimension, Some(inner))?;
            let width = context_width.unwrap_or(c.context_width);
            let mut spans = std::collections::BTreeSet::new();
            for inst in &instances {
                let s = &inst.sentence;
                stage("embed-warm", store.embed_sentence(&s.text, &s.tokens).map_err(AppError::from))?;
                for b in encode(inst, width, c.split_mode).blocks {
                    if !b.is_empty() {
                        spans.insert(b.span_text);
                    }
                }
            }
            for span in &spans {
                stage("embed-warm", store.embed_text(span).map_err(AppError::from))?;
            }
            store.flush()?;
            json!({
                "sentences": instances.len(),
                "spans": spans.len(),
                "entries": store.len(),
                "cache": path_string(&cache),
            })
        }
        Command::Match {
            blocks,
            floor,
            weights,
            cap,
            out,
            provider,
        } => {
            let (mut c, _) = base_config(cfg, None, None)?;
            provider.apply(&mut c);
            if let Some(f) = floor {
                c.floor = f;
            }
            if let Some(w) = weights {
                c.weights = w;
            }
            if let Some(k) = cap {
                c.cap = k;
            }
            let library: BlocksFile = io::read_json(&io::must_exist(&blocks)?)?;
            let p = stages::build_provider(&c.provider)?;
            let pool = stages::thread_pool(c.threads)?;
            let queues = stage("match", pool.install(|| stages::match_blocks(&library, &*p, &c.queue_config())))?;
            io::write_json(&out, &queues)?;
            json!({
                "groups": queues.len(),
                "candidates": queues.iter().map(|q| q.entries.len()).sum::<usize>(),
                "out": path_string(&out),
            })
        }
        Command::Augment {
            dataset,
            queues,
            out,
            policy,
            data,
        } => {
            let (mut c, _) = base_config(cfg, Some(&dataset), None)?;
            data.apply(&mut c);
            policy.apply(&mut c);
            let instances = load_with(&c)?;
            let queues: Vec<CandidateQueue> = io::read_json(&io::must_exist(&queues)?)?;
            let pool = stages::thread_pool(c.threads)?;
            let augmented = pool.install(|| stages::augment_all(&instances, &queues, &c.policy))?;
            io::save_augmented(&out, &augmented)?;
            json!({
                "sentences": instances.len(),
                "augmented": augmented.len(),
                "policy": c.policy,
                "out": path_string(&out),
            })
        }
        Command::Filter {
            augmented,
            dataset,
            keep,
            topics,
            min_affinity,
            nu_floor,
            order,
            init,
            epochs,
            seed,
            append,
            out,
            data,
            provider,
        } => {
            let (mut c, seeded) = base_config(cfg, Some(&dataset), seed)?;
            require_seed(seeded)?;
            data.apply(&mut c);
            provider.apply(&mut c);
            let f = &mut c.filter;
            if let Some(k) = keep {
                f.keep_fraction = k;
            }
            if let Some(t) = topics {
                f.k_topics = t;
            }
            if let Some(m) = min_affinity {
                f.min_affinity = m;
            }
            if let Some(n) = nu_floor {
                f.nu_floor = n;
            }
            if let Some(o) = order {
                f.order = o;
            }
            if let Some(i) = init {
                f.init = i;
            }
            if let Some(e) = epochs {
                f.epochs = e;
            }
            f.append |= append;
            c.validate()?;
            let instances = load_with(&c)?;
            let aug = io::load_augmented(&io::must_exist(&augmented)?)?;
            let p = stages::build_provider(&c.provider)?;
            let pool = stages::thread_pool(c.threads)?;
            let result = stage("filter", pool.install(|| stages::filter(&instances, &aug, &*p, &c.filter, c.seed)))?;
            let written = pipeline::write_filter_outputs(&out, &instances, &result, c.filter.append)?;
            json!({
                "input": result.report.input,
                "coherence_dropped": result.report.coherence_dropped.len(),
                "topic_dropped": result.report.topic_dropped.len(),
                "untaggable": result.report.untaggable.len(),
                "kept": result.report.kept,
                "scorer": result.report.scorer,
                "written": written.iter().map(|p| path_string(p)).collect::<Vec<_>>(),
            })
        }
        Command::Eval {
            pred,
            gold,
            mode,
            macro_average,
        } => {
            let options = LoadOptions {
                max_tokens: usize::MAX,
                ..LoadOptions::default()
            };
            let (p, _) = io::load_dataset(&io::must_exist(&pred)?, &options)?;
            let (g, _) = io::load_dataset(&io::must_exist(&gold)?, &options)?;
            let averaging = if macro_average { Averaging::Macro } else { Averaging::Micro };
            to_value(&evaluate_corpus(&p, &g, mode, averaging)?)
        }
        Command::Sweep {
            dataset,
            queues,
            bins,
            name,
            policy,
            data,
        } => {
            let (mut c, _) = base_config(cfg, Some(&dataset), None)?;
            data.apply(&mut c);
            policy.apply(&mut c);
            let bins = parse_bins(&bins)?;
            let instances = load_with(&c)?;
            let queues: Vec<CandidateQueue> = io::read_json(&io::must_exist(&queues)?)?;
            let label = name.unwrap_or_else(|| c.data.display_name());
            let report = sweep(&label, &instances, &queues, &c.policy, &bins)?;
            eprint!("{}", report.render());
            json!({ "rows": report.rows, "table": report.render() })
        }
        Command::Perturb {
            dataset,
            foreign,
            rate,
            seed,
            out,
            data,
        } => {
            let (mut c, seeded) = base_config(cfg, Some(&dataset), seed)?;
            require_seed(seeded)?;
            data.apply(&mut c);
            let mut p = c.perturb.clone().unwrap_or_default();
            p.foreign = path_string(&foreign);
            if let Some(r) = rate {
                p.rate = r;
            }
            c.perturb = Some(p.clone());
            let instances = load_with(&c)?;
            let perturbed = match stages::perturb(&c, &instances)? {
                Some(v) => v,
                None => inject_perturbation(&instances, &[], 0.0, 0)?,
            };
            io::save_dataset(&out, &perturbed)?;
            json!({
                "original": instances.len(),
                "injected": perturbed.len() - instances.len(),
                "total": perturbed.len(),
                "rate": p.rate,
                "out": path_string(&out),
            })
        }
        Command::AugmentAll {
            dataset,
            seed,
            out_dir,
            append,
            policy,
            provider,
        } => {
            let (mut c, seeded) = base_config(cfg, dataset.as_deref(), seed)?;
            require_seed(seeded)?;
            policy.apply(&mut c);
            provider.apply(&mut c);
            if let Some(o) = out_dir {
                c.output_dir = path_string(&o);
            }
            c.filter.append |= append;
            match pipeline::run_pipeline(&c) {
                Ok(m) => to_value(&m),
                Err((m, e)) => return Err(FailedRun { manifest: *m, error: e }.into()),
            }
        }
    };
    Ok(value)
}

/// An `augment-all` failure, carrying the partial manifest.
struct FailedRun {
    manifest: crate::manifest::Manifest,
    error: AppError,
}

impl From<FailedRun> for AppError {
    fn from(f: FailedRun) -> Self {
        log::error!(
            "run failed at stage {}",
            f.manifest.failed_stage.as_deref().unwrap_or("<setup>")
        );
        f.error
    }
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("report serializes")
}

/// Parses `args`, runs the command and prints its report. Returns the exit
/// code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("json"));
            0
        }
        Err(e) => {
            let code = e.exit_code();
            let stage = match &e {
                AppError::Stage { stage, .. } => Some(stage.clone()),
                _ => None,
            };
            eprintln!("error: {e}");
            println!(
                "{}",
                serde_json::to_string_pretty(&json!({ "error": e.to_string(), "stage": stage, "exit_code": code }))
                    .expect("json")
            );
            code
        }
    }
}
