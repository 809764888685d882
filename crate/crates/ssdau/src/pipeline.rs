//! `augment-all`: every stage in sequence, with a manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ssdau_core::augment::AugmentedInstance;
use ssdau_core::corpus::Instance;
use ssdau_core::evaluate::{triplet_count_breakdown, TripletCountRow};
use ssdau_core::matching::CandidateQueue;
use serde::{Deserialize, Serialize};

use crate::cache::BoxedProvider;
use crate::config::RunConfig;
use crate::error::{AppError, AppResult};
use crate::io;
use crate::manifest::{Manifest, StageRecord, Status};
use crate::stages::{self, BlocksFile, FilterOutput};

pub const PERTURBED: &str = "perturbed.jsonl";
pub const BLOCKS: &str = "blocks.json";
pub const QUEUES: &str = "queues.json";
pub const AUGMENTED: &str = "aug.jsonl";
pub const FILTERED: &str = "filtered.jsonl";
pub const FILTER_REPORT: &str = "filter_report.json";
pub const SCORER: &str = "scorer.bin";
pub const FINAL: &str = "final.jsonl";
pub const REPORT: &str = "report.json";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub original: usize,
    pub augmented: usize,
    pub kept: usize,
    pub triplet_counts: Vec<TripletCountRow>,
}

/// Writes the kept instances to `filtered` and the other filter artifacts
/// next to it. Returns every path written.
pub fn write_filter_outputs(filtered: &Path, dataset: &[Instance], out: &FilterOutput, append: bool) -> AppResult<Vec<PathBuf>> {
    let out_dir = filtered.parent().unwrap_or(Path::new(""));
    let mut paths = Vec::new();
    io::save_augmented(filtered, &out.kept)?;
    paths.push(filtered.to_path_buf());
    let report = out_dir.join(FILTER_REPORT);
    io::write_json(&report, &out.report)?;
    paths.push(report);
    if let Some((scorer, relations)) = &out.scorer {
        let p = out_dir.join(SCORER);
        crate::blob::save(&p, scorer, relations)?;
        paths.push(p);
    }
    if append {
        let p = out_dir.join(FINAL);
        io::save_dataset(&p, &stages::append(dataset, &out.kept))?;
        paths.push(p);
    }
    Ok(paths)
}

struct Runner<'a> {
    manifest: Manifest,
    out: &'a Path,
}

impl Runner<'_> {
    fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut StageRecord, &Path) -> AppResult<T>) -> AppResult<T> {
        let mut record = StageRecord::new(name);
        let started = Instant::now();
        let result = f(&mut record, self.out);
        record.wall_ms = started.elapsed().as_secs_f64() * 1e3;
        log::info!("stage {name} finished in {:.1} ms", record.wall_ms);
        match result {
            Ok(v) => {
                self.manifest.stages.push(record);
                Ok(v)
            }
            Err(e) => {
                record.status = Status::Failed;
                record.error = Some(e.to_string());
                self.manifest.stages.push(record);
                self.manifest.status = Status::Failed;
                self.manifest.failed_stage = Some(name.into());
                Err(e.in_stage(name))
            }
        }
    }
}

/// Runs every stage. On failure the partial manifest is still written and
/// returned alongside the error.
pub fn run_pipeline(config: &RunConfig) -> Result<Manifest, (Box<Manifest>, AppError)> {
    run_pipeline_with(config, None)
}

/// As [`run_pipeline`], with an explicit provider instead of the configured one.
pub fn run_pipeline_with(config: &RunConfig, provider: Option<BoxedProvider>) -> Result<Manifest, (Box<Manifest>, AppError)> {
    let out = PathBuf::from(&config.output_dir);
    let mut runner = Runner {
        manifest: Manifest::new(config),
        out: &out,
    };
    let result = run_stages(config, provider, &mut runner);
    let mut manifest = runner.manifest;
    manifest.seal();
    let write = std::fs::create_dir_all(&out)
        .map_err(|e| AppError::io(&out, e))
        .and_then(|_| io::write_json(&out.join(MANIFEST), &manifest));
    match (result, write) {
        (Ok(()), Ok(())) => Ok(manifest),
        (Err(e), _) | (Ok(()), Err(e)) => Err((Box::new(manifest), e)),
    }
}

fn run_stages(config: &RunConfig, provider: Option<BoxedProvider>, r: &mut Runner<'_>) -> AppResult<()> {
    config.validate()?;
    std::fs::create_dir_all(r.out).map_err(|e| AppError::io(r.out, e))?;
    let pool = stages::thread_pool(config.threads)?;
    r.manifest.add_input(Path::new(&config.data.path))?;
    if let Some(p) = &config.perturb {
        r.manifest.add_input(Path::new(&p.foreign))?;
    }

    let mut dataset = r.stage("load", |rec, _| {
        let (dataset, report) = stages::load(config)?;
        rec.count("records", report.records)
            .count("sentences", report.sentences)
            .count("triples", report.triples)
            .count("rejected_too_long", report.rejected_too_long)
            .count("skipped_unknown_relation", report.skipped_unknown_relation.len());
        Ok(dataset)
    })?;

    if config.perturb.is_some() {
        dataset = r.stage("perturb", |rec, out| {
            let perturbed = stages::perturb(config, &dataset)?.expect("perturb configured");
            let path = out.join(PERTURBED);
            io::save_dataset(&path, &perturbed)?;
            rec.artifact(&path)?;
            // reload so downstream stages see what a manual run would
            let options = io::LoadOptions {
                format: io::DatasetFormat::Jsonl,
                ..stages::load_options(config)
            };
            let (reloaded, _) = io::load_dataset(&path, &options)?;
            rec.count("instances", reloaded.len())
                .count("injected", reloaded.len() - dataset.len());
            Ok(reloaded)
        })?;
    }

    let provider = match provider {
        Some(p) => p,
        None => stages::build_provider(&config.provider)?,
    };

    let blocks_path = r.stage("discretize", |rec, out| {
        let blocks = pool.install(|| stages::discretize(&dataset, config.context_width, config.split_mode));
        let path = out.join(BLOCKS);
        io::write_json(&path, &blocks)?;
        rec.count("sentences", blocks.sentences.len())
            .count("blocks", blocks.block_count())
            .count("groups", blocks.groups.len())
            .count("skipped", blocks.skipped.len());
        rec.artifact(&path)?;
        Ok(path)
    })?;

    let queues_path = r.stage("match", |rec, out| {
        let blocks: BlocksFile = io::read_json(&blocks_path)?;
        let queues = pool.install(|| stages::match_blocks(&blocks, &*provider, &config.queue_config()))?;
        let path = out.join(QUEUES);
        io::write_json(&path, &queues)?;
        rec.count("groups", queues.len())
            .count("candidates", queues.iter().map(|q| q.entries.len()).sum());
        rec.artifact(&path)?;
        Ok(path)
    })?;

    let aug_path = r.stage("augment", |rec, out| {
        let queues: Vec<CandidateQueue> = io::read_json(&queues_path)?;
        let augmented = pool.install(|| stages::augment_all(&dataset, &queues, &config.policy))?;
        let path = out.join(AUGMENTED);
        io::save_augmented(&path, &augmented)?;
        rec.count("augmented", augmented.len());
        rec.artifact(&path)?;
        Ok(path)
    })?;

    let (augmented, kept) = r.stage("filter", |rec, out| {
        let augmented: Vec<AugmentedInstance> = io::load_augmented(&aug_path)?;
        let result = pool.install(|| stages::filter(&dataset, &augmented, &*provider, &config.filter, config.seed))?;
        for p in write_filter_outputs(&out.join(FILTERED), &dataset, &result, config.filter.append)? {
            rec.artifact(&p)?;
        }
        let rep = &result.report;
        rec.count("input", rep.input)
            .count("coherence_dropped", rep.coherence_dropped.len())
            .count("topic_dropped", rep.topic_dropped.len())
            .count("untaggable", rep.untaggable.len())
            .count("kept", rep.kept);
        if config.filter.append {
            rec.count("final", dataset.len() + rep.kept);
        }
        Ok((augmented, result.kept))
    })?;

    r.stage("report", |rec, out| {
        let report = RunReport {
            original: dataset.len(),
            augmented: augmented.len(),
            kept: kept.len(),
            triplet_counts: triplet_count_breakdown(&dataset, &kept),
        };
        let path = out.join(REPORT);
        io::write_json(&path, &report)?;
        rec.count("original", report.original).count("kept", report.kept);
        rec.artifact(&path)?;
        Ok(())
    })
}
