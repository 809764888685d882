//! Dataset formats and JSON artifact helpers.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use ssdau_core::augment::{AugmentedInstance, Provenance};
use ssdau_core::corpus::{
    align_record, apply_schema, Instance, RawMention, RawRecord, RawTriple, RelationSchema, UnknownRelationPolicy,
};
use ssdau_core::Error as CoreError;

use crate::error::{AppError, AppResult};

pub const DEFAULT_MAX_TOKENS: usize = 128;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    /// One record per line: `{id, text, triples: [{head, relation, tail}]}`.
    #[default]
    Jsonl,
    /// Array of `{sentText, relationMentions: [{em1Text, em2Text, label}],
    /// entityMentions: [{text, label}]}`.
    NytJson,
    /// Array of `{text, triple_list: [[head, relation, tail]]}`.
    WebnlgJson,
}

impl FromStr for DatasetFormat {
    type Err = AppError;

    fn from_str(s: &str) -> AppResult<Self> {
        match s {
            "jsonl" => Ok(DatasetFormat::Jsonl),
            "nyt_json" | "nyt" => Ok(DatasetFormat::NytJson),
            "webnlg_json" | "webnlg" => Ok(DatasetFormat::WebnlgJson),
            other => Err(AppError::Validation(format!("unknown dataset format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub format: DatasetFormat,
    pub max_tokens: usize,
    pub unknown_relation: UnknownRelationPolicy,
    /// Relations outside this schema follow `unknown_relation`; `None`
    /// accepts every relation.
    pub schema: Option<RelationSchema>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            format: DatasetFormat::Jsonl,
            max_tokens: DEFAULT_MAX_TOKENS,
            unknown_relation: UnknownRelationPolicy::Fail,
            schema: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub path: String,
    pub format: DatasetFormat,
    pub records: usize,
    pub sentences: usize,
    pub triples: usize,
    pub rejected_too_long: usize,
    pub skipped_unknown_relation: Vec<(String, String)>,
    pub relations: Vec<String>,
    pub entity_tags: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Deserialize)]
struct NytRecord {
    #[serde(rename = "sentText")]
    sent_text: String,
    #[serde(rename = "relationMentions", default)]
    relation_mentions: Vec<NytRelation>,
    #[serde(rename = "entityMentions", default)]
    entity_mentions: Vec<NytEntity>,
}

#[derive(Deserialize)]
struct NytRelation {
    #[serde(rename = "em1Text")]
    em1: String,
    #[serde(rename = "em2Text")]
    em2: String,
    label: String,
}

#[derive(Deserialize)]
struct NytEntity {
    text: String,
    label: String,
}

#[derive(Deserialize)]
struct WebnlgRecord {
    text: String,
    #[serde(default)]
    triple_list: Vec<(String, String, String)>,
}

pub const DEFAULT_ENTITY_TAG: &str = "entity";

fn read_to_string(path: &Path) -> AppResult<String> {
    fs::read_to_string(path).map_err(|e| AppError::io(path, e))
}

fn raw_records(path: &Path, format: DatasetFormat) -> AppResult<Vec<RawRecord>> {
    let content = read_to_string(path)?;
    let malformed = |index: usize, e: serde_json::Error| {
        AppError::Core(CoreError::MalformedRecord {
            index,
            reason: e.to_string(),
        })
    };
    match format {
        DatasetFormat::Jsonl => content
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| serde_json::from_str::<RawRecord>(l).map_err(|e| malformed(i, e)))
            .collect(),
        DatasetFormat::NytJson | DatasetFormat::WebnlgJson if content.trim().is_empty() => Ok(Vec::new()),
        DatasetFormat::NytJson => {
            let items: Vec<serde_json::Value> = serde_json::from_str(&content).map_err(|e| AppError::json(path, e))?;
            items
                .into_iter()
                .enumerate()
                .map(|(i, v)| {
                    let r: NytRecord = serde_json::from_value(v).map_err(|e| malformed(i, e))?;
                    let tag_of = |surface: &str| {
                        r.entity_mentions
                            .iter()
                            .find(|e| e.text == surface)
                            .map_or(DEFAULT_ENTITY_TAG.to_string(), |e| e.label.clone())
                    };
                    let mention = |s: &str| RawMention {
                        surface: s.to_string(),
                        char_start: None,
                        tag: tag_of(s),
                    };
                    Ok(RawRecord {
                        id: Some(format!("nyt-{i}")),
                        text: r.sent_text.clone(),
                        triples: r
                            .relation_mentions
                            .iter()
                            .filter(|m| m.label != "None")
                            .map(|m| RawTriple {
                                head: mention(&m.em1),
                                relation: m.label.clone(),
                                tail: mention(&m.em2),
                            })
                            .collect(),
                    })
                })
                .collect()
        }
        DatasetFormat::WebnlgJson => {
            let items: Vec<serde_json::Value> = serde_json::from_str(&content).map_err(|e| AppError::json(path, e))?;
            items
                .into_iter()
                .enumerate()
                .map(|(i, v)| {
                    let r: WebnlgRecord = serde_json::from_value(v).map_err(|e| malformed(i, e))?;
                    // WebNLG surfaces often carry underscores for spaces
                    let surface = |s: &str| {
                        if r.text.contains(s) {
                            s.to_string()
                        } else {
                            s.replace('_', " ")
                        }
                    };
                    let mention = |s: &str| RawMention {
                        surface: surface(s),
                        char_start: None,
                        tag: DEFAULT_ENTITY_TAG.into(),
                    };
                    Ok(RawRecord {
                        id: Some(format!("webnlg-{i}")),
                        text: r.text.clone(),
                        triples: r
                            .triple_list
                            .iter()
                            .map(|(h, rel, t)| RawTriple {
                                head: mention(h),
                                relation: rel.clone(),
                                tail: mention(t),
                            })
                            .collect(),
                    })
                })
                .collect()
        }
    }
}

/// Loads, aligns and validates a dataset.
pub fn load_dataset(path: &Path, options: &LoadOptions) -> AppResult<(Vec<Instance>, LoadReport)> {
    let raws = raw_records(path, options.format)?;
    let mut report = LoadReport {
        path: path.display().to_string(),
        format: options.format,
        records: raws.len(),
        ..LoadReport::default()
    };
    let mut instances = Vec::with_capacity(raws.len());
    let mut ids = BTreeSet::new();
    for (i, raw) in raws.iter().enumerate() {
        let aligned = align_record(i, raw)?;
        if !ids.insert(aligned.instance.sentence.id.clone()) {
            return Err(AppError::Core(CoreError::MalformedRecord {
                index: i,
                reason: format!("duplicate id {:?}", aligned.instance.sentence.id),
            }));
        }
        if aligned.instance.sentence.len() > options.max_tokens {
            report.rejected_too_long += 1;
            continue;
        }
        report.warnings.extend(aligned.warnings);
        instances.push(aligned.instance);
    }
    if let Some(schema) = &options.schema {
        let (kept, skipped) = apply_schema(instances, schema, options.unknown_relation)?;
        instances = kept;
        report.skipped_unknown_relation = skipped;
    }
    report.sentences = instances.len();
    report.triples = instances.iter().map(|i| i.triples.len()).sum();
    let relations: BTreeSet<&str> = instances.iter().flat_map(|i| &i.triples).map(|t| t.relation.as_str()).collect();
    let tags: BTreeSet<&str> = instances
        .iter()
        .flat_map(|i| &i.triples)
        .flat_map(|t| [t.head.tag.as_str(), t.tail.tag.as_str()])
        .collect();
    report.relations = relations.into_iter().map(String::from).collect();
    report.entity_tags = tags.into_iter().map(String::from).collect();
    Ok((instances, report))
}

/// Relation schema covering every instance, or a schema error when the
/// data holds no relations at all.
pub fn infer_schema<'a, I: IntoIterator<Item = &'a Instance>>(instances: I) -> AppResult<RelationSchema> {
    Ok(RelationSchema::infer(instances)?)
}

fn writer(path: &Path) -> AppResult<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    Ok(BufWriter::new(fs::File::create(path).map_err(|e| AppError::io(path, e))?))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> AppResult<()> {
    let mut w = writer(path)?;
    for item in items {
        serde_json::to_writer(&mut w, &item).map_err(|e| AppError::json(path, e))?;
        w.write_all(b"\n").map_err(|e| AppError::io(path, e))?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> AppResult<Vec<T>> {
    read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| AppError::json(path, e)))
        .collect()
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> AppResult<()> {
    let mut w = writer(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| AppError::json(path, e))?;
    w.write_all(b"\n").map_err(|e| AppError::io(path, e))?;
    w.flush().map_err(|e| AppError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> AppResult<T> {
    serde_json::from_str(&read_to_string(path)?).map_err(|e| AppError::json(path, e))
}

/// Writes instances in the JSON-lines interchange format, offsets included.
pub fn save_dataset(path: &Path, instances: &[Instance]) -> AppResult<()> {
    write_jsonl(path, instances.iter().map(Instance::to_record))
}

/// An augmented instance on disk: the interchange record plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedRecord {
    pub id: String,
    pub text: String,
    pub triples: Vec<RawTriple>,
    pub provenance: Provenance,
}

impl AugmentedRecord {
    pub fn from_instance(a: &AugmentedInstance) -> Self {
        let rec = a.to_instance().to_record();
        Self {
            id: a.sentence.id.clone(),
            text: rec.text,
            triples: rec.triples,
            provenance: a.provenance.clone(),
        }
    }

    pub fn to_instance(&self, index: usize) -> AppResult<AugmentedInstance> {
        let raw = RawRecord {
            id: Some(self.id.clone()),
            text: self.text.clone(),
            triples: self.triples.clone(),
        };
        let inst = align_record(index, &raw)?.instance;
        Ok(AugmentedInstance {
            sentence: inst.sentence,
            triples: inst.triples,
            provenance: self.provenance.clone(),
        })
    }
}

pub fn save_augmented(path: &Path, items: &[AugmentedInstance]) -> AppResult<()> {
    write_jsonl(path, items.iter().map(AugmentedRecord::from_instance))
}

pub fn load_augmented(path: &Path) -> AppResult<Vec<AugmentedInstance>> {
    read_jsonl::<AugmentedRecord>(path)?
        .iter()
        .enumerate()
        .map(|(i, r)| r.to_instance(i))
        .collect()
}

/// Plain interchange records for augmented instances, provenance dropped.
pub fn augmented_as_instances(items: &[AugmentedInstance]) -> Vec<Instance> {
    items.iter().map(AugmentedInstance::to_instance).collect()
}

pub fn sha256_file(path: &Path) -> AppResult<String> {
    use sha2::{Digest, Sha256};
    let bytes = fs::read(path).map_err(|e| AppError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn must_exist(path: &Path) -> AppResult<PathBuf> {
    if path.exists() {
        Ok(path.to_path_buf())
    } else {
        Err(AppError::Validation(format!("{} does not exist", path.display())))
    }
}
