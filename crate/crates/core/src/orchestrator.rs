//! Experiment configuration and the resumable end-to-end pipeline:
//! stimuli, corpus, augmentation, two trainings, scoring, analysis, report
//! and a content-hashed manifest.
//!
//! Run directory layout:
//!
//! ```text
//! config.json              resolved configuration
//! stimuli/<construction>.jsonl
//! corpus/base/{train,valid,test}.txt
//! corpus/aug/{train,valid,test}.txt
//! corpus/augmentation.txt  the added sentences, one per line
//! corpus/vocab.txt
//! model_base.bin, model_aug.bin
//! scores/{base,aug}.csv    (and scores/<remote id>.csv)
//! effects.csv, summaries.csv, fits.csv, verdicts.csv
//! report/report.md, report/<construction>.svg
//! manifest.json            written last
//! run_log.json             wall times; not part of the manifest
//! ```
//!
//! Every stage first looks for its artifacts and loads them if present, so
//! deleting downstream files and re-running rebuilds only those.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{augment_corpus, builtin_grammar, load_grammar, synth_corpus, CorpusSplit, DependencyMode, Sentence, Vocab};
use crate::lm_client::{score_paradigms, ClientOptions};
use crate::neural_lm::{
    evaluate_perplexity, read_checkpoint, sequence_surprisal, train, unigram_perplexity, write_checkpoint, LmConfig,
    LmParameters,
};
use crate::report::{
    emit_tables, read_tables, render_effect_chart, render_report, Criterion, FitRow, ModelResults, ReportBundle,
    VerdictRow,
};
use crate::scoring::{classify_pattern, compute_effects, effect_summary, score_items, RegionScore};
use crate::stats::{basic_licensing_test, directional_island_tests, island_three_way_test, Analysis};
use crate::stimgen::{
    bind_lexicon, builtin_augmentation_lexicon, builtin_lexicon, builtin_template, default_item_count,
    generate_training_sentences, read_items_jsonl, validate_lexicon, write_items_jsonl, ParadigmItem,
};
use crate::Construction;

pub const BASE_MODEL: &str = "base";
pub const AUG_MODEL: &str = "aug";

/// A configuration problem, located by its JSON field path.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("config error at `{path}`: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusSource {
    Synthetic,
    Files,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    #[serde(default = "CorpusSpec::default_source")]
    pub source: CorpusSource,
    /// Grammar file for synthetic corpora; the built-in grammar if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grammar: Option<PathBuf>,
    /// Approximate corpus size for synthetic corpora.
    #[serde(default = "CorpusSpec::default_tokens")]
    pub tokens: usize,
    /// Per-construction dependency mode, keyed by grammar construction name.
    #[serde(default)]
    pub dependency: BTreeMap<String, DependencyMode>,
    /// Directory with train.txt, valid.txt and test.txt for file corpora.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default = "CorpusSpec::default_max_vocab")]
    pub max_vocab: usize,
}

impl CorpusSpec {
    fn default_source() -> CorpusSource {
        CorpusSource::Synthetic
    }
    fn default_tokens() -> usize {
        1_000_000
    }
    fn default_max_vocab() -> usize {
        10_000
    }
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            source: Self::default_source(),
            grammar: None,
            tokens: Self::default_tokens(),
            dependency: BTreeMap::new(),
            dir: None,
            max_vocab: Self::default_max_vocab(),
        }
    }
}

/// A named preset with optional per-field overrides.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmSpec {
    #[serde(default = "LmSpec::default_preset")]
    pub preset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embed_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_layers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropout_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bptt_len: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_clip_norm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anneal_factor: Option<f64>,
    /// Defaults to the run seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl LmSpec {
    fn default_preset() -> String {
        "desk".into()
    }

    pub fn desk() -> Self {
        LmSpec {
            preset: Self::default_preset(),
            ..Default::default()
        }
    }

    /// The preset with overrides applied; `run_seed` fills a missing seed.
    pub fn resolve(&self, run_seed: u64) -> Result<LmConfig, ConfigError> {
        let base = LmConfig::preset(&self.preset)
            .ok_or_else(|| ConfigError::new("lm.preset", format!("unknown preset `{}` (expected desk or full)", self.preset)))?;
        let config = LmConfig {
            embed_dim: self.embed_dim.unwrap_or(base.embed_dim),
            hidden_dim: self.hidden_dim.unwrap_or(base.hidden_dim),
            num_layers: self.num_layers.unwrap_or(base.num_layers),
            dropout_prob: self.dropout_prob.unwrap_or(base.dropout_prob),
            batch_size: self.batch_size.unwrap_or(base.batch_size),
            learning_rate: self.learning_rate.unwrap_or(base.learning_rate),
            max_epochs: self.max_epochs.unwrap_or(base.max_epochs),
            bptt_len: self.bptt_len.unwrap_or(base.bptt_len),
            grad_clip_norm: self.grad_clip_norm.unwrap_or(base.grad_clip_norm),
            anneal_factor: self.anneal_factor.unwrap_or(base.anneal_factor),
            seed: self.seed.unwrap_or(run_seed),
        };
        config.validate().map_err(|e| ConfigError::new("lm", e.to_string()))?;
        Ok(config)
    }

    fn filled(&self, c: &LmConfig) -> LmSpec {
        LmSpec {
            preset: self.preset.clone(),
            embed_dim: Some(c.embed_dim),
            hidden_dim: Some(c.hidden_dim),
            num_layers: Some(c.num_layers),
            dropout_prob: Some(c.dropout_prob),
            batch_size: Some(c.batch_size),
            learning_rate: Some(c.learning_rate),
            max_epochs: Some(c.max_epochs),
            bptt_len: Some(c.bptt_len),
            grad_clip_norm: Some(c.grad_clip_norm),
            anneal_factor: Some(c.anneal_factor),
            seed: Some(c.seed),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItemSpec {
    /// Items per construction unless listed in `counts`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default)]
    pub counts: BTreeMap<Construction, usize>,
    /// Defaults to the run seed plus one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentationSpec {
    #[serde(default = "AugmentationSpec::default_construction")]
    pub construction: Construction,
    #[serde(default = "AugmentationSpec::default_n")]
    pub n: usize,
    /// Defaults to the run seed plus two.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl AugmentationSpec {
    fn default_construction() -> Construction {
        Construction::Clefting
    }
    fn default_n() -> usize {
        864
    }
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        AugmentationSpec {
            construction: Self::default_construction(),
            n: Self::default_n(),
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    #[serde(default = "AnalysisSpec::default_alpha")]
    pub alpha: f64,
}

impl AnalysisSpec {
    fn default_alpha() -> f64 {
        0.001
    }
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        AnalysisSpec {
            alpha: Self::default_alpha(),
        }
    }
}

/// An external `/v1/score` service scored alongside the two local models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteSpec {
    #[serde(default = "RemoteSpec::default_model_id")]
    pub model_id: String,
    pub endpoint: String,
    #[serde(default = "RemoteSpec::default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "RemoteSpec::default_max_in_flight")]
    pub max_in_flight: usize,
}

impl RemoteSpec {
    fn default_model_id() -> String {
        "remote".into()
    }
    fn default_batch_size() -> usize {
        32
    }
    fn default_max_in_flight() -> usize {
        4
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "ExperimentConfig::default_name")]
    pub name: String,
    #[serde(default = "ExperimentConfig::default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub corpus: CorpusSpec,
    #[serde(default = "LmSpec::desk")]
    pub lm: LmSpec,
    #[serde(default = "ExperimentConfig::default_constructions")]
    pub constructions: Vec<Construction>,
    #[serde(default)]
    pub items: ItemSpec,
    #[serde(default)]
    pub augmentation: AugmentationSpec,
    #[serde(default)]
    pub analysis: AnalysisSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remote: Option<RemoteSpec>,
    /// Where the run directory lives. Not written to `config.json`, so a
    /// run's artifacts do not depend on its location.
    #[serde(default = "ExperimentConfig::default_out_dir", skip_serializing)]
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    fn default_name() -> String {
        "experiment".into()
    }
    fn default_seed() -> u64 {
        1111
    }
    fn default_constructions() -> Vec<Construction> {
        Construction::ALL.to_vec()
    }
    fn default_out_dir() -> PathBuf {
        PathBuf::from("runs/experiment")
    }

    /// Parses and resolves JSON; errors carry the offending field path.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Self::parse(text)?.resolved()
    }

    /// Parses JSON without resolving defaults that derive from the seed.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::new(if path == "." { "<root>".to_string() } else { path }, e.into_inner().to_string())
        })
    }

    pub fn items_seed(&self) -> u64 {
        self.items.seed.unwrap_or(self.seed.wrapping_add(1))
    }

    pub fn augmentation_seed(&self) -> u64 {
        self.augmentation.seed.unwrap_or(self.seed.wrapping_add(2))
    }

    pub fn lm_config(&self) -> Result<LmConfig, ConfigError> {
        self.lm.resolve(self.seed)
    }

    pub fn item_count(&self, c: Construction) -> usize {
        self.items
            .counts
            .get(&c)
            .copied()
            .or(self.items.count)
            .unwrap_or_else(|| default_item_count(c))
    }

    /// Checks invariants and fills every default so the echoed config
    /// states exactly what ran.
    pub fn resolved(&self) -> Result<Self, ConfigError> {
        if self.constructions.is_empty() {
            return Err(ConfigError::new("constructions", "at least one construction is required"));
        }
        let mut seen = BTreeSet::new();
        for (k, c) in self.constructions.iter().enumerate() {
            if !seen.insert(*c) {
                return Err(ConfigError::new(format!("constructions[{k}]"), format!("`{c}` is listed twice")));
            }
        }
        let aug = &self.augmentation;
        if aug.n % 2 != 0 {
            return Err(ConfigError::new("augmentation.n", format!("must be even, got {}", aug.n)));
        }
        if builtin_augmentation_lexicon(aug.construction).is_none() {
            let have: Vec<&str> = Construction::ALL
                .into_iter()
                .filter(|c| builtin_augmentation_lexicon(*c).is_some())
                .map(Construction::name)
                .collect();
            return Err(ConfigError::new(
                "augmentation.construction",
                format!("no augmentation lexicon for `{}` (available: {})", aug.construction, have.join(", ")),
            ));
        }
        if !(self.analysis.alpha > 0.0 && self.analysis.alpha < 1.0) {
            return Err(ConfigError::new("analysis.alpha", format!("must lie in (0, 1), got {}", self.analysis.alpha)));
        }
        let mut counts = BTreeMap::new();
        for &c in &self.constructions {
            let n = self.item_count(c);
            if n < 2 {
                let path = if self.items.counts.contains_key(&c) {
                    format!("items.counts.{c}")
                } else {
                    "items.count".into()
                };
                return Err(ConfigError::new(path, format!("need at least 2 items, got {n}")));
            }
            counts.insert(c, n);
        }
        for c in self.items.counts.keys() {
            if !self.constructions.contains(c) {
                return Err(ConfigError::new(format!("items.counts.{c}"), "construction is not tested"));
            }
        }
        match self.corpus.source {
            CorpusSource::Synthetic => {
                let grammar = match &self.corpus.grammar {
                    Some(p) => load_grammar(p).map_err(|e| ConfigError::new("corpus.grammar", e.to_string()))?,
                    None => builtin_grammar(),
                };
                for name in self.corpus.dependency.keys() {
                    if !grammar.constructions.contains_key(name) {
                        let valid: Vec<&str> = grammar.constructions.keys().map(String::as_str).collect();
                        return Err(ConfigError::new(
                            format!("corpus.dependency.{name}"),
                            format!("grammar has no such construction (valid: {})", valid.join(", ")),
                        ));
                    }
                }
                if self.corpus.tokens == 0 {
                    return Err(ConfigError::new("corpus.tokens", "must be positive"));
                }
            }
            CorpusSource::Files => {
                if self.corpus.dir.is_none() {
                    return Err(ConfigError::new("corpus.dir", "required when source is `files`"));
                }
            }
        }
        if let Some(r) = &self.remote {
            if r.endpoint.trim().is_empty() {
                return Err(ConfigError::new("remote.endpoint", "must not be empty"));
            }
            if [BASE_MODEL, AUG_MODEL].contains(&r.model_id.as_str()) || r.model_id.contains(['/', '\\']) {
                return Err(ConfigError::new("remote.model_id", format!("`{}` is reserved or not a file name", r.model_id)));
            }
        }
        let lm = self.lm_config()?;
        let mut out = self.clone();
        out.lm = self.lm.filled(&lm);
        out.items = ItemSpec {
            count: None,
            counts,
            seed: Some(self.items_seed()),
        };
        out.augmentation.seed = Some(self.augmentation_seed());
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    load_config_with(Some(path), None, None)
}

/// Loads `path` (or the defaults), applies command-line overrides, then
/// resolves, so seed-derived defaults follow an overridden seed.
pub fn load_config_with(path: Option<&Path>, seed: Option<u64>, out_dir: Option<PathBuf>) -> Result<ExperimentConfig, ConfigError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| ConfigError::new("<file>", format!("{}: {e}", p.display())))?,
        None => "{}".to_string(),
    };
    let mut config = ExperimentConfig::parse(&text)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(out) = out_dir {
        config.out_dir = out;
    }
    config.resolved()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Stimuli,
    Corpus,
    Augment,
    TrainBase,
    TrainAug,
    Score,
    Analyze,
    Report,
    Manifest,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Stimuli => "stimuli",
            Stage::Corpus => "corpus",
            Stage::Augment => "augment",
            Stage::TrainBase => "train_base",
            Stage::TrainAug => "train_aug",
            Stage::Score => "score",
            Stage::Analyze => "analyze",
            Stage::Report => "report",
            Stage::Manifest => "manifest",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("stage `{stage}` failed: {message}")]
    Stage { stage: Stage, message: String },
}

fn stage_fail(stage: Stage, message: impl fmt::Display) -> PipelineError {
    PipelineError::Stage {
        stage,
        message: message.to_string(),
    }
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T, E: fmt::Display> AtStage<T> for Result<T, E> {
    fn at(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|e| stage_fail(stage, e))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactHash {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Content hashes of every run artifact. Holds no timestamps, so identical
/// runs produce identical manifests; wall times go to `run_log.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub artifacts: Vec<ArtifactHash>,
}

#[derive(Clone, Debug, Default, Serialize)]
struct StageLog {
    stage: &'static str,
    resumed: bool,
    wall_seconds: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
struct RunLog {
    stages: Vec<StageLog>,
    training: BTreeMap<String, serde_json::Value>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RUN_LOG_FILE: &str = "run_log.json";

fn sha256_file(path: &Path) -> std::io::Result<(String, u64)> {
    let data = std::fs::read(path)?;
    let digest = Sha256::digest(&data);
    Ok((digest.iter().map(|b| format!("{b:02x}")).collect(), data.len() as u64))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            out.push(path.strip_prefix(root).expect("under root").to_path_buf());
        }
    }
    Ok(())
}

fn is_artifact(rel: &Path) -> bool {
    let s = rel.to_string_lossy();
    s != MANIFEST_FILE && s != RUN_LOG_FILE && !s.ends_with(".tmp") && !s.contains(".tmp/")
}

/// Hashes every artifact under `dir`, sorted by path.
pub fn hash_artifacts(dir: &Path) -> std::io::Result<Vec<ArtifactHash>> {
    let mut files = Vec::new();
    collect_files(dir, dir, &mut files)?;
    files.retain(|p| is_artifact(p));
    files.sort();
    files
        .into_iter()
        .map(|rel| {
            let (sha256, bytes) = sha256_file(&dir.join(&rel))?;
            Ok(ArtifactHash {
                path: rel.to_string_lossy().replace('\\', "/"),
                sha256,
                bytes,
            })
        })
        .collect()
}

/// Recomputes the hashes of a finished run. Returns the paths whose
/// content no longer matches (or that are missing or unlisted).
pub fn verify_manifest(dir: &Path) -> Result<Vec<String>, PipelineError> {
    let st = Stage::Manifest;
    let text = std::fs::read_to_string(dir.join(MANIFEST_FILE)).at(st)?;
    let manifest: RunManifest = serde_json::from_str(&text).at(st)?;
    let now: BTreeMap<String, ArtifactHash> = hash_artifacts(dir).at(st)?.into_iter().map(|a| (a.path.clone(), a)).collect();
    let listed: BTreeMap<String, ArtifactHash> = manifest.artifacts.into_iter().map(|a| (a.path.clone(), a)).collect();
    let paths: BTreeSet<&String> = now.keys().chain(listed.keys()).collect();
    Ok(paths
        .into_iter()
        .filter(|p| now.get(*p) != listed.get(*p))
        .cloned()
        .collect())
}

/// Writes via a sibling temporary file and a rename, so an interrupted
/// run never leaves a truncated artifact behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = PathBuf::from(format!("{}.tmp", path.display()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

const SCORES_HEADER: [&str; 6] = ["construction", "item_id", "filler", "gap", "island", "region_surprisal_bits"];

pub fn write_scores(path: &Path, scores: &[RegionScore]) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let io = |e: csv::Error| std::io::Error::other(e.to_string());
    w.write_record(SCORES_HEADER).map_err(io)?;
    for s in scores {
        w.write_record([
            s.construction.to_string(),
            s.item_id.to_string(),
            s.filler.to_string(),
            s.gap.to_string(),
            s.island.to_string(),
            s.region_surprisal_bits.to_string(),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    write_atomic(path, &bytes)
}

pub fn read_scores(path: &Path) -> Result<Vec<RegionScore>, String> {
    let mut r = csv::Reader::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let header = r.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().ne(SCORES_HEADER) {
        return Err(format!("{}: expected header {}", path.display(), SCORES_HEADER.join(",")));
    }
    r.deserialize()
        .map(|row| row.map_err(|e| format!("{}: {e}", path.display())))
        .collect()
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    dir: &'a Path,
    log: RunLog,
}

impl Run<'_> {
    fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn timed<T>(&mut self, stage: Stage, resumed: bool, f: impl FnOnce(&mut Self) -> Result<T, PipelineError>) -> Result<T, PipelineError> {
        let started = Instant::now();
        let out = f(self)?;
        let wall_seconds = started.elapsed().as_secs_f64();
        log::info!("stage {stage}: {} in {wall_seconds:.1}s", if resumed { "resumed" } else { "done" });
        self.log.stages.push(StageLog {
            stage: stage.name(),
            resumed,
            wall_seconds,
        });
        Ok(out)
    }

    fn stimuli(&mut self) -> Result<BTreeMap<Construction, Vec<ParadigmItem>>, PipelineError> {
        let st = Stage::Stimuli;
        let mut out = BTreeMap::new();
        let mut resumed = true;
        let started = Instant::now();
        for &c in &self.cfg.constructions {
            let path = self.path(&format!("stimuli/{c}.jsonl"));
            let items = if path.exists() {
                let file = std::fs::File::open(&path).at(st)?;
                read_items_jsonl(BufReader::new(file)).at(st)?
            } else {
                resumed = false;
                let items = bind_lexicon(builtin_template(c), builtin_lexicon(c), self.cfg.item_count(c), self.cfg.items_seed()).at(st)?;
                let mut buf = Vec::new();
                write_items_jsonl(&items, &mut buf).at(st)?;
                write_atomic(&path, &buf).at(st)?;
                items
            };
            out.insert(c, items);
        }
        self.log.stages.push(StageLog {
            stage: Stage::Stimuli.name(),
            resumed,
            wall_seconds: started.elapsed().as_secs_f64(),
        });
        Ok(out)
    }

    fn write_split(&self, split: &CorpusSplit, rel: &str, stage: Stage) -> Result<(), PipelineError> {
        let st = stage;
        let dest = self.path(rel);
        let tmp = PathBuf::from(format!("{}.tmp", dest.display()));
        if tmp.exists() {
            std::fs::remove_dir_all(&tmp).at(st)?;
        }
        split.write_dir(&tmp).at(st)?;
        std::fs::rename(&tmp, &dest).at(st)
    }

    fn corpus(&mut self) -> Result<CorpusSplit, PipelineError> {
        let st = Stage::Corpus;
        let dest = self.path("corpus/base");
        let resumed = dest.exists();
        self.timed(Stage::Corpus, resumed, |run| {
            if resumed {
                return CorpusSplit::read_dir(&dest).at(st);
            }
            let spec = &run.cfg.corpus;
            let split = match spec.source {
                CorpusSource::Synthetic => {
                    let mut grammar = match &spec.grammar {
                        Some(p) => load_grammar(p).at(st)?,
                        None => builtin_grammar(),
                    };
                    for (name, mode) in &spec.dependency {
                        grammar.construction_mut(name).expect("checked at load").dependency = *mode;
                    }
                    synth_corpus(&grammar, spec.tokens, run.cfg.seed).at(st)?
                }
                CorpusSource::Files => CorpusSplit::read_dir(spec.dir.as_deref().expect("checked at load")).at(st)?,
            };
            std::fs::create_dir_all(run.path("corpus")).at(st)?;
            run.write_split(&split, "corpus/base", Stage::Corpus)?;
            Ok(split)
        })
    }

    fn augment(&mut self, base: &CorpusSplit) -> Result<(CorpusSplit, Vocab), PipelineError> {
        let st = Stage::Augment;
        let (aug_dir, vocab_path) = (self.path("corpus/aug"), self.path("corpus/vocab.txt"));
        let added_path = self.path("corpus/augmentation.txt");
        let resumed = aug_dir.exists() && vocab_path.exists() && added_path.exists();
        self.timed(Stage::Augment, resumed, |run| {
            if resumed {
                let split = CorpusSplit::read_dir(&aug_dir).at(st)?;
                return Ok((split, Vocab::read(&vocab_path).at(st)?));
            }
            let spec = &run.cfg.augmentation;
            let c = spec.construction;
            let lexicon = builtin_augmentation_lexicon(c).expect("checked at load");
            let seed = run.cfg.augmentation_seed();
            let added = generate_training_sentences(builtin_template(c), spec.n, lexicon, builtin_lexicon(c), seed).at(st)?;
            let sentences: Vec<Sentence> = added.iter().map(|s| s.tokens.clone()).collect();
            let text: String = sentences.iter().map(|s| format!("{}\n", s.join(" "))).collect();
            let split = augment_corpus(base, &sentences, seed);
            let vocab = Vocab::build(&split.train, run.cfg.corpus.max_vocab).at(st)?;
            if aug_dir.exists() {
                std::fs::remove_dir_all(&aug_dir).at(st)?;
            }
            run.write_split(&split, "corpus/aug", Stage::Augment)?;
            write_atomic(&added_path, text.as_bytes()).at(st)?;
            let vocab_tmp = PathBuf::from(format!("{}.tmp", vocab_path.display()));
            vocab.write(&vocab_tmp).at(st)?;
            std::fs::rename(&vocab_tmp, &vocab_path).at(st)?;
            Ok((split, vocab))
        })
    }

    fn train_model(&mut self, stage: Stage, model_id: &str, split: &CorpusSplit, vocab: &Vocab) -> Result<(LmParameters<f32>, f64), PipelineError> {
        let st = stage;
        let path = self.path(&format!("model_{model_id}.bin"));
        let resumed = path.exists();
        let lm = self.cfg.lm_config()?;
        let encoded = split.encode(vocab);
        self.timed(stage, resumed, |run| {
            let params = if resumed {
                let (stored, params) = read_checkpoint(&path).at(st)?;
                if stored != lm {
                    return Err(stage_fail(st, format!("{} was trained with a different configuration", path.display())));
                }
                params
            } else {
                // always from scratch: both models share the seed and preset
                let (params, log) = train(&lm, &encoded, vocab.len()).at(st)?;
                run.log.training.insert(model_id.to_string(), serde_json::to_value(&log).at(st)?);
                let tmp = PathBuf::from(format!("{}.tmp", path.display()));
                write_checkpoint(&tmp, &lm, &params).at(st)?;
                std::fs::rename(&tmp, &path).at(st)?;
                params
            };
            let ppl = evaluate_perplexity(&params, &encoded.valid).at(st)?;
            Ok((params, ppl))
        })
    }

    fn score_local(&mut self, model_id: &str, params: &LmParameters<f32>, vocab: &Vocab, items: &[ParadigmItem]) -> Result<Vec<RegionScore>, PipelineError> {
        let st = Stage::Score;
        let path = self.path(&format!("scores/{model_id}.csv"));
        if path.exists() {
            return read_scores(&path).at(st);
        }
        let report = validate_lexicon(items, vocab);
        if !report.passes() {
            let words: Vec<&str> = report.oov.keys().map(String::as_str).take(10).collect();
            return Err(stage_fail(st, format!("stimuli use words outside the vocabulary: {}", words.join(", "))));
        }
        let scores = score_items(items, |t| sequence_surprisal(params, vocab, t, true)).at(st)?;
        write_scores(&path, &scores).at(st)?;
        Ok(scores)
    }

    fn score_remote(&mut self, spec: &RemoteSpec, items: &[ParadigmItem]) -> Result<Vec<RegionScore>, PipelineError> {
        let st = Stage::Score;
        let path = self.path(&format!("scores/{}.csv", spec.model_id));
        if path.exists() {
            return read_scores(&path).at(st);
        }
        let opts = ClientOptions {
            batch_size: spec.batch_size,
            max_in_flight: spec.max_in_flight,
            ..ClientOptions::default()
        };
        let (_, scores) = score_paradigms(&spec.endpoint, items, &opts).at(st)?;
        write_scores(&path, &scores).at(st)?;
        Ok(scores)
    }
}

/// Effects, summaries, fits and verdicts for one model's scores.
pub fn analyze_model(model_id: &str, scores: &[RegionScore], constructions: &[Construction], alpha: f64) -> Result<ModelResults, String> {
    let effects = compute_effects(scores).map_err(|e| e.to_string())?;
    let summaries = effect_summary(&effects).map_err(|e| e.to_string())?;
    let patterns = classify_pattern(&summaries).map_err(|e| e.to_string())?;
    let mut fits = Vec::new();
    let mut verdicts = Vec::new();
    for &c in constructions {
        let ctx = |e: crate::stats::StatsError| format!("{model_id}/{c}: {e}");
        match patterns.iter().find(|p| p.construction == c) {
            Some(p) => verdicts.extend(VerdictRow::from_pattern(model_id, p)),
            None => return Err(format!("{model_id}/{c}: no scores")),
        }
        let (fit, v) = basic_licensing_test(scores, c, alpha).map_err(ctx)?;
        fits.extend(FitRow::from_fit(model_id, c, Analysis::BasicLicensing, &fit));
        verdicts.push(VerdictRow::from_stats(model_id, &v));
        if builtin_template(c).has_islands() {
            let (fit, v) = island_three_way_test(scores, c, alpha).map_err(ctx)?;
            fits.extend(FitRow::from_fit(model_id, c, Analysis::IslandThreeWay, &fit));
            verdicts.push(VerdictRow::from_stats(model_id, &v));
            for (fit, v) in directional_island_tests(scores, c, alpha).map_err(ctx)? {
                fits.extend(FitRow::from_fit(model_id, c, v.analysis, &fit));
                verdicts.push(VerdictRow::from_stats(model_id, &v));
            }
        } else {
            for k in [Criterion::IslandThreeWay, Criterion::Fge, Criterion::Uge] {
                verdicts.push(VerdictRow::not_tested(model_id, c, k, "no island items"));
            }
        }
    }
    Ok(ModelResults {
        model_id: model_id.to_string(),
        valid_perplexity: None,
        effects,
        summaries,
        fits,
        verdicts,
    })
}

const TABLES: [&str; 4] = ["effects.csv", "summaries.csv", "fits.csv", "verdicts.csv"];

fn models_from_tables(dir: &Path, order: &[String]) -> Result<Vec<ModelResults>, String> {
    let t = read_tables(dir).map_err(|e| e.to_string())?;
    let mut models: Vec<ModelResults> = order
        .iter()
        .map(|id| ModelResults {
            model_id: id.clone(),
            ..Default::default()
        })
        .collect();
    let slot = |models: &mut Vec<ModelResults>, id: &str| -> Result<usize, String> {
        models.iter().position(|m| m.model_id == id).ok_or_else(|| format!("unexpected model `{id}` in tables"))
    };
    for (id, e) in t.effects {
        let k = slot(&mut models, &id)?;
        models[k].effects.push(e);
    }
    for (id, s) in t.summaries {
        let k = slot(&mut models, &id)?;
        models[k].summaries.push(s);
    }
    for f in t.fits {
        let k = slot(&mut models, &f.model_id)?;
        models[k].fits.push(f);
    }
    for v in t.verdicts {
        let k = slot(&mut models, &v.model_id)?;
        models[k].verdicts.push(v);
    }
    Ok(models)
}

/// Runs every stage up to and including `until`, reusing artifacts that
/// already exist under the run directory. The manifest is written only by
/// the final stage.
pub fn run_stages(cfg: &ExperimentConfig, until: Stage) -> Result<Option<RunManifest>, PipelineError> {
    let cfg = cfg.resolved()?;
    let dir = cfg.out_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| ConfigError::new("out_dir", format!("{}: {e}", dir.display())))?;
    let config_path = dir.join("config.json");
    let config_json = cfg.to_json();
    match std::fs::read_to_string(&config_path) {
        Ok(existing) if existing != config_json => {
            return Err(ConfigError::new(
                "out_dir",
                format!("{} holds a run with a different configuration; choose another --out", dir.display()),
            )
            .into())
        }
        Ok(_) => {}
        Err(_) => write_atomic(&config_path, config_json.as_bytes()).at(Stage::Stimuli)?,
    }
    let _ = std::fs::remove_file(dir.join(MANIFEST_FILE));

    let mut run = Run {
        cfg: &cfg,
        dir: &dir,
        log: RunLog::default(),
    };
    let result = run_inner(&mut run, until);
    let log = serde_json::to_string_pretty(&run.log).expect("log serializes");
    let _ = write_atomic(&dir.join(RUN_LOG_FILE), format!("{log}\n").as_bytes());
    result
}

fn run_inner(run: &mut Run<'_>, until: Stage) -> Result<Option<RunManifest>, PipelineError> {
    let cfg = run.cfg;
    let items = run.stimuli()?;
    if until == Stage::Stimuli {
        return Ok(None);
    }
    let base = run.corpus()?;
    if until == Stage::Corpus {
        return Ok(None);
    }
    let (aug, vocab) = run.augment(&base)?;
    if until == Stage::Augment {
        return Ok(None);
    }
    let (base_params, base_ppl) = run.train_model(Stage::TrainBase, BASE_MODEL, &base, &vocab)?;
    if until == Stage::TrainBase {
        return Ok(None);
    }
    let (aug_params, aug_ppl) = run.train_model(Stage::TrainAug, AUG_MODEL, &aug, &vocab)?;
    if until == Stage::TrainAug {
        return Ok(None);
    }

    let all_items: Vec<ParadigmItem> = items.values().flatten().cloned().collect();
    let mut model_ids = vec![BASE_MODEL.to_string(), AUG_MODEL.to_string()];
    let score_paths: Vec<PathBuf> = model_ids.iter().map(|m| run.path(&format!("scores/{m}.csv"))).collect();
    let resumed = score_paths.iter().all(|p| p.exists())
        && cfg.remote.as_ref().is_none_or(|r| run.path(&format!("scores/{}.csv", r.model_id)).exists());
    let scores = run.timed(Stage::Score, resumed, |run| {
        let mut out = vec![
            run.score_local(BASE_MODEL, &base_params, &vocab, &all_items)?,
            run.score_local(AUG_MODEL, &aug_params, &vocab, &all_items)?,
        ];
        if let Some(remote) = &cfg.remote {
            out.push(run.score_remote(remote, &all_items)?);
        }
        Ok(out)
    })?;
    if let Some(r) = &cfg.remote {
        model_ids.push(r.model_id.clone());
    }
    if until == Stage::Score {
        return Ok(None);
    }

    let resumed = TABLES.iter().all(|t| run.path(t).exists());
    let mut models = run.timed(Stage::Analyze, resumed, |run| {
        let st = Stage::Analyze;
        if resumed {
            return models_from_tables(run.dir, &model_ids).at(st);
        }
        let models: Vec<ModelResults> = model_ids
            .iter()
            .zip(&scores)
            .map(|(id, s)| analyze_model(id, s, &cfg.constructions, cfg.analysis.alpha))
            .collect::<Result<_, _>>()
            .at(st)?;
        let tmp = run.path("analysis.tmp");
        emit_tables(
            &ReportBundle {
                models: models.clone(),
                ..Default::default()
            },
            &tmp,
        )
        .at(st)?;
        for t in TABLES {
            std::fs::rename(tmp.join(t), run.path(t)).at(st)?;
        }
        std::fs::remove_dir(&tmp).at(st)?;
        Ok(models)
    })?;
    models[0].valid_perplexity = Some(base_ppl);
    models[1].valid_perplexity = Some(aug_ppl);
    if until == Stage::Analyze {
        return Ok(None);
    }

    let report_dir = run.path("report");
    let resumed = report_dir.join("report.md").exists();
    run.timed(Stage::Report, resumed, |_| {
        if resumed {
            return Ok(());
        }
        let st = Stage::Report;
        let encoded = base.encode(&vocab);
        let unigram = unigram_perplexity(&encoded.train, &encoded.valid, vocab.len()).at(st)?;
        let bundle = report_bundle(cfg, &base, &aug, &vocab, unigram, models);
        let mut charts = Vec::new();
        for &c in &cfg.constructions {
            let svg = render_effect_chart(
                c,
                (BASE_MODEL, &bundle.models[0].summaries),
                (AUG_MODEL, &bundle.models[1].summaries),
            )
            .at(st)?;
            write_atomic(&report_dir.join(format!("{c}.svg")), svg.as_bytes()).at(st)?;
            charts.push((c, format!("{c}.svg")));
        }
        let md = render_report(&bundle, &charts);
        write_atomic(&report_dir.join("report.md"), md.as_bytes()).at(st)?;
        Ok(())
    })?;
    if until == Stage::Report {
        return Ok(None);
    }

    run.timed(Stage::Manifest, false, |run| {
        let st = Stage::Manifest;
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.clone(),
            artifacts: hash_artifacts(run.dir).at(st)?,
        };
        let mut text = serde_json::to_string_pretty(&manifest).at(st)?;
        text.push('\n');
        write_atomic(&run.path(MANIFEST_FILE), text.as_bytes()).at(st)?;
        Ok(Some(manifest))
    })
}

fn report_bundle(
    cfg: &ExperimentConfig,
    base: &CorpusSplit,
    aug: &CorpusSplit,
    vocab: &Vocab,
    unigram: f64,
    models: Vec<ModelResults>,
) -> ReportBundle {
    let corpus = match cfg.corpus.source {
        CorpusSource::Synthetic => {
            let grammar = cfg
                .corpus
                .grammar
                .as_ref()
                .map_or("built-in grammar".to_string(), |p| p.display().to_string());
            let modes: Vec<String> = cfg.corpus.dependency.iter().map(|(k, v)| format!("{k}={v:?}")).collect();
            format!("synthetic, {grammar}, {} tokens requested {}", cfg.corpus.tokens, modes.join(" ")).trim_end().to_string()
        }
        CorpusSource::Files => format!("files in {}", cfg.corpus.dir.as_ref().map_or(String::new(), |d| d.display().to_string())),
    };
    let lm = serde_json::to_string(&cfg.lm_config().expect("resolved")).expect("config serializes");
    let aug_spec = &cfg.augmentation;
    ReportBundle {
        title: format!("Filler-gap evaluation: {}", cfg.name),
        metadata: vec![
            ("run".into(), cfg.name.clone()),
            ("seed".into(), cfg.seed.to_string()),
            ("corpus".into(), corpus),
            ("train tokens (base)".into(), base.train.iter().map(|s| s.len() + 1).sum::<usize>().to_string()),
            ("train tokens (aug)".into(), aug.train.iter().map(|s| s.len() + 1).sum::<usize>().to_string()),
            ("vocabulary".into(), vocab.len().to_string()),
            ("language model".into(), lm),
            (
                "augmentation".into(),
                format!("{} x {} (seed {})", aug_spec.n, aug_spec.construction, cfg.augmentation_seed()),
            ),
            ("alpha".into(), cfg.analysis.alpha.to_string()),
            ("unigram baseline perplexity".into(), format!("{unigram:.3}")),
            ("models".into(), models.iter().map(|m| m.model_id.as_str()).collect::<Vec<_>>().join(", ")),
        ],
        constructions: cfg.constructions.clone(),
        models,
    }
}

/// The full pipeline; returns the manifest written last.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<RunManifest, PipelineError> {
    Ok(run_stages(cfg, Stage::Manifest)?.expect("manifest stage returns a manifest"))
}
