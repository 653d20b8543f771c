//! Single-config orchestration of the whole experiment: generate a corpus,
//! build the anonymization cells, embed, train both tasks, evaluate and emit
//! the report.
//!
//! The baseline (no anonymization) is always part of the grid; every claim
//! is a delta against it. Each stage persists its outputs under the run
//! directory and can be rerun in isolation from those intermediates; with
//! caching enabled an existing artifact is reused, and all artifacts are
//! byte-deterministic functions of the effective config.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::anonymizer::{
    anonymize_corpus, entity_statistics, AnonymizationStats, BuiltinTagger, Gazetteer, LabelSet,
    NerBackendConfig, NerClient, Tagger,
};
use crate::corpus::{
    generate_corpus, load_corpus, save_corpus, split_corpus, Corpus, GeneratorConfig, Group,
};
use crate::embedder::{
    embed_corpus, load_embedding_cache, save_embedding_cache, BioField, EmbedderConfig,
    EmbeddingCacheHeader, EmbeddingTable, EmbeddingVector,
};
use crate::fairness::{compute_gender_direction, debias_all, top_k_shortlist, ShortlistReport};
use crate::report::{
    config_fingerprint, emit_report, ExperimentReport, OccupancyKey, ReportFormat, ShortlistKey,
};
use crate::scorer::{
    init_params, load_snapshot, overall_accuracy, predict_scores, save_snapshot, sector_accuracy,
    train, AdamWConfig, FusionInputs, LearningCurve, ScoreTarget, SnapshotMeta, Task, TrainConfig,
};
use crate::{Error, Result};

/// Environment variable overriding the external NER endpoint.
pub const NER_ENDPOINT_ENV: &str = "FAIRSCREEN_NER_ENDPOINT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub corpus: CorpusSection,
    pub anonymizer: AnonymizerSection,
    pub embedder: EmbedderSection,
    pub train: TrainSection,
    pub fairness: FairnessSection,
    pub report: ReportSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 7,
            out_dir: PathBuf::from("out"),
            corpus: CorpusSection::default(),
            anonymizer: AnonymizerSection::default(),
            embedder: EmbedderSection::default(),
            train: TrainSection::default(),
            fairness: FairnessSection::default(),
            report: ReportSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSection {
    pub n: usize,
    pub bias_strength: f64,
    pub train_fraction: f64,
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection {
            n: 24_000,
            bias_strength: 0.15,
            train_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Builtin,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnonymizerSection {
    pub backend: BackendKind,
    /// One grid cell per entry, e.g. `["loc", "per"]`.
    pub entity_sets: Vec<String>,
    pub endpoint: Option<String>,
    pub timeout_secs: f64,
    pub retries: u32,
    pub max_concurrent: usize,
    pub gazetteer_per: Option<PathBuf>,
    pub gazetteer_loc: Option<PathBuf>,
}

impl Default for AnonymizerSection {
    fn default() -> Self {
        AnonymizerSection {
            backend: BackendKind::Builtin,
            entity_sets: vec!["loc".into(), "per".into()],
            endpoint: None,
            timeout_secs: 30.0,
            retries: 2,
            max_concurrent: 8,
            gazetteer_per: None,
            gazetteer_loc: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbedderSection {
    pub dim: usize,
    pub vocab_buckets: u32,
    pub max_len: usize,
    pub lowercase: bool,
}

impl Default for EmbedderSection {
    fn default() -> Self {
        EmbedderSection {
            dim: 768,
            vocab_buckets: 32_768,
            max_len: 256,
            lowercase: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub fusion: FusionInputs,
    pub freeze_occupancy: bool,
    pub score_target: ScoreTarget,
}

impl Default for TrainSection {
    fn default() -> Self {
        let adamw = AdamWConfig::default();
        TrainSection {
            epochs: 50,
            batch_size: 32,
            dropout: 0.3,
            learning_rate: adamw.learning_rate,
            weight_decay: adamw.weight_decay,
            beta1: adamw.beta1,
            beta2: adamw.beta2,
            epsilon: adamw.epsilon,
            fusion: FusionInputs::H1H2G,
            freeze_occupancy: false,
            score_target: ScoreTarget::Biased,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FairnessSection {
    pub shortlist_k: usize,
    pub projection_iterations: usize,
}

impl Default for FairnessSection {
    fn default() -> Self {
        FairnessSection {
            shortlist_k: 100,
            projection_iterations: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportSection {
    pub formats: Vec<String>,
}

impl Default for ReportSection {
    fn default() -> Self {
        ReportSection {
            formats: vec!["csv".into(), "json".into()],
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(content: &str) -> Result<Self> {
        toml::from_str(content).map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&content)
    }

    pub fn validate(&self) -> Result<()> {
        self.generator_config().validate()?;
        if !(self.corpus.train_fraction > 0.0 && self.corpus.train_fraction < 1.0) {
            return Err(Error::Config("corpus.train_fraction must lie in (0,1)".into()));
        }
        self.embedder_config().validate()?;
        self.train_config(Task::Occupancy).validate()?;
        if self.fairness.shortlist_k == 0 {
            return Err(Error::Config("fairness.shortlist_k must be at least 1".into()));
        }
        if self.fairness.projection_iterations == 0 {
            return Err(Error::Config(
                "fairness.projection_iterations must be at least 1".into(),
            ));
        }
        if self.anonymizer.entity_sets.is_empty() {
            return Err(Error::Config("anonymizer.entity_sets must not be empty".into()));
        }
        for set in &self.anonymizer.entity_sets {
            let parsed = LabelSet::parse(set)?;
            if parsed.is_empty() {
                return Err(Error::Config(format!("empty entity set '{set}'")));
            }
        }
        self.report_formats()?;
        if self.anonymizer.backend == BackendKind::External
            && self.anonymizer.endpoint.is_none()
            && std::env::var(NER_ENDPOINT_ENV).is_err()
        {
            return Err(Error::Config(format!(
                "external backend needs anonymizer.endpoint or {NER_ENDPOINT_ENV}"
            )));
        }
        Ok(())
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        GeneratorConfig::new(self.corpus.n, self.seed, self.corpus.bias_strength)
    }

    pub fn embedder_config(&self) -> EmbedderConfig {
        EmbedderConfig {
            dim: self.embedder.dim,
            vocab_buckets: self.embedder.vocab_buckets,
            seed: self.seed,
            max_len: self.embedder.max_len,
            lowercase: self.embedder.lowercase,
        }
    }

    pub fn train_config(&self, task: Task) -> TrainConfig {
        TrainConfig {
            task,
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            dropout_rate: self.train.dropout,
            seed: self.seed,
            optimizer: AdamWConfig {
                beta1: self.train.beta1,
                beta2: self.train.beta2,
                epsilon: self.train.epsilon,
                learning_rate: self.train.learning_rate,
                weight_decay: self.train.weight_decay,
            },
            fusion: self.train.fusion,
            freeze_occupancy: self.train.freeze_occupancy,
            score_target: self.train.score_target,
        }
    }

    fn report_formats(&self) -> Result<Vec<ReportFormat>> {
        self.report.formats.iter().map(|f| ReportFormat::parse(f)).collect()
    }

    fn embedder_name(&self) -> String {
        format!("hashbag{}", self.embedder.dim)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Generate,
    Anonymize,
    Embed,
    Train,
    Evaluate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Generate,
        Stage::Anonymize,
        Stage::Embed,
        Stage::Train,
        Stage::Evaluate,
        Stage::Report,
    ];

    fn name(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Anonymize => "anonymize",
            Stage::Embed => "embed",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageSet(BTreeSet<Stage>);

impl StageSet {
    pub fn all() -> Self {
        StageSet(Stage::ALL.into_iter().collect())
    }

    pub fn parse(spec: &str) -> Result<Self> {
        if spec.trim().eq_ignore_ascii_case("all") {
            return Ok(StageSet::all());
        }
        let mut set = BTreeSet::new();
        for item in spec.split(',') {
            let stage = match item.trim().to_ascii_lowercase().as_str() {
                "" => continue,
                "generate" => Stage::Generate,
                "anonymize" => Stage::Anonymize,
                "embed" => Stage::Embed,
                "train" => Stage::Train,
                "evaluate" => Stage::Evaluate,
                "report" => Stage::Report,
                other => return Err(Error::Config(format!("unknown stage '{other}'"))),
            };
            set.insert(stage);
        }
        if set.is_empty() {
            return Err(Error::Config("no stages selected".into()));
        }
        Ok(StageSet(set))
    }

    pub fn contains(&self, stage: Stage) -> bool {
        self.0.contains(&stage)
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub stages: StageSet,
    pub no_cache: bool,
}

impl Default for Overrides {
    fn default() -> Self {
        Overrides {
            seed: None,
            out_dir: None,
            stages: StageSet::all(),
            no_cache: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub report_dir: PathBuf,
    pub fingerprint: String,
    pub cells: usize,
}

/// One anonymization/fairness configuration of the experiment grid.
#[derive(Debug, Clone)]
struct Cell {
    label: String,
    entity_tag: String,
    labels: LabelSet,
    text: BioField,
    debias: bool,
    occupancy: bool,
    scoring: bool,
}

impl Cell {
    fn dir_name(&self) -> String {
        if self.entity_tag == "-" {
            self.label.clone()
        } else {
            format!("{}_{}", self.label, self.entity_tag)
        }
    }
}

fn build_cells(config: &PipelineConfig) -> Result<Vec<Cell>> {
    let backend_label = match config.anonymizer.backend {
        BackendKind::Builtin => "builtin",
        BackendKind::External => "external",
    };
    let mut cells = vec![
        // The non-anonymized baseline is always present.
        Cell {
            label: "none".into(),
            entity_tag: "-".into(),
            labels: LabelSet::NONE,
            text: BioField::Raw,
            debias: false,
            occupancy: true,
            scoring: true,
        },
        // Fairness flag combinations on unmasked text.
        Cell {
            label: "none-proj".into(),
            entity_tag: "-".into(),
            labels: LabelSet::NONE,
            text: BioField::Raw,
            debias: true,
            occupancy: false,
            scoring: true,
        },
        Cell {
            label: "none-neutral".into(),
            entity_tag: "-".into(),
            labels: LabelSet::NONE,
            text: BioField::Neutral,
            debias: false,
            occupancy: false,
            scoring: true,
        },
        Cell {
            label: "none-biasaware".into(),
            entity_tag: "-".into(),
            labels: LabelSet::NONE,
            text: BioField::Neutral,
            debias: true,
            occupancy: true,
            scoring: true,
        },
    ];
    for set in &config.anonymizer.entity_sets {
        let labels = LabelSet::parse(set)?;
        cells.push(Cell {
            label: backend_label.to_string(),
            entity_tag: labels.tag().to_string(),
            labels,
            text: BioField::Raw,
            debias: false,
            occupancy: true,
            scoring: false,
        });
        cells.push(Cell {
            label: format!("{backend_label}-biasaware"),
            entity_tag: labels.tag().to_string(),
            labels,
            text: BioField::Neutral,
            debias: true,
            occupancy: false,
            scoring: true,
        });
    }
    Ok(cells)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OccupancyEval {
    overall: f64,
    per_sector: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CellEvaluation {
    occupancy: Option<OccupancyEval>,
    shortlist: Option<ShortlistReport>,
}

struct PipelineContext {
    config: PipelineConfig,
    fingerprint: String,
    cells: Vec<Cell>,
    stages: StageSet,
    no_cache: bool,
}

pub fn run_pipeline(config: &PipelineConfig, overrides: &Overrides) -> Result<RunSummary> {
    let mut effective = config.clone();
    if let Some(seed) = overrides.seed {
        effective.seed = seed;
    }
    if let Some(out_dir) = &overrides.out_dir {
        effective.out_dir = out_dir.clone();
    }
    effective.validate()?;

    // The fingerprint covers everything that can change a number; the output
    // location is not part of it.
    let mut canonical_config = effective.clone();
    canonical_config.out_dir = PathBuf::new();
    let canonical = serde_json::to_vec(&canonical_config)
        .map_err(|e| Error::Config(format!("config serialization: {e}")))?;
    let fingerprint = config_fingerprint(&canonical);
    let cells = build_cells(&effective)?;

    let ctx = PipelineContext {
        config: effective,
        fingerprint,
        cells,
        stages: overrides.stages.clone(),
        no_cache: overrides.no_cache,
    };
    ctx.run()
}

impl PipelineContext {
    fn out_dir(&self) -> &Path {
        &self.config.out_dir
    }

    fn corpus_path(&self) -> PathBuf {
        self.out_dir().join("corpus.jsonl")
    }

    fn cell_dir(&self, cell: &Cell) -> PathBuf {
        self.out_dir().join("cells").join(cell.dir_name())
    }

    fn report_dir(&self) -> PathBuf {
        self.out_dir().join("report")
    }

    fn fresh(&self, path: &Path) -> bool {
        self.no_cache || !path.exists()
    }

    fn run(&self) -> Result<RunSummary> {
        std::fs::create_dir_all(self.out_dir())
            .map_err(|e| Error::io(self.out_dir(), e))
            .map_err(Error::in_stage("generate"))?;

        for stage in Stage::ALL {
            if !self.stages.contains(stage) {
                continue;
            }
            let result = match stage {
                Stage::Generate => self.stage_generate(),
                Stage::Anonymize => self.stage_anonymize(),
                Stage::Embed => self.stage_embed(),
                Stage::Train => self.stage_train(),
                Stage::Evaluate => self.stage_evaluate(),
                Stage::Report => self.stage_report(),
            };
            result.map_err(Error::in_stage(stage.name()))?;
        }

        Ok(RunSummary {
            out_dir: self.out_dir().to_path_buf(),
            report_dir: self.report_dir(),
            fingerprint: self.fingerprint.clone(),
            cells: self.cells.len(),
        })
    }

    fn load_base_corpus(&self) -> Result<Corpus> {
        let path = self.corpus_path();
        if !path.exists() {
            return Err(Error::Config(format!(
                "{} missing; run the generate stage first",
                path.display()
            )));
        }
        load_corpus(&path)
    }

    fn stage_generate(&self) -> Result<()> {
        let path = self.corpus_path();
        if !self.fresh(&path) {
            return Ok(());
        }
        let corpus = generate_corpus(&self.config.generator_config())?;
        save_corpus(&corpus, &path)
    }

    fn build_tagger(&self) -> Result<Box<dyn Tagger>> {
        match self.config.anonymizer.backend {
            BackendKind::Builtin => {
                let gazetteer = match (
                    &self.config.anonymizer.gazetteer_per,
                    &self.config.anonymizer.gazetteer_loc,
                ) {
                    (Some(per), Some(loc)) => Gazetteer::from_files(per, loc)?,
                    (None, None) => Gazetteer::builtin_default(),
                    _ => {
                        return Err(Error::Config(
                            "gazetteer_per and gazetteer_loc must be set together".into(),
                        ))
                    }
                };
                Ok(Box::new(BuiltinTagger::new(gazetteer)))
            }
            BackendKind::External => {
                let endpoint = std::env::var(NER_ENDPOINT_ENV)
                    .ok()
                    .or_else(|| self.config.anonymizer.endpoint.clone())
                    .ok_or_else(|| Error::Config("external backend endpoint missing".into()))?;
                let client = NerClient::new(&NerBackendConfig {
                    endpoint,
                    timeout_secs: self.config.anonymizer.timeout_secs,
                    retries: self.config.anonymizer.retries,
                    backend_name: "external".into(),
                    max_concurrent: self.config.anonymizer.max_concurrent,
                })?;
                Ok(Box::new(client))
            }
        }
    }

    /// The text every cell trains on lives in `bio_raw` of its cell corpus:
    /// neutral cells swap the neutral biography in before masking.
    fn cell_source(&self, base: &Corpus, cell: &Cell) -> Corpus {
        match cell.text {
            BioField::Raw => base.clone(),
            BioField::Neutral => Corpus {
                resumes: base
                    .resumes
                    .iter()
                    .map(|r| crate::corpus::Resume {
                        bio_raw: r.bio_neutral.clone(),
                        ..r.clone()
                    })
                    .collect(),
            },
        }
    }

    fn stage_anonymize(&self) -> Result<()> {
        let base = self.load_base_corpus()?;
        let mut tagger: Option<Box<dyn Tagger>> = None;
        for cell in &self.cells {
            let dir = self.cell_dir(cell);
            let corpus_path = dir.join("corpus.jsonl");
            let stats_path = dir.join("stats.json");
            if !self.fresh(&corpus_path) && (cell.labels.is_empty() || !self.fresh(&stats_path)) {
                continue;
            }
            let source = self.cell_source(&base, cell);
            if cell.labels.is_empty() {
                save_corpus(&source, &corpus_path)?;
                continue;
            }
            if tagger.is_none() {
                tagger = Some(self.build_tagger()?);
            }
            let (masked, stats) =
                anonymize_corpus(&source, tagger.as_deref().unwrap(), cell.labels)?;
            save_corpus(&masked, &corpus_path)?;
            let json = serde_json::to_string_pretty(&stats).map_err(|e| Error::Format {
                path: stats_path.clone(),
                msg: e.to_string(),
            })?;
            std::fs::write(&stats_path, json + "\n").map_err(|e| Error::io(&stats_path, e))?;
        }
        Ok(())
    }

    fn stage_embed(&self) -> Result<()> {
        let config = self.config.embedder_config();
        let mut table: Option<EmbeddingTable> = None;
        for cell in &self.cells {
            let dir = self.cell_dir(cell);
            let cache_path = dir.join("embeddings.bin");
            if !self.fresh(&cache_path) {
                continue;
            }
            let corpus = load_corpus(&dir.join("corpus.jsonl"))?;
            if table.is_none() {
                table = Some(EmbeddingTable::build(&config)?);
            }
            let vectors = embed_corpus(&corpus, BioField::Raw, table.as_ref().unwrap(), &config)?;
            let ids: Vec<u64> = corpus.resumes.iter().map(|r| r.id).collect();
            save_embedding_cache(
                &cache_path,
                EmbeddingCacheHeader {
                    dim: config.dim as u32,
                    vocab_buckets: config.vocab_buckets,
                    seed: config.seed,
                },
                &ids,
                &vectors,
            )?;
        }
        Ok(())
    }

    fn load_cell_data(&self, cell: &Cell) -> Result<(Corpus, Vec<EmbeddingVector>)> {
        let dir = self.cell_dir(cell);
        let corpus = load_corpus(&dir.join("corpus.jsonl"))?;
        let (header, ids, vectors) = load_embedding_cache(&dir.join("embeddings.bin"))?;
        if header.dim as usize != self.config.embedder.dim {
            return Err(Error::Shape(format!(
                "cell {}: cached dimension {} but config says {}",
                cell.dir_name(),
                header.dim,
                self.config.embedder.dim
            )));
        }
        let expected: Vec<u64> = corpus.resumes.iter().map(|r| r.id).collect();
        if ids != expected {
            return Err(Error::Alignment(format!(
                "cell {}: embedding cache ids do not match the corpus",
                cell.dir_name()
            )));
        }
        Ok((corpus, vectors))
    }

    /// Split a cell corpus and its embeddings, then apply the cell's
    /// debiasing projection (direction fitted on the training split only).
    fn prepare_splits(
        &self,
        cell: &Cell,
        corpus: &Corpus,
        embeddings: &[EmbeddingVector],
    ) -> Result<(Corpus, Vec<EmbeddingVector>, Corpus, Vec<EmbeddingVector>)> {
        let (train_part, test_part) =
            split_corpus(corpus, self.config.corpus.train_fraction, self.config.seed)?;
        let select = |part: &Corpus| -> Vec<EmbeddingVector> {
            part.resumes
                .iter()
                .map(|r| embeddings[r.id as usize].clone())
                .collect()
        };
        let mut train_emb = select(&train_part);
        let mut test_emb = select(&test_part);
        if cell.debias {
            let genders = train_part.genders();
            for _ in 0..self.config.fairness.projection_iterations {
                let direction = compute_gender_direction(&train_emb, &genders)?;
                train_emb = debias_all(&train_emb, &direction)?;
                test_emb = debias_all(&test_emb, &direction)?;
            }
        }
        Ok((train_part, train_emb, test_part, test_emb))
    }

    fn stage_train(&self) -> Result<()> {
        for cell in &self.cells {
            let dir = self.cell_dir(cell);
            let tasks: Vec<(Task, &str)> = [
                (Task::Occupancy, "occupancy", cell.occupancy),
                (Task::Scoring, "scoring", cell.scoring),
            ]
            .into_iter()
            .filter(|(_, _, enabled)| *enabled)
            .map(|(t, n, _)| (t, n))
            .collect();

            let all_cached = tasks.iter().all(|(_, name)| {
                !self.fresh(&dir.join(format!("{name}.model")))
                    && !self.fresh(&dir.join(format!("{name}_curve.csv")))
            });
            if all_cached {
                continue;
            }

            let (corpus, embeddings) = self.load_cell_data(cell)?;
            let (train_part, train_emb, test_part, test_emb) =
                self.prepare_splits(cell, &corpus, &embeddings)?;

            for (task, name) in tasks {
                let model_path = dir.join(format!("{name}.model"));
                let curve_path = dir.join(format!("{name}_curve.csv"));
                if !self.fresh(&model_path) && !self.fresh(&curve_path) {
                    continue;
                }
                let config = self.config.train_config(task);
                let params0 = init_params(
                    self.config.embedder.dim,
                    config.fusion,
                    // One init stream per task so both heads start identically
                    // across cells, isolating the anonymization effect.
                    crate::exec::stream_seed(self.config.seed, 0x10, task as u64),
                )?;
                let (params, curve) = train(
                    &train_part,
                    &train_emb,
                    Some((&test_part, &test_emb)),
                    &config,
                    params0,
                )?;
                save_snapshot(
                    &params,
                    SnapshotMeta {
                        seed: self.config.seed,
                        weight_decay: config.optimizer.weight_decay,
                    },
                    &model_path,
                )?;
                curve.write_csv(&curve_path)?;
            }
        }
        Ok(())
    }

    fn stage_evaluate(&self) -> Result<()> {
        for cell in &self.cells {
            let dir = self.cell_dir(cell);
            let eval_path = dir.join("evaluation.json");
            if !self.fresh(&eval_path) {
                continue;
            }
            let (corpus, embeddings) = self.load_cell_data(cell)?;
            let (_, _, test_part, test_emb) = self.prepare_splits(cell, &corpus, &embeddings)?;

            let occupancy = if cell.occupancy {
                let (params, _) = load_snapshot(&dir.join("occupancy.model"))?;
                let per_sector = sector_accuracy(&test_part, &test_emb, &params)?
                    .into_iter()
                    .map(|(g, v)| (g.label().to_string(), v))
                    .collect();
                Some(OccupancyEval {
                    overall: overall_accuracy(&test_part, &test_emb, &params)?,
                    per_sector,
                })
            } else {
                None
            };

            let shortlist = if cell.scoring {
                let (params, _) = load_snapshot(&dir.join("scoring.model"))?;
                let scores = predict_scores(&test_part, &test_emb, &params)?;
                Some(top_k_shortlist(
                    &test_part,
                    &scores,
                    self.config.fairness.shortlist_k,
                )?)
            } else {
                None
            };

            let evaluation = CellEvaluation {
                occupancy,
                shortlist,
            };
            let json = serde_json::to_string_pretty(&evaluation).map_err(|e| Error::Format {
                path: eval_path.clone(),
                msg: e.to_string(),
            })?;
            std::fs::write(&eval_path, json + "\n").map_err(|e| Error::io(&eval_path, e))?;
        }
        Ok(())
    }

    fn stage_report(&self) -> Result<()> {
        let mut report = ExperimentReport::new(
            &format!("run-{}", self.fingerprint),
            &self.fingerprint,
            &self.config.embedder_name(),
        );
        let mut expected = Vec::new();

        for cell in &self.cells {
            let dir = self.cell_dir(cell);
            let eval_path = dir.join("evaluation.json");
            let content =
                std::fs::read_to_string(&eval_path).map_err(|e| Error::io(&eval_path, e))?;
            let evaluation: CellEvaluation =
                serde_json::from_str(&content).map_err(|e| Error::Format {
                    path: eval_path.clone(),
                    msg: e.to_string(),
                })?;

            if cell.occupancy {
                for sector in Group::ALL {
                    expected.push(OccupancyKey::new(&cell.label, &cell.entity_tag, sector));
                }
                if let Some(occupancy) = &evaluation.occupancy {
                    for sector in Group::ALL {
                        if let Some(v) = occupancy.per_sector.get(sector.label()) {
                            report.set_accuracy(
                                OccupancyKey::new(&cell.label, &cell.entity_tag, sector),
                                *v,
                            );
                        }
                    }
                }
            }
            if let Some(shortlist) = evaluation.shortlist {
                report
                    .shortlists
                    .insert(ShortlistKey::new(&cell.label, &cell.entity_tag), shortlist);
            }

            let stats_path = dir.join("stats.json");
            if stats_path.exists() {
                let content =
                    std::fs::read_to_string(&stats_path).map_err(|e| Error::io(&stats_path, e))?;
                let stats: AnonymizationStats =
                    serde_json::from_str(&content).map_err(|e| Error::Format {
                        path: stats_path.clone(),
                        msg: e.to_string(),
                    })?;
                report.anonymization.insert(cell.dir_name(), stats);
            }

            for task_name in ["occupancy", "scoring"] {
                let curve_path = dir.join(format!("{task_name}_curve.csv"));
                if curve_path.exists() {
                    let curve = LearningCurve::read_csv(&curve_path)?;
                    report
                        .curves
                        .insert(format!("{}_{task_name}", cell.dir_name()), curve);
                }
            }
        }

        emit_report(
            &report,
            &expected,
            &self.report_dir(),
            &self.config.report_formats()?,
        )?;
        Ok(())
    }
}

/// Recompute corpus-level entity statistics between two persisted corpora;
/// backs the command-line statistics surface.
pub fn statistics_between_files(before: &Path, after: &Path) -> Result<AnonymizationStats> {
    let before = load_corpus(before)?;
    let after = load_corpus(after)?;
    entity_statistics(&before, &after)
}
