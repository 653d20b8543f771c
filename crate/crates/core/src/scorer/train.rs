//! Training loop, learning curves and evaluation helpers.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Group};
use crate::embedder::EmbeddingVector;
use crate::exec::{self, tags};
use crate::scorer::{
    adamw_step_filtered, backward, forward_occupancy, forward_score, AdamWConfig, ForwardCache,
    FusionInputs, Mode, ModelParams, OptimizerState, SampleTarget, TrainSample, GROUPS_OUT,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Occupancy,
    Scoring,
}

/// Which generated score the scoring task regresses to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreTarget {
    Biased,
    Blind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub task: Task,
    pub epochs: usize,
    pub batch_size: usize,
    pub dropout_rate: f64,
    pub seed: u64,
    pub optimizer: AdamWConfig,
    pub fusion: FusionInputs,
    /// Scoring task only: keep the occupancy MLP fixed and train the fusion
    /// head alone.
    pub freeze_occupancy: bool,
    pub score_target: ScoreTarget,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            task: Task::Occupancy,
            epochs: 50,
            batch_size: 32,
            dropout_rate: 0.3,
            seed: 0,
            optimizer: AdamWConfig::default(),
            fusion: FusionInputs::H1H2G,
            freeze_occupancy: false,
            score_target: ScoreTarget::Biased,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate must lie in [0,1): {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub split: Split,
    pub metric: String,
    pub value: f64,
}

/// Per-epoch metrics in `epoch,split,metric,value` rows.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LearningCurve {
    pub points: Vec<CurvePoint>,
}

impl LearningCurve {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("epoch,split,metric,value\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{},{}\n", p.epoch, p.split, p.metric, p.value));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
        }
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = content.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header == "epoch,split,metric,value" => {}
            _ => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: 1,
                    msg: "unexpected learning-curve header".into(),
                })
            }
        }
        let mut points = Vec::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                msg,
            };
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 4 {
                return Err(err(format!("expected 4 columns, got {}", parts.len())));
            }
            let split = match parts[1] {
                "train" => Split::Train,
                "test" => Split::Test,
                other => return Err(err(format!("unknown split '{other}'"))),
            };
            points.push(CurvePoint {
                epoch: parts[0].parse().map_err(|e| err(format!("bad epoch: {e}")))?,
                split,
                metric: parts[2].to_string(),
                value: parts[3].parse().map_err(|e| err(format!("bad value: {e}")))?,
            });
        }
        Ok(LearningCurve { points })
    }

    /// Last recorded value of `metric` on `split`.
    pub fn last_value(&self, split: Split, metric: &str) -> Option<f64> {
        self.points
            .iter()
            .rev()
            .find(|p| p.split == split && p.metric == metric)
            .map(|p| p.value)
    }
}

pub fn one_hot(group: Group) -> [f64; GROUPS_OUT] {
    let mut t = [0.0; GROUPS_OUT];
    t[group.index()] = 1.0;
    t
}

fn check_alignment(
    corpus: &Corpus,
    embeddings: &[EmbeddingVector],
    params: &ModelParams,
) -> Result<()> {
    if corpus.is_empty() {
        return Err(Error::Config("corpus is empty".into()));
    }
    if corpus.len() != embeddings.len() {
        return Err(Error::Alignment(format!(
            "{} resumes but {} embeddings",
            corpus.len(),
            embeddings.len()
        )));
    }
    if embeddings[0].len() != params.input_dim {
        return Err(Error::Shape(format!(
            "embeddings have dimension {}, model expects {}",
            embeddings[0].len(),
            params.input_dim
        )));
    }
    Ok(())
}

/// Predicted group: argmax of the occupancy activations, ties resolved to
/// the lowest-index group.
pub fn predict_occupancy(features: &[f64], params: &ModelParams) -> Result<Group> {
    let (g, _) = forward_occupancy(features, params, Mode::Eval, 0.0, 0)?;
    let mut best = 0;
    for (k, v) in g.iter().enumerate() {
        if *v > g[best] {
            best = k;
        }
    }
    Ok(Group::ALL[best])
}

fn predict_groups(corpus: &Corpus, embeddings: &[EmbeddingVector], params: &ModelParams) -> Result<Vec<Group>> {
    check_alignment(corpus, embeddings, params)?;
    exec::try_map_ordered(embeddings, true, |f| predict_occupancy(f.values(), params))
}

/// Per-class recall on each occupational group present in the corpus;
/// groups with no test examples are absent from the map.
pub fn sector_accuracy(
    corpus: &Corpus,
    embeddings: &[EmbeddingVector],
    params: &ModelParams,
) -> Result<BTreeMap<Group, f64>> {
    let predictions = predict_groups(corpus, embeddings, params)?;
    let mut correct: BTreeMap<Group, (u64, u64)> = BTreeMap::new();
    for (resume, predicted) in corpus.resumes.iter().zip(&predictions) {
        let entry = correct.entry(resume.group).or_insert((0, 0));
        entry.1 += 1;
        if *predicted == resume.group {
            entry.0 += 1;
        }
    }
    Ok(correct
        .into_iter()
        .map(|(g, (hit, total))| (g, hit as f64 / total as f64))
        .collect())
}

pub fn overall_accuracy(
    corpus: &Corpus,
    embeddings: &[EmbeddingVector],
    params: &ModelParams,
) -> Result<f64> {
    let predictions = predict_groups(corpus, embeddings, params)?;
    let hits = corpus
        .resumes
        .iter()
        .zip(&predictions)
        .filter(|(r, p)| r.group == **p)
        .count();
    Ok(hits as f64 / corpus.len() as f64)
}

/// Eval-mode candidate scores aligned with the corpus order.
pub fn predict_scores(
    corpus: &Corpus,
    embeddings: &[EmbeddingVector],
    params: &ModelParams,
) -> Result<Vec<f64>> {
    check_alignment(corpus, embeddings, params)?;
    let indices: Vec<usize> = (0..corpus.len()).collect();
    exec::try_map_ordered(&indices, true, |&i| {
        let resume = &corpus.resumes[i];
        forward_score(
            embeddings[i].values(),
            resume.competencies.values(),
            params,
            Mode::Eval,
            0.0,
            0,
        )
        .map(|(y, _)| y)
    })
}

pub fn scoring_rmse(
    corpus: &Corpus,
    embeddings: &[EmbeddingVector],
    params: &ModelParams,
    target: ScoreTarget,
) -> Result<f64> {
    let scores = predict_scores(corpus, embeddings, params)?;
    let mut sum = 0.0;
    for (resume, predicted) in corpus.resumes.iter().zip(&scores) {
        let t = match target {
            ScoreTarget::Biased => resume.score_biased,
            ScoreTarget::Blind => resume.score_blind,
        };
        let d = predicted - t;
        sum += d * d;
    }
    Ok((sum / corpus.len() as f64).sqrt())
}

fn record_metrics(
    curve: &mut LearningCurve,
    epoch: usize,
    split: Split,
    config: &TrainConfig,
    corpus: &Corpus,
    embeddings: &[EmbeddingVector],
    params: &ModelParams,
) -> Result<()> {
    match config.task {
        Task::Occupancy => {
            let acc = overall_accuracy(corpus, embeddings, params)?;
            curve.points.push(CurvePoint {
                epoch,
                split,
                metric: "accuracy".into(),
                value: acc,
            });
            for (group, recall) in sector_accuracy(corpus, embeddings, params)? {
                curve.points.push(CurvePoint {
                    epoch,
                    split,
                    metric: format!("recall_{}", group.label().to_lowercase()),
                    value: recall,
                });
            }
        }
        Task::Scoring => {
            let rmse = scoring_rmse(corpus, embeddings, params, config.score_target)?;
            curve.points.push(CurvePoint {
                epoch,
                split,
                metric: "rmse".into(),
                value: rmse,
            });
        }
    }
    Ok(())
}

/// Train the heads with mini-batch AdamW. Each epoch deterministically
/// shuffles by `(seed, epoch)`; dropout masks derive from per-sample
/// counters. `(seed, data, config)` fully determine the result bit for bit.
pub fn train(
    train_corpus: &Corpus,
    train_embeddings: &[EmbeddingVector],
    eval: Option<(&Corpus, &[EmbeddingVector])>,
    config: &TrainConfig,
    params0: ModelParams,
) -> Result<(ModelParams, LearningCurve)> {
    config.validate()?;
    let mut params = params0;
    check_alignment(train_corpus, train_embeddings, &params)?;
    if let Some((eval_corpus, eval_embeddings)) = eval {
        check_alignment(eval_corpus, eval_embeddings, &params)?;
    }

    let n = train_corpus.len();
    let targets: Vec<SampleTarget> = train_corpus
        .resumes
        .iter()
        .map(|r| match config.task {
            Task::Occupancy => SampleTarget::Groups(one_hot(r.group)),
            Task::Scoring => SampleTarget::Score(match config.score_target {
                ScoreTarget::Biased => r.score_biased,
                ScoreTarget::Blind => r.score_blind,
            }),
        })
        .collect();

    let mut state = OptimizerState::new(&params, config.optimizer);
    let mut curve = LearningCurve::default();

    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng =
            ChaCha8Rng::seed_from_u64(exec::stream_seed(config.seed, tags::SHUFFLE, epoch as u64));
        order.shuffle(&mut rng);

        let epoch_base = (epoch - 1) * n;
        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            let batch_base = epoch_base + batch_idx * config.batch_size;
            // Forward passes are pure per sample; run them in input order.
            let positions: Vec<(usize, usize)> = batch
                .iter()
                .enumerate()
                .map(|(pos, &sample_idx)| (pos, sample_idx))
                .collect();
            let caches: Vec<ForwardCache> =
                exec::try_map_ordered(&positions, true, |&(pos, sample_idx)| {
                    let dropout_seed = exec::stream_seed(
                        config.seed,
                        tags::DROPOUT,
                        (batch_base + pos) as u64,
                    );
                    let features = train_embeddings[sample_idx].values();
                    let cache = match config.task {
                        Task::Occupancy => {
                            forward_occupancy(
                                features,
                                &params,
                                Mode::Train,
                                config.dropout_rate,
                                dropout_seed,
                            )?
                            .1
                        }
                        Task::Scoring => {
                            forward_score(
                                features,
                                train_corpus.resumes[sample_idx].competencies.values(),
                                &params,
                                Mode::Train,
                                config.dropout_rate,
                                dropout_seed,
                            )?
                            .1
                        }
                    };
                    cache.ok_or_else(|| {
                        Error::Contract("training forward returned no cache".into())
                    })
                })?;

            let samples: Vec<TrainSample> = batch
                .iter()
                .map(|&sample_idx| TrainSample {
                    features: train_embeddings[sample_idx].values(),
                    competencies: match config.task {
                        Task::Occupancy => None,
                        Task::Scoring => {
                            Some(&train_corpus.resumes[sample_idx].competencies.values()[..])
                        }
                    },
                    target: targets[sample_idx],
                })
                .collect();

            let grads = backward(&samples, &params, &caches, config.dropout_rate)?;
            let freeze = config.task == Task::Scoring && config.freeze_occupancy;
            adamw_step_filtered(&mut params, &grads, &mut state, freeze)?;
        }

        record_metrics(
            &mut curve,
            epoch,
            Split::Train,
            config,
            train_corpus,
            train_embeddings,
            &params,
        )?;
        if let Some((eval_corpus, eval_embeddings)) = eval {
            record_metrics(
                &mut curve,
                epoch,
                Split::Test,
                config,
                eval_corpus,
                eval_embeddings,
                &params,
            )?;
        }
    }

    Ok((params, curve))
}
