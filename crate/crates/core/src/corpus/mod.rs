//! Synthetic multimodal resume corpus: generation, persistence, splitting.
//!
//! Each resume couples a 7-attribute competency vector with a raw and a
//! gender-neutral biography, a gender, an occupational group, and two target
//! scores: a blind score computed from competencies alone and a biased score
//! with a configurable penalty subtracted for female candidates. Generation
//! is a pure function of the config: every resume derives its own RNG stream
//! from `(seed, id)`, so output is identical regardless of scheduling.

mod io;
pub mod templates;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::anonymizer::EntitySpan;
use crate::exec::{self, tags};
use crate::{Error, Result};

pub use io::{load_corpus, save_corpus};

/// Number of structured competency attributes per resume.
pub const COMPETENCY_COUNT: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gender {
    #[serde(rename = "M")]
    Male,
    #[serde(rename = "F")]
    Female,
}

/// Occupational group: O1 Health, O2 Education and Knowledge,
/// O3 Communication and Media, O4 Legal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    O1,
    O2,
    O3,
    O4,
}

impl Group {
    pub const ALL: [Group; 4] = [Group::O1, Group::O2, Group::O3, Group::O4];

    pub fn index(self) -> usize {
        match self {
            Group::O1 => 0,
            Group::O2 => 1,
            Group::O3 => 2,
            Group::O4 => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Group::O1 => "O1",
            Group::O2 => "O2",
            Group::O3 => "O3",
            Group::O4 => "O4",
        }
    }
}

/// Seven competency attributes in `[0, 1]`: education, availability,
/// experience, recommendations and three language proficiencies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompetencyVector([f64; COMPETENCY_COUNT]);

impl CompetencyVector {
    pub fn new(values: [f64; COMPETENCY_COUNT]) -> Result<Self> {
        for (i, v) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(v) {
                return Err(Error::Config(format!(
                    "competency {i} out of [0,1]: {v}"
                )));
            }
        }
        Ok(CompetencyVector(values))
    }

    pub fn values(&self) -> &[f64; COMPETENCY_COUNT] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resume {
    pub id: u64,
    pub competencies: CompetencyVector,
    pub bio_raw: String,
    pub bio_neutral: String,
    pub gender: Gender,
    pub group: Group,
    pub score_blind: f64,
    pub score_biased: f64,
    pub gold_entities: Vec<EntitySpan>,
}

/// An ordered collection of resumes. Generated corpora have ids `0..n-1`;
/// corpora produced by [`split_corpus`] keep their original ids.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub resumes: Vec<Resume>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.resumes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.resumes.is_empty()
    }

    pub fn genders(&self) -> Vec<Gender> {
        self.resumes.iter().map(|r| r.gender).collect()
    }
}

/// Per-group competency weights used for the blind score. Each row is a
/// distinct convex combination: all weights positive, summing to one.
pub const DEFAULT_SECTOR_WEIGHTS: [[f64; COMPETENCY_COUNT]; 4] = [
    [0.30, 0.05, 0.25, 0.10, 0.10, 0.10, 0.10],
    [0.35, 0.10, 0.15, 0.15, 0.10, 0.05, 0.10],
    [0.15, 0.10, 0.20, 0.10, 0.15, 0.15, 0.15],
    [0.25, 0.15, 0.30, 0.10, 0.10, 0.05, 0.05],
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n: usize,
    pub seed: u64,
    /// Score penalty subtracted for female candidates, in `[0, 1)`.
    pub bias_strength: f64,
    pub sector_weights: [[f64; COMPETENCY_COUNT]; 4],
    /// How many entries of each built-in gazetteer the generator draws from.
    pub male_name_count: usize,
    pub female_name_count: usize,
    pub city_count: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n: 24_000,
            seed: 0,
            bias_strength: 0.15,
            sector_weights: DEFAULT_SECTOR_WEIGHTS,
            male_name_count: templates::male_names().len(),
            female_name_count: templates::female_names().len(),
            city_count: templates::city_names().len(),
        }
    }
}

impl GeneratorConfig {
    pub fn new(n: usize, seed: u64, bias_strength: f64) -> Self {
        GeneratorConfig {
            n,
            seed,
            bias_strength,
            ..GeneratorConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("corpus size n must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.bias_strength) {
            return Err(Error::Config(format!(
                "bias_strength must lie in [0,1): {}",
                self.bias_strength
            )));
        }
        for (gi, row) in self.sector_weights.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|w| *w <= 0.0) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "sector weight row {gi} must be a full-support convex combination"
                )));
            }
        }
        if self.male_name_count == 0 || self.male_name_count > templates::male_names().len() {
            return Err(Error::Config("male_name_count out of range".into()));
        }
        if self.female_name_count == 0 || self.female_name_count > templates::female_names().len()
        {
            return Err(Error::Config("female_name_count out of range".into()));
        }
        if self.city_count == 0 || self.city_count > templates::city_names().len() {
            return Err(Error::Config("city_count out of range".into()));
        }
        Ok(())
    }
}

fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

fn build_resume(config: &GeneratorConfig, id: u64) -> Resume {
    let mut rng = ChaCha8Rng::seed_from_u64(exec::stream_seed(config.seed, tags::RESUME, id));

    // Draw order is fixed: gender, group, competencies, name, city,
    // template, years. Reordering would change every generated byte.
    let gender = if rng.gen::<bool>() {
        Gender::Male
    } else {
        Gender::Female
    };
    let group = Group::ALL[rng.gen_range(0..Group::ALL.len())];
    let mut values = [0.0; COMPETENCY_COUNT];
    for v in values.iter_mut() {
        *v = rng.gen::<f64>();
    }
    let name = match gender {
        Gender::Male => templates::male_names()[rng.gen_range(0..config.male_name_count)],
        Gender::Female => templates::female_names()[rng.gen_range(0..config.female_name_count)],
    };
    let city = templates::city_names()[rng.gen_range(0..config.city_count)];
    let template = &templates::templates_for_group(group.index())[rng.gen_range(0..4)];
    let years = rng.gen_range(3..=29u32);

    let bio = templates::render_bio(template, name, city, gender, years);

    let weights = &config.sector_weights[group.index()];
    let score_blind = clamp01(
        weights
            .iter()
            .zip(values.iter())
            .map(|(w, v)| w * v)
            .sum::<f64>(),
    );
    let penalty = if gender == Gender::Female {
        config.bias_strength
    } else {
        0.0
    };
    let score_biased = clamp01(score_blind - penalty);

    let mut gold_entities = vec![bio.person_span, bio.location_span];
    gold_entities.sort_by_key(|s| s.start);

    Resume {
        id,
        competencies: CompetencyVector(values),
        bio_raw: bio.raw,
        bio_neutral: bio.neutral,
        gender,
        group,
        score_blind,
        score_biased,
        gold_entities,
    }
}

fn generate_corpus_impl(config: &GeneratorConfig, parallel: bool) -> Result<Corpus> {
    config.validate()?;
    let resumes = exec::map_indexed(config.n, parallel, |id| build_resume(config, id as u64));
    Ok(Corpus { resumes })
}

/// Generate a corpus of `config.n` resumes. Identical configs produce
/// identical corpora byte for byte.
pub fn generate_corpus(config: &GeneratorConfig) -> Result<Corpus> {
    generate_corpus_impl(config, true)
}

/// Sequential variant of [`generate_corpus`]; same output, used by the
/// benchmark suite to compare against the parallel path.
#[doc(hidden)]
pub fn generate_corpus_seq(config: &GeneratorConfig) -> Result<Corpus> {
    generate_corpus_impl(config, false)
}

/// Deterministically shuffle by `seed` and split at
/// `floor(n * train_fraction)`. Both halves are returned sorted by id.
pub fn split_corpus(corpus: &Corpus, train_fraction: f64, seed: u64) -> Result<(Corpus, Corpus)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train_fraction must lie strictly inside (0,1): {train_fraction}"
        )));
    }
    let n = corpus.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(exec::stream_seed(seed, tags::SPLIT, 0));
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng);

    let cut = ((n as f64) * train_fraction).floor() as usize;
    let take = |indices: &[usize]| -> Corpus {
        let mut resumes: Vec<Resume> = indices.iter().map(|&i| corpus.resumes[i].clone()).collect();
        resumes.sort_by_key(|r| r.id);
        Corpus { resumes }
    };
    Ok((take(&order[..cut]), take(&order[cut..])))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(n: usize, seed: u64, beta: f64) -> GeneratorConfig {
        GeneratorConfig::new(n, seed, beta)
    }

    #[test]
    fn generates_requested_count_with_dense_ids() {
        let corpus = generate_corpus(&small_config(500, 3, 0.15)).unwrap();
        assert_eq!(corpus.len(), 500);
        for (i, r) in corpus.resumes.iter().enumerate() {
            assert_eq!(r.id, i as u64);
        }
    }

    #[test]
    fn zero_bias_makes_scores_equal() {
        let corpus = generate_corpus(&small_config(300, 9, 0.0)).unwrap();
        for r in &corpus.resumes {
            assert_eq!(r.score_biased, r.score_blind);
        }
    }

    #[test]
    fn scores_ordered_and_in_range() {
        let corpus = generate_corpus(&small_config(1000, 11, 0.2)).unwrap();
        for r in &corpus.resumes {
            assert!(r.score_biased >= 0.0 && r.score_blind <= 1.0);
            assert!(r.score_biased <= r.score_blind);
            if r.gender == Gender::Female && r.score_blind > 0.2 {
                assert!(r.score_biased < r.score_blind);
            }
        }
    }

    #[test]
    fn generation_is_deterministic_and_order_independent() {
        let cfg = small_config(400, 21, 0.15);
        let a = generate_corpus(&cfg).unwrap();
        let b = generate_corpus(&cfg).unwrap();
        let c = generate_corpus_seq(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(generate_corpus(&small_config(0, 1, 0.1)).is_err());
        assert!(generate_corpus(&small_config(10, 1, 1.0)).is_err());
        assert!(generate_corpus(&small_config(10, 1, -0.1)).is_err());
    }

    #[test]
    fn gender_is_roughly_balanced() {
        for seed in [5u64, 6, 7] {
            let corpus = generate_corpus(&small_config(10_000, seed, 0.15)).unwrap();
            let males = corpus
                .resumes
                .iter()
                .filter(|r| r.gender == Gender::Male)
                .count();
            let frac = males as f64 / corpus.len() as f64;
            assert!(
                (frac - 0.5).abs() < 0.03,
                "seed {seed}: male fraction {frac}"
            );
        }
    }

    #[test]
    fn gold_spans_slice_to_injected_tokens() {
        let corpus = generate_corpus(&small_config(200, 13, 0.15)).unwrap();
        for r in &corpus.resumes {
            assert_eq!(r.gold_entities.len(), 2);
            let chars: Vec<char> = r.bio_raw.chars().collect();
            for span in &r.gold_entities {
                let token: String = chars[span.start..span.end].iter().collect();
                let list: Vec<&str> = match span.label {
                    crate::anonymizer::EntityLabel::Per => templates::male_names()
                        .iter()
                        .chain(templates::female_names())
                        .copied()
                        .collect(),
                    crate::anonymizer::EntityLabel::Loc => {
                        templates::city_names().to_vec()
                    }
                };
                assert!(list.contains(&token.as_str()), "unexpected token {token}");
            }
        }
    }

    #[test]
    fn split_sizes_use_floor_arithmetic() {
        let corpus = generate_corpus(&small_config(10, 2, 0.1)).unwrap();
        let (train, test) = split_corpus(&corpus, 0.8, 42).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
    }

    #[test]
    fn paper_scale_split_is_19200_4800() {
        // Build a lightweight fake corpus; splitting only looks at ids.
        let template = generate_corpus(&small_config(1, 0, 0.0)).unwrap().resumes[0].clone();
        let resumes: Vec<Resume> = (0..24_000)
            .map(|i| Resume {
                id: i,
                ..template.clone()
            })
            .collect();
        let corpus = Corpus { resumes };
        let (train, test) = split_corpus(&corpus, 0.8, 7).unwrap();
        assert_eq!((train.len(), test.len()), (19_200, 4_800));
    }

    #[test]
    fn split_is_deterministic_disjoint_and_complete() {
        let corpus = generate_corpus(&small_config(257, 17, 0.15)).unwrap();
        let (tr1, te1) = split_corpus(&corpus, 0.8, 99).unwrap();
        let (tr2, te2) = split_corpus(&corpus, 0.8, 99).unwrap();
        let ids = |c: &Corpus| c.resumes.iter().map(|r| r.id).collect::<Vec<_>>();
        assert_eq!(ids(&tr1), ids(&tr2));
        assert_eq!(ids(&te1), ids(&te2));
        let mut all: Vec<u64> = ids(&tr1).into_iter().chain(ids(&te1)).collect();
        all.sort_unstable();
        assert_eq!(all, (0..257).collect::<Vec<_>>());
    }

    #[test]
    fn split_rejects_degenerate_fraction() {
        let corpus = generate_corpus(&small_config(10, 2, 0.1)).unwrap();
        assert!(split_corpus(&corpus, 0.0, 1).is_err());
        assert!(split_corpus(&corpus, 1.0, 1).is_err());
    }
}
