//! Bias mitigation and shortlist fairness metrics: whole-token gender-marker
//! neutralization, removal of the linear gender direction from embeddings,
//! and gender proportions over top-K shortlists.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Gender};
use crate::embedder::EmbeddingVector;
use crate::{Error, Result};

/// Maps lowercase gendered tokens to their replacement; `None` removes the
/// token (honorifics).
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerTable {
    entries: BTreeMap<String, Option<String>>,
}

impl MarkerTable {
    /// The built-in table: he/she -> they, him -> them, her/his -> their,
    /// hers -> theirs, gendered honorifics removed.
    pub fn default_table() -> Self {
        let mut entries = BTreeMap::new();
        let mut replace = |from: &str, to: &str| {
            entries.insert(from.to_string(), Some(to.to_string()));
        };
        replace("he", "they");
        replace("she", "they");
        replace("him", "them");
        replace("her", "their");
        replace("his", "their");
        replace("hers", "theirs");
        replace("himself", "themselves");
        replace("herself", "themselves");
        drop(replace);
        for honorific in ["mr", "mrs", "ms", "miss"] {
            entries.insert(honorific.to_string(), None);
        }
        MarkerTable { entries }
    }

    /// Load a two-column tab-separated table; an empty second column removes
    /// the token.
    pub fn from_file(path: &Path) -> Result<Self> {
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = BTreeMap::new();
        for (idx, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.splitn(2, '\t');
            let from = cols.next().unwrap_or("").trim();
            if from.is_empty() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    msg: "empty marker token".into(),
                });
            }
            let to = cols.next().map(str::trim).unwrap_or("");
            entries.insert(
                from.to_lowercase(),
                if to.is_empty() { None } else { Some(to.to_string()) },
            );
        }
        Ok(MarkerTable { entries })
    }

    pub fn is_marker(&self, token: &str) -> bool {
        self.entries.contains_key(&token.to_lowercase())
    }

    fn lookup(&self, token: &str) -> Option<&Option<String>> {
        self.entries.get(&token.to_lowercase())
    }
}

/// Mirror the case pattern of the original token onto the replacement:
/// all-caps stays all-caps, initial capital stays capitalized.
fn match_case(original: &str, replacement: &str) -> String {
    let first_upper = original.chars().next().map(char::is_uppercase).unwrap_or(false);
    let all_upper = original.chars().count() > 1 && original.chars().all(|c| !c.is_lowercase());
    if all_upper && first_upper {
        replacement.to_uppercase()
    } else if first_upper {
        let mut out = String::with_capacity(replacement.len());
        let mut rchars = replacement.chars();
        if let Some(c) = rchars.next() {
            out.extend(c.to_uppercase());
        }
        out.extend(rchars);
        out
    } else {
        replacement.to_string()
    }
}

/// Replace every whole-token gendered marker, case-insensitively with
/// case-preserving output; all other text is untouched. No verb
/// re-inflection is attempted.
pub fn neutralize_gender_markers(text: &str, table: &MarkerTable) -> String {
    let bytes = text.as_bytes();
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0usize; // byte position up to which output is written

    let flush_token = |out: &mut String, cursor: &mut usize, start: usize, end: usize| {
        let token = &text[start..end];
        match table.lookup(token) {
            Some(Some(replacement)) => {
                out.push_str(&text[*cursor..start]);
                out.push_str(&match_case(token, replacement));
                *cursor = end;
            }
            Some(None) => {
                out.push_str(&text[*cursor..start]);
                // Removed honorific: also swallow a trailing period and the
                // whitespace separating it from the next word.
                let mut skip = end;
                if bytes.get(skip) == Some(&b'.') {
                    skip += 1;
                }
                while skip < text.len() {
                    match text[skip..].chars().next() {
                        Some(c) if c.is_whitespace() => skip += c.len_utf8(),
                        _ => break,
                    }
                }
                *cursor = skip;
            }
            None => {}
        }
    };

    let mut token_start: Option<usize> = None;
    for (byte, ch) in text.char_indices() {
        if ch.is_alphanumeric() {
            if token_start.is_none() {
                token_start = Some(byte);
            }
        } else if let Some(start) = token_start.take() {
            flush_token(&mut out, &mut cursor, start, byte);
        }
    }
    if let Some(start) = token_start {
        flush_token(&mut out, &mut cursor, start, text.len());
    }
    out.push_str(&text[cursor..]);
    out
}

/// Unit vector between the male and female embedding means.
#[derive(Debug, Clone, PartialEq)]
pub struct DebiasDirection {
    unit: Vec<f64>,
    pub n_male: usize,
    pub n_female: usize,
}

impl DebiasDirection {
    pub fn unit(&self) -> &[f64] {
        &self.unit
    }
}

/// `u = (mean_male - mean_female) / ||mean_male - mean_female||`, computed
/// as a sequential reduction in input order.
pub fn compute_gender_direction(
    embeddings: &[EmbeddingVector],
    genders: &[Gender],
) -> Result<DebiasDirection> {
    if embeddings.len() != genders.len() {
        return Err(Error::Alignment(format!(
            "{} embeddings vs {} gender labels",
            embeddings.len(),
            genders.len()
        )));
    }
    if embeddings.is_empty() {
        return Err(Error::Config("no embeddings to compute a direction from".into()));
    }
    let dim = embeddings[0].len();
    let mut sum_male = vec![0.0; dim];
    let mut sum_female = vec![0.0; dim];
    let mut n_male = 0usize;
    let mut n_female = 0usize;
    for (f, gender) in embeddings.iter().zip(genders) {
        if f.len() != dim {
            return Err(Error::Shape("ragged embedding dimensions".into()));
        }
        let target = match gender {
            Gender::Male => {
                n_male += 1;
                &mut sum_male
            }
            Gender::Female => {
                n_female += 1;
                &mut sum_female
            }
        };
        for (acc, v) in target.iter_mut().zip(f.values()) {
            *acc += v;
        }
    }
    if n_male == 0 || n_female == 0 {
        return Err(Error::Config(format!(
            "both genders required to compute a direction (male: {n_male}, female: {n_female})"
        )));
    }
    let mut diff: Vec<f64> = sum_male
        .iter()
        .zip(&sum_female)
        .map(|(m, f)| m / n_male as f64 - f / n_female as f64)
        .collect();
    let norm = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return Err(Error::Numeric(
            "degenerate gender direction: embedding means coincide".into(),
        ));
    }
    diff.iter_mut().for_each(|v| *v /= norm);
    Ok(DebiasDirection {
        unit: diff,
        n_male,
        n_female,
    })
}

/// Project out the gender direction: `f' = f - (f . u) u`.
pub fn debias_embedding(
    f: &EmbeddingVector,
    direction: &DebiasDirection,
) -> Result<EmbeddingVector> {
    if f.len() != direction.unit.len() {
        return Err(Error::Shape(format!(
            "embedding dimension {} vs direction dimension {}",
            f.len(),
            direction.unit.len()
        )));
    }
    let dot: f64 = f.values().iter().zip(&direction.unit).map(|(a, b)| a * b).sum();
    let values: Vec<f64> = f
        .values()
        .iter()
        .zip(&direction.unit)
        .map(|(a, u)| a - dot * u)
        .collect();
    EmbeddingVector::new(values)
}

pub fn debias_all(
    embeddings: &[EmbeddingVector],
    direction: &DebiasDirection,
) -> Result<Vec<EmbeddingVector>> {
    embeddings.iter().map(|f| debias_embedding(f, direction)).collect()
}

/// Gender composition of the K highest-scoring candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortlistReport {
    pub k: usize,
    pub male_fraction: f64,
    pub female_fraction: f64,
    pub member_ids: Vec<u64>,
}

impl ShortlistReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
        }
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Rank by score descending with ties broken by ascending id, take the first
/// `min(k, n)` and report gender fractions. The female fraction is the exact
/// complement of the male fraction.
pub fn top_k_shortlist(corpus: &Corpus, scores: &[f64], k: usize) -> Result<ShortlistReport> {
    if k == 0 {
        return Err(Error::Config("shortlist size k must be at least 1".into()));
    }
    if scores.len() != corpus.len() {
        return Err(Error::Alignment(format!(
            "{} scores for {} resumes",
            scores.len(),
            corpus.len()
        )));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Numeric(format!("non-finite candidate score {bad}")));
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("scores checked finite")
            .then(corpus.resumes[a].id.cmp(&corpus.resumes[b].id))
    });
    let take = k.min(corpus.len());
    let member_ids: Vec<u64> = order[..take].iter().map(|&i| corpus.resumes[i].id).collect();
    let males = order[..take]
        .iter()
        .filter(|&&i| corpus.resumes[i].gender == Gender::Male)
        .count();
    let male_fraction = males as f64 / take as f64;
    Ok(ShortlistReport {
        k,
        male_fraction,
        female_fraction: 1.0 - male_fraction,
        member_ids,
    })
}
