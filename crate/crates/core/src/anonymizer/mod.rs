//! Entity anonymization: tagging PER/LOC spans, masking them with
//! placeholder tokens, corpus-level statistics and span-exact evaluation.
//!
//! Span offsets are Unicode code-point indices, which keeps the wire
//! protocol of external backends language-neutral. Mask placeholders are
//! exactly `[PER]` and `[LOC]`.

mod builtin;
mod external;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Resume};
use crate::exec;
use crate::{Error, Result};

pub use builtin::{BuiltinTagger, Gazetteer};
pub use external::{NerBackendConfig, NerClient};

/// Closed label set. Unknown labels reported by external backends are
/// dropped and counted, never passed through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityLabel {
    #[serde(rename = "PER")]
    Per,
    #[serde(rename = "LOC")]
    Loc,
}

impl EntityLabel {
    pub fn placeholder(self) -> &'static str {
        match self {
            EntityLabel::Per => "[PER]",
            EntityLabel::Loc => "[LOC]",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EntityLabel::Per => "PER",
            EntityLabel::Loc => "LOC",
        }
    }
}

impl fmt::Display for EntityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Half-open span `[start, end)` over code points of a text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub label: EntityLabel,
}

impl EntitySpan {
    pub fn new(start: usize, end: usize, label: EntityLabel) -> Self {
        EntitySpan { start, end, label }
    }

    fn overlaps(&self, other: &EntitySpan) -> bool {
        self.start < other.end && other.start < self.end
    }

    fn len(&self) -> usize {
        self.end - self.start
    }
}

/// Which entity labels an operation should mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    pub per: bool,
    pub loc: bool,
}

impl LabelSet {
    pub const NONE: LabelSet = LabelSet { per: false, loc: false };
    pub const PER: LabelSet = LabelSet { per: true, loc: false };
    pub const LOC: LabelSet = LabelSet { per: false, loc: true };
    pub const ALL: LabelSet = LabelSet { per: true, loc: true };

    pub fn contains(&self, label: EntityLabel) -> bool {
        match label {
            EntityLabel::Per => self.per,
            EntityLabel::Loc => self.loc,
        }
    }

    pub fn is_empty(&self) -> bool {
        !self.per && !self.loc
    }

    /// Parse a comma-separated list such as `"per,loc"`.
    pub fn parse(spec: &str) -> Result<LabelSet> {
        let mut set = LabelSet::NONE;
        for item in spec.split(',') {
            let item = item.trim();
            match item.to_ascii_lowercase().as_str() {
                "" => {}
                "per" => set.per = true,
                "loc" => set.loc = true,
                other => {
                    return Err(Error::Config(format!(
                        "unknown entity label '{other}' (expected per, loc)"
                    )))
                }
            }
        }
        Ok(set)
    }

    /// Short identifier used in report rows: `per`, `loc`, `per+loc` or `-`.
    pub fn tag(&self) -> &'static str {
        match (self.per, self.loc) {
            (true, true) => "per+loc",
            (true, false) => "per",
            (false, true) => "loc",
            (false, false) => "-",
        }
    }
}

/// Output of [`anonymize_text`].
#[derive(Debug, Clone, PartialEq)]
pub struct AnonymizationResult {
    pub text_masked: String,
    pub spans_removed: Vec<EntitySpan>,
    pub backend: String,
}

/// Corpus-level masking statistics. `total_words` counts whitespace tokens
/// of the original biographies; `masked_words` counts whitespace tokens
/// overlapping at least one masked span.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnonymizationStats {
    pub total_words: u64,
    pub masked_spans: u64,
    pub masked_words: u64,
    pub masked_word_fraction: f64,
}

impl AnonymizationStats {
    pub fn from_counts(total_words: u64, masked_spans: u64, masked_words: u64) -> Self {
        let masked_word_fraction = if total_words == 0 {
            0.0
        } else {
            masked_words as f64 / total_words as f64
        };
        AnonymizationStats {
            total_words,
            masked_spans,
            masked_words,
            masked_word_fraction,
        }
    }
}

/// Any component that maps a text to labeled entity spans (sorted,
/// non-overlapping). Implementations must be safe to call from multiple
/// threads; corpus-level operations reassemble results in id order.
pub trait Tagger: Sync {
    fn tag(&self, text: &str) -> Result<Vec<EntitySpan>>;
    fn name(&self) -> &str;
    /// Upper bound on concurrent in-flight calls, if any.
    fn max_concurrent(&self) -> Option<usize> {
        None
    }
}

/// Byte offset of every code point plus one-past-the-end, for translating
/// code-point spans into byte ranges.
fn codepoint_byte_offsets(text: &str) -> Vec<usize> {
    let mut offsets: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
    offsets.push(text.len());
    offsets
}

/// Resolve overlaps and merge adjacent same-label spans.
///
/// Precedence on overlap: longer span wins, equal length keeps the earlier
/// start, exact ties keep PER. Same-label overlapping spans merge into their
/// union. Afterwards, same-label spans separated by whitespace only are
/// merged into one span.
pub fn merge_spans(text: &str, mut spans: Vec<EntitySpan>) -> Vec<EntitySpan> {
    if spans.is_empty() {
        return spans;
    }
    spans.sort_by(|a, b| {
        a.start
            .cmp(&b.start)
            .then(b.end.cmp(&a.end))
            .then_with(|| match (a.label, b.label) {
                (EntityLabel::Per, EntityLabel::Loc) => std::cmp::Ordering::Less,
                (EntityLabel::Loc, EntityLabel::Per) => std::cmp::Ordering::Greater,
                _ => std::cmp::Ordering::Equal,
            })
    });
    spans.dedup();

    let mut resolved: Vec<EntitySpan> = Vec::with_capacity(spans.len());
    for span in spans {
        match resolved.last_mut() {
            Some(last) if last.overlaps(&span) => {
                if last.label == span.label {
                    last.end = last.end.max(span.end);
                } else {
                    let keep_new = span.len() > last.len();
                    if keep_new {
                        *last = span;
                    }
                    // Equal length or shorter: the earlier (or PER, by sort
                    // order on exact ties) span already in place wins.
                }
            }
            _ => resolved.push(span),
        }
    }

    let offsets = codepoint_byte_offsets(text);
    let mut merged: Vec<EntitySpan> = Vec::with_capacity(resolved.len());
    for span in resolved {
        match merged.last_mut() {
            Some(last)
                if last.label == span.label
                    && span.start >= last.end
                    && text[offsets[last.end]..offsets[span.start]]
                        .chars()
                        .all(char::is_whitespace) =>
            {
                last.end = span.end;
            }
            _ => merged.push(span),
        }
    }
    merged
}

/// Replace every span whose label is in `labels` with its placeholder
/// token. Replacement runs right to left so earlier offsets stay valid; all
/// text outside masked spans is preserved verbatim.
pub fn anonymize_text(
    text: &str,
    spans: &[EntitySpan],
    labels: LabelSet,
    backend: &str,
) -> Result<AnonymizationResult> {
    let offsets = codepoint_byte_offsets(text);
    let cp_len = offsets.len() - 1;

    let mut sorted: Vec<EntitySpan> = spans.to_vec();
    sorted.sort_by_key(|s| (s.start, s.end));
    for span in &sorted {
        if span.start >= span.end || span.end > cp_len {
            return Err(Error::Contract(format!(
                "span {}..{} invalid for text of {cp_len} code points",
                span.start, span.end
            )));
        }
    }
    for pair in sorted.windows(2) {
        if pair[0].overlaps(&pair[1]) {
            return Err(Error::Contract(format!(
                "overlapping spans {}..{} and {}..{}",
                pair[0].start, pair[0].end, pair[1].start, pair[1].end
            )));
        }
    }

    let mut masked = text.to_string();
    let mut spans_removed = Vec::new();
    for span in sorted.iter().rev() {
        if labels.contains(span.label) {
            masked.replace_range(offsets[span.start]..offsets[span.end], span.label.placeholder());
            spans_removed.push(*span);
        }
    }
    spans_removed.reverse();

    Ok(AnonymizationResult {
        text_masked: masked,
        spans_removed,
        backend: backend.to_string(),
    })
}

/// Code-point ranges of whitespace-delimited tokens.
fn whitespace_token_ranges(text: &str) -> Vec<(usize, usize)> {
    let mut ranges = Vec::new();
    let mut start = None;
    let mut cp = 0;
    for ch in text.chars() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                ranges.push((s, cp));
            }
        } else if start.is_none() {
            start = Some(cp);
        }
        cp += 1;
    }
    if let Some(s) = start {
        ranges.push((s, cp));
    }
    ranges
}

fn masked_word_count(text: &str, removed: &[EntitySpan]) -> u64 {
    if removed.is_empty() {
        return 0;
    }
    whitespace_token_ranges(text)
        .iter()
        .filter(|(ts, te)| removed.iter().any(|s| s.start < *te && *ts < s.end))
        .count() as u64
}

fn anonymize_corpus_impl(
    corpus: &Corpus,
    tagger: &dyn Tagger,
    labels: LabelSet,
    parallel: bool,
) -> Result<(Corpus, AnonymizationStats)> {
    let backend = tagger.name().to_string();
    let process = |resume: &Resume| -> Result<(Resume, u64, u64, u64)> {
        let spans = tagger.tag(&resume.bio_raw).map_err(Error::for_resume(resume.id))?;
        let result = anonymize_text(&resume.bio_raw, &spans, labels, &backend)
            .map_err(Error::for_resume(resume.id))?;
        let total = whitespace_token_ranges(&resume.bio_raw).len() as u64;
        let masked_spans = result.spans_removed.len() as u64;
        let masked_words = masked_word_count(&resume.bio_raw, &result.spans_removed);
        let masked = Resume {
            bio_raw: result.text_masked,
            ..resume.clone()
        };
        Ok((masked, total, masked_spans, masked_words))
    };

    let outputs = match tagger.max_concurrent() {
        Some(limit) => {
            exec::try_map_ordered_chunked(&corpus.resumes, parallel, limit, process)?
        }
        None => exec::try_map_ordered(&corpus.resumes, parallel, process)?,
    };

    let mut resumes = Vec::with_capacity(outputs.len());
    let (mut total, mut spans, mut words) = (0u64, 0u64, 0u64);
    for (resume, t, s, w) in outputs {
        resumes.push(resume);
        total += t;
        spans += s;
        words += w;
    }
    Ok((
        Corpus { resumes },
        AnonymizationStats::from_counts(total, spans, words),
    ))
}

/// Mask the raw biography of every resume; all other fields and the order
/// are preserved. Returns the masked corpus and its masking statistics.
pub fn anonymize_corpus(
    corpus: &Corpus,
    tagger: &dyn Tagger,
    labels: LabelSet,
) -> Result<(Corpus, AnonymizationStats)> {
    anonymize_corpus_impl(corpus, tagger, labels, true)
}

/// Sequential variant of [`anonymize_corpus`] with identical output.
#[doc(hidden)]
pub fn anonymize_corpus_seq(
    corpus: &Corpus,
    tagger: &dyn Tagger,
    labels: LabelSet,
) -> Result<(Corpus, AnonymizationStats)> {
    anonymize_corpus_impl(corpus, tagger, labels, false)
}

/// Recompute masking statistics from an original corpus and its masked
/// counterpart by aligning whitespace tokens around the placeholder tokens.
pub fn entity_statistics(before: &Corpus, after: &Corpus) -> Result<AnonymizationStats> {
    if before.len() != after.len() {
        return Err(Error::Alignment(format!(
            "corpus sizes differ: {} vs {}",
            before.len(),
            after.len()
        )));
    }
    let mut total_words = 0u64;
    let mut masked_spans = 0u64;
    let mut masked_words = 0u64;
    for (b, a) in before.resumes.iter().zip(&after.resumes) {
        if b.id != a.id {
            return Err(Error::Alignment(format!(
                "resume ids differ: {} vs {}",
                b.id, a.id
            )));
        }
        let tb: Vec<&str> = b.bio_raw.split_whitespace().collect();
        let ta: Vec<&str> = a.bio_raw.split_whitespace().collect();
        total_words += tb.len() as u64;
        masked_spans +=
            (a.bio_raw.matches("[PER]").count() + a.bio_raw.matches("[LOC]").count()) as u64;

        let has_placeholder = |t: &str| t.contains("[PER]") || t.contains("[LOC]");
        let mut i = 0usize;
        let mut j = 0usize;
        while j < ta.len() {
            if has_placeholder(ta[j]) {
                if i >= tb.len() {
                    return Err(Error::Alignment(format!(
                        "resume {}: masked text has more tokens than the original",
                        b.id
                    )));
                }
                let mut consumed = 1usize;
                i += 1;
                // Resync on the next unmasked token of the masked text; a
                // multi-word span collapses several original tokens into one
                // placeholder-bearing token.
                if let Some(next) = ta.get(j + 1).filter(|t| !has_placeholder(t)) {
                    while i < tb.len() && tb[i] != *next {
                        i += 1;
                        consumed += 1;
                    }
                } else if j + 1 == ta.len() {
                    consumed += tb.len() - i;
                    i = tb.len();
                }
                masked_words += consumed as u64;
                j += 1;
            } else if i < tb.len() && tb[i] == ta[j] {
                i += 1;
                j += 1;
            } else {
                return Err(Error::Alignment(format!(
                    "resume {}: texts diverge at token {:?} without a placeholder",
                    b.id,
                    ta.get(j).copied().unwrap_or("<eof>")
                )));
            }
        }
        if i != tb.len() {
            return Err(Error::Alignment(format!(
                "resume {}: {} trailing original tokens unaccounted for",
                b.id,
                tb.len() - i
            )));
        }
    }
    Ok(AnonymizationStats::from_counts(
        total_words,
        masked_spans,
        masked_words,
    ))
}

/// Precision, recall and F1 for one label or the micro average.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrfScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn prf(tp: u64, fp: u64, fn_: u64) -> PrfScores {
    let precision = if tp + fp == 0 {
        if tp + fn_ == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        if tp + fp == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    PrfScores {
        precision,
        recall,
        f1,
    }
}

/// Span-exact tagger evaluation: a prediction counts as a true positive
/// only when start, end and label all match a gold span.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaggerScores {
    pub per_label: std::collections::BTreeMap<EntityLabel, PrfScores>,
    pub micro: PrfScores,
}

pub fn evaluate_tagger(
    predicted: &[Vec<EntitySpan>],
    gold: &[Vec<EntitySpan>],
) -> Result<TaggerScores> {
    if predicted.len() != gold.len() {
        return Err(Error::Alignment(format!(
            "document counts differ: {} predicted vs {} gold",
            predicted.len(),
            gold.len()
        )));
    }
    // (tp, fp, fn) per label.
    let mut counts: HashMap<EntityLabel, (u64, u64, u64)> = HashMap::new();
    counts.insert(EntityLabel::Per, (0, 0, 0));
    counts.insert(EntityLabel::Loc, (0, 0, 0));

    for (pred_doc, gold_doc) in predicted.iter().zip(gold) {
        let mut gold_multiset: HashMap<EntitySpan, u64> = HashMap::new();
        for g in gold_doc {
            *gold_multiset.entry(*g).or_insert(0) += 1;
        }
        for p in pred_doc {
            let entry = counts.get_mut(&p.label).expect("closed label set");
            match gold_multiset.get_mut(p) {
                Some(remaining) if *remaining > 0 => {
                    *remaining -= 1;
                    entry.0 += 1;
                }
                _ => entry.1 += 1,
            }
        }
        for (span, remaining) in gold_multiset {
            counts.get_mut(&span.label).expect("closed label set").2 += remaining;
        }
    }

    let mut per_label = std::collections::BTreeMap::new();
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (label, (t, f, n)) in counts {
        per_label.insert(label, prf(t, f, n));
        tp += t;
        fp += f;
        fn_ += n;
    }
    Ok(TaggerScores {
        per_label,
        micro: prf(tp, fp, fn_),
    })
}

#[cfg(test)]
mod tests;
