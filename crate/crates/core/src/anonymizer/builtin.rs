//! Built-in rule-and-gazetteer tagger.
//!
//! Detection combines exact token lookups against PER/LOC gazetteers with
//! two context rules: a capitalized token following a personal title is PER,
//! and a capitalized, non-sentence-initial token following a locative
//! preposition is LOC. Adjacent same-label hits merge into one span.

use std::collections::BTreeSet;
use std::path::Path;

use crate::anonymizer::{merge_spans, EntityLabel, EntitySpan, Tagger};
use crate::corpus::templates;
use crate::{Error, Result};

const PERSONAL_TITLES: [&str; 5] = ["Dr", "Mr", "Ms", "Mrs", "Prof"];
const LOCATIVE_PREPOSITIONS: [&str; 4] = ["in", "from", "at", "near"];

/// Entity lexicons for exact token matching.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    pub persons: BTreeSet<String>,
    pub locations: BTreeSet<String>,
}

impl Gazetteer {
    pub fn new(persons: BTreeSet<String>, locations: BTreeSet<String>) -> Self {
        Gazetteer { persons, locations }
    }

    /// Every built-in first name and city, as used by the corpus generator.
    pub fn builtin_full() -> Self {
        let persons = templates::male_names()
            .iter()
            .chain(templates::female_names())
            .map(|s| s.to_string())
            .collect();
        let locations = templates::city_names().iter().map(|s| s.to_string()).collect();
        Gazetteer { persons, locations }
    }

    /// The tagger's default lexicon: all cities, but one first name in five
    /// held out so those names are only reachable through the rules.
    pub fn builtin_default() -> Self {
        let mut persons = BTreeSet::new();
        for names in [templates::male_names(), templates::female_names()] {
            for (i, name) in names.iter().enumerate() {
                if !templates::is_heldout_name(i) {
                    persons.insert(name.to_string());
                }
            }
        }
        let locations = templates::city_names().iter().map(|s| s.to_string()).collect();
        Gazetteer { persons, locations }
    }

    /// Load one lexicon file: one entry per line, UTF-8, blank lines skipped.
    pub fn load_list(path: &Path) -> Result<BTreeSet<String>> {
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(content
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect())
    }

    pub fn from_files(persons: &Path, locations: &Path) -> Result<Self> {
        Ok(Gazetteer {
            persons: Self::load_list(persons)?,
            locations: Self::load_list(locations)?,
        })
    }
}

pub(crate) struct WordToken {
    pub start_cp: usize,
    pub end_cp: usize,
    byte_start: usize,
    byte_end: usize,
    pub sentence_initial: bool,
}

impl WordToken {
    pub fn text<'a>(&self, source: &'a str) -> &'a str {
        &source[self.byte_start..self.byte_end]
    }
}

/// Maximal alphanumeric runs with code-point offsets. A token is sentence
/// initial when it is the first of the text or the first after a `.`, `!`
/// or `?`.
pub(crate) fn word_tokens(text: &str) -> Vec<WordToken> {
    let mut tokens = Vec::new();
    let mut current: Option<(usize, usize)> = None; // (start_cp, byte_start)
    let mut sentence_start = true;
    let mut token_sentence_initial = true;
    let mut cp = 0;
    for (byte, ch) in text.char_indices() {
        if ch.is_alphanumeric() {
            if current.is_none() {
                current = Some((cp, byte));
                token_sentence_initial = sentence_start;
            }
        } else {
            if let Some((start_cp, byte_start)) = current.take() {
                tokens.push(WordToken {
                    start_cp,
                    end_cp: cp,
                    byte_start,
                    byte_end: byte,
                    sentence_initial: token_sentence_initial,
                });
                sentence_start = false;
            }
            if matches!(ch, '.' | '!' | '?') {
                sentence_start = true;
            }
        }
        cp += 1;
    }
    if let Some((start_cp, byte_start)) = current {
        tokens.push(WordToken {
            start_cp,
            end_cp: cp,
            byte_start,
            byte_end: text.len(),
            sentence_initial: token_sentence_initial,
        });
    }
    tokens
}

/// First character uppercase and not an all-caps token; all-caps tokens are
/// excluded so mask placeholders and acronyms are never re-tagged.
fn is_capitalized(token: &str) -> bool {
    let mut chars = token.chars();
    match chars.next() {
        Some(first) if first.is_uppercase() => !token.chars().all(|c| !c.is_lowercase()),
        _ => false,
    }
}

pub struct BuiltinTagger {
    gazetteer: Gazetteer,
}

impl BuiltinTagger {
    pub fn new(gazetteer: Gazetteer) -> Self {
        BuiltinTagger { gazetteer }
    }

    /// Tagger over the default lexicon (held-out names excluded).
    pub fn with_default_gazetteer() -> Self {
        BuiltinTagger::new(Gazetteer::builtin_default())
    }

    pub fn tag_text(&self, text: &str) -> Vec<EntitySpan> {
        let tokens = word_tokens(text);
        let mut spans = Vec::new();
        for (i, token) in tokens.iter().enumerate() {
            let word = token.text(text);
            let label = if self.gazetteer.persons.contains(word) {
                Some(EntityLabel::Per)
            } else if self.gazetteer.locations.contains(word) {
                Some(EntityLabel::Loc)
            } else if is_capitalized(word) && i > 0 {
                let prev = tokens[i - 1].text(text);
                if PERSONAL_TITLES.iter().any(|t| prev.eq_ignore_ascii_case(t)) {
                    Some(EntityLabel::Per)
                } else if LOCATIVE_PREPOSITIONS
                    .iter()
                    .any(|p| prev.eq_ignore_ascii_case(p))
                    && !token.sentence_initial
                {
                    Some(EntityLabel::Loc)
                } else {
                    None
                }
            } else {
                None
            };
            if let Some(label) = label {
                spans.push(EntitySpan::new(token.start_cp, token.end_cp, label));
            }
        }
        merge_spans(text, spans)
    }
}

impl Tagger for BuiltinTagger {
    fn tag(&self, text: &str) -> Result<Vec<EntitySpan>> {
        Ok(self.tag_text(text))
    }

    fn name(&self) -> &str {
        "builtin"
    }
}
