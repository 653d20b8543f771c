use proptest::prelude::*;

use super::*;
use crate::corpus::{generate_corpus, GeneratorConfig};

fn span(start: usize, end: usize, label: EntityLabel) -> EntitySpan {
    EntitySpan::new(start, end, label)
}

#[test]
fn gazetteer_hit_tags_location() {
    let tagger = BuiltinTagger::with_default_gazetteer();
    let spans = tagger.tag_text("She works in Madrid");
    assert_eq!(spans, vec![span(13, 19, EntityLabel::Loc)]);
}

#[test]
fn title_rule_tags_unknown_person() {
    let tagger = BuiltinTagger::with_default_gazetteer();
    let spans = tagger.tag_text("Dr Novak joined the clinic");
    assert_eq!(spans, vec![span(3, 8, EntityLabel::Per)]);
}

#[test]
fn empty_text_yields_no_spans() {
    let tagger = BuiltinTagger::with_default_gazetteer();
    assert!(tagger.tag_text("").is_empty());
}

#[test]
fn preposition_rule_needs_non_sentence_initial_capital() {
    let tagger = BuiltinTagger::new(Gazetteer::default());
    // "Tarifa" is not in any gazetteer; only the preposition rule can fire.
    assert_eq!(
        tagger.tag_text("They moved from Tarifa years ago"),
        vec![span(16, 22, EntityLabel::Loc)]
    );
    // Sentence-initial capital right after a preposition-final sentence.
    assert!(tagger.tag_text("He knows where it came from. Tarifa was first.").is_empty());
    // Lowercase token after preposition: no hit.
    assert!(tagger.tag_text("They moved from there").is_empty());
}

#[test]
fn placeholders_are_never_retagged() {
    let tagger = BuiltinTagger::with_default_gazetteer();
    assert!(tagger.tag_text("[PER] lives in [LOC]").is_empty());
}

#[test]
fn adjacent_same_label_tokens_merge() {
    let mut gaz = Gazetteer::default();
    gaz.persons.insert("Anna".into());
    gaz.persons.insert("Maria".into());
    let tagger = BuiltinTagger::new(gaz);
    assert_eq!(
        tagger.tag_text("Anna Maria signed the report"),
        vec![span(0, 10, EntityLabel::Per)]
    );
}

#[test]
fn merge_prefers_longer_spans_and_per_on_ties() {
    let text = "abcdefghij";
    let merged = merge_spans(
        text,
        vec![
            span(0, 3, EntityLabel::Loc),
            span(0, 5, EntityLabel::Per),
        ],
    );
    assert_eq!(merged, vec![span(0, 5, EntityLabel::Per)]);

    let merged = merge_spans(
        text,
        vec![
            span(2, 4, EntityLabel::Loc),
            span(2, 4, EntityLabel::Per),
        ],
    );
    assert_eq!(merged, vec![span(2, 4, EntityLabel::Per)]);

    let merged = merge_spans(
        text,
        vec![
            span(0, 4, EntityLabel::Loc),
            span(2, 6, EntityLabel::Loc),
        ],
    );
    assert_eq!(merged, vec![span(0, 6, EntityLabel::Loc)]);
}

#[test]
fn single_replacement() {
    let result = anonymize_text(
        "John lives in Madrid",
        &[span(0, 4, EntityLabel::Per), span(14, 20, EntityLabel::Loc)],
        LabelSet::PER,
        "test",
    )
    .unwrap();
    assert_eq!(result.text_masked, "[PER] lives in Madrid");
    assert_eq!(result.spans_removed, vec![span(0, 4, EntityLabel::Per)]);
}

#[test]
fn empty_label_set_is_identity() {
    let result = anonymize_text(
        "John lives in Madrid",
        &[span(0, 4, EntityLabel::Per)],
        LabelSet::NONE,
        "test",
    )
    .unwrap();
    assert_eq!(result.text_masked, "John lives in Madrid");
    assert!(result.spans_removed.is_empty());
}

#[test]
fn multi_span_replacement_matches_hand_offsets() {
    let result = anonymize_text(
        "John met Ana in Madrid",
        &[
            span(0, 4, EntityLabel::Per),
            span(9, 12, EntityLabel::Per),
            span(16, 22, EntityLabel::Loc),
        ],
        LabelSet::ALL,
        "test",
    )
    .unwrap();
    assert_eq!(result.text_masked, "[PER] met [PER] in [LOC]");
}

#[test]
fn code_point_offsets_hold_for_non_ascii() {
    // "Zürich" is 6 code points but 7 bytes.
    let text = "Ingrid moved to Zürich";
    let result = anonymize_text(
        text,
        &[span(0, 6, EntityLabel::Per), span(16, 22, EntityLabel::Loc)],
        LabelSet::ALL,
        "test",
    )
    .unwrap();
    assert_eq!(result.text_masked, "[PER] moved to [LOC]");
}

#[test]
fn overlapping_spans_are_a_contract_violation() {
    let err = anonymize_text(
        "abcdefgh",
        &[span(0, 4, EntityLabel::Per), span(3, 6, EntityLabel::Loc)],
        LabelSet::ALL,
        "test",
    )
    .unwrap_err();
    assert!(matches!(err, Error::Contract(_)));
}

#[test]
fn out_of_range_span_is_rejected() {
    let err = anonymize_text("short", &[span(2, 99, EntityLabel::Per)], LabelSet::ALL, "t")
        .unwrap_err();
    assert!(matches!(err, Error::Contract(_)));
}

#[test]
fn masking_twice_equals_masking_once() {
    let tagger = BuiltinTagger::with_default_gazetteer();
    let corpus = generate_corpus(&GeneratorConfig::new(60, 4, 0.15)).unwrap();
    let (once, _) = anonymize_corpus(&corpus, &tagger, LabelSet::ALL).unwrap();
    let (twice, stats) = anonymize_corpus(&once, &tagger, LabelSet::ALL).unwrap();
    assert_eq!(once, twice);
    assert_eq!(stats.masked_spans, 0);
}

#[test]
fn anonymize_corpus_preserves_everything_but_bio_raw() {
    let tagger = BuiltinTagger::with_default_gazetteer();
    let corpus = generate_corpus(&GeneratorConfig::new(40, 8, 0.15)).unwrap();
    let (masked, _) = anonymize_corpus(&corpus, &tagger, LabelSet::ALL).unwrap();
    assert_eq!(masked.len(), corpus.len());
    for (orig, anon) in corpus.resumes.iter().zip(&masked.resumes) {
        assert_eq!(orig.id, anon.id);
        assert_eq!(orig.bio_neutral, anon.bio_neutral);
        assert_eq!(orig.gender, anon.gender);
        assert_eq!(orig.score_biased, anon.score_biased);
        assert_ne!(orig.bio_raw, anon.bio_raw);
    }
    // Identity with an empty label set.
    let (identity, stats) = anonymize_corpus(&corpus, &tagger, LabelSet::NONE).unwrap();
    assert_eq!(identity, corpus);
    assert_eq!(stats.masked_spans, 0);
    assert_eq!(stats.masked_word_fraction, 0.0);
}

#[test]
fn anonymize_corpus_is_deterministic() {
    let tagger = BuiltinTagger::with_default_gazetteer();
    let corpus = generate_corpus(&GeneratorConfig::new(50, 12, 0.15)).unwrap();
    let (a, sa) = anonymize_corpus(&corpus, &tagger, LabelSet::ALL).unwrap();
    let (b, sb) = anonymize_corpus(&corpus, &tagger, LabelSet::ALL).unwrap();
    let (c, sc) = anonymize_corpus_seq(&corpus, &tagger, LabelSet::ALL).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_eq!(sa, sb);
    assert_eq!(sa, sc);
}

#[test]
fn statistics_fraction_is_exact_arithmetic() {
    let stats = AnonymizationStats::from_counts(1_416_693, 60_000, 56_668);
    assert_eq!(stats.masked_word_fraction, 56_668.0 / 1_416_693.0);
    assert!((stats.masked_word_fraction - 0.04).abs() < 1e-3);

    assert_eq!(AnonymizationStats::from_counts(100, 0, 0).masked_word_fraction, 0.0);
    assert_eq!(AnonymizationStats::from_counts(100, 100, 100).masked_word_fraction, 1.0);
}

#[test]
fn entity_statistics_recovers_counts_from_corpora() {
    let tagger = BuiltinTagger::new(Gazetteer::builtin_full());
    let corpus = generate_corpus(&GeneratorConfig::new(80, 15, 0.15)).unwrap();
    let (masked, direct) = anonymize_corpus(&corpus, &tagger, LabelSet::ALL).unwrap();
    let recomputed = entity_statistics(&corpus, &masked).unwrap();
    assert_eq!(direct, recomputed);
    // Two single-token entities per biography.
    assert_eq!(recomputed.masked_spans, 2 * corpus.len() as u64);
    assert_eq!(recomputed.masked_words, 2 * corpus.len() as u64);
}

#[test]
fn entity_statistics_rejects_misaligned_corpora() {
    let corpus = generate_corpus(&GeneratorConfig::new(10, 3, 0.1)).unwrap();
    let mut shifted = corpus.clone();
    shifted.resumes[0].id = 99;
    assert!(matches!(
        entity_statistics(&corpus, &shifted),
        Err(Error::Alignment(_))
    ));
    let mut shorter = corpus.clone();
    shorter.resumes.pop();
    assert!(matches!(
        entity_statistics(&corpus, &shorter),
        Err(Error::Alignment(_))
    ));
}

#[test]
fn perfect_prediction_scores_one() {
    let gold = vec![vec![span(0, 4, EntityLabel::Per), span(8, 12, EntityLabel::Loc)]];
    let scores = evaluate_tagger(&gold, &gold).unwrap();
    assert_eq!(scores.micro.precision, 1.0);
    assert_eq!(scores.micro.recall, 1.0);
    assert_eq!(scores.micro.f1, 1.0);
}

#[test]
fn empty_prediction_against_nonempty_gold() {
    let gold = vec![vec![span(0, 4, EntityLabel::Per)]];
    let predicted = vec![vec![]];
    let scores = evaluate_tagger(&predicted, &gold).unwrap();
    assert_eq!(scores.micro.recall, 0.0);
    assert_eq!(scores.micro.f1, 0.0);
    // No predictions against nonempty gold: precision 0 by convention.
    assert_eq!(scores.micro.precision, 0.0);
}

#[test]
fn half_right_scores_half() {
    let gold = vec![vec![
        span(0, 4, EntityLabel::Per),
        span(8, 12, EntityLabel::Loc),
    ]];
    let predicted = vec![vec![
        span(0, 4, EntityLabel::Per),
        span(20, 24, EntityLabel::Loc),
    ]];
    let scores = evaluate_tagger(&predicted, &gold).unwrap();
    assert_eq!(scores.micro.precision, 0.5);
    assert_eq!(scores.micro.recall, 0.5);
    assert_eq!(scores.micro.f1, 0.5);
}

#[test]
fn both_empty_scores_one_by_convention() {
    let scores = evaluate_tagger(&[vec![]], &[vec![]]).unwrap();
    assert_eq!(scores.micro.precision, 1.0);
    assert_eq!(scores.micro.recall, 1.0);
    // F1 of two ones is one.
    assert_eq!(scores.micro.f1, 1.0);
}

#[test]
fn document_count_mismatch_is_alignment_error() {
    assert!(matches!(
        evaluate_tagger(&[vec![]], &[]),
        Err(Error::Alignment(_))
    ));
}

#[test]
fn full_gazetteer_tagging_matches_gold_exactly() {
    let tagger = BuiltinTagger::new(Gazetteer::builtin_full());
    let corpus = generate_corpus(&GeneratorConfig::new(150, 23, 0.15)).unwrap();
    let predicted: Vec<Vec<EntitySpan>> = corpus
        .resumes
        .iter()
        .map(|r| tagger.tag_text(&r.bio_raw))
        .collect();
    let gold: Vec<Vec<EntitySpan>> = corpus.resumes.iter().map(|r| r.gold_entities.clone()).collect();
    let scores = evaluate_tagger(&predicted, &gold).unwrap();
    assert_eq!(scores.micro.f1, 1.0, "per-label: {:?}", scores.per_label);
}

#[test]
fn label_set_parses_comma_lists() {
    assert_eq!(LabelSet::parse("per,loc").unwrap(), LabelSet::ALL);
    assert_eq!(LabelSet::parse("LOC").unwrap(), LabelSet::LOC);
    assert_eq!(LabelSet::parse("").unwrap(), LabelSet::NONE);
    assert!(LabelSet::parse("org").is_err());
}

/// Build valid non-overlapping spans for `text` from arbitrary seed pairs.
fn normalize_spans(text: &str, raw: &[(usize, usize)]) -> Vec<EntitySpan> {
    let cp_len = text.chars().count();
    if cp_len == 0 {
        return vec![];
    }
    let mut spans: Vec<EntitySpan> = Vec::new();
    for (i, &(a, b)) in raw.iter().enumerate() {
        let start = a % cp_len;
        let end = (start + 1 + b % 4).min(cp_len);
        if start >= end {
            continue;
        }
        let label = if i % 2 == 0 { EntityLabel::Per } else { EntityLabel::Loc };
        if spans.iter().all(|s| !(s.start < end && start < s.end)) {
            spans.push(EntitySpan::new(start, end, label));
        }
    }
    spans.sort_by_key(|s| s.start);
    spans
}

proptest! {
    #[test]
    fn masked_length_arithmetic_holds(
        text in "[a-zA-Zà-üÀ-Ü0-9 .,]{0,60}",
        raw in prop::collection::vec((0usize..100, 0usize..100), 0..6),
    ) {
        let spans = normalize_spans(&text, &raw);
        let result = anonymize_text(&text, &spans, LabelSet::ALL, "prop").unwrap();
        let orig_cp = text.chars().count();
        let masked_cp = result.text_masked.chars().count();
        let removed: usize = result.spans_removed.iter().map(|s| s.end - s.start).sum();
        prop_assert_eq!(masked_cp, orig_cp - removed + 5 * result.spans_removed.len());
    }

    #[test]
    fn text_outside_masked_spans_is_preserved_verbatim(
        text in "[a-zA-Zà-üÀ-Ü0-9 .,]{0,60}",
        raw in prop::collection::vec((0usize..100, 0usize..100), 0..6),
        mask_per in any::<bool>(),
        mask_loc in any::<bool>(),
    ) {
        let spans = normalize_spans(&text, &raw);
        let labels = LabelSet { per: mask_per, loc: mask_loc };
        let result = anonymize_text(&text, &spans, labels, "prop").unwrap();

        // Independent left-to-right reconstruction: kept segments joined by
        // placeholders must equal the masked output.
        let chars: Vec<char> = text.chars().collect();
        let mut expected = String::new();
        let mut cursor = 0usize;
        for s in &result.spans_removed {
            expected.extend(&chars[cursor..s.start]);
            expected.push_str(s.label.placeholder());
            cursor = s.end;
        }
        expected.extend(&chars[cursor..]);
        prop_assert_eq!(expected, result.text_masked);
    }
}
