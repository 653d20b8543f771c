use proptest::prelude::*;

use super::*;
use crate::corpus::{generate_corpus, GeneratorConfig};

fn test_config() -> EmbedderConfig {
    EmbedderConfig {
        dim: 64,
        vocab_buckets: 4096,
        seed: 11,
        max_len: 32,
        lowercase: true,
    }
}

#[test]
fn punctuation_is_deleted_before_splitting() {
    let pre = preprocess("Dr. John-Smith, M.D.", &test_config());
    assert_eq!(pre.tokens, vec!["dr", "johnsmith", "md"]);
}

#[test]
fn long_text_truncates_to_max_len_with_full_mask() {
    let config = EmbedderConfig {
        max_len: 256,
        ..test_config()
    };
    let text = (0..300).map(|i| format!("tok{i}")).collect::<Vec<_>>().join(" ");
    let pre = preprocess(&text, &config);
    assert_eq!(pre.tokens.len(), 256);
    assert_eq!(pre.token_ids.len(), 256);
    assert!(pre.attention_mask.iter().all(|m| *m == 1));
    assert!(!pre.is_empty);
}

#[test]
fn empty_and_degenerate_texts_are_flagged() {
    for text in ["", "   ", "..., !!"] {
        let pre = preprocess(text, &test_config());
        assert!(pre.is_empty, "{text:?} should flag empty");
        assert!(pre.attention_mask.iter().all(|m| *m == 0));
        assert!(pre.token_ids.iter().all(|id| *id == PAD_ID));
    }
}

#[test]
fn mask_is_monotone_and_pad_ids_are_reserved() {
    let pre = preprocess("only three tokens", &test_config());
    assert_eq!(pre.attention_mask[..3], [1, 1, 1]);
    assert!(pre.attention_mask[3..].iter().all(|m| *m == 0));
    assert!(pre.token_ids[..3].iter().all(|id| *id != PAD_ID));
    assert!(pre.token_ids[3..].iter().all(|id| *id == PAD_ID));
}

#[test]
fn token_ids_stay_inside_bucket_range() {
    for token in ["a", "zz", "hello", "Zürich", "123"] {
        let id = token_id(token, 17);
        assert!((1..17).contains(&id), "{token} -> {id}");
    }
}

#[test]
fn single_token_embeds_to_its_table_row() {
    let config = test_config();
    let table = EmbeddingTable::build(&config).unwrap();
    let pre = preprocess("hello", &config);
    let f = embed(&pre, &table).unwrap();
    assert_eq!(f.values(), table.row(pre.token_ids[0]));
}

#[test]
fn two_tokens_embed_to_their_midpoint() {
    let config = test_config();
    let table = EmbeddingTable::build(&config).unwrap();
    let pre = preprocess("alpha beta", &config);
    let f = embed(&pre, &table).unwrap();
    let ra = table.row(pre.token_ids[0]);
    let rb = table.row(pre.token_ids[1]);
    for j in 0..config.dim {
        assert_eq!(f.values()[j], (ra[j] + rb[j]) / 2.0);
    }
}

#[test]
fn repeated_token_embeds_to_the_row_exactly() {
    let config = test_config();
    let table = EmbeddingTable::build(&config).unwrap();
    for k in [1usize, 2, 3, 5, 7] {
        let text = vec!["echo"; k].join(" ");
        let pre = preprocess(&text, &config);
        let f = embed(&pre, &table).unwrap();
        assert_eq!(f.values(), table.row(pre.token_ids[0]), "k={k}");
    }
}

#[test]
fn all_padding_input_is_rejected() {
    let config = test_config();
    let table = EmbeddingTable::build(&config).unwrap();
    let pre = preprocess("", &config);
    assert!(matches!(
        embed(&pre, &table),
        Err(crate::Error::EmptyText { .. })
    ));
}

#[test]
fn padding_invariance_under_max_len_changes() {
    let base = test_config();
    let table = EmbeddingTable::build(&base).unwrap();
    let text = "four short tokens here";
    let f_small = embed(&preprocess(text, &EmbedderConfig { max_len: 8, ..base }), &table).unwrap();
    let f_large =
        embed(&preprocess(text, &EmbedderConfig { max_len: 256, ..base }), &table).unwrap();
    assert_eq!(f_small, f_large);
}

#[test]
fn token_order_does_not_change_the_embedding() {
    let config = test_config();
    let table = EmbeddingTable::build(&config).unwrap();
    let a = embed(&preprocess("law court counsel hearings", &config), &table).unwrap();
    let b = embed(&preprocess("hearings counsel court law", &config), &table).unwrap();
    assert_eq!(a, b);
}

#[test]
fn infinity_norm_is_bounded_by_inverse_sqrt_dim() {
    let config = test_config();
    let table = EmbeddingTable::build(&config).unwrap();
    let bound = 1.0 / (config.dim as f64).sqrt();
    let corpus = generate_corpus(&GeneratorConfig::new(50, 3, 0.15)).unwrap();
    for resume in &corpus.resumes {
        let f = embed(&preprocess(&resume.bio_raw, &config), &table).unwrap();
        for v in f.values() {
            assert!(v.abs() <= bound, "{v} exceeds {bound}");
        }
    }
}

#[test]
fn table_construction_is_deterministic_and_pad_row_is_zero() {
    let config = test_config();
    let a = EmbeddingTable::build(&config).unwrap();
    let b = EmbeddingTable::build(&config).unwrap();
    assert_eq!(a.rows(), b.rows());
    assert!(a.row(PAD_ID).iter().all(|v| *v == 0.0));
    let other = EmbeddingTable::build(&EmbedderConfig { seed: 12, ..config }).unwrap();
    assert_ne!(a.rows(), other.rows());
}

#[test]
fn corpus_embedding_is_deterministic_and_id_ordered() {
    let config = test_config();
    let table = EmbeddingTable::build(&config).unwrap();
    let corpus = generate_corpus(&GeneratorConfig::new(60, 9, 0.15)).unwrap();
    let a = embed_corpus(&corpus, BioField::Raw, &table, &config).unwrap();
    let b = embed_corpus(&corpus, BioField::Raw, &table, &config).unwrap();
    let c = embed_corpus_seq(&corpus, BioField::Raw, &table, &config).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_eq!(a.len(), corpus.len());

    // Identical biographies embed identically.
    let i = corpus
        .resumes
        .iter()
        .position(|r| r.bio_raw == corpus.resumes[0].bio_raw)
        .unwrap();
    assert_eq!(a[i], a[0]);
}

#[test]
fn empty_biography_reports_the_resume_id() {
    let config = test_config();
    let table = EmbeddingTable::build(&config).unwrap();
    let mut corpus = generate_corpus(&GeneratorConfig::new(5, 2, 0.1)).unwrap();
    corpus.resumes[3].bio_raw = "...".to_string();
    match embed_corpus(&corpus, BioField::Raw, &table, &config) {
        Err(crate::Error::EmptyText { id: Some(3) }) => {}
        other => panic!("expected empty-text error for resume 3, got {other:?}"),
    }
}

#[test]
fn cache_round_trips_header_ids_and_vectors() {
    let config = test_config();
    let table = EmbeddingTable::build(&config).unwrap();
    let corpus = generate_corpus(&GeneratorConfig::new(12, 7, 0.15)).unwrap();
    let vectors = embed_corpus(&corpus, BioField::Raw, &table, &config).unwrap();
    let ids: Vec<u64> = corpus.resumes.iter().map(|r| r.id).collect();
    let header = EmbeddingCacheHeader {
        dim: config.dim as u32,
        vocab_buckets: config.vocab_buckets,
        seed: config.seed,
    };

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("emb.bin");
    save_embedding_cache(&path, header, &ids, &vectors).unwrap();
    let (h2, ids2, vecs2) = load_embedding_cache(&path).unwrap();
    assert_eq!(h2, header);
    assert_eq!(ids2, ids);
    assert_eq!(vecs2, vectors);
}

#[test]
fn cache_rejects_garbage() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.bin");
    std::fs::write(&path, b"definitely not a cache").unwrap();
    assert!(load_embedding_cache(&path).is_err());
}

proptest! {
    #[test]
    fn permutation_invariance_holds_for_random_token_bags(
        mut words in prop::collection::vec("[a-z]{1,8}", 1..20),
        seed in 0u64..1000,
    ) {
        let config = test_config();
        let table = EmbeddingTable::build(&config).unwrap();
        let original = words.join(" ");
        // Deterministic permutation derived from the proptest seed.
        let n = words.len();
        for i in (1..n).rev() {
            let j = (seed as usize).wrapping_mul(31).wrapping_add(i) % (i + 1);
            words.swap(i, j);
        }
        let permuted = words.join(" ");
        let a = embed(&preprocess(&original, &config), &table).unwrap();
        let b = embed(&preprocess(&permuted, &config), &table).unwrap();
        prop_assert_eq!(a, b);
    }
}
