mod common;

use proptest::prelude::*;
use vocab_forge::synth::{Script, SyntheticCorpus};
use vocab_forge::tokenizer::{Normalization, SpecialRole, TokenizerModel, UnigramTrainer};

fn small_model() -> TokenizerModel {
    common::model(&[
        ("a", -2.0),
        ("b", -2.5),
        ("c", -3.0),
        ("ab", -3.1),
        ("bc", -3.6),
        ("abc", -6.5),
        ("ca", -4.0),
        ("cab", -5.2),
        ("bb", -4.4),
        ("aaa", -5.5),
    ])
}

proptest! {
    #[test]
    fn viterbi_matches_exhaustive(text in "[abc]{1,8}") {
        let m = small_model();
        let seg = m.encode(&text);
        let best = common::exhaustive_best(&m, &text).unwrap();
        prop_assert!((seg.log_prob - best).abs() < 1e-9, "{} vs {}", seg.log_prob, best);
        prop_assert_eq!(seg.surfaces.concat(), text);
    }

    #[test]
    fn round_trip_through_decode(text in "[a-z ]{0,40}") {
        let model = common::char_tokenizer();
        let ids = model.encode_ids(&text);
        prop_assert_eq!(model.decode(&ids).unwrap(), model.normalize(&text));
    }

    #[test]
    fn surfaces_cover_normalized_text(text in "\\PC{0,30}") {
        let model = common::char_tokenizer();
        let seg = model.encode(&text);
        prop_assert_eq!(seg.surfaces.concat(), model.normalize(&text));
        prop_assert_eq!(seg.token_ids.len(), seg.surfaces.len());
    }
}

fn corpus() -> Vec<String> {
    SyntheticCorpus::new(Script::Latin, 300, 5).lines(400, 6)
}

#[test]
fn training_is_deterministic_and_exact_size() {
    let trainer = UnigramTrainer::new(150, 4.0);
    let a = trainer.train(corpus()).unwrap();
    let b = trainer.train(corpus()).unwrap();
    assert_eq!(a.to_text(), b.to_text());
    assert_eq!(a.len(), 150);
}

#[test]
fn trained_model_saves_and_loads() {
    let dir = tempfile::tempdir().unwrap();
    let model = UnigramTrainer::new(120, 3.0).train(corpus()).unwrap();
    let path = dir.path().join("m.model");
    model.save(&path).unwrap();
    let back = TokenizerModel::load(&path).unwrap();
    assert_eq!(back, model);
    for line in corpus().iter().take(50) {
        assert_eq!(back.encode_ids(line), model.encode_ids(line));
    }
}

#[test]
fn byte_fallback_round_trips_unseen_script() {
    let model = UnigramTrainer::new(320, 4.0)
        .with_byte_fallback(true)
        .train(corpus())
        .unwrap();
    assert!(model.byte_fallback());
    let text = "lorem \u{0F40}\u{0F72} ok";
    let ids = model.encode_ids(text);
    assert!(!ids.contains(&model.unk_id()));
    assert_eq!(model.decode(&ids).unwrap(), text);
}

#[test]
fn specials_come_first() {
    let model = UnigramTrainer::new(100, 4.0)
        .with_specials(vec![SpecialRole::Unknown, SpecialRole::Padding, SpecialRole::Begin, SpecialRole::End])
        .with_normalization(Normalization::Identity)
        .train(corpus())
        .unwrap();
    assert_eq!(model.surface(0), Some("<unk>"));
    assert_eq!(model.surface(3), Some("</s>"));
    assert_eq!(model.special_id(SpecialRole::Mask), None);
}
