use can_ner::corpus::{build_vocab, gen_synthetic, gen_synthetic_with, Seg, SyntheticConfig};
use can_ner::model::BatchObjective;
use can_ner::numerics::{check_gradients, GradCheckOptions};
use can_ner::{Arch, LabelSet, Model, ModelConfig, Sentence};

fn toy_batch() -> Vec<Sentence> {
    let cfg = SyntheticConfig { slots: 1, entity_rate: 1.0, max_entity_len: 2 };
    gen_synthetic_with(4, 2, &cfg)
}

fn check(config: ModelConfig, batch: &[Sentence]) {
    let corpus = gen_synthetic(4, 20);
    let labels = LabelSet::from_corpus(&corpus);
    let mut model = Model::new(config.clone(), build_vocab(&corpus[..1], 1), labels).unwrap();
    let report = check_gradients(&mut BatchObjective { model: &mut model, batch }, GradCheckOptions::default());
    assert!(report.passed(), "{:?}: {report}", config.arch);
}

#[test]
fn every_variant_on_a_two_sentence_batch() {
    let batch = toy_batch();
    for arch in Arch::ALL {
        check(ModelConfig { arch, d_ch: 4, d_h: 6, k: 3, ..Default::default() }, &batch);
    }
}

#[test]
fn masked_window_pads() {
    let config = ModelConfig { d_ch: 4, d_h: 6, k: 5, mask_window_pads: true, ..Default::default() };
    check(config, &toy_batch());
}

#[test]
fn single_character_sentence() {
    let batch = vec![Sentence::new(vec!['甲'], vec![Seg::S], Some(vec!["S-PER".parse().unwrap()])).unwrap()];
    check(ModelConfig { d_ch: 4, d_h: 4, k: 3, ..Default::default() }, &batch);
}
