//! Shared fixtures for the benchmarks.

use can_ner::corpus::{build_vocab, gen_synthetic};
use can_ner::{Arch, LabelSet, Model, ModelConfig, Sentence};

/// Synthetic corpus and a freshly initialized model of the given size.
pub fn fixture(arch: Arch, d: usize, sentences: usize) -> (Model, Vec<Sentence>) {
    let corpus = gen_synthetic(11, sentences);
    let config = ModelConfig { arch, d_ch: d, d_h: d, k: 5, batch_size: 8, ..Default::default() };
    let model = Model::new(config, build_vocab(&corpus, 1), LabelSet::from_corpus(&corpus)).expect("valid config");
    (model, corpus)
}

/// Random emissions and transitions for a CRF with `labels` labels over `tau` positions.
pub fn crf_fixture(tau: usize, labels: usize) -> (can_ner::Tensor, can_ner::crf::Crf) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let mut crf = can_ner::crf::Crf::new(labels, 1, &mut rng);
    for v in crf.transitions.value.data_mut() {
        *v = rng.random_range(-1.0..1.0);
    }
    let data = (0..tau * labels).map(|_| rng.random_range(-2.0..2.0)).collect();
    (can_ner::Tensor::from_vec(&[tau, labels], data).expect("finite"), crf)
}
