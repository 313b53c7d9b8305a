use can_ner::corpus::{build_vocab, Seg};
use can_ner::encoder::{build_input_repr, ConvLayer};
use can_ner::sequence::GlobalAttention;
use can_ner::{Parameter, Sentence, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tensor(tau: usize, d: usize, values: &[f64]) -> Tensor {
    Tensor::from_vec(&[tau, d], values[..tau * d].to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn global_attention_is_permutation_equivariant(
        values in prop::collection::vec(-2.0f64..2.0, 6 * 4),
        perm in Just((0..6).collect::<Vec<usize>>()).prop_shuffle(),
        seed in any::<u64>(),
    ) {
        let attn = GlobalAttention::new(4, &mut ChaCha8Rng::seed_from_u64(seed));
        let hr = tensor(6, 4, &values);
        let permuted: Vec<f64> = perm.iter().flat_map(|&p| hr.row(p).to_vec()).collect();
        let (hg, w) = attn.forward(&hr).unwrap();
        let (hg_p, w_p) = attn.forward(&tensor(6, 4, &permuted)).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            for (a, b) in hg_p.row(i).iter().zip(hg.row(p)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            for (j, &q) in perm.iter().enumerate() {
                prop_assert!((w_p.row(i)[j] - w.row(p)[q]).abs() < 1e-12);
            }
            prop_assert!((w.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    /// Changing a character more than `(k-1)/2` positions away leaves the
    /// convolutional attention output at `j` untouched.
    #[test]
    fn conv_attention_is_local(j in 0usize..9, far in 0usize..9, k in prop::sample::select(vec![1usize, 3, 5]), seed in any::<u64>()) {
        prop_assume!(far.abs_diff(j) > (k - 1) / 2);
        let chars: Vec<char> = "甲乙丙丁戊己庚辛壬".chars().collect();
        let mut changed = chars.clone();
        changed[far] = '癸';
        let all: Vec<char> = chars.iter().copied().chain(['癸']).collect();
        let base = Sentence::new(chars, vec![Seg::S; 9], None).unwrap();
        let other = Sentence::new(changed, vec![Seg::S; 9], None).unwrap();
        let vocab = build_vocab(&[Sentence::new(all, vec![Seg::S; 10], None).unwrap()], 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table = Parameter::new("t", Tensor::glorot(&[vocab.len(), 4], vocab.len(), 4, &mut rng));
        let layer = ConvLayer::new(k, 8, 6, true, &mut rng).unwrap();
        let (a, wa) = layer.forward(&build_input_repr(&base, &vocab, &table).unwrap()).unwrap();
        let (b, wb) = layer.forward(&build_input_repr(&other, &vocab, &table).unwrap()).unwrap();
        prop_assert_eq!(a.row(j), b.row(j));
        let (wa, wb) = (wa.unwrap(), wb.unwrap());
        prop_assert_eq!(wa.row(j), wb.row(j));
    }
}
