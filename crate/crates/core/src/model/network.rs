use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{AttentionTrace, Embeddings, LabelSet, ModelConfig};
use crate::corpus::{transition_allowed, Sentence, Tag, Vocab};
use crate::crf::{emissions, emissions_backward, neg_log_likelihood, nll_backward, viterbi_decode_masked, Crf, TransitionMask};
use crate::encoder::{build_input_repr, embedding_backward, ConvLayer, ConvCache, InputRepr, D_SEG};
use crate::numerics::{Objective, Parameter, Tensor};
use crate::sequence::{concat_repr, split_repr, BiGru, BiGruCache, GlobalAttention, GlobalCache};
use crate::Error;

/// Encoder → BiGRU → (global attention) → CRF, in one of three variants.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub labels: LabelSet,
    pub char_table: Parameter,
    pub conv: Option<ConvLayer>,
    pub gru: BiGru,
    pub global: Option<GlobalAttention>,
    pub crf: Crf,
    decode_mask: Option<TransitionMask>,
}

struct Activations {
    repr: InputRepr,
    conv: Option<(Tensor, ConvCache)>,
    hr: Tensor,
    gru: BiGruCache,
    global: Option<GlobalCache>,
    h: Tensor,
    emissions: Tensor,
}

impl Model {
    /// Fresh model with seeded initialization; `config.label_set` is
    /// overwritten with `labels`.
    pub fn new(mut config: ModelConfig, vocab: Vocab, labels: LabelSet) -> Result<Self, Error> {
        config.validate()?;
        config.label_set = labels.names();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d_in = config.d_ch + D_SEG;
        let char_table = Parameter::new(
            "encoder.char_table",
            Tensor::glorot(&[vocab.len(), config.d_ch], vocab.len(), config.d_ch, &mut rng),
        );
        let conv = if config.arch.has_conv() {
            let mut layer = ConvLayer::new(config.k, d_in, config.d_h, config.arch.has_attention(), &mut rng)?;
            layer.mask_pads = config.mask_window_pads;
            Some(layer)
        } else {
            None
        };
        let gru_in = if conv.is_some() { config.d_h } else { d_in };
        let gru = BiGru::new(gru_in, config.d_h, &mut rng)?;
        let global = config.arch.has_attention().then(|| GlobalAttention::new(config.d_h, &mut rng));
        let crf_in = if global.is_some() { 2 * config.d_h } else { config.d_h };
        let crf = Crf::new(labels.len(), crf_in, &mut rng);
        let decode_mask = config.constrained_decode.then(|| bioes_mask(&labels));
        Ok(Self { config, vocab, labels, char_table, conv, gru, global, crf, decode_mask })
    }

    /// Switches BIOES-constrained Viterbi decoding on or off.
    pub fn set_constrained_decode(&mut self, on: bool) {
        self.config.constrained_decode = on;
        self.decode_mask = on.then(|| bioes_mask(&self.labels));
    }

    /// Visits every trainable parameter in a fixed order.
    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        f(&mut self.char_table);
        if let Some(conv) = &mut self.conv {
            conv.visit_params(f);
        }
        self.gru.visit_params(f);
        if let Some(g) = &mut self.global {
            g.visit_params(f);
        }
        self.crf.visit_params(f);
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.clone().visit_params(&mut |p| names.push(p.name().to_string()));
        names
    }

    pub fn num_parameters(&self) -> usize {
        let mut n = 0;
        self.clone().visit_params(&mut |p| n += p.value.len());
        n
    }

    pub fn zero_grad(&mut self) {
        self.visit_params(&mut |p| p.zero_grad());
    }

    /// Overwrites character rows found in `emb`; returns how many were set.
    pub fn apply_embeddings(&mut self, emb: &Embeddings) -> Result<usize, Error> {
        if emb.dim != self.config.d_ch {
            return Err(Error::Config(format!(
                "embedding dimension {} does not match d_ch {}",
                emb.dim, self.config.d_ch
            )));
        }
        let mut hits = 0;
        for (i, &c) in self.vocab.chars().iter().enumerate() {
            if let Some(v) = emb.vectors.get(&c) {
                self.char_table.value.row_mut(i + Vocab::RESERVED).copy_from_slice(v);
                hits += 1;
            }
        }
        Ok(hits)
    }

    fn activations(&self, sentence: &Sentence) -> Result<Activations, Error> {
        let repr = build_input_repr(sentence, &self.vocab, &self.char_table)?;
        let conv = match &self.conv {
            Some(layer) => Some(layer.forward_cached(&repr)?),
            None => None,
        };
        let features = conv.as_ref().map_or(&repr.rows, |(f, _)| f);
        let (hr, gru) = self.gru.forward_cached(features)?;
        let (h, global) = match &self.global {
            Some(g) => {
                let (hg, cache) = g.forward_cached(&hr)?;
                (concat_repr(&hr, &hg)?, Some(cache))
            }
            None => (hr.clone(), None),
        };
        let emissions = emissions(&h, &self.crf)?;
        Ok(Activations { repr, conv, hr, gru, global, h, emissions })
    }

    /// Emission scores and attention weights for one sentence.
    pub fn forward(&self, sentence: &Sentence) -> Result<(Tensor, AttentionTrace), Error> {
        self.forward_with_id(sentence, 0)
    }

    pub fn forward_with_id(&self, sentence: &Sentence, sentence_id: usize) -> Result<(Tensor, AttentionTrace), Error> {
        let repr = build_input_repr(sentence, &self.vocab, &self.char_table)?;
        let (features, local) = match &self.conv {
            Some(layer) => layer.forward(&repr)?,
            None => (repr.rows.clone(), None),
        };
        let hr = self.gru.forward(&features)?;
        let (h, global) = match &self.global {
            Some(g) => {
                let (hg, weights) = g.forward(&hr)?;
                (concat_repr(&hr, &hg)?, Some(weights))
            }
            None => (hr, None),
        };
        let e = emissions(&h, &self.crf)?;
        Ok((e, AttentionTrace { sentence_id, chars: sentence.chars.clone(), local, global }))
    }

    fn gold_indices(&self, sentence: &Sentence) -> Result<Vec<usize>, Error> {
        let gold = sentence.gold.as_ref().ok_or(Error::Unlabeled(0))?;
        self.labels.encode(gold)
    }

    /// Negative log-likelihood of the gold tags, no gradients.
    pub fn loss(&self, sentence: &Sentence) -> Result<f64, Error> {
        let gold = self.gold_indices(sentence)?;
        let (e, _) = self.forward(sentence)?;
        neg_log_likelihood(&e, &self.crf, &gold)
    }

    /// Negative log-likelihood; its gradient is added to every parameter.
    pub fn loss_and_grad(&mut self, sentence: &Sentence) -> Result<f64, Error> {
        let gold = self.gold_indices(sentence)?;
        let act = self.activations(sentence)?;
        let (loss, de) = nll_backward(&act.emissions, &mut self.crf, &gold)?;
        let dh = emissions_backward(&act.h, &mut self.crf, &de);
        let dhr = match (&mut self.global, &act.global) {
            (Some(g), Some(cache)) => {
                let (mut dhr, dhg) = split_repr(&dh);
                g.backward(&act.hr, cache, &dhg, &mut dhr);
                dhr
            }
            _ => dh,
        };
        let features = act.conv.as_ref().map_or(&act.repr.rows, |(f, _)| f);
        let dfeatures = self.gru.backward(features, &act.gru, &dhr);
        let drepr = match (&mut self.conv, &act.conv) {
            (Some(layer), Some((_, cache))) => {
                let mut drepr = Tensor::zeros(act.repr.rows.shape());
                layer.backward(&act.repr, cache, &dfeatures, &mut drepr);
                drepr
            }
            _ => dfeatures,
        };
        embedding_backward(&act.repr, &drepr, &mut self.char_table);
        Ok(loss)
    }

    /// Summed negative log-likelihood over a batch, accumulating gradients
    /// in batch order.
    pub fn batch_loss(&mut self, batch: &[Sentence]) -> Result<f64, Error> {
        let mut total = 0.0;
        for (i, s) in batch.iter().enumerate() {
            if s.gold.is_none() {
                return Err(Error::Unlabeled(i));
            }
            total += self.loss_and_grad(s)?;
        }
        Ok(total)
    }

    pub fn predict_indices(&self, sentence: &Sentence) -> Result<Vec<usize>, Error> {
        let (e, _) = self.forward(sentence)?;
        Ok(viterbi_decode_masked(&e, &self.crf, self.decode_mask.as_ref())?.0)
    }

    /// Viterbi tags for one sentence.
    pub fn predict(&self, sentence: &Sentence) -> Result<Vec<Tag>, Error> {
        Ok(self.predict_indices(sentence)?.into_iter().map(|i| self.labels.tag(i).clone()).collect())
    }

    pub fn attention(&self, sentence: &Sentence, sentence_id: usize) -> Result<AttentionTrace, Error> {
        if !self.config.arch.has_attention() {
            return Err(Error::NoAttention(self.config.arch.to_string()));
        }
        Ok(self.forward_with_id(sentence, sentence_id)?.1)
    }
}

fn bioes_mask(labels: &LabelSet) -> TransitionMask {
    let n = labels.len();
    let tag = |i: usize| (i < n).then(|| labels.tag(i));
    TransitionMask::new(n, |a, b| {
        // START may not be a target, STOP may not be a source.
        if b == n || a == n + 1 {
            return false;
        }
        transition_allowed(tag(a), tag(b))
    })
}

/// Summed batch loss as a differentiable objective.
pub struct BatchObjective<'a> {
    pub model: &'a mut Model,
    pub batch: &'a [Sentence],
}

impl Objective for BatchObjective<'_> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        self.model.visit_params(f);
    }

    fn loss(&mut self) -> f64 {
        self.batch.iter().map(|s| self.model.loss(s).expect("labeled batch")).fold(0.0, |a, b| a + b)
    }

    fn loss_and_grad(&mut self) -> f64 {
        self.model.batch_loss(self.batch).expect("labeled batch")
    }
}
