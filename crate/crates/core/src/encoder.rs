//! Character input representation and the convolutional attention layer.
//!
//! Each character becomes `x = [x_ch; x_seg]`. For the window of size `k`
//! around position `j`, every slot `m` gets the position row `m` appended,
//! giving tokens of width `d_e = d_ch + d_seg + k`. Local attention reweights
//! the tokens against the center one, and `d_h` convolution kernels then
//! sum-pool the weighted window into a single feature vector.

use rand::Rng;

use crate::corpus::{Seg, Sentence, Vocab};
use crate::numerics::{dot, matvec_acc, matvec_t_acc, outer_acc, softmax_in_place, NumericsError, Parameter, Tensor};
use crate::Error;

pub const D_SEG: usize = Seg::COUNT;

/// Per-sentence input rows `[x_ch; x_seg]` plus the vocabulary ids they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct InputRepr {
    pub rows: Tensor,
    pub ids: Vec<usize>,
}

impl InputRepr {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn width(&self) -> usize {
        self.rows.row_len()
    }
}

pub fn build_input_repr(sentence: &Sentence, vocab: &Vocab, char_table: &Parameter) -> Result<InputRepr, Error> {
    if sentence.is_empty() {
        return Err(Error::EmptySentence);
    }
    if sentence.seg.len() != sentence.len() {
        return Err(Error::Numerics(NumericsError::ShapeMismatch {
            op: "build_input_repr (chars, seg)",
            left: vec![sentence.len()],
            right: vec![sentence.seg.len()],
        }));
    }
    let d_ch = char_table.shape()[1];
    let ids = vocab.encode(&sentence.chars);
    let mut rows = Tensor::zeros(&[sentence.len(), d_ch + D_SEG]);
    for (i, (&id, seg)) in ids.iter().zip(&sentence.seg).enumerate() {
        let row = rows.row_mut(i);
        row[..d_ch].copy_from_slice(char_table.value.row(id));
        row[d_ch + seg.index()] = 1.0;
    }
    Ok(InputRepr { rows, ids })
}

/// The `k` tokens around a center position.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub center: usize,
    /// `k × d_e`.
    pub tokens: Tensor,
    pub pad_mask: Vec<bool>,
}

pub fn check_window_size(k: usize) -> Result<(), Error> {
    if k == 0 || k % 2 == 0 {
        return Err(Error::Config(format!("window size must be odd, got {k}")));
    }
    Ok(())
}

pub fn make_window(repr: &InputRepr, j: usize, k: usize, pos_table: &Parameter) -> Result<Window, Error> {
    check_window_size(k)?;
    if j >= repr.len() {
        return Err(Error::Config(format!("window center {j} outside sentence of length {}", repr.len())));
    }
    if pos_table.shape() != [k, k] {
        return Err(Error::Numerics(NumericsError::ShapeMismatch {
            op: "make_window (pos_table)",
            left: pos_table.shape().to_vec(),
            right: vec![k, k],
        }));
    }
    let mut tokens = Tensor::zeros(&[k, repr.width() + k]);
    let mut pad_mask = vec![false; k];
    fill_window(repr, j, k, &pos_table.value, tokens.data_mut(), &mut pad_mask);
    Ok(Window { center: j, tokens, pad_mask })
}

/// Sentence position of window slot `m`, if inside the sentence.
fn slot_position(j: usize, m: usize, k: usize, len: usize) -> Option<usize> {
    let p = (j + m).checked_sub((k - 1) / 2)?;
    (p < len).then_some(p)
}

fn fill_window(repr: &InputRepr, j: usize, k: usize, pos_table: &Tensor, out: &mut [f64], pad_mask: &mut [bool]) {
    let width = repr.width();
    let d_e = width + k;
    for m in 0..k {
        let token = &mut out[m * d_e..(m + 1) * d_e];
        match slot_position(j, m, k, repr.len()) {
            Some(p) => {
                token[..width].copy_from_slice(repr.rows.row(p));
                pad_mask[m] = false;
            }
            None => {
                token[..width].fill(0.0);
                pad_mask[m] = true;
            }
        }
        token[width..].copy_from_slice(pos_table.row(m));
    }
}

/// Score parameters `v`, `W1`, `W2` of the local attention.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalAttention {
    pub v: Parameter,
    pub w1: Parameter,
    pub w2: Parameter,
}

impl LocalAttention {
    pub fn new(d_h: usize, d_e: usize, rng: &mut impl Rng) -> Self {
        Self {
            v: Parameter::new("encoder.attn.v", Tensor::glorot(&[d_h], d_h, 1, rng)),
            w1: Parameter::new("encoder.attn.w1", Tensor::glorot(&[d_h, d_e], d_e, d_h, rng)),
            w2: Parameter::new("encoder.attn.w2", Tensor::glorot(&[d_h, d_e], d_e, d_h, rng)),
        }
    }

    fn hidden(&self) -> usize {
        self.v.shape()[0]
    }
}

struct AttnCache {
    /// `tanh(W1 x_j + W2 x_m)`, `k × d_h`.
    u: Vec<f64>,
    weights: Vec<f64>,
}

/// Writes `α_m x_m` into `hidden` and returns the cache for backprop.
fn attend(
    tokens: &[f64],
    k: usize,
    attn: &LocalAttention,
    pad_mask: Option<&[bool]>,
    hidden: &mut [f64],
) -> AttnCache {
    let d_e = tokens.len() / k;
    let d_h = attn.hidden();
    let center = &tokens[(k - 1) / 2 * d_e..((k - 1) / 2 + 1) * d_e];
    let mut query = vec![0.0; d_h];
    matvec_acc(attn.w1.value.data(), center, &mut query);

    let mut u = vec![0.0; k * d_h];
    let mut weights = vec![0.0; k];
    for m in 0..k {
        let um = &mut u[m * d_h..(m + 1) * d_h];
        um.copy_from_slice(&query);
        matvec_acc(attn.w2.value.data(), &tokens[m * d_e..(m + 1) * d_e], um);
        um.iter_mut().for_each(|x| *x = x.tanh());
        weights[m] = match pad_mask {
            Some(mask) if mask[m] => f64::NEG_INFINITY,
            _ => dot(attn.v.value.data(), um),
        };
    }
    softmax_in_place(&mut weights);
    for m in 0..k {
        for (h, x) in hidden[m * d_e..(m + 1) * d_e].iter_mut().zip(&tokens[m * d_e..(m + 1) * d_e]) {
            *h = weights[m] * x;
        }
    }
    AttnCache { u, weights }
}

/// Accumulates parameter gradients and adds `∂L/∂tokens` into `dtokens`.
fn attend_backward(
    tokens: &[f64],
    k: usize,
    attn: &mut LocalAttention,
    cache: &AttnCache,
    dhidden: &[f64],
    dtokens: &mut [f64],
) {
    let d_e = tokens.len() / k;
    let d_h = attn.hidden();
    let c = (k - 1) / 2;
    let alpha = &cache.weights;

    let mut dalpha = vec![0.0; k];
    for m in 0..k {
        let x = &tokens[m * d_e..(m + 1) * d_e];
        let dh = &dhidden[m * d_e..(m + 1) * d_e];
        dalpha[m] = dot(dh, x);
        for (dx, g) in dtokens[m * d_e..(m + 1) * d_e].iter_mut().zip(dh) {
            *dx += alpha[m] * g;
        }
    }
    let mean = dot(alpha, &dalpha);
    let mut dquery = vec![0.0; d_h];
    let mut dpre = vec![0.0; d_h];
    for m in 0..k {
        let ds = alpha[m] * (dalpha[m] - mean);
        if ds == 0.0 {
            continue;
        }
        let um = &cache.u[m * d_h..(m + 1) * d_h];
        for (g, u) in attn.v.grad.data_mut().iter_mut().zip(um) {
            *g += ds * u;
        }
        for ((d, &vi), &u) in dpre.iter_mut().zip(attn.v.value.data()).zip(um) {
            *d = ds * vi * (1.0 - u * u);
        }
        let x = &tokens[m * d_e..(m + 1) * d_e];
        outer_acc(&dpre, x, attn.w2.grad.data_mut());
        matvec_t_acc(attn.w2.value.data(), &dpre, &mut dtokens[m * d_e..(m + 1) * d_e]);
        for (q, d) in dquery.iter_mut().zip(&dpre) {
            *q += d;
        }
    }
    let center = &tokens[c * d_e..(c + 1) * d_e];
    outer_acc(&dquery, center, attn.w1.grad.data_mut());
    matvec_t_acc(attn.w1.value.data(), &dquery, &mut dtokens[c * d_e..(c + 1) * d_e]);
}

/// Local attention over one window: `(α_m x_m)_m` and the weights `α`.
pub fn local_attention(w: &Window, attn: &LocalAttention, mask_pads: bool) -> Result<(Tensor, Vec<f64>), Error> {
    let k = w.pad_mask.len();
    let d_e = w.tokens.row_len();
    if attn.w1.shape() != [attn.hidden(), d_e] || attn.w2.shape() != attn.w1.shape() {
        return Err(Error::Numerics(NumericsError::ShapeMismatch {
            op: "local_attention (W1, token)",
            left: attn.w1.shape().to_vec(),
            right: vec![d_e],
        }));
    }
    let mut hidden = Tensor::zeros(&[k, d_e]);
    let mask = mask_pads.then_some(w.pad_mask.as_slice());
    let cache = attend(w.tokens.data(), k, attn, mask, hidden.data_mut());
    Ok((hidden, cache.weights))
}

/// `out[f] = Σ_m ( Σ_e W[m,f,e]·hidden[m,e] + b[m,f] )`.
pub fn conv_sum_pool(hidden: &Tensor, conv_w: &Tensor, conv_b: &Tensor) -> Result<Tensor, Error> {
    let ws = conv_w.shape();
    let hs = hidden.shape();
    if ws.len() != 3 || hs.len() != 2 || ws[0] != hs[0] || ws[2] != hs[1] {
        return Err(Error::Numerics(NumericsError::ShapeMismatch {
            op: "conv_sum_pool (W^c, hidden)",
            left: ws.to_vec(),
            right: hs.to_vec(),
        }));
    }
    if conv_b.shape() != [ws[0], ws[1]] {
        return Err(Error::Numerics(NumericsError::ShapeMismatch {
            op: "conv_sum_pool (W^c, b^c)",
            left: ws.to_vec(),
            right: conv_b.shape().to_vec(),
        }));
    }
    let mut out = vec![0.0; ws[1]];
    pool(hidden.data(), conv_w.data(), conv_b.data(), ws[0], &mut out);
    Ok(Tensor::vector(out)?)
}

fn pool(hidden: &[f64], conv_w: &[f64], conv_b: &[f64], k: usize, out: &mut [f64]) {
    let d_h = out.len();
    let d_e = hidden.len() / k;
    for m in 0..k {
        let wm = &conv_w[m * d_h * d_e..(m + 1) * d_h * d_e];
        matvec_acc(wm, &hidden[m * d_e..(m + 1) * d_e], out);
        for (o, b) in out.iter_mut().zip(&conv_b[m * d_h..(m + 1) * d_h]) {
            *o += b;
        }
    }
}

/// The convolution over windows, with optional local attention in front.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub pos_table: Parameter,
    pub conv_w: Parameter,
    pub conv_b: Parameter,
    pub attention: Option<LocalAttention>,
    pub mask_pads: bool,
}

impl ConvLayer {
    pub fn new(k: usize, d_in: usize, d_h: usize, with_attention: bool, rng: &mut impl Rng) -> Result<Self, Error> {
        check_window_size(k)?;
        let d_e = d_in + k;
        Ok(Self {
            pos_table: Parameter::new("encoder.pos_table", Tensor::identity(k)),
            conv_w: Parameter::new("encoder.conv.w", Tensor::glorot(&[k, d_h, d_e], k * d_e, d_h, rng)),
            conv_b: Parameter::zeros("encoder.conv.b", &[k, d_h]),
            attention: with_attention.then(|| LocalAttention::new(d_h, d_e, rng)),
            mask_pads: false,
        })
    }

    pub fn window(&self) -> usize {
        self.pos_table.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.conv_w.shape()[1]
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        f(&mut self.pos_table);
        f(&mut self.conv_w);
        f(&mut self.conv_b);
        if let Some(a) = &mut self.attention {
            f(&mut a.v);
            f(&mut a.w1);
            f(&mut a.w2);
        }
    }

    pub fn forward(&self, repr: &InputRepr) -> Result<(Tensor, Option<Tensor>), Error> {
        let (features, cache) = self.forward_cached(repr)?;
        let trace = cache.attn.map(|caches| {
            let k = self.window();
            let data = caches.into_iter().flat_map(|c| c.weights).collect();
            Tensor::from_vec(&[repr.len(), k], data).expect("weights are finite")
        });
        Ok((features, trace))
    }

    pub(crate) fn forward_cached(&self, repr: &InputRepr) -> Result<(Tensor, ConvCache), Error> {
        if repr.is_empty() {
            return Err(Error::EmptySentence);
        }
        let k = self.window();
        let d_e = repr.width() + k;
        if self.conv_w.shape()[2] != d_e {
            return Err(Error::Numerics(NumericsError::ShapeMismatch {
                op: "conv layer (W^c, token)",
                left: self.conv_w.shape().to_vec(),
                right: vec![k, d_e],
            }));
        }
        let tau = repr.len();
        let d_h = self.out_dim();
        let mut features = Tensor::zeros(&[tau, d_h]);
        let mut windows = vec![0.0; tau * k * d_e];
        let mut hidden = vec![0.0; k * d_e];
        let mut pad_mask = vec![false; k];
        let mut attn_caches = self.attention.as_ref().map(|_| Vec::with_capacity(tau));
        for j in 0..tau {
            let tokens = &mut windows[j * k * d_e..(j + 1) * k * d_e];
            fill_window(repr, j, k, &self.pos_table.value, tokens, &mut pad_mask);
            let tokens = &windows[j * k * d_e..(j + 1) * k * d_e];
            let h: &[f64] = match &self.attention {
                Some(attn) => {
                    let mask = self.mask_pads.then_some(pad_mask.as_slice());
                    let cache = attend(tokens, k, attn, mask, &mut hidden);
                    attn_caches.as_mut().unwrap().push(cache);
                    &hidden
                }
                None => tokens,
            };
            pool(h, self.conv_w.value.data(), self.conv_b.value.data(), k, features.row_mut(j));
        }
        Ok((features, ConvCache { windows, attn: attn_caches }))
    }

    /// Accumulates gradients from `dfeatures` and adds `∂L/∂repr` into `drepr`.
    pub(crate) fn backward(&mut self, repr: &InputRepr, cache: &ConvCache, dfeatures: &Tensor, drepr: &mut Tensor) {
        let k = self.window();
        let width = repr.width();
        let d_e = width + k;
        let d_h = self.out_dim();
        let tau = repr.len();
        let mut dhidden = vec![0.0; k * d_e];
        let mut dtokens = vec![0.0; k * d_e];
        let mut hidden = vec![0.0; k * d_e];
        for j in 0..tau {
            let tokens = &cache.windows[j * k * d_e..(j + 1) * k * d_e];
            let attn_cache = cache.attn.as_ref().map(|c| &c[j]);
            let h: &[f64] = match attn_cache {
                Some(c) => {
                    for m in 0..k {
                        for e in 0..d_e {
                            hidden[m * d_e + e] = c.weights[m] * tokens[m * d_e + e];
                        }
                    }
                    &hidden
                }
                None => tokens,
            };
            let dout = dfeatures.row(j);
            dhidden.fill(0.0);
            for m in 0..k {
                let range = m * d_h * d_e..(m + 1) * d_h * d_e;
                outer_acc(dout, &h[m * d_e..(m + 1) * d_e], &mut self.conv_w.grad.data_mut()[range.clone()]);
                matvec_t_acc(&self.conv_w.value.data()[range], dout, &mut dhidden[m * d_e..(m + 1) * d_e]);
                for (g, d) in self.conv_b.grad.data_mut()[m * d_h..(m + 1) * d_h].iter_mut().zip(dout) {
                    *g += d;
                }
            }
            match (attn_cache, self.attention.as_mut()) {
                (Some(c), Some(attn)) => {
                    dtokens.fill(0.0);
                    attend_backward(tokens, k, attn, c, &dhidden, &mut dtokens);
                }
                _ => dtokens.copy_from_slice(&dhidden),
            }
            for m in 0..k {
                let dt = &dtokens[m * d_e..(m + 1) * d_e];
                for (g, d) in self.pos_table.grad.row_mut(m).iter_mut().zip(&dt[width..]) {
                    *g += d;
                }
                if let Some(p) = slot_position(j, m, k, tau) {
                    for (g, d) in drepr.row_mut(p).iter_mut().zip(&dt[..width]) {
                        *g += d;
                    }
                }
            }
        }
    }
}

pub(crate) struct ConvCache {
    windows: Vec<f64>,
    attn: Option<Vec<AttnCache>>,
}

/// Convolutional attention over a whole sentence: `τ × d_h` features and the
/// `τ × k` local attention weights.
pub fn conv_attention_forward(repr: &InputRepr, layer: &ConvLayer) -> Result<(Tensor, Tensor), Error> {
    if layer.attention.is_none() {
        return Err(Error::Config("conv layer has no local attention".into()));
    }
    let (features, trace) = layer.forward(repr)?;
    Ok((features, trace.expect("attention present")))
}

/// Adds `∂L/∂x_ch` rows into the character table gradient.
pub(crate) fn embedding_backward(repr: &InputRepr, drepr: &Tensor, char_table: &mut Parameter) {
    let d_ch = char_table.shape()[1];
    for (p, &id) in repr.ids.iter().enumerate() {
        for (g, d) in char_table.grad.row_mut(id).iter_mut().zip(&drepr.row(p)[..d_ch]) {
            *g += d;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_vocab;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(42)
    }

    fn table(vocab: &Vocab, d_ch: usize) -> Parameter {
        Parameter::new("char_table", Tensor::glorot(&[vocab.len(), d_ch], vocab.len(), d_ch, &mut rng()))
    }

    #[test]
    fn input_repr_shape_and_unk() {
        let s = Sentence::from_words(&["南京市", "长江大桥"]).unwrap();
        assert_eq!(s.seg, vec![Seg::B, Seg::M, Seg::E, Seg::B, Seg::M, Seg::M, Seg::E]);
        let train = Sentence::unsegmented("南京市长江".chars().collect());
        let vocab = build_vocab(&[train], 1);
        let t = table(&vocab, 8);
        let s6 = Sentence::unsegmented("南京市长江桥".chars().collect());
        let repr = build_input_repr(&s6, &vocab, &t).unwrap();
        assert_eq!(repr.rows.shape(), &[6, 12]);
        assert_eq!(repr.ids[5], Vocab::UNK);
        assert_eq!(&repr.rows.row(5)[..8], t.value.row(Vocab::UNK));
        assert_eq!(&repr.rows.row(0)[8..], &[0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            build_input_repr(&Sentence::unsegmented(vec![]), &vocab, &t),
            Err(Error::EmptySentence)
        ));
    }

    fn repr(tau: usize, width: usize) -> InputRepr {
        let data = (0..tau * width).map(|i| (i as f64 * 0.37).sin()).collect();
        InputRepr { rows: Tensor::matrix(tau, width, data).unwrap(), ids: vec![Vocab::UNK; tau] }
    }

    #[test]
    fn window_boundaries() {
        let r = repr(6, 3);
        let pos = Parameter::new("pos", Tensor::identity(5));
        let w = make_window(&r, 0, 5, &pos).unwrap();
        assert_eq!(w.pad_mask, vec![true, true, false, false, false]);
        assert!(w.tokens.row(0)[..3].iter().all(|&x| x == 0.0));
        assert_eq!(&w.tokens.row(2)[..3], r.rows.row(0));

        let w = make_window(&r, 3, 5, &pos).unwrap();
        assert!(w.pad_mask.iter().all(|&p| !p));
        assert_eq!(&w.tokens.row(2)[..3], r.rows.row(3));
        for m in 0..5 {
            let mut e = vec![0.0; 5];
            e[m] = 1.0;
            assert_eq!(&w.tokens.row(m)[3..], e.as_slice());
        }
        assert!(matches!(make_window(&r, 0, 4, &pos), Err(Error::Config(_))));
    }

    #[test]
    fn identical_tokens_give_uniform_weights() {
        let k = 5;
        let d_e = 6;
        let tokens = Tensor::from_vec(&[k, d_e], (0..k).flat_map(|_| [0.3, -0.1, 0.7, 0.2, 0.0, 1.0]).collect()).unwrap();
        let w = Window { center: 2, tokens, pad_mask: vec![false; k] };
        let attn = LocalAttention::new(4, d_e, &mut rng());
        let (hidden, weights) = local_attention(&w, &attn, false).unwrap();
        for a in &weights {
            assert!((a - 0.2).abs() < 1e-15);
        }
        assert!((hidden.row(0)[2] - 0.7 * 0.2).abs() < 1e-15);
    }

    #[test]
    fn single_slot_window() {
        let tokens = Tensor::matrix(1, 3, vec![0.5, -2.0, 1.0]).unwrap();
        let w = Window { center: 0, tokens: tokens.clone(), pad_mask: vec![false] };
        let (hidden, weights) = local_attention(&w, &LocalAttention::new(2, 3, &mut rng()), false).unwrap();
        assert_eq!(weights, vec![1.0]);
        assert_eq!(hidden, tokens);
    }

    #[test]
    fn local_attention_matches_scalar_recomputation() {
        let (k, d_e, d_h) = (3, 4, 2);
        let mut r = rng();
        let attn = LocalAttention::new(d_h, d_e, &mut r);
        let tokens = Tensor::glorot(&[k, d_e], 1, 1, &mut r);
        let w = Window { center: 1, tokens: tokens.clone(), pad_mask: vec![false; k] };
        let (hidden, weights) = local_attention(&w, &attn, false).unwrap();

        let x = |m: usize, e: usize| tokens.data()[m * d_e + e];
        let w1 = |f: usize, e: usize| attn.w1.value.data()[f * d_e + e];
        let w2 = |f: usize, e: usize| attn.w2.value.data()[f * d_e + e];
        let v = attn.v.value.data();
        let mut scores = [0.0; 3];
        for (m, s) in scores.iter_mut().enumerate() {
            for f in 0..d_h {
                let mut pre = 0.0;
                for e in 0..d_e {
                    pre += w1(f, e) * x(1, e) + w2(f, e) * x(m, e);
                }
                *s += v[f] * pre.tanh();
            }
        }
        let z: f64 = scores.iter().map(|s| s.exp()).sum();
        for m in 0..k {
            let a = scores[m].exp() / z;
            assert!((weights[m] - a).abs() < 1e-14);
            for e in 0..d_e {
                assert!((hidden.data()[m * d_e + e] - a * x(m, e)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn conv_sum_pool_examples() {
        let hidden = Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let out = conv_sum_pool(&hidden, &Tensor::zeros(&[3, 2, 2]), &Tensor::zeros(&[3, 2])).unwrap();
        assert_eq!(out.data(), &[0.0, 0.0]);

        let out = conv_sum_pool(
            &Tensor::matrix(1, 1, vec![3.0]).unwrap(),
            &Tensor::from_vec(&[1, 1, 1], vec![2.0]).unwrap(),
            &Tensor::matrix(1, 1, vec![1.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(out.data(), &[7.0]);

        let mut r = rng();
        let w = Tensor::glorot(&[3, 2, 2], 1, 1, &mut r);
        let b = Tensor::glorot(&[3, 2], 1, 1, &mut r);
        let out = conv_sum_pool(&hidden, &w, &b).unwrap();
        for f in 0..2 {
            let mut expect = 0.0;
            for m in 0..3 {
                let mut inner = 0.0;
                for e in 0..2 {
                    inner += w.data()[m * 4 + f * 2 + e] * hidden.data()[m * 2 + e];
                }
                expect += inner + b.data()[m * 2 + f];
            }
            assert!((out.data()[f] - expect).abs() < 1e-14);
        }
        assert!(conv_sum_pool(&hidden, &Tensor::zeros(&[2, 2, 2]), &Tensor::zeros(&[2, 2])).is_err());
    }

    #[test]
    fn conv_attention_shapes_and_normalization() {
        let layer = ConvLayer::new(5, 6, 4, true, &mut rng()).unwrap();
        for tau in [1, 2, 7] {
            let (features, trace) = conv_attention_forward(&repr(tau, 6), &layer).unwrap();
            assert_eq!(features.shape(), &[tau, 4]);
            assert_eq!(trace.shape(), &[tau, 5]);
            for j in 0..tau {
                let s: f64 = trace.row(j).iter().sum();
                assert!((s - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn masked_pads_get_zero_weight() {
        let mut layer = ConvLayer::new(5, 6, 4, true, &mut rng()).unwrap();
        layer.mask_pads = true;
        let (_, trace) = conv_attention_forward(&repr(1, 6), &layer).unwrap();
        assert_eq!(trace.row(0)[0], 0.0);
        assert_eq!(trace.row(0)[2], 1.0);
    }

    #[test]
    fn locality() {
        let layer = ConvLayer::new(3, 6, 4, true, &mut rng()).unwrap();
        let base = repr(8, 6);
        let (f0, _) = conv_attention_forward(&base, &layer).unwrap();
        let mut perturbed = base.clone();
        perturbed.rows.row_mut(6)[0] += 1.0;
        let (f1, _) = conv_attention_forward(&perturbed, &layer).unwrap();
        for j in 0..=4 {
            assert_eq!(f0.row(j), f1.row(j));
        }
        assert_ne!(f0.row(5), f1.row(5));
    }

    struct ConvProbe {
        layer: ConvLayer,
        input: Parameter,
        ids: Vec<usize>,
        c: Tensor,
    }

    impl ConvProbe {
        fn repr(&self) -> InputRepr {
            InputRepr { rows: self.input.value.clone(), ids: self.ids.clone() }
        }
    }

    impl crate::numerics::Objective for ConvProbe {
        fn visit_params(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
            self.layer.visit_params(f);
            f(&mut self.input);
        }
        fn loss(&mut self) -> f64 {
            dot(self.c.data(), self.layer.forward(&self.repr()).unwrap().0.data())
        }
        fn loss_and_grad(&mut self) -> f64 {
            let repr = self.repr();
            let (out, cache) = self.layer.forward_cached(&repr).unwrap();
            let mut dx = Tensor::zeros(self.input.shape());
            self.layer.backward(&repr, &cache, &self.c, &mut dx);
            for (g, d) in self.input.grad.data_mut().iter_mut().zip(dx.data()) {
                *g += d;
            }
            dot(self.c.data(), out.data())
        }
    }

    #[test]
    fn conv_layer_gradients() {
        for (attention, mask_pads, tau) in [(true, false, 4), (true, true, 4), (false, false, 4), (true, false, 1)] {
            let mut r = rng();
            let mut layer = ConvLayer::new(3, 5, 4, attention, &mut r).unwrap();
            layer.mask_pads = mask_pads;
            let input = Parameter::new("input", Tensor::glorot(&[tau, 5], 1, 1, &mut r));
            let c = Tensor::glorot(&[tau, 4], 1, 1, &mut r);
            let mut probe = ConvProbe { layer, input, ids: vec![0; tau], c };
            let report = crate::numerics::check_gradients(&mut probe, Default::default());
            assert!(report.passed(), "attention {attention} mask {mask_pads} tau {tau}: {report}");
        }
    }
}
