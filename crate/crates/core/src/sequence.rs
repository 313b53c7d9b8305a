//! Bidirectional GRU and sentence-level global self-attention.

use rand::Rng;

use crate::numerics::{dot, matvec_acc, matvec_t_acc, outer_acc, sigmoid, softmax_in_place, NumericsError, Parameter, Tensor};
use crate::Error;

/// One GRU direction. Gate blocks are stacked in the order update, reset,
/// candidate: `w` is `3 × d_dir × d_in`, `u` is `3 × d_dir × d_dir`, `b` is
/// `3 × d_dir`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub w: Parameter,
    pub u: Parameter,
    pub b: Parameter,
}

impl GruParams {
    pub fn new(prefix: &str, d_in: usize, d_dir: usize, rng: &mut impl Rng) -> Self {
        Self {
            w: Parameter::new(format!("{prefix}.w"), Tensor::glorot(&[3, d_dir, d_in], d_in, d_dir, rng)),
            u: Parameter::new(format!("{prefix}.u"), Tensor::glorot(&[3, d_dir, d_dir], d_dir, d_dir, rng)),
            b: Parameter::zeros(format!("{prefix}.b"), &[3, d_dir]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.shape()[2]
    }

    pub fn hidden_dim(&self) -> usize {
        self.w.shape()[1]
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        f(&mut self.w);
        f(&mut self.u);
        f(&mut self.b);
    }
}

struct CellCache {
    z: Vec<f64>,
    r: Vec<f64>,
    cand: Vec<f64>,
    h_prev: Vec<f64>,
}

fn cell_forward(x: &[f64], h_prev: &[f64], p: &GruParams, h_out: &mut [f64]) -> CellCache {
    let d = p.hidden_dim();
    let d_in = x.len();
    let (w, u, b) = (p.w.value.data(), p.u.value.data(), p.b.value.data());

    let mut zr = b[..2 * d].to_vec();
    matvec_acc(&w[..2 * d * d_in], x, &mut zr);
    matvec_acc(&u[..2 * d * d], h_prev, &mut zr);
    zr.iter_mut().for_each(|v| *v = sigmoid(*v));
    let r = zr.split_off(d);
    let z = zr;

    let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
    let mut cand = b[2 * d..].to_vec();
    matvec_acc(&w[2 * d * d_in..], x, &mut cand);
    matvec_acc(&u[2 * d * d..], &rh, &mut cand);
    cand.iter_mut().for_each(|v| *v = v.tanh());

    for i in 0..d {
        h_out[i] = (1.0 - z[i]) * h_prev[i] + z[i] * cand[i];
    }
    CellCache { z, r, cand, h_prev: h_prev.to_vec() }
}

/// Backprop through one cell; adds into `dx` and overwrites `dh_prev`.
fn cell_backward(x: &[f64], c: &CellCache, dh: &[f64], p: &mut GruParams, dx: &mut [f64], dh_prev: &mut [f64]) {
    let d = p.hidden_dim();
    let d_in = x.len();
    let mut dpre_z = vec![0.0; d];
    let mut dpre_c = vec![0.0; d];
    for i in 0..d {
        dh_prev[i] = dh[i] * (1.0 - c.z[i]);
        let dz = dh[i] * (c.cand[i] - c.h_prev[i]);
        dpre_z[i] = dz * c.z[i] * (1.0 - c.z[i]);
        dpre_c[i] = dh[i] * c.z[i] * (1.0 - c.cand[i] * c.cand[i]);
    }
    let rh: Vec<f64> = c.r.iter().zip(&c.h_prev).map(|(a, b)| a * b).collect();
    let mut drh = vec![0.0; d];
    matvec_t_acc(&p.u.value.data()[2 * d * d..], &dpre_c, &mut drh);
    let mut dpre_r = vec![0.0; d];
    for i in 0..d {
        dh_prev[i] += drh[i] * c.r[i];
        dpre_r[i] = drh[i] * c.h_prev[i] * c.r[i] * (1.0 - c.r[i]);
    }

    let (wg, ug, bg) = (p.w.grad.data_mut(), p.u.grad.data_mut(), p.b.grad.data_mut());
    for (gate, dpre) in [&dpre_z, &dpre_r, &dpre_c].into_iter().enumerate() {
        outer_acc(dpre, x, &mut wg[gate * d * d_in..(gate + 1) * d * d_in]);
        let hin: &[f64] = if gate == 2 { &rh } else { &c.h_prev };
        outer_acc(dpre, hin, &mut ug[gate * d * d..(gate + 1) * d * d]);
        for (g, v) in bg[gate * d..(gate + 1) * d].iter_mut().zip(dpre) {
            *g += v;
        }
    }
    let (w, u) = (p.w.value.data(), p.u.value.data());
    for (gate, dpre) in [&dpre_z, &dpre_r, &dpre_c].into_iter().enumerate() {
        matvec_t_acc(&w[gate * d * d_in..(gate + 1) * d * d_in], dpre, dx);
    }
    matvec_t_acc(&u[..d * d], &dpre_z, dh_prev);
    matvec_t_acc(&u[d * d..2 * d * d], &dpre_r, dh_prev);
}

/// One GRU step.
pub fn gru_cell(x: &[f64], h_prev: &[f64], params: &GruParams) -> Result<Vec<f64>, Error> {
    if x.len() != params.input_dim() || h_prev.len() != params.hidden_dim() {
        return Err(Error::Numerics(NumericsError::ShapeMismatch {
            op: "gru_cell (w, [x; h_prev])",
            left: params.w.shape().to_vec(),
            right: vec![x.len(), h_prev.len()],
        }));
    }
    let mut h = vec![0.0; params.hidden_dim()];
    cell_forward(x, h_prev, params, &mut h);
    Ok(h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiGru {
    pub fwd: GruParams,
    pub bwd: GruParams,
}

pub(crate) struct BiGruCache {
    fwd: Vec<CellCache>,
    bwd: Vec<CellCache>,
}

impl BiGru {
    /// `d_h` is the concatenated output width and must be even.
    pub fn new(d_in: usize, d_h: usize, rng: &mut impl Rng) -> Result<Self, Error> {
        if d_h == 0 || d_h % 2 != 0 {
            return Err(Error::Config(format!("BiGRU width must be even and positive, got {d_h}")));
        }
        Ok(Self { fwd: GruParams::new("bigru.fwd", d_in, d_h / 2, rng), bwd: GruParams::new("bigru.bwd", d_in, d_h / 2, rng) })
    }

    pub fn out_dim(&self) -> usize {
        self.fwd.hidden_dim() + self.bwd.hidden_dim()
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        self.fwd.visit_params(f);
        self.bwd.visit_params(f);
    }

    pub fn forward(&self, features: &Tensor) -> Result<Tensor, Error> {
        Ok(self.forward_cached(features)?.0)
    }

    pub(crate) fn forward_cached(&self, features: &Tensor) -> Result<(Tensor, BiGruCache), Error> {
        if features.shape().len() != 2 || features.shape()[1] != self.fwd.input_dim() {
            return Err(Error::Numerics(NumericsError::ShapeMismatch {
                op: "bigru (w, features)",
                left: self.fwd.w.shape().to_vec(),
                right: features.shape().to_vec(),
            }));
        }
        let tau = features.rows();
        let d = self.fwd.hidden_dim();
        let mut out = Tensor::zeros(&[tau, 2 * d]);
        let mut h = vec![0.0; d];
        let mut fwd = Vec::with_capacity(tau);
        for j in 0..tau {
            let mut next = vec![0.0; d];
            fwd.push(cell_forward(features.row(j), &h, &self.fwd, &mut next));
            out.row_mut(j)[..d].copy_from_slice(&next);
            h = next;
        }
        let mut h = vec![0.0; d];
        let mut bwd = Vec::with_capacity(tau);
        for j in (0..tau).rev() {
            let mut next = vec![0.0; d];
            bwd.push(cell_forward(features.row(j), &h, &self.bwd, &mut next));
            out.row_mut(j)[d..].copy_from_slice(&next);
            h = next;
        }
        bwd.reverse();
        Ok((out, BiGruCache { fwd, bwd }))
    }

    /// Returns `∂L/∂features`.
    pub(crate) fn backward(&mut self, features: &Tensor, cache: &BiGruCache, dout: &Tensor) -> Tensor {
        let tau = features.rows();
        let d = self.fwd.hidden_dim();
        let mut dfeat = Tensor::zeros(features.shape());
        let mut carry = vec![0.0; d];
        let mut dh = vec![0.0; d];
        let mut dprev = vec![0.0; d];
        for j in (0..tau).rev() {
            for i in 0..d {
                dh[i] = dout.row(j)[i] + carry[i];
            }
            cell_backward(features.row(j), &cache.fwd[j], &dh, &mut self.fwd, dfeat.row_mut(j), &mut dprev);
            std::mem::swap(&mut carry, &mut dprev);
        }
        carry.fill(0.0);
        for j in 0..tau {
            for i in 0..d {
                dh[i] = dout.row(j)[d + i] + carry[i];
            }
            cell_backward(features.row(j), &cache.bwd[j], &dh, &mut self.bwd, dfeat.row_mut(j), &mut dprev);
            std::mem::swap(&mut carry, &mut dprev);
        }
        dfeat
    }
}

/// Additive self-attention across the whole sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalAttention {
    pub v: Parameter,
    pub w1: Parameter,
    pub w2: Parameter,
}

pub(crate) struct GlobalCache {
    /// `τ × τ × d_h`, `tanh(W1 h_j + W2 h_s)`.
    u: Vec<f64>,
    weights: Tensor,
}

impl GlobalAttention {
    pub fn new(d_h: usize, rng: &mut impl Rng) -> Self {
        Self {
            v: Parameter::new("global_attn.v", Tensor::glorot(&[d_h], d_h, 1, rng)),
            w1: Parameter::new("global_attn.w1", Tensor::glorot(&[d_h, d_h], d_h, d_h, rng)),
            w2: Parameter::new("global_attn.w2", Tensor::glorot(&[d_h, d_h], d_h, d_h, rng)),
        }
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        f(&mut self.v);
        f(&mut self.w1);
        f(&mut self.w2);
    }

    /// Returns `h^g` (`τ × d_h`) and the `τ × τ` weights, rows indexed by query.
    pub fn forward(&self, hr: &Tensor) -> Result<(Tensor, Tensor), Error> {
        let (hg, cache) = self.forward_cached(hr)?;
        Ok((hg, cache.weights))
    }

    pub(crate) fn forward_cached(&self, hr: &Tensor) -> Result<(Tensor, GlobalCache), Error> {
        let d = self.v.shape()[0];
        if hr.shape().len() != 2 || hr.shape()[1] != d {
            return Err(Error::Numerics(NumericsError::ShapeMismatch {
                op: "global attention (v, h^r)",
                left: vec![d],
                right: hr.shape().to_vec(),
            }));
        }
        let tau = hr.rows();
        let mut queries = vec![0.0; tau * d];
        let mut keys = vec![0.0; tau * d];
        for j in 0..tau {
            matvec_acc(self.w1.value.data(), hr.row(j), &mut queries[j * d..(j + 1) * d]);
            matvec_acc(self.w2.value.data(), hr.row(j), &mut keys[j * d..(j + 1) * d]);
        }
        let mut u = vec![0.0; tau * tau * d];
        let mut weights = Tensor::zeros(&[tau, tau]);
        let mut hg = Tensor::zeros(&[tau, d]);
        for j in 0..tau {
            let row = weights.row_mut(j);
            for s in 0..tau {
                let ujs = &mut u[(j * tau + s) * d..(j * tau + s + 1) * d];
                for i in 0..d {
                    ujs[i] = (queries[j * d + i] + keys[s * d + i]).tanh();
                }
                row[s] = dot(self.v.value.data(), ujs);
            }
            softmax_in_place(row);
            let out = hg.row_mut(j);
            for s in 0..tau {
                let a = weights.row(j)[s];
                for (o, h) in out.iter_mut().zip(hr.row(s)) {
                    *o += a * h;
                }
            }
        }
        Ok((hg, GlobalCache { u, weights }))
    }

    /// Accumulates parameter gradients and adds `∂L/∂h^r` into `dhr`.
    pub(crate) fn backward(&mut self, hr: &Tensor, cache: &GlobalCache, dhg: &Tensor, dhr: &mut Tensor) {
        let tau = hr.rows();
        let d = self.v.shape()[0];
        let mut dqueries = vec![0.0; tau * d];
        let mut dkeys = vec![0.0; tau * d];
        let mut dalpha = vec![0.0; tau];
        for j in 0..tau {
            let alpha = cache.weights.row(j);
            let g = dhg.row(j);
            for s in 0..tau {
                dalpha[s] = dot(g, hr.row(s));
                for (dh, gi) in dhr.row_mut(s).iter_mut().zip(g) {
                    *dh += alpha[s] * gi;
                }
            }
            let mean = dot(alpha, &dalpha);
            for s in 0..tau {
                let ds = alpha[s] * (dalpha[s] - mean);
                if ds == 0.0 {
                    continue;
                }
                let ujs = &cache.u[(j * tau + s) * d..(j * tau + s + 1) * d];
                let vg = self.v.grad.data_mut();
                for i in 0..d {
                    vg[i] += ds * ujs[i];
                    let dpre = ds * self.v.value.data()[i] * (1.0 - ujs[i] * ujs[i]);
                    dqueries[j * d + i] += dpre;
                    dkeys[s * d + i] += dpre;
                }
            }
        }
        for j in 0..tau {
            let dq = &dqueries[j * d..(j + 1) * d];
            let dk = &dkeys[j * d..(j + 1) * d];
            outer_acc(dq, hr.row(j), self.w1.grad.data_mut());
            outer_acc(dk, hr.row(j), self.w2.grad.data_mut());
            let row = dhr.row_mut(j);
            matvec_t_acc(self.w1.value.data(), dq, row);
            matvec_t_acc(self.w2.value.data(), dk, row);
        }
    }
}

pub fn global_self_attention(hr: &Tensor, params: &GlobalAttention) -> Result<(Tensor, Tensor), Error> {
    params.forward(hr)
}

/// Row-wise `[h^r; h^g]`.
pub fn concat_repr(hr: &Tensor, hg: &Tensor) -> Result<Tensor, Error> {
    if hr.shape() != hg.shape() || hr.shape().len() != 2 {
        return Err(Error::Numerics(NumericsError::ShapeMismatch {
            op: "concat_repr",
            left: hr.shape().to_vec(),
            right: hg.shape().to_vec(),
        }));
    }
    let (tau, d) = (hr.rows(), hr.row_len());
    let mut out = Tensor::zeros(&[tau, 2 * d]);
    for j in 0..tau {
        let row = out.row_mut(j);
        row[..d].copy_from_slice(hr.row(j));
        row[d..].copy_from_slice(hg.row(j));
    }
    Ok(out)
}

/// Inverse of [`concat_repr`].
pub fn split_repr(h: &Tensor) -> (Tensor, Tensor) {
    let (tau, d) = (h.rows(), h.row_len() / 2);
    let mut hr = Tensor::zeros(&[tau, d]);
    let mut hg = Tensor::zeros(&[tau, d]);
    for j in 0..tau {
        hr.row_mut(j).copy_from_slice(&h.row(j)[..d]);
        hg.row_mut(j).copy_from_slice(&h.row(j)[d..]);
    }
    (hr, hg)
}
