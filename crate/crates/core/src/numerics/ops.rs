//! Scalar kernels shared by every layer. All reductions run left to right so
//! results are bit-reproducible.

use super::{NumericsError, Tensor};

/// Max-shifted softmax.
pub fn softmax(v: &[f64]) -> Result<Vec<f64>, NumericsError> {
    if v.is_empty() {
        return Err(NumericsError::Empty("softmax"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(NumericsError::NonFinite("softmax input".into()));
    }
    let mut out = v.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

/// Unchecked in-place softmax. Entries equal to `-inf` receive zero weight;
/// at least one entry must be finite.
pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in v.iter_mut() {
        *x /= total;
    }
}

/// `log Σ exp(v_i)`, max-shifted.
pub fn logsumexp(v: &[f64]) -> Result<f64, NumericsError> {
    if v.is_empty() {
        return Err(NumericsError::Empty("logsumexp"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(NumericsError::NonFinite("logsumexp input".into()));
    }
    Ok(logsumexp_unchecked(v))
}

/// Tolerates `-inf` entries; returns `-inf` when every entry is `-inf`.
pub fn logsumexp_unchecked(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let total = v.iter().fold(0.0, |acc, &x| acc + (x - max).exp());
    max + total.ln()
}

/// `W x + b` for a `rows × cols` matrix.
pub fn affine(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor, NumericsError> {
    let ws = w.shape();
    if ws.len() != 2 || x.shape().len() != 1 || ws[1] != x.len() {
        return Err(NumericsError::ShapeMismatch {
            op: "affine (W, x)",
            left: ws.to_vec(),
            right: x.shape().to_vec(),
        });
    }
    if b.shape() != [ws[0]] {
        return Err(NumericsError::ShapeMismatch {
            op: "affine (W, b)",
            left: ws.to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let mut out = b.data().to_vec();
    matvec_acc(w.data(), x.data(), &mut out);
    Tensor::vector(out)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

/// `out += W x`, with `W` row-major `out.len() × x.len()`.
pub fn matvec_acc(w: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    debug_assert_eq!(w.len(), out.len() * cols);
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += dot(row, x);
    }
}

/// `out += Wᵀ g`, with `W` row-major `g.len() × out.len()`.
pub fn matvec_t_acc(w: &[f64], g: &[f64], out: &mut [f64]) {
    let cols = out.len();
    debug_assert_eq!(w.len(), g.len() * cols);
    for (&gi, row) in g.iter().zip(w.chunks_exact(cols)) {
        if gi == 0.0 {
            continue;
        }
        for (o, &wij) in out.iter_mut().zip(row) {
            *o += wij * gi;
        }
    }
}

/// `grad += g xᵀ`, with `grad` row-major `g.len() × x.len()`.
pub fn outer_acc(g: &[f64], x: &[f64], grad: &mut [f64]) {
    let cols = x.len();
    debug_assert_eq!(grad.len(), g.len() * cols);
    for (&gi, row) in g.iter().zip(grad.chunks_exact_mut(cols)) {
        if gi == 0.0 {
            continue;
        }
        for (r, &xj) in row.iter_mut().zip(x) {
            *r += gi * xj;
        }
    }
}

/// `dst += scale * src`.
pub fn axpy(scale: f64, src: &[f64], dst: &mut [f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += scale * s;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
