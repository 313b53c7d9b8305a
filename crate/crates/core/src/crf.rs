//! Linear-chain CRF with virtual START and STOP states.
//!
//! Transition scores live in a `(|Y|+2) × (|Y|+2)` matrix; index `|Y|` is
//! START and `|Y|+1` is STOP. Entries leading into START or out of STOP are
//! never read, so they behave as `−∞`.

use rand::Rng;

use crate::numerics::{logsumexp_unchecked, matvec_acc, matvec_t_acc, outer_acc, NumericsError, Parameter, Tensor};
use crate::Error;

/// Largest label-sequence count [`brute_force_partition`] will enumerate.
pub const BRUTE_FORCE_LIMIT: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Crf {
    /// `|Y| × d_in` emission weights.
    pub emission: Parameter,
    pub transitions: Parameter,
}

impl Crf {
    pub fn new(num_labels: usize, d_in: usize, rng: &mut impl Rng) -> Self {
        Self {
            emission: Parameter::new("crf.emission", Tensor::glorot(&[num_labels, d_in], d_in, num_labels, rng)),
            transitions: Parameter::zeros("crf.transitions", &[num_labels + 2, num_labels + 2]),
        }
    }

    pub fn num_labels(&self) -> usize {
        self.emission.shape()[0]
    }

    pub fn start(&self) -> usize {
        self.num_labels()
    }

    pub fn stop(&self) -> usize {
        self.num_labels() + 1
    }

    #[inline]
    pub fn transition(&self, from: usize, to: usize) -> f64 {
        self.transitions.value.data()[from * (self.num_labels() + 2) + to]
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        f(&mut self.emission);
        f(&mut self.transitions);
    }

    fn check(&self, e: &Tensor) -> Result<(), Error> {
        if e.shape().len() != 2 || e.shape()[1] != self.num_labels() {
            return Err(Error::Numerics(NumericsError::ShapeMismatch {
                op: "crf (emissions, labels)",
                left: e.shape().to_vec(),
                right: vec![self.num_labels()],
            }));
        }
        Ok(())
    }

    fn check_tags(&self, e: &Tensor, tags: &[usize]) -> Result<(), Error> {
        self.check(e)?;
        if tags.len() != e.rows() {
            return Err(Error::Config(format!("{} tags for {} positions", tags.len(), e.rows())));
        }
        if let Some(&bad) = tags.iter().find(|&&t| t >= self.num_labels()) {
            return Err(Error::InvalidLabel(bad));
        }
        Ok(())
    }
}

/// Allowed transitions for constrained decoding, same layout as the
/// transition matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionMask {
    size: usize,
    allowed: Vec<bool>,
}

impl TransitionMask {
    pub fn new(num_labels: usize, allowed: impl Fn(usize, usize) -> bool) -> Self {
        let size = num_labels + 2;
        let allowed = (0..size * size).map(|i| allowed(i / size, i % size)).collect();
        Self { size, allowed }
    }

    fn get(&self, from: usize, to: usize) -> bool {
        self.allowed[from * self.size + to]
    }
}

/// `emissions[i][y] = W^y · H_i`.
pub fn emissions(h: &Tensor, crf: &Crf) -> Result<Tensor, Error> {
    let d_in = crf.emission.shape()[1];
    if h.shape().len() != 2 || h.shape()[1] != d_in {
        return Err(Error::Numerics(NumericsError::ShapeMismatch {
            op: "emissions (W_CRF, H)",
            left: crf.emission.shape().to_vec(),
            right: h.shape().to_vec(),
        }));
    }
    let mut e = Tensor::zeros(&[h.rows(), crf.num_labels()]);
    for i in 0..h.rows() {
        matvec_acc(crf.emission.value.data(), h.row(i), e.row_mut(i));
    }
    Ok(e)
}

pub fn sequence_score(e: &Tensor, crf: &Crf, tags: &[usize]) -> Result<f64, Error> {
    crf.check_tags(e, tags)?;
    Ok(score_unchecked(e, crf, tags))
}

fn score_unchecked(e: &Tensor, crf: &Crf, tags: &[usize]) -> f64 {
    let mut total = 0.0;
    let mut prev = crf.start();
    for (i, &y) in tags.iter().enumerate() {
        total += e.row(i)[y] + crf.transition(prev, y);
        prev = y;
    }
    total + crf.transition(prev, crf.stop())
}

/// Log-space forward variables, `τ × |Y|`.
fn forward_vars(e: &Tensor, crf: &Crf) -> Vec<Vec<f64>> {
    let n = crf.num_labels();
    let mut alpha: Vec<Vec<f64>> = Vec::with_capacity(e.rows());
    alpha.push((0..n).map(|y| e.row(0)[y] + crf.transition(crf.start(), y)).collect());
    let mut buf = vec![0.0; n];
    for i in 1..e.rows() {
        let prev = &alpha[i - 1];
        let row = (0..n)
            .map(|y| {
                for (yp, b) in buf.iter_mut().enumerate() {
                    *b = prev[yp] + crf.transition(yp, y);
                }
                logsumexp_unchecked(&buf) + e.row(i)[y]
            })
            .collect();
        alpha.push(row);
    }
    alpha
}

fn finish(alpha_last: &[f64], crf: &Crf) -> f64 {
    let last: Vec<f64> = alpha_last.iter().enumerate().map(|(y, a)| a + crf.transition(y, crf.stop())).collect();
    logsumexp_unchecked(&last)
}

pub fn log_partition(e: &Tensor, crf: &Crf) -> Result<f64, Error> {
    crf.check(e)?;
    if e.rows() == 0 {
        return Err(Error::EmptySentence);
    }
    let alpha = forward_vars(e, crf);
    Ok(finish(alpha.last().unwrap(), crf))
}

pub fn neg_log_likelihood(e: &Tensor, crf: &Crf, gold: &[usize]) -> Result<f64, Error> {
    let score = sequence_score(e, crf, gold)?;
    Ok(log_partition(e, crf)? - score)
}

/// Negative log-likelihood and its gradient with respect to the emissions.
/// Transition gradients are accumulated into `crf.transitions.grad`.
pub fn nll_backward(e: &Tensor, crf: &mut Crf, gold: &[usize]) -> Result<(f64, Tensor), Error> {
    crf.check_tags(e, gold)?;
    let n = crf.num_labels();
    let tau = e.rows();
    let (start, stop) = (crf.start(), crf.stop());
    let alpha = forward_vars(e, crf);
    let log_z = finish(&alpha[tau - 1], crf);

    let mut beta = vec![vec![0.0; n]; tau];
    for (y, b) in beta[tau - 1].iter_mut().enumerate() {
        *b = crf.transition(y, stop);
    }
    let mut buf = vec![0.0; n];
    for i in (0..tau - 1).rev() {
        for y in 0..n {
            for (yn, b) in buf.iter_mut().enumerate() {
                *b = crf.transition(y, yn) + e.row(i + 1)[yn] + beta[i + 1][yn];
            }
            beta[i][y] = logsumexp_unchecked(&buf);
        }
    }

    let size = n + 2;
    let mut de = Tensor::zeros(e.shape());
    let mut dt = vec![0.0; size * size];
    for i in 0..tau {
        let row = de.row_mut(i);
        for y in 0..n {
            row[y] = (alpha[i][y] + beta[i][y] - log_z).exp();
        }
        row[gold[i]] -= 1.0;
    }
    for y in 0..n {
        dt[start * size + y] += (alpha[0][y] + beta[0][y] - log_z).exp();
        dt[y * size + stop] += (alpha[tau - 1][y] + beta[tau - 1][y] - log_z).exp();
    }
    for i in 1..tau {
        for a in 0..n {
            for b in 0..n {
                let lp = alpha[i - 1][a] + crf.transition(a, b) + e.row(i)[b] + beta[i][b] - log_z;
                dt[a * size + b] += lp.exp();
            }
        }
    }
    let mut prev = start;
    for &y in gold {
        dt[prev * size + y] -= 1.0;
        prev = y;
    }
    dt[prev * size + stop] -= 1.0;
    for (g, d) in crf.transitions.grad.data_mut().iter_mut().zip(&dt) {
        *g += d;
    }
    let loss = log_z - score_unchecked(e, crf, gold);
    Ok((loss, de))
}

/// Backprop from emission gradients into `W_CRF`; returns `∂L/∂H`.
pub fn emissions_backward(h: &Tensor, crf: &mut Crf, de: &Tensor) -> Tensor {
    let mut dh = Tensor::zeros(h.shape());
    for i in 0..h.rows() {
        outer_acc(de.row(i), h.row(i), crf.emission.grad.data_mut());
        matvec_t_acc(crf.emission.value.data(), de.row(i), dh.row_mut(i));
    }
    dh
}

/// Highest-scoring label sequence and its score. Ties go to the lowest
/// label index, both for the final label and at each backtrack step.
pub fn viterbi_decode(e: &Tensor, crf: &Crf) -> Result<(Vec<usize>, f64), Error> {
    viterbi_decode_masked(e, crf, None)
}

pub fn viterbi_decode_masked(e: &Tensor, crf: &Crf, mask: Option<&TransitionMask>) -> Result<(Vec<usize>, f64), Error> {
    crf.check(e)?;
    let tau = e.rows();
    if tau == 0 {
        return Err(Error::EmptySentence);
    }
    let n = crf.num_labels();
    let trans = |a: usize, b: usize| match mask {
        Some(m) if !m.get(a, b) => f64::NEG_INFINITY,
        _ => crf.transition(a, b),
    };
    let mut delta: Vec<f64> = (0..n).map(|y| e.row(0)[y] + trans(crf.start(), y)).collect();
    let mut back = vec![vec![0usize; n]; tau];
    for i in 1..tau {
        let mut next = vec![0.0; n];
        for y in 0..n {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for (yp, d) in delta.iter().enumerate() {
                let s = d + trans(yp, y);
                if s > best {
                    best = s;
                    arg = yp;
                }
            }
            next[y] = best + e.row(i)[y];
            back[i][y] = arg;
        }
        delta = next;
    }
    let mut best = f64::NEG_INFINITY;
    let mut last = 0;
    for (y, d) in delta.iter().enumerate() {
        let s = d + trans(y, crf.stop());
        if s > best {
            best = s;
            last = y;
        }
    }
    let mut tags = vec![last; tau];
    for i in (1..tau).rev() {
        tags[i - 1] = back[i][tags[i]];
    }
    if best == f64::NEG_INFINITY {
        return Err(Error::Numeric("no label sequence satisfies the transition constraints".into()));
    }
    let score = score_unchecked(e, crf, &tags);
    Ok((tags, score))
}

/// Calls `f` on every label sequence of length `tau` in lexicographic order.
pub fn enumerate_sequences(num_labels: usize, tau: usize, mut f: impl FnMut(&[usize])) {
    let mut seq = vec![0usize; tau];
    loop {
        f(&seq);
        let mut i = tau;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            seq[i] += 1;
            if seq[i] < num_labels {
                break;
            }
            seq[i] = 0;
        }
    }
}

/// `log Σ_y exp(score(y))` by explicit enumeration.
pub fn brute_force_partition(e: &Tensor, crf: &Crf) -> Result<f64, Error> {
    crf.check(e)?;
    let count = (crf.num_labels() as f64).powi(e.rows() as i32);
    if count > BRUTE_FORCE_LIMIT as f64 {
        return Err(Error::Config(format!("{count} label sequences exceed the enumeration limit")));
    }
    let mut scores = Vec::with_capacity(count as usize);
    enumerate_sequences(crf.num_labels(), e.rows(), |seq| scores.push(score_unchecked(e, crf, seq)));
    Ok(logsumexp_unchecked(&scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn crf_with(n: usize, trans: Vec<f64>) -> Crf {
        Crf {
            emission: Parameter::zeros("w", &[n, 1]),
            transitions: Parameter::new("t", Tensor::matrix(n + 2, n + 2, trans).unwrap()),
        }
    }

    fn random_instance(rng: &mut ChaCha8Rng, tau: usize, n: usize) -> (Tensor, Crf) {
        let e = Tensor::glorot(&[tau, n], 1, 1, rng);
        let mut crf = Crf::new(n, 1, rng);
        crf.transitions.value = Tensor::glorot(&[n + 2, n + 2], 1, 1, rng);
        (e, crf)
    }

    #[test]
    fn emissions_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = Tensor::glorot(&[3, 4], 1, 1, &mut rng);
        let mut crf = Crf::new(2, 4, &mut rng);
        let e = emissions(&h, &crf).unwrap();
        for i in 0..3 {
            for y in 0..2 {
                let expect: f64 = (0..4).map(|d| crf.emission.value.data()[y * 4 + d] * h.row(i)[d]).sum();
                assert!((e.row(i)[y] - expect).abs() < 1e-15);
            }
        }
        crf.emission.value.fill(0.0);
        assert!(emissions(&h, &crf).unwrap().data().iter().all(|&x| x == 0.0));
        let single = Crf::new(1, 4, &mut rng);
        assert_eq!(emissions(&h, &single).unwrap().shape(), &[3, 1]);
        assert!(emissions(&Tensor::zeros(&[3, 2]), &single).is_err());
    }

    #[test]
    fn score_examples() {
        let crf = crf_with(2, vec![0.0; 16]);
        assert_eq!(sequence_score(&Tensor::zeros(&[3, 2]), &crf, &[0, 1, 0]).unwrap(), 0.0);

        // τ=2, |Y|=2 by hand: START=2, STOP=3.
        let t: Vec<f64> = (0..16).map(|i| 0.1 * i as f64 - 0.7).collect();
        let crf = crf_with(2, t.clone());
        let e = Tensor::matrix(2, 2, vec![0.3, -1.1, 0.8, 0.25]).unwrap();
        let s = sequence_score(&e, &crf, &[1, 0]).unwrap();
        let expect = -1.1 + t[2 * 4 + 1] + 0.8 + t[4] + t[3];
        assert!((s - expect).abs() < 1e-15);

        let e1 = Tensor::matrix(1, 2, vec![0.3, -1.1]).unwrap();
        let s1 = sequence_score(&e1, &crf, &[0]).unwrap();
        assert!((s1 - (0.3 + t[2 * 4] + t[3])).abs() < 1e-15);

        assert!(matches!(sequence_score(&e, &crf, &[0, 2]), Err(Error::InvalidLabel(2))));
    }

    #[test]
    fn partition_examples() {
        let crf = crf_with(2, vec![0.0; 16]);
        let z = log_partition(&Tensor::zeros(&[2, 2]), &crf).unwrap();
        assert!((z - 4f64.ln()).abs() < 1e-15);
        let z = brute_force_partition(&Tensor::zeros(&[3, 2]), &crf).unwrap();
        assert!((z - 8f64.ln()).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (e, crf) = random_instance(&mut rng, 1, 3);
        let direct: Vec<f64> = (0..3).map(|y| e.row(0)[y] + crf.transition(3, y) + crf.transition(y, 4)).collect();
        let z = log_partition(&e, &crf).unwrap();
        assert!((z - logsumexp_unchecked(&direct)).abs() < 1e-15);
        assert_eq!(z, brute_force_partition(&e, &crf).unwrap());
    }

    #[test]
    fn brute_force_limit() {
        let crf = crf_with(10, vec![0.0; 144]);
        assert!(brute_force_partition(&Tensor::zeros(&[7, 10]), &crf).is_err());
    }

    #[test]
    fn nll_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (e, crf) = random_instance(&mut rng, 4, 1);
        assert!(neg_log_likelihood(&e, &crf, &[0; 4]).unwrap().abs() < 1e-12);

        let (e, crf) = random_instance(&mut rng, 3, 3);
        let gold = [2, 0, 1];
        let z = brute_force_partition(&e, &crf).unwrap();
        let p = (sequence_score(&e, &crf, &gold).unwrap() - z).exp();
        assert!((neg_log_likelihood(&e, &crf, &gold).unwrap() + p.ln()).abs() < 1e-10);
    }

    #[test]
    fn viterbi_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (e, crf) = random_instance(&mut rng, 1, 3);
        let (tags, _) = viterbi_decode(&e, &crf).unwrap();
        let best = (0..3)
            .max_by(|&a, &b| {
                let f = |y: usize| e.row(0)[y] + crf.transition(3, y) + crf.transition(y, 4);
                f(a).partial_cmp(&f(b)).unwrap()
            })
            .unwrap();
        assert_eq!(tags, vec![best]);

        let mut t = vec![0.0; 25];
        for y in 0..3 {
            t[y * 5 + y] = 1.0;
        }
        let crf = crf_with(3, t);
        let (tags, score) = viterbi_decode(&Tensor::zeros(&[4, 3]), &crf).unwrap();
        assert_eq!(tags, vec![0; 4]);
        assert_eq!(score, 3.0);
    }

    #[test]
    fn masked_viterbi_avoids_forbidden_transitions() {
        let mut e = Tensor::zeros(&[2, 2]);
        e.row_mut(1)[1] = 5.0;
        let crf = crf_with(2, vec![0.0; 16]);
        // Forbid 0 -> 1 and START -> 1.
        let mask = TransitionMask::new(2, |a, b| !((a == 0 || a == 2) && b == 1));
        let (tags, _) = viterbi_decode_masked(&e, &crf, Some(&mask)).unwrap();
        assert_eq!(tags, vec![0, 0]);
        let (tags, _) = viterbi_decode(&e, &crf).unwrap();
        assert_eq!(tags, vec![0, 1]);
    }

    #[test]
    fn degenerate_transitions_give_zero_loss() {
        let big = -1e4;
        // Only START->0->1->STOP is possible in practice.
        let mut t = vec![big; 16];
        t[2 * 4] = 0.0;
        t[1] = 0.0;
        t[4 + 3] = 0.0;
        let crf = crf_with(2, t);
        let e = Tensor::zeros(&[2, 2]);
        let (tags, _) = viterbi_decode(&e, &crf).unwrap();
        assert_eq!(tags, vec![0, 1]);
        assert!(neg_log_likelihood(&e, &crf, &tags).unwrap().abs() < 1e-10);
    }

    #[test]
    fn enumeration_order() {
        let mut seen = Vec::new();
        enumerate_sequences(2, 2, |s| seen.push(s.to_vec()));
        assert_eq!(seen, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
    }

    struct CrfProbe {
        crf: Crf,
        h: Parameter,
        gold: Vec<usize>,
    }

    impl crate::numerics::Objective for CrfProbe {
        fn visit_params(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
            self.crf.visit_params(f);
            f(&mut self.h);
        }
        fn loss(&mut self) -> f64 {
            let e = emissions(&self.h.value, &self.crf).unwrap();
            neg_log_likelihood(&e, &self.crf, &self.gold).unwrap()
        }
        fn loss_and_grad(&mut self) -> f64 {
            let e = emissions(&self.h.value, &self.crf).unwrap();
            let (loss, de) = nll_backward(&e, &mut self.crf, &self.gold).unwrap();
            let dh = emissions_backward(&self.h.value, &mut self.crf, &de);
            for (g, d) in self.h.grad.data_mut().iter_mut().zip(dh.data()) {
                *g += d;
            }
            loss
        }
    }

    #[test]
    fn nll_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for (tau, n) in [(1, 1), (1, 3), (4, 3), (5, 4)] {
            let mut crf = Crf::new(n, 3, &mut rng);
            for v in crf.transitions.value.data_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
            let h = Parameter::new("h", Tensor::glorot(&[tau, 3], 1, 1, &mut rng));
            let gold = (0..tau).map(|i| (i * 7 + 1) % n).collect();
            let report = crate::numerics::check_gradients(&mut CrfProbe { crf, h, gold }, Default::default());
            assert!(report.passed(), "tau {tau} labels {n}: {report}");
        }
    }
}
