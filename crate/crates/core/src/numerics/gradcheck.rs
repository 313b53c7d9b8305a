//! Central finite-difference verification of analytic gradients.

use std::fmt;

use super::Parameter;

/// A scalar loss over a set of parameters that can also report its exact
/// gradient.
pub trait Objective {
    /// Visits every parameter in a fixed order.
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Parameter));

    /// Evaluates the loss without touching gradients.
    fn loss(&mut self) -> f64;

    /// Evaluates the loss and adds its gradient into every parameter's `grad`.
    fn loss_and_grad(&mut self) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tol: f64,
    /// Denominator floor for the relative error, so that gradients that are
    /// zero up to rounding noise compare on an absolute scale.
    pub floor: f64,
    /// Check at most this many evenly strided elements per tensor.
    pub max_elements: Option<usize>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { step: 1e-5, tol: 1e-4, floor: 1e-5, max_elements: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tol: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.max_rel_error < self.tol)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ParamCheck> {
        self.params.iter().filter(|p| p.max_rel_error >= self.tol)
    }

    pub fn worst(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.params {
            let status = if p.max_rel_error < self.tol { "ok" } else { "FAIL" };
            writeln!(
                f,
                "{:<28} {:>6} elems  max_rel_err={:.3e}  (analytic={:.6e} numeric={:.6e} at {})  {status}",
                p.name, p.checked, p.max_rel_error, p.analytic, p.numeric, p.worst_index
            )?;
        }
        Ok(())
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs()).max(floor)
}

fn nth_param<R>(obj: &mut dyn Objective, index: usize, f: impl FnOnce(&mut Parameter) -> R) -> R {
    let mut f = Some(f);
    let mut out = None;
    let mut i = 0;
    obj.visit_params(&mut |p| {
        if i == index {
            out = Some((f.take().unwrap())(p));
        }
        i += 1;
    });
    out.expect("parameter index out of range")
}

/// Compares analytic gradients with `(f(x+h) − f(x−h)) / 2h`, element-wise.
pub fn check_gradients(obj: &mut dyn Objective, opts: GradCheckOptions) -> GradCheckReport {
    obj.visit_params(&mut |p| p.zero_grad());
    obj.loss_and_grad();

    let mut grads = Vec::new();
    obj.visit_params(&mut |p| grads.push((p.name().to_string(), p.grad.data().to_vec())));

    let mut report = GradCheckReport { tol: opts.tol, params: Vec::with_capacity(grads.len()) };
    for (pi, (name, analytic)) in grads.iter().enumerate() {
        let n = analytic.len();
        let stride = match opts.max_elements {
            Some(m) if m > 0 && m < n => n.div_ceil(m),
            _ => 1,
        };
        let mut check = ParamCheck {
            name: name.clone(),
            checked: 0,
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for e in (0..n).step_by(stride) {
            let orig = nth_param(obj, pi, |p| {
                let orig = p.value.data()[e];
                p.value.data_mut()[e] = orig + opts.step;
                orig
            });
            let plus = obj.loss();
            nth_param(obj, pi, |p| p.value.data_mut()[e] = orig - opts.step);
            let minus = obj.loss();
            nth_param(obj, pi, |p| p.value.data_mut()[e] = orig);

            let numeric = (plus - minus) / (2.0 * opts.step);
            let err = relative_error(analytic[e], numeric, opts.floor);
            check.checked += 1;
            if err > check.max_rel_error || !err.is_finite() {
                check.max_rel_error = if err.is_finite() { err } else { f64::INFINITY };
                check.worst_index = e;
                check.analytic = analytic[e];
                check.numeric = numeric;
            }
        }
        report.params.push(check);
    }
    obj.visit_params(&mut |p| p.zero_grad());
    report
}
