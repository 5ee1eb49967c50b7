//! Scalar constants and functionals of the concavity machinery: the Poincare
//! constant, sigma, the J and F functionals, the blow-up constants M and T*,
//! and finite-difference utilities for the recorded monitor series.

use crate::error::{Error, Result};
use crate::grid::{horizontal_energy_p, ScalarField, DEFAULT_EPS};
use crate::nonlinearity::Nonlinearity;

/// Time-stamped monitor values with strictly increasing times.
#[derive(Debug, Clone)]
pub struct TimeSeries {
    pub name: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(name: &str) -> Self {
        TimeSeries { name: name.into(), times: Vec::new(), values: Vec::new() }
    }

    pub fn push(&mut self, t: f64, v: f64) {
        if let Some(&last) = self.times.last() {
            assert!(t > last, "times must be strictly increasing ({t} after {last})");
        }
        self.times.push(t);
        self.values.push(v);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Running value M + int_0^t integrand dtau, accumulated by trapezoid at every
/// accepted step so the concavity check sees the same integral the estimates
/// differentiate.
#[derive(Debug, Clone)]
pub struct EnergyLedger {
    pub offset: f64,
    cum: f64,
    last: Option<(f64, f64)>,
}

impl EnergyLedger {
    pub fn new(offset: f64) -> Self {
        EnergyLedger { offset, cum: 0.0, last: None }
    }

    /// Advance to time t with the integrand value v; returns the ledger value.
    pub fn push(&mut self, t: f64, v: f64) -> f64 {
        if let Some((t0, v0)) = self.last {
            self.cum += 0.5 * (t - t0) * (v + v0);
        }
        self.last = Some((t, v));
        self.offset + self.cum
    }

    pub fn value(&self) -> f64 {
        self.offset + self.cum
    }
}

/// Poincare constant |N1 - p|^p / (pR)^p of the horizontal gradient inequality.
pub fn poincare_constant(n1: usize, p: f64, r: f64) -> Result<f64> {
    if !(p > 1.0) {
        return Err(Error::InvalidExponent(p));
    }
    if p == n1 as f64 {
        return Err(Error::ExcludedExponent { p, n1 });
    }
    if !(r > 0.0) {
        return Err(Error::InvalidRadius(r));
    }
    Ok((n1 as f64 - p).abs().powf(p) / (p * r).powf(p))
}

/// sigma = sqrt(pm alpha)/(m+1) - 1, positive whenever alpha > m+1.
pub fn sigma_pme(p: f64, m: f64, alpha: f64) -> Result<f64> {
    if alpha <= m + 1.0 {
        return Err(Error::HypothesisViolation(format!(
            "alpha = {alpha} must exceed m+1 = {}",
            m + 1.0
        )));
    }
    let sigma = (p * m * alpha).sqrt() / (m + 1.0) - 1.0;
    if sigma <= 0.0 {
        return Err(Error::HypothesisViolation(format!("sigma = {sigma} <= 0 (alpha too small)")));
    }
    Ok(sigma)
}

/// sigma = sqrt(alpha/2) - 1, positive whenever alpha > 2.
pub fn sigma_pp(alpha: f64) -> Result<f64> {
    if alpha <= 2.0 {
        return Err(Error::HypothesisViolation(format!("alpha = {alpha} must exceed 2")));
    }
    Ok((alpha / 2.0).sqrt() - 1.0)
}

/// J(u) = -1/(m+1) int |grad_H u^m|^p + int (F(u) - gamma), with the
/// operator-compatible gradient energy and nodal powers.
pub fn j_functional(u: &ScalarField, p: f64, m: f64, gamma: f64, nl: &Nonlinearity) -> Result<f64> {
    let v = u.powm(m);
    let grad_term = horizontal_energy_p(&v, p, DEFAULT_EPS)?;
    let mut fu = ScalarField::zeros(u.grid());
    for (out, &val) in fu.values.iter_mut().zip(&u.values) {
        *out = nl.eval_f_pme(val.max(0.0), p, m)? - gamma;
    }
    Ok(-grad_term / (m + 1.0) + fu.integrate())
}

/// F(u) = -(1/p) int |grad_H u|^p + int (F(u) - gamma) for the
/// pseudo-parabolic problem.
pub fn f_functional_pp(u: &ScalarField, p: f64, gamma: f64, nl: &Nonlinearity) -> Result<f64> {
    let grad_term = horizontal_energy_p(u, p, DEFAULT_EPS)?;
    let mut fu = ScalarField::zeros(u.grid());
    for (out, &val) in fu.values.iter_mut().zip(&u.values) {
        *out = nl.eval_f_pp(val.max(0.0))? - gamma;
    }
    Ok(-grad_term / p + fu.integrate())
}

/// M = (1+sigma)(1+1/sigma) I0^2 / (alpha (m+1) J0), the ledger offset that
/// makes the concavity estimate close.
pub fn big_m_pme(j0: f64, sigma: f64, alpha: f64, m: f64, i0: f64) -> Result<f64> {
    if !(j0 > 0.0) {
        return Err(Error::HypothesisViolation(format!("J0 = {j0} must be positive")));
    }
    if !(sigma > 0.0) {
        return Err(Error::HypothesisViolation(format!("sigma = {sigma} must be positive")));
    }
    if !(i0 > 0.0) {
        return Err(Error::HypothesisViolation(format!("I0 = {i0} must be positive")));
    }
    Ok((1.0 + sigma) * (1.0 + 1.0 / sigma) * i0 * i0 / (alpha * (m + 1.0) * j0))
}

/// Blow-up horizon T* = M / (sigma I0).
pub fn t_star_pme(big_m: f64, sigma: f64, i0: f64) -> Result<f64> {
    if !(sigma > 0.0) || !(i0 > 0.0) || !(big_m > 0.0) {
        return Err(Error::HypothesisViolation(format!(
            "T* needs positive M, sigma, I0 (got {big_m}, {sigma}, {i0})"
        )));
    }
    Ok(big_m / (sigma * i0))
}

/// M = (1+sigma)(1+1/sigma) I0^2 / (2 alpha F0) with
/// I0 = int u0^2 + (2/p) int |grad_H u0|^p.
pub fn big_m_pp(f0: f64, sigma: f64, alpha: f64, i0: f64) -> Result<f64> {
    if !(f0 > 0.0) {
        return Err(Error::HypothesisViolation(format!("F0 = {f0} must be positive")));
    }
    if !(sigma > 0.0) {
        return Err(Error::HypothesisViolation(format!("sigma = {sigma} must be positive")));
    }
    if !(i0 > 0.0) {
        return Err(Error::HypothesisViolation(format!("I0 = {i0} must be positive")));
    }
    Ok((1.0 + sigma) * (1.0 + 1.0 / sigma) * i0 * i0 / (2.0 * alpha * f0))
}

pub fn t_star_pp(big_m: f64, sigma: f64, i0: f64) -> Result<f64> {
    t_star_pme(big_m, sigma, i0)
}

/// Finite-difference weights on arbitrary nodes (Fornberg's recurrence):
/// returns w[d][j] so that f^(d)(x0) ~ sum_j w[d][j] f(x[j]) for every
/// derivative order d <= max_order.
pub fn fornberg_weights(xs: &[f64], x0: f64, max_order: usize) -> Vec<Vec<f64>> {
    let n = xs.len();
    let m = max_order;
    let mut c = vec![vec![0.0; n]; m + 1];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

fn stencil_derivative(s: &TimeSeries, idx: usize, order: usize) -> f64 {
    let n = s.len();
    // centered 3-point inside; one-sided second-order stencils at the ends
    // (4 points for the second derivative)
    let (lo, hi) = if idx == 0 {
        (0, (2 + order).min(n - 1))
    } else if idx == n - 1 {
        (n - 1 - (2 + order).min(n - 1), n - 1)
    } else {
        (idx - 1, idx + 1)
    };
    let xs = &s.times[lo..=hi];
    let w = fornberg_weights(xs, s.times[idx], order);
    w[order]
        .iter()
        .zip(&s.values[lo..=hi])
        .map(|(c, v)| c * v)
        .sum()
}

/// First derivative of a recorded series: centered inside, one-sided at the
/// ends, second-order on smoothly varying (possibly non-uniform) time grids.
pub fn derivative_series(s: &TimeSeries) -> Result<TimeSeries> {
    if s.len() < 5 {
        return Err(Error::InsufficientData { len: s.len(), need: 5 });
    }
    let mut out = TimeSeries::new(&format!("d({})", s.name));
    for i in 0..s.len() {
        out.push(s.times[i], stencil_derivative(s, i, 1));
    }
    Ok(out)
}

/// Second derivative with the same stencil policy.
pub fn second_derivative_series(s: &TimeSeries) -> Result<TimeSeries> {
    if s.len() < 5 {
        return Err(Error::InsufficientData { len: s.len(), need: 5 });
    }
    let mut out = TimeSeries::new(&format!("d2({})", s.name));
    for i in 0..s.len() {
        out.push(s.times[i], stencil_derivative(s, i, 2));
    }
    Ok(out)
}

/// min over samples of E''(t)E(t) - (1+sigma) E'(t)^2, the quantity whose
/// nonnegativity drives the finite-time blow-up argument.
pub fn concavity_margin(e: &TimeSeries, sigma: f64) -> Result<f64> {
    let d1 = derivative_series(e)?;
    let d2 = second_derivative_series(e)?;
    let mut margin = f64::INFINITY;
    for i in 0..e.len() {
        let m = d2.values[i] * e.values[i] - (1.0 + sigma) * d1.values[i] * d1.values[i];
        margin = margin.min(m);
    }
    Ok(margin)
}

/// max over samples of |E''(t)E(t)|, the scale used in concavity tolerances.
pub fn concavity_scale(e: &TimeSeries) -> Result<f64> {
    let d2 = second_derivative_series(e)?;
    Ok(d2
        .values
        .iter()
        .zip(&e.values)
        .map(|(a, b)| (a * b).abs())
        .fold(0.0, f64::max))
}
