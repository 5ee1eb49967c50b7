//! Reaction terms f(u), their antiderivatives for both equations, and the
//! checker for the four (alpha, beta, gamma) hypothesis families.

use serde::Serialize;

use crate::error::{Error, Result};

/// Reaction term family. All variants satisfy f(0) = 0; the positivity
/// requirement f(u) > 0 for u > 0 is validated at construction except for
/// `Zero`, which exists only for validation/convergence runs and is never
/// certifiable.
#[derive(Debug, Clone, PartialEq)]
pub enum Nonlinearity {
    /// f(u) = c u^q with c > 0, q >= 1
    Power { c: f64, q: f64 },
    /// f(u) = c u / (1 + u^2)
    RationalSaturating { c: f64 },
    /// piecewise-linear over sampled (u, f(u)) knots, linearly continued
    /// beyond the last knot
    Tabulated { knots: Vec<(f64, f64)> },
    /// f = 0: oracle/validation mode only
    Zero,
}

impl Nonlinearity {
    pub fn power(c: f64, q: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::Range { key: "f.c".into(), msg: format!("need c > 0, got {c}") });
        }
        if !(q >= 1.0) {
            return Err(Error::Range { key: "f.q".into(), msg: format!("need q >= 1, got {q}") });
        }
        Ok(Nonlinearity::Power { c, q })
    }

    pub fn rational_saturating(c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::Range { key: "f.c".into(), msg: format!("need c > 0, got {c}") });
        }
        Ok(Nonlinearity::RationalSaturating { c })
    }

    pub fn tabulated(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidField("tabulated f needs at least 2 knots".into()));
        }
        if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidField("tabulated f knots must be strictly increasing in u".into()));
        }
        if knots[0] != (0.0, 0.0) {
            return Err(Error::InvalidField("tabulated f must start at the knot (0, 0)".into()));
        }
        if knots.iter().skip(1).any(|&(_, f)| f <= 0.0) {
            return Err(Error::InvalidField("tabulated f must be positive at every knot u > 0".into()));
        }
        Ok(Nonlinearity::Tabulated { knots })
    }

    /// Whether certificates may be issued for runs with this reaction term.
    pub fn certifiable(&self) -> bool {
        !matches!(self, Nonlinearity::Zero)
    }

    pub fn describe(&self) -> String {
        match self {
            Nonlinearity::Power { c, q } => format!("power:{c},{q}"),
            Nonlinearity::RationalSaturating { c } => format!("saturating:{c}"),
            Nonlinearity::Tabulated { knots } => format!("table[{} knots]", knots.len()),
            Nonlinearity::Zero => "none".into(),
        }
    }

    /// f(u) for u >= 0; exactly 0 at u = 0.
    pub fn eval_f(&self, u: f64) -> Result<f64> {
        if u < 0.0 {
            return Err(Error::DomainError(format!("f evaluated at negative state u = {u}")));
        }
        Ok(self.eval_f_unchecked(u))
    }

    #[inline]
    pub(crate) fn eval_f_unchecked(&self, u: f64) -> f64 {
        match self {
            Nonlinearity::Power { c, q } => {
                if u == 0.0 {
                    0.0
                } else {
                    c * u.powf(*q)
                }
            }
            Nonlinearity::RationalSaturating { c } => c * u / (1.0 + u * u),
            Nonlinearity::Tabulated { knots } => {
                if u == 0.0 {
                    return 0.0;
                }
                let last = knots.len() - 1;
                if u >= knots[last].0 {
                    // linear continuation with the final slope
                    let (u0, f0) = knots[last - 1];
                    let (u1, f1) = knots[last];
                    return f1 + (u - u1) * (f1 - f0) / (u1 - u0);
                }
                let i = knots.partition_point(|&(x, _)| x <= u).max(1);
                let (u0, f0) = knots[i - 1];
                let (u1, f1) = knots[i];
                f0 + (u - u0) * (f1 - f0) / (u1 - u0)
            }
            Nonlinearity::Zero => 0.0,
        }
    }

    /// df/du, used by the reaction part of the explicit time-step bound.
    pub fn df_du(&self, u: f64) -> f64 {
        let u = u.max(0.0);
        match self {
            Nonlinearity::Power { c, q } => {
                if u == 0.0 {
                    if *q == 1.0 {
                        *c
                    } else {
                        0.0
                    }
                } else {
                    c * q * u.powf(q - 1.0)
                }
            }
            Nonlinearity::RationalSaturating { c } => {
                let d = 1.0 + u * u;
                c * (1.0 - u * u) / (d * d)
            }
            Nonlinearity::Tabulated { knots } => {
                let last = knots.len() - 1;
                let i = if u >= knots[last].0 {
                    last
                } else {
                    knots.partition_point(|&(x, _)| x <= u).clamp(1, last)
                };
                let (u0, f0) = knots[i - 1];
                let (u1, f1) = knots[i];
                (f1 - f0) / (u1 - u0)
            }
            Nonlinearity::Zero => 0.0,
        }
    }

    /// Antiderivative for the porous-medium functional:
    /// F(u) = pm/(m+1) * int_0^u s^(m-1) f(s) ds.
    pub fn eval_f_pme(&self, u: f64, p: f64, m: f64) -> Result<f64> {
        if u < 0.0 {
            return Err(Error::DomainError(format!("F evaluated at negative state u = {u}")));
        }
        if !(m >= 1.0) {
            return Err(Error::Range { key: "m".into(), msg: format!("need m >= 1, got {m}") });
        }
        if !(p >= 2.0) {
            return Err(Error::UnsupportedExponent(p));
        }
        let scale = p * m / (m + 1.0);
        match self {
            Nonlinearity::Power { c, q } => {
                // int_0^u s^(m-1) c s^q ds = c u^(m+q) / (m+q)
                Ok(scale * c / (m + q) * u.powf(m + q))
            }
            Nonlinearity::RationalSaturating { c } if m == 1.0 => {
                // int_0^u c s/(1+s^2) ds = (c/2) ln(1+u^2)
                Ok(scale * 0.5 * c * (1.0 + u * u).ln())
            }
            Nonlinearity::Zero => Ok(0.0),
            _ => {
                let f = |s: f64| s.powf(m - 1.0) * self.eval_f_unchecked(s);
                Ok(scale * adaptive_simpson(&f, 0.0, u, 1e-12))
            }
        }
    }

    /// Antiderivative for the pseudo-parabolic functional: F(u) = int_0^u f.
    pub fn eval_f_pp(&self, u: f64) -> Result<f64> {
        if u < 0.0 {
            return Err(Error::DomainError(format!("F evaluated at negative state u = {u}")));
        }
        match self {
            Nonlinearity::Power { c, q } => Ok(c / (q + 1.0) * u.powf(q + 1.0)),
            Nonlinearity::RationalSaturating { c } => Ok(0.5 * c * (1.0 + u * u).ln()),
            Nonlinearity::Zero => Ok(0.0),
            Nonlinearity::Tabulated { .. } => {
                let f = |s: f64| self.eval_f_unchecked(s);
                Ok(adaptive_simpson(&f, 0.0, u, 1e-12))
            }
        }
    }
}

/// Adaptive Simpson quadrature with absolute/relative tolerance mixing.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth >= 48 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth + 1)
            + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth + 1)
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    let tol = tol * (1.0 + whole.abs());
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 0)
}

/// Which of the four hypothesis families a report certifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    PmeBlowup,
    PmeGlobal,
    PpBlowup,
    PpGlobal,
}

impl ConditionKind {
    pub fn is_blowup(self) -> bool {
        matches!(self, ConditionKind::PmeBlowup | ConditionKind::PpBlowup)
    }

    pub fn is_pme(self) -> bool {
        matches!(self, ConditionKind::PmeBlowup | ConditionKind::PmeGlobal)
    }
}

/// One side constraint with the numbers that went into it.
#[derive(Debug, Clone, Serialize)]
pub struct SideCheck {
    pub name: String,
    pub passed: bool,
    pub computed: f64,
    pub bound: f64,
}

/// Result of checking one (alpha, beta, gamma) hypothesis: side constraints
/// plus the oriented pointwise inequality sampled log-uniformly on (0, u_max].
#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub kind: ConditionKind,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub m: f64,
    pub p: f64,
    pub poincare_constant: f64,
    pub side_constraints: Vec<SideCheck>,
    pub holds: bool,
    pub worst_margin: f64,
    pub worst_u: f64,
    pub sample_u_max: f64,
    pub sample_count: usize,
    pub sample_scale: &'static str,
}

fn log_uniform_samples(u_max: f64, count: usize) -> Vec<f64> {
    let lo = 1e-8_f64.min(u_max * 1e-8);
    let (la, lb) = (lo.ln(), u_max.ln());
    (0..count)
        .map(|i| (la + (lb - la) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Evaluate the side constraints of `kind` and the oriented pointwise
/// inequality between alpha*F(u) and u^m f(u) + beta u^(pm) + alpha*gamma
/// (pme kinds) or u f(u) + beta u^p + alpha*gamma (pp kinds).
#[allow(clippy::too_many_arguments)]
pub fn check_condition(
    kind: ConditionKind,
    nl: &Nonlinearity,
    alpha: f64,
    beta: f64,
    gamma: f64,
    m: f64,
    p: f64,
    c_poincare: f64,
    u_max: f64,
    n_samples: usize,
) -> Result<ConditionReport> {
    if !(u_max > 0.0) {
        return Err(Error::Range { key: "u_max".into(), msg: format!("need u_max > 0, got {u_max}") });
    }
    if n_samples < 100 {
        return Err(Error::Range {
            key: "n_samples".into(),
            msg: format!("need at least 100 samples, got {n_samples}"),
        });
    }
    if !(c_poincare > 0.0) {
        return Err(Error::InvalidRadius(c_poincare));
    }

    let mut side = Vec::new();
    let mut check = |name: &str, passed: bool, computed: f64, bound: f64| {
        side.push(SideCheck { name: name.into(), passed, computed, bound });
    };
    match kind {
        ConditionKind::PmeBlowup => {
            check("alpha > m+1", alpha > m + 1.0, alpha, m + 1.0);
            check("gamma > 0", gamma > 0.0, gamma, 0.0);
            let ub = c_poincare * (alpha - m - 1.0) / (m + 1.0);
            check("beta > 0", beta > 0.0, beta, 0.0);
            check("beta <= C(alpha-m-1)/(m+1)", beta <= ub, beta, ub);
        }
        ConditionKind::PmeGlobal => {
            check("alpha <= 0", alpha <= 0.0, alpha, 0.0);
            check("gamma >= 0", gamma >= 0.0, gamma, 0.0);
            let lb = c_poincare * (alpha - m - 1.0) / (m + 1.0);
            check("beta >= C(alpha-m-1)/(m+1)", beta >= lb, beta, lb);
        }
        ConditionKind::PpBlowup => {
            check("alpha > p", alpha > p, alpha, p);
            check("gamma > 0", gamma > 0.0, gamma, 0.0);
            let ub = c_poincare * (alpha - p) / p;
            check("beta > 0", beta > 0.0, beta, 0.0);
            check("beta <= C(alpha-p)/p", beta <= ub, beta, ub);
        }
        ConditionKind::PpGlobal => {
            check("alpha <= 0", alpha <= 0.0, alpha, 0.0);
            check("gamma >= 0", gamma >= 0.0, gamma, 0.0);
            let lb = (p - alpha) / 2.0;
            check("beta >= (p-alpha)/2", beta >= lb, beta, lb);
        }
    }
    let sides_ok = side.iter().all(|s| s.passed);

    let mut worst_margin = f64::INFINITY;
    let mut worst_u = f64::NAN;
    for u in log_uniform_samples(u_max, n_samples) {
        let (lhs, rhs) = if kind.is_pme() {
            let big_f = nl.eval_f_pme(u, p, m)?;
            (
                alpha * big_f,
                u.powf(m) * nl.eval_f_unchecked(u) + beta * u.powf(p * m) + alpha * gamma,
            )
        } else {
            let big_f = nl.eval_f_pp(u)?;
            (alpha * big_f, u * nl.eval_f_unchecked(u) + beta * u.powf(p) + alpha * gamma)
        };
        if !lhs.is_finite() || !rhs.is_finite() {
            return Err(Error::NumericFailure(format!(
                "condition check produced non-finite values at u = {u}"
            )));
        }
        // blow-up kinds require lhs <= rhs, global kinds lhs >= rhs
        let margin = if kind.is_blowup() { rhs - lhs } else { lhs - rhs };
        if margin < worst_margin {
            worst_margin = margin;
            worst_u = u;
        }
    }

    Ok(ConditionReport {
        kind,
        alpha,
        beta,
        gamma,
        m,
        p,
        poincare_constant: c_poincare,
        holds: sides_ok && worst_margin >= 0.0,
        side_constraints: side,
        worst_margin,
        worst_u,
        sample_u_max: u_max,
        sample_count: n_samples,
        sample_scale: "log-uniform",
    })
}

/// A rejected candidate from the parameter search, with its witness.
#[derive(Debug, Clone, Serialize)]
pub struct CandidateFailure {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub failed_side: Option<String>,
    pub worst_margin: f64,
    pub worst_u: f64,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum SearchOutcome {
    Found { report: ConditionReport },
    Infeasible { candidates: Vec<CandidateFailure> },
}

const SEARCH_SAMPLES: usize = 400;

/// Automates the "for some gamma, beta, alpha" quantifier: closed-form seed
/// for power nonlinearities, otherwise a small grid search inside the side
/// constraints. Infeasibility is a normal return carrying witnesses.
pub fn search_parameters(
    kind: ConditionKind,
    nl: &Nonlinearity,
    m: f64,
    p: f64,
    c_poincare: f64,
    u_max: f64,
) -> Result<SearchOutcome> {
    let mut candidates: Vec<(f64, f64, f64)> = Vec::new();

    if let Nonlinearity::Power { q, .. } = nl {
        // exact-identity seeds: alpha F = u^m f needs alpha = (m+1)(m+q)/(pm);
        // alpha F = u f needs alpha = q + 1
        match kind {
            ConditionKind::PmeBlowup => {
                let alpha = (m + 1.0) * (m + q) / (p * m);
                if alpha > m + 1.0 {
                    let beta = 0.5 * c_poincare * (alpha - m - 1.0) / (m + 1.0);
                    candidates.push((alpha, beta, 1.0));
                }
            }
            ConditionKind::PpBlowup => {
                let alpha = q + 1.0;
                if alpha > p {
                    let beta = 0.5 * c_poincare * (alpha - p) / p;
                    candidates.push((alpha, beta, 1.0));
                }
            }
            _ => {}
        }
    }

    let gammas: &[f64] = if kind.is_blowup() { &[1.0, 0.1, 10.0] } else { &[0.0, 0.1, 1.0, 10.0] };
    match kind {
        ConditionKind::PmeBlowup | ConditionKind::PpBlowup => {
            let floor = if kind.is_pme() { m + 1.0 } else { p };
            for da in [0.5, 1.0, 2.0, 4.0, 8.0] {
                let alpha = floor + da;
                let ub = if kind.is_pme() {
                    c_poincare * (alpha - m - 1.0) / (m + 1.0)
                } else {
                    c_poincare * (alpha - p) / p
                };
                for frac in [0.5, 0.25, 1.0] {
                    for &g in gammas {
                        candidates.push((alpha, frac * ub, g));
                    }
                }
            }
        }
        ConditionKind::PmeGlobal | ConditionKind::PpGlobal => {
            for alpha in [0.0, -0.5, -1.0, -2.0, -5.0] {
                let lb = if kind.is_pme() {
                    c_poincare * (alpha - m - 1.0) / (m + 1.0)
                } else {
                    (p - alpha) / 2.0
                };
                for db in [0.0, 0.5 * lb.abs().max(0.5), lb.abs().max(1.0)] {
                    for &g in gammas {
                        candidates.push((alpha, lb + db, g));
                    }
                }
            }
        }
    }

    let mut failures = Vec::new();
    for (alpha, beta, gamma) in candidates {
        let report =
            check_condition(kind, nl, alpha, beta, gamma, m, p, c_poincare, u_max, SEARCH_SAMPLES)?;
        if report.holds {
            return Ok(SearchOutcome::Found { report });
        }
        failures.push(CandidateFailure {
            alpha,
            beta,
            gamma,
            failed_side: report
                .side_constraints
                .iter()
                .find(|s| !s.passed)
                .map(|s| s.name.clone()),
            worst_margin: report.worst_margin,
            worst_u: report.worst_u,
        });
    }
    Ok(SearchOutcome::Infeasible { candidates: failures })
}
