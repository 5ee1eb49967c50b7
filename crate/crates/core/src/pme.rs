//! Explicit time integration of the porous-medium problem
//! u_t = L_p(u^m) + f(u) with Dirichlet boundary, finite-time blow-up
//! detection, and the J / E monitor series.

use std::collections::VecDeque;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::{fornberg_weights, j_functional, EnergyLedger, TimeSeries};
use crate::grid::{edge_weights, horizontal_gradient, weighted_sub_laplacian, ScalarField};
use crate::nonlinearity::Nonlinearity;

#[derive(Debug, Clone)]
pub struct PmeConfig {
    pub m: f64,
    pub p: f64,
    /// fraction of the positivity (max-principle) time-step limit, in (0,1)
    pub c_cfl: f64,
    /// numerical blow-up threshold on sup u
    pub u_max: f64,
    pub dt_min: f64,
    pub t_max: f64,
    /// record monitors every `stride` accepted steps
    pub stride: usize,
    /// gradient regularization shared with the operator stack
    pub eps: f64,
}

impl Default for PmeConfig {
    fn default() -> Self {
        PmeConfig {
            m: 1.0,
            p: 2.0,
            c_cfl: 0.2,
            u_max: 1e6,
            dt_min: 1e-12,
            t_max: 1.0,
            stride: 1,
            eps: 1e-12,
        }
    }
}

impl PmeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.m >= 1.0) {
            return Err(Error::Range { key: "m".into(), msg: format!("need m >= 1, got {}", self.m) });
        }
        if !(self.p >= 2.0) {
            return Err(Error::UnsupportedExponent(self.p));
        }
        for (key, v) in [
            ("u_max", self.u_max),
            ("dt_min", self.dt_min),
            ("t_max", self.t_max),
            ("eps", self.eps),
        ] {
            if !(v > 0.0) {
                return Err(Error::Range { key: key.into(), msg: format!("must be positive, got {v}") });
            }
        }
        if !(self.c_cfl > 0.0 && self.c_cfl < 1.0) {
            return Err(Error::Range {
                key: "c_cfl".into(),
                msg: format!("need 0 < c_cfl < 1, got {}", self.c_cfl),
            });
        }
        if self.stride == 0 {
            return Err(Error::Range { key: "stride".into(), msg: "stride must be >= 1".into() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    BlewUp { t_num: f64 },
    ReachedTmax,
    NumericalFailure { reason: String },
}

/// Condition parameters carried along for provenance plus the ledger offset M
/// (zero when the hypotheses did not produce one).
#[derive(Debug, Clone, Copy)]
pub struct MonitorParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub big_m: f64,
}

#[derive(Debug)]
pub struct RunRecord {
    pub verdict: Verdict,
    /// sup |u| at record times
    pub sup: TimeSeries,
    /// I(t) = int u^{m+1}
    pub mass: TimeSeries,
    pub j: TimeSeries,
    /// centered identity residual; first and last samples are placeholders
    /// (no full stencil exists there)
    pub r_j: TimeSeries,
    /// ledger E(t) = M + int_0^t I, accumulated every accepted step
    pub ledger: TimeSeries,
    pub steps: usize,
    pub wall_seconds: f64,
    /// clamped nodes summed over steps 2.., per the inertness check
    pub clamped_after_first: usize,
    pub final_state: ScalarField,
}

/// One explicit Euler step u' = u + dt (L_p(u^m) + f(u)) at interior nodes,
/// boundary re-zeroed, negative values clamped. Returns the clamp count.
pub fn step(u: &ScalarField, dt: f64, cfg: &PmeConfig, nl: &Nonlinearity) -> Result<(ScalarField, usize)> {
    let v = u.powm(cfg.m);
    let w = edge_weights(&v, cfg.p, cfg.eps)?;
    let lap = weighted_sub_laplacian(&v, &w);
    let grid = u.grid().clone();
    let mut out = u.clone();
    for flat in 0..grid.len() {
        if grid.is_interior(flat) {
            let rate = lap.values[flat] + nl.eval_f_unchecked(u.values[flat].max(0.0));
            out.values[flat] += dt * rate;
        }
    }
    out.zero_boundary();
    let clamped = out.clamp_nonnegative();
    if !out.all_finite() {
        return Err(Error::NumericFailure("non-finite values after explicit step".into()));
    }
    Ok((out, clamped))
}

/// Stable step size: c_cfl times the positivity limit of the explicit scheme,
/// additionally capped by the reaction rate max f'(u) (so stiff source terms
/// shrink dt and the dt_min blow-up trigger can fire), and by the remaining
/// time. Returns (clamped dt, raw formula dt).
pub fn choose_dt(u: &ScalarField, cfg: &PmeConfig, nl: &Nonlinearity, t_now: f64) -> (f64, f64) {
    let grid = u.grid();
    let hm2 = grid.inv_h2_sum();
    // D_max = max over interior of m u^{m-1} (|grad_H u^m|^2 + eps^2)^{(p-2)/2}
    let d_max = if cfg.m == 1.0 && cfg.p == 2.0 {
        1.0
    } else {
        let v = u.powm(cfg.m);
        let g = horizontal_gradient(&v);
        let expo = (cfg.p - 2.0) / 2.0;
        let mut d: f64 = 0.0;
        for flat in 0..grid.len() {
            if !grid.is_interior(flat) {
                continue;
            }
            let mut mag2 = 0.0;
            for comp in &g.components {
                mag2 += comp[flat] * comp[flat];
            }
            let w = if expo == 0.0 { 1.0 } else { (mag2 + cfg.eps * cfg.eps).powf(expo) };
            let uval = u.values[flat].max(0.0);
            let mobility = if cfg.m == 1.0 { 1.0 } else { cfg.m * uval.powf(cfg.m - 1.0) };
            d = d.max(mobility * w);
        }
        d
    };
    let mut r_max: f64 = 0.0;
    for flat in 0..grid.len() {
        if grid.is_interior(flat) {
            r_max = r_max.max(nl.df_du(u.values[flat]));
        }
    }
    let dt_diff = cfg.c_cfl / (2.0 * hm2 * (d_max + cfg.eps));
    let formula = if r_max > 0.0 { dt_diff.min(cfg.c_cfl / r_max) } else { dt_diff };
    let dt = formula.min((cfg.t_max - t_now).max(0.0)).max(cfg.dt_min);
    (dt, formula)
}

fn validate_initial(u0: &ScalarField) -> Result<()> {
    if u0.values.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::RejectedInitial("initial data must be finite and nonnegative".into()));
    }
    if u0.sup_norm() == 0.0 {
        return Err(Error::RejectedInitial("initial data must be nontrivial".into()));
    }
    let grid = u0.grid();
    for flat in 0..grid.len() {
        if !grid.is_interior(flat) && u0.values[flat] != 0.0 {
            return Err(Error::RejectedInitial("initial data must vanish on the boundary".into()));
        }
    }
    Ok(())
}

/// Identity-residual helper: compares the centered quotient of a monitor
/// series against the centered integrand, normalized by max(|dJ/dt|, 1).
struct ResidualWindow {
    /// (t, state, index into the record series)
    window: VecDeque<(f64, ScalarField, usize)>,
}

impl ResidualWindow {
    fn new() -> Self {
        ResidualWindow { window: VecDeque::new() }
    }

    /// Push a recorded state; when three records are buffered, return
    /// (series index of the middle record, u_t field, middle state ref time).
    fn push(&mut self, t: f64, state: ScalarField, idx: usize) -> Option<(usize, ScalarField, ScalarField, f64)> {
        self.window.push_back((t, state, idx));
        if self.window.len() < 3 {
            return None;
        }
        if self.window.len() > 3 {
            self.window.pop_front();
        }
        let ts: Vec<f64> = self.window.iter().map(|w| w.0).collect();
        let w1 = fornberg_weights(&ts, ts[1], 1)[1].clone();
        let grid = self.window[1].1.grid().clone();
        let mut ut = ScalarField::zeros(&grid);
        for (wi, (_, st, _)) in w1.iter().zip(self.window.iter()) {
            for (o, v) in ut.values.iter_mut().zip(&st.values) {
                *o += wi * v;
            }
        }
        let mid = self.window[1].1.clone();
        Some((self.window[1].2, mid, ut, ts[1]))
    }

    fn quotient(&self, values: [f64; 3]) -> f64 {
        let ts: Vec<f64> = self.window.iter().map(|w| w.0).collect();
        let w1 = &fornberg_weights(&ts, ts[1], 1)[1];
        w1.iter().zip(values.iter()).map(|(a, b)| a * b).sum()
    }
}

/// Integrate until t_max, blow-up, or failure, recording every monitor at the
/// configured stride.
pub fn run(
    u0: &ScalarField,
    cfg: &PmeConfig,
    nl: &Nonlinearity,
    mon: &MonitorParams,
) -> Result<RunRecord> {
    cfg.validate()?;
    validate_initial(u0)?;
    let start = Instant::now();

    let mut times: Vec<f64> = Vec::new();
    let mut sup_v: Vec<f64> = Vec::new();
    let mut mass_v: Vec<f64> = Vec::new();
    let mut j_v: Vec<f64> = Vec::new();
    let mut ledger_v: Vec<f64> = Vec::new();
    let mut rj_v: Vec<f64> = Vec::new();

    let mut ledger = EnergyLedger::new(mon.big_m);
    let mut resid = ResidualWindow::new();

    let mass_of = |u: &ScalarField| u.powm(cfg.m + 1.0).integrate();

    let mut u = u0.clone();
    let mut t = 0.0;
    let mut steps = 0usize;
    let mut clamped_after_first = 0usize;

    let mut record = |t: f64,
                      u: &ScalarField,
                      ledger_val: f64,
                      times: &mut Vec<f64>,
                      sup_v: &mut Vec<f64>,
                      mass_v: &mut Vec<f64>,
                      j_v: &mut Vec<f64>,
                      ledger_v: &mut Vec<f64>,
                      rj_v: &mut Vec<f64>,
                      resid: &mut ResidualWindow|
     -> Result<()> {
        times.push(t);
        sup_v.push(u.sup_norm());
        mass_v.push(mass_of(u));
        j_v.push(j_functional(u, cfg.p, cfg.m, mon.gamma, nl)?);
        ledger_v.push(ledger_val);
        rj_v.push(0.0);
        let idx = times.len() - 1;
        if let Some((mid_idx, mid_state, ut, _)) = resid.push(t, u.clone(), idx) {
            // g = pm/(m+1) int u^{m-1} u_t^2 at the middle record
            let mut integrand = ScalarField::zeros(u.grid());
            for ((out, &um), &utv) in integrand
                .values
                .iter_mut()
                .zip(&mid_state.values)
                .zip(&ut.values)
            {
                let w = if cfg.m == 1.0 { 1.0 } else { um.max(0.0).powf(cfg.m - 1.0) };
                *out = w * utv * utv;
            }
            let g = cfg.p * cfg.m / (cfg.m + 1.0) * integrand.integrate();
            let djdt = resid.quotient([j_v[mid_idx - 1], j_v[mid_idx], j_v[mid_idx + 1]]);
            rj_v[mid_idx] = (djdt - g).abs() / djdt.abs().max(1.0);
        }
        Ok(())
    };

    // t = 0 sample
    let lv = ledger.push(t, mass_of(&u));
    record(t, &u, lv, &mut times, &mut sup_v, &mut mass_v, &mut j_v, &mut ledger_v, &mut rj_v, &mut resid)?;

    let mut last_recorded_step = 0usize;
    let verdict = loop {
        if t >= cfg.t_max * (1.0 - 1e-12) {
            break Verdict::ReachedTmax;
        }
        let (dt, formula) = choose_dt(&u, cfg, nl, t);
        if formula < cfg.dt_min {
            let growing = sup_v
                .last()
                .map(|&s| u.sup_norm() >= s * (1.0 - 1e-12))
                .unwrap_or(false);
            if growing {
                break Verdict::BlewUp { t_num: t };
            }
        }
        let stepped = step(&u, dt, cfg, nl);
        let (next, clamped) = match stepped {
            Ok(v) => v,
            Err(Error::NumericFailure(reason)) => break Verdict::NumericalFailure { reason },
            Err(e) => return Err(e),
        };
        steps += 1;
        if steps > 1 {
            clamped_after_first += clamped;
        }
        t += dt;
        u = next;
        let lv = ledger.push(t, mass_of(&u));

        let blew = u.sup_norm() >= cfg.u_max;
        let done = blew || t >= cfg.t_max * (1.0 - 1e-12);
        if steps % cfg.stride == 0 || done {
            record(t, &u, lv, &mut times, &mut sup_v, &mut mass_v, &mut j_v, &mut ledger_v, &mut rj_v, &mut resid)?;
            last_recorded_step = steps;
        }
        if blew {
            break Verdict::BlewUp { t_num: t };
        }
    };
    // make sure the terminal state is in the series
    if last_recorded_step != steps {
        let lv = ledger.value();
        if times.last().map(|&lt| t > lt).unwrap_or(true) {
            record(t, &u, lv, &mut times, &mut sup_v, &mut mass_v, &mut j_v, &mut ledger_v, &mut rj_v, &mut resid)?;
        }
    }

    let series = |name: &str, values: Vec<f64>| TimeSeries {
        name: name.into(),
        times: times.clone(),
        values,
    };
    Ok(RunRecord {
        verdict,
        sup: series("sup_u", sup_v),
        mass: series("integral_u_m1", mass_v),
        j: series("J", j_v),
        r_j: series("r_J", rj_v),
        ledger: series("E", ledger_v),
        steps,
        wall_seconds: start.elapsed().as_secs_f64(),
        clamped_after_first,
        final_state: u,
    })
}

/// Decay verdict: I(t) never exceeds I(0) and is nonincreasing between
/// records, both within the 1e-8 relative tolerance.
pub fn global_decay_check(record: &RunRecord) -> bool {
    let i = &record.mass.values;
    if i.is_empty() {
        return false;
    }
    let i0 = i[0];
    let cap = i0 * (1.0 + 1e-8);
    let slack = 1e-8 * i0;
    i.iter().all(|&v| v <= cap) && i.windows(2).all(|w| w[1] <= w[0] + slack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::group::StratifiedGroup;
    use std::sync::Arc;

    fn line_grid() -> Arc<Grid> {
        let g = Arc::new(StratifiedGroup::make_euclidean(1).unwrap());
        Grid::new(g, &[(0.0, 4.0)], &[5]).unwrap()
    }

    fn cube_grid(n: usize) -> Arc<Grid> {
        let g = Arc::new(StratifiedGroup::make_euclidean(3).unwrap());
        Grid::new(g, &[(0.0, 1.0); 3], &[n; 3]).unwrap()
    }

    fn sin_product(grid: &Arc<Grid>, a: f64) -> ScalarField {
        let pi = std::f64::consts::PI;
        let mut u = ScalarField::from_fn(grid, |x| {
            a * (pi * x[0]).sin() * (pi * x[1]).sin() * (pi * x[2]).sin()
        });
        u.zero_boundary();
        u
    }

    #[test]
    fn step_hand_example() {
        // 3-point Laplacian on interior (0,1,0), h=1, dt=0.1 -> (0.1, 0.8, 0.1)
        let grid = line_grid();
        let mut u = ScalarField::zeros(&grid);
        u.values[2] = 1.0;
        let cfg = PmeConfig { t_max: 1.0, ..Default::default() };
        let (next, clamped) = step(&u, 0.1, &cfg, &Nonlinearity::Zero).unwrap();
        assert_eq!(clamped, 0);
        let expect = [0.0, 0.1, 0.8, 0.1, 0.0];
        for (a, b) in next.values.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn step_trivial_cases() {
        let grid = cube_grid(5);
        let cfg = PmeConfig::default();
        let zero = ScalarField::zeros(&grid);
        let (z, _) = step(&zero, 0.1, &cfg, &Nonlinearity::power(1.0, 3.0).unwrap()).unwrap();
        assert!(z.values.iter().all(|&v| v == 0.0));

        let u = sin_product(&grid, 1.0);
        let (same, _) = step(&u, 0.0, &cfg, &Nonlinearity::Zero).unwrap();
        for (a, b) in same.values.iter().zip(&u.values) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn choose_dt_formula() {
        // u = 0, m=1, p=2 on (0,1)^3 at h=1/32: dt = c_cfl / (2 * 3/h^2)
        let grid = cube_grid(33);
        let cfg = PmeConfig { t_max: 10.0, ..Default::default() };
        let u = ScalarField::zeros(&grid);
        let (_, formula) = choose_dt(&u, &cfg, &Nonlinearity::Zero, 0.0);
        let expect = 0.2 / (2.0 * 3.0 * 1024.0);
        assert!((formula - expect).abs() < 1e-12 * expect, "{formula} vs {expect}");

        // doubling the resolution quarters dt
        let fine = cube_grid(65);
        let (_, f2) = choose_dt(&ScalarField::zeros(&fine), &cfg, &Nonlinearity::Zero, 0.0);
        assert!((formula / f2 - 4.0).abs() < 1e-10);
    }

    #[test]
    fn choose_dt_degenerate_mobility() {
        // sup u = 100 at m=2, p=2: D_max = 2*100, dt shrinks 200x
        let grid = cube_grid(17);
        let mut u = ScalarField::zeros(&grid);
        for flat in 0..grid.len() {
            if grid.is_interior(flat) {
                u.values[flat] = 100.0;
            }
        }
        let base = PmeConfig { t_max: 10.0, ..Default::default() };
        let (_, dt1) = choose_dt(&ScalarField::zeros(&grid), &base, &Nonlinearity::Zero, 0.0);
        let cfg2 = PmeConfig { m: 2.0, t_max: 10.0, ..Default::default() };
        let (_, dt200) = choose_dt(&u, &cfg2, &Nonlinearity::Zero, 0.0);
        assert!((dt1 / dt200 - 200.0).abs() < 1e-9 * 200.0, "{}", dt1 / dt200);
    }

    #[test]
    fn choose_dt_reaction_cap() {
        // f = u^3 at sup 20: dt limited by c_cfl / (3 * 400) once finer than
        // the diffusion bound
        let grid = cube_grid(5);
        let u = sin_product(&grid, 20.0);
        let cfg = PmeConfig { t_max: 10.0, ..Default::default() };
        let nl = Nonlinearity::power(1.0, 3.0).unwrap();
        let (_, formula) = choose_dt(&u, &cfg, &nl, 0.0);
        let sup = u.sup_norm();
        let react = 0.2 / (3.0 * sup * sup);
        let diff = 0.2 / (2.0 * 3.0 * 16.0);
        assert!((formula - react.min(diff)).abs() < 1e-15);
    }

    #[test]
    fn heat_run_decays_to_eigenmode() {
        let grid = cube_grid(17);
        let u0 = sin_product(&grid, 1.0);
        let cfg = PmeConfig { t_max: 0.01, ..Default::default() };
        let rec = run(&u0, &cfg, &Nonlinearity::Zero, &MonitorParams {
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
            big_m: 0.0,
        })
        .unwrap();
        assert_eq!(rec.verdict, Verdict::ReachedTmax);
        let pi = std::f64::consts::PI;
        let factor = (-3.0 * pi * pi * 0.01).exp();
        let mut worst = 0.0f64;
        for (a, b) in rec.final_state.values.iter().zip(&u0.values) {
            worst = worst.max((a - b * factor).abs());
        }
        assert!(worst / factor < 0.01, "relative error {}", worst / factor);
        // discrete maximum principle: sup is nonincreasing
        for w in rec.sup.values.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-13));
        }
        assert_eq!(rec.clamped_after_first, 0);
        assert!(global_decay_check(&rec));
    }

    #[test]
    fn initial_data_validation() {
        let grid = cube_grid(5);
        let cfg = PmeConfig::default();
        let nl = Nonlinearity::power(1.0, 3.0).unwrap();
        let mon = MonitorParams { alpha: 4.0, beta: 1.0 / 24.0, gamma: 0.1, big_m: 0.0 };

        let zero = ScalarField::zeros(&grid);
        assert!(matches!(run(&zero, &cfg, &nl, &mon), Err(Error::RejectedInitial(_))));

        let mut neg = sin_product(&grid, 1.0);
        neg.values[grid.flat(&[2, 2, 2])] = -0.5;
        assert!(matches!(run(&neg, &cfg, &nl, &mon), Err(Error::RejectedInitial(_))));

        let mut bnd = sin_product(&grid, 1.0);
        bnd.values[0] = 0.1;
        assert!(matches!(run(&bnd, &cfg, &nl, &mon), Err(Error::RejectedInitial(_))));
    }

    #[test]
    fn cubic_source_blows_up() {
        let grid = cube_grid(9);
        let u0 = sin_product(&grid, 20.0);
        let cfg = PmeConfig { t_max: 1.0, ..Default::default() };
        let nl = Nonlinearity::power(1.0, 3.0).unwrap();
        let rec = run(&u0, &cfg, &nl, &MonitorParams {
            alpha: 4.0,
            beta: 1.0 / 24.0,
            gamma: 0.1,
            big_m: 1.0,
        })
        .unwrap();
        let t_num = match rec.verdict {
            Verdict::BlewUp { t_num } => t_num,
            ref v => panic!("expected blow-up, got {v:?}"),
        };
        assert!(t_num > 0.0 && t_num < 0.1, "t_num = {t_num}");
        // J is nondecreasing along the run
        for w in rec.j.values.windows(2) {
            assert!(w[1] >= w[0] - 1e-6 * w[0].abs(), "{} then {}", w[0], w[1]);
        }
        assert!(!global_decay_check(&rec));
        assert_eq!(rec.clamped_after_first, 0);
    }

    #[test]
    fn config_validation() {
        let bad = PmeConfig { c_cfl: 1.5, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = PmeConfig { p: 1.5, ..Default::default() };
        assert!(matches!(bad.validate(), Err(Error::UnsupportedExponent(_))));
        let bad = PmeConfig { m: 0.5, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
