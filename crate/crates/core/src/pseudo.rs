//! Semi-implicit time integration of the pseudo-parabolic problem
//! u_t - div_H(|grad_H u|^{p-2} grad_H u_t) = L_p u + f(u): one symmetric
//! positive-definite solve per step, Jacobi-preconditioned conjugate
//! gradients, and the F / E_p monitor series.

use std::collections::VecDeque;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::functionals::{f_functional_pp, fornberg_weights, EnergyLedger, TimeSeries};
use crate::grid::{
    edge_weights, horizontal_energy_weighted, sub_laplacian_diagonal, weighted_sub_laplacian,
    EdgeWeights, ScalarField,
};
use crate::nonlinearity::Nonlinearity;
use crate::pme::Verdict;

#[derive(Debug, Clone)]
pub struct PpConfig {
    pub p: f64,
    /// fixed step size (the linear part is unconditionally stable at p = 2)
    pub dt: f64,
    /// relative residual target for the per-step CG solve
    pub cg_tol: f64,
    /// default 10 sqrt(node count) + 200
    pub cg_max_iter: Option<usize>,
    /// weight re-freezes per step (frozen-coefficient Picard), 1..=5
    pub picard_iters: usize,
    pub u_max: f64,
    pub t_max: f64,
    pub stride: usize,
    pub eps: f64,
}

impl Default for PpConfig {
    fn default() -> Self {
        PpConfig {
            p: 2.0,
            dt: 1e-3,
            cg_tol: 1e-10,
            cg_max_iter: None,
            picard_iters: 1,
            u_max: 1e6,
            t_max: 1.0,
            stride: 1,
            eps: 1e-12,
        }
    }
}

impl PpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 2.0) {
            return Err(Error::UnsupportedExponent(self.p));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Range { key: "dt".into(), msg: format!("need dt > 0, got {}", self.dt) });
        }
        if !(self.cg_tol > 0.0 && self.cg_tol <= 1e-4) {
            return Err(Error::Range {
                key: "cg_tol".into(),
                msg: format!("need cg_tol in (0, 1e-4], got {}", self.cg_tol),
            });
        }
        if !(1..=5).contains(&self.picard_iters) {
            return Err(Error::Range {
                key: "picard_iters".into(),
                msg: format!("need 1..=5, got {}", self.picard_iters),
            });
        }
        for (key, v) in [("u_max", self.u_max), ("t_max", self.t_max), ("eps", self.eps)] {
            if !(v > 0.0) {
                return Err(Error::Range { key: key.into(), msg: format!("must be positive, got {v}") });
            }
        }
        if self.stride == 0 {
            return Err(Error::Range { key: "stride".into(), msg: "stride must be >= 1".into() });
        }
        Ok(())
    }

    pub fn resolved_cg_max_iter(&self, node_count: usize) -> usize {
        self.cg_max_iter
            .unwrap_or_else(|| 10 * (node_count as f64).sqrt() as usize + 200)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CgStats {
    pub iters: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct PpMonitorParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub big_m: f64,
}

#[derive(Debug)]
pub struct PpRunRecord {
    pub verdict: Verdict,
    pub sup: TimeSeries,
    /// I_p(t) = int u^2 + (2/p) int |grad_H u|^p
    pub ip: TimeSeries,
    pub f: TimeSeries,
    /// centered identity residual; endpoint samples are placeholders
    pub r_f: TimeSeries,
    /// ledger E_p(t) = M + int_0^t I_p
    pub ledger: TimeSeries,
    pub cg_iters: TimeSeries,
    pub cg_residual: TimeSeries,
    pub steps: usize,
    pub wall_seconds: f64,
    pub clamped_after_first: usize,
    pub final_state: ScalarField,
}

/// B(u_ref) w = w - div_H(omega grad_H w) with the weights
/// omega = (|grad_H u_ref|^2 + eps^2)^{(p-2)/2} frozen at u_ref.
/// For p = 2 this is exactly I - L_2.
pub fn apply_b(u_ref: &ScalarField, w: &ScalarField, p: f64, eps: f64) -> Result<ScalarField> {
    if !std::sync::Arc::ptr_eq(u_ref.grid(), w.grid()) && u_ref.grid().len() != w.grid().len() {
        return Err(Error::InvalidField("apply_b: fields live on different grids".into()));
    }
    let weights = edge_weights(u_ref, p, eps)?;
    let lap = weighted_sub_laplacian(w, &weights);
    let mut out = w.clone();
    for (o, l) in out.values.iter_mut().zip(&lap.values) {
        *o -= l;
    }
    Ok(out)
}

/// Jacobi-preconditioned conjugate gradients for an SPD operator acting on
/// interior-supported fields. Plain l2 residuals; convergence is relative to
/// the right-hand side norm.
pub fn cg_solve(
    op: &dyn Fn(&ScalarField) -> ScalarField,
    rhs: &ScalarField,
    tol: f64,
    max_iter: usize,
    diag: Option<&[f64]>,
) -> Result<(ScalarField, CgStats)> {
    let grid = rhs.grid().clone();
    let dot = |a: &ScalarField, b: &ScalarField| -> f64 {
        a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum()
    };
    let b_norm = dot(rhs, rhs).sqrt();
    let mut x = ScalarField::zeros(&grid);
    if b_norm == 0.0 {
        return Ok((x, CgStats { iters: 0, residual: 0.0 }));
    }
    let precond = |r: &ScalarField| -> ScalarField {
        let mut z = r.clone();
        if let Some(d) = diag {
            for (zv, dv) in z.values.iter_mut().zip(d) {
                *zv /= dv;
            }
        }
        z
    };
    let mut r = rhs.clone();
    let mut z = precond(&r);
    let mut pdir = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        let ap = op(&pdir);
        let pap = dot(&pdir, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::NumericFailure(format!(
                "cg: operator lost positive definiteness (p.Ap = {pap})"
            )));
        }
        let alpha = rz / pap;
        for (xv, pv) in x.values.iter_mut().zip(&pdir.values) {
            *xv += alpha * pv;
        }
        for (rv, av) in r.values.iter_mut().zip(&ap.values) {
            *rv -= alpha * av;
        }
        let res = dot(&r, &r).sqrt() / b_norm;
        if res <= tol {
            x.zero_boundary();
            return Ok((x, CgStats { iters: it, residual: res }));
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        for (pv, zv) in pdir.values.iter_mut().zip(&z.values) {
            *pv = zv + beta * *pv;
        }
        rz = rz_new;
    }
    Err(Error::NoConvergence {
        iters: max_iter,
        residual: dot(&r, &r).sqrt() / b_norm,
    })
}

/// One semi-implicit step: solve B(u) delta = dt (L_p u + f(u)), then
/// u' = u + delta with boundary re-zeroed and the negative clamp.
/// `picard_iters > 1` re-freezes the weights at the provisional state.
pub fn step(u: &ScalarField, cfg: &PpConfig, nl: &Nonlinearity) -> Result<(ScalarField, CgStats, usize)> {
    let grid = u.grid().clone();
    let max_iter = cfg.resolved_cg_max_iter(grid.len());
    let mut weights = edge_weights(u, cfg.p, cfg.eps)?;
    let mut delta = ScalarField::zeros(&grid);
    let mut stats = CgStats::default();
    for _ in 0..cfg.picard_iters {
        let lap = weighted_sub_laplacian(u, &weights);
        let mut rhs = ScalarField::zeros(&grid);
        for flat in 0..grid.len() {
            if grid.is_interior(flat) {
                rhs.values[flat] =
                    cfg.dt * (lap.values[flat] + nl.eval_f_unchecked(u.values[flat].max(0.0)));
            }
        }
        let mut diag = sub_laplacian_diagonal(&grid, &weights);
        for (flat, d) in diag.iter_mut().enumerate() {
            *d = if grid.is_interior(flat) { 1.0 + *d } else { 1.0 };
        }
        let w_ref: &EdgeWeights = &weights;
        let op = move |v: &ScalarField| {
            let lap = weighted_sub_laplacian(v, w_ref);
            let mut out = v.clone();
            for (o, l) in out.values.iter_mut().zip(&lap.values) {
                *o -= l;
            }
            out.zero_boundary();
            out
        };
        let (d, s) = cg_solve(&op, &rhs, cfg.cg_tol, max_iter, Some(&diag))?;
        delta = d;
        stats = s;
        if cfg.picard_iters > 1 {
            let mut provisional = u.clone();
            for (pv, dv) in provisional.values.iter_mut().zip(&delta.values) {
                *pv += dv;
            }
            provisional.zero_boundary();
            provisional.clamp_nonnegative();
            weights = edge_weights(&provisional, cfg.p, cfg.eps)?;
        }
    }
    let mut out = u.clone();
    for (o, d) in out.values.iter_mut().zip(&delta.values) {
        *o += d;
    }
    out.zero_boundary();
    let clamped = out.clamp_nonnegative();
    if !out.all_finite() {
        return Err(Error::NumericFailure("non-finite values after semi-implicit step".into()));
    }
    Ok((out, stats, clamped))
}

fn ip_value(u: &ScalarField, p: f64, eps: f64) -> Result<f64> {
    let w = edge_weights(u, p, eps)?;
    Ok(u.powm(2.0).integrate() + 2.0 / p * horizontal_energy_weighted(u, &w))
}

/// Integrate with the fixed step until t_max, blow-up, or failure.
pub fn run(
    u0: &ScalarField,
    cfg: &PpConfig,
    nl: &Nonlinearity,
    mon: &PpMonitorParams,
) -> Result<PpRunRecord> {
    cfg.validate()?;
    if u0.values.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::RejectedInitial("initial data must be finite and nonnegative".into()));
    }
    if u0.sup_norm() == 0.0 {
        return Err(Error::RejectedInitial("initial data must be nontrivial".into()));
    }
    {
        let grid = u0.grid();
        for flat in 0..grid.len() {
            if !grid.is_interior(flat) && u0.values[flat] != 0.0 {
                return Err(Error::RejectedInitial("initial data must vanish on the boundary".into()));
            }
        }
    }
    let start = Instant::now();

    let mut times = Vec::new();
    let mut sup_v = Vec::new();
    let mut ip_v = Vec::new();
    let mut f_v = Vec::new();
    let mut rf_v = Vec::new();
    let mut ledger_v = Vec::new();
    let mut cg_it_v = Vec::new();
    let mut cg_res_v = Vec::new();

    let mut ledger = EnergyLedger::new(mon.big_m);
    // (t, state, record index) window for the centered identity residual
    let mut window: VecDeque<(f64, ScalarField, usize)> = VecDeque::new();

    let mut u = u0.clone();
    let mut t = 0.0;
    let mut steps = 0usize;
    let mut clamped_after_first = 0usize;
    let mut last_stats = CgStats::default();

    macro_rules! record {
        () => {{
            times.push(t);
            sup_v.push(u.sup_norm());
            ip_v.push(ip_value(&u, cfg.p, cfg.eps)?);
            f_v.push(f_functional_pp(&u, cfg.p, mon.gamma, nl)?);
            ledger_v.push(ledger.value());
            cg_it_v.push(last_stats.iters as f64);
            cg_res_v.push(last_stats.residual);
            rf_v.push(0.0);
            let idx = times.len() - 1;
            window.push_back((t, u.clone(), idx));
            if window.len() > 3 {
                window.pop_front();
            }
            if window.len() == 3 {
                let ts: Vec<f64> = window.iter().map(|w| w.0).collect();
                let w1 = fornberg_weights(&ts, ts[1], 1)[1].clone();
                let grid = u.grid().clone();
                let mut ut = ScalarField::zeros(&grid);
                for (wi, (_, st, _)) in w1.iter().zip(window.iter()) {
                    for (o, v) in ut.values.iter_mut().zip(&st.values) {
                        *o += wi * v;
                    }
                }
                let mid = &window[1];
                // g = int u_t^2 + |grad_H u|^{p-2} |grad_H u_t|^2 at the middle state
                let wmid = edge_weights(&mid.1, cfg.p, cfg.eps)?;
                let g = ut.inner(&ut) + horizontal_energy_weighted(&ut, &wmid);
                let mid_idx = mid.2;
                let dfdt: f64 = w1
                    .iter()
                    .zip(&f_v[mid_idx - 1..=mid_idx + 1])
                    .map(|(a, b)| a * b)
                    .sum();
                rf_v[mid_idx] = (dfdt - g).abs() / dfdt.abs().max(1.0);
            }
        }};
    }

    ledger.push(t, ip_value(&u, cfg.p, cfg.eps)?);
    record!();

    let mut last_recorded_step = 0usize;
    let verdict = loop {
        if t >= cfg.t_max * (1.0 - 1e-12) {
            break Verdict::ReachedTmax;
        }
        let dt = cfg.dt.min(cfg.t_max - t);
        let cfg_step = PpConfig { dt, ..cfg.clone() };
        let stepped = step(&u, &cfg_step, nl);
        let (next, stats, clamped) = match stepped {
            Ok(v) => v,
            Err(Error::NumericFailure(reason)) => break Verdict::NumericalFailure { reason },
            Err(Error::NoConvergence { iters, residual }) => {
                break Verdict::NumericalFailure {
                    reason: format!("cg failed to converge: {iters} iterations, residual {residual:.3e}"),
                }
            }
            Err(e) => return Err(e),
        };
        steps += 1;
        if steps > 1 {
            clamped_after_first += clamped;
        }
        last_stats = stats;
        t += dt;
        u = next;
        ledger.push(t, ip_value(&u, cfg.p, cfg.eps)?);

        let blew = u.sup_norm() >= cfg.u_max;
        let done = blew || t >= cfg.t_max * (1.0 - 1e-12);
        if steps % cfg.stride == 0 || done {
            record!();
            last_recorded_step = steps;
        }
        if blew {
            break Verdict::BlewUp { t_num: t };
        }
    };
    if last_recorded_step != steps && times.last().map(|&lt| t > lt).unwrap_or(true) {
        record!();
    }

    let series = |name: &str, values: Vec<f64>| TimeSeries {
        name: name.into(),
        times: times.clone(),
        values,
    };
    Ok(PpRunRecord {
        verdict,
        sup: series("sup_u", sup_v),
        ip: series("Ip", ip_v),
        f: series("F", f_v),
        r_f: series("r_F", rf_v),
        ledger: series("Ep", ledger_v),
        cg_iters: series("cg_iters", cg_it_v),
        cg_residual: series("cg_residual", cg_res_v),
        steps,
        wall_seconds: start.elapsed().as_secs_f64(),
        clamped_after_first,
        final_state: u,
    })
}

/// Decay verdict for the exponential estimate: I_p(t) <= exp(-(p-alpha) t) I_p(0)
/// at every sample, within 1e-6 relative.
pub fn exp_decay_check(record: &PpRunRecord, p: f64, alpha: f64) -> Result<bool> {
    if alpha > 0.0 {
        return Err(Error::HypothesisViolation(format!(
            "exponential decay estimate requires alpha <= 0, got {alpha}"
        )));
    }
    let i = &record.ip;
    if i.values.is_empty() {
        return Ok(false);
    }
    let i0 = i.values[0];
    Ok(i.times.iter().zip(&i.values).all(|(&t, &v)| {
        v <= (-(p - alpha) * t).exp() * i0 * (1.0 + 1e-6)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, DEFAULT_EPS};
    use crate::group::StratifiedGroup;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn line_grid() -> Arc<Grid> {
        let g = Arc::new(StratifiedGroup::make_euclidean(1).unwrap());
        Grid::new(g, &[(0.0, 4.0)], &[5]).unwrap()
    }

    fn interval_grid(n: usize) -> Arc<Grid> {
        let g = Arc::new(StratifiedGroup::make_euclidean(1).unwrap());
        Grid::new(g, &[(0.0, 1.0)], &[n]).unwrap()
    }

    fn cube_grid(n: usize) -> Arc<Grid> {
        let g = Arc::new(StratifiedGroup::make_euclidean(3).unwrap());
        Grid::new(g, &[(0.0, 1.0); 3], &[n; 3]).unwrap()
    }

    fn sin_product(grid: &Arc<Grid>, a: f64) -> ScalarField {
        let pi = std::f64::consts::PI;
        let dims = grid.nodes().len();
        let mut u = ScalarField::from_fn(grid, |x| {
            let mut v = a;
            for i in 0..dims {
                v *= (pi * x[i]).sin();
            }
            v
        });
        u.zero_boundary();
        u
    }

    #[test]
    fn apply_b_hand_example() {
        // p=2 on h=1: B = I - L, interior (0,1,0) -> (-1, 3, -1)
        let grid = line_grid();
        let mut w = ScalarField::zeros(&grid);
        w.values[2] = 1.0;
        let u_ref = ScalarField::zeros(&grid);
        let out = apply_b(&u_ref, &w, 2.0, DEFAULT_EPS).unwrap();
        let expect = [0.0, -1.0, 3.0, -1.0, 0.0];
        for (a, b) in out.values.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-14);
        }

        let zero = ScalarField::zeros(&grid);
        let z = apply_b(&u_ref, &zero, 2.0, DEFAULT_EPS).unwrap();
        assert!(z.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn apply_b_near_identity_at_zero_gradient() {
        // u_ref = 0, p = 3: weights ~ eps, so B ~ I
        let grid = line_grid();
        let u_ref = ScalarField::zeros(&grid);
        let mut w = ScalarField::zeros(&grid);
        w.values[1] = 0.7;
        w.values[2] = -0.4;
        w.values[3] = 1.3;
        let out = apply_b(&u_ref, &w, 3.0, 1e-12).unwrap();
        for (a, b) in out.values.iter().zip(&w.values) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0));
        }
    }

    #[test]
    fn cg_identity_and_zero_rhs() {
        let grid = cube_grid(5);
        let op = |v: &ScalarField| v.clone();
        let mut rhs = ScalarField::zeros(&grid);
        for flat in 0..grid.len() {
            if grid.is_interior(flat) {
                rhs.values[flat] = (flat % 7) as f64 - 3.0;
            }
        }
        let (x, stats) = cg_solve(&op, &rhs, 1e-12, 50, None).unwrap();
        assert_eq!(stats.iters, 1);
        for (a, b) in x.values.iter().zip(&rhs.values) {
            assert!((a - b).abs() < 1e-12);
        }

        let zero = ScalarField::zeros(&grid);
        let (x0, s0) = cg_solve(&op, &zero, 1e-12, 50, None).unwrap();
        assert_eq!(s0.iters, 0);
        assert!(x0.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cg_tridiagonal_hand_solve() {
        // B at p=2 on h=1 is tridiag(-1, 3, -1) on the 3 interior nodes;
        // rhs (0,1,0) gives mid-node 3/7
        let grid = line_grid();
        let u_ref = ScalarField::zeros(&grid);
        let op = move |v: &ScalarField| {
            let mut out = apply_b(&u_ref, v, 2.0, DEFAULT_EPS).unwrap();
            out.zero_boundary();
            out
        };
        let mut rhs = ScalarField::zeros(&grid);
        rhs.values[2] = 1.0;
        let (x, stats) = cg_solve(&op, &rhs, 1e-12, 100, None).unwrap();
        assert!((x.values[2] - 3.0 / 7.0).abs() < 1e-10);
        assert!((x.values[1] - 1.0 / 7.0).abs() < 1e-10);
        assert!((x.values[3] - 1.0 / 7.0).abs() < 1e-10);
        assert!(stats.iters <= 3);
    }

    #[test]
    fn step_eigenmode_factor_exact() {
        // one step multiplies a discrete eigenmode by 1 - dt mu/(1+mu)
        let n = 17;
        let grid = interval_grid(n);
        let h = 1.0 / (n - 1) as f64;
        let pi = std::f64::consts::PI;
        let mu = (2.0 - 2.0 * (pi * h).cos()) / (h * h);
        let u = sin_product(&grid, 1.0);
        let cfg = PpConfig { dt: 1e-3, cg_tol: 1e-12, t_max: 1.0, ..Default::default() };
        let (next, _, _) = step(&u, &cfg, &Nonlinearity::Zero).unwrap();
        let factor = 1.0 - cfg.dt * mu / (1.0 + mu);
        for flat in 0..grid.len() {
            if grid.is_interior(flat) {
                let expect = factor * u.values[flat];
                assert!((next.values[flat] - expect).abs() < 1e-9 * expect.abs().max(1e-6));
            }
        }
    }

    #[test]
    fn step_zero_state_and_dt_linearity() {
        let grid = cube_grid(7);
        let cfg = PpConfig { t_max: 1.0, ..Default::default() };
        let nl = Nonlinearity::power(1.0, 3.0).unwrap();
        let zero = ScalarField::zeros(&grid);
        let (z, _, _) = step(&zero, &cfg, &nl).unwrap();
        assert!(z.values.iter().all(|&v| v == 0.0));

        // ||step(u) - u|| is exactly linear in dt for p = 2 (frozen weights)
        let u = sin_product(&grid, 1.0);
        let norm_delta = |dt: f64| {
            let c = PpConfig { dt, cg_tol: 1e-13, t_max: 1.0, ..Default::default() };
            let (next, _, _) = step(&u, &c, &nl).unwrap();
            let mut acc = 0.0;
            for (a, b) in next.values.iter().zip(&u.values) {
                acc += (a - b) * (a - b);
            }
            acc.sqrt()
        };
        let r = norm_delta(1e-3) / norm_delta(1e-4);
        assert!((r - 10.0).abs() < 0.01, "ratio {r}");
    }

    #[test]
    fn b_symmetry_and_coercivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let heis = Arc::new(StratifiedGroup::make_heisenberg(1).unwrap());
        let heis_grid = Grid::new(heis, &[(-1.0, 1.0); 3], &[8; 3]).unwrap();
        for grid in [cube_grid(8), heis_grid] {
            for &p in &[2.0, 3.0] {
                let mut mk = || {
                    let mut f = ScalarField::zeros(&grid);
                    for flat in 0..grid.len() {
                        if grid.is_interior(flat) {
                            f.values[flat] = rng.gen_range(-1.0..1.0);
                        }
                    }
                    f
                };
                let u_ref = mk();
                let w = mk();
                let v = mk();
                let bw = apply_b(&u_ref, &w, p, DEFAULT_EPS).unwrap();
                let bv = apply_b(&u_ref, &v, p, DEFAULT_EPS).unwrap();
                let a = bw.inner(&v);
                let b = w.inner(&bv);
                let scale = bw.lp_norm(2.0).unwrap() * v.lp_norm(2.0).unwrap()
                    + w.lp_norm(2.0).unwrap() * bv.lp_norm(2.0).unwrap();
                assert!((a - b).abs() <= 1e-12 * scale);
                // coercivity: <Bw, w> >= int w^2
                let q = bw.inner(&w);
                let ww = w.inner(&w);
                assert!(q >= ww - 1e-12 * ww.abs().max(1.0));
            }
        }
    }

    #[test]
    fn linear_run_decay_rate() {
        let n = 17;
        let grid = cube_grid(n);
        let h = 1.0 / (n - 1) as f64;
        let pi = std::f64::consts::PI;
        let mu = 3.0 * (2.0 - 2.0 * (pi * h).cos()) / (h * h);
        let expect_rate = mu / (1.0 + mu);
        let u0 = sin_product(&grid, 1.0);
        let cfg = PpConfig { t_max: 0.25, stride: 10, ..Default::default() };
        let rec = run(&u0, &cfg, &Nonlinearity::Zero, &PpMonitorParams {
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
            big_m: 0.0,
        })
        .unwrap();
        assert_eq!(rec.verdict, Verdict::ReachedTmax);
        // least-squares slope of ln sup(u) versus t
        let xs = &rec.sup.times;
        let ys: Vec<f64> = rec.sup.values.iter().map(|v| v.ln()).collect();
        let n = xs.len() as f64;
        let sx: f64 = xs.iter().sum();
        let sy: f64 = ys.iter().sum();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let rate = -slope;
        assert!(
            (rate - expect_rate).abs() / expect_rate < 0.01,
            "rate {rate} vs {expect_rate}"
        );
        // CG converged at every recorded step
        assert!(rec.cg_residual.values.iter().skip(1).all(|&r| r <= cfg.cg_tol));
    }

    #[test]
    fn f_functional_monotone_on_source_run() {
        let grid = cube_grid(9);
        let u0 = sin_product(&grid, 15.0);
        let cfg = PpConfig { t_max: 0.02, ..Default::default() };
        let nl = Nonlinearity::power(1.0, 3.0).unwrap();
        let rec = run(&u0, &cfg, &nl, &PpMonitorParams {
            alpha: 4.0,
            beta: 1.0 / 24.0,
            gamma: 0.1,
            big_m: 0.0,
        })
        .unwrap();
        for w in rec.f.values.windows(2) {
            assert!(w[1] >= w[0] - 1e-6 * w[0].abs());
        }
    }

    #[test]
    fn exp_decay_check_cases() {
        let grid = cube_grid(9);
        let u0 = sin_product(&grid, 1.0);
        let cfg = PpConfig { t_max: 0.5, stride: 25, ..Default::default() };
        let rec = run(&u0, &cfg, &Nonlinearity::Zero, &PpMonitorParams {
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
            big_m: 0.0,
        })
        .unwrap();
        // the linear run decays slower than exp(-2t): honest envelope violation
        assert!(!exp_decay_check(&rec, 2.0, 0.0).unwrap());
        // alpha > 0 is a precondition violation
        assert!(exp_decay_check(&rec, 2.0, 0.5).is_err());
    }

    #[test]
    fn initial_rejection() {
        let grid = cube_grid(5);
        let cfg = PpConfig::default();
        let mon = PpMonitorParams { alpha: 0.0, beta: 0.0, gamma: 0.0, big_m: 0.0 };
        assert!(matches!(
            run(&ScalarField::zeros(&grid), &cfg, &Nonlinearity::Zero, &mon),
            Err(Error::RejectedInitial(_))
        ));
    }

    #[test]
    fn config_validation() {
        assert!(PpConfig { cg_tol: 1e-3, ..Default::default() }.validate().is_err());
        assert!(PpConfig { picard_iters: 6, ..Default::default() }.validate().is_err());
        assert!(PpConfig { p: 1.0, ..Default::default() }.validate().is_err());
        assert!(PpConfig::default().validate().is_ok());
    }
}
