//! A-priori estimate constants and diagnostic reports.
//!
//! Every report is a flat table with columns `(check, t, lhs, bound, margin,
//! se)` plus a summary map, so the CLI can write all of them the same way.
//! `Ê` is estimated as the largest per-control replicate mean, with the
//! standard error of the attaining control.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_dim, invalid, Error, Result};
use crate::gprocess::{simulate_gbm, ControlGrid, ControlPolicy, PathEnsemble, VolatilityUncertainty};
use crate::grid::TimeGrid;
use crate::solver::{builtin, picard_on_driver, Coefficients, ConvergenceTrace, PicardOptions, PicardOutcome};
use crate::stats::mean_and_se;
use crate::sublinear::DistributionProcess;

/// Separations `|x − y|` used by [`initial_lipschitz_report`].
pub const LIPSCHITZ_SEPARATIONS: [f64; 3] = [1.0, 0.1, 0.01];

/// `C_p` used when none is supplied.
pub const DEFAULT_CP: f64 = 4.0;

/// Relative slack for comparisons that are exact up to rounding.
const ROUNDING: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub check: String,
    pub t: f64,
    pub lhs: f64,
    pub bound: f64,
    /// `bound − lhs` for bound checks; deviation in SE units for
    /// closed-form comparisons.
    pub margin: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub name: String,
    pub rows: Vec<ReportRow>,
    pub passed: bool,
    pub summary: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl Report {
    fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            rows: Vec::new(),
            passed: true,
            summary: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    fn push(&mut self, check: impl Into<String>, t: f64, lhs: f64, bound: f64, margin: f64, se: f64) {
        self.rows.push(ReportRow {
            check: check.into(),
            t,
            lhs,
            bound,
            margin,
            se,
        });
    }

    fn note(&mut self, key: &str, v: f64) {
        self.summary.insert(key.into(), v);
    }

    pub fn rows_for<'a>(&'a self, check: &'a str) -> impl Iterator<Item = &'a ReportRow> + 'a {
        self.rows.iter().filter(move |r| r.check == check)
    }
}

/// Constants of the moment and initial-data estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateConstants {
    pub p: f64,
    pub k: f64,
    pub t: f64,
    pub m: f64,
    pub c_p: f64,
    /// `|x|` of the initial condition.
    pub x_norm: f64,
    /// `max_{i≤j} ((σ²_{(eᵢ+eⱼ)} + σ²_{(eᵢ−eⱼ)})/4)^p`.
    pub c_sigma: f64,
    /// `max_j σ^p_{eⱼeⱼᵀ}`.
    pub sigma_p: f64,
    /// `T^{p−1} + C_σ T^{p−1} + C_p σ^p T^{p/2−1}`.
    pub bracket: f64,
    pub c1: f64,
    pub c2: f64,
    /// Exponent rate of `C₃(t) = 4^{p−1} exp(rate·t)`, with `σ^p` in the bracket.
    pub c3_rate: f64,
    /// The same rate with `σ^p` dropped from the last bracket term.
    pub c3_rate_stated: f64,
}

impl EstimateConstants {
    pub fn new(p: f64, k: f64, t: f64, m: f64, x_norm: f64, u: &VolatilityUncertainty, c_p: f64) -> Result<Self> {
        if !(p >= 1.0) || !p.is_finite() {
            return Err(invalid(format!("p must be >= 1, got {p}")));
        }
        for (name, v) in [("K", k), ("T", t), ("M", m), ("|x|", x_norm), ("C_p", c_p)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        let d = u.dim();
        let mut c_sigma: f64 = 0.0;
        for i in 0..d {
            for j in i..d {
                let mut plus = vec![0.0; d];
                let mut minus = vec![0.0; d];
                plus[i] += 1.0;
                plus[j] += 1.0;
                minus[i] += 1.0;
                minus[j] -= 1.0;
                let s = (u.sigma2_upper(&plus)? + u.sigma2_upper(&minus)?) / 4.0;
                c_sigma = c_sigma.max(s.powf(p));
            }
        }
        let sigma_p = u.sigma2_max_coordinate().powf(p / 2.0);
        let tp1 = t.powf(p - 1.0);
        let th = t.powf(p / 2.0 - 1.0);
        let bracket = tp1 + c_sigma * tp1 + c_p * sigma_p * th;
        let bracket_stated = tp1 + c_sigma * tp1 + c_p * th;
        let kp = k.powf(p);
        Ok(Self {
            p,
            k,
            t,
            m,
            c_p,
            x_norm,
            c_sigma,
            sigma_p,
            bracket,
            c1: 4f64.powf(p - 1.0) * x_norm.powf(p) + 8f64.powf(p - 1.0) * m * bracket,
            c2: 2f64.powf(4.0 * p - 3.0) * kp * bracket,
            c3_rate: 2f64.powf(3.0 * p - 2.0) * kp * bracket,
            c3_rate_stated: 2f64.powf(3.0 * p - 2.0) * kp * bracket_stated,
        })
    }

    /// Constants for a coefficient set started at `x0`, with `M` from [`m_bound`].
    pub fn for_problem(p: f64, c: &Coefficients, x0: &[f64], grid: &TimeGrid, u: &VolatilityUncertainty, c_p: f64) -> Result<Self> {
        let m = m_bound(c, grid, p)?;
        let x_norm = norm(x0);
        Self::new(p, c.lipschitz(), grid.horizon(), m, x_norm, u, c_p)
    }

    /// Right side of the moment estimate, `C₁ e^{C₂ t}`.
    pub fn moment_bound(&self, t: f64) -> f64 {
        self.c1 * (self.c2 * t).exp()
    }

    pub fn c3(&self, t: f64) -> f64 {
        4f64.powf(self.p - 1.0) * (self.c3_rate * t).exp()
    }

    pub fn c3_stated(&self, t: f64) -> f64 {
        4f64.powf(self.p - 1.0) * (self.c3_rate_stated * t).exp()
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `max_φ ∫_0^T |φ(s, 0, δ₀)|^p ds` over `φ ∈ {b, h, σ}` (each stacked into
/// one vector), by a left Riemann sum on `grid`.
pub fn m_bound(c: &Coefficients, grid: &TimeGrid, p: f64) -> Result<f64> {
    let l = c.layout();
    let zero = vec![0.0; l.n];
    let law = crate::sublinear::EmpiricalSublinearDistribution::dirac(zero.clone())?;
    let mut acc = [0.0f64; 3];
    for k in 0..grid.steps() {
        let v = c.eval(grid.t(k), &zero, &law)?;
        let qv_end = l.n * (1 + l.pairs());
        let parts = [&v[l.drift()], &v[l.n..qv_end], &v[qv_end..]];
        for (a, part) in acc.iter_mut().zip(parts) {
            *a += norm(part).powf(p) * grid.dt(k);
        }
    }
    Ok(acc.iter().copied().fold(0.0, f64::max))
}

/// Per scenario, `sup_{j≤k} f(j)` for every `k`, stored as `[scenario][k]`.
fn running_sup(ens: &PathEnsemble, f: impl Fn(usize, usize) -> f64 + Sync) -> Vec<f64> {
    let len = ens.grid().len();
    let mut out = vec![0.0; ens.scenarios() * len];
    out.par_chunks_mut(len).enumerate().for_each(|(s, row)| {
        let mut m = f64::NEG_INFINITY;
        for (k, r) in row.iter_mut().enumerate() {
            m = m.max(f(s, k));
            *r = m;
        }
    });
    out
}

/// Max over controls of the replicate mean of `vals[s][k]`, with the SE of
/// the attaining control.
fn sublinear_at(ens: &PathEnsemble, vals: &[f64], k: usize) -> (f64, f64) {
    let len = ens.grid().len();
    let reps = ens.replicates();
    let mut best = (f64::NEG_INFINITY, 0.0);
    for c in 0..ens.controls() {
        let (m, se) = mean_and_se(reps, &|r| vals[ens.scenario(c, r) * len + k]);
        if m > best.0 {
            best = (m, se);
        }
    }
    best
}

fn bound_passes(lhs: f64, bound: f64) -> bool {
    lhs <= bound + ROUNDING * bound.abs().max(1.0)
}

/// Checks `Ê[sup_{s≤t} |X_s|^p] ≤ C₁ e^{C₂ t}` at every grid time.
///
/// The supremum runs over grid points only, which can only underestimate the
/// continuous-time supremum.
pub fn moment_bound_report(ens: &PathEnsemble, consts: &EstimateConstants) -> Result<Report> {
    if !(consts.p >= 2.0) {
        return Err(invalid(format!("moment bound needs p >= 2, got {}", consts.p)));
    }
    let p = consts.p;
    let sup = running_sup(ens, |s, k| norm(ens.state(s, k)).powf(p));
    let mut rep = Report::new("moment_bound");
    for k in 0..ens.grid().len() {
        let t = ens.grid().t(k);
        let (lhs, se) = sublinear_at(ens, &sup, k);
        let bound = consts.moment_bound(t);
        rep.passed &= bound_passes(lhs, bound);
        rep.push("moment_bound", t, lhs, bound, bound - lhs, se);
    }
    rep.note("p", p);
    rep.note("c_p", consts.c_p);
    rep.note("c1", consts.c1);
    rep.note("c2", consts.c2);
    rep.note("c_sigma", consts.c_sigma);
    rep.note("m", consts.m);
    rep.note("k", consts.k);
    rep.note(
        "min_margin",
        rep.rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min),
    );
    rep.notes.push("supremum over grid points; underestimates the continuous-time supremum".into());
    Ok(rep)
}

/// Simulation settings shared by the coupled and classical runs.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub controls: ControlGrid,
    pub grid: TimeGrid,
    pub replicates: usize,
    pub seed: u64,
    pub picard: PicardOptions,
}

/// `Ê[sup_{s≤t} |X^x_s − X^y_s|^p]` per grid time with SE, from two Picard
/// solves on one driver.
///
/// The `y` solve performs exactly as many Picard applications as the `x`
/// solve, so both laws come from the same number of iterations.
pub fn coupled_difference(c: &Coefficients, x: &[f64], y: &[f64], p: f64, run: &RunConfig) -> Result<Vec<(f64, f64)>> {
    let base = CoupledBase::solve(c, x, run)?;
    if x == y {
        return Ok(vec![(0.0, 0.0); run.grid.len()]);
    }
    base.difference(c, y, p, run)
}

/// The `x` solve and its driver, shared by every `y` of a coupled study.
struct CoupledBase {
    driver: PathEnsemble,
    x: PicardOutcome,
}

impl CoupledBase {
    fn solve(c: &Coefficients, x: &[f64], run: &RunConfig) -> Result<Self> {
        check_dim(c.state_dim(), x.len())?;
        let driver = simulate_gbm(&run.controls, &run.grid, run.replicates, run.seed)?;
        let opts = PicardOptions {
            initial: None,
            ..run.picard.clone()
        };
        let x = picard_on_driver(c, x, &driver, &opts)?;
        Ok(Self { driver, x })
    }

    fn difference(&self, c: &Coefficients, y: &[f64], p: f64, run: &RunConfig) -> Result<Vec<(f64, f64)>> {
        check_dim(c.state_dim(), y.len())?;
        let opts = PicardOptions {
            initial: None,
            tol: f64::MIN_POSITIVE,
            max_iter: self.x.trace.iterations(),
            ..run.picard.clone()
        };
        let oy = picard_on_driver(c, y, &self.driver, &opts)?;
        let (ex, ey) = (&self.x.ensemble, &oy.ensemble);
        let sup = running_sup(ex, |s, k| {
            let d: f64 = ex
                .state(s, k)
                .iter()
                .zip(ey.state(s, k))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d.sqrt().powf(p)
        });
        Ok((0..run.grid.len()).map(|k| sublinear_at(ex, &sup, k)).collect())
    }
}

/// Checks `Ê[sup_{s≤t} |X^x_s − X^y_s|^p] ≤ C₃ |x − y|^p` with
/// `y = x + δ·direction` for each separation `δ`.
///
/// Rows hold the ratio `LHS/δ^p`, bounded by the smaller of the two
/// closed forms of `C₃(t)`.
pub fn initial_lipschitz_report(
    c: &Coefficients,
    x: &[f64],
    direction: &[f64],
    separations: &[f64],
    consts: &EstimateConstants,
    run: &RunConfig,
) -> Result<Report> {
    let p = consts.p;
    if !(p >= 2.0) {
        return Err(invalid(format!("initial-data estimate needs p >= 2, got {p}")));
    }
    check_dim(c.state_dim(), direction.len())?;
    let dn = norm(direction);
    if !(dn > 0.0) {
        return Err(invalid("direction must be nonzero"));
    }
    if separations.is_empty() {
        return Err(invalid("no separations given"));
    }
    if let Some(s) = separations.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(invalid(format!("ratio needs x != y, got separation {s}")));
    }
    let mut rep = Report::new("initial_lipschitz");
    let last = run.grid.len() - 1;
    let mut at_end = Vec::new();
    let base = CoupledBase::solve(c, x, run)?;
    for &sep in separations {
        let y: Vec<f64> = x.iter().zip(direction).map(|(a, e)| a + sep * e / dn).collect();
        let diff = base.difference(c, &y, p, run)?;
        let scale = sep.powf(p);
        let check = format!("initial_lipschitz_sep_{sep}");
        for (k, (lhs, se)) in diff.iter().enumerate() {
            let t = run.grid.t(k);
            let ratio = lhs / scale;
            let bound = consts.c3(t).min(consts.c3_stated(t));
            rep.passed &= bound_passes(ratio, bound);
            rep.push(check.clone(), t, ratio, bound, bound - ratio, se / scale);
        }
        at_end.push((sep, diff[last].0, diff[last].0 / scale, diff[last].1 / scale));
    }
    for (sep, lhs, ratio, se) in &at_end {
        rep.note(&format!("lhs_at_T_sep_{sep}"), *lhs);
        rep.note(&format!("ratio_at_T_sep_{sep}"), *ratio);
        rep.note(&format!("ratio_se_at_T_sep_{sep}"), *se);
    }
    // Stability of the ratio across separations, in SE units of the pair.
    let mut spread: f64 = 0.0;
    for a in &at_end {
        for b in &at_end {
            let se = (a.3 * a.3 + b.3 * b.3).sqrt();
            let gap = (a.2 - b.2).abs();
            let tol = ROUNDING * a.2.abs().max(b.2.abs()).max(1.0);
            spread = spread.max(if gap <= tol { 0.0 } else if se > 0.0 { gap / se } else { f64::INFINITY });
        }
    }
    let mut sorted = at_end.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let monotone = sorted.windows(2).all(|w| w[0].1 <= w[1].1);
    rep.note("ratio_spread_se", spread);
    rep.note("lhs_monotone_in_separation", if monotone { 1.0 } else { 0.0 });
    rep.note("c3_at_T", consts.c3(run.grid.horizon()));
    rep.note("c3_stated_at_T", consts.c3_stated(run.grid.horizon()));
    rep.note("c_p", consts.c_p);
    rep.note("p", p);
    Ok(rep)
}

/// Settings of the singleton-volatility comparison against the classical
/// mean-field OU closed forms.
#[derive(Debug, Clone)]
pub struct ClassicalConfig {
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub x0: f64,
    pub horizon: f64,
    pub steps: usize,
    pub replicates: usize,
    pub seed: u64,
    pub picard: PicardOptions,
}

impl Default for ClassicalConfig {
    fn default() -> Self {
        Self {
            a: -1.0,
            b: 0.5,
            sigma: 1.0,
            sigma_min: 0.2,
            sigma_max: 0.2,
            x0: 1.0,
            horizon: 1.0,
            steps: 200,
            replicates: 10_000,
            seed: 0,
            picard: PicardOptions::default(),
        }
    }
}

/// Relative tolerance of the terminal-mean comparison.
pub const CLASSICAL_REL_TOL: f64 = 0.02;

/// Exact mean and variance of `dX = (aX + b E[X]) dt + s dW`, `X_0 = x0`.
pub fn classical_moments(a: f64, b: f64, s: f64, x0: f64, t: f64) -> (f64, f64) {
    let mean = x0 * ((a + b) * t).exp();
    let var = if a == 0.0 {
        s * s * t
    } else {
        s * s * ((2.0 * a * t).exp() - 1.0) / (2.0 * a)
    };
    (mean, var)
}

fn deviation_se(lhs: f64, exact: f64, se: f64) -> f64 {
    let gap = (lhs - exact).abs();
    if gap <= ROUNDING * exact.abs().max(1.0) {
        0.0
    } else if se > 0.0 {
        gap / se
    } else {
        f64::INFINITY
    }
}

/// Compares the mean and variance paths of the mean-field OU solution under
/// a single volatility with the classical closed forms.
///
/// Passes when the Picard iteration converged and the terminal mean is within
/// `max(3 SE, 2%)` of `x0 e^{(a+b)T}`.
pub fn classical_limit_check(cfg: &ClassicalConfig) -> Result<Report> {
    if cfg.sigma_min != cfg.sigma_max {
        return Err(invalid(format!(
            "classical limit needs a singleton volatility set, got [{}, {}]",
            cfg.sigma_min, cfg.sigma_max
        )));
    }
    let u = VolatilityUncertainty::singleton(1, cfg.sigma_max)?;
    let controls = ControlGrid::uniform(&u, 1, ControlPolicy::Static)?;
    let grid = TimeGrid::uniform(cfg.horizon, cfg.steps)?;
    let params: BTreeMap<String, f64> = [("a", cfg.a), ("b", cfg.b), ("sigma", cfg.sigma), ("h", 0.0)]
        .iter()
        .map(|(k, v)| (k.to_string(), *v))
        .collect();
    let coeffs = builtin("mean-field-ou", &params, 1, 1)?;
    let driver = simulate_gbm(&controls, &grid, cfg.replicates, cfg.seed)?;
    let out = picard_on_driver(&coeffs, &[cfg.x0], &driver, &cfg.picard)?;
    let ens = &out.ensemble;
    let s_eff = cfg.sigma * cfg.sigma_max;
    let n = cfg.replicates;

    let mut rep = Report::new("classical_limit");
    let (mut max_mean_se, mut max_var_se, mut max_mean_abs, mut max_var_abs) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut terminal = (0.0, 0.0, 0.0);
    for k in 0..grid.len() {
        let t = grid.t(k);
        let (m_exact, v_exact) = classical_moments(cfg.a, cfg.b, s_eff, cfg.x0, t);
        let x = |r: usize| ens.state(ens.scenario(0, r), k)[0];
        let (mean, mean_se) = mean_and_se(n, &x);
        let (var, var_se) = if n > 1 {
            // Centre on the first sample so identical samples give exactly 0.
            let d = |r: usize| x(r) - x(0);
            let (md, _) = mean_and_se(n, &d);
            let (v, se) = mean_and_se(n, &|r| (d(r) - md) * (d(r) - md));
            let bessel = n as f64 / (n - 1) as f64;
            (v * bessel, se * bessel)
        } else {
            (0.0, 0.0)
        };
        let dm = deviation_se(mean, m_exact, mean_se);
        let dv = deviation_se(var, v_exact, var_se);
        max_mean_se = max_mean_se.max(dm);
        max_var_se = max_var_se.max(dv);
        max_mean_abs = max_mean_abs.max((mean - m_exact).abs());
        max_var_abs = max_var_abs.max((var - v_exact).abs());
        rep.push("classical_mean", t, mean, m_exact, dm, mean_se);
        rep.push("classical_variance", t, var, v_exact, dv, var_se);
        terminal = (mean, m_exact, mean_se);
    }
    let (mean_t, exact_t, se_t) = terminal;
    let allowed = (3.0 * se_t).max(CLASSICAL_REL_TOL * exact_t.abs());
    rep.passed = out.converged && (mean_t - exact_t).abs() <= allowed;
    rep.note("mean_at_T", mean_t);
    rep.note("exact_mean_at_T", exact_t);
    rep.note("se_at_T", se_t);
    rep.note("allowed_deviation_at_T", allowed);
    rep.note("max_mean_deviation_se", max_mean_se);
    rep.note("max_variance_deviation_se", max_var_se);
    rep.note("max_mean_deviation_abs", max_mean_abs);
    rep.note("max_variance_deviation_abs", max_var_abs);
    rep.note("iterations", out.trace.iterations() as f64);
    rep.note("converged", if out.converged { 1.0 } else { 0.0 });
    if !out.converged {
        rep.notes.push("Picard iteration did not reach the tolerance".into());
    }
    Ok(rep)
}

/// Fit-then-verify check of `δ_k² ≤ C^k (T^k/k!) δ₀²` over a Picard trace.
///
/// Entries with `δ_k` below the trace's noise floor are excluded and listed
/// in the notes. `fitted_c` is the smallest `C` satisfying every retained
/// entry; `passed` reports whether the supplied `c_t` does.
pub fn picard_rate_check(trace: &ConvergenceTrace, c_t: f64) -> Result<Report> {
    if !(c_t >= 0.0 && c_t.is_finite()) {
        return Err(invalid(format!("C_T estimate must be finite and >= 0, got {c_t}")));
    }
    let delta0 = trace
        .delta(0)
        .ok_or_else(|| Error::InvalidInput("trace has no initial distance".into()))?;
    if trace.iterations() == 0 {
        return Err(invalid("trace has no Picard iteration beyond the first"));
    }
    let horizon = trace.horizon;
    let floor = trace.noise_floor;
    let mut rep = Report::new("picard_rate");
    let mut fitted: f64 = 0.0;
    let mut masked = Vec::new();
    let mut log_fact = 0.0;
    for e in trace.entries.iter().filter(|e| e.k >= 1) {
        let k = e.k as f64;
        log_fact += k.ln();
        let check = format!("picard_rate_k{}", e.k);
        let lhs = e.delta * e.delta;
        let bound = (k * (c_t * horizon).ln() - log_fact).exp() * delta0 * delta0;
        if e.delta < floor {
            masked.push(e.k);
            rep.push(check, horizon, lhs, bound, f64::NAN, 0.0);
            continue;
        }
        let need = if delta0 < floor {
            f64::INFINITY
        } else {
            (log_fact + 2.0 * (e.delta / delta0).ln()).exp().powf(1.0 / k) / horizon
        };
        fitted = fitted.max(need);
        rep.passed &= bound_passes(lhs, bound);
        rep.push(check, horizon, lhs, bound, bound - lhs, 0.0);
    }
    rep.note("c_t", c_t);
    rep.note("fitted_c", fitted);
    rep.note("delta0", delta0);
    rep.note("noise_floor", floor);
    rep.note("masked", masked.len() as f64);
    if !masked.is_empty() {
        let ks: Vec<String> = masked.iter().map(|k| k.to_string()).collect();
        rep.notes.push(format!("below noise floor, excluded: k = {}", ks.join(", ")));
    }
    Ok(rep)
}

/// Law started from `F⁽⁰⁾` other than the Dirac process, for uniqueness
/// comparisons: a constant process of the Dirac at `x0 + shift`.
pub fn shifted_initial(grid: &TimeGrid, x0: &[f64], shift: f64) -> Result<DistributionProcess> {
    let x: Vec<f64> = x0.iter().map(|v| v + shift).collect();
    DistributionProcess::dirac(grid.clone(), &x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constants_match_hand_computation() {
        let u = VolatilityUncertainty::interval(1, 0.5, 2.0).unwrap();
        let c = EstimateConstants::new(2.0, 1.0, 1.0, 1.0, 1.0, &u, 4.0).unwrap();
        assert_relative_eq!(c.c_sigma, 16.0, max_relative = 1e-15);
        assert_relative_eq!(c.sigma_p, 4.0, max_relative = 1e-15);
        assert_relative_eq!(c.bracket, 33.0, max_relative = 1e-15);
        assert_relative_eq!(c.c1, 268.0, max_relative = 1e-15);
        assert_relative_eq!(c.c2, 1056.0, max_relative = 1e-15);
        assert_relative_eq!(c.c3_rate, 528.0, max_relative = 1e-15);
        assert_relative_eq!(c.c3_rate_stated, 336.0, max_relative = 1e-15);
        assert_relative_eq!(c.c3(0.01), 4.0 * 5.28f64.exp(), max_relative = 1e-14);
    }

    #[test]
    fn c_sigma_uses_mixed_directions() {
        let a = crate::gprocess::VolMatrix::new(2, vec![1.0, 0.0, 0.0, 2.0]).unwrap();
        let u = VolatilityUncertainty::matrices(vec![a]).unwrap();
        let c = EstimateConstants::new(1.0, 0.0, 1.0, 0.0, 0.0, &u, 4.0).unwrap();
        // i = j = 1: σ²(2e₁)/4 = 4.
        assert_relative_eq!(c.c_sigma, 4.0, max_relative = 1e-15);
    }

    #[test]
    fn m_bound_for_mean_field_ou() {
        let grid = TimeGrid::uniform(2.0, 10).unwrap();
        let c = builtin("mean-field-ou", &BTreeMap::new(), 1, 1).unwrap();
        // b(0, δ₀) = 0, σ = 1, h = 0.
        assert_relative_eq!(m_bound(&c, &grid, 2.0).unwrap(), 2.0, max_relative = 1e-14);
    }

    #[test]
    fn classical_rejects_interval() {
        let cfg = ClassicalConfig {
            sigma_min: 0.1,
            ..ClassicalConfig::default()
        };
        assert!(classical_limit_check(&cfg).is_err());
    }

    #[test]
    fn deterministic_classical_case_has_zero_variance() {
        let cfg = ClassicalConfig {
            sigma: 0.0,
            replicates: 20,
            steps: 50,
            ..ClassicalConfig::default()
        };
        let rep = classical_limit_check(&cfg).unwrap();
        assert!(rep.rows_for("classical_variance").all(|r| r.lhs == 0.0 && r.bound == 0.0));
        assert!(rep.passed);
    }
}
