//! Discrete stochastic integrals of simple adapted integrands.
//!
//! All sums use left endpoints: `Σ_k η_k (Y_{t_{k+1}} − Y_{t_k})` with `Y`
//! one of `B^a`, `⟨B⟩^{ij}`, `⟨B^a, B^ā⟩` or `t`. Results are per-scenario
//! values; the sublinear expectation of a result is the max over controls of
//! replicate means.

use std::cell::Cell;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_dim, invalid, Error, Result};
use crate::gprocess::PathEnsemble;
use crate::grid::TimeGrid;
use crate::stats::{Estimate, ScenarioValues};

/// Read-only view of one scenario up to the current step.
///
/// Reading beyond `step` is recorded and turns the construction into an
/// adaptedness error.
pub struct PathPrefix<'a> {
    ens: &'a PathEnsemble,
    scenario: usize,
    step: usize,
    violation: Cell<Option<usize>>,
}

impl<'a> PathPrefix<'a> {
    fn touch(&self, j: usize) -> usize {
        if j > self.step && self.violation.get().is_none() {
            self.violation.set(Some(j));
        }
        j
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn t(&self) -> f64 {
        self.ens.grid().t(self.step)
    }

    pub fn control(&self) -> usize {
        self.ens.control_of(self.scenario)
    }

    pub fn state(&self, j: usize) -> &'a [f64] {
        self.ens.state(self.scenario, self.touch(j))
    }

    pub fn driver(&self, j: usize) -> &'a [f64] {
        self.ens.driver(self.scenario, self.touch(j))
    }

    pub fn qv(&self, j: usize, i: usize, l: usize) -> f64 {
        self.ens.qv(self.scenario, self.touch(j), i, l)
    }

    pub fn current_state(&self) -> &'a [f64] {
        self.state(self.step)
    }

    pub fn current_driver(&self) -> &'a [f64] {
        self.driver(self.step)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Values {
    Constant(f64),
    /// One value per step, shared by all scenarios.
    PerStep(Vec<f64>),
    /// `[scenario][step]`
    PerScenario { scenarios: usize, values: Vec<f64> },
}

/// `η_t = Σ_k ξ_k 1_{[t_k, t_{k+1})}(t)` sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SimpleProcess {
    label: String,
    grid: Option<TimeGrid>,
    values: Values,
}

impl SimpleProcess {
    pub fn constant(c: f64) -> Self {
        Self {
            label: format!("const({c})"),
            grid: None,
            values: Values::Constant(c),
        }
    }

    /// Deterministic `η_k = f(t_k)`.
    pub fn from_time_fn(label: impl Into<String>, grid: &TimeGrid, f: impl Fn(f64) -> f64) -> Self {
        Self {
            label: label.into(),
            grid: Some(grid.clone()),
            values: Values::PerStep((0..grid.steps()).map(|k| f(grid.t(k))).collect()),
        }
    }

    /// Scenario-dependent values computed from the path prefix up to `t_k`.
    pub fn from_causal(
        label: impl Into<String>,
        ens: &PathEnsemble,
        f: impl Fn(&PathPrefix) -> f64 + Sync,
    ) -> Result<Self> {
        let steps = ens.grid().steps();
        let rows: Vec<Result<Vec<f64>>> = (0..ens.scenarios())
            .into_par_iter()
            .map(|s| {
                (0..steps)
                    .map(|k| {
                        let prefix = PathPrefix {
                            ens,
                            scenario: s,
                            step: k,
                            violation: Cell::new(None),
                        };
                        let v = f(&prefix);
                        match prefix.violation.get() {
                            Some(requested) => Err(Error::Adaptedness { step: k, requested }),
                            None => Ok(v),
                        }
                    })
                    .collect()
            })
            .collect();
        let mut values = Vec::with_capacity(ens.scenarios() * steps);
        for r in rows {
            values.extend(r?);
        }
        Ok(Self {
            label: label.into(),
            grid: Some(ens.grid().clone()),
            values: Values::PerScenario {
                scenarios: ens.scenarios(),
                values,
            },
        })
    }

    /// Raw `[scenario][step]` values, e.g. from an external generator.
    pub fn from_values(label: impl Into<String>, grid: &TimeGrid, scenarios: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != scenarios * grid.steps() {
            return Err(invalid("value buffer does not match scenarios × steps"));
        }
        Ok(Self {
            label: label.into(),
            grid: Some(grid.clone()),
            values: Values::PerScenario { scenarios, values },
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `η_k` for scenario `s`.
    pub fn value(&self, s: usize, k: usize) -> f64 {
        match &self.values {
            Values::Constant(c) => *c,
            Values::PerStep(v) => v[k],
            Values::PerScenario { values, .. } => {
                let steps = self.grid.as_ref().map_or(0, |g| g.steps());
                values[s * steps + k]
            }
        }
    }

    /// `α·self + β·other`, pointwise.
    pub fn combine(&self, alpha: f64, other: &SimpleProcess, beta: f64, ens: &PathEnsemble) -> Result<Self> {
        self.check(ens)?;
        other.check(ens)?;
        let steps = ens.grid().steps();
        let values = (0..ens.scenarios())
            .flat_map(|s| (0..steps).map(move |k| (s, k)))
            .map(|(s, k)| alpha * self.value(s, k) + beta * other.value(s, k))
            .collect();
        Self::from_values(
            format!("{alpha}*({})+{beta}*({})", self.label, other.label),
            ens.grid(),
            ens.scenarios(),
            values,
        )
    }

    /// Pointwise `|η|^p`.
    pub fn abs_pow(&self, p: f64, ens: &PathEnsemble) -> Result<Self> {
        self.check(ens)?;
        let steps = ens.grid().steps();
        let values = (0..ens.scenarios())
            .flat_map(|s| (0..steps).map(move |k| (s, k)))
            .map(|(s, k)| self.value(s, k).abs().powf(p))
            .collect();
        Self::from_values(format!("|{}|^{p}", self.label), ens.grid(), ens.scenarios(), values)
    }

    fn check(&self, ens: &PathEnsemble) -> Result<()> {
        if let Some(g) = &self.grid {
            if g != ens.grid() {
                return Err(Error::GridMismatch(format!(
                    "integrand '{}' is sampled on a different grid",
                    self.label
                )));
            }
        }
        if let Values::PerScenario { scenarios, .. } = &self.values {
            if *scenarios != ens.scenarios() {
                return Err(Error::GridMismatch(format!(
                    "integrand has {scenarios} scenarios, ensemble has {}",
                    ens.scenarios()
                )));
            }
        }
        Ok(())
    }
}

/// Per-scenario left-endpoint sums. `increment(s, k)` is `Y_{k+1} − Y_k`.
/// Returns the final value and the running sup of `|∫_0^u|` over grid `u`.
fn riemann(
    eta: &SimpleProcess,
    ens: &PathEnsemble,
    increment: impl Fn(usize, usize) -> f64 + Sync,
) -> Result<(ScenarioValues, ScenarioValues)> {
    eta.check(ens)?;
    let steps = ens.grid().steps();
    let pairs: Vec<(f64, f64)> = (0..ens.scenarios())
        .into_par_iter()
        .map(|s| {
            let mut acc = 0.0;
            let mut sup: f64 = 0.0;
            for k in 0..steps {
                acc += eta.value(s, k) * increment(s, k);
                sup = sup.max(acc.abs());
            }
            (acc, sup)
        })
        .collect();
    let (c, r) = (ens.controls(), ens.replicates());
    Ok((
        ScenarioValues::new(c, r, pairs.iter().map(|p| p.0).collect()),
        ScenarioValues::new(c, r, pairs.iter().map(|p| p.1).collect()),
    ))
}

fn project(a: &[f64], x: &[f64]) -> f64 {
    a.iter().zip(x).map(|(u, v)| u * v).sum()
}

/// `∫ η dB^a`.
pub fn ito_integral(eta: &SimpleProcess, ens: &PathEnsemble, a: &[f64]) -> Result<ScenarioValues> {
    check_dim(ens.driver_dim(), a.len())?;
    riemann(eta, ens, |s, k| {
        project(a, ens.driver(s, k + 1)) - project(a, ens.driver(s, k))
    })
    .map(|r| r.0)
}

/// `∫ η d⟨B⟩^{ij}` with 0-based component indices `i ≤ j`.
pub fn qv_integral(eta: &SimpleProcess, ens: &PathEnsemble, i: usize, j: usize) -> Result<ScenarioValues> {
    let d = ens.driver_dim();
    if i > j || j >= d {
        return Err(invalid(format!("need 0 <= i <= j < {d}, got ({i}, {j})")));
    }
    riemann(eta, ens, |s, k| ens.qv(s, k + 1, i, j) - ens.qv(s, k, i, j)).map(|r| r.0)
}

/// `∫ η d⟨B^a, B^ā⟩` via polarization of the stored variations.
pub fn variation_integral(
    eta: &SimpleProcess,
    ens: &PathEnsemble,
    a: &[f64],
    abar: &[f64],
) -> Result<ScenarioValues> {
    variation_integral_with_sup(eta, ens, a, abar).map(|r| r.0)
}

fn variation_integral_with_sup(
    eta: &SimpleProcess,
    ens: &PathEnsemble,
    a: &[f64],
    abar: &[f64],
) -> Result<(ScenarioValues, ScenarioValues)> {
    let d = ens.driver_dim();
    check_dim(d, a.len())?;
    check_dim(d, abar.len())?;
    let plus: Vec<f64> = a.iter().zip(abar).map(|(x, y)| x + y).collect();
    let minus: Vec<f64> = a.iter().zip(abar).map(|(x, y)| x - y).collect();
    let mv = |s: usize, k: usize| 0.25 * (ens.variation(s, k, &plus) - ens.variation(s, k, &minus));
    riemann(eta, ens, |s, k| mv(s, k + 1) - mv(s, k))
}

/// `∫ η dt`.
pub fn time_integral(eta: &SimpleProcess, ens: &PathEnsemble) -> Result<ScenarioValues> {
    let grid = ens.grid();
    riemann(eta, ens, |_, k| grid.dt(k)).map(|r| r.0)
}

/// One inequality check estimated by Monte Carlo.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityRow {
    pub lemma: String,
    pub p: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub se: f64,
    /// `(rhs − lhs) / se`; for exact rows, `0` when the two sides agree to
    /// rounding and `±∞` otherwise. Not defined for ratio-only rows.
    pub margin: f64,
    /// `lhs / rhs`.
    pub ratio: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityReport {
    pub rows: Vec<InequalityRow>,
}

impl InequalityReport {
    pub fn row(&self, lemma: &str) -> Option<&InequalityRow> {
        self.rows.iter().find(|r| r.lemma == lemma)
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }
}

/// Statistical slack, in standard errors, for the Monte Carlo rows.
pub const SE_SLACK: f64 = 3.0;
const EXACT_TOL: f64 = 1e-10;

pub(crate) fn margin_of(lhs: f64, rhs: f64, se: f64) -> f64 {
    let gap = rhs - lhs;
    if se > 0.0 {
        gap / se
    } else if gap.abs() <= EXACT_TOL * (1.0 + lhs.abs().max(rhs.abs())) {
        0.0
    } else if gap > 0.0 {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    }
}

fn inequality(lemma: &str, p: f64, lhs: Estimate, rhs: f64, rhs_se: f64) -> InequalityRow {
    let se = lhs.se.hypot(rhs_se);
    let margin = margin_of(lhs.value, rhs, se);
    InequalityRow {
        lemma: lemma.into(),
        p,
        lhs: lhs.value,
        rhs,
        se,
        margin,
        ratio: lhs.value / rhs,
        passed: margin >= -SE_SLACK,
    }
}

/// Estimates both sides of the integral inequalities for `η`:
///
/// - `mean_zero`: `Ê[∫η dB^a] = 0` and `−Ê[−∫η dB^a] = 0`; `lhs` is the
///   larger absolute control mean.
/// - `second_moment`: `Ê[(∫η dB^a)²] ≤ σ²_{aaᵀ} Ê[∫η² dt]`.
/// - `bdg` (p ≥ 2): `Ê[sup_u |∫_0^u η dB^a|^p]` against
///   `σ^p_{aaᵀ} T^{p/2−1} Ê[∫|η|^p dt]`; only the implied constant is reported.
/// - `variation` (p ≥ 1): `Ê[sup_u |∫_0^u η d⟨B^a, B^ā⟩|^p] ≤
///   ((σ²_{(a+ā)} + σ²_{(a−ā)})/4)^p T^{p−1} Ê[∫|η|^p dt]`.
pub fn inequality_harness(
    ens: &PathEnsemble,
    eta: &SimpleProcess,
    p: f64,
    a: &[f64],
    abar: &[f64],
) -> Result<InequalityReport> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(invalid(format!("exponent p must be >= 1, got {p}")));
    }
    let u = ens.uncertainty();
    let horizon = ens.grid().horizon();
    let d = ens.driver_dim();
    check_dim(d, a.len())?;
    check_dim(d, abar.len())?;
    let mut rows = Vec::new();

    let ito_sup = riemann(eta, ens, |s, k| {
        project(a, ens.driver(s, k + 1)) - project(a, ens.driver(s, k))
    })?;
    let ito = &ito_sup.0;

    // Mean zero: both Ê[I] and Ê[−I] should vanish.
    let mut worst = Estimate {
        value: 0.0,
        se: 0.0,
        control: 0,
    };
    for c in 0..ito.controls() {
        let (m, se) = ito.control_mean(c);
        if m.abs() > worst.value.abs() || c == 0 {
            worst = Estimate {
                value: m.abs(),
                se,
                control: c,
            };
        }
    }
    rows.push(inequality("mean_zero", 1.0, worst, 0.0, 0.0));

    let sigma2_a = u.sigma2_upper(a)?;
    let second = ito.map(|v| v * v).sublinear_mean();
    let eta_sq = time_integral(&eta.abs_pow(2.0, ens)?, ens)?.sublinear_mean();
    rows.push(inequality(
        "second_moment",
        2.0,
        second,
        sigma2_a * eta_sq.value,
        sigma2_a * eta_sq.se,
    ));

    let eta_p = time_integral(&eta.abs_pow(p, ens)?, ens)?.sublinear_mean();
    if p >= 2.0 {
        let lhs = ito_sup.1.map(|v| v.powf(p)).sublinear_mean();
        let rest = sigma2_a.powf(p / 2.0) * horizon.powf(p / 2.0 - 1.0) * eta_p.value;
        rows.push(InequalityRow {
            lemma: "bdg".into(),
            p,
            lhs: lhs.value,
            rhs: rest,
            se: lhs.se,
            margin: f64::NAN,
            ratio: lhs.value / rest,
            passed: (lhs.value / rest).is_finite() || (lhs.value == 0.0 && rest == 0.0),
        });
    }

    let plus: Vec<f64> = a.iter().zip(abar).map(|(x, y)| x + y).collect();
    let minus: Vec<f64> = a.iter().zip(abar).map(|(x, y)| x - y).collect();
    let k = ((u.sigma2_upper(&plus)? + u.sigma2_upper(&minus)?) / 4.0).powf(p);
    let (_, var_sup) = variation_integral_with_sup(eta, ens, a, abar)?;
    let lhs = var_sup.map(|v| v.powf(p)).sublinear_mean();
    let scale = k * horizon.powf(p - 1.0);
    rows.push(inequality("variation", p, lhs, scale * eta_p.value, scale * eta_p.se));

    Ok(InequalityReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gprocess::{simulate_gbm, ControlGrid, ControlPolicy, VolatilityUncertainty};
    use approx::assert_abs_diff_eq;

    fn ensemble(sigma_min: f64, sigma_max: f64, d: usize, reps: usize) -> PathEnsemble {
        let u = VolatilityUncertainty::interval(d, sigma_min, sigma_max).unwrap();
        let cg = ControlGrid::uniform(&u, 3, ControlPolicy::Static).unwrap();
        simulate_gbm(&cg, &TimeGrid::uniform(1.0, 20).unwrap(), reps, 9).unwrap()
    }

    #[test]
    fn constant_integrands() {
        let ens = ensemble(1.0, 2.0, 1, 50);
        let zero = ito_integral(&SimpleProcess::constant(0.0), &ens, &[1.0]).unwrap();
        assert!(zero.values().iter().all(|v| *v == 0.0));
        let one = ito_integral(&SimpleProcess::constant(1.0), &ens, &[1.0]).unwrap();
        for s in 0..ens.scenarios() {
            assert_abs_diff_eq!(one.values()[s], ens.driver(s, 20)[0], epsilon = 1e-12);
        }
        let q = qv_integral(&SimpleProcess::constant(3.0), &ens, 0, 0).unwrap();
        for c in 0..ens.controls() {
            let sigma = [1.0, 1.5, 2.0][c];
            assert_abs_diff_eq!(q.get(c, 0), 3.0 * sigma * sigma, epsilon = 1e-12);
        }
        let t = time_integral(&SimpleProcess::constant(1.0), &ens).unwrap();
        assert_abs_diff_eq!(t.get(0, 0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn time_integral_of_t_is_left_sum() {
        let ens = ensemble(1.0, 1.0, 1, 1);
        let g = ens.grid().clone();
        let eta = SimpleProcess::from_time_fn("t", &g, |t| t);
        let v = time_integral(&eta, &ens).unwrap().get(0, 0);
        let n = 20.0;
        // Σ_{k<N} (k/N)(1/N) = (N−1)/(2N)
        assert_abs_diff_eq!(v, (n - 1.0) / (2.0 * n), epsilon = 1e-12);
    }

    #[test]
    fn off_diagonal_vanishes_for_isotropic() {
        let ens = ensemble(1.0, 2.0, 2, 5);
        let q = qv_integral(&SimpleProcess::constant(1.0), &ens, 0, 1).unwrap();
        assert!(q.values().iter().all(|v| v.abs() < 1e-15));
        assert!(qv_integral(&SimpleProcess::constant(1.0), &ens, 1, 0).is_err());
        assert!(qv_integral(&SimpleProcess::constant(1.0), &ens, 0, 2).is_err());
    }

    #[test]
    fn acausal_integrand_rejected() {
        let ens = ensemble(1.0, 1.0, 1, 3);
        let peek = SimpleProcess::from_causal("peek", &ens, |p| p.driver(p.step() + 1)[0]);
        assert!(matches!(peek, Err(Error::Adaptedness { step: 0, requested: 1 })));
        let ok = SimpleProcess::from_causal("sign", &ens, |p| p.current_driver()[0].signum());
        assert!(ok.is_ok());
    }

    #[test]
    fn grid_mismatch_rejected() {
        let ens = ensemble(1.0, 1.0, 1, 3);
        let other = TimeGrid::uniform(2.0, 20).unwrap();
        let eta = SimpleProcess::from_time_fn("t", &other, |t| t);
        assert!(matches!(time_integral(&eta, &ens), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn variation_branch_is_exact_for_constant_integrand() {
        let ens = ensemble(1.0, 2.0, 1, 20);
        let r = inequality_harness(&ens, &SimpleProcess::constant(1.0), 1.0, &[1.0], &[1.0]).unwrap();
        let v = r.row("variation").unwrap();
        assert_abs_diff_eq!(v.lhs, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v.rhs, 4.0, epsilon = 1e-12);
        assert_eq!(v.se, 0.0);
        assert!(v.passed);
        assert!(r.row("bdg").is_none());
        assert!(inequality_harness(&ens, &SimpleProcess::constant(1.0), 0.5, &[1.0], &[1.0]).is_err());
    }
}
