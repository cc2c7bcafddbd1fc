//! Euler scheme for the frozen equation and Picard iteration on laws.
//!
//! With the law argument frozen at a distribution process `F`, the equation
//!
//! `dX = b(t, X, F_t) dt + Σ_{i≤j} h_ij(t, X, F_t) d⟨B⟩^{ij} + Σ_j σ_j(t, X, F_t) dB^j`
//!
//! is an ordinary G-SDE, solved per scenario by explicit Euler. The Picard
//! map sends `F` to the law of that solution; its fixed point solves the
//! distribution-dependent equation. The driver is simulated once and reused
//! by every iteration, so successive laws differ only through `F`.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_dim, invalid, Error, Result};
use crate::gprocess::{simulate_gbm, ControlGrid, PathEnsemble};
use crate::grid::TimeGrid;
use crate::metric::{d1t_with, wasserstein1_1d, MetricOptions};
use crate::sublinear::{distribution_of, DistributionProcess, EmpiricalSublinearDistribution};

/// States beyond this magnitude abort the solve.
pub const DIVERGENCE_BOUND: f64 = 1e12;

/// Shape of the flat coefficient buffer filled by a frozen field:
/// drift `[n]`, then `h_ij` for each `i ≤ j` `[pairs][n]`, then `σ_j` `[d][n]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n: usize,
    pub d: usize,
}

impl Layout {
    pub fn pairs(&self) -> usize {
        self.d * (self.d + 1) / 2
    }

    pub fn len(&self) -> usize {
        self.n * (1 + self.pairs() + self.d)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn drift(&self) -> std::ops::Range<usize> {
        0..self.n
    }

    /// Slot of `h_ij`, `i ≤ j`, 0-based.
    pub fn qv(&self, i: usize, j: usize) -> std::ops::Range<usize> {
        let p = i * self.d - i * i.saturating_sub(1) / 2 + (j - i);
        let start = self.n * (1 + p);
        start..start + self.n
    }

    pub fn diffusion(&self, j: usize) -> std::ops::Range<usize> {
        let start = self.n * (1 + self.pairs() + j);
        start..start + self.n
    }
}

/// `x ↦ (b, h, σ)(t, x, F_t)` at one frozen `(t, F_t)`.
pub type Frozen<'a> = Box<dyn Fn(&[f64], &mut [f64]) + Send + Sync + 'a>;

/// A coefficient triple that can be frozen at a law.
///
/// Freezing lets law-dependent quantities be computed once per time step
/// instead of once per particle.
pub trait CoefficientField: Send + Sync {
    fn freeze<'a>(&'a self, t: f64, law: &'a EmpiricalSublinearDistribution) -> Result<Frozen<'a>>;
}

/// `(t, x, F) ↦ ℝⁿ`.
pub type LawFn = Arc<dyn Fn(f64, &[f64], &EmpiricalSublinearDistribution) -> Vec<f64> + Send + Sync>;

/// `(t, x, y) ↦ ℝⁿ`, the section integrated against the law.
pub type SectionFn = Arc<dyn Fn(f64, &[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// The triple `(b, h_ij, σ_j)` with declared joint Lipschitz constant `K`.
#[derive(Clone)]
pub struct Coefficients {
    name: String,
    layout: Layout,
    lipschitz: f64,
    law_dependent: bool,
    field: Arc<dyn CoefficientField>,
}

impl std::fmt::Debug for Coefficients {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Coefficients")
            .field("name", &self.name)
            .field("layout", &self.layout)
            .field("lipschitz", &self.lipschitz)
            .field("law_dependent", &self.law_dependent)
            .finish()
    }
}

impl Coefficients {
    pub fn from_field(
        name: impl Into<String>,
        n: usize,
        d: usize,
        lipschitz: f64,
        law_dependent: bool,
        field: Arc<dyn CoefficientField>,
    ) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(invalid("state and driver dimensions must be positive"));
        }
        if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
            return Err(invalid(format!("Lipschitz constant must be finite and >= 0, got {lipschitz}")));
        }
        Ok(Self {
            name: name.into(),
            layout: Layout { n, d },
            lipschitz,
            law_dependent,
            field,
        })
    }

    /// General coefficients from `(t, x, F)` callbacks. Missing `h_ij` or
    /// `σ_j` entries are zero.
    pub fn from_fns(
        name: impl Into<String>,
        n: usize,
        d: usize,
        lipschitz: f64,
        drift: LawFn,
        qv: Vec<((usize, usize), LawFn)>,
        diffusion: Vec<(usize, LawFn)>,
    ) -> Result<Self> {
        for &((i, j), _) in &qv {
            if i > j || j >= d {
                return Err(invalid(format!("h index ({i}, {j}) outside 0 <= i <= j < {d}")));
            }
        }
        if let Some(&(j, _)) = diffusion.iter().find(|(j, _)| *j >= d) {
            return Err(invalid(format!("σ index {j} outside 0..{d}")));
        }
        let field = FnField {
            layout: Layout { n, d },
            drift,
            qv,
            diffusion,
        };
        Self::from_field(name, n, d, lipschitz, true, Arc::new(field))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn state_dim(&self) -> usize {
        self.layout.n
    }

    pub fn driver_dim(&self) -> usize {
        self.layout.d
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn law_dependent(&self) -> bool {
        self.law_dependent
    }

    pub fn freeze<'a>(&'a self, t: f64, law: &'a EmpiricalSublinearDistribution) -> Result<Frozen<'a>> {
        check_dim(self.layout.n, law.dim())?;
        self.field.freeze(t, law)
    }

    /// Full coefficient buffer at one point (see [`Layout`]).
    pub fn eval(&self, t: f64, x: &[f64], law: &EmpiricalSublinearDistribution) -> Result<Vec<f64>> {
        check_dim(self.layout.n, x.len())?;
        let frozen = self.freeze(t, law)?;
        let mut out = vec![0.0; self.layout.len()];
        frozen(x, &mut out);
        Ok(out)
    }

    pub fn drift(&self, t: f64, x: &[f64], law: &EmpiricalSublinearDistribution) -> Result<Vec<f64>> {
        Ok(self.eval(t, x, law)?[self.layout.drift()].to_vec())
    }

    pub fn qv_coefficient(&self, i: usize, j: usize, t: f64, x: &[f64], law: &EmpiricalSublinearDistribution) -> Result<Vec<f64>> {
        if i > j || j >= self.layout.d {
            return Err(invalid(format!("h index ({i}, {j}) out of range")));
        }
        Ok(self.eval(t, x, law)?[self.layout.qv(i, j)].to_vec())
    }

    pub fn diffusion(&self, j: usize, t: f64, x: &[f64], law: &EmpiricalSublinearDistribution) -> Result<Vec<f64>> {
        if j >= self.layout.d {
            return Err(invalid(format!("σ index {j} out of range")));
        }
        Ok(self.eval(t, x, law)?[self.layout.diffusion(j)].to_vec())
    }
}

struct FnField {
    layout: Layout,
    drift: LawFn,
    qv: Vec<((usize, usize), LawFn)>,
    diffusion: Vec<(usize, LawFn)>,
}

impl CoefficientField for FnField {
    fn freeze<'a>(&'a self, t: f64, law: &'a EmpiricalSublinearDistribution) -> Result<Frozen<'a>> {
        let l = self.layout;
        Ok(Box::new(move |x, out| {
            out.fill(0.0);
            out[l.drift()].copy_from_slice(&(self.drift)(t, x, law));
            for ((i, j), f) in &self.qv {
                out[l.qv(*i, *j)].copy_from_slice(&f(t, x, law));
            }
            for (j, f) in &self.diffusion {
                out[l.diffusion(*j)].copy_from_slice(&f(t, x, law));
            }
        }))
    }
}

/// Per component, `max_P mean_P(y ↦ f(t, x, y)_i)`.
fn integrate_section(
    law: &EmpiricalSublinearDistribution,
    n: usize,
    t: f64,
    x: &[f64],
    f: &(dyn Fn(f64, &[f64], &[f64]) -> Vec<f64> + Send + Sync),
) -> Vec<f64> {
    let mut best = vec![f64::NEG_INFINITY; n];
    for m in law.measures() {
        let mut acc = vec![0.0; n];
        for a in 0..m.len() {
            let v = f(t, x, m.point(a));
            for i in 0..n {
                acc[i] += m.weight(a) * v[i];
            }
        }
        for i in 0..n {
            best[i] = best[i].max(acc[i]);
        }
    }
    best
}

/// Mean-field coefficients `b(t, x, F) = F(b′(t, x, ·))`, componentwise, and
/// likewise for `h_ij` and `σ_j`.
///
/// Each evaluation sums over every atom of the law, so the cost per Euler
/// step is `particles × atoms`; the built-in linear models avoid this.
pub fn mean_field_coefficients(
    name: impl Into<String>,
    n: usize,
    d: usize,
    lipschitz: f64,
    drift: SectionFn,
    qv: Vec<((usize, usize), SectionFn)>,
    diffusion: Vec<(usize, SectionFn)>,
) -> Result<Coefficients> {
    let lift = |f: SectionFn| -> LawFn {
        Arc::new(move |t, x, law| integrate_section(law, n, t, x, f.as_ref()))
    };
    Coefficients::from_fns(
        name,
        n,
        d,
        lipschitz,
        lift(drift),
        qv.into_iter().map(|(ij, f)| (ij, lift(f))).collect(),
        diffusion.into_iter().map(|(j, f)| (j, lift(f))).collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Link {
    Identity,
    Tanh,
}

/// `b_i = c + a x_i + F(y ↦ β·link(y_i))`, `h_00 = h·x`, `σ_j = sigma·e_j`.
#[derive(Debug, Clone, Copy)]
struct LinearMeanField {
    layout: Layout,
    c: f64,
    a: f64,
    beta: f64,
    sigma: f64,
    h: f64,
    link: Link,
}

impl CoefficientField for LinearMeanField {
    fn freeze<'a>(&'a self, _t: f64, law: &'a EmpiricalSublinearDistribution) -> Result<Frozen<'a>> {
        let l = self.layout;
        let shift: Vec<f64> = if self.beta == 0.0 {
            vec![0.0; l.n]
        } else {
            (0..l.n)
                .map(|i| {
                    let (v, _) = law.max_mean(|y| {
                        let u = match self.link {
                            Link::Identity => y[i],
                            Link::Tanh => y[i].tanh(),
                        };
                        self.beta * u
                    });
                    v
                })
                .collect()
        };
        let me = *self;
        Ok(Box::new(move |x, out| {
            out.fill(0.0);
            for i in 0..l.n {
                out[i] = me.c + me.a * x[i] + shift[i];
            }
            if me.h != 0.0 {
                let r = l.qv(0, 0);
                for (o, xi) in out[r].iter_mut().zip(x) {
                    *o = me.h * xi;
                }
            }
            for j in 0..l.d.min(l.n) {
                out[l.diffusion(j).start + j] = me.sigma;
            }
        }))
    }
}

/// Names accepted by [`builtin`].
pub const REGISTRY: &[&str] = &["zero", "constant-drift", "ou", "mean-field-ou", "mean-field-example"];

/// Default parameters of a registered coefficient.
pub fn default_params(name: &str) -> Result<BTreeMap<String, f64>> {
    let pairs: &[(&str, f64)] = match name {
        "zero" => &[],
        "constant-drift" => &[("c", 1.0)],
        "ou" => &[("a", -1.0), ("sigma", 1.0)],
        "mean-field-ou" => &[("a", -1.0), ("b", 0.5), ("sigma", 1.0), ("h", 0.0)],
        "mean-field-example" => &[("a", -1.0), ("b", 0.5), ("sigma", 1.0)],
        other => {
            return Err(invalid(format!(
                "unknown coefficient '{other}', expected one of {}",
                REGISTRY.join(", ")
            )))
        }
    };
    Ok(pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect())
}

/// Builds a registered coefficient. Unknown parameter names are rejected.
///
/// - `zero`: `b = h = σ = 0`
/// - `constant-drift(c)`: `b = c`
/// - `ou(a, sigma)`: `b = a x`, `σ_j = sigma·e_j`
/// - `mean-field-ou(a, b, sigma, h)`: `b = a x + F(b·y)`, `h_00 = h x`
/// - `mean-field-example(a, b, sigma)`: `b = a x + F(b·tanh y)`
pub fn builtin(name: &str, params: &BTreeMap<String, f64>, n: usize, d: usize) -> Result<Coefficients> {
    let mut p = default_params(name)?;
    for (k, v) in params {
        if !p.contains_key(k) {
            return Err(invalid(format!("coefficient '{name}' has no parameter '{k}'")));
        }
        if !v.is_finite() {
            return Err(invalid(format!("parameter '{k}' must be finite")));
        }
        p.insert(k.clone(), *v);
    }
    let get = |k: &str| p.get(k).copied().unwrap_or(0.0);
    let model = LinearMeanField {
        layout: Layout { n, d },
        c: get("c"),
        a: get("a"),
        beta: get("b"),
        sigma: get("sigma"),
        h: get("h"),
        link: if name == "mean-field-example" {
            Link::Tanh
        } else {
            Link::Identity
        },
    };
    // Joint constant of the sum |Δb| + |Δh| + |Δσ|.
    let k = (model.a.abs() + model.beta.abs() + model.h.abs()).max(f64::MIN_POSITIVE);
    Coefficients::from_field(name, n, d, k, model.beta != 0.0, Arc::new(model))
}

/// Euler solve against a fresh driver simulation.
#[allow(clippy::too_many_arguments)]
pub fn euler_solve_frozen(
    c: &Coefficients,
    law: &DistributionProcess,
    x0: &[f64],
    cg: &ControlGrid,
    grid: &TimeGrid,
    replicates: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    if law.grid() != grid {
        return Err(Error::GridMismatch("frozen law lives on a different grid".into()));
    }
    check_dim(c.driver_dim(), cg.dim())?;
    let driver = simulate_gbm(cg, grid, replicates, seed)?;
    euler_solve_on_driver(c, law, x0, &driver)
}

/// Euler solve reusing the driver of an existing ensemble.
pub fn euler_solve_on_driver(
    c: &Coefficients,
    law: &DistributionProcess,
    x0: &[f64],
    driver: &PathEnsemble,
) -> Result<PathEnsemble> {
    let grid = driver.grid();
    if law.grid() != grid {
        return Err(Error::GridMismatch("frozen law lives on a different grid".into()));
    }
    check_dim(c.state_dim(), x0.len())?;
    check_dim(c.state_dim(), law.dim())?;
    check_dim(c.driver_dim(), driver.driver_dim())?;
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(invalid("initial state must be finite"));
    }
    let steps = grid.steps();
    let frozen: Vec<Frozen> = (0..steps)
        .into_par_iter()
        .map(|k| c.freeze(grid.t(k), law.at(k)))
        .collect::<Result<_>>()?;
    let l = c.layout();
    let (n, d) = (l.n, l.d);
    let len = grid.len();
    let width = len * n;
    let mut x = vec![0.0; driver.scenarios() * width];

    let failures: Vec<Option<(usize, String)>> = x
        .par_chunks_mut(width)
        .enumerate()
        .map(|(s, path)| {
            path[..n].copy_from_slice(x0);
            let mut buf = vec![0.0; l.len()];
            for k in 0..steps {
                let (head, tail) = path.split_at_mut((k + 1) * n);
                let cur = &head[k * n..];
                let next = &mut tail[..n];
                frozen[k](cur, &mut buf);
                let dt = grid.dt(k);
                let b0 = driver.driver(s, k);
                let b1 = driver.driver(s, k + 1);
                for r in 0..n {
                    let mut v = cur[r] + buf[r] * dt;
                    for i in 0..d {
                        for j in i..d {
                            let h = buf[l.qv(i, j).start + r];
                            if h != 0.0 {
                                v += h * (driver.qv(s, k + 1, i, j) - driver.qv(s, k, i, j));
                            }
                        }
                    }
                    for j in 0..d {
                        let sg = buf[l.diffusion(j).start + r];
                        if sg != 0.0 {
                            v += sg * (b1[j] - b0[j]);
                        }
                    }
                    next[r] = v;
                }
                if let Some(bad) = next.iter().find(|v| !v.is_finite() || v.abs() > DIVERGENCE_BOUND) {
                    return Some((k + 1, format!("scenario {s} reached {bad}")));
                }
            }
            None
        })
        .collect();
    if let Some((step, detail)) = failures.into_iter().flatten().min_by_key(|f| f.0) {
        return Err(Error::Divergence {
            step,
            t: grid.t(step),
            detail,
        });
    }
    driver.with_state(n, x)
}

/// `𝔽_{X_t}` at every grid time.
pub fn distribution_process(ens: &PathEnsemble) -> Result<DistributionProcess> {
    let entries = (0..ens.grid().len())
        .into_par_iter()
        .map(|k| distribution_of(ens, k))
        .collect::<Result<Vec<_>>>()?;
    DistributionProcess::new(ens.grid().clone(), entries)
}

#[derive(Debug, Clone)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Measures are thinned to at most this many atoms before each distance.
    pub max_particles: usize,
    /// Starting law; the Dirac process at `x0` when absent.
    pub initial: Option<DistributionProcess>,
    /// Distances below this are indistinguishable from LP round-off.
    pub noise_floor: f64,
    pub metric: MetricOptions,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            max_iter: 15,
            max_particles: 64,
            initial: None,
            noise_floor: 1e-9,
            metric: MetricOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub k: usize,
    /// Entry 0 holds `d₁ᵀ(U(F), F)`; entry `k ≥ 1` holds `d₁ᵀ(U^{k+1}F, U^k F)`.
    pub delta: f64,
    /// Wall time of the iteration; kept out of deterministic outputs.
    pub seconds: f64,
    pub particles: usize,
    pub controls: usize,
    pub argmax_time: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTrace {
    pub entries: Vec<TraceEntry>,
    pub converged: bool,
    pub tol: f64,
    pub noise_floor: f64,
    pub horizon: f64,
    /// Upper bound on `d₁ᵀ` between the final law and its thinned copy
    /// (dimension 1 only).
    pub thinning_bias: Option<f64>,
    /// Set when `tol` is below the grid mesh, where Euler bias dominates.
    pub tol_below_discretization_bias: bool,
}

impl ConvergenceTrace {
    /// Number of Picard applications after the initial one.
    pub fn iterations(&self) -> usize {
        self.entries.iter().filter(|e| e.k >= 1).count()
    }

    pub fn delta(&self, k: usize) -> Option<f64> {
        self.entries.iter().find(|e| e.k == k).map(|e| e.delta)
    }

    pub fn last_delta(&self) -> Option<f64> {
        self.entries.last().map(|e| e.delta)
    }
}

/// `max_t max_P W₁(P, thin P)`, an upper bound on `d₁ᵀ(F, thin F)` that
/// avoids an LP over the full particle cloud.
fn thinning_bias_1d(full: &DistributionProcess, thin: &DistributionProcess) -> Result<f64> {
    let per_time = (0..full.grid().len())
        .into_par_iter()
        .map(|k| {
            let mut worst: f64 = 0.0;
            for (p, q) in full.at(k).measures().iter().zip(thin.at(k).measures()) {
                worst = worst.max(wasserstein1_1d(p, q)?);
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(per_time.into_iter().fold(0.0, f64::max))
}

#[derive(Debug, Clone)]
pub struct PicardOutcome {
    pub ensemble: PathEnsemble,
    pub law: DistributionProcess,
    pub trace: ConvergenceTrace,
    pub converged: bool,
}

/// Picard iteration `F⁽ᵏ⁺¹⁾ = U(F⁽ᵏ⁾)` from `F⁽⁰⁾ = U(initial)`.
///
/// Stops once `δ_k < tol` for some `k ≥ 1` or after `max_iter` applications;
/// the latter is reported through `converged = false`, not as an error.
#[allow(clippy::too_many_arguments)]
pub fn picard_solve(
    c: &Coefficients,
    x0: &[f64],
    cg: &ControlGrid,
    grid: &TimeGrid,
    replicates: usize,
    seed: u64,
    opts: &PicardOptions,
) -> Result<PicardOutcome> {
    if !(opts.tol > 0.0) {
        return Err(invalid(format!("tolerance must be positive, got {}", opts.tol)));
    }
    if opts.max_iter == 0 {
        return Err(invalid("max_iter must be at least 1"));
    }
    check_dim(c.driver_dim(), cg.dim())?;
    let driver = simulate_gbm(cg, grid, replicates, seed)?;
    picard_on_driver(c, x0, &driver, opts)
}

/// As [`picard_solve`], on a driver simulated by the caller. Coupled solves
/// (different `x0`, same noise) share one driver this way.
pub fn picard_on_driver(
    c: &Coefficients,
    x0: &[f64],
    driver: &PathEnsemble,
    opts: &PicardOptions,
) -> Result<PicardOutcome> {
    let grid = driver.grid();
    let init = match &opts.initial {
        Some(f) => {
            if f.grid() != grid {
                return Err(Error::GridMismatch("initial law lives on a different grid".into()));
            }
            f.clone()
        }
        None => DistributionProcess::dirac(grid.clone(), x0)?,
    };
    let thin = |f: &DistributionProcess| f.thinned(opts.max_particles);
    let particles = driver.replicates().min(opts.max_particles.max(1));

    let mut entries = Vec::new();
    let start = Instant::now();
    let mut ens = euler_solve_on_driver(c, &init, x0, driver)?;
    let mut law = distribution_process(&ens)?;
    let mut prev_thin = thin(&law);
    let r0 = d1t_with(&prev_thin, &thin(&init), None, &opts.metric)?;
    entries.push(TraceEntry {
        k: 0,
        delta: r0.value,
        seconds: start.elapsed().as_secs_f64(),
        particles,
        controls: driver.controls(),
        argmax_time: r0.time_index,
    });

    let mut converged = false;
    for k in 1..=opts.max_iter {
        let start = Instant::now();
        let next_ens = euler_solve_on_driver(c, &law, x0, driver)?;
        let next_law = distribution_process(&next_ens)?;
        let next_thin = thin(&next_law);
        let r = d1t_with(&next_thin, &prev_thin, None, &opts.metric)?;
        entries.push(TraceEntry {
            k,
            delta: r.value,
            seconds: start.elapsed().as_secs_f64(),
            particles,
            controls: driver.controls(),
            argmax_time: r.time_index,
        });
        ens = next_ens;
        law = next_law;
        prev_thin = next_thin;
        if r.value < opts.tol {
            converged = true;
            break;
        }
    }

    let thinning_bias = if law.dim() == 1 {
        Some(thinning_bias_1d(&law, &prev_thin)?)
    } else {
        None
    };
    let trace = ConvergenceTrace {
        entries,
        converged,
        tol: opts.tol,
        noise_floor: opts.noise_floor,
        horizon: grid.horizon(),
        thinning_bias,
        tol_below_discretization_bias: opts.tol < grid.mesh(),
    };
    Ok(PicardOutcome {
        ensemble: ens,
        law,
        trace,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gprocess::{ControlPolicy, VolatilityUncertainty};
    use approx::assert_abs_diff_eq;

    fn single(sigma: f64) -> ControlGrid {
        let u = VolatilityUncertainty::singleton(1, sigma).unwrap();
        ControlGrid::uniform(&u, 1, ControlPolicy::Static).unwrap()
    }

    fn params(kv: &[(&str, f64)]) -> BTreeMap<String, f64> {
        kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn layout_slots_do_not_overlap() {
        let l = Layout { n: 2, d: 2 };
        let mut seen = vec![false; l.len()];
        let mut ranges = vec![l.drift(), l.qv(0, 0), l.qv(0, 1), l.qv(1, 1), l.diffusion(0), l.diffusion(1)];
        ranges.sort_by_key(|r| r.start);
        for r in ranges {
            for i in r {
                assert!(!seen[i]);
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|s| *s));
    }

    #[test]
    fn zero_coefficients_keep_initial_state() {
        let grid = TimeGrid::uniform(1.0, 10).unwrap();
        let c = builtin("zero", &BTreeMap::new(), 1, 1).unwrap();
        let law = DistributionProcess::dirac(grid.clone(), &[1.5]).unwrap();
        let ens = euler_solve_frozen(&c, &law, &[1.5], &single(1.0), &grid, 4, 0).unwrap();
        assert!(ens.state_data().iter().all(|v| *v == 1.5));
    }

    #[test]
    fn constant_drift_telescopes() {
        let grid = TimeGrid::uniform(2.0, 8).unwrap();
        let c = builtin("constant-drift", &params(&[("c", 1.0)]), 1, 1).unwrap();
        let law = DistributionProcess::dirac(grid.clone(), &[0.25]).unwrap();
        let ens = euler_solve_frozen(&c, &law, &[0.25], &single(1.0), &grid, 3, 0).unwrap();
        for s in 0..ens.scenarios() {
            assert_abs_diff_eq!(ens.state(s, 8)[0], 2.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn registry_rejects_unknown_names_and_params() {
        assert!(builtin("nope", &BTreeMap::new(), 1, 1).is_err());
        assert!(builtin("ou", &params(&[("b", 1.0)]), 1, 1).is_err());
        for name in REGISTRY {
            assert!(builtin(name, &BTreeMap::new(), 1, 1).is_ok());
        }
    }

    #[test]
    fn mean_field_adapter_examples() {
        let f = EmpiricalSublinearDistribution::diracs_1d(&[0.0, 2.0]).unwrap();
        let y: SectionFn = Arc::new(|_, _, y| vec![y[0]]);
        let c = mean_field_coefficients("y", 1, 1, 1.0, y, vec![], vec![]).unwrap();
        assert_eq!(c.drift(0.0, &[5.0], &f).unwrap(), vec![2.0]);

        let k: SectionFn = Arc::new(|_, _, _| vec![3.0]);
        let c = mean_field_coefficients("c", 1, 1, 0.0, k, vec![], vec![]).unwrap();
        assert_eq!(c.drift(0.0, &[5.0], &f).unwrap(), vec![3.0]);

        let tent: SectionFn = Arc::new(|_, x, y| vec![-(y[0] - x[0]).abs()]);
        let c = mean_field_coefficients("tent", 1, 1, 1.0, tent, vec![], vec![]).unwrap();
        let one = EmpiricalSublinearDistribution::diracs_1d(&[1.0]).unwrap();
        assert_eq!(c.drift(0.0, &[3.0], &one).unwrap(), vec![-2.0]);
    }

    #[test]
    fn builtin_mean_field_matches_generic_adapter() {
        let law = EmpiricalSublinearDistribution::diracs_1d(&[-1.0, 0.5, 2.0]).unwrap();
        let fast = builtin("mean-field-example", &params(&[("a", -0.7), ("b", -0.4), ("sigma", 0.3)]), 1, 1).unwrap();
        let drift: SectionFn = Arc::new(|_, x, y| vec![-0.7 * x[0] - 0.4 * y[0].tanh()]);
        let sig: SectionFn = Arc::new(|_, _, _| vec![0.3]);
        let slow = mean_field_coefficients("slow", 1, 1, 1.1, drift, vec![], vec![(0, sig)]).unwrap();
        for x in [-2.0, 0.0, 1.3] {
            let a = fast.eval(0.0, &[x], &law).unwrap();
            let b = slow.eval(0.0, &[x], &law).unwrap();
            for (u, v) in a.iter().zip(&b) {
                assert_abs_diff_eq!(u, v, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn divergence_reports_earliest_step() {
        let grid = TimeGrid::uniform(1.0, 50).unwrap();
        let c = builtin("ou", &params(&[("a", 2000.0), ("sigma", 0.0)]), 1, 1).unwrap();
        let law = DistributionProcess::dirac(grid.clone(), &[1.0]).unwrap();
        let err = euler_solve_frozen(&c, &law, &[1.0], &single(1.0), &grid, 2, 0).unwrap_err();
        // (1 + 40)^k exceeds 1e12 first at k = 8.
        assert!(matches!(err, Error::Divergence { step: 8, .. }), "{err}");
    }

    #[test]
    fn law_independent_problem_converges_in_one_iteration() {
        let grid = TimeGrid::uniform(1.0, 20).unwrap();
        let c = builtin("ou", &params(&[("a", -1.0), ("sigma", 1.0)]), 1, 1).unwrap();
        let opts = PicardOptions {
            tol: 1e-6,
            ..PicardOptions::default()
        };
        let out = picard_solve(&c, &[1.0], &single(0.5), &grid, 100, 3, &opts).unwrap();
        assert!(out.converged);
        assert_eq!(out.trace.iterations(), 1);
        assert_eq!(out.trace.delta(1), Some(0.0));
    }

    #[test]
    fn one_iteration_cannot_converge_on_mean_field_problem() {
        let grid = TimeGrid::uniform(1.0, 20).unwrap();
        let c = builtin("mean-field-ou", &BTreeMap::new(), 1, 1).unwrap();
        let opts = PicardOptions {
            tol: 1e-6,
            max_iter: 1,
            ..PicardOptions::default()
        };
        let out = picard_solve(&c, &[1.0], &single(0.2), &grid, 50, 3, &opts).unwrap();
        assert!(!out.converged);
        assert!(out.trace.delta(1).unwrap() > 1e-6);
    }
}
