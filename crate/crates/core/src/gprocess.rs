//! Volatility uncertainty, the generator `G`, and G-Brownian path ensembles.
//!
//! The sublinear expectation is realized as a maximum over a finite set of
//! volatility controls. Each control is a piecewise-constant volatility
//! matrix schedule; every (control, replicate) pair is one scenario. Driver
//! increments are `θ_k·√Δt_k·ξ_k`, with the Gaussian vector `ξ` keyed by
//! `(seed, replicate, step)` and shared across controls. Quadratic variation
//! is accumulated analytically as `θθᵀΔt`, so it depends on the control only.

use std::io::{self, Write};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::grid::TimeGrid;
use crate::rng::replicate_normals;
use crate::stats::pairwise_sum;

const SYMMETRY_TOL: f64 = 1e-12;
const MEMBERSHIP_TOL: f64 = 1e-12;
/// Largest control set the cartesian per-step policy may produce.
pub const MAX_CONTROLS: usize = 4096;

/// A `d × d` volatility matrix `θ`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl VolMatrix {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() != dim * dim {
            return Err(invalid(format!(
                "volatility matrix needs {} entries, got {}",
                dim * dim,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite volatility entry"));
        }
        Ok(Self { dim, data })
    }

    /// `σ·I`.
    pub fn scalar(dim: usize, sigma: f64) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = sigma;
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// `θ·ξ`.
    pub fn apply(&self, xi: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..self.dim).map(|j| self.get(i, j) * xi[j]).sum();
        }
    }

    /// `(θθᵀ)_{ij}`.
    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        (0..self.dim).map(|k| self.get(i, k) * self.get(j, k)).sum()
    }

    /// `aᵀθθᵀa = |θᵀa|²`.
    pub fn quad_form(&self, a: &[f64]) -> f64 {
        (0..self.dim)
            .map(|k| {
                let c: f64 = (0..self.dim).map(|i| a[i] * self.get(i, k)).sum();
                c * c
            })
            .sum()
    }

    /// `tr(θθᵀA)` for a row-major symmetric `A`.
    pub fn trace_against(&self, a: &[f64]) -> f64 {
        let d = self.dim;
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                acc += self.covariance(i, j) * a[j * d + i];
            }
        }
        acc
    }

    fn scalar_multiple(&self) -> Option<f64> {
        let s = self.data[0];
        let d = self.dim;
        let ok = (0..d).all(|i| {
            (0..d).all(|j| {
                let want = if i == j { s } else { 0.0 };
                (self.get(i, j) - want).abs() <= MEMBERSHIP_TOL
            })
        });
        ok.then_some(s)
    }

    fn close_to(&self, other: &VolMatrix) -> bool {
        self.dim == other.dim
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| (a - b).abs() <= MEMBERSHIP_TOL)
    }
}

/// The admissible set `Θ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThetaSet {
    /// `{σI : σ_min ≤ σ ≤ σ_max}`; in one dimension the usual interval.
    Interval { sigma_min: f64, sigma_max: f64 },
    /// A finite list of matrices.
    Matrices { matrices: Vec<VolMatrix> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolatilityUncertainty {
    dim: usize,
    theta: ThetaSet,
}

impl VolatilityUncertainty {
    pub fn interval(dim: usize, sigma_min: f64, sigma_max: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("driver dimension must be positive"));
        }
        if !(sigma_min.is_finite() && sigma_max.is_finite() && 0.0 <= sigma_min && sigma_min <= sigma_max) {
            return Err(invalid(format!(
                "need 0 <= sigma_min <= sigma_max, got [{sigma_min}, {sigma_max}]"
            )));
        }
        Ok(Self {
            dim,
            theta: ThetaSet::Interval { sigma_min, sigma_max },
        })
    }

    /// `σ_min = σ_max = σ`: the classical case.
    pub fn singleton(dim: usize, sigma: f64) -> Result<Self> {
        Self::interval(dim, sigma, sigma)
    }

    pub fn matrices(matrices: Vec<VolMatrix>) -> Result<Self> {
        let dim = matrices
            .first()
            .ok_or_else(|| invalid("empty volatility set"))?
            .dim();
        for m in &matrices {
            check_dim(dim, m.dim())?;
        }
        Ok(Self {
            dim,
            theta: ThetaSet::Matrices { matrices },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn theta(&self) -> &ThetaSet {
        &self.theta
    }

    pub fn is_singleton(&self) -> bool {
        match &self.theta {
            ThetaSet::Interval { sigma_min, sigma_max } => sigma_min == sigma_max,
            ThetaSet::Matrices { matrices } => matrices.iter().all(|m| m.close_to(&matrices[0])),
        }
    }

    /// `σ²_{aaᵀ} = max_θ aᵀθθᵀa`.
    pub fn sigma2_upper(&self, a: &[f64]) -> Result<f64> {
        check_dim(self.dim, a.len())?;
        Ok(match &self.theta {
            ThetaSet::Interval { sigma_max, .. } => sigma_max * sigma_max * norm2(a),
            ThetaSet::Matrices { matrices } => matrices
                .iter()
                .map(|m| m.quad_form(a))
                .fold(f64::NEG_INFINITY, f64::max),
        })
    }

    /// `σ²_{−aaᵀ} = min_θ aᵀθθᵀa`.
    pub fn sigma2_lower(&self, a: &[f64]) -> Result<f64> {
        check_dim(self.dim, a.len())?;
        Ok(match &self.theta {
            ThetaSet::Interval { sigma_min, .. } => sigma_min * sigma_min * norm2(a),
            ThetaSet::Matrices { matrices } => matrices
                .iter()
                .map(|m| m.quad_form(a))
                .fold(f64::INFINITY, f64::min),
        })
    }

    /// Largest `σ²_{aaᵀ}` over unit coordinate directions.
    pub fn sigma2_max_coordinate(&self) -> f64 {
        (0..self.dim)
            .map(|j| {
                let mut e = vec![0.0; self.dim];
                e[j] = 1.0;
                self.sigma2_upper(&e).expect("dimension matches")
            })
            .fold(0.0, f64::max)
    }

    /// `G(A) = ½ max_θ tr(θθᵀA)` for symmetric row-major `A`.
    pub fn g_function(&self, a: &[f64]) -> Result<f64> {
        let d = self.dim;
        if a.len() != d * d {
            return Err(invalid(format!("G needs a {d}x{d} matrix, got {} entries", a.len())));
        }
        for i in 0..d {
            for j in (i + 1)..d {
                if (a[i * d + j] - a[j * d + i]).abs() > SYMMETRY_TOL * (1.0 + a[i * d + j].abs()) {
                    return Err(invalid(format!("matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(match &self.theta {
            ThetaSet::Interval { sigma_min, sigma_max } => {
                let tr: f64 = (0..d).map(|i| a[i * d + i]).sum();
                0.5 * (sigma_max * sigma_max * tr.max(0.0) - sigma_min * sigma_min * (-tr).max(0.0))
            }
            ThetaSet::Matrices { matrices } => {
                0.5 * matrices
                    .iter()
                    .map(|m| m.trace_against(a))
                    .fold(f64::NEG_INFINITY, f64::max)
            }
        })
    }

    /// One-dimensional `G(α) = ½(σ²_max α⁺ − σ²_min α⁻)`.
    pub fn g_scalar(&self, alpha: f64) -> Result<f64> {
        if self.dim != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: self.dim,
            });
        }
        self.g_function(&[alpha])
    }

    fn contains(&self, m: &VolMatrix) -> bool {
        if m.dim() != self.dim {
            return false;
        }
        match &self.theta {
            ThetaSet::Interval { sigma_min, sigma_max } => m
                .scalar_multiple()
                .is_some_and(|s| s >= sigma_min - MEMBERSHIP_TOL && s <= sigma_max + MEMBERSHIP_TOL),
            ThetaSet::Matrices { matrices } => matrices.iter().any(|t| t.close_to(m)),
        }
    }

    /// Distinct volatility levels used to discretize `Θ`.
    pub fn levels(&self, count: usize) -> Result<Vec<VolMatrix>> {
        let mut out: Vec<VolMatrix> = Vec::new();
        match &self.theta {
            ThetaSet::Interval { sigma_min, sigma_max } => {
                if count == 0 {
                    return Err(invalid("need at least one volatility level"));
                }
                if sigma_min == sigma_max || count == 1 {
                    out.push(VolMatrix::scalar(self.dim, *sigma_max));
                } else {
                    for i in 0..count {
                        let s = if i + 1 == count {
                            *sigma_max
                        } else {
                            sigma_min + (sigma_max - sigma_min) * i as f64 / (count - 1) as f64
                        };
                        out.push(VolMatrix::scalar(self.dim, s));
                    }
                }
            }
            ThetaSet::Matrices { matrices } => out.extend(matrices.iter().cloned()),
        }
        let mut dedup: Vec<VolMatrix> = Vec::new();
        for m in out {
            if !dedup.iter().any(|d| d.close_to(&m)) {
                dedup.push(m);
            }
        }
        Ok(dedup)
    }
}

fn norm2(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ControlPolicy {
    /// One volatility per path.
    Static,
    /// The horizon is cut into `segments` blocks of steps; volatility is
    /// constant on each block and every combination of levels is a control.
    PerStepConstant { segments: usize },
}

/// A finite family of volatility schedules, each a list of per-segment
/// matrices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlGrid {
    uncertainty: VolatilityUncertainty,
    policy: ControlPolicy,
    controls: Vec<Vec<VolMatrix>>,
}

impl ControlGrid {
    /// Uniform discretization with `levels` values per segment.
    pub fn uniform(u: &VolatilityUncertainty, levels: usize, policy: ControlPolicy) -> Result<Self> {
        let lv = u.levels(levels)?;
        let controls = match policy {
            ControlPolicy::Static => lv.into_iter().map(|m| vec![m]).collect(),
            ControlPolicy::PerStepConstant { segments } => {
                if segments == 0 {
                    return Err(invalid("per-step policy needs at least one segment"));
                }
                let total = (lv.len() as f64).powi(segments as i32);
                if total > MAX_CONTROLS as f64 {
                    return Err(Error::Capacity(format!(
                        "{} levels over {segments} segments give {total} controls (cap {MAX_CONTROLS})",
                        lv.len()
                    )));
                }
                let mut out: Vec<Vec<VolMatrix>> = vec![Vec::new()];
                for _ in 0..segments {
                    out = out
                        .into_iter()
                        .flat_map(|prefix| {
                            lv.iter().map(move |m| {
                                let mut p = prefix.clone();
                                p.push(m.clone());
                                p
                            })
                        })
                        .collect();
                }
                out
            }
        };
        Self::new(u, controls, policy)
    }

    /// Explicit control list; every matrix must lie in `Θ`.
    pub fn new(u: &VolatilityUncertainty, controls: Vec<Vec<VolMatrix>>, policy: ControlPolicy) -> Result<Self> {
        if controls.is_empty() {
            return Err(invalid("control grid is empty"));
        }
        let segments = match policy {
            ControlPolicy::Static => 1,
            ControlPolicy::PerStepConstant { segments } => segments,
        };
        for (c, schedule) in controls.iter().enumerate() {
            if schedule.len() != segments {
                return Err(invalid(format!(
                    "control {c} has {} segments, policy needs {segments}",
                    schedule.len()
                )));
            }
            if let Some(m) = schedule.iter().find(|m| !u.contains(m)) {
                return Err(invalid(format!("control {c} uses {m:?}, which is outside the admissible set")));
            }
        }
        for i in 0..controls.len() {
            for j in 0..i {
                if controls[i].iter().zip(&controls[j]).all(|(a, b)| a.close_to(b)) {
                    return Err(invalid(format!("controls {j} and {i} coincide")));
                }
            }
        }
        Ok(Self {
            uncertainty: u.clone(),
            policy,
            controls,
        })
    }

    /// The single control `σ` (or `σI`).
    pub fn single(u: &VolatilityUncertainty, sigma: f64) -> Result<Self> {
        Self::new(u, vec![vec![VolMatrix::scalar(u.dim(), sigma)]], ControlPolicy::Static)
    }

    pub fn len(&self) -> usize {
        self.controls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.controls.is_empty()
    }

    pub fn policy(&self) -> ControlPolicy {
        self.policy
    }

    pub fn uncertainty(&self) -> &VolatilityUncertainty {
        &self.uncertainty
    }

    pub fn dim(&self) -> usize {
        self.uncertainty.dim()
    }

    pub fn schedule(&self, c: usize) -> &[VolMatrix] {
        &self.controls[c]
    }

    /// Volatility of control `c` on step `k` of `steps`.
    pub fn theta_at(&self, c: usize, k: usize, steps: usize) -> &VolMatrix {
        let s = &self.controls[c];
        &s[(k * s.len() / steps.max(1)).min(s.len() - 1)]
    }
}

/// Driver data shared by every ensemble built on the same simulation.
#[derive(Debug)]
struct Driver {
    /// `[scenario][k][d]`
    b: Vec<f64>,
    /// `[control][k][pair]`, upper triangle `i ≤ j` in row order.
    qv: Vec<f64>,
}

/// Discrete paths for every (control, replicate) scenario.
///
/// Scenario `s = r·C + c` for replicate `r` and control `c` among `C`.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    grid: TimeGrid,
    n: usize,
    controls: ControlGrid,
    replicates: usize,
    seed: u64,
    driver: Arc<Driver>,
    /// `[scenario][k][n]`
    x: Arc<Vec<f64>>,
}

impl PathEnsemble {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn driver_dim(&self) -> usize {
        self.controls.dim()
    }

    pub fn controls(&self) -> usize {
        self.controls.len()
    }

    pub fn control_grid(&self) -> &ControlGrid {
        &self.controls
    }

    pub fn uncertainty(&self) -> &VolatilityUncertainty {
        self.controls.uncertainty()
    }

    pub fn replicates(&self) -> usize {
        self.replicates
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn scenarios(&self) -> usize {
        self.controls.len() * self.replicates
    }

    pub fn scenario(&self, control: usize, replicate: usize) -> usize {
        replicate * self.controls.len() + control
    }

    pub fn control_of(&self, scenario: usize) -> usize {
        scenario % self.controls.len()
    }

    /// `X` at grid index `k`.
    pub fn state(&self, scenario: usize, k: usize) -> &[f64] {
        let len = self.grid.len();
        let off = (scenario * len + k) * self.n;
        &self.x[off..off + self.n]
    }

    /// `B` at grid index `k`.
    pub fn driver(&self, scenario: usize, k: usize) -> &[f64] {
        let (len, d) = (self.grid.len(), self.driver_dim());
        let off = (scenario * len + k) * d;
        &self.driver.b[off..off + d]
    }

    /// Whole state path of one scenario, `[k][n]`.
    pub fn state_path(&self, scenario: usize) -> &[f64] {
        let w = self.grid.len() * self.n;
        &self.x[scenario * w..(scenario + 1) * w]
    }

    /// Whole driver path of one scenario, `[k][d]`.
    pub fn driver_path(&self, scenario: usize) -> &[f64] {
        let w = self.grid.len() * self.driver_dim();
        &self.driver.b[scenario * w..(scenario + 1) * w]
    }

    /// `⟨B⟩^{ij}` at grid index `k` for scenario `s` (0-based, any order).
    pub fn qv(&self, scenario: usize, k: usize, i: usize, j: usize) -> f64 {
        let d = self.driver_dim();
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        let pairs = d * (d + 1) / 2;
        let c = self.control_of(scenario);
        self.driver.qv[(c * self.grid.len() + k) * pairs + triangle(d, i, j)]
    }

    /// `⟨B^a⟩_{t_k} = Σ_{ij} a_i a_j ⟨B⟩^{ij}` for scenario `s`.
    pub fn variation(&self, scenario: usize, k: usize, a: &[f64]) -> f64 {
        let d = self.driver_dim();
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                acc += a[i] * a[j] * self.qv(scenario, k, i, j);
            }
        }
        acc
    }

    /// Same driver, new state paths (`[scenario][k][n]`).
    pub fn with_state(&self, n: usize, x: Vec<f64>) -> Result<Self> {
        if n == 0 || x.len() != self.scenarios() * self.grid.len() * n {
            return Err(invalid("state buffer does not match the ensemble shape"));
        }
        Ok(Self {
            n,
            x: Arc::new(x),
            ..self.clone()
        })
    }

    pub fn state_data(&self) -> &[f64] {
        &self.x
    }

    pub fn driver_data(&self) -> &[f64] {
        &self.driver.b
    }

    /// True when both ensembles were built from the same driver simulation.
    pub fn shares_driver(&self, other: &PathEnsemble) -> bool {
        Arc::ptr_eq(&self.driver, &other.driver)
    }
}

/// Position of `(i, j)`, `i ≤ j`, in the row-ordered upper triangle.
fn triangle(d: usize, i: usize, j: usize) -> usize {
    i * d - i * i.saturating_sub(1) / 2 + (j - i)
}

/// Simulates the driver and returns the ensemble with `X = B`.
pub fn simulate_gbm(
    cg: &ControlGrid,
    grid: &TimeGrid,
    replicates: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    if replicates == 0 {
        return Err(invalid("need at least one replicate"));
    }
    if cg.is_empty() {
        return Err(invalid("control grid is empty"));
    }
    if grid.len() < 2 {
        return Err(invalid("time grid needs at least one step"));
    }
    let d = cg.dim();
    let c_count = cg.len();
    let len = grid.len();
    let steps = grid.steps();
    let pairs = d * (d + 1) / 2;

    let mut qv = vec![0.0; c_count * len * pairs];
    for c in 0..c_count {
        for k in 0..steps {
            let theta = cg.theta_at(c, k, steps);
            let dt = grid.dt(k);
            for i in 0..d {
                for j in i..d {
                    let p = triangle(d, i, j);
                    let prev = qv[(c * len + k) * pairs + p];
                    qv[(c * len + k + 1) * pairs + p] = prev + theta.covariance(i, j) * dt;
                }
            }
        }
    }

    let per_rep = c_count * len * d;
    let mut b = vec![0.0; replicates * per_rep];
    b.par_chunks_mut(per_rep).enumerate().for_each(|(r, chunk)| {
        let xi = replicate_normals(seed, r, steps, d);
        let mut inc = vec![0.0; d];
        for c in 0..c_count {
            let path = &mut chunk[c * len * d..(c + 1) * len * d];
            for k in 0..steps {
                let theta = cg.theta_at(c, k, steps);
                theta.apply(&xi[k * d..(k + 1) * d], &mut inc);
                let sq = grid.dt(k).sqrt();
                for i in 0..d {
                    path[(k + 1) * d + i] = path[k * d + i] + inc[i] * sq;
                }
            }
        }
    });

    let x = b.clone();
    Ok(PathEnsemble {
        grid: grid.clone(),
        n: d,
        controls: cg.clone(),
        replicates,
        seed,
        driver: Arc::new(Driver { b, qv }),
        x: Arc::new(x),
    })
}

/// `⟨B^a, B^ā⟩` per scenario by polarization, `[scenario][k]`.
pub fn mutual_variation(ens: &PathEnsemble, a: &[f64], abar: &[f64]) -> Result<Vec<Vec<f64>>> {
    let d = ens.driver_dim();
    check_dim(d, a.len())?;
    check_dim(d, abar.len())?;
    let plus: Vec<f64> = a.iter().zip(abar).map(|(x, y)| x + y).collect();
    let minus: Vec<f64> = a.iter().zip(abar).map(|(x, y)| x - y).collect();
    let per_control: Vec<Vec<f64>> = (0..ens.controls())
        .map(|c| {
            (0..ens.grid().len())
                .map(|k| {
                    let s = ens.scenario(c, 0);
                    0.25 * (ens.variation(s, k, &plus) - ens.variation(s, k, &minus))
                })
                .collect()
        })
        .collect();
    Ok((0..ens.scenarios())
        .map(|s| per_control[ens.control_of(s)].clone())
        .collect())
}

/// One row of per-control ensemble statistics (component 0 of X and B).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsRow {
    pub t: f64,
    pub control: usize,
    pub mean_x: f64,
    pub var_x: f64,
    pub mean_b: f64,
    pub qv: f64,
}

pub fn ensemble_stats(ens: &PathEnsemble) -> Vec<StatsRow> {
    let reps = ens.replicates();
    let mut rows = Vec::with_capacity(ens.grid().len() * ens.controls());
    for k in 0..ens.grid().len() {
        for c in 0..ens.controls() {
            let xs = |r: usize| ens.state(ens.scenario(c, r), k)[0];
            let mean_x = pairwise_sum(reps, &|r| xs(r)) / reps as f64;
            let var_x = if reps > 1 {
                pairwise_sum(reps, &|r| (xs(r) - mean_x).powi(2)) / (reps - 1) as f64
            } else {
                0.0
            };
            let mean_b = pairwise_sum(reps, &|r| ens.driver(ens.scenario(c, r), k)[0]) / reps as f64;
            rows.push(StatsRow {
                t: ens.grid().t(k),
                control: c,
                mean_x,
                var_x,
                mean_b,
                qv: ens.qv(c, k, 0, 0),
            });
        }
    }
    rows
}

pub const DUMP_MAGIC: &[u8; 8] = b"GSDEENS\0";

/// Flat little-endian dump: magic, six `u64` header fields
/// `(n, d, controls, replicates, grid points, seed)`, then times, `X`, `B`.
pub fn write_binary(ens: &PathEnsemble, mut w: impl Write) -> io::Result<()> {
    w.write_all(DUMP_MAGIC)?;
    for v in [
        ens.state_dim() as u64,
        ens.driver_dim() as u64,
        ens.controls() as u64,
        ens.replicates() as u64,
        ens.grid().len() as u64,
        ens.seed(),
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    for data in [ens.grid().times(), ens.state_data(), ens.driver_data()] {
        for v in data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn g_closed_form_examples() {
        let u = VolatilityUncertainty::interval(1, 1.0, 2.0).unwrap();
        assert_eq!(u.g_scalar(1.0).unwrap(), 2.0);
        assert_eq!(u.g_scalar(-1.0).unwrap(), -0.5);
        let s = VolatilityUncertainty::singleton(1, 1.0).unwrap();
        for a in [-3.0, 0.0, 0.7] {
            assert_eq!(s.g_scalar(a).unwrap(), a / 2.0);
        }
    }

    #[test]
    fn g_rejects_asymmetric() {
        let u = VolatilityUncertainty::interval(2, 1.0, 2.0).unwrap();
        assert!(u.g_function(&[1.0, 2.0, 0.0, 1.0]).is_err());
        assert_abs_diff_eq!(u.g_function(&[1.0, 0.5, 0.5, 1.0]).unwrap(), 4.0);
    }

    #[test]
    fn g_on_matrix_set() {
        let m1 = VolMatrix::new(2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let m2 = VolMatrix::new(2, vec![0.0, 0.0, 0.0, 2.0]).unwrap();
        let u = VolatilityUncertainty::matrices(vec![m1, m2]).unwrap();
        // tr(θθᵀ diag(1, -1)) is 1 and -4.
        assert_eq!(u.g_function(&[1.0, 0.0, 0.0, -1.0]).unwrap(), 0.5);
        assert_eq!(u.sigma2_upper(&[0.0, 1.0]).unwrap(), 4.0);
        assert_eq!(u.sigma2_lower(&[0.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn triangle_layout() {
        let d = 3;
        let idx: Vec<usize> = (0..d).flat_map(|i| (i..d).map(move |j| triangle(d, i, j))).collect();
        assert_eq!(idx, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn uniform_levels_and_dedup() {
        let u = VolatilityUncertainty::interval(1, 1.0, 2.0).unwrap();
        let cg = ControlGrid::uniform(&u, 5, ControlPolicy::Static).unwrap();
        assert_eq!(cg.len(), 5);
        assert_eq!(cg.schedule(4)[0].get(0, 0), 2.0);
        let s = VolatilityUncertainty::singleton(1, 0.2).unwrap();
        assert_eq!(ControlGrid::uniform(&s, 5, ControlPolicy::Static).unwrap().len(), 1);
        let per = ControlGrid::uniform(&u, 2, ControlPolicy::PerStepConstant { segments: 3 }).unwrap();
        assert_eq!(per.len(), 8);
    }

    #[test]
    fn control_outside_theta_rejected() {
        let u = VolatilityUncertainty::interval(1, 1.0, 2.0).unwrap();
        assert!(ControlGrid::single(&u, 2.5).is_err());
        let dup = vec![vec![VolMatrix::scalar(1, 1.0)], vec![VolMatrix::scalar(1, 1.0)]];
        assert!(ControlGrid::new(&u, dup, ControlPolicy::Static).is_err());
    }

    #[test]
    fn analytic_quadratic_variation() {
        let u = VolatilityUncertainty::interval(1, 1.0, 2.0).unwrap();
        let cg = ControlGrid::uniform(&u, 2, ControlPolicy::Static).unwrap();
        let grid = TimeGrid::uniform(1.0, 10).unwrap();
        let ens = simulate_gbm(&cg, &grid, 3, 11).unwrap();
        let s = ens.scenario(1, 2);
        assert_abs_diff_eq!(ens.qv(s, 10, 0, 0), 4.0, epsilon = 1e-12);
        assert_eq!(ens.driver(s, 0), &[0.0]);
        let mv = mutual_variation(&ens, &[1.0], &[1.0]).unwrap();
        assert_abs_diff_eq!(mv[s][10], 4.0, epsilon = 1e-12);
    }

    #[test]
    fn crn_shares_normals_across_controls() {
        let u = VolatilityUncertainty::interval(1, 1.0, 2.0).unwrap();
        let cg = ControlGrid::uniform(&u, 2, ControlPolicy::Static).unwrap();
        let grid = TimeGrid::uniform(1.0, 4).unwrap();
        let ens = simulate_gbm(&cg, &grid, 2, 5).unwrap();
        for k in 0..5 {
            let lo = ens.driver(ens.scenario(0, 1), k)[0];
            let hi = ens.driver(ens.scenario(1, 1), k)[0];
            assert_abs_diff_eq!(hi, 2.0 * lo, epsilon = 1e-12);
        }
    }

    #[test]
    fn binary_dump_layout() {
        let u = VolatilityUncertainty::singleton(1, 1.0).unwrap();
        let cg = ControlGrid::single(&u, 1.0).unwrap();
        let grid = TimeGrid::uniform(1.0, 2).unwrap();
        let ens = simulate_gbm(&cg, &grid, 2, 0).unwrap();
        let mut buf = Vec::new();
        write_binary(&ens, &mut buf).unwrap();
        assert_eq!(&buf[..8], DUMP_MAGIC);
        assert_eq!(buf.len(), 8 + 6 * 8 + 8 * (3 + 6 + 6));
    }
}
