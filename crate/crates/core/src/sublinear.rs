//! Sublinear distributions represented as finite families of discrete
//! measures.
//!
//! A distribution `F` is stored as a nonempty set of weighted particle
//! measures `{P_1, …, P_L}` and acts on test functions by
//! `F(φ) = max_l Σ_i w_{l,i} φ(x_{l,i})`. The representation makes all four
//! sublinear-expectation axioms hold exactly, up to floating-point rounding
//! of the inner sums.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::gprocess::PathEnsemble;
use crate::grid::TimeGrid;
use crate::stats::pairwise_sum;

/// Tolerance on the weight sum accepted at construction.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Relative slack granted to the axiom checks for rounding in the inner sums.
const AXIOM_ROUNDING: f64 = 1e-12;

type EvalFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// A real function on `ℝⁿ` with a declared Lipschitz constant.
///
/// The constant is taken on trust; [`TestFunction::lipschitz_violation`]
/// spot-checks it on sample points.
#[derive(Clone)]
pub struct TestFunction {
    eval: Arc<EvalFn>,
    lip_const: f64,
    label: String,
    dim: Option<usize>,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("label", &self.label)
            .field("lip_const", &self.lip_const)
            .field("dim", &self.dim)
            .finish()
    }
}

impl TestFunction {
    /// Wraps a callback. `dim = None` accepts points of any dimension.
    pub fn new(
        label: impl Into<String>,
        lip_const: f64,
        dim: Option<usize>,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            eval: Arc::new(eval),
            lip_const,
            label: label.into(),
            dim,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("const({c})"), 0.0, None, move |_| c)
    }

    /// The `k`-th coordinate `x ↦ x_k`.
    pub fn coordinate(k: usize) -> Self {
        Self::new(format!("x[{k}]"), 1.0, None, move |x| x[k])
    }

    /// `x ↦ x` in one dimension.
    pub fn identity() -> Self {
        Self::new("id", 1.0, Some(1), |x| x[0])
    }

    /// Euclidean norm `x ↦ |x|`.
    pub fn norm() -> Self {
        Self::new("|x|", 1.0, None, euclid)
    }

    /// `x ↦ |x - center|`.
    pub fn distance_to(center: Vec<f64>) -> Self {
        let dim = center.len();
        Self::new(format!("|x-{center:?}|"), 1.0, Some(dim), move |x| {
            dist(x, &center)
        })
    }

    /// Affine function `x ↦ ⟨a, x⟩ + c`, Lipschitz constant `|a|`.
    pub fn affine(a: Vec<f64>, c: f64) -> Self {
        let lip = euclid(&a);
        let dim = a.len();
        Self::new(format!("affine({a:?},{c})"), lip, Some(dim), move |x| {
            a.iter().zip(x).map(|(ai, xi)| ai * xi).sum::<f64>() + c
        })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    pub fn lip_const(&self) -> f64 {
        self.lip_const
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    /// `λ·φ`.
    pub fn scaled(&self, lambda: f64) -> Self {
        let inner = self.eval.clone();
        Self {
            eval: Arc::new(move |x| lambda * inner(x)),
            lip_const: lambda.abs() * self.lip_const,
            label: format!("{}*({})", lambda, self.label),
            dim: self.dim,
        }
    }

    /// `φ + c`.
    pub fn shifted(&self, c: f64) -> Self {
        let inner = self.eval.clone();
        Self {
            eval: Arc::new(move |x| inner(x) + c),
            lip_const: self.lip_const,
            label: format!("({})+{}", self.label, c),
            dim: self.dim,
        }
    }

    /// `φ + ψ`.
    pub fn plus(&self, other: &TestFunction) -> Self {
        let (f, g) = (self.eval.clone(), other.eval.clone());
        Self {
            eval: Arc::new(move |x| f(x) + g(x)),
            lip_const: self.lip_const + other.lip_const,
            label: format!("({})+({})", self.label, other.label),
            dim: self.dim.or(other.dim),
        }
    }

    /// Pointwise maximum `φ ∨ ψ`.
    pub fn max(&self, other: &TestFunction) -> Self {
        let (f, g) = (self.eval.clone(), other.eval.clone());
        Self {
            eval: Arc::new(move |x| f(x).max(g(x))),
            lip_const: self.lip_const.max(other.lip_const),
            label: format!("max({},{})", self.label, other.label),
            dim: self.dim.or(other.dim),
        }
    }

    /// First pair `(i, j)` of sample points where the declared constant is
    /// exceeded by more than `tol`.
    pub fn lipschitz_violation(&self, points: &[Vec<f64>], tol: f64) -> Option<(usize, usize)> {
        let values: Vec<f64> = points.iter().map(|p| self.eval(p)).collect();
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                let gap = (values[i] - values[j]).abs();
                if gap > self.lip_const * dist(&points[i], &points[j]) + tol {
                    return Some((i, j));
                }
            }
        }
        None
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        match self.dim {
            Some(d) => check_dim(dim, d),
            None => Ok(()),
        }
    }
}

pub(crate) fn euclid(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// A discrete probability measure on `ℝⁿ`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedMeasure {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightedMeasure {
    /// Builds a measure from row-major `points` (`len = atoms * dim`).
    ///
    /// Weights must be finite, nonnegative and sum to one within
    /// [`WEIGHT_SUM_TOLERANCE`]; they are then renormalized exactly.
    pub fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("measure dimension must be positive"));
        }
        if weights.is_empty() {
            return Err(invalid("measure needs at least one atom"));
        }
        if points.len() != weights.len() * dim {
            return Err(invalid(format!(
                "measure has {} weights but {} coordinates for dimension {dim}",
                weights.len(),
                points.len()
            )));
        }
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(invalid(format!("non-finite particle coordinate {p}")));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(invalid(format!("invalid weight {w}")));
        }
        let total = pairwise_sum(weights.len(), &|i| weights[i]);
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(invalid(format!("weights sum to {total}, expected 1")));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self {
            dim,
            points,
            weights,
        })
    }

    pub fn from_points(points: &[Vec<f64>], weights: Vec<f64>) -> Result<Self> {
        let dim = points.first().map(|p| p.len()).unwrap_or(0);
        if points.iter().any(|p| p.len() != dim) {
            return Err(invalid("particles of mixed dimension"));
        }
        Self::new(dim, points.concat(), weights)
    }

    /// Equal weights on row-major `points`.
    pub fn uniform(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() % dim != 0 {
            return Err(invalid("uniform measure needs a nonempty, dimension-aligned point list"));
        }
        let n = points.len() / dim;
        Self::new(dim, points, vec![1.0 / n as f64; n])
    }

    /// Uniform measure on one-dimensional values.
    pub fn uniform_1d(values: &[f64]) -> Result<Self> {
        Self::uniform(1, values.to_vec())
    }

    pub fn dirac(point: Vec<f64>) -> Result<Self> {
        let dim = point.len();
        Self::new(dim, point, vec![1.0])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `Σ_i w_i φ(x_i)`.
    pub fn mean_of(&self, phi: impl Fn(&[f64]) -> f64) -> f64 {
        pairwise_sum(self.len(), &|i| self.weights[i] * phi(self.point(i)))
    }

    /// Deterministic stride subsample to at most `max_atoms` atoms, with the
    /// kept weights renormalized.
    pub fn thinned(&self, max_atoms: usize) -> WeightedMeasure {
        let n = self.len();
        if max_atoms == 0 || n <= max_atoms {
            return self.clone();
        }
        let idx: Vec<usize> = (0..max_atoms).map(|j| j * n / max_atoms).collect();
        let kept: f64 = pairwise_sum(idx.len(), &|j| self.weights[idx[j]]);
        let mut points = Vec::with_capacity(max_atoms * self.dim);
        let mut weights = Vec::with_capacity(max_atoms);
        for &i in &idx {
            points.extend_from_slice(self.point(i));
            weights.push(self.weights[i] / kept);
        }
        WeightedMeasure {
            dim: self.dim,
            points,
            weights,
        }
    }
}

/// A sublinear distribution: `F(φ) = max over measures of the φ-mean`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionRepr", into = "DistributionRepr")]
pub struct EmpiricalSublinearDistribution {
    dim: usize,
    measures: Vec<WeightedMeasure>,
}

impl EmpiricalSublinearDistribution {
    pub fn new(measures: Vec<WeightedMeasure>) -> Result<Self> {
        let first = measures
            .first()
            .ok_or_else(|| invalid("a sublinear distribution needs at least one measure"))?;
        let dim = first.dim();
        for m in &measures {
            check_dim(dim, m.dim())?;
        }
        Ok(Self { dim, measures })
    }

    /// The classical distribution of a single measure.
    pub fn single(measure: WeightedMeasure) -> Self {
        Self {
            dim: measure.dim(),
            measures: vec![measure],
        }
    }

    /// `𝔽_x`: the Dirac distribution at `point`.
    pub fn dirac(point: Vec<f64>) -> Result<Self> {
        Ok(Self::single(WeightedMeasure::dirac(point)?))
    }

    /// Family of Diracs `{δ_{x_1}, …, δ_{x_L}}` in one dimension.
    pub fn diracs_1d(points: &[f64]) -> Result<Self> {
        Self::new(
            points
                .iter()
                .map(|&p| WeightedMeasure::dirac(vec![p]))
                .collect::<Result<_>>()?,
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn measures(&self) -> &[WeightedMeasure] {
        &self.measures
    }

    /// `F(φ)`.
    pub fn evaluate(&self, phi: &TestFunction) -> Result<f64> {
        self.evaluate_with_witness(phi).map(|(v, _)| v)
    }

    /// `F(φ)` together with the index of the first measure attaining the max.
    pub fn evaluate_with_witness(&self, phi: &TestFunction) -> Result<(f64, usize)> {
        phi.check_dim(self.dim)?;
        Ok(self.max_mean(|x| phi.eval(x)))
    }

    /// `max_l mean_{P_l}(f)` for a raw callback, with the attaining index.
    pub fn max_mean(&self, f: impl Fn(&[f64]) -> f64) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for (l, m) in self.measures.iter().enumerate() {
            let v = m.mean_of(&f);
            if v > best.0 {
                best = (v, l);
            }
        }
        best
    }

    /// Distinct support points, sorted lexicographically.
    pub fn support(&self) -> Vec<Vec<f64>> {
        union_support(&[self])
    }

    /// Every measure thinned to at most `max_atoms` atoms.
    pub fn thinned(&self, max_atoms: usize) -> Self {
        Self {
            dim: self.dim,
            measures: self.measures.iter().map(|m| m.thinned(max_atoms)).collect(),
        }
    }

    /// Total number of atoms over all measures.
    pub fn atom_count(&self) -> usize {
        self.measures.iter().map(|m| m.len()).sum()
    }
}

/// Lexicographically sorted, deduplicated union of the supports.
pub(crate) fn union_support(dists: &[&EmpiricalSublinearDistribution]) -> Vec<Vec<f64>> {
    let mut pts: Vec<Vec<f64>> = dists
        .iter()
        .flat_map(|d| d.measures.iter())
        .flat_map(|m| (0..m.len()).map(move |i| m.point(i).to_vec()))
        .collect();
    pts.sort_by(|a, b| lex_cmp(a, b));
    pts.dedup();
    pts
}

pub(crate) fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

#[derive(Serialize, Deserialize)]
struct AtomRepr {
    point: Vec<f64>,
    weight: f64,
}

#[derive(Serialize, Deserialize)]
struct MeasureRepr {
    atoms: Vec<AtomRepr>,
}

#[derive(Serialize, Deserialize)]
struct DistributionRepr {
    dim: usize,
    measures: Vec<MeasureRepr>,
}

impl TryFrom<DistributionRepr> for EmpiricalSublinearDistribution {
    type Error = Error;

    fn try_from(r: DistributionRepr) -> Result<Self> {
        let measures = r
            .measures
            .into_iter()
            .map(|m| {
                let mut points = Vec::new();
                let mut weights = Vec::new();
                for a in m.atoms {
                    check_dim(r.dim, a.point.len())?;
                    points.extend(a.point);
                    weights.push(a.weight);
                }
                WeightedMeasure::new(r.dim, points, weights)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(measures)
    }
}

impl From<EmpiricalSublinearDistribution> for DistributionRepr {
    fn from(d: EmpiricalSublinearDistribution) -> Self {
        DistributionRepr {
            dim: d.dim,
            measures: d
                .measures
                .iter()
                .map(|m| MeasureRepr {
                    atoms: (0..m.len())
                        .map(|i| AtomRepr {
                            point: m.point(i).to_vec(),
                            weight: m.weight(i),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

/// Time-indexed family of distributions on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionProcess {
    grid: TimeGrid,
    entries: Vec<EmpiricalSublinearDistribution>,
}

impl DistributionProcess {
    pub fn new(grid: TimeGrid, entries: Vec<EmpiricalSublinearDistribution>) -> Result<Self> {
        if entries.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} entries for a grid of {} points",
                entries.len(),
                grid.len()
            )));
        }
        if let Some(first) = entries.first() {
            for e in &entries {
                check_dim(first.dim(), e.dim())?;
            }
        }
        Ok(Self { grid, entries })
    }

    /// The same distribution at every grid time.
    pub fn constant(grid: TimeGrid, dist: EmpiricalSublinearDistribution) -> Self {
        let entries = vec![dist; grid.len()];
        Self { grid, entries }
    }

    /// `t ↦ 𝔽_{x0}`.
    pub fn dirac(grid: TimeGrid, x0: &[f64]) -> Result<Self> {
        Ok(Self::constant(grid, EmpiricalSublinearDistribution::dirac(x0.to_vec())?))
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn entries(&self) -> &[EmpiricalSublinearDistribution] {
        &self.entries
    }

    pub fn at(&self, k: usize) -> &EmpiricalSublinearDistribution {
        &self.entries[k]
    }

    pub fn dim(&self) -> usize {
        self.entries[0].dim()
    }

    pub fn thinned(&self, max_atoms: usize) -> Self {
        Self {
            grid: self.grid.clone(),
            entries: self.entries.iter().map(|e| e.thinned(max_atoms)).collect(),
        }
    }
}

/// One axiom check: `passed` plus the two compared quantities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxiomCheck {
    pub passed: bool,
    pub lhs: f64,
    pub rhs: f64,
    pub detail: String,
}

impl AxiomCheck {
    fn le(lhs: f64, rhs: f64, detail: String) -> Self {
        let slack = AXIOM_ROUNDING * (1.0 + lhs.abs().max(rhs.abs()));
        Self {
            passed: lhs <= rhs + slack,
            lhs,
            rhs,
            detail,
        }
    }

    fn eq(lhs: f64, rhs: f64, detail: String) -> Self {
        let slack = AXIOM_ROUNDING * (1.0 + lhs.abs().max(rhs.abs()));
        Self {
            passed: (lhs - rhs).abs() <= slack,
            lhs,
            rhs,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxiomReport {
    pub monotonicity: Vec<AxiomCheck>,
    pub constants: Vec<AxiomCheck>,
    pub subadditivity: AxiomCheck,
    pub homogeneity: AxiomCheck,
}

impl AxiomReport {
    pub fn passed(&self) -> bool {
        self.monotonicity.iter().all(|c| c.passed)
            && self.constants.iter().all(|c| c.passed)
            && self.subadditivity.passed
            && self.homogeneity.passed
    }

    /// First failing check, if any.
    pub fn first_failure(&self) -> Option<&AxiomCheck> {
        self.monotonicity
            .iter()
            .chain(&self.constants)
            .chain([&self.subadditivity, &self.homogeneity])
            .find(|c| !c.passed)
    }
}

/// Checks the four sublinear-expectation axioms for `dist` on the pair
/// `(φ, ψ)`, the scale `λ` and the given constants.
///
/// Monotonicity is checked on `φ ∨ ψ ≥ φ`, `φ ∨ ψ ≥ ψ`, and on `φ ≥ ψ` (or
/// `ψ ≥ φ`) when that ordering holds on the union support.
pub fn check_axioms(
    dist: &EmpiricalSublinearDistribution,
    phi: &TestFunction,
    psi: &TestFunction,
    lambda: f64,
    constants: &[f64],
) -> Result<AxiomReport> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(invalid(format!("homogeneity scale must be >= 0, got {lambda}")));
    }
    let f_phi = dist.evaluate(phi)?;
    let f_psi = dist.evaluate(psi)?;

    let support = dist.support();
    let mut monotonicity = Vec::new();
    let sup = phi.max(psi);
    let f_sup = dist.evaluate(&sup)?;
    monotonicity.push(AxiomCheck::le(f_phi, f_sup, "F(φ) <= F(φ∨ψ)".into()));
    monotonicity.push(AxiomCheck::le(f_psi, f_sup, "F(ψ) <= F(φ∨ψ)".into()));
    if support.iter().all(|x| phi.eval(x) >= psi.eval(x)) {
        monotonicity.push(AxiomCheck::le(f_psi, f_phi, "φ >= ψ on support: F(ψ) <= F(φ)".into()));
    } else if support.iter().all(|x| psi.eval(x) >= phi.eval(x)) {
        monotonicity.push(AxiomCheck::le(f_phi, f_psi, "ψ >= φ on support: F(φ) <= F(ψ)".into()));
    }

    let constants = constants
        .iter()
        .map(|&c| {
            let v = dist.evaluate(&TestFunction::constant(c))?;
            Ok(AxiomCheck::eq(v, c, format!("F({c}) = {c}")))
        })
        .collect::<Result<Vec<_>>>()?;

    let f_sum = dist.evaluate(&phi.plus(psi))?;
    let subadditivity = AxiomCheck::le(f_sum, f_phi + f_psi, "F(φ+ψ) <= F(φ)+F(ψ)".into());

    let f_scaled = dist.evaluate(&phi.scaled(lambda))?;
    let homogeneity = AxiomCheck::eq(f_scaled, lambda * f_phi, format!("F({lambda}·φ) = {lambda}·F(φ)"));

    Ok(AxiomReport {
        monotonicity,
        constants,
        subadditivity,
        homogeneity,
    })
}

/// `𝔽_{X_t}` from an ensemble: one uniform measure per control over the
/// replicate values of the state at grid index `t_index`.
pub fn distribution_of(
    ensemble: &PathEnsemble,
    t_index: usize,
) -> Result<EmpiricalSublinearDistribution> {
    if ensemble.replicates() == 0 || ensemble.controls() == 0 {
        return Err(invalid("empty ensemble"));
    }
    if t_index >= ensemble.grid().len() {
        return Err(invalid(format!(
            "time index {t_index} outside a grid of {} points",
            ensemble.grid().len()
        )));
    }
    let n = ensemble.state_dim();
    let reps = ensemble.replicates();
    let measures = (0..ensemble.controls())
        .map(|c| {
            let mut points = Vec::with_capacity(reps * n);
            for r in 0..reps {
                points.extend_from_slice(ensemble.state(ensemble.scenario(c, r), t_index));
            }
            WeightedMeasure::new(n, points, vec![1.0 / reps as f64; reps])
        })
        .collect::<Result<Vec<_>>>()?;
    EmpiricalSublinearDistribution::new(measures)
}
