//! Lipschitz-dual distances between sublinear distributions.
//!
//! `d₁(F, G) = sup { |F(φ) − G(φ)| : φ 1-Lipschitz }`. On a finite union
//! support `S` a 1-Lipschitz function is the same thing as a vector `v` with
//! `|v_i − v_j| ≤ |x_i − x_j|` (any such vector extends to all of `ℝⁿ`), so
//! the sup is a finite optimization. For a fixed measure `P` of `F`,
//! `mean_P(v) − max_Q mean_Q(v)` is concave piecewise-linear in `v` and its
//! maximum is one LP in epigraph form. `d₁` is the max of these LPs over both
//! directions and all measures.
//!
//! In one dimension only consecutive constraints matter, and the LP is posed
//! over increments `s_i = v_{i+1} − v_i ∈ [−g_i, g_i]`, with one row per
//! measure on the opposite side.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_dim, invalid, Error, Result};
use crate::lp::{DenseSimplex, LinearProgram, LpBackend, RowKind};
use crate::stats::pairwise_sum;
use crate::sublinear::{
    dist, lex_cmp, union_support, DistributionProcess, EmpiricalSublinearDistribution,
    WeightedMeasure,
};

/// Which one-sided supremum attained `d₁`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `F(φ) − G(φ)`
    FirstMinusSecond,
    /// `G(φ) − F(φ)`
    SecondMinusFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricResult {
    pub value: f64,
    /// Union support, sorted lexicographically.
    pub support: Vec<Vec<f64>>,
    /// Values of a maximizing 1-Lipschitz function on `support`.
    pub witness: Vec<f64>,
    pub direction: Direction,
    /// Index of the measure (on the side named by `direction`) whose LP won.
    pub attaining_measure: usize,
    /// Grid index of the maximum, for time-indexed distances.
    pub time_index: Option<usize>,
}

#[derive(Debug, Clone, Copy)]
pub struct MetricOptions {
    pub backend: DenseSimplex,
    /// In dimension > 1, all pairwise rows are added up front below this
    /// support size; above it rows are generated lazily.
    pub all_pairs_up_to: usize,
    /// Nearest neighbours per point in the initial lazy row set.
    pub neighbours: usize,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            backend: DenseSimplex::default(),
            all_pairs_up_to: 40,
            neighbours: 6,
        }
    }
}

/// Caps for [`d1_bruteforce`].
#[derive(Debug, Clone, Copy)]
pub struct BruteForceOptions {
    pub max_support: usize,
    pub max_candidates: u64,
}

impl Default for BruteForceOptions {
    fn default() -> Self {
        Self {
            max_support: 12,
            max_candidates: 5_000_000,
        }
    }
}

/// Two distributions indexed against their common support.
struct Indexed {
    support: Vec<Vec<f64>>,
    sides: [Vec<Vec<(usize, f64)>>; 2],
}

impl Indexed {
    fn new(f: &EmpiricalSublinearDistribution, g: &EmpiricalSublinearDistribution) -> Self {
        let support = union_support(&[f, g]);
        let index = |m: &WeightedMeasure| -> Vec<(usize, f64)> {
            (0..m.len())
                .map(|i| {
                    let k = support
                        .binary_search_by(|p| lex_cmp(p, m.point(i)))
                        .expect("atom missing from union support");
                    (k, m.weight(i))
                })
                .collect()
        };
        let sides = [
            f.measures().iter().map(index).collect(),
            g.measures().iter().map(index).collect(),
        ];
        Self { support, sides }
    }

    fn m(&self) -> usize {
        self.support.len()
    }

    fn mean(measure: &[(usize, f64)], v: &[f64]) -> f64 {
        pairwise_sum(measure.len(), &|i| measure[i].1 * v[measure[i].0])
    }

    fn functional(&self, side: usize, v: &[f64]) -> f64 {
        self.sides[side]
            .iter()
            .map(|m| Self::mean(m, v))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `F(v) − G(v)` for `side = 0`, the reverse for `side = 1`.
    fn gap(&self, side: usize, v: &[f64]) -> f64 {
        self.functional(side, v) - self.functional(1 - side, v)
    }

    /// Per measure, the mass located strictly right of each gap (1D only).
    fn tails(&self, side: usize) -> Vec<Vec<f64>> {
        let m = self.m();
        self.sides[side]
            .iter()
            .map(|meas| {
                let mut mass = vec![0.0; m];
                for &(k, w) in meas {
                    mass[k] += w;
                }
                let mut tail = vec![0.0; m - 1];
                let mut acc = 0.0;
                for i in (0..m - 1).rev() {
                    acc += mass[i + 1];
                    tail[i] = acc;
                }
                tail
            })
            .collect()
    }

    /// Point masses of each measure at support indices `1..m`.
    fn masses(&self, side: usize) -> Vec<Vec<f64>> {
        let m = self.m();
        self.sides[side]
            .iter()
            .map(|meas| {
                let mut mass = vec![0.0; m];
                for &(k, w) in meas {
                    mass[k] += w;
                }
                mass[1..].to_vec()
            })
            .collect()
    }
}

fn direction_of(side: usize) -> Direction {
    if side == 0 {
        Direction::FirstMinusSecond
    } else {
        Direction::SecondMinusFirst
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cumulative(s: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(s.len() + 1);
    let mut acc = 0.0;
    v.push(0.0);
    for x in s {
        acc += x;
        v.push(acc);
    }
    v
}

/// Exact `d₁(F, G)`.
pub fn d1(
    f: &EmpiricalSublinearDistribution,
    g: &EmpiricalSublinearDistribution,
) -> Result<MetricResult> {
    d1_with(f, g, &MetricOptions::default())
}

pub fn d1_with(
    f: &EmpiricalSublinearDistribution,
    g: &EmpiricalSublinearDistribution,
    opts: &MetricOptions,
) -> Result<MetricResult> {
    check_dim(f.dim(), g.dim())?;
    let ix = Indexed::new(f, g);
    if ix.m() == 1 {
        return Ok(MetricResult {
            value: 0.0,
            support: ix.support,
            witness: vec![0.0],
            direction: Direction::FirstMinusSecond,
            attaining_measure: 0,
            time_index: None,
        });
    }
    let jobs: Vec<(usize, usize)> = (0..2)
        .flat_map(|side| (0..ix.sides[side].len()).map(move |p| (side, p)))
        .collect();
    let solved: Vec<Result<Vec<f64>>> = if f.dim() == 1 {
        let tails = [ix.tails(0), ix.tails(1)];
        jobs.par_iter()
            .map(|&(side, p)| solve_1d(&ix, &tails, side, p, &opts.backend))
            .collect()
    } else {
        let masses = [ix.masses(0), ix.masses(1)];
        jobs.par_iter()
            .map(|&(side, p)| solve_nd(&ix, &masses, side, p, opts))
            .collect()
    };

    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    for (job, (&(side, _), v)) in jobs.iter().zip(solved).enumerate() {
        let v = v?;
        let value = ix.gap(side, &v);
        if best.as_ref().is_none_or(|(b, _, _)| value > b + 1e-12) {
            best = Some((value, job, v));
        }
    }
    let (value, job, witness) = best.expect("at least one measure per side");
    let (side, p) = jobs[job];
    Ok(MetricResult {
        value: value.max(0.0),
        support: ix.support,
        witness,
        direction: direction_of(side),
        attaining_measure: p,
        time_index: None,
    })
}

fn solve_1d(
    ix: &Indexed,
    tails: &[Vec<Vec<f64>>; 2],
    side: usize,
    p: usize,
    backend: &impl LpBackend,
) -> Result<Vec<f64>> {
    let m = ix.m();
    let gaps: Vec<f64> = (0..m - 1)
        .map(|i| ix.support[i + 1][0] - ix.support[i][0])
        .collect();
    let cp = &tails[side][p];
    let others = &tails[1 - side];
    let nq = others.len() as f64;

    let mut objective = cp.clone();
    objective.push(-1.0);
    let mut lower: Vec<f64> = gaps.iter().map(|g| -g).collect();
    lower.push(f64::NEG_INFINITY);
    let mut upper = gaps.clone();
    upper.push(f64::INFINITY);
    let mut lp = LinearProgram::new(objective, lower, upper);
    for cq in others {
        let mut row = cq.clone();
        row.push(-1.0);
        lp.add_row(row, RowKind::Le, 0.0);
    }
    // Start each increment at the bound favoured against the average opponent
    // and t at the resulting max, so the start is feasible.
    let mut s0: Vec<f64> = (0..m - 1)
        .map(|i| {
            let avg = others.iter().map(|c| c[i]).sum::<f64>() / nq;
            if cp[i] >= avg {
                gaps[i]
            } else {
                -gaps[i]
            }
        })
        .collect();
    let t0 = others
        .iter()
        .map(|c| dot(c, &s0))
        .fold(f64::NEG_INFINITY, f64::max);
    s0.push(t0);
    lp.start = Some(s0);
    let sol = backend.solve(&lp)?;
    let s: Vec<f64> = sol.x[..m - 1]
        .iter()
        .zip(&gaps)
        .map(|(s, g)| s.clamp(-g, *g))
        .collect();
    Ok(cumulative(&s))
}

fn solve_nd(
    ix: &Indexed,
    masses: &[Vec<Vec<f64>>; 2],
    side: usize,
    p: usize,
    opts: &MetricOptions,
) -> Result<Vec<f64>> {
    let m = ix.m();
    let nv = m - 1;
    let pts = &ix.support;
    let radius: Vec<f64> = (1..m).map(|i| dist(&pts[i], &pts[0])).collect();

    let mut objective = masses[side][p].clone();
    objective.push(-1.0);
    let mut lower: Vec<f64> = radius.iter().map(|r| -r).collect();
    lower.push(f64::NEG_INFINITY);
    let mut upper = radius.clone();
    upper.push(f64::INFINITY);
    let mut base = LinearProgram::new(objective, lower, upper);
    for cq in &masses[1 - side] {
        let mut row = cq.clone();
        row.push(-1.0);
        base.add_row(row, RowKind::Le, 0.0);
    }

    // Pairs among non-anchor points; anchor pairs are the variable bounds.
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    if m <= opts.all_pairs_up_to {
        for i in 1..m {
            for j in (i + 1)..m {
                pairs.push((i, j));
            }
        }
    } else {
        for i in 1..m {
            let mut near: Vec<(f64, usize)> = (1..m)
                .filter(|&j| j != i)
                .map(|j| (dist(&pts[i], &pts[j]), j))
                .collect();
            near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for &(_, j) in near.iter().take(opts.neighbours) {
                pairs.push((i.min(j), i.max(j)));
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
    }

    loop {
        let mut lp = base.clone();
        for &(i, j) in &pairs {
            let d = dist(&pts[i], &pts[j]);
            let mut row = vec![0.0; nv + 1];
            row[i - 1] = 1.0;
            row[j - 1] = -1.0;
            lp.add_row(row.clone(), RowKind::Le, d);
            row[i - 1] = -1.0;
            row[j - 1] = 1.0;
            lp.add_row(row, RowKind::Le, d);
        }
        let sol = opts.backend.solve(&lp)?;
        let mut v = Vec::with_capacity(m);
        v.push(0.0);
        v.extend_from_slice(&sol.x[..nv]);
        if m <= opts.all_pairs_up_to {
            return Ok(v);
        }
        let mut violated = Vec::new();
        for i in 1..m {
            for j in (i + 1)..m {
                if (v[i] - v[j]).abs() > dist(&pts[i], &pts[j]) + 1e-12 {
                    violated.push((i, j));
                }
            }
        }
        if violated.is_empty() {
            return Ok(v);
        }
        pairs.extend(violated);
        pairs.sort_unstable();
        pairs.dedup();
    }
}

/// `d_r = r·d₁`.
pub fn dr(
    f: &EmpiricalSublinearDistribution,
    g: &EmpiricalSublinearDistribution,
    r: f64,
) -> Result<f64> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(invalid(format!("scale r must be positive and finite, got {r}")));
    }
    Ok(r * d1(f, g)?.value)
}

/// `max_{k ≤ up_to} d₁(F_k, G_k)` over grid indices, recording the argmax.
pub fn d1t(
    fp: &DistributionProcess,
    gp: &DistributionProcess,
    up_to_index: Option<usize>,
) -> Result<MetricResult> {
    d1t_with(fp, gp, up_to_index, &MetricOptions::default())
}

pub fn d1t_with(
    fp: &DistributionProcess,
    gp: &DistributionProcess,
    up_to_index: Option<usize>,
    opts: &MetricOptions,
) -> Result<MetricResult> {
    if fp.grid() != gp.grid() {
        return Err(Error::GridMismatch(
            "distribution processes live on different grids".into(),
        ));
    }
    let last = fp.grid().len() - 1;
    let upto = up_to_index.unwrap_or(last);
    if upto > last {
        return Err(invalid(format!("index {upto} beyond last grid index {last}")));
    }
    let per_time: Vec<Result<MetricResult>> = (0..=upto)
        .into_par_iter()
        .map(|k| d1_with(fp.at(k), gp.at(k), opts))
        .collect();
    let mut best: Option<MetricResult> = None;
    for (k, r) in per_time.into_iter().enumerate() {
        let mut r = r?;
        r.time_index = Some(k);
        if best.as_ref().is_none_or(|b| r.value > b.value) {
            best = Some(r);
        }
    }
    Ok(best.expect("grid has at least one point"))
}

/// Classical 1-Wasserstein distance on the line via the quantile coupling.
pub fn wasserstein1_1d(mu: &WeightedMeasure, nu: &WeightedMeasure) -> Result<f64> {
    if mu.dim() != 1 || nu.dim() != 1 {
        return Err(Error::Unsupported(format!(
            "quantile formula needs dimension 1, got {} and {}",
            mu.dim(),
            nu.dim()
        )));
    }
    let sorted = |m: &WeightedMeasure| {
        let mut a: Vec<(f64, f64)> = (0..m.len()).map(|i| (m.point(i)[0], m.weight(i))).collect();
        a.sort_by(|x, y| x.0.total_cmp(&y.0));
        a
    };
    let (a, b) = (sorted(mu), sorted(nu));
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    let mut pieces = Vec::with_capacity(a.len() + b.len());
    while i < a.len() && j < b.len() {
        let w = ra.min(rb);
        pieces.push(w * (a[i].0 - b[j].0).abs());
        ra -= w;
        rb -= w;
        // Advance whichever side ran out; weights are normalized so the two
        // pointers finish together up to rounding.
        if ra <= 1e-15 {
            i += 1;
            if i < a.len() {
                ra = a[i].1;
            }
        }
        if rb <= 1e-15 {
            j += 1;
            if j < b.len() {
                rb = b[j].1;
            }
        }
    }
    Ok(pairwise_sum(pieces.len(), &|k| pieces[k]))
}

/// Independent vertex-enumeration oracle for `d₁`.
///
/// Every vertex of each epigraph LP polytope is a point where as many
/// constraints as unknowns are tight. The oracle enumerates such tight sets,
/// solves for the point by elimination, keeps the feasible ones, and returns
/// the best `|F(v) − G(v)|`. No simplex is involved.
///
/// In one dimension the unknowns are the increments and `t`: a vertex ties
/// the means of a subset `S` of the opposing measures (one equation each),
/// leaves `|S| − 1` increments free and pins the rest at `±g_i`. With no ties
/// this reduces to the `2^(m−1)` slope-±1 zigzags. In higher dimension all
/// tight subsets of pairwise, anchor and epigraph constraints are tried.
pub fn d1_bruteforce(
    f: &EmpiricalSublinearDistribution,
    g: &EmpiricalSublinearDistribution,
) -> Result<f64> {
    d1_bruteforce_with(f, g, &BruteForceOptions::default())
}

pub fn d1_bruteforce_with(
    f: &EmpiricalSublinearDistribution,
    g: &EmpiricalSublinearDistribution,
    opts: &BruteForceOptions,
) -> Result<f64> {
    check_dim(f.dim(), g.dim())?;
    let ix = Indexed::new(f, g);
    let m = ix.m();
    if m > opts.max_support {
        return Err(Error::Capacity(format!(
            "union support has {m} points, oracle cap is {}",
            opts.max_support
        )));
    }
    if m == 1 {
        return Ok(0.0);
    }
    if f.dim() == 1 {
        brute_1d(&ix, opts)
    } else {
        brute_nd(&ix, opts)
    }
}

fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc.min(u64::MAX as u128) as u64
}

/// Calls `visit` with every increasing `k`-subset of `0..n`.
fn for_each_subset(n: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        visit(&idx);
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] < n - k + i {
                idx[i] += 1;
                for j in (i + 1)..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Solves `a·x = b` (row-major `n × n`) by partial pivoting; `None` if singular.
fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))?;
        if a[piv * n + col].abs() < 1e-12 {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
            }
            b.swap(piv, col);
        }
        for r in (col + 1)..n {
            let f = a[r * n + col] / a[col * n + col];
            if f != 0.0 {
                for k in col..n {
                    a[r * n + k] -= f * a[col * n + k];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = ((r + 1)..n).map(|k| a[r * n + k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r * n + r];
    }
    Some(x)
}

fn brute_1d(ix: &Indexed, opts: &BruteForceOptions) -> Result<f64> {
    let m = ix.m();
    let ni = m - 1;
    let gaps: Vec<f64> = (0..ni)
        .map(|i| ix.support[i + 1][0] - ix.support[i][0])
        .collect();
    let tails = [ix.tails(0), ix.tails(1)];

    let mut total: u64 = 0;
    for tied in &tails {
        for j in 1..=tied.len().min(m) {
            total = total.saturating_add(
                binomial(tied.len(), j)
                    .saturating_mul(binomial(ni, j - 1))
                    .saturating_mul(1u64 << (ni - (j - 1))),
            );
        }
    }
    if total > opts.max_candidates {
        return Err(Error::Capacity(format!(
            "{total} candidate vertices exceed the cap {}",
            opts.max_candidates
        )));
    }

    let mut best: f64 = 0.0;
    let mut s = vec![0.0; ni];
    let mut consider = |s: &[f64]| {
        let v = cumulative(s);
        best = best.max(ix.gap(0, &v).abs());
    };
    for tied in &tails {
        for j in 1..=tied.len().min(m) {
            for_each_subset(tied.len(), j, |subset| {
                for_each_subset(ni, j - 1, |free| {
                    let pinned: Vec<usize> = (0..ni).filter(|i| !free.contains(i)).collect();
                    for mask in 0u64..(1u64 << pinned.len()) {
                        for (b, &i) in pinned.iter().enumerate() {
                            s[i] = if mask >> b & 1 == 1 { gaps[i] } else { -gaps[i] };
                        }
                        if j > 1 {
                            // Unknowns: free increments then t.
                            let mut a = vec![0.0; j * j];
                            let mut rhs = vec![0.0; j];
                            for (r, &q) in subset.iter().enumerate() {
                                let c = &tied[q];
                                for (k, &i) in free.iter().enumerate() {
                                    a[r * j + k] = c[i];
                                }
                                a[r * j + j - 1] = -1.0;
                                rhs[r] = -pinned.iter().map(|&i| c[i] * s[i]).sum::<f64>();
                            }
                            let Some(sol) = solve_dense(a, rhs, j) else {
                                continue;
                            };
                            let mut ok = true;
                            for (k, &i) in free.iter().enumerate() {
                                if sol[k].abs() > gaps[i] + 1e-12 {
                                    ok = false;
                                    break;
                                }
                                s[i] = sol[k].clamp(-gaps[i], gaps[i]);
                            }
                            if !ok {
                                continue;
                            }
                        }
                        consider(&s);
                    }
                });
            });
        }
    }
    Ok(best)
}

fn brute_nd(ix: &Indexed, opts: &BruteForceOptions) -> Result<f64> {
    let m = ix.m();
    let nv = m - 1;
    let nu = m; // v_1..v_{m-1} and t
    let pts = &ix.support;
    let masses = [ix.masses(0), ix.masses(1)];

    // Constraints `a·u ≤ b` common to both directions.
    let mut lips: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in 1..m {
        let r = dist(&pts[i], &pts[0]);
        let mut a = vec![0.0; nu];
        a[i - 1] = 1.0;
        lips.push((a.clone(), r));
        a[i - 1] = -1.0;
        lips.push((a, r));
        for j in (i + 1)..m {
            let d = dist(&pts[i], &pts[j]);
            let mut a = vec![0.0; nu];
            a[i - 1] = 1.0;
            a[j - 1] = -1.0;
            lips.push((a.clone(), d));
            a[i - 1] = -1.0;
            a[j - 1] = 1.0;
            lips.push((a, d));
        }
    }

    let mut total: u64 = 0;
    for side in 0..2 {
        total = total.saturating_add(binomial(lips.len() + masses[1 - side].len(), nu));
    }
    if total > opts.max_candidates {
        return Err(Error::Capacity(format!(
            "{total} tight-set candidates exceed the cap {}",
            opts.max_candidates
        )));
    }

    let mut best: f64 = 0.0;
    for side in 0..2 {
        let mut cons = lips.clone();
        for c in &masses[1 - side] {
            let mut a = c.clone();
            a.push(-1.0);
            cons.push((a, 0.0));
        }
        for_each_subset(cons.len(), nu, |tight| {
            let mut a = Vec::with_capacity(nu * nu);
            let mut b = Vec::with_capacity(nu);
            for &k in tight {
                a.extend_from_slice(&cons[k].0);
                b.push(cons[k].1);
            }
            let Some(u) = solve_dense(a, b, nu) else {
                return;
            };
            let feasible = cons
                .iter()
                .all(|(a, b)| dot(a, &u) <= b + 1e-9 * (1.0 + b.abs()));
            if !feasible {
                return;
            }
            let mut v = Vec::with_capacity(m);
            v.push(0.0);
            v.extend_from_slice(&u[..nv]);
            best = best.max(ix.gap(0, &v).abs());
        });
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn diracs(p: &[f64]) -> EmpiricalSublinearDistribution {
        EmpiricalSublinearDistribution::diracs_1d(p).unwrap()
    }

    #[test]
    fn identical_is_zero() {
        let f = diracs(&[0.0, 2.0]);
        assert_eq!(d1(&f, &f).unwrap().value, 0.0);
        assert_eq!(d1_bruteforce(&f, &f).unwrap(), 0.0);
    }

    #[test]
    fn dirac_pair() {
        let r = d1(&diracs(&[3.0]), &diracs(&[-1.0])).unwrap();
        assert_abs_diff_eq!(r.value, 4.0, epsilon = 1e-12);
        assert_eq!(r.direction, Direction::FirstMinusSecond);
        assert_abs_diff_eq!(d1_bruteforce(&diracs(&[3.0]), &diracs(&[-1.0])).unwrap(), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn two_diracs_against_middle() {
        let (f, g) = (diracs(&[0.0, 2.0]), diracs(&[1.0]));
        let r = d1(&f, &g).unwrap();
        assert_abs_diff_eq!(r.value, 1.0, epsilon = 1e-12);
        // Both sides attain 1 (φ = x and φ = -|x-1|); ties go to F - G.
        assert_eq!(r.direction, Direction::FirstMinusSecond);
        assert_abs_diff_eq!(d1_bruteforce(&f, &g).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(dr(&f, &g, 0.5).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn uniform_against_origin_is_mean_abs() {
        let f = EmpiricalSublinearDistribution::single(WeightedMeasure::uniform_1d(&[0.0, 2.0]).unwrap());
        let g = diracs(&[0.0]);
        assert_abs_diff_eq!(d1(&f, &g).unwrap().value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn dr_scaling_and_rejection() {
        let (f, g) = (diracs(&[3.0]), diracs(&[-1.0]));
        assert_abs_diff_eq!(dr(&f, &g, 2.0).unwrap(), 8.0, epsilon = 1e-12);
        assert!(dr(&f, &g, 0.0).is_err());
        assert!(dr(&f, &g, -1.0).is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let g = EmpiricalSublinearDistribution::dirac(vec![0.0, 0.0]).unwrap();
        assert!(matches!(d1(&diracs(&[0.0]), &g), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn center_against_symmetric_pair() {
        let (f, g) = (diracs(&[0.0]), diracs(&[-1.0, 1.0]));
        let lp = d1(&f, &g).unwrap().value;
        let bf = d1_bruteforce(&f, &g).unwrap();
        assert_abs_diff_eq!(lp, bf, epsilon = 1e-12);
        assert_abs_diff_eq!(lp, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn wasserstein_examples() {
        let u = |v: &[f64]| WeightedMeasure::uniform_1d(v).unwrap();
        assert_eq!(wasserstein1_1d(&u(&[1.0, 2.0]), &u(&[1.0, 2.0])).unwrap(), 0.0);
        assert_abs_diff_eq!(wasserstein1_1d(&u(&[3.0]), &u(&[-1.0])).unwrap(), 4.0);
        assert_abs_diff_eq!(wasserstein1_1d(&u(&[0.0, 2.0]), &u(&[1.0])).unwrap(), 1.0);
        let two = WeightedMeasure::dirac(vec![0.0, 0.0]).unwrap();
        assert!(matches!(wasserstein1_1d(&two, &two), Err(Error::Unsupported(_))));
    }

    #[test]
    fn two_dimensional_diracs() {
        let f = EmpiricalSublinearDistribution::dirac(vec![0.0, 0.0]).unwrap();
        let g = EmpiricalSublinearDistribution::dirac(vec![3.0, 4.0]).unwrap();
        assert_abs_diff_eq!(d1(&f, &g).unwrap().value, 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d1_bruteforce(&f, &g).unwrap(), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn oracle_capacity() {
        let pts: Vec<f64> = (0..13).map(f64::from).collect();
        let f = EmpiricalSublinearDistribution::single(WeightedMeasure::uniform_1d(&pts).unwrap());
        let g = diracs(&[0.0]);
        assert!(matches!(d1_bruteforce(&f, &g), Err(Error::Capacity(_))));
    }

    #[test]
    fn subsets_enumerated_in_order() {
        let mut seen = Vec::new();
        for_each_subset(4, 2, |s| seen.push(s.to_vec()));
        assert_eq!(seen.len(), 6);
        assert_eq!(seen[0], vec![0, 1]);
        assert_eq!(seen[5], vec![2, 3]);
        let mut empty = 0;
        for_each_subset(3, 0, |_| empty += 1);
        assert_eq!(empty, 1);
        assert_eq!(binomial(11, 2), 55);
    }
}
