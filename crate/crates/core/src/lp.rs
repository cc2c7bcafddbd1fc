//! Dense bounded-variable primal simplex.
//!
//! Small and self-contained: the metric LPs have at most a few hundred
//! variables and rows, so a full tableau is cheaper to reason about than a
//! revised factorization. Variables may have infinite bounds on either side;
//! a nonbasic free variable sits at its start value and can move both ways.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("problem is infeasible (phase-one residual {0:e})")]
    Infeasible(f64),
    #[error("objective is unbounded")]
    Unbounded,
    #[error("iteration limit {0} reached")]
    IterationLimit(usize),
    #[error("malformed problem: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<f64>,
    pub kind: RowKind,
    pub rhs: f64,
}

/// `maximize objective·x` subject to `rows` and `lower ≤ x ≤ upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Preferred starting values. A nonbasic variable starts at the finite
    /// bound nearest its hint, or at the hint itself when it is free.
    pub start: Option<Vec<f64>>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self {
            objective,
            rows: Vec::new(),
            lower,
            upper,
            start: None,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, kind: RowKind, rhs: f64) {
        self.rows.push(Row { coeffs, kind, rhs });
    }

    fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::Malformed("bound vectors do not match objective".into()));
        }
        if let Some(s) = &self.start {
            if s.len() != n {
                return Err(LpError::Malformed("start vector has wrong length".into()));
            }
        }
        for (j, (l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l > u || l.is_nan() || u.is_nan() || *l == f64::INFINITY || *u == f64::NEG_INFINITY {
                return Err(LpError::Malformed(format!("bad bounds [{l}, {u}] on variable {j}")));
            }
        }
        for (i, r) in self.rows.iter().enumerate() {
            if r.coeffs.len() != n || !r.rhs.is_finite() || r.coeffs.iter().any(|c| !c.is_finite()) {
                return Err(LpError::Malformed(format!("row {i} is malformed")));
            }
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::Malformed("non-finite objective".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

/// Anything that can solve a [`LinearProgram`] to optimality.
pub trait LpBackend: Sync {
    fn solve(&self, lp: &LinearProgram) -> Result<LpSolution, LpError>;
}

/// Tableau simplex with Dantzig pricing, falling back to Bland's rule after a
/// run of degenerate pivots.
#[derive(Debug, Clone, Copy)]
pub struct DenseSimplex {
    pub cost_tol: f64,
    pub pivot_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
}

impl Default for DenseSimplex {
    fn default() -> Self {
        Self {
            cost_tol: 1e-12,
            pivot_tol: 1e-9,
            feas_tol: 1e-9,
            max_iter: 50_000,
        }
    }
}

impl LpBackend for DenseSimplex {
    fn solve(&self, lp: &LinearProgram) -> Result<LpSolution, LpError> {
        lp.validate()?;
        let mut t = Tableau::build(lp);
        let mut iterations = 0;
        if t.n_art > 0 {
            let phase1: Vec<f64> = (0..t.cols)
                .map(|j| if j >= t.art_start { -1.0 } else { 0.0 })
                .collect();
            iterations += t.optimize(&phase1, self)?;
            let residual: f64 = (t.art_start..t.cols).map(|j| t.x[j]).sum();
            if residual > self.feas_tol * (1.0 + t.rhs_scale) {
                return Err(LpError::Infeasible(residual));
            }
            for j in t.art_start..t.cols {
                t.upper[j] = 0.0;
                if t.pos[j].is_none() {
                    t.x[j] = 0.0;
                }
            }
        }
        let mut phase2 = vec![0.0; t.cols];
        phase2[..lp.num_vars()].copy_from_slice(&lp.objective);
        iterations += t.optimize(&phase2, self)?;
        let x = t.x[..lp.num_vars()].to_vec();
        let objective = x.iter().zip(&lp.objective).map(|(a, b)| a * b).sum();
        Ok(LpSolution {
            x,
            objective,
            iterations,
        })
    }
}

struct Tableau {
    /// Row-major `rows × cols`, kept equal to `B⁻¹A`.
    a: Vec<f64>,
    rows: usize,
    cols: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    x: Vec<f64>,
    basis: Vec<usize>,
    pos: Vec<Option<usize>>,
    art_start: usize,
    n_art: usize,
    rhs_scale: f64,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let m = lp.rows.len();
        let mut x = vec![0.0; n];
        for j in 0..n {
            let hint = lp.start.as_ref().map_or(0.0, |s| s[j]);
            let (l, u) = (lp.lower[j], lp.upper[j]);
            x[j] = match (l.is_finite(), u.is_finite()) {
                (true, true) => {
                    if (hint - l).abs() <= (u - hint).abs() {
                        l
                    } else {
                        u
                    }
                }
                (true, false) => l,
                (false, true) => u,
                (false, false) => hint,
            };
        }

        // Columns: structural, one slack per row, then artificials.
        let mut art_rows = Vec::new();
        let mut slack_val = vec![0.0; m];
        let mut slack_lo = vec![0.0; m];
        let mut slack_hi = vec![0.0; m];
        for (i, r) in lp.rows.iter().enumerate() {
            let act: f64 = r.coeffs.iter().zip(&x).map(|(a, b)| a * b).sum();
            let resid = r.rhs - act;
            let (lo, hi) = match r.kind {
                RowKind::Le => (0.0, f64::INFINITY),
                RowKind::Eq => (0.0, 0.0),
                RowKind::Ge => (f64::NEG_INFINITY, 0.0),
            };
            slack_lo[i] = lo;
            slack_hi[i] = hi;
            let clipped = resid.clamp(lo, hi);
            slack_val[i] = clipped;
            if clipped != resid {
                art_rows.push(i);
            }
        }
        let n_art = art_rows.len();
        let art_start = n + m;
        let cols = n + m + n_art;
        let mut a = vec![0.0; m * cols];
        let mut lower = lp.lower.clone();
        let mut upper = lp.upper.clone();
        lower.extend_from_slice(&slack_lo);
        upper.extend_from_slice(&slack_hi);
        lower.extend(std::iter::repeat_n(0.0, n_art));
        upper.extend(std::iter::repeat_n(f64::INFINITY, n_art));
        x.extend_from_slice(&slack_val);
        x.extend(std::iter::repeat_n(0.0, n_art));
        let mut basis = vec![0; m];
        let mut pos = vec![None; cols];
        let mut art_of_row = vec![None; m];
        for (k, &i) in art_rows.iter().enumerate() {
            art_of_row[i] = Some(k);
        }
        let mut rhs_scale: f64 = 0.0;
        for (i, r) in lp.rows.iter().enumerate() {
            rhs_scale = rhs_scale.max(r.rhs.abs());
            let row = &mut a[i * cols..(i + 1) * cols];
            row[..n].copy_from_slice(&r.coeffs);
            row[n + i] = 1.0;
            match art_of_row[i] {
                None => {
                    basis[i] = n + i;
                    pos[n + i] = Some(i);
                }
                Some(k) => {
                    let act: f64 = r.coeffs.iter().zip(&x[..n]).map(|(a, b)| a * b).sum();
                    let gap = r.rhs - act - slack_val[i];
                    let sign = if gap >= 0.0 { 1.0 } else { -1.0 };
                    let j = art_start + k;
                    row[j] = sign;
                    // Normalize so the basic artificial has coefficient +1.
                    for v in row.iter_mut() {
                        *v *= sign;
                    }
                    x[j] = gap.abs();
                    basis[i] = j;
                    pos[j] = Some(i);
                }
            }
        }
        Self {
            a,
            rows: m,
            cols,
            lower,
            upper,
            x,
            basis,
            pos,
            art_start,
            n_art,
            rhs_scale,
        }
    }

    fn optimize(&mut self, cost: &[f64], opts: &DenseSimplex) -> Result<usize, LpError> {
        let (m, cols) = (self.rows, self.cols);
        let mut iter = 0;
        let mut degenerate_run = 0usize;
        let mut d = vec![0.0; cols];
        loop {
            // Reduced costs d_j = c_j - c_B·T_j.
            d.copy_from_slice(cost);
            for i in 0..m {
                let cb = cost[self.basis[i]];
                if cb != 0.0 {
                    let row = &self.a[i * cols..(i + 1) * cols];
                    for (dj, aij) in d.iter_mut().zip(row) {
                        *dj -= cb * aij;
                    }
                }
            }
            let bland = degenerate_run > 50;
            let mut enter: Option<(usize, f64)> = None;
            let mut best = 0.0;
            for j in 0..cols {
                if self.pos[j].is_some() {
                    continue;
                }
                let dir = if d[j] > opts.cost_tol && self.x[j] < self.upper[j] {
                    1.0
                } else if d[j] < -opts.cost_tol && self.x[j] > self.lower[j] {
                    -1.0
                } else {
                    continue;
                };
                if bland {
                    enter = Some((j, dir));
                    break;
                }
                if d[j].abs() > best {
                    best = d[j].abs();
                    enter = Some((j, dir));
                }
            }
            let Some((j, dir)) = enter else {
                return Ok(iter);
            };
            if iter >= opts.max_iter {
                return Err(LpError::IterationLimit(opts.max_iter));
            }
            iter += 1;

            // Ratio test. Basic x_B moves by -dir·θ·T_ij.
            let mut theta = if dir > 0.0 {
                self.upper[j] - self.x[j]
            } else {
                self.x[j] - self.lower[j]
            };
            let mut leave: Option<(usize, f64)> = None;
            let mut leave_alpha = 0.0;
            for i in 0..m {
                let alpha = self.a[i * cols + j] * dir;
                if alpha.abs() <= opts.pivot_tol {
                    continue;
                }
                let b = self.basis[i];
                let (limit, target) = if alpha > 0.0 {
                    ((self.x[b] - self.lower[b]) / alpha, self.lower[b])
                } else {
                    ((self.upper[b] - self.x[b]) / -alpha, self.upper[b])
                };
                if !limit.is_finite() {
                    continue;
                }
                let limit = limit.max(0.0);
                let better = match leave {
                    None => limit < theta,
                    Some(_) if bland => {
                        limit < theta - 1e-15
                            || (limit <= theta + 1e-15 && b < self.basis[leave.unwrap().0])
                    }
                    Some(_) => {
                        limit < theta - 1e-15 || (limit <= theta + 1e-15 && alpha.abs() > leave_alpha)
                    }
                };
                if better {
                    theta = limit;
                    leave = Some((i, target));
                    leave_alpha = alpha.abs();
                }
            }
            if theta == f64::INFINITY {
                return Err(LpError::Unbounded);
            }
            if theta <= 1e-14 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }

            // Move entering variable and update basic values.
            self.x[j] += dir * theta;
            for i in 0..m {
                let aij = self.a[i * cols + j];
                if aij != 0.0 {
                    self.x[self.basis[i]] -= dir * theta * aij;
                }
            }
            match leave {
                None => {
                    // Bound flip: snap exactly to the bound.
                    self.x[j] = if dir > 0.0 { self.upper[j] } else { self.lower[j] };
                }
                Some((r, target)) => {
                    let b = self.basis[r];
                    self.x[b] = target;
                    self.pivot(r, j);
                    self.pos[b] = None;
                    self.pos[j] = Some(r);
                    self.basis[r] = j;
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let cols = self.cols;
        let p = self.a[r * cols + j];
        for v in &mut self.a[r * cols..(r + 1) * cols] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.a[r * cols..(r + 1) * cols].to_vec();
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.a[i * cols + j];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.a[i * cols..(i + 1) * cols];
            for (v, pr) in row.iter_mut().zip(&pivot_row) {
                *v -= f * pr;
            }
            row[j] = 0.0;
        }
    }
}
