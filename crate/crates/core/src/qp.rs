//! Minimum-Euclidean-norm solutions of affine inequality systems.
//!
//! Solves
//!
//! ```text
//!     minimize    ‖δ‖₂²
//!     subject to  A δ ≥ b
//! ```
//!
//! with the Goldfarb–Idnani dual active-set method specialized to the
//! identity Hessian. Stationarity gives `δ = Aᵀλ`, so the solver only touches
//! the Gram matrix `AAᵀ` of the constraint normals: its working object is
//! |I|×|I| however large the parameter space is. Starting from the
//! unconstrained minimizer `δ = 0`, each outer iteration picks the most
//! violated constraint and moves along the dual path until that constraint
//! becomes active, dropping active constraints whose multipliers hit zero.
//!
//! [`MinNormSolver`] is incremental: constraints may be appended after a
//! solve and the next solve resumes from the current active set, which stays
//! dual feasible.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm_inf};

pub const DEFAULT_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

impl std::fmt::Display for SolverStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolverStatus::Optimal => "optimal",
            SolverStatus::Infeasible => "infeasible",
            SolverStatus::IterationLimit => "iteration_limit",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Slack below `-feasibility_tol·(1+|b_p|)` counts as a violation.
    pub feasibility_tol: f64,
    /// A new normal is treated as dependent on the active normals when its
    /// squared distance to their span is below this fraction of its squared norm.
    pub dependence_tol: f64,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-11,
            dependence_tol: 1e-11,
            max_iterations: 1_000_000,
        }
    }
}

/// Dense problem `min ‖δ‖² s.t. Aδ ≥ b`.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub n_vars: usize,
    pub rows: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl QpProblem {
    pub fn new(n_vars: usize, rows: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        if rows.len() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                got: b.len(),
            });
        }
        for r in &rows {
            if r.len() != n_vars {
                return Err(Error::DimensionMismatch {
                    expected: n_vars,
                    got: r.len(),
                });
            }
        }
        if rows.iter().flatten().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite problem data".into()));
        }
        Ok(Self { n_vars, rows, b })
    }

    /// Strict constraints `Aδ > r` realized as `Aδ ≥ r + margin`.
    pub fn from_strict(n_vars: usize, rows: Vec<Vec<f64>>, rhs: &[f64], margin: f64) -> Result<Self> {
        Self::new(n_vars, rows, rhs.iter().map(|r| r + margin).collect())
    }

    /// Matrix-Market-style dense text dump: `A` as an `m × n` array in
    /// column-major order, followed by `b` as an `m × 1` array.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        let m = self.rows.len();
        writeln!(out, "%%MatrixMarket matrix array real general")?;
        writeln!(out, "% min ||x||^2 subject to A x >= b; A follows, then b")?;
        writeln!(out, "{m} {}", self.n_vars)?;
        for j in 0..self.n_vars {
            for row in &self.rows {
                writeln!(out, "{:?}", row[j])?;
            }
        }
        writeln!(out, "{m} 1")?;
        for v in &self.b {
            writeln!(out, "{v:?}")?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut tokens = Vec::new();
        for line in input.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('%') {
                continue;
            }
            tokens.extend(line.split_whitespace().map(str::to_owned));
        }
        let mut it = tokens.into_iter();
        let mut next = |what: &str| -> Result<String> {
            it.next().ok_or_else(|| Error::Format(format!("missing {what}")))
        };
        let parse_usize = |s: String| {
            s.parse::<usize>()
                .map_err(|e| Error::Format(format!("bad size {s:?}: {e}")))
        };
        let parse_f64 = |s: String| {
            s.parse::<f64>()
                .map_err(|e| Error::Format(format!("bad value {s:?}: {e}")))
        };
        let m = parse_usize(next("rows")?)?;
        let n = parse_usize(next("columns")?)?;
        let mut rows = vec![vec![0.0; n]; m];
        for j in 0..n {
            for row in rows.iter_mut() {
                row[j] = parse_f64(next("matrix entry")?)?;
            }
        }
        let mb = parse_usize(next("rhs rows")?)?;
        let one = parse_usize(next("rhs columns")?)?;
        if mb != m || one != 1 {
            return Err(Error::Format("rhs must be m x 1".into()));
        }
        let b = (0..m)
            .map(|_| next("rhs entry").and_then(parse_f64))
            .collect::<Result<Vec<_>>>()?;
        Self::new(n, rows, b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    /// max(0, max_p (b_p − a_pᵀδ)).
    pub primal_violation: f64,
    /// ‖δ − Aᵀλ‖∞.
    pub stationarity: f64,
    /// |λᵀ(Aδ − b)|.
    pub complementarity: f64,
    /// min_p λ_p (nonnegative at a certificate).
    pub min_dual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub delta: Vec<f64>,
    pub status: SolverStatus,
    pub lambda: Vec<f64>,
    pub active: Vec<usize>,
    pub kkt: KktResiduals,
    pub iterations: usize,
}

impl QpSolution {
    pub fn norm(&self) -> f64 {
        dot(&self.delta, &self.delta).sqrt()
    }
}

/// Incremental identity-Hessian dual active-set solver.
#[derive(Debug, Clone)]
pub struct MinNormSolver {
    n_vars: usize,
    cfg: SolverConfig,
    rows: Vec<Vec<f64>>,
    b: Vec<f64>,
    /// Lower triangle of AAᵀ: `gram[i][j]` for `j ≤ i`.
    gram: Vec<Vec<f64>>,
    lambda: Vec<f64>,
    active: Vec<usize>,
    /// Lower Cholesky factor of the active Gram block, row `i` has `i + 1` entries.
    chol: Vec<Vec<f64>>,
    iterations: usize,
    infeasible: bool,
}

impl MinNormSolver {
    pub fn new(n_vars: usize, cfg: SolverConfig) -> Self {
        Self {
            n_vars,
            cfg,
            rows: Vec::new(),
            b: Vec::new(),
            gram: Vec::new(),
            lambda: Vec::new(),
            active: Vec::new(),
            chol: Vec::new(),
            iterations: 0,
            infeasible: false,
        }
    }

    pub fn from_problem(problem: &QpProblem, cfg: SolverConfig) -> Result<Self> {
        let mut s = Self::new(problem.n_vars, cfg);
        for (row, &b) in problem.rows.iter().zip(&problem.b) {
            s.push(row.clone(), b)?;
        }
        Ok(s)
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn bounds(&self) -> &[f64] {
        &self.b
    }

    /// Appends `rowᵀδ ≥ b` and returns its index.
    pub fn push(&mut self, row: Vec<f64>, b: f64) -> Result<usize> {
        if row.len() != self.n_vars {
            return Err(Error::DimensionMismatch {
                expected: self.n_vars,
                got: row.len(),
            });
        }
        if !b.is_finite() || row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite constraint".into()));
        }
        let mut g: Vec<f64> = self.rows.iter().map(|r| dot(r, &row)).collect();
        g.push(dot(&row, &row));
        self.gram.push(g);
        self.rows.push(row);
        self.b.push(b);
        self.lambda.push(0.0);
        Ok(self.rows.len() - 1)
    }

    #[inline]
    fn g(&self, i: usize, j: usize) -> f64 {
        if j <= i {
            self.gram[i][j]
        } else {
            self.gram[j][i]
        }
    }

    fn slack(&self, p: usize) -> f64 {
        self.active
            .iter()
            .map(|&j| self.lambda[j] * self.g(p, j))
            .sum::<f64>()
            - self.b[p]
    }

    /// Solves (L Lᵀ) x = v over the active block.
    fn chol_solve(&self, v: &mut [f64]) {
        let k = self.chol.len();
        for i in 0..k {
            let row = &self.chol[i];
            v[i] = (v[i] - dot(&row[..i], &v[..i])) / row[i];
        }
        for i in (0..k).rev() {
            let mut s = v[i];
            for r in i + 1..k {
                s -= self.chol[r][i] * v[r];
            }
            v[i] = s / self.chol[i][i];
        }
    }

    fn chol_append(&mut self, g_active: &[f64], residual: f64) {
        let k = self.chol.len();
        let mut l = g_active.to_vec();
        for i in 0..k {
            let row = &self.chol[i];
            l[i] = (l[i] - dot(&row[..i], &l[..i])) / row[i];
        }
        l.push(residual.max(f64::MIN_POSITIVE).sqrt());
        self.chol.push(l);
    }

    /// Removes active position `q` and restores triangularity with Givens rotations.
    fn chol_remove(&mut self, q: usize) {
        self.chol.remove(q);
        let k = self.chol.len();
        for r in q..k {
            let (a, b) = (self.chol[r][r], self.chol[r][r + 1]);
            let h = a.hypot(b);
            if h == 0.0 {
                continue;
            }
            let (c, s) = (a / h, b / h);
            for row in self.chol[r..].iter_mut() {
                let (x, y) = (row[r], row[r + 1]);
                row[r] = c * x + s * y;
                row[r + 1] = -s * x + c * y;
            }
            if self.chol[r][r] < 0.0 {
                for row in self.chol[r..].iter_mut() {
                    row[r] = -row[r];
                }
            }
        }
        for row in self.chol[q..].iter_mut() {
            row.pop();
        }
    }

    fn drop_active(&mut self, q: usize) {
        let idx = self.active.remove(q);
        self.lambda[idx] = 0.0;
        self.chol_remove(q);
    }

    fn most_violated(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for p in 0..self.rows.len() {
            let s = self.slack(p);
            if s < -self.cfg.feasibility_tol * (1.0 + self.b[p].abs()) {
                let score = s / self.gram[p][p].sqrt().max(1e-300);
                if best.is_none_or(|(_, b)| score < b) {
                    best = Some((p, score));
                }
            }
        }
        best.map(|(p, _)| p)
    }

    /// Runs the dual active-set iteration from the current state.
    pub fn solve(&mut self) -> SolverStatus {
        if self.infeasible {
            return SolverStatus::Infeasible;
        }
        loop {
            let Some(p) = self.most_violated() else {
                return SolverStatus::Optimal;
            };
            let mut slack_p = self.slack(p);
            loop {
                if self.iterations >= self.cfg.max_iterations {
                    return SolverStatus::IterationLimit;
                }
                self.iterations += 1;

                let g_ap: Vec<f64> = self.active.iter().map(|&j| self.g(p, j)).collect();
                let mut r = g_ap.clone();
                self.chol_solve(&mut r);
                let gpp = self.gram[p][p];
                let zz = gpp - dot(&g_ap, &r);

                let r_scale = 1e-14 * (1.0 + norm_inf(&r));
                let mut partial: Option<(usize, f64)> = None;
                for (q, &rq) in r.iter().enumerate() {
                    if rq > r_scale {
                        let step = self.lambda[self.active[q]] / rq;
                        if partial.is_none_or(|(_, t)| step < t) {
                            partial = Some((q, step));
                        }
                    }
                }
                let full = (zz > self.cfg.dependence_tol * gpp).then(|| -slack_p / zz);

                let (step, add) = match (partial, full) {
                    (None, None) => {
                        self.infeasible = true;
                        return SolverStatus::Infeasible;
                    }
                    (Some((_, t1)), Some(t2)) if t2 <= t1 => (t2, true),
                    (_, Some(t2)) if partial.is_none() => (t2, true),
                    (Some((_, t1)), _) => (t1, false),
                    _ => unreachable!(),
                };

                for (q, &rq) in r.iter().enumerate() {
                    let j = self.active[q];
                    self.lambda[j] = (self.lambda[j] - step * rq).max(0.0);
                }
                self.lambda[p] += step;
                slack_p += step * zz.max(0.0);

                if add {
                    self.chol_append(&g_ap, zz);
                    self.active.push(p);
                    break;
                }
                let (q, _) = partial.expect("partial step");
                self.drop_active(q);
            }
        }
    }

    /// Primal point `δ = Aᵀλ`.
    pub fn delta(&self) -> Vec<f64> {
        let mut delta = vec![0.0; self.n_vars];
        for &j in &self.active {
            axpy(self.lambda[j], &self.rows[j], &mut delta);
        }
        delta
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Solves and packages the result with its KKT residuals evaluated in primal space.
    pub fn solve_to_solution(&mut self) -> QpSolution {
        let status = self.solve();
        self.solution(status)
    }

    pub fn solution(&self, status: SolverStatus) -> QpSolution {
        let delta = self.delta();
        let kkt = kkt_residuals(&self.rows, &self.b, &delta, &self.lambda);
        QpSolution {
            delta,
            status,
            lambda: self.lambda.clone(),
            active: self.active.clone(),
            kkt,
            iterations: self.iterations,
        }
    }

    /// Seeds the active set from a previous solution when that set is a
    /// valid dual-feasible starting point for this problem.
    fn warm_start(&mut self, active: &[usize]) -> bool {
        if active.iter().any(|&j| j >= self.rows.len()) {
            return false;
        }
        let k = active.len();
        let mut block = vec![0.0; k * k];
        for (a, &i) in active.iter().enumerate() {
            for (c, &j) in active.iter().enumerate() {
                block[a * k + c] = self.g(i, j);
            }
        }
        let Some(l) = crate::linalg::cholesky(&block, k) else {
            return false;
        };
        let mut lam: Vec<f64> = active.iter().map(|&j| self.b[j]).collect();
        crate::linalg::cholesky_solve(&l, k, &mut lam);
        if lam.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return false;
        }
        self.chol = (0..k).map(|i| l[i * k..i * k + i + 1].to_vec()).collect();
        self.active = active.to_vec();
        for (&j, &v) in active.iter().zip(&lam) {
            self.lambda[j] = v;
        }
        true
    }
}

pub fn kkt_residuals(rows: &[Vec<f64>], b: &[f64], delta: &[f64], lambda: &[f64]) -> KktResiduals {
    let mut primal_violation = 0.0f64;
    let mut complementarity = 0.0;
    let mut back = vec![0.0; delta.len()];
    for ((row, &bp), &lp) in rows.iter().zip(b).zip(lambda) {
        let s = dot(row, delta) - bp;
        primal_violation = primal_violation.max(-s);
        complementarity += lp * s;
        if lp != 0.0 {
            axpy(lp, row, &mut back);
        }
    }
    let stationarity = delta
        .iter()
        .zip(&back)
        .fold(0.0f64, |m, (d, a)| m.max((d - a).abs()));
    KktResiduals {
        primal_violation,
        stationarity,
        complementarity: complementarity.abs(),
        min_dual: lambda.iter().copied().fold(f64::INFINITY, f64::min),
    }
}

/// Solves `problem`, optionally resuming from the active set of `warm`.
pub fn solve_min_norm(problem: &QpProblem, warm: Option<&QpSolution>) -> Result<QpSolution> {
    solve_min_norm_with(problem, warm, SolverConfig::default())
}

pub fn solve_min_norm_with(
    problem: &QpProblem,
    warm: Option<&QpSolution>,
    cfg: SolverConfig,
) -> Result<QpSolution> {
    let mut solver = MinNormSolver::from_problem(problem, cfg)?;
    if let Some(w) = warm {
        solver.warm_start(&w.active);
    }
    Ok(solver.solve_to_solution())
}

pub const PINV_CONDITION_LIMIT: f64 = 1e12;

/// Minimum-norm solution of the equality system `Aδ = b`, `δ̃ = Aᵀ(AAᵀ)⁻¹b`,
/// computed from a thin SVD of `A`. Its norm bounds the inequality optimum.
pub fn pseudo_inverse_bound(rows: &[Vec<f64>], b: &[f64]) -> Result<(Vec<f64>, f64)> {
    let m = rows.len();
    if m != b.len() {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: b.len(),
        });
    }
    if m == 0 {
        return Err(Error::EmptyData);
    }
    let n = rows[0].len();
    if m > n {
        return Err(Error::RankDeficient {
            condition: f64::INFINITY,
            limit: PINV_CONDITION_LIMIT,
        });
    }
    let a = DMatrix::from_fn(m, n, |i, j| rows[i][j]);
    let svd = a.svd(true, true);
    let sv = &svd.singular_values;
    let (smax, smin) = sv
        .iter()
        .fold((0.0f64, f64::INFINITY), |(hi, lo), &s| (hi.max(s), lo.min(s)));
    let condition = if smin > 0.0 {
        (smax / smin).powi(2)
    } else {
        f64::INFINITY
    };
    if condition > PINV_CONDITION_LIMIT {
        return Err(Error::RankDeficient {
            condition,
            limit: PINV_CONDITION_LIMIT,
        });
    }
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let bv = DVector::from_column_slice(b);
    let coeffs = (u.transpose() * bv).component_div(sv);
    let delta = v_t.transpose() * coeffs;
    let norm = delta.norm();
    Ok((delta.as_slice().to_vec(), norm))
}
