//! Dense convex QP/LP solver.
//!
//! Problems have the form
//!
//! ```text
//!     minimize    ½ xᵀ H x + cᵀ x
//!     subject to  A x = b
//!                 G x ≤ h
//!                 l ≤ x ≤ u
//! ```
//!
//! with `H` symmetric positive semidefinite. Equalities are eliminated with a
//! pivoted QR nullspace basis, bounds are folded into `G`, and the reduced
//! problem is solved with a primal-dual interior-point method. When the main
//! iteration fails to converge, a phase-1 problem decides between
//! `Infeasible`, `Unbounded` and `NumericalFailure`.

mod ipm;
mod nullspace;
mod polygon;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use polygon::{polygon_vertices, polygonize_disk, HalfPlane};

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("invalid problem: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("objective matrix is not symmetric positive semidefinite ({0})")]
    NotConvex(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    /// Relative complementarity gap at termination.
    pub gap_tol: f64,
    pub max_iterations: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-8,
            optimality_tol: 1e-6,
            gap_tol: 1e-10,
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

impl SolveStatus {
    pub fn is_optimal(self) -> bool {
        self == SolveStatus::Optimal
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::NumericalFailure => "numerical_failure",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub x: DVector<f64>,
    pub objective_value: f64,
    pub max_primal_residual: f64,
    pub iterations: usize,
    /// Optimal value of the phase-1 problem, when it was run.
    pub phase1_objective: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct QuadraticProgram {
    n_vars: usize,
    objective_quadratic: DMatrix<f64>,
    objective_linear: DVector<f64>,
    eq_matrix: DMatrix<f64>,
    eq_rhs: DVector<f64>,
    ineq_matrix: DMatrix<f64>,
    ineq_rhs: DVector<f64>,
    var_lower: DVector<f64>,
    var_upper: DVector<f64>,
}

const PSD_TOL: f64 = 1e-9;

impl QuadraticProgram {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        objective_quadratic: DMatrix<f64>,
        objective_linear: DVector<f64>,
        eq_matrix: DMatrix<f64>,
        eq_rhs: DVector<f64>,
        ineq_matrix: DMatrix<f64>,
        ineq_rhs: DVector<f64>,
        var_lower: DVector<f64>,
        var_upper: DVector<f64>,
    ) -> Result<Self, SolverError> {
        let n = objective_linear.len();
        let check = |what: &str, ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(SolverError::Dimension(format!(
                    "{what} inconsistent with {n} variables"
                )))
            }
        };
        check("objective_quadratic", objective_quadratic.shape() == (n, n))?;
        check("eq_matrix", eq_matrix.ncols() == n && eq_matrix.nrows() == eq_rhs.len())?;
        check(
            "ineq_matrix",
            ineq_matrix.ncols() == n && ineq_matrix.nrows() == ineq_rhs.len(),
        )?;
        check("bounds", var_lower.len() == n && var_upper.len() == n)?;

        let finite = objective_quadratic.iter().all(|v| v.is_finite())
            && objective_linear.iter().all(|v| v.is_finite())
            && eq_matrix.iter().chain(eq_rhs.iter()).all(|v| v.is_finite())
            && ineq_matrix.iter().chain(ineq_rhs.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(SolverError::InvalidInput("non-finite problem data".into()));
        }
        if var_lower.iter().chain(var_upper.iter()).any(|v| v.is_nan()) {
            return Err(SolverError::InvalidInput("NaN variable bound".into()));
        }

        check_psd(&objective_quadratic)?;

        Ok(Self {
            n_vars: n,
            objective_quadratic,
            objective_linear,
            eq_matrix,
            eq_rhs,
            ineq_matrix,
            ineq_rhs,
            var_lower,
            var_upper,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn objective_quadratic(&self) -> &DMatrix<f64> {
        &self.objective_quadratic
    }

    pub fn objective_linear(&self) -> &DVector<f64> {
        &self.objective_linear
    }

    pub fn eq_matrix(&self) -> &DMatrix<f64> {
        &self.eq_matrix
    }

    pub fn eq_rhs(&self) -> &DVector<f64> {
        &self.eq_rhs
    }

    pub fn ineq_matrix(&self) -> &DMatrix<f64> {
        &self.ineq_matrix
    }

    pub fn ineq_rhs(&self) -> &DVector<f64> {
        &self.ineq_rhs
    }

    pub fn var_lower(&self) -> &DVector<f64> {
        &self.var_lower
    }

    pub fn var_upper(&self) -> &DVector<f64> {
        &self.var_upper
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.objective_quadratic * x)) + self.objective_linear.dot(x)
    }

    /// Largest violation of any equality, inequality or bound at `x`.
    pub fn max_primal_residual(&self, x: &DVector<f64>) -> f64 {
        let eq = if self.eq_rhs.is_empty() {
            0.0
        } else {
            (&self.eq_matrix * x - &self.eq_rhs).amax()
        };
        let ineq = if self.ineq_rhs.is_empty() {
            0.0
        } else {
            (&self.ineq_matrix * x - &self.ineq_rhs).max().max(0.0)
        };
        let bounds = x
            .iter()
            .zip(self.var_lower.iter().zip(self.var_upper.iter()))
            .map(|(&xi, (&lo, &hi))| (lo - xi).max(xi - hi).max(0.0))
            .fold(0.0, f64::max);
        eq.max(ineq).max(bounds)
    }
}

fn check_psd(h: &DMatrix<f64>) -> Result<(), SolverError> {
    let n = h.nrows();
    if n == 0 {
        return Ok(());
    }
    let scale = h.amax().max(1.0);
    let asym = (h - h.transpose()).amax();
    if asym > PSD_TOL * scale {
        return Err(SolverError::NotConvex(format!("asymmetry {asym:.3e}")));
    }
    if h.iter().all(|&v| v == 0.0) {
        return Ok(());
    }
    let mut shifted = h.clone();
    for i in 0..n {
        shifted[(i, i)] += PSD_TOL * scale;
    }
    if shifted.cholesky().is_none() {
        return Err(SolverError::NotConvex("negative curvature".into()));
    }
    Ok(())
}

/// Row-oriented assembly helper for [`QuadraticProgram`].
#[derive(Debug, Clone)]
pub struct QpBuilder {
    n: usize,
    quadratic: DMatrix<f64>,
    linear: DVector<f64>,
    eq_rows: Vec<(Vec<(usize, f64)>, f64)>,
    ineq_rows: Vec<(Vec<(usize, f64)>, f64)>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl QpBuilder {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            quadratic: DMatrix::zeros(n, n),
            linear: DVector::zeros(n),
            eq_rows: Vec::new(),
            ineq_rows: Vec::new(),
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n
    }

    pub fn n_eq(&self) -> usize {
        self.eq_rows.len()
    }

    pub fn n_ineq(&self) -> usize {
        self.ineq_rows.len()
    }

    pub fn eq_rows(&self) -> &[(Vec<(usize, f64)>, f64)] {
        &self.eq_rows
    }

    pub fn ineq_rows(&self) -> &[(Vec<(usize, f64)>, f64)] {
        &self.ineq_rows
    }

    pub fn bounds(&self, var: usize) -> (f64, f64) {
        (self.lower[var], self.upper[var])
    }

    /// Adds `value` to `H[i][j]` and `H[j][i]` (once on the diagonal).
    pub fn add_quadratic(&mut self, i: usize, j: usize, value: f64) -> &mut Self {
        self.quadratic[(i, j)] += value;
        if i != j {
            self.quadratic[(j, i)] += value;
        }
        self
    }

    pub fn add_linear(&mut self, i: usize, value: f64) -> &mut Self {
        self.linear[i] += value;
        self
    }

    pub fn add_eq(&mut self, terms: Vec<(usize, f64)>, rhs: f64) -> &mut Self {
        self.eq_rows.push((terms, rhs));
        self
    }

    pub fn add_le(&mut self, terms: Vec<(usize, f64)>, rhs: f64) -> &mut Self {
        self.ineq_rows.push((terms, rhs));
        self
    }

    pub fn add_ge(&mut self, terms: Vec<(usize, f64)>, rhs: f64) -> &mut Self {
        let negated = terms.into_iter().map(|(i, v)| (i, -v)).collect();
        self.ineq_rows.push((negated, -rhs));
        self
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) -> &mut Self {
        self.lower[var] = lower;
        self.upper[var] = upper;
        self
    }

    pub fn set_lower(&mut self, var: usize, lower: f64) -> &mut Self {
        self.lower[var] = lower;
        self
    }

    pub fn set_upper(&mut self, var: usize, upper: f64) -> &mut Self {
        self.upper[var] = upper;
        self
    }

    pub fn build(&self) -> Result<QuadraticProgram, SolverError> {
        let dense = |rows: &[(Vec<(usize, f64)>, f64)]| -> Result<(DMatrix<f64>, DVector<f64>), SolverError> {
            let mut m = DMatrix::zeros(rows.len(), self.n);
            let mut rhs = DVector::zeros(rows.len());
            for (r, (terms, b)) in rows.iter().enumerate() {
                for &(j, v) in terms {
                    if j >= self.n {
                        return Err(SolverError::Dimension(format!(
                            "row {r} references variable {j} of {}",
                            self.n
                        )));
                    }
                    m[(r, j)] += v;
                }
                rhs[r] = *b;
            }
            Ok((m, rhs))
        };
        let (a, b) = dense(&self.eq_rows)?;
        let (g, h) = dense(&self.ineq_rows)?;
        QuadraticProgram::new(
            self.quadratic.clone(),
            self.linear.clone(),
            a,
            b,
            g,
            h,
            DVector::from_vec(self.lower.clone()),
            DVector::from_vec(self.upper.clone()),
        )
    }
}

/// Inequality rows of the reduced problem in `w`, scaled to unit ∞-norm.
struct ReducedRows {
    g: DMatrix<f64>,
    h: DVector<f64>,
    /// A zero row with a negative right-hand side was found.
    trivially_infeasible: f64,
}

fn reduce_rows(
    g_full: &DMatrix<f64>,
    h_full: &DVector<f64>,
    basis: &DMatrix<f64>,
    particular: &DVector<f64>,
    original_norms: &[f64],
    feas_tol: f64,
) -> ReducedRows {
    let g_red = g_full * basis;
    let h_red = h_full - g_full * particular;
    let mut keep = Vec::new();
    let mut violation: f64 = 0.0;
    for i in 0..g_red.nrows() {
        let norm = g_red.row(i).amax();
        if norm <= 1e-11 * original_norms[i].max(1.0) {
            if h_red[i] < -feas_tol {
                violation = violation.max(-h_red[i]);
            }
            continue;
        }
        keep.push((i, norm));
    }
    let k = basis.ncols();
    let mut g = DMatrix::zeros(keep.len(), k);
    let mut h = DVector::zeros(keep.len());
    for (r, &(i, norm)) in keep.iter().enumerate() {
        g.row_mut(r).copy_from(&(g_red.row(i) / norm));
        h[r] = h_red[i] / norm;
    }
    ReducedRows {
        g,
        h,
        trivially_infeasible: violation,
    }
}

fn is_fixed(lower: f64, upper: f64) -> bool {
    lower.is_finite() && upper.is_finite() && (upper - lower).abs() <= 1e-12 * (1.0 + lower.abs())
}

/// Solves a convex QP. Never panics on well-formed input; failures are
/// reported through [`SolveResult::status`].
pub fn solve(problem: &QuadraticProgram, settings: &SolverSettings) -> SolveResult {
    let n = problem.n_vars;
    let fail = |status: SolveStatus, x: DVector<f64>, iterations: usize, phase1: Option<f64>| {
        let objective_value = problem.objective(&x);
        let max_primal_residual = problem.max_primal_residual(&x);
        SolveResult {
            status,
            x,
            objective_value,
            max_primal_residual,
            iterations,
            phase1_objective: phase1,
        }
    };

    // Crossed bounds need no iteration.
    if let Some(gap) = (0..n)
        .map(|i| problem.var_lower[i] - problem.var_upper[i])
        .filter(|&d| d > settings.feasibility_tol)
        .reduce(f64::max)
    {
        return fail(SolveStatus::Infeasible, DVector::zeros(n), 0, Some(gap / 2.0));
    }

    // Variables pinned by their bounds become equalities; an interior-point
    // method cannot work with a zero-width box.
    let fixed: Vec<usize> = (0..n)
        .filter(|&i| is_fixed(problem.var_lower[i], problem.var_upper[i]))
        .collect();
    let elim = if fixed.is_empty() {
        nullspace::eliminate(&problem.eq_matrix, &problem.eq_rhs)
    } else {
        let me = problem.eq_matrix.nrows();
        let mut a = DMatrix::zeros(me + fixed.len(), n);
        a.rows_mut(0, me).copy_from(&problem.eq_matrix);
        let mut b = DVector::zeros(me + fixed.len());
        b.rows_mut(0, me).copy_from(&problem.eq_rhs);
        for (r, &i) in fixed.iter().enumerate() {
            a[(me + r, i)] = 1.0;
            b[me + r] = 0.5 * (problem.var_lower[i] + problem.var_upper[i]);
        }
        nullspace::eliminate(&a, &b)
    };
    log::trace!(
        "equality rank {} of {} rows",
        elim.rank,
        problem.eq_matrix.nrows() + fixed.len()
    );
    if elim.residual > settings.feasibility_tol {
        return fail(SolveStatus::Infeasible, elim.particular, 0, Some(elim.residual));
    }

    // Fold finite bounds into G x ≤ h.
    let mut rows: Vec<DVector<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    for i in 0..problem.ineq_matrix.nrows() {
        rows.push(problem.ineq_matrix.row(i).transpose());
        rhs.push(problem.ineq_rhs[i]);
    }
    for i in 0..n {
        if fixed.contains(&i) {
            continue;
        }
        let mut e = DVector::zeros(n);
        if problem.var_upper[i].is_finite() {
            e[i] = 1.0;
            rows.push(e.clone());
            rhs.push(problem.var_upper[i]);
        }
        if problem.var_lower[i].is_finite() {
            e[i] = -1.0;
            rows.push(e);
            rhs.push(-problem.var_lower[i]);
        }
    }
    let g_full = DMatrix::from_fn(rows.len(), n, |r, c| rows[r][c]);
    let h_full = DVector::from_vec(rhs);
    let norms: Vec<f64> = rows.iter().map(|r| r.amax()).collect();
    let reduced = reduce_rows(
        &g_full,
        &h_full,
        &elim.basis,
        &elim.particular,
        &norms,
        settings.feasibility_tol,
    );
    if reduced.trivially_infeasible > 0.0 {
        return fail(
            SolveStatus::Infeasible,
            elim.particular,
            0,
            Some(reduced.trivially_infeasible),
        );
    }

    let basis = &elim.basis;
    let x0 = &elim.particular;
    let p = basis.transpose() * &problem.objective_quadratic * basis;
    let p = (&p + p.transpose()) * 0.5;
    let q = basis.transpose() * (&problem.objective_quadratic * x0 + &problem.objective_linear);

    let tol = ipm::Tolerances {
        feasibility: settings.feasibility_tol * 0.1,
        optimality: settings.optimality_tol,
        gap: settings.gap_tol,
        max_iterations: settings.max_iterations,
    };
    let main = ipm::solve(
        &ipm::InequalityQp {
            p: &p,
            q: &q,
            g: &reduced.g,
            h: &reduced.h,
        },
        &tol,
    );
    let x = x0 + basis * &main.w;

    if main.outcome == ipm::Outcome::Converged {
        let residual = problem.max_primal_residual(&x);
        if residual <= settings.feasibility_tol {
            return fail(SolveStatus::Optimal, x, main.iterations, None);
        }
    }

    // Phase 1: minimize t subject to G w − t ≤ h, t ≥ −1, with a tiny proximal
    // term on w so the problem is bounded and strictly convex.
    let k = basis.ncols();
    let m = reduced.h.len();
    let mut p1 = DMatrix::zeros(k + 1, k + 1);
    for i in 0..k {
        p1[(i, i)] = 1e-10;
    }
    let mut q1 = DVector::zeros(k + 1);
    q1[k] = 1.0;
    let mut g1 = DMatrix::zeros(m + 1, k + 1);
    g1.view_mut((0, 0), (m, k)).copy_from(&reduced.g);
    for i in 0..m {
        g1[(i, k)] = -1.0;
    }
    g1[(m, k)] = -1.0;
    let mut h1 = DVector::zeros(m + 1);
    h1.rows_mut(0, m).copy_from(&reduced.h);
    h1[m] = 1.0;
    let phase1 = ipm::solve(
        &ipm::InequalityQp {
            p: &p1,
            q: &q1,
            g: &g1,
            h: &h1,
        },
        &tol,
    );
    let t_star = phase1.w[k];
    let iterations = main.iterations + phase1.iterations;

    if t_star > settings.feasibility_tol {
        let x1 = x0 + basis * phase1.w.rows(0, k);
        return fail(SolveStatus::Infeasible, x1, iterations, Some(t_star));
    }
    let diverged = main.outcome == ipm::Outcome::Diverged && main.w.amax() > 1e12;
    let status = if diverged || main.outcome == ipm::Outcome::Unbounded {
        SolveStatus::Unbounded
    } else {
        SolveStatus::NumericalFailure
    };
    fail(status, x, iterations, Some(t_star))
}
