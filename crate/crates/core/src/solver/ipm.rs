//! Mehrotra predictor-corrector interior-point iteration for
//!
//! ```text
//!     minimize    ½ wᵀ P w + qᵀ w
//!     subject to  G w ≤ h
//! ```
//!
//! Equalities are eliminated before this point, so the Newton system is the
//! `k × k` matrix `P + Gᵀ diag(z/s) G`.

use nalgebra::{DMatrix, DVector};

pub(crate) struct InequalityQp<'a> {
    pub p: &'a DMatrix<f64>,
    pub q: &'a DVector<f64>,
    pub g: &'a DMatrix<f64>,
    pub h: &'a DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Outcome {
    Converged,
    Diverged,
    /// Stationarity is unattainable: a descent direction lies in ker P.
    Unbounded,
    Stalled,
    IterationLimit,
}

pub(crate) struct Iterate {
    pub w: DVector<f64>,
    pub outcome: Outcome,
    pub iterations: usize,
}

pub(crate) struct Tolerances {
    pub feasibility: f64,
    pub optimality: f64,
    pub gap: f64,
    pub max_iterations: usize,
}

const STEP_FRACTION: f64 = 0.99;
const DIVERGENCE: f64 = 1e13;
/// Stationarity and complementarity are driven this much below the requested tolerance while
/// progress continues; the iterate meeting the requested tolerance is the fallback.
const POLISH: f64 = 1e-4;

fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    v.iter()
        .zip(dv.iter())
        .filter(|(_, &d)| d < 0.0)
        .map(|(&x, &d)| -x / d)
        .fold(1.0, f64::min)
}

/// Factors a symmetric positive (semi)definite matrix, adding diagonal
/// regularization until Cholesky succeeds.
struct Factor {
    chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    lu: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl Factor {
    fn new(m: DMatrix<f64>) -> Self {
        let scale = m.diagonal().amax().max(1.0);
        let mut reg = 1e-13 * scale;
        for _ in 0..8 {
            let mut shifted = m.clone();
            for i in 0..shifted.nrows() {
                shifted[(i, i)] += reg;
            }
            if let Some(chol) = shifted.cholesky() {
                return Self {
                    chol: Some(chol),
                    lu: None,
                };
            }
            reg *= 100.0;
        }
        Self {
            chol: None,
            lu: Some(m.lu()),
        }
    }

    fn solve(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        match (&self.chol, &self.lu) {
            (Some(c), _) => Some(c.solve(rhs)),
            (None, Some(lu)) => lu.solve(rhs),
            _ => None,
        }
    }
}

pub(crate) fn solve(qp: &InequalityQp<'_>, tol: &Tolerances) -> Iterate {
    let k = qp.q.len();
    let m = qp.h.len();
    let (p, q, g, h) = (qp.p, qp.q, qp.g, qp.h);

    if m == 0 {
        return solve_unconstrained(qp);
    }

    // Initial point from the W = I Newton system, shifted into the interior.
    let gt = g.transpose();
    let mut w = Factor::new(p + &gt * g)
        .solve(&(&gt * h - q))
        .unwrap_or_else(|| DVector::zeros(k));
    let mut s = h - g * &w;
    let mut z = -s.clone();
    let shift_s = -s.min();
    if shift_s >= 0.0 {
        s.add_scalar_mut(1.0 + shift_s);
    }
    let shift_z = -z.min();
    if shift_z >= 0.0 {
        z.add_scalar_mut(1.0 + shift_z);
    }

    let q_norm = q.amax();
    let mut stalled = 0;
    let mut acceptable: Option<(DVector<f64>, usize)> = None;
    let finish = |w: DVector<f64>, outcome: Outcome, iterations: usize, acceptable: Option<(DVector<f64>, usize)>| {
        match acceptable {
            Some((w, iterations)) => Iterate {
                w,
                outcome: Outcome::Converged,
                iterations,
            },
            None => Iterate { w, outcome, iterations },
        }
    };

    for iter in 0..tol.max_iterations {
        let pw = p * &w;
        let gtz = &gt * &z;
        let rd = &pw + q + &gtz;
        let rp = g * &w + &s - h;
        let gap = s.dot(&z);
        let mu = gap / m as f64;
        let objective = 0.5 * w.dot(&pw) + q.dot(&w);

        let dual_scale = 1.0 + q_norm.max(pw.amax()).max(gtz.amax());
        let gap_scale = tol.gap * (1.0 + objective.abs());
        let primal_ok = rp.amax() <= tol.feasibility && gap <= gap_scale;
        if primal_ok && gap <= gap_scale * POLISH && rd.amax() <= tol.optimality * POLISH * dual_scale {
            return Iterate {
                w,
                outcome: Outcome::Converged,
                iterations: iter,
            };
        }
        if primal_ok && rd.amax() <= tol.optimality * dual_scale {
            acceptable = Some((w.clone(), iter));
        }
        if w.amax() > DIVERGENCE || z.amax() > DIVERGENCE {
            return finish(w, Outcome::Diverged, iter, acceptable);
        }

        let weights = z.component_div(&s);
        let mut gw = g.clone();
        for (i, mut row) in gw.row_iter_mut().enumerate() {
            row *= weights[i];
        }
        let factor = Factor::new(p + &gt * &gw);

        // rhs = −rd − Gᵀ W rp + Gᵀ S⁻¹ rc
        let newton = |rc: &DVector<f64>| -> Option<(DVector<f64>, DVector<f64>, DVector<f64>)> {
            let rhs = -&rd - &gt * (weights.component_mul(&rp) - rc.component_div(&s));
            let dw = factor.solve(&rhs)?;
            let dz = weights.component_mul(&(g * &dw + &rp)) - rc.component_div(&s);
            let ds = -(rc + s.component_mul(&dz)).component_div(&z);
            Some((dw, ds, dz))
        };

        let rc_aff = s.component_mul(&z);
        let Some((_, ds_aff, dz_aff)) = newton(&rc_aff) else {
            return finish(w, Outcome::Stalled, iter, acceptable);
        };
        let alpha_aff = max_step(&s, &ds_aff).min(max_step(&z, &dz_aff));
        let mu_aff = (&s + alpha_aff * &ds_aff).dot(&(&z + alpha_aff * &dz_aff)) / m as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        let rc = rc_aff + ds_aff.component_mul(&dz_aff) - DVector::from_element(m, sigma * mu);
        let Some((dw, ds, dz)) = newton(&rc) else {
            return finish(w, Outcome::Stalled, iter, acceptable);
        };
        let alpha = (STEP_FRACTION * max_step(&s, &ds).min(max_step(&z, &dz))).min(1.0);

        w += alpha * dw;
        s += alpha * ds;
        z += alpha * dz;

        if alpha < 1e-10 {
            stalled += 1;
            if stalled >= 5 {
                return finish(w, Outcome::Stalled, iter + 1, acceptable);
            }
        } else {
            stalled = 0;
        }
    }

    finish(w, Outcome::IterationLimit, tol.max_iterations, acceptable)
}

fn solve_unconstrained(qp: &InequalityQp<'_>) -> Iterate {
    let k = qp.q.len();
    if k == 0 {
        return Iterate {
            w: DVector::zeros(0),
            outcome: Outcome::Converged,
            iterations: 0,
        };
    }
    // Least-squares stationarity P w = −q; an inconsistent system means the
    // objective decreases without bound along a kernel direction of P.
    let svd = qp.p.clone().svd(true, true);
    let rhs = -qp.q;
    let eps = 1e-12 * svd.singular_values.max().max(1.0);
    match svd.solve(&rhs, eps) {
        Ok(w) => {
            let residual = (qp.p * &w - &rhs).amax();
            let outcome = if residual <= 1e-9 * (1.0 + qp.q.amax()) {
                Outcome::Converged
            } else {
                Outcome::Unbounded
            };
            Iterate {
                w,
                outcome,
                iterations: 1,
            }
        }
        Err(_) => Iterate {
            w: DVector::zeros(k),
            outcome: Outcome::Stalled,
            iterations: 0,
        },
    }
}
