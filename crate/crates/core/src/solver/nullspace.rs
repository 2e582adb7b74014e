//! Equality-constraint elimination via Householder QR with column pivoting.
//!
//! For `A x = b` with `A` of size `p × n`, factor `Aᵀ Π = Q R`. Every solution
//! is `x = x₀ + N w` where the columns of `N` are the trailing `n − rank`
//! columns of `Q`, an orthonormal basis of `ker A`.

use nalgebra::{DMatrix, DVector};

pub(crate) struct Elimination {
    pub particular: DVector<f64>,
    pub basis: DMatrix<f64>,
    pub rank: usize,
    /// `‖A x₀ − b‖∞`; nonzero means the equalities are inconsistent.
    pub residual: f64,
}

struct PivotedQr {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    perm: Vec<usize>,
    rank: usize,
}

fn qr_column_pivoted(mut a: DMatrix<f64>, rel_tol: f64) -> PivotedQr {
    let (rows, cols) = a.shape();
    let steps = rows.min(cols);
    let mut perm: Vec<usize> = (0..cols).collect();
    let mut norms: Vec<f64> = (0..cols).map(|j| a.column(j).norm_squared()).collect();
    let mut reflectors: Vec<DVector<f64>> = Vec::with_capacity(steps);
    let mut rank = 0;
    let mut lead = 0.0;

    for k in 0..steps {
        // Recompute the remaining column norms exactly; the matrices here are small.
        for (j, norm) in norms.iter_mut().enumerate().skip(k) {
            *norm = a.view((k, j), (rows - k, 1)).norm_squared();
        }
        let (best, best_norm) = norms
            .iter()
            .enumerate()
            .skip(k)
            .fold((k, -1.0), |acc, (j, &v)| if v > acc.1 { (j, v) } else { acc });
        let col_norm = best_norm.max(0.0).sqrt();
        if k == 0 {
            lead = col_norm;
        }
        if col_norm <= rel_tol * lead.max(f64::MIN_POSITIVE) || col_norm == 0.0 {
            break;
        }
        if best != k {
            a.swap_columns(k, best);
            perm.swap(k, best);
            norms.swap(k, best);
        }

        let mut v: DVector<f64> = a.column(k).rows(k, rows - k).into_owned();
        let alpha = if v[0] >= 0.0 { -col_norm } else { col_norm };
        v[0] -= alpha;
        let vnorm = v.norm();
        if vnorm > 0.0 {
            v /= vnorm;
            for j in k..cols {
                let mut col = a.column_mut(j);
                let mut tail = col.rows_mut(k, rows - k);
                let proj = 2.0 * v.dot(&tail);
                tail.axpy(-proj, &v, 1.0);
            }
        }
        reflectors.push(v);
        rank += 1;
    }

    // Accumulate the full orthogonal factor: Q = H₀ H₁ ⋯ applied to I.
    let mut q = DMatrix::<f64>::identity(rows, rows);
    for (k, v) in reflectors.iter().enumerate().rev() {
        for j in 0..rows {
            let mut col = q.column_mut(j);
            let mut tail = col.rows_mut(k, rows - k);
            let proj = 2.0 * v.dot(&tail);
            tail.axpy(-proj, v, 1.0);
        }
    }
    PivotedQr { q, r: a, perm, rank }
}

/// Parametrizes the affine solution set of `a x = b`.
pub(crate) fn eliminate(a: &DMatrix<f64>, b: &DVector<f64>) -> Elimination {
    let n = a.ncols();
    let p = a.nrows();
    if p == 0 {
        return Elimination {
            particular: DVector::zeros(n),
            basis: DMatrix::identity(n, n),
            rank: 0,
            residual: 0.0,
        };
    }

    let qr = qr_column_pivoted(a.transpose(), 1e-11);
    let rank = qr.rank;

    // Forward substitution on the leading rank×rank block of Rᵀ.
    let mut y = DVector::<f64>::zeros(n);
    for j in 0..rank {
        let mut acc = b[qr.perm[j]];
        for i in 0..j {
            acc -= qr.r[(i, j)] * y[i];
        }
        y[j] = acc / qr.r[(j, j)];
    }
    let particular = qr.q.columns(0, rank) * y.rows(0, rank);
    let basis = qr.q.columns(rank, n - rank).into_owned();
    let residual = (a * &particular - b).amax();

    Elimination {
        particular,
        basis,
        rank,
        residual,
    }
}
