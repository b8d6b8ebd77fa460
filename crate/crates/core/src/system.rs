//! Assembly of the kernel/polynomial design blocks and the bordered solve
//! that produces spline coefficients for a given smoothing weight.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;

/// Kernel block R[(i,j)] = R(x_i, x_j) (symmetrized) and polynomial block
/// P[(i,k)] = p_k(x_i) for one set of design points.
#[derive(Debug, Clone)]
pub struct DesignMatrices {
    rmat: DMatrix<f64>,
    pmat: DMatrix<f64>,
}

impl DesignMatrices {
    pub fn rmat(&self) -> &DMatrix<f64> {
        &self.rmat
    }

    pub fn pmat(&self) -> &DMatrix<f64> {
        &self.pmat
    }

    pub fn n(&self) -> usize {
        self.rmat.nrows()
    }

    pub fn poly_count(&self) -> usize {
        self.pmat.ncols()
    }
}

/// Builds both blocks. Points must be mutually distinct, dimensioned like
/// the kernel, and at least as many as there are polynomial basis functions.
pub fn assemble(points: &[Vec<f64>], spec: &KernelSpec) -> Result<DesignMatrices> {
    let n = points.len();
    let mm = spec.basis().len();
    if n < mm {
        return Err(Error::InvalidParameter(format!(
            "need at least {mm} design points for order m={}, got {n}",
            spec.m()
        )));
    }
    for p in points {
        if p.len() != spec.dim() {
            return Err(Error::DimensionMismatch {
                expected: spec.dim(),
                got: p.len(),
            });
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if points[i] == points[j] {
                return Err(Error::DuplicatePoints { i, j });
            }
        }
    }
    let rmat = spec.r_matrix(points);
    let pmat = DMatrix::from_fn(n, mm, |i, k| {
        crate::basis::eval_monomial(&spec.basis().indices()[k], &points[i])
    });
    Ok(DesignMatrices { rmat, pmat })
}

/// Output of one penalized solve: coefficients, fitted values, and the two
/// quadratic functionals the budget searches monitor.
#[derive(Debug, Clone)]
pub struct PenalizedSolution {
    /// Polynomial coefficients c (length M).
    pub poly: DVector<f64>,
    /// Kernel coefficients d (length n), orthogonal to the polynomial block.
    pub kernel: DVector<f64>,
    /// Fitted values P c + R d at the design points.
    pub fitted: DVector<f64>,
    /// Roughness d' R d, clamped to zero when within 1e-8 below it.
    pub j_value: f64,
    /// Mean squared residual over the design points.
    pub en_value: f64,
    /// True when the first factorization was rejected and a small diagonal
    /// ridge recovered the solve.
    pub ridge_fallback: bool,
}

/// Relative residual accepted from the bordered solve.
const SOLVE_RESIDUAL_TOL: f64 = 1e-8;
/// Ridge added to the scaled kernel block on fallback. The scaled block has
/// unit mean eigenvalue, so this is relative to trace(R)/n.
const RIDGE_SCALE: f64 = 1e-10;
/// Negative roughness values within this margin are clamped to zero.
const J_CLAMP: f64 = 1e-8;

/// Solves the stationarity system of
///   min (1/n) |Y - P c - R d|^2 + lambda d' R d
/// via the symmetric bordered form
///   [ R + n*lambda*I   P ] [d]   [Y]
///   [ P'               0 ] [c] = [0].
/// lambda = 0 yields the interpolant (requires a unisolvent design, which the
/// caller checks; a singular factorization surfaces as an error here).
///
/// The factorization runs on a rescaled but algebraically identical system:
/// the kernel block is divided by its mean eigenvalue tau = trace(R)/n and
/// each polynomial column by its largest entry, with the unknowns absorbing
/// the factors (d by tau, each c_k by its column scale). The raw blocks can
/// differ by many orders of magnitude (the kernel carries a small theta
/// constant and a high power of the domain width), and that imbalance alone
/// costs the factorization most of its digits at small weights.
pub fn solve_penalized(dm: &DesignMatrices, y: &[f64], lambda: f64) -> Result<PenalizedSolution> {
    let n = dm.n();
    let mm = dm.poly_count();
    if y.len() != n {
        return Err(Error::InvalidParameter(format!(
            "response length {} does not match {} design points",
            y.len(),
            n
        )));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "smoothing weight must be finite and nonnegative, got {lambda}"
        )));
    }
    let nl = n as f64 * lambda;
    let yv = DVector::from_column_slice(y);
    let ynorm = yv.norm();

    let tau = {
        let t = dm.rmat().trace() / n as f64;
        if t.is_finite() && t > 0.0 {
            t
        } else {
            1.0
        }
    };
    let col_scale: Vec<f64> = (0..mm)
        .map(|k| {
            let s = dm.pmat().column(k).amax();
            if s.is_finite() && s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();

    let build = |ridge: f64| -> DMatrix<f64> {
        let mut a = DMatrix::zeros(n + mm, n + mm);
        a.view_mut((0, 0), (n, n)).copy_from(&(dm.rmat() / tau));
        for i in 0..n {
            a[(i, i)] += nl / tau + ridge;
        }
        for k in 0..mm {
            for i in 0..n {
                let v = dm.pmat()[(i, k)] / col_scale[k];
                a[(i, n + k)] = v;
                a[(n + k, i)] = v;
            }
        }
        a
    };
    let mut b = DVector::zeros(n + mm);
    b.rows_mut(0, n).copy_from(&yv);

    let residual_of = |a: &DMatrix<f64>, v: &DVector<f64>| -> f64 { (a * v - &b).norm() };
    let tol = SOLVE_RESIDUAL_TOL * ynorm;

    let mut ridge_fallback = false;
    let a0 = build(0.0);
    let mut solution = a0.clone().full_piv_lu().solve(&b).filter(|v| residual_of(&a0, v) <= tol);
    if solution.is_none() {
        ridge_fallback = true;
        let a1 = build(RIDGE_SCALE);
        let res1 = a1.clone().full_piv_lu().solve(&b);
        match res1 {
            Some(v) => {
                let r = residual_of(&a1, &v);
                if r > tol {
                    return Err(Error::SingularSystem {
                        residual: if ynorm > 0.0 { r / ynorm } else { r },
                    });
                }
                solution = Some(v);
            }
            None => {
                return Err(Error::SingularSystem { residual: f64::INFINITY });
            }
        }
    }
    let v = solution.expect("solution present after fallback handling");
    let kernel = DVector::from(v.rows(0, n) / tau);
    let poly = DVector::from_fn(mm, |k, _| v[n + k] / col_scale[k]);
    let fitted = dm.pmat() * &poly + dm.rmat() * &kernel;
    let j_raw = (kernel.transpose() * dm.rmat() * &kernel)[(0, 0)];
    let j_value = if j_raw < 0.0 && j_raw > -J_CLAMP { 0.0 } else { j_raw };
    let en_value = (&yv - &fitted).norm_squared() / n as f64;
    Ok(PenalizedSolution {
        poly,
        kernel,
        fitted,
        j_value,
        en_value,
        ridge_fallback,
    })
}
