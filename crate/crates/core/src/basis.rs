//! Monomial bases for low-degree polynomials in d variables, unisolvency
//! checks, and the anchor sets that pin down the kernel's polynomial part.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::DomainBox;
use crate::error::{Error, Result};

/// Exponent vector of one monomial, also used to address partial derivatives.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    exponents: Vec<u32>,
}

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        Self { exponents }
    }

    pub fn dim(&self) -> usize {
        self.exponents.len()
    }

    /// Total order |alpha|.
    pub fn order(&self) -> u32 {
        self.exponents.iter().sum()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exponents
    }
}

impl std::fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, e) in self.exponents.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, ")")
    }
}

/// x^alpha. Dimensions of `alpha` and `x` must agree.
pub fn eval_monomial(alpha: &MultiIndex, x: &[f64]) -> f64 {
    assert_eq!(alpha.dim(), x.len(), "monomial/point dimension mismatch");
    alpha
        .exponents
        .iter()
        .zip(x)
        .map(|(&e, &xi)| xi.powi(e as i32))
        .product()
}

/// D^deriv of x^alpha. Zero when any derivative exponent exceeds the
/// monomial's; otherwise the falling-factorial coefficient times the
/// reduced monomial.
pub fn eval_monomial_deriv(alpha: &MultiIndex, deriv: &MultiIndex, x: &[f64]) -> f64 {
    assert_eq!(alpha.dim(), x.len(), "monomial/point dimension mismatch");
    assert_eq!(alpha.dim(), deriv.dim(), "monomial/derivative dimension mismatch");
    let mut out = 1.0;
    for ((&b, &k), &xi) in alpha.exponents.iter().zip(&deriv.exponents).zip(x) {
        if k > b {
            return 0.0;
        }
        let mut coef = 1.0;
        for j in 0..k {
            coef *= (b - j) as f64;
        }
        out *= coef * xi.powi((b - k) as i32);
    }
    out
}

/// Monomial basis of polynomials of total degree < m in d variables,
/// ordered by grade and then by descending first exponents within a grade.
#[derive(Debug, Clone)]
pub struct PolyBasis {
    m: usize,
    d: usize,
    indices: Vec<MultiIndex>,
}

/// Builds the basis for given smoothness order m and dimension d.
/// Requires 2m > d so the associated kernel machinery is defined.
pub fn monomial_basis(m: usize, d: usize) -> Result<PolyBasis> {
    if m == 0 || d == 0 || 2 * m <= d {
        return Err(Error::OrderTooLow { m, d });
    }
    let mut indices = Vec::new();
    let mut prefix = Vec::with_capacity(d);
    for grade in 0..m as u32 {
        push_grade(&mut prefix, d, grade, &mut indices);
    }
    Ok(PolyBasis { m, d, indices })
}

fn push_grade(prefix: &mut Vec<u32>, axes_left: usize, total: u32, out: &mut Vec<MultiIndex>) {
    if axes_left == 1 {
        prefix.push(total);
        out.push(MultiIndex::new(prefix.clone()));
        prefix.pop();
        return;
    }
    for first in (0..=total).rev() {
        prefix.push(first);
        push_grade(prefix, axes_left - 1, total - first, out);
        prefix.pop();
    }
}

impl PolyBasis {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Number of basis functions M = C(m+d-1, d).
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    /// Row vector [p_1(x), ..., p_M(x)].
    pub fn eval_row(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.indices.iter().map(|a| eval_monomial(a, x)))
    }

    /// Row vector of D^deriv applied to each basis monomial at x.
    pub fn eval_deriv_row(&self, x: &[f64], deriv: &MultiIndex) -> DVector<f64> {
        DVector::from_iterator(
            self.len(),
            self.indices.iter().map(|a| eval_monomial_deriv(a, deriv, x)),
        )
    }
}

/// True when the Vandermonde-type matrix [p_k(x_j)] has full column rank,
/// i.e. the only polynomial of degree < m vanishing on all points is zero.
/// Rank is decided by SVD with relative threshold 1e-10.
pub fn check_unisolvent(points: &[Vec<f64>], m: usize) -> bool {
    if points.is_empty() {
        return false;
    }
    let d = points[0].len();
    if points.iter().any(|p| p.len() != d) {
        return false;
    }
    let basis = match monomial_basis(m, d) {
        Ok(b) => b,
        Err(_) => return false,
    };
    let mm = basis.len();
    if points.len() < mm {
        return false;
    }
    let mat = DMatrix::from_fn(points.len(), mm, |j, k| {
        eval_monomial(&basis.indices[k], &points[j])
    });
    let sv = mat.singular_values();
    let smax = sv.max();
    if !(smax > 0.0) {
        return false;
    }
    let tol = 1e-10 * smax;
    sv.iter().filter(|&&s| s > tol).count() == mm
}

/// M points with the cardinal-polynomial coefficient matrix precomputed:
/// q_i = sum_k cardinal[(k, i)] p_k satisfies q_i(s_j) = delta_ij.
#[derive(Debug, Clone)]
pub struct AnchorSet {
    points: Vec<Vec<f64>>,
    cardinal: DMatrix<f64>,
}

/// Maximum tolerated deviation of q_i(s_j) from the identity pattern.
const CARDINAL_TOL: f64 = 1e-9;

impl AnchorSet {
    /// Builds the cardinal coefficients by inverting [p_k(s_j)]. Fails if the
    /// points are not unisolvent or too ill-conditioned to reproduce the
    /// delta pattern within 1e-9.
    pub fn from_points(points: Vec<Vec<f64>>, basis: &PolyBasis) -> Result<Self> {
        let mm = basis.len();
        if points.len() != mm {
            return Err(Error::InvalidParameter(format!(
                "anchor set must contain exactly {mm} points, got {}",
                points.len()
            )));
        }
        for p in &points {
            if p.len() != basis.dim() {
                return Err(Error::DimensionMismatch {
                    expected: basis.dim(),
                    got: p.len(),
                });
            }
        }
        let a = DMatrix::from_fn(mm, mm, |j, k| eval_monomial(&basis.indices[k], &points[j]));
        let cardinal = a
            .clone()
            .try_inverse()
            .ok_or(Error::NotUnisolvent { degree: basis.m - 1 })?;
        let dev = (&a * &cardinal - DMatrix::<f64>::identity(mm, mm)).abs().max();
        if dev > CARDINAL_TOL {
            return Err(Error::InvalidParameter(format!(
                "anchor set too ill-conditioned: cardinal deviation {dev:.3e} exceeds {CARDINAL_TOL:.0e}"
            )));
        }
        Ok(Self { points, cardinal })
    }

    /// Reassembles a set from stored points and cardinal coefficients,
    /// re-verifying the delta pattern. Used when loading serialized models so
    /// evaluation reproduces the original bit for bit.
    pub fn from_parts(points: Vec<Vec<f64>>, cardinal: DMatrix<f64>, basis: &PolyBasis) -> Result<Self> {
        let mm = basis.len();
        if points.len() != mm || cardinal.nrows() != mm || cardinal.ncols() != mm {
            return Err(Error::ModelParse(format!(
                "anchor block shape mismatch: expected {mm} points with {mm}x{mm} coefficients"
            )));
        }
        let a = DMatrix::from_fn(mm, mm, |j, k| eval_monomial(&basis.indices[k], &points[j]));
        let dev = (&a * &cardinal - DMatrix::<f64>::identity(mm, mm)).abs().max();
        if dev > CARDINAL_TOL {
            return Err(Error::ModelParse(format!(
                "stored anchor coefficients fail the cardinality check (deviation {dev:.3e})"
            )));
        }
        Ok(Self { points, cardinal })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn cardinal(&self) -> &DMatrix<f64> {
        &self.cardinal
    }

    /// Vector [q_1(x), ..., q_M(x)].
    pub fn eval_cardinal(&self, basis: &PolyBasis, x: &[f64]) -> DVector<f64> {
        self.cardinal.tr_mul(&basis.eval_row(x))
    }

    /// Vector of D^deriv q_i at x.
    pub fn eval_cardinal_deriv(&self, basis: &PolyBasis, x: &[f64], deriv: &MultiIndex) -> DVector<f64> {
        self.cardinal.tr_mul(&basis.eval_deriv_row(x, deriv))
    }
}

const ANCHOR_JITTER_ATTEMPTS: usize = 10;
const ANCHOR_JITTER_SCALE: f64 = 1e-3;

/// Picks M anchor points inside the domain box: the first M points of a
/// graded corner/midpoint lattice, jittered deterministically when that
/// configuration is degenerate (lattice slices can be collinear/coplanar).
pub fn choose_anchors(domain: &DomainBox, m: usize) -> Result<AnchorSet> {
    let basis = monomial_basis(m, domain.dim())?;
    let base = lattice_points(domain, basis.len());

    // Attempt 0 is the unjittered lattice; later attempts perturb every
    // coordinate by up to 1e-3 of the axis width, from a fixed seed.
    for attempt in 0..=ANCHOR_JITTER_ATTEMPTS {
        let candidate = if attempt == 0 {
            base.clone()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(attempt as u64);
            base.iter()
                .map(|p| {
                    p.iter()
                        .enumerate()
                        .map(|(j, &c)| {
                            let w = domain.hi()[j] - domain.lo()[j];
                            let u: f64 = rng.random_range(-1.0..1.0);
                            (c + ANCHOR_JITTER_SCALE * w * u).clamp(domain.lo()[j], domain.hi()[j])
                        })
                        .collect()
                })
                .collect()
        };
        if !check_unisolvent(&candidate, m) {
            continue;
        }
        if let Ok(set) = AnchorSet::from_points(candidate, &basis) {
            return Ok(set);
        }
    }
    Err(Error::AnchorSelectionFailed {
        attempts: ANCHOR_JITTER_ATTEMPTS,
    })
}

/// First `count` points of the graded lattice: corners, then each refinement
/// level's new points, lexicographic in the per-axis index tuple.
fn lattice_points(domain: &DomainBox, count: usize) -> Vec<Vec<f64>> {
    let d = domain.dim();
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(count);
    let mut level: u32 = 0;
    while pts.len() < count {
        let steps = 1usize << level; // coordinates k/steps, k = 0..=steps
        let mut idx = vec![0usize; d];
        loop {
            // Points with all indices even were emitted at a coarser level.
            if level == 0 || idx.iter().any(|&k| k % 2 == 1) {
                let p: Vec<f64> = idx
                    .iter()
                    .enumerate()
                    .map(|(j, &k)| {
                        let lo = domain.lo()[j];
                        let hi = domain.hi()[j];
                        lo + (hi - lo) * (k as f64) / (steps as f64)
                    })
                    .collect();
                pts.push(p);
                if pts.len() == count {
                    return pts;
                }
            }
            if !advance_odometer(&mut idx, steps) {
                break;
            }
        }
        level += 1;
    }
    pts
}

/// Advances a lexicographic index tuple with per-axis maximum `max`
/// (inclusive). Returns false once the last tuple has been passed.
fn advance_odometer(idx: &mut [usize], max: usize) -> bool {
    for axis in (0..idx.len()).rev() {
        if idx[axis] < max {
            idx[axis] += 1;
            for v in idx.iter_mut().skip(axis + 1) {
                *v = 0;
            }
            return true;
        }
        idx[axis] = 0;
    }
    false
}
