//! The conditionally positive definite radial kernel and the reproducing
//! kernel built from it by subtracting cardinal-polynomial corrections at a
//! fixed anchor set. All evaluation and derivative formulas live here.

use nalgebra::{DMatrix, DVector};

use crate::basis::{AnchorSet, MultiIndex, PolyBasis};
use crate::error::{Error, Result};

/// Normalizing constant of the radial profile. Sign and magnitude depend on
/// the parity of 2m - d:
///   2m - d even: (-1)^(d/2+1) / (2^(2m-1) pi^(d/2) (m-1)! (m-d/2)!)
///   2m - d odd:  (-1)^m Gamma(d/2 - m) / (2^(2m) pi^(d/2) (m-1)!)
/// Gamma at negative half-integers is expanded exactly:
/// Gamma(1/2 - j) = (-4)^j j! / (2j)! * sqrt(pi).
pub fn theta(m: usize, d: usize) -> Result<f64> {
    if m == 0 || d == 0 || 2 * m <= d {
        return Err(Error::OrderTooLow { m, d });
    }
    let pi = std::f64::consts::PI;
    let p = 2 * m - d;
    if p % 2 == 0 {
        let sign = if (d / 2 + 1) % 2 == 0 { 1.0 } else { -1.0 };
        let denom = 2f64.powi(2 * m as i32 - 1)
            * pi.powf(d as f64 / 2.0)
            * factorial(m - 1)
            * factorial(m - d / 2);
        Ok(sign / denom)
    } else {
        // d odd; Gamma(d/2 - m) = Gamma(1/2 - j) with j = m - (d-1)/2 >= 1.
        let j = m - (d - 1) / 2;
        let gamma_sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        let gamma = gamma_sign * 4f64.powi(j as i32) * factorial(j) / factorial(2 * j) * pi.sqrt();
        let sign_m = if m % 2 == 0 { 1.0 } else { -1.0 };
        Ok(sign_m * gamma / (2f64.powi(2 * m as i32) * pi.powf(d as f64 / 2.0) * factorial(m - 1)))
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Kernel configuration: the radial profile for order m in dimension d plus
/// the anchor set whose cardinal polynomials pin the polynomial part. The
/// anchor Gram block is cached because every kernel evaluation uses it.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    basis: PolyBasis,
    anchors: AnchorSet,
    theta: f64,
    p: i32,
    even: bool,
    sign: f64,
    gram: DMatrix<f64>,
}

impl KernelSpec {
    pub fn new(basis: PolyBasis, anchors: AnchorSet) -> Result<Self> {
        let m = basis.m();
        let d = basis.dim();
        if anchors.len() != basis.len() {
            return Err(Error::InvalidParameter(format!(
                "anchor count {} does not match basis size {}",
                anchors.len(),
                basis.len()
            )));
        }
        let theta = theta(m, d)?;
        let p = (2 * m - d) as i32;
        let even = (2 * m - d) % 2 == 0;
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        let mut spec = Self {
            basis,
            anchors,
            theta,
            p,
            even,
            sign,
            gram: DMatrix::zeros(0, 0),
        };
        let mm = spec.anchors.len();
        let pts = spec.anchors.points();
        spec.gram = DMatrix::from_fn(mm, mm, |j, i| spec.radial(dist(&pts[j], &pts[i])));
        Ok(spec)
    }

    pub fn m(&self) -> usize {
        self.basis.m()
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn basis(&self) -> &PolyBasis {
        &self.basis
    }

    pub fn anchors(&self) -> &AnchorSet {
        &self.anchors
    }

    /// Largest supported derivative order for point evaluations.
    pub fn max_deriv_order(&self) -> usize {
        if self.dim() == 1 {
            2 * self.m() - 2
        } else {
            2
        }
    }

    /// Radial profile K_m at displacement z: theta r^p (odd 2m-d) or
    /// theta r^p ln r (even), with value 0 at r = 0.
    pub fn k_m(&self, z: &[f64]) -> f64 {
        debug_assert_eq!(z.len(), self.dim());
        let r = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.radial(r)
    }

    fn radial(&self, r: f64) -> f64 {
        if r == 0.0 {
            return 0.0;
        }
        if self.even {
            self.theta * r.powi(self.p) * r.ln()
        } else {
            self.theta * r.powi(self.p)
        }
    }

    /// D^alpha of the radial profile at displacement z. For d = 1 any order
    /// up to 2m-2 via the closed form for theta |z|^(2m-1); for d >= 2 orders
    /// 1 and 2 via the radial chain rule. At z = 0 the continuous extension 0
    /// is returned. Callers validate the order.
    pub(crate) fn k_m_deriv(&self, z: &[f64], alpha: &MultiIndex) -> f64 {
        let order = alpha.order();
        if order == 0 {
            return self.k_m(z);
        }
        if self.dim() == 1 {
            // p is odd here, profile theta |z|^p.
            let k = order as i32;
            let mut coef = 1.0;
            for j in 0..k {
                coef *= (self.p - j) as f64;
            }
            let az = z[0].abs();
            if az == 0.0 {
                return 0.0;
            }
            let sgn = if order % 2 == 1 { z[0].signum() } else { 1.0 };
            return self.theta * coef * az.powi(self.p - k) * sgn;
        }
        let r2: f64 = z.iter().map(|v| v * v).sum();
        let r = r2.sqrt();
        if r == 0.0 {
            return 0.0;
        }
        let pf = self.p as f64;
        let (g1, g2) = if self.even {
            let lr = r.ln();
            (
                self.theta * r.powi(self.p - 1) * (pf * lr + 1.0),
                self.theta * r.powi(self.p - 2) * (pf * (pf - 1.0) * lr + 2.0 * pf - 1.0),
            )
        } else {
            (
                self.theta * pf * r.powi(self.p - 1),
                self.theta * pf * (pf - 1.0) * r.powi(self.p - 2),
            )
        };
        match order {
            1 => {
                let a = axis_of(alpha, 0);
                g1 * z[a] / r
            }
            2 => {
                let (a, b) = second_axes(alpha);
                let mut v = (g2 - g1 / r) * z[a] * z[b] / r2;
                if a == b {
                    v += g1 / r;
                }
                v
            }
            _ => unreachable!("orders above 2 are rejected before dispatch"),
        }
    }

    fn q_at(&self, x: &[f64]) -> DVector<f64> {
        self.anchors.eval_cardinal(&self.basis, x)
    }

    /// Reproducing kernel R(s, t): the radial profile corrected so that R
    /// vanishes whenever either argument is an anchor, times (-1)^m.
    pub fn r_kernel(&self, s: &[f64], t: &[f64]) -> f64 {
        assert_eq!(s.len(), self.dim(), "kernel argument dimension mismatch");
        assert_eq!(t.len(), self.dim(), "kernel argument dimension mismatch");
        let qs = self.q_at(s);
        let qt = self.q_at(t);
        let pts = self.anchors.points();
        let mut v = self.radial(dist(s, t));
        for (i, si) in pts.iter().enumerate() {
            v -= qt[i] * self.radial(dist(s, si));
            v -= qs[i] * self.radial(dist(si, t));
        }
        v += (qs.transpose() * &self.gram * &qt)[(0, 0)];
        self.sign * v
    }

    /// D^alpha_s R(s, t), the derivative acting on the first argument.
    pub fn r_kernel_deriv(&self, s: &[f64], t: &[f64], alpha: &MultiIndex) -> Result<f64> {
        if alpha.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: alpha.dim(),
            });
        }
        let order = alpha.order() as usize;
        if order > self.max_deriv_order() {
            return Err(Error::UnsupportedDerivative {
                order,
                m: self.m(),
                d: self.dim(),
            });
        }
        if order == 0 {
            return Ok(self.r_kernel(s, t));
        }
        assert_eq!(s.len(), self.dim(), "kernel argument dimension mismatch");
        assert_eq!(t.len(), self.dim(), "kernel argument dimension mismatch");
        let qt = self.q_at(t);
        let dqs = self.anchors.eval_cardinal_deriv(&self.basis, s, alpha);
        let pts = self.anchors.points();
        let mut z: Vec<f64> = s.iter().zip(t).map(|(&a, &b)| a - b).collect();
        let mut v = self.k_m_deriv(&z, alpha);
        for (i, si) in pts.iter().enumerate() {
            for (j, zj) in z.iter_mut().enumerate() {
                *zj = s[j] - si[j];
            }
            v -= qt[i] * self.k_m_deriv(&z, alpha);
            v -= dqs[i] * self.radial(dist(si, t));
        }
        v += (dqs.transpose() * &self.gram * &qt)[(0, 0)];
        Ok(self.sign * v)
    }

    /// Symmetric matrix [R(x_i, x_j)] assembled with the anchor blocks shared
    /// across all pairs; algebraically identical to pointwise r_kernel but
    /// O(n^2 d + n^2 M) instead of O(n^2 M d).
    pub fn r_matrix(&self, points: &[Vec<f64>]) -> DMatrix<f64> {
        let n = points.len();
        let mm = self.anchors.len();
        let pts = self.anchors.points();
        let mut kxx = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = self.radial(dist(&points[i], &points[j]));
                kxx[(i, j)] = v;
                kxx[(j, i)] = v;
            }
        }
        // e[(i, k)] = K(x_i - s_k); q rows are cardinal values at x_i.
        let e = DMatrix::from_fn(n, mm, |i, k| self.radial(dist(&points[i], &pts[k])));
        let mut q = DMatrix::zeros(n, mm);
        for i in 0..n {
            q.row_mut(i).tr_copy_from(&self.q_at(&points[i]));
        }
        let eqt = &e * q.transpose();
        let qgq = &q * &self.gram * q.transpose();
        let raw = kxx - &eqt - eqt.transpose() + qgq;
        let sym = (&raw + raw.transpose()) * (0.5 * self.sign);
        sym
    }

    /// Row [R(x, t_1), ..., R(x, t_n)] for evaluation at a single point.
    pub fn r_row(&self, x: &[f64], knots: &[Vec<f64>]) -> DVector<f64> {
        let qx = self.q_at(x);
        let pts = self.anchors.points();
        let ex = DVector::from_fn(pts.len(), |k, _| self.radial(dist(x, &pts[k])));
        let w = &self.gram * &qx;
        DVector::from_fn(knots.len(), |j, _| {
            let t = &knots[j];
            let qt = self.q_at(t);
            let mut v = self.radial(dist(x, t));
            for (k, sk) in pts.iter().enumerate() {
                v -= qt[k] * (ex[k] - w[k]);
                v -= qx[k] * self.radial(dist(sk, t));
            }
            self.sign * v
        })
    }

    /// Row [D^alpha_x R(x, t_1), ..., D^alpha_x R(x, t_n)].
    pub fn r_deriv_row(&self, x: &[f64], knots: &[Vec<f64>], alpha: &MultiIndex) -> Result<DVector<f64>> {
        if alpha.order() == 0 {
            return Ok(self.r_row(x, knots));
        }
        let order = alpha.order() as usize;
        if alpha.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: alpha.dim(),
            });
        }
        if order > self.max_deriv_order() {
            return Err(Error::UnsupportedDerivative {
                order,
                m: self.m(),
                d: self.dim(),
            });
        }
        let dqx = self.anchors.eval_cardinal_deriv(&self.basis, x, alpha);
        let pts = self.anchors.points();
        let w = &self.gram * &dqx;
        let mut z = vec![0.0; self.dim()];
        let mut exd = DVector::zeros(pts.len());
        for (k, sk) in pts.iter().enumerate() {
            for (j, zj) in z.iter_mut().enumerate() {
                *zj = x[j] - sk[j];
            }
            exd[k] = self.k_m_deriv(&z, alpha);
        }
        let mut out = DVector::zeros(knots.len());
        for (jj, t) in knots.iter().enumerate() {
            let qt = self.q_at(t);
            for (j, zj) in z.iter_mut().enumerate() {
                *zj = x[j] - t[j];
            }
            let mut v = self.k_m_deriv(&z, alpha);
            for (k, sk) in pts.iter().enumerate() {
                v -= qt[k] * exd[k];
                v -= dqx[k] * self.radial(dist(sk, t));
            }
            v += w.dot(&qt);
            out[jj] = self.sign * v;
        }
        Ok(out)
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn axis_of(alpha: &MultiIndex, nth: usize) -> usize {
    alpha
        .exponents()
        .iter()
        .enumerate()
        .filter(|(_, &e)| e > 0)
        .map(|(i, _)| i)
        .nth(nth)
        .expect("multi-index has no active axis")
}

/// Axes (a, b) of a second-order multi-index: (a, a) for exponent 2 on one
/// axis, otherwise the two axes with exponent 1.
fn second_axes(alpha: &MultiIndex) -> (usize, usize) {
    let mut axes = Vec::with_capacity(2);
    for (i, &e) in alpha.exponents().iter().enumerate() {
        for _ in 0..e {
            axes.push(i);
        }
    }
    (axes[0], axes[1])
}
