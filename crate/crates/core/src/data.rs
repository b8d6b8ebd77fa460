//! Domain boxes, observation sets, and the fitting configuration that ties a
//! smoothness order to a domain.

use crate::basis::{choose_anchors, monomial_basis, AnchorSet};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;

/// Axis-aligned box [lo_1, hi_1] x ... x [lo_d, hi_d] with positive widths.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl DomainBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::InvalidParameter(format!(
                "domain bounds must be nonempty and of equal length, got {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        for (j, (&a, &b)) in lo.iter().zip(&hi).enumerate() {
            if !(a < b) || !a.is_finite() || !b.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "domain axis {j} must satisfy lo < hi with finite bounds, got [{a}, {b}]"
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    /// Smallest box containing all points, inflated by `margin` times the
    /// width on each axis (degenerate widths get a unit margin).
    pub fn bounding(points: &[Vec<f64>], margin: f64) -> Result<Self> {
        let d = points.first().map(|p| p.len()).unwrap_or(0);
        if d == 0 {
            return Err(Error::InvalidParameter(
                "cannot infer a domain from an empty point set".into(),
            ));
        }
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for p in points {
            if p.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: p.len() });
            }
            for j in 0..d {
                lo[j] = lo[j].min(p[j]);
                hi[j] = hi[j].max(p[j]);
            }
        }
        for j in 0..d {
            let w = hi[j] - lo[j];
            let pad = if w > 0.0 { margin * w } else { margin.max(0.5) };
            lo[j] -= pad;
            hi[j] += pad;
        }
        Self::new(lo, hi)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&v, (&a, &b))| v >= a && v <= b)
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(&a, &b)| b - a).collect()
    }
}

/// Design points with one response value each.
#[derive(Debug, Clone)]
pub struct Dataset {
    points: Vec<Vec<f64>>,
    y: Vec<f64>,
}

impl Dataset {
    pub fn new(points: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter("dataset must contain at least one point".into()));
        }
        if points.len() != y.len() {
            return Err(Error::InvalidParameter(format!(
                "got {} design points but {} responses",
                points.len(),
                y.len()
            )));
        }
        let d = points[0].len();
        if d == 0 {
            return Err(Error::InvalidParameter("design points must have at least one coordinate".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: p.len() });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!("design point {i} has a non-finite coordinate")));
            }
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("response {i} is not finite")));
        }
        Ok(Self { points, y })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Dataset with observation `k` removed. Panics if only one point remains
    /// or `k` is out of range; callers guard.
    pub fn without(&self, k: usize) -> Dataset {
        assert!(k < self.len() && self.len() > 1);
        let mut points = self.points.clone();
        let mut y = self.y.clone();
        points.remove(k);
        y.remove(k);
        Dataset { points, y }
    }
}

/// Fitting configuration: smoothness order, domain, and the kernel built on
/// anchors inside that domain. Construction fixes everything the fit needs
/// besides the data and the smoothing budget.
#[derive(Debug, Clone)]
pub struct SplineSetup {
    domain: DomainBox,
    spec: KernelSpec,
}

impl SplineSetup {
    /// Picks anchors automatically on the domain lattice.
    pub fn new(m: usize, domain: DomainBox) -> Result<Self> {
        let anchors = choose_anchors(&domain, m)?;
        Self::with_anchors(m, domain, anchors)
    }

    /// Uses a caller-supplied anchor set (e.g. restored from a document).
    pub fn with_anchors(m: usize, domain: DomainBox, anchors: AnchorSet) -> Result<Self> {
        let basis = monomial_basis(m, domain.dim())?;
        let spec = KernelSpec::new(basis, anchors)?;
        Ok(Self { domain, spec })
    }

    pub fn m(&self) -> usize {
        self.spec.m()
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.spec
    }
}
