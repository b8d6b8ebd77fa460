//! Fitted spline models: pointwise evaluation, derivatives, the stored
//! quadratic functionals, and a versioned plain-text document format that
//! round-trips models exactly.

use nalgebra::{DMatrix, DVector};

use crate::basis::{AnchorSet, MultiIndex};
use crate::data::{Dataset, DomainBox, SplineSetup};
use crate::error::{Error, Result};
use crate::system::PenalizedSolution;

/// Document format version this build writes and reads.
pub const MODEL_DOC_VERSION: u32 = 1;
const MODEL_DOC_MAGIC: &str = "tpsmooth-model";

/// A fitted spline: polynomial part plus kernel expansion over the knots.
#[derive(Debug, Clone)]
pub struct SplineModel {
    setup: SplineSetup,
    knots: Vec<Vec<f64>>,
    poly: DVector<f64>,
    kernel_coef: DVector<f64>,
    lambda: f64,
    j_value: f64,
    en_value: f64,
}

impl SplineModel {
    /// Wraps a penalized solve's output. `knots` are the design points the
    /// solve ran on, in the same order as the kernel coefficients.
    pub fn from_solution(
        setup: SplineSetup,
        knots: Vec<Vec<f64>>,
        solution: &PenalizedSolution,
        lambda: f64,
    ) -> Self {
        Self {
            setup,
            knots,
            poly: solution.poly.clone(),
            kernel_coef: solution.kernel.clone(),
            lambda,
            j_value: solution.j_value,
            en_value: solution.en_value,
        }
    }

    /// A purely polynomial model (no kernel part), e.g. a least squares fit.
    pub fn polynomial(setup: SplineSetup, poly: DVector<f64>, en_value: f64) -> Self {
        Self {
            setup,
            knots: Vec::new(),
            poly,
            kernel_coef: DVector::zeros(0),
            lambda: f64::INFINITY,
            j_value: 0.0,
            en_value,
        }
    }

    pub fn setup(&self) -> &SplineSetup {
        &self.setup
    }

    pub fn m(&self) -> usize {
        self.setup.m()
    }

    pub fn dim(&self) -> usize {
        self.setup.dim()
    }

    pub fn knots(&self) -> &[Vec<f64>] {
        &self.knots
    }

    pub fn poly_coefficients(&self) -> &DVector<f64> {
        &self.poly
    }

    pub fn kernel_coefficients(&self) -> &DVector<f64> {
        &self.kernel_coef
    }

    /// Smoothing weight the model was fitted with; 0 for an interpolant and
    /// +inf for a pure polynomial fit.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Roughness functional of the fit, recorded at solve time.
    pub fn j_value(&self) -> f64 {
        self.j_value
    }

    /// Mean squared residual on the fitting data, recorded at solve time.
    pub fn en_value(&self) -> f64 {
        self.en_value
    }

    pub fn in_domain(&self, x: &[f64]) -> bool {
        self.setup.domain().contains(x)
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let spec = self.setup.kernel();
        let mut v = spec.basis().eval_row(x).dot(&self.poly);
        if !self.knots.is_empty() {
            v += spec.r_row(x, &self.knots).dot(&self.kernel_coef);
        }
        Ok(v)
    }

    /// D^alpha f at x. Supported orders: |alpha| <= 2m-2 for d = 1 and
    /// |alpha| <= 2 otherwise; order 0 is plain evaluation.
    pub fn eval_deriv(&self, x: &[f64], alpha: &MultiIndex) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if alpha.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: alpha.dim(),
            });
        }
        if alpha.order() == 0 {
            return self.eval(x);
        }
        let spec = self.setup.kernel();
        let order = alpha.order() as usize;
        if order > spec.max_deriv_order() {
            return Err(Error::UnsupportedDerivative {
                order,
                m: self.m(),
                d: self.dim(),
            });
        }
        let mut v = spec.basis().eval_deriv_row(x, alpha).dot(&self.poly);
        if !self.knots.is_empty() {
            v += spec.r_deriv_row(x, &self.knots, alpha)?.dot(&self.kernel_coef);
        }
        Ok(v)
    }

    /// Mean squared residual of this model on an arbitrary dataset.
    pub fn e_n(&self, data: &Dataset) -> Result<f64> {
        let mut acc = 0.0;
        for (p, &y) in data.points().iter().zip(data.y()) {
            let r = y - self.eval(p)?;
            acc += r * r;
        }
        Ok(acc / data.len() as f64)
    }

    /// Serializes to the plain-text document format (version 1): header with
    /// order, dimension, and domain; anchor points with their cardinal
    /// coefficients; knots; both coefficient vectors; and the recorded
    /// lambda/roughness/residual triple. Floats carry 17 significant digits
    /// so reading the document back reproduces evaluation exactly.
    pub fn to_document(&self) -> String {
        let mut out = String::new();
        let spec = self.setup.kernel();
        let anchors = spec.anchors();
        let mm = anchors.len();
        let n = self.knots.len();
        out.push_str(&format!("{MODEL_DOC_MAGIC} {MODEL_DOC_VERSION}\n"));
        out.push_str(&format!("m {}\n", self.m()));
        out.push_str(&format!("d {}\n", self.dim()));
        out.push_str("domain\n");
        for j in 0..self.dim() {
            out.push_str(&format!(
                "{} {}\n",
                fmt_f64(self.setup.domain().lo()[j]),
                fmt_f64(self.setup.domain().hi()[j])
            ));
        }
        out.push_str(&format!("anchors {mm}\n"));
        for p in anchors.points() {
            push_point(&mut out, p);
        }
        out.push_str("cardinal\n");
        for r in 0..mm {
            let row: Vec<String> = (0..mm).map(|c| fmt_f64(anchors.cardinal()[(r, c)])).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out.push_str(&format!("knots {n}\n"));
        for p in &self.knots {
            push_point(&mut out, p);
        }
        out.push_str(&format!("poly {mm}\n"));
        for v in self.poly.iter() {
            out.push_str(&fmt_f64(*v));
            out.push('\n');
        }
        out.push_str(&format!("kernel {n}\n"));
        for v in self.kernel_coef.iter() {
            out.push_str(&fmt_f64(*v));
            out.push('\n');
        }
        out.push_str(&format!("lambda {}\n", fmt_f64(self.lambda)));
        out.push_str(&format!("j {}\n", fmt_f64(self.j_value)));
        out.push_str(&format!("en {}\n", fmt_f64(self.en_value)));
        out
    }

    /// Parses a document produced by `to_document`. Rejects unknown versions
    /// and names the first missing or malformed field.
    pub fn from_document(text: &str) -> Result<Self> {
        let mut tok = Tokens::new(text);
        let magic = tok.next_str("document header")?;
        if magic != MODEL_DOC_MAGIC {
            return Err(Error::ModelParse(format!(
                "not a model document (expected `{MODEL_DOC_MAGIC}`, found `{magic}`)"
            )));
        }
        let version = tok.next_str("format version")?;
        if version != MODEL_DOC_VERSION.to_string() {
            return Err(Error::VersionMismatch {
                expected: MODEL_DOC_VERSION,
                found: version.to_string(),
            });
        }
        tok.expect("m")?;
        let m = tok.next_usize("order m")?;
        tok.expect("d")?;
        let d = tok.next_usize("dimension d")?;
        if m == 0 || m > 32 || d == 0 || d > 16 {
            return Err(Error::ModelParse(format!("implausible order/dimension m={m}, d={d}")));
        }
        tok.expect("domain")?;
        let mut lo = Vec::with_capacity(d);
        let mut hi = Vec::with_capacity(d);
        for j in 0..d {
            lo.push(tok.next_f64(&format!("domain lower bound, axis {j}"))?);
            hi.push(tok.next_f64(&format!("domain upper bound, axis {j}"))?);
        }
        let domain = DomainBox::new(lo, hi)?;
        tok.expect("anchors")?;
        let mm = tok.next_usize("anchor count")?;
        if mm > 100_000 {
            return Err(Error::ModelParse(format!("implausible anchor count {mm}")));
        }
        let anchor_pts = tok.points(mm, d, "anchor")?;
        tok.expect("cardinal")?;
        let mut cardinal = DMatrix::zeros(mm, mm);
        for r in 0..mm {
            for c in 0..mm {
                cardinal[(r, c)] = tok.next_f64(&format!("cardinal coefficient ({r},{c})"))?;
            }
        }
        tok.expect("knots")?;
        let n = tok.next_usize("knot count")?;
        if n > 50_000_000 {
            return Err(Error::ModelParse(format!("implausible knot count {n}")));
        }
        let knots = tok.points(n, d, "knot")?;
        tok.expect("poly")?;
        let pc = tok.next_usize("polynomial coefficient count")?;
        if pc != mm {
            return Err(Error::ModelParse(format!(
                "polynomial coefficient count {pc} does not match anchor count {mm}"
            )));
        }
        let mut poly = DVector::zeros(mm);
        for k in 0..mm {
            poly[k] = tok.next_f64(&format!("polynomial coefficient {k}"))?;
        }
        tok.expect("kernel")?;
        let kc = tok.next_usize("kernel coefficient count")?;
        if kc != n {
            return Err(Error::ModelParse(format!(
                "kernel coefficient count {kc} does not match knot count {n}"
            )));
        }
        let mut kernel_coef = DVector::zeros(n);
        for k in 0..n {
            kernel_coef[k] = tok.next_f64(&format!("kernel coefficient {k}"))?;
        }
        tok.expect("lambda")?;
        let lambda = tok.next_f64("lambda")?;
        tok.expect("j")?;
        let j_value = tok.next_f64("roughness value")?;
        tok.expect("en")?;
        let en_value = tok.next_f64("residual value")?;
        if let Some(extra) = tok.peek() {
            return Err(Error::ModelParse(format!("unexpected trailing content `{extra}`")));
        }

        let basis = crate::basis::monomial_basis(m, d)?;
        if basis.len() != mm {
            return Err(Error::ModelParse(format!(
                "anchor count {mm} does not match basis size {} for m={m}, d={d}",
                basis.len()
            )));
        }
        let anchors = AnchorSet::from_parts(anchor_pts, cardinal, &basis)?;
        let setup = SplineSetup::with_anchors(m, domain, anchors)?;
        Ok(Self {
            setup,
            knots,
            poly,
            kernel_coef,
            lambda,
            j_value,
            en_value,
        })
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn push_point(out: &mut String, p: &[f64]) {
    let row: Vec<String> = p.iter().map(|&v| fmt_f64(v)).collect();
    out.push_str(&row.join(" "));
    out.push('\n');
}

struct Tokens<'a> {
    it: std::iter::Peekable<std::str::SplitWhitespace<'a>>,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            it: text.split_whitespace().peekable(),
        }
    }

    fn peek(&mut self) -> Option<&&'a str> {
        self.it.peek()
    }

    fn next_str(&mut self, what: &str) -> Result<&'a str> {
        self.it
            .next()
            .ok_or_else(|| Error::ModelParse(format!("missing {what}")))
    }

    fn expect(&mut self, kw: &str) -> Result<()> {
        match self.it.next() {
            Some(t) if t == kw => Ok(()),
            Some(t) => Err(Error::ModelParse(format!("expected field `{kw}`, found `{t}`"))),
            None => Err(Error::ModelParse(format!("missing field `{kw}`"))),
        }
    }

    fn next_f64(&mut self, what: &str) -> Result<f64> {
        let t = self.next_str(what)?;
        t.parse::<f64>()
            .map_err(|_| Error::ModelParse(format!("malformed {what}: `{t}`")))
    }

    fn next_usize(&mut self, what: &str) -> Result<usize> {
        let t = self.next_str(what)?;
        t.parse::<usize>()
            .map_err(|_| Error::ModelParse(format!("malformed {what}: `{t}`")))
    }

    fn points(&mut self, count: usize, d: usize, what: &str) -> Result<Vec<Vec<f64>>> {
        let mut pts = Vec::with_capacity(count);
        for i in 0..count {
            let mut p = Vec::with_capacity(d);
            for j in 0..d {
                p.push(self.next_f64(&format!("{what} {i}, coordinate {j}"))?);
            }
            pts.push(p);
        }
        Ok(pts)
    }
}
