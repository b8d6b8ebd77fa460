//! Fitting entry points. Three formulations reduce to one penalized solve:
//! a fixed smoothing weight uses it directly, while roughness and residual
//! budgets locate their weight by monotone bisection on the corresponding
//! curve (roughness falls and residual rises as the weight grows).

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::basis::check_unisolvent;
use crate::data::{Dataset, SplineSetup};
use crate::error::{Error, Result};
use crate::model::SplineModel;
use crate::system::{assemble, solve_penalized, DesignMatrices, PenalizedSolution};

/// What to fit: budgets, a fixed weight, or one of the two regime endpoints.
#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    /// Minimize the residual subject to roughness <= u_n.
    RoughnessBudget { u_n: f64 },
    /// Minimize roughness subject to mean squared residual <= s_n.
    ResidualBudget { s_n: f64 },
    /// Minimize residual + lambda * roughness.
    FixedWeight { lambda: f64 },
    /// The roughness-minimal interpolant (zero weight limit).
    Interpolate,
    /// Plain polynomial least squares (infinite weight limit).
    PolynomialOnly,
}

/// Marks fits that collapsed to one of the regime endpoints instead of an
/// interior smoothing weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeCase {
    /// Budget loose enough (or zero residual allowed) that the interpolant wins.
    InterpolantRegime,
    /// Budget tight enough (or loose residual) that the polynomial fit wins.
    PolynomialRegime,
}

/// A fitted model plus the diagnostics every caller wants: the achieved
/// functionals, the weight the search settled on, and how it got there.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: SplineModel,
    pub achieved_j: f64,
    pub achieved_en: f64,
    /// Smoothing weight of the returned fit: 0 for interpolation, +inf for
    /// the polynomial regime, otherwise the bisection's accepted weight.
    pub lambda_star: f64,
    /// Penalized solves spent bracketing and bisecting (0 for direct fits).
    pub iterations: usize,
    pub edge_case: Option<EdgeCase>,
    pub ridge_fallback: bool,
}

pub fn fit(data: &Dataset, problem: &Problem, setup: &SplineSetup) -> Result<FitResult> {
    match *problem {
        Problem::FixedWeight { lambda } => fit_fixed_weight(data, lambda, setup),
        Problem::RoughnessBudget { u_n } => fit_roughness_budget(data, u_n, setup),
        Problem::ResidualBudget { s_n } => fit_residual_budget(data, s_n, setup),
        Problem::Interpolate => interpolant(data, setup),
        Problem::PolynomialOnly => poly_least_squares(data, setup),
    }
}

fn validate_spline_inputs(data: &Dataset, setup: &SplineSetup) -> Result<()> {
    if data.dim() != setup.dim() {
        return Err(Error::DimensionMismatch {
            expected: setup.dim(),
            got: data.dim(),
        });
    }
    if !check_unisolvent(data.points(), setup.m()) {
        return Err(Error::NotUnisolvent { degree: setup.m() - 1 });
    }
    Ok(())
}

/// Fits with a fixed smoothing weight. Zero interpolates (and is tagged as
/// the interpolant regime); large weights approach polynomial least squares.
pub fn fit_fixed_weight(data: &Dataset, lambda: f64, setup: &SplineSetup) -> Result<FitResult> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "smoothing weight must be finite and nonnegative, got {lambda}"
        )));
    }
    validate_spline_inputs(data, setup)?;
    let dm = assemble(data.points(), setup.kernel())?;
    let sol = solve_penalized(&dm, data.y(), lambda)?;
    Ok(result_from_solution(setup, data, &sol, lambda, 0, if lambda == 0.0 {
        Some(EdgeCase::InterpolantRegime)
    } else {
        None
    }))
}

/// The roughness-minimal interpolant.
pub fn interpolant(data: &Dataset, setup: &SplineSetup) -> Result<FitResult> {
    fit_fixed_weight(data, 0.0, setup)
}

/// Least squares over the polynomial null space alone. Works for any n >= 1;
/// rank-deficient designs get the minimum-norm coefficients.
pub fn poly_least_squares(data: &Dataset, setup: &SplineSetup) -> Result<FitResult> {
    if data.dim() != setup.dim() {
        return Err(Error::DimensionMismatch {
            expected: setup.dim(),
            got: data.dim(),
        });
    }
    let basis = setup.kernel().basis();
    let n = data.len();
    let pmat = DMatrix::from_fn(n, basis.len(), |i, k| {
        crate::basis::eval_monomial(&basis.indices()[k], &data.points()[i])
    });
    let yv = DVector::from_column_slice(data.y());
    let svd = pmat.clone().svd(true, true);
    let coef = svd
        .solve(&yv, 1e-12)
        .map_err(|_| Error::SingularSystem { residual: f64::NAN })?;
    let fitted = &pmat * &coef;
    let en = (&yv - &fitted).norm_squared() / n as f64;
    let model = SplineModel::polynomial(setup.clone(), coef, en);
    Ok(FitResult {
        achieved_j: 0.0,
        achieved_en: en,
        lambda_star: f64::INFINITY,
        iterations: 0,
        edge_case: Some(EdgeCase::PolynomialRegime),
        ridge_fallback: false,
        model,
    })
}

/// Minimizes the residual subject to roughness <= u_n. A budget of zero
/// degenerates to polynomial least squares; a budget at or above the
/// interpolant's roughness returns the interpolant. Anything in between is
/// found by bisection until the roughness binds to 1e-6 relative.
pub fn fit_roughness_budget(data: &Dataset, u_n: f64, setup: &SplineSetup) -> Result<FitResult> {
    if !(u_n >= 0.0) || !u_n.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "roughness budget must be finite and nonnegative, got {u_n}"
        )));
    }
    if u_n == 0.0 {
        let mut r = poly_least_squares(data, setup)?;
        r.edge_case = Some(EdgeCase::PolynomialRegime);
        return Ok(r);
    }
    validate_spline_inputs(data, setup)?;
    let dm = assemble(data.points(), setup.kernel())?;
    match solve_penalized(&dm, data.y(), 0.0) {
        Ok(interp) => {
            if u_n >= interp.j_value {
                return Ok(result_from_solution(
                    setup,
                    data,
                    &interp,
                    0.0,
                    0,
                    Some(EdgeCase::InterpolantRegime),
                ));
            }
        }
        // Exact interpolation can be numerically out of reach (near-singular
        // at zero weight) while interior weights solve fine. An interior
        // budget only needs the usable part of the path; a budget beyond it
        // surfaces as a failed search instead.
        Err(Error::SingularSystem { .. }) => {}
        Err(e) => return Err(e),
    }
    let found = search_lambda(&dm, data.y(), u_n, Metric::Roughness)?;
    Ok(result_from_solution(setup, data, &found.solution, found.lambda, found.iterations, None))
}

/// Minimizes roughness subject to mean squared residual <= s_n. Zero budget
/// forces interpolation; a budget at or above the polynomial fit's residual
/// returns that fit. Interior budgets bind to 1e-6 relative by bisection.
pub fn fit_residual_budget(data: &Dataset, s_n: f64, setup: &SplineSetup) -> Result<FitResult> {
    if !(s_n >= 0.0) || !s_n.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "residual budget must be finite and nonnegative, got {s_n}"
        )));
    }
    if s_n == 0.0 {
        return interpolant(data, setup);
    }
    let poly = poly_least_squares(data, setup)?;
    if s_n >= poly.achieved_en {
        return Ok(poly);
    }
    validate_spline_inputs(data, setup)?;
    let dm = assemble(data.points(), setup.kernel())?;
    let found = search_lambda(&dm, data.y(), s_n, Metric::Residual)?;
    Ok(result_from_solution(setup, data, &found.solution, found.lambda, found.iterations, None))
}

/// Residual value of the roughness-budget fit, as a function of the budget.
pub fn psi_n(data: &Dataset, u_n: f64, setup: &SplineSetup) -> Result<f64> {
    Ok(fit_roughness_budget(data, u_n, setup)?.achieved_en)
}

/// Fits the residual budget, reads off the achieved roughness, and feeds it
/// back as a roughness budget. The two fits coincide when both budgets bind,
/// which is the practical route to a roughness budget when only a residual
/// scale is known.
pub fn duality_roundtrip(data: &Dataset, s_n: f64, setup: &SplineSetup) -> Result<(FitResult, FitResult)> {
    let poly = poly_least_squares(data, setup)?;
    if !(s_n > 0.0) || s_n >= poly.achieved_en {
        return Err(Error::InvalidParameter(format!(
            "round trip needs 0 < s_n < {:.6e} (the polynomial fit's residual), got {s_n:.6e}",
            poly.achieved_en
        )));
    }
    let first = fit_residual_budget(data, s_n, setup)?;
    let second = fit_roughness_budget(data, first.achieved_j, setup)?;
    Ok((first, second))
}

fn result_from_solution(
    setup: &SplineSetup,
    data: &Dataset,
    sol: &PenalizedSolution,
    lambda: f64,
    iterations: usize,
    edge_case: Option<EdgeCase>,
) -> FitResult {
    let model = SplineModel::from_solution(setup.clone(), data.points().to_vec(), sol, lambda);
    FitResult {
        achieved_j: sol.j_value,
        achieved_en: sol.en_value,
        lambda_star: lambda,
        iterations,
        edge_case,
        ridge_fallback: sol.ridge_fallback,
        model,
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Metric {
    /// d' R d, nonincreasing in the weight.
    Roughness,
    /// Mean squared residual, nondecreasing in the weight.
    Residual,
}

struct SearchOutcome {
    solution: PenalizedSolution,
    lambda: f64,
    iterations: usize,
}

const SEARCH_HI: f64 = 1e6;
const SEARCH_LO_LIMIT: f64 = 1e-300;
const SEARCH_HI_LIMIT: f64 = 1e18;
const SEARCH_MAX_ITER: usize = 200;
/// Declared tolerance on the bound: |achieved - target| <= 1e-6 * target.
const SEARCH_ACCEPT_REL: f64 = 1e-6;
/// Internal stopping tolerance, well inside the declared one.
const SEARCH_STOP_REL: f64 = 1e-10;

/// Monotone bisection in log-weight space, bracketed from the large-weight
/// side. The small end of the path turns numerically treacherous well before
/// solves fail outright: evaluated values there carry heavy cancellation,
/// which can fold the curve back across the target a second time. The walk
/// therefore never probes below the first qualifying weight; each probe is
/// one penalized solve, and the best probe is returned once it is within the
/// stopping tolerance (or the iteration/bracket budget runs out while still
/// within the declared tolerance).
fn search_lambda(dm: &DesignMatrices, y: &[f64], target: f64, metric: Metric) -> Result<SearchOutcome> {
    let mut state = SearchState {
        dm,
        y,
        target,
        metric,
        iterations: 0,
        best: None,
    };

    // Raise hi until it sits on the large-weight side of the crossing.
    let mut hi = SEARCH_HI;
    loop {
        if state.iterations >= SEARCH_MAX_ITER {
            return state.into_outcome(SEARCH_HI, hi);
        }
        match state.probe(hi)? {
            Some(v) if !state.above(v) => break,
            Some(_) => {
                hi *= 1e2;
                if hi > SEARCH_HI_LIMIT {
                    return state.into_outcome(SEARCH_HI, hi);
                }
            }
            None => return state.into_outcome(SEARCH_HI, hi),
        }
    }
    // Step lo downward and stop at the first probe past the target. An
    // unsolvable probe ends the search: nothing below it is usable, so a
    // crossing that has not appeared by then is out of reach.
    let mut lo = hi;
    loop {
        if state.iterations >= SEARCH_MAX_ITER {
            return state.into_outcome(lo, hi);
        }
        let next = lo / 1e2;
        if next < SEARCH_LO_LIMIT {
            return state.into_outcome(next, hi);
        }
        match state.probe(next)? {
            Some(v) if state.above(v) => {
                hi = lo;
                lo = next;
                break;
            }
            Some(_) => lo = next,
            None => return state.into_outcome(next, hi),
        }
    }

    while state.iterations < SEARCH_MAX_ITER {
        if state.best.as_ref().map(|(g, _, _)| *g <= SEARCH_STOP_REL).unwrap_or(false) {
            break;
        }
        if hi / lo - 1.0 < 1e-15 {
            break;
        }
        let mid = (lo * hi).sqrt();
        match state.probe(mid)? {
            Some(v) => {
                if state.above(v) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            None => {
                // Unsolvable probes live at the small end; move off it.
                lo = mid;
            }
        }
    }
    state.into_outcome(lo, hi)
}

struct SearchState<'a> {
    dm: &'a DesignMatrices,
    y: &'a [f64],
    target: f64,
    metric: Metric,
    iterations: usize,
    best: Option<(f64, f64, PenalizedSolution)>, // (rel gap, lambda, solution)
}

impl SearchState<'_> {
    fn probe(&mut self, lambda: f64) -> Result<Option<f64>> {
        self.iterations += 1;
        match solve_penalized(self.dm, self.y, lambda) {
            Ok(sol) => {
                let value = match self.metric {
                    Metric::Roughness => sol.j_value,
                    Metric::Residual => sol.en_value,
                };
                let gap = (value - self.target).abs() / self.target;
                if self.best.as_ref().map(|(g, _, _)| gap < *g).unwrap_or(true) {
                    self.best = Some((gap, lambda, sol));
                }
                Ok(Some(value))
            }
            // Solves can fail at extremely small weights where the system is
            // nearly the interpolation one; the caller has already handled
            // exact interpolation, so the search just avoids that end.
            Err(Error::SingularSystem { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// True when the probed value sits on the small-weight side of the
    /// crossing: roughness falls with the weight, residual rises.
    fn above(&self, value: f64) -> bool {
        match self.metric {
            Metric::Roughness => value > self.target,
            Metric::Residual => value < self.target,
        }
    }

    fn into_outcome(self, lo: f64, hi: f64) -> Result<SearchOutcome> {
        best_or_fail(self.best, self.target, lo, hi, self.iterations)
    }
}

fn best_or_fail(
    best: Option<(f64, f64, PenalizedSolution)>,
    target: f64,
    lo: f64,
    hi: f64,
    iterations: usize,
) -> Result<SearchOutcome> {
    match best {
        Some((gap, lambda, solution)) if gap <= SEARCH_ACCEPT_REL => Ok(SearchOutcome {
            solution,
            lambda,
            iterations,
        }),
        _ => Err(Error::RootFindFailed {
            target,
            lo,
            hi,
            iterations,
        }),
    }
}

/// Leave-one-out cross-validation over a positive weight grid. Returns the
/// selected weight (ties broken toward the larger one) and the score for
/// every grid entry in input order.
#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub lambda: f64,
    pub scores: Vec<f64>,
}

pub fn cross_validate(data: &Dataset, grid: &[f64], setup: &SplineSetup) -> Result<CvOutcome> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("cross-validation grid is empty".into()));
    }
    for &l in grid {
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "cross-validation grid must be positive and finite, got {l}"
            )));
        }
    }
    validate_spline_inputs(data, setup)?;
    let n = data.len();
    let mm = setup.kernel().basis().len();
    if n < mm + 1 {
        return Err(Error::InvalidParameter(format!(
            "leave-one-out needs at least {} points for order m={}, got {n}",
            mm + 1,
            setup.m()
        )));
    }
    // Every held-out subset must itself be solvable.
    let subsets: Vec<Dataset> = (0..n).map(|k| data.without(k)).collect();
    for (k, sub) in subsets.iter().enumerate() {
        if !check_unisolvent(sub.points(), setup.m()) {
            return Err(Error::InvalidParameter(format!(
                "removing point {k} leaves a design that cannot pin the polynomial part"
            )));
        }
    }
    let assembled: Vec<DesignMatrices> = subsets
        .iter()
        .map(|sub| assemble(sub.points(), setup.kernel()))
        .collect::<Result<_>>()?;

    let spec = setup.kernel();
    let scores: Vec<f64> = grid
        .par_iter()
        .map(|&lambda| -> Result<f64> {
            // The held-out objective keeps the full-sample 1/n scaling, so the
            // (n-1)-point solve needs its weight inflated by n/(n-1).
            let sub_lambda = lambda * n as f64 / (n as f64 - 1.0);
            let mut acc = 0.0;
            for (k, (sub, dm)) in subsets.iter().zip(&assembled).enumerate() {
                let sol = solve_penalized(dm, sub.y(), sub_lambda)?;
                let x = &data.points()[k];
                let pred = spec.basis().eval_row(x).dot(&sol.poly)
                    + spec.r_row(x, sub.points()).dot(&sol.kernel);
                let r = data.y()[k] - pred;
                acc += r * r;
            }
            Ok(acc / n as f64)
        })
        .collect::<Result<_>>()?;

    let pick = argmin_tie_toward_larger(grid, &scores);
    Ok(CvOutcome {
        lambda: grid[pick],
        scores,
    })
}

fn argmin_tie_toward_larger(grid: &[f64], scores: &[f64]) -> usize {
    let mut pick = 0usize;
    for i in 1..grid.len() {
        let better = scores[i] < scores[pick]
            || (scores[i] == scores[pick] && grid[i] > grid[pick]);
        if better {
            pick = i;
        }
    }
    pick
}

/// The weight grid used by the cross-validated fits in the benchmark runs:
/// 1 and 5 times each power of ten from 1e-11 up, capped at 1.
pub fn default_cv_grid() -> Vec<f64> {
    vec![
        1e-11, 5e-11, 1e-10, 5e-10, 1e-9, 5e-9, 1e-8, 5e-8, 1e-7, 5e-7, 1e-6, 5e-6, 1e-5,
        5e-5, 1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2, 1e-1, 5e-1, 1.0,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DomainBox;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup_1d(m: usize, lo: f64, hi: f64) -> SplineSetup {
        SplineSetup::new(m, DomainBox::new(vec![lo], vec![hi]).unwrap()).unwrap()
    }

    fn data_1d(xs: &[f64], y: &[f64]) -> Dataset {
        Dataset::new(xs.iter().map(|&x| vec![x]).collect(), y.to_vec()).unwrap()
    }

    fn noisy_sine(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let y: Vec<f64> = xs
            .iter()
            .map(|&x| (5.0 * x).sin() + 0.2 * rng.random_range(-1.0..1.0))
            .collect();
        data_1d(&xs, &y)
    }

    #[test]
    fn fixed_weight_zero_interpolates() {
        let setup = setup_1d(2, 0.0, 1.0);
        let data = noisy_sine(8, 1);
        let r = fit_fixed_weight(&data, 0.0, &setup).unwrap();
        assert_eq!(r.edge_case, Some(EdgeCase::InterpolantRegime));
        for (x, &y) in data.points().iter().zip(data.y()) {
            assert!((r.model.eval(x).unwrap() - y).abs() <= 1e-7);
        }
    }

    #[test]
    fn fixed_weight_huge_flattens() {
        let setup = setup_1d(2, 0.0, 1.0);
        let data = noisy_sine(8, 2);
        let r = fit_fixed_weight(&data, 1e12, &setup).unwrap();
        assert!(r.achieved_j <= 1e-8);
        assert!(r.edge_case.is_none());
    }

    #[test]
    fn constant_data_reproduced_at_any_weight() {
        let setup = setup_1d(2, 0.0, 1.0);
        let data = data_1d(&[0.1, 0.5, 0.9], &[4.0, 4.0, 4.0]);
        for lambda in [0.0, 1e-5, 1e3] {
            let r = fit_fixed_weight(&data, lambda, &setup).unwrap();
            for x in [0.0, 0.33, 1.0] {
                assert!((r.model.eval(&[x]).unwrap() - 4.0).abs() <= 1e-9, "lambda={lambda}");
            }
        }
    }

    #[test]
    fn interpolant_of_two_points_is_the_line() {
        let setup = setup_1d(2, 0.0, 1.0);
        let data = data_1d(&[0.0, 1.0], &[0.0, 1.0]);
        let r = interpolant(&data, &setup).unwrap();
        assert!((r.model.eval(&[0.5]).unwrap() - 0.5).abs() <= 1e-9);
        assert!(r.achieved_j <= 1e-10);
    }

    #[test]
    fn polynomial_fit_of_linear_data_is_exact() {
        let setup = setup_1d(2, 0.0, 1.0);
        let xs = [0.0, 0.3, 0.6, 1.0];
        let y: Vec<f64> = xs.iter().map(|x| 2.0 - 3.0 * x).collect();
        let r = poly_least_squares(&data_1d(&xs, &y), &setup).unwrap();
        assert!(r.achieved_en <= 1e-20);
        assert!((r.model.eval(&[0.77]).unwrap() - (2.0 - 3.0 * 0.77)).abs() <= 1e-10);
        assert!(r.lambda_star.is_infinite());
    }

    #[test]
    fn polynomial_fit_matches_brute_force_grid() {
        // m=1 fits a constant; scan candidate constants directly.
        let setup = setup_1d(1, 0.0, 1.0);
        let data = data_1d(&[0.1, 0.4, 0.8], &[1.0, 2.0, 4.5]);
        let r = poly_least_squares(&data, &setup).unwrap();
        let mut best = f64::INFINITY;
        for k in 0..=10_000 {
            let c = k as f64 * 5.0 / 10_000.0;
            let en: f64 = data.y().iter().map(|y| (y - c) * (y - c)).sum::<f64>() / 3.0;
            best = best.min(en);
        }
        assert!(r.achieved_en <= best + 1e-6);
        assert!((r.achieved_en - best).abs() <= 1e-6);
    }

    #[test]
    fn roughness_budget_edges() {
        let setup = setup_1d(2, 0.0, 1.0);
        let data = noisy_sine(10, 3);
        let interp = interpolant(&data, &setup).unwrap();

        let r = fit_roughness_budget(&data, interp.achieved_j * 2.0, &setup).unwrap();
        assert_eq!(r.edge_case, Some(EdgeCase::InterpolantRegime));
        assert_eq!(r.lambda_star, 0.0);
        for x in data.points() {
            assert!((r.model.eval(x).unwrap() - interp.model.eval(x).unwrap()).abs() <= 1e-12);
        }

        let r = fit_roughness_budget(&data, 0.0, &setup).unwrap();
        assert_eq!(r.edge_case, Some(EdgeCase::PolynomialRegime));
        let poly = poly_least_squares(&data, &setup).unwrap();
        assert!((r.achieved_en - poly.achieved_en).abs() <= 1e-12);
    }

    #[test]
    fn roughness_budget_binds_in_the_interior() {
        let setup = setup_1d(2, 0.0, 1.0);
        let data = noisy_sine(12, 4);
        let j1 = interpolant(&data, &setup).unwrap().achieved_j;
        for frac in [0.5, 0.1, 0.01] {
            let u = j1 * frac;
            let r = fit_roughness_budget(&data, u, &setup).unwrap();
            assert!(
                (r.achieved_j - u).abs() <= 1e-6 * u,
                "frac={frac}: achieved {} vs budget {u}",
                r.achieved_j
            );
            assert!(r.edge_case.is_none());
            assert!(r.iterations > 0 && r.iterations <= 200);
            assert!(r.lambda_star > 0.0);
        }
    }

    #[test]
    fn residual_budget_edges() {
        let setup = setup_1d(2, 0.0, 1.0);
        let data = noisy_sine(10, 5);
        let poly = poly_least_squares(&data, &setup).unwrap();

        let r = fit_residual_budget(&data, poly.achieved_en * 1.5, &setup).unwrap();
        assert_eq!(r.edge_case, Some(EdgeCase::PolynomialRegime));
        assert!(r.lambda_star.is_infinite());

        let r = fit_residual_budget(&data, 0.0, &setup).unwrap();
        assert_eq!(r.edge_case, Some(EdgeCase::InterpolantRegime));
        assert!(r.achieved_en <= 1e-14);
    }

    #[test]
    fn residual_budget_binds_in_the_interior() {
        let setup = setup_1d(2, 0.0, 1.0);
        let data = noisy_sine(12, 6);
        let en_p = poly_least_squares(&data, &setup).unwrap().achieved_en;
        for frac in [0.75, 0.25, 0.05] {
            let s = en_p * frac;
            let r = fit_residual_budget(&data, s, &setup).unwrap();
            assert!(
                (r.achieved_en - s).abs() <= 1e-6 * s,
                "frac={frac}: achieved {} vs budget {s}",
                r.achieved_en
            );
            assert!(r.edge_case.is_none());
        }
    }

    #[test]
    fn tighter_roughness_budgets_cost_more_residual() {
        let setup = setup_1d(2, 0.0, 1.0);
        let data = noisy_sine(15, 7);
        let j1 = interpolant(&data, &setup).unwrap().achieved_j;
        let mut last = -1.0;
        for k in (1..=5).rev() {
            let u = j1 * k as f64 / 6.0;
            let v = psi_n(&data, u, &setup).unwrap();
            assert!(v >= last - 1e-12, "u={u}: {v} after {last}");
            last = v;
        }
        // Endpoints: full budget reaches (near) zero residual, zero budget
        // reaches the polynomial residual.
        assert!(psi_n(&data, j1, &setup).unwrap() <= 1e-10);
        let en_p = poly_least_squares(&data, &setup).unwrap().achieved_en;
        assert!((psi_n(&data, 0.0, &setup).unwrap() - en_p).abs() <= 1e-8 * en_p);
    }

    #[test]
    fn duality_round_trip_reproduces_the_fit() {
        let setup = setup_1d(2, 0.0, 1.0);
        let data = noisy_sine(14, 8);
        let en_p = poly_least_squares(&data, &setup).unwrap().achieved_en;
        let (b, a) = duality_roundtrip(&data, 0.5 * en_p, &setup).unwrap();
        let range = data
            .y()
            .iter()
            .fold(f64::NEG_INFINITY, |m, &v| m.max(v))
            - data.y().iter().fold(f64::INFINITY, |m, &v| m.min(v));
        for x in data.points() {
            let fa = a.model.eval(x).unwrap();
            let fb = b.model.eval(x).unwrap();
            assert!((fa - fb).abs() <= 1e-5 * range, "{fa} vs {fb}");
        }
        assert!((a.achieved_j - b.achieved_j).abs() <= 1e-5 * b.achieved_j);
        assert!(duality_roundtrip(&data, 0.0, &setup).is_err());
        assert!(duality_roundtrip(&data, en_p * 2.0, &setup).is_err());
    }

    #[test]
    fn round_trip_limits_track_the_regimes() {
        let setup = setup_1d(2, 0.0, 1.0);
        let data = noisy_sine(12, 9);
        let en_p = poly_least_squares(&data, &setup).unwrap().achieved_en;
        let j1 = interpolant(&data, &setup).unwrap().achieved_j;
        // Loose residual budgets force the roughness toward zero...
        let mut last_j = f64::INFINITY;
        for frac in [0.5, 0.9, 0.99] {
            let (b, _) = duality_roundtrip(&data, frac * en_p, &setup).unwrap();
            assert!(b.achieved_j <= last_j);
            last_j = b.achieved_j;
        }
        assert!(last_j <= 0.05 * j1);
        // ...and tight ones push it toward the interpolant's roughness.
        let (b, _) = duality_roundtrip(&data, 1e-4 * en_p, &setup).unwrap();
        assert!(b.achieved_j >= 0.5 * j1);
    }

    #[test]
    fn cross_validation_prefers_small_weights_on_clean_data() {
        let xs: Vec<f64> = (0..12).map(|i| (i as f64 + 0.5) / 12.0).collect();
        let y: Vec<f64> = xs.iter().map(|&x| (4.0 * x).sin()).collect();
        let data = data_1d(&xs, &y);
        let setup = setup_1d(2, 0.0, 1.0);
        let grid = [1e-8, 1e-6, 1e-4, 1e-2];
        let cv = cross_validate(&data, &grid, &setup).unwrap();
        assert_eq!(cv.lambda, 1e-8);
        // Scores grow with the weight once past the smallest entry.
        for k in 1..grid.len() {
            assert!(cv.scores[k] >= cv.scores[k - 1] * (1.0 - 1e-9));
        }
    }

    #[test]
    fn cross_validation_single_entry_grid() {
        let data = noisy_sine(8, 10);
        let setup = setup_1d(2, 0.0, 1.0);
        let cv = cross_validate(&data, &[3e-4], &setup).unwrap();
        assert_eq!(cv.lambda, 3e-4);
        assert_eq!(cv.scores.len(), 1);
        assert!(cv.scores[0] > 0.0);
    }

    #[test]
    fn cross_validation_rejects_bad_grids() {
        let data = noisy_sine(8, 11);
        let setup = setup_1d(2, 0.0, 1.0);
        assert!(cross_validate(&data, &[], &setup).is_err());
        assert!(cross_validate(&data, &[0.0], &setup).is_err());
        assert!(cross_validate(&data, &[-1.0], &setup).is_err());
        assert!(cross_validate(&data, &[f64::INFINITY], &setup).is_err());
    }

    #[test]
    fn tie_break_chooses_larger_weight() {
        let grid = [1e-4, 1e-3, 1e-2];
        assert_eq!(argmin_tie_toward_larger(&grid, &[0.5, 0.2, 0.2]), 2);
        assert_eq!(argmin_tie_toward_larger(&grid, &[0.2, 0.2, 0.5]), 1);
        assert_eq!(argmin_tie_toward_larger(&grid, &[0.1, 0.2, 0.3]), 0);
    }

    #[test]
    fn default_grid_shape() {
        let g = default_cv_grid();
        assert_eq!(g.len(), 23);
        assert_eq!(g[0], 1e-11);
        assert_eq!(g[1], 5e-11);
        assert_eq!(*g.last().unwrap(), 1.0);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn degenerate_designs_are_refused() {
        let setup = setup_1d(2, 0.0, 1.0);
        // One point cannot pin a linear polynomial part.
        let data = data_1d(&[0.5], &[1.0]);
        assert!(matches!(
            interpolant(&data, &setup),
            Err(Error::InvalidParameter(_)) | Err(Error::NotUnisolvent { .. })
        ));
        // Too-small budgets on valid data still work, but invalid budgets error.
        let data = noisy_sine(8, 12);
        assert!(fit_roughness_budget(&data, -1.0, &setup).is_err());
        assert!(fit_residual_budget(&data, f64::NAN, &setup).is_err());
        assert!(fit_fixed_weight(&data, -2.0, &setup).is_err());

        // Collinear 2-D points cannot pin the plane's linear part.
        let setup2 = SplineSetup::new(2, DomainBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap()).unwrap();
        let pts: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 / 4.0, i as f64 / 4.0]).collect();
        let data2 = Dataset::new(pts, vec![0.0, 1.0, 0.5, 0.2, 0.9]).unwrap();
        assert!(matches!(
            fit_fixed_weight(&data2, 1e-3, &setup2),
            Err(Error::NotUnisolvent { .. })
        ));
    }

    #[test]
    fn search_iteration_budget_is_respected() {
        let setup = setup_1d(2, 0.0, 1.0);
        let data = noisy_sine(20, 13);
        let j1 = interpolant(&data, &setup).unwrap().achieved_j;
        let r = fit_roughness_budget(&data, j1 * 1e-6, &setup).unwrap();
        assert!(r.iterations <= 200);
        assert!((r.achieved_j - j1 * 1e-6).abs() <= 1e-6 * j1 * 1e-6);
    }
}
