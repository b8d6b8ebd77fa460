//! Acceptance gate. One test per criterion; each prints a single PASS/FAIL
//! line with its elapsed time. Wall-clock limits are asserted only in release
//! builds (`cargo test --release --test acceptance -- --nocapture`), so debug
//! runs on slow machines still judge correctness.
//!
//! Set TPSMOOTH_FULL_BENCH=1 to run the queue study at its full 400
//! replications instead of the 50-replication desk scale.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use tpsmooth::basis::{monomial_basis, MultiIndex};
use tpsmooth::bench::{
    bs_price, design_points, run_experiment, simulate_euro_call, EimseReport, ExperimentConfig,
    ExperimentKind, MethodSel, OptionConfig,
};
use tpsmooth::estimator::{
    duality_roundtrip, fit, fit_fixed_weight, fit_roughness_budget, interpolant,
    poly_least_squares, psi_n, Problem,
};
use tpsmooth::kernel::theta;
use tpsmooth::rng::{replication_stream, sample_std_normal};
use tpsmooth::{Dataset, DomainBox, SplineModel, SplineSetup};

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

/// Runs one criterion body, prints exactly one PASS/FAIL line, and panics on
/// failure. `body` returns a short detail string shown on the line.
fn criterion(
    name: &str,
    limit_s: f64,
    body: impl FnOnce() -> Result<String, String>,
) {
    let start = Instant::now();
    let outcome = body();
    let elapsed = start.elapsed().as_secs_f64();
    let timed_out = !cfg!(debug_assertions) && elapsed > limit_s;
    match (&outcome, timed_out) {
        (Ok(detail), false) => {
            println!("[acceptance] {name}: PASS ({elapsed:.2}s, limit {limit_s}s) {detail}")
        }
        (Ok(_), true) => {
            println!("[acceptance] {name}: FAIL ({elapsed:.2}s exceeds limit {limit_s}s)")
        }
        (Err(why), _) => {
            println!("[acceptance] {name}: FAIL ({elapsed:.2}s, limit {limit_s}s) {why}")
        }
    }
    if let Err(why) = outcome {
        panic!("{name}: {why}");
    }
    if timed_out {
        panic!("{name}: runtime {elapsed:.2}s exceeds the {limit_s}s budget");
    }
}

fn err_str<T>(r: tpsmooth::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn unit_domain(d: usize) -> DomainBox {
    DomainBox::new(vec![0.0; d], vec![1.0; d]).unwrap()
}

/// Scattered noisy dataset with randomized dimension, order, and size. The
/// signal oscillates fast enough that no order's polynomial tracks it, so
/// interior budgets are met at moderate weights for every configuration.
fn random_dataset(k: u64) -> (Dataset, SplineSetup) {
    let mut rng = replication_stream(5150, k);
    let d = if rng.random::<f64>() < 0.5 { 1 } else { 2 };
    let m = rng.random_range(2..=4usize);
    let null_dim = monomial_basis(m, d).unwrap().len();
    let n = rng.random_range(10..=60usize).max(null_dim + 5);
    let points: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
        .collect();
    let y: Vec<f64> = points
        .iter()
        .map(|p| {
            let s: f64 = p.iter().sum();
            (8.0 * s).sin() + 0.5 * p[0] * p[0] + 0.02 * sample_std_normal(&mut rng)
        })
        .collect();
    let data = Dataset::new(points, y).unwrap();
    let setup = SplineSetup::new(m, unit_domain(d)).unwrap();
    (data, setup)
}

/// Jittered-lattice dataset: same texture as `random_dataset` but with a
/// guaranteed minimum spacing, so exact interpolation stays well conditioned.
fn lattice_dataset(k: u64) -> (Dataset, SplineSetup) {
    let mut rng = replication_stream(4400, k);
    let d = if k % 2 == 0 { 1 } else { 2 };
    // These datasets anchor curve shapes at the exact interpolant, which must
    // remain computable at zero weight; on the line that restricts the order
    // to 2, while the plane (better conditioned kernel) also carries order 3.
    let m = if d == 1 { 2 } else { 2 + ((k / 2) % 2) as usize };
    let points: Vec<Vec<f64>> = if d == 1 {
        let n = 18 + (k as usize * 2) % 15;
        (0..n)
            .map(|i| vec![(i as f64 + 0.5) / n as f64 + 0.2 / n as f64 * (rng.random::<f64>() - 0.5)])
            .collect()
    } else {
        let side = 5 + (k as usize % 3);
        let mut pts = Vec::new();
        for i in 0..side {
            for j in 0..side {
                let jx = 0.2 / side as f64 * (rng.random::<f64>() - 0.5);
                let jy = 0.2 / side as f64 * (rng.random::<f64>() - 0.5);
                pts.push(vec![
                    (i as f64 + 0.5) / side as f64 + jx,
                    (j as f64 + 0.5) / side as f64 + jy,
                ]);
            }
        }
        pts
    };
    // Mild noise keeps the whole residual curve macroscopic while the
    // near-interpolation end of the path stays numerically tame.
    let y: Vec<f64> = points
        .iter()
        .map(|p| {
            let s: f64 = p.iter().sum();
            0.7 * (4.0 * s).sin() + p[0] + 0.05 * sample_std_normal(&mut rng)
        })
        .collect();
    let data = Dataset::new(points, y).unwrap();
    let setup = SplineSetup::new(m, unit_domain(d)).unwrap();
    (data, setup)
}

fn y_range(data: &Dataset) -> f64 {
    let lo = data.y().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = data.y().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

#[test]
fn criterion_01_kernel_constants_and_anchor_annihilation() {
    criterion("criterion 01 (kernel constants, anchor rows vanish)", 1.0, || {
        let t22 = err_str(theta(2, 2))?;
        ensure!(
            (t22 - 1.0 / (8.0 * PI)).abs() <= 1e-12,
            "theta(2,2) = {t22:.16e}, want 1/(8 pi)"
        );
        let t21 = err_str(theta(2, 1))?;
        ensure!((t21 - 1.0 / 12.0).abs() <= 1e-12, "theta(2,1) = {t21:.16e}, want 1/12");
        let mut checked = 0usize;
        for d in 1..=2usize {
            for m in 2..=4usize {
                let setup = err_str(SplineSetup::new(m, unit_domain(d)))?;
                let kernel = setup.kernel();
                let at_zero = kernel.k_m(&vec![0.0; d]);
                ensure!(at_zero == 0.0, "K_m(0) = {at_zero:e} for m={m} d={d}");
                let mut rng = replication_stream(41, (10 * d + m) as u64);
                for _ in 0..1000 {
                    let t: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
                    for s in kernel.anchors().points() {
                        let forward = kernel.r_kernel(s, &t);
                        let backward = kernel.r_kernel(&t, s);
                        ensure!(
                            forward.abs() <= 1e-8 && backward.abs() <= 1e-8,
                            "R at an anchor is {forward:e}/{backward:e} for m={m} d={d}"
                        );
                        checked += 1;
                    }
                }
            }
        }
        Ok(format!("{checked} anchor evaluations"))
    });
}

#[test]
fn criterion_02_budgets_bind_on_random_datasets() {
    criterion("criterion 02 (both budget constraints bind)", 120.0, || {
        for k in 0..50u64 {
            let (data, setup) = random_dataset(k);
            // Both budgets are taken relative to a mid-path fit, so each sits
            // strictly between its endpoint values and is crossed at a
            // moderate weight: J decreases along the path, so half the mid
            // fit's roughness lies inside (0, J(f_1)); the residual rises
            // toward the polynomial's, so the midpoint between the two lies
            // inside (En(f_0), En(f_P)). Neither target ever asks for the
            // near-interpolation end, which the smoothest kernels cannot
            // reach at the largest sizes.
            let mid = err_str(fit_fixed_weight(&data, 1e-4, &setup))?;
            let en_poly = err_str(poly_least_squares(&data, &setup))?.achieved_en;
            ensure!(
                mid.achieved_j > 0.0 && en_poly > mid.achieved_en,
                "dataset {k} is degenerate (mid-path J={:e}, En={:e}, En(f_P)={en_poly:e})",
                mid.achieved_j,
                mid.achieved_en
            );

            let u_n = 0.5 * mid.achieved_j;
            let a = err_str(fit(&data, &Problem::RoughnessBudget { u_n }, &setup))?;
            ensure!(
                (a.achieved_j - u_n).abs() <= 1e-6 * u_n,
                "dataset {k}: roughness budget misses, J={:.9e} vs U_n={u_n:.9e}",
                a.achieved_j
            );

            let s_n = 0.5 * (mid.achieved_en + en_poly);
            let b = err_str(fit(&data, &Problem::ResidualBudget { s_n }, &setup))?;
            ensure!(
                (b.achieved_en - s_n).abs() <= 1e-6 * s_n,
                "dataset {k}: residual budget misses, En={:.9e} vs S_n={s_n:.9e}",
                b.achieved_en
            );
        }
        Ok("50 datasets, both problems bind to 1e-6 relative".into())
    });
}

#[test]
fn criterion_03_duality_roundtrip_reproduces_the_fit() {
    criterion("criterion 03 (residual-to-roughness round trip)", 120.0, || {
        let mut worst = 0.0f64;
        for k in 0..50u64 {
            let (data, setup) = random_dataset(k);
            // Same interior residual budget as the binding test above.
            let en_mid = err_str(fit_fixed_weight(&data, 1e-4, &setup))?.achieved_en;
            let en_poly = err_str(poly_least_squares(&data, &setup))?.achieved_en;
            let s_n = 0.5 * (en_mid + en_poly);
            let (b_fit, a_fit) = err_str(duality_roundtrip(&data, s_n, &setup))?;
            let tol = 1e-5 * y_range(&data);
            for p in data.points() {
                let gap = (err_str(b_fit.model.eval(p))? - err_str(a_fit.model.eval(p))?).abs();
                worst = worst.max(gap / y_range(&data));
                ensure!(gap <= tol, "dataset {k}: fitted values differ by {gap:e} at {p:?}");
            }
        }
        Ok(format!("worst relative gap {worst:.2e}"))
    });
}

#[test]
fn criterion_04_attainable_residual_curve_shape() {
    criterion("criterion 04 (residual-vs-budget curve shape)", 60.0, || {
        for k in 0..10u64 {
            let (data, setup) = lattice_dataset(k);
            let j_interp = err_str(interpolant(&data, &setup))?.achieved_j;
            let en_poly = err_str(poly_least_squares(&data, &setup))?.achieved_en;

            let at_zero = err_str(psi_n(&data, 0.0, &setup))?;
            ensure!(
                (at_zero - en_poly).abs() <= 1e-8,
                "dataset {k}: psi(0)={at_zero:.12e} vs polynomial residual {en_poly:.12e}"
            );

            let mut prev = f64::INFINITY;
            for step in 1..=12u32 {
                let u = j_interp * step as f64 / 13.0;
                let value = err_str(psi_n(&data, u, &setup))?;
                ensure!(
                    value < prev,
                    "dataset {k}: psi not strictly decreasing at budget {u:e} ({value:.9e} >= {prev:.9e})"
                );
                prev = value;
            }

            let n = data.len() as f64;
            let mean = data.y().iter().sum::<f64>() / n;
            let var_y = data.y().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let past_interp = err_str(psi_n(&data, j_interp * 1.01, &setup))?;
            ensure!(
                past_interp <= 1e-10 * var_y,
                "dataset {k}: psi past J(f_1) is {past_interp:e}, var(Y)={var_y:e}"
            );
        }
        Ok("10 datasets, 12 interior budgets each".into())
    });
}

/// Minimizes (1/n)|Y - Pc - Rd|^2 + lambda d'Rd directly. The penalty is
/// factored through R's eigendecomposition, so the whole objective becomes
/// one stacked least-squares problem solved by SVD: no bordered system, no
/// orthogonality constraint, and no normal-equations squaring. Fitted values
/// agree with any other minimizer because the quadratic is convex and
/// strictly so in the fitted values.
fn brute_force_fitted(data: &Dataset, setup: &SplineSetup, lambda: f64) -> Result<Vec<f64>, String> {
    let pts = data.points();
    let n = pts.len();
    let basis = err_str(monomial_basis(setup.m(), setup.dim()))?;
    let width = basis.len();
    let r = setup.kernel().r_matrix(pts);
    let root_n = (n as f64).sqrt();

    let mut stacked = DMatrix::<f64>::zeros(2 * n, n + width);
    let mut rhs = DVector::<f64>::zeros(2 * n);
    for i in 0..n {
        for j in 0..n {
            stacked[(i, j)] = r[(i, j)] / root_n;
        }
        let row = basis.eval_row(&pts[i]);
        for c in 0..width {
            stacked[(i, n + c)] = row[c] / root_n;
        }
        rhs[i] = data.y()[i] / root_n;
    }
    // lambda d'Rd = |sqrt(lambda) L' d|^2 with R = Q diag(ev) Q', L' = diag(sqrt(ev)) Q'.
    let eig = nalgebra::SymmetricEigen::new(r);
    for i in 0..n {
        let weight = (lambda * eig.eigenvalues[i].max(0.0)).sqrt();
        for j in 0..n {
            stacked[(n + i, j)] = weight * eig.eigenvectors[(j, i)];
        }
    }

    let svd = stacked.clone().svd(true, true);
    let cutoff = svd.singular_values.max() * 1e-13;
    let z = svd.solve(&rhs, cutoff).map_err(str::to_owned)?;

    let mut fitted = Vec::with_capacity(n);
    for i in 0..n {
        let mut v = 0.0;
        for j in 0..n + width {
            v += stacked[(i, j)] * z[j];
        }
        fitted.push(v * root_n);
    }
    Ok(fitted)
}

#[test]
fn criterion_05_matches_direct_dense_minimization() {
    criterion("criterion 05 (penalized solve vs direct minimization)", 10.0, || {
        let mut worst = 0.0f64;
        for (case, &n) in [4usize, 6, 8].iter().enumerate() {
            let mut rng = replication_stream(8800, case as u64);
            let points: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>()]).collect();
            let y: Vec<f64> = points
                .iter()
                .map(|p| (3.0 * p[0]).sin() + 0.3 * sample_std_normal(&mut rng))
                .collect();
            let data = Dataset::new(points, y).unwrap();
            let setup = err_str(SplineSetup::new(2, unit_domain(1)))?;
            for &lambda in &[1e-6, 1e-3, 1.0, 1e3] {
                let direct = brute_force_fitted(&data, &setup, lambda)?;
                let solved = err_str(fit_fixed_weight(&data, lambda, &setup))?;
                for (i, p) in data.points().iter().enumerate() {
                    let gap = (err_str(solved.model.eval(p))? - direct[i]).abs();
                    worst = worst.max(gap);
                    ensure!(
                        gap <= 1e-6,
                        "n={n} lambda={lambda:e}: fitted values differ by {gap:e} at point {i}"
                    );
                }
            }
        }
        Ok(format!("worst fitted-value gap {worst:.2e}"))
    });
}

fn eval_partial(model: &SplineModel, x: &[f64], alpha: &[u32]) -> Result<f64, String> {
    if alpha.iter().all(|&a| a == 0) {
        err_str(model.eval(x))
    } else {
        err_str(model.eval_deriv(x, &MultiIndex::new(alpha.to_vec())))
    }
}

/// Probe points paired with a safe finite-difference step: away from every
/// knot, so the stencil never straddles reduced kernel smoothness.
fn probe_points(model: &SplineModel, d: usize, seed: u64) -> Vec<(Vec<f64>, f64)> {
    let mut probes = Vec::new();
    if d == 1 {
        let mut xs: Vec<f64> = model.knots().iter().map(|p| p[0]).collect();
        xs.sort_by(f64::total_cmp);
        for w in xs.windows(2) {
            let gap = w[1] - w[0];
            if gap < 6e-3 || w[0] < 0.01 || w[1] > 0.99 {
                continue;
            }
            for f in [0.35, 0.5, 0.65] {
                probes.push((vec![w[0] + gap * f], gap * 0.0005));
                if probes.len() == 50 {
                    return probes;
                }
            }
        }
    } else {
        let mut rng = replication_stream(6600, seed);
        while probes.len() < 50 {
            let x: Vec<f64> = (0..d).map(|_| 0.05 + 0.9 * rng.random::<f64>()).collect();
            let near = model
                .knots()
                .iter()
                .map(|k| {
                    k.iter()
                        .zip(&x)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(f64::INFINITY, f64::min);
            if near >= 8e-3 {
                probes.push((x, 1e-5));
            }
        }
    }
    probes
}

fn derivative_case(d: usize, m: usize, alphas: &[Vec<u32>]) -> Result<(), String> {
    let mut rng = replication_stream(6611, (10 * d + m) as u64);
    let n = if d == 1 { 30 } else { 40 };
    let points: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| 0.02 + 0.96 * rng.random::<f64>()).collect())
        .collect();
    let y: Vec<f64> = points
        .iter()
        .map(|p| {
            let s: f64 = p.iter().sum();
            (2.5 * s).sin() + 0.4 * p[0] + 0.05 * sample_std_normal(&mut rng)
        })
        .collect();
    let data = Dataset::new(points, y).unwrap();
    let setup = err_str(SplineSetup::new(m, unit_domain(d)))?;
    let fitted = err_str(fit_fixed_weight(&data, 1e-5, &setup))?;
    let model = &fitted.model;

    let probes = probe_points(model, d, (10 * d + m) as u64);
    ensure!(probes.len() == 50, "only {} probe points for d={d} m={m}", probes.len());

    for alpha in alphas {
        let axis = alpha.iter().position(|&a| a > 0).unwrap();
        let mut down = alpha.clone();
        down[axis] -= 1;
        let mut exact = Vec::with_capacity(probes.len());
        let mut approx = Vec::with_capacity(probes.len());
        for (x, h) in &probes {
            let mut plus = x.clone();
            plus[axis] += h;
            let mut minus = x.clone();
            minus[axis] -= h;
            approx.push((eval_partial(model, &plus, &down)? - eval_partial(model, &minus, &down)?) / (2.0 * h));
            exact.push(eval_partial(model, x, alpha)?);
        }
        let scale = exact.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        ensure!(scale > 0.0, "derivative field vanishes for d={d} m={m} alpha={alpha:?}");
        for i in 0..probes.len() {
            let rel = (approx[i] - exact[i]).abs() / exact[i].abs().max(1e-3 * scale);
            ensure!(
                rel <= 1e-5,
                "d={d} m={m} alpha={alpha:?} probe {i}: relative gap {rel:.3e}"
            );
        }
    }
    Ok(())
}

#[test]
fn criterion_06_derivatives_match_finite_differences() {
    criterion("criterion 06 (derivatives vs central differences)", 30.0, || {
        let mut cases = 0usize;
        for m in 2..=4usize {
            let alphas: Vec<Vec<u32>> = (1..=(2 * m - 2) as u32).map(|o| vec![o]).collect();
            derivative_case(1, m, &alphas)?;
            cases += alphas.len();
        }
        let cross: Vec<Vec<u32>> =
            vec![vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]];
        for m in 2..=4usize {
            derivative_case(2, m, &cross)?;
            cases += cross.len();
        }
        Ok(format!("{cases} derivative cases, 50 probes each"))
    });
}

#[test]
fn criterion_07_interpolant_is_flat_outside_the_data() {
    criterion("criterion 07 (no curvature beyond the data range)", 5.0, || {
        let mut rng = replication_stream(7700, 0);
        let n = 12;
        let points: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![0.25 + 0.5 * i as f64 / (n - 1) as f64])
            .collect();
        let y: Vec<f64> = points
            .iter()
            .map(|p| 0.5 * (4.0 * PI * p[0]).sin() + 0.2 * p[0] + 0.05 * sample_std_normal(&mut rng))
            .collect();
        let data = Dataset::new(points, y).unwrap();
        let setup = err_str(SplineSetup::new(2, unit_domain(1)))?;
        let f1 = err_str(interpolant(&data, &setup))?;
        let second = MultiIndex::new(vec![2]);

        let mut inside = 0.0f64;
        for i in 0..25 {
            let x = 0.27 + 0.46 * i as f64 / 24.0;
            inside = inside.max(err_str(f1.model.eval_deriv(&[x], &second))?.abs());
        }
        ensure!(inside > 1.0, "interpolant suspiciously flat inside ({inside:e})");

        let mut outside = 0.0f64;
        for i in 0..12 {
            let left = 0.01 + 0.22 * i as f64 / 11.0;
            let right = 0.77 + 0.22 * i as f64 / 11.0;
            outside = outside.max(err_str(f1.model.eval_deriv(&[left], &second))?.abs());
            outside = outside.max(err_str(f1.model.eval_deriv(&[right], &second))?.abs());
        }
        ensure!(
            outside <= 1e-6 * inside,
            "second derivative outside the data is {outside:e} vs inside scale {inside:e}"
        );
        Ok(format!("outside/inside curvature ratio {:.2e}", outside / inside))
    });
}

fn metric_mean(report: &EimseReport, metric: &str, n: usize) -> Result<f64, String> {
    let row = report
        .rows
        .iter()
        .find(|r| r.method == "b" && r.metric == metric && r.n == n)
        .ok_or_else(|| format!("missing report row for metric {metric}, n={n}"))?;
    if row.failures > 0 {
        return Err(format!("{} replications failed for metric {metric}, n={n}", row.failures));
    }
    // Reports tabulate in per-metric display units; undo that here so the
    // targets below can stay in raw error units.
    Ok(row.mean * row.scale)
}

fn within_factor(value: f64, target: f64, factor: f64) -> bool {
    value >= target / factor && value <= target * factor
}

#[test]
fn criterion_08_queue_study_tracks_published_errors() {
    criterion("criterion 08 (queue study at desk scale)", 900.0, || {
        let full = std::env::var("TPSMOOTH_FULL_BENCH").is_ok_and(|v| v == "1");
        let mut cfg = ExperimentConfig::new(ExperimentKind::Mm1);
        cfg.n_values = Some(vec![15, 25, 35]);
        cfg.methods = Some(vec![MethodSel::B]);
        cfg.replications = Some(if full { 400 } else { 50 });
        cfg.transient_oracle_reps = Some(0);
        cfg.master_seed = 20260818;
        let report = err_str(run_experiment(&cfg))?;

        let value_targets = [(15usize, 1.14e-4), (25, 0.87e-4), (35, 0.67e-4)];
        let mut values = Vec::new();
        for (n, target) in value_targets {
            let mean = metric_mean(&report, "value", n)?;
            ensure!(
                within_factor(mean, target, 3.0),
                "value error at n={n} is {mean:.3e}, outside 3x of {target:.3e}"
            );
            values.push(mean);
        }
        ensure!(
            values[0] >= values[1] && values[1] >= values[2],
            "value error not nonincreasing in n: {values:?}"
        );

        let deriv2_targets = [(15usize, 6.06), (25, 5.07), (35, 4.30)];
        let mut deriv2 = Vec::new();
        for (n, _) in deriv2_targets {
            deriv2.push(metric_mean(&report, "deriv2", n)?);
        }
        for ((n, target), &mean) in deriv2_targets.iter().zip(&deriv2) {
            ensure!(
                within_factor(mean, *target, 3.0),
                "second-derivative error at n={n} is {mean:.3e}, outside 3x of {target:.3e} \
                 (all sizes: measured {deriv2:.3?} vs targets 6.06/5.07/4.30)"
            );
        }
        Ok(format!(
            "value {:.2e}/{:.2e}/{:.2e} at {} replications",
            values[0],
            values[1],
            values[2],
            if full { 400 } else { 50 }
        ))
    });
}

#[test]
fn criterion_09_option_study_tracks_published_errors() {
    criterion("criterion 09 (option study at desk scale)", 1200.0, || {
        let mut cfg = ExperimentConfig::new(ExperimentKind::EuroCall);
        cfg.n_values = Some(vec![15, 25, 35]);
        cfg.methods = Some(vec![MethodSel::B]);
        cfg.replications = Some(50);
        cfg.option.replicates = 500;
        cfg.master_seed = 20260818;
        let report = err_str(run_experiment(&cfg))?;

        // Published errors use 5000 replicates per point; at 500 the variance
        // part of the error scales by the replicate-count ratio.
        let variance_ratio = 5000.0 / 500.0;
        for (n, published) in [(15usize, 1.72e-5), (25, 1.14e-5), (35, 0.88e-5)] {
            let mean = metric_mean(&report, "value", n)?;
            let target = published * variance_ratio;
            ensure!(
                within_factor(mean, target, 5.0),
                "value error at n={n} is {mean:.3e}, outside 5x of rescaled {target:.3e}"
            );
        }

        let mut gammas = Vec::new();
        for n in [15usize, 25, 35] {
            gammas.push(metric_mean(&report, "deriv2", n)?);
        }
        ensure!(
            gammas[0] > gammas[1] && gammas[1] > gammas[2],
            "gamma error not decreasing in n: {gammas:?}"
        );

        let oc = OptionConfig::default();
        let spot = 1.3;
        let mut rng = replication_stream(909, 0);
        let draws = 1_000_000usize;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..draws {
            let p = simulate_euro_call(spot, &oc, &mut rng);
            sum += p;
            sum_sq += p * p;
        }
        let mean = sum / draws as f64;
        let var = (sum_sq / draws as f64 - mean * mean).max(0.0);
        let se = (var / draws as f64).sqrt();
        let exact = bs_price(spot, &oc);
        ensure!(
            (mean - exact).abs() <= 3.0 * se,
            "simulated price {mean:.6e} vs closed form {exact:.6e}, off by {:.2} SE",
            (mean - exact).abs() / se
        );
        Ok(format!(
            "gamma {:.2e}/{:.2e}/{:.2e}, price off by {:.2} SE",
            gammas[0],
            gammas[1],
            gammas[2],
            (mean - exact).abs() / se
        ))
    });
}

#[test]
fn criterion_10_partition_study_improves_with_n() {
    criterion("criterion 10 (partition variance study)", 600.0, || {
        let mut cfg = ExperimentConfig::new(ExperimentKind::Partition);
        cfg.n_values = Some(vec![30, 40, 50]);
        cfg.replications = Some(200);
        cfg.master_seed = 20260818;
        let report = err_str(run_experiment(&cfg))?;

        let mut value = Vec::new();
        let mut curvature = Vec::new();
        for n in [30usize, 40, 50] {
            value.push(metric_mean(&report, "value", n)?);
            curvature.push(metric_mean(&report, "deriv2", n)?);
        }
        ensure!(
            within_factor(value[0], 0.0028, 2.0),
            "value error at n=30 is {:.3e}, outside 2x of 2.8e-3",
            value[0]
        );
        ensure!(
            value[0] > value[1] && value[1] > value[2],
            "value error not strictly decreasing: {value:?}"
        );
        ensure!(
            curvature[0] > curvature[1] && curvature[1] > curvature[2],
            "second-derivative error not strictly decreasing: {curvature:?}"
        );
        Ok(format!(
            "value {:.2e}/{:.2e}/{:.2e}, curvature {:.2}/{:.2}/{:.2}",
            value[0], value[1], value[2], curvature[0], curvature[1], curvature[2]
        ))
    });
}

#[test]
fn criterion_11_error_decays_at_the_stated_rate() {
    criterion("criterion 11 (convergence rate of the budget fit)", 300.0, || {
        let truth = |x: f64| (2.0 * PI * x).sin();
        // Curvature integral of sin(2 pi x) over the unit interval.
        let budget = 8.0 * PI.powi(4);
        let sigma = 0.5;
        let reps = 40u64;
        let sizes = [25usize, 50, 100, 200];
        let setup = err_str(SplineSetup::new(2, unit_domain(1)))?;

        let mut log_n = Vec::new();
        let mut log_rms = Vec::new();
        for (idx, &n) in sizes.iter().enumerate() {
            let pts = design_points(0.0, 1.0, n);
            let mut total_mse = 0.0;
            for rep in 0..reps {
                let mut rng = replication_stream(1111, ((idx as u64) << 32) | rep);
                let y: Vec<f64> = pts
                    .iter()
                    .map(|p| truth(p[0]) + sigma * sample_std_normal(&mut rng))
                    .collect();
                let data = Dataset::new(pts.clone(), y).unwrap();
                let fitresult = err_str(fit_roughness_budget(&data, budget, &setup))?;
                let mse = pts
                    .iter()
                    .map(|p| {
                        let e = fitresult.model.eval(p).unwrap() - truth(p[0]);
                        e * e
                    })
                    .sum::<f64>()
                    / n as f64;
                total_mse += mse;
            }
            log_n.push((n as f64).ln());
            log_rms.push((total_mse / reps as f64).sqrt().ln());
        }

        let mean_x = log_n.iter().sum::<f64>() / log_n.len() as f64;
        let mean_y = log_rms.iter().sum::<f64>() / log_rms.len() as f64;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..log_n.len() {
            num += (log_n[i] - mean_x) * (log_rms[i] - mean_y);
            den += (log_n[i] - mean_x) * (log_n[i] - mean_x);
        }
        let slope = num / den;
        ensure!(
            (slope + 0.4).abs() <= 0.15,
            "log-log error slope is {slope:.3}, want -0.4 +/- 0.15"
        );
        Ok(format!("log-log slope {slope:.3}"))
    });
}
