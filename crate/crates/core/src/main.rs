//! Command-line front end: fit spline models from CSV data, evaluate values
//! and derivatives on grids, estimate residual budgets, and run the
//! simulation benchmarks.
//!
//! Exit codes: 0 success, 2 input or config problems, 3 numerical failures,
//! 4 unsupported derivative orders, 5 model document version mismatches.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand};

use tpsmooth::basis::MultiIndex;
use tpsmooth::bench::{run_experiment, ExperimentConfig, MethodSel};
use tpsmooth::data::{Dataset, DomainBox, SplineSetup};
use tpsmooth::error::{Error, Result};
use tpsmooth::estimator::{cross_validate, default_cv_grid, fit, EdgeCase, Problem};
use tpsmooth::model::SplineModel;
use tpsmooth::variance::{partition_s_n, replicate_s_n, ReplicatedDataset};

#[derive(Parser)]
#[command(
    name = "tpsmooth",
    version,
    about = "Smoothing-spline fits under roughness or residual budgets, \
             derivative evaluation, residual-budget estimation, and \
             simulation benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to CSV data and write its document
    Fit(FitArgs),
    /// Evaluate a model document on a grid or point list
    Eval(EvalArgs),
    /// Estimate the residual budget of CSV data
    EstimateSn(EstimateSnArgs),
    /// Run a benchmark experiment and report error statistics
    Bench(BenchArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Input CSV with header x1..xd,y or x1..xd,rep,y (long replicate format)
    #[arg(long)]
    input: PathBuf,
    /// Formulation: a (roughness budget), b (residual budget), c (fixed weight)
    #[arg(long)]
    problem: String,
    /// Roughness budget for problem a
    #[arg(long)]
    un: Option<f64>,
    /// Residual budget for problem b: a number, or `auto` to estimate it
    /// from replicates when a rep column exists and from a domain partition
    /// otherwise
    #[arg(long)]
    sn: Option<String>,
    /// Smoothing weight for problem c; omit to cross-validate instead
    #[arg(long)]
    lambda: Option<f64>,
    /// Comma-separated weights searched by cross-validation for problem c
    #[arg(long)]
    lambda_grid: Option<String>,
    /// Smoothness order (penalty acts on order-m derivatives)
    #[arg(long, default_value_t = 2)]
    m: usize,
    /// Fit domain as lo:hi[,lo:hi...]; spans the data when omitted
    #[arg(long)]
    domain: Option<String>,
    /// Cells per axis for the partition estimate under --sn auto
    #[arg(long, default_value_t = 5)]
    cells: usize,
    /// Where the model document goes
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Model document written by fit
    #[arg(long)]
    model: PathBuf,
    /// Points per axis of an evaluation lattice (default 101)
    #[arg(long)]
    grid: Option<usize>,
    /// CSV of evaluation points (header x1..xd) instead of a lattice
    #[arg(long)]
    points: Option<PathBuf>,
    /// Lattice domain as lo:hi[,lo:hi...]; the model's domain when omitted
    #[arg(long)]
    domain: Option<String>,
    /// Derivative multi-index like `2` or `1,0`; repeat for more columns
    #[arg(long, action = ArgAction::Append)]
    deriv: Vec<String>,
    /// Output CSV; standard output when omitted
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateSnArgs {
    /// Input CSV with header x1..xd,y or x1..xd,rep,y
    #[arg(long)]
    input: PathBuf,
    /// Cells per axis for the partition estimate (single observations)
    #[arg(long, default_value_t = 5)]
    cells: usize,
    /// Partition domain as lo:hi[,lo:hi...]; spans the data when omitted
    #[arg(long)]
    domain: Option<String>,
}

#[derive(Args)]
struct BenchArgs {
    /// TOML experiment config; the flags below override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// Experiment to run: mm1, option, or partition
    #[arg(long)]
    experiment: Option<String>,
    /// Comma-separated design sizes
    #[arg(long)]
    n: Option<String>,
    /// Comma-separated methods among a, b, c-cv, c-fixed
    #[arg(long)]
    methods: Option<String>,
    /// Replications per design size
    #[arg(long)]
    reps: Option<usize>,
    /// Master seed; every replication derives its own stream from it
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated numerators for c-fixed (each fits weight value/n)
    #[arg(long)]
    lambda_fixed: Option<String>,
    /// Runs per design point tabulating the finite-horizon wait (mm1 only;
    /// 0 disables the transient metric)
    #[arg(long)]
    transient_oracle_reps: Option<usize>,
    /// Output CSV; standard output when omitted
    #[arg(long)]
    output: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Eval(args) => cmd_eval(args),
        Command::EstimateSn(args) => cmd_estimate_sn(args),
        Command::Bench(args) => cmd_bench(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::UnsupportedDerivative { .. } => 4,
        Error::VersionMismatch { .. } => 5,
        Error::SingularSystem { .. }
        | Error::RootFindFailed { .. }
        | Error::AnchorSelectionFailed { .. }
        | Error::NotUnisolvent { .. } => 3,
        _ => 2,
    }
}

fn io_err(path: &Path, err: std::io::Error) -> Error {
    Error::InvalidParameter(format!("{}: {err}", path.display()))
}

/// Writes through a temp file in the same directory so a failure never
/// leaves a partial file at the destination.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidParameter(format!("{}: not a file path", path.display())))?
        .to_string_lossy()
        .into_owned();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    fs::write(&tmp, contents).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io_err(path, e)
    })
}

/// Prints to stdout or writes atomically, depending on whether --output was
/// given. Content is fully built before either, so failures cannot truncate.
fn emit(output: &Option<PathBuf>, contents: &str) -> Result<()> {
    match output {
        Some(path) => write_atomic(path, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn parse_number(field: &str, row: usize, col: &str) -> Result<f64> {
    let v: f64 = field.parse().map_err(|_| {
        Error::InvalidParameter(format!(
            "data row {row}, column `{col}`: cannot parse `{field}` as a number"
        ))
    })?;
    if !v.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "data row {row}, column `{col}`: value `{field}` is not finite"
        )));
    }
    Ok(v)
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|part| {
            part.trim().parse::<T>().map_err(|_| {
                Error::InvalidParameter(format!("cannot parse `{part}` as {what}"))
            })
        })
        .collect()
}

/// lo:hi per axis, comma-separated.
fn parse_domain(s: &str) -> Result<DomainBox> {
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for (k, part) in s.split(',').enumerate() {
        let (a, b) = part.split_once(':').ok_or_else(|| {
            Error::InvalidParameter(format!(
                "domain segment {} `{part}` is not of the form lo:hi",
                k + 1
            ))
        })?;
        let parse = |t: &str| -> Result<f64> {
            t.trim().parse().map_err(|_| {
                Error::InvalidParameter(format!(
                    "domain segment {} `{part}`: cannot parse `{t}` as a number",
                    k + 1
                ))
            })
        };
        lo.push(parse(a)?);
        hi.push(parse(b)?);
    }
    DomainBox::new(lo, hi)
}

fn parse_deriv(s: &str, dim: usize) -> Result<MultiIndex> {
    let orders: Vec<u32> = parse_list(s, "a derivative order")?;
    if orders.len() != dim {
        return Err(Error::InvalidParameter(format!(
            "--deriv `{s}` has {} entries for a {dim}-dimensional model",
            orders.len()
        )));
    }
    Ok(MultiIndex::new(orders))
}

enum InputData {
    Plain(Dataset),
    Replicated(ReplicatedDataset),
}

/// Reads x1..xd,y or x1..xd,rep,y. With a rep column, rows sharing the same
/// coordinates form one point's replicates, grouped in first-appearance
/// order; the rep value itself only marks the format.
fn read_input(path: &Path) -> Result<InputData> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();

    if headers.len() < 2 || headers.last().map(String::as_str) != Some("y") {
        return Err(Error::InvalidParameter(
            "header must list x1..xd, an optional rep column, then y last".into(),
        ));
    }
    let coord_end = headers.len() - 1;
    let has_rep = headers[coord_end - 1] == "rep";
    let dim = if has_rep { coord_end - 1 } else { coord_end };
    if dim == 0 {
        return Err(Error::InvalidParameter("no coordinate columns before y".into()));
    }
    for (k, h) in headers[..dim].iter().enumerate() {
        let want = format!("x{}", k + 1);
        if *h != want {
            return Err(Error::InvalidParameter(format!(
                "header column {}: expected `{want}`, found `{h}`",
                k + 1
            )));
        }
    }

    let mut plain_points = Vec::new();
    let mut plain_y = Vec::new();
    let mut group_index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut rep_points: Vec<Vec<f64>> = Vec::new();
    let mut rep_y: Vec<Vec<f64>> = Vec::new();

    for (ridx, record) in rdr.records().enumerate() {
        let row = ridx + 1;
        let record =
            record.map_err(|e| Error::InvalidParameter(format!("data row {row}: {e}")))?;
        if record.len() != headers.len() {
            return Err(Error::InvalidParameter(format!(
                "data row {row}: expected {} fields, found {}",
                headers.len(),
                record.len()
            )));
        }
        let mut x = Vec::with_capacity(dim);
        for k in 0..dim {
            x.push(parse_number(&record[k], row, &headers[k])?);
        }
        if has_rep {
            parse_number(&record[dim], row, "rep")?;
        }
        let y = parse_number(&record[headers.len() - 1], row, "y")?;
        if has_rep {
            let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
            match group_index.get(&key) {
                Some(&idx) => rep_y[idx].push(y),
                None => {
                    group_index.insert(key, rep_points.len());
                    rep_points.push(x);
                    rep_y.push(vec![y]);
                }
            }
        } else {
            plain_points.push(x);
            plain_y.push(y);
        }
    }

    if has_rep {
        Ok(InputData::Replicated(ReplicatedDataset::new(rep_points, rep_y)?))
    } else {
        Ok(InputData::Plain(Dataset::new(plain_points, plain_y)?))
    }
}

/// Evaluation points: header x1..xd only.
fn read_points(path: &Path, dim: usize) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();
    if headers.len() != dim {
        return Err(Error::InvalidParameter(format!(
            "points file has {} columns for a {dim}-dimensional model",
            headers.len()
        )));
    }
    for (k, h) in headers.iter().enumerate() {
        let want = format!("x{}", k + 1);
        if *h != want {
            return Err(Error::InvalidParameter(format!(
                "header column {}: expected `{want}`, found `{h}`",
                k + 1
            )));
        }
    }
    let mut out = Vec::new();
    for (ridx, record) in rdr.records().enumerate() {
        let row = ridx + 1;
        let record =
            record.map_err(|e| Error::InvalidParameter(format!("data row {row}: {e}")))?;
        let mut x = Vec::with_capacity(dim);
        for k in 0..dim {
            x.push(parse_number(&record[k], row, &headers[k])?);
        }
        out.push(x);
    }
    if out.is_empty() {
        return Err(Error::InvalidParameter("points file has no data rows".into()));
    }
    Ok(out)
}

fn require_nonnegative(value: f64, flag: &str) -> Result<f64> {
    if !(value.is_finite() && value >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "{flag} must be nonnegative and finite, got {value}"
        )));
    }
    Ok(value)
}

fn forbid(flag_set: bool, flag: &str, problem: &str) -> Result<()> {
    if flag_set {
        return Err(Error::InvalidParameter(format!(
            "problem {problem} does not take {flag}"
        )));
    }
    Ok(())
}

fn cmd_fit(args: &FitArgs) -> Result<()> {
    let input = read_input(&args.input)?;
    let (data, replicated) = match input {
        InputData::Plain(d) => (d, None),
        InputData::Replicated(rd) => (rd.collapse(), Some(rd)),
    };
    let domain = match &args.domain {
        Some(s) => parse_domain(s)?,
        None => DomainBox::bounding(data.points(), 0.0)?,
    };
    if domain.dim() != data.dim() {
        return Err(Error::DimensionMismatch { expected: data.dim(), got: domain.dim() });
    }
    let setup = SplineSetup::new(args.m, domain.clone())?;

    // Inside the library points are indexed; at the command line the user
    // thinks in CSV rows (or replicate groups), so re-word duplicate reports.
    let name_rows = |e: Error| match e {
        Error::DuplicatePoints { i, j } => {
            let what = if replicated.is_some() { "point groups" } else { "data rows" };
            Error::InvalidParameter(format!(
                "{what} {} and {} have identical coordinates",
                i + 1,
                j + 1
            ))
        }
        other => other,
    };

    let mut sn_line = None;
    let mut lambda_cv_line = None;
    let problem = match args.problem.as_str() {
        "a" => {
            forbid(args.sn.is_some(), "--sn", "a")?;
            forbid(args.lambda.is_some(), "--lambda", "a")?;
            forbid(args.lambda_grid.is_some(), "--lambda-grid", "a")?;
            let u_n = args.un.ok_or_else(|| {
                Error::InvalidParameter("problem a needs --un (roughness budget)".into())
            })?;
            Problem::RoughnessBudget { u_n: require_nonnegative(u_n, "--un")? }
        }
        "b" => {
            forbid(args.un.is_some(), "--un", "b")?;
            forbid(args.lambda.is_some(), "--lambda", "b")?;
            forbid(args.lambda_grid.is_some(), "--lambda-grid", "b")?;
            let sn = args.sn.as_deref().ok_or_else(|| {
                Error::InvalidParameter(
                    "problem b needs --sn (residual budget, a number or `auto`)".into(),
                )
            })?;
            let s_n = if sn == "auto" {
                match &replicated {
                    Some(rd) => {
                        let est = replicate_s_n(rd)?;
                        sn_line = Some(format!(
                            "s_n: {:.16e} (replicate estimate, r = {})",
                            est.s_n,
                            rd.r()
                        ));
                        est.s_n
                    }
                    None => {
                        let est = partition_s_n(&data, &domain, args.cells)?;
                        sn_line = Some(format!(
                            "s_n: {:.16e} (partition estimate, {} cells per axis, {} used, {} skipped)",
                            est.s_n, args.cells, est.cells_used, est.cells_skipped
                        ));
                        est.s_n
                    }
                }
            } else {
                let v: f64 = sn.parse().map_err(|_| {
                    Error::InvalidParameter(format!(
                        "--sn must be a number or `auto`, got `{sn}`"
                    ))
                })?;
                let v = require_nonnegative(v, "--sn")?;
                sn_line = Some(format!("s_n: {v:.16e} (given)"));
                v
            };
            Problem::ResidualBudget { s_n }
        }
        "c" => {
            forbid(args.un.is_some(), "--un", "c")?;
            forbid(args.sn.is_some(), "--sn", "c")?;
            match args.lambda {
                Some(l) => {
                    forbid(args.lambda_grid.is_some(), "--lambda-grid", "c with --lambda")?;
                    Problem::FixedWeight { lambda: require_nonnegative(l, "--lambda")? }
                }
                None => {
                    let grid = match &args.lambda_grid {
                        Some(s) => parse_list::<f64>(s, "a smoothing weight")?,
                        None => default_cv_grid(),
                    };
                    let cv = cross_validate(&data, &grid, &setup).map_err(name_rows)?;
                    lambda_cv_line = Some(format!("lambda_cv: {:.6e}", cv.lambda));
                    Problem::FixedWeight { lambda: cv.lambda }
                }
            }
        }
        other => {
            return Err(Error::InvalidParameter(format!(
                "--problem must be a, b, or c, got `{other}`"
            )));
        }
    };

    let result = fit(&data, &problem, &setup).map_err(name_rows)?;
    let document = result.model.to_document();
    write_atomic(&args.output, &document)?;

    println!("problem: {}", args.problem);
    println!("points: {} (d = {})", data.len(), data.dim());
    println!("m: {}", args.m);
    if let Some(line) = sn_line {
        println!("{line}");
    }
    if let Some(line) = lambda_cv_line {
        println!("{line}");
    }
    println!("achieved_en: {:.16e}", result.achieved_en);
    println!("achieved_j: {:.16e}", result.achieved_j);
    println!("lambda_star: {:.6e}", result.lambda_star);
    println!("iterations: {}", result.iterations);
    let edge = match result.edge_case {
        Some(EdgeCase::InterpolantRegime) => "interpolant-regime",
        Some(EdgeCase::PolynomialRegime) => "polynomial-regime",
        None => "none",
    };
    println!("edge_case: {edge}");
    println!("ridge_fallback: {}", result.ridge_fallback);
    println!("model: {}", args.output.display());
    Ok(())
}

/// Lattice with `n` points per axis, endpoints included, axis 0 varying
/// slowest; a single point per axis sits at the midpoint.
fn grid_points(domain: &DomainBox, n: usize) -> Vec<Vec<f64>> {
    let d = domain.dim();
    let axis: Vec<Vec<f64>> = (0..d)
        .map(|k| {
            let (lo, hi) = (domain.lo()[k], domain.hi()[k]);
            if n == 1 {
                vec![0.5 * (lo + hi)]
            } else {
                (0..n)
                    .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                    .collect()
            }
        })
        .collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; d];
    'all: loop {
        out.push((0..d).map(|k| axis[k][idx[k]]).collect());
        let mut k = d - 1;
        loop {
            idx[k] += 1;
            if idx[k] < n {
                break;
            }
            idx[k] = 0;
            if k == 0 {
                break 'all;
            }
            k -= 1;
        }
    }
    out
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let text = fs::read_to_string(&args.model).map_err(|e| io_err(&args.model, e))?;
    let model = SplineModel::from_document(&text)?;
    let dim = model.dim();

    let alphas: Vec<MultiIndex> = args
        .deriv
        .iter()
        .map(|s| parse_deriv(s, dim))
        .collect::<Result<_>>()?;

    let points = match &args.points {
        Some(path) => {
            if args.grid.is_some() || args.domain.is_some() {
                return Err(Error::InvalidParameter(
                    "--points excludes --grid and --domain".into(),
                ));
            }
            read_points(path, dim)?
        }
        None => {
            let n = args.grid.unwrap_or(101);
            if n == 0 {
                return Err(Error::InvalidParameter("--grid must be positive".into()));
            }
            let domain = match &args.domain {
                Some(s) => {
                    let d = parse_domain(s)?;
                    if d.dim() != dim {
                        return Err(Error::DimensionMismatch { expected: dim, got: d.dim() });
                    }
                    d
                }
                None => model.setup().domain().clone(),
            };
            grid_points(&domain, n)
        }
    };

    let mut csv = (1..=dim).map(|k| format!("x{k}")).collect::<Vec<_>>().join(",");
    csv.push_str(",value");
    for a in &alphas {
        let tag: Vec<String> = a.exponents().iter().map(u32::to_string).collect();
        csv.push_str(&format!(",deriv_{}", tag.join("_")));
    }
    csv.push('\n');
    for x in &points {
        for (k, v) in x.iter().enumerate() {
            if k > 0 {
                csv.push(',');
            }
            csv.push_str(&format!("{v:.16e}"));
        }
        csv.push_str(&format!(",{:.16e}", model.eval(x)?));
        for a in &alphas {
            csv.push_str(&format!(",{:.16e}", model.eval_deriv(x, a)?));
        }
        csv.push('\n');
    }
    emit(&args.output, &csv)
}

fn cmd_estimate_sn(args: &EstimateSnArgs) -> Result<()> {
    match read_input(&args.input)? {
        InputData::Replicated(rd) => {
            let est = replicate_s_n(&rd)?;
            println!("estimator: replicate");
            println!("points: {} (d = {})", rd.len(), rd.dim());
            println!("r: {}", rd.r());
            println!("s_n: {:.16e}", est.s_n);
        }
        InputData::Plain(data) => {
            let domain = match &args.domain {
                Some(s) => parse_domain(s)?,
                None => DomainBox::bounding(data.points(), 0.0)?,
            };
            let est = partition_s_n(&data, &domain, args.cells)?;
            println!("estimator: partition");
            println!("points: {} (d = {})", data.len(), data.dim());
            println!("cells_per_axis: {}", args.cells);
            println!("cells_used: {}", est.cells_used);
            println!("cells_skipped: {}", est.cells_skipped);
            println!("s_n: {:.16e}", est.s_n);
        }
    }
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            toml::from_str::<ExperimentConfig>(&text)
                .map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?
        }
        None => {
            let kind = args.experiment.as_deref().ok_or_else(|| {
                Error::InvalidParameter("bench needs --experiment or --config".into())
            })?;
            ExperimentConfig::new(kind.parse()?)
        }
    };
    if args.config.is_some() {
        if let Some(kind) = &args.experiment {
            cfg.experiment = kind.parse()?;
        }
    }
    if let Some(s) = &args.n {
        cfg.n_values = Some(parse_list(s, "a design size")?);
    }
    if let Some(s) = &args.methods {
        let sels: Vec<MethodSel> = s
            .split(',')
            .map(|part| part.trim().parse())
            .collect::<Result<_>>()?;
        cfg.methods = Some(sels);
    }
    if let Some(reps) = args.reps {
        cfg.replications = Some(reps);
    }
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(s) = &args.lambda_fixed {
        cfg.lambda_fixed = Some(parse_list(s, "a weight numerator")?);
    }
    if let Some(reps) = args.transient_oracle_reps {
        cfg.transient_oracle_reps = Some(reps);
    }

    let report = run_experiment(&cfg)?;
    emit(&args.output, &report.to_csv())
}
