mod plot;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use spectral_shift::diagnostics;
use spectral_shift::filters::{landweber_lambda_grid, verify_filter_conditions, TABULATED_NU};
use spectral_shift::metrics::{estimate_rate, read_records, run_experiment, write_records};
use spectral_shift::{
    fit, Dataset, Error, ExperimentConfig, FilterKind, FilterSpec, KernelSpec, Predictor, Schedule, ShiftSpec,
    SpectralEstimator, WeightScheme,
};

const EXIT_USAGE: u8 = 1;
const EXIT_NUMERIC: u8 = 2;
const EXIT_CHECK_FAILED: u8 = 3;

#[derive(Parser)]
#[command(name = "spectral-shift", version, about = "Weighted spectral regression under covariate shift")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to a CSV dataset with columns x, y and optionally w.
    Fit(FitArgs),
    /// Evaluate a saved model.
    Predict(PredictArgs),
    /// Run a sample-size sweep from a JSON config.
    Simulate(SimulateArgs),
    /// Fit log-log rates to a results CSV and compare with the theorem exponent.
    Rates(RatesArgs),
    /// Run the operator-inequality suites.
    Diagnose(DiagnoseArgs),
    /// Verify the filter conditions on dense grids.
    FiltersCheck(FiltersArgs),
    /// Draw median risk against n on log-log axes as SVG.
    Plot(PlotArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Rbf,
    Basis,
}

#[derive(Clone, Copy, ValueEnum)]
enum FilterArg {
    Tikhonov,
    Landweber,
    Cutoff,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Unweighted,
    Exact,
    Normalized,
    Clipped,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    None,
    Bounded,
    Log,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "rbf")]
    kernel: KernelArg,
    /// Gaussian kernel bandwidth.
    #[arg(long, default_value_t = 0.2)]
    bandwidth: f64,
    /// Basis kernel eigenvalue decay `μ_k = k^{-1/beta}`.
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    /// Basis kernel truncation.
    #[arg(long, default_value_t = 64)]
    m: usize,
    #[arg(long, value_enum, default_value = "tikhonov")]
    filter: FilterArg,
    /// Landweber step count; sets lambda = 1/t.
    #[arg(long)]
    t: Option<u32>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_enum, default_value = "normalized")]
    scheme: SchemeArg,
    /// Clipping threshold for the clipped scheme.
    #[arg(long)]
    d_n: Option<f64>,
    /// Shift used to compute w when the dataset has no w column.
    #[arg(long, value_enum, default_value = "none")]
    shift: FamilyArg,
    /// Amplitude of the bounded shift.
    #[arg(long, default_value_t = 0.5)]
    a: f64,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Comma-separated inputs.
    #[arg(long, value_delimiter = ',', conflicts_with = "points")]
    x: Vec<f64>,
    /// CSV file with an x column.
    #[arg(long)]
    points: Option<PathBuf>,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long)]
    jobs: Option<usize>,
    /// Record wall time per cell (makes the CSV run-dependent).
    #[arg(long)]
    timing: bool,
    /// Results CSV; overrides the config's output.results.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RatesArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_parser = parse_schedule)]
    theorem: Schedule,
    #[arg(long)]
    r: f64,
    #[arg(long)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    /// Only fit this scheme.
    #[arg(long)]
    scheme: Option<String>,
    /// Fail (exit 3) when |slope/2 − theory| exceeds this.
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Write the table here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FiltersArgs {
    /// Points per grid axis.
    #[arg(long, default_value_t = 1000)]
    grid: u32,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn parse_schedule(s: &str) -> Result<Schedule, String> {
    Schedule::parse(s).map_err(|e| e.to_string())
}

/// Outcome of a subcommand that can fail its own check.
enum Verdict {
    Ok,
    CheckFailed,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(Verdict::Ok) => ExitCode::SUCCESS,
        Ok(Verdict::CheckFailed) => ExitCode::from(EXIT_CHECK_FAILED),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { EXIT_NUMERIC } else { EXIT_USAGE })
        }
    }
}

fn run(command: Command) -> spectral_shift::Result<Verdict> {
    match command {
        Command::Fit(a) => cmd_fit(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Rates(a) => cmd_rates(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::FiltersCheck(a) => cmd_filters(a),
        Command::Plot(a) => cmd_plot(a),
    }
}

fn create(path: &Path) -> spectral_shift::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim() == name)
}

fn parse_cell(row: &csv::StringRecord, idx: usize, name: &str, line: usize) -> spectral_shift::Result<f64> {
    let s = row.get(idx).unwrap_or("").trim();
    s.parse()
        .map_err(|_| Error::Contract(format!("row {line}: column {name} holds {s:?}, not a number")))
}

fn read_dataset(path: &Path, shift: &ShiftSpec) -> spectral_shift::Result<Dataset> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let ix = column(&headers, "x").ok_or_else(|| Error::Contract("dataset has no x column".into()))?;
    let iy = column(&headers, "y").ok_or_else(|| Error::Contract("dataset has no y column".into()))?;
    let iw = column(&headers, "w");
    let (mut x, mut y, mut w) = (Vec::new(), Vec::new(), Vec::new());
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let xi = parse_cell(&row, ix, "x", line + 2)?;
        x.push(xi);
        y.push(parse_cell(&row, iy, "y", line + 2)?);
        w.push(match iw {
            Some(i) => parse_cell(&row, i, "w", line + 2)?,
            None => shift.density_ratio(xi)?,
        });
    }
    Dataset::new(x, y, w)
}

fn cmd_fit(a: FitArgs) -> spectral_shift::Result<Verdict> {
    let shift = match a.shift {
        FamilyArg::None => ShiftSpec::none(),
        FamilyArg::Bounded => ShiftSpec::bounded(a.a)?,
        FamilyArg::Log => ShiftSpec::log(),
    };
    let data = read_dataset(&a.data, &shift)?;
    let kernel = match a.kernel {
        KernelArg::Rbf => KernelSpec::gaussian_rbf(a.bandwidth)?,
        KernelArg::Basis => {
            if !(a.beta > 0.0 && a.beta <= 1.0) {
                return Err(Error::Contract(format!("beta must lie in (0, 1], got {}", a.beta)));
            }
            KernelSpec::truncated_basis((1..=a.m).map(|k| (k as f64).powf(-1.0 / a.beta)).collect())?
        }
    };
    let (filter, lambda) = match (a.filter, a.t, a.lambda) {
        (FilterArg::Landweber, Some(t), None) => (FilterSpec::new(FilterKind::Landweber { t })?, 1.0 / t as f64),
        (FilterArg::Landweber, None, Some(l)) => FilterSpec::landweber_for_lambda(l)?,
        (FilterArg::Landweber, _, _) => {
            return Err(Error::Contract("Landweber needs exactly one of --t and --lambda".into()))
        }
        (_, Some(_), _) => return Err(Error::Contract("--t only applies to Landweber".into())),
        (FilterArg::Tikhonov, None, l) => (FilterSpec::tikhonov(), require_lambda(l)?),
        (FilterArg::Cutoff, None, l) => (FilterSpec::spectral_cutoff(), require_lambda(l)?),
    };
    let scheme = match (a.scheme, a.d_n) {
        (SchemeArg::Clipped, Some(d_n)) => WeightScheme::Clipped { d_n },
        (SchemeArg::Clipped, None) => return Err(Error::Contract("clipped scheme needs --d-n".into())),
        (_, Some(_)) => return Err(Error::Contract("--d-n only applies to the clipped scheme".into())),
        (SchemeArg::Unweighted, None) => WeightScheme::Unweighted,
        (SchemeArg::Exact, None) => WeightScheme::Exact,
        (SchemeArg::Normalized, None) => WeightScheme::Normalized,
    };
    let est = fit(&data, &kernel, &filter, lambda, scheme)?;
    let mut out = create(&a.out)?;
    out.write_all(est.to_json()?.as_bytes())?;
    out.write_all(b"\n")?;
    out.flush()?;
    eprintln!("fitted {} points with {} ({}), lambda = {lambda}", data.len(), filter.kind().tag(), scheme.tag());
    Ok(Verdict::Ok)
}

fn require_lambda(lambda: Option<f64>) -> spectral_shift::Result<f64> {
    lambda.ok_or_else(|| Error::Contract("--lambda is required".into()))
}

fn cmd_predict(a: PredictArgs) -> spectral_shift::Result<Verdict> {
    let est = SpectralEstimator::from_json(&std::fs::read_to_string(&a.model)?)?;
    let xs = match &a.points {
        Some(path) => {
            let mut rdr = csv::Reader::from_path(path)?;
            let ix = column(rdr.headers()?, "x").ok_or_else(|| Error::Contract("points file has no x column".into()))?;
            let mut xs = Vec::new();
            for (line, row) in rdr.records().enumerate() {
                xs.push(parse_cell(&row?, ix, "x", line + 2)?);
            }
            xs
        }
        None => a.x.clone(),
    };
    if xs.is_empty() {
        return Err(Error::Contract("no prediction inputs; pass --x or --points".into()));
    }
    let preds = est.predict_many(&xs)?;
    let sink: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(sink);
    w.write_record(["x", "prediction"])?;
    for (x, p) in xs.iter().zip(&preds) {
        w.write_record([x.to_string(), p.to_string()])?;
    }
    w.flush()?;
    Ok(Verdict::Ok)
}

fn cmd_simulate(a: SimulateArgs) -> spectral_shift::Result<Verdict> {
    let config = ExperimentConfig::load(&a.config)?;
    let path = a
        .out
        .clone()
        .or_else(|| config.output.results.clone())
        .ok_or_else(|| Error::Contract("no results path: set output.results or pass --out".into()))?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = a.jobs {
        if jobs == 0 {
            return Err(Error::Contract("--jobs must be positive".into()));
        }
        builder = builder.num_threads(jobs);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Contract(format!("cannot start worker pool: {e}")))?;
    let records = pool.install(|| run_experiment(&config, a.timing))?;
    write_records(create(&path)?, &records)?;
    let failed = records.iter().filter(|r| !r.is_ok()).count();
    eprintln!("wrote {} rows to {} ({failed} failed cells)", records.len(), path.display());
    if let Some(plot_path) = &config.output.plot {
        let svg = plot::render(&records)?;
        std::fs::write(plot_path, svg)?;
    }
    Ok(Verdict::Ok)
}

fn cmd_rates(a: RatesArgs) -> spectral_shift::Result<Verdict> {
    let records = read_records(File::open(&a.input)?)?;
    let theory = a.theorem.norm_rate_exponent(a.r, a.beta, a.alpha, a.epsilon)?;
    let mut schemes: Vec<String> = records.iter().map(|r| r.scheme.clone()).collect();
    schemes.sort();
    schemes.dedup();
    if let Some(s) = &a.scheme {
        schemes.retain(|x| x == s);
        if schemes.is_empty() {
            return Err(Error::Contract(format!("no rows for scheme {s:?}")));
        }
    }
    println!("theorem {} exponent for the norm: {theory:.4}", a.theorem.tag());
    println!("scheme,slope,stderr,slope/2,theory,difference");
    let mut verdict = Verdict::Ok;
    for scheme in &schemes {
        let subset: Vec<_> = records.iter().filter(|r| &r.scheme == scheme).cloned().collect();
        let rep = estimate_rate(&subset)?;
        let diff = rep.norm_slope - theory;
        println!(
            "{scheme},{:.4},{:.4},{:.4},{theory:.4},{diff:+.4}",
            rep.slope, rep.stderr, rep.norm_slope
        );
        if a.tolerance.is_some_and(|tol| diff.abs() > tol) {
            verdict = Verdict::CheckFailed;
        }
    }
    Ok(verdict)
}

fn cmd_diagnose(a: DiagnoseArgs) -> spectral_shift::Result<Verdict> {
    let summaries = diagnostics::run_all(a.seed)?;
    let mut buf = Vec::new();
    {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut buf);
        w.write_record(["suite", "cases", "failures", "worst_ratio", "status"])?;
        for s in &summaries {
            w.write_record([
                s.suite.to_string(),
                s.cases.to_string(),
                s.failures.to_string(),
                format!("{:.6}", s.worst_ratio),
                if s.pass() { "PASS" } else { "FAIL" }.to_string(),
            ])?;
        }
        w.flush()?;
    }
    io::stdout().write_all(&buf)?;
    if let Some(p) = &a.out {
        std::fs::write(p, &buf)?;
    }
    let mut verdict = Verdict::Ok;
    for s in summaries.iter().filter(|s| !s.pass()) {
        eprintln!("{} counterexample:\n{}", s.suite, s.counterexample.as_deref().unwrap_or("(none)"));
        verdict = Verdict::CheckFailed;
    }
    Ok(verdict)
}

fn cmd_filters(a: FiltersArgs) -> spectral_shift::Result<Verdict> {
    if a.grid < 2 {
        return Err(Error::Contract("--grid must be at least 2".into()));
    }
    let count = a.grid as usize;
    let u_grid: Vec<f64> = (0..count).map(|i| i as f64 / (count - 1) as f64).collect();
    let log_lambda: Vec<f64> = (0..count)
        .map(|i| 10f64.powf(-4.0 + 4.0 * i as f64 / (count - 1) as f64))
        .collect();
    let filters = [
        (FilterSpec::tikhonov(), log_lambda.clone()),
        (FilterSpec::spectral_cutoff(), log_lambda),
        (FilterSpec::landweber(1)?, landweber_lambda_grid(a.grid)),
    ];
    println!("filter,b,qualification,bound_ratio,product_ratio,worst_residual_ratio,status");
    let mut verdict = Verdict::Ok;
    for (filter, grid) in &filters {
        let rep = verify_filter_conditions(filter, grid, &u_grid, &TABULATED_NU)?;
        let name = match filter.kind() {
            FilterKind::Landweber { .. } => "landweber".to_string(),
            _ => rep.filter.clone(),
        };
        println!(
            "{name},{},{},{:.6},{:.6},{:.6},{}",
            filter.b(),
            filter.qualification(),
            rep.bound_ratio,
            rep.product_ratio,
            rep.worst_residual_ratio(),
            if rep.pass { "PASS" } else { "FAIL" }
        );
        if !rep.pass {
            verdict = Verdict::CheckFailed;
        }
    }
    Ok(verdict)
}

fn cmd_plot(a: PlotArgs) -> spectral_shift::Result<Verdict> {
    let records = read_records(File::open(&a.input)?)?;
    let svg = plot::render(&records)?;
    let mut out = create(&a.out)?;
    out.write_all(svg.as_bytes())?;
    out.flush()?;
    Ok(Verdict::Ok)
}
