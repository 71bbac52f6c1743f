//! Excess risk, effective dimension, sample-size sweeps and rate fits.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, SchemeChoice};
use crate::error::{contract, Error, Result};
use crate::estimator::{fit_basis, Dataset, Predictor, SpectralEstimator};
use crate::synthetic::SyntheticProblem;

/// `‖f − f_ρ‖²` for a function given by its basis coefficients.
pub fn excess_risk_coeffs(coeffs: &[f64], problem: &SyntheticProblem) -> Result<f64> {
    contract!(
        coeffs.len() == problem.m,
        "expected {} basis coefficients, got {}",
        problem.m,
        coeffs.len()
    );
    Ok(coeffs.iter().zip(problem.f_rho_coeffs()).map(|(b, f)| (b - f) * (b - f)).sum())
}

/// `‖f − f_ρ‖²` under the test marginal, exact through the basis expansion.
pub fn excess_risk_exact(est: &SpectralEstimator, problem: &SyntheticProblem) -> Result<f64> {
    contract!(&est.kernel == problem.kernel(), "estimator kernel differs from the problem kernel");
    let coeffs = est
        .basis_coefficients()
        .ok_or_else(|| Error::Contract("estimator kernel has no basis expansion".into()))?;
    excess_risk_coeffs(&coeffs, problem)
}

/// Monte-Carlo estimate of the excess risk and its standard error.
pub fn excess_risk_mc<P: Predictor + ?Sized>(
    est: &P,
    problem: &SyntheticProblem,
    n_test: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    contract!(n_test >= 2, "need at least two test points, got {n_test}");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sq = Vec::with_capacity(n_test);
    for _ in 0..n_test {
        let x: f64 = rng.random();
        let d = est.predict(x)? - problem.f_rho(x)?;
        sq.push(d * d);
    }
    let n = n_test as f64;
    let mean = sq.iter().sum::<f64>() / n;
    let var = sq.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// `N(λ) = Σ_k μ_k / (λ + μ_k)`.
pub fn effective_dimension_of(mu: &[f64], lambda: f64) -> Result<f64> {
    contract!(lambda > 0.0 && lambda.is_finite(), "lambda must be positive, got {lambda}");
    Ok(mu.iter().map(|m| m / (lambda + m)).sum())
}

pub fn effective_dimension(problem: &SyntheticProblem, lambda: f64) -> Result<f64> {
    effective_dimension_of(&problem.mu, lambda)
}

/// `count` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(count >= 2 && lo > 0.0 && hi > lo);
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// `max_λ N(λ) λ^β` over the grid divided by its value at `λ_ref`.
pub fn capacity_ratio(mu: &[f64], beta: f64, grid: &[f64], lambda_ref: f64) -> Result<f64> {
    let scaled = |l: f64| effective_dimension_of(mu, l).map(|n| n * l.powf(beta));
    let reference = scaled(lambda_ref)?;
    let mut worst = reference;
    for &l in grid {
        worst = worst.max(scaled(l)?);
    }
    Ok(worst / reference)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRecord {
    pub n: usize,
    pub trial: usize,
    pub scheme: String,
    pub filter: String,
    pub lambda: f64,
    #[serde(rename = "D_n")]
    pub d_n: Option<f64>,
    pub risk: Option<f64>,
    /// `ok`, or `error: <message>` for cells that failed.
    pub status: String,
    pub wall_ms: Option<f64>,
}

impl RiskRecord {
    pub fn is_ok(&self) -> bool {
        self.status == "ok" && self.risk.is_some()
    }

    fn key(&self) -> (usize, usize, &str, &str) {
        (self.n, self.trial, &self.scheme, &self.filter)
    }
}

/// Runs every (n, trial, scheme) cell of the sweep in the current rayon pool.
///
/// Each (n, trial) pair draws one dataset shared by all schemes, from the
/// RNG stream `n · 2³² + trial`. Output is sorted by key, so it does not
/// depend on the pool size. `timing` fills `wall_ms`.
pub fn run_experiment(config: &ExperimentConfig, timing: bool) -> Result<Vec<RiskRecord>> {
    config.validate()?;
    let problem = config.problem()?;
    let cells: Vec<(usize, usize)> = config
        .n_grid
        .iter()
        .flat_map(|&n| (0..config.trials).map(move |t| (n, t)))
        .collect();
    let mut records: Vec<RiskRecord> = cells
        .par_iter()
        .flat_map_iter(|&(n, trial)| run_cell(config, &problem, n, trial, timing))
        .collect();
    records.sort_by(|a, b| a.key().cmp(&b.key()));
    Ok(records)
}

fn run_cell(
    config: &ExperimentConfig,
    problem: &SyntheticProblem,
    n: usize,
    trial: usize,
    timing: bool,
) -> Vec<RiskRecord> {
    let stream = ((n as u64) << 32) | trial as u64;
    let data = problem.sample_train(n, stream);
    score_cell(config, problem, n, trial, &data, timing)
}

fn score_cell(
    config: &ExperimentConfig,
    problem: &SyntheticProblem,
    n: usize,
    trial: usize,
    data: &Result<Dataset>,
    timing: bool,
) -> Vec<RiskRecord> {
    config
        .schemes
        .iter()
        .map(|&choice| {
            let start = Instant::now();
            let plan = config.plan(n, choice);
            let mut record = RiskRecord {
                n,
                trial,
                scheme: scheme_tag(choice).into(),
                filter: String::new(),
                lambda: f64::NAN,
                d_n: None,
                risk: None,
                status: "ok".into(),
                wall_ms: None,
            };
            let outcome = plan.and_then(|plan| {
                record.filter = plan.filter.kind().tag();
                record.lambda = plan.lambda;
                record.d_n = plan.scheme.clip_threshold();
                let data = data.as_ref().map_err(clone_error)?;
                let est = fit_basis(data, problem.kernel(), &plan.filter, plan.lambda, plan.scheme)?;
                excess_risk_coeffs(&est.coefficients, problem)
            });
            match outcome {
                Ok(risk) => record.risk = Some(risk),
                Err(e) => record.status = format!("error: {e}"),
            }
            if timing {
                record.wall_ms = Some(start.elapsed().as_secs_f64() * 1e3);
            }
            record
        })
        .collect()
}

fn clone_error(e: &Error) -> Error {
    match e {
        Error::Numeric(m) => Error::Numeric(m.clone()),
        other => Error::Contract(other.to_string()),
    }
}

pub fn scheme_tag(choice: SchemeChoice) -> &'static str {
    match choice {
        SchemeChoice::Unweighted => "unweighted",
        SchemeChoice::Exact => "exact",
        SchemeChoice::Normalized => "normalized",
        SchemeChoice::Clipped => "clipped",
    }
}

const CSV_HEADER: [&str; 9] = ["n", "trial", "scheme", "filter", "lambda", "D_n", "risk", "status", "wall_ms"];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes records as CSV with one header row and LF line endings.
pub fn write_records<W: Write>(out: W, records: &[RiskRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.n.to_string(),
            r.trial.to_string(),
            r.scheme.clone(),
            r.filter.clone(),
            r.lambda.to_string(),
            opt(r.d_n),
            opt(r.risk),
            r.status.clone(),
            opt(r.wall_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<RiskRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    contract!(header == CSV_HEADER, "unexpected results header {header:?}");
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let num = |i: usize| -> Result<Option<f64>> {
            let s = &row[i];
            if s.is_empty() {
                return Ok(None);
            }
            s.parse()
                .map(Some)
                .map_err(|_| Error::Contract(format!("column {} holds {s:?}, not a number", CSV_HEADER[i])))
        };
        let int = |i: usize| -> Result<usize> {
            row[i]
                .parse()
                .map_err(|_| Error::Contract(format!("column {} holds {:?}, not an integer", CSV_HEADER[i], &row[i])))
        };
        out.push(RiskRecord {
            n: int(0)?,
            trial: int(1)?,
            scheme: row[2].to_string(),
            filter: row[3].to_string(),
            lambda: num(4)?.unwrap_or(f64::NAN),
            d_n: num(5)?,
            risk: num(6)?,
            status: row[7].to_string(),
            wall_ms: num(8)?,
        });
    }
    Ok(out)
}

/// Log-log least-squares fit of median risk against n.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    /// Slope of `log(median risk)` on `log n`; risk is a squared norm.
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    /// `slope / 2`, comparable to rates stated for `‖f − f_ρ‖`.
    pub norm_slope: f64,
    pub n_grid: Vec<usize>,
    pub medians: Vec<f64>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

/// Fits the rate over all successful records; filter by scheme beforehand.
pub fn estimate_rate(records: &[RiskRecord]) -> Result<RateReport> {
    let mut by_n: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_ok()) {
        by_n.entry(r.n).or_default().push(r.risk.unwrap_or(f64::NAN));
    }
    contract!(by_n.len() >= 3, "need at least 3 distinct n with successful trials, got {}", by_n.len());
    let n_grid: Vec<usize> = by_n.keys().copied().collect();
    let medians: Vec<f64> = by_n.values_mut().map(|v| median(v)).collect();
    if let Some(bad) = medians.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
        return Err(Error::Numeric(format!("median risk {bad} has no logarithm")));
    }
    let xs: Vec<f64> = n_grid.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = medians.iter().map(|m| m.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let stderr = (ssr / (k - 2.0) / sxx).sqrt();
    Ok(RateReport { slope, intercept, stderr, norm_slope: slope / 2.0, n_grid, medians })
}
