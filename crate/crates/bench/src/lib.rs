//! Shared fixtures for the benchmarks.

use spectral_shift::{make_problem, Dataset, Result, ShiftSpec, SyntheticProblem};

/// A smooth log-shift problem of the kind the rate sweeps use.
pub fn workload(m: usize, n: usize) -> Result<(SyntheticProblem, Dataset)> {
    let problem = make_problem(0.5, 1.0, m, 0.5, ShiftSpec::log())?.with_seed(7);
    let data = problem.sample_train(n, 0)?;
    Ok((problem, data))
}
