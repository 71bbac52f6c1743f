//! Finite-matrix checks of the operator inequalities behind the error bounds.
//!
//! - Cordes: `‖A^s B^s‖ ≤ ‖AB‖^s` for PSD `A, B` and `s ∈ [0, 1]`.
//! - Power difference: `‖A^t − B^t‖ ≤ t C^{t−1} ‖A − B‖` when `‖A‖, ‖B‖ ≤ C`, `t ≥ 1`.
//! - Normalization gap: `‖S_XᵀW̄S_X − S_XᵀWS_X‖ ≤ κ² |1 − mean(w)|`.
//! - Clipping shrinks capacity: `N̂(λ) ≤ N(λ)` for the clipped operator.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{contract, Error, Result};
use crate::estimator::Dataset;
use crate::kernels::{basis_row, symmetrize, KernelSpec};
use crate::metrics::effective_dimension_of;
use crate::quadrature;
use crate::shift_weights::{normalize_weights, ShiftSpec};
use crate::synthetic::{make_problem, SyntheticProblem};

const MAX_DIM: usize = 50;
const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;
const INEQ_TOL: f64 = 1e-8;
const EFFDIM_TOL: f64 = 1e-6;
/// Absolute slack for inequalities whose both sides vanish.
const FLOOR: f64 = 1e-14;
/// Rows of the quadrature design matrix processed at once.
const CHUNK: usize = 4096;

/// Two symmetric PSD matrices of equal size with a common norm cap.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorPair {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    cap: f64,
}

impl OperatorPair {
    /// Validates symmetry and positivity; `cap` defaults to `max(‖A‖, ‖B‖)`.
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, cap: Option<f64>) -> Result<Self> {
        let d = a.nrows();
        contract!((1..=MAX_DIM).contains(&d), "dimension must lie in 1..={MAX_DIM}, got {d}");
        contract!(a.is_square() && b.shape() == a.shape(), "operators must be square and equally sized");
        for (name, m) in [("A", &a), ("B", &b)] {
            let scale = m.amax().max(1.0);
            contract!(
                (m - m.transpose()).amax() <= SYMMETRY_TOL * scale,
                "{name} is not symmetric"
            );
            let norm = spectral_norm_sym(m);
            let min = m.clone().symmetric_eigenvalues().min();
            contract!(min >= -PSD_TOL * norm.max(f64::MIN_POSITIVE), "{name} has eigenvalue {min} below zero");
        }
        let cap = cap.unwrap_or_else(|| spectral_norm_sym(&a).max(spectral_norm_sym(&b)));
        contract!(cap.is_finite() && cap >= 0.0, "norm cap must be finite and nonnegative");
        Ok(Self { a, b, cap })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }
}

/// One evaluated inequality `lhs ≤ rhs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub check: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

impl CheckReport {
    fn new(check: &'static str, lhs: f64, rhs: f64, rel: f64) -> Self {
        let pass = lhs <= rhs * (1.0 + rel) + FLOOR;
        Self { check, lhs, rhs, pass }
    }
}

/// `A^p` for symmetric PSD `A`, with round-off negatives clamped to zero.
pub fn psd_power(a: &DMatrix<f64>, p: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(a.clone());
    let powered = eig.eigenvalues.map(|v| if v > 0.0 { v.powf(p) } else { 0.0 });
    let q = &eig.eigenvectors;
    let mut out = q * DMatrix::from_diagonal(&powered) * q.transpose();
    symmetrize(&mut out);
    out
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    SVD::new(m.clone(), false, false).singular_values.max()
}

fn spectral_norm_sym(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().amax()
}

pub fn check_cordes(pair: &OperatorPair, s: f64) -> Result<CheckReport> {
    contract!((0.0..=1.0).contains(&s), "exponent s must lie in [0, 1], got {s}");
    let lhs = spectral_norm(&(psd_power(&pair.a, s) * psd_power(&pair.b, s)));
    let rhs = spectral_norm(&(&pair.a * &pair.b)).powf(s);
    Ok(CheckReport::new("cordes", lhs, rhs, INEQ_TOL))
}

pub fn check_power_difference(pair: &OperatorPair, t: f64) -> Result<CheckReport> {
    contract!(t >= 1.0 && t.is_finite(), "exponent t must be at least 1, got {t}");
    let slack = pair.cap * (1.0 + 1e-12);
    contract!(
        spectral_norm_sym(&pair.a) <= slack && spectral_norm_sym(&pair.b) <= slack,
        "operator norm exceeds the cap {}",
        pair.cap
    );
    let lhs = spectral_norm_sym(&(psd_power(&pair.a, t) - psd_power(&pair.b, t)));
    let rhs = t * pair.cap.powf(t - 1.0) * spectral_norm_sym(&(&pair.a - &pair.b));
    Ok(CheckReport::new("power_difference", lhs, rhs, INEQ_TOL))
}

/// Compares the operator change from normalizing the weights with `κ²|1 − mean(w)|`.
pub fn check_normalization_gap(data: &Dataset, kernel: &KernelSpec) -> Result<CheckReport> {
    let w = &data.raw_weights;
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    if mean <= 0.0 {
        return Err(Error::Degenerate("weights sum to zero".into()));
    }
    let w_bar = normalize_weights(w)?;
    let gram = kernel.gram(&data.x)?.entries;
    let eig = SymmetricEigen::try_new(gram, f64::EPSILON, 1_000_000)
        .ok_or_else(|| Error::Numeric("Gram square root did not converge".into()))?;
    let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let q = &eig.eigenvectors;
    let k_half = q * DMatrix::from_diagonal(&root) * q.transpose();
    let diff = DVector::from_iterator(w.len(), w_bar.iter().zip(w).map(|(a, b)| a - b));
    let mut m = &k_half * DMatrix::from_diagonal(&diff) * &k_half / n;
    symmetrize(&mut m);
    let lhs = spectral_norm_sym(&m);
    let kappa = kernel.kappa();
    let rhs = kappa * kappa * (1.0 - mean).abs();
    Ok(CheckReport::new("normalization_gap", lhs, rhs, INEQ_TOL))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffDimPoint {
    pub lambda: f64,
    pub clipped: f64,
    pub full: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffDimReport {
    pub d_n: f64,
    pub points: Vec<EffDimPoint>,
    pub pass: bool,
}

/// The clipped operator in the basis `ψ_k = √μ_k φ_k`:
/// `Â_jk = √(μ_j μ_k) ∫ φ_j φ_k min(1, D_n / w) dx`.
pub fn clipped_operator(problem: &SyntheticProblem, shift: &ShiftSpec, d_n: f64) -> Result<DMatrix<f64>> {
    contract!(d_n > 1.0, "clipping threshold must exceed 1, got {d_n}");
    let m = problem.m;
    let h = 1.0 / quadrature::PANELS as f64;
    let sqrt_mu: Vec<f64> = problem.mu.iter().map(|v| v.sqrt()).collect();
    let nodes: Vec<f64> = quadrature::nodes(quadrature::PANELS).collect();
    let mut a = DMatrix::zeros(m, m);
    let mut row = vec![0.0; m];
    for chunk in nodes.chunks(CHUNK) {
        let mut design = DMatrix::zeros(chunk.len(), m);
        for (i, &x) in chunk.iter().enumerate() {
            let w = shift.density_ratio(x)?;
            let ratio = if w <= d_n { 1.0 } else { d_n / w };
            let scale = (h * ratio).sqrt();
            basis_row(x, &mut row);
            for k in 0..m {
                design[(i, k)] = row[k] * sqrt_mu[k] * scale;
            }
        }
        a += design.tr_mul(&design);
    }
    symmetrize(&mut a);
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("clipped operator quadrature produced non-finite entries".into()));
    }
    Ok(a)
}

/// `N̂(λ) ≤ N(λ)` on every grid point.
pub fn check_effdim_clipping(
    problem: &SyntheticProblem,
    shift: &ShiftSpec,
    d_n: f64,
    lambda_grid: &[f64],
) -> Result<EffDimReport> {
    contract!(!lambda_grid.is_empty(), "lambda grid is empty");
    contract!(lambda_grid.iter().all(|&l| l > 0.0 && l.is_finite()), "lambda grid must be positive");
    let a = clipped_operator(problem, shift, d_n)?;
    let theta: Vec<f64> = a.symmetric_eigenvalues().iter().map(|v| v.max(0.0)).collect();
    let mut points = Vec::with_capacity(lambda_grid.len());
    for &lambda in lambda_grid {
        let clipped = theta.iter().map(|t| t / (lambda + t)).sum();
        let full = effective_dimension_of(&problem.mu, lambda)?;
        points.push(EffDimPoint { lambda, clipped, full });
    }
    let pass = points.iter().all(|p| p.clipped <= p.full * (1.0 + EFFDIM_TOL));
    Ok(EffDimReport { d_n, points, pass })
}

/// Outcome of one randomized suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteSummary {
    pub suite: &'static str,
    pub cases: usize,
    pub failures: usize,
    /// Largest `lhs / rhs` seen (0 when every right side vanished).
    pub worst_ratio: f64,
    /// Printable inputs of the first failing case.
    pub counterexample: Option<String>,
}

impl SuiteSummary {
    pub fn pass(&self) -> bool {
        self.failures == 0
    }
}

struct Tally {
    summary: SuiteSummary,
}

impl Tally {
    fn new(suite: &'static str) -> Self {
        Self { summary: SuiteSummary { suite, cases: 0, failures: 0, worst_ratio: 0.0, counterexample: None } }
    }

    fn record(&mut self, lhs: f64, rhs: f64, pass: bool, describe: impl FnOnce() -> String) {
        let s = &mut self.summary;
        s.cases += 1;
        if rhs > 0.0 {
            s.worst_ratio = s.worst_ratio.max(lhs / rhs);
        }
        if !pass {
            s.failures += 1;
            if s.counterexample.is_none() {
                s.counterexample = Some(describe());
            }
        }
    }
}

fn random_psd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut m = &g * g.transpose();
    symmetrize(&mut m);
    m
}

pub const SUITE_CASES: usize = 200;

pub fn cordes_suite(seed: u64) -> Result<SuiteSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new("cordes");
    for _ in 0..SUITE_CASES {
        let d = rng.random_range(1..=10);
        let pair = OperatorPair::new(random_psd(&mut rng, d), random_psd(&mut rng, d), None)?;
        for s in [0.25, 0.5, 0.75] {
            let rep = check_cordes(&pair, s)?;
            tally.record(rep.lhs, rep.rhs, rep.pass, || format!("s = {s}\nA = {}B = {}", pair.a, pair.b));
        }
    }
    Ok(tally.summary)
}

pub fn power_difference_suite(seed: u64) -> Result<SuiteSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new("power_difference");
    for _ in 0..SUITE_CASES {
        let d = rng.random_range(1..=10);
        let pair = OperatorPair::new(random_psd(&mut rng, d), random_psd(&mut rng, d), None)?;
        for t in [1.5, 2.0, 3.0] {
            let rep = check_power_difference(&pair, t)?;
            tally.record(rep.lhs, rep.rhs, rep.pass, || {
                format!("t = {t}, C = {}\nA = {}B = {}", pair.cap, pair.a, pair.b)
            });
        }
    }
    Ok(tally.summary)
}

pub fn normalization_gap_suite(seed: u64) -> Result<SuiteSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new("normalization_gap");
    let problem = make_problem(0.5, 1.0, 16, 0.5, ShiftSpec::log())?.with_seed(seed);
    for case in 0..SUITE_CASES {
        let n = rng.random_range(1..=50);
        let data = problem.sample_train(n, case as u64)?;
        let kernel = if case % 2 == 0 {
            KernelSpec::gaussian_rbf(rng.random_range(0.05..1.0))?
        } else {
            problem.kernel().clone()
        };
        let rep = check_normalization_gap(&data, &kernel)?;
        tally.record(rep.lhs, rep.rhs, rep.pass, || format!("x = {:?}\nw = {:?}", data.x, data.raw_weights));
    }
    Ok(tally.summary)
}

pub fn effdim_clipping_suite() -> Result<SuiteSummary> {
    let mut tally = Tally::new("effdim_clipping");
    let grid = crate::metrics::log_grid(1e-4, 1.0, 10);
    let shifts = [ShiftSpec::log(), ShiftSpec::bounded(0.5)?, ShiftSpec::bounded(0.9)?];
    for beta in [0.5, 1.0] {
        for shift in &shifts {
            let problem = make_problem(beta, 1.0, 24, 0.5, shift.clone())?;
            for d_n in [1.1, 1.5, 2.0, 4.0] {
                let rep = check_effdim_clipping(&problem, shift, d_n, &grid)?;
                for p in &rep.points {
                    let pass = p.clipped <= p.full * (1.0 + EFFDIM_TOL);
                    tally.record(p.clipped, p.full, pass, || {
                        format!("beta = {beta}, shift = {:?}, D_n = {d_n}, lambda = {}", shift.family(), p.lambda)
                    });
                }
            }
        }
    }
    Ok(tally.summary)
}

/// Runs the four suites from a fixed seed.
pub fn run_all(seed: u64) -> Result<Vec<SuiteSummary>> {
    Ok(vec![
        cordes_suite(seed)?,
        power_difference_suite(seed.wrapping_add(1))?,
        normalization_gap_suite(seed.wrapping_add(2))?,
        effdim_clipping_suite()?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pair(a: DMatrix<f64>, b: DMatrix<f64>) -> OperatorPair {
        OperatorPair::new(a, b, None).unwrap()
    }

    #[test]
    fn pair_validation() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(OperatorPair::new(asym, DMatrix::identity(2, 2), None).is_err());
        let neg = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -0.1]));
        assert!(OperatorPair::new(neg, DMatrix::identity(2, 2), None).is_err());
        assert!(OperatorPair::new(DMatrix::identity(2, 2), DMatrix::identity(3, 3), None).is_err());
        assert!(OperatorPair::new(DMatrix::identity(51, 51), DMatrix::identity(51, 51), None).is_err());
    }

    #[test]
    fn cordes_examples() {
        let p = pair(DMatrix::identity(3, 3), DMatrix::identity(3, 3));
        for s in [0.0, 0.3, 1.0] {
            let rep = check_cordes(&p, s).unwrap();
            assert!(rep.pass);
            assert_abs_diff_eq!(rep.lhs, 1.0, epsilon = 1e-12);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = pair(random_psd(&mut rng, 4), random_psd(&mut rng, 4));
        let rep = check_cordes(&p, 1.0).unwrap();
        assert!(rep.pass);
        assert_abs_diff_eq!(rep.lhs, rep.rhs, epsilon = 1e-9 * rep.rhs);
        assert!(check_cordes(&p, 1.5).is_err());
    }

    #[test]
    fn power_difference_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_psd(&mut rng, 5);
        let p = pair(a.clone(), a);
        let rep = check_power_difference(&p, 2.0).unwrap();
        assert!(rep.pass && rep.lhs < 1e-9);
        let p = pair(random_psd(&mut rng, 5), random_psd(&mut rng, 5));
        let rep = check_power_difference(&p, 1.0).unwrap();
        assert!(rep.pass);
        assert_abs_diff_eq!(rep.lhs, rep.rhs, epsilon = 1e-9 * rep.rhs);
        let capped = OperatorPair::new(p.a.clone(), p.b.clone(), Some(0.5 * p.cap)).unwrap();
        assert!(matches!(check_power_difference(&capped, 2.0), Err(Error::Contract(_))));
    }

    #[test]
    fn normalization_gap_examples() {
        let k = KernelSpec::gaussian_rbf(0.3).unwrap();
        let d = Dataset::new(vec![0.1, 0.6, 0.9], vec![0.0; 3], vec![1.0; 3]).unwrap();
        let rep = check_normalization_gap(&d, &k).unwrap();
        assert!(rep.pass && rep.lhs == 0.0 && rep.rhs == 0.0);
        let d = Dataset::new(vec![0.2, 0.7], vec![0.0; 2], vec![0.5, 1.5]).unwrap();
        let rep = check_normalization_gap(&d, &k).unwrap();
        assert!(rep.pass && rep.lhs < 1e-12 && rep.rhs == 0.0);
        let d = Dataset::new(vec![0.2, 0.7], vec![0.0; 2], vec![0.0, 0.0]).unwrap();
        assert!(check_normalization_gap(&d, &k).is_err());
    }

    #[test]
    fn normalization_gap_is_permutation_invariant() {
        let k = KernelSpec::gaussian_rbf(0.2).unwrap();
        let x = vec![0.1, 0.35, 0.5, 0.8, 0.95];
        let w = vec![0.3, 2.0, 1.1, 0.7, 4.0];
        let a = check_normalization_gap(&Dataset::new(x.clone(), vec![0.0; 5], w.clone()).unwrap(), &k).unwrap();
        let perm = [3, 0, 4, 1, 2];
        let xp = perm.iter().map(|&i| x[i]).collect();
        let wp = perm.iter().map(|&i| w[i]).collect();
        let b = check_normalization_gap(&Dataset::new(xp, vec![0.0; 5], wp).unwrap(), &k).unwrap();
        assert_abs_diff_eq!(a.lhs, b.lhs, epsilon = 1e-12);
        assert!(a.pass && a.lhs > 0.0);
    }

    #[test]
    fn no_clipping_reproduces_effective_dimension() {
        let grid = [0.01, 0.1, 1.0];
        let shift = ShiftSpec::bounded(0.5).unwrap();
        let p = make_problem(0.5, 1.0, 16, 0.1, shift.clone()).unwrap();
        let rep = check_effdim_clipping(&p, &shift, 2.5, &grid).unwrap();
        assert!(rep.pass);
        for pt in &rep.points {
            assert_abs_diff_eq!(pt.clipped, pt.full, epsilon = 1e-8);
        }
        let none = ShiftSpec::none();
        let p = make_problem(0.5, 1.0, 16, 0.1, none.clone()).unwrap();
        for pt in check_effdim_clipping(&p, &none, 1.2, &grid).unwrap().points {
            assert_abs_diff_eq!(pt.clipped, pt.full, epsilon = 1e-10);
        }
    }

    #[test]
    fn log_shift_clipping_reduces_capacity() {
        let shift = ShiftSpec::log();
        let p = make_problem(0.5, 1.0, 16, 0.1, shift.clone()).unwrap();
        let grid = [0.01, 0.1, 1.0];
        let reports: Vec<EffDimReport> = [1.5, 2.0, 4.0]
            .iter()
            .map(|&d| check_effdim_clipping(&p, &shift, d, &grid).unwrap())
            .collect();
        for rep in &reports {
            assert!(rep.pass);
        }
        for pt in &reports[1].points {
            assert!(pt.clipped < pt.full);
        }
        for i in 0..grid.len() {
            assert!(reports[0].points[i].clipped <= reports[1].points[i].clipped);
            assert!(reports[1].points[i].clipped <= reports[2].points[i].clipped);
        }
    }

    #[test]
    fn suites_pass() {
        for summary in run_all(2024).unwrap() {
            assert!(summary.cases >= SUITE_CASES, "{summary:?}");
            assert!(summary.pass(), "{summary:?}");
        }
    }
}
