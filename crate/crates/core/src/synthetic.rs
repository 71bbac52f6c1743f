//! Synthetic regression problems with known regularity and capacity.
//!
//! The kernel is the truncated trigonometric expansion with eigenvalues
//! `μ_k = k^{-1/β}`. The target is `f_ρ = Σ_k μ_k^r a_k φ_k` with
//! `a_k = (−1)^{k+1} k^{-0.51}`, so `f_ρ = L_K^r u_ρ` holds exactly for
//! `u_ρ = Σ a_k φ_k` under the uniform test marginal. Labels carry
//! Uniform[−M, M] noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::estimator::Dataset;
use crate::kernels::{basis_row, KernelSpec};
use crate::shift_weights::ShiftSpec;

/// Default basis truncation.
pub const DEFAULT_TRUNCATION: usize = 512;
/// Decay exponent of the target coefficients `|a_k| = k^{-TARGET_DECAY}`.
pub const TARGET_DECAY: f64 = 0.51;
const MAX_REJECTIONS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticProblem {
    pub m: usize,
    pub beta: f64,
    pub mu: Vec<f64>,
    pub r: f64,
    pub target_coeffs: Vec<f64>,
    pub noise_bound: f64,
    pub shift: ShiftSpec,
    pub seed_base: u64,
    kernel: KernelSpec,
    /// `μ_k^r a_k`, the basis coefficients of `f_ρ`.
    f_rho_coeffs: Vec<f64>,
}

/// Builds the problem with the default alternating target profile.
pub fn make_problem(beta: f64, r: f64, m: usize, noise_bound: f64, shift: ShiftSpec) -> Result<SyntheticProblem> {
    contract!(beta > 0.0 && beta <= 1.0, "beta must lie in (0, 1], got {beta}");
    contract!(r >= 0.5 && r.is_finite(), "r must be at least 1/2, got {r}");
    contract!(m >= 1, "basis truncation must be positive");
    contract!(noise_bound >= 0.0 && noise_bound.is_finite(), "noise bound must be nonnegative");
    let mu: Vec<f64> = (1..=m).map(|k| (k as f64).powf(-1.0 / beta)).collect();
    let target: Vec<f64> = (1..=m)
        .map(|k| {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            sign * (k as f64).powf(-TARGET_DECAY)
        })
        .collect();
    let kernel = KernelSpec::truncated_basis(mu.clone())?;
    let f_rho_coeffs = mu.iter().zip(&target).map(|(mu, a)| mu.powf(r) * a).collect();
    Ok(SyntheticProblem {
        m,
        beta,
        mu,
        r,
        target_coeffs: target,
        noise_bound,
        shift,
        seed_base: 0,
        kernel,
        f_rho_coeffs,
    })
}

impl SyntheticProblem {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed_base = seed;
        self
    }

    /// Replaces `u_ρ`'s coefficients; missing trailing entries are zero.
    pub fn with_target_coeffs(mut self, coeffs: &[f64]) -> Result<Self> {
        contract!(coeffs.len() <= self.m, "more target coefficients than basis functions");
        let mut a = vec![0.0; self.m];
        a[..coeffs.len()].copy_from_slice(coeffs);
        self.f_rho_coeffs = self.mu.iter().zip(&a).map(|(mu, a)| mu.powf(self.r) * a).collect();
        self.target_coeffs = a;
        Ok(self)
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn f_rho_coeffs(&self) -> &[f64] {
        &self.f_rho_coeffs
    }

    /// `‖u_ρ‖² = Σ a_k²`.
    pub fn source_norm_sq(&self) -> f64 {
        self.target_coeffs.iter().map(|a| a * a).sum()
    }

    pub fn f_rho(&self, x: f64) -> Result<f64> {
        if !(x.is_finite() && (0.0..=1.0).contains(&x)) {
            return Err(Error::Domain(format!("f_rho input {x} outside [0, 1]")));
        }
        let mut row = vec![0.0; self.m];
        Ok(self.f_rho_with(x, &mut row))
    }

    fn f_rho_with(&self, x: f64, row: &mut [f64]) -> f64 {
        basis_row(x, row);
        row.iter().zip(&self.f_rho_coeffs).map(|(p, c)| p * c).sum()
    }

    /// RNG for one trial; independent streams per trial index.
    pub fn trial_rng(&self, trial_index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed_base);
        rng.set_stream(trial_index);
        rng
    }

    /// Draws `n` i.i.d. training pairs from the training marginal.
    pub fn sample_train(&self, n: usize, trial_index: u64) -> Result<Dataset> {
        contract!(n >= 1, "sample size must be positive");
        let mut rng = self.trial_rng(trial_index);
        let envelope = self.shift.train_density_bound();
        let mut row = vec![0.0; self.m];
        let (mut xs, mut ys, mut ws) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            let x = self.draw_input(&mut rng, envelope)?;
            let noise = if self.noise_bound > 0.0 {
                rng.random_range(-self.noise_bound..=self.noise_bound)
            } else {
                0.0
            };
            xs.push(x);
            ys.push(self.f_rho_with(x, &mut row) + noise);
            ws.push(self.shift.density_ratio(x)?);
        }
        Dataset::new(xs, ys, ws)
    }

    fn draw_input(&self, rng: &mut ChaCha8Rng, envelope: f64) -> Result<f64> {
        for _ in 0..MAX_REJECTIONS {
            // 1 − U with U ∈ [0, 1) lands in (0, 1].
            let x = 1.0 - rng.random::<f64>();
            let accept: f64 = rng.random();
            if accept * envelope < self.shift.train_density(x) {
                return Ok(x);
            }
        }
        Err(Error::Numeric(format!("rejection sampler exceeded {MAX_REJECTIONS} attempts")))
    }
}

/// Which convergence theorem's parameter schedule to follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Normalized weights: `λ = n^{-1/(min{2r,3} + β + α(1−β))}`.
    Thm1,
    /// Clipped weights: `λ = n^{-1/(2r+β) + ε/r}`.
    Thm3,
    /// Unweighted, bounded shift: `λ = n^{-1/(2r+β)}`.
    Thm4,
}

impl Schedule {
    pub fn tag(&self) -> &'static str {
        match self {
            Schedule::Thm1 => "thm1",
            Schedule::Thm3 => "thm3",
            Schedule::Thm4 => "thm4",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "thm1" => Ok(Schedule::Thm1),
            "thm3" => Ok(Schedule::Thm3),
            "thm4" => Ok(Schedule::Thm4),
            other => Err(Error::Contract(format!("unknown theorem schedule {other:?}"))),
        }
    }

    fn check(&self, r: f64, beta: f64, alpha: f64, epsilon: f64) -> Result<()> {
        contract!(r >= 0.5, "r must be at least 1/2, got {r}");
        contract!(beta > 0.0 && beta <= 1.0, "beta must lie in (0, 1], got {beta}");
        match self {
            Schedule::Thm1 => {
                contract!(alpha > 0.0 && alpha <= 1.0, "alpha must lie in (0, 1], got {alpha}");
                contract!(
                    beta + alpha * (1.0 - beta) >= 1.0,
                    "normalized-weight schedule needs beta + alpha(1 - beta) >= 1"
                );
            }
            Schedule::Thm3 => {
                let eps_max = r / (2.0 * r + beta);
                contract!(
                    epsilon > 0.0 && epsilon < eps_max,
                    "epsilon must lie in (0, {eps_max}), got {epsilon}"
                );
            }
            Schedule::Thm4 => {}
        }
        Ok(())
    }

    /// Exponent `e` in `λ = n^{e}`.
    pub fn lambda_exponent(&self, r: f64, beta: f64, alpha: f64, epsilon: f64) -> Result<f64> {
        self.check(r, beta, alpha, epsilon)?;
        Ok(match self {
            Schedule::Thm1 => -1.0 / ((2.0 * r).min(3.0) + beta + alpha * (1.0 - beta)),
            Schedule::Thm3 => -1.0 / (2.0 * r + beta) + epsilon / r,
            Schedule::Thm4 => -1.0 / (2.0 * r + beta),
        })
    }

    /// Exponent of `n` in the theorem's bound on `‖f − f_ρ‖`.
    pub fn norm_rate_exponent(&self, r: f64, beta: f64, alpha: f64, epsilon: f64) -> Result<f64> {
        self.check(r, beta, alpha, epsilon)?;
        Ok(match self {
            Schedule::Thm1 => -r.min(1.5) / ((2.0 * r).min(3.0) + beta + alpha * (1.0 - beta)),
            Schedule::Thm3 => -(r / (2.0 * r + beta) - epsilon),
            Schedule::Thm4 => -r / (2.0 * r + beta),
        })
    }
}

/// Regularization parameter prescribed by `schedule` at sample size `n`.
pub fn lambda_schedule(schedule: Schedule, n: usize, r: f64, beta: f64, alpha: f64, epsilon: f64) -> Result<f64> {
    contract!(n >= 1, "sample size must be positive");
    Ok((n as f64).powf(schedule.lambda_exponent(r, beta, alpha, epsilon)?))
}
