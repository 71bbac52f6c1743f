//! Covariate-shift families, density ratios and importance-weight schemes.
//!
//! The test marginal is always Uniform(0, 1]. Each family fixes a training
//! density `q`, so the density ratio is `w = 1/q`:
//!
//! | family    | q(x)                         | w(x)                   |
//! |-----------|------------------------------|------------------------|
//! | `None`    | 1                            | 1                      |
//! | `Bounded` | 1 + a sin(2πx)               | 1/(1 + a sin(2πx))     |
//! | `Log`     | Z⁻¹ / (1 − ln x)             | Z (1 − ln x)           |
//!
//! with `Z = ∫₀¹ dt/(1 − ln t) ≈ 0.5963`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::quadrature;

/// Largest moment order accepted by [`check_moment_condition`].
pub const MAX_MOMENT_ORDER: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ShiftFamily {
    None,
    Bounded { a: f64 },
    Log,
}

/// Normalizing constant of the log-shift training density.
pub fn log_shift_normalizer() -> f64 {
    static Z: OnceLock<f64> = OnceLock::new();
    *Z.get_or_init(|| quadrature::integrate_log_scale(|t| 1.0 / (1.0 - t.ln()), quadrature::PANELS))
}

/// A train/test marginal pair with the moment constants `(α, C, σ)` attached.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSpec {
    family: ShiftFamily,
    pub alpha: f64,
    pub c: f64,
    pub sigma: f64,
    z: f64,
}

impl ShiftSpec {
    pub fn new(family: ShiftFamily, alpha: f64, c: f64, sigma: f64) -> Result<Self> {
        if let ShiftFamily::Bounded { a } = family {
            contract!(a > 0.0 && a < 1.0, "bounded shift amplitude must lie in (0, 1), got {a}");
        }
        contract!((0.0..=1.0).contains(&alpha), "alpha must lie in [0, 1], got {alpha}");
        contract!(c > 0.0 && c.is_finite(), "C must be positive, got {c}");
        contract!(sigma > 0.0 && sigma.is_finite(), "sigma must be positive, got {sigma}");
        let z = match family {
            ShiftFamily::Log => log_shift_normalizer(),
            _ => 1.0,
        };
        Ok(Self { family, alpha, c, sigma, z })
    }

    /// No shift with `α = C = σ = 1`.
    pub fn none() -> Self {
        Self::new(ShiftFamily::None, 1.0, 1.0, 1.0).expect("valid constants")
    }

    pub fn bounded(a: f64) -> Result<Self> {
        Self::new(ShiftFamily::Bounded { a }, 1.0, 1.0, 1.0)
    }

    pub fn log() -> Self {
        Self::new(ShiftFamily::Log, 1.0, 1.0, 1.0).expect("valid constants")
    }

    pub fn family(&self) -> ShiftFamily {
        self.family
    }

    /// Cached `Z` for the log family, 1 otherwise.
    pub fn normalizer(&self) -> f64 {
        self.z
    }

    /// `w(x) = dρ_te/dρ_tr (x)`. Returns `+∞` at `x = 0` for the log family.
    pub fn density_ratio(&self, x: f64) -> Result<f64> {
        if !(x.is_finite() && (0.0..=1.0).contains(&x)) {
            return Err(Error::Domain(format!("density ratio input {x} outside (0, 1]")));
        }
        Ok(self.ratio_unchecked(x))
    }

    pub(crate) fn ratio_unchecked(&self, x: f64) -> f64 {
        match self.family {
            ShiftFamily::None => 1.0,
            ShiftFamily::Bounded { a } => 1.0 / (1.0 + a * (2.0 * PI * x).sin()),
            ShiftFamily::Log => {
                if x == 0.0 {
                    f64::INFINITY
                } else {
                    self.z * (1.0 - x.ln())
                }
            }
        }
    }

    /// Training density `q(x)` with respect to Lebesgue measure on (0, 1].
    pub fn train_density(&self, x: f64) -> f64 {
        1.0 / self.ratio_unchecked(x)
    }

    /// Upper bound of `q` used as the rejection-sampling envelope.
    pub fn train_density_bound(&self) -> f64 {
        match self.family {
            ShiftFamily::None => 1.0,
            ShiftFamily::Bounded { a } => 1.0 + a,
            ShiftFamily::Log => 1.0 / self.z,
        }
    }

    /// `‖w‖_∞` under the test marginal.
    pub fn ess_sup(&self) -> f64 {
        match self.family {
            ShiftFamily::None => 1.0,
            ShiftFamily::Bounded { a } => 1.0 / (1.0 - a),
            ShiftFamily::Log => f64::INFINITY,
        }
    }

    /// `∫ w(x)^s dρ_te(x)` by quadrature in `−ln x`.
    pub fn weight_moment(&self, s: f64) -> f64 {
        if self.family == ShiftFamily::None {
            return 1.0;
        }
        quadrature::integrate_log_scale(|x| self.ratio_unchecked(x).powf(s), quadrature::PANELS)
    }

    /// Rényi divergence `H_a(ρ_te ‖ ρ_tr)`; pass `f64::INFINITY` for `a = ∞`.
    pub fn renyi_divergence(&self, a: f64) -> Result<f64> {
        contract!(a > 0.0, "Rényi order must be positive, got {a}");
        if a.is_infinite() {
            return Ok(self.ess_sup().ln());
        }
        let value = self.weight_moment(a).ln() / a;
        if !value.is_finite() {
            return Err(Error::Numeric(format!("Rényi integral of order {a} did not converge")));
        }
        Ok(value)
    }
}

/// Which importance weights enter the estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum WeightScheme {
    Unweighted,
    Exact,
    Normalized,
    Clipped { d_n: f64 },
}

impl WeightScheme {
    pub fn tag(&self) -> &'static str {
        match self {
            WeightScheme::Unweighted => "unweighted",
            WeightScheme::Exact => "exact",
            WeightScheme::Normalized => "normalized",
            WeightScheme::Clipped { .. } => "clipped",
        }
    }

    pub fn clip_threshold(&self) -> Option<f64> {
        match self {
            WeightScheme::Clipped { d_n } => Some(*d_n),
            _ => None,
        }
    }

    /// Turns raw density-ratio values into the weights the estimator uses.
    pub fn effective_weights(&self, raw: &[f64]) -> Result<Vec<f64>> {
        check_weights(raw)?;
        match *self {
            WeightScheme::Unweighted => Ok(vec![1.0; raw.len()]),
            WeightScheme::Exact => Ok(raw.to_vec()),
            WeightScheme::Normalized => normalize_weights(raw),
            WeightScheme::Clipped { d_n } => clip_weights(raw, d_n),
        }
    }
}

fn check_weights(w: &[f64]) -> Result<()> {
    contract!(!w.is_empty(), "weight vector is empty");
    contract!(
        w.iter().all(|&v| v.is_finite() && v >= 0.0),
        "weights must be finite and nonnegative"
    );
    Ok(())
}

/// `w̄_i = w_i / ((1/n) Σ_j w_j)`.
pub fn normalize_weights(w: &[f64]) -> Result<Vec<f64>> {
    check_weights(w)?;
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    if mean <= 0.0 {
        return Err(Error::Degenerate("all weights are zero".into()));
    }
    Ok(w.iter().map(|&v| v / mean).collect())
}

/// `ŵ_i = min(w_i, D_n)`.
pub fn clip_weights(w: &[f64], d_n: f64) -> Result<Vec<f64>> {
    contract!(d_n > 1.0, "clipping threshold must exceed 1, got {d_n}");
    Ok(w.iter().map(|&v| if v < d_n { v } else { d_n }).collect())
}

/// Clipping threshold `D_n` tied to the clipped-weight λ schedule.
///
/// `D_n = n^{αε}` for `1/2 ≤ r ≤ 3/2`, `n^{αε/(r − 1/2)}` for `r > 3/2`,
/// with `0 < ε < r/(2r + β)`.
pub fn clipping_threshold(n: usize, r: f64, alpha: f64, epsilon: f64, beta: f64) -> Result<f64> {
    contract!(n >= 1, "sample size must be positive");
    contract!(r >= 0.5, "regularity r must be at least 1/2, got {r}");
    contract!(alpha > 0.0 && alpha <= 1.0, "alpha must lie in (0, 1], got {alpha}");
    contract!(beta > 0.0 && beta <= 1.0, "beta must lie in (0, 1], got {beta}");
    let eps_max = r / (2.0 * r + beta);
    contract!(
        epsilon > 0.0 && epsilon < eps_max,
        "epsilon must lie in (0, {eps_max}), got {epsilon}"
    );
    let exponent = if r <= 1.5 { alpha * epsilon } else { alpha * epsilon / (r - 0.5) };
    let d_n = (n as f64).powf(exponent);
    contract!(d_n > 1.0, "n = {n} is too small for a clipping threshold above 1");
    Ok(d_n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentTerm {
    pub p: u32,
    pub lhs: f64,
    pub rhs: f64,
}

impl MomentTerm {
    pub fn ratio(&self) -> f64 {
        self.lhs / self.rhs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub terms: Vec<MomentTerm>,
    pub pass: bool,
}

/// Checks `(∫ w^{(p−1)/α} dρ_te)^α ≤ ½ p! C^{p−2} σ²` for `p = 2..=p_max`.
///
/// For `α = 0` the left side is `‖w‖_∞^{p−1}`.
pub fn check_moment_condition(
    shift: &ShiftSpec,
    alpha: f64,
    c: f64,
    sigma: f64,
    p_max: u32,
) -> Result<MomentReport> {
    contract!((2..=MAX_MOMENT_ORDER).contains(&p_max), "p_max must lie in [2, 20], got {p_max}");
    contract!((0.0..=1.0).contains(&alpha), "alpha must lie in [0, 1], got {alpha}");
    contract!(c > 0.0 && sigma > 0.0, "C and sigma must be positive");
    let mut terms = Vec::new();
    for p in 2..=p_max {
        let factorial: f64 = (1..=p).map(f64::from).product();
        let lhs = if alpha == 0.0 {
            shift.ess_sup().powi(p as i32 - 1)
        } else {
            shift.weight_moment((p - 1) as f64 / alpha).powf(alpha)
        };
        if lhs.is_nan() {
            return Err(Error::Numeric(format!("moment of order {p} is not a number")));
        }
        let rhs = 0.5 * factorial * c.powi(p as i32 - 2) * sigma * sigma;
        terms.push(MomentTerm { p, lhs, rhs });
    }
    let pass = terms.iter().all(|t| t.lhs <= t.rhs);
    Ok(MomentReport { terms, pass })
}
