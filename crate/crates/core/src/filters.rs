//! Spectral filter functions `g_λ : [0, U] → ℝ`.
//!
//! A filter with qualification `ν_g` satisfies, for `0 < λ ≤ U`,
//!
//! ```text
//! sup |g_λ(u)| ≤ b/λ,   sup |g_λ(u) u| ≤ b,
//! sup |1 − g_λ(u) u| u^ν ≤ γ_ν λ^ν   for 0 < ν ≤ ν_g.
//! ```
//!
//! Operators are rescaled before filtering so the spectrum lies in `[0, 1]`;
//! the domain cap `U` is therefore 1 for every filter here.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Domain cap `U` after operator rescaling.
pub const DOMAIN_CAP: f64 = 1.0;

/// Below this `u` the Landweber closed form is replaced by its limit `t`.
const LANDWEBER_SMALL_U: f64 = 1e-12;

/// Largest iteration count scanned when computing Landweber's `γ_ν`.
pub const LANDWEBER_GAMMA_HORIZON: u32 = 1000;

/// `ν` values tabulated by [`FilterSpec::constants`].
pub const TABULATED_NU: [f64; 6] = [0.5, 1.0, 1.5, 2.0, 3.0, 4.0];

const REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FilterKind {
    /// `g_λ(u) = 1/(λ + u)`.
    Tikhonov,
    /// `g_λ(u) = Σ_{i<t} (1 − u)^i`, `λ = 1/t`.
    Landweber { t: u32 },
    /// `g_λ(u) = 1/u` for `u ≥ λ`, else 0.
    SpectralCutoff,
}

impl FilterKind {
    pub fn tag(&self) -> String {
        match self {
            FilterKind::Tikhonov => "tikhonov".into(),
            FilterKind::Landweber { t } => format!("landweber{t}"),
            FilterKind::SpectralCutoff => "cutoff".into(),
        }
    }
}

/// A filter function plus its constants `b`, `ν_g`, `γ_ν`.
#[derive(Debug, Clone)]
pub struct FilterSpec {
    kind: FilterKind,
    gamma_table: OnceLock<Vec<(f64, f64)>>,
}

impl PartialEq for FilterSpec {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

/// The triple `(b, ν_g, γ)` of a filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterConstants {
    pub b: f64,
    /// `f64::INFINITY` for filters with unlimited qualification.
    pub qualification: f64,
    pub gamma_table: Vec<(f64, f64)>,
}

impl FilterSpec {
    pub fn new(kind: FilterKind) -> Result<Self> {
        if let FilterKind::Landweber { t } = kind {
            if t == 0 {
                return Err(Error::Contract("Landweber needs t >= 1".into()));
            }
        }
        Ok(Self { kind, gamma_table: OnceLock::new() })
    }

    pub fn tikhonov() -> Self {
        Self { kind: FilterKind::Tikhonov, gamma_table: OnceLock::new() }
    }

    pub fn spectral_cutoff() -> Self {
        Self { kind: FilterKind::SpectralCutoff, gamma_table: OnceLock::new() }
    }

    pub fn landweber(t: u32) -> Result<Self> {
        Self::new(FilterKind::Landweber { t })
    }

    /// Landweber filter whose step count best matches a requested `λ`.
    ///
    /// Returns the filter with `t = round(1/λ)` and the effective `λ = 1/t`.
    pub fn landweber_for_lambda(lambda: f64) -> Result<(Self, f64)> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::Contract(format!("lambda must be positive, got {lambda}")));
        }
        let t = (1.0 / lambda).round().max(1.0);
        if t > u32::MAX as f64 {
            return Err(Error::Contract(format!("lambda {lambda} needs too many Landweber steps")));
        }
        let t = t as u32;
        Ok((Self::landweber(t)?, 1.0 / t as f64))
    }

    pub fn kind(&self) -> FilterKind {
        self.kind
    }

    pub fn b(&self) -> f64 {
        1.0
    }

    pub fn qualification(&self) -> f64 {
        match self.kind {
            FilterKind::Tikhonov => 1.0,
            FilterKind::Landweber { .. } | FilterKind::SpectralCutoff => f64::INFINITY,
        }
    }

    pub fn domain_cap(&self) -> f64 {
        DOMAIN_CAP
    }

    /// `γ_ν`, or `None` when `ν` exceeds the qualification.
    pub fn gamma(&self, nu: f64) -> Option<f64> {
        if nu.is_nan() || nu <= 0.0 || nu > self.qualification() {
            return None;
        }
        match self.kind {
            FilterKind::Tikhonov | FilterKind::SpectralCutoff => Some(1.0),
            FilterKind::Landweber { t } => {
                Some(landweber_gamma(nu, t.max(LANDWEBER_GAMMA_HORIZON)))
            }
        }
    }

    pub fn constants(&self) -> FilterConstants {
        let table = self
            .gamma_table
            .get_or_init(|| {
                TABULATED_NU.iter().filter_map(|&nu| self.gamma(nu).map(|g| (nu, g))).collect()
            })
            .clone();
        FilterConstants { b: self.b(), qualification: self.qualification(), gamma_table: table }
    }

    /// `g_λ(u)`. For Landweber, `λ` must equal `1/t`.
    pub fn apply(&self, lambda: f64, u: f64) -> Result<f64> {
        self.check_lambda(lambda)?;
        check_u(u)?;
        Ok(self.value(lambda, u))
    }

    /// Residual `1 − u g_λ(u)`.
    pub fn residual(&self, lambda: f64, u: f64) -> Result<f64> {
        self.check_lambda(lambda)?;
        check_u(u)?;
        Ok(self.residual_value(lambda, u))
    }

    /// `1 − u g_λ(u)` in closed form, free of the cancellation in the direct difference.
    pub(crate) fn residual_value(&self, lambda: f64, u: f64) -> f64 {
        match self.kind {
            FilterKind::Tikhonov => lambda / (lambda + u),
            FilterKind::Landweber { t } => landweber_residual(t, u),
            FilterKind::SpectralCutoff => {
                if u >= lambda {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }

    pub(crate) fn check_lambda(&self, lambda: f64) -> Result<()> {
        if !(lambda.is_finite() && lambda > 0.0 && lambda <= DOMAIN_CAP) {
            return Err(Error::Domain(format!("lambda {lambda} outside (0, {DOMAIN_CAP}]")));
        }
        if let FilterKind::Landweber { t } = self.kind {
            let expected = 1.0 / t as f64;
            if (lambda - expected).abs() > 1e-12 {
                return Err(Error::Inconsistent(format!(
                    "Landweber with t = {t} requires lambda = {expected}, got {lambda}"
                )));
            }
        }
        Ok(())
    }

    /// Unchecked evaluation; `u` must already lie in `[0, U]`.
    pub(crate) fn value(&self, lambda: f64, u: f64) -> f64 {
        match self.kind {
            FilterKind::Tikhonov => 1.0 / (lambda + u),
            FilterKind::Landweber { t } => landweber_value(t, u),
            FilterKind::SpectralCutoff => {
                if u >= lambda {
                    1.0 / u
                } else {
                    0.0
                }
            }
        }
    }
}

fn check_u(u: f64) -> Result<()> {
    if !(0.0..=DOMAIN_CAP).contains(&u) {
        return Err(Error::Domain(format!("filter argument {u} outside [0, {DOMAIN_CAP}]")));
    }
    Ok(())
}

fn landweber_value(t: u32, u: f64) -> f64 {
    if u <= LANDWEBER_SMALL_U {
        return t as f64;
    }
    // 1 − (1 − u)^t without cancellation for small u.
    -(t as f64 * (-u).ln_1p()).exp_m1() / u
}

fn landweber_residual(t: u32, u: f64) -> f64 {
    (1.0 - u).powi(t as i32)
}

/// `sup_{u∈[0,1]} (1 − u)^t u^ν / λ^ν` at `λ = 1/t`, on a grid plus the stationary point.
pub fn landweber_residual_sup(t: u32, nu: f64) -> f64 {
    const GRID: usize = 1001;
    let lam_nu = (1.0 / t as f64).powf(nu);
    let eval = |u: f64| landweber_residual(t, u) * u.powf(nu) / lam_nu;
    let stationary = nu / (t as f64 + nu);
    (0..GRID)
        .map(|i| i as f64 / (GRID - 1) as f64)
        .chain(std::iter::once(stationary))
        .map(eval)
        .fold(0.0, f64::max)
}

/// Landweber `γ_ν`: maximum residual ratio over `λ = 1/t'`, `t' = 1..=horizon`.
pub fn landweber_gamma(nu: f64, horizon: u32) -> f64 {
    (1..=horizon).map(|t| landweber_residual_sup(t, nu)).fold(0.0, f64::max)
}

/// Worst residual ratio `|1 − g_λ(u)u| u^ν / (γ_ν λ^ν)` at one `(λ, ν)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualCheck {
    pub lambda: f64,
    pub nu: f64,
    pub gamma: f64,
    pub worst_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterReport {
    pub filter: String,
    /// `max |g_λ(u)| λ / b` over the grid.
    pub bound_ratio: f64,
    /// `max |g_λ(u) u| / b` over the grid.
    pub product_ratio: f64,
    pub residuals: Vec<ResidualCheck>,
    /// Requested `ν` values above the qualification, skipped.
    pub excluded_nu: Vec<f64>,
    pub pass: bool,
}

impl FilterReport {
    pub fn worst_residual_ratio(&self) -> f64 {
        self.residuals.iter().map(|r| r.worst_ratio).fold(0.0, f64::max)
    }
}

/// Checks both filter conditions at every grid point.
///
/// For Landweber each `λ` in the grid selects the filter with `t = 1/λ`,
/// so grid values must be reciprocals of integers.
pub fn verify_filter_conditions(
    filter: &FilterSpec,
    lambda_grid: &[f64],
    u_grid: &[f64],
    nu_list: &[f64],
) -> Result<FilterReport> {
    if lambda_grid.is_empty() || u_grid.is_empty() {
        return Err(Error::Contract("filter verification grids must be nonempty".into()));
    }
    for &u in u_grid {
        check_u(u)?;
    }
    let mut per_lambda = Vec::with_capacity(lambda_grid.len());
    for &lambda in lambda_grid {
        let spec = match filter.kind {
            FilterKind::Landweber { .. } => {
                let (spec, eff) = FilterSpec::landweber_for_lambda(lambda)?;
                if (eff - lambda).abs() > 1e-12 {
                    return Err(Error::Inconsistent(format!(
                        "Landweber grid value {lambda} is not 1/t for an integer t"
                    )));
                }
                spec
            }
            _ => filter.clone(),
        };
        spec.check_lambda(lambda)?;
        per_lambda.push((lambda, spec));
    }

    let (active, excluded): (Vec<f64>, Vec<f64>) =
        nu_list.iter().partition(|&&nu| nu <= filter.qualification());
    let gammas: Vec<f64> = active
        .iter()
        .map(|&nu| {
            filter
                .gamma(nu)
                .ok_or_else(|| Error::Contract(format!("nu = {nu} must be positive")))
        })
        .collect::<Result<_>>()?;

    let b = filter.b();
    let mut bound_ratio = 0.0f64;
    let mut product_ratio = 0.0f64;
    let mut residuals = Vec::with_capacity(per_lambda.len() * active.len());
    for (lambda, spec) in &per_lambda {
        let mut worst = vec![0.0f64; active.len()];
        for &u in u_grid {
            let g = spec.value(*lambda, u);
            bound_ratio = bound_ratio.max(g.abs() * lambda / b);
            product_ratio = product_ratio.max((g * u).abs() / b);
            let res = spec.residual_value(*lambda, u).abs();
            for (i, &nu) in active.iter().enumerate() {
                let ratio = res * u.powf(nu) / (gammas[i] * lambda.powf(nu));
                worst[i] = worst[i].max(ratio);
            }
        }
        for (i, &nu) in active.iter().enumerate() {
            residuals.push(ResidualCheck {
                lambda: *lambda,
                nu,
                gamma: gammas[i],
                worst_ratio: worst[i],
            });
        }
    }
    let limit = 1.0 + REL_TOL;
    let pass = bound_ratio <= limit
        && product_ratio <= limit
        && residuals.iter().all(|r| r.worst_ratio <= limit);
    Ok(FilterReport {
        filter: filter.kind.tag(),
        bound_ratio,
        product_ratio,
        residuals,
        excluded_nu: excluded,
        pass,
    })
}

/// `{1/t : t = 1..=count}`, the natural λ grid for Landweber.
pub fn landweber_lambda_grid(count: u32) -> Vec<f64> {
    (1..=count).map(|t| 1.0 / t as f64).collect()
}
