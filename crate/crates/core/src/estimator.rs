//! Weighted spectral estimators `f = g_λ(S_Xᵀ W S_X) S_Xᵀ W y`.
//!
//! With effective weights `v` and `s = √v`, the operator `S_Xᵀ W S_X` on the
//! RKHS shares its nonzero spectrum with the symmetric n×n matrix
//!
//! ```text
//! M = (1/n) diag(s) K diag(s)
//! ```
//!
//! and `g(BC) B = B g(CB)` with `B = S_Xᵀ W^{1/2}` gives the coefficient
//! vector `c = g_λ(M) (s ⊙ y)` of `f(x) = (1/n) Σ s_i c_i K(x, x_i)`.
//!
//! Before filtering, `M` is divided by `ρ = κ² max(v)` so its spectrum lies
//! in `[0, 1]`. Tikhonov and spectral cutoff are invariant under this
//! rescaling (`g_{λ/ρ}(u/ρ)/ρ = g_λ(u)`); for Landweber the rescaled problem
//! defines the iteration and `λ = 1/t` is read in rescaled units.
//!
//! For truncated-basis kernels, [`fit_basis`] computes the same function from
//! the m×m matrix `BᵀB` instead, which is what large sweeps use.

use nalgebra::{DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::filters::{FilterKind, FilterSpec, DOMAIN_CAP};
use crate::kernels::{basis_matrix, basis_row, symmetrize, KernelSpec};
use crate::shift_weights::WeightScheme;

/// Eigenvalues in `[-PSD_CLAMP·‖M‖, 0)` are treated as round-off and set to 0.
const PSD_CLAMP: f64 = 1e-8;
/// Allowed overshoot of the rescaled spectrum above `U = 1`.
const CAP_SLACK: f64 = 1e-9;
const DIVERGENCE_LIMIT: f64 = 1e12;

/// Training sample with the density ratio evaluated at each input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub raw_weights: Vec<f64>,
}

impl Dataset {
    pub fn new(x: Vec<f64>, y: Vec<f64>, raw_weights: Vec<f64>) -> Result<Self> {
        contract!(!x.is_empty(), "dataset is empty");
        contract!(
            x.len() == y.len() && x.len() == raw_weights.len(),
            "dataset columns differ in length: x={}, y={}, w={}",
            x.len(),
            y.len(),
            raw_weights.len()
        );
        contract!(
            raw_weights.iter().all(|w| w.is_finite() && *w >= 0.0),
            "weights must be finite and nonnegative"
        );
        contract!(y.iter().all(|v| v.is_finite()), "labels must be finite");
        contract!(
            x.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)),
            "inputs must lie in [0, 1]"
        );
        Ok(Self { x, y, raw_weights })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn with_labels(&self, y: Vec<f64>) -> Result<Self> {
        Self::new(self.x.clone(), y, self.raw_weights.clone())
    }
}

/// Anything that can be evaluated at a point of `[0, 1]`.
pub trait Predictor {
    fn predict(&self, x: f64) -> Result<f64>;

    fn predict_many(&self, xs: &[f64]) -> Result<Vec<f64>> {
        xs.iter().map(|&x| self.predict(x)).collect()
    }
}

/// Fitted kernel expansion `f(x) = (1/n) Σ s_i c_i K(x, anchors_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralEstimator {
    pub anchors: Vec<f64>,
    pub sqrt_weights: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub kernel: KernelSpec,
    /// Operator rescaling factor `ρ = κ² max(v)`.
    pub rescale: f64,
    /// λ at which the filter was evaluated on the rescaled spectrum.
    pub lambda_effective: f64,
}

impl SpectralEstimator {
    /// Coefficients in the kernel's trigonometric basis, for truncated-basis kernels.
    pub fn basis_coefficients(&self) -> Option<Vec<f64>> {
        let mu = self.kernel.eigenvalues()?;
        let n = self.anchors.len() as f64;
        let mut out = vec![0.0; mu.len()];
        let mut row = vec![0.0; mu.len()];
        for ((&a, &s), &c) in self.anchors.iter().zip(&self.sqrt_weights).zip(&self.coefficients) {
            basis_row(a, &mut row);
            for (o, &p) in out.iter_mut().zip(&row) {
                *o += s * c * p;
            }
        }
        for (o, &m) in out.iter_mut().zip(mu) {
            *o *= m / n;
        }
        Some(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let est: Self = serde_json::from_str(text)?;
        let n = est.anchors.len();
        contract!(
            n > 0 && est.sqrt_weights.len() == n && est.coefficients.len() == n,
            "model vectors must be nonempty and equally long"
        );
        Ok(est)
    }
}

impl Predictor for SpectralEstimator {
    fn predict(&self, x: f64) -> Result<f64> {
        let n = self.anchors.len() as f64;
        let mut sum = 0.0;
        for ((&a, &s), &c) in self.anchors.iter().zip(&self.sqrt_weights).zip(&self.coefficients) {
            sum += s * c * self.kernel.eval(x, a)?;
        }
        Ok(sum / n)
    }
}

/// A function `Σ_k β_k φ_k` in the trigonometric basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisEstimator {
    pub coefficients: Vec<f64>,
    pub rescale: f64,
    pub lambda_effective: f64,
}

impl Predictor for BasisEstimator {
    fn predict(&self, x: f64) -> Result<f64> {
        if !(x.is_finite() && (0.0..=1.0).contains(&x)) {
            return Err(Error::Domain(format!("prediction input {x} outside [0, 1]")));
        }
        let mut row = vec![0.0; self.coefficients.len()];
        basis_row(x, &mut row);
        Ok(row.iter().zip(&self.coefficients).map(|(p, b)| p * b).sum())
    }
}

struct Prepared {
    sqrt_weights: Vec<f64>,
    rescale: f64,
}

fn prepare(data: &Dataset, kernel: &KernelSpec, scheme: WeightScheme) -> Result<Prepared> {
    let weights = scheme.effective_weights(&data.raw_weights)?;
    let vmax = weights.iter().cloned().fold(0.0, f64::max);
    if vmax <= 0.0 {
        return Err(Error::Degenerate("all effective weights are zero".into()));
    }
    let sqrt_weights = weights.iter().map(|v| v.sqrt()).collect();
    let kappa = kernel.kappa();
    Ok(Prepared { sqrt_weights, rescale: kappa * kappa * vmax })
}

/// λ fed to the filter on the rescaled spectrum.
fn rescaled_lambda(filter: &FilterSpec, lambda: f64, rescale: f64) -> Result<f64> {
    let lam = match filter.kind() {
        FilterKind::Landweber { .. } => lambda,
        _ => lambda / rescale,
    };
    filter.check_lambda(lam)?;
    Ok(lam)
}

fn eigen(matrix: DMatrix<f64>) -> Result<SymmetricEigen<f64, Dyn>> {
    SymmetricEigen::try_new(matrix, f64::EPSILON, 1_000_000)
        .ok_or_else(|| Error::Numeric("symmetric eigendecomposition did not converge".into()))
}

/// Applies `g_λ` to a rescaled spectrum after clamping round-off.
fn filtered_spectrum(filter: &FilterSpec, lambda: f64, theta: &DVector<f64>) -> Result<Vec<f64>> {
    let scale = theta.amax();
    theta
        .iter()
        .map(|&t| {
            if t < -PSD_CLAMP * scale.max(f64::MIN_POSITIVE) {
                return Err(Error::Numeric(format!(
                    "operator has eigenvalue {t} below the PSD tolerance"
                )));
            }
            if t > DOMAIN_CAP + CAP_SLACK {
                return Err(Error::Numeric(format!("rescaled eigenvalue {t} exceeds 1")));
            }
            Ok(filter.value(lambda, t.clamp(0.0, DOMAIN_CAP)))
        })
        .collect()
}

/// `Q diag(g) Qᵀ v`.
fn spectral_apply(eig: &SymmetricEigen<f64, Dyn>, g: &[f64], v: &DVector<f64>) -> DVector<f64> {
    let mut proj = eig.eigenvectors.tr_mul(v);
    for (p, gi) in proj.iter_mut().zip(g) {
        *p *= gi;
    }
    &eig.eigenvectors * proj
}

/// The symmetric matrix `M = (1/n) diag(s) K diag(s)`.
pub fn weighted_operator(data: &Dataset, kernel: &KernelSpec, sqrt_weights: &[f64]) -> Result<DMatrix<f64>> {
    let n = data.len();
    let gram = kernel.gram(&data.x)?;
    let mut m = gram.entries;
    for j in 0..n {
        for i in 0..n {
            m[(i, j)] *= sqrt_weights[i] * sqrt_weights[j] / n as f64;
        }
    }
    Ok(m)
}

/// Fits the weighted spectral estimator through the n×n reduction.
pub fn fit(
    data: &Dataset,
    kernel: &KernelSpec,
    filter: &FilterSpec,
    lambda: f64,
    scheme: WeightScheme,
) -> Result<SpectralEstimator> {
    let prep = prepare(data, kernel, scheme)?;
    let lam = rescaled_lambda(filter, lambda, prep.rescale)?;
    let mut m = weighted_operator(data, kernel, &prep.sqrt_weights)?;
    m /= prep.rescale;
    let eig = eigen(m)?;
    let g = filtered_spectrum(filter, lam, &eig.eigenvalues)?;
    let sy = DVector::from_iterator(
        data.len(),
        prep.sqrt_weights.iter().zip(&data.y).map(|(s, y)| s * y),
    );
    let c = spectral_apply(&eig, &g, &sy) / prep.rescale;
    Ok(SpectralEstimator {
        anchors: data.x.clone(),
        sqrt_weights: prep.sqrt_weights,
        coefficients: c.iter().cloned().collect(),
        kernel: kernel.clone(),
        rescale: prep.rescale,
        lambda_effective: lam,
    })
}

/// Landweber by explicit gradient steps `a ← a + (s⊙y − M a)/ρ` from `a = 0`.
pub fn fit_landweber_iterative(
    data: &Dataset,
    kernel: &KernelSpec,
    t: u32,
    scheme: WeightScheme,
) -> Result<SpectralEstimator> {
    contract!(t >= 1, "Landweber needs t >= 1");
    let prep = prepare(data, kernel, scheme)?;
    let m = weighted_operator(data, kernel, &prep.sqrt_weights)?;
    let eta = 1.0 / prep.rescale;
    let target = DVector::from_iterator(
        data.len(),
        prep.sqrt_weights.iter().zip(&data.y).map(|(s, y)| s * y),
    );
    let mut a = DVector::zeros(data.len());
    for step in 0..t {
        let residual = &target - &m * &a;
        a += residual * eta;
        if a.amax() > DIVERGENCE_LIMIT || a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "Landweber iterates diverged at step {step}; step size and rescaling disagree"
            )));
        }
    }
    Ok(SpectralEstimator {
        anchors: data.x.clone(),
        sqrt_weights: prep.sqrt_weights,
        coefficients: a.iter().cloned().collect(),
        kernel: kernel.clone(),
        rescale: prep.rescale,
        lambda_effective: 1.0 / t as f64,
    })
}

/// Fits the same estimator as [`fit`] in the kernel's eigenbasis.
///
/// With `B = diag(s) Φ diag(√μ) / √n`, the prediction only depends on
/// `Bᵀ c = g(BᵀB) Bᵀ (s⊙y)`, so an m×m eigendecomposition suffices.
/// Requires a truncated-basis kernel.
pub fn fit_basis(
    data: &Dataset,
    kernel: &KernelSpec,
    filter: &FilterSpec,
    lambda: f64,
    scheme: WeightScheme,
) -> Result<BasisEstimator> {
    let mu = kernel
        .eigenvalues()
        .ok_or_else(|| Error::Contract("basis fitting needs a truncated-basis kernel".into()))?;
    let prep = prepare(data, kernel, scheme)?;
    let lam = rescaled_lambda(filter, lambda, prep.rescale)?;
    let n = data.len();
    let m = mu.len();
    let root_n = (n as f64).sqrt();

    let mut b = basis_matrix(&data.x, m);
    let sqrt_mu: Vec<f64> = mu.iter().map(|v| v.sqrt()).collect();
    for (k, &sm) in sqrt_mu.iter().enumerate() {
        b.column_mut(k).scale_mut(sm / root_n);
    }
    for (i, &s) in prep.sqrt_weights.iter().enumerate() {
        b.row_mut(i).scale_mut(s);
    }
    let sy = DVector::from_iterator(n, prep.sqrt_weights.iter().zip(&data.y).map(|(s, y)| s * y));
    let bty = b.tr_mul(&sy);
    let mut gram = b.transpose() * &b;
    symmetrize(&mut gram);
    gram /= prep.rescale;
    let eig = eigen(gram)?;
    let g = filtered_spectrum(filter, lam, &eig.eigenvalues)?;
    let inner = spectral_apply(&eig, &g, &bty) / prep.rescale;
    let coefficients = inner.iter().zip(&sqrt_mu).map(|(v, sm)| v * sm / root_n).collect();
    Ok(BasisEstimator { coefficients, rescale: prep.rescale, lambda_effective: lam })
}

/// Eigenvalues of `M = (1/n) diag(s) K diag(s)` (unscaled), ascending.
pub fn operator_spectrum(data: &Dataset, kernel: &KernelSpec, scheme: WeightScheme) -> Result<Vec<f64>> {
    let prep = prepare(data, kernel, scheme)?;
    let m = weighted_operator(data, kernel, &prep.sqrt_weights)?;
    let mut ev: Vec<f64> = eigen(m)?.eigenvalues.iter().cloned().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    Ok(ev)
}
