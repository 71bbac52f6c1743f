//! Mercer kernels on the unit interval.
//!
//! Two families are supported: the Gaussian RBF kernel and a kernel given by
//! a truncated Mercer expansion in the trigonometric basis
//!
//! ```text
//! φ₁ ≡ 1,  φ_{2j}(x) = √2 cos(2πjx),  φ_{2j+1}(x) = √2 sin(2πjx)
//! K(x, x') = Σ_k μ_k φ_k(x) φ_k(x')
//! ```
//!
//! The trigonometric functions are orthonormal in L²(Uniform[0,1]), so the
//! integral operator of a [`KernelSpec::truncated_basis`] kernel under the
//! uniform measure has eigenpairs `(μ_k, φ_k)` exactly.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of grid points used to locate `sup_x K(x, x)`.
pub const KAPPA_GRID: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelVariant {
    /// `K(x, x') = exp(-(x - x')² / (2 bw²))`.
    GaussianRbf { bandwidth: f64 },
    /// Truncated Mercer expansion with non-increasing positive eigenvalues.
    TruncatedBasis { eigenvalues: Vec<f64> },
}

/// A validated kernel together with its constant `κ = sup_x √K(x, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelVariant", into = "KernelVariant")]
pub struct KernelSpec {
    variant: KernelVariant,
    kappa: f64,
    kappa_bound: f64,
}

impl TryFrom<KernelVariant> for KernelSpec {
    type Error = Error;

    fn try_from(variant: KernelVariant) -> Result<Self> {
        match variant {
            KernelVariant::GaussianRbf { bandwidth } => Self::gaussian_rbf(bandwidth),
            KernelVariant::TruncatedBasis { eigenvalues } => Self::truncated_basis(eigenvalues),
        }
    }
}

impl From<KernelSpec> for KernelVariant {
    fn from(spec: KernelSpec) -> Self {
        spec.variant
    }
}

impl KernelSpec {
    pub fn gaussian_rbf(bandwidth: f64) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::Contract(format!("RBF bandwidth must be positive, got {bandwidth}")));
        }
        Ok(Self { variant: KernelVariant::GaussianRbf { bandwidth }, kappa: 1.0, kappa_bound: 1.0 })
    }

    pub fn truncated_basis(eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::Contract("truncated basis needs at least one eigenvalue".into()));
        }
        if eigenvalues.iter().any(|&mu| !(mu.is_finite() && mu > 0.0)) {
            return Err(Error::Contract("eigenvalues must be finite and strictly positive".into()));
        }
        if eigenvalues.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Contract("eigenvalues must be non-increasing".into()));
        }
        let kappa_bound = (eigenvalues[0] + 2.0 * eigenvalues[1..].iter().sum::<f64>()).sqrt();
        let kappa = basis_diagonal_sup(&eigenvalues).sqrt();
        Ok(Self { variant: KernelVariant::TruncatedBasis { eigenvalues }, kappa, kappa_bound })
    }

    pub fn variant(&self) -> &KernelVariant {
        &self.variant
    }

    /// Eigenvalues of a truncated-basis kernel, `None` for RBF.
    pub fn eigenvalues(&self) -> Option<&[f64]> {
        match &self.variant {
            KernelVariant::TruncatedBasis { eigenvalues } => Some(eigenvalues),
            KernelVariant::GaussianRbf { .. } => None,
        }
    }

    /// `sup_x √K(x, x)`, located by a dense grid search for truncated bases.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Analytic upper bound `√(μ₁ + 2 Σ_{k≥2} μ_k)` on κ (equal to κ for RBF).
    pub fn kappa_bound(&self) -> f64 {
        self.kappa_bound
    }

    /// `K(x, x')`, rejecting points outside `[0, 1]`.
    pub fn eval(&self, x: f64, x_prime: f64) -> Result<f64> {
        check_point(x)?;
        check_point(x_prime)?;
        Ok(self.eval_unchecked(x, x_prime))
    }

    pub(crate) fn eval_unchecked(&self, x: f64, x_prime: f64) -> f64 {
        match &self.variant {
            KernelVariant::GaussianRbf { bandwidth } => {
                let d = x - x_prime;
                (-d * d / (2.0 * bandwidth * bandwidth)).exp()
            }
            KernelVariant::TruncatedBasis { eigenvalues } => {
                let mut sum = eigenvalues[0];
                let (mut k, mut j) = (1, 1);
                while k < eigenvalues.len() {
                    let (sa, ca) = (2.0 * PI * j as f64 * x).sin_cos();
                    let (sb, cb) = (2.0 * PI * j as f64 * x_prime).sin_cos();
                    sum += 2.0 * eigenvalues[k] * ca * cb;
                    if k + 1 < eigenvalues.len() {
                        sum += 2.0 * eigenvalues[k + 1] * sa * sb;
                    }
                    k += 2;
                    j += 1;
                }
                sum
            }
        }
    }

    /// Gram matrix `K(points[i], points[j])`.
    pub fn gram(&self, points: &[f64]) -> Result<GramMatrix> {
        if points.is_empty() {
            return Err(Error::Domain("gram matrix of an empty point set".into()));
        }
        for &x in points {
            check_point(x)?;
        }
        let n = points.len();
        let entries = match &self.variant {
            KernelVariant::GaussianRbf { .. } => DMatrix::from_fn(n, n, |i, j| {
                self.eval_unchecked(points[i], points[j])
            }),
            KernelVariant::TruncatedBasis { eigenvalues } => {
                let phi = basis_matrix(points, eigenvalues.len());
                let mut scaled = phi.clone();
                for (k, &mu) in eigenvalues.iter().enumerate() {
                    scaled.column_mut(k).scale_mut(mu);
                }
                let mut g = &scaled * phi.transpose();
                symmetrize(&mut g);
                g
            }
        };
        Ok(GramMatrix { entries, points: points.to_vec() })
    }
}

/// A kernel matrix together with the points that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub entries: DMatrix<f64>,
    pub points: Vec<f64>,
}

impl GramMatrix {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.entries.clone()).eigenvalues.min()
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.entries.amax()
    }
}

fn check_point(x: f64) -> Result<()> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("non-finite kernel input {x}")));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("kernel input {x} outside [0, 1]")));
    }
    Ok(())
}

/// `φ_k(x)` for the 1-based index `k`.
pub fn basis_function(k: usize, x: f64) -> f64 {
    assert!(k >= 1, "basis functions are 1-indexed");
    if k == 1 {
        return 1.0;
    }
    let j = (k / 2) as f64;
    let arg = 2.0 * PI * j * x;
    if k.is_multiple_of(2) {
        SQRT_2 * arg.cos()
    } else {
        SQRT_2 * arg.sin()
    }
}

/// Writes `φ_1(x), …, φ_m(x)` into `out`.
pub fn basis_row(x: f64, out: &mut [f64]) {
    let m = out.len();
    if m == 0 {
        return;
    }
    out[0] = 1.0;
    let mut k = 1;
    let mut j = 1.0;
    while k < m {
        let (s, c) = (2.0 * PI * j * x).sin_cos();
        out[k] = SQRT_2 * c;
        if k + 1 < m {
            out[k + 1] = SQRT_2 * s;
        }
        k += 2;
        j += 1.0;
    }
}

/// Feature matrix `Φ[i][k] = φ_{k+1}(points[i])`.
pub fn basis_matrix(points: &[f64], m: usize) -> DMatrix<f64> {
    let mut phi = DMatrix::zeros(points.len(), m);
    let mut row = vec![0.0; m];
    for (i, &x) in points.iter().enumerate() {
        basis_row(x, &mut row);
        for (k, &v) in row.iter().enumerate() {
            phi[(i, k)] = v;
        }
    }
    phi
}

fn basis_diagonal_sup(eigenvalues: &[f64]) -> f64 {
    let m = eigenvalues.len();
    let mut row = vec![0.0; m];
    let mut best = f64::NEG_INFINITY;
    for i in 0..KAPPA_GRID {
        let x = i as f64 / (KAPPA_GRID - 1) as f64;
        basis_row(x, &mut row);
        let d: f64 = row.iter().zip(eigenvalues).map(|(p, mu)| mu * p * p).sum();
        best = best.max(d);
    }
    best
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn specs() -> Vec<KernelSpec> {
        vec![
            KernelSpec::gaussian_rbf(0.1).unwrap(),
            KernelSpec::gaussian_rbf(1.0).unwrap(),
            KernelSpec::truncated_basis(vec![1.0, 0.5, 0.25, 0.125, 0.0625]).unwrap(),
            KernelSpec::truncated_basis((1..=64).map(|k| (k as f64).powi(-2)).collect()).unwrap(),
        ]
    }

    #[test]
    fn eval_examples() {
        let rbf = KernelSpec::gaussian_rbf(1.0).unwrap();
        assert_eq!(rbf.eval(0.3, 0.3).unwrap(), 1.0);
        let one = KernelSpec::truncated_basis(vec![1.0]).unwrap();
        assert_eq!(one.eval(0.1, 0.9).unwrap(), 1.0);
        let two = KernelSpec::truncated_basis(vec![1.0, 0.5]).unwrap();
        assert_abs_diff_eq!(two.eval(0.0, 0.0).unwrap(), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn eval_rejects_bad_inputs() {
        let rbf = KernelSpec::gaussian_rbf(1.0).unwrap();
        assert!(matches!(rbf.eval(f64::NAN, 0.0), Err(Error::Domain(_))));
        assert!(matches!(rbf.eval(0.0, f64::INFINITY), Err(Error::Domain(_))));
        assert!(matches!(rbf.eval(1.5, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(KernelSpec::gaussian_rbf(0.0).is_err());
        assert!(KernelSpec::truncated_basis(vec![]).is_err());
        assert!(KernelSpec::truncated_basis(vec![1.0, 0.0]).is_err());
        assert!(KernelSpec::truncated_basis(vec![0.5, 1.0]).is_err());
    }

    #[test]
    fn gram_examples() {
        let rbf = KernelSpec::gaussian_rbf(1.0).unwrap();
        assert_eq!(rbf.gram(&[0.5]).unwrap().entries[(0, 0)], 1.0);

        let ones = KernelSpec::truncated_basis(vec![1.0]).unwrap().gram(&[0.1, 0.4, 0.8]).unwrap();
        assert!(ones.entries.iter().all(|&v| (v - 1.0).abs() < 1e-15));

        let narrow = KernelSpec::gaussian_rbf(0.1).unwrap().gram(&[0.0, 0.1]).unwrap();
        let off = (-0.5f64).exp();
        assert_abs_diff_eq!(narrow.entries[(0, 1)], off, epsilon = 1e-15);
        assert_abs_diff_eq!(narrow.entries[(1, 0)], off, epsilon = 1e-15);
        assert_eq!(narrow.entries[(0, 0)], 1.0);

        assert!(matches!(rbf.gram(&[]), Err(Error::Domain(_))));
    }

    #[test]
    fn kappa_examples() {
        assert_eq!(KernelSpec::gaussian_rbf(0.3).unwrap().kappa(), 1.0);
        assert_eq!(KernelSpec::truncated_basis(vec![1.0]).unwrap().kappa(), 1.0);
        let spec = KernelSpec::truncated_basis(vec![1.0, 0.25]).unwrap();
        // K(x,x) = 1 + 0.5 cos²(2πx), maximized at x = 0.
        assert_abs_diff_eq!(spec.kappa(), 1.5f64.sqrt(), epsilon = 1e-12);
        assert!(spec.kappa() <= spec.kappa_bound() + 1e-12);
    }

    #[test]
    fn gram_is_psd_on_random_point_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for spec in specs() {
            for _ in 0..100 {
                let n = rng.random_range(1..=50);
                let pts: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
                let g = spec.gram(&pts).unwrap();
                assert!(g.min_eigenvalue() >= -1e-10 * g.max_abs_entry());
                assert_eq!(g.entries, g.entries.transpose());
            }
        }
    }

    #[test]
    fn diagonal_bounded_by_kappa() {
        for spec in specs() {
            let k2 = spec.kappa() * spec.kappa();
            for i in 0..=2000 {
                let x = i as f64 / 2000.0;
                assert!(spec.eval(x, x).unwrap() <= k2 + 1e-9);
            }
        }
    }

    #[test]
    fn basis_gram_matches_feature_product() {
        let mu: Vec<f64> = (1..=33).map(|k| 1.0 / k as f64).collect();
        let spec = KernelSpec::truncated_basis(mu.clone()).unwrap();
        let pts: Vec<f64> = (0..17).map(|i| (i as f64 * 0.618).fract()).collect();
        let g = spec.gram(&pts).unwrap();
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                let direct: f64 = (1..=mu.len())
                    .map(|k| mu[k - 1] * basis_function(k, pts[i]) * basis_function(k, pts[j]))
                    .sum();
                assert_abs_diff_eq!(g.entries[(i, j)], direct, epsilon = 1e-12);
                assert_abs_diff_eq!(spec.eval(pts[i], pts[j]).unwrap(), direct, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn serde_round_trip_recomputes_kappa() {
        let spec = KernelSpec::truncated_basis(vec![1.0, 0.25, 0.1]).unwrap();
        let text = serde_json::to_string(&spec).unwrap();
        let back: KernelSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(spec, back);
        let bad = r#"{"kind":"truncated_basis","eigenvalues":[0.1,1.0]}"#;
        assert!(serde_json::from_str::<KernelSpec>(bad).is_err());
    }
}
