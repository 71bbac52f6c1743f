use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use spectral_shift::estimator::{fit_landweber_iterative, operator_spectrum, weighted_operator};
use spectral_shift::metrics::excess_risk_exact;
use spectral_shift::{fit, fit_basis, make_problem, Dataset, FilterSpec, KernelSpec, Predictor, ShiftSpec, WeightScheme};

fn dataset() -> impl Strategy<Value = Dataset> {
    (2usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(0.0f64..=1.0, n),
            prop::collection::vec(-2.0f64..2.0, n),
            prop::collection::vec(0.05f64..5.0, n),
        )
            .prop_map(|(x, y, w)| Dataset::new(x, y, w).unwrap())
    })
}

fn scheme() -> impl Strategy<Value = WeightScheme> {
    prop_oneof![
        Just(WeightScheme::Unweighted),
        Just(WeightScheme::Exact),
        Just(WeightScheme::Normalized),
        (1.1f64..4.0).prop_map(|d_n| WeightScheme::Clipped { d_n }),
    ]
}

fn kernel() -> impl Strategy<Value = KernelSpec> {
    prop_oneof![
        (0.05f64..0.8).prop_map(|h| KernelSpec::gaussian_rbf(h).unwrap()),
        (0.3f64..=1.0, 2usize..12).prop_map(|(beta, m)| {
            KernelSpec::truncated_basis((1..=m).map(|k| (k as f64).powf(-1.0 / beta)).collect()).unwrap()
        }),
    ]
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tikhonov_matches_direct_solve(data in dataset(), k in kernel(), scheme in scheme(), log_lambda in -3.0f64..0.0) {
        let lambda = 10f64.powf(log_lambda);
        let est = fit(&data, &k, &FilterSpec::tikhonov(), lambda, scheme).unwrap();
        let v = scheme.effective_weights(&data.raw_weights).unwrap();
        let s: Vec<f64> = v.iter().map(|w| w.sqrt()).collect();
        let n = data.len();
        let m = weighted_operator(&data, &k, &s).unwrap();
        let rhs = DVector::from_iterator(n, s.iter().zip(&data.y).map(|(s, y)| s * y));
        let direct = (m + DMatrix::identity(n, n) * lambda).lu().solve(&rhs).unwrap();
        let scale = direct.amax().max(1e-300);
        prop_assert!(max_abs_diff(&est.coefficients, direct.as_slice()) <= 1e-8 * scale);
    }

    #[test]
    fn landweber_paths_agree(data in dataset(), k in kernel(), scheme in scheme(), t in 1u32..150) {
        let spectral = fit(&data, &k, &FilterSpec::landweber(t).unwrap(), 1.0 / t as f64, scheme).unwrap();
        let iterative = fit_landweber_iterative(&data, &k, t, scheme).unwrap();
        let scale = iterative.coefficients.iter().map(|c| c.abs()).fold(1.0, f64::max);
        prop_assert!(max_abs_diff(&spectral.coefficients, &iterative.coefficients) <= 1e-8 * scale);
    }

    #[test]
    fn labels_enter_linearly(data in dataset(), k in kernel(), scheme in scheme(), other in prop::collection::vec(-2.0f64..2.0, 40)) {
        let filter = FilterSpec::spectral_cutoff();
        let y2: Vec<f64> = other[..data.len()].to_vec();
        let sum: Vec<f64> = data.y.iter().zip(&y2).map(|(a, b)| a + b).collect();
        let c1 = fit(&data, &k, &filter, 0.01, scheme).unwrap().coefficients;
        let c2 = fit(&data.with_labels(y2).unwrap(), &k, &filter, 0.01, scheme).unwrap().coefficients;
        let c12 = fit(&data.with_labels(sum).unwrap(), &k, &filter, 0.01, scheme).unwrap().coefficients;
        let combined: Vec<f64> = c1.iter().zip(&c2).map(|(a, b)| a + b).collect();
        let scale = c12.iter().map(|c| c.abs()).fold(1.0, f64::max);
        prop_assert!(max_abs_diff(&c12, &combined) <= 1e-10 * scale);
    }

    #[test]
    fn spectrum_is_sandwiched(data in dataset(), k in kernel(), scheme in scheme()) {
        let v = scheme.effective_weights(&data.raw_weights).unwrap();
        let vmax = v.iter().cloned().fold(0.0, f64::max);
        let bound = k.kappa().powi(2) * vmax;
        let ev = operator_spectrum(&data, &k, scheme).unwrap();
        prop_assert!(ev[0] >= -1e-8 * bound);
        prop_assert!(*ev.last().unwrap() <= bound * (1.0 + 1e-9));
    }

    #[test]
    fn tikhonov_shrinks_with_lambda(data in dataset(), k in kernel(), scheme in scheme(), a in -3.0f64..-0.5, gap in 0.1f64..2.0) {
        let norm = |lambda: f64| {
            let c = fit(&data, &k, &FilterSpec::tikhonov(), lambda, scheme).unwrap().coefficients;
            c.iter().map(|v| v * v).sum::<f64>().sqrt()
        };
        let small = norm(10f64.powf(a));
        let large = norm(10f64.powf((a + gap).min(0.0)));
        prop_assert!(small >= large * (1.0 - 1e-12));
    }

    #[test]
    fn schemes_collapse_without_shift(data in dataset(), k in kernel()) {
        let data = Dataset::new(data.x.clone(), data.y.clone(), vec![1.0; data.len()]).unwrap();
        let probe: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        let filter = FilterSpec::tikhonov();
        let base = fit(&data, &k, &filter, 0.05, WeightScheme::Unweighted).unwrap().predict_many(&probe).unwrap();
        for scheme in [WeightScheme::Exact, WeightScheme::Normalized, WeightScheme::Clipped { d_n: 2.0 }] {
            prop_assert_eq!(scheme.effective_weights(&data.raw_weights).unwrap(), vec![1.0; data.len()]);
            let other = fit(&data, &k, &filter, 0.05, scheme).unwrap().predict_many(&probe).unwrap();
            prop_assert!(max_abs_diff(&base, &other) <= 1e-12);
        }
    }
}

#[test]
fn basis_route_matches_gram_route() {
    let filters = [
        (FilterSpec::tikhonov(), 0.01),
        (FilterSpec::spectral_cutoff(), 0.02),
        (FilterSpec::landweber(40).unwrap(), 1.0 / 40.0),
    ];
    for (trial, shift) in [ShiftSpec::none(), ShiftSpec::bounded(0.7).unwrap(), ShiftSpec::log()].into_iter().enumerate() {
        let problem = make_problem(0.5, 1.0, 24, 0.3, shift).unwrap().with_seed(17);
        let data = problem.sample_train(80, trial as u64).unwrap();
        for (filter, lambda) in &filters {
            for scheme in [WeightScheme::Exact, WeightScheme::Normalized, WeightScheme::Clipped { d_n: 1.5 }] {
                let gram = fit(&data, problem.kernel(), filter, *lambda, scheme).unwrap();
                let basis = fit_basis(&data, problem.kernel(), filter, *lambda, scheme).unwrap();
                let from_gram = gram.basis_coefficients().unwrap();
                let scale = from_gram.iter().map(|c| c.abs()).fold(1e-12, f64::max);
                // The cutoff is discontinuous; the two routes may disagree on an
                // eigenvalue within round-off of λ, which never happens here.
                assert!(max_abs_diff(&from_gram, &basis.coefficients) <= 1e-8 * scale, "{filter:?} {scheme:?}");
                let probe = [0.0, 0.3, 0.77, 1.0];
                for &x in &probe {
                    let a = gram.predict(x).unwrap();
                    let b = basis.predict(x).unwrap();
                    assert!((a - b).abs() <= 1e-8 * (1.0 + a.abs()));
                }
                assert_eq!(basis.rescale, gram.rescale);
            }
        }
        let est = fit(&data, problem.kernel(), &FilterSpec::tikhonov(), 0.01, WeightScheme::Exact).unwrap();
        assert!(excess_risk_exact(&est, &problem).unwrap() >= 0.0);
    }
}

#[test]
fn model_json_round_trip_preserves_predictions() {
    let problem = make_problem(1.0, 1.0, 8, 0.2, ShiftSpec::log()).unwrap();
    let data = problem.sample_train(25, 0).unwrap();
    let est = fit(&data, problem.kernel(), &FilterSpec::tikhonov(), 0.05, WeightScheme::Normalized).unwrap();
    let back = spectral_shift::SpectralEstimator::from_json(&est.to_json().unwrap()).unwrap();
    assert_eq!(est, back);
    assert!(spectral_shift::SpectralEstimator::from_json(r#"{"anchors": []}"#).is_err());
}
