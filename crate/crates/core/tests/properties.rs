use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdflex_core::crossfit::{
    assign_folds, cross_fit_adjust, estimate_dml2, ConstantAdjuster, FitOptions, Learner,
    ZeroAdjuster,
};
use rdflex_core::fuzzy::estimate_fuzzy;
use rdflex_core::locpoly::{fold_restricted_weights, local_poly_weights, rd_point_estimate};
use rdflex_core::pipeline::{fit_with_interval, run_sharp, select_bandwidth};
use rdflex_core::{
    Covariates, Dataset, Kernel, LocalizationWindow, Localized, NnVariance, PipelineConfig,
    RdProblem, Side,
};

fn poly(coef: &[f64], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn design(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn kernel_strategy() -> impl Strategy<Value = Kernel> {
    prop_oneof![
        Just(Kernel::Uniform),
        Just(Kernel::Triangular),
        Just(Kernel::Epanechnikov)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    // Each side's weights reproduce the coefficients of a polynomial of
    // degree <= p exactly; the jump weights return their difference.
    #[test]
    fn weights_reproduce_polynomials(
        seed in any::<u64>(),
        n in 40usize..120,
        p in 0usize..=4,
        kernel in kernel_strategy(),
        plus in prop::collection::vec(-3.0f64..3.0, 5),
        minus in prop::collection::vec(-3.0f64..3.0, 5),
    ) {
        let x = design(seed, n);
        let (a, b) = (&plus[..=p], &minus[..=p]);
        let y: Vec<f64> = x.iter().map(|&v| if v >= 0.0 { poly(a, v) } else { poly(b, v) }).collect();
        let h = 1.5;
        let scale = 1.0 + a.iter().chain(b).map(|c| c.abs()).sum::<f64>();
        for v in 0..=p {
            let wp = local_poly_weights(&x, kernel, h, p, v, Side::Plus).unwrap();
            let wm = local_poly_weights(&x, kernel, h, p, v, Side::Minus).unwrap();
            let wj = local_poly_weights(&x, kernel, h, p, v, Side::Jump).unwrap();
            prop_assert!((wp.apply(&y) - a[v]).abs() <= 1e-8 * scale, "plus v={v}");
            prop_assert!((wm.apply(&y) - b[v]).abs() <= 1e-8 * scale, "minus v={v}");
            prop_assert!((wj.apply(&y) - (a[v] - b[v])).abs() <= 1e-8 * scale, "jump v={v}");
        }
    }

    #[test]
    fn constant_shift_leaves_estimate_unchanged(
        seed in any::<u64>(),
        c in -100.0f64..100.0,
        p in 0usize..=3,
        kernel in kernel_strategy(),
    ) {
        let x = design(seed, 150);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let y: Vec<f64> = x.iter().map(|&v| (v >= 0.0) as u8 as f64 + v + rng.random_range(-1.0..1.0)).collect();
        let shifted: Vec<f64> = y.iter().map(|v| v - c).collect();
        let t0 = rd_point_estimate(&x, &y, kernel, 0.8, p, 0).unwrap();
        let t1 = rd_point_estimate(&x, &shifted, kernel, 0.8, p, 0).unwrap();
        prop_assert!((t0 - t1).abs() <= 1e-9 * (1.0 + c.abs()));
    }

    #[test]
    fn fold_assignment_partitions(n in 1usize..300, s in 1usize..12, seed in any::<u64>()) {
        prop_assume!(s <= n);
        let f = assign_folds(n, s, seed).unwrap();
        prop_assert_eq!(f.fold_of.len(), n);
        let sizes = f.sizes();
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        prop_assert!(hi - lo <= 1);
        prop_assert!(f.fold_of.iter().all(|&k| k < s));
        prop_assert_eq!(&f, &assign_folds(n, s, seed).unwrap());
    }

    // Perturbing the outcomes in fold k changes no prediction made for fold k.
    #[test]
    fn predictions_use_only_out_of_fold_rows(seed in any::<u64>(), k in 0usize..4) {
        let n = 120;
        let x = design(seed, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let z: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let y: Vec<f64> = z.iter().zip(&x).map(|(r, xv)| r[0] - r[1] + xv + rng.random_range(-0.5..0.5)).collect();
        let data = Dataset::new(y.clone(), x, Covariates::from_rows(&z).unwrap(), None).unwrap();
        let folds = assign_folds(n, 4, seed).unwrap();
        let opts = FitOptions { window: LocalizationWindow::new(2.0), second_stage: None, seed };
        let adj = Localized::new(Learner::Linear);
        let base = cross_fit_adjust(&data, &data.y, Some(&folds), &adj, &opts).unwrap();
        let mut y2 = y;
        for i in folds.members(k) {
            y2[i] += 50.0 + i as f64;
        }
        let pert = cross_fit_adjust(&data, &y2, Some(&folds), &adj, &opts).unwrap();
        for i in folds.members(k) {
            prop_assert_eq!(base.eta[i].to_bits(), pert.eta[i].to_bits());
        }
    }

    #[test]
    fn fuzzy_reduces_to_sharp_when_treatment_is_deterministic(seed in any::<u64>(), p in 1usize..=2) {
        let x = design(seed, 300);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t: Vec<f64> = x.iter().map(|&v| (v >= 0.0) as u8 as f64).collect();
        let y: Vec<f64> = x.iter().zip(&t).map(|(v, d)| 2.0 * d + v * v + rng.random_range(-1.0..1.0)).collect();
        let nn = NnVariance::default();
        let fz = estimate_fuzzy(&x, &y, &t, Kernel::Triangular, 0.7, p, &nn).unwrap();
        let sharp = RdProblem::new(&x, &y, Kernel::Triangular, &nn).unwrap().fit(0.7, p, 0).unwrap();
        prop_assert!((fz.tau_t - 1.0).abs() <= 1e-9);
        prop_assert!((fz.theta_hat - sharp.tau_hat).abs() <= 1e-9);
        prop_assert!((fz.se - sharp.se).abs() <= 1e-9);
    }

    #[test]
    fn fold_restriction_to_everything_is_the_full_fit(seed in any::<u64>(), p in 0usize..=2) {
        let x = design(seed, 80);
        let all: Vec<usize> = (0..x.len()).collect();
        let a = local_poly_weights(&x, Kernel::Triangular, 0.9, p, 0, Side::Jump).unwrap();
        let b = fold_restricted_weights(&x, Kernel::Triangular, 0.9, p, 0, Side::Jump, &all).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn zero_adjustment_matches_baseline_bitwise() {
    let x = design(11, 500);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let y: Vec<f64> = x
        .iter()
        .map(|&v| (v >= 0.0) as u8 as f64 + v.sin() + rng.random_range(-1.0..1.0))
        .collect();
    let z: Vec<Vec<f64>> = (0..500)
        .map(|_| vec![rng.random_range(-1.0..1.0)])
        .collect();
    let data = Dataset::new(
        y.clone(),
        x.clone(),
        Covariates::from_rows(&z).unwrap(),
        None,
    )
    .unwrap();
    let nn = NnVariance::default();
    let folds = assign_folds(500, 5, 3).unwrap();
    let opts = FitOptions {
        window: LocalizationWindow::new(1.0),
        second_stage: None,
        seed: 0,
    };

    let adjusted = cross_fit_adjust(&data, &data.y, Some(&folds), &ZeroAdjuster, &opts).unwrap();
    assert_eq!(adjusted.m, y);
    let a = estimate_dml2(&x, &adjusted, Kernel::Triangular, 0.5, 1, &nn).unwrap();
    let b = RdProblem::new(&x, &y, Kernel::Triangular, &nn)
        .unwrap()
        .fit(0.5, 1, 0)
        .unwrap();
    assert_eq!(a, b);

    let constant =
        cross_fit_adjust(&data, &data.y, Some(&folds), &ConstantAdjuster(5.0), &opts).unwrap();
    let c = estimate_dml2(&x, &constant, Kernel::Triangular, 0.5, 1, &nn).unwrap();
    assert!((c.tau_hat - b.tau_hat).abs() < 1e-9);

    // The whole pipeline with no adjustment equals a direct baseline run.
    let cfg = PipelineConfig::default();
    let res = run_sharp(&data, &cfg).unwrap();
    let problem = RdProblem::new(&x, &y, cfg.kernel, &cfg.nn).unwrap();
    let sel = select_bandwidth(&problem, cfg.bandwidth, None, cfg.alpha).unwrap();
    let direct = fit_with_interval(&problem, sel.h, &cfg).unwrap();
    assert_eq!(res.fit, direct);
}
