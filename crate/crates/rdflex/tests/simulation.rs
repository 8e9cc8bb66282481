mod common;

use std::fs;

use common::cli;
use rayon::prelude::*;
use rdflex::app::exit;
use rdflex::config::{parse_ini, study_from_ini};
use rdflex::simulate::{
    emit_ecdf, gen_fuzzy, gen_hermite, ks_distance, oracle_spec, replication_seed, run_study, Dgp,
    EstimatorSpec, SimStudySpec,
};
use rdflex_core::crossfit::{
    assign_folds, cross_fit_adjust, diag_adjustment_jump, FitOptions, Learner,
};
use rdflex_core::pipeline::{run_fuzzy, run_sharp};
use rdflex_core::{
    AdjusterSpec, Kernel, LocalizationWindow, Localized, NnVariance, PipelineConfig,
};

fn spec(dgp: Dgp, n: usize, reps: usize, estimators: Vec<EstimatorSpec>) -> SimStudySpec {
    SimStudySpec {
        dgp,
        n,
        reps,
        seed: 77,
        estimators,
        threads: None,
    }
}

fn est(label: &str, adjuster: AdjusterSpec) -> EstimatorSpec {
    EstimatorSpec {
        label: label.into(),
        config: PipelineConfig {
            adjuster,
            ..PipelineConfig::default()
        },
    }
}

#[test]
fn single_replication_rmse_is_absolute_bias() {
    let res = run_study(&spec(
        Dgp::Hermite { l: 0 },
        500,
        1,
        vec![est("none", AdjusterSpec::Zero)],
    ))
    .unwrap();
    let row = res.row("none").unwrap();
    assert_eq!(row.draws.len(), 1);
    assert!((row.rmse - row.bias.abs()).abs() < 1e-15);
    assert_eq!(row.sd, 0.0);
}

#[test]
fn constant_oracle_matches_no_covariates() {
    let dgp = Dgp::Hermite { l: 0 };
    let res = run_study(&spec(
        dgp,
        1000,
        100,
        vec![
            est("none", AdjusterSpec::Zero),
            est("oracle", oracle_spec(dgp)),
        ],
    ))
    .unwrap();
    let (a, b) = (res.row("none").unwrap(), res.row("oracle").unwrap());
    for (x, y) in a.draws.iter().zip(&b.draws) {
        assert!((x.estimate - y.estimate).abs() < 1e-10);
        assert!((x.h - y.h).abs() < 1e-10);
    }
    let t = emit_ecdf(&res, "none", "oracle").unwrap();
    // Values agree to rounding, so at most one step of the ECDF can differ.
    assert!(t.ks <= 1.0 / 100.0 + 1e-12);
    assert_eq!(emit_ecdf(&res, "none", "none").unwrap().ks, 0.0);
}

#[test]
fn ks_distance_of_shifted_samples() {
    let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
    let b: Vec<f64> = a.iter().map(|v| v + 10.0).collect();
    assert!((ks_distance(&a, &b) - 0.1).abs() < 1e-12);
}

#[test]
fn replication_seeds_are_independent_of_scheduling() {
    let dgp = Dgp::CrossfitDemo { d: 5 };
    let estimators = vec![
        est("none", AdjusterSpec::Zero),
        est(
            "linear",
            AdjusterSpec::Localized(Localized::new(Learner::Linear)),
        ),
    ];
    let mut s = spec(dgp, 400, 12, estimators);
    s.threads = Some(1);
    let one = run_study(&s).unwrap();
    s.threads = Some(4);
    let four = run_study(&s).unwrap();
    assert_eq!(one, four);
    // Replication r depends only on (master seed, r).
    let d = dgp.generate(400, replication_seed(77, 5));
    let mut cfg = PipelineConfig::default();
    cfg.seed = replication_seed(77, 5);
    let direct = run_sharp(&d, &cfg).unwrap();
    assert_eq!(
        one.row("none").unwrap().draws[5].estimate,
        direct.fit.tau_hat
    );
}

#[test]
fn simulate_command_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("study.ini");
    fs::write(
        &spec_path,
        "[simulation]\ndgp = hermite\nL = 4\nn = 600\nreps = 6\nseed = 1\n\n\
         [estimator none]\nadjuster = zero\n\n[estimator oracle]\nadjuster = oracle\n\n\
         [estimator lasso]\nadjuster = lasso\nbasis = hermite:20\n",
    )
    .unwrap();
    let ini = parse_ini(&fs::read_to_string(&spec_path).unwrap()).unwrap();
    assert_eq!(study_from_ini(&ini).unwrap().estimators.len(), 3);
    let out = dir.path().join("out");
    let code = cli(&[
        "simulate",
        "--spec",
        spec_path.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
        "--ecdf",
        "lasso,oracle",
        "--threads",
        "2",
    ]);
    assert_eq!(code, exit::OK);
    for f in ["table.txt", "summary.csv", "draws.csv", "ecdf.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
    let draws = fs::read_to_string(out.join("draws.csv")).unwrap();
    assert_eq!(draws.lines().count(), 1 + 3 * 6);

    fs::write(
        &spec_path,
        "[simulation]\ndgp = hermite\nL = 3\nn = 10\nreps = 1\n[estimator a]\n",
    )
    .unwrap();
    assert_eq!(
        cli(&["simulate", "--spec", spec_path.to_str().unwrap()]),
        exit::CONFIG
    );
}

// The fitted adjustment is smooth in x by construction, so its jump at the
// cutoff is within three standard errors in nearly every replication.
#[test]
fn lasso_adjustment_shows_no_jump() {
    let reps = 200;
    let within: usize = (0..reps)
        .into_par_iter()
        .map(|r| {
            let seed = replication_seed(5, r);
            let data = gen_hermite(2000, 4, seed);
            let folds = assign_folds(data.len(), 5, seed).unwrap();
            let opts = FitOptions {
                window: LocalizationWindow::new(0.8),
                second_stage: None,
                seed,
            };
            let adj = Localized::new(Learner::Lasso);
            let a = cross_fit_adjust(&data, &data.y, Some(&folds), &adj, &opts).unwrap();
            let j =
                diag_adjustment_jump(&data.x, &a, Kernel::Triangular, 0.4, &NnVariance::default())
                    .unwrap();
            usize::from(j.tau_hat.abs() < 3.0 * j.se)
        })
        .sum();
    let share = within as f64 / reps as f64;
    assert!(share >= 0.95, "share within 3 SE: {share}");
}

#[test]
fn fuzzy_intervals_cover_at_nominal_rate() {
    let reps = 1000;
    let cfg = PipelineConfig::default();
    let covered: usize = (0..reps)
        .into_par_iter()
        .map(|r| {
            let data = gen_fuzzy(4000, 0.6, replication_seed(11, r));
            let res = run_fuzzy(&data, &cfg, &AdjusterSpec::Zero).unwrap();
            usize::from(res.ci.contains(1.0))
        })
        .sum();
    let coverage = covered as f64 / reps as f64;
    assert!(coverage >= 0.93, "coverage {coverage}");
}
