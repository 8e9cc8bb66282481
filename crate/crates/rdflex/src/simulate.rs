//! Data generators with known adjustment functions and a seeded, parallel
//! Monte Carlo runner.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use rdflex_core::basis::{graded_multi_indices, hermite_values};
use rdflex_core::crossfit::FnAdjuster;
use rdflex_core::pipeline::{run_sharp, AdjusterSpec, PipelineConfig};
use rdflex_core::seed::{derive_seed, Stream};
use rdflex_core::{Covariates, Dataset, RdError};
use serde::{Deserialize, Serialize};

/// Covariates in the Hermite designs.
pub const HERMITE_COVARIATES: usize = 4;
/// Noise SD in the Hermite designs (variance 0.25).
pub const HERMITE_NOISE_SD: f64 = 0.5;
/// Second-derivative bound of `E[Y|X]` in the Hermite designs.
pub const HERMITE_SMOOTHNESS: f64 = 2.0;
/// Terms in the Hermite basis handed to the lasso in the simulations.
pub const LASSO_HERMITE_TERMS: usize = 100;
/// Largest fraction of failed replications a study tolerates.
pub const MAX_FAILURE_RATE: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dgp {
    /// `Y = sin(X) + ε`, `X ~ U(-π, π)`, `d` irrelevant N(0,1) covariates,
    /// `τ = 0`.
    CrossfitDemo { d: usize },
    /// Four U[-1,1] covariates entering through `L ∈ {0, 4, 16}` Hermite
    /// terms; `τ = 1`.
    Hermite { l: usize },
}

impl Dgp {
    pub fn true_tau(self) -> f64 {
        match self {
            Dgp::CrossfitDemo { .. } => 0.0,
            Dgp::Hermite { .. } => 1.0,
        }
    }

    pub fn validate(self) -> Result<(), RdError> {
        match self {
            Dgp::Hermite { l } if ![0, 4, 16].contains(&l) => Err(RdError::InvalidArgument(
                format!("Hermite design needs L in {{0, 4, 16}}, got {l}"),
            )),
            _ => Ok(()),
        }
    }

    pub fn generate(self, n: usize, seed: u64) -> Dataset {
        match self {
            Dgp::CrossfitDemo { d } => gen_crossfit_demo(n, d, seed),
            Dgp::Hermite { l } => gen_hermite(n, l, seed),
        }
    }

    /// Closed-form optimal adjustment `(μ⁺(z) + μ⁻(z))/2`.
    pub fn oracle(self) -> FnAdjuster {
        let f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync> = match self {
            Dgp::CrossfitDemo { .. } => Arc::new(|_z: &[f64]| 0.0),
            Dgp::Hermite { l } => {
                let basis = HermiteSignal::new(l);
                Arc::new(move |z: &[f64]| hermite_oracle(&basis, l, z))
            }
        };
        FnAdjuster {
            label: "oracle".into(),
            f,
        }
    }

    pub fn label(self) -> String {
        match self {
            Dgp::CrossfitDemo { d } => format!("crossfit-demo(d={d})"),
            Dgp::Hermite { l } => format!("hermite(L={l})"),
        }
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `Y = sin(X) + ε` with `d` irrelevant standard normal covariates.
pub fn gen_crossfit_demo(n: usize, d: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let pi = std::f64::consts::PI;
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n * d);
    for _ in 0..n {
        let xi = r.random_range(-pi..pi);
        for _ in 0..d {
            z.push(r.sample::<f64, _>(StandardNormal));
        }
        let eps: f64 = r.sample(StandardNormal);
        x.push(xi);
        y.push(xi.sin() + eps);
    }
    let z = Covariates::new(n, d, z).expect("shape is consistent");
    Dataset::new(y, x, z, None).expect("generated data is finite")
}

/// `sign(x)(x² + x/2)`.
pub fn phi_x(x: f64) -> f64 {
    let s = if x >= 0.0 { 1.0 } else { -1.0 };
    s * (x * x + 0.5 * x)
}

/// `Σ_{l ≤ L} b_l(z)`: tensor Hermite products of the covariates in graded
/// order (the first four are the covariates themselves).
#[derive(Debug, Clone)]
pub struct HermiteSignal {
    indices: Vec<Vec<usize>>,
    max_degree: usize,
}

impl HermiteSignal {
    pub fn new(l: usize) -> Self {
        let indices = graded_multi_indices(HERMITE_COVARIATES, l);
        let max_degree = indices.iter().flatten().copied().max().unwrap_or(0);
        HermiteSignal {
            indices,
            max_degree,
        }
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        if self.indices.is_empty() {
            return 0.0;
        }
        let tables: Vec<Vec<f64>> = z
            .iter()
            .map(|&v| hermite_values(v, self.max_degree))
            .collect();
        self.indices
            .iter()
            .map(|idx| {
                idx.iter()
                    .enumerate()
                    .map(|(j, &k)| tables[j][k])
                    .product::<f64>()
            })
            .sum()
    }
}

fn hermite_oracle(basis: &HermiteSignal, l: usize, z: &[f64]) -> f64 {
    if l == 0 {
        return 0.5;
    }
    let s: f64 = z.iter().sum();
    0.5 + 0.125 * s + basis.eval(z)
}

/// Outcome `T + φ_X(X) + 1{L>0}[(φ_X(X) + T) · 0.25 ΣZ + Σ b_l(Z)] + ε`.
pub fn gen_hermite(n: usize, l: usize, seed: u64) -> Dataset {
    let basis = HermiteSignal::new(l);
    let mut r = rng(seed);
    let noise = Normal::new(0.0, HERMITE_NOISE_SD).expect("valid sd");
    let d = HERMITE_COVARIATES;
    let (mut x, mut y, mut z) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n * d),
    );
    let mut row = [0.0; HERMITE_COVARIATES];
    for _ in 0..n {
        let xi: f64 = r.random_range(-1.0..=1.0);
        for v in row.iter_mut() {
            *v = r.random_range(-1.0..=1.0);
        }
        let eps = noise.sample(&mut r);
        let t = if xi >= 0.0 { 1.0 } else { 0.0 };
        let mut yi = t + phi_x(xi) + eps;
        if l > 0 {
            yi += (phi_x(xi) + t) * 0.25 * row.iter().sum::<f64>() + basis.eval(&row);
        }
        x.push(xi);
        y.push(yi);
        z.extend_from_slice(&row);
    }
    let z = Covariates::new(n, d, z).expect("shape is consistent");
    Dataset::new(y, x, z, None).expect("generated data is finite")
}

/// Hermite design with `L = 0` and one-sided Bernoulli compliance:
/// `D = 1{X≥0}·B`, `B ~ Bernoulli(compliance)`, `Y = D + φ_X(X) + ε`. The
/// effect of `D` on `Y` is 1; the outcome jump is `compliance`.
pub fn gen_fuzzy(n: usize, compliance: f64, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let noise = Normal::new(0.0, HERMITE_NOISE_SD).expect("valid sd");
    let d = HERMITE_COVARIATES;
    let (mut x, mut y, mut t, mut z) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n * d),
    );
    for _ in 0..n {
        let xi: f64 = r.random_range(-1.0..=1.0);
        for _ in 0..d {
            z.push(r.random_range(-1.0..=1.0));
        }
        let takes = r.random_bool(compliance);
        let di = if xi >= 0.0 && takes { 1.0 } else { 0.0 };
        x.push(xi);
        t.push(di);
        y.push(di + phi_x(xi) + noise.sample(&mut r));
    }
    let z = Covariates::new(n, d, z).expect("shape is consistent");
    Dataset::new(y, x, z, Some(t)).expect("generated data is finite")
}

/// One estimator run in every replication.
#[derive(Debug, Clone)]
pub struct EstimatorSpec {
    pub label: String,
    pub config: PipelineConfig,
}

#[derive(Debug, Clone)]
pub struct SimStudySpec {
    pub dgp: Dgp,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorSpec>,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

/// One replication of one estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub estimate: f64,
    pub se: f64,
    pub lo: f64,
    pub hi: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub label: String,
    pub bias: f64,
    /// Population SD over replications (divisor `R`), so that
    /// `rmse² = bias² + sd²` holds exactly.
    pub sd: f64,
    pub rmse: f64,
    pub coverage: f64,
    pub avg_ci_length: f64,
    pub avg_h: f64,
    pub mc_se_bias: f64,
    pub mc_se_sd: f64,
    pub mc_se_coverage: f64,
    pub mc_se_ci_length: f64,
    pub mc_se_h: f64,
    pub failures: usize,
    /// Successful replications, in replication order.
    pub draws: Vec<Draw>,
    /// Replication index of each entry in `draws`.
    pub rep_index: Vec<usize>,
}

impl EstimatorSummary {
    pub fn estimates(&self) -> Vec<f64> {
        self.draws.iter().map(|d| d.estimate).collect()
    }

    pub fn bandwidths(&self) -> Vec<f64> {
        self.draws.iter().map(|d| d.h).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimStudyResult {
    pub dgp: Dgp,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub true_tau: f64,
    pub rows: Vec<EstimatorSummary>,
}

impl SimStudyResult {
    pub fn row(&self, label: &str) -> Option<&EstimatorSummary> {
        self.rows.iter().find(|r| r.label == label)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error("invalid study: {0}")]
    Invalid(String),
    #[error(
        "estimator '{label}' failed in {failures} of {reps} replications (first error: {first})"
    )]
    TooManyFailures {
        label: String,
        failures: usize,
        reps: usize,
        first: String,
    },
    #[error("thread pool: {0}")]
    Pool(String),
}

/// Seed of replication `r`.
pub fn replication_seed(master: u64, r: usize) -> u64 {
    derive_seed(master, Stream::Replication, r as u64)
}

fn one_replication(spec: &SimStudySpec, r: usize) -> Vec<Result<Draw, RdError>> {
    let seed = replication_seed(spec.seed, r);
    let data = spec.dgp.generate(spec.n, seed);
    spec.estimators
        .iter()
        .map(|e| {
            let mut cfg = e.config.clone();
            cfg.seed = seed;
            cfg.diagnostics = false;
            let res = run_sharp(&data, &cfg)?;
            let ci = res.fit.ci.expect("pipeline always attaches an interval");
            Ok(Draw {
                estimate: res.fit.tau_hat,
                se: res.fit.se,
                lo: ci.lo,
                hi: ci.hi,
                h: res.fit.h,
            })
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn pop_sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Table-style summary of a set of draws.
pub fn summarize(
    label: &str,
    draws: Vec<Draw>,
    rep_index: Vec<usize>,
    truth: f64,
    failures: usize,
) -> EstimatorSummary {
    let k = draws.len() as f64;
    let est: Vec<f64> = draws.iter().map(|d| d.estimate).collect();
    let len: Vec<f64> = draws.iter().map(|d| d.hi - d.lo).collect();
    let hs: Vec<f64> = draws.iter().map(|d| d.h).collect();
    let bias = mean(&est) - truth;
    let sd = pop_sd(&est);
    let coverage = draws
        .iter()
        .filter(|d| d.lo <= truth && truth <= d.hi)
        .count() as f64
        / k;
    EstimatorSummary {
        label: label.to_string(),
        bias,
        sd,
        rmse: mean(
            &est.iter()
                .map(|e| (e - truth) * (e - truth))
                .collect::<Vec<_>>(),
        )
        .sqrt(),
        coverage,
        avg_ci_length: mean(&len),
        avg_h: mean(&hs),
        mc_se_bias: sd / k.sqrt(),
        mc_se_sd: sd / (2.0 * k).sqrt(),
        mc_se_coverage: (coverage * (1.0 - coverage) / k).sqrt(),
        mc_se_ci_length: pop_sd(&len) / k.sqrt(),
        mc_se_h: pop_sd(&hs) / k.sqrt(),
        failures,
        draws,
        rep_index,
    }
}

/// Runs every estimator on `reps` independently drawn datasets. Results do
/// not depend on the number of worker threads.
pub fn run_study(spec: &SimStudySpec) -> Result<SimStudyResult, StudyError> {
    spec.dgp
        .validate()
        .map_err(|e| StudyError::Invalid(e.to_string()))?;
    if spec.reps == 0 || spec.estimators.is_empty() {
        return Err(StudyError::Invalid(
            "need at least one replication and one estimator".into(),
        ));
    }
    let work = || -> Vec<Vec<Result<Draw, RdError>>> {
        (0..spec.reps)
            .into_par_iter()
            .map(|r| one_replication(spec, r))
            .collect()
    };
    let per_rep = match spec.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| StudyError::Pool(e.to_string()))?
            .install(work),
        None => work(),
    };
    let truth = spec.dgp.true_tau();
    let mut rows = Vec::with_capacity(spec.estimators.len());
    for (j, e) in spec.estimators.iter().enumerate() {
        let mut draws = Vec::with_capacity(spec.reps);
        let mut idx = Vec::with_capacity(spec.reps);
        let mut failures = 0;
        let mut first = None;
        for (r, outcomes) in per_rep.iter().enumerate() {
            match &outcomes[j] {
                Ok(d) => {
                    draws.push(*d);
                    idx.push(r);
                }
                Err(err) => {
                    failures += 1;
                    first.get_or_insert_with(|| err.to_string());
                }
            }
        }
        if failures as f64 > MAX_FAILURE_RATE * spec.reps as f64 || draws.is_empty() {
            return Err(StudyError::TooManyFailures {
                label: e.label.clone(),
                failures,
                reps: spec.reps,
                first: first.unwrap_or_default(),
            });
        }
        if failures > 0 {
            log::warn!("{}: {failures} failed replications excluded", e.label);
        }
        rows.push(summarize(&e.label, draws, idx, truth, failures));
    }
    Ok(SimStudyResult {
        dgp: spec.dgp,
        n: spec.n,
        reps: spec.reps,
        seed: spec.seed,
        true_tau: truth,
        rows,
    })
}

/// Aligned text table; bias, SD, RMSE, CI length and bandwidth ×100,
/// coverage in percent, Monte Carlo SEs in parentheses.
pub fn format_table(res: &SimStudyResult) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# {}  n={}  reps={}  seed={}  true tau={}",
        res.dgp.label(),
        res.n,
        res.reps,
        res.seed,
        res.true_tau
    );
    if let Dgp::Hermite { .. } = res.dgp {
        let _ = writeln!(
            out,
            "# Hermite terms: tensor products of He_k over the 4 covariates, graded by total degree"
        );
    }
    let width = res
        .rows
        .iter()
        .map(|r| r.label.len())
        .max()
        .unwrap_or(9)
        .max(9);
    let _ = writeln!(
        out,
        "{:<width$} {:>15} {:>15} {:>8} {:>15} {:>15} {:>15} {:>5}",
        "Estimator", "Bias", "Std Dev", "RMSE", "Coverage", "CI Length", "Bandwidth", "Fail"
    );
    let cell = |v: f64, se: f64| format!("{:.2} ({:.2})", v, se);
    for r in &res.rows {
        let _ = writeln!(
            out,
            "{:<width$} {:>15} {:>15} {:>8.2} {:>15} {:>15} {:>15} {:>5}",
            r.label,
            cell(100.0 * r.bias, 100.0 * r.mc_se_bias),
            cell(100.0 * r.sd, 100.0 * r.mc_se_sd),
            100.0 * r.rmse,
            cell(100.0 * r.coverage, 100.0 * r.mc_se_coverage),
            cell(100.0 * r.avg_ci_length, 100.0 * r.mc_se_ci_length),
            cell(100.0 * r.avg_h, 100.0 * r.mc_se_h),
            r.failures
        );
    }
    out
}

/// Summary rows as CSV at full precision.
pub fn write_summary_csv<W: std::io::Write>(res: &SimStudyResult, w: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "estimator",
        "bias",
        "sd",
        "rmse",
        "coverage",
        "avg_ci_length",
        "avg_h",
        "mc_se_bias",
        "mc_se_sd",
        "mc_se_coverage",
        "mc_se_ci_length",
        "mc_se_h",
        "failures",
    ])?;
    for r in &res.rows {
        let nums = [
            r.bias,
            r.sd,
            r.rmse,
            r.coverage,
            r.avg_ci_length,
            r.avg_h,
            r.mc_se_bias,
            r.mc_se_sd,
            r.mc_se_coverage,
            r.mc_se_ci_length,
            r.mc_se_h,
        ];
        let mut rec = vec![r.label.clone()];
        rec.extend(nums.iter().map(|v| v.to_string()));
        rec.push(r.failures.to_string());
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Replication-level draws as CSV.
pub fn write_draws_csv<W: std::io::Write>(res: &SimStudyResult, w: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["estimator", "rep", "estimate", "se", "lo", "hi", "h"])?;
    for r in &res.rows {
        for (d, i) in r.draws.iter().zip(&r.rep_index) {
            wtr.write_record([
                r.label.clone(),
                i.to_string(),
                d.estimate.to_string(),
                d.se.to_string(),
                d.lo.to_string(),
                d.hi.to_string(),
                d.h.to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Sorted values with `F(value) = rank / n`.
pub fn ecdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| (x, (i + 1) as f64 / n))
        .collect()
}

/// Two-sample Kolmogorov-Smirnov distance `sup |F_a - F_b|`.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return if a.len() == b.len() { 0.0 } else { 1.0 };
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

#[derive(Debug, Clone, PartialEq)]
pub struct EcdfTable {
    pub first: String,
    pub second: String,
    /// `(estimator label, value, F(value))`.
    pub rows: Vec<(String, f64, f64)>,
    pub ks: f64,
}

impl EcdfTable {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["estimator", "value", "ecdf"])?;
        for (l, v, f) in &self.rows {
            wtr.write_record([l.clone(), v.to_string(), f.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Plot-ready ECDFs of two estimators' estimates and their KS distance.
pub fn emit_ecdf(res: &SimStudyResult, first: &str, second: &str) -> Option<EcdfTable> {
    let a = res.row(first)?.estimates();
    let b = res.row(second)?.estimates();
    let mut rows = Vec::with_capacity(a.len() + b.len());
    rows.extend(ecdf(&a).into_iter().map(|(v, f)| (first.to_string(), v, f)));
    rows.extend(
        ecdf(&b)
            .into_iter()
            .map(|(v, f)| (second.to_string(), v, f)),
    );
    Some(EcdfTable {
        first: first.into(),
        second: second.into(),
        rows,
        ks: ks_distance(&a, &b),
    })
}

/// Replaces an oracle placeholder with the design's closed-form adjustment.
pub fn oracle_spec(dgp: Dgp) -> AdjusterSpec {
    AdjusterSpec::Function(dgp.oracle())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_of_identical_and_disjoint_samples() {
        let a = [0.1, 0.5, 0.3];
        assert_eq!(ks_distance(&a, &a), 0.0);
        assert_eq!(ks_distance(&a, &[2.0, 3.0]), 1.0);
        // F_a - F_b at 0.2: 1/2 - 0 ; at 0.4: 1 - 1/2.
        assert!((ks_distance(&[0.1, 0.3], &[0.2, 0.4]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn hermite_signal_starts_with_covariates() {
        let z = [0.3, -0.2, 0.5, 0.1];
        assert!((HermiteSignal::new(4).eval(&z) - 0.7).abs() < 1e-15);
        // Fifth term is He_2(z1) = z1² - 1.
        assert!((HermiteSignal::new(5).eval(&z) - (0.7 + 0.09 - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn summary_rmse_identity() {
        let draws: Vec<Draw> = [0.9, 1.3, 1.05]
            .iter()
            .map(|&e| Draw {
                estimate: e,
                se: 0.1,
                lo: e - 0.2,
                hi: e + 0.2,
                h: 0.4,
            })
            .collect();
        let s = summarize("x", draws, vec![0, 1, 2], 1.0, 0);
        assert!((s.rmse * s.rmse - s.bias * s.bias - s.sd * s.sd).abs() < 1e-12);
        assert!((s.coverage - 2.0 / 3.0).abs() < 1e-15);
    }
}
