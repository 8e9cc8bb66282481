//! Sectioned `key = value` configuration files.
//!
//! ```text
//! # comment
//! [data]
//! input = data.csv
//! y = outcome
//! x = score
//! z = age, income      # or * for every other column
//! cutoff = 0
//!
//! [estimation]
//! adjuster = lasso
//! basis = hermite:100
//! ci = ba
//! smoothness = 2
//! ```
//!
//! Simulation specs use `[simulation]` (design, size, defaults) and one
//! `[estimator <label>]` section per estimator.

use std::path::PathBuf;
use std::str::FromStr;

use rdflex_core::basis::Expansion;
use rdflex_core::crossfit::{Learner, Localized};
use rdflex_core::pipeline::{AdjusterSpec, BandwidthPolicy, PipelineConfig, WindowPolicy};
use rdflex_core::{BiasAwareCriterion, CiMethod, Kernel, NnVariance};
use serde::{Deserialize, Serialize};

use crate::io::{ColumnMapping, CovariateColumns};
use crate::simulate::{Dgp, EstimatorSpec, SimStudySpec};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown key '{key}' in [{section}]")]
    UnknownKey { section: String, key: String },
    #[error("bad value '{value}' for '{key}': {msg}")]
    BadValue {
        key: String,
        value: String,
        msg: String,
    },
    #[error("missing required setting '{0}'")]
    Missing(String),
    #[error("{0}")]
    Invalid(String),
}

fn bad(key: &str, value: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Section {
    pub name: String,
    pub entries: Vec<(String, String)>,
}

/// Parsed file: sections in file order, keys in section order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Ini {
    pub sections: Vec<Section>,
}

impl Ini {
    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }
}

pub fn parse_ini(text: &str) -> Result<Ini, ConfigError> {
    let mut ini = Ini::default();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                line: k + 1,
                msg: "unterminated section header".into(),
            })?;
            let name = name.split_whitespace().collect::<Vec<_>>().join(" ");
            if ini.section(&name).is_some() {
                return Err(ConfigError::Syntax {
                    line: k + 1,
                    msg: format!("duplicate section [{name}]"),
                });
            }
            ini.sections.push(Section {
                name,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: k + 1,
            msg: "expected 'key = value'".into(),
        })?;
        let sec = ini.sections.last_mut().ok_or_else(|| ConfigError::Syntax {
            line: k + 1,
            msg: "setting outside of any section".into(),
        })?;
        sec.entries
            .push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(ini)
}

/// First-stage estimator names accepted by `adjuster =` and `--adjuster`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdjusterChoice {
    Zero,
    Oracle,
    Linear,
    LinearNoCf,
    LinearCf,
    Ridge,
    Lasso,
    Knn,
    Ensemble,
}

impl AdjusterChoice {
    pub fn name(self) -> &'static str {
        match self {
            AdjusterChoice::Zero => "zero",
            AdjusterChoice::Oracle => "oracle",
            AdjusterChoice::Linear => "linear",
            AdjusterChoice::LinearNoCf => "linear-nocf",
            AdjusterChoice::LinearCf => "linear-cf",
            AdjusterChoice::Ridge => "ridge",
            AdjusterChoice::Lasso => "lasso",
            AdjusterChoice::Knn => "knn",
            AdjusterChoice::Ensemble => "ensemble",
        }
    }
}

impl FromStr for AdjusterChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "zero" | "none" => AdjusterChoice::Zero,
            "oracle" => AdjusterChoice::Oracle,
            "linear" => AdjusterChoice::Linear,
            "linear-nocf" => AdjusterChoice::LinearNoCf,
            "linear-cf" => AdjusterChoice::LinearCf,
            "ridge" => AdjusterChoice::Ridge,
            "lasso" => AdjusterChoice::Lasso,
            "knn" => AdjusterChoice::Knn,
            "ensemble" => AdjusterChoice::Ensemble,
            _ => {
                return Err(
                    "expected one of zero, linear, linear-nocf, linear-cf, ridge, lasso, knn, ensemble, oracle".into(),
                )
            }
        })
    }
}

pub fn parse_expansion(s: &str) -> Result<Expansion, String> {
    let (kind, arg) = s.split_once(':').unwrap_or((s, ""));
    let num = || {
        arg.parse::<usize>()
            .map_err(|_| format!("expected '{kind}:<count>'"))
    };
    match kind {
        "identity" | "none" => Ok(Expansion::Identity),
        "poly" | "polynomial" => Ok(Expansion::Polynomial(num()?)),
        "hermite" => Ok(Expansion::Hermite(num()?)),
        _ => Err("expected identity, poly:<degree> or hermite:<terms>".into()),
    }
}

fn expansion_name(e: &Expansion) -> String {
    match e {
        Expansion::Identity => "identity".into(),
        Expansion::Polynomial(k) => format!("poly:{k}"),
        Expansion::Hermite(k) => format!("hermite:{k}"),
    }
}

pub fn parse_ci(s: &str) -> Result<CiMethod, String> {
    match s {
        "us" | "undersmoothing" => Ok(CiMethod::Undersmoothing),
        "rbc" => Ok(CiMethod::Rbc),
        "ba" | "bias-aware" => Ok(CiMethod::BiasAware),
        _ => Err("expected us, rbc or ba".into()),
    }
}

pub fn ci_name(c: CiMethod) -> &'static str {
    match c {
        CiMethod::Undersmoothing => "us",
        CiMethod::Rbc => "rbc",
        CiMethod::BiasAware => "ba",
    }
}

pub fn parse_bandwidth(s: &str) -> Result<BandwidthPolicy, String> {
    let fixed = |v: &str| match v.parse::<f64>() {
        Ok(h) if h > 0.0 && h.is_finite() => Ok(BandwidthPolicy::Fixed(h)),
        _ => Err(
            "expected auto-mse, auto-ba, auto-ba-length, undersmooth or fixed=H with H > 0".into(),
        ),
    };
    match s {
        "auto-mse" | "mse" => Ok(BandwidthPolicy::Mse),
        "auto-ba" | "ba" => Ok(BandwidthPolicy::BiasAware(BiasAwareCriterion::WorstCaseMse)),
        "auto-ba-length" => Ok(BandwidthPolicy::BiasAware(BiasAwareCriterion::HalfLength)),
        "undersmooth" => Ok(BandwidthPolicy::Undersmooth),
        _ => fixed(s.strip_prefix("fixed=").unwrap_or(s)),
    }
}

pub fn bandwidth_name(b: BandwidthPolicy) -> String {
    match b {
        BandwidthPolicy::Mse => "auto-mse".into(),
        BandwidthPolicy::BiasAware(BiasAwareCriterion::WorstCaseMse) => "auto-ba".into(),
        BandwidthPolicy::BiasAware(BiasAwareCriterion::HalfLength) => "auto-ba-length".into(),
        BandwidthPolicy::Undersmooth => "undersmooth".into(),
        BandwidthPolicy::Fixed(h) => format!("fixed={h}"),
    }
}

/// Estimation settings shared by runs and simulated estimators. Stored in
/// canonical textual form so a report can echo them verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationSettings {
    pub kernel: String,
    pub p: usize,
    pub adjuster: AdjusterChoice,
    pub basis: String,
    pub treatment_adjuster: AdjusterChoice,
    pub folds: usize,
    pub splits: usize,
    /// Fixed first-stage window; `None` means twice the unadjusted bandwidth.
    pub window: Option<f64>,
    pub bandwidth: String,
    pub ci: String,
    pub alpha: f64,
    pub smoothness: Option<f64>,
    pub nn: usize,
    pub seed: u64,
}

impl Default for EstimationSettings {
    fn default() -> Self {
        EstimationSettings {
            kernel: "triangular".into(),
            p: 1,
            adjuster: AdjusterChoice::Zero,
            basis: "identity".into(),
            treatment_adjuster: AdjusterChoice::Zero,
            folds: 5,
            splits: 1,
            window: None,
            bandwidth: "auto-mse".into(),
            ci: "rbc".into(),
            alpha: 0.05,
            smoothness: None,
            nn: rdflex_core::inference::DEFAULT_NEIGHBORS,
            seed: 0,
        }
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .parse::<T>()
        .map_err(|_| bad(key, value, "not a valid number"))
}

impl EstimationSettings {
    /// Applies one setting. Returns `Ok(false)` for keys it does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool, ConfigError> {
        match key {
            "kernel" => {
                value
                    .parse::<Kernel>()
                    .map_err(|_| bad(key, value, "expected triangular, epanechnikov or uniform"))?;
                self.kernel = value.into();
            }
            "p" => {
                let p: usize = num(key, value)?;
                if !(1..=4).contains(&p) {
                    return Err(bad(key, value, "order must be between 1 and 4"));
                }
                self.p = p;
            }
            "adjuster" => self.adjuster = value.parse().map_err(|m| bad(key, value, m))?,
            "treatment-adjuster" => {
                self.treatment_adjuster = value.parse().map_err(|m| bad(key, value, m))?
            }
            "basis" => {
                let e = parse_expansion(value).map_err(|m| bad(key, value, m))?;
                self.basis = expansion_name(&e);
            }
            "folds" => {
                self.folds = num(key, value)?;
                if self.folds == 0 {
                    return Err(bad(key, value, "need at least one fold"));
                }
            }
            "splits" => {
                self.splits = num(key, value)?;
                if self.splits == 0 {
                    return Err(bad(key, value, "need at least one split"));
                }
            }
            "window" | "first-stage-window" => {
                self.window = if value == "auto" {
                    None
                } else {
                    let b: f64 = num(key, value)?;
                    if !(b > 0.0) || !b.is_finite() {
                        return Err(bad(key, value, "window must be positive"));
                    }
                    Some(b)
                }
            }
            "bandwidth" => {
                let b = parse_bandwidth(value).map_err(|m| bad(key, value, m))?;
                self.bandwidth = bandwidth_name(b);
            }
            "ci" => {
                let c = parse_ci(value).map_err(|m| bad(key, value, m))?;
                self.ci = ci_name(c).into();
            }
            "second-stage" => {
                let (b, c) = match value {
                    "ba" | "bias-aware" => ("auto-ba", "ba"),
                    "rbc" => ("auto-mse", "rbc"),
                    "us" | "undersmooth" => ("undersmooth", "us"),
                    _ => return Err(bad(key, value, "expected ba, rbc or us")),
                };
                self.bandwidth = b.into();
                self.ci = c.into();
            }
            "alpha" => {
                let a: f64 = num(key, value)?;
                if !(a > 0.0 && a < 1.0) {
                    return Err(bad(key, value, "alpha must lie in (0, 1)"));
                }
                self.alpha = a;
            }
            "smoothness" => {
                let m: f64 = num(key, value)?;
                if !(m >= 0.0) || !m.is_finite() {
                    return Err(bad(key, value, "smoothness must be nonnegative"));
                }
                self.smoothness = Some(m);
            }
            "nn" => {
                self.nn = num(key, value)?;
                if self.nn == 0 {
                    return Err(bad(key, value, "need at least one neighbor"));
                }
            }
            "seed" => self.seed = num(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn spec_for(
        &self,
        choice: AdjusterChoice,
        oracle: Option<Dgp>,
    ) -> Result<AdjusterSpec, ConfigError> {
        let expansion = parse_expansion(&self.basis).map_err(ConfigError::Invalid)?;
        let localized =
            |l: Learner| AdjusterSpec::Localized(Localized::with_expansion(l, expansion.clone()));
        Ok(match choice {
            AdjusterChoice::Zero => AdjusterSpec::Zero,
            AdjusterChoice::Oracle => match oracle {
                Some(d) => AdjusterSpec::Function(d.oracle()),
                None => {
                    return Err(ConfigError::Invalid(
                        "the oracle adjuster is only available in simulations".into(),
                    ))
                }
            },
            AdjusterChoice::Linear => localized(Learner::Linear),
            AdjusterChoice::LinearNoCf => AdjusterSpec::JointLinear { cross_fit: false },
            AdjusterChoice::LinearCf => AdjusterSpec::JointLinear { cross_fit: true },
            AdjusterChoice::Ridge => localized(Learner::Ridge),
            AdjusterChoice::Lasso => localized(Learner::Lasso),
            AdjusterChoice::Knn => localized(Learner::Knn),
            AdjusterChoice::Ensemble => localized(Learner::default_ensemble()),
        })
    }

    pub fn treatment_spec(&self, oracle: Option<Dgp>) -> Result<AdjusterSpec, ConfigError> {
        self.spec_for(self.treatment_adjuster, oracle)
    }

    /// Pipeline configuration; `oracle` supplies the design for `adjuster =
    /// oracle`.
    pub fn to_pipeline(&self, oracle: Option<Dgp>) -> Result<PipelineConfig, ConfigError> {
        let cfg = PipelineConfig {
            kernel: self
                .kernel
                .parse()
                .map_err(|_| bad("kernel", &self.kernel, "unknown kernel"))?,
            p: self.p,
            adjuster: self.spec_for(self.adjuster, oracle)?,
            folds: self.folds,
            splits: self.splits,
            window: self
                .window
                .map_or(WindowPolicy::default(), WindowPolicy::Fixed),
            bandwidth: parse_bandwidth(&self.bandwidth)
                .map_err(|m| bad("bandwidth", &self.bandwidth, m))?,
            ci: parse_ci(&self.ci).map_err(|m| bad("ci", &self.ci, m))?,
            alpha: self.alpha,
            smoothness: self.smoothness,
            nn: NnVariance {
                neighbors: self.nn,
                finite_sample_correction: true,
            },
            seed: self.seed,
            diagnostics: true,
        };
        cfg.validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }
}

/// A full estimation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub mapping: ColumnMapping,
    pub cutoff: f64,
    pub settings: EstimationSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input: None,
            mapping: ColumnMapping {
                y: "y".into(),
                x: "x".into(),
                z: CovariateColumns::default(),
                t: None,
            },
            cutoff: 0.0,
            settings: EstimationSettings::default(),
        }
    }
}

pub fn parse_columns(value: &str) -> CovariateColumns {
    if value.trim() == "*" {
        CovariateColumns::AllOthers
    } else {
        CovariateColumns::Named(
            value
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect(),
        )
    }
}

impl RunConfig {
    pub fn set_data(&mut self, key: &str, value: &str) -> Result<bool, ConfigError> {
        match key {
            "input" => self.input = Some(PathBuf::from(value)),
            "y" => self.mapping.y = value.into(),
            "x" => self.mapping.x = value.into(),
            "z" => self.mapping.z = parse_columns(value),
            "t" | "treatment" => self.mapping.t = Some(value.into()),
            "cutoff" => {
                let c: f64 = num(key, value)?;
                if !c.is_finite() {
                    return Err(bad(key, value, "cutoff must be finite"));
                }
                self.cutoff = c;
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn from_ini(ini: &Ini) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        for sec in &ini.sections {
            for (k, v) in &sec.entries {
                let known = match sec.name.as_str() {
                    "data" => cfg.set_data(k, v)?,
                    "estimation" => cfg.settings.set(k, v)?,
                    _ => {
                        return Err(ConfigError::Invalid(format!(
                            "unexpected section [{}] in a run config",
                            sec.name
                        )))
                    }
                };
                if !known {
                    return Err(ConfigError::UnknownKey {
                        section: sec.name.clone(),
                        key: k.clone(),
                    });
                }
            }
        }
        Ok(cfg)
    }
}

/// Parses a simulation spec.
pub fn study_from_ini(ini: &Ini) -> Result<SimStudySpec, ConfigError> {
    let sim = ini
        .section("simulation")
        .ok_or_else(|| ConfigError::Missing("[simulation]".into()))?;
    let mut defaults = EstimationSettings::default();
    let (mut dgp, mut l, mut d) = (None::<String>, 0usize, 0usize);
    let (mut n, mut reps, mut seed, mut threads) = (None, None, 0u64, None);
    for (k, v) in &sim.entries {
        match k.as_str() {
            "dgp" => dgp = Some(v.clone()),
            "L" | "l" => l = num(k, v)?,
            "d" => d = num(k, v)?,
            "n" => n = Some(num::<usize>(k, v)?),
            "reps" => reps = Some(num::<usize>(k, v)?),
            "seed" => seed = num(k, v)?,
            "threads" => threads = Some(num::<usize>(k, v)?),
            _ => {
                if !defaults.set(k, v)? {
                    return Err(ConfigError::UnknownKey {
                        section: "simulation".into(),
                        key: k.clone(),
                    });
                }
            }
        }
    }
    let dgp = match dgp.as_deref() {
        Some("hermite") => Dgp::Hermite { l },
        Some("crossfit-demo") => Dgp::CrossfitDemo { d },
        Some(other) => return Err(bad("dgp", other, "expected hermite or crossfit-demo")),
        None => return Err(ConfigError::Missing("dgp".into())),
    };
    dgp.validate()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let mut estimators = Vec::new();
    for sec in &ini.sections {
        let Some(label) = sec.name.strip_prefix("estimator ") else {
            if sec.name != "simulation" {
                return Err(ConfigError::Invalid(format!(
                    "unexpected section [{}]",
                    sec.name
                )));
            }
            continue;
        };
        let mut s = defaults.clone();
        for (k, v) in &sec.entries {
            if !s.set(k, v)? {
                return Err(ConfigError::UnknownKey {
                    section: sec.name.clone(),
                    key: k.clone(),
                });
            }
        }
        estimators.push(EstimatorSpec {
            label: label.trim().to_string(),
            config: s.to_pipeline(Some(dgp))?,
        });
    }
    if estimators.is_empty() {
        return Err(ConfigError::Missing("[estimator <label>] section".into()));
    }
    let reps = reps.ok_or_else(|| ConfigError::Missing("reps".into()))?;
    if reps == 0 {
        return Err(bad("reps", "0", "need at least one replication"));
    }
    Ok(SimStudySpec {
        dgp,
        n: n.ok_or_else(|| ConfigError::Missing("n".into()))?,
        reps,
        seed,
        estimators,
        threads,
    })
}
