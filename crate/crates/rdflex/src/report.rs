//! Run reports: JSON for machines, a short text block for people.

use std::fmt::Write as _;

use rdflex_core::fuzzy::FuzzyFit;
use rdflex_core::pipeline::{FuzzyResult, SharpResult, SplitRun};
use rdflex_core::{ConfidenceInterval, MseIntermediates, RdFit};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const SOFTWARE_VERSION: &str = env!("CARGO_PKG_VERSION");

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalReport {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    pub method: String,
    pub half_length: f64,
    pub bias_bound: Option<f64>,
}

impl From<&ConfidenceInterval> for IntervalReport {
    fn from(c: &ConfidenceInterval) -> Self {
        IntervalReport {
            lo: c.lo,
            hi: c.hi,
            level: c.level,
            method: c.method.name().into(),
            half_length: c.half_length,
            bias_bound: c.bias_bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseReport {
    pub v_n: f64,
    pub c_n: f64,
    pub b_n: f64,
    pub gamma_plus: f64,
    pub gamma_minus: f64,
}

impl From<&MseIntermediates> for MseReport {
    fn from(m: &MseIntermediates) -> Self {
        MseReport {
            v_n: m.v_n,
            c_n: m.c_n,
            b_n: m.b_n,
            gamma_plus: m.gamma_plus,
            gamma_minus: m.gamma_minus,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpReport {
    pub tau_hat: f64,
    pub se: f64,
    pub h: f64,
    pub p: usize,
    pub n_eff_left: usize,
    pub n_eff_right: usize,
    pub ci: Option<IntervalReport>,
    pub bandwidth_method: String,
    pub baseline_h: Option<f64>,
    pub mse_steps: Option<MseReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyReport {
    pub theta_hat: f64,
    pub tau_y: f64,
    pub tau_t: f64,
    pub se: f64,
    pub h: f64,
    pub first_stage_strength: Option<f64>,
    pub weak_first_stage: bool,
    pub ci: IntervalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "design", rename_all = "lowercase")]
pub enum EstimateReport {
    Sharp(SharpReport),
    Fuzzy(FuzzyReport),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub tau_hat: f64,
    pub se: f64,
}

impl From<&RdFit> for FitSummary {
    fn from(f: &RdFit) -> Self {
        FitSummary {
            tau_hat: f.tau_hat,
            se: f.se,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub seed: u64,
    pub estimate: f64,
    pub se: f64,
    pub h: f64,
    pub bias_bound: Option<f64>,
    pub window_b: Option<f64>,
    pub training_sizes: Vec<usize>,
}

impl From<&SplitRun> for SplitReport {
    fn from(s: &SplitRun) -> Self {
        SplitReport {
            seed: s.seed,
            estimate: s.tau,
            se: s.se,
            h: s.h,
            bias_bound: s.bias_bound,
            window_b: s.window_b,
            training_sizes: s.training_sizes.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n: usize,
    pub dropped_rows: usize,
    pub adjuster: String,
    pub treatment_adjuster: Option<String>,
    /// Jump in the fitted adjustment at the cutoff (first split).
    pub adjustment_jump: Option<FitSummary>,
    pub splits: Vec<SplitReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub software_version: String,
    pub seed: u64,
    pub config: RunConfig,
    pub estimate: EstimateReport,
    pub diagnostics: Diagnostics,
}

impl RunReport {
    pub fn sharp(config: &RunConfig, res: &SharpResult, n: usize, dropped: usize) -> Self {
        let f = &res.fit;
        RunReport {
            software_version: SOFTWARE_VERSION.into(),
            seed: config.settings.seed,
            config: config.clone(),
            estimate: EstimateReport::Sharp(SharpReport {
                tau_hat: f.tau_hat,
                se: f.se,
                h: f.h,
                p: f.p,
                n_eff_left: f.n_eff_left,
                n_eff_right: f.n_eff_right,
                ci: f.ci.as_ref().map(IntervalReport::from),
                bandwidth_method: res.selection.method.name().into(),
                baseline_h: res.baseline_h,
                mse_steps: res.selection.intermediates.as_ref().map(MseReport::from),
            }),
            diagnostics: Diagnostics {
                n,
                dropped_rows: dropped,
                adjuster: res.adjuster.clone(),
                treatment_adjuster: None,
                adjustment_jump: res.adjustment_jump.as_ref().map(FitSummary::from),
                splits: res.splits.iter().map(SplitReport::from).collect(),
            },
        }
    }

    pub fn fuzzy(config: &RunConfig, res: &FuzzyResult, n: usize, dropped: usize) -> Self {
        let f: &FuzzyFit = &res.fit;
        RunReport {
            software_version: SOFTWARE_VERSION.into(),
            seed: config.settings.seed,
            config: config.clone(),
            estimate: EstimateReport::Fuzzy(FuzzyReport {
                theta_hat: f.theta_hat,
                tau_y: f.tau_y,
                tau_t: f.tau_t,
                se: f.se,
                h: f.h,
                first_stage_strength: finite(f.first_stage_strength),
                weak_first_stage: f.is_weak(),
                ci: IntervalReport::from(&res.ci),
            }),
            diagnostics: Diagnostics {
                n,
                dropped_rows: dropped,
                adjuster: res.outcome_adjuster.clone(),
                treatment_adjuster: Some(res.treatment_adjuster.clone()),
                adjustment_jump: None,
                splits: res.splits.iter().map(SplitReport::from).collect(),
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report fields are serializable")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }

    /// Human-readable summary at six significant digits.
    pub fn to_text(&self) -> String {
        let mut o = String::new();
        let d = &self.diagnostics;
        let _ = writeln!(o, "rdflex {}  seed {}", self.software_version, self.seed);
        let _ = writeln!(o, "observations  {} ({} dropped)", d.n, d.dropped_rows);
        let _ = writeln!(o, "adjuster      {}", d.adjuster);
        if let Some(t) = &d.treatment_adjuster {
            let _ = writeln!(o, "T adjuster    {t}");
        }
        let ci_line = |o: &mut String, c: &IntervalReport| {
            let _ = writeln!(
                o,
                "{:.0}% CI ({})  [{}, {}]",
                100.0 * c.level,
                c.method,
                sig6(c.lo),
                sig6(c.hi)
            );
            if let Some(b) = c.bias_bound {
                let _ = writeln!(o, "bias bound    {}", sig6(b));
            }
        };
        match &self.estimate {
            EstimateReport::Sharp(s) => {
                let _ = writeln!(o, "estimate      {}", sig6(s.tau_hat));
                let _ = writeln!(o, "std. error    {}", sig6(s.se));
                let _ = writeln!(o, "bandwidth     {} ({})", sig6(s.h), s.bandwidth_method);
                let _ = writeln!(
                    o,
                    "eff. obs      {} left, {} right",
                    s.n_eff_left, s.n_eff_right
                );
                if let Some(c) = &s.ci {
                    ci_line(&mut o, c);
                }
            }
            EstimateReport::Fuzzy(f) => {
                let _ = writeln!(o, "estimate      {}", sig6(f.theta_hat));
                let _ = writeln!(o, "std. error    {}", sig6(f.se));
                let _ = writeln!(o, "outcome jump  {}", sig6(f.tau_y));
                let _ = writeln!(o, "treat. jump   {}", sig6(f.tau_t));
                let _ = writeln!(o, "bandwidth     {}", sig6(f.h));
                if let Some(s) = f.first_stage_strength {
                    let _ = writeln!(o, "first stage t {}", sig6(s));
                }
                if f.weak_first_stage {
                    let _ = writeln!(o, "warning: weak first stage");
                }
                ci_line(&mut o, &f.ci);
            }
        }
        if let Some(j) = &d.adjustment_jump {
            let _ = writeln!(o, "adjustment jump {} (se {})", sig6(j.tau_hat), sig6(j.se));
        }
        if d.splits.len() > 1 {
            let _ = writeln!(
                o,
                "splits        {} (median estimate, split-adjusted SE)",
                d.splits.len()
            );
        }
        if let Some(s) = d.splits.first() {
            if let Some(b) = s.window_b {
                let _ = writeln!(o, "window b      {}", sig6(b));
            }
            if !s.training_sizes.is_empty() {
                let _ = writeln!(o, "fold training rows in window {:?}", s.training_sizes);
            }
        }
        o
    }
}

/// `v` printed with six significant digits.
pub fn sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    if !(-4..6).contains(&exp) {
        format!("{v:.5e}")
    } else {
        let decimals = (5 - exp).max(0) as usize;
        format!("{v:.decimals$}")
    }
}
