//! Command-line interface.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rdflex_core::pipeline::{run_sharp, select_bandwidth, BandwidthPolicy};
use rdflex_core::{NnVariance, RdProblem};

use crate::app::{exit, load, run_on, AppError, Design};
use crate::config::{parse_columns, parse_ini, study_from_ini, ConfigError, RunConfig};
use crate::report::sig6;
use crate::simulate::{emit_ecdf, format_table, run_study, write_draws_csv, write_summary_csv};

#[derive(Debug, Parser)]
#[command(
    name = "rdflex",
    version,
    about = "Covariate-adjusted regression discontinuity estimation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sharp RD estimate with optional covariate adjustment.
    Estimate(RunArgs),
    /// Fuzzy RD estimate (ratio of outcome and treatment jumps).
    Fuzzy(RunArgs),
    /// Monte Carlo study from a spec file.
    Simulate(SimArgs),
    /// Bandwidth selectors on the unadjusted and adjusted outcome.
    Bandwidth(RunArgs),
    /// Adjustment-jump diagnostic and first-stage training sizes.
    Diagnose(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Config file; command-line flags override its settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub y: Option<String>,
    /// Running variable column.
    #[arg(long)]
    pub x: Option<String>,
    /// Covariate columns, comma separated, or `*` for all other columns.
    #[arg(long)]
    pub z: Option<String>,
    #[arg(long = "treatment-col")]
    pub treatment_col: Option<String>,
    #[arg(long)]
    pub cutoff: Option<String>,
    #[arg(long)]
    pub kernel: Option<String>,
    #[arg(long)]
    pub p: Option<String>,
    /// zero, linear, linear-nocf, linear-cf, ridge, lasso, knn or ensemble.
    #[arg(long)]
    pub adjuster: Option<String>,
    /// Adjuster for the treatment column in fuzzy designs.
    #[arg(long = "treatment-adjuster")]
    pub treatment_adjuster: Option<String>,
    /// Covariate expansion for the learners: identity, poly:<deg>, hermite:<terms>.
    #[arg(long)]
    pub basis: Option<String>,
    #[arg(long)]
    pub folds: Option<String>,
    #[arg(long)]
    pub splits: Option<String>,
    /// First-stage window half-width (default: twice the unadjusted bandwidth).
    #[arg(long = "first-stage-window")]
    pub first_stage_window: Option<String>,
    /// auto-mse, auto-ba (worst-case MSE), auto-ba-length, undersmooth or fixed=H.
    #[arg(long)]
    pub bandwidth: Option<String>,
    /// rbc, us or ba.
    #[arg(long)]
    pub ci: Option<String>,
    #[arg(long)]
    pub alpha: Option<String>,
    /// Bound on the second derivative of the conditional mean (bias-aware).
    #[arg(long)]
    pub smoothness: Option<String>,
    /// Nearest neighbors for the variance estimator.
    #[arg(long)]
    pub nn: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// Write the JSON report here.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Print the JSON report instead of the text summary.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(long)]
    pub spec: PathBuf,
    /// Directory for summary.csv, draws.csv, table.txt and ecdf.csv.
    #[arg(long = "out-dir")]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Two estimator labels, comma separated, for the ECDF table.
    #[arg(long)]
    pub ecdf: Option<String>,
}

fn read_text(path: &Path) -> Result<String, AppError> {
    fs::read_to_string(path).map_err(AppError::Io)
}

impl RunArgs {
    /// Config file (if any) overlaid with command-line flags.
    pub fn resolve(&self) -> Result<RunConfig, AppError> {
        let mut cfg = match &self.config {
            Some(p) => {
                let mut c = RunConfig::from_ini(&parse_ini(&read_text(p)?)?)?;
                // Relative inputs in a config file are relative to that file.
                if let (Some(input), Some(dir)) = (&c.input, p.parent()) {
                    if input.is_relative() {
                        c.input = Some(dir.join(input));
                    }
                }
                c
            }
            None => RunConfig::default(),
        };
        if let Some(d) = &self.data {
            cfg.input = Some(d.clone());
        }
        if let Some(v) = &self.y {
            cfg.mapping.y = v.clone();
        }
        if let Some(v) = &self.x {
            cfg.mapping.x = v.clone();
        }
        if let Some(v) = &self.z {
            cfg.mapping.z = parse_columns(v);
        }
        if let Some(v) = &self.treatment_col {
            cfg.mapping.t = Some(v.clone());
        }
        if let Some(v) = &self.cutoff {
            cfg.set_data("cutoff", v)?;
        }
        let flags = [
            ("kernel", &self.kernel),
            ("p", &self.p),
            ("adjuster", &self.adjuster),
            ("treatment-adjuster", &self.treatment_adjuster),
            ("basis", &self.basis),
            ("folds", &self.folds),
            ("splits", &self.splits),
            ("window", &self.first_stage_window),
            ("bandwidth", &self.bandwidth),
            ("ci", &self.ci),
            ("alpha", &self.alpha),
            ("smoothness", &self.smoothness),
            ("nn", &self.nn),
            ("seed", &self.seed),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.settings.set(k, v)?;
            }
        }
        Ok(cfg)
    }
}

fn emit_report(args: &RunArgs, report: &crate::report::RunReport) -> Result<(), AppError> {
    if let Some(p) = &args.output {
        fs::write(p, report.to_json())?;
    }
    if args.json {
        println!("{}", report.to_json());
    } else {
        print!("{}", report.to_text());
    }
    Ok(())
}

fn cmd_run(args: &RunArgs, design: Design) -> Result<(), AppError> {
    let cfg = args.resolve()?;
    let (data, dropped) = load(&cfg)?;
    let report = run_on(&data, &cfg, design, dropped)?;
    emit_report(args, &report)
}

fn cmd_bandwidth(args: &RunArgs) -> Result<(), AppError> {
    let cfg = args.resolve()?;
    let (data, _) = load(&cfg)?;
    let pc = cfg.settings.to_pipeline(None)?;
    let nn = NnVariance {
        neighbors: cfg.settings.nn,
        finite_sample_correction: true,
    };
    let problem = RdProblem::new(&data.x, &data.y, pc.kernel, &nn)?;
    println!("unadjusted outcome (n = {})", data.len());
    let mse = select_bandwidth(&problem, BandwidthPolicy::Mse, None, pc.alpha)?;
    println!("  mse          {}", sig6(mse.h));
    if let Some(m) = &mse.intermediates {
        println!(
            "    pilot {}  curvature +{} / -{}  bias-stage {}",
            sig6(m.v_n),
            sig6(m.gamma_plus),
            sig6(m.gamma_minus),
            sig6(m.b_n)
        );
    }
    let us = select_bandwidth(&problem, BandwidthPolicy::Undersmooth, None, pc.alpha)?;
    println!("  undersmooth  {}", sig6(us.h));
    if let Some(m) = pc.smoothness {
        let ba = select_bandwidth(
            &problem,
            BandwidthPolicy::BiasAware(Default::default()),
            Some(m),
            pc.alpha,
        )?;
        println!("  bias-aware   {} (smoothness {})", sig6(ba.h), sig6(m));
    }
    if !matches!(pc.adjuster, rdflex_core::AdjusterSpec::Zero) {
        let res = run_sharp(&data, &pc)?;
        println!(
            "adjusted outcome ({}): {} {}",
            res.adjuster,
            res.selection.method.name(),
            sig6(res.fit.h)
        );
    }
    Ok(())
}

fn cmd_diagnose(args: &RunArgs) -> Result<(), AppError> {
    let cfg = args.resolve()?;
    let (data, dropped) = load(&cfg)?;
    let mut pc = cfg.settings.to_pipeline(None)?;
    pc.diagnostics = true;
    let res = run_sharp(&data, &pc)?;
    println!(
        "observations {} ({} dropped), adjuster {}",
        data.len(),
        dropped,
        res.adjuster
    );
    if let Some(j) = &res.adjustment_jump {
        let z = if j.se > 0.0 { j.tau_hat / j.se } else { 0.0 };
        println!(
            "adjustment jump {} (se {}, z {})",
            sig6(j.tau_hat),
            sig6(j.se),
            sig6(z)
        );
        if z.abs() > 3.0 {
            println!("warning: fitted adjustment jumps at the cutoff; covariates may not be predetermined");
        }
    }
    if let Some(s) = res.splits.first() {
        if let Some(b) = s.window_b {
            println!("first-stage window b = {}", sig6(b));
        }
        if !s.training_sizes.is_empty() {
            println!("training rows in window per fold: {:?}", s.training_sizes);
        }
    }
    Ok(())
}

fn cmd_simulate(args: &SimArgs) -> Result<(), AppError> {
    let mut spec = study_from_ini(&parse_ini(&read_text(&args.spec)?)?)?;
    if args.threads.is_some() {
        spec.threads = args.threads;
    }
    if let Some(r) = args.reps {
        spec.reps = r;
    }
    let res = run_study(&spec)?;
    let table = format_table(&res);
    print!("{table}");
    let pair = match &args.ecdf {
        Some(p) => {
            let (a, b) = p
                .split_once(',')
                .ok_or_else(|| ConfigError::Invalid("--ecdf expects two labels 'a,b'".into()))?;
            let t = emit_ecdf(&res, a.trim(), b.trim())
                .ok_or_else(|| ConfigError::Invalid(format!("unknown estimator in --ecdf {p}")))?;
            println!("KS distance {} vs {}: {}", t.first, t.second, sig6(t.ks));
            Some(t)
        }
        None => None,
    };
    if let Some(dir) = &args.out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("table.txt"), &table)?;
        let csv_err = |e: csv::Error| AppError::Io(std::io::Error::other(e));
        write_summary_csv(&res, fs::File::create(dir.join("summary.csv"))?).map_err(csv_err)?;
        write_draws_csv(&res, fs::File::create(dir.join("draws.csv"))?).map_err(csv_err)?;
        if let Some(t) = pair {
            t.write_csv(fs::File::create(dir.join("ecdf.csv"))?)
                .map_err(csv_err)?;
        }
    }
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<(), AppError> {
    match &cli.command {
        Command::Estimate(a) => cmd_run(a, Design::Sharp),
        Command::Fuzzy(a) => cmd_run(a, Design::Fuzzy),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Bandwidth(a) => cmd_bandwidth(a),
        Command::Diagnose(a) => cmd_diagnose(a),
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                exit::CONFIG
            } else {
                exit::OK
            };
        }
    };
    match execute(&cli) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
