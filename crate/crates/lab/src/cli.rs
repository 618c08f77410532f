//! Command-line interface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{Algorithm, Coefficient, ExperimentConfig, Optimism, Sampling, TieBreakName};
use crate::counterexample::{run_counterexample, CounterexampleOptions};
use crate::diagnose::{diagnose, DiagnoseOptions};
use crate::error::{LabError, Result};
use crate::instance::{load_instance, write_instance_file};
use crate::output::aggregate_tsv;
use crate::runner::run_experiment;
use crate::sweep::{run_sweep, SweepConfig};

#[derive(Debug, Parser)]
#[command(name = "xpo-lab", version, about = "Exploratory preference optimization experiments on tabular DCMDPs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one algorithm over a list of seeds.
    Run(RunArgs),
    /// Run the identity checks and coefficient reports on an instance.
    Diagnose(DiagnoseArgs),
    /// Online DPO against XPO on the two-action counterexample.
    Counterexample(CounterexampleArgs),
    /// Cartesian sweep over beta, alpha and T from a config file.
    Sweep(SweepArgs),
    /// Write a builtin instance to an instance file.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML config; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub instance: Option<String>,
    #[arg(long, value_enum)]
    pub algo: Option<Algorithm>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Manual optimism coefficient.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Take alpha from the theoretical schedule (coverability unless --coef says otherwise).
    #[arg(long)]
    pub alpha_from_theorem: bool,
    #[arg(long, value_enum)]
    pub coef: Option<Coefficient>,
    /// Multiplier of the schedule.
    #[arg(long = "alpha-c")]
    pub alpha_c: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long = "T")]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long, value_enum)]
    pub sampling: Option<Sampling>,
    #[arg(long, value_enum)]
    pub optimism: Option<Optimism>,
    /// Inclusive `a..b` (or `a..=b`) or `s1,s2,...`.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub class: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub clip_lo: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub clip_hi: Option<f64>,
    #[arg(long, value_enum)]
    pub tie_break: Option<TieBreakName>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// `exact` or `validation:N`.
    #[arg(long)]
    pub selection: Option<String>,
    /// Output root; defaults to $XPO_LAB_OUT, then ./runs.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
}

impl RunArgs {
    pub fn to_config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::read(path)?,
            None => {
                let algo = self.algo.unwrap_or(Algorithm::Xpo);
                ExperimentConfig::new("prop31", algo, 0.02, 100, "0..199")
            }
        };
        if let Some(a) = self.algo {
            if self.config.is_some() && a != cfg.algorithm && self.sampling.is_none() {
                cfg.sampling = ExperimentConfig::new("", a, 1.0, 1, "0").sampling;
            }
            cfg.algorithm = a;
        }
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value.clone() {
                    $field = v;
                }
            };
        }
        set!(cfg.instance, self.instance);
        set!(cfg.beta, self.beta);
        set!(cfg.alpha.c, self.alpha_c);
        set!(cfg.alpha.delta, self.delta);
        set!(cfg.iterations, self.iterations);
        set!(cfg.batch, self.batch);
        set!(cfg.sampling, self.sampling);
        set!(cfg.optimism, self.optimism);
        set!(cfg.seeds, self.seeds);
        set!(cfg.class, self.class);
        set!(cfg.clip[0], self.clip_lo);
        set!(cfg.clip[1], self.clip_hi);
        set!(cfg.minimizer.tie_break, self.tie_break);
        set!(cfg.minimizer.restarts, self.restarts);
        set!(cfg.selection, self.selection);
        if let Some(a) = self.alpha {
            cfg.alpha.coef = Coefficient::Manual;
            cfg.alpha.value = a;
        }
        if self.alpha_from_theorem {
            if self.alpha.is_some() {
                return Err(LabError::validation("--alpha and --alpha-from-theorem are exclusive"));
            }
            cfg.alpha.coef = match self.coef {
                None | Some(Coefficient::Manual) => Coefficient::Cov,
                Some(c) => c,
            };
        } else if let Some(c) = self.coef {
            cfg.alpha.coef = c;
        }
        if self.out.is_some() {
            cfg.output = self.out.clone();
        }
        if self.workers.is_some() {
            cfg.workers = self.workers;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long, default_value = "random_tabular(states=3, actions=2, horizon=3, seed=0)")]
    pub instance: String,
    #[arg(long, default_value = "pair")]
    pub class: String,
    /// One or more comma-separated values.
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    pub beta: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    pub f_samples: usize,
    #[arg(long, default_value_t = 50)]
    pub pairs: usize,
    #[arg(long, default_value_t = 100)]
    pub policies: usize,
    /// `T` of the exhaustive SEC check.
    #[arg(long = "sec-T", default_value_t = 3)]
    pub sec_iterations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct CounterexampleArgs {
    #[arg(long, default_value_t = 0.02)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.125)]
    pub c: f64,
    #[arg(long = "T", default_value_t = 100)]
    pub iterations: usize,
    #[arg(long, default_value = "0..199")]
    pub seeds: String,
    #[arg(long = "alpha-c", default_value_t = 1.0)]
    pub alpha_c: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// TOML file with `[base]` and `[sweep]` tables.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub instance: String,
    /// Only matters for `prop31`.
    #[arg(long, default_value_t = 0.02)]
    pub beta: f64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Run(args) => {
            let cfg = args.to_config()?;
            let out = run_experiment(&cfg)?;
            println!("output\t{}", out.dir.display());
            print!("{}", aggregate_tsv(&out.prepared, &out.hash, &out.summary));
            Ok(())
        }
        Command::Diagnose(args) => {
            let opts = DiagnoseOptions {
                instance: args.instance.clone(),
                class: args.class.clone(),
                betas: args.beta.clone(),
                f_samples: args.f_samples,
                pairs: args.pairs,
                policies: args.policies,
                sec_iterations: args.sec_iterations,
                seed: args.seed,
            };
            let report = diagnose(&opts)?;
            print!("{}", report.to_tsv());
            let failed: Vec<&str> = report.failures().map(|r| r.name).collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(LabError::Identity(failed.join(", ")))
            }
        }
        Command::Counterexample(args) => {
            let opts = CounterexampleOptions {
                beta: args.beta,
                c: args.c,
                iterations: args.iterations,
                seeds: args.seeds.clone(),
                alpha_c: args.alpha_c,
                workers: args.workers,
                output: args.out.clone(),
            };
            let report = run_counterexample(&opts)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", report.table());
            println!("output\t{}", report.table_path.display());
            Ok(())
        }
        Command::Sweep(args) => {
            let mut sweep = SweepConfig::read(&args.config)?;
            if args.out.is_some() {
                sweep.base.output = args.out.clone();
            }
            if args.workers.is_some() {
                sweep.base.workers = args.workers;
            }
            let out = run_sweep(&sweep)?;
            println!("output\t{}", out.dir.display());
            println!("beta\talpha_c\talpha_value\tslope\taverage_regret\tbest");
            for g in &out.fits {
                println!(
                    "{}\t{}\t{}\t{}\t{}\t{}",
                    g.beta,
                    g.alpha_c,
                    g.alpha_value,
                    g.slope,
                    g.average_regret,
                    u8::from(g.best)
                );
            }
            Ok(())
        }
        Command::Export(args) => {
            let inst = load_instance(&args.instance, args.beta)?;
            write_instance_file(&args.out, &inst)
        }
    }
}

/// Error line printed on stderr: a JSON object with the kind, exit code and message.
pub fn error_json(e: &LabError) -> String {
    let kind = match e.exit_code() {
        1 => "validation",
        2 => "identity",
        _ => "runtime",
    };
    serde_json::json!({ "error": kind, "code": e.exit_code(), "message": e.to_string() }).to_string()
}
