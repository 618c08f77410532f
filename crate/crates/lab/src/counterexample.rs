//! Online DPO against XPO on the two-action counterexample.

use std::fmt::Write as _;
use std::path::PathBuf;

use xpo_core::diagnostics::counterexample_instance;

use crate::config::{Algorithm, Coefficient, ExperimentConfig, Sampling};
use crate::error::Result;
use crate::output::write_file;
use crate::runner::{run_experiment, ExperimentOutput};

#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleOptions {
    pub beta: f64,
    pub c: f64,
    pub iterations: usize,
    pub seeds: String,
    /// Multiplier of the theoretical `alpha` schedule for XPO.
    pub alpha_c: f64,
    pub workers: Option<usize>,
    pub output: Option<PathBuf>,
}

impl Default for CounterexampleOptions {
    fn default() -> Self {
        Self {
            beta: 0.02,
            c: 0.125,
            iterations: 100,
            seeds: "0..199".into(),
            alpha_c: 1.0,
            workers: None,
            output: None,
        }
    }
}

impl CounterexampleOptions {
    pub fn configs(&self) -> (ExperimentConfig, ExperimentConfig) {
        let instance = format!("prop31(c={})", self.c);
        let mut dpo = ExperimentConfig::new(&instance, Algorithm::OnlineDpo, self.beta, self.iterations, &self.seeds);
        dpo.sampling = Sampling::OnPolicy;
        let mut xpo = ExperimentConfig::new(&instance, Algorithm::Xpo, self.beta, self.iterations, &self.seeds);
        xpo.sampling = Sampling::Reference;
        xpo.alpha.coef = Coefficient::Cov;
        xpo.alpha.c = self.alpha_c;
        for cfg in [&mut dpo, &mut xpo] {
            cfg.workers = self.workers;
            cfg.output = self.output.clone();
        }
        (dpo, xpo)
    }

    /// Largest `T` covered by the lower bound: `exp(1 / (8 beta)) / 2`.
    pub fn regime_limit(&self) -> f64 {
        0.5 * (1.0 / (8.0 * self.beta)).exp()
    }
}

#[derive(Debug, Clone)]
pub struct CounterexampleReport {
    pub epsilon: f64,
    /// `(1 - 2 eps)^T`.
    pub theory_stuck_bound: f64,
    pub warnings: Vec<String>,
    pub dpo: ExperimentOutput,
    pub xpo: ExperimentOutput,
    /// Smallest regret over all iterates of all stuck Online DPO runs.
    pub min_stuck_regret: Option<f64>,
    pub table_path: PathBuf,
}

impl CounterexampleReport {
    pub fn table(&self) -> String {
        let d = &self.dpo.summary;
        let x = &self.xpo.summary;
        let opt = |v: Option<f64>| v.map_or("none".to_string(), |v| v.to_string());
        let rows: [(&str, String); 11] = [
            ("epsilon", self.epsilon.to_string()),
            ("seeds", d.seeds.to_string()),
            ("theory_stuck_bound", self.theory_stuck_bound.to_string()),
            ("dpo_stuck_fraction", d.stuck_fraction.to_string()),
            ("dpo_min_stuck_regret", opt(self.min_stuck_regret)),
            ("dpo_mean_selected_regret", d.mean_selected_regret.to_string()),
            ("xpo_alpha", self.xpo.prepared.alpha.to_string()),
            ("xpo_stuck_fraction", x.stuck_fraction.to_string()),
            ("xpo_escape_fraction", x.escape_fraction.to_string()),
            ("xpo_median_first_escape", x.median_first_escape.map_or("none".into(), |t| t.to_string())),
            ("xpo_mean_selected_regret", x.mean_selected_regret.to_string()),
        ];
        let mut out = String::from("metric\tvalue\n");
        for (k, v) in rows {
            writeln!(out, "{k}\t{v}").unwrap();
        }
        out
    }
}

pub fn run_counterexample(opts: &CounterexampleOptions) -> Result<CounterexampleReport> {
    let ce = counterexample_instance(opts.beta, opts.c)?;
    let mut warnings = Vec::new();
    if opts.iterations as f64 > opts.regime_limit() {
        warnings.push(format!(
            "T = {} exceeds exp(1/(8 beta))/2 = {:.3}; the lower bound on the stuck probability no longer applies",
            opts.iterations,
            opts.regime_limit()
        ));
    }
    let (dpo_cfg, xpo_cfg) = opts.configs();
    let dpo = run_experiment(&dpo_cfg)?;
    let xpo = run_experiment(&xpo_cfg)?;
    let min_stuck_regret = dpo
        .results
        .iter()
        .filter(|r| r.stuck())
        .flat_map(|r| r.record.regrets())
        .min_by(f64::total_cmp);
    let root = dpo_cfg.output_root();
    let table_path = root
        .join(format!("counterexample-{}-{}", dpo.hash, xpo.hash))
        .join("comparison.tsv");
    let report = CounterexampleReport {
        epsilon: ce.epsilon,
        theory_stuck_bound: (1.0 - 2.0 * ce.epsilon).powi(opts.iterations as i32),
        warnings,
        dpo,
        xpo,
        min_stuck_regret,
        table_path,
    };
    write_file(&report.table_path, &report.table())?;
    Ok(report)
}
