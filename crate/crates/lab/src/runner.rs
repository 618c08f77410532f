//! Preparing and executing experiments.

use std::path::PathBuf;

use rayon::prelude::*;
use xpo_core::dcmdp::enumerate_trajectories;
use xpo_core::diagnostics::{coverability, sec_estimate, SecMode};
use xpo_core::policy::vmax_check;
use xpo_core::trainer::{
    alpha_schedule, run_loop, run_offline_dpo_sampled, select_final, AlphaInputs, Comparison, Complexity, LoopSpec,
    OptimismData, Selected, Selection, MEMBERSHIP_TOL,
};
use xpo_core::{PolicyClass, RunRecord, TabularPolicy, TrainingSetup};

use crate::classes::build_class;
use crate::config::{Algorithm, Coefficient, ExperimentConfig, Optimism, Sampling, SelectionRule};
use crate::error::{LabError, Result};
use crate::instance::{load_instance, Instance};
use crate::output;
use crate::summary::{summarize, SeedTrace, Summary};

/// Random sequences used for the sampled SEC in the `sec` schedule.
pub const SEC_SCHEDULE_SAMPLES: usize = 256;
pub const DENSE_DIAGNOSTIC_CAP: u64 = 10_000_000;

/// How `alpha` was obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaDerivation {
    pub vmax: f64,
    pub complexity: Complexity,
    pub log_class_size: f64,
}

/// A validated config with its instance, class and resolved `alpha`.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: ExperimentConfig,
    pub instance: Instance,
    pub class: PolicyClass,
    pub alpha: f64,
    pub derivation: Option<AlphaDerivation>,
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    config.validate()?;
    let instance = load_instance(&config.instance, config.beta)?;
    let class = build_class(&config.class, &instance, config.beta)?;
    if let PolicyClass::Finite(c) = &class {
        c.check_support(&instance.reference)
            .map_err(|e| LabError::validation(format!("class: {e}")))?;
        for (i, p) in c.policies().iter().enumerate() {
            instance
                .mdp
                .check_policy(p)
                .map_err(|e| LabError::validation(format!("class member {i}: {e}")))?;
        }
    }
    let (alpha, derivation) = resolve_alpha(config, &instance, &class)?;
    Ok(Prepared {
        config: config.clone(),
        instance,
        class,
        alpha,
        derivation,
    })
}

fn resolve_alpha(
    config: &ExperimentConfig,
    inst: &Instance,
    class: &PolicyClass,
) -> Result<(f64, Option<AlphaDerivation>)> {
    let a = &config.alpha;
    if a.coef == Coefficient::Manual {
        return Ok((a.value, None));
    }
    let PolicyClass::Finite(finite) = class else {
        return Err(LabError::validation("alpha.coef: the schedule needs a finite class (log |Pi|)"));
    };
    let space = enumerate_trajectories(&inst.mdp, DENSE_DIAGNOSTIC_CAP)?;
    let report = vmax_check(finite.policies(), config.beta, &inst.reference, &space);
    if report.support_violation {
        return Err(LabError::validation("class: a member is not absolutely continuous w.r.t. the reference"));
    }
    let complexity = match a.coef {
        Coefficient::Cov => Complexity::Coverability(coverability(&inst.mdp, finite.policies())?.c_cov),
        _ => {
            let mode = SecMode::Sampled {
                samples: SEC_SCHEDULE_SAMPLES,
                seed: 0,
            };
            let sec = sec_estimate(&inst.mdp, finite, config.beta, &inst.reference, report.vmax, config.iterations, &mode)?;
            Complexity::Sec(sec.value)
        }
    };
    let log_class_size = class.log_size().unwrap_or(0.0);
    let alpha = alpha_schedule(&AlphaInputs {
        beta: config.beta,
        vmax: report.vmax,
        rmax: inst.mdp.rmax(),
        iterations: config.iterations.max(1),
        log_class_size,
        delta: a.delta,
        complexity,
        c: a.c,
    })
    .map_err(|e| LabError::validation(format!("alpha: {e}")))?;
    Ok((
        alpha,
        Some(AlphaDerivation {
            vmax: report.vmax,
            complexity,
            log_class_size,
        }),
    ))
}

/// Outcome of one seed.
#[derive(Debug, Clone)]
pub struct SeedResult {
    pub seed: u64,
    pub record: RunRecord,
    pub selected: Selected,
    pub selected_regret: f64,
    /// Whether each iterate equals the reference.
    pub at_reference: Vec<bool>,
}

impl SeedResult {
    pub fn stuck(&self) -> bool {
        self.at_reference.iter().all(|&b| b)
    }

    pub fn trace(&self) -> SeedTrace {
        SeedTrace {
            regrets: self.record.regrets().collect(),
            at_reference: self.at_reference.clone(),
            selected_regret: self.selected_regret,
        }
    }
}

impl Prepared {
    pub fn setup(&self) -> Result<TrainingSetup<'_>> {
        let mut setup = TrainingSetup::new(&self.instance.mdp, &self.instance.reference, &self.class, self.config.beta);
        setup.clip = self.config.clip()?;
        setup.minimizer = self.config.minimizer.to_core();
        Ok(setup)
    }

    pub fn loop_spec(&self) -> LoopSpec {
        let c = &self.config;
        let n = self.instance.mdp.num_states();
        LoopSpec {
            iterations: c.iterations,
            batch: c.batch,
            comparison: match c.sampling {
                Sampling::OnPolicy => Comparison::Current,
                Sampling::Reference => Comparison::Reference,
                Sampling::Uniform => Comparison::Fixed(TabularPolicy::uniform(n, self.instance.mdp.num_actions())),
                Sampling::Historical => Comparison::Historical,
            },
            alpha: self.alpha,
            optimism: match c.optimism {
                Optimism::Reuse => OptimismData::Reuse,
                Optimism::Fresh => OptimismData::Fresh,
            },
        }
    }

    pub fn run_seed(&self, seed: u64) -> Result<SeedResult> {
        let setup = self.setup()?;
        let record = match self.config.algorithm {
            Algorithm::OfflineDpo => run_offline_dpo_sampled(&setup, self.config.iterations, seed)?,
            _ => run_loop(&setup, &self.loop_spec(), seed)?,
        };
        let rule = match self.config.selection_rule()? {
            SelectionRule::Exact => Selection::Exact,
            SelectionRule::Validation(n) => Selection::Validation(n),
        };
        let selected = select_final(&record, &self.instance.mdp, &self.instance.reference, rule, seed)?;
        let selected_regret = record.rows[selected.t - 1].regret;
        let at_reference = record
            .policies
            .iter()
            .map(|p| p.max_abs_diff(&self.instance.reference) <= MEMBERSHIP_TOL)
            .collect();
        Ok(SeedResult {
            seed,
            record,
            selected,
            selected_regret,
            at_reference,
        })
    }
}

/// Runs `f` over `seeds` on a pool of `workers` threads; results keep seed order.
pub fn par_seeds<T, F>(seeds: &[u64], workers: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| LabError::Runtime(format!("cannot start worker pool: {e}")))?;
    pool.install(|| seeds.par_iter().map(|&s| f(s)).collect())
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub dir: PathBuf,
    pub hash: String,
    pub prepared: Prepared,
    pub results: Vec<SeedResult>,
    pub summary: Summary,
}

/// Runs every seed and returns the results without writing anything.
pub fn execute(config: &ExperimentConfig) -> Result<(Prepared, Vec<SeedResult>, Summary)> {
    let prepared = prepare(config)?;
    let seeds = config.seed_list()?;
    let results = par_seeds(&seeds, config.workers, |s| prepared.run_seed(s))?;
    let traces: Vec<SeedTrace> = results.iter().map(SeedResult::trace).collect();
    let summary = summarize(&traces);
    Ok((prepared, results, summary))
}

/// Runs every seed and writes the output directory `<root>/<hash>`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let (prepared, results, summary) = execute(config)?;
    let hash = config.short_hash();
    let dir = config.output_root().join(&hash);
    output::write_experiment(&dir, &prepared, &results, &summary)?;
    Ok(ExperimentOutput {
        dir,
        hash,
        prepared,
        results,
        summary,
    })
}
