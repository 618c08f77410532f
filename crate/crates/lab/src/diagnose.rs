//! The diagnostics battery behind `xpo-lab diagnose`.

use std::fmt::Write as _;

use xpo_core::dcmdp::enumerate_trajectories;
use xpo_core::diagnostics::{
    coefficient_report, implicit_q_residual, regret_decomposition_check, sec_estimate, SecMode, SEC_EXHAUSTIVE_CAP,
};
use xpo_core::instances::random_policy;
use xpo_core::policy::vmax_check;
use xpo_core::rng::{uniform, Purpose, SeedStreams};
use xpo_core::softdp::{bellman_op, kl_regret, solve_soft_dp, StateActionFunction, FIXED_POINT_TOL};
use xpo_core::PolicyClass;

use crate::classes::build_class;
use crate::error::Result;
use crate::instance::load_instance;
use crate::runner::DENSE_DIAGNOSTIC_CAP;

pub const IDENTITY_TOL: f64 = 1e-8;
pub const OPTIMALITY_TOL: f64 = 1e-9;
pub const COEFFICIENT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnoseOptions {
    pub instance: String,
    pub class: String,
    pub betas: Vec<f64>,
    pub f_samples: usize,
    pub pairs: usize,
    pub policies: usize,
    pub sec_iterations: usize,
    pub seed: u64,
}

impl DiagnoseOptions {
    pub fn new(instance: &str, class: &str, betas: Vec<f64>) -> Self {
        Self {
            instance: instance.into(),
            class: class.into(),
            betas,
            f_samples: 100,
            pairs: 50,
            policies: 100,
            sec_iterations: 3,
            seed: 0,
        }
    }
}

/// One reported quantity. `limit` is `None` for informational rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticRow {
    pub beta: f64,
    pub name: &'static str,
    pub value: f64,
    pub limit: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnoseReport {
    pub rows: Vec<DiagnosticRow>,
}

impl DiagnoseReport {
    pub fn failures(&self) -> impl Iterator<Item = &DiagnosticRow> {
        self.rows.iter().filter(|r| !r.pass)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("beta\tcheck\tvalue\tlimit\tstatus\n");
        for r in &self.rows {
            let limit = r.limit.map_or("-".to_string(), |l| l.to_string());
            let status = match (r.limit, r.pass) {
                (None, _) => "info",
                (_, true) => "pass",
                (_, false) => "FAIL",
            };
            writeln!(out, "{}\t{}\t{}\t{limit}\t{status}", r.beta, r.name, r.value).unwrap();
        }
        out
    }
}

struct Rows<'a> {
    beta: f64,
    rows: &'a mut Vec<DiagnosticRow>,
}

impl Rows<'_> {
    fn info(&mut self, name: &'static str, value: f64) {
        self.rows.push(DiagnosticRow {
            beta: self.beta,
            name,
            value,
            limit: None,
            pass: true,
        });
    }

    fn at_most(&mut self, name: &'static str, value: f64, limit: f64) {
        self.rows.push(DiagnosticRow {
            beta: self.beta,
            name,
            value,
            limit: Some(limit),
            pass: value <= limit,
        });
    }
}

pub fn diagnose(opts: &DiagnoseOptions) -> Result<DiagnoseReport> {
    let mut rows = Vec::new();
    for &beta in &opts.betas {
        diagnose_beta(opts, beta, &mut Rows { beta, rows: &mut rows })?;
    }
    Ok(DiagnoseReport { rows })
}

fn diagnose_beta(opts: &DiagnoseOptions, beta: f64, out: &mut Rows<'_>) -> Result<()> {
    let inst = load_instance(&opts.instance, beta)?;
    let (mdp, reference) = (&inst.mdp, &inst.reference);
    let class = build_class(&opts.class, &inst, beta)?;
    let streams = SeedStreams::new(opts.seed);
    let n = mdp.num_states();
    let na = mdp.num_actions();
    enumerate_trajectories(mdp, DENSE_DIAGNOSTIC_CAP)?;

    let sol = solve_soft_dp(mdp, beta, reference)?;
    out.info("optimal_value", sol.optimal_value(mdp));
    let fixed_point = bellman_op(mdp, &sol.q, beta, reference)?.max_abs_diff(&sol.q);
    out.at_most("bellman_residual", fixed_point, FIXED_POINT_TOL);

    let scale = mdp.rmax().max(1.0);
    let mut worst_q = 0.0f64;
    for k in 0..opts.f_samples {
        let mut rng = streams.stream(k as u64, 0, Purpose::Diagnostics);
        let f = StateActionFunction::from_fn(n, na, |_, _| scale * (2.0 * uniform(&mut rng) - 1.0));
        worst_q = worst_q.max(implicit_q_residual(mdp, &f, beta, reference)?.max_residual);
    }
    out.at_most("implicit_q_residual", worst_q, IDENTITY_TOL);

    let mut worst_gap = 0.0f64;
    for k in 0..opts.pairs as u64 {
        let pi = random_policy(n, na, 0.0, opts.seed.wrapping_mul(1_000_003).wrapping_add(2 * k));
        let nu = random_policy(n, na, 0.0, opts.seed.wrapping_mul(1_000_003).wrapping_add(2 * k + 1));
        worst_gap = worst_gap.max(regret_decomposition_check(mdp, &pi, &nu, beta, reference)?.gap);
    }
    out.at_most("regret_decomposition_gap", worst_gap, IDENTITY_TOL);

    let mut worst_regret = f64::INFINITY;
    for k in 0..opts.policies as u64 {
        let pi = random_policy(n, na, 0.0, opts.seed.wrapping_add(7_777_777 + k));
        worst_regret = worst_regret.min(kl_regret(mdp, &pi, beta, reference)?);
    }
    out.at_most("negative_min_regret", -worst_regret, OPTIMALITY_TOL);

    let PolicyClass::Finite(finite) = &class else {
        return Ok(());
    };
    let space = enumerate_trajectories(mdp, DENSE_DIAGNOSTIC_CAP)?;
    let vmax = vmax_check(finite.policies(), beta, reference, &space);
    out.info("vmax", vmax.vmax);
    let report = coefficient_report(mdp, finite.policies(), reference)?;
    let c_cov = report.coverability.c_cov;
    let c_conc = report.concentrability.value;
    out.info("c_cov", c_cov);
    out.info("c_conc", c_conc);
    out.at_most("c_cov_minus_c_conc", c_cov - c_conc, COEFFICIENT_TOL * c_conc.max(1.0));
    let actions_h = (na as f64).powi(mdp.horizon() as i32);
    out.at_most("c_cov_over_actions_pow_h", c_cov / actions_h, 1.0 + COEFFICIENT_TOL);

    let t = opts.sec_iterations;
    let sequences = (finite.len() as u128).checked_pow(t as u32);
    if t > 0 && vmax.vmax > 0.0 && sequences.is_some_and(|s| s <= SEC_EXHAUSTIVE_CAP) {
        let sec = sec_estimate(mdp, finite, beta, reference, vmax.vmax, t, &SecMode::Exhaustive)?;
        let bound = 64.0 * c_cov * (1.0 + (t as f64).ln());
        out.at_most("sec_exhaustive", sec.value, bound);
    }
    Ok(())
}
