//! Training loops: offline DPO, online DPO, iterative DPO and XPO with
//! reference, fixed or historical sampling of the second response.
//!
//! Every loop is an instance of [`run_loop`]. At iteration `t` and batch
//! slot `j` the draws come from dedicated streams (see [`crate::rng`]), so
//! two loops that make the same draws for the same purposes produce
//! identical records.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::dcmdp::{rollout_from, Dcmdp, StateId, TabularPolicy, Trajectory};
use crate::error::{Error, Result};
use crate::math;
use crate::objective::{
    minimize, CompiledObjective, Member, MinimizerConfig, Minimized, ObjectiveConfig, PolicyClass,
};
use crate::policy::Clip;
use crate::preference::{label_pair, PreferenceDataset, PreferencePair};
use crate::rng::{sample_categorical, Purpose, SeedStreams};
use crate::softdp::{j_beta_monte_carlo, j_beta_recursive, solve_soft_dp};

/// Tolerance used to decide whether the reference policy is a class member.
pub const MEMBERSHIP_TOL: f64 = 1e-12;

/// Source of the second response `tau~` in XPO.
#[derive(Debug, Clone, PartialEq)]
pub enum SamplingStrategy {
    Reference,
    Fixed(TabularPolicy),
    /// Uniform over the past iterates `pi^(1..t)`, whole episode.
    Historical,
}

/// How the optimism set `D_opt^(t)` is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OptimismData {
    /// Re-use responses already drawn: the `tau~` samples for reference and
    /// fixed sampling, the `tau` samples for historical sampling.
    #[default]
    Reuse,
    /// Draw `t` fresh episodes from the sampling policy at iteration `t`.
    Fresh,
}

/// Source of the second response in online DPO.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DpoSampling {
    /// Both responses from the current iterate.
    #[default]
    OnPolicy,
    /// Second response from the reference policy.
    Reference,
}

/// Second-response source for the generic loop.
#[derive(Debug, Clone, PartialEq)]
pub enum Comparison {
    Current,
    Reference,
    Fixed(TabularPolicy),
    Historical,
}

impl From<&SamplingStrategy> for Comparison {
    fn from(s: &SamplingStrategy) -> Self {
        match s {
            SamplingStrategy::Reference => Comparison::Reference,
            SamplingStrategy::Fixed(p) => Comparison::Fixed(p.clone()),
            SamplingStrategy::Historical => Comparison::Historical,
        }
    }
}

/// Shared inputs of every training loop.
#[derive(Debug, Clone, Copy)]
pub struct TrainingSetup<'a> {
    pub mdp: &'a Dcmdp,
    pub reference: &'a TabularPolicy,
    pub class: &'a PolicyClass,
    pub beta: f64,
    pub clip: Clip,
    pub minimizer: MinimizerConfig,
}

impl<'a> TrainingSetup<'a> {
    pub fn new(mdp: &'a Dcmdp, reference: &'a TabularPolicy, class: &'a PolicyClass, beta: f64) -> Self {
        Self {
            mdp,
            reference,
            class,
            beta,
            clip: Clip::DEFAULT,
            minimizer: MinimizerConfig::default(),
        }
    }
}

/// Full description of one loop.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopSpec {
    pub iterations: usize,
    pub batch: usize,
    pub comparison: Comparison,
    /// Zero disables the optimism term.
    pub alpha: f64,
    pub optimism: OptimismData,
}

/// Metrics of iterate `pi^(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateRow {
    /// 1-based iterate index.
    pub t: usize,
    /// Class member; `None` when the iterate lies outside the class.
    pub member: Option<Member>,
    pub j_beta: f64,
    pub regret: f64,
    /// Objective value at which the iterate was selected; `None` for `t = 1`.
    pub objective: Option<f64>,
    /// Preference pairs available when the iterate was computed.
    pub n_pref: usize,
    pub alpha: f64,
}

impl IterateRow {
    pub fn in_class(&self) -> bool {
        self.member.is_some()
    }
}

/// Trace of a training loop. Holds `T + 1` iterates.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    pub beta: f64,
    pub optimal_value: f64,
    pub rows: Vec<IterateRow>,
    pub policies: Vec<TabularPolicy>,
    pub dataset: PreferenceDataset,
}

impl RunRecord {
    pub fn final_policy(&self) -> &TabularPolicy {
        self.policies.last().expect("a record holds at least one iterate")
    }

    pub fn regrets(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| r.regret)
    }
}

struct Evaluator<'a> {
    mdp: &'a Dcmdp,
    reference: &'a TabularPolicy,
    beta: f64,
    optimal: f64,
}

impl Evaluator<'_> {
    fn j_and_regret(&self, policy: &TabularPolicy) -> Result<(f64, f64)> {
        let j = j_beta_recursive(self.mdp, policy, self.beta, self.reference)?;
        Ok((j, self.optimal - j))
    }
}

fn reference_member(class: &PolicyClass, reference: &TabularPolicy) -> Option<Member> {
    match class {
        PolicyClass::Finite(c) => c.position_of(reference, MEMBERSHIP_TOL).map(Member::Index),
        PolicyClass::LogLinear(f) => {
            let zero = alloc::vec![0.0; f.dim()];
            let p = f.policy(&zero).ok()?;
            (p.tabular().max_abs_diff(reference) <= MEMBERSHIP_TOL).then_some(Member::Theta(zero))
        }
    }
}

fn draw_initial_state(mdp: &Dcmdp, streams: &SeedStreams, t: u64, slot: u64) -> Result<StateId> {
    let mut rng = streams.stream(t, slot, Purpose::InitialState);
    let i = sample_categorical(mdp.rho(), &mut rng)
        .ok_or_else(|| Error::Validation("initial distribution has no mass".into()))?;
    Ok(mdp.initial_states()[i])
}

/// Runs a loop described by `spec` from `pi^(1) = ref`.
pub fn run_loop(setup: &TrainingSetup<'_>, spec: &LoopSpec, seed: u64) -> Result<RunRecord> {
    if spec.batch == 0 {
        return Err(Error::param("batch", "must be positive"));
    }
    let objective_config = ObjectiveConfig::new(setup.beta, spec.alpha)?.with_clip(setup.clip);
    setup.minimizer.validate()?;
    let mdp = setup.mdp;
    mdp.check_policy(setup.reference)?;
    if let Comparison::Fixed(p) = &spec.comparison {
        mdp.check_policy(p)?;
    }
    let solution = solve_soft_dp(mdp, setup.beta, setup.reference)?;
    let eval = Evaluator {
        mdp,
        reference: setup.reference,
        beta: setup.beta,
        optimal: solution.optimal_value(mdp),
    };
    let streams = SeedStreams::new(seed);

    let mut policies = alloc::vec![setup.reference.clone()];
    let (j1, r1) = eval.j_and_regret(setup.reference)?;
    let mut rows = alloc::vec![IterateRow {
        t: 1,
        member: reference_member(setup.class, setup.reference),
        j_beta: j1,
        regret: r1,
        objective: None,
        n_pref: 0,
        alpha: spec.alpha,
    }];
    let mut dataset = PreferenceDataset::new();
    let mut compiled = CompiledObjective::empty(objective_config, setup.reference)?;
    let mut warm: Option<Vec<f64>> = None;

    for t in 1..=spec.iterations {
        let step = (|| -> Result<Minimized> {
            let tt = t as u64;
            let current = &policies[t - 1];
            let mut responses = Vec::with_capacity(spec.batch);
            let mut comparisons = Vec::with_capacity(spec.batch);
            for j in 0..spec.batch {
                let slot = j as u64;
                let s1 = draw_initial_state(mdp, &streams, tt, slot)?;
                let tau = rollout_from(mdp, current, s1, &mut streams.stream(tt, slot, Purpose::Response))?;
                let sampler = match &spec.comparison {
                    Comparison::Current => current,
                    Comparison::Reference => setup.reference,
                    Comparison::Fixed(p) => p,
                    Comparison::Historical => {
                        let i = streams.stream(tt, slot, Purpose::HistoryPick).random_range(0..t);
                        &policies[i]
                    }
                };
                let other =
                    rollout_from(mdp, sampler, s1, &mut streams.stream(tt, slot, Purpose::Comparison))?;
                let pair = label_pair(&tau, &other, &mut streams.stream(tt, slot, Purpose::Label))?;
                compiled.push_pair(&pair);
                dataset.push(pair, t);
                responses.push(tau);
                comparisons.push(other);
            }
            if spec.alpha != 0.0 {
                match spec.optimism {
                    OptimismData::Reuse => {
                        let reused = match spec.comparison {
                            Comparison::Historical => &responses,
                            _ => &comparisons,
                        };
                        reused.iter().for_each(|tau| compiled.push_optimism(tau));
                    }
                    OptimismData::Fresh => {
                        compiled.clear_optimism();
                        for tau in fresh_optimism(setup, spec, &streams, &policies, t)? {
                            compiled.push_optimism(&tau);
                        }
                    }
                }
            }
            let mut rng = streams.stream(tt, 0, Purpose::Minimizer);
            minimize(&compiled, setup.class, &setup.minimizer, warm.as_deref(), &mut rng)
        })()
        .map_err(|e| e.at_iteration(t))?;

        if let Member::Theta(theta) = &step.member {
            warm = Some(theta.clone());
        }
        let (j, regret) = eval.j_and_regret(&step.policy)?;
        rows.push(IterateRow {
            t: t + 1,
            member: Some(step.member),
            j_beta: j,
            regret,
            objective: Some(step.objective),
            n_pref: dataset.len(),
            alpha: spec.alpha,
        });
        policies.push(step.policy);
    }
    Ok(RunRecord {
        seed,
        beta: setup.beta,
        optimal_value: eval.optimal,
        rows,
        policies,
        dataset,
    })
}

fn fresh_optimism(
    setup: &TrainingSetup<'_>,
    spec: &LoopSpec,
    streams: &SeedStreams,
    policies: &[TabularPolicy],
    t: usize,
) -> Result<Vec<Trajectory>> {
    let tt = t as u64;
    let mut out = Vec::with_capacity(t);
    for k in 0..t {
        let mut rng = streams.stream(tt, k as u64, Purpose::OptimismSamples);
        let i = sample_categorical(setup.mdp.rho(), &mut rng)
            .ok_or_else(|| Error::Validation("initial distribution has no mass".into()))?;
        let s1 = setup.mdp.initial_states()[i];
        let sampler = match &spec.comparison {
            Comparison::Current => &policies[t - 1],
            Comparison::Reference => setup.reference,
            Comparison::Fixed(p) => p,
            Comparison::Historical => &policies[rng.random_range(0..t)],
        };
        out.push(rollout_from(setup.mdp, sampler, s1, &mut rng)?);
    }
    Ok(out)
}

/// XPO with optimism coefficient `alpha`.
pub fn run_xpo(
    setup: &TrainingSetup<'_>,
    alpha: f64,
    iterations: usize,
    strategy: &SamplingStrategy,
    optimism: OptimismData,
    seed: u64,
) -> Result<RunRecord> {
    run_loop(
        setup,
        &LoopSpec {
            iterations,
            batch: 1,
            comparison: strategy.into(),
            alpha,
            optimism,
        },
        seed,
    )
}

/// Online DPO: one pair per update, no optimism.
pub fn run_online_dpo(
    setup: &TrainingSetup<'_>,
    iterations: usize,
    sampling: DpoSampling,
    seed: u64,
) -> Result<RunRecord> {
    run_loop(
        setup,
        &LoopSpec {
            iterations,
            batch: 1,
            comparison: match sampling {
                DpoSampling::OnPolicy => Comparison::Current,
                DpoSampling::Reference => Comparison::Reference,
            },
            alpha: 0.0,
            optimism: OptimismData::Reuse,
        },
        seed,
    )
}

/// Iterative DPO: `batch` on-policy pairs per update.
pub fn run_iterative_dpo(
    setup: &TrainingSetup<'_>,
    outer_iterations: usize,
    batch: usize,
    seed: u64,
) -> Result<RunRecord> {
    run_loop(
        setup,
        &LoopSpec {
            iterations: outer_iterations,
            batch,
            comparison: Comparison::Current,
            alpha: 0.0,
            optimism: OptimismData::Reuse,
        },
        seed,
    )
}

/// One DPO minimization on a fixed dataset.
pub fn run_offline_dpo(
    setup: &TrainingSetup<'_>,
    pairs: &[PreferencePair],
    seed: u64,
) -> Result<Minimized> {
    if pairs.is_empty() {
        return Err(Error::Empty("preference dataset"));
    }
    let config = ObjectiveConfig::dpo(setup.beta)?.with_clip(setup.clip);
    let compiled = CompiledObjective::new(config, setup.reference, pairs, &[])?;
    let mut rng = SeedStreams::new(seed).stream(0, 0, Purpose::Minimizer);
    minimize(&compiled, setup.class, &setup.minimizer, None, &mut rng)
}

/// Offline DPO on `n_pairs` reference-vs-reference comparisons. The record
/// holds `pi^(1) = ref` and the minimizer output.
pub fn run_offline_dpo_sampled(setup: &TrainingSetup<'_>, n_pairs: usize, seed: u64) -> Result<RunRecord> {
    let mdp = setup.mdp;
    mdp.check_policy(setup.reference)?;
    let solution = solve_soft_dp(mdp, setup.beta, setup.reference)?;
    let eval = Evaluator {
        mdp,
        reference: setup.reference,
        beta: setup.beta,
        optimal: solution.optimal_value(mdp),
    };
    let streams = SeedStreams::new(seed);
    let mut dataset = PreferenceDataset::new();
    for i in 0..n_pairs {
        let t = i as u64 + 1;
        let s1 = draw_initial_state(mdp, &streams, t, 0)?;
        let tau = rollout_from(mdp, setup.reference, s1, &mut streams.stream(t, 0, Purpose::Response))?;
        let other = rollout_from(mdp, setup.reference, s1, &mut streams.stream(t, 0, Purpose::Comparison))?;
        dataset.push(label_pair(&tau, &other, &mut streams.stream(t, 0, Purpose::Label))?, 1);
    }
    let out = run_offline_dpo(setup, dataset.pairs(), seed)?;
    let (j1, r1) = eval.j_and_regret(setup.reference)?;
    let (j2, r2) = eval.j_and_regret(&out.policy)?;
    let rows = alloc::vec![
        IterateRow {
            t: 1,
            member: reference_member(setup.class, setup.reference),
            j_beta: j1,
            regret: r1,
            objective: None,
            n_pref: 0,
            alpha: 0.0,
        },
        IterateRow {
            t: 2,
            member: Some(out.member),
            j_beta: j2,
            regret: r2,
            objective: Some(out.objective),
            n_pref: dataset.len(),
            alpha: 0.0,
        },
    ];
    Ok(RunRecord {
        seed,
        beta: setup.beta,
        optimal_value: eval.optimal,
        rows,
        policies: alloc::vec![setup.reference.clone(), out.policy],
        dataset,
    })
}

/// Which coefficient enters the optimism schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Complexity {
    /// Trajectory-level coverability.
    Coverability(f64),
    /// Sequential extrapolation coefficient; adds a `log T` factor.
    Sec(f64),
}

/// Inputs of [`alpha_schedule`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaInputs {
    pub beta: f64,
    pub vmax: f64,
    pub rmax: f64,
    pub iterations: usize,
    pub log_class_size: f64,
    pub delta: f64,
    pub complexity: Complexity,
    pub c: f64,
}

impl AlphaInputs {
    pub const DEFAULT_DELTA: f64 = 0.05;
}

/// `c * beta / ((Vmax + Rmax) e^{2 Rmax}) * sqrt(log(|Pi| T / delta) / (T C))`,
/// with an extra `log T` inside the root for the SEC form.
pub fn alpha_schedule(p: &AlphaInputs) -> Result<f64> {
    let positive = [
        ("beta", p.beta),
        ("vmax", p.vmax),
        ("c", p.c),
        ("delta", p.delta),
    ];
    for (name, v) in positive {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::param(name, format!("must be positive and finite, got {v}")));
        }
    }
    if !(p.rmax >= 0.0) || !(p.log_class_size >= 0.0) {
        return Err(Error::param("rmax", "rmax and log|Pi| must be non-negative"));
    }
    if p.iterations == 0 {
        return Err(Error::param("iterations", "must be positive"));
    }
    let t = p.iterations as f64;
    let log_term = p.log_class_size + math::ln(t) - math::ln(p.delta);
    let inner = match p.complexity {
        Complexity::Coverability(c) if c > 0.0 => log_term / (t * c),
        Complexity::Sec(s) if s > 0.0 => log_term * math::ln(t) / (t * s),
        _ => return Err(Error::param("complexity", "coefficient must be positive")),
    };
    Ok(p.c * p.beta / ((p.vmax + p.rmax) * math::exp(2.0 * p.rmax)) * math::sqrt(inner))
}

/// Rule for choosing the returned iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    Exact,
    /// Monte Carlo estimate of `J_beta` from this many episodes.
    Validation(usize),
}

/// Result of [`select_final`].
#[derive(Debug, Clone, PartialEq)]
pub struct Selected {
    /// 1-based iterate index.
    pub t: usize,
    pub score: f64,
    pub rule: Selection,
}

/// `argmax_t J_beta(pi^(t))` over in-class iterates, earliest on ties.
pub fn select_final(
    record: &RunRecord,
    mdp: &Dcmdp,
    reference: &TabularPolicy,
    rule: Selection,
    seed: u64,
) -> Result<Selected> {
    let streams = SeedStreams::new(seed);
    let mut best: Option<Selected> = None;
    for (row, policy) in record.rows.iter().zip(&record.policies) {
        if !row.in_class() {
            continue;
        }
        let score = match rule {
            Selection::Exact => row.j_beta,
            Selection::Validation(n) => {
                let mut rng = streams.stream(row.t as u64, 0, Purpose::Validation);
                j_beta_monte_carlo(mdp, policy, record.beta, reference, n, &mut rng)?.value
            }
        };
        if best.as_ref().is_none_or(|b| score > b.score) {
            best = Some(Selected { t: row.t, score, rule });
        }
    }
    best.ok_or(Error::Empty("in-class iterates"))
}
