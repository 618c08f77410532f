//! DPO loss, the optimistic XPO objective, their gradients over log-linear
//! families, and minimizers over policy classes.
//!
//! Both objectives are minimized. The XPO objective is
//! `alpha * sum_{D_opt} [clip(log pi - log ref) + log ref] + dpo_loss`,
//! so with a wide enough clip it equals `alpha * sum log pi(tau~) + dpo_loss`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::LN_2;

use rand::{Rng, RngCore};

use crate::dcmdp::{TabularPolicy, Trajectory};
use crate::error::{Error, Result};
use crate::math;
use crate::policy::{
    log_prob, log_ratio_from_logs, standard_normal, Clip, FinitePolicyClass, LogLinearFamily,
};
use crate::preference::PreferencePair;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveConfig {
    pub beta: f64,
    pub alpha: f64,
    /// Applied to the optimism term only.
    pub clip: Clip,
}

impl ObjectiveConfig {
    pub fn new(beta: f64, alpha: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::param("beta", format!("must be positive and finite, got {beta}")));
        }
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::param("alpha", format!("must be non-negative, got {alpha}")));
        }
        Ok(Self {
            beta,
            alpha,
            clip: Clip::DEFAULT,
        })
    }

    pub fn dpo(beta: f64) -> Result<Self> {
        Self::new(beta, 0.0)
    }

    pub fn with_clip(mut self, clip: Clip) -> Self {
        self.clip = clip;
        self
    }
}

/// How exact ties are resolved by the finite-class argmin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    /// Lowest class index.
    #[default]
    First,
    /// Highest class index.
    Last,
    /// Uniform among the tied members, drawn from the minimizer's generator.
    Random,
}

/// Settings for [`minimize`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizerConfig {
    pub tie_break: TieBreak,
    pub max_iters: usize,
    /// Base step is `step_scale * beta`.
    pub step_scale: f64,
    pub backtrack: f64,
    /// Maximum number of halvings tried before a descent attempt is abandoned.
    pub max_backtracks: usize,
    /// Stop when the gradient norm of the per-pair objective is below this.
    pub tol: f64,
    pub restarts: usize,
    /// Restarts after the first start from `N(0, restart_scale^2 I)`.
    pub restart_scale: f64,
}

impl Default for MinimizerConfig {
    fn default() -> Self {
        Self {
            tie_break: TieBreak::First,
            max_iters: 2000,
            step_scale: 0.1,
            backtrack: 0.5,
            max_backtracks: 60,
            tol: 1e-8,
            restarts: 3,
            restart_scale: 1.0,
        }
    }
}

impl MinimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_scale > 0.0) {
            return Err(Error::param("step_scale", "must be positive"));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::param("backtrack", "must lie in (0, 1)"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::param("tol", "must be non-negative"));
        }
        if self.restarts == 0 {
            return Err(Error::param("restarts", "at least one start is required"));
        }
        if !(self.restart_scale >= 0.0) {
            return Err(Error::param("restart_scale", "must be non-negative"));
        }
        Ok(())
    }
}

/// `beta * lr_plus - beta * lr_minus`; exactly zero for a degenerate pair.
pub fn margin(policy: &TabularPolicy, reference: &TabularPolicy, beta: f64, pair: &PreferencePair) -> f64 {
    if pair.is_degenerate() {
        return 0.0;
    }
    let lp = log_ratio_from_logs(log_prob(policy, &pair.tau_plus), log_prob(reference, &pair.tau_plus));
    let lm = log_ratio_from_logs(log_prob(policy, &pair.tau_minus), log_prob(reference, &pair.tau_minus));
    beta * lp - beta * lm
}

fn pair_loss(m: f64) -> f64 {
    if m == 0.0 {
        LN_2
    } else if m.is_nan() {
        f64::INFINITY
    } else {
        math::neg_log_sigmoid(m)
    }
}

fn check_beta(beta: f64) -> Result<()> {
    ObjectiveConfig::new(beta, 0.0).map(|_| ())
}

/// `sum_pairs -log sigmoid(margin)`; `+inf` when `pi` is not absolutely
/// continuous with respect to the reference.
pub fn dpo_loss(
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    beta: f64,
    pairs: &[PreferencePair],
) -> Result<f64> {
    check_beta(beta)?;
    if pairs.is_empty() {
        return Err(Error::Empty("preference dataset"));
    }
    Ok(dpo_sum(policy, reference, beta, pairs))
}

fn dpo_sum(policy: &TabularPolicy, reference: &TabularPolicy, beta: f64, pairs: &[PreferencePair]) -> f64 {
    if !policy.absolutely_continuous_wrt(reference) {
        return f64::INFINITY;
    }
    pairs
        .iter()
        .map(|p| pair_loss(margin(policy, reference, beta, p)))
        .sum()
}

/// `clip(log pi - log ref) + log ref` for one optimism sample.
fn optimism_term(log_pi: f64, log_ref: f64, clip: Clip) -> f64 {
    clip.apply(log_ratio_from_logs(log_pi, log_ref)) + log_ref
}

/// The XPO objective. With `alpha == 0` the optimism term is skipped, so
/// the value equals [`dpo_loss`] bit for bit.
pub fn xpo_objective(
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    config: &ObjectiveConfig,
    pairs: &[PreferencePair],
    optimism: &[Trajectory],
) -> Result<f64> {
    ObjectiveConfig::new(config.beta, config.alpha)?;
    let loss = dpo_sum(policy, reference, config.beta, pairs);
    if config.alpha == 0.0 || optimism.is_empty() || loss == f64::INFINITY {
        return Ok(loss);
    }
    let bonus: f64 = optimism
        .iter()
        .map(|t| optimism_term(log_prob(policy, t), log_prob(reference, t), config.clip))
        .sum();
    Ok(config.alpha * bonus + loss)
}

/// Analytic gradient of [`xpo_objective`] with respect to `theta`.
pub fn objective_gradient(
    family: &LogLinearFamily,
    theta: &[f64],
    config: &ObjectiveConfig,
    pairs: &[PreferencePair],
    optimism: &[Trajectory],
) -> Result<Vec<f64>> {
    ObjectiveConfig::new(config.beta, config.alpha)?;
    let policy = family.policy(theta)?;
    let pi = policy.tabular();
    let reference = family.reference();
    let mut grad = vec![0.0; family.dim()];
    for pair in pairs {
        if pair.is_degenerate() {
            continue;
        }
        let m = margin(pi, reference, config.beta, pair);
        let w = -math::sigmoid_neg(m) * config.beta;
        family.add_grad_log_prob(pi, &pair.tau_plus, w, &mut grad);
        family.add_grad_log_prob(pi, &pair.tau_minus, -w, &mut grad);
    }
    if config.alpha != 0.0 {
        for t in optimism {
            let lr = log_ratio_from_logs(log_prob(pi, t), log_prob(reference, t));
            if config.clip.passes(lr) {
                family.add_grad_log_prob(pi, t, config.alpha, &mut grad);
            }
        }
    }
    Ok(grad)
}

/// An objective with its datasets deduplicated: distinct trajectories are
/// evaluated once and pairs and optimism samples carry multiplicities.
/// Data can be appended incrementally; the value depends only on the
/// multisets of pairs and samples, not on their order.
#[derive(Debug, Clone)]
pub struct CompiledObjective {
    config: ObjectiveConfig,
    reference: TabularPolicy,
    ids: BTreeMap<u64, usize>,
    trajectories: Vec<Trajectory>,
    ref_logs: Vec<f64>,
    pairs: BTreeMap<(usize, usize), f64>,
    degenerate: usize,
    optimism: BTreeMap<usize, f64>,
    n_pairs: usize,
}

impl CompiledObjective {
    pub fn new(
        config: ObjectiveConfig,
        reference: &TabularPolicy,
        pairs: &[PreferencePair],
        optimism: &[Trajectory],
    ) -> Result<Self> {
        let mut out = Self::empty(config, reference)?;
        for p in pairs {
            out.push_pair(p);
        }
        for t in optimism {
            out.push_optimism(t);
        }
        Ok(out)
    }

    pub fn empty(config: ObjectiveConfig, reference: &TabularPolicy) -> Result<Self> {
        ObjectiveConfig::new(config.beta, config.alpha)?;
        Ok(Self {
            config,
            reference: reference.clone(),
            ids: BTreeMap::new(),
            trajectories: Vec::new(),
            ref_logs: Vec::new(),
            pairs: BTreeMap::new(),
            degenerate: 0,
            optimism: BTreeMap::new(),
            n_pairs: 0,
        })
    }

    fn intern(&mut self, t: &Trajectory) -> usize {
        if let Some(&i) = self.ids.get(&t.index()) {
            return i;
        }
        let i = self.trajectories.len();
        self.ids.insert(t.index(), i);
        self.ref_logs.push(log_prob(&self.reference, t));
        self.trajectories.push(t.clone());
        i
    }

    pub fn push_pair(&mut self, pair: &PreferencePair) {
        self.n_pairs += 1;
        if pair.is_degenerate() {
            self.degenerate += 1;
            return;
        }
        let key = (self.intern(&pair.tau_plus), self.intern(&pair.tau_minus));
        *self.pairs.entry(key).or_insert(0.0) += 1.0;
    }

    /// Adds an optimism sample; ignored when `alpha == 0`.
    pub fn push_optimism(&mut self, tau: &Trajectory) {
        if self.config.alpha == 0.0 {
            return;
        }
        let i = self.intern(tau);
        *self.optimism.entry(i).or_insert(0.0) += 1.0;
    }

    pub fn clear_optimism(&mut self) {
        self.optimism.clear();
    }

    pub fn config(&self) -> &ObjectiveConfig {
        &self.config
    }

    pub fn reference(&self) -> &TabularPolicy {
        &self.reference
    }

    pub fn num_pairs(&self) -> usize {
        self.n_pairs
    }

    /// Number of distinct trajectories referenced by the datasets.
    pub fn num_distinct(&self) -> usize {
        self.trajectories.len()
    }

    fn log_ratios(&self, policy: &TabularPolicy) -> Vec<f64> {
        self.trajectories
            .iter()
            .zip(&self.ref_logs)
            .map(|(t, r)| log_ratio_from_logs(log_prob(policy, t), *r))
            .collect()
    }

    /// Objective value; agrees with [`xpo_objective`] up to summation order.
    pub fn value(&self, policy: &TabularPolicy) -> f64 {
        if !policy.absolutely_continuous_wrt(&self.reference) {
            return f64::INFINITY;
        }
        let lr = self.log_ratios(policy);
        self.value_from(&lr)
    }

    fn value_from(&self, lr: &[f64]) -> f64 {
        let beta = self.config.beta;
        let mut loss: f64 = self
            .pairs
            .iter()
            .map(|(&(p, m), &c)| c * pair_loss(beta * lr[p] - beta * lr[m]))
            .sum();
        loss += self.degenerate as f64 * LN_2;
        if self.config.alpha == 0.0 || self.optimism.is_empty() || loss == f64::INFINITY {
            return loss;
        }
        let bonus: f64 = self
            .optimism
            .iter()
            .map(|(&i, &c)| c * (self.config.clip.apply(lr[i]) + self.ref_logs[i]))
            .sum();
        self.config.alpha * bonus + loss
    }

    /// Value and gradient at `theta` for a log-linear family.
    pub fn value_and_gradient(&self, family: &LogLinearFamily, theta: &[f64]) -> Result<(f64, Vec<f64>, TabularPolicy)> {
        let policy = family.policy(theta)?.into_tabular();
        let lr = self.log_ratios(&policy);
        let value = self.value_from(&lr);
        let beta = self.config.beta;
        let mut coef = vec![0.0; self.trajectories.len()];
        for (&(p, m), &c) in &self.pairs {
            let w = -c * math::sigmoid_neg(beta * lr[p] - beta * lr[m]) * beta;
            coef[p] += w;
            coef[m] -= w;
        }
        if self.config.alpha != 0.0 {
            for (&i, &c) in &self.optimism {
                if self.config.clip.passes(lr[i]) {
                    coef[i] += self.config.alpha * c;
                }
            }
        }
        let mut grad = vec![0.0; family.dim()];
        for (t, w) in self.trajectories.iter().zip(coef) {
            if w != 0.0 {
                family.add_grad_log_prob(&policy, t, w, &mut grad);
            }
        }
        Ok((value, grad, policy))
    }
}

/// The set minimized over.
#[derive(Debug, Clone)]
pub enum PolicyClass {
    Finite(FinitePolicyClass),
    LogLinear(LogLinearFamily),
}

impl PolicyClass {
    /// `log |Pi|` for finite classes.
    pub fn log_size(&self) -> Option<f64> {
        match self {
            PolicyClass::Finite(c) => Some(math::ln(c.len() as f64)),
            PolicyClass::LogLinear(_) => None,
        }
    }
}

/// Which member of the class a minimizer returned.
#[derive(Debug, Clone, PartialEq)]
pub enum Member {
    Index(usize),
    Theta(Vec<f64>),
}

/// Per-start summary of a first-order minimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestartSummary {
    pub objective: f64,
    pub iterations: usize,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimized {
    pub member: Member,
    pub policy: TabularPolicy,
    pub objective: f64,
    pub restarts: Vec<RestartSummary>,
}

/// Minimizes `objective` over `class`.
///
/// Finite classes are searched exhaustively with `config.tie_break`
/// resolving exact ties. Log-linear families are minimized by gradient
/// descent on the objective divided by `max(1, |D_pref|)`, starting from
/// `warm_start` (or zero) and then from `config.restarts - 1` random points;
/// the start with the lowest objective wins, earliest start on ties.
pub fn minimize<R: RngCore>(
    objective: &CompiledObjective,
    class: &PolicyClass,
    config: &MinimizerConfig,
    warm_start: Option<&[f64]>,
    rng: &mut R,
) -> Result<Minimized> {
    config.validate()?;
    match class {
        PolicyClass::Finite(c) => minimize_finite(objective, c, config.tie_break, rng),
        PolicyClass::LogLinear(f) => minimize_log_linear(objective, f, config, warm_start, rng),
    }
}

fn minimize_finite<R: RngCore>(
    objective: &CompiledObjective,
    class: &FinitePolicyClass,
    tie_break: TieBreak,
    rng: &mut R,
) -> Result<Minimized> {
    let values: Vec<f64> = class.policies().iter().map(|p| objective.value(p)).collect();
    let best = values.iter().copied().fold(f64::INFINITY, f64::min);
    if best == f64::INFINITY {
        return Err(Error::Minimizer(
            "objective is +inf on every class member (no member is absolutely continuous w.r.t. the reference)".into(),
        ));
    }
    let tied: Vec<usize> = (0..values.len()).filter(|&i| values[i] == best).collect();
    let pick = match tie_break {
        TieBreak::First => tied[0],
        TieBreak::Last => tied[tied.len() - 1],
        TieBreak::Random => tied[rng.random_range(0..tied.len())],
    };
    Ok(Minimized {
        member: Member::Index(pick),
        policy: class.get(pick).clone(),
        objective: best,
        restarts: Vec::new(),
    })
}

fn minimize_log_linear<R: RngCore>(
    objective: &CompiledObjective,
    family: &LogLinearFamily,
    config: &MinimizerConfig,
    warm_start: Option<&[f64]>,
    rng: &mut R,
) -> Result<Minimized> {
    let d = family.dim();
    if let Some(w) = warm_start {
        if w.len() != d {
            return Err(Error::param("warm_start", format!("expected dimension {d}, got {}", w.len())));
        }
    }
    let scale = 1.0 / (objective.num_pairs().max(1) as f64);
    let base_step = config.step_scale * objective.config().beta;
    let mut best: Option<(f64, Vec<f64>, TabularPolicy)> = None;
    let mut summaries = Vec::with_capacity(config.restarts);
    for r in 0..config.restarts {
        let start: Vec<f64> = if r == 0 {
            warm_start.map_or_else(|| vec![0.0; d], <[f64]>::to_vec)
        } else {
            (0..d).map(|_| config.restart_scale * standard_normal(rng)).collect()
        };
        let (theta, value, policy, summary) = descend(objective, family, config, start, scale, base_step)?;
        summaries.push(summary);
        if best.as_ref().is_none_or(|(v, _, _)| value < *v) {
            best = Some((value, theta, policy));
        }
    }
    let (value, theta, policy) = best.expect("at least one restart");
    if !value.is_finite() {
        return Err(Error::Minimizer(format!("objective is {value} at every start")));
    }
    Ok(Minimized {
        member: Member::Theta(theta),
        policy,
        objective: value,
        restarts: summaries,
    })
}

fn descend(
    objective: &CompiledObjective,
    family: &LogLinearFamily,
    config: &MinimizerConfig,
    mut theta: Vec<f64>,
    scale: f64,
    base_step: f64,
) -> Result<(Vec<f64>, f64, TabularPolicy, RestartSummary)> {
    let (mut value, mut grad, mut policy) = objective.value_and_gradient(family, &theta)?;
    let mut grad_norm = scale * math::norm(&grad);
    let mut iterations = 0;
    while iterations < config.max_iters && grad_norm > config.tol && value.is_finite() {
        iterations += 1;
        let mut step = base_step;
        let mut accepted = None;
        for _ in 0..=config.max_backtracks {
            let candidate: Vec<f64> = theta
                .iter()
                .zip(&grad)
                .map(|(t, g)| t - step * scale * g)
                .collect();
            let next = objective.value_and_gradient(family, &candidate)?;
            if next.0 <= value {
                accepted = Some((candidate, next));
                break;
            }
            step *= config.backtrack;
        }
        let Some((candidate, (v, g, p))) = accepted else {
            break;
        };
        let stalled = v == value;
        theta = candidate;
        value = v;
        grad = g;
        policy = p;
        grad_norm = scale * math::norm(&grad);
        if stalled {
            break;
        }
    }
    Ok((
        theta,
        value,
        policy,
        RestartSummary {
            objective: value,
            iterations,
            grad_norm,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dcmdp::{make_token_mdp, ActionId, Dcmdp, StateId, TokenSpec};
    use crate::rng::{Purpose, SeedStreams};
    use crate::softdp::solve_soft_dp;

    fn prop_bandit(beta: f64, c: f64) -> (Dcmdp, TabularPolicy, TabularPolicy) {
        let mdp = make_token_mdp(
            &TokenSpec {
                prompt_probs: vec![1.0],
                vocab: 2,
                horizon: 1,
                rmax: 1.0,
            },
            |_, _, t| if t == 0 { 1.0 } else { 0.5 },
        )
        .unwrap();
        let eps = (-c / beta).exp();
        let reference = TabularPolicy::from_rows(&[vec![eps, 1.0 - eps]]).unwrap();
        let star = solve_soft_dp(&mdp, beta, &reference).unwrap().policy;
        (mdp, reference, star)
    }

    fn pair(mdp: &Dcmdp, plus: usize, minus: usize) -> PreferencePair {
        PreferencePair {
            tau_plus: mdp.trajectory(StateId(0), &[ActionId(plus)]).unwrap(),
            tau_minus: mdp.trajectory(StateId(0), &[ActionId(minus)]).unwrap(),
            initial_state: StateId(0),
            raw_draw: true,
            p_win: 0.5,
        }
    }

    #[test]
    fn dpo_loss_examples() {
        let (mdp, reference, star) = prop_bandit(0.05, 0.125);
        let data = vec![pair(&mdp, 0, 1), pair(&mdp, 1, 0), pair(&mdp, 1, 1)];
        assert_eq!(dpo_loss(&reference, &reference, 0.05, &data).unwrap(), 3.0 * LN_2);
        let degenerate = vec![pair(&mdp, 1, 1); 4];
        assert_eq!(dpo_loss(&star, &reference, 0.05, &degenerate).unwrap(), 4.0 * LN_2);
        assert!(dpo_loss(&star, &reference, 0.05, &[]).is_err());

        let single = [pair(&mdp, 0, 1)];
        let lrp = star.prob(StateId(0), ActionId(0)).ln() - reference.prob(StateId(0), ActionId(0)).ln();
        let lrm = star.prob(StateId(0), ActionId(1)).ln() - reference.prob(StateId(0), ActionId(1)).ln();
        let m = 0.05 * (lrp - lrm);
        let expected = (1.0 + (-m).exp()).ln();
        assert!((dpo_loss(&star, &reference, 0.05, &single).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn dpo_loss_support_violation_is_infinite() {
        let (mdp, _, _) = prop_bandit(0.05, 0.125);
        let reference = TabularPolicy::from_rows(&[vec![0.0, 1.0]]).unwrap();
        let pi = TabularPolicy::uniform(1, 2);
        let data = [pair(&mdp, 1, 1)];
        assert_eq!(dpo_loss(&pi, &reference, 0.1, &data).unwrap(), f64::INFINITY);
    }

    #[test]
    fn xpo_reduces_to_dpo() {
        let (mdp, reference, star) = prop_bandit(0.05, 0.125);
        let data = vec![pair(&mdp, 0, 1), pair(&mdp, 1, 1)];
        let opt = vec![data[0].tau_minus.clone(); 3];
        let dpo = dpo_loss(&star, &reference, 0.05, &data).unwrap();
        let cfg0 = ObjectiveConfig::new(0.05, 0.0).unwrap();
        assert_eq!(xpo_objective(&star, &reference, &cfg0, &data, &opt).unwrap(), dpo);
        let cfg = ObjectiveConfig::new(0.05, 0.3).unwrap();
        assert_eq!(xpo_objective(&star, &reference, &cfg, &data, &[]).unwrap(), dpo);
    }

    #[test]
    fn class_difference_is_affine_in_alpha() {
        let (mdp, reference, star) = prop_bandit(0.02, 0.125);
        let data = vec![pair(&mdp, 1, 1); 5];
        let b = mdp.trajectory(StateId(0), &[ActionId(1)]).unwrap();
        let opt = vec![b.clone(); 5];
        let slope = 5.0 * (log_prob(&reference, &b) - log_prob(&star, &b));
        for alpha in [0.0, 1e-3, 0.5, 2.0] {
            let cfg = ObjectiveConfig::new(0.02, alpha).unwrap();
            let diff = xpo_objective(&reference, &reference, &cfg, &data, &opt).unwrap()
                - xpo_objective(&star, &reference, &cfg, &data, &opt).unwrap();
            assert!((diff - alpha * slope).abs() < 1e-12 * (1.0 + alpha * slope.abs()));
        }
    }

    #[test]
    fn clip_applies_to_optimism_only() {
        let (mdp, reference, _) = prop_bandit(0.02, 0.125);
        let pi = TabularPolicy::from_rows(&[vec![1e-300, 1.0 - 1e-300]]).unwrap();
        let a = mdp.trajectory(StateId(0), &[ActionId(0)]).unwrap();
        let cfg = ObjectiveConfig::new(0.02, 1.0).unwrap().with_clip(Clip::new(-10.0, 10.0).unwrap());
        let data = [pair(&mdp, 1, 1)];
        let v = xpo_objective(&pi, &reference, &cfg, &data, &[a.clone()]).unwrap();
        let expected = LN_2 + (-10.0 + log_prob(&reference, &a));
        assert!((v - expected).abs() < 1e-12);
    }

    #[test]
    fn compiled_matches_direct() {
        let (mdp, reference, star) = prop_bandit(0.05, 0.1);
        let data = vec![
            pair(&mdp, 0, 1),
            pair(&mdp, 1, 0),
            pair(&mdp, 0, 1),
            pair(&mdp, 1, 1),
            pair(&mdp, 0, 0),
        ];
        let opt: Vec<Trajectory> = data.iter().map(|p| p.tau_minus.clone()).collect();
        for alpha in [0.0, 0.2] {
            let cfg = ObjectiveConfig::new(0.05, alpha).unwrap();
            let compiled = CompiledObjective::new(cfg, &reference, &data, &opt).unwrap();
            assert_eq!(compiled.num_distinct(), 2);
            for pi in [&reference, &star] {
                let direct = xpo_objective(pi, &reference, &cfg, &data, &opt).unwrap();
                assert!((compiled.value(pi) - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn finite_argmin_tie_breaks() {
        let (mdp, reference, star) = prop_bandit(0.02, 0.125);
        let class = PolicyClass::Finite(FinitePolicyClass::new(vec![reference.clone(), star.clone()]).unwrap());
        let data = vec![pair(&mdp, 1, 1); 7];
        let compiled = CompiledObjective::new(ObjectiveConfig::dpo(0.02).unwrap(), &reference, &data, &[]).unwrap();
        let mut rng = SeedStreams::new(0).stream(0, 0, Purpose::Minimizer);
        let mut cfg = MinimizerConfig::default();
        let first = minimize(&compiled, &class, &cfg, None, &mut rng).unwrap();
        assert_eq!(first.member, Member::Index(0));
        assert_eq!(first.objective, 7.0 * LN_2);
        cfg.tie_break = TieBreak::Last;
        assert_eq!(minimize(&compiled, &class, &cfg, None, &mut rng).unwrap().member, Member::Index(1));
        cfg.tie_break = TieBreak::Random;
        let mut seen = [false; 2];
        for _ in 0..64 {
            if let Member::Index(i) = minimize(&compiled, &class, &cfg, None, &mut rng).unwrap().member {
                seen[i] = true;
            }
        }
        assert_eq!(seen, [true, true]);

        let informative = vec![pair(&mdp, 0, 1)];
        let compiled =
            CompiledObjective::new(ObjectiveConfig::dpo(0.02).unwrap(), &reference, &informative, &[]).unwrap();
        cfg.tie_break = TieBreak::First;
        assert_eq!(minimize(&compiled, &class, &cfg, None, &mut rng).unwrap().member, Member::Index(1));
    }

    #[test]
    fn finite_argmin_all_infinite_is_error() {
        let (mdp, _, _) = prop_bandit(0.02, 0.125);
        let reference = TabularPolicy::from_rows(&[vec![0.0, 1.0]]).unwrap();
        let class = PolicyClass::Finite(FinitePolicyClass::new(vec![TabularPolicy::uniform(1, 2)]).unwrap());
        let data = vec![pair(&mdp, 1, 1)];
        let compiled = CompiledObjective::new(ObjectiveConfig::dpo(0.02).unwrap(), &reference, &data, &[]).unwrap();
        let mut rng = SeedStreams::new(0).stream(0, 0, Purpose::Minimizer);
        assert!(matches!(
            minimize(&compiled, &class, &MinimizerConfig::default(), None, &mut rng),
            Err(Error::Minimizer(_))
        ));
    }
}
