//! Deterministic contextual MDPs: layered state spaces, deterministic
//! transitions, a stochastic initial state, trajectories and tabular
//! policies.
//!
//! States and actions carry dense integer ids. A trajectory is determined by
//! its initial state and its action sequence, which gives every trajectory a
//! canonical index `pos(s1) * |A|^H + sum_h a_h * |A|^(H-1-h)`; exhaustive
//! enumeration yields trajectories in exactly that order.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::math;
use crate::rng::sample_categorical;

/// Probability rows and `rho` must sum to one within this tolerance.
pub const NORMALIZATION_TOL: f64 = 1e-12;
/// Tolerance for aggregate sums such as total occupancy mass.
pub const AGGREGATE_TOL: f64 = 1e-10;
/// Default cap on the number of trajectories materialized by enumeration.
pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionId(pub usize);

/// Per-(state, action) feature vectors of a fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    dim: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl FeatureMap {
    /// `values` is laid out as `[(state * num_actions + action) * dim + k]`.
    pub fn new(dim: usize, num_actions: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || num_actions == 0 || values.len() % (dim * num_actions) != 0 {
            return Err(Error::param(
                "features",
                format!(
                    "{} values do not form rows of {} actions x {} dims",
                    values.len(),
                    num_actions,
                    dim
                ),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("features", "non-finite feature value"));
        }
        Ok(Self {
            dim,
            num_actions,
            values,
        })
    }

    /// One-hot features over all (state, action) pairs.
    pub fn one_hot(num_states: usize, num_actions: usize) -> Self {
        let dim = num_states * num_actions;
        let mut values = vec![0.0; dim * dim];
        for i in 0..dim {
            values[i * dim + i] = 1.0;
        }
        Self {
            dim,
            num_actions,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_states(&self) -> usize {
        self.values.len() / (self.dim * self.num_actions)
    }

    pub fn get(&self, s: StateId, a: ActionId) -> &[f64] {
        let start = (s.0 * self.num_actions + a.0) * self.dim;
        &self.values[start..start + self.dim]
    }

    /// Largest Euclidean norm over all feature vectors.
    pub fn max_norm(&self) -> f64 {
        self.values
            .chunks(self.dim)
            .map(math::norm)
            .fold(0.0, f64::max)
    }
}

/// Raw description of a DCMDP, validated by [`Dcmdp::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct DcmdpSpec {
    pub horizon: usize,
    pub num_actions: usize,
    /// State ids per layer; together they must be exactly `0..n`.
    pub layers: Vec<Vec<usize>>,
    /// Initial distribution aligned with `layers[0]`.
    pub rho: Vec<f64>,
    /// `next[s][a]`; empty for states of the last layer.
    pub next: Vec<Vec<usize>>,
    /// `reward[s][a]`.
    pub reward: Vec<Vec<f64>>,
    pub rmax: f64,
}

/// A validated deterministic contextual MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct Dcmdp {
    horizon: usize,
    num_actions: usize,
    layers: Vec<Vec<StateId>>,
    layer_of: Vec<usize>,
    position: Vec<usize>,
    rho: Vec<f64>,
    next: Vec<Option<StateId>>,
    reward: Vec<f64>,
    rmax: f64,
    reachable: Vec<bool>,
    features: Option<FeatureMap>,
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::InvalidInstance {
        path: path.into(),
        message: message.into(),
    }
}

impl Dcmdp {
    pub fn new(spec: DcmdpSpec) -> Result<Self> {
        let DcmdpSpec {
            horizon,
            num_actions,
            layers,
            rho,
            next,
            reward,
            rmax,
        } = spec;
        if horizon == 0 {
            return Err(invalid("horizon", "must be positive"));
        }
        if num_actions == 0 {
            return Err(invalid("actions", "must be positive"));
        }
        if layers.len() != horizon {
            return Err(invalid(
                "layers",
                format!("expected {horizon} layers, found {}", layers.len()),
            ));
        }
        let num_states: usize = layers.iter().map(Vec::len).sum();
        let mut layer_of = vec![usize::MAX; num_states];
        let mut position = vec![0; num_states];
        for (h, layer) in layers.iter().enumerate() {
            if layer.is_empty() {
                return Err(invalid(format!("layers[{h}]"), "layer is empty"));
            }
            for (i, &s) in layer.iter().enumerate() {
                if s >= num_states {
                    return Err(invalid(
                        format!("layers[{h}][{i}]"),
                        format!("state id {s} is not below the state count {num_states}"),
                    ));
                }
                if layer_of[s] != usize::MAX {
                    return Err(invalid(
                        format!("layers[{h}][{i}]"),
                        format!("state {s} already appears in layer {}", layer_of[s]),
                    ));
                }
                layer_of[s] = h;
                position[s] = i;
            }
        }
        if !rmax.is_finite() || rmax < 0.0 {
            return Err(invalid("rmax", format!("must be finite and >= 0, got {rmax}")));
        }
        if rho.len() != layers[0].len() {
            return Err(invalid(
                "rho",
                format!(
                    "expected {} entries (one per initial state), found {}",
                    layers[0].len(),
                    rho.len()
                ),
            ));
        }
        for (i, &p) in rho.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(invalid(
                    format!("rho[{}]", layers[0][i]),
                    format!("probability {p} is not in [0, 1]"),
                ));
            }
        }
        let total: f64 = rho.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(invalid("rho", format!("sums to {total}, not 1")));
        }
        if next.len() != num_states {
            return Err(invalid(
                "next",
                format!("expected rows for {num_states} states, found {}", next.len()),
            ));
        }
        if reward.len() != num_states {
            return Err(invalid(
                "reward",
                format!("expected rows for {num_states} states, found {}", reward.len()),
            ));
        }
        let mut flat_next = vec![None; num_states * num_actions];
        let mut flat_reward = vec![0.0; num_states * num_actions];
        for s in 0..num_states {
            let h = layer_of[s];
            if reward[s].len() != num_actions {
                return Err(invalid(
                    format!("reward[{s}]"),
                    format!("expected {num_actions} actions, found {}", reward[s].len()),
                ));
            }
            for (a, &r) in reward[s].iter().enumerate() {
                if !r.is_finite() {
                    return Err(invalid(format!("reward[{s}][{a}]"), "reward is not finite"));
                }
                flat_reward[s * num_actions + a] = r;
            }
            if h + 1 == horizon {
                if !next[s].is_empty() {
                    return Err(invalid(
                        format!("next[{s}]"),
                        "state is in the last layer and cannot have successors",
                    ));
                }
                continue;
            }
            if next[s].len() != num_actions {
                return Err(invalid(
                    format!("next[{s}]"),
                    format!("expected {num_actions} successors, found {}", next[s].len()),
                ));
            }
            for (a, &t) in next[s].iter().enumerate() {
                if t >= num_states || layer_of[t] != h + 1 {
                    return Err(invalid(
                        format!("next[{s}][{a}]"),
                        format!("successor {t} of a layer-{h} state must lie in layer {}", h + 1),
                    ));
                }
                flat_next[s * num_actions + a] = Some(StateId(t));
            }
        }
        let count = (layers[0].len() as u128).saturating_mul((num_actions as u128).saturating_pow(horizon as u32));
        if count > u64::MAX as u128 {
            return Err(invalid(
                "layers",
                "trajectory count does not fit the 64-bit canonical index",
            ));
        }

        let layers: Vec<Vec<StateId>> = layers
            .into_iter()
            .map(|l| l.into_iter().map(StateId).collect())
            .collect();
        let mut reachable = vec![false; num_states];
        for &s in &layers[0] {
            reachable[s.0] = true;
        }
        for layer in &layers[..horizon - 1] {
            for &s in layer {
                if reachable[s.0] {
                    for a in 0..num_actions {
                        if let Some(t) = flat_next[s.0 * num_actions + a] {
                            reachable[t.0] = true;
                        }
                    }
                }
            }
        }
        let mdp = Self {
            horizon,
            num_actions,
            layers,
            layer_of,
            position,
            rho,
            next: flat_next,
            reward: flat_reward,
            rmax,
            reachable,
            features: None,
        };
        mdp.check_reward_range()?;
        Ok(mdp)
    }

    /// Attaches a feature map (used by log-linear policy classes).
    pub fn with_features(mut self, features: FeatureMap) -> Result<Self> {
        if features.num_actions != self.num_actions || features.num_states() != self.num_states() {
            return Err(Error::param(
                "features",
                format!(
                    "feature map covers {} states x {} actions, instance has {} x {}",
                    features.num_states(),
                    features.num_actions,
                    self.num_states(),
                    self.num_actions
                ),
            ));
        }
        self.features = Some(features);
        Ok(self)
    }

    /// Verifies that every admissible trajectory total lies in `[0, rmax]`,
    /// using min/max reward-to-go over the layers.
    fn check_reward_range(&self) -> Result<()> {
        let n = self.num_states();
        let a_n = self.num_actions;
        // (min, argmin action, max, argmax action) of reward-to-go.
        let mut lo = vec![(0.0, 0usize); n];
        let mut hi = vec![(0.0, 0usize); n];
        for layer in self.layers.iter().rev() {
            for &s in layer {
                let mut best_lo = (f64::INFINITY, 0);
                let mut best_hi = (f64::NEG_INFINITY, 0);
                for a in 0..a_n {
                    let tail = self.next[s.0 * a_n + a];
                    let r = self.reward[s.0 * a_n + a];
                    let vlo = r + tail.map_or(0.0, |t| lo[t.0].0);
                    let vhi = r + tail.map_or(0.0, |t| hi[t.0].0);
                    if vlo < best_lo.0 {
                        best_lo = (vlo, a);
                    }
                    if vhi > best_hi.0 {
                        best_hi = (vhi, a);
                    }
                }
                lo[s.0] = best_lo;
                hi[s.0] = best_hi;
            }
        }
        let follow = |table: &[(f64, usize)], s1: StateId| -> Trajectory {
            let mut actions = Vec::with_capacity(self.horizon);
            let mut s = s1;
            for h in 0..self.horizon {
                let a = table[s.0].1;
                actions.push(ActionId(a));
                if h + 1 < self.horizon {
                    s = self.next[s.0 * a_n + a].expect("validated transition");
                }
            }
            self.trajectory(s1, &actions).expect("constructed from valid actions")
        };
        for &s1 in &self.layers[0] {
            if lo[s1.0].0 < -NORMALIZATION_TOL {
                let witness = follow(&lo, s1);
                let total = witness.total_reward;
                return Err(Error::RewardRange {
                    witness,
                    total,
                    rmax: self.rmax,
                });
            }
            if hi[s1.0].0 > self.rmax + NORMALIZATION_TOL {
                let witness = follow(&hi, s1);
                let total = witness.total_reward;
                return Err(Error::RewardRange {
                    witness,
                    total,
                    rmax: self.rmax,
                });
            }
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_states(&self) -> usize {
        self.layer_of.len()
    }

    pub fn layers(&self) -> &[Vec<StateId>] {
        &self.layers
    }

    pub fn initial_states(&self) -> &[StateId] {
        &self.layers[0]
    }

    /// Initial distribution aligned with [`Dcmdp::initial_states`].
    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn layer_of(&self, s: StateId) -> usize {
        self.layer_of[s.0]
    }

    /// Index of `s` within its layer.
    pub fn position(&self, s: StateId) -> usize {
        self.position[s.0]
    }

    pub fn next(&self, s: StateId, a: ActionId) -> Option<StateId> {
        self.next[s.0 * self.num_actions + a.0]
    }

    pub fn reward(&self, s: StateId, a: ActionId) -> f64 {
        self.reward[s.0 * self.num_actions + a.0]
    }

    pub fn rmax(&self) -> f64 {
        self.rmax
    }

    pub fn is_reachable(&self, s: StateId) -> bool {
        self.reachable[s.0]
    }

    pub fn features(&self) -> Option<&FeatureMap> {
        self.features.as_ref()
    }

    /// `|S_1| * |A|^H`, saturating.
    pub fn trajectory_count(&self) -> u128 {
        (self.layers[0].len() as u128)
            .saturating_mul((self.num_actions as u128).saturating_pow(self.horizon as u32))
    }

    /// Trajectories per initial state, `|A|^H`.
    pub fn trajectories_per_initial_state(&self) -> u64 {
        (self.num_actions as u64).pow(self.horizon as u32)
    }

    /// Builds the trajectory that starts in `s1` and plays `actions`.
    pub fn trajectory(&self, s1: StateId, actions: &[ActionId]) -> Result<Trajectory> {
        if s1.0 >= self.num_states() || self.layer_of[s1.0] != 0 {
            return Err(Error::Inadmissible {
                step: 0,
                message: format!("state {} is not an initial state", s1.0),
            });
        }
        if actions.len() != self.horizon {
            return Err(Error::Inadmissible {
                step: actions.len().min(self.horizon),
                message: format!("expected {} actions, got {}", self.horizon, actions.len()),
            });
        }
        let mut steps = Vec::with_capacity(self.horizon);
        let mut total = 0.0;
        let mut index = self.position[s1.0] as u64;
        let mut s = s1;
        for (h, &a) in actions.iter().enumerate() {
            if a.0 >= self.num_actions {
                return Err(Error::Inadmissible {
                    step: h,
                    message: format!("action {} out of range", a.0),
                });
            }
            steps.push((s, a));
            total += self.reward(s, a);
            index = index * self.num_actions as u64 + a.0 as u64;
            if h + 1 < self.horizon {
                s = self.next(s, a).expect("validated transition");
            }
        }
        Ok(Trajectory {
            steps,
            total_reward: total,
            index,
        })
    }

    /// Validates an explicit step list and returns the trajectory.
    pub fn trajectory_from_steps(&self, steps: &[(StateId, ActionId)]) -> Result<Trajectory> {
        if steps.len() != self.horizon {
            return Err(Error::Inadmissible {
                step: steps.len().min(self.horizon),
                message: format!("expected {} steps, got {}", self.horizon, steps.len()),
            });
        }
        for (h, w) in steps.windows(2).enumerate() {
            let (s, a) = w[0];
            if s.0 >= self.num_states() || a.0 >= self.num_actions {
                return Err(Error::Inadmissible {
                    step: h,
                    message: format!("unknown state {} or action {}", s.0, a.0),
                });
            }
            if self.next(s, a) != Some(w[1].0) {
                return Err(Error::Inadmissible {
                    step: h + 1,
                    message: format!(
                        "state {} does not follow state {} under action {}",
                        w[1].0 .0, s.0, a.0
                    ),
                });
            }
        }
        let actions: Vec<ActionId> = steps.iter().map(|&(_, a)| a).collect();
        self.trajectory(steps[0].0, &actions)
    }

    /// Inverse of the canonical index.
    pub fn trajectory_by_index(&self, index: u64) -> Result<Trajectory> {
        let per = self.trajectories_per_initial_state();
        let pos = (index / per) as usize;
        if pos >= self.layers[0].len() {
            return Err(Error::param("index", format!("trajectory index {index} out of range")));
        }
        let mut rest = index % per;
        let mut actions = vec![ActionId(0); self.horizon];
        for h in (0..self.horizon).rev() {
            actions[h] = ActionId((rest % self.num_actions as u64) as usize);
            rest /= self.num_actions as u64;
        }
        self.trajectory(self.layers[0][pos], &actions)
    }

    /// Checks that `policy` has one row per state of this instance.
    pub fn check_policy(&self, policy: &TabularPolicy) -> Result<()> {
        if policy.num_states() != self.num_states() || policy.num_actions() != self.num_actions {
            return Err(Error::InvalidPolicy(format!(
                "policy covers {} states x {} actions, instance has {} x {}",
                policy.num_states(),
                policy.num_actions(),
                self.num_states(),
                self.num_actions
            )));
        }
        Ok(())
    }
}

/// An admissible sequence of `H` (state, action) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    steps: Vec<(StateId, ActionId)>,
    total_reward: f64,
    index: u64,
}

impl Trajectory {
    pub fn steps(&self) -> &[(StateId, ActionId)] {
        &self.steps
    }

    pub fn initial_state(&self) -> StateId {
        self.steps[0].0
    }

    pub fn total_reward(&self) -> f64 {
        self.total_reward
    }

    /// Canonical index; equals the position in [`enumerate_trajectories`].
    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn actions(&self) -> impl Iterator<Item = ActionId> + '_ {
        self.steps.iter().map(|&(_, a)| a)
    }
}

/// `sum_h r(s_h, a_h)`, after checking admissibility.
pub fn trajectory_reward(mdp: &Dcmdp, tau: &Trajectory) -> Result<f64> {
    let checked = mdp.trajectory_from_steps(&tau.steps)?;
    Ok(checked.total_reward)
}

/// A randomized policy stored as per-state probability rows together with
/// their logarithms.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    num_actions: usize,
    probs: Vec<f64>,
    log_probs: Vec<f64>,
}

impl TabularPolicy {
    /// Flat row-major probabilities, `[state * num_actions + action]`.
    pub fn from_probs(num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if num_actions == 0 || probs.len() % num_actions != 0 {
            return Err(Error::InvalidPolicy(format!(
                "{} entries do not form rows of {num_actions}",
                probs.len()
            )));
        }
        for (s, row) in probs.chunks(num_actions).enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::InvalidPolicy(format!("row {s} has an invalid entry")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > NORMALIZATION_TOL {
                return Err(Error::InvalidPolicy(format!("row {s} sums to {total}")));
            }
        }
        let log_probs = probs.iter().map(|&p| math::ln(p)).collect();
        Ok(Self {
            num_actions,
            probs,
            log_probs,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let num_actions = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != num_actions) {
            return Err(Error::InvalidPolicy("ragged rows".into()));
        }
        Self::from_probs(num_actions, rows.concat())
    }

    /// Flat row-major log-probabilities. Keeping logs as the primary
    /// representation preserves tiny probabilities that would underflow.
    pub fn from_log_probs(num_actions: usize, log_probs: Vec<f64>) -> Result<Self> {
        if num_actions == 0 || log_probs.len() % num_actions != 0 {
            return Err(Error::InvalidPolicy(format!(
                "{} entries do not form rows of {num_actions}",
                log_probs.len()
            )));
        }
        if log_probs.iter().any(|l| l.is_nan() || *l > 1e-12) {
            return Err(Error::InvalidPolicy("log-probability above 0 or NaN".into()));
        }
        let probs: Vec<f64> = log_probs.iter().map(|&l| math::exp(l)).collect();
        for (s, row) in probs.chunks(num_actions).enumerate() {
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > NORMALIZATION_TOL {
                return Err(Error::InvalidPolicy(format!("row {s} sums to {total}")));
            }
        }
        Ok(Self {
            num_actions,
            probs,
            log_probs,
        })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        let p = 1.0 / num_actions as f64;
        Self {
            num_actions,
            probs: vec![p; num_states * num_actions],
            log_probs: vec![math::ln(p); num_states * num_actions],
        }
    }

    /// Point mass on `choice[s]` at each state.
    pub fn deterministic(num_actions: usize, choice: &[ActionId]) -> Result<Self> {
        let mut probs = vec![0.0; choice.len() * num_actions];
        for (s, a) in choice.iter().enumerate() {
            if a.0 >= num_actions {
                return Err(Error::InvalidPolicy(format!("action {} out of range", a.0)));
            }
            probs[s * num_actions + a.0] = 1.0;
        }
        Self::from_probs(num_actions, probs)
    }

    pub fn num_states(&self) -> usize {
        self.probs.len() / self.num_actions
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn prob(&self, s: StateId, a: ActionId) -> f64 {
        self.probs[s.0 * self.num_actions + a.0]
    }

    pub fn log_prob(&self, s: StateId, a: ActionId) -> f64 {
        self.log_probs[s.0 * self.num_actions + a.0]
    }

    pub fn row(&self, s: StateId) -> &[f64] {
        &self.probs[s.0 * self.num_actions..(s.0 + 1) * self.num_actions]
    }

    pub fn log_row(&self, s: StateId) -> &[f64] {
        &self.log_probs[s.0 * self.num_actions..(s.0 + 1) * self.num_actions]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Largest absolute difference between corresponding probabilities.
    pub fn max_abs_diff(&self, other: &TabularPolicy) -> f64 {
        if self.probs.len() != other.probs.len() {
            return f64::INFINITY;
        }
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Whether `self(a|s) > 0` implies `other(a|s) > 0` at every state.
    pub fn absolutely_continuous_wrt(&self, other: &TabularPolicy) -> bool {
        self.probs
            .iter()
            .zip(&other.probs)
            .all(|(p, q)| *p == 0.0 || *q > 0.0)
    }

    /// Whether every row has strictly positive mass on every action.
    pub fn has_full_support(&self) -> bool {
        self.probs.iter().all(|p| *p > 0.0)
    }
}

/// Samples `s1 ~ rho`, then actions from `policy` along the deterministic
/// transitions.
pub fn rollout<R: RngCore + ?Sized>(
    mdp: &Dcmdp,
    policy: &TabularPolicy,
    rng: &mut R,
) -> Result<Trajectory> {
    let pos = sample_categorical(&mdp.rho, rng)
        .ok_or_else(|| Error::Validation("initial distribution has no mass".into()))?;
    rollout_from(mdp, policy, mdp.layers[0][pos], rng)
}

/// Samples a trajectory from `policy` conditioned on the initial state.
pub fn rollout_from<R: RngCore + ?Sized>(
    mdp: &Dcmdp,
    policy: &TabularPolicy,
    s1: StateId,
    rng: &mut R,
) -> Result<Trajectory> {
    mdp.check_policy(policy)?;
    let mut actions = Vec::with_capacity(mdp.horizon);
    let mut s = s1;
    for h in 0..mdp.horizon {
        let a = sample_categorical(policy.row(s), rng).ok_or_else(|| {
            Error::InvalidPolicy(format!("policy has no mass at state {}", s.0))
        })?;
        actions.push(ActionId(a));
        if h + 1 < mdp.horizon {
            s = mdp.next(s, ActionId(a)).expect("validated transition");
        }
    }
    mdp.trajectory(s1, &actions)
}

/// Every admissible trajectory, in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySpace {
    trajectories: Vec<Trajectory>,
    per_initial: usize,
}

impl TrajectorySpace {
    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn get(&self, index: u64) -> &Trajectory {
        &self.trajectories[index as usize]
    }

    /// Range of trajectories starting at the `pos`-th initial state.
    pub fn block(&self, pos: usize) -> Range<usize> {
        pos * self.per_initial..(pos + 1) * self.per_initial
    }

    /// `d^pi(tau) = rho(s1) prod_h pi(a_h | s_h)` for every trajectory.
    pub fn occupancy(&self, mdp: &Dcmdp, policy: &TabularPolicy) -> Vec<f64> {
        self.trajectories
            .iter()
            .map(|tau| {
                let mut p = mdp.rho[mdp.position(tau.initial_state())];
                for &(s, a) in &tau.steps {
                    p *= policy.prob(s, a);
                }
                p
            })
            .collect()
    }

    /// `log pi(tau)` for every trajectory.
    pub fn log_probs(&self, policy: &TabularPolicy) -> Vec<f64> {
        self.trajectories
            .iter()
            .map(|tau| crate::policy::log_prob(policy, tau))
            .collect()
    }
}

/// Enumerates all trajectories in canonical order, refusing to exceed `cap`.
pub fn enumerate_trajectories(mdp: &Dcmdp, cap: u64) -> Result<TrajectorySpace> {
    let count = mdp.trajectory_count();
    if count > cap as u128 {
        return Err(Error::EnumerationCap { count, cap });
    }
    let per = mdp.trajectories_per_initial_state() as usize;
    let mut trajectories = Vec::with_capacity(count as usize);
    let h_len = mdp.horizon;
    let a_n = mdp.num_actions;
    for &s1 in &mdp.layers[0] {
        let mut actions = vec![ActionId(0); h_len];
        for _ in 0..per {
            trajectories.push(mdp.trajectory(s1, &actions)?);
            // odometer increment, last action fastest
            for h in (0..h_len).rev() {
                actions[h].0 += 1;
                if actions[h].0 < a_n {
                    break;
                }
                actions[h].0 = 0;
            }
        }
    }
    Ok(TrajectorySpace {
        trajectories,
        per_initial: per,
    })
}

/// Exact occupancy measure of `policy` over the enumerated trajectories.
pub fn occupancy(mdp: &Dcmdp, policy: &TabularPolicy) -> Result<(TrajectorySpace, Vec<f64>)> {
    mdp.check_policy(policy)?;
    let space = enumerate_trajectories(mdp, DEFAULT_ENUMERATION_CAP)?;
    let occ = space.occupancy(mdp, policy);
    Ok((space, occ))
}

/// Description of a token-level instance: prompts are initial states, actions
/// are vocabulary tokens and the state is the prompt plus generated prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSpec {
    pub prompt_probs: Vec<f64>,
    pub vocab: usize,
    pub horizon: usize,
    pub rmax: f64,
}

/// Id of the state `(prompt, prefix)` in an instance built by
/// [`make_token_mdp`]. Layer `h` holds `P * V^h` states laid out by prompt,
/// then prefix in base `V`.
pub fn token_state_id(spec: &TokenSpec, prompt: usize, prefix: &[usize]) -> usize {
    let p = spec.prompt_probs.len();
    let v = spec.vocab;
    let mut offset = 0;
    let mut width = p;
    for _ in 0..prefix.len() {
        offset += width;
        width *= v;
    }
    let within = prefix.iter().fold(0, |acc, &t| acc * v + t);
    offset + prompt * v.pow(prefix.len() as u32) + within
}

/// Builds a token-level DCMDP. `reward(prompt, prefix, token)` gives the
/// reward for emitting `token` after `prefix`.
pub fn make_token_mdp<F>(spec: &TokenSpec, reward: F) -> Result<Dcmdp>
where
    F: Fn(usize, &[usize], usize) -> f64,
{
    let p = spec.prompt_probs.len();
    let v = spec.vocab;
    if p == 0 {
        return Err(Error::param("prompts", "at least one prompt is required"));
    }
    if v == 0 || spec.horizon == 0 {
        return Err(Error::param("vocab", "vocabulary and horizon must be positive"));
    }
    let mut layers = Vec::with_capacity(spec.horizon);
    let mut next = Vec::new();
    let mut rewards = Vec::new();
    let mut id = 0;
    for h in 0..spec.horizon {
        let width = p * v.pow(h as u32);
        layers.push((id..id + width).collect::<Vec<_>>());
        for k in 0..width {
            let prompt = k / v.pow(h as u32);
            let mut code = k % v.pow(h as u32);
            let mut prefix = vec![0; h];
            for i in (0..h).rev() {
                prefix[i] = code % v;
                code /= v;
            }
            rewards.push((0..v).map(|t| reward(prompt, &prefix, t)).collect::<Vec<_>>());
            if h + 1 < spec.horizon {
                let mut succ = Vec::with_capacity(v);
                for t in 0..v {
                    prefix.push(t);
                    succ.push(token_state_id(spec, prompt, &prefix));
                    prefix.pop();
                }
                next.push(succ);
            } else {
                next.push(Vec::new());
            }
        }
        id += width;
    }
    Dcmdp::new(DcmdpSpec {
        horizon: spec.horizon,
        num_actions: v,
        layers,
        rho: spec.prompt_probs.clone(),
        next,
        reward: rewards,
        rmax: spec.rmax,
    })
}

/// Layered structure with a linear reward `r(s, a) = <phi(s, a), theta>`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSpec {
    pub horizon: usize,
    pub num_actions: usize,
    pub layers: Vec<Vec<usize>>,
    pub rho: Vec<f64>,
    pub next: Vec<Vec<usize>>,
    pub features: FeatureMap,
    pub reward_weights: Vec<f64>,
    pub rmax: f64,
}

/// Deterministic specialization of a linear MDP. The feature map is stored
/// on the instance for log-linear policy classes.
pub fn make_linear_dcmdp(spec: LinearSpec) -> Result<Dcmdp> {
    let LinearSpec {
        horizon,
        num_actions,
        layers,
        rho,
        next,
        features,
        reward_weights,
        rmax,
    } = spec;
    if reward_weights.len() != features.dim() {
        return Err(Error::param(
            "reward_weights",
            format!("dimension {} != feature dimension {}", reward_weights.len(), features.dim()),
        ));
    }
    if math::norm(&reward_weights) > 1.0 + NORMALIZATION_TOL {
        return Err(Error::param("reward_weights", "norm exceeds 1"));
    }
    if features.num_actions != num_actions {
        return Err(Error::param("features", "action count mismatch"));
    }
    let n = features.num_states();
    for s in 0..n {
        for a in 0..num_actions {
            let nrm = math::norm(features.get(StateId(s), ActionId(a)));
            if nrm > 1.0 + NORMALIZATION_TOL {
                return Err(Error::param(
                    "features",
                    format!("feature norm {nrm} at state {s}, action {a} exceeds 1"),
                ));
            }
        }
    }
    let reward = (0..n)
        .map(|s| {
            (0..num_actions)
                .map(|a| math::dot(features.get(StateId(s), ActionId(a)), &reward_weights))
                .collect()
        })
        .collect();
    Dcmdp::new(DcmdpSpec {
        horizon,
        num_actions,
        layers,
        rho,
        next,
        reward,
        rmax,
    })?
    .with_features(features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, SeedStreams};

    fn two_step() -> Dcmdp {
        // layer 0: {0}, layer 1: {1, 2}
        Dcmdp::new(DcmdpSpec {
            horizon: 2,
            num_actions: 2,
            layers: vec![vec![0], vec![1, 2]],
            rho: vec![1.0],
            next: vec![vec![1, 2], vec![], vec![]],
            reward: vec![vec![0.3, 0.1], vec![0.4, 0.0], vec![0.2, 0.5]],
            rmax: 1.0,
        })
        .unwrap()
    }

    #[test]
    fn two_term_reward() {
        let mdp = two_step();
        let tau = mdp.trajectory(StateId(0), &[ActionId(0), ActionId(0)]).unwrap();
        assert!((trajectory_reward(&mdp, &tau).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn zero_rewards_give_zero() {
        let mdp = Dcmdp::new(DcmdpSpec {
            horizon: 2,
            num_actions: 2,
            layers: vec![vec![0], vec![1, 2]],
            rho: vec![1.0],
            next: vec![vec![1, 2], vec![], vec![]],
            reward: vec![vec![0.0; 2]; 3],
            rmax: 0.0,
        })
        .unwrap();
        let space = enumerate_trajectories(&mdp, DEFAULT_ENUMERATION_CAP).unwrap();
        for tau in space.trajectories() {
            assert_eq!(trajectory_reward(&mdp, tau).unwrap(), 0.0);
        }
    }

    #[test]
    fn inadmissible_trajectory_names_step() {
        let mdp = two_step();
        let err = mdp
            .trajectory_from_steps(&[(StateId(0), ActionId(0)), (StateId(2), ActionId(0))])
            .unwrap_err();
        match err {
            Error::Inadmissible { step, .. } => assert_eq!(step, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn validation_reports_paths() {
        let mut spec = DcmdpSpec {
            horizon: 2,
            num_actions: 2,
            layers: vec![vec![0], vec![1, 2]],
            rho: vec![1.0],
            next: vec![vec![1, 0], vec![], vec![]],
            reward: vec![vec![0.0; 2]; 3],
            rmax: 1.0,
        };
        let err = Dcmdp::new(spec.clone()).unwrap_err();
        assert!(matches!(err, Error::InvalidInstance { ref path, .. } if path == "next[0][1]"));
        spec.next[0][1] = 2;
        spec.rho = vec![0.9];
        let err = Dcmdp::new(spec.clone()).unwrap_err();
        assert!(matches!(err, Error::InvalidInstance { ref path, .. } if path == "rho"));
        spec.rho = vec![1.0];
        spec.layers = vec![vec![0], vec![1, 0]];
        assert!(Dcmdp::new(spec).is_err());
    }

    #[test]
    fn reward_range_violation_has_witness() {
        let err = Dcmdp::new(DcmdpSpec {
            horizon: 2,
            num_actions: 2,
            layers: vec![vec![0], vec![1, 2]],
            rho: vec![1.0],
            next: vec![vec![1, 2], vec![], vec![]],
            reward: vec![vec![0.6, 0.1], vec![0.6, 0.0], vec![0.2, 0.5]],
            rmax: 1.0,
        })
        .unwrap_err();
        match err {
            Error::RewardRange { witness, total, .. } => {
                assert!((total - 1.2).abs() < 1e-12);
                assert_eq!(witness.actions().collect::<Vec<_>>(), vec![ActionId(0), ActionId(0)]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn enumeration_counts_and_order() {
        let bandit = make_token_mdp(
            &TokenSpec {
                prompt_probs: vec![1.0],
                vocab: 2,
                horizon: 1,
                rmax: 1.0,
            },
            |_, _, _| 0.0,
        )
        .unwrap();
        assert_eq!(enumerate_trajectories(&bandit, 100).unwrap().len(), 2);

        let tok = make_token_mdp(
            &TokenSpec {
                prompt_probs: vec![0.5, 0.5],
                vocab: 2,
                horizon: 2,
                rmax: 2.0,
            },
            |_, _, _| 0.5,
        )
        .unwrap();
        let space = enumerate_trajectories(&tok, 100).unwrap();
        assert_eq!(space.len(), 8);
        for (i, tau) in space.trajectories().iter().enumerate() {
            assert_eq!(tau.index(), i as u64);
            assert_eq!(tok.trajectory_by_index(i as u64).unwrap(), *tau);
        }

        let wide = crate::instances::random_tabular(
            &crate::instances::RandomTabular {
                states_per_layer: 2,
                num_actions: 3,
                horizon: 3,
                seed: 4,
            },
        )
        .unwrap();
        assert_eq!(enumerate_trajectories(&wide, 100).unwrap().len(), 54);
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let tok = make_token_mdp(
            &TokenSpec {
                prompt_probs: vec![1.0],
                vocab: 4,
                horizon: 6,
                rmax: 1.0,
            },
            |_, _, _| 0.0,
        )
        .unwrap();
        let err = enumerate_trajectories(&tok, 1000).unwrap_err();
        assert!(matches!(err, Error::EnumerationCap { count: 4096, cap: 1000 }));
    }

    #[test]
    fn token_mdp_layers() {
        let spec = TokenSpec {
            prompt_probs: vec![1.0],
            vocab: 2,
            horizon: 2,
            rmax: 1.0,
        };
        let mdp = make_token_mdp(&spec, |_, prefix, t| if prefix.len() == 1 { 0.5 * t as f64 } else { 0.0 }).unwrap();
        assert_eq!(mdp.layers()[0].len(), 1);
        assert_eq!(mdp.layers()[1].len(), 2);
        assert_eq!(enumerate_trajectories(&mdp, 10).unwrap().len(), 4);
        assert_eq!(token_state_id(&spec, 0, &[1]), 2);
        assert_eq!(mdp.next(StateId(0), ActionId(1)), Some(StateId(2)));
        let err = make_token_mdp(&spec, |_, _, _| 0.75).unwrap_err();
        assert!(matches!(err, Error::RewardRange { .. }));
    }

    #[test]
    fn occupancy_uniform_two_steps() {
        let mdp = two_step();
        let pi = TabularPolicy::uniform(3, 2);
        let (_, occ) = occupancy(&mdp, &pi).unwrap();
        assert_eq!(occ, vec![0.25; 4]);
        let det = TabularPolicy::deterministic(2, &[ActionId(1), ActionId(0), ActionId(1)]).unwrap();
        let (_, occ) = occupancy(&mdp, &det).unwrap();
        assert_eq!(occ, vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn rollout_is_deterministic_per_seed() {
        let mdp = two_step();
        let pi = TabularPolicy::uniform(3, 2);
        let s = SeedStreams::new(11);
        let a = rollout(&mdp, &pi, &mut s.stream(0, 0, Purpose::Response)).unwrap();
        let b = rollout(&mdp, &pi, &mut s.stream(0, 0, Purpose::Response)).unwrap();
        assert_eq!(a, b);
        let det = TabularPolicy::deterministic(2, &[ActionId(1), ActionId(0), ActionId(1)]).unwrap();
        let t = rollout(&mdp, &det, &mut s.stream(1, 0, Purpose::Response)).unwrap();
        assert_eq!(t.index(), 3);
    }

    #[test]
    fn rollout_rejects_massless_rows() {
        let mdp = two_step();
        let mut bad = TabularPolicy::uniform(3, 2);
        bad.probs[0] = 0.0;
        bad.probs[1] = 0.0;
        let err = rollout(&mdp, &bad, &mut SeedStreams::new(0).stream(0, 0, Purpose::Response));
        assert!(matches!(err, Err(Error::InvalidPolicy(_))));
    }

    #[test]
    fn linear_rewards_match_inner_products() {
        let n = 3;
        let fm = FeatureMap::one_hot(n, 2);
        let theta = vec![0.1, 0.2, 0.3, 0.0, 0.4, 0.5];
        let norm = math::norm(&theta);
        let theta: Vec<f64> = theta.iter().map(|x| x / norm).collect();
        let mdp = make_linear_dcmdp(LinearSpec {
            horizon: 2,
            num_actions: 2,
            layers: vec![vec![0], vec![1, 2]],
            rho: vec![1.0],
            next: vec![vec![1, 2], vec![], vec![]],
            features: fm,
            reward_weights: theta.clone(),
            rmax: 2.0,
        })
        .unwrap();
        for s in 0..n {
            for a in 0..2 {
                assert_eq!(mdp.reward(StateId(s), ActionId(a)), theta[s * 2 + a]);
            }
        }
        let bad = FeatureMap::new(1, 2, vec![2.0; 6]).unwrap();
        let err = make_linear_dcmdp(LinearSpec {
            horizon: 2,
            num_actions: 2,
            layers: vec![vec![0], vec![1, 2]],
            rho: vec![1.0],
            next: vec![vec![1, 2], vec![], vec![]],
            features: bad,
            reward_weights: vec![0.0],
            rmax: 2.0,
        });
        assert!(err.is_err());
    }
}
