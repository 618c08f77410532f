//! KL-regularized value machinery: soft values `V_f`, Boltzmann policies
//! `pi_f`, the regularized Bellman operator, exact backward induction for
//! the optimal regularized solution and evaluation of the regularized
//! objective `J_beta`.
//!
//! All soft values use max subtraction inside the log-sum-exp, and
//! log-ratios are formed as differences of stored log-probabilities.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;

use crate::dcmdp::{
    enumerate_trajectories, rollout, ActionId, Dcmdp, StateId, TabularPolicy, Trajectory,
    TrajectorySpace, DEFAULT_ENUMERATION_CAP, NORMALIZATION_TOL,
};
use crate::error::{Error, Result};
use crate::math;
use crate::policy::{log_prob, log_ratio_from_logs};

/// Fixed-point tolerance for the soft Bellman equation.
pub const FIXED_POINT_TOL: f64 = 1e-9;

/// A real-valued function on (state, action) pairs, stored densely.
#[derive(Debug, Clone, PartialEq)]
pub struct StateActionFunction {
    num_actions: usize,
    values: Vec<f64>,
}

impl StateActionFunction {
    pub fn new(num_actions: usize, values: Vec<f64>) -> Result<Self> {
        if num_actions == 0 || values.len() % num_actions != 0 {
            return Err(Error::param("values", "length is not a multiple of the action count"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("values", "state-action values must be finite"));
        }
        Ok(Self {
            num_actions,
            values,
        })
    }

    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_actions,
            values: vec![0.0; num_states * num_actions],
        }
    }

    pub fn from_fn(
        num_states: usize,
        num_actions: usize,
        mut f: impl FnMut(StateId, ActionId) -> f64,
    ) -> Self {
        let mut values = Vec::with_capacity(num_states * num_actions);
        for s in 0..num_states {
            for a in 0..num_actions {
                values.push(f(StateId(s), ActionId(a)));
            }
        }
        Self {
            num_actions,
            values,
        }
    }

    pub fn get(&self, s: StateId, a: ActionId) -> f64 {
        self.values[s.0 * self.num_actions + a.0]
    }

    pub fn row(&self, s: StateId) -> &[f64] {
        &self.values[s.0 * self.num_actions..(s.0 + 1) * self.num_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn num_states(&self) -> usize {
        self.values.len() / self.num_actions
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::param("beta", format!("must be positive and finite, got {beta}")));
    }
    Ok(())
}

/// Largest `f(s, a)` over actions the reference supports.
fn supported_max(row: &[f64], ref_logs: &[f64]) -> f64 {
    row.iter()
        .zip(ref_logs)
        .filter(|(_, l)| **l != f64::NEG_INFINITY)
        .map(|(f, _)| *f)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn soft_value_row(row: &[f64], ref_logs: &[f64], beta: f64) -> f64 {
    let m = supported_max(row, ref_logs);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let lse = math::log_sum_exp(row.iter().zip(ref_logs).map(|(f, l)| l + (f - m) / beta));
    m + beta * lse
}

fn boltzmann_row(row: &[f64], ref_logs: &[f64], beta: f64, out: &mut [f64]) {
    let m = supported_max(row, ref_logs);
    for ((o, f), l) in out.iter_mut().zip(row).zip(ref_logs) {
        *o = l + (f - m) / beta;
    }
    let lse = math::log_sum_exp(out.iter().copied());
    for o in out.iter_mut() {
        if *o != f64::NEG_INFINITY {
            *o -= lse;
        }
    }
}

/// `V_f(s) = beta * log sum_a ref(a|s) exp(f(s,a) / beta)`.
pub fn soft_value(
    f: &StateActionFunction,
    s: StateId,
    beta: f64,
    reference: &TabularPolicy,
) -> Result<f64> {
    check_beta(beta)?;
    Ok(soft_value_row(f.row(s), reference.log_row(s), beta))
}

/// `pi_f(a|s) = ref(a|s) exp((f(s,a) - V_f(s)) / beta)` at every state.
pub fn boltzmann_policy(
    f: &StateActionFunction,
    beta: f64,
    reference: &TabularPolicy,
) -> Result<TabularPolicy> {
    check_beta(beta)?;
    let a_n = f.num_actions();
    let mut logs = vec![0.0; f.values.len()];
    for s in 0..f.num_states() {
        boltzmann_row(
            f.row(StateId(s)),
            reference.log_row(StateId(s)),
            beta,
            &mut logs[s * a_n..(s + 1) * a_n],
        );
    }
    TabularPolicy::from_log_probs(a_n, logs)
}

/// `[T_beta f](s_h, a_h) = r(s_h, a_h) + V_f(s_{h+1})`, with `V_f := 0`
/// past the last layer.
pub fn bellman_op(
    mdp: &Dcmdp,
    f: &StateActionFunction,
    beta: f64,
    reference: &TabularPolicy,
) -> Result<StateActionFunction> {
    check_beta(beta)?;
    let n = mdp.num_states();
    let a_n = mdp.num_actions();
    let soft: Vec<f64> = (0..n)
        .map(|s| soft_value_row(f.row(StateId(s)), reference.log_row(StateId(s)), beta))
        .collect();
    Ok(StateActionFunction::from_fn(n, a_n, |s, a| {
        mdp.reward(s, a) + mdp.next(s, a).map_or(0.0, |t| soft[t.0])
    }))
}

/// Optimal KL-regularized action values, state values and policy.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftSolution {
    pub q: StateActionFunction,
    pub v: Vec<f64>,
    pub policy: TabularPolicy,
    pub beta: f64,
}

impl SoftSolution {
    /// `J_beta(pi*) = E_{s1 ~ rho} V*(s1)`.
    pub fn optimal_value(&self, mdp: &Dcmdp) -> f64 {
        mdp.initial_states()
            .iter()
            .zip(mdp.rho())
            .map(|(s, p)| p * self.v[s.0])
            .sum()
    }
}

/// Backward induction from the last layer. The reference must have full
/// support at every reachable state.
pub fn solve_soft_dp(mdp: &Dcmdp, beta: f64, reference: &TabularPolicy) -> Result<SoftSolution> {
    check_beta(beta)?;
    mdp.check_policy(reference)?;
    let n = mdp.num_states();
    let a_n = mdp.num_actions();
    for s in 0..n {
        if mdp.is_reachable(StateId(s)) && reference.row(StateId(s)).iter().any(|p| *p == 0.0) {
            return Err(Error::Support(format!(
                "reference policy has zero mass on an action at reachable state {s}"
            )));
        }
    }
    let mut q = vec![0.0; n * a_n];
    let mut v = vec![0.0; n];
    let mut logs = vec![0.0; n * a_n];
    for layer in mdp.layers().iter().rev() {
        for &s in layer {
            for a in 0..a_n {
                q[s.0 * a_n + a] =
                    mdp.reward(s, ActionId(a)) + mdp.next(s, ActionId(a)).map_or(0.0, |t| v[t.0]);
            }
            let row = &q[s.0 * a_n..(s.0 + 1) * a_n];
            v[s.0] = soft_value_row(row, reference.log_row(s), beta);
            boltzmann_row(row, reference.log_row(s), beta, &mut logs[s.0 * a_n..(s.0 + 1) * a_n]);
        }
    }
    let sol = SoftSolution {
        q: StateActionFunction {
            num_actions: a_n,
            values: q,
        },
        v,
        policy: TabularPolicy::from_log_probs(a_n, logs)?,
        beta,
    };
    validate_solution(mdp, &sol, reference)?;
    Ok(sol)
}

fn validate_solution(mdp: &Dcmdp, sol: &SoftSolution, reference: &TabularPolicy) -> Result<()> {
    let tq = bellman_op(mdp, &sol.q, sol.beta, reference)?;
    let residual = tq.max_abs_diff(&sol.q);
    if !(residual <= FIXED_POINT_TOL) {
        return Err(Error::Validation(format!("Bellman residual {residual}")));
    }
    for s in 0..mdp.num_states() {
        let s = StateId(s);
        let total: f64 = sol.policy.row(s).iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Validation(format!("policy row {} sums to {total}", s.0)));
        }
        if mdp.is_reachable(s) {
            let v = soft_value_row(sol.q.row(s), reference.log_row(s), sol.beta);
            if (v - sol.v[s.0]).abs() > FIXED_POINT_TOL {
                return Err(Error::Validation(format!("soft value mismatch at state {}", s.0)));
            }
        }
    }
    Ok(())
}

/// Value of the regularized objective together with Monte Carlo error.
#[derive(Debug, Clone, PartialEq)]
pub struct JBeta {
    pub value: f64,
    /// Zero for exact evaluation.
    pub std_error: f64,
    /// Set when `pi` puts mass on a trajectory the reference excludes, in
    /// which case `value` is `-inf`.
    pub witness: Option<Trajectory>,
}

/// `J_beta(pi) = sum_tau d^pi(tau) [r(tau) - beta log(pi(tau) / ref(tau))]`
/// by enumeration.
pub fn j_beta(
    mdp: &Dcmdp,
    policy: &TabularPolicy,
    beta: f64,
    reference: &TabularPolicy,
) -> Result<JBeta> {
    let space = enumerate_trajectories(mdp, DEFAULT_ENUMERATION_CAP)?;
    j_beta_on(mdp, &space, policy, beta, reference)
}

/// [`j_beta`] over a precomputed enumeration.
pub fn j_beta_on(
    mdp: &Dcmdp,
    space: &TrajectorySpace,
    policy: &TabularPolicy,
    beta: f64,
    reference: &TabularPolicy,
) -> Result<JBeta> {
    check_beta(beta)?;
    mdp.check_policy(policy)?;
    mdp.check_policy(reference)?;
    let occ = space.occupancy(mdp, policy);
    let mut value = 0.0;
    for (tau, d) in space.trajectories().iter().zip(occ) {
        if d == 0.0 {
            continue;
        }
        let lr = log_ratio_from_logs(log_prob(policy, tau), log_prob(reference, tau));
        if lr == f64::INFINITY {
            return Ok(JBeta {
                value: f64::NEG_INFINITY,
                std_error: 0.0,
                witness: Some(tau.clone()),
            });
        }
        value += d * (tau.total_reward() - beta * lr);
    }
    Ok(JBeta {
        value,
        std_error: 0.0,
        witness: None,
    })
}

/// Sample mean of `r(tau) - beta log(pi(tau) / ref(tau))` over `samples`
/// rollouts of `pi`, with its standard error.
pub fn j_beta_monte_carlo<R: RngCore + ?Sized>(
    mdp: &Dcmdp,
    policy: &TabularPolicy,
    beta: f64,
    reference: &TabularPolicy,
    samples: usize,
    rng: &mut R,
) -> Result<JBeta> {
    check_beta(beta)?;
    if samples == 0 {
        return Err(Error::param("samples", "must be positive"));
    }
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let tau = rollout(mdp, policy, rng)?;
        let lr = log_ratio_from_logs(log_prob(policy, &tau), log_prob(reference, &tau));
        if lr == f64::INFINITY {
            return Ok(JBeta {
                value: f64::NEG_INFINITY,
                std_error: 0.0,
                witness: Some(tau),
            });
        }
        let x = tau.total_reward() - beta * lr;
        sum += x;
        sum_sq += x * x;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = if samples > 1 {
        ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(JBeta {
        value: mean,
        std_error: math::sqrt(var / n),
        witness: None,
    })
}

/// Exact `J_beta(pi)` through the per-step form
/// `E_pi sum_h [r(s_h, a_h) - beta KL(pi(.|s_h) || ref(.|s_h))]`,
/// evaluated by a backward pass without enumerating trajectories.
pub fn j_beta_recursive(
    mdp: &Dcmdp,
    policy: &TabularPolicy,
    beta: f64,
    reference: &TabularPolicy,
) -> Result<f64> {
    check_beta(beta)?;
    mdp.check_policy(policy)?;
    mdp.check_policy(reference)?;
    let a_n = mdp.num_actions();
    let mut v = vec![0.0; mdp.num_states()];
    for layer in mdp.layers().iter().rev() {
        for &s in layer {
            let mut total = 0.0;
            for a in 0..a_n {
                let a = ActionId(a);
                let p = policy.prob(s, a);
                if p == 0.0 {
                    continue;
                }
                let lref = reference.log_prob(s, a);
                let step = if lref == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else {
                    mdp.reward(s, a) - beta * (policy.log_prob(s, a) - lref)
                };
                total += p * (step + mdp.next(s, a).map_or(0.0, |t| v[t.0]));
            }
            v[s.0] = total;
        }
    }
    Ok(mdp
        .initial_states()
        .iter()
        .zip(mdp.rho())
        .filter(|(_, p)| **p > 0.0)
        .map(|(s, p)| p * v[s.0])
        .sum())
}

/// `J_beta(pi*_beta) - J_beta(pi)`.
pub fn kl_regret(
    mdp: &Dcmdp,
    policy: &TabularPolicy,
    beta: f64,
    reference: &TabularPolicy,
) -> Result<f64> {
    let sol = solve_soft_dp(mdp, beta, reference)?;
    Ok(sol.optimal_value(mdp) - j_beta_recursive(mdp, policy, beta, reference)?)
}
