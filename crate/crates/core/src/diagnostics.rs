//! Numerical checks of the exact identities behind XPO and the complexity
//! coefficients that control its guarantees.
//!
//! Everything here is computed exactly over the enumerated trajectory
//! space; nothing is sampled except where a function says so.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dcmdp::{
    enumerate_trajectories, make_token_mdp, Dcmdp, TabularPolicy, TokenSpec, TrajectorySpace,
    DEFAULT_ENUMERATION_CAP,
};
use crate::error::{Error, Result};
use crate::math;
use crate::policy::{log_prob, log_ratio_from_logs, FinitePolicyClass};
use crate::softdp::{bellman_op, boltzmann_policy, soft_value, solve_soft_dp, SoftSolution, StateActionFunction};

fn space_of(mdp: &Dcmdp) -> Result<TrajectorySpace> {
    enumerate_trajectories(mdp, DEFAULT_ENUMERATION_CAP)
}

/// Trajectory-level coverability of a finite set of policies.
#[derive(Debug, Clone, PartialEq)]
pub struct Coverability {
    /// `sum_tau max_pi d^pi(tau)`.
    pub c_cov: f64,
    /// `mu*(tau) = max_pi d^pi(tau) / c_cov`, the minimizing distribution.
    pub mu: Vec<f64>,
    /// Index of a policy attaining the max at each trajectory (lowest index).
    pub argmax: Vec<usize>,
}

/// `C_cov = inf_mu max_tau max_pi d^pi(tau) / mu(tau)`, evaluated in
/// closed form as `sum_tau max_pi d^pi(tau)`.
pub fn coverability(mdp: &Dcmdp, policies: &[TabularPolicy]) -> Result<Coverability> {
    if policies.is_empty() {
        return Err(Error::Empty("policy set"));
    }
    for p in policies {
        mdp.check_policy(p)?;
    }
    let space = space_of(mdp)?;
    let occs: Vec<Vec<f64>> = policies.iter().map(|p| space.occupancy(mdp, p)).collect();
    let n = space.len();
    let mut best = vec![f64::NEG_INFINITY; n];
    let mut argmax = vec![0; n];
    for (i, occ) in occs.iter().enumerate() {
        for k in 0..n {
            if occ[k] > best[k] {
                best[k] = occ[k];
                argmax[k] = i;
            }
        }
    }
    let c_cov: f64 = best.iter().sum();
    let mu = best.iter().map(|b| b / c_cov).collect();
    Ok(Coverability { c_cov, mu, argmax })
}

/// `C_conc = max_tau max_pi pi(tau) / ref(tau)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Concentrability {
    /// `+inf` on a support violation.
    pub value: f64,
    /// `beta`-free log of `value`.
    pub log_value: f64,
    /// (policy index, trajectory index) attaining the max.
    pub witness: Option<(usize, u64)>,
}

pub fn concentrability(
    mdp: &Dcmdp,
    policies: &[TabularPolicy],
    reference: &TabularPolicy,
) -> Result<Concentrability> {
    if policies.is_empty() {
        return Err(Error::Empty("policy set"));
    }
    let space = space_of(mdp)?;
    let ref_logs = space.log_probs(reference);
    let mut best = f64::NEG_INFINITY;
    let mut witness = None;
    for (i, p) in policies.iter().enumerate() {
        mdp.check_policy(p)?;
        for (tau, &lref) in space.trajectories().iter().zip(&ref_logs) {
            let lp = log_prob(p, tau);
            if lp == f64::NEG_INFINITY {
                continue;
            }
            let lr = log_ratio_from_logs(lp, lref);
            if lr > best {
                best = lr;
                witness = Some((i, tau.index()));
            }
        }
    }
    Ok(Concentrability {
        value: math::exp(best),
        log_value: best,
        witness,
    })
}

/// Both coefficients for one policy set.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientReport {
    pub coverability: Coverability,
    pub concentrability: Concentrability,
}

pub fn coefficient_report(
    mdp: &Dcmdp,
    policies: &[TabularPolicy],
    reference: &TabularPolicy,
) -> Result<CoefficientReport> {
    Ok(CoefficientReport {
        coverability: coverability(mdp, policies)?,
        concentrability: concentrability(mdp, policies, reference)?,
    })
}

/// Largest deviation from the implicit-Q identity
/// `beta log(pi_f / ref)(tau) = r(tau) - V_f(s1) + sum_h (f - T f)(s_h, a_h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub max_residual: f64,
    /// Trajectory index attaining `max_residual`.
    pub witness: u64,
    /// Largest `|sum_h (f - T f)(s_h, a_h)|` along a trajectory.
    pub max_bellman_sum: f64,
}

pub fn implicit_q_residual(
    mdp: &Dcmdp,
    f: &StateActionFunction,
    beta: f64,
    reference: &TabularPolicy,
) -> Result<ResidualReport> {
    mdp.check_policy(reference)?;
    let space = space_of(mdp)?;
    let pi_f = boltzmann_policy(f, beta, reference)?;
    let tf = bellman_op(mdp, f, beta, reference)?;
    let mut report = ResidualReport {
        max_residual: 0.0,
        witness: 0,
        max_bellman_sum: 0.0,
    };
    for tau in space.trajectories() {
        let lref = log_prob(reference, tau);
        if lref == f64::NEG_INFINITY {
            continue;
        }
        let lhs = beta * (log_prob(&pi_f, tau) - lref);
        let bellman: f64 = tau.steps().iter().map(|&(s, a)| f.get(s, a) - tf.get(s, a)).sum();
        let v1 = soft_value(f, tau.initial_state(), beta, reference)?;
        let residual = (lhs - (tau.total_reward() - v1 + bellman)).abs();
        if residual > report.max_residual || residual.is_nan() {
            report.max_residual = residual;
            report.witness = tau.index();
        }
        report.max_bellman_sum = report.max_bellman_sum.max(bellman.abs());
    }
    Ok(report)
}

/// Both sides of the central regret decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionCheck {
    /// `J_beta(pi*) - J_beta(pi)`.
    pub lhs: f64,
    /// `E_nu[beta log pi] - E_nu[beta log pi*] + E_pi[beta log(pi/ref) - r]
    ///  - E_nu[beta log(pi/ref) - r]`.
    pub rhs: f64,
    pub gap: f64,
}

pub fn regret_decomposition_check(
    mdp: &Dcmdp,
    policy: &TabularPolicy,
    nu: &TabularPolicy,
    beta: f64,
    reference: &TabularPolicy,
) -> Result<DecompositionCheck> {
    mdp.check_policy(policy)?;
    mdp.check_policy(nu)?;
    let sol = solve_soft_dp(mdp, beta, reference)?;
    let space = space_of(mdp)?;
    let d_pi = space.occupancy(mdp, policy);
    let d_nu = space.occupancy(mdp, nu);
    let mut j_pi = 0.0;
    let mut on_policy = 0.0;
    let mut nu_log_pi = 0.0;
    let mut nu_log_star = 0.0;
    let mut nu_reward_model = 0.0;
    for ((tau, &dp), &dn) in space.trajectories().iter().zip(&d_pi).zip(&d_nu) {
        let lref = log_prob(reference, tau);
        let lp = log_prob(policy, tau);
        let r = tau.total_reward();
        if dp > 0.0 {
            if lref == f64::NEG_INFINITY {
                return Err(Error::Support(format!(
                    "policy puts mass on trajectory {} which the reference excludes",
                    tau.index()
                )));
            }
            let g = beta * (lp - lref) - r;
            j_pi += dp * -g;
            on_policy += dp * g;
        }
        if dn > 0.0 {
            if lref == f64::NEG_INFINITY {
                return Err(Error::Support(format!(
                    "nu puts mass on trajectory {} which the reference excludes",
                    tau.index()
                )));
            }
            let ls = log_prob(&sol.policy, tau);
            nu_log_star += dn * beta * ls;
            if lp == f64::NEG_INFINITY {
                // beta log pi cancels between the first and last terms
                nu_reward_model += dn * (-beta * lref - r);
            } else {
                nu_log_pi += dn * beta * lp;
                nu_reward_model += dn * (beta * (lp - lref) - r);
            }
        }
    }
    let lhs = sol.optimal_value(mdp) - j_pi;
    let rhs = nu_log_pi - nu_log_star + on_policy - nu_reward_model;
    Ok(DecompositionCheck {
        lhs,
        rhs,
        gap: (lhs - rhs).abs(),
    })
}

/// Which policy sequences the SEC is evaluated on.
#[derive(Debug, Clone, PartialEq)]
pub enum SecMode {
    /// One given sequence of class indices.
    Realized(Vec<usize>),
    /// Supremum over all `|Pi|^T` sequences; refused beyond [`SEC_EXHAUSTIVE_CAP`].
    Exhaustive,
    /// Maximum over `samples` uniformly random sequences; a lower bound.
    Sampled { samples: usize, seed: u64 },
}

pub const SEC_EXHAUSTIVE_CAP: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SecReport {
    pub value: f64,
    /// Sequence attaining `value` (lexicographically first among maximizers).
    pub sequence: Vec<usize>,
    /// Per-iteration summands along `sequence`.
    pub terms: Vec<f64>,
    /// True when `value` is only a lower bound on the supremum.
    pub lower_bound: bool,
}

/// Per-class quantities the SEC sum is built from. With
/// `g_j(tau) = beta log(pi_j / ref)(tau) - r(tau)`:
/// `num[j] = (E_{pi_j}[g_j] - E_ref[g_j])^2` and
/// `m[j][i] = E_{s1, tau ~ pi_i, tau~ ~ ref}[(g_j(tau) - g_j(tau~))^2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SecTables {
    pub num: Vec<f64>,
    pub m: Vec<Vec<f64>>,
    pub vmax: f64,
}

impl SecTables {
    pub fn new(
        mdp: &Dcmdp,
        policies: &[TabularPolicy],
        beta: f64,
        reference: &TabularPolicy,
        vmax: f64,
    ) -> Result<Self> {
        if policies.is_empty() {
            return Err(Error::Empty("policy set"));
        }
        if !(vmax >= 0.0) {
            return Err(Error::param("vmax", "must be non-negative"));
        }
        let space = space_of(mdp)?;
        let ref_logs = space.log_probs(reference);
        let n = policies.len();
        let logs: Vec<Vec<f64>> = policies.iter().map(|p| space.log_probs(p)).collect();
        let mut g = Vec::with_capacity(n);
        for lp in &logs {
            let mut gj = Vec::with_capacity(space.len());
            for ((tau, &l), &lr) in space.trajectories().iter().zip(lp).zip(&ref_logs) {
                let ratio = log_ratio_from_logs(l, lr);
                if ratio == f64::INFINITY {
                    return Err(Error::Support(format!(
                        "class member puts mass on trajectory {} which the reference excludes",
                        tau.index()
                    )));
                }
                // excluded by both: never sampled by either side
                gj.push(if lr == f64::NEG_INFINITY { 0.0 } else { beta * ratio - tau.total_reward() });
            }
            g.push(gj);
        }
        let cond = |logs: &[f64], range: core::ops::Range<usize>| -> Vec<(usize, f64)> {
            range
                .filter_map(|k| {
                    let p = math::exp(logs[k]);
                    (p > 0.0).then_some((k, p))
                })
                .collect()
        };
        let blocks: Vec<core::ops::Range<usize>> =
            (0..mdp.initial_states().len()).map(|pos| space.block(pos)).collect();
        let mut num = vec![0.0; n];
        let mut m = vec![vec![0.0; n]; n];
        for (pos, block) in blocks.iter().enumerate() {
            let rho = mdp.rho()[pos];
            if rho == 0.0 {
                continue;
            }
            let ref_c = cond(&ref_logs, block.clone());
            let pol_c: Vec<Vec<(usize, f64)>> = logs.iter().map(|l| cond(l, block.clone())).collect();
            for j in 0..n {
                let gj = &g[j];
                let e_ref: f64 = ref_c.iter().map(|&(k, p)| p * gj[k]).sum();
                let e_ref_sq: f64 = ref_c.iter().map(|&(k, p)| p * gj[k] * gj[k]).sum();
                let e_self: f64 = pol_c[j].iter().map(|&(k, p)| p * gj[k]).sum();
                num[j] += rho * (e_self - e_ref);
                for i in 0..n {
                    let e1: f64 = pol_c[i].iter().map(|&(k, p)| p * gj[k]).sum();
                    let e2: f64 = pol_c[i].iter().map(|&(k, p)| p * gj[k] * gj[k]).sum();
                    m[j][i] += rho * (e2 - 2.0 * e1 * e_ref + e_ref_sq);
                }
            }
        }
        for x in &mut num {
            *x = *x * *x;
        }
        Ok(Self { num, m, vmax })
    }

    /// Summand at 1-based position `t` for member `j` given the earlier
    /// members `history`. The first summand is `min(1, num / Vmax^2)`.
    pub fn term(&self, j: usize, history: &[usize]) -> f64 {
        let v2 = self.vmax * self.vmax;
        let num = self.num[j];
        if history.is_empty() {
            return if num == 0.0 { 0.0 } else { (num / v2).min(1.0) };
        }
        let spread: f64 = history.iter().map(|&i| self.m[j][i]).sum();
        let den = v2.max(spread);
        if num == 0.0 {
            0.0
        } else {
            num / den
        }
    }

    pub fn evaluate(&self, sequence: &[usize]) -> Vec<f64> {
        (0..sequence.len())
            .map(|t| self.term(sequence[t], &sequence[..t]))
            .collect()
    }
}

/// Sequential extrapolation coefficient under reference sampling.
pub fn sec_estimate(
    mdp: &Dcmdp,
    class: &FinitePolicyClass,
    beta: f64,
    reference: &TabularPolicy,
    vmax: f64,
    horizon_t: usize,
    mode: &SecMode,
) -> Result<SecReport> {
    let tables = SecTables::new(mdp, class.policies(), beta, reference, vmax)?;
    let n = class.len();
    match mode {
        SecMode::Realized(seq) => {
            if seq.len() != horizon_t {
                return Err(Error::param(
                    "sequence",
                    format!("expected {horizon_t} members, got {}", seq.len()),
                ));
            }
            if let Some(&bad) = seq.iter().find(|&&j| j >= n) {
                return Err(Error::param("sequence", format!("member {bad} is not in the class")));
            }
            let terms = tables.evaluate(seq);
            Ok(SecReport {
                value: terms.iter().sum(),
                sequence: seq.clone(),
                terms,
                lower_bound: false,
            })
        }
        SecMode::Exhaustive => {
            let count = (n as u128).checked_pow(horizon_t as u32);
            if count.is_none_or(|c| c > SEC_EXHAUSTIVE_CAP) {
                return Err(Error::param(
                    "mode",
                    format!("{n}^{horizon_t} sequences exceed the exhaustive cap {SEC_EXHAUSTIVE_CAP}"),
                ));
            }
            let mut best = (f64::NEG_INFINITY, Vec::new());
            let mut prefix = Vec::with_capacity(horizon_t);
            search(&tables, horizon_t, &mut prefix, 0.0, &mut best);
            let terms = tables.evaluate(&best.1);
            Ok(SecReport {
                value: best.0.max(0.0),
                sequence: best.1,
                terms,
                lower_bound: false,
            })
        }
        SecMode::Sampled { samples, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut best = (f64::NEG_INFINITY, Vec::new());
            for _ in 0..(*samples).max(1) {
                let seq: Vec<usize> = (0..horizon_t).map(|_| rng.random_range(0..n)).collect();
                let v: f64 = tables.evaluate(&seq).iter().sum();
                if v > best.0 {
                    best = (v, seq);
                }
            }
            let terms = tables.evaluate(&best.1);
            Ok(SecReport {
                value: best.0,
                sequence: best.1,
                terms,
                lower_bound: true,
            })
        }
    }
}

fn search(tables: &SecTables, len: usize, prefix: &mut Vec<usize>, acc: f64, best: &mut (f64, Vec<usize>)) {
    if prefix.len() == len {
        if acc > best.0 {
            *best = (acc, prefix.clone());
        }
        return;
    }
    for j in 0..tables.num.len() {
        let term = tables.term(j, prefix);
        prefix.push(j);
        search(tables, len, prefix, acc + term, best);
        prefix.pop();
    }
}

/// Worst case of `|x - y| / (8 (X + Y) e^{2Y} |sigmoid(x) - sigmoid(y)|)`
/// over a grid on `[-X, X] x [-Y, Y]`, excluding `x = y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapCheck {
    pub worst_ratio: f64,
    pub witness: (f64, f64),
}

pub fn sigmoid_gap_bound_check(x_max: f64, y_max: f64, resolution: usize) -> Result<GapCheck> {
    if !(y_max >= 1.0) {
        return Err(Error::param("Y", format!("the bound requires Y >= 1, got {y_max}")));
    }
    if !(x_max >= 0.0) || !x_max.is_finite() || !y_max.is_finite() {
        return Err(Error::param("X", "must be finite and non-negative"));
    }
    if resolution < 2 {
        return Err(Error::param("resolution", "at least two grid points per axis"));
    }
    let grid = |m: f64| -> Vec<f64> {
        (0..resolution)
            .map(|i| -m + 2.0 * m * i as f64 / (resolution - 1) as f64)
            .collect()
    };
    let xs = grid(x_max);
    let ys = grid(y_max);
    let scale = 8.0 * (x_max + y_max) * math::exp(2.0 * y_max);
    let mut out = GapCheck {
        worst_ratio: 0.0,
        witness: (0.0, 0.0),
    };
    for &x in &xs {
        let cx = libm::cosh(x / 2.0);
        for &y in &ys {
            if x == y {
                continue;
            }
            // sigmoid(x) - sigmoid(y) without cancellation
            let gap = libm::sinh((x - y) / 2.0) / (2.0 * cx * libm::cosh(y / 2.0));
            let ratio = (x - y).abs() / (scale * gap.abs());
            if ratio > out.worst_ratio || ratio.is_nan() {
                out = GapCheck {
                    worst_ratio: ratio,
                    witness: (x, y),
                };
            }
        }
    }
    Ok(out)
}

/// The two-action bandit on which online DPO can stay at the reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample {
    pub mdp: Dcmdp,
    pub reference: TabularPolicy,
    /// `[reference, optimal]`, in this order.
    pub class: FinitePolicyClass,
    pub epsilon: f64,
    pub solution: SoftSolution,
}

/// `r(a) = 1`, `r(b) = 1/2`, `ref = (eps, 1 - eps)` with `eps = exp(-c / beta)`
/// and the class `{ref, pi*_beta}`. Requires `beta in (0, ln 2 / 8)` and
/// `0 < c <= 1/8`.
pub fn counterexample_instance(beta: f64, c: f64) -> Result<Counterexample> {
    let beta_hi = core::f64::consts::LN_2 / 8.0;
    if !(beta > 0.0 && beta < beta_hi) {
        return Err(Error::param("beta", format!("must lie in (0, ln 2 / 8) = (0, {beta_hi:.6}), got {beta}")));
    }
    if !(c > 0.0 && c <= 0.125) {
        return Err(Error::param("c", format!("must lie in (0, 1/8], got {c}")));
    }
    let epsilon = math::exp(-c / beta);
    let mdp = make_token_mdp(
        &TokenSpec {
            prompt_probs: vec![1.0],
            vocab: 2,
            horizon: 1,
            rmax: 1.0,
        },
        |_, _, t| if t == 0 { 1.0 } else { 0.5 },
    )?;
    let reference = TabularPolicy::from_rows(&[vec![epsilon, 1.0 - epsilon]])?;
    let solution = solve_soft_dp(&mdp, beta, &reference)?;
    let class = FinitePolicyClass::new(vec![reference.clone(), solution.policy.clone()])?;
    Ok(Counterexample {
        mdp,
        reference,
        class,
        epsilon,
        solution,
    })
}
