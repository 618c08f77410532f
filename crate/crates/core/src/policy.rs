//! Policy classes: explicit finite sets of tabular policies and log-linear
//! families `pi_theta(a|s) ∝ pi_ref(a|s) exp(<phi(s,a), theta> / beta)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dcmdp::{ActionId, FeatureMap, StateId, TabularPolicy, Trajectory, TrajectorySpace};
use crate::error::{Error, Result};
use crate::math;
use crate::softdp::StateActionFunction;

/// `log pi(tau) = sum_h log pi(a_h | s_h)`; `-inf` when any factor is zero.
pub fn log_prob(policy: &TabularPolicy, tau: &Trajectory) -> f64 {
    tau.steps().iter().map(|&(s, a)| policy.log_prob(s, a)).sum()
}

/// Closed interval applied to trajectory log-ratios.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clip {
    pub lo: f64,
    pub hi: f64,
}

impl Clip {
    pub const DEFAULT: Clip = Clip {
        lo: -500.0,
        hi: 500.0,
    };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::param("clip", format!("[{lo}, {hi}] is not an interval")));
        }
        Ok(Self { lo, hi })
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    /// Whether `x` lies strictly inside the interval (where the clamp has
    /// unit derivative).
    #[inline]
    pub fn passes(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }
}

impl Default for Clip {
    fn default() -> Self {
        Clip::DEFAULT
    }
}

/// Difference of two trajectory log-probabilities with the `-inf` cases
/// resolved: `pi(tau) = 0` gives `-inf`, otherwise `ref(tau) = 0` gives `+inf`.
#[inline]
pub fn log_ratio_from_logs(log_pi: f64, log_ref: f64) -> f64 {
    if log_pi == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else if log_ref == f64::NEG_INFINITY {
        f64::INFINITY
    } else {
        log_pi - log_ref
    }
}

/// `log(pi(tau) / ref(tau))`, optionally clamped.
pub fn log_ratio(
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    tau: &Trajectory,
    clip: Option<Clip>,
) -> f64 {
    let lr = log_ratio_from_logs(log_prob(policy, tau), log_prob(reference, tau));
    match clip {
        Some(c) => c.apply(lr),
        None => lr,
    }
}

/// Outcome of a bounded-density-ratio check.
#[derive(Debug, Clone, PartialEq)]
pub struct VmaxReport {
    /// `beta * max |log(pi(tau) / ref(tau))|` over the checked pairs.
    pub vmax: f64,
    /// `beta * max log(pi(tau) / ref(tau))`, the positive side only.
    pub vmax_upper: f64,
    /// (policy index, trajectory index) attaining `vmax`.
    pub witness: Option<(usize, u64)>,
    /// Some policy puts mass on a trajectory the reference excludes.
    pub support_violation: bool,
}

/// Empirical `Vmax` of a set of policies against `reference` over every
/// enumerated trajectory. Trajectories excluded by both sides are skipped;
/// a trajectory excluded by the reference only makes the result infinite.
pub fn vmax_check<'a, I>(
    policies: I,
    beta: f64,
    reference: &TabularPolicy,
    space: &TrajectorySpace,
) -> VmaxReport
where
    I: IntoIterator<Item = &'a TabularPolicy>,
{
    let ref_logs = space.log_probs(reference);
    let mut report = VmaxReport {
        vmax: 0.0,
        vmax_upper: f64::NEG_INFINITY,
        witness: None,
        support_violation: false,
    };
    let mut max_abs = 0.0f64;
    let mut max_pos = f64::NEG_INFINITY;
    for (i, pi) in policies.into_iter().enumerate() {
        for (tau, &lref) in space.trajectories().iter().zip(&ref_logs) {
            let lp = log_prob(pi, tau);
            if lp == f64::NEG_INFINITY && lref == f64::NEG_INFINITY {
                continue;
            }
            let lr = log_ratio_from_logs(lp, lref);
            if lr == f64::INFINITY {
                report.support_violation = true;
            }
            if report.witness.is_none() || lr.abs() > max_abs {
                max_abs = lr.abs();
                report.witness = Some((i, tau.index()));
            }
            max_pos = max_pos.max(lr);
        }
    }
    report.vmax = beta * max_abs;
    report.vmax_upper = beta * max_pos;
    report
}

/// A non-empty explicit list of tabular policies with stable indices.
#[derive(Debug, Clone, PartialEq)]
pub struct FinitePolicyClass {
    policies: Vec<TabularPolicy>,
}

impl FinitePolicyClass {
    pub fn new(policies: Vec<TabularPolicy>) -> Result<Self> {
        if policies.is_empty() {
            return Err(Error::Empty("policy class"));
        }
        let (n, a) = (policies[0].num_states(), policies[0].num_actions());
        if policies.iter().any(|p| p.num_states() != n || p.num_actions() != a) {
            return Err(Error::InvalidPolicy("class members disagree on shape".into()));
        }
        Ok(Self { policies })
    }

    pub fn policies(&self) -> &[TabularPolicy] {
        &self.policies
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    pub fn get(&self, i: usize) -> &TabularPolicy {
        &self.policies[i]
    }

    /// Index of the first member equal to `policy` within `tol` row-wise.
    pub fn position_of(&self, policy: &TabularPolicy, tol: f64) -> Option<usize> {
        self.policies
            .iter()
            .position(|p| p.max_abs_diff(policy) <= tol)
    }

    /// Checks `pi << ref` for every member.
    pub fn check_support(&self, reference: &TabularPolicy) -> Result<()> {
        for (i, p) in self.policies.iter().enumerate() {
            if !p.absolutely_continuous_wrt(reference) {
                return Err(Error::Support(format!(
                    "class member {i} is not absolutely continuous w.r.t. the reference"
                )));
            }
        }
        Ok(())
    }
}

/// The family `{pi_theta}` over a fixed feature map, temperature and
/// reference policy.
#[derive(Debug, Clone, PartialEq)]
pub struct LogLinearFamily {
    features: FeatureMap,
    beta: f64,
    reference: TabularPolicy,
}

/// One member of a [`LogLinearFamily`], with its tabular form cached.
#[derive(Debug, Clone, PartialEq)]
pub struct LogLinearPolicy {
    theta: Vec<f64>,
    tabular: TabularPolicy,
}

impl LogLinearPolicy {
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn tabular(&self) -> &TabularPolicy {
        &self.tabular
    }

    pub fn into_tabular(self) -> TabularPolicy {
        self.tabular
    }
}

impl LogLinearFamily {
    pub fn new(features: FeatureMap, beta: f64, reference: TabularPolicy) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::param("beta", format!("must be positive, got {beta}")));
        }
        if features.num_states() != reference.num_states() {
            return Err(Error::param("features", "feature map and reference disagree on states"));
        }
        Ok(Self {
            features,
            beta,
            reference,
        })
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn reference(&self) -> &TabularPolicy {
        &self.reference
    }

    pub fn features(&self) -> &FeatureMap {
        &self.features
    }

    /// Materializes `pi_theta`. Rows are computed as a log-softmax of
    /// `log ref + <phi, theta> / beta`, so they normalize to machine precision.
    pub fn policy(&self, theta: &[f64]) -> Result<LogLinearPolicy> {
        if theta.len() != self.dim() {
            return Err(Error::param(
                "theta",
                format!("expected dimension {}, got {}", self.dim(), theta.len()),
            ));
        }
        let a_n = self.reference.num_actions();
        let n = self.reference.num_states();
        let mut logs = vec![0.0; n * a_n];
        for s in 0..n {
            let row = &mut logs[s * a_n..(s + 1) * a_n];
            for (a, x) in row.iter_mut().enumerate() {
                *x = self.reference.log_prob(StateId(s), ActionId(a))
                    + math::dot(self.features.get(StateId(s), ActionId(a)), theta) / self.beta;
            }
            let lse = math::log_sum_exp(row.iter().copied());
            for x in row.iter_mut() {
                if *x != f64::NEG_INFINITY {
                    *x -= lse;
                }
            }
        }
        Ok(LogLinearPolicy {
            theta: theta.to_vec(),
            tabular: TabularPolicy::from_log_probs(a_n, logs)?,
        })
    }

    /// `E_{a ~ pi(.|s)} phi(s, a)`.
    fn mean_feature(&self, policy: &TabularPolicy, s: StateId, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (a, &p) in policy.row(s).iter().enumerate() {
            if p > 0.0 {
                for (o, f) in out.iter_mut().zip(self.features.get(s, ActionId(a))) {
                    *o += p * f;
                }
            }
        }
    }

    /// Gradient of `log pi_theta(tau)` with respect to `theta`:
    /// `sum_h (phi(s_h, a_h) - E_{pi_theta}[phi(s_h, .)]) / beta`.
    pub fn grad_log_prob(&self, policy: &LogLinearPolicy, tau: &Trajectory) -> Vec<f64> {
        let mut grad = vec![0.0; self.dim()];
        self.add_grad_log_prob(policy.tabular(), tau, 1.0, &mut grad);
        grad
    }

    /// `out += weight * grad log pi(tau)`.
    pub(crate) fn add_grad_log_prob(
        &self,
        policy: &TabularPolicy,
        tau: &Trajectory,
        weight: f64,
        out: &mut [f64],
    ) {
        let mut mean = vec![0.0; self.dim()];
        let scale = weight / self.beta;
        for &(s, a) in tau.steps() {
            self.mean_feature(policy, s, &mut mean);
            for ((o, f), m) in out.iter_mut().zip(self.features.get(s, a)).zip(&mean) {
                *o += scale * (f - m);
            }
        }
    }

    /// Parameters reproducing `pi_f` for a state-action function `f`, which
    /// exist exactly when the features are one-hot.
    pub fn theta_for_one_hot(&self, f: &StateActionFunction) -> Result<Vec<f64>> {
        let a_n = self.reference.num_actions();
        let n = self.reference.num_states();
        if self.dim() != n * a_n {
            return Err(Error::param("features", "not a one-hot feature map"));
        }
        let mut theta = vec![0.0; n * a_n];
        for s in 0..n {
            for a in 0..a_n {
                let phi = self.features.get(StateId(s), ActionId(a));
                let k = s * a_n + a;
                if phi[k] != 1.0 || phi.iter().filter(|x| **x != 0.0).count() != 1 {
                    return Err(Error::param("features", "not a one-hot feature map"));
                }
                theta[k] = f.get(StateId(s), ActionId(a));
            }
        }
        Ok(theta)
    }

    /// `n` parameter vectors drawn uniformly from the ball of radius `radius`.
    pub fn sample_ball(&self, n: usize, radius: f64, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.dim();
        (0..n)
            .map(|_| {
                let mut v: Vec<f64> = (0..d).map(|_| standard_normal(&mut rng)).collect();
                let nrm = math::norm(&v).max(1e-300);
                let r = radius * libm::pow(rng.random::<f64>(), 1.0 / d as f64);
                v.iter_mut().for_each(|x| *x *= r / nrm);
                v
            })
            .collect()
    }
}

/// Box-Muller draw.
pub(crate) fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    math::sqrt(-2.0 * math::ln(u1)) * libm::cos(core::f64::consts::TAU * u2)
}
