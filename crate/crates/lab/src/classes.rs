//! Policy class specs.

use xpo_core::rng::{uniform, Purpose, SeedStreams};
use xpo_core::softdp::{boltzmann_policy, solve_soft_dp, StateActionFunction};
use xpo_core::{FeatureMap, FinitePolicyClass, LogLinearFamily, PolicyClass};

use crate::error::{LabError, Result};
use crate::instance::Instance;
use crate::spec::CallSpec;

/// Builds a class from `pair`, `boltzmann(k=.., scale=.., seed=..)` or
/// `loglinear`.
///
/// `pair` is `{ref, pi*_beta}`. `boltzmann` has `k >= 2` members: `ref`,
/// `pi*_beta`, then Boltzmann policies of `Q*_beta` perturbed by uniform
/// noise in `[-scale, scale]`. `loglinear` uses the instance features, or
/// one-hot features when the instance has none.
pub fn build_class(spec: &str, inst: &Instance, beta: f64) -> Result<PolicyClass> {
    let call = CallSpec::parse(spec)?;
    match call.name.as_str() {
        "pair" => {
            call.check_keys(&[])?;
            let star = solve_soft_dp(&inst.mdp, beta, &inst.reference)?.policy;
            Ok(PolicyClass::Finite(FinitePolicyClass::new(vec![inst.reference.clone(), star])?))
        }
        "boltzmann" => {
            call.check_keys(&["k", "scale", "seed"])?;
            let k: usize = call.get("k", 8)?;
            let scale: f64 = call.get("scale", 0.5)?;
            let seed: u64 = call.get("seed", 0)?;
            if k < 2 {
                return Err(LabError::validation("boltzmann: k must be at least 2"));
            }
            if !(scale >= 0.0 && scale.is_finite()) {
                return Err(LabError::validation("boltzmann: scale must be non-negative"));
            }
            let sol = solve_soft_dp(&inst.mdp, beta, &inst.reference)?;
            let mut members = vec![inst.reference.clone(), sol.policy.clone()];
            let streams = SeedStreams::new(seed);
            let na = inst.mdp.num_actions();
            for i in 2..k {
                let mut rng = streams.stream(i as u64, 0, Purpose::Diagnostics);
                let values = sol
                    .q
                    .values()
                    .iter()
                    .map(|q| q + scale * (2.0 * uniform(&mut rng) - 1.0))
                    .collect();
                let f = StateActionFunction::new(na, values)?;
                members.push(boltzmann_policy(&f, beta, &inst.reference)?);
            }
            Ok(PolicyClass::Finite(FinitePolicyClass::new(members)?))
        }
        "loglinear" => {
            call.check_keys(&[])?;
            let features = inst
                .mdp
                .features()
                .cloned()
                .unwrap_or_else(|| FeatureMap::one_hot(inst.mdp.num_states(), inst.mdp.num_actions()));
            Ok(PolicyClass::LogLinear(LogLinearFamily::new(features, beta, inst.reference.clone())?))
        }
        other => Err(LabError::validation(format!(
            "class: unknown class `{other}` (expected pair, boltzmann or loglinear)"
        ))),
    }
}
