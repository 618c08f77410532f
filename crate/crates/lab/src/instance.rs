//! Builtin instance registry and the instance file format.

use std::path::Path;

use serde::{Deserialize, Serialize};
use xpo_core::diagnostics::counterexample_instance;
use xpo_core::instances::{random_linear, random_policy, random_tabular, random_token, RandomLinear, RandomTabular, RandomToken};
use xpo_core::{ActionId, Dcmdp, DcmdpSpec, FeatureMap, StateId, TabularPolicy};

use crate::error::{LabError, Result};
use crate::spec::CallSpec;

/// Row floor of the random reference policies attached to random builtins.
pub const REFERENCE_FLOOR: f64 = 0.5;

/// An instance together with its reference policy.
#[derive(Debug, Clone)]
pub struct Instance {
    pub mdp: Dcmdp,
    pub reference: TabularPolicy,
}

/// True when `s` names a file rather than a builtin.
pub fn is_path(s: &str) -> bool {
    s.ends_with(".toml") || s.contains('/') || s.contains('\\')
}

/// Resolves `prop31(c=..)`, `random_tabular(states=.., actions=.., horizon=.., seed=..)`,
/// `linear(d=.., states=.., actions=.., horizon=.., seed=..)`,
/// `token(vocab=.., horizon=.., prompts=.., seed=..)` or an instance file.
/// `beta` only matters for `prop31`, whose reference depends on it.
pub fn load_instance(s: &str, beta: f64) -> Result<Instance> {
    if is_path(s) {
        return read_instance_file(Path::new(s));
    }
    let call = CallSpec::parse(s)?;
    match call.name.as_str() {
        "prop31" => {
            call.check_keys(&["c"])?;
            let ce = counterexample_instance(beta, call.get("c", 0.125)?)?;
            Ok(Instance {
                mdp: ce.mdp,
                reference: ce.reference,
            })
        }
        "random_tabular" => {
            call.check_keys(&["states", "actions", "horizon", "seed"])?;
            let seed = call.get("seed", 0u64)?;
            let mdp = random_tabular(&RandomTabular {
                states_per_layer: call.get("states", 3)?,
                num_actions: call.get("actions", 2)?,
                horizon: call.get("horizon", 3)?,
                seed,
            })?;
            Ok(with_random_reference(mdp, seed))
        }
        "linear" => {
            call.check_keys(&["d", "states", "actions", "horizon", "seed"])?;
            let seed = call.get("seed", 0u64)?;
            let mdp = random_linear(&RandomLinear {
                dim: call.get("d", 4)?,
                states_per_layer: call.get("states", 3)?,
                num_actions: call.get("actions", 2)?,
                horizon: call.get("horizon", 2)?,
                seed,
            })?;
            Ok(with_random_reference(mdp, seed))
        }
        "token" => {
            call.check_keys(&["vocab", "horizon", "prompts", "seed"])?;
            let seed = call.get("seed", 0u64)?;
            let mdp = random_token(&RandomToken {
                vocab: call.get("vocab", 2)?,
                horizon: call.get("horizon", 2)?,
                prompts: call.get("prompts", 2)?,
                seed,
            })?;
            Ok(with_random_reference(mdp, seed))
        }
        other => Err(LabError::validation(format!(
            "unknown instance `{other}` (expected prop31, random_tabular, linear, token or a .toml path)"
        ))),
    }
}

fn with_random_reference(mdp: Dcmdp, seed: u64) -> Instance {
    let reference = random_policy(mdp.num_states(), mdp.num_actions(), REFERENCE_FLOOR, seed.wrapping_add(1));
    Instance { mdp, reference }
}

/// On-disk form of an instance. Missing `reference` means uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub horizon: usize,
    pub num_actions: usize,
    pub rmax: f64,
    pub layers: Vec<Vec<usize>>,
    pub rho: Vec<f64>,
    pub next: Vec<Vec<usize>>,
    pub reward: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<FeatureBlock>,
}

/// `values[s * num_actions + a]` is the feature vector of `(s, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureBlock {
    pub dim: usize,
    pub values: Vec<Vec<f64>>,
}

impl InstanceFile {
    pub fn from_instance(inst: &Instance) -> Self {
        let mdp = &inst.mdp;
        let n = mdp.num_states();
        let na = mdp.num_actions();
        let actions = |s: usize| (0..na).map(move |a| (StateId(s), ActionId(a)));
        Self {
            horizon: mdp.horizon(),
            num_actions: na,
            rmax: mdp.rmax(),
            layers: mdp.layers().iter().map(|l| l.iter().map(|s| s.0).collect()).collect(),
            rho: mdp.rho().to_vec(),
            next: (0..n)
                .map(|s| actions(s).filter_map(|(s, a)| mdp.next(s, a).map(|x| x.0)).collect())
                .collect(),
            reward: (0..n).map(|s| actions(s).map(|(s, a)| mdp.reward(s, a)).collect()).collect(),
            reference: Some((0..n).map(|s| inst.reference.row(StateId(s)).to_vec()).collect()),
            features: mdp.features().map(|f| FeatureBlock {
                dim: f.dim(),
                values: (0..n).flat_map(actions).map(|(s, a)| f.get(s, a).to_vec()).collect(),
            }),
        }
    }

    pub fn into_instance(self) -> Result<Instance> {
        let n: usize = self.layers.iter().map(Vec::len).sum();
        let mut mdp = Dcmdp::new(DcmdpSpec {
            horizon: self.horizon,
            num_actions: self.num_actions,
            layers: self.layers,
            rho: self.rho,
            next: self.next,
            reward: self.reward,
            rmax: self.rmax,
        })?;
        if let Some(block) = self.features {
            if block.values.len() != n * self.num_actions {
                return Err(field_error("features.values", "expected one vector per state-action pair"));
            }
            if let Some(i) = block.values.iter().position(|v| v.len() != block.dim) {
                return Err(field_error(&format!("features.values[{i}]"), "length differs from `dim`"));
            }
            let flat = block.values.into_iter().flatten().collect();
            mdp = mdp.with_features(FeatureMap::new(block.dim, self.num_actions, flat)?)?;
        }
        let reference = match self.reference {
            None => TabularPolicy::uniform(n, self.num_actions),
            Some(rows) => {
                if rows.len() != n {
                    return Err(field_error("reference", &format!("expected {n} rows, got {}", rows.len())));
                }
                TabularPolicy::from_rows(&rows).map_err(|e| field_error("reference", &e.to_string()))?
            }
        };
        mdp.check_policy(&reference)
            .map_err(|e| field_error("reference", &e.to_string()))?;
        Ok(Instance { mdp, reference })
    }
}

fn field_error(path: &str, message: &str) -> LabError {
    LabError::Core(xpo_core::Error::InvalidInstance {
        path: path.into(),
        message: message.into(),
    })
}

pub fn read_instance_file(path: &Path) -> Result<Instance> {
    let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    let file: InstanceFile = toml::from_str(&text)
        .map_err(|e| LabError::validation(format!("{}: {}", path.display(), e.message())))?;
    file.into_instance()
        .map_err(|e| LabError::validation(format!("{}: {e}", path.display())))
}

pub fn write_instance_file(path: &Path, inst: &Instance) -> Result<()> {
    let text = toml::to_string(&InstanceFile::from_instance(inst))
        .map_err(|e| LabError::Runtime(format!("cannot serialize instance: {e}")))?;
    std::fs::write(path, text).map_err(|e| LabError::io(path, e))
}
