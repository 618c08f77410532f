//! Experiment configuration, validation and the config hash.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use xpo_core::{Clip, MinimizerConfig, TieBreak};

use crate::error::{LabError, Result};
use crate::spec::parse_seeds;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "XPO_LAB_OUT";
pub const DEFAULT_OUT: &str = "runs";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Algorithm {
    Xpo,
    OnlineDpo,
    IterativeDpo,
    OfflineDpo,
}

/// Source of the second response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Sampling {
    /// Second response from the current iterate (online and iterative DPO).
    OnPolicy,
    #[default]
    Reference,
    /// Fixed uniform policy.
    Uniform,
    Historical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Optimism {
    #[default]
    Reuse,
    Fresh,
}

/// Where `alpha` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Coefficient {
    #[default]
    Manual,
    /// Schedule with the coverability of the class.
    Cov,
    /// Schedule with a sampled SEC lower bound.
    Sec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaConfig {
    #[serde(default)]
    pub coef: Coefficient,
    /// Used when `coef = "manual"`.
    #[serde(default)]
    pub value: f64,
    /// Multiplier of the theoretical schedule.
    #[serde(default = "one")]
    pub c: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

impl Default for AlphaConfig {
    fn default() -> Self {
        Self {
            coef: Coefficient::Manual,
            value: 0.0,
            c: 1.0,
            delta: default_delta(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum TieBreakName {
    #[default]
    First,
    Last,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinimizerSettings {
    #[serde(default)]
    pub tie_break: TieBreakName,
    pub max_iters: usize,
    pub step_scale: f64,
    pub tol: f64,
    pub restarts: usize,
    pub restart_scale: f64,
}

impl Default for MinimizerSettings {
    fn default() -> Self {
        let d = MinimizerConfig::default();
        Self {
            tie_break: TieBreakName::First,
            max_iters: d.max_iters,
            step_scale: d.step_scale,
            tol: d.tol,
            restarts: d.restarts,
            restart_scale: d.restart_scale,
        }
    }
}

impl MinimizerSettings {
    pub fn to_core(self) -> MinimizerConfig {
        MinimizerConfig {
            tie_break: match self.tie_break {
                TieBreakName::First => TieBreak::First,
                TieBreakName::Last => TieBreak::Last,
                TieBreakName::Random => TieBreak::Random,
            },
            max_iters: self.max_iters,
            step_scale: self.step_scale,
            tol: self.tol,
            restarts: self.restarts,
            restart_scale: self.restart_scale,
            ..MinimizerConfig::default()
        }
    }
}

/// One experiment: an algorithm on an instance, run for every seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Builtin spec such as `prop31(c=0.125)` or a path to an instance file.
    pub instance: String,
    pub algorithm: Algorithm,
    pub beta: f64,
    #[serde(default)]
    pub alpha: AlphaConfig,
    /// `T`: updates for online loops, pairs for offline DPO.
    pub iterations: usize,
    #[serde(default = "one_usize")]
    pub batch: usize,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub optimism: Optimism,
    /// Inclusive `a..b` (or `a..=b`) or a comma-separated list.
    pub seeds: String,
    /// `pair`, `boltzmann(k=.., scale=.., seed=..)` or `loglinear`.
    #[serde(default = "default_class")]
    pub class: String,
    #[serde(default = "default_clip")]
    pub clip: [f64; 2],
    #[serde(default)]
    pub minimizer: MinimizerSettings,
    /// `exact` or `validation:N`.
    #[serde(default = "default_selection")]
    pub selection: String,
    /// Not part of the hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Not part of the hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

fn default_delta() -> f64 {
    xpo_core::trainer::AlphaInputs::DEFAULT_DELTA
}

fn default_class() -> String {
    "pair".into()
}

fn default_clip() -> [f64; 2] {
    [Clip::DEFAULT.lo, Clip::DEFAULT.hi]
}

fn default_selection() -> String {
    "exact".into()
}

/// Final-iterate selection rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionRule {
    Exact,
    Validation(usize),
}

impl ExperimentConfig {
    pub fn new(instance: &str, algorithm: Algorithm, beta: f64, iterations: usize, seeds: &str) -> Self {
        Self {
            instance: instance.into(),
            algorithm,
            beta,
            alpha: AlphaConfig::default(),
            iterations,
            batch: 1,
            sampling: match algorithm {
                Algorithm::OnlineDpo | Algorithm::IterativeDpo => Sampling::OnPolicy,
                _ => Sampling::Reference,
            },
            optimism: Optimism::Reuse,
            seeds: seeds.into(),
            class: default_class(),
            clip: default_clip(),
            minimizer: MinimizerSettings::default(),
            selection: default_selection(),
            output: None,
            workers: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| LabError::validation(format!("config: {}", e.message())))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| LabError::validation(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs serialize")
    }

    pub fn seed_list(&self) -> Result<Vec<u64>> {
        parse_seeds(&self.seeds)
    }

    pub fn clip(&self) -> Result<Clip> {
        Clip::new(self.clip[0], self.clip[1]).map_err(|e| LabError::validation(format!("clip: {e}")))
    }

    pub fn selection_rule(&self) -> Result<SelectionRule> {
        match self.selection.as_str() {
            "exact" => Ok(SelectionRule::Exact),
            s => s
                .strip_prefix("validation:")
                .and_then(|n| n.parse().ok())
                .filter(|&n: &usize| n > 0)
                .map(SelectionRule::Validation)
                .ok_or_else(|| LabError::validation(format!("selection: expected `exact` or `validation:N`, got `{s}`"))),
        }
    }

    /// Checks every field that can be checked without building the instance.
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(LabError::validation(format!("{field}: {msg}")));
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("beta", format!("must be positive and finite, got {}", self.beta));
        }
        if self.batch == 0 {
            return bad("batch", "must be positive".into());
        }
        if self.algorithm == Algorithm::OfflineDpo && self.iterations == 0 {
            return bad("iterations", "offline DPO needs at least one pair".into());
        }
        let a = &self.alpha;
        if !(a.value >= 0.0 && a.value.is_finite()) {
            return bad("alpha.value", format!("must be non-negative, got {}", a.value));
        }
        if !(a.c > 0.0 && a.c.is_finite()) {
            return bad("alpha.c", format!("must be positive, got {}", a.c));
        }
        if !(a.delta > 0.0 && a.delta < 1.0) {
            return bad("alpha.delta", format!("must lie in (0, 1), got {}", a.delta));
        }
        if self.algorithm != Algorithm::Xpo && (a.coef != Coefficient::Manual || a.value != 0.0) {
            return bad("alpha", "only XPO has an optimism coefficient".into());
        }
        match (self.algorithm, self.sampling) {
            (Algorithm::OnlineDpo, Sampling::OnPolicy | Sampling::Reference) => {}
            (Algorithm::OnlineDpo, s) => return bad("sampling", format!("online DPO supports on_policy or reference, got {s:?}")),
            (Algorithm::IterativeDpo, Sampling::OnPolicy) => {}
            (Algorithm::IterativeDpo, s) => return bad("sampling", format!("iterative DPO is on-policy, got {s:?}")),
            (Algorithm::Xpo, Sampling::OnPolicy) => return bad("sampling", "XPO needs reference, uniform or historical".into()),
            (Algorithm::OfflineDpo, Sampling::Reference) => {}
            (Algorithm::OfflineDpo, s) => return bad("sampling", format!("offline DPO samples from the reference, got {s:?}")),
            _ => {}
        }
        if self.batch != 1 && self.algorithm != Algorithm::IterativeDpo {
            return bad("batch", "only iterative DPO takes a batch size".into());
        }
        self.seed_list()?;
        self.clip()?;
        self.selection_rule()?;
        self.minimizer.to_core().validate().map_err(|e| LabError::validation(format!("minimizer: {e}")))?;
        if self.workers == Some(0) {
            return bad("workers", "must be positive".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form (sorted keys) of every field that
    /// affects per-seed results; `seeds`, `output` and `workers` are excluded.
    pub fn hash(&self) -> String {
        let mut keyed = self.clone();
        keyed.seeds = String::new();
        keyed.output = None;
        keyed.workers = None;
        let value = serde_json::to_value(&keyed).expect("configs serialize");
        let canonical = serde_json::to_string(&value).expect("values serialize");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn short_hash(&self) -> String {
        self.hash()[..16].to_string()
    }

    /// `output`, else `$XPO_LAB_OUT`, else `./runs`.
    pub fn output_root(&self) -> PathBuf {
        self.output
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }
}
