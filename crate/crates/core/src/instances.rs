//! Seeded instance and policy generators.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dcmdp::{
    make_linear_dcmdp, make_token_mdp, Dcmdp, DcmdpSpec, FeatureMap, LinearSpec, TabularPolicy,
    TokenSpec,
};
use crate::error::{Error, Result};
use crate::math;

/// Random layered tabular instance: `states_per_layer` states in each of
/// `horizon` layers, uniformly random successors and per-step rewards in
/// `[0, 1/H]`, so totals lie in `[0, 1]` and `rmax = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomTabular {
    pub states_per_layer: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub seed: u64,
}

fn normalized<R: Rng>(n: usize, rng: &mut R, floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| floor + rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total).collect()
}

fn random_layers<R: Rng>(
    states_per_layer: usize,
    num_actions: usize,
    horizon: usize,
    rng: &mut R,
) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let layers: Vec<Vec<usize>> = (0..horizon)
        .map(|h| (h * states_per_layer..(h + 1) * states_per_layer).collect())
        .collect();
    let mut next = Vec::with_capacity(horizon * states_per_layer);
    for h in 0..horizon {
        for _ in 0..states_per_layer {
            if h + 1 == horizon {
                next.push(Vec::new());
            } else {
                next.push(
                    (0..num_actions)
                        .map(|_| (h + 1) * states_per_layer + rng.random_range(0..states_per_layer))
                        .collect(),
                );
            }
        }
    }
    (layers, next)
}

pub fn random_tabular(p: &RandomTabular) -> Result<Dcmdp> {
    if p.states_per_layer == 0 || p.num_actions == 0 || p.horizon == 0 {
        return Err(Error::param("random_tabular", "all sizes must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let (layers, next) = random_layers(p.states_per_layer, p.num_actions, p.horizon, &mut rng);
    let rho = normalized(p.states_per_layer, &mut rng, 0.1);
    let scale = 1.0 / p.horizon as f64;
    let reward = (0..p.states_per_layer * p.horizon)
        .map(|_| (0..p.num_actions).map(|_| scale * rng.random::<f64>()).collect())
        .collect();
    Dcmdp::new(DcmdpSpec {
        horizon: p.horizon,
        num_actions: p.num_actions,
        layers,
        rho,
        next,
        reward,
        rmax: 1.0,
    })
}

/// Random instance with a linear reward over random non-negative unit
/// features of dimension `dim`. Rewards lie in `[0, 1]`; `rmax = H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomLinear {
    pub dim: usize,
    pub states_per_layer: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub seed: u64,
}

pub fn random_linear(p: &RandomLinear) -> Result<Dcmdp> {
    if p.dim == 0 || p.states_per_layer == 0 || p.num_actions == 0 || p.horizon == 0 {
        return Err(Error::param("random_linear", "all sizes must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let (layers, next) = random_layers(p.states_per_layer, p.num_actions, p.horizon, &mut rng);
    let rho = normalized(p.states_per_layer, &mut rng, 0.1);
    let n = p.states_per_layer * p.horizon;
    let mut values = Vec::with_capacity(n * p.num_actions * p.dim);
    for _ in 0..n * p.num_actions {
        let v: Vec<f64> = (0..p.dim).map(|_| rng.random::<f64>()).collect();
        let nrm = math::norm(&v).max(1e-300);
        values.extend(v.iter().map(|x| x / nrm));
    }
    let weights: Vec<f64> = (0..p.dim).map(|_| rng.random::<f64>()).collect();
    let nrm = math::norm(&weights).max(1e-300);
    let weights = weights.iter().map(|x| x / nrm).collect();
    make_linear_dcmdp(LinearSpec {
        horizon: p.horizon,
        num_actions: p.num_actions,
        layers,
        rho,
        next,
        features: FeatureMap::new(p.dim, p.num_actions, values)?,
        reward_weights: weights,
        rmax: p.horizon as f64,
    })
}

/// Random token-level instance with terminal rewards in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomToken {
    pub vocab: usize,
    pub horizon: usize,
    pub prompts: usize,
    pub seed: u64,
}

pub fn random_token(p: &RandomToken) -> Result<Dcmdp> {
    if p.prompts == 0 {
        return Err(Error::param("prompts", "at least one prompt is required"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let spec = TokenSpec {
        prompt_probs: normalized(p.prompts, &mut rng, 0.1),
        vocab: p.vocab,
        horizon: p.horizon,
        rmax: 1.0,
    };
    let count = p.prompts * p.vocab.pow(p.horizon as u32);
    let terminal: Vec<f64> = (0..count).map(|_| rng.random::<f64>()).collect();
    let horizon = p.horizon;
    let vocab = p.vocab;
    make_token_mdp(&spec, |prompt, prefix, token| {
        if prefix.len() + 1 == horizon {
            let code = prefix.iter().fold(prompt, |acc, &t| acc * vocab + t) * vocab + token;
            terminal[code]
        } else {
            0.0
        }
    })
}

/// Full-support random policy. Each row mixes a uniformly random
/// distribution with weight `1 - floor` and the uniform one with `floor`.
pub fn random_policy(num_states: usize, num_actions: usize, floor: f64, seed: u64) -> TabularPolicy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probs = vec![0.0; num_states * num_actions];
    for row in probs.chunks_mut(num_actions) {
        let raw = normalized(num_actions, &mut rng, 0.0);
        for (p, r) in row.iter_mut().zip(raw) {
            *p = (1.0 - floor) * r + floor / num_actions as f64;
        }
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= total);
    }
    TabularPolicy::from_probs(num_actions, probs).expect("rows are normalized")
}
