//! Bradley-Terry preferences over trajectory pairs.

use alloc::vec::Vec;

use rand::RngCore;

use crate::dcmdp::{StateId, Trajectory};
use crate::error::{Error, Result};
use crate::math;
use crate::rng::uniform;

/// `exp(r) / (exp(r) + exp(r_other)) = sigmoid(r - r_other)`.
///
/// `bt_prob(a, b) + bt_prob(b, a) == 1.0` holds exactly.
pub fn bt_prob(r: f64, r_other: f64) -> f64 {
    math::sigmoid(r - r_other)
}

/// A labeled comparison. Both trajectories start from `initial_state`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferencePair {
    pub tau_plus: Trajectory,
    pub tau_minus: Trajectory,
    pub initial_state: StateId,
    /// True iff the first trajectory handed to [`label_pair`] won.
    pub raw_draw: bool,
    /// Probability that the first trajectory wins.
    pub p_win: f64,
}

impl PreferencePair {
    pub fn is_degenerate(&self) -> bool {
        self.tau_plus.steps() == self.tau_minus.steps()
    }
}

/// Draws `y ~ Bernoulli(bt_prob(r(tau), r(tau_other)))` from one uniform
/// and orders the pair by the outcome. Identical trajectories are kept.
pub fn label_pair<R: RngCore + ?Sized>(
    tau: &Trajectory,
    tau_other: &Trajectory,
    rng: &mut R,
) -> Result<PreferencePair> {
    if tau.initial_state() != tau_other.initial_state() {
        return Err(Error::InitialStateMismatch {
            left: tau.initial_state().0,
            right: tau_other.initial_state().0,
        });
    }
    let p_win = bt_prob(tau.total_reward(), tau_other.total_reward());
    let raw_draw = uniform(rng) < p_win;
    let (tau_plus, tau_minus) = if raw_draw {
        (tau.clone(), tau_other.clone())
    } else {
        (tau_other.clone(), tau.clone())
    };
    Ok(PreferencePair {
        tau_plus,
        tau_minus,
        initial_state: tau.initial_state(),
        raw_draw,
        p_win,
    })
}

/// Append-only sequence of pairs, each tagged with the iteration that
/// produced it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PreferenceDataset {
    pairs: Vec<PreferencePair>,
    origins: Vec<usize>,
}

impl PreferenceDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, pair: PreferencePair, iteration: usize) {
        self.pairs.push(pair);
        self.origins.push(iteration);
    }

    pub fn pairs(&self) -> &[PreferencePair] {
        &self.pairs
    }

    pub fn origins(&self) -> &[usize] {
        &self.origins
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PreferencePair, usize)> {
        self.pairs.iter().zip(self.origins.iter().copied())
    }
}

impl FromIterator<PreferencePair> for PreferenceDataset {
    fn from_iter<I: IntoIterator<Item = PreferencePair>>(iter: I) -> Self {
        let mut d = Self::new();
        for p in iter {
            d.push(p, 0);
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dcmdp::{make_token_mdp, ActionId, Dcmdp, TokenSpec};
    use crate::rng::{Purpose, SeedStreams};

    fn two_prompt_bandit() -> Dcmdp {
        make_token_mdp(
            &TokenSpec {
                prompt_probs: alloc::vec![0.5, 0.5],
                vocab: 2,
                horizon: 1,
                rmax: 1.0,
            },
            |_, _, t| if t == 0 { 1.0 } else { 0.5 },
        )
        .unwrap()
    }

    #[test]
    fn bt_examples() {
        assert_eq!(bt_prob(0.3, 0.3), 0.5);
        assert!((bt_prob(1.0, 0.5) - 0.622459).abs() < 1e-6);
        for (a, b) in [(1.0, 0.5), (-3.0, 40.0), (0.1, 0.1 + 1e-17), (700.0, -700.0)] {
            assert_eq!(bt_prob(a, b) + bt_prob(b, a), 1.0);
        }
    }

    #[test]
    fn label_orders_by_draw() {
        let mdp = two_prompt_bandit();
        let a = mdp.trajectory(StateId(0), &[ActionId(0)]).unwrap();
        let b = mdp.trajectory(StateId(0), &[ActionId(1)]).unwrap();
        let streams = SeedStreams::new(3);
        let mut wins = 0usize;
        let n = 100_000;
        for i in 0..n {
            let mut rng = streams.stream(i, 0, Purpose::Label);
            let pair = label_pair(&a, &b, &mut rng).unwrap();
            if pair.raw_draw {
                assert_eq!(pair.tau_plus, a);
                wins += 1;
            } else {
                assert_eq!(pair.tau_plus, b);
            }
        }
        let freq = wins as f64 / n as f64;
        assert!((freq - 0.6225).abs() < 0.005, "{freq}");
    }

    #[test]
    fn mismatched_initial_states_rejected() {
        let mdp = two_prompt_bandit();
        let a = mdp.trajectory(StateId(0), &[ActionId(0)]).unwrap();
        let b = mdp.trajectory(StateId(1), &[ActionId(0)]).unwrap();
        let mut rng = SeedStreams::new(0).stream(0, 0, Purpose::Label);
        assert!(matches!(
            label_pair(&a, &b, &mut rng),
            Err(Error::InitialStateMismatch { .. })
        ));
    }

    #[test]
    fn degenerate_pair_kept() {
        let mdp = two_prompt_bandit();
        let a = mdp.trajectory(StateId(1), &[ActionId(1)]).unwrap();
        let mut rng = SeedStreams::new(0).stream(0, 0, Purpose::Label);
        let pair = label_pair(&a, &a, &mut rng).unwrap();
        assert!(pair.is_degenerate());
        assert_eq!(pair.p_win, 0.5);
    }
}
