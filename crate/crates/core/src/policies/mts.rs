//! Model-based Thompson sampling.

use std::sync::Arc;

use rand::RngCore;

use super::{sample_categorical, Policy, PolicyEnv, Round};
use crate::belief::filter_reward;
use crate::model::{BeliefState, RewardModel, TransitionKernel};

/// Samples a state from the belief and returns that state's best offered arm.
pub fn mts_step(
    belief: &BeliefState,
    model: &RewardModel,
    context: usize,
    arms: &[usize],
    rng: &mut dyn RngCore,
) -> usize {
    let state = sample_categorical(belief.probs(), rng);
    model.best_arm(context, state, arms)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    /// Sample the state from the belief.
    Posterior,
    /// Always take the most likely state.
    Greedy,
}

#[derive(Debug, Clone)]
pub struct Mts {
    label: String,
    model: Arc<RewardModel>,
    kernel: Arc<TransitionKernel>,
    belief: BeliefState,
    sampling: Sampling,
}

impl Mts {
    pub fn new(label: String, env: &PolicyEnv, sampling: Sampling) -> Self {
        Self {
            label,
            model: env.model.clone(),
            kernel: env.kernel.clone(),
            belief: env.prior.clone(),
            sampling,
        }
    }
}

impl Policy for Mts {
    fn name(&self) -> &str {
        &self.label
    }

    fn select(&mut self, round: &Round<'_>, rng: &mut dyn RngCore) -> usize {
        match self.sampling {
            Sampling::Posterior => mts_step(&self.belief, &self.model, round.context, round.arms, rng),
            Sampling::Greedy => self.model.best_arm(round.context, self.belief.argmax(), round.arms),
        }
    }

    fn observe(&mut self, round: &Round<'_>, arm: usize, reward: f64) {
        self.belief = filter_reward(&self.belief, &self.kernel, &self.model, round.context, arm, reward);
    }

    fn belief(&self) -> Option<&BeliefState> {
        Some(&self.belief)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::posterior_update;
    use crate::model::presets;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn point_belief_plays_its_best_arm() {
        let model = presets::two_state(0.01);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(mts_step(&BeliefState::point(2, 0), &model, 0, &[0, 1, 2], &mut rng), 0);
            assert_eq!(mts_step(&BeliefState::point(2, 1), &model, 0, &[0, 1, 2], &mut rng), 1);
        }
    }

    #[test]
    fn uniform_belief_splits_evenly() {
        let model = presets::two_state(0.01);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let zeros = (0..n)
            .filter(|_| mts_step(&BeliefState::uniform(2), &model, 0, &[0, 1, 2], &mut rng) == 0)
            .count();
        let freq = zeros as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.01, "{freq}");
    }

    #[test]
    fn equal_evidence_keeps_belief() {
        let b = BeliefState::new(vec![0.3, 0.7]).unwrap();
        let mut cur = b.clone();
        for _ in 0..10 {
            cur = posterior_update(&cur, &TransitionKernel::identity(2), &[0.4, 0.4]).unwrap();
        }
        for (x, y) in cur.probs().iter().zip(b.probs()) {
            assert!((x - y).abs() < 1e-15);
        }
    }
}
