//! Closed-form quantities used by the policies: Bayesian belief filtering,
//! belief entropy, Gaussian KL statistics, the information ratio used to pick
//! an information-gathering arm, the single-step regret bound and the
//! expected dwell time of the latent chain.
//!
//! Everything here is a pure function of immutable inputs.

use std::f64::consts::PI;

use thiserror::Error;

use crate::model::{BeliefState, RewardModel, TransitionKernel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BeliefError {
    #[error("likelihood vector has {found} entries, expected {expected}")]
    Length { expected: usize, found: usize },
    #[error("likelihood entry {index} = {value} is negative or NaN")]
    BadLikelihood { index: usize, value: f64 },
    #[error("evidence has zero posterior mass under every state")]
    DegenerateEvidence,
    #[error("non-finite input to the Gaussian density")]
    NonFinite,
    #[error("standard deviation must be > 0 (got {0})")]
    NonPositiveStd(f64),
}

/// Normal density of `reward` under `N(mean, std^2)`.
pub fn gaussian_likelihood(reward: f64, mean: f64, std: f64) -> Result<f64, BeliefError> {
    if !(reward.is_finite() && mean.is_finite() && std.is_finite()) {
        return Err(BeliefError::NonFinite);
    }
    if std <= 0.0 {
        return Err(BeliefError::NonPositiveStd(std));
    }
    Ok(gaussian_log_density(reward, mean, std).exp())
}

/// Log of the normal density; inputs are assumed valid.
#[inline]
pub fn gaussian_log_density(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    -0.5 * z * z - std.ln() - 0.5 * (2.0 * PI).ln()
}

/// Pushes a belief through the transition kernel without new evidence.
pub fn propagate(belief: &BeliefState, kernel: &TransitionKernel) -> BeliefState {
    propagate_weights(belief.probs(), kernel)
}

fn propagate_weights(weights: &[f64], kernel: &TransitionKernel) -> BeliefState {
    let n = kernel.num_states();
    let mut next = vec![0.0; n];
    for (from, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (to, &p) in kernel.row(from).iter().enumerate() {
            next[to] += w * p;
        }
    }
    BeliefState::from_weights(next).expect("propagating a normalized belief keeps its mass")
}

/// Bayes filter step: the likelihood weights the current (pre-transition)
/// state, then the weighted belief is pushed through the kernel.
///
/// `P'(s') ∝ Σ_s P(s) · T(s, s') · ℓ(s)`
pub fn posterior_update(
    belief: &BeliefState,
    kernel: &TransitionKernel,
    likelihoods: &[f64],
) -> Result<BeliefState, BeliefError> {
    if likelihoods.len() != belief.len() {
        return Err(BeliefError::Length {
            expected: belief.len(),
            found: likelihoods.len(),
        });
    }
    if let Some((index, &value)) = likelihoods
        .iter()
        .enumerate()
        .find(|(_, l)| l.is_nan() || **l < 0.0)
    {
        return Err(BeliefError::BadLikelihood { index, value });
    }
    let weighted: Vec<f64> = belief
        .probs()
        .iter()
        .zip(likelihoods)
        .map(|(p, l)| p * l)
        .collect();
    let weighted = BeliefState::from_weights(weighted).ok_or(BeliefError::DegenerateEvidence)?;
    Ok(propagate(&weighted, kernel))
}

/// Same update as [`posterior_update`] with log-likelihoods. The per-step
/// maximum over states with positive belief is subtracted before
/// exponentiating, so arbitrarily peaked densities do not underflow.
pub fn posterior_update_log(
    belief: &BeliefState,
    kernel: &TransitionKernel,
    log_likelihoods: &[f64],
) -> Result<BeliefState, BeliefError> {
    if log_likelihoods.len() != belief.len() {
        return Err(BeliefError::Length {
            expected: belief.len(),
            found: log_likelihoods.len(),
        });
    }
    if log_likelihoods.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
        return Err(BeliefError::NonFinite);
    }
    let max = belief
        .probs()
        .iter()
        .zip(log_likelihoods)
        .filter(|(p, _)| **p > 0.0)
        .map(|(_, l)| *l)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(BeliefError::DegenerateEvidence);
    }
    let weighted: Vec<f64> = belief
        .probs()
        .iter()
        .zip(log_likelihoods)
        .map(|(p, l)| if *p > 0.0 { p * (l - max).exp() } else { 0.0 })
        .collect();
    let weighted = BeliefState::from_weights(weighted).ok_or(BeliefError::DegenerateEvidence)?;
    Ok(propagate(&weighted, kernel))
}

/// Log-likelihood of an observed reward under every state.
pub fn reward_log_likelihoods(
    model: &RewardModel,
    context: usize,
    arm: usize,
    reward: f64,
) -> Vec<f64> {
    (0..model.num_states())
        .map(|s| gaussian_log_density(reward, model.mean(arm, context, s), model.std(arm, context, s)))
        .collect()
}

/// Live filtering step used by the policies. Degenerate evidence falls back
/// to the transition-propagated prior.
pub fn filter_reward(
    belief: &BeliefState,
    kernel: &TransitionKernel,
    model: &RewardModel,
    context: usize,
    arm: usize,
    reward: f64,
) -> BeliefState {
    let ll = reward_log_likelihoods(model, context, arm, reward);
    posterior_update_log(belief, kernel, &ll).unwrap_or_else(|_| propagate(belief, kernel))
}

/// Shannon entropy in bits, with `0 log 0 = 0`.
pub fn entropy(belief: &BeliefState) -> f64 {
    let h: f64 = belief
        .probs()
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum();
    h.max(0.0)
}

/// `KL(N(mean1, std1^2) || N(mean2, std2^2))` in nats.
pub fn gaussian_kl(mean1: f64, std1: f64, mean2: f64, std2: f64) -> f64 {
    let d = mean1 - mean2;
    let kl = (std2 / std1).ln() + (std1 * std1 + d * d) / (2.0 * std2 * std2) - 0.5;
    kl.max(0.0)
}

/// Per-arm information statistics over an arm set.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoArmStats {
    /// Arms the statistics refer to, in order.
    pub arms: Vec<usize>,
    pub mean_kl: Vec<f64>,
    pub mean_gap: Vec<f64>,
    /// `mean_kl / mean_gap^2`; `+inf` for an informative zero-gap arm and
    /// `NaN` for an arm excluded from the argmax (zero gap, zero KL).
    pub ratio: Vec<f64>,
}

/// Average KL between `arm` and every other arm in `arms`, averaged over
/// contexts and states with the `1/|X|`, `1/|S|`, `1/|A|` factors.
///
/// Each term is `KL(other || arm)`: how sharply `arm`'s own reward
/// distribution rejects rewards produced by the rest of the set.
pub fn mean_pairwise_kl_among(model: &RewardModel, arm: usize, arms: &[usize]) -> f64 {
    let mut total = 0.0;
    for x in 0..model.num_contexts() {
        for s in 0..model.num_states() {
            let (m_a, s_a) = (model.mean(arm, x, s), model.std(arm, x, s));
            let inner: f64 = arms
                .iter()
                .filter(|&&j| j != arm)
                .map(|&j| gaussian_kl(model.mean(j, x, s), model.std(j, x, s), m_a, s_a))
                .sum();
            total += inner / arms.len() as f64;
        }
    }
    total / (model.num_contexts() * model.num_states()) as f64
}

pub fn mean_pairwise_kl(model: &RewardModel, arm: usize) -> f64 {
    mean_pairwise_kl_among(model, arm, &model.all_arms())
}

/// Average mean-reward difference `μ(arm) − μ(other)` with the same
/// normalization as [`mean_pairwise_kl_among`]. Sign is preserved.
pub fn mean_pairwise_gap_among(model: &RewardModel, arm: usize, arms: &[usize]) -> f64 {
    let mut total = 0.0;
    for x in 0..model.num_contexts() {
        for s in 0..model.num_states() {
            let m_a = model.mean(arm, x, s);
            let inner: f64 = arms
                .iter()
                .filter(|&&j| j != arm)
                .map(|&j| m_a - model.mean(j, x, s))
                .sum();
            total += inner / arms.len() as f64;
        }
    }
    total / (model.num_contexts() * model.num_states()) as f64
}

pub fn mean_pairwise_gap(model: &RewardModel, arm: usize) -> f64 {
    mean_pairwise_gap_among(model, arm, &model.all_arms())
}

const ZERO_GAP: f64 = 1e-12;

/// Scores every arm in `arms` and returns the one maximizing
/// `mean_kl / mean_gap^2` (first in `arms` on ties).
pub fn best_info_arm_among(model: &RewardModel, arms: &[usize]) -> (usize, InfoArmStats) {
    let mean_kl: Vec<f64> = arms
        .iter()
        .map(|&a| mean_pairwise_kl_among(model, a, arms))
        .collect();
    let mean_gap: Vec<f64> = arms
        .iter()
        .map(|&a| mean_pairwise_gap_among(model, a, arms))
        .collect();
    let ratio: Vec<f64> = mean_kl
        .iter()
        .zip(&mean_gap)
        .map(|(&kl, &gap)| {
            if gap.abs() > ZERO_GAP {
                kl / (gap * gap)
            } else if kl > 0.0 {
                f64::INFINITY
            } else {
                f64::NAN
            }
        })
        .collect();
    let mut best: Option<usize> = None;
    for (i, &r) in ratio.iter().enumerate() {
        if r.is_nan() {
            continue;
        }
        if best.is_none_or(|b| r > ratio[b]) {
            best = Some(i);
        }
    }
    let best = arms[best.unwrap_or(0)];
    (
        best,
        InfoArmStats {
            arms: arms.to_vec(),
            mean_kl,
            mean_gap,
            ratio,
        },
    )
}

pub fn best_info_arm(model: &RewardModel) -> (usize, InfoArmStats) {
    best_info_arm_among(model, &model.all_arms())
}

/// Largest spread between the best and worst arm mean in any state (and context).
pub fn single_step_regret_bound_among(model: &RewardModel, arms: &[usize]) -> f64 {
    let mut bound: f64 = 0.0;
    for x in 0..model.num_contexts() {
        for s in 0..model.num_states() {
            let (lo, hi) = arms.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &a| {
                let m = model.mean(a, x, s);
                (lo.min(m), hi.max(m))
            });
            bound = bound.max(hi - lo);
        }
    }
    bound
}

pub fn single_step_regret_bound(model: &RewardModel) -> f64 {
    single_step_regret_bound_among(model, &model.all_arms())
}

/// Belief-weighted expected number of steps before the chain leaves its
/// current state, `Σ_s P(s) / (1 − P(s|s))`, with each state's dwell time
/// capped at `horizon_cap` (a state that never leaves dwells for the cap).
pub fn expected_dwell_time(kernel: &TransitionKernel, belief: &BeliefState, horizon_cap: f64) -> f64 {
    belief
        .probs()
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(s, &p)| {
            // leave probability from the off-diagonal entries directly
            let leave: f64 = kernel
                .row(s)
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != s)
                .map(|(_, &q)| q)
                .sum();
            let dwell = if leave > 0.0 { 1.0 / leave } else { f64::INFINITY };
            p * dwell.min(horizon_cap)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn belief(p: &[f64]) -> BeliefState {
        BeliefState::new(p.to_vec()).unwrap()
    }

    #[test]
    fn posterior_examples() {
        let id = TransitionKernel::identity(2);
        let b = belief(&[0.5, 0.5]);
        assert_eq!(posterior_update(&b, &id, &[1.0, 1.0]).unwrap().probs(), &[0.5, 0.5]);
        let p = posterior_update(&b, &id, &[0.8, 0.2]).unwrap();
        assert_relative_eq!(p.probs()[0], 0.8, epsilon = 1e-15);
        assert_relative_eq!(p.probs()[1], 0.2, epsilon = 1e-15);
        let flip = TransitionKernel::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let p = posterior_update(&belief(&[1.0, 0.0]), &flip, &[1.0, 1.0]).unwrap();
        assert_eq!(p.probs(), &[0.0, 1.0]);
    }

    #[test]
    fn posterior_errors() {
        let id = TransitionKernel::identity(2);
        let b = belief(&[1.0, 0.0]);
        assert_eq!(
            posterior_update(&b, &id, &[0.0, 1.0]),
            Err(BeliefError::DegenerateEvidence)
        );
        assert!(posterior_update(&b, &id, &[1.0]).is_err());
        assert!(posterior_update(&b, &id, &[-1.0, 1.0]).is_err());
        assert_eq!(
            posterior_update_log(&b, &id, &[f64::NEG_INFINITY, 0.0]),
            Err(BeliefError::DegenerateEvidence)
        );
    }

    #[test]
    fn log_update_survives_extreme_densities() {
        // sigma = 0.01 with a 10-unit miss: linear densities underflow to 0
        let id = TransitionKernel::identity(2);
        let b = belief(&[0.5, 0.5]);
        let ll = [
            gaussian_log_density(0.0, 10.0, 0.01),
            gaussian_log_density(0.0, 10.1, 0.01),
        ];
        assert_eq!(ll[0].exp(), 0.0);
        let p = posterior_update_log(&b, &id, &ll).unwrap();
        assert!(p.probs()[0] > 0.999);
    }

    #[test]
    fn density_examples() {
        assert_relative_eq!(gaussian_likelihood(0.0, 0.0, 1.0).unwrap(), 0.3989422804, epsilon = 1e-10);
        assert_relative_eq!(gaussian_likelihood(3.0, 0.0, 1.0).unwrap(), 0.0044318484, epsilon = 1e-10);
        let s: f64 = 0.37;
        assert_relative_eq!(
            gaussian_likelihood(1.3, 1.3, s).unwrap(),
            1.0 / (s * (2.0 * PI).sqrt()),
            epsilon = 1e-14
        );
        assert!(gaussian_likelihood(f64::NAN, 0.0, 1.0).is_err());
        assert!(gaussian_likelihood(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&belief(&[0.5, 0.5])), 1.0);
        assert_eq!(entropy(&belief(&[1.0, 0.0, 0.0])), 0.0);
        assert_eq!(entropy(&BeliefState::uniform(4)), 2.0);
    }

    #[test]
    fn kl_examples() {
        assert_eq!(gaussian_kl(0.3, 0.7, 0.3, 0.7), 0.0);
        assert_relative_eq!(gaussian_kl(1.0, 1.0, 0.0, 1.0), 0.5, epsilon = 1e-15);
        assert_relative_eq!(gaussian_kl(1.7, 0.05, 1.5, 0.05), 8.0, epsilon = 1e-12);
        // with the two-state matrix's sigma = 0.01 the same arm scores 200
        assert_relative_eq!(gaussian_kl(1.7, 0.01, 1.5, 0.01), 200.0, epsilon = 1e-9);
    }

    #[test]
    fn gap_examples() {
        let m = RewardModel::with_constant_std(&[vec![2.0, 2.0], vec![1.0, 1.0]], 1.0).unwrap();
        assert_relative_eq!(mean_pairwise_gap(&m, 0), 0.5, epsilon = 1e-15);
        assert_relative_eq!(mean_pairwise_gap(&m, 1), -0.5, epsilon = 1e-15);
        let same = RewardModel::with_constant_std(&[vec![2.0, 2.0], vec![2.0, 2.0]], 1.0).unwrap();
        assert_eq!(mean_pairwise_kl(&same, 0), 0.0);
        assert_eq!(mean_pairwise_gap(&same, 1), 0.0);
        assert!(mean_pairwise_gap(&presets::five_state(0.01), 4) < 0.0);
    }

    #[test]
    fn info_arm_examples() {
        assert_eq!(best_info_arm(&presets::two_state(0.01)).0, 2);
        assert_eq!(best_info_arm(&presets::five_state(0.01)).0, 4);
        let same = RewardModel::with_constant_std(&vec![vec![1.0, 1.0]; 3], 1.0).unwrap();
        let (arm, stats) = best_info_arm(&same);
        assert_eq!(arm, 0);
        assert!(stats.ratio.iter().all(|r| r.is_nan()));
    }

    #[test]
    fn zero_gap_informative_arm_wins() {
        // arm 1 has zero average gap but differs from arm 0 in each state
        let m = RewardModel::with_constant_std(&[vec![1.0, 2.0], vec![2.0, 1.0]], 1.0).unwrap();
        let (_, stats) = best_info_arm(&m);
        assert!(stats.ratio.iter().all(|r| r.is_infinite()));
    }

    #[test]
    fn regret_bound_examples() {
        assert_relative_eq!(single_step_regret_bound(&presets::five_state(0.01)), 1.2, epsilon = 1e-12);
        assert_relative_eq!(single_step_regret_bound(&presets::two_state(0.01)), 0.6, epsilon = 1e-12);
        let same = RewardModel::with_constant_std(&vec![vec![1.0, 1.0]; 2], 1.0).unwrap();
        assert_eq!(single_step_regret_bound(&same), 0.0);
    }

    #[test]
    fn dwell_examples() {
        let k = TransitionKernel::new(vec![vec![0.995, 0.005], vec![0.005, 0.995]]).unwrap();
        assert_eq!(expected_dwell_time(&k, &BeliefState::point(2, 0), 1e9), 200.0);
        let half = TransitionKernel::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert_eq!(expected_dwell_time(&half, &BeliefState::uniform(2), 1e9), 2.0);
        let id = TransitionKernel::identity(3);
        assert_eq!(expected_dwell_time(&id, &BeliefState::uniform(3), 750.0), 750.0);
    }

    fn arb_belief(n: usize) -> impl Strategy<Value = BeliefState> {
        prop::collection::vec(0.0f64..1.0, n).prop_filter_map("zero mass", BeliefState::from_weights)
    }

    fn arb_kernel(n: usize) -> impl Strategy<Value = TransitionKernel> {
        prop::collection::vec(prop::collection::vec(0.001f64..1.0, n), n).prop_map(|rows| {
            let rows = rows
                .into_iter()
                .map(|r| {
                    let s: f64 = r.iter().sum();
                    let mut r: Vec<f64> = r.iter().map(|x| x / s).collect();
                    // absorb rounding so the row sums to 1 within tolerance
                    let rest: f64 = r[1..].iter().sum();
                    r[0] = 1.0 - rest;
                    r
                })
                .collect();
            TransitionKernel::new(rows).unwrap()
        })
    }

    proptest! {
        #[test]
        fn posterior_is_normalized(
            b in arb_belief(4),
            k in arb_kernel(4),
            l in prop::collection::vec(0.01f64..10.0, 4),
        ) {
            let p = posterior_update(&b, &k, &l).unwrap();
            let sum: f64 = p.probs().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(p.probs().iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn uniform_likelihood_is_pure_propagation(b in arb_belief(3), k in arb_kernel(3), c in 0.1f64..5.0) {
            let p = posterior_update(&b, &k, &[c; 3]).unwrap();
            for to in 0..3 {
                let direct: f64 = (0..3).map(|from| b.probs()[from] * k.prob(from, to)).sum();
                prop_assert!((p.probs()[to] - direct).abs() < 1e-12);
            }
        }

        #[test]
        fn entropy_bounded_by_uniform(b in arb_belief(5)) {
            let h = entropy(&b);
            prop_assert!(h >= 0.0);
            prop_assert!(h <= entropy(&BeliefState::uniform(5)) + 1e-12);
            let max_p = b.probs().iter().cloned().fold(0.0, f64::max);
            if max_p < 1.0 - 1e-9 {
                prop_assert!(h > 0.0);
            }
        }

        #[test]
        fn kl_is_non_negative(m1 in -5.0f64..5.0, s1 in 0.05f64..3.0, m2 in -5.0f64..5.0, s2 in 0.05f64..3.0) {
            let kl = gaussian_kl(m1, s1, m2, s2);
            prop_assert!(kl >= 0.0);
            if (m1 - m2).abs() > 1e-6 || (s1 - s2).abs() > 1e-6 {
                prop_assert!(kl > 0.0);
            }
        }

        #[test]
        fn info_arm_invariant_under_global_shift(c in -3.0f64..3.0) {
            for model in [presets::two_state(0.01), presets::five_state(0.01)] {
                prop_assert_eq!(best_info_arm(&model).0, best_info_arm(&model.shifted(c)).0);
            }
        }

        #[test]
        fn dwell_monotone_in_stay(p in 0.0f64..0.999, bump in 0.0f64..0.5, b in arb_belief(2)) {
            let q = (p + bump).min(0.999);
            let k1 = TransitionKernel::new(vec![vec![p, 1.0 - p], vec![0.3, 0.7]]).unwrap();
            let k2 = TransitionKernel::new(vec![vec![q, 1.0 - q], vec![0.3, 0.7]]).unwrap();
            prop_assert!(expected_dwell_time(&k2, &b, 1e6) >= expected_dwell_time(&k1, &b, 1e6) - 1e-9);
        }
    }
}
