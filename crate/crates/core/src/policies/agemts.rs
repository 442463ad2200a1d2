//! Active greedy exploration model-based Thompson sampling (AGEmTS) and its
//! roll-out reward estimator.

use std::sync::Arc;

use rand::RngCore;
use serde::Serialize;

use super::{Policy, PolicyEnv, Round};
use crate::belief::{
    best_info_arm_among, entropy, expected_dwell_time, filter_reward, gaussian_log_density, posterior_update_log,
    propagate, single_step_regret_bound, single_step_regret_bound_among,
};
use crate::model::{BeliefState, RewardModel, TransitionKernel};

/// Average cumulative roll-out rewards with and without information gathering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RolloutResult {
    pub reward_ig: f64,
    pub reward_ps: f64,
    pub horizon_used: usize,
}

impl RolloutResult {
    pub fn gain(&self) -> f64 {
        self.reward_ig - self.reward_ps
    }
}

fn log_sum_exp(xs: impl Iterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.collect();
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn normalize_log(logs: &[f64]) -> Vec<f64> {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Probability that each offered arm is played when every state votes for
/// its greedy arm with the weight the belief gives it.
fn greedy_arm_weights(belief: &BeliefState, greedy: &[usize], arms: &[usize]) -> Vec<f64> {
    let mut w = vec![0.0; arms.len()];
    for (s, &p) in belief.probs().iter().enumerate() {
        let i = arms.binary_search(&greedy[s]).unwrap_or_else(|_| {
            arms.iter().position(|&a| a == greedy[s]).expect("greedy arm is offered")
        });
        w[i] += p;
    }
    w
}

/// Log pseudo-likelihood of each state when the reward equals the mean of
/// the belief-weighted greedy arm mix in `hypothetical_state`.
fn rollout_log_likelihood(
    model: &RewardModel,
    context: usize,
    hypothetical_state: usize,
    policy_belief: &BeliefState,
    arms: &[usize],
) -> Vec<f64> {
    let greedy = model.greedy_arms(context, arms);
    let weights = greedy_arm_weights(policy_belief, &greedy, arms);
    (0..model.num_states())
        .map(|s| {
            log_sum_exp(arms.iter().zip(&weights).filter(|(_, &w)| w > 0.0).map(|(&a, &w)| {
                w.ln()
                    + gaussian_log_density(
                        model.mean(a, context, hypothetical_state),
                        model.mean(a, context, s),
                        model.std(a, context, s),
                    )
            }))
        })
        .collect()
}

fn info_log_likelihood(model: &RewardModel, context: usize, info_arm: usize, hypothetical_state: usize) -> Vec<f64> {
    (0..model.num_states())
        .map(|s| {
            gaussian_log_density(
                model.mean(info_arm, context, hypothetical_state),
                model.mean(info_arm, context, s),
                model.std(info_arm, context, s),
            )
        })
        .collect()
}

/// Greedy roll-out pseudo-likelihood over states: the density matrix
/// `L[a][s]` of `μ(a, x, s_hyp)` under each state, mixed over arms with the
/// belief-weighted greedy arm probabilities, normalized.
pub fn rollout_likelihood_matrix(
    model: &RewardModel,
    context: usize,
    hypothetical_state: usize,
    policy_belief: &BeliefState,
) -> Vec<f64> {
    rollout_likelihood_among(model, context, hypothetical_state, policy_belief, &model.all_arms())
}

pub fn rollout_likelihood_among(
    model: &RewardModel,
    context: usize,
    hypothetical_state: usize,
    policy_belief: &BeliefState,
    arms: &[usize],
) -> Vec<f64> {
    normalize_log(&rollout_log_likelihood(model, context, hypothetical_state, policy_belief, arms))
}

/// Belief times the density of `μ(a^e, x, s_hyp)` under each state, normalized.
pub fn rollout_info_likelihood(
    model: &RewardModel,
    context: usize,
    info_arm: usize,
    hypothetical_state: usize,
    policy_belief: &BeliefState,
) -> Vec<f64> {
    let logs: Vec<f64> = info_log_likelihood(model, context, info_arm, hypothetical_state)
        .iter()
        .zip(policy_belief.probs())
        .map(|(l, &p)| if p > 0.0 { l + p.ln() } else { f64::NEG_INFINITY })
        .collect();
    normalize_log(&logs)
}

/// Fixed inputs of one roll-out.
#[derive(Debug, Clone, Copy)]
pub struct RolloutSetup<'a> {
    pub model: &'a RewardModel,
    pub kernel: &'a TransitionKernel,
    pub context: usize,
    pub arms: &'a [usize],
    pub info_arm: usize,
    pub r_u: f64,
    pub horizon_cap: usize,
    pub entropy_threshold: f64,
}

fn rollout_update(belief: &BeliefState, kernel: &TransitionKernel, log_lik: &[f64]) -> BeliefState {
    posterior_update_log(belief, kernel, log_lik).unwrap_or_else(|_| propagate(belief, kernel))
}

fn expected_greedy_reward(
    model: &RewardModel,
    context: usize,
    greedy: &[usize],
    belief: &BeliefState,
    true_state: usize,
) -> f64 {
    belief
        .probs()
        .iter()
        .zip(greedy)
        .map(|(p, &a)| p * model.mean(a, context, true_state))
        .sum()
}

/// Roll-out estimate of cumulative reward over the expected dwell time,
/// once with an information-gathering pull now (and later when it still
/// pays) and once with posterior sampling only. Each hypothetical state
/// other than the most likely one is rolled out; the totals are averaged
/// with the belief's relative weights on those states.
pub fn reward_estimator(belief: &BeliefState, setup: &RolloutSetup<'_>) -> RolloutResult {
    let RolloutSetup {
        model,
        kernel,
        context,
        arms,
        info_arm,
        r_u,
        horizon_cap,
        entropy_threshold,
    } = *setup;
    let n = model.num_states();
    let cap = horizon_cap.max(1);
    let t_exp = (expected_dwell_time(kernel, belief, cap as f64).round() as usize).clamp(1, cap);
    let greedy = model.greedy_arms(context, arms);
    let most_likely = belief.argmax();

    let mut weights: Vec<f64> = (0..n)
        .map(|s| if s == most_likely { 0.0 } else { belief.probs()[s] })
        .collect();
    let mass: f64 = weights.iter().sum();
    if mass > 0.0 {
        weights.iter_mut().for_each(|w| *w /= mass);
    } else {
        weights = (0..n).map(|s| if s == most_likely { 0.0 } else { 1.0 / (n - 1) as f64 }).collect();
    }

    let mut total_ig = 0.0;
    let mut total_ps = 0.0;
    for (s, &w) in weights.iter().enumerate() {
        if s == most_likely {
            continue;
        }
        let star = rollout_log_likelihood(model, context, s, belief, arms);
        let info = info_log_likelihood(model, context, info_arm, s);
        let mut p_ig = rollout_update(belief, kernel, &info);
        let mut p_ps = belief.clone();
        let mut r_ig = -r_u;
        let mut r_ps = 0.0;
        for _ in 0..t_exp {
            if entropy(&p_ig) >= entropy_threshold && r_ig - r_ps > r_u {
                p_ig = rollout_update(&p_ig, kernel, &info);
                r_ig -= r_u;
            } else {
                p_ig = rollout_update(&p_ig, kernel, &star);
            }
            p_ps = rollout_update(&p_ps, kernel, &star);
            r_ig += expected_greedy_reward(model, context, &greedy, &p_ig, s);
            r_ps += expected_greedy_reward(model, context, &greedy, &p_ps, s);
        }
        total_ig += w * r_ig;
        total_ps += w * r_ps;
    }
    RolloutResult {
        reward_ig: total_ig,
        reward_ps: total_ps,
        horizon_used: t_exp,
    }
}

/// Outcome of one AGEmTS decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub arm: usize,
    pub info: bool,
    pub rollout: Option<RolloutResult>,
}

/// One AGEmTS decision: greedy arm of the most likely state, replaced by the
/// best information-gathering arm when the belief is confused and the
/// roll-out gain exceeds `r_u`.
pub fn agemts_step(
    belief: &BeliefState,
    model: &RewardModel,
    kernel: &TransitionKernel,
    context: usize,
    arms: &[usize],
    r_u: f64,
    horizon_cap: usize,
    entropy_threshold: f64,
) -> Decision {
    let greedy = model.best_arm(context, belief.argmax(), arms);
    let mut decision = Decision {
        arm: greedy,
        info: false,
        rollout: None,
    };
    if entropy(belief) < entropy_threshold {
        return decision;
    }
    let (info_arm, _) = best_info_arm_among(model, arms);
    if info_arm == greedy {
        return decision;
    }
    let result = reward_estimator(
        belief,
        &RolloutSetup {
            model,
            kernel,
            context,
            arms,
            info_arm,
            r_u,
            horizon_cap,
            entropy_threshold,
        },
    );
    decision.rollout = Some(result);
    let gain = result.gain();
    if gain > 0.0 && gain > r_u {
        decision.arm = info_arm;
        decision.info = true;
    }
    decision
}

#[derive(Debug, Clone)]
pub struct Agemts {
    label: String,
    model: Arc<RewardModel>,
    kernel: Arc<TransitionKernel>,
    belief: BeliefState,
    horizon: usize,
    entropy_threshold: f64,
    r_u_all: f64,
    rollouts: usize,
    last_info: bool,
}

impl Agemts {
    pub fn new(label: String, env: &PolicyEnv, entropy_threshold: f64) -> Self {
        Self {
            label,
            r_u_all: single_step_regret_bound(&env.model),
            model: env.model.clone(),
            kernel: env.kernel.clone(),
            belief: env.prior.clone(),
            horizon: env.horizon,
            entropy_threshold,
            rollouts: 0,
            last_info: false,
        }
    }

    /// Number of roll-outs run so far.
    pub fn rollouts(&self) -> usize {
        self.rollouts
    }
}

impl Policy for Agemts {
    fn name(&self) -> &str {
        &self.label
    }

    fn select(&mut self, round: &Round<'_>, _rng: &mut dyn RngCore) -> usize {
        let r_u = if round.arms.len() == self.model.num_arms() {
            self.r_u_all
        } else {
            single_step_regret_bound_among(&self.model, round.arms)
        };
        let d = agemts_step(
            &self.belief,
            &self.model,
            &self.kernel,
            round.context,
            round.arms,
            r_u,
            self.horizon.saturating_sub(round.t).max(1),
            self.entropy_threshold,
        );
        self.rollouts += usize::from(d.rollout.is_some());
        self.last_info = d.info;
        d.arm
    }

    fn observe(&mut self, round: &Round<'_>, arm: usize, reward: f64) {
        self.belief = filter_reward(&self.belief, &self.kernel, &self.model, round.context, arm, reward);
    }

    fn belief(&self) -> Option<&BeliefState> {
        Some(&self.belief)
    }

    fn last_was_info(&self) -> bool {
        self.last_info
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::gaussian_likelihood;
    use crate::model::presets;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn setup<'a>(
        model: &'a RewardModel,
        kernel: &'a TransitionKernel,
        arms: &'a [usize],
        info_arm: usize,
        cap: usize,
    ) -> RolloutSetup<'a> {
        RolloutSetup {
            model,
            kernel,
            context: 0,
            arms,
            info_arm,
            r_u: single_step_regret_bound(model),
            horizon_cap: cap,
            entropy_threshold: 1.0,
        }
    }

    #[test]
    fn confident_belief_skips_rollout() {
        let model = presets::two_state(0.01);
        let b = BeliefState::new(vec![0.9, 0.1]).unwrap();
        let d = agemts_step(&b, &model, &TransitionKernel::identity(2), 0, &[0, 1, 2], 0.6, 100, 1.0);
        assert_eq!(d, Decision { arm: 0, info: false, rollout: None });
    }

    #[test]
    fn two_state_start_plays_info_arm() {
        let model = presets::two_state(0.01);
        let d = agemts_step(
            &BeliefState::uniform(2),
            &model,
            &TransitionKernel::identity(2),
            0,
            &[0, 1, 2],
            0.6,
            2000,
            1.0,
        );
        assert_eq!(d.arm, 2);
        assert!(d.info);
        assert!(d.rollout.unwrap().gain() > 0.6);
    }

    #[test]
    fn info_arm_equal_to_greedy_needs_no_rollout() {
        // arm 0 is best everywhere and also the most informative
        let means = vec![vec![3.0, 2.0], vec![1.0, 1.0]];
        let stds = vec![vec![0.01, 0.01], vec![0.5, 0.5]];
        let model = RewardModel::from_rows(1, &means, &stds).unwrap();
        let d = agemts_step(&BeliefState::uniform(2), &model, &TransitionKernel::identity(2), 0, &[0, 1], 2.0, 100, 1.0);
        assert_eq!(d, Decision { arm: 0, info: false, rollout: None });
    }

    #[test]
    fn uninformative_info_arm_never_wins() {
        let means = vec![vec![2.1, 2.05], vec![2.05, 2.1], vec![1.6, 1.6]];
        let stds = vec![vec![0.5, 0.5], vec![0.5, 0.5], vec![0.5, 0.5]];
        let model = RewardModel::from_rows(1, &means, &stds).unwrap();
        let kernel = TransitionKernel::identity(2);
        let arms = [0, 1, 2];
        let r = reward_estimator(&BeliefState::uniform(2), &setup(&model, &kernel, &arms, 2, 500));
        assert!(r.reward_ig <= r.reward_ps);
    }

    #[test]
    fn single_step_rollout_by_hand() {
        let model = presets::two_state(0.01);
        let kernel = TransitionKernel::identity(2);
        let arms = [0, 1, 2];
        let b = BeliefState::uniform(2);
        let r = reward_estimator(&b, &setup(&model, &kernel, &arms, 2, 1));
        assert_eq!(r.horizon_used, 1);
        // only state 1 is rolled out (state 0 is the argmax)
        let info = rollout_info_likelihood(&model, 0, 2, 1, &b);
        let star = rollout_likelihood_matrix(&model, 0, 1, &b);
        let p_ps = BeliefState::from_weights(vec![0.5 * star[0], 0.5 * star[1]]).unwrap();
        let ps = p_ps.probs()[0] * 2.05 + p_ps.probs()[1] * 2.1;
        let ig_belief = BeliefState::from_weights(vec![info[0] * star[0], info[1] * star[1]]).unwrap();
        let ig = -0.6 + ig_belief.probs()[0] * 2.05 + ig_belief.probs()[1] * 2.1;
        assert_relative_eq!(r.reward_ps, ps, epsilon = 1e-12);
        assert_relative_eq!(r.reward_ig, ig, epsilon = 1e-12);
    }

    #[test]
    fn likelihood_matrix_against_naive_oracle() {
        let model = presets::five_state(0.01);
        let b = BeliefState::uniform(5);
        let got = rollout_likelihood_matrix(&model, 0, 1, &b);
        // naive: weights via greedy arms, plain densities
        let mut w = [0.0; 5];
        for s in 0..5 {
            let mut best = 0;
            for a in 1..5 {
                if model.mean(a, 0, s) > model.mean(best, 0, s) {
                    best = a;
                }
            }
            w[best] += 0.2;
        }
        let mut row = [0.0; 5];
        for (s, r) in row.iter_mut().enumerate() {
            for a in 0..5 {
                *r += w[a] * gaussian_likelihood(model.mean(a, 0, 1), model.mean(a, 0, s), model.std(a, 0, s)).unwrap();
            }
        }
        let total: f64 = row.iter().sum();
        for s in 0..5 {
            assert!((got[s] - row[s] / total).abs() < 1e-12);
        }
    }

    #[test]
    fn likelihood_matrix_limits() {
        let same = RewardModel::with_constant_std(&vec![vec![1.0, 1.0, 1.0]; 2], 0.3).unwrap();
        let row = rollout_likelihood_matrix(&same, 0, 2, &BeliefState::uniform(3));
        for p in row {
            assert_relative_eq!(p, 1.0 / 3.0, epsilon = 1e-12);
        }
        let far = RewardModel::with_constant_std(&[vec![0.0, 100.0], vec![100.0, 0.0]], 0.5).unwrap();
        let row = rollout_likelihood_matrix(&far, 0, 1, &BeliefState::uniform(2));
        assert!(row[1] > 1.0 - 1e-12);
    }

    #[test]
    fn info_likelihood_cases() {
        let model = presets::two_state(0.01);
        let row = rollout_info_likelihood(&model, 0, 2, 0, &BeliefState::uniform(2));
        assert!(row[0] >= 1.0 - 1e-6);
        let flat = RewardModel::with_constant_std(&[vec![1.0, 2.0], vec![5.0, 5.0]], 1.0).unwrap();
        let b = BeliefState::new(vec![0.3, 0.7]).unwrap();
        let row = rollout_info_likelihood(&flat, 0, 1, 0, &b);
        assert_relative_eq!(row[0], 0.3, epsilon = 1e-15);
        let sym = presets::two_state(0.5);
        let a = rollout_info_likelihood(&sym, 0, 2, 0, &BeliefState::uniform(2));
        let c = rollout_info_likelihood(&sym, 0, 2, 1, &BeliefState::uniform(2));
        assert_relative_eq!(a[0], c[1], epsilon = 1e-15);
    }

    #[test]
    fn policy_counts_rollouts() {
        let env = PolicyEnv {
            model: Arc::new(presets::two_state(0.01)),
            kernel: Arc::new(TransitionKernel::identity(2)),
            prior: BeliefState::new(vec![0.9, 0.1]).unwrap(),
            horizon: 10,
        };
        let mut p = Agemts::new("agemts".into(), &env, 1.0);
        let mut rng = rand_chacha::rand_core::SeedableRng::seed_from_u64(0);
        let rng: &mut rand_chacha::ChaCha8Rng = &mut rng;
        let arms = [0, 1, 2];
        let round = Round { t: 0, context: 0, arms: &arms };
        assert_eq!(p.select(&round, rng), 0);
        assert_eq!(p.rollouts(), 0);
        assert!(!p.last_was_info());
    }

    proptest! {
        #[test]
        fn estimator_is_label_invariant(
            means in proptest::collection::vec(0.0f64..3.0, 9),
            stds in proptest::collection::vec(0.05f64..1.0, 9),
            raw in proptest::collection::vec(0.05f64..1.0, 3),
            stay in 0.5f64..0.99,
        ) {
            let rows: Vec<Vec<f64>> = means.chunks(3).map(|c| c.to_vec()).collect();
            let srows: Vec<Vec<f64>> = stds.chunks(3).map(|c| c.to_vec()).collect();
            let model = RewardModel::from_rows(1, &rows, &srows).unwrap();
            let off = (1.0 - stay) / 2.0;
            let kernel = TransitionKernel::new(
                (0..3).map(|i| (0..3).map(|j| if i == j { stay } else { off }).collect()).collect(),
            ).unwrap();
            // distinct belief entries keep the argmax unambiguous
            let mut w = raw.clone();
            w[1] += 1.1;
            w[2] += 2.3;
            let belief = BeliefState::from_weights(w).unwrap();
            let arms = [0, 1, 2];
            let base = reward_estimator(&belief, &setup(&model, &kernel, &arms, 2, 30));
            let order = [2, 0, 1];
            let pm = model.permute_states(&order);
            let pk = kernel.permute_states(&order);
            let pb = BeliefState::new(order.iter().map(|&s| belief.probs()[s]).collect()).unwrap();
            let perm = reward_estimator(&pb, &setup(&pm, &pk, &arms, 2, 30));
            prop_assert!((base.reward_ig - perm.reward_ig).abs() < 1e-8);
            prop_assert!((base.reward_ps - perm.reward_ps).abs() < 1e-8);
        }
    }
}
