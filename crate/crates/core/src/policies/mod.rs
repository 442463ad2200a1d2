//! Decision-making agents behind one interface: `select` an arm for the
//! offered round, then `observe` the reward.

pub mod agemts;
pub mod baselines;
pub mod mts;
pub mod two_state;

use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::best_info_arm;
use crate::model::{BeliefState, RewardModel, TransitionKernel};

pub use agemts::{agemts_step, reward_estimator, rollout_info_likelihood, rollout_likelihood_matrix, Agemts, RolloutResult};
pub use baselines::{cd_linear_check, cd_scalar_check, exp4s_update, ChangeDetectorState};
pub use mts::{mts_step, Mts};
pub use two_state::{
    belief_forecast_two_state, explore_commit_sample_size, explore_then_ps_tau, ExploreCommit, ExploreThenPs,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("sample size needs a non-zero mean shift")]
    ZeroShift,
    #[error("{policy} needs a two-state model, got {states} states")]
    NotTwoState { policy: &'static str, states: usize },
    #[error("the oracle is driven by the harness, not built as a policy")]
    Oracle,
    #[error("parameter `{name}` is invalid: {reason}")]
    BadParam { name: &'static str, reason: String },
}

/// One decision point: step index, context and the offered arms (sorted).
#[derive(Debug, Clone, Copy)]
pub struct Round<'a> {
    pub t: usize,
    pub context: usize,
    pub arms: &'a [usize],
}

pub trait Policy: Send {
    fn name(&self) -> &str;

    /// Picks an arm from `round.arms`. All randomness comes from `rng`.
    fn select(&mut self, round: &Round<'_>, rng: &mut dyn RngCore) -> usize;

    fn observe(&mut self, round: &Round<'_>, arm: usize, reward: f64);

    /// Current belief over latent states, for policies that keep one.
    fn belief(&self) -> Option<&BeliefState> {
        None
    }

    /// Whether the last selected arm was an information-gathering choice.
    fn last_was_info(&self) -> bool {
        false
    }
}

/// What every policy may know about the problem.
#[derive(Debug, Clone)]
pub struct PolicyEnv {
    pub model: Arc<RewardModel>,
    pub kernel: Arc<TransitionKernel>,
    pub prior: BeliefState,
    pub horizon: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Mts,
    GreedyMts,
    Agemts,
    ExploreCommit,
    ExploreThenPs,
    Cducb,
    Cdts,
    CdLinucb,
    CdLints,
    Exp4s,
    Mucb,
    Uniform,
    Oracle,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Mts => "mts",
            PolicyKind::GreedyMts => "greedy_mts",
            PolicyKind::Agemts => "agemts",
            PolicyKind::ExploreCommit => "explore_commit",
            PolicyKind::ExploreThenPs => "explore_then_ps",
            PolicyKind::Cducb => "cducb",
            PolicyKind::Cdts => "cdts",
            PolicyKind::CdLinucb => "cd_linucb",
            PolicyKind::CdLints => "cd_lints",
            PolicyKind::Exp4s => "exp4s",
            PolicyKind::Mucb => "mucb",
            PolicyKind::Uniform => "uniform",
            PolicyKind::Oracle => "oracle",
        }
    }
}

/// Optional tuning knobs; each policy reads the ones it understands and
/// falls back to its defaults for the rest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropy_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub info_arm: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explore_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exploration: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_std: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ridge: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

pub const DEFAULT_Z_ALPHA: f64 = 1.96;
pub const DEFAULT_Z_BETA: f64 = 0.84;
pub const DEFAULT_WINDOW: usize = 50;

/// Policy name, optional display label and parameters, as written in
/// experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub name: PolicyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "is_default_params")]
    pub params: PolicyParams,
}

fn is_default_params(p: &PolicyParams) -> bool {
    *p == PolicyParams::default()
}

impl PolicySpec {
    pub fn new(name: PolicyKind) -> Self {
        Self {
            name,
            label: None,
            params: PolicyParams::default(),
        }
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.name.as_str().to_string())
    }

    /// Does the per-experiment work (info arm, sample sizes, explore length)
    /// once; the result instantiates a fresh policy per run.
    pub fn prepare(&self, env: &PolicyEnv) -> Result<PreparedPolicy, PolicyError> {
        let p = &self.params;
        let model = &env.model;
        let positive = |name: &'static str, v: Option<f64>| -> Result<(), PolicyError> {
            match v {
                Some(x) if !(x.is_finite() && x > 0.0) => Err(PolicyError::BadParam {
                    name,
                    reason: format!("must be positive, got {x}"),
                }),
                _ => Ok(()),
            }
        };
        positive("noise_std", p.noise_std)?;
        positive("ridge", p.ridge)?;
        positive("learning_rate", p.learning_rate)?;
        if let Some(w) = p.window {
            if w < 2 || w % 2 != 0 {
                return Err(PolicyError::BadParam {
                    name: "window",
                    reason: format!("must be even and at least 2, got {w}"),
                });
            }
        }
        if let Some(a) = p.info_arm {
            if a >= model.num_arms() {
                return Err(PolicyError::BadParam {
                    name: "info_arm",
                    reason: format!("arm {a} out of range"),
                });
            }
        }
        let info_arm = || p.info_arm.unwrap_or_else(|| best_info_arm(model).0);
        let extra = match self.name {
            PolicyKind::Oracle => return Err(PolicyError::Oracle),
            PolicyKind::ExploreCommit => {
                two_state::require_two_states("explore_commit", model)?;
                let a = info_arm();
                let n_e = match p.explore_steps {
                    Some(n) => n,
                    None => two_state::explore_commit_steps_for(
                        model,
                        a,
                        p.z_alpha.unwrap_or(DEFAULT_Z_ALPHA),
                        p.z_beta.unwrap_or(DEFAULT_Z_BETA),
                    )?,
                };
                Prepared::Explore { info_arm: a, steps: n_e }
            }
            PolicyKind::ExploreThenPs => {
                two_state::require_two_states("explore_then_ps", model)?;
                let a = info_arm();
                let tau = match p.explore_steps {
                    Some(n) => n,
                    None => two_state::explore_then_ps_tau_with_prior(model, a, env.horizon, &env.prior)?,
                };
                Prepared::Explore { info_arm: a, steps: tau }
            }
            _ => Prepared::None,
        };
        Ok(PreparedPolicy {
            spec: self.clone(),
            env: env.clone(),
            extra,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Prepared {
    None,
    Explore { info_arm: usize, steps: usize },
}

/// A policy spec with its per-experiment precomputation done.
#[derive(Debug, Clone)]
pub struct PreparedPolicy {
    spec: PolicySpec,
    env: PolicyEnv,
    extra: Prepared,
}

impl PreparedPolicy {
    pub fn spec(&self) -> &PolicySpec {
        &self.spec
    }

    /// Explore length chosen for explore-commit / explore-then-PS.
    pub fn explore_steps(&self) -> Option<usize> {
        match self.extra {
            Prepared::Explore { steps, .. } => Some(steps),
            Prepared::None => None,
        }
    }

    pub fn instantiate(&self) -> Box<dyn Policy> {
        let p = &self.spec.params;
        let env = &self.env;
        let label = self.spec.label();
        let window = p.window.unwrap_or(DEFAULT_WINDOW);
        match (self.spec.name, &self.extra) {
            (PolicyKind::Mts, _) => Box::new(Mts::new(label, env, mts::Sampling::Posterior)),
            (PolicyKind::GreedyMts, _) => Box::new(Mts::new(label, env, mts::Sampling::Greedy)),
            (PolicyKind::Agemts, _) => Box::new(Agemts::new(label, env, p.entropy_threshold.unwrap_or(1.0))),
            (PolicyKind::ExploreCommit, &Prepared::Explore { info_arm, steps }) => {
                Box::new(ExploreCommit::new(label, env, info_arm, steps))
            }
            (PolicyKind::ExploreThenPs, &Prepared::Explore { info_arm, steps }) => {
                Box::new(ExploreThenPs::new(label, env, info_arm, steps))
            }
            (PolicyKind::Cducb, _) => Box::new(baselines::MetaArmBandit::new(
                label,
                env,
                baselines::MetaRule::Ucb {
                    exploration: p.exploration.unwrap_or(1.0),
                },
                window,
                p.threshold,
            )),
            (PolicyKind::Cdts, _) => Box::new(baselines::MetaArmBandit::new(
                label,
                env,
                baselines::MetaRule::Thompson {
                    noise_std: p.noise_std.unwrap_or(baselines::default_noise_std(&env.model)),
                },
                window,
                p.threshold,
            )),
            (PolicyKind::CdLinucb, _) => Box::new(baselines::CdLinear::new(
                label,
                env,
                baselines::LinRule::Ucb {
                    exploration: p.exploration.unwrap_or(1.0),
                },
                p.ridge.unwrap_or(1.0),
                window,
                p.threshold,
            )),
            (PolicyKind::CdLints, _) => Box::new(baselines::CdLinear::new(
                label,
                env,
                baselines::LinRule::Thompson {
                    noise_std: p.noise_std.unwrap_or(baselines::default_noise_std(&env.model)),
                },
                p.ridge.unwrap_or(1.0),
                window,
                p.threshold,
            )),
            (PolicyKind::Exp4s, _) => Box::new(baselines::Exp4s::new(
                label,
                env,
                p.learning_rate,
                p.weight_floor,
                p.gamma.unwrap_or(0.0),
            )),
            (PolicyKind::Mucb, _) => Box::new(baselines::Mucb::new(label, env)),
            (PolicyKind::Uniform, _) => Box::new(baselines::UniformRandom::new(label)),
            (PolicyKind::Oracle, _) | (PolicyKind::ExploreCommit | PolicyKind::ExploreThenPs, Prepared::None) => {
                unreachable!("prepare rejects these combinations")
            }
        }
    }
}

/// Lowest-index argmax of a score over `items`.
pub(crate) fn argmax_by<T: Copy>(items: &[T], mut score: impl FnMut(T) -> f64) -> T {
    let mut best = items[0];
    let mut best_score = score(best);
    for &x in &items[1..] {
        let s = score(x);
        if s > best_score {
            best = x;
            best_score = s;
        }
    }
    best
}

/// Draws an index from a probability vector.
pub(crate) fn sample_categorical(probs: &[f64], rng: &mut dyn RngCore) -> usize {
    let u = rand::Rng::random::<f64>(rng);
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}
