//! Latent-bandit environments: transition-graph families, change schedules,
//! reward sampling and pre-generated trajectories for paired comparisons.

use rand::seq::index;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BeliefState, ModelError, RewardModel, TransitionKernel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("state {0} has no outgoing edges but its stay probability is below 1")]
    NoOutEdges(usize),
    #[error("stay probability must be in (0, 1], got {0}")]
    StayProb(f64),
    #[error("graph `{kind}` cannot be built with {states} states: {reason}")]
    GraphShape {
        kind: &'static str,
        states: usize,
        reason: &'static str,
    },
    #[error("custom graph needs either `matrix` or `edges`")]
    CustomMissing,
    #[error("edge ({0}, {1}) refers to a state outside the graph")]
    EdgeOutOfRange(usize, usize),
    #[error("arm {arm} is not in the offered arm set")]
    ArmNotOffered { arm: usize },
    #[error("arm set of size {set} cannot be drawn from {catalog} arms")]
    ArmSetTooLarge { set: usize, catalog: usize },
    #[error("change schedule must be strictly increasing")]
    Schedule,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    FullyConnected,
    SkipChain,
    TwoBranch,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffDiagonal {
    #[default]
    Uniform,
    RandomNonuniform,
}

fn default_stay() -> f64 {
    0.995
}

/// Description of a transition graph family and how to weight its edges.
///
/// For `two_branch` and `skip_chain`, state 0 is a start state with no
/// self-loop feeding two chains `1 -> .. -> m` and `m+1 -> .. -> 2m`; the last
/// state of each chain links back to its predecessor. `skip_chain` adds
/// cross links from position `k` of one chain to position `k+1` of the other.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionGraphSpec {
    pub kind: GraphKind,
    pub num_states: usize,
    #[serde(default = "default_stay")]
    pub stay_prob: f64,
    #[serde(default)]
    pub off_diagonal: OffDiagonal,
    #[serde(default)]
    pub seed: u64,
    /// Fully connected graphs only: a start state without a self-loop.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_state: Option<usize>,
    /// Custom graphs: explicit off-diagonal edges `(from, to)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<(usize, usize)>>,
    /// Custom graphs: a literal kernel, used as-is.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
}

impl TransitionGraphSpec {
    pub fn new(kind: GraphKind, num_states: usize, stay_prob: f64) -> Self {
        Self {
            kind,
            num_states,
            stay_prob,
            off_diagonal: OffDiagonal::Uniform,
            seed: 0,
            start_state: None,
            edges: None,
            matrix: None,
        }
    }

    /// Off-diagonal edges and which states carry a self-loop.
    pub fn edge_set(&self) -> Result<(Vec<Vec<usize>>, Vec<bool>), EnvError> {
        let n = self.num_states;
        let mut out = vec![Vec::new(); n];
        let mut self_loop = vec![true; n];
        match self.kind {
            GraphKind::FullyConnected => {
                for (i, targets) in out.iter_mut().enumerate() {
                    targets.extend((0..n).filter(|&j| j != i));
                }
                if let Some(s) = self.start_state {
                    if s >= n {
                        return Err(EnvError::EdgeOutOfRange(s, s));
                    }
                    self_loop[s] = false;
                }
            }
            GraphKind::TwoBranch | GraphKind::SkipChain => {
                let kind = if self.kind == GraphKind::TwoBranch {
                    "two_branch"
                } else {
                    "skip_chain"
                };
                if n < 5 || n.is_multiple_of(2) {
                    return Err(EnvError::GraphShape {
                        kind,
                        states: n,
                        reason: "needs an odd number of states, at least 5",
                    });
                }
                let m = (n - 1) / 2;
                let a: Vec<usize> = (1..=m).collect();
                let b: Vec<usize> = (m + 1..=2 * m).collect();
                self_loop[0] = false;
                out[0] = vec![a[0], b[0]];
                for chain in [&a, &b] {
                    for k in 0..m - 1 {
                        out[chain[k]].push(chain[k + 1]);
                    }
                    out[chain[m - 1]].push(chain[m - 2]);
                }
                if self.kind == GraphKind::SkipChain {
                    for k in 0..m - 1 {
                        out[a[k]].push(b[k + 1]);
                        out[b[k]].push(a[k + 1]);
                    }
                }
                for targets in &mut out {
                    targets.sort_unstable();
                }
            }
            GraphKind::Custom => {
                let edges = self.edges.as_ref().ok_or(EnvError::CustomMissing)?;
                for &(i, j) in edges {
                    if i >= n || j >= n {
                        return Err(EnvError::EdgeOutOfRange(i, j));
                    }
                    if i != j && !out[i].contains(&j) {
                        out[i].push(j);
                    }
                }
                for targets in &mut out {
                    targets.sort_unstable();
                }
            }
        }
        Ok((out, self_loop))
    }
}

/// Builds the row-stochastic kernel for a graph spec. Off-diagonal mass
/// `1 − stay` is split evenly over the out-edges, or drawn uniformly from
/// the simplex (seeded) in `random_nonuniform` mode. Non-edges are exactly 0.
pub fn build_transition_kernel(spec: &TransitionGraphSpec) -> Result<TransitionKernel, EnvError> {
    if spec.kind == GraphKind::Custom {
        if let Some(rows) = &spec.matrix {
            return Ok(TransitionKernel::new(rows.clone())?);
        }
    }
    if !(spec.stay_prob > 0.0 && spec.stay_prob <= 1.0) {
        return Err(EnvError::StayProb(spec.stay_prob));
    }
    let (out, self_loop) = spec.edge_set()?;
    let n = spec.num_states;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut rows = vec![vec![0.0; n]; n];
    for i in 0..n {
        let stay = if self_loop[i] { spec.stay_prob } else { 0.0 };
        rows[i][i] = stay;
        let spread = 1.0 - stay;
        if spread <= 0.0 {
            continue;
        }
        if out[i].is_empty() {
            return Err(EnvError::NoOutEdges(i));
        }
        let weights: Vec<f64> = match spec.off_diagonal {
            OffDiagonal::Uniform => vec![1.0; out[i].len()],
            // normalized exponentials are uniform on the simplex
            OffDiagonal::RandomNonuniform => out[i]
                .iter()
                .map(|_| -(1.0 - rng.random::<f64>()).ln())
                .collect(),
        };
        let total: f64 = weights.iter().sum();
        for (&j, w) in out[i].iter().zip(&weights) {
            rows[i][j] = spread * w / total;
        }
    }
    Ok(TransitionKernel::new(rows)?)
}

/// Uniform sample of `set_size` distinct arms from `0..catalog_size`, sorted.
pub fn sample_arm_set<R: Rng + ?Sized>(
    catalog_size: usize,
    set_size: usize,
    rng: &mut R,
) -> Result<Vec<usize>, EnvError> {
    if set_size > catalog_size {
        return Err(EnvError::ArmSetTooLarge {
            set: set_size,
            catalog: catalog_size,
        });
    }
    let mut arms = index::sample(rng, catalog_size, set_size).into_vec();
    arms.sort_unstable();
    Ok(arms)
}

/// Fixed change-point schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Switch every `n` steps.
    Every(usize),
    /// Switch at these (0-based) step indices.
    At(Vec<usize>),
}

impl Schedule {
    pub fn change_points(&self, horizon: usize) -> Result<Vec<usize>, EnvError> {
        match self {
            Schedule::Every(0) => Err(EnvError::Schedule),
            Schedule::Every(n) => Ok((1..).map(|k| k * n).take_while(|&t| t < horizon).collect()),
            Schedule::At(points) => {
                if points.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(EnvError::Schedule);
                }
                Ok(points.clone())
            }
        }
    }
}

/// Initial latent state distribution; the agent's prior matches it.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    #[default]
    Uniform,
    State(usize),
    Prior(Vec<f64>),
}

impl InitialState {
    pub fn prior(&self, num_states: usize) -> Result<BeliefState, EnvError> {
        match self {
            InitialState::Uniform => Ok(BeliefState::uniform(num_states)),
            InitialState::State(s) if *s < num_states => Ok(BeliefState::point(num_states, *s)),
            InitialState::State(s) => Err(EnvError::EdgeOutOfRange(*s, *s)),
            InitialState::Prior(p) => {
                if p.len() != num_states {
                    return Err(ModelError::StateMismatch {
                        kernel: p.len(),
                        model: num_states,
                    }
                    .into());
                }
                Ok(BeliefState::new(p.clone())?)
            }
        }
    }
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding slack: last state with positive mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Next state at a scheduled change point: the kernel's off-diagonal row
/// renormalized, or a uniform other state when the row has no such mass.
fn forced_switch<R: Rng + ?Sized>(kernel: &TransitionKernel, state: usize, rng: &mut R) -> usize {
    let n = kernel.num_states();
    let mut row = kernel.row(state).to_vec();
    row[state] = 0.0;
    let mass: f64 = row.iter().sum();
    if mass > 0.0 {
        row.iter_mut().for_each(|p| *p /= mass);
        sample_index(&row, rng)
    } else {
        let k = rng.random_range(0..n - 1);
        if k >= state {
            k + 1
        } else {
            k
        }
    }
}

/// Mutable environment position.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub true_state: usize,
    pub time: usize,
    pub schedule: Option<Vec<usize>>,
}

/// What happened on one step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepOutcome {
    pub context: usize,
    pub offered_arms: Vec<usize>,
    pub arm: usize,
    pub reward: f64,
    /// Mean of the chosen arm in the true state.
    pub chosen_mean: f64,
    /// Best mean over the offered arms in the true state.
    pub optimal_mean: f64,
    pub true_state: usize,
}

/// Context and arm set offered on one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Offer {
    pub context: usize,
    pub arms: Vec<usize>,
}

/// Draws the context (uniform over contexts) and arm set for a step.
pub fn draw_offer<R: Rng + ?Sized>(
    model: &RewardModel,
    arm_set_size: Option<usize>,
    rng: &mut R,
) -> Result<Offer, EnvError> {
    let context = if model.num_contexts() > 1 {
        rng.random_range(0..model.num_contexts())
    } else {
        0
    };
    let arms = match arm_set_size {
        Some(k) => sample_arm_set(model.num_arms(), k, rng)?,
        None => model.all_arms(),
    };
    Ok(Offer { context, arms })
}

/// Advances the latent state by one step.
pub fn advance_state<R: Rng + ?Sized>(env: &mut EnvState, kernel: &TransitionKernel, rng: &mut R) {
    env.time += 1;
    match &env.schedule {
        Some(points) => {
            if points.binary_search(&env.time).is_ok() {
                env.true_state = forced_switch(kernel, env.true_state, rng);
            }
        }
        None => env.true_state = sample_index(kernel.row(env.true_state), rng),
    }
}

/// One interaction step: the chosen arm's reward is drawn from the true
/// state's Gaussian, then the state advances (by schedule when present).
pub fn env_step<R: Rng + ?Sized>(
    env: &mut EnvState,
    kernel: &TransitionKernel,
    model: &RewardModel,
    offer: &Offer,
    chosen_arm: usize,
    rng: &mut R,
) -> Result<StepOutcome, EnvError> {
    if !offer.arms.contains(&chosen_arm) {
        return Err(EnvError::ArmNotOffered { arm: chosen_arm });
    }
    let s = env.true_state;
    let mean = model.mean(chosen_arm, offer.context, s);
    let z: f64 = StandardNormal.sample(rng);
    let outcome = StepOutcome {
        context: offer.context,
        offered_arms: offer.arms.clone(),
        arm: chosen_arm,
        reward: mean + model.std(chosen_arm, offer.context, s) * z,
        chosen_mean: mean,
        optimal_mean: model.optimal_mean(offer.context, s, &offer.arms),
        true_state: s,
    };
    advance_state(env, kernel, rng);
    Ok(outcome)
}

/// Everything about one run that does not depend on the policy: latent
/// states, offers and a standard-normal noise draw per step. Every policy
/// replays the same trajectory; its reward on step `t` is
/// `mean + std * noise[t]` for whatever arm it picks.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub offers: Vec<Offer>,
    pub noise: Vec<f64>,
}

impl Trajectory {
    pub fn generate<R: Rng + ?Sized>(
        model: &RewardModel,
        kernel: &TransitionKernel,
        initial: &BeliefState,
        schedule: Option<&Schedule>,
        arm_set_size: Option<usize>,
        horizon: usize,
        rng: &mut R,
    ) -> Result<Self, EnvError> {
        let mut env = EnvState {
            true_state: sample_index(initial.probs(), rng),
            time: 0,
            schedule: schedule.map(|s| s.change_points(horizon)).transpose()?,
        };
        let mut states = Vec::with_capacity(horizon);
        let mut offers = Vec::with_capacity(horizon);
        let mut noise = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            states.push(env.true_state);
            offers.push(draw_offer(model, arm_set_size, rng)?);
            noise.push(StandardNormal.sample(rng));
            advance_state(&mut env, kernel, rng);
        }
        Ok(Self {
            states,
            offers,
            noise,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Realized reward and step bookkeeping for `arm` at step `t`.
    pub fn outcome(&self, model: &RewardModel, t: usize, arm: usize) -> Result<StepOutcome, EnvError> {
        let offer = &self.offers[t];
        if !offer.arms.contains(&arm) {
            return Err(EnvError::ArmNotOffered { arm });
        }
        let s = self.states[t];
        let mean = model.mean(arm, offer.context, s);
        Ok(StepOutcome {
            context: offer.context,
            offered_arms: offer.arms.clone(),
            arm,
            reward: mean + model.std(arm, offer.context, s) * self.noise[t],
            chosen_mean: mean,
            optimal_mean: model.optimal_mean(offer.context, s, &offer.arms),
            true_state: s,
        })
    }
}
