//! Monte Carlo runs with paired trajectories.

use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{resolve_kernel, resolve_model, resolve_prior, ExperimentConfig, ResolvedModel};
use super::HarnessError;
use crate::datasets::Provenance;
use crate::environments::Trajectory;
use crate::model::RewardModel;
use crate::policies::{PolicyEnv, PolicyKind, PreparedPolicy, Round};

/// One step of one policy in one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub run: usize,
    pub seed: u64,
    pub policy: String,
    pub t: usize,
    pub state: usize,
    pub context: usize,
    pub arms: Vec<usize>,
    pub arm: usize,
    pub reward: f64,
    pub regret: f64,
    pub cum_regret: f64,
    pub info: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub belief: Option<Vec<f64>>,
}

/// One policy's outcome in one run.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyRun {
    /// Cumulative pseudo-regret after each step.
    pub cumulative: Vec<f64>,
    /// Cumulative realized regret: the optimal arm's reward under the same
    /// noise draw minus the obtained reward.
    pub realized: Vec<f64>,
    /// Steps on which the policy made an information-gathering choice.
    pub info_steps: Vec<usize>,
    pub final_belief: Option<Vec<f64>>,
    pub trace: Option<Vec<StepRecord>>,
}

impl PolicyRun {
    pub fn final_regret(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub run: usize,
    pub seed: u64,
    pub states: Vec<usize>,
    /// Indexed like `ExperimentResult::labels`.
    pub policies: Vec<PolicyRun>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PolicyInfo {
    pub label: String,
    pub name: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explore_steps: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub labels: Vec<String>,
    pub policy_info: Vec<PolicyInfo>,
    pub runs: Vec<RunResult>,
    pub provenance: Option<Provenance>,
    pub wall_seconds: f64,
}

impl ExperimentResult {
    pub fn policy_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Cumulative pseudo-regret curves of one policy, one per run.
    pub fn curves(&self, policy: usize) -> Vec<&[f64]> {
        self.runs.iter().map(|r| r.policies[policy].cumulative.as_slice()).collect()
    }
}

enum Runner {
    Oracle,
    Prepared(Box<PreparedPolicy>),
}

struct Setup {
    labels: Vec<String>,
    runners: Vec<Runner>,
    info: Vec<PolicyInfo>,
}

fn prepare(cfg: &ExperimentConfig, env: &PolicyEnv) -> Result<Setup, HarnessError> {
    let mut labels = Vec::new();
    let mut runners = Vec::new();
    let mut info = Vec::new();
    for spec in &cfg.policies {
        let label = spec.label();
        let runner = if spec.name == PolicyKind::Oracle {
            Runner::Oracle
        } else {
            let prepared = spec
                .prepare(env)
                .map_err(|e| HarnessError::Config(format!("policy `{label}`: {e}")))?;
            Runner::Prepared(Box::new(prepared))
        };
        info.push(PolicyInfo {
            label: label.clone(),
            name: spec.name.as_str(),
            explore_steps: match &runner {
                Runner::Prepared(p) => p.explore_steps(),
                Runner::Oracle => None,
            },
        });
        labels.push(label);
        runners.push(runner);
    }
    Ok(Setup { labels, runners, info })
}

/// Policy randomness is a second stream of the run seed, shared by every
/// policy so that paired comparisons use common random numbers.
pub fn policy_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

pub fn trajectory_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Plays one policy along a trajectory.
pub fn play(
    runner_label: &str,
    policy: Option<&PreparedPolicy>,
    model: &RewardModel,
    traj: &Trajectory,
    seed: u64,
    run: usize,
    keep_trace: bool,
) -> Result<PolicyRun, HarnessError> {
    let horizon = traj.len();
    let mut rng = policy_rng(seed);
    let mut agent = policy.map(PreparedPolicy::instantiate);
    let mut cumulative = Vec::with_capacity(horizon);
    let mut realized = Vec::with_capacity(horizon);
    let mut info_steps = Vec::new();
    let mut trace = keep_trace.then(|| Vec::with_capacity(horizon));
    let (mut cum, mut cum_real) = (0.0, 0.0);
    for t in 0..horizon {
        let offer = &traj.offers[t];
        let round = Round {
            t,
            context: offer.context,
            arms: &offer.arms,
        };
        let state = traj.states[t];
        let (arm, is_info) = match agent.as_mut() {
            Some(a) => {
                let arm = a.select(&round, &mut rng);
                (arm, a.last_was_info())
            }
            None => (model.best_arm(offer.context, state, &offer.arms), false),
        };
        let out = traj.outcome(model, t, arm).map_err(|e| {
            HarnessError::Runtime(format!("run {run}, policy `{runner_label}`, step {t}: {e}"))
        })?;
        if let Some(a) = agent.as_mut() {
            a.observe(&round, arm, out.reward);
        }
        let best = model.best_arm(offer.context, state, &offer.arms);
        let best_reward = out.optimal_mean + model.std(best, offer.context, state) * traj.noise[t];
        let regret = (out.optimal_mean - out.chosen_mean).max(0.0);
        cum += regret;
        cum_real += best_reward - out.reward;
        cumulative.push(cum);
        realized.push(cum_real);
        if is_info {
            info_steps.push(t);
        }
        if let Some(tr) = trace.as_mut() {
            tr.push(StepRecord {
                run,
                seed,
                policy: runner_label.to_string(),
                t,
                state,
                context: offer.context,
                arms: offer.arms.clone(),
                arm,
                reward: out.reward,
                regret,
                cum_regret: cum,
                info: is_info,
                belief: agent.as_ref().and_then(|a| a.belief()).map(|b| b.probs().to_vec()),
            });
        }
    }
    Ok(PolicyRun {
        cumulative,
        realized,
        info_steps,
        final_belief: agent.as_ref().and_then(|a| a.belief()).map(|b| b.probs().to_vec()),
        trace,
    })
}

/// Runs every configured policy on `num_runs` seeded trajectories. Run `r`
/// uses seed `base_seed + r`; runs execute in parallel and are collected in
/// order, so results do not depend on the thread count.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    cfg.validate_shape()?;
    let resolved = resolve_model(&cfg.model)?;
    run_with_model(cfg, &resolved)
}

/// `run_experiment` with an already resolved model.
pub fn run_with_model(cfg: &ExperimentConfig, resolved: &ResolvedModel) -> Result<ExperimentResult, HarnessError> {
    cfg.validate_shape()?;
    let start = Instant::now();
    let model = resolved.model.clone();
    let prior = resolve_prior(cfg, model.num_states())?;
    if let Some(k) = cfg.arm_set_size {
        if k == 0 || k > model.num_arms() {
            return Err(HarnessError::Config(format!(
                "arm_set_size {k} must lie in 1..={}",
                model.num_arms()
            )));
        }
    }
    if let Some(s) = &cfg.schedule {
        s.change_points(cfg.horizon).map_err(|e| HarnessError::Config(e.to_string()))?;
    }
    let env_for = |offset: u64| -> Result<PolicyEnv, HarnessError> {
        Ok(PolicyEnv {
            model: model.clone(),
            kernel: Arc::new(resolve_kernel(cfg, resolved, offset)?),
            prior: prior.clone(),
            horizon: cfg.horizon,
        })
    };
    let shared_env = env_for(0)?;
    let shared = prepare(cfg, &shared_env)?;

    let runs: Vec<Result<RunResult, HarnessError>> = (0..cfg.num_runs)
        .into_par_iter()
        .map(|r| {
            let seed = cfg.base_seed.wrapping_add(r as u64);
            let local;
            let (env, setup) = if cfg.kernel_per_run {
                let env = env_for(seed)?;
                local = prepare(cfg, &env)?;
                (env, &local)
            } else {
                (shared_env.clone(), &shared)
            };
            let mut rng = trajectory_rng(seed);
            let traj = Trajectory::generate(
                &model,
                &env.kernel,
                &prior,
                cfg.schedule.as_ref(),
                cfg.arm_set_size,
                cfg.horizon,
                &mut rng,
            )
            .map_err(|e| HarnessError::Runtime(format!("run {r}: {e}")))?;
            let keep = r < cfg.output.max_trace_runs;
            let policies = setup
                .runners
                .iter()
                .zip(&setup.labels)
                .map(|(runner, label)| {
                    let prepared = match runner {
                        Runner::Oracle => None,
                        Runner::Prepared(p) => Some(p.as_ref()),
                    };
                    play(label, prepared, &model, &traj, seed, r, keep)
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(RunResult {
                run: r,
                seed,
                states: traj.states,
                policies,
            })
        })
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(ExperimentResult {
        config: cfg.clone(),
        labels: shared.labels,
        policy_info: shared.info,
        runs,
        provenance: resolved.provenance.clone(),
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{ModelSource, OutputConfig, PresetName};
    use crate::environments::InitialState;
    use crate::model::{ModelFile, presets::FIVE_STATE_MEANS};
    use crate::policies::PolicySpec;

    fn config(policies: Vec<PolicySpec>, horizon: usize, runs: usize) -> ExperimentConfig {
        ExperimentConfig {
            name: "t".into(),
            model: ModelSource::Preset {
                name: PresetName::TwoState,
                info_std: 0.01,
            },
            transition: None,
            kernel_per_run: false,
            schedule: None,
            initial: InitialState::Uniform,
            arm_set_size: None,
            policies,
            horizon,
            num_runs: runs,
            base_seed: 3,
            sweep: Default::default(),
            output: OutputConfig::default(),
        }
    }

    #[test]
    fn oracle_has_zero_regret() {
        let cfg = config(vec![PolicySpec::new(PolicyKind::Oracle)], 200, 4);
        let res = run_experiment(&cfg).unwrap();
        for r in &res.runs {
            assert!(r.policies[0].cumulative.iter().all(|&x| x == 0.0));
            assert!(r.policies[0].realized.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn horizon_one_optimal_play() {
        // a point prior makes greedy mTS play the optimal arm at once
        let mut cfg = config(vec![PolicySpec::new(PolicyKind::GreedyMts)], 1, 2);
        cfg.initial = InitialState::State(1);
        let res = run_experiment(&cfg).unwrap();
        assert_eq!(res.runs[0].policies[0].cumulative, vec![0.0]);
    }

    #[test]
    fn cumulative_regret_is_monotone_and_paired() {
        let cfg = config(
            vec![PolicySpec::new(PolicyKind::Mts), PolicySpec::new(PolicyKind::Uniform)],
            300,
            3,
        );
        let res = run_experiment(&cfg).unwrap();
        for r in &res.runs {
            for p in &r.policies {
                assert!(p.cumulative.windows(2).all(|w| w[1] >= w[0]));
            }
            let a = r.policies[0].trace.as_ref().unwrap();
            let b = r.policies[1].trace.as_ref().unwrap();
            for (x, y) in a.iter().zip(b) {
                assert_eq!((x.state, &x.arms, x.context), (y.state, &y.arms, y.context));
            }
        }
    }

    #[test]
    fn uniform_policy_regret_matches_mean_gap() {
        // stationary s1 of the five-state matrix (column 0): best arm pays 2.1
        let means: Vec<Vec<f64>> = FIVE_STATE_MEANS.iter().map(|r| r.to_vec()).collect();
        let stds = vec![vec![0.5; 5]; 5];
        let mut cfg = config(vec![PolicySpec::new(PolicyKind::Uniform)], 10_000, 1);
        cfg.model = ModelSource::Inline(ModelFile {
            num_contexts: 1,
            means: means.clone(),
            stds,
            transition: None,
        });
        cfg.initial = InitialState::State(0);
        cfg.output.max_trace_runs = 0;
        let res = run_experiment(&cfg).unwrap();
        let gaps: Vec<f64> = means.iter().map(|r| 2.1 - r[0]).collect();
        let mean_gap = gaps.iter().sum::<f64>() / 5.0;
        let var = gaps.iter().map(|g| (g - mean_gap).powi(2)).sum::<f64>() / 5.0;
        let n = 10_000.0;
        let per_step = res.runs[0].policies[0].final_regret() / n;
        let se = (var / n).sqrt();
        assert!((per_step - mean_gap).abs() < 3.0 * se, "{per_step} vs {mean_gap}");
    }

    #[test]
    fn results_are_reproducible() {
        let cfg = config(
            vec![PolicySpec::new(PolicyKind::Agemts), PolicySpec::new(PolicyKind::Mts)],
            100,
            6,
        );
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        for (x, y) in a.runs.iter().zip(&b.runs) {
            assert_eq!(x.policies, y.policies);
        }
    }
}
