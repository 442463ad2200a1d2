//! Strategies for the stationary two-state problem: explore-commit, the
//! expected posterior-sampling belief forecast, and explore-then-PS.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::RngCore;

use super::mts::{Mts, Sampling};
use super::{Policy, PolicyEnv, PolicyError, Round};
use crate::belief::gaussian_log_density;
use crate::model::{BeliefState, RewardModel};

/// Samples needed to tell the info arm's two means apart:
/// `max_i ceil((z_α + z_β)² σ_i² / δ²)`.
pub fn explore_commit_sample_size(
    delta: f64,
    std1: f64,
    std2: f64,
    z_alpha: f64,
    z_beta: f64,
) -> Result<usize, PolicyError> {
    if delta == 0.0 || !delta.is_finite() {
        return Err(PolicyError::ZeroShift);
    }
    let z = (z_alpha + z_beta).powi(2);
    let n = |std: f64| {
        let x = z * std * std / (delta * delta);
        // 2.8² · 0.25 / 0.04 is 49 up to rounding noise
        let r = x.round();
        if (x - r).abs() < 1e-9 {
            r
        } else {
            x.ceil()
        }
    };
    Ok(n(std1).max(n(std2)) as usize)
}

pub(crate) fn require_two_states(policy: &'static str, model: &RewardModel) -> Result<(), PolicyError> {
    if model.num_states() != 2 {
        return Err(PolicyError::NotTwoState {
            policy,
            states: model.num_states(),
        });
    }
    Ok(())
}

pub(crate) fn explore_commit_steps_for(
    model: &RewardModel,
    info_arm: usize,
    z_alpha: f64,
    z_beta: f64,
) -> Result<usize, PolicyError> {
    explore_commit_sample_size(
        model.mean(info_arm, 0, 1) - model.mean(info_arm, 0, 0),
        model.std(info_arm, 0, 0),
        model.std(info_arm, 0, 1),
        z_alpha,
        z_beta,
    )
}

/// State whose info-arm mean is nearest the observed average (lowest index on ties).
pub fn commit_state(model: &RewardModel, info_arm: usize, context: usize, mean_reward: f64) -> usize {
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for s in 0..model.num_states() {
        let d = (mean_reward - model.mean(info_arm, context, s)).abs();
        if d < best_dist {
            best = s;
            best_dist = d;
        }
    }
    best
}

/// Plays the info arm `steps` times, then commits to the nearest-mean state.
#[derive(Debug, Clone)]
pub struct ExploreCommit {
    label: String,
    model: Arc<RewardModel>,
    info_arm: usize,
    steps: usize,
    pulls: usize,
    sum: f64,
    committed: Option<usize>,
    last_info: bool,
}

impl ExploreCommit {
    pub fn new(label: String, env: &PolicyEnv, info_arm: usize, steps: usize) -> Self {
        Self {
            label,
            model: env.model.clone(),
            info_arm,
            steps,
            pulls: 0,
            sum: 0.0,
            committed: (steps == 0).then(|| env.prior.argmax()),
            last_info: false,
        }
    }

    pub fn committed(&self) -> Option<usize> {
        self.committed
    }
}

impl Policy for ExploreCommit {
    fn name(&self) -> &str {
        &self.label
    }

    fn select(&mut self, round: &Round<'_>, _rng: &mut dyn RngCore) -> usize {
        self.last_info = self.committed.is_none() && round.arms.contains(&self.info_arm);
        if self.last_info {
            return self.info_arm;
        }
        let state = self.committed.unwrap_or(0);
        self.model.best_arm(round.context, state, round.arms)
    }

    fn observe(&mut self, round: &Round<'_>, arm: usize, reward: f64) {
        if self.committed.is_some() || arm != self.info_arm {
            return;
        }
        self.pulls += 1;
        self.sum += reward;
        if self.pulls >= self.steps {
            let mean = self.sum / self.pulls as f64;
            self.committed = Some(commit_state(&self.model, self.info_arm, round.context, mean));
        }
    }

    fn last_was_info(&self) -> bool {
        self.last_info
    }
}

/// Plays the info arm `tau` times, then hands over to posterior sampling.
/// The belief is filtered throughout; with `tau = 0` it is plain mTS.
#[derive(Debug, Clone)]
pub struct ExploreThenPs {
    inner: Mts,
    info_arm: usize,
    tau: usize,
    pulls: usize,
    last_info: bool,
}

impl ExploreThenPs {
    pub fn new(label: String, env: &PolicyEnv, info_arm: usize, tau: usize) -> Self {
        Self {
            inner: Mts::new(label, env, Sampling::Posterior),
            info_arm,
            tau,
            pulls: 0,
            last_info: false,
        }
    }
}

impl Policy for ExploreThenPs {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn select(&mut self, round: &Round<'_>, rng: &mut dyn RngCore) -> usize {
        self.last_info = self.pulls < self.tau && round.arms.contains(&self.info_arm);
        if self.last_info {
            self.pulls += 1;
            return self.info_arm;
        }
        self.inner.select(round, rng)
    }

    fn observe(&mut self, round: &Round<'_>, arm: usize, reward: f64) {
        self.inner.observe(round, arm, reward);
    }

    fn belief(&self) -> Option<&BeliefState> {
        self.inner.belief()
    }

    fn last_was_info(&self) -> bool {
        self.last_info
    }
}

const QUAD_NODES: usize = 24;
const GRID_STEP: f64 = 0.05;
const GRID_HALF_WIDTH: f64 = 40.0;

/// Gauss–Hermite rule for a standard normal: points `z_k` and probabilities
/// `w_k` with `E[f(Z)] ≈ Σ w_k f(z_k)`, from the Jacobi matrix eigensystem.
fn normal_quadrature(n: usize) -> Vec<(f64, f64)> {
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        jacobi[(k, k - 1)] = b;
        jacobi[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut rule: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k] * std::f64::consts::SQRT_2, v0 * v0)
        })
        .collect();
    rule.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = rule.iter().map(|r| r.1).sum();
    rule.iter_mut().for_each(|r| r.1 /= total);
    rule
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Grid over the log-odds `log P(s0)/P(s1)`.
struct LogOddsGrid {
    center: f64,
    half: usize,
}

impl LogOddsGrid {
    fn new(p0: f64) -> Self {
        Self {
            center: logit(p0),
            half: (GRID_HALF_WIDTH / GRID_STEP).round() as usize,
        }
    }

    fn len(&self) -> usize {
        2 * self.half + 1
    }

    fn prob(&self, j: usize) -> f64 {
        sigmoid(self.center + (j as f64 - self.half as f64) * GRID_STEP)
    }

    /// Fractional target index, clamped to the grid: `(lower, upper weight)`.
    fn locate(&self, j: usize, shift: f64) -> (usize, f64) {
        let pos = (j as f64 + shift / GRID_STEP).clamp(0.0, (self.len() - 1) as f64);
        let lo = pos.floor() as usize;
        if lo + 1 >= self.len() {
            (self.len() - 1, 0.0)
        } else {
            (lo, pos - lo as f64)
        }
    }
}

/// Log-odds increments from one pull of `arm` when `true_state` is real,
/// as quadrature `(shift, probability)` pairs.
fn log_odds_increments(model: &RewardModel, arm: usize, true_state: usize, rule: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let (m0, s0) = (model.mean(arm, 0, 0), model.std(arm, 0, 0));
    let (m1, s1) = (model.mean(arm, 0, 1), model.std(arm, 0, 1));
    let (m, s) = (model.mean(arm, 0, true_state), model.std(arm, 0, true_state));
    rule.iter()
        .map(|&(z, w)| {
            let r = m + s * z;
            (gaussian_log_density(r, m0, s0) - gaussian_log_density(r, m1, s1), w)
        })
        .collect()
}

/// Probability of each arm under posterior sampling at belief `p = P(s0)`.
fn ps_mix(p: f64, greedy: &[usize]) -> [(usize, f64); 2] {
    [(greedy[0], p), (greedy[1], 1.0 - p)]
}

/// Pushes grid mass through one posterior-sampling step.
fn ps_step(grid: &LogOddsGrid, mass: &[f64], greedy: &[usize], incs: &[Vec<(f64, f64)>]) -> Vec<f64> {
    let mut out = vec![0.0; mass.len()];
    for (j, &m) in mass.iter().enumerate() {
        if m < 1e-300 {
            continue;
        }
        for (arm, prob) in ps_mix(grid.prob(j), greedy) {
            if prob <= 0.0 {
                continue;
            }
            for &(shift, w) in &incs[arm] {
                let (lo, up) = grid.locate(j, shift);
                let mw = m * prob * w;
                out[lo] += mw * (1.0 - up);
                if up > 0.0 {
                    out[lo + 1] += mw * up;
                }
            }
        }
    }
    out
}

fn info_step(grid: &LogOddsGrid, mass: &[f64], inc: &[(f64, f64)]) -> Vec<f64> {
    let mut out = vec![0.0; mass.len()];
    for (j, &m) in mass.iter().enumerate() {
        if m < 1e-300 {
            continue;
        }
        for &(shift, w) in inc {
            let (lo, up) = grid.locate(j, shift);
            out[lo] += m * w * (1.0 - up);
            if up > 0.0 {
                out[lo + 1] += m * w * up;
            }
        }
    }
    out
}

/// Expected belief `E[P_t(s0)]` under posterior sampling in the stationary
/// two-state problem, `steps + 1` values starting at `p0`, assuming the
/// true state is `s0`.
///
/// The belief's log-odds is tracked as a distribution on a fine grid; each
/// step mixes the two greedy arms by the current belief and adds the reward
/// log-likelihood ratio, integrated by Gauss–Hermite quadrature.
pub fn belief_forecast_two_state(p0: f64, model: &RewardModel, steps: usize) -> Result<Vec<f64>, PolicyError> {
    belief_forecast_two_state_in(p0, model, steps, 0)
}

/// Same forecast with rewards drawn from `true_state`.
pub fn belief_forecast_two_state_in(
    p0: f64,
    model: &RewardModel,
    steps: usize,
    true_state: usize,
) -> Result<Vec<f64>, PolicyError> {
    require_two_states("belief_forecast_two_state", model)?;
    if !(p0 > 0.0 && p0 < 1.0) {
        return Ok(vec![p0; steps + 1]);
    }
    let grid = LogOddsGrid::new(p0);
    let rule = normal_quadrature(QUAD_NODES);
    let greedy = model.greedy_arms(0, &model.all_arms());
    let incs: Vec<Vec<(f64, f64)>> = (0..model.num_arms())
        .map(|a| {
            if greedy.contains(&a) {
                log_odds_increments(model, a, true_state, &rule)
            } else {
                Vec::new()
            }
        })
        .collect();
    let mut mass = vec![0.0; grid.len()];
    mass[grid.half] = 1.0;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(p0);
    for _ in 0..steps {
        mass = ps_step(&grid, &mass, &greedy, &incs);
        let expected: f64 = mass.iter().enumerate().map(|(j, m)| m * grid.prob(j)).sum();
        out.push(expected.clamp(0.0, 1.0));
    }
    Ok(out)
}

/// Explore length for explore-then-PS with a uniform prior.
pub fn explore_then_ps_tau(model: &RewardModel, info_arm: usize, horizon: usize) -> Result<usize, PolicyError> {
    explore_then_ps_tau_with_prior(model, info_arm, horizon, &BeliefState::uniform(2))
}

/// `argmin_τ` of `τ` info pulls' regret plus the expected posterior-sampling
/// regret over the remaining `n − τ` steps, averaged over the true state
/// with the prior. Ties go to the smaller `τ`; `τ = 0` is pure PS.
pub fn explore_then_ps_tau_with_prior(
    model: &RewardModel,
    info_arm: usize,
    horizon: usize,
    prior: &BeliefState,
) -> Result<usize, PolicyError> {
    require_two_states("explore_then_ps", model)?;
    let p0 = prior.probs()[0];
    if !(p0 > 0.0 && p0 < 1.0) {
        return Ok(0);
    }
    let grid = LogOddsGrid::new(p0);
    let rule = normal_quadrature(QUAD_NODES);
    let arms = model.all_arms();
    let greedy = model.greedy_arms(0, &arms);
    let mut objective = vec![0.0; horizon + 1];
    for true_state in 0..2 {
        let weight = prior.probs()[true_state];
        let best = model.optimal_mean(0, true_state, &arms);
        let incs: Vec<Vec<(f64, f64)>> = (0..model.num_arms())
            .map(|a| {
                if greedy.contains(&a) {
                    log_odds_increments(model, a, true_state, &rule)
                } else {
                    Vec::new()
                }
            })
            .collect();
        let info_inc = log_odds_increments(model, info_arm, true_state, &rule);
        let step_regret: Vec<f64> = (0..grid.len())
            .map(|j| {
                ps_mix(grid.prob(j), &greedy)
                    .iter()
                    .map(|&(a, p)| p * (best - model.mean(a, 0, true_state)))
                    .sum()
            })
            .collect();
        // values[m][j]: expected PS regret over m steps from node j
        let mut values: Vec<Vec<f64>> = Vec::with_capacity(horizon + 1);
        values.push(vec![0.0; grid.len()]);
        for m in 1..=horizon {
            let prev = &values[m - 1];
            let next: Vec<f64> = (0..grid.len())
                .map(|j| {
                    let mut v = step_regret[j];
                    for (arm, prob) in ps_mix(grid.prob(j), &greedy) {
                        if prob <= 0.0 {
                            continue;
                        }
                        for &(shift, w) in &incs[arm] {
                            let (lo, up) = grid.locate(j, shift);
                            let fut = if up > 0.0 {
                                prev[lo] * (1.0 - up) + prev[lo + 1] * up
                            } else {
                                prev[lo]
                            };
                            v += prob * w * fut;
                        }
                    }
                    v
                })
                .collect();
            values.push(next);
        }
        let cost = best - model.mean(info_arm, 0, true_state);
        let mut mass = vec![0.0; grid.len()];
        mass[grid.half] = 1.0;
        for (tau, obj) in objective.iter_mut().enumerate() {
            let ps: f64 = mass.iter().zip(&values[horizon - tau]).map(|(m, v)| m * v).sum();
            *obj += weight * (tau as f64 * cost + ps);
            if tau < horizon {
                mass = info_step(&grid, &mass, &info_inc);
            }
        }
    }
    let mut best_tau = 0;
    for (tau, &v) in objective.iter().enumerate() {
        if v < objective[best_tau] {
            best_tau = tau;
        }
    }
    Ok(best_tau)
}
