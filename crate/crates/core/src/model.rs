//! Model types shared by every policy: the Gaussian reward model, the
//! latent-state transition kernel and the belief vector.
//!
//! Reward tensors are stored flat in `[arm][context][state]` order. The JSON
//! form keeps one row per arm with `num_contexts * num_states` columns
//! (column index `context * num_states + state`), so a context-free model is
//! written exactly like the usual "rows are arms, columns are states" matrix.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used when validating stochastic vectors and matrices.
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("reward model needs at least 2 arms and 2 states (got {arms} arms, {states} states)")]
    TooSmall { arms: usize, states: usize },
    #[error("num_contexts must be at least 1")]
    NoContexts,
    #[error("{field}: expected {expected} values, found {found}")]
    Shape {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite mean at arm {arm}, column {column}")]
    NonFiniteMean { arm: usize, column: usize },
    #[error("std at arm {arm}, column {column} must be finite and > 0 (got {value})")]
    BadStd { arm: usize, column: usize, value: f64 },
    #[error("transition row {row} sums to {sum}, expected 1")]
    RowSum { row: usize, sum: f64 },
    #[error("transition entry ({row}, {col}) = {value} is outside [0, 1]")]
    Entry { row: usize, col: usize, value: f64 },
    #[error("transition matrix must be square and non-empty")]
    NotSquare,
    #[error("belief sums to {0}, expected 1")]
    BeliefSum(f64),
    #[error("belief entry {index} = {value} is negative or non-finite")]
    BeliefEntry { index: usize, value: f64 },
    #[error("kernel has {kernel} states but the reward model has {model}")]
    StateMismatch { kernel: usize, model: usize },
}

/// Per `(arm, context, state)` Gaussian reward distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardModel {
    num_arms: usize,
    num_contexts: usize,
    num_states: usize,
    means: Vec<f64>,
    stds: Vec<f64>,
}

impl RewardModel {
    /// Builds a model from flat `[arm][context][state]` tensors.
    pub fn from_flat(
        num_arms: usize,
        num_contexts: usize,
        num_states: usize,
        means: Vec<f64>,
        stds: Vec<f64>,
    ) -> Result<Self, ModelError> {
        if num_contexts == 0 {
            return Err(ModelError::NoContexts);
        }
        if num_arms < 2 || num_states < 2 {
            return Err(ModelError::TooSmall {
                arms: num_arms,
                states: num_states,
            });
        }
        let n = num_arms * num_contexts * num_states;
        if means.len() != n {
            return Err(ModelError::Shape {
                field: "means",
                expected: n,
                found: means.len(),
            });
        }
        if stds.len() != n {
            return Err(ModelError::Shape {
                field: "stds",
                expected: n,
                found: stds.len(),
            });
        }
        let cols = num_contexts * num_states;
        for (i, (&m, &s)) in means.iter().zip(&stds).enumerate() {
            if !m.is_finite() {
                return Err(ModelError::NonFiniteMean {
                    arm: i / cols,
                    column: i % cols,
                });
            }
            if !(s.is_finite() && s > 0.0) {
                return Err(ModelError::BadStd {
                    arm: i / cols,
                    column: i % cols,
                    value: s,
                });
            }
        }
        Ok(Self {
            num_arms,
            num_contexts,
            num_states,
            means,
            stds,
        })
    }

    /// Builds a model from per-arm rows of `num_contexts * num_states` columns.
    pub fn from_rows(
        num_contexts: usize,
        means: &[Vec<f64>],
        stds: &[Vec<f64>],
    ) -> Result<Self, ModelError> {
        if num_contexts == 0 {
            return Err(ModelError::NoContexts);
        }
        let cols = means.first().map_or(0, Vec::len);
        if !cols.is_multiple_of(num_contexts) {
            return Err(ModelError::Shape {
                field: "means",
                expected: num_contexts * (cols / num_contexts + 1),
                found: cols,
            });
        }
        for (field, rows) in [("means", means), ("stds", stds)] {
            if rows.len() != means.len() {
                return Err(ModelError::Shape {
                    field,
                    expected: means.len(),
                    found: rows.len(),
                });
            }
            if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
                return Err(ModelError::Shape {
                    field,
                    expected: cols,
                    found: bad.len(),
                });
            }
        }
        Self::from_flat(
            means.len(),
            num_contexts,
            cols / num_contexts,
            means.concat(),
            stds.concat(),
        )
    }

    /// Context-free model where every entry shares one standard deviation.
    pub fn with_constant_std(means: &[Vec<f64>], std: f64) -> Result<Self, ModelError> {
        let stds: Vec<Vec<f64>> = means.iter().map(|r| vec![std; r.len()]).collect();
        Self::from_rows(1, means, &stds)
    }

    pub fn num_arms(&self) -> usize {
        self.num_arms
    }

    pub fn num_contexts(&self) -> usize {
        self.num_contexts
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    #[inline]
    fn idx(&self, arm: usize, context: usize, state: usize) -> usize {
        debug_assert!(arm < self.num_arms && context < self.num_contexts && state < self.num_states);
        (arm * self.num_contexts + context) * self.num_states + state
    }

    #[inline]
    pub fn mean(&self, arm: usize, context: usize, state: usize) -> f64 {
        self.means[self.idx(arm, context, state)]
    }

    #[inline]
    pub fn std(&self, arm: usize, context: usize, state: usize) -> f64 {
        self.stds[self.idx(arm, context, state)]
    }

    /// All arm indices, in order.
    pub fn all_arms(&self) -> Vec<usize> {
        (0..self.num_arms).collect()
    }

    /// Highest-mean arm among `arms` for a known state; ties go to the
    /// earliest arm in `arms`.
    pub fn best_arm(&self, context: usize, state: usize, arms: &[usize]) -> usize {
        let mut best = arms[0];
        let mut best_mean = self.mean(best, context, state);
        for &a in &arms[1..] {
            let m = self.mean(a, context, state);
            if m > best_mean {
                best = a;
                best_mean = m;
            }
        }
        best
    }

    /// Mean of the best arm among `arms` in `state`.
    pub fn optimal_mean(&self, context: usize, state: usize, arms: &[usize]) -> f64 {
        self.mean(self.best_arm(context, state, arms), context, state)
    }

    /// Greedy arm for each state, indexed by state.
    pub fn greedy_arms(&self, context: usize, arms: &[usize]) -> Vec<usize> {
        (0..self.num_states)
            .map(|s| self.best_arm(context, s, arms))
            .collect()
    }

    /// Copy of the model with `offset` added to every mean.
    pub fn shifted(&self, offset: f64) -> Self {
        let mut out = self.clone();
        out.means.iter_mut().for_each(|m| *m += offset);
        out
    }

    /// Copy of the model with states reordered: new state `i` is old state `order[i]`.
    pub fn permute_states(&self, order: &[usize]) -> Self {
        assert_eq!(order.len(), self.num_states);
        let mut out = self.clone();
        for a in 0..self.num_arms {
            for x in 0..self.num_contexts {
                for (new, &old) in order.iter().enumerate() {
                    let dst = out.idx(a, x, new);
                    out.means[dst] = self.mean(a, x, old);
                    out.stds[dst] = self.std(a, x, old);
                }
            }
        }
        out
    }

    /// Per-arm rows of `num_contexts * num_states` columns.
    pub fn mean_rows(&self) -> Vec<Vec<f64>> {
        self.means
            .chunks(self.num_contexts * self.num_states)
            .map(<[f64]>::to_vec)
            .collect()
    }

    pub fn std_rows(&self) -> Vec<Vec<f64>> {
        self.stds
            .chunks(self.num_contexts * self.num_states)
            .map(<[f64]>::to_vec)
            .collect()
    }
}

/// Row-stochastic latent-state transition matrix, `matrix[from][to]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    n: usize,
    matrix: Vec<f64>,
}

impl TransitionKernel {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(ModelError::NotSquare);
        }
        for (i, row) in rows.iter().enumerate() {
            for (j, &p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    return Err(ModelError::Entry {
                        row: i,
                        col: j,
                        value: p,
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(ModelError::RowSum { row: i, sum });
            }
        }
        Ok(Self {
            n,
            matrix: rows.concat(),
        })
    }

    /// Stationary chain: the state never changes.
    pub fn identity(n: usize) -> Self {
        let mut matrix = vec![0.0; n * n];
        for i in 0..n {
            matrix[i * n + i] = 1.0;
        }
        Self { n, matrix }
    }

    pub fn num_states(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.matrix[from * self.n + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.matrix[from * self.n..(from + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.matrix.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    pub fn stay_prob(&self, state: usize) -> f64 {
        self.prob(state, state)
    }

    pub fn permute_states(&self, order: &[usize]) -> Self {
        assert_eq!(order.len(), self.n);
        let mut matrix = vec![0.0; self.n * self.n];
        for (i, &oi) in order.iter().enumerate() {
            for (j, &oj) in order.iter().enumerate() {
                matrix[i * self.n + j] = self.prob(oi, oj);
            }
        }
        Self { n: self.n, matrix }
    }
}

/// Probability vector over latent states.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct BeliefState {
    probs: Vec<f64>,
}

impl BeliefState {
    pub fn new(probs: Vec<f64>) -> Result<Self, ModelError> {
        for (i, &p) in probs.iter().enumerate() {
            if !(p.is_finite() && p >= 0.0) {
                return Err(ModelError::BeliefEntry { index: i, value: p });
            }
        }
        let sum: f64 = probs.iter().sum();
        if probs.is_empty() || (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(ModelError::BeliefSum(sum));
        }
        Ok(Self { probs })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn point(n: usize, state: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[state] = 1.0;
        Self { probs }
    }

    /// Normalizes non-negative weights. Returns `None` when the total mass is
    /// zero or not finite.
    pub fn from_weights(mut weights: Vec<f64>) -> Option<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum.is_finite() && sum > 0.0) {
            return None;
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        Some(Self { probs: weights })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Most likely state; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

/// On-disk form of a reward model, optionally bundled with a transition kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub num_contexts: usize,
    pub means: Vec<Vec<f64>>,
    pub stds: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition: Option<Vec<Vec<f64>>>,
}

impl ModelFile {
    pub fn from_model(model: &RewardModel, kernel: Option<&TransitionKernel>) -> Self {
        Self {
            num_contexts: model.num_contexts(),
            means: model.mean_rows(),
            stds: model.std_rows(),
            transition: kernel.map(TransitionKernel::rows),
        }
    }

    pub fn reward_model(&self) -> Result<RewardModel, ModelError> {
        RewardModel::from_rows(self.num_contexts, &self.means, &self.stds)
    }

    pub fn kernel(&self) -> Result<Option<TransitionKernel>, ModelError> {
        let Some(rows) = &self.transition else {
            return Ok(None);
        };
        let kernel = TransitionKernel::new(rows.clone())?;
        let model_states = self.means.first().map_or(0, Vec::len) / self.num_contexts.max(1);
        if kernel.num_states() != model_states {
            return Err(ModelError::StateMismatch {
                kernel: kernel.num_states(),
                model: model_states,
            });
        }
        Ok(Some(kernel))
    }
}

/// Reference models used by the synthetic experiments.
pub mod presets {
    use super::RewardModel;

    /// Two-state stationary setting: rows are arms, columns are states.
    pub const TWO_STATE_MEANS: [[f64; 2]; 3] = [[2.1, 2.05], [2.05, 2.1], [1.7, 1.5]];

    /// Five-state setting: rows are arms, columns are states.
    pub const FIVE_STATE_MEANS: [[f64; 5]; 5] = [
        [2.1, 2.05, 1.40, 1.45, 1.0],
        [2.05, 2.1, 1.45, 1.40, 0.95],
        [2.0, 1.9, 1.50, 1.55, 1.05],
        [2.05, 2.1, 1.55, 1.50, 1.1],
        [1.0, 0.9, 0.8, 0.7, 0.6],
    ];

    /// Column order that puts the five-state matrix into start/branch order:
    /// state 0 is the start state, states 1 and 3 (and 2 and 4) are the
    /// look-alike pairs of the two branches `0 -> 1 -> 2` and `0 -> 3 -> 4`.
    pub const FIVE_STATE_BRANCH_ORDER: [usize; 5] = [4, 0, 2, 1, 3];

    fn build(rows: &[&[f64]], base_std: f64, info_arm: usize, info_std: f64) -> RewardModel {
        let means: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        let stds: Vec<Vec<f64>> = means
            .iter()
            .enumerate()
            .map(|(a, r)| vec![if a == info_arm { info_std } else { base_std }; r.len()])
            .collect();
        RewardModel::from_rows(1, &means, &stds).expect("preset models are valid")
    }

    /// Two-state model with `sigma = 0.5` everywhere except the third arm.
    pub fn two_state(info_std: f64) -> RewardModel {
        let rows: Vec<&[f64]> = TWO_STATE_MEANS.iter().map(|r| &r[..]).collect();
        build(&rows, 0.5, 2, info_std)
    }

    /// Five-state model in the matrix's own column order.
    pub fn five_state(info_std: f64) -> RewardModel {
        let rows: Vec<&[f64]> = FIVE_STATE_MEANS.iter().map(|r| &r[..]).collect();
        build(&rows, 0.5, 4, info_std)
    }

    /// Five-state model reordered for the start/branch transition graphs.
    pub fn five_state_branch_order(info_std: f64) -> RewardModel {
        five_state(info_std).permute_states(&FIVE_STATE_BRANCH_ORDER)
    }

    /// Parametric two-state family used by the regions-of-benefit sweeps.
    ///
    /// Arms 0 and 1 are each best in one state and `delta_r` worse in the
    /// other; state 1 rewards are `delta_sigma` noisier than state 0.
    pub fn two_state_family(
        best_mean: f64,
        delta_r: f64,
        sigma: f64,
        delta_sigma: f64,
        info_means: [f64; 2],
        info_std: f64,
    ) -> RewardModel {
        let means = vec![
            vec![best_mean, best_mean - delta_r],
            vec![best_mean - delta_r, best_mean],
            info_means.to_vec(),
        ];
        let stds = vec![
            vec![sigma, sigma + delta_sigma],
            vec![sigma, sigma + delta_sigma],
            vec![info_std, info_std],
        ];
        RewardModel::from_rows(1, &means, &stds).expect("family parameters must give a valid model")
    }
}
