//! Reward models from factor models and a super-user.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DatasetError, FactorModel, SuperUser};
use crate::model::RewardModel;

pub const STD_FLOOR: f64 = 0.01;
const RESAMPLE_TRIES: usize = 100;

/// How reward standard deviations are produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum VarianceMode {
    Fixed {
        #[serde(default = "default_sigma")]
        sigma: f64,
    },
    /// Spread of the user's predicted ratings over the item's three nearest
    /// items in factor space.
    ThreeNn,
    /// One std per item drawn from a normal, redrawn while below the floor.
    SampledNormal {
        #[serde(default = "default_sn_mean")]
        mean: f64,
        #[serde(default = "default_sn_std")]
        std: f64,
    },
}

fn default_sigma() -> f64 {
    0.25
}
fn default_sn_mean() -> f64 {
    2.0
}
fn default_sn_std() -> f64 {
    0.8
}

impl Default for VarianceMode {
    fn default() -> Self {
        VarianceMode::Fixed { sigma: default_sigma() }
    }
}

#[derive(Debug, Clone)]
pub struct BuiltModel {
    pub model: RewardModel,
    /// Entries raised to `STD_FLOOR`.
    pub clamped: usize,
}

/// Means are `U[user_s] . V[item_a]`; one context; one state per super-user
/// member.
pub fn build_reward_model(
    factors: &FactorModel,
    super_user: &SuperUser,
    catalog: &[usize],
    mode: &VarianceMode,
    seed: u64,
) -> Result<BuiltModel, DatasetError> {
    if catalog.is_empty() {
        return Err(DatasetError::Config("catalog is empty".into()));
    }
    if let Some(&bad) = catalog.iter().find(|&&i| i >= factors.num_items()) {
        return Err(DatasetError::Config(format!("catalog item {bad} out of range")));
    }
    if let Some(&bad) = super_user.users.iter().find(|&&u| u >= factors.num_users()) {
        return Err(DatasetError::Config(format!("super-user member {bad} out of range")));
    }
    let users = &super_user.users;
    let means: Vec<Vec<f64>> = catalog
        .iter()
        .map(|&item| users.iter().map(|&u| factors.predict(u, item)).collect())
        .collect();
    let mut clamped = 0;
    let mut floor = |s: f64| {
        if s < STD_FLOOR || !s.is_finite() {
            clamped += 1;
            STD_FLOOR
        } else {
            s
        }
    };
    let stds: Vec<Vec<f64>> = match *mode {
        VarianceMode::Fixed { sigma } => {
            if !(sigma.is_finite() && sigma > 0.0) {
                return Err(DatasetError::Config(format!("sigma must be positive, got {sigma}")));
            }
            catalog.iter().map(|_| users.iter().map(|_| floor(sigma)).collect()).collect()
        }
        VarianceMode::ThreeNn => catalog
            .iter()
            .map(|&item| {
                let nn = nearest_items(factors, item, 3);
                users
                    .iter()
                    .map(|&u| {
                        let preds: Vec<f64> = nn.iter().map(|&j| factors.predict(u, j)).collect();
                        floor(population_std(&preds))
                    })
                    .collect()
            })
            .collect(),
        VarianceMode::SampledNormal { mean, std } => {
            let dist = Normal::new(mean, std)
                .map_err(|e| DatasetError::Config(format!("bad sampled_normal parameters: {e}")))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            catalog
                .iter()
                .map(|_| {
                    let s = truncated_draw(&dist, &mut rng);
                    let s = floor(s);
                    vec![s; users.len()]
                })
                .collect()
        }
    };
    let model = RewardModel::from_rows(1, &means, &stds)?;
    Ok(BuiltModel { model, clamped })
}

fn truncated_draw(dist: &Normal<f64>, rng: &mut ChaCha8Rng) -> f64 {
    let mut s = dist.sample(rng);
    for _ in 1..RESAMPLE_TRIES {
        if s >= STD_FLOOR {
            break;
        }
        s = dist.sample(rng);
    }
    s
}

/// Draws `n` stds the way `SampledNormal` does.
pub fn sample_item_stds(mean: f64, std: f64, n: usize, seed: u64) -> Result<Vec<f64>, DatasetError> {
    let dist = Normal::new(mean, std).map_err(|e| DatasetError::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| truncated_draw(&dist, &mut rng).max(STD_FLOOR)).collect())
}

/// The `k` items closest to `item` in factor space, excluding itself; ties
/// go to the lower index.
pub fn nearest_items(factors: &FactorModel, item: usize, k: usize) -> Vec<usize> {
    let target = factors.v.row(item);
    let mut others: Vec<(f64, usize)> = (0..factors.num_items())
        .filter(|&j| j != item)
        .map(|j| ((factors.v.row(j) - target).norm_squared(), j))
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    others.into_iter().take(k).map(|(_, j)| j).collect()
}

fn population_std(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::Rng;

    fn random_factors(users: usize, items: usize, d: usize, seed: u64) -> FactorModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = DMatrix::from_fn(users, d, |_, _| rng.random_range(-1.0..1.0));
        let v = DMatrix::from_fn(items, d, |_, _| rng.random_range(-1.0..1.0));
        FactorModel::new(u, v).unwrap()
    }

    fn su(users: Vec<usize>) -> SuperUser {
        SuperUser { users, pairing: vec![] }
    }

    #[test]
    fn means_are_naive_dot_products() {
        let f = random_factors(10, 30, 4, 1);
        let catalog = vec![3, 7, 0, 29, 12];
        let built = build_reward_model(&f, &su(vec![1, 4, 9]), &catalog, &VarianceMode::default(), 0).unwrap();
        for (a, &item) in catalog.iter().enumerate() {
            for (s, &user) in [1usize, 4, 9].iter().enumerate() {
                let mut dot = 0.0;
                for k in 0..4 {
                    dot += f.u[(user, k)] * f.v[(item, k)];
                }
                assert!((built.model.mean(a, 0, s) - dot).abs() < 1e-12);
                assert_eq!(built.model.std(a, 0, s), 0.25);
            }
        }
        assert_eq!(built.clamped, 0);
    }

    #[test]
    fn identical_neighbours_clamp_to_floor() {
        // items 1, 2, 3 coincide, so item 0's neighbourhood is degenerate
        let u = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.3, 2.0]);
        let v = DMatrix::from_row_slice(5, 2, &[0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 9.0, 9.0]);
        let f = FactorModel::new(u, v).unwrap();
        let built = build_reward_model(&f, &su(vec![0, 1]), &[0, 4], &VarianceMode::ThreeNn, 0).unwrap();
        assert_eq!(built.model.std(0, 0, 0), STD_FLOOR);
        assert_eq!(built.model.std(0, 0, 1), STD_FLOOR);
        // item 4's neighbours are 1, 2, 3 as well (ties by index)
        assert_eq!(nearest_items(&f, 4, 3), vec![1, 2, 3]);
        assert_eq!(built.clamped, 4);
    }

    #[test]
    fn three_nn_matches_direct_computation() {
        let f = random_factors(4, 12, 3, 2);
        let built = build_reward_model(&f, &su(vec![0, 3]), &[5, 6], &VarianceMode::ThreeNn, 0).unwrap();
        let nn = nearest_items(&f, 5, 3);
        assert_eq!(nn.len(), 3);
        assert!(!nn.contains(&5));
        let p: Vec<f64> = nn.iter().map(|&j| f.predict(3, j)).collect();
        let m = (p[0] + p[1] + p[2]) / 3.0;
        let sd = (((p[0] - m).powi(2) + (p[1] - m).powi(2) + (p[2] - m).powi(2)) / 3.0).sqrt();
        assert!((built.model.std(0, 0, 1) - sd.max(STD_FLOOR)).abs() < 1e-12);
    }

    #[test]
    fn sampled_normal_is_reproducible_and_centred() {
        let a = sample_item_stds(2.0, 0.8, 10_000, 5).unwrap();
        assert_eq!(a, sample_item_stds(2.0, 0.8, 10_000, 5).unwrap());
        let n = a.len() as f64;
        let mean = a.iter().sum::<f64>() / n;
        let var = a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - 2.0).abs() < 3.0 * (var / n).sqrt(), "{mean}");
        assert!(a.iter().all(|&s| s >= STD_FLOOR));
    }

    #[test]
    fn sampled_normal_shares_std_across_states() {
        let f = random_factors(3, 8, 2, 3);
        let mode = VarianceMode::SampledNormal { mean: 2.0, std: 0.8 };
        let built = build_reward_model(&f, &su(vec![0, 1, 2]), &[0, 1, 2, 3], &mode, 7).unwrap();
        let expected = sample_item_stds(2.0, 0.8, 4, 7).unwrap();
        for a in 0..4 {
            for s in 0..3 {
                assert_eq!(built.model.std(a, 0, s), expected[a]);
            }
        }
    }

    #[test]
    fn hopeless_sampler_hits_floor() {
        let mode = VarianceMode::SampledNormal { mean: -50.0, std: 0.1 };
        let f = random_factors(2, 3, 2, 0);
        let built = build_reward_model(&f, &su(vec![0, 1]), &[0, 1], &mode, 0).unwrap();
        assert_eq!(built.clamped, 2);
        assert_eq!(built.model.std(1, 0, 0), STD_FLOOR);
    }

    #[test]
    fn empty_catalog_is_rejected() {
        let f = random_factors(2, 3, 2, 0);
        assert!(build_reward_model(&f, &su(vec![0, 1]), &[], &VarianceMode::default(), 0).is_err());
    }

    #[test]
    fn variance_mode_json() {
        let m: VarianceMode = serde_json::from_str(r#"{"mode":"fixed"}"#).unwrap();
        assert_eq!(m, VarianceMode::Fixed { sigma: 0.25 });
        let m: VarianceMode = serde_json::from_str(r#"{"mode":"three_nn"}"#).unwrap();
        assert_eq!(m, VarianceMode::ThreeNn);
        let m: VarianceMode = serde_json::from_str(r#"{"mode":"sampled_normal","mean":1.0}"#).unwrap();
        assert_eq!(m, VarianceMode::SampledNormal { mean: 1.0, std: 0.8 });
    }
}
