//! Planted low-rank ratings with clustered users.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedConfig {
    #[serde(default = "default_users")]
    pub users: usize,
    #[serde(default = "default_items")]
    pub items: usize,
    #[serde(default = "default_rank")]
    pub rank: usize,
    #[serde(default = "default_clusters")]
    pub clusters: usize,
    /// Probability that a (user, item) rating is observed.
    #[serde(default = "default_density")]
    pub density: f64,
    #[serde(default)]
    pub noise_std: f64,
    /// Std of cluster centres per coordinate.
    #[serde(default = "default_center_scale")]
    pub center_scale: f64,
    /// Std of users around their cluster centre per coordinate.
    #[serde(default = "default_spread")]
    pub cluster_spread: f64,
}

fn default_users() -> usize {
    500
}
fn default_items() -> usize {
    400
}
fn default_rank() -> usize {
    10
}
fn default_clusters() -> usize {
    5
}
fn default_density() -> f64 {
    0.5
}
fn default_center_scale() -> f64 {
    1.0
}
fn default_spread() -> f64 {
    0.1
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            users: default_users(),
            items: default_items(),
            rank: default_rank(),
            clusters: default_clusters(),
            density: default_density(),
            noise_std: 0.0,
            center_scale: default_center_scale(),
            cluster_spread: default_spread(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedData {
    /// `(user id, item id, rating)` with ids equal to row indices.
    pub ratings: Vec<(u64, u64, f64)>,
    pub user_cluster: Vec<usize>,
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

/// User `i` belongs to cluster `i % clusters`. Item factors have entries of
/// variance `1 / rank`, so noise-free ratings have roughly unit scale. Every
/// user and item keeps at least one rating.
pub fn planted_ratings(cfg: &PlantedConfig, seed: u64) -> PlantedData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rank = cfg.rank.max(1);
    let clusters = cfg.clusters.max(1);
    let centre = Normal::new(0.0, cfg.center_scale).expect("finite scale");
    let spread = Normal::new(0.0, cfg.cluster_spread.max(0.0)).expect("finite spread");
    let item = Normal::new(0.0, (1.0 / rank as f64).sqrt()).expect("finite");
    let noise = Normal::new(0.0, cfg.noise_std.max(0.0)).expect("finite noise");

    let centres = DMatrix::from_fn(clusters, rank, |_, _| centre.sample(&mut rng));
    let user_cluster: Vec<usize> = (0..cfg.users).map(|i| i % clusters).collect();
    let u = DMatrix::from_fn(cfg.users, rank, |i, k| centres[(user_cluster[i], k)] + spread.sample(&mut rng));
    let v = DMatrix::from_fn(cfg.items, rank, |_, _| item.sample(&mut rng));

    let mut ratings = Vec::new();
    let mut item_seen = vec![false; cfg.items];
    for i in 0..cfg.users {
        let forced = rng.random_range(0..cfg.items.max(1));
        for j in 0..cfg.items {
            let observed = rng.random::<f64>() < cfg.density;
            if observed || j == forced || (i + 1 == cfg.users && !item_seen[j]) {
                item_seen[j] = true;
                let r = u.row(i).dot(&v.row(j)) + noise.sample(&mut rng);
                ratings.push((i as u64, j as u64, r));
            }
        }
    }
    PlantedData {
        ratings,
        user_cluster,
        u,
        v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_coverage() {
        let cfg = PlantedConfig {
            users: 40,
            items: 30,
            rank: 3,
            density: 0.05,
            ..PlantedConfig::default()
        };
        let d = planted_ratings(&cfg, 1);
        let mut users = [0; 40];
        let mut items = [0; 30];
        for &(u, i, r) in &d.ratings {
            users[u as usize] += 1;
            items[i as usize] += 1;
            assert!((r - d.u.row(u as usize).dot(&d.v.row(i as usize))).abs() < 1e-12);
        }
        assert!(users.iter().all(|&n| n > 0));
        assert!(items.iter().all(|&n| n > 0));
        assert_eq!(d.user_cluster[7], 2);
    }

    #[test]
    fn seeded_replay() {
        let cfg = PlantedConfig {
            users: 20,
            items: 10,
            ..PlantedConfig::default()
        };
        assert_eq!(planted_ratings(&cfg, 3).ratings, planted_ratings(&cfg, 3).ratings);
    }
}
