//! Reward models built from collaborative-filtering ratings: ingestion,
//! matrix factorization, user clustering, super-user draw and export.
//!
//! Ratings files hold one `user<d>item<d>rating` record per line; further
//! fields are ignored. The delimiter (`::`, tab or comma) is taken from the
//! first non-empty line, which is treated as a header when its third field
//! is not a number.

mod cluster;
mod ingest;
mod pmf;
mod reward;
pub mod synthetic;

use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cluster::{kmeans, kmeans_users, sample_super_user, KMeansResult, SuperUser};
pub use ingest::{ingest_ratings, parse_ratings, FilterCounts, RatingsTable};
pub use pmf::{pmf_train, FactorModel, PmfConfig, PmfResult};
pub use reward::{build_reward_model, nearest_items, sample_item_stds, BuiltModel, VarianceMode, STD_FLOOR};

use crate::model::{ModelError, RewardModel};
pub use synthetic::{planted_ratings, PlantedConfig, PlantedData};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("no ratings left after filtering")]
    EmptyAfterFilter,
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("invalid factors: {0}")]
    Factors(String),
    #[error("invalid dataset config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Where ratings come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RatingsSource {
    File {
        path: PathBuf,
        #[serde(default)]
        min_user_ratings: usize,
        #[serde(default)]
        min_item_ratings: usize,
    },
    Planted(PlantedConfig),
}

/// Which items become arms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Catalog {
    #[default]
    All,
    /// The first `n` items in id order.
    First(usize),
    /// `n` items drawn without replacement, kept in id order.
    Random(usize),
}

/// Input to the `build-model` pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub source: RatingsSource,
    #[serde(default)]
    pub pmf: PmfConfig,
    #[serde(default = "default_states")]
    pub num_states: usize,
    /// State pairs `(a, b)` whose users are nearest neighbours.
    #[serde(default)]
    pub pairing: Vec<(usize, usize)>,
    #[serde(default)]
    pub catalog: Catalog,
    #[serde(default)]
    pub variance: VarianceMode,
    #[serde(default)]
    pub seed: u64,
}

fn default_states() -> usize {
    5
}

impl DatasetConfig {
    /// Reads a config, resolving a relative ratings path against the
    /// config's directory.
    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path).map_err(|e| DatasetError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| DatasetError::Config(e.to_string()))?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        if let RatingsSource::File { path, .. } = &mut self.source {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PmfSummary {
    pub best_validation_rmse: f64,
    pub best_epoch: usize,
    pub validation_rmse: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterSummary {
    pub sizes: Vec<usize>,
    pub lloyd_iterations: usize,
    pub converged: bool,
    pub reseeds: usize,
}

/// Sidecar written next to an exported model.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub seed: u64,
    pub config: DatasetConfig,
    pub filter: FilterCounts,
    pub pmf: PmfSummary,
    pub clusters: ClusterSummary,
    pub super_user: SuperUser,
    pub super_user_ids: Vec<u64>,
    pub catalog_item_ids: Vec<u64>,
    pub clamped_stds: usize,
}

#[derive(Debug, Clone)]
pub struct DatasetBuild {
    pub model: RewardModel,
    pub provenance: Provenance,
    pub factors: FactorModel,
    pub clusters: KMeansResult,
    pub table: RatingsTable,
    /// Planted cluster of each table user, for synthetic sources.
    pub planted_clusters: Option<Vec<usize>>,
}

/// Runs ingestion, factorization, clustering, super-user draw and export.
/// Stage seeds are derived from `cfg.seed`.
pub fn build_dataset_model(cfg: &DatasetConfig) -> Result<DatasetBuild, DatasetError> {
    let seed = cfg.seed;
    let (table, filter, planted_clusters) = match &cfg.source {
        RatingsSource::File {
            path,
            min_user_ratings,
            min_item_ratings,
        } => {
            let (t, c) = ingest_ratings(path, *min_user_ratings, *min_item_ratings)?;
            (t, c, None)
        }
        RatingsSource::Planted(p) => {
            let data = planted_ratings(p, seed);
            let (t, c) = RatingsTable::from_raw(&data.ratings, 0, 0)?;
            let truth = t.user_ids.iter().map(|&id| data.user_cluster[id as usize]).collect();
            (t, c, Some(truth))
        }
    };
    if cfg.num_states < 2 {
        return Err(DatasetError::Config("num_states must be at least 2".into()));
    }
    let pmf = pmf_train(&table, &cfg.pmf, seed.wrapping_add(1))?;
    let clusters = kmeans_users(&pmf.model, cfg.num_states, seed.wrapping_add(2))?;
    let super_user = sample_super_user(
        &pmf.model,
        &clusters.assignment,
        cfg.num_states,
        &cfg.pairing,
        seed.wrapping_add(3),
    )?;
    let items = table.num_items();
    let catalog: Vec<usize> = match cfg.catalog {
        Catalog::All => (0..items).collect(),
        Catalog::First(n) => (0..n.min(items)).collect(),
        Catalog::Random(n) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(5));
            let mut v = sample(&mut rng, items, n.min(items)).into_vec();
            v.sort_unstable();
            v
        }
    };
    let built = build_reward_model(&pmf.model, &super_user, &catalog, &cfg.variance, seed.wrapping_add(4))?;
    let provenance = Provenance {
        seed,
        config: cfg.clone(),
        filter,
        pmf: PmfSummary {
            best_validation_rmse: pmf.best_rmse(),
            best_epoch: pmf.best_epoch,
            validation_rmse: pmf.validation_rmse.clone(),
        },
        clusters: ClusterSummary {
            sizes: clusters.cluster_sizes(),
            lloyd_iterations: clusters.objective.len(),
            converged: clusters.converged,
            reseeds: clusters.reseeds,
        },
        super_user_ids: super_user.users.iter().map(|&u| table.user_ids[u]).collect(),
        super_user,
        catalog_item_ids: catalog.iter().map(|&i| table.item_ids[i]).collect(),
        clamped_stds: built.clamped,
    };
    Ok(DatasetBuild {
        model: built.model,
        provenance,
        factors: pmf.model,
        clusters,
        table,
        planted_clusters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> DatasetConfig {
        DatasetConfig {
            source: RatingsSource::Planted(PlantedConfig {
                users: 60,
                items: 40,
                rank: 3,
                clusters: 3,
                density: 0.6,
                ..PlantedConfig::default()
            }),
            pmf: PmfConfig {
                d: 3,
                learning_rate: 0.02,
                epochs: 60,
                ..PmfConfig::default()
            },
            num_states: 3,
            pairing: vec![(0, 2)],
            catalog: Catalog::Random(15),
            variance: VarianceMode::default(),
            seed: 4,
        }
    }

    #[test]
    fn pipeline_runs_and_replays() {
        let cfg = small_config();
        let a = build_dataset_model(&cfg).unwrap();
        let b = build_dataset_model(&cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.model.num_arms(), 15);
        assert_eq!(a.model.num_states(), 3);
        assert_eq!(a.provenance.catalog_item_ids.len(), 15);
        assert_eq!(a.provenance.clusters.sizes.iter().sum::<usize>(), 60);
        assert!(a.planted_clusters.is_some());
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = small_config();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: DatasetConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let minimal: DatasetConfig =
            serde_json::from_str(r#"{"source":{"file":{"path":"r.dat","min_user_ratings":200}}}"#).unwrap();
        assert_eq!(minimal.num_states, 5);
        assert_eq!(minimal.pmf, PmfConfig::default());
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let mut cfg: DatasetConfig = serde_json::from_str(r#"{"source":{"file":{"path":"r.dat"}}}"#).unwrap();
        cfg.resolve_paths(Path::new("/data/ml"));
        assert!(matches!(cfg.source, RatingsSource::File { ref path, .. } if path == Path::new("/data/ml/r.dat")));
    }
}
