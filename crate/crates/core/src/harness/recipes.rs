//! Named experiment configs for the standard benchmark settings.

use super::config::{ExperimentConfig, FamilyParams, ModelSource, OutputConfig, PresetName, SweepAxes};
use crate::datasets::{Catalog, DatasetConfig, PmfConfig, RatingsSource, VarianceMode};
use crate::environments::{GraphKind, InitialState, OffDiagonal, Schedule, TransitionGraphSpec};
use crate::policies::{PolicyKind, PolicySpec};

pub const RECIPES: [&str; 13] = [
    "two_state_stationary",
    "two_state_random_switch",
    "two_state_fixed_200",
    "five_state_full",
    "five_state_skip",
    "five_state_branch",
    "five_state_nonuniform",
    "movielens_full",
    "movielens_skip",
    "movielens_branch",
    "regions_stationary",
    "regions_nonstationary",
    "two_state_explore",
];

/// Default location of the MovieLens 1M ratings file for dataset recipes.
pub const MOVIELENS_RATINGS: &str = "data/ml-1m/ratings.dat";

fn specs(kinds: &[PolicyKind]) -> Vec<PolicySpec> {
    kinds.iter().map(|&k| PolicySpec::new(k)).collect()
}

fn base(name: &str, model: ModelSource, horizon: usize, policies: Vec<PolicySpec>) -> ExperimentConfig {
    ExperimentConfig {
        name: name.to_string(),
        model,
        transition: None,
        kernel_per_run: false,
        schedule: None,
        initial: InitialState::Uniform,
        arm_set_size: None,
        policies,
        horizon,
        num_runs: 100,
        base_seed: 0,
        sweep: SweepAxes::default(),
        output: OutputConfig::default(),
    }
}

fn graph(kind: GraphKind, n: usize, stay: f64) -> TransitionGraphSpec {
    let mut g = TransitionGraphSpec::new(kind, n, stay);
    if kind == GraphKind::FullyConnected && n > 2 {
        g.start_state = Some(0);
    }
    g
}

const TWO_STATE_POLICIES: [PolicyKind; 8] = [
    PolicyKind::Mts,
    PolicyKind::Agemts,
    PolicyKind::Cducb,
    PolicyKind::Cdts,
    PolicyKind::CdLinucb,
    PolicyKind::CdLints,
    PolicyKind::Exp4s,
    PolicyKind::Mucb,
];

const FIVE_STATE_POLICIES: [PolicyKind; 7] = [
    PolicyKind::Mts,
    PolicyKind::Agemts,
    PolicyKind::Cducb,
    PolicyKind::Cdts,
    PolicyKind::CdLinucb,
    PolicyKind::CdLints,
    PolicyKind::Exp4s,
];

fn two_state() -> ModelSource {
    ModelSource::Preset {
        name: PresetName::TwoState,
        info_std: 0.01,
    }
}

fn five_state() -> ModelSource {
    ModelSource::Preset {
        name: PresetName::FiveStateBranchOrder,
        info_std: 0.01,
    }
}

fn movielens(name: &str, kind: GraphKind) -> ExperimentConfig {
    let dataset = DatasetConfig {
        source: RatingsSource::File {
            path: MOVIELENS_RATINGS.into(),
            min_user_ratings: 200,
            min_item_ratings: 200,
        },
        pmf: PmfConfig::default(),
        num_states: 5,
        pairing: vec![(1, 3), (2, 4)],
        catalog: Catalog::All,
        variance: VarianceMode::Fixed { sigma: 0.25 },
        seed: 0,
    };
    let mut c = base(
        name,
        ModelSource::Dataset(dataset),
        1000,
        specs(&[PolicyKind::Mts, PolicyKind::Agemts, PolicyKind::Cdts, PolicyKind::CdLints, PolicyKind::Exp4s]),
    );
    c.transition = Some(graph(kind, 5, 0.95));
    c.initial = InitialState::State(0);
    c.arm_set_size = Some(20);
    c
}

fn regions(name: &str, stationary: bool) -> ExperimentConfig {
    let mut c = base(
        name,
        ModelSource::Family(FamilyParams::default()),
        1000,
        specs(&[PolicyKind::Mts, PolicyKind::Agemts]),
    );
    if !stationary {
        c.transition = Some(graph(GraphKind::FullyConnected, 2, 0.995));
    }
    c.sweep = SweepAxes {
        delta_r: Some(vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.4]),
        delta_sigma: Some(vec![0.0, 0.1, 0.2, 0.4]),
        ..SweepAxes::default()
    };
    c.output.max_trace_runs = 0;
    c
}

/// The named config, or `None` for an unknown name.
pub fn recipe(name: &str) -> Option<ExperimentConfig> {
    let c = match name {
        "two_state_stationary" => base(name, two_state(), 2000, specs(&TWO_STATE_POLICIES)),
        "two_state_random_switch" => {
            let mut c = base(name, two_state(), 2000, specs(&TWO_STATE_POLICIES));
            c.transition = Some(graph(GraphKind::FullyConnected, 2, 0.995));
            c
        }
        "two_state_fixed_200" => {
            let mut c = base(name, two_state(), 2000, specs(&TWO_STATE_POLICIES));
            c.transition = Some(graph(GraphKind::FullyConnected, 2, 0.995));
            c.schedule = Some(Schedule::Every(200));
            c
        }
        "two_state_explore" => base(
            name,
            two_state(),
            1000,
            specs(&[PolicyKind::Mts, PolicyKind::ExploreCommit, PolicyKind::ExploreThenPs]),
        ),
        "five_state_full" | "five_state_skip" | "five_state_branch" => {
            let kind = match name {
                "five_state_full" => GraphKind::FullyConnected,
                "five_state_skip" => GraphKind::SkipChain,
                _ => GraphKind::TwoBranch,
            };
            let mut c = base(name, five_state(), 1000, specs(&FIVE_STATE_POLICIES));
            c.transition = Some(graph(kind, 5, 0.995));
            c.initial = InitialState::State(0);
            c
        }
        "five_state_nonuniform" => {
            let mut c = base(name, five_state(), 1000, specs(&[PolicyKind::Mts, PolicyKind::Agemts]));
            let mut g = graph(GraphKind::FullyConnected, 5, 0.95);
            g.off_diagonal = OffDiagonal::RandomNonuniform;
            c.transition = Some(g);
            c.kernel_per_run = true;
            c.initial = InitialState::State(0);
            c.sweep.graph = Some(vec![GraphKind::FullyConnected, GraphKind::SkipChain, GraphKind::TwoBranch]);
            c
        }
        "movielens_full" => movielens(name, GraphKind::FullyConnected),
        "movielens_skip" => movielens(name, GraphKind::SkipChain),
        "movielens_branch" => movielens(name, GraphKind::TwoBranch),
        "regions_stationary" => regions(name, true),
        "regions_nonstationary" => regions(name, false),
        _ => return None,
    };
    Some(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_recipe_is_valid_and_round_trips() {
        for name in RECIPES {
            let c = recipe(name).unwrap();
            c.validate_shape().unwrap();
            let back = ExperimentConfig::from_json(&c.to_json()).unwrap();
            assert_eq!(back, c, "{name}");
        }
        assert!(recipe("nope").is_none());
    }
}
