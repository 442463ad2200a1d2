//! Experiment configuration: the JSON schema read by `lbl` and the
//! resolution of model sources into concrete models and kernels.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::datasets::{build_dataset_model, DatasetConfig, Provenance};
use crate::environments::{
    build_transition_kernel, GraphKind, InitialState, OffDiagonal, Schedule, TransitionGraphSpec,
};
use crate::model::{presets, BeliefState, ModelFile, RewardModel, TransitionKernel};
use crate::policies::{PolicyKind, PolicySpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    TwoState,
    FiveState,
    /// Five-state matrix with columns in start/branch order.
    FiveStateBranchOrder,
}

/// Two-state family swept by the regions-of-benefit experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyParams {
    #[serde(default = "default_best_mean")]
    pub best_mean: f64,
    #[serde(default = "default_delta_r")]
    pub delta_r: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default)]
    pub delta_sigma: f64,
    #[serde(default = "default_info_means")]
    pub info_means: [f64; 2],
    #[serde(default = "default_info_std")]
    pub info_std: f64,
}

fn default_best_mean() -> f64 {
    2.1
}
fn default_delta_r() -> f64 {
    0.05
}
fn default_sigma() -> f64 {
    0.5
}
fn default_info_means() -> [f64; 2] {
    [1.7, 1.5]
}
fn default_info_std() -> f64 {
    0.01
}

impl Default for FamilyParams {
    fn default() -> Self {
        Self {
            best_mean: default_best_mean(),
            delta_r: default_delta_r(),
            sigma: default_sigma(),
            delta_sigma: 0.0,
            info_means: default_info_means(),
            info_std: default_info_std(),
        }
    }
}

/// Where the reward model comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSource {
    Preset {
        name: PresetName,
        #[serde(default = "default_info_std")]
        info_std: f64,
    },
    Family(FamilyParams),
    Inline(ModelFile),
    /// A model JSON file, such as `build-model` output.
    File(PathBuf),
    Dataset(DatasetConfig),
    /// A dataset config JSON file.
    DatasetFile(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CiMethod {
    #[default]
    Normal,
    Bootstrap {
        #[serde(default = "default_resamples")]
        resamples: usize,
    },
}

fn default_resamples() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Defaults to `$LBL_OUT_DIR/<name>`, or `results/<name>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Runs whose per-step traces are kept and written.
    #[serde(default = "default_trace_runs")]
    pub max_trace_runs: usize,
    #[serde(default)]
    pub ci: CiMethod,
}

fn default_trace_runs() -> usize {
    5
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            max_trace_runs: default_trace_runs(),
            ci: CiMethod::default(),
        }
    }
}

/// Grid axes for `sweep`; every combination is one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_r: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_sigma: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm_set_size: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stay_prob: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<Vec<GraphKind>>,
}

impl SweepAxes {
    pub fn is_empty(&self) -> bool {
        *self == SweepAxes::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub model: ModelSource,
    /// Transition graph; when absent the model file's kernel is used, or
    /// the identity (stationary) kernel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition: Option<TransitionGraphSpec>,
    /// Redraw a `random_nonuniform` kernel for every run.
    #[serde(default)]
    pub kernel_per_run: bool,
    /// Deterministic change points for the environment; policies still
    /// use the transition kernel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Schedule>,
    #[serde(default)]
    pub initial: InitialState,
    /// Arms offered per step; all arms when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm_set_size: Option<usize>,
    pub policies: Vec<PolicySpec>,
    pub horizon: usize,
    #[serde(default = "default_runs")]
    pub num_runs: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default, skip_serializing_if = "SweepAxes::is_empty")]
    pub sweep: SweepAxes,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_runs() -> usize {
    100
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub horizon: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Reads a config; relative model and dataset paths are resolved
    /// against the config's directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        match &mut self.model {
            ModelSource::File(p) | ModelSource::DatasetFile(p) if p.is_relative() => *p = base.join(&*p),
            ModelSource::Dataset(d) => d.resolve_paths(base),
            _ => {}
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.base_seed = s;
        }
        if let Some(r) = o.runs {
            self.num_runs = r;
        }
        if let Some(h) = o.horizon {
            self.horizon = h;
        }
        if let Some(d) = &o.out_dir {
            self.output.dir = Some(d.clone());
        }
    }

    /// Checks everything that does not need the model built.
    pub fn validate_shape(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if self.num_runs == 0 {
            return bad("num_runs must be at least 1".into());
        }
        if self.policies.is_empty() {
            return bad("policy list is empty".into());
        }
        let mut labels: Vec<String> = self.policies.iter().map(PolicySpec::label).collect();
        labels.sort();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return bad(format!("duplicate policy label `{}`", w[0]));
        }
        if self.kernel_per_run
            && !matches!(&self.transition, Some(t) if t.off_diagonal == OffDiagonal::RandomNonuniform)
        {
            return bad("kernel_per_run needs a random_nonuniform transition".into());
        }
        if let ModelSource::Family(f) = &self.model {
            validate_family(f)?;
        }
        if let Some(v) = &self.sweep.delta_r {
            if v.is_empty() {
                return bad("sweep axis delta_r is empty".into());
            }
        }
        Ok(())
    }

    /// Output directory after defaults and the `LBL_OUT_DIR` variable.
    pub fn output_dir(&self) -> PathBuf {
        if let Some(d) = &self.output.dir {
            return d.clone();
        }
        let root = std::env::var_os("LBL_OUT_DIR").map_or_else(|| PathBuf::from("results"), PathBuf::from);
        root.join(&self.name)
    }
}

fn validate_family(f: &FamilyParams) -> Result<(), HarnessError> {
    let ok = |x: f64| x.is_finite() && x > 0.0;
    if !ok(f.sigma) || !ok(f.sigma + f.delta_sigma) || !ok(f.info_std) {
        return Err(HarnessError::Config("family standard deviations must be positive".into()));
    }
    if !(f.best_mean.is_finite() && f.delta_r.is_finite()) {
        return Err(HarnessError::Config("family means must be finite".into()));
    }
    Ok(())
}

/// A model source turned into concrete objects.
#[derive(Debug, Clone)]
pub struct ResolvedModel {
    pub model: Arc<RewardModel>,
    /// Kernel bundled with a model file, if any.
    pub bundled_kernel: Option<TransitionKernel>,
    pub provenance: Option<Provenance>,
}

pub fn resolve_model(source: &ModelSource) -> Result<ResolvedModel, HarnessError> {
    let plain = |m: RewardModel| ResolvedModel {
        model: Arc::new(m),
        bundled_kernel: None,
        provenance: None,
    };
    match source {
        ModelSource::Preset { name, info_std } => {
            if !(info_std.is_finite() && *info_std > 0.0) {
                return Err(HarnessError::Config("info_std must be positive".into()));
            }
            Ok(plain(match name {
                PresetName::TwoState => presets::two_state(*info_std),
                PresetName::FiveState => presets::five_state(*info_std),
                PresetName::FiveStateBranchOrder => presets::five_state_branch_order(*info_std),
            }))
        }
        ModelSource::Family(f) => {
            validate_family(f)?;
            Ok(plain(presets::two_state_family(
                f.best_mean,
                f.delta_r,
                f.sigma,
                f.delta_sigma,
                f.info_means,
                f.info_std,
            )))
        }
        ModelSource::Inline(file) => from_model_file(file),
        ModelSource::File(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
            let file: ModelFile = serde_json::from_str(&text)
                .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
            from_model_file(&file)
        }
        ModelSource::Dataset(cfg) => from_dataset(cfg),
        ModelSource::DatasetFile(path) => {
            let cfg = DatasetConfig::load(path).map_err(|e| HarnessError::Config(e.to_string()))?;
            from_dataset(&cfg)
        }
    }
}

fn from_model_file(file: &ModelFile) -> Result<ResolvedModel, HarnessError> {
    let model = file.reward_model().map_err(|e| HarnessError::Config(e.to_string()))?;
    let kernel = file.kernel().map_err(|e| HarnessError::Config(e.to_string()))?;
    Ok(ResolvedModel {
        model: Arc::new(model),
        bundled_kernel: kernel,
        provenance: None,
    })
}

fn from_dataset(cfg: &DatasetConfig) -> Result<ResolvedModel, HarnessError> {
    let build = build_dataset_model(cfg).map_err(|e| HarnessError::Runtime(format!("dataset build failed: {e}")))?;
    Ok(ResolvedModel {
        model: Arc::new(build.model),
        bundled_kernel: None,
        provenance: Some(build.provenance),
    })
}

/// Kernel for the config, optionally with a per-run seed offset for
/// resampled non-uniform kernels.
pub fn resolve_kernel(
    cfg: &ExperimentConfig,
    model: &ResolvedModel,
    seed_offset: u64,
) -> Result<TransitionKernel, HarnessError> {
    let n = model.model.num_states();
    let kernel = match &cfg.transition {
        Some(spec) => {
            let mut spec = spec.clone();
            spec.seed = spec.seed.wrapping_add(seed_offset);
            build_transition_kernel(&spec).map_err(|e| HarnessError::Config(e.to_string()))?
        }
        None => model
            .bundled_kernel
            .clone()
            .unwrap_or_else(|| TransitionKernel::identity(n)),
    };
    if kernel.num_states() != n {
        return Err(HarnessError::Config(format!(
            "transition has {} states but the model has {n}",
            kernel.num_states()
        )));
    }
    Ok(kernel)
}

pub fn resolve_prior(cfg: &ExperimentConfig, num_states: usize) -> Result<BeliefState, HarnessError> {
    cfg.initial.prior(num_states).map_err(|e| HarnessError::Config(e.to_string()))
}

/// True when the config lists the harness-driven oracle.
pub fn has_oracle(cfg: &ExperimentConfig) -> bool {
    cfg.policies.iter().any(|p| p.name == PolicyKind::Oracle)
}
