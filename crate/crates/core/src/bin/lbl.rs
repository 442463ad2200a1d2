//! `lbl`: run latent-bandit experiments, sweeps and dataset model builds.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use latent_bandits::datasets::{build_dataset_model, DatasetConfig, RatingsSource};
use latent_bandits::harness::config::{resolve_kernel, resolve_model, resolve_prior};
use latent_bandits::harness::output::aggregate;
use latent_bandits::harness::{
    emit_outputs, emit_sweep, recipe, run_experiment, sweep, ExperimentConfig, HarnessError, ModelSource, Overrides,
    RECIPES,
};
use latent_bandits::model::ModelFile;
use latent_bandits::policies::{PolicyEnv, PolicyKind};

/// `println!` that stops quietly when stdout is closed.
macro_rules! out {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

#[derive(Parser)]
#[command(name = "lbl", version, about = "Latent bandit simulation and benchmarking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Source {
    /// Experiment config (JSON).
    config: Option<PathBuf>,
    /// Use a named recipe instead of a config file.
    #[arg(long, conflicts_with = "config")]
    recipe: Option<String>,
}

#[derive(Args, Clone)]
struct Flags {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Output directory; defaults to `$LBL_OUT_DIR/<name>` or `results/<name>`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl Flags {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            runs: self.runs,
            horizon: self.horizon,
            out_dir: self.out_dir.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run every policy in a config and write traces and regret tables.
    Run {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        flags: Flags,
    },
    /// Run a config's sweep grid and write the regions-of-benefit table.
    Sweep {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        flags: Flags,
    },
    /// Build a reward model from a dataset config.
    BuildModel {
        /// Dataset config (JSON).
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Check a config without running it.
    Validate {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        flags: Flags,
    },
    /// Print a named recipe as JSON, or list the names.
    Recipe {
        name: Option<String>,
        #[arg(long)]
        list: bool,
    },
}

fn load(source: &Source, flags: &Flags) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match (&source.config, &source.recipe) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => recipe(name).ok_or_else(|| {
            HarnessError::Config(format!("unknown recipe `{name}`; known: {}", RECIPES.join(", ")))
        })?,
        (None, None) => return Err(HarnessError::Config("give a config path or --recipe".into())),
    };
    cfg.apply(&flags.overrides());
    cfg.validate_shape()?;
    Ok(cfg)
}

fn print_summary(res: &latent_bandits::harness::ExperimentResult) -> Result<(), HarnessError> {
    let agg = aggregate(res)?;
    out!("{:<20} {:>14} {:>22} {:>12}", "policy", "final regret", "95% band", "early info");
    for s in &agg.summary {
        out!(
            "{:<20} {:>14.3} {:>10.3} .. {:<9.3} {:>12.2}",
            s.label, s.final_mean_regret, s.final_ci_low, s.final_ci_high, s.early_info_fraction
        );
    }
    Ok(())
}

fn cmd_run(source: &Source, flags: &Flags) -> Result<(), HarnessError> {
    let cfg = load(source, flags)?;
    let res = run_experiment(&cfg)?;
    let dir = cfg.output_dir();
    emit_outputs(&res, &dir)?;
    print_summary(&res)?;
    out!("wrote {}", dir.display());
    Ok(())
}

fn cmd_sweep(source: &Source, flags: &Flags) -> Result<(), HarnessError> {
    let cfg = load(source, flags)?;
    let (table, results) = sweep(&cfg)?;
    let dir = cfg.output_dir();
    emit_sweep(&table, &results, &dir)?;
    for row in &table.rows {
        let point: Vec<String> = row.point.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let ratio = row.mts_over_agemts.map_or_else(|| "-".to_string(), |r| format!("{r:.3}"));
        out!("{:<40} mts/agemts {ratio}", point.join(" "));
    }
    out!("wrote {}", dir.display());
    Ok(())
}

fn cmd_validate(source: &Source, flags: &Flags) -> Result<(), HarnessError> {
    let cfg = load(source, flags)?;
    let dataset = match &cfg.model {
        ModelSource::Dataset(d) => Some(d.clone()),
        ModelSource::DatasetFile(path) => {
            Some(DatasetConfig::load(path).map_err(|e| HarnessError::Config(e.to_string()))?)
        }
        _ => None,
    };
    let dataset_path = dataset.and_then(|d| match d.source {
        RatingsSource::File { path, .. } => Some(path),
        RatingsSource::Planted(_) => None,
    });
    if let Some(path) = dataset_path {
        // building the model means training; only check the input exists
        if !path.is_file() {
            return Err(HarnessError::Config(format!("ratings file {} not found", path.display())));
        }
        out!("ok: {} (dataset model not built)", cfg.name);
        return Ok(());
    }
    let resolved = resolve_model(&cfg.model)?;
    let env = PolicyEnv {
        model: resolved.model.clone(),
        kernel: std::sync::Arc::new(resolve_kernel(&cfg, &resolved, 0)?),
        prior: resolve_prior(&cfg, resolved.model.num_states())?,
        horizon: cfg.horizon,
    };
    for spec in cfg.policies.iter().filter(|p| p.name != PolicyKind::Oracle) {
        spec.prepare(&env)
            .map_err(|e| HarnessError::Config(format!("policy `{}`: {e}", spec.label())))?;
    }
    out!(
        "ok: {} ({} arms, {} states, {} policies)",
        cfg.name,
        resolved.model.num_arms(),
        resolved.model.num_states(),
        cfg.policies.len()
    );
    Ok(())
}

fn write_json(path: &Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

fn cmd_build_model(config: &Path, seed: Option<u64>, out_dir: Option<PathBuf>) -> Result<(), HarnessError> {
    let mut cfg = DatasetConfig::load(config).map_err(|e| HarnessError::Config(e.to_string()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let build = build_dataset_model(&cfg).map_err(|e| HarnessError::Runtime(e.to_string()))?;
    let dir = out_dir.unwrap_or_else(|| {
        std::env::var_os("LBL_OUT_DIR").map_or_else(|| PathBuf::from("results"), PathBuf::from)
    });
    std::fs::create_dir_all(&dir).map_err(|e| HarnessError::Io {
        path: dir.display().to_string(),
        reason: e.to_string(),
    })?;
    let stem = config.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    let model_path = dir.join(format!("{stem}.model.json"));
    let prov_path = dir.join(format!("{stem}.provenance.json"));
    let model = serde_json::to_string_pretty(&ModelFile::from_model(&build.model, None)).expect("model serializes");
    let prov = serde_json::to_string_pretty(&build.provenance).expect("provenance serializes");
    write_json(&model_path, &model)?;
    write_json(&prov_path, &prov)?;
    let p = &build.provenance;
    out!(
        "{} users x {} items, validation rmse {:.4}, clusters {:?}, {} clamped stds",
        p.filter.users, p.filter.items, p.pmf.best_validation_rmse, p.clusters.sizes, p.clamped_stds
    );
    out!("wrote {} and {}", model_path.display(), prov_path.display());
    Ok(())
}

fn cmd_recipe(name: Option<&str>, list: bool) -> Result<(), HarnessError> {
    match name {
        Some(n) if !list => {
            let cfg = recipe(n).ok_or_else(|| HarnessError::Config(format!("unknown recipe `{n}`")))?;
            out!("{}", cfg.to_json());
        }
        _ => RECIPES.iter().for_each(|r| out!("{r}")),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { source, flags } => cmd_run(source, flags),
        Command::Sweep { source, flags } => cmd_sweep(source, flags),
        Command::BuildModel { config, seed, out_dir } => cmd_build_model(config, *seed, out_dir.clone()),
        Command::Validate { source, flags } => cmd_validate(source, flags),
        Command::Recipe { name, list } => cmd_recipe(name.as_deref(), *list),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lbl: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
