//! Result files: per-run JSONL traces, aggregated regret CSV, a wide
//! plot-ready CSV, a run summary and metadata.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::run::ExperimentResult;
use super::stats::{bayes_regret_with, RegretBand};
use super::sweep::SweepTable;
use super::HarnessError;

/// Steps counted as "early" when reporting info-arm use.
pub const EARLY_INFO_STEPS: usize = 5;

#[derive(Debug, Clone, Serialize)]
pub struct PolicySummary {
    pub label: String,
    pub final_mean_regret: f64,
    pub final_ci_low: f64,
    pub final_ci_high: f64,
    pub final_mean_realized_regret: f64,
    /// Share of runs with an information-gathering choice in the first
    /// `EARLY_INFO_STEPS` steps.
    pub early_info_fraction: f64,
    pub mean_info_steps: f64,
}

#[derive(Debug, Clone)]
pub struct Aggregate {
    pub bands: Vec<RegretBand>,
    pub realized: Vec<RegretBand>,
    pub summary: Vec<PolicySummary>,
}

fn band_of(curves: &[&[f64]], res: &ExperimentResult) -> Result<RegretBand, HarnessError> {
    if curves.len() >= 2 {
        bayes_regret_with(curves, &res.config.output.ci, res.config.base_seed)
    } else {
        let c = curves.first().map_or_else(Vec::new, |c| c.to_vec());
        Ok(RegretBand {
            mean: c.clone(),
            ci_low: c.clone(),
            ci_high: c,
        })
    }
}

pub fn aggregate(res: &ExperimentResult) -> Result<Aggregate, HarnessError> {
    let mut bands = Vec::new();
    let mut realized = Vec::new();
    let mut summary = Vec::new();
    let runs = res.runs.len().max(1) as f64;
    for (p, label) in res.labels.iter().enumerate() {
        let band = band_of(&res.curves(p), res)?;
        let real_curves: Vec<&[f64]> = res.runs.iter().map(|r| r.policies[p].realized.as_slice()).collect();
        let real = band_of(&real_curves, res)?;
        let last = band.mean.len().saturating_sub(1);
        let early = res
            .runs
            .iter()
            .filter(|r| r.policies[p].info_steps.first().is_some_and(|&t| t < EARLY_INFO_STEPS))
            .count();
        let pulls: usize = res.runs.iter().map(|r| r.policies[p].info_steps.len()).sum();
        summary.push(PolicySummary {
            label: label.clone(),
            final_mean_regret: band.mean.get(last).copied().unwrap_or(0.0),
            final_ci_low: band.ci_low.get(last).copied().unwrap_or(0.0),
            final_ci_high: band.ci_high.get(last).copied().unwrap_or(0.0),
            final_mean_realized_regret: real.mean.get(last).copied().unwrap_or(0.0),
            early_info_fraction: early as f64 / runs,
            mean_info_steps: pulls as f64 / runs,
        });
        bands.push(band);
        realized.push(real);
    }
    Ok(Aggregate {
        bands,
        realized,
        summary,
    })
}

/// Long-format CSV: `step,policy,mean_regret,ci_low,ci_high`, steps from 1.
pub fn regret_csv(labels: &[String], bands: &[RegretBand]) -> String {
    let mut out = String::from("step,policy,mean_regret,ci_low,ci_high\n");
    let len = bands.first().map_or(0, |b| b.mean.len());
    for t in 0..len {
        for (label, b) in labels.iter().zip(bands) {
            writeln!(out, "{},{},{},{},{}", t + 1, label, b.mean[t], b.ci_low[t], b.ci_high[t]).expect("string write");
        }
    }
    out
}

/// Wide CSV with one mean/low/high column triple per policy.
pub fn plot_csv(labels: &[String], bands: &[RegretBand]) -> String {
    let mut out = String::from("step");
    for l in labels {
        write!(out, ",{l}_mean,{l}_low,{l}_high").expect("string write");
    }
    out.push('\n');
    let len = bands.first().map_or(0, |b| b.mean.len());
    for t in 0..len {
        write!(out, "{}", t + 1).expect("string write");
        for b in bands {
            write!(out, ",{},{},{}", b.mean[t], b.ci_low[t], b.ci_high[t]).expect("string write");
        }
        out.push('\n');
    }
    out
}

/// Per-run traces, one JSON object per line, policies in config order.
pub fn trace_jsonl(res: &ExperimentResult) -> Vec<(usize, String)> {
    res.runs
        .iter()
        .filter(|r| r.policies.iter().any(|p| p.trace.is_some()))
        .map(|r| {
            let mut text = String::new();
            for p in &r.policies {
                for rec in p.trace.iter().flatten() {
                    text.push_str(&serde_json::to_string(rec).expect("trace serializes"));
                    text.push('\n');
                }
            }
            (r.run, text)
        })
        .collect()
}

#[derive(Serialize)]
struct FinalBelief<'a> {
    run: usize,
    policy: &'a str,
    belief: &'a [f64],
}

#[derive(Serialize)]
struct Metadata<'a> {
    name: &'a str,
    crate_version: &'static str,
    num_runs: usize,
    horizon: usize,
    base_seed: u64,
    seeds: String,
    policies: &'a [super::run::PolicyInfo],
    wall_seconds: f64,
    threads: usize,
    config: &'a super::config::ExperimentConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    dataset: Option<&'a crate::datasets::Provenance>,
}

fn write(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

fn ensure_dir(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::Io {
        path: dir.display().to_string(),
        reason: e.to_string(),
    })
}

/// Aggregates in memory, then writes everything under `dir`. Returns the
/// written paths.
pub fn emit_outputs(res: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    if res.labels.is_empty() || res.runs.is_empty() {
        return Err(HarnessError::Runtime("nothing to write: no policies or runs".into()));
    }
    let agg = aggregate(res)?;
    let regret = regret_csv(&res.labels, &agg.bands);
    let realized = regret_csv(&res.labels, &agg.realized);
    let plot = plot_csv(&res.labels, &agg.bands);
    let traces = trace_jsonl(res);
    let mut beliefs = String::new();
    for r in &res.runs {
        for (label, p) in res.labels.iter().zip(&r.policies) {
            if let Some(b) = &p.final_belief {
                let rec = FinalBelief {
                    run: r.run,
                    policy: label,
                    belief: b,
                };
                beliefs.push_str(&serde_json::to_string(&rec).expect("belief serializes"));
                beliefs.push('\n');
            }
        }
    }
    let summary = serde_json::to_string_pretty(&agg.summary).expect("summary serializes");
    let meta = Metadata {
        name: &res.config.name,
        crate_version: env!("CARGO_PKG_VERSION"),
        num_runs: res.runs.len(),
        horizon: res.config.horizon,
        base_seed: res.config.base_seed,
        seeds: format!(
            "run r uses seed {} + r; trajectory stream 0, policy stream 1",
            res.config.base_seed
        ),
        policies: &res.policy_info,
        wall_seconds: res.wall_seconds,
        threads: rayon::current_num_threads(),
        config: &res.config,
        dataset: res.provenance.as_ref(),
    };
    let metadata = serde_json::to_string_pretty(&meta).expect("metadata serializes");

    ensure_dir(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, text: &str| -> Result<(), HarnessError> {
        let path = dir.join(name);
        write(&path, text)?;
        written.push(path);
        Ok(())
    };
    put("regret.csv", &regret)?;
    put("realized_regret.csv", &realized)?;
    put("plot.csv", &plot)?;
    put("summary.json", &summary)?;
    put("final_beliefs.jsonl", &beliefs)?;
    put("metadata.json", &metadata)?;
    if !traces.is_empty() {
        ensure_dir(&dir.join("traces"))?;
        for (run, text) in &traces {
            put(&format!("traces/run_{run:04}.jsonl"), text)?;
        }
    }
    Ok(written)
}

pub fn sweep_csv(table: &SweepTable) -> String {
    let mut out = String::new();
    for a in &table.axes {
        write!(out, "{a},").expect("string write");
    }
    out.push_str("policy,final_mean_regret,ci_low,ci_high\n");
    for row in &table.rows {
        let prefix: String = row.point.iter().map(|(_, v)| format!("{v},")).collect();
        for c in &row.cells {
            writeln!(out, "{prefix}{},{},{},{}", c.policy, c.final_mean, c.ci_low, c.ci_high).expect("string write");
        }
    }
    out
}

/// Regions-of-benefit table: final mTS / AGEmTS regret per grid point.
pub fn regions_csv(table: &SweepTable) -> String {
    let mut out = String::new();
    for a in &table.axes {
        write!(out, "{a},").expect("string write");
    }
    out.push_str("mts_over_agemts\n");
    for row in &table.rows {
        for (_, v) in &row.point {
            write!(out, "{v},").expect("string write");
        }
        match row.mts_over_agemts {
            Some(r) => writeln!(out, "{r}"),
            None => writeln!(out),
        }
        .expect("string write");
    }
    out
}

/// Writes the sweep tables plus each grid point's outputs in
/// `point_XXX` subdirectories.
pub fn emit_sweep(table: &SweepTable, results: &[ExperimentResult], dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let sweep = sweep_csv(table);
    let regions = regions_csv(table);
    let rows = serde_json::to_string_pretty(table).expect("table serializes");
    ensure_dir(dir)?;
    let mut written = Vec::new();
    for (name, text) in [("sweep.csv", &sweep), ("regions.csv", &regions), ("sweep.json", &rows)] {
        let path = dir.join(name);
        write(&path, text)?;
        written.push(path);
    }
    for (i, res) in results.iter().enumerate() {
        written.extend(emit_outputs(res, &dir.join(format!("point_{i:03}")))?);
    }
    Ok(written)
}
