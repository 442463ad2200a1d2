//! Grid sweeps over model and environment parameters.

use serde::Serialize;

use super::config::{resolve_model, ExperimentConfig, ModelSource, ResolvedModel};
use super::run::{run_with_model, ExperimentResult};
use super::stats::bayes_regret_with;
use super::HarnessError;
use crate::environments::GraphKind;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum AxisValue {
    Real(f64),
    Count(usize),
    Graph(GraphKind),
}

impl std::fmt::Display for AxisValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AxisValue::Real(x) => write!(f, "{x}"),
            AxisValue::Count(n) => write!(f, "{n}"),
            AxisValue::Graph(g) => write!(f, "{}", serde_json::to_value(g).expect("enum").as_str().unwrap_or("")),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    pub policy: String,
    pub final_mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub point: Vec<(String, AxisValue)>,
    pub cells: Vec<SweepCell>,
    /// Final mTS regret over final AGEmTS regret, when both ran.
    pub mts_over_agemts: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepTable {
    pub axes: Vec<String>,
    pub rows: Vec<SweepRow>,
}

/// Every combination of the configured axes, later axes varying fastest.
pub fn grid_points(cfg: &ExperimentConfig) -> Vec<Vec<(String, AxisValue)>> {
    let s = &cfg.sweep;
    let mut axes: Vec<(String, Vec<AxisValue>)> = Vec::new();
    if let Some(v) = &s.delta_r {
        axes.push(("delta_r".into(), v.iter().map(|&x| AxisValue::Real(x)).collect()));
    }
    if let Some(v) = &s.delta_sigma {
        axes.push(("delta_sigma".into(), v.iter().map(|&x| AxisValue::Real(x)).collect()));
    }
    if let Some(v) = &s.arm_set_size {
        axes.push(("arm_set_size".into(), v.iter().map(|&x| AxisValue::Count(x)).collect()));
    }
    if let Some(v) = &s.stay_prob {
        axes.push(("stay_prob".into(), v.iter().map(|&x| AxisValue::Real(x)).collect()));
    }
    if let Some(v) = &s.graph {
        axes.push(("graph".into(), v.iter().map(|&g| AxisValue::Graph(g)).collect()));
    }
    let mut points: Vec<Vec<(String, AxisValue)>> = vec![vec![]];
    for (name, values) in axes {
        let mut next = Vec::with_capacity(points.len() * values.len());
        for p in &points {
            for v in &values {
                let mut q = p.clone();
                q.push((name.clone(), v.clone()));
                next.push(q);
            }
        }
        points = next;
    }
    points
}

/// The config for one grid point, with the sweep axes cleared.
pub fn point_config(base: &ExperimentConfig, point: &[(String, AxisValue)]) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = base.clone();
    cfg.sweep = Default::default();
    for (name, value) in point {
        match (name.as_str(), value) {
            ("delta_r", AxisValue::Real(x)) | ("delta_sigma", AxisValue::Real(x)) => {
                let ModelSource::Family(f) = &mut cfg.model else {
                    return Err(HarnessError::Config(format!("axis `{name}` needs a `family` model")));
                };
                if name == "delta_r" {
                    f.delta_r = *x;
                } else {
                    f.delta_sigma = *x;
                }
            }
            ("arm_set_size", AxisValue::Count(k)) => cfg.arm_set_size = Some(*k),
            ("stay_prob", AxisValue::Real(p)) => match &mut cfg.transition {
                Some(t) => t.stay_prob = *p,
                None => return Err(HarnessError::Config("axis `stay_prob` needs a transition".into())),
            },
            ("graph", AxisValue::Graph(g)) => match &mut cfg.transition {
                Some(t) => t.kind = *g,
                None => return Err(HarnessError::Config("axis `graph` needs a transition".into())),
            },
            _ => return Err(HarnessError::Config(format!("unknown axis `{name}`"))),
        }
    }
    cfg.validate_shape()?;
    Ok(cfg)
}

fn summarize(res: &ExperimentResult) -> Result<Vec<SweepCell>, HarnessError> {
    (0..res.labels.len())
        .map(|p| {
            let finals: Vec<[f64; 1]> = res.runs.iter().map(|r| [r.policies[p].final_regret()]).collect();
            let (mean, low, high) = if finals.len() >= 2 {
                let refs: Vec<&[f64]> = finals.iter().map(|f| &f[..]).collect();
                let band = bayes_regret_with(&refs, &res.config.output.ci, res.config.base_seed)?;
                (band.mean[0], band.ci_low[0], band.ci_high[0])
            } else {
                let x = finals.first().map_or(0.0, |f| f[0]);
                (x, x, x)
            };
            Ok(SweepCell {
                policy: res.labels[p].clone(),
                final_mean: mean,
                ci_low: low,
                ci_high: high,
            })
        })
        .collect()
}

/// Runs one experiment per grid point and tabulates final regret.
pub fn sweep(cfg: &ExperimentConfig) -> Result<(SweepTable, Vec<ExperimentResult>), HarnessError> {
    cfg.validate_shape()?;
    let points = grid_points(cfg);
    if cfg.sweep.is_empty() || points.is_empty() {
        return Err(HarnessError::Config("sweep needs at least one non-empty axis".into()));
    }
    // dataset and file models are built once; family models per point
    let shared: Option<ResolvedModel> = match cfg.model {
        ModelSource::Family(_) => None,
        _ => Some(resolve_model(&cfg.model)?),
    };
    let mut rows = Vec::new();
    let mut results = Vec::new();
    for point in points {
        let pc = point_config(cfg, &point)?;
        let resolved = match &shared {
            Some(r) => r.clone(),
            None => resolve_model(&pc.model)?,
        };
        let res = run_with_model(&pc, &resolved)?;
        let cells = summarize(&res)?;
        let find = |name: &str| {
            res.policy_info
                .iter()
                .position(|i| i.name == name)
                .map(|i| cells[i].final_mean)
        };
        let ratio = match (find("mts"), find("agemts")) {
            (Some(m), Some(a)) if a > 0.0 => Some(m / a),
            _ => None,
        };
        rows.push(SweepRow {
            point,
            cells,
            mts_over_agemts: ratio,
        });
        results.push(res);
    }
    let axes = rows[0].point.iter().map(|(n, _)| n.clone()).collect();
    Ok((SweepTable { axes, rows }, results))
}
