//! Prequential streaming runs and their reports.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use seqgp::markov::{kalman_filter_multi, rts_smoother};
use seqgp::SequentialModel;
use serde::Serialize;

use crate::build::{build_runner, build_sde, Runner};
use crate::config::Config;
use crate::data::{Dataset, Layout};
use crate::error::{CliError, CliResult};

/// One report row: the prediction made before `y` was seen, then its score.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub x: Vec<f64>,
    pub y: Option<f64>,
    pub mean: f64,
    /// Predictive variance of `y` (latent variance plus noise).
    pub var: f64,
    pub log_density: Option<f64>,
    /// Ensemble weights used for this row's prediction.
    pub weights: Vec<f64>,
    /// Smoothed latent mean and variance, when requested.
    pub smoothed: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub count: usize,
    /// Rows with an observed `y`.
    pub scored: usize,
    pub rmse: Option<f64>,
    pub mean_nlpd: Option<f64>,
    pub flops: u64,
    pub model: String,
    /// Set when some log densities are Laplace approximations.
    pub approximate_density: bool,
    pub skipped_stacking_steps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub members: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_weights: Option<Vec<f64>>,
    pub metadata: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub columns: Vec<String>,
    pub member_names: Vec<String>,
    pub rows: Vec<Row>,
    pub summary: Summary,
    /// Wall-clock seconds, always measured; only serialized with `timing`.
    pub wall_time_s: f64,
}

/// RMSE and mean negative log predictive density over scored rows.
pub fn score(rows: &[Row]) -> (usize, Option<f64>, Option<f64>) {
    let scored: Vec<&Row> = rows.iter().filter(|r| r.y.is_some()).collect();
    if scored.is_empty() {
        return (0, None, None);
    }
    let n = scored.len() as f64;
    let sse: f64 = scored
        .iter()
        .map(|r| (r.y.unwrap_or(0.0) - r.mean).powi(2))
        .sum();
    let nll: f64 = scored
        .iter()
        .map(|r| -r.log_density.unwrap_or(f64::NAN))
        .sum();
    (scored.len(), Some((sse / n).sqrt()), Some(nll / n))
}

fn smoothed_moments(cfg: &Config, data: &Dataset, noise_var: f64) -> CliResult<Vec<(f64, f64)>> {
    let sde = build_sde(cfg, data)?;
    let outputs = sde.num_outputs();
    let mut times: Vec<f64> = Vec::new();
    let mut obs: Vec<Vec<Option<f64>>> = Vec::new();
    let mut group = Vec::with_capacity(data.records.len());
    for (i, r) in data.records.iter().enumerate() {
        let site = if data.layout == Layout::SpaceTime {
            r.x[1] as usize
        } else {
            0
        };
        if site >= outputs {
            return Err(CliError::Data {
                row: i + 1,
                message: format!("unknown site {site}"),
            });
        }
        if times.last() != Some(&r.x[0]) {
            times.push(r.x[0]);
            obs.push(vec![None; outputs]);
        }
        let slot = &mut obs.last_mut().expect("group just pushed")[site];
        if let Some(y) = r.y {
            if slot.is_some() {
                return Err(CliError::Data {
                    row: i + 1,
                    message: format!("site {site} observed twice at t={}", r.x[0]),
                });
            }
            *slot = Some(y);
        }
        group.push((times.len() - 1, site));
    }
    let run = kalman_filter_multi(&sde, &times, &obs, noise_var).map_err(|e| match e {
        seqgp::Error::Data { index, message } => CliError::Data {
            row: group.iter().position(|g| g.0 == index).unwrap_or(0) + 1,
            message,
        },
        other => CliError::Core(other),
    })?;
    let sm = rts_smoother(&sde, &run)?;
    Ok(group
        .iter()
        .map(|&(g, site)| {
            let h = sde.h.row(site);
            let m = (h * &sm[g].mean)[0];
            let v = (h * &sm[g].cov * h.transpose())[0];
            (m, v)
        })
        .collect())
}

/// Runs the configured model over the stream: predict at `x`, score `y`,
/// then update.
pub fn run_stream(cfg: &Config, data: &Dataset) -> CliResult<RunReport> {
    let start = Instant::now();
    let mut runner = build_runner(cfg, data)?;
    let emit_smoothed = cfg.parse_or("emit_smoothed", false)?;
    if emit_smoothed && cfg.get("model") != Some("markov") {
        return Err(CliError::config(
            "emit_smoothed",
            "smoothed output is available for model=markov only",
        ));
    }
    let mut rows = Vec::with_capacity(data.records.len());
    let mut approximate = false;
    let mut skipped = 0;
    for (i, rec) in data.records.iter().enumerate() {
        let row = match &mut runner {
            Runner::Single(model) => {
                let out = model
                    .step(&rec.x, rec.y)
                    .map_err(|e| CliError::at_row(e, i))?;
                approximate |= out.approximate;
                Row {
                    x: rec.x.clone(),
                    y: rec.y,
                    mean: out.predictive.mean,
                    var: out.predictive.obs_var(),
                    log_density: out.log_density,
                    weights: Vec::new(),
                    smoothed: None,
                }
            }
            Runner::Ensemble { ensemble, .. } => {
                let out = ensemble
                    .step_all(&rec.x, rec.y)
                    .map_err(|e| CliError::at_row(e, i))?;
                approximate |= out.members.iter().any(|m| m.approximate);
                skipped += usize::from(out.skipped);
                Row {
                    x: rec.x.clone(),
                    y: rec.y,
                    mean: out.mixture.mean,
                    var: out.mixture.var,
                    log_density: out.mixture.log_density,
                    weights: out.weights,
                    smoothed: None,
                }
            }
        };
        rows.push(row);
    }
    if emit_smoothed && !rows.is_empty() {
        let noise = cfg.parse_req("noise_var")?;
        for (row, s) in rows.iter_mut().zip(smoothed_moments(cfg, data, noise)?) {
            row.smoothed = Some(s);
        }
    }

    let (scored, rmse, mean_nlpd) = score(&rows);
    let mut metadata = BTreeMap::new();
    if data.layout == Layout::SpaceTime {
        metadata.insert(
            "spatial_normalization".to_string(),
            "spatial Gram scaled to unit diagonal; marginal variance set by the temporal kernel"
                .to_string(),
        );
    }
    let (flops, members, final_weights, member_names) = match &runner {
        Runner::Single(m) => (m.flops(), None, None, Vec::new()),
        Runner::Ensemble { ensemble, names } => (
            ensemble.flops(),
            Some(names.clone()),
            Some(ensemble.state().weights()),
            names.clone(),
        ),
    };
    let wall_time_s = start.elapsed().as_secs_f64();
    Ok(RunReport {
        columns: data.columns.clone(),
        member_names,
        rows,
        summary: Summary {
            count: data.records.len(),
            scored,
            rmse,
            mean_nlpd,
            flops,
            model: cfg.require("model")?.to_string(),
            approximate_density: approximate,
            skipped_stacking_steps: skipped,
            members,
            final_weights,
            metadata,
            wall_time_s: None,
        },
        wall_time_s,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes CSV rows followed by a `# {json}` summary line.
pub fn write_report<W: Write>(report: &RunReport, timing: bool, mut out: W) -> CliResult<()> {
    let mut header: Vec<String> = report.columns.clone();
    header.extend(["y", "mean", "var", "log_density"].map(String::from));
    header.extend(report.member_names.iter().map(|n| format!("w_{n}")));
    let smoothed = report.rows.first().is_some_and(|r| r.smoothed.is_some());
    if smoothed {
        header.extend(["smoothed_mean", "smoothed_var"].map(String::from));
    }
    writeln!(out, "{}", header.join(","))?;
    for r in &report.rows {
        let mut cells: Vec<String> = r.x.iter().map(f64::to_string).collect();
        cells.push(opt(r.y));
        cells.push(r.mean.to_string());
        cells.push(r.var.to_string());
        cells.push(opt(r.log_density));
        cells.extend(r.weights.iter().map(f64::to_string));
        if let Some((m, v)) = r.smoothed {
            cells.push(m.to_string());
            cells.push(v.to_string());
        }
        writeln!(out, "{}", cells.join(","))?;
    }
    let mut summary = report.summary.clone();
    if timing {
        summary.wall_time_s = Some(report.wall_time_s);
    }
    let json = serde_json::to_string(&summary)
        .map_err(|e| CliError::Input(format!("cannot serialize summary: {e}")))?;
    writeln!(out, "# {json}")?;
    Ok(())
}
