//! Batch exact-GP fit with optional grid search.

use std::io::Write;

use seqgp::exact::{grid_search, HyperGrid};
use seqgp::{ExactGp, Kernel};
use serde::Serialize;
use serde_json::{json, Value};

use crate::build::{at_key, parse_kernel};
use crate::config::Config;
use crate::data::{Dataset, Layout};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize)]
pub struct GridRow {
    pub variance: f64,
    pub lengthscale: f64,
    pub log_marginal: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ExactReport {
    pub columns: Vec<String>,
    pub train_count: usize,
    pub test_x: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    /// Latent posterior variance at each test input.
    pub var: Vec<f64>,
    /// One weight vector per test input, over the training rows in order.
    pub weights: Vec<Vec<f64>>,
    pub log_marginal: f64,
    pub kernel: Kernel,
    pub noise_var: f64,
    pub grid: Option<(Vec<GridRow>, usize)>,
}

pub fn kernel_json(k: &Kernel) -> Value {
    match k {
        Kernel::SquaredExponential {
            variance,
            lengthscale,
        }
        | Kernel::Matern12 {
            variance,
            lengthscale,
        }
        | Kernel::Matern32 {
            variance,
            lengthscale,
        } => json!({
            "family": k.family_name(),
            "variance": variance,
            "lengthscale": lengthscale,
        }),
        Kernel::SpectralMixture(c) => json!({
            "family": k.family_name(),
            "components": c.iter().map(|c| json!([c.weight, c.mean_frequency, c.frequency_variance])).collect::<Vec<_>>(),
        }),
        Kernel::HidaMaternMixture(c) => json!({
            "family": k.family_name(),
            "components": c.iter().map(|c| json!([c.weight, c.phase, c.smoothness.nu(), c.lengthscale, c.variance])).collect::<Vec<_>>(),
        }),
    }
}

/// Conditions on the rows with `y` and predicts at the rows without.
pub fn fit_exact(cfg: &Config, data: &Dataset) -> CliResult<ExactReport> {
    if data.layout == Layout::SpaceTime {
        return Err(CliError::config(
            "model",
            "fit-exact does not take a `site` column",
        ));
    }
    let mut kernel = parse_kernel(cfg, "kernel", None)?;
    let noise_var: f64 = cfg.parse_req("noise_var")?;
    let (train, test): (Vec<_>, Vec<_>) = data.records.iter().partition(|r| r.y.is_some());
    if train.is_empty() {
        return Err(CliError::Input(
            "fit-exact needs at least one row with `y`".into(),
        ));
    }
    let x: Vec<Vec<f64>> = train.iter().map(|r| r.x.clone()).collect();
    let y: Vec<f64> = train.iter().filter_map(|r| r.y).collect();
    let test_x: Vec<Vec<f64>> = test.iter().map(|r| r.x.clone()).collect();

    let grid = match (
        cfg.parse_list("grid.variance")?,
        cfg.parse_list("grid.lengthscale")?,
    ) {
        (None, None) => None,
        (v, l) => {
            let (v0, l0) = match &kernel {
                Kernel::SquaredExponential {
                    variance,
                    lengthscale,
                }
                | Kernel::Matern12 {
                    variance,
                    lengthscale,
                }
                | Kernel::Matern32 {
                    variance,
                    lengthscale,
                } => (*variance, *lengthscale),
                _ => {
                    return Err(CliError::config(
                        "kernel",
                        "grid search covers se, matern12 and matern32",
                    ))
                }
            };
            let g = HyperGrid {
                variance: v.unwrap_or_else(|| vec![v0]),
                lengthscale: l.unwrap_or_else(|| vec![l0]),
            };
            let search = grid_search(&kernel, noise_var, &x, &y, &g).map_err(at_key("grid"))?;
            kernel = search.best;
            let rows = search
                .table
                .iter()
                .map(|c| GridRow {
                    variance: c.variance,
                    lengthscale: c.lengthscale,
                    log_marginal: c.log_marginal,
                })
                .collect();
            Some((rows, search.best_index))
        }
    };

    let gp = ExactGp::fit(&kernel, noise_var, &x, &y).map_err(|e| match e {
        seqgp::Error::Config(m) => CliError::config("noise_var", m),
        other => CliError::Core(other),
    })?;
    let (mean, var, weights) = if test_x.is_empty() {
        (Vec::new(), Vec::new(), Vec::new())
    } else {
        let post = gp.predict(&test_x)?;
        let w = gp.weights(&test_x)?;
        (
            post.mean.iter().copied().collect(),
            (0..test_x.len()).map(|i| post.covariance[(i, i)]).collect(),
            (0..test_x.len())
                .map(|i| w.row(i).iter().copied().collect())
                .collect(),
        )
    };
    Ok(ExactReport {
        columns: data.columns.clone(),
        train_count: x.len(),
        test_x,
        mean,
        var,
        weights,
        log_marginal: gp.log_marginal(),
        kernel,
        noise_var,
        grid,
    })
}

pub fn write_exact_report<W: Write>(r: &ExactReport, mut out: W) -> CliResult<()> {
    let mut header = r.columns.clone();
    header.extend(["mean", "var"].map(String::from));
    header.extend((1..=r.train_count).map(|i| format!("w_{i}")));
    writeln!(out, "{}", header.join(","))?;
    for (i, x) in r.test_x.iter().enumerate() {
        let mut cells: Vec<String> = x.iter().map(f64::to_string).collect();
        cells.push(r.mean[i].to_string());
        cells.push(r.var[i].to_string());
        cells.extend(r.weights[i].iter().map(f64::to_string));
        writeln!(out, "{}", cells.join(","))?;
    }
    let summary = json!({
        "train": r.train_count,
        "test": r.test_x.len(),
        "log_marginal": r.log_marginal,
        "kernel": kernel_json(&r.kernel),
        "noise_var": r.noise_var,
        "grid": r.grid.as_ref().map(|g| &g.0),
        "best_index": r.grid.as_ref().map(|g| g.1),
    });
    writeln!(out, "# {summary}")?;
    Ok(())
}
