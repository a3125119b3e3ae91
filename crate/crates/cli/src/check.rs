//! Invariant checks for a configuration, run on a synthetic stream.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use seqgp::exact::log_marginal_likelihood;
use seqgp::markov::build_lti;
use seqgp::{FeatureMap, Kernel, SparseState};

use crate::build::{feature_map_for, inducing_for, parse_kernel};
use crate::config::Config;
use crate::data::{Dataset, Layout, StreamRecord};
use crate::error::{CliError, CliResult};
use crate::run::{run_stream, RunReport};

const STREAM_LEN: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name,
        passed,
        detail,
    }
}

/// Low-discrepancy inputs in `[−5, 5]` with a smooth noisy target.
fn synthetic(cfg: &Config) -> CliResult<Dataset> {
    let model = cfg.require("model")?;
    let markov = model == "markov"
        || (model == "ensemble"
            && cfg
                .entries()
                .any(|(k, v)| k.ends_with(".model") && v == "markov"));
    let (layout, columns, sites) = if markov && cfg.contains("spatial.locations") {
        let path = cfg.require("spatial.locations")?;
        let file = std::fs::File::open(path)
            .map_err(|e| CliError::config("spatial.locations", format!("{path}: {e}")))?;
        let n = crate::data::read_locations(file)?.len();
        (Layout::SpaceTime, vec!["t".into(), "site".into()], n)
    } else if markov {
        (Layout::Time, vec!["t".into()], 1)
    } else {
        let d: usize = cfg.parse_or("check.dim", 1)?;
        (
            Layout::Inputs(d),
            (1..=d).map(|i| format!("x{i}")).collect(),
            1,
        )
    };
    let golden = 0.618_033_988_749_894_9;
    let records = (0..STREAM_LEN)
        .map(|i| {
            let u = |k: usize| ((i * (k + 1)) as f64 * golden).fract() * 10.0 - 5.0;
            let x = match layout {
                Layout::Time => vec![0.1 * i as f64],
                Layout::SpaceTime => vec![0.1 * (i / sites) as f64, (i % sites) as f64],
                Layout::Inputs(d) => (0..d).map(u).collect(),
            };
            let y = x[0].sin() + 0.1 * (37.0 * i as f64).sin();
            StreamRecord { x, y: Some(y) }
        })
        .collect();
    Ok(Dataset {
        layout,
        columns,
        records,
    })
}

fn duality_error(kernel: &Kernel) -> Option<f64> {
    let sde = build_lti(kernel).ok()?;
    let ell = kernel.characteristic_lengthscale();
    (0..=50)
        .map(|i| {
            let d = 0.1 * ell * i as f64;
            sde.implied_covariance(d)
                .map(|c| (c[(0, 0)] - kernel.eval_distance(d)).abs())
                .unwrap_or(f64::INFINITY)
        })
        .reduce(f64::max)
}

fn identical(a: &RunReport, b: &RunReport) -> bool {
    a.rows.len() == b.rows.len()
        && a.rows.iter().zip(&b.rows).all(|(r, s)| {
            r.mean.to_bits() == s.mean.to_bits()
                && r.var.to_bits() == s.var.to_bits()
                && r.log_density.map(f64::to_bits) == s.log_density.map(f64::to_bits)
        })
}

/// Posterior mean of a static Gaussian weight-space model in closed form.
fn weight_space_mean(map: &FeatureMap, noise: f64, data: &Dataset, x: &[f64]) -> CliResult<f64> {
    let f = map.dim();
    let mut prec = DMatrix::identity(f, f) / map.prior_variance();
    let mut b = DVector::zeros(f);
    for r in &data.records {
        let phi = map.featurize(&r.x)?;
        prec += &phi * phi.transpose() / noise;
        b += &phi * (r.y.unwrap_or(0.0) / noise);
    }
    let chol = prec.cholesky().ok_or_else(|| {
        CliError::Core(seqgp::Error::Numerical(
            "weight precision not positive definite".into(),
        ))
    })?;
    Ok(map.featurize(x)?.dot(&chol.solve(&b)))
}

pub fn run_checks(cfg: &Config) -> CliResult<Vec<CheckResult>> {
    let data = synthetic(cfg)?;
    let model = cfg.require("model")?.to_string();
    let mut results = Vec::new();

    let first = run_stream(cfg, &data)?;
    results.push(check(
        "builds_and_runs",
        true,
        format!("{} rows", first.rows.len()),
    ));
    let second = run_stream(cfg, &data)?;
    results.push(check(
        "deterministic",
        identical(&first, &second),
        String::new(),
    ));

    let positive = first.rows.iter().all(|r| r.var.is_finite() && r.var > 0.0);
    results.push(check(
        "predictive_variance_positive",
        positive,
        String::new(),
    ));

    // Perturbing y at row k may change rows after k but never rows up to k.
    let k = STREAM_LEN / 2;
    let mut perturbed = data.clone();
    perturbed.records[k].y = perturbed.records[k].y.map(|y| y + 10.0);
    let third = run_stream(cfg, &perturbed)?;
    let same_prefix = first.rows[..=k]
        .iter()
        .zip(&third.rows[..=k])
        .all(|(a, b)| a.mean.to_bits() == b.mean.to_bits() && a.var.to_bits() == b.var.to_bits());
    let scored_changed = first.rows[k].log_density != third.rows[k].log_density;
    results.push(check(
        "prequential_ordering",
        same_prefix && scored_changed,
        format!("perturbed row {}", k + 1),
    ));

    if let Ok(kernel) = parse_kernel(cfg, "kernel", None) {
        if let Some(err) = duality_error(&kernel) {
            results.push(check(
                "kernel_sde_duality",
                err < 1e-8,
                format!("max error {err:.3e}"),
            ));
        }
    }

    match model.as_str() {
        "markov" if data.layout == Layout::Time => {
            let kernel = parse_kernel(cfg, "kernel", None)?;
            let noise: f64 = cfg.parse_req("noise_var")?;
            let x = data.inputs();
            let y: Vec<f64> = data.records.iter().filter_map(|r| r.y).collect();
            let exact = log_marginal_likelihood(&kernel, noise, &x, &y)?;
            let total: f64 = first.rows.iter().filter_map(|r| r.log_density).sum();
            let gap = (total - exact).abs();
            results.push(check(
                "markov_matches_exact_evidence",
                gap < 1e-6,
                format!("gap {gap:.3e}"),
            ));
        }
        "linear"
            if cfg.get("dynamics.mode").unwrap_or("static") == "static"
                && cfg.get("likelihood").unwrap_or("gaussian") == "gaussian" =>
        {
            let mut extended = data.clone();
            extended.records.push(StreamRecord {
                x: vec![0.3; data.input_dim()],
                y: None,
            });
            let report = run_stream(cfg, &extended)?;
            let map = feature_map_for(cfg, &data)?;
            let noise: f64 = cfg.parse_req("noise_var")?;
            let oracle = weight_space_mean(&map, noise, &data, &vec![0.3; data.input_dim()])?;
            let got = report.rows.last().map(|r| r.mean).unwrap_or(f64::NAN);
            let gap = (got - oracle).abs();
            results.push(check(
                "weight_space_matches_batch_posterior",
                gap < 1e-6 * (1.0 + oracle.abs()),
                format!("gap {gap:.3e}"),
            ));
        }
        "sparse" | "vsgp" => {
            let kernel = parse_kernel(cfg, "kernel", None)?;
            let noise: f64 = cfg.parse_req("noise_var")?;
            let z = inducing_for(cfg, &data)?;
            let residual = cfg.parse_or("sparse.residual", true)?;
            let mut rec = SparseState::new(&kernel, &z, residual)?;
            let mut batch = rec.clone();
            let x = data.inputs();
            let y: Vec<f64> = data.records.iter().filter_map(|r| r.y).collect();
            for (xi, yi) in x.iter().zip(&y) {
                rec.update(xi, *yi, noise)?;
            }
            batch.info_update(&x, &y, noise)?;
            let gap = (rec.mean() - batch.mean())
                .amax()
                .max((rec.cov() - batch.cov()).amax());
            results.push(check(
                "sparse_recursion_matches_batch",
                gap < 1e-8,
                format!("gap {gap:.3e}"),
            ));
        }
        "ensemble" => {
            let w = first.summary.final_weights.clone().unwrap_or_default();
            let sum: f64 = w.iter().sum();
            let ok = w.iter().all(|v| *v >= 0.0) && (sum - 1.0).abs() < 1e-12;
            results.push(check(
                "ensemble_weights_on_simplex",
                ok,
                format!("sum {sum}"),
            ));
        }
        _ => {}
    }
    Ok(results)
}

/// Prints one `PASS`/`FAIL` line per check; true when all passed.
pub fn write_checks<W: Write>(results: &[CheckResult], mut out: W) -> CliResult<bool> {
    for r in results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        if r.detail.is_empty() {
            writeln!(out, "{status} {}", r.name)?;
        } else {
            writeln!(out, "{status} {} ({})", r.name, r.detail)?;
        }
    }
    Ok(results.iter().all(|r| r.passed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_pass(cfg: &str) -> Vec<CheckResult> {
        let results = run_checks(&Config::parse(cfg).unwrap()).unwrap();
        for r in &results {
            assert!(r.passed, "{r:?}");
        }
        results
    }

    #[test]
    fn markov_config_passes() {
        let r = all_pass("model=markov\nkernel=matern32\nkernel.variance=1\nkernel.lengthscale=0.5\nnoise_var=0.1");
        assert!(r.iter().any(|c| c.name == "markov_matches_exact_evidence"));
        assert!(r.iter().any(|c| c.name == "kernel_sde_duality"));
    }

    #[test]
    fn linear_config_passes() {
        let r = all_pass("model=linear\nkernel=se\nkernel.variance=1\nkernel.lengthscale=1\nnoise_var=0.1\nfeatures.kind=rff\nfeatures.F=64\nseed=1");
        assert!(r
            .iter()
            .any(|c| c.name == "weight_space_matches_batch_posterior"));
    }

    #[test]
    fn sparse_and_ensemble_configs_pass() {
        all_pass("model=sparse\nkernel=se\nkernel.variance=1\nkernel.lengthscale=1\nnoise_var=0.1\nsparse.M=8");
        all_pass("model=ensemble\nensemble.members=a,b\nensemble.combiner=stacking\nkernel=matern12\nkernel.variance=1\nkernel.lengthscale=1\nnoise_var=0.1\nmember.a.model=exact\nmember.b.model=exact\nmember.b.kernel.lengthscale=3");
    }

    #[test]
    fn output_lines() {
        let mut buf = Vec::new();
        let ok = write_checks(
            &[
                check("a", true, String::new()),
                check("b", false, "x".into()),
            ],
            &mut buf,
        )
        .unwrap();
        assert!(!ok);
        assert_eq!(String::from_utf8(buf).unwrap(), "PASS a\nFAIL b (x)\n");
    }
}
