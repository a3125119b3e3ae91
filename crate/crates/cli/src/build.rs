//! Model construction from flat configuration.

use std::fs::File;

use nalgebra::{DMatrix, DVector};
use seqgp::linear_filter::Likelihood;
use seqgp::markov::{build_lti, build_spatiotemporal};
use seqgp::model::{ExactModel, LinearFilterModel, MarkovModel, SparseModel, VsgpModel};
use seqgp::sparse::select_inducing;
use seqgp::{
    Combiner, Dynamics, Ensemble, FeatureMap, HidaMaternComponent, Kernel, LtiSde, SequentialModel,
    Smoothness, SparseState, SpectralComponent,
};

use crate::config::Config;
use crate::data::{read_locations, Dataset, Layout};
use crate::error::{CliError, CliResult};

/// Maps a core configuration error onto the key that caused it.
pub(crate) fn at_key(key: &str) -> impl Fn(seqgp::Error) -> CliError + '_ {
    move |e| match e {
        seqgp::Error::Config(m) | seqgp::Error::Unsupported(m) | seqgp::Error::Model(m) => {
            CliError::config(key, m)
        }
        other => CliError::Core(other),
    }
}

fn component_fields<'a>(key: &str, item: &'a str, n: usize) -> CliResult<Vec<&'a str>> {
    let fields: Vec<&str> = item.split(':').map(str::trim).collect();
    if fields.len() != n {
        return Err(CliError::config(
            key,
            format!("component `{item}` needs {n} colon-separated fields"),
        ));
    }
    Ok(fields)
}

fn number(key: &str, s: &str) -> CliResult<f64> {
    s.parse()
        .map_err(|_| CliError::config(key, format!("cannot parse `{s}` as a number")))
}

fn smoothness(key: &str, s: &str) -> CliResult<Smoothness> {
    match s {
        "0.5" | "1/2" => Ok(Smoothness::Half),
        "1.5" | "3/2" => Ok(Smoothness::ThreeHalves),
        _ => Err(CliError::config(
            key,
            format!("smoothness must be 1/2 or 3/2, got `{s}`"),
        )),
    }
}

/// Reads the kernel named at `prefix`, with hyperparameters under
/// `prefix.variance`, `prefix.lengthscale` and `prefix.components`.
///
/// Components are `;`-separated: `w:mu:v` for `sm`, `w:b:nu:ell:var` for `hm`.
pub fn parse_kernel(
    cfg: &Config,
    prefix: &str,
    default_variance: Option<f64>,
) -> CliResult<Kernel> {
    let family = cfg.require(prefix)?;
    let var_key = format!("{prefix}.variance");
    let ell_key = format!("{prefix}.lengthscale");
    let comp_key = format!("{prefix}.components");
    let variance = || -> CliResult<f64> {
        match default_variance {
            Some(d) => cfg.parse_or(&var_key, d),
            None => cfg.parse_req(&var_key),
        }
    };
    let kernel = match family {
        "se" => Kernel::squared_exponential(variance()?, cfg.parse_req(&ell_key)?),
        "matern12" => Kernel::matern12(variance()?, cfg.parse_req(&ell_key)?),
        "matern32" => Kernel::matern32(variance()?, cfg.parse_req(&ell_key)?),
        "sm" => {
            let comps = cfg
                .require(&comp_key)?
                .split(';')
                .map(|item| {
                    let f = component_fields(&comp_key, item, 3)?;
                    Ok(SpectralComponent {
                        weight: number(&comp_key, f[0])?,
                        mean_frequency: number(&comp_key, f[1])?,
                        frequency_variance: number(&comp_key, f[2])?,
                    })
                })
                .collect::<CliResult<Vec<_>>>()?;
            Kernel::spectral_mixture(comps)
        }
        "hm" => {
            let comps = cfg
                .require(&comp_key)?
                .split(';')
                .map(|item| {
                    let f = component_fields(&comp_key, item, 5)?;
                    Ok(HidaMaternComponent {
                        weight: number(&comp_key, f[0])?,
                        phase: number(&comp_key, f[1])?,
                        smoothness: smoothness(&comp_key, f[2])?,
                        lengthscale: number(&comp_key, f[3])?,
                        variance: number(&comp_key, f[4])?,
                    })
                })
                .collect::<CliResult<Vec<_>>>()?;
            Kernel::hida_matern(comps)
        }
        other => {
            return Err(CliError::config(
                prefix,
                format!("unknown kernel `{other}` (expected se, matern12, matern32, sm or hm)"),
            ))
        }
    };
    kernel.map_err(at_key(prefix))
}

fn noise_var(cfg: &Config) -> CliResult<f64> {
    let v: f64 = cfg.parse_req("noise_var")?;
    if !(v.is_finite() && v > 0.0) {
        return Err(CliError::config(
            "noise_var",
            format!("must be positive, got {v}"),
        ));
    }
    Ok(v)
}

fn require_layout_inputs(data: &Dataset, model: &str) -> CliResult<usize> {
    match data.layout {
        Layout::SpaceTime => Err(CliError::config(
            "model",
            format!("`{model}` does not take a `site` column; use model=markov"),
        )),
        _ => Ok(data.input_dim()),
    }
}

fn feature_map(cfg: &Config, kernel: &Kernel, data: &Dataset, dim: usize) -> CliResult<FeatureMap> {
    let count: usize = cfg.parse_req("features.F")?;
    match cfg.require("features.kind")? {
        "rff" => {
            let seed = cfg.seed("features.seed")?;
            FeatureMap::sample_rff(kernel, count, dim, seed).map_err(at_key("features"))
        }
        "hsgp" => {
            if dim != 1 {
                return Err(CliError::config(
                    "features.kind",
                    "hsgp features take a single input column",
                ));
            }
            let halfwidth = match cfg.parse_opt("features.L")? {
                Some(l) => l,
                None => {
                    let xs: Vec<f64> = data.records.iter().map(|r| r.x[0]).collect();
                    FeatureMap::default_halfwidth(&xs)
                }
            };
            FeatureMap::hsgp(kernel, count, halfwidth).map_err(at_key("features"))
        }
        other => Err(CliError::config(
            "features.kind",
            format!("unknown feature map `{other}` (expected rff or hsgp)"),
        )),
    }
}

fn dynamics(cfg: &Config, map: &FeatureMap) -> CliResult<Dynamics> {
    let d = match cfg.get("dynamics.mode").unwrap_or("static") {
        "static" => Dynamics::Static,
        "random_walk" => Dynamics::RandomWalk {
            sigma_rw2: cfg.parse_req("dynamics.sigma_rw2")?,
        },
        "b2p" => Dynamics::BackToPrior {
            lambda: cfg.parse_req("dynamics.lambda")?,
            prior_variance: map.prior_variance(),
        },
        "general" => {
            let f = map.dim();
            Dynamics::General {
                a: cfg.parse_req("dynamics.a")?,
                u: DVector::from_element(f, cfg.parse_or("dynamics.u", 0.0)?),
                c: DMatrix::identity(f, f) * cfg.parse_req::<f64>("dynamics.c")?,
            }
        }
        other => {
            return Err(CliError::config(
                "dynamics.mode",
                format!(
                    "unknown dynamics `{other}` (expected static, random_walk, b2p or general)"
                ),
            ))
        }
    };
    d.validate(map.dim()).map_err(at_key("dynamics"))?;
    Ok(d)
}

/// State-space model for `model=markov`, temporal or spatiotemporal.
pub fn build_sde(cfg: &Config, data: &Dataset) -> CliResult<LtiSde> {
    let kernel = parse_kernel(cfg, "kernel", None)?;
    match data.layout {
        Layout::Time => build_lti(&kernel).map_err(at_key("kernel")),
        Layout::SpaceTime => {
            let path = cfg.require("spatial.locations")?;
            let file = File::open(path)
                .map_err(|e| CliError::config("spatial.locations", format!("{path}: {e}")))?;
            let locations = read_locations(file)?;
            let spatial = parse_kernel(cfg, "spatial.kernel", Some(1.0))?;
            build_spatiotemporal(&kernel, &spatial, &locations).map_err(at_key("spatial"))
        }
        Layout::Inputs(_) => Err(CliError::config(
            "model",
            format!(
                "markov models take a single `t` column (optionally with `site`), got {:?}",
                data.columns
            ),
        )),
    }
}

fn inducing_points(cfg: &Config, data: &Dataset, dim: usize) -> CliResult<Vec<Vec<f64>>> {
    if let Some(list) = cfg.parse_list("sparse.inducing")? {
        if dim != 1 {
            return Err(CliError::config(
                "sparse.inducing",
                "explicit inducing inputs are supported for one input column",
            ));
        }
        return Ok(list.into_iter().map(|z| vec![z]).collect());
    }
    let m: usize = cfg.parse_req("sparse.M")?;
    let xs = data.inputs();
    if xs.is_empty() {
        // Nothing will be observed; any valid placement will do.
        return Ok((0..m.max(1)).map(|i| vec![i as f64; dim]).collect());
    }
    let seed = if dim > 1 { cfg.seed("sparse.seed")? } else { 0 };
    select_inducing(&xs, m, seed).map_err(at_key("sparse.M"))
}

/// The feature map a `model=linear` configuration would use on `data`.
pub fn feature_map_for(cfg: &Config, data: &Dataset) -> CliResult<FeatureMap> {
    let dim = require_layout_inputs(data, "linear")?;
    let kernel = parse_kernel(cfg, "kernel", None)?;
    feature_map(cfg, &kernel, data, dim)
}

/// The inducing inputs a sparse configuration would use on `data`.
pub fn inducing_for(cfg: &Config, data: &Dataset) -> CliResult<Vec<Vec<f64>>> {
    let dim = require_layout_inputs(data, "sparse")?;
    inducing_points(cfg, data, dim)
}

/// Builds a single (non-ensemble) model.
pub fn build_single(cfg: &Config, data: &Dataset) -> CliResult<Box<dyn SequentialModel>> {
    let model = cfg.require("model")?;
    let built: Box<dyn SequentialModel> = match model {
        "linear" => {
            let dim = require_layout_inputs(data, model)?;
            let kernel = parse_kernel(cfg, "kernel", None)?;
            let map = feature_map(cfg, &kernel, data, dim)?;
            let dynamics = dynamics(cfg, &map)?;
            let m = match cfg.get("likelihood").unwrap_or("gaussian") {
                "gaussian" => LinearFilterModel::new(map, dynamics, noise_var(cfg)?),
                "bernoulli_logit" => {
                    LinearFilterModel::with_likelihood(map, dynamics, Likelihood::BernoulliLogit)
                }
                "poisson_log" => {
                    LinearFilterModel::with_likelihood(map, dynamics, Likelihood::PoissonLog)
                }
                other => {
                    return Err(CliError::config(
                        "likelihood",
                        format!("unknown likelihood `{other}`"),
                    ))
                }
            };
            Box::new(m.map_err(at_key("model"))?)
        }
        "markov" => {
            let sde = build_sde(cfg, data)?;
            Box::new(MarkovModel::new(sde, noise_var(cfg)?).map_err(at_key("model"))?)
        }
        "sparse" | "vsgp" => {
            let dim = require_layout_inputs(data, model)?;
            let kernel = parse_kernel(cfg, "kernel", None)?;
            let z = inducing_points(cfg, data, dim)?;
            let residual = cfg.parse_or("sparse.residual", true)?;
            let state = SparseState::new(&kernel, &z, residual).map_err(at_key("sparse"))?;
            let noise = noise_var(cfg)?;
            if model == "sparse" {
                Box::new(SparseModel::new(state, noise).map_err(at_key("model"))?)
            } else {
                let batch = cfg.parse_or("vsgp.batch", 1usize)?;
                Box::new(VsgpModel::new(state, noise, batch).map_err(at_key("vsgp.batch"))?)
            }
        }
        "exact" => {
            let dim = require_layout_inputs(data, model)?;
            let kernel = parse_kernel(cfg, "kernel", None)?;
            Box::new(ExactModel::new(kernel, noise_var(cfg)?, dim).map_err(at_key("model"))?)
        }
        "ensemble" => {
            return Err(CliError::config("model", "ensembles cannot be nested"));
        }
        other => {
            return Err(CliError::config(
                "model",
                format!("unknown model `{other}` (expected linear, markov, sparse, vsgp, exact or ensemble)"),
            ))
        }
    };
    Ok(built)
}

/// A configured stream consumer.
pub enum Runner {
    Single(Box<dyn SequentialModel>),
    Ensemble {
        ensemble: Ensemble,
        names: Vec<String>,
    },
}

pub fn build_runner(cfg: &Config, data: &Dataset) -> CliResult<Runner> {
    if cfg.require("model")? != "ensemble" {
        return Ok(Runner::Single(build_single(cfg, data)?));
    }
    let names: Vec<String> = cfg
        .require("ensemble.members")?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    if names.iter().any(String::is_empty) {
        return Err(CliError::config("ensemble.members", "empty member name"));
    }
    for (i, n) in names.iter().enumerate() {
        if names[..i].contains(n) {
            return Err(CliError::config(
                "ensemble.members",
                format!("duplicate member `{n}`"),
            ));
        }
    }
    let combiner = match cfg.require("ensemble.combiner")? {
        "bma" => Combiner::Bma,
        "stacking" => Combiner::Stacking,
        other => {
            return Err(CliError::config(
                "ensemble.combiner",
                format!("unknown combiner `{other}` (expected bma or stacking)"),
            ))
        }
    };
    let members = names
        .iter()
        .map(|n| {
            let sub = cfg.member(n);
            if !sub.contains("model") {
                return Err(CliError::config(
                    format!("member.{n}.model"),
                    "missing required key",
                ));
            }
            build_single(&sub, data).map_err(|e| match e {
                CliError::Config { key, message } => {
                    CliError::config(format!("member.{n}.{key}"), message)
                }
                other => other,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let ensemble = Ensemble::new(members, combiner).map_err(at_key("ensemble.members"))?;
    Ok(Runner::Ensemble { ensemble, names })
}
