//! Subcommand implementations.

use std::fmt::Write as _;
use std::fs;

use anyhow::{bail, Context, Result};
use log::info;
use mom_bayes::data::{draws_csv, histogram_csv, load_csv, standardize, write_atomic, write_outputs, Table};
use mom_bayes::diagnostics::{contaminate, summarize, ContaminationSpec, DeltaChoice, Generator};
use mom_bayes::experiments::{self, LocationConfig, WineConfig};
use mom_bayes::inference::{derive_seed, sample, Algorithm, PosteriorOptions, RobustPosterior, SamplerConfig};
use mom_bayes::models::{Bounds, Dataset, FamilyKind, LikelihoodFamily, Prior};
use mom_bayes::mom::PartitionScheme;
use mom_bayes::rho::{RhoKind, RhoSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::args::{EngineArgs, ExperimentArgs, ExperimentName, FitArgs, ModelArgs, ModelName, PriorName, SimulateArgs};

fn rho(engine: &EngineArgs) -> Result<RhoSpec> {
    Ok(RhoSpec::from_kind(engine.rho.parse::<RhoKind>()?)?)
}

fn sampler(engine: &EngineArgs) -> Result<SamplerConfig> {
    let algorithm: Algorithm = engine.sampler.parse()?;
    let mut cfg = SamplerConfig::new(algorithm);
    cfg.chains = engine.chains;
    cfg.draws = engine.draws;
    cfg.warmup = engine.warmup;
    cfg.leapfrog_steps = engine.leapfrog_steps;
    cfg.seed = derive_seed(engine.seed, 5);
    if let Some(t) = engine.target_accept {
        cfg.target_accept = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn model_arg(model: &ModelArgs, key: &str, default: f64) -> Result<f64> {
    let mut value = default;
    for kv in &model.model_arg {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("--model-arg expects key=value, got '{kv}'"))?;
        match k.trim() {
            k if k == key => value = v.trim().parse().with_context(|| format!("--model-arg {kv}"))?,
            "sigma" | "b" => {}
            other => bail!("unknown model argument '{other}'"),
        }
    }
    Ok(value)
}

/// `p` counts the intercept.
fn family_kind(model: &ModelArgs, p: usize) -> Result<FamilyKind> {
    Ok(match model.model {
        ModelName::GaussianLocation => FamilyKind::GaussianLocation {
            sigma: model_arg(model, "sigma", 1.0)?,
        },
        ModelName::LaplaceLocation => FamilyKind::LaplaceLocation {
            b: model_arg(model, "b", 1.0)?,
        },
        ModelName::PoissonRate => FamilyKind::PoissonRate,
        ModelName::LinearRegression => FamilyKind::LinearRegression { p },
    })
}

fn broadcast(values: &[f64], d: usize, what: &str) -> Result<Vec<f64>> {
    match values.len() {
        1 => Ok(vec![values[0]; d]),
        n if n == d => Ok(values.to_vec()),
        n => bail!("{what} needs 1 or {d} values, got {n}"),
    }
}

fn coordinate_names(kind: FamilyKind, features: &[String]) -> Vec<String> {
    match kind {
        FamilyKind::LinearRegression { .. } => {
            let mut names = vec!["intercept".to_string()];
            names.extend(features.iter().cloned());
            names.push("sigma".into());
            names
        }
        FamilyKind::PoissonRate => vec!["lambda".into()],
        _ => vec!["theta".into()],
    }
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

struct Prepared {
    posterior: RobustPosterior,
    names: Vec<String>,
}

fn prepare(args: &FitArgs) -> Result<Prepared> {
    let path = args.data.as_deref().context("--data is required")?;
    let regression = args.model.model == ModelName::LinearRegression;
    if regression && args.features.is_empty() {
        bail!("linear-regression needs --features");
    }
    if !regression && !args.features.is_empty() {
        bail!("--features only applies to linear-regression");
    }
    let mut table = load_csv(path, &args.response, &args.features)?;
    fs::create_dir_all(&args.engine.out).with_context(|| format!("creating {}", args.engine.out.display()))?;
    if regression && !args.no_standardize {
        let (scaled, record) = standardize(&table)?;
        write_atomic(
            &args.engine.out.join("standardization.csv"),
            record.to_text().as_bytes(),
        )?;
        table = scaled;
    }
    let mut data = table.to_dataset()?;
    if args.contaminate > 0 {
        data = contaminate(
            &data,
            &ContaminationSpec {
                count: args.contaminate,
                generator: Generator::Gaussian {
                    mean: args.outlier_mean,
                    sd: args.outlier_sd,
                },
                seed: derive_seed(args.engine.seed, 1),
            },
        )?;
        info!("replaced {} responses with outliers", args.contaminate);
    }
    let kind = family_kind(&args.model, data.width())?;
    let family = LikelihoodFamily::with_default_domain(kind, &data)?;
    let d = family.param_dim();
    let domain = family.domain().clone();
    let prior = match args.prior {
        PriorName::Uniform => Prior::uniform(domain),
        PriorName::Gaussian => {
            if args.prior_mean.is_empty() || args.prior_sd.is_empty() {
                bail!("--prior gaussian needs --prior-mean and --prior-sd");
            }
            Prior::gaussian(
                &broadcast(&args.prior_mean, d, "--prior-mean")?,
                &broadcast(&args.prior_sd, d, "--prior-sd")?,
                domain,
            )?
        }
    };
    let engine = &args.engine;
    let options = PosteriorOptions {
        k: engine.k.unwrap_or(PosteriorOptions::default().k),
        scheme: engine.partition.parse::<PartitionScheme>()?,
        seed: derive_seed(engine.seed, 2),
        rho: rho(engine)?,
        delta_c: engine.delta_c,
        delta_exponent: engine.delta_exponent,
        theta_prime: (!args.theta_prime.is_empty()).then(|| args.theta_prime.clone()),
        ..PosteriorOptions::default()
    };
    let posterior = RobustPosterior::from_options(family, prior, &data, &options)?;
    info!(
        "{} model, N = {}, k = {}, Δ_n = {:.6}",
        kind.name(),
        data.len(),
        posterior.partition().k(),
        posterior.delta().delta(posterior.partition().n())
    );
    Ok(Prepared {
        posterior,
        names: coordinate_names(kind, &table.feature_names),
    })
}

fn posterior_extras(post: &RobustPosterior, engine: &EngineArgs) -> Vec<(String, String)> {
    let n = post.partition().n();
    vec![
        ("model".into(), post.family().kind().name().to_string()),
        ("rho".into(), post.rho().kind().to_string()),
        ("k".into(), post.partition().k().to_string()),
        ("block_size".into(), n.to_string()),
        ("delta_c".into(), post.delta().c.to_string()),
        ("delta_n".into(), post.delta().delta(n).to_string()),
        ("theta_prime".into(), fmt_vec(post.theta_prime().as_slice())),
        ("sampler".into(), engine.sampler.clone()),
        ("seed".into(), engine.seed.to_string()),
    ]
}

fn chain_extras(chains: &[mom_bayes::inference::Chain]) -> Vec<(String, String)> {
    let acc: Vec<f64> = chains.iter().map(|c| c.acceptance_rate).collect();
    let div: usize = chains.iter().map(|c| c.divergence_count).sum();
    vec![
        ("acceptance_rate".into(), fmt_vec(&acc)),
        ("divergences".into(), div.to_string()),
    ]
}

pub fn fit(args: &FitArgs) -> Result<()> {
    let Prepared { posterior, names } = prepare(args)?;
    let engine = &args.engine;
    let map = posterior.map_estimate(engine.restarts, derive_seed(engine.seed, 3))?;
    let chains = sample(&posterior, &sampler(engine)?, &map.theta)?;
    let summary = summarize(&chains, engine.alpha, Some(&posterior))?;
    let mut extra = posterior_extras(&posterior, engine);
    extra.extend(chain_extras(&chains));
    write_outputs(&engine.out, &chains, &summary, &names, &extra)?;
    for (i, name) in names.iter().enumerate() {
        let (lo, hi) = summary.credible_intervals[i];
        info!("{name}: MAP {:.4} ({lo:.4}, {hi:.4})", summary.map[i]);
    }
    info!("wrote results to {}", engine.out.display());
    Ok(())
}

/// Draws and histograms only; chains start at the pilot estimate.
pub fn sample_only(args: &FitArgs) -> Result<()> {
    let Prepared { posterior, names } = prepare(args)?;
    let engine = &args.engine;
    let chains = sample(&posterior, &sampler(engine)?, posterior.pilot())?;
    write_atomic(&engine.out.join("draws.csv"), draws_csv(&chains).as_bytes())?;
    for i in 0..names.len() {
        write_atomic(
            &engine.out.join(format!("hist_{i}.csv")),
            histogram_csv(&chains, i, 50).as_bytes(),
        )?;
    }
    info!(
        "wrote {} draws to {}",
        chains.iter().map(|c| c.len()).sum::<usize>(),
        engine.out.display()
    );
    Ok(())
}

/// A box around θ that is wide enough for every family.
fn simulation_domain(kind: FamilyKind, theta: &[f64]) -> Result<Bounds> {
    let mut lower: Vec<f64> = theta.iter().map(|t| t - 1.0 - t.abs()).collect();
    let mut upper: Vec<f64> = theta.iter().map(|t| t + 1.0 + t.abs()).collect();
    let positive = match kind {
        FamilyKind::PoissonRate => Some(0),
        FamilyKind::LinearRegression { p } => Some(p),
        _ => None,
    };
    if let Some(i) = positive {
        if theta[i] <= 0.0 {
            bail!(
                "{} must be positive, got {}",
                if i == 0 { "the rate" } else { "sigma" },
                theta[i]
            );
        }
        lower[i] = theta[i] / 2.0;
        upper[i] = 2.0 * theta[i];
    }
    Ok(Bounds::new(lower, upper)?)
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let p = args.theta.len().saturating_sub(1);
    let kind = family_kind(&args.model, p)?;
    if kind.param_dim() != args.theta.len() {
        bail!(
            "{} takes {} parameters, got {}",
            kind.name(),
            kind.param_dim(),
            args.theta.len()
        );
    }
    let family = LikelihoodFamily::new(kind, simulation_domain(kind, &args.theta)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(args.seed, 0));
    let mut data = family.simulate(&args.theta, args.n, &mut rng)?;
    if args.contaminate > 0 {
        data = contaminate(
            &data,
            &ContaminationSpec {
                count: args.contaminate,
                generator: Generator::Gaussian {
                    mean: args.outlier_mean,
                    sd: args.outlier_sd,
                },
                seed: derive_seed(args.seed, 1),
            },
        )?;
    }
    let text = dataset_csv(&data);
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_atomic(&args.out, text.as_bytes())?;
    info!("wrote {} rows to {}", data.len(), args.out.display());
    Ok(())
}

/// Header `y` then `z1..zp` (the intercept column is not written).
fn dataset_csv(data: &Dataset) -> String {
    let mut s = String::from("y");
    let extra = if data.is_regression() { data.width() - 1 } else { 0 };
    for j in 1..=extra {
        let _ = write!(s, ",z{j}");
    }
    s.push('\n');
    for i in 0..data.len() {
        let _ = write!(s, "{}", data.response()[i]);
        if extra > 0 {
            for z in &data.row(i)[1..] {
                let _ = write!(s, ",{z}");
            }
        }
        s.push('\n');
    }
    s
}

pub fn experiment(args: &ExperimentArgs) -> Result<()> {
    let engine = &args.engine;
    fs::create_dir_all(&engine.out).with_context(|| format!("creating {}", engine.out.display()))?;
    match args.name {
        ExperimentName::Example1 => example1(args),
        ExperimentName::Example2 => example2(args),
        ExperimentName::Wine => wine(args),
        ExperimentName::Deviation => deviation(args),
        ExperimentName::Normality => normality(args),
    }
}

fn location_config(args: &ExperimentArgs) -> Result<LocationConfig> {
    let engine = &args.engine;
    let base = LocationConfig::default();
    Ok(LocationConfig {
        n_total: args.n.unwrap_or(base.n_total),
        outliers: args.outliers.unwrap_or(base.outliers),
        k: engine.k.unwrap_or(base.k),
        rho: rho(engine)?,
        delta_c: engine.delta_c,
        sampler: sampler(engine)?,
        restarts: engine.restarts,
        seed: engine.seed,
        ..base
    })
}

fn example1(args: &ExperimentArgs) -> Result<()> {
    let cfg = location_config(args)?;
    let ks = match args.engine.k {
        Some(k) => vec![k],
        None => vec![20, 40, 60, 80],
    };
    let rows = experiments::example1(&cfg, &ks)?;
    let mut s = String::from("k,ks_absolute,ks_huber,mean_absolute,mean_huber\n");
    for r in &rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.k, r.ks_absolute, r.ks_huber, r.mean_absolute, r.mean_huber
        );
        info!("k = {}: KS absolute {:.4}, huber {:.4}", r.k, r.ks_absolute, r.ks_huber);
    }
    write_atomic(&args.engine.out.join("example1.csv"), s.as_bytes())?;
    Ok(())
}

fn example2(args: &ExperimentArgs) -> Result<()> {
    let cfg = location_config(args)?;
    let run = experiments::example2(&cfg)?;
    let mut extra = posterior_extras(&run.posterior, &args.engine);
    extra.extend(chain_extras(&run.chains));
    extra.push(("outliers".into(), cfg.outliers.to_string()));
    extra.push(("bvm_ks".into(), fmt_vec(&run.bvm.ks_statistic)));
    extra.push(("standard_posterior_mean".into(), run.standard_mean.to_string()));
    extra.push(("standard_posterior_sd".into(), run.standard_sd.to_string()));
    write_outputs(&args.engine.out, &run.chains, &run.summary, &["theta".into()], &extra)?;
    info!(
        "robust posterior mean {:.4}, standard posterior mean {:.4}",
        run.summary.mean[0], run.standard_mean
    );
    Ok(())
}

fn wine(args: &ExperimentArgs) -> Result<()> {
    let path = args
        .data
        .as_deref()
        .context("the wine experiment needs --data <winequality-white.csv>")?;
    let engine = &args.engine;
    let base = WineConfig::default();
    let cfg = WineConfig {
        k: engine.k.unwrap_or(base.k),
        outliers: args.outliers.unwrap_or(base.outliers),
        rho: rho(engine)?,
        delta_c: engine.delta_c,
        sampler: sampler(engine)?,
        restarts: engine.restarts,
        alpha: engine.alpha,
        seed: engine.seed,
        ..base
    };
    let raw: Table = load_csv(path, &cfg.response, &cfg.features)?;
    let run = experiments::wine_from_table(&raw, &cfg)?;
    write_atomic(
        &engine.out.join("standardization.csv"),
        run.standardization.to_text().as_bytes(),
    )?;
    let mut extra = posterior_extras(&run.posterior, engine);
    extra.extend(chain_extras(&run.chains));
    extra.push(("outliers".into(), cfg.outliers.to_string()));
    write_outputs(&engine.out, &run.chains, &run.summary, &run.names, &extra)?;
    for (i, name) in run.names.iter().enumerate() {
        let (lo, hi) = run.summary.credible_intervals[i];
        info!("{name:>20} {:.3} ({lo:.3}, {hi:.3})", run.summary.map[i]);
    }
    Ok(())
}

fn deviation(args: &ExperimentArgs) -> Result<()> {
    let engine = &args.engine;
    let base = experiments::default_deviation()?;
    let n_total = args.n.unwrap_or(base.n_total);
    let mut cfg = mom_bayes::diagnostics::DeviationConfig {
        n_total,
        k: engine.k.unwrap_or(base.k),
        rho: rho(engine)?,
        delta: engine.delta_c.map_or(DeltaChoice::Calibrated, DeltaChoice::Fixed),
        delta_exponent: engine.delta_exponent,
        replications: args.replications.unwrap_or(base.replications),
        seed: engine.seed,
        ..base
    };
    // 5% contamination unless overridden.
    let outliers = args.outliers.unwrap_or(n_total / 20);
    cfg.contamination = Some((outliers, Generator::PointMass(1e6)));
    let report = experiments::deviation(&cfg)?;
    let mut s =
        String::from("replication,mom_error_clean,mean_error_clean,mom_error_contaminated,mean_error_contaminated\n");
    for (c, d) in report.clean.iter().zip(&report.contaminated) {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            c.replication, c.mom_error, c.mean_error, d.mom_error, d.mean_error
        );
    }
    write_atomic(&engine.out.join("deviation.csv"), s.as_bytes())?;
    let summary = format!(
        "replications = {}\nn_total = {}\nk = {}\noutliers = {outliers}\nmom_rmse_clean = {}\nmom_rmse_contaminated = {}\n\
         mean_rmse_clean = {}\nmean_rmse_contaminated = {}\nmom_inflation = {}\nmean_inflation = {}\n",
        cfg.replications,
        cfg.n_total,
        cfg.k,
        report.mom_rmse_clean,
        report.mom_rmse_contaminated,
        report.mean_rmse_clean,
        report.mean_rmse_contaminated,
        report.mom_inflation(),
        report.mean_inflation(),
    );
    write_atomic(&engine.out.join("summary.txt"), summary.as_bytes())?;
    info!(
        "RMSE inflation: median-of-means {:.3}, sample mean {:.3e}",
        report.mom_inflation(),
        report.mean_inflation()
    );
    Ok(())
}

fn normality(args: &ExperimentArgs) -> Result<()> {
    let engine = &args.engine;
    let base = experiments::default_normality();
    let cfg = mom_bayes::diagnostics::NormalityConfig {
        n_total: args.n.unwrap_or(base.n_total),
        k: engine.k.unwrap_or(base.k),
        rho: rho(engine)?,
        replications: args.replications.unwrap_or(base.replications),
        seed: engine.seed,
        ..base
    };
    let report = experiments::normality(&cfg)?;
    let mut s = String::from("replication,error\n");
    for (i, e) in report.errors.iter().enumerate() {
        let _ = writeln!(s, "{i},{}", e[0]);
    }
    write_atomic(&engine.out.join("normality.csv"), s.as_bytes())?;
    let summary = format!(
        "replications = {}\nn_total = {}\nk = {}\nvariance = {}\nks = {}\n",
        cfg.replications,
        cfg.n_total,
        cfg.k,
        fmt_vec(&report.variance),
        fmt_vec(&report.ks)
    );
    write_atomic(&engine.out.join("summary.txt"), summary.as_bytes())?;
    info!("variance {:.4}, KS {:.4}", report.variance[0], report.ks[0]);
    Ok(())
}
