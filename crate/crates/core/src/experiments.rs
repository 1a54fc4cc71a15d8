//! Ready-made experiments: the location examples, the wine regression and
//! the two Monte-Carlo harnesses.

use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{load_csv, standardize, Standardization, Table};
use crate::diagnostics::{
    bvm_diagnostic, bvm_reference, contaminate, deviation_harness, ks_standard_normal, normality_harness, rmse,
    summarize, BvmReport, ContaminationSpec, DeltaChoice, DeviationConfig, DeviationRow, Generator, NormalityConfig,
    PosteriorSummary,
};
use crate::error::{Error, Result};
use crate::inference::{
    conjugate_normal_posterior, derive_seed, sample, Chain, PosteriorOptions, RobustPosterior, SamplerConfig,
};
use crate::models::{Bounds, CoordPrior, Dataset, FamilyKind, LikelihoodFamily, Prior, SIGMA_FLOOR};
use crate::rho::RhoSpec;

/// Shared setup of the Gaussian-location examples: N(θ0, 1) data with a
/// N(prior_mean, prior_sd²) prior.
#[derive(Debug, Clone)]
pub struct LocationConfig {
    pub n_total: usize,
    pub theta0: f64,
    pub prior_mean: f64,
    pub prior_sd: f64,
    /// Number of observations replaced by N(outlier_mean, outlier_sd²) draws.
    pub outliers: usize,
    pub outlier_mean: f64,
    pub outlier_sd: f64,
    pub k: usize,
    pub rho: RhoSpec,
    pub delta_c: Option<f64>,
    pub sampler: SamplerConfig,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for LocationConfig {
    fn default() -> Self {
        Self {
            n_total: 1000,
            theta0: -30.0,
            prior_mean: -29.5,
            prior_sd: 1.0,
            outliers: 40,
            outlier_mean: 1e4,
            outlier_sd: 1.0,
            k: 100,
            rho: RhoSpec::default(),
            delta_c: None,
            sampler: SamplerConfig::default(),
            restarts: 4,
            seed: 0,
        }
    }
}

impl LocationConfig {
    /// Simulated (and possibly contaminated) data for this configuration.
    pub fn data(&self) -> Result<Dataset> {
        let fam = unit_gaussian(Bounds::new(vec![self.theta0 - 1.0], vec![self.theta0 + 1.0])?)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, 0));
        let clean = fam.simulate(&[self.theta0], self.n_total, &mut rng)?;
        if self.outliers == 0 {
            return Ok(clean);
        }
        contaminate(
            &clean,
            &ContaminationSpec {
                count: self.outliers,
                generator: Generator::Gaussian {
                    mean: self.outlier_mean,
                    sd: self.outlier_sd,
                },
                seed: derive_seed(self.seed, 1),
            },
        )
    }
}

fn unit_gaussian(domain: Bounds) -> Result<LikelihoodFamily> {
    LikelihoodFamily::new(FamilyKind::GaussianLocation { sigma: 1.0 }, domain)
}

#[derive(Debug, Clone)]
pub struct LocationRun {
    pub posterior: RobustPosterior,
    pub chains: Vec<Chain>,
    pub summary: PosteriorSummary,
    pub bvm: BvmReport,
    /// Conjugate posterior mean and sd of the standard (non-robust) posterior.
    pub standard_mean: f64,
    pub standard_sd: f64,
}

/// Chain seeds depend on both the run seed and the sampler's own seed, so
/// replications with different run seeds never share a Markov chain stream.
fn run_sampler(sampler: &SamplerConfig, seed: u64) -> SamplerConfig {
    SamplerConfig {
        seed: derive_seed(derive_seed(seed, 5), sampler.seed),
        ..sampler.clone()
    }
}

/// Builds the robust posterior for `data`, samples it from its MAP and
/// summarizes the draws.
pub fn run_location(cfg: &LocationConfig, data: &Dataset) -> Result<LocationRun> {
    let family = LikelihoodFamily::with_default_domain(FamilyKind::GaussianLocation { sigma: 1.0 }, data)?;
    let prior = Prior::gaussian(&[cfg.prior_mean], &[cfg.prior_sd], family.domain().clone())?;
    let options = PosteriorOptions {
        k: cfg.k,
        seed: derive_seed(cfg.seed, 2),
        rho: cfg.rho.clone(),
        delta_c: cfg.delta_c,
        ..PosteriorOptions::default()
    };
    let post = RobustPosterior::from_options(family, prior, data, &options)?;
    let map = post.map_estimate(cfg.restarts, derive_seed(cfg.seed, 3))?;
    let chains = sample(&post, &run_sampler(&cfg.sampler, cfg.seed), &map.theta)?;
    let summary = summarize(&chains, 0.05, Some(&post))?;
    let (center, cov) = bvm_reference(&post, cfg.restarts, derive_seed(cfg.seed, 4))?;
    let bvm = bvm_diagnostic(&chains, &center, &cov)?;
    let (standard_mean, standard_sd) = conjugate_normal_posterior(data.response(), 1.0, cfg.prior_mean, cfg.prior_sd);
    Ok(LocationRun {
        posterior: post,
        chains,
        summary,
        bvm,
        standard_mean,
        standard_sd,
    })
}

/// One replication of the N(θ0, 1) location example.
pub fn example2(cfg: &LocationConfig) -> Result<LocationRun> {
    run_location(cfg, &cfg.data()?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example1Row {
    pub k: usize,
    pub ks_absolute: f64,
    pub ks_huber: f64,
    pub mean_absolute: f64,
    pub mean_huber: f64,
}

/// For each k, the Kolmogorov distance to the normal approximation of the
/// absolute-loss posterior and of the Huber posterior on the same
/// outlier-free data, both sampled with `base.sampler`.
pub fn example1(base: &LocationConfig, ks: &[usize]) -> Result<Vec<Example1Row>> {
    let clean = LocationConfig {
        outliers: 0,
        ..base.clone()
    };
    let data = clean.data()?;
    ks.iter()
        .map(|&k| {
            let abs = run_location(
                &LocationConfig {
                    k,
                    rho: RhoSpec::absolute(),
                    ..clean.clone()
                },
                &data,
            )?;
            let hub = run_location(
                &LocationConfig {
                    k,
                    rho: RhoSpec::default(),
                    ..clean.clone()
                },
                &data,
            )?;
            Ok(Example1Row {
                k,
                ks_absolute: abs.bvm.ks_statistic[0],
                ks_huber: hub.bvm.ks_statistic[0],
                mean_absolute: abs.summary.mean[0],
                mean_huber: hub.summary.mean[0],
            })
        })
        .collect()
}

/// The eight regressors of the wine model.
pub const WINE_FEATURES: [&str; 8] = [
    "fixed.acidity",
    "volatile.acidity",
    "residual.sugar",
    "free.sulfur.dioxide",
    "density",
    "pH",
    "sulphates",
    "alcohol",
];

#[derive(Debug, Clone)]
pub struct WineConfig {
    pub response: String,
    pub features: Vec<String>,
    pub k: usize,
    /// Responses replaced (after standardization) by N(1000, 10²) draws.
    pub outliers: usize,
    pub rho: RhoSpec,
    pub delta_c: Option<f64>,
    pub sampler: SamplerConfig,
    pub restarts: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for WineConfig {
    fn default() -> Self {
        Self {
            response: "quality".into(),
            features: WINE_FEATURES.iter().map(|s| s.to_string()).collect(),
            k: 31,
            outliers: 0,
            rho: RhoSpec::default(),
            delta_c: None,
            sampler: SamplerConfig::default(),
            restarts: 4,
            alpha: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct WineRun {
    pub names: Vec<String>,
    pub posterior: RobustPosterior,
    pub chains: Vec<Chain>,
    pub summary: PosteriorSummary,
    pub standardization: Standardization,
}

/// Parameter domain and prior of the wine model: β ∈ [−10, 10] with
/// N(0, 10²) priors and σ ∈ [SIGMA_FLOOR, 1] with a flat prior.
pub fn wine_model(p: usize) -> Result<(LikelihoodFamily, Prior)> {
    let mut lower = vec![-10.0; p + 1];
    let mut upper = vec![10.0; p + 1];
    lower[p] = SIGMA_FLOOR;
    upper[p] = 1.0;
    let domain = Bounds::new(lower, upper)?;
    let family = LikelihoodFamily::new(FamilyKind::LinearRegression { p }, domain.clone())?;
    let mut coords = vec![CoordPrior::Gaussian { mean: 0.0, sd: 10.0 }; p];
    coords.push(CoordPrior::Uniform);
    Ok((family, Prior::new(coords, domain)?))
}

/// The robust regression of standardized quality on standardized regressors.
pub fn wine(path: &Path, cfg: &WineConfig) -> Result<WineRun> {
    let raw = load_csv(path, &cfg.response, &cfg.features)?;
    wine_from_table(&raw, cfg)
}

pub fn wine_from_table(raw: &Table, cfg: &WineConfig) -> Result<WineRun> {
    let (table, standardization) = standardize(raw)?;
    let mut data = table.to_dataset()?;
    if cfg.outliers > 0 {
        data = contaminate(
            &data,
            &ContaminationSpec {
                count: cfg.outliers,
                generator: Generator::Gaussian { mean: 1000.0, sd: 10.0 },
                seed: derive_seed(cfg.seed, 1),
            },
        )?;
    }
    let (family, prior) = wine_model(data.width())?;
    let options = PosteriorOptions {
        k: cfg.k,
        seed: derive_seed(cfg.seed, 2),
        rho: cfg.rho.clone(),
        delta_c: cfg.delta_c,
        ..PosteriorOptions::default()
    };
    let post = RobustPosterior::from_options(family, prior, &data, &options)?;
    let map = post.map_estimate(cfg.restarts, derive_seed(cfg.seed, 3))?;
    let chains = sample(&post, &run_sampler(&cfg.sampler, cfg.seed), &map.theta)?;
    let summary = summarize(&chains, cfg.alpha, Some(&post))?;
    let mut names = vec!["intercept".to_string()];
    names.extend(table.feature_names.iter().cloned());
    names.push("sigma".into());
    Ok(WineRun {
        names,
        posterior: post,
        chains,
        summary,
        standardization,
    })
}

/// Settings of the deviation experiment: N(0, 1) data, θ = 1 against θ′ = 0.
pub fn default_deviation() -> Result<DeviationConfig> {
    Ok(DeviationConfig {
        family: unit_gaussian(Bounds::new(vec![-10.0], vec![10.0])?)?,
        theta0: vec![0.0],
        theta: vec![1.0],
        theta_prime: vec![0.0],
        n_total: 200,
        k: 100,
        rho: RhoSpec::default(),
        delta: DeltaChoice::Calibrated,
        delta_exponent: 0.25,
        contamination: Some((10, Generator::PointMass(1e6))),
        replications: 500,
        seed: 0,
    })
}

#[derive(Debug, Clone)]
pub struct DeviationReport {
    pub clean: Vec<DeviationRow>,
    pub contaminated: Vec<DeviationRow>,
    pub mom_rmse_clean: f64,
    pub mom_rmse_contaminated: f64,
    pub mean_rmse_clean: f64,
    pub mean_rmse_contaminated: f64,
}

impl DeviationReport {
    pub fn mom_inflation(&self) -> f64 {
        self.mom_rmse_contaminated / self.mom_rmse_clean
    }

    pub fn mean_inflation(&self) -> f64 {
        self.mean_rmse_contaminated / self.mean_rmse_clean
    }
}

/// Runs `cfg` with and without its contamination on the same simulated
/// samples.
pub fn deviation(cfg: &DeviationConfig) -> Result<DeviationReport> {
    if cfg.contamination.is_none() {
        return Err(Error::Config(
            "the deviation experiment needs a contamination setting".into(),
        ));
    }
    let clean = deviation_harness(&DeviationConfig {
        contamination: None,
        ..cfg.clone()
    })?;
    let contaminated = deviation_harness(cfg)?;
    Ok(DeviationReport {
        mom_rmse_clean: rmse(clean.iter().map(|r| r.mom_error)),
        mom_rmse_contaminated: rmse(contaminated.iter().map(|r| r.mom_error)),
        mean_rmse_clean: rmse(clean.iter().map(|r| r.mean_error)),
        mean_rmse_contaminated: rmse(contaminated.iter().map(|r| r.mean_error)),
        clean,
        contaminated,
    })
}

pub fn default_normality() -> NormalityConfig {
    NormalityConfig {
        kind: FamilyKind::GaussianLocation { sigma: 1.0 },
        theta0: vec![0.0],
        n_total: 2000,
        k: 40,
        rho: RhoSpec::default(),
        replications: 300,
        seed: 0,
    }
}

#[derive(Debug, Clone)]
pub struct NormalityReport {
    /// √N(θ̃_N − θ0) per replication.
    pub errors: Vec<Vec<f64>>,
    /// Sample variance per coordinate.
    pub variance: Vec<f64>,
    /// Kolmogorov distance to N(0, I⁻¹) per coordinate.
    pub ks: Vec<f64>,
}

pub fn normality(cfg: &NormalityConfig) -> Result<NormalityReport> {
    let errors = normality_harness(cfg)?;
    let d = cfg.theta0.len();
    let fam = LikelihoodFamily::with_default_domain(cfg.kind, &Dataset::scalar(cfg.theta0.clone())?)?;
    let info = fam.fisher_information(&cfg.theta0, &Dataset::scalar(cfg.theta0.clone())?)?;
    let inv: DMatrix<f64> = info.try_inverse().ok_or(Error::SingularCovariance)?;
    let mut variance = Vec::with_capacity(d);
    let mut ks = Vec::with_capacity(d);
    for c in 0..d {
        let col: Vec<f64> = errors.iter().map(|e| e[c]).collect();
        let n = col.len() as f64;
        let m = col.iter().sum::<f64>() / n;
        variance.push(col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0));
        let sd = inv[(c, c)].sqrt();
        ks.push(ks_standard_normal(&col.iter().map(|x| x / sd).collect::<Vec<_>>()));
    }
    Ok(NormalityReport { errors, variance, ks })
}
