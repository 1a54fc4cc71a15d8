//! Posterior summaries, normal-approximation diagnostics, contamination and
//! Monte-Carlo harnesses.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal as NormalDist};

use crate::error::{Error, Result};
use crate::inference::{derive_seed, maximize, Chain, LogDensity, MapOptions, PosteriorOptions, RobustPosterior};
use crate::models::{Dataset, FamilyKind, LikelihoodFamily, Prior, ReferencePoint};
use crate::mom::{block_averages, partition_blocks, solve_mom, PartitionScheme, ScaleSchedule};
use crate::rho::RhoSpec;

/// Minimum number of pooled draws accepted by [`summarize`].
pub const MIN_DRAWS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub map: Vec<f64>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub credible_intervals: Vec<(f64, f64)>,
    pub ess: Vec<f64>,
    pub rhat: Vec<f64>,
    pub alpha: f64,
}

/// Type-7 (linear interpolation) sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var)
}

/// Batch-means effective sample size of one chain (batch size ⌊√n⌋); a
/// chain without variation counts as fully efficient.
pub fn batch_means_ess(x: &[f64]) -> f64 {
    let n = x.len();
    let b = (n as f64).sqrt().floor() as usize;
    let a = n.checked_div(b).unwrap_or(0);
    let (_, var) = mean_var(x);
    if a < 2 || var == 0.0 {
        return n as f64;
    }
    let batch_means: Vec<f64> = x[..a * b]
        .chunks_exact(b)
        .map(|c| c.iter().sum::<f64>() / b as f64)
        .collect();
    let (_, bvar) = mean_var(&batch_means);
    let sigma2 = b as f64 * bvar;
    if sigma2 <= 0.0 {
        return n as f64;
    }
    n as f64 * var / sigma2
}

/// Split-R̂ over chains, each split into halves; 1 when there is no
/// within-half variation.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| {
            let h = c.len() / 2;
            [&c[..h], &c[c.len() - h..]]
        })
        .filter(|h| h.len() >= 2)
        .collect();
    if halves.len() < 2 {
        return 1.0;
    }
    let n = halves.iter().map(|h| h.len()).min().unwrap_or(0) as f64;
    let stats: Vec<(f64, f64)> = halves.iter().map(|h| mean_var(h)).collect();
    let w = stats.iter().map(|s| s.1).sum::<f64>() / stats.len() as f64;
    let means: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let (_, bvar) = mean_var(&means);
    if w <= 0.0 {
        return 1.0;
    }
    let var_plus = (n - 1.0) / n * w + bvar;
    (var_plus / w).sqrt()
}

/// Pooled summary of post-warmup draws. With a `target`, the MAP is the best
/// draw refined by a local ascent; otherwise it is the best stored draw.
pub fn summarize(chains: &[Chain], alpha: f64, target: Option<&dyn LogDensity>) -> Result<PosteriorSummary> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let total: usize = chains.iter().map(Chain::len).sum();
    if total < MIN_DRAWS {
        return Err(Error::InsufficientDraws {
            needed: MIN_DRAWS,
            got: total,
        });
    }
    let d = chains[0].dim();
    let mut best = (f64::NEG_INFINITY, chains[0].draw(0).to_vec());
    for c in chains {
        for i in 0..c.len() {
            if c.log_kernel[i] > best.0 {
                best = (c.log_kernel[i], c.draw(i).to_vec());
            }
        }
    }
    let map = match target {
        Some(t) => {
            let options = MapOptions {
                gtol: 1e-8 * best.0.abs().max(1.0),
                ..MapOptions::default()
            };
            match maximize(t, &[best.1.clone()], &options) {
                Ok(r) if r.log_density >= best.0 => r.theta,
                _ => best.1,
            }
        }
        None => best.1,
    };

    let mut summary = PosteriorSummary {
        map,
        mean: Vec::with_capacity(d),
        sd: Vec::with_capacity(d),
        credible_intervals: Vec::with_capacity(d),
        ess: Vec::with_capacity(d),
        rhat: Vec::with_capacity(d),
        alpha,
    };
    for c in 0..d {
        let per_chain: Vec<Vec<f64>> = chains.iter().map(|ch| ch.column(c)).collect();
        let mut pooled: Vec<f64> = per_chain.iter().flatten().copied().collect();
        let (m, v) = mean_var(&pooled);
        pooled.sort_by(f64::total_cmp);
        summary.mean.push(m);
        summary.sd.push(v.sqrt());
        summary.credible_intervals.push((
            quantile_sorted(&pooled, alpha / 2.0),
            quantile_sorted(&pooled, 1.0 - alpha / 2.0),
        ));
        summary.ess.push(per_chain.iter().map(|x| batch_means_ess(x)).sum());
        summary.rhat.push(split_rhat(&per_chain));
    }
    Ok(summary)
}

/// Kolmogorov distance between the empirical CDF of `z` and Φ.
pub fn ks_standard_normal(z: &[f64]) -> f64 {
    let phi = NormalDist::standard();
    let mut s = z.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = phi.cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BvmReport {
    pub ks_statistic: Vec<f64>,
    pub center: Vec<f64>,
    pub reference_covariance: DMatrix<f64>,
}

/// Per-coordinate Kolmogorov distance of pooled draws, standardized by
/// `center` and the diagonal of `covariance`, to the standard normal.
pub fn bvm_diagnostic(chains: &[Chain], center: &[f64], covariance: &DMatrix<f64>) -> Result<BvmReport> {
    let d = center.len();
    if covariance.nrows() != d || covariance.ncols() != d {
        return Err(Error::SingularCovariance);
    }
    let sym = (covariance - covariance.transpose()).abs().max() <= 1e-10 * covariance.abs().max();
    if !sym || covariance.clone().cholesky().is_none() {
        return Err(Error::SingularCovariance);
    }
    let ks = (0..d)
        .map(|i| {
            let sd = covariance[(i, i)].sqrt();
            let z: Vec<f64> = chains
                .iter()
                .flat_map(|c| c.column(i))
                .map(|v| (v - center[i]) / sd)
                .collect();
            ks_standard_normal(&z)
        })
        .collect();
    Ok(BvmReport {
        ks_statistic: ks,
        center: center.to_vec(),
        reference_covariance: covariance.clone(),
    })
}

/// Centre θ̃_N and covariance I(θ̃_N)⁻¹/N_eff of the normal approximation.
pub fn bvm_reference(post: &RobustPosterior, restarts: usize, seed: u64) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let tilde = post.theta_tilde(restarts, seed)?.theta;
    let info = post.family().fisher_information(&tilde, post.blocked_data())?;
    let inv = info.try_inverse().ok_or(Error::SingularCovariance)?;
    Ok((tilde, inv / post.n_effective() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Generator {
    PointMass(f64),
    Gaussian { mean: f64, sd: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContaminationSpec {
    pub count: usize,
    pub generator: Generator,
    pub seed: u64,
}

/// Copy of `data` with `count` uniformly chosen responses replaced by
/// generator draws (covariates are kept).
pub fn contaminate(data: &Dataset, spec: &ContaminationSpec) -> Result<Dataset> {
    let n = data.len();
    if spec.count > n {
        return Err(Error::TooManyOutliers { count: spec.count, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut y = data.response().to_vec();
    let normal = match spec.generator {
        Generator::Gaussian { mean, sd } => {
            Some(Normal::new(mean, sd).map_err(|e| Error::Config(format!("invalid outlier distribution: {e}")))?)
        }
        Generator::PointMass(_) => None,
    };
    for i in index::sample(&mut rng, n, spec.count) {
        y[i] = match (spec.generator, &normal) {
            (Generator::PointMass(v), _) => v,
            (_, Some(dist)) => dist.sample(&mut rng),
            _ => unreachable!(),
        };
    }
    Ok(data.with_responses(y))
}

/// L(θ) − L(θ′) = E_{θ0}[ℓ(θ,X) − ℓ(θ′,X)] in closed form. Regression
/// assumes the simulation design: intercept plus i.i.d. standard normal
/// covariates.
pub fn exact_risk_increment(family: &LikelihoodFamily, theta0: &[f64], theta: &[f64], theta_prime: &[f64]) -> f64 {
    match family.kind() {
        FamilyKind::GaussianLocation { sigma } => {
            let s2 = 2.0 * sigma * sigma;
            ((theta[0] - theta0[0]).powi(2) - (theta_prime[0] - theta0[0]).powi(2)) / s2
        }
        FamilyKind::LaplaceLocation { b } => {
            let risk = |t: f64| {
                let d = (t - theta0[0]).abs();
                (d + b * (-d / b).exp()) / b
            };
            risk(theta[0]) - risk(theta_prime[0])
        }
        FamilyKind::PoissonRate => (theta[0] - theta_prime[0]) - theta0[0] * (theta[0] / theta_prime[0]).ln(),
        FamilyKind::LinearRegression { p } => {
            let risk = |t: &[f64]| {
                let dist2: f64 = t[..p].iter().zip(&theta0[..p]).map(|(a, b)| (a - b).powi(2)).sum();
                (theta0[p] * theta0[p] + dist2) / (2.0 * t[p] * t[p]) + t[p].ln()
            };
            risk(theta) - risk(theta_prime)
        }
    }
}

/// How the harnesses pick Δ_n.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaChoice {
    Fixed(f64),
    /// Calibrated per replication from the data (see `ScaleSchedule::calibrate`).
    Calibrated,
}

#[derive(Debug, Clone)]
pub struct DeviationConfig {
    pub family: LikelihoodFamily,
    pub theta0: Vec<f64>,
    pub theta: Vec<f64>,
    pub theta_prime: Vec<f64>,
    pub n_total: usize,
    pub k: usize,
    pub rho: RhoSpec,
    pub delta: DeltaChoice,
    pub delta_exponent: f64,
    pub contamination: Option<(usize, Generator)>,
    pub replications: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationRow {
    pub replication: usize,
    /// L̂(θ) − [L(θ) − L(θ′)].
    pub mom_error: f64,
    /// Full-sample mean increment minus the same target.
    pub mean_error: f64,
}

/// Monte-Carlo errors of L̂ and of the plain mean increment.
pub fn deviation_harness(cfg: &DeviationConfig) -> Result<Vec<DeviationRow>> {
    if cfg.replications < 100 {
        return Err(Error::Config(
            "the deviation harness needs at least 100 replications".into(),
        ));
    }
    let tp = ReferencePoint::new(cfg.theta_prime.clone(), cfg.family.domain())?;
    cfg.family.check(&cfg.theta)?;
    let target = exact_risk_increment(&cfg.family, &cfg.theta0, &cfg.theta, &cfg.theta_prime);
    (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, r as u64));
            let clean = cfg.family.simulate(&cfg.theta0, cfg.n_total, &mut rng)?;
            let data = match cfg.contamination {
                Some((count, generator)) => contaminate(
                    &clean,
                    &ContaminationSpec {
                        count,
                        generator,
                        seed: derive_seed(cfg.seed ^ 0xC0FFEE, r as u64),
                    },
                )?,
                None => clean,
            };
            let partition = partition_blocks(cfg.n_total, cfg.k, PartitionScheme::Shuffled, r as u64)?;
            let delta = match cfg.delta {
                DeltaChoice::Fixed(c) => ScaleSchedule::new(c, cfg.delta_exponent, 1e-8)?,
                DeltaChoice::Calibrated => ScaleSchedule::calibrate(
                    &cfg.family,
                    &cfg.theta,
                    &tp,
                    &data,
                    &partition,
                    cfg.delta_exponent,
                    1e-8,
                )?,
            };
            let avgs = block_averages(&cfg.family, &cfg.theta, &tp, &data, &partition)?;
            let est = solve_mom(&avgs, &cfg.rho, partition.n(), &delta)?;
            let mean = (0..data.len())
                .map(|i| cfg.family.nll_increment(&cfg.theta, &tp, data.get(i)))
                .sum::<Result<f64>>()?
                / data.len() as f64;
            Ok(DeviationRow {
                replication: r,
                mom_error: est.value - target,
                mean_error: mean - target,
            })
        })
        .collect()
}

pub fn rmse(errors: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = errors.fold((0.0, 0usize), |(s, n), e| (s + e * e, n + 1));
    (s / n as f64).sqrt()
}

#[derive(Debug, Clone)]
pub struct NormalityConfig {
    pub kind: FamilyKind,
    pub theta0: Vec<f64>,
    pub n_total: usize,
    pub k: usize,
    pub rho: RhoSpec,
    pub replications: usize,
    pub seed: u64,
}

/// Per replication, √N(θ̃_N − θ0) with θ̃_N the flat-prior maximizer of −L̂.
pub fn normality_harness(cfg: &NormalityConfig) -> Result<Vec<Vec<f64>>> {
    if cfg.replications < 100 {
        return Err(Error::Config(
            "the normality harness needs at least 100 replications".into(),
        ));
    }
    let root_n = (cfg.n_total as f64).sqrt();
    (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(cfg.seed, r as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sim = LikelihoodFamily::with_default_domain(cfg.kind, &Dataset::scalar(cfg.theta0.clone())?)?;
            let data = sim.simulate(&cfg.theta0, cfg.n_total, &mut rng)?;
            let family = LikelihoodFamily::with_default_domain(cfg.kind, &data)?;
            let prior = Prior::uniform(family.domain().clone());
            let options = PosteriorOptions {
                k: cfg.k,
                seed,
                rho: cfg.rho.clone(),
                ..PosteriorOptions::default()
            };
            let post = RobustPosterior::from_options(family, prior, &data, &options)?;
            let tilde = post.theta_tilde(0, seed)?.theta;
            Ok(tilde.iter().zip(&cfg.theta0).map(|(t, t0)| root_n * (t - t0)).collect())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Bounds;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn chain_of(values: Vec<f64>) -> Chain {
        let lk = vec![0.0; values.len()];
        Chain::from_parts(1, values, lk, 0).unwrap()
    }

    #[test]
    fn degenerate_chain_summary() {
        let c = chain_of(vec![2.5; 200]);
        let s = summarize(&[c], 0.05, None).unwrap();
        assert_eq!((s.mean[0], s.sd[0]), (2.5, 0.0));
        assert_eq!(s.credible_intervals[0], (2.5, 2.5));
        assert_eq!(s.ess[0], 200.0);
        assert_eq!(s.rhat[0], 1.0);
    }

    #[test]
    fn normal_quantiles_and_alpha_monotonicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
        let c = chain_of(v);
        let s = summarize(std::slice::from_ref(&c), 0.05, None).unwrap();
        let (lo, hi) = s.credible_intervals[0];
        assert!((lo + 1.96).abs() < 0.03 && (hi - 1.96).abs() < 0.03, "{lo} {hi}");
        assert!(s.ess[0] > 80_000.0, "{}", s.ess[0]);
        let narrow = summarize(std::slice::from_ref(&c), 0.2, None).unwrap();
        assert!(narrow.credible_intervals[0].0 > lo && narrow.credible_intervals[0].1 < hi);
        assert!(matches!(
            summarize(&[chain_of(vec![1.0; 10])], 0.05, None),
            Err(Error::InsufficientDraws { .. })
        ));
    }

    #[test]
    fn rhat_flags_disagreeing_chains() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a: Vec<f64> = (0..1000).map(|_| rng.sample(StandardNormal)).collect();
        let b: Vec<f64> = (0..1000).map(|_| 5.0 + rng.sample::<f64, _>(StandardNormal)).collect();
        assert!(split_rhat(&[a.clone(), b]) > 1.5);
        let c: Vec<f64> = (0..1000).map(|_| rng.sample(StandardNormal)).collect();
        assert!(split_rhat(&[a, c]) < 1.01);
    }

    #[test]
    fn bvm_on_exact_and_shifted_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let center = [2.0];
        let cov = DMatrix::from_element(1, 1, 0.25);
        let v: Vec<f64> = (0..10_000)
            .map(|_| 2.0 + 0.5 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let r = bvm_diagnostic(&[chain_of(v.clone())], &center, &cov).unwrap();
        assert!(r.ks_statistic[0] <= 0.03);
        let shifted: Vec<f64> = v.iter().map(|x| x + 2.5).collect();
        let r = bvm_diagnostic(&[chain_of(shifted)], &center, &cov).unwrap();
        assert!(r.ks_statistic[0] >= 0.9);
        // Affine re-centering consistent with the reference leaves KS unchanged.
        let moved: Vec<f64> = v.iter().map(|x| 3.0 * x - 1.0).collect();
        let r2 = bvm_diagnostic(&[chain_of(moved)], &[5.0], &DMatrix::from_element(1, 1, 2.25)).unwrap();
        let r1 = bvm_diagnostic(&[chain_of(v)], &center, &cov).unwrap();
        assert!((r1.ks_statistic[0] - r2.ks_statistic[0]).abs() < 1e-12);
        assert!(matches!(
            bvm_diagnostic(&[chain_of(vec![0.0; 200])], &center, &DMatrix::zeros(1, 1)),
            Err(Error::SingularCovariance)
        ));
    }

    #[test]
    fn contamination() {
        let data = Dataset::scalar((0..1000).map(|i| i as f64 * 1e-3).collect()).unwrap();
        let spec = ContaminationSpec {
            count: 40,
            generator: Generator::Gaussian { mean: 1e4, sd: 1.0 },
            seed: 4,
        };
        let a = contaminate(&data, &spec).unwrap();
        let b = contaminate(&data, &spec).unwrap();
        assert_eq!(a, b);
        let replaced: Vec<f64> = a.response().iter().copied().filter(|v| *v > 1.0).collect();
        assert_eq!(replaced.len(), 40);
        assert!(replaced.iter().all(|v| (v - 1e4).abs() < 10.0));
        let none = contaminate(&data, &ContaminationSpec { count: 0, ..spec }).unwrap();
        assert_eq!(none, data);
        let all = contaminate(
            &data,
            &ContaminationSpec {
                count: 1000,
                generator: Generator::PointMass(7.0),
                seed: 0,
            },
        )
        .unwrap();
        assert!(all.response().iter().all(|&v| v == 7.0));
        assert!(matches!(
            contaminate(&data, &ContaminationSpec { count: 1001, ..spec }),
            Err(Error::TooManyOutliers { .. })
        ));
    }

    /// The closed-form targets against brute-force Monte-Carlo averages.
    #[test]
    fn exact_risk_increments_match_simulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let wide = |lo: f64, hi: f64| Bounds::new(vec![lo], vec![hi]).unwrap();
        let cases = vec![
            (
                LikelihoodFamily::new(FamilyKind::GaussianLocation { sigma: 2.0 }, wide(-20.0, 20.0)).unwrap(),
                vec![1.0],
                vec![2.5],
                vec![-0.5],
            ),
            (
                LikelihoodFamily::new(FamilyKind::LaplaceLocation { b: 1.5 }, wide(-20.0, 20.0)).unwrap(),
                vec![0.0],
                vec![0.7],
                vec![-2.0],
            ),
            (
                LikelihoodFamily::new(FamilyKind::PoissonRate, wide(0.1, 50.0)).unwrap(),
                vec![3.0],
                vec![4.0],
                vec![2.0],
            ),
        ];
        let n = 400_000;
        for (f, t0, t, tp) in cases {
            let data = f.simulate(&t0, n, &mut rng).unwrap();
            let mc: f64 = (0..n).map(|i| f.increment(&t, &tp, data.get(i))).sum::<f64>() / n as f64;
            let exact = exact_risk_increment(&f, &t0, &t, &tp);
            assert!(
                (mc - exact).abs() < 0.01 * (1.0 + exact.abs()),
                "{:?}: {mc} vs {exact}",
                f.kind()
            );
        }
        let f = LikelihoodFamily::new(
            FamilyKind::LinearRegression { p: 3 },
            Bounds::new(vec![-5.0, -5.0, -5.0, 0.01], vec![5.0, 5.0, 5.0, 5.0]).unwrap(),
        )
        .unwrap();
        let t0 = [0.5, 1.0, -1.0, 0.8];
        let t = [0.0, 1.5, -0.5, 1.2];
        let tp = [0.4, 0.9, -1.1, 0.7];
        let data = f.simulate(&t0, n, &mut rng).unwrap();
        let mc: f64 = (0..n).map(|i| f.increment(&t, &tp, data.get(i))).sum::<f64>() / n as f64;
        let exact = exact_risk_increment(&f, &t0, &t, &tp);
        assert!((mc - exact).abs() < 0.01 * (1.0 + exact.abs()), "{mc} vs {exact}");
    }

    fn gauss_deviation(rho: RhoSpec, delta: DeltaChoice, contamination: Option<(usize, Generator)>) -> DeviationConfig {
        DeviationConfig {
            family: LikelihoodFamily::new(
                FamilyKind::GaussianLocation { sigma: 1.0 },
                Bounds::new(vec![-10.0], vec![10.0]).unwrap(),
            )
            .unwrap(),
            theta0: vec![0.0],
            theta: vec![1.0],
            theta_prime: vec![0.0],
            n_total: 200,
            k: 20,
            rho,
            delta,
            delta_exponent: 0.25,
            contamination,
            replications: 100,
            seed: 1,
        }
    }

    #[test]
    fn deviation_linear_region_identity() {
        let rows = deviation_harness(&gauss_deviation(RhoSpec::default(), DeltaChoice::Fixed(1e12), None)).unwrap();
        for r in rows {
            assert!((r.mom_error - r.mean_error).abs() < 1e-10);
        }
    }

    #[test]
    fn absolute_loss_ignores_outlier_magnitude() {
        let run = |v: f64| {
            deviation_harness(&gauss_deviation(
                RhoSpec::absolute(),
                DeltaChoice::Fixed(1.0),
                Some((5, Generator::PointMass(v))),
            ))
            .unwrap()
        };
        let small = run(1e3);
        let big = run(1e9);
        for (a, b) in small.iter().zip(&big) {
            assert_eq!(a.mom_error, b.mom_error);
        }
    }
}
