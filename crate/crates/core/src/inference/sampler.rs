//! Random-walk Metropolis and fixed-length HMC on a box.
//!
//! Proposals that leave the box are rejected. Each chain runs on its own
//! generator, seeded from the configuration seed and the chain index, so the
//! output does not depend on thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::LogDensity;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Rwm,
    Hmc,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rwm" => Ok(Self::Rwm),
            "hmc" => Ok(Self::Hmc),
            other => Err(Error::Config(format!("unknown sampler '{other}'"))),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Rwm => "rwm",
            Self::Hmc => "hmc",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub algorithm: Algorithm,
    pub chains: usize,
    pub draws: usize,
    pub warmup: usize,
    pub seed: u64,
    pub target_accept: f64,
    pub leapfrog_steps: usize,
    /// Cap on doublings/halvings when searching the initial HMC step size.
    pub max_step_halvings: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self::new(Algorithm::Rwm)
    }
}

impl SamplerConfig {
    /// 4 chains × 5000 draws after 2000 warmup, with the algorithm's default
    /// acceptance target.
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            chains: 4,
            draws: 5000,
            warmup: 2000,
            seed: 0,
            target_accept: Self::default_target(algorithm),
            leapfrog_steps: 32,
            max_step_halvings: 40,
        }
    }

    pub fn default_target(algorithm: Algorithm) -> f64 {
        match algorithm {
            Algorithm::Rwm => 0.234,
            Algorithm::Hmc => 0.8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 || self.draws == 0 || self.warmup == 0 {
            return Err(Error::Config("chains, draws and warmup must all be at least 1".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config(format!(
                "target acceptance must lie in (0, 1), got {}",
                self.target_accept
            )));
        }
        if self.algorithm == Algorithm::Hmc && self.leapfrog_steps == 0 {
            return Err(Error::Config("HMC needs at least one leapfrog step".into()));
        }
        Ok(())
    }
}

/// Post-warmup output of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    dim: usize,
    /// Row-major draws × dim.
    draws: Vec<f64>,
    pub log_kernel: Vec<f64>,
    pub acceptance_rate: f64,
    pub seed: u64,
    pub divergence_count: usize,
    /// Final step size (HMC) or proposal multiplier (RWM).
    pub step_size: f64,
}

impl Chain {
    /// Assembles a chain from stored draws (e.g. parsed back from disk); the
    /// run statistics are zeroed.
    pub fn from_parts(dim: usize, draws: Vec<f64>, log_kernel: Vec<f64>, seed: u64) -> Result<Self> {
        if dim == 0 || draws.len() != dim * log_kernel.len() {
            return Err(Error::Config("draw matrix does not match the log-kernel column".into()));
        }
        Ok(Self {
            dim,
            draws,
            log_kernel,
            acceptance_rate: 0.0,
            seed,
            divergence_count: 0,
            step_size: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.log_kernel.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_kernel.is_empty()
    }

    pub fn draw(&self, i: usize) -> &[f64] {
        &self.draws[i * self.dim..(i + 1) * self.dim]
    }

    /// All draws of coordinate `c`.
    pub fn column(&self, c: usize) -> Vec<f64> {
        self.draws.iter().skip(c).step_by(self.dim).copied().collect()
    }

    pub fn draws(&self) -> &[f64] {
        &self.draws
    }
}

/// Runs `config.chains` independent chains started near `init`.
pub fn sample<T: LogDensity + ?Sized>(target: &T, config: &SamplerConfig, init: &[f64]) -> Result<Vec<Chain>> {
    config.validate()?;
    if init.len() != target.dim() {
        return Err(Error::Config("initial point has the wrong dimension".into()));
    }
    if config.algorithm == Algorithm::Hmc && !target.differentiable() {
        return Err(Error::Config(
            "HMC needs a differentiable loss; use rwm for the absolute loss".into(),
        ));
    }
    let seeds: Vec<u64> = (0..config.chains as u64).map(|c| derive_seed(config.seed, c)).collect();
    let chains = seeds
        .par_iter()
        .map(|&seed| match config.algorithm {
            Algorithm::Rwm => run_rwm(target, config, init, seed),
            Algorithm::Hmc => run_hmc(target, config, init, seed),
        })
        .collect::<Result<Vec<_>>>()?;
    for (i, c) in chains.iter().enumerate() {
        if c.acceptance_rate < 0.01 {
            log::warn!("chain {i}: post-warmup acceptance {:.4} is below 1%", c.acceptance_rate);
        }
    }
    Ok(chains)
}

/// Independent sub-seed number `index` derived from `seed` (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn density_or_neg_inf<T: LogDensity + ?Sized>(target: &T, x: &[f64]) -> f64 {
    match target.log_density(x) {
        Ok(v) if !v.is_nan() => v,
        _ => f64::NEG_INFINITY,
    }
}

/// Per-coordinate scale guesses from the curvature of the log density at x.
fn initial_scales<T: LogDensity + ?Sized>(target: &T, x: &[f64]) -> Vec<f64> {
    let b = target.bounds();
    let f0 = density_or_neg_inf(target, x);
    (0..x.len())
        .map(|i| {
            let width = b.width(i);
            let fallback = 0.01 * width;
            let h = (1e-4 * (1.0 + x[i].abs())).min(0.01 * width);
            let center = x[i].clamp(b.lower[i] + h, b.upper[i] - h);
            let mut y = x.to_vec();
            y[i] = center;
            let fc = if center == x[i] {
                f0
            } else {
                density_or_neg_inf(target, &y)
            };
            y[i] = center + h;
            let fu = density_or_neg_inf(target, &y);
            y[i] = center - h;
            let fd = density_or_neg_inf(target, &y);
            let d2 = (fu - 2.0 * fc + fd) / (h * h);
            let sd = if d2.is_finite() && d2 < 0.0 {
                (-d2).sqrt().recip()
            } else {
                fallback
            };
            sd.clamp(1e-10 * width, 0.25 * width)
        })
        .collect()
}

fn jittered_start<T: LogDensity + ?Sized, R: Rng>(
    target: &T,
    init: &[f64],
    sd: &[f64],
    rng: &mut R,
) -> (Vec<f64>, f64) {
    let b = target.bounds();
    for _ in 0..100 {
        let mut x: Vec<f64> = init
            .iter()
            .zip(sd)
            .map(|(&xi, &s)| xi + 0.5 * s * rng.sample::<f64, _>(StandardNormal))
            .collect();
        b.clamp(&mut x);
        let f = density_or_neg_inf(target, &x);
        if f.is_finite() {
            return (x, f);
        }
    }
    let mut x = init.to_vec();
    b.clamp(&mut x);
    let f = density_or_neg_inf(target, &x);
    (x, f)
}

fn variances(window: &[f64], d: usize) -> Option<Vec<f64>> {
    let n = window.len() / d;
    if n < 10 {
        return None;
    }
    let mut out = vec![0.0; d];
    for (i, o) in out.iter_mut().enumerate() {
        let col = window.iter().skip(i).step_by(d);
        let mean = col.clone().sum::<f64>() / n as f64;
        *o = col.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    }
    if out.iter().all(|v| v.is_finite() && *v > 0.0) {
        Some(out)
    } else {
        None
    }
}

fn run_rwm<T: LogDensity + ?Sized>(target: &T, config: &SamplerConfig, init: &[f64], seed: u64) -> Result<Chain> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = target.dim();
    let b = target.bounds();
    let mut sd = initial_scales(target, init);
    let (mut x, mut f) = jittered_start(target, init, &sd, &mut rng);
    if !f.is_finite() {
        return Err(Error::Domain { theta: x });
    }
    let base = (2.38 / (d as f64).sqrt()).ln();
    let mut log_lambda = base;
    let mut adapt_t = 0usize;
    let w = config.warmup;
    let (win_lo, win_hi) = (w / 4, w / 2);
    let mut window = Vec::new();

    let mut draws = Vec::with_capacity(config.draws * d);
    let mut log_kernel = Vec::with_capacity(config.draws);
    let mut accepted = 0usize;
    let mut y = vec![0.0; d];
    for it in 0..w + config.draws {
        let lambda = log_lambda.exp();
        for i in 0..d {
            y[i] = x[i] + lambda * sd[i] * rng.sample::<f64, _>(StandardNormal);
        }
        let fy = if b.contains(&y) {
            density_or_neg_inf(target, &y)
        } else {
            f64::NEG_INFINITY
        };
        let log_ratio = fy - f;
        let u: f64 = rng.random();
        let accept = fy.is_finite() && u.ln() < log_ratio;
        if accept {
            x.copy_from_slice(&y);
            f = fy;
        }
        if it < w {
            let a = if fy.is_finite() { log_ratio.min(0.0).exp() } else { 0.0 };
            adapt_t += 1;
            log_lambda += (a - config.target_accept) / (adapt_t as f64).powf(0.6);
            if it >= win_lo && it < win_hi {
                window.extend_from_slice(&x);
            }
            if it + 1 == win_hi {
                if let Some(v) = variances(&window, d) {
                    sd = v.iter().map(|v| v.sqrt()).collect();
                    log_lambda = base;
                    adapt_t = 0;
                }
                window = Vec::new();
            }
        } else {
            if accept {
                accepted += 1;
            }
            draws.extend_from_slice(&x);
            log_kernel.push(f);
        }
    }
    Ok(Chain {
        dim: d,
        draws,
        log_kernel,
        acceptance_rate: accepted as f64 / config.draws as f64,
        seed,
        divergence_count: 0,
        step_size: log_lambda.exp(),
    })
}

struct DualAveraging {
    mu: f64,
    log_eps: f64,
    log_eps_bar: f64,
    h_bar: f64,
    t: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    fn new(eps0: f64) -> Self {
        Self {
            mu: (10.0 * eps0).ln(),
            log_eps: eps0.ln(),
            log_eps_bar: 0.0,
            h_bar: 0.0,
            t: 0.0,
        }
    }

    fn update(&mut self, target: f64, accept: f64) {
        self.t += 1.0;
        let eta = 1.0 / (self.t + Self::T0);
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (target - accept);
        self.log_eps = self.mu - self.t.sqrt() / Self::GAMMA * self.h_bar;
        let x = self.t.powf(-Self::KAPPA);
        self.log_eps_bar = x * self.log_eps + (1.0 - x) * self.log_eps_bar;
    }

    fn current(&self) -> f64 {
        self.log_eps.exp()
    }

    fn final_eps(&self) -> f64 {
        if self.t == 0.0 {
            self.current()
        } else {
            self.log_eps_bar.exp()
        }
    }
}

struct Trajectory {
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    accept_prob: f64,
    divergent: bool,
}

/// Energy error above which a trajectory counts as divergent.
const DIVERGENCE_THRESHOLD: f64 = 1000.0;

#[allow(clippy::too_many_arguments)]
fn leapfrog<T: LogDensity + ?Sized>(
    target: &T,
    x0: &[f64],
    f0: f64,
    g0: &[f64],
    p0: &[f64],
    inv_mass: &[f64],
    eps: f64,
    steps: usize,
) -> Trajectory {
    let b = target.bounds();
    let kinetic = |p: &[f64]| 0.5 * p.iter().zip(inv_mass).map(|(p, m)| m * p * p).sum::<f64>();
    let h0 = -f0 + kinetic(p0);
    let mut x = x0.to_vec();
    let mut p = p0.to_vec();
    let mut f = f0;
    let mut g = g0.to_vec();
    let reject = |divergent| Trajectory {
        x: Vec::new(),
        f: f64::NEG_INFINITY,
        g: Vec::new(),
        accept_prob: 0.0,
        divergent,
    };
    for _ in 0..steps {
        for i in 0..p.len() {
            p[i] += 0.5 * eps * g[i];
            x[i] += eps * inv_mass[i] * p[i];
        }
        if !b.contains(&x) {
            return reject(false);
        }
        match target.value_and_grad(&x) {
            Ok((fv, gv)) if fv.is_finite() && gv.iter().all(|v| v.is_finite()) => {
                f = fv;
                g = gv;
            }
            _ => return reject(false),
        }
        for i in 0..p.len() {
            p[i] += 0.5 * eps * g[i];
        }
        let err = -f + kinetic(&p) - h0;
        if !(err < DIVERGENCE_THRESHOLD) {
            return reject(true);
        }
    }
    let dh = -f + kinetic(&p) - h0;
    Trajectory {
        x,
        f,
        g,
        accept_prob: (-dh).min(0.0).exp(),
        divergent: false,
    }
}

fn draw_momentum<R: Rng>(inv_mass: &[f64], rng: &mut R) -> Vec<f64> {
    inv_mass
        .iter()
        .map(|m| rng.sample::<f64, _>(StandardNormal) / m.sqrt())
        .collect()
}

fn reasonable_step<T: LogDensity + ?Sized, R: Rng>(
    target: &T,
    x: &[f64],
    f: f64,
    g: &[f64],
    inv_mass: &[f64],
    max_steps: usize,
    rng: &mut R,
) -> f64 {
    let mut eps = 1.0;
    let p = draw_momentum(inv_mass, rng);
    let a0 = leapfrog(target, x, f, g, &p, inv_mass, eps, 1).accept_prob;
    let up = a0 > 0.5;
    for _ in 0..max_steps {
        let next = if up { eps * 2.0 } else { eps * 0.5 };
        let a = leapfrog(target, x, f, g, &p, inv_mass, next, 1).accept_prob;
        if up && a <= 0.5 {
            break;
        }
        eps = next;
        if !up && a > 0.5 {
            break;
        }
    }
    eps
}

fn run_hmc<T: LogDensity + ?Sized>(target: &T, config: &SamplerConfig, init: &[f64], seed: u64) -> Result<Chain> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = target.dim();
    let sd = initial_scales(target, init);
    let mut inv_mass: Vec<f64> = sd.iter().map(|s| s * s).collect();
    let (mut x, _) = jittered_start(target, init, &sd, &mut rng);
    let (mut f, mut g) = target.value_and_grad(&x)?;
    let w = config.warmup;
    let win_lo = (w as f64 * 0.15) as usize;
    let win_hi = (w as f64 * 0.75) as usize;
    let mut window = Vec::new();
    let eps0 = reasonable_step(target, &x, f, &g, &inv_mass, config.max_step_halvings, &mut rng);
    let mut da = DualAveraging::new(eps0);
    let mut eps = eps0;

    let mut draws = Vec::with_capacity(config.draws * d);
    let mut log_kernel = Vec::with_capacity(config.draws);
    let mut accepted = 0usize;
    let mut divergences = 0usize;
    for it in 0..w + config.draws {
        let step = if it < w {
            da.current()
        } else {
            eps * rng.random_range(0.9..1.1)
        };
        let p = draw_momentum(&inv_mass, &mut rng);
        let traj = leapfrog(target, &x, f, &g, &p, &inv_mass, step, config.leapfrog_steps);
        let u: f64 = rng.random();
        let accept = traj.accept_prob > 0.0 && u < traj.accept_prob;
        if accept {
            x = traj.x;
            f = traj.f;
            g = traj.g;
        }
        if it < w {
            da.update(config.target_accept, traj.accept_prob);
            if it >= win_lo && it < win_hi {
                window.extend_from_slice(&x);
            }
            if it + 1 == win_hi {
                if let Some(v) = variances(&window, d) {
                    inv_mass = v;
                    let e = reasonable_step(target, &x, f, &g, &inv_mass, config.max_step_halvings, &mut rng);
                    da = DualAveraging::new(e);
                }
                window = Vec::new();
            }
            if it + 1 == w {
                eps = da.final_eps();
            }
        } else {
            if accept {
                accepted += 1;
            }
            if traj.divergent {
                divergences += 1;
            }
            draws.extend_from_slice(&x);
            log_kernel.push(f);
        }
    }
    Ok(Chain {
        dim: d,
        draws,
        log_kernel,
        acceptance_rate: accepted as f64 / config.draws as f64,
        seed,
        divergence_count: divergences,
        step_size: eps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Bounds;

    /// Independent Gaussian kernel on a box, bypassing L̂ entirely.
    struct Gaussian {
        bounds: Bounds,
        mean: Vec<f64>,
        sd: Vec<f64>,
    }

    impl LogDensity for Gaussian {
        fn bounds(&self) -> &Bounds {
            &self.bounds
        }

        fn log_density(&self, theta: &[f64]) -> Result<f64> {
            if !self.bounds.contains(theta) {
                return Err(Error::Domain { theta: theta.to_vec() });
            }
            Ok(theta
                .iter()
                .zip(self.mean.iter().zip(&self.sd))
                .map(|(t, (m, s))| -0.5 * ((t - m) / s).powi(2))
                .sum())
        }

        fn value_and_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
            let v = self.log_density(theta)?;
            let g = theta
                .iter()
                .zip(self.mean.iter().zip(&self.sd))
                .map(|(t, (m, s))| -(t - m) / (s * s))
                .collect();
            Ok((v, g))
        }
    }

    fn target() -> Gaussian {
        Gaussian {
            bounds: Bounds::new(vec![-100.0, -100.0], vec![100.0, 100.0]).unwrap(),
            mean: vec![3.0, -1.0],
            sd: vec![0.5, 4.0],
        }
    }

    fn check_moments(chains: &[Chain], t: &Gaussian) {
        for c in 0..2 {
            let all: Vec<f64> = chains.iter().flat_map(|ch| ch.column(c)).collect();
            let n = all.len() as f64;
            let m = all.iter().sum::<f64>() / n;
            let v = all.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
            let sd = t.sd[c];
            assert!(
                (m - t.mean[c]).abs() <= 0.02 * sd.max(t.mean[c].abs()),
                "coord {c} mean {m}"
            );
            assert!((v / (sd * sd) - 1.0).abs() <= 0.04, "coord {c} var {v}");
        }
    }

    #[test]
    fn rwm_reproduces_gaussian_moments() {
        let t = target();
        let cfg = SamplerConfig {
            draws: 50_000,
            seed: 3,
            ..SamplerConfig::new(Algorithm::Rwm)
        };
        let chains = sample(&t, &cfg, &[0.0, 0.0]).unwrap();
        check_moments(&chains, &t);
        for c in &chains {
            assert!(
                c.acceptance_rate > 0.15 && c.acceptance_rate < 0.45,
                "{}",
                c.acceptance_rate
            );
        }
    }

    #[test]
    fn hmc_reproduces_gaussian_moments() {
        let t = target();
        let cfg = SamplerConfig {
            draws: 12_500,
            seed: 5,
            ..SamplerConfig::new(Algorithm::Hmc)
        };
        let chains = sample(&t, &cfg, &[0.0, 0.0]).unwrap();
        check_moments(&chains, &t);
        for c in &chains {
            assert!(c.divergence_count <= c.len() / 50);
        }
    }

    #[test]
    fn seeded_runs_are_identical_and_confined() {
        let t = Gaussian {
            bounds: Bounds::new(vec![0.0], vec![1.0]).unwrap(),
            mean: vec![0.9],
            sd: vec![0.5],
        };
        for alg in [Algorithm::Rwm, Algorithm::Hmc] {
            let cfg = SamplerConfig {
                draws: 2000,
                warmup: 500,
                seed: 11,
                ..SamplerConfig::new(alg)
            };
            let a = sample(&t, &cfg, &[0.5]).unwrap();
            let b = sample(&t, &cfg, &[0.5]).unwrap();
            assert_eq!(a, b);
            assert!(a.iter().all(|c| c.draws().iter().all(|&v| (0.0..=1.0).contains(&v))));
        }
    }

    /// A discretized 1-D kernel: the histogram of RWM draws over the bins
    /// matches the normalized kernel in total variation.
    #[test]
    fn rwm_stationary_distribution() {
        struct Staircase(Bounds);
        const HEIGHTS: [f64; 5] = [1.0, 3.0, 0.5, 2.0, 3.5];
        impl LogDensity for Staircase {
            fn bounds(&self) -> &Bounds {
                &self.0
            }
            fn log_density(&self, theta: &[f64]) -> Result<f64> {
                if !self.0.contains(theta) {
                    return Err(Error::Domain { theta: theta.to_vec() });
                }
                let bin = (theta[0].floor() as usize).min(4);
                Ok(HEIGHTS[bin].ln())
            }
            fn value_and_grad(&self, _: &[f64]) -> Result<(f64, Vec<f64>)> {
                Err(Error::UnsupportedLoss)
            }
            fn differentiable(&self) -> bool {
                false
            }
        }
        let t = Staircase(Bounds::new(vec![0.0], vec![5.0]).unwrap());
        let cfg = SamplerConfig {
            chains: 1,
            draws: 100_000,
            warmup: 2000,
            seed: 8,
            ..SamplerConfig::new(Algorithm::Rwm)
        };
        let chains = sample(&t, &cfg, &[2.5]).unwrap();
        let mut counts = [0.0; 5];
        for v in chains[0].column(0) {
            counts[(v.floor() as usize).min(4)] += 1.0;
        }
        let total: f64 = HEIGHTS.iter().sum();
        let tv: f64 = counts
            .iter()
            .zip(HEIGHTS)
            .map(|(c, h)| (c / 100_000.0 - h / total).abs())
            .sum::<f64>()
            * 0.5;
        assert!(tv < 0.05, "total variation {tv}");
        assert!(matches!(
            sample(&t, &SamplerConfig::new(Algorithm::Hmc), &[2.5]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn config_validation() {
        let cfg = SamplerConfig {
            warmup: 0,
            ..SamplerConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = SamplerConfig {
            target_accept: 1.0,
            ..SamplerConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
