//! Robust and standard posterior kernels, MAP search and MCMC.

mod map;
mod sampler;

pub use map::{maximize, MapOptions, MapResult};
pub use sampler::{derive_seed, sample, Algorithm, Chain, SamplerConfig};

use crate::error::{Error, Result};
use crate::models::{Bounds, Dataset, LikelihoodFamily, Prior, ReferencePoint};
use crate::mom::{
    block_stats, implicit_gradient, partition_blocks, solve_scaled, BlockPartition, MomEstimate, PartitionScheme,
    ScaleSchedule,
};
use crate::rho::{RhoKind, RhoSpec};

/// An unnormalized log density on a box.
pub trait LogDensity: Sync {
    fn bounds(&self) -> &Bounds;

    /// log density at θ; `Error::Domain` outside the box.
    fn log_density(&self, theta: &[f64]) -> Result<f64>;

    /// Value and gradient together.
    fn value_and_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)>;

    /// Whether `value_and_grad` is available.
    fn differentiable(&self) -> bool {
        true
    }

    fn dim(&self) -> usize {
        self.bounds().dim()
    }
}

/// Settings for assembling a [`RobustPosterior`] from data.
#[derive(Debug, Clone)]
pub struct PosteriorOptions {
    pub k: usize,
    pub scheme: PartitionScheme,
    pub seed: u64,
    pub rho: RhoSpec,
    /// Fixed Δ_n constant; calibrated from the data when `None`.
    pub delta_c: Option<f64>,
    pub delta_exponent: f64,
    pub delta_floor: f64,
    /// Fixed reference point; [`default_reference_point`] when `None`.
    pub theta_prime: Option<Vec<f64>>,
}

impl Default for PosteriorOptions {
    fn default() -> Self {
        Self {
            k: 10,
            scheme: PartitionScheme::Shuffled,
            seed: 0,
            rho: RhoSpec::default(),
            delta_c: None,
            delta_exponent: 0.25,
            delta_floor: 1e-8,
            theta_prime: None,
        }
    }
}

/// Offset of the default reference point from the pilot, in units of
/// 1/√I_ii (one observation's worth of information).
pub const REFERENCE_OFFSET: f64 = 5.0;

/// θ′ placed `REFERENCE_OFFSET`/√I_ii away from the pilot in every
/// coordinate, towards the side of Θ with more room and never more than half
/// the way to the boundary.
///
/// Saturated (corrupted) blocks contribute to L̂ with a sign that flips at
/// θ′, so L̂ has a step of height proportional to the contamination there. A
/// reference point inside the bulk of the posterior would cut the posterior
/// at that step; far from the bulk the step only shifts L̂ by a constant.
pub fn default_reference_point(family: &LikelihoodFamily, pilot: &[f64], data: &Dataset) -> Result<ReferencePoint> {
    let domain = family.domain();
    let info = family.fisher_information(pilot, data)?;
    let theta = pilot
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let unit = if info[(i, i)] > 0.0 {
                info[(i, i)].sqrt().recip()
            } else {
                domain.width(i)
            };
            let up = domain.upper[i] - p;
            let down = p - domain.lower[i];
            if up >= down {
                p + (REFERENCE_OFFSET * unit).min(0.5 * up)
            } else {
                p - (REFERENCE_OFFSET * unit).min(0.5 * down)
            }
        })
        .collect();
    ReferencePoint::inside(theta, domain)
}

/// The robust posterior kernel exp(−N_eff·L̂(θ))·π(θ).
#[derive(Debug, Clone)]
pub struct RobustPosterior {
    family: LikelihoodFamily,
    prior: Prior,
    theta_prime: ReferencePoint,
    partition: BlockPartition,
    /// Data reordered so block j occupies rows j·n..(j+1)·n.
    blocked: Dataset,
    local: BlockPartition,
    rho: RhoSpec,
    delta: ScaleSchedule,
    pilot: Vec<f64>,
}

impl RobustPosterior {
    pub fn new(
        family: LikelihoodFamily,
        prior: Prior,
        theta_prime: ReferencePoint,
        data: &Dataset,
        partition: BlockPartition,
        rho: RhoSpec,
        delta: ScaleSchedule,
    ) -> Result<Self> {
        family.check_data(data)?;
        if partition.indices().iter().any(|&i| i >= data.len()) {
            return Err(Error::InvalidK {
                k: partition.k(),
                n: data.len(),
            });
        }
        if prior.support() != family.domain() {
            return Err(Error::InvalidPrior(
                "prior support must equal the parameter domain".into(),
            ));
        }
        family.check(theta_prime.as_slice())?;
        let blocked = data.subset(partition.indices());
        let local = partition.contiguous_like();
        let pilot = family.robust_pilot(data, partition.k())?;
        let post = Self {
            family,
            prior,
            theta_prime,
            partition,
            blocked,
            local,
            rho,
            delta,
            pilot,
        };
        // L̂ lies between the extreme block averages, which are finite on the
        // compact domain; a non-finite kernel means the data or model is broken.
        let v = post.log_kernel(&post.pilot.clone())?;
        if !v.is_finite() {
            return Err(Error::InvalidModel(
                "log kernel is not finite at the pilot estimate".into(),
            ));
        }
        Ok(post)
    }

    /// Partitions the data, picks θ′ and calibrates Δ_n per `options`.
    pub fn from_options(
        family: LikelihoodFamily,
        prior: Prior,
        data: &Dataset,
        options: &PosteriorOptions,
    ) -> Result<Self> {
        family.check_data(data)?;
        let partition = partition_blocks(data.len(), options.k, options.scheme, options.seed)?;
        let pilot = family.robust_pilot(data, options.k)?;
        let theta_prime = match &options.theta_prime {
            Some(tp) => ReferencePoint::new(tp.clone(), family.domain())?,
            None => default_reference_point(&family, &pilot, data)?,
        };
        let delta = match options.delta_c {
            Some(c) => ScaleSchedule::new(c, options.delta_exponent, options.delta_floor)?,
            None => ScaleSchedule::calibrate(
                &family,
                &pilot,
                &theta_prime,
                data,
                &partition,
                options.delta_exponent,
                options.delta_floor,
            )?,
        };
        Self::new(family, prior, theta_prime, data, partition, options.rho.clone(), delta)
    }

    pub fn family(&self) -> &LikelihoodFamily {
        &self.family
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    pub fn theta_prime(&self) -> &ReferencePoint {
        &self.theta_prime
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn rho(&self) -> &RhoSpec {
        &self.rho
    }

    pub fn delta(&self) -> &ScaleSchedule {
        &self.delta
    }

    /// The robust pilot estimate used for starting points.
    pub fn pilot(&self) -> &[f64] {
        &self.pilot
    }

    /// The observations in block order (only the k·n used ones).
    pub fn blocked_data(&self) -> &Dataset {
        &self.blocked
    }

    /// k·n.
    pub fn n_effective(&self) -> usize {
        self.partition.used()
    }

    /// Same data, model and loss with a different prior.
    pub fn with_prior(&self, prior: Prior) -> Result<Self> {
        if prior.support() != self.family.domain() {
            return Err(Error::InvalidPrior(
                "prior support must equal the parameter domain".into(),
            ));
        }
        Ok(Self { prior, ..self.clone() })
    }

    /// L̂(θ) with solver diagnostics.
    pub fn mom(&self, theta: &[f64]) -> Result<MomEstimate> {
        self.family.check(theta)?;
        let mut avgs = Vec::with_capacity(self.local.k());
        block_stats(
            &self.family,
            theta,
            self.theta_prime.as_slice(),
            &self.blocked,
            &self.local,
            &mut avgs,
            None,
        );
        if avgs.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        let mut scratch = vec![0.0; avgs.len()];
        solve_scaled(&avgs, &self.rho, self.delta.standardizer(self.local.n()), &mut scratch)
    }

    /// −N_eff·L̂(θ) + log π(θ).
    pub fn log_kernel(&self, theta: &[f64]) -> Result<f64> {
        let est = self.mom(theta)?;
        Ok(-(self.n_effective() as f64) * est.value + self.prior.log_prior_unchecked(theta))
    }

    /// ∇L̂(θ) by the implicit-function formula; `FlatScore` when every block
    /// is saturated.
    pub fn grad_mom(&self, theta: &[f64]) -> Result<(MomEstimate, Vec<f64>)> {
        if self.rho.kind() == RhoKind::Absolute {
            return Err(Error::UnsupportedLoss);
        }
        self.family.check(theta)?;
        let mut avgs = Vec::with_capacity(self.local.k());
        let mut grads = Vec::new();
        block_stats(
            &self.family,
            theta,
            self.theta_prime.as_slice(),
            &self.blocked,
            &self.local,
            &mut avgs,
            Some(&mut grads),
        );
        if avgs.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        let s = self.delta.standardizer(self.local.n());
        let mut scratch = vec![0.0; avgs.len()];
        let est = solve_scaled(&avgs, &self.rho, s, &mut scratch)?;
        let g = implicit_gradient(&avgs, &grads, theta.len(), &self.rho, s, est.value)?;
        Ok((est, g))
    }

    /// Gradient of the log kernel; falls back to central differences of L̂
    /// (step 1e−5·(1+|θ_i|), one-sided at the boundary) when the score is
    /// flat.
    pub fn grad_log_kernel(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.value_and_grad(theta).map(|(_, g)| g)
    }

    fn fd_grad_mom(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let bounds = self.family.domain();
        let mut g = vec![0.0; theta.len()];
        let mut x = theta.to_vec();
        for i in 0..theta.len() {
            let h = 1e-5 * (1.0 + theta[i].abs());
            let up = (theta[i] + h).min(bounds.upper[i]);
            let down = (theta[i] - h).max(bounds.lower[i]);
            x[i] = up;
            let fu = self.mom(&x)?.value;
            x[i] = down;
            let fd = self.mom(&x)?.value;
            x[i] = theta[i];
            g[i] = (fu - fd) / (up - down);
        }
        Ok(g)
    }
}

impl LogDensity for RobustPosterior {
    fn bounds(&self) -> &Bounds {
        self.family.domain()
    }

    fn log_density(&self, theta: &[f64]) -> Result<f64> {
        self.log_kernel(theta)
    }

    fn value_and_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let n_eff = self.n_effective() as f64;
        let (value, mut g) = match self.grad_mom(theta) {
            Ok((est, g)) => (est.value, g),
            Err(Error::FlatScore) => (self.mom(theta)?.value, self.fd_grad_mom(theta)?),
            Err(e) => return Err(e),
        };
        for gi in g.iter_mut() {
            *gi *= -n_eff;
        }
        self.prior.add_grad(theta, &mut g);
        Ok((-n_eff * value + self.prior.log_prior_unchecked(theta), g))
    }

    fn differentiable(&self) -> bool {
        self.rho.kind() != RhoKind::Absolute
    }
}

/// The classical posterior exp(−Σ_i [ℓ(θ,X_i) − ℓ(θ′,X_i)])·π(θ), for
/// comparison runs.
#[derive(Debug, Clone)]
pub struct StandardPosterior {
    family: LikelihoodFamily,
    prior: Prior,
    theta_prime: ReferencePoint,
    data: Dataset,
}

impl StandardPosterior {
    pub fn new(family: LikelihoodFamily, prior: Prior, theta_prime: ReferencePoint, data: Dataset) -> Result<Self> {
        family.check_data(&data)?;
        if prior.support() != family.domain() {
            return Err(Error::InvalidPrior(
                "prior support must equal the parameter domain".into(),
            ));
        }
        family.check(theta_prime.as_slice())?;
        Ok(Self {
            family,
            prior,
            theta_prime,
            data,
        })
    }

    pub fn family(&self) -> &LikelihoodFamily {
        &self.family
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }
}

impl LogDensity for StandardPosterior {
    fn bounds(&self) -> &Bounds {
        self.family.domain()
    }

    fn log_density(&self, theta: &[f64]) -> Result<f64> {
        self.family.check(theta)?;
        let tp = self.theta_prime.as_slice();
        let s: f64 = (0..self.data.len())
            .map(|i| self.family.increment(theta, tp, self.data.get(i)))
            .sum();
        Ok(-s + self.prior.log_prior_unchecked(theta))
    }

    fn value_and_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let v = self.log_density(theta)?;
        let d = theta.len();
        let mut g = vec![0.0; d];
        let mut gi = vec![0.0; d];
        for i in 0..self.data.len() {
            self.family.grad_into(theta, self.data.get(i), &mut gi);
            for (a, b) in g.iter_mut().zip(&gi) {
                *a -= b;
            }
        }
        self.prior.add_grad(theta, &mut g);
        Ok((v, g))
    }
}

/// Posterior mean and standard deviation of a normal mean with known σ under
/// a N(m, s²) prior (no truncation).
pub fn conjugate_normal_posterior(data: &[f64], sigma: f64, prior_mean: f64, prior_sd: f64) -> (f64, f64) {
    let prec = 1.0 / (prior_sd * prior_sd) + data.len() as f64 / (sigma * sigma);
    let sum: f64 = data.iter().sum();
    let mean = (prior_mean / (prior_sd * prior_sd) + sum / (sigma * sigma)) / prec;
    (mean, prec.sqrt().recip())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::FamilyKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(rho: RhoSpec, delta_c: Option<f64>) -> (RobustPosterior, Dataset) {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let fam = LikelihoodFamily::new(
            FamilyKind::GaussianLocation { sigma: 1.0 },
            Bounds::new(vec![-10.0], vec![10.0]).unwrap(),
        )
        .unwrap();
        let data = fam.simulate(&[1.0], 1000, &mut rng).unwrap();
        let prior = Prior::uniform(fam.domain().clone());
        let opts = PosteriorOptions {
            k: 20,
            rho,
            delta_c,
            ..Default::default()
        };
        (RobustPosterior::from_options(fam, prior, &data, &opts).unwrap(), data)
    }

    #[test]
    fn kernel_at_reference_point_is_prior_constant() {
        let (post, _) = setup(RhoSpec::default(), None);
        let tp = post.theta_prime().as_slice().to_vec();
        let v = post.log_kernel(&tp).unwrap();
        assert!((v + 20f64.ln()).abs() < 1e-12);
        assert!(matches!(post.log_kernel(&[11.0]), Err(Error::Domain { .. })));
    }

    #[test]
    fn linear_region_argmax_is_sample_mean() {
        let (post, _) = setup(RhoSpec::default(), Some(1e12));
        let used: Vec<f64> = post.blocked_data().response().to_vec();
        let mean = used.iter().sum::<f64>() / used.len() as f64;
        let mut best = (f64::NEG_INFINITY, 0.0);
        let step = 1e-4;
        let mut t = mean - 0.05;
        while t < mean + 0.05 {
            let v = post.log_kernel(&[t]).unwrap();
            if v > best.0 {
                best = (v, t);
            }
            t += step;
        }
        assert!((best.1 - mean).abs() <= step, "{} vs {mean}", best.1);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let smooth = RhoSpec::from_kind(RhoKind::SmoothedHuber).unwrap();
        let (post, _) = setup(smooth, None);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let t = rng.random_range(0.8..1.2);
            let (_, g) = post.value_and_grad(&[t]).unwrap();
            let h = 1e-6;
            let fd = (post.log_kernel(&[t + h]).unwrap() - post.log_kernel(&[t - h]).unwrap()) / (2.0 * h);
            assert!((g[0] - fd).abs() <= 1e-4 * fd.abs().max(1.0), "{} vs {fd}", g[0]);
        }
    }

    #[test]
    fn flat_score_falls_back_to_differences() {
        // Tiny Δ_n saturates every block away from the solution.
        let (post, _) = setup(RhoSpec::default(), Some(1e-9));
        let g = post.grad_log_kernel(&[3.0]).unwrap();
        assert!(g[0].is_finite());
    }

    #[test]
    fn standard_posterior_gradient() {
        let (post, data) = setup(RhoSpec::default(), None);
        let sp = StandardPosterior::new(
            post.family().clone(),
            post.prior().clone(),
            post.theta_prime().clone(),
            data.clone(),
        )
        .unwrap();
        let (_, g) = sp.value_and_grad(&[0.5]).unwrap();
        let expected: f64 = data.response().iter().map(|x| x - 0.5).sum();
        assert!((g[0] - expected).abs() < 1e-9);
    }

    #[test]
    fn conjugate_formula() {
        let (m, s) = conjugate_normal_posterior(&[1.0, 3.0], 1.0, 0.0, 1.0);
        assert!((m - 4.0 / 3.0).abs() < 1e-15);
        assert!((s - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
