//! Likelihood families, priors and reference points.
//!
//! Everything downstream consumes log-likelihood *increments*
//! ℓ(θ, x) − ℓ(θ′, x) and their θ-gradients, where ℓ is the negative log
//! density. Normalizing terms that do not depend on θ are dropped.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1, Normal, Poisson, StandardNormal};

use crate::error::{Error, Result};

/// One record: a scalar, or a response with its covariate row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observation<'a> {
    Scalar(f64),
    Pair { y: f64, z: &'a [f64] },
}

impl Observation<'_> {
    pub fn response(&self) -> f64 {
        match *self {
            Observation::Scalar(x) => x,
            Observation::Pair { y, .. } => y,
        }
    }
}

/// A set of observations stored column-major by record.
///
/// Regression covariates are stored row by row with a fixed width; the
/// leading intercept column (when present) is part of the stored row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    response: Vec<f64>,
    design: Vec<f64>,
    width: usize,
}

impl Dataset {
    /// Scalar observations.
    pub fn scalar(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("observations must be finite".into()));
        }
        Ok(Self {
            response: values,
            design: Vec::new(),
            width: 0,
        })
    }

    /// Regression records; each covariate row is prefixed with a 1 for the
    /// intercept.
    pub fn regression(response: Vec<f64>, rows: &[Vec<f64>]) -> Result<Self> {
        if response.len() != rows.len() {
            return Err(Error::InvalidModel(format!(
                "{} responses but {} covariate rows",
                response.len(),
                rows.len()
            )));
        }
        let p = rows.first().map_or(0, Vec::len);
        let mut design = Vec::with_capacity(rows.len() * (p + 1));
        for row in rows {
            if row.len() != p {
                return Err(Error::InvalidModel("covariate rows have unequal length".into()));
            }
            design.push(1.0);
            design.extend_from_slice(row);
        }
        Self::from_design(response, design, p + 1)
    }

    /// Regression records from an already-augmented row-major design.
    pub fn from_design(response: Vec<f64>, design: Vec<f64>, width: usize) -> Result<Self> {
        if width == 0 || design.len() != response.len() * width {
            return Err(Error::InvalidModel("design does not match response length".into()));
        }
        if response.iter().chain(&design).any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("observations must be finite".into()));
        }
        Ok(Self {
            response,
            design,
            width,
        })
    }

    pub fn len(&self) -> usize {
        self.response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.response.is_empty()
    }

    /// Covariate width including the intercept column; 0 for scalar data.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn is_regression(&self) -> bool {
        self.width > 0
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.design[i * self.width..(i + 1) * self.width]
    }

    pub fn get(&self, i: usize) -> Observation<'_> {
        if self.width == 0 {
            Observation::Scalar(self.response[i])
        } else {
            Observation::Pair {
                y: self.response[i],
                z: self.row(i),
            }
        }
    }

    /// Copy with some responses replaced.
    pub fn with_responses(&self, response: Vec<f64>) -> Self {
        assert_eq!(response.len(), self.response.len());
        Self {
            response,
            design: self.design.clone(),
            width: self.width,
        }
    }

    /// Copy restricted to the given indices, in order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let response = idx.iter().map(|&i| self.response[i]).collect();
        let mut design = Vec::with_capacity(idx.len() * self.width);
        for &i in idx {
            if self.width > 0 {
                design.extend_from_slice(self.row(i));
            }
        }
        Self {
            response,
            design,
            width: self.width,
        }
    }
}

/// Per-coordinate box [lower, upper].
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidModel("bounds must have matching nonzero length".into()));
        }
        for (l, u) in lower.iter().zip(&upper) {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(Error::InvalidModel(format!("invalid bound pair [{l}, {u}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(t, (l, u))| *t >= *l && *t <= *u)
    }

    pub fn contains_strictly(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(t, (l, u))| *t > *l && *t < *u)
    }

    pub fn clamp(&self, theta: &mut [f64]) {
        for (t, (l, u)) in theta.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *t = t.clamp(*l, *u);
        }
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FamilyKind {
    /// N(θ, σ²) with σ known.
    GaussianLocation { sigma: f64 },
    /// Laplace(θ, b) with b known.
    LaplaceLocation { b: f64 },
    /// Poisson(θ).
    PoissonRate,
    /// y = βᵀz + ε, ε ~ N(0, σ²); θ = (β₀, …, β_{p−1}, σ) where z includes the
    /// intercept and `p` counts it.
    LinearRegression { p: usize },
}

impl FamilyKind {
    pub fn param_dim(&self) -> usize {
        match *self {
            FamilyKind::LinearRegression { p } => p + 1,
            _ => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FamilyKind::GaussianLocation { .. } => "gaussian-location",
            FamilyKind::LaplaceLocation { .. } => "laplace-location",
            FamilyKind::PoissonRate => "poisson-rate",
            FamilyKind::LinearRegression { .. } => "linear-regression",
        }
    }
}

/// A parametric family with a compact parameter domain Θ.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodFamily {
    kind: FamilyKind,
    domain: Bounds,
}

/// Floor for the noise scale of the regression family.
pub const SIGMA_FLOOR: f64 = 1e-3;

impl LikelihoodFamily {
    pub fn new(kind: FamilyKind, domain: Bounds) -> Result<Self> {
        match kind {
            FamilyKind::GaussianLocation { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                return Err(Error::InvalidModel(format!("sigma must be positive, got {sigma}")))
            }
            FamilyKind::LaplaceLocation { b } if !(b > 0.0 && b.is_finite()) => {
                return Err(Error::InvalidModel(format!("b must be positive, got {b}")))
            }
            FamilyKind::LinearRegression { p: 0 } => {
                return Err(Error::InvalidModel("regression needs at least one coefficient".into()))
            }
            _ => {}
        }
        if domain.dim() != kind.param_dim() {
            return Err(Error::InvalidModel(format!(
                "domain has dimension {} but the family needs {}",
                domain.dim(),
                kind.param_dim()
            )));
        }
        let positive_coord = match kind {
            FamilyKind::PoissonRate => Some(0),
            FamilyKind::LinearRegression { p } => Some(p),
            _ => None,
        };
        if let Some(i) = positive_coord {
            if domain.lower[i] <= 0.0 {
                return Err(Error::InvalidModel(
                    "rate / noise-scale coordinate needs a strictly positive lower bound".into(),
                ));
            }
        }
        Ok(Self { kind, domain })
    }

    /// The family with its default domain for `data`: location families get
    /// [c − 50·scale, c + 50·scale] around the sample median `c`; regression
    /// gets β ∈ [−10, 10]^p and σ ∈ [SIGMA_FLOOR, 1].
    pub fn with_default_domain(kind: FamilyKind, data: &Dataset) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyData);
        }
        let domain = match kind {
            FamilyKind::GaussianLocation { sigma } => {
                let c = median(data.response());
                Bounds::new(vec![c - 50.0 * sigma], vec![c + 50.0 * sigma])?
            }
            FamilyKind::LaplaceLocation { b } => {
                let c = median(data.response());
                Bounds::new(vec![c - 50.0 * b], vec![c + 50.0 * b])?
            }
            FamilyKind::PoissonRate => {
                let c = median(data.response()).max(0.0);
                let scale = c.max(1.0).sqrt();
                Bounds::new(vec![(c - 50.0 * scale).max(1e-6)], vec![c + 50.0 * scale])?
            }
            FamilyKind::LinearRegression { p } => {
                let mut lower = vec![-10.0; p + 1];
                let mut upper = vec![10.0; p + 1];
                lower[p] = SIGMA_FLOOR;
                upper[p] = 1.0;
                Bounds::new(lower, upper)?
            }
        };
        Self::new(kind, domain)
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn domain(&self) -> &Bounds {
        &self.domain
    }

    pub fn param_dim(&self) -> usize {
        self.kind.param_dim()
    }

    pub fn check(&self, theta: &[f64]) -> Result<()> {
        if self.domain.contains(theta) && theta.iter().all(|t| t.is_finite()) {
            Ok(())
        } else {
            Err(Error::Domain { theta: theta.to_vec() })
        }
    }

    /// Checks that `data` has the shape this family expects.
    pub fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.is_empty() {
            return Err(Error::EmptyData);
        }
        match self.kind {
            FamilyKind::LinearRegression { p } if data.width() != p => Err(Error::InvalidModel(format!(
                "regression expects {p} covariate columns, data has {}",
                data.width()
            ))),
            FamilyKind::LinearRegression { .. } => Ok(()),
            FamilyKind::PoissonRate if data.response().iter().any(|&x| x < 0.0 || x.fract() != 0.0) => {
                Err(Error::InvalidModel("Poisson data must be nonnegative integers".into()))
            }
            _ if data.is_regression() => Err(Error::InvalidModel("location families take scalar observations".into())),
            _ => Ok(()),
        }
    }

    /// ℓ(θ, x) up to θ-free constants; no domain check.
    pub(crate) fn nll(&self, theta: &[f64], x: Observation<'_>) -> f64 {
        match (self.kind, x) {
            (FamilyKind::GaussianLocation { sigma }, Observation::Scalar(x)) => {
                let r = (x - theta[0]) / sigma;
                0.5 * r * r
            }
            (FamilyKind::LaplaceLocation { b }, Observation::Scalar(x)) => (x - theta[0]).abs() / b,
            (FamilyKind::PoissonRate, Observation::Scalar(x)) => theta[0] - x * theta[0].ln(),
            (FamilyKind::LinearRegression { p }, Observation::Pair { y, z }) => {
                let sigma = theta[p];
                let r = y - dot(&theta[..p], z);
                0.5 * r * r / (sigma * sigma) + sigma.ln()
            }
            _ => panic!("observation shape does not match the family"),
        }
    }

    /// ℓ(θ, x) − ℓ(θ′, x); no domain check.
    pub(crate) fn increment(&self, theta: &[f64], theta_prime: &[f64], x: Observation<'_>) -> f64 {
        match (self.kind, x) {
            (FamilyKind::GaussianLocation { sigma }, Observation::Scalar(x)) => {
                let (a, b) = (theta[0], theta_prime[0]);
                (b - a) * (x - 0.5 * (a + b)) / (sigma * sigma)
            }
            (FamilyKind::PoissonRate, Observation::Scalar(x)) => {
                (theta[0] - theta_prime[0]) - x * (theta[0] / theta_prime[0]).ln()
            }
            _ => self.nll(theta, x) - self.nll(theta_prime, x),
        }
    }

    /// Writes ∂_θ ℓ(θ, x) into `out`; the Laplace kink gets the subgradient 0.
    pub(crate) fn grad_into(&self, theta: &[f64], x: Observation<'_>, out: &mut [f64]) {
        match (self.kind, x) {
            (FamilyKind::GaussianLocation { sigma }, Observation::Scalar(x)) => {
                out[0] = (theta[0] - x) / (sigma * sigma);
            }
            (FamilyKind::LaplaceLocation { b }, Observation::Scalar(x)) => {
                let d = theta[0] - x;
                out[0] = if d > 0.0 {
                    1.0 / b
                } else if d < 0.0 {
                    -1.0 / b
                } else {
                    0.0
                };
            }
            (FamilyKind::PoissonRate, Observation::Scalar(x)) => {
                out[0] = 1.0 - x / theta[0];
            }
            (FamilyKind::LinearRegression { p }, Observation::Pair { y, z }) => {
                let sigma = theta[p];
                let s2 = sigma * sigma;
                let r = y - dot(&theta[..p], z);
                for (o, zi) in out[..p].iter_mut().zip(z) {
                    *o = -r * zi / s2;
                }
                out[p] = 1.0 / sigma - r * r / (s2 * sigma);
            }
            _ => panic!("observation shape does not match the family"),
        }
    }

    /// ℓ(θ, x) − ℓ(θ′, x).
    pub fn nll_increment(&self, theta: &[f64], theta_prime: &ReferencePoint, x: Observation<'_>) -> Result<f64> {
        self.check(theta)?;
        Ok(self.increment(theta, theta_prime.as_slice(), x))
    }

    /// ∂_θ ℓ(θ, x). The gradient of the increment is the same vector.
    pub fn grad_nll(&self, theta: &[f64], x: Observation<'_>) -> Result<Vec<f64>> {
        self.check(theta)?;
        if let (FamilyKind::LaplaceLocation { .. }, Observation::Scalar(v)) = (self.kind, x) {
            if v == theta[0] {
                return Err(Error::NonDifferentiablePoint);
            }
        }
        let mut g = vec![0.0; self.param_dim()];
        self.grad_into(theta, x, &mut g);
        Ok(g)
    }

    /// Fisher information at θ. Regression uses the empirical second moment
    /// of the covariate rows of `data`; location families ignore `data`.
    pub fn fisher_information(&self, theta: &[f64], data: &Dataset) -> Result<DMatrix<f64>> {
        self.check(theta)?;
        Ok(match self.kind {
            FamilyKind::GaussianLocation { sigma } => DMatrix::from_element(1, 1, 1.0 / (sigma * sigma)),
            FamilyKind::LaplaceLocation { b } => DMatrix::from_element(1, 1, 1.0 / (b * b)),
            FamilyKind::PoissonRate => DMatrix::from_element(1, 1, 1.0 / theta[0]),
            FamilyKind::LinearRegression { p } => {
                if data.width() != p || data.is_empty() {
                    return Err(Error::InvalidModel(
                        "regression Fisher information needs the design rows".into(),
                    ));
                }
                let s2 = theta[p] * theta[p];
                let mut info = DMatrix::zeros(p + 1, p + 1);
                for i in 0..data.len() {
                    let z = data.row(i);
                    for a in 0..p {
                        for b in 0..p {
                            info[(a, b)] += z[a] * z[b];
                        }
                    }
                }
                info /= data.len() as f64 * s2;
                info[(p, p)] = 2.0 / s2;
                info
            }
        })
    }

    /// Maximum-likelihood estimate in closed form, clamped to Θ: sample mean,
    /// sample median, sample mean, and OLS with the ML residual scale.
    pub fn closed_form_mle(&self, data: &Dataset) -> Result<Vec<f64>> {
        self.check_data(data)?;
        let mut theta = match self.kind {
            FamilyKind::GaussianLocation { .. } | FamilyKind::PoissonRate => {
                vec![mean(data.response())]
            }
            FamilyKind::LaplaceLocation { .. } => vec![median(data.response())],
            FamilyKind::LinearRegression { p } => ols(data, p)?,
        };
        self.domain.clamp(&mut theta);
        Ok(theta)
    }

    /// A robust starting estimate: the sample median for location families,
    /// the coordinate-wise median of per-block OLS fits for regression (plain
    /// OLS when blocks are too small to fit). Clamped to Θ.
    pub fn robust_pilot(&self, data: &Dataset, blocks: usize) -> Result<Vec<f64>> {
        self.check_data(data)?;
        let mut theta = match self.kind {
            FamilyKind::LinearRegression { p } => {
                let k = blocks.max(1);
                let n = data.len() / k;
                if k == 1 || n < 2 * (p + 1) {
                    ols(data, p)?
                } else {
                    let fits: Vec<Vec<f64>> = (0..k)
                        .filter_map(|j| {
                            let idx: Vec<usize> = (j * n..(j + 1) * n).collect();
                            ols(&data.subset(&idx), p).ok()
                        })
                        .collect();
                    if fits.is_empty() {
                        ols(data, p)?
                    } else {
                        (0..=p)
                            .map(|c| median(&fits.iter().map(|f| f[c]).collect::<Vec<_>>()))
                            .collect()
                    }
                }
            }
            _ => vec![median(data.response())],
        };
        self.domain.clamp(&mut theta);
        Ok(theta)
    }

    /// Draws one observation from p_θ. Regression covariates are i.i.d.
    /// standard normal after the intercept.
    pub fn sample_response<R: Rng + ?Sized>(&self, theta: &[f64], z: &[f64], rng: &mut R) -> f64 {
        match self.kind {
            FamilyKind::GaussianLocation { sigma } => Normal::new(theta[0], sigma).expect("valid sigma").sample(rng),
            FamilyKind::LaplaceLocation { b } => {
                let e1: f64 = Exp1.sample(rng);
                let e2: f64 = Exp1.sample(rng);
                theta[0] + b * (e1 - e2)
            }
            FamilyKind::PoissonRate => Poisson::new(theta[0]).expect("positive rate").sample(rng),
            FamilyKind::LinearRegression { p } => {
                let e: f64 = StandardNormal.sample(rng);
                dot(&theta[..p], z) + theta[p] * e
            }
        }
    }

    /// Simulates `n` i.i.d. records from p_θ.
    pub fn simulate<R: Rng + ?Sized>(&self, theta: &[f64], n: usize, rng: &mut R) -> Result<Dataset> {
        match self.kind {
            FamilyKind::LinearRegression { p } => {
                let mut design = Vec::with_capacity(n * p);
                let mut response = Vec::with_capacity(n);
                let mut z = vec![0.0; p];
                for _ in 0..n {
                    z[0] = 1.0;
                    for zi in z.iter_mut().skip(1) {
                        *zi = StandardNormal.sample(rng);
                    }
                    response.push(self.sample_response(theta, &z, rng));
                    design.extend_from_slice(&z);
                }
                Dataset::from_design(response, design, p)
            }
            _ => Dataset::scalar((0..n).map(|_| self.sample_response(theta, &[], rng)).collect()),
        }
    }
}

fn ols(data: &Dataset, p: usize) -> Result<Vec<f64>> {
    let n = data.len();
    if n == 0 {
        return Err(Error::EmptyData);
    }
    let x = DMatrix::from_row_slice(n, p, &data.design);
    let y = DVector::from_column_slice(data.response());
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * &y;
    let beta = xtx
        .cholesky()
        .map(|c| c.solve(&xty))
        .ok_or_else(|| Error::InvalidModel("design matrix is rank deficient".into()))?;
    let resid = y - x * &beta;
    let sigma = (resid.norm_squared() / n as f64).sqrt();
    let mut theta: Vec<f64> = beta.iter().copied().collect();
    theta.push(sigma);
    Ok(theta)
}

/// Per-coordinate prior component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoordPrior {
    /// Flat over the coordinate's range in Θ.
    Uniform,
    Gaussian {
        mean: f64,
        sd: f64,
    },
}

/// Product prior over Θ; each coordinate is uniform or Gaussian (truncated to Θ).
#[derive(Debug, Clone, PartialEq)]
pub struct Prior {
    coords: Vec<CoordPrior>,
    support: Bounds,
}

impl Prior {
    pub fn new(coords: Vec<CoordPrior>, support: Bounds) -> Result<Self> {
        if coords.len() != support.dim() {
            return Err(Error::InvalidPrior("prior and domain dimensions differ".into()));
        }
        for c in &coords {
            if let CoordPrior::Gaussian { mean, sd } = *c {
                if !(sd > 0.0 && sd.is_finite() && mean.is_finite()) {
                    return Err(Error::InvalidPrior(format!("invalid Gaussian ({mean}, {sd})")));
                }
            }
        }
        Ok(Self { coords, support })
    }

    pub fn uniform(support: Bounds) -> Self {
        let coords = vec![CoordPrior::Uniform; support.dim()];
        Self { coords, support }
    }

    pub fn gaussian(means: &[f64], sds: &[f64], support: Bounds) -> Result<Self> {
        if means.len() != sds.len() {
            return Err(Error::InvalidPrior("means and sds differ in length".into()));
        }
        let coords = means
            .iter()
            .zip(sds)
            .map(|(&mean, &sd)| CoordPrior::Gaussian { mean, sd })
            .collect();
        Self::new(coords, support)
    }

    pub fn coords(&self) -> &[CoordPrior] {
        &self.coords
    }

    pub fn support(&self) -> &Bounds {
        &self.support
    }

    pub fn is_uniform(&self) -> bool {
        self.coords.iter().all(|c| matches!(c, CoordPrior::Uniform))
    }

    /// log π(θ), with the uniform part normalized over the box and the
    /// Gaussian part normalized over the real line.
    pub fn log_prior(&self, theta: &[f64]) -> Result<f64> {
        if !self.support.contains(theta) {
            return Err(Error::Domain { theta: theta.to_vec() });
        }
        Ok(self.log_prior_unchecked(theta))
    }

    pub(crate) fn log_prior_unchecked(&self, theta: &[f64]) -> f64 {
        const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
        self.coords
            .iter()
            .enumerate()
            .map(|(i, c)| match *c {
                CoordPrior::Uniform => -self.support.width(i).ln(),
                CoordPrior::Gaussian { mean, sd } => {
                    let r = (theta[i] - mean) / sd;
                    -0.5 * r * r - sd.ln() - HALF_LN_2PI
                }
            })
            .sum()
    }

    pub fn grad_log_prior(&self, theta: &[f64]) -> Result<Vec<f64>> {
        if !self.support.contains(theta) {
            return Err(Error::Domain { theta: theta.to_vec() });
        }
        let mut g = vec![0.0; theta.len()];
        self.add_grad(theta, &mut g);
        Ok(g)
    }

    pub(crate) fn add_grad(&self, theta: &[f64], out: &mut [f64]) {
        for (i, c) in self.coords.iter().enumerate() {
            if let CoordPrior::Gaussian { mean, sd } = *c {
                out[i] -= (theta[i] - mean) / (sd * sd);
            }
        }
    }

    /// A draw from the prior restricted to Θ (rejection, then clamping).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.coords.len())
            .map(|i| {
                let (lo, hi) = (self.support.lower[i], self.support.upper[i]);
                match self.coords[i] {
                    CoordPrior::Uniform => rng.random_range(lo..hi),
                    CoordPrior::Gaussian { mean, sd } => {
                        for _ in 0..100 {
                            let e: f64 = StandardNormal.sample(rng);
                            let v = mean + sd * e;
                            if v > lo && v < hi {
                                return v;
                            }
                        }
                        mean.clamp(lo, hi)
                    }
                }
            })
            .collect()
    }

    /// Default reference point of the prior alone: Gaussian means, box centers.
    pub fn center(&self) -> Vec<f64> {
        self.coords
            .iter()
            .enumerate()
            .map(|(i, c)| match *c {
                CoordPrior::Uniform => 0.5 * (self.support.lower[i] + self.support.upper[i]),
                CoordPrior::Gaussian { mean, .. } => mean,
            })
            .collect()
    }
}

/// The fixed point θ′ that increments are measured against.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePoint(Vec<f64>);

impl ReferencePoint {
    /// Requires θ′ strictly inside Θ.
    pub fn new(theta_prime: Vec<f64>, domain: &Bounds) -> Result<Self> {
        if !domain.contains_strictly(&theta_prime) {
            return Err(Error::Domain { theta: theta_prime });
        }
        Ok(Self(theta_prime))
    }

    /// Moves `theta` strictly inside Θ (by at most 1e-6 of the width) first.
    pub fn inside(mut theta: Vec<f64>, domain: &Bounds) -> Result<Self> {
        for (i, t) in theta.iter_mut().enumerate() {
            let margin = 1e-6 * domain.width(i);
            *t = t.clamp(domain.lower[i] + margin, domain.upper[i] - margin);
        }
        Self::new(theta, domain)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Median with the average of the two central order statistics for even
/// lengths.
pub fn median(v: &[f64]) -> f64 {
    assert!(!v.is_empty(), "median of an empty slice");
    let mut w = v.to_vec();
    median_in_place(&mut w)
}

pub(crate) fn median_in_place(w: &mut [f64]) -> f64 {
    let k = w.len();
    let mid = k / 2;
    let (lower, m, _) = w.select_nth_unstable_by(mid, f64::total_cmp);
    let m = *m;
    if k % 2 == 1 {
        m
    } else {
        let below = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (below + m)
    }
}
