//! Block partitions and the one-dimensional median-of-means M-estimator.
//!
//! L̂(θ) is the root z of Σ_j ρ′(√n(L̄_j(θ) − z)/Δ_n) = 0, where L̄_j(θ) is
//! the average increment over block j. Its gradient follows from the implicit
//! function theorem: ∇L̂ = Σ_j ρ″(u_j)∇L̄_j / Σ_j ρ″(u_j).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::models::{median_in_place, Dataset, LikelihoodFamily, ReferencePoint};
use crate::rho::{RhoKind, RhoSpec};

/// Consistency factor turning a MAD into a normal standard deviation.
pub const MAD_TO_SD: f64 = 1.4826;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionScheme {
    Contiguous,
    Shuffled,
}

impl std::str::FromStr for PartitionScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "contiguous" => Ok(Self::Contiguous),
            "shuffled" => Ok(Self::Shuffled),
            other => Err(Error::Config(format!("unknown partition scheme '{other}'"))),
        }
    }
}

impl std::fmt::Display for PartitionScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Contiguous => "contiguous",
            Self::Shuffled => "shuffled",
        })
    }
}

/// k disjoint blocks of n indices each; the N − k·n leftover indices are
/// dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    k: usize,
    n: usize,
    indices: Vec<usize>,
}

impl BlockPartition {
    pub fn k(&self) -> usize {
        self.k
    }

    /// Block size.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of observations actually used, k·n.
    pub fn used(&self) -> usize {
        self.k * self.n
    }

    pub fn block(&self, j: usize) -> &[usize] {
        &self.indices[j * self.n..(j + 1) * self.n]
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[usize]> {
        self.indices.chunks_exact(self.n)
    }

    /// All used indices in block order.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// The contiguous partition of the same shape, for data already laid
    /// out in block order.
    pub(crate) fn contiguous_like(&self) -> Self {
        Self {
            k: self.k,
            n: self.n,
            indices: (0..self.used()).collect(),
        }
    }
}

/// Splits `0..big_n` into `k` blocks of size ⌊N/k⌋.
pub fn partition_blocks(big_n: usize, k: usize, scheme: PartitionScheme, seed: u64) -> Result<BlockPartition> {
    if k < 1 || 2 * k > big_n {
        return Err(Error::InvalidK { k, n: big_n });
    }
    let n = big_n / k;
    let mut order: Vec<usize> = (0..big_n).collect();
    if scheme == PartitionScheme::Shuffled {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    order.truncate(k * n);
    Ok(BlockPartition { k, n, indices: order })
}

/// Δ_n = max(floor, c·n^exponent).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleSchedule {
    pub c: f64,
    pub exponent: f64,
    pub floor: f64,
}

impl Default for ScaleSchedule {
    fn default() -> Self {
        Self {
            c: 1.0,
            exponent: 0.25,
            floor: 1e-8,
        }
    }
}

impl ScaleSchedule {
    pub fn new(c: f64, exponent: f64, floor: f64) -> Result<Self> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::Config(format!(
                "delta constant must be finite and nonnegative, got {c}"
            )));
        }
        if !(exponent > 0.0 && exponent < 0.5) {
            return Err(Error::Config(format!(
                "delta exponent must lie in (0, 1/2), got {exponent}"
            )));
        }
        if !(floor > 0.0 && floor.is_finite()) {
            return Err(Error::Config(format!("delta floor must be positive, got {floor}")));
        }
        Ok(Self { c, exponent, floor })
    }

    pub fn delta(&self, n: usize) -> f64 {
        (self.c * (n as f64).powf(self.exponent)).max(self.floor)
    }

    /// The factor √n/Δ_n applied to centered block averages.
    pub fn standardizer(&self, n: usize) -> f64 {
        (n as f64).sqrt() / self.delta(n)
    }

    /// Calibrates c as 1.4826·MAD of √n·L̄_j(θ_s), where θ_s is `pilot`
    /// pushed at least two asymptotic standard errors away from θ′ in every
    /// coordinate (increments vanish at θ′ itself).
    pub fn calibrate(
        family: &LikelihoodFamily,
        pilot: &[f64],
        theta_prime: &ReferencePoint,
        data: &Dataset,
        partition: &BlockPartition,
        exponent: f64,
        floor: f64,
    ) -> Result<Self> {
        let theta_s = scale_point(family, pilot, theta_prime, data, partition.used())?;
        let mut avgs = block_averages(family, &theta_s, theta_prime, data, partition)?;
        let root_n = (partition.n() as f64).sqrt();
        for a in avgs.iter_mut() {
            *a *= root_n;
        }
        let c = MAD_TO_SD * mad(&mut avgs);
        Self::new(if c.is_finite() { c } else { 0.0 }, exponent, floor)
    }
}

fn scale_point(
    family: &LikelihoodFamily,
    pilot: &[f64],
    theta_prime: &ReferencePoint,
    data: &Dataset,
    n_eff: usize,
) -> Result<Vec<f64>> {
    let tp = theta_prime.as_slice();
    let domain = family.domain();
    let mut at = pilot.to_vec();
    domain.clamp(&mut at);
    let info = family.fisher_information(&at, data)?;
    let mut theta = tp.to_vec();
    for i in 0..theta.len() {
        let ii = info[(i, i)];
        let se = if ii > 0.0 {
            1.0 / (n_eff as f64 * ii).sqrt()
        } else {
            1e-3 * domain.width(i)
        };
        if (pilot[i] - tp[i]).abs() >= 2.0 * se {
            theta[i] = pilot[i];
        } else if tp[i] + 2.0 * se <= domain.upper[i] {
            theta[i] = tp[i] + 2.0 * se;
        } else {
            theta[i] = tp[i] - 2.0 * se;
        }
    }
    domain.clamp(&mut theta);
    Ok(theta)
}

/// Median absolute deviation from the median; reorders `v`.
fn mad(v: &mut [f64]) -> f64 {
    let m = median_in_place(v);
    for x in v.iter_mut() {
        *x = (*x - m).abs();
    }
    median_in_place(v)
}

/// Result of the one-dimensional MOM problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomEstimate {
    pub value: f64,
    pub iterations: usize,
    pub bracket_width: f64,
    /// Share of blocks where ρ″ vanishes at the solution.
    pub flat_fraction: f64,
}

/// L̄_j(θ) for every block j.
pub fn block_averages(
    family: &LikelihoodFamily,
    theta: &[f64],
    theta_prime: &ReferencePoint,
    data: &Dataset,
    partition: &BlockPartition,
) -> Result<Vec<f64>> {
    family.check(theta)?;
    let tp = theta_prime.as_slice();
    let inv_n = 1.0 / partition.n() as f64;
    Ok(partition
        .blocks()
        .map(|block| {
            block
                .iter()
                .map(|&i| family.increment(theta, tp, data.get(i)))
                .sum::<f64>()
                * inv_n
        })
        .collect())
}

/// Block averages together with block-averaged gradients (row-major k×d).
pub(crate) fn block_stats(
    family: &LikelihoodFamily,
    theta: &[f64],
    tp: &[f64],
    data: &Dataset,
    partition: &BlockPartition,
    avgs: &mut Vec<f64>,
    grads: Option<&mut Vec<f64>>,
) {
    let inv_n = 1.0 / partition.n() as f64;
    avgs.clear();
    match grads {
        None => {
            for block in partition.blocks() {
                let s: f64 = block.iter().map(|&i| family.increment(theta, tp, data.get(i))).sum();
                avgs.push(s * inv_n);
            }
        }
        Some(grads) => {
            let d = theta.len();
            grads.clear();
            grads.resize(partition.k() * d, 0.0);
            let mut g = vec![0.0; d];
            for (j, block) in partition.blocks().enumerate() {
                let mut s = 0.0;
                let acc = &mut grads[j * d..(j + 1) * d];
                for &i in block {
                    let x = data.get(i);
                    s += family.increment(theta, tp, x);
                    family.grad_into(theta, x, &mut g);
                    for (a, gi) in acc.iter_mut().zip(&g) {
                        *a += gi;
                    }
                }
                avgs.push(s * inv_n);
                for a in acc.iter_mut() {
                    *a *= inv_n;
                }
            }
        }
    }
}

/// Solves the MOM problem for block averages `avgs` with block size `n`.
pub fn solve_mom(avgs: &[f64], rho: &RhoSpec, n: usize, delta: &ScaleSchedule) -> Result<MomEstimate> {
    if avgs.is_empty() || avgs.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let mut scratch = avgs.to_vec();
    solve_scaled(avgs, rho, delta.standardizer(n), &mut scratch)
}

/// Core solver with an explicit standardizer s = √n/Δ_n; `scratch` must have
/// the length of `avgs` and is overwritten.
pub(crate) fn solve_scaled(avgs: &[f64], rho: &RhoSpec, s: f64, scratch: &mut [f64]) -> Result<MomEstimate> {
    scratch.copy_from_slice(avgs);
    let start = median_in_place(scratch);
    if rho.kind() == RhoKind::Absolute {
        return Ok(MomEstimate {
            value: start,
            iterations: 0,
            bracket_width: 0.0,
            flat_fraction: 1.0,
        });
    }
    let (mut lo, mut hi) = avgs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &a| (l.min(a), h.max(a)));
    if lo == hi {
        return Ok(finish(avgs, rho, s, lo, 0, 0.0));
    }
    let tol = 1e-12_f64.max(4.0 * f64::EPSILON * lo.abs().max(hi.abs()));

    let score = |z: f64| -> (f64, f64) {
        let mut f = 0.0;
        let mut c = 0.0;
        for &a in avgs {
            let u = s * (a - z);
            f += rho.deriv1(u);
            c += rho.curvature(u);
        }
        (f, -s * c)
    };

    let mut z = start;
    let mut iterations = 0;
    while iterations < 200 {
        iterations += 1;
        let (f, df) = score(z);
        if f == 0.0 {
            if df == 0.0 {
                return Ok(flat_zero_set(avgs, rho, s, lo, z, hi, iterations));
            }
            return Ok(finish(avgs, rho, s, z, iterations, hi - lo));
        }
        if f > 0.0 {
            lo = z;
        } else {
            hi = z;
        }
        if hi - lo <= tol {
            break;
        }
        let mut next = 0.5 * (lo + hi);
        if df < 0.0 {
            let newton = z - f / df;
            if newton > lo && newton < hi {
                if (newton - z).abs() <= tol {
                    return Ok(finish(avgs, rho, s, newton, iterations, hi - lo));
                }
                next = newton;
            }
        }
        z = next;
    }
    Ok(finish(avgs, rho, s, 0.5 * (lo + hi), iterations, hi - lo))
}

/// The score vanishes on an interval around `z`: locate both ends by
/// bisection and return the midpoint.
fn flat_zero_set(avgs: &[f64], rho: &RhoSpec, s: f64, lo: f64, z: f64, hi: f64, mut iterations: usize) -> MomEstimate {
    let score = |x: f64| avgs.iter().map(|&a| rho.deriv1(s * (a - x))).sum::<f64>();
    // Left end: sup{x : S(x) > 0} within [lo, z].
    let (mut a, mut b) = (lo, z);
    while b - a > 1e-12_f64.max(4.0 * f64::EPSILON * b.abs()) && iterations < 400 {
        iterations += 1;
        let m = 0.5 * (a + b);
        if score(m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    let left = b;
    let (mut a, mut b) = (z, hi);
    while b - a > 1e-12_f64.max(4.0 * f64::EPSILON * b.abs()) && iterations < 600 {
        iterations += 1;
        let m = 0.5 * (a + b);
        if score(m) < 0.0 {
            b = m;
        } else {
            a = m;
        }
    }
    let right = a;
    finish(avgs, rho, s, 0.5 * (left + right), iterations, right - left)
}

fn finish(avgs: &[f64], rho: &RhoSpec, s: f64, value: f64, iterations: usize, bracket_width: f64) -> MomEstimate {
    let flat = avgs.iter().filter(|&&a| rho.curvature(s * (a - value)) == 0.0).count();
    MomEstimate {
        value,
        iterations,
        bracket_width,
        flat_fraction: flat as f64 / avgs.len() as f64,
    }
}

/// L̂(θ): block averages followed by the MOM solve.
pub fn mom_increment(
    family: &LikelihoodFamily,
    theta: &[f64],
    theta_prime: &ReferencePoint,
    data: &Dataset,
    partition: &BlockPartition,
    rho: &RhoSpec,
    delta: &ScaleSchedule,
) -> Result<MomEstimate> {
    let avgs = block_averages(family, theta, theta_prime, data, partition)?;
    solve_mom(&avgs, rho, partition.n(), delta)
}

/// Implicit-function gradient of L̂ at θ given its solution `estimate`.
#[allow(clippy::too_many_arguments)]
pub fn grad_mom(
    family: &LikelihoodFamily,
    theta: &[f64],
    theta_prime: &ReferencePoint,
    data: &Dataset,
    partition: &BlockPartition,
    rho: &RhoSpec,
    delta: &ScaleSchedule,
    estimate: &MomEstimate,
) -> Result<Vec<f64>> {
    if rho.kind() == RhoKind::Absolute {
        return Err(Error::UnsupportedLoss);
    }
    family.check(theta)?;
    let mut avgs = Vec::new();
    let mut grads = Vec::new();
    block_stats(
        family,
        theta,
        theta_prime.as_slice(),
        data,
        partition,
        &mut avgs,
        Some(&mut grads),
    );
    implicit_gradient(
        &avgs,
        &grads,
        theta.len(),
        rho,
        delta.standardizer(partition.n()),
        estimate.value,
    )
}

pub(crate) fn implicit_gradient(
    avgs: &[f64],
    grads: &[f64],
    d: usize,
    rho: &RhoSpec,
    s: f64,
    value: f64,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; d];
    let mut total = 0.0;
    for (j, &a) in avgs.iter().enumerate() {
        let w = rho.curvature(s * (a - value));
        if w == 0.0 {
            continue;
        }
        total += w;
        for (o, g) in out.iter_mut().zip(&grads[j * d..(j + 1) * d]) {
            *o += w * g;
        }
    }
    if total == 0.0 {
        return Err(Error::FlatScore);
    }
    for o in out.iter_mut() {
        *o /= total;
    }
    Ok(out)
}
