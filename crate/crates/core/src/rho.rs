//! Convex, even losses ρ used to aggregate block averages.
//!
//! Three variants are provided:
//!
//! * `Absolute`: ρ(z) = |z|, which turns the aggregation into a plain median.
//! * `Huber` with breakpoint `b`: z²/2 on |z| ≤ b and b(|z| − b/2) outside.
//! * `SmoothedHuber`: the Huber loss convolved with the compactly supported
//!   bump ψ(t) = C·exp(−1/(w² − t²)) on |t| < w.
//!
//! For the smoothed loss, ρ″ equals 1 on |z| ≤ b − w and 0 on |z| ≥ b + w.
//! On the transition band it equals 1 − Ψ(|z| − b), where Ψ is the CDF of ψ.
//! That band is tabulated once at construction and interpolated with cubic
//! Hermite pieces; ρ′ and ρ are the exact first and second antiderivatives of
//! the interpolant, so the three functions are mutually consistent to
//! rounding.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

/// Number of Hermite segments covering the smoothed transition band.
const SMOOTH_SEGMENTS: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RhoKind {
    Absolute,
    Huber,
    SmoothedHuber,
}

impl std::str::FromStr for RhoKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "absolute" | "abs" => Ok(RhoKind::Absolute),
            "huber" => Ok(RhoKind::Huber),
            "smoothed-huber" | "smoothed_huber" => Ok(RhoKind::SmoothedHuber),
            other => Err(Error::InvalidLoss(format!("unknown loss '{other}'"))),
        }
    }
}

impl std::fmt::Display for RhoKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RhoKind::Absolute => "absolute",
            RhoKind::Huber => "huber",
            RhoKind::SmoothedHuber => "smoothed-huber",
        })
    }
}

/// A loss function together with its parameters.
///
/// Cloning is cheap; the smoothed table is shared.
#[derive(Debug, Clone)]
pub struct RhoSpec {
    kind: RhoKind,
    breakpoint: f64,
    mollifier_halfwidth: f64,
    quadrature_order: usize,
    mollifier_norm_constant: f64,
    table: Option<Arc<SmoothTable>>,
}

impl Default for RhoSpec {
    fn default() -> Self {
        Self::huber(1.5).expect("default Huber breakpoint is valid")
    }
}

impl RhoSpec {
    pub const DEFAULT_BREAKPOINT: f64 = 1.5;
    pub const DEFAULT_HALFWIDTH: f64 = 0.5;
    pub const DEFAULT_QUADRATURE_ORDER: usize = 64;

    pub fn absolute() -> Self {
        Self {
            kind: RhoKind::Absolute,
            breakpoint: Self::DEFAULT_BREAKPOINT,
            mollifier_halfwidth: Self::DEFAULT_HALFWIDTH,
            quadrature_order: Self::DEFAULT_QUADRATURE_ORDER,
            mollifier_norm_constant: 1.0,
            table: None,
        }
    }

    pub fn huber(breakpoint: f64) -> Result<Self> {
        if !(breakpoint.is_finite() && breakpoint > 0.0) {
            return Err(Error::InvalidLoss(format!(
                "Huber breakpoint must be positive, got {breakpoint}"
            )));
        }
        Ok(Self {
            kind: RhoKind::Huber,
            breakpoint,
            ..Self::absolute()
        })
    }

    /// Huber loss of the given breakpoint smoothed by a bump of half-width
    /// `halfwidth`. Requires `breakpoint - halfwidth >= 1` and
    /// `breakpoint + halfwidth <= 2`.
    pub fn smoothed_huber(breakpoint: f64, halfwidth: f64, quadrature_order: usize) -> Result<Self> {
        if !(breakpoint.is_finite() && halfwidth.is_finite() && halfwidth > 0.0) {
            return Err(Error::InvalidLoss("non-finite smoothing parameters".into()));
        }
        const SLACK: f64 = 1e-12;
        if breakpoint - halfwidth < 1.0 - SLACK || breakpoint + halfwidth > 2.0 + SLACK {
            return Err(Error::InvalidLoss(format!(
                "need breakpoint - halfwidth >= 1 and breakpoint + halfwidth <= 2 \
                 (got {breakpoint} and {halfwidth})"
            )));
        }
        if quadrature_order == 0 {
            return Err(Error::InvalidLoss("quadrature order must be positive".into()));
        }
        let table = SmoothTable::build(breakpoint, halfwidth, quadrature_order);
        let c = table.norm_constant;
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidLoss(format!("mollifier normalization failed: C = {c}")));
        }
        Ok(Self {
            kind: RhoKind::SmoothedHuber,
            breakpoint,
            mollifier_halfwidth: halfwidth,
            quadrature_order,
            mollifier_norm_constant: c,
            table: Some(Arc::new(table)),
        })
    }

    /// The loss named by `kind` with default parameters.
    pub fn from_kind(kind: RhoKind) -> Result<Self> {
        match kind {
            RhoKind::Absolute => Ok(Self::absolute()),
            RhoKind::Huber => Self::huber(Self::DEFAULT_BREAKPOINT),
            RhoKind::SmoothedHuber => Self::smoothed_huber(
                Self::DEFAULT_BREAKPOINT,
                Self::DEFAULT_HALFWIDTH,
                Self::DEFAULT_QUADRATURE_ORDER,
            ),
        }
    }

    pub fn kind(&self) -> RhoKind {
        self.kind
    }

    pub fn breakpoint(&self) -> f64 {
        self.breakpoint
    }

    pub fn mollifier_halfwidth(&self) -> f64 {
        self.mollifier_halfwidth
    }

    pub fn quadrature_order(&self) -> usize {
        self.quadrature_order
    }

    pub fn mollifier_norm_constant(&self) -> f64 {
        self.mollifier_norm_constant
    }

    /// ρ(z).
    pub fn value(&self, z: f64) -> f64 {
        let a = z.abs();
        match self.kind {
            RhoKind::Absolute => a,
            RhoKind::Huber => {
                let b = self.breakpoint;
                if a <= b {
                    0.5 * z * z
                } else {
                    b * (a - 0.5 * b)
                }
            }
            RhoKind::SmoothedHuber => self.table().value(a),
        }
    }

    /// ρ′(z). For the absolute loss the subgradient 0 is selected at z = 0.
    pub fn deriv1(&self, z: f64) -> f64 {
        match self.kind {
            RhoKind::Absolute => {
                if z > 0.0 {
                    1.0
                } else if z < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            RhoKind::Huber => z.clamp(-self.breakpoint, self.breakpoint),
            RhoKind::SmoothedHuber => {
                let d = self.table().deriv1(z.abs());
                if z < 0.0 {
                    -d
                } else {
                    d
                }
            }
        }
    }

    /// ρ″(z); undefined for the absolute loss.
    pub fn deriv2(&self, z: f64) -> Result<f64> {
        match self.kind {
            RhoKind::Absolute => Err(Error::UnsupportedLoss),
            _ => Ok(self.curvature(z)),
        }
    }

    /// ρ″ with 0 returned for the absolute loss; used where the absolute loss
    /// is already excluded or flat weights are the desired fallback.
    pub(crate) fn curvature(&self, z: f64) -> f64 {
        match self.kind {
            RhoKind::Absolute => 0.0,
            RhoKind::Huber => {
                if z.abs() <= self.breakpoint {
                    1.0
                } else {
                    0.0
                }
            }
            RhoKind::SmoothedHuber => self.table().deriv2(z.abs()),
        }
    }

    /// The constant value of |ρ′| on the saturated region.
    pub fn saturation(&self) -> f64 {
        match self.kind {
            RhoKind::Absolute => 1.0,
            RhoKind::Huber => self.breakpoint,
            RhoKind::SmoothedHuber => self.table().outer_slope,
        }
    }

    fn table(&self) -> &SmoothTable {
        self.table.as_deref().expect("smoothed Huber always carries its table")
    }
}

/// Tabulated transition band of the smoothed Huber loss.
#[derive(Debug)]
struct SmoothTable {
    start: f64,
    end: f64,
    step: f64,
    /// Hermite cubic coefficients of ρ″ per segment, in the local variable.
    coeffs: Vec<[f64; 4]>,
    /// ρ′ at the left end of each segment.
    d1_left: Vec<f64>,
    /// ρ at the left end of each segment.
    val_left: Vec<f64>,
    /// ρ(0) = E[t²]/2 under the mollifier.
    rho_zero: f64,
    outer_slope: f64,
    outer_value: f64,
    norm_constant: f64,
}

impl SmoothTable {
    fn build(b: f64, w: f64, order: usize) -> Self {
        let rule = GaussLegendre::new(order);
        let bump = |t: f64| {
            let s = w * w - t * t;
            if s <= 0.0 {
                0.0
            } else {
                (-1.0 / s).exp()
            }
        };

        // The mollifier CDF Ψ(s) on the segment grid of [-w, w], accumulated
        // segment by segment; the grid matches the transition band shifted by b.
        let m = SMOOTH_SEGMENTS;
        let step = 2.0 * w / m as f64;
        let mut cdf = vec![0.0; m + 1];
        let mut second_moment = 0.0;
        for i in 0..m {
            let lo = -w + step * i as f64;
            let hi = lo + step;
            cdf[i + 1] = cdf[i] + rule.integrate(lo, hi, bump);
            second_moment += rule.integrate(lo, hi, |t| t * t * bump(t));
        }
        let total = cdf[m];
        let norm_constant = 1.0 / total;
        for c in &mut cdf {
            *c *= norm_constant;
        }
        cdf[m] = 1.0;
        let rho_zero = 0.5 * second_moment * norm_constant;

        // ρ″(z) = 1 − Ψ(z − b) and ρ‴(z) = −ψ(z − b) on [b − w, b + w].
        let start = b - w;
        let f: Vec<f64> = cdf.iter().map(|c| 1.0 - c).collect();
        let d: Vec<f64> = (0..=m).map(|i| -norm_constant * bump(-w + step * i as f64)).collect();

        let mut coeffs = Vec::with_capacity(m);
        let mut d1_left = Vec::with_capacity(m + 1);
        let mut val_left = Vec::with_capacity(m + 1);
        let mut d1 = start;
        let mut val = rho_zero + 0.5 * start * start;
        for i in 0..m {
            let h = step;
            let slope = (f[i + 1] - f[i]) / h;
            let a0 = f[i];
            let a1 = d[i];
            let a2 = (3.0 * slope - 2.0 * d[i] - d[i + 1]) / h;
            let a3 = (d[i] + d[i + 1] - 2.0 * slope) / (h * h);
            let c = [a0, a1, a2, a3];
            d1_left.push(d1);
            val_left.push(val);
            let (i1, i2) = antiderivatives(&c, h);
            val += d1 * h + i2;
            d1 += i1;
            coeffs.push(c);
        }
        d1_left.push(d1);
        val_left.push(val);

        Self {
            start,
            end: b + w,
            step,
            coeffs,
            d1_left,
            val_left,
            rho_zero,
            outer_slope: d1,
            outer_value: val,
            norm_constant,
        }
    }

    fn locate(&self, a: f64) -> (usize, f64) {
        let pos = (a - self.start) / self.step;
        let i = (pos.floor() as usize).min(self.coeffs.len() - 1);
        (i, a - (self.start + self.step * i as f64))
    }

    fn value(&self, a: f64) -> f64 {
        if a <= self.start {
            self.rho_zero + 0.5 * a * a
        } else if a >= self.end {
            self.outer_value + self.outer_slope * (a - self.end)
        } else {
            let (i, s) = self.locate(a);
            let (_, i2) = antiderivatives(&self.coeffs[i], s);
            self.val_left[i] + self.d1_left[i] * s + i2
        }
    }

    fn deriv1(&self, a: f64) -> f64 {
        if a <= self.start {
            a
        } else if a >= self.end {
            self.outer_slope
        } else {
            let (i, s) = self.locate(a);
            let (i1, _) = antiderivatives(&self.coeffs[i], s);
            self.d1_left[i] + i1
        }
    }

    fn deriv2(&self, a: f64) -> f64 {
        if a <= self.start {
            1.0
        } else if a >= self.end {
            0.0
        } else {
            let (i, s) = self.locate(a);
            let c = &self.coeffs[i];
            (c[0] + s * (c[1] + s * (c[2] + s * c[3]))).clamp(0.0, 1.0)
        }
    }
}

/// First and second antiderivatives (vanishing at 0) of a cubic, at `s`.
fn antiderivatives(c: &[f64; 4], s: f64) -> (f64, f64) {
    let i1 = s * (c[0] + s * (c[1] / 2.0 + s * (c[2] / 3.0 + s * c[3] / 4.0)));
    let i2 = s * s * (c[0] / 2.0 + s * (c[1] / 6.0 + s * (c[2] / 12.0 + s * c[3] / 20.0)));
    (i1, i2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn smooth() -> RhoSpec {
        RhoSpec::from_kind(RhoKind::SmoothedHuber).unwrap()
    }

    fn all_specs() -> Vec<RhoSpec> {
        vec![RhoSpec::absolute(), RhoSpec::default(), smooth()]
    }

    /// Composite Simpson integral, independent of the Gauss–Legendre code.
    fn simpson<F: Fn(f64) -> f64>(a: f64, b: f64, n: usize, f: F) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + h * i as f64;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    fn raw_bump(t: f64) -> f64 {
        let s = 0.25 - t * t;
        if s <= 0.0 {
            0.0
        } else {
            (-1.0 / s).exp()
        }
    }

    fn huber_h(z: f64) -> f64 {
        if z.abs() <= 1.5 {
            z * z / 2.0
        } else {
            1.5 * (z.abs() - 0.75)
        }
    }

    /// Direct numeric convolution (H ⋆ ψ)(z).
    fn direct_convolution(z: f64) -> f64 {
        let norm = simpson(-0.5, 0.5, 200_000, raw_bump);
        simpson(-0.5, 0.5, 200_000, |t| huber_h(z - t) * raw_bump(t)) / norm
    }

    #[test]
    fn huber_values_on_both_branches() {
        let h = RhoSpec::default();
        assert!((h.value(1.0) - 0.5).abs() < 1e-15);
        assert!((h.value(2.0) - 1.875).abs() < 1e-15);
        assert!((h.deriv1(0.7) - 0.7).abs() < 1e-15);
        assert_eq!(h.deriv1(5.0), 1.5);
        assert_eq!(h.deriv2(0.0).unwrap(), 1.0);
        assert_eq!(h.deriv2(3.0).unwrap(), 0.0);
    }

    #[test]
    fn absolute_value_and_subgradient() {
        let a = RhoSpec::absolute();
        assert_eq!(a.value(-4.0), 4.0);
        assert_eq!(a.deriv1(0.0), 0.0);
        assert_eq!(a.deriv1(-0.1), -1.0);
        assert!(matches!(a.deriv2(1.0), Err(Error::UnsupportedLoss)));
    }

    #[test]
    fn smoothed_value_at_zero_matches_direct_convolution() {
        let s = smooth();
        let direct = direct_convolution(0.0);
        assert!((s.value(0.0) - direct).abs() < 1e-8, "{} vs {direct}", s.value(0.0));
    }

    #[test]
    fn smoothed_matches_direct_convolution_across_band() {
        let s = smooth();
        for z in [0.3, 1.0, 1.2, 1.5, 1.77, 1.99, 2.5, -1.4] {
            let direct = direct_convolution(z);
            assert!((s.value(z) - direct).abs() < 1e-8, "z={z}: {} vs {direct}", s.value(z));
        }
    }

    #[test]
    fn smoothed_identity_and_saturation_regions() {
        let s = smooth();
        for z in [-1.0, -0.5, 0.0, 0.25, 1.0] {
            assert!((s.deriv1(z) - z).abs() < 1e-15);
            assert_eq!(s.deriv2(z).unwrap(), 1.0);
        }
        for z in [2.0, 2.5, 10.0] {
            assert!((s.deriv1(z) - 1.5).abs() < 1e-10);
            assert!((s.deriv1(-z) + 1.5).abs() < 1e-10);
            assert_eq!(s.deriv2(z).unwrap(), 0.0);
        }
        assert!(s.mollifier_norm_constant() > 0.0 && s.mollifier_norm_constant().is_finite());
    }

    #[test]
    fn smoothed_second_derivative_integrates_to_first() {
        let s = smooth();
        let v = s.deriv2(1.99).unwrap();
        assert!((0.0..=1.0).contains(&v));
        let integral = simpson(-2.0, 2.0, 400_000, |z| s.deriv2(z).unwrap());
        assert!((integral - (s.deriv1(2.0) - s.deriv1(-2.0))).abs() < 1e-6);
    }

    #[test]
    fn rejects_invalid_smoothing_parameters() {
        assert!(RhoSpec::smoothed_huber(1.5, 0.6, 64).is_err());
        assert!(RhoSpec::smoothed_huber(1.2, 0.5, 64).is_err());
        assert!(RhoSpec::smoothed_huber(1.5, 0.5, 0).is_err());
        assert!(RhoSpec::huber(-1.0).is_err());
        assert!(RhoSpec::smoothed_huber(1.25, 0.25, 32).is_ok());
    }

    #[test]
    fn evenness_on_random_points() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for spec in all_specs() {
            for _ in 0..1000 {
                let z: f64 = rng.random_range(-10.0..10.0);
                assert_eq!(spec.value(z), spec.value(-z));
                assert_eq!(spec.deriv1(z), -spec.deriv1(-z));
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let grid: Vec<f64> = (0..400).map(|i| -4.0 + 0.02 * i as f64 + 0.0037).collect();
        for spec in all_specs() {
            for &z in &grid {
                let h = 1e-6;
                // Skip stencils straddling a kink of the piecewise formulas.
                let kinks: &[f64] = match spec.kind() {
                    RhoKind::Absolute => &[0.0],
                    RhoKind::Huber => &[1.5],
                    RhoKind::SmoothedHuber => &[],
                };
                if kinks.iter().any(|k| (z.abs() - k).abs() < 1e-4) {
                    continue;
                }
                let fd1 = (spec.value(z + h) - spec.value(z - h)) / (2.0 * h);
                let d1 = spec.deriv1(z);
                assert!((fd1 - d1).abs() <= 1e-6 * d1.abs().max(1.0), "{:?} z={z}", spec.kind());
                if spec.kind() != RhoKind::Absolute {
                    let fd2 = (spec.deriv1(z + h) - spec.deriv1(z - h)) / (2.0 * h);
                    let d2 = spec.deriv2(z).unwrap();
                    assert!((fd2 - d2).abs() <= 1e-6 * d2.abs().max(1.0), "{:?} z={z}", spec.kind());
                }
            }
        }
    }

    #[test]
    fn score_is_monotone_and_residual_is_nondecreasing() {
        for spec in all_specs() {
            let mut prev = f64::NEG_INFINITY;
            for i in 0..=8000 {
                let z = -4.0 + 0.001 * i as f64;
                let d = spec.deriv1(z);
                assert!(d >= prev, "{:?} not monotone at {z}", spec.kind());
                prev = d;
            }
            if spec.kind() != RhoKind::Absolute {
                let mut prev = f64::NEG_INFINITY;
                for i in 0..=4000 {
                    let z = 0.001 * i as f64;
                    let g = z - spec.deriv1(z);
                    assert!(g >= prev - 1e-14, "{:?} at {z}", spec.kind());
                    prev = g;
                }
            }
        }
    }

    proptest! {
        #[test]
        fn convexity(z1 in -6.0f64..6.0, dz in 0.0f64..6.0, lam in 0.0f64..1.0) {
            let z2 = z1 + dz;
            for spec in all_specs() {
                let lhs = spec.value(lam * z1 + (1.0 - lam) * z2);
                let rhs = lam * spec.value(z1) + (1.0 - lam) * spec.value(z2);
                prop_assert!(lhs <= rhs + 1e-12);
            }
        }
    }
}
