//! Box-constrained maximization of a log density.
//!
//! Differentiable targets use projected BFGS with Armijo backtracking;
//! others fall back to a compass search.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{LogDensity, RobustPosterior};
use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct MapOptions {
    /// Stop when the projected gradient's largest entry is below this.
    pub gtol: f64,
    pub max_iter: usize,
}

impl Default for MapOptions {
    fn default() -> Self {
        Self {
            gtol: 1e-8,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapResult {
    pub theta: Vec<f64>,
    pub log_density: f64,
    /// Whether the stopping tolerance was reached from the best start.
    pub converged: bool,
    /// False when no iterate improved on the best start; `theta` is then that
    /// start and should be treated with suspicion.
    pub improved: bool,
}

/// Runs the optimizer from every start and keeps the best end point.
pub fn maximize<T: LogDensity + ?Sized>(target: &T, starts: &[Vec<f64>], options: &MapOptions) -> Result<MapResult> {
    let mut best: Option<MapResult> = None;
    let mut best_start = f64::NEG_INFINITY;
    for start in starts {
        let mut x = start.clone();
        target.bounds().clamp(&mut x);
        let f0 = match target.log_density(&x) {
            Ok(v) if v.is_finite() => v,
            _ => continue,
        };
        best_start = best_start.max(f0);
        let r = if target.differentiable() {
            bfgs(target, x, options)?
        } else {
            compass(target, x, f0, options)?
        };
        if best.as_ref().is_none_or(|b| r.log_density > b.log_density) {
            best = Some(r);
        }
    }
    let mut best =
        best.ok_or_else(|| crate::Error::InvalidModel("no starting point has a finite log density".into()))?;
    best.improved = best.log_density > best_start;
    if !best.improved {
        log::warn!("MAP search did not improve on any starting point");
    }
    Ok(best)
}

fn free_mask<T: LogDensity + ?Sized>(target: &T, x: &[f64], g: &[f64]) -> Vec<bool> {
    let b = target.bounds();
    x.iter()
        .zip(g)
        .enumerate()
        .map(|(i, (&xi, &gi))| !((xi <= b.lower[i] && gi < 0.0) || (xi >= b.upper[i] && gi > 0.0)))
        .collect()
}

fn bfgs<T: LogDensity + ?Sized>(target: &T, mut x: Vec<f64>, options: &MapOptions) -> Result<MapResult> {
    let d = x.len();
    let (mut f, mut g) = target.value_and_grad(&x)?;
    // Inverse Hessian of −f.
    let mut h = identity(d);
    let mut scaled = false;
    let mut converged = false;
    for _ in 0..options.max_iter {
        let free = free_mask(target, &x, &g);
        let pg: Vec<f64> = g
            .iter()
            .zip(&free)
            .map(|(&gi, &fr)| if fr { gi } else { 0.0 })
            .collect();
        let gmax = pg.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gmax <= options.gtol {
            converged = true;
            break;
        }
        let mut dir = mat_vec(&h, &pg);
        for (di, &fr) in dir.iter_mut().zip(&free) {
            if !fr {
                *di = 0.0;
            }
        }
        if dot(&dir, &pg) <= 0.0 {
            h = identity(d);
            scaled = false;
            dir = pg.clone();
        }
        if !scaled {
            // Unit-length first step; rescaled after the first curvature pair.
            let norm = dot(&dir, &dir).sqrt();
            for di in dir.iter_mut() {
                *di /= norm;
            }
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut xn: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
            target.bounds().clamp(&mut xn);
            let step: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            if step.iter().all(|s| *s == 0.0) {
                break;
            }
            if let Ok((fnew, gnew)) = target.value_and_grad(&xn) {
                if fnew.is_finite() && fnew >= f + 1e-4 * dot(&g, &step) {
                    accepted = Some((xn, fnew, gnew, step));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((xn, fnew, gnew, s)) = accepted else {
            if scaled {
                h = identity(d);
                scaled = false;
                continue;
            }
            break;
        };
        // Curvature pair for the minimization of −f.
        let y: Vec<f64> = g.iter().zip(&gnew).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if !scaled {
                let gamma = sy / dot(&y, &y);
                h = identity(d);
                for i in 0..d {
                    h[i * d + i] = gamma;
                }
                scaled = true;
            }
            bfgs_update(&mut h, &s, &y, sy);
        }
        let small = s.iter().zip(&x).all(|(si, xi)| si.abs() <= 1e-14 * (1.0 + xi.abs()));
        x = xn;
        f = fnew;
        g = gnew;
        if small {
            break;
        }
    }
    Ok(MapResult {
        theta: x,
        log_density: f,
        converged,
        improved: true,
    })
}

fn compass<T: LogDensity + ?Sized>(target: &T, mut x: Vec<f64>, mut f: f64, options: &MapOptions) -> Result<MapResult> {
    let b = target.bounds();
    let mut steps: Vec<f64> = (0..x.len()).map(|i| 0.05 * b.width(i)).collect();
    let mut iterations = 0;
    while iterations < 50 * options.max_iter {
        iterations += 1;
        let mut moved = false;
        for i in 0..x.len() {
            for sign in [1.0, -1.0] {
                let mut xn = x.clone();
                xn[i] = (xn[i] + sign * steps[i]).clamp(b.lower[i], b.upper[i]);
                if let Ok(v) = target.log_density(&xn) {
                    if v > f {
                        x = xn;
                        f = v;
                        moved = true;
                        break;
                    }
                }
            }
        }
        if !moved {
            for s in steps.iter_mut() {
                *s *= 0.5;
            }
            if steps.iter().zip(&x).all(|(s, xi)| *s <= 1e-12 * (1.0 + xi.abs())) {
                return Ok(MapResult {
                    theta: x,
                    log_density: f,
                    converged: true,
                    improved: true,
                });
            }
        }
    }
    Ok(MapResult {
        theta: x,
        log_density: f,
        converged: false,
        improved: true,
    })
}

fn identity(d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        m[i * d + i] = 1.0;
    }
    m
}

fn mat_vec(m: &[f64], v: &[f64]) -> Vec<f64> {
    let d = v.len();
    (0..d).map(|i| dot(&m[i * d..(i + 1) * d], v)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// H ← (I − ρsyᵀ)H(I − ρysᵀ) + ρssᵀ with ρ = 1/sᵀy.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let d = s.len();
    let r = 1.0 / sy;
    let hy = mat_vec(h, y);
    let yhy = dot(y, &hy);
    for i in 0..d {
        for j in 0..d {
            h[i * d + j] += -r * (s[i] * hy[j] + hy[i] * s[j]) + (r * r * yhy + r) * s[i] * s[j];
        }
    }
}

impl RobustPosterior {
    /// MAP estimate from the robust pilot, the closed-form MLE and
    /// `restarts` prior draws. The gradient tolerance scales with N_eff.
    pub fn map_estimate(&self, restarts: usize, seed: u64) -> Result<MapResult> {
        let mut starts = vec![self.pilot().to_vec()];
        if let Ok(mle) = self.family().closed_form_mle(self.blocked_data()) {
            starts.push(mle);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..restarts {
            starts.push(self.prior().sample(&mut rng));
        }
        let options = MapOptions {
            gtol: 1e-7 * self.n_effective() as f64,
            ..MapOptions::default()
        };
        maximize(self, &starts, &options)
    }

    /// θ̃_N: the maximizer of −L̂ alone (flat prior).
    pub fn theta_tilde(&self, restarts: usize, seed: u64) -> Result<MapResult> {
        let flat = self.with_prior(crate::models::Prior::uniform(self.family().domain().clone()))?;
        flat.map_estimate(restarts, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Bounds;
    use crate::Error;

    struct Quadratic {
        bounds: Bounds,
        center: Vec<f64>,
        prec: Vec<f64>,
    }

    impl LogDensity for Quadratic {
        fn bounds(&self) -> &Bounds {
            &self.bounds
        }

        fn log_density(&self, theta: &[f64]) -> Result<f64> {
            if !self.bounds.contains(theta) {
                return Err(Error::Domain { theta: theta.to_vec() });
            }
            Ok(-0.5
                * theta
                    .iter()
                    .zip(&self.center)
                    .zip(&self.prec)
                    .map(|((t, c), p)| p * (t - c) * (t - c))
                    .sum::<f64>())
        }

        fn value_and_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
            let v = self.log_density(theta)?;
            let g = theta
                .iter()
                .zip(&self.center)
                .zip(&self.prec)
                .map(|((t, c), p)| -p * (t - c))
                .collect();
            Ok((v, g))
        }
    }

    #[test]
    fn finds_interior_and_boundary_optima() {
        let q = Quadratic {
            bounds: Bounds::new(vec![-5.0, -5.0, 0.0], vec![5.0, 5.0, 1.0]).unwrap(),
            center: vec![1.0, -2.0, 3.0],
            prec: vec![1000.0, 1.0, 10.0],
        };
        let r = maximize(&q, &[vec![0.0, 0.0, 0.5]], &MapOptions::default()).unwrap();
        assert!(r.converged);
        assert!((r.theta[0] - 1.0).abs() < 1e-9);
        assert!((r.theta[1] + 2.0).abs() < 1e-7);
        assert_eq!(r.theta[2], 1.0);
    }
}
