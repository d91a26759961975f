//! Multistart search for critical points of F* in the coordinates
//! (x_1..x_k, t_1..t_{k-1}).
//!
//! F* is constant wherever all atoms are more than 2η apart, so its critical
//! set is degenerate. The census therefore runs on a Morse regularization
//!
//!   F(σ) = F*(σ) − Σ_i G(dist(x_i, ∂Ω)) + Σ_i q(x_i),
//!
//! with q(x) = a·x + xᵀQx drawn from the seed. The boundary term sends F to
//! −∞ at ∂Ω like the collision and weight terms do, so −F is an exhaustion
//! of Σ_k \ Σ_{k−1} and Σ_i (−1)^i c_i equals (−1)^{k−1} χ(config space)/k!
//! for any such q.

use num_rational::BigRational;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{f_star, FormalBarycenter, GCutoff};
use crate::combinatorics::{morse_count_sum, EulerChar};
use crate::domain::{dist, norm4, DomainSpec, Point, Shape};
use crate::error::{invalid, Result};
use crate::linalg::{solve_dense, symmetric_eigen};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CensusConfig {
    pub k: usize,
    pub starts: usize,
    pub seed: u64,
    /// Size of the linear perturbation; defaults to 2/η².
    pub perturbation_scale: Option<f64>,
    pub max_iterations: usize,
}

impl CensusConfig {
    pub fn new(k: usize, starts: usize, seed: u64) -> Self {
        CensusConfig { k, starts, seed, perturbation_scale: None, max_iterations: 200 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Regularization {
    pub linear: Point,
    pub quadratic: [[f64; 4]; 4],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub sigma: FormalBarycenter,
    pub morse_index: usize,
    /// Value of the regularized function.
    pub value: f64,
    /// Value of F* itself at the same configuration.
    pub f_star: f64,
    pub gradient_norm: f64,
    pub min_abs_eigenvalue: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CensusReport {
    pub k: usize,
    pub dimension: usize,
    pub starts: usize,
    pub converged: usize,
    pub unconverged: usize,
    pub degenerate: usize,
    pub points: Vec<CriticalPoint>,
    /// c_i: number of non-degenerate critical points with Morse index i.
    pub counts: Vec<usize>,
    pub plain_sum: i64,
    pub alternating_sum: i64,
    pub target: String,
    pub target_value: f64,
    pub matches_target: bool,
    pub regularization: Regularization,
}

struct Model {
    domain: DomainSpec,
    g: GCutoff,
    k: usize,
    reg: Regularization,
}

impl Model {
    fn unpack(&self, z: &[f64]) -> (Vec<Point>, Vec<f64>) {
        let k = self.k;
        let xs = (0..k).map(|i| [z[4 * i], z[4 * i + 1], z[4 * i + 2], z[4 * i + 3]]).collect();
        let mut ts: Vec<f64> = z[4 * k..].to_vec();
        ts.push(1.0 - ts.iter().sum::<f64>());
        (xs, ts)
    }

    fn admissible(&self, z: &[f64]) -> bool {
        let (xs, ts) = self.unpack(z);
        ts.iter().all(|&t| t > 0.0 && t < 1.0)
            && xs.iter().all(|x| self.domain.contains(x))
            && (0..self.k).all(|i| (i + 1..self.k).all(|j| dist(&xs[i], &xs[j]) > 0.0))
    }

    fn q(&self, x: &Point) -> f64 {
        let mut v = 0.0;
        for a in 0..4 {
            v += self.reg.linear[a] * x[a];
            for b in 0..4 {
                v += x[a] * self.reg.quadratic[a][b] * x[b];
            }
        }
        v
    }

    fn boundary_gradient(&self, x: &Point) -> Point {
        let r = norm4(x);
        let radial = x.map(|c| c / r);
        match self.domain.shape {
            Shape::Ball { .. } => radial.map(|c| -c),
            Shape::Shell { inner, outer } => {
                if r - inner <= outer - r {
                    radial
                } else {
                    radial.map(|c| -c)
                }
            }
            Shape::Box4d { .. } => {
                let h = 1e-7;
                [0, 1, 2, 3].map(|a| {
                    let (mut p, mut m) = (*x, *x);
                    p[a] += h;
                    m[a] -= h;
                    (self.domain.boundary_distance(&p) - self.domain.boundary_distance(&m)) / (2.0 * h)
                })
            }
        }
    }

    fn value(&self, z: &[f64]) -> f64 {
        let (xs, ts) = self.unpack(z);
        let mut v = 0.0;
        for i in 0..self.k {
            for j in 0..self.k {
                if i != j {
                    v -= self.g.value(dist(&xs[i], &xs[j]));
                }
            }
            v -= 1.0 / (ts[i] * (1.0 - ts[i]));
            v -= self.g.value(self.domain.boundary_distance(&xs[i]));
            v += self.q(&xs[i]);
        }
        v
    }

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let k = self.k;
        let (xs, ts) = self.unpack(z);
        let mut g = vec![0.0; z.len()];
        for i in 0..k {
            for j in 0..k {
                if i == j {
                    continue;
                }
                let d = dist(&xs[i], &xs[j]);
                let c = -2.0 * self.g.derivative(d) / d;
                for a in 0..4 {
                    g[4 * i + a] += c * (xs[i][a] - xs[j][a]);
                }
            }
            let bd = self.domain.boundary_distance(&xs[i]);
            let bg = self.boundary_gradient(&xs[i]);
            let gb = self.g.derivative(bd);
            for a in 0..4 {
                let mut dq = self.reg.linear[a];
                for b in 0..4 {
                    dq += (self.reg.quadratic[a][b] + self.reg.quadratic[b][a]) * xs[i][b];
                }
                g[4 * i + a] += -gb * bg[a] + dq;
            }
        }
        let wd = |t: f64| (1.0 - 2.0 * t) / (t * (1.0 - t)).powi(2);
        for i in 0..k - 1 {
            g[4 * k + i] = wd(ts[i]) - wd(ts[k - 1]);
        }
        g
    }

    fn hessian(&self, z: &[f64], step: f64) -> Vec<Vec<f64>> {
        let n = z.len();
        let mut h = vec![vec![0.0; n]; n];
        for c in 0..n {
            let (mut p, mut m) = (z.to_vec(), z.to_vec());
            p[c] += step;
            m[c] -= step;
            let (gp, gm) = (self.gradient(&p), self.gradient(&m));
            for r in 0..n {
                h[r][c] = (gp[r] - gm[r]) / (2.0 * step);
            }
        }
        for r in 0..n {
            for c in r + 1..n {
                let s = 0.5 * (h[r][c] + h[c][r]);
                h[r][c] = s;
                h[c][r] = s;
            }
        }
        h
    }

    fn random_start(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let half = self.domain.half_extents();
        let mut z = Vec::with_capacity(5 * self.k - 1);
        for _ in 0..self.k {
            loop {
                let x = half.map(|h| rng.gen_range(-h..h));
                if self.domain.contains(&x) {
                    z.extend_from_slice(&x);
                    break;
                }
            }
        }
        let e: Vec<f64> = (0..self.k).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
        let s: f64 = e.iter().sum();
        z.extend(e[..self.k - 1].iter().map(|v| v / s));
        z
    }

    /// Levenberg–Marquardt on |∇F|²; returns the point once |∇F| < tol.
    fn least_squares(&self, mut z: Vec<f64>, max_iter: usize, tol: f64, step: f64) -> Option<Vec<f64>> {
        let n = z.len();
        let mut g = self.gradient(&z);
        let mut gn = norm(&g);
        let mut mu = 1e-3;
        for _ in 0..max_iter {
            if gn < tol {
                return Some(z);
            }
            let h = self.hessian(&z, step);
            let scale = h.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
            let hh: Vec<Vec<f64>> =
                (0..n).map(|r| (0..n).map(|c| (0..n).map(|m| h[r][m] * h[m][c]).sum::<f64>()).collect()).collect();
            let b: Vec<f64> = (0..n).map(|r| -(0..n).map(|c| h[r][c] * g[c]).sum::<f64>()).collect();
            let mut accepted = false;
            for _ in 0..30 {
                let mut a = hh.clone();
                for (r, row) in a.iter_mut().enumerate() {
                    row[r] += mu * scale * scale;
                }
                if let Some(d) = solve_dense(&a, &b) {
                    let trial: Vec<f64> = z.iter().zip(&d).map(|(a, b)| a + b).collect();
                    if self.admissible(&trial) {
                        let gt = self.gradient(&trial);
                        let gtn = norm(&gt);
                        if gtn < gn {
                            (z, g, gn) = (trial, gt, gtn);
                            mu = (mu / 5.0).max(1e-15);
                            accepted = true;
                            break;
                        }
                    }
                }
                mu *= 4.0;
            }
            if !accepted {
                break;
            }
        }
        (gn < tol).then_some(z)
    }

    /// Newton iteration with steps clipped to `max_step` and shortened until
    /// admissible; returns the point once |∇F| < tol.
    fn solve(&self, mut z: Vec<f64>, max_iter: usize, tol: f64, step: f64, max_step: f64) -> Option<Vec<f64>> {
        let mut g = self.gradient(&z);
        for _ in 0..max_iter {
            if norm(&g) < tol {
                return Some(z);
            }
            let h = self.hessian(&z, step);
            let mut d = solve_dense(&h, &g.iter().map(|v| -v).collect::<Vec<_>>())?;
            let len = norm(&d);
            if len > max_step {
                d.iter_mut().for_each(|v| *v *= max_step / len);
            }
            let mut trial: Vec<f64> = z.iter().zip(&d).map(|(a, b)| a + b).collect();
            let mut tries = 0;
            while !self.admissible(&trial) {
                tries += 1;
                if tries > 40 {
                    return None;
                }
                for (t, (a, b)) in trial.iter_mut().zip(z.iter().zip(&d)) {
                    *t = a + b * 0.5f64.powi(tries);
                }
            }
            z = trial;
            g = self.gradient(&z);
        }
        (norm(&g) < tol).then_some(z)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Coordinate distance between two configurations, minimized over
/// relabelings of the atoms.
fn config_distance(k: usize, a: &[f64], b: &[f64]) -> f64 {
    let ta = |z: &[f64], i: usize| if i < k - 1 { z[4 * k + i] } else { 1.0 - z[4 * k..].iter().sum::<f64>() };
    let mut best = f64::INFINITY;
    let mut perm: Vec<usize> = (0..k).collect();
    permutations(&mut perm, 0, &mut |p| {
        let mut s = 0.0;
        for i in 0..k {
            for c in 0..4 {
                s += (a[4 * i + c] - b[4 * p[i] + c]).powi(2);
            }
            s += (ta(a, i) - ta(b, p[i])).powi(2);
        }
        best = best.min(s.sqrt());
    });
    best
}

fn permutations(p: &mut Vec<usize>, i: usize, f: &mut impl FnMut(&[usize])) {
    if i == p.len() {
        f(p);
        return;
    }
    for j in i..p.len() {
        p.swap(i, j);
        permutations(p, i + 1, f);
        p.swap(i, j);
    }
}

/// Linear part of size `scale` in a random direction, plus a symmetric
/// quadratic part a tenth as strong over the domain, which breaks the
/// rotational symmetry of round domains.
fn draw_regularization(rng: &mut ChaCha8Rng, scale: f64, size: f64) -> Regularization {
    let dir = [0; 4].map(|_| rng.gen_range(-1.0..1.0f64));
    let len = norm(&dir);
    let linear = dir.map(|c| scale * c / len);
    let mut quadratic = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in a..4 {
            let v = 0.1 * scale / size * rng.gen_range(-1.0..1.0);
            quadratic[a][b] = v;
            quadratic[b][a] = v;
        }
    }
    Regularization { linear, quadratic }
}

pub fn f_star_critical_census(domain: &DomainSpec, g: &GCutoff, cfg: &CensusConfig) -> Result<CensusReport> {
    let k = cfg.k;
    if k < 2 {
        return invalid("the census needs k >= 2");
    }
    if cfg.starts == 0 {
        return invalid("the census needs at least one start");
    }
    let size = domain.half_extents().iter().cloned().fold(0.0, f64::max);
    let scale = cfg.perturbation_scale.unwrap_or(2.0 / (g.eta * g.eta));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model = Model { domain: *domain, g: *g, k, reg: draw_regularization(&mut rng, scale, size) };
    let grad_scale = 1.0 / (g.eta * g.eta);
    let tol = 1e-9 * grad_scale;
    let step = 1e-6 * g.eta;
    let found: Vec<Option<Vec<f64>>> = (0..cfg.starts)
        .into_par_iter()
        .map(|s| {
            let mut r =
                ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1 + s as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let z0 = model.random_start(&mut r);
            model
                .least_squares(z0.clone(), cfg.max_iterations, tol, step)
                .or_else(|| model.solve(z0, cfg.max_iterations, tol, step, 0.5 * g.eta))
        })
        .collect();
    let converged = found.iter().filter(|f| f.is_some()).count();
    let mut unique: Vec<Vec<f64>> = Vec::new();
    for z in found.into_iter().flatten() {
        if unique.iter().all(|u| config_distance(k, u, &z) > 1e-6 * size) {
            unique.push(z);
        }
    }
    let dim = 5 * k - 1;
    let mut points = Vec::new();
    let mut degenerate = 0;
    let mut counts = vec![0usize; dim + 1];
    for z in &unique {
        let h = model.hessian(z, step);
        let (eig, _) = symmetric_eigen(&h);
        let big = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let small = eig.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        if small < 1e-6 * big {
            degenerate += 1;
            continue;
        }
        let index = eig.iter().filter(|&&v| v < 0.0).count();
        counts[index] += 1;
        let (xs, ts) = model.unpack(z);
        let sigma = FormalBarycenter { atoms: xs.iter().zip(&ts).map(|(x, t)| super::Atom { t: *t, x: *x }).collect() };
        let sigma = super::canonicalize(&sigma.raw(), 0.0)?;
        points.push(CriticalPoint {
            f_star: f_star(&sigma, g)?,
            sigma,
            morse_index: index,
            value: model.value(z),
            gradient_norm: norm(&model.gradient(z)),
            min_abs_eigenvalue: small,
        });
    }
    let plain_sum = counts.iter().sum::<usize>() as i64;
    let alternating_sum: i64 =
        counts.iter().enumerate().map(|(i, &c)| if i % 2 == 0 { c as i64 } else { -(c as i64) }).sum();
    let target: BigRational = morse_count_sum(&EulerChar::new(domain.chi), k as i64)?;
    let target_value = target.to_f64().unwrap_or(f64::NAN);
    let matches_target = target == BigRational::from_integer(alternating_sum.into());
    Ok(CensusReport {
        k,
        dimension: dim,
        starts: cfg.starts,
        converged,
        unconverged: cfg.starts - converged,
        degenerate,
        points,
        counts,
        plain_sum,
        alternating_sum,
        target: target.to_string(),
        target_value,
        matches_target,
        regularization: model.reg,
    })
}
