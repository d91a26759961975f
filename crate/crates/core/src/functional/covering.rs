//! Covering and concentration of densities by small balls.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{i_tau, WeightH};
use crate::combinatorics::BUBBLE_QUANTUM;
use crate::domain::{dist, log_integral_exp, Density, Field, Point};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Covering {
    /// `centers.len() == l` balls of radius r capture at least 1 − ε.
    Concentrated { centers: Vec<Point>, captured: f64 },
    /// l + 1 centers whose r̄-balls each hold at least ε̄ and whose 2r̄-balls
    /// are disjoint. `best_captured` is what the best l balls of radius r held.
    Spread { centers: Vec<Point>, r_bar: f64, eps_bar: f64, best_captured: f64 },
}

#[derive(Debug, Clone)]
pub struct CoveringOptions {
    /// Largest number of density points used directly as candidate centers.
    pub max_candidates: usize,
    /// Lattice candidates per axis added over the bounding box.
    pub lattice: usize,
    pub refine_iterations: usize,
}

impl Default for CoveringOptions {
    fn default() -> Self {
        CoveringOptions { max_candidates: 1500, lattice: 7, refine_iterations: 30 }
    }
}

fn candidates(dens: &Density, opts: &CoveringOptions) -> Vec<Point> {
    let mut order: Vec<usize> = (0..dens.len()).collect();
    order.sort_by(|&a, &b| dens.mass[b].total_cmp(&dens.mass[a]).then(a.cmp(&b)));
    let mut out: Vec<Point> = order.iter().take(opts.max_candidates).map(|&i| dens.points[i]).collect();
    let mut lo = [f64::INFINITY; 4];
    let mut hi = [f64::NEG_INFINITY; 4];
    for p in &dens.points {
        for a in 0..4 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let n = opts.lattice;
    if n > 0 {
        for idx in 0..n.pow(4) {
            let c = [idx % n, (idx / n) % n, (idx / (n * n)) % n, idx / (n * n * n)];
            out.push([0, 1, 2, 3].map(|a| lo[a] + (c[a] as f64 + 0.5) / n as f64 * (hi[a] - lo[a])));
        }
    }
    out
}

fn captured(dens: &Density, active: &[bool], c: &Point, r: f64) -> f64 {
    dens.points.iter().zip(&dens.mass).zip(active).filter(|((p, _), &a)| a && dist(p, c) < r).map(|((_, m), _)| m).sum()
}

fn best_candidate(dens: &Density, active: &[bool], cands: &[Point], r: f64) -> (usize, f64) {
    let scores: Vec<f64> = cands.par_iter().map(|c| captured(dens, active, c, r)).collect();
    scores.iter().enumerate().fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
}

/// Moves a center to the mass centroid of what it captures while that helps.
fn refine(dens: &Density, active: &[bool], mut c: Point, r: f64, iters: usize) -> (Point, f64) {
    let mut best = captured(dens, active, &c, r);
    for _ in 0..iters {
        let mut m = 0.0;
        let mut acc = [0.0; 4];
        for ((p, w), &a) in dens.points.iter().zip(&dens.mass).zip(active) {
            if a && dist(p, &c) < r {
                m += w;
                for i in 0..4 {
                    acc[i] += w * p[i];
                }
            }
        }
        if m == 0.0 {
            break;
        }
        let next = acc.map(|v| v / m);
        let val = captured(dens, active, &next, r);
        if val > best {
            best = val;
            c = next;
        } else {
            break;
        }
    }
    (c, best)
}

/// Greedy selection of `l` balls of radius `r`; returns centers and total
/// captured mass.
pub fn greedy_cover(dens: &Density, l: usize, r: f64, opts: &CoveringOptions) -> (Vec<Point>, f64) {
    let cands = candidates(dens, opts);
    let mut active = vec![true; dens.len()];
    let mut centers = Vec::new();
    let mut total = 0.0;
    for _ in 0..l {
        let (i, _) = best_candidate(dens, &active, &cands, r);
        let (c, got) = refine(dens, &active, cands[i], r, opts.refine_iterations);
        for (p, a) in dens.points.iter().zip(active.iter_mut()) {
            if dist(p, &c) < r {
                *a = false;
            }
        }
        centers.push(c);
        total += got;
    }
    (centers, total)
}

pub fn covering_select(dens: &Density, l: usize, eps: f64, r: f64, opts: &CoveringOptions) -> Result<Covering> {
    if l == 0 {
        return invalid("covering needs l >= 1");
    }
    if !(eps > 0.0 && eps < 1.0 && r > 0.0) {
        return invalid("covering needs 0 < eps < 1 and r > 0");
    }
    let (centers, got) = greedy_cover(dens, l, r, opts);
    if got >= 1.0 - eps {
        return Ok(Covering::Concentrated { centers, captured: got });
    }
    let cands = candidates(dens, opts);
    let all = vec![true; dens.len()];
    for div in [4.0, 8.0, 16.0, 32.0] {
        let r_bar = r / div;
        let scores: Vec<f64> = cands.par_iter().map(|c| captured(dens, &all, c, r_bar)).collect();
        let mut order: Vec<usize> = (0..cands.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let mut chosen: Vec<usize> = Vec::new();
        for &i in &order {
            if scores[i] <= 0.0 {
                break;
            }
            if chosen.iter().all(|&j| dist(&cands[i], &cands[j]) >= 4.0 * r_bar) {
                chosen.push(i);
                if chosen.len() == l + 1 {
                    break;
                }
            }
        }
        if chosen.len() == l + 1 {
            let eps_bar = chosen.iter().map(|&i| scores[i]).fold(f64::INFINITY, f64::min);
            return Ok(Covering::Spread {
                centers: chosen.iter().map(|&i| cands[i]).collect(),
                r_bar,
                eps_bar,
                best_captured: got,
            });
        }
    }
    Err(Error::Inconclusive(format!("no {l}-ball cover and no {} separated massive balls found", l + 1)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationRecord {
    pub k: u64,
    pub tau: f64,
    /// I_tau of the normalized field; absent on meshes without a Laplacian.
    pub i_value: Option<f64>,
    /// Mass outside the best k balls of radius r.
    pub residual_mass: f64,
    pub concentrated: bool,
    pub points: Option<Vec<Point>>,
}

/// Normalizes u so that (1/|Ω|) ∫ e^u = 1, then covers e^u/|Ω| by
/// k = floor(τ/64π²) balls of radius r.
pub fn concentration_check(u: &Field, tau: f64, eps: f64, r: f64) -> Result<ConcentrationRecord> {
    if !(tau > 0.0) {
        return invalid("tau must be positive");
    }
    let shift = log_integral_exp(u, None).log_value - u.mesh.volume().ln();
    let un = u.map(|v| v - shift);
    let k = (tau / BUBBLE_QUANTUM).floor() as u64;
    let i_value = match i_tau(&un, tau, &WeightH::unit(&un.mesh)) {
        Ok(e) => Some(e.total),
        Err(Error::Unsupported { .. }) => None,
        Err(e) => return Err(e),
    };
    if k == 0 {
        return Ok(ConcentrationRecord { k, tau, i_value, residual_mass: 1.0, concentrated: false, points: None });
    }
    let dens = un.map(f64::exp).to_density()?;
    let (residual_mass, concentrated, points) =
        match covering_select(&dens, k as usize, eps, r, &CoveringOptions::default())? {
            Covering::Concentrated { centers, captured } => (1.0 - captured, true, Some(centers)),
            Covering::Spread { best_captured, .. } => (1.0 - best_captured, false, None),
        };
    Ok(ConcentrationRecord { k, tau, i_value, residual_mass: residual_mass.max(0.0), concentrated, points })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_atom_is_concentrated() {
        let dens = Density::new(vec![[0.3, 0.0, 0.0, 0.0], [0.31, 0.0, 0.0, 0.0]], vec![1.0, 1.0]).unwrap();
        match covering_select(&dens, 1, 0.1, 0.05, &CoveringOptions::default()).unwrap() {
            Covering::Concentrated { captured, .. } => assert!((captured - 1.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn two_far_atoms_spread_for_one_ball() {
        let dens = Density::new(vec![[1.0, 0.0, 0.0, 0.0], [-1.0, 0.0, 0.0, 0.0]], vec![1.0, 1.0]).unwrap();
        match covering_select(&dens, 1, 0.2, 0.1, &CoveringOptions::default()).unwrap() {
            Covering::Spread { centers, eps_bar, .. } => {
                assert_eq!(centers.len(), 2);
                assert!((eps_bar - 0.5).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }
}
