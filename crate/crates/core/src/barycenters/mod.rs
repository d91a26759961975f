//! Finite convex combinations of Dirac masses, the Morse function F* on
//! them, and projections of densities onto them.

use serde::{Deserialize, Serialize};

use crate::domain::{dist, Density, Point};
use crate::error::{invalid, Error, Result};

pub mod census;
mod projection;

pub use census::{f_star_critical_census, CensusConfig, CensusReport, CriticalPoint};
pub use projection::{nearest_barycenter, weak_distance, ProjectionOptions, TestDictionary};

const WEIGHT_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub t: f64,
    pub x: Point,
}

/// Canonical element of the barycenter space: distinct points, positive
/// weights summing to one, atoms sorted by coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormalBarycenter {
    pub atoms: Vec<Atom>,
}

fn coord_order(a: &Point, b: &Point) -> std::cmp::Ordering {
    for i in 0..4 {
        match a[i].total_cmp(&b[i]) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    std::cmp::Ordering::Equal
}

/// Drops zero weights, merges atoms closer than `merge_radius` (weights
/// added, location weight-averaged, closest pair first) and renormalizes.
pub fn canonicalize(raw: &[(f64, Point)], merge_radius: f64) -> Result<FormalBarycenter> {
    if raw.iter().any(|(t, x)| !(*t >= 0.0) || !t.is_finite() || x.iter().any(|c| !c.is_finite())) {
        return invalid("weights must be finite and non-negative");
    }
    let sum: f64 = raw.iter().map(|(t, _)| t).sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return invalid(format!("weights sum to {sum}, expected 1"));
    }
    let mut atoms: Vec<Atom> = raw.iter().filter(|(t, _)| *t > 0.0).map(|&(t, x)| Atom { t, x }).collect();
    if atoms.is_empty() {
        return invalid("barycenter has no atoms with positive weight");
    }
    atoms.sort_by(|a, b| coord_order(&a.x, &b.x).then(a.t.total_cmp(&b.t)));
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..atoms.len() {
            for j in i + 1..atoms.len() {
                let d = dist(&atoms[i].x, &atoms[j].x);
                if (d < merge_radius || d == 0.0) && best.map_or(true, |(_, _, bd)| d < bd) {
                    best = Some((i, j, d));
                }
            }
        }
        let Some((i, j, _)) = best else { break };
        let (a, b) = (atoms[i], atoms[j]);
        let t = a.t + b.t;
        let x = [0, 1, 2, 3].map(|c| (a.t * a.x[c] + b.t * b.x[c]) / t);
        atoms.remove(j);
        atoms[i] = Atom { t, x };
        atoms.sort_by(|a, b| coord_order(&a.x, &b.x).then(a.t.total_cmp(&b.t)));
    }
    let total: f64 = atoms.iter().map(|a| a.t).sum();
    if (total - 1.0).abs() > 1e-15 {
        for a in &mut atoms {
            a.t /= total;
        }
    }
    Ok(FormalBarycenter { atoms })
}

impl FormalBarycenter {
    pub fn single(x: Point) -> Self {
        FormalBarycenter { atoms: vec![Atom { t: 1.0, x }] }
    }

    pub fn from_atoms(raw: &[(f64, Point)]) -> Result<Self> {
        canonicalize(raw, 0.0)
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn raw(&self) -> Vec<(f64, Point)> {
        self.atoms.iter().map(|a| (a.t, a.x)).collect()
    }

    pub fn points(&self) -> Vec<Point> {
        self.atoms.iter().map(|a| a.x).collect()
    }

    /// Smallest pairwise distance between atoms (infinite for one atom).
    pub fn min_separation(&self) -> f64 {
        let mut m = f64::INFINITY;
        for i in 0..self.atoms.len() {
            for j in i + 1..self.atoms.len() {
                m = m.min(dist(&self.atoms[i].x, &self.atoms[j].x));
            }
        }
        m
    }

    /// Point masses of the atoms as a density.
    pub fn to_density(&self) -> Density {
        Density { points: self.points(), mass: self.atoms.iter().map(|a| a.t).collect() }
    }
}

/// Non-increasing cutoff: 1/t on (0, η], a C¹ quadratic on [η, 2η]
/// (the cubic Hermite interpolant of the end data degenerates to it),
/// and 1/(2η) beyond.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GCutoff {
    pub eta: f64,
}

impl GCutoff {
    pub fn new(eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return invalid("eta must be positive");
        }
        Ok(GCutoff { eta })
    }

    pub fn value(&self, t: f64) -> f64 {
        let e = self.eta;
        if t <= e {
            1.0 / t
        } else if t < 2.0 * e {
            let s = t / e - 1.0;
            (1.0 - s + 0.5 * s * s) / e
        } else {
            0.5 / e
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let e = self.eta;
        if t <= e {
            -1.0 / (t * t)
        } else if t < 2.0 * e {
            (t / e - 2.0) / (e * e)
        } else {
            0.0
        }
    }
}

/// F*(σ) = −Σ_{i≠j} G(|x_i − x_j|) − Σ_i 1/(t_i(1 − t_i)), ordered pairs.
pub fn f_star(sigma: &FormalBarycenter, g: &GCutoff) -> Result<f64> {
    if sigma.len() < 2 {
        return Err(Error::Domain("F* needs at least two atoms (t = 1 is singular)".into()));
    }
    let mut v = 0.0;
    for (i, a) in sigma.atoms.iter().enumerate() {
        for (j, b) in sigma.atoms.iter().enumerate() {
            if i != j {
                v -= g.value(dist(&a.x, &b.x));
            }
        }
        v -= 1.0 / (a.t * (1.0 - a.t));
    }
    Ok(v)
}
