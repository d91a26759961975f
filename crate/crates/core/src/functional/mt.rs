//! Moser–Trudinger gaps and their scans.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{h_norm_sq, mean, MT_CONSTANT};
use crate::domain::{biharmonic_solve_navier, dist, log_integral_exp, norm4, Field, Mesh, Point};
use crate::error::{invalid, Result};

/// log((1/|Ω|) ∫ e^{u − ū}).
pub fn mt_lhs(u: &Field) -> f64 {
    let centered = u.map(|v| v - mean(u));
    log_integral_exp(&centered, None).log_value - u.mesh.volume().ln()
}

/// log((1/|Ω|) ∫ e^{u − ū}) − ‖u‖²/(128π²). The Adams inequality bounds
/// this from above by a domain constant.
pub fn mt_gap(u: &Field) -> Result<f64> {
    Ok(mt_lhs(u) - h_norm_sq(u)? / MT_CONSTANT)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    Ball {
        center: Point,
        radius: f64,
    },
    /// Origin-centered annulus inner < |x| < outer.
    Annulus {
        inner: f64,
        outer: f64,
    },
}

impl Region {
    pub fn contains(&self, x: &Point) -> bool {
        match *self {
            Region::Ball { center, radius } => dist(x, &center) < radius,
            Region::Annulus { inner, outer } => {
                let r = norm4(x);
                r > inner && r < outer
            }
        }
    }

    fn radial_extent(&self) -> (f64, f64) {
        match *self {
            Region::Ball { center, radius } => ((norm4(&center) - radius).max(0.0), norm4(&center) + radius),
            Region::Annulus { inner, outer } => (inner, outer),
        }
    }

    fn is_radially_symmetric(&self) -> bool {
        match *self {
            Region::Ball { center, .. } => norm4(&center) == 0.0,
            Region::Annulus { .. } => true,
        }
    }

    /// Euclidean distance between the two sets.
    pub fn distance_to(&self, other: &Region) -> f64 {
        match (self, other) {
            (Region::Ball { center: a, radius: ra }, Region::Ball { center: b, radius: rb }) => dist(a, b) - ra - rb,
            _ => {
                // an origin-centered annulus can be reached along a ray, so the
                // distance is the gap between the radial extents
                let (a0, a1) = self.radial_extent();
                let (b0, b1) = other.radial_extent();
                (b0 - a1).max(a0 - b1)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovedMtRecord {
    pub applicable: bool,
    pub region_mass: Vec<f64>,
    pub lhs: f64,
    /// ‖u‖² / (128 (l+1) π² − ε̃)
    pub slope_bound: f64,
    pub gap: f64,
}

/// Relative e^u mass of each region.
pub fn region_masses(u: &Field, regions: &[Region]) -> Result<Vec<f64>> {
    let e = u.map(|v| (v - u.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)).exp());
    let direct = !matches!(*u.mesh, Mesh::Radial(_)) || regions.iter().all(Region::is_radially_symmetric);
    if direct {
        let w = u.mesh.weights();
        let total: f64 = e.values.iter().zip(w).map(|(a, b)| a * b).sum();
        Ok(regions
            .iter()
            .map(|reg| {
                (0..u.len()).filter(|&j| reg.contains(&u.mesh.position(j))).map(|j| e.values[j] * w[j]).sum::<f64>()
                    / total
            })
            .collect())
    } else {
        let dens = e.to_density()?;
        Ok(regions
            .iter()
            .map(|reg| dens.points.iter().zip(&dens.mass).filter(|(p, _)| reg.contains(p)).map(|(_, m)| m).sum())
            .collect())
    }
}

/// Checks the mass-spreading hypothesis of the improved inequality and
/// reports the improved bound for `regions.len()` separated regions.
pub fn improved_mt_check(
    u: &Field,
    regions: &[Region],
    gamma0: f64,
    eps_tilde: f64,
    delta0: f64,
) -> Result<ImprovedMtRecord> {
    let parts = regions.len();
    if parts < 2 {
        return invalid("need at least two regions");
    }
    if !(gamma0 > 0.0 && gamma0 < 1.0 / parts as f64) {
        return invalid(format!("gamma0 must lie in (0, 1/{parts})"));
    }
    if !(eps_tilde > 0.0 && eps_tilde < parts as f64 * MT_CONSTANT) {
        return invalid("eps_tilde out of range");
    }
    for i in 0..parts {
        for j in i + 1..parts {
            if regions[i].distance_to(&regions[j]) < delta0 {
                return invalid(format!("regions {i} and {j} are closer than delta0 = {delta0}"));
            }
        }
    }
    let region_mass = region_masses(u, regions)?;
    let applicable = region_mass.iter().all(|&m| m >= gamma0);
    let lhs = mt_lhs(u);
    let slope_bound = h_norm_sq(u)? / (parts as f64 * MT_CONSTANT - eps_tilde);
    Ok(ImprovedMtRecord { applicable, region_mass, lhs, slope_bound, gap: lhs - slope_bound })
}

/// Smooth random field with prescribed energy norm: Δ^{-2} of a random
/// superposition of plane waves, rescaled.
pub fn random_field(mesh: &std::sync::Arc<Mesh>, seed: u64, norm: f64) -> Result<Field> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = mesh.domain().half_extents();
    let size = half.iter().cloned().fold(0.0, f64::max);
    let waves: Vec<(Point, f64, f64)> = (0..6)
        .map(|m| {
            let k = [0; 4].map(|_| rng.gen_range(-1.0..1.0) * 3.0 * std::f64::consts::PI / size);
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            let amp = rng.gen_range(-1.0..1.0) / (1.0 + m as f64);
            (k, phase, amp)
        })
        .collect();
    let offset = rng.gen_range(-0.5..0.5);
    let src = Field::from_fn(mesh, |x| {
        offset
            + waves
                .iter()
                .map(|(k, ph, a)| a * (k.iter().zip(x).map(|(ki, xi)| ki * xi).sum::<f64>() + ph).cos())
                .sum::<f64>()
    });
    let u = biharmonic_solve_navier(&src)?;
    let n = h_norm_sq(&u)?.sqrt();
    if n == 0.0 {
        return invalid("random source produced a zero field");
    }
    Ok(u.scaled(norm / n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtSample {
    pub seed: u64,
    pub norm_sq_scaled: f64,
    pub lhs: f64,
    pub gap: f64,
}

/// mt_gap over `count` random fields whose scaled norms ‖u‖²/(128π²) are
/// log-uniform in `[lo, hi]`.
pub fn random_scan(
    mesh: &std::sync::Arc<Mesh>,
    base_seed: u64,
    count: usize,
    lo: f64,
    hi: f64,
) -> Result<Vec<MtSample>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let seed = base_seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            let x = (lo.ln() + rng.gen::<f64>() * (hi.ln() - lo.ln())).exp();
            let u = random_field(mesh, seed, (x * MT_CONSTANT).sqrt())?;
            let lhs = mt_lhs(&u);
            let norm_sq_scaled = h_norm_sq(&u)? / MT_CONSTANT;
            Ok(MtSample { seed, norm_sq_scaled, lhs, gap: lhs - norm_sq_scaled })
        })
        .collect()
}

/// Least-squares line fit returning (slope, intercept, slope standard error).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let se = if n > 2.0 { (rss / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    (slope, intercept, se)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{DomainSpec, Resolution};

    #[test]
    fn gap_of_zero_is_zero() {
        let d = DomainSpec::ball(1.0).unwrap();
        let mesh = Mesh::build(&d, Resolution::radial(50)).unwrap();
        assert!(mt_gap(&Field::zeros(&mesh)).unwrap().abs() < 1e-14);
    }

    #[test]
    fn fit_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let (s, i, se) = linear_fit(&x, &y);
        assert!((s - 2.0).abs() < 1e-14 && (i + 1.0).abs() < 1e-14 && se < 1e-12);
    }

    #[test]
    fn region_distances() {
        let a = Region::Annulus { inner: 1.0, outer: 1.2 };
        let b = Region::Annulus { inner: 1.5, outer: 2.0 };
        assert!((a.distance_to(&b) - 0.3).abs() < 1e-15);
        let c = Region::Ball { center: [0.0; 4], radius: 0.5 };
        assert!((c.distance_to(&a) - 0.5).abs() < 1e-15);
    }
}
