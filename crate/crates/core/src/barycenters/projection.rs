use rayon::prelude::*;

use super::{canonicalize, FormalBarycenter};
use crate::domain::{dist, Density, Point};
use crate::error::{invalid, Result};

/// Finite family of test functions with C¹-type norm at most one:
/// clamped cones max(0, c − |y − p|)/(c + 1).
#[derive(Debug, Clone)]
pub struct TestDictionary {
    pub centers: Vec<Point>,
    pub radii: Vec<f64>,
}

impl TestDictionary {
    /// Cones at the atoms, at the heaviest density points and on a lattice
    /// over the bounding box, with radii spread over three decades of `size`.
    pub fn standard(dens: &Density, sigma: &FormalBarycenter, size: f64) -> Self {
        let mut centers: Vec<Point> = sigma.points();
        let mut order: Vec<usize> = (0..dens.len()).collect();
        order.sort_by(|&a, &b| dens.mass[b].total_cmp(&dens.mass[a]).then(a.cmp(&b)));
        centers.extend(order.iter().take(200).map(|&i| dens.points[i]));
        let mut lo = [f64::INFINITY; 4];
        let mut hi = [f64::NEG_INFINITY; 4];
        for p in dens.points.iter().chain(&centers) {
            for a in 0..4 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let n = 5;
        for idx in 0..n * n * n * n {
            let c = [idx % n, (idx / n) % n, (idx / (n * n)) % n, idx / (n * n * n)];
            centers.push([0, 1, 2, 3].map(|a| lo[a] + (c[a] as f64 + 0.5) / n as f64 * (hi[a] - lo[a])));
        }
        let radii = [1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.3, 1.0, 3.0].iter().map(|f| f * size).collect();
        TestDictionary { centers, radii }
    }

    fn eval(c: f64, p: &Point, y: &Point) -> f64 {
        (c - dist(y, p)).max(0.0) / (c + 1.0)
    }
}

/// Lower bound of sup_ψ |∫ f ψ − Σ t_i ψ(x_i)| over the dictionary (the
/// constants contribute zero since both measures are normalized).
pub fn weak_distance(dens: &Density, sigma: &FormalBarycenter, dict: &TestDictionary) -> f64 {
    dict.centers
        .par_iter()
        .map(|p| {
            dict.radii
                .iter()
                .map(|&c| {
                    let a: f64 =
                        dens.points.iter().zip(&dens.mass).map(|(y, m)| m * TestDictionary::eval(c, p, y)).sum();
                    let b: f64 = sigma.atoms.iter().map(|at| at.t * TestDictionary::eval(c, p, &at.x)).sum();
                    (a - b).abs()
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct ProjectionOptions {
    /// Only mass within this distance of a center is assigned to it.
    pub capture_radius: f64,
    /// Clusters holding less mass than this are dropped.
    pub min_mass: f64,
    pub merge_radius: f64,
    pub max_iterations: usize,
}

impl ProjectionOptions {
    pub fn new(capture_radius: f64, merge_radius: f64) -> Self {
        ProjectionOptions { capture_radius, min_mass: 0.02, merge_radius, max_iterations: 100 }
    }
}

fn centroid(dens: &Density, members: &[usize]) -> (Point, f64) {
    let mut m = 0.0;
    let mut acc = [0.0; 4];
    for &i in members {
        m += dens.mass[i];
        for a in 0..4 {
            acc[a] += dens.mass[i] * dens.points[i][a];
        }
    }
    (acc.map(|v| if m > 0.0 { v / m } else { 0.0 }), m)
}

/// Trimmed weighted Lloyd clustering of a density into at most `k` atoms.
pub fn nearest_barycenter(dens: &Density, k: usize, opts: &ProjectionOptions) -> Result<FormalBarycenter> {
    if k == 0 {
        return invalid("k must be at least 1");
    }
    if dens.is_empty() || dens.mass.iter().all(|&m| m <= 0.0) {
        return invalid("density has empty support");
    }
    let rc = opts.capture_radius;
    // greedy seeding: heaviest capture ball first, then exclude its neighborhood
    let mut order: Vec<usize> = (0..dens.len()).collect();
    order.sort_by(|&a, &b| dens.mass[b].total_cmp(&dens.mass[a]).then(a.cmp(&b)));
    let cands: Vec<usize> = order.into_iter().take(2000).collect();
    let mut centers: Vec<Point> = Vec::new();
    let mut taken = vec![false; dens.len()];
    for _ in 0..k {
        let scores: Vec<f64> = cands
            .par_iter()
            .map(|&c| {
                dens.points
                    .iter()
                    .zip(&dens.mass)
                    .zip(&taken)
                    .filter(|((p, _), &t)| !t && dist(p, &dens.points[c]) < rc)
                    .map(|((_, m), _)| m)
                    .sum()
            })
            .collect();
        let (bi, bv) = scores
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
        if bv < opts.min_mass {
            break;
        }
        let c = dens.points[cands[bi]];
        for (p, t) in dens.points.iter().zip(taken.iter_mut()) {
            if dist(p, &c) < 2.0 * rc {
                *t = true;
            }
        }
        centers.push(c);
    }
    if centers.is_empty() {
        return invalid("no cluster holds the minimum mass");
    }
    let mut masses = vec![0.0; centers.len()];
    for _ in 0..opts.max_iterations {
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); centers.len()];
        for (i, p) in dens.points.iter().enumerate() {
            let (best, d) = centers
                .iter()
                .enumerate()
                .map(|(j, c)| (j, dist(p, c)))
                .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
            if d < rc {
                members[best].push(i);
            }
        }
        let mut moved: f64 = 0.0;
        for (j, mem) in members.iter().enumerate() {
            let (c, m) = centroid(dens, mem);
            if m > 0.0 {
                moved = moved.max(dist(&c, &centers[j]));
                centers[j] = c;
            }
            masses[j] = m;
        }
        if moved < 1e-13 {
            break;
        }
    }
    let total: f64 = masses.iter().filter(|&&m| m >= opts.min_mass).sum();
    let raw: Vec<(f64, Point)> =
        centers.iter().zip(&masses).filter(|(_, &m)| m >= opts.min_mass).map(|(c, &m)| (m / total, *c)).collect();
    canonicalize(&raw, opts.merge_radius)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smoothed(sigma: &FormalBarycenter, w: f64) -> Density {
        let mut points = Vec::new();
        let mut mass = Vec::new();
        for a in &sigma.atoms {
            for s in [-1.0, 1.0] {
                for axis in 0..4 {
                    let mut p = a.x;
                    p[axis] += s * w;
                    points.push(p);
                    mass.push(a.t / 8.0);
                }
            }
        }
        Density::new(points, mass).unwrap()
    }

    #[test]
    fn smoothed_atoms_are_close() {
        let sigma = FormalBarycenter::from_atoms(&[(0.3, [0.5, 0.0, 0.0, 0.0]), (0.7, [-0.5, 0.1, 0.0, 0.0])]).unwrap();
        let w = 0.01;
        let dens = smoothed(&sigma, w);
        let dict = TestDictionary::standard(&dens, &sigma, 1.0);
        assert!(weak_distance(&dens, &sigma, &dict) <= w);
        assert!(weak_distance(&sigma.to_density(), &sigma, &dict) < 1e-15);
        let back = nearest_barycenter(&dens, 2, &ProjectionOptions::new(0.2, 1e-3)).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in back.atoms.iter().zip(&sigma.atoms) {
            assert!(dist(&a.x, &b.x) < 1e-12 && (a.t - b.t).abs() < 1e-12);
        }
    }

    #[test]
    fn one_cluster_for_one_bump() {
        let sigma = FormalBarycenter::single([0.2, 0.0, 0.0, 0.0]);
        let dens = smoothed(&sigma, 0.01);
        let back = nearest_barycenter(&dens, 3, &ProjectionOptions::new(0.2, 1e-3)).unwrap();
        assert_eq!(back.len(), 1);
    }
}
