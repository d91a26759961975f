use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{dist, DomainSpec, Point, Shape};
use crate::error::{invalid, Error, Result};
use crate::linalg::{conjugate_gradient, solve_tridiagonal};

const SPHERE_AREA: f64 = 2.0 * PI * PI;
const GRID_CG_TOL: f64 = 1e-10;
const GRID_CG_MAX_ITER: usize = 20_000;

/// Default sinh grading for ball meshes: clusters nodes near the origin
/// so that bubbles with core width 1e-3 are still resolved.
pub const DEFAULT_BALL_GRADING: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Resolution {
    /// `n` radial nodes including both ends; `grading` 0 is uniform.
    Radial { n: usize, grading: f64 },
    /// `n` interior lattice points per axis.
    Grid { n: usize },
}

impl Resolution {
    pub fn radial(n: usize) -> Self {
        Resolution::Radial { n, grading: f64::NAN }
    }

    pub fn default_for(domain: &DomainSpec) -> Self {
        if domain.is_radial() {
            Resolution::radial(2000)
        } else {
            Resolution::Grid { n: 24 }
        }
    }

    /// Same mode with twice the resolution.
    pub fn refined(self) -> Self {
        match self {
            Resolution::Radial { n, grading } => Resolution::Radial { n: 2 * n - 1, grading },
            Resolution::Grid { n } => Resolution::Grid { n: 2 * n + 1 },
        }
    }
}

#[derive(Debug)]
pub enum Mesh {
    Radial(RadialMesh),
    Grid(GridMesh),
    Cloud(CloudMesh),
}

impl Mesh {
    pub fn build(domain: &DomainSpec, res: Resolution) -> Result<Arc<Mesh>> {
        match res {
            Resolution::Radial { n, grading } => {
                let g = if grading.is_nan() {
                    match domain.shape {
                        Shape::Ball { .. } => DEFAULT_BALL_GRADING,
                        _ => 0.0,
                    }
                } else {
                    grading
                };
                Ok(Arc::new(Mesh::Radial(RadialMesh::new(domain, n, g)?)))
            }
            Resolution::Grid { n } => Ok(Arc::new(Mesh::Grid(GridMesh::new(domain, n)?))),
        }
    }

    pub fn domain(&self) -> &DomainSpec {
        match self {
            Mesh::Radial(m) => &m.domain,
            Mesh::Grid(m) => &m.domain,
            Mesh::Cloud(m) => &m.domain,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Mesh::Radial(_) => "radial",
            Mesh::Grid(_) => "grid",
            Mesh::Cloud(_) => "cloud",
        }
    }

    pub fn resolution(&self) -> Option<Resolution> {
        match self {
            Mesh::Radial(m) => Some(Resolution::Radial { n: m.r.len(), grading: m.grading }),
            Mesh::Grid(m) => Some(Resolution::Grid { n: m.n }),
            Mesh::Cloud(_) => None,
        }
    }

    pub fn len(&self) -> usize {
        self.weights().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Quadrature weights for the 4D volume measure.
    pub fn weights(&self) -> &[f64] {
        match self {
            Mesh::Radial(m) => &m.weights,
            Mesh::Grid(m) => &m.weights,
            Mesh::Cloud(m) => &m.weights,
        }
    }

    /// Weights of the discrete energy inner product sum over interior nodes
    /// of w (Lu)(Lv). They make the discrete Laplacian self-adjoint; on
    /// radial meshes they coincide with the quadrature weights.
    pub fn energy_weights(&self) -> &[f64] {
        match self {
            Mesh::Radial(m) => &m.weights,
            Mesh::Grid(m) => &m.energy_weights,
            Mesh::Cloud(m) => &m.weights,
        }
    }

    /// Nodes carrying unknowns; the rest hold boundary data.
    pub fn interior(&self) -> &[bool] {
        match self {
            Mesh::Radial(m) => &m.interior,
            Mesh::Grid(m) => &m.interior,
            Mesh::Cloud(m) => &m.interior,
        }
    }

    /// Representative position of a node. Radial nodes sit on the first axis.
    pub fn position(&self, j: usize) -> Point {
        match self {
            Mesh::Radial(m) => [m.r[j], 0.0, 0.0, 0.0],
            Mesh::Grid(m) => m.position(j),
            Mesh::Cloud(m) => m.points[j],
        }
    }

    pub fn volume(&self) -> f64 {
        self.weights().iter().sum()
    }

    /// Typical node spacing.
    pub fn spacing(&self) -> f64 {
        match self {
            Mesh::Radial(m) => {
                let (a, b) = (m.r[0], m.r[m.r.len() - 1]);
                (b - a) / (m.r.len() - 1) as f64
            }
            Mesh::Grid(m) => m.h.iter().cloned().fold(f64::INFINITY, f64::min),
            Mesh::Cloud(m) => m.background_spacing,
        }
    }

    pub(crate) fn apply_laplacian(&self, u: &[f64]) -> Result<Vec<f64>> {
        match self {
            Mesh::Radial(m) => Ok(m.laplacian(u)),
            Mesh::Grid(m) => Ok(m.laplacian(u)),
            Mesh::Cloud(_) => Err(Error::Unsupported { op: "laplacian", mesh: "cloud" }),
        }
    }

    /// Solves Δu = f at interior nodes with u = g elsewhere.
    pub(crate) fn solve_dirichlet(&self, f: &[f64], g: &[f64]) -> Result<Vec<f64>> {
        match self {
            Mesh::Radial(m) => m.solve(f, g),
            Mesh::Grid(m) => m.solve(f, g),
            Mesh::Cloud(_) => Err(Error::Unsupported { op: "poisson solve", mesh: "cloud" }),
        }
    }
}

/// Vertex-centered finite volumes in the radial variable with the r^3 measure.
///
/// The discrete Laplacian is `L = V^{-1} S` with `S` symmetric, so `L` is
/// self-adjoint for the quadrature inner product on functions vanishing on
/// the boundary nodes.
#[derive(Debug)]
pub struct RadialMesh {
    pub domain: DomainSpec,
    pub r: Vec<f64>,
    pub grading: f64,
    /// Radial cell measure: integral of r^3 over the control volume.
    pub cell: Vec<f64>,
    /// Integral of r over the control volume (used by angular sectors).
    cell_r: Vec<f64>,
    /// Flux coefficients f^3 / dr for the face between node j and j+1.
    flux: Vec<f64>,
    weights: Vec<f64>,
    interior: Vec<bool>,
    origin: bool,
}

impl RadialMesh {
    pub fn new(domain: &DomainSpec, n: usize, grading: f64) -> Result<Self> {
        if n < 8 {
            return invalid(format!("radial mesh needs at least 8 nodes, got {n}"));
        }
        let (r0, r1, origin) = match domain.shape {
            Shape::Ball { radius } => (0.0, radius, true),
            Shape::Shell { inner, outer } => (inner, outer, false),
            Shape::Box4d { .. } => return invalid("radial meshes need a ball or shell domain"),
        };
        let r: Vec<f64> = (0..n)
            .map(|j| {
                let xi = j as f64 / (n - 1) as f64;
                if grading > 0.0 {
                    r0 + (r1 - r0) * (grading * xi).sinh() / grading.sinh()
                } else {
                    r0 + (r1 - r0) * xi
                }
            })
            .collect();
        let faces: Vec<f64> = (0..n - 1).map(|j| 0.5 * (r[j] + r[j + 1])).collect();
        let flux: Vec<f64> = (0..n - 1).map(|j| faces[j].powi(3) / (r[j + 1] - r[j])).collect();
        let lo = |j: usize| if j == 0 { r[0] } else { faces[j - 1] };
        let hi = |j: usize| if j == n - 1 { r[n - 1] } else { faces[j] };
        let cell: Vec<f64> = (0..n).map(|j| (hi(j).powi(4) - lo(j).powi(4)) / 4.0).collect();
        let cell_r: Vec<f64> = (0..n).map(|j| (hi(j).powi(2) - lo(j).powi(2)) / 2.0).collect();
        let weights = cell.iter().map(|v| SPHERE_AREA * v).collect();
        let interior = (0..n).map(|j| j + 1 < n && (origin || j > 0)).collect();
        Ok(RadialMesh { domain: *domain, r, grading, cell, cell_r, flux, weights, interior, origin })
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn has_origin(&self) -> bool {
        self.origin
    }

    /// Index range of unknowns for angular momentum `ell`.
    pub fn sector_unknowns(&self, ell: usize) -> std::ops::Range<usize> {
        let first = if self.origin && ell == 0 { 0 } else { 1 };
        first..self.r.len() - 1
    }

    fn centrifugal(&self, ell: usize, j: usize) -> f64 {
        (ell * (ell + 2)) as f64 * self.cell_r[j]
    }

    /// Laplacian restricted to the angular-momentum sector `ell` (radial
    /// profile of u(r) Y_ell). Boundary values are extrapolated.
    pub fn sector_laplacian(&self, ell: usize, u: &[f64]) -> Vec<f64> {
        let n = self.r.len();
        let mut out = vec![0.0; n];
        let range = self.sector_unknowns(ell);
        for j in range.clone() {
            let right = self.flux[j] * (u[j + 1] - u[j]);
            let left = if j == 0 { 0.0 } else { self.flux[j - 1] * (u[j] - u[j - 1]) };
            out[j] = (right - left - self.centrifugal(ell, j) * u[j]) / self.cell[j];
        }
        // quadratic extrapolation to the nodes without an equation
        let extrap = |out: &mut Vec<f64>, b: usize, a: [usize; 3]| {
            let x = self.r[b];
            let mut v = 0.0;
            for i in 0..3 {
                let mut l = 1.0;
                for k in 0..3 {
                    if k != i {
                        l *= (x - self.r[a[k]]) / (self.r[a[i]] - self.r[a[k]]);
                    }
                }
                v += l * out[a[i]];
            }
            out[b] = v;
        };
        let (s, e) = (range.start, range.end);
        extrap(&mut out, n - 1, [e - 1, e - 2, e - 3]);
        if s == 1 {
            extrap(&mut out, 0, [1, 2, 3]);
        }
        out
    }

    pub fn laplacian(&self, u: &[f64]) -> Vec<f64> {
        self.sector_laplacian(0, u)
    }

    /// Solves the sector equation L_ell u = f with u = g on the nodes
    /// outside the unknown range.
    pub fn sector_solve(&self, ell: usize, f: &[f64], g: &[f64]) -> Result<Vec<f64>> {
        let range = self.sector_unknowns(ell);
        let m = range.len();
        let mut lower = vec![0.0; m];
        let mut diag = vec![0.0; m];
        let mut upper = vec![0.0; m];
        let mut rhs = vec![0.0; m];
        for (i, j) in range.clone().enumerate() {
            let cl = if j == 0 { 0.0 } else { self.flux[j - 1] };
            let cr = self.flux[j];
            lower[i] = cl;
            upper[i] = cr;
            diag[i] = -(cl + cr) - self.centrifugal(ell, j);
            rhs[i] = self.cell[j] * f[j];
            if i == 0 && j > 0 {
                rhs[i] -= cl * g[j - 1];
                lower[i] = 0.0;
            }
            if i == m - 1 {
                rhs[i] -= cr * g[j + 1];
                upper[i] = 0.0;
            }
        }
        let x = solve_tridiagonal(&lower, &diag, &upper, &rhs)?;
        let mut u = g.to_vec();
        for (i, j) in range.enumerate() {
            u[j] = x[i];
        }
        Ok(u)
    }

    pub fn solve(&self, f: &[f64], g: &[f64]) -> Result<Vec<f64>> {
        self.sector_solve(0, f, g)
    }

    /// Radial cell measure (integral of r^3 dr), the sector inner-product weight.
    pub fn cell_measure(&self) -> &[f64] {
        &self.cell
    }

    /// Linear interpolation of nodal values at radius `s` (clamped).
    pub fn interpolate(&self, values: &[f64], s: f64) -> f64 {
        let n = self.r.len();
        if s <= self.r[0] {
            return values[0];
        }
        if s >= self.r[n - 1] {
            return values[n - 1];
        }
        let j = self.r.partition_point(|&x| x <= s) - 1;
        let t = (s - self.r[j]) / (self.r[j + 1] - self.r[j]);
        values[j] * (1.0 - t) + values[j + 1] * t
    }
}

/// Uniform 4D lattice covering the bounding box of the domain, frame included.
#[derive(Debug)]
pub struct GridMesh {
    pub domain: DomainSpec,
    /// Interior lattice points per axis; the lattice has `n + 2` per axis.
    pub n: usize,
    pub h: [f64; 4],
    pub lo: [f64; 4],
    weights: Vec<f64>,
    energy_weights: Vec<f64>,
    interior: Vec<bool>,
    /// Interior node ids in lattice order.
    unknowns: Vec<usize>,
    /// Neighbor slots of each unknown: position in `unknowns`, or u32::MAX.
    neighbors: Vec<[u32; 8]>,
}

impl GridMesh {
    pub fn new(domain: &DomainSpec, n: usize) -> Result<Self> {
        if n < 8 {
            return invalid(format!("grid mesh needs at least 8 points per axis, got {n}"));
        }
        let half = domain.half_extents();
        let m = n + 2;
        let h = [0, 1, 2, 3].map(|a| 2.0 * half[a] / (n + 1) as f64);
        let lo = [0, 1, 2, 3].map(|a| -half[a]);
        let total = m.pow(4);
        let cell_volume: f64 = h.iter().product();
        let coords = |j: usize| [j % m, (j / m) % m, (j / (m * m)) % m, j / (m * m * m)];
        let interior: Vec<bool> = (0..total)
            .into_par_iter()
            .map(|j| {
                let c = coords(j);
                let x = [0, 1, 2, 3].map(|a| lo[a] + c[a] as f64 * h[a]);
                c.iter().all(|&ci| ci >= 1 && ci <= n) && domain.contains(&x)
            })
            .collect();
        let weights: Vec<f64> = (0..total)
            .into_par_iter()
            .map(|j| {
                let c = coords(j);
                let mut count = 0;
                for corner in 0..16usize {
                    let mut center = [0.0; 4];
                    let mut ok = true;
                    for a in 0..4 {
                        let lower = c[a] as i64 - ((corner >> a) & 1) as i64;
                        if lower < 0 || lower > n as i64 {
                            ok = false;
                            break;
                        }
                        center[a] = lo[a] + (lower as f64 + 0.5) * h[a];
                    }
                    if ok && domain.contains(&center) {
                        count += 1;
                    }
                }
                cell_volume * count as f64 / 16.0
            })
            .collect();
        let unknowns: Vec<usize> = (0..total).filter(|&j| interior[j]).collect();
        let mut slot = vec![u32::MAX; total];
        for (i, &j) in unknowns.iter().enumerate() {
            slot[j] = i as u32;
        }
        let strides = [1, m, m * m, m * m * m];
        let neighbors = unknowns
            .iter()
            .map(|&j| {
                let mut nb = [u32::MAX; 8];
                for a in 0..4 {
                    nb[2 * a] = slot[j - strides[a]];
                    nb[2 * a + 1] = slot[j + strides[a]];
                }
                nb
            })
            .collect();
        let energy_weights = interior.iter().map(|&i| if i { cell_volume } else { 0.0 }).collect();
        Ok(GridMesh { domain: *domain, n, h, lo, weights, energy_weights, interior, unknowns, neighbors })
    }

    fn side(&self) -> usize {
        self.n + 2
    }

    fn strides(&self) -> [usize; 4] {
        let m = self.side();
        [1, m, m * m, m * m * m]
    }

    pub fn coords(&self, j: usize) -> [usize; 4] {
        let m = self.side();
        [j % m, (j / m) % m, (j / (m * m)) % m, j / (m * m * m)]
    }

    pub fn position(&self, j: usize) -> Point {
        let c = self.coords(j);
        [0, 1, 2, 3].map(|a| self.lo[a] + c[a] as f64 * self.h[a])
    }

    pub fn unknown_count(&self) -> usize {
        self.unknowns.len()
    }

    pub fn laplacian(&self, u: &[f64]) -> Vec<f64> {
        let strides = self.strides();
        let inv_h2 = self.h.map(|h| 1.0 / (h * h));
        let mut out = vec![0.0; u.len()];
        let vals: Vec<(usize, f64)> = self
            .unknowns
            .par_iter()
            .map(|&j| {
                let mut s = 0.0;
                for a in 0..4 {
                    s += (u[j + strides[a]] - 2.0 * u[j] + u[j - strides[a]]) * inv_h2[a];
                }
                (j, s)
            })
            .collect();
        for (j, v) in vals {
            out[j] = v;
        }
        let m = self.side() as i64;
        for j in 0..u.len() {
            if self.interior[j] {
                continue;
            }
            let c = self.coords(j);
            let step = |a: usize, sign: i64, k: i64| -> Option<usize> {
                let ca = c[a] as i64 + sign * k;
                if ca < 0 || ca >= m {
                    return None;
                }
                let idx = (j as i64 + sign * k * strides[a] as i64) as usize;
                self.interior[idx].then_some(idx)
            };
            'dirs: for a in 0..4 {
                for sign in [1i64, -1] {
                    let Some(k1) = step(a, sign, 1) else { continue };
                    out[j] = match (step(a, sign, 2), step(a, sign, 3)) {
                        (Some(k2), Some(k3)) => 3.0 * out[k1] - 3.0 * out[k2] + out[k3],
                        (Some(k2), None) => 2.0 * out[k1] - out[k2],
                        _ => out[k1],
                    };
                    break 'dirs;
                }
            }
        }
        out
    }

    /// Applies -L on the unknowns (symmetric positive definite).
    fn apply_neg_lap(&self, x: &[f64], y: &mut [f64]) {
        let inv_h2 = self.h.map(|h| 1.0 / (h * h));
        let diag: f64 = 2.0 * inv_h2.iter().sum::<f64>();
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let nb = &self.neighbors[i];
            let mut s = diag * x[i];
            for a in 0..4 {
                for k in [nb[2 * a], nb[2 * a + 1]] {
                    if k != u32::MAX {
                        s -= inv_h2[a] * x[k as usize];
                    }
                }
            }
            *yi = s;
        });
    }

    pub fn solve(&self, f: &[f64], g: &[f64]) -> Result<Vec<f64>> {
        let strides = self.strides();
        let inv_h2 = self.h.map(|h| 1.0 / (h * h));
        // move boundary data to the right-hand side of -L_II x = -(f - L_IB g)
        let b: Vec<f64> = self
            .unknowns
            .par_iter()
            .map(|&j| {
                let mut boundary = 0.0;
                for a in 0..4 {
                    for k in [j - strides[a], j + strides[a]] {
                        if !self.interior[k] {
                            boundary += g[k] * inv_h2[a];
                        }
                    }
                }
                boundary - f[j]
            })
            .collect();
        let out = conjugate_gradient(|x, y| self.apply_neg_lap(x, y), &b, GRID_CG_TOL, GRID_CG_MAX_ITER)?;
        let mut u = g.to_vec();
        for (i, &j) in self.unknowns.iter().enumerate() {
            u[j] = out.x[i];
        }
        Ok(u)
    }
}

/// Equal-weight point set on S^3 in Hopf coordinates, symmetric under x -> -x
/// when both angular counts are even.
#[derive(Debug, Clone)]
pub struct SphereDesign {
    pub directions: Vec<Point>,
}

impl SphereDesign {
    pub fn new(n_height: usize, n_first: usize, n_second: usize) -> Self {
        let mut directions = Vec::with_capacity(n_height * n_first * n_second);
        for a in 0..n_height {
            let u = (a as f64 + 0.5) / n_height as f64;
            let (s, c) = (u.sqrt(), (1.0 - u).sqrt());
            for b in 0..n_first {
                let x1 = 2.0 * PI * (b as f64 + 0.5) / n_first as f64;
                for d in 0..n_second {
                    let x2 = 2.0 * PI * (d as f64 + 0.25 + 0.5 * (b % 2) as f64) / n_second as f64;
                    directions.push([s * x1.cos(), s * x1.sin(), c * x2.cos(), c * x2.sin()]);
                }
            }
        }
        SphereDesign { directions }
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }
}

impl Default for SphereDesign {
    fn default() -> Self {
        SphereDesign::new(4, 8, 8)
    }
}

/// Quadrature point cloud adapted to a set of concentration centers:
/// a background midpoint lattice away from the centers plus graded
/// spherical quadrature inside a ball around each center.
#[derive(Debug)]
pub struct CloudMesh {
    pub domain: DomainSpec,
    pub points: Vec<Point>,
    pub centers: Vec<Point>,
    /// Radius of the refined ball around each center.
    pub core_radius: Vec<f64>,
    weights: Vec<f64>,
    interior: Vec<bool>,
    background_spacing: f64,
}

#[derive(Debug, Clone)]
pub struct CloudOptions {
    /// Background lattice cells per axis over the bounding box.
    pub background_n: usize,
    /// Gauss panels and points per panel in the graded radial variable.
    pub radial_panels: usize,
    pub radial_points: usize,
    pub design: SphereDesign,
}

impl Default for CloudOptions {
    fn default() -> Self {
        CloudOptions { background_n: 24, radial_panels: 10, radial_points: 6, design: SphereDesign::default() }
    }
}

fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    // Newton on the Legendre recurrence; nodes on [-1, 1]
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                let (mut q0, mut q1) = (1.0, z);
                for k in 2..=n {
                    let q2 = ((2 * k - 1) as f64 * z * q1 - (k - 1) as f64 * q0) / k as f64;
                    q0 = q1;
                    q1 = q2;
                }
                let dq = n as f64 * (z * q1 - q0) / (z * z - 1.0);
                w[i] = 2.0 / ((1.0 - z * z) * dq * dq);
                break;
            }
        }
        x[i] = z;
    }
    (x, w)
}

impl CloudMesh {
    /// `scale` is the core width of the concentration profiles (1/lambda).
    pub fn adapted(domain: &DomainSpec, centers: &[Point], scale: f64, opts: &CloudOptions) -> Result<Self> {
        if centers.is_empty() {
            return invalid("cloud mesh needs at least one center");
        }
        if !(scale > 0.0) {
            return invalid("core scale must be positive");
        }
        for c in centers {
            if !domain.contains(c) {
                return invalid(format!("center {c:?} lies outside the domain"));
            }
        }
        let half = domain.half_extents();
        let hb = 2.0 * half.iter().cloned().fold(0.0, f64::max) / opts.background_n as f64;
        let core_radius: Vec<f64> = centers
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let mut rho = 2.0 * domain.eta;
                for (j, d) in centers.iter().enumerate() {
                    if i != j {
                        rho = rho.min(0.45 * dist(c, d));
                    }
                }
                rho.min(0.95 * domain.boundary_distance(c)).max(2.0 * hb.min(rho))
            })
            .collect();
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let cells = [0, 1, 2, 3].map(|a| ((2.0 * half[a] / hb).ceil() as usize).max(1));
        let step = [0, 1, 2, 3].map(|a| 2.0 * half[a] / cells[a] as f64);
        let cell_volume: f64 = step.iter().product();
        for i3 in 0..cells[3] {
            for i2 in 0..cells[2] {
                for i1 in 0..cells[1] {
                    for i0 in 0..cells[0] {
                        let idx = [i0, i1, i2, i3];
                        let x = [0, 1, 2, 3].map(|a| -half[a] + (idx[a] as f64 + 0.5) * step[a]);
                        if !domain.contains(&x) {
                            continue;
                        }
                        if centers.iter().zip(&core_radius).any(|(c, rho)| dist(&x, c) < *rho) {
                            continue;
                        }
                        points.push(x);
                        weights.push(cell_volume);
                    }
                }
            }
        }
        // the background lattice approximates the excluded balls by a
        // staircase; rescale it so that background + balls = |domain|
        let ball_volume: f64 = core_radius.iter().map(|r| PI * PI * r.powi(4) / 2.0).sum();
        if let Some(vol) = domain.exact_volume() {
            let bg: f64 = weights.iter().sum();
            if bg > 0.0 && vol > ball_volume {
                let f = (vol - ball_volume) / bg;
                weights.iter_mut().for_each(|w| *w *= f);
            }
        }
        let (gx, gw) = gauss_legendre(opts.radial_points);
        let m = opts.design.len() as f64;
        for (c, &rho) in centers.iter().zip(&core_radius) {
            let a = (rho / scale).asinh();
            for p in 0..opts.radial_panels {
                let (z0, z1) = (p as f64 / opts.radial_panels as f64, (p + 1) as f64 / opts.radial_panels as f64);
                for (x, w) in gx.iter().zip(&gw) {
                    let z = z0 + (z1 - z0) * (x + 1.0) / 2.0;
                    let wz = w * (z1 - z0) / 2.0;
                    let s = scale * (a * z).sinh();
                    let ds = scale * a * (a * z).cosh();
                    let radial_w = wz * ds * s.powi(3) * SPHERE_AREA / m;
                    for d in &opts.design.directions {
                        points.push([c[0] + s * d[0], c[1] + s * d[1], c[2] + s * d[2], c[3] + s * d[3]]);
                        weights.push(radial_w);
                    }
                }
            }
        }
        let interior = vec![true; points.len()];
        Ok(CloudMesh {
            domain: *domain,
            points,
            centers: centers.to_vec(),
            core_radius,
            weights,
            interior,
            background_spacing: hb,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::norm4;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(6);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert!((s - 2.0 / 11.0).abs() < 1e-13);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
    }

    #[test]
    fn sphere_design_is_balanced() {
        let d = SphereDesign::default();
        let mut mean = [0.0; 4];
        let mut second = [0.0; 4];
        for p in &d.directions {
            assert!((norm4(p) - 1.0).abs() < 1e-14);
            for a in 0..4 {
                mean[a] += p[a] / d.len() as f64;
                second[a] += p[a] * p[a] / d.len() as f64;
            }
        }
        for a in 0..4 {
            assert!(mean[a].abs() < 1e-14);
            assert!((second[a] - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn radial_weights_sum_to_volume() {
        let d = DomainSpec::shell(1.0, 2.0).unwrap();
        let m = RadialMesh::new(&d, 50, 0.0).unwrap();
        let vol: f64 = m.weights.iter().sum();
        assert!((vol - d.exact_volume().unwrap()).abs() < 1e-12);
    }

    #[test]
    fn too_coarse_is_rejected() {
        let d = DomainSpec::ball(1.0).unwrap();
        assert!(matches!(RadialMesh::new(&d, 7, 0.0), Err(Error::InvalidArgument(_))));
        assert!(GridMesh::new(&d, 4).is_err());
    }

    #[test]
    fn cloud_measures_volume() {
        let d = DomainSpec::ball(1.0).unwrap();
        let m = CloudMesh::adapted(&d, &[[0.1, 0.0, 0.0, 0.0]], 1e-3, &CloudOptions::default()).unwrap();
        let vol: f64 = m.weights.iter().sum();
        assert!((vol / d.exact_volume().unwrap() - 1.0).abs() < 1e-9);
    }
}
