//! Leading eigenvalues of DT_τ(u) and the resulting Leray–Schauder index.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{biharmonic_solve_navier, integrate, Field, Mesh, RadialMesh};
use crate::error::{Error, Result};
use crate::functional::{energy_representer, h_inner, normalized_density, WeightH};
use crate::linalg::symmetric_eigen;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumOptions {
    pub block: usize,
    pub max_block: usize,
    pub max_iterations: usize,
    /// Relative change of the relevant Ritz values that counts as converged.
    pub tol: f64,
    /// Eigenvalues closer than this to 1 make the index undetermined.
    pub degeneracy_band: f64,
    pub max_sector: usize,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions {
            block: 8,
            max_block: 64,
            max_iterations: 3000,
            tol: 1e-11,
            degeneracy_band: 1e-6,
            max_sector: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorSpectrum {
    /// Angular momentum; absent for meshes without the decomposition.
    pub ell: Option<usize>,
    pub multiplicity: usize,
    /// Leading Ritz values, decreasing.
    pub eigenvalues: Vec<f64>,
    pub above_one: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexReport {
    /// Eigenvalues of DT_τ above 1, with multiplicity.
    pub unstable_count: usize,
    /// (−1)^unstable_count, or 0 when an eigenvalue sits at 1.
    pub index: i8,
    /// Smallest |μ − 1| over the computed eigenvalues.
    pub min_gap: f64,
    pub sectors: Vec<SectorSpectrum>,
}

impl IndexReport {
    pub fn degenerate(&self) -> bool {
        self.index == 0
    }
}

fn orthonormalize(v: &mut Vec<Vec<f64>>, inner: &dyn Fn(&[f64], &[f64]) -> f64) {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(v.len());
    for mut x in v.drain(..) {
        let n0 = inner(&x, &x).sqrt();
        for _ in 0..2 {
            for q in &out {
                let c = inner(q, &x);
                x.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
        }
        let n = inner(&x, &x).sqrt();
        if n > 1e-12 * n0 && n > 0.0 {
            x.iter_mut().for_each(|a| *a /= n);
            out.push(x);
        }
    }
    *v = out;
}

/// Subspace iteration with Rayleigh–Ritz for the leading eigenvalues of an
/// operator that is self-adjoint in `inner`. The block grows until its
/// smallest Ritz value is below `floor`, so that every eigenvalue above the
/// floor is captured; Ritz values above 1.5·floor must settle.
fn leading_eigenvalues(
    apply: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    inner: &dyn Fn(&[f64], &[f64]) -> f64,
    random: &mut dyn FnMut() -> Vec<f64>,
    floor: f64,
    opts: &SpectrumOptions,
) -> Result<Vec<f64>> {
    let mut m = opts.block;
    let mut v: Vec<Vec<f64>> = Vec::new();
    loop {
        while v.len() < m {
            let x = random();
            v.push(apply(&x)?);
        }
        let mut prev: Vec<f64> = Vec::new();
        let mut vals = Vec::new();
        let mut converged = false;
        for _ in 0..opts.max_iterations {
            orthonormalize(&mut v, inner);
            if v.is_empty() {
                return Ok(Vec::new());
            }
            let w: Vec<Vec<f64>> = v.iter().map(|x| apply(x)).collect::<Result<_>>()?;
            let k = v.len();
            let hm: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| inner(&v[i], &w[j])).collect()).collect();
            let (values, vectors) = symmetric_eigen(&hm);
            let n = w[0].len();
            v = vectors
                .iter()
                .map(|s| {
                    let mut x = vec![0.0; n];
                    for (c, wi) in s.iter().zip(&w) {
                        x.iter_mut().zip(wi).for_each(|(a, b)| *a += c * b);
                    }
                    x
                })
                .collect();
            vals = values;
            if prev.len() == vals.len() {
                let relevant = vals.iter().take_while(|&&x| x > 1.5 * floor).count().max(1);
                if (0..relevant).all(|i| (vals[i] - prev[i]).abs() <= opts.tol * vals[i].abs().max(1.0)) {
                    converged = true;
                    break;
                }
            }
            prev = vals.clone();
        }
        if !converged {
            return Err(Error::NoConvergence(format!("subspace iteration with block {m} did not settle")));
        }
        let full = vals.len() == m;
        if full && vals.last().copied().unwrap_or(0.0) > floor && m < opts.max_block {
            m *= 2;
            continue;
        }
        if full && vals.last().copied().unwrap_or(0.0) > 1.0 {
            return Err(Error::NoConvergence(format!("more than {m} eigenvalues above 1")));
        }
        return Ok(vals);
    }
}

fn count_above(vals: &[f64]) -> usize {
    vals.iter().filter(|&&x| x > 1.0).count()
}

fn finish(sectors: Vec<SectorSpectrum>, band: f64) -> IndexReport {
    let unstable_count = sectors.iter().map(|s| s.above_one * s.multiplicity).sum();
    let min_gap =
        sectors.iter().flat_map(|s| s.eigenvalues.iter().map(|x| (x - 1.0).abs())).fold(f64::INFINITY, f64::min);
    let index = if min_gap < band {
        0
    } else if unstable_count % 2 == 0 {
        1
    } else {
        -1
    };
    IndexReport { unstable_count, index, min_gap, sectors }
}

/// DT_τ(u)v = τ Δ^{-2}(ρv − ρ ∫ρv) with ρ the normalized density of u.
pub fn dt_apply(rho: &Field, tau: f64, v: &Field) -> Result<Field> {
    let c = integrate(&rho.with_values(rho.values.iter().zip(&v.values).map(|(a, b)| a * b).collect()));
    let src = rho.with_values(rho.values.iter().zip(&v.values).map(|(r, x)| r * (x - c)).collect());
    Ok(biharmonic_solve_navier(&energy_representer(&src))?.scaled(tau))
}

fn radial_sectors(m: &RadialMesh, rho: &[f64], tau: f64, opts: &SpectrumOptions) -> Result<Vec<SectorSpectrum>> {
    let weights = m.cell_measure().to_vec();
    let n = m.len();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EC7);
    let mut sectors = Vec::new();
    for ell in 0..=opts.max_sector {
        let range = m.sector_unknowns(ell);
        // ∫ρ v only couples to the rotation-invariant sector
        let mass: Vec<f64> = (0..n).map(|j| std::f64::consts::PI.powi(2) * 2.0 * weights[j] * rho[j]).collect();
        let apply = |v: &[f64]| -> Result<Vec<f64>> {
            let c = if ell == 0 { range.clone().map(|j| mass[j] * v[j]).sum::<f64>() } else { 0.0 };
            let mut f = vec![0.0; n];
            for j in range.clone() {
                f[j] = rho[j] * (v[j] - c);
            }
            let zero = vec![0.0; n];
            let y = m.sector_solve(ell, &f, &zero)?;
            let mut z = m.sector_solve(ell, &y, &zero)?;
            z.iter_mut().for_each(|x| *x *= tau);
            Ok(z)
        };
        let inner = |a: &[f64], b: &[f64]| -> f64 {
            let la = m.sector_laplacian(ell, a);
            let lb = m.sector_laplacian(ell, b);
            range.clone().map(|j| weights[j] * la[j] * lb[j]).sum()
        };
        let mut random = || -> Vec<f64> {
            let mut x = vec![0.0; n];
            for j in range.clone() {
                x[j] = rng.gen_range(-1.0..1.0);
            }
            x
        };
        let vals = leading_eigenvalues(&apply, &inner, &mut random, 0.5, opts)?;
        let above = count_above(&vals);
        let top = vals.first().copied().unwrap_or(0.0);
        sectors.push(SectorSpectrum {
            ell: Some(ell),
            multiplicity: (ell + 1) * (ell + 1),
            eigenvalues: vals,
            above_one: above,
        });
        // sector operators decrease with ell beyond the constrained ell = 0
        if ell >= 1 && top < 1.0 - 0.5 {
            break;
        }
        if ell == opts.max_sector {
            return Err(Error::NoConvergence(format!("eigenvalues above 1/2 persist up to sector {ell}")));
        }
    }
    Ok(sectors)
}

/// Counts eigenvalues of DT_τ(u) above 1. Radial meshes are split into
/// angular-momentum sectors (u is radial there); grids use the full operator.
pub fn dt_spectrum(u: &Field, tau: f64, h: &WeightH, opts: &SpectrumOptions) -> Result<IndexReport> {
    let rho = normalized_density(u, h);
    let sectors = match &*u.mesh {
        Mesh::Radial(m) => radial_sectors(m, &rho.values, tau, opts)?,
        Mesh::Grid(_) => {
            let interior = u.mesh.interior().to_vec();
            let mut rng = ChaCha8Rng::seed_from_u64(0x5EC7);
            let apply = |v: &[f64]| -> Result<Vec<f64>> { Ok(dt_apply(&rho, tau, &u.with_values(v.to_vec()))?.values) };
            let inner = |a: &[f64], b: &[f64]| -> f64 {
                h_inner(&u.with_values(a.to_vec()), &u.with_values(b.to_vec())).unwrap_or(f64::NAN)
            };
            let mut random =
                || -> Vec<f64> { interior.iter().map(|&i| if i { rng.gen_range(-1.0..1.0) } else { 0.0 }).collect() };
            let vals = leading_eigenvalues(&apply, &inner, &mut random, 0.5, opts)?;
            let above = count_above(&vals);
            vec![SectorSpectrum { ell: None, multiplicity: 1, eigenvalues: vals, above_one: above }]
        }
        Mesh::Cloud(_) => return Err(Error::Unsupported { op: "spectrum", mesh: "cloud" }),
    };
    Ok(finish(sectors, opts.degeneracy_band))
}
