//! Concentrating test functions, the boundary-correcting projection P and
//! the log λ asymptotics of the energy along them.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barycenters::{canonicalize, FormalBarycenter};
use crate::domain::{
    dist, laplacian, norm4, poisson_solve, CloudMesh, CloudOptions, DomainSpec, Field, Mesh, Point, Resolution,
};
use crate::error::{invalid, Error, Result};
use crate::functional::mt::{linear_fit, mt_lhs};
use crate::functional::{h_norm, h_norm_sq, i_tau, WeightH, MT_CONSTANT};

/// Default concentration parameter for `g_k_map`.
pub const DEFAULT_G_LAMBDA: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BubbleConvention {
    /// e^φ = Σ t_i (2λ/(1+λ²χ²))⁴, which concentrates at the atoms.
    #[default]
    Corrected,
    /// φ = ¼ log Σ t_i (2λ/(1+λ²χ²))⁴. The exponential mass of this field
    /// spreads out as λ grows; kept for comparison runs.
    Literal,
}

impl std::str::FromStr for BubbleConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "corrected" => Ok(BubbleConvention::Corrected),
            "literal" => Ok(BubbleConvention::Literal),
            other => invalid(format!("unknown bubble convention {other:?} (expected corrected or literal)")),
        }
    }
}

/// Non-decreasing C² cutoff: t on [0, η], 2η beyond 2η, quintic in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiEtaCutoff {
    pub eta: f64,
}

impl ChiEtaCutoff {
    pub fn new(eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return invalid("eta must be positive");
        }
        Ok(ChiEtaCutoff { eta })
    }

    pub fn value(&self, t: f64) -> f64 {
        chi_eta(t, self.eta)
    }
}

pub fn chi_eta(t: f64, eta: f64) -> f64 {
    if t <= eta {
        t
    } else if t >= 2.0 * eta {
        2.0 * eta
    } else {
        // q(0)=0, q'(0)=1, q(1)=1, q'(1)=0 and q''=0 at both ends
        let s = (t - eta) / eta;
        let q = s * (1.0 + s * s * (4.0 + s * (-7.0 + 3.0 * s)));
        eta * (1.0 + q)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleParams {
    pub lambda: f64,
    pub sigma: FormalBarycenter,
    pub eta: f64,
    #[serde(default)]
    pub convention: BubbleConvention,
}

impl BubbleParams {
    pub fn new(lambda: f64, sigma: FormalBarycenter, eta: f64) -> Result<Self> {
        if !(lambda >= 1.0 && lambda.is_finite()) {
            return invalid("lambda must be at least 1");
        }
        ChiEtaCutoff::new(eta)?;
        Ok(BubbleParams { lambda, sigma, eta, convention: BubbleConvention::Corrected })
    }

    pub fn with_convention(mut self, convention: BubbleConvention) -> Self {
        self.convention = convention;
        self
    }

    /// φ(y), with the sum of profiles taken in log space.
    pub fn value(&self, y: &Point) -> f64 {
        let l = self.lambda;
        let logs: Vec<f64> = self
            .sigma
            .atoms
            .iter()
            .map(|a| {
                let c = chi_eta(dist(y, &a.x), self.eta);
                a.t.ln() + 4.0 * ((2.0 * l).ln() - (l * l * c * c).ln_1p())
            })
            .collect();
        let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let v = m + logs.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        match self.convention {
            BubbleConvention::Corrected => v,
            BubbleConvention::Literal => 0.25 * v,
        }
    }
}

fn check_atoms(mesh: &Mesh, sigma: &FormalBarycenter) -> Result<()> {
    if let Some(a) = sigma.atoms.iter().find(|a| !mesh.domain().contains(&a.x)) {
        return invalid(format!("atom {:?} lies outside the domain", a.x));
    }
    if matches!(mesh, Mesh::Radial(_)) && sigma.atoms.iter().any(|a| norm4(&a.x) > 0.0) {
        return invalid("a radial mesh only represents bubbles centered at the origin");
    }
    Ok(())
}

pub fn bubble_multi(mesh: &Arc<Mesh>, params: &BubbleParams) -> Result<Field> {
    check_atoms(mesh, &params.sigma)?;
    Ok(Field::from_fn(mesh, |y| params.value(y)))
}

/// P φ = φ − h with h biharmonic, h = φ and Δh = Δφ on the boundary.
pub fn project_p(phi: &Field) -> Result<Field> {
    let lap = laplacian(phi)?;
    let zero = Field::zeros(&phi.mesh);
    let w = poisson_solve(&zero, &lap)?;
    let h = poisson_solve(&w, phi)?;
    Ok(phi.sub(&h))
}

/// Mesh on which bubbles of the given barycenter are resolved: a graded
/// radial mesh when all mass sits at the center of a ball, otherwise a point
/// cloud refined around the atoms.
pub fn bubble_mesh(domain: &DomainSpec, sigma: &FormalBarycenter, lambda: f64) -> Result<Arc<Mesh>> {
    let centered = sigma.atoms.iter().all(|a| norm4(&a.x) == 0.0);
    if centered && matches!(domain.shape, crate::domain::Shape::Ball { .. }) {
        return Mesh::build(domain, Resolution::radial(2000));
    }
    let cloud = CloudMesh::adapted(domain, &sigma.points(), 1.0 / lambda, &CloudOptions::default())?;
    Ok(Arc::new(Mesh::Cloud(cloud)))
}

/// R(Σ t_i P φ_{λ,x_i}) with R(u) = u/‖u‖.
pub fn g_k_map(
    mesh: &Arc<Mesh>,
    atoms: &[(f64, Point)],
    lambda: f64,
    eta: f64,
    convention: BubbleConvention,
) -> Result<Field> {
    let sigma = canonicalize(atoms, 0.0)?;
    check_atoms(mesh, &sigma)?;
    let mut sum = Field::zeros(mesh);
    for a in &sigma.atoms {
        let single = BubbleParams::new(lambda, FormalBarycenter::single(a.x), eta)?.with_convention(convention);
        sum = sum.axpy(a.t, &project_p(&bubble_multi(mesh, &single)?)?);
    }
    let n = h_norm(&sum)?;
    if !(n > 0.0) {
        return Err(Error::Domain("g_k image has zero norm".into()));
    }
    Ok(sum.scaled(1.0 / n))
}

/// Fraction of ∫ e^u carried within distance `radius` of the atoms.
pub fn mass_near_atoms(u: &Field, sigma: &FormalBarycenter, radius: f64) -> f64 {
    let shift = u.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut near, mut total) = (0.0, 0.0);
    for (j, (v, w)) in u.values.iter().zip(u.mesh.weights()).enumerate() {
        let m = w * (v - shift).exp();
        total += m;
        let y = u.mesh.position(j);
        if sigma.atoms.iter().any(|a| dist(&y, &a.x) < radius) {
            near += m;
        }
    }
    near / total
}

/// Geometric grid of `n` points from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| (lo.ln() + (hi / lo).ln() * i as f64 / (n - 1) as f64).exp()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
}

fn upper_half_fit(lambda: &[f64], y: &[f64]) -> Fit {
    let from = lambda.len() / 2;
    let x: Vec<f64> = lambda[from..].iter().map(|l| l.ln()).collect();
    let (slope, intercept, stderr) = linear_fit(&x, &y[from..]);
    Fit { slope, intercept, stderr }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyScan {
    pub sigma: FormalBarycenter,
    pub tau: f64,
    pub convention: BubbleConvention,
    pub lambda: Vec<f64>,
    /// ½‖Pφ‖², J(Pφ) and I_τ(Pφ) per λ.
    pub quad: Vec<f64>,
    #[serde(rename = "J")]
    pub j: Vec<f64>,
    #[serde(rename = "I")]
    pub i: Vec<f64>,
    /// Fits against log λ over the upper half of the grid.
    pub fit_quad: Fit,
    pub fit_j: Fit,
    pub fit_i: Fit,
    /// λ values whose evaluation failed, with the error.
    pub failures: Vec<(f64, String)>,
    pub partial: bool,
}

pub fn energy_asymptotics(
    mesh: &Arc<Mesh>,
    sigma: &FormalBarycenter,
    tau: f64,
    lambda_grid: &[f64],
    eta: f64,
    convention: BubbleConvention,
) -> Result<EnergyScan> {
    if lambda_grid.len() < 4 {
        return invalid("energy scan needs at least four lambda values");
    }
    if lambda_grid.iter().any(|&l| l < 10.0) {
        return invalid("energy scan needs lambda >= 10");
    }
    let lo = lambda_grid.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = lambda_grid.iter().cloned().fold(0.0, f64::max);
    if hi / lo < 100.0 {
        return invalid("lambda grid must span at least two decades");
    }
    check_atoms(mesh, sigma)?;
    let h = WeightH::unit(mesh);
    let rows: Vec<(f64, Result<(f64, f64, f64)>)> = lambda_grid
        .par_iter()
        .map(|&l| {
            let run = || -> Result<(f64, f64, f64)> {
                let p = BubbleParams::new(l, sigma.clone(), eta)?.with_convention(convention);
                let phi = project_p(&bubble_multi(mesh, &p)?)?;
                let e = i_tau(&phi, tau, &h)?;
                Ok((e.quadratic, e.j_term, e.total))
            };
            (l, run())
        })
        .collect();
    let mut out = EnergyScan {
        sigma: sigma.clone(),
        tau,
        convention,
        lambda: Vec::new(),
        quad: Vec::new(),
        j: Vec::new(),
        i: Vec::new(),
        fit_quad: Fit { slope: f64::NAN, intercept: f64::NAN, stderr: f64::NAN },
        fit_j: Fit { slope: f64::NAN, intercept: f64::NAN, stderr: f64::NAN },
        fit_i: Fit { slope: f64::NAN, intercept: f64::NAN, stderr: f64::NAN },
        failures: Vec::new(),
        partial: false,
    };
    for (l, r) in rows {
        match r {
            Ok((q, j, i)) => {
                out.lambda.push(l);
                out.quad.push(q);
                out.j.push(j);
                out.i.push(i);
            }
            Err(e) => out.failures.push((l, e.to_string())),
        }
    }
    out.partial = !out.failures.is_empty();
    if out.lambda.len() >= 4 {
        out.fit_quad = upper_half_fit(&out.lambda, &out.quad);
        out.fit_j = upper_half_fit(&out.lambda, &out.j);
        out.fit_i = upper_half_fit(&out.lambda, &out.i);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleMtSample {
    pub lambda: f64,
    pub norm_sq_scaled: f64,
    pub lhs: f64,
    pub gap: f64,
}

/// Moser–Trudinger quantities along P φ_λ for a single bubble.
pub fn bubble_mt_scan(mesh: &Arc<Mesh>, center: Point, eta: f64, lambda_grid: &[f64]) -> Result<Vec<BubbleMtSample>> {
    lambda_grid
        .par_iter()
        .map(|&l| {
            let p = BubbleParams::new(l, FormalBarycenter::single(center), eta)?;
            let u = project_p(&bubble_multi(mesh, &p)?)?;
            let norm_sq_scaled = h_norm_sq(&u)? / MT_CONSTANT;
            let lhs = mt_lhs(&u);
            Ok(BubbleMtSample { lambda: l, norm_sq_scaled, lhs, gap: lhs - norm_sq_scaled })
        })
        .collect()
}
