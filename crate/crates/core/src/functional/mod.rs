//! The energy functional I_tau(u) = ½‖u‖² − τ J(u), its gradient in the
//! energy inner product, and the Moser–Trudinger quantities.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{biharmonic_solve_navier, laplacian, log_integral_exp, Field, Mesh};
use crate::error::{invalid, Result};

mod covering;
pub mod mt;

pub use covering::{concentration_check, covering_select, ConcentrationRecord, Covering, CoveringOptions};
pub use mt::{improved_mt_check, mt_gap, ImprovedMtRecord, Region};

/// Critical constant of the Adams inequality in four dimensions.
pub const MT_CONSTANT: f64 = 128.0 * PI * PI;

/// Positive weight h multiplying e^u.
#[derive(Debug, Clone)]
pub struct WeightH(Field);

impl WeightH {
    pub fn new(h: Field) -> Result<Self> {
        if h.values.iter().any(|v| !(*v > 0.0)) {
            return invalid("weight h must be positive at every node");
        }
        Ok(WeightH(h))
    }

    pub fn unit(mesh: &Arc<Mesh>) -> Self {
        WeightH(Field::constant(mesh, 1.0))
    }

    pub fn field(&self) -> &Field {
        &self.0
    }

    pub fn sup_log(&self) -> f64 {
        self.0.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub quadratic: f64,
    pub j_term: f64,
    pub total: f64,
    pub tau: f64,
}

/// Energy inner product: sum over interior nodes of w (Lu)(Lv).
pub fn h_inner(u: &Field, v: &Field) -> Result<f64> {
    u.check_compatible(v)?;
    let lu = laplacian(u)?;
    let lv = if std::ptr::eq(u, v) { lu.clone() } else { laplacian(v)? };
    Ok(lap_inner(&lu, &lv))
}

fn lap_inner(lu: &Field, lv: &Field) -> f64 {
    let w = lu.mesh.energy_weights();
    let interior = lu.mesh.interior();
    let mut s = 0.0;
    for j in 0..lu.len() {
        if interior[j] {
            s += w[j] * lu.values[j] * lv.values[j];
        }
    }
    s
}

pub fn h_norm_sq(u: &Field) -> Result<f64> {
    let lu = laplacian(u)?;
    Ok(lap_inner(&lu, &lu))
}

pub fn h_norm(u: &Field) -> Result<f64> {
    Ok(h_norm_sq(u)?.sqrt())
}

/// J(u) = log((1/|Ω|) ∫ h e^u).
pub fn j_value(u: &Field, h: &WeightH) -> f64 {
    log_integral_exp(u, Some(h.field())).log_value - u.mesh.volume().ln()
}

pub fn i_tau(u: &Field, tau: f64, h: &WeightH) -> Result<EnergyBreakdown> {
    if !(tau > 0.0) {
        return invalid(format!("tau must be positive, got {tau}"));
    }
    let quadratic = 0.5 * h_norm_sq(u)?;
    let j_term = j_value(u, h);
    Ok(EnergyBreakdown { quadratic, j_term, total: quadratic - tau * j_term, tau })
}

/// h e^u / ∫ h e^u, evaluated with a max shift.
pub fn normalized_density(u: &Field, h: &WeightH) -> Field {
    let li = log_integral_exp(u, Some(h.field()));
    u.with_values(u.values.iter().zip(&h.field().values).map(|(v, hv)| hv * (v - li.log_value).exp()).collect())
}

/// Density rescaled by quadrature/energy weight ratios, so that
/// ⟨Δ^{-2} rho_hat, v⟩ equals ∫ rho v for the quadrature.
pub(crate) fn energy_representer(rho: &Field) -> Field {
    let w = rho.mesh.weights();
    let we = rho.mesh.energy_weights();
    let interior = rho.mesh.interior();
    rho.with_values(
        (0..rho.len()).map(|j| if interior[j] && we[j] > 0.0 { rho.values[j] * w[j] / we[j] } else { 0.0 }).collect(),
    )
}

/// T_tau(u) = τ Δ^{-2}(h e^u / ∫ h e^u) with Navier boundary conditions.
pub fn t_tau(u: &Field, tau: f64, h: &WeightH) -> Result<Field> {
    if !(tau > 0.0) {
        return invalid(format!("tau must be positive, got {tau}"));
    }
    let rho = energy_representer(&normalized_density(u, h));
    Ok(biharmonic_solve_navier(&rho)?.scaled(tau))
}

/// Gradient of I_tau in the energy inner product: u − T_tau(u).
pub fn grad_i(u: &Field, tau: f64, h: &WeightH) -> Result<Field> {
    Ok(u.sub(&t_tau(u, tau, h)?))
}

/// Gradient of J in the energy inner product: Δ^{-2}(h e^u / ∫ h e^u).
pub fn grad_j(u: &Field, h: &WeightH) -> Result<Field> {
    biharmonic_solve_navier(&energy_representer(&normalized_density(u, h)))
}

/// Mean (1/|Ω|) ∫ u.
pub fn mean(u: &Field) -> f64 {
    crate::domain::integrate(u) / u.mesh.volume()
}
