use super::field::Field;
use crate::error::Result;

/// Discrete Laplacian. Values on non-interior nodes are extrapolated from
/// the interior.
pub fn laplacian(u: &Field) -> Result<Field> {
    let values = u.mesh.apply_laplacian(&u.values)?;
    Ok(u.with_values(values))
}

/// Solves Δu = f in the interior with u = g on the remaining nodes.
pub fn poisson_solve(f: &Field, g: &Field) -> Result<Field> {
    f.check_compatible(g)?;
    let values = f.mesh.solve_dirichlet(&f.values, &g.values)?;
    Ok(f.with_values(values))
}

/// Solves Δ²u = f with u = Δu = 0 on the boundary by two Dirichlet solves.
pub fn biharmonic_solve_navier(f: &Field) -> Result<Field> {
    let zero = vec![0.0; f.len()];
    let v = f.mesh.solve_dirichlet(&f.values, &zero)?;
    let u = f.mesh.solve_dirichlet(&v, &zero)?;
    Ok(f.with_values(u))
}

pub fn integrate(u: &Field) -> f64 {
    u.values.iter().zip(u.mesh.weights()).map(|(v, w)| v * w).sum()
}

/// `log ∫ h e^u` evaluated with a max shift so that large `u` cannot overflow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogIntegral {
    pub log_value: f64,
    pub shift: f64,
}

impl LogIntegral {
    pub fn value(&self) -> f64 {
        self.log_value.exp()
    }
}

/// `h` defaults to the constant 1.
pub fn log_integral_exp(u: &Field, h: Option<&Field>) -> LogIntegral {
    let shift = u.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w = u.mesh.weights();
    let sum: f64 = match h {
        Some(h) => u.values.iter().zip(w).zip(&h.values).map(|((v, w), hv)| w * hv * (v - shift).exp()).sum(),
        None => u.values.iter().zip(w).map(|(v, w)| w * (v - shift).exp()).sum(),
    };
    LogIntegral { log_value: shift + sum.ln(), shift }
}
