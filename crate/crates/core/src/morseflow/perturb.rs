//! Localized linear perturbations that make the critical set non-degenerate.

use serde::Serialize;

use super::flow::{smoothstep, smoothstep_derivative};
use super::newton::{newton_core, record, ContinuationRecord, NewtonOptions};
use crate::domain::Field;
use crate::error::{invalid, Error, Result};
use crate::functional::mt::random_field;
use crate::functional::{grad_i, h_inner, h_norm, i_tau, WeightH};

/// Largest slope of the cutoff s(x) = 1 − smoothstep(x − 1).
pub const CUTOFF_SLOPE: f64 = 15.0 / 8.0;

#[derive(Debug, Clone, Serialize)]
pub struct PerturbationChecks {
    /// Largest |Ĩ − Ī| over samples outside 𝒦_{2δ}.
    pub outside_max_difference: f64,
    pub outside_samples: usize,
    /// Smallest ‖∇Ī‖ over the sampled shell δ ≤ dist(u, 𝒦) ≤ 2δ.
    pub shell_gamma: f64,
    /// γ_δ − ‖u0‖(sup‖∇p‖ max‖u‖ + 1) over the shell samples.
    pub shell_bound: f64,
    pub shell_min_gradient: f64,
    pub shell_samples: usize,
    /// Smallest |μ − 1| over the shifted critical points.
    pub min_gap: f64,
    pub outside_exact: bool,
    pub shell_positive: bool,
    pub nondegenerate: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PerturbedFunctional {
    pub tau: f64,
    pub delta: f64,
    #[serde(skip)]
    pub h: WeightH,
    #[serde(skip)]
    pub solutions: Vec<Field>,
    #[serde(skip)]
    pub u0: Field,
    pub u0_norm: f64,
    /// Critical points of Ĩ near each solution.
    pub shifted: Vec<ContinuationRecord>,
    pub checks: PerturbationChecks,
    /// Random directions tried before this one was accepted.
    pub attempts: usize,
}

impl PerturbedFunctional {
    /// Distance in the energy norm to the nearest solution, and its index.
    pub fn distance(&self, u: &Field) -> Result<(f64, usize)> {
        let mut best = (f64::INFINITY, 0);
        for (i, s) in self.solutions.iter().enumerate() {
            let d = h_norm(&u.sub(s))?;
            if d < best.0 {
                best = (d, i);
            }
        }
        Ok(best)
    }

    /// p(u) = s(dist(u, 𝒦)/δ): 1 on 𝒦_δ, 0 outside 𝒦_{2δ}.
    pub fn cutoff(&self, u: &Field) -> Result<f64> {
        let (d, _) = self.distance(u)?;
        Ok(1.0 - smoothstep(d / self.delta - 1.0))
    }

    pub fn value(&self, u: &Field) -> Result<f64> {
        let base = i_tau(u, self.tau, &self.h)?.total;
        let p = self.cutoff(u)?;
        if p == 0.0 {
            return Ok(base);
        }
        Ok(base + p * h_inner(&self.u0, u)?)
    }

    pub fn gradient(&self, u: &Field) -> Result<Field> {
        let g = grad_i(u, self.tau, &self.h)?;
        let (d, k) = self.distance(u)?;
        let x = d / self.delta - 1.0;
        let p = 1.0 - smoothstep(x);
        if p == 0.0 {
            return Ok(g);
        }
        let mut out = g.axpy(p, &self.u0);
        let dp = -smoothstep_derivative(x) / self.delta;
        if dp != 0.0 && d > 0.0 {
            let dir = u.sub(&self.solutions[k]).scaled(1.0 / d);
            out = out.axpy(dp * h_inner(&self.u0, u)?, &dir);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct PerturbOptions {
    pub seed: u64,
    /// Random directions u0 to try.
    pub samples: usize,
    pub outside_samples: usize,
    pub shell_samples: usize,
    pub newton: NewtonOptions,
}

impl Default for PerturbOptions {
    fn default() -> Self {
        PerturbOptions {
            seed: 0,
            samples: 20,
            outside_samples: 24,
            shell_samples: 48,
            newton: NewtonOptions::default(),
        }
    }
}

fn unit_direction(like: &Field, seed: u64) -> Result<Field> {
    random_field(&like.mesh, seed, 1.0)
}

/// Builds Ĩ(u) = Ī(u) + p(u)⟨u0, u⟩ and verifies (i) Ĩ = Ī outside 𝒦_{2δ},
/// (ii) the gradient lower bound on the shell and (iii) non-degeneracy of
/// the shifted critical points, trying random u0 until (iii) holds.
pub fn perturb_nondegenerate(
    tau: f64,
    h: &WeightH,
    solutions: &[Field],
    delta: f64,
    u0_magnitude: f64,
    opts: &PerturbOptions,
) -> Result<PerturbedFunctional> {
    if solutions.is_empty() {
        return invalid("perturbation needs at least one solution");
    }
    if !(delta > 0.0 && u0_magnitude > 0.0) {
        return invalid("delta and the u0 magnitude must be positive");
    }
    for i in 0..solutions.len() {
        for j in i + 1..solutions.len() {
            if h_norm(&solutions[i].sub(&solutions[j]))? <= 4.0 * delta {
                return invalid("solutions must be more than 4 delta apart");
            }
        }
    }
    let mut seed = opts.seed.wrapping_mul(1_000_003);
    let mut next_dir = |like: &Field| -> Result<Field> {
        seed = seed.wrapping_add(1);
        unit_direction(like, seed)
    };
    // sample points: outside 𝒦_{2δ} and on the shell δ ≤ dist ≤ 2δ
    let probe = PerturbedFunctional {
        tau,
        delta,
        h: h.clone(),
        solutions: solutions.to_vec(),
        u0: Field::zeros(&solutions[0].mesh),
        u0_norm: 0.0,
        shifted: Vec::new(),
        checks: PerturbationChecks {
            outside_max_difference: 0.0,
            outside_samples: 0,
            shell_gamma: 0.0,
            shell_bound: 0.0,
            shell_min_gradient: 0.0,
            shell_samples: 0,
            min_gap: 0.0,
            outside_exact: false,
            shell_positive: false,
            nondegenerate: false,
        },
        attempts: 0,
    };
    let mut outside = Vec::new();
    let mut shell = Vec::new();
    let mut k = 0;
    while outside.len() < opts.outside_samples || shell.len() < opts.shell_samples {
        let s = &solutions[k % solutions.len()];
        let frac = (k as f64 * 0.618_033_988_75).fract();
        let dir = next_dir(s)?;
        if shell.len() < opts.shell_samples && k % 2 == 0 {
            let u = s.axpy(delta * (1.0 + frac), &dir);
            if (delta..=2.0 * delta).contains(&probe.distance(&u)?.0) {
                shell.push(u);
            }
        } else if outside.len() < opts.outside_samples {
            let u = s.axpy(delta * (2.0 + 8.0 * frac) + 1e-9, &dir);
            if probe.distance(&u)?.0 > 2.0 * delta {
                outside.push(u);
            }
        }
        k += 1;
        if k > 100 * (opts.outside_samples + opts.shell_samples) {
            return Err(Error::Inconclusive("could not place perturbation samples".into()));
        }
    }
    let gammas: Vec<f64> = shell.iter().map(|u| h_norm(&grad_i(u, tau, h)?)).collect::<Result<_>>()?;
    let shell_gamma = gammas.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_norm = shell.iter().map(h_norm).collect::<Result<Vec<_>>>()?.into_iter().fold(0.0, f64::max);
    let shell_bound = shell_gamma - u0_magnitude * (CUTOFF_SLOPE / delta * max_norm + 1.0);

    for attempt in 0..opts.samples {
        let u0 = next_dir(&solutions[0])?.scaled(u0_magnitude);
        let mut pf = PerturbedFunctional { u0, u0_norm: u0_magnitude, attempts: attempt + 1, ..probe.clone() };
        let mut diff: f64 = 0.0;
        for u in &outside {
            diff = diff.max((pf.value(u)? - i_tau(u, tau, h)?.total).abs());
        }
        let mut shell_min = f64::INFINITY;
        for u in &shell {
            shell_min = shell_min.min(h_norm(&pf.gradient(u)?)?);
        }
        // inside 𝒦_δ the perturbed gradient is ∇Ī + u0
        let mut shifted = Vec::new();
        let mut ok = true;
        for s in solutions {
            match newton_core(tau, s, h, Some(&pf.u0), &opts.newton) {
                Ok((u, res, it)) if h_norm(&u.sub(s))? < delta => {
                    let rec = record(tau, u, res, it, h, &opts.newton.spectrum)?;
                    ok &= !rec.spectrum.degenerate();
                    shifted.push(rec);
                }
                _ => ok = false,
            }
        }
        let min_gap = shifted.iter().map(|r| r.spectrum.min_gap).fold(f64::INFINITY, f64::min);
        pf.checks = PerturbationChecks {
            outside_max_difference: diff,
            outside_samples: outside.len(),
            shell_gamma,
            shell_bound,
            shell_min_gradient: shell_min,
            shell_samples: shell.len(),
            min_gap,
            outside_exact: diff == 0.0,
            shell_positive: shell_bound > 0.0 && shell_min >= shell_bound,
            nondegenerate: ok,
        };
        pf.shifted = shifted;
        if ok {
            return Ok(pf);
        }
    }
    Err(Error::SardRetry { samples: opts.samples })
}
