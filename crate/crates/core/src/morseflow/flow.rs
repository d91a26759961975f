//! The modified gradient flow du/dt = W̃(u) and sublevel retraction.

use serde::{Deserialize, Serialize};

use crate::domain::Field;
use crate::error::{invalid, Error, Result};
use crate::functional::{h_inner, h_norm, i_tau, t_tau, WeightH};

/// Quintic smoothstep: 0 below 0, 1 above 1, C² in between.
pub fn smoothstep(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        x * x * x * (10.0 + x * (-15.0 + 6.0 * x))
    }
}

pub(crate) fn smoothstep_derivative(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        30.0 * x * x * (1.0 - x) * (1.0 - x)
    }
}

/// ω_ε(ζ): 0 for ζ ≤ ε, 1 for ζ ≥ 2ε.
pub fn omega(zeta: f64, eps: f64) -> f64 {
    smoothstep((zeta - eps) / eps)
}

/// θ(u): 1 on the ball of radius R, 0 outside 2R.
pub fn theta(norm: f64, r: f64) -> f64 {
    1.0 - smoothstep((norm - r) / r)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowConfig {
    pub eps: f64,
    /// Radius inside which the flow is the plain negative gradient.
    pub r: f64,
    /// The τ interval the configuration was made for, if any.
    pub lambda_window: Option<(f64, f64)>,
    pub dt0: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub rtol: f64,
    pub atol: f64,
    pub max_time: f64,
    pub max_steps: usize,
    /// Stop once ‖W̃‖ falls below this.
    pub stationary_tol: f64,
    /// Largest accepted increase of I_τ over one step.
    pub descent_tol: f64,
}

impl FlowConfig {
    pub fn new(r: f64) -> Result<Self> {
        if !(r > 0.0) {
            return invalid("flow radius R must be positive");
        }
        Ok(FlowConfig {
            eps: 1e-3,
            r,
            lambda_window: None,
            dt0: 0.1,
            dt_min: 1e-12,
            dt_max: 2.0,
            rtol: 1e-7,
            atol: 1e-9,
            max_time: 1e5,
            max_steps: 200_000,
            stationary_tol: 1e-7,
            descent_tol: 1e-8,
        })
    }

    /// R = 4 × the largest solution norm, so all solutions lie in B_{R/2}.
    pub fn adaptive(solution_norms: &[f64]) -> Result<Self> {
        let m = solution_norms.iter().cloned().fold(0.0, f64::max);
        FlowConfig::new(4.0 * m.max(0.25))
    }
}

/// Everything the fields need at one state.
pub(crate) struct Gradients {
    pub grad_i: Field,
    pub grad_k: Field,
    pub norm_i: f64,
    pub norm_k: f64,
    pub u_norm: f64,
}

pub(crate) fn gradients(u: &Field, tau: f64, h: &WeightH) -> Result<Gradients> {
    let t = t_tau(u, tau, h)?;
    let grad_k = t.scaled(1.0 / tau);
    let grad_i = u.sub(&t);
    Ok(Gradients { norm_i: h_norm(&grad_i)?, norm_k: h_norm(&grad_k)?, u_norm: h_norm(u)?, grad_i, grad_k })
}

fn z_of(g: &Gradients) -> Field {
    g.grad_i.scaled(-g.norm_k).axpy(-g.norm_i, &g.grad_k)
}

fn w_of(g: &Gradients, eps: f64) -> Field {
    let zeta = if g.norm_k == 0.0 { 1.0 } else { g.norm_i / g.norm_k };
    z_of(g).axpy(-omega(zeta, eps), &g.grad_i)
}

fn w_tilde_of(g: &Gradients, cfg: &FlowConfig) -> Field {
    let th = theta(g.u_norm, cfg.r);
    if th == 1.0 {
        return g.grad_i.scaled(-1.0);
    }
    w_of(g, cfg.eps).scaled(1.0 - th).axpy(-th, &g.grad_i)
}

/// Z = −(‖∇K‖ ∇Ī + ‖∇Ī‖ ∇K) with K = J.
pub fn field_z(u: &Field, tau: f64, h: &WeightH) -> Result<Field> {
    Ok(z_of(&gradients(u, tau, h)?))
}

pub fn field_w(u: &Field, tau: f64, h: &WeightH, eps: f64) -> Result<Field> {
    Ok(w_of(&gradients(u, tau, h)?, eps))
}

pub fn field_w_tilde(u: &Field, tau: f64, h: &WeightH, cfg: &FlowConfig) -> Result<Field> {
    Ok(w_tilde_of(&gradients(u, tau, h)?, cfg))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    #[serde(rename = "I")]
    pub i: f64,
    pub h_norm: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Stationary,
    TargetLevel,
    MaxTime,
    MaxSteps,
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    #[serde(skip)]
    pub final_state: Field,
    pub stop: StopReason,
    pub rejected_steps: usize,
}

impl Trajectory {
    /// Largest increase of I between consecutive samples (≤ 0 for descent).
    pub fn max_increase(&self) -> f64 {
        self.points.windows(2).map(|w| w[1].i - w[0].i).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Fitted c² in I(t) ≤ I(0) − c² t over the samples whose gradient
    /// norm is above `floor`; None if no such sample exists after t = 0.
    pub fn descent_rate(&self, floor: f64) -> Option<f64> {
        let first = self.points.first()?;
        self.points.iter().skip(1).take_while(|p| p.grad_norm > floor).map(|p| (first.i - p.i) / p.t).reduce(f64::min)
    }
}

pub fn write_trajectory_csv(points: &[TrajectoryPoint], out: &mut impl std::io::Write) -> Result<()> {
    let io = |e: std::io::Error| Error::Format(e.to_string());
    writeln!(out, "t,I,h_norm,grad_norm").map_err(io)?;
    for p in points {
        writeln!(out, "{},{},{},{}", p.t, p.i, p.h_norm, p.grad_norm).map_err(io)?;
    }
    Ok(())
}

struct State {
    u: Field,
    g: Gradients,
    w: Field,
    i: f64,
}

fn state(u: Field, tau: f64, h: &WeightH, cfg: &FlowConfig) -> Result<State> {
    let g = gradients(&u, tau, h)?;
    let w = w_tilde_of(&g, cfg);
    let i = i_tau(&u, tau, h)?.total;
    Ok(State { u, g, w, i })
}

/// One Bogacki–Shampine 3(2) step; returns the new state and the 𝓗-norm of
/// the embedded error estimate.
fn bs32_step(s: &State, dt: f64, tau: f64, h: &WeightH, cfg: &FlowConfig) -> Result<(State, f64)> {
    let k1 = &s.w;
    let k2 = w_tilde_of(&gradients(&s.u.axpy(0.5 * dt, k1), tau, h)?, cfg);
    let k3 = w_tilde_of(&gradients(&s.u.axpy(0.75 * dt, &k2), tau, h)?, cfg);
    let y = s.u.axpy(2.0 / 9.0 * dt, k1).axpy(1.0 / 3.0 * dt, &k2).axpy(4.0 / 9.0 * dt, &k3);
    let next = state(y, tau, h, cfg)?;
    let err =
        k1.scaled(-5.0 / 72.0 * dt).axpy(1.0 / 12.0 * dt, &k2).axpy(1.0 / 9.0 * dt, &k3).axpy(-1.0 / 8.0 * dt, &next.w);
    Ok((next, h_norm(&err)?))
}

fn sample(t: f64, s: &State) -> TrajectoryPoint {
    TrajectoryPoint { t, i: s.i, h_norm: s.g.u_norm, grad_norm: s.g.norm_i }
}

fn integrate_until(
    u0: &Field,
    tau: f64,
    h: &WeightH,
    cfg: &FlowConfig,
    target: Option<f64>,
) -> Result<(Trajectory, Option<f64>)> {
    let mut s = state(u0.zero_boundary(), tau, h, cfg)?;
    let mut t = 0.0;
    let mut dt = cfg.dt0;
    let mut points = vec![sample(t, &s)];
    let mut rejected = 0;
    if let Some(a) = target {
        if s.i <= a {
            let traj = Trajectory { points, final_state: s.u, stop: StopReason::TargetLevel, rejected_steps: 0 };
            return Ok((traj, Some(0.0)));
        }
    }
    for _ in 0..cfg.max_steps {
        if h_norm(&s.w)? < cfg.stationary_tol {
            let traj = Trajectory { points, final_state: s.u, stop: StopReason::Stationary, rejected_steps: rejected };
            return Ok((traj, None));
        }
        if t >= cfg.max_time {
            let traj = Trajectory { points, final_state: s.u, stop: StopReason::MaxTime, rejected_steps: rejected };
            return Ok((traj, None));
        }
        dt = dt.min(cfg.max_time - t).min(cfg.dt_max);
        let (next, err) = bs32_step(&s, dt, tau, h, cfg)?;
        let tol = cfg.atol + cfg.rtol * s.g.u_norm.max(next.g.u_norm);
        let descent_ok = next.i <= s.i + cfg.descent_tol;
        if err <= tol && descent_ok && next.i.is_finite() {
            if let Some(a) = target {
                if next.i <= a {
                    // first hitting time by bisection on the step length
                    let (mut lo, mut hi) = (0.0, dt);
                    let mut hit = next;
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        let (m, _) = bs32_step(&s, mid, tau, h, cfg)?;
                        if m.i <= a {
                            hi = mid;
                            hit = m;
                        } else {
                            lo = mid;
                        }
                        if hi - lo <= 1e-12 * (t + hi) {
                            break;
                        }
                    }
                    t += hi;
                    points.push(sample(t, &hit));
                    let traj = Trajectory {
                        points,
                        final_state: hit.u,
                        stop: StopReason::TargetLevel,
                        rejected_steps: rejected,
                    };
                    return Ok((traj, Some(t)));
                }
            }
            t += dt;
            s = next;
            points.push(sample(t, &s));
            let grow = if err > 0.0 { 0.9 * (tol / err).powf(1.0 / 3.0) } else { 5.0 };
            dt *= grow.clamp(0.2, 5.0);
        } else {
            rejected += 1;
            dt *= if err > tol { (0.9 * (tol / err).powf(1.0 / 3.0)).clamp(0.1, 0.5) } else { 0.5 };
            if dt < cfg.dt_min {
                return Err(Error::FlowStall { t, dt, grad_norm: s.g.norm_i });
            }
        }
    }
    let traj = Trajectory { points, final_state: s.u, stop: StopReason::MaxSteps, rejected_steps: rejected };
    Ok((traj, None))
}

pub fn flow_integrate(u0: &Field, tau: f64, h: &WeightH, cfg: &FlowConfig) -> Result<Trajectory> {
    Ok(integrate_until(u0, tau, h, cfg, None)?.0)
}

/// First time the flow from u0 reaches {I_τ ≤ a}, and the state there.
pub fn retract_to_sublevel(u0: &Field, tau: f64, h: &WeightH, level_a: f64, cfg: &FlowConfig) -> Result<(f64, Field)> {
    let (traj, hit) = integrate_until(u0, tau, h, cfg, Some(level_a))?;
    match hit {
        Some(t) => Ok((t, traj.final_state)),
        None => Err(Error::RetractionFailure { level: traj.points.last().map_or(f64::NAN, |p| p.i), target: level_a }),
    }
}

/// ⟨v, ∇Ī(u)⟩; the fields above are descent directions when this is ≤ 0.
pub fn descent_pairing(v: &Field, u: &Field, tau: f64, h: &WeightH) -> Result<f64> {
    let g = gradients(u, tau, h)?;
    h_inner(v, &g.grad_i)
}

/// Default sublevel pair (a, b) for the flow and retraction commands:
/// a far below and b far above every energy met at moderate norms.
pub fn default_levels(tau: f64) -> (f64, f64) {
    (-100.0 * tau, 100.0 * tau)
}
