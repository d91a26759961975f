//! Multistart solving, natural-parameter continuation in τ and the
//! comparison of index sums with the degree formula.

use rayon::prelude::*;
use serde::Serialize;

use super::newton::{newton_solve, ContinuationRecord, NewtonOptions};
use crate::combinatorics::{
    barycenter_euler, degree_in_window, DegreeWindow, EulerChar, BUBBLE_QUANTUM, DEFAULT_THRESHOLD_TOL,
};
use crate::domain::{Field, Point};
use crate::error::{invalid, Error, Result};
use crate::functional::{h_norm, WeightH};

/// Two records describe the same solution when closer than this, relative
/// to 1 + ‖u‖.
pub const SAME_SOLUTION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct MultistartResult {
    pub tau: f64,
    /// Distinct solutions, ordered by energy norm.
    pub solutions: Vec<ContinuationRecord>,
    /// How many starts converged to each solution.
    pub hits: Vec<usize>,
    pub failures: Vec<(usize, String)>,
}

fn same_solution(a: &Field, b: &Field) -> Result<bool> {
    let d = h_norm(&a.sub(b))?;
    Ok(d < SAME_SOLUTION_TOL * (1.0 + h_norm(a)?.max(h_norm(b)?)))
}

pub fn multistart_solve(tau: f64, seeds: &[Field], h: &WeightH, opts: &NewtonOptions) -> Result<MultistartResult> {
    let runs: Vec<Result<ContinuationRecord>> = seeds.par_iter().map(|s| newton_solve(tau, s, h, opts)).collect();
    let mut solutions: Vec<ContinuationRecord> = Vec::new();
    let mut hits = Vec::new();
    let mut failures = Vec::new();
    for (i, r) in runs.into_iter().enumerate() {
        match r {
            Ok(rec) => {
                let mut found = None;
                for (j, s) in solutions.iter().enumerate() {
                    if same_solution(&s.u, &rec.u)? {
                        found = Some(j);
                        break;
                    }
                }
                match found {
                    Some(j) => hits[j] += 1,
                    None => {
                        solutions.push(rec);
                        hits.push(1);
                    }
                }
            }
            Err(e) => failures.push((i, e.to_string())),
        }
    }
    let mut order: Vec<usize> = (0..solutions.len()).collect();
    order.sort_by(|&a, &b| solutions[a].h_norm.total_cmp(&solutions[b].h_norm));
    let solutions_sorted = order.iter().map(|&i| solutions[i].clone()).collect();
    let hits = order.iter().map(|&i| hits[i]).collect();
    Ok(MultistartResult { tau, solutions: solutions_sorted, hits, failures })
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuationOptions {
    pub newton: NewtonOptions,
    /// Give up on a branch once the step falls below this fraction of the
    /// nominal step.
    pub min_step_fraction: f64,
    /// Flag blow-up when ‖u‖_∞ exceeds this multiple of the reference.
    pub blowup_factor: f64,
    /// Reference sup norm; defaults to the branch value nearest the middle
    /// of the degree window.
    pub blowup_reference: Option<f64>,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions {
            newton: NewtonOptions::default(),
            min_step_fraction: 1.0 / 256.0,
            blowup_factor: 8.0,
            blowup_reference: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum BranchEvent {
    SeedFailed { branch: usize, reason: String },
    StepHalved { branch: usize, tau: f64, step: f64 },
    Terminated { branch: usize, tau: f64, reason: String },
    BlowUpSuspected { branch: usize, tau: f64, sup_norm: f64, reference: f64, location: Point },
}

#[derive(Debug, Clone, Serialize)]
pub struct Branch {
    pub records: Vec<ContinuationRecord>,
    pub completed: bool,
    /// ‖u‖_∞ strictly increased over the last ten accepted steps.
    pub growth_trend: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuationResult {
    pub tau_range: (f64, f64),
    pub branches: Vec<Branch>,
    pub events: Vec<BranchEvent>,
}

fn crosses_threshold(a: f64, b: f64) -> Option<f64> {
    let (lo, hi) = (a.min(b), a.max(b));
    let k = (lo / BUBBLE_QUANTUM).floor() + 1.0;
    let t = k * BUBBLE_QUANTUM;
    (t <= hi).then_some(t)
}

fn follow(
    branch: usize,
    range: (f64, f64),
    steps: usize,
    seed: &Field,
    h: &WeightH,
    opts: &ContinuationOptions,
) -> (Branch, Vec<BranchEvent>) {
    let mut events = Vec::new();
    let mut records: Vec<ContinuationRecord> = Vec::new();
    let first = match newton_solve(range.0, seed, h, &opts.newton) {
        Ok(r) => r,
        Err(e) => {
            events.push(BranchEvent::SeedFailed { branch, reason: e.to_string() });
            return (Branch { records, completed: false, growth_trend: false }, events);
        }
    };
    records.push(first);
    let nominal = (range.1 - range.0) / steps as f64;
    let mut step = nominal;
    let mut tau = range.0;
    let mut completed = true;
    while (range.1 - tau) * nominal.signum() > 1e-12 * range.1.abs() {
        let next_tau = if (range.1 - (tau + step)) * nominal.signum() < 0.0 { range.1 } else { tau + step };
        let last = records.last().expect("branch has a record");
        // secant predictor from the last two records
        let guess = if records.len() >= 2 {
            let prev = &records[records.len() - 2];
            let s = (next_tau - last.tau) / (last.tau - prev.tau);
            last.u.axpy(s, &last.u.sub(&prev.u))
        } else {
            last.u.clone()
        };
        match newton_solve(next_tau, &guess, h, &opts.newton)
            .or_else(|_| newton_solve(next_tau, &last.u, h, &opts.newton))
        {
            Ok(r) => {
                tau = next_tau;
                records.push(r);
                if step.abs() < nominal.abs() {
                    step = (2.0 * step).abs().min(nominal.abs()) * nominal.signum();
                }
            }
            Err(e) => {
                step *= 0.5;
                if step.abs() < opts.min_step_fraction * nominal.abs() {
                    events.push(BranchEvent::Terminated { branch, tau, reason: e.to_string() });
                    completed = false;
                    break;
                }
                events.push(BranchEvent::StepHalved { branch, tau, step });
            }
        }
    }
    let sups: Vec<f64> = records.iter().map(|r| r.sup_norm).collect();
    let tail = &sups[sups.len().saturating_sub(11)..];
    let growth_trend = tail.len() >= 3 && tail.windows(2).all(|w| w[1] > w[0]);
    let reference = opts.blowup_reference.or_else(|| {
        let window = DegreeWindow::containing(range.0, DEFAULT_THRESHOLD_TOL).ok()?;
        let mid = window.midpoint();
        records.iter().min_by(|a, b| (a.tau - mid).abs().total_cmp(&(b.tau - mid).abs())).map(|r| r.sup_norm)
    });
    if let Some(reference) = reference {
        for r in &records {
            if r.sup_norm > opts.blowup_factor * reference {
                events.push(BranchEvent::BlowUpSuspected {
                    branch,
                    tau: r.tau,
                    sup_norm: r.sup_norm,
                    reference,
                    location: r.argmax,
                });
            }
        }
    }
    (Branch { records, completed, growth_trend }, events)
}

/// Natural-parameter continuation of every seed across `tau_range` in
/// `steps` nominal steps, halving the step on failure.
pub fn continuation(
    tau_range: (f64, f64),
    steps: usize,
    seeds: &[Field],
    h: &WeightH,
    opts: &ContinuationOptions,
) -> Result<ContinuationResult> {
    if steps == 0 || seeds.is_empty() {
        return invalid("continuation needs at least one step and one seed");
    }
    if !(tau_range.0 > 0.0 && tau_range.1 > 0.0) || tau_range.0 == tau_range.1 {
        return invalid("tau range must be a non-empty positive interval");
    }
    if let Some(t) = crosses_threshold(tau_range.0, tau_range.1) {
        return Err(Error::Threshold { tau: t, k: (t / BUBBLE_QUANTUM).round() as u64, threshold: t });
    }
    let runs: Vec<(Branch, Vec<BranchEvent>)> =
        seeds.par_iter().enumerate().map(|(i, s)| follow(i, tau_range, steps, s, h, opts)).collect();
    let mut branches = Vec::new();
    let mut events = Vec::new();
    for (b, e) in runs {
        branches.push(b);
        events.extend(e);
    }
    Ok(ContinuationResult { tau_range, branches, events })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Caveat {
    /// Coercive window: the solution count is complete.
    Certified,
    /// Solutions may have been missed; the sum is a partial count.
    Incomplete,
    /// A record had an eigenvalue at 1 and was left out of the sum.
    Degenerate,
}

#[derive(Debug, Clone, Serialize)]
pub struct DegreeReport {
    pub tau: f64,
    pub tau_window: DegreeWindow,
    pub formula_degree: i64,
    /// χ(Σ_k) for k ≥ 1, where the formula reads 1 − χ(Σ_k).
    pub barycenter_euler: Option<i64>,
    pub index_sum: i64,
    pub solutions_found: usize,
    pub degenerate_excluded: usize,
    pub parity_consistent: bool,
    pub caveat: Caveat,
}

fn big_to_i64(v: &num_bigint::BigInt) -> Result<i64> {
    use num_traits::ToPrimitive;
    v.to_i64().ok_or_else(|| Error::Format(format!("{v} does not fit in 64 bits")))
}

pub fn degree_compare(tau: f64, records: &[ContinuationRecord], chi: &EulerChar) -> Result<DegreeReport> {
    let window = DegreeWindow::containing(tau, DEFAULT_THRESHOLD_TOL)?;
    if let Some(r) = records.iter().find(|r| (r.tau - tau).abs() > 1e-12 * tau.abs()) {
        return invalid(format!("record at tau = {} does not belong to tau = {tau}", r.tau));
    }
    let mut unique: Vec<&ContinuationRecord> = Vec::new();
    for r in records {
        let mut dup = false;
        for u in &unique {
            if same_solution(&u.u, &r.u)? {
                dup = true;
                break;
            }
        }
        if !dup {
            unique.push(r);
        }
    }
    let degenerate = unique.iter().filter(|r| r.index == 0).count();
    let index_sum: i64 = unique.iter().map(|r| r.index as i64).sum();
    let formula = big_to_i64(&degree_in_window(window.k, chi)?)?;
    let barycenter = if window.k >= 1 { Some(big_to_i64(&barycenter_euler(chi, window.k as i64)?.0)?) } else { None };
    let caveat = if degenerate > 0 {
        Caveat::Degenerate
    } else if window.k == 0 {
        Caveat::Certified
    } else {
        Caveat::Incomplete
    };
    Ok(DegreeReport {
        tau,
        tau_window: window,
        formula_degree: formula,
        barycenter_euler: barycenter,
        index_sum,
        solutions_found: unique.len(),
        degenerate_excluded: degenerate,
        parity_consistent: (index_sum - formula).rem_euclid(2) == 0,
        caveat,
    })
}
