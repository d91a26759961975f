use std::f64::consts::PI;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::sync::Arc;

use anyhow::{Context, Result};
use meanfield::barycenters::{
    f_star_critical_census, nearest_barycenter, weak_distance, CensusConfig, FormalBarycenter, GCutoff,
    ProjectionOptions, TestDictionary,
};
use meanfield::bubbles::{bubble_mt_scan, energy_asymptotics, log_grid, BubbleConvention};
use meanfield::combinatorics::{euler_table, EulerChar};
use meanfield::domain::{DomainSpec, Field, Mesh, Point};
use meanfield::functional::mt::{linear_fit, random_field, random_scan};
use meanfield::functional::{i_tau, WeightH};
use meanfield::morseflow::{
    continuation, degree_compare, flow_integrate, multistart_solve, retract_to_sublevel, write_trajectory_csv,
    BranchEvent, Caveat, ContinuationOptions, FlowConfig, NewtonOptions,
};
use serde::Serialize;

use crate::config::{parse_domain, resolution_for, usage, ConfigFile, Report, Settings, Usage, VERSION};
use crate::{Cli, Command, Common};

/// τ as a plain number or as a multiple of π² (`32pi2`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tau(pub f64);

impl FromStr for Tau {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let t = s.trim();
        let (num, scale) = match t.strip_suffix("pi2") {
            Some(n) => (n, PI * PI),
            None => (t, 1.0),
        };
        let v: f64 = num.trim().parse().map_err(|_| format!("cannot read {s:?} as tau"))?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(format!("tau must be positive, got {s:?}"));
        }
        Ok(Tau(v * scale))
    }
}

impl fmt::Display for Tau {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

const KNOWN_KEYS: &[&str] = &[
    "domain",
    "tau",
    "k",
    "resolution",
    "seed",
    "out",
    "bubble_convention",
    "chi",
    "k_max",
    "starts",
    "field_out",
    "tau_lo",
    "tau_hi",
    "steps",
    "lambda_lo",
    "lambda_hi",
    "lambda_count",
    "samples",
    "norm",
    "level",
    "trajectory",
    "radius",
    "field",
    "capture_radius",
];

pub fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match e.downcast_ref::<meanfield::Error>() {
        Some(meanfield::Error::InvalidArgument(_))
        | Some(meanfield::Error::Threshold { .. })
        | Some(meanfield::Error::Domain(_))
        | Some(meanfield::Error::Unsupported { .. }) => 2,
        Some(meanfield::Error::Solver { .. }) | Some(meanfield::Error::NoConvergence(_)) => 3,
        Some(meanfield::Error::FlowStall { .. }) | Some(meanfield::Error::RetractionFailure { .. }) => 4,
        Some(meanfield::Error::Inconclusive(_)) | Some(meanfield::Error::SardRetry { .. }) => 5,
        Some(meanfield::Error::Format(_)) | None => 1,
    }
}

const SOLVER_FAILED: u8 = 3;
const INCONCLUSIVE: u8 = 5;

struct Ctx {
    name: &'static str,
    settings: Settings,
    common: Common,
}

impl Ctx {
    fn domain(&mut self) -> Result<DomainSpec> {
        let s: String = self.settings.or("domain", self.common.domain.clone(), "ball".to_string())?;
        parse_domain(&s)
    }

    fn tau(&mut self) -> Result<f64> {
        Ok(self.settings.require("tau", self.common.tau)?.0)
    }

    fn seed(&mut self) -> Result<u64> {
        self.settings.or("seed", self.common.seed, 0)
    }

    fn resolution(&mut self) -> Result<Option<usize>> {
        self.settings.get("resolution", self.common.resolution)
    }

    fn out(&mut self) -> Result<Option<PathBuf>> {
        let v: Option<String> = self.settings.get("out", self.common.out.as_ref().map(|p| p.display().to_string()))?;
        Ok(v.map(PathBuf::from))
    }

    /// Rejects unknown config keys; call once every setting has been read.
    fn validated(&self) -> Result<()> {
        let unknown: Vec<String> =
            self.settings.unused().into_iter().filter(|k| !KNOWN_KEYS.contains(&k.as_str())).collect();
        if !unknown.is_empty() {
            return Err(usage!("unknown config keys: {}", unknown.join(", ")));
        }
        Ok(())
    }

    fn write<T: Serialize>(&self, out: Option<&Path>, result: T) -> Result<()> {
        // the destination is left out so a report does not depend on where it was written
        let mut config = self.settings.resolved();
        config.remove("out");
        let report = Report { version: VERSION, command: self.name.to_string(), config, result };
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        match out {
            Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
            None => std::io::stdout().write_all(text.as_bytes())?,
        }
        Ok(())
    }
}

fn code(c: u8) -> ExitCode {
    ExitCode::from(c)
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    let file = match &cli.common.config {
        Some(p) => ConfigFile::load(p).map_err(|e| usage!("{e:#}"))?,
        None => ConfigFile::default(),
    };
    let name = match &cli.command {
        Command::Euler { .. } => "euler",
        Command::Solve { .. } => "solve",
        Command::Continue { .. } => "continue",
        Command::BubbleScan { .. } => "bubble-scan",
        Command::MtCheck { .. } => "mt-check",
        Command::Flow { .. } => "flow",
        Command::FstarCensus { .. } => "fstar-census",
        Command::Project { .. } => "project",
        Command::DegreeCompare { .. } => "degree-compare",
    };
    let mut ctx = Ctx { name, settings: file.for_command(name), common: cli.common.clone() };
    match cli.command {
        Command::Euler { chi, k_max } => euler(&mut ctx, chi, k_max),
        Command::Solve { starts, field_out } => solve(&mut ctx, starts, field_out),
        Command::Continue { tau_lo, tau_hi, steps, starts } => cont(&mut ctx, tau_lo, tau_hi, steps, starts),
        Command::BubbleScan { lambda_lo, lambda_hi, lambda_count } => {
            bubble_scan(&mut ctx, lambda_lo, lambda_hi, lambda_count)
        }
        Command::MtCheck { samples } => mt_check(&mut ctx, samples),
        Command::Flow { norm, level, trajectory } => flow(&mut ctx, norm, level, trajectory),
        Command::FstarCensus { starts } => census(&mut ctx, starts),
        Command::Project { field, capture_radius } => project(&mut ctx, field, capture_radius),
        Command::DegreeCompare { starts } => degree(&mut ctx, starts),
    }
}

fn euler(ctx: &mut Ctx, chi: Option<i64>, k_max: Option<u64>) -> Result<ExitCode> {
    let chi = match ctx.settings.get("chi", chi)? {
        Some(c) => c,
        None => ctx.domain()?.chi,
    };
    let k_max = ctx.settings.or("k_max", k_max, 8)?;
    let out = ctx.out()?;
    ctx.validated()?;
    let rows = euler_table(&EulerChar::new(chi), k_max)?;
    if out.is_some() {
        ctx.write(out.as_deref(), &rows)?;
    } else {
        let mut w = std::io::stdout().lock();
        writeln!(w, "{:>3} {:>16} {:>16} {:>16} {:>16}", "k", "chi(config)", "chi(pair)", "chi(Sigma_k)", "degree")?;
        for r in &rows {
            writeln!(w, "{:>3} {:>16} {:>16} {:>16} {:>16}", r.k, r.config_space, r.pair, r.barycenter, r.degree)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn radial_mesh(domain: &DomainSpec, n: Option<usize>) -> Result<Arc<Mesh>> {
    Ok(Mesh::build(domain, resolution_for(domain, n, domain.is_radial()))?)
}

/// The zero field followed by random fields of growing norm.
fn starts_for(mesh: &Arc<Mesh>, seed: u64, count: usize) -> Result<Vec<Field>> {
    let mut v = vec![Field::zeros(mesh)];
    for i in 1..count {
        v.push(random_field(mesh, seed.wrapping_mul(1000).wrapping_add(i as u64), 2.0 * i as f64)?);
    }
    Ok(v)
}

fn solve(ctx: &mut Ctx, starts: Option<usize>, field_out: Option<PathBuf>) -> Result<ExitCode> {
    let domain = ctx.domain()?;
    let tau = ctx.tau()?;
    let seed = ctx.seed()?;
    let n = ctx.resolution()?;
    let starts = ctx.settings.or("starts", starts, 4)?;
    let field_out: Option<String> = ctx.settings.get("field_out", field_out.map(|p| p.display().to_string()))?;
    let out = ctx.out()?;
    ctx.validated()?;
    let mesh = radial_mesh(&domain, n)?;
    let h = WeightH::unit(&mesh);
    let r = multistart_solve(tau, &starts_for(&mesh, seed, starts)?, &h, &NewtonOptions::default())?;
    if let (Some(p), Some(best)) = (&field_out, r.solutions.first()) {
        let mut w = BufWriter::new(File::create(p).with_context(|| format!("creating {p}"))?);
        best.u.write_binary(&mut w)?;
        w.flush()?;
    }
    ctx.write(out.as_deref(), &r)?;
    Ok(if r.solutions.is_empty() { code(SOLVER_FAILED) } else { ExitCode::SUCCESS })
}

fn cont(
    ctx: &mut Ctx,
    tau_lo: Option<Tau>,
    tau_hi: Option<Tau>,
    steps: Option<usize>,
    starts: Option<usize>,
) -> Result<ExitCode> {
    let domain = ctx.domain()?;
    let lo = ctx.settings.require("tau_lo", tau_lo)?.0;
    let hi = ctx.settings.require("tau_hi", tau_hi)?.0;
    let steps = ctx.settings.or("steps", steps, 20)?;
    let starts = ctx.settings.or("starts", starts, 4)?;
    let seed = ctx.seed()?;
    let n = ctx.resolution()?;
    let out = ctx.out()?;
    ctx.validated()?;
    let mesh = radial_mesh(&domain, n)?;
    let h = WeightH::unit(&mesh);
    let c = continuation((lo, hi), steps, &starts_for(&mesh, seed, starts)?, &h, &ContinuationOptions::default())?;
    ctx.write(out.as_deref(), &c)?;
    let all_failed =
        c.events.iter().filter(|e| matches!(e, BranchEvent::SeedFailed { .. })).count() == c.branches.len();
    Ok(if all_failed { code(SOLVER_FAILED) } else { ExitCode::SUCCESS })
}

/// k equal atoms on a circle in the (x0, x1) plane; one atom at the centre
/// of a ball.
fn default_atoms(domain: &DomainSpec, k: usize) -> Result<FormalBarycenter> {
    let ball = domain.kind_name() == "ball";
    if k == 1 && ball {
        return Ok(FormalBarycenter::single([0.0; 4]));
    }
    let half = domain.half_extents()[0];
    let rho = match domain.kind_name() {
        "shell" => half - domain.inradius(),
        _ => 0.5 * domain.inradius(),
    };
    let raw: Vec<(f64, Point)> = (0..k)
        .map(|i| {
            let a = 2.0 * PI * i as f64 / k as f64;
            (1.0 / k as f64, [rho * a.cos(), rho * a.sin(), 0.0, 0.0])
        })
        .collect();
    Ok(FormalBarycenter::from_atoms(&raw)?)
}

/// Radial mesh when every atom sits at the centre of a radial domain.
fn bubble_mesh_for(domain: &DomainSpec, sigma: &FormalBarycenter, n: Option<usize>) -> Result<Arc<Mesh>> {
    let centred = domain.is_radial() && sigma.atoms.iter().all(|a| a.x.iter().all(|&c| c == 0.0));
    Ok(Mesh::build(domain, resolution_for(domain, n, centred))?)
}

fn convention(ctx: &mut Ctx) -> Result<BubbleConvention> {
    let s: String = ctx.settings.or("bubble_convention", ctx.common.bubble_convention.clone(), "corrected".into())?;
    s.parse::<BubbleConvention>().map_err(|e| usage!("{e}"))
}

fn lambda_grid(ctx: &mut Ctx, lo: Option<f64>, hi: Option<f64>, count: Option<usize>) -> Result<Vec<f64>> {
    let lo = ctx.settings.or("lambda_lo", lo, 10.0)?;
    let hi = ctx.settings.or("lambda_hi", hi, 1e3)?;
    let count = ctx.settings.or("lambda_count", count, 12)?;
    if !(lo > 0.0 && hi > lo && count >= 2) {
        return Err(usage!("lambda grid needs 0 < lambda_lo < lambda_hi and at least two points"));
    }
    Ok(log_grid(lo, hi, count))
}

fn bubble_scan(ctx: &mut Ctx, lo: Option<f64>, hi: Option<f64>, count: Option<usize>) -> Result<ExitCode> {
    let domain = ctx.domain()?;
    let tau = ctx.tau()?;
    let k = ctx.settings.or("k", ctx.common.k, 1)?;
    let conv = convention(ctx)?;
    let grid = lambda_grid(ctx, lo, hi, count)?;
    let n = ctx.resolution()?;
    let out = ctx.out()?;
    ctx.validated()?;
    let sigma = default_atoms(&domain, k)?;
    let mesh = bubble_mesh_for(&domain, &sigma, n)?;
    let scan = energy_asymptotics(&mesh, &sigma, tau, &grid, domain.eta, conv)?;
    ctx.write(out.as_deref(), &scan)?;
    Ok(if scan.partial { code(INCONCLUSIVE) } else { ExitCode::SUCCESS })
}

#[derive(Serialize)]
struct GapSummary {
    samples: usize,
    max_gap: f64,
    /// Fitted slope of the gap against ‖u‖²/(128π²).
    slope: f64,
    norm_sq_scaled: Vec<f64>,
    gap: Vec<f64>,
}

fn summarize(x: Vec<f64>, gap: Vec<f64>) -> GapSummary {
    let (slope, _, _) = linear_fit(&x, &gap);
    let max_gap = gap.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    GapSummary { samples: gap.len(), max_gap, slope, norm_sq_scaled: x, gap }
}

fn mt_check(ctx: &mut Ctx, samples: Option<usize>) -> Result<ExitCode> {
    let domain = ctx.domain()?;
    let samples = ctx.settings.or("samples", samples, 100)?;
    let seed = ctx.seed()?;
    let n = ctx.resolution()?;
    let grid = lambda_grid(ctx, None, None, None)?;
    let out = ctx.out()?;
    ctx.validated()?;
    let mesh = radial_mesh(&domain, n)?;
    let scan = random_scan(&mesh, seed, samples, 0.01, 10.0)?;
    let random = summarize(scan.iter().map(|s| s.norm_sq_scaled).collect(), scan.iter().map(|s| s.gap).collect());
    let sigma = default_atoms(&domain, 1)?;
    let bmesh = bubble_mesh_for(&domain, &sigma, n)?;
    let fam = bubble_mt_scan(&bmesh, sigma.atoms[0].x, domain.eta, &grid)?;
    let bubbles = summarize(fam.iter().map(|s| s.norm_sq_scaled).collect(), fam.iter().map(|s| s.gap).collect());
    let finite = random.max_gap.is_finite() && bubbles.max_gap.is_finite();
    #[derive(Serialize)]
    struct MtReport {
        random: GapSummary,
        bubbles: GapSummary,
        lambda: Vec<f64>,
    }
    ctx.write(out.as_deref(), MtReport { random, bubbles, lambda: grid })?;
    Ok(if finite { ExitCode::SUCCESS } else { code(INCONCLUSIVE) })
}

fn flow(ctx: &mut Ctx, norm: Option<f64>, level: Option<f64>, trajectory: Option<PathBuf>) -> Result<ExitCode> {
    let domain = ctx.domain()?;
    let tau = ctx.tau()?;
    let seed = ctx.seed()?;
    let norm = ctx.settings.or("norm", norm, 10.0)?;
    let level = ctx.settings.get("level", level)?;
    let radius = ctx.settings.or("radius", None, 4.0 * norm.max(1.0))?;
    let n = ctx.resolution()?;
    let out = ctx.out()?;
    let traj: Option<String> = ctx.settings.get("trajectory", trajectory.map(|p| p.display().to_string()))?;
    ctx.validated()?;
    let traj = traj.map(PathBuf::from).or_else(|| out.as_ref().map(|o| o.with_extension("csv")));
    let mesh = radial_mesh(&domain, n)?;
    let h = WeightH::unit(&mesh);
    let cfg = FlowConfig::new(radius)?;
    let u0 = random_field(&mesh, seed, norm)?;
    let tr = flow_integrate(&u0, tau, &h, &cfg)?;
    if let Some(p) = &traj {
        let mut w = BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?);
        write_trajectory_csv(&tr.points, &mut w)?;
        w.flush()?;
    }
    let hit = match level {
        Some(a) => Some(retract_to_sublevel(&u0, tau, &h, a, &cfg)?),
        None => None,
    };
    #[derive(Serialize)]
    struct FlowReport<'a> {
        initial_energy: f64,
        final_energy: f64,
        final_gradient_norm: f64,
        stop: meanfield::morseflow::StopReason,
        steps: usize,
        rejected_steps: usize,
        max_increase: f64,
        level_hit_time: Option<f64>,
        level_hit_energy: Option<f64>,
        trajectory: Option<&'a Path>,
        flow: &'a FlowConfig,
    }
    let first = tr.points.first().expect("trajectory has a start");
    let last = tr.points.last().expect("trajectory has a start");
    let rep = FlowReport {
        initial_energy: first.i,
        final_energy: last.i,
        final_gradient_norm: last.grad_norm,
        stop: tr.stop,
        steps: tr.points.len() - 1,
        rejected_steps: tr.rejected_steps,
        max_increase: tr.max_increase(),
        level_hit_time: hit.as_ref().map(|(t, _)| *t),
        level_hit_energy: match &hit {
            Some((_, u)) => Some(i_tau(u, tau, &h)?.total),
            None => None,
        },
        trajectory: traj.as_deref(),
        flow: &cfg,
    };
    ctx.write(out.as_deref(), rep)?;
    Ok(ExitCode::SUCCESS)
}

fn census(ctx: &mut Ctx, starts: Option<usize>) -> Result<ExitCode> {
    let domain = ctx.domain()?;
    let k = ctx.settings.or("k", ctx.common.k, 2)?;
    let starts = ctx.settings.or("starts", starts, 10_000)?;
    let seed = ctx.seed()?;
    let out = ctx.out()?;
    ctx.validated()?;
    let rep = f_star_critical_census(&domain, &GCutoff::new(domain.eta)?, &CensusConfig::new(k, starts, seed))?;
    ctx.write(out.as_deref(), &rep)?;
    Ok(if rep.matches_target { ExitCode::SUCCESS } else { code(INCONCLUSIVE) })
}

fn project(ctx: &mut Ctx, field: Option<PathBuf>, capture: Option<f64>) -> Result<ExitCode> {
    let path: String = ctx.settings.require("field", field.map(|p| p.display().to_string()))?;
    let k = ctx.settings.require("k", ctx.common.k)?;
    let capture = ctx.settings.get("capture_radius", capture)?;
    let out = ctx.out()?;
    ctx.validated()?;
    let mut r = File::open(&path).with_context(|| format!("opening {path}"))?;
    let u = Field::read_binary(&mut r)?;
    let domain = *u.mesh.domain();
    let size = domain.half_extents().iter().cloned().fold(0.0, f64::max);
    let capture = capture.unwrap_or(domain.inradius() / 5.0);
    let dens = u.map(f64::exp).to_density()?;
    let sigma = nearest_barycenter(&dens, k, &ProjectionOptions::new(capture, 1e-3 * size))
        .with_context(|| format!("e^u is too spread out for capture radius {capture}"))?;
    let dist = weak_distance(&dens, &sigma, &TestDictionary::standard(&dens, &sigma, size));
    #[derive(Serialize)]
    struct ProjectReport {
        sigma: FormalBarycenter,
        weak_distance: f64,
        capture_radius: f64,
    }
    ctx.write(out.as_deref(), ProjectReport { sigma, weak_distance: dist, capture_radius: capture })?;
    Ok(ExitCode::SUCCESS)
}

fn degree(ctx: &mut Ctx, starts: Option<usize>) -> Result<ExitCode> {
    let domain = ctx.domain()?;
    let tau = ctx.tau()?;
    let starts = ctx.settings.or("starts", starts, 10)?;
    let seed = ctx.seed()?;
    let n = ctx.resolution()?;
    let out = ctx.out()?;
    ctx.validated()?;
    let mesh = radial_mesh(&domain, n)?;
    let h = WeightH::unit(&mesh);
    let ms = multistart_solve(tau, &starts_for(&mesh, seed, starts)?, &h, &NewtonOptions::default())?;
    let rep = degree_compare(tau, &ms.solutions, &EulerChar::new(domain.chi))?;
    let contradiction = rep.caveat == Caveat::Certified && rep.index_sum != rep.formula_degree;
    let inconclusive = rep.caveat == Caveat::Degenerate || contradiction;
    #[derive(Serialize)]
    struct DegreeOut {
        report: meanfield::morseflow::DegreeReport,
        hits: Vec<usize>,
        failed_starts: usize,
        contradiction: bool,
    }
    ctx.write(
        out.as_deref(),
        DegreeOut { report: rep, hits: ms.hits, failed_starts: ms.failures.len(), contradiction },
    )?;
    Ok(if inconclusive { code(INCONCLUSIVE) } else { ExitCode::SUCCESS })
}
