//! Modified gradient flow, non-degenerate perturbations, solution finding
//! with Leray–Schauder indices, continuation in τ and the degree check.

mod continuation;
mod flow;
mod newton;
mod perturb;
mod spectrum;

pub use continuation::{
    continuation, degree_compare, multistart_solve, Branch, BranchEvent, Caveat, ContinuationOptions,
    ContinuationResult, DegreeReport, MultistartResult, SAME_SOLUTION_TOL,
};
pub use flow::{
    default_levels, descent_pairing, field_w, field_w_tilde, field_z, flow_integrate, omega, retract_to_sublevel,
    smoothstep, theta, write_trajectory_csv, FlowConfig, StopReason, Trajectory, TrajectoryPoint,
};
pub use newton::{newton_solve, ContinuationRecord, NewtonOptions};
pub use perturb::{perturb_nondegenerate, PerturbOptions, PerturbationChecks, PerturbedFunctional, CUTOFF_SLOPE};
pub use spectrum::{dt_apply, dt_spectrum, IndexReport, SectorSpectrum, SpectrumOptions};
