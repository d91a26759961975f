use std::f64::consts::PI;

use meanfield::barycenters::FormalBarycenter;
use meanfield::bubbles::{
    bubble_mesh, bubble_multi, energy_asymptotics, g_k_map, log_grid, mass_near_atoms, project_p, BubbleConvention,
    BubbleParams,
};
use meanfield::domain::{biharmonic_solve_navier, integrate, laplacian, DomainSpec, Field, Mesh, Resolution};
use meanfield::functional::h_norm;

const ORIGIN: [f64; 4] = [0.0; 4];

/// Composite Simpson rule for ∫₀^∞ s³/(1+s²)⁴ ds after s = tan θ.
fn profile_moment() -> f64 {
    let n = 20_000;
    let b = PI / 2.0;
    let f = |t: f64| {
        let s = t.tan();
        s.powi(3) * t.cos().powi(6)
    };
    let h = b / n as f64;
    let mut acc = f(0.0) + f(b - 1e-15);
    for i in 1..n {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    acc * h / 3.0
}

#[test]
fn single_bubble_mass_is_scale_free() {
    let m = profile_moment();
    assert!((m - 1.0 / 12.0).abs() < 1e-10, "{m}");
    let whole_space = 32.0 * PI * PI * m;
    let domain = DomainSpec::ball(1.0).unwrap();
    let mesh = bubble_mesh(&domain, &FormalBarycenter::single(ORIGIN), 1e3).unwrap();
    for lambda in [200.0, 1e3] {
        let p = BubbleParams::new(lambda, FormalBarycenter::single(ORIGIN), domain.eta).unwrap();
        let mass = integrate(&bubble_multi(&mesh, &p).unwrap().map(f64::exp));
        assert!((mass / whole_space - 1.0).abs() < 1e-3, "lambda {lambda}: {mass} vs {whole_space}");
    }
}

#[test]
fn projection_properties() {
    let domain = DomainSpec::shell(1.0, 2.0).unwrap();
    let mesh = Mesh::build(&domain, Resolution::radial(600)).unwrap();
    let c = project_p(&Field::constant(&mesh, 3.5)).unwrap();
    assert!(c.max_abs() < 1e-9, "{}", c.max_abs());
    let navier = biharmonic_solve_navier(&Field::from_fn(&mesh, |x| 1.0 + x[0])).unwrap();
    let p = project_p(&navier).unwrap();
    // the boundary Laplacian is extrapolated, so Δφ = 0 there only to O(h²)
    let e = p.sub(&navier).max_abs() / navier.max_abs();
    assert!(e < 1e-5, "{e}");
    let phi = Field::from_fn(&mesh, |x| (x[0] * 3.0).sin() + x[0] * x[0]);
    let once = project_p(&phi).unwrap();
    let twice = project_p(&once).unwrap();
    assert!(twice.sub(&once).max_abs() < 1e-5 * once.max_abs());
}

#[test]
fn projected_bubble_meets_navier_conditions() {
    let domain = DomainSpec::ball(1.0).unwrap();
    let mesh = Mesh::build(&domain, Resolution::radial(2000)).unwrap();
    let p = BubbleParams::new(1e3, FormalBarycenter::single(ORIGIN), domain.eta).unwrap();
    let u = project_p(&bubble_multi(&mesh, &p).unwrap()).unwrap();
    let lap = laplacian(&u).unwrap();
    let last = u.len() - 1;
    assert!(u.values[last].abs() <= 1e-6 * u.max_abs());
    assert!(lap.values[last].abs() <= 1e-6 * lap.max_abs());
}

#[test]
fn g_k_is_well_defined_on_barycenters() {
    let domain = DomainSpec::ball(1.0).unwrap();
    let mesh = Mesh::build(&domain, Resolution::Grid { n: 11 }).unwrap();
    let (x, y) = ([0.3, 0.0, 0.1, 0.0], [-0.2, 0.2, 0.0, 0.0]);
    let conv = BubbleConvention::Corrected;
    let a = g_k_map(&mesh, &[(0.3, x), (0.7, y)], 8.0, domain.eta, conv).unwrap();
    assert!((h_norm(&a).unwrap() - 1.0).abs() < 1e-12);
    let b = g_k_map(&mesh, &[(0.7, y), (0.3, x)], 8.0, domain.eta, conv).unwrap();
    assert_eq!(a.values, b.values);
    let merged = g_k_map(&mesh, &[(0.3, x), (0.7, x)], 8.0, domain.eta, conv).unwrap();
    let single = g_k_map(&mesh, &[(1.0, x)], 8.0, domain.eta, conv).unwrap();
    assert!(merged.sub(&single).max_abs() < 1e-12);
    // R is blind to the overall amplitude
    let p = BubbleParams::new(8.0, FormalBarycenter::single(x), domain.eta).unwrap();
    let u = project_p(&bubble_multi(&mesh, &p).unwrap()).unwrap();
    let r1 = u.scaled(1.0 / h_norm(&u).unwrap());
    let u2 = u.scaled(2.0);
    let r2 = u2.scaled(1.0 / h_norm(&u2).unwrap());
    assert!(r1.sub(&r2).max_abs() < 1e-12 * r1.max_abs());
    assert!(g_k_map(&mesh, &[(1.0, [0.0, 0.0, 0.0, 2.0])], 8.0, domain.eta, conv).is_err());
}

#[test]
fn corrected_bubbles_concentrate_and_literal_ones_do_not() {
    let domain = DomainSpec::ball(1.0).unwrap();
    let sigma = FormalBarycenter::single(ORIGIN);
    let mesh = bubble_mesh(&domain, &sigma, 1e3).unwrap();
    let p = BubbleParams::new(1e3, sigma.clone(), domain.eta).unwrap();
    let corrected = bubble_multi(&mesh, &p).unwrap();
    assert!(mass_near_atoms(&corrected, &sigma, 10.0 / 1e3) >= 0.95);
    let literal = bubble_multi(&mesh, &p.with_convention(BubbleConvention::Literal)).unwrap();
    assert!(mass_near_atoms(&literal, &sigma, 10.0 / 1e3) < 0.05);
}

#[test]
fn energy_is_eventually_monotone_in_lambda() {
    let domain = DomainSpec::ball(1.0).unwrap();
    let sigma = FormalBarycenter::single(ORIGIN);
    let mesh = bubble_mesh(&domain, &sigma, 1e3).unwrap();
    let grid = log_grid(10.0, 1e3, 12);
    for (tau, decreasing) in [(80.0 * PI * PI, true), (40.0 * PI * PI, false)] {
        let s = energy_asymptotics(&mesh, &sigma, tau, &grid, domain.eta, BubbleConvention::Corrected).unwrap();
        assert!(!s.partial);
        for w in s.i[6..].windows(2) {
            assert_eq!(w[1] < w[0], decreasing, "tau {tau}: {:?}", s.i);
        }
    }
    assert!(energy_asymptotics(&mesh, &sigma, 1.0, &grid[..5], domain.eta, BubbleConvention::Corrected).is_err());
}
