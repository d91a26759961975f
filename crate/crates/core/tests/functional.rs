use std::f64::consts::PI;

use meanfield::domain::{BoxMask, DomainSpec, Field, Mesh, Resolution};
use meanfield::functional::mt::{mt_lhs, random_field, region_masses};
use meanfield::functional::{
    covering_select, grad_i, h_inner, h_norm_sq, i_tau, improved_mt_check, mt_gap, t_tau, Covering, CoveringOptions,
    Region, WeightH,
};

fn radius(x: &[f64; 4]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn fd_relative_error(mesh: &std::sync::Arc<Mesh>, seed: u64, tau: f64) -> f64 {
    let h = WeightH::unit(mesh);
    let u = random_field(mesh, seed, 20.0).unwrap();
    let v = random_field(mesh, seed + 1000, 5.0).unwrap();
    let eps = 1e-4 * h_norm_sq(&u).unwrap().sqrt() / 5.0;
    let ip = |w: &Field| i_tau(w, tau, &h).unwrap().total;
    let fd = (ip(&u.axpy(eps, &v)) - ip(&u.axpy(-eps, &v))) / (2.0 * eps);
    let an = h_inner(&grad_i(&u, tau, &h).unwrap(), &v).unwrap();
    (fd - an).abs() / an.abs().max(1e-300)
}

#[test]
fn gradient_matches_finite_differences() {
    for domain in [DomainSpec::ball(1.0).unwrap(), DomainSpec::shell(1.0, 2.0).unwrap()] {
        let mesh = Mesh::build(&domain, Resolution::radial(800)).unwrap();
        for seed in 0..5 {
            let e = fd_relative_error(&mesh, seed, 90.0 * PI * PI);
            assert!(e < 1e-4, "{} seed {seed}: {e}", domain.kind_name());
        }
    }
    let boxed = DomainSpec::box4d([2.0; 4], BoxMask::Ball { radius: 0.95 }, 1).unwrap();
    let mesh = Mesh::build(&boxed, Resolution::Grid { n: 10 }).unwrap();
    let e = fd_relative_error(&mesh, 7, 40.0 * PI * PI);
    assert!(e < 1e-4, "grid: {e}");
}

#[test]
fn t_tau_of_zero_has_closed_form_on_ball() {
    // Δ²w = 1 with Navier conditions on the unit ball: w = (r⁴ − 3r² + 2)/192
    let domain = DomainSpec::ball(1.0).unwrap();
    let mesh = Mesh::build(&domain, Resolution::radial(1000)).unwrap();
    let tau = 10.0;
    let t = t_tau(&Field::zeros(&mesh), tau, &WeightH::unit(&mesh)).unwrap();
    let vol = PI * PI / 2.0;
    let exact = Field::from_fn(&mesh, |x| {
        let r = radius(x);
        tau / vol * (r.powi(4) - 3.0 * r * r + 2.0) / 192.0
    });
    let err = t.sub(&exact).max_abs() / exact.max_abs();
    assert!(err < 2e-5, "{err}");
    assert!(t.values.iter().take(999).all(|&v| v > 0.0));
}

#[test]
fn energy_scaling_and_monotonicity() {
    let domain = DomainSpec::shell(1.0, 2.0).unwrap();
    let mesh = Mesh::build(&domain, Resolution::radial(300)).unwrap();
    let u = random_field(&mesh, 3, 7.0).unwrap();
    let n1 = h_norm_sq(&u).unwrap();
    let n3 = h_norm_sq(&u.scaled(3.0)).unwrap();
    assert!((n3 - 9.0 * n1).abs() < 1e-12 * n3);
    let h = WeightH::unit(&mesh);
    let shifted = u.map(|v| v + 2.0);
    let a = i_tau(&shifted, 10.0, &h).unwrap();
    let b = i_tau(&shifted, 20.0, &h).unwrap();
    assert!(a.j_term > 0.0 && b.total < a.total);
    assert_eq!(i_tau(&Field::zeros(&mesh), 5.0, &h).unwrap().total, 0.0);
}

#[test]
fn coercive_sample_is_positive() {
    let domain = DomainSpec::ball(1.0).unwrap();
    let mesh = Mesh::build(&domain, Resolution::radial(500)).unwrap();
    let h = WeightH::unit(&mesh);
    for seed in 0..5 {
        let u = random_field(&mesh, seed, 200.0).unwrap();
        assert!(i_tau(&u, 32.0 * PI * PI, &h).unwrap().total > 0.0);
    }
}

#[test]
fn mt_gap_shift_invariance() {
    let domain = DomainSpec::ball(1.0).unwrap();
    let mesh = Mesh::build(&domain, Resolution::radial(300)).unwrap();
    let u = random_field(&mesh, 11, 30.0).unwrap();
    let a = mt_gap(&u).unwrap();
    let b = mt_gap(&u.map(|v| v + 17.0)).unwrap();
    assert!((a - b).abs() < 1e-12, "{a} {b}");
}

#[test]
fn improved_mt_detects_starved_region() {
    let domain = DomainSpec::shell(1.0, 2.0).unwrap();
    let mesh = Mesh::build(&domain, Resolution::radial(800)).unwrap();
    let regions = [Region::Annulus { inner: 1.05, outer: 1.35 }, Region::Annulus { inner: 1.65, outer: 1.95 }];
    let zero = improved_mt_check(&Field::zeros(&mesh), &regions, 0.1, 0.01 * 128.0 * PI * PI, 0.2).unwrap();
    assert!(zero.applicable && zero.lhs.abs() < 1e-12);
    // mass near r = 1.2 only
    let one = Field::from_fn(&mesh, |x| -400.0 * (radius(x) - 1.2).powi(2));
    let rec = improved_mt_check(&one, &regions, 0.2, 0.01 * 128.0 * PI * PI, 0.2).unwrap();
    assert!(!rec.applicable);
    let two = Field::from_fn(&mesh, |x| {
        let r = radius(x);
        (-400.0 * (r - 1.2).powi(2)).exp().max((-400.0 * (r - 1.8).powi(2)).exp()).ln().max(-50.0)
    });
    let masses = region_masses(&two, &regions).unwrap();
    assert!(masses.iter().all(|&m| m > 0.2), "{masses:?}");
    assert!(improved_mt_check(&two, &regions, 0.2, 1.0, 0.5).is_err());
    assert!(mt_lhs(&two).is_finite());
}

#[test]
fn uniform_shell_density_is_spread() {
    let domain = DomainSpec::shell(1.0, 2.0).unwrap();
    let mesh = Mesh::build(&domain, Resolution::radial(400)).unwrap();
    let dens = Field::constant(&mesh, 1.0).to_density().unwrap();
    let r = domain.inradius() / 10.0;
    let out = covering_select(&dens, 1, 0.5, r, &CoveringOptions::default()).unwrap();
    assert!(matches!(out, Covering::Spread { .. }), "{out:?}");
}
