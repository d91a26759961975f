use meanfield::barycenters::{
    canonicalize, f_star_critical_census, nearest_barycenter, weak_distance, CensusConfig, FormalBarycenter, GCutoff,
    ProjectionOptions, TestDictionary,
};
use meanfield::domain::{dist, Density, DomainSpec, Point};
use proptest::prelude::*;

fn atoms() -> FormalBarycenter {
    FormalBarycenter::from_atoms(&[(0.3, [0.5, 0.0, 0.0, 0.0]), (0.7, [-0.4, 0.2, 0.0, 0.1])]).unwrap()
}

#[test]
fn weak_distance_vanishes_on_the_barycenter_itself() {
    let sigma = atoms();
    let dens = sigma.to_density();
    let dict = TestDictionary::standard(&dens, &sigma, 1.0);
    assert_eq!(weak_distance(&dens, &sigma, &dict), 0.0);
}

#[test]
fn weak_distance_is_bounded_by_transport_cost() {
    // every test function is 1-Lipschitz, so moving mass t by s changes the
    // pairing by at most t·s
    let sigma = atoms();
    for s in [1e-3, 1e-2, 0.1] {
        let moved =
            FormalBarycenter::from_atoms(&[(0.3, [0.5 + s, 0.0, 0.0, 0.0]), (0.7, [-0.4, 0.2, 0.0, 0.1])]).unwrap();
        let dens = moved.to_density();
        let dict = TestDictionary::standard(&dens, &sigma, 1.0);
        let d = weak_distance(&dens, &sigma, &dict);
        assert!(d > 0.0 && d <= 0.3 * s + 1e-15, "s = {s}: {d}");
    }
}

#[test]
fn projection_recovers_a_smeared_two_atom_measure() {
    let sigma = atoms();
    let mut points = Vec::new();
    let mut mass = Vec::new();
    for a in &sigma.atoms {
        for i in 0..81 {
            let off =
                [(i % 3) as f64 - 1.0, ((i / 3) % 3) as f64 - 1.0, ((i / 9) % 3) as f64 - 1.0, (i / 27) as f64 - 1.0];
            points.push([0, 1, 2, 3].map(|c| a.x[c] + 0.01 * off[c]));
            mass.push(a.t / 81.0);
        }
    }
    let dens = Density::new(points, mass).unwrap();
    let got = nearest_barycenter(&dens, 2, &ProjectionOptions::new(0.2, 1e-3)).unwrap();
    assert_eq!(got.len(), 2);
    for (g, w) in got.atoms.iter().zip(&sigma.atoms) {
        assert!(dist(&g.x, &w.x) < 1e-12);
        assert!((g.t - w.t).abs() < 1e-12);
    }
}

#[test]
fn census_on_the_ball_is_internally_consistent() {
    let ball = DomainSpec::ball(1.0).unwrap();
    let g = GCutoff::new(ball.eta).unwrap();
    let rep = f_star_critical_census(&ball, &g, &CensusConfig::new(2, 300, 5)).unwrap();
    assert_eq!(rep.dimension, 9);
    assert_eq!(rep.converged + rep.unconverged, rep.starts);
    assert_eq!(rep.plain_sum as usize, rep.points.len());
    assert_eq!(rep.counts.iter().sum::<usize>(), rep.points.len());
    for p in &rep.points {
        assert!(p.morse_index <= rep.dimension);
        assert!(p.gradient_norm < 1e-6 / (g.eta * g.eta));
        assert!(p.sigma.atoms.iter().all(|a| ball.contains(&a.x) && a.t > 0.0));
    }
    let alt: i64 = rep.counts.iter().enumerate().map(|(i, &c)| if i % 2 == 0 { c as i64 } else { -(c as i64) }).sum();
    assert_eq!(alt, rep.alternating_sum);
    // χ(B⁴) = 1, so the predicted alternating count is (−1)·1·0/2 = 0
    assert_eq!(rep.target, "0");
}

#[test]
fn census_rejects_single_atoms() {
    let ball = DomainSpec::ball(1.0).unwrap();
    assert!(f_star_critical_census(&ball, &GCutoff::new(0.1).unwrap(), &CensusConfig::new(1, 10, 0)).is_err());
}

fn point() -> impl Strategy<Value = Point> {
    prop::array::uniform4(-1.0f64..1.0)
}

proptest! {
    #[test]
    fn canonical_form_ignores_order_and_is_idempotent(
        pts in prop::collection::vec((0.01f64..1.0, point()), 1..6),
        shift in 0usize..6,
    ) {
        let total: f64 = pts.iter().map(|p| p.0).sum();
        let raw: Vec<(f64, Point)> = pts.iter().map(|&(t, x)| (t / total, x)).collect();
        let mut rotated = raw.clone();
        rotated.rotate_left(shift % raw.len());
        let a = canonicalize(&raw, 0.05).unwrap();
        let b = canonicalize(&rotated, 0.05).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.atoms.iter().zip(&b.atoms) {
            prop_assert!((x.t - y.t).abs() < 1e-12 && dist(&x.x, &y.x) < 1e-12);
        }
        let again = canonicalize(&a.raw(), 0.05).unwrap();
        prop_assert_eq!(&again, &a);
        prop_assert!(a.len() == 1 || a.min_separation() >= 0.05);
        prop_assert!((a.atoms.iter().map(|x| x.t).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn g_cutoff_is_nonincreasing_and_c1(s in 0.01f64..3.0, eta in 0.05f64..1.0) {
        let g = GCutoff::new(eta).unwrap();
        let t = s * eta;
        prop_assert!(g.value(t) >= g.value(t * 1.01));
        prop_assert!(g.derivative(t) <= 0.0);
        let h = 1e-7 * eta;
        let fd = (g.value(t + h) - g.value(t - h)) / (2.0 * h);
        prop_assert!((fd - g.derivative(t)).abs() <= 1e-4 * (1.0 + g.derivative(t).abs()) / eta);
    }
}
