use super::*;
use crate::distribution::LiftOptions;
use crate::maps::builtin;
use crate::staircase::{build_staircase, GrowthSeed, QuadMesh, StaircaseConfig};
use proptest::prelude::*;
use std::f64::consts::{E, TAU};

fn opts() -> ModulusOptions {
    ModulusOptions::default()
}

fn assert_certified(est: &ModulusEstimate) {
    assert!(est.min_length >= 1.0 - 1e-9, "min length {}", est.min_length);
    assert!(est.final_constraint_violation <= 1e-9);
    assert!(est.rho.iter().all(|r| *r >= 0.0));
}

#[test]
fn rectangle_straight_crossings() {
    let c = CellComplex::grid(20, 10, 2.0, 1.0).unwrap();
    let fam = family_rectangle(&c, Side::LeftRight, 0).unwrap();
    let est = modulus(&c, &fam, 2.0, &opts()).unwrap();
    assert_certified(&est);
    assert!((est.value - 0.5).abs() < 1e-9, "{}", est.value);
    assert_eq!(est.bound, BoundKind::ApproxInfimum);
    let fam = family_rectangle(&c, Side::BottomTop, 0).unwrap();
    let est = modulus(&c, &fam, 2.0, &opts()).unwrap();
    assert!((est.value - 2.0).abs() < 1e-9, "{}", est.value);
}

#[test]
fn rectangle_lattice_crossings() {
    let c = CellComplex::grid(24, 12, 2.0, 1.0).unwrap();
    let est = modulus(&c, &CurveFamily::GridCrossing { side: Side::LeftRight }, 2.0, &opts()).unwrap();
    assert_certified(&est);
    assert!((est.value - 0.5).abs() < 1e-3, "{}", est.value);
}

#[test]
fn rectangle_family_size() {
    let c = CellComplex::grid(2, 2, 1.0, 1.0).unwrap();
    let fam = family_rectangle(&c, Side::LeftRight, 4).unwrap();
    assert_eq!(fam.explicit_len(), Some(2 * 5));
    let est = modulus(&c, &fam, 2.0, &opts()).unwrap();
    assert_certified(&est);
    // The perturbations are longer than the straight crossings.
    assert!((est.value - 1.0).abs() < 1e-6, "{}", est.value);
    let one_lane = CellComplex::grid(4, 1, 1.0, 1.0).unwrap();
    assert!(matches!(
        family_rectangle(&one_lane, Side::LeftRight, 0),
        Err(Error::InvalidFamily(_))
    ));
}

#[test]
fn unit_square_lattice_crossings() {
    let c = CellComplex::grid(64, 64, 1.0, 1.0).unwrap();
    let est = modulus(&c, &CurveFamily::GridCrossing { side: Side::LeftRight }, 2.0, &opts()).unwrap();
    assert_certified(&est);
    assert!((est.value - 1.0).abs() < 0.02, "{}", est.value);
}

#[test]
fn richer_rectangle_family_does_not_shrink_estimate() {
    let c = CellComplex::grid(16, 8, 2.0, 1.0).unwrap();
    let o = opts();
    let m0 = modulus(&c, &family_rectangle(&c, Side::LeftRight, 0).unwrap(), 2.0, &o).unwrap().value;
    let m8 = modulus(&c, &family_rectangle(&c, Side::LeftRight, 8).unwrap(), 2.0, &o).unwrap().value;
    assert!(m8 >= m0 - 2.0 * o.tol, "{m8} < {m0}");
}

#[test]
fn annulus_rays_and_crossings() {
    let c = CellComplex::annulus(1.0, E, 48, 96).unwrap();
    for fam in [family_polar_rays(&c).unwrap(), CurveFamily::RadialCrossing] {
        let est = modulus(&c, &fam, 2.0, &opts()).unwrap();
        assert_certified(&est);
        assert!((est.value / TAU - 1.0).abs() < 0.05, "{} {}", fam.tag(), est.value);
    }
}

#[test]
fn conformal_scaling_invariance() {
    let c = CellComplex::grid(12, 6, 3.0, 1.5).unwrap();
    let fam = CurveFamily::GridCrossing { side: Side::LeftRight };
    let base = modulus(&c, &fam, 2.0, &opts()).unwrap().value;
    let scaled = modulus(&c.scaled(7.5), &fam, 2.0, &opts()).unwrap().value;
    assert!((scaled / base - 1.0).abs() < 1e-6, "{base} {scaled}");
    // Away from p = 2 the modulus scales by s^(2-p).
    let b3 = modulus(&c, &fam, 3.0, &opts()).unwrap().value;
    let s3 = modulus(&c.scaled(2.0), &fam, 3.0, &opts()).unwrap().value;
    assert!((s3 / b3 - 0.5).abs() < 1e-4, "{b3} {s3}");
}

#[test]
fn rejects_bad_inputs() {
    let grid = CellComplex::grid(3, 3, 1.0, 1.0).unwrap();
    let polar = CellComplex::annulus(1.0, 2.0, 3, 8).unwrap();
    assert!(matches!(
        modulus(&grid, &CurveFamily::RadialCrossing, 2.0, &opts()),
        Err(Error::InvalidFamily(_))
    ));
    assert!(matches!(
        modulus(&polar, &CurveFamily::GridCrossing { side: Side::LeftRight }, 2.0, &opts()),
        Err(Error::InvalidFamily(_))
    ));
    let fam = family_rectangle(&grid, Side::LeftRight, 0).unwrap();
    assert!(matches!(modulus(&grid, &fam, 0.5, &opts()), Err(Error::InvalidInput(_))));
    let empty = CurveFamily::Explicit {
        tag: "none".into(),
        curves: vec![],
    };
    assert!(matches!(modulus(&grid, &empty, 2.0, &opts()), Err(Error::InvalidFamily(_))));
    let outside = CurveFamily::Explicit {
        tag: "bad".into(),
        curves: vec![Curve::new(vec![99], vec![1.0]).unwrap()],
    };
    assert!(matches!(modulus(&grid, &outside, 2.0, &opts()), Err(Error::InvalidFamily(_))));
    assert!(matches!(CellComplex::grid(0, 3, 1.0, 1.0), Err(Error::InvalidComplex(_))));
    assert!(matches!(
        CellComplex::polar(vec![1.0, 1.0], 4, RadialMetric::Flat),
        Err(Error::InvalidComplex(_))
    ));
}

#[test]
fn early_stop_reports_upper_bound() {
    let c = CellComplex::annulus(1.0, E, 16, 32).unwrap();
    let o = ModulusOptions {
        max_iter: 3,
        ..opts()
    };
    let est = modulus(&c, &CurveFamily::RadialCrossing, 2.0, &o).unwrap();
    assert_eq!(est.bound, BoundKind::UpperBound);
    assert_certified(&est);
    let full = modulus(&c, &CurveFamily::RadialCrossing, 2.0, &opts()).unwrap();
    assert!(est.value >= full.value * (1.0 - 1e-9));
}

fn strip(n_along: usize, height: f64) -> crate::staircase::StaircaseSurface {
    let f = builtin("ortho_proj:3,2").unwrap();
    let cfg = StaircaseConfig {
        max_height: height,
        n_along,
        n_up: 4,
        initial_height: Some(height / 3.0),
        max_step_height: Some(height / 3.0),
        lift: LiftOptions {
            step: 0.5,
            ..Default::default()
        },
        ..StaircaseConfig::default()
    };
    build_staircase(&f, &cfg).unwrap()
}

#[test]
fn lifted_rays_match_planar_strip() {
    let s = strip(11, 1.5);
    let mesh = QuadMesh::from_surface(&s).unwrap();
    let complex = CellComplex::from_mesh(&mesh).unwrap();
    let rays: Vec<f64> = (0..10).map(|i| (i as f64 + 0.5) / 10.0).collect();
    let fam = family_lifted_rays(&mesh, &rays, None).unwrap();
    let lifted = modulus(&complex, &fam, 2.0, &opts()).unwrap();
    assert_certified(&lifted);
    let plane = CellComplex::grid(10, 12, 1.0, 1.5).unwrap();
    let planar = modulus(&plane, &family_rectangle(&plane, Side::BottomTop, 0).unwrap(), 2.0, &opts()).unwrap();
    assert!((planar.value - 1.0 / 1.5).abs() < 1e-9);
    assert!((lifted.value / planar.value - 1.0).abs() < 0.03, "{} {}", lifted.value, planar.value);
}

#[test]
fn lifted_rays_reject_bad_parameters() {
    let s = strip(5, 1.0);
    let mesh = QuadMesh::from_surface(&s).unwrap();
    assert!(matches!(family_lifted_rays(&mesh, &[], None), Err(Error::InvalidFamily(_))));
    assert!(matches!(family_lifted_rays(&mesh, &[0.5, 1.5], None), Err(Error::InvalidFamily(_))));
    let fam = family_lifted_rays(&mesh, &[0.0, 1.0], None).unwrap();
    assert_eq!(fam.explicit_len(), Some(2));
}

#[test]
fn truncated_rays_lose_modulus_with_radius() {
    let s = strip(9, 3.0);
    let mesh = QuadMesh::from_surface(&s).unwrap();
    let complex = CellComplex::from_mesh(&mesh).unwrap();
    let dist = mesh.distances(&mesh.seed_vertices(&GrowthSeed::BaseRow).unwrap());
    let rays = [0.1, 0.3, 0.5, 0.7, 0.9];
    let mut last = f64::INFINITY;
    for r in [0.8, 1.5, 2.2, 3.0] {
        let fam = family_lifted_rays(&mesh, &rays, Some((&dist, r))).unwrap();
        let m = modulus(&complex, &fam, 2.0, &opts()).unwrap().value;
        assert!(m <= last * (1.0 + 1e-9), "r = {r}: {m} > {last}");
        last = m;
    }
}

/// `∫ ρ² dA` for `ρ = α/(r ln r)` above `r_c`, held at `ρ(r_c)` on `1 < r < r_c`,
/// over the flat annulus `1 < r < R`.
fn flat_energy(alpha: f64, r_c: f64, big_r: f64) -> f64 {
    let cap = 1.0 / (r_c * r_c.ln());
    TAU * alpha * alpha * (0.5 * (r_c * r_c - 1.0) * cap * cap + 1.0 / r_c.ln() - 1.0 / big_r.ln())
}

#[test]
fn flat_fixture_matches_closed_form() {
    let setup = flat_fixture(1e4, 400, 64).unwrap();
    let rep = parabolicity_bound(&setup, &[0.5, 1.0], &[1e2, 1e3, 1e4], 2.0).unwrap();
    assert!((rep.r_cap - E).abs() < 1e-15);
    for row in &rep.rows {
        let exact = flat_energy(row.alpha, E, row.cutoff);
        assert!((row.energy / exact - 1.0).abs() < 0.03, "{row:?} vs {exact}");
    }
    for s in &rep.summary {
        // Along a ray the ρ-length is α (ln ln R + 1 − 1/e) ≥ α ln(ln R / ln 2).
        let a = 1.0 / (s.cutoff.ln() / 2f64.ln()).ln();
        assert!((s.alpha_min - a).abs() < 1e-15);
        assert!(s.alpha_certified <= s.alpha_min);
        assert!(s.m_certified <= s.m_upper);
    }
    let m: Vec<f64> = rep.summary.iter().map(|s| s.m_upper).collect();
    assert!(m[0] > m[1] && m[1] > m[2], "{m:?}");
    assert!(m[2] > 1.0, "{m:?}");
    assert_eq!(rep.verdict, Verdict::Inconclusive);
}

#[test]
fn hyperbolic_fixture_is_flagged() {
    let setup = hyperbolic_fixture(0.01, 1e4, 400, 64).unwrap();
    let rep = parabolicity_bound(&setup, &[], &[1e2, 1e3, 1e4], 2.0).unwrap();
    let m: Vec<f64> = rep.summary.iter().map(|s| s.m_upper).collect();
    assert!(m[2] > m[1], "{m:?}");
    assert_eq!(rep.verdict, Verdict::HyperbolicIndicated);
}

#[test]
fn parabolicity_rejects_bad_parameters() {
    let setup = flat_fixture(100.0, 50, 16).unwrap();
    assert!(matches!(
        parabolicity_bound(&setup, &[0.0], &[50.0], 2.0),
        Err(Error::InvalidInput(_))
    ));
    assert!(matches!(
        parabolicity_bound(&setup, &[1.0], &[1e3], 2.0),
        Err(Error::OutOfExtent(..))
    ));
    assert!(matches!(
        parabolicity_bound(&setup, &[1.0], &[50.0], 1.0),
        Err(Error::InvalidInput(_))
    ));
}

#[test]
fn staircase_radial_setup() {
    let s = strip(9, 3.0);
    let mesh = QuadMesh::from_surface(&s).unwrap();
    let setup = RadialSetup::from_mesh("strip", &mesh, &GrowthSeed::BaseRow, &[0.25, 0.5, 0.75]).unwrap();
    // The side columns start on the seed, so the rim is one row away.
    assert!(setup.extent < 2.0, "{}", setup.extent);
    let e = parabolicity_bound(&setup, &[1.0], &[3.0], 2.0).unwrap_err();
    assert!(matches!(e, Error::OutOfExtent(..)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn subfamilies_have_smaller_modulus(mask in proptest::collection::vec(any::<bool>(), 18)) {
        prop_assume!(mask.iter().any(|b| *b));
        let c = CellComplex::grid(6, 6, 1.0, 1.0).unwrap();
        let fam = family_rectangle(&c, Side::LeftRight, 2).unwrap();
        let sub = fam.subfamily(|i| mask[i]);
        let full = modulus(&c, &fam, 2.0, &opts()).unwrap();
        let part = modulus(&c, &sub, 2.0, &opts()).unwrap();
        assert_certified(&full);
        assert_certified(&part);
        prop_assert!(part.value <= full.value * (1.0 + 1e-3), "{} > {}", part.value, full.value);
    }

    #[test]
    fn estimate_is_always_certified(nx in 2usize..8, ny in 2usize..8, w in 0.5f64..3.0, h in 0.5f64..3.0, p in 1.5f64..3.0) {
        let c = CellComplex::grid(nx, ny, w, h).unwrap();
        let est = modulus(&c, &CurveFamily::GridCrossing { side: Side::BottomTop }, p, &opts()).unwrap();
        assert_certified(&est);
        // The uniform density is admissible, so it bounds the modulus.
        prop_assert!(est.value <= w * h / h.powf(p) * (1.0 + 1e-9));
    }
}
