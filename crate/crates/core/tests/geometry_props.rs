mod common;

use common::{bisect_scale, cross_norm, geometry};
use proptest::prelude::*;
use xtalk_core::geometry::{
    artifact_location, artifact_scale_c, artifact_scale_denominator, critical_angle_at, depression_angle, gamma_bounds,
    gamma_fn, iterate_artifact, plane_pi_side,
};
use xtalk_core::{AcquisitionGeometry, GeometryError, Vec3};

fn vec3(lo: f64, hi: f64, z0: f64, z1: f64) -> impl Strategy<Value = Vec3> {
    (lo..hi, lo..hi, z0..z1).prop_map(|(a, b, c)| Vec3::new(a, b, c))
}

prop_compose! {
    fn config()(h in 4.0..15.0f64)(
        e1 in vec3(-20.0, 20.0, 0.0, 30.0),
        e2 in vec3(-20.0, 20.0, 0.0, 30.0),
        g1 in -10.0..10.0f64,
        g2 in -10.0..10.0f64,
        x in vec3(-8.0, 8.0, 0.0, h - 0.5),
        h in Just(h),
    ) -> (Vec3, Vec3, AcquisitionGeometry) {
        (x, Vec3::new(g1, g2, h), geometry(e1, e2, h))
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn closed_form_scale_matches_bisection((x, gamma, geo) in config()) {
        let oracle = bisect_scale(x, gamma, geo.e1, geo.e2);
        match artifact_scale_c(x, gamma, &geo) {
            Ok(c) => {
                let s = oracle.expect("oracle finds a root whenever the closed form does");
                prop_assert!((c - s).abs() <= 1e-9 * s.max(1.0), "c={c} oracle={s}");
            }
            Err(GeometryError::NoArtifact) => prop_assert!(oracle.is_none() || oracle.unwrap() < 1e-12),
            Err(GeometryError::SegmentViolation { .. }) => {}
            Err(e) => prop_assert!(false, "unexpected {e}"),
        }
    }

    #[test]
    fn artifact_satisfies_travel_time_and_lies_on_ray((x, gamma, geo) in config()) {
        let Ok(p) = artifact_location(x, gamma, &geo) else { return Ok(()) };
        let travel = x.distance(gamma) + x.distance(geo.e2);
        let residual = (p.z.distance(gamma) + p.z.distance(geo.e1) - travel).abs();
        prop_assert!(residual < 1e-9 * travel);
        let (a, b) = (p.z - gamma, x - gamma);
        prop_assert!(cross_norm(a, b) < 1e-9 * a.norm() * b.norm());
        prop_assert!(a.dot(b) > 0.0);
        prop_assert!(artifact_scale_denominator(x, gamma, &geo) > 0.0);
        // Far side of x from the receiver exactly when c > 1.
        prop_assert_eq!(p.z.distance(gamma) > x.distance(gamma), p.c > 1.0);
    }

    #[test]
    fn scale_sign_follows_plane_side((x, gamma, geo) in config()) {
        let Ok(c) = artifact_scale_c(x, gamma, &geo) else { return Ok(()) };
        let side = x.distance(geo.e2) - x.distance(geo.e1);
        if side.abs() > 1e-9 * x.distance(geo.e1) {
            prop_assert_eq!(c > 1.0, side > 0.0, "c={} side={}", c, side);
            prop_assert_eq!((c - 1.0).signum(), -plane_pi_side(x, &geo).signum());
        }
    }

    #[test]
    fn orbits_stay_on_one_side((x, gamma, geo) in config(), n in 1usize..=10) {
        let Ok(orbit) = iterate_artifact(x, gamma, &geo, n) else { return Ok(()) };
        let s0 = plane_pi_side(x, &geo);
        prop_assume!(s0.abs() > 1e-9 * x.distance(geo.e1));
        let floor = 1e-12 * x.distance(geo.e1).max(x.distance(geo.e2));
        let mut prev = x.distance(gamma);
        for p in &orbit {
            let s = plane_pi_side(p.z, &geo);
            // Orbits converge onto the plane; past round-off they sit on it.
            if s.abs() <= floor {
                break;
            }
            prop_assert_eq!(s.signum(), s0.signum());
            let d = p.z.distance(gamma);
            if s0 < 0.0 { prop_assert!(d > prev) } else { prop_assert!(d < prev) }
            prev = d;
        }
    }

    #[test]
    fn gamma_bounds_sandwich((x, gamma, geo) in config()) {
        let Ok(g) = gamma_fn(x, gamma, &geo) else { return Ok(()) };
        let oracle = (gamma.x3 - x.x3) * bisect_scale(x, gamma, geo.e1, geo.e2).unwrap();
        prop_assert!((g - oracle).abs() <= 1e-9 * oracle.max(1.0));
        if let Ok((lo, hi)) = gamma_bounds(x, gamma, &geo) {
            let tol = 1e-12 * g.abs().max(1.0);
            prop_assert!(lo <= g + tol && g <= hi + tol, "{lo} {g} {hi}");
        }
    }

    #[test]
    fn points_on_the_plane_are_fixed(t in -5.0..5.0f64, s in -5.0..5.0f64, z in 0.0..4.0f64, g1 in -8.0..8.0f64) {
        let geo = geometry(Vec3::new(-1.0, 0.0, 2.0), Vec3::new(1.0, 0.0, 2.0), 6.0);
        let x = Vec3::new(0.0, t, z);
        let gamma = Vec3::new(g1, s, 6.0);
        let p = artifact_location(x, gamma, &geo).unwrap();
        prop_assert!(p.z.distance(x) < 1e-12, "{:e} c-1={:e}", p.z.distance(x), p.c - 1.0);
    }

    #[test]
    fn critical_angle_foot_is_on_the_plane(
        e1 in vec3(-20.0, 20.0, 0.0, 10.0),
        e2 in vec3(-20.0, 20.0, 0.0, 10.0),
        g in vec3(-10.0, 10.0, 3.0, 12.0),
    ) {
        prop_assume!((e1 - e2).horizontal().norm() > 0.5);
        let geo = geometry(e1, e2, g.x3);
        let ca = critical_angle_at(g, &geo).unwrap();
        let scale = e1.distance(e2).max(1.0) * 10.0;
        prop_assert!((ca.x_b.distance(e1) - ca.x_b.distance(e2)).abs() < 1e-10 * scale);
        prop_assert_eq!(ca.x_b.x3, 0.0);
        // x_b is the foot of the perpendicular from the receiver's ground
        // projection onto the ground trace of the plane.
        let foot = ca.x_b - Vec3::new(g.x1, g.x2, 0.0);
        let baseline = (e2 - e1).horizontal();
        prop_assert!(cross_norm(foot, baseline) <= 1e-9 * foot.norm().max(1.0) * baseline.norm());
        prop_assert!((depression_angle(g, ca.x_b) - ca.theta_c).abs() < 1e-12);
    }
}
