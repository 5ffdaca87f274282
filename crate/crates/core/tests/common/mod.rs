#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use xtalk_core::geometry::{artifact_scale_c, TrackAxis};
use xtalk_core::{AcquisitionGeometry, GeometryError, Vec3};

/// One randomly drawn scatterer/receiver/emitter configuration.
#[derive(Debug, Clone)]
pub struct Config {
    pub x: Vec3,
    pub gamma: Vec3,
    pub geo: AcquisitionGeometry,
}

pub fn geometry(e1: Vec3, e2: Vec3, h: f64) -> AcquisitionGeometry {
    AcquisitionGeometry::new(e1, e2, h, TrackAxis::single(0.0), TrackAxis::single(0.0)).unwrap()
}

/// Draws emitters anywhere in a box, the receiver at height `h` and the
/// scatterer below it. No validity filtering.
pub fn draw(rng: &mut ChaCha8Rng) -> Config {
    let h = rng.gen_range(4.0..15.0);
    let v = |rng: &mut ChaCha8Rng, lo: f64, hi: f64, z0: f64, z1: f64| {
        Vec3::new(rng.gen_range(lo..hi), rng.gen_range(lo..hi), rng.gen_range(z0..z1))
    };
    let e1 = v(rng, -20.0, 20.0, 0.0, 30.0);
    let e2 = v(rng, -20.0, 20.0, 0.0, 30.0);
    let gamma = Vec3::new(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0), h);
    let x = v(rng, -8.0, 8.0, 0.0, h - 0.5);
    Config { x, gamma, geo: geometry(e1, e2, h) }
}

/// Draws until the artifact map is defined (a positive scale exists).
pub fn draw_valid(rng: &mut ChaCha8Rng) -> (Config, f64) {
    loop {
        let cfg = draw(rng);
        match artifact_scale_c(cfg.x, cfg.gamma, &cfg.geo) {
            Ok(c) => return (cfg, c),
            Err(GeometryError::NoArtifact) | Err(GeometryError::SegmentViolation { .. }) => continue,
            Err(e) => panic!("unexpected error {e}"),
        }
    }
}

/// Independent root of `s|x-γ| + |s(x-γ) + γ - E1| = |x-γ| + |x-E2|` by
/// bisection. The left side is nondecreasing in `s`.
pub fn bisect_scale(x: Vec3, gamma: Vec3, e1: Vec3, e2: Vec3) -> Option<f64> {
    let d = x - gamma;
    let l = d.norm();
    let target = l + (x - e2).norm();
    let g = |s: f64| s * l + (d * s + gamma - e1).norm() - target;
    if g(0.0) >= 0.0 {
        return None;
    }
    let mut hi = 1.0;
    while g(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return None;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

/// `|a × b|` computed directly.
pub fn cross_norm(a: Vec3, b: Vec3) -> f64 {
    Vec3::new(a.x2 * b.x3 - a.x3 * b.x2, a.x3 * b.x1 - a.x1 * b.x3, a.x1 * b.x2 - a.x2 * b.x1).norm()
}

/// Prints one status line. Writes to the stdout handle directly so the line
/// shows up even when the test harness captures output.
pub fn status(name: &str, pass: bool, detail: &str) {
    use std::io::Write;
    let line = format!("\n[{}] {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
}
