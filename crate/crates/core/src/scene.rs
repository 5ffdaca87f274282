//! Reflectivity volumes used as simulation inputs.

use crate::error::{Result, XtalkError};
use crate::grid::{GridSpec, ScalarField3D};
use crate::vec3::Vec3;

/// Width, in voxels, of the Gaussian standing in for a point scatterer.
pub const POINT_WIDTH_VOXELS: f64 = 1.5;

/// `exp(-|x - center|² / width²)` sampled on `grid`.
pub fn make_gaussian_scene(grid: GridSpec, center: Vec3, width: f64) -> Result<ScalarField3D> {
    if !(width > 0.0 && width.is_finite()) {
        return Err(XtalkError::Invalid(format!("gaussian width must be positive, got {width}")));
    }
    let inv = 1.0 / (width * width);
    Ok(ScalarField3D::from_fn(grid, |x| (-(x - center).norm_sq() * inv).exp()))
}

/// Indicator of the open box `lo < x < hi`.
pub fn make_box_scene(grid: GridSpec, lo: Vec3, hi: Vec3) -> Result<ScalarField3D> {
    if !(lo.x1 < hi.x1 && lo.x2 < hi.x2 && lo.x3 < hi.x3) {
        return Err(XtalkError::Invalid("box corners must satisfy lo < hi componentwise".into()));
    }
    Ok(ScalarField3D::from_fn(grid, |x| {
        let inside = lo.x1 < x.x1 && x.x1 < hi.x1 && lo.x2 < x.x2 && x.x2 < hi.x2 && lo.x3 < x.x3 && x.x3 < hi.x3;
        if inside {
            1.0
        } else {
            0.0
        }
    }))
}

/// Narrow Gaussian (1.5 voxels wide along each axis, peak 1) at `location`.
pub fn make_point_scene(grid: GridSpec, location: Vec3) -> Result<ScalarField3D> {
    if !grid.contains(location) {
        return Err(XtalkError::OutOfBounds(location.to_array()));
    }
    let w = grid.spacing.map(|d| POINT_WIDTH_VOXELS * d);
    Ok(ScalarField3D::from_fn(grid, |x| {
        let d = x - location;
        (-((d.x1 / w[0]).powi(2) + (d.x2 / w[1]).powi(2) + (d.x3 / w[2]).powi(2))).exp()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn desk_grid() -> GridSpec {
        GridSpec::spanning(Vec3::new(-5.0, -3.0, 0.0), Vec3::new(5.0, 7.0, 6.0), [64, 64, 64]).unwrap()
    }

    #[test]
    fn gaussian_peak_and_falloff() {
        let g = GridSpec::new(Vec3::new(-1.0, 1.0, 2.0), [1.0, 1.0, 1.0], [3, 3, 3]).unwrap();
        let v = make_gaussian_scene(g, Vec3::new(0.0, 2.0, 3.0), 1.0).unwrap();
        assert_eq!(v.get(1, 1, 1), 1.0);
        assert!((v.get(2, 1, 1) - (-1.0f64).exp()).abs() < 1e-15);
        assert!(make_gaussian_scene(g, Vec3::ZERO, 0.0).is_err());
    }

    #[test]
    fn gaussian_integral_matches_closed_form() {
        let g = GridSpec::spanning(Vec3::new(-4.0, -2.0, -1.0), Vec3::new(4.0, 6.0, 7.0), [81, 81, 81]).unwrap();
        let v = make_gaussian_scene(g, Vec3::new(0.0, 2.0, 3.0), 1.0).unwrap();
        let integral = v.sum() * g.voxel_volume();
        let exact = PI.powf(1.5);
        assert!((integral - exact).abs() < 0.01 * exact, "{integral} vs {exact}");
    }

    #[test]
    fn box_membership_and_volume() {
        let g = desk_grid();
        let lo = Vec3::new(-2.0, -1.0, 0.0);
        let hi = Vec3::new(2.0, 1.0, 0.5);
        let v = make_box_scene(g, lo, hi).unwrap();
        let probe = |p: Vec3| {
            let s = ScalarField3D::from_fn(GridSpec::new(p, [1.0; 3], [1, 1, 1]).unwrap(), |_| 0.0);
            make_box_scene(s.grid, lo, hi).unwrap().values[0]
        };
        assert_eq!(probe(Vec3::new(0.0, 0.0, 0.25)), 1.0);
        assert_eq!(probe(Vec3::new(3.0, 0.0, 0.25)), 0.0);
        // Counting voxels: the volume is within one voxel shell of 4.
        let vol = v.sum() * g.voxel_volume();
        let d = g.spacing;
        let shell = 2.0 * (4.0 * 2.0 * d[2] + 4.0 * 0.5 * d[1] + 2.0 * 0.5 * d[0]);
        assert!((vol - 4.0).abs() <= shell, "volume {vol}, shell {shell}");
        assert!(make_box_scene(g, hi, lo).is_err());
    }

    #[test]
    fn point_scene_peak_and_determinism() {
        let g = desk_grid();
        let loc = g.point(20, 30, 40);
        let a = make_point_scene(g, loc).unwrap();
        let b = make_point_scene(g, loc).unwrap();
        assert_eq!(a.argmax(), g.index(20, 30, 40));
        assert_eq!(a.values, b.values);
        assert!(matches!(make_point_scene(g, Vec3::new(0.0, 0.0, 9.0)), Err(XtalkError::OutOfBounds(_))));
    }

    #[test]
    fn point_scene_mass_matches_separable_sum() {
        let g = desk_grid();
        let loc = g.point(31, 32, 30) + Vec3::new(0.3 * g.spacing[0], -0.2 * g.spacing[1], 0.45 * g.spacing[2]);
        let v = make_point_scene(g, loc).unwrap();
        // Oracle: product of independent 1-D sums.
        let axis = |a: usize| -> f64 {
            let o = g.origin.to_array()[a];
            let c = loc.to_array()[a];
            let w = POINT_WIDTH_VOXELS * g.spacing[a];
            (0..g.dims[a]).map(|k| (-((o + k as f64 * g.spacing[a] - c) / w).powi(2)).exp()).sum()
        };
        let oracle = axis(0) * axis(1) * axis(2);
        assert!((v.sum() - oracle).abs() < 1e-6 * oracle);
        // Far from the boundary the lattice sum equals the continuous mass.
        let continuous = PI.powf(1.5) * POINT_WIDTH_VOXELS.powi(3);
        assert!((v.sum() - continuous).abs() < 1e-6 * continuous);
    }

    #[test]
    fn origin_shift_shifts_samples() {
        let g = desk_grid();
        let mut shifted = g;
        shifted.origin = g.origin + Vec3::new(2.0 * g.spacing[0], 0.0, -g.spacing[2]);
        let center = Vec3::new(0.1, 2.0, 3.0);
        let a = make_gaussian_scene(g, center, 1.0).unwrap();
        let b = make_gaussian_scene(shifted, center, 1.0).unwrap();
        for (i1, i2, i3) in [(10, 20, 30), (30, 33, 20), (5, 40, 50)] {
            let va = a.get(i1 + 2, i2, i3 - 1);
            let vb = b.get(i1, i2, i3);
            assert!((va - vb).abs() < 1e-12 * va.abs().max(1e-300));
        }
    }
}
