//! Backprojection of bistatic data onto the scene grid.
//!
//! The unnormalized operator is the exact transpose of the forward model for
//! one emitter. The normalized variant divides by the interpolated hit count
//! so a point scatterer images near unit amplitude times its deposited mass.

use rayon::prelude::*;

use crate::error::{Result, XtalkError};
use crate::forward::{BeamMask, DataCube, Mute};
use crate::geometry::{plane_pi_side, Emitter};
use crate::grid::{GridSpec, ScalarField3D};
use crate::vec3::Vec3;

/// Per-voxel weighted sums `(Σ w m D, Σ w m)` over the aperture for one emitter.
fn gather(
    data: &DataCube,
    grid: &GridSpec,
    emitter: Emitter,
    mute: Option<&Mute>,
    beam: &BeamMask,
) -> (Vec<f64>, Vec<f64>) {
    let geo = &data.geometry;
    let tg = &data.time;
    let em = geo.emitter(emitter);
    let receivers = geo.receivers();
    let inv_c0 = 1.0 / geo.c0;
    let n_t = tg.n_t;
    let weighted: Vec<f64> = match mute {
        Some(m) => data.samples.iter().zip(&m.values).map(|(d, w)| d * w).collect(),
        None => data.samples.clone(),
    };
    let ones;
    let mvals: &[f64] = match mute {
        Some(m) => &m.values,
        None => {
            ones = vec![1.0; data.samples.len()];
            &ones
        }
    };
    let n = grid.len();
    let mut num = vec![0.0; n];
    let mut den = vec![0.0; n];
    num.par_iter_mut().zip(den.par_iter_mut()).enumerate().for_each(|(idx, (nu, de))| {
        let x = grid.point_at(idx);
        let d_e = x.distance(em);
        let (mut a, mut b) = (0.0, 0.0);
        for (k, &gamma) in receivers.iter().enumerate() {
            let mk = beam.weight(k, gamma, x);
            if mk == 0.0 {
                continue;
            }
            let t = (x.distance(gamma) + d_e) * inv_c0;
            if let Some((i, w0, w1)) = tg.stencil(t) {
                let o = k * n_t + i;
                a += mk * (w0 * weighted[o] + w1 * weighted[o + 1]);
                b += mk * (w0 * mvals[o] + w1 * mvals[o + 1]);
            }
        }
        *nu = a;
        *de = b;
    });
    (num, den)
}

fn check_shapes(data: &DataCube, mute: Option<&Mute>) -> Result<()> {
    if let Some(m) = mute {
        if m.values.len() != data.samples.len() {
            return Err(XtalkError::Invalid("mute shape does not match data".into()));
        }
    }
    Ok(())
}

/// Transpose of [`crate::forward::simulate`] restricted to `emitter`.
pub fn backproject(
    data: &DataCube,
    grid: &GridSpec,
    emitter: Emitter,
    mute: Option<&Mute>,
    beam: &BeamMask,
) -> Result<ScalarField3D> {
    check_shapes(data, mute)?;
    let (num, _) = gather(data, grid, emitter, mute, beam);
    let dv = grid.voxel_volume();
    Ok(ScalarField3D { grid: *grid, values: num.into_iter().map(|v| v * dv).collect() })
}

/// Transpose of [`crate::forward::simulate`] over a set of emitters.
pub fn adjoint(
    data: &DataCube,
    grid: &GridSpec,
    emitters: &[Emitter],
    mute: Option<&Mute>,
    beam: &BeamMask,
) -> Result<ScalarField3D> {
    let mut out = ScalarField3D::zeros(*grid);
    for &e in emitters {
        let part = backproject(data, grid, e, mute, beam)?;
        out.values.iter_mut().zip(&part.values).for_each(|(o, p)| *o += p);
    }
    Ok(out)
}

/// Backprojection assuming every echo came from `emitter`, divided by the
/// per-voxel sum of aperture weights. Voxels with zero weight image to 0.
pub fn normalized_backproject(
    data: &DataCube,
    grid: &GridSpec,
    emitter: Emitter,
    mute: Option<&Mute>,
    beam: &BeamMask,
) -> Result<ScalarField3D> {
    check_shapes(data, mute)?;
    let (num, den) = gather(data, grid, emitter, mute, beam);
    if den.iter().all(|d| *d == 0.0) {
        return Err(XtalkError::EmptyAperture);
    }
    let values = num.iter().zip(&den).map(|(a, b)| if *b > 0.0 { a / b } else { 0.0 }).collect();
    Ok(ScalarField3D { grid: *grid, values })
}

/// Weight given to the emitter-1 image at signed plane distance `side`,
/// blending smoothly over a band of half-width `width` around the plane.
pub fn stitch_weight(side: f64, width: f64) -> f64 {
    let s = (side / width).clamp(-1.0, 1.0);
    0.5 * (1.0 + (0.5 * std::f64::consts::PI * s).sin())
}

/// Default blend half-width: four mean voxel spacings.
pub fn default_stitch_width(grid: &GridSpec) -> f64 {
    4.0 * grid.spacing.iter().sum::<f64>() / 3.0
}

/// Images each side of the plane `|x-E1| = |x-E2|` with one emitter:
/// emitter 1 where `|x-E1| > |x-E2|`, emitter 2 on the other side.
pub fn stitched_backproject(
    data: &DataCube,
    grid: &GridSpec,
    mute: Option<&Mute>,
    beam: &BeamMask,
    width: f64,
) -> Result<ScalarField3D> {
    if !(width > 0.0 && width.is_finite()) {
        return Err(XtalkError::Invalid(format!("stitch width must be positive, got {width}")));
    }
    let one = normalized_backproject(data, grid, Emitter::One, mute, beam)?;
    let two = normalized_backproject(data, grid, Emitter::Two, mute, beam)?;
    let values = (0..grid.len())
        .map(|i| {
            let w = stitch_weight(plane_pi_side(grid.point_at(i), &data.geometry), width);
            w * one.values[i] + (1.0 - w) * two.values[i]
        })
        .collect();
    Ok(ScalarField3D { grid: *grid, values })
}

/// A local maximum of the smoothed image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub index: usize,
    pub point: Vec3,
    pub value: f64,
}

/// 3x3x3 box average, truncated at the grid boundary.
pub fn smooth_box(image: &ScalarField3D) -> ScalarField3D {
    let g = image.grid;
    let [n1, n2, n3] = g.dims;
    let values = (0..g.len())
        .into_par_iter()
        .map(|idx| {
            let [i1, i2, i3] = g.unravel(idx);
            let (mut s, mut c) = (0.0, 0.0);
            for j3 in i3.saturating_sub(1)..=(i3 + 1).min(n3 - 1) {
                for j2 in i2.saturating_sub(1)..=(i2 + 1).min(n2 - 1) {
                    for j1 in i1.saturating_sub(1)..=(i1 + 1).min(n1 - 1) {
                        s += image.values[g.index(j1, j2, j3)];
                        c += 1.0;
                    }
                }
            }
            s / c
        })
        .collect();
    ScalarField3D { grid: g, values }
}

/// Local maxima of the box-smoothed image above `rel_threshold` times its
/// global maximum, strongest first. Plateaus report their lowest index.
pub fn detect_peaks(image: &ScalarField3D, rel_threshold: f64) -> Vec<Peak> {
    let s = smooth_box(image);
    let g = s.grid;
    let [n1, n2, n3] = g.dims;
    let top = s.max();
    if !(top > 0.0) {
        return Vec::new();
    }
    let cut = rel_threshold * top;
    let mut peaks: Vec<Peak> = (0..g.len())
        .filter_map(|idx| {
            let v = s.values[idx];
            if v <= cut {
                return None;
            }
            let [i1, i2, i3] = g.unravel(idx);
            for j3 in i3.saturating_sub(1)..=(i3 + 1).min(n3 - 1) {
                for j2 in i2.saturating_sub(1)..=(i2 + 1).min(n2 - 1) {
                    for j1 in i1.saturating_sub(1)..=(i1 + 1).min(n1 - 1) {
                        let j = g.index(j1, j2, j3);
                        let w = s.values[j];
                        if w > v || (w == v && j < idx) {
                            return None;
                        }
                    }
                }
            }
            Some(Peak { index: idx, point: g.point_at(idx), value: v })
        })
        .collect();
    peaks.sort_by(|a, b| b.value.total_cmp(&a.value).then(a.index.cmp(&b.index)));
    peaks
}
