//! Crosstalk mitigation: data omission driven by the artifact geometry, and
//! the iterated displacement filter that pushes artifacts out of a region.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GeometryError, Result, XtalkError};
use crate::forward::{simulate, BeamMask, Mute, TimeGrid};
use crate::geometry::{artifact_scale_c, gamma_fn, plane_pi_side, AcquisitionGeometry, Emitter};
use crate::grid::{GridSpec, ScalarField3D};
use crate::imaging::normalized_backproject;
use crate::vec3::Vec3;

/// Region that must end up free of crosstalk artifacts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Roi {
    /// Horizontal slab `0 <= x3 <= height`.
    Slab {
        height: f64,
    },
    Sphere {
        center: Vec3,
        radius: f64,
    },
}

impl Roi {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Roi::Slab { height } if !(height > 0.0 && height.is_finite()) => {
                Err(XtalkError::Invalid(format!("slab height must be positive, got {height}")))
            }
            Roi::Sphere { radius, center } if !(radius > 0.0 && radius.is_finite() && center.is_finite()) => {
                Err(XtalkError::Invalid(format!("sphere radius must be positive, got {radius}")))
            }
            _ => Ok(()),
        }
    }

    pub fn contains(&self, x: Vec3) -> bool {
        match *self {
            Roi::Slab { height } => (0.0..=height).contains(&x.x3),
            Roi::Sphere { center, radius } => x.distance(center) <= radius,
        }
    }

    /// Grid points inside the region, in storage order.
    pub fn samples(&self, grid: &GridSpec) -> Vec<Vec3> {
        grid.points().into_iter().filter(|p| self.contains(*p)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutePolicy {
    /// Zero only the time bins reached by violating delays.
    #[default]
    PerBin,
    /// Drop every receiver that sees any violation.
    PerReceiver,
}

fn default_adjoint() -> Emitter {
    Emitter::One
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MitigationConfig {
    pub roi: Roi,
    #[serde(default)]
    pub mute_policy: MutePolicy,
    #[serde(default)]
    pub displacement_iterations: usize,
    #[serde(default = "default_adjoint")]
    pub adjoint_emitter: Emitter,
}

impl MitigationConfig {
    pub fn validate(&self) -> Result<()> {
        self.roi.validate()
    }
}

/// Omission mute plus bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct OmissionMute {
    pub mute: Mute,
    /// Receivers with at least one violating ROI sample.
    pub violating_receivers: usize,
    /// Fraction of (receiver, time) samples left unmuted.
    pub retained_fraction: f64,
}

/// Builds the omission mute: for each receiver, every ROI sample `x` for
/// which `violates(x, γ)` holds has its emitter-1 and emitter-2 delay bins
/// zeroed (or the whole receiver, per policy).
fn omission_mute(
    geo: &AcquisitionGeometry,
    grid: &GridSpec,
    tg: &TimeGrid,
    roi: &Roi,
    policy: MutePolicy,
    violates: impl Fn(Vec3, Vec3) -> Result<bool, GeometryError> + Sync,
) -> Result<OmissionMute> {
    geo.validate()?;
    tg.validate()?;
    let samples = roi.samples(grid);
    if let Some(p) = samples.iter().find(|p| p.x3 >= geo.h) {
        return Err(XtalkError::Invalid(format!("ROI sample {p:?} is not below the track")));
    }
    let n_t = tg.n_t;
    let inv_c0 = 1.0 / geo.c0;
    let mut mute = Mute::for_data(geo, tg);
    let flags: Vec<bool> = mute
        .values
        .par_chunks_mut(n_t)
        .enumerate()
        .map(|(k, row)| -> Result<bool> {
            let gamma = geo.receiver_at(k);
            let mut any = false;
            for &x in &samples {
                if !violates(x, gamma).map_err(|e| e.at_receiver(geo.receiver_index(k)))? {
                    continue;
                }
                any = true;
                match policy {
                    MutePolicy::PerReceiver => {
                        row.iter_mut().for_each(|v| *v = 0.0);
                        break;
                    }
                    MutePolicy::PerBin => {
                        let l = x.distance(gamma);
                        for em in [geo.e2, geo.e1] {
                            if let Some((i, _, _)) = tg.stencil((l + x.distance(em)) * inv_c0) {
                                row[i] = 0.0;
                                row[i + 1] = 0.0;
                            }
                        }
                    }
                }
            }
            Ok(any)
        })
        .collect::<Result<_>>()?;
    let retained = mute.values.iter().filter(|v| **v != 0.0).count();
    Ok(OmissionMute {
        retained_fraction: retained as f64 / mute.values.len() as f64,
        violating_receivers: flags.iter().filter(|f| **f).count(),
        mute,
    })
}

/// `true` when the artifact of `x` lands inside the closed slab `[0, H]`.
pub fn slab_violation(x: Vec3, gamma: Vec3, geo: &AcquisitionGeometry, height: f64) -> Result<bool, GeometryError> {
    match gamma_fn(x, gamma, geo) {
        Ok(g) => Ok(gamma.x3 - height <= g && g <= gamma.x3),
        Err(GeometryError::NoArtifact) => Ok(false),
        Err(e) => Err(e),
    }
}

/// `true` when the artifact of `x` lands within distance `radius` of `x`.
pub fn sphere_violation(x: Vec3, gamma: Vec3, geo: &AcquisitionGeometry, radius: f64) -> Result<bool, GeometryError> {
    match artifact_scale_c(x, gamma, geo) {
        Ok(c) => Ok((c - 1.0).abs() * x.distance(gamma) <= radius),
        Err(GeometryError::NoArtifact) => Ok(false),
        Err(e) => Err(e),
    }
}

/// Mutes data whose crosstalk artifacts would fall in the slab `0 <= x3 <= H`.
pub fn geometry_mute_slab(
    geo: &AcquisitionGeometry,
    grid: &GridSpec,
    tg: &TimeGrid,
    height: f64,
    policy: MutePolicy,
) -> Result<OmissionMute> {
    let roi = Roi::Slab { height };
    roi.validate()?;
    omission_mute(geo, grid, tg, &roi, policy, |x, g| slab_violation(x, g, geo, height))
}

/// Mutes data whose artifacts would land within `radius` of their ROI source.
pub fn geometry_mute_sphere(
    geo: &AcquisitionGeometry,
    grid: &GridSpec,
    tg: &TimeGrid,
    center: Vec3,
    radius: f64,
    policy: MutePolicy,
) -> Result<OmissionMute> {
    let roi = Roi::Sphere { center, radius };
    roi.validate()?;
    omission_mute(geo, grid, tg, &roi, policy, |x, g| sphere_violation(x, g, geo, radius))
}

/// Dispatches on the ROI kind.
pub fn geometry_mute(
    geo: &AcquisitionGeometry,
    grid: &GridSpec,
    tg: &TimeGrid,
    roi: &Roi,
    policy: MutePolicy,
) -> Result<OmissionMute> {
    match *roi {
        Roi::Slab { height } => geometry_mute_slab(geo, grid, tg, height, policy),
        Roi::Sphere { center, radius } => geometry_mute_sphere(geo, grid, tg, center, radius, policy),
    }
}

/// Counts ROI samples and receivers whose predicted artifact violates the
/// ROI while the emitter-2 echo of the sample still passes `mute`.
pub fn unresolved_violations(
    geo: &AcquisitionGeometry,
    grid: &GridSpec,
    tg: &TimeGrid,
    roi: &Roi,
    mute: &Mute,
) -> Result<usize> {
    if mute.values.len() != geo.receiver_count() * tg.n_t {
        return Err(XtalkError::Invalid("mute shape does not match geometry".into()));
    }
    let samples = roi.samples(grid);
    let inv_c0 = 1.0 / geo.c0;
    (0..geo.receiver_count())
        .into_par_iter()
        .map(|k| -> Result<usize> {
            let gamma = geo.receiver_at(k);
            let row = mute.row(k);
            let mut n = 0;
            for &x in &samples {
                let violates = match *roi {
                    Roi::Slab { height } => slab_violation(x, gamma, geo, height),
                    Roi::Sphere { radius, .. } => sphere_violation(x, gamma, geo, radius),
                }
                .map_err(|e| e.at_receiver(geo.receiver_index(k)))?;
                if !violates {
                    continue;
                }
                let t = (x.distance(gamma) + x.distance(geo.e2)) * inv_c0;
                if let Some((i, _, _)) = tg.stencil(t) {
                    if row[i] != 0.0 || row[i + 1] != 0.0 {
                        n += 1;
                    }
                }
            }
            Ok(n)
        })
        .sum()
}

/// Whether the plane `|x-E1| = |x-E2|` passes through the ROI. The slab is
/// bounded horizontally by the grid.
pub fn plane_intersects_roi(geo: &AcquisitionGeometry, grid: &GridSpec, roi: &Roi) -> bool {
    match *roi {
        Roi::Slab { height } => {
            let lo = grid.origin;
            let hi = grid.upper_corner();
            let (z0, z1) = (0.0_f64.max(lo.x3), height.min(hi.x3));
            let mut pos = false;
            let mut neg = false;
            let mut probe = |p: Vec3| {
                let s = plane_pi_side(p, geo);
                pos |= s >= 0.0;
                neg |= s <= 0.0;
            };
            for &a in &[lo.x1, hi.x1] {
                for &b in &[lo.x2, hi.x2] {
                    for &c in &[z0, z1] {
                        probe(Vec3::new(a, b, c));
                    }
                }
            }
            probe((lo + hi) * 0.5);
            pos && neg
        }
        Roi::Sphere { center, radius } => {
            let axis = geo.e2 - geo.e1;
            let mid = (geo.e1 + geo.e2) * 0.5;
            ((center - mid).dot(axis) / axis.norm()).abs() <= radius
        }
    }
}

/// Amplitudes of the diagonal and mixed normal operators at principal
/// level. Both are 1 for the unit-amplitude simplified model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymbolAmplitudes {
    pub diag: f64,
    pub mixed: f64,
}

impl Default for SymbolAmplitudes {
    fn default() -> Self {
        Self { diag: 1.0, mixed: 1.0 }
    }
}

/// Coefficients `(p, m)` of `Q_i = p P + m M^(2^(i-1))` for `i = 1..=n`.
///
/// Each step solves the two-unknown triangular system that keeps the
/// accumulated operator at unit symbol on the diagonal and zero on the
/// freshest artifact graph; the symbols on that graph then square with a
/// sign flip.
pub fn displacement_coefficients(n: usize, amp: SymbolAmplitudes) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    let mut d = amp.diag;
    let mut f = amp.mixed;
    // Principal symbol of M^(2^(i-1)) itself.
    let mut m_power = amp.mixed;
    for _ in 0..n {
        let q_diag = 1.0 / d;
        let q_mixed = -f / (d * d);
        out.push((q_diag / amp.diag, q_mixed / m_power));
        f *= q_mixed;
        d = 1.0;
        m_power *= m_power;
    }
    out
}

/// Normal operators `P = B̂_a S_a` and `M = B̂_a S_b` for adjoint emitter `a`.
pub struct ImagingOps<'a> {
    pub geo: &'a AcquisitionGeometry,
    pub grid: &'a GridSpec,
    pub tg: &'a TimeGrid,
    pub mute: Option<&'a Mute>,
    pub beam: &'a BeamMask,
    pub adjoint: Emitter,
}

impl ImagingOps<'_> {
    fn normal(&self, image: &ScalarField3D, forward: Emitter) -> Result<ScalarField3D> {
        if image.grid != *self.grid {
            return Err(XtalkError::Invalid("image grid differs from operator grid".into()));
        }
        let (d, _) = simulate(image, self.geo, self.tg, None, self.beam, &[forward])?;
        normalized_backproject(&d, self.grid, self.adjoint, self.mute, self.beam)
    }

    pub fn pseudo_op(&self, image: &ScalarField3D) -> Result<ScalarField3D> {
        self.normal(image, self.adjoint)
    }

    pub fn mixed_op(&self, image: &ScalarField3D) -> Result<ScalarField3D> {
        self.normal(image, self.adjoint.other())
    }

    /// `M` applied `n` times.
    pub fn mixed_power(&self, image: &ScalarField3D, n: usize) -> Result<ScalarField3D> {
        let mut cur = image.clone();
        for _ in 0..n {
            cur = self.mixed_op(&cur)?;
        }
        Ok(cur)
    }
}

/// Applies `Q_n ... Q_1` to `image`, without taking absolute values.
pub fn displacement_filter(
    image: &ScalarField3D,
    ops: &ImagingOps,
    iterations: usize,
    amp: SymbolAmplitudes,
) -> Result<ScalarField3D> {
    let mut cur = image.clone();
    for (i, (p, m)) in displacement_coefficients(iterations, amp).into_iter().enumerate() {
        let pp = ops.pseudo_op(&cur)?;
        let mm = ops.mixed_power(&cur, 1 << i)?;
        cur = pp.combine(p, &mm, m);
        log::debug!("displacement iteration {} done", i + 1);
    }
    Ok(cur)
}

/// Displacement filter as reported: `|Q_n ... Q_1 I|`.
///
/// Refuses to run when the plane `|x-E1| = |x-E2|` crosses the ROI unless the
/// beam mask is active.
pub fn displace_artifacts(
    image: &ScalarField3D,
    ops: &ImagingOps,
    roi: &Roi,
    iterations: usize,
    amp: SymbolAmplitudes,
) -> Result<ScalarField3D> {
    if iterations == 0 {
        return Err(XtalkError::Invalid("displacement needs at least one iteration".into()));
    }
    if !ops.beam.is_active() && plane_intersects_roi(ops.geo, ops.grid, roi) {
        return Err(XtalkError::PlaneIntersectsRoi);
    }
    Ok(displacement_filter(image, ops, iterations, amp)?.abs())
}
