//! Simulated crosstalk data: the scene integrated over bistatic ellipsoids.
//!
//! Each voxel deposits `V(x) dV` into the two time bins bracketing its delay
//! `(|x - γ(r)| + |x - E_i|) / c0` with linear (hat) weights. The backprojection
//! in [`crate::imaging`] interpolates with the same weights, so the unnormalized
//! backprojector is the exact transpose of [`simulate`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, XtalkError};
use crate::geometry::{critical_angle_at, depression_angle, AcquisitionGeometry, Emitter};
use crate::grid::{GridSpec, ScalarField3D};
use crate::vec3::Vec3;

/// Uniform time samples `t_min + k dt`, `k = 0..n_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub t_min: f64,
    pub t_max: f64,
    pub n_t: usize,
}

impl TimeGrid {
    pub fn new(t_min: f64, t_max: f64, n_t: usize) -> Result<Self> {
        let tg = Self { t_min, t_max, n_t };
        tg.validate()?;
        Ok(tg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_min.is_finite() && self.t_max.is_finite() && self.t_min < self.t_max) {
            return Err(XtalkError::Invalid("time grid needs t_min < t_max".into()));
        }
        if self.n_t < 2 {
            return Err(XtalkError::Invalid("time grid needs at least 2 samples".into()));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        (self.t_max - self.t_min) / (self.n_t - 1) as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t_min + k as f64 * self.dt()
    }

    /// Smallest grid with step at most `dt` covering every delay from `grid`
    /// to the track through any of `emitters`, padded by two samples.
    pub fn covering(geo: &AcquisitionGeometry, grid: &GridSpec, emitters: &[Emitter], dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(XtalkError::Invalid("dt must be positive".into()));
        }
        let lo = grid.origin;
        let hi = grid.upper_corner();
        let corners = grid.corners();
        let mut rmin = f64::INFINITY;
        let mut rmax: f64 = 0.0;
        for gamma in geo.receivers() {
            for &e in emitters {
                let em = geo.emitter(e);
                rmin = rmin.min(box_distance(gamma, lo, hi) + box_distance(em, lo, hi));
                for &c in &corners {
                    rmax = rmax.max(c.distance(gamma) + c.distance(em));
                }
            }
        }
        if !rmin.is_finite() {
            return Err(XtalkError::Invalid("no emitters requested".into()));
        }
        let t0 = rmin / geo.c0 - 2.0 * dt;
        let t1 = rmax / geo.c0 + 2.0 * dt;
        let n_t = ((t1 - t0) / dt).ceil() as usize + 1;
        Self::new(t0, t0 + (n_t - 1) as f64 * dt, n_t)
    }

    /// Linear interpolation stencil at time `t`: `(k, w_k, w_{k+1})`, or
    /// `None` outside `[t_min, t_max]`.
    #[inline]
    pub fn stencil(&self, t: f64) -> Option<(usize, f64, f64)> {
        let u = (t - self.t_min) / self.dt();
        let last = (self.n_t - 1) as f64;
        if !(u >= 0.0 && u <= last) {
            return None;
        }
        let k = (u.floor() as usize).min(self.n_t - 2);
        let f = u - k as f64;
        Some((k, 1.0 - f, f))
    }
}

fn box_distance(p: Vec3, lo: Vec3, hi: Vec3) -> f64 {
    let c = Vec3::new(p.x1.clamp(lo.x1, hi.x1), p.x2.clamp(lo.x2, hi.x2), p.x3.clamp(lo.x3, hi.x3));
    p.distance(c)
}

/// Measurements `d(r, t)`: one time series per receiver, row-major in
/// `(r1, r2)` with time fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct DataCube {
    pub geometry: AcquisitionGeometry,
    pub time: TimeGrid,
    pub samples: Vec<f64>,
}

impl DataCube {
    pub fn zeros(geometry: AcquisitionGeometry, time: TimeGrid) -> Self {
        let n = geometry.receiver_count() * time.n_t;
        Self { geometry, time, samples: vec![0.0; n] }
    }

    pub fn from_samples(geometry: AcquisitionGeometry, time: TimeGrid, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != geometry.receiver_count() * time.n_t {
            return Err(XtalkError::Invalid(format!(
                "sample count {} does not match {} receivers x {} times",
                samples.len(),
                geometry.receiver_count(),
                time.n_t
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(XtalkError::Invalid("data cube contains non-finite samples".into()));
        }
        Ok(Self { geometry, time, samples })
    }

    pub fn trace(&self, k: usize) -> &[f64] {
        let n = self.time.n_t;
        &self.samples[k * n..(k + 1) * n]
    }

    pub fn dot(&self, other: &DataCube) -> f64 {
        self.samples.iter().zip(&other.samples).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

/// Raised-cosine edge taper applied along both track axes and time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MuteSpec {
    /// Fraction of each axis, in `[0, 0.5]`, over which the taper rises.
    pub edge_taper_fraction: f64,
}

impl MuteSpec {
    pub fn new(edge_taper_fraction: f64) -> Result<Self> {
        let s = Self { edge_taper_fraction };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.5).contains(&self.edge_taper_fraction) {
            return Err(XtalkError::Invalid(format!(
                "edge_taper_fraction {} outside [0, 0.5]",
                self.edge_taper_fraction
            )));
        }
        Ok(())
    }
}

/// Per-sample weights `m(r, t)`, laid out like [`DataCube::samples`].
#[derive(Debug, Clone, PartialEq)]
pub struct Mute {
    pub n_receivers: usize,
    pub n_t: usize,
    pub values: Vec<f64>,
}

impl Mute {
    pub fn ones(n_receivers: usize, n_t: usize) -> Self {
        Self { n_receivers, n_t, values: vec![1.0; n_receivers * n_t] }
    }

    pub fn for_data(geo: &AcquisitionGeometry, tg: &TimeGrid) -> Self {
        Self::ones(geo.receiver_count(), tg.n_t)
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.n_t..(k + 1) * self.n_t]
    }

    /// Elementwise product.
    pub fn multiply(&self, other: &Mute) -> Mute {
        assert_eq!(self.values.len(), other.values.len(), "mute shapes differ");
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect();
        Mute { n_receivers: self.n_receivers, n_t: self.n_t, values }
    }

    /// Fraction of total weight retained relative to `reference`.
    pub fn retained_fraction(&self, reference: &Mute) -> f64 {
        let total: f64 = reference.values.iter().sum();
        if total == 0.0 {
            return 0.0;
        }
        self.values.iter().zip(&reference.values).map(|(a, b)| a * b).sum::<f64>() / total
    }
}

/// One-axis raised-cosine taper: 0 on both end samples, 1 on the interior.
pub fn taper_1d(n: usize, fraction: f64) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| {
            let u = i as f64 / (n - 1) as f64;
            let d = u.min(1.0 - u);
            if d <= 0.0 {
                0.0
            } else if d >= fraction {
                1.0
            } else {
                0.5 * (1.0 - (std::f64::consts::PI * d / fraction).cos())
            }
        })
        .collect()
}

/// Separable acquisition mute over `(r1, r2, t)`.
pub fn build_mute(geo: &AcquisitionGeometry, tg: &TimeGrid, spec: &MuteSpec) -> Mute {
    let f = spec.edge_taper_fraction;
    let w1 = taper_1d(geo.r1.count, f);
    let w2 = taper_1d(geo.r2.count, f);
    let wt = taper_1d(tg.n_t, f);
    let mut values = Vec::with_capacity(geo.receiver_count() * tg.n_t);
    for a in &w1 {
        for b in &w2 {
            values.extend(wt.iter().map(|c| a * b * c));
        }
    }
    Mute { n_receivers: geo.receiver_count(), n_t: tg.n_t, values }
}

/// Beam-forming mask: drops rays at or below each receiver's critical angle.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum BeamMask {
    #[default]
    None,
    /// Critical angle per receiver, row-major like the track.
    CriticalAngle(Vec<f64>),
}

impl BeamMask {
    /// 1 if the ray from receiver `k` at `gamma` to `x` is kept, else 0.
    #[inline]
    pub fn weight(&self, k: usize, gamma: Vec3, x: Vec3) -> f64 {
        match self {
            BeamMask::None => 1.0,
            BeamMask::CriticalAngle(theta) => {
                if depression_angle(gamma, x) <= theta[k] {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }

    pub fn is_active(&self) -> bool {
        matches!(self, BeamMask::CriticalAngle(_))
    }
}

/// Critical-angle mask for every receiver on the track.
pub fn build_beam_mask(geo: &AcquisitionGeometry) -> Result<BeamMask> {
    let theta = geo
        .receivers()
        .into_iter()
        .map(|g| critical_angle_at(g, geo).map(|c| c.theta_c))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BeamMask::CriticalAngle(theta))
}

/// Delays falling outside the time grid during [`simulate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationWarning {
    /// Fraction of nonzero (voxel, receiver, emitter) deposits that were dropped.
    pub clipped_fraction: f64,
}

/// Voxels with nonzero reflectivity plus their distances to each emitter.
struct Support {
    points: Vec<Vec3>,
    values: Vec<f64>,
    emitter_dist: Vec<f64>,
}

fn support(scene: &ScalarField3D, emitter: Vec3) -> Support {
    let mut s = Support { points: Vec::new(), values: Vec::new(), emitter_dist: Vec::new() };
    for (i, &v) in scene.values.iter().enumerate() {
        if v != 0.0 {
            let p = scene.grid.point_at(i);
            s.points.push(p);
            s.values.push(v);
            s.emitter_dist.push(p.distance(emitter));
        }
    }
    s
}

/// Forward model for one emitter, before muting. Returns the raw traces and
/// the number of clipped deposits.
fn splat_emitter(
    scene: &ScalarField3D,
    geo: &AcquisitionGeometry,
    tg: &TimeGrid,
    beam: &BeamMask,
    emitter: Emitter,
) -> (Vec<f64>, usize, usize) {
    let sup = support(scene, geo.emitter(emitter));
    let dv = scene.grid.voxel_volume();
    let n_t = tg.n_t;
    let inv_c0 = 1.0 / geo.c0;
    let mut out = vec![0.0; geo.receiver_count() * n_t];
    let clipped: usize = out
        .par_chunks_mut(n_t)
        .enumerate()
        .map(|(k, trace)| {
            let gamma = geo.receiver_at(k);
            let mut clipped = 0;
            for ((&x, &v), &de) in sup.points.iter().zip(&sup.values).zip(&sup.emitter_dist) {
                let m = beam.weight(k, gamma, x);
                if m == 0.0 {
                    continue;
                }
                let t = (x.distance(gamma) + de) * inv_c0;
                match tg.stencil(t) {
                    Some((i, w0, w1)) => {
                        let a = v * dv * m;
                        trace[i] += w0 * a;
                        trace[i + 1] += w1 * a;
                    }
                    None => clipped += 1,
                }
            }
            clipped
        })
        .sum();
    (out, clipped, sup.points.len() * geo.receiver_count())
}

/// Simulates `d(r, t) = m(r, t) Σ_i ∫ δ(t - T_i(x, r)) V(x) dx` for the
/// requested emitters. `mute = None` means no taper.
pub fn simulate(
    scene: &ScalarField3D,
    geo: &AcquisitionGeometry,
    tg: &TimeGrid,
    mute: Option<&Mute>,
    beam: &BeamMask,
    emitters: &[Emitter],
) -> Result<(DataCube, Option<TruncationWarning>)> {
    tg.validate()?;
    geo.validate()?;
    if scene.values.iter().any(|v| !v.is_finite()) {
        return Err(XtalkError::Invalid("scene contains non-finite values".into()));
    }
    if let Some(m) = mute {
        if m.values.len() != geo.receiver_count() * tg.n_t {
            return Err(XtalkError::Invalid("mute shape does not match geometry and time grid".into()));
        }
    }
    let mut cube = DataCube::zeros(geo.clone(), *tg);
    let mut clipped = 0;
    let mut total = 0;
    // Each emitter is muted and added separately, so the result is bitwise
    // the sum of the single-emitter simulations.
    for &e in emitters {
        let (mut raw, c, n) = splat_emitter(scene, geo, tg, beam, e);
        clipped += c;
        total += n;
        if let Some(m) = mute {
            raw.iter_mut().zip(&m.values).for_each(|(d, w)| *d *= w);
        }
        cube.samples.iter_mut().zip(&raw).for_each(|(d, r)| *d += r);
    }
    let warning = (clipped > 0).then(|| {
        let w = TruncationWarning { clipped_fraction: clipped as f64 / total as f64 };
        log::warn!("{:.3}% of delays fell outside the time grid", 100.0 * w.clipped_fraction);
        w
    });
    Ok((cube, warning))
}
