//! Regular voxel grids and sampled scalar volumes.

use serde::{Deserialize, Serialize};

use crate::error::{Result, XtalkError};
use crate::vec3::Vec3;

/// Sample positions `origin + (i1 d1, i2 d2, i3 d3)` of a regular grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub origin: Vec3,
    pub spacing: [f64; 3],
    pub dims: [usize; 3],
}

impl GridSpec {
    pub fn new(origin: Vec3, spacing: [f64; 3], dims: [usize; 3]) -> Result<Self> {
        let g = Self { origin, spacing, dims };
        g.validate()?;
        Ok(g)
    }

    /// Grid with `dims` samples spanning `[lo, hi]` inclusive on each axis.
    pub fn spanning(lo: Vec3, hi: Vec3, dims: [usize; 3]) -> Result<Self> {
        let lo_a = lo.to_array();
        let hi_a = hi.to_array();
        let mut spacing = [0.0; 3];
        for a in 0..3 {
            if dims[a] < 2 || hi_a[a] <= lo_a[a] {
                return Err(XtalkError::Invalid(format!("axis {a}: need >= 2 samples over a nonempty range")));
            }
            spacing[a] = (hi_a[a] - lo_a[a]) / (dims[a] - 1) as f64;
        }
        Self::new(lo, spacing, dims)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.origin.is_finite() {
            return Err(XtalkError::Invalid("grid origin must be finite".into()));
        }
        if self.spacing.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(XtalkError::Invalid("grid spacing must be positive".into()));
        }
        if self.dims.contains(&0) {
            return Err(XtalkError::Invalid("grid dims must be positive".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn voxel_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    /// Linear index, x1 fastest.
    pub fn index(&self, i1: usize, i2: usize, i3: usize) -> usize {
        i1 + self.dims[0] * (i2 + self.dims[1] * i3)
    }

    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let i1 = idx % self.dims[0];
        let rest = idx / self.dims[0];
        [i1, rest % self.dims[1], rest / self.dims[1]]
    }

    pub fn point(&self, i1: usize, i2: usize, i3: usize) -> Vec3 {
        Vec3::new(
            self.origin.x1 + i1 as f64 * self.spacing[0],
            self.origin.x2 + i2 as f64 * self.spacing[1],
            self.origin.x3 + i3 as f64 * self.spacing[2],
        )
    }

    pub fn point_at(&self, idx: usize) -> Vec3 {
        let [i1, i2, i3] = self.unravel(idx);
        self.point(i1, i2, i3)
    }

    /// All sample positions in storage order.
    pub fn points(&self) -> Vec<Vec3> {
        (0..self.len()).map(|i| self.point_at(i)).collect()
    }

    pub fn upper_corner(&self) -> Vec3 {
        self.point(self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1)
    }

    pub fn contains(&self, p: Vec3) -> bool {
        let lo = self.origin;
        let hi = self.upper_corner();
        (lo.x1..=hi.x1).contains(&p.x1) && (lo.x2..=hi.x2).contains(&p.x2) && (lo.x3..=hi.x3).contains(&p.x3)
    }

    /// Continuous index coordinates of a physical point.
    pub fn to_index_coords(&self, p: Vec3) -> [f64; 3] {
        [
            (p.x1 - self.origin.x1) / self.spacing[0],
            (p.x2 - self.origin.x2) / self.spacing[1],
            (p.x3 - self.origin.x3) / self.spacing[2],
        ]
    }

    /// Distance between two points measured in voxels (per-axis spacing).
    pub fn voxel_distance(&self, a: Vec3, b: Vec3) -> f64 {
        let d = a - b;
        ((d.x1 / self.spacing[0]).powi(2) + (d.x2 / self.spacing[1]).powi(2) + (d.x3 / self.spacing[2]).powi(2)).sqrt()
    }

    /// The eight corner samples.
    pub fn corners(&self) -> [Vec3; 8] {
        let [n1, n2, n3] = self.dims;
        let mut out = [Vec3::ZERO; 8];
        for (k, slot) in out.iter_mut().enumerate() {
            let i1 = if k & 1 == 0 { 0 } else { n1 - 1 };
            let i2 = if k & 2 == 0 { 0 } else { n2 - 1 };
            let i3 = if k & 4 == 0 { 0 } else { n3 - 1 };
            *slot = self.point(i1, i2, i3);
        }
        out
    }
}

/// A real-valued volume sampled on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField3D {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl ScalarField3D {
    pub fn zeros(grid: GridSpec) -> Self {
        Self { values: vec![0.0; grid.len()], grid }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(XtalkError::Invalid(format!(
                "value count {} does not match grid size {}",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(XtalkError::Invalid("volume contains non-finite values".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(Vec3) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.point_at(i))).collect();
        Self { grid, values }
    }

    pub fn get(&self, i1: usize, i2: usize, i3: usize) -> f64 {
        self.values[self.grid.index(i1, i2, i3)]
    }

    /// Index of the largest value (first one on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn dot(&self, other: &ScalarField3D) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|v| v * s).collect() }
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &ScalarField3D, b: f64) -> Self {
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        Self { grid: self.grid, values }
    }

    pub fn abs(&self) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|v| v.abs()).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GridSpec {
        GridSpec::new(Vec3::new(-1.0, 0.0, 2.0), [0.5, 0.25, 1.0], [3, 4, 5]).unwrap()
    }

    #[test]
    fn index_roundtrip() {
        let g = small();
        for idx in 0..g.len() {
            let [a, b, c] = g.unravel(idx);
            assert_eq!(g.index(a, b, c), idx);
        }
        assert_eq!(g.index(1, 0, 0), 1);
        assert_eq!(g.index(0, 1, 0), 3);
        assert_eq!(g.index(0, 0, 1), 12);
    }

    #[test]
    fn spanning_hits_both_ends() {
        let g = GridSpec::spanning(Vec3::new(-5.0, -3.0, 0.0), Vec3::new(5.0, 7.0, 6.0), [64, 64, 64]).unwrap();
        let hi = g.upper_corner();
        assert!((hi.x1 - 5.0).abs() < 1e-12 && (hi.x2 - 7.0).abs() < 1e-12 && (hi.x3 - 6.0).abs() < 1e-12);
        assert!(g.contains(Vec3::new(0.0, 2.0, 3.0)));
        assert!(!g.contains(Vec3::new(0.0, 2.0, 6.5)));
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(GridSpec::new(Vec3::ZERO, [0.0, 1.0, 1.0], [2, 2, 2]).is_err());
        assert!(GridSpec::new(Vec3::ZERO, [1.0, 1.0, 1.0], [2, 0, 2]).is_err());
        assert!(ScalarField3D::from_values(small(), vec![0.0; 3]).is_err());
        let mut v = vec![0.0; small().len()];
        v[2] = f64::NAN;
        assert!(ScalarField3D::from_values(small(), v).is_err());
    }

    #[test]
    fn voxel_distance_uses_spacing() {
        let g = small();
        assert!((g.voxel_distance(Vec3::ZERO, Vec3::new(0.5, 0.25, 1.0)) - 3f64.sqrt()).abs() < 1e-12);
    }
}
