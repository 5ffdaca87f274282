//! Experiment configuration (TOML).
//!
//! Unknown keys are rejected everywhere and every error names the offending
//! field by its dotted path.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, XtalkError};
use crate::forward::{build_beam_mask, BeamMask, MuteSpec, TimeGrid};
use crate::geometry::{check_segments, AcquisitionGeometry, Emitter, TrackAxis};
use crate::grid::{GridSpec, ScalarField3D};
use crate::io::Axis;
use crate::mitigation::{plane_intersects_roi, MitigationConfig, MutePolicy, Roi};
use crate::scene::{make_box_scene, make_gaussian_scene, make_point_scene};
use crate::vec3::Vec3;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub geometry: GeometryBlock,
    #[serde(default)]
    pub grid: GridBlock,
    pub scene: SceneSpec,
    #[serde(default)]
    pub time: TimeBlock,
    #[serde(default)]
    pub acquisition: AcquisitionBlock,
    #[serde(default)]
    pub imaging: ImagingBlock,
    #[serde(default)]
    pub mitigation: Option<MitigationBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryBlock {
    pub e1: Vec3,
    pub e2: Vec3,
    pub h: f64,
    #[serde(default = "one")]
    pub c0: f64,
    pub r1: TrackAxis,
    pub r2: TrackAxis,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub lo: Vec3,
    pub hi: Vec3,
    pub dims: [usize; 3],
}

impl Default for GridBlock {
    fn default() -> Self {
        Self { lo: Vec3::new(-5.0, -3.0, 0.0), hi: Vec3::new(5.0, 7.0, 6.0), dims: [64, 64, 64] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SceneSpec {
    Gaussian { center: Vec3, width: f64 },
    Box { lo: Vec3, hi: Vec3 },
    Point { location: Vec3 },
    Zero,
}

impl SceneSpec {
    pub fn build(&self, grid: GridSpec) -> Result<ScalarField3D> {
        match *self {
            SceneSpec::Gaussian { center, width } => make_gaussian_scene(grid, center, width),
            SceneSpec::Box { lo, hi } => make_box_scene(grid, lo, hi),
            SceneSpec::Point { location } => make_point_scene(grid, location),
            SceneSpec::Zero => Ok(ScalarField3D::zeros(grid)),
        }
    }

    /// Representative scatterer location used for artifact prediction.
    pub fn anchor(&self) -> Option<Vec3> {
        match *self {
            SceneSpec::Gaussian { center, .. } => Some(center),
            SceneSpec::Box { lo, hi } => Some((lo + hi) * 0.5),
            SceneSpec::Point { location } => Some(location),
            SceneSpec::Zero => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeBlock {
    /// Sample spacing; half the smallest voxel spacing when absent.
    pub dt: Option<f64>,
}

/// Which emitters illuminate the scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum EmitterSet {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
    #[default]
    #[serde(rename = "both")]
    Both,
}

impl EmitterSet {
    pub fn emitters(self) -> &'static [Emitter] {
        match self {
            EmitterSet::One => &[Emitter::One],
            EmitterSet::Two => &[Emitter::Two],
            EmitterSet::Both => &[Emitter::One, Emitter::Two],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionBlock {
    #[serde(default)]
    pub emitters: EmitterSet,
    #[serde(default = "default_taper")]
    pub edge_taper_fraction: f64,
    #[serde(default)]
    pub beam_mask: bool,
}

fn default_taper() -> f64 {
    0.1
}

impl Default for AcquisitionBlock {
    fn default() -> Self {
        Self { emitters: EmitterSet::Both, edge_taper_fraction: default_taper(), beam_mask: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImagingMode {
    /// Treat all data as coming from `adjoint_emitter`.
    #[default]
    Single,
    /// Emitter 1 on one side of the plane `|x-E1| = |x-E2|`, emitter 2 on the other.
    Stitched,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImagingBlock {
    #[serde(default)]
    pub mode: ImagingMode,
    #[serde(default = "default_emitter")]
    pub adjoint_emitter: Emitter,
    /// Blend half-width for stitched imaging; four voxels when absent.
    #[serde(default)]
    pub stitch_width: Option<f64>,
    #[serde(default = "default_peak_threshold")]
    pub peak_threshold: f64,
}

fn default_emitter() -> Emitter {
    Emitter::One
}

fn default_peak_threshold() -> f64 {
    0.5
}

impl Default for ImagingBlock {
    fn default() -> Self {
        Self {
            mode: ImagingMode::Single,
            adjoint_emitter: Emitter::One,
            stitch_width: None,
            peak_threshold: default_peak_threshold(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    None,
    Geometry,
    Displacement,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MitigationBlock {
    #[serde(default)]
    pub method: Method,
    pub roi: Roi,
    #[serde(default)]
    pub mute_policy: MutePolicy,
    #[serde(default = "default_iterations")]
    pub displacement_iterations: usize,
}

fn default_iterations() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceSpec {
    pub axis: Axis,
    pub coordinate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_slices")]
    pub slices: Vec<SliceSpec>,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_slices() -> Vec<SliceSpec> {
    vec![
        SliceSpec { axis: Axis::X3, coordinate: 3.0 },
        SliceSpec { axis: Axis::X2, coordinate: 2.0 },
        SliceSpec { axis: Axis::X1, coordinate: 0.0 },
    ]
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { dir: default_dir(), slices: default_slices() }
    }
}

impl ExperimentConfig {
    /// The default desk-scale Gaussian experiment.
    pub fn gaussian_default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            geometry: GeometryBlock {
                e1: Vec3::new(-1.0, 2.0, 60.0),
                e2: Vec3::new(1.0, 2.0, 57.0),
                h: 10.0,
                c0: 1.0,
                r1: TrackAxis::new(-6.0, 6.0, 16),
                r2: TrackAxis::new(-6.0, 6.0, 16),
            },
            grid: GridBlock::default(),
            scene: SceneSpec::Gaussian { center: Vec3::new(0.0, 2.0, 3.0), width: 1.0 },
            time: TimeBlock::default(),
            acquisition: AcquisitionBlock::default(),
            imaging: ImagingBlock::default(),
            mitigation: None,
            output: OutputBlock::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| XtalkError::config("<document>", e.to_string()))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let message = e.inner().message().to_string();
            XtalkError::config(if path == "." { "<root>".to_string() } else { path }, message)
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| XtalkError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Checks every precondition and derives the numerical setup.
    pub fn resolve(&self) -> Result<Experiment> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(XtalkError::config(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        let g = &self.geometry;
        for (name, v) in [("geometry.e1", g.e1), ("geometry.e2", g.e2)] {
            if !v.is_finite() {
                return Err(XtalkError::config(name, "must be finite"));
            }
        }
        if !(g.h > 0.0 && g.h.is_finite()) {
            return Err(XtalkError::config("geometry.h", "track height must be positive"));
        }
        if !(g.c0 > 0.0 && g.c0.is_finite()) {
            return Err(XtalkError::config("geometry.c0", "wave speed must be positive"));
        }
        for (name, axis) in [("geometry.r1", g.r1), ("geometry.r2", g.r2)] {
            AcquisitionGeometry::new(g.e1, g.e2, g.h, axis, axis)
                .map_err(|e| XtalkError::config(name, e.to_string()))?;
        }
        let geometry = AcquisitionGeometry::new(g.e1, g.e2, g.h, g.r1, g.r2)
            .and_then(|geo| geo.with_c0(g.c0))
            .map_err(|e| XtalkError::config("geometry", e.to_string()))?;

        let grid = GridSpec::spanning(self.grid.lo, self.grid.hi, self.grid.dims)
            .map_err(|e| XtalkError::config("grid", e.to_string()))?;
        if !(grid.upper_corner().x3 < g.h) {
            return Err(XtalkError::config("grid.hi", "grid must lie strictly below the track"));
        }
        if grid.origin.x3 < 0.0 {
            return Err(XtalkError::config("grid.lo", "grid must not extend below ground level"));
        }

        match self.scene {
            SceneSpec::Gaussian { width, .. } if !(width > 0.0 && width.is_finite()) => {
                return Err(XtalkError::config("scene.width", "must be positive"));
            }
            SceneSpec::Box { lo, hi } if !(lo.x1 < hi.x1 && lo.x2 < hi.x2 && lo.x3 < hi.x3) => {
                return Err(XtalkError::config("scene", "box corners must satisfy lo < hi componentwise"));
            }
            SceneSpec::Point { location } if !grid.contains(location) => {
                return Err(XtalkError::config("scene.location", "point scatterer lies outside the grid"));
            }
            _ => {}
        }

        let dt = self.time.dt.unwrap_or_else(|| 0.5 * grid.spacing.iter().cloned().fold(f64::INFINITY, f64::min));
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(XtalkError::config("time.dt", "must be positive"));
        }
        let time = TimeGrid::covering(&geometry, &grid, &[Emitter::One, Emitter::Two], dt)
            .map_err(|e| XtalkError::config("time", e.to_string()))?;

        let mute_spec = MuteSpec::new(self.acquisition.edge_taper_fraction)
            .map_err(|e| XtalkError::config("acquisition.edge_taper_fraction", e.to_string()))?;
        let beam = if self.acquisition.beam_mask {
            build_beam_mask(&geometry).map_err(|e| XtalkError::config("acquisition.beam_mask", e.to_string()))?
        } else {
            BeamMask::None
        };

        if let Some(w) = self.imaging.stitch_width {
            if !(w > 0.0 && w.is_finite()) {
                return Err(XtalkError::config("imaging.stitch_width", "must be positive"));
            }
        }
        if !(self.imaging.peak_threshold > 0.0 && self.imaging.peak_threshold < 1.0) {
            return Err(XtalkError::config("imaging.peak_threshold", "must lie in (0, 1)"));
        }

        if let Some(m) = &self.mitigation {
            m.roi.validate().map_err(|e| XtalkError::config("mitigation.roi", e.to_string()))?;
            match m.method {
                Method::Displacement => {
                    if m.displacement_iterations == 0 {
                        return Err(XtalkError::config("mitigation.displacement_iterations", "must be at least 1"));
                    }
                    if !beam.is_active() && plane_intersects_roi(&geometry, &grid, &m.roi) {
                        return Err(XtalkError::PlaneIntersectsRoi);
                    }
                }
                Method::Geometry => {
                    let roi_samples = m.roi.samples(&grid);
                    for x in &roi_samples {
                        for gamma in geometry.receivers() {
                            check_segments(*x, gamma, &geometry).map_err(|e| {
                                XtalkError::config("mitigation.roi", format!("ROI sample {:?}: {e}", x.to_array()))
                            })?;
                        }
                    }
                }
                Method::None => {}
            }
        }

        for (i, s) in self.output.slices.iter().enumerate() {
            let a = s.axis.index();
            let (lo, hi) = (grid.origin.to_array()[a], grid.upper_corner().to_array()[a]);
            let half = 0.5 * grid.spacing[a];
            if !(s.coordinate > lo - half && s.coordinate < hi + half) {
                return Err(XtalkError::config(format!("output.slices[{i}].coordinate"), "outside the grid"));
            }
        }

        Ok(Experiment { config: self.clone(), geometry, grid, time, mute_spec, beam })
    }
}

/// A validated configuration with its derived numerical setup.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub geometry: AcquisitionGeometry,
    pub grid: GridSpec,
    pub time: TimeGrid,
    pub mute_spec: MuteSpec,
    pub beam: BeamMask,
}

impl Experiment {
    pub fn mitigation_config(&self) -> Option<MitigationConfig> {
        self.config.mitigation.map(|m| MitigationConfig {
            roi: m.roi,
            mute_policy: m.mute_policy,
            displacement_iterations: m.displacement_iterations,
            adjoint_emitter: self.config.imaging.adjoint_emitter,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1

[geometry]
e1 = [-1.0, 2.0, 60.0]
e2 = [1.0, 2.0, 57.0]
h = 10.0
r1 = { min = -6.0, max = 6.0, count = 16 }
r2 = { min = -6.0, max = 6.0, count = 16 }

[scene]
kind = "gaussian"
center = [0.0, 2.0, 3.0]
width = 1.0
"#;

    #[test]
    fn minimal_config_matches_defaults() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg, ExperimentConfig::gaussian_default());
        let exp = cfg.resolve().unwrap();
        assert_eq!(exp.grid.dims, [64, 64, 64]);
        assert_eq!(exp.geometry.receiver_count(), 256);
        assert!((exp.time.dt() - 0.5 * exp.grid.spacing[2]).abs() < 1e-12 * exp.time.dt().max(1.0) + 1e-9);
    }

    #[test]
    fn serialized_config_round_trips() {
        let mut cfg = ExperimentConfig::gaussian_default();
        cfg.mitigation = Some(MitigationBlock {
            method: Method::Geometry,
            roi: Roi::Sphere { center: Vec3::new(0.0, 2.0, 3.0), radius: 1.0 },
            mute_policy: MutePolicy::PerReceiver,
            displacement_iterations: 2,
        });
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    fn config_error_path(text: &str) -> String {
        match ExperimentConfig::from_toml_str(text).and_then(|c| c.resolve().map(|_| ())) {
            Err(XtalkError::Config { path, .. }) => path,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected_with_paths() {
        assert_eq!(config_error_path(&format!("{MINIMAL}\n[time]\nstep = 0.1\n")), "time.step");
        let bad = MINIMAL.replace(
            "r2 = { min = -6.0, max = 6.0, count = 16 }",
            "r2 = { min = -6.0, max = 6.0, count = 16, extra = 1 }",
        );
        assert!(config_error_path(&bad).starts_with("geometry.r2"));
        let typo = MINIMAL.replace("width = 1.0", "widht = 1.0");
        assert!(config_error_path(&typo).starts_with("scene"));
    }

    #[test]
    fn validation_errors_name_fields() {
        assert_eq!(config_error_path(&MINIMAL.replace("schema_version = 1", "schema_version = 7")), "schema_version");
        assert_eq!(config_error_path(&MINIMAL.replace("h = 10.0", "h = -1.0")), "geometry.h");
        assert_eq!(config_error_path(&MINIMAL.replace("h = 10.0", "h = 5.0")), "grid.hi");
        assert_eq!(
            config_error_path(
                &MINIMAL
                    .replace("r1 = { min = -6.0, max = 6.0, count = 16 }", "r1 = { min = 1.0, max = 0.0, count = 3 }")
            ),
            "geometry.r1"
        );
        assert_eq!(config_error_path(&MINIMAL.replace("width = 1.0", "width = 0.0")), "scene.width");
        assert_eq!(config_error_path(&format!("{MINIMAL}\n[time]\ndt = -1.0\n")), "time.dt");
        assert_eq!(
            config_error_path(&format!("{MINIMAL}\n[acquisition]\nedge_taper_fraction = 0.7\n")),
            "acquisition.edge_taper_fraction"
        );
        assert_eq!(
            config_error_path(&format!("{MINIMAL}\n[output]\nslices = [{{ axis = \"x3\", coordinate = 9.0 }}]\n")),
            "output.slices[0].coordinate"
        );
        assert_eq!(
            config_error_path(&format!(
                "{MINIMAL}\n[mitigation]\nmethod = \"displacement\"\ndisplacement_iterations = 0\nroi = {{ kind = \"slab\", height = 0.5 }}\n"
            )),
            "mitigation.displacement_iterations"
        );
    }

    #[test]
    fn displacement_refuses_roi_crossing_the_plane() {
        let text = MINIMAL
            .replace("e1 = [-1.0, 2.0, 60.0]", "e1 = [-1.0, 2.0, 3.0]")
            .replace("e2 = [1.0, 2.0, 57.0]", "e2 = [1.0, 2.0, 3.0]")
            + "\n[mitigation]\nmethod = \"displacement\"\nroi = { kind = \"slab\", height = 0.5 }\n";
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        assert!(matches!(cfg.resolve(), Err(XtalkError::PlaneIntersectsRoi)));
        let masked = text + "\n[acquisition]\nbeam_mask = true\n";
        ExperimentConfig::from_toml_str(&masked).unwrap().resolve().unwrap();
    }

    #[test]
    fn emitter_sets() {
        let cfg = ExperimentConfig::from_toml_str(&format!("{MINIMAL}\n[acquisition]\nemitters = \"2\"\n")).unwrap();
        assert_eq!(cfg.acquisition.emitters.emitters(), &[Emitter::Two]);
        assert_eq!(EmitterSet::Both.emitters().len(), 2);
    }
}
