//! On-disk formats: raw little-endian `f32` arrays with a TOML sidecar, and
//! slice exports as CSV and 16-bit PGM.
//!
//! A volume written to `image.f32` has its metadata in `image.f32.toml`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, XtalkError};
use crate::forward::{DataCube, TimeGrid};
use crate::geometry::AcquisitionGeometry;
use crate::grid::{GridSpec, ScalarField3D};
use crate::vec3::Vec3;

pub const FORMAT_VERSION: u32 = 1;
const PRODUCER: &str = concat!("xtalk ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeHeader {
    pub kind: String,
    pub version: u32,
    pub producer: String,
    pub dtype: String,
    pub order: String,
    pub units: String,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataHeader {
    pub kind: String,
    pub version: u32,
    pub producer: String,
    pub dtype: String,
    pub order: String,
    pub geometry: AcquisitionGeometry,
    pub time: TimeGrid,
}

/// Sidecar path for a binary file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".toml");
    PathBuf::from(s)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| XtalkError::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| XtalkError::io(path, e))?;
    f.write_all(bytes).map_err(|e| XtalkError::io(path, e))
}

fn encode_f32(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 4);
    for v in values {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

fn decode_f32(path: &Path, bytes: &[u8], expected: usize) -> Result<Vec<f64>> {
    if bytes.len() != expected * 4 {
        return Err(XtalkError::Format {
            path: path.into(),
            message: format!("expected {} bytes, found {}", expected * 4, bytes.len()),
        });
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect())
}

fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string(value).map_err(|e| XtalkError::Format { path: path.into(), message: e.to_string() })?;
    write_file(path, text.as_bytes())
}

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| XtalkError::io(path, e))?;
    toml::from_str(&text).map_err(|e| XtalkError::Format { path: path.into(), message: e.to_string() })
}

fn check_header(path: &Path, kind: &str, found_kind: &str, version: u32, dtype: &str) -> Result<()> {
    let bad = |message: String| Err(XtalkError::Format { path: path.into(), message });
    if found_kind != kind {
        return bad(format!("expected kind `{kind}`, found `{found_kind}`"));
    }
    if version != FORMAT_VERSION {
        return bad(format!("unsupported format version {version}"));
    }
    if dtype != "f32le" {
        return bad(format!("unsupported dtype `{dtype}`"));
    }
    Ok(())
}

/// Writes a volume as `f32` little-endian, x1 fastest.
pub fn write_volume(path: &Path, field: &ScalarField3D) -> Result<()> {
    let g = &field.grid;
    let header = VolumeHeader {
        kind: "volume".into(),
        version: FORMAT_VERSION,
        producer: PRODUCER.into(),
        dtype: "f32le".into(),
        order: "x1-fastest".into(),
        units: "scene".into(),
        dims: g.dims,
        spacing: g.spacing,
        origin: g.origin.to_array(),
    };
    write_file(path, &encode_f32(&field.values))?;
    write_toml(&sidecar_path(path), &header)
}

pub fn read_volume(path: &Path) -> Result<ScalarField3D> {
    let side = sidecar_path(path);
    let h: VolumeHeader = read_toml(&side)?;
    check_header(&side, "volume", &h.kind, h.version, &h.dtype)?;
    let grid = GridSpec::new(Vec3::from_array(h.origin), h.spacing, h.dims)
        .map_err(|e| XtalkError::Format { path: side.clone(), message: e.to_string() })?;
    let bytes = fs::read(path).map_err(|e| XtalkError::io(path, e))?;
    let values = decode_f32(path, &bytes, grid.len())?;
    ScalarField3D::from_values(grid, values)
        .map_err(|e| XtalkError::Format { path: path.into(), message: e.to_string() })
}

/// Writes a data cube as `f32` little-endian, time fastest, then r2, then r1.
pub fn write_data(path: &Path, cube: &DataCube) -> Result<()> {
    let header = DataHeader {
        kind: "data".into(),
        version: FORMAT_VERSION,
        producer: PRODUCER.into(),
        dtype: "f32le".into(),
        order: "t-fastest,r2,r1".into(),
        geometry: cube.geometry.clone(),
        time: cube.time,
    };
    write_file(path, &encode_f32(&cube.samples))?;
    write_toml(&sidecar_path(path), &header)
}

pub fn read_data(path: &Path) -> Result<DataCube> {
    let side = sidecar_path(path);
    let h: DataHeader = read_toml(&side)?;
    check_header(&side, "data", &h.kind, h.version, &h.dtype)?;
    let fmt = |e: XtalkError| XtalkError::Format { path: side.clone(), message: e.to_string() };
    h.geometry.validate().map_err(|e| fmt(e.into()))?;
    h.time.validate().map_err(fmt)?;
    let bytes = fs::read(path).map_err(|e| XtalkError::io(path, e))?;
    let values = decode_f32(path, &bytes, h.geometry.receiver_count() * h.time.n_t)?;
    DataCube::from_samples(h.geometry, h.time, values)
        .map_err(|e| XtalkError::Format { path: path.into(), message: e.to_string() })
}

/// Axis normal to an exported slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X1,
    X2,
    X3,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X1 => 0,
            Axis::X2 => 1,
            Axis::X3 => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X1 => "x1",
            Axis::X2 => "x2",
            Axis::X3 => "x3",
        }
    }
}

/// A 2D cut through a volume. `values` is row-major: rows follow the slower
/// remaining axis, columns the faster one.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    pub axis: Axis,
    pub index: usize,
    pub coordinate: f64,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceHeader {
    pub axis: Axis,
    pub index: usize,
    pub coordinate: f64,
    pub rows: usize,
    pub cols: usize,
    /// Stored value `s` maps back to `min + s * scale`.
    pub min: f64,
    pub scale: f64,
}

/// Slice nearest to `coordinate` along `axis`.
pub fn extract_slice(field: &ScalarField3D, axis: Axis, coordinate: f64) -> Result<Slice> {
    let g = &field.grid;
    let a = axis.index();
    let u = (coordinate - g.origin.to_array()[a]) / g.spacing[a];
    let n = g.dims[a];
    if !(u > -0.5 && u < n as f64 - 0.5) {
        return Err(XtalkError::Invalid(format!("slice {}={coordinate} lies outside the grid", axis.name())));
    }
    let index = (u.round() as usize).min(n - 1);
    let (fast, slow) = match axis {
        Axis::X1 => (1, 2),
        Axis::X2 => (0, 2),
        Axis::X3 => (0, 1),
    };
    let (cols, rows) = (g.dims[fast], g.dims[slow]);
    let mut values = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let mut ijk = [0usize; 3];
            ijk[a] = index;
            ijk[fast] = c;
            ijk[slow] = r;
            values.push(field.get(ijk[0], ijk[1], ijk[2]));
        }
    }
    let coordinate = g.origin.to_array()[a] + index as f64 * g.spacing[a];
    Ok(Slice { axis, index, coordinate, rows, cols, values })
}

/// Writes `<stem>.csv`, `<stem>.pgm` and `<stem>.toml`, all normalized to
/// `[0, 1]` (PGM: `[0, 65535]`).
pub fn write_slice(stem: &Path, slice: &Slice) -> Result<()> {
    let min = slice.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = slice.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scale = if max > min { max - min } else { 0.0 };
    let norm: Vec<f64> = slice.values.iter().map(|v| if scale > 0.0 { (v - min) / scale } else { 0.0 }).collect();

    let mut csv = String::new();
    for row in norm.chunks(slice.cols) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        csv.push_str(&line.join(","));
        csv.push('\n');
    }
    write_file(&stem.with_extension("csv"), csv.as_bytes())?;

    let mut pgm = format!("P5\n{} {}\n65535\n", slice.cols, slice.rows).into_bytes();
    for v in &norm {
        let q = (v * 65535.0).round().clamp(0.0, 65535.0) as u16;
        pgm.extend_from_slice(&q.to_be_bytes());
    }
    write_file(&stem.with_extension("pgm"), &pgm)?;

    let header = SliceHeader {
        axis: slice.axis,
        index: slice.index,
        coordinate: slice.coordinate,
        rows: slice.rows,
        cols: slice.cols,
        min: if min.is_finite() { min } else { 0.0 },
        scale,
    };
    write_toml(&stem.with_extension("toml"), &header)
}
