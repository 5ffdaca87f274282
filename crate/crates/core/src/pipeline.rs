//! End-to-end runs: simulate, reconstruct, mitigate and predict, each
//! reading and writing files under an output directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{Experiment, ImagingMode, Method};
use crate::error::{GeometryError, Result, XtalkError};
use crate::forward::{build_mute, simulate, DataCube, Mute, TruncationWarning};
use crate::geometry::{
    artifact_location, bistatic_range, critical_angle_at, gamma_bounds, gamma_fn, gamma_tilde, plane_pi_side,
};
use crate::grid::ScalarField3D;
use crate::imaging::{default_stitch_width, detect_peaks, normalized_backproject, stitched_backproject, Peak};
use crate::io::{extract_slice, read_data, write_data, write_slice, write_volume};
use crate::mitigation::{displace_artifacts, geometry_mute, unresolved_violations, ImagingOps, SymbolAmplitudes};

pub const DATA_FILE: &str = "data.f32";
pub const IMAGE_FILE: &str = "image.f32";
pub const MITIGATED_FILE: &str = "mitigated.f32";
pub const MITIGATION_REPORT: &str = "mitigation_report.toml";
pub const PREDICT_REPORT: &str = "artifact_report.csv";
pub const PREDICT_SUMMARY: &str = "artifact_summary.toml";

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| XtalkError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| XtalkError::io(path, e))
}

fn write_report<T: Serialize>(path: &Path, report: &T) -> Result<()> {
    let text = toml::to_string(report).map_err(|e| XtalkError::Format { path: path.into(), message: e.to_string() })?;
    write_text(path, &text)
}

#[derive(Debug, Clone)]
pub struct SimulateOutput {
    pub data_path: PathBuf,
    pub data: DataCube,
    pub truncation: Option<TruncationWarning>,
}

/// Simulates raw (unmuted) data for the configured scene and emitter set.
pub fn run_simulate(exp: &Experiment, out_dir: &Path) -> Result<SimulateOutput> {
    let scene = exp.config.scene.build(exp.grid)?;
    let emitters = exp.config.acquisition.emitters.emitters();
    let (data, truncation) = simulate(&scene, &exp.geometry, &exp.time, None, &exp.beam, emitters)?;
    if let Some(w) = &truncation {
        log::warn!("{:.3}% of deposits fell outside the time grid", 100.0 * w.clipped_fraction);
    }
    let data_path = out_dir.join(DATA_FILE);
    write_data(&data_path, &data)?;
    log::info!("wrote {}", data_path.display());
    Ok(SimulateOutput { data_path, data, truncation })
}

fn acquisition_mute(exp: &Experiment, data: &DataCube) -> Mute {
    build_mute(&data.geometry, &data.time, &exp.mute_spec)
}

fn image_with_mute(exp: &Experiment, data: &DataCube, mute: &Mute) -> Result<ScalarField3D> {
    let imaging = &exp.config.imaging;
    match imaging.mode {
        ImagingMode::Single => normalized_backproject(data, &exp.grid, imaging.adjoint_emitter, Some(mute), &exp.beam),
        ImagingMode::Stitched => {
            let width = imaging.stitch_width.unwrap_or_else(|| default_stitch_width(&exp.grid));
            stitched_backproject(data, &exp.grid, Some(mute), &exp.beam, width)
        }
    }
}

fn read_matching_data(exp: &Experiment, data_path: &Path) -> Result<DataCube> {
    let data = read_data(data_path)?;
    if data.geometry != exp.geometry {
        return Err(XtalkError::config(
            "geometry",
            format!("{} was recorded with a different acquisition geometry", data_path.display()),
        ));
    }
    Ok(data)
}

fn export(exp: &Experiment, image: &ScalarField3D, out_dir: &Path, file: &str) -> Result<PathBuf> {
    let path = out_dir.join(file);
    write_volume(&path, image)?;
    let stem = file.trim_end_matches(".f32");
    for s in &exp.config.output.slices {
        let slice = extract_slice(image, s.axis, s.coordinate)?;
        write_slice(&out_dir.join(format!("{stem}_{}_{:03}", s.axis.name(), slice.index)), &slice)?;
    }
    log::info!("wrote {}", path.display());
    Ok(path)
}

fn peaks_csv(image: &ScalarField3D, peaks: &[Peak]) -> String {
    let mut out = String::from("rank,i1,i2,i3,x1,x2,x3,value\n");
    for (rank, p) in peaks.iter().enumerate() {
        let [i1, i2, i3] = image.grid.unravel(p.index);
        out.push_str(&format!(
            "{rank},{i1},{i2},{i3},{:.6},{:.6},{:.6},{:.9e}\n",
            p.point.x1, p.point.x2, p.point.x3, p.value
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct ReconstructOutput {
    pub image_path: PathBuf,
    pub image: ScalarField3D,
    pub peaks: Vec<Peak>,
}

/// Backprojects a data file and exports the volume, configured slices and a
/// peak census.
pub fn run_reconstruct(exp: &Experiment, data_path: &Path, out_dir: &Path) -> Result<ReconstructOutput> {
    let data = read_matching_data(exp, data_path)?;
    let image = image_with_mute(exp, &data, &acquisition_mute(exp, &data))?;
    let image_path = export(exp, &image, out_dir, IMAGE_FILE)?;
    let peaks = detect_peaks(&image, exp.config.imaging.peak_threshold);
    write_text(&out_dir.join("image_peaks.csv"), &peaks_csv(&image, &peaks))?;
    Ok(ReconstructOutput { image_path, image, peaks })
}

/// Predicted artifact orbit statistics after each displacement iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrbitStats {
    pub iteration: usize,
    /// Power of the artifact map the freshest artifacts sit at.
    pub map_power: usize,
    pub receivers_with_artifact: usize,
    pub min_distance: f64,
    pub mean_distance: f64,
    pub max_distance: f64,
    /// Orbit points still inside the ROI.
    pub inside_roi: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MitigationReport {
    pub method: String,
    pub retained_fraction: Option<f64>,
    pub violating_receivers: Option<usize>,
    pub unresolved_violations: Option<usize>,
    pub orbit: Vec<OrbitStats>,
}

#[derive(Debug, Clone)]
pub struct MitigateOutput {
    pub image_path: PathBuf,
    pub image: ScalarField3D,
    pub report: MitigationReport,
}

fn orbit_stats(exp: &Experiment, iterations: usize) -> Result<Vec<OrbitStats>> {
    let Some(x) = exp.config.scene.anchor() else {
        return Ok(Vec::new());
    };
    let roi = exp.config.mitigation.expect("checked by caller").roi;
    let max_power = 1usize << iterations;
    let geo = &exp.geometry;
    let mut by_receiver = Vec::with_capacity(geo.receiver_count());
    for k in 0..geo.receiver_count() {
        let gamma = geo.receiver_at(k);
        let mut orbit = Vec::with_capacity(max_power);
        let mut cur = x;
        // The orbit ends early once no further crosstalk image exists.
        for _ in 0..max_power {
            match artifact_location(cur, gamma, geo) {
                Ok(p) => {
                    cur = p.z;
                    orbit.push(p);
                }
                Err(GeometryError::NoArtifact | GeometryError::AboveReceiver) => break,
                Err(e) => return Err(e.at_receiver(geo.receiver_index(k)).into()),
            }
        }
        by_receiver.push(orbit);
    }
    let mut out = Vec::with_capacity(iterations);
    for i in 1..=iterations {
        let power = 1usize << i;
        let dists: Vec<(f64, bool)> =
            by_receiver.iter().filter_map(|o| o.get(power - 1)).map(|p| (p.z.distance(x), roi.contains(p.z))).collect();
        let n = dists.len();
        let (mut lo, mut hi, mut sum) = (f64::INFINITY, 0.0f64, 0.0);
        for (d, _) in &dists {
            lo = lo.min(*d);
            hi = hi.max(*d);
            sum += d;
        }
        out.push(OrbitStats {
            iteration: i,
            map_power: power,
            receivers_with_artifact: n,
            min_distance: if n > 0 { lo } else { 0.0 },
            mean_distance: if n > 0 { sum / n as f64 } else { 0.0 },
            max_distance: hi,
            inside_roi: dists.iter().filter(|(_, inside)| *inside).count(),
        });
    }
    Ok(out)
}

/// Applies the configured mitigation to a data file. With method `none` the
/// output volume is byte-identical to the reconstruction.
pub fn run_mitigate(exp: &Experiment, data_path: &Path, out_dir: &Path) -> Result<MitigateOutput> {
    let block = exp
        .config
        .mitigation
        .ok_or_else(|| XtalkError::config("mitigation", "run_mitigate needs a [mitigation] block"))?;
    let data = read_matching_data(exp, data_path)?;
    let acq = acquisition_mute(exp, &data);
    let (image, report) = match block.method {
        Method::None => (
            image_with_mute(exp, &data, &acq)?,
            MitigationReport {
                method: "none".into(),
                retained_fraction: None,
                violating_receivers: None,
                unresolved_violations: None,
                orbit: Vec::new(),
            },
        ),
        Method::Geometry => {
            let om = geometry_mute(&data.geometry, &exp.grid, &data.time, &block.roi, block.mute_policy)?;
            let unresolved = unresolved_violations(&data.geometry, &exp.grid, &data.time, &block.roi, &om.mute)?;
            let image = image_with_mute(exp, &data, &acq.multiply(&om.mute))?;
            log::info!(
                "omission mute keeps {:.1}% of samples; {} of {} receivers touched",
                100.0 * om.retained_fraction,
                om.violating_receivers,
                data.geometry.receiver_count()
            );
            (
                image,
                MitigationReport {
                    method: "geometry".into(),
                    retained_fraction: Some(om.retained_fraction),
                    violating_receivers: Some(om.violating_receivers),
                    unresolved_violations: Some(unresolved),
                    orbit: Vec::new(),
                },
            )
        }
        Method::Displacement => {
            let adjoint = exp.config.imaging.adjoint_emitter;
            let unfiltered = normalized_backproject(&data, &exp.grid, adjoint, Some(&acq), &exp.beam)?;
            let ops = ImagingOps {
                geo: &data.geometry,
                grid: &exp.grid,
                tg: &data.time,
                mute: Some(&acq),
                beam: &exp.beam,
                adjoint,
            };
            let n = block.displacement_iterations;
            let image = displace_artifacts(&unfiltered, &ops, &block.roi, n, SymbolAmplitudes::default())?;
            (
                image,
                MitigationReport {
                    method: "displacement".into(),
                    retained_fraction: None,
                    violating_receivers: None,
                    unresolved_violations: None,
                    orbit: orbit_stats(exp, n)?,
                },
            )
        }
    };
    let image_path = export(exp, &image, out_dir, MITIGATED_FILE)?;
    write_report(&out_dir.join(MITIGATION_REPORT), &report)?;
    Ok(MitigateOutput { image_path, image, report })
}

/// One row of the artifact report.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictRow {
    pub receiver_index: (usize, usize),
    /// `None` when no crosstalk image exists for this receiver.
    pub artifact: Option<PredictedArtifact>,
    pub pi_side: f64,
    pub theta_c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictedArtifact {
    pub z: crate::vec3::Vec3,
    pub c: f64,
    pub gamma: f64,
    pub gamma_tilde: f64,
    pub gamma_bar: Option<f64>,
    pub travel_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictSummary {
    pub scatterer: [f64; 3],
    pub receivers: usize,
    pub receivers_with_artifact: usize,
    pub pi_side: String,
    pub min_artifact_height: Option<f64>,
    pub max_artifact_height: Option<f64>,
    pub all_below_ground: bool,
    pub max_travel_residual: f64,
}

#[derive(Debug, Clone)]
pub struct PredictOutput {
    pub report_path: PathBuf,
    pub rows: Vec<PredictRow>,
    pub summary: PredictSummary,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.12e}")).unwrap_or_default()
}

/// Predicts the artifact surface of the scene anchor point for every
/// receiver, with the bounds and beam angle.
pub fn run_predict(exp: &Experiment, out_dir: &Path) -> Result<PredictOutput> {
    let x = exp
        .config
        .scene
        .anchor()
        .ok_or_else(|| XtalkError::config("scene", "prediction needs a scatterer location"))?;
    let geo = &exp.geometry;
    if !(x.x3 < geo.h) {
        return Err(GeometryError::AboveReceiver.into());
    }
    let side = plane_pi_side(x, geo);
    let mut rows = Vec::with_capacity(geo.receiver_count());
    for k in 0..geo.receiver_count() {
        let idx = geo.receiver_index(k);
        let gamma = geo.receiver_at(k);
        let at = |e: GeometryError| XtalkError::from(e.at_receiver(idx));
        let theta_c = match critical_angle_at(gamma, geo) {
            Ok(ca) => Some(ca.theta_c),
            Err(GeometryError::DegenerateEmitterAxis) => None,
            Err(e) => return Err(at(e)),
        };
        let artifact = match artifact_location(x, gamma, geo) {
            Ok(p) => {
                let travel = bistatic_range(x, gamma, geo.e2);
                let residual = (p.z.distance(gamma) + p.z.distance(geo.e1) - travel).abs() / travel;
                let gamma_bar = match gamma_bounds(x, gamma, geo) {
                    Ok((_, bar)) => Some(bar),
                    Err(GeometryError::BarUndefined) => None,
                    Err(e) => return Err(at(e)),
                };
                Some(PredictedArtifact {
                    z: p.z,
                    c: p.c,
                    gamma: gamma_fn(x, gamma, geo).map_err(at)?,
                    gamma_tilde: gamma_tilde(x, gamma, geo).map_err(at)?,
                    gamma_bar,
                    travel_residual: residual,
                })
            }
            Err(GeometryError::NoArtifact) => None,
            Err(e) => return Err(at(e)),
        };
        rows.push(PredictRow { receiver_index: idx, artifact, pi_side: side, theta_c });
    }

    let mut csv = String::from("i1,i2,r1,r2,z1,z2,z3,c,gamma,gamma_tilde,gamma_bar,pi_side,theta_c,travel_residual\n");
    for r in &rows {
        let g = geo.receiver(r.receiver_index.0, r.receiver_index.1);
        let a = r.artifact.as_ref();
        csv.push_str(&format!(
            "{},{},{:.6},{:.6},{},{},{},{},{},{},{},{:.12e},{},{}\n",
            r.receiver_index.0,
            r.receiver_index.1,
            g.x1,
            g.x2,
            opt(a.map(|a| a.z.x1)),
            opt(a.map(|a| a.z.x2)),
            opt(a.map(|a| a.z.x3)),
            opt(a.map(|a| a.c)),
            opt(a.map(|a| a.gamma)),
            opt(a.map(|a| a.gamma_tilde)),
            opt(a.and_then(|a| a.gamma_bar)),
            r.pi_side,
            opt(r.theta_c),
            opt(a.map(|a| a.travel_residual)),
        ));
    }
    let report_path = out_dir.join(PREDICT_REPORT);
    write_text(&report_path, &csv)?;

    let heights: Vec<f64> = rows.iter().filter_map(|r| r.artifact.as_ref().map(|a| a.z.x3)).collect();
    let summary = PredictSummary {
        scatterer: x.to_array(),
        receivers: rows.len(),
        receivers_with_artifact: heights.len(),
        pi_side: if side > 0.0 {
            "emitter 2".into()
        } else if side < 0.0 {
            "emitter 1".into()
        } else {
            "on plane".into()
        },
        min_artifact_height: heights.iter().cloned().reduce(f64::min),
        max_artifact_height: heights.iter().cloned().reduce(f64::max),
        all_below_ground: !heights.is_empty() && heights.iter().all(|h| *h < 0.0),
        max_travel_residual: rows
            .iter()
            .filter_map(|r| r.artifact.as_ref().map(|a| a.travel_residual))
            .fold(0.0, f64::max),
    };
    write_report(&out_dir.join(PREDICT_SUMMARY), &summary)?;
    log::info!("wrote {}", report_path.display());
    Ok(PredictOutput { report_path, rows, summary })
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub simulate: SimulateOutput,
    pub reconstruct: ReconstructOutput,
    pub mitigate: Option<MitigateOutput>,
    pub predict: Option<PredictOutput>,
}

/// Runs all stages in order. Mitigation runs when a mitigation block is
/// configured; prediction when the scene has a scatterer location.
pub fn run_pipeline(exp: &Experiment, out_dir: &Path) -> Result<PipelineOutput> {
    let simulate = run_simulate(exp, out_dir)?;
    let reconstruct = run_reconstruct(exp, &simulate.data_path, out_dir)?;
    let mitigate = match exp.config.mitigation {
        Some(_) => Some(run_mitigate(exp, &simulate.data_path, out_dir)?),
        None => None,
    };
    let predict = match exp.config.scene.anchor() {
        Some(_) => Some(run_predict(exp, out_dir)?),
        None => None,
    };
    Ok(PipelineOutput { simulate, reconstruct, mitigate, predict })
}
