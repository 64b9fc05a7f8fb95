//! End-to-end sequence estimators for both rig layouts, plus error reporting and the
//! pose/diagnostics file formats.

mod lowe;
mod nonoverlap;
mod stereo_seq;

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::ekf::FilterTuning;
use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::stereo::DEFAULT_EPIPOLAR_THRESHOLD;

pub use lowe::{lowe_pose, lowe_pose_rig, LoweSolution};
pub use nonoverlap::{
    known_structure_seeds, orthographic_seeds, run_camera_chain, run_nonoverlap_sequence,
    CameraChain, StructureSeed,
};
pub use stereo_seq::{run_stereo_sequence, triangulate_frame};

/// Default feature count below which features are re-established.
pub const DEFAULT_REDETECT_THRESHOLD: usize = 50;
/// Default depth of the constant-depth plane used to seed monocular structure (meters).
pub const DEFAULT_INIT_DEPTH: f64 = 1.0;
/// Features closer than this to a camera's image plane are left out of an update.
pub(crate) const MIN_FEATURE_DEPTH: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub epipolar_threshold: f64,
    pub redetect_threshold: usize,
    pub init_depth: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            epipolar_threshold: DEFAULT_EPIPOLAR_THRESHOLD,
            redetect_threshold: DEFAULT_REDETECT_THRESHOLD,
            init_depth: DEFAULT_INIT_DEPTH,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epipolar_threshold > 0.0) {
            return Err(Error::Config("pipeline.epipolar_threshold must be > 0".into()));
        }
        if !(self.init_depth > 0.0 && self.init_depth.is_finite()) {
            return Err(Error::Config("pipeline.init_depth must be > 0".into()));
        }
        Ok(())
    }
}

/// Everything a sequence run needs besides the observations and the rig.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunSettings {
    pub tuning: FilterTuning,
    pub pipeline: PipelineConfig,
}

/// The estimators compared in the error study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    FourCameras,
    TwoCameras,
    Cam(u8),
    Rc,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::FourCameras,
        Method::TwoCameras,
        Method::Cam(1),
        Method::Cam(2),
        Method::Cam(3),
        Method::Cam(4),
        Method::Rc,
    ];

    pub fn is_stereo(self) -> bool {
        matches!(self, Method::FourCameras | Method::TwoCameras)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::FourCameras => write!(f, "4cameras"),
            Method::TwoCameras => write!(f, "2cameras"),
            Method::Cam(k) => write!(f, "cam{k}"),
            Method::Rc => write!(f, "RC"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "4cameras" => Ok(Method::FourCameras),
            "2cameras" => Ok(Method::TwoCameras),
            "cam1" => Ok(Method::Cam(1)),
            "cam2" => Ok(Method::Cam(2)),
            "cam3" => Ok(Method::Cam(3)),
            "cam4" => Ok(Method::Cam(4)),
            "RC" | "rc" => Ok(Method::Rc),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

/// Per-frame bookkeeping written to the diagnostics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct FrameDiagnostics {
    pub frame: usize,
    pub method: String,
    /// Tracked features observed in this frame, before any re-detection.
    pub features: usize,
    /// Features used in this frame's update.
    pub measurements: usize,
    /// Features were re-triangulated / re-detected from the previous frame.
    pub redetected: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nis: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scales: Option<[f64; 4]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ill_conditioned: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub condition: Option<f64>,
}

/// One estimator's output: a pose per processed frame. Only ever appended to.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseEstimateSeries {
    pub method: Method,
    pub poses: Vec<Pose>,
    pub diagnostics: Vec<FrameDiagnostics>,
}

impl PoseEstimateSeries {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            poses: Vec::new(),
            diagnostics: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, pose: Pose, mut diag: FrameDiagnostics) {
        diag.frame = self.poses.len();
        diag.method = self.method.to_string();
        self.poses.push(pose);
        self.diagnostics.push(diag);
    }

    pub fn redetection_frames(&self) -> Vec<usize> {
        self.diagnostics
            .iter()
            .filter(|d| d.redetected)
            .map(|d| d.frame)
            .collect()
    }
}

/// Status of a feature track.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Active,
    Lost,
}

/// A feature's current 3D estimate and whether it was seen in the latest frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTrack {
    pub id: u64,
    pub structure: Vector3<f64>,
    pub status: TrackStatus,
    /// Camera that owns the track (non-overlapping layout only).
    pub owning_camera: Option<usize>,
}

/// Mean absolute error per parameter `(tx, ty, tz, alpha, beta, gamma)`.
pub type ErrorRow = [f64; 6];

/// Mean over frames of `|estimate - truth|`, per pose parameter.
pub fn pose_error_report(estimate: &[Pose], truth: &[Pose]) -> Result<ErrorRow> {
    if estimate.len() != truth.len() {
        return Err(Error::LengthMismatch {
            estimate: estimate.len(),
            truth: truth.len(),
        });
    }
    let mut row = [0.0; 6];
    if estimate.is_empty() {
        return Ok(row);
    }
    for (e, t) in estimate.iter().zip(truth) {
        let diff = e.to_vector() - t.to_vector();
        for (acc, d) in row.iter_mut().zip(diff.iter()) {
            *acc += d.abs();
        }
    }
    let n = estimate.len() as f64;
    row.iter_mut().for_each(|v| *v /= n);
    Ok(row)
}

#[derive(Debug, Serialize, Deserialize)]
struct PoseRow {
    frame: usize,
    tx: f64,
    ty: f64,
    tz: f64,
    alpha: f64,
    beta: f64,
    gamma: f64,
    method: String,
}

/// Writes `frame,tx,ty,tz,alpha,beta,gamma,method` rows at full precision.
pub fn write_poses_csv<W: Write>(writer: W, series: &[(String, &[Pose])]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(["frame", "tx", "ty", "tz", "alpha", "beta", "gamma", "method"])
        .map_err(|e| Error::Io(e.to_string()))?;
    for (method, poses) in series {
        for (frame, p) in poses.iter().enumerate() {
            w.serialize(PoseRow {
                frame,
                tx: p.translation.x,
                ty: p.translation.y,
                tz: p.translation.z,
                alpha: p.angles.x,
                beta: p.angles.y,
                gamma: p.angles.z,
                method: method.clone(),
            })
            .map_err(|e| Error::Io(e.to_string()))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a poses file into per-method pose lists ordered by frame.
pub fn read_poses_csv<R: Read>(reader: R, path: &str) -> Result<Vec<(String, Vec<Pose>)>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = r
        .headers()
        .map_err(|e| parse_error(path, 1, e.to_string()))?
        .clone();
    let expected = ["frame", "tx", "ty", "tz", "alpha", "beta", "gamma", "method"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(parse_error(
            path,
            1,
            "expected header `frame,tx,ty,tz,alpha,beta,gamma,method`".into(),
        ));
    }
    let mut order: Vec<String> = Vec::new();
    let mut by_method: HashMap<String, Vec<(usize, Pose)>> = HashMap::new();
    for (i, row) in r.deserialize::<PoseRow>().enumerate() {
        let row = row.map_err(|e| parse_error(path, i + 2, e.to_string()))?;
        if !by_method.contains_key(&row.method) {
            order.push(row.method.clone());
        }
        by_method.entry(row.method.clone()).or_default().push((
            row.frame,
            Pose::new(
                Vector3::new(row.tx, row.ty, row.tz),
                Vector3::new(row.alpha, row.beta, row.gamma),
            ),
        ));
    }
    order
        .into_iter()
        .map(|m| {
            let mut rows = by_method.remove(&m).unwrap_or_default();
            rows.sort_by_key(|(f, _)| *f);
            for (expected, (frame, _)) in rows.iter().enumerate() {
                if *frame != expected {
                    return Err(parse_error(
                        path,
                        0,
                        format!("method `{m}` is missing frame {expected}"),
                    ));
                }
            }
            Ok((m, rows.into_iter().map(|(_, p)| p).collect()))
        })
        .collect()
}

/// One JSON object per line.
pub fn write_diagnostics_jsonl<W: Write>(mut writer: W, diags: &[FrameDiagnostics]) -> Result<()> {
    for d in diags {
        let line = serde_json::to_string(d).map_err(|e| Error::Io(e.to_string()))?;
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

fn parse_error(path: &str, line: usize, message: String) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        message,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector6;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_poses(n: usize, seed: u64) -> Vec<Pose> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Pose::from_vector(&Vector6::from_fn(|_, _| rng.random_range(-0.3..0.3))))
            .collect()
    }

    #[test]
    fn error_report_examples() {
        let truth = random_poses(20, 1);
        assert_eq!(pose_error_report(&truth, &truth).unwrap(), [0.0; 6]);

        let shifted: Vec<Pose> = truth
            .iter()
            .map(|p| Pose::new(p.translation + Vector3::new(0.01, 0.0, 0.0), p.angles))
            .collect();
        let row = pose_error_report(&shifted, &truth).unwrap();
        assert!((row[0] - 0.01).abs() < 1e-15);
        assert!(row[1..].iter().all(|v| *v == 0.0));

        assert!(matches!(
            pose_error_report(&truth[..3], &truth),
            Err(Error::LengthMismatch { estimate: 3, truth: 20 })
        ));
    }

    #[test]
    fn error_report_matches_direct_mean() {
        let est = random_poses(37, 2);
        let truth = random_poses(37, 3);
        let row = pose_error_report(&est, &truth).unwrap();
        for i in 0..6 {
            let mut sum = 0.0;
            for (e, t) in est.iter().zip(&truth) {
                let (ev, tv) = if i < 3 { (e.translation[i], t.translation[i]) } else { (e.angles[i - 3], t.angles[i - 3]) };
                sum += (ev - tv).abs();
            }
            assert!((row[i] - sum / 37.0).abs() < 1e-15);
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert!("cam5".parse::<Method>().is_err());
    }

    #[test]
    fn poses_csv_round_trip() {
        let a = random_poses(5, 4);
        let b = random_poses(5, 5);
        let mut buf = Vec::new();
        write_poses_csv(&mut buf, &[("cam1".into(), &a), ("RC".into(), &b)]).unwrap();
        let back = read_poses_csv(buf.as_slice(), "mem").unwrap();
        assert_eq!(back, vec![("cam1".to_string(), a), ("RC".to_string(), b)]);
    }
}
