//! C ABI over `rigpose`.
//!
//! Every fallible function returns a [`RigposeStatus`]; on failure the message is
//! available from [`rigpose_last_error`] on the same thread. Objects are opaque and
//! must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, UnwindSafe};
use std::ptr;

use nalgebra::{Vector3, Vector4, Vector6};
use rigpose::fusion::{fuse_pose, CameraLocalPose};
use rigpose::geometry::{equivalent_rotation, project, rot_from_angles, world_to_camera_k, CameraRig, Pose};
use rigpose::harness::{default_intrinsics, monte_carlo, ExperimentConfig, ExperimentReport, HarnessOptions};
use rigpose::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RigposeStatus {
    Ok = 0,
    NullPointer = 1,
    /// Malformed JSON, bad camera index, invalid rig or config.
    InvalidInput = 2,
    /// The estimate could not be computed (degenerate geometry, divergence).
    Numerical = 3,
    /// A Rust panic was caught at the boundary.
    Internal = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RigposeLayout {
    Overlapping = 0,
    NonOverlapping = 1,
}

/// Motion of one camera in its own initial frame.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RigposeLocalMotion {
    pub translation: [f64; 3],
    /// Rotation angles (alpha, beta, gamma) of the camera's own rotation, radians.
    pub angles: [f64; 3],
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RigposeFusedPose {
    /// tx, ty, tz, alpha, beta, gamma of the reference camera.
    pub pose: [f64; 6],
    pub scales: [f64; 4],
    /// Nonzero when the scale system was degenerate and `scales` are the previous ones.
    pub ill_conditioned: i32,
    pub condition: f64,
}

/// Opaque camera rig.
pub struct RigposeRig(CameraRig);

/// Opaque Monte Carlo report.
pub struct RigposeReport {
    report: ExperimentReport,
    names: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: RigposeStatus, message: impl Into<String>) -> RigposeStatus {
    set_error(message.into());
    status
}

fn from_error(e: Error) -> RigposeStatus {
    let status = if e.is_input_error() {
        RigposeStatus::InvalidInput
    } else {
        RigposeStatus::Numerical
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> RigposeStatus + UnwindSafe) -> RigposeStatus {
    catch_unwind(f).unwrap_or_else(|_| fail(RigposeStatus::Internal, "internal panic"))
}

/// Reads a NUL-terminated UTF-8 string; `None` for a null pointer.
unsafe fn read_str<'a>(s: *const c_char) -> Result<Option<&'a str>, RigposeStatus> {
    if s.is_null() {
        return Ok(None);
    }
    CStr::from_ptr(s)
        .to_str()
        .map(Some)
        .map_err(|_| fail(RigposeStatus::InvalidInput, "string is not valid UTF-8"))
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(RigposeStatus::NullPointer, concat!("`", stringify!($p), "` is null"));
        })+
    };
}

/// Message of the most recent failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rigpose_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rigpose_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// The built-in four-camera rig of the given layout (500 px focal length, 640x480).
///
/// # Safety
/// `layout` must be one of the declared values and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rigpose_rig_default(layout: RigposeLayout, out: *mut *mut RigposeRig) -> RigposeStatus {
    non_null!(out);
    guard(|| {
        let rig = match layout {
            RigposeLayout::Overlapping => CameraRig::default_overlapping(default_intrinsics()),
            RigposeLayout::NonOverlapping => CameraRig::default_non_overlapping(default_intrinsics()),
        };
        *out = Box::into_raw(Box::new(RigposeRig(rig)));
        RigposeStatus::Ok
    })
}

/// Parses a rig file's JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rigpose_rig_from_json(json: *const c_char, out: *mut *mut RigposeRig) -> RigposeStatus {
    non_null!(json, out);
    guard(|| {
        let text = match read_str(json) {
            Ok(Some(t)) => t,
            Ok(None) => unreachable!(),
            Err(s) => return s,
        };
        match CameraRig::from_json_str(text) {
            Ok(rig) => {
                *out = Box::into_raw(Box::new(RigposeRig(rig)));
                RigposeStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Number of cameras, or 0 for a null rig.
///
/// # Safety
/// `rig` must be null or a rig returned by this library.
#[no_mangle]
pub unsafe extern "C" fn rigpose_rig_camera_count(rig: *const RigposeRig) -> usize {
    rig.as_ref().map_or(0, |r| r.0.len())
}

/// # Safety
/// `rig` must be null or a rig returned by this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn rigpose_rig_free(rig: *mut RigposeRig) {
    if !rig.is_null() {
        drop(Box::from_raw(rig));
    }
}

/// Pixel of world point `point` in camera `camera` (0-based) with the rig at `pose`
/// (tx, ty, tz, alpha, beta, gamma).
///
/// # Safety
/// `rig` must be a live rig; `pose`, `point` and `pixel` must point to 6, 3 and 2
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn rigpose_project(
    rig: *const RigposeRig,
    camera: usize,
    pose: *const f64,
    point: *const f64,
    pixel: *mut f64,
) -> RigposeStatus {
    non_null!(rig, pose, point, pixel);
    guard(|| {
        let rig = &(*rig).0;
        let pose = Pose::from_vector(&Vector6::from_column_slice(std::slice::from_raw_parts(pose, 6)));
        let m = Vector3::from_column_slice(std::slice::from_raw_parts(point, 3));
        let result = rig
            .camera(camera)
            .and_then(|cam| project(&world_to_camera_k(&pose, rig, camera, &m)?, &cam.intrinsics));
        match result {
            Ok(px) => {
                std::slice::from_raw_parts_mut(pixel, 2).copy_from_slice(px.as_slice());
                RigposeStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Fuses four per-camera local motions (camera order) into the reference pose,
/// solving the scale system or carrying `prev_scales` over when it is degenerate.
///
/// # Safety
/// `rig` must be a live four-camera rig; `motions` must point to 4 elements,
/// `prev_scales` to 4 doubles and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn rigpose_fuse_pose(
    rig: *const RigposeRig,
    motions: *const RigposeLocalMotion,
    prev_scales: *const f64,
    out: *mut RigposeFusedPose,
) -> RigposeStatus {
    non_null!(rig, motions, prev_scales, out);
    guard(|| {
        let rig = &(*rig).0;
        if rig.len() != 4 {
            return fail(RigposeStatus::InvalidInput, format!("rig has {} cameras, expected 4", rig.len()));
        }
        let motions = std::slice::from_raw_parts(motions, 4);
        let prev = Vector4::from_column_slice(std::slice::from_raw_parts(prev_scales, 4));
        let mut per_camera = Vec::with_capacity(4);
        for (k, m) in motions.iter().enumerate() {
            let rotation = rot_from_angles(&Vector3::from(m.angles));
            let local = CameraLocalPose {
                camera: k,
                translation: Vector3::from(m.translation),
                rotation,
                scale_free: k != 0,
            };
            match equivalent_rotation(&rig.cameras()[k].rotation, &rotation) {
                Ok(r) => per_camera.push((local, r)),
                Err(e) => return from_error(e),
            }
        }
        match fuse_pose(&per_camera, rig, &prev) {
            Ok(f) => {
                let mut pose = [0.0; 6];
                pose.copy_from_slice(f.pose.to_vector().as_slice());
                *out = RigposeFusedPose {
                    pose,
                    scales: f.scales.into(),
                    ill_conditioned: f.ill_conditioned as i32,
                    condition: f.condition,
                };
                RigposeStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Runs the Monte Carlo study. `config_json` may be null for the defaults;
/// `threads` = 0 uses every core.
///
/// # Safety
/// `config_json` must be null or NUL-terminated; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rigpose_simulate(
    config_json: *const c_char,
    threads: u32,
    out: *mut *mut RigposeReport,
) -> RigposeStatus {
    non_null!(out);
    guard(|| {
        let cfg = match read_str(config_json) {
            Ok(Some(text)) => match ExperimentConfig::from_json_str(text) {
                Ok(c) => c,
                Err(e) => return from_error(e),
            },
            Ok(None) => ExperimentConfig::default(),
            Err(s) => return s,
        };
        let opts = HarnessOptions {
            threads: (threads > 0).then_some(threads as usize),
            ..Default::default()
        };
        match monte_carlo(&cfg, &opts) {
            Ok(report) => {
                let names = report
                    .rows
                    .iter()
                    .map(|r| CString::new(r.method.to_string()).unwrap_or_default())
                    .collect();
                *out = Box::into_raw(Box::new(RigposeReport { report, names }));
                RigposeStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Number of method rows, or 0 for a null report.
///
/// # Safety
/// `report` must be null or a live report.
#[no_mangle]
pub unsafe extern "C" fn rigpose_report_row_count(report: *const RigposeReport) -> usize {
    report.as_ref().map_or(0, |r| r.report.rows.len())
}

/// Runs that produced a usable result, or 0 for a null report.
///
/// # Safety
/// `report` must be null or a live report.
#[no_mangle]
pub unsafe extern "C" fn rigpose_report_valid_runs(report: *const RigposeReport) -> usize {
    report.as_ref().map_or(0, |r| r.report.metadata.valid_runs)
}

/// Method name of row `row` ("4cameras", "cam1", "RC", ...), owned by the report;
/// null when out of range.
///
/// # Safety
/// `report` must be null or a live report.
#[no_mangle]
pub unsafe extern "C" fn rigpose_report_method(report: *const RigposeReport, row: usize) -> *const c_char {
    report
        .as_ref()
        .and_then(|r| r.names.get(row))
        .map_or(ptr::null(), |n| n.as_ptr())
}

/// Mean absolute errors (tx, ty, tz, alpha, beta, gamma) of row `row`.
///
/// # Safety
/// `report` must be a live report and `errors` must point to 6 doubles.
#[no_mangle]
pub unsafe extern "C" fn rigpose_report_errors(
    report: *const RigposeReport,
    row: usize,
    errors: *mut f64,
) -> RigposeStatus {
    non_null!(report, errors);
    let r = &(*report).report;
    match r.rows.get(row) {
        Some(entry) => {
            std::slice::from_raw_parts_mut(errors, 6).copy_from_slice(&entry.errors());
            RigposeStatus::Ok
        }
        None => fail(RigposeStatus::InvalidInput, format!("row {row} out of range ({} rows)", r.rows.len())),
    }
}

/// The report as CSV text. Release with [`rigpose_string_free`].
///
/// # Safety
/// `report` must be a live report and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rigpose_report_csv(report: *const RigposeReport, out: *mut *mut c_char) -> RigposeStatus {
    non_null!(report, out);
    guard(|| {
        let mut buf = Vec::new();
        if let Err(e) = (*report).report.write_csv(&mut buf) {
            return from_error(e);
        }
        match CString::new(buf) {
            Ok(s) => {
                *out = s.into_raw();
                RigposeStatus::Ok
            }
            Err(_) => fail(RigposeStatus::Internal, "report contains a NUL byte"),
        }
    })
}

/// # Safety
/// `report` must be null or a live report.
#[no_mangle]
pub unsafe extern "C" fn rigpose_report_free(report: *mut RigposeReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn rigpose_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
