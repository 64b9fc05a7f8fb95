use std::ffi::{CStr, CString};
use std::ptr;

use rigpose::geometry::CameraRig;
use rigpose::harness::default_intrinsics;
use rigpose_ffi::*;

fn last_error() -> String {
    let p = rigpose_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn default_rig(layout: RigposeLayout) -> *mut RigposeRig {
    let mut rig = ptr::null_mut();
    assert_eq!(unsafe { rigpose_rig_default(layout, &mut rig) }, RigposeStatus::Ok);
    rig
}

#[test]
fn projects_like_the_core_library() {
    let rig = default_rig(RigposeLayout::Overlapping);
    assert_eq!(unsafe { rigpose_rig_camera_count(rig) }, 4);
    let pose = [0.01, -0.02, 0.03, 0.02, -0.01, 0.015];
    let point = [0.1, 0.05, 0.8];
    let mut px = [0.0; 2];
    assert_eq!(unsafe { rigpose_project(rig, 0, pose.as_ptr(), point.as_ptr(), px.as_mut_ptr()) }, RigposeStatus::Ok);

    let core = CameraRig::default_overlapping(default_intrinsics());
    let p = rigpose::geometry::Pose::from_vector(&nalgebra::Vector6::from_column_slice(&pose));
    let cam = rigpose::geometry::world_to_camera_k(&p, &core, 0, &nalgebra::Vector3::from(point)).unwrap();
    let expected = rigpose::geometry::project(&cam, &core.cameras()[0].intrinsics).unwrap();
    assert_eq!(px, [expected.x, expected.y]);

    assert_eq!(
        unsafe { rigpose_project(rig, 7, pose.as_ptr(), point.as_ptr(), px.as_mut_ptr()) },
        RigposeStatus::InvalidInput
    );
    assert!(last_error().contains('7'));
    unsafe { rigpose_rig_free(rig) };
}

#[test]
fn point_behind_the_camera_is_a_numerical_failure() {
    let rig = default_rig(RigposeLayout::Overlapping);
    let pose = [0.0; 6];
    let point = [0.0, 0.0, -1.0];
    let mut px = [0.0; 2];
    assert_eq!(
        unsafe { rigpose_project(rig, 0, pose.as_ptr(), point.as_ptr(), px.as_mut_ptr()) },
        RigposeStatus::Numerical
    );
    unsafe { rigpose_rig_free(rig) };
}

#[test]
fn rig_json_round_trip_and_errors() {
    let core = CameraRig::default_non_overlapping(default_intrinsics());
    let json = CString::new(core.to_json_string()).unwrap();
    let mut rig = ptr::null_mut();
    assert_eq!(unsafe { rigpose_rig_from_json(json.as_ptr(), &mut rig) }, RigposeStatus::Ok);
    assert_eq!(unsafe { rigpose_rig_camera_count(rig) }, 4);
    unsafe { rigpose_rig_free(rig) };

    let bad = CString::new("{\"cameras\": 3}").unwrap();
    let mut rig = ptr::null_mut();
    assert_eq!(unsafe { rigpose_rig_from_json(bad.as_ptr(), &mut rig) }, RigposeStatus::InvalidInput);
    assert!(rig.is_null());
    assert!(!last_error().is_empty());

    assert_eq!(unsafe { rigpose_rig_from_json(ptr::null(), &mut rig) }, RigposeStatus::NullPointer);
    assert_eq!(unsafe { rigpose_rig_camera_count(ptr::null()) }, 0);
    unsafe { rigpose_rig_free(ptr::null_mut()) };
}

/// Exact local motions of every camera for a reference motion.
fn local_motions(rig: &CameraRig, pose: &rigpose::geometry::Pose) -> [RigposeLocalMotion; 4] {
    let r = pose.rotation();
    std::array::from_fn(|k| {
        let cam = &rig.cameras()[k];
        let l = cam.rotation.transpose() * (pose.translation + (r - nalgebra::Matrix3::identity()) * cam.displacement);
        let local_r = cam.rotation.transpose() * r * cam.rotation;
        let a = rigpose::geometry::angles_from_rot(&local_r).unwrap();
        RigposeLocalMotion { translation: [l.x, l.y, l.z], angles: [a.x, a.y, a.z] }
    })
}

#[test]
fn fuses_exact_motions_and_falls_back_on_pure_rotation() {
    let core = CameraRig::default_non_overlapping(default_intrinsics());
    let rig = default_rig(RigposeLayout::NonOverlapping);
    let truth = rigpose::geometry::Pose::new(nalgebra::Vector3::new(0.03, -0.02, 0.05), nalgebra::Vector3::new(0.08, -0.12, 0.1));
    let motions = local_motions(&core, &truth);
    let prev = [1.0; 4];
    let mut out = RigposeFusedPose::default();
    assert_eq!(unsafe { rigpose_fuse_pose(rig, motions.as_ptr(), prev.as_ptr(), &mut out) }, RigposeStatus::Ok);
    assert_eq!(out.ill_conditioned, 0);
    for (a, b) in out.pose.iter().zip(truth.to_vector().iter()) {
        assert!((a - b).abs() < 1e-9);
    }
    for s in out.scales {
        assert!((s - 1.0).abs() < 1e-9);
    }

    let spin = rigpose::geometry::Pose::new(nalgebra::Vector3::zeros(), nalgebra::Vector3::new(0.02, 0.0, 0.01));
    let motions = local_motions(&core, &spin);
    let prev = [1.3, 0.9, 1.1, 0.7];
    assert_eq!(unsafe { rigpose_fuse_pose(rig, motions.as_ptr(), prev.as_ptr(), &mut out) }, RigposeStatus::Ok);
    assert_eq!(out.ill_conditioned, 1);
    assert_eq!(out.scales, prev);
    unsafe { rigpose_rig_free(rig) };
}

#[test]
fn fusion_needs_four_cameras() {
    let two = CameraRig::default_overlapping(default_intrinsics()).subset(&[0, 1]).unwrap();
    let json = CString::new(two.to_json_string()).unwrap();
    let mut rig = ptr::null_mut();
    assert_eq!(unsafe { rigpose_rig_from_json(json.as_ptr(), &mut rig) }, RigposeStatus::Ok);
    let motions = [RigposeLocalMotion { translation: [0.0; 3], angles: [0.0; 3] }; 4];
    let mut out = RigposeFusedPose::default();
    assert_eq!(
        unsafe { rigpose_fuse_pose(rig, motions.as_ptr(), [1.0; 4].as_ptr(), &mut out) },
        RigposeStatus::InvalidInput
    );
    unsafe { rigpose_rig_free(rig) };
}

#[test]
fn simulate_matches_the_core_report() {
    let json = r#"{"sim": {"n_runs": 2, "n_frames": 15}}"#;
    let cjson = CString::new(json).unwrap();
    let mut report = ptr::null_mut();
    assert_eq!(unsafe { rigpose_simulate(cjson.as_ptr(), 1, &mut report) }, RigposeStatus::Ok);

    let cfg = rigpose::harness::ExperimentConfig::from_json_str(json).unwrap();
    let core = rigpose::harness::monte_carlo(&cfg, &Default::default()).unwrap();
    let mut expected = Vec::new();
    core.write_csv(&mut expected).unwrap();

    let mut csv = ptr::null_mut();
    assert_eq!(unsafe { rigpose_report_csv(report, &mut csv) }, RigposeStatus::Ok);
    assert_eq!(unsafe { CStr::from_ptr(csv) }.to_bytes(), expected.as_slice());
    unsafe { rigpose_string_free(csv) };

    let rows = unsafe { rigpose_report_row_count(report) };
    assert_eq!(rows, 7);
    assert_eq!(unsafe { rigpose_report_valid_runs(report) }, core.metadata.valid_runs);
    for (i, row) in core.rows.iter().enumerate() {
        let name = unsafe { CStr::from_ptr(rigpose_report_method(report, i)) };
        assert_eq!(name.to_str().unwrap(), row.method.to_string());
        let mut e = [0.0; 6];
        assert_eq!(unsafe { rigpose_report_errors(report, i, e.as_mut_ptr()) }, RigposeStatus::Ok);
        assert_eq!(e, row.errors());
    }
    assert!(unsafe { rigpose_report_method(report, rows) }.is_null());
    let mut e = [0.0; 6];
    assert_eq!(unsafe { rigpose_report_errors(report, rows, e.as_mut_ptr()) }, RigposeStatus::InvalidInput);
    unsafe { rigpose_report_free(report) };
}

#[test]
fn simulate_rejects_bad_configs() {
    let mut report = ptr::null_mut();
    let bad = CString::new(r#"{"sim": {"n_frames": 1}}"#).unwrap();
    assert_eq!(unsafe { rigpose_simulate(bad.as_ptr(), 1, &mut report) }, RigposeStatus::InvalidInput);
    let unknown = CString::new(r#"{"simulation": {}}"#).unwrap();
    assert_eq!(unsafe { rigpose_simulate(unknown.as_ptr(), 1, &mut report) }, RigposeStatus::InvalidInput);
    assert!(report.is_null());
    assert_eq!(unsafe { rigpose_simulate(ptr::null(), 1, ptr::null_mut()) }, RigposeStatus::NullPointer);
}

#[test]
fn version_is_the_package_version() {
    let v = unsafe { CStr::from_ptr(rigpose_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
