//! Noiseless oracles: each compares a computation with an independent reference and
//! reports the worst residual against a fixed tolerance.

use nalgebra::{Matrix3, Vector2, Vector3, Vector4, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ekf::{measurement_jacobian, predict_pixels, FilterTuning, Measurement, PoseFilterState};
use crate::error::Result;
use crate::fusion::{build_scale_system, solve_scales, CameraLocalPose};
use crate::geometry::{
    equivalent_rotation, project, rot_from_angles, rotation_angle, world_to_camera_k, CameraRig,
    Pose,
};
use crate::harness::default_intrinsics;
use crate::pipeline::{lowe_pose, run_stereo_sequence, RunSettings};
use crate::simulate::{gen_scene, render_sequence, stream_rng, SimConfig, Stream, Trajectory};
use crate::stereo::{triangulate, StereoPair};

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub name: &'static str,
    pub residual: f64,
    pub tolerance: f64,
}

impl OracleResult {
    pub fn passed(&self) -> bool {
        self.residual < self.tolerance
    }
}

fn uniform(rng: &mut ChaCha8Rng, half: f64) -> Vector3<f64> {
    Vector3::new(
        rng.random_range(-half..half),
        rng.random_range(-half..half),
        rng.random_range(-half..half),
    )
}

fn random_pose(rng: &mut ChaCha8Rng, t: f64, a: f64) -> Pose {
    Pose::new(uniform(rng, t), uniform(rng, a))
}

/// A point in front of camera `k` at `pose`.
fn point_in_view(rng: &mut ChaCha8Rng, rig: &CameraRig, pose: &Pose, k: usize) -> Vector3<f64> {
    let cam = &rig.cameras()[k];
    let local = Vector3::new(
        rng.random_range(-0.3..0.3),
        rng.random_range(-0.2..0.2),
        rng.random_range(0.5..1.0),
    );
    pose.translation + pose.rotation() * (cam.displacement + cam.rotation * local)
}

/// Largest relative deviation of the analytic measurement Jacobian from central
/// differences, over `configs` random poses, rigs and points.
pub fn jacobian_oracle(configs: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rigs = [
        CameraRig::default_overlapping(default_intrinsics()),
        CameraRig::default_non_overlapping(default_intrinsics()),
    ];
    let tuning = FilterTuning::default();
    let mut worst: f64 = 0.0;
    for i in 0..configs {
        let rig = &rigs[i % 2];
        let pose = random_pose(&mut rng, 0.2, 0.3);
        let batch: Vec<Measurement> = (0..rig.len())
            .map(|k| Measurement {
                camera: k,
                feature: k as u64,
                pixel: Vector2::zeros(),
                structure: point_in_view(&mut rng, rig, &pose, k),
            })
            .collect();
        let state = PoseFilterState::new(&pose, &Vector6::zeros(), &tuning);
        let h = measurement_jacobian(&state, &batch, rig)?;
        let eps = 1e-6;
        for c in 0..6 {
            let mut step = Vector6::zeros();
            step[c] = eps;
            let plus = predict_pixels(&Pose::from_vector(&(pose.to_vector() + step)), &batch, rig)?;
            let minus = predict_pixels(&Pose::from_vector(&(pose.to_vector() - step)), &batch, rig)?;
            let numeric = (plus - minus) / (2.0 * eps);
            let analytic = h.column(c);
            let scale = analytic.amax().max(1.0);
            worst = worst.max((analytic - numeric).amax() / scale);
        }
    }
    Ok(worst)
}

/// Project-then-triangulate round trip at a random pose (meters).
pub fn triangulation_oracle(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rig = CameraRig::default_overlapping(default_intrinsics());
    let pairs = [StereoPair::from_rig(&rig, 0, 1)?, StereoPair::from_rig(&rig, 2, 3)?];
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let pose = random_pose(&mut rng, 0.1, 0.2);
        let pair = &pairs[rng.random_range(0..2)];
        let m = point_in_view(&mut rng, &rig, &pose, pair.cam_a);
        let px = |k: usize| -> Result<Vector2<f64>> {
            project(&world_to_camera_k(&pose, &rig, k, &m)?, &rig.cameras()[k].intrinsics)
        };
        let back = triangulate(&rig, &pose, pair, &px(pair.cam_a)?, &px(pair.cam_b)?)?;
        worst = worst.max((back - m).norm());
    }
    Ok(worst)
}

/// Scale system built from exact local motions; distance of the solution from ones.
pub fn scale_oracle(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rig = CameraRig::default_non_overlapping(default_intrinsics());
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let pose = random_pose(&mut rng, 0.1, 0.2);
        let r = pose.rotation();
        let locals: Vec<CameraLocalPose> = (1..4)
            .map(|k| {
                let cam = &rig.cameras()[k];
                CameraLocalPose {
                    camera: k,
                    translation: cam.rotation.transpose()
                        * (pose.translation + (r - Matrix3::identity()) * cam.displacement),
                    rotation: cam.rotation.transpose() * r * cam.rotation,
                    scale_free: true,
                }
            })
            .collect();
        let sys = build_scale_system(&pose.translation, &r, &locals, &rig)?;
        let sol = solve_scales(&sys)?;
        worst = worst.max((sol.scales - Vector4::repeat(1.0)).amax());
    }
    Ok(worst)
}

/// Change of basis preserves the rotation angle (radians).
pub fn conjugation_oracle(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let r_k = rot_from_angles(&uniform(&mut rng, std::f64::consts::PI));
        let r = rot_from_angles(&uniform(&mut rng, 1.0));
        let conj = equivalent_rotation(&r_k, &r)?;
        worst = worst.max((rotation_angle(&conj) - rotation_angle(&r)).abs());
    }
    Ok(worst)
}

/// Gauss-Newton pose from 50 exact matches, starting 0.01 off in every parameter.
pub fn lowe_oracle(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let intr = default_intrinsics();
    let rig = CameraRig::single(intr);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let truth = random_pose(&mut rng, 0.1, 0.1);
        let matches = (0..50)
            .map(|_| {
                let m = point_in_view(&mut rng, &rig, &truth, 0);
                Ok((m, project(&world_to_camera_k(&truth, &rig, 0, &m)?, &intr)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let signs = Vector6::from_fn(|_, _| if rng.random::<bool>() { 0.01 } else { -0.01 });
        let init = Pose::from_vector(&(truth.to_vector() + signs));
        let sol = lowe_pose(&matches, &intr, &init)?;
        worst = worst.max((sol.pose.to_vector() - truth.to_vector()).amax());
    }
    Ok(worst)
}

/// Noiseless stereo pipeline on a constant-velocity trajectory: worst per-frame
/// `(translation, rotation)` error.
pub fn stereo_tracking_oracle(frames: usize, seed: u64) -> Result<(f64, f64)> {
    let rig = CameraRig::default_overlapping(default_intrinsics());
    let scene = gen_scene(&SimConfig::default(), &mut stream_rng(seed, 0, Stream::Scene));
    let step = Pose::new(Vector3::new(0.0012, -0.001, 0.0015), Vector3::new(0.004, -0.003, 0.005));
    let traj = Trajectory::constant_velocity(frames, &step);
    let seq = render_sequence(&scene, &traj, &rig, 0.0, seed, 0, 0)?;
    let series = run_stereo_sequence(&seq, &rig, &RunSettings::default())?;
    let mut t: f64 = 0.0;
    let mut a: f64 = 0.0;
    for (e, g) in series.poses.iter().zip(&traj.poses) {
        t = t.max((e.translation - g.translation).amax());
        a = a.max((e.angles - g.angles).amax());
    }
    Ok((t, a))
}

pub fn run_all() -> Result<Vec<OracleResult>> {
    let (track_t, track_a) = stereo_tracking_oracle(100, 7)?;
    Ok(vec![
        OracleResult { name: "jacobian", residual: jacobian_oracle(100, 1)?, tolerance: 1e-5 },
        OracleResult { name: "triangulation", residual: triangulation_oracle(2)?, tolerance: 1e-9 },
        OracleResult { name: "scale-system", residual: scale_oracle(3)?, tolerance: 1e-9 },
        OracleResult { name: "change-of-basis", residual: conjugation_oracle(4)?, tolerance: 1e-10 },
        OracleResult { name: "lowe", residual: lowe_oracle(5)?, tolerance: 1e-8 },
        OracleResult { name: "stereo-tracking-translation", residual: track_t, tolerance: 1e-6 },
        OracleResult { name: "stereo-tracking-rotation", residual: track_a, tolerance: 1e-6 },
    ])
}
