//! Overlapping layout: triangulate from stereo pairs, seed with a Gauss-Newton pose,
//! then track with the pose EKF, re-triangulating when features run low.

use super::{
    lowe_pose_rig, FeatureTrack, FrameDiagnostics, Method, PoseEstimateSeries, RunSettings,
    TrackStatus, MIN_FEATURE_DEPTH,
};
use crate::ekf::{pose_predict, pose_update, Measurement, PoseFilterState};
use crate::error::{Error, Result};
use crate::geometry::{world_to_camera_k, CameraRig, Layout, Pose};
use crate::observations::{FrameObservations, Sequence};
use crate::stereo::{epipolar_distance, triangulate, StereoPair};

/// Stereo pairs of an overlapping rig: cameras `(0, 1)`, `(2, 3)`, ...
fn rig_pairs(rig: &CameraRig) -> Result<Vec<StereoPair>> {
    if rig.layout != Layout::Overlapping {
        return Err(Error::InvalidRig("stereo estimation needs an overlapping rig".into()));
    }
    if rig.len() < 2 || !rig.len().is_multiple_of(2) {
        return Err(Error::InvalidRig(format!(
            "an overlapping rig needs an even number of cameras, got {}",
            rig.len()
        )));
    }
    (0..rig.len() / 2)
        .map(|i| StereoPair::from_rig(rig, 2 * i, 2 * i + 1))
        .collect()
}

/// Triangulates every epipolar-consistent match of `obs` with the rig at `pose`.
/// Matches whose rays are parallel or meet behind a camera are skipped.
pub fn triangulate_frame(
    obs: &FrameObservations,
    rig: &CameraRig,
    pose: &Pose,
    pairs: &[StereoPair],
    epipolar_threshold: f64,
) -> Result<Vec<FeatureTrack>> {
    let mut tracks: Vec<FeatureTrack> = Vec::new();
    for pair in pairs {
        for oa in obs.camera(pair.cam_a) {
            let Some(ob) = obs.find(pair.cam_b, oa.feature) else {
                continue;
            };
            if tracks.iter().any(|t| t.id == oa.feature) {
                continue;
            }
            match epipolar_distance(&pair.fundamental, &oa.pixel, &ob.pixel) {
                Ok(dist) if dist <= epipolar_threshold => {}
                Ok(_) | Err(Error::DegenerateLine) => continue,
                Err(e) => return Err(e),
            }
            match triangulate(rig, pose, pair, &oa.pixel, &ob.pixel) {
                Ok(m) => tracks.push(FeatureTrack {
                    id: oa.feature,
                    structure: m,
                    status: TrackStatus::Active,
                    owning_camera: None,
                }),
                Err(Error::ParallelRays | Error::BehindCamera(_)) => continue,
                Err(e) => return Err(e),
            }
        }
    }
    Ok(tracks)
}

fn observed_anywhere(obs: &FrameObservations, id: u64) -> bool {
    obs.cameras.iter().any(|c| c.iter().any(|o| o.feature == id))
}

/// Updates track status against a frame and returns the number of active tracks.
fn mark_tracks(tracks: &mut [FeatureTrack], obs: &FrameObservations) -> usize {
    let mut active = 0;
    for t in tracks.iter_mut() {
        t.status = if observed_anywhere(obs, t.id) {
            active += 1;
            TrackStatus::Active
        } else {
            TrackStatus::Lost
        };
    }
    active
}

/// One measurement per (active track, camera that sees it), skipping features too
/// close to or behind a camera at `pose`.
fn build_batch(
    tracks: &[FeatureTrack],
    obs: &FrameObservations,
    rig: &CameraRig,
    pose: &Pose,
) -> Result<Vec<Measurement>> {
    let mut batch = Vec::new();
    for t in tracks.iter().filter(|t| t.status == TrackStatus::Active) {
        for k in 0..rig.len() {
            let Some(o) = obs.find(k, t.id) else {
                continue;
            };
            if world_to_camera_k(pose, rig, k, &t.structure)?.z <= MIN_FEATURE_DEPTH {
                continue;
            }
            batch.push(Measurement {
                camera: k,
                feature: t.id,
                pixel: o.pixel,
                structure: t.structure,
            });
        }
    }
    Ok(batch)
}

fn velocity_between(a: &Pose, b: &Pose) -> nalgebra::Vector6<f64> {
    b.to_vector() - a.to_vector()
}

/// Runs the stereo estimator over every camera of `rig`. A four-camera rig yields the
/// `4cameras` series; a rig holding only the front pair yields `2cameras`.
pub fn run_stereo_sequence(
    seq: &Sequence,
    rig: &CameraRig,
    settings: &RunSettings,
) -> Result<PoseEstimateSeries> {
    let pairs = rig_pairs(rig)?;
    if seq.n_cameras != rig.len() {
        return Err(Error::InvalidRig(format!(
            "tracks cover {} cameras, rig has {}",
            seq.n_cameras,
            rig.len()
        )));
    }
    let method = if rig.len() == 2 { Method::TwoCameras } else { Method::FourCameras };
    let mut series = PoseEstimateSeries::new(method);
    let Some(first) = seq.frames.first() else {
        return Ok(series);
    };
    let cfg = &settings.pipeline;

    let origin = Pose::identity();
    let mut tracks = triangulate_frame(first, rig, &origin, &pairs, cfg.epipolar_threshold)?;
    if tracks.len() < 4 {
        return Err(Error::InsufficientFeatures(tracks.len()));
    }
    series.push(
        origin,
        FrameDiagnostics {
            features: tracks.len(),
            measurements: tracks.len(),
            ..Default::default()
        },
    );

    let mut state: Option<PoseFilterState> = None;
    for j in 1..seq.len() {
        let obs = &seq.frames[j];
        let features = mark_tracks(&mut tracks, obs);
        let mut redetected = false;
        if features < cfg.redetect_threshold && j >= 2 {
            let prev_pose = series.poses[j - 1];
            tracks = triangulate_frame(&seq.frames[j - 1], rig, &prev_pose, &pairs, cfg.epipolar_threshold)?;
            mark_tracks(&mut tracks, obs);
            redetected = true;
            log::debug!("{method}: re-triangulated {} features at frame {j}", tracks.len());
        }

        let (pose, nis, n_meas) = match &state {
            None => {
                let prev = series.poses[j - 1];
                let batch = build_batch(&tracks, obs, rig, &prev)?;
                let sol = lowe_pose_rig(&batch, rig, &prev)?;
                state = Some(PoseFilterState::new(
                    &sol.pose,
                    &velocity_between(&prev, &sol.pose),
                    &settings.tuning,
                ));
                (sol.pose, None, batch.len())
            }
            Some(s) => {
                let predicted = pose_predict(s);
                let batch = build_batch(&tracks, obs, rig, &predicted.pose())?;
                let upd = pose_update(&predicted, &batch, rig)?;
                let pose = upd.state.pose();
                state = Some(upd.state);
                (pose, Some(upd.nis), batch.len())
            }
        };
        if !pose.to_vector().iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged);
        }
        series.push(
            pose,
            FrameDiagnostics {
                features,
                measurements: n_meas,
                redetected,
                nis,
                ..Default::default()
            },
        );
    }
    Ok(series)
}
