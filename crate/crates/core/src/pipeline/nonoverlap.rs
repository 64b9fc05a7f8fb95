//! Non-overlapping layout: one monocular filter chain per camera, fused per frame
//! through the rig's rigidity.

use std::collections::HashMap;

use nalgebra::{Matrix3, Vector3, Vector4};

use super::{
    lowe_pose_rig, FeatureTrack, FrameDiagnostics, Method, PoseEstimateSeries,
    RunSettings, TrackStatus, MIN_FEATURE_DEPTH,
};
use crate::ekf::{
    pose_predict, pose_update, structure_update, FilterTuning, Measurement, PoseFilterState,
    StructureFilterState,
};
use crate::error::{Error, Result};
use crate::fusion::{fuse_pose, CameraLocalPose};
use crate::geometry::{
    equivalent_rotation, world_to_camera, CameraRig, Intrinsics, Layout, Pose,
};
use crate::observations::{Observation, Sequence};

/// How a monocular chain places features it has not seen before.
#[derive(Debug, Clone, PartialEq)]
pub enum StructureSeed {
    /// On the plane at this depth in front of the camera.
    Orthographic { depth: f64 },
    /// At known positions, in the camera's initial frame. Features without an entry
    /// fall back to the orthographic plane at `fallback_depth`.
    Known {
        points: HashMap<u64, Vector3<f64>>,
        fallback_depth: f64,
    },
}

impl StructureSeed {
    fn place(&self, pose: &Pose, obs: &Observation, intr: &Intrinsics) -> Vector3<f64> {
        let depth = match self {
            StructureSeed::Orthographic { depth } => *depth,
            StructureSeed::Known { points, fallback_depth } => {
                if let Some(m) = points.get(&obs.feature) {
                    return *m;
                }
                *fallback_depth
            }
        };
        pose.translation + pose.rotation() * (intr.unproject(&obs.pixel) * depth)
    }
}

/// Output of one camera's chain: its own motion in its initial frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraChain {
    pub camera: usize,
    /// `(l_kj, r_kj)` per frame.
    pub local: Vec<Pose>,
    pub diagnostics: Vec<FrameDiagnostics>,
}

struct Feature {
    track: FeatureTrack,
    filter: StructureFilterState,
}

fn seed_features(
    observations: &[Observation],
    keep: &HashMap<u64, Feature>,
    pose: &Pose,
    seed: &StructureSeed,
    intr: &Intrinsics,
    tuning: &FilterTuning,
    camera: usize,
) -> HashMap<u64, Feature> {
    let cov = tuning.structure_covariance(&pose.rotation());
    observations
        .iter()
        .map(|o| {
            // Survivors keep their estimate; every covariance restarts from the prior.
            let m = match keep.get(&o.feature) {
                Some(f) => f.filter.m,
                None => seed.place(pose, o, intr),
            };
            (
                o.feature,
                Feature {
                    track: FeatureTrack {
                        id: o.feature,
                        structure: m,
                        status: TrackStatus::Active,
                        owning_camera: Some(camera),
                    },
                    filter: StructureFilterState { m, p_m: cov },
                },
            )
        })
        .collect()
}

fn mark(features: &mut HashMap<u64, Feature>, observations: &[Observation]) -> usize {
    let mut active = 0;
    for f in features.values_mut() {
        f.track.status = if observations.iter().any(|o| o.feature == f.track.id) {
            active += 1;
            TrackStatus::Active
        } else {
            TrackStatus::Lost
        };
    }
    active
}

fn batch_for(
    features: &HashMap<u64, Feature>,
    observations: &[Observation],
    pose: &Pose,
) -> Vec<Measurement> {
    observations
        .iter()
        .filter_map(|o| {
            let f = features.get(&o.feature)?;
            if world_to_camera(pose, &f.filter.m).z <= MIN_FEATURE_DEPTH {
                return None;
            }
            Some(Measurement {
                camera: 0,
                feature: o.feature,
                pixel: o.pixel,
                structure: f.filter.m,
            })
        })
        .collect()
}

fn refine_structure(
    features: &mut HashMap<u64, Feature>,
    observations: &[Observation],
    pose: &Pose,
    single: &CameraRig,
    r_var: f64,
) {
    for o in observations {
        let Some(f) = features.get_mut(&o.feature) else {
            continue;
        };
        // A feature that cannot be projected this frame simply keeps its estimate.
        if let Ok(next) = structure_update(&f.filter, &o.pixel, pose, single, 0, r_var) {
            if next.m.iter().all(|v| v.is_finite()) {
                f.filter = next;
                f.track.structure = next.m;
            }
        }
    }
}

/// Runs the monocular chain of camera `k` alone, in that camera's initial frame.
pub fn run_camera_chain(
    seq: &Sequence,
    rig: &CameraRig,
    k: usize,
    settings: &RunSettings,
    seed: &StructureSeed,
) -> Result<CameraChain> {
    let intr = rig.camera(k)?.intrinsics;
    let single = CameraRig::single(intr);
    let tuning = &settings.tuning;
    let r_var = tuning.measurement_variance();
    let threshold = settings.pipeline.redetect_threshold;
    let mut chain = CameraChain {
        camera: k,
        local: Vec::new(),
        diagnostics: Vec::new(),
    };
    let Some(first) = seq.frames.first() else {
        return Ok(chain);
    };

    let origin = Pose::identity();
    let mut features = seed_features(first.camera(k), &HashMap::new(), &origin, seed, &intr, tuning, k);
    chain.local.push(origin);
    chain.diagnostics.push(FrameDiagnostics {
        frame: 0,
        features: features.len(),
        measurements: features.len(),
        ..Default::default()
    });

    let mut state: Option<PoseFilterState> = None;
    for j in 1..seq.len() {
        let obs = seq.frames[j].camera(k);
        let active = mark(&mut features, obs);
        let mut redetected = false;
        if active < threshold && j >= 2 {
            let prev_pose = chain.local[j - 1];
            features = seed_features(seq.frames[j - 1].camera(k), &features, &prev_pose, seed, &intr, tuning, k);
            mark(&mut features, obs);
            redetected = true;
            log::debug!("cam{}: re-detected {} features at frame {j}", k + 1, features.len());
        }

        let (pose, nis, n_meas) = match &state {
            None => {
                let prev = chain.local[j - 1];
                let batch = batch_for(&features, obs, &prev);
                let sol = lowe_pose_rig(&batch, &single, &prev)?;
                state = Some(PoseFilterState::new(
                    &sol.pose,
                    &(sol.pose.to_vector() - prev.to_vector()),
                    tuning,
                ));
                (sol.pose, None, batch.len())
            }
            Some(s) => {
                let predicted = pose_predict(s);
                let batch = batch_for(&features, obs, &predicted.pose());
                let upd = pose_update(&predicted, &batch, &single)?;
                let pose = upd.state.pose();
                state = Some(upd.state);
                (pose, Some(upd.nis), batch.len())
            }
        };
        if !pose.to_vector().iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged);
        }
        refine_structure(&mut features, obs, &pose, &single, r_var);
        chain.local.push(pose);
        chain.diagnostics.push(FrameDiagnostics {
            frame: j,
            features: active,
            measurements: n_meas,
            redetected,
            nis,
            ..Default::default()
        });
    }
    Ok(chain)
}

/// Reference pose implied by camera `k`'s local motion, with the local translation
/// taken at face value.
fn reference_from_local(rig: &CameraRig, k: usize, local: &Pose) -> Result<(Pose, Matrix3<f64>)> {
    let cam = rig.camera(k)?;
    let r = equivalent_rotation(&cam.rotation, &local.rotation())?;
    let d = cam.rotation * local.translation + (Matrix3::identity() - r) * cam.displacement;
    Ok((Pose::from_rotation(d, &r)?, r))
}

/// Runs all four chains and returns the series `cam1..cam4` followed by `RC`.
/// `seeds[k]` places camera `k`'s new features.
pub fn run_nonoverlap_sequence(
    seq: &Sequence,
    rig: &CameraRig,
    settings: &RunSettings,
    seeds: &[StructureSeed],
) -> Result<Vec<PoseEstimateSeries>> {
    if rig.layout != Layout::NonOverlapping || rig.len() != 4 {
        return Err(Error::InvalidRig("need a non-overlapping rig of four cameras".into()));
    }
    if seq.n_cameras != rig.len() {
        return Err(Error::InvalidRig(format!(
            "tracks cover {} cameras, rig has {}",
            seq.n_cameras,
            rig.len()
        )));
    }
    if seeds.len() != 4 {
        return Err(Error::WrongCameraCount(seeds.len()));
    }
    let chains = (0..4)
        .map(|k| run_camera_chain(seq, rig, k, settings, &seeds[k]))
        .collect::<Result<Vec<_>>>()?;

    let mut out: Vec<PoseEstimateSeries> = (1..=4u8).map(|k| PoseEstimateSeries::new(Method::Cam(k))).collect();
    let mut rc = PoseEstimateSeries::new(Method::Rc);
    let mut scales = Vector4::repeat(1.0);
    for j in 0..seq.len() {
        let mut per_camera = Vec::with_capacity(4);
        for (k, chain) in chains.iter().enumerate() {
            let local = chain.local.get(j).ok_or(Error::MissingCamera(k))?;
            let (reference, r) = reference_from_local(rig, k, local)?;
            out[k].push(reference, chain.diagnostics[j].clone());
            per_camera.push((
                CameraLocalPose {
                    camera: k,
                    translation: local.translation,
                    rotation: local.rotation(),
                    scale_free: true,
                },
                r,
            ));
        }
        let features: usize = chains.iter().map(|c| c.diagnostics[j].features).sum();
        let measurements: usize = chains.iter().map(|c| c.diagnostics[j].measurements).sum();
        let redetected = chains.iter().any(|c| c.diagnostics[j].redetected);
        if j == 0 {
            rc.push(
                Pose::identity(),
                FrameDiagnostics {
                    features,
                    measurements,
                    scales: Some(scales.into()),
                    ..Default::default()
                },
            );
            continue;
        }
        let fused = fuse_pose(&per_camera, rig, &scales)?;
        scales = fused.scales;
        rc.push(
            fused.pose,
            FrameDiagnostics {
                features,
                measurements,
                redetected,
                scales: Some(fused.scales.into()),
                ill_conditioned: Some(fused.ill_conditioned),
                condition: Some(fused.condition),
                ..Default::default()
            },
        );
    }
    out.push(rc);
    Ok(out)
}

/// Known-structure seeds: world points expressed in each camera's initial frame.
pub fn known_structure_seeds(
    rig: &CameraRig,
    points: &[crate::geometry::ScenePoint],
    fallback_depth: f64,
) -> Result<Vec<StructureSeed>> {
    (0..rig.len())
        .map(|k| {
            let origin = Pose::identity();
            let mut map = HashMap::with_capacity(points.len());
            for p in points {
                map.insert(
                    p.id,
                    crate::geometry::world_to_camera_k(&origin, rig, k, &p.position)?,
                );
            }
            Ok(StructureSeed::Known {
                points: map,
                fallback_depth,
            })
        })
        .collect()
}

/// The same orthographic seed for every camera.
pub fn orthographic_seeds(depth: f64) -> Vec<StructureSeed> {
    vec![StructureSeed::Orthographic { depth }; 4]
}
