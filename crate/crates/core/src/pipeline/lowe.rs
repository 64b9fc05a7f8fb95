//! Pose from 3D-2D correspondences by damped Gauss-Newton on the reprojection error.

use nalgebra::{DVector, SMatrix, SVector, Vector2, Vector3, Vector6};

use crate::ekf::{measurement_jacobian, predict_pixels, FilterTuning, Measurement, PoseFilterState};
use crate::error::{Error, Result};
use crate::geometry::{CameraRig, Intrinsics, Pose};

pub const MAX_ITERATIONS: usize = 50;
pub const STEP_TOLERANCE: f64 = 1e-10;
/// Consecutive step halvings without a cost decrease before giving up.
pub const MAX_HALVINGS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoweSolution {
    pub pose: Pose,
    /// Root-mean-square pixel residual at the solution.
    pub rms_residual: f64,
    pub iterations: usize,
}

fn cost(pose: &Pose, batch: &[Measurement], rig: &CameraRig, observed: &DVector<f64>) -> f64 {
    match predict_pixels(pose, batch, rig) {
        Ok(z) => (observed - z).norm_squared(),
        Err(_) => f64::INFINITY,
    }
}

/// Single-camera form: `matches` pairs world points with their pixels in the
/// reference camera.
pub fn lowe_pose(
    matches: &[(Vector3<f64>, Vector2<f64>)],
    intr: &Intrinsics,
    init: &Pose,
) -> Result<LoweSolution> {
    let rig = CameraRig::single(*intr);
    let batch: Vec<Measurement> = matches
        .iter()
        .enumerate()
        .map(|(i, (m, p))| Measurement {
            camera: 0,
            feature: i as u64,
            pixel: *p,
            structure: *m,
        })
        .collect();
    lowe_pose_rig(&batch, &rig, init)
}

/// Minimizes the summed squared reprojection error of every measurement, each seen
/// through its own camera of `rig`, over the six reference-pose parameters.
pub fn lowe_pose_rig(batch: &[Measurement], rig: &CameraRig, init: &Pose) -> Result<LoweSolution> {
    if batch.len() < 4 {
        return Err(Error::InsufficientMatches(batch.len()));
    }
    let observed = DVector::from_iterator(
        2 * batch.len(),
        batch.iter().flat_map(|m| [m.pixel.x, m.pixel.y]),
    );
    let tuning = FilterTuning::default();
    let mut pose = *init;
    let mut current = cost(&pose, batch, rig, &observed);
    if !current.is_finite() {
        // Surface the underlying geometry error.
        predict_pixels(&pose, batch, rig)?;
        return Err(Error::Diverged);
    }

    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let state = PoseFilterState::new(&pose, &Vector6::zeros(), &tuning);
        let h = measurement_jacobian(&state, batch, rig)?;
        let j = h.columns(0, 6);
        let residual = &observed - predict_pixels(&pose, batch, rig)?;
        let jtj: SMatrix<f64, 6, 6> = SMatrix::from_iterator((j.transpose() * j).iter().copied());
        let jtr: SVector<f64, 6> = SVector::from_iterator((j.transpose() * &residual).iter().copied());
        let step = jtj.cholesky().ok_or(Error::Diverged)?.solve(&jtr);
        let step_norm = step.norm();
        if !step_norm.is_finite() {
            return Err(Error::Diverged);
        }
        if step_norm < STEP_TOLERANCE {
            break;
        }

        let mut scaled = step;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let trial = Pose::from_vector(&(pose.to_vector() + scaled));
            let trial_cost = cost(&trial, batch, rig, &observed);
            if trial_cost <= current {
                pose = trial;
                current = trial_cost;
                accepted = true;
                break;
            }
            scaled *= 0.5;
        }
        if !accepted {
            // No descent left at machine precision counts as converged.
            if step_norm < 1e-8 {
                break;
            }
            return Err(Error::Diverged);
        }
    }
    Ok(LoweSolution {
        pose,
        rms_residual: (current / (2 * batch.len()) as f64).sqrt(),
        iterations,
    })
}
