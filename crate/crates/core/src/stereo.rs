//! Calibrated stereo: fundamental matrices from rig extrinsics, epipolar gating and
//! midpoint triangulation.

use nalgebra::{Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{world_to_camera_k, CameraRig, Pose};

/// Default epipolar inlier gate (pixels).
pub const DEFAULT_EPIPOLAR_THRESHOLD: f64 = 2.0;

const MIN_BASELINE: f64 = 1e-9;
const MIN_RAY_ANGLE: f64 = 1e-8;

/// Maps homogeneous pixels of camera `a` to epipolar lines in camera `b`.
/// Normalized to unit Frobenius norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalMatrix(pub Matrix3<f64>);

impl FundamentalMatrix {
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// `p_b^T F p_a`.
    pub fn algebraic_residual(&self, p_a: &Vector2<f64>, p_b: &Vector2<f64>) -> f64 {
        p_b.push(1.0).dot(&(self.0 * p_a.push(1.0)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StereoPair {
    pub cam_a: usize,
    pub cam_b: usize,
    pub fundamental: FundamentalMatrix,
    pub baseline: f64,
}

impl StereoPair {
    pub fn from_rig(rig: &CameraRig, cam_a: usize, cam_b: usize) -> Result<Self> {
        let fundamental = fundamental_from_calib(rig, cam_a, cam_b)?;
        let baseline = (rig.camera(cam_a)?.displacement - rig.camera(cam_b)?.displacement).norm();
        Ok(Self {
            cam_a,
            cam_b,
            fundamental,
            baseline,
        })
    }
}

fn skew(t: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -t.z, t.y, t.z, 0.0, -t.x, -t.y, t.x, 0.0)
}

fn inverse_k(fx: f64, fy: f64, cx: f64, cy: f64) -> Matrix3<f64> {
    Matrix3::new(1.0 / fx, 0.0, -cx / fx, 0.0, 1.0 / fy, -cy / fy, 0.0, 0.0, 1.0)
}

/// `F = K_b^-T [t]x R K_a^-1` from the relative extrinsics of cameras `a` and `b`.
pub fn fundamental_from_calib(rig: &CameraRig, a: usize, b: usize) -> Result<FundamentalMatrix> {
    let cam_a = rig.camera(a)?;
    let cam_b = rig.camera(b)?;
    let offset = cam_a.displacement - cam_b.displacement;
    if a == b || offset.norm() < MIN_BASELINE {
        return Err(Error::CoincidentCenters(offset.norm()));
    }
    // p_b = R_ab p_a + t_ab in camera coordinates.
    let r_ab = cam_b.rotation.transpose() * cam_a.rotation;
    let t_ab = cam_b.rotation.transpose() * offset;
    let essential = skew(&t_ab) * r_ab;
    let ia = &cam_a.intrinsics;
    let ib = &cam_b.intrinsics;
    let f = inverse_k(ib.fx, ib.fy, ib.cx, ib.cy).transpose()
        * essential
        * inverse_k(ia.fx, ia.fy, ia.cx, ia.cy);
    Ok(FundamentalMatrix(f / f.norm()))
}

/// Distance (pixels) from `p_b` to the epipolar line of `p_a`.
pub fn epipolar_distance(
    f: &FundamentalMatrix,
    p_a: &Vector2<f64>,
    p_b: &Vector2<f64>,
) -> Result<f64> {
    let line = f.0 * p_a.push(1.0);
    if line.x.abs() < 1e-15 && line.y.abs() < 1e-15 {
        return Err(Error::DegenerateLine);
    }
    Ok(line.dot(&p_b.push(1.0)).abs() / line.x.hypot(line.y))
}

/// Midpoint of the common perpendicular of the two viewing rays, cast from the
/// camera poses implied by `pose`.
pub fn triangulate(
    rig: &CameraRig,
    pose: &Pose,
    pair: &StereoPair,
    p_a: &Vector2<f64>,
    p_b: &Vector2<f64>,
) -> Result<Vector3<f64>> {
    let r = pose.rotation();
    let ray = |k: usize, px: &Vector2<f64>| -> Result<(Vector3<f64>, Vector3<f64>)> {
        let cam = rig.camera(k)?;
        let center = pose.translation + r * cam.displacement;
        let dir = r * cam.rotation * cam.intrinsics.unproject(px);
        Ok((center, dir))
    };
    let (ca, wa) = ray(pair.cam_a, p_a)?;
    let (cb, wb) = ray(pair.cam_b, p_b)?;

    let cross = wa.cross(&wb);
    if cross.norm() < MIN_RAY_ANGLE * wa.norm() * wb.norm() {
        return Err(Error::ParallelRays);
    }
    let w0 = ca - cb;
    let (aa, ab, bb) = (wa.dot(&wa), wa.dot(&wb), wb.dot(&wb));
    let (da, db) = (wa.dot(&w0), wb.dot(&w0));
    let denom = aa * bb - ab * ab;
    let s = (ab * db - bb * da) / denom;
    let t = (aa * db - ab * da) / denom;
    let m = 0.5 * ((ca + s * wa) + (cb + t * wb));

    for k in [pair.cam_a, pair.cam_b] {
        let depth = world_to_camera_k(pose, rig, k, &m)?.z;
        if depth <= 0.0 {
            return Err(Error::BehindCamera(depth));
        }
    }
    Ok(m)
}
