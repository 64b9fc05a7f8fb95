//! Rigidity-constraint fusion for four non-overlapping cameras.
//!
//! Every camera estimates its own motion `(l_kj, r_kj)` in its initial frame, up to
//! an unknown monocular scale. Rotations are mapped back to the reference axes and
//! fused by per-axis median. Translations are tied together by the fixed rig
//! offsets: for cameras `k = 2..4`
//!
//! ```text
//! S_j d_j - S_kj R_k l_kj = (I - R_j) D_k
//! ```
//!
//! which stacks into a 9x4 least-squares problem for `(S_j, S_2j, S_3j, S_4j)`.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3, Vector4};

use crate::error::{Error, Result};
use crate::geometry::{angles_from_rot, rot_from_angles, CameraRig, Pose};

/// `cond(A^T A)` above this is treated as rank deficient.
pub const MAX_CONDITION: f64 = 1e12;
/// Camera-1 translations shorter than this carry no scale information (meters).
pub const MIN_TRANSLATION: f64 = 1e-5;
/// Right-hand sides shorter than this mean the frame has no usable rotation (meters).
pub const MIN_RHS_NORM: f64 = 1e-9;

/// Motion of camera `k` expressed in its own initial frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraLocalPose {
    pub camera: usize,
    /// `l_kj`
    pub translation: Vector3<f64>,
    /// `r_kj`
    pub rotation: Matrix3<f64>,
    /// Set for monocular estimates whose translation is known only up to scale.
    pub scale_free: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleSystem {
    pub a: SMatrix<f64, 9, 4>,
    pub b: SVector<f64, 9>,
    /// Condition number of `A^T A`.
    pub condition: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleSolution {
    pub scales: Vector4<f64>,
    /// `||A s - b||`
    pub residual: f64,
}

/// Per-axis median of the decomposed angles. An even count averages the two middle
/// values.
pub fn fuse_rotation_median(rotations: &[Matrix3<f64>]) -> Result<Vector3<f64>> {
    if rotations.is_empty() {
        return Err(Error::MissingCamera(0));
    }
    let angles = rotations
        .iter()
        .map(angles_from_rot)
        .collect::<Result<Vec<_>>>()?;
    Ok(Vector3::from_fn(|axis, _| {
        median(angles.iter().map(|a| a[axis]).collect())
    }))
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn condition_of_normal_matrix(a: &SMatrix<f64, 9, 4>) -> f64 {
    let sv = a.singular_values();
    let (max, min) = (sv.max(), sv.min());
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        (max / min).powi(2)
    }
}

/// Stacks the scale constraints of cameras 2, 3 and 4 (rows 1-3, 4-6, 7-9).
pub fn build_scale_system(
    d_j: &Vector3<f64>,
    r_j: &Matrix3<f64>,
    locals: &[CameraLocalPose],
    rig: &CameraRig,
) -> Result<ScaleSystem> {
    if locals.len() != 3 {
        return Err(Error::WrongCameraCount(locals.len()));
    }
    let mut a = SMatrix::<f64, 9, 4>::zeros();
    let mut b = SVector::<f64, 9>::zeros();
    let lever = Matrix3::identity() - r_j;
    for (slot, local) in locals.iter().enumerate() {
        let cam = rig.camera(local.camera)?;
        let moved = cam.rotation * local.translation;
        let rhs = lever * cam.displacement;
        for axis in 0..3 {
            let row = 3 * slot + axis;
            a[(row, 0)] = d_j[axis];
            a[(row, slot + 1)] = -moved[axis];
            b[row] = rhs[axis];
        }
    }
    Ok(ScaleSystem {
        condition: condition_of_normal_matrix(&a),
        a,
        b,
    })
}

/// Least-squares scales, computed through an SVD of `A` rather than by forming
/// `(A^T A)^-1`.
pub fn solve_scales(sys: &ScaleSystem) -> Result<ScaleSolution> {
    let d_norm = sys.a.column(0).norm() / 3f64.sqrt();
    if d_norm < MIN_TRANSLATION
        || !(sys.condition < MAX_CONDITION)
        || sys.b.norm() < MIN_RHS_NORM
    {
        return Err(Error::IllConditioned(sys.condition));
    }
    let svd = sys.a.svd(true, true);
    let scales = svd
        .solve(&sys.b, 0.0)
        .map_err(|_| Error::IllConditioned(sys.condition))?;
    let residual = (sys.a * scales - sys.b).norm();
    Ok(ScaleSolution { scales, residual })
}

/// Fused reference pose for one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusedPose {
    pub pose: Pose,
    /// Scales used for the translation: freshly solved, or carried over.
    pub scales: Vector4<f64>,
    pub ill_conditioned: bool,
    pub condition: f64,
    pub residual: Option<f64>,
}

/// Combines four per-camera motions into one reference pose: median rotation and
/// `S_j d_j` translation, falling back to `prev_scales` when the scale system is
/// degenerate.
pub fn fuse_pose(
    per_camera: &[(CameraLocalPose, Matrix3<f64>)],
    rig: &CameraRig,
    prev_scales: &Vector4<f64>,
) -> Result<FusedPose> {
    let mut ordered: [Option<&(CameraLocalPose, Matrix3<f64>)>; 4] = [None; 4];
    for entry in per_camera {
        if let Some(slot) = ordered.get_mut(entry.0.camera) {
            *slot = Some(entry);
        }
    }
    let mut entries = Vec::with_capacity(4);
    for (k, slot) in ordered.iter().enumerate() {
        entries.push(slot.ok_or(Error::MissingCamera(k))?);
    }

    let rotations: Vec<Matrix3<f64>> = entries.iter().map(|e| e.1).collect();
    let angles = fuse_rotation_median(&rotations)?;
    let r_j = rot_from_angles(&angles);
    let d_j = entries[0].0.translation;
    let locals: Vec<CameraLocalPose> = entries[1..].iter().map(|e| e.0).collect();
    let system = build_scale_system(&d_j, &r_j, &locals, rig)?;

    let (scales, ill_conditioned, residual) = match solve_scales(&system) {
        Ok(sol) => (sol.scales, false, Some(sol.residual)),
        Err(Error::IllConditioned(_)) => (*prev_scales, true, None),
        Err(e) => return Err(e),
    };
    Ok(FusedPose {
        pose: Pose::new(scales[0] * d_j, angles),
        scales,
        ill_conditioned,
        condition: system.condition,
        residual,
    })
}
