//! Pose EKF (12 states, constant velocity) and per-feature structure EKFs (3 states).

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, SMatrix, SVector, Vector2, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    project, projection_jacobian, rot_partials, world_to_camera_k, CameraRig, Pose,
};

pub const STATE_DIM: usize = 12;
pub type StateVector = SVector<f64, STATE_DIM>;
pub type StateMatrix = SMatrix<f64, STATE_DIM, STATE_DIM>;

/// Noise and prior settings shared by the pose and structure filters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterTuning {
    /// Process variance of the pose components (m^2, rad^2 per frame).
    pub q_pose: f64,
    /// Process variance of the velocity components.
    pub q_vel: f64,
    /// Pixel noise standard deviation.
    pub r_px: f64,
    pub p0_pose: f64,
    pub p0_vel: f64,
    pub p0_struct_lateral: f64,
    pub p0_struct_depth: f64,
}

impl Default for FilterTuning {
    fn default() -> Self {
        Self {
            q_pose: 1e-6,
            q_vel: 1e-4,
            r_px: 0.5,
            p0_pose: 1e-4,
            p0_vel: 1e-4,
            p0_struct_lateral: 1e-2,
            p0_struct_depth: 0.25,
        }
    }
}

fn block_diag(pose: f64, vel: f64) -> StateMatrix {
    let mut m = StateMatrix::zeros();
    for i in 0..6 {
        m[(i, i)] = pose;
        m[(i + 6, i + 6)] = vel;
    }
    m
}

impl FilterTuning {
    pub fn process_noise(&self) -> StateMatrix {
        block_diag(self.q_pose, self.q_vel)
    }

    pub fn initial_covariance(&self) -> StateMatrix {
        block_diag(self.p0_pose, self.p0_vel)
    }

    pub fn measurement_variance(&self) -> f64 {
        self.r_px * self.r_px
    }

    /// Prior covariance of a point seeded on a constant-depth plane, in world axes.
    /// `camera_rotation` maps camera axes to world axes.
    pub fn structure_covariance(&self, camera_rotation: &Matrix3<f64>) -> Matrix3<f64> {
        let local = Matrix3::from_diagonal(&Vector3::new(
            self.p0_struct_lateral,
            self.p0_struct_lateral,
            self.p0_struct_depth,
        ));
        camera_rotation * local * camera_rotation.transpose()
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("q_pose", self.q_pose),
            ("q_vel", self.q_vel),
            ("p0_pose", self.p0_pose),
            ("p0_vel", self.p0_vel),
            ("p0_struct_lateral", self.p0_struct_lateral),
            ("p0_struct_depth", self.p0_struct_depth),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("tuning.{name} must be >= 0, got {v}")));
            }
        }
        if !(self.r_px > 0.0 && self.r_px.is_finite()) {
            return Err(Error::Config(format!("tuning.r_px must be > 0, got {}", self.r_px)));
        }
        Ok(())
    }
}

/// State `(tx, ty, tz, alpha, beta, gamma)` followed by their per-frame derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseFilterState {
    pub x: StateVector,
    pub p: StateMatrix,
    pub q: StateMatrix,
    /// Measurement variance per pixel coordinate (px^2).
    pub r_var: f64,
}

impl PoseFilterState {
    pub fn new(pose: &Pose, velocity: &Vector6<f64>, tuning: &FilterTuning) -> Self {
        let mut x = StateVector::zeros();
        x.fixed_rows_mut::<6>(0).copy_from(&pose.to_vector());
        x.fixed_rows_mut::<6>(6).copy_from(velocity);
        Self {
            x,
            p: tuning.initial_covariance(),
            q: tuning.process_noise(),
            r_var: tuning.measurement_variance(),
        }
    }

    pub fn pose(&self) -> Pose {
        Pose::from_vector(&self.x.fixed_rows::<6>(0).into_owned())
    }

    pub fn velocity(&self) -> Vector6<f64> {
        self.x.fixed_rows::<6>(6).into_owned()
    }
}

/// A tracked feature's 3D estimate and its covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureFilterState {
    pub m: Vector3<f64>,
    pub p_m: Matrix3<f64>,
}

/// One pixel observation of a feature with known structure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub camera: usize,
    pub feature: u64,
    pub pixel: Vector2<f64>,
    pub structure: Vector3<f64>,
}

pub type MeasurementBatch = Vec<Measurement>;

/// Result of a pose update plus its normalized innovation squared.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseUpdate {
    pub state: PoseFilterState,
    pub nis: f64,
    /// Degrees of freedom of `nis` (two per measurement).
    pub dof: usize,
}

fn transition() -> StateMatrix {
    let mut a = StateMatrix::identity();
    for i in 0..6 {
        a[(i, i + 6)] = 1.0;
    }
    a
}

/// Constant-velocity prediction.
pub fn pose_predict(state: &PoseFilterState) -> PoseFilterState {
    let a = transition();
    PoseFilterState {
        x: a * state.x,
        p: a * state.p * a.transpose() + state.q,
        q: state.q,
        r_var: state.r_var,
    }
}

/// Predicted pixels for each measurement, stacked `(u0, v0, u1, v1, ...)`.
pub fn predict_pixels(pose: &Pose, batch: &[Measurement], rig: &CameraRig) -> Result<DVector<f64>> {
    let mut z = DVector::zeros(2 * batch.len());
    for (i, meas) in batch.iter().enumerate() {
        let cam = rig.camera(meas.camera)?;
        let p = world_to_camera_k(pose, rig, meas.camera, &meas.structure)?;
        let px = project(&p, &cam.intrinsics)?;
        z[2 * i] = px.x;
        z[2 * i + 1] = px.y;
    }
    Ok(z)
}

/// Analytic Jacobian of the stacked pixel predictions with respect to the state.
/// Velocity columns are zero.
pub fn measurement_jacobian(
    state: &PoseFilterState,
    batch: &[Measurement],
    rig: &CameraRig,
) -> Result<DMatrix<f64>> {
    let pose = state.pose();
    let rt = pose.rotation().transpose();
    let partials = rot_partials(&pose.angles);
    let mut h = DMatrix::zeros(2 * batch.len(), STATE_DIM);
    for (i, meas) in batch.iter().enumerate() {
        let cam = rig.camera(meas.camera)?;
        let rkt = cam.rotation.transpose();
        let rel = meas.structure - pose.translation;
        // P = R_k^T (R^T (M - d) - D_k)
        let p = rkt * (rt * rel - cam.displacement);
        let jp = projection_jacobian(&p, &cam.intrinsics)?;
        let mut dp = SMatrix::<f64, 3, 6>::zeros();
        dp.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-rkt * rt));
        for (j, dr) in partials.iter().enumerate() {
            dp.set_column(3 + j, &(rkt * dr.transpose() * rel));
        }
        let rows = jp * dp;
        h.view_mut((2 * i, 0), (2, 6)).copy_from(&rows);
    }
    Ok(h)
}

/// EKF measurement update with Joseph-form covariance.
///
/// The update is carried out in the 12x12 information-space form
/// `K = P (I + G P)^-1 H^T / r` with `G = H^T H / r`, which equals
/// `P H^T (H P H^T + r I)^-1` for the isotropic pixel noise used here.
pub fn pose_update(
    state: &PoseFilterState,
    batch: &[Measurement],
    rig: &CameraRig,
) -> Result<PoseUpdate> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let r = state.r_var;
    if !(r > 0.0) {
        return Err(Error::SingularInnovationCovariance);
    }
    let observed = DVector::from_iterator(
        2 * batch.len(),
        batch.iter().flat_map(|m| [m.pixel.x, m.pixel.y]),
    );
    let innovation = observed - predict_pixels(&state.pose(), batch, rig)?;
    let h = measurement_jacobian(state, batch, rig)?;

    let ht = h.transpose();
    let g: StateMatrix = StateMatrix::from_iterator((&ht * &h).iter().copied()) / r;
    let hty: StateVector = StateVector::from_iterator((&ht * &innovation).iter().copied());

    let m = StateMatrix::identity() + g * state.p;
    let m_inv = m
        .try_inverse()
        .ok_or(Error::SingularInnovationCovariance)?;
    let p_minv = state.p * m_inv;
    if !p_minv.iter().all(|v| v.is_finite()) {
        return Err(Error::SingularInnovationCovariance);
    }

    let dx = p_minv * hty / r;
    let kh = p_minv * g;
    let i_kh = StateMatrix::identity() - kh;
    let krk = p_minv * g * p_minv.transpose();
    let p_new = i_kh * state.p * i_kh.transpose() + krk;
    let p_new = 0.5 * (p_new + p_new.transpose());

    let nis = innovation.norm_squared() / r - hty.dot(&(p_minv * hty)) / (r * r);

    Ok(PoseUpdate {
        state: PoseFilterState {
            x: state.x + dx,
            p: p_new,
            q: state.q,
            r_var: r,
        },
        nis,
        dof: 2 * batch.len(),
    })
}

/// EKF update of one feature's 3D position from a pixel seen by camera `k` at a
/// known pose.
pub fn structure_update(
    s: &StructureFilterState,
    observed: &Vector2<f64>,
    pose: &Pose,
    rig: &CameraRig,
    k: usize,
    r_var: f64,
) -> Result<StructureFilterState> {
    let cam = rig.camera(k)?;
    let p = world_to_camera_k(pose, rig, k, &s.m)?;
    let predicted = project(&p, &cam.intrinsics)?;
    let dp_dm = cam.rotation.transpose() * pose.rotation().transpose();
    let h = projection_jacobian(&p, &cam.intrinsics)? * dp_dm;
    let innov_cov = h * s.p_m * h.transpose() + Matrix2::identity() * r_var;
    let innov_inv = innov_cov
        .try_inverse()
        .ok_or(Error::SingularInnovationCovariance)?;
    let gain = s.p_m * h.transpose() * innov_inv;
    let i_kh = Matrix3::identity() - gain * h;
    let p_m = i_kh * s.p_m * i_kh.transpose() + gain * gain.transpose() * r_var;
    Ok(StructureFilterState {
        m: s.m + gain * (observed - predicted),
        p_m: 0.5 * (p_m + p_m.transpose()),
    })
}
