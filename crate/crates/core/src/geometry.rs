//! Rotation parameterization, rigid-rig coordinate transforms and pinhole projection.
//!
//! Angles are `(alpha, beta, gamma)` about the reference axes `x1, y1, z1` and always
//! compose as `R = Rx(alpha) * Ry(beta) * Rz(gamma)`. Every other module goes through
//! [`rot_from_angles`] / [`angles_from_rot`] so the convention lives in one place.

use std::path::Path;

use nalgebra::{Matrix2x3, Matrix3, Vector2, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Projection refuses points closer than this to the image plane (meters).
pub const Z_MIN: f64 = 1e-6;

const ORTHONORMAL_TOL: f64 = 1e-8;
const GIMBAL_TOL: f64 = 1e-6;

/// Pose of the reference camera with respect to the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub translation: Vector3<f64>,
    /// `(alpha, beta, gamma)` in radians.
    pub angles: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(translation: Vector3<f64>, angles: Vector3<f64>) -> Self {
        Self {
            translation,
            angles,
        }
    }

    pub fn identity() -> Self {
        Self::new(Vector3::zeros(), Vector3::zeros())
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        rot_from_angles(&self.angles)
    }

    /// `(tx, ty, tz, alpha, beta, gamma)`.
    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.translation.x,
            self.translation.y,
            self.translation.z,
            self.angles.x,
            self.angles.y,
            self.angles.z,
        )
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self::new(
            Vector3::new(v[0], v[1], v[2]),
            Vector3::new(v[3], v[4], v[5]),
        )
    }

    pub fn from_rotation(translation: Vector3<f64>, rotation: &Matrix3<f64>) -> Result<Self> {
        Ok(Self::new(translation, angles_from_rot(rotation)?))
    }
}

pub fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(b: f64) -> Matrix3<f64> {
    let (s, c) = b.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(g: f64) -> Matrix3<f64> {
    let (s, c) = g.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn drot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(0.0, 0.0, 0.0, 0.0, -s, -c, 0.0, c, -s)
}

fn drot_y(b: f64) -> Matrix3<f64> {
    let (s, c) = b.sin_cos();
    Matrix3::new(-s, 0.0, c, 0.0, 0.0, 0.0, -c, 0.0, -s)
}

fn drot_z(g: f64) -> Matrix3<f64> {
    let (s, c) = g.sin_cos();
    Matrix3::new(-s, -c, 0.0, c, -s, 0.0, 0.0, 0.0, 0.0)
}

/// `Rx(alpha) * Ry(beta) * Rz(gamma)`.
pub fn rot_from_angles(angles: &Vector3<f64>) -> Matrix3<f64> {
    rot_x(angles.x) * rot_y(angles.y) * rot_z(angles.z)
}

/// Partial derivatives of [`rot_from_angles`] with respect to alpha, beta and gamma.
pub fn rot_partials(angles: &Vector3<f64>) -> [Matrix3<f64>; 3] {
    let (rx, ry, rz) = (rot_x(angles.x), rot_y(angles.y), rot_z(angles.z));
    [
        drot_x(angles.x) * ry * rz,
        rx * drot_y(angles.y) * rz,
        rx * ry * drot_z(angles.z),
    ]
}

/// Largest absolute entry of `R^T R - I`, or infinity for an improper matrix.
pub fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    if !r.iter().all(|v| v.is_finite()) {
        return f64::INFINITY;
    }
    let err = (r.transpose() * r - Matrix3::identity()).amax();
    if r.determinant() <= 0.0 {
        f64::INFINITY
    } else {
        err
    }
}

pub(crate) fn check_rotation(r: &Matrix3<f64>) -> Result<()> {
    let err = orthonormality_error(r);
    if err > ORTHONORMAL_TOL {
        return Err(Error::NonOrthonormalInput(err));
    }
    Ok(())
}

/// Inverse of [`rot_from_angles`].
pub fn angles_from_rot(r: &Matrix3<f64>) -> Result<Vector3<f64>> {
    check_rotation(r)?;
    let cos_beta = r[(0, 0)].hypot(r[(0, 1)]);
    if cos_beta < GIMBAL_TOL {
        return Err(Error::GimbalProximity(cos_beta));
    }
    let alpha = (-r[(1, 2)]).atan2(r[(2, 2)]);
    let beta = r[(0, 2)].atan2(cos_beta);
    let gamma = (-r[(0, 1)]).atan2(r[(0, 0)]);
    Ok(Vector3::new(alpha, beta, gamma))
}

/// Reference-camera coordinates of a world point: `R^T (M - d)`.
pub fn world_to_camera(pose: &Pose, m: &Vector3<f64>) -> Vector3<f64> {
    pose.rotation().transpose() * (m - pose.translation)
}

/// Coordinates of a world point in camera `k` of the rig: `R_k^T R^T (M - d - R D_k)`.
pub fn world_to_camera_k(
    pose: &Pose,
    rig: &CameraRig,
    k: usize,
    m: &Vector3<f64>,
) -> Result<Vector3<f64>> {
    let cam = rig.camera(k)?;
    let r = pose.rotation();
    Ok(cam.rotation.transpose() * (r.transpose() * (m - pose.translation - r * cam.displacement)))
}

/// Pinhole projection of camera-frame coordinates to pixels.
pub fn project(p: &Vector3<f64>, intr: &Intrinsics) -> Result<Vector2<f64>> {
    if !(p.z > Z_MIN) {
        return Err(Error::BehindCamera(p.z));
    }
    Ok(Vector2::new(
        intr.fx * p.x / p.z + intr.cx,
        intr.fy * p.y / p.z + intr.cy,
    ))
}

/// Jacobian of [`project`] with respect to the camera-frame point.
pub fn projection_jacobian(p: &Vector3<f64>, intr: &Intrinsics) -> Result<Matrix2x3<f64>> {
    if !(p.z > Z_MIN) {
        return Err(Error::BehindCamera(p.z));
    }
    let iz = 1.0 / p.z;
    Ok(Matrix2x3::new(
        intr.fx * iz,
        0.0,
        -intr.fx * p.x * iz * iz,
        0.0,
        intr.fy * iz,
        -intr.fy * p.y * iz * iz,
    ))
}

/// Change of basis `R_k r R_k^T`: a rotation measured in camera `k`'s initial frame,
/// re-expressed about the reference axes.
pub fn equivalent_rotation(r_k: &Matrix3<f64>, r_local: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    check_rotation(r_k)?;
    check_rotation(r_local)?;
    Ok(r_k * r_local * r_k.transpose())
}

/// Rotation angle (radians) of a rotation matrix.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    // acos is poorly conditioned near 0; atan2 of the skew part is not.
    let skew = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    );
    (0.5 * skew.norm()).atan2(0.5 * (r.trace() - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let intr = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    /// Principal point at the image center.
    pub fn centered(focal_px: f64, width: u32, height: u32) -> Result<Self> {
        Self::new(
            focal_px,
            focal_px,
            f64::from(width) / 2.0,
            f64::from(height) / 2.0,
            width,
            height,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(Error::InvalidIntrinsics(format!(
                "focal lengths must be positive, got ({}, {})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidIntrinsics("resolution must be nonzero".into()));
        }
        let inside = |c: f64, n: u32| (0.0..=f64::from(n)).contains(&c);
        if !inside(self.cx, self.width) || !inside(self.cy, self.height) {
            return Err(Error::InvalidIntrinsics(format!(
                "principal point ({}, {}) outside {}x{}",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn contains(&self, px: &Vector2<f64>) -> bool {
        px.x >= 0.0
            && px.y >= 0.0
            && px.x < f64::from(self.width)
            && px.y < f64::from(self.height)
    }

    /// Normalized viewing ray `(x/z, y/z, 1)` through a pixel.
    pub fn unproject(&self, px: &Vector2<f64>) -> Vector3<f64> {
        Vector3::new((px.x - self.cx) / self.fx, (px.y - self.cy) / self.fy, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    Overlapping,
    NonOverlapping,
}

/// One camera rigidly mounted on the robot.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    /// `D_k`: displacement from camera 1, world axes, meters.
    pub displacement: Vector3<f64>,
    /// `R_k`: orientation with respect to the world axes.
    pub rotation: Matrix3<f64>,
    pub intrinsics: Intrinsics,
    /// Angles `rotation` was built from, kept for serialization.
    pub angles: Vector3<f64>,
}

impl Camera {
    pub fn new(displacement: Vector3<f64>, angles: Vector3<f64>, intrinsics: Intrinsics) -> Self {
        Self {
            displacement,
            rotation: rot_from_angles(&angles),
            intrinsics,
            angles,
        }
    }
}

/// Fixed extrinsics and intrinsics of every camera on the robot. Index 0 is camera 1,
/// the reference.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraRig {
    cameras: Vec<Camera>,
    pub layout: Layout,
}

impl CameraRig {
    pub fn new(cameras: Vec<Camera>, layout: Layout) -> Result<Self> {
        let first = cameras
            .first()
            .ok_or_else(|| Error::InvalidRig("rig has no cameras".into()))?;
        if first.displacement != Vector3::zeros() || first.rotation != Matrix3::identity() {
            return Err(Error::InvalidRig(
                "camera 1 must sit at the origin with identity rotation".into(),
            ));
        }
        for (i, cam) in cameras.iter().enumerate() {
            cam.intrinsics.validate()?;
            let err = orthonormality_error(&cam.rotation);
            if err > 1e-12 {
                return Err(Error::InvalidRig(format!(
                    "camera {} rotation is not orthonormal ({err:.3e})",
                    i + 1
                )));
            }
            if !cam.displacement.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidRig(format!(
                    "camera {} displacement is not finite",
                    i + 1
                )));
            }
        }
        Ok(Self { cameras, layout })
    }

    /// A rig made of one camera at the origin; used for per-camera local filters.
    pub fn single(intrinsics: Intrinsics) -> Self {
        Self {
            cameras: vec![Camera::new(Vector3::zeros(), Vector3::zeros(), intrinsics)],
            layout: Layout::NonOverlapping,
        }
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    pub fn cameras(&self) -> &[Camera] {
        &self.cameras
    }

    pub fn camera(&self, k: usize) -> Result<&Camera> {
        self.cameras.get(k).ok_or(Error::InvalidCameraIndex {
            index: k,
            count: self.cameras.len(),
        })
    }

    /// Two back-to-back stereo pairs: cameras 1-2 face forward, cameras 3-4 face
    /// backward. Camera 1 and camera 3 sit where the non-overlapping rig has them.
    pub fn default_overlapping(intr: Intrinsics) -> Self {
        let half_turn = Vector3::new(0.0, std::f64::consts::PI, 0.0);
        let back = Vector3::new(0.0, 0.0, -BASELINE);
        let back_partner = back + rot_from_angles(&half_turn) * Vector3::new(BASELINE, 0.0, 0.0);
        Self {
            cameras: vec![
                Camera::new(Vector3::zeros(), Vector3::zeros(), intr),
                Camera::new(Vector3::new(BASELINE, 0.0, 0.0), Vector3::zeros(), intr),
                Camera::new(back, half_turn, intr),
                Camera::new(back_partner, half_turn, intr),
            ],
            layout: Layout::Overlapping,
        }
    }

    /// Four cameras facing front, right, back and left. Every camera is `BASELINE`
    /// from camera 1; the front-back and left-right axes are perpendicular.
    pub fn default_non_overlapping(intr: Intrinsics) -> Self {
        use std::f64::consts::{FRAC_PI_2, PI};
        let side_z = -BASELINE * (3.0f64).sqrt() / 2.0;
        let side_x = BASELINE / 2.0;
        Self {
            cameras: vec![
                Camera::new(Vector3::zeros(), Vector3::zeros(), intr),
                Camera::new(
                    Vector3::new(side_x, 0.0, side_z),
                    Vector3::new(0.0, FRAC_PI_2, 0.0),
                    intr,
                ),
                Camera::new(
                    Vector3::new(0.0, 0.0, -BASELINE),
                    Vector3::new(0.0, PI, 0.0),
                    intr,
                ),
                Camera::new(
                    Vector3::new(-side_x, 0.0, side_z),
                    Vector3::new(0.0, -FRAC_PI_2, 0.0),
                    intr,
                ),
            ],
            layout: Layout::NonOverlapping,
        }
    }

    pub fn to_spec(&self) -> RigSpec {
        RigSpec {
            cameras: self
                .cameras
                .iter()
                .map(|c| CameraSpec {
                    displacement: [c.displacement.x, c.displacement.y, c.displacement.z],
                    angles: [c.angles.x, c.angles.y, c.angles.z],
                    fx: c.intrinsics.fx,
                    fy: c.intrinsics.fy,
                    cx: c.intrinsics.cx,
                    cy: c.intrinsics.cy,
                    width: c.intrinsics.width,
                    height: c.intrinsics.height,
                })
                .collect(),
            layout: self.layout,
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let spec: RigSpec =
            serde_json::from_str(s).map_err(|e| Error::InvalidRig(e.to_string()))?;
        spec.build()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::InvalidRig(msg) => Error::InvalidRig(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// The listed cameras, in order, as a rig of the same layout. The first one listed
    /// must be camera 1.
    pub fn subset(&self, cameras: &[usize]) -> Result<Self> {
        let picked = cameras
            .iter()
            .map(|&k| self.camera(k).cloned())
            .collect::<Result<Vec<_>>>()?;
        Self::new(picked, self.layout)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_spec()).expect("rig spec serializes")
    }
}

/// Baseline of each stereo pair and distance from camera 1 to every other camera.
pub const BASELINE: f64 = 0.1;

/// Rig file schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigSpec {
    pub cameras: Vec<CameraSpec>,
    pub layout: Layout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    #[serde(rename = "D")]
    pub displacement: [f64; 3],
    #[serde(rename = "R_angles")]
    pub angles: [f64; 3],
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl RigSpec {
    pub fn build(&self) -> Result<CameraRig> {
        let cameras = self
            .cameras
            .iter()
            .map(|c| {
                let intr = Intrinsics::new(c.fx, c.fy, c.cx, c.cy, c.width, c.height)?;
                Ok(Camera::new(
                    Vector3::from(c.displacement),
                    Vector3::from(c.angles),
                    intr,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        CameraRig::new(cameras, self.layout)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenePoint {
    pub id: u64,
    pub position: Vector3<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn intr() -> Intrinsics {
        Intrinsics::centered(1000.0, 640, 480).unwrap()
    }

    #[test]
    fn zero_angles_give_identity() {
        assert_eq!(rot_from_angles(&Vector3::zeros()), Matrix3::identity());
    }

    #[test]
    fn quarter_turn_about_x_maps_y_to_z() {
        let r = rot_from_angles(&Vector3::new(FRAC_PI_2, 0.0, 0.0));
        let v = r * Vector3::y();
        assert_relative_eq!(v, Vector3::z(), epsilon = 1e-15);
    }

    #[test]
    fn decomposition_of_identity_is_zero() {
        assert_eq!(angles_from_rot(&Matrix3::identity()).unwrap(), Vector3::zeros());
    }

    #[test]
    fn decomposition_round_trips_fixed_example() {
        let a = Vector3::new(0.01, -0.02, 0.015);
        let back = angles_from_rot(&rot_from_angles(&a)).unwrap();
        assert_relative_eq!(back, a, epsilon = 1e-10);
    }

    #[test]
    fn zero_row_is_rejected() {
        let mut r = Matrix3::identity();
        r.set_row(1, &nalgebra::RowVector3::zeros());
        assert!(matches!(angles_from_rot(&r), Err(Error::NonOrthonormalInput(_))));
    }

    #[test]
    fn gimbal_lock_is_rejected() {
        let r = rot_from_angles(&Vector3::new(0.1, FRAC_PI_2, 0.2));
        assert!(matches!(angles_from_rot(&r), Err(Error::GimbalProximity(_))));
    }

    #[test]
    fn world_to_camera_examples() {
        let m = Vector3::new(1.0, 2.0, 3.0);
        assert_eq!(world_to_camera(&Pose::identity(), &m), m);
        let shifted = Pose::new(Vector3::new(1.0, 0.0, 0.0), Vector3::zeros());
        assert_eq!(world_to_camera(&shifted, &m), Vector3::new(0.0, 2.0, 3.0));
        let turned = Pose::new(Vector3::zeros(), Vector3::new(0.0, 0.0, FRAC_PI_2));
        let p = world_to_camera(&turned, &Vector3::new(1.0, 0.0, 0.0));
        assert_relative_eq!(p, Vector3::new(0.0, -1.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn camera_k_offset_and_reference_degeneration() {
        let mut rig = CameraRig::default_non_overlapping(intr());
        rig.cameras[1] = Camera::new(Vector3::new(0.1, 0.0, 0.0), Vector3::zeros(), intr());
        let p = world_to_camera_k(&Pose::identity(), &rig, 1, &Vector3::new(1.0, 0.0, 2.0)).unwrap();
        assert_relative_eq!(p, Vector3::new(0.9, 0.0, 2.0), epsilon = 1e-15);

        let pose = Pose::new(Vector3::new(0.1, -0.2, 0.05), Vector3::new(0.01, 0.2, -0.1));
        let m = Vector3::new(0.3, 0.4, 0.9);
        assert_eq!(
            world_to_camera_k(&pose, &rig, 0, &m).unwrap(),
            world_to_camera(&pose, &m)
        );
        assert!(matches!(
            world_to_camera_k(&pose, &rig, 4, &m),
            Err(Error::InvalidCameraIndex { index: 4, count: 4 })
        ));
    }

    #[test]
    fn camera_k_matches_composed_rigid_transform() {
        // Oracle: world pose of camera k is (d + R D_k, R R_k); apply the world-to-camera map to it.
        let rig = CameraRig::default_non_overlapping(intr());
        let pose = Pose::new(Vector3::new(0.02, -0.01, 0.03), Vector3::new(0.05, -0.04, 0.02));
        let m = Vector3::new(-0.4, 0.3, 0.7);
        for k in 0..rig.len() {
            let cam = rig.camera(k).unwrap();
            let r_world = pose.rotation() * cam.rotation;
            let c_world = pose.translation + pose.rotation() * cam.displacement;
            let expected = r_world.transpose() * (m - c_world);
            let got = world_to_camera_k(&pose, &rig, k, &m).unwrap();
            assert_relative_eq!(got, expected, epsilon = 1e-14);
        }
    }

    #[test]
    fn projection_examples() {
        let i = intr();
        assert_eq!(project(&Vector3::new(0.0, 0.0, 1.0), &i).unwrap(), Vector2::new(320.0, 240.0));
        assert_relative_eq!(
            project(&Vector3::new(0.1, 0.0, 1.0), &i).unwrap(),
            Vector2::new(420.0, 240.0),
            epsilon = 1e-12
        );
        assert!(matches!(
            project(&Vector3::new(0.0, 0.0, -1.0), &i),
            Err(Error::BehindCamera(_))
        ));
        assert!(project(&Vector3::new(0.0, 0.0, 1e-7), &i).is_err());
    }

    #[test]
    fn equivalent_rotation_examples() {
        let r = rot_from_angles(&Vector3::new(0.01, 0.02, -0.03));
        assert_relative_eq!(
            equivalent_rotation(&Matrix3::identity(), &r).unwrap(),
            r,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            equivalent_rotation(&r, &Matrix3::identity()).unwrap(),
            Matrix3::identity(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn conjugation_moves_the_rotation_axis() {
        // A rotation about camera k's x axis becomes a rotation about R_k * x.
        let rk = rot_z(FRAC_PI_2);
        let local = rot_x(0.01);
        let eq = equivalent_rotation(&rk, &local).unwrap();
        let axis = rk * Vector3::x();
        assert_relative_eq!(eq * axis, axis, epsilon = 1e-15);
        assert_relative_eq!(eq.trace(), local.trace(), epsilon = 1e-10);
        assert_relative_eq!(eq, nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), 0.01).into_inner(), epsilon = 1e-14);
        assert!(equivalent_rotation(&Matrix3::zeros(), &local).is_err());
    }

    #[test]
    fn rig_file_round_trip_and_validation() {
        let rig = CameraRig::default_overlapping(intr());
        let back = CameraRig::from_json_str(&rig.to_json_string()).unwrap();
        assert_eq!(back, rig);

        let bad = r#"{"cameras":[{"D":[0.1,0,0],"R_angles":[0,0,0],"fx":1,"fy":1,"cx":1,"cy":1,"width":2,"height":2}],"layout":"overlapping"}"#;
        assert!(matches!(CameraRig::from_json_str(bad), Err(Error::InvalidRig(_))));
        let bad_intr = r#"{"cameras":[{"D":[0,0,0],"R_angles":[0,0,0],"fx":-1,"fy":1,"cx":1,"cy":1,"width":2,"height":2}],"layout":"non-overlapping"}"#;
        assert!(matches!(
            CameraRig::from_json_str(bad_intr),
            Err(Error::InvalidIntrinsics(_))
        ));
    }

    #[test]
    fn default_rigs_have_unit_spacing() {
        for rig in [
            CameraRig::default_overlapping(intr()),
            CameraRig::default_non_overlapping(intr()),
        ] {
            for cam in &rig.cameras()[1..] {
                assert!(orthonormality_error(&cam.rotation) < 1e-12);
            }
        }
        let rig = CameraRig::default_non_overlapping(intr());
        for cam in &rig.cameras()[1..] {
            assert_relative_eq!(cam.displacement.norm(), BASELINE, epsilon = 1e-15);
        }
    }

    fn small_angles() -> impl Strategy<Value = Vector3<f64>> {
        (-0.5f64..0.5, -0.5f64..0.5, -0.5f64..0.5).prop_map(|(a, b, c)| Vector3::new(a, b, c))
    }

    proptest! {
        #[test]
        fn rotation_is_proper(a in small_angles()) {
            let r = rot_from_angles(&a);
            prop_assert!((r * r.transpose() - Matrix3::identity()).amax() < 1e-12);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn angles_round_trip(a in small_angles()) {
            let back = angles_from_rot(&rot_from_angles(&a)).unwrap();
            prop_assert!((back - a).amax() < 1e-10);
        }

        #[test]
        fn camera_transform_inverts(a in small_angles(), t in small_angles(), m in small_angles()) {
            let pose = Pose::new(t, a);
            let p = world_to_camera(&pose, &m);
            let back = pose.rotation() * p + pose.translation;
            prop_assert!((back - m).amax() < 1e-12);
        }

        #[test]
        fn conjugation_preserves_angle(a in small_angles(), b in small_angles()) {
            let rk = rot_from_angles(&(b * 6.0));
            let local = rot_from_angles(&a);
            let eq = equivalent_rotation(&rk, &local).unwrap();
            prop_assert!((rotation_angle(&eq) - rotation_angle(&local)).abs() < 1e-10);
            prop_assert!((eq.trace() - local.trace()).abs() < 1e-10);
        }

        #[test]
        fn rotation_partials_match_differences(a in small_angles()) {
            let parts = rot_partials(&a);
            let h = 1e-6;
            for (i, part) in parts.iter().enumerate() {
                let mut ap = a;
                let mut am = a;
                ap[i] += h;
                am[i] -= h;
                let fd = (rot_from_angles(&ap) - rot_from_angles(&am)) / (2.0 * h);
                prop_assert!((fd - part).amax() < 1e-8);
            }
        }
    }
}
