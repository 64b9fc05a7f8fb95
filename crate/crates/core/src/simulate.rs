//! Synthetic scenes, trajectories and noisy observations.
//!
//! Scene points fill a spherical shell around the starting position of camera 1. The
//! robot takes random steps expressed in its own frame, and every camera observes the
//! points inside its frustum with Gaussian pixel noise.
//!
//! Each random quantity draws from its own ChaCha stream keyed by
//! `(seed, run, purpose, camera, frame)`, so results do not depend on evaluation order
//! or thread count.

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{project, rot_from_angles, world_to_camera_k, CameraRig, Pose, ScenePoint};
use crate::observations::{FrameObservations, Observation, Sequence};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_points: usize,
    pub shell_inner: f64,
    pub shell_outer: f64,
    pub trans_min: f64,
    pub trans_max: f64,
    pub rot_min: f64,
    pub rot_max: f64,
    pub noise_sigma: f64,
    pub n_frames: usize,
    pub n_runs: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    /// Desk-scale defaults: 50 runs over 2,000 points. Everything else follows the
    /// full-size study.
    fn default() -> Self {
        Self {
            n_points: 2_000,
            n_runs: 50,
            ..Self::full_scale()
        }
    }
}

impl SimConfig {
    /// The full-size study: 1,500 runs over 10,000 points.
    pub fn full_scale() -> Self {
        Self {
            n_points: 10_000,
            shell_inner: 0.667,
            shell_outer: 1.0,
            trans_min: 0.005,
            trans_max: 0.015,
            rot_min: 0.005,
            rot_max: 0.02,
            noise_sigma: 0.5,
            n_frames: 100,
            n_runs: 1_500,
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("sim: {msg}")));
        if !(self.shell_inner > 0.0 && self.shell_inner < self.shell_outer) {
            return bad("need 0 < shell_inner < shell_outer");
        }
        if !(self.trans_min >= 0.0 && self.trans_min <= self.trans_max) {
            return bad("need 0 <= trans_min <= trans_max");
        }
        if !(self.rot_min >= 0.0 && self.rot_min <= self.rot_max) {
            return bad("need 0 <= rot_min <= rot_max");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be >= 0");
        }
        if self.n_frames < 2 {
            return bad("n_frames must be at least 2");
        }
        Ok(())
    }
}

/// Ground-truth reference poses, one per frame; frame 0 is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub poses: Vec<Pose>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn stationary(n_frames: usize) -> Self {
        Self {
            poses: vec![Pose::identity(); n_frames],
        }
    }

    /// Translation and angles grow linearly: frame `j` is `j * step`.
    pub fn constant_velocity(n_frames: usize, step: &Pose) -> Self {
        Self {
            poses: (0..n_frames)
                .map(|j| Pose::from_vector(&(step.to_vector() * j as f64)))
                .collect(),
        }
    }

    /// Chains body-frame steps: `R_j = R_{j-1} dR`, `d_j = d_{j-1} + R_{j-1} dt`.
    pub fn from_steps(steps: &[Pose]) -> Result<Self> {
        let mut poses = vec![Pose::identity()];
        let mut rotation = Matrix3::identity();
        let mut translation = Vector3::zeros();
        for step in steps {
            translation += rotation * step.translation;
            rotation *= step.rotation();
            poses.push(Pose::from_rotation(translation, &rotation)?);
        }
        Ok(Self { poses })
    }
}

/// What a random stream is used for; part of the stream key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Scene,
    Trajectory,
    /// Pixel noise of one camera of one rig at one frame.
    Noise { rig: u8, camera: u8, frame: u32 },
}

impl Stream {
    fn code(self) -> u64 {
        match self {
            Stream::Scene => 1,
            Stream::Trajectory => 2,
            Stream::Noise { rig, camera, frame } => {
                (1 << 48) | (u64::from(rig) << 40) | (u64::from(camera) << 32) | u64::from(frame)
            }
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for `(seed, run, stream)`.
pub fn stream_rng(seed: u64, run: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(run)));
    rng.set_stream(stream.code());
    rng
}

/// Points with radius uniform in `[shell_inner, shell_outer]` and uniformly
/// distributed directions.
pub fn gen_scene<R: Rng>(cfg: &SimConfig, rng: &mut R) -> Vec<ScenePoint> {
    (0..cfg.n_points)
        .map(|i| {
            let dir: [f64; 3] = UnitSphere.sample(rng);
            let radius = rng.random_range(cfg.shell_inner..=cfg.shell_outer);
            ScenePoint {
                id: i as u64,
                position: Vector3::from(dir) * radius,
            }
        })
        .collect()
}

fn signed_magnitude<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let mag = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    if rng.random::<bool>() {
        mag
    } else {
        -mag
    }
}

/// Body-frame steps for every frame after the first.
pub fn gen_steps<R: Rng>(cfg: &SimConfig, rng: &mut R) -> Vec<Pose> {
    (1..cfg.n_frames)
        .map(|_| {
            let t = Vector3::from_fn(|_, _| signed_magnitude(rng, cfg.trans_min, cfg.trans_max));
            let a = Vector3::from_fn(|_, _| signed_magnitude(rng, cfg.rot_min, cfg.rot_max));
            Pose::new(t, a)
        })
        .collect()
}

pub fn gen_trajectory<R: Rng>(cfg: &SimConfig, rng: &mut R) -> Result<Trajectory> {
    Trajectory::from_steps(&gen_steps(cfg, rng))
}

/// Observations of camera `k`: every point in front of it that projects inside the
/// image, plus independent Gaussian noise on `u` and `v`.
pub fn render_camera<R: Rng>(
    scene: &[ScenePoint],
    pose: &Pose,
    rig: &CameraRig,
    k: usize,
    noise_sigma: f64,
    rng: &mut R,
) -> Result<Vec<Observation>> {
    let cam = rig.camera(k)?;
    let noise = Normal::new(0.0, noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut out = Vec::new();
    for point in scene {
        let p = world_to_camera_k(pose, rig, k, &point.position)?;
        let Ok(px) = project(&p, &cam.intrinsics) else {
            continue;
        };
        if !cam.intrinsics.contains(&px) {
            continue;
        }
        let pixel = if noise_sigma > 0.0 {
            px + Vector2::new(noise.sample(rng), noise.sample(rng))
        } else {
            px
        };
        out.push(Observation {
            feature: point.id,
            pixel,
        });
    }
    Ok(out)
}

/// All cameras of one frame, drawing noise from a single stream.
pub fn render_frame<R: Rng>(
    scene: &[ScenePoint],
    pose: &Pose,
    rig: &CameraRig,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<FrameObservations> {
    let cameras = (0..rig.len())
        .map(|k| render_camera(scene, pose, rig, k, cfg.noise_sigma, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(FrameObservations { cameras })
}

/// Observations of a whole trajectory, with one noise stream per camera and frame.
pub fn render_sequence(
    scene: &[ScenePoint],
    trajectory: &Trajectory,
    rig: &CameraRig,
    noise_sigma: f64,
    seed: u64,
    run: u64,
    rig_tag: u8,
) -> Result<Sequence> {
    let frames = trajectory
        .poses
        .iter()
        .enumerate()
        .map(|(j, pose)| {
            let cameras = (0..rig.len())
                .map(|k| {
                    let mut rng = stream_rng(
                        seed,
                        run,
                        Stream::Noise {
                            rig: rig_tag,
                            camera: k as u8,
                            frame: j as u32,
                        },
                    );
                    render_camera(scene, pose, rig, k, noise_sigma, &mut rng)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(FrameObservations { cameras })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Sequence {
        n_cameras: rig.len(),
        frames,
    })
}

/// One run's shared world: the scene and the ground-truth trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub scene: Vec<ScenePoint>,
    pub trajectory: Trajectory,
}

pub fn gen_world(cfg: &SimConfig, run: u64) -> Result<World> {
    let scene = gen_scene(cfg, &mut stream_rng(cfg.seed, run, Stream::Scene));
    let trajectory = gen_trajectory(cfg, &mut stream_rng(cfg.seed, run, Stream::Trajectory))?;
    Ok(World { scene, trajectory })
}

/// Applies a body-frame step to a pose (the composition used by [`Trajectory::from_steps`]).
pub fn compose_step(pose: &Pose, step: &Pose) -> Result<Pose> {
    let r = pose.rotation();
    Pose::from_rotation(pose.translation + r * step.translation, &(r * rot_from_angles(&step.angles)))
}
