//! Multi-camera rig ego-motion estimation.
//!
//! Two rig layouts are supported: two back-to-back stereo pairs, where structure comes
//! from triangulation, and four individually aimed cameras, where each camera tracks
//! its own monocular pose and the rig's rigidity resolves the per-camera scale.

pub mod cli;
pub mod ekf;
pub mod fusion;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod observations;
pub mod pipeline;
pub mod selftest;
pub mod simulate;
pub mod stereo;

pub use error::{Error, Result};
