//! Core library for gyroscope-driven motion-blur synthesis.
//!
//! The pipeline, end to end: a gyroscope log over an exposure window is
//! integrated into per-interval rotations ([`imu`]); those rotations drive
//! per-pixel blur trajectories under a pure-rotation camera model ([`geom`],
//! [`trajectory`]); corner trajectories yield per-substep homographies whose
//! warps are averaged into a physically-grounded blurred image ([`warp`],
//! [`synth`]); trajectories are compressed into cubic Bezier curves and
//! encoded as per-pixel control/endpoint heatmap fields ([`bezier`]); and
//! predictions are scored with endpoint errors, PSNR, SSIM, and a two-scale
//! Euclidean loss ([`metrics`]).
//!
//! All operations are pure functions of their inputs and safe to call
//! concurrently.

pub mod bezier;
pub mod geom;
pub mod imu;
pub mod metrics;
pub mod motion;
pub mod synth;
pub mod trajectory;
pub mod warp;

pub use geom::{
    AxisAngleRotation, CameraIntrinsics, CameraPoint, GeomError, PixelPoint, SphericalDirection,
};
pub use imu::{CameraPose, ExposureWindow, GyroSample, RotationDelta};
pub use trajectory::{BlurTrajectory, StagePlan};
pub use warp::{Homography, ImageBuffer, WarpedFrame};
