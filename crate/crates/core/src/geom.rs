//! Pure rotation geometry for the pinhole projection model.
//!
//! # Coordinate conventions
//!
//! - **Camera frame**: x right, y down, z forward (optical axis).
//! - **Pixel frame**: origin at the top-left, u right, v down; the principal
//!   point (cx, cy) need not be the sensor center.
//! - **Spherical directions**: a viewing direction is
//!   `(sinφ·cosθ, cosφ, sinφ·sinθ)` so that θ = φ = π/2 is the optical axis
//!   and the projection reads `u = cx + fx/tanθ`, `v = cy + fy/(sinθ·tanφ)`.
//!   The distance to the scene point cancels; only the direction matters.
//! - **Rotations**: an [`AxisAngleRotation`] acts on viewing directions
//!   (rays). A camera that physically turns by R in the world moves every
//!   viewing direction by R⁻¹; gyro integration (see [`crate::imu`]) produces
//!   direction rotations, so [`rotation_map`] applies them to rays directly.
//!
//! Sign conventions frozen by the tests in this module: positive yaw (about
//! +y) moves image content toward +u, positive pitch (about +x) moves content
//! toward −v, positive roll (about +z) turns content from +u toward +v.

use nalgebra::{Matrix3, Unit, UnitQuaternion, Vector3};
use thiserror::Error;

/// Angular distance from {0, π} below which spherical angles are treated as
/// singular.
pub const ANGLE_MARGIN: f64 = 1e-9;

/// Projected coordinates farther than this from the principal point are
/// rejected as numerically meaningless.
pub const MAX_COORD_GUARD: f64 = 1e8;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("projection singularity: theta={theta}, phi={phi}")]
    Singularity { theta: f64, phi: f64 },
    #[error("rotated ray points behind the camera (forward component {z})")]
    BehindCamera { z: f64 },
    #[error("depth must be positive, got {0}")]
    DepthNonPositive(f64),
}

/// Pinhole intrinsics: focal lengths and principal point in pixels.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeomError> {
        if !(fx.is_finite() && fx > 0.0) || !(fy.is_finite() && fy > 0.0) {
            return Err(GeomError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={fx}, fy={fy})"
            )));
        }
        if !(0.0..width as f64).contains(&cx) || !(0.0..height as f64).contains(&cy) {
            return Err(GeomError::InvalidIntrinsics(format!(
                "principal point ({cx}, {cy}) outside the {width}x{height} sensor"
            )));
        }
        Ok(Self { fx, fy, cx, cy, width, height })
    }

    /// The four image corners in pixel coordinates, counter-clockwise from
    /// the top-left: (0,0), (w−1,0), (w−1,h−1), (0,h−1).
    pub fn corners(&self) -> [PixelPoint; 4] {
        let w = (self.width - 1) as f64;
        let h = (self.height - 1) as f64;
        [
            PixelPoint::new(0.0, 0.0),
            PixelPoint::new(w, 0.0),
            PixelPoint::new(w, h),
            PixelPoint::new(0.0, h),
        ]
    }
}

/// Sub-pixel image position, origin at the top-left.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn distance(&self, other: &PixelPoint) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }
}

/// Viewing direction in spherical form; both angles live in the open
/// interval (0, π), which excludes the projection singularities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalDirection {
    pub theta: f64,
    pub phi: f64,
}

/// Point in the camera frame, meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Rotation acting on viewing directions, stored as a unit axis and an angle
/// in [−π, π].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisAngleRotation {
    axis: Unit<Vector3<f64>>,
    angle: f64,
}

impl AxisAngleRotation {
    pub fn new(axis: Vector3<f64>, angle: f64) -> Self {
        debug_assert!(
            (axis.norm() - 1.0).abs() <= 1e-12 || axis.norm() > 0.0,
            "rotation axis must be normalizable"
        );
        debug_assert!((-std::f64::consts::PI..=std::f64::consts::PI).contains(&angle));
        Self { axis: Unit::new_normalize(axis), angle }
    }

    pub fn identity() -> Self {
        Self { axis: Vector3::x_axis(), angle: 0.0 }
    }

    /// Exponential map: the rotation whose axis is `v/|v|` and angle `|v|`.
    /// The zero vector yields the exact identity.
    pub fn from_scaled_axis(v: Vector3<f64>) -> Self {
        let angle = v.norm();
        if angle == 0.0 {
            Self::identity()
        } else {
            Self { axis: Unit::new_unchecked(v / angle), angle }
        }
    }

    pub fn from_quaternion(q: UnitQuaternion<f64>) -> Self {
        match q.axis_angle() {
            Some((axis, angle)) => Self { axis, angle },
            None => Self::identity(),
        }
    }

    pub fn axis(&self) -> Vector3<f64> {
        self.axis.into_inner()
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn is_identity(&self) -> bool {
        self.angle == 0.0
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_axis_angle(&self.axis, self.angle)
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        self.quaternion().to_rotation_matrix().into_inner()
    }

    pub fn inverse(&self) -> Self {
        Self { axis: self.axis, angle: -self.angle }
    }

    /// The rotation equivalent to applying `self` first and `next` second.
    /// Composition goes through unit quaternions, which keeps the result
    /// orthonormal to machine precision.
    pub fn then(&self, next: &AxisAngleRotation) -> Self {
        Self::from_quaternion(next.quaternion() * self.quaternion())
    }

    /// Rotate a direction vector.
    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.quaternion() * v
    }
}

/// Convert a spherical direction at radius `r` to camera coordinates.
pub fn spherical_to_camera(r: f64, dir: SphericalDirection) -> CameraPoint {
    debug_assert!(r > 0.0);
    let (st, ct) = dir.theta.sin_cos();
    let (sp, cp) = dir.phi.sin_cos();
    CameraPoint { x: r * sp * ct, y: r * cp, z: r * sp * st }
}

/// Project a viewing direction to pixel coordinates:
/// `u = cx + fx/tanθ`, `v = cy + fy/(sinθ·tanφ)`.
///
/// The scene distance plays no role, which is why this takes a direction and
/// not a [`CameraPoint`].
pub fn project(dir: SphericalDirection, k: &CameraIntrinsics) -> Result<PixelPoint, GeomError> {
    let singular = |a: f64| !(ANGLE_MARGIN..=std::f64::consts::PI - ANGLE_MARGIN).contains(&a);
    if singular(dir.theta) || singular(dir.phi) {
        return Err(GeomError::Singularity { theta: dir.theta, phi: dir.phi });
    }
    // cosθ/sinθ rather than 1/tanθ: exact zero at θ = π/2, no tan blowup.
    let (st, ct) = dir.theta.sin_cos();
    let (sp, cp) = dir.phi.sin_cos();
    let du = k.fx * ct / st;
    let dv = k.fy * cp / (st * sp);
    if du.abs() > MAX_COORD_GUARD || dv.abs() > MAX_COORD_GUARD {
        return Err(GeomError::Singularity { theta: dir.theta, phi: dir.phi });
    }
    Ok(PixelPoint::new(k.cx + du, k.cy + dv))
}

/// Invert [`project`]: recover the spherical direction seen at a pixel.
///
/// `θ = atan2(fx, u−cx)` and `φ = atan2(fy, (v−cy)·sinθ)` both land in
/// (0, π) because the focal lengths are positive; the principal point maps to
/// θ = φ = π/2.
pub fn unproject(p: PixelPoint, k: &CameraIntrinsics) -> SphericalDirection {
    let theta = f64::atan2(k.fx, p.u - k.cx);
    let phi = f64::atan2(k.fy, (p.v - k.cy) * theta.sin());
    SphericalDirection { theta, phi }
}

/// Pixel displacement of the content at `p` under a yaw of `dtheta`
/// (direction rotation about +y). Exact closed form of [`rotation_map`]
/// restricted to the yaw axis: the azimuth moves from θ to θ − Δθ, so
///
/// ```text
/// Δu = fx·(1/tan(θ−Δθ) − 1/tanθ)
/// Δv = (fy/tanφ)·(1/sin(θ−Δθ) − 1/sinθ)
/// ```
///
/// Positive `dtheta` moves content at the principal point toward +u by
/// `fx·tan(dtheta)`.
pub fn yaw_delta(p: PixelPoint, dtheta: f64, k: &CameraIntrinsics) -> Result<(f64, f64), GeomError> {
    let dir = unproject(p, k);
    let theta_new = dir.theta - dtheta;
    if theta_new <= ANGLE_MARGIN || theta_new >= std::f64::consts::PI - ANGLE_MARGIN {
        return Err(GeomError::Singularity { theta: theta_new, phi: dir.phi });
    }
    let (st0, ct0) = dir.theta.sin_cos();
    let (st1, ct1) = theta_new.sin_cos();
    let (sp, cp) = dir.phi.sin_cos();
    let du = k.fx * (ct1 / st1 - ct0 / st0);
    // cotφ stays finite through φ = π/2 where the Δv term vanishes.
    let dv = k.fy * (cp / sp) * (1.0 / st1 - 1.0 / st0);
    Ok((du, dv))
}

/// Pixel displacement under a pitch of `dphi` (direction rotation about +x).
///
/// Axis-swapped analogue of [`yaw_delta`]: parameterize directions by the
/// polar pair about the x-axis (`θ̃ = atan2(fy, v−cy)`,
/// `φ̃ = atan2(fx, (u−cx)·sinθ̃)`); a rotation about +x moves θ̃ to θ̃ + Δ.
/// Positive `dphi` moves content at the principal point toward −v by
/// `fy·tan(dphi)`.
pub fn pitch_delta(p: PixelPoint, dphi: f64, k: &CameraIntrinsics) -> Result<(f64, f64), GeomError> {
    let theta = f64::atan2(k.fy, p.v - k.cy);
    let phi = f64::atan2(k.fx, (p.u - k.cx) * theta.sin());
    let theta_new = theta + dphi;
    if theta_new <= ANGLE_MARGIN || theta_new >= std::f64::consts::PI - ANGLE_MARGIN {
        return Err(GeomError::Singularity { theta: theta_new, phi });
    }
    let (st0, ct0) = theta.sin_cos();
    let (st1, ct1) = theta_new.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let dv = k.fy * (ct1 / st1 - ct0 / st0);
    let du = k.fx * (cp / sp) * (1.0 / st1 - 1.0 / st0);
    Ok((du, dv))
}

/// Pixel displacement under a roll of `droll` (direction rotation about +z).
///
/// Normalized coordinates rotate rigidly about the principal point; with
/// fx ≠ fy the pixel-space map is an axis-scaled rotation. The principal
/// point is the fixed point.
pub fn roll_delta(p: PixelPoint, droll: f64, k: &CameraIntrinsics) -> (f64, f64) {
    let x = (p.u - k.cx) / k.fx;
    let y = (p.v - k.cy) / k.fy;
    let (s, c) = droll.sin_cos();
    let xr = x * c - y * s;
    let yr = x * s + y * c;
    (k.fx * (xr - x), k.fy * (yr - y))
}

/// Map a pixel through an arbitrary direction rotation: back-project to the
/// ray `((u−cx)/fx, (v−cy)/fy, 1)`, rotate, reproject.
///
/// This is the oracle the per-axis closed forms are validated against; it is
/// exact under the pure-rotation model for any axis. The identity rotation
/// returns `p` bit-for-bit.
pub fn rotation_map(p: PixelPoint, rot: &AxisAngleRotation, k: &CameraIntrinsics) -> Result<PixelPoint, GeomError> {
    if rot.is_identity() {
        return Ok(p);
    }
    let ray = Vector3::new((p.u - k.cx) / k.fx, (p.v - k.cy) / k.fy, 1.0);
    let rotated = rot.matrix() * ray;
    if rotated.z <= 1e-12 {
        return Err(GeomError::BehindCamera { z: rotated.z });
    }
    Ok(PixelPoint::new(
        k.cx + k.fx * rotated.x / rotated.z,
        k.cy + k.fy * rotated.y / rotated.z,
    ))
}

/// First-order pixel displacement from a camera translation `t` at constant
/// scene depth `z`: `(fx·tx/z, fy·ty/z)`. The tz-induced radial term is zero
/// at the principal point and dropped.
///
/// Shrinks as 1/z, which is the argument for ignoring translation when
/// synthesizing blur for distant scenes.
pub fn translation_delta(k: &CameraIntrinsics, t: Vector3<f64>, z: f64) -> Result<(f64, f64), GeomError> {
    if z <= 0.0 {
        return Err(GeomError::DepthNonPositive(z));
    }
    Ok((k.fx * t.x / z, k.fy * t.y / z))
}
