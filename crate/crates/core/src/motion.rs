//! Analytic camera-motion models: the desk-scale stand-in for captured gyro
//! data.
//!
//! Each model maps time to an angular velocity about the camera axes. Models
//! are registered by name and built from a compact spec string, e.g.
//!
//! ```text
//! const:yaw=0.5
//! ramp:axis=pitch,slope=6.0,start=0.1
//! sin:axis=roll,amp=1.2,freq=8
//! const:yaw=0.3+sin:axis=roll,amp=0.8,freq=5,phase=1.0
//! ```
//!
//! `+` sums terms. Axis names map onto the conventions of [`crate::geom`]:
//! `pitch` is the x axis, `yaw` the y axis, `roll` the z axis.

use crate::geom::AxisAngleRotation;
use crate::imu::GyroSample;
use nalgebra::Vector3;
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MotionSpecError {
    #[error("unknown motion model {0:?}")]
    UnknownModel(String),
    #[error("bad parameter in {model:?}: {reason}")]
    BadParameter { model: String, reason: String },
    #[error("empty motion spec")]
    Empty,
}

/// Time-varying angular velocity about the camera axes.
pub trait MotionModel: Send + Sync {
    fn angular_velocity(&self, t: f64) -> Vector3<f64>;
}

struct ConstantRate {
    omega: Vector3<f64>,
}

impl MotionModel for ConstantRate {
    fn angular_velocity(&self, _t: f64) -> Vector3<f64> {
        self.omega
    }
}

struct RampRate {
    axis: Vector3<f64>,
    start: f64,
    slope: f64,
}

impl MotionModel for RampRate {
    fn angular_velocity(&self, t: f64) -> Vector3<f64> {
        self.axis * (self.start + self.slope * t)
    }
}

struct Sinusoid {
    axis: Vector3<f64>,
    amp: f64,
    freq: f64,
    phase: f64,
}

impl MotionModel for Sinusoid {
    fn angular_velocity(&self, t: f64) -> Vector3<f64> {
        self.axis * (self.amp * (2.0 * std::f64::consts::PI * self.freq * t + self.phase).sin())
    }
}

struct SumMotion {
    terms: Vec<Box<dyn MotionModel>>,
}

impl MotionModel for SumMotion {
    fn angular_velocity(&self, t: f64) -> Vector3<f64> {
        self.terms.iter().map(|m| m.angular_velocity(t)).sum()
    }
}

type Params = BTreeMap<String, String>;
type Builder = fn(&Params) -> Result<Box<dyn MotionModel>, String>;

/// Name-keyed registry of motion-model builders. `builtin()` registers the
/// stock models; callers may add their own before parsing.
pub struct MotionRegistry {
    builders: BTreeMap<&'static str, Builder>,
}

impl fmt::Debug for MotionRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MotionRegistry").field("models", &self.names()).finish()
    }
}

impl MotionRegistry {
    pub fn builtin() -> Self {
        let mut builders: BTreeMap<&'static str, Builder> = BTreeMap::new();
        builders.insert("const", build_const);
        builders.insert("ramp", build_ramp);
        builders.insert("sin", build_sin);
        Self { builders }
    }

    pub fn register(&mut self, name: &'static str, builder: Builder) {
        self.builders.insert(name, builder);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.builders.keys().copied().collect()
    }

    /// Parse a motion spec string; `+`-separated terms are summed.
    pub fn parse(&self, spec: &str) -> Result<Box<dyn MotionModel>, MotionSpecError> {
        let mut terms = Vec::new();
        for term in spec.split('+') {
            let term = term.trim();
            if term.is_empty() {
                continue;
            }
            let (name, params_str) = match term.split_once(':') {
                Some((n, p)) => (n.trim(), p.trim()),
                None => (term, ""),
            };
            let builder = self
                .builders
                .get(name)
                .ok_or_else(|| MotionSpecError::UnknownModel(name.to_string()))?;
            let params = parse_params(name, params_str)?;
            let model = builder(&params)
                .map_err(|reason| MotionSpecError::BadParameter { model: name.to_string(), reason })?;
            terms.push(model);
        }
        match terms.len() {
            0 => Err(MotionSpecError::Empty),
            1 => Ok(terms.pop().unwrap()),
            _ => Ok(Box::new(SumMotion { terms })),
        }
    }
}

/// Parse a motion spec with the builtin registry.
pub fn parse_motion_spec(spec: &str) -> Result<Box<dyn MotionModel>, MotionSpecError> {
    MotionRegistry::builtin().parse(spec)
}

fn parse_params(model: &str, s: &str) -> Result<Params, MotionSpecError> {
    let mut params = Params::new();
    for kv in s.split(',') {
        let kv = kv.trim();
        if kv.is_empty() {
            continue;
        }
        let (key, value) = kv.split_once('=').ok_or_else(|| MotionSpecError::BadParameter {
            model: model.to_string(),
            reason: format!("expected key=value, got {kv:?}"),
        })?;
        params.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(params)
}

fn number(params: &Params, key: &str, default: Option<f64>) -> Result<f64, String> {
    match params.get(key) {
        Some(raw) => raw.parse::<f64>().map_err(|_| format!("{key} is not a number: {raw:?}")),
        None => default.ok_or_else(|| format!("missing {key}=<number>")),
    }
}

fn axis_vector(params: &Params) -> Result<Vector3<f64>, String> {
    match params.get("axis").map(String::as_str) {
        Some("pitch") | Some("x") => Ok(Vector3::x()),
        Some("yaw") | Some("y") => Ok(Vector3::y()),
        Some("roll") | Some("z") => Ok(Vector3::z()),
        Some(other) => Err(format!("unknown axis {other:?} (use pitch, yaw, or roll)")),
        None => Err("missing axis=pitch|yaw|roll".to_string()),
    }
}

fn build_const(params: &Params) -> Result<Box<dyn MotionModel>, String> {
    for key in params.keys() {
        if !matches!(key.as_str(), "pitch" | "yaw" | "roll") {
            return Err(format!("unknown parameter {key:?} (use pitch=, yaw=, roll=)"));
        }
    }
    Ok(Box::new(ConstantRate {
        omega: Vector3::new(
            number(params, "pitch", Some(0.0))?,
            number(params, "yaw", Some(0.0))?,
            number(params, "roll", Some(0.0))?,
        ),
    }))
}

fn build_ramp(params: &Params) -> Result<Box<dyn MotionModel>, String> {
    Ok(Box::new(RampRate {
        axis: axis_vector(params)?,
        start: number(params, "start", Some(0.0))?,
        slope: number(params, "slope", None)?,
    }))
}

fn build_sin(params: &Params) -> Result<Box<dyn MotionModel>, String> {
    Ok(Box::new(Sinusoid {
        axis: axis_vector(params)?,
        amp: number(params, "amp", None)?,
        freq: number(params, "freq", None)?,
        phase: number(params, "phase", Some(0.0))?,
    }))
}

/// Sample a motion model into gyro form at a fixed rate. The last sample
/// lands at or past `t_start + duration` so any window inside the span is
/// covered.
pub fn sample_gyro(model: &dyn MotionModel, t_start: f64, duration: f64, rate_hz: f64) -> Vec<GyroSample> {
    assert!(duration > 0.0 && rate_hz > 0.0);
    let dt = 1.0 / rate_hz;
    let n = (duration * rate_hz).ceil() as usize;
    (0..=n)
        .map(|i| {
            let t = t_start + i as f64 * dt;
            GyroSample { t, omega: model.angular_velocity(t) }
        })
        .collect()
}

/// Reference integrator: compose `steps` trapezoidal increments of the
/// continuous model across `[t0, t0+tau]`. With `steps` around 1024 this
/// serves as the fine-integration oracle that coarse gyro-driven predictions
/// are judged against.
pub fn integrate_fine(model: &dyn MotionModel, t0: f64, tau: f64, steps: usize) -> AxisAngleRotation {
    assert!(steps >= 1);
    let dt = tau / steps as f64;
    let mut pose = AxisAngleRotation::identity();
    for i in 0..steps {
        let ta = t0 + i as f64 * dt;
        let tb = ta + dt;
        let rotvec = (model.angular_velocity(ta) + model.angular_velocity(tb)) * (0.5 * dt);
        pose = pose.then(&AxisAngleRotation::from_scaled_axis(rotvec));
    }
    pose
}
