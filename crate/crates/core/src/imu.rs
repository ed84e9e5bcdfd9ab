//! Gyroscope log parsing, exposure-window selection, and integration of
//! angular velocity into per-interval rotations and cumulative poses.
//!
//! Angular velocities follow the direction-rotation convention of
//! [`crate::geom`]: positive ω_y pans image content toward +u, positive ω_x
//! toward −v, positive ω_z rolls content from +u toward +v. A real rig whose
//! gyro axes differ gets a fixed alignment rotation applied at ingest time
//! (see [`parse_gyro_log_aligned`]).

use crate::geom::AxisAngleRotation;
use nalgebra::{Matrix3, Vector3};
use std::io::BufRead;
use thiserror::Error;

/// Sanity bound on angular rate magnitude, rad/s.
pub const MAX_RATE: f64 = 100.0;

#[derive(Debug, Error)]
pub enum GyroError {
    #[error("malformed gyro row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("non-monotonic timestamps at line {line}: {t} after {prev}")]
    NonMonotonicTimestamps { line: usize, t: f64, prev: f64 },
    #[error("gyro log contains no samples")]
    EmptyLog,
    #[error("exposure window [{t_start}, {t_end}] not covered by the log [{log_start}, {log_end}]")]
    WindowNotCovered { t_start: f64, t_end: f64, log_start: f64, log_end: f64 },
    #[error("too few samples to integrate a window (need at least 2)")]
    TooFewSamples,
    #[error("per-interval rotation of {angle} rad exceeds pi/2; gyro rate or interval length is implausible")]
    ExcessiveRotation { angle: f64 },
    #[error("invalid exposure window: tau={tau}")]
    InvalidWindow { tau: f64 },
}

/// One timestamped angular-velocity sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GyroSample {
    /// Monotonic timestamp, seconds.
    pub t: f64,
    /// Angular velocity about the camera x, y, z axes, rad/s.
    pub omega: Vector3<f64>,
}

/// Exposure interval: start time and duration τ (0 < τ ≤ 1 s).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExposureWindow {
    pub t_start: f64,
    pub tau: f64,
}

impl ExposureWindow {
    pub fn new(t_start: f64, tau: f64) -> Result<Self, GyroError> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(GyroError::InvalidWindow { tau });
        }
        Ok(Self { t_start, tau })
    }

    pub fn t_end(&self) -> f64 {
        self.t_start + self.tau
    }
}

/// Rotation integrated over one gyro interval.
#[derive(Debug, Clone, Copy)]
pub struct RotationDelta {
    pub rot: AxisAngleRotation,
    pub t0: f64,
    pub t1: f64,
}

/// Cumulative orientation relative to the exposure start; identity at t_start.
#[derive(Debug, Clone, Copy)]
pub struct CameraPose {
    pub t: f64,
    pub orientation: AxisAngleRotation,
}

/// Parse a gyro log CSV: columns `t_sec,omega_x,omega_y,omega_z`, decimal
/// point `.`, newline `\n`, header row optional. Samples are returned in
/// input order; timestamps must be strictly increasing.
pub fn parse_gyro_log<R: BufRead>(reader: R) -> Result<Vec<GyroSample>, GyroError> {
    parse_gyro_log_aligned(reader, &Matrix3::identity())
}

/// [`parse_gyro_log`] with a fixed gyro-to-camera alignment rotation applied
/// to every sample.
pub fn parse_gyro_log_aligned<R: BufRead>(
    reader: R,
    alignment: &Matrix3<f64>,
) -> Result<Vec<GyroSample>, GyroError> {
    let mut samples = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| GyroError::MalformedRow { line: line_no, reason: e.to_string() })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        match parse_row(trimmed) {
            Ok((t, omega)) => {
                let omega = alignment * omega;
                if omega.norm() >= MAX_RATE {
                    return Err(GyroError::MalformedRow {
                        line: line_no,
                        reason: format!("|omega| = {} exceeds the {MAX_RATE} rad/s sanity bound", omega.norm()),
                    });
                }
                if let Some(prev) = samples.last() {
                    let prev: &GyroSample = prev;
                    if t <= prev.t {
                        return Err(GyroError::NonMonotonicTimestamps { line: line_no, t, prev: prev.t });
                    }
                }
                samples.push(GyroSample { t, omega });
            }
            Err(reason) => {
                // A non-numeric first row is an optional header.
                if samples.is_empty() && idx == 0 && trimmed.split(',').next().is_some_and(|f| f.trim().parse::<f64>().is_err()) {
                    continue;
                }
                return Err(GyroError::MalformedRow { line: line_no, reason });
            }
        }
    }
    if samples.is_empty() {
        return Err(GyroError::EmptyLog);
    }
    Ok(samples)
}

fn parse_row(line: &str) -> Result<(f64, Vector3<f64>), String> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 4 {
        return Err(format!("expected 4 columns, got {}", fields.len()));
    }
    let mut vals = [0.0f64; 4];
    for (i, f) in fields.iter().enumerate() {
        vals[i] = f
            .trim()
            .parse::<f64>()
            .map_err(|_| format!("column {} is not a number: {:?}", i + 1, f.trim()))?;
        if !vals[i].is_finite() {
            return Err(format!("column {} is not finite", i + 1));
        }
    }
    Ok((vals[0], Vector3::new(vals[1], vals[2], vals[3])))
}

/// Linearly interpolate the angular velocity at time `t`. `samples` must be
/// sorted and bracket `t`.
fn omega_at(samples: &[GyroSample], t: f64) -> Vector3<f64> {
    debug_assert!(samples.len() >= 2);
    let i = match samples.binary_search_by(|s| s.t.partial_cmp(&t).unwrap()) {
        Ok(i) => return samples[i].omega,
        Err(i) => i,
    };
    debug_assert!(i > 0 && i < samples.len(), "t={t} outside the sample range");
    let (a, b) = (&samples[i - 1], &samples[i]);
    let w = (t - a.t) / (b.t - a.t);
    a.omega * (1.0 - w) + b.omega * w
}

/// Integrate the gyro over an exposure window into per-interval rotations.
///
/// The window edges rarely coincide with sample timestamps, so ω is linearly
/// interpolated to `t_start` and `t_start + tau` and those synthetic samples
/// bound the interval list; interior samples split it. Each interval
/// integrates ω by the trapezoidal rule and exponentiates the result to a
/// single axis-angle rotation. The number of intervals m is therefore
/// `(samples inside the window after boundary resampling) − 1`.
pub fn integrate_window(samples: &[GyroSample], w: &ExposureWindow) -> Result<Vec<RotationDelta>, GyroError> {
    if samples.len() < 2 {
        return Err(GyroError::TooFewSamples);
    }
    let (t0, t1) = (w.t_start, w.t_end());
    let (log_start, log_end) = (samples[0].t, samples[samples.len() - 1].t);
    if t0 < log_start || t1 > log_end {
        return Err(GyroError::WindowNotCovered { t_start: t0, t_end: t1, log_start, log_end });
    }

    let mut times = Vec::new();
    let mut rates = Vec::new();
    times.push(t0);
    rates.push(omega_at(samples, t0));
    for s in samples {
        if s.t > t0 && s.t < t1 {
            times.push(s.t);
            rates.push(s.omega);
        }
    }
    times.push(t1);
    rates.push(omega_at(samples, t1));

    let mut deltas = Vec::with_capacity(times.len() - 1);
    for j in 0..times.len() - 1 {
        let dt = times[j + 1] - times[j];
        let rotvec = (rates[j] + rates[j + 1]) * (0.5 * dt);
        let rot = AxisAngleRotation::from_scaled_axis(rotvec);
        if rot.angle() > std::f64::consts::FRAC_PI_2 {
            return Err(GyroError::ExcessiveRotation { angle: rot.angle() });
        }
        deltas.push(RotationDelta { rot, t0: times[j], t1: times[j + 1] });
    }
    Ok(deltas)
}

/// Chain per-interval rotations into cumulative poses: m+1 poses, identity at
/// the start, each step right-composing the next body-frame increment.
/// Composition goes through unit quaternions, so orthonormality holds to
/// machine precision at every step.
pub fn pose_chain(deltas: &[RotationDelta]) -> Result<Vec<CameraPose>, GyroError> {
    if deltas.is_empty() {
        return Err(GyroError::TooFewSamples);
    }
    let mut poses = Vec::with_capacity(deltas.len() + 1);
    poses.push(CameraPose { t: deltas[0].t0, orientation: AxisAngleRotation::identity() });
    for d in deltas {
        let prev = poses.last().unwrap().orientation;
        poses.push(CameraPose { t: d.t1, orientation: prev.then(&d.rot) });
    }
    Ok(poses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse(s: &str) -> Result<Vec<GyroSample>, GyroError> {
        parse_gyro_log(Cursor::new(s.as_bytes()))
    }

    #[test]
    fn parse_two_rows() {
        let samples = parse("0.000,0,0,0\n0.005,0,0.1,0\n").unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[1].omega.y, 0.1);
        assert_eq!(samples[1].t, 0.005);
    }

    #[test]
    fn parse_with_header() {
        let samples = parse("t_sec,omega_x,omega_y,omega_z\n0,0.5,0,0\n0.01,0.5,0,0\n").unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[0].omega.x, 0.5);
    }

    #[test]
    fn parse_empty_is_error() {
        assert!(matches!(parse(""), Err(GyroError::EmptyLog)));
        assert!(matches!(parse("t,x,y,z\n"), Err(GyroError::EmptyLog)));
    }

    #[test]
    fn parse_nonmonotonic_is_error() {
        let r = parse("0.010,0,0,0\n0.005,0,0,0\n");
        assert!(matches!(r, Err(GyroError::NonMonotonicTimestamps { line: 2, .. })));
    }

    #[test]
    fn parse_malformed_rows() {
        assert!(matches!(parse("0.0,1,2\n"), Err(GyroError::MalformedRow { line: 1, .. })));
        assert!(matches!(parse("0,0,0,0\n0.01,a,0,0\n"), Err(GyroError::MalformedRow { line: 2, .. })));
        assert!(matches!(parse("0,200,0,0\n"), Err(GyroError::MalformedRow { .. })), "rate sanity bound");
    }

    fn const_log(omega: Vector3<f64>, dt: f64, n: usize) -> Vec<GyroSample> {
        (0..n).map(|i| GyroSample { t: i as f64 * dt, omega }).collect()
    }

    #[test]
    fn integrate_constant_yaw() {
        let samples = const_log(Vector3::new(0.0, 0.2, 0.0), 0.005, 7);
        let w = ExposureWindow::new(0.0, 0.030).unwrap();
        let deltas = integrate_window(&samples, &w).unwrap();
        assert_eq!(deltas.len(), 6, "native rate gives m = 6");
        for d in &deltas {
            assert!((d.rot.angle() - 0.001).abs() < 1e-15, "angle {}", d.rot.angle());
            assert!((d.rot.axis() - Vector3::y()).norm() < 1e-12);
        }
    }

    #[test]
    fn integrate_zero_rate() {
        let samples = const_log(Vector3::zeros(), 0.005, 7);
        let w = ExposureWindow::new(0.0, 0.030).unwrap();
        let deltas = integrate_window(&samples, &w).unwrap();
        assert_eq!(deltas.len(), 6);
        assert!(deltas.iter().all(|d| d.rot.is_identity()));
        let poses = pose_chain(&deltas).unwrap();
        assert!(poses.iter().all(|p| p.orientation.is_identity()), "zero rate chains to identities");
    }

    #[test]
    fn alignment_rotates_samples_at_ingest() {
        use std::io::Cursor;
        // Swap x and y and flip z: a rig mounted sideways.
        let align = Matrix3::new(0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, -1.0);
        let samples = parse_gyro_log_aligned(Cursor::new(b"0,0.1,0.2,0.3\n0.01,0.1,0.2,0.3\n" as &[u8]), &align).unwrap();
        assert_eq!(samples[0].omega, Vector3::new(0.2, 0.1, -0.3));
    }

    #[test]
    fn integrate_ramp_matches_closed_form() {
        // omega_y ramps 0 -> 0.2 rad/s across the window; the trapezoidal
        // rule is exact on a linear ramp, so the total equals 0.1*tau.
        let tau = 0.030;
        let samples: Vec<GyroSample> = (0..7)
            .map(|i| {
                let t = i as f64 * 0.005;
                GyroSample { t, omega: Vector3::new(0.0, 0.2 * t / tau, 0.0) }
            })
            .collect();
        let w = ExposureWindow::new(0.0, tau).unwrap();
        let deltas = integrate_window(&samples, &w).unwrap();
        let total: f64 = deltas.iter().map(|d| d.rot.angle()).sum();
        assert!((total - 0.1 * tau).abs() < 1e-12, "total {total}");
        // Per-interval angles are the trapezoid areas of the ramp.
        for (j, d) in deltas.iter().enumerate() {
            let (ta, tb) = (j as f64 * 0.005, (j + 1) as f64 * 0.005);
            let area = 0.5 * (0.2 * ta / tau + 0.2 * tb / tau) * 0.005;
            assert!((d.rot.angle() - area).abs() < 1e-15);
        }
    }

    #[test]
    fn integrate_resamples_window_boundaries() {
        let samples = const_log(Vector3::new(0.0, 0.2, 0.0), 0.005, 7);
        let w = ExposureWindow::new(0.0025, 0.025).unwrap();
        let deltas = integrate_window(&samples, &w).unwrap();
        // Boundaries at 2.5 ms and 27.5 ms plus interior samples at
        // 5..25 ms: 7 resampled instants, 6 intervals.
        assert_eq!(deltas.len(), 6);
        assert_eq!(deltas[0].t0, 0.0025);
        assert_eq!(deltas[5].t1, 0.0275);
        let total: f64 = deltas.iter().map(|d| d.rot.angle()).sum();
        assert!((total - 0.2 * 0.025).abs() < 1e-15);
    }

    #[test]
    fn integrate_window_not_covered() {
        let samples = const_log(Vector3::zeros(), 0.005, 7);
        let w = ExposureWindow::new(0.02, 0.02).unwrap();
        assert!(matches!(integrate_window(&samples, &w), Err(GyroError::WindowNotCovered { .. })));
        let w = ExposureWindow::new(-0.01, 0.02).unwrap();
        assert!(matches!(integrate_window(&samples, &w), Err(GyroError::WindowNotCovered { .. })));
    }

    #[test]
    fn pose_chain_single_and_repeated_yaw() {
        let d = |angle: f64, t0: f64| RotationDelta {
            rot: AxisAngleRotation::new(Vector3::y(), angle),
            t0,
            t1: t0 + 0.005,
        };
        let poses = pose_chain(&[d(0.01, 0.0)]).unwrap();
        assert_eq!(poses.len(), 2);
        assert!(poses[0].orientation.is_identity());
        assert!((poses[1].orientation.angle() - 0.01).abs() < 1e-15);

        let deltas: Vec<RotationDelta> = (0..6).map(|j| d(0.001, j as f64 * 0.005)).collect();
        let poses = pose_chain(&deltas).unwrap();
        assert_eq!(poses.len(), 7);
        let last = poses[6].orientation;
        assert!((last.angle() - 0.006).abs() < 1e-12, "same-axis composition is additive");
        assert!((last.axis() - Vector3::y()).norm() < 1e-12);
    }

    #[test]
    fn pose_chain_matches_ordered_matrix_product() {
        let axes = [
            Vector3::new(1.0, 0.2, 0.0),
            Vector3::new(0.0, 1.0, -0.4),
            Vector3::new(0.3, -0.3, 1.0),
        ];
        let deltas: Vec<RotationDelta> = axes
            .iter()
            .enumerate()
            .map(|(j, a)| RotationDelta {
                rot: AxisAngleRotation::new(*a, 0.02 + 0.01 * j as f64),
                t0: j as f64 * 0.005,
                t1: (j + 1) as f64 * 0.005,
            })
            .collect();
        let poses = pose_chain(&deltas).unwrap();

        // Independent check: the final orientation equals the ordered
        // product of the per-interval matrices.
        let mut product = Matrix3::identity();
        for d in &deltas {
            product = d.rot.matrix() * product;
        }
        let diff = (poses.last().unwrap().orientation.matrix() - product).norm();
        assert!(diff < 1e-12, "pose chain differs from matrix product by {diff}");

        // Orthonormality at every step.
        for p in &poses {
            let m = p.orientation.matrix();
            let err = (m.transpose() * m - Matrix3::identity()).norm();
            assert!(err < 1e-9);
        }
    }

    #[test]
    fn sequential_deltas_equal_final_pose_on_a_ray() {
        let deltas: Vec<RotationDelta> = [(0.03, Vector3::x()), (0.02, Vector3::y()), (-0.04, Vector3::z())]
            .iter()
            .enumerate()
            .map(|(j, (a, axis))| RotationDelta {
                rot: AxisAngleRotation::new(*axis, *a),
                t0: j as f64 * 0.005,
                t1: (j + 1) as f64 * 0.005,
            })
            .collect();
        let poses = pose_chain(&deltas).unwrap();
        let ray = Vector3::new(0.2, -0.1, 1.0);
        let mut stepped = ray;
        for d in &deltas {
            stepped = d.rot.rotate(&stepped);
        }
        let once = poses.last().unwrap().orientation.rotate(&ray);
        assert!((stepped - once).norm() < 1e-9);
    }

    #[test]
    fn splitting_intervals_barely_moves_single_axis_pose() {
        // On a single-axis ramp all increments commute, so halving the
        // sample spacing leaves the final pose unchanged to rounding.
        let tau = 0.030;
        let ramp = |t: f64| Vector3::new(0.0, 2.0 * t / tau, 0.0);
        let coarse: Vec<GyroSample> = (0..7).map(|i| GyroSample { t: i as f64 * 0.005, omega: ramp(i as f64 * 0.005) }).collect();
        let fine: Vec<GyroSample> = (0..13).map(|i| GyroSample { t: i as f64 * 0.0025, omega: ramp(i as f64 * 0.0025) }).collect();
        let w = ExposureWindow::new(0.0, tau).unwrap();
        let pc = pose_chain(&integrate_window(&coarse, &w).unwrap()).unwrap();
        let pf = pose_chain(&integrate_window(&fine, &w).unwrap()).unwrap();
        let diff = pc.last().unwrap().orientation.then(&pf.last().unwrap().orientation.inverse());
        assert!(diff.angle() < 1e-12, "single-axis split changed pose by {}", diff.angle());
    }

    #[test]
    fn splitting_intervals_bounded_for_mixed_axes() {
        // Mixed-axis motion: the refinement difference is bounded by the
        // second-order term sum(|omega|^2 * dt^2 / 2).
        let rate = |t: f64| Vector3::new((40.0 * t).sin(), 2.0 * (33.0 * t).cos(), 0.5);
        let coarse: Vec<GyroSample> = (0..7).map(|i| { let t = i as f64 * 0.005; GyroSample { t, omega: rate(t) } }).collect();
        let fine: Vec<GyroSample> = (0..13).map(|i| { let t = i as f64 * 0.0025; GyroSample { t, omega: rate(t) } }).collect();
        let w = ExposureWindow::new(0.0, 0.030).unwrap();
        let pc = pose_chain(&integrate_window(&coarse, &w).unwrap()).unwrap();
        let pf = pose_chain(&integrate_window(&fine, &w).unwrap()).unwrap();
        let diff = pc.last().unwrap().orientation.then(&pf.last().unwrap().orientation.inverse());
        let omega_max: f64 = (0..=30).map(|i| rate(i as f64 * 0.001).norm()).fold(0.0, f64::max);
        let bound = 6.0 * omega_max * omega_max * 0.005 * 0.005 / 2.0;
        assert!(diff.angle() <= bound, "split moved pose by {} > bound {}", diff.angle(), bound);
    }
}
