//! Trajectory-endpoint evaluation and image-quality metrics.
//!
//! Endpoint evaluation follows the laser-dot protocol: given a start point
//! and the gyro over the exposure, predict where the blur streak ends and
//! compare with the annotated endpoint. Image metrics are PSNR, SSIM
//! (11x11 Gaussian window, σ = 1.5, K1 = 0.01, K2 = 0.03, L = 1), and the
//! two-scale Euclidean loss with its 0.6 coarse-scale weight.

use crate::geom::{CameraIntrinsics, PixelPoint};
use crate::imu::{integrate_window, ExposureWindow, GyroError, GyroSample};
use crate::trajectory::{trace_point, TraceError};
use crate::warp::ImageBuffer;
use std::io::BufRead;
use thiserror::Error;

/// Coarse-scale weight ω of the two-scale loss.
pub const DEFAULT_LOSS_OMEGA: f64 = 0.6;

/// PSNR reported for identical images, dB.
pub const PSNR_CAP: f64 = 99.0;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("image dimensions differ: {0}x{1}x{2} vs {3}x{4}x{5}")]
    DimensionMismatch(u32, u32, u8, u32, u32, u8),
    #[error("image too small for an 11x11 SSIM window: {0}x{1}")]
    TooSmall(u32, u32),
    #[error("malformed annotation row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("no annotation records")]
    EmptyAnnotations,
    #[error(transparent)]
    Gyro(#[from] GyroError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// One annotated blur streak: where it started, where it was observed to
/// end, and the exposure window its gyro data covers.
#[derive(Debug, Clone)]
pub struct EndpointRecord {
    pub id: String,
    pub start: PixelPoint,
    pub observed_end: PixelPoint,
    pub window: ExposureWindow,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct RecordError {
    pub id: String,
    pub error_px: f64,
}

/// Aggregated evaluation output; only the fields relevant to the run are
/// populated.
#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct MetricReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_error: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub per_record: Vec<RecordError>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psnr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ssim: Option<f64>,
}

/// Predict the endpoint of the blur streak that starts at `rec.start`: trace
/// the start point through the gyro window and take the final node.
pub fn predict_endpoint(
    rec: &EndpointRecord,
    samples: &[GyroSample],
    k: &CameraIntrinsics,
) -> Result<PixelPoint, MetricsError> {
    let deltas = integrate_window(samples, &rec.window)?;
    Ok(trace_point(rec.start, &deltas, k)?.end())
}

/// Euclidean distance between predicted and observed endpoints, pixels.
pub fn endpoint_error(predicted: PixelPoint, observed: PixelPoint) -> f64 {
    predicted.distance(&observed)
}

/// Evaluate a record set: per-record endpoint errors in input order plus
/// their mean.
pub fn evaluate_endpoints(
    records: &[EndpointRecord],
    samples: &[GyroSample],
    k: &CameraIntrinsics,
) -> Result<MetricReport, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyAnnotations);
    }
    let mut per_record = Vec::with_capacity(records.len());
    let mut sum = 0.0;
    for rec in records {
        let predicted = predict_endpoint(rec, samples, k)?;
        let err = endpoint_error(predicted, rec.observed_end);
        sum += err;
        per_record.push(RecordError { id: rec.id.clone(), error_px: err });
    }
    Ok(MetricReport {
        mean_error: Some(sum / records.len() as f64),
        per_record,
        ..Default::default()
    })
}

/// Parse endpoint annotations:
/// `record_id,u_start,v_start,u_end,v_end,t_start,tau`, header optional.
pub fn parse_endpoint_annotations<R: BufRead>(reader: R) -> Result<Vec<EndpointRecord>, MetricsError> {
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| MetricsError::MalformedRow { line: line_no, reason: e.to_string() })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 7 {
            return Err(MetricsError::MalformedRow {
                line: line_no,
                reason: format!("expected 7 columns, got {}", fields.len()),
            });
        }
        let mut nums = [0.0f64; 6];
        let mut numeric = true;
        for (i, f) in fields[1..].iter().enumerate() {
            match f.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => nums[i] = v,
                _ => {
                    numeric = false;
                    break;
                }
            }
        }
        if !numeric {
            if records.is_empty() && idx == 0 {
                continue; // header
            }
            return Err(MetricsError::MalformedRow { line: line_no, reason: "non-numeric field".to_string() });
        }
        let window = ExposureWindow::new(nums[4], nums[5])?;
        records.push(EndpointRecord {
            id: fields[0].trim().to_string(),
            start: PixelPoint::new(nums[0], nums[1]),
            observed_end: PixelPoint::new(nums[2], nums[3]),
            window,
        });
    }
    if records.is_empty() {
        return Err(MetricsError::EmptyAnnotations);
    }
    Ok(records)
}

fn check_dims(a: &ImageBuffer, b: &ImageBuffer) -> Result<(), MetricsError> {
    if a.width != b.width || a.height != b.height || a.channels != b.channels {
        return Err(MetricsError::DimensionMismatch(a.width, a.height, a.channels, b.width, b.height, b.channels));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB over the linear [0, 1] domain, capped at
/// 99 dB.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64, MetricsError> {
    check_dims(a, b)?;
    let mse = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        / a.data.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

/// Mean local SSIM with an 11x11 Gaussian window (σ = 1.5), K1 = 0.01,
/// K2 = 0.03, L = 1. Windows are fully interior (valid mode); channels are
/// averaged.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64, MetricsError> {
    check_dims(a, b)?;
    const WIN: u32 = 11;
    if a.width < WIN || a.height < WIN {
        return Err(MetricsError::TooSmall(a.width, a.height));
    }
    let window = gaussian_window(WIN as usize, 1.5);
    let c1 = (0.01f64 * 1.0).powi(2);
    let c2 = (0.03f64 * 1.0).powi(2);

    let mut total = 0.0;
    let mut count = 0u64;
    for ch in 0..a.channels {
        for y0 in 0..=(a.height - WIN) {
            for x0 in 0..=(a.width - WIN) {
                let mut mx = 0.0;
                let mut my = 0.0;
                let mut mxx = 0.0;
                let mut myy = 0.0;
                let mut mxy = 0.0;
                let mut wi = 0;
                for dy in 0..WIN {
                    for dx in 0..WIN {
                        let w = window[wi];
                        wi += 1;
                        let x = a.get(x0 + dx, y0 + dy, ch) as f64;
                        let y = b.get(x0 + dx, y0 + dy, ch) as f64;
                        mx += w * x;
                        my += w * y;
                        mxx += w * x * x;
                        myy += w * y * y;
                        mxy += w * x * y;
                    }
                }
                let vx = mxx - mx * mx;
                let vy = myy - my * my;
                let cov = mxy - mx * my;
                let s = ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                total += s;
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size as f64 - 1.0) / 2.0;
    let mut w = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let du = x as f64 - half;
            let dv = y as f64 - half;
            w.push((-(du * du + dv * dv) / (2.0 * sigma * sigma)).exp());
        }
    }
    let sum: f64 = w.iter().sum();
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Two-scale Euclidean loss:
/// `‖l1−s1‖/k1 + ω·‖l3−s3‖/k3` with `k_n` the element count of scale n.
/// The caller supplies `s3` already downsampled to l3's size (bilinear).
pub fn multiscale_loss(
    l1: &ImageBuffer,
    s1: &ImageBuffer,
    l3: &ImageBuffer,
    s3: &ImageBuffer,
    omega: f64,
) -> Result<f64, MetricsError> {
    check_dims(l1, s1)?;
    check_dims(l3, s3)?;
    let norm = |a: &ImageBuffer, b: &ImageBuffer| {
        a.data
            .iter()
            .zip(&b.data)
            .map(|(&x, &y)| {
                let d = x as f64 - y as f64;
                d * d
            })
            .sum::<f64>()
            .sqrt()
    };
    Ok(norm(l1, s1) / l1.data.len() as f64 + omega * norm(l3, s3) / l3.data.len() as f64)
}

/// Bilinear downsample by an integer factor; used to build the coarse scale
/// of the two-scale loss.
pub fn bilinear_downsample(img: &ImageBuffer, factor: u32) -> ImageBuffer {
    assert!(factor >= 1);
    let w = (img.width / factor).max(1);
    let h = (img.height / factor).max(1);
    let sx = img.width as f64 / w as f64;
    let sy = img.height as f64 / h as f64;
    ImageBuffer::from_fn(w, h, img.channels, |x, y, c| {
        let u = (x as f64 + 0.5) * sx - 0.5;
        let v = (y as f64 + 0.5) * sy - 0.5;
        img.sample_bilinear(u, v, c).0
    })
}
