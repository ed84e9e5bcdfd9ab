//! Blur-trajectory tracing and stage/substep planning.
//!
//! A blur trajectory is the path a scene point's projection traces during
//! the exposure, discretized as m+1 nodes at gyro-interval boundaries. The
//! stage plan assigns each stage enough substeps that adjacent warped
//! samples sit at most one pixel apart, capped to bound synthesis cost.

use crate::geom::{rotation_map, AxisAngleRotation, CameraIntrinsics, GeomError, PixelPoint};
use crate::imu::RotationDelta;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trajectory tracing needs at least one rotation delta")]
    EmptyDeltas,
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error("tracing failed at {} of {total} points; first failure at index {}: {}", failures.len(), failures[0].0, failures[0].1)]
    AtPoints { total: usize, failures: Vec<(usize, GeomError)> },
    #[error("trajectories disagree on stage count ({0} vs {1})")]
    MixedStageCounts(usize, usize),
    #[error("stage plan needs at least one trajectory")]
    NoTrajectories,
}

/// Ordered trajectory nodes plus the chord length of each stage.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurTrajectory {
    /// m+1 pixel positions, one per gyro-interval boundary.
    pub nodes: Vec<PixelPoint>,
    /// m node-to-node chord lengths, pixels.
    pub stage_lengths: Vec<f64>,
}

impl BlurTrajectory {
    pub fn stages(&self) -> usize {
        self.stage_lengths.len()
    }

    pub fn start(&self) -> PixelPoint {
        self.nodes[0]
    }

    pub fn end(&self) -> PixelPoint {
        *self.nodes.last().unwrap()
    }

    pub fn total_length(&self) -> f64 {
        self.stage_lengths.iter().sum()
    }
}

/// Substep counts per stage.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StagePlan {
    pub n: Vec<u32>,
}

impl StagePlan {
    pub fn stages(&self) -> usize {
        self.n.len()
    }

    /// Total number of warped substep frames the plan requests.
    pub fn total_substeps(&self) -> u64 {
        self.n.iter().map(|&n| n as u64).sum()
    }
}

/// Trace one point through the per-interval rotations: each node is the
/// previous node mapped through the next interval's rotation, from exposure
/// start to end.
pub fn trace_point(
    p0: PixelPoint,
    deltas: &[RotationDelta],
    k: &CameraIntrinsics,
) -> Result<BlurTrajectory, TraceError> {
    if deltas.is_empty() {
        return Err(TraceError::EmptyDeltas);
    }
    let mut nodes = Vec::with_capacity(deltas.len() + 1);
    let mut stage_lengths = Vec::with_capacity(deltas.len());
    nodes.push(p0);
    for d in deltas {
        let prev = *nodes.last().unwrap();
        let next = rotation_map(prev, &d.rot, k)?;
        stage_lengths.push(next.distance(&prev));
        nodes.push(next);
    }
    Ok(BlurTrajectory { nodes, stage_lengths })
}

/// Cumulative direction rotations: element j is the composition of deltas
/// 1..=j+1 in application order.
pub fn cumulative_rotations(deltas: &[RotationDelta]) -> Vec<AxisAngleRotation> {
    let mut out = Vec::with_capacity(deltas.len());
    let mut acc = AxisAngleRotation::identity();
    for d in deltas {
        acc = acc.then(&d.rot);
        out.push(acc);
    }
    out
}

/// Single-shot variant of [`trace_point`]: every node is the start point
/// mapped once through the cumulative rotation. Under the pure-rotation
/// model this equals the iterative trace to well below a micropixel and is
/// the form used for dense per-pixel tracing.
pub fn trace_point_cumulative(
    p0: PixelPoint,
    cumulative: &[AxisAngleRotation],
    k: &CameraIntrinsics,
) -> Result<BlurTrajectory, TraceError> {
    if cumulative.is_empty() {
        return Err(TraceError::EmptyDeltas);
    }
    let mut nodes = Vec::with_capacity(cumulative.len() + 1);
    nodes.push(p0);
    for rot in cumulative {
        nodes.push(rotation_map(p0, rot, k)?);
    }
    let stage_lengths = nodes.windows(2).map(|w| w[1].distance(&w[0])).collect();
    Ok(BlurTrajectory { nodes, stage_lengths })
}

/// Trace a list of points; failures are collected with their point indices.
pub fn trace_grid(
    points: &[PixelPoint],
    deltas: &[RotationDelta],
    k: &CameraIntrinsics,
) -> Result<Vec<BlurTrajectory>, TraceError> {
    if deltas.is_empty() {
        return Err(TraceError::EmptyDeltas);
    }
    let mut trajs = Vec::with_capacity(points.len());
    let mut failures = Vec::new();
    for (i, &p) in points.iter().enumerate() {
        match trace_point(p, deltas, k) {
            Ok(t) => trajs.push(t),
            Err(TraceError::Geom(e)) => failures.push((i, e)),
            Err(other) => return Err(other),
        }
    }
    if !failures.is_empty() {
        return Err(TraceError::AtPoints { total: points.len(), failures });
    }
    Ok(trajs)
}

/// Build the per-stage substep plan from traced trajectories:
/// `n_j = min(n_cap, max(1, ceil(max_k l_jk)))`, so substep spacing stays at
/// or below one pixel until the cap kicks in.
pub fn stage_plan(trajs: &[BlurTrajectory], n_cap: u32) -> Result<StagePlan, TraceError> {
    let first = trajs.first().ok_or(TraceError::NoTrajectories)?;
    let m = first.stages();
    for t in trajs {
        if t.stages() != m {
            return Err(TraceError::MixedStageCounts(m, t.stages()));
        }
    }
    let n = (0..m)
        .map(|j| {
            let longest = trajs.iter().map(|t| t.stage_lengths[j]).fold(0.0, f64::max);
            (longest.ceil() as u32).clamp(1, n_cap.max(1))
        })
        .collect();
    Ok(StagePlan { n })
}

/// Points spaced evenly along the image border (by perimeter arc length,
/// clockwise from the top-left corner). Under a pure-rotation homography the
/// displacement field peaks on the boundary, so these together with the
/// corners stand in for a full-frame max when planning stages.
pub fn border_points(width: u32, height: u32, count: usize) -> Vec<PixelPoint> {
    let w = (width - 1) as f64;
    let h = (height - 1) as f64;
    let perimeter = 2.0 * (w + h);
    (0..count)
        .map(|i| {
            let mut s = perimeter * i as f64 / count as f64;
            if s < w {
                return PixelPoint::new(s, 0.0);
            }
            s -= w;
            if s < h {
                return PixelPoint::new(w, s);
            }
            s -= h;
            if s < w {
                return PixelPoint::new(w - s, h);
            }
            s -= w;
            PixelPoint::new(0.0, h - s)
        })
        .collect()
}
