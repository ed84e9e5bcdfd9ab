//! Composite blurred-image synthesis and training-triplet assembly.
//!
//! The exposure is split into m stages (one per gyro interval); stage j is
//! subdivided into n_j substeps so consecutive warped samples sit at most a
//! pixel apart. Every substep warps the ORIGINAL sharp frame by the
//! cumulative corner homography — warping frame-to-frame would compound
//! bilinear losses, and homographies compose exactly under the
//! pure-rotation model. The blurred image is the average of stage averages;
//! the sharp frame itself joins stage 1 as the exposure-start sample, making
//! that stage's divisor n_1 + 1.

use crate::bezier::{
    encode_heatmaps, fit_cubic_bezier, fit_deviation, fit_deviation_upper_bound, BezierError,
    CurveGrid, HeatmapField, DEFAULT_D_MAX, DEFAULT_FIT_TOL,
};
use crate::geom::{CameraIntrinsics, PixelPoint};
use crate::imu::RotationDelta;
use crate::trajectory::{
    border_points, cumulative_rotations, stage_plan, trace_grid, trace_point_cumulative,
    BlurTrajectory, StagePlan, TraceError,
};
use crate::warp::{substep_homography, warp_image, ImageBuffer, WarpError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("sharp image is {0}x{1} but the intrinsics describe a {2}x{3} sensor")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("corner trajectories collapse the homography preconditions: {0}")]
    DegenerateCorners(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Warp(#[from] WarpError),
    #[error(transparent)]
    Bezier(#[from] BezierError),
}

/// Synthesis knobs; the defaults match the dataset pipeline.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SynthConfig {
    /// Cap on substeps per stage.
    pub n_cap: u32,
    /// Extra border points (beyond the 4 corners) used for stage planning.
    pub boundary_points: usize,
    /// Max node-to-curve deviation for a Bezier fit to count as ok, px.
    pub fit_tol: f64,
    /// Offset normalization scale for heatmap views, px.
    pub d_max: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { n_cap: 64, boundary_points: 16, fit_tol: DEFAULT_FIT_TOL, d_max: DEFAULT_D_MAX }
    }
}

/// Output of [`compose_blur`].
#[derive(Debug, Clone)]
pub struct BlurComposition {
    pub blurred: ImageBuffer,
    /// True where any contributing substep sampled out of bounds.
    pub contamination_mask: Vec<bool>,
    pub stage_plan: StagePlan,
    pub corner_trajs: [BlurTrajectory; 4],
}

/// Streaming double average: frames arrive grouped by stage, each stage is
/// averaged, and the stage means are averaged at the end. Accumulation is
/// f64 in a fixed order, so results do not depend on scheduling.
pub struct BlurAccumulator {
    width: u32,
    height: u32,
    channels: u8,
    stages: usize,
    stage_acc: Vec<f64>,
    stage_count: u32,
    current_stage: usize,
    total_acc: Vec<f64>,
    stages_done: usize,
    contaminated: Vec<bool>,
}

impl BlurAccumulator {
    pub fn new(width: u32, height: u32, channels: u8, stages: usize) -> Self {
        let n = (width * height) as usize * channels as usize;
        Self {
            width,
            height,
            channels,
            stages,
            stage_acc: vec![0.0; n],
            stage_count: 0,
            current_stage: 0,
            total_acc: vec![0.0; n],
            stages_done: 0,
            contaminated: vec![false; (width * height) as usize],
        }
    }

    /// Add one frame to a stage. Stages must be fed in order 0..stages.
    pub fn push_frame(&mut self, stage: usize, image: &ImageBuffer, invalid: Option<&[bool]>) {
        assert_eq!((image.width, image.height, image.channels), (self.width, self.height, self.channels));
        assert!(stage == self.current_stage || stage == self.current_stage + 1, "stages arrive in order");
        if stage != self.current_stage {
            self.flush_stage();
            self.current_stage = stage;
        }
        for (acc, &v) in self.stage_acc.iter_mut().zip(&image.data) {
            *acc += v as f64;
        }
        self.stage_count += 1;
        if let Some(mask) = invalid {
            for (c, &valid) in self.contaminated.iter_mut().zip(mask) {
                *c |= !valid;
            }
        }
    }

    fn flush_stage(&mut self) {
        assert!(self.stage_count > 0, "a stage got no frames");
        let inv = 1.0 / self.stage_count as f64;
        for (total, acc) in self.total_acc.iter_mut().zip(self.stage_acc.iter_mut()) {
            *total += *acc * inv;
            *acc = 0.0;
        }
        self.stage_count = 0;
        self.stages_done += 1;
    }

    pub fn finish(mut self) -> (ImageBuffer, Vec<bool>) {
        self.flush_stage();
        assert_eq!(self.stages_done, self.stages, "every stage must be fed");
        let inv = 1.0 / self.stages as f64;
        let data = self.total_acc.iter().map(|&v| ((v * inv) as f32).clamp(0.0, 1.0)).collect();
        (
            ImageBuffer { width: self.width, height: self.height, channels: self.channels, data },
            self.contaminated,
        )
    }
}

fn map_degenerate(e: WarpError) -> SynthError {
    match e {
        WarpError::DegenerateCorrespondences(msg) => SynthError::DegenerateCorners(msg),
        other => SynthError::Warp(other),
    }
}

/// Synthesize the blurred image for one exposure.
pub fn compose_blur(
    sharp: &ImageBuffer,
    deltas: &[RotationDelta],
    k: &CameraIntrinsics,
    cfg: &SynthConfig,
) -> Result<BlurComposition, SynthError> {
    if sharp.width != k.width || sharp.height != k.height {
        return Err(SynthError::DimensionMismatch(sharp.width, sharp.height, k.width, k.height));
    }
    sharp.validate()?;

    let corners = k.corners();
    let corner_list = trace_grid(&corners, deltas, k)?;
    let corner_trajs: [BlurTrajectory; 4] = [
        corner_list[0].clone(),
        corner_list[1].clone(),
        corner_list[2].clone(),
        corner_list[3].clone(),
    ];

    // Stage plan from the corners plus a border grid: the displacement field
    // of a rotation homography peaks on the image boundary.
    let mut plan_points = corners.to_vec();
    plan_points.extend(border_points(k.width, k.height, cfg.boundary_points));
    let plan_trajs = trace_grid(&plan_points, deltas, k)?;
    let plan = stage_plan(&plan_trajs, cfg.n_cap)?;

    compose_from_corner_trajs(sharp, &corner_trajs, &plan, &corners)
}

/// The synthesis core, exposed separately so trajectories and plans can be
/// driven directly.
pub fn compose_from_corner_trajs(
    sharp: &ImageBuffer,
    corner_trajs: &[BlurTrajectory; 4],
    plan: &StagePlan,
    base_corners: &[PixelPoint; 4],
) -> Result<BlurComposition, SynthError> {
    let m = plan.stages();
    if m == 0 || corner_trajs.iter().any(|t| t.stages() != m) {
        return Err(SynthError::Trace(TraceError::MixedStageCounts(
            m,
            corner_trajs.iter().map(|t| t.stages()).max().unwrap_or(0),
        )));
    }
    let mut acc = BlurAccumulator::new(sharp.width, sharp.height, sharp.channels, m);
    for (j, &n_j) in plan.n.iter().enumerate() {
        if j == 0 {
            // First-frame rule: the sharp exposure-start sample joins
            // stage 1.
            acc.push_frame(0, sharp, None);
        }
        for i in 0..n_j {
            let h = substep_homography(corner_trajs, j, i, n_j, base_corners).map_err(map_degenerate)?;
            let frame = warp_image(sharp, &h)?;
            acc.push_frame(j, &frame.image, Some(&frame.valid_mask));
        }
    }
    let (blurred, contamination_mask) = acc.finish();
    Ok(BlurComposition {
        blurred,
        contamination_mask,
        stage_plan: plan.clone(),
        corner_trajs: corner_trajs.clone(),
    })
}

/// Everything the dataset pipeline stores per training example.
#[derive(Debug, Clone)]
pub struct Triplet {
    pub sharp: ImageBuffer,
    pub blurred: ImageBuffer,
    pub heatmap_control: HeatmapField,
    pub heatmap_endpoint: HeatmapField,
    pub contamination_mask: Vec<bool>,
    pub meta: TripletMeta,
}

/// Provenance and quality record carried alongside a triplet.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TripletMeta {
    pub t_start: f64,
    pub tau: f64,
    pub intrinsics: CameraIntrinsics,
    pub stage_plan: StagePlan,
    /// Fraction of per-pixel Bezier fits within the fit tolerance.
    pub fit_ok_fraction: f64,
    /// Worst per-pixel fit deviation, px (conservative for passing fits).
    pub fit_max_deviation: f64,
    /// Fraction of pixels whose blurred value includes out-of-bounds samples.
    pub contaminated_fraction: f64,
    pub d_max: f64,
    pub fit_tol: f64,
}

/// Aggregate per-pixel fit quality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitStats {
    pub ok_fraction: f64,
    pub max_deviation: f64,
}

/// Trace and fit a Bezier curve for every pixel of the sensor. Pixels are
/// traced through the cumulative rotations; each fit is accepted via the
/// cheap deviation bound and re-measured with the dense scan only when the
/// bound crosses the tolerance.
pub fn fit_curve_grid(
    deltas: &[RotationDelta],
    k: &CameraIntrinsics,
    fit_tol: f64,
) -> Result<(CurveGrid, FitStats), SynthError> {
    let cumulative = cumulative_rotations(deltas);
    let n_px = (k.width * k.height) as usize;
    let mut curves = Vec::with_capacity(n_px);
    let mut ok_count = 0usize;
    let mut max_dev = 0.0f64;
    for y in 0..k.height {
        for x in 0..k.width {
            let p0 = PixelPoint::new(x as f64, y as f64);
            let traj = trace_point_cumulative(p0, &cumulative, k)?;
            let curve = fit_cubic_bezier(&traj.nodes)?;
            let bound = fit_deviation_upper_bound(&curve, &traj.nodes);
            let dev = if bound <= fit_tol {
                bound
            } else {
                fit_deviation(&curve, &traj.nodes, fit_tol)?.max_deviation
            };
            if dev <= fit_tol {
                ok_count += 1;
            }
            max_dev = max_dev.max(dev);
            curves.push(curve);
        }
    }
    let grid = CurveGrid::new(k.width, k.height, curves)?;
    Ok((grid, FitStats { ok_fraction: ok_count as f64 / n_px as f64, max_deviation: max_dev }))
}

/// Build a full training triplet: blurred image, per-pixel Bezier heatmaps,
/// and metadata. Deterministic for identical inputs.
pub fn make_triplet(
    sharp: &ImageBuffer,
    deltas: &[RotationDelta],
    k: &CameraIntrinsics,
    cfg: &SynthConfig,
) -> Result<Triplet, SynthError> {
    let composition = compose_blur(sharp, deltas, k, cfg)?;
    let (grid, fit_stats) = fit_curve_grid(deltas, k, cfg.fit_tol)?;
    let (heatmap_control, heatmap_endpoint) = encode_heatmaps(&grid);

    let contaminated = composition.contamination_mask.iter().filter(|&&c| c).count();
    let (t_start, t_end) = (deltas[0].t0, deltas[deltas.len() - 1].t1);
    let n_px = (k.width * k.height) as usize;
    let meta = TripletMeta {
        t_start,
        tau: t_end - t_start,
        intrinsics: *k,
        stage_plan: composition.stage_plan.clone(),
        fit_ok_fraction: fit_stats.ok_fraction,
        fit_max_deviation: fit_stats.max_deviation,
        contaminated_fraction: contaminated as f64 / n_px as f64,
        d_max: cfg.d_max,
        fit_tol: cfg.fit_tol,
    };
    Ok(Triplet {
        sharp: sharp.clone(),
        blurred: composition.blurred,
        heatmap_control,
        heatmap_endpoint,
        contamination_mask: composition.contamination_mask,
        meta,
    })
}
