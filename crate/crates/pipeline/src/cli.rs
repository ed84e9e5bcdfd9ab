//! Command-line interface. Exit codes: 0 on success, 1 on validation or
//! usage errors, 2 on I/O errors.

use crate::dataset::{generate_dataset, DatasetConfig, DatasetError, WindowPolicy};
use crate::formats::{load_png, save_heatmap, save_mask_png, save_png, FormatError};
use crate::manifest::{validate_manifest, ManifestError, ValidationIssue};
use blurforge_core::bezier::render_heatmap_viz;
use blurforge_core::geom::{CameraIntrinsics, PixelPoint};
use blurforge_core::imu::{integrate_window, parse_gyro_log, ExposureWindow, GyroSample};
use blurforge_core::metrics::{evaluate_endpoints, parse_endpoint_annotations, psnr, ssim, MetricReport};
use blurforge_core::motion::{parse_motion_spec, sample_gyro};
use blurforge_core::synth::{compose_blur, fit_curve_grid, SynthConfig};
use blurforge_core::trajectory::trace_point;
use blurforge_core::warp::ImageBuffer;
use clap::{Args, Parser, Subcommand};
use std::ffi::OsString;
use std::io::BufReader;
use std::path::{Path, PathBuf};

#[derive(Debug)]
enum AppError {
    Validation(String),
    Io(String),
}

impl AppError {
    fn exit_code(&self) -> i32 {
        match self {
            AppError::Validation(_) => 1,
            AppError::Io(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            AppError::Validation(m) | AppError::Io(m) => m,
        }
    }

    fn validation(e: impl std::fmt::Display) -> Self {
        AppError::Validation(e.to_string())
    }
}

impl From<FormatError> for AppError {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Io { .. } | FormatError::Decode { .. } => AppError::Io(e.to_string()),
            FormatError::Sidecar { .. } => AppError::Validation(e.to_string()),
        }
    }
}

impl From<DatasetError> for AppError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io { .. } | DatasetError::NoBackgrounds(_) => AppError::Io(e.to_string()),
            DatasetError::Manifest(ManifestError::Io { .. }) => AppError::Io(e.to_string()),
            other => AppError::Validation(other.to_string()),
        }
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Io(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "blurforge",
    about = "Gyroscope-driven motion-blur synthesis, heatmap encoding, and evaluation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Camera intrinsics flags shared by the geometry-driven subcommands.
/// Unspecified focal lengths default to 600 px scaled by width/640; the
/// principal point defaults to the frame center.
#[derive(Args, Debug, Clone)]
struct IntrinsicsArgs {
    /// Sensor width in pixels (taken from the input image when one exists)
    #[arg(long)]
    width: Option<u32>,
    /// Sensor height in pixels (taken from the input image when one exists)
    #[arg(long)]
    height: Option<u32>,
    /// Focal length in pixels along x
    #[arg(long)]
    fx: Option<f64>,
    /// Focal length in pixels along y
    #[arg(long)]
    fy: Option<f64>,
    /// Principal point x in pixels
    #[arg(long)]
    cx: Option<f64>,
    /// Principal point y in pixels
    #[arg(long)]
    cy: Option<f64>,
}

impl IntrinsicsArgs {
    fn resolve(&self, image_dims: Option<(u32, u32)>) -> Result<CameraIntrinsics, AppError> {
        let (width, height) = match image_dims {
            Some((w, h)) => {
                if self.width.is_some_and(|fw| fw != w) || self.height.is_some_and(|fh| fh != h) {
                    return Err(AppError::Validation(format!(
                        "--width/--height disagree with the {w}x{h} input image"
                    )));
                }
                (w, h)
            }
            None => (self.width.unwrap_or(640), self.height.unwrap_or(480)),
        };
        let fx = self.fx.unwrap_or(600.0 * width as f64 / 640.0);
        let fy = self.fy.unwrap_or(fx);
        let cx = self.cx.unwrap_or(width as f64 / 2.0);
        let cy = self.cy.unwrap_or(height as f64 / 2.0);
        CameraIntrinsics::new(fx, fy, cx, cy, width, height).map_err(AppError::validation)
    }
}

/// Where the angular-velocity data comes from: a CSV log or an analytic
/// motion spec sampled at --rate.
#[derive(Args, Debug, Clone)]
struct GyroSourceArgs {
    /// Gyro log CSV (t_sec,omega_x,omega_y,omega_z)
    #[arg(long, conflicts_with_all = ["motion", "yaw_rate", "pitch_rate", "roll_rate"])]
    gyro: Option<PathBuf>,
    /// Analytic motion spec, e.g. "const:yaw=0.5+sin:axis=roll,amp=1,freq=8"
    #[arg(long, conflicts_with_all = ["yaw_rate", "pitch_rate", "roll_rate"])]
    motion: Option<String>,
    /// Constant yaw rate, rad/s (shorthand for const:yaw=...)
    #[arg(long)]
    yaw_rate: Option<f64>,
    /// Constant pitch rate, rad/s
    #[arg(long)]
    pitch_rate: Option<f64>,
    /// Constant roll rate, rad/s
    #[arg(long)]
    roll_rate: Option<f64>,
    /// Sampling rate for analytic motions, Hz
    #[arg(long, default_value_t = 200.0)]
    rate: f64,
}

impl GyroSourceArgs {
    fn samples(&self, window: &ExposureWindow) -> Result<Vec<GyroSample>, AppError> {
        if let Some(path) = &self.gyro {
            let file = std::fs::File::open(path)
                .map_err(|e| AppError::Io(format!("{}: {e}", path.display())))?;
            return parse_gyro_log(BufReader::new(file)).map_err(AppError::validation);
        }
        let spec = if let Some(spec) = &self.motion {
            spec.clone()
        } else {
            let mut terms = Vec::new();
            if let Some(y) = self.yaw_rate {
                terms.push(format!("yaw={y}"));
            }
            if let Some(p) = self.pitch_rate {
                terms.push(format!("pitch={p}"));
            }
            if let Some(r) = self.roll_rate {
                terms.push(format!("roll={r}"));
            }
            if terms.is_empty() {
                return Err(AppError::Validation(
                    "no gyro source: pass --gyro, --motion, or a --*-rate flag".to_string(),
                ));
            }
            format!("const:{}", terms.join(","))
        };
        let model = parse_motion_spec(&spec).map_err(AppError::validation)?;
        Ok(sample_gyro(model.as_ref(), window.t_start, window.tau, self.rate))
    }
}

#[derive(Args, Debug, Clone)]
struct WindowArgs {
    /// Exposure start, seconds
    #[arg(long, default_value_t = 0.0)]
    t_start: f64,
    /// Exposure duration, seconds
    #[arg(long, default_value_t = 0.030)]
    tau: f64,
}

impl WindowArgs {
    fn window(&self) -> Result<ExposureWindow, AppError> {
        ExposureWindow::new(self.t_start, self.tau).map_err(AppError::validation)
    }
}

fn parse_point(s: &str) -> Result<PixelPoint, String> {
    let (u, v) = s.split_once(',').ok_or_else(|| format!("expected u,v — got {s:?}"))?;
    let u: f64 = u.trim().parse().map_err(|_| format!("bad u in {s:?}"))?;
    let v: f64 = v.trim().parse().map_err(|_| format!("bad v in {s:?}"))?;
    Ok(PixelPoint::new(u, v))
}

fn parse_alignment(spec: &str) -> Result<nalgebra::Matrix3<f64>, AppError> {
    let vals: Result<Vec<f64>, _> = spec.split(',').map(|s| s.trim().parse::<f64>()).collect();
    match vals {
        Ok(v) if v.len() == 9 => Ok(nalgebra::Matrix3::from_row_slice(&v)),
        _ => Err(AppError::Validation(format!(
            "--gyro-alignment needs nine row-major numbers, got {spec:?}"
        ))),
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Trace one point's blur trajectory through a gyro window
    Trace {
        /// Start point as "u,v"
        #[arg(long, value_parser = parse_point)]
        point: PixelPoint,
        #[command(flatten)]
        window: WindowArgs,
        #[command(flatten)]
        source: GyroSourceArgs,
        #[command(flatten)]
        intrinsics: IntrinsicsArgs,
        /// Write the trajectory JSON here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthesize a blurred image from a sharp one
    Synth {
        /// Sharp input PNG
        #[arg(long)]
        sharp: PathBuf,
        /// Output blurred PNG
        #[arg(long)]
        out_blurred: PathBuf,
        /// Optional output contamination-mask PNG (1-bit)
        #[arg(long)]
        out_mask: Option<PathBuf>,
        #[command(flatten)]
        window: WindowArgs,
        #[command(flatten)]
        source: GyroSourceArgs,
        #[command(flatten)]
        intrinsics: IntrinsicsArgs,
        /// Convert sRGB files to linear light for synthesis (and back)
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        srgb_linearize: bool,
        /// Substep cap per stage
        #[arg(long, default_value_t = 64)]
        n_cap: u32,
    },
    /// Fit per-pixel Bezier curves and write heatmap fields plus splat
    /// renderings
    Heatmap {
        #[command(flatten)]
        window: WindowArgs,
        #[command(flatten)]
        source: GyroSourceArgs,
        #[command(flatten)]
        intrinsics: IntrinsicsArgs,
        /// Output directory (created if missing)
        #[arg(long)]
        out_dir: PathBuf,
        /// Stride between splatted pixels in the rendering
        #[arg(long, default_value_t = 16)]
        stride: u32,
        /// Offset normalization scale, px
        #[arg(long, default_value_t = 100.0)]
        d_max: f64,
        /// Fit tolerance, px
        #[arg(long, default_value_t = 0.5)]
        fit_tol: f64,
    },
    /// Generate a dataset of training triplets from background images
    Dataset {
        /// Directory of background PNGs
        #[arg(long)]
        backgrounds: PathBuf,
        /// Gyro log CSV
        #[arg(long)]
        gyro: PathBuf,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        /// Exposure duration, seconds
        #[arg(long, default_value_t = 0.030)]
        tau: f64,
        /// Global seed for the random window policy
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fixed window start times "t0,t1,...", cycled per item
        /// (overrides the random policy)
        #[arg(long)]
        windows: Option<String>,
        /// Reject random windows whose longest corner path is below this, px
        #[arg(long, default_value_t = 1.0)]
        min_blur: f64,
        /// Worker threads (capped by BLURFORGE_THREADS)
        #[arg(long)]
        workers: Option<usize>,
        /// Gyro-to-camera axis alignment: nine row-major values
        /// "r00,r01,...,r22" (identity when omitted)
        #[arg(long)]
        gyro_alignment: Option<String>,
        #[command(flatten)]
        intrinsics: IntrinsicsArgs,
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        srgb_linearize: bool,
        #[arg(long, default_value_t = 64)]
        n_cap: u32,
        #[arg(long, default_value_t = 100.0)]
        d_max: f64,
        #[arg(long, default_value_t = 0.5)]
        fit_tol: f64,
    },
    /// Check a manifest against the files on disk
    Validate {
        /// Path to manifest.json
        manifest: PathBuf,
    },
    /// Evaluate predicted trajectory endpoints against annotations
    EvalEndpoints {
        /// Annotation CSV: record_id,u_start,v_start,u_end,v_end,t_start,tau
        #[arg(long)]
        annotations: PathBuf,
        /// Gyro log CSV
        #[arg(long)]
        gyro: PathBuf,
        #[command(flatten)]
        intrinsics: IntrinsicsArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// PSNR and SSIM between two images
    Metrics {
        a: PathBuf,
        b: PathBuf,
        /// Compute over sRGB code values (the 8-bit convention) instead of
        /// linear light
        #[arg(long)]
        srgb: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample an analytic motion into a gyro CSV
    SimulateGyro {
        /// Motion spec, e.g. "sin:axis=yaw,amp=1.5,freq=6"
        #[arg(long)]
        motion: String,
        /// Log duration, seconds
        #[arg(long, default_value_t = 0.1)]
        duration: f64,
        /// Sample rate, Hz
        #[arg(long, default_value_t = 200.0)]
        rate: f64,
        /// First sample timestamp, seconds
        #[arg(long, default_value_t = 0.0)]
        t_start: f64,
        /// Output CSV path (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Run the CLI; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version land here; they are not errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

fn emit(out: Option<&Path>, body: &str) -> Result<(), AppError> {
    match out {
        Some(path) => std::fs::write(path, format!("{body}\n"))
            .map_err(|e| AppError::Io(format!("{}: {e}", path.display()))),
        None => {
            println!("{body}");
            Ok(())
        }
    }
}

#[derive(serde::Serialize)]
struct TraceOutput {
    point: [f64; 2],
    m: usize,
    nodes: Vec<[f64; 2]>,
    stage_lengths: Vec<f64>,
    total_length: f64,
}

fn dispatch(cmd: Command) -> Result<(), AppError> {
    match cmd {
        Command::Trace { point, window, source, intrinsics, out } => {
            let w = window.window()?;
            let k = intrinsics.resolve(None)?;
            let samples = source.samples(&w)?;
            let deltas = integrate_window(&samples, &w).map_err(AppError::validation)?;
            let traj = trace_point(point, &deltas, &k).map_err(AppError::validation)?;
            let output = TraceOutput {
                point: [point.u, point.v],
                m: traj.stages(),
                nodes: traj.nodes.iter().map(|n| [n.u, n.v]).collect(),
                stage_lengths: traj.stage_lengths.clone(),
                total_length: traj.total_length(),
            };
            emit(out.as_deref(), &serde_json::to_string_pretty(&output).unwrap())
        }
        Command::Synth {
            sharp,
            out_blurred,
            out_mask,
            window,
            source,
            intrinsics,
            srgb_linearize,
            n_cap,
        } => {
            let w = window.window()?;
            let img = load_png(&sharp, srgb_linearize)?;
            let k = intrinsics.resolve(Some((img.width, img.height)))?;
            let samples = source.samples(&w)?;
            let deltas = integrate_window(&samples, &w).map_err(AppError::validation)?;
            let cfg = SynthConfig { n_cap, ..SynthConfig::default() };
            let comp = compose_blur(&img, &deltas, &k, &cfg).map_err(AppError::validation)?;
            save_png(&out_blurred, &comp.blurred, srgb_linearize)?;
            if let Some(mask_path) = &out_mask {
                save_mask_png(mask_path, &comp.contamination_mask, img.width, img.height)?;
            }
            let contaminated = comp.contamination_mask.iter().filter(|&&c| c).count() as f64
                / comp.contamination_mask.len() as f64;
            let summary = serde_json::json!({
                "blurred": out_blurred,
                "mask": out_mask,
                "stage_plan": comp.stage_plan,
                "contaminated_fraction": contaminated,
            });
            emit(None, &serde_json::to_string_pretty(&summary).unwrap())
        }
        Command::Heatmap { window, source, intrinsics, out_dir, stride, d_max, fit_tol } => {
            let w = window.window()?;
            let k = intrinsics.resolve(None)?;
            let samples = source.samples(&w)?;
            let deltas = integrate_window(&samples, &w).map_err(AppError::validation)?;
            let (grid, stats) = fit_curve_grid(&deltas, &k, fit_tol).map_err(AppError::validation)?;
            let (hc, he) = blurforge_core::bezier::encode_heatmaps(&grid);
            std::fs::create_dir_all(&out_dir)?;
            save_heatmap(&out_dir.join("hc"), &hc, d_max)?;
            save_heatmap(&out_dir.join("he"), &he, d_max)?;
            let viz_c = render_heatmap_viz(&hc, stride);
            let viz_e = render_heatmap_viz(&he, stride);
            save_viz(&out_dir.join("hc_viz.png"), &viz_c)?;
            save_viz(&out_dir.join("he_viz.png"), &viz_e)?;
            let summary = serde_json::json!({
                "out_dir": out_dir,
                "fit_ok_fraction": stats.ok_fraction,
                "fit_max_deviation_px": stats.max_deviation,
                "fit_tol": fit_tol,
            });
            emit(None, &serde_json::to_string_pretty(&summary).unwrap())
        }
        Command::Dataset {
            backgrounds,
            gyro,
            out,
            tau,
            seed,
            windows,
            min_blur,
            workers,
            gyro_alignment,
            intrinsics,
            srgb_linearize,
            n_cap,
            d_max,
            fit_tol,
        } => {
            let k = intrinsics.resolve(None)?;
            let policy = match windows {
                Some(list) => {
                    let starts: Result<Vec<f64>, _> =
                        list.split(',').map(|s| s.trim().parse::<f64>()).collect();
                    WindowPolicy::Fixed(starts.map_err(|_| {
                        AppError::Validation(format!("bad --windows list: {list:?}"))
                    })?)
                }
                None => WindowPolicy::Random { seed, min_blur_px: min_blur },
            };
            let alignment = match gyro_alignment {
                Some(spec) => parse_alignment(&spec)?,
                None => nalgebra::Matrix3::identity(),
            };
            let cfg = DatasetConfig {
                backgrounds_dir: backgrounds,
                gyro_log: gyro,
                intrinsics: k,
                policy,
                tau,
                synth: SynthConfig { n_cap, d_max, fit_tol, ..SynthConfig::default() },
                srgb_linearize,
                gyro_alignment: alignment,
                output_dir: out.clone(),
            };
            let manifest = generate_dataset(&cfg, effective_workers(workers))?;
            let ok = manifest.ok_entries().count();
            let summary = serde_json::json!({
                "manifest": out.join("manifest.json"),
                "entries": manifest.entries.len(),
                "ok": ok,
                "failed": manifest.entries.len() - ok,
            });
            emit(None, &serde_json::to_string_pretty(&summary).unwrap())
        }
        Command::Validate { manifest } => {
            let (m, issues) = validate_manifest(&manifest).map_err(|e| match e {
                ManifestError::Io { .. } => AppError::Io(e.to_string()),
                ManifestError::Parse(_) => AppError::Validation(e.to_string()),
            })?;
            let summary = serde_json::json!({
                "entries": m.entries.len(),
                "issues": issues,
            });
            emit(None, &serde_json::to_string_pretty(&summary).unwrap())?;
            if issues.is_empty() {
                Ok(())
            } else {
                Err(AppError::Validation(format!(
                    "{} validation issue(s): {}",
                    issues.len(),
                    issues.iter().map(ValidationIssue::to_string).collect::<Vec<_>>().join("; ")
                )))
            }
        }
        Command::EvalEndpoints { annotations, gyro, intrinsics, out } => {
            let k = intrinsics.resolve(None)?;
            let ann_file = std::fs::File::open(&annotations)
                .map_err(|e| AppError::Io(format!("{}: {e}", annotations.display())))?;
            let records =
                parse_endpoint_annotations(BufReader::new(ann_file)).map_err(AppError::validation)?;
            let gyro_file = std::fs::File::open(&gyro)
                .map_err(|e| AppError::Io(format!("{}: {e}", gyro.display())))?;
            let samples = parse_gyro_log(BufReader::new(gyro_file)).map_err(AppError::validation)?;
            let report = evaluate_endpoints(&records, &samples, &k).map_err(AppError::validation)?;
            emit(out.as_deref(), &serde_json::to_string_pretty(&report).unwrap())
        }
        Command::Metrics { a, b, srgb, out } => {
            let ia = load_png(&a, !srgb)?;
            let ib = load_png(&b, !srgb)?;
            let report = MetricReport {
                psnr: Some(psnr(&ia, &ib).map_err(AppError::validation)?),
                ssim: Some(ssim(&ia, &ib).map_err(AppError::validation)?),
                ..Default::default()
            };
            emit(out.as_deref(), &serde_json::to_string_pretty(&report).unwrap())
        }
        Command::SimulateGyro { motion, duration, rate, t_start, out } => {
            let model = parse_motion_spec(&motion).map_err(AppError::validation)?;
            if !(duration > 0.0 && rate > 0.0) {
                return Err(AppError::Validation("duration and rate must be positive".to_string()));
            }
            let samples = sample_gyro(model.as_ref(), t_start, duration, rate);
            let mut body = String::from("t_sec,omega_x,omega_y,omega_z\n");
            for s in &samples {
                body.push_str(&format!("{},{},{},{}\n", s.t, s.omega.x, s.omega.y, s.omega.z));
            }
            match out {
                Some(path) => std::fs::write(&path, body)
                    .map_err(|e| AppError::Io(format!("{}: {e}", path.display()))),
                None => {
                    print!("{body}");
                    Ok(())
                }
            }
        }
    }
}

fn save_viz(path: &Path, img: &ImageBuffer) -> Result<(), AppError> {
    // Splat renderings are display artifacts; store code values directly.
    save_png(path, img, false).map_err(AppError::from)
}

/// Requested workers capped by the BLURFORGE_THREADS environment variable.
fn effective_workers(requested: Option<usize>) -> usize {
    let available = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let requested = requested.unwrap_or(available).max(1);
    match std::env::var("BLURFORGE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        Some(cap) if cap >= 1 => requested.min(cap),
        _ => requested,
    }
}
