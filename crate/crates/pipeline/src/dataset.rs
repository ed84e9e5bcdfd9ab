//! Batch triplet generation over a directory of background images.
//!
//! Each background gets one exposure window, picked by the configured
//! policy. Items are independent: the per-item RNG is seeded from
//! SHA-256(global seed, item index), so outputs are identical no matter how
//! many workers run or in what order items finish. Per-item failures are
//! recorded in the manifest as error strings; only unreadable configuration
//! or output locations abort the run.

use crate::formats::{load_png, save_heatmap, save_mask_png, save_png};
use crate::manifest::{
    sha256_file, write_manifest, FitFlags, Manifest, ManifestEntry, ManifestError, TripletFiles,
    SCHEMA_VERSION,
};
use blurforge_core::geom::CameraIntrinsics;
use blurforge_core::imu::{integrate_window, parse_gyro_log_aligned, ExposureWindow, GyroSample};
use blurforge_core::synth::{make_triplet, SynthConfig};
use blurforge_core::trajectory::trace_grid;
use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("gyro log: {0}")]
    Gyro(#[from] blurforge_core::imu::GyroError),
    #[error("no background images (*.png) found in {0}")]
    NoBackgrounds(String),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// How exposure windows are assigned to items.
#[derive(Debug, Clone, PartialEq)]
pub enum WindowPolicy {
    /// Explicit start times, cycled by item index; tau comes from the
    /// config.
    Fixed(Vec<f64>),
    /// Seeded random windows over the log, rejecting windows whose largest
    /// corner path is shorter than `min_blur_px`.
    Random { seed: u64, min_blur_px: f64 },
}

impl WindowPolicy {
    pub fn describe(&self) -> String {
        match self {
            Self::Fixed(starts) => format!("fixed({} windows)", starts.len()),
            Self::Random { seed, min_blur_px } => {
                format!("random(seed={seed}, min_blur_px={min_blur_px})")
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct DatasetConfig {
    pub backgrounds_dir: PathBuf,
    pub gyro_log: PathBuf,
    pub intrinsics: CameraIntrinsics,
    pub policy: WindowPolicy,
    pub tau: f64,
    pub synth: SynthConfig,
    pub srgb_linearize: bool,
    /// Fixed gyro-to-camera axis alignment applied to every sample
    /// (identity when the gyro shares the camera axes).
    pub gyro_alignment: Matrix3<f64>,
    pub output_dir: PathBuf,
}

/// Per-item RNG seed: SHA-256 over the global seed and the item index.
fn item_rng(global_seed: u64, index: u64) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(global_seed.to_le_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}

/// Largest corner path length for a window, used by the no-blur rejection.
fn max_corner_path(
    samples: &[GyroSample],
    window: &ExposureWindow,
    k: &CameraIntrinsics,
) -> Result<f64, String> {
    let deltas = integrate_window(samples, window).map_err(|e| e.to_string())?;
    let trajs = trace_grid(&k.corners(), &deltas, k).map_err(|e| e.to_string())?;
    Ok(trajs.iter().map(|t| t.total_length()).fold(0.0, f64::max))
}

fn pick_window(
    cfg: &DatasetConfig,
    samples: &[GyroSample],
    index: u64,
) -> Result<ExposureWindow, String> {
    match &cfg.policy {
        WindowPolicy::Fixed(starts) => {
            if starts.is_empty() {
                return Err("fixed window policy with no windows".to_string());
            }
            let t_start = starts[index as usize % starts.len()];
            ExposureWindow::new(t_start, cfg.tau).map_err(|e| e.to_string())
        }
        WindowPolicy::Random { seed, min_blur_px } => {
            let mut rng = item_rng(*seed, index);
            let lo = samples[0].t;
            let hi = samples[samples.len() - 1].t - cfg.tau;
            if hi < lo {
                return Err(format!("gyro log shorter than tau = {}", cfg.tau));
            }
            for _ in 0..64 {
                let t_start = rng.gen_range(lo..=hi);
                let window = ExposureWindow::new(t_start, cfg.tau).map_err(|e| e.to_string())?;
                if max_corner_path(samples, &window, &cfg.intrinsics)? >= *min_blur_px {
                    return Ok(window);
                }
            }
            Err(format!("no window with at least {min_blur_px} px of blur in 64 draws"))
        }
    }
}

fn generate_one(
    cfg: &DatasetConfig,
    samples: &[GyroSample],
    index: u64,
    background: &Path,
) -> ManifestEntry {
    let id = background
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| format!("item{index:05}"));
    let fail = |id: &str, msg: String| ManifestEntry {
        id: id.to_string(),
        error: Some(msg),
        files: None,
        window: None,
        stage_plan: None,
        fit: None,
        contaminated_fraction: None,
        checksums: BTreeMap::new(),
    };

    let sharp = match load_png(background, cfg.srgb_linearize) {
        Ok(img) => img,
        Err(e) => return fail(&id, format!("load: {e}")),
    };
    if sharp.width != cfg.intrinsics.width || sharp.height != cfg.intrinsics.height {
        return fail(
            &id,
            format!(
                "background is {}x{} but the intrinsics describe a {}x{} sensor",
                sharp.width, sharp.height, cfg.intrinsics.width, cfg.intrinsics.height
            ),
        );
    }

    let window = match pick_window(cfg, samples, index) {
        Ok(w) => w,
        Err(e) => return fail(&id, format!("window: {e}")),
    };
    let deltas = match integrate_window(samples, &window) {
        Ok(d) => d,
        Err(e) => return fail(&id, format!("integrate: {e}")),
    };
    let triplet = match make_triplet(&sharp, &deltas, &cfg.intrinsics, &cfg.synth) {
        Ok(t) => t,
        Err(e) => return fail(&id, format!("synthesize: {e}")),
    };

    let files = TripletFiles::for_id(&id);
    let out = |rel: &str| cfg.output_dir.join(rel);
    let write = (|| -> Result<(), String> {
        save_png(&out(&files.sharp), &triplet.sharp, cfg.srgb_linearize).map_err(|e| e.to_string())?;
        save_png(&out(&files.blurred), &triplet.blurred, cfg.srgb_linearize).map_err(|e| e.to_string())?;
        save_mask_png(
            &out(&files.mask),
            &triplet.contamination_mask,
            triplet.sharp.width,
            triplet.sharp.height,
        )
        .map_err(|e| e.to_string())?;
        save_heatmap(&out(&files.heatmap_control_raw), &triplet.heatmap_control, cfg.synth.d_max)
            .map_err(|e| e.to_string())?;
        save_heatmap(&out(&files.heatmap_endpoint_raw), &triplet.heatmap_endpoint, cfg.synth.d_max)
            .map_err(|e| e.to_string())?;
        Ok(())
    })();
    if let Err(e) = write {
        return fail(&id, format!("write: {e}"));
    }

    let mut checksums = BTreeMap::new();
    for rel in files.all() {
        match sha256_file(&out(rel)) {
            Ok(hex) => {
                checksums.insert(rel.to_string(), hex);
            }
            Err(e) => return fail(&id, format!("checksum: {e}")),
        }
    }

    ManifestEntry {
        id,
        error: None,
        files: Some(files),
        window: Some(window),
        stage_plan: Some(triplet.meta.stage_plan.clone()),
        fit: Some(FitFlags {
            ok_fraction: triplet.meta.fit_ok_fraction,
            max_deviation_px: triplet.meta.fit_max_deviation,
            fit_tol: triplet.meta.fit_tol,
        }),
        contaminated_fraction: Some(triplet.meta.contaminated_fraction),
        checksums,
    }
}

/// Generate one triplet per background image and write the manifest.
/// `workers` caps the rayon pool; outputs are byte-identical for any
/// worker count.
pub fn generate_dataset(cfg: &DatasetConfig, workers: usize) -> Result<Manifest, DatasetError> {
    if !(cfg.tau > 0.0 && cfg.tau <= 1.0) {
        return Err(DatasetError::InvalidConfig(format!("tau = {} out of (0, 1]", cfg.tau)));
    }
    let log_file = std::fs::File::open(&cfg.gyro_log)
        .map_err(|e| DatasetError::Io { path: cfg.gyro_log.display().to_string(), source: e })?;
    let samples = parse_gyro_log_aligned(BufReader::new(log_file), &cfg.gyro_alignment)?;

    let mut backgrounds: Vec<PathBuf> = std::fs::read_dir(&cfg.backgrounds_dir)
        .map_err(|e| DatasetError::Io { path: cfg.backgrounds_dir.display().to_string(), source: e })?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext.eq_ignore_ascii_case("png")))
        .collect();
    backgrounds.sort();
    if backgrounds.is_empty() {
        return Err(DatasetError::NoBackgrounds(cfg.backgrounds_dir.display().to_string()));
    }

    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| DatasetError::Io { path: cfg.output_dir.display().to_string(), source: e })?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| DatasetError::InvalidConfig(e.to_string()))?;
    let entries: Vec<ManifestEntry> = pool.install(|| {
        backgrounds
            .par_iter()
            .enumerate()
            .map(|(idx, path)| generate_one(cfg, &samples, idx as u64, path))
            .collect()
    });

    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        intrinsics: cfg.intrinsics,
        tau: cfg.tau,
        window_policy: cfg.policy.describe(),
        entries,
    };
    write_manifest(&cfg.output_dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn item_rng_streams_are_stable_and_distinct() {
        let a: Vec<u32> = (0..4).map(|_| item_rng(42, 0).gen()).collect();
        let b: Vec<u32> = (0..4).map(|_| item_rng(42, 0).gen()).collect();
        assert_eq!(a, b, "same (seed, index) gives the same stream");
        let c: u32 = item_rng(42, 1).gen();
        let d: u32 = item_rng(43, 0).gen();
        assert_ne!(a[0], c);
        assert_ne!(a[0], d);
    }

    #[test]
    fn fixed_policy_cycles() {
        let cfg = DatasetConfig {
            backgrounds_dir: PathBuf::new(),
            gyro_log: PathBuf::new(),
            intrinsics: CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480).unwrap(),
            policy: WindowPolicy::Fixed(vec![0.0, 0.01]),
            tau: 0.03,
            synth: SynthConfig::default(),
            srgb_linearize: true,
            gyro_alignment: Matrix3::identity(),
            output_dir: PathBuf::new(),
        };
        let samples: Vec<GyroSample> = (0..20)
            .map(|i| GyroSample { t: i as f64 * 0.005, omega: nalgebra::Vector3::zeros() })
            .collect();
        assert_eq!(pick_window(&cfg, &samples, 0).unwrap().t_start, 0.0);
        assert_eq!(pick_window(&cfg, &samples, 1).unwrap().t_start, 0.01);
        assert_eq!(pick_window(&cfg, &samples, 2).unwrap().t_start, 0.0);
    }

    #[test]
    fn random_policy_rejects_motionless_logs() {
        let cfg = DatasetConfig {
            backgrounds_dir: PathBuf::new(),
            gyro_log: PathBuf::new(),
            intrinsics: CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480).unwrap(),
            policy: WindowPolicy::Random { seed: 7, min_blur_px: 1.0 },
            tau: 0.03,
            synth: SynthConfig::default(),
            srgb_linearize: true,
            gyro_alignment: Matrix3::identity(),
            output_dir: PathBuf::new(),
        };
        let still: Vec<GyroSample> = (0..40)
            .map(|i| GyroSample { t: i as f64 * 0.005, omega: nalgebra::Vector3::zeros() })
            .collect();
        assert!(pick_window(&cfg, &still, 0).is_err(), "no-blur windows must be rejected");

        let moving: Vec<GyroSample> = (0..40)
            .map(|i| GyroSample { t: i as f64 * 0.005, omega: nalgebra::Vector3::new(0.0, 0.8, 0.0) })
            .collect();
        let w = pick_window(&cfg, &moving, 0).unwrap();
        assert!(w.t_start >= 0.0 && w.t_end() <= 0.195 + 1e-12);
    }
}
