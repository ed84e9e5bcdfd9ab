//! Shared fixture helpers for the integration suites.

use blurforge_core::warp::ImageBuffer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;

/// Smooth pseudo-natural RGB image: slow large-scale structure plus gentle
/// detail, roughly matching the scale statistics of a defocused photograph.
/// Deterministic in the seed.
pub fn natural_image(w: u32, h: u32, seed: u64) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Broad blobs carry the large-scale brightness; narrow ones add texture
    // at amplitudes that keep region means stable.
    let blobs: Vec<(f32, f32, f32, f32)> = (0..18)
        .map(|i| {
            let broad = i < 6;
            let r = if broad {
                rng.gen_range((w / 2) as f32..(2 * w) as f32)
            } else {
                rng.gen_range((w.max(16) / 16) as f32..(w / 4) as f32)
            };
            let amp = if broad { rng.gen_range(-0.12..0.12) } else { rng.gen_range(-0.06..0.06) };
            (rng.gen_range(0.0..w as f32), rng.gen_range(0.0..h as f32), r, amp)
        })
        .collect();
    let (fu, fv) = (rng.gen_range(2.0..5.0), rng.gen_range(2.0..5.0));
    ImageBuffer::from_fn(w, h, 3, |x, y, c| {
        let mut v = 0.5;
        for (i, &(bx, by, r, amp)) in blobs.iter().enumerate() {
            if i % 3 == c as usize % 3 || i % 2 == 0 {
                let d2 = ((x as f32 - bx).powi(2) + (y as f32 - by).powi(2)) / (r * r);
                v += amp * (-d2).exp();
            }
        }
        let phase = (x as f32 / w as f32) * fu + (y as f32 / h as f32) * fv;
        v += 0.03 * (std::f32::consts::TAU * phase).sin();
        v.clamp(0.02, 0.98)
    })
}

/// Write a constant-rate gyro CSV covering [0, duration].
pub fn write_gyro_csv(path: &Path, omega: (f64, f64, f64), duration: f64, rate: f64) {
    let mut body = String::from("t_sec,omega_x,omega_y,omega_z\n");
    let n = (duration * rate).ceil() as usize;
    for i in 0..=n {
        let t = i as f64 / rate;
        body.push_str(&format!("{},{},{},{}\n", t, omega.0, omega.1, omega.2));
    }
    std::fs::write(path, body).unwrap();
}
