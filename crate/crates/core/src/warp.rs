//! Homography estimation and bilinear image warping.
//!
//! Homographies map source pixel coordinates to destination coordinates
//! (`dst ~ H·src` in homogeneous form). Warping iterates destination pixels
//! and pulls samples from the source through the inverse map, so the output
//! has no holes; out-of-bounds pulls replicate the nearest edge sample and
//! are flagged in a validity mask. Images are floating-point, linear-light,
//! range [0, 1].

use crate::geom::PixelPoint;
use crate::trajectory::BlurTrajectory;
use nalgebra::{DMatrix, Matrix3, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WarpError {
    #[error("degenerate correspondences: {0}")]
    DegenerateCorrespondences(String),
    #[error("homography system is singular")]
    SingularSystem,
    #[error("homography is not invertible (|det| = {0:e})")]
    NotInvertible(f64),
    #[error("point maps to infinity (denominator {0:e})")]
    PointAtInfinity(f64),
    #[error("image buffer invalid: {0}")]
    InvalidImage(String),
    #[error("substep index {i} out of range for n_j = {n}")]
    SubstepOutOfRange { i: u32, n: u32 },
}

/// 3x3 projective map in canonical form: scaled so the bottom-right entry is
/// one when it is meaningfully nonzero, otherwise to unit Frobenius norm with
/// a deterministic sign, so equal maps compare equal elementwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    pub fn identity() -> Self {
        Self { m: Matrix3::identity() }
    }

    /// Canonicalize and validate an arbitrary 3x3 matrix as a homography.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, WarpError> {
        let m = canonicalize(m);
        let det = m.determinant();
        if det.abs() <= 1e-12 {
            return Err(WarpError::NotInvertible(det.abs()));
        }
        Ok(Self { m })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn is_identity(&self) -> bool {
        self.m == Matrix3::identity()
    }

    pub fn inverse(&self) -> Result<Homography, WarpError> {
        let inv = self.m.try_inverse().ok_or(WarpError::SingularSystem)?;
        Homography::from_matrix(inv)
    }

    /// Apply the projective map to a pixel position.
    pub fn apply(&self, p: PixelPoint) -> Result<PixelPoint, WarpError> {
        let h = &self.m;
        let w = h[(2, 0)] * p.u + h[(2, 1)] * p.v + h[(2, 2)];
        if w.abs() <= 1e-12 {
            return Err(WarpError::PointAtInfinity(w));
        }
        let u = (h[(0, 0)] * p.u + h[(0, 1)] * p.v + h[(0, 2)]) / w;
        let v = (h[(1, 0)] * p.u + h[(1, 1)] * p.v + h[(1, 2)]) / w;
        Ok(PixelPoint::new(u, v))
    }
}

fn canonicalize(m: Matrix3<f64>) -> Matrix3<f64> {
    if m[(2, 2)].abs() > 1e-12 {
        return m / m[(2, 2)];
    }
    let norm = m.norm();
    let mut m = m / norm;
    // Deterministic sign: first row-major entry of meaningful size decides.
    for r in 0..3 {
        for c in 0..3 {
            if m[(r, c)].abs() > 1e-12 {
                if m[(r, c)] < 0.0 {
                    m = -m;
                }
                return m;
            }
        }
    }
    m
}

fn triangle_area(a: PixelPoint, b: PixelPoint, c: PixelPoint) -> f64 {
    0.5 * ((b.u - a.u) * (c.v - a.v) - (b.v - a.v) * (c.u - a.u)).abs()
}

fn check_nondegenerate(pts: &[PixelPoint; 4], label: &str) -> Result<(), WarpError> {
    for skip in 0..4 {
        let tri: Vec<PixelPoint> = (0..4).filter(|&i| i != skip).map(|i| pts[i]).collect();
        if triangle_area(tri[0], tri[1], tri[2]) < 1e-6 {
            return Err(WarpError::DegenerateCorrespondences(format!(
                "{label} points {:?} are collinear or repeated",
                [(0usize..4).filter(|&i| i != skip).collect::<Vec<_>>()]
            )));
        }
    }
    Ok(())
}

/// Hartley normalization: translate the centroid to the origin and scale the
/// mean radius to sqrt(2). Raw pixel-scale systems are badly conditioned
/// without it.
fn hartley_transform(pts: &[PixelPoint; 4]) -> Matrix3<f64> {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.u).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.v).sum::<f64>() / n;
    let mean_r = pts.iter().map(|p| (p.u - cx).hypot(p.v - cy)).sum::<f64>() / n;
    let s = if mean_r > 1e-12 { std::f64::consts::SQRT_2 / mean_r } else { 1.0 };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

/// Estimate the homography sending the four `src` points to the four `dst`
/// points by the direct linear transform on normalized coordinates.
pub fn dlt_homography(src: &[PixelPoint; 4], dst: &[PixelPoint; 4]) -> Result<Homography, WarpError> {
    check_nondegenerate(src, "source")?;
    check_nondegenerate(dst, "destination")?;

    let ts = hartley_transform(src);
    let td = hartley_transform(dst);
    let map = |t: &Matrix3<f64>, p: PixelPoint| {
        let v = t * Vector3::new(p.u, p.v, 1.0);
        (v.x, v.y)
    };

    let mut a = DMatrix::<f64>::zeros(8, 9);
    for i in 0..4 {
        let (x, y) = map(&ts, src[i]);
        let (u, v) = map(&td, dst[i]);
        let r = 2 * i;
        a[(r, 0)] = -x;
        a[(r, 1)] = -y;
        a[(r, 2)] = -1.0;
        a[(r, 6)] = u * x;
        a[(r, 7)] = u * y;
        a[(r, 8)] = u;
        a[(r + 1, 3)] = -x;
        a[(r + 1, 4)] = -y;
        a[(r + 1, 5)] = -1.0;
        a[(r + 1, 6)] = v * x;
        a[(r + 1, 7)] = v * y;
        a[(r + 1, 8)] = v;
    }

    // Null vector = eigenvector of A^T A for its smallest eigenvalue. The
    // normalized system is well-conditioned, and this sidesteps thin-SVD
    // null-space truncation on the 8x9 matrix.
    let ata = a.transpose() * &a;
    let eig = nalgebra::SymmetricEigen::new(ata);
    let mut idx = 0;
    for (i, ev) in eig.eigenvalues.iter().enumerate() {
        if *ev < eig.eigenvalues[idx] {
            idx = i;
        }
    }
    let h = eig.eigenvectors.column(idx);
    let hn = Matrix3::from_row_slice(&[h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]]);

    let ti = td.try_inverse().ok_or(WarpError::SingularSystem)?;
    Homography::from_matrix(ti * hn * ts)
}

/// Homography that moves the exposure-start corners to their interpolated
/// positions at substep `i` of stage `j`.
///
/// Each destination corner advances from its stage-`j` node along the stage
/// chord by the fraction `(i+1)/n_j`, so substep `n_j − 1` lands exactly on
/// node `j+1`. Degenerate (motionless) trajectories yield the exact identity.
pub fn substep_homography(
    corner_trajs: &[BlurTrajectory; 4],
    j: usize,
    i: u32,
    n_j: u32,
    base_corners: &[PixelPoint; 4],
) -> Result<Homography, WarpError> {
    if i >= n_j {
        return Err(WarpError::SubstepOutOfRange { i, n: n_j });
    }
    let frac = (i + 1) as f64 / n_j as f64;
    let mut dst = [PixelPoint::new(0.0, 0.0); 4];
    for (c, traj) in corner_trajs.iter().enumerate() {
        let a = traj.nodes[j];
        let b = traj.nodes[j + 1];
        dst[c] = PixelPoint::new(a.u + (b.u - a.u) * frac, a.v + (b.v - a.v) * frac);
    }
    if dst == *base_corners {
        return Ok(Homography::identity());
    }
    dlt_homography(base_corners, &dst)
}

/// Row-major floating-point image, 1 or 3 channels, linear-light [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    pub width: u32,
    pub height: u32,
    pub channels: u8,
    pub data: Vec<f32>,
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32, channels: u8, fill: f32) -> Self {
        assert!(channels == 1 || channels == 3, "1 or 3 channels");
        Self { width, height, channels, data: vec![fill; (width * height) as usize * channels as usize] }
    }

    pub fn from_fn(width: u32, height: u32, channels: u8, mut f: impl FnMut(u32, u32, u8) -> f32) -> Self {
        let mut img = Self::new(width, height, channels, 0.0);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    let v = f(x, y, c);
                    img.set(x, y, c, v);
                }
            }
        }
        img
    }

    pub fn validate(&self) -> Result<(), WarpError> {
        if self.channels != 1 && self.channels != 3 {
            return Err(WarpError::InvalidImage(format!("{} channels", self.channels)));
        }
        let expect = (self.width * self.height) as usize * self.channels as usize;
        if self.data.len() != expect {
            return Err(WarpError::InvalidImage(format!(
                "data length {} does not match {}x{}x{}",
                self.data.len(),
                self.width,
                self.height,
                self.channels
            )));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(WarpError::InvalidImage("non-finite sample".to_string()));
        }
        Ok(())
    }

    #[inline]
    pub fn index(&self, x: u32, y: u32, c: u8) -> usize {
        ((y * self.width + x) * self.channels as u32 + c as u32) as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32, c: u8) -> f32 {
        self.data[self.index(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, c: u8, v: f32) {
        let i = self.index(x, y, c);
        self.data[i] = v;
    }

    pub fn pixel_count(&self) -> usize {
        (self.width * self.height) as usize
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    /// Bilinear sample with edge replication. Returns the value and whether
    /// the sample point lay inside the image bounds.
    #[inline]
    pub fn sample_bilinear(&self, u: f64, v: f64, c: u8) -> (f32, bool) {
        let in_bounds =
            u >= 0.0 && v >= 0.0 && u <= (self.width - 1) as f64 && v <= (self.height - 1) as f64;
        let uc = u.clamp(0.0, (self.width - 1) as f64);
        let vc = v.clamp(0.0, (self.height - 1) as f64);
        let x0 = uc.floor();
        let y0 = vc.floor();
        let fx = (uc - x0) as f32;
        let fy = (vc - y0) as f32;
        let x0 = x0 as u32;
        let y0 = y0 as u32;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        // Lerp form keeps constant regions exact.
        let top = {
            let a = self.get(x0, y0, c);
            let b = self.get(x1, y0, c);
            a + fx * (b - a)
        };
        let bot = {
            let a = self.get(x0, y1, c);
            let b = self.get(x1, y1, c);
            a + fx * (b - a)
        };
        (top + fy * (bot - top), in_bounds)
    }
}

/// A warped image plus its per-pixel source-validity mask.
#[derive(Debug, Clone)]
pub struct WarpedFrame {
    pub image: ImageBuffer,
    /// True where the source sample fell inside the image bounds.
    pub valid_mask: Vec<bool>,
}

/// Inverse-warp `img` through `h`: every destination pixel pulls a bilinear
/// sample from `apply(h^-1, dst)`. Out-of-bounds pulls replicate the nearest
/// edge and clear the validity mask. The exact identity short-circuits to a
/// bit-identical copy.
pub fn warp_image(img: &ImageBuffer, h: &Homography) -> Result<WarpedFrame, WarpError> {
    img.validate()?;
    if h.is_identity() {
        return Ok(WarpedFrame { image: img.clone(), valid_mask: vec![true; img.pixel_count()] });
    }
    let hinv = h.inverse()?;
    let m = hinv.matrix();
    let mut out = ImageBuffer::new(img.width, img.height, img.channels, 0.0);
    let mut mask = vec![true; img.pixel_count()];
    for y in 0..img.height {
        let yf = y as f64;
        // Incremental evaluation of the three homogeneous rows along x.
        let mut nu = m[(0, 1)] * yf + m[(0, 2)];
        let mut nv = m[(1, 1)] * yf + m[(1, 2)];
        let mut dw = m[(2, 1)] * yf + m[(2, 2)];
        for x in 0..img.width {
            if dw.abs() <= 1e-12 {
                return Err(WarpError::PointAtInfinity(dw));
            }
            let su = nu / dw;
            let sv = nv / dw;
            let mut valid = true;
            for c in 0..img.channels {
                let (val, ok) = img.sample_bilinear(su, sv, c);
                out.set(x, y, c, val);
                valid &= ok;
            }
            mask[(y * img.width + x) as usize] = valid;
            nu += m[(0, 0)];
            nv += m[(1, 0)];
            dw += m[(2, 0)];
        }
    }
    Ok(WarpedFrame { image: out, valid_mask: mask })
}
