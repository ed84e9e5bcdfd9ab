//! File formats: sRGB PNG images bridged to linear-light buffers, 1-bit
//! mask PNGs, and raw f32 heatmap fields with JSON sidecars.

use blurforge_core::bezier::{HeatmapField, HeatmapKind};
use blurforge_core::warp::ImageBuffer;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Decode { path: String, reason: String },
    #[error("heatmap sidecar {path}: {reason}")]
    Sidecar { path: String, reason: String },
}

fn io_err(path: &Path, source: std::io::Error) -> FormatError {
    FormatError::Io { path: path.display().to_string(), source }
}

/// sRGB electro-optical transfer: 8-bit code value to linear light.
pub fn srgb_to_linear(code: u8) -> f32 {
    let c = code as f32 / 255.0;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

/// Inverse of [`srgb_to_linear`], with clamping and round-to-nearest.
pub fn linear_to_srgb(v: f32) -> u8 {
    let v = v.clamp(0.0, 1.0);
    let c = if v <= 0.003_130_8 { v * 12.92 } else { 1.055 * v.powf(1.0 / 2.4) - 0.055 };
    (c * 255.0).round() as u8
}

/// Load a PNG into a linear-light buffer. Grayscale stays single-channel,
/// everything else becomes RGB. With `srgb_linearize` off, code values are
/// divided by 255 with no transfer curve.
pub fn load_png(path: &Path, srgb_linearize: bool) -> Result<ImageBuffer, FormatError> {
    let dynimg = image::open(path)
        .map_err(|e| FormatError::Decode { path: path.display().to_string(), reason: e.to_string() })?;
    let convert = |v: u8| if srgb_linearize { srgb_to_linear(v) } else { v as f32 / 255.0 };
    let img = match dynimg {
        image::DynamicImage::ImageLuma8(g) => {
            let (w, h) = g.dimensions();
            ImageBuffer {
                width: w,
                height: h,
                channels: 1,
                data: g.into_raw().into_iter().map(convert).collect(),
            }
        }
        other => {
            let rgb = other.to_rgb8();
            let (w, h) = rgb.dimensions();
            ImageBuffer {
                width: w,
                height: h,
                channels: 3,
                data: rgb.into_raw().into_iter().map(convert).collect(),
            }
        }
    };
    Ok(img)
}

/// Save a linear-light buffer as an 8-bit PNG. With `srgb_linearize` on the
/// samples go through the sRGB transfer curve, otherwise straight scaling.
pub fn save_png(path: &Path, img: &ImageBuffer, srgb_linearize: bool) -> Result<(), FormatError> {
    let convert = |v: f32| {
        if srgb_linearize {
            linear_to_srgb(v)
        } else {
            (v.clamp(0.0, 1.0) * 255.0).round() as u8
        }
    };
    let bytes: Vec<u8> = img.data.iter().map(|&v| convert(v)).collect();
    let color = if img.channels == 1 { image::ColorType::L8 } else { image::ColorType::Rgb8 };
    image::save_buffer(path, &bytes, img.width, img.height, color)
        .map_err(|e| FormatError::Decode { path: path.display().to_string(), reason: e.to_string() })
}

/// Write a boolean mask as a 1-bit grayscale PNG (set bits = true, packed
/// most-significant-bit first per row).
pub fn save_mask_png(path: &Path, mask: &[bool], width: u32, height: u32) -> Result<(), FormatError> {
    assert_eq!(mask.len(), (width * height) as usize);
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width, height);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::One);
    let mut writer = enc
        .write_header()
        .map_err(|e| FormatError::Decode { path: path.display().to_string(), reason: e.to_string() })?;
    let row_bytes = width.div_ceil(8) as usize;
    let mut packed = vec![0u8; row_bytes * height as usize];
    for y in 0..height as usize {
        for x in 0..width as usize {
            if mask[y * width as usize + x] {
                packed[y * row_bytes + x / 8] |= 0x80 >> (x % 8);
            }
        }
    }
    writer
        .write_image_data(&packed)
        .map_err(|e| FormatError::Decode { path: path.display().to_string(), reason: e.to_string() })
}

/// Read a mask PNG written by [`save_mask_png`].
pub fn load_mask_png(path: &Path) -> Result<(Vec<bool>, u32, u32), FormatError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder
        .read_info()
        .map_err(|e| FormatError::Decode { path: path.display().to_string(), reason: e.to_string() })?;
    let mut buf = vec![0u8; reader.output_buffer_size()];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| FormatError::Decode { path: path.display().to_string(), reason: e.to_string() })?;
    let mask = buf[..info.buffer_size()].iter().map(|&b| b != 0).collect();
    Ok((mask, info.width, info.height))
}

/// JSON sidecar describing a raw heatmap field.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HeatmapSidecar {
    pub width: u32,
    pub height: u32,
    pub channels: usize,
    pub kind: HeatmapKind,
    pub d_max: f64,
}

/// Write a heatmap as `<stem>.raw` (row-major, channel-interleaved,
/// little-endian f32) plus `<stem>.json`.
pub fn save_heatmap(stem: &Path, field: &HeatmapField, d_max: f64) -> Result<(), FormatError> {
    let raw_path = stem.with_extension("raw");
    let file = File::create(&raw_path).map_err(|e| io_err(&raw_path, e))?;
    let mut w = BufWriter::new(file);
    for v in &field.values {
        w.write_all(&v.to_le_bytes()).map_err(|e| io_err(&raw_path, e))?;
    }
    w.flush().map_err(|e| io_err(&raw_path, e))?;

    let sidecar = HeatmapSidecar {
        width: field.width,
        height: field.height,
        channels: field.channels(),
        kind: field.kind,
        d_max,
    };
    let json_path = stem.with_extension("json");
    let body = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    std::fs::write(&json_path, body + "\n").map_err(|e| io_err(&json_path, e))
}

/// Read a heatmap written by [`save_heatmap`].
pub fn load_heatmap(stem: &Path) -> Result<(HeatmapField, f64), FormatError> {
    let json_path = stem.with_extension("json");
    let body = std::fs::read_to_string(&json_path).map_err(|e| io_err(&json_path, e))?;
    let sidecar: HeatmapSidecar = serde_json::from_str(&body)
        .map_err(|e| FormatError::Sidecar { path: json_path.display().to_string(), reason: e.to_string() })?;
    if sidecar.channels != sidecar.kind.channels() {
        return Err(FormatError::Sidecar {
            path: json_path.display().to_string(),
            reason: format!("{} channels inconsistent with kind {:?}", sidecar.channels, sidecar.kind),
        });
    }
    let raw_path = stem.with_extension("raw");
    let mut bytes = Vec::new();
    File::open(&raw_path)
        .map_err(|e| io_err(&raw_path, e))?
        .read_to_end(&mut bytes)
        .map_err(|e| io_err(&raw_path, e))?;
    let expect = sidecar.width as usize * sidecar.height as usize * sidecar.channels * 4;
    if bytes.len() != expect {
        return Err(FormatError::Sidecar {
            path: raw_path.display().to_string(),
            reason: format!("raw payload is {} bytes, expected {expect}", bytes.len()),
        });
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((
        HeatmapField { width: sidecar.width, height: sidecar.height, kind: sidecar.kind, values },
        sidecar.d_max,
    ))
}
