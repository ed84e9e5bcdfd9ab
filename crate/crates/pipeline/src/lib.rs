//! Batch triplet generation, on-disk formats, manifests, and the command
//! line that exposes the synthesis toolkit.
//!
//! On-disk layout per triplet: 8-bit sRGB PNGs for the sharp and blurred
//! images (the synthesis itself runs in linear light), a 1-bit PNG for the
//! contamination mask, and raw little-endian f32 heatmap fields with JSON
//! sidecars. A JSON manifest ties the files together with SHA-256 checksums.

pub mod cli;
pub mod dataset;
pub mod formats;
pub mod manifest;

pub use dataset::{generate_dataset, DatasetConfig, WindowPolicy};
pub use manifest::{read_manifest, validate_manifest, Manifest, ManifestEntry};
