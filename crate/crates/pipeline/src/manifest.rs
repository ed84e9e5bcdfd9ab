//! Dataset manifest: one JSON document tying every generated file to its
//! SHA-256 checksum, with enough provenance to regenerate or audit a run.
//! Timestamps are deliberately absent so identical runs produce identical
//! manifests.

use blurforge_core::geom::CameraIntrinsics;
use blurforge_core::imu::ExposureWindow;
use blurforge_core::trajectory::StagePlan;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest parse failed: {0}")]
    Parse(String),
}

/// Files belonging to one triplet, as paths relative to the manifest.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TripletFiles {
    pub sharp: String,
    pub blurred: String,
    pub mask: String,
    pub heatmap_control_raw: String,
    pub heatmap_control_meta: String,
    pub heatmap_endpoint_raw: String,
    pub heatmap_endpoint_meta: String,
}

impl TripletFiles {
    pub fn for_id(id: &str) -> Self {
        Self {
            sharp: format!("{id}_sharp.png"),
            blurred: format!("{id}_blurred.png"),
            mask: format!("{id}_mask.png"),
            heatmap_control_raw: format!("{id}_hc.raw"),
            heatmap_control_meta: format!("{id}_hc.json"),
            heatmap_endpoint_raw: format!("{id}_he.raw"),
            heatmap_endpoint_meta: format!("{id}_he.json"),
        }
    }

    pub fn all(&self) -> [&str; 7] {
        [
            &self.sharp,
            &self.blurred,
            &self.mask,
            &self.heatmap_control_raw,
            &self.heatmap_control_meta,
            &self.heatmap_endpoint_raw,
            &self.heatmap_endpoint_meta,
        ]
    }
}

/// Per-pixel fit quality summary.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FitFlags {
    pub ok_fraction: f64,
    pub max_deviation_px: f64,
    pub fit_tol: f64,
}

/// One dataset entry: either a generated triplet or a recorded failure.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Present only when generation failed; all other optional fields are
    /// absent in that case.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub files: Option<TripletFiles>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<ExposureWindow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_plan: Option<StagePlan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitFlags>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contaminated_fraction: Option<f64>,
    /// Hex SHA-256 per relative path.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub checksums: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub intrinsics: CameraIntrinsics,
    pub tau: f64,
    /// Human-readable window policy description (seed included for random).
    pub window_policy: String,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn ok_entries(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| e.error.is_none())
    }
}

/// SHA-256 of a byte slice, lowercase hex.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of a file's contents, lowercase hex.
pub fn sha256_file(path: &Path) -> Result<String, ManifestError> {
    let bytes = std::fs::read(path)
        .map_err(|e| ManifestError::Io { path: path.display().to_string(), source: e })?;
    Ok(sha256_hex(&bytes))
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<(), ManifestError> {
    let body = serde_json::to_string_pretty(manifest).map_err(|e| ManifestError::Parse(e.to_string()))?;
    std::fs::write(path, body + "\n")
        .map_err(|e| ManifestError::Io { path: path.display().to_string(), source: e })
}

pub fn read_manifest(path: &Path) -> Result<Manifest, ManifestError> {
    let body = std::fs::read_to_string(path)
        .map_err(|e| ManifestError::Io { path: path.display().to_string(), source: e })?;
    serde_json::from_str(&body).map_err(|e| ManifestError::Parse(e.to_string()))
}

/// A problem found while validating a manifest against the files on disk.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValidationIssue {
    SchemaVersionMismatch { found: u32, expected: u32 },
    MissingFile { path: String },
    ChecksumMismatch { path: String },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SchemaVersionMismatch { found, expected } => {
                write!(f, "schema version {found}, expected {expected}")
            }
            Self::MissingFile { path } => write!(f, "missing file: {path}"),
            Self::ChecksumMismatch { path } => write!(f, "checksum mismatch: {path}"),
        }
    }
}

/// Check a manifest against the files next to it: existence and checksums.
/// Returns the manifest and every issue found (empty on a clean tree).
pub fn validate_manifest(path: &Path) -> Result<(Manifest, Vec<ValidationIssue>), ManifestError> {
    let manifest = read_manifest(path)?;
    let mut issues = Vec::new();
    if manifest.schema_version != SCHEMA_VERSION {
        issues.push(ValidationIssue::SchemaVersionMismatch {
            found: manifest.schema_version,
            expected: SCHEMA_VERSION,
        });
    }
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    for entry in manifest.ok_entries() {
        for (rel, expected) in &entry.checksums {
            let full = base.join(rel);
            if !full.is_file() {
                issues.push(ValidationIssue::MissingFile { path: rel.clone() });
                continue;
            }
            let actual = sha256_file(&full)?;
            if actual != *expected {
                issues.push(ValidationIssue::ChecksumMismatch { path: rel.clone() });
            }
        }
    }
    Ok((manifest, issues))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_roundtrip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let payload_path = dir.path().join("x_sharp.png");
        std::fs::write(&payload_path, b"payload").unwrap();

        let mut checksums = BTreeMap::new();
        checksums.insert("x_sharp.png".to_string(), sha256_hex(b"payload"));
        let manifest = Manifest {
            schema_version: SCHEMA_VERSION,
            intrinsics: CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480).unwrap(),
            tau: 0.03,
            window_policy: "random(seed=42)".to_string(),
            entries: vec![ManifestEntry {
                id: "x".to_string(),
                error: None,
                files: Some(TripletFiles::for_id("x")),
                window: Some(ExposureWindow::new(0.0, 0.03).unwrap()),
                stage_plan: Some(StagePlan { n: vec![1; 6] }),
                fit: Some(FitFlags { ok_fraction: 1.0, max_deviation_px: 0.0, fit_tol: 0.5 }),
                contaminated_fraction: Some(0.0),
                checksums,
            }],
        };
        let mpath = dir.path().join("manifest.json");
        write_manifest(&mpath, &manifest).unwrap();
        let back = read_manifest(&mpath).unwrap();
        assert_eq!(back, manifest);

        let (_, issues) = validate_manifest(&mpath).unwrap();
        assert!(issues.is_empty(), "{issues:?}");

        // Flip a byte: exactly one checksum mismatch.
        std::fs::write(&payload_path, b"paYload").unwrap();
        let (_, issues) = validate_manifest(&mpath).unwrap();
        assert_eq!(issues, vec![ValidationIssue::ChecksumMismatch { path: "x_sharp.png".into() }]);

        // Remove it: exactly one missing file.
        std::fs::remove_file(&payload_path).unwrap();
        let (_, issues) = validate_manifest(&mpath).unwrap();
        assert_eq!(issues, vec![ValidationIssue::MissingFile { path: "x_sharp.png".into() }]);
    }

    #[test]
    fn failed_entries_skip_validation() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = Manifest {
            schema_version: SCHEMA_VERSION,
            intrinsics: CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480).unwrap(),
            tau: 0.03,
            window_policy: "fixed".to_string(),
            entries: vec![ManifestEntry {
                id: "broken".to_string(),
                error: Some("no motion window found".to_string()),
                files: None,
                window: None,
                stage_plan: None,
                fit: None,
                contaminated_fraction: None,
                checksums: BTreeMap::new(),
            }],
        };
        let mpath = dir.path().join("manifest.json");
        write_manifest(&mpath, &manifest).unwrap();
        let (back, issues) = validate_manifest(&mpath).unwrap();
        assert!(issues.is_empty());
        assert_eq!(back.ok_entries().count(), 0);
    }
}
