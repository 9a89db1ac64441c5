//! Feature bundles on disk.
//!
//! A bundle is a directory holding one dataset's embeddings and classifier
//! outputs:
//!
//! - `features.fsb`, `logits.fsb`: matrix files. Magic `FSB1`, u32 version,
//!   u64 rows, u64 cols, then `rows * cols` little-endian binary32 values in
//!   row-major order.
//! - `labels.fsl` (optional): magic `FSL1`, u32 version, u64 count, then
//!   `count` little-endian u32 labels.
//! - `meta.json`: name, shift family, severity, class count and the
//!   optional true error.
//!
//! A `manifest.json` groups one labeled reference bundle with an ordered list
//! of test bundles. Paths inside a manifest are resolved relative to the
//! manifest's own directory.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FEATURES_FILE: &str = "features.fsb";
pub const LOGITS_FILE: &str = "logits.fsb";
pub const LABELS_FILE: &str = "labels.fsl";
pub const META_FILE: &str = "meta.json";
pub const MANIFEST_FILE: &str = "manifest.json";

const MATRIX_MAGIC: [u8; 4] = *b"FSB1";
const LABEL_MAGIC: [u8; 4] = *b"FSL1";
const FORMAT_VERSION: u32 = 1;
const MATRIX_HEADER_LEN: usize = 24;
const LABEL_HEADER_LEN: usize = 16;

/// Dataset-level metadata stored in `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub name: String,
    pub shift_family: String,
    pub severity: u32,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_error: Option<f64>,
}

impl DatasetMeta {
    fn violations(&self) -> Vec<Error> {
        let mut out = Vec::new();
        if self.k < 2 {
            out.push(Error::InvariantViolation(format!(
                "class count k={} must be at least 2",
                self.k
            )));
        }
        if let Some(e) = self.true_error {
            if !(0.0..=1.0).contains(&e) {
                out.push(Error::InvariantViolation(format!(
                    "true_error {e} outside [0, 1]"
                )));
            }
        }
        out
    }
}

/// One dataset: features, logits, optional ground truth and metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    pub features: Array2<f32>,
    pub logits: Array2<f32>,
    pub labels: Option<Vec<u32>>,
    pub meta: DatasetMeta,
}

impl FeatureBundle {
    /// Builds a bundle, rejecting anything that breaks the bundle invariants.
    pub fn new(
        features: Array2<f32>,
        logits: Array2<f32>,
        labels: Option<Vec<u32>>,
        meta: DatasetMeta,
    ) -> Result<Self> {
        let bundle = FeatureBundle {
            features,
            logits,
            labels,
            meta,
        };
        bundle.check()?;
        Ok(bundle)
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn k(&self) -> usize {
        self.meta.k
    }

    pub fn features_f64(&self) -> Array2<f64> {
        self.features.mapv(f64::from)
    }

    pub fn logits_f64(&self) -> Array2<f64> {
        self.logits.mapv(f64::from)
    }

    pub fn labels_usize(&self) -> Option<Vec<usize>> {
        self.labels
            .as_ref()
            .map(|l| l.iter().map(|&v| v as usize).collect())
    }

    /// Every broken invariant, in a fixed order.
    pub fn invariant_errors(&self) -> Vec<Error> {
        let mut out = self.meta.violations();
        let m = self.features.nrows();
        if m == 0 {
            out.push(Error::EmptyInput);
        }
        if self.logits.nrows() != m {
            out.push(Error::DimensionMismatch(format!(
                "features have {m} rows but logits have {}",
                self.logits.nrows()
            )));
        }
        if self.logits.ncols() != self.meta.k {
            out.push(Error::DimensionMismatch(format!(
                "logits have {} columns but meta.k = {}",
                self.logits.ncols(),
                self.meta.k
            )));
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            out.push(Error::NonFiniteValue(FEATURES_FILE.into()));
        }
        if self.logits.iter().any(|v| !v.is_finite()) {
            out.push(Error::NonFiniteValue(LOGITS_FILE.into()));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != m {
                out.push(Error::DimensionMismatch(format!(
                    "{} labels for {m} rows",
                    labels.len()
                )));
            }
            if let Some(&bad) = labels.iter().find(|&&l| l as usize >= self.meta.k) {
                out.push(Error::LabelOutOfRange {
                    label: bad as usize,
                    k: self.meta.k,
                });
            }
        }
        out
    }

    pub fn check(&self) -> Result<()> {
        match self.invariant_errors().into_iter().next() {
            None => Ok(()),
            Some(e) => Err(e),
        }
    }

    /// Draws `n` distinct rows without replacement, keeping their original
    /// relative order and the metadata (including `true_error`) unchanged.
    pub fn subsample(&self, n: usize, seed: u64) -> Result<FeatureBundle> {
        let m = self.len();
        if n == 0 || n > m {
            return Err(Error::InsufficientSamples { need: n, got: m });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = index::sample(&mut rng, m, n).into_vec();
        rows.sort_unstable();
        Ok(FeatureBundle {
            features: self.features.select(Axis(0), &rows),
            logits: self.logits.select(Axis(0), &rows),
            labels: self
                .labels
                .as_ref()
                .map(|l| rows.iter().map(|&r| l[r]).collect()),
            meta: self.meta.clone(),
        })
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn u64_at(bytes: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
}

fn check_header(path: &Path, bytes: &[u8], magic: [u8; 4], header_len: usize) -> Result<()> {
    if bytes.len() < 4 {
        return Err(Error::UnexpectedEof(path.to_path_buf()));
    }
    if bytes[..4] != magic {
        return Err(Error::BadMagic(path.to_path_buf()));
    }
    if bytes.len() < header_len {
        return Err(Error::UnexpectedEof(path.to_path_buf()));
    }
    let version = u32_at(bytes, 4);
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.to_path_buf(),
            version,
        });
    }
    Ok(())
}

fn payload_len(path: &Path, count: u64, width: usize) -> Result<usize> {
    usize::try_from(count)
        .ok()
        .and_then(|c| c.checked_mul(width))
        .ok_or_else(|| Error::UnexpectedEof(path.to_path_buf()))
}

fn check_payload(path: &Path, available: usize, expected: usize) -> Result<()> {
    if available < expected {
        return Err(Error::UnexpectedEof(path.to_path_buf()));
    }
    if available > expected {
        return Err(Error::TrailingBytes {
            path: path.to_path_buf(),
            extra: available - expected,
        });
    }
    Ok(())
}

/// Reads an `FSB1` matrix file.
pub fn read_matrix(path: &Path) -> Result<Array2<f32>> {
    let bytes = read_file(path)?;
    check_header(path, &bytes, MATRIX_MAGIC, MATRIX_HEADER_LEN)?;
    let rows = u64_at(&bytes, 8);
    let cols = u64_at(&bytes, 16);
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::UnexpectedEof(path.to_path_buf()))?;
    let payload = &bytes[MATRIX_HEADER_LEN..];
    check_payload(path, payload.len(), payload_len(path, count, 4)?)?;
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Array2::from_shape_vec((rows as usize, cols as usize), values)
        .map_err(|e| Error::DimensionMismatch(format!("{}: {e}", path.display())))
}

/// Writes an `FSB1` matrix file.
pub fn write_matrix(path: &Path, matrix: &Array2<f32>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&MATRIX_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(matrix.nrows() as u64).to_le_bytes())?;
    w.write_all(&(matrix.ncols() as u64).to_le_bytes())?;
    // `iter` walks logical row-major order regardless of memory layout.
    for v in matrix.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an `FSL1` label file.
pub fn read_labels(path: &Path) -> Result<Vec<u32>> {
    let bytes = read_file(path)?;
    check_header(path, &bytes, LABEL_MAGIC, LABEL_HEADER_LEN)?;
    let count = u64_at(&bytes, 8);
    let payload = &bytes[LABEL_HEADER_LEN..];
    check_payload(path, payload.len(), payload_len(path, count, 4)?)?;
    Ok(payload
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Writes an `FSL1` label file.
pub fn write_labels(path: &Path, labels: &[u32]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&LABEL_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(labels.len() as u64).to_le_bytes())?;
    for v in labels {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_meta(path: &Path) -> Result<DatasetMeta> {
    let bytes = read_file(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::MetaParseError {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn read_optional_labels(dir: &Path) -> Result<Option<Vec<u32>>> {
    let path = dir.join(LABELS_FILE);
    if path.exists() {
        read_labels(&path).map(Some)
    } else {
        Ok(None)
    }
}

/// Loads and validates the bundle stored in `dir`.
pub fn read_bundle(dir: &Path) -> Result<FeatureBundle> {
    for required in [FEATURES_FILE, LOGITS_FILE, META_FILE] {
        let p = dir.join(required);
        if !p.is_file() {
            return Err(Error::MissingFile(p));
        }
    }
    let meta = read_meta(&dir.join(META_FILE))?;
    if let Some(e) = meta.violations().into_iter().next() {
        return Err(Error::MetaParseError {
            path: dir.join(META_FILE),
            message: e.to_string(),
        });
    }
    let features = read_matrix(&dir.join(FEATURES_FILE))?;
    let logits = read_matrix(&dir.join(LOGITS_FILE))?;
    let labels = read_optional_labels(dir)?;
    FeatureBundle::new(features, logits, labels, meta)
}

/// Writes `bundle` into `dir`, creating the directory if needed. A stale
/// `labels.fsl` is removed when the bundle carries no labels.
pub fn write_bundle(bundle: &FeatureBundle, dir: &Path) -> Result<()> {
    bundle.check()?;
    fs::create_dir_all(dir)?;
    write_matrix(&dir.join(FEATURES_FILE), &bundle.features)?;
    write_matrix(&dir.join(LOGITS_FILE), &bundle.logits)?;
    let labels_path = dir.join(LABELS_FILE);
    match &bundle.labels {
        Some(labels) => write_labels(&labels_path, labels)?,
        None if labels_path.exists() => fs::remove_file(&labels_path)?,
        None => {}
    }
    let meta = serde_json::to_vec_pretty(&bundle.meta)?;
    fs::write(dir.join(META_FILE), meta)?;
    Ok(())
}

/// Lists every problem with the bundle in `dir`. Never fails; an empty list
/// means [`read_bundle`] succeeds.
pub fn validate_bundle(dir: &Path) -> Vec<String> {
    let mut out = Vec::new();
    let meta = read_meta(&dir.join(META_FILE))
        .map_err(|e| out.push(e.to_string()))
        .ok();
    let features = read_matrix(&dir.join(FEATURES_FILE))
        .map_err(|e| out.push(e.to_string()))
        .ok();
    let logits = read_matrix(&dir.join(LOGITS_FILE))
        .map_err(|e| out.push(e.to_string()))
        .ok();
    let labels = read_optional_labels(dir)
        .map_err(|e| out.push(e.to_string()))
        .ok();
    if let (Some(meta), Some(features), Some(logits), Some(labels)) =
        (meta, features, logits, labels)
    {
        let bundle = FeatureBundle {
            features,
            logits,
            labels,
            meta,
        };
        out.extend(bundle.invariant_errors().iter().map(ToString::to_string));
    }
    out
}

/// Suite description: one labeled reference bundle plus ordered test bundles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    pub tests: Vec<String>,
    pub k: usize,
    #[serde(skip)]
    base_dir: PathBuf,
}

/// Bundles named by a manifest, loaded and cross-checked.
#[derive(Debug, Clone)]
pub struct LoadedSuite {
    pub reference: Option<FeatureBundle>,
    pub tests: Vec<FeatureBundle>,
}

impl Manifest {
    pub fn new(reference: Option<String>, tests: Vec<String>, k: usize) -> Self {
        Manifest {
            reference,
            tests,
            k,
            base_dir: PathBuf::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Manifest> {
        let bytes = read_file(path)?;
        let mut manifest: Manifest =
            serde_json::from_slice(&bytes).map_err(|e| Error::MetaParseError {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn with_base_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.base_dir = dir.into();
        self
    }

    pub fn reference_path(&self) -> Option<PathBuf> {
        self.reference.as_ref().map(|r| self.base_dir.join(r))
    }

    pub fn test_paths(&self) -> Vec<PathBuf> {
        self.tests.iter().map(|t| self.base_dir.join(t)).collect()
    }

    /// Reads every bundle and checks the suite-level invariants: labeled
    /// reference, a shared feature dimension, and class count `k` everywhere.
    pub fn load_bundles(&self) -> Result<LoadedSuite> {
        let reference = match self.reference_path() {
            Some(p) => {
                let b = read_bundle(&p).map_err(|e| e.in_bundle(&p.display().to_string()))?;
                if b.labels.is_none() {
                    return Err(Error::LabelsAbsent.in_bundle(&b.meta.name));
                }
                Some(b)
            }
            None => None,
        };
        let tests = self
            .test_paths()
            .iter()
            .map(|p| read_bundle(p).map_err(|e| e.in_bundle(&p.display().to_string())))
            .collect::<Result<Vec<_>>>()?;
        let mut dim = None;
        for b in reference.iter().chain(tests.iter()) {
            if b.k() != self.k {
                return Err(Error::DimensionMismatch(format!(
                    "bundle `{}` has k={} but manifest k={}",
                    b.meta.name,
                    b.k(),
                    self.k
                )));
            }
            match dim {
                None => dim = Some(b.dim()),
                Some(d) if d != b.dim() => {
                    return Err(Error::DimensionMismatch(format!(
                        "bundle `{}` has d={} but suite d={d}",
                        b.meta.name,
                        b.dim()
                    )))
                }
                Some(_) => {}
            }
        }
        Ok(LoadedSuite { reference, tests })
    }
}
