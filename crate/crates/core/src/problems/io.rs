//! On-disk instance format: a JSON manifest plus raw little-endian `f64`
//! blobs (column-major) for the dense matrices.
//!
//! Writing the same instance twice produces byte-identical files, which makes
//! saved instances usable as fixtures for cross-run comparisons.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linop::{LinearMap, LinearMapKind};
use crate::manifold::Manifold;
use crate::problems::{GroundTruth, ProblemFamily, ProblemInstance, SmoothTerm};
use crate::prox::Regularizer;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, Serialize, Deserialize)]
struct BlobMeta {
    name: String,
    rows: usize,
    cols: usize,
    file: String,
    order: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct LinearMapMeta {
    kind: String,
    input_shape: (usize, usize),
    output_shape: (usize, usize),
    #[serde(skip_serializing_if = "Option::is_none")]
    blob: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct SmoothMeta {
    kind: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    blobs: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct GroundTruthMeta {
    kind: String,
    blob: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct InstanceManifest {
    format_version: u32,
    name: String,
    family: ProblemFamily,
    data_seed: u64,
    manifold: Manifold,
    regularizer: Regularizer,
    linear_map: LinearMapMeta,
    smooth: SmoothMeta,
    #[serde(skip_serializing_if = "Option::is_none")]
    ground_truth: Option<GroundTruthMeta>,
    blobs: Vec<BlobMeta>,
}

/// Writes a matrix as raw little-endian `f64` bytes in column-major order.
pub fn write_matrix_blob(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut bytes = Vec::with_capacity(m.len() * 8);
    for v in m.as_slice() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Reads a matrix written by [`write_matrix_blob`].
pub fn read_matrix_blob(path: &Path, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    let bytes = fs::read(path)?;
    let expected = rows * cols * 8;
    if bytes.len() != expected {
        return Err(Error::MalformedFile(format!(
            "{}: expected {} bytes for a {}x{} matrix, found {}",
            path.display(),
            expected,
            rows,
            cols,
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(DMatrix::from_column_slice(rows, cols, &values))
}

struct BlobWriter<'a> {
    dir: &'a Path,
    metas: Vec<BlobMeta>,
}

impl<'a> BlobWriter<'a> {
    fn add(&mut self, name: &str, m: &DMatrix<f64>) -> Result<String> {
        let file = format!("{name}.f64le");
        write_matrix_blob(&self.dir.join(&file), m)?;
        self.metas.push(BlobMeta {
            name: name.to_string(),
            rows: m.nrows(),
            cols: m.ncols(),
            file,
            order: "column_major".to_string(),
        });
        Ok(name.to_string())
    }
}

/// Saves an instance into `dir` (created if missing): `manifest.json` plus
/// one blob file per matrix.
pub fn save_instance(instance: &ProblemInstance, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut writer = BlobWriter {
        dir,
        metas: Vec::new(),
    };

    let linear_map = match instance.linear_map.kind() {
        LinearMapKind::Identity => LinearMapMeta {
            kind: "identity".into(),
            input_shape: instance.linear_map.input_shape(),
            output_shape: instance.linear_map.output_shape(),
            blob: None,
        },
        LinearMapKind::DenseLeftMultiply { matrix } => LinearMapMeta {
            kind: "dense_left_multiply".into(),
            input_shape: instance.linear_map.input_shape(),
            output_shape: instance.linear_map.output_shape(),
            blob: Some(writer.add("linear_map", matrix)?),
        },
        LinearMapKind::GeneralDense { matrix } => LinearMapMeta {
            kind: "general_dense".into(),
            input_shape: instance.linear_map.input_shape(),
            output_shape: instance.linear_map.output_shape(),
            blob: Some(writer.add("linear_map", matrix)?),
        },
    };

    let smooth = match &instance.smooth {
        SmoothTerm::NegHalfQuadratic { data } => SmoothMeta {
            kind: "neg_half_quadratic".into(),
            blobs: vec![writer.add("data_matrix", data)?],
        },
        SmoothTerm::LogisticSquare { features, labels } => {
            let labels_m = DMatrix::from_column_slice(labels.len(), 1, labels.as_slice());
            SmoothMeta {
                kind: "logistic_square".into(),
                blobs: vec![
                    writer.add("features", features)?,
                    writer.add("labels", &labels_m)?,
                ],
            }
        }
        SmoothTerm::Linear { coeffs } => SmoothMeta {
            kind: "linear".into(),
            blobs: vec![writer.add("linear_coeffs", coeffs)?],
        },
        SmoothTerm::Zero => SmoothMeta {
            kind: "zero".into(),
            blobs: vec![],
        },
    };

    let ground_truth = match &instance.ground_truth {
        Some(GroundTruth::InlierBasis(b)) => Some(GroundTruthMeta {
            kind: "inlier_basis".into(),
            blob: writer.add("inlier_basis", b)?,
        }),
        Some(GroundTruth::Classifier(x)) => Some(GroundTruthMeta {
            kind: "classifier".into(),
            blob: writer.add("true_classifier", x)?,
        }),
        None => None,
    };

    let manifest = InstanceManifest {
        format_version: FORMAT_VERSION,
        name: instance.name.clone(),
        family: instance.family.clone(),
        data_seed: instance.data_seed,
        manifold: instance.manifold,
        regularizer: instance.regularizer,
        linear_map,
        smooth,
        ground_truth,
        blobs: writer.metas,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(dir.join(MANIFEST_FILE), json + "\n")?;
    Ok(())
}

/// Loads an instance from a directory or a direct path to `manifest.json`.
pub fn load_instance(path: &Path) -> Result<ProblemInstance> {
    let manifest_path: PathBuf = if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    };
    let dir = manifest_path
        .parent()
        .ok_or_else(|| Error::MalformedFile("manifest has no parent directory".into()))?
        .to_path_buf();
    let raw = fs::read_to_string(&manifest_path)?;
    let manifest: InstanceManifest = serde_json::from_str(&raw)
        .map_err(|e| Error::MalformedFile(format!("{}: {e}", manifest_path.display())))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::MalformedFile(format!(
            "unsupported format version {}",
            manifest.format_version
        )));
    }

    let read_blob = |name: &str| -> Result<DMatrix<f64>> {
        let meta = manifest
            .blobs
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| Error::MalformedFile(format!("missing blob entry '{name}'")))?;
        read_matrix_blob(&dir.join(&meta.file), meta.rows, meta.cols)
    };

    let linear_map = match manifest.linear_map.kind.as_str() {
        "identity" => LinearMap::identity(manifest.linear_map.input_shape),
        "dense_left_multiply" => {
            let blob = manifest
                .linear_map
                .blob
                .as_deref()
                .ok_or_else(|| Error::MalformedFile("dense_left_multiply without blob".into()))?;
            LinearMap::dense_left_multiply(read_blob(blob)?, manifest.linear_map.input_shape.1)?
        }
        "general_dense" => {
            let blob = manifest
                .linear_map
                .blob
                .as_deref()
                .ok_or_else(|| Error::MalformedFile("general_dense without blob".into()))?;
            LinearMap::general_dense(
                read_blob(blob)?,
                manifest.linear_map.input_shape,
                manifest.linear_map.output_shape,
            )?
        }
        other => {
            return Err(Error::MalformedFile(format!(
                "unknown linear map kind '{other}'"
            )))
        }
    };

    let smooth = match manifest.smooth.kind.as_str() {
        "neg_half_quadratic" => SmoothTerm::NegHalfQuadratic {
            data: read_blob(&manifest.smooth.blobs[0])?,
        },
        "logistic_square" => {
            let features = read_blob(&manifest.smooth.blobs[0])?;
            let labels_m = read_blob(&manifest.smooth.blobs[1])?;
            SmoothTerm::LogisticSquare {
                features,
                labels: DVector::from_column_slice(labels_m.as_slice()),
            }
        }
        "linear" => SmoothTerm::Linear {
            coeffs: read_blob(&manifest.smooth.blobs[0])?,
        },
        "zero" => SmoothTerm::Zero,
        other => {
            return Err(Error::MalformedFile(format!(
                "unknown smooth term kind '{other}'"
            )))
        }
    };

    let ground_truth = match &manifest.ground_truth {
        Some(meta) => Some(match meta.kind.as_str() {
            "inlier_basis" => GroundTruth::InlierBasis(read_blob(&meta.blob)?),
            "classifier" => GroundTruth::Classifier(read_blob(&meta.blob)?),
            other => {
                return Err(Error::MalformedFile(format!(
                    "unknown ground truth kind '{other}'"
                )))
            }
        }),
        None => None,
    };

    let instance = ProblemInstance {
        name: manifest.name,
        family: manifest.family,
        data_seed: manifest.data_seed,
        manifold: manifest.manifold,
        smooth,
        regularizer: manifest.regularizer,
        linear_map,
        ground_truth,
    };
    instance.validate()?;
    Ok(instance)
}
