//! JSON persistence for a fitted latent space plus its diffusion model.
//!
//! Files are schema-versioned.  Loading rejects unknown versions before
//! touching any other field and re-validates every shape, so a loaded
//! bundle is usable exactly like a freshly trained one.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use forge_core::motion::Skeleton;

use crate::diffusion::{Denoiser, DiffusionModel};
use crate::latent::{LatentCode, LatentSpace};
use crate::GenError;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// Latent space and diffusion model, saved and loaded together.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub space: LatentSpace,
    pub model: DiffusionModel,
}

#[derive(Serialize, Deserialize)]
struct SpaceFile {
    mean: Vec<f64>,
    /// Row-major: one row per flattened coordinate, one column per latent axis.
    basis: Vec<Vec<f64>>,
    t_fix: usize,
    skeleton: Skeleton,
    fps: f64,
    ground_height: f64,
}

#[derive(Serialize, Deserialize)]
struct DenoiserFile {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    n_steps: usize,
    betas: Vec<f64>,
    ridge_lambda: f64,
    draws_per_element: usize,
    base_seed: u64,
    labels: Vec<String>,
    feature_shift: Vec<f64>,
    feature_scale: Vec<f64>,
    denoisers: Vec<DenoiserFile>,
    l_diff: Vec<f64>,
    train_codes: Vec<LatentCode>,
}

#[derive(Serialize, Deserialize)]
struct BundleFile {
    version: u32,
    space: SpaceFile,
    model: ModelFile,
}

#[derive(Deserialize)]
struct VersionProbe {
    version: u32,
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, GenError> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(GenError::ShapeMismatch(format!("{what} is empty")));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(GenError::ShapeMismatch(format!("{what} has ragged rows")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn io_err(path: &Path, source: std::io::Error) -> GenError {
    GenError::Io { path: path.to_path_buf(), source }
}

/// Serializes the space and model to a single JSON file.
pub fn save_model(path: &Path, space: &LatentSpace, model: &DiffusionModel) -> Result<(), GenError> {
    let file = BundleFile {
        version: MODEL_SCHEMA_VERSION,
        space: SpaceFile {
            mean: space.mean.iter().copied().collect(),
            basis: matrix_rows(&space.basis),
            t_fix: space.t_fix,
            skeleton: space.skeleton.clone(),
            fps: space.fps,
            ground_height: space.ground_height,
        },
        model: ModelFile {
            n_steps: model.n_steps,
            betas: model.betas.clone(),
            ridge_lambda: model.ridge_lambda,
            draws_per_element: model.draws_per_element,
            base_seed: model.base_seed,
            labels: model.labels.clone(),
            feature_shift: model.feature_shift.clone(),
            feature_scale: model.feature_scale.clone(),
            denoisers: model
                .denoisers
                .iter()
                .map(|d| DenoiserFile { a: matrix_rows(&d.a), b: d.b.iter().copied().collect() })
                .collect(),
            l_diff: model.l_diff.clone(),
            train_codes: model.train_codes.clone(),
        },
    };
    let text = serde_json::to_string_pretty(&file)
        .map_err(|source| GenError::Format { path: path.to_path_buf(), source })?;
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Reads a bundle back, rejecting unknown schema versions and any shape
/// that the training code could not have produced.
pub fn load_model(path: &Path) -> Result<ModelBundle, GenError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let probe: VersionProbe = serde_json::from_str(&text)
        .map_err(|source| GenError::Format { path: path.to_path_buf(), source })?;
    if probe.version != MODEL_SCHEMA_VERSION {
        return Err(GenError::InvalidArgument(format!(
            "unsupported model schema version {} (expected {MODEL_SCHEMA_VERSION})",
            probe.version
        )));
    }
    let file: BundleFile = serde_json::from_str(&text)
        .map_err(|source| GenError::Format { path: path.to_path_buf(), source })?;

    let basis = rows_to_matrix(&file.space.basis, "latent basis")?;
    if file.space.mean.len() != basis.nrows() {
        return Err(GenError::ShapeMismatch(format!(
            "mean has {} entries but the basis has {} rows",
            file.space.mean.len(),
            basis.nrows()
        )));
    }
    let flat = file.space.t_fix * file.space.skeleton.joint_count() * 3;
    if file.space.mean.len() != flat {
        return Err(GenError::ShapeMismatch(format!(
            "mean has {} entries, expected t_fix * joints * 3 = {flat}",
            file.space.mean.len()
        )));
    }
    let space = LatentSpace {
        mean: DVector::from_vec(file.space.mean),
        basis,
        t_fix: file.space.t_fix,
        skeleton: file.space.skeleton,
        fps: file.space.fps,
        ground_height: file.space.ground_height,
    };

    let m = file.model;
    let base = DiffusionModel::from_schedule(
        m.betas,
        m.ridge_lambda,
        m.draws_per_element,
        m.base_seed,
    )?;
    if m.n_steps != base.n_steps {
        return Err(GenError::ShapeMismatch(format!(
            "n_steps {} does not match {} betas",
            m.n_steps, base.n_steps
        )));
    }
    if !(m.denoisers.is_empty() && m.labels.is_empty() && m.train_codes.is_empty()) {
        if m.denoisers.len() != base.n_steps {
            return Err(GenError::ShapeMismatch(format!(
                "{} denoisers for {} steps",
                m.denoisers.len(),
                base.n_steps
            )));
        }
        if m.labels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(GenError::InvalidArgument(
                "model labels must be sorted and distinct".into(),
            ));
        }
        let d = space.dim();
        let width = d + m.labels.len();
        if m.feature_shift.len() != d || m.feature_scale.len() != d {
            return Err(GenError::ShapeMismatch(format!(
                "standardization vectors have {} and {} entries, expected {d}",
                m.feature_shift.len(),
                m.feature_scale.len()
            )));
        }
        if m.feature_scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(GenError::InvalidArgument(
                "standardization scales must be positive and finite".into(),
            ));
        }
        for (t, den) in m.denoisers.iter().enumerate() {
            if den.b.len() != d || den.a.len() != d || den.a.iter().any(|r| r.len() != width) {
                return Err(GenError::ShapeMismatch(format!(
                    "denoiser {} is not {d} x {width}",
                    t + 1
                )));
            }
        }
        for (i, c) in m.train_codes.iter().enumerate() {
            if c.values.len() != d {
                return Err(GenError::ShapeMismatch(format!(
                    "training code {i} has dimension {}, expected {d}",
                    c.values.len()
                )));
            }
            if m.labels.binary_search(&c.label).is_err() {
                return Err(GenError::InvalidArgument(format!(
                    "training code {i} carries unknown label `{}`",
                    c.label
                )));
            }
        }
    }
    if m.denoisers.is_empty() && !(m.feature_shift.is_empty() && m.feature_scale.is_empty()) {
        return Err(GenError::ShapeMismatch(
            "an untrained model cannot carry standardization vectors".into(),
        ));
    }
    if m.l_diff.len() != m.denoisers.len() {
        return Err(GenError::ShapeMismatch(format!(
            "{} loss entries for {} denoisers",
            m.l_diff.len(),
            m.denoisers.len()
        )));
    }
    let denoisers = m
        .denoisers
        .into_iter()
        .map(|df| {
            Ok(Denoiser {
                a: rows_to_matrix(&df.a, "denoiser matrix")?,
                b: DVector::from_vec(df.b),
            })
        })
        .collect::<Result<Vec<_>, GenError>>()?;
    let model = DiffusionModel {
        labels: m.labels,
        feature_shift: m.feature_shift,
        feature_scale: m.feature_scale,
        denoisers,
        l_diff: m.l_diff,
        train_codes: m.train_codes,
        ..base
    };
    Ok(ModelBundle { space, model })
}
