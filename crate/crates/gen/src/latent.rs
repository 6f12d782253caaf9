//! Linear latent space over fixed-length clips.
//!
//! Clips are resampled to `t_fix` frames and flattened to vectors of
//! dimension `D = t_fix * J * 3` (frame-major, then joint, then x/y/z).
//! The space is the top-`d` principal subspace of the centered corpus
//! matrix, computed through the `n x n` Gram matrix so the decomposition
//! cost scales with corpus size rather than with `D`.  Basis columns are
//! re-orthonormalized and sign-fixed, which makes the fit a pure function
//! of corpus order.

use forge_core::motion::{resample, MotionClip, Skeleton};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::GenError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatentParams {
    /// Latent dimensionality.
    pub d: usize,
    /// Frame count every clip is resampled to before flattening.
    pub t_fix: usize,
}

impl Default for LatentParams {
    fn default() -> Self {
        LatentParams { d: 16, t_fix: 60 }
    }
}

impl LatentParams {
    pub fn validate(&self) -> Result<(), GenError> {
        if self.d == 0 {
            return Err(GenError::InvalidArgument("latent dimension d must be >= 1".into()));
        }
        if self.t_fix < 2 {
            return Err(GenError::InvalidArgument(format!(
                "t_fix must be >= 2, got {}",
                self.t_fix
            )));
        }
        Ok(())
    }
}

/// Fitted affine latent space.
///
/// `basis` has orthonormal columns, so encode/decode round trips are the
/// orthogonal projection onto `mean + span(basis)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSpace {
    /// Corpus mean of the flattened clips, length `D`.
    pub mean: DVector<f64>,
    /// `D x d` with orthonormal columns.
    pub basis: DMatrix<f64>,
    pub t_fix: usize,
    /// Attached to every decoded clip.
    pub skeleton: Skeleton,
    pub fps: f64,
    pub ground_height: f64,
}

impl LatentSpace {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn flat_dim(&self) -> usize {
        self.mean.len()
    }
}

/// One point of the latent space plus the category it was conditioned on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentCode {
    pub values: Vec<f64>,
    pub label: String,
}

pub(crate) fn flatten(clip: &MotionClip) -> DVector<f64> {
    let mut out = Vec::with_capacity(clip.len() * clip.joint_count() * 3);
    for frame in &clip.frames {
        for p in frame {
            out.extend_from_slice(p);
        }
    }
    DVector::from_vec(out)
}

fn unflatten(x: &DVector<f64>, t_fix: usize, joints: usize) -> Vec<Vec<[f64; 3]>> {
    let mut frames = Vec::with_capacity(t_fix);
    let mut i = 0;
    for _ in 0..t_fix {
        let mut frame = Vec::with_capacity(joints);
        for _ in 0..joints {
            frame.push([x[i], x[i + 1], x[i + 2]]);
            i += 3;
        }
        frames.push(frame);
    }
    frames
}

/// Subtracts projections onto earlier columns and normalizes, in order.
/// Columns enter near-orthonormal, so one pass restores 1e-14 orthogonality.
fn orthonormalize(cols: &mut [DVector<f64>]) {
    for i in 0..cols.len() {
        for j in 0..i {
            let c = cols[j].dot(&cols[i]);
            let proj = &cols[j] * c;
            cols[i] -= proj;
        }
        let n = cols[i].norm();
        cols[i] /= n;
    }
}

/// Flips each column so its largest-magnitude entry is positive.  Ties keep
/// the lowest index, which pins the convention completely.
fn fix_signs(basis: &mut DMatrix<f64>) {
    for mut col in basis.column_iter_mut() {
        let mut arg = 0;
        let mut best = 0.0_f64;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > best {
                best = v.abs();
                arg = i;
            }
        }
        if col[arg] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Fits the top-`d` principal subspace of the corpus.
///
/// Deterministic: same corpus in the same order gives the same space bit
/// for bit.  When the centered corpus has rank below `d`, the basis is
/// padded with orthonormalized canonical directions so the column count
/// and the orthonormality invariant always hold.
pub fn fit_latent_space(corpus: &[MotionClip], params: &LatentParams) -> Result<LatentSpace, GenError> {
    params.validate()?;
    if corpus.len() < params.d {
        return Err(GenError::InvalidArgument(format!(
            "corpus has {} clips, need at least d = {}",
            corpus.len(),
            params.d
        )));
    }
    let resampled: Vec<MotionClip> = corpus
        .iter()
        .map(|c| resample(c, params.t_fix))
        .collect::<Result<_, _>>()?;
    let joints = resampled[0].joint_count();
    let dim = params.t_fix * joints * 3;
    for (i, clip) in resampled.iter().enumerate() {
        if clip.joint_count() != joints {
            return Err(GenError::ShapeMismatch(format!(
                "clip {} has {} joints, expected {}",
                i,
                clip.joint_count(),
                joints
            )));
        }
    }
    let n = resampled.len();
    let mut x = DMatrix::zeros(n, dim);
    for (i, clip) in resampled.iter().enumerate() {
        x.row_mut(i).copy_from(&flatten(clip).transpose());
    }
    let mean = x.row_mean().transpose();
    let mut xc = x;
    for mut row in xc.row_iter_mut() {
        row -= mean.transpose();
    }

    let gram = &xc * xc.transpose();
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("gram eigenvalues are finite")
            .then(a.cmp(&b))
    });
    // Singular values below this floor are treated as numerical zero; the
    // corresponding directions are not defined by the data.
    let sv_tol = eig.eigenvalues[order[0]].max(0.0).sqrt().max(1.0) * 1e-9;

    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(params.d);
    for &i in order.iter().take(params.d) {
        let w = xc.transpose() * eig.eigenvectors.column(i);
        if w.norm() > sv_tol {
            cols.push(w);
        }
    }
    orthonormalize(&mut cols);
    let mut candidate = 0;
    while cols.len() < params.d {
        if candidate >= dim {
            return Err(GenError::Singular(
                "cannot complete an orthonormal basis; d exceeds the flat dimension".into(),
            ));
        }
        let mut v = DVector::zeros(dim);
        v[candidate] = 1.0;
        candidate += 1;
        for col in &cols {
            let c = col.dot(&v);
            let proj = col * c;
            v -= proj;
        }
        let norm = v.norm();
        if norm > 1e-6 {
            cols.push(v / norm);
        }
    }

    let mut basis = DMatrix::zeros(dim, params.d);
    for (j, col) in cols.iter().enumerate() {
        basis.column_mut(j).copy_from(col);
    }
    fix_signs(&mut basis);

    Ok(LatentSpace {
        mean,
        basis,
        t_fix: params.t_fix,
        skeleton: resampled[0].skeleton.clone(),
        fps: resampled[0].fps,
        ground_height: resampled[0].ground_height,
    })
}

/// Projects a clip onto the latent space.  Clips of other lengths are
/// resampled to `t_fix` first.
pub fn encode(space: &LatentSpace, clip: &MotionClip) -> Result<LatentCode, GenError> {
    let owned;
    let clip = if clip.len() == space.t_fix {
        clip
    } else {
        owned = resample(clip, space.t_fix)?;
        &owned
    };
    let x = flatten(clip);
    if x.len() != space.flat_dim() {
        return Err(GenError::ShapeMismatch(format!(
            "flattened clip has dimension {}, space expects {}",
            x.len(),
            space.flat_dim()
        )));
    }
    let values = space.basis.transpose() * (x - &space.mean);
    Ok(LatentCode { values: values.as_slice().to_vec(), label: clip.label.clone() })
}

/// Reconstructs a clip from a code.  The result carries the code's label
/// and the space's skeleton, frame rate, and ground height.
pub fn decode(space: &LatentSpace, code: &LatentCode) -> Result<MotionClip, GenError> {
    if code.values.len() != space.dim() {
        return Err(GenError::ShapeMismatch(format!(
            "code has dimension {}, space expects {}",
            code.values.len(),
            space.dim()
        )));
    }
    if code.values.iter().any(|v| !v.is_finite()) {
        return Err(GenError::InvalidArgument("latent code has non-finite values".into()));
    }
    let v = DVector::from_column_slice(&code.values);
    let x = &space.mean + &space.basis * v;
    let joints = space.skeleton.joint_count();
    Ok(MotionClip {
        skeleton: space.skeleton.clone(),
        fps: space.fps,
        ground_height: space.ground_height,
        label: code.label.clone(),
        tags: Vec::new(),
        frames: unflatten(&x, space.t_fix, joints),
    })
}

/// decode(encode(clip)): the orthogonal projection of the clip onto the
/// space, as a clip.
pub fn reconstruct(space: &LatentSpace, clip: &MotionClip) -> Result<MotionClip, GenError> {
    decode(space, &encode(space, clip)?)
}
