//! Motion clips: the common currency of the whole pipeline.
//!
//! A clip is a fixed skeleton plus a `T x J x 3` array of world-space joint
//! positions in meters, z up, sampled at a constant frame rate.  Clips are
//! stored as JSON (one file per clip, full 64-bit float round trip) and a
//! corpus is a directory of clip files with a `manifest.json` assigning each
//! file to a train/test split.

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MotionError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("parse error in {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("validation error: field `{field}`: {reason}")]
    Validation { field: String, reason: String },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl MotionError {
    pub(crate) fn validation(field: &str, reason: impl Into<String>) -> Self {
        MotionError::Validation { field: field.into(), reason: reason.into() }
    }
}

/// Joint hierarchy shared by every frame of a clip.
///
/// `parents[j]` is `None` exactly for the root.  `bone_lengths[j]` is the
/// rest length of the bone from `parents[j]` to `j` (zero, unused, at the
/// root entry); rest lengths are derived from the frames on load and are
/// strictly positive for every non-root joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub joint_names: Vec<String>,
    pub parents: Vec<Option<usize>>,
    pub bone_lengths: Vec<f64>,
    /// Left and right foot joint indices, in that order.
    pub foot_joints: [usize; 2],
    /// Joints entering the keypoint error (hands, feet, head for the
    /// standard skeleton).
    pub keypoint_joints: Vec<usize>,
}

impl Skeleton {
    pub fn joint_count(&self) -> usize {
        self.joint_names.len()
    }

    /// Index of the unique root joint.  Valid skeletons have exactly one.
    pub fn root(&self) -> usize {
        self.parents.iter().position(|p| p.is_none()).unwrap_or(0)
    }
}

/// A skeletal motion clip.  `frames[t][j]` is the world position of joint
/// `j` at frame `t`, in meters; `ground_height` is the z level of the
/// ground plane.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionClip {
    pub skeleton: Skeleton,
    pub fps: f64,
    pub ground_height: f64,
    pub label: String,
    pub tags: Vec<String>,
    pub frames: Vec<Vec<[f64; 3]>>,
}

impl MotionClip {
    /// Number of frames.
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn joint_count(&self) -> usize {
        self.skeleton.joint_count()
    }

    pub fn duration_secs(&self) -> f64 {
        if self.frames.len() < 2 {
            0.0
        } else {
            (self.frames.len() - 1) as f64 / self.fps
        }
    }

    /// Height of foot `f` (0 = left, 1 = right) above the ground plane.
    pub fn foot_height(&self, t: usize, f: usize) -> f64 {
        self.frames[t][self.skeleton.foot_joints[f]][2] - self.ground_height
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        self.tags.iter().any(|t| t == tag)
    }

    /// Checks every structural invariant; errors name the offending field.
    pub fn validate(&self) -> Result<(), MotionError> {
        let j = self.skeleton.joint_count();
        if j == 0 {
            return Err(MotionError::validation("joints", "skeleton has no joints"));
        }
        if self.skeleton.parents.len() != j {
            return Err(MotionError::validation(
                "parents",
                format!("expected {} entries, found {}", j, self.skeleton.parents.len()),
            ));
        }
        if self.skeleton.bone_lengths.len() != j {
            return Err(MotionError::validation(
                "bone_lengths",
                format!("expected {} entries, found {}", j, self.skeleton.bone_lengths.len()),
            ));
        }
        let roots = self.skeleton.parents.iter().filter(|p| p.is_none()).count();
        if roots != 1 {
            return Err(MotionError::validation(
                "parents",
                format!("expected exactly one root, found {roots}"),
            ));
        }
        for (idx, parent) in self.skeleton.parents.iter().enumerate() {
            if let Some(p) = parent {
                if *p >= j {
                    return Err(MotionError::validation(
                        "parents",
                        format!("joint {idx} has out-of-range parent {p}"),
                    ));
                }
            }
            // Walking up must reach the root in at most j steps; anything
            // longer is a cycle.
            let mut cur = idx;
            let mut steps = 0;
            while let Some(p) = self.skeleton.parents[cur] {
                cur = p;
                steps += 1;
                if steps > j {
                    return Err(MotionError::validation(
                        "parents",
                        format!("cycle through joint {idx}"),
                    ));
                }
            }
        }
        for (idx, len) in self.skeleton.bone_lengths.iter().enumerate() {
            if self.skeleton.parents[idx].is_some() && !(len.is_finite() && *len > 0.0) {
                return Err(MotionError::validation(
                    "bone_lengths",
                    format!("joint {idx} has non-positive rest length {len}"),
                ));
            }
        }
        let [lf, rf] = self.skeleton.foot_joints;
        if lf >= j || rf >= j {
            return Err(MotionError::validation("foot_joints", "index out of range"));
        }
        if lf == rf {
            return Err(MotionError::validation("foot_joints", "feet must be distinct joints"));
        }
        if self.skeleton.keypoint_joints.is_empty() {
            return Err(MotionError::validation("keypoint_joints", "must be non-empty"));
        }
        let mut seen = BTreeSet::new();
        for &k in &self.skeleton.keypoint_joints {
            if k >= j {
                return Err(MotionError::validation("keypoint_joints", "index out of range"));
            }
            if !seen.insert(k) {
                return Err(MotionError::validation(
                    "keypoint_joints",
                    format!("duplicate index {k}"),
                ));
            }
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(MotionError::validation("fps", format!("must be positive, got {}", self.fps)));
        }
        if !self.ground_height.is_finite() {
            return Err(MotionError::validation("ground_height", "must be finite"));
        }
        if self.frames.is_empty() {
            return Err(MotionError::validation("frames", "clip has no frames"));
        }
        for (t, frame) in self.frames.iter().enumerate() {
            if frame.len() != j {
                return Err(MotionError::validation(
                    "frames",
                    format!("frame {t} has {} joints, expected {j}", frame.len()),
                ));
            }
            for (jj, p) in frame.iter().enumerate() {
                if p.iter().any(|c| !c.is_finite()) {
                    return Err(MotionError::validation(
                        "frames",
                        format!("non-finite coordinate at frame {t}, joint {jj}"),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// On-disk clip schema.  Field names are the file format contract.
#[derive(Serialize, Deserialize)]
struct ClipFile {
    fps: f64,
    ground_height: f64,
    label: String,
    tags: Vec<String>,
    joints: Vec<String>,
    parents: Vec<i64>,
    foot_joints: [usize; 2],
    keypoint_joints: Vec<usize>,
    frames: Vec<Vec<[f64; 3]>>,
}

/// Mean per-bone length over all frames.  Computed relative to the first
/// frame's value so that constant-length clips get that exact value back.
fn derive_bone_lengths(parents: &[Option<usize>], frames: &[Vec<[f64; 3]>]) -> Vec<f64> {
    parents
        .iter()
        .enumerate()
        .map(|(j, parent)| match parent {
            None => 0.0,
            Some(p) => {
                let first = dist(&frames[0][j], &frames[0][*p]);
                let sum: f64 = frames.iter().map(|fr| dist(&fr[j], &fr[*p]) - first).sum();
                first + sum / frames.len() as f64
            }
        })
        .collect()
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    let m = dx.abs().max(dy.abs()).max(dz.abs());
    if m == 0.0 {
        return 0.0;
    }
    // Scaled form keeps extreme coordinates from overflowing the squares.
    let (x, y, z) = (dx / m, dy / m, dz / m);
    m * (x * x + y * y + z * z).sqrt()
}

pub fn load_clip(path: impl AsRef<Path>) -> Result<MotionClip, MotionError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|source| MotionError::Io { path: path.to_path_buf(), source })?;
    let file: ClipFile = serde_json::from_str(&text)
        .map_err(|source| MotionError::Parse { path: path.to_path_buf(), source })?;
    clip_from_file(file)
}

fn clip_from_file(file: ClipFile) -> Result<MotionClip, MotionError> {
    let mut parents = Vec::with_capacity(file.parents.len());
    for (idx, &p) in file.parents.iter().enumerate() {
        if p < -1 {
            return Err(MotionError::validation(
                "parents",
                format!("joint {idx} has invalid parent {p}"),
            ));
        }
        parents.push(if p == -1 { None } else { Some(p as usize) });
    }
    if file.frames.is_empty() {
        return Err(MotionError::validation("frames", "clip has no frames"));
    }
    if file.frames[0].len() != file.joints.len() {
        return Err(MotionError::validation(
            "frames",
            format!("frame 0 has {} joints, expected {}", file.frames[0].len(), file.joints.len()),
        ));
    }
    let bone_lengths = derive_bone_lengths(&parents, &file.frames);
    let clip = MotionClip {
        skeleton: Skeleton {
            joint_names: file.joints,
            parents,
            bone_lengths,
            foot_joints: file.foot_joints,
            keypoint_joints: file.keypoint_joints,
        },
        fps: file.fps,
        ground_height: file.ground_height,
        label: file.label,
        tags: file.tags,
        frames: file.frames,
    };
    clip.validate()?;
    Ok(clip)
}

pub fn save_clip(path: impl AsRef<Path>, clip: &MotionClip) -> Result<(), MotionError> {
    let path = path.as_ref();
    clip.validate()?;
    let file = ClipFile {
        fps: clip.fps,
        ground_height: clip.ground_height,
        label: clip.label.clone(),
        tags: clip.tags.clone(),
        joints: clip.skeleton.joint_names.clone(),
        parents: clip
            .skeleton
            .parents
            .iter()
            .map(|p| p.map(|v| v as i64).unwrap_or(-1))
            .collect(),
        foot_joints: clip.skeleton.foot_joints,
        keypoint_joints: clip.skeleton.keypoint_joints.clone(),
        frames: clip.frames.clone(),
    };
    let text = serde_json::to_string(&file).expect("clip serialization cannot fail");
    fs::write(path, text).map_err(|source| MotionError::Io { path: path.to_path_buf(), source })
}

/// Linearly resamples a clip onto `target_frames` uniformly spaced samples
/// spanning the original duration; fps is rescaled so duration is preserved.
/// Equal frame counts return the input unchanged.
pub fn resample(clip: &MotionClip, target_frames: usize) -> Result<MotionClip, MotionError> {
    if target_frames < 2 {
        return Err(MotionError::InvalidArgument(format!(
            "target_frames must be >= 2, got {target_frames}"
        )));
    }
    let t = clip.len();
    if t == target_frames {
        return Ok(clip.clone());
    }
    if t < 2 {
        return Err(MotionError::InvalidArgument(
            "cannot resample a single-frame clip to a different length".into(),
        ));
    }
    let j = clip.joint_count();
    let scale = (t - 1) as f64 / (target_frames - 1) as f64;
    let mut frames = Vec::with_capacity(target_frames);
    for k in 0..target_frames {
        let pos = k as f64 * scale;
        let i = (pos.floor() as usize).min(t - 2);
        let w = pos - i as f64;
        let mut frame = Vec::with_capacity(j);
        for jj in 0..j {
            let a = clip.frames[i][jj];
            let b = clip.frames[i + 1][jj];
            frame.push([
                a[0] + (b[0] - a[0]) * w,
                a[1] + (b[1] - a[1]) * w,
                a[2] + (b[2] - a[2]) * w,
            ]);
        }
        frames.push(frame);
    }
    let fps = clip.fps * (target_frames - 1) as f64 / (t - 1) as f64;
    Ok(MotionClip { frames, fps, ..clip.clone() })
}

/// Frame of reference for clip errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorFrame {
    /// Raw world coordinates.
    #[default]
    World,
    /// Every joint expressed relative to the root joint of its own frame.
    RootRelative,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClipError {
    /// Mean per-joint position error over all joints and frames, meters.
    pub mpjpe: f64,
    /// Same, restricted to the keypoint joints.
    pub mpkpe: f64,
    /// Per-frame mean over all joints.
    pub per_frame: Vec<f64>,
}

pub fn compute_clip_error(a: &MotionClip, b: &MotionClip) -> Result<ClipError, MotionError> {
    compute_clip_error_in(ErrorFrame::World, a, b)
}

pub fn compute_clip_error_in(
    frame: ErrorFrame,
    a: &MotionClip,
    b: &MotionClip,
) -> Result<ClipError, MotionError> {
    if a.skeleton != b.skeleton {
        return Err(MotionError::ShapeMismatch("clips have different skeletons".into()));
    }
    if a.len() != b.len() {
        return Err(MotionError::ShapeMismatch(format!(
            "frame counts differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let j = a.joint_count();
    let root = a.skeleton.root();
    let mut per_frame = Vec::with_capacity(a.len());
    let mut key_sum = 0.0;
    for t in 0..a.len() {
        let offset = |clip: &MotionClip, jj: usize| -> [f64; 3] {
            let p = clip.frames[t][jj];
            match frame {
                ErrorFrame::World => p,
                ErrorFrame::RootRelative => {
                    let r = clip.frames[t][root];
                    [p[0] - r[0], p[1] - r[1], p[2] - r[2]]
                }
            }
        };
        let mut sum = 0.0;
        for jj in 0..j {
            sum += dist(&offset(a, jj), &offset(b, jj));
        }
        per_frame.push(sum / j as f64);
        let mut ks = 0.0;
        for &k in &a.skeleton.keypoint_joints {
            ks += dist(&offset(a, k), &offset(b, k));
        }
        key_sum += ks / a.skeleton.keypoint_joints.len() as f64;
    }
    let mpjpe = per_frame.iter().sum::<f64>() / per_frame.len() as f64;
    let mpkpe = key_sum / a.len() as f64;
    Ok(ClipError { mpjpe, mpkpe, per_frame })
}

/// Train/test assignment inside a corpus manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone)]
pub struct CorpusEntry {
    /// File stem of the clip inside the corpus directory.
    pub id: String,
    pub split: Split,
    pub clip: MotionClip,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    clips: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    file: String,
    split: Split,
}

/// Reads `manifest.json` and every clip it lists, in manifest order.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Vec<CorpusEntry>, MotionError> {
    let dir = dir.as_ref();
    let manifest_path = dir.join("manifest.json");
    let text = fs::read_to_string(&manifest_path)
        .map_err(|source| MotionError::Io { path: manifest_path.clone(), source })?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|source| MotionError::Parse { path: manifest_path, source })?;
    let mut entries = Vec::with_capacity(manifest.clips.len());
    for m in manifest.clips {
        let clip = load_clip(dir.join(&m.file))?;
        let id = Path::new(&m.file)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| m.file.clone());
        entries.push(CorpusEntry { id, split: m.split, clip });
    }
    Ok(entries)
}

/// Writes one JSON file per entry plus `manifest.json`.  The directory is
/// created if missing; entries keep their given order in the manifest.
pub fn save_corpus(dir: impl AsRef<Path>, entries: &[CorpusEntry]) -> Result<(), MotionError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)
        .map_err(|source| MotionError::Io { path: dir.to_path_buf(), source })?;
    let mut manifest = Manifest { clips: Vec::with_capacity(entries.len()) };
    for entry in entries {
        let file = format!("{}.json", entry.id);
        save_clip(dir.join(&file), &entry.clip)?;
        manifest.clips.push(ManifestEntry { file, split: entry.split });
    }
    let manifest_path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialization cannot fail");
    fs::write(&manifest_path, text)
        .map_err(|source| MotionError::Io { path: manifest_path, source })
}
