//! Procedural gait clips with known ground truth.
//!
//! The generator builds a 13-joint humanoid analytically: feet follow
//! scheduled stance/swing segments, knees come from two-bone IK, and the
//! upper body is rigidly attached to the root, so bone lengths are constant
//! and stance feet are pinned to exact ground targets.  Each clip carries
//! its stance/airborne schedule in the tags, which downstream tests use as
//! contact ground truth.
//!
//! [`corrupt_clip`] injects controlled physics violations (foot skate,
//! floating, ground penetration, coordinate noise) on top of the declared
//! schedule, with analytically known metric values.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::motion::{CorpusEntry, MotionClip, MotionError, Skeleton, Split};
use crate::seeding::{rng_for, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GaitCategory {
    Walk,
    Jump,
    Kick,
    Idle,
}

impl GaitCategory {
    pub const ALL: [GaitCategory; 4] =
        [GaitCategory::Walk, GaitCategory::Jump, GaitCategory::Kick, GaitCategory::Idle];

    pub fn label(&self) -> &'static str {
        match self {
            GaitCategory::Walk => "walk",
            GaitCategory::Jump => "jump",
            GaitCategory::Kick => "kick",
            GaitCategory::Idle => "idle",
        }
    }
}

impl fmt::Display for GaitCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaitSpec {
    pub category: GaitCategory,
    pub duration_s: f64,
    pub fps: f64,
    pub seed: u64,
    pub ground_height: f64,
    /// Forward distance each foot covers per full gait cycle (walk).
    pub stride_m: f64,
    /// One step; a cycle is two steps.
    pub step_period_s: f64,
    /// Peak root rise during jump flight.
    pub jump_height_m: f64,
    /// Peak kicking-foot height above ground.
    pub kick_height_m: f64,
}

impl Default for GaitSpec {
    fn default() -> Self {
        GaitSpec {
            category: GaitCategory::Walk,
            duration_s: 4.0,
            fps: 30.0,
            seed: 0,
            ground_height: 0.0,
            stride_m: 0.5,
            step_period_s: 0.6,
            jump_height_m: 0.3,
            kick_height_m: 0.6,
        }
    }
}

impl GaitSpec {
    pub fn new(category: GaitCategory, seed: u64) -> Self {
        GaitSpec { category, seed, ..Default::default() }
    }
}

/// Tag carried by clips whose schedule legitimately leaves the ground.
pub const AIRBORNE_ALLOWED_TAG: &str = "airborne-allowed";

const TAG_STANCE_LEFT: &str = "stance-left=";
const TAG_STANCE_RIGHT: &str = "stance-right=";
const TAG_AIRBORNE: &str = "airborne=";

/// Joint indices of [`standard_skeleton`].
pub mod joints {
    pub const ROOT: usize = 0;
    pub const SPINE: usize = 1;
    pub const HEAD: usize = 2;
    pub const L_SHOULDER: usize = 3;
    pub const L_HAND: usize = 4;
    pub const R_SHOULDER: usize = 5;
    pub const R_HAND: usize = 6;
    pub const L_HIP: usize = 7;
    pub const L_KNEE: usize = 8;
    pub const L_FOOT: usize = 9;
    pub const R_HIP: usize = 10;
    pub const R_KNEE: usize = 11;
    pub const R_FOOT: usize = 12;
    pub const COUNT: usize = 13;
}

const ROOT_HEIGHT: f64 = 0.85;
const HIP_DY: f64 = 0.10;
const HIP_DZ: f64 = -0.08;
const THIGH: f64 = 0.45;
const SHIN: f64 = 0.45;
const SPINE_DZ: f64 = 0.25;
const HEAD_DZ: f64 = 0.25;
const SHOULDER_DY: f64 = 0.20;
const SHOULDER_DZ: f64 = 0.02;
const ARM_LEN: f64 = 0.55;
const FOOT_DY: f64 = 0.12;
/// Extra swing-foot arc height on top of the clearance floor.
const SWING_ARC: f64 = 0.08;
/// Minimum height of any airborne foot frame.  Strictly above the contact
/// detector's height band, so a frame is either planted bit-exactly or can
/// never be read as a contact, regardless of phase or frame-grid alignment.
const SWING_CLEARANCE: f64 = 0.06;
const WALK_DUTY: f64 = 0.6;
const GRAVITY: f64 = 9.81;

/// The 13-joint humanoid every synthetic clip uses.
pub fn standard_skeleton() -> Skeleton {
    use joints::*;
    let mut names = vec![String::new(); COUNT];
    names[ROOT] = "root".into();
    names[SPINE] = "spine".into();
    names[HEAD] = "head".into();
    names[L_SHOULDER] = "l_shoulder".into();
    names[L_HAND] = "l_hand".into();
    names[R_SHOULDER] = "r_shoulder".into();
    names[R_HAND] = "r_hand".into();
    names[L_HIP] = "l_hip".into();
    names[L_KNEE] = "l_knee".into();
    names[L_FOOT] = "l_foot".into();
    names[R_HIP] = "r_hip".into();
    names[R_KNEE] = "r_knee".into();
    names[R_FOOT] = "r_foot".into();
    let mut parents = vec![None; COUNT];
    parents[SPINE] = Some(ROOT);
    parents[HEAD] = Some(SPINE);
    parents[L_SHOULDER] = Some(SPINE);
    parents[L_HAND] = Some(L_SHOULDER);
    parents[R_SHOULDER] = Some(SPINE);
    parents[R_HAND] = Some(R_SHOULDER);
    parents[L_HIP] = Some(ROOT);
    parents[L_KNEE] = Some(L_HIP);
    parents[L_FOOT] = Some(L_KNEE);
    parents[R_HIP] = Some(ROOT);
    parents[R_KNEE] = Some(R_HIP);
    parents[R_FOOT] = Some(R_KNEE);
    let shoulder_len = (SHOULDER_DY * SHOULDER_DY + SHOULDER_DZ * SHOULDER_DZ).sqrt();
    let hip_len = (HIP_DY * HIP_DY + HIP_DZ * HIP_DZ).sqrt();
    let mut bone_lengths = vec![0.0; COUNT];
    bone_lengths[SPINE] = SPINE_DZ;
    bone_lengths[HEAD] = HEAD_DZ;
    bone_lengths[L_SHOULDER] = shoulder_len;
    bone_lengths[L_HAND] = ARM_LEN;
    bone_lengths[R_SHOULDER] = shoulder_len;
    bone_lengths[R_HAND] = ARM_LEN;
    bone_lengths[L_HIP] = hip_len;
    bone_lengths[L_KNEE] = THIGH;
    bone_lengths[L_FOOT] = SHIN;
    bone_lengths[R_HIP] = hip_len;
    bone_lengths[R_KNEE] = THIGH;
    bone_lengths[R_FOOT] = SHIN;
    Skeleton {
        joint_names: names,
        parents,
        bone_lengths,
        foot_joints: [L_FOOT, R_FOOT],
        keypoint_joints: vec![L_HAND, R_HAND, L_FOOT, R_FOOT, HEAD],
    }
}

/// Per-frame stance/airborne schedule declared by the generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeclaredSchedule {
    /// `stance[t] = [left, right]`.
    pub stance: Vec<[bool; 2]>,
    pub airborne: Vec<bool>,
}

impl DeclaredSchedule {
    pub fn len(&self) -> usize {
        self.stance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stance.is_empty()
    }

    /// Frames where at least one foot is scheduled to be planted.
    pub fn any_stance(&self, t: usize) -> bool {
        self.stance[t][0] || self.stance[t][1]
    }

    fn to_tags(&self) -> Vec<String> {
        let bits = |f: &dyn Fn(usize) -> bool| -> String {
            (0..self.len()).map(|t| if f(t) { '1' } else { '0' }).collect()
        };
        vec![
            format!("{TAG_STANCE_LEFT}{}", bits(&|t| self.stance[t][0])),
            format!("{TAG_STANCE_RIGHT}{}", bits(&|t| self.stance[t][1])),
            format!("{TAG_AIRBORNE}{}", bits(&|t| self.airborne[t])),
        ]
    }
}

/// Recovers the generator's schedule from clip tags.  Returns `None` when
/// the tags are absent or do not match the frame count.
pub fn declared_schedule(clip: &MotionClip) -> Option<DeclaredSchedule> {
    let find = |prefix: &str| -> Option<Vec<bool>> {
        let tag = clip.tags.iter().find(|t| t.starts_with(prefix))?;
        let bits: Vec<bool> = tag[prefix.len()..]
            .chars()
            .map(|c| match c {
                '1' => Some(true),
                '0' => Some(false),
                _ => None,
            })
            .collect::<Option<_>>()?;
        (bits.len() == clip.len()).then_some(bits)
    };
    let left = find(TAG_STANCE_LEFT)?;
    let right = find(TAG_STANCE_RIGHT)?;
    let airborne = find(TAG_AIRBORNE)?;
    let stance = left.into_iter().zip(right).map(|(l, r)| [l, r]).collect();
    Some(DeclaredSchedule { stance, airborne })
}

fn smoothstep5(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * u * (10.0 + u * (-15.0 + 6.0 * u))
}

fn rot_y(theta: f64, v: [f64; 3]) -> [f64; 3] {
    let (s, c) = theta.sin_cos();
    [v[0] * c + v[2] * s, v[1], -v[0] * s + v[2] * c]
}

/// Knee placement between a hip and a prescribed foot.  The bend direction
/// is the component of `bend_hint` perpendicular to the hip-foot axis; a
/// vertical axis degenerate case falls back to bending upward.
fn two_bone_ik(hip: [f64; 3], foot: [f64; 3], l1: f64, l2: f64, bend_hint: [f64; 3]) -> [f64; 3] {
    let u = [foot[0] - hip[0], foot[1] - hip[1], foot[2] - hip[2]];
    let d = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
    let dc = d.clamp((l1 - l2).abs() + 1e-6, l1 + l2 - 1e-6);
    let a = (l1 * l1 - l2 * l2 + dc * dc) / (2.0 * dc);
    let h = (l1 * l1 - a * a).max(0.0).sqrt();
    let un = [u[0] / d, u[1] / d, u[2] / d];
    let project = |v: [f64; 3]| -> [f64; 3] {
        let dot = v[0] * un[0] + v[1] * un[1] + v[2] * un[2];
        [v[0] - dot * un[0], v[1] - dot * un[1], v[2] - dot * un[2]]
    };
    let mut perp = project(bend_hint);
    let mut norm = (perp[0] * perp[0] + perp[1] * perp[1] + perp[2] * perp[2]).sqrt();
    if norm < 1e-9 {
        perp = project([0.0, 0.0, 1.0]);
        norm = (perp[0] * perp[0] + perp[1] * perp[1] + perp[2] * perp[2]).sqrt();
    }
    [
        hip[0] + a * un[0] + h * perp[0] / norm,
        hip[1] + a * un[1] + h * perp[1] / norm,
        hip[2] + a * un[2] + h * perp[2] / norm,
    ]
}

/// Root pose plus foot targets for one frame; the rest of the body is
/// derived from these.
struct FramePose {
    root: [f64; 3],
    feet: [[f64; 3]; 2],
    stance: [bool; 2],
    airborne: bool,
    /// Sagittal arm swing angle, left arm (right arm mirrors).
    arm_angle: f64,
}

fn assemble(pose: &FramePose) -> Vec<[f64; 3]> {
    use joints::*;
    let mut f = vec![[0.0; 3]; COUNT];
    let root = pose.root;
    f[ROOT] = root;
    f[SPINE] = [root[0], root[1], root[2] + SPINE_DZ];
    f[HEAD] = [f[SPINE][0], f[SPINE][1], f[SPINE][2] + HEAD_DZ];
    f[L_SHOULDER] = [f[SPINE][0], f[SPINE][1] + SHOULDER_DY, f[SPINE][2] + SHOULDER_DZ];
    f[R_SHOULDER] = [f[SPINE][0], f[SPINE][1] - SHOULDER_DY, f[SPINE][2] + SHOULDER_DZ];
    let l_arm = rot_y(pose.arm_angle, [0.0, 0.0, -ARM_LEN]);
    let r_arm = rot_y(-pose.arm_angle, [0.0, 0.0, -ARM_LEN]);
    f[L_HAND] = [f[L_SHOULDER][0] + l_arm[0], f[L_SHOULDER][1] + l_arm[1], f[L_SHOULDER][2] + l_arm[2]];
    f[R_HAND] = [f[R_SHOULDER][0] + r_arm[0], f[R_SHOULDER][1] + r_arm[1], f[R_SHOULDER][2] + r_arm[2]];
    let hips = [
        [root[0], root[1] + HIP_DY, root[2] + HIP_DZ],
        [root[0], root[1] - HIP_DY, root[2] + HIP_DZ],
    ];
    f[L_HIP] = hips[0];
    f[R_HIP] = hips[1];
    f[L_FOOT] = pose.feet[0];
    f[R_FOOT] = pose.feet[1];
    f[L_KNEE] = two_bone_ik(hips[0], pose.feet[0], THIGH, SHIN, [1.0, 0.0, 0.0]);
    f[R_KNEE] = two_bone_ik(hips[1], pose.feet[1], THIGH, SHIN, [1.0, 0.0, 0.0]);
    f
}

/// Deterministically generates one clip.  Same spec, same clip, bit for bit.
pub fn generate_clip(spec: &GaitSpec) -> Result<MotionClip, MotionError> {
    if !(spec.duration_s.is_finite() && spec.duration_s > 0.0) {
        return Err(MotionError::InvalidArgument(format!(
            "duration_s must be positive, got {}",
            spec.duration_s
        )));
    }
    if !(spec.fps.is_finite() && spec.fps > 0.0) {
        return Err(MotionError::InvalidArgument(format!("fps must be positive, got {}", spec.fps)));
    }
    let frames = (spec.duration_s * spec.fps).round() as usize;
    if frames < 2 {
        return Err(MotionError::InvalidArgument(
            "duration_s * fps must give at least 2 frames".into(),
        ));
    }
    if spec.category == GaitCategory::Walk && !(spec.step_period_s > 0.0 && spec.stride_m >= 0.0) {
        return Err(MotionError::InvalidArgument(
            "walk requires step_period_s > 0 and stride_m >= 0".into(),
        ));
    }
    let mut rng = rng_for(spec.seed, &[Stage::Corpus as u64, spec.category as u64]);
    let x0: f64 = rng.random_range(-0.5..0.5);
    let y_jitter: f64 = rng.random_range(-0.01..0.01);
    let arm_amp: f64 = rng.random_range(0.15..0.30);
    let bob_amp: f64 = rng.random_range(0.004..0.008);
    // Clips within a category share one gait phase; per-clip variety lives
    // in the translation and amplitude draws above, which mix linearly.
    let phase0: f64 = 0.0;

    let zg = spec.ground_height;
    let base_z = zg + ROOT_HEIGHT;
    let foot_y = [FOOT_DY + y_jitter, -(FOOT_DY + y_jitter)];
    let dt = 1.0 / spec.fps;

    let mut poses = Vec::with_capacity(frames);
    match spec.category {
        GaitCategory::Idle => {
            for t in 0..frames {
                let time = t as f64 * dt;
                let breathe = (2.0 * std::f64::consts::PI * (time / 3.0 + phase0)).sin();
                poses.push(FramePose {
                    root: [x0, 0.0, base_z + bob_amp * breathe],
                    feet: [[x0, foot_y[0], zg], [x0, foot_y[1], zg]],
                    stance: [true, true],
                    airborne: false,
                    arm_angle: 0.03 * breathe,
                });
            }
        }
        GaitCategory::Walk => {
            let cycle = 2.0 * spec.step_period_s;
            let speed = spec.stride_m / cycle;
            // Stance target for cycle k of foot f, placed where the root
            // passes at mid-stance.
            let base = [phase0, phase0 + 0.5];
            let target = |f: usize, k: f64| -> f64 {
                x0 + speed * cycle * (k + WALK_DUTY / 2.0 - base[f])
            };
            for t in 0..frames {
                let time = t as f64 * dt;
                let mut feet = [[0.0; 3]; 2];
                let mut stance = [false, false];
                for f in 0..2 {
                    let tau = time / cycle + base[f];
                    let k = tau.floor();
                    let u = tau - k;
                    if u < WALK_DUTY {
                        feet[f] = [target(f, k), foot_y[f], zg];
                        stance[f] = true;
                    } else {
                        // One frame of margin at each end of the swing stays
                        // planted bit-exactly at the stance target, so every
                        // declared stance frame has motionless neighbours and
                        // the contact detector reproduces the schedule.
                        let t_sw = (1.0 - WALK_DUTY) * cycle;
                        let s = (u - WALK_DUTY) * cycle;
                        let from = target(f, k);
                        let to = target(f, k + 1.0);
                        if t_sw <= 3.0 * dt {
                            feet[f] = [if s < t_sw / 2.0 { from } else { to }, foot_y[f], zg];
                        } else if s < dt {
                            feet[f] = [from, foot_y[f], zg];
                        } else if s >= t_sw - dt {
                            feet[f] = [to, foot_y[f], zg];
                        } else {
                            let v = (s - dt) / (t_sw - 2.0 * dt);
                            feet[f] = [
                                from + (to - from) * smoothstep5(v),
                                foot_y[f],
                                zg + SWING_CLEARANCE + SWING_ARC * (std::f64::consts::PI * v).sin(),
                            ];
                        }
                    }
                }
                let tau_root = time / cycle + phase0;
                poses.push(FramePose {
                    root: [
                        x0 + speed * time,
                        0.02 * (2.0 * std::f64::consts::PI * tau_root).sin(),
                        base_z + bob_amp * (4.0 * std::f64::consts::PI * tau_root).sin(),
                    ],
                    feet,
                    stance,
                    airborne: false,
                    arm_angle: arm_amp * (2.0 * std::f64::consts::PI * tau_root).sin(),
                });
            }
        }
        GaitCategory::Jump => {
            let v0 = (2.0 * GRAVITY * spec.jump_height_m).sqrt();
            let flight = 2.0 * v0 / GRAVITY;
            let t1 = ((spec.duration_s - flight) * 0.4).max(dt);
            let t2 = t1 + flight;
            let crouch = 0.08;
            let tuck = 0.12;
            for t in 0..frames {
                let time = t as f64 * dt;
                let (dz_root, lift, in_flight) = if time < t1 {
                    (-crouch * (std::f64::consts::PI * time / t1).sin().powi(2), 0.0, false)
                } else if time < t2 {
                    let s = time - t1;
                    let rise = v0 * s - 0.5 * GRAVITY * s * s;
                    let lift = rise + tuck * (std::f64::consts::PI * s / flight).sin().powi(2);
                    (rise, lift, true)
                } else {
                    let u = ((time - t2) / 0.5).min(1.0);
                    (-crouch * (std::f64::consts::PI * u).sin().powi(2), 0.0, false)
                };
                let feet = [
                    [x0, foot_y[0], zg + lift],
                    [x0, foot_y[1], zg + lift],
                ];
                poses.push(FramePose {
                    root: [x0, 0.0, base_z + dz_root],
                    feet,
                    stance: [!in_flight, !in_flight],
                    // Declared with a 5 mm margin over the floating band so
                    // detection-side thresholds are met strictly.
                    airborne: in_flight && lift > 0.055,
                    arm_angle: if in_flight {
                        arm_amp * (std::f64::consts::PI * (time - t1) / flight).sin().powi(2)
                    } else {
                        0.0
                    },
                });
            }
        }
        GaitCategory::Kick => {
            let w0 = 0.30 * spec.duration_s;
            let w1 = 0.75 * spec.duration_s;
            for t in 0..frames {
                let time = t as f64 * dt;
                let kicking = time >= w0 && time < w1;
                // Airborne frames stay above the clearance floor; one margin
                // frame at each end of the window remains planted bit-exactly,
                // mirroring the walk swing.
                let in_air = (w1 - w0) > 3.0 * dt && time >= w0 + dt && time < w1 - dt;
                let (dx, dz, lean) = if in_air {
                    let v = (time - (w0 + dt)) / ((w1 - w0) - 2.0 * dt);
                    let bump = (std::f64::consts::PI * v).sin();
                    let dz = SWING_CLEARANCE + (spec.kick_height_m - SWING_CLEARANCE) * bump;
                    (0.40 * bump, dz, -0.05 * bump)
                } else {
                    (0.0, 0.0, 0.0)
                };
                poses.push(FramePose {
                    root: [x0 + lean, 0.0, base_z],
                    feet: [
                        [x0, foot_y[0], zg],
                        [x0 + dx, foot_y[1], zg + dz],
                    ],
                    stance: [true, !kicking],
                    airborne: false,
                    arm_angle: -0.5 * lean,
                });
            }
        }
    }

    let stance: Vec<[bool; 2]> = poses.iter().map(|p| p.stance).collect();
    let airborne: Vec<bool> = poses.iter().map(|p| p.airborne).collect();
    let schedule = DeclaredSchedule { stance, airborne };
    let mut tags = schedule.to_tags();
    if spec.category == GaitCategory::Jump {
        tags.push(AIRBORNE_ALLOWED_TAG.into());
    }
    let clip = MotionClip {
        skeleton: standard_skeleton(),
        fps: spec.fps,
        ground_height: zg,
        label: spec.category.label().into(),
        tags,
        frames: poses.iter().map(assemble).collect(),
    };
    clip.validate()?;
    Ok(clip)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorruptionKind {
    Skate,
    Float,
    Penetrate,
    Noise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    /// Meters: per-frame drift (skate), lift (float), depth (penetrate), or
    /// coordinate noise standard deviation (noise).
    pub magnitude: f64,
    pub seed: u64,
}

/// Injects one controlled violation.  Zero magnitude returns the input
/// unchanged.  The declared schedule tags are preserved, so the schedule
/// keeps describing where contact was *intended*.
pub fn corrupt_clip(clip: &MotionClip, spec: &CorruptionSpec) -> Result<MotionClip, MotionError> {
    if !(spec.magnitude.is_finite() && spec.magnitude >= 0.0) {
        return Err(MotionError::InvalidArgument(format!(
            "magnitude must be non-negative, got {}",
            spec.magnitude
        )));
    }
    if spec.magnitude == 0.0 {
        return Ok(clip.clone());
    }
    let mut out = clip.clone();
    match spec.kind {
        CorruptionKind::Noise => {
            let mut rng = rng_for(spec.seed, &[Stage::Corpus as u64, 0xC0]);
            for frame in &mut out.frames {
                for p in frame.iter_mut() {
                    for c in p.iter_mut() {
                        let n: f64 = rng.sample(rand_distr::StandardNormal);
                        *c += spec.magnitude * n;
                    }
                }
            }
        }
        CorruptionKind::Skate | CorruptionKind::Float | CorruptionKind::Penetrate => {
            let schedule = declared_schedule(clip).ok_or_else(|| {
                MotionError::InvalidArgument(
                    "corruption kind requires a declared stance schedule".into(),
                )
            })?;
            match spec.kind {
                CorruptionKind::Skate => {
                    // Cumulative +x drift inside each stance run: every
                    // consecutive in-run frame pair moves by exactly
                    // `magnitude`.
                    for f in 0..2 {
                        let joint = clip.skeleton.foot_joints[f];
                        let mut run = 0usize;
                        for t in 0..clip.len() {
                            if schedule.stance[t][f] {
                                out.frames[t][joint][0] += run as f64 * spec.magnitude;
                                run += 1;
                            } else {
                                run = 0;
                            }
                        }
                    }
                }
                CorruptionKind::Float => {
                    for t in 0..clip.len() {
                        if schedule.any_stance(t) {
                            for p in out.frames[t].iter_mut() {
                                p[2] += spec.magnitude;
                            }
                        }
                    }
                }
                CorruptionKind::Penetrate => {
                    for f in 0..2 {
                        let joint = clip.skeleton.foot_joints[f];
                        for t in 0..clip.len() {
                            if schedule.stance[t][f] {
                                out.frames[t][joint][2] -= spec.magnitude;
                            }
                        }
                    }
                }
                CorruptionKind::Noise => unreachable!(),
            }
        }
    }
    Ok(out)
}

/// Recipe for a whole corpus: `count` clips cycling through `categories`,
/// with leading index blocks replaced by corrupted variants and every fifth
/// clip assigned to the test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub count: usize,
    pub seed: u64,
    pub categories: Vec<GaitCategory>,
    pub duration_s: f64,
    pub fps: f64,
    pub skate_frac: f64,
    pub float_frac: f64,
    pub penetrate_frac: f64,
    pub noise_frac: f64,
    pub skate_magnitude: f64,
    pub float_magnitude: f64,
    pub penetrate_magnitude: f64,
    pub noise_magnitude: f64,
    pub test_fraction: f64,
}

impl Default for CorpusSpec {
    /// The standard benchmark corpus: 200 grounded clips, 30% with foot
    /// skate, 20% floating, the rest clean.  Skate drift is kept below the
    /// contact speed gate so detection still sees the drifting foot as
    /// planted.
    fn default() -> Self {
        CorpusSpec {
            count: 200,
            seed: 0,
            categories: vec![GaitCategory::Walk, GaitCategory::Idle, GaitCategory::Kick],
            duration_s: 2.0,
            fps: 30.0,
            skate_frac: 0.3,
            float_frac: 0.2,
            penetrate_frac: 0.0,
            noise_frac: 0.0,
            skate_magnitude: 0.008,
            float_magnitude: 0.08,
            penetrate_magnitude: 0.03,
            noise_magnitude: 0.02,
            test_fraction: 0.2,
        }
    }
}

pub fn build_corpus(spec: &CorpusSpec) -> Result<Vec<CorpusEntry>, MotionError> {
    if spec.count == 0 {
        return Err(MotionError::InvalidArgument("corpus count must be positive".into()));
    }
    if spec.categories.is_empty() {
        return Err(MotionError::InvalidArgument("categories must be non-empty".into()));
    }
    let fracs =
        [spec.skate_frac, spec.float_frac, spec.penetrate_frac, spec.noise_frac];
    if fracs.iter().any(|f| !(0.0..=1.0).contains(f)) || fracs.iter().sum::<f64>() > 1.0 + 1e-9 {
        return Err(MotionError::InvalidArgument(
            "corruption fractions must lie in [0, 1] and sum to at most 1".into(),
        ));
    }
    let counts: Vec<usize> = fracs.iter().map(|f| (f * spec.count as f64).round() as usize).collect();
    let kinds = [
        CorruptionKind::Skate,
        CorruptionKind::Float,
        CorruptionKind::Penetrate,
        CorruptionKind::Noise,
    ];
    let magnitudes = [
        spec.skate_magnitude,
        spec.float_magnitude,
        spec.penetrate_magnitude,
        spec.noise_magnitude,
    ];
    let test_every = if spec.test_fraction > 0.0 {
        (1.0 / spec.test_fraction).round().max(1.0) as usize
    } else {
        usize::MAX
    };

    let mut entries = Vec::with_capacity(spec.count);
    for i in 0..spec.count {
        let category = spec.categories[i % spec.categories.len()];
        let gait = GaitSpec {
            category,
            duration_s: spec.duration_s,
            fps: spec.fps,
            seed: crate::seeding::derive_seed(spec.seed, &[Stage::Corpus as u64, i as u64, 0]),
            ..Default::default()
        };
        let mut clip = generate_clip(&gait)?;
        let mut boundary = 0usize;
        for (k, &n) in counts.iter().enumerate() {
            if i >= boundary && i < boundary + n {
                clip = corrupt_clip(
                    &clip,
                    &CorruptionSpec {
                        kind: kinds[k],
                        magnitude: magnitudes[k],
                        seed: crate::seeding::derive_seed(
                            spec.seed,
                            &[Stage::Corpus as u64, i as u64, 1],
                        ),
                    },
                )?;
                break;
            }
            boundary += n;
        }
        let split = if (i + 1) % test_every == 0 { Split::Test } else { Split::Train };
        entries.push(CorpusEntry { id: format!("{}_{:04}", category, i), split, clip });
    }
    Ok(entries)
}
