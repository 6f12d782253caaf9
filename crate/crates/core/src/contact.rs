//! Per-frame foot contact, floating, and ground penetration indicators.
//!
//! Contact is height-and-speed gated, penetration is strictly below the
//! ground plane, and floating is a frame-level condition requiring both
//! feet clear of the ground.  Clips that legitimately leave the ground
//! (jumps) are exempted from floating inside candidate windows entered
//! with sufficient upward root velocity.

use serde::{Deserialize, Serialize};

use crate::motion::MotionClip;
use crate::synth::{declared_schedule, AIRBORNE_ALLOWED_TAG};

/// Upward root speed at a window entry above which an airborne-allowed clip
/// is treated as deliberately jumping rather than floating.
pub const JUMP_EXEMPT_ROOT_VZ: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContactParams {
    /// Max height above ground for a foot in contact, meters.
    pub h_contact: f64,
    /// Max foot speed for contact, meters per second.
    pub v_contact: f64,
    /// Min height of *both* feet for a frame to count as floating, meters.
    pub h_float: f64,
    /// Grants the jump exemption even without the clip tag.
    pub airborne_allowed: bool,
}

impl Default for ContactParams {
    fn default() -> Self {
        ContactParams { h_contact: 0.05, v_contact: 0.30, h_float: 0.05, airborne_allowed: false }
    }
}

/// Indicator tracks for one clip.  Invariants: contact and floating never
/// co-occur on a frame; floating implies both feet above `h_float`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactTrack {
    /// `contact[t] = [left, right]`.
    pub contact: Vec<[bool; 2]>,
    pub floating: Vec<bool>,
    pub penetration: Vec<[bool; 2]>,
}

impl ContactTrack {
    pub fn len(&self) -> usize {
        self.contact.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contact.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContactStats {
    /// Fraction of frames with at least one foot in contact.
    pub contact_ratio: f64,
    pub float_ratio: f64,
    /// Fraction of frames with at least one foot below ground.
    pub penetration_ratio: f64,
}

/// Central-difference speed magnitude of one joint, one-sided at the ends.
/// Single-frame clips have speed zero everywhere.
fn joint_speeds(clip: &MotionClip, joint: usize) -> Vec<f64> {
    let t_len = clip.len();
    let pos = |t: usize| clip.frames[t][joint];
    let norm = |a: [f64; 3], b: [f64; 3]| -> f64 {
        ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2) + (b[2] - a[2]).powi(2)).sqrt()
    };
    (0..t_len)
        .map(|t| {
            if t_len < 2 {
                0.0
            } else if t == 0 {
                norm(pos(0), pos(1)) * clip.fps
            } else if t == t_len - 1 {
                norm(pos(t_len - 2), pos(t_len - 1)) * clip.fps
            } else {
                norm(pos(t - 1), pos(t + 1)) / 2.0 * clip.fps
            }
        })
        .collect()
}

fn root_vertical_velocity(clip: &MotionClip, t: usize) -> f64 {
    let root = clip.skeleton.root();
    let t_len = clip.len();
    if t_len < 2 {
        return 0.0;
    }
    let z = |t: usize| clip.frames[t][root][2];
    if t == 0 {
        (z(1) - z(0)) * clip.fps
    } else if t == t_len - 1 {
        (z(t) - z(t - 1)) * clip.fps
    } else {
        (z(t + 1) - z(t - 1)) / 2.0 * clip.fps
    }
}

/// Marks floating on candidate frames (both feet above `h_float`), then
/// removes jump-exempt windows and anything already in contact.
fn resolve_floating(
    clip: &MotionClip,
    params: &ContactParams,
    heights: &[[f64; 2]],
    contact: &[[bool; 2]],
) -> Vec<bool> {
    let t_len = clip.len();
    let airborne_allowed = params.airborne_allowed || clip.has_tag(AIRBORNE_ALLOWED_TAG);
    let candidate: Vec<bool> = (0..t_len)
        .map(|t| heights[t][0] > params.h_float && heights[t][1] > params.h_float)
        .collect();
    let mut exempt = vec![false; t_len];
    if airborne_allowed {
        let mut t = 0;
        while t < t_len {
            if candidate[t] && (t == 0 || !candidate[t - 1]) {
                let mut end = t;
                while end + 1 < t_len && candidate[end + 1] {
                    end += 1;
                }
                if root_vertical_velocity(clip, t) > JUMP_EXEMPT_ROOT_VZ {
                    for e in exempt.iter_mut().take(end + 1).skip(t) {
                        *e = true;
                    }
                }
                t = end + 1;
            } else {
                t += 1;
            }
        }
    }
    (0..t_len)
        .map(|t| candidate[t] && !exempt[t] && !contact[t][0] && !contact[t][1])
        .collect()
}

/// Threshold-based detection from positions alone.
pub fn detect_contacts(clip: &MotionClip, params: &ContactParams) -> ContactTrack {
    let t_len = clip.len();
    let heights: Vec<[f64; 2]> =
        (0..t_len).map(|t| [clip.foot_height(t, 0), clip.foot_height(t, 1)]).collect();
    let speeds: [Vec<f64>; 2] = [
        joint_speeds(clip, clip.skeleton.foot_joints[0]),
        joint_speeds(clip, clip.skeleton.foot_joints[1]),
    ];
    let contact: Vec<[bool; 2]> = (0..t_len)
        .map(|t| {
            [0, 1].map(|f| heights[t][f] <= params.h_contact && speeds[f][t] <= params.v_contact)
        })
        .collect();
    let penetration: Vec<[bool; 2]> =
        (0..t_len).map(|t| [0, 1].map(|f| heights[t][f] < 0.0)).collect();
    let floating = resolve_floating(clip, params, &heights, &contact);
    ContactTrack { contact, floating, penetration }
}

/// Track built from the generator's declared schedule instead of the speed
/// gate: a scheduled foot counts as planted whenever it is low enough,
/// however fast it drifts.  Declared airborne frames are exempt from
/// floating.  Returns `None` for clips without schedule tags.
pub fn declared_track(clip: &MotionClip, params: &ContactParams) -> Option<ContactTrack> {
    let schedule = declared_schedule(clip)?;
    let t_len = clip.len();
    let heights: Vec<[f64; 2]> =
        (0..t_len).map(|t| [clip.foot_height(t, 0), clip.foot_height(t, 1)]).collect();
    let contact: Vec<[bool; 2]> = (0..t_len)
        .map(|t| [0, 1].map(|f| schedule.stance[t][f] && heights[t][f] <= params.h_contact))
        .collect();
    let penetration: Vec<[bool; 2]> =
        (0..t_len).map(|t| [0, 1].map(|f| heights[t][f] < 0.0)).collect();
    let floating = (0..t_len)
        .map(|t| {
            heights[t][0] > params.h_float
                && heights[t][1] > params.h_float
                && !schedule.airborne[t]
                && !contact[t][0]
                && !contact[t][1]
        })
        .collect();
    Some(ContactTrack { contact, floating, penetration })
}

pub fn contact_stats(track: &ContactTrack) -> ContactStats {
    let t_len = track.len().max(1);
    let count = |pred: &dyn Fn(usize) -> bool| -> f64 {
        (0..track.len()).filter(|&t| pred(t)).count() as f64 / t_len as f64
    };
    ContactStats {
        contact_ratio: count(&|t| track.contact[t][0] || track.contact[t][1]),
        float_ratio: count(&|t| track.floating[t]),
        penetration_ratio: count(&|t| track.penetration[t][0] || track.penetration[t][1]),
    }
}
