//! Contact-consistency scoring of motion clips.
//!
//! Three per-frame rewards, each gated by the indicator track and equal to
//! 1 exactly when its indicator is off:
//!
//! * skate: penalizes any displacement of a foot that stays in contact over
//!   a frame pair (full 3-D displacement);
//! * float: penalizes the lower foot's clearance on floating frames;
//! * penetration: penalizes depth below the ground plane.
//!
//! Per-foot rewards are averaged over both feet, so a frame score lies in
//! (0, 3] and a clip objective in (0, 3T], hitting 3T exactly on physically
//! clean clips.  Alongside the rewards, [`clip_metrics`] reports the
//! centimeter-scale Penetrate / Float / Skate summary used to compare
//! corpora; note the skate *metric* measures horizontal drift only.

use serde::Serialize;

use crate::contact::ContactTrack;
use crate::motion::{MotionClip, MotionError};

fn gated_exp(active: bool, sq_norm: f64) -> f64 {
    if active {
        (-sq_norm).exp()
    } else {
        1.0
    }
}

/// Mean over both feet of `exp(-|p_t - p_{t-1}|^2)`, counting only feet in
/// contact at both ends of the pair.  Defined for `1 <= t < T`.
pub fn skate_reward(clip: &MotionClip, track: &ContactTrack, t: usize) -> f64 {
    assert!(t >= 1 && t < clip.len(), "skate_reward needs 1 <= t < {}, got {t}", clip.len());
    let mut sum = 0.0;
    for f in 0..2 {
        let joint = clip.skeleton.foot_joints[f];
        let a = clip.frames[t - 1][joint];
        let b = clip.frames[t][joint];
        let d2 = (b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2) + (b[2] - a[2]).powi(2);
        sum += gated_exp(track.contact[t][f] && track.contact[t - 1][f], d2);
    }
    sum / 2.0
}

/// `exp(-clearance^2)` of the lower foot on floating frames.
pub fn float_reward(clip: &MotionClip, track: &ContactTrack, t: usize) -> f64 {
    let low = clip.foot_height(t, 0).min(clip.foot_height(t, 1));
    gated_exp(track.floating[t], low * low)
}

/// Mean over both feet of `exp(-depth^2)` below the ground plane.
pub fn penetration_reward(clip: &MotionClip, track: &ContactTrack, t: usize) -> f64 {
    let mut sum = 0.0;
    for f in 0..2 {
        let depth = -clip.foot_height(t, f);
        sum += gated_exp(track.penetration[t][f], depth * depth);
    }
    sum / 2.0
}

/// Skate + float + penetration for one frame; the skate term is 1 at t = 0
/// where no previous frame exists.
pub fn frame_score(clip: &MotionClip, track: &ContactTrack, t: usize) -> f64 {
    let sk = if t == 0 { 1.0 } else { skate_reward(clip, track, t) };
    sk + float_reward(clip, track, t) + penetration_reward(clip, track, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClipMetrics {
    /// Mean over frames of the deeper foot's penetration depth, cm.
    pub penetrate_cm: f64,
    /// Mean clearance of the lower foot over floating frames, cm (0 when
    /// nothing floats).
    pub float_cm: f64,
    /// Mean horizontal displacement over in-contact frame pairs, cm (0 when
    /// no such pair exists).
    pub skate_cm: f64,
}

/// Indicator-weighted summary of a clip's ground interaction.
pub fn clip_metrics(clip: &MotionClip, track: &ContactTrack) -> ClipMetrics {
    let t_len = clip.len();
    let mut pen_sum = 0.0;
    for t in 0..t_len {
        let d0 = (-clip.foot_height(t, 0)).max(0.0);
        let d1 = (-clip.foot_height(t, 1)).max(0.0);
        pen_sum += d0.max(d1);
    }
    let mut float_sum = 0.0;
    let mut float_frames = 0usize;
    for t in 0..t_len {
        if track.floating[t] {
            float_sum += clip.foot_height(t, 0).min(clip.foot_height(t, 1));
            float_frames += 1;
        }
    }
    let mut skate_sum = 0.0;
    let mut skate_pairs = 0usize;
    for f in 0..2 {
        let joint = clip.skeleton.foot_joints[f];
        for t in 1..t_len {
            if track.contact[t][f] && track.contact[t - 1][f] {
                let a = clip.frames[t - 1][joint];
                let b = clip.frames[t][joint];
                skate_sum += ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
                skate_pairs += 1;
            }
        }
    }
    ClipMetrics {
        penetrate_cm: 100.0 * pen_sum / t_len as f64,
        float_cm: if float_frames == 0 { 0.0 } else { 100.0 * float_sum / float_frames as f64 },
        skate_cm: if skate_pairs == 0 { 0.0 } else { 100.0 * skate_sum / skate_pairs as f64 },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlausibilityReport {
    /// Per-frame rewards; `r_skate[0]` is 1 by definition.
    pub r_skate: Vec<f64>,
    pub r_float: Vec<f64>,
    pub r_penetration: Vec<f64>,
    /// `frame_scores[t] = r_skate[t] + r_float[t] + r_penetration[t]`.
    pub frame_scores: Vec<f64>,
    /// Sum of frame scores; at most `3 T`, attained exactly on clean clips.
    pub objective: f64,
    pub metrics: ClipMetrics,
}

/// Scores a whole clip against an indicator track of the same length.
pub fn sequence_objective(
    clip: &MotionClip,
    track: &ContactTrack,
) -> Result<PlausibilityReport, MotionError> {
    if track.len() != clip.len() {
        return Err(MotionError::ShapeMismatch(format!(
            "track has {} frames, clip has {}",
            track.len(),
            clip.len()
        )));
    }
    if clip.is_empty() {
        return Err(MotionError::ShapeMismatch("clip has no frames".into()));
    }
    let t_len = clip.len();
    let mut r_skate = Vec::with_capacity(t_len);
    let mut r_float = Vec::with_capacity(t_len);
    let mut r_penetration = Vec::with_capacity(t_len);
    let mut frame_scores = Vec::with_capacity(t_len);
    let mut objective = 0.0;
    for t in 0..t_len {
        let sk = if t == 0 { 1.0 } else { skate_reward(clip, track, t) };
        let fl = float_reward(clip, track, t);
        let pen = penetration_reward(clip, track, t);
        let score = sk + fl + pen;
        r_skate.push(sk);
        r_float.push(fl);
        r_penetration.push(pen);
        frame_scores.push(score);
        objective += score;
    }
    Ok(PlausibilityReport {
        r_skate,
        r_float,
        r_penetration,
        frame_scores,
        objective,
        metrics: clip_metrics(clip, track),
    })
}
