//! Kinematic execution harness.
//!
//! A first-order lag tracker follows a reference clip joint by joint under
//! a per-step speed cap, with hard ground-contact resolution: executed feet
//! never go below the ground plane, and a foot the reference holds in
//! contact is pinned to the spot where the executed foot first touched
//! down.  The horizontal correction the pin applies to the foot is pushed
//! into the root, so a reference whose feet slide while "in contact" drags
//! the executed root away from the reference root; enough sliding trips the
//! drift cutoff and the rollout fails.  This makes implausible references
//! measurably harder to execute, which is the property the closed loop is
//! built on.
//!
//! The contact schedule comes from the reference's declared stance tags
//! when it carries them, otherwise from detection.  Detection gates contact
//! on foot speed, so past a certain sliding rate it stops seeing contact at
//! all and would release the pin exactly when the reference gets worse;
//! the declared schedule keeps difficulty monotone in the corruption
//! magnitude.

use serde::{Deserialize, Serialize};

use crate::contact::{declared_track, detect_contacts, ContactParams};
use crate::motion::{compute_clip_error, MotionClip, MotionError};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackParams {
    /// Fraction of the remaining error closed per frame, in (0, 1].
    pub gain: f64,
    /// Per-joint speed cap, m/s.
    pub v_max: f64,
    /// Root horizontal deviation that aborts the rollout, meters.
    pub fail_root_drift: f64,
    /// Completion alone is not success; the executed motion must also stay
    /// within this MPJPE of the reference, meters.
    pub succ_mpjpe: f64,
}

impl Default for TrackParams {
    fn default() -> Self {
        TrackParams { gain: 0.8, v_max: 5.0, fail_root_drift: 1.0, succ_mpjpe: 0.5 }
    }
}

impl TrackParams {
    pub fn validate(&self) -> Result<(), MotionError> {
        if !(self.gain > 0.0 && self.gain <= 1.0) {
            return Err(MotionError::validation("gain", "must be in (0, 1]"));
        }
        if !(self.v_max > 0.0) {
            return Err(MotionError::validation("v_max", "must be > 0"));
        }
        if !(self.fail_root_drift > 0.0) || !(self.succ_mpjpe > 0.0) {
            return Err(MotionError::validation(
                "fail_root_drift/succ_mpjpe",
                "thresholds must be > 0",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrackResult {
    pub success: bool,
    pub e_mpjpe: f64,
    pub e_mpkpe: f64,
    /// Frame at which the drift cutoff fired; `None` when the rollout ran
    /// to completion.
    pub terminated_at: Option<usize>,
    pub executed: MotionClip,
}

/// Rolls the tracker over one reference clip.
pub fn execute(
    reference: &MotionClip,
    params: &TrackParams,
    contact: &ContactParams,
) -> Result<TrackResult, MotionError> {
    params.validate()?;
    if reference.is_empty() {
        return Err(MotionError::validation("reference", "clip has no frames"));
    }
    let schedule = declared_track(reference, contact)
        .unwrap_or_else(|| detect_contacts(reference, contact));
    let z_g = reference.ground_height;
    let root = reference.skeleton.root();
    let feet = reference.skeleton.foot_joints;
    let max_step = params.v_max / reference.fps;

    // The lag tracker runs free of the contact constraints; pinning, ground
    // clamping, and the root shunt act on the emitted frame only.  Pinning
    // the tracker state itself would let it be dragged along by the pin and
    // hide arbitrarily fast reference sliding behind a one-step gap.
    let mut state: Vec<[f64; 3]> = reference.frames[0].clone();
    let mut executed: Vec<Vec<[f64; 3]>> = Vec::with_capacity(reference.len());
    let mut pins: [Option<[f64; 2]>; 2] = [None, None];
    let mut terminated_at = None;
    for t in 0..reference.len() {
        if t > 0 {
            for (p, r) in state.iter_mut().zip(reference.frames[t].iter()) {
                let mut step = [
                    params.gain * (r[0] - p[0]),
                    params.gain * (r[1] - p[1]),
                    params.gain * (r[2] - p[2]),
                ];
                let len = (step[0] * step[0] + step[1] * step[1] + step[2] * step[2]).sqrt();
                if len > max_step {
                    let scale = max_step / len;
                    step = [step[0] * scale, step[1] * scale, step[2] * scale];
                }
                *p = [p[0] + step[0], p[1] + step[1], p[2] + step[2]];
            }
        }
        let mut frame = state.clone();
        let mut root_shift = [0.0, 0.0];
        for f in 0..2 {
            let j = feet[f];
            if schedule.contact[t][f] {
                let pin = *pins[f].get_or_insert([frame[j][0], frame[j][1]]);
                root_shift[0] += frame[j][0] - pin[0];
                root_shift[1] += frame[j][1] - pin[1];
                frame[j][0] = pin[0];
                frame[j][1] = pin[1];
            } else {
                pins[f] = None;
            }
            if frame[j][2] < z_g {
                frame[j][2] = z_g;
            }
        }
        frame[root][0] += root_shift[0];
        frame[root][1] += root_shift[1];
        let drift = ((frame[root][0] - reference.frames[t][root][0]).powi(2)
            + (frame[root][1] - reference.frames[t][root][1]).powi(2))
        .sqrt();
        executed.push(frame);
        if drift > params.fail_root_drift {
            terminated_at = Some(t);
            break;
        }
    }

    let mut reference_prefix = reference.clone();
    reference_prefix.frames.truncate(executed.len());
    let mut executed_clip = reference.clone();
    executed_clip.frames = executed;
    let err = compute_clip_error(&reference_prefix, &executed_clip)?;
    let success = terminated_at.is_none() && err.mpjpe < params.succ_mpjpe;
    Ok(TrackResult {
        success,
        e_mpjpe: err.mpjpe,
        e_mpkpe: err.mpkpe,
        terminated_at,
        executed: executed_clip,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BatchTrackStats {
    pub success_rate: f64,
    pub mean_e_mpjpe: f64,
    pub mean_e_mpkpe: f64,
}

/// Aggregates [`execute`] over a corpus; failed rollouts count toward the
/// means with errors taken up to their termination frame.
pub fn batch_execute(
    corpus: &[MotionClip],
    params: &TrackParams,
    contact: &ContactParams,
) -> Result<BatchTrackStats, MotionError> {
    if corpus.is_empty() {
        return Err(MotionError::validation("corpus", "must be nonempty"));
    }
    let mut successes = 0usize;
    let mut sum_mpjpe = 0.0;
    let mut sum_mpkpe = 0.0;
    for clip in corpus {
        let result = execute(clip, params, contact)?;
        successes += result.success as usize;
        sum_mpjpe += result.e_mpjpe;
        sum_mpkpe += result.e_mpkpe;
    }
    let n = corpus.len() as f64;
    Ok(BatchTrackStats {
        success_rate: successes as f64 / n,
        mean_e_mpjpe: sum_mpjpe / n,
        mean_e_mpkpe: sum_mpkpe / n,
    })
}
