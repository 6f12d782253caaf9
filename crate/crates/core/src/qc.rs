//! Acceptance gating of refined clips.
//!
//! A refined clip enters the fine-tuning corpus only when its whole-body
//! deviation from the unrefined original stays under a threshold; a large
//! deviation means the cleanup had to mangle the motion to make it
//! plausible, so the clip is discarded instead.  Clips tagged with an
//! excluded category (interactions with objects, motions that are not
//! ground-supported) are rejected outright since the flat-ground contact
//! model cannot judge them; the tag verdict takes precedence over the
//! threshold verdict.

use serde::{Deserialize, Serialize};

use crate::motion::{compute_clip_error, CorpusEntry, MotionClip, MotionError, Split};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct QcParams {
    /// Acceptance threshold on MPJPE(original, refined), meters, strict.
    pub eta: f64,
    pub excluded_tags: Vec<String>,
}

impl Default for QcParams {
    fn default() -> Self {
        QcParams {
            eta: 0.5,
            excluded_tags: vec!["object-interaction".into(), "non-grounded".into()],
        }
    }
}

impl QcParams {
    pub fn validate(&self) -> Result<(), MotionError> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(MotionError::validation("eta", "must be finite and > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QcReason {
    Ok,
    OverThreshold,
    ExcludedTag,
}

impl QcReason {
    pub fn as_str(self) -> &'static str {
        match self {
            QcReason::Ok => "ok",
            QcReason::OverThreshold => "over_threshold",
            QcReason::ExcludedTag => "excluded_tag",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QcVerdict {
    pub accepted: bool,
    pub mpjpe: f64,
    pub reason: QcReason,
}

fn has_excluded_tag(clip: &MotionClip, params: &QcParams) -> bool {
    clip.tags.iter().any(|t| params.excluded_tags.iter().any(|x| x == t))
}

/// Accepts iff MPJPE(original, refined) is strictly below the threshold and
/// neither clip carries an excluded tag.
pub fn gate_clip(
    original: &MotionClip,
    refined: &MotionClip,
    params: &QcParams,
) -> Result<QcVerdict, MotionError> {
    params.validate()?;
    let mpjpe = compute_clip_error(original, refined)?.mpjpe;
    let reason = if has_excluded_tag(original, params) || has_excluded_tag(refined, params) {
        QcReason::ExcludedTag
    } else if mpjpe < params.eta {
        QcReason::Ok
    } else {
        QcReason::OverThreshold
    };
    Ok(QcVerdict { accepted: reason == QcReason::Ok, mpjpe, reason })
}

#[derive(Debug, Clone)]
pub struct GatePair {
    pub id: String,
    pub original: MotionClip,
    pub refined: MotionClip,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RejectionRecord {
    pub id: String,
    pub reason: QcReason,
    pub mpjpe: f64,
}

#[derive(Debug, Clone, Default)]
pub struct FinetuneSet {
    /// Refined clips that passed the gate, keyed by their original ids.
    pub accepted: Vec<CorpusEntry>,
    pub rejections: Vec<RejectionRecord>,
}

/// Partitions original/refined pairs into the fine-tuning corpus and a
/// rejection log; every input id lands in exactly one of the two.
pub fn build_finetune_set(pairs: &[GatePair], params: &QcParams) -> Result<FinetuneSet, MotionError> {
    let mut out = FinetuneSet::default();
    for pair in pairs {
        let verdict = gate_clip(&pair.original, &pair.refined, params)?;
        if verdict.accepted {
            out.accepted.push(CorpusEntry {
                id: pair.id.clone(),
                split: Split::Train,
                clip: pair.refined.clone(),
            });
        } else {
            out.rejections.push(RejectionRecord {
                id: pair.id.clone(),
                reason: verdict.reason,
                mpjpe: verdict.mpjpe,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::refine::{refine_clip, RefineParams};
    use crate::synth::{
        corrupt_clip, generate_clip, CorruptionKind, CorruptionSpec, GaitCategory, GaitSpec,
    };

    fn idle(seed: u64) -> MotionClip {
        generate_clip(&GaitSpec::new(GaitCategory::Idle, seed)).unwrap()
    }

    fn lifted(clip: &MotionClip, dz: f64) -> MotionClip {
        let mut out = clip.clone();
        for frame in &mut out.frames {
            for p in frame.iter_mut() {
                p[2] += dz;
            }
        }
        out
    }

    #[test]
    fn identity_pairs_pass_at_any_threshold() {
        let clip = idle(1);
        for eta in [1e-9, 1e-3, 0.1, 0.5, 10.0] {
            let params = QcParams { eta, ..QcParams::default() };
            let verdict = gate_clip(&clip, &clip, &params).unwrap();
            assert!(verdict.accepted, "eta={eta}");
            assert_eq!(verdict.mpjpe, 0.0);
            assert_eq!(verdict.reason, QcReason::Ok);
        }
    }

    #[test]
    fn threshold_is_strict() {
        let clip = idle(2);
        let shifted = lifted(&clip, 0.05);
        let mpjpe = compute_clip_error(&clip, &shifted).unwrap().mpjpe;
        let at = QcParams { eta: mpjpe, ..QcParams::default() };
        assert_eq!(gate_clip(&clip, &shifted, &at).unwrap().reason, QcReason::OverThreshold);
        let above = QcParams { eta: mpjpe * (1.0 + 1e-12) + f64::MIN_POSITIVE, ..QcParams::default() };
        assert!(gate_clip(&clip, &shifted, &above).unwrap().accepted);
    }

    #[test]
    fn excluded_tag_wins_regardless_of_error() {
        let mut clip = idle(3);
        clip.tags.push("object-interaction".into());
        let verdict = gate_clip(&clip, &clip, &QcParams::default()).unwrap();
        assert!(!verdict.accepted);
        assert_eq!(verdict.reason, QcReason::ExcludedTag);
        assert_eq!(verdict.mpjpe, 0.0);
        // Also excluded when the error alone would already reject.
        let far = lifted(&clip, 5.0);
        let verdict = gate_clip(&clip, &far, &QcParams::default()).unwrap();
        assert_eq!(verdict.reason, QcReason::ExcludedTag);
    }

    #[test]
    fn noise_corrupted_then_refined_is_rejected() {
        let clip = generate_clip(&GaitSpec::new(GaitCategory::Walk, 4)).unwrap();
        let noisy = corrupt_clip(
            &clip,
            &CorruptionSpec { kind: CorruptionKind::Noise, magnitude: 1.0, seed: 0 },
        )
        .unwrap();
        let refined = refine_clip(&noisy, &RefineParams::default()).unwrap().refined;
        let verdict = gate_clip(&clip, &refined, &QcParams::default()).unwrap();
        assert!(!verdict.accepted, "mpjpe {}", verdict.mpjpe);
        assert_eq!(verdict.reason, QcReason::OverThreshold);
    }

    #[test]
    fn accepted_set_grows_with_the_threshold() {
        let clip = idle(5);
        let pairs: Vec<GatePair> = (0..12)
            .map(|i| GatePair {
                id: format!("clip_{i:02}"),
                original: clip.clone(),
                refined: lifted(&clip, i as f64 * 0.1),
            })
            .collect();
        let mut last = 0;
        for step in 1..=10 {
            let params = QcParams { eta: step as f64 * 0.13, ..QcParams::default() };
            let set = build_finetune_set(&pairs, &params).unwrap();
            assert!(set.accepted.len() >= last, "eta sweep shrank the accepted set");
            assert_eq!(set.accepted.len() + set.rejections.len(), pairs.len());
            last = set.accepted.len();
        }
    }

    #[test]
    fn partition_matches_a_direct_filter() {
        let clip = idle(6);
        let mut pairs = Vec::new();
        for i in 0..10 {
            let mut original = clip.clone();
            if i % 3 == 0 {
                original.tags.push("non-grounded".into());
            }
            let refined = lifted(&original, if i % 2 == 0 { 0.01 } else { 0.9 });
            pairs.push(GatePair { id: format!("c{i}"), original, refined });
        }
        let params = QcParams::default();
        let set = build_finetune_set(&pairs, &params).unwrap();
        let expect_accept: Vec<&GatePair> = pairs
            .iter()
            .filter(|p| {
                let err = compute_clip_error(&p.original, &p.refined).unwrap().mpjpe;
                !p.original.tags.iter().any(|t| params.excluded_tags.contains(t)) && err < params.eta
            })
            .collect();
        assert_eq!(set.accepted.len(), expect_accept.len());
        for (got, want) in set.accepted.iter().zip(expect_accept) {
            assert_eq!(got.id, want.id);
        }
        // 4 of 10 carry the excluded tag (indices 0, 3, 6, 9).
        let excluded = set.rejections.iter().filter(|r| r.reason == QcReason::ExcludedTag).count();
        assert_eq!(excluded, 4);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let clip = idle(7);
        let mut short = clip.clone();
        short.frames.truncate(clip.len() - 1);
        assert!(gate_clip(&clip, &short, &QcParams::default()).is_err());
    }
}
