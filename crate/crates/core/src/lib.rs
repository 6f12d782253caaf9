//! Skeletal motion clips and the physics side of the pipeline.
//!
//! The crate covers everything that operates directly on joint trajectories:
//!
//! * [`motion`]: clip and skeleton types, JSON I/O, resampling, MPJPE.
//! * [`synth`]: a procedural gait generator plus controlled corruptions,
//!   used as ground truth for every downstream oracle.
//! * [`contact`]: per-frame foot contact / floating / penetration indicators.
//! * [`plausibility`]: exponential contact-consistency rewards and the
//!   per-clip Penetrate/Float/Skate metrics.
//! * [`refine`]: two-stage trajectory cleanup (contact projection followed
//!   by pinned gradient descent).
//! * [`qc`]: the accept/reject gate between raw and refined motions.
//! * [`track`]: a first-order kinematic tracking harness.
//!
//! Everything here is deterministic: random corpora are driven by explicit
//! seeds and no operation reads global state.

pub mod contact;
pub mod motion;
pub mod plausibility;
pub mod qc;
pub mod refine;
pub mod seeding;
pub mod synth;
pub mod track;

pub use contact::{detect_contacts, ContactParams, ContactTrack};
pub use motion::{load_clip, save_clip, MotionClip, MotionError, Skeleton};
pub use plausibility::{clip_metrics, sequence_objective, PlausibilityReport};
pub use qc::{gate_clip, QcParams, QcVerdict};
pub use refine::{refine_clip, refine_clip_with, RefineParams, RefineResult};
pub use synth::{corrupt_clip, generate_clip, CorruptionKind, CorruptionSpec, GaitCategory, GaitSpec};
pub use track::{batch_execute, execute, TrackParams, TrackResult};
