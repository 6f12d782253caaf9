//! Motion generation in a linear latent space.
//!
//! A corpus of fixed-length clips is compressed with a principal-subspace
//! autoencoder ([`latent`]), a label-conditioned denoising diffusion model
//! with closed-form affine denoisers is trained over the codes
//! ([`diffusion`]), and generation quality is scored with distribution
//! statistics over codes ([`stats`]).  Trained models round-trip through a
//! schema-versioned JSON bundle ([`bundle`]).

use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub mod bundle;
pub mod diffusion;
pub mod latent;
pub mod stats;

pub use bundle::{load_model, save_model, ModelBundle};
pub use diffusion::{DiffusionModel, DiffusionParams};
pub use latent::{decode, encode, fit_latent_space, LatentCode, LatentParams, LatentSpace};
pub use stats::{diversity, fid, label_centroids, r_precision, summarize, GaussianSummary};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error(transparent)]
    Motion(#[from] forge_core::MotionError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("model file {path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}
