//! Pipeline library behind the `forge` binary: configuration, the closed
//! generate/refine/gate/fine-tune loop, and report emission.

pub mod config;
pub mod pipeline;
pub mod report;

pub use config::{load_config, CorpusSource, GenSettings, PipelineConfig, SyntheticCorpus};
pub use pipeline::{
    build_synthetic_corpus, evaluate_model, obtain_corpus, prepare, pretrain, run_loop,
    run_round, EvalReference, Evaluation, LoopArtifacts, PipelineError, RoundOutcome,
};
pub use report::{RoundDetail, RoundReport};
