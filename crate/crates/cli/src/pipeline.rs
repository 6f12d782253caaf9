//! The closed loop: sample, refine, gate, fine-tune, evaluate.
//!
//! Determinism contract: every random draw is keyed by the config seed, a
//! stage tag and the clip index (per-round loop samples also carry the
//! round), and every floating point reduction runs sequentially in
//! clip-index order.  Worker count therefore cannot perturb any output
//! byte.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use forge_core::motion::{save_corpus, CorpusEntry, Split};
use forge_core::plausibility::ClipMetrics;
use forge_core::qc::RejectionRecord;
use forge_core::seeding::{derive_seed, Stage};
use forge_core::synth::{corrupt_clip, generate_clip, CorruptionKind, CorruptionSpec, GaitSpec};
use forge_core::track::BatchTrackStats;
use forge_core::{
    batch_execute, clip_metrics, detect_contacts, gate_clip, refine_clip_with, MotionClip,
    MotionError,
};
use forge_gen::{
    diversity, encode, fid, fit_latent_space, label_centroids, r_precision, save_model,
    DiffusionModel, GenError, LatentCode, LatentSpace,
};

use crate::config::{CorpusSource, PipelineConfig, SyntheticCorpus};
use crate::report::{self, RoundDetail, RoundReport};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("format error in {path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid input: {0}")]
    Invalid(String),
}

impl PipelineError {
    /// CLI exit code: 3 for I/O failures, 2 for everything the user can
    /// fix in their inputs.
    pub fn exit_code(&self) -> u8 {
        match self {
            PipelineError::Io { .. }
            | PipelineError::Motion(MotionError::Io { .. })
            | PipelineError::Gen(GenError::Io { .. }) => 3,
            _ => 2,
        }
    }
}

fn io_err(path: &Path, source: io::Error) -> PipelineError {
    PipelineError::Io { path: path.to_path_buf(), source }
}

/// Builds the procedural training corpus.  Per category, the last
/// `test_fraction` of clips form the held-out split and stay clean; the
/// leading training clips are corrupted in contiguous index ranges
/// (skate, then float, then penetrate, then noise).
pub fn build_synthetic_corpus(
    spec: &SyntheticCorpus,
    seed: u64,
) -> Result<Vec<CorpusEntry>, PipelineError> {
    spec.validate()?;
    let count = spec.clips_per_category;
    let n_test = ((spec.test_fraction * count as f64).round() as usize).min(count - 1);
    let n_train = count - n_test;
    let kinds = [
        (CorruptionKind::Skate, spec.skate_fraction, spec.skate_magnitude),
        (CorruptionKind::Float, spec.float_fraction, spec.float_magnitude),
        (CorruptionKind::Penetrate, spec.penetrate_fraction, spec.penetrate_magnitude),
        (CorruptionKind::Noise, spec.noise_fraction, spec.noise_magnitude),
    ];
    let mut entries = Vec::with_capacity(spec.categories.len() * count);
    for (c, &category) in spec.categories.iter().enumerate() {
        let mut corruption_ranges = Vec::new();
        let mut start = 0usize;
        for (kind, fraction, magnitude) in kinds {
            let k = (fraction * n_train as f64).round() as usize;
            corruption_ranges.push((start..start + k, kind, magnitude));
            start += k;
        }
        if start > n_train {
            return Err(PipelineError::Invalid(format!(
                "corruption fractions cover {start} of {n_train} training clips for {category}"
            )));
        }
        for i in 0..count {
            let clip_seed = derive_seed(seed, &[Stage::Corpus as u64, c as u64, i as u64]);
            let mut gait = GaitSpec::new(category, clip_seed);
            gait.duration_s = spec.duration_s;
            gait.fps = spec.fps;
            let mut clip = generate_clip(&gait)?;
            if i < n_train {
                for (range, kind, magnitude) in &corruption_ranges {
                    if range.contains(&i) {
                        let cspec = CorruptionSpec {
                            kind: *kind,
                            magnitude: *magnitude,
                            seed: derive_seed(clip_seed, &[*kind as u64]),
                        };
                        clip = corrupt_clip(&clip, &cspec)?;
                    }
                }
            }
            entries.push(CorpusEntry {
                id: format!("{category}_{i:04}"),
                split: if i < n_train { Split::Train } else { Split::Test },
                clip,
            });
        }
    }
    Ok(entries)
}

pub fn obtain_corpus(config: &PipelineConfig) -> Result<Vec<CorpusEntry>, PipelineError> {
    match &config.corpus {
        CorpusSource::Synthetic(spec) => build_synthetic_corpus(spec, config.seed),
        CorpusSource::Manifest { path } => Ok(forge_core::motion::load_corpus(path)?),
    }
}

/// Held-out data the per-round evaluation compares against.
pub struct EvalReference {
    pub test_codes: Vec<LatentCode>,
    pub centroids: BTreeMap<String, Vec<f64>>,
    pub div_ref: f64,
}

/// Round-index tag for the reference diversity draw, outside 0..=rounds.
const REF_DIVERSITY_TAG: u64 = u64::MAX;

/// Fits the latent space and trains the initial model on the given clips.
/// The space is fit on the clips together with their refined versions, so
/// the span can express contact cleanup; without that, accepted clips
/// would project back onto their own artifacts and fine-tuning could
/// never move the sampler.  The model itself trains on the raw clips'
/// codes only.
pub fn pretrain(
    config: &PipelineConfig,
    train: &[MotionClip],
) -> Result<(LatentSpace, DiffusionModel), PipelineError> {
    let refined = train
        .par_iter()
        .map(|c| refine_clip_with(c, &config.contact, &config.refine).map(|r| r.refined))
        .collect::<Result<Vec<_>, _>>()?;
    let mut fit_set = train.to_vec();
    fit_set.extend(refined);
    let space = fit_latent_space(&fit_set, &config.gen.latent)?;
    let codes = train
        .par_iter()
        .map(|c| encode(&space, c))
        .collect::<Result<Vec<_>, _>>()?;
    let base_seed = derive_seed(config.seed, &[Stage::Train as u64]);
    let model = DiffusionModel::new(&config.gen.diffusion, base_seed)?.train_denoiser(&codes)?;
    Ok((space, model))
}

/// Pretrains on the training split and encodes the held-out split for
/// evaluation.
pub fn prepare(
    config: &PipelineConfig,
    corpus: &[CorpusEntry],
) -> Result<(LatentSpace, DiffusionModel, EvalReference), PipelineError> {
    let train: Vec<MotionClip> = corpus
        .iter()
        .filter(|e| e.split == Split::Train)
        .map(|e| e.clip.clone())
        .collect();
    let test: Vec<&MotionClip> =
        corpus.iter().filter(|e| e.split == Split::Test).map(|e| &e.clip).collect();
    if test.len() < 2 {
        return Err(PipelineError::Invalid(format!(
            "need at least 2 held-out clips for evaluation, got {}",
            test.len()
        )));
    }
    let (space, model) = pretrain(config, &train)?;
    let test_codes = test
        .par_iter()
        .map(|c| encode(&space, c))
        .collect::<Result<Vec<_>, _>>()?;
    let centroids = label_centroids(&test_codes)?;
    for label in &model.labels {
        if !centroids.contains_key(label) {
            return Err(PipelineError::Invalid(format!(
                "held-out split has no clips labeled `{label}`"
            )));
        }
    }
    let div_ref = diversity(
        &test_codes,
        None,
        derive_seed(config.seed, &[Stage::Diversity as u64, REF_DIVERSITY_TAG]),
    )?;
    Ok((space, model, EvalReference { test_codes, centroids, div_ref }))
}

/// Everything evaluate_model measures about one model state.
pub struct Evaluation {
    pub top1: f64,
    pub top2: f64,
    pub top3: f64,
    pub fid: f64,
    pub div: f64,
    pub div_gap: f64,
    pub metrics: ClipMetrics,
    pub refined_track: BatchTrackStats,
    pub raw_track: BatchTrackStats,
}

fn mean_metrics(per_clip: &[ClipMetrics]) -> ClipMetrics {
    let n = per_clip.len() as f64;
    let mut pen = 0.0;
    let mut flo = 0.0;
    let mut sk = 0.0;
    for m in per_clip {
        pen += m.penetrate_cm;
        flo += m.float_cm;
        sk += m.skate_cm;
    }
    ClipMetrics { penetrate_cm: pen / n, float_cm: flo / n, skate_cm: sk / n }
}

/// Scores a model state on fresh samples: distribution statistics against
/// the held-out codes, ground-interaction metrics on the raw samples, and
/// tracking on both the raw and the refined samples.  Evaluation draws are
/// keyed by the sample index alone, not the round, so per-round numbers
/// are paired: they differ only through the model under evaluation.
pub fn evaluate_model(
    model: &DiffusionModel,
    space: &LatentSpace,
    config: &PipelineConfig,
    reference: &EvalReference,
) -> Result<Evaluation, PipelineError> {
    if !model.is_trained() {
        return Err(PipelineError::Invalid("cannot evaluate an untrained model".into()));
    }
    let n = config.samples_per_round;
    let labels = &model.labels;
    let codes = (0..n)
        .into_par_iter()
        .map(|i| {
            let label = &labels[i % labels.len()];
            let seed = derive_seed(config.seed, &[Stage::EvalSample as u64, i as u64]);
            model.sample_code(label, seed)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let clips = codes
        .par_iter()
        .map(|c| forge_gen::decode(space, c))
        .collect::<Result<Vec<_>, _>>()?;

    let per_clip: Vec<ClipMetrics> = clips
        .par_iter()
        .map(|c| clip_metrics(c, &detect_contacts(c, &config.contact)))
        .collect();
    let metrics = mean_metrics(&per_clip);

    let refined = clips
        .par_iter()
        .map(|c| refine_clip_with(c, &config.contact, &config.refine).map(|r| r.refined))
        .collect::<Result<Vec<_>, _>>()?;
    let refined_track = batch_execute(&refined, &config.track, &config.contact)?;
    let raw_track = batch_execute(&clips, &config.track, &config.contact)?;

    let fid = fid(&codes, &reference.test_codes)?;
    let div =
        diversity(&codes, None, derive_seed(config.seed, &[Stage::Diversity as u64]))?;
    let div_gap = (div - reference.div_ref).abs();
    let (top1, top2, top3) = r_precision(
        &codes,
        &reference.centroids,
        None,
        derive_seed(config.seed, &[Stage::RPrecision as u64]),
    )?;

    Ok(Evaluation {
        top1,
        top2,
        top3,
        fid,
        div,
        div_gap,
        metrics,
        refined_track,
        raw_track,
    })
}

fn detail_from(
    round: usize,
    eval: &Evaluation,
    accepted_fraction: Option<f64>,
    finetuned: bool,
    n_sampled: usize,
    n_accepted: usize,
) -> RoundDetail {
    RoundDetail {
        report: RoundReport {
            round,
            top1: eval.top1,
            top2: eval.top2,
            top3: eval.top3,
            fid: eval.fid,
            div: eval.div,
            penetrate: eval.metrics.penetrate_cm,
            float: eval.metrics.float_cm,
            skate: eval.metrics.skate_cm,
            succ: eval.refined_track.success_rate,
            e_mpjpe: eval.refined_track.mean_e_mpjpe,
            e_mpkpe: eval.refined_track.mean_e_mpkpe,
            accepted_fraction,
        },
        div_gap: eval.div_gap,
        raw_succ: eval.raw_track.success_rate,
        raw_e_mpjpe: eval.raw_track.mean_e_mpjpe,
        raw_e_mpkpe: eval.raw_track.mean_e_mpkpe,
        finetuned,
        n_sampled,
        n_accepted,
        n_rejected: n_sampled - n_accepted,
    }
}

pub struct RoundOutcome {
    pub model: DiffusionModel,
    pub detail: RoundDetail,
    pub accepted: Vec<CorpusEntry>,
    pub rejections: Vec<RejectionRecord>,
}

/// One loop iteration: sample, refine, gate, fine-tune, then evaluate the
/// post-round model.  An empty accepted set skips fine-tuning; the report
/// flags it through accepted_fraction = 0.
pub fn run_round(
    model: &DiffusionModel,
    space: &LatentSpace,
    config: &PipelineConfig,
    round: usize,
    reference: &EvalReference,
) -> Result<RoundOutcome, PipelineError> {
    if !model.is_trained() {
        return Err(PipelineError::Invalid("cannot run a round on an untrained model".into()));
    }
    let n = config.samples_per_round;
    let labels = model.labels.clone();
    let raws = (0..n)
        .into_par_iter()
        .map(|i| {
            let label = &labels[i % labels.len()];
            let seed = derive_seed(config.seed, &[Stage::Sample as u64, round as u64, i as u64]);
            model
                .sample(space, label, seed)
                .map(|clip| (format!("round{round:02}_sample{i:05}"), clip))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let refined = raws
        .par_iter()
        .map(|(_, raw)| refine_clip_with(raw, &config.contact, &config.refine).map(|r| r.refined))
        .collect::<Result<Vec<_>, _>>()?;

    let mut accepted = Vec::new();
    let mut rejections = Vec::new();
    for ((id, raw), refined) in raws.iter().zip(&refined) {
        let verdict = gate_clip(raw, refined, &config.qc)?;
        if verdict.accepted {
            accepted.push(CorpusEntry {
                id: id.clone(),
                split: Split::Train,
                clip: refined.clone(),
            });
        } else {
            rejections.push(RejectionRecord {
                id: id.clone(),
                reason: verdict.reason,
                mpjpe: verdict.mpjpe,
            });
        }
    }

    let (next, finetuned) = if accepted.is_empty() {
        (model.clone(), false)
    } else {
        let clips: Vec<MotionClip> = accepted.iter().map(|e| e.clip.clone()).collect();
        (model.finetune(space, &clips, config.gen.mix_ratio)?, true)
    };

    let eval = evaluate_model(&next, space, config, reference)?;
    let detail = detail_from(
        round,
        &eval,
        Some(accepted.len() as f64 / n as f64),
        finetuned,
        n,
        accepted.len(),
    );
    Ok(RoundOutcome { model: next, detail, accepted, rejections })
}

pub struct LoopArtifacts {
    pub reports: Vec<RoundReport>,
    pub details: Vec<RoundDetail>,
}

fn write_rejections(path: &Path, rejections: &[RejectionRecord]) -> Result<(), PipelineError> {
    let mut text = String::from("clip_id,reason,mpjpe\n");
    for r in rejections {
        text.push_str(&format!("{},{},{}\n", r.id, r.reason.as_str(), report::fmt_f64(r.mpjpe)));
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Full pipeline: corpus, initial training, round-0 baseline evaluation,
/// then `rounds` loop iterations.  Writes round JSONs, accepted corpora,
/// rejection logs, model bundles, the consolidated CSV and plots.
pub fn run_loop(config: &PipelineConfig) -> Result<LoopArtifacts, PipelineError> {
    config.validate()?;
    let out = &config.out_dir;
    let rounds_dir = out.join("rounds");
    fs::create_dir_all(&rounds_dir).map_err(|e| io_err(&rounds_dir, e))?;
    let config_echo = out.join("config.json");
    let text = serde_json::to_string_pretty(config)
        .map_err(|source| PipelineError::Format { path: config_echo.clone(), source })?;
    fs::write(&config_echo, text).map_err(|e| io_err(&config_echo, e))?;

    let corpus = obtain_corpus(config)?;
    let (space, model, reference) = prepare(config, &corpus)?;
    save_model(&out.join("model_initial.json"), &space, &model)?;

    let mut details = Vec::with_capacity(config.rounds + 1);
    let eval0 = evaluate_model(&model, &space, config, &reference)?;
    let detail0 = detail_from(0, &eval0, None, false, 0, 0);
    report::write_detail(&rounds_dir.join("round_00.json"), &detail0)?;
    details.push(detail0);

    let mut current = model;
    for round in 1..=config.rounds {
        let outcome = run_round(&current, &space, config, round, &reference)?;
        current = outcome.model;
        let accepted_dir = out.join(format!("accepted/round_{round:02}"));
        fs::create_dir_all(&accepted_dir).map_err(|e| io_err(&accepted_dir, e))?;
        save_corpus(&accepted_dir, &outcome.accepted)?;
        let rejections_dir = out.join("rejections");
        fs::create_dir_all(&rejections_dir).map_err(|e| io_err(&rejections_dir, e))?;
        write_rejections(
            &rejections_dir.join(format!("round_{round:02}.csv")),
            &outcome.rejections,
        )?;
        report::write_detail(&rounds_dir.join(format!("round_{round:02}.json")), &outcome.detail)?;
        details.push(outcome.detail);
    }
    save_model(&out.join("model_final.json"), &space, &current)?;

    let reports: Vec<RoundReport> = details.iter().map(|d| d.report.clone()).collect();
    report::write_csv(&out.join("reports.csv"), &reports)?;
    report::write_plots(out, &reports)?;
    Ok(LoopArtifacts { reports, details })
}
