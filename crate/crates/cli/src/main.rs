//! `forge`: command line front end for the motion pipeline.
//!
//! Exit codes: 0 success, 2 validation or bad input, 3 I/O failure.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use forge_cli::config::{CorpusSource, PipelineConfig};
use forge_cli::pipeline::{self, PipelineError};
use forge_cli::report;
use forge_core::contact::declared_track;
use forge_core::motion::{load_corpus, save_corpus, CorpusEntry, Split};
use forge_core::seeding::{derive_seed, Stage};
use forge_core::{
    batch_execute, detect_contacts, execute, gate_clip, refine_clip_with, sequence_objective,
    MotionClip,
};
use forge_gen::{load_model, save_model};

#[derive(Parser)]
#[command(name = "forge", version, about = "Closed-loop motion generation pipeline")]
struct Cli {
    /// Pipeline config JSON; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for the parallel stages (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOverrides {
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured synthetic corpus.
    Synth {
        #[command(flatten)]
        common: CommonOverrides,
    },
    /// Score a corpus: objective and ground-interaction metrics per clip.
    Eval {
        /// Corpus directory.
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        common: CommonOverrides,
    },
    /// Refine every clip of a corpus; writes a parallel corpus and a
    /// per-clip JSON report.
    Refine {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        common: CommonOverrides,
    },
    /// Gate refined clips against their originals; writes the accepted
    /// corpus and a rejection CSV.
    Qc {
        /// Corpus of original clips.
        #[arg(long)]
        raw: PathBuf,
        /// Corpus of refined counterparts (matched by clip id).
        #[arg(long)]
        refined: PathBuf,
        #[command(flatten)]
        common: CommonOverrides,
    },
    /// Fit the latent space and train the diffusion model on a corpus.
    TrainGen {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        common: CommonOverrides,
    },
    /// Sample clips from a trained model bundle.
    Sample {
        #[arg(long)]
        model: PathBuf,
        /// Number of clips to draw.
        #[arg(long, default_value_t = 16)]
        count: usize,
        /// Restrict to one label (default: round-robin over all labels).
        #[arg(long)]
        label: Option<String>,
        #[command(flatten)]
        common: CommonOverrides,
    },
    /// Fine-tune a model bundle on an accepted corpus.
    Finetune {
        #[arg(long)]
        model: PathBuf,
        /// Corpus of accepted clips.
        #[arg(long)]
        accepted: PathBuf,
        #[command(flatten)]
        common: CommonOverrides,
    },
    /// Run the tracking harness over a corpus; writes a per-clip CSV.
    Track {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        common: CommonOverrides,
    },
    /// Run the full closed loop.
    Loop {
        /// Overrides the config round count.
        #[arg(long)]
        rounds: Option<usize>,
        #[command(flatten)]
        common: CommonOverrides,
    },
    /// Rebuild the consolidated CSV and plots from round JSON files.
    Report {
        #[command(flatten)]
        common: CommonOverrides,
    },
}

fn io_err(path: &Path, source: io::Error) -> PipelineError {
    PipelineError::Io { path: path.to_path_buf(), source }
}

fn load_or_default(path: &Option<PathBuf>) -> Result<PipelineConfig, PipelineError> {
    match path {
        Some(p) => forge_cli::load_config(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn apply_overrides(config: &mut PipelineConfig, common: &CommonOverrides) {
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.out_dir = out.clone();
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|source| PipelineError::Format { path: path.to_path_buf(), source })?;
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn cmd_synth(config: &PipelineConfig) -> Result<(), PipelineError> {
    let spec = match &config.corpus {
        CorpusSource::Synthetic(spec) => spec,
        CorpusSource::Manifest { .. } => {
            return Err(PipelineError::Invalid(
                "config.corpus points at a manifest; synth needs synthetic settings".into(),
            ))
        }
    };
    let entries = pipeline::build_synthetic_corpus(spec, config.seed)?;
    let dir = config.out_dir.join("corpus");
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    save_corpus(&dir, &entries)?;
    println!("wrote {} clips to {}", entries.len(), dir.display());
    Ok(())
}

#[derive(Serialize)]
struct EvalRow {
    id: String,
    objective: f64,
    frames: usize,
    penetrate_cm: f64,
    float_cm: f64,
    skate_cm: f64,
}

fn cmd_eval(config: &PipelineConfig, input: &Path) -> Result<(), PipelineError> {
    let corpus = load_corpus(input)?;
    if corpus.is_empty() {
        return Err(PipelineError::Invalid(format!("empty corpus at {}", input.display())));
    }
    let rows = corpus
        .par_iter()
        .map(|e| {
            let track = declared_track(&e.clip, &config.contact)
                .unwrap_or_else(|| detect_contacts(&e.clip, &config.contact));
            sequence_objective(&e.clip, &track).map(|r| EvalRow {
                id: e.id.clone(),
                objective: r.objective,
                frames: e.clip.len(),
                penetrate_cm: r.metrics.penetrate_cm,
                float_cm: r.metrics.float_cm,
                skate_cm: r.metrics.skate_cm,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let n = rows.len() as f64;
    let (mut pen, mut flo, mut sk) = (0.0, 0.0, 0.0);
    for r in &rows {
        pen += r.penetrate_cm;
        flo += r.float_cm;
        sk += r.skate_cm;
    }
    let out = config.out_dir.join("eval.json");
    fs::create_dir_all(&config.out_dir).map_err(|e| io_err(&config.out_dir, e))?;
    write_json(&out, &rows)?;
    println!(
        "{} clips: mean penetrate {:.4} cm, float {:.4} cm, skate {:.4} cm ({})",
        rows.len(),
        pen / n,
        flo / n,
        sk / n,
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct RefineRow {
    id: String,
    iterations: usize,
    objective_before: f64,
    objective_after: f64,
    penetrate_cm_after: f64,
    skate_cm_after: f64,
}

fn cmd_refine(config: &PipelineConfig, input: &Path) -> Result<(), PipelineError> {
    let corpus = load_corpus(input)?;
    if corpus.is_empty() {
        return Err(PipelineError::Invalid(format!("empty corpus at {}", input.display())));
    }
    let results = corpus
        .par_iter()
        .map(|e| refine_clip_with(&e.clip, &config.contact, &config.refine))
        .collect::<Result<Vec<_>, _>>()?;
    let refined: Vec<CorpusEntry> = corpus
        .iter()
        .zip(&results)
        .map(|(e, r)| CorpusEntry { id: e.id.clone(), split: e.split, clip: r.refined.clone() })
        .collect();
    let dir = config.out_dir.join("refined");
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    save_corpus(&dir, &refined)?;
    let rows: Vec<RefineRow> = corpus
        .iter()
        .zip(&results)
        .map(|(e, r)| RefineRow {
            id: e.id.clone(),
            iterations: r.iterations,
            objective_before: r.report_before.objective,
            objective_after: r.report_after.objective,
            penetrate_cm_after: r.report_after.metrics.penetrate_cm,
            skate_cm_after: r.report_after.metrics.skate_cm,
        })
        .collect();
    let report_path = config.out_dir.join("refine_report.json");
    write_json(&report_path, &rows)?;
    println!("refined {} clips into {} ({})", rows.len(), dir.display(), report_path.display());
    Ok(())
}

fn cmd_qc(config: &PipelineConfig, raw: &Path, refined: &Path) -> Result<(), PipelineError> {
    let raw_corpus = load_corpus(raw)?;
    let refined_corpus = load_corpus(refined)?;
    let by_id: std::collections::BTreeMap<&str, &CorpusEntry> =
        refined_corpus.iter().map(|e| (e.id.as_str(), e)).collect();
    let mut accepted = Vec::new();
    let mut rejections = String::from("clip_id,reason,mpjpe\n");
    let mut n_rejected = 0usize;
    for original in &raw_corpus {
        let counterpart = by_id.get(original.id.as_str()).ok_or_else(|| {
            PipelineError::Invalid(format!("no refined counterpart for clip `{}`", original.id))
        })?;
        let verdict = gate_clip(&original.clip, &counterpart.clip, &config.qc)?;
        if verdict.accepted {
            accepted.push(CorpusEntry {
                id: original.id.clone(),
                split: original.split,
                clip: counterpart.clip.clone(),
            });
        } else {
            rejections.push_str(&format!(
                "{},{},{}\n",
                original.id,
                verdict.reason.as_str(),
                report::fmt_f64(verdict.mpjpe)
            ));
            n_rejected += 1;
        }
    }
    let dir = config.out_dir.join("accepted");
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    save_corpus(&dir, &accepted)?;
    let log = config.out_dir.join("rejections.csv");
    fs::write(&log, rejections).map_err(|e| io_err(&log, e))?;
    println!("accepted {} of {} clips ({n_rejected} rejected, {})", accepted.len(),
        raw_corpus.len(), log.display());
    Ok(())
}

fn cmd_train_gen(config: &PipelineConfig, input: &Path) -> Result<(), PipelineError> {
    let corpus = load_corpus(input)?;
    let mut train: Vec<MotionClip> = corpus
        .iter()
        .filter(|e| e.split == Split::Train)
        .map(|e| e.clip.clone())
        .collect();
    if train.is_empty() {
        train = corpus.iter().map(|e| e.clip.clone()).collect();
    }
    let n_train = train.len();
    let (space, model) = forge_cli::pretrain(config, &train)?;
    fs::create_dir_all(&config.out_dir).map_err(|e| io_err(&config.out_dir, e))?;
    let path = config.out_dir.join("model.json");
    save_model(&path, &space, &model)?;
    let mean_loss = model.l_diff.iter().sum::<f64>() / model.l_diff.len() as f64;
    println!(
        "trained on {} clips, {} labels, mean denoising loss {:.4} ({})",
        n_train,
        model.labels.len(),
        mean_loss,
        path.display()
    );
    Ok(())
}

fn cmd_sample(
    config: &PipelineConfig,
    model_path: &Path,
    count: usize,
    label: Option<&str>,
) -> Result<(), PipelineError> {
    if count == 0 {
        return Err(PipelineError::Invalid("count must be >= 1".into()));
    }
    let bundle = load_model(model_path)?;
    let labels: Vec<String> = match label {
        Some(l) => vec![l.to_string()],
        None => bundle.model.labels.clone(),
    };
    if labels.is_empty() {
        return Err(PipelineError::Invalid("model has no labels (untrained?)".into()));
    }
    let entries = (0..count)
        .into_par_iter()
        .map(|i| {
            let label = &labels[i % labels.len()];
            let seed = derive_seed(config.seed, &[Stage::Sample as u64, 0, i as u64]);
            bundle.model.sample(&bundle.space, label, seed).map(|clip| CorpusEntry {
                id: format!("sample_{i:05}"),
                split: Split::Train,
                clip,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let dir = config.out_dir.join("samples");
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    save_corpus(&dir, &entries)?;
    println!("sampled {count} clips into {}", dir.display());
    Ok(())
}

fn cmd_finetune(
    config: &PipelineConfig,
    model_path: &Path,
    accepted: &Path,
) -> Result<(), PipelineError> {
    let bundle = load_model(model_path)?;
    let corpus = load_corpus(accepted)?;
    let clips: Vec<MotionClip> = corpus.into_iter().map(|e| e.clip).collect();
    let tuned = bundle.model.finetune(&bundle.space, &clips, config.gen.mix_ratio)?;
    fs::create_dir_all(&config.out_dir).map_err(|e| io_err(&config.out_dir, e))?;
    let path = config.out_dir.join("model.json");
    save_model(&path, &bundle.space, &tuned)?;
    println!(
        "fine-tuned on {} accepted clips at mix {} ({})",
        clips.len(),
        config.gen.mix_ratio,
        path.display()
    );
    Ok(())
}

fn cmd_track(config: &PipelineConfig, input: &Path) -> Result<(), PipelineError> {
    let corpus = load_corpus(input)?;
    if corpus.is_empty() {
        return Err(PipelineError::Invalid(format!("empty corpus at {}", input.display())));
    }
    let results = corpus
        .par_iter()
        .map(|e| execute(&e.clip, &config.track, &config.contact))
        .collect::<Result<Vec<_>, _>>()?;
    let mut csv = String::from("clip_id,success,e_mpjpe,e_mpkpe,terminated_at\n");
    for (e, r) in corpus.iter().zip(&results) {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            e.id,
            r.success,
            report::fmt_f64(r.e_mpjpe),
            report::fmt_f64(r.e_mpkpe),
            r.terminated_at.map(|t| t.to_string()).unwrap_or_default()
        ));
    }
    fs::create_dir_all(&config.out_dir).map_err(|e| io_err(&config.out_dir, e))?;
    let path = config.out_dir.join("track.csv");
    fs::write(&path, csv).map_err(|e| io_err(&path, e))?;
    let clips: Vec<MotionClip> = corpus.iter().map(|e| e.clip.clone()).collect();
    let stats = batch_execute(&clips, &config.track, &config.contact)?;
    println!(
        "{} clips: success rate {:.3}, mean e_mpjpe {:.4} m, mean e_mpkpe {:.4} m ({})",
        corpus.len(),
        stats.success_rate,
        stats.mean_e_mpjpe,
        stats.mean_e_mpkpe,
        path.display()
    );
    Ok(())
}

fn cmd_loop(config: &PipelineConfig) -> Result<(), PipelineError> {
    let artifacts = pipeline::run_loop(config)?;
    for r in &artifacts.reports {
        println!(
            "round {}: fid {:.4}, div {:.4}, penetrate {:.4} cm, float {:.4} cm, \
             skate {:.4} cm, succ {:.3}",
            r.round, r.fid, r.div, r.penetrate, r.float, r.skate, r.succ
        );
    }
    println!("artifacts under {}", config.out_dir.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    let mut config = load_or_default(&cli.config)?;
    match &cli.command {
        Command::Synth { common } => {
            apply_overrides(&mut config, common);
            cmd_synth(&config)
        }
        Command::Eval { input, common } => {
            apply_overrides(&mut config, common);
            cmd_eval(&config, input)
        }
        Command::Refine { input, common } => {
            apply_overrides(&mut config, common);
            cmd_refine(&config, input)
        }
        Command::Qc { raw, refined, common } => {
            apply_overrides(&mut config, common);
            cmd_qc(&config, raw, refined)
        }
        Command::TrainGen { input, common } => {
            apply_overrides(&mut config, common);
            cmd_train_gen(&config, input)
        }
        Command::Sample { model, count, label, common } => {
            apply_overrides(&mut config, common);
            cmd_sample(&config, model, *count, label.as_deref())
        }
        Command::Finetune { model, accepted, common } => {
            apply_overrides(&mut config, common);
            cmd_finetune(&config, model, accepted)
        }
        Command::Track { input, common } => {
            apply_overrides(&mut config, common);
            cmd_track(&config, input)
        }
        Command::Loop { rounds, common } => {
            apply_overrides(&mut config, common);
            if let Some(rounds) = rounds {
                config.rounds = *rounds;
            }
            cmd_loop(&config)
        }
        Command::Report { common } => {
            apply_overrides(&mut config, common);
            let reports = report::consolidate(&config.out_dir)?;
            println!(
                "consolidated {} rounds into {}",
                reports.len(),
                config.out_dir.join("reports.csv").display()
            );
            Ok(())
        }
    }
}

fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        // Worker count may only affect scheduling, never results; the
        // pipeline keeps all reductions in clip-index order.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }
    match run(&cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::ExitCode::from(e.exit_code())
        }
    }
}
