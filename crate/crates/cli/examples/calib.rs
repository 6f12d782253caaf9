//! Scratch calibration probe for the closed-loop benchmark.

use std::time::Instant;

use forge_cli::{evaluate_model, obtain_corpus, prepare, run_round, PipelineConfig};
use forge_gen::LatentParams;

fn run_variant(name: &str, config: &PipelineConfig) {
    let t0 = Instant::now();
    let corpus = obtain_corpus(config).unwrap();
    let (space, model, reference) = prepare(config, &corpus).unwrap();
    let eval0 = evaluate_model(&model, &space, config, &reference).unwrap();
    let mut pen = vec![eval0.metrics.penetrate_cm];
    let mut flo = vec![eval0.metrics.float_cm];
    let mut sk = vec![eval0.metrics.skate_cm];
    let succ9 = (eval0.refined_track.success_rate, eval0.raw_track.success_rate);
    let mpjpe9 = (eval0.refined_track.mean_e_mpjpe, eval0.raw_track.mean_e_mpjpe);
    let mut current = model;
    for round in 1..=3 {
        let out = run_round(&current, &space, config, round, &reference).unwrap();
        current = out.model;
        pen.push(out.detail.report.penetrate);
        flo.push(out.detail.report.float);
        sk.push(out.detail.report.skate);
    }
    let mono = |v: &[f64]| v.windows(2).all(|w| w[1] <= w[0]);
    let d1 = sk[0] - sk[1];
    let d3 = sk[2] - sk[3];
    let r = |v: &[f64]| v.iter().map(|x| (x * 10000.0).round() / 10000.0).collect::<Vec<_>>();
    println!(
        "{name:<18} pen {:?} {} | float {:?} {} | skate {:?} {} d1 {d1:.4} d3 {d3:.4} {} | c9 {} | {:.1}s",
        r(&pen),
        if mono(&pen) { "OK " } else { "BAD" },
        r(&flo),
        if mono(&flo) { "OK " } else { "BAD" },
        r(&sk),
        if mono(&sk) { "OK " } else { "BAD" },
        if d3 <= d1 { "OK " } else { "BAD" },
        if succ9.0 >= succ9.1 && mpjpe9.0 <= mpjpe9.1 { "OK " } else { "BAD" },
        t0.elapsed().as_secs_f64(),
    );
}

fn main() {
    for seed in [7u64, 1, 42, 999, 12345, 31337] {
        let mut config = PipelineConfig::default();
        config.seed = seed;
        config.gen.latent = LatentParams { d: 40, t_fix: 60 };
        config.gen.mix_ratio = 0.9;
        run_variant(&format!("d24 mix0.9 s{seed}"), &config);
    }
}
