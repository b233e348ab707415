use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vidtemporal::core_math::gradcheck::GradCheckConfig;
use vidtemporal::dataio::{generate_synthetic, SyntheticConfig};
use vidtemporal::harness::{ensemble_files, evaluate_file, predict_file, train, TrainConfig};
use vidtemporal::models::{grad_check_model, toy_batch, toy_spec, ModelKind};
use vidtemporal::{Error, Result};

#[derive(Parser)]
#[command(name = "vidtemporal", version, about = "Frame-level video classifiers and GAP@20 evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic record file.
    GenData {
        #[arg(long, default_value_t = 25)]
        vocab: usize,
        #[arg(long, default_value_t = 2000)]
        videos: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
        #[arg(long)]
        out: PathBuf,
        /// Seed for the class prototypes (defaults to --seed).
        #[arg(long)]
        prototype_seed: Option<u64>,
        #[arg(long, default_value_t = 1024)]
        visual_dim: usize,
        #[arg(long, default_value_t = 128)]
        audio_dim: usize,
        #[arg(long, default_value_t = 30)]
        min_frames: usize,
        #[arg(long, default_value_t = 300)]
        max_frames: usize,
    },
    /// Train from a TOML config; writes best.ckpt, final.ckpt and metrics.tsv.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write ranked predictions for every video in a record file.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Keep every class instead of the top 20.
        #[arg(long)]
        full_scores: bool,
    },
    /// GAP@20 of a prediction file against a record file.
    Eval {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Weighted per-class mean of prediction files.
    Ensemble {
        #[arg(long, num_args = 1.., value_delimiter = ',', required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, num_args = 1.., value_delimiter = ',')]
        weights: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        full_scores: bool,
    },
    /// Finite-difference check of a model kind at toy sizes.
    Gradcheck {
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        #[arg(long, default_value_t = 12)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData {
            vocab,
            videos,
            seed,
            noise,
            out,
            prototype_seed,
            visual_dim,
            audio_dim,
            min_frames,
            max_frames,
        } => {
            let data = generate_synthetic(&SyntheticConfig {
                vocab_size: vocab,
                video_count: videos,
                seed,
                prototype_seed,
                noise_sigma: noise,
                visual_dim,
                audio_dim,
                min_frames,
                max_frames,
            })?;
            let bytes = data.save(&out)?;
            println!("videos\t{videos}\tbytes\t{bytes}");
        }
        Command::Train { config, data, out } => {
            let cfg = TrainConfig::load(&config)?;
            let outputs = train(&cfg, data.as_deref(), out.as_deref())?;
            println!("best\t{}", outputs.best_checkpoint.display());
            println!("final\t{}", outputs.final_checkpoint.display());
            println!("log\t{}", outputs.metric_log.display());
        }
        Command::Predict {
            checkpoint,
            data,
            out,
            full_scores,
        } => {
            let n = predict_file(&checkpoint, &data, &out, full_scores)?;
            println!("videos\t{n}");
        }
        Command::Eval { predictions, data } => {
            let r = evaluate_file(&predictions, &data)?;
            println!(
                "gap\t{:.6}\tpooled_pairs\t{}\ttotal_positives\t{}",
                r.gap, r.pooled_pairs, r.total_positives
            );
        }
        Command::Ensemble {
            inputs,
            weights,
            out,
            full_scores,
        } => {
            let paths: Vec<&std::path::Path> = inputs.iter().map(PathBuf::as_path).collect();
            let n = ensemble_files(&paths, weights.as_deref(), &out, full_scores)?;
            println!("videos\t{n}");
        }
        Command::Gradcheck {
            model,
            tolerance,
            samples,
            seed,
        } => {
            let kind: ModelKind = model.parse()?;
            let (m, batch) = toy_batch(&toy_spec(kind), seed)?;
            let cfg = GradCheckConfig {
                tolerance,
                samples_per_block: samples,
                seed,
                ..Default::default()
            };
            let report = grad_check_model(&m, &batch, &cfg)?;
            for b in &report.blocks {
                println!("{}\t{}\t{:.3e}\t{}", b.name, b.checked, b.worst_rel_err, if b.passed { "ok" } else { "FAIL" });
            }
            if let Some(b) = report.blocks.iter().filter(|b| !b.passed).max_by(|a, b| a.worst_rel_err.total_cmp(&b.worst_rel_err)) {
                return Err(Error::GradientCheck {
                    block: b.name.clone(),
                    worst: b.worst_rel_err,
                    tolerance,
                });
            }
        }
    }
    Ok(())
}

fn one_line(msg: &str) -> String {
    msg.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("bad arguments").trim_start_matches("error: ");
            eprintln!("error\tusage\t{}", one_line(first));
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error\t{}\t{}", e.kind(), one_line(&e.to_string()));
            ExitCode::FAILURE
        }
    }
}
