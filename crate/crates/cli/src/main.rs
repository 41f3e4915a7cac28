use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use toolseq_cli::commands::{self, parse_metrics};
use toolseq_cli::{CliError, Config};

#[derive(Parser)]
#[command(name = "toolseq", version, about = "Learned restoration-tool sequencing")]
struct Cli {
    /// JSON config file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Config override `key.path=value` (value parsed as JSON); repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Writes procedural clean images.
    Corpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 128)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Synthesizes a degraded dataset and its manifest.
    Synth {
        #[arg(long)]
        clean_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        per_case: Option<usize>,
    },
    /// Trains a policy and writes a checkpoint.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// oracle | proxy | remote
        #[arg(long)]
        provider: Option<String>,
        #[arg(long)]
        updates: Option<usize>,
        /// Held-out manifest for greedy evaluation; the training set is used otherwise.
        #[arg(long)]
        eval_manifest: Option<PathBuf>,
    },
    /// Runs the greedy policy on one image.
    Plan {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        t_max: Option<usize>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Scores greedy plans over a manifest as CSV.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "psnr,ssim,proxy")]
        metrics: String,
        #[arg(long)]
        t_max: Option<usize>,
        /// CSV path; an SVG summary is written next to it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Brute-force best sequences, optionally compared with a policy.
    Oracle {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        l_max: Option<usize>,
        #[arg(long)]
        provider: Option<String>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// JSON-lines report path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-setting plan cost: wall time, tool invocations, policy forwards.
    Bench {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        t_max: Option<usize>,
        /// JSON report path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = Config::load(cli.config.as_deref(), &cli.sets)?;
    match cli.cmd {
        Cmd::Corpus { out, n, size, seed } => {
            let paths = commands::cmd_corpus(&out, n, size, seed)?;
            println!("wrote {} clean images to {}", paths.len(), out.display());
        }
        Cmd::Synth {
            clean_dir,
            out,
            seed,
            per_case,
        } => {
            let mut cfg = cfg;
            if let Some(s) = seed {
                cfg.synth.seed = s;
            }
            if let Some(n) = per_case {
                cfg.synth.per_case = n;
            }
            let s = commands::cmd_synth(&cfg, &clean_dir, &out)?;
            for (case, n) in &s.per_case {
                println!("case {case:2}: {n}");
            }
            println!("{} images", s.images);
            println!("manifest: {}", s.manifest.display());
        }
        Cmd::Train {
            manifest,
            out,
            provider,
            updates,
            eval_manifest,
        } => {
            let mut cfg = commands::with_provider(cfg, provider.as_deref())?;
            if let Some(u) = updates {
                cfg.po.updates = u;
            }
            let s = commands::cmd_train(&cfg, &manifest, eval_manifest.as_deref(), &out, |row| {
                log::info!(
                    "update {} return {:.4} entropy {:.4} failed {}{}",
                    row.update,
                    row.mean_return,
                    row.entropy,
                    row.failed_episodes,
                    row.greedy_eval.map(|g| format!(" greedy {g:.4}")).unwrap_or_default()
                );
            })?;
            println!("checkpoint: {}", s.checkpoint.display());
            println!("updates: {}", s.updates);
            println!("final greedy eval: {:.6}", s.final_greedy_eval);
        }
        Cmd::Plan {
            checkpoint,
            image,
            t_max,
            out,
        } => {
            let s = commands::cmd_plan(&cfg, &checkpoint, &image, t_max, &out)?;
            println!("{}", serde_json::to_string(&s.actions).expect("names serialize"));
        }
        Cmd::Eval {
            checkpoint,
            manifest,
            metrics,
            t_max,
            out,
        } => {
            let metrics = parse_metrics(&metrics)?;
            let r = commands::cmd_eval(&cfg, &checkpoint, &manifest, &metrics, t_max, out.as_deref())?;
            if out.is_none() {
                print!("{}", r.to_csv()?);
            }
            for s in &r.summary {
                println!(
                    "setting {:>3}: psnr {} ssim {} proxy {}",
                    s.setting,
                    fmt_opt(s.psnr),
                    fmt_opt(s.ssim),
                    fmt_opt(s.proxy)
                );
            }
        }
        Cmd::Oracle {
            manifest,
            l_max,
            provider,
            checkpoint,
            out,
        } => {
            let mut cfg = commands::with_provider(cfg, provider.as_deref())?;
            if let Some(l) = l_max {
                cfg.oracle.l_max = l;
            }
            let s = commands::cmd_oracle(&cfg, &manifest, checkpoint.as_deref(), out.as_deref())?;
            for r in &s.rows {
                println!("{}", serde_json::to_string(r).expect("rows serialize"));
            }
            if let Some(a) = &s.aggregate {
                println!("{}", serde_json::to_string(a).expect("aggregate serializes"));
            }
        }
        Cmd::Bench {
            checkpoint,
            manifest,
            t_max,
            out,
        } => {
            let r = commands::cmd_bench(&cfg, &checkpoint, &manifest, t_max)?;
            for s in &r.settings {
                println!(
                    "setting {:>3}: {} images, {:.2} ms, {:.2} invocations, {:.2} forwards",
                    s.setting, s.images, s.mean_wall_ms, s.mean_invocations, s.mean_forwards
                );
            }
            let json = serde_json::to_string_pretty(&r).expect("report serializes");
            match out {
                Some(p) => std::fs::write(&p, json).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?,
                None => println!("{json}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
