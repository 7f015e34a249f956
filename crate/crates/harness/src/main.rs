use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use guide_core::planner::PolicyKind;
use guide_harness::pipeline::{self, seed_override};
use guide_harness::Config;

#[derive(Parser, Debug)]
#[command(
    name = "guide",
    version,
    about = "Exploration planner datasets, training, benchmarks and rendering"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seeds: N, A-B or a comma list. Overrides the command's seed range.
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Parallel episodes.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Denoising steps; a comma list sets the denoise-sweep values.
    #[arg(long = "K", global = true)]
    k: Option<String>,
    /// Also write the region table of each rendered step.
    #[arg(long, global = true)]
    dump_regions: bool,
    /// Also write the node and edge tables of each rendered step.
    #[arg(long, global = true)]
    dump_graph: bool,
    /// Output directory for artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", global = true)]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate and save maze worlds.
    GenWorlds,
    /// Collect (observed, ground-truth) node rasters for the predictor.
    CollectNodes,
    /// Train the node predictor.
    TrainPredictor,
    /// Collect expert demonstrations for the policy.
    CollectExpert,
    /// Train the diffusion policy.
    TrainPolicy,
    /// Run a benchmark suite and write its metrics CSV.
    Eval {
        /// Exit with status 2 when a suite threshold fails.
        #[arg(long)]
        assert: bool,
    },
    /// Render snapshots of an episode.
    Render {
        #[arg(long, default_value = "guide")]
        policy: PolicyKind,
    },
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut c = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(out) = &cli.out {
        c.set("paths.out", &out.display().to_string())?;
    }
    if let Some(k) = &cli.k {
        let first = k.split(',').next().unwrap_or_default().trim();
        c.set("episode.k_steps", first)?;
        c.set("eval.k_values", k)?;
    }
    if let Some(s) = &cli.seed {
        c.set("eval.seeds", s)?;
    }
    for kv in &cli.set {
        let Some((key, value)) = kv.split_once('=') else {
            bail!("--set expects key=value, got `{kv}`");
        };
        c.set(key.trim(), value.trim())?;
    }
    c.episode().context("invalid configuration")?;
    Ok(c)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let c = load_config(&cli)?;
    let seeds = seed_override(cli.seed.as_deref())?;
    match cli.cmd {
        Cmd::GenWorlds => {
            let paths = pipeline::cmd_gen_worlds(&c, seeds.as_deref())?;
            println!(
                "wrote {} worlds to {}",
                paths.len(),
                c.out_dir().join("worlds").display()
            );
        }
        Cmd::CollectNodes => {
            let n = pipeline::cmd_collect_nodes(&c, seeds.as_deref(), cli.jobs)?;
            println!("wrote {n} records to {}", pipeline::nodes_path(&c).display());
        }
        Cmd::TrainPredictor => {
            let val = pipeline::cmd_train_predictor(&c)?;
            for (e, v) in val.iter().enumerate() {
                println!("epoch {e:3} val_loss {v:.5}");
            }
            println!("wrote {}", pipeline::predictor_path(&c).display());
        }
        Cmd::CollectExpert => {
            let n = pipeline::cmd_collect_expert(&c, seeds.as_deref(), cli.jobs)?;
            println!("wrote {n} samples to {}", pipeline::expert_path(&c).display());
        }
        Cmd::TrainPolicy => {
            let (a, b) = pipeline::cmd_train_policy(&c)?;
            println!("eval loss {a:.5} -> {b:.5}");
            println!("wrote {}", pipeline::policy_path(&c).display());
        }
        Cmd::Eval { assert } => {
            let out = pipeline::cmd_eval(&c, cli.jobs)?;
            for a in guide_harness::aggregate(&out.rows) {
                let k = a.k.map(|k| format!(" K={k}")).unwrap_or_default();
                let gap = a.gap_mean.map(|g| format!(" gap {g:.1}%")).unwrap_or_default();
                println!(
                    "{}{k}: n={} distance {:.1}±{:.1} m{gap} plan {:.1} ms",
                    a.policy, a.n, a.distance_mean, a.distance_std, a.plan_time_ms_mean
                );
            }
            println!("wrote {} and {}", out.csv.display(), out.timing.display());
            for f in &out.failures {
                eprintln!("FAIL: {f}");
            }
            if assert && !out.failures.is_empty() {
                return Ok(ExitCode::from(2));
            }
        }
        Cmd::Render { policy } => {
            let seeds = seeds.unwrap_or_else(|| vec![1]);
            let r = pipeline::cmd_render(&c, &seeds, policy, cli.dump_regions, cli.dump_graph)?;
            for p in r.images.iter().chain(&r.dumps) {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
