//! Command-line driver: seeded scenario runs, training, evaluation, policy
//! comparisons, grant-count sweeps, and action-space inspection.
//!
//! Exit codes: 0 on success, 1 on configuration or feasibility errors,
//! 2 on runtime failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mcg_noma::config::{Policy, ScenarioConfig};
use mcg_noma::harness::{
    self, catalog_jsonl, compare_policies, emit_action_trace, run_scenario, sweep_ncg,
    HarnessError,
};

#[derive(Parser)]
#[command(name = "mcg-noma", version, about = "Grant-free NOMA uplink simulator with learned multi-grant configuration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// TOML scenario config; defaults apply for every omitted key.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the config's episode count.
    #[arg(long)]
    episodes: Option<u32>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a baseline policy (scg-baseline, random-mcg, or fixed-mcg:<c>,<s>).
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Policy to execute.
        #[arg(long)]
        policy: Option<String>,
    },
    /// Train the two agents, writing progress, checkpoint, and metrics.
    Train {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Greedy evaluation of a trained checkpoint.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        /// Checkpoint produced by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Evaluate several policies on aligned episodes and emit ratio series.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated policy list, e.g. `learned,scg-baseline`.
        #[arg(long, value_delimiter = ',')]
        policies: Vec<String>,
    },
    /// Train and evaluate the learned policy across grant counts.
    SweepNcg {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated grant counts, e.g. `2,3,4,5`.
        #[arg(long, value_delimiter = ',', default_value = "2,3,4,5")]
        ncg: Vec<usize>,
    },
    /// Print both action catalogs as JSON lines.
    EnumerateActions {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Replay one greedy episode from a checkpoint and dump action indices.
    EmitActionTrace {
        #[command(flatten)]
        common: CommonArgs,
        /// Checkpoint produced by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn load_config(common: &CommonArgs) -> Result<ScenarioConfig, HarnessError> {
    let mut config = match &common.config {
        Some(path) => ScenarioConfig::from_path(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(episodes) = common.episodes {
        config.learning.episodes = episodes;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Simulate { common, policy } => {
            let mut config = load_config(&common)?;
            if let Some(policy) = policy {
                config.policy = policy;
            }
            if matches!(config.policy(), Ok(Policy::Learned)) {
                return Err(HarnessError::Feasibility(
                    "simulate runs baseline policies; use `train` for the learned policy".into(),
                ));
            }
            let artifacts = run_scenario(&config, &common.out)?;
            println!("{}", serde_json::to_string_pretty(&artifacts.summary)?);
        }
        Command::Train { common } => {
            let mut config = load_config(&common)?;
            config.policy = "learned".into();
            let artifacts = run_scenario(&config, &common.out)?;
            println!("{}", serde_json::to_string_pretty(&artifacts.summary)?);
        }
        Command::Evaluate { common, checkpoint } => {
            let mut config = load_config(&common)?;
            config.policy = "learned".into();
            let bundle = harness::load_checkpoint(&checkpoint, &config)?;
            let eval_start = config.learning.episodes + 1;
            let eval_end = config.learning.episodes + config.learning.eval_episodes;
            let results = harness::evaluate_episodes(
                &config,
                &Policy::Learned,
                Some(&bundle),
                eval_start..=eval_end,
            )?;
            std::fs::create_dir_all(&common.out)?;
            let rows: Vec<harness::MetricsRow> = results
                .iter()
                .flat_map(|result| {
                    result.records.iter().map(move |r| {
                        harness::MetricsRow {
                            episode: result.episode,
                            subframe: r.subframe,
                            policy: "learned".into(),
                            n_cc: r.obs.n_cc,
                            n_ic: r.obs.n_ic,
                            n_sc: r.obs.n_sc,
                            n_suc: r.obs.n_suc,
                            n_fdec: r.obs.n_fdec,
                            reward: r.reward,
                            avg_latency_slots: r.avg_latency_slots,
                            avg_latency_ms: r.avg_latency_ms,
                            spill: r.spill,
                        }
                    })
                })
                .collect();
            let metrics_path = common.out.join("metrics.csv");
            harness::write_rows(&metrics_path, &rows)?;
            let written = harness::read_metrics(&metrics_path)?;
            let summary = harness::summarize(&written, &config, "learned", eval_start);
            let summary_path = common.out.join("summary.json");
            std::fs::write(
                &summary_path,
                format!("{}\n", serde_json::to_string_pretty(&summary)?),
            )?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Compare { common, policies } => {
            let config = load_config(&common)?;
            if policies.len() < 2 {
                return Err(HarnessError::Feasibility(
                    "compare needs at least two policies".into(),
                ));
            }
            let parsed: Result<Vec<Policy>, _> =
                policies.iter().map(|p| Policy::parse(p)).collect();
            let summary = compare_policies(&config, &parsed?, &common.out)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::SweepNcg { common, ncg } => {
            let config = load_config(&common)?;
            let rows = sweep_ncg(&config, &ncg, &common.out)?;
            println!("{}", serde_json::to_string_pretty(&rows)?);
        }
        Command::EnumerateActions { common } => {
            let config = load_config(&common)?;
            print!("{}", catalog_jsonl(&config.catalog()?));
        }
        Command::EmitActionTrace { common, checkpoint } => {
            let config = load_config(&common)?;
            let out_path = common.out.join("action_trace.csv");
            let rows = emit_action_trace(&config, &checkpoint, &out_path)?;
            eprintln!("wrote {} action rows to {}", rows.len(), out_path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
