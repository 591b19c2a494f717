//! Experiment orchestration: seeded scenario runs, baseline policies,
//! metrics files, policy comparisons, and grant-count sweeps.
//!
//! A run directory ends up with `metrics.csv` (one row per episode and
//! subframe, fixed schema), `summary.json` (means over the evaluation
//! episodes, recomputed from the written CSV), and for learned runs
//! `training_progress.csv` and `checkpoint.json`. Given the same config and
//! seed, every output byte is identical across runs.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::ActionCatalog;
use crate::agent::{AgentBundle, AgentError, Checkpoint};
use crate::config::{ConfigError, Policy, ScenarioConfig};
use crate::nn::NetError;
use crate::sim::{run_episode, Environment, EpisodeMode, EpisodeResult};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Feasibility(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// 1 for configuration/feasibility problems, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Feasibility(_) | Self::Agent(_) => 1,
            _ => 2,
        }
    }
}

/// One `metrics.csv` row. Field order is the file schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub episode: u32,
    pub subframe: u32,
    pub policy: String,
    pub n_cc: u32,
    pub n_ic: u32,
    pub n_sc: u32,
    pub n_suc: u32,
    pub n_fdec: u32,
    pub reward: f64,
    pub avg_latency_slots: Option<f64>,
    pub avg_latency_ms: Option<f64>,
    pub spill: u32,
}

impl MetricsRow {
    fn from_record(episode: u32, policy: &str, r: &crate::sim::SubframeRecord) -> Self {
        Self {
            episode,
            subframe: r.subframe,
            policy: policy.to_string(),
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
    }
}

/// One `training_progress.csv` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressRow {
    pub episode: u32,
    pub mean_reward: f64,
    pub epsilon: f64,
    /// Empty until the replay warm-up completes.
    pub mean_loss: Option<f64>,
}

/// Aggregates over the evaluation episodes, every number recomputable from
/// the metrics CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub policy: String,
    pub seed: u64,
    pub episodes: u32,
    pub eval_start_episode: u32,
    pub eval_episodes: u32,
    pub mean_served_per_subframe: f64,
    /// Success-weighted over all evaluation rows.
    pub latency_slots: Option<f64>,
    pub latency_ms: Option<f64>,
    pub peak_window: (u32, u32),
    pub peak_served_per_subframe: f64,
    pub peak_latency_slots: Option<f64>,
    pub total_spill: u64,
}

/// Files written by a scenario run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub metrics_path: PathBuf,
    pub summary_path: PathBuf,
    pub progress_path: Option<PathBuf>,
    pub checkpoint_path: Option<PathBuf>,
    pub summary: RunSummary,
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>, HarnessError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

fn environment(config: &ScenarioConfig, catalog: ActionCatalog) -> Result<Environment, HarnessError> {
    Ok(Environment {
        numerology: config.numerology()?,
        channel: config.channel_params()?,
        profile: config.traffic_profile()?,
        catalog,
    })
}

fn env_for(config: &ScenarioConfig, policy: &Policy) -> Result<Environment, HarnessError> {
    let catalog = match policy {
        Policy::ScgBaseline => config.scg_catalog()?,
        _ => config.catalog()?,
    };
    environment(config, catalog)
}

fn check_fixed_indices(catalog: &ActionCatalog, ctu: usize, start: usize) -> Result<(), HarnessError> {
    if ctu >= catalog.ctu_actions.len() || start >= catalog.start_actions.len() {
        return Err(HarnessError::Feasibility(format!(
            "fixed action ({ctu}, {start}) outside catalogs of sizes {}x{}",
            catalog.ctu_actions.len(),
            catalog.start_actions.len()
        )));
    }
    Ok(())
}

/// Run `episodes` (inclusive indices) under a frozen policy.
pub fn evaluate_episodes(
    config: &ScenarioConfig,
    policy: &Policy,
    bundle: Option<&AgentBundle>,
    episodes: std::ops::RangeInclusive<u32>,
) -> Result<Vec<EpisodeResult>, HarnessError> {
    let env = env_for(config, policy)?;
    if let Policy::FixedMcg { ctu_index, start_index } = policy {
        check_fixed_indices(&env.catalog, *ctu_index, *start_index)?;
    }
    let mut results = Vec::new();
    for ep in episodes {
        let mut mode = match policy {
            Policy::Learned => EpisodeMode::Greedy {
                bundle: bundle.expect("learned evaluation needs a trained bundle"),
            },
            Policy::ScgBaseline => EpisodeMode::Fixed { ctu_index: 0, start_index: 0 },
            Policy::RandomMcg => EpisodeMode::Random,
            Policy::FixedMcg { ctu_index, start_index } => {
                EpisodeMode::Fixed { ctu_index: *ctu_index, start_index: *start_index }
            }
        };
        results.push(run_episode(&env, &mut mode, config.seed, ep)?);
    }
    Ok(results)
}

/// Train the two agents for the configured number of episodes, reporting
/// each finished episode through `on_episode`.
pub fn train_bundle<F>(
    config: &ScenarioConfig,
    mut on_episode: F,
) -> Result<(AgentBundle, Vec<ProgressRow>), HarnessError>
where
    F: FnMut(&EpisodeResult),
{
    let env = env_for(config, &Policy::Learned)?;
    let layout = config.state_layout(&env.catalog);
    let mut bundle =
        AgentBundle::new(layout, &config.learning.hidden, config.learning_params(), config.seed);
    let schedule = config.epsilon_schedule();
    let total = config.learning.episodes;
    let mut progress = Vec::with_capacity(total as usize);
    for ep in 1..=total {
        let epsilon = schedule.value(ep as usize - 1, total as usize);
        let result = {
            let mut mode = EpisodeMode::Train { bundle: &mut bundle, epsilon };
            run_episode(&env, &mut mode, config.seed, ep)?
        };
        let losses: Vec<f64> = result.records.iter().filter_map(|r| r.train_loss).collect();
        progress.push(ProgressRow {
            episode: ep,
            mean_reward: result.total_reward / result.records.len().max(1) as f64,
            epsilon,
            mean_loss: if losses.is_empty() {
                None
            } else {
                Some(losses.iter().sum::<f64>() / losses.len() as f64)
            },
        });
        on_episode(&result);
    }
    Ok((bundle, progress))
}

/// Success-weighted latency over rows, from the CSV columns alone.
fn weighted_latency(rows: &[&MetricsRow]) -> (Option<f64>, Option<f64>) {
    let mut weight = 0.0;
    let mut slots = 0.0;
    let mut ms = 0.0;
    for row in rows {
        if let (Some(l_slots), Some(l_ms)) = (row.avg_latency_slots, row.avg_latency_ms) {
            let w = row.n_suc as f64;
            weight += w;
            slots += l_slots * w;
            ms += l_ms * w;
        }
    }
    if weight > 0.0 {
        (Some(slots / weight), Some(ms / weight))
    } else {
        (None, None)
    }
}

/// Build the summary from written rows; `eval_start` is the first episode
/// the aggregates cover.
pub fn summarize(
    rows: &[MetricsRow],
    config: &ScenarioConfig,
    policy: &str,
    eval_start: u32,
) -> RunSummary {
    let eval_rows: Vec<&MetricsRow> = rows.iter().filter(|r| r.episode >= eval_start).collect();
    let episodes = rows.iter().map(|r| r.episode).max().unwrap_or(0);
    let eval_episodes = episodes.saturating_sub(eval_start.saturating_sub(1));
    let n = eval_rows.len().max(1) as f64;
    let served: u64 = eval_rows.iter().map(|r| r.n_suc as u64).sum();
    let (latency_slots, latency_ms) = weighted_latency(&eval_rows);
    let (lo, hi) = config.peak_window;
    let peak_rows: Vec<&MetricsRow> =
        eval_rows.iter().filter(|r| r.subframe >= lo && r.subframe <= hi).copied().collect();
    let peak_n = peak_rows.len().max(1) as f64;
    let peak_served: u64 = peak_rows.iter().map(|r| r.n_suc as u64).sum();
    let (peak_latency_slots, _) = weighted_latency(&peak_rows);
    RunSummary {
        policy: policy.to_string(),
        seed: config.seed,
        episodes,
        eval_start_episode: eval_start,
        eval_episodes,
        mean_served_per_subframe: served as f64 / n,
        latency_slots,
        latency_ms,
        peak_window: config.peak_window,
        peak_served_per_subframe: peak_served as f64 / peak_n,
        peak_latency_slots,
        total_spill: eval_rows.iter().map(|r| r.spill as u64).sum(),
    }
}

fn write_summary(path: &Path, summary: &RunSummary) -> Result<(), HarnessError> {
    let mut file = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut file, summary)?;
    file.write_all(b"\n")?;
    Ok(())
}

pub fn save_checkpoint(path: &Path, bundle: &AgentBundle) -> Result<(), HarnessError> {
    let file = fs::File::create(path)?;
    serde_json::to_writer(file, &Checkpoint::from_bundle(bundle))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path, config: &ScenarioConfig) -> Result<AgentBundle, HarnessError> {
    let file = fs::File::open(path)?;
    let checkpoint: Checkpoint = serde_json::from_reader(file)?;
    let layout = config.state_layout(&config.catalog()?);
    Ok(checkpoint.into_bundle(&layout)?)
}

/// Train, checkpoint, then run the greedy evaluation episodes. Returns the
/// artifacts and the trained bundle.
pub fn run_learned(
    config: &ScenarioConfig,
    out_dir: &Path,
) -> Result<(RunArtifacts, AgentBundle), HarnessError> {
    fs::create_dir_all(out_dir)?;
    let mut rows: Vec<MetricsRow> = Vec::new();
    let (bundle, progress) = train_bundle(config, |result| {
        rows.extend(result.records.iter().map(|r| MetricsRow::from_record(result.episode, "learned", r)));
    })?;

    let eval_start = config.learning.episodes + 1;
    let eval_end = config.learning.episodes + config.learning.eval_episodes;
    let eval = evaluate_episodes(config, &Policy::Learned, Some(&bundle), eval_start..=eval_end)?;
    for result in &eval {
        rows.extend(result.records.iter().map(|r| MetricsRow::from_record(result.episode, "learned", r)));
    }

    let metrics_path = out_dir.join("metrics.csv");
    write_rows(&metrics_path, &rows)?;
    let progress_path = out_dir.join("training_progress.csv");
    write_rows(&progress_path, &progress)?;
    let checkpoint_path = out_dir.join("checkpoint.json");
    save_checkpoint(&checkpoint_path, &bundle)?;

    let written = read_metrics(&metrics_path)?;
    let summary = summarize(&written, config, "learned", eval_start);
    let summary_path = out_dir.join("summary.json");
    write_summary(&summary_path, &summary)?;
    Ok((
        RunArtifacts {
            metrics_path,
            summary_path,
            progress_path: Some(progress_path),
            checkpoint_path: Some(checkpoint_path),
            summary,
        },
        bundle,
    ))
}

/// Run one baseline policy for the configured episodes and summarize the
/// final `eval_episodes` of them.
fn run_baseline(
    config: &ScenarioConfig,
    policy: &Policy,
    out_dir: &Path,
) -> Result<RunArtifacts, HarnessError> {
    fs::create_dir_all(out_dir)?;
    let episodes = config.learning.episodes;
    let results = evaluate_episodes(config, policy, None, 1..=episodes)?;
    let name = policy.name();
    let rows: Vec<MetricsRow> = results
        .iter()
        .flat_map(|result| {
            result.records.iter().map(|r| MetricsRow::from_record(result.episode, &name, r))
        })
        .collect();
    let metrics_path = out_dir.join("metrics.csv");
    write_rows(&metrics_path, &rows)?;
    let eval_start = (episodes.saturating_sub(config.learning.eval_episodes) + 1).max(1);
    let written = read_metrics(&metrics_path)?;
    let summary = summarize(&written, config, &name, eval_start);
    let summary_path = out_dir.join("summary.json");
    write_summary(&summary_path, &summary)?;
    Ok(RunArtifacts { metrics_path, summary_path, progress_path: None, checkpoint_path: None, summary })
}

/// Execute the configured policy end to end, writing all artifacts under
/// `out_dir`. Also drops the resolved configuration next to them.
pub fn run_scenario(config: &ScenarioConfig, out_dir: &Path) -> Result<RunArtifacts, HarnessError> {
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("resolved_config.toml"), config.to_toml())?;
    match config.policy()? {
        Policy::Learned => run_learned(config, out_dir).map(|(artifacts, _)| artifacts),
        policy => run_baseline(config, &policy, out_dir),
    }
}

/// Per-policy aggregates of a comparison, ratios taken against the baseline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyComparison {
    pub policy: String,
    pub peak_served_per_subframe: f64,
    pub peak_latency_slots: Option<f64>,
    pub served_ratio_vs_baseline: f64,
    pub latency_ratio_vs_baseline: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub baseline: String,
    pub peak_window: (u32, u32),
    pub eval_episodes: u32,
    pub policies: Vec<PolicyComparison>,
}

/// Evaluate every policy on the same evaluation episode indices (training
/// the learned policy first), then emit a per-subframe mean series with
/// ratio columns against the baseline, plus a JSON summary.
///
/// The baseline is `scg-baseline` when present, otherwise the first policy.
pub fn compare_policies(
    config: &ScenarioConfig,
    policies: &[Policy],
    out_dir: &Path,
) -> Result<ComparisonSummary, HarnessError> {
    if policies.len() < 2 {
        return Err(HarnessError::Feasibility("compare needs at least two policies".into()));
    }
    fs::create_dir_all(out_dir)?;
    let eval_start = config.learning.episodes + 1;
    let eval_end = config.learning.episodes + config.learning.eval_episodes;
    let subframes = config.traffic.duration_ms;

    let mut per_policy_rows: Vec<Vec<MetricsRow>> = Vec::new();
    for policy in policies {
        let name = policy.name();
        let rows = match policy {
            Policy::Learned => {
                let (artifacts, _) = run_learned(config, &out_dir.join("learned"))?;
                read_metrics(&artifacts.metrics_path)?
                    .into_iter()
                    .filter(|r| r.episode >= eval_start)
                    .collect()
            }
            other => {
                let results = evaluate_episodes(config, other, None, eval_start..=eval_end)?;
                let rows: Vec<MetricsRow> = results
                    .iter()
                    .flat_map(|result| {
                        result
                            .records
                            .iter()
                            .map(|r| MetricsRow::from_record(result.episode, &name, r))
                    })
                    .collect();
                let dir = out_dir.join(name.replace(':', "_").replace(',', "_"));
                fs::create_dir_all(&dir)?;
                write_rows(&dir.join("metrics.csv"), &rows)?;
                rows
            }
        };
        per_policy_rows.push(rows);
    }

    let baseline_index = policies
        .iter()
        .position(|p| matches!(p, Policy::ScgBaseline))
        .unwrap_or(0);

    // Per-subframe means across evaluation episodes.
    let mut served = vec![vec![0.0f64; subframes as usize]; policies.len()];
    let mut latency = vec![vec![(0.0f64, 0.0f64); subframes as usize]; policies.len()];
    for (p, rows) in per_policy_rows.iter().enumerate() {
        let mut counts = vec![0u32; subframes as usize];
        for row in rows {
            let idx = (row.subframe - 1) as usize;
            served[p][idx] += row.n_suc as f64;
            counts[idx] += 1;
            if let Some(l) = row.avg_latency_slots {
                let w = row.n_suc as f64;
                latency[p][idx].0 += l * w;
                latency[p][idx].1 += w;
            }
        }
        for (s, &c) in served[p].iter_mut().zip(&counts) {
            *s /= c.max(1) as f64;
        }
    }

    let comparison_path = out_dir.join("comparison.csv");
    let mut writer = csv::Writer::from_path(&comparison_path)?;
    let mut header = vec!["subframe".to_string()];
    for policy in policies {
        header.push(format!("served_{}", policy.name()));
        header.push(format!("latency_slots_{}", policy.name()));
    }
    for (p, policy) in policies.iter().enumerate() {
        if p != baseline_index {
            header.push(format!("served_ratio_{}", policy.name()));
            header.push(format!("latency_ratio_{}", policy.name()));
        }
    }
    writer.write_record(&header)?;
    let fmt = |v: f64| format!("{v}");
    for t in 0..subframes as usize {
        let mut record = vec![(t + 1).to_string()];
        for p in 0..policies.len() {
            record.push(fmt(served[p][t]));
            let (ws, w) = latency[p][t];
            record.push(if w > 0.0 { fmt(ws / w) } else { String::new() });
        }
        for p in 0..policies.len() {
            if p != baseline_index {
                let base = served[baseline_index][t];
                record.push(if base > 0.0 { fmt(served[p][t] / base) } else { String::new() });
                let (ws, w) = latency[p][t];
                let (bs, bw) = latency[baseline_index][t];
                record.push(if w > 0.0 && bw > 0.0 && bs > 0.0 {
                    fmt((ws / w) / (bs / bw))
                } else {
                    String::new()
                });
            }
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;

    let per_policy_summaries: Vec<RunSummary> = per_policy_rows
        .iter()
        .zip(policies)
        .map(|(rows, p)| summarize(rows, config, &p.name(), eval_start))
        .collect();
    let base = &per_policy_summaries[baseline_index];
    let summary = ComparisonSummary {
        baseline: policies[baseline_index].name(),
        peak_window: config.peak_window,
        eval_episodes: config.learning.eval_episodes,
        policies: per_policy_summaries
            .iter()
            .map(|s| PolicyComparison {
                policy: s.policy.clone(),
                peak_served_per_subframe: s.peak_served_per_subframe,
                peak_latency_slots: s.peak_latency_slots,
                served_ratio_vs_baseline: if base.peak_served_per_subframe > 0.0 {
                    s.peak_served_per_subframe / base.peak_served_per_subframe
                } else {
                    f64::NAN
                },
                latency_ratio_vs_baseline: match (s.peak_latency_slots, base.peak_latency_slots) {
                    (Some(a), Some(b)) if b > 0.0 => Some(a / b),
                    _ => None,
                },
            })
            .collect(),
    };
    let mut file = fs::File::create(out_dir.join("comparison_summary.json"))?;
    serde_json::to_writer_pretty(&mut file, &summary)?;
    file.write_all(b"\n")?;
    Ok(summary)
}

/// One grant-count's aggregates within a sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_cg: usize,
    pub ctu_catalog_size: usize,
    pub start_catalog_size: usize,
    pub peak_served_per_subframe: f64,
    pub peak_latency_slots: Option<f64>,
    pub mean_served_per_subframe: f64,
}

/// Train and evaluate the learned policy for each grant count. Infeasible
/// counts are skipped with a warning on stderr.
pub fn sweep_ncg(
    config: &ScenarioConfig,
    ncg_list: &[usize],
    out_dir: &Path,
) -> Result<Vec<SweepRow>, HarnessError> {
    fs::create_dir_all(out_dir)?;
    let mut rows = Vec::new();
    for &n_cg in ncg_list {
        let mut scoped = config.clone();
        scoped.grants.n_cg = n_cg;
        scoped.policy = "learned".into();
        let catalog = match scoped.catalog() {
            Ok(c) => c,
            Err(err) => {
                eprintln!("skipping n_cg={n_cg}: {err}");
                continue;
            }
        };
        let (artifacts, _) = run_learned(&scoped, &out_dir.join(format!("ncg_{n_cg}")))?;
        rows.push(SweepRow {
            n_cg,
            ctu_catalog_size: catalog.ctu_actions.len(),
            start_catalog_size: catalog.start_actions.len(),
            peak_served_per_subframe: artifacts.summary.peak_served_per_subframe,
            peak_latency_slots: artifacts.summary.peak_latency_slots,
            mean_served_per_subframe: artifacts.summary.mean_served_per_subframe,
        });
    }
    let mut file = fs::File::create(out_dir.join("sweep_summary.json"))?;
    serde_json::to_writer_pretty(&mut file, &rows)?;
    file.write_all(b"\n")?;
    Ok(rows)
}

/// One action-trace row: the greedy pick of both agents for a subframe.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActionTraceRow {
    pub subframe: u32,
    pub ctu_action_index: usize,
    pub start_action_index: usize,
}

/// Replay one greedy evaluation episode from a checkpoint and record the
/// chosen action indices per subframe.
pub fn emit_action_trace(
    config: &ScenarioConfig,
    checkpoint_path: &Path,
    out_path: &Path,
) -> Result<Vec<ActionTraceRow>, HarnessError> {
    let bundle = load_checkpoint(checkpoint_path, config)?;
    let episode = config.learning.episodes + 1;
    let results =
        evaluate_episodes(config, &Policy::Learned, Some(&bundle), episode..=episode)?;
    let rows: Vec<ActionTraceRow> = results[0]
        .records
        .iter()
        .map(|r| ActionTraceRow {
            subframe: r.subframe,
            ctu_action_index: r.ctu_action,
            start_action_index: r.start_action,
        })
        .collect();
    if let Some(parent) = out_path.parent() {
        fs::create_dir_all(parent)?;
    }
    write_rows(out_path, &rows)?;
    Ok(rows)
}

/// Both catalogs as JSON lines, one indexed action per line.
pub fn catalog_jsonl(catalog: &ActionCatalog) -> String {
    let mut out = String::new();
    for (index, action) in catalog.ctu_actions.iter().enumerate() {
        out.push_str(
            &serde_json::json!({ "agent": "ctu", "index": index, "action": action }).to_string(),
        );
        out.push('\n');
    }
    for (index, action) in catalog.start_actions.iter().enumerate() {
        out.push_str(
            &serde_json::json!({ "agent": "start", "index": index, "action": action }).to_string(),
        );
        out.push('\n');
    }
    out
}
