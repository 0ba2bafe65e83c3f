//! Command-line surface and the implementation of each command.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use pica_core::datagen::build_dataset;
use pica_core::policy_opt::{
    eval_seed, evaluate, task_pools, train_policy_with_source, Arm, EvalReport, PolicyCheckpoint,
};
use pica_core::reward_model::{train_reward_model, RmCheckpoint};
use pica_core::shaping::{LocalRewardModel, StepRewardSource};
use pica_core::trajectory::Dataset;
use pica_core::world::{generate_world, KnowledgeWorld};
use pica_service::{RewardClient, RewardService};
use serde::Serialize;
use tracing::info;

use crate::config::Config;
use crate::error::CliError;
use crate::report::{histogram, hop_rows, pivot_stats, step_rows, wide_curves, CurveRow, EvalRecord};
use crate::run_dir::{read_artifact, Input, RunDir};

#[derive(Debug, Parser)]
#[command(name = "pica", version, about = "PiCA desk lab: data, reward model, policy training and export")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON config with dotted keys; unset keys keep their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a key, e.g. `--set penalty.alpha=1.3`; repeatable, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Parent directory of run directories.
    #[arg(long, default_value = "runs", global = true)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic knowledge world.
    GenWorld,
    /// Generate the world, tasks and the pivot-labelled trajectory corpus.
    GenData,
    /// Train the reward model on a corpus.
    TrainRm {
        /// `dataset.jsonl` from gen-data.
        #[arg(long)]
        data: PathBuf,
    },
    /// Serve a reward-model checkpoint over HTTP until interrupted.
    ServeRm {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Address to bind; defaults to the host and port of `reward_model.url`.
        #[arg(long)]
        bind: Option<String>,
    },
    /// Train a policy under one reward arm.
    TrainPolicy {
        #[arg(long)]
        arm: Arm,
        /// Reward-model checkpoint (pica arm).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Fetch PiCA step rewards from `reward_model.url` instead of a local checkpoint.
        #[arg(long, conflicts_with = "checkpoint")]
        remote: bool,
    },
    /// Evaluate a policy checkpoint on held-out tasks, per hop count.
    Eval {
        #[arg(long)]
        policy: PathBuf,
    },
    /// Train all three reward arms with shared seeds and join their curves.
    Ablate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Seeds to run; each seeds both the world and training. Defaults to `seed`.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// Write plot-ready CSV from earlier artifacts.
    Export {
        /// Reward-model checkpoint; with --data, yields step-reward tables and histograms.
        #[arg(long, requires = "data")]
        checkpoint: Option<PathBuf>,
        #[arg(long, requires = "checkpoint")]
        data: Option<PathBuf>,
        /// Curve CSVs from train-policy or ablate; repeatable.
        #[arg(long)]
        curves: Vec<PathBuf>,
        /// `eval.json` or `evals.json` files; repeatable.
        #[arg(long)]
        eval: Vec<PathBuf>,
        #[arg(long, default_value_t = 20)]
        bins: usize,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenWorld => "gen-world",
            Command::GenData => "gen-data",
            Command::TrainRm { .. } => "train-rm",
            Command::ServeRm { .. } => "serve-rm",
            Command::TrainPolicy { .. } => "train-policy",
            Command::Eval { .. } => "eval",
            Command::Ablate { .. } => "ablate",
            Command::Export { .. } => "export",
        }
    }
}

/// Runs one command and returns its run directory.
pub fn run(cli: Cli) -> Result<PathBuf, CliError> {
    let config = Config::load(cli.global.config.as_deref(), &cli.global.overrides)?;
    let out = cli.global.out.as_path();
    let name = cli.command.name();
    let dir = match cli.command {
        Command::GenWorld => gen_world(&config, out)?,
        Command::GenData => gen_data(&config, out)?,
        Command::TrainRm { data } => train_rm(&config, out, &data)?,
        Command::ServeRm { checkpoint, bind } => serve_rm(&config, out, &checkpoint, bind)?,
        Command::TrainPolicy { arm, checkpoint, remote } => train_one(&config, out, arm, checkpoint.as_deref(), remote)?,
        Command::Eval { policy } => eval(&config, out, &policy)?,
        Command::Ablate { checkpoint, seeds } => ablate(&config, out, checkpoint.as_deref(), &seeds)?,
        Command::Export { checkpoint, data, curves, eval, bins } => {
            export(&config, out, checkpoint.as_deref().zip(data.as_deref()), &curves, &eval, bins)?
        }
    };
    info!(command = name, dir = %dir.path().display(), "done");
    Ok(dir.path().to_path_buf())
}

fn world(config: &Config) -> Result<KnowledgeWorld, CliError> {
    generate_world(&config.world()).map_err(|e| CliError::Usage(format!("world.*: {e}")))
}

fn gen_world(config: &Config, out: &Path) -> Result<RunDir, CliError> {
    let w = world(config)?;
    let dir = RunDir::create(out, "gen-world", config, &[])?;
    dir.write_json("world.json", &w)?;
    eprintln!("world: {} entities, {} relations, {} facts", w.num_entities(), w.num_relations(), w.facts().len());
    Ok(dir)
}

fn gen_data(config: &Config, out: &Path) -> Result<RunDir, CliError> {
    let output = build_dataset(&config.datagen()).context("generating corpus")?;
    let dir = RunDir::create(out, "gen-data", config, &[])?;
    dir.write_json("world.json", &output.world)?;
    let tasks: String = output.tasks.iter().map(|t| serde_json::to_string(t).expect("task serializes") + "\n").collect();
    dir.write("tasks.jsonl", tasks.as_bytes())?;
    dir.write("dataset.jsonl", output.dataset.to_jsonl().as_bytes())?;
    dir.write_json("report.json", &output.report)?;
    let r = &output.report;
    eprintln!(
        "corpus: {} records ({} successes, {} failures, {} filtered); {} pivot and {} non-pivot search turns",
        r.records, r.successes, r.failures, r.filtered, r.pivot_steps, r.non_pivot_steps
    );
    Ok(dir)
}

fn load_dataset(bytes: &[u8]) -> Result<Dataset, CliError> {
    Ok(Dataset::from_jsonl(bytes).context("parsing dataset")?)
}

fn load_checkpoint(path: &Path) -> Result<(RmCheckpoint, Vec<u8>), CliError> {
    let bytes = read_artifact(path, "reward model")?;
    let ckpt = RmCheckpoint::from_slice(&bytes, &path.display().to_string()).context("loading reward model")?;
    Ok((ckpt, bytes))
}

fn train_rm(config: &Config, out: &Path, data: &Path) -> Result<RunDir, CliError> {
    let bytes = read_artifact(data, "dataset")?;
    let dataset = load_dataset(&bytes)?;
    let train = config.rm_train();
    let model = train_reward_model(&dataset, &train).context("training reward model")?;
    let dir = RunDir::create(out, "train-rm", config, &[Input { role: "dataset", bytes }])?;
    let ckpt = RmCheckpoint::new(model, &train);
    dir.write("reward_model.json", (ckpt.to_json() + "\n").as_bytes())?;
    dir.write_csv("rm_history.csv", &ckpt.metadata.history)?;
    let rows = step_rows(&ckpt.params, &dataset, &config.scaling()).context("scoring corpus")?;
    let stats = pivot_stats(&rows);
    dir.write_json("rm_summary.json", &stats)?;
    eprintln!(
        "reward model: pivot {:.3} vs non-pivot {:.3} mean normalized reward; {:.1}% of pivot turns positive",
        stats.mean_normalized_pivot,
        stats.mean_normalized_non_pivot,
        100.0 * stats.pivot_positive_deployed_fraction
    );
    Ok(dir)
}

fn serve_rm(config: &Config, out: &Path, checkpoint: &Path, bind: Option<String>) -> Result<RunDir, CliError> {
    let bytes = read_artifact(checkpoint, "reward model")?;
    let service = RewardService::from_checkpoint_bytes(&bytes, config.service()).context("loading reward model")?;
    let dir = RunDir::create(out, "serve-rm", config, &[Input { role: "checkpoint", bytes }])?;
    let bind = bind.unwrap_or_else(|| config.reward_bind());
    let rt = tokio::runtime::Runtime::new().context("starting runtime")?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&bind).await.with_context(|| format!("binding {bind}"))?;
        let addr = listener.local_addr()?;
        println!("serving reward model {} on http://{addr}/get_reward", service.model_version());
        pica_service::serve(Arc::new(service), listener, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        anyhow::Ok(())
    })?;
    Ok(dir)
}

fn final_record(seed: u64, arm: Arm, step: usize, report: EvalReport) -> EvalRecord {
    EvalRecord { seed, arm, step, report }
}

/// Trains one arm; `source` is only consulted by the pica arm.
fn train_arm(
    config: &Config,
    arm: Arm,
    source: Option<&dyn StepRewardSource>,
) -> Result<(Vec<CurveRow>, EvalRecord, PolicyCheckpoint), CliError> {
    let w = world(config)?;
    let cfg = config.policy_train();
    let run = train_policy_with_source(&w, arm, source, &cfg)?;
    let curve = run.curve.iter().map(|p| CurveRow::new(cfg.seed, p)).collect();
    eprintln!(
        "seed {} {arm}: held-out success {:.3}, F1 {:.3}, mean turns {:.2}",
        cfg.seed, run.final_eval.success_rate, run.final_eval.f1, run.final_eval.mean_turns
    );
    Ok((curve, final_record(cfg.seed, arm, cfg.updates, run.final_eval), run.checkpoint))
}

fn missing_rm() -> CliError {
    CliError::Missing { what: "reward model", detail: "pass --checkpoint <reward_model.json> or --remote".into() }
}

fn train_one(config: &Config, out: &Path, arm: Arm, checkpoint: Option<&Path>, remote: bool) -> Result<RunDir, CliError> {
    let mut inputs = Vec::new();
    let (client, params, local);
    let source: Option<&dyn StepRewardSource> = match arm {
        Arm::Pica if remote => {
            client = RewardClient::new(config.str("reward_model.url"));
            let health = client.health()?;
            inputs.push(Input { role: "reward_model_version", bytes: health.model_version.into_bytes() });
            Some(&client)
        }
        Arm::Pica => {
            let (ckpt, bytes) = load_checkpoint(checkpoint.ok_or_else(missing_rm)?)?;
            inputs.push(Input { role: "checkpoint", bytes });
            params = ckpt.params;
            local = LocalRewardModel { params: &params, scaling: config.scaling() };
            Some(&local)
        }
        _ => None,
    };
    let (curve, record, ckpt) = train_arm(config, arm, source)?;
    let dir = RunDir::create(out, "train-policy", config, &inputs)?;
    dir.write_json("policy.json", &ckpt)?;
    dir.write_csv("curve.csv", &curve)?;
    let records = vec![record];
    dir.write_json("eval.json", &records)?;
    dir.write_csv("eval_per_hop.csv", &hop_rows(&records))?;
    Ok(dir)
}

type TaskKey = (pica_core::world::EntityId, Vec<pica_core::world::RelationId>);

fn eval(config: &Config, out: &Path, policy: &Path) -> Result<RunDir, CliError> {
    let bytes = read_artifact(policy, "policy checkpoint")?;
    let ckpt: PolicyCheckpoint = serde_json::from_slice(&bytes).context("parsing policy checkpoint")?;
    let w = world(config)?;
    let cfg = config.policy_train();
    let (_, held_out) = task_pools(&w, &cfg)?;
    let (trained_on, _) = task_pools(&w, &ckpt.config)?;
    let seen: HashSet<TaskKey> = trained_on.iter().map(|t| (t.question.start, t.question.relations.clone())).collect();
    let tasks: Vec<_> = held_out.into_iter().filter(|t| !seen.contains(&(t.question.start, t.question.relations.clone()))).collect();
    if tasks.is_empty() {
        return Err(CliError::Usage("no held-out tasks left after removing the training pool".into()));
    }
    let report = evaluate(&w, &ckpt.params, &tasks, &cfg.env, cfg.ppo.temperature, cfg.eval_rollouts, eval_seed(cfg.seed));
    let dir = RunDir::create(out, "eval", config, &[Input { role: "policy", bytes }])?;
    for h in &report.per_hop {
        eprintln!("{}-hop: EM {:.3}, F1 {:.3}, mean turns {:.2} over {} episodes", h.hops, h.em, h.f1, h.mean_turns, h.episodes);
    }
    let records = vec![final_record(config.seed(), ckpt.arm, ckpt.step, report)];
    dir.write_json("eval.json", &records)?;
    dir.write_csv("eval_per_hop.csv", &hop_rows(&records))?;
    Ok(dir)
}

#[derive(Serialize)]
struct AblationSummary {
    seed: u64,
    outcome_success: f64,
    penalty_success: f64,
    pica_success: f64,
    pica_minus_outcome: f64,
    outcome_turns: f64,
    penalty_turns: f64,
    pica_turns: f64,
}

fn ablate(config: &Config, out: &Path, checkpoint: Option<&Path>, seeds: &[u64]) -> Result<RunDir, CliError> {
    let (ckpt, bytes) = load_checkpoint(checkpoint.ok_or_else(missing_rm)?)?;
    let rm = LocalRewardModel { params: &ckpt.params, scaling: config.scaling() };
    let seeds = if seeds.is_empty() { vec![config.seed()] } else { seeds.to_vec() };
    let mut curves = Vec::new();
    let mut records = Vec::new();
    let mut summary = Vec::new();
    for &seed in &seeds {
        let mut c = config.clone();
        c.set("seed", &serde_json::json!(seed))?;
        let mut finals = Vec::new();
        for arm in Arm::ALL {
            let (curve, record, _) = train_arm(&c, arm, (arm == Arm::Pica).then_some(&rm as &dyn StepRewardSource))?;
            curves.extend(curve);
            finals.push(record.report.clone());
            records.push(record);
        }
        summary.push(AblationSummary {
            seed,
            outcome_success: finals[0].success_rate,
            penalty_success: finals[1].success_rate,
            pica_success: finals[2].success_rate,
            pica_minus_outcome: finals[2].success_rate - finals[0].success_rate,
            outcome_turns: finals[0].mean_turns,
            penalty_turns: finals[1].mean_turns,
            pica_turns: finals[2].mean_turns,
        });
    }
    let seeds_note = seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
    let dir = RunDir::create(out, "ablate", config, &[Input { role: "checkpoint", bytes }, Input { role: "seeds", bytes: seeds_note.into_bytes() }])?;
    dir.write_csv("ablation_long.csv", &curves)?;
    let (header, rows) = wide_curves(&curves);
    dir.write_table("ablation.csv", &header, &rows)?;
    dir.write_json("evals.json", &records)?;
    dir.write_csv("eval_per_hop.csv", &hop_rows(&records))?;
    dir.write_json("summary.json", &summary)?;
    Ok(dir)
}

fn export(
    config: &Config,
    out: &Path,
    rm: Option<(&Path, &Path)>,
    curves: &[PathBuf],
    evals: &[PathBuf],
    bins: usize,
) -> Result<RunDir, CliError> {
    if rm.is_none() && curves.is_empty() && evals.is_empty() {
        return Err(CliError::Usage("export needs --checkpoint/--data, --curves or --eval".into()));
    }
    let mut inputs = Vec::new();
    let mut tables = None;
    if let Some((checkpoint, data)) = rm {
        let (ckpt, cbytes) = load_checkpoint(checkpoint)?;
        let dbytes = read_artifact(data, "dataset")?;
        let dataset = load_dataset(&dbytes)?;
        inputs.push(Input { role: "checkpoint", bytes: cbytes });
        inputs.push(Input { role: "dataset", bytes: dbytes });
        tables = Some(step_rows(&ckpt.params, &dataset, &config.scaling()).context("scoring corpus")?);
    }
    let mut curve_rows: Vec<CurveRow> = Vec::new();
    for path in curves {
        let bytes = read_artifact(path, "curve csv")?;
        let mut r = csv::Reader::from_reader(bytes.as_slice());
        for row in r.deserialize() {
            curve_rows.push(row.with_context(|| format!("parsing {}", path.display()))?);
        }
        inputs.push(Input { role: "curves", bytes });
    }
    let mut records: Vec<EvalRecord> = Vec::new();
    for path in evals {
        let bytes = read_artifact(path, "eval report")?;
        records.extend(serde_json::from_slice::<Vec<EvalRecord>>(&bytes).with_context(|| format!("parsing {}", path.display()))?);
        inputs.push(Input { role: "eval", bytes });
    }
    let bins_note = bins.to_string().into_bytes();
    inputs.push(Input { role: "bins", bytes: bins_note });

    let dir = RunDir::create(out, "export", config, &inputs)?;
    if let Some(rows) = tables {
        dir.write_csv("step_rewards.csv", &rows)?;
        dir.write_csv("reward_histogram.csv", &histogram(&rows, bins))?;
        dir.write_json("pivot_stats.json", &pivot_stats(&rows))?;
    }
    if !curve_rows.is_empty() {
        dir.write_csv("learning_curves.csv", &curve_rows)?;
        let (header, rows) = wide_curves(&curve_rows);
        dir.write_table("learning_curves_wide.csv", &header, &rows)?;
    }
    if !records.is_empty() {
        dir.write_csv("per_hop.csv", &hop_rows(&records))?;
    }
    Ok(dir)
}
