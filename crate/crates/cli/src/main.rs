use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vlascale::eval::{
    alias_report, deanonymize_report, load_tasks, parse_tasks, EvalConfig, IterationOrder,
    PersistentSession, DEFAULT_TASKS,
};
use vlascale::mixture::{
    balanced_iterator, mixture_report, MixtureConfig, MixtureTag, PRETRAINING_REGISTRY,
};
use vlascale::policy::{
    grad_check, make_flow_batch, sample_indices, source_from_config, train, FlowObjective,
    MotPolicy, RunConfig, Schedule, TrainOptions,
};
use vlascale::se3::{decode_chunk, encode_chunk, CoordinateMode, Pose, PoseChunk, RotVec};

#[derive(Parser)]
#[command(
    name = "vlascale",
    version,
    about = "Action spaces, data mixtures, flow policy training and blind evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect the pretraining data mixture.
    #[command(subcommand)]
    Mix(MixCommand),
    /// End-effector action encoding utilities.
    #[command(subcommand)]
    Actions(ActionsCommand),
    /// Train the dual-expert policy and stream metrics as JSON lines.
    Train(TrainArgs),
    /// Compare analytic and finite-difference gradients.
    Gradcheck(GradcheckArgs),
    /// Blinded evaluation sessions.
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Args)]
struct RegistryArgs {
    /// Registry file; the built-in pretraining registry when omitted.
    #[arg(long)]
    registry: Option<PathBuf>,
    /// d1, d2, d3, d4 or custom.
    #[arg(long, default_value = "d4")]
    mixture: String,
}

#[derive(Subcommand)]
enum MixCommand {
    /// Print raw and effective frame counts per dataset.
    Report(RegistryArgs),
    /// Print weighted draws, one JSON object per line.
    Sample {
        #[command(flatten)]
        registry: RegistryArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        n: usize,
    },
}

#[derive(Subcommand)]
enum ActionsCommand {
    /// Encode and decode random pose chunks and report the worst error.
    Roundtrip {
        /// world_rel, world_delta, eef_rel or eef_delta.
        #[arg(long, default_value = "eef_rel")]
        mode: String,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 16)]
        horizon: usize,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// Run file with [model], [train] and [data] tables.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// two_stage or stage2_only.
    #[arg(long, default_value = "two_stage")]
    schedule: String,
    /// Total optimizer steps.
    #[arg(long, default_value_t = 200)]
    steps: usize,
    /// Checkpoint directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 256)]
    params: usize,
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Create a session log with groups, aliases and queues.
    Init {
        /// Comma-separated model identifiers.
        #[arg(long, value_delimiter = ',', required = true)]
        models: Vec<String>,
        /// Task file; the built-in task set when omitted.
        #[arg(long)]
        tasks: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        group_size: usize,
        #[arg(long, default_value_t = 10)]
        trials: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// task_outer or group_outer.
        #[arg(long, default_value = "task_outer")]
        order: String,
        #[arg(long, default_value = "eval_session.jsonl")]
        log: PathBuf,
    },
    /// Serve the operator API over an existing session log.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value = "eval_session.jsonl")]
        log: PathBuf,
        /// Secret required by the report endpoint.
        #[arg(long, env = "VLASCALE_EXPERIMENTER_TOKEN")]
        token: String,
    },
    /// Print per-model, per-task scores from a session log.
    Report {
        #[arg(long, default_value = "eval_session.jsonl")]
        log: PathBuf,
        /// Resolve aliases to model identifiers.
        #[arg(long)]
        deanonymize: bool,
        /// Emit JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            ExitCode::FAILURE
        }
    }
}

/// Joins the error chain, skipping causes whose text a wrapper already repeats.
fn one_line(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !msg.contains(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    msg.replace('\n', " ")
}

fn run(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Mix(MixCommand::Report(r)) => {
            let cfg = load_registry(&r)?;
            print!("{}", mixture_report(&cfg).render());
        }
        Command::Mix(MixCommand::Sample { registry, seed, n }) => {
            let cfg = load_registry(&registry)?;
            let mut out = std::io::stdout().lock();
            for d in balanced_iterator(&cfg, seed)?.take(n) {
                let line = serde_json::json!({
                    "dataset": d.dataset,
                    "effective_index": d.effective_index,
                    "raw_frame": d.raw_frame,
                });
                writeln!(out, "{line}")?;
            }
        }
        Command::Actions(ActionsCommand::Roundtrip {
            mode,
            n,
            seed,
            horizon,
        }) => {
            return roundtrip(&mode, n, seed, horizon);
        }
        Command::Train(a) => run_train(a)?,
        Command::Gradcheck(a) => return run_gradcheck(a),
        Command::Eval(e) => run_eval(e)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn load_registry(a: &RegistryArgs) -> Result<MixtureConfig> {
    let tag: MixtureTag = a.mixture.parse()?;
    Ok(match &a.registry {
        Some(p) => {
            MixtureConfig::load(p, tag).with_context(|| format!("config_parse: {}", p.display()))?
        }
        None => MixtureConfig::parse(PRETRAINING_REGISTRY, tag)?,
    })
}

fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    let t = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let axis = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    )
    .try_normalize(1e-6)
    .unwrap_or_else(Vector3::z);
    let angle = rng.random_range(0.0..std::f64::consts::PI - 1e-3);
    Pose::new(t, RotVec::new(axis * angle))
}

fn roundtrip(mode: &str, n: usize, seed: u64, horizon: usize) -> Result<ExitCode> {
    let mode: CoordinateMode = mode.parse()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut t_err, mut r_err) = (0.0f64, 0.0f64);
    for _ in 0..n {
        let chunk = PoseChunk::new((0..=horizon).map(|_| random_pose(&mut rng)).collect())?;
        let back = decode_chunk(&encode_chunk(&chunk, mode), chunk.start(), mode)?;
        for (a, b) in chunk.poses().iter().zip(back.poses()) {
            t_err = t_err.max((a.translation - b.translation).norm());
            r_err = r_err.max((a.rotation() - b.rotation()).norm());
        }
    }
    let ok = t_err < 1e-9 && r_err < 1e-9;
    println!(
        "{}",
        serde_json::json!({
            "mode": mode.as_str(),
            "chunks": n,
            "horizon": horizon,
            "max_translation_error": t_err,
            "max_rotation_error": r_err,
            "pass": ok,
        })
    );
    Ok(if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn load_run(path: Option<&Path>) -> Result<RunConfig> {
    Ok(match path {
        Some(p) => RunConfig::load(p).context("config_parse")?,
        None => RunConfig::default(),
    })
}

fn run_train(a: TrainArgs) -> Result<()> {
    let cfg = load_run(a.config.as_deref())?;
    let schedule = Schedule::from_name(&a.schedule, a.steps)?;
    let mut policy = MotPolicy::new(cfg.model.clone())?;
    let mut source = source_from_config(&cfg.data, &cfg.model, a.seed)?;
    let opts = TrainOptions {
        schedule,
        seed: a.seed,
        checkpoint_dir: a.out,
    };
    let mut out = std::io::stdout().lock();
    let mut write_err = None;
    let outcome = train(
        &mut policy,
        &cfg.train,
        source.as_mut(),
        &opts,
        &mut |rec, _| {
            if write_err.is_none() {
                let line = serde_json::to_string(rec).expect("metric record serializes");
                if let Err(e) = writeln!(out, "{line}") {
                    write_err = Some(e);
                }
            }
        },
    )?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    eprintln!(
        "eval loss {:.6} -> {:.6}; {} checkpoint(s)",
        outcome.initial_eval_loss,
        outcome.final_eval_loss,
        outcome.checkpoints.len()
    );
    Ok(())
}

fn run_gradcheck(a: GradcheckArgs) -> Result<ExitCode> {
    let cfg = load_run(a.config.as_deref())?;
    let policy = MotPolicy::new(cfg.model.clone())?;
    let mut source = source_from_config(&cfg.data, &cfg.model, a.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let batch = make_flow_batch(source.as_mut(), 2, &cfg.train, false, &mut rng)?;
    let indices = sample_indices(policy.params().num_scalars(), a.params, a.seed);
    let checked = indices.len();
    let mut obj = FlowObjective {
        policy,
        batch: &batch,
    };
    let err = grad_check(&mut obj, &indices, a.eps)?;
    let ok = err < a.tolerance;
    println!(
        "{}",
        serde_json::json!({ "params_checked": checked, "max_relative_error": err, "tolerance": a.tolerance, "pass": ok })
    );
    Ok(if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn run_eval(cmd: EvalCommand) -> Result<()> {
    match cmd {
        EvalCommand::Init {
            models,
            tasks,
            group_size,
            trials,
            seed,
            order,
            log,
        } => {
            let tasks = match tasks {
                Some(p) => {
                    load_tasks(&p).with_context(|| format!("config_parse: {}", p.display()))?
                }
                None => parse_tasks(DEFAULT_TASKS)?,
            };
            let order: IterationOrder = order.parse()?;
            let cfg = EvalConfig {
                models,
                tasks,
                group_size,
                trials_per_model: trials,
                seed,
                order,
            };
            let s = PersistentSession::create(&log, cfg)?;
            let groups = s.session().groups().len();
            let queues = groups * s.session().config().tasks.len();
            println!(
                "initialized {} with {groups} group(s) and {queues} queue(s)",
                log.display()
            );
        }
        EvalCommand::Serve {
            port,
            host,
            log,
            token,
        } => {
            if token.is_empty() {
                bail!("bad_request: experimenter token must not be empty");
            }
            let session = PersistentSession::open(&log)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind((host.as_str(), port)).await?;
                println!("listening on http://{}", listener.local_addr()?);
                std::io::stdout().flush()?;
                vlascale::eval::serve(listener, vlascale::eval::router(session, token)).await
            })?;
        }
        EvalCommand::Report {
            log,
            deanonymize,
            json,
        } => {
            let s = PersistentSession::open(&log)?;
            let report = if deanonymize {
                deanonymize_report(s.session())
            } else {
                alias_report(s.session())
            };
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.render());
            }
        }
    }
    Ok(())
}
