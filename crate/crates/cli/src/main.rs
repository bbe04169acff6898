use std::io::{self, BufReader, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use dcrec::config::RunConfig;
use dcrec::pipeline;
use dcrec::request::PolicyKind;
use dcrec::simeval::bridge::{bridge_serve, serve_stream};

#[derive(Parser, Debug)]
#[command(name = "dcrec", version, about = "Device-cloud collaborative recommendation simulator")]
struct Cli {
    /// TOML run config. Without one, built-in defaults drive the synthetic run.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Directory holding every artifact of the run.
    #[arg(long, global = true, env = "DCREC_RUN_DIR")]
    run_dir: Option<PathBuf>,

    /// Tab-separated event log to use instead of synthetic data.
    #[arg(long, global = true, env = "DCREC_EVENTS")]
    events: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Slate length.
    #[arg(long, global = true)]
    k: Option<usize>,

    /// Fusion weight of the cloud scores.
    #[arg(long, global = true)]
    alpha: Option<f64>,

    /// Request budget, a fraction of evaluation steps.
    #[arg(long, global = true)]
    budget: Option<f64>,

    #[arg(long, global = true, value_parser = parse_policy)]
    policy: Option<PolicyKind>,

    #[arg(long, global = true)]
    delta_t: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the train/real-time/lagged splits and write a snapshot.
    Prepare,
    /// Train the cloud and device rankers and write checkpoints.
    Train,
    /// Compute the request threshold on the calibration cohort.
    Calibrate,
    /// Evaluate collaborative inference on the test cohort.
    Eval,
    /// Run the training, inference, slate-length and request-policy ablations.
    Ablate {
        /// Comma-separated seeds; defaults to `sim.seeds`.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// Serve cloud slates over line-delimited JSON.
    Bridge {
        #[arg(long, default_value = "127.0.0.1:7878")]
        addr: String,
        /// Exit after this many connections.
        #[arg(long)]
        max_connections: Option<usize>,
        /// Serve one session on stdin/stdout instead of TCP.
        #[arg(long)]
        stdio: bool,
    },
    /// Print the effective config as TOML.
    Config,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Prepare => "prepare",
            Command::Train => "train",
            Command::Calibrate => "calibrate",
            Command::Eval => "eval",
            Command::Ablate { .. } => "ablate",
            Command::Bridge { .. } => "bridge",
            Command::Config => "config",
        }
    }
}

fn parse_policy(s: &str) -> Result<PolicyKind, String> {
    match s {
        "inconsistency" => Ok(PolicyKind::Inconsistency),
        "random" => Ok(PolicyKind::Random),
        _ => Err(format!("unknown policy {s:?}; expected inconsistency or random")),
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(d) = &cli.run_dir {
        cfg.paths.run_dir = d.clone();
    }
    if let Some(e) = &cli.events {
        cfg.paths.events = Some(e.clone());
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(k) = cli.k {
        cfg.sim.k = k;
    }
    if let Some(a) = cli.alpha {
        cfg.fusion.alpha = a;
    }
    if let Some(b) = cli.budget {
        cfg.request.budget = b;
    }
    if let Some(p) = cli.policy {
        cfg.request.policy = p;
    }
    if let Some(d) = cli.delta_t {
        cfg.data.delta_t = d;
    }
    cfg.validate()?;
    cfg.check_paths()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let mut out = io::stdout().lock();
    match &cli.command {
        Command::Prepare => {
            let s = pipeline::prepare(&cfg)?;
            writeln!(out, "{}", serde_json::to_string(&s)?)?;
        }
        Command::Train => {
            let s = pipeline::train(&cfg)?;
            for r in &s.reports {
                writeln!(
                    out,
                    "{}: {} epochs, final loss {}",
                    r.phase,
                    r.epochs.len(),
                    r.final_loss().map_or("n/a".into(), |l| format!("{l:.5}"))
                )?;
            }
            writeln!(out, "cloud checksum {:016x}", s.cloud_checksum)?;
            writeln!(out, "device checksum {:016x}", s.device_checksum)?;
        }
        Command::Calibrate => {
            let t = pipeline::calibrate(&cfg)?;
            let v = t.value.map_or("never".into(), |v| format!("{v:.6}"));
            writeln!(
                out,
                "threshold {v} (budget {}, {} of {} calibration users at or above)",
                t.budget, t.realized, t.n
            )?;
        }
        Command::Eval => {
            let r = pipeline::eval(&cfg)?;
            pipeline::write_brief(&mut out, &r)?;
        }
        Command::Ablate { seeds } => {
            let seeds = if seeds.is_empty() { cfg.sim.seeds.clone() } else { seeds.clone() };
            let reports = pipeline::ablate(&cfg, &seeds)?;
            for (arm, v) in pipeline::ndcg10_by_arm(&reports) {
                writeln!(out, "{arm:<28} ndcg@10 {v:.4}")?;
            }
        }
        Command::Bridge {
            addr,
            max_connections,
            stdio,
        } => {
            let cloud = pipeline::load_cloud(&cfg)?;
            if *stdio {
                drop(out);
                serve_stream(&cloud, BufReader::new(io::stdin().lock()), io::stdout().lock())?;
            } else {
                let listener = TcpListener::bind(addr).with_context(|| format!("binding {addr}"))?;
                log::info!("serving slates on {}", listener.local_addr()?);
                bridge_serve(&cloud, &listener, *max_connections)?;
            }
        }
        Command::Config => {
            write!(out, "{}", cfg.to_toml_string()?)?;
        }
    }
    Ok(())
}

/// Machine-readable failure line on stderr.
fn error_line(command: &str, err: &anyhow::Error) -> serde_json::Value {
    let mut v = serde_json::json!({
        "status": "error",
        "command": command,
        "error": format!("{err:#}"),
    });
    if let Some(dcrec::Error::MissingArtifact { artifact, producer }) = err.downcast_ref::<dcrec::Error>() {
        v["missing_artifact"] = artifact.clone().into();
        v["run_first"] = (*producer).into();
    }
    v
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(cli.command.name(), &e));
            ExitCode::FAILURE
        }
    }
}
