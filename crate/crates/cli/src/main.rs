//! `safebid` command-line front end.
//!
//! Exit codes: 0 success, 1 engine error, 2 config or usage error. Errors are
//! reported on stderr as one JSON line `{"error": kind, "message": text}`.

use clap::{Args, Parser, Subcommand};
use safebid::config::{parse_config, ConfigError, ExperimentConfig, LearnerKind};
use safebid::ddpg::save_checkpoint;
use safebid::market::{clear_market, MarketInstance, UnitParams};
use safebid::qlearn::save_table;
use safebid::safety::{advance_state, big_m_expand, default_big_m, filter_project, FilterMode, SafetyState};
use safebid::sim::{read_raster, run_training, run_unsafe_ablation, write_artifacts, Learner, RunOutput};
use safebid::verify;
use serde::Deserialize;
use serde_json::json;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "safebid", version, about = "Safe multi-agent bidding and maintenance scheduling")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment config (JSON); the bundled case study when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Episode count override.
    #[arg(long, global = true)]
    episodes: Option<usize>,
    /// Filter semantics: intent or literal.
    #[arg(long, global = true)]
    mode: Option<FilterMode>,
}

#[derive(Subcommand)]
enum Command {
    /// Clear one market instance read from a JSON file.
    Dispatch {
        /// `{bids, maintenance, demand, prev_gen?, ramps_enabled?, units?}`;
        /// units default to the config's.
        instance: PathBuf,
    },
    /// Project one maintenance request through the safety filter.
    Filter(RequestArgs),
    /// Train DDPG agents with the safety filter.
    Train,
    /// Train with the safety filter bypassed and count violations.
    AblateUnsafe,
    /// Train tabular Q-learning agents with the safety filter.
    BaselineQ,
    /// Write the filter MILP for one request in LP format.
    ExportMilp {
        #[command(flatten)]
        request: RequestArgs,
        /// Big-M constant; defaults to the smallest dominating value.
        #[arg(long)]
        big_m: Option<f64>,
        /// Output file; defaults to `<out>/filter.lp`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the oracle-equivalence and invariant suites.
    Verify,
}

#[derive(Args)]
struct RequestArgs {
    /// Comma-separated 0/1 request, one entry per unit.
    #[arg(long)]
    request: String,
    /// Maintenance raster of past executed decisions (as written by `train`).
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DispatchFile {
    units: Option<Vec<UnitParams>>,
    bids: Vec<f64>,
    maintenance: Vec<bool>,
    demand: f64,
    #[serde(default)]
    prev_gen: Option<Vec<f64>>,
    #[serde(default)]
    ramps_enabled: bool,
}

enum Failure {
    Config(String),
    Engine(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn engine<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Engine(e.to_string())
}

fn load_config(g: &Global) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &g.config {
        Some(p) => parse_config(p)?,
        None => ExperimentConfig::case_study(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(o) = &g.out {
        cfg.output_dir = o.clone();
    }
    if let Some(e) = g.episodes {
        cfg.episodes = e;
    }
    if let Some(m) = g.mode {
        cfg.filter.mode = m;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_request(s: &str, n: usize) -> Result<Vec<bool>, Failure> {
    let bits = s
        .split(',')
        .map(|b| match b.trim() {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(Failure::Config(format!("request entries must be 0 or 1, got `{other}`"))),
        })
        .collect::<Result<Vec<_>, _>>()?;
    if bits.len() != n {
        return Err(Failure::Config(format!("request has {} entries for {n} units", bits.len())));
    }
    Ok(bits)
}

fn state_from_history(cfg: &ExperimentConfig, history: Option<&Path>) -> Result<SafetyState, Failure> {
    let fc = cfg.filter_config();
    let mut state = SafetyState::new(cfg.units.len());
    if let Some(path) = history {
        for row in read_raster(path).map_err(|e| Failure::Config(e.to_string()))? {
            if row.len() != cfg.units.len() {
                return Err(Failure::Config(format!("history row has {} units", row.len())));
            }
            state = advance_state(&state, &row, &fc);
        }
    }
    Ok(state)
}

fn bits(v: &[bool]) -> Vec<u8> {
    v.iter().map(|&b| b as u8).collect()
}

fn write_checkpoints(out: &RunOutput, dir: &Path) -> Result<(), Failure> {
    let dir = dir.join("checkpoints");
    std::fs::create_dir_all(&dir).map_err(engine)?;
    for (i, l) in out.learners.iter().enumerate() {
        match l {
            Learner::Ddpg { brain, .. } => {
                let f = File::create(dir.join(format!("agent_{}.ddpg", i + 1))).map_err(engine)?;
                save_checkpoint(brain, BufWriter::new(f)).map_err(engine)?;
            }
            Learner::Q { agent, .. } => {
                let f = File::create(dir.join(format!("agent_{}.qtable", i + 1))).map_err(engine)?;
                save_table(&agent.table, BufWriter::new(f)).map_err(engine)?;
            }
        }
    }
    Ok(())
}

fn finish_run(cfg: &ExperimentConfig, out: &RunOutput, label: &str) -> Result<serde_json::Value, Failure> {
    write_artifacts(out, cfg.units.len(), &cfg.output_dir).map_err(engine)?;
    write_checkpoints(out, &cfg.output_dir)?;
    let last = out.episodes.last().map(|m| m.sum_avg_reward);
    Ok(json!({
        "run": label,
        "seed": cfg.seed,
        "episodes": out.episodes.len(),
        "steps": out.records.len(),
        "final_sum_avg_reward": last,
        "audit": out.audit,
        "shortfall_steps": out.shortfall_steps,
        "out_dir": cfg.output_dir,
    }))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(&cli.global)?;
    match cli.command {
        Command::Dispatch { instance } => {
            let text = std::fs::read_to_string(&instance)
                .map_err(|e| Failure::Config(format!("{}: {e}", instance.display())))?;
            let f: DispatchFile = serde_json::from_str(&text)
                .map_err(|e| Failure::Config(format!("{}: {e}", instance.display())))?;
            let inst = MarketInstance {
                units: f.units.unwrap_or(cfg.units),
                bids: f.bids,
                maintenance: f.maintenance,
                demand: f.demand,
                prev_gen: f.prev_gen,
                ramps_enabled: f.ramps_enabled,
            };
            let out = clear_market(&inst).map_err(engine)?;
            println!("{}", json!({"gen": out.gen, "price": out.price, "total_cost": out.total_cost}));
        }
        Command::Filter(args) => {
            let req = parse_request(&args.request, cfg.units.len())?;
            let state = state_from_history(&cfg, args.history.as_deref())?;
            let d = filter_project(&req, &state, &cfg.filter_config()).map_err(engine)?;
            println!(
                "{}",
                json!({"t": state.t, "request": bits(&req), "u_f": bits(&d.u_f), "distance": d.distance})
            );
        }
        Command::Train => {
            let mut cfg = cfg;
            cfg.learner = LearnerKind::Ddpg;
            cfg.learners = None;
            let out = run_training(&cfg).map_err(engine)?;
            println!("{}", finish_run(&cfg, &out, "train")?);
        }
        Command::BaselineQ => {
            let mut cfg = cfg;
            cfg.learner = LearnerKind::Qlearn;
            cfg.learners = None;
            let out = run_training(&cfg).map_err(engine)?;
            println!("{}", finish_run(&cfg, &out, "baseline-q")?);
        }
        Command::AblateUnsafe => {
            let out = run_unsafe_ablation(&cfg).map_err(engine)?;
            let summary = finish_run(&cfg, &out, "ablate-unsafe")?;
            let path = cfg.output_dir.join("ablation_summary.json");
            std::fs::write(&path, format!("{summary}\n")).map_err(engine)?;
            println!("{summary}");
        }
        Command::ExportMilp { request, big_m, output } => {
            let req = parse_request(&request.request, cfg.units.len())?;
            let state = state_from_history(&cfg, request.history.as_deref())?;
            let fc = cfg.filter_config();
            let big_m = big_m.unwrap_or_else(|| default_big_m(&fc, &state));
            let model = big_m_expand(&fc, &state, &req, big_m).map_err(engine)?;
            let path = output.unwrap_or_else(|| cfg.output_dir.join("filter.lp"));
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(engine)?;
            }
            let title = format!("safety filter at step {}", state.t);
            std::fs::write(&path, model.to_lp_string(&title)).map_err(engine)?;
            println!(
                "{}",
                json!({"path": path, "variables": model.vars.len(), "rows": model.rows.len(), "big_m": big_m})
            );
        }
        Command::Verify => {
            let short = ExperimentConfig {
                episodes: cfg.episodes.min(5),
                ..cfg.clone()
            };
            let reports = verify::run_all(cfg.seed, &short);
            for r in &reports {
                println!("{}", r.summary());
                for f in r.failures.iter().take(5) {
                    println!("  {f}");
                }
            }
            if reports.iter().any(|r| !r.passed()) {
                return Err(Failure::Engine("verification failed".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (kind, code, msg) = match f {
                Failure::Config(m) => ("config", 2, m),
                Failure::Engine(m) => ("engine", 1, m),
            };
            eprintln!("{}", json!({"error": kind, "message": msg}));
            ExitCode::from(code)
        }
    }
}
