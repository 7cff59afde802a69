use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use socialgrid_core::grid::{build_network, compute_gsf, GridError};
use socialgrid_core::pricing::{solve_dc_dlmp, PricingError};
use socialgrid_core::scenario::{
    emit_report, exit_code, run_scenario, Engine, RunOptions, Scenario, ScenarioConfig, ScenarioError,
};
use socialgrid_core::Execution;

#[derive(Parser)]
#[command(name = "socialgrid", version, about = "Campus HVAC setpoint games priced by DC-OPF nodal prices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Exit with status 4 if any hour's game fails to converge.
        #[arg(long)]
        strict: bool,
        /// Retrain Q-tables even when stored ones are configured.
        #[arg(long)]
        train: bool,
        #[arg(long, value_parser = parse_engine)]
        engine: Option<Engine>,
    },
    /// Solve one market and print nodal prices as JSON.
    Dlmp {
        #[arg(long)]
        network: PathBuf,
        /// Include the full dual vector.
        #[arg(long)]
        emit_duals: bool,
    },
    /// Train Q-tables for day 0 and save them.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Where to write the tables; defaults to the configured qtable path
        /// or `<output_dir>/qtable.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a network document and list every violation.
    Validate {
        #[arg(long)]
        network: PathBuf,
    },
}

#[derive(clap::Args)]
struct Overrides {
    #[arg(long)]
    itmax: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    prune_k: Option<usize>,
    /// Re-zero Q before every update.
    #[arg(long)]
    literal_step3: bool,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    sequential: bool,
}

impl Overrides {
    fn apply(&self, cfg: &mut ScenarioConfig) {
        if let Some(v) = self.itmax {
            cfg.mdp.itmax = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.prune_k {
            cfg.mdp.prune_k = v;
        }
        if self.literal_step3 {
            cfg.mdp.literal_step3 = true;
        }
        if let Some(v) = &self.output {
            cfg.output_dir = v.clone();
        }
        if self.sequential {
            cfg.execution = Execution::Sequential;
        }
    }
}

fn parse_engine(s: &str) -> Result<Engine, String> {
    match s {
        "brute" => Ok(Engine::Brute),
        "game" => Ok(Engine::Game),
        "rl" => Ok(Engine::Rl),
        _ => Err(format!("unknown engine `{s}` (brute, game, rl)")),
    }
}

struct Failure {
    code: i32,
    kind: &'static str,
    message: String,
    details: serde_json::Value,
}

impl Failure {
    fn report(&self) -> serde_json::Value {
        json!({
            "error": self.kind,
            "message": self.message,
            "exit_code": self.code,
            "details": self.details,
        })
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        let kind = match &e {
            ScenarioError::Io { .. } => "io",
            ScenarioError::Config(_) => "config",
            ScenarioError::Invalid(_) => "invalid_scenario",
            ScenarioError::Grid(_) => "grid",
            ScenarioError::Building(_) => "building",
            ScenarioError::Social(_) => "social",
            ScenarioError::Game(_) => "game",
            ScenarioError::Marl(_) => "marl",
            ScenarioError::NonConvergence { .. } => "non_convergence",
            ScenarioError::Report { .. } => "report",
        };
        let details = match &e {
            ScenarioError::Io { path, .. } | ScenarioError::Report { path, .. } => json!({ "path": path }),
            ScenarioError::NonConvergence { day, hour, rounds } => {
                json!({ "day": day, "hour": hour, "rounds": rounds })
            }
            ScenarioError::Grid(g) => violations(g),
            _ => serde_json::Value::Null,
        };
        Failure {
            code: exit_code(&e),
            kind,
            message: e.to_string(),
            details,
        }
    }
}

fn violations(e: &GridError) -> serde_json::Value {
    e.violations().iter().map(|v| v.to_string()).collect()
}

fn grid_failure(e: GridError) -> Failure {
    Failure {
        code: 2,
        kind: "grid",
        details: violations(&e),
        message: e.to_string(),
    }
}

fn pricing_failure(e: PricingError) -> Failure {
    match e {
        PricingError::Grid(g) => grid_failure(g),
        other => Failure {
            code: 3,
            kind: "solver",
            message: other.to_string(),
            details: serde_json::Value::Null,
        },
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| {
        ScenarioError::Io {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    })
}

fn load_config(path: &Path, overrides: &Overrides) -> Result<ScenarioConfig, Failure> {
    let mut cfg = ScenarioConfig::load(path)?;
    overrides.apply(&mut cfg);
    Ok(cfg)
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run {
            config,
            overrides,
            strict,
            train,
            engine,
        } => {
            let mut cfg = load_config(&config, &overrides)?;
            cfg.strict |= strict;
            if let Some(e) = engine {
                cfg.engine = e;
            }
            let out = cfg.output_dir.clone();
            let scenario = Scenario::load(cfg)?;
            let report = run_scenario(&scenario, RunOptions { train })?;
            let files = emit_report(&report, &out)?;
            println!("engine {}: ${:.3}", report.engine, report.engine_total());
            for (setpoint, total) in report.baseline_totals() {
                println!("fixed {setpoint} °F: ${total:.3}");
            }
            for f in files {
                log::info!("wrote {}", f.display());
            }
        }
        Command::Dlmp { network, emit_duals } => {
            let net = build_network(&read(&network)?).map_err(grid_failure)?;
            let gsf = compute_gsf(&net).map_err(grid_failure)?;
            let sol = solve_dc_dlmp(&net, &gsf).map_err(pricing_failure)?;
            let text = serde_json::to_string_pretty(&sol.to_export(emit_duals)).expect("export serializes");
            println!("{text}");
        }
        Command::Train {
            config,
            overrides,
            out,
        } => {
            let cfg = load_config(&config, &overrides)?;
            let target = out
                .or_else(|| cfg.qtable_path.clone())
                .unwrap_or_else(|| cfg.output_dir.join("qtable.json"));
            let scenario = Scenario::load(cfg)?;
            let history = scenario.seeded_history()?;
            let pruner = scenario.train(&history, 0)?;
            let text = pruner.to_json().map_err(ScenarioError::from)?;
            if let Some(dir) = target.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|source| ScenarioError::Io {
                    path: dir.to_path_buf(),
                    source,
                })?;
            }
            std::fs::write(&target, text).map_err(|source| ScenarioError::Io {
                path: target.clone(),
                source,
            })?;
            println!("{}", target.display());
        }
        Command::Validate { network } => {
            let net = build_network(&read(&network)?).map_err(grid_failure)?;
            compute_gsf(&net).map_err(grid_failure)?;
            println!(
                "ok: {} buses, {} lines, {} offers",
                net.buses.len(),
                net.lines.len(),
                net.offers.len()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.report());
            ExitCode::from(f.code as u8)
        }
    }
}
