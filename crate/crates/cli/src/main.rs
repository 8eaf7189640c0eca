//! `ayvu`: run scenario suites, validate data files, print turn traces and
//! serve the gateway.
//!
//! Exit codes: 0 success; 1 a check failed, a file is invalid, or a turn
//! is out of range; 2 an input could not be read or the run could not
//! start.

use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ayvu_core::canonical::to_canonical_pretty;
use ayvu_core::evaluation::{compute_metrics, load_scenario, run_scenario, scenario_files, ScenarioScript};
use ayvu_core::governance::PolicyRuleSet;
use ayvu_core::response::TemplateSet;
use ayvu_core::textfmt::LoadError;
use ayvu_core::understanding::Lexicon;
use ayvu_core::SessionConfig;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "ayvu", version, about = "Oral-first dialogue runtime tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run scenarios and report metrics. Exits 1 if any expectation fails.
    Run {
        /// Scenario files or directories of scenario files.
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        /// Session config; defaults to the nearest config.toml at or above
        /// the first scenario's directory.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the machine-readable report here.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Format of the report printed to standard output.
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Check a data file and list every problem found.
    Validate {
        #[arg(value_enum)]
        kind: FileKind,
        path: PathBuf,
    },
    /// Print the canonical trace of one turn of a scenario.
    Trace {
        scenario: PathBuf,
        #[arg(long)]
        turn: u32,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Serve the HTTP + WebSocket gateway.
    Serve {
        /// Base config for sessions created without a full config document.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        bind: IpAddr,
        #[arg(long, default_value_t = 7878)]
        port: u16,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Machine,
}

#[derive(Clone, Copy, ValueEnum)]
enum FileKind {
    Lexicon,
    Policy,
    Templates,
    Scenario,
    Config,
}

/// A failure mapped to an exit code.
struct Failure {
    code: u8,
    message: String,
}

fn input_error(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn check_failure(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenarios,
            config,
            report,
            format,
        } => run(&scenarios, config, report, format),
        Command::Validate { kind, path } => validate(kind, &path),
        Command::Trace { scenario, turn, config } => trace(&scenario, turn, config),
        Command::Serve { config, bind, port } => serve(config, SocketAddr::new(bind, port)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("error: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}

fn find_config(explicit: Option<PathBuf>, near: &Path) -> Result<PathBuf, Failure> {
    if let Some(p) = explicit {
        return if p.is_file() {
            Ok(p)
        } else {
            Err(input_error(format!("config file not found: {}", p.display())))
        };
    }
    let start = if near.is_dir() { near } else { near.parent().unwrap_or(Path::new(".")) };
    start
        .ancestors()
        .take(2)
        .map(|d| d.join("config.toml"))
        .find(|p| p.is_file())
        .ok_or_else(|| input_error(format!("no --config given and no config.toml near {}", near.display())))
}

fn load_config(path: &Path) -> Result<SessionConfig, Failure> {
    SessionConfig::load(path).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn load_script(path: &Path) -> Result<ScenarioScript, Failure> {
    load_scenario(path).map_err(|e| input_error(e.to_string()))
}

fn expand(paths: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let files = scenario_files(p).map_err(|e| input_error(format!("cannot list {}: {e}", p.display())))?;
            if files.is_empty() {
                return Err(input_error(format!("no scenario files in {}", p.display())));
            }
            out.extend(files);
        } else if p.is_file() {
            out.push(p.clone());
        } else {
            return Err(input_error(format!("scenario not found: {}", p.display())));
        }
    }
    Ok(out)
}

fn run(scenarios: &[PathBuf], config: Option<PathBuf>, report: Option<PathBuf>, format: Format) -> Result<(), Failure> {
    let files = expand(scenarios)?;
    let config = load_config(&find_config(config, &scenarios[0])?)?;
    let scripts = files.iter().map(|f| load_script(f)).collect::<Result<Vec<_>, _>>()?;
    let results = ayvu_core::evaluation::run_suite(&scripts, &config)
        .into_iter()
        .zip(&files)
        .map(|(r, f)| r.map_err(|e| input_error(format!("{}: {e}", f.display()))))
        .collect::<Result<Vec<_>, _>>()?;
    let metrics = compute_metrics(&results).map_err(|e| input_error(e.to_string()))?;

    match format {
        Format::Table => print!("{}", metrics.render_table()),
        Format::Machine => print!("{}", metrics.render_machine()),
    }
    if let Some(path) = report {
        std::fs::write(&path, metrics.render_machine())
            .map_err(|e| input_error(format!("cannot write report {}: {e}", path.display())))?;
    }

    let failed: Vec<_> = results
        .iter()
        .flat_map(|r| r.checks().filter(|c| !c.passed).map(move |c| (r.scenario_id.as_str(), c)))
        .collect();
    for (scenario, c) in &failed {
        eprintln!(
            "FAILED {scenario}/{} {}: expected {}, got {}",
            c.step_id, c.field, c.expected, c.actual
        );
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(check_failure(format!("{} expectation check(s) failed", failed.len())))
    }
}

fn report_load(result: Result<(), LoadError>) -> Result<(), Failure> {
    match result {
        Ok(()) => Ok(()),
        Err(LoadError::Io { path, source }) => Err(input_error(format!("cannot read {}: {source}", path.display()))),
        Err(LoadError::Invalid { path, diagnostics }) => {
            for d in diagnostics.iter() {
                println!("{}:{}: {}: {}", path.display(), d.line, d.kind.as_str(), d.message);
            }
            Err(check_failure(format!("{} problem(s) found", diagnostics.iter().count())))
        }
    }
}

fn validate(kind: FileKind, path: &Path) -> Result<(), Failure> {
    match kind {
        FileKind::Lexicon => report_load(Lexicon::load(path).map(drop)),
        FileKind::Policy => report_load(PolicyRuleSet::load(path).map(drop)),
        FileKind::Templates => report_load(TemplateSet::load(path).map(drop)),
        FileKind::Scenario => report_load(load_scenario(path).map(drop)),
        FileKind::Config => {
            std::fs::read_to_string(path).map_err(|e| input_error(format!("cannot read {}: {e}", path.display())))?;
            SessionConfig::load(path)
                .map(drop)
                .map_err(|e| check_failure(format!("{}: {e}", path.display())))
        }
    }?;
    println!("{}: ok", path.display());
    Ok(())
}

fn trace(scenario: &Path, turn: u32, config: Option<PathBuf>) -> Result<(), Failure> {
    if !scenario.is_file() {
        return Err(input_error(format!("scenario not found: {}", scenario.display())));
    }
    let config = load_config(&find_config(config, scenario)?)?;
    let script = load_script(scenario)?;
    let result = run_scenario(&script, &config).map_err(|e| input_error(e.to_string()))?;
    let outcome = result
        .outcomes
        .iter()
        .find(|o| o.turn_index == turn)
        .ok_or_else(|| check_failure(format!("not-found: turn {turn} (scenario has {} turns)", result.outcomes.len())))?;
    print!("{}", to_canonical_pretty(&outcome.trace));
    Ok(())
}

fn serve(config: Option<PathBuf>, addr: SocketAddr) -> Result<(), Failure> {
    let token = std::env::var(ayvu_gateway::TOKEN_ENV).ok().filter(|t| !t.is_empty());
    ayvu_gateway::check_bind(addr, token.as_deref()).map_err(|e| input_error(e.to_string()))?;
    let (base, base_dir) = match config {
        Some(p) => {
            if !p.is_file() {
                return Err(input_error(format!("config file not found: {}", p.display())));
            }
            let dir = p.parent().map(Path::to_path_buf).unwrap_or_default();
            (Some(load_config(&p)?), dir)
        }
        None => (None, std::env::current_dir().unwrap_or_default()),
    };
    let options = ayvu_gateway::GatewayOptions { base, base_dir, token };
    let runtime = tokio::runtime::Runtime::new().map_err(|e| input_error(format!("cannot start runtime: {e}")))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| input_error(format!("cannot bind {addr}: {e}")))?;
        let local = listener.local_addr().map_err(|e| input_error(e.to_string()))?;
        eprintln!("ayvu gateway listening on http://{local}");
        ayvu_gateway::serve(listener, ayvu_gateway::AppState::new(options))
            .await
            .map_err(|e| input_error(format!("server error: {e}")))
    })
}
