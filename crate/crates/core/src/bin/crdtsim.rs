use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crdtkit::simulator::{
    check_convergence, fuzz, oracle_eval, run, shipped, shipped_names, FuzzConfig, FuzzError, Scenario, SyncModel,
};

#[derive(Parser)]
#[command(name = "crdtsim", version, about = "Deterministic CRDT replication simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file (or a shipped scenario by name) and check convergence.
    Run {
        scenario: String,
        /// Write the event trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run random scenarios and check each one.
    Fuzz {
        #[arg(long = "type")]
        tag: String,
        #[arg(long)]
        model: SyncModel,
        #[arg(long, default_value_t = 3)]
        replicas: usize,
        #[arg(long, default_value_t = 20)]
        ops: usize,
        #[arg(long, default_value_t = 100)]
        runs: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the reference evaluation of the history a scenario induces.
    Oracle { scenario: String },
}

const OK: u8 = 0;
const FAILED: u8 = 1;
const INVALID: u8 = 2;

fn load(arg: &str) -> Result<Scenario, String> {
    if let Some(s) = shipped(arg) {
        return Ok(s);
    }
    let path = Path::new(arg);
    if !path.exists() {
        let names: Vec<&str> = shipped_names().collect();
        return Err(format!("{arg}: no such file or shipped scenario (shipped: {})", names.join(", ")));
    }
    let text = std::fs::read_to_string(path).map_err(|e| format!("{arg}: {e}"))?;
    Scenario::from_json(&text).map_err(|e| format!("{arg}: {e}"))
}

fn cmd_run(arg: &str, trace: Option<&Path>, seed: Option<u64>) -> Result<u8, String> {
    let mut scenario = load(arg)?;
    if let Some(s) = seed {
        scenario.seed = s;
    }
    let result = match run(&scenario) {
        Ok(r) => r,
        Err(e) => {
            println!("run failed: {e}");
            return Ok(FAILED);
        }
    };
    if let Some(path) = trace {
        std::fs::write(path, result.trace.render()).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    println!("scenario {} ({} / {}, seed {})", scenario.name, scenario.crdt.tag(), scenario.model, scenario.seed);
    for (r, v) in &result.finals {
        println!("  {r}: {v}");
    }
    let s = &result.stats;
    println!(
        "  updates {} rejected {} messages {} dropped {} duplicated {} bytes {}",
        s.updates, s.rejected, s.messages, s.dropped, s.duplicated, s.bytes
    );
    match oracle_eval(&scenario.crdt, &result.history) {
        Ok(v) => println!("  oracle: {v}"),
        Err(e) => println!("  oracle: {e}"),
    }
    match check_convergence(&result) {
        Ok(()) => {
            println!("converged");
            Ok(OK)
        }
        Err(d) => {
            println!("DIVERGED: {d}");
            Ok(FAILED)
        }
    }
}

fn cmd_oracle(arg: &str) -> Result<u8, String> {
    let scenario = load(arg)?;
    let result = match run(&scenario) {
        Ok(r) => r,
        Err(e) => {
            println!("run failed: {e}");
            return Ok(FAILED);
        }
    };
    match oracle_eval(&scenario.crdt, &result.history) {
        Ok(v) => {
            println!("{v}");
            Ok(OK)
        }
        Err(e) => {
            println!("oracle error: {e}");
            Ok(FAILED)
        }
    }
}

fn cmd_fuzz(config: FuzzConfig) -> Result<u8, String> {
    match fuzz(&config) {
        Ok(s) => {
            println!(
                "{} / {}: {} runs passed, {} updates ({} rejected), {} messages ({} dropped, {} duplicated), {} bytes",
                config.tag, config.model, s.runs, s.updates, s.rejected, s.messages, s.dropped, s.duplicated, s.bytes
            );
            if config.model == SyncModel::Op {
                println!("  {} concurrent effector pairs commute", s.audited_pairs);
            }
            if config.model == SyncModel::Delta {
                println!("  {} runs match the state-model replay", s.cross_checked);
            }
            if config.tag == "topk" {
                println!("  {} adds never left their replica", s.untransmitted_adds);
            }
            Ok(OK)
        }
        Err(FuzzError::Config(m)) => Err(m),
        Err(FuzzError::Failure {
            run,
            seed,
            reason,
            scenario,
        }) => {
            println!("run {run} FAILED with seed {seed}: {reason}");
            println!("{}", scenario.to_json());
            Ok(FAILED)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { scenario, trace, seed } => cmd_run(&scenario, trace.as_deref(), seed),
        Command::Oracle { scenario } => cmd_oracle(&scenario),
        Command::Fuzz {
            tag,
            model,
            replicas,
            ops,
            runs,
            seed,
        } => cmd_fuzz(FuzzConfig {
            tag,
            model,
            replicas,
            ops,
            runs,
            seed,
        }),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(INVALID)
        }
    }
}
