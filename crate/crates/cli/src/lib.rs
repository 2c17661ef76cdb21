//! `progmoney` command line: run scenarios, audit ledgers, check policies and
//! rebuild reports.
//!
//! Exit codes: 0 success, 1 scenario or parse error, 2 audit or
//! reconciliation failure, 3 runtime error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use progmoney::policy::compile;
use progmoney::registry::{audit_export, parse_ledger};
use progmoney::report::{build_report, export_observations, parse_observations};
use progmoney::scenario::Scenario;
use progmoney::sim::Simulation;

pub const SEED_ENV: &str = "PROGMONEY_SEED";

pub const OBSERVATIONS_FILE: &str = "observations.log";
pub const LEDGER_FILE: &str = "ledger.txt";
pub const REPORT_FILE: &str = "report.txt";
pub const TRAJECTORY_FILE: &str = "trajectory.txt";

#[derive(Parser, Debug)]
#[command(name = "progmoney", version, about = "Program-money scenario harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario and write its observation log, ledger and report.
    Run {
        scenario: PathBuf,
        /// Overrides the scenario seed; falls back to $PROGMONEY_SEED.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay an exported ledger and check every invariant.
    Audit { ledger: PathBuf },
    /// Parse and check policy files (directories are scanned for *.pol).
    Check {
        #[arg(required = true)]
        policies: Vec<PathBuf>,
    },
    /// Rebuild the report of a run directory from its ledger and log.
    Report { dir: PathBuf },
}

/// A failure carrying its exit code and a one-line message.
struct Failure(i32, String);

fn fail<T>(code: i32, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(code, msg.into()))
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).or_else(|e| fail(1, format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).or_else(|e| fail(3, format!("{}: {e}", path.display())))
}

/// Entry point shared by the binary and the tests.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("bad arguments");
            eprintln!("{}", first.trim());
            return 1;
        }
    };
    let result = match cli.command {
        Command::Run { scenario, seed, out } => cmd_run(&scenario, seed, &out),
        Command::Audit { ledger } => cmd_audit(&ledger),
        Command::Check { policies } => cmd_check(&policies),
        Command::Report { dir } => cmd_report(&dir),
    };
    match result {
        Ok(()) => 0,
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            code
        }
    }
}

fn resolve_seed(flag: Option<u64>) -> Result<Option<u64>, Failure> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .or_else(|_| fail(1, format!("{SEED_ENV}={v} is not an integer"))),
        Err(_) => Ok(None),
    }
}

fn cmd_run(path: &Path, seed: Option<u64>, out: &Path) -> Result<(), Failure> {
    let mut scenario = Scenario::load(path).or_else(|e| fail(1, format!("{}: {e}", path.display())))?;
    if let Some(seed) = resolve_seed(seed)? {
        scenario.sim.seed = seed;
    }
    let mut sim = Simulation::new(scenario).or_else(|e| fail(3, e.to_string()))?;
    sim.run().or_else(|e| fail(3, e.to_string()))?;
    if let Err(v) = sim.registry().audit() {
        return fail(2, format!("ledger audit failed: {}", v[0]));
    }
    fs::create_dir_all(out).or_else(|e| fail(3, format!("{}: {e}", out.display())))?;
    let observations = export_observations(sim.observations());
    let ledger = sim.registry().export();
    let report = sim.report().to_string();
    write(&out.join(OBSERVATIONS_FILE), &observations)?;
    write(&out.join(LEDGER_FILE), &ledger)?;
    write(&out.join(REPORT_FILE), &report)?;
    if !sim.trajectory().is_empty() {
        let lines: String = sim.trajectory().iter().map(|p| p.line() + "\n").collect();
        write(&out.join(TRAJECTORY_FILE), &lines)?;
    }
    println!(
        "ran to tick {}: {} observations, {} ledger records -> {}",
        sim.now().saturating_sub(1),
        sim.observations().len(),
        sim.registry().records().len(),
        out.display()
    );
    Ok(())
}

fn cmd_audit(path: &Path) -> Result<(), Failure> {
    let text = read(path)?;
    match audit_export(&text) {
        Ok(state) => {
            println!(
                "ok: minted={} burned={} live={}",
                state.minted,
                state.burned,
                state.live_supply()
            );
            Ok(())
        }
        Err(v) => fail(
            2,
            format!("{} violation(s); first: {}", v.len(), v[0]),
        ),
    }
}

fn policy_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let entries = fs::read_dir(p).or_else(|e| fail(1, format!("{}: {e}", p.display())))?;
            let mut found: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "pol"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

fn cmd_check(paths: &[PathBuf]) -> Result<(), Failure> {
    for file in policy_files(paths)? {
        let text = read(&file)?;
        match compile(&text) {
            Ok(p) => println!(
                "{}: ok ({} rules, hash {})",
                file.display(),
                p.rules().len(),
                p.content_hash()
            ),
            Err(errors) => {
                return fail(
                    1,
                    format!("{}: {} ({} error(s))", file.display(), errors[0], errors.len()),
                )
            }
        }
    }
    Ok(())
}

fn cmd_report(dir: &Path) -> Result<(), Failure> {
    let ledger = read(&dir.join(LEDGER_FILE))?;
    let log = read(&dir.join(OBSERVATIONS_FILE))?;
    let records = parse_ledger(&ledger).or_else(|e| fail(1, format!("{LEDGER_FILE}: {e}")))?;
    let observations = parse_observations(&log).or_else(|e| fail(1, format!("{OBSERVATIONS_FILE}: {e}")))?;
    let report = build_report(&records, &observations).to_string();
    print!("{report}");
    let saved = dir.join(REPORT_FILE);
    if saved.exists() && read(&saved)? != report {
        return fail(2, format!("{} does not match the rebuilt report", saved.display()));
    }
    Ok(())
}
