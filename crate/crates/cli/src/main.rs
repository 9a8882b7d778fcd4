//! `tfcp`: run scenarios, the attack catalog and the anonymity measurement.
//!
//! Exit codes: 0 success, 1 expected outcome not met, 2 configuration or
//! input error, 3 invariant violation.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use tfcp::harness::{
    attack_catalog, measure_anonymity, parse_scenario, run, AnonymityMode, AttackSelection,
    RunError,
};
use tfcp::report::RunReport;
use tfcp::trace::Trace;

const EXIT_MISMATCH: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_INVARIANT: u8 = 3;

#[derive(Parser)]
#[command(
    name = "tfcp",
    version,
    about = "Death-acknowledgment protocol simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file.
    Run {
        scenario: PathBuf,
        /// Overrides the scenario seed. TFCP_SEED overrides this flag.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the event trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the delimited report here.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Add the linkage analyzer's scores to the trace and report.
        #[arg(long)]
        analyze: bool,
    },
    /// Run the attack catalog and compare outcomes with expectations.
    Attacks {
        #[arg(long, value_enum, default_value_t = Which::All)]
        which: Which,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Measure how often the analyzer links deposits to donors.
    Anonymity {
        #[arg(long, default_value_t = 100)]
        runs: u64,
        #[arg(long, default_value_t = 5)]
        donors: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Analyze the final state instead of the state before the first
        /// acknowledgment.
        #[arg(long)]
        post_ack: bool,
    },
    /// Rebuild a report from a trace file.
    Report {
        trace: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Human)]
        format: Format,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Which {
    KeyTransfer,
    Whale,
    All,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Human,
    Delimited,
}

struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        let code = match e {
            RunError::Invariant { .. } => EXIT_INVARIANT,
            RunError::Config(_) | RunError::Genesis(_) => EXIT_CONFIG,
        };
        fail(code, e.to_string())
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| fail(EXIT_CONFIG, format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| fail(EXIT_CONFIG, format!("{}: {e}", path.display())))
}

fn env_seed() -> Result<Option<u64>, Failure> {
    match std::env::var("TFCP_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| fail(EXIT_CONFIG, format!("TFCP_SEED: not a number: {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn cmd_run(
    path: &Path,
    seed: Option<u64>,
    trace_out: Option<&Path>,
    report_out: Option<&Path>,
    analyze: bool,
) -> Result<(), Failure> {
    let text = read(path)?;
    let mut scenario =
        parse_scenario(&text).map_err(|e| fail(EXIT_CONFIG, format!("{}: {e}", path.display())))?;
    if let Some(seed) = env_seed()?.or(seed) {
        scenario.seed = seed;
    }
    let mut outcome = run(&scenario)?;
    if analyze {
        outcome.record_analysis();
    }
    if let Some(out) = trace_out {
        write(out, &outcome.trace.to_text())?;
    }
    let report = outcome.report();
    if let Some(out) = report_out {
        write(out, &report.delimited())?;
    }
    print!("{}", report.human());
    for r in &outcome.rejected {
        eprintln!(
            "note: block {} {} {} refused: {}",
            r.block, r.actor, r.action, r.reason
        );
    }
    Ok(())
}

fn cmd_attacks(which: Which, seed: u64) -> Result<(), Failure> {
    let selection = match which {
        Which::KeyTransfer => AttackSelection::KeyTransfer,
        Which::Whale => AttackSelection::Whale,
        Which::All => AttackSelection::All,
    };
    let cases = attack_catalog(selection, seed)?;
    let width = cases.iter().map(|c| c.name.len()).max().unwrap_or(0);
    println!("{:<width$}  {:<5}  expected / observed", "case", "match");
    for c in &cases {
        let mark = if c.matched() { "yes" } else { "NO" };
        println!("{:<width$}  {:<5}  {}", c.name, mark, c.expected);
        if !c.matched() {
            println!("{:<width$}  {:<5}  {}", "", "", c.observed);
        }
    }
    let matched = cases.iter().filter(|c| c.matched()).count();
    println!("{matched}/{} cases matched", cases.len());
    if matched == cases.len() {
        Ok(())
    } else {
        Err(fail(
            EXIT_MISMATCH,
            "attack outcomes differ from expectations",
        ))
    }
}

fn cmd_anonymity(runs: u64, donors: usize, seed: u64, post_ack: bool) -> Result<(), Failure> {
    if donors == 0 || runs == 0 {
        return Err(fail(EXIT_CONFIG, "--runs and --donors must be positive"));
    }
    let seed = env_seed()?.unwrap_or(seed);
    let mode = if post_ack {
        AnonymityMode::PostAcknowledgment
    } else {
        AnonymityMode::PreAcknowledgment
    };
    let r = measure_anonymity(donors, runs, seed, mode)?;
    let label = if post_ack {
        "post-acknowledgment"
    } else {
        "pre-acknowledgment"
    };
    println!("donors {donors}  runs {runs}  guesses {}", r.total);
    println!(
        "{label} correct-guess rate {:.3} ({}/{})",
        r.rate(),
        r.correct,
        r.total
    );
    println!("chance baseline 1/{donors} = {:.3}", r.chance());
    if r.vacuous() {
        println!("vacuous: a single donor is always linked");
    }
    let ok = if post_ack {
        r.correct == r.total
    } else {
        r.within_tolerance()
    };
    if ok {
        Ok(())
    } else if post_ack {
        Err(fail(EXIT_MISMATCH, "post-acknowledgment rate below 1.0"))
    } else {
        Err(fail(
            EXIT_MISMATCH,
            format!("rate exceeds {:.3}", r.chance() + 0.1),
        ))
    }
}

fn cmd_report(path: &Path, format: Format) -> Result<(), Failure> {
    let trace = Trace::parse(&read(path)?)
        .map_err(|e| fail(EXIT_CONFIG, format!("{}: {e}", path.display())))?;
    let report = RunReport::from_trace(&trace)
        .map_err(|e| fail(EXIT_CONFIG, format!("{}: {e}", path.display())))?;
    match format {
        Format::Human => print!("{}", report.human()),
        Format::Delimited => print!("{}", report.delimited()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            seed,
            trace,
            report,
            analyze,
        } => cmd_run(
            &scenario,
            seed,
            trace.as_deref(),
            report.as_deref(),
            analyze,
        ),
        Command::Attacks { which, seed } => cmd_attacks(which, seed),
        Command::Anonymity {
            runs,
            donors,
            seed,
            post_ack,
        } => cmd_anonymity(runs, donors, seed, post_ack),
        Command::Report { trace, format } => cmd_report(&trace, format),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
