mod run;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

/// Exit status for a failed invariant, simulation check or acceptance suite.
const VIOLATION: u8 = 1;
const USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "bstsim", version, about = "Run, verify and replay BST algorithms in the BST model")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run algorithms on generated or file workloads and report costs as CSV.
    Run(RunArgs),
    /// Run the differential and bound suites.
    Verify(VerifyArgs),
    /// Replay a multifinger operation trace on the reference machine and the simulation.
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Check {
    Off,
    Final,
    EveryOp,
}

#[derive(clap::Args)]
pub struct RunArgs {
    /// Shorthand: ALGO [WORKLOAD] [n=N] [m=M] [seed=S].
    words: Vec<String>,
    /// Algorithm: splay, mtr, balanced, combine:A+B, combine:A+B+C. Repeat or comma-separate.
    #[arg(long, value_delimiter = ',')]
    algo: Vec<String>,
    /// Workload: sequential, uniform, zipf(θ), working_set(w), alternating_extremes, file(PATH).
    #[arg(long)]
    workload: Vec<String>,
    /// Number of keys. Repeat or comma-separate.
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    /// Number of accesses (default 10n).
    #[arg(long)]
    m: Option<usize>,
    /// Workload seed. Repeat or comma-separate.
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    /// Initial tree as `key(left,right)` text; keys must be 1..=n.
    #[arg(long)]
    initial_tree: Option<PathBuf>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "off")]
    check_invariants: Check,
    /// Tuning: d1, C, B (aug words per node), W (words per buffer cell).
    #[arg(long = "config", value_name = "K=V")]
    config: Vec<String>,
    /// Print every node's buffer cells and the combiner round logs to stderr.
    #[arg(long)]
    dump_buffers: bool,
}

#[derive(clap::Args)]
pub struct VerifyArgs {
    /// Suites to run.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "all")]
    suite: Vec<verify::Suite>,
    /// Seed for the random cases.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(clap::Args)]
pub struct ReplayArgs {
    /// Trace file: one `finger op` pair per line, op in {P, L, R, T}.
    trace: PathBuf,
    /// Initial tree as `key(left,right)` text.
    #[arg(long, conflicts_with = "n")]
    initial_tree: Option<PathBuf>,
    /// Start from a balanced tree on keys 1..=n.
    #[arg(long)]
    n: Option<usize>,
    /// Number of fingers (default: one more than the largest finger in the trace).
    #[arg(long)]
    fingers: Option<usize>,
}

/// A failure with the exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    pub fn usage(msg: impl Into<String>) -> Failure {
        Failure { code: USAGE, msg: msg.into() }
    }

    pub fn violation(msg: impl Into<String>) -> Failure {
        Failure { code: VIOLATION, msg: msg.into() }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run(a) => run::run(a),
        Cmd::Verify(a) => verify::verify(a),
        Cmd::Replay(a) => verify::replay(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
