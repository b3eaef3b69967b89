//! `meg`: run scenarios and width analyses, write CSV artifacts.

mod verify;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use meg::report::{fmt_sig, monte_carlo_csv, pmf_csv, rounds_csv, trajectory_csv};
use meg::sim::{run_scenario_with, width_series_csv, RoundMode, RunSummary, ScenarioSpec, SimError, SimOptions, SpecError};
use meg::urn::{
    mean_trajectory, monte_carlo_trajectory, pmf_removed, rounds_until_convergence, UrnError, UrnParams,
};

const OUT_ENV: &str = "MEG_OUT_DIR";

/// `print!` that tolerates a closed stdout, as when piped into `head`.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = write!(std::io::stdout().lock(), $($arg)*);
    }};
}

#[derive(Parser)]
#[command(name = "meg", version, about = "Replicated event graph simulator and width analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and check the consistency verdicts.
    Sim(SimArgs),
    /// Analyse the forward-extremity urn.
    #[command(subcommand)]
    Width(WidthCommand),
    /// Run built-in self checks.
    Verify {
        #[arg(value_enum)]
        suite: Suite,
    },
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the seed in the scenario file.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Synchronize all replicas between rounds, ignoring the network.
    #[arg(long)]
    lockstep: bool,
    #[arg(long, default_value_t = 0)]
    initial_width: usize,
    #[arg(long, default_value_t = 10)]
    round_interval: u64,
}

#[derive(Subcommand)]
enum WidthCommand {
    /// Mean-field trajectory of the expected width.
    Expect {
        #[arg(long)]
        u0: f64,
        #[arg(long)]
        d: u64,
        #[arg(long)]
        k: u64,
        #[arg(long)]
        rounds: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Distribution of the extremities removed in one round.
    Pmf {
        #[arg(long)]
        u: u64,
        #[arg(long)]
        d: u64,
        #[arg(long)]
        k: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rounds until the expected width settles, over a grid of d and k.
    Rounds {
        #[arg(long)]
        d: Range,
        #[arg(long)]
        k: Range,
        /// Start each run at this multiple of k.
        #[arg(long, default_value_t = 100)]
        u0_mult: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo trajectory with a 95% band.
    Mc {
        #[arg(long)]
        u0: u64,
        #[arg(long)]
        d: u64,
        #[arg(long)]
        k: u64,
        #[arg(long)]
        rounds: u64,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Urn,
    Crdt,
    Sim,
    All,
}

/// Inclusive `a..b` or a single value.
#[derive(Clone, Copy, Debug)]
struct Range {
    lo: u64,
    hi: u64,
}

impl FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse = |t: &str| t.trim().parse::<u64>().map_err(|e| format!("{t:?}: {e}"));
        let (lo, hi) = match s.split_once("..") {
            Some((a, b)) => (parse(a)?, parse(b.strip_prefix('=').unwrap_or(b))?),
            None => {
                let v = parse(s)?;
                (v, v)
            }
        };
        if lo > hi {
            return Err(format!("empty range {s}"));
        }
        Ok(Range { lo, hi })
    }
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<UrnError> for Failure {
    fn from(e: UrnError) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

/// `MEG_OUT_DIR` wins over the flag.
fn out_dir(flag: Option<&Path>) -> Option<PathBuf> {
    std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from).or_else(|| flag.map(Path::to_path_buf))
}

fn write_artifact(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, Failure> {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| io_failure(&path, e))?;
    Ok(path)
}

/// Writes the CSV to the output directory if there is one, else to stdout.
fn emit(dir: Option<PathBuf>, name: &str, csv: &str) -> Result<(), Failure> {
    match dir {
        Some(dir) => {
            let path = write_artifact(&dir, name, csv)?;
            say!("{}\n", path.display());
        }
        None => say!("{csv}"),
    }
    Ok(())
}

fn run_sim(args: SimArgs) -> Result<(), Failure> {
    let mut spec = ScenarioSpec::from_path(&args.scenario).map_err(|e| match e {
        SpecError::Io(msg) => Failure::Runtime(msg),
        other => Failure::Usage(other.to_string()),
    })?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if args.round_interval == 0 {
        return Err(Failure::Usage(SpecError::ZeroInterval.to_string()));
    }
    let opts = SimOptions {
        mode: if args.lockstep { RoundMode::Lockstep } else { RoundMode::FreeRunning },
        round_interval: args.round_interval,
        initial_width: args.initial_width,
        ..SimOptions::default()
    };
    let (metrics, verdict) = run_scenario_with(&spec, &opts).map_err(|e| match e {
        SimError::Spec(e) => Failure::Usage(e.to_string()),
        other => Failure::Runtime(other.to_string()),
    })?;

    let dir = out_dir(Some(&args.out)).expect("flag has a default");
    let stem = args.scenario.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
    let base = format!("{stem}-seed{}", spec.seed);
    let summary = RunSummary::new(&metrics, verdict);
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    write_artifact(&dir, &format!("{base}.summary.json"), &json)?;
    write_artifact(&dir, &format!("{base}.width.csv"), &width_series_csv(&metrics))?;
    write_artifact(&dir, &format!("{base}.trace.tsv"), &(metrics.trace.join("\n") + "\n"))?;

    say!("strong_convergence {}\n", verdict.strong_convergence);
    say!("eventual_delivery {}\n", verdict.eventual_delivery);
    say!("termination {}\n", verdict.termination);
    say!("dag_invariants {}\n", verdict.dag_invariants);
    for (r, d) in summary.final_digests.iter().enumerate() {
        let tag = if summary.correct[r] { "" } else { " (faulty)" };
        say!("replica {r} digest {} width {}{tag}\n", &d[..16], summary.final_widths[r]);
    }
    say!("artifacts {}\n", dir.join(&base).display());
    if verdict.all() {
        Ok(())
    } else {
        Err(Failure::Runtime("verdict failed".into()))
    }
}

fn run_width(cmd: WidthCommand) -> Result<(), Failure> {
    match cmd {
        WidthCommand::Expect { u0, d, k, rounds, out } => {
            if !(u0.is_finite() && u0 > 0.0) {
                return Err(Failure::Usage(format!("u0 must be positive, got {u0}")));
            }
            let rows = mean_trajectory(u0, d, k, rounds)?;
            let name = format!("trajectory-u0{}-d{d}-k{k}-r{rounds}.csv", fmt_sig(u0));
            emit(out_dir(out.as_deref()), &name, &trajectory_csv(&rows))
        }
        WidthCommand::Pmf { u, d, k, out } => {
            let pmf = pmf_removed(u, d, k)?;
            emit(out_dir(out.as_deref()), &format!("pmf-u{u}-d{d}-k{k}.csv"), &pmf_csv(&pmf))
        }
        WidthCommand::Rounds { d, k, u0_mult, out } => {
            if u0_mult == 0 {
                return Err(Failure::Usage("u0-mult must be positive".into()));
            }
            let mut rows = Vec::new();
            for k in k.lo..=k.hi {
                for d in d.lo..=d.hi {
                    UrnParams::new(u0_mult * k, d, k)?;
                    rows.push((d, k, rounds_until_convergence((u0_mult * k) as f64, d, k)?));
                }
            }
            let name = format!("rounds-d{}-{}-k{}-{}-m{u0_mult}.csv", d.lo, d.hi, k.lo, k.hi);
            emit(out_dir(out.as_deref()), &name, &rounds_csv(&rows))
        }
        WidthCommand::Mc { u0, d, k, rounds, trials, seed, out } => {
            if d < 2 {
                return Err(UrnError::DrawSize(d).into());
            }
            if k == 0 {
                return Err(UrnError::NoDrawings.into());
            }
            let rows = monte_carlo_trajectory(u0, d, k, rounds, trials, seed)?;
            let name = format!("mc-u0{u0}-d{d}-k{k}-r{rounds}-t{trials}-seed{seed}.csv");
            emit(out_dir(out.as_deref()), &name, &monte_carlo_csv(&rows))
        }
    }
}

fn run_verify(suite: Suite) -> Result<(), Failure> {
    let results = match suite {
        Suite::Urn => verify::urn(),
        Suite::Crdt => verify::crdt(),
        Suite::Sim => verify::sim(),
        Suite::All => [verify::urn(), verify::crdt(), verify::sim()].concat(),
    };
    let mut ok = true;
    for (name, passed) in &results {
        say!("{} {name}\n", if *passed { "PASS" } else { "FAIL" });
        ok &= passed;
    }
    if ok {
        Ok(())
    } else {
        Err(Failure::Runtime("verification failed".into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sim(args) => run_sim(args),
        Command::Width(cmd) => run_width(cmd),
        Command::Verify { suite } => run_verify(suite),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try 'meg --help'.");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
