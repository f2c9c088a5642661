use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use auglag_bo::harness::{
    self, read_trace_dir, run_experiment, run_single, summarize, ExperimentSpec, Method, Settings,
};
use auglag_bo::{Error, Result};

#[derive(Parser)]
#[command(name = "auglag-bo", version, about = "Augmented Lagrangian Bayesian optimization for constrained blackboxes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One optimization run; writes its trace as CSV.
    Run(RunArgs),
    /// Repeated runs with summary quantiles.
    Bench(BenchArgs),
    /// Summarize existing trace files.
    Table(TableArgs),
}

#[derive(Args)]
struct ProblemArgs {
    /// `toy` or `external`.
    #[arg(long)]
    problem: Option<String>,
    /// Shell command for an external blackbox (implies `--problem external`).
    #[arg(long)]
    blackbox_cmd: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    /// Number of constraints returned by the blackbox.
    #[arg(long)]
    m: Option<usize>,
    /// `blackbox` (first output slot) or `sum` (known objective sum of x).
    #[arg(long)]
    objective: Option<String>,
    /// Comma-separated lower bounds (default: unit box).
    #[arg(long)]
    lower: Option<String>,
    #[arg(long)]
    upper: Option<String>,
    /// Seconds to wait for each blackbox reply.
    #[arg(long)]
    timeout: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    /// Key-value settings file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    problem: ProblemArgs,
    /// EY, EI, EY-nomax, EI-nomax, SANN or OIC-random.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Trace file (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    problem: ProblemArgs,
    /// One or more methods, comma-separated.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    base_seed: Option<u64>,
    /// Comma-separated evaluation counts.
    #[arg(long)]
    checkpoints: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// Value substituted for reps without a valid point.
    #[arg(long)]
    placeholder: Option<f64>,
}

#[derive(Args)]
struct TableArgs {
    /// Directory of `<method>_repNNN.csv` files.
    #[arg(long)]
    traces: PathBuf,
    #[arg(long)]
    checkpoints: Option<String>,
    #[arg(long)]
    placeholder: Option<f64>,
    /// Summary file (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn put<T: ToString>(s: &mut Settings, key: &str, v: &Option<T>) {
    if let Some(v) = v {
        s.set(key, v.to_string());
    }
}

fn load(config: &Option<PathBuf>, flags: Settings) -> Result<Settings> {
    let mut s = match config {
        Some(path) => Settings::parse(&fs::read_to_string(path)?)?,
        None => Settings::default(),
    };
    s.merge(flags);
    Ok(s)
}

impl ProblemArgs {
    fn apply(&self, s: &mut Settings) {
        put(s, "problem", &self.problem);
        put(s, "blackbox-cmd", &self.blackbox_cmd);
        put(s, "dim", &self.dim);
        put(s, "m", &self.m);
        put(s, "objective", &self.objective);
        put(s, "lower", &self.lower);
        put(s, "upper", &self.upper);
        put(s, "timeout", &self.timeout);
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(args: RunArgs) -> Result<()> {
    let mut flags = Settings::default();
    args.problem.apply(&mut flags);
    put(&mut flags, "method", &args.method);
    put(&mut flags, "budget", &args.budget);
    put(&mut flags, "seed", &args.seed);
    put(&mut flags, "out", &args.out.as_ref().map(|p| p.display().to_string()));
    let s = load(&args.config, flags)?;

    let method: Method = s.parsed_or("method", "EI".to_string())?.parse()?;
    let trace = match run_single(&s.problem()?, method, s.parsed_or("budget", 100)?, s.parsed_or("seed", 0)?) {
        Ok(t) => t,
        Err(Error::Aborted { trace, source }) => {
            // keep what was evaluated before failing
            let mut w = output(&s.parsed("out")?)?;
            trace.write_csv(&mut w, 0)?;
            return Err(*source);
        }
        Err(e) => return Err(e),
    };
    let mut w = output(&s.parsed("out")?)?;
    trace.write_csv(&mut w, 0)?;
    if let Some(best) = trace.rows().last().and_then(|r| r.best_valid_f) {
        log::info!("best valid objective {best}");
    }
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let mut flags = Settings::default();
    args.problem.apply(&mut flags);
    put(&mut flags, "method", &args.method);
    put(&mut flags, "reps", &args.reps);
    put(&mut flags, "budget", &args.budget);
    put(&mut flags, "base-seed", &args.base_seed);
    put(&mut flags, "checkpoints", &args.checkpoints);
    put(&mut flags, "out", &args.out.as_ref().map(|p| p.display().to_string()));
    put(&mut flags, "workers", &args.workers);
    put(&mut flags, "placeholder", &args.placeholder);
    let spec = ExperimentSpec::from_settings(&load(&args.config, flags)?)?;
    let report = run_experiment(&spec)?;
    for f in &report.failures {
        eprintln!("warning: {} rep {} failed: {}", f.method, f.rep, f.error);
    }
    report.summary.write_csv(io::stdout().lock())
}

fn table(args: TableArgs) -> Result<()> {
    let groups = read_trace_dir(&args.traces)?;
    let checkpoints = match &args.checkpoints {
        Some(c) => {
            let mut s = Settings::default();
            s.set("checkpoints", c.as_str());
            s.list("checkpoints")?.unwrap_or_default()
        }
        None => {
            let shortest = groups.iter().flat_map(|(_, t)| t).map(|t| t.len()).min().unwrap_or(0);
            harness::default_checkpoints(shortest)
        }
    };
    let summary = summarize(&groups, &checkpoints, args.placeholder)?;
    let mut w = output(&args.out)?;
    summary.write_csv(&mut w)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Bench(a) => bench(a),
        Command::Table(a) => table(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
