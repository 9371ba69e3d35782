use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use obisim::config::{ConfigError, RawConfig};
use obisim::engine::{run_simulation_with, EngineError, RunOptions, RunResult, SimConfig};
use obisim::experiment::{
    default_intervals, interval_csv, run_arm, run_experiment, runs_csv, sweep_csv, table_csv, ExperimentError,
    ExperimentPlan, ExperimentReport, RunSink, SWEEP_INTERVALS,
};
use obisim::persist::{find_runs, read_run, recompute, run_dir, write_run, PersistError, RunSummary};
use obisim::scenarios::ScenarioKind;

const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_INFEASIBLE: u8 = 4;
const EXIT_MISMATCH: u8 = 5;

#[derive(Parser)]
#[command(name = "obisim", version, about = "Artificial market with plain and OBI-aware execution algorithms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one seed and write its run directory
    Run(RunArgs),
    /// Simulate a list of seeds with one config
    Batch(BatchArgs),
    /// Paired OAA-then-AA experiment at one or more OAA intervals
    Experiment(ExperimentArgs),
    /// Trading cost against order count over an OAA interval grid
    Sweep(ExperimentArgs),
    /// Recompute metrics from stored run directories and compare
    Report(ReportArgs),
}

#[derive(Args)]
struct Common {
    /// TOML config file; command-line flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output root
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[command(flatten)]
    overrides: RawConfig,
}

impl Common {
    fn sim_config(&self) -> Result<SimConfig, ConfigError> {
        let file = match &self.config {
            Some(path) => RawConfig::load(path)?,
            None => RawConfig::default(),
        };
        file.merged(&self.overrides).validate()
    }
}

#[derive(Args)]
struct SeedArgs {
    /// Run seeds 1..=N
    #[arg(long, default_value_t = 25, conflicts_with = "seed_list")]
    seeds: u64,
    /// Explicit comma-separated seeds
    #[arg(long, value_delimiter = ',')]
    seed_list: Option<Vec<u64>>,
    /// Parallel simulations
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
}

impl SeedArgs {
    fn list(&self) -> Vec<u64> {
        self.seed_list.clone().unwrap_or_else(|| (1..=self.seeds).collect())
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Record every agent's weights each time the step is a multiple of N
    #[arg(long)]
    weight_trace_every: Option<u64>,
}

#[derive(Args)]
struct BatchArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    seeds: SeedArgs,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    seeds: SeedArgs,
    /// OAA decision intervals (comma-separated)
    #[arg(long, value_delimiter = ',')]
    intervals: Option<Vec<u64>>,
    /// Also write every run directory under <out-dir>/l<interval>/
    #[arg(long)]
    keep_runs: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory searched recursively for run directories
    dir: PathBuf,
}

#[derive(Debug, thiserror::Error)]
#[error("{0} of {1} runs do not reproduce their stored metrics")]
struct ReportMismatch(usize, usize);

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Batch(args) => cmd_batch(args),
        Command::Experiment(args) => cmd_experiment(args, false),
        Command::Sweep(args) => cmd_experiment(args, true),
        Command::Report(args) => cmd_report(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain().find_map(classify).unwrap_or(1)
}

// Transparent wrappers hide their inner error from `chain`, so the
// wrapper variants are unpacked here.
fn classify(cause: &(dyn std::error::Error + 'static)) -> Option<u8> {
    if cause.is::<ConfigError>() {
        return Some(EXIT_CONFIG);
    }
    if cause.is::<ReportMismatch>() {
        return Some(EXIT_MISMATCH);
    }
    if cause.is::<std::io::Error>() {
        return Some(EXIT_IO);
    }
    if let Some(e) = cause.downcast_ref::<EngineError>() {
        return Some(match e {
            EngineError::Config(_) | EngineError::DuplicateSeed(_) => EXIT_CONFIG,
            EngineError::Pool(_) => 1,
        });
    }
    if let Some(e) = cause.downcast_ref::<PersistError>() {
        return Some(match e {
            PersistError::Config(_) => EXIT_CONFIG,
            _ => EXIT_IO,
        });
    }
    if let Some(e) = cause.downcast_ref::<ExperimentError>() {
        return match e {
            ExperimentError::Equalize { .. } => Some(EXIT_INFEASIBLE),
            ExperimentError::Engine(inner) => classify(inner),
            ExperimentError::Persist(inner) => classify(inner),
            ExperimentError::Empty(_) => Some(EXIT_CONFIG),
        };
    }
    None
}

fn print_summary(dir: &Path, s: &RunSummary) {
    let m = &s.metrics;
    println!(
        "{}: seed={} trades={} fills={} tc={} avg_price={:.2} kurtosis={} concordance={}",
        dir.display(),
        s.seed,
        m.n_trades,
        m.n_fills,
        m.tc.map_or("-".into(), |v| format!("{v:.2}")),
        m.avg_market_price,
        m.kurtosis.map_or("-".into(), |v| format!("{v:.3}")),
        m.obi_concordance,
    );
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let cfg = args.common.sim_config()?;
    let opts = RunOptions { weight_trace_every: args.weight_trace_every };
    let run = run_simulation_with(&cfg, opts)?;
    let dir = run_dir(&args.common.out_dir, &cfg);
    let summary = write_run(&dir, &cfg, &run)?;
    print_summary(&dir, &summary);
    Ok(())
}

fn cmd_batch(args: BatchArgs) -> Result<()> {
    let cfg = args.common.sim_config()?;
    let seeds = args.seeds.list();
    let root = &args.common.out_dir;
    let mut summaries = Vec::new();
    let mut sink = |c: &SimConfig, run: &RunResult| {
        let dir = run_dir(root, c);
        let summary = write_run(&dir, c, run)?;
        print_summary(&dir, &summary);
        summaries.push(summary);
        Ok(())
    };
    run_arm(&cfg, &seeds, args.seeds.workers, Some(&mut sink))?;
    let mut csv = String::from("seed,orders,tc,avg_price,kurtosis,obi_concordance\n");
    for s in &summaries {
        let m = &s.metrics;
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.seed,
            m.n_fills,
            m.tc.map_or(String::new(), |v| v.to_string()),
            m.avg_market_price,
            m.kurtosis.map_or(String::new(), |v| v.to_string()),
            m.obi_concordance
        ));
    }
    let path = root.join(format!("{}_{}_batch.csv", cfg.scenario.kind, obisim::persist::algo_label(&cfg)));
    fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| PersistError::Io { path: path.to_path_buf(), source })?;
    Ok(())
}

fn cmd_experiment(args: ExperimentArgs, sweep: bool) -> Result<()> {
    let base = args.common.sim_config()?;
    let kind = base.scenario.kind;
    let intervals = args.intervals.clone().unwrap_or_else(|| {
        if sweep {
            SWEEP_INTERVALS.to_vec()
        } else {
            default_intervals(kind)
        }
    });
    if intervals.contains(&0) {
        bail!(ConfigError::Invalid(vec![obisim::config::FieldError {
            field: "intervals",
            message: "must be at least 1".into(),
        }]));
    }
    let root = args.common.out_dir.clone();
    fs::create_dir_all(&root).map_err(|source| PersistError::Io { path: root.clone(), source })?;
    let plan = ExperimentPlan {
        base,
        oaa_intervals: intervals,
        seeds: args.seeds.list(),
        workers: args.seeds.workers,
    };

    let report = if args.keep_runs {
        let mut current = plan.oaa_intervals[0];
        let mut sink = |c: &SimConfig, r: &RunResult| -> Result<(), PersistError> {
            let algo = c.algo.expect("experiment runs carry an algorithm");
            if algo.kind == obisim::AlgoKind::Oaa {
                current = algo.decision_interval;
            }
            write_run(&run_dir(&root.join(format!("l{current}")), c), c, r).map(|_| ())
        };
        run_experiment(&plan, Some(&mut sink as &mut RunSink))?
    } else {
        run_experiment(&plan, None)?
    };

    let stem = kind.as_str();
    write_text(&root.join(format!("{stem}_config.toml")), &plan.base.to_toml())?;
    write_text(
        &root.join(format!("{stem}_experiment.json")),
        &(serde_json::to_string_pretty(&report)? + "\n"),
    )?;
    write_text(&root.join(format!("{stem}_runs.csv")), &runs_csv(&report))?;
    if sweep {
        write_text(&root.join(format!("{stem}_sweep.csv")), &sweep_csv(&report))?;
    } else {
        write_text(&root.join(format!("{stem}_table.csv")), &table_csv(&report))?;
    }
    if matches!(kind, ScenarioKind::Crash | ScenarioKind::Surge) {
        write_text(&root.join(format!("{stem}_intervals.csv")), &interval_csv(&report))?;
    }
    print_report(&report);
    Ok(())
}

fn print_report(report: &ExperimentReport) {
    println!("scenario {} over {} seeds", report.scenario, report.seeds.len());
    for row in &report.rows {
        let tc = |s: Option<obisim::experiment::Stat>| s.map_or("-".into(), |s| format!("{:.2} ({:.2})", s.mean, s.sd));
        println!(
            "  OAA l={} orders={:.2} tc={} avg_price={:.2} | AA l={} orders={:.2} tc={} avg_price={:.2}",
            row.oaa_interval,
            row.oaa.orders.mean,
            tc(row.oaa.tc),
            row.oaa.avg_price.mean,
            row.aa.decision_interval,
            row.aa.orders.mean,
            tc(row.aa.tc),
            row.aa.avg_price.mean,
        );
    }
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let dirs = find_runs(&args.dir)?;
    if dirs.is_empty() {
        bail!(PersistError::Malformed { path: args.dir.clone(), what: "no run directories found".into() });
    }
    let mut bad = 0;
    println!("dir,scenario,algo,seed,orders,tc,avg_price,matches");
    for dir in &dirs {
        let stored = read_run(dir)?;
        let check = recompute(&stored);
        let ok = check.matches();
        bad += usize::from(!ok);
        let m = &check.recomputed;
        println!(
            "{},{},{},{},{},{},{},{}",
            dir.display(),
            stored.summary.scenario,
            stored.summary.algo,
            stored.summary.seed,
            m.n_fills,
            m.tc.map_or(String::new(), |v| v.to_string()),
            m.avg_market_price,
            ok
        );
    }
    if bad > 0 {
        bail!(ReportMismatch(bad, dirs.len()));
    }
    Ok(())
}
