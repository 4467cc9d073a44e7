use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use priostream::harness::{self, Config, SweepAxis};
use priostream::policy::PolicyKind;
use priostream::scenario::ClockMode;
use priostream::scheduler::SchedulerKind;

/// Runs stream scheduling experiments from a scenario file.
#[derive(Parser, Debug)]
#[command(name = "priostream", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario once and write latencies.csv, summary.json and
    /// optionally trace.csv.
    Run(Common),
    /// Run a scenario once per value of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// quantum | batch | workers | ingestion | perturbation_sigma
        #[arg(long)]
        axis: String,
        /// Comma-separated values, e.g. `1,10,100`.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// cameo | fifo | local-first
    #[arg(long)]
    scheduler: Option<SchedulerKind>,
    /// llf | edf | sjf | token
    #[arg(long)]
    policy: Option<PolicyKind>,
    #[arg(long)]
    quantum_ms: Option<i64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    aging_ms: Option<i64>,
    /// Also write trace.csv.
    #[arg(long)]
    trace: bool,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<ClockMode>,
}

fn parse_mode(s: &str) -> Result<ClockMode, String> {
    match s {
        "virtual" => Ok(ClockMode::Virtual),
        "wall" => Ok(ClockMode::Wall),
        other => Err(format!("unknown mode `{other}` (expected virtual or wall)")),
    }
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Common {
    /// Loads the config and applies command-line overrides.
    fn load(&self) -> anyhow::Result<(Config, u64)> {
        let mut cfg = Config::load(&self.config).with_context(|| format!("reading {}", self.config.display()))?;
        if let Some(k) = self.scheduler {
            cfg.scheduler.kind = k;
        }
        if let Some(p) = self.policy {
            cfg.scheduler.policy = p;
        }
        if let Some(q) = self.quantum_ms {
            cfg.scheduler.quantum_ms = q;
        }
        if let Some(w) = self.workers {
            cfg.scheduler.workers = w;
        }
        if let Some(a) = self.aging_ms {
            cfg.scheduler.aging_ms = Some(a);
        }
        if let Some(m) = self.mode {
            cfg.runtime.mode = m;
        }
        cfg.runtime.trace |= self.trace;
        let seed = self.seed.unwrap_or(cfg.seed);
        Ok((cfg, seed))
    }
}

fn ms(v: Option<i64>) -> String {
    v.map_or_else(|| "-".into(), |v| v.to_string())
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run(common) => {
            let (cfg, seed) = common.load().map_err(Failure::Config)?;
            cfg.scenario(seed).map_err(|e| Failure::Config(e.into()))?;
            let summary = harness::run_to_dir(&cfg, seed, &common.out).map_err(|e| Failure::Runtime(e.into()))?;
            println!(
                "{} outputs, median {} ms, p99 {} ms, written to {}",
                summary.overall.outputs,
                ms(summary.overall.median_ms),
                ms(summary.overall.p99_ms),
                common.out.display()
            );
            for (name, g) in &summary.groups {
                println!(
                    "  {name}: median {} ms, p99 {} ms, success {:.3}",
                    ms(g.latency.median_ms),
                    ms(g.latency.p99_ms),
                    g.latency.success_rate.unwrap_or(f64::NAN)
                );
            }
            Ok(())
        }
        Command::Sweep { common, axis, values } => {
            let (cfg, seed) = common.load().map_err(Failure::Config)?;
            let axis: SweepAxis = axis.parse().map_err(|e: priostream::Error| Failure::Config(e.into()))?;
            for &v in &values {
                axis.apply(&cfg, v)
                    .and_then(|c| c.scenario(seed))
                    .map_err(|e| Failure::Config(e.into()))?;
            }
            let rows = harness::sweep_to_dir(&cfg, axis, &values, seed, &common.out)
                .map_err(|e| Failure::Runtime(e.into()))?;
            for r in rows.iter().filter(|r| r.group != "*") {
                println!(
                    "{axis}={} {}: median {} ms, p99 {} ms",
                    r.value,
                    r.group,
                    ms(r.median_ms),
                    ms(r.p99_ms)
                );
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("run failed: {e:#}");
            ExitCode::from(2)
        }
    }
}
