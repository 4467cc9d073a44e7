//! Median latency of both tenant groups as bulk-analytics ingestion grows,
//! with and without window-aware priorities.
//!
//! cargo run --release --example semantics_sweep

use priostream::harness::Summary;
use priostream::presets::semantics_mix;
use priostream::runtime::run;
use priostream::scheduler::SchedulerKind;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = 3;
    println!(
        "{:>5} {:<22} {:>8} {:>8} {:>6}",
        "rate", "scheduler", "LS p50", "BA p50", "util"
    );
    for rate in [0.5, 1.0, 1.5, 2.0] {
        for (kind, aware, label) in [
            (SchedulerKind::Priority, true, "cameo"),
            (SchedulerKind::Priority, false, "cameo (no semantics)"),
            (SchedulerKind::Fifo, true, "fifo"),
        ] {
            let s = Summary::from_report(&run(&semantics_mix(kind, rate, aware, seed)?)?, seed);
            let median = |g: &str| s.group(g).and_then(|g| g.latency.median_ms).unwrap_or(0);
            println!(
                "{rate:>5} {label:<22} {:>8} {:>8} {:>6.2}",
                median("LS"),
                median("BA"),
                s.utilization
            );
        }
    }
    Ok(())
}
