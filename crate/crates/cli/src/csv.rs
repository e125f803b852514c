//! CSV emission. Trace files carry one row per retained slot; the summary
//! file carries per-seed and mean rows per scheduler and segment. Floats
//! are printed with 9 significant digits.

use std::fs::File;
use std::io::{BufWriter, Result, Write};
use std::path::Path;

use fairmac_core::environment::{running_utility, RunTrace};
use fairmac_core::utility::UtilitySpec;

use crate::config::SchedulerKind;
use crate::runner::{SummaryRow, RNG_NAME};

fn sig(x: f64) -> String {
    format!("{x:.8e}")
}

/// Trace filenames embed the generator name and seed.
pub fn trace_filename(scheduler: SchedulerKind, seed: u64) -> String {
    format!("trace_{scheduler}_{RNG_NAME}_seed{seed}.csv")
}

/// Writes the per-slot trace, keeping slots where `t % stride == 0`. The
/// running utility restarts at each segment boundary so every row is
/// comparable to its own segment's optimum. With `debug_x` the per-user
/// success indicators are appended as extra columns.
pub fn write_trace_csv(
    trace: &RunTrace,
    spec: &UtilitySpec,
    phi_stars: &[f64],
    stride: u64,
    debug_x: bool,
    path: &Path,
) -> Result<()> {
    let file = File::create(path)?;
    let mut out = BufWriter::new(file);
    write!(out, "t,segment,utility_running,phi_star,queue_max,assigned_pairs,successes")?;
    if debug_x {
        for i in 0..trace.n() {
            write!(out, ",x_{i}")?;
        }
    }
    writeln!(out)?;

    let series = running_utility(trace, spec, true)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
    let starts = trace.segment_starts();
    let mut segment = 0usize;
    for (idx, record) in trace.records().iter().enumerate() {
        while segment + 1 < starts.len() && starts[segment + 1] <= record.t {
            segment += 1;
        }
        if record.t % stride != 0 {
            continue;
        }
        write!(
            out,
            "{},{},{},{},{},{},{}",
            record.t,
            segment + 1,
            sig(series[idx]),
            sig(phi_stars[segment]),
            sig(record.queue_max),
            record.assigned,
            record.successes,
        )?;
        if debug_x {
            for x in trace.x_at(idx) {
                write!(out, ",{}", x as u8)?;
            }
        }
        writeln!(out)?;
    }
    out.flush()
}

pub fn write_summary_csv(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut out = BufWriter::new(file);
    writeln!(out, "scheduler,segment,seed,phi_star,utility_final,gap")?;
    for row in rows {
        let seed = row.seed.map_or_else(|| "mean".to_string(), |seed| seed.to_string());
        writeln!(
            out,
            "{},{},{},{},{},{}",
            row.scheduler,
            row.segment,
            seed,
            sig(row.phi_star),
            sig(row.utility_final),
            sig(row.gap),
        )?;
    }
    out.flush()
}
