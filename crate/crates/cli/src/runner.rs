//! Experiment orchestration: one deterministic simulation per
//! (scheduler, seed), fanned out across threads, then summarized per
//! segment against the offline optimum.

use std::path::PathBuf;

use anyhow::{Context, Result};
use fairmac_core::adaptive_mac::{AdaptiveMac, SingleChannelMac};
use fairmac_core::environment::{
    draw_feedback, running_utility, solve_p2_reference, RunTrace, SlotRecord,
};
use fairmac_core::ucb_mac::UcbMac;
use fairmac_core::utility::UtilitySpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{RunConfig, SchedulerKind};
use crate::csv;

/// The generator behind every run; recorded in trace filenames.
pub const RNG_NAME: &str = "chacha8";

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub scheduler: SchedulerKind,
    pub seed: u64,
    pub trace: RunTrace,
}

/// One summary line; `seed` is `None` on the across-seeds mean row.
#[derive(Clone, Debug)]
pub struct SummaryRow {
    pub scheduler: SchedulerKind,
    pub segment: usize,
    pub seed: Option<u64>,
    pub phi_star: f64,
    pub utility_final: f64,
    pub gap: f64,
}

pub struct ExperimentOutput {
    pub outcomes: Vec<RunOutcome>,
    pub rows: Vec<SummaryRow>,
    pub phi_stars: Vec<f64>,
    pub trace_paths: Vec<PathBuf>,
    pub summary_path: PathBuf,
}

fn max_queue(queues: &[f64]) -> f64 {
    queues.iter().cloned().fold(0.0, f64::max)
}

/// Runs one scheduler for the full horizon on one seeded stream. The same
/// stream drives both the scheduler's sampling and the environment draws.
pub fn simulate(config: &RunConfig, scheduler: SchedulerKind, seed: u64) -> Result<RunOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<u64> =
        config.schedule.segments().iter().map(|segment| segment.start).collect();
    let mut trace = RunTrace::new(config.n, starts)?;
    match scheduler {
        SchedulerKind::Adaptive => {
            let mut mac =
                AdaptiveMac::new(config.n, config.m, config.utility.clone(), config.adaptive)?;
            for t in 1..=config.horizon {
                let assignment = mac.decide(&mut rng)?;
                let feedback = draw_feedback(&config.schedule, t, &assignment, &mut rng)?;
                mac.update(&feedback)?;
                trace.push(SlotRecord::from_slot(t, &feedback, max_queue(mac.queues())))?;
            }
        }
        SchedulerKind::SingleChannel => {
            let mut mac =
                SingleChannelMac::new(config.n, config.m, config.utility.clone(), config.adaptive)?;
            for t in 1..=config.horizon {
                let assignment = mac.decide(&mut rng)?;
                let feedback = draw_feedback(&config.schedule, t, &assignment, &mut rng)?;
                mac.update(&feedback)?;
                trace.push(SlotRecord::from_slot(t, &feedback, max_queue(mac.queues())))?;
            }
        }
        SchedulerKind::Ucb => {
            let mut mac = UcbMac::new(config.n, config.m, config.utility.clone(), config.ucb)?;
            for t in 1..=config.horizon {
                let assignment = mac.decide()?;
                let feedback = draw_feedback(&config.schedule, t, &assignment, &mut rng)?;
                mac.update(&feedback)?;
                trace.push(SlotRecord::from_slot(t, &feedback, max_queue(mac.queues())))?;
            }
        }
    }
    Ok(RunOutcome { scheduler, seed, trace })
}

/// Offline optimum per schedule segment.
pub fn segment_phi_stars(config: &RunConfig) -> Result<Vec<f64>> {
    config
        .schedule
        .segments()
        .iter()
        .enumerate()
        .map(|(k, segment)| {
            let solution = solve_p2_reference(&segment.q, &config.utility)
                .with_context(|| format!("oracle failed on segment {}", k + 1))?;
            Ok(solution.phi_star)
        })
        .collect()
}

/// The segment-reset running utility at each segment's final recorded slot.
pub fn segment_final_utilities(trace: &RunTrace, spec: &UtilitySpec) -> Result<Vec<f64>> {
    let series = running_utility(trace, spec, true)?;
    let starts = trace.segment_starts();
    let ends = (0..starts.len()).map(|k| {
        let next = starts.get(k + 1).copied().unwrap_or(u64::MAX);
        (next - 1).min(trace.len() as u64)
    });
    Ok(ends
        .map(|end| if end == 0 { f64::NAN } else { series[(end - 1) as usize] })
        .collect())
}

/// Every (scheduler, seed) simulation, seeds fanned out across threads.
pub fn run_all(config: &RunConfig) -> Result<Vec<RunOutcome>> {
    let jobs: Vec<(SchedulerKind, u64)> = config
        .schedulers
        .iter()
        .flat_map(|&scheduler| config.seeds.iter().map(move |&seed| (scheduler, seed)))
        .collect();
    jobs.into_par_iter()
        .map(|(scheduler, seed)| simulate(config, scheduler, seed))
        .collect()
}

/// Per-seed rows then an across-seeds mean row, per scheduler and segment.
pub fn summarize(
    config: &RunConfig,
    outcomes: &[RunOutcome],
    phi_stars: &[f64],
) -> Result<Vec<SummaryRow>> {
    let mut rows = Vec::new();
    for &scheduler in &config.schedulers {
        let finals: Vec<(u64, Vec<f64>)> = outcomes
            .iter()
            .filter(|outcome| outcome.scheduler == scheduler)
            .map(|outcome| {
                Ok((outcome.seed, segment_final_utilities(&outcome.trace, &config.utility)?))
            })
            .collect::<Result<_>>()?;
        for (k, &phi_star) in phi_stars.iter().enumerate() {
            for (seed, utilities) in &finals {
                rows.push(SummaryRow {
                    scheduler,
                    segment: k + 1,
                    seed: Some(*seed),
                    phi_star,
                    utility_final: utilities[k],
                    gap: phi_star - utilities[k],
                });
            }
            let mean =
                finals.iter().map(|(_, u)| u[k]).sum::<f64>() / finals.len().max(1) as f64;
            rows.push(SummaryRow {
                scheduler,
                segment: k + 1,
                seed: None,
                phi_star,
                utility_final: mean,
                gap: phi_star - mean,
            });
        }
    }
    Ok(rows)
}

/// Output directory: the `FAIRMAC_OUTPUT_DIR` environment variable wins
/// over the config's `output` key.
pub fn resolve_output_dir(config: &RunConfig) -> PathBuf {
    match std::env::var_os("FAIRMAC_OUTPUT_DIR") {
        Some(dir) => PathBuf::from(dir),
        None => config.output.clone(),
    }
}

/// Full pipeline: simulate, summarize, and write one trace CSV per run
/// plus `summary.csv` into the output directory.
pub fn run_experiment(config: &RunConfig) -> Result<ExperimentOutput> {
    let out_dir = resolve_output_dir(config);
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("cannot create output directory {}", out_dir.display()))?;
    let phi_stars = segment_phi_stars(config)?;
    let outcomes = run_all(config)?;
    let rows = summarize(config, &outcomes, &phi_stars)?;

    let mut trace_paths = Vec::with_capacity(outcomes.len());
    for outcome in &outcomes {
        let path = out_dir.join(csv::trace_filename(outcome.scheduler, outcome.seed));
        csv::write_trace_csv(
            &outcome.trace,
            &config.utility,
            &phi_stars,
            config.stride,
            config.debug_x,
            &path,
        )
        .with_context(|| format!("cannot write {}", path.display()))?;
        trace_paths.push(path);
    }
    let summary_path = out_dir.join("summary.csv");
    csv::write_summary_csv(&rows, &summary_path)
        .with_context(|| format!("cannot write {}", summary_path.display()))?;
    Ok(ExperimentOutput { outcomes, rows, phi_stars, trace_paths, summary_path })
}
