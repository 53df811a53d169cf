//! Trial batteries and their output files.
//!
//! Layout of an output directory:
//!
//! ```text
//! results.csv      one row per (algorithm, N, seed); deterministic
//! timing.csv       wall time of the same rows
//! aggregate.csv    mean/std over seeds per (algorithm, N) plus paired win rate
//! manifest.toml    resolved config; `wbfo run manifest.toml` reproduces results.csv
//! trials/          <name>.replay.csv and, with planner.record_scores, <name>.scores.csv
//! plot/            cost_vs_n_<algorithm>.csv, success_rate.csv, steps.csv
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use rayon::prelude::*;
use wbfo_core::env::StepRecord;
use wbfo_core::experiment::{run_trial, TrialOutcome};
use wbfo_core::planner::ScoreRecord;
use wbfo_core::Algorithm;

use crate::config::ExperimentConfig;
use crate::stats::{aggregate, Aggregate};

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub experiment: String,
    pub slot: usize,
    pub algorithm: String,
    pub n_samples: usize,
    pub seed: u64,
    pub final_cost: f64,
    pub success: bool,
    pub steps: usize,
    pub mean_reward: f64,
    pub fault: bool,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub rows: Vec<TrialRow>,
    pub aggregates: Vec<Aggregate>,
    pub output_dir: PathBuf,
}

/// File stem for one trial. A repeated algorithm gets its slot appended.
fn trial_name(cfg: &ExperimentConfig, slot: usize, n: usize, seed: u64) -> String {
    let alg = cfg.algorithms[slot];
    let first = cfg.algorithms.iter().position(|a| *a == alg) == Some(slot);
    if first {
        format!("{alg}_n{n}_seed{seed}")
    } else {
        format!("{alg}-{slot}_n{n}_seed{seed}")
    }
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

fn write_replay(path: &Path, records: &[StepRecord]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let nx = records.first().map_or(0, |r| r.x.len());
    let nu = records.first().map_or(0, |r| r.u.len());
    let mut header = vec!["k".to_string()];
    header.extend((0..nx).map(|i| format!("x{i}")));
    header.extend((0..nu).map(|i| format!("u{i}")));
    header.extend(["reward", "task", "obstacle", "control"].map(String::from));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.k.to_string()];
        row.extend(r.x.iter().map(|v| fmt(*v)));
        row.extend(r.u.iter().map(|v| fmt(*v)));
        row.extend([r.reward, r.terms.task, r.terms.obstacle, r.terms.control].map(fmt));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One line per (step, iteration, dim, node): prior node value, update and
/// the noise scale used at that node. `delta / sigma²` is the score estimate.
fn write_scores(path: &Path, scores: &[ScoreRecord]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "iteration", "dim", "node", "prior", "delta", "sigma"])?;
    for s in scores {
        for d in 0..s.prior.nrows() {
            for k in 0..s.prior.ncols() {
                w.write_record([
                    s.step.to_string(),
                    s.iteration.to_string(),
                    d.to_string(),
                    k.to_string(),
                    fmt(s.prior[(d, k)]),
                    fmt(s.delta[(d, k)]),
                    fmt(s.sigma[k]),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

struct Job {
    slot: usize,
    algorithm: Algorithm,
    n_samples: usize,
    seed: u64,
}

fn run_job(cfg: &ExperimentConfig, job: &Job, trials_dir: &Path) -> anyhow::Result<TrialRow> {
    let spec = cfg.trial_spec(job.algorithm, job.n_samples, job.seed);
    let name = trial_name(cfg, job.slot, job.n_samples, job.seed);
    let start = Instant::now();
    let result = run_trial(&spec);
    let wall_time_s = start.elapsed().as_secs_f64();
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            log::warn!("trial {name} failed: {e}");
            TrialOutcome {
                final_cost: f64::INFINITY,
                success: false,
                steps: 0,
                mean_reward: f64::NAN,
                final_task_error: f64::NAN,
                replay: Vec::new(),
                scores: Vec::new(),
                history: Vec::new(),
                fault: Some(e.to_string()),
            }
        }
    };
    if let Some(f) = &outcome.fault {
        log::warn!("trial {name} faulted: {f}");
    }
    write_replay(&trials_dir.join(format!("{name}.replay.csv")), &outcome.replay)
        .with_context(|| format!("writing replay for {name}"))?;
    if cfg.planner.record_scores {
        write_scores(&trials_dir.join(format!("{name}.scores.csv")), &outcome.scores)
            .with_context(|| format!("writing scores for {name}"))?;
    }
    Ok(TrialRow {
        experiment: cfg.id.clone(),
        slot: job.slot,
        algorithm: job.algorithm.name().to_string(),
        n_samples: job.n_samples,
        seed: job.seed,
        final_cost: if outcome.fault.is_some() { f64::INFINITY } else { outcome.final_cost },
        success: outcome.success,
        steps: outcome.steps,
        mean_reward: outcome.mean_reward,
        fault: outcome.fault.is_some(),
        wall_time_s,
    })
}

/// Runs every (algorithm, N, seed) combination of `cfg` with at most
/// `workers` concurrent trials (0 = one per core) and writes all outputs.
/// Row order is fixed by the config, not by completion order.
pub fn execute(cfg: &ExperimentConfig, workers: usize) -> anyhow::Result<Report> {
    let out = cfg.output_dir.clone();
    let trials_dir = out.join("trials");
    fs::create_dir_all(&trials_dir).with_context(|| format!("creating {}", trials_dir.display()))?;
    fs::write(out.join("manifest.toml"), cfg.to_manifest()).context("writing manifest")?;

    let mut jobs = Vec::new();
    for (slot, algorithm) in cfg.algorithms.iter().enumerate() {
        for &n_samples in &cfg.sample_sweep {
            for &seed in &cfg.seeds {
                jobs.push(Job { slot, algorithm: *algorithm, n_samples, seed });
            }
        }
    }
    log::info!("{}: {} trials on {} workers", cfg.id, jobs.len(), workers);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    let rows = pool.install(|| jobs.par_iter().map(|j| run_job(cfg, j, &trials_dir)).collect::<anyhow::Result<Vec<_>>>())?;

    write_results(&out.join("results.csv"), &rows)?;
    write_timing(&out.join("timing.csv"), &rows)?;
    let aggregates = aggregate(&rows);
    write_aggregates(&out.join("aggregate.csv"), &aggregates)?;
    export_plotdata(&aggregates, &out.join("plot"))?;
    Ok(Report { rows, aggregates, output_dir: out })
}

pub fn write_results(path: &Path, rows: &[TrialRow]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["experiment", "algorithm", "n_samples", "seed", "final_cost", "success", "steps", "mean_reward", "fault"])?;
    for r in rows {
        w.write_record([
            r.experiment.clone(),
            r.algorithm.clone(),
            r.n_samples.to_string(),
            r.seed.to_string(),
            fmt(r.final_cost),
            u8::from(r.success).to_string(),
            r.steps.to_string(),
            fmt(r.mean_reward),
            u8::from(r.fault).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_timing(path: &Path, rows: &[TrialRow]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["experiment", "algorithm", "n_samples", "seed", "wall_time_s"])?;
    for r in rows {
        w.write_record([
            r.experiment.clone(),
            r.algorithm.clone(),
            r.n_samples.to_string(),
            r.seed.to_string(),
            fmt(r.wall_time_s),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_aggregates(path: &Path, aggs: &[Aggregate]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "experiment",
        "algorithm",
        "n_samples",
        "trials",
        "mean_cost",
        "std_cost",
        "success_rate",
        "mean_steps",
        "std_steps",
        "mean_reward",
        "faults",
        "win_rate",
    ])?;
    for a in aggs {
        w.write_record([
            a.experiment.clone(),
            a.algorithm.clone(),
            a.n_samples.to_string(),
            a.trials.to_string(),
            fmt(a.mean_cost),
            fmt(a.std_cost),
            fmt(a.success_rate),
            fmt(a.mean_steps),
            fmt(a.std_steps),
            fmt(a.mean_reward),
            a.faults.to_string(),
            a.win_rate.map(fmt).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Plot-ready tables under `dir`; returns the files written. An empty input
/// writes nothing and logs a warning.
pub fn export_plotdata(aggs: &[Aggregate], dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    if aggs.is_empty() {
        log::warn!("no results to export");
        return Ok(Vec::new());
    }
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();

    let mut slots: Vec<(usize, &str)> = Vec::new();
    for a in aggs {
        if !slots.iter().any(|(s, _)| *s == a.slot) {
            slots.push((a.slot, &a.algorithm));
        }
    }
    for &(slot, alg) in &slots {
        let repeated = slots.iter().any(|(s, other)| *other == alg && *s < slot);
        let name = if repeated { format!("cost_vs_n_{alg}-{slot}.csv") } else { format!("cost_vs_n_{alg}.csv") };
        let path = dir.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["n_samples", "mean_cost", "std_cost", "lower", "upper"])?;
        for a in aggs.iter().filter(|a| a.slot == slot) {
            w.write_record([
                a.n_samples.to_string(),
                fmt(a.mean_cost),
                fmt(a.std_cost),
                fmt(a.mean_cost - a.std_cost),
                fmt(a.mean_cost + a.std_cost),
            ])?;
        }
        w.flush()?;
        files.push(path);
    }

    let path = dir.join("success_rate.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["algorithm", "n_samples", "success_rate"])?;
    for a in aggs {
        w.write_record([a.algorithm.clone(), a.n_samples.to_string(), fmt(a.success_rate)])?;
    }
    w.flush()?;
    files.push(path);

    let path = dir.join("steps.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["algorithm", "n_samples", "mean_steps", "std_steps"])?;
    for a in aggs {
        w.write_record([a.algorithm.clone(), a.n_samples.to_string(), fmt(a.mean_steps), fmt(a.std_steps)])?;
    }
    w.flush()?;
    files.push(path);
    Ok(files)
}
