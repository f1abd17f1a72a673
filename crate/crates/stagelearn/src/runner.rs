//! Executes experiments, in parallel across runs.

use std::path::Path;

use rayon::prelude::*;
use stagelearn_core::sim::run;

use crate::config::{Experiment, Point};
use crate::error::{CliError, Result};
use crate::output::{aggregate, aggregate_csv, atomic_write, stages_csv, trace_csv, RunSummary};

/// Runs one point; writes its files into `out` when given.
pub fn run_point(experiment: &Experiment, point: &Point, out: Option<&Path>) -> Result<RunSummary> {
    let trace = run(&point.config)?;
    let echo = experiment.echo(&point.config);
    let label = point.label();
    if let Some(dir) = out {
        if experiment.trace_stride > 0 {
            atomic_write(
                &dir.join(format!("trace_{label}.csv")),
                &trace_csv(&trace, &echo, experiment.trace_stride),
            )?;
        }
        atomic_write(
            &dir.join(format!("stages_{label}.csv")),
            &stages_csv(&trace, &echo),
        )?;
    }
    let summary = RunSummary::new(label, echo, &trace, point.config.threshold);
    if let Some(dir) = out {
        atomic_write(
            &dir.join(format!("summary_{}.txt", summary.label)),
            &summary.to_text(),
        )?;
    }
    Ok(summary)
}

/// Runs every point of `experiment` on a pool of `threads` workers (0 means
/// one per core). Results come back in sweep order whatever the thread
/// count. With `out`, per-run files are written by the workers and
/// `aggregate.csv` afterwards.
pub fn run_experiment(
    experiment: &Experiment,
    threads: usize,
    out: Option<&Path>,
) -> Result<Vec<RunSummary>> {
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::config("--threads", e.to_string()))?;
    let points = experiment.points();
    let results: Vec<RunSummary> = pool.install(|| {
        points
            .par_iter()
            .map(|p| run_point(experiment, p, out))
            .collect::<Result<Vec<_>>>()
    })?;
    if let Some(dir) = out {
        let mut echo = experiment.echo(&experiment.base);
        echo.retain(|(k, _)| !matches!(*k, "sim.n" | "sim.seed" | "learner.kind"));
        echo.push(("sweep.n", join(&experiment.populations)));
        echo.push((
            "sweep.learners",
            experiment
                .learners
                .iter()
                .map(|l| l.name())
                .collect::<Vec<_>>()
                .join(","),
        ));
        echo.push(("sweep.seed_list", join(&experiment.seeds)));
        atomic_write(
            &dir.join("aggregate.csv"),
            &aggregate_csv(&aggregate(&results), &echo),
        )?;
    }
    Ok(results)
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}
