use std::path::Path;

use rayon::prelude::*;

use super::experiments::LoadedConfig;
use super::output::{emit_outputs, ensure_dir, write_checkpoint, write_curve, ResultsTable};
use super::{document_from_spec, HarnessError};
use crate::solver::{aggregate_runs, derive_seed, RunReport, Solver, SolverError};

fn run_one(
    solver: &Solver,
    run: usize,
    dir: Option<&Path>,
) -> Result<RunReport, Box<(SolverError, Option<RunReport>)>> {
    let seed = derive_seed(solver.spec().seed, run as u64);
    let (mut state, mut report) = solver
        .start_run(run, seed)
        .map_err(|e| Box::new((e, None)))?;
    let result = solver.continue_run(&mut state, &mut report);
    if let Some(dir) = dir {
        // files of finished or aborted runs are kept; write errors surface later
        let _ = write_curve(dir, &report);
        let _ = write_checkpoint(dir, run, &state);
    }
    match result {
        Ok(()) => Ok(report),
        Err(e) => Err(Box::new((e, Some(report)))),
    }
}

/// Trains every run of `config` (up to `workers` at a time), attaches the
/// reference values and, when `dir` is given, writes all result files there.
pub fn run_experiment(
    config: &LoadedConfig,
    dir: Option<&Path>,
) -> Result<(ResultsTable, Vec<RunReport>), HarnessError> {
    let spec = &config.spec;
    let solver = Solver::new(spec.clone())?;
    if let Some(dir) = dir {
        ensure_dir(dir)?;
        let text = document_from_spec(spec).to_toml()?;
        std::fs::write(dir.join("config.toml"), text).map_err(|source| HarnessError::Io {
            path: dir.join("config.toml"),
            source,
        })?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers())
        .build()
        .map_err(|e| HarnessError::validation(vec!["workers".into()], e.to_string()))?;
    let outcomes: Vec<Result<RunReport, Box<(SolverError, Option<RunReport>)>>> =
        pool.install(|| {
            (0..spec.runs)
                .into_par_iter()
                .map(|r| run_one(&solver, r, dir))
                .collect()
        });

    let mut reports = Vec::with_capacity(outcomes.len());
    let mut failure = None;
    for outcome in outcomes {
        match outcome {
            Ok(r) => reports.push(r),
            Err(boxed) => {
                let (e, partial) = *boxed;
                if failure.is_none() {
                    failure = Some(e);
                }
                if let Some(p) = partial {
                    reports.push(p);
                }
            }
        }
    }
    if let Some(e) = failure {
        if let Some(dir) = dir {
            std::fs::write(
                dir.join("summary.csv"),
                super::output::summary_csv(&aggregate_rows(&reports)),
            )
            .map_err(|source| HarnessError::Io {
                path: dir.join("summary.csv"),
                source,
            })?;
        }
        return Err(e.into());
    }

    let agg = aggregate_runs(&reports)?;
    let refs = config
        .experiment
        .references(spec, config.reference_paths())?;
    let table = ResultsTable {
        experiment: spec.experiment.clone(),
        method: spec.method.clone(),
        rows: agg.rows,
        mean: agg.mean,
        ci_low: agg.ci_low,
        ci_high: agg.ci_high,
        reference: refs.primary,
        extra_references: refs.extra,
    };
    if let Some(dir) = dir {
        emit_outputs(&table, &reports, dir)?;
    }
    Ok((table, reports))
}

fn aggregate_rows(reports: &[RunReport]) -> Vec<crate::solver::RunRow> {
    aggregate_runs(reports).map(|a| a.rows).unwrap_or_default()
}
