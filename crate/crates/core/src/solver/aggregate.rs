use super::train::RunReport;
use super::SolverError;

/// One row of the per-run table.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub run: usize,
    pub final_estimate: f64,
    pub iterations: usize,
    pub elapsed_s: f64,
}

/// Mean of the run estimates with a normal-approximation 95% interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub rows: Vec<RunRow>,
}

impl Aggregate {
    pub fn from_rows(rows: Vec<RunRow>) -> Result<Self, SolverError> {
        if rows.is_empty() {
            return Err(SolverError::Config(
                "cannot aggregate an empty set of runs".into(),
            ));
        }
        let r = rows.len() as f64;
        let mean = rows.iter().map(|x| x.final_estimate).sum::<f64>() / r;
        let half = if rows.len() < 2 {
            0.0
        } else {
            let var = rows
                .iter()
                .map(|x| (x.final_estimate - mean).powi(2))
                .sum::<f64>()
                / (r - 1.0);
            1.96 * (var / r).sqrt()
        };
        Ok(Self {
            mean,
            ci_low: mean - half,
            ci_high: mean + half,
            rows,
        })
    }
}

pub fn aggregate_runs(reports: &[RunReport]) -> Result<Aggregate, SolverError> {
    Aggregate::from_rows(
        reports
            .iter()
            .map(|r| RunRow {
                run: r.run,
                final_estimate: r.final_estimate,
                iterations: r.iterations(),
                elapsed_s: r.elapsed_s(),
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(v: f64) -> RunReport {
        RunReport {
            run: 0,
            seed: 0,
            losses: vec![],
            estimates: vec![],
            elapsed: vec![],
            initial_estimate: v,
            final_estimate: v,
        }
    }

    #[test]
    fn identical_values_give_degenerate_interval() {
        let reports: Vec<_> = (0..50).map(|_| report(5.78)).collect();
        let a = aggregate_runs(&reports).unwrap();
        assert!((a.mean - 5.78).abs() < 1e-12);
        assert!((a.ci_low - 5.78).abs() < 1e-12 && (a.ci_high - 5.78).abs() < 1e-12);
    }

    #[test]
    fn two_level_mean() {
        let reports: Vec<_> = (0..50)
            .map(|i| report(if i < 25 { 5.77 } else { 5.79 }))
            .collect();
        let a = aggregate_runs(&reports).unwrap();
        assert!((a.mean - 5.78).abs() < 1e-12);
        assert!(a.ci_low < 5.78 && a.ci_high > 5.78);
    }

    #[test]
    fn single_run_and_empty() {
        let a = aggregate_runs(&[report(1.5)]).unwrap();
        assert_eq!((a.ci_low, a.ci_high), (1.5, 1.5));
        assert!(aggregate_runs(&[]).is_err());
    }
}
