//! Acceptance criteria 1-10. Each test prints one line
//! `criterion <k>: PASS|FAIL <details>`; run with `--nocapture` to see them.

use std::time::Instant;

use ndarray::Array2;
use sig_fbsde::harness::selftest::{self, SuiteResult};
use sig_fbsde::harness::{
    load_config, run_experiment, ConfigDocument, LoadedConfig, Profile, ResultsTable,
};
use sig_fbsde::oracle::{
    asian_european_mc, jensen_lower_bound, lookback_price, quadratic_pde_solution, LookbackParams,
};
use sig_fbsde::sde::{GridSpec, ModelSpec};

const LOOKBACK_REFERENCE: f64 = 5.828;
const QUADRATIC_D20: f64 = 20.0 / 3.0;
const QUADRATIC_D100: f64 = 100.0 / 3.0;
const EUROPEAN_ASIAN_D1: f64 = 4.732;
const JENSEN_BOUND: f64 = 2.418;

fn config(experiment: &str, sets: &[&str]) -> LoadedConfig {
    let mut doc = ConfigDocument {
        experiment: Some(experiment.into()),
        ..Default::default()
    };
    for s in sets {
        doc.set(s).expect("valid override");
    }
    load_config(&doc, Profile::Desk).expect("valid configuration")
}

fn run(experiment: &str, sets: &[&str]) -> ResultsTable {
    run_experiment(&config(experiment, sets), None)
        .expect("training succeeds")
        .0
}

fn rel(estimate: f64, reference: f64) -> f64 {
    ((estimate - reference) / reference).abs()
}

fn report(criterion: usize, pass: bool, details: String) {
    println!(
        "criterion {criterion}: {} {details}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {details}");
}

fn suites_line(suites: &[SuiteResult]) -> (bool, String) {
    let pass = suites.iter().all(SuiteResult::passed);
    let parts: Vec<String> = suites
        .iter()
        .map(|s| {
            format!(
                "[{} {} cases worst {:.2e} tol {:.0e}]",
                s.name, s.cases, s.worst, s.tolerance
            )
        })
        .collect();
    (pass, parts.join(" "))
}

#[test]
fn criterion_01_lookback_forward() {
    let cfg = config("lookback", &["method=\"forward\""]);
    let spec = &cfg.spec;
    let shape = (
        spec.grid.fine_steps,
        spec.grid.coarse_steps,
        spec.depth,
        spec.batch,
        spec.model.x0[0],
    );
    let table = run_experiment(&cfg, None).expect("training succeeds").0;
    let err = rel(table.mean, LOOKBACK_REFERENCE);
    let iterations = table.rows[0].iterations;
    let pass = shape == (400, 20, 3, 100, 10.0) && iterations <= 5000 && err <= 0.02;
    report(
        1,
        pass,
        format!("estimate {:.5} vs {LOOKBACK_REFERENCE}, rel error {:.4} (tol 0.02), {iterations} iterations", table.mean, err),
    );
}

#[test]
fn criterion_02_lookback_backward() {
    let table = run("lookback", &["method=\"backward\""]);
    let err = rel(table.mean, LOOKBACK_REFERENCE);
    let pass = table.rows.len() == 10 && err <= 0.02;
    report(
        2,
        pass,
        format!(
            "mean of {} runs {:.5} CI [{:.5}, {:.5}] vs {LOOKBACK_REFERENCE}, rel error {:.4} (tol 0.02)",
            table.rows.len(),
            table.mean,
            table.ci_low,
            table.ci_high,
            err
        ),
    );
}

#[test]
fn criterion_03_quadratic_d20() {
    let mut parts = Vec::new();
    let mut pass = true;
    for method in ["forward", "backward"] {
        let table = run("quadratic", &["d=20", &format!("method=\"{method}\"")]);
        let err = rel(table.mean, QUADRATIC_D20);
        pass &= err <= 0.03;
        parts.push(format!("{method} {:.4} rel error {:.4}", table.mean, err));
    }
    report(
        3,
        pass,
        format!("{} vs {QUADRATIC_D20:.4} (tol 0.03)", parts.join(", ")),
    );
}

#[test]
fn criterion_04_quadratic_d100_embedding() {
    let mut parts = Vec::new();
    let mut pass = true;
    for method in ["forward", "backward"] {
        let cfg = config("quadratic", &["d=100", &format!("method=\"{method}\"")]);
        pass &= cfg.spec.embedding == Some(5);
        let table = run_experiment(&cfg, None).expect("training succeeds").0;
        let err = rel(table.mean, QUADRATIC_D100);
        pass &= err <= 0.03;
        parts.push(format!("{method} {:.3} rel error {:.4}", table.mean, err));
    }
    report(
        4,
        pass,
        format!(
            "embedding 5, {} vs {QUADRATIC_D100:.3} (tol 0.03)",
            parts.join(", ")
        ),
    );
}

#[test]
fn criterion_05_amerasian_reflected() {
    let d1 = run("amerasian", &["d=1"]);
    let d5 = run("amerasian", &["d=5", "runs=5", "iterations=600"]);
    let in_band = (4.85..=5.25).contains(&d1.mean);
    let above_european = d1.mean >= EUROPEAN_ASIAN_D1;
    let decreasing = d5.mean < d1.mean;
    let min_estimate = d1
        .rows
        .iter()
        .chain(&d5.rows)
        .map(|r| r.final_estimate)
        .fold(f64::INFINITY, f64::min);
    let above_bound = min_estimate >= JENSEN_BOUND;
    let pass = d1.rows.len() == 10 && in_band && above_european && decreasing && above_bound;
    report(
        5,
        pass,
        format!(
            "d=1 mean {:.4} CI [{:.4}, {:.4}] (band [4.85, 5.25], >= {EUROPEAN_ASIAN_D1}); d=5 mean {:.4}; \
             decreasing {decreasing}; smallest run estimate {:.4} (>= {JENSEN_BOUND})",
            d1.mean, d1.ci_low, d1.ci_high, d5.mean, min_estimate
        ),
    );
}

#[test]
fn criterion_06_signature_properties() {
    let start = Instant::now();
    let suites = [
        selftest::chen_suite(100, 6),
        selftest::shuffle_suite(100, 6),
        selftest::scalar_closed_form_suite(100, 6),
        selftest::exp_log_suite(100, 6),
    ];
    let seconds = start.elapsed().as_secs_f64();
    let (ok, line) = suites_line(&suites);
    let shape = suites
        .iter()
        .all(|s| s.cases == 100 && s.tolerance <= 1e-12);
    report(
        6,
        ok && shape && seconds < 60.0,
        format!("{line} in {seconds:.2}s"),
    );
}

#[test]
fn criterion_07_gradients() {
    let suites = [
        selftest::signature_gradient_suite(20, 7),
        selftest::mlp_gradient_suite(20, 7),
        selftest::embedding_chain_suite(20, 7),
    ];
    let (ok, line) = suites_line(&suites);
    let shape = suites.iter().all(|s| s.cases == 20 && s.tolerance <= 1e-5);
    report(7, ok && shape, line);
}

#[test]
fn criterion_08_solver_properties() {
    let suites = [
        selftest::martingale_suite(5, 8),
        selftest::zero_vol_backward_suite(),
        selftest::reflection_suite(3, 8),
        selftest::zero_vol_reflected_suite(200, 20),
    ];
    let (ok, line) = suites_line(&suites);
    report(8, ok && suites[3].tolerance <= 1e-10, line);
}

#[test]
fn criterion_09_convergence_echo() {
    let mut errors = Vec::new();
    let mut parts = Vec::new();
    for n in [5usize, 10, 20] {
        let sets = [
            "d=1".to_string(),
            "method=\"forward\"".into(),
            format!("coarse_steps={n}"),
            format!("fine_steps={}", 5 * n),
            "iterations=3000".into(),
        ];
        let sets: Vec<&str> = sets.iter().map(String::as_str).collect();
        let cfg = config("quadratic", &sets);
        let origin = Array2::zeros((1, 1));
        let exact = quadratic_pde_solution(
            0.0,
            origin.view(),
            cfg.spec.grid.fine_dt(),
            cfg.spec.grid.horizon,
        );
        let table = run_experiment(&cfg, None).expect("training succeeds").0;
        let sq = (table.mean - exact).powi(2);
        parts.push(format!(
            "N={n}: Y0 {:.5} squared error {sq:.3e}",
            table.mean
        ));
        errors.push(sq);
    }
    let pass = errors.windows(2).all(|w| w[1] <= w[0]);
    report(9, pass, format!("{} vs exact 1/3", parts.join(", ")));
}

#[test]
fn criterion_10_oracles() {
    let lookback = lookback_price(LookbackParams {
        spot: 10.0,
        running_min: 10.0,
        rate: 0.01,
        vol: 1.0,
        tau: 1.0,
    })
    .expect("valid parameters");
    let lookback_ok = (lookback - LOOKBACK_REFERENCE).abs() <= 5e-4;

    let model = ModelSpec::geometric(0.05, 0.15, 100.0, 1);
    let grid = GridSpec::new(1.0, 1000, 20).expect("valid grid");
    let (mc, se) =
        asian_european_mc(&model, &grid, 100.0, &[1.0], 1_000_000, 10).expect("valid inputs");
    let mc_ok = (mc - EUROPEAN_ASIAN_D1).abs() <= 3.0 * se;

    let jensen = jensen_lower_bound(&model, 1.0, 100.0, &[1.0]).expect("valid inputs");
    let jensen_ok = (jensen - JENSEN_BOUND).abs() <= 1e-3;

    report(
        10,
        lookback_ok && mc_ok && jensen_ok,
        format!(
            "lookback_price {lookback:.6} vs {LOOKBACK_REFERENCE} ± 5e-4 ({lookback_ok}); \
             european asian {mc:.4} ± {se:.4} vs {EUROPEAN_ASIAN_D1} within 3 SE ({mc_ok}); \
             jensen {jensen:.5} vs {JENSEN_BOUND} ± 1e-3 ({jensen_ok})"
        ),
    );
}
