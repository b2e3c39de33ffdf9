//! Randomised property suites shared by `sig-fbsde selftest` and the test
//! targets. Every suite is deterministic given its seed.

use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::net::{Activation, EmbeddingParams, MlpParams, MlpSpec};
use crate::oracle::{
    bermudan_deterministic_dp, jensen_lower_bound, lookback_price, norm_cdf, LookbackParams,
};
use crate::sde::{GridSpec, ModelSpec};
use crate::sigcore::{
    path_signature, signature_pullback, time_augment, truncated_exp, truncated_log,
    truncated_product, TruncatedTensorSeries,
};
use crate::solver::{DriverKind, ExperimentSpec, FeatureKind, PayoffKind, Solver};

/// Outcome of one suite: the worst error seen against its tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub cases: usize,
    pub worst: f64,
    pub tolerance: f64,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.worst.is_finite() && self.worst <= self.tolerance
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_path<R: Rng>(rng: &mut R, nodes: usize, d: usize, scale: f64) -> Array2<f64> {
    let mut p = Array2::zeros((nodes, d));
    for k in 1..nodes {
        for c in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            p[[k, c]] = p[[k - 1, c]] + scale * z;
        }
    }
    p
}

/// `|a - b| / max(|b|, 1)` over all coefficients.
fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn worst_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| rel(*x, *y))
        .fold(0.0, f64::max)
}

/// `‖a - b‖ / ‖b‖` (absolute when `b` vanishes).
fn norm_rel(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let nb: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / nb.max(1e-12)
}

/// All interleavings of `u` and `v`.
pub fn shuffles(u: &[usize], v: &[usize]) -> Vec<Vec<usize>> {
    match (u.split_first(), v.split_first()) {
        (None, _) => vec![v.to_vec()],
        (_, None) => vec![u.to_vec()],
        (Some((a, ur)), Some((b, vr))) => {
            let mut out = Vec::new();
            for mut w in shuffles(ur, v) {
                w.insert(0, *a);
                out.push(w);
            }
            for mut w in shuffles(u, vr) {
                w.insert(0, *b);
                out.push(w);
            }
            out
        }
    }
}

fn random_word<R: Rng>(rng: &mut R, d: usize, len: usize) -> Vec<usize> {
    (0..len).map(|_| rng.random_range(0..d)).collect()
}

/// Signature of a concatenation equals the product of the parts' signatures.
pub fn chen_suite(cases: usize, seed: u64) -> SuiteResult {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let (d, m) = (r.random_range(1..=3), r.random_range(1..=4));
        let n = r.random_range(3..=12);
        let path = random_path(&mut r, n, d, 0.7);
        let cut = r.random_range(1..n - 1);
        let whole = path_signature(path.view(), m).expect("valid path");
        let a = path_signature(path.slice(s![..=cut, ..]), m).expect("valid path");
        let b = path_signature(path.slice(s![cut.., ..]), m).expect("valid path");
        let joined = truncated_product(&a, &b).expect("same shape");
        worst = worst.max(worst_rel(joined.coeffs(), whole.coeffs()));
    }
    SuiteResult {
        name: "chen identity",
        cases,
        worst,
        tolerance: 1e-12,
    }
}

/// `<u, S><v, S> = Σ_{w ∈ u ⧢ v} <w, S>` for random words with `|u| + |v| ≤ m`.
pub fn shuffle_suite(cases: usize, seed: u64) -> SuiteResult {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let (d, m) = (r.random_range(1..=3), r.random_range(2..=5));
        let nodes = r.random_range(2..=8);
        let path = random_path(&mut r, nodes, d, 0.6);
        let sig = path_signature(path.view(), m).expect("valid path");
        let lu = r.random_range(1..m);
        let lv = r.random_range(1..=m - lu);
        let (u, v) = (random_word(&mut r, d, lu), random_word(&mut r, d, lv));
        let lhs = sig.coeff(&u) * sig.coeff(&v);
        let rhs: f64 = shuffles(&u, &v).iter().map(|w| sig.coeff(w)).sum();
        worst = worst.max(rel(lhs, rhs));
    }
    SuiteResult {
        name: "shuffle relation",
        cases,
        worst,
        tolerance: 1e-12,
    }
}

/// One-channel paths: level `k` equals `(x_T - x_0)^k / k!`.
pub fn scalar_closed_form_suite(cases: usize, seed: u64) -> SuiteResult {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let m = r.random_range(1..=8);
        let nodes = r.random_range(2..=15);
        let path = random_path(&mut r, nodes, 1, 0.5);
        let sig = path_signature(path.view(), m).expect("valid path");
        let total = path[[path.nrows() - 1, 0]] - path[[0, 0]];
        let mut expected = 1.0;
        for k in 1..=m {
            expected *= total / k as f64;
            worst = worst.max(rel(sig.level(k)[0], expected));
        }
    }
    SuiteResult {
        name: "one-channel closed form",
        cases,
        worst,
        tolerance: 1e-12,
    }
}

/// `exp(log S) = S` for signatures and `log(exp v) = v` for Lie elements.
pub fn exp_log_suite(cases: usize, seed: u64) -> SuiteResult {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let (d, m) = (r.random_range(1..=3), r.random_range(1..=4));
        let nodes = r.random_range(2..=8);
        let path = random_path(&mut r, nodes, d, 0.5);
        let sig = path_signature(path.view(), m).expect("valid path");
        let back = truncated_exp(&truncated_log(&sig).expect("group-like")).expect("Lie-like");
        worst = worst.max(worst_rel(back.coeffs(), sig.coeffs()));
        let coeffs: Vec<f64> = (0..sig.coeffs().len())
            .map(|_| r.random_range(-0.5..0.5))
            .collect();
        let v = TruncatedTensorSeries::from_parts(d, m, 0.0, coeffs).expect("shape");
        let again = truncated_log(&truncated_exp(&v).expect("Lie-like")).expect("group-like");
        worst = worst.max(worst_rel(again.coeffs(), v.coeffs()));
    }
    SuiteResult {
        name: "exp/log inversion",
        cases,
        worst,
        tolerance: 1e-12,
    }
}

const FD_STEP: f64 = 1e-6;

/// Node gradient of a random linear functional of the signature.
pub fn signature_gradient_suite(cases: usize, seed: u64) -> SuiteResult {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let (d, m) = (r.random_range(1..=3), r.random_range(1..=4));
        let nodes = r.random_range(2..=7);
        let path = random_path(&mut r, nodes, d, 0.5);
        let n = crate::sigcore::sig_dim(d, m);
        let cot = TruncatedTensorSeries::from_parts(
            d,
            m,
            0.0,
            (0..n).map(|_| r.random_range(-1.0..1.0)).collect(),
        )
        .expect("shape");
        let f = |p: &Array2<f64>| -> f64 {
            let sig = path_signature(p.view(), m).expect("valid path");
            sig.coeffs()
                .iter()
                .zip(cot.coeffs())
                .map(|(a, b)| a * b)
                .sum()
        };
        let grad = signature_pullback(path.view(), m, &cot).expect("valid path");
        let mut fd = Vec::with_capacity(path.len());
        for k in 0..path.nrows() {
            for c in 0..d {
                let (mut up, mut down) = (path.clone(), path.clone());
                up[[k, c]] += FD_STEP;
                down[[k, c]] -= FD_STEP;
                fd.push((f(&up) - f(&down)) / (2.0 * FD_STEP));
            }
        }
        worst = worst.max(norm_rel(grad.as_slice().expect("standard layout"), &fd));
    }
    SuiteResult {
        name: "signature gradient",
        cases,
        worst,
        tolerance: 1e-5,
    }
}

/// Parameter and input gradients of a random tanh network against central differences.
pub fn mlp_gradient_suite(cases: usize, seed: u64) -> SuiteResult {
    use crate::net::Parameters;
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let (input, output) = (r.random_range(1..=5), r.random_range(1..=3));
        let hidden = [r.random_range(2..=6), r.random_range(2..=6)];
        let act = if r.random_bool(0.5) {
            Activation::Tanh
        } else {
            Activation::Relu
        };
        let mut net = MlpParams::init(MlpSpec::new(input, &hidden, output, act), &mut r, false);
        for t in net.tensors_mut() {
            t.iter_mut().for_each(|v| *v += r.random_range(-0.1..0.1));
        }
        let batch = 3;
        let x = Array2::from_shape_fn((batch, input), |_| r.random_range(-1.0..1.0));
        let cot = Array2::from_shape_fn((batch, output), |_| r.random_range(-1.0..1.0));
        let value = |p: &MlpParams, x: &Array2<f64>| -> f64 {
            let (y, _) = p.forward_batch(x.view()).expect("shape");
            (&y * &cot).sum()
        };
        let (_, cache) = net.forward_batch(x.view()).expect("shape");
        let (grads, dx) = net.backward_batch(&cache, cot.view()).expect("shape");
        let mut analytic: Vec<f64> = grads.tensors().concat();
        analytic.extend(dx.iter());
        let mut fd = Vec::with_capacity(analytic.len());
        let count: Vec<usize> = net.tensors().iter().map(|t| t.len()).collect();
        for (ti, len) in count.iter().enumerate() {
            for k in 0..*len {
                let (mut up, mut down) = (net.clone(), net.clone());
                up.tensors_mut()[ti][k] += FD_STEP;
                down.tensors_mut()[ti][k] -= FD_STEP;
                fd.push((value(&up, &x) - value(&down, &x)) / (2.0 * FD_STEP));
            }
        }
        for i in 0..batch {
            for c in 0..input {
                let (mut up, mut down) = (x.clone(), x.clone());
                up[[i, c]] += FD_STEP;
                down[[i, c]] -= FD_STEP;
                fd.push((value(&net, &up) - value(&net, &down)) / (2.0 * FD_STEP));
            }
        }
        worst = worst.max(norm_rel(&analytic, &fd));
    }
    SuiteResult {
        name: "mlp gradient",
        cases,
        worst,
        tolerance: 1e-5,
    }
}

/// Embedding parameters through time augmentation and the signature.
pub fn embedding_chain_suite(cases: usize, seed: u64) -> SuiteResult {
    use crate::net::Parameters;
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let (d, dp, m) = (
            r.random_range(2..=4),
            r.random_range(1..=2),
            r.random_range(2..=3),
        );
        let nodes = 5;
        let stream = random_path(&mut r, nodes, d, 0.4);
        let times: Vec<f64> = (0..nodes).map(|k| k as f64 * 0.25).collect();
        let emb = EmbeddingParams::init(d, dp, &mut r);
        let n = crate::sigcore::sig_dim(dp + 1, m);
        let cot = TruncatedTensorSeries::from_parts(
            dp + 1,
            m,
            0.0,
            (0..n).map(|_| r.random_range(-1.0..1.0)).collect(),
        )
        .expect("shape");
        let value = |e: &EmbeddingParams| -> f64 {
            let (out, _) = e.embed_stream(stream.view()).expect("shape");
            let aug = time_augment(&times, out.view()).expect("times");
            let sig = path_signature(aug.nodes(), m).expect("valid path");
            sig.coeffs()
                .iter()
                .zip(cot.coeffs())
                .map(|(a, b)| a * b)
                .sum()
        };
        let (out, cache) = emb.embed_stream(stream.view()).expect("shape");
        let aug = time_augment(&times, out.view()).expect("times");
        let node_grad = signature_pullback(aug.nodes(), m, &cot).expect("valid path");
        let (grads, _) = emb
            .backward(&cache, node_grad.slice(s![.., 1..]))
            .expect("shape");
        let analytic: Vec<f64> = grads.tensors().concat();
        let mut fd = Vec::with_capacity(analytic.len());
        let lens: Vec<usize> = emb.tensors().iter().map(|t| t.len()).collect();
        for (ti, len) in lens.iter().enumerate() {
            for k in 0..*len {
                let (mut up, mut down) = (emb.clone(), emb.clone());
                up.tensors_mut()[ti][k] += FD_STEP;
                down.tensors_mut()[ti][k] -= FD_STEP;
                fd.push((value(&up) - value(&down)) / (2.0 * FD_STEP));
            }
        }
        worst = worst.max(norm_rel(&analytic, &fd));
    }
    SuiteResult {
        name: "embedding-signature chain gradient",
        cases,
        worst,
        tolerance: 1e-5,
    }
}

/// Small solver problem used by the solver suites.
pub fn small_spec(
    method: &str,
    model: ModelSpec,
    driver: DriverKind,
    payoff: PayoffKind,
    batch: usize,
) -> ExperimentSpec {
    ExperimentSpec {
        experiment: "selftest".into(),
        method: method.into(),
        model,
        grid: GridSpec {
            horizon: 1.0,
            fine_steps: 40,
            coarse_steps: 10,
        },
        driver,
        payoff,
        depth: 2,
        features: FeatureKind::Signature,
        embedding: None,
        hidden: vec![8],
        batch,
        iterations: 3,
        lr: 1e-2,
        y0_lr: None,
        y0_init: Some(1.0),
        epsilon: 0.0,
        tail: 1,
        probe_burst: 5,
        probe_limit: 2,
        runs: 1,
        seed: 17,
    }
}

/// With `f = 0` and any fixed networks the forward recursion is a martingale:
/// the batch mean of `Y_N` stays within three standard errors of `Y_0`.
/// Reports `|mean(Y_N) - Y_0| / (3 SE)`.
pub fn martingale_suite(cases: usize, seed: u64) -> SuiteResult {
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let spec = small_spec(
            "forward",
            ModelSpec::geometric(0.02, 0.3, 1.0, 2),
            DriverKind::Zero,
            PayoffKind::Lookback,
            4000,
        );
        let solver = Solver::new(spec).expect("valid spec");
        let mut state = solver.init_state(seed + case as u64, 0.7);
        let mut r = rng(seed ^ (case as u64 + 1));
        for net in state.nets.iter_mut() {
            *net = MlpParams::init(net.spec.clone(), &mut r, false);
        }
        let batch = solver.simulate(seed.wrapping_mul(31).wrapping_add(case as u64));
        let out = solver.evaluate(&state, &batch).expect("finite");
        let n = out.y.ncols() - 1;
        let gains: Vec<f64> = out.y.column(n).iter().map(|v| v - 0.7).collect();
        let b = gains.len() as f64;
        let mean = gains.iter().sum::<f64>() / b;
        let sd = (gains.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (b - 1.0)).sqrt();
        worst = worst.max(mean.abs() / (3.0 * sd / b.sqrt()).max(1e-300));
    }
    SuiteResult {
        name: "forward martingale (ratio to 3 SE)",
        cases,
        worst,
        tolerance: 1.0,
    }
}

/// Deterministic paths: backward variance is exactly zero and the estimate
/// equals the payoff of the deterministic path.
pub fn zero_vol_backward_suite() -> SuiteResult {
    let spec = small_spec(
        "backward",
        ModelSpec::geometric(0.03, 0.0, 2.0, 1),
        DriverKind::Zero,
        PayoffKind::AsianBasketCall {
            strike: 1.5,
            weights: None,
        },
        64,
    );
    let solver = Solver::new(spec.clone()).expect("valid spec");
    let (mut state, mut report) = solver.start_run(0, 5).expect("start");
    let res = solver.continue_run(&mut state, &mut report);
    let h = spec.grid.fine_dt();
    let avg: f64 = (0..spec.grid.fine_steps)
        .map(|i| 2.0 * (1.0 + 0.03 * h).powi(i as i32) * h)
        .sum();
    let expected = (avg - 1.5).max(0.0);
    let loss = report.losses.first().copied().unwrap_or(f64::NAN);
    let worst = if res.is_ok() && report.losses.len() == 1 && loss == 0.0 {
        (report.final_estimate - expected).abs()
    } else {
        f64::INFINITY
    };
    SuiteResult {
        name: "zero-volatility backward variance",
        cases: 1,
        worst,
        tolerance: 1e-12,
    }
}

/// Every reflected `Y_n` dominates the exercise value after trained iterations.
/// Reports the largest violation `max(g_n - Y_n, 0)`.
pub fn reflection_suite(cases: usize, seed: u64) -> SuiteResult {
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let spec = small_spec(
            "reflected",
            ModelSpec::geometric(0.05, 0.2, 1.0, 1),
            DriverKind::Discount { rate: 0.05 },
            PayoffKind::AsianBasketCall {
                strike: 1.0,
                weights: None,
            },
            256,
        );
        let solver = Solver::new(spec.clone()).expect("valid spec");
        let mut state = solver.init_state(seed + case as u64, 0.0);
        for it in 0..3 {
            solver
                .step(&mut state, seed.wrapping_add(100 * case as u64 + it))
                .expect("finite");
        }
        let batch = solver.simulate(seed ^ 0xabc ^ case as u64);
        let out = solver.evaluate(&state, &batch).expect("finite");
        let payoff = spec.payoff.build(1);
        for j in 0..batch.len() {
            let g = payoff
                .exercise_values(batch.path(j), &spec.grid)
                .expect("exercise values");
            for (n, gn) in g.iter().enumerate() {
                worst = worst.max(gn - out.y[[j, n]]);
            }
        }
    }
    SuiteResult {
        name: "reflection constraint",
        cases,
        worst,
        tolerance: 0.0,
    }
}

/// Deterministic Bermudan problem: reflected estimate against backward induction.
pub fn zero_vol_reflected_suite(fine_steps: usize, coarse_steps: usize) -> SuiteResult {
    let (x0, r, k) = (100.0, 0.05, 100.0);
    let mut spec = small_spec(
        "reflected",
        ModelSpec::geometric(r, 0.0, x0, 1),
        DriverKind::Discount { rate: r },
        PayoffKind::AsianBasketCall {
            strike: k,
            weights: None,
        },
        32,
    );
    spec.grid = GridSpec {
        horizon: 1.0,
        fine_steps,
        coarse_steps,
    };
    spec.features = FeatureKind::Signature;
    spec.depth = 3;
    spec.hidden = vec![64, 64];
    let solver = Solver::new(spec.clone()).expect("valid spec");
    let report = solver.train_run(0, 3).expect("finite");
    // deterministic Euler path and running averages, computed directly
    let h = spec.grid.fine_dt();
    let stride = spec.grid.stride();
    let path: Vec<f64> = (0..=fine_steps)
        .map(|i| x0 * (1.0 + r * h).powi(i as i32))
        .collect();
    let mut integral = 0.0;
    let mut g = vec![(x0 - k).max(0.0)];
    for n in 1..=coarse_steps {
        for i in (n - 1) * stride..n * stride {
            integral += path[i] * h;
        }
        g.push((integral / (n as f64 * spec.grid.coarse_dt()) - k).max(0.0));
    }
    let dp = bermudan_deterministic_dp(&g, r, spec.grid.coarse_dt()).expect("non-empty");
    SuiteResult {
        name: "zero-volatility reflected vs backward induction",
        cases: 1,
        worst: (report.final_estimate - dp).abs(),
        tolerance: 1e-10,
    }
}

/// Closed-form reference values.
pub fn oracle_suite() -> Vec<SuiteResult> {
    let lb = lookback_price(LookbackParams {
        spot: 10.0,
        running_min: 10.0,
        rate: 0.01,
        vol: 1.0,
        tau: 1.0,
    })
    .unwrap_or(f64::NAN);
    let jb = jensen_lower_bound(
        &ModelSpec::geometric(0.05, 0.15, 100.0, 1),
        1.0,
        100.0,
        &[1.0],
    )
    .unwrap_or(f64::NAN);
    vec![
        SuiteResult {
            name: "normal quantile",
            cases: 1,
            worst: (norm_cdf(1.959964) - 0.975).abs(),
            tolerance: 1e-6,
        },
        SuiteResult {
            name: "lookback price",
            cases: 1,
            worst: (lb - 5.828).abs(),
            tolerance: 5e-4,
        },
        SuiteResult {
            name: "jensen bound",
            cases: 1,
            worst: (jb - 2.418).abs(),
            tolerance: 1e-3,
        },
    ]
}

/// Every suite at its full case count.
pub fn run_all() -> Vec<SuiteResult> {
    let mut out = vec![
        chen_suite(100, 1),
        shuffle_suite(100, 2),
        scalar_closed_form_suite(100, 3),
        exp_log_suite(100, 4),
        signature_gradient_suite(20, 5),
        mlp_gradient_suite(20, 6),
        embedding_chain_suite(20, 7),
        martingale_suite(5, 8),
        zero_vol_backward_suite(),
        reflection_suite(3, 9),
        zero_vol_reflected_suite(200, 20),
    ];
    out.extend(oracle_suite());
    out
}
