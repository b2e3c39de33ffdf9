//! Randomised algebraic and bookkeeping properties.

use ndarray::{s, Array2};
use proptest::prelude::*;
use sig_fbsde::harness::{checkpoint_text, read_checkpoint};
use sig_fbsde::oracle::{lookback_price, LookbackParams};
use sig_fbsde::sigcore::{
    checkpoint_signature_stream, log_signature, path_signature, sig_dim, truncated_exp,
    truncated_log, truncated_product, witt_dimension, TruncatedTensorSeries,
};
use sig_fbsde::solver::{derive_seed, final_estimate, Aggregate, RunRow};

/// A path with `rows` nodes and `channels` coordinates, values in [-1, 1].
fn path(max_rows: usize, max_channels: usize) -> impl Strategy<Value = Array2<f64>> {
    (2..=max_rows, 1..=max_channels).prop_flat_map(|(rows, channels)| {
        prop::collection::vec(-1.0..1.0f64, rows * channels)
            .prop_map(move |v| Array2::from_shape_vec((rows, channels), v).expect("shape matches"))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn concatenation_is_product(a in path(6, 3), tail in prop::collection::vec(-1.0..1.0f64, 15), depth in 1usize..=4) {
        let d = a.ncols();
        let rows = tail.len() / d;
        prop_assume!(rows >= 1);
        let last = a.row(a.nrows() - 1).to_owned();
        let mut b = Array2::zeros((rows + 1, d));
        b.row_mut(0).assign(&last);
        for r in 0..rows {
            for c in 0..d {
                b[[r + 1, c]] = last[c] + tail[r * d + c];
            }
        }
        let mut joined = Array2::zeros((a.nrows() + rows, d));
        joined.slice_mut(s![..a.nrows(), ..]).assign(&a);
        joined.slice_mut(s![a.nrows().., ..]).assign(&b.slice(s![1.., ..]));
        let whole = path_signature(joined.view(), depth).unwrap();
        let product = truncated_product(&path_signature(a.view(), depth).unwrap(), &path_signature(b.view(), depth).unwrap()).unwrap();
        prop_assert!(whole.max_relative_diff(&product) <= 1e-12);
    }

    #[test]
    fn translation_invariance(p in path(6, 3), shift in -5.0..5.0f64, depth in 1usize..=4) {
        let moved = p.mapv(|v| v + shift);
        let a = path_signature(p.view(), depth).unwrap();
        let b = path_signature(moved.view(), depth).unwrap();
        prop_assert!(a.max_relative_diff(&b) <= 1e-12);
    }

    #[test]
    fn reversed_path_is_inverse(p in path(6, 3), depth in 1usize..=4) {
        let mut rev = p.clone();
        rev.invert_axis(ndarray::Axis(0));
        let prod = truncated_product(&path_signature(p.view(), depth).unwrap(), &path_signature(rev.view(), depth).unwrap()).unwrap();
        prop_assert!(prod.max_relative_diff(&TruncatedTensorSeries::identity(p.ncols(), depth)) <= 1e-12);
    }

    #[test]
    fn exp_log_round_trip(channels in 1usize..=3, depth in 1usize..=4, seed in prop::collection::vec(-0.5..0.5f64, 120)) {
        let n = sig_dim(channels, depth);
        let coeffs: Vec<f64> = seed.iter().cycle().take(n).copied().collect();
        let lie = TruncatedTensorSeries::from_parts(channels, depth, 0.0, coeffs).unwrap();
        let back = truncated_log(&truncated_exp(&lie).unwrap()).unwrap();
        prop_assert!(back.max_relative_diff(&lie) <= 1e-12);
    }

    #[test]
    fn log_signature_has_witt_dimension(p in path(5, 3), depth in 1usize..=3) {
        let log = log_signature(p.view(), depth).unwrap();
        prop_assert_eq!(log.len(), witt_dimension(p.ncols(), depth));
    }

    #[test]
    fn stream_ends_with_full_signature(p in path(9, 2), depth in 1usize..=3) {
        let segments = p.nrows() - 1;
        let stream = checkpoint_signature_stream(p.view(), segments, depth).unwrap();
        prop_assert_eq!(stream.len(), 2);
        prop_assert!(stream[1].max_relative_diff(&path_signature(p.view(), depth).unwrap()) <= 1e-12);
    }

    #[test]
    fn aggregate_interval_brackets_mean(values in prop::collection::vec(-10.0..10.0f64, 1..40)) {
        let rows: Vec<RunRow> = values.iter().enumerate()
            .map(|(run, &v)| RunRow { run, final_estimate: v, iterations: 1, elapsed_s: 0.0 })
            .collect();
        let agg = Aggregate::from_rows(rows).unwrap();
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(agg.mean >= lo - 1e-12 && agg.mean <= hi + 1e-12);
        prop_assert!(agg.ci_low <= agg.mean && agg.mean <= agg.ci_high);
    }

    #[test]
    fn tail_average_is_bounded(values in prop::collection::vec(-10.0..10.0f64, 0..40), tail in 0usize..60) {
        let est = final_estimate(&values, tail, 3.0);
        if values.is_empty() {
            prop_assert_eq!(est, 3.0);
        } else {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(est >= lo - 1e-12 && est <= hi + 1e-12);
        }
    }

    #[test]
    fn child_seeds_differ(master in any::<u64>(), a in 0u64..1_000_000, b in 0u64..1_000_000) {
        prop_assume!(a != b);
        prop_assert_ne!(derive_seed(master, a), derive_seed(master, b));
    }

    #[test]
    fn checkpoint_round_trip(values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..30)) {
        let arrays = vec![("w".to_string(), vec![values.len()], values)];
        prop_assert_eq!(read_checkpoint(&checkpoint_text(&arrays)).unwrap(), arrays);
    }

    #[test]
    fn lookback_dominates_intrinsic(spot in 1.0..20.0f64, ratio in 0.2..1.0f64, rate in 0.001..0.1f64, vol in 0.1..1.5f64, tau in 0.05..2.0f64) {
        let m = spot * ratio;
        let price = lookback_price(LookbackParams { spot, running_min: m, rate, vol, tau }).unwrap();
        prop_assert!(price >= spot - m * (-rate * tau).exp() - 1e-9);
    }
}
