//! Signatures of piecewise-linear paths.
//!
//! A path is a matrix of nodes (one row per node, one column per channel) and
//! is linear between consecutive nodes. Segment signatures are tensor
//! exponentials of the increments, combined with Chen's identity.

use ndarray::{Array2, ArrayView2};

use super::lyndon::{LogSignatureVector, LyndonBasis};
use super::tensor::{
    product_pullback, segment_exp_pullback, truncated_exp, truncated_log, ExpScratch,
    TruncatedTensorSeries,
};
use super::SigError;

/// A path with time adjoined as channel 0.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedPath {
    nodes: Array2<f64>,
}

impl AugmentedPath {
    /// Node matrix `(n+1) x (d+1)`; column 0 holds the node times.
    pub fn nodes(&self) -> ArrayView2<'_, f64> {
        self.nodes.view()
    }

    pub fn times(&self) -> Vec<f64> {
        self.nodes.column(0).to_vec()
    }

    pub fn len(&self) -> usize {
        self.nodes.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.nrows() == 0
    }

    pub fn channels(&self) -> usize {
        self.nodes.ncols()
    }

    pub fn signature(&self, depth: usize) -> Result<TruncatedTensorSeries, SigError> {
        path_signature(self.nodes.view(), depth)
    }

    pub fn into_nodes(self) -> Array2<f64> {
        self.nodes
    }
}

/// Adjoins time as channel 0: node `k` becomes `(t_k, x_k)`.
pub fn time_augment(times: &[f64], values: ArrayView2<'_, f64>) -> Result<AugmentedPath, SigError> {
    if times.len() != values.nrows() {
        return Err(SigError::Shape(format!(
            "{} times for {} values",
            times.len(),
            values.nrows()
        )));
    }
    if let Some(w) = times.windows(2).find(|w| w[1] <= w[0]) {
        return Err(SigError::Domain(format!(
            "times must be strictly increasing, found {} then {}",
            w[0], w[1]
        )));
    }
    let d = values.ncols();
    let mut nodes = Array2::zeros((times.len(), d + 1));
    for (k, &t) in times.iter().enumerate() {
        nodes[[k, 0]] = t;
        for c in 0..d {
            nodes[[k, c + 1]] = values[[k, c]];
        }
    }
    Ok(AugmentedPath { nodes })
}

/// Signature of the straight segment `from -> to`.
pub fn segment_signature(
    from: &[f64],
    to: &[f64],
    depth: usize,
) -> Result<TruncatedTensorSeries, SigError> {
    if from.len() != to.len() {
        return Err(SigError::Shape(format!(
            "segment endpoints of dimension {} and {}",
            from.len(),
            to.len()
        )));
    }
    let inc: Vec<f64> = to.iter().zip(from).map(|(b, a)| b - a).collect();
    truncated_exp(&TruncatedTensorSeries::from_level1(&inc, depth))
}

/// Truncated signature of the piecewise-linear path through `nodes`.
pub fn path_signature(
    nodes: ArrayView2<'_, f64>,
    depth: usize,
) -> Result<TruncatedTensorSeries, SigError> {
    if nodes.nrows() == 0 {
        return Err(SigError::Domain("path has no nodes".into()));
    }
    super::lyndon::check_envelope(nodes.ncols(), depth)?;
    let mut sig = TruncatedTensorSeries::identity(nodes.ncols(), depth);
    let mut scratch = ExpScratch::new();
    let mut inc = vec![0.0; nodes.ncols()];
    for k in 1..nodes.nrows() {
        for (c, v) in inc.iter_mut().enumerate() {
            *v = nodes[[k, c]] - nodes[[k - 1, c]];
        }
        sig.chen_extend(&inc, &mut scratch);
    }
    Ok(sig)
}

/// Prefix signatures at every `stride`-th node: entry `n` is the signature of
/// nodes `0..=n*stride`. Each segment is folded in exactly once.
pub fn checkpoint_signature_stream(
    nodes: ArrayView2<'_, f64>,
    stride: usize,
    depth: usize,
) -> Result<Vec<TruncatedTensorSeries>, SigError> {
    let segments = nodes
        .nrows()
        .checked_sub(1)
        .ok_or_else(|| SigError::Domain("path has no nodes".into()))?;
    if stride == 0 || segments % stride != 0 {
        return Err(SigError::Grid(format!(
            "stride {stride} does not divide {segments} segments"
        )));
    }
    super::lyndon::check_envelope(nodes.ncols(), depth)?;
    let mut out = Vec::with_capacity(segments / stride + 1);
    let mut sig = TruncatedTensorSeries::identity(nodes.ncols(), depth);
    out.push(sig.clone());
    let mut scratch = ExpScratch::new();
    let mut inc = vec![0.0; nodes.ncols()];
    for k in 1..=segments {
        for (c, v) in inc.iter_mut().enumerate() {
            *v = nodes[[k, c]] - nodes[[k - 1, c]];
        }
        sig.chen_extend(&inc, &mut scratch);
        if k % stride == 0 {
            out.push(sig.clone());
        }
    }
    Ok(out)
}

/// Log-signature of the path in Lyndon coordinates.
pub fn log_signature(
    nodes: ArrayView2<'_, f64>,
    depth: usize,
) -> Result<LogSignatureVector, SigError> {
    let basis = LyndonBasis::new(nodes.ncols(), depth);
    log_signature_with(&basis, nodes)
}

/// As [`log_signature`] with a prebuilt basis.
pub fn log_signature_with(
    basis: &LyndonBasis,
    nodes: ArrayView2<'_, f64>,
) -> Result<LogSignatureVector, SigError> {
    let sig = path_signature(nodes, basis.depth())?;
    let coeffs = basis.project(&truncated_log(&sig)?)?;
    Ok(LogSignatureVector {
        channels: basis.channels(),
        depth: basis.depth(),
        coeffs,
    })
}

/// Gradient of `<cotangent, signature(nodes)>` with respect to every node coordinate.
pub fn signature_pullback(
    nodes: ArrayView2<'_, f64>,
    depth: usize,
    cotangent: &TruncatedTensorSeries,
) -> Result<Array2<f64>, SigError> {
    let segments = nodes
        .nrows()
        .checked_sub(1)
        .ok_or_else(|| SigError::Domain("path has no nodes".into()))?;
    let stride = segments.max(1);
    let mut cots: Vec<Option<&TruncatedTensorSeries>> = vec![None; segments / stride + 1];
    *cots.last_mut().expect("at least one checkpoint") = Some(cotangent);
    stream_pullback(nodes, stride, depth, &cots)
}

/// Reverse sweep of [`checkpoint_signature_stream`]: accumulates the gradient
/// of `sum_n <cotangents[n], prefix_n>` with respect to the nodes.
///
/// Prefix signatures are recomputed forward and kept for the sweep.
pub fn stream_pullback(
    nodes: ArrayView2<'_, f64>,
    stride: usize,
    depth: usize,
    cotangents: &[Option<&TruncatedTensorSeries>],
) -> Result<Array2<f64>, SigError> {
    let d = nodes.ncols();
    let segments = nodes
        .nrows()
        .checked_sub(1)
        .ok_or_else(|| SigError::Domain("path has no nodes".into()))?;
    if segments == 0 {
        return Ok(Array2::zeros((1, d)));
    }
    if stride == 0 || segments % stride != 0 {
        return Err(SigError::Grid(format!(
            "stride {stride} does not divide {segments} segments"
        )));
    }
    if cotangents.len() != segments / stride + 1 {
        return Err(SigError::Shape(format!(
            "expected {} checkpoint cotangents, got {}",
            segments / stride + 1,
            cotangents.len()
        )));
    }
    for c in cotangents.iter().flatten() {
        if c.channels() != d || c.depth() != depth {
            return Err(SigError::Shape(format!(
                "cotangent (d={}, m={}) for path (d={d}, m={depth})",
                c.channels(),
                c.depth()
            )));
        }
    }
    let increments: Vec<Vec<f64>> = (1..=segments)
        .map(|k| (0..d).map(|c| nodes[[k, c]] - nodes[[k - 1, c]]).collect())
        .collect();
    let mut prefixes = Vec::with_capacity(segments + 1);
    let mut sig = TruncatedTensorSeries::identity(d, depth);
    let mut scratch = ExpScratch::new();
    prefixes.push(sig.clone());
    for inc in &increments {
        sig.chen_extend(inc, &mut scratch);
        prefixes.push(sig.clone());
    }

    let mut grad = Array2::zeros((segments + 1, d));
    let mut carry = TruncatedTensorSeries::zero(d, depth);
    for k in (1..=segments).rev() {
        if k % stride == 0 {
            if let Some(c) = cotangents[k / stride] {
                carry.add_scaled(c, 1.0);
            }
        }
        // prefix_k = prefix_{k-1} ⊗ exp(inc_k)
        let seg = truncated_exp(&TruncatedTensorSeries::from_level1(
            &increments[k - 1],
            depth,
        ))?;
        let (g_prev, g_seg) = product_pullback(&prefixes[k - 1], &seg, &carry);
        let g_inc = segment_exp_pullback(&increments[k - 1], depth, &g_seg);
        for (c, g) in g_inc.iter().enumerate() {
            grad[[k, c]] += g;
            grad[[k - 1, c]] -= g;
        }
        carry = g_prev;
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn single_node_is_identity() {
        let nodes = array![[0.3, 1.0]];
        assert_eq!(
            path_signature(nodes.view(), 3).unwrap(),
            TruncatedTensorSeries::identity(2, 3)
        );
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(matches!(
            path_signature(empty.view(), 2),
            Err(SigError::Domain(_))
        ));
    }

    #[test]
    fn scalar_path_depends_on_total_increment() {
        let nodes = array![[0.0], [0.5], [2.0]];
        let s = path_signature(nodes.view(), 3).unwrap();
        for (a, b) in s.coeffs().iter().zip([2.0, 2.0, 4.0 / 3.0]) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn segment_examples() {
        assert_eq!(
            segment_signature(&[1.0, 2.0], &[1.0, 2.0], 3).unwrap(),
            TruncatedTensorSeries::identity(2, 3)
        );
        let s = segment_signature(&[0.0], &[2.0], 3).unwrap();
        assert_eq!(s.coeffs(), &[2.0, 2.0, 4.0 / 3.0]);
        let s = segment_signature(&[0.0, 0.0], &[1.0, 2.0], 2).unwrap();
        assert_eq!(s.level(2), &[0.5, 1.0, 1.0, 2.0]);
    }

    #[test]
    fn stream_level1_prefix_increments() {
        let nodes = array![[0.0], [1.0], [2.0], [3.0], [4.0]];
        let stream = checkpoint_signature_stream(nodes.view(), 2, 1).unwrap();
        let lv: Vec<f64> = stream.iter().map(|s| s.level(1)[0]).collect();
        assert_eq!(lv, vec![0.0, 2.0, 4.0]);
        assert!(matches!(
            checkpoint_signature_stream(nodes.view(), 3, 1),
            Err(SigError::Grid(_))
        ));
    }

    #[test]
    fn log_signature_examples() {
        let l_path = array![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]];
        let ls = log_signature(l_path.view(), 2).unwrap();
        assert_eq!(ls.coeffs.len(), 3);
        for (a, b) in ls.coeffs.iter().zip([1.0, 1.0, 0.5]) {
            assert!((a - b).abs() < 1e-14);
        }
        let seg = array![[0.0, 0.0], [0.4, -1.5]];
        let ls = log_signature(seg.view(), 3).unwrap();
        assert_eq!(ls.len(), 5);
        assert!((ls.coeffs[0] - 0.4).abs() < 1e-15 && (ls.coeffs[1] + 1.5).abs() < 1e-15);
        assert!(ls.coeffs[2..].iter().all(|c| c.abs() < 1e-15));
    }

    #[test]
    fn time_augment_examples() {
        let values = array![[1.0], [2.0], [1.0]];
        let p = time_augment(&[0.0, 0.5, 1.0], values.view()).unwrap();
        assert_eq!(p.nodes(), array![[0.0, 1.0], [0.5, 2.0], [1.0, 1.0]]);
        assert_eq!(p.times(), vec![0.0, 0.5, 1.0]);
        let flat = array![[3.0], [3.0], [3.0]];
        let p = time_augment(&[0.0, 0.25, 0.75], flat.view()).unwrap();
        let s = p.signature(2).unwrap();
        assert_eq!(s.level(1), &[0.75, 0.0]);
        assert!(s.coeffs().iter().any(|&c| c != 0.0));
        assert!(matches!(
            time_augment(&[0.0, 0.5, 0.5], values.view()),
            Err(SigError::Domain(_))
        ));
    }

    #[test]
    fn pullback_level1_is_endpoint_difference() {
        let nodes = array![[0.2], [0.9], [-0.4], [1.7]];
        let mut cot = TruncatedTensorSeries::zero(1, 1);
        cot.level_mut(1)[0] = 1.0;
        let g = signature_pullback(nodes.view(), 1, &cot).unwrap();
        assert_eq!(g.column(0).to_vec(), vec![-1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn pullback_level2_single_segment() {
        let nodes = array![[0.5], [1.7]];
        let mut cot = TruncatedTensorSeries::zero(1, 2);
        cot.level_mut(2)[0] = 1.0;
        let g = signature_pullback(nodes.view(), 2, &cot).unwrap();
        assert!((g[[0, 0]] + 1.2).abs() < 1e-14 && (g[[1, 0]] - 1.2).abs() < 1e-14);
    }
}
