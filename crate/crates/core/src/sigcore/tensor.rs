//! Dense truncated tensor series over a `d`-letter alphabet.
//!
//! Coefficients are stored level by level (levels `1..=depth`), each level in
//! lexicographic multi-index order, so the word `(i_1, ..., i_k)` lives at
//! offset `sum_j i_j * d^(k-j)` inside its level. The level-0 scalar is kept
//! separately as `unit`.

use super::SigError;

/// Number of stored coefficients excluding the unit: `d + d^2 + ... + d^m`.
pub fn sig_dim(channels: usize, depth: usize) -> usize {
    if channels == 1 {
        return depth;
    }
    (channels.pow(depth as u32 + 1) - channels) / (channels - 1)
}

/// Offset of level `k` (1-based) inside the flat coefficient buffer.
fn level_offset(channels: usize, k: usize) -> usize {
    sig_dim(channels, k - 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedTensorSeries {
    channels: usize,
    depth: usize,
    unit: f64,
    coeffs: Vec<f64>,
}

impl TruncatedTensorSeries {
    /// The group identity `1`.
    pub fn identity(channels: usize, depth: usize) -> Self {
        Self::with_unit(channels, depth, 1.0)
    }

    /// The Lie zero `0`.
    pub fn zero(channels: usize, depth: usize) -> Self {
        Self::with_unit(channels, depth, 0.0)
    }

    fn with_unit(channels: usize, depth: usize, unit: f64) -> Self {
        assert!(
            channels >= 1 && depth >= 1,
            "channels and depth must be positive"
        );
        Self {
            channels,
            depth,
            unit,
            coeffs: vec![0.0; sig_dim(channels, depth)],
        }
    }

    /// Builds a series from a flat coefficient buffer (levels `1..=depth`).
    pub fn from_parts(
        channels: usize,
        depth: usize,
        unit: f64,
        coeffs: Vec<f64>,
    ) -> Result<Self, SigError> {
        let expected = sig_dim(channels, depth);
        if coeffs.len() != expected {
            return Err(SigError::Shape(format!(
                "expected {expected} coefficients for d={channels}, m={depth}, got {}",
                coeffs.len()
            )));
        }
        Ok(Self {
            channels,
            depth,
            unit,
            coeffs,
        })
    }

    /// Lie element with `v` at level 1 and zeros above.
    pub fn from_level1(v: &[f64], depth: usize) -> Self {
        let mut out = Self::zero(v.len(), depth);
        out.level_mut(1).copy_from_slice(v);
        out
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn unit(&self) -> f64 {
        self.unit
    }

    pub fn set_unit(&mut self, unit: f64) {
        self.unit = unit;
    }

    /// All coefficients above level 0, level-major.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// Coefficient block of level `k` (`1 <= k <= depth`).
    pub fn level(&self, k: usize) -> &[f64] {
        let start = level_offset(self.channels, k);
        &self.coeffs[start..start + self.channels.pow(k as u32)]
    }

    pub fn level_mut(&mut self, k: usize) -> &mut [f64] {
        let start = level_offset(self.channels, k);
        let len = self.channels.pow(k as u32);
        &mut self.coeffs[start..start + len]
    }

    /// Coefficient of a word given as 0-based letters; the empty word is the unit.
    pub fn coeff(&self, word: &[usize]) -> f64 {
        if word.is_empty() {
            return self.unit;
        }
        let idx = word
            .iter()
            .fold(0, |acc, &letter| acc * self.channels + letter);
        self.level(word.len())[idx]
    }

    /// Level `k` including the unit as level 0.
    fn level_or_unit(&self, k: usize) -> LevelRef<'_> {
        if k == 0 {
            LevelRef::Scalar(self.unit)
        } else {
            LevelRef::Block(self.level(k))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.unit.is_finite() && self.coeffs.iter().all(|c| c.is_finite())
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<(), SigError> {
        if self.channels != other.channels || self.depth != other.depth {
            return Err(SigError::Shape(format!(
                "(d={}, m={}) vs (d={}, m={})",
                self.channels, self.depth, other.channels, other.depth
            )));
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        self.unit *= factor;
        self.coeffs.iter_mut().for_each(|c| *c *= factor);
    }

    pub fn add_scaled(&mut self, other: &Self, factor: f64) {
        debug_assert_eq!(self.coeffs.len(), other.coeffs.len());
        self.unit += factor * other.unit;
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += factor * b;
        }
    }

    /// Largest coefficientwise relative deviation, with a floor of 1 on the scale.
    pub fn max_relative_diff(&self, other: &Self) -> f64 {
        std::iter::once((self.unit, other.unit))
            .chain(
                self.coeffs
                    .iter()
                    .copied()
                    .zip(other.coeffs.iter().copied()),
            )
            .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1.0))
            .fold(0.0, f64::max)
    }

    /// Extends a group-like series by the straight segment with the given
    /// increment, i.e. `self <- self ⊗ exp(increment)`, in place.
    pub fn chen_extend(&mut self, increment: &[f64], scratch: &mut ExpScratch) {
        debug_assert_eq!(increment.len(), self.channels);
        scratch.fill(increment, self.depth);
        let d = self.channels;
        for k in (1..=self.depth).rev() {
            let start = level_offset(d, k);
            let (lower, upper) = self.coeffs.split_at_mut(start);
            let target = &mut upper[..d.pow(k as u32)];
            for i in 1..=k {
                let e = scratch.level(i);
                let width = e.len();
                if i == k {
                    let u = self.unit;
                    for (t, &ev) in target.iter_mut().zip(e) {
                        *t += u * ev;
                    }
                } else {
                    let ls = level_offset(d, k - i);
                    let left = &lower[ls..ls + d.pow((k - i) as u32)];
                    for (row, &a) in left.iter().enumerate() {
                        if a == 0.0 {
                            continue;
                        }
                        let out = &mut target[row * width..(row + 1) * width];
                        for (t, &ev) in out.iter_mut().zip(e) {
                            *t += a * ev;
                        }
                    }
                }
            }
        }
    }
}

enum LevelRef<'a> {
    Scalar(f64),
    Block(&'a [f64]),
}

/// Reusable buffer for the levels of `exp(v)` of a level-1 vector `v`.
#[derive(Debug, Default, Clone)]
pub struct ExpScratch {
    levels: Vec<Vec<f64>>,
}

impl ExpScratch {
    pub fn new() -> Self {
        Self::default()
    }

    fn fill(&mut self, v: &[f64], depth: usize) {
        self.levels.resize(depth, Vec::new());
        self.levels[0].clear();
        self.levels[0].extend_from_slice(v);
        for k in 2..=depth {
            let (prev, rest) = self.levels.split_at_mut(k - 1);
            let prev = &prev[k - 2];
            let cur = &mut rest[0];
            cur.clear();
            let inv = 1.0 / k as f64;
            for &a in prev {
                cur.extend(v.iter().map(|&b| a * b * inv));
            }
        }
    }

    fn level(&self, k: usize) -> &[f64] {
        &self.levels[k - 1]
    }
}

/// `out_k += a ⊗ b` restricted to blocks of widths `d^i` and `d^j`.
fn outer_accumulate(out: &mut [f64], a: LevelRef<'_>, b: LevelRef<'_>) {
    match (a, b) {
        (LevelRef::Scalar(s), LevelRef::Block(bb)) => {
            for (o, &x) in out.iter_mut().zip(bb) {
                *o += s * x;
            }
        }
        (LevelRef::Block(ab), LevelRef::Scalar(s)) => {
            for (o, &x) in out.iter_mut().zip(ab) {
                *o += x * s;
            }
        }
        (LevelRef::Block(ab), LevelRef::Block(bb)) => {
            let w = bb.len();
            for (row, &x) in ab.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                for (o, &y) in out[row * w..(row + 1) * w].iter_mut().zip(bb) {
                    *o += x * y;
                }
            }
        }
        (LevelRef::Scalar(_), LevelRef::Scalar(_)) => unreachable!("level 0 handled by caller"),
    }
}

/// Truncated tensor product `a ⊗ b`, discarding levels above the shared depth.
pub fn truncated_product(
    a: &TruncatedTensorSeries,
    b: &TruncatedTensorSeries,
) -> Result<TruncatedTensorSeries, SigError> {
    a.check_same_shape(b)?;
    let (d, m) = (a.channels, a.depth);
    let mut out = TruncatedTensorSeries::with_unit(d, m, a.unit * b.unit);
    for k in 1..=m {
        let start = level_offset(d, k);
        let target = &mut out.coeffs[start..start + d.pow(k as u32)];
        for i in 0..=k {
            outer_accumulate(target, a.level_or_unit(i), b.level_or_unit(k - i));
        }
    }
    Ok(out)
}

/// Truncated tensor exponential of a Lie-like series (unit 0).
pub fn truncated_exp(v: &TruncatedTensorSeries) -> Result<TruncatedTensorSeries, SigError> {
    if v.unit != 0.0 {
        return Err(SigError::Domain(format!(
            "exp expects a unit of 0, got {}",
            v.unit
        )));
    }
    let (d, m) = (v.channels, v.depth);
    let mut out = TruncatedTensorSeries::identity(d, m);
    let mut power = TruncatedTensorSeries::identity(d, m);
    for n in 1..=m {
        power = truncated_product(&power, v)?;
        power.scale(1.0 / n as f64);
        out.add_scaled(&power, 1.0);
    }
    Ok(out)
}

/// Truncated tensor logarithm of a group-like series (unit 1).
pub fn truncated_log(s: &TruncatedTensorSeries) -> Result<TruncatedTensorSeries, SigError> {
    if s.unit != 1.0 {
        return Err(SigError::Domain(format!(
            "log expects a unit of 1, got {}",
            s.unit
        )));
    }
    let (d, m) = (s.channels, s.depth);
    let mut x = s.clone();
    x.unit = 0.0;
    let mut out = TruncatedTensorSeries::zero(d, m);
    let mut power = x.clone();
    for n in 1..=m {
        if n > 1 {
            power = truncated_product(&power, &x)?;
        }
        let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
        out.add_scaled(&power, sign / n as f64);
    }
    Ok(out)
}

/// Pulls a cotangent on `a ⊗ b` back to cotangents on `a` and on `b`.
///
/// Unit slots of the returned cotangents are left at zero.
pub fn product_pullback(
    a: &TruncatedTensorSeries,
    b: &TruncatedTensorSeries,
    cotangent: &TruncatedTensorSeries,
) -> (TruncatedTensorSeries, TruncatedTensorSeries) {
    let (d, m) = (a.channels, a.depth);
    let mut ga = TruncatedTensorSeries::zero(d, m);
    let mut gb = TruncatedTensorSeries::zero(d, m);
    for k in 1..=m {
        let gamma = cotangent.level(k);
        for i in 0..=k {
            let j = k - i;
            let w = d.pow(j as u32);
            // gamma viewed as a (d^i x d^j) matrix
            if i >= 1 {
                let gai = ga.level_mut(i);
                match b.level_or_unit(j) {
                    LevelRef::Scalar(s) => {
                        for (g, &x) in gai.iter_mut().zip(gamma) {
                            *g += x * s;
                        }
                    }
                    LevelRef::Block(bj) => {
                        for (row, g) in gai.iter_mut().enumerate() {
                            *g += gamma[row * w..(row + 1) * w]
                                .iter()
                                .zip(bj)
                                .map(|(x, y)| x * y)
                                .sum::<f64>();
                        }
                    }
                }
            }
            if j >= 1 {
                let gbj = gb.level_mut(j);
                match a.level_or_unit(i) {
                    LevelRef::Scalar(s) => {
                        for (g, &x) in gbj.iter_mut().zip(gamma) {
                            *g += x * s;
                        }
                    }
                    LevelRef::Block(ai) => {
                        for (row, &x) in ai.iter().enumerate() {
                            if x == 0.0 {
                                continue;
                            }
                            for (g, &y) in gbj.iter_mut().zip(&gamma[row * w..(row + 1) * w]) {
                                *g += x * y;
                            }
                        }
                    }
                }
            }
        }
    }
    (ga, gb)
}

/// Gradient of `<cotangent, exp(v)>` with respect to the level-1 vector `v`.
pub fn segment_exp_pullback(
    v: &[f64],
    depth: usize,
    cotangent: &TruncatedTensorSeries,
) -> Vec<f64> {
    let d = v.len();
    let mut scratch = ExpScratch::new();
    scratch.fill(v, depth);
    let mut carry: Vec<f64> = cotangent.level(depth).to_vec();
    let mut grad = vec![0.0; d];
    for k in (2..=depth).rev() {
        // E_k = (E_{k-1} ⊗ v) / k
        let inv = 1.0 / k as f64;
        let prev = scratch.level(k - 1);
        let mut next_carry = cotangent.level(k - 1).to_vec();
        for (row, nc) in next_carry.iter_mut().enumerate() {
            let block = &carry[row * d..(row + 1) * d];
            *nc += inv * block.iter().zip(v).map(|(g, x)| g * x).sum::<f64>();
            let e = prev[row] * inv;
            for (gi, &g) in grad.iter_mut().zip(block) {
                *gi += e * g;
            }
        }
        carry = next_carry;
    }
    for (gi, c) in grad.iter_mut().zip(&carry) {
        *gi += c;
    }
    grad
}

/// Gradient of `<cotangent, log(s)>` with respect to the coefficients of `s`.
pub fn log_pullback(
    s: &TruncatedTensorSeries,
    cotangent: &TruncatedTensorSeries,
) -> Result<TruncatedTensorSeries, SigError> {
    s.check_same_shape(cotangent)?;
    let m = s.depth;
    let mut x = s.clone();
    x.unit = 0.0;
    let mut powers = vec![x.clone()];
    for _ in 1..m {
        let next = truncated_product(powers.last().expect("non-empty"), &x)?;
        powers.push(next);
    }
    // cotangents on each power x^n
    let mut gpow: Vec<TruncatedTensorSeries> = (1..=m)
        .map(|n| {
            let mut g = cotangent.clone();
            g.unit = 0.0;
            let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
            g.scale(sign / n as f64);
            g
        })
        .collect();
    let mut gx = TruncatedTensorSeries::zero(s.channels, m);
    for n in (1..m).rev() {
        // powers[n] = powers[n-1] ⊗ x
        let (gl, gr) = product_pullback(&powers[n - 1], &x, &gpow[n]);
        gpow[n - 1].add_scaled(&gl, 1.0);
        gx.add_scaled(&gr, 1.0);
    }
    gx.add_scaled(&gpow[0], 1.0);
    gx.unit = 0.0;
    Ok(gx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn sig_dim_counts() {
        assert_eq!(sig_dim(2, 2), 6);
        assert_eq!(sig_dim(1, 3), 3);
        assert_eq!(sig_dim(3, 2), 12);
        assert_eq!(sig_dim(2, 3), 14);
    }

    #[test]
    fn product_of_two_letters() {
        let mut a = TruncatedTensorSeries::identity(2, 2);
        a.level_mut(1)[0] = 1.0;
        let mut b = TruncatedTensorSeries::identity(2, 2);
        b.level_mut(1)[1] = 1.0;
        let c = truncated_product(&a, &b).unwrap();
        assert_eq!(c.unit(), 1.0);
        assert_eq!(c.level(1), &[1.0, 1.0]);
        assert_eq!(c.level(2), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn product_shape_mismatch() {
        let a = TruncatedTensorSeries::identity(2, 2);
        let b = TruncatedTensorSeries::identity(3, 2);
        assert!(matches!(truncated_product(&a, &b), Err(SigError::Shape(_))));
        let c = TruncatedTensorSeries::identity(2, 3);
        assert!(truncated_product(&a, &c).is_err());
    }

    #[test]
    fn product_of_scalar_exponentials_adds_increments() {
        let (p, q) = (0.7, -1.3);
        let a = truncated_exp(&TruncatedTensorSeries::from_level1(&[p], 2)).unwrap();
        let b = truncated_exp(&TruncatedTensorSeries::from_level1(&[q], 2)).unwrap();
        let c = truncated_product(&a, &b).unwrap();
        assert!((c.level(1)[0] - (p + q)).abs() < 1e-15);
        assert!((c.level(2)[0] - (p + q).powi(2) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn exp_examples() {
        let e = truncated_exp(&TruncatedTensorSeries::from_level1(&[2.0], 3)).unwrap();
        assert!(close(e.coeffs(), &[2.0, 2.0, 4.0 / 3.0], 1e-15));
        let e = truncated_exp(&TruncatedTensorSeries::zero(3, 2)).unwrap();
        assert_eq!(e, TruncatedTensorSeries::identity(3, 2));
        let e = truncated_exp(&TruncatedTensorSeries::from_level1(&[1.0, 2.0], 2)).unwrap();
        assert!(close(e.level(2), &[0.5, 1.0, 1.0, 2.0], 1e-15));
        assert!(truncated_exp(&TruncatedTensorSeries::identity(2, 2)).is_err());
    }

    #[test]
    fn log_of_identity_and_domain() {
        let l = truncated_log(&TruncatedTensorSeries::identity(2, 3)).unwrap();
        assert_eq!(l, TruncatedTensorSeries::zero(2, 3));
        assert!(matches!(
            truncated_log(&TruncatedTensorSeries::zero(2, 3)),
            Err(SigError::Domain(_))
        ));
    }

    #[test]
    fn log_of_l_path_is_levy_area() {
        let a = truncated_exp(&TruncatedTensorSeries::from_level1(&[1.0, 0.0], 2)).unwrap();
        let b = truncated_exp(&TruncatedTensorSeries::from_level1(&[0.0, 1.0], 2)).unwrap();
        let s = truncated_product(&a, &b).unwrap();
        let l = truncated_log(&s).unwrap();
        assert!(close(l.level(1), &[1.0, 1.0], 1e-15));
        assert!(close(l.level(2), &[0.0, 0.5, -0.5, 0.0], 1e-15));
    }

    #[test]
    fn chen_extend_matches_product() {
        let mut s =
            truncated_exp(&TruncatedTensorSeries::from_level1(&[0.3, -0.2, 1.1], 4)).unwrap();
        let inc = [0.5, 0.9, -0.4];
        let expected = truncated_product(
            &s,
            &truncated_exp(&TruncatedTensorSeries::from_level1(&inc, 4)).unwrap(),
        )
        .unwrap();
        s.chen_extend(&inc, &mut ExpScratch::new());
        assert!(s.max_relative_diff(&expected) < 1e-14);
    }

    #[test]
    fn exp_pullback_level2_scalar() {
        // d(Δ²/2)/dΔ = Δ
        let mut cot = TruncatedTensorSeries::zero(1, 2);
        cot.level_mut(2)[0] = 1.0;
        let g = segment_exp_pullback(&[0.8], 2, &cot);
        assert!((g[0] - 0.8).abs() < 1e-15);
    }
}
