//! Lyndon-word coordinates for log-signatures.
//!
//! Each Lyndon word `w` carries its standard bracketing `P_w` (split at the
//! longest proper Lyndon suffix). Expanded in the tensor basis, `P_w` equals
//! `w` plus words that are lexicographically larger, so the coefficients of a
//! Lie element in the `P_w` basis follow from its tensor coefficients at the
//! Lyndon words by a unit-triangular solve.

use std::collections::HashMap;

use super::tensor::{sig_dim, TruncatedTensorSeries};
use super::SigError;

/// Lyndon words over `{0..d-1}` of length `1..=m`, length-major then lexicographic.
pub fn lyndon_words(channels: usize, depth: usize) -> Vec<Vec<usize>> {
    // Duval's generator yields all Lyndon words of length <= depth in lexicographic order.
    let mut all = Vec::new();
    if channels == 0 || depth == 0 {
        return all;
    }
    let mut w: Vec<usize> = vec![0];
    loop {
        all.push(w.clone());
        let n = w.len();
        while w.len() < depth {
            let c = w[w.len() - n];
            w.push(c);
        }
        while let Some(&last) = w.last() {
            if last == channels - 1 {
                w.pop();
            } else {
                break;
            }
        }
        match w.last_mut() {
            Some(last) => *last += 1,
            None => break,
        }
    }
    all.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    all
}

/// Witt's count of Lyndon words of length `<= depth`.
pub fn witt_dimension(channels: usize, depth: usize) -> usize {
    fn mobius(n: usize) -> i64 {
        let (mut n, mut result, mut p) = (n, 1i64, 2);
        while p * p <= n {
            if n % p == 0 {
                n /= p;
                if n % p == 0 {
                    return 0;
                }
                result = -result;
            }
            p += 1;
        }
        if n > 1 {
            result = -result;
        }
        result
    }
    (1..=depth)
        .map(|k| {
            let s: i64 = (1..=k)
                .filter(|e| k % e == 0)
                .map(|e| mobius(e) * (channels as i64).pow((k / e) as u32))
                .sum();
            (s / k as i64) as usize
        })
        .sum()
}

fn word_index(word: &[usize], channels: usize) -> usize {
    word.iter().fold(0, |acc, &l| acc * channels + l)
}

/// Sparse tensor expansion of a homogeneous element: (index within level, coefficient).
type Expansion = Vec<(usize, f64)>;

#[derive(Debug, Clone)]
pub struct LyndonBasis {
    channels: usize,
    depth: usize,
    words: Vec<Vec<usize>>,
    expansions: Vec<Expansion>,
    /// For Lyndon word `i`: the earlier words `j` whose bracket touches word `i`, with that coefficient.
    lower: Vec<Vec<(usize, f64)>>,
}

impl LyndonBasis {
    pub fn new(channels: usize, depth: usize) -> Self {
        let words = lyndon_words(channels, depth);
        let position: HashMap<Vec<usize>, usize> = words
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, w)| (w, i))
            .collect();
        let mut expansions: Vec<Expansion> = Vec::with_capacity(words.len());
        for w in &words {
            let exp = if w.len() == 1 {
                vec![(w[0], 1.0)]
            } else {
                let split = standard_split(w);
                let (u, v) = w.split_at(split);
                let eu = &expansions[position[u]];
                let ev = &expansions[position[v]];
                bracket(eu, u.len(), ev, v.len(), channels)
            };
            expansions.push(exp);
        }
        // word index within its level -> Lyndon position
        let mut lyndon_at: HashMap<(usize, usize), usize> = HashMap::new();
        for (i, w) in words.iter().enumerate() {
            lyndon_at.insert((w.len(), word_index(w, channels)), i);
        }
        let mut lower = vec![Vec::new(); words.len()];
        for (j, exp) in expansions.iter().enumerate() {
            let len = words[j].len();
            for &(idx, c) in exp {
                if let Some(&i) = lyndon_at.get(&(len, idx)) {
                    if i != j {
                        debug_assert!(i > j, "bracket expansion not triangular");
                        lower[i].push((j, c));
                    }
                }
            }
        }
        Self {
            channels,
            depth,
            words,
            expansions,
            lower,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn dim(&self) -> usize {
        self.words.len()
    }

    pub fn words(&self) -> &[Vec<usize>] {
        &self.words
    }

    fn check(&self, s: &TruncatedTensorSeries) -> Result<(), SigError> {
        if s.channels() != self.channels || s.depth() != self.depth {
            return Err(SigError::Shape(format!(
                "basis (d={}, m={}) applied to series (d={}, m={})",
                self.channels,
                self.depth,
                s.channels(),
                s.depth()
            )));
        }
        Ok(())
    }

    /// Coordinates of a Lie element in the bracket basis.
    pub fn project(&self, lie: &TruncatedTensorSeries) -> Result<Vec<f64>, SigError> {
        self.check(lie)?;
        let mut out = Vec::with_capacity(self.words.len());
        for (i, w) in self.words.iter().enumerate() {
            let mut v = lie.level(w.len())[word_index(w, self.channels)];
            for &(j, c) in &self.lower[i] {
                v -= c * out[j];
            }
            out.push(v);
        }
        Ok(out)
    }

    /// Transpose of [`project`](Self::project): maps a cotangent on the
    /// Lyndon coordinates to a cotangent on the tensor coefficients.
    pub fn project_pullback(&self, cotangent: &[f64]) -> Result<TruncatedTensorSeries, SigError> {
        if cotangent.len() != self.dim() {
            return Err(SigError::Shape(format!(
                "expected {} Lyndon coordinates, got {}",
                self.dim(),
                cotangent.len()
            )));
        }
        let mut x = cotangent.to_vec();
        for i in (0..x.len()).rev() {
            let xi = x[i];
            for &(j, c) in &self.lower[i] {
                x[j] -= c * xi;
            }
        }
        let mut out = TruncatedTensorSeries::zero(self.channels, self.depth);
        for (w, xi) in self.words.iter().zip(x) {
            out.level_mut(w.len())[word_index(w, self.channels)] += xi;
        }
        Ok(out)
    }

    /// Lie element `sum_w c_w P_w` in the tensor basis.
    pub fn expand(&self, coords: &[f64]) -> Result<TruncatedTensorSeries, SigError> {
        if coords.len() != self.dim() {
            return Err(SigError::Shape(format!(
                "expected {} Lyndon coordinates, got {}",
                self.dim(),
                coords.len()
            )));
        }
        let mut out = TruncatedTensorSeries::zero(self.channels, self.depth);
        for ((w, exp), &c) in self.words.iter().zip(&self.expansions).zip(coords) {
            let level = out.level_mut(w.len());
            for &(idx, e) in exp {
                level[idx] += c * e;
            }
        }
        Ok(out)
    }

    /// Tensor expansion of the bracket `P_w` for the `i`-th Lyndon word.
    pub fn bracket_expansion(&self, i: usize) -> &[(usize, f64)] {
        &self.expansions[i]
    }
}

/// Split point of the standard factorisation: `w = u v` with `v` the longest proper Lyndon suffix.
fn standard_split(w: &[usize]) -> usize {
    (1..w.len())
        .find(|&i| is_lyndon(&w[i..]))
        .expect("suffix of length one is Lyndon")
}

fn is_lyndon(w: &[usize]) -> bool {
    (1..w.len()).all(|i| w[i..] > *w)
}

/// `[a, b] = a b - b a` for homogeneous expansions of lengths `la`, `lb`.
fn bracket(
    a: &[(usize, f64)],
    la: usize,
    b: &[(usize, f64)],
    lb: usize,
    channels: usize,
) -> Expansion {
    let mut acc: HashMap<usize, f64> = HashMap::new();
    let sa = channels.pow(lb as u32);
    let sb = channels.pow(la as u32);
    for &(ia, ca) in a {
        for &(ib, cb) in b {
            *acc.entry(ia * sa + ib).or_insert(0.0) += ca * cb;
            *acc.entry(ib * sb + ia).or_insert(0.0) -= ca * cb;
        }
    }
    let mut out: Expansion = acc.into_iter().filter(|(_, c)| *c != 0.0).collect();
    out.sort_by_key(|(i, _)| *i);
    out
}

/// Log-signature in Lyndon coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LogSignatureVector {
    pub channels: usize,
    pub depth: usize,
    pub coeffs: Vec<f64>,
}

impl LogSignatureVector {
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }
}

/// Dense size bound used to reject alphabets outside the supported envelope.
pub(crate) fn check_envelope(channels: usize, depth: usize) -> Result<(), SigError> {
    if channels == 0 || depth == 0 {
        return Err(SigError::Domain(
            "channels and depth must be positive".into(),
        ));
    }
    if sig_dim(channels, depth) > 5_000_000 {
        return Err(SigError::Domain(format!(
            "signature of d={channels}, m={depth} too large for dense storage"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lyndon_words_d2_m3() {
        let w = lyndon_words(2, 3);
        assert_eq!(
            w,
            vec![vec![0], vec![1], vec![0, 1], vec![0, 0, 1], vec![0, 1, 1]]
        );
    }

    #[test]
    fn witt_matches_enumeration() {
        for d in 1..=5 {
            for m in 1..=5 {
                assert_eq!(
                    lyndon_words(d, m).len(),
                    witt_dimension(d, m),
                    "d={d} m={m}"
                );
            }
        }
        assert_eq!(witt_dimension(21, 2), 21 + 210);
    }

    #[test]
    fn bracket_of_two_letters() {
        let basis = LyndonBasis::new(2, 2);
        // [e0, e1] = e0 e1 - e1 e0
        assert_eq!(basis.bracket_expansion(2), &[(1, 1.0), (2, -1.0)]);
    }

    #[test]
    fn project_expand_roundtrip() {
        let basis = LyndonBasis::new(3, 4);
        let coords: Vec<f64> = (0..basis.dim())
            .map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0)
            .collect();
        let lie = basis.expand(&coords).unwrap();
        let back = basis.project(&lie).unwrap();
        for (a, b) in coords.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
