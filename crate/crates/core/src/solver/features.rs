//! Per-path features fed to the approximators: optional embedding, time
//! augmentation, then streamed prefix (log-)signatures at the coarse dates.

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::sde::GridSpec;
use crate::sigcore::{
    checkpoint_signature_stream, log_pullback, sig_dim, stream_pullback, time_augment,
    truncated_log, LyndonBasis, SigError, TruncatedTensorSeries,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    Signature,
    LogSignature,
}

#[derive(Debug, Clone)]
pub struct FeatureMap {
    kind: FeatureKind,
    depth: usize,
    /// Signature alphabet size: stream width plus the time channel.
    channels: usize,
    basis: Option<LyndonBasis>,
    times: Vec<f64>,
    stride: usize,
    coarse_steps: usize,
}

impl FeatureMap {
    /// Features for streams of width `stream_dim` on `grid`.
    pub fn new(kind: FeatureKind, depth: usize, stream_dim: usize, grid: &GridSpec) -> Self {
        let channels = stream_dim + 1;
        let basis = match kind {
            FeatureKind::LogSignature => Some(LyndonBasis::new(channels, depth)),
            FeatureKind::Signature => None,
        };
        Self {
            kind,
            depth,
            channels,
            basis,
            times: grid.fine_times(),
            stride: grid.stride(),
            coarse_steps: grid.coarse_steps,
        }
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn dim(&self) -> usize {
        match &self.basis {
            Some(b) => b.dim(),
            None => sig_dim(self.channels, self.depth),
        }
    }

    fn augmented(&self, stream: ArrayView2<'_, f64>) -> Result<Array2<f64>, SigError> {
        if stream.nrows() != self.times.len() || stream.ncols() + 1 != self.channels {
            return Err(SigError::Shape(format!(
                "stream {}x{} for a feature map over {} nodes and {} channels",
                stream.nrows(),
                stream.ncols(),
                self.times.len(),
                self.channels - 1
            )));
        }
        Ok(time_augment(&self.times, stream)?.into_nodes())
    }

    /// Feature vectors at coarse dates `0..N` (the terminal date is not used).
    pub fn path_features(&self, stream: ArrayView2<'_, f64>) -> Result<Vec<Vec<f64>>, SigError> {
        let nodes = self.augmented(stream)?;
        let prefixes = checkpoint_signature_stream(nodes.view(), self.stride, self.depth)?;
        prefixes
            .into_iter()
            .take(self.coarse_steps)
            .map(|sig| match &self.basis {
                Some(basis) => basis.project(&truncated_log(&sig)?),
                None => Ok(sig.into_coeffs()),
            })
            .collect()
    }

    /// Gradient with respect to the stream values of `Σ_n <cotangents[n], feature_n>`.
    pub fn path_pullback(
        &self,
        stream: ArrayView2<'_, f64>,
        cotangents: &[&[f64]],
    ) -> Result<Array2<f64>, SigError> {
        if cotangents.len() != self.coarse_steps {
            return Err(SigError::Shape(format!(
                "{} feature cotangents for {} dates",
                cotangents.len(),
                self.coarse_steps
            )));
        }
        let nodes = self.augmented(stream)?;
        let series: Vec<TruncatedTensorSeries> = match &self.basis {
            Some(basis) => {
                let prefixes = checkpoint_signature_stream(nodes.view(), self.stride, self.depth)?;
                cotangents
                    .iter()
                    .zip(&prefixes)
                    .map(|(c, sig)| log_pullback(sig, &basis.project_pullback(c)?))
                    .collect::<Result<_, _>>()?
            }
            None => cotangents
                .iter()
                .map(|c| {
                    TruncatedTensorSeries::from_parts(self.channels, self.depth, 0.0, c.to_vec())
                })
                .collect::<Result<_, _>>()?,
        };
        let mut cots: Vec<Option<&TruncatedTensorSeries>> = series.iter().map(Some).collect();
        cots.push(None);
        let grad = stream_pullback(nodes.view(), self.stride, self.depth, &cots)?;
        Ok(grad.slice(s![.., 1..]).to_owned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigcore::path_signature;

    #[test]
    fn first_feature_is_zero_and_prefixes_match() {
        let grid = GridSpec::new(1.0, 6, 3).unwrap();
        let stream = Array2::from_shape_fn((7, 2), |(k, c)| ((k * 3 + c) as f64 * 0.37).sin());
        let fm = FeatureMap::new(FeatureKind::Signature, 3, 2, &grid);
        let feats = fm.path_features(stream.view()).unwrap();
        assert_eq!(feats.len(), 3);
        assert!(feats[0].iter().all(|&v| v == 0.0));
        let nodes = time_augment(&grid.fine_times(), stream.view())
            .unwrap()
            .into_nodes();
        for n in 1..3 {
            let direct = path_signature(nodes.slice(s![..=n * 2, ..]), 3).unwrap();
            for (a, b) in feats[n].iter().zip(direct.coeffs()) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }
}
