use std::sync::Arc;
use std::time::Instant;

use ndarray::{Array1, Array2, Array3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::features::FeatureMap;
use super::method::{methods, Method, RecursionInputs, RecursionOutput};
use super::payoff::Payoff;
use super::spec::ExperimentSpec;
use super::SolverError;
use crate::net::{
    Activation, AdamConfig, AdamState, EmbedCache, EmbeddingParams, MlpCache, MlpParams, MlpSpec,
};
use crate::sde::{coarsen, simulate_batch, PathBatch};

const PROBE_TAG: u64 = 0x5052_4f42_4531_u64;
const PILOT_TAG: u64 = 0x0050_494c_4f54_u64;
const INIT_TAG: u64 = 0x494e_4954_u64;
const NORM_TAG: u64 = 0x4e4f_524d_u64;
const PILOT_PATHS: usize = 1000;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed `k` of `master`; distinct for distinct `k`.
pub fn derive_seed(master: u64, k: u64) -> u64 {
    splitmix64(master ^ splitmix64(k).wrapping_add(k.wrapping_mul(0xD1B5_4A32_D192_ED03)))
}

/// Trainable parameters and optimizer moments of one run.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub nets: Vec<MlpParams>,
    pub net_opt: Vec<AdamState>,
    pub y0: Option<f64>,
    pub y0_opt: Option<AdamState>,
    pub embedding: Option<EmbeddingParams>,
    pub embed_opt: Option<AdamState>,
    pub iteration: usize,
}

/// Per-date feature matrices (`B x F` each) plus what the reverse pass needs.
#[derive(Debug, Clone)]
pub struct BatchFeatures {
    pub per_date: Vec<Array2<f64>>,
    streams: Option<Vec<(Array2<f64>, EmbedCache)>>,
}

/// Loss and estimate of one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationOutcome {
    pub loss: f64,
    pub estimate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub run: usize,
    pub seed: u64,
    pub losses: Vec<f64>,
    pub estimates: Vec<f64>,
    /// Wall-clock seconds since the start of training, per iteration.
    pub elapsed: Vec<f64>,
    pub initial_estimate: f64,
    pub final_estimate: f64,
}

impl RunReport {
    pub fn iterations(&self) -> usize {
        self.losses.len()
    }

    pub fn elapsed_s(&self) -> f64 {
        self.elapsed.last().copied().unwrap_or(0.0)
    }
}

/// Direction suggested by a probing burst for the forward method's `Y_0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trend {
    IncreaseGuess,
    DecreaseGuess,
    Keep,
}

/// Least-squares slope of `values` against their index, compared with `dead_band`.
pub fn classify_trend(values: &[f64], dead_band: f64) -> Trend {
    let n = values.len();
    if n < 2 {
        return Trend::Keep;
    }
    let mean_i = (n - 1) as f64 / 2.0;
    let mean_v = values.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in values.iter().enumerate() {
        let di = i as f64 - mean_i;
        sxy += di * (v - mean_v);
        sxx += di * di;
    }
    let slope = sxy / sxx;
    if slope > dead_band {
        Trend::IncreaseGuess
    } else if slope < -dead_band {
        Trend::DecreaseGuess
    } else {
        Trend::Keep
    }
}

/// A validated problem bound to its method, payoff and feature map.
#[derive(Clone)]
pub struct Solver {
    spec: ExperimentSpec,
    method: Arc<dyn Method>,
    payoff: Arc<dyn Payoff>,
    features: FeatureMap,
    /// Per-channel factor applied to raw states before featurisation.
    input_scale: Vec<f64>,
    /// Fixed per-date standardisation of the features, absent with an embedding.
    feature_norm: Option<FeatureNorm>,
}

/// Per-date shift and scale mapping features to zero mean and unit spread
/// on a pilot batch. Coordinates constant on the pilot are only shifted.
#[derive(Debug, Clone)]
struct FeatureNorm {
    shift: Vec<Array1<f64>>,
    scale: Vec<Array1<f64>>,
}

impl FeatureNorm {
    fn fit(per_date: &[Array2<f64>]) -> Self {
        let mut shift = Vec::with_capacity(per_date.len());
        let mut scale = Vec::with_capacity(per_date.len());
        for x in per_date {
            let mean = x.mean_axis(Axis(0)).expect("pilot batch is non-empty");
            let sd = x.std_axis(Axis(0), 0.0);
            shift.push(mean);
            scale.push(sd.mapv(|s| if s > 1e-12 { 1.0 / s } else { 1.0 }));
        }
        Self { shift, scale }
    }

    fn apply(&self, per_date: &mut [Array2<f64>]) {
        for ((x, m), s) in per_date.iter_mut().zip(&self.shift).zip(&self.scale) {
            *x -= m;
            *x *= s;
        }
    }
}

impl std::fmt::Debug for Solver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Solver")
            .field("spec", &self.spec)
            .field("method", &self.method.name())
            .finish()
    }
}

impl Solver {
    pub fn new(spec: ExperimentSpec) -> Result<Self, SolverError> {
        let payoff = spec.payoff.build(spec.model.dim());
        Self::with_payoff(spec, payoff)
    }

    /// Uses a custom payoff in place of the one named in `spec`.
    pub fn with_payoff(spec: ExperimentSpec, payoff: Arc<dyn Payoff>) -> Result<Self, SolverError> {
        spec.validate()?;
        let method = methods().get(&spec.method)?;
        let features = FeatureMap::new(spec.features, spec.depth, spec.stream_dim(), &spec.grid);
        let input_scale = spec
            .model
            .x0
            .iter()
            .map(|x| 1.0 / x.abs().max(1.0))
            .collect();
        let mut solver = Self {
            spec,
            method,
            payoff,
            features,
            input_scale,
            feature_norm: None,
        };
        if solver.spec.embedding.is_none() {
            let pilot = simulate_batch(
                &solver.spec.model,
                &solver.spec.grid,
                PILOT_PATHS,
                derive_seed(solver.spec.seed, NORM_TAG),
            );
            let raw = solver.raw_features(None, &pilot)?;
            solver.feature_norm = Some(FeatureNorm::fit(&raw.per_date));
        }
        Ok(solver)
    }

    pub fn spec(&self) -> &ExperimentSpec {
        &self.spec
    }

    pub fn method(&self) -> &dyn Method {
        self.method.as_ref()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.dim()
    }

    /// Fresh parameters: approximators with a zero output layer, an embedding
    /// if configured, and `Y_0 = y0` for methods that train it.
    pub fn init_state(&self, seed: u64, y0: f64) -> TrainState {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, INIT_TAG));
        let d = self.spec.model.dim();
        let mlp = MlpSpec::new(self.features.dim(), &self.spec.hidden, d, Activation::Relu);
        let nets: Vec<MlpParams> = (0..self.spec.grid.coarse_steps)
            .map(|_| MlpParams::init(mlp.clone(), &mut rng, true))
            .collect();
        let cfg = AdamConfig::with_lr(self.spec.lr);
        let net_opt = nets.iter().map(|p| AdamState::new(cfg, p)).collect();
        let embedding = self
            .spec
            .embedding
            .map(|w| EmbeddingParams::init(d, w, &mut rng));
        let embed_opt = embedding.as_ref().map(|e| AdamState::new(cfg, e));
        let (y0, y0_opt) = if self.method.trains_initial_value() {
            (
                Some(y0),
                Some(AdamState::new(AdamConfig::with_lr(self.spec.y0_lr()), &y0)),
            )
        } else {
            (None, None)
        };
        TrainState {
            nets,
            net_opt,
            y0,
            y0_opt,
            embedding,
            embed_opt,
            iteration: 0,
        }
    }

    pub fn simulate(&self, seed: u64) -> PathBatch {
        simulate_batch(&self.spec.model, &self.spec.grid, self.spec.batch, seed)
    }

    /// Per-date features of every path in `batch`. States are divided by
    /// `max(|x_0|, 1)` per channel and embedded when the state carries an
    /// embedding; without one the features are standardised per date.
    pub fn features_for_batch(
        &self,
        state: &TrainState,
        batch: &PathBatch,
    ) -> Result<BatchFeatures, SolverError> {
        let mut feats = self.raw_features(state.embedding.as_ref(), batch)?;
        if let Some(norm) = &self.feature_norm {
            norm.apply(&mut feats.per_date);
        }
        Ok(feats)
    }

    fn raw_features(
        &self,
        embedding: Option<&EmbeddingParams>,
        batch: &PathBatch,
    ) -> Result<BatchFeatures, SolverError> {
        let (b, n_dates, f) = (
            batch.len(),
            self.spec.grid.coarse_steps,
            self.features.dim(),
        );
        let per_path: Vec<(Vec<Vec<f64>>, Option<(Array2<f64>, EmbedCache)>)> = (0..b)
            .into_par_iter()
            .map(|j| -> Result<_, SolverError> {
                let mut path = batch.path(j).to_owned();
                for mut row in path.rows_mut() {
                    row.iter_mut()
                        .zip(&self.input_scale)
                        .for_each(|(v, s)| *v *= s);
                }
                match embedding {
                    Some(emb) => {
                        let (stream, cache) = emb.embed_stream(path.view())?;
                        let feats = self.features.path_features(stream.view())?;
                        Ok((feats, Some((stream, cache))))
                    }
                    None => Ok((self.features.path_features(path.view())?, None)),
                }
            })
            .collect::<Result<_, _>>()?;
        let mut per_date = vec![Array2::zeros((b, f)); n_dates];
        let mut streams = embedding.map(|_| Vec::with_capacity(b));
        for (j, (feats, emb)) in per_path.into_iter().enumerate() {
            for (n, v) in feats.iter().enumerate() {
                per_date[n]
                    .row_mut(j)
                    .iter_mut()
                    .zip(v)
                    .for_each(|(o, x)| *o = *x);
            }
            if let (Some(s), Some(e)) = (streams.as_mut(), emb) {
                s.push(e);
            }
        }
        Ok(BatchFeatures { per_date, streams })
    }

    fn terminal_values(&self, batch: &PathBatch) -> Vec<f64> {
        (0..batch.len())
            .into_par_iter()
            .map(|j| self.payoff.terminal(batch.path(j), &self.spec.grid))
            .collect()
    }

    fn exercise_values(&self, batch: &PathBatch) -> Result<Option<Array2<f64>>, SolverError> {
        if !self.method.needs_exercise() {
            return Ok(None);
        }
        let n = self.spec.grid.coarse_steps;
        let rows: Vec<Option<Vec<f64>>> = (0..batch.len())
            .into_par_iter()
            .map(|j| self.payoff.exercise_values(batch.path(j), &self.spec.grid))
            .collect();
        let mut out = Array2::zeros((batch.len(), n + 1));
        for (j, row) in rows.into_iter().enumerate() {
            let row = row.ok_or_else(|| {
                SolverError::Config(format!(
                    "payoff '{}' has no exercise values",
                    self.payoff.name()
                ))
            })?;
            out.row_mut(j)
                .iter_mut()
                .zip(&row)
                .for_each(|(o, v)| *o = *v);
        }
        Ok(Some(out))
    }

    fn forward_pass(
        &self,
        state: &TrainState,
        batch: &PathBatch,
    ) -> Result<(RecursionOutput, BatchFeatures, Vec<MlpCache>), SolverError> {
        let feats = self.features_for_batch(state, batch)?;
        let mut z = Vec::with_capacity(state.nets.len());
        let mut caches = Vec::with_capacity(state.nets.len());
        for (net, x) in state.nets.iter().zip(&feats.per_date) {
            let (out, cache) = net.forward_batch(x.view())?;
            z.push(out);
            caches.push(cache);
        }
        let (states, incs): (Array3<f64>, Array3<f64>) = coarsen(batch, &self.spec.grid)?;
        let terminal = self.terminal_values(batch);
        let exercise = self.exercise_values(batch)?;
        let inputs = RecursionInputs {
            grid: &self.spec.grid,
            driver: self.spec.driver,
            coarse_states: &states,
            coarse_increments: &incs,
            terminal: &terminal,
            exercise: exercise.as_ref(),
        };
        let out = self.method.recursion(&inputs, &z, state.y0)?;
        Ok((out, feats, caches))
    }

    /// Runs the recursion on `batch` without touching the parameters.
    pub fn evaluate(
        &self,
        state: &TrainState,
        batch: &PathBatch,
    ) -> Result<RecursionOutput, SolverError> {
        Ok(self.forward_pass(state, batch)?.0)
    }

    /// One training iteration on a fresh batch drawn with `seed`.
    pub fn step(&self, state: &mut TrainState, seed: u64) -> Result<IterationOutcome, SolverError> {
        let batch = self.simulate(seed);
        let (out, feats, caches) = self.forward_pass(state, &batch)?;
        let outcome = IterationOutcome {
            loss: out.loss,
            estimate: out.estimate,
        };
        let mut feature_cots = Vec::with_capacity(caches.len());
        for (n, cache) in caches.iter().enumerate() {
            let (grads, mut dx) = state.nets[n].backward_batch(cache, out.z_grad[n].view())?;
            state.net_opt[n].step(&mut state.nets[n], &grads)?;
            if let Some(norm) = &self.feature_norm {
                dx *= &norm.scale[n];
            }
            feature_cots.push(dx);
        }
        if let (Some(emb), Some(opt), Some(streams)) = (
            state.embedding.as_mut(),
            state.embed_opt.as_mut(),
            &feats.streams,
        ) {
            let grads = self.embedding_gradient(emb, streams, &feature_cots)?;
            opt.step(emb, &grads)?;
        }
        if let (Some(y0), Some(opt), Some(g)) =
            (state.y0.as_mut(), state.y0_opt.as_mut(), out.y0_grad)
        {
            opt.step(y0, &g)?;
        }
        state.iteration += 1;
        Ok(outcome)
    }

    fn embedding_gradient(
        &self,
        emb: &EmbeddingParams,
        streams: &[(Array2<f64>, EmbedCache)],
        feature_cots: &[Array2<f64>],
    ) -> Result<EmbeddingParams, SolverError> {
        let partial: Vec<EmbeddingParams> = streams
            .par_iter()
            .enumerate()
            .map(|(j, (stream, cache))| -> Result<_, SolverError> {
                let rows: Vec<Vec<f64>> = feature_cots
                    .iter()
                    .map(|c| c.index_axis(Axis(0), j).to_vec())
                    .collect();
                let cots: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
                let dstream = self.features.path_pullback(stream.view(), &cots)?;
                Ok(emb.backward(cache, dstream.view())?.0)
            })
            .collect::<Result<_, _>>()?;
        let mut total = emb.zeros_like();
        for g in &partial {
            total.weight += &g.weight;
            total.bias += &g.bias;
        }
        Ok(total)
    }

    /// Zero-approximator estimate of `Y_0` on a pilot batch of at least
    /// `PILOT_PATHS` paths: the discounted mean terminal value.
    pub fn pilot_estimate(&self, seed: u64) -> Result<f64, SolverError> {
        let paths = self.spec.batch.max(PILOT_PATHS);
        let batch = simulate_batch(
            &self.spec.model,
            &self.spec.grid,
            paths,
            derive_seed(seed, PILOT_TAG),
        );
        let terminal = self.terminal_values(&batch);
        let mean = terminal.iter().sum::<f64>() / terminal.len() as f64;
        let dt = self.spec.grid.coarse_dt();
        let mut y = mean;
        for n in (0..self.spec.grid.coarse_steps).rev() {
            let x = &self.spec.model.x0;
            y += self
                .spec
                .driver
                .value(self.spec.grid.coarse_time(n), x, y, &[])
                * dt;
        }
        Ok(y)
    }

    /// Short training burst from `candidate` on a scratch state; classifies
    /// the resulting `Y_0` trajectory.
    pub fn probe_initial_y0(
        &self,
        candidate: f64,
        burst: usize,
        seed: u64,
    ) -> Result<Trend, SolverError> {
        if !self.method.trains_initial_value() {
            return Err(SolverError::Config(format!(
                "method '{}' has no trainable initial value",
                self.method.name()
            )));
        }
        let mut scratch = self.init_state(seed, candidate);
        let mut trajectory = Vec::with_capacity(burst + 1);
        trajectory.push(candidate);
        for i in 0..burst {
            self.step(&mut scratch, derive_seed(seed ^ PROBE_TAG, i as u64))?;
            trajectory.push(scratch.y0.expect("forward state"));
        }
        Ok(classify_trend(&trajectory, 0.1 * self.spec.y0_lr()))
    }

    /// Starting `Y_0` for the forward method: the pilot estimate, moved by
    /// probing bursts until the trend is flat or the probe budget runs out.
    pub fn bracket_initial_y0(&self, seed: u64) -> Result<f64, SolverError> {
        let mut guess = self.pilot_estimate(seed)?;
        let mut step = 0.05 * guess.abs().max(1.0);
        let mut last: Option<Trend> = None;
        for k in 0..self.spec.probe_limit {
            let trend = self.probe_initial_y0(
                guess,
                self.spec.probe_burst,
                derive_seed(seed, k as u64 + 1),
            )?;
            if trend == Trend::Keep {
                break;
            }
            if last.is_some_and(|t| t != trend) {
                step *= 0.5;
            }
            guess += if trend == Trend::IncreaseGuess {
                step
            } else {
                -step
            };
            last = Some(trend);
        }
        Ok(guess)
    }

    /// Initial state and empty report of a run: brackets `Y_0` when the
    /// method trains it and no starting value is configured.
    pub fn start_run(&self, run: usize, seed: u64) -> Result<(TrainState, RunReport), SolverError> {
        let y0 = if self.method.trains_initial_value() {
            match self.spec.y0_init {
                Some(v) => v,
                None => self.bracket_initial_y0(seed).map_err(|e| match e {
                    SolverError::NonFinite(msg) => {
                        SolverError::NonFinite(format!("run {run}, initial-value probing: {msg}"))
                    }
                    other => other,
                })?,
            }
        } else {
            0.0
        };
        let state = self.init_state(seed, y0);
        let initial_estimate = match state.y0 {
            Some(v) => v,
            None => {
                self.evaluate(&state, &self.simulate(derive_seed(seed, PILOT_TAG)))?
                    .estimate
            }
        };
        let report = RunReport {
            run,
            seed,
            losses: Vec::new(),
            estimates: Vec::new(),
            elapsed: Vec::new(),
            initial_estimate,
            final_estimate: initial_estimate,
        };
        Ok((state, report))
    }

    /// Trains until the iteration budget or the loss margin is reached,
    /// appending to `report`. On error the report keeps the iterations done.
    pub fn continue_run(
        &self,
        state: &mut TrainState,
        report: &mut RunReport,
    ) -> Result<(), SolverError> {
        let start = Instant::now();
        let offset = report.elapsed.last().copied().unwrap_or(0.0);
        let result = loop {
            if state.iteration >= self.spec.iterations {
                break Ok(());
            }
            let it = state.iteration;
            match self.step(state, derive_seed(report.seed, it as u64)) {
                Ok(outcome) => {
                    report.losses.push(outcome.loss);
                    report.estimates.push(outcome.estimate);
                    report.elapsed.push(offset + start.elapsed().as_secs_f64());
                    if outcome.loss <= self.spec.epsilon {
                        break Ok(());
                    }
                }
                Err(SolverError::NonFinite(msg)) => {
                    break Err(SolverError::NonFinite(format!(
                        "run {}, iteration {it}: {msg}",
                        report.run
                    )))
                }
                Err(e) => break Err(e),
            }
        };
        report.final_estimate =
            final_estimate(&report.estimates, self.spec.tail, report.initial_estimate);
        result
    }

    /// Trains one run from scratch.
    pub fn train_run(&self, run: usize, seed: u64) -> Result<RunReport, SolverError> {
        let (mut state, mut report) = self.start_run(run, seed)?;
        self.continue_run(&mut state, &mut report)?;
        Ok(report)
    }
}

/// Mean of the last `tail` estimates (the last one when `tail` is 0).
pub fn final_estimate(estimates: &[f64], tail: usize, initial: f64) -> f64 {
    match estimates.len() {
        0 => initial,
        len => {
            let k = tail.clamp(1, len);
            estimates[len - k..].iter().sum::<f64>() / k as f64
        }
    }
}

/// Trains one run of `spec` with the per-run seed derived from its master seed.
pub fn train(spec: &ExperimentSpec, run: usize) -> Result<RunReport, SolverError> {
    let solver = Solver::new(spec.clone())?;
    solver.train_run(run, derive_seed(spec.seed, run as u64))
}
