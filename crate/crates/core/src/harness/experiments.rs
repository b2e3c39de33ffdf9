use std::sync::{Arc, OnceLock};

use ndarray::Array2;

use super::config::{ConfigDocument, Profile};
use super::HarnessError;
use crate::oracle::{
    asian_european_mc, jensen_lower_bound, lookback_price, quadratic_pde_solution, LookbackParams,
};
use crate::sde::{Dynamics, GridSpec, ModelSpec};
use crate::solver::{derive_seed, methods, DriverKind, ExperimentSpec, FeatureKind, PayoffKind};

/// Reference values attached to a run; `primary` is compared with the estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct References {
    pub primary: Option<(String, f64)>,
    pub extra: Vec<(String, f64)>,
}

pub trait Experiment: Send + Sync {
    fn name(&self) -> &'static str;

    /// Model keys this experiment reads besides the common training keys.
    fn model_keys(&self) -> &'static [&'static str];

    /// Default values for `profile`, given what the user already chose.
    fn defaults(&self, profile: Profile, user: &ConfigDocument) -> ConfigDocument;

    fn model(&self, doc: &Resolved<'_>) -> ModelSpec;

    fn driver(&self, doc: &Resolved<'_>) -> DriverKind;

    fn payoff(&self, doc: &Resolved<'_>) -> PayoffKind;

    fn references(
        &self,
        spec: &ExperimentSpec,
        reference_paths: usize,
    ) -> Result<References, HarnessError>;
}

/// A fully defaulted document; accessors panic only on keys every
/// experiment default provides.
#[derive(Debug, Clone, Copy)]
pub struct Resolved<'a>(pub &'a ConfigDocument);

impl Resolved<'_> {
    fn get<T: Clone>(v: &Option<T>, key: &str) -> T {
        v.clone()
            .unwrap_or_else(|| panic!("experiment defaults must provide `{key}`"))
    }

    pub fn d(&self) -> usize {
        Self::get(&self.0.d, "d")
    }

    pub fn x0(&self) -> f64 {
        Self::get(&self.0.x0, "x0")
    }

    pub fn sigma(&self) -> f64 {
        Self::get(&self.0.sigma, "sigma")
    }

    pub fn rate(&self) -> f64 {
        Self::get(&self.0.rate, "rate")
    }

    pub fn strike(&self) -> f64 {
        Self::get(&self.0.strike, "strike")
    }
}

const TRAINING_KEYS: &[&str] = &[
    "experiment",
    "method",
    "d",
    "m",
    "features",
    "embedding",
    "fine_steps",
    "coarse_steps",
    "horizon",
    "hidden",
    "batch",
    "iterations",
    "lr",
    "y0_lr",
    "y0_init",
    "epsilon",
    "tail",
    "probe_burst",
    "probe_limit",
    "runs",
    "seed",
    "workers",
    "reference_paths",
    "out",
];

fn method_of(user: &ConfigDocument, fallback: &str) -> String {
    user.method.clone().unwrap_or_else(|| fallback.to_string())
}

fn batch_for(method: &str) -> usize {
    methods()
        .get(method)
        .map(|m| m.default_batch())
        .unwrap_or(1000)
}

fn workers_default() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// Defaults shared by every experiment.
fn common(name: &str, method: &str) -> ConfigDocument {
    ConfigDocument {
        experiment: Some(name.to_string()),
        method: Some(method.to_string()),
        horizon: Some(1.0),
        hidden: Some(vec![64, 64]),
        batch: Some(batch_for(method)),
        lr: Some(1e-3),
        epsilon: Some(0.0),
        probe_burst: Some(25),
        probe_limit: Some(8),
        seed: Some(1),
        workers: Some(workers_default()),
        reference_paths: Some(50_000),
        embedding: Some(0),
        out: Some(format!("results/{name}")),
        ..Default::default()
    }
}

/// Floating-strike lookback on a geometric asset, discounted at `r`.
#[derive(Debug, Default)]
pub struct LookbackExperiment;

impl Experiment for LookbackExperiment {
    fn name(&self) -> &'static str {
        "lookback"
    }

    fn model_keys(&self) -> &'static [&'static str] {
        &["x0", "sigma", "rate"]
    }

    fn defaults(&self, profile: Profile, user: &ConfigDocument) -> ConfigDocument {
        let method = method_of(user, "forward");
        let forward = method == "forward";
        let paper = profile == Profile::Paper;
        ConfigDocument {
            d: Some(1),
            x0: Some(10.0),
            sigma: Some(1.0),
            rate: Some(0.01),
            m: Some(3),
            features: Some(FeatureKind::Signature),
            fine_steps: Some(if paper { 2000 } else { 400 }),
            coarse_steps: Some(20),
            iterations: Some(match (forward, paper) {
                (true, false) => 5000,
                (true, true) => 10000,
                (false, false) => 300,
                (false, true) => 1000,
            }),
            tail: Some(if forward { 500 } else { 150 }),
            runs: Some(match (forward, paper) {
                (true, _) => 1,
                (false, false) => 10,
                (false, true) => 50,
            }),
            ..common(self.name(), &method)
        }
    }

    fn model(&self, doc: &Resolved<'_>) -> ModelSpec {
        ModelSpec::geometric(doc.rate(), doc.sigma(), doc.x0(), doc.d())
    }

    fn driver(&self, doc: &Resolved<'_>) -> DriverKind {
        DriverKind::Discount { rate: doc.rate() }
    }

    fn payoff(&self, _doc: &Resolved<'_>) -> PayoffKind {
        PayoffKind::Lookback
    }

    fn references(
        &self,
        spec: &ExperimentSpec,
        _reference_paths: usize,
    ) -> Result<References, HarnessError> {
        let Dynamics::Geometric { rate, vols } = &spec.model.dynamics else {
            return Ok(References {
                primary: None,
                extra: Vec::new(),
            });
        };
        let mut total = 0.0;
        for (x, vol) in spec.model.x0.iter().zip(vols) {
            let p = LookbackParams {
                spot: *x,
                running_min: *x,
                rate: *rate,
                vol: *vol,
                tau: spec.grid.horizon,
            };
            match lookback_price(p) {
                Ok(v) => total += v,
                Err(_) => {
                    return Ok(References {
                        primary: None,
                        extra: Vec::new(),
                    })
                }
            }
        }
        Ok(References {
            primary: Some(("lookback_price".into(), total)),
            extra: Vec::new(),
        })
    }
}

/// `(∫_0^T Σ_i W^i ds)^2` with a zero driver.
#[derive(Debug, Default)]
pub struct QuadraticExperiment;

impl Experiment for QuadraticExperiment {
    fn name(&self) -> &'static str {
        "quadratic"
    }

    fn model_keys(&self) -> &'static [&'static str] {
        &["x0"]
    }

    fn defaults(&self, profile: Profile, user: &ConfigDocument) -> ConfigDocument {
        let method = method_of(user, "forward");
        let forward = method == "forward";
        let paper = profile == Profile::Paper;
        let d = user.d.unwrap_or(20);
        ConfigDocument {
            d: Some(d),
            x0: Some(0.0),
            m: Some(2),
            features: Some(FeatureKind::LogSignature),
            embedding: Some(if d > 20 { 5 } else { 0 }),
            fine_steps: Some(100),
            coarse_steps: Some(5),
            iterations: Some(match (forward, paper) {
                (true, false) => 3000,
                (true, true) => 10000,
                (false, false) => 300,
                (false, true) => 1000,
            }),
            tail: Some(if forward { 500 } else { 150 }),
            runs: Some(1),
            ..common(self.name(), &method)
        }
    }

    fn model(&self, doc: &Resolved<'_>) -> ModelSpec {
        ModelSpec::arithmetic(doc.x0(), doc.d())
    }

    fn driver(&self, _doc: &Resolved<'_>) -> DriverKind {
        DriverKind::Zero
    }

    fn payoff(&self, _doc: &Resolved<'_>) -> PayoffKind {
        PayoffKind::QuadraticIntegral
    }

    fn references(
        &self,
        spec: &ExperimentSpec,
        _reference_paths: usize,
    ) -> Result<References, HarnessError> {
        let prefix =
            Array2::from_shape_vec((1, spec.model.dim()), spec.model.x0.clone()).expect("one row");
        let exact =
            quadratic_pde_solution(0.0, prefix.view(), spec.grid.fine_dt(), spec.grid.horizon);
        Ok(References {
            primary: Some(("quadratic_pde_solution".into(), exact)),
            extra: Vec::new(),
        })
    }
}

/// Bermudan basket call on the running average, exercisable at the coarse dates.
#[derive(Debug, Default)]
pub struct AmerasianExperiment;

impl Experiment for AmerasianExperiment {
    fn name(&self) -> &'static str {
        "amerasian"
    }

    fn model_keys(&self) -> &'static [&'static str] {
        &["x0", "sigma", "rate", "strike"]
    }

    fn defaults(&self, profile: Profile, user: &ConfigDocument) -> ConfigDocument {
        let method = method_of(user, "reflected");
        let paper = profile == Profile::Paper;
        let d = user.d.unwrap_or(1);
        ConfigDocument {
            d: Some(d),
            x0: Some(100.0),
            sigma: Some(0.15),
            rate: Some(0.05),
            strike: Some(100.0),
            m: Some(if d == 1 { 3 } else { 2 }),
            features: Some(if d == 1 {
                FeatureKind::Signature
            } else {
                FeatureKind::LogSignature
            }),
            embedding: Some(if d > 20 { 5 } else { 0 }),
            fine_steps: Some(if paper { 1000 } else { 200 }),
            coarse_steps: Some(20),
            iterations: Some(if paper { 3000 } else { 1500 }),
            tail: Some(300),
            lr: Some(1e-2),
            runs: Some(if paper { 50 } else { 10 }),
            reference_paths: Some(if paper { 200_000 } else { 50_000 }),
            ..common(self.name(), &method)
        }
    }

    fn model(&self, doc: &Resolved<'_>) -> ModelSpec {
        ModelSpec::geometric(doc.rate(), doc.sigma(), doc.x0(), doc.d())
    }

    fn driver(&self, doc: &Resolved<'_>) -> DriverKind {
        DriverKind::Discount { rate: doc.rate() }
    }

    fn payoff(&self, doc: &Resolved<'_>) -> PayoffKind {
        PayoffKind::AsianBasketCall {
            strike: doc.strike(),
            weights: None,
        }
    }

    fn references(
        &self,
        spec: &ExperimentSpec,
        reference_paths: usize,
    ) -> Result<References, HarnessError> {
        let PayoffKind::AsianBasketCall { strike, .. } = spec.payoff else {
            return Ok(References {
                primary: None,
                extra: Vec::new(),
            });
        };
        let d = spec.model.dim();
        let weights = vec![1.0 / d as f64; d];
        let (european, se) = asian_european_mc(
            &spec.model,
            &spec.grid,
            strike,
            &weights,
            reference_paths,
            derive_seed(spec.seed, u64::MAX),
        )?;
        let bound = jensen_lower_bound(&spec.model, spec.grid.horizon, strike, &weights)?;
        Ok(References {
            primary: Some(("european_mc".into(), european)),
            extra: vec![
                ("european_mc_se".into(), se),
                ("jensen_lower_bound".into(), bound),
            ],
        })
    }
}

/// Name-keyed collection of experiments.
#[derive(Clone, Default)]
pub struct ExperimentRegistry {
    entries: Vec<Arc<dyn Experiment>>,
}

impl ExperimentRegistry {
    pub fn with_builtin() -> Self {
        let mut r = Self::default();
        r.register(Arc::new(LookbackExperiment));
        r.register(Arc::new(QuadraticExperiment));
        r.register(Arc::new(AmerasianExperiment));
        r
    }

    pub fn register(&mut self, experiment: Arc<dyn Experiment>) {
        self.entries.retain(|e| e.name() != experiment.name());
        self.entries.push(experiment);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Experiment>, HarnessError> {
        self.entries
            .iter()
            .find(|e| e.name() == name)
            .cloned()
            .ok_or_else(|| {
                HarnessError::validation(
                    vec!["experiment".into()],
                    format!(
                        "unknown experiment '{name}' (known: {})",
                        self.names().join(", ")
                    ),
                )
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name()).collect()
    }
}

pub fn experiments() -> &'static ExperimentRegistry {
    static REGISTRY: OnceLock<ExperimentRegistry> = OnceLock::new();
    REGISTRY.get_or_init(ExperimentRegistry::with_builtin)
}

/// A validated configuration: the complete document and the `ExperimentSpec` built from it.
#[derive(Clone)]
pub struct LoadedConfig {
    pub profile: Profile,
    pub document: ConfigDocument,
    pub spec: ExperimentSpec,
    pub experiment: Arc<dyn Experiment>,
}

impl std::fmt::Debug for LoadedConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LoadedConfig")
            .field("profile", &self.profile)
            .field("spec", &self.spec)
            .finish()
    }
}

impl LoadedConfig {
    pub fn workers(&self) -> usize {
        self.document.workers.unwrap_or(1)
    }

    pub fn reference_paths(&self) -> usize {
        self.document.reference_paths.unwrap_or(50_000)
    }

    pub fn out_dir(&self) -> std::path::PathBuf {
        self.document.out.clone().unwrap_or_default().into()
    }
}

/// Maps solver-level problem keys to document keys.
fn document_keys(solver_key: &str) -> &'static [&'static str] {
    match solver_key {
        "grid" => &["fine_steps", "coarse_steps", "horizon"],
        "model" => &["d", "x0", "sigma", "rate"],
        "driver" => &["rate"],
        "payoff" => &["strike"],
        "depth" => &["m"],
        "embedding" => &["embedding"],
        "hidden" => &["hidden"],
        "batch" => &["batch"],
        "lr" => &["lr"],
        "y0_lr" => &["y0_lr"],
        "y0_init" => &["y0_init"],
        "epsilon" => &["epsilon"],
        "runs" => &["runs"],
        "method" => &["method"],
        _ => &[],
    }
}

fn set_keys(doc: &ConfigDocument) -> Vec<&'static str> {
    let mut keys = Vec::new();
    let mut note = |present: bool, key: &'static str| {
        if present {
            keys.push(key);
        }
    };
    note(doc.x0.is_some(), "x0");
    note(doc.sigma.is_some(), "sigma");
    note(doc.rate.is_some(), "rate");
    note(doc.strike.is_some(), "strike");
    keys
}

/// Builds the validated spec from a user document (file plus flags) on top of
/// the experiment defaults for `profile`.
pub fn load_config(user: &ConfigDocument, profile: Profile) -> Result<LoadedConfig, HarnessError> {
    let name = user.experiment.clone().ok_or_else(|| {
        HarnessError::validation(vec!["experiment".into()], "no experiment selected".into())
    })?;
    let experiment = experiments().get(&name)?;
    let mut problems: Vec<(String, String)> = set_keys(user)
        .into_iter()
        .filter(|k| !experiment.model_keys().contains(k) && !TRAINING_KEYS.contains(k))
        .map(|k| {
            (
                k.to_string(),
                format!("`{k}` is not used by experiment '{name}'"),
            )
        })
        .collect();
    let mut document = experiment.defaults(profile, user);
    document.overlay(user);
    let doc = Resolved(&document);

    if document.d == Some(0) {
        problems.push(("d".into(), "dimension must be at least 1".into()));
    }
    if document.seed.is_some_and(|s| s > i64::MAX as u64) {
        problems.push(("seed".into(), format!("seed must be at most {}", i64::MAX)));
    }
    if document.workers == Some(0) {
        problems.push(("workers".into(), "at least one worker is required".into()));
    }
    if document.reference_paths.is_some_and(|p| p < 1000) {
        problems.push((
            "reference_paths".into(),
            "at least 1000 reference paths are required".into(),
        ));
    }
    if !problems.is_empty() {
        return Err(validation_error(problems));
    }

    let get = |v: Option<usize>, key: &str| v.unwrap_or_else(|| panic!("defaults provide `{key}`"));
    let spec = ExperimentSpec {
        experiment: name.clone(),
        method: document.method.clone().expect("defaults provide `method`"),
        model: experiment.model(&doc),
        grid: GridSpec {
            horizon: document.horizon.expect("defaults provide `horizon`"),
            fine_steps: get(document.fine_steps, "fine_steps"),
            coarse_steps: get(document.coarse_steps, "coarse_steps"),
        },
        driver: experiment.driver(&doc),
        payoff: experiment.payoff(&doc),
        depth: get(document.m, "m"),
        features: document.features.expect("defaults provide `features`"),
        embedding: document.embedding.filter(|&w| w > 0),
        hidden: document.hidden.clone().expect("defaults provide `hidden`"),
        batch: get(document.batch, "batch"),
        iterations: get(document.iterations, "iterations"),
        lr: document.lr.expect("defaults provide `lr`"),
        y0_lr: document.y0_lr,
        y0_init: document.y0_init,
        epsilon: document.epsilon.expect("defaults provide `epsilon`"),
        tail: get(document.tail, "tail"),
        probe_burst: get(document.probe_burst, "probe_burst"),
        probe_limit: get(document.probe_limit, "probe_limit"),
        runs: get(document.runs, "runs"),
        seed: document.seed.expect("defaults provide `seed`"),
    };
    let problems: Vec<(String, String)> = spec
        .problems()
        .into_iter()
        .flat_map(|(key, msg)| {
            let keys = document_keys(key);
            if keys.is_empty() {
                vec![(key.to_string(), msg)]
            } else {
                vec![(keys.join("/"), msg)]
            }
        })
        .collect();
    if !problems.is_empty() {
        return Err(validation_error(problems));
    }
    Ok(LoadedConfig {
        profile,
        document,
        spec,
        experiment,
    })
}

fn validation_error(problems: Vec<(String, String)>) -> HarnessError {
    let keys = problems
        .iter()
        .flat_map(|(k, _)| k.split('/').map(str::to_string))
        .collect();
    let message = problems
        .iter()
        .map(|(k, m)| format!("{k}: {m}"))
        .collect::<Vec<_>>()
        .join("; ");
    HarnessError::validation(keys, message)
}

/// Complete document describing `spec`; loading it reproduces `spec`.
pub fn document_from_spec(spec: &ExperimentSpec) -> ConfigDocument {
    let mut doc = ConfigDocument {
        experiment: Some(spec.experiment.clone()),
        method: Some(spec.method.clone()),
        d: Some(spec.model.dim()),
        m: Some(spec.depth),
        features: Some(spec.features),
        embedding: Some(spec.embedding.unwrap_or(0)),
        fine_steps: Some(spec.grid.fine_steps),
        coarse_steps: Some(spec.grid.coarse_steps),
        horizon: Some(spec.grid.horizon),
        x0: spec.model.x0.first().copied(),
        hidden: Some(spec.hidden.clone()),
        batch: Some(spec.batch),
        iterations: Some(spec.iterations),
        lr: Some(spec.lr),
        y0_lr: spec.y0_lr,
        y0_init: spec.y0_init,
        epsilon: Some(spec.epsilon),
        tail: Some(spec.tail),
        probe_burst: Some(spec.probe_burst),
        probe_limit: Some(spec.probe_limit),
        runs: Some(spec.runs),
        seed: Some(spec.seed),
        ..Default::default()
    };
    if let Dynamics::Geometric { rate, vols } = &spec.model.dynamics {
        doc.rate = Some(*rate);
        doc.sigma = vols.first().copied();
    }
    if let PayoffKind::AsianBasketCall { strike, .. } = spec.payoff {
        doc.strike = Some(strike);
    }
    doc
}
