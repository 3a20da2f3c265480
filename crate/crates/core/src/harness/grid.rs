//! The noise-injection experiment: one fixed noise draw per noise setting,
//! one model per training method, one metrics report per (setting, method).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, LabelKind};
use crate::draw::NoiseDraw;
use crate::error::{Error, Result};
use crate::harness::frontier::{test_error_and_regret, TestSet};
use crate::harness::synthetic::{generate_synthetic, SyntheticSpec};
use crate::learners::{fit_erm, fit_hedged, FlipRates, HedgeSpec, LinearModel, TrainConfig};
use crate::metrics::{EvalContext, MetricsReport, Method};
use crate::noise::{inject_noise, NoiseModel, NoiseSpec, PosteriorTable, Priors};
use crate::seed::{self, derive_seed};

/// Stream ids for [`derive_seed`]; keep stable, outputs depend on them.
mod stream {
    pub const DATA: u64 = 0;
    pub const SPLIT: u64 = 1;
    pub const TRAIN_NOISE: u64 = 2;
    pub const TEST_NOISE: u64 = 3;
    pub const ENSEMBLE: u64 = 4;
}

/// Where the clean data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Csv(PathBuf),
    Synthetic(SyntheticSpec),
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(SyntheticSpec::two_gaussians(10_000, 2, 2.0))
    }
}

/// A named noise model applied to the clean labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSetting {
    pub name: String,
    pub model: NoiseModel,
}

impl NoiseSetting {
    pub fn new(name: impl Into<String>, spec: NoiseSpec) -> Self {
        Self {
            name: name.into(),
            model: NoiseModel { spec, priors: None },
        }
    }

    /// Class-level noise that only flips positives.
    pub fn positives_only(rate: f64) -> Result<Self> {
        Ok(Self::new(format!("{}%", (rate * 1000.0).round() / 10.0), NoiseSpec::class_level(0.0, rate)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub data: DataSource,
    /// Fraction of rows used for training.
    pub split: f64,
    pub noise: Vec<NoiseSetting>,
    pub methods: Vec<Method>,
    /// Ensemble size for ambiguity-based commands.
    pub m: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataSource::default(),
            split: 0.8,
            noise: [0.05, 0.2, 0.4]
                .iter()
                .map(|&r| NoiseSetting::positives_only(r).expect("valid default rate"))
                .collect(),
            methods: Method::ALL.to_vec(),
            m: 100,
            epsilon: crate::sampling::DEFAULT_EPSILON,
            seed: 0,
            train: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(Error::Config(format!("split {} must lie in (0, 1)", self.split)));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        if self.noise.is_empty() {
            return Err(Error::Config("at least one noise setting is required".into()));
        }
        if self.m == 0 {
            return Err(Error::Config("m must be at least 1".into()));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon {} must be non-negative", self.epsilon)));
        }
        self.train.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Seed for one of the fixed random streams.
    pub fn stream_seed(&self, path: &[u64]) -> u64 {
        derive_seed(self.seed, path)
    }

    /// Seed used for plausible draws of noise setting `index`.
    pub fn ensemble_seed(&self, index: usize) -> u64 {
        self.stream_seed(&[stream::ENSEMBLE, index as u64])
    }
}

/// Clean data split into train and test parts.
#[derive(Debug, Clone)]
pub struct SplitData {
    pub train: Dataset,
    pub test: Dataset,
}

/// Loads (or generates) the clean data and splits it with a seeded shuffle.
pub fn load_split(config: &ExperimentConfig) -> Result<SplitData> {
    config.validate()?;
    let data = match &config.data {
        DataSource::Csv(path) => Dataset::read_csv(path, LabelKind::Clean)?,
        DataSource::Synthetic(spec) => generate_synthetic(spec, config.stream_seed(&[stream::DATA]))?.dataset,
    };
    split(&data, config.split, config.stream_seed(&[stream::SPLIT]))
}

pub fn split(data: &Dataset, fraction: f64, seed: u64) -> Result<SplitData> {
    let n = data.len();
    let n_train = (fraction * n as f64).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::Config(format!(
            "split {fraction} of {n} rows leaves an empty train or test part"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed));
    let (train, test) = order.split_at(n_train);
    let (mut train, mut test) = (train.to_vec(), test.to_vec());
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitData {
        train: data.subset(&train)?,
        test: data.subset(&test)?,
    })
}

/// Priors used to compute the posterior: those stored with the noise model,
/// else `Pr(Y = 1)` recovered from the noisy positive rate by inverting
/// `π̃_1 = π_1 (1 - p_1) + (1 - π_1) p_0` (per group for group-level noise).
pub fn resolve_priors(model: &NoiseModel, noisy: &Dataset) -> Result<Priors> {
    if let Some(p) = &model.priors {
        return Ok(p.clone());
    }
    let invert = |positive_rate: f64, p: [f64; 2]| -> f64 {
        ((positive_rate - p[0]) / (1.0 - p[0] - p[1])).clamp(0.0, 1.0)
    };
    match &model.spec {
        NoiseSpec::Uniform { p } => Priors::class(invert(noisy.positive_rate(), [*p, *p])),
        NoiseSpec::ClassLevel { p } => Priors::class(invert(noisy.positive_rate(), *p)),
        NoiseSpec::GroupLevel { p } => {
            let groups = noisy
                .groups()
                .ok_or_else(|| Error::Config("group-level noise needs group ids".into()))?;
            let mut pi = std::collections::BTreeMap::new();
            for (&g, &rates) in p {
                let members: Vec<u8> = groups
                    .iter()
                    .zip(noisy.labels())
                    .filter(|(h, _)| **h == g)
                    .map(|(_, &y)| y)
                    .collect();
                let rate = if members.is_empty() {
                    0.5
                } else {
                    members.iter().map(|&y| f64::from(y)).sum::<f64>() / members.len() as f64
                };
                let pi1 = invert(rate, rates);
                pi.insert(g, [1.0 - pi1, pi1]);
            }
            Ok(Priors::Group { pi })
        }
        NoiseSpec::InstanceLevel { p } => {
            let n = p.len() as f64;
            let mean = [
                p.iter().map(|r| r[0]).sum::<f64>() / n,
                p.iter().map(|r| r[1]).sum::<f64>() / n,
            ];
            Priors::class(invert(noisy.positive_rate(), mean))
        }
    }
}

/// Forward flip rates for the noise-corrected loss.
pub fn hedge_spec(spec: &NoiseSpec) -> Result<HedgeSpec> {
    match spec {
        NoiseSpec::Uniform { p } => Ok(HedgeSpec::Class(FlipRates::new(*p, *p)?)),
        NoiseSpec::ClassLevel { p } => Ok(HedgeSpec::Class(FlipRates::new(p[0], p[1])?)),
        NoiseSpec::GroupLevel { p } => Ok(HedgeSpec::Group(
            p.iter()
                .map(|(&g, r)| Ok((g, FlipRates::new(r[0], r[1])?)))
                .collect::<Result<_>>()?,
        )),
        NoiseSpec::InstanceLevel { .. } => Err(Error::Config(
            "hedging is only supported for uniform, class- and group-level noise".into(),
        )),
    }
}

pub fn train_method(noisy: &Dataset, spec: &NoiseSpec, method: Method, train: &TrainConfig) -> Result<LinearModel> {
    match method {
        Method::Ignore => fit_erm(noisy, train),
        Method::Hedge => fit_hedged(noisy, &hedge_spec(spec)?, train),
    }
}

/// Everything derived from one noise setting before any model is trained.
#[derive(Debug, Clone)]
pub struct NoisyTask {
    pub name: String,
    pub spec: NoiseSpec,
    pub noisy_train: Dataset,
    pub true_draw: NoiseDraw,
    pub posterior: PosteriorTable,
    pub test: TestSet,
}

/// Injects the fixed noise draw of setting `index` into both splits.
pub fn prepare_task(config: &ExperimentConfig, data: &SplitData, index: usize) -> Result<NoisyTask> {
    let setting = config
        .noise
        .get(index)
        .ok_or_else(|| Error::Config(format!("no noise setting {index}")))?;
    let spec = &setting.model.spec;
    let (noisy_train, true_draw) = inject_noise(
        &data.train,
        spec,
        config.stream_seed(&[stream::TRAIN_NOISE, index as u64]),
    )?;
    let (noisy_test, test_draw) = inject_noise(
        &data.test,
        &test_spec(spec)?,
        config.stream_seed(&[stream::TEST_NOISE, index as u64]),
    )?;
    let priors = resolve_priors(&setting.model, &noisy_train)?;
    let posterior = crate::noise::posterior(spec, &priors)?;
    Ok(NoisyTask {
        name: setting.name.clone(),
        spec: spec.clone(),
        noisy_train,
        true_draw,
        posterior,
        test: TestSet::new(data.test.clone(), noisy_test, test_draw)?,
    })
}

/// Instance-level specs describe training rows only; the test split gets
/// their average class rates.
fn test_spec(spec: &NoiseSpec) -> Result<NoiseSpec> {
    match spec {
        NoiseSpec::InstanceLevel { p } => {
            let n = p.len() as f64;
            let p0 = p.iter().map(|r| r[0]).sum::<f64>() / n;
            let p1 = p.iter().map(|r| r[1]).sum::<f64>() / n;
            NoiseSpec::class_level(p0, p1)
        }
        other => Ok(other.clone()),
    }
}

/// One (noise setting, method) cell of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub noise: String,
    pub test_error: f64,
    pub test_regret: f64,
    #[serde(flatten)]
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub config: ExperimentConfig,
    pub rows: Vec<GridRow>,
}

/// Runs every (noise setting × method) cell. Cells run in parallel; rows
/// come back in config order.
pub fn run_grid(config: &ExperimentConfig) -> Result<GridReport> {
    let data = load_split(config)?;
    let tasks = (0..config.noise.len())
        .into_par_iter()
        .map(|j| prepare_task(config, &data, j))
        .collect::<Result<Vec<_>>>()?;
    let cells: Vec<(usize, Method)> = (0..tasks.len())
        .flat_map(|j| config.methods.iter().map(move |&m| (j, m)))
        .collect();
    let rows = cells
        .into_par_iter()
        .map(|(j, method)| {
            let task = &tasks[j];
            let model = train_method(&task.noisy_train, &task.spec, method, &config.train)?;
            let ctx = EvalContext::new(
                &model,
                &task.noisy_train,
                Some(&task.true_draw),
                method,
                &task.posterior,
            )?;
            let metrics = MetricsReport::compute(&ctx)?;
            let (test_error, test_regret) = test_error_and_regret(&model, &task.test);
            log::info!("{} / {method}: regret {:.4}", task.name, metrics.regret);
            Ok(GridRow {
                noise: task.name.clone(),
                test_error,
                test_regret,
                metrics,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GridReport {
        config: config.clone(),
        rows,
    })
}

impl GridReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Metrics as rows, (noise setting, method) as columns.
    pub fn table(&self) -> String {
        let mut noises: Vec<&str> = Vec::new();
        for row in &self.rows {
            if !noises.contains(&row.noise.as_str()) {
                noises.push(&row.noise);
            }
        }
        let methods: Vec<Method> = self.config.methods.clone();
        let cell = |noise: &str, method: Method| {
            self.rows
                .iter()
                .find(|r| r.noise == noise && r.metrics.method == method)
        };
        type Getter = fn(&GridRow) -> f64;
        let lines: [(&str, Getter); 9] = [
            ("TrueError", |r| r.metrics.true_error),
            ("AnticipatedError", |r| r.metrics.anticipated_error),
            ("Regret", |r| r.metrics.regret),
            ("Overreliance", |r| r.metrics.overreliance),
            ("Underreliance", |r| r.metrics.underreliance),
            ("Susceptibility", |r| r.metrics.susceptibility),
            ("ExpectedRegret", |r| r.metrics.expected_regret),
            ("TestError", |r| r.test_error),
            ("TestRegret", |r| r.test_regret),
        ];
        let width = 8 * methods.len() + 1;
        let mut out = String::new();
        let _ = write!(out, "{:<18}", "Noise");
        for noise in &noises {
            let _ = write!(out, "|{noise:^width$}");
        }
        out.push('\n');
        let _ = write!(out, "{:<18}", "Metric");
        for _ in &noises {
            out.push('|');
            for m in &methods {
                let _ = write!(out, "{:>8}", m.name());
            }
            out.push(' ');
        }
        out.push('\n');
        out.push_str(&"-".repeat(18 + noises.len() * (width + 1)));
        out.push('\n');
        for (label, get) in lines {
            let _ = write!(out, "{label:<18}");
            for noise in &noises {
                out.push('|');
                for &m in &methods {
                    match cell(noise, m) {
                        Some(r) => {
                            let _ = write!(out, "{:>7.1}%", 100.0 * get(r));
                        }
                        None => {
                            let _ = write!(out, "{:>8}", "-");
                        }
                    }
                }
                out.push(' ');
            }
            out.push('\n');
        }
        out
    }

    /// Writes `metrics.json` and `grid_table.txt` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [("metrics.json", self.to_json()), ("grid_table.txt", self.table())] {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}
