//! Linear classifiers trained by regularized logistic ERM, either on the
//! labels as given or with the class-conditional unbiased (hedged) loss.
//!
//! Both objectives share one optimizer. Each instance contributes
//! `a_i ℓ(s_i, ỹ_i) - b_i ℓ(s_i, 1 - ỹ_i)` where `ℓ` is the logistic loss and
//! `s_i = w·z_i + b`; plain ERM uses `(a, b) = (1, 0)`. The objective is the
//! mean over instances plus `λ/2 ||w||²` (bias unpenalized), minimized by
//! full-batch gradient descent with a backtracking (Armijo) line search.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::draw::{NoiseDraw, Provenance};
use crate::error::{Error, Result};
use crate::noise::PosteriorTable;

/// Logit used by the constant classifier returned for single-class data.
pub const CONSTANT_LOGIT: f64 = 10.0;

pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^s)` without overflow.
fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

/// Logistic loss of score `s` against `label`.
pub fn logistic_loss(s: f64, label: u8) -> f64 {
    if label == 1 {
        softplus(-s)
    } else {
        softplus(s)
    }
}

/// d/ds of [`logistic_loss`].
fn logistic_slope(s: f64, label: u8) -> f64 {
    sigmoid(s) - f64::from(label)
}

/// Anything that maps a feature row to a probability of label 1.
pub trait Classifier: Send + Sync {
    fn predict_proba(&self, x: &[f64]) -> f64;
    fn predict(&self, x: &[f64]) -> u8 {
        u8::from(self.predict_proba(x) >= 0.5)
    }
    fn dim(&self) -> usize;

    fn predict_all(&self, data: &Dataset) -> Vec<u8> {
        data.rows().map(|x| self.predict(x)).collect()
    }
}

/// A learning algorithm: used to train one model per plausible dataset.
pub trait Trainer: Sync {
    type Model: Classifier;
    fn train(&self, data: &Dataset) -> Result<Self::Model>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardization {
    fn fit(data: &Dataset) -> Self {
        let (n, d) = (data.len() as f64, data.dim());
        let mut mean = vec![0.0; d];
        for x in data.rows() {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for x in data.rows() {
            for j in 0..d {
                var[j] += (x[j] - mean[j]).powi(2);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for j in 0..x.len() {
            out[j] = (x[j] - self.mean[j]) / self.scale[j];
        }
    }
}

/// `predict(x) = 1` iff `sigmoid(w·z + b) >= threshold`, where `z` is `x`
/// after the stored standardization (if any).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub threshold: f64,
    #[serde(default)]
    pub standardization: Option<Standardization>,
}

impl LinearModel {
    pub fn zeros(d: usize) -> Self {
        Self {
            weights: vec![0.0; d],
            bias: 0.0,
            threshold: 0.5,
            standardization: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.weights.iter().all(|w| w.is_finite())
            && self.bias.is_finite()
            && self.threshold.is_finite();
        if !finite {
            return Err(Error::Input("model parameters must be finite".into()));
        }
        if let Some(s) = &self.standardization {
            let d = self.weights.len();
            if s.mean.len() != d || s.scale.len() != d {
                return Err(Error::Input("standardization does not match weights".into()));
            }
            if s.mean.iter().chain(&s.scale).any(|v| !v.is_finite())
                || s.scale.iter().any(|&v| v <= 0.0)
            {
                return Err(Error::Input("standardization must be finite and positive".into()));
            }
        }
        Ok(())
    }

    /// Linear score `w·z + b`.
    pub fn score(&self, x: &[f64]) -> f64 {
        let dot = match &self.standardization {
            Some(s) => x
                .iter()
                .zip(&self.weights)
                .enumerate()
                .map(|(j, (v, w))| w * (v - s.mean[j]) / s.scale[j])
                .sum::<f64>(),
            None => x.iter().zip(&self.weights).map(|(v, w)| v * w).sum(),
        };
        dot + self.bias
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

impl Classifier for LinearModel {
    fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.score(x))
    }

    fn predict(&self, x: &[f64]) -> u8 {
        u8::from(self.predict_proba(x) >= self.threshold)
    }

    fn dim(&self) -> usize {
        self.weights.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub l2_penalty: f64,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub standardize_features: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            l2_penalty: 1e-4,
            max_iterations: 5_000,
            gradient_tolerance: 1e-8,
            standardize_features: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gradient_tolerance > 0.0) {
            return Err(Error::Config("gradient_tolerance must be positive".into()));
        }
        if !(self.l2_penalty >= 0.0) || !self.l2_penalty.is_finite() {
            return Err(Error::Config("l2_penalty must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Flip rates `[ρ_0, ρ_1]` with `ρ_y = p_{u|y}`, conditioned on the clean class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlipRates(pub [f64; 2]);

impl FlipRates {
    pub fn new(rho0: f64, rho1: f64) -> Result<Self> {
        let r = FlipRates([rho0, rho1]);
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let [r0, r1] = self.0;
        if !(0.0..1.0).contains(&r0) || !(0.0..1.0).contains(&r1) || r0 + r1 >= 1.0 {
            return Err(Error::Domain(format!(
                "flip rates ({r0}, {r1}) need rho_0 + rho_1 < 1"
            )));
        }
        Ok(())
    }

    /// `(a, b)` such that the hedged loss is `a ℓ(s, ỹ) - b ℓ(s, 1-ỹ)`.
    fn coefficients(&self, noisy_label: u8) -> (f64, f64) {
        let [r0, r1] = self.0;
        let denom = 1.0 - r0 - r1;
        let rho = |y: u8| self.0[y as usize];
        ((1.0 - rho(1 - noisy_label)) / denom, rho(noisy_label) / denom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HedgeSpec {
    Class(FlipRates),
    Group(BTreeMap<i64, FlipRates>),
}

impl HedgeSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            HedgeSpec::Class(r) => r.validate(),
            HedgeSpec::Group(m) => m.values().try_for_each(FlipRates::validate),
        }
    }

    pub fn rates_for(&self, data: &Dataset, i: usize) -> Result<FlipRates> {
        match self {
            HedgeSpec::Class(r) => Ok(*r),
            HedgeSpec::Group(m) => {
                let g = data
                    .group(i)
                    .ok_or_else(|| Error::Config("group hedging needs a `group` column".into()))?;
                m.get(&g)
                    .copied()
                    .ok_or_else(|| Error::Config(format!("no hedge rates for group {g}")))
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            HedgeSpec::Class(r) => r.0 == [0.0, 0.0],
            HedgeSpec::Group(m) => m.values().all(|r| r.0 == [0.0, 0.0]),
        }
    }
}

/// Unbiased loss for an observed noisy label:
/// `((1 - ρ_{1-ỹ}) ℓ(f(x), ỹ) - ρ_ỹ ℓ(f(x), 1-ỹ)) / (1 - ρ_0 - ρ_1)`.
///
/// `loss_observed` is `ℓ(f(x), ỹ)` and `loss_flipped` is `ℓ(f(x), 1-ỹ)`.
/// Its expectation over the flip equals the loss on the clean label.
pub fn unbiased_loss(
    loss_observed: f64,
    loss_flipped: f64,
    noisy_label: u8,
    rates: FlipRates,
) -> Result<f64> {
    rates.validate()?;
    if noisy_label > 1 {
        return Err(Error::Domain("noisy label must be binary".into()));
    }
    let (a, b) = rates.coefficients(noisy_label);
    Ok(a * loss_observed - b * loss_flipped)
}

/// Penalized mean loss over a (standardized) design.
pub struct Objective {
    z: Vec<f64>,
    d: usize,
    labels: Vec<u8>,
    coef: Vec<(f64, f64)>,
    l2: f64,
}

impl Objective {
    fn new(z: Vec<f64>, d: usize, labels: Vec<u8>, coef: Vec<(f64, f64)>, l2: f64) -> Self {
        Self {
            z,
            d,
            labels,
            coef,
            l2,
        }
    }

    /// Number of parameters: `d` weights then the bias.
    pub fn num_params(&self) -> usize {
        self.d + 1
    }

    fn score(&self, theta: &[f64], i: usize) -> f64 {
        let row = &self.z[i * self.d..(i + 1) * self.d];
        row.iter().zip(theta).map(|(x, w)| x * w).sum::<f64>() + theta[self.d]
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        let n = self.labels.len();
        let mut total = 0.0;
        for i in 0..n {
            let s = self.score(theta, i);
            let (a, b) = self.coef[i];
            let y = self.labels[i];
            total += a * logistic_loss(s, y) - b * logistic_loss(s, 1 - y);
        }
        let penalty: f64 = theta[..self.d].iter().map(|w| w * w).sum();
        total / n as f64 + 0.5 * self.l2 * penalty
    }

    pub fn value_and_gradient(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let n = self.labels.len();
        let mut total = 0.0;
        let mut grad = vec![0.0; self.d + 1];
        for i in 0..n {
            let s = self.score(theta, i);
            let (a, b) = self.coef[i];
            let y = self.labels[i];
            total += a * logistic_loss(s, y) - b * logistic_loss(s, 1 - y);
            let slope = a * logistic_slope(s, y) - b * logistic_slope(s, 1 - y);
            let row = &self.z[i * self.d..(i + 1) * self.d];
            for (g, x) in grad.iter_mut().zip(row) {
                *g += slope * x;
            }
            grad[self.d] += slope;
        }
        let inv_n = 1.0 / n as f64;
        grad.iter_mut().for_each(|g| *g *= inv_n);
        let mut penalty = 0.0;
        for j in 0..self.d {
            penalty += theta[j] * theta[j];
            grad[j] += self.l2 * theta[j];
        }
        (total * inv_n + 0.5 * self.l2 * penalty, grad)
    }
}

/// Diagnostics from a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
    /// Set when the data held one class and a constant classifier was returned.
    pub single_class: Option<u8>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn gradient_descent(obj: &Objective, config: &TrainConfig) -> (Vec<f64>, FitReport) {
    const ARMIJO: f64 = 1e-4;
    let mut theta = vec![0.0; obj.num_params()];
    let mut step = 1.0;
    let (mut f, mut g) = obj.value_and_gradient(&theta);
    let mut gnorm = norm(&g);
    let mut iterations = 0;
    let mut converged = gnorm <= config.gradient_tolerance;
    let mut candidate = vec![0.0; theta.len()];

    while !converged && iterations < config.max_iterations {
        iterations += 1;
        let g2 = gnorm * gnorm;
        // Objective values below this gap are indistinguishable in f64.
        let slack = 8.0 * f64::EPSILON * f.abs().max(1.0);
        let mut accepted = false;
        while step > 1e-16 {
            for ((c, t), gi) in candidate.iter_mut().zip(&theta).zip(&g) {
                *c = t - step * gi;
            }
            let fc = obj.value(&candidate);
            if fc <= f - ARMIJO * step * g2 + slack {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        std::mem::swap(&mut theta, &mut candidate);
        let previous = std::mem::take(&mut g);
        (f, g) = obj.value_and_gradient(&theta);
        gnorm = norm(&g);
        converged = gnorm <= config.gradient_tolerance;
        // Barzilai-Borwein length for the next trial step.
        let (mut ss, mut sy) = (0.0, 0.0);
        for ((t, c), (gn, gp)) in theta.iter().zip(&candidate).zip(g.iter().zip(&previous)) {
            let s = t - c;
            ss += s * s;
            sy += s * (gn - gp);
        }
        step = if sy > 0.0 { (ss / sy).clamp(1e-10, 1e6) } else { (step * 2.0).min(1e6) };
    }
    (
        theta,
        FitReport {
            iterations,
            converged,
            gradient_norm: gnorm,
            single_class: None,
        },
    )
}

fn design(data: &Dataset, config: &TrainConfig) -> (Vec<f64>, Option<Standardization>) {
    if !config.standardize_features {
        return (data.features().to_vec(), None);
    }
    let st = Standardization::fit(data);
    let d = data.dim();
    let mut z = vec![0.0; data.len() * d];
    for (i, x) in data.rows().enumerate() {
        st.apply(x, &mut z[i * d..(i + 1) * d]);
    }
    (z, Some(st))
}

fn single_class(labels: &[u8]) -> Option<u8> {
    let first = labels[0];
    labels.iter().all(|&y| y == first).then_some(first)
}

fn fit_with_coefficients(
    data: &Dataset,
    coef: Vec<(f64, f64)>,
    config: &TrainConfig,
) -> Result<(LinearModel, FitReport)> {
    config.validate()?;
    let d = data.dim();
    let (z, standardization) = design(data, config);

    if let Some(class) = single_class(data.labels()) {
        log::warn!("training data holds only class {class}; returning a constant classifier");
        let model = LinearModel {
            weights: vec![0.0; d],
            bias: if class == 1 { CONSTANT_LOGIT } else { -CONSTANT_LOGIT },
            threshold: 0.5,
            standardization,
        };
        let report = FitReport {
            iterations: 0,
            converged: true,
            gradient_norm: 0.0,
            single_class: Some(class),
        };
        return Ok((model, report));
    }

    let obj = Objective::new(z, d, data.labels().to_vec(), coef, config.l2_penalty);
    let (theta, report) = gradient_descent(&obj, config);
    if !report.converged && config.max_iterations > 0 {
        log::debug!(
            "optimizer stopped after {} iterations with gradient norm {:.3e}",
            report.iterations,
            report.gradient_norm
        );
    }
    let model = LinearModel {
        weights: theta[..d].to_vec(),
        bias: theta[d],
        threshold: 0.5,
        standardization,
    };
    model.validate()?;
    Ok((model, report))
}

/// L2-regularized logistic regression on the labels of `data`.
pub fn fit_erm(data: &Dataset, config: &TrainConfig) -> Result<LinearModel> {
    fit_erm_report(data, config).map(|(m, _)| m)
}

pub fn fit_erm_report(data: &Dataset, config: &TrainConfig) -> Result<(LinearModel, FitReport)> {
    fit_with_coefficients(data, vec![(1.0, 0.0); data.len()], config)
}

/// Logistic regression with the unbiased loss for class-conditional noise.
pub fn fit_hedged(noisy: &Dataset, hedge: &HedgeSpec, config: &TrainConfig) -> Result<LinearModel> {
    fit_hedged_report(noisy, hedge, config).map(|(m, _)| m)
}

pub fn fit_hedged_report(
    noisy: &Dataset,
    hedge: &HedgeSpec,
    config: &TrainConfig,
) -> Result<(LinearModel, FitReport)> {
    hedge.validate()?;
    let coef = (0..noisy.len())
        .map(|i| Ok(hedge.rates_for(noisy, i)?.coefficients(noisy.label(i))))
        .collect::<Result<Vec<_>>>()?;
    fit_with_coefficients(noisy, coef, config)
}

/// The objective `fit_hedged` minimizes, exposed for diagnostics and tests.
/// Parameters are `[w_1..w_d, b]` in standardized feature space when
/// `config.standardize_features` is set.
pub fn hedged_objective(
    noisy: &Dataset,
    hedge: &HedgeSpec,
    config: &TrainConfig,
) -> Result<Objective> {
    hedge.validate()?;
    let coef = (0..noisy.len())
        .map(|i| Ok(hedge.rates_for(noisy, i)?.coefficients(noisy.label(i))))
        .collect::<Result<Vec<_>>>()?;
    let (z, _) = design(noisy, config);
    Ok(Objective::new(
        z,
        noisy.dim(),
        noisy.labels().to_vec(),
        coef,
        config.l2_penalty,
    ))
}

/// The objective `fit_erm` minimizes.
pub fn erm_objective(data: &Dataset, config: &TrainConfig) -> Objective {
    let (z, _) = design(data, config);
    Objective::new(
        z,
        data.dim(),
        data.labels().to_vec(),
        vec![(1.0, 0.0); data.len()],
        config.l2_penalty,
    )
}

/// Plain ERM as a [`Trainer`].
#[derive(Debug, Clone, Copy, Default)]
pub struct ErmTrainer(pub TrainConfig);

impl Trainer for ErmTrainer {
    type Model = LinearModel;

    fn train(&self, data: &Dataset) -> Result<LinearModel> {
        fit_erm(data, &self.0)
    }
}

/// The draw a hedged learner implicitly fits: `u_i = 1{q_i > 0.5}`.
/// Instances with `q_i = 0.5` exactly get `u_i = 0`; their count is kept
/// in the draw's `ties`.
pub fn implicit_mle_draw(posterior: &PosteriorTable, noisy: &Dataset) -> Result<NoiseDraw> {
    let q = posterior.resolve(noisy)?;
    let ties = q.iter().filter(|&&v| v == 0.5).count();
    let bits = q.iter().map(|&v| u8::from(v > 0.5)).collect();
    Ok(NoiseDraw::new(bits, Provenance::ImplicitMle)?.with_ties(ties))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::LabelKind;

    fn two_points() -> Dataset {
        Dataset::from_rows(&[vec![-1.0], vec![1.0]], vec![0, 1], LabelKind::Clean).unwrap()
    }

    #[test]
    fn separable_pair_is_fit() {
        let data = two_points();
        let model = fit_erm(&data, &TrainConfig::default()).unwrap();
        assert_eq!(model.predict_all(&data), vec![0, 1]);
    }

    #[test]
    fn zero_iterations_returns_initial_model() {
        let data = two_points();
        let cfg = TrainConfig {
            max_iterations: 0,
            ..TrainConfig::default()
        };
        let model = fit_erm(&data, &cfg).unwrap();
        assert_eq!(model.weights, vec![0.0]);
        assert_eq!(model.bias, 0.0);
        assert_eq!(model.predict_proba(&[3.0]), 0.5);
    }

    #[test]
    fn single_class_gives_constant_model() {
        let data = Dataset::from_rows(&[vec![0.0], vec![2.0]], vec![1, 1], LabelKind::Clean).unwrap();
        let (model, report) = fit_erm_report(&data, &TrainConfig::default()).unwrap();
        assert_eq!(report.single_class, Some(1));
        assert_eq!(model.predict(&[-100.0]), 1);
    }

    #[test]
    fn unbiased_loss_examples() {
        let none = FlipRates::new(0.0, 0.0).unwrap();
        assert_eq!(unbiased_loss(0.7, 0.2, 1, none).unwrap(), 0.7);
        let r = FlipRates::new(0.0, 0.2).unwrap();
        // prediction 1: ℓ(1, 1) = 0, ℓ(1, 0) = 1
        let when_observed_1 = unbiased_loss(0.0, 1.0, 1, r).unwrap();
        let when_observed_0 = unbiased_loss(1.0, 0.0, 0, r).unwrap();
        assert!((when_observed_1 + 0.25).abs() < 1e-15);
        assert!((when_observed_0 - 1.0).abs() < 1e-15);
        assert!((0.8 * when_observed_1 + 0.2 * when_observed_0).abs() < 1e-15);
        assert!(matches!(
            unbiased_loss(0.0, 1.0, 1, FlipRates([0.6, 0.4])),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn mle_draw_threshold_and_ties() {
        let noisy = Dataset::new(vec![0.0; 4], 1, vec![0, 1, 0, 1], None, LabelKind::Noisy).unwrap();
        let t = PosteriorTable::class_level([0.3, 0.791209]).unwrap();
        assert_eq!(implicit_mle_draw(&t, &noisy).unwrap().bits(), &[0, 1, 0, 1]);
        let t = PosteriorTable::class_level([0.1, 0.4]).unwrap();
        assert_eq!(implicit_mle_draw(&t, &noisy).unwrap().flips(), 0);
        let t = PosteriorTable::class_level([0.5, 0.2]).unwrap();
        let draw = implicit_mle_draw(&t, &noisy).unwrap();
        assert_eq!(draw.flips(), 0);
        assert_eq!(draw.ties(), 2);
        assert_eq!(draw.provenance(), Provenance::ImplicitMle);
    }

    #[test]
    fn model_json_revalidates() {
        let m = fit_erm(&two_points(), &TrainConfig::default()).unwrap();
        assert_eq!(LinearModel::from_json(&m.to_json()).unwrap(), m);
        let bad = r#"{"weights":[1.0],"bias":1e999,"threshold":0.5}"#;
        assert!(LinearModel::from_json(bad).is_err());
    }
}
