//! Reliability metrics of a trained model under label noise: regret,
//! overreliance, underreliance, susceptibility and the error decomposition.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::draw::NoiseDraw;
use crate::error::{Error, Result};
use crate::learners::{implicit_mle_draw, unbiased_loss, Classifier, HedgeSpec, LinearModel};
use crate::noise::{NoisyMarginal, PosteriorTable};

/// Posterior flip probabilities at or below this are treated as zero.
pub const SUSCEPTIBILITY_TOLERANCE: f64 = 1e-12;

/// How a model was trained on noisy labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Plain ERM on the noisy labels.
    Ignore,
    /// ERM with the noise-corrected (unbiased) loss.
    Hedge,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::Ignore, Method::Hedge];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ignore => "Ignore",
            Method::Hedge => "Hedge",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ignore" => Ok(Method::Ignore),
            "hedge" => Ok(Method::Hedge),
            other => Err(Error::Config(format!("unknown method {other:?} (expected ignore or hedge)"))),
        }
    }
}

/// A trained model together with the noisy data it is judged on.
#[derive(Clone, Copy)]
pub struct EvalContext<'a, M: Classifier + ?Sized = LinearModel> {
    pub model: &'a M,
    pub noisy: &'a Dataset,
    pub true_draw: Option<&'a NoiseDraw>,
    pub method: Method,
    pub posterior: &'a PosteriorTable,
}

impl<'a, M: Classifier + ?Sized> EvalContext<'a, M> {
    pub fn new(
        model: &'a M,
        noisy: &'a Dataset,
        true_draw: Option<&'a NoiseDraw>,
        method: Method,
        posterior: &'a PosteriorTable,
    ) -> Result<Self> {
        if let Some(draw) = true_draw {
            if draw.len() != noisy.len() {
                return Err(Error::Input(format!(
                    "true draw has {} entries for {} instances",
                    draw.len(),
                    noisy.len()
                )));
            }
        }
        if model.dim() != noisy.dim() {
            return Err(Error::Input(format!(
                "model expects {} features, dataset has {}",
                model.dim(),
                noisy.dim()
            )));
        }
        Ok(Self {
            model,
            noisy,
            true_draw,
            method,
            posterior,
        })
    }

    fn draw(&self) -> Result<&'a NoiseDraw> {
        self.true_draw
            .ok_or_else(|| Error::Capability("this metric needs the true noise draw".into()))
    }

    fn predictions(&self) -> Vec<u8> {
        self.noisy.rows().map(|x| self.model.predict(x)).collect()
    }

    /// The labels anticipated mistakes are measured against: `ỹ` for
    /// Ignore, `ỹ ⊕ u_mle` for Hedge.
    fn anticipated_labels(&self) -> Result<Vec<u8>> {
        let noisy = self.noisy.labels();
        match self.method {
            Method::Ignore => Ok(noisy.to_vec()),
            Method::Hedge => {
                let mle = implicit_mle_draw(self.posterior, self.noisy)?;
                Ok(noisy.iter().zip(mle.bits()).map(|(y, u)| y ^ u).collect())
            }
        }
    }
}

fn mean(bits: &[u8]) -> f64 {
    bits.iter().map(|&b| f64::from(b)).sum::<f64>() / bits.len() as f64
}

/// `ẽ_i`: whether the model looks wrong given only noisy information.
pub fn anticipated_mistake<M: Classifier + ?Sized>(ctx: &EvalContext<'_, M>, i: usize) -> Result<u8> {
    if i >= ctx.noisy.len() {
        return Err(Error::Input(format!("instance {i} out of range")));
    }
    let target = match ctx.method {
        Method::Ignore => ctx.noisy.label(i),
        Method::Hedge => ctx.noisy.label(i) ^ u8::from(ctx.posterior.q(ctx.noisy, i)? > 0.5),
    };
    Ok(u8::from(ctx.model.predict(ctx.noisy.row(i)) != target))
}

pub fn anticipated_mistakes<M: Classifier + ?Sized>(ctx: &EvalContext<'_, M>) -> Result<Vec<u8>> {
    let targets = ctx.anticipated_labels()?;
    Ok(ctx
        .predictions()
        .iter()
        .zip(&targets)
        .map(|(f, t)| u8::from(f != t))
        .collect())
}

/// `e_i = 1{f(x_i) ≠ ỹ_i ⊕ u_i}` for the true draw `u`.
pub fn true_mistakes<M: Classifier + ?Sized>(ctx: &EvalContext<'_, M>) -> Result<Vec<u8>> {
    let draw = ctx.draw()?;
    Ok(ctx
        .predictions()
        .iter()
        .zip(ctx.noisy.labels())
        .zip(draw.bits())
        .map(|((f, y), u)| u8::from(*f != (y ^ u)))
        .collect())
}

/// Anticipated and true mistakes side by side.
#[derive(Debug, Clone, PartialEq)]
pub struct MistakeCells {
    pub anticipated: Vec<u8>,
    pub actual: Vec<u8>,
}

impl MistakeCells {
    pub fn compute<M: Classifier + ?Sized>(ctx: &EvalContext<'_, M>) -> Result<Self> {
        Ok(Self {
            anticipated: anticipated_mistakes(ctx)?,
            actual: true_mistakes(ctx)?,
        })
    }

    pub fn regret_indicator(&self) -> Vec<u8> {
        self.zip(|e_pred, e_true| e_pred != e_true)
    }

    /// Looks right on noisy information, wrong on the truth.
    pub fn overreliance_indicator(&self) -> Vec<u8> {
        self.zip(|e_pred, e_true| e_pred == 0 && e_true == 1)
    }

    /// Looks wrong on noisy information, right on the truth.
    pub fn underreliance_indicator(&self) -> Vec<u8> {
        self.zip(|e_pred, e_true| e_pred == 1 && e_true == 0)
    }

    fn zip(&self, f: impl Fn(u8, u8) -> bool) -> Vec<u8> {
        self.anticipated
            .iter()
            .zip(&self.actual)
            .map(|(&a, &b)| u8::from(f(a, b)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Regret {
    pub rate: f64,
    pub per_instance: Vec<u8>,
}

/// Fraction of instances whose anticipated mistake differs from the actual one.
pub fn regret<M: Classifier + ?Sized>(ctx: &EvalContext<'_, M>) -> Result<Regret> {
    let per_instance = MistakeCells::compute(ctx)?.regret_indicator();
    Ok(Regret {
        rate: mean(&per_instance),
        per_instance,
    })
}

/// Error rate on the clean labels `ỹ ⊕ u`.
pub fn true_error<M: Classifier + ?Sized>(ctx: &EvalContext<'_, M>) -> Result<f64> {
    Ok(mean(&true_mistakes(ctx)?))
}

/// Mean anticipated mistake.
pub fn anticipated_error<M: Classifier + ?Sized>(ctx: &EvalContext<'_, M>) -> Result<f64> {
    Ok(mean(&anticipated_mistakes(ctx)?))
}

pub fn overreliance<M: Classifier + ?Sized>(ctx: &EvalContext<'_, M>) -> Result<f64> {
    Ok(mean(&MistakeCells::compute(ctx)?.overreliance_indicator()))
}

pub fn underreliance<M: Classifier + ?Sized>(ctx: &EvalContext<'_, M>) -> Result<f64> {
    Ok(mean(&MistakeCells::compute(ctx)?.underreliance_indicator()))
}

/// Fraction of instances with a positive posterior flip probability. Does
/// not depend on the model.
pub fn susceptibility(posterior: &PosteriorTable, noisy: &Dataset) -> Result<f64> {
    let q = posterior.resolve(noisy)?;
    let hits = q.iter().filter(|&&v| v > SUSCEPTIBILITY_TOLERANCE).count();
    Ok(hits as f64 / q.len() as f64)
}

fn weighted(q: [Option<f64>; 2], marginal: [f64; 2]) -> f64 {
    q.iter()
        .zip(marginal)
        .map(|(q, w)| q.map_or(0.0, |q| q * w))
        .sum()
}

/// `Σ_ỹ q_{u|ỹ} · Pr(Ỹ = ỹ)`, averaged uniformly over instances for
/// instance-level tables. Group-level tables need group weights, see
/// [`expected_regret_grouped`].
pub fn expected_regret(posterior: &PosteriorTable, marginal: &NoisyMarginal) -> Result<f64> {
    match (posterior, marginal) {
        (PosteriorTable::Uniform { q }, NoisyMarginal::Class(m)) => Ok(q * (m[0] + m[1])),
        (PosteriorTable::ClassLevel { q }, NoisyMarginal::Class(m)) => Ok(weighted(*q, *m)),
        (PosteriorTable::InstanceLevel { q }, NoisyMarginal::Instance(m)) => {
            if q.len() != m.len() || q.is_empty() {
                return Err(Error::Input("posterior and marginal cover different instances".into()));
            }
            Ok(q.iter().zip(m).map(|(q, m)| weighted(*q, *m)).sum::<f64>() / q.len() as f64)
        }
        (PosteriorTable::GroupLevel { .. }, NoisyMarginal::Group(_)) => Err(Error::Config(
            "group-level expected regret needs group weights".into(),
        )),
        _ => Err(Error::Config("posterior and marginal have different strata".into())),
    }
}

/// Group-level expected regret with `Pr(G = g)` given by `weights`.
pub fn expected_regret_grouped(
    posterior: &PosteriorTable,
    marginal: &NoisyMarginal,
    weights: &BTreeMap<i64, f64>,
) -> Result<f64> {
    let (PosteriorTable::GroupLevel { q }, NoisyMarginal::Group(m)) = (posterior, marginal) else {
        return expected_regret(posterior, marginal);
    };
    let total: f64 = weights.values().sum();
    if !(total > 0.0) {
        return Err(Error::Input("group weights must sum to a positive value".into()));
    }
    weights
        .iter()
        .map(|(g, w)| {
            let (Some(qg), Some(mg)) = (q.get(g), m.get(g)) else {
                return Err(Error::Config(format!("no posterior for group {g}")));
            };
            Ok(w / total * weighted(*qg, *mg))
        })
        .sum()
}

/// Expected regret under the empirical noisy-label distribution of `noisy`:
/// the mean of `q_{u|ỹ_i,x_i}`.
pub fn empirical_expected_regret(posterior: &PosteriorTable, noisy: &Dataset) -> Result<f64> {
    let q = posterior.resolve(noisy)?;
    Ok(q.iter().sum::<f64>() / q.len() as f64)
}

/// `Σ ẽ_i − Σ e_i`, also given per instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorDecomposition {
    pub total: f64,
    pub per_instance: f64,
}

impl ErrorDecomposition {
    fn new(total: f64, n: usize) -> Self {
        Self {
            total,
            per_instance: total / n as f64,
        }
    }
}

/// Anticipated minus true training mistakes, using the binary `ẽ`.
pub fn error_decomposition<M: Classifier + ?Sized>(ctx: &EvalContext<'_, M>) -> Result<ErrorDecomposition> {
    let cells = MistakeCells::compute(ctx)?;
    let total: i64 = cells
        .anticipated
        .iter()
        .zip(&cells.actual)
        .map(|(&a, &b)| i64::from(a) - i64::from(b))
        .sum();
    Ok(ErrorDecomposition::new(total as f64, ctx.noisy.len()))
}

/// Noise-corrected 0-1 loss `ℓ̃01(f(x_i), ỹ_i)` per instance. Not binary;
/// its expectation over the forward noise equals the clean 0-1 loss.
pub fn unbiased_zero_one<M: Classifier + ?Sized>(
    model: &M,
    noisy: &Dataset,
    hedge: &HedgeSpec,
) -> Result<Vec<f64>> {
    (0..noisy.len())
        .map(|i| {
            let f = model.predict(noisy.row(i));
            let y = noisy.label(i);
            let rates = hedge.rates_for(noisy, i)?;
            let observed = f64::from(u8::from(f != y));
            unbiased_loss(observed, 1.0 - observed, y, rates)
        })
        .collect()
}

/// `Σ ℓ̃01 − Σ e_i`: the decomposition with the unbiased loss in place of `ẽ`.
pub fn unbiased_error_decomposition<M: Classifier + ?Sized>(
    ctx: &EvalContext<'_, M>,
    hedge: &HedgeSpec,
) -> Result<ErrorDecomposition> {
    let anticipated: f64 = unbiased_zero_one(ctx.model, ctx.noisy, hedge)?.iter().sum();
    let actual: f64 = true_mistakes(ctx)?.iter().map(|&e| f64::from(e)).sum();
    Ok(ErrorDecomposition::new(anticipated - actual, ctx.noisy.len()))
}

/// The summary statistics of one trained model on one noisy dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(rename = "Method")]
    pub method: Method,
    #[serde(rename = "TrueError")]
    pub true_error: f64,
    #[serde(rename = "AnticipatedError")]
    pub anticipated_error: f64,
    #[serde(rename = "Regret")]
    pub regret: f64,
    #[serde(rename = "Overreliance")]
    pub overreliance: f64,
    #[serde(rename = "Underreliance")]
    pub underreliance: f64,
    #[serde(rename = "Susceptibility")]
    pub susceptibility: f64,
    #[serde(rename = "ExpectedRegret")]
    pub expected_regret: f64,
    #[serde(rename = "ErrorDecomposition")]
    pub error_decomposition: ErrorDecomposition,
    pub e_pred: Vec<u8>,
    pub e_true: Vec<u8>,
    pub regret_indicator: Vec<u8>,
}

impl MetricsReport {
    /// Computes every statistic. Expected regret uses the empirical
    /// noisy-label frequencies of `ctx.noisy`.
    pub fn compute<M: Classifier + ?Sized>(ctx: &EvalContext<'_, M>) -> Result<Self> {
        let cells = MistakeCells::compute(ctx)?;
        let regret_indicator = cells.regret_indicator();
        let over = mean(&cells.overreliance_indicator());
        let under = mean(&cells.underreliance_indicator());
        let decomposition = cells
            .anticipated
            .iter()
            .zip(&cells.actual)
            .map(|(&a, &b)| f64::from(a) - f64::from(b))
            .sum::<f64>();
        Ok(Self {
            method: ctx.method,
            true_error: mean(&cells.actual),
            anticipated_error: mean(&cells.anticipated),
            regret: mean(&regret_indicator),
            overreliance: over,
            underreliance: under,
            susceptibility: susceptibility(ctx.posterior, ctx.noisy)?,
            expected_regret: empirical_expected_regret(ctx.posterior, ctx.noisy)?,
            error_decomposition: ErrorDecomposition::new(decomposition, ctx.noisy.len()),
            e_pred: cells.anticipated,
            e_true: cells.actual,
            regret_indicator,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::LabelKind;
    use crate::draw::Provenance;
    use crate::noise::{noisy_label_marginal, posterior, NoiseSpec, Priors};

    /// Predicts label 1 for positive inputs.
    struct Sign;

    impl Classifier for Sign {
        fn predict_proba(&self, x: &[f64]) -> f64 {
            if x[0] > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        fn dim(&self) -> usize {
            1
        }
    }

    fn noisy(labels: Vec<u8>) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..labels.len()).map(|i| vec![i as f64 - 1.5]).collect();
        Dataset::from_rows(&rows, labels, LabelKind::Noisy).unwrap()
    }

    #[test]
    fn hedge_flags_high_posterior_strata() {
        let table = PosteriorTable::class_level([0.1, 0.791_208_791]).unwrap();
        let data = noisy(vec![0, 0, 1, 1]);
        let ignore = EvalContext::new(&Sign, &data, None, Method::Ignore, &table).unwrap();
        let hedge = EvalContext { method: Method::Hedge, ..ignore };
        assert_eq!(anticipated_mistake(&ignore, 3).unwrap(), 0);
        assert_eq!(anticipated_mistake(&hedge, 3).unwrap(), 1);
        assert_eq!(anticipated_mistake(&hedge, 0).unwrap(), 0);
        assert_eq!(anticipated_mistakes(&hedge).unwrap(), vec![0, 0, 1, 1]);
    }

    #[test]
    fn regret_needs_the_true_draw() {
        let table = PosteriorTable::class_level([0.0, 0.0]).unwrap();
        let data = noisy(vec![0, 1, 1, 1]);
        let ctx = EvalContext::new(&Sign, &data, None, Method::Ignore, &table).unwrap();
        assert!(matches!(regret(&ctx), Err(Error::Capability(_))));
        let zero = NoiseDraw::zeros(4, Provenance::TrueDraw);
        let ctx = EvalContext { true_draw: Some(&zero), ..ctx };
        assert_eq!(regret(&ctx).unwrap().rate, 0.0);
        assert_eq!(error_decomposition(&ctx).unwrap().total, 0.0);
    }

    #[test]
    fn cells_partition_regret() {
        let table = PosteriorTable::class_level([0.2, 0.3]).unwrap();
        let data = noisy(vec![1, 0, 1, 0]);
        let draw = NoiseDraw::new(vec![1, 1, 0, 0], Provenance::TrueDraw).unwrap();
        let ctx = EvalContext::new(&Sign, &data, Some(&draw), Method::Ignore, &table).unwrap();
        let report = MetricsReport::compute(&ctx).unwrap();
        assert_eq!(report.regret, report.overreliance + report.underreliance);
        assert_eq!(report.regret, 0.5);
        assert_eq!(report.susceptibility, 1.0);
    }

    #[test]
    fn expected_regret_examples() {
        let spec = NoiseSpec::class_level(0.0, 0.4).unwrap();
        let priors = Priors::class(0.2).unwrap();
        let table = posterior(&spec, &priors).unwrap();
        let marginal = noisy_label_marginal(&spec, &priors).unwrap();
        assert!((expected_regret(&table, &marginal).unwrap() - 0.08).abs() < 1e-12);

        let uniform = posterior(&NoiseSpec::uniform(0.1).unwrap(), &priors).unwrap();
        let m = noisy_label_marginal(&NoiseSpec::uniform(0.1).unwrap(), &priors).unwrap();
        assert!((expected_regret(&uniform, &m).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn method_parses_case_insensitively() {
        assert_eq!("Hedge".parse::<Method>().unwrap(), Method::Hedge);
        assert!("both".parse::<Method>().is_err());
    }
}
