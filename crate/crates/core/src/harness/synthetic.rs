//! Synthetic binary tasks with a known Bayes-optimal error.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::dataset::{Dataset, LabelKind};
use crate::error::{Error, Result};
use crate::learners::sigmoid;
use crate::seed;

/// Generator recipe. Both families can attach uniformly drawn group ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticSpec {
    /// Two Gaussian classes sharing a covariance (identity when omitted).
    Gaussian {
        n: usize,
        /// `Pr(Y = 1)`.
        balance: f64,
        mean0: Vec<f64>,
        mean1: Vec<f64>,
        #[serde(default)]
        covariance: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        groups: Option<usize>,
    },
    /// Standard normal features with `Pr(Y = 1 | x) = sigmoid(w·x + b)`.
    Logistic {
        n: usize,
        weights: Vec<f64>,
        bias: f64,
        #[serde(default)]
        groups: Option<usize>,
    },
}

impl SyntheticSpec {
    /// Balanced classes at `±separation/2 · e_1` in `d` dimensions, identity covariance.
    pub fn two_gaussians(n: usize, d: usize, separation: f64) -> Self {
        let mut mean1 = vec![0.0; d];
        mean1[0] = separation / 2.0;
        let mean0 = mean1.iter().map(|v| -v).collect();
        SyntheticSpec::Gaussian {
            n,
            balance: 0.5,
            mean0,
            mean1,
            covariance: None,
            groups: None,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            SyntheticSpec::Gaussian { n, .. } | SyntheticSpec::Logistic { n, .. } => *n,
        }
    }

    pub fn with_n(mut self, new_n: usize) -> Self {
        match &mut self {
            SyntheticSpec::Gaussian { n, .. } | SyntheticSpec::Logistic { n, .. } => *n = new_n,
        }
        self
    }
}

/// A sampled dataset plus the ground truth needed by oracles.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub bayes_error: f64,
    /// `Pr(Y = 1 | x_i)` under the generating distribution.
    pub class_posterior: Vec<f64>,
}

/// Parsed Gaussian model: Cholesky factor and discriminant `x ↦ w·x + c`.
struct GaussianModel {
    chol: DMatrix<f64>,
    w: DVector<f64>,
    c: f64,
    mahalanobis: f64,
}

fn gaussian_model(balance: f64, mean0: &[f64], mean1: &[f64], cov: Option<&Vec<Vec<f64>>>) -> Result<GaussianModel> {
    let d = mean0.len();
    if d == 0 || mean1.len() != d {
        return Err(Error::Input("class means must be non-empty and of equal length".into()));
    }
    if !(0.0 < balance && balance < 1.0) {
        return Err(Error::Input(format!("balance {balance} must lie in (0, 1)")));
    }
    let sigma = match cov {
        None => DMatrix::identity(d, d),
        Some(rows) => {
            if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                return Err(Error::Input(format!("covariance must be {d} x {d}")));
            }
            let m = DMatrix::from_fn(d, d, |i, j| rows[i][j]);
            if (&m - m.transpose()).amax() > 1e-12 {
                return Err(Error::Input("covariance must be symmetric".into()));
            }
            m
        }
    };
    let chol = sigma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Input("covariance is not positive definite".into()))?;
    let mu0 = DVector::from_column_slice(mean0);
    let mu1 = DVector::from_column_slice(mean1);
    let diff = &mu1 - &mu0;
    let w = chol.solve(&diff);
    let mahalanobis = diff.dot(&w).max(0.0).sqrt();
    let c = -0.5 * (mu1.dot(&chol.solve(&mu1)) - mu0.dot(&chol.solve(&mu0)))
        + (balance / (1.0 - balance)).ln();
    Ok(GaussianModel {
        chol: chol.l(),
        w,
        c,
        mahalanobis,
    })
}

/// Bayes error of two Gaussians with shared covariance, Mahalanobis distance
/// `delta` between the means, and `Pr(Y = 1) = balance`.
pub fn gaussian_bayes_error(delta: f64, balance: f64) -> f64 {
    let (p1, p0) = (balance, 1.0 - balance);
    if delta <= 0.0 {
        return p0.min(p1);
    }
    let std = Normal::standard();
    let t = (p0 / p1).ln();
    p1 * std.cdf(t / delta - delta / 2.0) + p0 * std.cdf(-t / delta - delta / 2.0)
}

/// `E[min(σ(S), 1 - σ(S))]` for `S ~ N(bias, ||w||²)`, by Simpson's rule.
pub fn logistic_bayes_error(weights: &[f64], bias: f64) -> f64 {
    let sd = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
    let risk = |s: f64| {
        let p = sigmoid(s);
        p.min(1.0 - p)
    };
    if sd == 0.0 {
        return risk(bias);
    }
    let normal = Normal::new(bias, sd).expect("positive sd");
    let (lo, hi, steps) = (bias - 12.0 * sd, bias + 12.0 * sd, 4_000);
    let h = (hi - lo) / steps as f64;
    let f = |s: f64| risk(s) * normal.pdf(s);
    let mut acc = f(lo) + f(hi);
    for k in 1..steps {
        let s = lo + k as f64 * h;
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(s);
    }
    acc * h / 3.0
}

pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticData> {
    let mut rng = seed::rng(seed);
    match spec {
        SyntheticSpec::Gaussian {
            n,
            balance,
            mean0,
            mean1,
            covariance,
            groups,
        } => {
            if *n == 0 {
                return Err(Error::Input("n must be positive".into()));
            }
            let model = gaussian_model(*balance, mean0, mean1, covariance.as_ref())?;
            let d = mean0.len();
            let mut features = Vec::with_capacity(n * d);
            let mut labels = Vec::with_capacity(*n);
            let mut class_posterior = Vec::with_capacity(*n);
            for _ in 0..*n {
                let y = u8::from(rng.random::<f64>() < *balance);
                let z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
                let mean = if y == 1 { mean1 } else { mean0 };
                let x = DVector::from_column_slice(mean) + &model.chol * z;
                class_posterior.push(sigmoid(model.w.dot(&x) + model.c));
                features.extend(x.iter());
                labels.push(y);
            }
            let group_ids = groups.map(|k| draw_groups(&mut rng, *n, k)).transpose()?;
            Ok(SyntheticData {
                dataset: Dataset::new(features, d, labels, group_ids, LabelKind::Clean)?,
                bayes_error: gaussian_bayes_error(model.mahalanobis, *balance),
                class_posterior,
            })
        }
        SyntheticSpec::Logistic {
            n,
            weights,
            bias,
            groups,
        } => {
            if *n == 0 || weights.is_empty() {
                return Err(Error::Input("n and the weight vector must be non-empty".into()));
            }
            let d = weights.len();
            let mut features = Vec::with_capacity(n * d);
            let mut labels = Vec::with_capacity(*n);
            let mut class_posterior = Vec::with_capacity(*n);
            for _ in 0..*n {
                let x: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                let p = sigmoid(x.iter().zip(weights).map(|(a, b)| a * b).sum::<f64>() + bias);
                labels.push(u8::from(rng.random::<f64>() < p));
                class_posterior.push(p);
                features.extend(x);
            }
            let group_ids = groups.map(|k| draw_groups(&mut rng, *n, k)).transpose()?;
            Ok(SyntheticData {
                dataset: Dataset::new(features, d, labels, group_ids, LabelKind::Clean)?,
                bayes_error: logistic_bayes_error(weights, *bias),
                class_posterior,
            })
        }
    }
}

fn draw_groups(rng: &mut seed::Rng, n: usize, k: usize) -> Result<Vec<i64>> {
    if k == 0 {
        return Err(Error::Input("group count must be positive".into()));
    }
    Ok((0..n).map(|_| rng.random_range(0..k as i64)).collect())
}
