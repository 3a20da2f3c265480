//! Threshold sweeps over confidence scores: data cleaning, selective
//! classification and hit rate among predicted positives.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, LabelKind};
use crate::draw::NoiseDraw;
use crate::ensemble::PlausibleEnsemble;
use crate::error::{Error, Result};
use crate::learners::{fit_erm_report, Classifier, LinearModel, TrainConfig};
use crate::metrics::{EvalContext, MistakeCells};

/// Number of points in the default sweep.
pub const GRID_POINTS: usize = 101;

/// Fractions `0, 0.01, ..., 1` of instances to drop or abstain on.
pub fn default_grid() -> Vec<f64> {
    (0..GRID_POINTS).map(|k| k as f64 / (GRID_POINTS - 1) as f64).collect()
}

/// `0, step, 2·step, ...` up to and including `max`.
pub fn uniform_grid(max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && (0.0..=1.0).contains(&max)) {
        return Err(Error::Config(format!("invalid grid: max {max}, step {step}")));
    }
    let count = (max / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|k| k as f64 * step).collect())
}

/// One point of a frontier. `coverage` is the fraction of instances kept;
/// instances with confidence at or below `tau` are dropped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub tau: f64,
    pub coverage: f64,
    pub selective_error: f64,
    pub selective_regret: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hit_rate: Option<f64>,
    /// Nothing retained, or retraining saw a single class.
    #[serde(skip)]
    pub degenerate: bool,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config("frontier grid is empty".into()));
    }
    if let Some(bad) = grid.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(Error::Config(format!("grid fraction {bad} outside [0, 1]")));
    }
    Ok(())
}

fn check_scores(scores: &[f64], n: usize) -> Result<()> {
    if scores.len() != n {
        return Err(Error::Input(format!("{} scores for {n} instances", scores.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Input("confidence scores contain NaN".into()));
    }
    Ok(())
}

/// Instance indices from least to most confident; ties keep index order.
fn ascending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    order
}

/// How many of `n` instances a drop fraction removes.
fn drop_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64) + 1e-9).floor() as usize
}

/// Splits `order` after `k` dropped instances and returns the threshold
/// and the kept indices in ascending index order.
fn cut(order: &[usize], scores: &[f64], k: usize) -> (f64, Vec<usize>) {
    let tau = if k == 0 {
        f64::NEG_INFINITY
    } else {
        scores[order[k - 1]]
    };
    let mut kept = order[k..].to_vec();
    kept.sort_unstable();
    (tau, kept)
}

fn mean_at(bits: &[u8], idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return f64::NAN;
    }
    idx.iter().map(|&i| f64::from(bits[i])).sum::<f64>() / idx.len() as f64
}

/// A held-out set with clean labels, noisy labels and the draw linking them.
#[derive(Debug, Clone)]
pub struct TestSet {
    pub clean: Dataset,
    pub noisy: Dataset,
    pub draw: NoiseDraw,
}

impl TestSet {
    pub fn new(clean: Dataset, noisy: Dataset, draw: NoiseDraw) -> Result<Self> {
        let consistent = clean.len() == noisy.len()
            && draw.len() == clean.len()
            && clean
                .labels()
                .iter()
                .zip(noisy.labels())
                .zip(draw.bits())
                .all(|((y, n), u)| y ^ u == *n);
        if !consistent {
            return Err(Error::Input("test set labels do not satisfy noisy = clean xor draw".into()));
        }
        Ok(Self { clean, noisy, draw })
    }
}

/// Drops the least confident fraction of the noisy training set, refits
/// plain ERM and reports clean test error (and regret on the noisy test
/// labels) per grid point.
pub fn clean_data(
    noisy: &Dataset,
    scores: &[f64],
    grid: &[f64],
    test: &TestSet,
    train: &TrainConfig,
) -> Result<Vec<FrontierPoint>> {
    check_grid(grid)?;
    check_scores(scores, noisy.len())?;
    let order = ascending(scores);
    grid.par_iter()
        .map(|&fraction| {
            let k = drop_count(fraction, noisy.len());
            let (tau, kept) = cut(&order, scores, k);
            let coverage = 1.0 - fraction;
            if kept.is_empty() {
                return Ok(FrontierPoint {
                    tau,
                    coverage,
                    selective_error: f64::NAN,
                    selective_regret: f64::NAN,
                    hit_rate: None,
                    degenerate: true,
                });
            }
            let subset = noisy.subset(&kept)?.relabel(
                kept.iter().map(|&i| noisy.label(i)).collect(),
                LabelKind::Clean,
            )?;
            let (model, report) = fit_erm_report(&subset, train)?;
            if let Some(label) = report.single_class {
                log::warn!("dropping {fraction} leaves only label {label}");
            }
            let (error, regret) = test_error_and_regret(&model, test);
            Ok(FrontierPoint {
                tau,
                coverage,
                selective_error: error,
                selective_regret: regret,
                hit_rate: None,
                degenerate: report.single_class.is_some(),
            })
        })
        .collect()
}

/// Clean error and regret (noisy-label view, `ẽ = 1{f ≠ ỹ}`) on a test set.
pub fn test_error_and_regret<M: Classifier + ?Sized>(model: &M, test: &TestSet) -> (f64, f64) {
    let n = test.clean.len() as f64;
    let (mut errors, mut regrets) = (0usize, 0usize);
    for i in 0..test.clean.len() {
        let f = model.predict(test.clean.row(i));
        let e_true = f != test.clean.label(i);
        let e_pred = f != test.noisy.label(i);
        errors += usize::from(e_true);
        regrets += usize::from(e_true != e_pred);
    }
    (errors as f64 / n, regrets as f64 / n)
}

/// Abstains on the least confident fraction of `ctx.noisy` per grid point
/// and reports error and regret on the instances kept.
pub fn selective_frontier<M: Classifier + ?Sized>(
    ctx: &EvalContext<'_, M>,
    scores: &[f64],
    grid: &[f64],
) -> Result<Vec<FrontierPoint>> {
    check_grid(grid)?;
    check_scores(scores, ctx.noisy.len())?;
    let cells = MistakeCells::compute(ctx)?;
    let regret = cells.regret_indicator();
    let order = ascending(scores);
    Ok(grid
        .iter()
        .map(|&fraction| {
            let (tau, kept) = cut(&order, scores, drop_count(fraction, order.len()));
            FrontierPoint {
                tau,
                coverage: 1.0 - fraction,
                selective_error: mean_at(&cells.actual, &kept),
                selective_regret: mean_at(&regret, &kept),
                hit_rate: None,
                degenerate: kept.is_empty(),
            }
        })
        .collect())
}

/// Among instances the model predicts positive, abstains on the least
/// confident fraction and reports the hit rate (share truly positive) of
/// the rest. Empty when the model predicts no positives.
pub fn hit_rate_frontier<M: Classifier + ?Sized>(
    ctx: &EvalContext<'_, M>,
    scores: &[f64],
    grid: &[f64],
) -> Result<Vec<FrontierPoint>> {
    check_grid(grid)?;
    check_scores(scores, ctx.noisy.len())?;
    let cells = MistakeCells::compute(ctx)?;
    let regret = cells.regret_indicator();
    let positives: Vec<usize> = (0..ctx.noisy.len())
        .filter(|&i| ctx.model.predict(ctx.noisy.row(i)) == 1)
        .collect();
    if positives.is_empty() {
        log::warn!("model predicts no positives; hit-rate frontier is empty");
        return Ok(Vec::new());
    }
    let sub_scores: Vec<f64> = positives.iter().map(|&i| scores[i]).collect();
    let order = ascending(&sub_scores);
    Ok(grid
        .iter()
        .map(|&fraction| {
            let (tau, kept_local) = cut(&order, &sub_scores, drop_count(fraction, positives.len()));
            let kept: Vec<usize> = kept_local.iter().map(|&j| positives[j]).collect();
            let error = mean_at(&cells.actual, &kept);
            FrontierPoint {
                tau,
                coverage: 1.0 - fraction,
                selective_error: error,
                selective_regret: mean_at(&regret, &kept),
                hit_rate: Some(1.0 - error),
                degenerate: kept.is_empty(),
            }
        })
        .collect())
}

/// [`hit_rate_frontier`] ranked by `1 - Disagreement` against `ctx.model`.
pub fn disagreement_hit_rate_frontier(
    ctx: &EvalContext<'_, LinearModel>,
    ensemble: &PlausibleEnsemble,
    grid: &[f64],
) -> Result<Vec<FrontierPoint>> {
    let scores: Vec<f64> = ensemble
        .disagreements(ctx.model, ctx.noisy)?
        .into_iter()
        .map(|d| 1.0 - d)
        .collect();
    hit_rate_frontier(ctx, &scores, grid)
}

/// Writes `tau,coverage,selective_error,selective_regret[,hit_rate]`.
pub fn write_frontier_csv(points: &[FrontierPoint], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_frontier(points, file)
}

pub fn write_frontier<W: std::io::Write>(points: &[FrontierPoint], writer: W) -> Result<()> {
    let with_hits = points.iter().any(|p| p.hit_rate.is_some());
    let mut out = csv::Writer::from_writer(writer);
    let mut header = vec!["tau", "coverage", "selective_error", "selective_regret"];
    if with_hits {
        header.push("hit_rate");
    }
    out.write_record(&header)?;
    for p in points {
        let mut row = vec![
            p.tau.to_string(),
            p.coverage.to_string(),
            p.selective_error.to_string(),
            p.selective_regret.to_string(),
        ];
        if with_hits {
            row.push(p.hit_rate.map_or_else(|| f64::NAN.to_string(), |h| h.to_string()));
        }
        out.write_record(&row)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}
