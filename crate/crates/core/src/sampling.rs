//! Posterior noise draws, the ε-plausible set, and plausible clean datasets.
//!
//! A draw is plausible when, in every posterior stratum `s`, its empirical
//! flip rate `q̂_s` satisfies `|q_s - q̂_s| < ε q_s`. The comparison is done in
//! count space (`|k_s - q_s n_s| < ε q_s n_s`) with a small guard so that a
//! count sitting exactly on the boundary is rejected despite rounding. A
//! draw matching `q_s n_s` exactly is always accepted, which covers `q_s = 0`
//! (no flips allowed) and `ε = 0`.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, LabelKind};
use crate::draw::{NoiseDraw, Provenance};
use crate::error::{Error, Result};
use crate::noise::{xor_labels, PosteriorTable, StratumCell};
use crate::seed::{self, derive_seed};

pub const DEFAULT_EPSILON: f64 = 0.1;
pub const DEFAULT_REJECTIONS_PER_DRAW: u64 = 10_000;

const BOUNDARY_GUARD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlausibilityConfig {
    pub epsilon: f64,
    /// Total rejections tolerated across all `m` draws. `None` means `10_000 * m`.
    pub max_rejections: Option<u64>,
    pub seed: u64,
}

impl Default for PlausibilityConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            max_rejections: None,
            seed: 0,
        }
    }
}

impl PlausibilityConfig {
    pub fn new(epsilon: f64, seed: u64) -> Result<Self> {
        let cfg = Self {
            epsilon,
            max_rejections: None,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!(
                "epsilon {} must lie in [0, 1]",
                self.epsilon
            )));
        }
        if self.max_rejections == Some(0) {
            return Err(Error::Config("max_rejections must be at least 1".into()));
        }
        Ok(())
    }

    pub fn rejection_budget(&self, m: usize) -> u64 {
        self.max_rejections
            .unwrap_or(DEFAULT_REJECTIONS_PER_DRAW * m as u64)
    }
}

/// A plausible realization of the clean labels: `ŷ = ỹ ⊕ u` for a plausible `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlausibleDataset {
    pub plausible_labels: Vec<u8>,
    pub draw: NoiseDraw,
}

impl PlausibleDataset {
    /// The noisy dataset's features paired with the plausible labels.
    pub fn to_dataset(&self, noisy: &Dataset) -> Result<Dataset> {
        noisy.relabel(self.plausible_labels.clone(), LabelKind::Clean)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplingStats {
    pub accepted: usize,
    pub attempts: u64,
}

impl SamplingStats {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.attempts.max(1) as f64
    }
}

fn bernoulli_bits(q: &[f64], seed: u64) -> Vec<u8> {
    let mut rng = seed::rng(seed);
    q.iter().map(|&p| u8::from(rng.random::<f64>() < p)).collect()
}

/// Samples `u_i ~ Bernoulli(q_{u|ỹ_i,x_i})` independently.
pub fn sample_draw(posterior: &PosteriorTable, noisy: &Dataset, seed: u64) -> Result<NoiseDraw> {
    let q = posterior.resolve(noisy)?;
    NoiseDraw::new(bernoulli_bits(&q, seed), Provenance::Sampled)
}

fn cell_accepts(cell: &StratumCell, flips: usize, epsilon: f64) -> bool {
    let n = cell.members.len() as f64;
    let expected = cell.q * n;
    let deviation = (flips as f64 - expected).abs();
    if deviation <= BOUNDARY_GUARD {
        return true;
    }
    let bound = epsilon * expected;
    deviation < bound - BOUNDARY_GUARD * bound.max(1.0)
}

fn accepts(cells: &[StratumCell], bits: &[u8], epsilon: f64) -> bool {
    cells.iter().all(|cell| {
        let flips = cell.members.iter().filter(|&&i| bits[i] == 1).count();
        cell_accepts(cell, flips, epsilon)
    })
}

/// Whether `draw` lies in the ε-plausible set of `posterior` on `noisy`.
pub fn is_plausible(
    draw: &NoiseDraw,
    posterior: &PosteriorTable,
    noisy: &Dataset,
    epsilon: f64,
) -> Result<bool> {
    if draw.len() != noisy.len() {
        return Err(Error::Input(format!(
            "draw has {} entries for {} instances",
            draw.len(),
            noisy.len()
        )));
    }
    let cells = posterior.cells(noisy)?;
    Ok(accepts(&cells, draw.bits(), epsilon))
}

/// Smallest ε for which a reference draw over `n_p` instances with flip
/// rate `p` lands in the plausible set of posterior rate `q` with
/// probability at least `1 - delta` (Hoeffding):
///
/// `ε = (sqrt(ln(2/δ) / (2 n_p)) + |p - q|) / q`
pub fn min_epsilon(n_p: u64, p: f64, q: f64, delta: f64) -> Result<f64> {
    if n_p == 0 {
        return Err(Error::Domain("n_p must be positive".into()));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!("posterior rate {q} must lie in (0, 1)")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("delta {delta} must lie in (0, 1)")));
    }
    Ok(((2.0 / delta).ln() / (2.0 * n_p as f64)).sqrt() / q + (p - q).abs() / q)
}

/// Draws plausible datasets by rejection sampling until `m` are accepted.
pub fn generate_plausible_datasets(
    noisy: &Dataset,
    posterior: &PosteriorTable,
    config: &PlausibilityConfig,
    m: usize,
) -> Result<Vec<PlausibleDataset>> {
    generate_plausible_datasets_with_stats(noisy, posterior, config, m).map(|(d, _)| d)
}

/// As [`generate_plausible_datasets`], also reporting how many raw draws
/// were needed.
///
/// Draw `k` is searched with seeds `derive_seed(seed, [k, attempt])`, so the
/// result does not depend on thread scheduling. Each draw index may use at
/// most `ceil(budget / m)` rejections, and the total may not exceed the budget.
pub fn generate_plausible_datasets_with_stats(
    noisy: &Dataset,
    posterior: &PosteriorTable,
    config: &PlausibilityConfig,
    m: usize,
) -> Result<(Vec<PlausibleDataset>, SamplingStats)> {
    config.validate()?;
    if m == 0 {
        return Err(Error::Config("m must be at least 1".into()));
    }
    let q = posterior.resolve(noisy)?;
    let cells = posterior.cells(noisy)?;
    let budget = config.rejection_budget(m);
    let per_draw = budget.div_ceil(m as u64);

    let outcomes: Vec<(Option<Vec<u8>>, u64)> = (0..m as u64)
        .into_par_iter()
        .map(|k| {
            for attempt in 0..=per_draw {
                let bits = bernoulli_bits(&q, derive_seed(config.seed, &[k, attempt]));
                if accepts(&cells, &bits, config.epsilon) {
                    return (Some(bits), attempt + 1);
                }
            }
            (None, per_draw + 1)
        })
        .collect();

    let attempts: u64 = outcomes.iter().map(|(_, a)| a).sum();
    let accepted = outcomes.iter().filter(|(b, _)| b.is_some()).count();
    let stats = SamplingStats { accepted, attempts };
    if accepted < m || attempts - accepted as u64 > budget {
        return Err(Error::RejectionBudget {
            accepted,
            attempts,
            rate: stats.acceptance_rate(),
        });
    }

    let datasets = outcomes
        .into_iter()
        .map(|(bits, _)| {
            let bits = bits.expect("checked above");
            let plausible_labels = xor_labels(noisy.labels(), &bits)?;
            Ok(PlausibleDataset {
                plausible_labels,
                draw: NoiseDraw::new(bits, Provenance::Sampled)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((datasets, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::xor;

    fn noisy(labels: Vec<u8>) -> Dataset {
        let n = labels.len();
        Dataset::new(vec![0.0; n], 1, labels, None, LabelKind::Noisy).unwrap()
    }

    fn draw_with_flips(n: usize, k: usize) -> NoiseDraw {
        NoiseDraw::new((0..n).map(|i| u8::from(i < k)).collect(), Provenance::Sampled).unwrap()
    }

    #[test]
    fn degenerate_bernoulli_draws() {
        let data = noisy(vec![0, 1, 0, 1]);
        let zero = PosteriorTable::class_level([0.0, 0.0]).unwrap();
        assert_eq!(sample_draw(&zero, &data, 1).unwrap().flips(), 0);
        let one = PosteriorTable::class_level([1.0, 1.0]).unwrap();
        assert_eq!(sample_draw(&one, &data, 1).unwrap().flips(), 4);
    }

    #[test]
    fn sample_draw_is_seeded() {
        let data = noisy(vec![0; 500]);
        let t = PosteriorTable::Uniform { q: 0.3 };
        assert_eq!(sample_draw(&t, &data, 9).unwrap(), sample_draw(&t, &data, 9).unwrap());
        assert_ne!(sample_draw(&t, &data, 9).unwrap(), sample_draw(&t, &data, 10).unwrap());
    }

    #[test]
    fn plausibility_boundaries_uniform() {
        let data = noisy((0..100).map(|i| (i % 3 == 0) as u8).collect());
        let t = PosteriorTable::Uniform { q: 0.1 };
        assert!(is_plausible(&draw_with_flips(100, 11), &t, &data, 0.2).unwrap());
        assert!(is_plausible(&draw_with_flips(100, 9), &t, &data, 0.2).unwrap());
        // 12 and 8 sit exactly on the boundary; 13 is outside.
        assert!(!is_plausible(&draw_with_flips(100, 12), &t, &data, 0.2).unwrap());
        assert!(!is_plausible(&draw_with_flips(100, 8), &t, &data, 0.2).unwrap());
        assert!(!is_plausible(&draw_with_flips(100, 13), &t, &data, 0.2).unwrap());
    }

    #[test]
    fn exclusive_bounds_at_ten_thousand() {
        let data = noisy(vec![1; 10_000]);
        let t = PosteriorTable::Uniform { q: 0.1 };
        for (k, ok) in [(900, false), (901, true), (1000, true), (1099, true), (1100, false)] {
            assert_eq!(is_plausible(&draw_with_flips(10_000, k), &t, &data, 0.1).unwrap(), ok, "k={k}");
        }
    }

    #[test]
    fn zero_epsilon_accepts_only_exact_rate() {
        let data = noisy(vec![0; 100]);
        let t = PosteriorTable::Uniform { q: 0.1 };
        assert!(is_plausible(&draw_with_flips(100, 10), &t, &data, 0.0).unwrap());
        assert!(!is_plausible(&draw_with_flips(100, 11), &t, &data, 0.0).unwrap());
    }

    #[test]
    fn zero_rate_stratum_requires_no_flips() {
        let data = noisy(vec![1, 1, 0, 0]);
        let t = PosteriorTable::class_level([0.5, 0.0]).unwrap();
        let ok = NoiseDraw::new(vec![0, 0, 1, 0], Provenance::Sampled).unwrap();
        let bad = NoiseDraw::new(vec![1, 0, 1, 0], Provenance::Sampled).unwrap();
        assert!(is_plausible(&ok, &t, &data, 0.5).unwrap());
        assert!(!is_plausible(&bad, &t, &data, 1.0).unwrap());
    }

    #[test]
    fn min_epsilon_closed_form() {
        let e = min_epsilon(10_000, 0.2, 0.2, 0.1).unwrap();
        assert!((e - 0.0612).abs() < 5e-4, "{e}");
        let e = min_epsilon(20_000, 0.1, 0.1, 0.05).unwrap();
        assert!((e - 0.09603).abs() < 1e-5, "{e}");
        assert!(matches!(min_epsilon(100, 0.1, 0.0, 0.1), Err(Error::Domain(_))));
        let mut prev = f64::INFINITY;
        for n in [10u64, 100, 1_000, 10_000, 100_000, 1_000_000] {
            let e = min_epsilon(n, 0.2, 0.2, 0.1).unwrap();
            assert!(e < prev);
            prev = e;
        }
        assert!(prev < 0.01);
    }

    #[test]
    fn zero_posterior_yields_noisy_copies() {
        let data = noisy(vec![0, 1, 1, 0, 1]);
        let t = PosteriorTable::class_level([0.0, 0.0]).unwrap();
        let sets = generate_plausible_datasets(&data, &t, &PlausibilityConfig::default(), 3).unwrap();
        assert_eq!(sets.len(), 3);
        for s in sets {
            assert_eq!(s.plausible_labels, data.labels());
            assert_eq!(s.draw.flips(), 0);
        }
    }

    #[test]
    fn generated_draws_are_plausible_and_consistent() {
        let data = noisy((0..2_000).map(|i| (i % 2) as u8).collect());
        let t = PosteriorTable::class_level([0.2, 0.05]).unwrap();
        let cfg = PlausibilityConfig::new(0.2, 4).unwrap();
        let sets = generate_plausible_datasets(&data, &t, &cfg, 8).unwrap();
        for s in &sets {
            assert!(is_plausible(&s.draw, &t, &data, cfg.epsilon).unwrap());
            for i in 0..data.len() {
                assert_eq!(xor(s.plausible_labels[i], s.draw.bits()[i]).unwrap(), data.label(i));
            }
        }
        assert_eq!(sets, generate_plausible_datasets(&data, &t, &cfg, 8).unwrap());
    }

    #[test]
    fn exhausted_budget_reports_rate() {
        // ε = 0 with q n non-integer can never be met.
        let data = noisy(vec![0; 101]);
        let t = PosteriorTable::Uniform { q: 0.1 };
        let cfg = PlausibilityConfig {
            epsilon: 0.0,
            max_rejections: Some(20),
            seed: 0,
        };
        let err = generate_plausible_datasets(&data, &t, &cfg, 2).unwrap_err();
        assert!(matches!(err, Error::RejectionBudget { accepted: 0, .. }), "{err}");
        assert!(err.to_string().contains("min_epsilon"));
    }
}
