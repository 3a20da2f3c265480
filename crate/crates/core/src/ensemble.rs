//! Ensembles of plausible models, and the ambiguity / disagreement scores
//! computed from them.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::draw::{NoiseDraw, Provenance};
use crate::error::{Error, Result};
use crate::learners::{Classifier, ErmTrainer, LinearModel, TrainConfig, Trainer};
use crate::noise::{xor_labels, PosteriorTable};
use crate::sampling::{generate_plausible_datasets, PlausibilityConfig, PlausibleDataset};
use crate::seed::derive_seed;

const MANIFEST: &str = "manifest.json";

/// One plausible draw, the labels it implies, and the model trained on them.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleMember<M = LinearModel> {
    pub draw: NoiseDraw,
    pub plausible_labels: Vec<u8>,
    pub model: M,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlausibleEnsemble<M = LinearModel> {
    members: Vec<EnsembleMember<M>>,
    epsilon: f64,
    seed: u64,
}

/// Samples `m` plausible datasets and fits a plain ERM model to each.
pub fn build_ensemble(
    noisy: &Dataset,
    posterior: &PosteriorTable,
    config: &PlausibilityConfig,
    m: usize,
    train: &TrainConfig,
) -> Result<PlausibleEnsemble> {
    build_ensemble_with(noisy, posterior, config, m, &ErmTrainer(*train))
}

/// As [`build_ensemble`] with any learning algorithm.
pub fn build_ensemble_with<T>(
    noisy: &Dataset,
    posterior: &PosteriorTable,
    config: &PlausibilityConfig,
    m: usize,
    trainer: &T,
) -> Result<PlausibleEnsemble<T::Model>>
where
    T: Trainer,
    T::Model: Send,
{
    let plausible = generate_plausible_datasets(noisy, posterior, config, m)?;
    let members = plausible
        .into_par_iter()
        .map(|PlausibleDataset { plausible_labels, draw }| {
            let data = noisy.relabel(plausible_labels.clone(), crate::dataset::LabelKind::Clean)?;
            let model = trainer.train(&data)?;
            Ok(EnsembleMember {
                draw,
                plausible_labels,
                model,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    log::debug!("trained {} plausible models", members.len());
    Ok(PlausibleEnsemble {
        members,
        epsilon: config.epsilon,
        seed: config.seed,
    })
}

fn mean_indicator(hits: usize, m: usize) -> f64 {
    hits as f64 / m as f64
}

impl<M: Classifier + Sync> PlausibleEnsemble<M> {
    pub fn from_members(members: Vec<EnsembleMember<M>>, epsilon: f64, seed: u64) -> Result<Self> {
        let Some(first) = members.first() else {
            return Err(Error::Input("an ensemble needs at least one member".into()));
        };
        let n = first.plausible_labels.len();
        for (k, member) in members.iter().enumerate() {
            if member.plausible_labels.len() != n || member.draw.len() != n {
                return Err(Error::Input(format!("member {k} covers a different number of instances")));
            }
        }
        Ok(Self {
            members,
            epsilon,
            seed,
        })
    }

    pub fn members(&self) -> &[EnsembleMember<M>] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of training instances the ensemble was built on.
    pub fn num_instances(&self) -> usize {
        self.members[0].plausible_labels.len()
    }

    fn check_training_set(&self, noisy: &Dataset) -> Result<()> {
        if noisy.len() != self.num_instances() {
            return Err(Error::Input(format!(
                "ensemble was built on {} instances, dataset has {}",
                self.num_instances(),
                noisy.len()
            )));
        }
        Ok(())
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        let expected = self.members[0].model.dim();
        if d != expected {
            return Err(Error::Input(format!(
                "feature vector has {d} entries, models expect {expected}"
            )));
        }
        Ok(())
    }

    /// `μ̂(x_i) = (1/m) Σ_k 1{f^k(x_i) ≠ ŷ^k_i}` on the training set.
    pub fn ambiguity(&self, noisy: &Dataset, i: usize) -> Result<f64> {
        self.check_training_set(noisy)?;
        if i >= noisy.len() {
            return Err(Error::Input(format!("instance {i} out of range")));
        }
        let x = noisy.row(i);
        let hits = self
            .members
            .iter()
            .filter(|mb| mb.model.predict(x) != mb.plausible_labels[i])
            .count();
        Ok(mean_indicator(hits, self.len()))
    }

    /// Ambiguity of every training instance.
    pub fn ambiguities(&self, noisy: &Dataset) -> Result<Vec<f64>> {
        self.check_training_set(noisy)?;
        let labels: Vec<&[u8]> = self.members.iter().map(|m| m.plausible_labels.as_slice()).collect();
        Ok(self.mismatch_rates(noisy, &labels))
    }

    fn mismatch_rates(&self, data: &Dataset, labels: &[&[u8]]) -> Vec<f64> {
        let m = self.len();
        (0..data.len())
            .into_par_iter()
            .map(|i| {
                let x = data.row(i);
                let hits = self
                    .members
                    .iter()
                    .zip(labels)
                    .filter(|(mb, y)| mb.model.predict(x) != y[i])
                    .count();
                mean_indicator(hits, m)
            })
            .collect()
    }

    /// Ambiguity on a noisy-labelled held-out set: member `k` is scored
    /// against `ỹ ⊕ u^k` for its own plausible test draw `u^k`.
    pub fn test_ambiguities(&self, noisy_test: &Dataset, test_draws: &[PlausibleDataset]) -> Result<Vec<f64>> {
        self.check_dim(noisy_test.dim())?;
        if test_draws.len() != self.len() {
            return Err(Error::Input(format!(
                "{} test draws for {} members",
                test_draws.len(),
                self.len()
            )));
        }
        if let Some(bad) = test_draws.iter().find(|d| d.plausible_labels.len() != noisy_test.len()) {
            return Err(Error::Input(format!(
                "test draw covers {} instances, test set has {}",
                bad.plausible_labels.len(),
                noisy_test.len()
            )));
        }
        let labels: Vec<&[u8]> = test_draws.iter().map(|d| d.plausible_labels.as_slice()).collect();
        Ok(self.mismatch_rates(noisy_test, &labels))
    }

    /// Samples one plausible test draw per member (seeded from the
    /// ensemble seed) and returns [`Self::test_ambiguities`].
    pub fn sample_test_ambiguities(&self, noisy_test: &Dataset, posterior: &PosteriorTable) -> Result<Vec<f64>> {
        let config = PlausibilityConfig {
            epsilon: self.epsilon,
            max_rejections: None,
            seed: derive_seed(self.seed, &[u64::MAX]),
        };
        let draws = generate_plausible_datasets(noisy_test, posterior, &config, self.len())?;
        self.test_ambiguities(noisy_test, &draws)
    }

    /// `(1/m) Σ_k 1{f^k(x) ≠ f(x)}`.
    pub fn disagreement<B: Classifier + ?Sized>(&self, base: &B, x: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        let reference = base.predict(x);
        let hits = self.members.iter().filter(|mb| mb.model.predict(x) != reference).count();
        Ok(mean_indicator(hits, self.len()))
    }

    pub fn disagreements<B: Classifier + Sync + ?Sized>(&self, base: &B, data: &Dataset) -> Result<Vec<f64>> {
        self.check_dim(data.dim())?;
        if base.dim() != data.dim() {
            return Err(Error::Input(format!(
                "base model expects {} features, dataset has {}",
                base.dim(),
                data.dim()
            )));
        }
        (0..data.len())
            .into_par_iter()
            .map(|i| self.disagreement(base, data.row(i)))
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    epsilon: f64,
    seed: u64,
    instances: usize,
    members: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    model: String,
    draw: String,
}

impl PlausibleEnsemble<LinearModel> {
    /// Writes `manifest.json`, `member_KKK.json` and `draw_KKK.bin` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut entries = Vec::with_capacity(self.len());
        for (k, member) in self.members.iter().enumerate() {
            let entry = ManifestEntry {
                model: format!("member_{k:03}.json"),
                draw: format!("draw_{k:03}.bin"),
            };
            member.model.write(dir.join(&entry.model))?;
            member.draw.write_bitset(dir.join(&entry.draw))?;
            entries.push(entry);
        }
        let manifest = Manifest {
            epsilon: self.epsilon,
            seed: self.seed,
            instances: self.num_instances(),
            members: entries,
        };
        let path = dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    /// Reads an ensemble saved by [`Self::save`]. Plausible labels are
    /// rebuilt as `ỹ ⊕ u` from the noisy training set.
    pub fn load(dir: impl AsRef<Path>, noisy: &Dataset) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        if manifest.instances != noisy.len() {
            return Err(Error::Input(format!(
                "ensemble was built on {} instances, dataset has {}",
                manifest.instances,
                noisy.len()
            )));
        }
        let members = manifest
            .members
            .iter()
            .map(|entry| {
                let model = LinearModel::read(dir.join(&entry.model))?;
                let draw = NoiseDraw::read(dir.join(&entry.draw), Provenance::Sampled)?;
                let plausible_labels = xor_labels(noisy.labels(), draw.bits())?;
                Ok(EnsembleMember {
                    draw,
                    plausible_labels,
                    model,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_members(members, manifest.epsilon, manifest.seed)
    }
}

/// Which confidence rule to apply; see [`ScoreSource`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    Ambiguity,
    Disagreement,
    PredictedProbability,
}

impl std::str::FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ambiguity" => Ok(Self::Ambiguity),
            "disagreement" => Ok(Self::Disagreement),
            "probability" | "predicted_probability" => Ok(Self::PredictedProbability),
            other => Err(Error::Config(format!("unknown score kind {other:?}"))),
        }
    }
}

/// Inputs for [`confidence_scores`].
pub enum ScoreSource<'a, M = LinearModel> {
    /// `1 - μ̂(x_i)`; the dataset must be the ensemble's noisy training set.
    Ambiguity(&'a PlausibleEnsemble<M>),
    /// `1 - Disagreement(x_i)` against `base`.
    Disagreement {
        ensemble: &'a PlausibleEnsemble<M>,
        base: &'a M,
    },
    /// `p̂(ỹ_i | x_i)` under `model`.
    PredictedProbability(&'a M),
}

impl<M> ScoreSource<'_, M> {
    pub fn kind(&self) -> ScoreKind {
        match self {
            ScoreSource::Ambiguity(_) => ScoreKind::Ambiguity,
            ScoreSource::Disagreement { .. } => ScoreKind::Disagreement,
            ScoreSource::PredictedProbability(_) => ScoreKind::PredictedProbability,
        }
    }
}

/// Per-instance confidence; low values are dropped or abstained on first.
pub fn confidence_scores<M: Classifier + Sync>(source: &ScoreSource<'_, M>, data: &Dataset) -> Result<Vec<f64>> {
    match source {
        ScoreSource::Ambiguity(ensemble) => Ok(ensemble
            .ambiguities(data)?
            .into_iter()
            .map(|a| 1.0 - a)
            .collect()),
        ScoreSource::Disagreement { ensemble, base } => Ok(ensemble
            .disagreements(*base, data)?
            .into_iter()
            .map(|d| 1.0 - d)
            .collect()),
        ScoreSource::PredictedProbability(model) => {
            if model.dim() != data.dim() {
                return Err(Error::Input(format!(
                    "model expects {} features, dataset has {}",
                    model.dim(),
                    data.dim()
                )));
            }
            Ok(data
                .rows()
                .zip(data.labels())
                .map(|(x, &y)| {
                    let p = model.predict_proba(x);
                    if y == 1 {
                        p
                    } else {
                        1.0 - p
                    }
                })
                .collect())
        }
    }
}
