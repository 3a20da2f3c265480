//! Instance-level analysis of label noise.
//!
//! Given a noisy binary-classification dataset and a noise model, this crate
//! infers posterior flip probabilities, samples plausible clean datasets,
//! trains an ensemble of plausible models, and scores every instance by
//! ambiguity or disagreement. It also measures regret, overreliance and
//! susceptibility of a trained model, and drives the data-cleaning and
//! selective-classification experiments built on those scores.

pub mod dataset;
pub mod draw;
pub mod ensemble;
pub mod error;
pub mod harness;
pub mod learners;
pub mod metrics;
pub mod noise;
pub mod sampling;
pub mod seed;

pub use dataset::{Dataset, LabelKind};
pub use draw::{NoiseDraw, Provenance};
pub use error::{Error, Result};
pub use learners::{
    fit_erm, fit_hedged, implicit_mle_draw, unbiased_loss, Classifier, ErmTrainer, FlipRates,
    HedgeSpec, LinearModel, TrainConfig, Trainer,
};
pub use noise::{
    inject_noise, noisy_label_marginal, posterior, xor, NoiseModel, NoiseSpec, NoisyMarginal,
    PosteriorTable, Priors,
};
pub use sampling::{
    generate_plausible_datasets, is_plausible, min_epsilon, sample_draw, PlausibilityConfig,
    PlausibleDataset,
};
