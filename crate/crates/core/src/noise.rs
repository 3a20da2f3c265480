//! Noise models, clean-label priors, and posterior flip probabilities.
//!
//! A noise model gives the forward flip probability `p_{u|y,x}`: the chance
//! that the observed label differs from the clean one, given the clean label
//! (and optionally a group id or the instance itself). Noisy labels are
//! generated as `ỹ = y ⊕ u` with `u ~ Bernoulli(p_{u|y,x})`.
//!
//! Given priors `π_y = Pr(Y = y)` the posterior flip probability for an
//! observed label is
//!
//! ```text
//! q_{u|ỹ} = π_{1-ỹ} p_{u|1-ỹ} / (π_{1-ỹ} p_{u|1-ỹ} + π_ỹ (1 - p_{u|ỹ}))
//! ```
//!
//! and the denominator is `Pr(Ỹ = ỹ)`. Strata where that probability is zero
//! have no posterior; looking one up is an error.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, LabelKind};
use crate::draw::{NoiseDraw, Provenance};
use crate::error::{Error, Result};
use crate::seed;

/// `a ⊕ b = a + b - 2ab` on binary values.
pub fn xor(a: u8, b: u8) -> Result<u8> {
    if a > 1 || b > 1 {
        return Err(Error::Domain(format!("xor expects binary inputs, got ({a}, {b})")));
    }
    Ok(a + b - 2 * a * b)
}

/// Elementwise xor of two binary vectors of equal length.
pub fn xor_labels(a: &[u8], b: &[u8]) -> Result<Vec<u8>> {
    if a.len() != b.len() {
        return Err(Error::Input(format!(
            "xor of vectors with lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    a.iter().zip(b).map(|(&x, &y)| xor(x, y)).collect()
}

/// A named cell of a noise model or posterior table, used in diagnostics.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stratum {
    All,
    Label(u8),
    GroupLabel { group: i64, label: u8 },
    Instance { index: usize, label: u8 },
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stratum::All => write!(f, "(all)"),
            Stratum::Label(y) => write!(f, "(label={y})"),
            Stratum::GroupLabel { group, label } => write!(f, "(label={label}, group={group})"),
            Stratum::Instance { index, label } => write!(f, "(instance={index}, label={label})"),
        }
    }
}

/// The four noise-model families. Rates are indexed by the clean label.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec {
    Uniform { p: f64 },
    ClassLevel { p: [f64; 2] },
    GroupLevel { p: BTreeMap<i64, [f64; 2]> },
    InstanceLevel { p: Vec<[f64; 2]> },
}

fn check_rate(p: f64, what: impl FnOnce() -> String) -> Result<()> {
    if !(0.0..0.5).contains(&p) {
        return Err(Error::Config(format!(
            "flip probability {p} for {} must lie in [0, 0.5)",
            what()
        )));
    }
    Ok(())
}

/// Shorthand used on the command line: `uniform:P` or `class:P0,P1`
/// (rates indexed by the clean label).
impl std::str::FromStr for NoiseSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse noise {s:?}; expected uniform:P or class:P0,P1"));
        let (family, rest) = s.split_once(':').ok_or_else(bad)?;
        let rates = rest
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        match (family.trim(), rates.as_slice()) {
            ("uniform", [p]) => NoiseSpec::uniform(*p),
            ("class", [p0, p1]) => NoiseSpec::class_level(*p0, *p1),
            _ => Err(bad()),
        }
    }
}

impl NoiseSpec {
    pub fn uniform(p: f64) -> Result<Self> {
        let s = NoiseSpec::Uniform { p };
        s.validate()?;
        Ok(s)
    }

    /// Class-level noise with `p_{u|y=0} = p0` and `p_{u|y=1} = p1`.
    pub fn class_level(p0: f64, p1: f64) -> Result<Self> {
        let s = NoiseSpec::ClassLevel { p: [p0, p1] };
        s.validate()?;
        Ok(s)
    }

    pub fn group_level(p: BTreeMap<i64, [f64; 2]>) -> Result<Self> {
        let s = NoiseSpec::GroupLevel { p };
        s.validate()?;
        Ok(s)
    }

    pub fn instance_level(p: Vec<[f64; 2]>) -> Result<Self> {
        let s = NoiseSpec::InstanceLevel { p };
        s.validate()?;
        Ok(s)
    }

    pub fn family(&self) -> &'static str {
        match self {
            NoiseSpec::Uniform { .. } => "uniform",
            NoiseSpec::ClassLevel { .. } => "class_level",
            NoiseSpec::GroupLevel { .. } => "group_level",
            NoiseSpec::InstanceLevel { .. } => "instance_level",
        }
    }

    /// Checks that every flip probability is in `[0, 0.5)`.
    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseSpec::Uniform { p } => check_rate(*p, || "uniform noise".into()),
            NoiseSpec::ClassLevel { p } => {
                for y in 0..2u8 {
                    check_rate(p[y as usize], || Stratum::Label(y).to_string())?;
                }
                Ok(())
            }
            NoiseSpec::GroupLevel { p } => {
                for (&group, rates) in p {
                    for label in 0..2u8 {
                        check_rate(rates[label as usize], || {
                            Stratum::GroupLabel { group, label }.to_string()
                        })?;
                    }
                }
                Ok(())
            }
            NoiseSpec::InstanceLevel { p } => {
                for (index, rates) in p.iter().enumerate() {
                    for label in 0..2u8 {
                        check_rate(rates[label as usize], || {
                            Stratum::Instance { index, label }.to_string()
                        })?;
                    }
                }
                Ok(())
            }
        }
    }

    /// `p_{u|y,x}` for instance `i` of a dataset, with `y = label`.
    pub fn flip_rate(&self, data: &Dataset, i: usize, label: u8) -> Result<f64> {
        match self {
            NoiseSpec::Uniform { p } => Ok(*p),
            NoiseSpec::ClassLevel { p } => Ok(p[label as usize]),
            NoiseSpec::GroupLevel { p } => {
                let group = data.group(i).ok_or_else(|| {
                    Error::Config("group-level noise requires a `group` column".into())
                })?;
                p.get(&group).map(|r| r[label as usize]).ok_or_else(|| {
                    Error::Config(format!(
                        "no flip probability for stratum {}",
                        Stratum::GroupLabel { group, label }
                    ))
                })
            }
            NoiseSpec::InstanceLevel { p } => {
                if p.len() != data.len() {
                    return Err(Error::Config(format!(
                        "instance-level noise has {} entries for {} instances",
                        p.len(),
                        data.len()
                    )));
                }
                Ok(p[i][label as usize])
            }
        }
    }

    /// Flip rates per clean label, when the family has a single such pair.
    pub fn class_rates(&self) -> Option<[f64; 2]> {
        match self {
            NoiseSpec::Uniform { p } => Some([*p, *p]),
            NoiseSpec::ClassLevel { p } => Some(*p),
            _ => None,
        }
    }
}

/// Clean-label priors matched to a noise family. Stored as `[π_0, π_1]`.
#[derive(Debug, Clone, PartialEq)]
pub enum Priors {
    /// One prior for the whole population (uniform and class-level noise,
    /// and the scalar default for instance-level noise).
    Class { pi: [f64; 2] },
    /// `π_{y,g} = Pr(Y = y | G = g)`.
    Group { pi: BTreeMap<i64, [f64; 2]> },
    /// `π_i = Pr(Y = 1 | x_i)` per instance.
    Instance { pi1: Vec<f64> },
}

fn check_pair(pi: [f64; 2], what: impl FnOnce() -> String) -> Result<()> {
    if pi.iter().any(|v| !(0.0..=1.0).contains(v)) || (pi[0] + pi[1] - 1.0).abs() > 1e-12 {
        return Err(Error::Config(format!(
            "priors {pi:?} for {} must lie in [0,1] and sum to 1",
            what()
        )));
    }
    Ok(())
}

impl Priors {
    /// Population prior from `Pr(Y = 1)`.
    pub fn class(pi1: f64) -> Result<Self> {
        let p = Priors::Class {
            pi: [1.0 - pi1, pi1],
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Priors::Class { pi } => check_pair(*pi, || "population".into()),
            Priors::Group { pi } => {
                for (g, pair) in pi {
                    check_pair(*pair, || format!("group {g}"))?;
                }
                Ok(())
            }
            Priors::Instance { pi1 } => {
                for (i, v) in pi1.iter().enumerate() {
                    check_pair([1.0 - v, *v], || format!("instance {i}"))?;
                }
                Ok(())
            }
        }
    }
}

/// Posterior flip probabilities keyed by the observed noisy label.
///
/// `None` marks a stratum whose noisy label has probability zero.
#[derive(Debug, Clone, PartialEq)]
pub enum PosteriorTable {
    Uniform { q: f64 },
    ClassLevel { q: [Option<f64>; 2] },
    GroupLevel { q: BTreeMap<i64, [Option<f64>; 2]> },
    InstanceLevel { q: Vec<[Option<f64>; 2]> },
}

/// Instances sharing one posterior rate, as used by the plausibility test.
#[derive(Debug, Clone, PartialEq)]
pub struct StratumCell {
    pub stratum: Stratum,
    pub members: Vec<usize>,
    /// Posterior rate of the cell (the member average for instance-level tables).
    pub q: f64,
}

fn check_q(q: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain(format!("posterior {q} outside [0, 1]")));
    }
    Ok(())
}

impl PosteriorTable {
    /// A class-level table given directly as `[q_{u|ỹ=0}, q_{u|ỹ=1}]`.
    pub fn class_level(q: [f64; 2]) -> Result<Self> {
        check_q(q[0])?;
        check_q(q[1])?;
        Ok(PosteriorTable::ClassLevel {
            q: [Some(q[0]), Some(q[1])],
        })
    }

    /// Per-instance posteriors supplied directly for the observed labels of
    /// `noisy`, bypassing Bayes' rule (e.g. a p-value per experiment).
    pub fn per_instance(noisy: &Dataset, q: &[f64]) -> Result<Self> {
        if q.len() != noisy.len() {
            return Err(Error::Input(format!(
                "{} posterior values for {} instances",
                q.len(),
                noisy.len()
            )));
        }
        let mut table = Vec::with_capacity(q.len());
        for (i, &v) in q.iter().enumerate() {
            check_q(v)?;
            let mut cell = [None, None];
            cell[noisy.label(i) as usize] = Some(v);
            table.push(cell);
        }
        Ok(PosteriorTable::InstanceLevel { q: table })
    }

    fn lookup(&self, noisy: &Dataset, i: usize) -> Result<(Stratum, Option<f64>)> {
        let label = noisy.label(i);
        Ok(match self {
            PosteriorTable::Uniform { q } => (Stratum::All, Some(*q)),
            PosteriorTable::ClassLevel { q } => (Stratum::Label(label), q[label as usize]),
            PosteriorTable::GroupLevel { q } => {
                let group = noisy.group(i).ok_or_else(|| {
                    Error::Config("group-level posterior requires a `group` column".into())
                })?;
                let stratum = Stratum::GroupLabel { group, label };
                let v = q.get(&group).and_then(|c| c[label as usize]);
                if !q.contains_key(&group) {
                    return Err(Error::Config(format!("posterior has no entry for {stratum}")));
                }
                (stratum, v)
            }
            PosteriorTable::InstanceLevel { q } => {
                if q.len() != noisy.len() {
                    return Err(Error::Config(format!(
                        "instance-level posterior has {} entries for {} instances",
                        q.len(),
                        noisy.len()
                    )));
                }
                (Stratum::Instance { index: i, label }, q[i][label as usize])
            }
        })
    }

    /// `q_{u|ỹ_i,x_i}` for instance `i` of the noisy dataset.
    pub fn q(&self, noisy: &Dataset, i: usize) -> Result<f64> {
        match self.lookup(noisy, i)? {
            (_, Some(v)) => Ok(v),
            (stratum, None) => Err(Error::UndefinedPosterior {
                stratum: stratum.to_string(),
                instance: i,
            }),
        }
    }

    /// Posterior rate for every instance of `noisy`.
    pub fn resolve(&self, noisy: &Dataset) -> Result<Vec<f64>> {
        (0..noisy.len()).map(|i| self.q(noisy, i)).collect()
    }

    /// Partition of `noisy` into the strata over which empirical flip rates
    /// are compared with the posterior. Uniform tables form a single cell;
    /// class-level tables split by noisy label; group-level by (group, label);
    /// instance-level by noisy label with the cell-average rate.
    pub fn cells(&self, noisy: &Dataset) -> Result<Vec<StratumCell>> {
        let q = self.resolve(noisy)?;
        let mut map: BTreeMap<Stratum, Vec<usize>> = BTreeMap::new();
        for i in 0..noisy.len() {
            let label = noisy.label(i);
            let key = match self {
                PosteriorTable::Uniform { .. } => Stratum::All,
                PosteriorTable::ClassLevel { .. } | PosteriorTable::InstanceLevel { .. } => {
                    Stratum::Label(label)
                }
                PosteriorTable::GroupLevel { .. } => Stratum::GroupLabel {
                    group: noisy.group(i).unwrap_or_default(),
                    label,
                },
            };
            map.entry(key).or_default().push(i);
        }
        Ok(map
            .into_iter()
            .map(|(stratum, members)| {
                let rate = members.iter().map(|&i| q[i]).sum::<f64>() / members.len() as f64;
                StratumCell {
                    stratum,
                    members,
                    q: rate,
                }
            })
            .collect())
    }
}

/// `Pr(Ỹ = ỹ)` per stratum.
#[derive(Debug, Clone, PartialEq)]
pub enum NoisyMarginal {
    Class([f64; 2]),
    Group(BTreeMap<i64, [f64; 2]>),
    Instance(Vec<[f64; 2]>),
}

/// Joint terms for one stratum: `(numerator, denominator)` of the posterior
/// for each noisy label. The denominator is `Pr(Ỹ = ỹ)`.
fn stratum_terms(p: [f64; 2], pi: [f64; 2]) -> [(f64, f64); 2] {
    let mut out = [(0.0, 0.0); 2];
    for (noisy, slot) in out.iter_mut().enumerate() {
        let other = 1 - noisy;
        let flipped_in = pi[other] * p[other];
        let kept = pi[noisy] * (1.0 - p[noisy]);
        *slot = (flipped_in, flipped_in + kept);
    }
    out
}

fn stratum_posterior(p: [f64; 2], pi: [f64; 2]) -> [Option<f64>; 2] {
    stratum_terms(p, pi).map(|(num, den)| if den > 0.0 { Some(num / den) } else { None })
}

fn stratum_marginal(p: [f64; 2], pi: [f64; 2]) -> [f64; 2] {
    stratum_terms(p, pi).map(|(_, den)| den)
}

fn incompatible(spec: &NoiseSpec, priors: &Priors) -> Error {
    let kind = match priors {
        Priors::Class { .. } => "population",
        Priors::Group { .. } => "group",
        Priors::Instance { .. } => "instance",
    };
    Error::Config(format!(
        "{} noise is not compatible with {kind} priors",
        spec.family()
    ))
}

fn group_prior(pi: &BTreeMap<i64, [f64; 2]>, g: i64) -> Result<[f64; 2]> {
    pi.get(&g)
        .copied()
        .ok_or_else(|| Error::Config(format!("no prior for group {g}")))
}

fn instance_priors(priors: &Priors, n: usize) -> Result<Vec<[f64; 2]>> {
    match priors {
        Priors::Class { pi } => Ok(vec![*pi; n]),
        Priors::Instance { pi1 } if pi1.len() == n => {
            Ok(pi1.iter().map(|&v| [1.0 - v, v]).collect())
        }
        Priors::Instance { pi1 } => Err(Error::Config(format!(
            "{} instance priors for {n} instances",
            pi1.len()
        ))),
        Priors::Group { .. } => Err(Error::Config(
            "instance-level noise needs population or instance priors".into(),
        )),
    }
}

/// Exact Bayes posterior of a flip given the observed label, per stratum.
pub fn posterior(spec: &NoiseSpec, priors: &Priors) -> Result<PosteriorTable> {
    spec.validate()?;
    priors.validate()?;
    match (spec, priors) {
        (NoiseSpec::Uniform { p }, _) => Ok(PosteriorTable::Uniform { q: *p }),
        (NoiseSpec::ClassLevel { p }, Priors::Class { pi }) => Ok(PosteriorTable::ClassLevel {
            q: stratum_posterior(*p, *pi),
        }),
        (NoiseSpec::GroupLevel { p }, Priors::Group { pi }) => {
            let q = p
                .iter()
                .map(|(&g, &rates)| Ok((g, stratum_posterior(rates, group_prior(pi, g)?))))
                .collect::<Result<_>>()?;
            Ok(PosteriorTable::GroupLevel { q })
        }
        (NoiseSpec::GroupLevel { p }, Priors::Class { pi }) => Ok(PosteriorTable::GroupLevel {
            q: p
                .iter()
                .map(|(&g, &rates)| (g, stratum_posterior(rates, *pi)))
                .collect(),
        }),
        (NoiseSpec::InstanceLevel { p }, _) => {
            let pis = instance_priors(priors, p.len())?;
            Ok(PosteriorTable::InstanceLevel {
                q: p
                    .iter()
                    .zip(&pis)
                    .map(|(&rates, &pi)| stratum_posterior(rates, pi))
                    .collect(),
            })
        }
        _ => Err(incompatible(spec, priors)),
    }
}

/// `Pr(Ỹ = ỹ) = π_ỹ (1 - p_{u|ỹ}) + π_{1-ỹ} p_{u|1-ỹ}` per stratum.
pub fn noisy_label_marginal(spec: &NoiseSpec, priors: &Priors) -> Result<NoisyMarginal> {
    spec.validate()?;
    priors.validate()?;
    match (spec, priors) {
        (NoiseSpec::Uniform { p }, Priors::Class { pi }) => {
            Ok(NoisyMarginal::Class(stratum_marginal([*p, *p], *pi)))
        }
        (NoiseSpec::ClassLevel { p }, Priors::Class { pi }) => {
            Ok(NoisyMarginal::Class(stratum_marginal(*p, *pi)))
        }
        (NoiseSpec::GroupLevel { p }, Priors::Group { pi }) => Ok(NoisyMarginal::Group(
            p.iter()
                .map(|(&g, &rates)| Ok((g, stratum_marginal(rates, group_prior(pi, g)?))))
                .collect::<Result<_>>()?,
        )),
        (NoiseSpec::GroupLevel { p }, Priors::Class { pi }) => Ok(NoisyMarginal::Group(
            p.iter()
                .map(|(&g, &rates)| (g, stratum_marginal(rates, *pi)))
                .collect(),
        )),
        (NoiseSpec::InstanceLevel { p }, _) => {
            let pis = instance_priors(priors, p.len())?;
            Ok(NoisyMarginal::Instance(
                p.iter()
                    .zip(&pis)
                    .map(|(&rates, &pi)| stratum_marginal(rates, pi))
                    .collect(),
            ))
        }
        _ => Err(incompatible(spec, priors)),
    }
}

/// Flips each clean label independently with probability `p_{u|y_i,x_i}`.
///
/// Returns the noisy dataset and the realized (true) draw. The output is a
/// pure function of `(clean, spec, seed)`.
pub fn inject_noise(clean: &Dataset, spec: &NoiseSpec, seed: u64) -> Result<(Dataset, NoiseDraw)> {
    if clean.kind() != LabelKind::Clean {
        return Err(Error::Input("inject_noise expects clean labels".into()));
    }
    spec.validate()?;
    let mut rng = seed::rng(seed);
    let mut bits = Vec::with_capacity(clean.len());
    let mut noisy = Vec::with_capacity(clean.len());
    for i in 0..clean.len() {
        let y = clean.label(i);
        let p = spec.flip_rate(clean, i, y)?;
        let u = u8::from(rng.random::<f64>() < p);
        bits.push(u);
        noisy.push(xor(y, u)?);
    }
    Ok((
        clean.relabel(noisy, LabelKind::Noisy)?,
        NoiseDraw::new(bits, Provenance::TrueDraw)?,
    ))
}

/// Undoes a draw: `y_i = ỹ_i ⊕ u_i`.
pub fn recover_labels(noisy: &Dataset, draw: &NoiseDraw) -> Result<Dataset> {
    let labels = xor_labels(noisy.labels(), draw.bits())?;
    noisy.relabel(labels, LabelKind::Clean)
}

// ---------------------------------------------------------------------------
// JSON document: {"family": ..., "params": {...}, "priors": {...}}
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GroupPair {
    group: i64,
    p_u_given_y: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
enum SpecDoc {
    Uniform { p: f64 },
    ClassLevel { p_u_given_y: [f64; 2] },
    GroupLevel { groups: Vec<GroupPair> },
    InstanceLevel { p_u_given_y: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum PriorsDoc {
    Class { pi: [f64; 2] },
    Group { groups: Vec<GroupPriorDoc> },
    Instance { pi1: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GroupPriorDoc {
    group: i64,
    pi: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NoiseModelDoc {
    #[serde(flatten)]
    spec: SpecDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    priors: Option<PriorsDoc>,
}

impl TryFrom<NoiseModelDoc> for NoiseModel {
    type Error = Error;

    fn try_from(doc: NoiseModelDoc) -> Result<Self> {
        let spec = match doc.spec {
            SpecDoc::Uniform { p } => NoiseSpec::Uniform { p },
            SpecDoc::ClassLevel { p_u_given_y } => NoiseSpec::ClassLevel { p: p_u_given_y },
            SpecDoc::GroupLevel { groups } => NoiseSpec::GroupLevel {
                p: groups.into_iter().map(|g| (g.group, g.p_u_given_y)).collect(),
            },
            SpecDoc::InstanceLevel { p_u_given_y } => NoiseSpec::InstanceLevel { p: p_u_given_y },
        };
        let priors = doc.priors.map(|p| match p {
            PriorsDoc::Class { pi } => Priors::Class { pi },
            PriorsDoc::Group { groups } => Priors::Group {
                pi: groups.into_iter().map(|g| (g.group, g.pi)).collect(),
            },
            PriorsDoc::Instance { pi1 } => Priors::Instance { pi1 },
        });
        NoiseModel::new(spec, priors)
    }
}

impl From<NoiseModel> for NoiseModelDoc {
    fn from(model: NoiseModel) -> Self {
        let spec = match model.spec {
            NoiseSpec::Uniform { p } => SpecDoc::Uniform { p },
            NoiseSpec::ClassLevel { p } => SpecDoc::ClassLevel { p_u_given_y: p },
            NoiseSpec::GroupLevel { p } => SpecDoc::GroupLevel {
                groups: p
                    .into_iter()
                    .map(|(group, p_u_given_y)| GroupPair { group, p_u_given_y })
                    .collect(),
            },
            NoiseSpec::InstanceLevel { p } => SpecDoc::InstanceLevel { p_u_given_y: p },
        };
        let priors = model.priors.map(|p| match p {
            Priors::Class { pi } => PriorsDoc::Class { pi },
            Priors::Group { pi } => PriorsDoc::Group {
                groups: pi
                    .into_iter()
                    .map(|(group, pi)| GroupPriorDoc { group, pi })
                    .collect(),
            },
            Priors::Instance { pi1 } => PriorsDoc::Instance { pi1 },
        });
        NoiseModelDoc { spec, priors }
    }
}

/// A noise model together with (optional) priors, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NoiseModelDoc", into = "NoiseModelDoc")]
pub struct NoiseModel {
    pub spec: NoiseSpec,
    pub priors: Option<Priors>,
}

impl NoiseModel {
    pub fn new(spec: NoiseSpec, priors: Option<Priors>) -> Result<Self> {
        spec.validate()?;
        if let Some(p) = &priors {
            p.validate()?;
        }
        Ok(Self { spec, priors })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("noise model serializes")
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

    /// Posterior table, requiring priors unless the family is uniform.
    pub fn posterior(&self) -> Result<PosteriorTable> {
        match (&self.spec, &self.priors) {
            (NoiseSpec::Uniform { p }, None) => Ok(PosteriorTable::Uniform { q: *p }),
            (spec, Some(priors)) => posterior(spec, priors),
            (spec, None) => Err(Error::Config(format!(
                "{} noise needs priors to compute a posterior",
                spec.family()
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn xor_truth_table() {
        assert_eq!(xor(0, 0).unwrap(), 0);
        assert_eq!(xor(1, 1).unwrap(), 0);
        assert_eq!(xor(1, 0).unwrap(), 1);
        assert_eq!(xor(0, 1).unwrap(), 1);
        assert!(matches!(xor(2, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn parses_shorthand() {
        assert_eq!("uniform:0.1".parse::<NoiseSpec>().unwrap(), NoiseSpec::Uniform { p: 0.1 });
        assert_eq!(
            "class:0.0, 0.4".parse::<NoiseSpec>().unwrap(),
            NoiseSpec::ClassLevel { p: [0.0, 0.4] }
        );
        assert!("class:0.1".parse::<NoiseSpec>().is_err());
        assert!("uniform:0.7".parse::<NoiseSpec>().is_err());
    }

    #[test]
    fn rates_at_or_above_half_are_rejected() {
        assert!(NoiseSpec::uniform(0.5).is_err());
        assert!(NoiseSpec::class_level(0.0, 0.6).is_err());
        assert!(NoiseSpec::class_level(-0.1, 0.0).is_err());
        assert!(NoiseSpec::uniform(0.49).is_ok());
    }

    #[test]
    fn priors_must_sum_to_one() {
        assert!(Priors::class(1.2).is_err());
        let bad = Priors::Class { pi: [0.5, 0.6] };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn uniform_posterior_is_the_flip_rate() {
        let q = posterior(&NoiseSpec::uniform(0.1).unwrap(), &Priors::class(0.3).unwrap()).unwrap();
        assert_eq!(q, PosteriorTable::Uniform { q: 0.1 });
    }

    #[test]
    fn class_level_posterior_matches_joint_table() {
        // Joint table for pi_1 = 0.2, p_{u|1} = 0.4, p_{u|0} = 0:
        //   (y=1,u=0) 0.12 -> ỹ=1   (y=1,u=1) 0.08 -> ỹ=0
        //   (y=0,u=0) 0.80 -> ỹ=0   (y=0,u=1) 0    -> ỹ=1
        let spec = NoiseSpec::class_level(0.0, 0.4).unwrap();
        let priors = Priors::class(0.2).unwrap();
        let PosteriorTable::ClassLevel { q } = posterior(&spec, &priors).unwrap() else {
            panic!("expected class-level table")
        };
        assert_abs_diff_eq!(q[1].unwrap(), 0.0);
        assert_abs_diff_eq!(q[0].unwrap(), 0.08 / 0.88, epsilon = 1e-15);

        let NoisyMarginal::Class(m) = noisy_label_marginal(&spec, &priors).unwrap() else {
            panic!()
        };
        assert_abs_diff_eq!(m[0], 0.88, epsilon = 1e-15);
        assert_abs_diff_eq!(m[1], 0.12, epsilon = 1e-15);
    }

    #[test]
    fn posterior_above_half_for_rare_class() {
        // pi_1 = 0.1, p_{u|1} = 0.05, p_{u|0} = 0.4:
        //   ỹ=1 from (y=1,u=0) 0.095 and (y=0,u=1) 0.36
        let spec = NoiseSpec::class_level(0.4, 0.05).unwrap();
        let priors = Priors::class(0.1).unwrap();
        let PosteriorTable::ClassLevel { q } = posterior(&spec, &priors).unwrap() else {
            panic!()
        };
        assert_abs_diff_eq!(q[1].unwrap(), 0.36 / 0.455, epsilon = 1e-15);
        assert!((q[1].unwrap() - 0.791209).abs() < 1e-6);
    }

    #[test]
    fn zero_noise_marginal_equals_prior() {
        let NoisyMarginal::Class(m) = noisy_label_marginal(
            &NoiseSpec::class_level(0.0, 0.0).unwrap(),
            &Priors::class(0.3).unwrap(),
        )
        .unwrap() else {
            panic!()
        };
        assert_abs_diff_eq!(m[1], 0.3);
        let NoisyMarginal::Class(m) =
            noisy_label_marginal(&NoiseSpec::uniform(0.2).unwrap(), &Priors::class(0.5).unwrap())
                .unwrap()
        else {
            panic!()
        };
        assert_abs_diff_eq!(m[1], 0.5);
    }

    #[test]
    fn degenerate_stratum_is_undefined() {
        // pi_1 = 1 and no flips on positives: ỹ = 0 never happens.
        let spec = NoiseSpec::class_level(0.0, 0.0).unwrap();
        let table = posterior(&spec, &Priors::class(1.0).unwrap()).unwrap();
        assert_eq!(
            table,
            PosteriorTable::ClassLevel {
                q: [None, Some(0.0)]
            }
        );
        let noisy = Dataset::new(vec![0.0, 1.0], 1, vec![1, 0], None, LabelKind::Noisy).unwrap();
        assert_eq!(table.q(&noisy, 0).unwrap(), 0.0);
        let err = table.q(&noisy, 1).unwrap_err();
        assert!(matches!(err, Error::UndefinedPosterior { instance: 1, .. }), "{err}");
    }

    #[test]
    fn missing_group_is_named() {
        let spec =
            NoiseSpec::group_level([(0, [0.1, 0.2])].into_iter().collect()).unwrap();
        let clean = Dataset::new(vec![0.0, 1.0], 1, vec![0, 1], Some(vec![0, 7]), LabelKind::Clean)
            .unwrap();
        let err = inject_noise(&clean, &spec, 1).unwrap_err().to_string();
        assert!(err.contains("group=7"), "{err}");
    }

    #[test]
    fn zero_noise_injection_is_identity() {
        let clean = Dataset::new(vec![0.0; 50], 1, (0..50).map(|i| (i % 2) as u8).collect(), None, LabelKind::Clean)
            .unwrap();
        let (noisy, draw) = inject_noise(&clean, &NoiseSpec::class_level(0.0, 0.0).unwrap(), 3).unwrap();
        assert_eq!(noisy.labels(), clean.labels());
        assert_eq!(draw.flips(), 0);
        assert_eq!(draw.provenance(), Provenance::TrueDraw);
    }

    #[test]
    fn injection_requires_clean_labels() {
        let noisy = Dataset::new(vec![0.0], 1, vec![1], None, LabelKind::Noisy).unwrap();
        assert!(inject_noise(&noisy, &NoiseSpec::uniform(0.1).unwrap(), 0).is_err());
    }

    #[test]
    fn instance_level_uses_scalar_prior_default() {
        let spec = NoiseSpec::instance_level(vec![[0.1, 0.1], [0.0, 0.3]]).unwrap();
        let table = posterior(&spec, &Priors::class(0.5).unwrap()).unwrap();
        let PosteriorTable::InstanceLevel { q } = table else { panic!() };
        assert_abs_diff_eq!(q[0][0].unwrap(), 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(q[1][0].unwrap(), 0.15 / 0.65, epsilon = 1e-15);
        assert_abs_diff_eq!(q[1][1].unwrap(), 0.0);
        assert!(posterior(&spec, &Priors::Instance { pi1: vec![0.5] }).is_err());
    }

    #[test]
    fn json_document_roundtrip() {
        let docs = [
            r#"{"family":"uniform","params":{"p":0.1}}"#,
            r#"{"family":"class_level","params":{"p_u_given_y":[0.0,0.4]},"priors":{"pi":[0.8,0.2]}}"#,
            r#"{"priors":{"groups":[{"group":0,"pi":[0.7,0.3]},{"group":2,"pi":[0.5,0.5]}]},
                "family":"group_level","params":{"groups":[{"group":0,"p_u_given_y":[0.1,0.2]},{"group":2,"p_u_given_y":[0.0,0.3]}]}}"#,
            r#"{"family":"instance_level","params":{"p_u_given_y":[[0.1,0.0],[0.2,0.0]]},"priors":{"pi1":[0.4,0.6]}}"#,
        ];
        for text in docs {
            let model = NoiseModel::from_json(text).unwrap();
            assert_eq!(NoiseModel::from_json(&model.to_json()).unwrap(), model);
        }
        let bad = r#"{"family":"uniform","params":{"p":0.7}}"#;
        assert!(NoiseModel::from_json(bad).is_err());
        let bad_prior = r#"{"family":"class_level","params":{"p_u_given_y":[0.0,0.4]},"priors":{"pi":[0.8,0.3]}}"#;
        assert!(NoiseModel::from_json(bad_prior).is_err());
    }
}
