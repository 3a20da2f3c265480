//! Tabular binary-classification datasets and their CSV form.
//!
//! CSV layout: a header row, a `y` column holding 0/1, an optional integer
//! `group` column, and every remaining column parsed as a numeric feature.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether a label vector holds clean outcomes `y` or observed noisy labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    Clean,
    Noisy,
}

/// `n` rows of `d` finite features with one binary label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    d: usize,
    features: Vec<f64>,
    labels: Vec<u8>,
    groups: Option<Vec<i64>>,
    kind: LabelKind,
    feature_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset from row vectors.
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<u8>, kind: LabelKind) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Input("ragged feature rows".into()));
        }
        let features = rows.iter().flatten().copied().collect();
        Self::new(features, d, labels, None, kind)
    }

    /// Builds a dataset from a row-major feature buffer of `labels.len() * d` values.
    pub fn new(
        features: Vec<f64>,
        d: usize,
        labels: Vec<u8>,
        groups: Option<Vec<i64>>,
        kind: LabelKind,
    ) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::Input("dataset must contain at least one row".into()));
        }
        if features.len() != n * d {
            return Err(Error::Input(format!(
                "feature buffer has {} values, expected {n} x {d}",
                features.len()
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!(
                "non-finite feature value at row {}, column {}",
                pos / d.max(1),
                pos % d.max(1)
            )));
        }
        if let Some(i) = labels.iter().position(|&y| y > 1) {
            return Err(Error::Input(format!(
                "label {} at row {i} is not binary",
                labels[i]
            )));
        }
        if let Some(g) = &groups {
            if g.len() != n {
                return Err(Error::Input(format!(
                    "group vector has length {}, expected {n}",
                    g.len()
                )));
            }
        }
        let feature_names = (0..d).map(|j| format!("x{j}")).collect();
        Ok(Self {
            n,
            d,
            features,
            labels,
            groups,
            kind,
            feature_names,
        })
    }

    pub fn with_groups(mut self, groups: Vec<i64>) -> Result<Self> {
        if groups.len() != self.n {
            return Err(Error::Input(format!(
                "group vector has length {}, expected {}",
                groups.len(),
                self.n
            )));
        }
        self.groups = Some(groups);
        Ok(self)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.d {
            return Err(Error::Input("feature name count does not match d".into()));
        }
        self.feature_names = names;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.n).map(move |i| self.row(i))
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn groups(&self) -> Option<&[i64]> {
        self.groups.as_deref()
    }

    pub fn group(&self, i: usize) -> Option<i64> {
        self.groups.as_ref().map(|g| g[i])
    }

    pub fn kind(&self) -> LabelKind {
        self.kind
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Same features and groups, new labels.
    pub fn relabel(&self, labels: Vec<u8>, kind: LabelKind) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::Input(format!(
                "label vector has length {}, expected {}",
                labels.len(),
                self.n
            )));
        }
        if let Some(i) = labels.iter().position(|&y| y > 1) {
            return Err(Error::Input(format!("label at row {i} is not binary")));
        }
        Ok(Self {
            labels,
            kind,
            ..self.clone()
        })
    }

    /// Rows selected by `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Input("subset must keep at least one row".into()));
        }
        let mut features = Vec::with_capacity(indices.len() * self.d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.n {
                return Err(Error::Input(format!("row index {i} out of range")));
            }
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        let groups = self
            .groups
            .as_ref()
            .map(|g| indices.iter().map(|&i| g[i]).collect());
        Ok(Self {
            n: indices.len(),
            d: self.d,
            features,
            labels,
            groups,
            kind: self.kind,
            feature_names: self.feature_names.clone(),
        })
    }

    /// Fraction of rows with label 1.
    pub fn positive_rate(&self) -> f64 {
        self.labels.iter().filter(|&&y| y == 1).count() as f64 / self.n as f64
    }

    pub fn read_csv(path: impl AsRef<Path>, kind: LabelKind) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(file, kind)
    }

    pub fn from_csv_reader<R: std::io::Read>(reader: R, kind: LabelKind) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let y_col = headers
            .iter()
            .position(|h| h.trim() == "y")
            .ok_or_else(|| Error::Input("CSV is missing the `y` column".into()))?;
        let group_col = headers.iter().position(|h| h.trim() == "group");
        let feature_cols: Vec<usize> = (0..headers.len())
            .filter(|&c| c != y_col && Some(c) != group_col)
            .collect();
        let names = feature_cols
            .iter()
            .map(|&c| headers[c].trim().to_string())
            .collect();

        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut groups = group_col.map(|_| Vec::new());
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let row = line + 2;
            let y = record[y_col].trim();
            labels.push(match y {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(Error::Input(format!(
                        "row {row}: label `{other}` is not 0 or 1"
                    )))
                }
            });
            if let (Some(c), Some(g)) = (group_col, groups.as_mut()) {
                let v = record[c].trim().parse::<i64>().map_err(|_| {
                    Error::Input(format!("row {row}: group `{}` is not an integer", &record[c]))
                })?;
                g.push(v);
            }
            for &c in &feature_cols {
                let v = record[c].trim().parse::<f64>().map_err(|_| {
                    Error::Input(format!(
                        "row {row}: feature `{}` value `{}` is not numeric",
                        &headers[c], &record[c]
                    ))
                })?;
                features.push(v);
            }
        }
        Self::new(features, feature_cols.len(), labels, groups, kind)?.with_feature_names(names)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.to_csv_writer(file)
    }

    pub fn to_csv_writer<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["y".to_string()];
        if self.groups.is_some() {
            header.push("group".into());
        }
        header.extend(self.feature_names.iter().cloned());
        wtr.write_record(&header)?;
        for i in 0..self.n {
            let mut rec = vec![self.labels[i].to_string()];
            if let Some(g) = &self.groups {
                rec.push(g[i].to_string());
            }
            rec.extend(self.row(i).iter().map(|v| v.to_string()));
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}
