//! Feature schema and the preprocessing pipeline that maps raw lead features
//! to context vectors: one-hot encoding for categoricals, mean imputation and
//! capped z-scores for real-valued features.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::ContextVector;
use crate::error::{Error, Result};

/// Number of features in a lead dataset.
pub const FEATURE_COUNT: usize = 13;

/// Real-feature coordinates are clipped to `[-Z_CAP, Z_CAP]`.
pub const Z_CAP: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Real,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default)]
    pub is_fhat: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    features: Vec<FeatureSpec>,
    fhat_index: usize,
}

impl Schema {
    /// Exactly one feature must be flagged as f̂ and it must be real-valued.
    pub fn new(features: Vec<FeatureSpec>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Schema("schema declares no features".into()));
        }
        let mut seen = BTreeSet::new();
        for f in &features {
            if !seen.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature name `{}`", f.name)));
            }
        }
        let fhat: Vec<usize> = features
            .iter()
            .enumerate()
            .filter(|(_, f)| f.is_fhat)
            .map(|(i, _)| i)
            .collect();
        let fhat_index = match fhat.as_slice() {
            [i] => *i,
            [] => return Err(Error::Schema("no feature is flagged as fhat".into())),
            _ => return Err(Error::Schema("more than one feature is flagged as fhat".into())),
        };
        if features[fhat_index].kind != FeatureKind::Real {
            return Err(Error::Schema("the fhat feature must be real-valued".into()));
        }
        Ok(Schema {
            features,
            fhat_index,
        })
    }

    /// Like [`Schema::new`] but also enforces the dataset width.
    pub fn new_dataset_schema(features: Vec<FeatureSpec>) -> Result<Self> {
        if features.len() != FEATURE_COUNT {
            return Err(Error::Schema(format!(
                "dataset schema must declare {FEATURE_COUNT} features, found {}",
                features.len()
            )));
        }
        Schema::new(features)
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn fhat_index(&self) -> usize {
        self.fhat_index
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    /// Parse the line-oriented schema format: `<name> <real|categorical> [fhat]`,
    /// blank lines and `#` comments ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut features = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let loc = format!("schema line {}", lineno + 1);
            let parts: Vec<&str> = line.split_whitespace().collect();
            let (name, kind, flag) = match parts.as_slice() {
                [n, k] => (*n, *k, None),
                [n, k, f] => (*n, *k, Some(*f)),
                _ => return Err(Error::parse(loc, "expected `<name> <kind> [fhat]`")),
            };
            let kind = match kind {
                "real" => FeatureKind::Real,
                "categorical" => FeatureKind::Categorical,
                other => return Err(Error::parse(loc, format!("unknown feature kind `{other}`"))),
            };
            let is_fhat = match flag {
                None => false,
                Some("fhat") => true,
                Some(other) => return Err(Error::parse(loc, format!("unknown flag `{other}`"))),
            };
            features.push(FeatureSpec {
                name: name.to_string(),
                kind,
                is_fhat,
            });
        }
        Schema::new_dataset_schema(features)
    }

    pub fn render(&self) -> String {
        let mut out = String::from("# name kind [fhat]\n");
        for f in &self.features {
            let kind = match f.kind {
                FeatureKind::Real => "real",
                FeatureKind::Categorical => "categorical",
            };
            let _ = write!(out, "{} {}", f.name, kind);
            if f.is_fhat {
                out.push_str(" fhat");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureValue {
    Real(Option<f64>),
    Categorical(String),
}

/// Raw features of one lead, in schema order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawLeadFeatures {
    pub values: Vec<FeatureValue>,
}

impl RawLeadFeatures {
    pub fn new(values: Vec<FeatureValue>) -> Self {
        RawLeadFeatures { values }
    }

    pub fn check(&self, schema: &Schema) -> Result<()> {
        if self.values.len() != schema.len() {
            return Err(Error::Schema(format!(
                "expected {} feature values, found {}",
                schema.len(),
                self.values.len()
            )));
        }
        for (v, spec) in self.values.iter().zip(schema.features()) {
            match (v, spec.kind) {
                (FeatureValue::Real(_), FeatureKind::Real)
                | (FeatureValue::Categorical(_), FeatureKind::Categorical) => {}
                _ => {
                    return Err(Error::Schema(format!(
                        "feature `{}` has the wrong kind",
                        spec.name
                    )))
                }
            }
        }
        match &self.values[schema.fhat_index()] {
            FeatureValue::Real(Some(x)) if x.is_finite() => Ok(()),
            _ => Err(Error::Schema("fhat value is missing".into())),
        }
    }

    pub fn fhat(&self, schema: &Schema) -> f64 {
        match self.values.get(schema.fhat_index()) {
            Some(FeatureValue::Real(Some(x))) => *x,
            _ => f64::NAN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColumnStats {
    Real { mean: f64, std: f64, offset: usize },
    Categorical { vocabulary: Vec<String>, offset: usize },
}

/// Fitted preprocessing parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessStats {
    pub schema: Schema,
    pub columns: Vec<ColumnStats>,
    pub dim: usize,
    #[serde(skip)]
    lookup: Vec<Option<HashMap<String, usize>>>,
}

impl PreprocessStats {
    fn build_lookup(&mut self) {
        self.lookup = self
            .columns
            .iter()
            .map(|c| match c {
                ColumnStats::Categorical { vocabulary, .. } => Some(
                    vocabulary
                        .iter()
                        .enumerate()
                        .map(|(i, t)| (t.clone(), i))
                        .collect(),
                ),
                ColumnStats::Real { .. } => None,
            })
            .collect();
    }

    /// Rebuild derived lookups after deserialization.
    pub fn finish(mut self) -> Result<Self> {
        if self.columns.len() != self.schema.len() {
            return Err(Error::Schema("column stats do not match schema".into()));
        }
        let mut offset = 0;
        for c in &self.columns {
            match c {
                ColumnStats::Real { std, offset: o, .. } => {
                    if *o != offset || !(*std > 0.0) {
                        return Err(Error::Schema("inconsistent real column stats".into()));
                    }
                    offset += 1;
                }
                ColumnStats::Categorical { vocabulary, offset: o } => {
                    if *o != offset {
                        return Err(Error::Schema("inconsistent categorical offsets".into()));
                    }
                    offset += vocabulary.len();
                }
            }
        }
        if offset != self.dim {
            return Err(Error::Schema("context dimension does not match columns".into()));
        }
        self.build_lookup();
        Ok(self)
    }

    /// Coordinates of real-valued features in the context vector.
    pub fn real_coordinates(&self) -> Vec<usize> {
        self.columns
            .iter()
            .filter_map(|c| match c {
                ColumnStats::Real { offset, .. } => Some(*offset),
                _ => None,
            })
            .collect()
    }
}

/// Fit means, standard deviations and vocabularies.
pub fn fit_preprocessor(schema: &Schema, records: &[RawLeadFeatures]) -> Result<PreprocessStats> {
    if records.is_empty() {
        return Err(Error::invalid("cannot fit preprocessor on zero records"));
    }
    for r in records {
        r.check(schema)?;
    }
    let mut columns = Vec::with_capacity(schema.len());
    let mut offset = 0;
    for (j, spec) in schema.features().iter().enumerate() {
        match spec.kind {
            FeatureKind::Real => {
                let vals: Vec<f64> = records
                    .iter()
                    .filter_map(|r| match &r.values[j] {
                        FeatureValue::Real(Some(x)) => Some(*x),
                        _ => None,
                    })
                    .collect();
                if vals.is_empty() {
                    return Err(Error::invalid(format!(
                        "real feature `{}` is missing in every record",
                        spec.name
                    )));
                }
                let n = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / n;
                let var = vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                let std = var.sqrt();
                let std = if std > 0.0 && std.is_finite() { std } else { 1.0 };
                columns.push(ColumnStats::Real { mean, std, offset });
                offset += 1;
            }
            FeatureKind::Categorical => {
                let vocab: BTreeSet<&str> = records
                    .iter()
                    .filter_map(|r| match &r.values[j] {
                        FeatureValue::Categorical(t) => Some(t.as_str()),
                        _ => None,
                    })
                    .collect();
                let vocabulary: Vec<String> = vocab.into_iter().map(str::to_string).collect();
                let width = vocabulary.len();
                columns.push(ColumnStats::Categorical { vocabulary, offset });
                offset += width;
            }
        }
    }
    PreprocessStats {
        schema: schema.clone(),
        columns,
        dim: offset,
        lookup: Vec::new(),
    }
    .finish()
}

/// Map raw features to a context vector under fitted stats.
pub fn transform(raw: &RawLeadFeatures, stats: &PreprocessStats) -> Result<ContextVector> {
    if raw.values.len() != stats.columns.len() {
        return Err(Error::Schema(format!(
            "expected {} feature values, found {}",
            stats.columns.len(),
            raw.values.len()
        )));
    }
    let mut out = vec![0.0; stats.dim];
    for (j, (value, col)) in raw.values.iter().zip(&stats.columns).enumerate() {
        match (value, col) {
            (FeatureValue::Real(x), ColumnStats::Real { mean, std, offset }) => {
                let x = x.filter(|v| v.is_finite()).unwrap_or(*mean);
                out[*offset] = ((x - mean) / std).clamp(-Z_CAP, Z_CAP);
            }
            (FeatureValue::Categorical(tok), ColumnStats::Categorical { offset, .. }) => {
                let hit = stats.lookup.get(j).and_then(|m| m.as_ref()).and_then(|m| m.get(tok));
                if let Some(i) = hit {
                    out[offset + i] = 1.0;
                }
            }
            _ => {
                return Err(Error::Schema(format!(
                    "feature `{}` has the wrong kind",
                    stats.schema.features()[j].name
                )))
            }
        }
    }
    Ok(ContextVector(out))
}

/// Historical outcome attached to a reference-data row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoricalOutcome {
    pub action: crate::domain::Action,
    pub reward: u8,
    pub delay_days: u32,
}

/// Delimited-text reference dataset.
pub mod dataset {
    use super::*;
    use crate::domain::Action;
    use std::path::Path;

    pub const HISTORY_COLUMNS: [&str; 3] = ["historical_action", "historical_reward", "historical_delay"];

    pub fn write_csv(
        schema: &Schema,
        rows: &[(Arc<RawLeadFeatures>, Option<HistoricalOutcome>)],
    ) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let with_history = rows.iter().any(|(_, h)| h.is_some());
        let mut header: Vec<&str> = schema.features().iter().map(|f| f.name.as_str()).collect();
        if with_history {
            header.extend(HISTORY_COLUMNS);
        }
        w.write_record(&header).map_err(csv_err)?;
        for (raw, hist) in rows {
            let mut rec: Vec<String> = raw
                .values
                .iter()
                .map(|v| match v {
                    FeatureValue::Real(Some(x)) => format_real(*x),
                    FeatureValue::Real(None) => String::new(),
                    FeatureValue::Categorical(t) => t.clone(),
                })
                .collect();
            if with_history {
                match hist {
                    Some(h) => {
                        rec.push(h.action.to_string());
                        rec.push(h.reward.to_string());
                        rec.push(h.delay_days.to_string());
                    }
                    None => rec.extend([String::new(), String::new(), String::new()]),
                }
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Internal(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
    }

    /// Shortest representation that round-trips.
    pub fn format_real(x: f64) -> String {
        format!("{x}")
    }

    fn csv_err(e: csv::Error) -> Error {
        Error::Internal(format!("csv: {e}"))
    }

    #[allow(clippy::type_complexity)]
    pub fn read_csv(
        schema: &Schema,
        text: &str,
        origin: &str,
    ) -> Result<Vec<(Arc<RawLeadFeatures>, Option<HistoricalOutcome>)>> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header = r
            .headers()
            .map_err(|e| Error::parse(origin, e.to_string()))?
            .clone();
        let mut col_of = Vec::with_capacity(schema.len());
        for f in schema.features() {
            let idx = header
                .iter()
                .position(|h| h == f.name)
                .ok_or_else(|| Error::parse(origin, format!("missing column `{}`", f.name)))?;
            col_of.push(idx);
        }
        let hist_cols: Option<Vec<usize>> = HISTORY_COLUMNS
            .iter()
            .map(|c| header.iter().position(|h| h == *c))
            .collect();
        let mut out = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let loc = format!("{origin} row {}", i + 2);
            let rec = rec.map_err(|e| Error::parse(&loc, e.to_string()))?;
            let mut values = Vec::with_capacity(schema.len());
            for (spec, &c) in schema.features().iter().zip(&col_of) {
                let cell = rec.get(c).unwrap_or("").trim();
                values.push(match spec.kind {
                    FeatureKind::Real if cell.is_empty() => FeatureValue::Real(None),
                    FeatureKind::Real => FeatureValue::Real(Some(cell.parse::<f64>().map_err(|_| {
                        Error::parse(&loc, format!("`{}` is not a number in `{}`", cell, spec.name))
                    })?)),
                    FeatureKind::Categorical => FeatureValue::Categorical(cell.to_string()),
                });
            }
            let raw = RawLeadFeatures::new(values);
            raw.check(schema).map_err(|e| Error::parse(&loc, e.to_string()))?;
            let hist = match &hist_cols {
                Some(cols) => {
                    let a = rec.get(cols[0]).unwrap_or("").trim();
                    if a.is_empty() {
                        None
                    } else {
                        let action: Action = a.parse().map_err(|e: Error| Error::parse(&loc, e.to_string()))?;
                        let reward: u8 = rec
                            .get(cols[1])
                            .unwrap_or("")
                            .trim()
                            .parse()
                            .ok()
                            .filter(|r| *r <= 1)
                            .ok_or_else(|| Error::parse(&loc, "historical_reward must be 0 or 1"))?;
                        let delay_days: u32 = rec
                            .get(cols[2])
                            .unwrap_or("")
                            .trim()
                            .parse()
                            .map_err(|_| Error::parse(&loc, "historical_delay must be a non-negative integer"))?;
                        Some(HistoricalOutcome {
                            action,
                            reward,
                            delay_days,
                        })
                    }
                }
                None => None,
            };
            out.push((Arc::new(raw), hist));
        }
        Ok(out)
    }

    pub fn read_schema_file(path: &Path) -> Result<Schema> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Schema::parse(&text)
    }
}
