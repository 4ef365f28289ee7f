//! Flat key-value schema files describing how a decision CSV is ingested.
//!
//! Grammar (one `key = value` pair per line, `#` starts a comment):
//!
//! ```text
//! decision = income                  # exactly one decision column
//! decision.positive = >50K           # optional; absent means cells are 0/1
//! sensitive = sex, race              # crossed into a single group label
//! sensitive.race.keep = White, Black # optional level filter (pre-merge)
//! sensitive.race.map.Other = Amer-Indian-Eskimo, Other   # level merge
//! sensitive.age.bin = 28             # numeric cut points -> "<28", ">=28"
//! attr.age = continuous
//! attr.education-num = discrete
//! attr.workclass = categorical       # one-hot encoded
//! attr.workclass.levels = Private, Self-emp   # optional explicit levels
//! drop = fnlwgt                      # documentation only; unlisted columns
//!                                    # are dropped anyway
//! ```
//!
//! List values are comma-separated with surrounding whitespace trimmed, so
//! levels themselves cannot contain commas. Keys never contain `=`.

use crate::error::{FlapError, Result};
use std::collections::BTreeMap;
use std::path::Path;

/// How a non-sensitive column enters the attribute vector.
#[derive(Debug, Clone, PartialEq)]
pub enum AttrKind {
    Continuous,
    Discrete,
    /// One-hot encoded; `levels` pins the indicator set (otherwise the
    /// observed values are used, sorted).
    Categorical { levels: Option<Vec<String>> },
}

/// One non-sensitive column.
#[derive(Debug, Clone, PartialEq)]
pub struct AttrSpec {
    pub column: String,
    pub kind: AttrKind,
}

/// One sensitive column with its optional level transforms.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SensitiveSpec {
    pub column: String,
    /// Raw values to keep; rows with other values are filtered out.
    pub keep: Option<Vec<String>>,
    /// Merges `(new_label, old_values)` applied after the keep filter.
    pub merge: Vec<(String, Vec<String>)>,
    /// Ascending numeric cut points turning the column into interval labels.
    pub bin: Option<Vec<f64>>,
}

impl SensitiveSpec {
    pub fn plain(column: &str) -> Self {
        Self {
            column: column.to_string(),
            ..Self::default()
        }
    }

    /// Maps a raw cell to a group-level label, `None` if filtered out.
    pub fn level_of(&self, raw: &str) -> Result<Option<String>> {
        if let Some(keep) = &self.keep {
            if !keep.iter().any(|k| k == raw) {
                return Ok(None);
            }
        }
        if let Some(cuts) = &self.bin {
            let x: f64 = raw.parse().map_err(|_| {
                FlapError::Value(format!(
                    "column '{}': cannot bin non-numeric value '{raw}'",
                    self.column
                ))
            })?;
            return Ok(Some(bin_label(cuts, x)));
        }
        for (label, olds) in &self.merge {
            if olds.iter().any(|o| o == raw) {
                return Ok(Some(label.clone()));
            }
        }
        Ok(Some(raw.to_string()))
    }

    /// The complete level set implied by a keep list, after merging.
    pub fn expected_levels(&self) -> Option<Vec<String>> {
        let keep = self.keep.as_ref()?;
        if self.bin.is_some() {
            return None; // bins of kept values are data-dependent
        }
        let mut levels: Vec<String> = Vec::new();
        for raw in keep {
            let mut label = raw.clone();
            for (merged, olds) in &self.merge {
                if olds.iter().any(|o| o == raw) {
                    label = merged.clone();
                }
            }
            if !levels.contains(&label) {
                levels.push(label);
            }
        }
        Some(levels)
    }
}

fn bin_label(cuts: &[f64], x: f64) -> String {
    let mut idx = 0;
    while idx < cuts.len() && x >= cuts[idx] {
        idx += 1;
    }
    if cuts.len() == 1 {
        return if idx == 0 {
            format!("<{}", cuts[0])
        } else {
            format!(">={}", cuts[0])
        };
    }
    match idx {
        0 => format!("<{}", cuts[0]),
        i if i == cuts.len() => format!(">={}", cuts[i - 1]),
        i => format!("[{},{})", cuts[i - 1], cuts[i]),
    }
}

/// Ingestion recipe for one decision dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSchema {
    pub decision: String,
    /// Cell value coded as decision 1; all other values code as 0.
    pub decision_positive: Option<String>,
    pub sensitive: Vec<SensitiveSpec>,
    pub attrs: Vec<AttrSpec>,
    /// Documented drops; any column not referenced is dropped regardless.
    pub drop: Vec<String>,
}

impl DatasetSchema {
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs: Vec<(String, String)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some(eq) = line.find('=') else {
                return Err(FlapError::Schema(format!(
                    "line {}: expected 'key = value', got '{line}'",
                    lineno + 1
                )));
            };
            let key = line[..eq].trim().to_string();
            let value = line[eq + 1..].trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(FlapError::Schema(format!(
                    "line {}: empty key or value",
                    lineno + 1
                )));
            }
            pairs.push((key, value));
        }

        let mut decision: Option<String> = None;
        let mut decision_positive: Option<String> = None;
        let mut sensitive_order: Vec<String> = Vec::new();
        let mut sens: BTreeMap<String, SensitiveSpec> = BTreeMap::new();
        let mut attrs: Vec<AttrSpec> = Vec::new();
        let mut drop: Vec<String> = Vec::new();

        // `sensitive =` must come before per-column refinements, so run two
        // passes: headline keys first, then dotted refinements.
        for (key, value) in &pairs {
            match key.as_str() {
                "decision" => {
                    if decision.is_some() {
                        return Err(FlapError::Schema(
                            "multiple 'decision' lines; exactly one decision column is required"
                                .into(),
                        ));
                    }
                    decision = Some(value.clone());
                }
                "decision.positive" => decision_positive = Some(value.clone()),
                "sensitive" => {
                    for col in split_list(value) {
                        sensitive_order.push(col.clone());
                        sens.insert(col.clone(), SensitiveSpec::plain(&col));
                    }
                }
                "drop" => drop.extend(split_list(value)),
                k if k.starts_with("attr.") => {
                    let rest = &k[5..];
                    if let Some(col) = rest.strip_suffix(".levels") {
                        let spec = attrs
                            .iter_mut()
                            .find(|a| a.column == col)
                            .ok_or_else(|| {
                                FlapError::Schema(format!(
                                    "levels given for undeclared attribute '{col}'"
                                ))
                            })?;
                        match &mut spec.kind {
                            AttrKind::Categorical { levels } => {
                                *levels = Some(split_list(value));
                            }
                            _ => {
                                return Err(FlapError::Schema(format!(
                                    "levels only apply to categorical attributes ('{col}')"
                                )))
                            }
                        }
                    } else {
                        let kind = match value.as_str() {
                            "continuous" => AttrKind::Continuous,
                            "discrete" => AttrKind::Discrete,
                            "categorical" => AttrKind::Categorical { levels: None },
                            other => {
                                return Err(FlapError::Schema(format!(
                                    "unknown attribute kind '{other}' for '{rest}'"
                                )))
                            }
                        };
                        attrs.push(AttrSpec {
                            column: rest.to_string(),
                            kind,
                        });
                    }
                }
                k if k.starts_with("sensitive.") => {
                    let rest = &k[10..];
                    let (col, op) = rest.split_once('.').ok_or_else(|| {
                        FlapError::Schema(format!("malformed sensitive key '{k}'"))
                    })?;
                    let spec = sens.get_mut(col).ok_or_else(|| {
                        FlapError::Schema(format!(
                            "refinement for '{col}' before it is listed in 'sensitive'"
                        ))
                    })?;
                    if op == "keep" {
                        spec.keep = Some(split_list(value));
                    } else if op == "bin" {
                        let cuts: Result<Vec<f64>> = split_list(value)
                            .iter()
                            .map(|v| {
                                v.parse::<f64>().map_err(|_| {
                                    FlapError::Schema(format!("non-numeric bin cut '{v}'"))
                                })
                            })
                            .collect();
                        let cuts = cuts?;
                        if cuts.windows(2).any(|w| w[0] >= w[1]) {
                            return Err(FlapError::Schema(
                                "bin cut points must be strictly ascending".into(),
                            ));
                        }
                        spec.bin = Some(cuts);
                    } else if let Some(label) = op.strip_prefix("map.") {
                        spec.merge.push((label.to_string(), split_list(value)));
                    } else {
                        return Err(FlapError::Schema(format!(
                            "unknown sensitive refinement '{op}' for '{col}'"
                        )));
                    }
                }
                other => {
                    return Err(FlapError::Schema(format!("unknown schema key '{other}'")));
                }
            }
        }

        let decision = decision
            .ok_or_else(|| FlapError::Schema("missing 'decision' line".into()))?;
        if sensitive_order.is_empty() {
            return Err(FlapError::Schema(
                "at least one sensitive column is required".into(),
            ));
        }
        if attrs.is_empty() {
            return Err(FlapError::Schema(
                "at least one attribute column is required".into(),
            ));
        }
        let sensitive = sensitive_order
            .iter()
            .map(|c| sens[c].clone())
            .collect::<Vec<_>>();
        Ok(Self {
            decision,
            decision_positive,
            sensitive,
            attrs,
            drop,
        })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            FlapError::Schema(format!("cannot read schema file {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    /// Renders the schema back to its file form.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("decision = {}\n", self.decision));
        if let Some(p) = &self.decision_positive {
            out.push_str(&format!("decision.positive = {p}\n"));
        }
        let cols: Vec<&str> = self.sensitive.iter().map(|s| s.column.as_str()).collect();
        out.push_str(&format!("sensitive = {}\n", cols.join(", ")));
        for s in &self.sensitive {
            if let Some(keep) = &s.keep {
                out.push_str(&format!(
                    "sensitive.{}.keep = {}\n",
                    s.column,
                    keep.join(", ")
                ));
            }
            for (label, olds) in &s.merge {
                out.push_str(&format!(
                    "sensitive.{}.map.{} = {}\n",
                    s.column,
                    label,
                    olds.join(", ")
                ));
            }
            if let Some(cuts) = &s.bin {
                let txt: Vec<String> = cuts.iter().map(|c| c.to_string()).collect();
                out.push_str(&format!("sensitive.{}.bin = {}\n", s.column, txt.join(", ")));
            }
        }
        for a in &self.attrs {
            let kind = match &a.kind {
                AttrKind::Continuous => "continuous",
                AttrKind::Discrete => "discrete",
                AttrKind::Categorical { .. } => "categorical",
            };
            out.push_str(&format!("attr.{} = {kind}\n", a.column));
            if let AttrKind::Categorical {
                levels: Some(levels),
            } = &a.kind
            {
                out.push_str(&format!("attr.{}.levels = {}\n", a.column, levels.join(", ")));
            }
        }
        if !self.drop.is_empty() {
            out.push_str(&format!("drop = {}\n", self.drop.join(", ")));
        }
        out
    }
}

fn split_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect()
}
