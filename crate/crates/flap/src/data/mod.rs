//! Dataset model, CSV ingestion, and train/test splitting.
//!
//! A [`Dataset`] holds rows of (sensitive group, attribute vector, binary
//! decision) plus the group table and per-column metadata. Groups are formed
//! by crossing the schema's sensitive columns; group ids are contiguous
//! `0..K` in lexicographic label order. CSV cells equal to `?` or empty
//! (after trimming) are treated as missing and drop the row.

mod schema;

pub use schema::{AttrKind, AttrSpec, DatasetSchema, SensitiveSpec};

use crate::error::{FlapError, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::path::Path;

/// How a single attribute coordinate is typed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ColumnKind {
    Continuous,
    Discrete,
    /// Member of a one-hot block; indicators in a block sum to one per row.
    Indicator { block: usize },
}

/// Name and kind of one attribute coordinate.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub kind: ColumnKind,
}

/// One observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub group: usize,
    pub attrs: Vec<f64>,
    pub decision: u8,
}

/// Immutable decision dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    group_labels: Vec<String>,
    columns: Vec<ColumnMeta>,
    rows: Vec<Row>,
    group_counts: Vec<usize>,
}

impl Dataset {
    /// Validates and assembles a dataset. Every group must be non-empty,
    /// decisions must be 0/1, attribute vectors must share one dimension,
    /// and one-hot blocks must sum to one in every row.
    pub fn new(group_labels: Vec<String>, columns: Vec<ColumnMeta>, rows: Vec<Row>) -> Result<Self> {
        let k = group_labels.len();
        if k == 0 {
            return Err(FlapError::EmptyGroup("no sensitive groups".into()));
        }
        if rows.is_empty() {
            return Err(FlapError::Value("dataset has no rows".into()));
        }
        let d = columns.len();
        let mut counts = vec![0usize; k];
        for (i, row) in rows.iter().enumerate() {
            if row.group >= k {
                return Err(FlapError::Value(format!(
                    "row {i}: group id {} out of range (K={k})",
                    row.group
                )));
            }
            if row.attrs.len() != d {
                return Err(FlapError::Value(format!(
                    "row {i}: expected {d} attributes, got {}",
                    row.attrs.len()
                )));
            }
            if row.decision > 1 {
                return Err(FlapError::Value(format!(
                    "row {i}: decision must be 0 or 1"
                )));
            }
            if row.attrs.iter().any(|a| !a.is_finite()) {
                return Err(FlapError::Value(format!("row {i}: non-finite attribute")));
            }
            counts[row.group] += 1;
        }
        for (g, &c) in counts.iter().enumerate() {
            if c == 0 {
                return Err(FlapError::EmptyGroup(format!(
                    "group '{}' has no rows",
                    group_labels[g]
                )));
            }
        }
        // one-hot block consistency
        let mut blocks: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (j, col) in columns.iter().enumerate() {
            if let ColumnKind::Indicator { block } = col.kind {
                blocks.entry(block).or_default().push(j);
            }
        }
        for (block, js) in &blocks {
            for (i, row) in rows.iter().enumerate() {
                let mut sum = 0.0;
                for &j in js {
                    let v = row.attrs[j];
                    if v != 0.0 && v != 1.0 {
                        return Err(FlapError::Value(format!(
                            "row {i}: indicator column '{}' must be 0/1",
                            columns[j].name
                        )));
                    }
                    sum += v;
                }
                if sum != 1.0 {
                    return Err(FlapError::Value(format!(
                        "row {i}: one-hot block {block} sums to {sum}, expected 1"
                    )));
                }
            }
        }
        Ok(Self {
            group_labels,
            columns,
            rows,
            group_counts: counts,
        })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn num_groups(&self) -> usize {
        self.group_labels.len()
    }

    pub fn group_labels(&self) -> &[String] {
        &self.group_labels
    }

    pub fn columns(&self) -> &[ColumnMeta] {
        &self.columns
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn group_counts(&self) -> &[usize] {
        &self.group_counts
    }

    /// Empirical group probabilities `P_n(S = s)`.
    pub fn group_probs(&self) -> Vec<f64> {
        let n = self.n() as f64;
        self.group_counts.iter().map(|&c| c as f64 / n).collect()
    }

    /// Row indices belonging to group `s`.
    pub fn group_rows(&self, s: usize) -> Vec<usize> {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.group == s)
            .map(|(i, _)| i)
            .collect()
    }

    /// New dataset from a subset of row indices (same groups and columns).
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let rows = indices.iter().map(|&i| self.rows[i].clone()).collect();
        Dataset::new(self.group_labels.clone(), self.columns.clone(), rows)
    }

    /// Writes `group,<attrs...>,decision` with full-precision floats.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["group".to_string()];
        header.extend(self.columns.iter().map(|c| c.name.clone()));
        header.push("decision".to_string());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![self.group_labels[row.group].clone()];
            rec.extend(row.attrs.iter().map(|a| a.to_string()));
            rec.push(row.decision.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Schema that reloads the output of [`Dataset::save_csv`].
    ///
    /// Indicator columns reload as discrete (block structure is not
    /// round-tripped); values, groups, and decisions reload exactly.
    pub fn canonical_schema(&self) -> DatasetSchema {
        DatasetSchema {
            decision: "decision".into(),
            decision_positive: None,
            sensitive: vec![SensitiveSpec::plain("group")],
            attrs: self
                .columns
                .iter()
                .map(|c| AttrSpec {
                    column: c.name.clone(),
                    kind: match c.kind {
                        ColumnKind::Continuous => AttrKind::Continuous,
                        ColumnKind::Discrete | ColumnKind::Indicator { .. } => AttrKind::Discrete,
                    },
                })
                .collect(),
            drop: vec![],
        }
    }
}

/// Ingestion accounting returned by [`load_csv`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    /// Data records read (excluding the header).
    pub rows_read: usize,
    /// Rows dropped for a missing value in a used column.
    pub rows_dropped_missing: usize,
    /// Rows dropped because a categorical cell was outside the declared levels.
    pub rows_dropped_unknown_level: usize,
    /// Rows removed by sensitive keep filters (intentional selection).
    pub rows_filtered: usize,
}

impl IngestReport {
    /// Rows lost to data problems (missing values, undeclared levels).
    pub fn dropped(&self) -> usize {
        self.rows_dropped_missing + self.rows_dropped_unknown_level
    }
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell == "?"
}

/// Loads a decision CSV according to `schema`.
pub fn load_csv(path: &Path, schema: &DatasetSchema) -> Result<(Dataset, IngestReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let col_index = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| FlapError::Schema(format!("column '{name}' not found in CSV header")))
    };

    let decision_idx = col_index(&schema.decision)?;
    let sens_idx: Vec<usize> = schema
        .sensitive
        .iter()
        .map(|s| col_index(&s.column))
        .collect::<Result<_>>()?;
    let attr_idx: Vec<usize> = schema
        .attrs
        .iter()
        .map(|a| col_index(&a.column))
        .collect::<Result<_>>()?;
    for d in &schema.drop {
        col_index(d)?; // validate documentation-only drops too
    }

    let mut report = IngestReport::default();
    let mut kept: Vec<(Vec<String>, Vec<String>, u8)> = Vec::new(); // (sens labels, attr cells, y)
    let mut positive_seen = false;

    for record in reader.records() {
        let record = record?;
        report.rows_read += 1;
        let used_missing = std::iter::once(decision_idx)
            .chain(sens_idx.iter().copied())
            .chain(attr_idx.iter().copied())
            .any(|i| is_missing(record.get(i).unwrap_or("")));
        if used_missing {
            report.rows_dropped_missing += 1;
            continue;
        }

        // sensitive labels, keep filter first
        let mut labels = Vec::with_capacity(sens_idx.len());
        let mut filtered = false;
        for (spec, &idx) in schema.sensitive.iter().zip(&sens_idx) {
            match spec.level_of(record.get(idx).unwrap())? {
                Some(label) => labels.push(label),
                None => {
                    filtered = true;
                    break;
                }
            }
        }
        if filtered {
            report.rows_filtered += 1;
            continue;
        }

        // decision coding
        let cell = record.get(decision_idx).unwrap();
        let y = match &schema.decision_positive {
            Some(pos) => {
                if cell == pos {
                    positive_seen = true;
                    1
                } else {
                    0
                }
            }
            None => match cell.parse::<f64>() {
                Ok(v) if v == 0.0 => 0,
                Ok(v) if v == 1.0 => 1,
                _ => {
                    return Err(FlapError::Value(format!(
                        "decision column '{}' is not binary-codable: value '{cell}' (declare decision.positive)",
                        schema.decision
                    )))
                }
            },
        };

        let cells: Vec<String> = attr_idx
            .iter()
            .map(|&i| record.get(i).unwrap().to_string())
            .collect();
        kept.push((labels, cells, y));
    }

    if schema.decision_positive.is_some() && !positive_seen && !kept.is_empty() {
        return Err(FlapError::Value(format!(
            "decision column '{}' never takes the declared positive value '{}'",
            schema.decision,
            schema.decision_positive.as_ref().unwrap()
        )));
    }

    // categorical level tables (explicit or observed, sorted)
    let mut level_tables: Vec<Option<Vec<String>>> = Vec::with_capacity(schema.attrs.len());
    for (a, attr) in schema.attrs.iter().enumerate() {
        match &attr.kind {
            AttrKind::Categorical { levels: Some(l) } => level_tables.push(Some(l.clone())),
            AttrKind::Categorical { levels: None } => {
                let mut observed: Vec<String> = Vec::new();
                for (_, cells, _) in &kept {
                    if !observed.contains(&cells[a]) {
                        observed.push(cells[a].clone());
                    }
                }
                observed.sort();
                level_tables.push(Some(observed));
            }
            _ => level_tables.push(None),
        }
    }

    // drop rows whose categorical value is outside an explicit level list
    let mut encodable: Vec<&(Vec<String>, Vec<String>, u8)> = Vec::new();
    'rows: for row in &kept {
        for (a, attr) in schema.attrs.iter().enumerate() {
            if matches!(attr.kind, AttrKind::Categorical { levels: Some(_) })
                && !level_tables[a].as_ref().unwrap().contains(&row.1[a])
            {
                report.rows_dropped_unknown_level += 1;
                continue 'rows;
            }
        }
        encodable.push(row);
    }

    // group table: lexicographically sorted crossed labels
    let mut group_labels: Vec<String> = encodable
        .iter()
        .map(|(labels, _, _)| labels.join("|"))
        .collect();
    group_labels.sort();
    group_labels.dedup();

    // expected-group check when keep lists pin the level sets
    let expected_sets: Vec<Option<Vec<String>>> = schema
        .sensitive
        .iter()
        .map(|s| s.expected_levels())
        .collect();
    if expected_sets.iter().any(|e| e.is_some()) {
        let observed_per_col: Vec<Vec<String>> = (0..schema.sensitive.len())
            .map(|c| {
                let mut v: Vec<String> = encodable.iter().map(|(l, _, _)| l[c].clone()).collect();
                v.sort();
                v.dedup();
                v
            })
            .collect();
        let sets: Vec<Vec<String>> = expected_sets
            .into_iter()
            .zip(observed_per_col)
            .map(|(e, o)| e.unwrap_or(o))
            .collect();
        let mut combos: Vec<String> = vec![String::new()];
        for set in &sets {
            let mut next = Vec::new();
            for prefix in &combos {
                for level in set {
                    next.push(if prefix.is_empty() {
                        level.clone()
                    } else {
                        format!("{prefix}|{level}")
                    });
                }
            }
            combos = next;
        }
        for combo in combos {
            if !group_labels.contains(&combo) {
                return Err(FlapError::EmptyGroup(format!(
                    "group '{combo}' has no rows after filtering"
                )));
            }
        }
    }

    // column metadata
    let mut columns: Vec<ColumnMeta> = Vec::new();
    let mut block_id = 0usize;
    for (a, attr) in schema.attrs.iter().enumerate() {
        match &attr.kind {
            AttrKind::Continuous => columns.push(ColumnMeta {
                name: attr.column.clone(),
                kind: ColumnKind::Continuous,
            }),
            AttrKind::Discrete => columns.push(ColumnMeta {
                name: attr.column.clone(),
                kind: ColumnKind::Discrete,
            }),
            AttrKind::Categorical { .. } => {
                for level in level_tables[a].as_ref().unwrap() {
                    columns.push(ColumnMeta {
                        name: format!("{}:{level}", attr.column),
                        kind: ColumnKind::Indicator { block: block_id },
                    });
                }
                block_id += 1;
            }
        }
    }

    // encode rows
    let mut rows: Vec<Row> = Vec::with_capacity(encodable.len());
    for (labels, cells, y) in encodable {
        let group_label = labels.join("|");
        let group = group_labels.binary_search(&group_label).unwrap();
        let mut attrs: Vec<f64> = Vec::with_capacity(columns.len());
        for (a, attr) in schema.attrs.iter().enumerate() {
            match &attr.kind {
                AttrKind::Continuous | AttrKind::Discrete => {
                    let v: f64 = cells[a].parse().map_err(|_| {
                        FlapError::Value(format!(
                            "column '{}': cannot parse numeric value '{}'",
                            attr.column, cells[a]
                        ))
                    })?;
                    attrs.push(v);
                }
                AttrKind::Categorical { .. } => {
                    for level in level_tables[a].as_ref().unwrap() {
                        attrs.push(if &cells[a] == level { 1.0 } else { 0.0 });
                    }
                }
            }
        }
        rows.push(Row {
            group,
            attrs,
            decision: *y,
        });
    }

    let dataset = Dataset::new(group_labels, columns, rows)?;
    Ok((dataset, report))
}

/// Deterministic disjoint split into `(train, test)` with `test_n` test rows.
///
/// Both parts must contain every group; otherwise an empty-group error is
/// returned and the caller should merge groups or re-seed.
pub fn split(data: &Dataset, test_n: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    let n = data.n();
    if test_n == 0 || test_n >= n {
        return Err(FlapError::Value(format!(
            "test_n must be in (0, {n}), got {test_n}"
        )));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let mut test_idx: Vec<usize> = indices[..test_n].to_vec();
    let mut train_idx: Vec<usize> = indices[test_n..].to_vec();
    test_idx.sort_unstable();
    train_idx.sort_unstable();
    let train = data.subset(&train_idx)?;
    let test = data.subset(&test_idx)?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;
    use tempfile::NamedTempFile;

    fn write_csv(content: &str) -> NamedTempFile {
        let mut f = NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    fn toy_schema() -> DatasetSchema {
        DatasetSchema::parse("decision = y\nsensitive = s\nattr.a = continuous\n").unwrap()
    }

    #[test]
    fn loads_simple_csv() {
        let f = write_csv("s,a,y\n0,1.5,1\n1,2.5,0\n0,3.5,1\n");
        let (data, report) = load_csv(f.path(), &toy_schema()).unwrap();
        assert_eq!(data.n(), 3);
        assert_eq!(data.num_groups(), 2);
        assert_eq!(report.rows_read, 3);
        assert_eq!(report.dropped(), 0);
        assert_eq!(data.group_counts(), &[2, 1]);
    }

    #[test]
    fn drops_rows_with_missing_values() {
        let f = write_csv("s,a,y\n0,1.5,1\n1,?,0\n1,3.5,1\n");
        let (data, report) = load_csv(f.path(), &toy_schema()).unwrap();
        assert_eq!(data.n(), 2);
        assert_eq!(report.dropped(), 1);
        assert_eq!(report.rows_dropped_missing, 1);
    }

    #[test]
    fn missing_column_is_schema_error() {
        let f = write_csv("s,b,y\n0,1.5,1\n");
        let err = load_csv(f.path(), &toy_schema()).unwrap_err();
        assert!(matches!(err, FlapError::Schema(_)));
    }

    #[test]
    fn non_binary_decision_is_value_error() {
        let f = write_csv("s,a,y\n0,1.5,2\n1,2.0,1\n");
        let err = load_csv(f.path(), &toy_schema()).unwrap_err();
        assert!(matches!(err, FlapError::Value(_)));
    }

    #[test]
    fn positive_label_codes_decision() {
        let schema = DatasetSchema::parse(
            "decision = y\ndecision.positive = yes\nsensitive = s\nattr.a = continuous\n",
        )
        .unwrap();
        let f = write_csv("s,a,y\n0,1.0,yes\n1,2.0,no\n");
        let (data, _) = load_csv(f.path(), &schema).unwrap();
        let ys: Vec<u8> = data.rows().iter().map(|r| r.decision).collect();
        assert_eq!(ys, vec![1, 0]);
    }

    #[test]
    fn unobserved_positive_label_is_value_error() {
        let schema = DatasetSchema::parse(
            "decision = y\ndecision.positive = maybe\nsensitive = s\nattr.a = continuous\n",
        )
        .unwrap();
        let f = write_csv("s,a,y\n0,1.0,yes\n1,2.0,no\n");
        assert!(matches!(
            load_csv(f.path(), &schema).unwrap_err(),
            FlapError::Value(_)
        ));
    }

    #[test]
    fn one_hot_blocks_sum_to_one() {
        let schema = DatasetSchema::parse(
            "decision = y\nsensitive = s\nattr.c = categorical\nattr.a = continuous\n",
        )
        .unwrap();
        let f = write_csv("s,c,a,y\n0,red,1.0,1\n1,blue,2.0,0\n0,red,3.0,1\n");
        let (data, _) = load_csv(f.path(), &schema).unwrap();
        assert_eq!(data.dim(), 3); // blue, red indicators + a
        assert_eq!(data.columns()[0].name, "c:blue");
        for row in data.rows() {
            let s: f64 = row.attrs[..2].iter().sum();
            assert_eq!(s, 1.0);
        }
    }

    #[test]
    fn keep_filter_crosses_groups_and_detects_empty() {
        let schema = DatasetSchema::parse(
            "decision = y\nsensitive = s\nsensitive.s.keep = a, b\nattr.x = continuous\n",
        )
        .unwrap();
        let f = write_csv("s,x,y\na,1.0,1\nc,2.0,0\na,3.0,0\n");
        // 'b' never observed -> empty group error
        assert!(matches!(
            load_csv(f.path(), &schema).unwrap_err(),
            FlapError::EmptyGroup(_)
        ));
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let f = write_csv(
            "s,a,y\n0,1,1\n0,2,0\n0,3,1\n0,4,0\n0,5,1\n1,6,0\n1,7,1\n1,8,0\n1,9,1\n1,10,0\n",
        );
        let (data, _) = load_csv(f.path(), &toy_schema()).unwrap();
        let (train, test) = split(&data, 3, 7).unwrap();
        assert_eq!((train.n(), test.n()), (7, 3));
        // union reconstructs input exactly
        let mut all: Vec<&Row> = train.rows().iter().chain(test.rows()).collect();
        all.sort_by(|a, b| a.attrs[0].partial_cmp(&b.attrs[0]).unwrap());
        let orig: Vec<&Row> = data.rows().iter().collect();
        assert_eq!(all.len(), orig.len());
        for (x, y) in all.iter().zip(orig.iter()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn split_is_deterministic() {
        let f = write_csv(
            "s,a,y\n0,1,1\n0,2,0\n0,3,1\n0,4,0\n0,5,1\n1,6,0\n1,7,1\n1,8,0\n1,9,1\n1,10,0\n",
        );
        let (data, _) = load_csv(f.path(), &toy_schema()).unwrap();
        let (tr1, te1) = split(&data, 3, 7).unwrap();
        let (tr2, te2) = split(&data, 3, 7).unwrap();
        assert_eq!(tr1, tr2);
        assert_eq!(te1, te2);
    }

    #[test]
    fn split_rejects_emptied_group() {
        let f = write_csv("s,a,y\n0,1,1\n0,2,0\n0,3,1\n0,4,0\n1,5,1\n");
        let (data, _) = load_csv(f.path(), &toy_schema()).unwrap();
        // test_n = n-1 leaves one training row; the single-row group 1 must
        // be missing from one side whatever the seed
        assert!(matches!(
            split(&data, 4, 0).unwrap_err(),
            FlapError::EmptyGroup(_)
        ));
    }

    #[test]
    fn csv_round_trip_preserves_rows() {
        let f = write_csv("s,a,y\n0,1.25,1\n1,2.5,0\n0,0.1,1\n");
        let (data, _) = load_csv(f.path(), &toy_schema()).unwrap();
        let out = NamedTempFile::new().unwrap();
        data.save_csv(out.path()).unwrap();
        let (again, _) = load_csv(out.path(), &data.canonical_schema()).unwrap();
        assert_eq!(data.rows(), again.rows());
        assert_eq!(data.group_labels(), again.group_labels());
    }

    #[test]
    fn group_counts_sum_to_n() {
        let f = write_csv(
            "s,a,y\n0,1,1\n0,2,0\n0,3,1\n0,4,0\n0,5,1\n1,6,0\n1,7,1\n1,8,0\n1,9,1\n1,10,0\n",
        );
        let (data, _) = load_csv(f.path(), &toy_schema()).unwrap();
        assert_eq!(data.group_counts().iter().sum::<usize>(), data.n());
        let (train, test) = split(&data, 4, 3).unwrap();
        assert_eq!(train.group_counts().iter().sum::<usize>(), train.n());
        assert_eq!(test.group_counts().iter().sum::<usize>(), test.n());
    }
}
