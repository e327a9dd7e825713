//! Labeled feature-vector datasets: loading (generic CSV and the UCI Monk
//! layout), symbolic encoding, and train/test partitions.
//!
//! Symbolic attributes are encoded as ordinal integer codes and afterwards
//! treated exactly like continuous values by every distance function.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Code table for one symbolic-ordinal feature. `symbols[j]` encodes to `codes[j]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SymbolTable {
    symbols: Vec<String>,
    codes: Vec<i64>,
}

impl SymbolTable {
    /// Table whose symbols are the decimal integers of `domain`, each
    /// encoding to itself (the Monk attribute convention).
    pub fn native(domain: impl IntoIterator<Item = i64>) -> Self {
        let codes: Vec<i64> = domain.into_iter().collect();
        let symbols = codes.iter().map(|c| c.to_string()).collect();
        SymbolTable { symbols, codes }
    }

    /// First-occurrence table: the first distinct symbol gets code 0, the next 1, ...
    pub fn fit<S: AsRef<str>>(raw: &[S]) -> Self {
        let mut table = SymbolTable::default();
        for s in raw {
            let s = s.as_ref();
            if table.code_of(s).is_none() {
                let code = table.symbols.len() as i64;
                table.symbols.push(s.to_string());
                table.codes.push(code);
            }
        }
        table
    }

    pub fn code_of(&self, symbol: &str) -> Option<i64> {
        self.symbols
            .iter()
            .position(|s| s == symbol)
            .map(|j| self.codes[j])
    }

    pub fn symbol_of(&self, code: i64) -> Option<&str> {
        self.codes
            .iter()
            .position(|&c| c == code)
            .map(|j| self.symbols[j].as_str())
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

/// Encode one column of raw symbols.
///
/// Without a table the codes follow first-occurrence order of `raw` (use this
/// on the training partition). With a table the codes are looked up verbatim
/// and a symbol missing from it is an [`Error::UnknownSymbol`].
pub fn encode_symbolic<S: AsRef<str>>(
    feature: &str,
    raw: &[S],
    table: Option<&SymbolTable>,
) -> Result<(Vec<i64>, SymbolTable)> {
    let table = match table {
        Some(t) => t.clone(),
        None => SymbolTable::fit(raw),
    };
    let codes = raw
        .iter()
        .map(|s| {
            table.code_of(s.as_ref()).ok_or_else(|| Error::UnknownSymbol {
                feature: feature.to_string(),
                symbol: s.as_ref().to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((codes, table))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "codes")]
pub enum FeatureKind {
    Continuous,
    SymbolicOrdinal(SymbolTable),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    pub index: usize,
}

impl FeatureSpec {
    pub fn continuous(name: impl Into<String>, index: usize) -> Self {
        FeatureSpec {
            name: name.into(),
            kind: FeatureKind::Continuous,
            index,
        }
    }

    pub fn is_symbolic(&self) -> bool {
        matches!(self.kind, FeatureKind::SymbolicOrdinal(_))
    }
}

/// An immutable set of `n` labeled vectors over `N` numeric features.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Vec<FeatureSpec>,
    values: Vec<f64>,
    labels: Vec<usize>,
    class_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: Vec<FeatureSpec>,
        vectors: Vec<Vec<f64>>,
        labels: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let n_features = features.len();
        if n_features == 0 {
            return Err(Error::InvalidDataset("no features".into()));
        }
        for (i, f) in features.iter().enumerate() {
            if f.index != i {
                return Err(Error::InvalidDataset(format!(
                    "feature `{}` has index {}, expected {i}",
                    f.name, f.index
                )));
            }
            if let FeatureKind::SymbolicOrdinal(t) = &f.kind {
                if t.is_empty() {
                    return Err(Error::InvalidDataset(format!(
                        "symbolic feature `{}` has an empty code domain",
                        f.name
                    )));
                }
            }
        }
        if class_names.len() < 2 {
            return Err(Error::InvalidDataset(format!(
                "need at least 2 classes, found {}",
                class_names.len()
            )));
        }
        if vectors.is_empty() {
            return Err(Error::InvalidDataset("no vectors".into()));
        }
        if vectors.len() != labels.len() {
            return Err(Error::LengthMismatch {
                expected: vectors.len(),
                found: labels.len(),
            });
        }
        let mut values = Vec::with_capacity(vectors.len() * n_features);
        for (row, v) in vectors.iter().enumerate() {
            if v.len() != n_features {
                return Err(Error::Ragged {
                    row,
                    expected: n_features,
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite);
            }
            values.extend_from_slice(v);
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::InvalidDataset(format!(
                "label {bad} out of range for {} classes",
                class_names.len()
            )));
        }
        Ok(Dataset {
            features,
            values,
            labels,
            class_names,
        })
    }

    /// Number of vectors.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, row: usize) -> usize {
        self.labels[row]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let n = self.features.len();
        &self.values[row * n..(row + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.features.len())
    }

    /// Per-class vector counts.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Same schema and class names, so models trained on one apply to the other.
    pub fn same_schema(&self, other: &Dataset) -> bool {
        self.features == other.features && self.class_names == other.class_names
    }

    /// Rows `range` as a new dataset sharing this schema.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Dataset> {
        if range.end > self.len() || range.is_empty() {
            return Err(Error::InvalidDataset(format!(
                "row range {range:?} outside 0..{}",
                self.len()
            )));
        }
        self.select_rows(range)
    }

    pub fn select_rows(&self, rows: impl IntoIterator<Item = usize>) -> Result<Dataset> {
        let mut vectors = Vec::new();
        let mut labels = Vec::new();
        for r in rows {
            if r >= self.len() {
                return Err(Error::InvalidDataset(format!("row {r} out of range")));
            }
            vectors.push(self.row(r).to_vec());
            labels.push(self.labels[r]);
        }
        Dataset::new(
            self.features.clone(),
            vectors,
            labels,
            self.class_names.clone(),
        )
    }

    /// Split by explicit row counts: the first `n_train` rows train, the next
    /// `n_test` rows test. Rows past `n_train + n_test` are left unused and
    /// counted in the returned [`Split`].
    pub fn split(&self, n_train: usize, n_test: usize) -> Result<Split> {
        let used = n_train + n_test;
        if n_train == 0 || n_test == 0 || used > self.len() {
            return Err(Error::InvalidDataset(format!(
                "cannot split {} rows into {n_train} train + {n_test} test",
                self.len()
            )));
        }
        Ok(Split {
            partition: Partition::new(self.slice(0..n_train)?, self.slice(n_train..used)?)?,
            unused: self.len() - used,
        })
    }

    /// Split by a file holding one token per row of this dataset: `train`,
    /// `test`, or `-` to skip the row.
    pub fn split_by_file(&self, path: impl AsRef<Path>) -> Result<Split> {
        let path = path.as_ref();
        let text = read(path)?;
        let tokens: Vec<&str> = text.split_whitespace().collect();
        if tokens.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                found: tokens.len(),
            });
        }
        let (mut train, mut test, mut unused) = (Vec::new(), Vec::new(), 0);
        for (row, t) in tokens.iter().enumerate() {
            match *t {
                "train" => train.push(row),
                "test" => test.push(row),
                "-" => unused += 1,
                other => {
                    return Err(Error::Parse {
                        row: row + 1,
                        column: 1,
                        message: format!("expected train, test or -, found `{other}`"),
                    })
                }
            }
        }
        Ok(Split {
            partition: Partition::new(self.select_rows(train)?, self.select_rows(test)?)?,
            unused,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    pub train: Dataset,
    pub test: Dataset,
}

impl Partition {
    pub fn new(train: Dataset, test: Dataset) -> Result<Self> {
        if !train.same_schema(&test) {
            return Err(Error::SchemaMismatch(
                "train and test differ in features or class names".into(),
            ));
        }
        Ok(Partition { train, test })
    }

    /// Min-max rescale every feature to [0, 1] using the training ranges.
    /// Constant training features map to 0. Not used by any reproduction run.
    pub fn rescaled_min_max(&self) -> Result<Partition> {
        let n = self.train.n_features();
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        for row in self.train.rows() {
            for (j, &x) in row.iter().enumerate() {
                lo[j] = lo[j].min(x);
                hi[j] = hi[j].max(x);
            }
        }
        let scale = |d: &Dataset| {
            let vectors = d
                .rows()
                .map(|row| {
                    row.iter()
                        .enumerate()
                        .map(|(j, &x)| {
                            let span = hi[j] - lo[j];
                            if span > 0.0 {
                                (x - lo[j]) / span
                            } else {
                                0.0
                            }
                        })
                        .collect()
                })
                .collect();
            let features = d
                .features()
                .iter()
                .map(|f| FeatureSpec::continuous(f.name.clone(), f.index))
                .collect();
            Dataset::new(features, vectors, d.labels.clone(), d.class_names.clone())
        };
        Partition::new(scale(&self.train)?, scale(&self.test)?)
    }
}

/// A partition cut from a single file, with the count of rows left out.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub partition: Partition,
    pub unused: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
    Last,
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "last" => LabelColumn::Last,
            _ => match s.parse::<usize>() {
                Ok(i) => LabelColumn::Index(i),
                Err(_) => LabelColumn::Name(s.to_string()),
            },
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KindHint {
    Continuous,
    Symbolic,
}

#[derive(Clone, Debug)]
pub struct CsvOptions {
    pub label: LabelColumn,
    pub has_header: bool,
    /// Per-column kind overrides keyed by feature name.
    pub kinds: HashMap<String, KindHint>,
    /// Full schema to encode against (test files, round trips). When set,
    /// `kinds` is ignored and symbols must already be in the schema's tables.
    pub schema: Option<Vec<FeatureSpec>>,
    /// Predeclared class order; otherwise classes follow first occurrence.
    pub class_names: Option<Vec<String>>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            label: LabelColumn::Last,
            has_header: false,
            kinds: HashMap::new(),
            schema: None,
            class_names: None,
        }
    }
}

impl CsvOptions {
    /// Options that encode a file against an existing dataset's schema and classes.
    pub fn matching(reference: &Dataset) -> Self {
        CsvOptions {
            schema: Some(reference.features.clone()),
            class_names: Some(reference.class_names.clone()),
            ..CsvOptions::default()
        }
    }

    pub fn with_header(mut self, has_header: bool) -> Self {
        self.has_header = has_header;
        self
    }

    pub fn with_label(mut self, label: LabelColumn) -> Self {
        self.label = label;
        self
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Load a comma-separated file. Rows and columns in errors are 1-based file positions.
pub fn load_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<Dataset> {
    parse_csv(&read(path.as_ref())?, options)
}

pub fn parse_csv(text: &str, options: &CsvOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut records: Vec<(usize, Vec<String>)> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            row: i + 1,
            column: 0,
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        records.push((line, rec.iter().map(str::to_string).collect()));
    }
    let header = if options.has_header && !records.is_empty() {
        Some(records.remove(0).1)
    } else {
        None
    };
    let width = header
        .as_ref()
        .map(Vec::len)
        .or_else(|| records.first().map(|r| r.1.len()))
        .ok_or_else(|| Error::InvalidDataset("empty file".into()))?;
    for (line, rec) in &records {
        if rec.len() != width {
            return Err(Error::Ragged {
                row: *line,
                expected: width,
                found: rec.len(),
            });
        }
    }
    if width < 2 {
        return Err(Error::InvalidDataset(
            "need at least one feature column and a label column".into(),
        ));
    }

    let label_col = match &options.label {
        LabelColumn::Last => width - 1,
        LabelColumn::Index(i) if *i < width => *i,
        LabelColumn::Index(i) => return Err(Error::UnknownLabelColumn(i.to_string())),
        LabelColumn::Name(name) => header
            .as_ref()
            .and_then(|h| h.iter().position(|c| c == name))
            .ok_or_else(|| Error::UnknownLabelColumn(name.clone()))?,
    };
    let columns: Vec<usize> = (0..width).filter(|&c| c != label_col).collect();
    let names: Vec<String> = columns
        .iter()
        .map(|&c| match &header {
            Some(h) => h[c].clone(),
            None => format!("x{c}"),
        })
        .collect();

    let mut vectors = vec![Vec::with_capacity(columns.len()); records.len()];
    let mut features = Vec::with_capacity(columns.len());
    for (j, &c) in columns.iter().enumerate() {
        let cells: Vec<&str> = records.iter().map(|(_, r)| r[c].as_str()).collect();
        let declared = options.schema.as_ref().map(|s| s.get(j)).map(|f| {
            f.cloned().ok_or_else(|| {
                Error::SchemaMismatch(format!(
                    "file has {} feature columns, schema has {}",
                    columns.len(),
                    options.schema.as_ref().map_or(0, Vec::len)
                ))
            })
        });
        let spec = match declared {
            Some(spec) => spec?,
            None => {
                let symbolic = match options.kinds.get(&names[j]) {
                    Some(KindHint::Symbolic) => true,
                    Some(KindHint::Continuous) => false,
                    None => cells.iter().any(|s| parse_finite(s).is_none()),
                };
                FeatureSpec {
                    name: names[j].clone(),
                    kind: if symbolic {
                        FeatureKind::SymbolicOrdinal(SymbolTable::fit(&cells))
                    } else {
                        FeatureKind::Continuous
                    },
                    index: j,
                }
            }
        };
        match &spec.kind {
            FeatureKind::Continuous => {
                for (r, cell) in cells.iter().enumerate() {
                    let x = parse_finite(cell).ok_or_else(|| Error::Parse {
                        row: records[r].0,
                        column: c + 1,
                        message: format!("`{cell}` is not a finite number"),
                    })?;
                    vectors[r].push(x);
                }
            }
            FeatureKind::SymbolicOrdinal(table) => {
                let (codes, _) = encode_symbolic(&spec.name, &cells, Some(table))?;
                for (r, code) in codes.into_iter().enumerate() {
                    vectors[r].push(code as f64);
                }
            }
        }
        features.push(spec);
    }
    if options.schema.as_ref().is_some_and(|s| s.len() != columns.len()) {
        return Err(Error::SchemaMismatch(format!(
            "file has {} feature columns, schema has {}",
            columns.len(),
            options.schema.as_ref().map_or(0, Vec::len)
        )));
    }

    let raw_labels: Vec<&str> = records.iter().map(|(_, r)| r[label_col].as_str()).collect();
    let (labels, class_names) = encode_labels(&raw_labels, options.class_names.as_deref())?;
    Dataset::new(features, vectors, labels, class_names)
}

fn parse_finite(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|x| x.is_finite())
}

fn encode_labels(raw: &[&str], declared: Option<&[String]>) -> Result<(Vec<usize>, Vec<String>)> {
    let mut names: Vec<String> = declared.map(<[String]>::to_vec).unwrap_or_default();
    let mut labels = Vec::with_capacity(raw.len());
    for &s in raw {
        let idx = match names.iter().position(|n| n == s) {
            Some(i) => i,
            None if declared.is_some() => return Err(Error::UnknownClass(s.to_string())),
            None => {
                names.push(s.to_string());
                names.len() - 1
            }
        };
        labels.push(idx);
    }
    Ok((labels, names))
}

/// Write `data` as CSV: optional header, features in order, label last.
/// Symbolic features are written as their symbols.
pub fn write_csv(data: &Dataset, path: impl AsRef<Path>, header: bool) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_csv_string(data, header)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn to_csv_string(data: &Dataset, header: bool) -> String {
    let mut out = String::new();
    if header {
        for f in data.features() {
            out.push_str(&f.name);
            out.push(',');
        }
        out.push_str("class\n");
    }
    for (r, row) in data.rows().enumerate() {
        for (f, &x) in data.features().iter().zip(row) {
            match &f.kind {
                FeatureKind::Continuous => write!(out, "{x:?},").unwrap(),
                FeatureKind::SymbolicOrdinal(t) => {
                    let sym = t.symbol_of(x as i64).unwrap_or("?");
                    write!(out, "{sym},").unwrap();
                }
            }
        }
        out.push_str(&data.class_names()[data.label(r)]);
        out.push('\n');
    }
    out
}

/// Attribute domains of the six Monk attributes.
const MONK_DOMAINS: [i64; 6] = [3, 3, 2, 3, 4, 2];

/// Load a file in the UCI Monk layout: `class a1 .. a6 id` per line.
///
/// Attributes keep their native integer codes; class indices equal the
/// native class value (0 or 1).
pub fn load_monks(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_monks(&read(path.as_ref())?)
}

pub fn parse_monks(text: &str) -> Result<Dataset> {
    let mut vectors = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        let malformed = |message: String| Error::MalformedMonkLine {
            line: i + 1,
            message,
        };
        if tokens.len() != 8 {
            return Err(malformed(format!("expected 8 tokens, found {}", tokens.len())));
        }
        let class: usize = match tokens[0] {
            "0" => 0,
            "1" => 1,
            other => return Err(malformed(format!("class must be 0 or 1, found `{other}`"))),
        };
        let mut v = Vec::with_capacity(6);
        for (a, tok) in tokens[1..7].iter().enumerate() {
            let x: i64 = tok
                .parse()
                .map_err(|_| malformed(format!("attribute {} is not an integer: `{tok}`", a + 1)))?;
            if !(1..=MONK_DOMAINS[a]).contains(&x) {
                return Err(malformed(format!(
                    "attribute {} = {x} outside 1..={}",
                    a + 1,
                    MONK_DOMAINS[a]
                )));
            }
            v.push(x as f64);
        }
        vectors.push(v);
        labels.push(class);
    }
    let features = MONK_DOMAINS
        .iter()
        .enumerate()
        .map(|(j, &d)| FeatureSpec {
            name: format!("a{}", j + 1),
            kind: FeatureKind::SymbolicOrdinal(SymbolTable::native(1..=d)),
            index: j,
        })
        .collect();
    Dataset::new(features, vectors, labels, vec!["0".into(), "1".into()])
}
