//! Datasets, recipe-driven CSV ingestion, the columnar interchange format and
//! seeded train/test splitting.
//!
//! Labels live in `{-1, +1}` ([`Label`]) and the sensitive attribute in
//! `{0, 1}` ([`Group`]). A dataset may also carry the latent clean labels `z`
//! for simulation studies; bias injection only ever touches `y`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Binary class label in the `{-1, +1}` sample space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Neg,
    Pos,
}

impl Label {
    pub fn from_sign(v: i64) -> Option<Self> {
        match v {
            1 => Some(Label::Pos),
            -1 => Some(Label::Neg),
            _ => None,
        }
    }

    pub fn sign(self) -> i8 {
        match self {
            Label::Pos => 1,
            Label::Neg => -1,
        }
    }

    pub fn is_pos(self) -> bool {
        self == Label::Pos
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::Pos => Label::Neg,
            Label::Neg => Label::Pos,
        }
    }

    /// `{0, 1}` encoding used by the cross-entropy loss.
    pub fn as_binary(self) -> f64 {
        match self {
            Label::Pos => 1.0,
            Label::Neg => 0.0,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.sign())
    }
}

/// Value of the binary sensitive attribute. Serializes as `0` or `1`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Group {
    #[default]
    Zero,
    One,
}

impl TryFrom<u8> for Group {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        Group::from_index(v as i64).ok_or_else(|| format!("group must be 0 or 1, got {v}"))
    }
}

impl From<Group> for u8 {
    fn from(g: Group) -> u8 {
        g.index() as u8
    }
}

impl Group {
    pub const ALL: [Group; 2] = [Group::Zero, Group::One];

    pub fn from_index(v: i64) -> Option<Self> {
        match v {
            0 => Some(Group::Zero),
            1 => Some(Group::One),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Group::Zero => 0,
            Group::One => 1,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Group::Zero => Group::One,
            Group::One => Group::Zero,
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

/// Where a dataset came from and what was done to it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub recipe: String,
    /// `(operation, seed)` pairs in application order.
    pub seeds: Vec<(String, u64)>,
    pub notes: Vec<String>,
}

/// Rows of `(x, y, a)` with optional clean labels `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n_features: usize,
    features: Vec<f64>,
    y: Vec<Label>,
    a: Vec<Group>,
    z: Option<Vec<Label>>,
    feature_names: Vec<String>,
    /// Columns that take part in z-score standardization.
    numeric: Vec<bool>,
    pub provenance: Provenance,
}

impl Dataset {
    /// Builds a dataset from row-major features. All feature columns are
    /// treated as non-standardizable; use [`Dataset::with_numeric_columns`]
    /// to mark the ones that are.
    pub fn new(
        n_features: usize,
        features: Vec<f64>,
        y: Vec<Label>,
        a: Vec<Group>,
        z: Option<Vec<Label>>,
    ) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::Shape("dataset needs at least one feature".into()));
        }
        let n = y.len();
        if features.len() != n * n_features {
            return Err(Error::Shape(format!(
                "{} feature values for {n} rows of width {n_features}",
                features.len()
            )));
        }
        if a.len() != n {
            return Err(Error::Shape(format!("{} group ids for {n} rows", a.len())));
        }
        if let Some(z) = &z {
            if z.len() != n {
                return Err(Error::Shape(format!("{} clean labels for {n} rows", z.len())));
            }
        }
        if let Some(v) = features.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite feature value {v}")));
        }
        let feature_names = (0..n_features).map(|j| format!("feature_{j}")).collect();
        Ok(Dataset {
            n_features,
            features,
            y,
            a,
            z,
            feature_names,
            numeric: vec![false; n_features],
            provenance: Provenance::default(),
        })
    }

    pub fn from_rows(
        rows: &[Vec<f64>],
        y: Vec<Label>,
        a: Vec<Group>,
        z: Option<Vec<Label>>,
    ) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Shape("ragged feature rows".into()));
        }
        Self::new(d, rows.concat(), y, a, z)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_features {
            return Err(Error::Shape(format!(
                "{} names for {} features",
                names.len(),
                self.n_features
            )));
        }
        self.feature_names = names;
        Ok(self)
    }

    pub fn with_numeric_columns(mut self, numeric: Vec<bool>) -> Result<Self> {
        if numeric.len() != self.n_features {
            return Err(Error::Shape(format!(
                "{} numeric flags for {} features",
                numeric.len(),
                self.n_features
            )));
        }
        self.numeric = numeric;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn y(&self) -> &[Label] {
        &self.y
    }

    pub fn a(&self) -> &[Group] {
        &self.a
    }

    pub fn z(&self) -> Option<&[Label]> {
        self.z.as_deref()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn numeric_columns(&self) -> &[bool] {
        &self.numeric
    }

    pub fn group_count(&self, g: Group) -> usize {
        self.a.iter().filter(|&&a| a == g).count()
    }

    /// Rows at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            n_features: self.n_features,
            features,
            y: indices.iter().map(|&i| self.y[i]).collect(),
            a: indices.iter().map(|&i| self.a[i]).collect(),
            z: self
                .z
                .as_ref()
                .map(|z| indices.iter().map(|&i| z[i]).collect()),
            feature_names: self.feature_names.clone(),
            numeric: self.numeric.clone(),
            provenance: self.provenance.clone(),
        }
    }

    /// Replaces the observed labels.
    pub fn with_labels(mut self, y: Vec<Label>) -> Result<Self> {
        if y.len() != self.len() {
            return Err(Error::Shape(format!("{} labels for {} rows", y.len(), self.len())));
        }
        self.y = y;
        Ok(self)
    }

    pub fn with_clean_labels(mut self, z: Option<Vec<Label>>) -> Result<Self> {
        if let Some(z) = &z {
            if z.len() != self.len() {
                return Err(Error::Shape(format!("{} clean labels for {} rows", z.len(), self.len())));
            }
        }
        self.z = z;
        Ok(self)
    }

    /// Copy whose observed labels are the clean ones. Fails when `z` is absent.
    pub fn clean_view(&self) -> Result<Dataset> {
        let z = self
            .z
            .clone()
            .ok_or_else(|| Error::Domain("dataset carries no clean labels".into()))?;
        self.clone().with_labels(z)
    }

    /// Copy with the sensitive attribute appended as a trailing 0/1 feature.
    pub fn with_sensitive_feature(&self) -> Dataset {
        let d = self.n_features + 1;
        let mut features = Vec::with_capacity(self.len() * d);
        for i in 0..self.len() {
            features.extend_from_slice(self.row(i));
            features.push(self.a[i].index() as f64);
        }
        let mut names = self.feature_names.clone();
        names.push("sensitive".into());
        let mut numeric = self.numeric.clone();
        numeric.push(false);
        Dataset {
            n_features: d,
            features,
            y: self.y.clone(),
            a: self.a.clone(),
            z: self.z.clone(),
            feature_names: names,
            numeric,
            provenance: self.provenance.clone(),
        }
    }

    /// Writes the interchange format: header `feature_0..feature_{d-1},y,a[,z]`
    /// then one row per sample. Reals use the shortest representation that
    /// parses back to the same `f64`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..self.n_features).map(|j| format!("feature_{j}")).collect();
        header.push("y".into());
        header.push("a".into());
        if self.z.is_some() {
            header.push("z".into());
        }
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for i in 0..self.len() {
            record.clear();
            record.extend(self.row(i).iter().map(|v| v.to_string()));
            record.push(self.y[i].to_string());
            record.push(self.a[i].to_string());
            if let Some(z) = &self.z {
                record.push(z[i].to_string());
            }
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Reads the interchange format written by [`Dataset::write_csv`].
    pub fn read_csv<R: Read>(input: R, origin: &Path) -> Result<Dataset> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        let cols: Vec<&str> = header.iter().collect();
        let has_z = cols.last() == Some(&"z");
        let tail = if has_z { 3 } else { 2 };
        if cols.len() <= tail || cols[cols.len() - tail] != "y" || cols[cols.len() - tail + 1] != "a" {
            return Err(ingest(origin, 0, "header", "expected feature columns then y,a[,z]"));
        }
        let d = cols.len() - tail;
        for (j, name) in cols[..d].iter().enumerate() {
            if *name != format!("feature_{j}") {
                return Err(ingest(origin, 0, name, "expected feature_<index>"));
            }
        }
        let mut features = Vec::new();
        let (mut y, mut a, mut z) = (Vec::new(), Vec::new(), Vec::new());
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let row = i + 1;
            for j in 0..d {
                let v: f64 = rec[j]
                    .parse()
                    .map_err(|_| ingest(origin, row, cols[j], &format!("not a number: {:?}", &rec[j])))?;
                features.push(v);
            }
            y.push(parse_label(&rec[d]).ok_or_else(|| ingest(origin, row, "y", "expected -1 or 1"))?);
            a.push(parse_group(&rec[d + 1]).ok_or_else(|| ingest(origin, row, "a", "expected 0 or 1"))?);
            if has_z {
                z.push(parse_label(&rec[d + 2]).ok_or_else(|| ingest(origin, row, "z", "expected -1 or 1"))?);
            }
        }
        let mut ds = Dataset::new(d, features, y, a, has_z.then_some(z))?;
        ds.provenance.source = origin.display().to_string();
        Ok(ds)
    }

    pub fn load_interchange(path: &Path) -> Result<Dataset> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Dataset::read_csv(std::io::BufReader::new(file), path)
    }
}

fn parse_label(s: &str) -> Option<Label> {
    s.trim().parse::<i64>().ok().and_then(Label::from_sign)
}

fn parse_group(s: &str) -> Option<Group> {
    s.trim().parse::<i64>().ok().and_then(Group::from_index)
}

fn ingest(path: &Path, row: usize, column: &str, message: &str) -> Error {
    Error::Ingest {
        path: path.to_path_buf(),
        row,
        column: column.to_string(),
        message: message.to_string(),
    }
}

/// Seeded uniform shuffle, then the first `floor(fraction * N)` rows form the
/// training part. Both parts keep their rows in original order.
pub fn split(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Domain(format!("train fraction {train_fraction} outside (0,1)")));
    }
    let n = dataset.len();
    let n_train = (train_fraction * n as f64).floor() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::seeded(seed));
    let (train_idx, test_idx) = idx.split_at(n_train);
    let mut train_idx = train_idx.to_vec();
    let mut test_idx = test_idx.to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let mut train = dataset.subset(&train_idx);
    let mut test = dataset.subset(&test_idx);
    for part in [&mut train, &mut test] {
        part.provenance.seeds.push(("split".into(), seed));
    }
    Ok((train, test))
}

/// Per-column z-score statistics for the standardizable columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
    mask: Vec<bool>,
}

impl Standardizer {
    /// Population mean and standard deviation of each numeric column.
    /// Constant columns are only centered.
    pub fn fit(data: &Dataset) -> Standardizer {
        let d = data.n_features();
        let n = data.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        let mut scale = vec![1.0; d];
        for j in (0..d).filter(|&j| data.numeric[j]) {
            let m = (0..data.len()).map(|i| data.row(i)[j]).sum::<f64>() / n;
            let var = (0..data.len()).map(|i| (data.row(i)[j] - m).powi(2)).sum::<f64>() / n;
            mean[j] = m;
            scale[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        Standardizer {
            mean,
            scale,
            mask: data.numeric.clone(),
        }
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        let d = data.n_features();
        if d != self.mask.len() {
            return Err(Error::Shape(format!("standardizer fit on {} columns, got {d}", self.mask.len())));
        }
        let mut out = data.clone();
        for row in out.features.chunks_mut(d) {
            for j in (0..d).filter(|&j| self.mask[j]) {
                row[j] = (row[j] - self.mean[j]) / self.scale[j];
            }
        }
        Ok(out)
    }
}

/// Fits standardization on `train` and applies it to both parts.
pub fn standardize_split(train: &Dataset, test: &Dataset) -> Result<(Dataset, Dataset)> {
    let s = Standardizer::fit(train);
    Ok((s.apply(train)?, s.apply(test)?))
}

fn default_delimiter() -> String {
    ",".into()
}

fn default_true() -> bool {
    true
}

fn default_missing() -> Vec<String> {
    vec!["?".into(), String::new()]
}

/// How to turn a raw tabular file into a [`Dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecipe {
    pub recipe_version: u32,
    pub name: String,
    /// Relative paths resolve against the directory handed to
    /// [`DatasetRecipe::resolve_source`].
    pub source: PathBuf,
    #[serde(default = "default_true")]
    pub header: bool,
    /// Column names when the file has no header row.
    #[serde(default)]
    pub columns: Vec<String>,
    #[serde(default = "default_delimiter")]
    pub delimiter: String,
    /// Collapse runs of the delimiter (space-separated files).
    #[serde(default)]
    pub collapse_delimiter: bool,
    pub label_column: String,
    pub label_positive: Vec<String>,
    pub sensitive_column: String,
    pub sensitive_protected: Vec<String>,
    /// Group id given to protected rows; everyone else gets the other id.
    #[serde(default)]
    pub protected_group: u8,
    #[serde(default)]
    pub categorical: Vec<String>,
    #[serde(default)]
    pub numeric: Vec<String>,
    /// Cell values treated as missing; rows with a missing used cell are dropped.
    #[serde(default = "default_missing")]
    pub missing_tokens: Vec<String>,
    /// Keep only rows whose column value is in the listed set.
    #[serde(default)]
    pub keep_only: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub notes: String,
}

const BUILTIN_RECIPES: [(&str, &str); 3] = [
    ("adult", include_str!("../recipes/adult.toml")),
    ("german", include_str!("../recipes/german.toml")),
    ("compas", include_str!("../recipes/compas.toml")),
];

impl DatasetRecipe {
    pub fn from_toml_str(text: &str) -> Result<DatasetRecipe> {
        let recipe: DatasetRecipe = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        recipe.validate()?;
        Ok(recipe)
    }

    pub fn from_file(path: &Path) -> Result<DatasetRecipe> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut recipe = Self::from_toml_str(&text)?;
        if let Some(dir) = path.parent() {
            recipe.resolve_source(dir);
        }
        Ok(recipe)
    }

    /// One of the shipped recipes: `adult`, `german` or `compas`.
    pub fn builtin(name: &str) -> Result<DatasetRecipe> {
        BUILTIN_RECIPES
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::Config(format!("unknown builtin recipe {name:?}")))
            .and_then(|(_, text)| Self::from_toml_str(text))
    }

    pub fn resolve_source(&mut self, dir: &Path) {
        if self.source.is_relative() {
            self.source = dir.join(&self.source);
        }
    }

    fn validate(&self) -> Result<()> {
        if self.recipe_version != 1 {
            return Err(Error::Config(format!("unsupported recipe_version {}", self.recipe_version)));
        }
        if self.protected_group > 1 {
            return Err(Error::Config("protected_group must be 0 or 1".into()));
        }
        if self.delimiter.len() != 1 {
            return Err(Error::Config("delimiter must be a single byte".into()));
        }
        if self.categorical.is_empty() && self.numeric.is_empty() {
            return Err(Error::Config("recipe declares no feature columns".into()));
        }
        let features: BTreeSet<&String> = self.categorical.iter().chain(&self.numeric).collect();
        for special in [&self.label_column, &self.sensitive_column] {
            if features.contains(special) {
                return Err(Error::Config(format!("column {special:?} is both a feature and label/sensitive")));
            }
        }
        if self.label_column == self.sensitive_column {
            return Err(Error::Config("label and sensitive column coincide".into()));
        }
        if features.len() != self.categorical.len() + self.numeric.len() {
            return Err(Error::Config("a column is listed twice among features".into()));
        }
        Ok(())
    }
}

/// Reads `recipe.source`, drops rows with missing cells in used columns,
/// one-hot encodes categoricals (levels in sorted order), z-scores numeric
/// columns over the loaded rows and maps label/sensitive columns.
pub fn load_csv(recipe: &DatasetRecipe) -> Result<Dataset> {
    recipe.validate()?;
    let path = recipe.source.as_path();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let delim = recipe.delimiter.as_bytes()[0];

    // (1-based line number, cells)
    let mut rows: Vec<(usize, Vec<String>)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells = split_line(line, delim, recipe.collapse_delimiter)
            .map_err(|m| ingest(path, lineno + 1, "-", &m))?;
        rows.push((lineno + 1, cells));
    }
    let header: Vec<String> = if recipe.header {
        if rows.is_empty() {
            return Err(ingest(path, 0, "header", "file is empty"));
        }
        rows.remove(0).1
    } else {
        recipe.columns.clone()
    };
    if header.is_empty() {
        return Err(ingest(path, 0, "header", "no header row and no `columns` in recipe"));
    }
    let col = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ingest(path, 0, name, "column not found"))
    };
    let label_col = col(&recipe.label_column)?;
    let sens_col = col(&recipe.sensitive_column)?;
    let cat_cols: Vec<usize> = recipe.categorical.iter().map(|c| col(c)).collect::<Result<_>>()?;
    let num_cols: Vec<usize> = recipe.numeric.iter().map(|c| col(c)).collect::<Result<_>>()?;
    let filters: Vec<(usize, &Vec<String>)> = recipe
        .keep_only
        .iter()
        .map(|(c, vals)| Ok((col(c)?, vals)))
        .collect::<Result<_>>()?;

    let used: Vec<usize> = [label_col, sens_col]
        .into_iter()
        .chain(cat_cols.iter().copied())
        .chain(num_cols.iter().copied())
        .collect();
    let mut kept: Vec<(usize, &Vec<String>)> = Vec::with_capacity(rows.len());
    let (mut dropped_missing, mut dropped_filter) = (0usize, 0usize);
    for (line, r) in &rows {
        if r.len() != header.len() {
            return Err(ingest(
                path,
                *line,
                "-",
                &format!("{} cells, header has {}", r.len(), header.len()),
            ));
        }
        if used.iter().any(|&c| recipe.missing_tokens.iter().any(|m| *m == r[c])) {
            dropped_missing += 1;
            continue;
        }
        if filters.iter().any(|(c, vals)| !vals.contains(&r[*c])) {
            dropped_filter += 1;
            continue;
        }
        kept.push((*line, r));
    }

    let levels: Vec<Vec<&str>> = cat_cols
        .iter()
        .map(|&c| {
            let set: BTreeSet<&str> = kept.iter().map(|(_, r)| r[c].as_str()).collect();
            set.into_iter().collect()
        })
        .collect();
    let mut names = Vec::new();
    let mut numeric_mask = Vec::new();
    for (k, lv) in levels.iter().enumerate() {
        for v in lv {
            names.push(format!("{}={}", recipe.categorical[k], v));
            numeric_mask.push(false);
        }
    }
    for name in &recipe.numeric {
        names.push(name.clone());
        numeric_mask.push(true);
    }
    let d = names.len();

    let mut features = Vec::with_capacity(kept.len() * d);
    let mut y = Vec::with_capacity(kept.len());
    let mut a = Vec::with_capacity(kept.len());
    let protected = Group::from_index(recipe.protected_group.into()).expect("validated");
    for (line, r) in &kept {
        for (k, &c) in cat_cols.iter().enumerate() {
            let v = r[c].as_str();
            features.extend(levels[k].iter().map(|l| if *l == v { 1.0 } else { 0.0 }));
        }
        for (k, &c) in num_cols.iter().enumerate() {
            let v: f64 = r[c].parse().map_err(|_| {
                ingest(path, *line, &recipe.numeric[k], &format!("not a number: {:?}", r[c]))
            })?;
            if !v.is_finite() {
                return Err(ingest(path, *line, &recipe.numeric[k], "non-finite value"));
            }
            features.push(v);
        }
        y.push(if recipe.label_positive.contains(&r[label_col]) {
            Label::Pos
        } else {
            Label::Neg
        });
        a.push(if recipe.sensitive_protected.contains(&r[sens_col]) {
            protected
        } else {
            protected.other()
        });
    }
    if kept.is_empty() {
        return Err(ingest(path, 0, "-", "no rows left after dropping missing values"));
    }

    let raw = Dataset::new(d, features, y, a, None)?
        .with_feature_names(names)?
        .with_numeric_columns(numeric_mask)?;
    let mut ds = Standardizer::fit(&raw).apply(&raw)?;
    ds.provenance = Provenance {
        source: path.display().to_string(),
        recipe: format!("{}@v{}", recipe.name, recipe.recipe_version),
        seeds: Vec::new(),
        notes: vec![
            format!("rows read: {}", rows.len()),
            format!("dropped for missing values: {dropped_missing}"),
            format!("dropped by row filter: {dropped_filter}"),
            format!("rows kept: {}", ds.len()),
            format!("protected (group {}): {}", protected, ds.group_count(protected)),
        ],
    };
    if !recipe.notes.is_empty() {
        ds.provenance.notes.push(recipe.notes.clone());
    }
    Ok(ds)
}

/// Splits one line, honouring double quotes and trimming whitespace around cells.
fn split_line(line: &str, delim: u8, collapse: bool) -> std::result::Result<Vec<String>, String> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(delim)
        .trim(csv::Trim::All)
        .from_reader(line.as_bytes());
    let rec = reader
        .records()
        .next()
        .ok_or_else(|| "empty line".to_string())?
        .map_err(|e| e.to_string())?;
    Ok(rec
        .iter()
        .filter(|c| !(collapse && c.is_empty()))
        .map(str::to_string)
        .collect())
}
