//! Labeled, grouped data: the unit every training and prediction phase
//! consumes.
//!
//! A [`Dataset`] stores its feature matrix row-major in one contiguous buffer
//! next to the group ids and binary labels. Group ids are small non-negative
//! integers in `[0, G)`.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// One owned row of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub features: Vec<f64>,
    pub group: u32,
    pub label: u8,
}

/// Borrowed view of one row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceRef<'a> {
    pub features: &'a [f64],
    pub group: u32,
    pub label: u8,
}

impl InstanceRef<'_> {
    pub fn to_owned(&self) -> Instance {
        Instance {
            features: self.features.to_vec(),
            group: self.group,
            label: self.label,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    n_groups: u32,
    features: Vec<f64>,
    groups: Vec<u32>,
    labels: Vec<u8>,
}

impl Dataset {
    /// An empty dataset with `dim` features per row and `n_groups` groups.
    pub fn empty(dim: usize, n_groups: u32) -> Self {
        Dataset {
            dim,
            n_groups,
            features: Vec::new(),
            groups: Vec::new(),
            labels: Vec::new(),
        }
    }

    /// Builds a dataset from owned rows. `n_groups` defaults to one more
    /// than the largest group id present.
    pub fn from_instances(instances: Vec<Instance>, n_groups: Option<u32>) -> Result<Self> {
        let dim = instances.first().map_or(0, |i| i.features.len());
        let mut features = Vec::with_capacity(dim * instances.len());
        let mut groups = Vec::with_capacity(instances.len());
        let mut labels = Vec::with_capacity(instances.len());
        for inst in instances {
            features.extend_from_slice(&inst.features);
            groups.push(inst.group);
            labels.push(inst.label);
        }
        Self::from_parts(dim, features, groups, labels, n_groups)
    }

    /// Builds a dataset from a row-major feature buffer plus parallel group
    /// and label columns, validating every invariant.
    pub fn from_parts(
        dim: usize,
        features: Vec<f64>,
        groups: Vec<u32>,
        labels: Vec<u8>,
        n_groups: Option<u32>,
    ) -> Result<Self> {
        let n = labels.len();
        if groups.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: groups.len(),
            });
        }
        if features.len() != dim * n {
            return Err(Error::DimensionMismatch {
                expected: dim * n,
                actual: features.len(),
            });
        }
        if let Some(bad) = labels.iter().position(|&y| y > 1) {
            return Err(Error::InvalidDataset(format!(
                "row {bad}: label {} is not 0 or 1",
                labels[bad]
            )));
        }
        let observed = groups.iter().max().map_or(0, |&g| g + 1);
        let n_groups = n_groups.unwrap_or(observed);
        if observed > n_groups {
            return Err(Error::InvalidDataset(format!(
                "group id {} is out of range for {n_groups} groups",
                observed - 1
            )));
        }
        Ok(Dataset {
            dim,
            n_groups,
            features,
            groups,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Feature dimensionality `m`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Declared group count `G`.
    pub fn n_groups(&self) -> u32 {
        self.n_groups
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn group(&self, i: usize) -> u32 {
        self.groups[i]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn groups(&self) -> &[u32] {
        &self.groups
    }

    /// The row-major feature buffer.
    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn instance(&self, i: usize) -> InstanceRef<'_> {
        InstanceRef {
            features: self.row(i),
            group: self.groups[i],
            label: self.labels[i],
        }
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = InstanceRef<'_>> + '_ {
        (0..self.len()).map(move |i| self.instance(i))
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }

    /// Sorted, deduplicated group ids that occur in the data.
    pub fn groups_present(&self) -> Vec<u32> {
        let mut present: Vec<u32> = self.groups.clone();
        present.sort_unstable();
        present.dedup();
        present
    }

    /// Rows at `indices`, in that order (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut groups = Vec::with_capacity(indices.len());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            groups.push(self.groups[i]);
            labels.push(self.labels[i]);
        }
        Dataset {
            dim: self.dim,
            n_groups: self.n_groups,
            features,
            groups,
            labels,
        }
    }

    /// Row indices of each group present, in ascending row order.
    pub fn group_indices(&self) -> BTreeMap<u32, Vec<usize>> {
        let mut parts: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, &g) in self.groups.iter().enumerate() {
            parts.entry(g).or_default().push(i);
        }
        parts
    }

    /// Splits the data into one dataset per group present, preserving the
    /// relative order of rows inside each part.
    pub fn partition_by_group(&self) -> BTreeMap<u32, Dataset> {
        self.group_indices()
            .into_iter()
            .map(|(g, idx)| (g, self.select(&idx)))
            .collect()
    }

    /// Same rows with a new label column.
    pub fn with_labels(&self, labels: Vec<u8>) -> Result<Dataset> {
        Self::from_parts(
            self.dim,
            self.features.clone(),
            self.groups.clone(),
            labels,
            Some(self.n_groups),
        )
    }

    /// Concatenates datasets of equal dimensionality.
    pub fn concat(parts: &[&Dataset]) -> Result<Dataset> {
        let dim = parts.first().map_or(0, |d| d.dim);
        let n_groups = parts.iter().map(|d| d.n_groups).max().unwrap_or(0);
        let mut out = Dataset::empty(dim, n_groups);
        for d in parts {
            if d.dim != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: d.dim,
                });
            }
            out.features.extend_from_slice(&d.features);
            out.groups.extend_from_slice(&d.groups);
            out.labels.extend_from_slice(&d.labels);
        }
        Ok(out)
    }

    /// Maps every group id through `f`, recomputing `G`.
    pub fn map_groups(&self, f: impl Fn(u32) -> u32) -> Dataset {
        let groups: Vec<u32> = self.groups.iter().map(|&g| f(g)).collect();
        let n_groups = groups.iter().max().map_or(0, |&g| g + 1);
        Dataset {
            dim: self.dim,
            n_groups,
            features: self.features.clone(),
            groups,
            labels: self.labels.clone(),
        }
    }
}

/// Free-function form of [`Dataset::partition_by_group`].
pub fn partition_by_group(d: &Dataset) -> BTreeMap<u32, Dataset> {
    d.partition_by_group()
}

/// A normal distribution given by mean and standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub std_dev: f64,
}

impl Gaussian {
    pub const fn new(mean: f64, std_dev: f64) -> Self {
        Gaussian { mean, std_dev }
    }
}

/// Label-conditioned feature distributions of the two-feature generator.
///
/// The second parameter of each pair is a standard deviation, not a
/// variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticGaussians {
    pub u_pos: Gaussian,
    pub u_neg: Gaussian,
    pub v_pos: Gaussian,
    pub v_neg: Gaussian,
}

impl Default for SyntheticGaussians {
    fn default() -> Self {
        SyntheticGaussians {
            u_pos: Gaussian::new(15.0, 10.0),
            u_neg: Gaussian::new(5.0, 5.0),
            v_pos: Gaussian::new(20.0, 10.0),
            v_neg: Gaussian::new(40.0, 10.0),
        }
    }
}

/// Parameters of one synthetic draw: per-group prevalence, total size,
/// the Gaussians and the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub prevalence: BTreeMap<u32, f64>,
    pub size: usize,
    #[serde(default)]
    pub gaussians: SyntheticGaussians,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Two equally sized groups with prevalences `rho0` and `rho1`.
    pub fn two_groups(rho0: f64, rho1: f64, size: usize, seed: u64) -> Self {
        SyntheticSpec {
            prevalence: BTreeMap::from([(0, rho0), (1, rho1)]),
            size,
            gaussians: SyntheticGaussians::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::InvalidParameter("synthetic size must be >= 1".into()));
        }
        if self.prevalence.is_empty() {
            return Err(Error::InvalidParameter(
                "synthetic spec needs at least one group".into(),
            ));
        }
        for (&z, &rho) in &self.prevalence {
            if !(0.0..=1.0).contains(&rho) {
                return Err(Error::InvalidParameter(format!(
                    "prevalence {rho} for group {z} is outside [0, 1]"
                )));
            }
        }
        let g = &self.gaussians;
        for gauss in [g.u_pos, g.u_neg, g.v_pos, g.v_neg] {
            if !(gauss.std_dev > 0.0 && gauss.std_dev.is_finite() && gauss.mean.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "invalid gaussian {gauss:?}: spread must be positive"
                )));
            }
        }
        Ok(())
    }

    /// Instance count of each group: an even split with the remainder going
    /// to the first group.
    pub fn group_sizes(&self) -> BTreeMap<u32, usize> {
        let g = self.prevalence.len();
        let base = self.size / g;
        let rem = self.size % g;
        self.prevalence
            .keys()
            .enumerate()
            .map(|(i, &z)| (z, base + if i == 0 { rem } else { 0 }))
            .collect()
    }
}

/// Number of positives for prevalence `rho` out of `n`, rounding half up.
pub fn positive_count(rho: f64, n: usize) -> usize {
    ((rho * n as f64 + 0.5).floor() as usize).min(n)
}

/// Draws a dataset with exactly `round(rho_z * n_z)` positives per group and
/// features `U`, `V` drawn independently from the label-conditioned
/// Gaussians.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = seed::rng(spec.seed);
    let g = &spec.gaussians;
    let normal = |x: Gaussian| Normal::new(x.mean, x.std_dev).expect("validated gaussian");
    let (u_pos, u_neg, v_pos, v_neg) = (
        normal(g.u_pos),
        normal(g.u_neg),
        normal(g.v_pos),
        normal(g.v_neg),
    );

    let sizes = spec.group_sizes();
    let n_groups = spec.prevalence.keys().max().map_or(0, |&z| z + 1);
    let mut features = Vec::with_capacity(2 * spec.size);
    let mut groups = Vec::with_capacity(spec.size);
    let mut labels = Vec::with_capacity(spec.size);
    for (&z, &rho) in &spec.prevalence {
        let n_z = sizes[&z];
        let n_pos = positive_count(rho, n_z);
        let mut ys: Vec<u8> = std::iter::repeat(1)
            .take(n_pos)
            .chain(std::iter::repeat(0).take(n_z - n_pos))
            .collect();
        ys.shuffle(&mut rng);
        for y in ys {
            let (u, v) = if y == 1 {
                (u_pos.sample(&mut rng), v_pos.sample(&mut rng))
            } else {
                (u_neg.sample(&mut rng), v_neg.sample(&mut rng))
            };
            features.push(u);
            features.push(v);
            groups.push(z);
            labels.push(y);
        }
    }
    Dataset::from_parts(2, features, groups, labels, Some(n_groups))
}

/// Column mapping for CSV ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub group_column: String,
    pub label_column: String,
    /// Feature columns in order; empty means every other column.
    #[serde(default)]
    pub feature_columns: Vec<String>,
    /// Raw group cell value to group id; empty means the cell is parsed as
    /// an integer.
    #[serde(default)]
    pub group_values: BTreeMap<String, u32>,
    /// Raw label cell value to label, applied before the `0`/`1` check.
    #[serde(default)]
    pub label_values: BTreeMap<String, u8>,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
}

fn default_delimiter() -> char {
    ','
}

impl CsvSchema {
    pub fn new(group_column: impl Into<String>, label_column: impl Into<String>) -> Self {
        CsvSchema {
            group_column: group_column.into(),
            label_column: label_column.into(),
            feature_columns: Vec::new(),
            group_values: BTreeMap::new(),
            label_values: BTreeMap::new(),
            delimiter: default_delimiter(),
        }
    }
}

/// Reads a headed CSV file into a [`Dataset`]. Rows keep file order; any
/// unparsable cell is an error carrying its line number.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, path, schema, true)
}

/// Like [`load_csv`], but the label column may be absent; labels then read
/// as 0. For prediction inputs.
pub fn load_unlabeled_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, path, schema, false)
}

pub(crate) fn read_csv<R: std::io::Read>(
    reader: R,
    path: &Path,
    schema: &CsvSchema,
    labels_required: bool,
) -> Result<Dataset> {
    let delimiter = u8::try_from(schema.delimiter)
        .map_err(|_| Error::InvalidParameter("delimiter must be a single-byte character".into()))?;
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let column = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let group_col = column(&schema.group_column)?;
    let label_col = match column(&schema.label_column) {
        Err(_) if !labels_required => None,
        c => Some(c?),
    };
    let feature_cols: Vec<usize> = if schema.feature_columns.is_empty() {
        (0..header.len())
            .filter(|&c| c != group_col && Some(c) != label_col)
            .collect()
    } else {
        schema
            .feature_columns
            .iter()
            .map(|name| column(name))
            .collect::<Result<_>>()?
    };
    if feature_cols.is_empty() {
        return Err(Error::InvalidParameter(
            "schema must name at least one feature column".into(),
        ));
    }

    let dim = feature_cols.len();
    let mut features = Vec::new();
    let mut groups = Vec::new();
    let mut labels = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let row_err = |message: String| Error::Row {
            path: path.to_path_buf(),
            line,
            message,
        };
        let cell = |c: usize| record.get(c).map(str::trim).unwrap_or("");

        let raw_label = label_col.map_or("0", cell);
        let label = match schema.label_values.get(raw_label) {
            Some(&y) => y,
            None => match raw_label {
                "0" => 0,
                "1" => 1,
                other => return Err(row_err(format!("label `{other}` is not 0 or 1"))),
            },
        };
        if label > 1 {
            return Err(row_err(format!("label mapping produced {label}")));
        }

        let raw_group = cell(group_col);
        let group = if schema.group_values.is_empty() {
            raw_group
                .parse::<u32>()
                .map_err(|_| row_err(format!("group `{raw_group}` is not a non-negative integer")))?
        } else {
            *schema
                .group_values
                .get(raw_group)
                .ok_or_else(|| row_err(format!("group value `{raw_group}` has no mapping")))?
        };

        for &c in &feature_cols {
            let raw = cell(c);
            let x: f64 = raw
                .parse()
                .ok()
                .filter(|x: &f64| x.is_finite())
                .ok_or_else(|| {
                    row_err(format!("feature `{}`: `{raw}` is not a number", &header[c]))
                })?;
            features.push(x);
        }
        groups.push(group);
        labels.push(label);
    }
    let n_groups = schema
        .group_values
        .values()
        .max()
        .map(|&g| g + 1)
        .into_iter()
        .chain(groups.iter().max().map(|&g| g + 1))
        .max();
    Dataset::from_parts(dim, features, groups, labels, n_groups)
}

/// Writes `d` as CSV with the given feature names followed by `group` and
/// `label` columns.
pub fn write_csv(d: &Dataset, path: impl AsRef<Path>, feature_names: &[String]) -> Result<()> {
    let path = path.as_ref();
    if feature_names.len() != d.dim() {
        return Err(Error::DimensionMismatch {
            expected: d.dim(),
            actual: feature_names.len(),
        });
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let mut header: Vec<&str> = feature_names.iter().map(String::as_str).collect();
    header.extend(["group", "label"]);
    w.write_record(&header)?;
    for inst in d.iter() {
        let mut rec: Vec<String> = inst.features.iter().map(|x| format!("{x:?}")).collect();
        rec.push(inst.group.to_string());
        rec.push(inst.label.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Default feature names `f1..fm`.
pub fn default_feature_names(dim: usize) -> Vec<String> {
    (1..=dim).map(|i| format!("f{i}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str, schema: &CsvSchema) -> Result<Dataset> {
        read_csv(text.as_bytes(), Path::new("fixture.csv"), schema, true)
    }

    #[test]
    fn three_row_csv() {
        let text = "f1,f2,race,is_recid\n1.0,2.0,0,1\n3.5,-1,1,0\n0,0,1,1\n";
        let d = read(text, &CsvSchema::new("race", "is_recid")).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.dim(), 2);
        assert_eq!(d.n_groups(), 2);
        assert_eq!(d.row(1), &[3.5, -1.0]);
        assert_eq!(d.labels(), &[1, 0, 1]);
    }

    #[test]
    fn label_column_optional_for_unlabeled_reads() {
        let text = "f1,g\n1,0\n2,1\n";
        let schema = CsvSchema::new("g", "y");
        assert!(matches!(read(text, &schema), Err(Error::MissingColumn(_))));
        let d = read_csv(text.as_bytes(), Path::new("x.csv"), &schema, false).unwrap();
        assert_eq!((d.dim(), d.labels()), (1, &[0u8, 0][..]));
    }

    #[test]
    fn non_binary_label_reports_line() {
        let text = "f1,g,y\n1,0,1\n2,0,2\n";
        let err = read(text, &CsvSchema::new("g", "y")).unwrap_err();
        match err {
            Error::Row { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("`2`"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn missing_column_is_named() {
        let err = read("a,b\n1,2\n", &CsvSchema::new("race", "b")).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(ref c) if c == "race"));
    }

    #[test]
    fn unparsable_feature_is_a_row_error() {
        let err = read("f,g,y\nabc,0,1\n", &CsvSchema::new("g", "y")).unwrap_err();
        assert!(matches!(err, Error::Row { line: 2, .. }));
    }

    #[test]
    fn group_dictionary_and_delimiter() {
        let mut schema = CsvSchema::new("race", "y");
        schema.delimiter = ';';
        schema.group_values =
            BTreeMap::from([("Caucasian".into(), 0), ("African-American".into(), 1)]);
        let d = read("x;race;y\n1;African-American;1\n2;Caucasian;0\n", &schema).unwrap();
        assert_eq!(d.groups(), &[1, 0]);
        let err = read("x;race;y\n1;Other;1\n", &schema).unwrap_err();
        assert!(matches!(err, Error::Row { .. }));
    }

    #[test]
    fn partition_sizes_and_identity() {
        let d = Dataset::from_parts(1, vec![0.0, 1.0, 2.0], vec![0, 1, 0], vec![1, 0, 0], None)
            .unwrap();
        let parts = d.partition_by_group();
        assert_eq!(parts[&0].len(), 2);
        assert_eq!(parts[&1].len(), 1);
        assert_eq!(parts[&0].row(1), &[2.0]);

        let single = Dataset::from_parts(1, vec![0.5, 1.5], vec![0, 0], vec![0, 1], None).unwrap();
        let parts = single.partition_by_group();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[&0], single);
    }

    #[test]
    fn all_zero_prevalence_gives_all_negatives() {
        let spec = SyntheticSpec::two_groups(0.0, 0.0, 100, 3);
        let d = generate_synthetic(&spec).unwrap();
        assert_eq!(d.positives(), 0);
    }

    #[test]
    fn single_group_prevalence_is_exact() {
        let spec = SyntheticSpec {
            prevalence: BTreeMap::from([(0, 0.3)]),
            size: 1000,
            gaussians: SyntheticGaussians::default(),
            seed: 11,
        };
        let d = generate_synthetic(&spec).unwrap();
        assert_eq!(d.len(), 1000);
        assert_eq!(d.positives(), 300);
    }

    #[test]
    fn uneven_size_remainder_goes_to_first_group() {
        let spec = SyntheticSpec::two_groups(0.5, 0.5, 101, 1);
        assert_eq!(spec.group_sizes(), BTreeMap::from([(0, 51), (1, 50)]));
    }

    #[test]
    fn invalid_spec_rejected() {
        let mut spec = SyntheticSpec::two_groups(0.5, 1.5, 10, 1);
        assert!(generate_synthetic(&spec).is_err());
        spec.prevalence.insert(1, 0.5);
        spec.gaussians.u_pos.std_dev = 0.0;
        assert!(generate_synthetic(&spec).is_err());
        spec.gaussians = SyntheticGaussians::default();
        spec.size = 0;
        assert!(generate_synthetic(&spec).is_err());
    }

    #[test]
    fn full_scale_training_set() {
        let spec = SyntheticSpec::two_groups(0.5, 0.5, 50_000, 2020);
        let d = generate_synthetic(&spec).unwrap();
        assert_eq!(d.len(), 50_000);
        let parts = d.partition_by_group();
        assert_eq!(parts[&0].positives(), 12_500);
        assert_eq!(parts[&1].positives(), 12_500);
    }

    #[test]
    fn csv_round_trip_through_writer() {
        let spec = SyntheticSpec::two_groups(0.4, 0.6, 20, 5);
        let d = generate_synthetic(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_csv(&d, &path, &["u".into(), "v".into()]).unwrap();
        let back = load_csv(&path, &CsvSchema::new("group", "label")).unwrap();
        assert_eq!(back, d);
    }
}
