//! Labeled datasets, their on-disk formats, splits and feature bounds.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, parse_err, Error, Location, Result};
use crate::rng::{stream_rng, STREAM_FEATURES, STREAM_LABELS, STREAM_SPLIT};

/// Stable identifier of a data point. File formats assign row indices.
pub type PointId = u64;

const MAGIC: &[u8; 4] = b"IDGD";
const BINARY_VERSION: u32 = 1;

/// Feature matrix (row-major), labels and ids of `n` points.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    d: usize,
    labels: Vec<i32>,
    ids: Vec<PointId>,
}

impl Dataset {
    pub fn new(features: Vec<f64>, d: usize, labels: Vec<i32>, ids: Vec<PointId>) -> Result<Self> {
        let n = labels.len();
        if ids.len() != n {
            return Err(invalid(format!("{} ids for {} labels", ids.len(), n)));
        }
        if n > 0 && d == 0 {
            return Err(invalid("feature dimension must be at least 1"));
        }
        if features.len() != n * d {
            return Err(invalid(format!(
                "feature buffer has {} values, expected {n} x {d}",
                features.len()
            )));
        }
        let mut seen = HashSet::with_capacity(n);
        if let Some(dup) = ids.iter().find(|id| !seen.insert(**id)) {
            return Err(invalid(format!("duplicate point id {dup}")));
        }
        Ok(Self {
            features,
            d,
            labels,
            ids,
        })
    }

    /// Dataset whose ids are the row indices `0..n`.
    pub fn with_row_ids(features: Vec<f64>, d: usize, labels: Vec<i32>) -> Result<Self> {
        let ids = (0..labels.len() as PointId).collect();
        Self::new(features, d, labels, ids)
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<i32>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some((i, _)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(invalid(format!("row {i} has a different width than row 0")));
        }
        if rows.len() != labels.len() {
            return Err(invalid("rows and labels differ in length"));
        }
        Self::with_row_ids(rows.concat(), d, labels)
    }

    pub fn empty(d: usize) -> Self {
        Self {
            features: Vec::new(),
            d,
            labels: Vec::new(),
            ids: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.len()).map(move |i| self.row(i))
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> i32 {
        self.labels[i]
    }

    pub fn ids(&self) -> &[PointId] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> PointId {
        self.ids[i]
    }

    /// Rows at positions `idx`, keeping their ids.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            features,
            d: self.d,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            ids: idx.iter().map(|&i| self.ids[i]).collect(),
        }
    }

    /// Same labels and ids with a replacement feature matrix.
    pub fn with_features(&self, features: Vec<f64>) -> Result<Dataset> {
        Dataset::new(features, self.d, self.labels.clone(), self.ids.clone())
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().collect::<HashSet<_>>().len()
    }
}

/// Disjoint train / validation / test partitions of one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Csv,
    Binary,
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(DataFormat::Csv),
            "binary" | "bin" => Ok(DataFormat::Binary),
            other => Err(invalid(format!("unknown dataset format {other:?}"))),
        }
    }
}

pub fn load_dataset(path: &Path, format: DataFormat) -> Result<Dataset> {
    let reader = BufReader::new(File::open(path)?);
    match format {
        DataFormat::Csv => read_csv(reader),
        DataFormat::Binary => read_binary(reader),
    }
}

pub fn save_dataset(dataset: &Dataset, path: &Path, format: DataFormat) -> Result<()> {
    let mut buf = Vec::new();
    match format {
        DataFormat::Csv => write_csv(dataset, &mut buf)?,
        DataFormat::Binary => write_binary(dataset, &mut buf)?,
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn write_binary<W: Write>(dataset: &Dataset, mut w: W) -> Result<()> {
    let n = u32::try_from(dataset.len()).map_err(|_| invalid("too many rows for u32 header"))?;
    let d = u32::try_from(dataset.dim()).map_err(|_| invalid("dimension exceeds u32"))?;
    w.write_all(MAGIC)?;
    w.write_all(&BINARY_VERSION.to_le_bytes())?;
    w.write_all(&n.to_le_bytes())?;
    w.write_all(&d.to_le_bytes())?;
    for l in &dataset.labels {
        w.write_all(&l.to_le_bytes())?;
    }
    for x in &dataset.features {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

struct OffsetReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> OffsetReader<R> {
    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                parse_err(
                    Location::Byte(self.offset),
                    format!("truncated file while reading {what}"),
                )
            } else {
                Error::Io(e)
            }
        })?;
        self.offset += N as u64;
        Ok(buf)
    }
}

pub fn read_binary<R: Read>(reader: R) -> Result<Dataset> {
    let mut r = OffsetReader {
        inner: reader,
        offset: 0,
    };
    let magic: [u8; 4] = r.take("magic")?;
    if &magic != MAGIC {
        return Err(parse_err(
            Location::Byte(0),
            "bad magic bytes, expected IDGD",
        ));
    }
    let version = u32::from_le_bytes(r.take("version")?);
    if version != BINARY_VERSION {
        return Err(parse_err(
            Location::Byte(4),
            format!("unsupported version {version}"),
        ));
    }
    let n = u32::from_le_bytes(r.take("n")?) as usize;
    let d = u32::from_le_bytes(r.take("d")?) as usize;
    if n > 0 && d == 0 {
        return Err(parse_err(
            Location::Byte(12),
            "d must be at least 1 when n > 0",
        ));
    }
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        labels.push(i32::from_le_bytes(r.take("labels")?));
    }
    let mut features = Vec::with_capacity(n * d);
    for _ in 0..n * d {
        features.push(f64::from_le_bytes(r.take("features")?));
    }
    let mut rest = [0u8; 1];
    if r.inner.read(&mut rest)? != 0 {
        return Err(parse_err(
            Location::Byte(r.offset),
            "trailing bytes after feature block",
        ));
    }
    Dataset::with_row_ids(features, d, labels)
}

pub fn write_csv<W: Write>(dataset: &Dataset, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let header: Vec<String> = std::iter::once("label".to_string())
        .chain((0..dataset.dim()).map(|j| format!("f{j}")))
        .collect();
    out.write_record(&header)?;
    let mut record = Vec::with_capacity(dataset.dim() + 1);
    for i in 0..dataset.len() {
        record.clear();
        record.push(dataset.label(i).to_string());
        // `Display` for f64 is the shortest string that parses back exactly.
        record.extend(dataset.row(i).iter().map(|x| x.to_string()));
        out.write_record(&record)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h?,
        None => return Err(parse_err(Location::Line(1), "missing header row")),
    };
    if header.get(0).map(str::trim) != Some("label") {
        return Err(parse_err(
            Location::Line(1),
            "header must start with `label`",
        ));
    }
    for (j, name) in header.iter().skip(1).enumerate() {
        if name.trim() != format!("f{j}") {
            return Err(parse_err(
                Location::Line(1),
                format!("expected column f{j}, found {name:?}"),
            ));
        }
    }
    let d = header.len() - 1;
    let mut labels = Vec::new();
    let mut features = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != d + 1 {
            return Err(parse_err(
                Location::Line(line),
                format!("expected {} fields, found {}", d + 1, rec.len()),
            ));
        }
        let label = rec[0].trim();
        labels.push(label.parse::<i32>().map_err(|_| {
            parse_err(
                Location::Line(line),
                format!("label {label:?} is not an integer"),
            )
        })?);
        for (j, field) in rec.iter().skip(1).enumerate() {
            let v = field.trim().parse::<f64>().map_err(|_| {
                parse_err(
                    Location::Line(line),
                    format!("feature f{j} = {field:?} is not a real"),
                )
            })?;
            features.push(v);
        }
    }
    if !labels.is_empty() && d == 0 {
        return Err(parse_err(
            Location::Line(1),
            "header declares no feature columns",
        ));
    }
    Dataset::with_row_ids(features, d, labels)
}

/// Shuffles `dataset` with `seed` and cuts it into train, validation and
/// test partitions of the requested sizes. Ids are preserved.
pub fn split_dataset(
    dataset: &Dataset,
    train_n: usize,
    val_n: usize,
    test_n: usize,
    seed: u64,
) -> Result<SplitDataset> {
    let total = train_n
        .checked_add(val_n)
        .and_then(|s| s.checked_add(test_n))
        .ok_or_else(|| invalid("split sizes overflow"))?;
    if total > dataset.len() {
        return Err(invalid(format!(
            "split sizes {train_n}+{val_n}+{test_n} exceed dataset size {}",
            dataset.len()
        )));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut stream_rng(seed, &[STREAM_SPLIT]));
    Ok(SplitDataset {
        train: dataset.select(&order[..train_n]),
        validation: dataset.select(&order[train_n..train_n + val_n]),
        test: dataset.select(&order[train_n + val_n..total]),
    })
}

/// Per-feature clamping interval `[lower_j, upper_j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl FeatureBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(invalid("bound vectors differ in length"));
        }
        for (j, (a, b)) in lower.iter().zip(&upper).enumerate() {
            if !(a <= b) || !(b - a).is_finite() {
                return Err(invalid(format!(
                    "feature {j} has invalid interval [{a}, {b}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Sensitivity `upper_j - lower_j`.
    pub fn sensitivity(&self, j: usize) -> f64 {
        self.upper[j] - self.lower[j]
    }

    pub fn clamp_value(&self, j: usize, x: f64) -> f64 {
        x.max(self.lower[j]).min(self.upper[j])
    }

    pub fn clamp(&self, point: &[f64]) -> Vec<f64> {
        point
            .iter()
            .enumerate()
            .map(|(j, &x)| self.clamp_value(j, x))
            .collect()
    }
}

/// Per-feature min/max over the training rows. Later releases reuse these
/// bounds unchanged.
pub fn compute_feature_bounds(train: &Dataset) -> Result<FeatureBounds> {
    if train.is_empty() {
        return Err(invalid("cannot compute feature bounds of an empty dataset"));
    }
    let d = train.dim();
    let mut lower = vec![f64::INFINITY; d];
    let mut upper = vec![f64::NEG_INFINITY; d];
    for row in train.rows() {
        for (j, &x) in row.iter().enumerate() {
            lower[j] = lower[j].min(x);
            upper[j] = upper[j].max(x);
        }
    }
    FeatureBounds::new(lower, upper)
}

/// Parameters of the Gaussian-cluster generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub num_classes: usize,
    pub cluster_spread: f64,
    pub label_noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Mean of class `c`: the basis vector `e_{c mod d}` scaled by
    /// `1 + c / d`, so classes sit on the corners of a simplex and wrap
    /// outwards when there are more classes than dimensions.
    pub fn class_mean(&self, c: usize) -> Vec<f64> {
        let mut mean = vec![0.0; self.d];
        mean[c % self.d] = 1.0 + (c / self.d) as f64;
        mean
    }
}

/// Gaussian clusters with one mean per class; point `i` belongs to class
/// `i mod num_classes`. With probability `label_noise` the label is redrawn
/// uniformly among the other classes. Features and label noise come from
/// separate streams, so changing `label_noise` never moves a point.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.d == 0 {
        return Err(invalid("synthetic data needs d >= 1"));
    }
    if spec.num_classes == 0 || spec.n < spec.num_classes {
        return Err(invalid("synthetic data needs n >= num_classes >= 1"));
    }
    if !(0.0..=1.0).contains(&spec.label_noise) {
        return Err(invalid(format!(
            "label_noise {} is not a probability",
            spec.label_noise
        )));
    }
    if !(spec.cluster_spread >= 0.0) || !spec.cluster_spread.is_finite() {
        return Err(invalid("cluster_spread must be finite and non-negative"));
    }
    let means: Vec<Vec<f64>> = (0..spec.num_classes).map(|c| spec.class_mean(c)).collect();
    let mut feature_rng = stream_rng(spec.seed, &[STREAM_FEATURES]);
    let mut label_rng = stream_rng(spec.seed, &[STREAM_LABELS]);
    let mut features = Vec::with_capacity(spec.n * spec.d);
    let mut labels = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let class = i % spec.num_classes;
        for &m in &means[class] {
            let z: f64 = feature_rng.sample(StandardNormal);
            features.push(m + spec.cluster_spread * z);
        }
        let flip = label_rng.random::<f64>() < spec.label_noise;
        let other = if spec.num_classes > 1 {
            label_rng.random_range(0..spec.num_classes - 1)
        } else {
            0
        };
        let label = if flip && spec.num_classes > 1 {
            if other >= class {
                other + 1
            } else {
                other
            }
        } else {
            class
        };
        labels.push(label as i32);
    }
    Dataset::with_row_ids(features, spec.d, labels)
}
