//! Dataset loading, normalization, batching and synthetic fixtures.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_BATCH_SIZE: usize = 128;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(name: impl Into<String>, features: Tensor, labels: Vec<usize>, classes: usize) -> Result<Self> {
        let (n, _) = features.dims2()?;
        if n != labels.len() {
            return Err(Error::Consistency(format!(
                "{n} feature rows but {} labels",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Consistency(format!(
                "label {bad} outside [0, {classes})"
            )));
        }
        Ok(Dataset {
            name: name.into(),
            features,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// First `n` examples (all of them if `n >= len`).
    pub fn take(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        let idx: Vec<usize> = (0..n).collect();
        self.subset(&idx)
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }

    /// One-hot `[len × classes]` encoding of the labels at `idx`.
    pub fn one_hot(&self, idx: &[usize]) -> Tensor {
        let mut data = vec![0.0; idx.len() * self.classes];
        for (r, &i) in idx.iter().enumerate() {
            data[r * self.classes + self.labels[i]] = 1.0;
        }
        Tensor::new(vec![idx.len(), self.classes], data).expect("one-hot shape")
    }
}

fn read_u32(bytes: &[u8], at: usize) -> Option<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Reads an IDX image file (`0x00000803`, `u8` pixels, 3 dims) and its IDX
/// label file (`0x00000801`). Pixels are returned as raw byte values, one
/// flattened row per image.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let img = fs::read(images).map_err(|e| Error::io(images, e))?;
    let lab = fs::read(labels).map_err(|e| Error::io(labels, e))?;

    let magic = read_u32(&img, 0).ok_or_else(|| format_err(images, "missing header"))?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(format_err(images, format!("bad magic {magic:#010x}")));
    }
    let n = read_u32(&img, 4).ok_or_else(|| format_err(images, "truncated header"))? as usize;
    let rows = read_u32(&img, 8).ok_or_else(|| format_err(images, "truncated header"))? as usize;
    let cols = read_u32(&img, 12).ok_or_else(|| format_err(images, "truncated header"))? as usize;
    let d = rows * cols;
    if n == 0 || d == 0 {
        return Err(format_err(images, "empty image set"));
    }
    let body = &img[16..];
    if body.len() != n * d {
        return Err(format_err(
            images,
            format!("expected {} pixel bytes, found {}", n * d, body.len()),
        ));
    }

    let lmagic = read_u32(&lab, 0).ok_or_else(|| format_err(labels, "missing header"))?;
    if lmagic != IDX_LABELS_MAGIC {
        return Err(format_err(labels, format!("bad magic {lmagic:#010x}")));
    }
    let ln = read_u32(&lab, 4).ok_or_else(|| format_err(labels, "truncated header"))? as usize;
    let lbody = &lab[8..];
    if lbody.len() != ln {
        return Err(format_err(
            labels,
            format!("expected {ln} label bytes, found {}", lbody.len()),
        ));
    }
    if ln != n {
        return Err(Error::Consistency(format!(
            "{} holds {n} images but {} holds {ln} labels",
            images.display(),
            labels.display()
        )));
    }

    let features = Tensor::new(vec![n, d], body.iter().map(|&b| b as f64).collect())?;
    let labels_vec: Vec<usize> = lbody.iter().map(|&b| b as usize).collect();
    let classes = labels_vec.iter().max().map_or(0, |m| m + 1).max(2);
    let name = images
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(name, features, labels_vec, classes)
}

/// Reads a headed CSV file. `features` selects feature columns by name; when
/// `None`, every column except the label column is used. Labels that all
/// parse as non-negative integers keep their values; otherwise distinct
/// label strings are coded in sorted order.
pub fn load_csv(path: &Path, label_column: &str, features: Option<&[String]>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_err(path, 0, e))?;
    let header = reader.headers().map_err(|e| csv_err(path, 0, e))?.clone();
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::Schema(format!("no label column `{label_column}` in {}", path.display())))?;
    let feature_idx: Vec<usize> = match features {
        Some(names) => names
            .iter()
            .map(|n| {
                header
                    .iter()
                    .position(|h| h == n)
                    .ok_or_else(|| Error::Schema(format!("no feature column `{n}` in {}", path.display())))
            })
            .collect::<Result<_>>()?,
        None => (0..header.len()).filter(|&i| i != label_idx).collect(),
    };
    if feature_idx.is_empty() {
        return Err(Error::Schema("no feature columns".into()));
    }

    let mut data = Vec::new();
    let mut raw_labels = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, row + 1, e))?;
        for &i in &feature_idx {
            let cell = rec.get(i).unwrap_or("").trim();
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                row: row + 1,
                reason: format!("column `{}`: `{cell}` is not numeric", &header[i]),
            })?;
            data.push(v);
        }
        raw_labels.push(rec.get(label_idx).unwrap_or("").trim().to_string());
    }
    if raw_labels.is_empty() {
        return Err(format_err(path, "no data rows"));
    }

    let (labels, classes) = code_labels(&raw_labels);
    let n = labels.len();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(name, Tensor::new(vec![n, feature_idx.len()], data)?, labels, classes)
}

fn csv_err(path: &Path, row: usize, e: csv::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        row,
        reason: e.to_string(),
    }
}

fn code_labels(raw: &[String]) -> (Vec<usize>, usize) {
    let ints: Option<Vec<usize>> = raw.iter().map(|s| s.parse::<usize>().ok()).collect();
    if let Some(ints) = ints {
        let classes = ints.iter().max().map_or(0, |m| m + 1).max(2);
        return (ints, classes);
    }
    let mut codes = BTreeMap::new();
    for s in raw {
        codes.entry(s.clone()).or_insert(0usize);
    }
    for (i, v) in codes.values_mut().enumerate() {
        *v = i;
    }
    let classes = codes.len().max(2);
    (raw.iter().map(|s| codes[s]).collect(), classes)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormMode {
    /// Affine map of each feature's train range onto `[-1, 1]`.
    #[default]
    MinMax,
    ZScore,
}

/// Per-feature affine transform fitted on a training split. Min-max maps
/// `[lo, lo + range]` exactly onto `[-1, 1]`; z-score uses `(x - mean)/std`.
/// Constant features (zero range or std) map to 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    pub mode: NormMode,
    offset: Vec<f64>,
    scale: Vec<f64>,
}

impl Normalizer {
    pub fn fit(train: &Dataset, mode: NormMode) -> Self {
        let d = train.dim();
        let n = train.len() as f64;
        let x = &train.features;
        let mut offset = vec![0.0; d];
        let mut scale = vec![0.0; d];
        match mode {
            NormMode::MinMax => {
                for j in 0..d {
                    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                    for i in 0..train.len() {
                        let v = x.get2(i, j);
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                    offset[j] = lo;
                    scale[j] = hi - lo;
                }
            }
            NormMode::ZScore => {
                for j in 0..d {
                    let mean = (0..train.len()).map(|i| x.get2(i, j)).sum::<f64>() / n;
                    let var = (0..train.len()).map(|i| (x.get2(i, j) - mean).powi(2)).sum::<f64>() / n;
                    offset[j] = mean;
                    scale[j] = var.sqrt();
                }
            }
        }
        Normalizer { mode, offset, scale }
    }

    pub fn apply(&self, ds: &Dataset) -> Dataset {
        let d = ds.dim();
        let mut out = ds.clone();
        for (e, v) in out.features.data_mut().iter_mut().enumerate() {
            let j = e % d;
            let (o, r) = (self.offset[j], self.scale[j]);
            *v = if r <= 0.0 {
                0.0
            } else {
                match self.mode {
                    NormMode::MinMax => (2.0 * (*v - o) - r) / r,
                    NormMode::ZScore => (*v - o) / r,
                }
            };
        }
        out
    }

    /// Inverse map; constant features come back as their train value.
    pub fn invert(&self, ds: &Dataset) -> Dataset {
        let d = ds.dim();
        let mut out = ds.clone();
        for (e, v) in out.features.data_mut().iter_mut().enumerate() {
            let j = e % d;
            let (o, r) = (self.offset[j], self.scale[j]);
            *v = match self.mode {
                NormMode::MinMax => 0.5 * (*v + 1.0) * r + o,
                NormMode::ZScore => *v * r + o,
            };
        }
        out
    }
}

/// Fits on `train` and applies the same transform to every split.
pub fn normalize(train: &Dataset, others: &[Dataset], mode: NormMode) -> (Dataset, Vec<Dataset>, Normalizer) {
    let norm = Normalizer::fit(train, mode);
    let t = norm.apply(train);
    let o = others.iter().map(|d| norm.apply(d)).collect();
    (t, o, norm)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub seed: u64,
    pub drop_last: bool,
}

impl BatchPlan {
    pub fn new(batch_size: usize, seed: u64) -> Self {
        BatchPlan {
            batch_size,
            seed,
            drop_last: false,
        }
    }

    /// Index batches for `epoch`: a permutation of `0..n` that depends only
    /// on `(seed, epoch)`, chunked into `batch_size` pieces.
    pub fn batches(&self, n: usize, epoch: usize) -> Result<Vec<Vec<usize>>> {
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch size must be >= 1".into()));
        }
        if self.batch_size > n {
            return Err(Error::Parameter(format!(
                "batch size {} exceeds dataset size {n}",
                self.batch_size
            )));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(epoch as u64);
        idx.shuffle(&mut rng);
        Ok(idx
            .chunks(self.batch_size)
            .filter(|c| !self.drop_last || c.len() == self.batch_size)
            .map(<[usize]>::to_vec)
            .collect())
    }
}

/// Materialized `(features, one-hot labels)` batches for one epoch.
pub fn batch_iter<'a>(
    ds: &'a Dataset,
    plan: &BatchPlan,
    epoch: usize,
) -> Result<impl Iterator<Item = (Tensor, Tensor)> + 'a> {
    let batches = plan.batches(ds.len(), epoch)?;
    Ok(batches
        .into_iter()
        .map(move |idx| (ds.features.select_rows(&idx), ds.one_hot(&idx))))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    GaussianBlobs,
    TwoSpirals,
    UniformCube,
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SyntheticKind::GaussianBlobs => "gaussian-blobs",
            SyntheticKind::TwoSpirals => "two-spirals",
            SyntheticKind::UniformCube => "uniform-cube",
        })
    }
}

/// Parameters for [`synthetic_dataset`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub n: usize,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_classes")]
    pub classes: usize,
    /// Distance between blob centres in units of the blob std.
    #[serde(default = "default_separation")]
    pub separation: f64,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_dim() -> usize {
    2
}
fn default_classes() -> usize {
    2
}
fn default_separation() -> f64 {
    10.0
}

impl SyntheticSpec {
    pub fn new(kind: SyntheticKind, n: usize, dim: usize, classes: usize, seed: u64) -> Self {
        SyntheticSpec {
            kind,
            n,
            dim,
            classes,
            separation: default_separation(),
            noise: 0.0,
            seed,
        }
    }
}

/// Deterministic synthetic data.
///
/// - `gaussian-blobs`: `classes` isotropic unit-variance Gaussians in `dim`
///   dimensions whose centres are pairwise at least `separation` apart.
/// - `two-spirals`: two interleaved planar spirals (`dim` is ignored, 2-D).
/// - `uniform-cube`: uniform points in `[0,1]^dim`, one label class 0
///   (used as an intrinsic-dimension fixture).
pub fn synthetic_dataset(spec: &SyntheticSpec) -> Result<Dataset> {
    let SyntheticSpec { kind, n, dim, classes, .. } = *spec;
    if n == 0 || dim == 0 {
        return Err(Error::Parameter("synthetic dataset needs n, dim >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match kind {
        SyntheticKind::GaussianBlobs => {
            if classes < 2 || n < classes {
                return Err(Error::Parameter(format!("blobs need 2 <= classes <= n, got {classes}")));
            }
            let centres = blob_centres(classes, dim, spec.separation);
            let mut data = Vec::with_capacity(n * dim);
            let mut labels = Vec::with_capacity(n);
            for i in 0..n {
                let c = i % classes;
                for t in 0..dim {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    data.push(centres[c][t] + z);
                }
                labels.push(c);
            }
            Dataset::new(kind.to_string(), Tensor::new(vec![n, dim], data)?, labels, classes)
        }
        SyntheticKind::TwoSpirals => {
            if n < 2 {
                return Err(Error::Parameter("two spirals need n >= 2".into()));
            }
            let mut data = Vec::with_capacity(n * 2);
            let mut labels = Vec::with_capacity(n);
            for i in 0..n {
                let c = i % 2;
                let t: f64 = rng.gen_range(0.0..1.0);
                let angle = 0.5 + t * 3.0 * std::f64::consts::PI;
                let r = 0.1 + 0.9 * t;
                let sign = if c == 0 { 1.0 } else { -1.0 };
                let nx: f64 = StandardNormal.sample(&mut rng);
                let ny: f64 = StandardNormal.sample(&mut rng);
                data.push(sign * r * angle.cos() + spec.noise * nx);
                data.push(sign * r * angle.sin() + spec.noise * ny);
                labels.push(c);
            }
            Dataset::new(kind.to_string(), Tensor::new(vec![n, 2], data)?, labels, 2)
        }
        SyntheticKind::UniformCube => {
            let data = (0..n * dim).map(|_| rng.gen_range(0.0..1.0)).collect();
            Dataset::new(kind.to_string(), Tensor::new(vec![n, dim], data)?, vec![0; n], 2)
        }
    }
}

fn blob_centres(classes: usize, dim: usize, separation: f64) -> Vec<Vec<f64>> {
    (0..classes)
        .map(|c| {
            let mut v = vec![0.0; dim];
            if dim >= classes {
                // scaled simplex corners: pairwise distance = separation
                v[c] = separation / std::f64::consts::SQRT_2;
            } else {
                v[0] = separation * c as f64;
            }
            v
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_idx(dir: &Path, n: u32, n_labels: u32, truncate: usize) -> (std::path::PathBuf, std::path::PathBuf) {
        let img = dir.join("img");
        let lab = dir.join("lab");
        let mut bytes = Vec::new();
        bytes.extend(IDX_IMAGES_MAGIC.to_be_bytes());
        bytes.extend(n.to_be_bytes());
        bytes.extend(2u32.to_be_bytes());
        bytes.extend(3u32.to_be_bytes());
        bytes.extend((0..n * 6).map(|i| (i % 256) as u8));
        bytes.truncate(bytes.len() - truncate);
        fs::write(&img, bytes).unwrap();
        let mut lb = Vec::new();
        lb.extend(IDX_LABELS_MAGIC.to_be_bytes());
        lb.extend(n_labels.to_be_bytes());
        lb.extend((0..n_labels).map(|i| (i % 3) as u8));
        fs::write(&lab, lb).unwrap();
        (img, lab)
    }

    #[test]
    fn idx_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = write_idx(dir.path(), 4, 4, 0);
        let ds = load_idx(&img, &lab).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.dim(), 6);
        assert_eq!(ds.classes, 3);
        assert_eq!(ds.features.row(1), &[6.0, 7.0, 8.0, 9.0, 10.0, 11.0]);
        assert_eq!(ds.labels, vec![0, 1, 2, 0]);
        assert_eq!(load_idx(&img, &lab).unwrap(), ds);
    }

    #[test]
    fn idx_errors() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = write_idx(dir.path(), 4, 4, 5);
        assert!(matches!(load_idx(&img, &lab), Err(Error::Format { .. })));
        let (img, lab) = write_idx(dir.path(), 4, 3, 0);
        assert!(matches!(load_idx(&img, &lab), Err(Error::Consistency(_))));
        // swapped files: wrong magic
        let (img, lab) = write_idx(dir.path(), 4, 4, 0);
        assert!(matches!(load_idx(&lab, &img), Err(Error::Format { .. })));
    }

    fn csv_file(dir: &Path, body: &str) -> std::path::PathBuf {
        let p = dir.join("t.csv");
        let mut f = fs::File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn csv_loading() {
        let dir = tempfile::tempdir().unwrap();
        let p = csv_file(dir.path(), "a,b,y\n1,2,0\n3,4.5,1\n-1,0,1\n");
        let ds = load_csv(&p, "y", None).unwrap();
        assert_eq!((ds.len(), ds.dim(), ds.classes), (3, 2, 2));
        assert_eq!(ds.features.row(1), &[3.0, 4.5]);

        assert!(matches!(load_csv(&p, "label", None), Err(Error::Schema(_))));

        let p = csv_file(dir.path(), "a,b,y\n1,2,0\n3,oops,1\n");
        match load_csv(&p, "y", None) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected parse error, got {other:?}"),
        }

        let p = csv_file(dir.path(), "x,cls\n0.5,cat\n0.1,dog\n0.2,cat\n");
        let ds = load_csv(&p, "cls", Some(&["x".to_string()])).unwrap();
        assert_eq!(ds.labels, vec![0, 1, 0]);
    }

    #[test]
    fn minmax_and_constant_features() {
        let f = Tensor::from_rows(&[vec![0.0, 7.0], vec![255.0, 7.0], vec![51.0, 7.0]]).unwrap();
        let ds = Dataset::new("t", f, vec![0, 1, 0], 2).unwrap();
        let (n, _, _) = normalize(&ds, &[], NormMode::MinMax);
        assert_eq!(n.features.get2(1, 0), 1.0);
        assert_eq!(n.features.get2(0, 0), -1.0);
        assert!((0..3).all(|i| n.features.get2(i, 1) == 0.0));
    }

    #[test]
    fn zscore_statistics_and_inverse() {
        let spec = SyntheticSpec::new(SyntheticKind::GaussianBlobs, 500, 4, 3, 5);
        let raw = synthetic_dataset(&spec).unwrap();
        let test = raw.take(50);
        let (train, others, norm) = normalize(&raw, std::slice::from_ref(&test), NormMode::ZScore);
        for j in 0..4 {
            let col: Vec<f64> = (0..train.len()).map(|i| train.features.get2(i, j)).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 1e-12);
            assert!((var.sqrt() - 1.0).abs() < 1e-12);
        }
        // statistics come from train only
        assert_eq!(others[0].features.row(0), train.features.row(0));
        let back = norm.invert(&train);
        for (a, b) in back.features.data().iter().zip(raw.features.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn batching() {
        let plan = BatchPlan { batch_size: 3, seed: 1, drop_last: true };
        let sizes: Vec<usize> = plan.batches(10, 0).unwrap().iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![3, 3, 3]);

        let plan = BatchPlan::new(3, 9);
        assert_eq!(plan.batches(10, 2).unwrap(), plan.batches(10, 2).unwrap());
        assert_ne!(plan.batches(10, 2).unwrap(), plan.batches(10, 3).unwrap());
        let mut all: Vec<usize> = plan.batches(10, 0).unwrap().concat();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());

        assert!(BatchPlan::new(0, 1).batches(10, 0).is_err());
        assert!(BatchPlan::new(11, 1).batches(10, 0).is_err());
    }

    #[test]
    fn batch_labels_cover_dataset() {
        let ds = synthetic_dataset(&SyntheticSpec::new(SyntheticKind::GaussianBlobs, 37, 3, 3, 0)).unwrap();
        let mut counts = vec![0.0; 3];
        for (_, y) in batch_iter(&ds, &BatchPlan::new(8, 4), 0).unwrap() {
            for r in 0..y.rows() {
                for (c, v) in y.row(r).iter().enumerate() {
                    counts[c] += v;
                }
            }
        }
        let mut want = vec![0.0; 3];
        for &l in &ds.labels {
            want[l] += 1.0;
        }
        assert_eq!(counts, want);
    }

    proptest::proptest! {
        #[test]
        fn minmax_range_and_inverse(rows in proptest::collection::vec(proptest::collection::vec(-1e3f64..1e3, 3), 2..40)) {
            let ds = Dataset::new("p", Tensor::from_rows(&rows).unwrap(), vec![0; rows.len()], 2).unwrap();
            let (n, _, norm) = normalize(&ds, &[], NormMode::MinMax);
            proptest::prop_assert!(n.features.data().iter().all(|v| (-1.0..=1.0).contains(v)));
            let back = norm.invert(&n);
            for (j, (a, b)) in back.features.data().iter().zip(ds.features.data()).enumerate() {
                let col = j % 3;
                let constant = rows.iter().all(|r| r[col] == rows[0][col]);
                if !constant {
                    proptest::prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
                }
            }
        }
    }

    #[test]
    fn synthetic_is_deterministic() {
        let s = SyntheticSpec::new(SyntheticKind::TwoSpirals, 100, 2, 2, 3);
        assert_eq!(synthetic_dataset(&s).unwrap(), synthetic_dataset(&s).unwrap());
        let cube = synthetic_dataset(&SyntheticSpec::new(SyntheticKind::UniformCube, 100, 5, 2, 3)).unwrap();
        assert_eq!(cube.dim(), 5);
        assert!(cube.features.data().iter().all(|v| (0.0..1.0).contains(v)));
    }
}
