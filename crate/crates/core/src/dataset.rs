//! Labeled datasets: synthetic generation, half splits and persistence.
//!
//! On disk a dataset is a directory with two files:
//!
//! * `data.csv` with header `id,f0,...,f{d-1},observed_label[,true_label]`,
//!   floats written with 17 significant digits so they read back bit-exactly;
//! * `manifest.json` holding `n`, `d`, `c`, the optional noise and blob
//!   specs, and `schema_version`.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{corrupt_labels, NoiseSpec};
use crate::rng::{derive_seed, rng_from_seed};

pub const SCHEMA_VERSION: u32 = 1;
pub const DATA_FILE: &str = "data.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Gaussian class blobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub c: usize,
    pub d: usize,
    pub n_per_class: usize,
    /// Radius of the sphere the class means sit on.
    pub separation: f64,
    /// Within-class standard deviation.
    pub spread: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub n: usize,
    pub d: usize,
    pub c: usize,
    pub noise: Option<NoiseSpec>,
    pub blob: Option<BlobSpec>,
    pub schema_version: u32,
}

/// Features plus observed labels, with the true labels when they are known.
///
/// Learners only see `observed_labels`; `true_labels` exists for evaluation
/// and for the distributional oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<f64>,
    d: usize,
    observed_labels: Vec<usize>,
    true_labels: Option<Vec<usize>>,
    ids: Vec<u64>,
    c: usize,
    pub noise: Option<NoiseSpec>,
    pub blob: Option<BlobSpec>,
}

impl LabeledDataset {
    /// Builds a dataset, checking shapes, label ranges and id uniqueness.
    pub fn new(
        features: Vec<f64>,
        d: usize,
        observed_labels: Vec<usize>,
        true_labels: Option<Vec<usize>>,
        ids: Vec<u64>,
        c: usize,
    ) -> Result<Self> {
        let n = observed_labels.len();
        if c < 2 {
            return Err(Error::Validation(format!("need at least 2 classes, got {c}")));
        }
        if features.len() != n * d {
            return Err(Error::Validation(format!(
                "feature matrix has {} values, expected {n} x {d}",
                features.len()
            )));
        }
        if ids.len() != n {
            return Err(Error::LengthMismatch { left: ids.len(), right: n });
        }
        if let Some(t) = &true_labels {
            if t.len() != n {
                return Err(Error::LengthMismatch { left: t.len(), right: n });
            }
        }
        let labels = observed_labels
            .iter()
            .chain(true_labels.iter().flatten());
        if let Some(bad) = labels.copied().find(|&y| y >= c) {
            return Err(Error::Validation(format!(
                "label {bad} out of range for c = {c}"
            )));
        }
        let mut seen = HashSet::with_capacity(n);
        if let Some(dup) = ids.iter().find(|id| !seen.insert(**id)) {
            return Err(Error::Validation(format!("duplicate id {dup}")));
        }
        Ok(Self {
            features,
            d,
            observed_labels,
            true_labels,
            ids,
            c,
            noise: None,
            blob: None,
        })
    }

    /// Dataset without features whose observed labels equal the given true
    /// labels. Enough for the distributional oracle, which ignores features.
    pub fn from_true_labels(true_labels: Vec<usize>, c: usize) -> Result<Self> {
        let n = true_labels.len();
        Self::new(
            Vec::new(),
            0,
            true_labels.clone(),
            Some(true_labels),
            (0..n as u64).collect(),
            c,
        )
    }

    pub fn len(&self) -> usize {
        self.observed_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed_labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn num_classes(&self) -> usize {
        self.c
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn observed_labels(&self) -> &[usize] {
        &self.observed_labels
    }

    pub fn true_labels(&self) -> Option<&[usize]> {
        self.true_labels.as_deref()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    /// Replaces the observed labels, keeping everything else.
    pub fn with_observed_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::LengthMismatch { left: labels.len(), right: self.len() });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= self.c) {
            return Err(Error::Index { index: bad, len: self.c });
        }
        self.observed_labels = labels;
        Ok(self)
    }

    pub fn without_true_labels(mut self) -> Self {
        self.true_labels = None;
        self
    }

    /// Corrupts the true labels according to `spec` and records the spec.
    pub fn corrupted(self, spec: &NoiseSpec) -> Result<Self> {
        let truth = self.true_labels.clone().ok_or(Error::MissingTrueLabels)?;
        let t = spec.matrix(self.c)?;
        let noisy = corrupt_labels(&truth, &t, spec.seed)?;
        let mut out = self.with_observed_labels(noisy)?;
        out.noise = Some(spec.clone());
        Ok(out)
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        let mut features = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        LabeledDataset {
            features,
            d: self.d,
            observed_labels: indices.iter().map(|&i| self.observed_labels[i]).collect(),
            true_labels: self
                .true_labels
                .as_ref()
                .map(|t| indices.iter().map(|&i| t[i]).collect()),
            ids: indices.iter().map(|&i| self.ids[i]).collect(),
            c: self.c,
            noise: self.noise.clone(),
            blob: self.blob.clone(),
        }
    }

    /// Rows whose id is in `ids`, in dataset order.
    pub fn subset_by_ids(&self, ids: &[u64]) -> LabeledDataset {
        let wanted: HashSet<u64> = ids.iter().copied().collect();
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| wanted.contains(&self.ids[i]))
            .collect();
        self.subset(&idx)
    }

    /// Positions where observed and true labels agree. `None` without true labels.
    pub fn clean_mask(&self) -> Option<Vec<bool>> {
        self.true_labels.as_ref().map(|t| {
            t.iter()
                .zip(&self.observed_labels)
                .map(|(a, b)| a == b)
                .collect()
        })
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            n: self.len(),
            d: self.d,
            c: self.c,
            noise: self.noise.clone(),
            blob: self.blob.clone(),
            schema_version: SCHEMA_VERSION,
        }
    }
}

/// Class means on a sphere of radius `separation`, from seeded Gaussian directions.
pub fn blob_means(spec: &BlobSpec) -> Vec<Vec<f64>> {
    let mut rng = rng_from_seed(derive_seed(spec.seed, 0));
    (0..spec.c)
        .map(|_| {
            let dir: Vec<f64> = (0..spec.d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return vec![0.0; spec.d];
            }
            dir.iter().map(|v| v / norm * spec.separation).collect()
        })
        .collect()
}

/// Generates `n_per_class` Gaussian samples around each class mean, class by
/// class, with ids `0..n`. Observed labels start equal to the true labels.
pub fn make_blobs(spec: &BlobSpec) -> Result<LabeledDataset> {
    make_blobs_stream(spec, 1)
}

/// Like [`make_blobs`] but drawing the samples from stream `stream` of the
/// spec seed. Class means depend only on the seed, so different streams give
/// independent samples from the same distribution (e.g. a held-out test set).
pub fn make_blobs_stream(spec: &BlobSpec, stream: u64) -> Result<LabeledDataset> {
    if !(spec.spread > 0.0) {
        return Err(Error::Domain(format!("spread must be positive, got {}", spec.spread)));
    }
    if !(spec.separation >= 0.0) {
        return Err(Error::Domain(format!(
            "separation must be non-negative, got {}",
            spec.separation
        )));
    }
    if spec.n_per_class == 0 || spec.d == 0 {
        return Err(Error::Domain("blobs need n_per_class >= 1 and d >= 1".into()));
    }
    let means = blob_means(spec);
    let n = spec.c * spec.n_per_class;
    if stream == 0 {
        return Err(Error::Domain("sample stream 0 is reserved for class means".into()));
    }
    let mut rng = rng_from_seed(derive_seed(spec.seed, stream));
    let mut features = Vec::with_capacity(n * spec.d);
    let mut labels = Vec::with_capacity(n);
    for (class, mean) in means.iter().enumerate() {
        for _ in 0..spec.n_per_class {
            for &m in mean {
                let z: f64 = StandardNormal.sample(&mut rng);
                features.push(m + spec.spread * z);
            }
            labels.push(class);
        }
    }
    let mut ds = LabeledDataset::new(
        features,
        spec.d,
        labels.clone(),
        Some(labels),
        (0..n as u64).collect(),
        spec.c,
    )?;
    ds.blob = Some(spec.clone());
    Ok(ds)
}

/// Uniform random partition of `0..n` into halves of sizes `ceil(n/2)` and `floor(n/2)`.
/// Each half is returned in ascending order.
pub fn split_indices(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from_seed(seed));
    let second = idx.split_off(n.div_ceil(2));
    let mut first = idx;
    first.sort_unstable();
    let mut second = second;
    second.sort_unstable();
    (first, second)
}

/// Splits a dataset into two random halves; the first gets the odd sample.
pub fn split_half(ds: &LabeledDataset, seed: u64) -> (LabeledDataset, LabeledDataset) {
    let (a, b) = split_indices(ds.len(), seed);
    (ds.subset(&a), ds.subset(&b))
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `data.csv` and `manifest.json` into `dir`, creating it if needed.
pub fn save(ds: &LabeledDataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = String::with_capacity(ds.len() * (ds.d + 2) * 24);
    out.push_str("id");
    for j in 0..ds.d {
        out.push_str(&format!(",f{j}"));
    }
    out.push_str(",observed_label");
    if ds.true_labels.is_some() {
        out.push_str(",true_label");
    }
    out.push('\n');
    for i in 0..ds.len() {
        out.push_str(&ds.ids[i].to_string());
        for &v in ds.row(i) {
            out.push(',');
            out.push_str(&fmt_f64(v));
        }
        out.push(',');
        out.push_str(&ds.observed_labels[i].to_string());
        if let Some(t) = &ds.true_labels {
            out.push(',');
            out.push_str(&t[i].to_string());
        }
        out.push('\n');
    }
    let data_path = dir.join(DATA_FILE);
    fs::write(&data_path, out).map_err(|e| Error::io(&data_path, e))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&ds.manifest())?;
    fs::write(&manifest_path, json + "\n").map_err(|e| Error::io(&manifest_path, e))?;
    Ok(())
}

pub fn load_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    let path = dir.as_ref().join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Schema {
        path: path.clone(),
        line: e.line() as u64,
        message: e.to_string(),
    })?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(Error::Schema {
            path,
            line: 1,
            message: format!("unsupported schema_version {}", manifest.schema_version),
        });
    }
    Ok(manifest)
}

/// Reads a dataset directory written by [`save`].
pub fn load(dir: impl AsRef<Path>) -> Result<LabeledDataset> {
    let dir = dir.as_ref();
    let manifest = load_manifest(dir)?;
    let path = dir.join(DATA_FILE);
    let schema = |line: u64, message: String| Error::Schema {
        path: path.clone(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(&path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(&path, io),
            other => schema(1, format!("{other:?}")),
        })?;
    let header = reader
        .headers()
        .map_err(|e| schema(1, e.to_string()))?
        .clone();
    let cols: Vec<&str> = header.iter().collect();
    let d = manifest.d;
    let mut expected: Vec<String> = vec!["id".into()];
    expected.extend((0..d).map(|j| format!("f{j}")));
    expected.push("observed_label".into());
    for (k, name) in expected.iter().enumerate() {
        if cols.get(k) != Some(&name.as_str()) {
            return Err(schema(
                1,
                format!("missing column '{name}' at position {k} (found {:?})", cols.get(k)),
            ));
        }
    }
    let has_truth = match cols.len() - expected.len() {
        0 => false,
        1 if cols[expected.len()] == "true_label" => true,
        _ => {
            return Err(schema(
                1,
                format!("unexpected columns after observed_label: {:?}", &cols[expected.len()..]),
            ))
        }
    };
    let mut features = Vec::with_capacity(manifest.n * d);
    let mut observed = Vec::with_capacity(manifest.n);
    let mut truth = Vec::new();
    let mut ids = Vec::with_capacity(manifest.n);
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            schema(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |k: usize| record.get(k).unwrap_or("");
        ids.push(
            field(0)
                .parse::<u64>()
                .map_err(|e| schema(line, format!("column 'id': {e}")))?,
        );
        for j in 0..d {
            features.push(
                field(1 + j)
                    .parse::<f64>()
                    .map_err(|e| schema(line, format!("column 'f{j}': {e}")))?,
            );
        }
        observed.push(
            field(1 + d)
                .parse::<usize>()
                .map_err(|e| schema(line, format!("column 'observed_label': {e}")))?,
        );
        if has_truth {
            truth.push(
                field(2 + d)
                    .parse::<usize>()
                    .map_err(|e| schema(line, format!("column 'true_label': {e}")))?,
            );
        }
    }
    if observed.len() != manifest.n {
        return Err(Error::Validation(format!(
            "manifest says n = {} but data has {} rows",
            manifest.n,
            observed.len()
        )));
    }
    let max_label = observed.iter().chain(&truth).copied().max();
    if let Some(m) = max_label {
        if m >= manifest.c {
            return Err(Error::Validation(format!(
                "manifest c = {} but label {m} present",
                manifest.c
            )));
        }
    }
    let mut ds = LabeledDataset::new(
        features,
        d,
        observed,
        has_truth.then_some(truth),
        ids,
        manifest.c,
    )?;
    ds.noise = manifest.noise;
    ds.blob = manifest.blob;
    Ok(ds)
}
