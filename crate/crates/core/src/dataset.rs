//! Synthetic labeled datasets: Gaussian blobs, symmetric label noise,
//! stratified splits, and the CSV + JSON sidecar file format.
//!
//! CSV layout: a header row `f_0,...,f_{d-1},label,noise_flag`, then one row
//! per instance. `noise_flag` is `1`/`0`, or empty when the dataset carries no
//! noise flags. The sidecar (`<stem>.json` next to the CSV) records
//! `num_classes`, `dim`, `len`, `split`, `seed` and `has_noise_flags`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

/// Labeled instances sharing one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    num_classes: usize,
    noise_flags: Option<Vec<bool>>,
    split: SplitTag,
    seed: Option<u64>,
}

impl Dataset {
    pub fn new(
        features: Vec<Vec<f64>>,
        labels: Vec<usize>,
        num_classes: usize,
        split: SplitTag,
    ) -> Result<Self> {
        let ds = Dataset {
            features,
            labels,
            num_classes,
            noise_flags: None,
            split,
            seed: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::invalid("num_classes must be at least 2"));
        }
        if self.features.len() != self.labels.len() {
            return Err(Error::DimensionMismatch {
                expected: self.features.len(),
                found: self.labels.len(),
            });
        }
        if let Some(first) = self.features.first() {
            let d = first.len();
            if d == 0 {
                return Err(Error::invalid("feature dimension must be at least 1"));
            }
            if let Some(bad) = self.features.iter().find(|x| x.len() != d) {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: bad.len(),
                });
            }
        }
        if let Some(&y) = self.labels.iter().find(|&&y| y >= self.num_classes) {
            return Err(Error::invalid(format!(
                "label {y} outside [0, {})",
                self.num_classes
            )));
        }
        if let Some(flags) = &self.noise_flags {
            if flags.len() != self.labels.len() {
                return Err(Error::DimensionMismatch {
                    expected: self.labels.len(),
                    found: flags.len(),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Feature dimension, or 0 for an empty dataset.
    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn noise_flags(&self) -> Option<&[bool]> {
        self.noise_flags.as_deref()
    }

    pub fn split(&self) -> SplitTag {
        self.split
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    fn subset(&self, idx: &[usize], split: SplitTag) -> Dataset {
        Dataset {
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            noise_flags: self
                .noise_flags
                .as_ref()
                .map(|f| idx.iter().map(|&i| f[i]).collect()),
            split,
            seed: self.seed,
        }
    }
}

/// Parameters of the Gaussian-blob generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobSpec {
    pub num_classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub separation: f64,
    pub spread: f64,
    pub seed: u64,
}

/// Class means sit on the integer lattice `{0..b-1}^d` (with `b` the smallest
/// base giving at least `K` points), class `c` taking the base-`b` digits of
/// `c`, scaled by `separation`. The seed permutes which axis carries which
/// digit.
fn class_means(spec: &BlobSpec) -> Vec<Vec<f64>> {
    let (k, d) = (spec.num_classes, spec.dim);
    let mut base = 2usize;
    while (base as f64).powi(d as i32) < k as f64 {
        base += 1;
    }
    let mut axes: Vec<usize> = (0..d).collect();
    axes.shuffle(&mut rng_from_seed(spec.seed ^ 0xA5A5_A5A5));
    (0..k)
        .map(|c| {
            let mut mean = vec![0.0; d];
            let mut rest = c;
            for &axis in &axes {
                mean[axis] = spec.separation * (rest % base) as f64;
                rest /= base;
            }
            mean
        })
        .collect()
}

pub fn generate_blobs(spec: &BlobSpec) -> Result<Dataset> {
    if spec.num_classes < 2 {
        return Err(Error::invalid("num_classes must be at least 2"));
    }
    if spec.dim < 1 {
        return Err(Error::invalid("dim must be at least 1"));
    }
    if spec.per_class < 1 {
        return Err(Error::invalid("per_class must be at least 1"));
    }
    if !(spec.spread > 0.0 && spec.spread.is_finite()) {
        return Err(Error::invalid("spread must be positive"));
    }
    if !spec.separation.is_finite() {
        return Err(Error::invalid("separation must be finite"));
    }
    let means = class_means(spec);
    let noise = Normal::new(0.0, spec.spread).expect("spread validated");
    let mut rng = rng_from_seed(spec.seed);
    let n = spec.num_classes * spec.per_class;
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..spec.per_class {
            features.push(mean.iter().map(|m| m + noise.sample(&mut rng)).collect());
            labels.push(c);
        }
    }
    Ok(Dataset::new(features, labels, spec.num_classes, SplitTag::Train)?.with_seed(spec.seed))
}

/// Flip exactly `floor(rate * n_c)` labels inside each class `c` to a
/// uniformly chosen different class.
pub fn inject_label_noise(ds: &Dataset, rate: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::invalid(format!("noise rate {rate} outside [0, 1]")));
    }
    if ds.noise_flags.is_some() {
        return Err(Error::invalid("dataset already carries noise flags"));
    }
    let k = ds.num_classes;
    let mut rng = rng_from_seed(seed);
    let mut out = ds.clone();
    let mut flags = vec![false; ds.len()];
    for c in 0..k {
        let mut members: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == c).collect();
        let flips = (rate * members.len() as f64).floor() as usize;
        members.shuffle(&mut rng);
        for &i in &members[..flips] {
            // uniform over the K-1 other classes
            let r = rng.random_range(0..k - 1);
            out.labels[i] = if r >= c { r + 1 } else { r };
            flags[i] = true;
        }
    }
    out.noise_flags = Some(flags);
    Ok(out)
}

/// Stratified three-way split. Every fraction must be positive and every part
/// must end up non-empty.
pub fn split(ds: &Dataset, fractions: [f64; 3], seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    if fractions.iter().any(|&f| !(f > 0.0 && f.is_finite())) {
        return Err(Error::invalid(format!(
            "split fractions must all be positive, got {fractions:?}"
        )));
    }
    if (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split fractions must sum to 1, got {fractions:?}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut parts: [Vec<usize>; 3] = Default::default();
    for c in 0..ds.num_classes {
        let mut members: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == c).collect();
        members.shuffle(&mut rng);
        let n_c = members.len() as f64;
        let n_train = (fractions[0] * n_c).round() as usize;
        let n_val = ((fractions[1] * n_c).round() as usize).min(members.len() - n_train);
        parts[0].extend_from_slice(&members[..n_train]);
        parts[1].extend_from_slice(&members[n_train..n_train + n_val]);
        parts[2].extend_from_slice(&members[n_train + n_val..]);
    }
    for (part, name) in parts.iter_mut().zip(["train", "val", "test"]) {
        if part.is_empty() {
            return Err(Error::invalid(format!("{name} split would be empty")));
        }
        part.sort_unstable();
    }
    Ok((
        ds.subset(&parts[0], SplitTag::Train),
        ds.subset(&parts[1], SplitTag::Val),
        ds.subset(&parts[2], SplitTag::Test),
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    num_classes: usize,
    dim: usize,
    len: usize,
    split: SplitTag,
    seed: Option<u64>,
    has_noise_flags: bool,
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn save(ds: &Dataset, path: &Path) -> Result<()> {
    let d = ds.dim();
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let mut header: Vec<String> = (0..d).map(|j| format!("f_{j}")).collect();
    header.push("label".into());
    header.push("noise_flag".into());
    w.write_record(&header)?;
    let mut row: Vec<String> = Vec::with_capacity(d + 2);
    for i in 0..ds.len() {
        row.clear();
        row.extend(ds.features[i].iter().map(|v| v.to_string()));
        row.push(ds.labels[i].to_string());
        row.push(match &ds.noise_flags {
            Some(f) => u8::from(f[i]).to_string(),
            None => String::new(),
        });
        w.write_record(&row)?;
    }
    w.flush()?;

    let sidecar = Sidecar {
        num_classes: ds.num_classes,
        dim: d,
        len: ds.len(),
        split: ds.split,
        seed: ds.seed,
        has_noise_flags: ds.noise_flags.is_some(),
    };
    let mut f = BufWriter::new(File::create(sidecar_path(path))?);
    serde_json::to_writer_pretty(&mut f, &sidecar)?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Dataset> {
    let sidecar: Sidecar =
        serde_json::from_reader(BufReader::new(File::open(sidecar_path(path))?))?;
    let mut r = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let header = r.headers()?.clone();
    let d = sidecar.dim;
    let expected: Vec<String> = (0..d)
        .map(|j| format!("f_{j}"))
        .chain(["label".to_string(), "noise_flag".to_string()])
        .collect();
    if header.len() != expected.len() {
        return Err(Error::format(
            path,
            format!(
                "expected {} columns for dim {d}, header has {}",
                expected.len(),
                header.len()
            ),
        ));
    }
    if let Some((got, want)) = header.iter().zip(&expected).find(|(a, b)| a != b) {
        return Err(Error::format(
            path,
            format!("unexpected column `{got}`, expected `{want}`"),
        ));
    }

    let mut features = Vec::with_capacity(sidecar.len);
    let mut labels = Vec::with_capacity(sidecar.len);
    let mut flags = Vec::with_capacity(sidecar.len);
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != d + 2 {
            return Err(Error::format(
                path,
                format!("row {line}: wrong field count"),
            ));
        }
        let row: Vec<f64> = rec
            .iter()
            .take(d)
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::format(path, format!("row {line}: {e}")))?;
        features.push(row);
        labels.push(
            rec[d]
                .parse::<usize>()
                .map_err(|e| Error::format(path, format!("row {line}: label: {e}")))?,
        );
        match (&rec[d + 1], sidecar.has_noise_flags) {
            ("1", true) => flags.push(true),
            ("0", true) => flags.push(false),
            ("", false) => {}
            (other, _) => {
                return Err(Error::format(
                    path,
                    format!("row {line}: bad noise_flag `{other}`"),
                ))
            }
        }
    }
    if features.len() != sidecar.len {
        return Err(Error::format(
            path,
            format!(
                "sidecar says {} rows, file has {}",
                sidecar.len,
                features.len()
            ),
        ));
    }
    let mut ds = Dataset::new(features, labels, sidecar.num_classes, sidecar.split)
        .map_err(|e| Error::format(path, e.to_string()))?;
    ds.seed = sidecar.seed;
    if sidecar.has_noise_flags {
        ds.noise_flags = Some(flags);
    }
    Ok(ds)
}
