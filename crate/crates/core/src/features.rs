//! Static per-instance features computed once from a pretrained checkpoint:
//! cross-entropy loss and renormed entropy (both rank-normalized into
//! `(0, 1]`), plus the full-parameter gradient norm.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::ModelWeights;

/// Piecewise-linear empirical cdf through `(value_k, avg_rank_k / n)` at the
/// sorted distinct sample values; constant beyond the observed range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfTable {
    values: Vec<f64>,
    cdf: Vec<f64>,
}

impl CdfTable {
    pub fn eval(&self, x: f64) -> f64 {
        let last = self.values.len() - 1;
        if x <= self.values[0] {
            return self.cdf[0];
        }
        if x >= self.values[last] {
            return self.cdf[last];
        }
        let j = self.values.partition_point(|&v| v <= x);
        let t = (x - self.values[j - 1]) / (self.values[j] - self.values[j - 1]);
        self.cdf[j - 1] + t * (self.cdf[j] - self.cdf[j - 1])
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.values, &self.cdf)
    }
}

/// Rank transform: `mapped[i] = average_rank(values[i]) / n`, ties sharing the
/// mean of their ranks.
pub fn empirical_cdf(values: &[f64]) -> Result<(Vec<f64>, CdfTable)> {
    let n = values.len();
    if n == 0 {
        return Err(Error::Empty("cdf input"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("cdf input must be finite"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut mapped = vec![0.0; n];
    let mut knots = Vec::new();
    let mut cdf = Vec::new();
    let mut start = 0;
    while start < n {
        let v = values[order[start]];
        let mut end = start + 1;
        while end < n && values[order[end]] == v {
            end += 1;
        }
        // 1-based ranks start+1 ..= end
        let avg_rank = (start + 1 + end) as f64 / 2.0;
        let q = avg_rank / n as f64;
        for &i in &order[start..end] {
            mapped[i] = q;
        }
        knots.push(v);
        cdf.push(q);
        start = end;
    }
    Ok((mapped, CdfTable { values: knots, cdf }))
}

/// Entropy (natural log) of the predicted distribution with the true class
/// removed and the remainder renormalized. Returns 0 when the remainder has
/// no mass.
pub fn renormed_entropy(prob: &[f64], y: usize) -> Result<f64> {
    if prob.len() < 2 {
        return Err(Error::invalid("renormed entropy needs at least 2 classes"));
    }
    if y >= prob.len() {
        return Err(Error::invalid(format!(
            "label {y} outside [0, {})",
            prob.len()
        )));
    }
    let rest: f64 = prob
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != y)
        .map(|(_, p)| p)
        .sum();
    if rest <= 1e-15 {
        return Ok(0.0);
    }
    let h = prob
        .iter()
        .enumerate()
        .filter(|&(j, &p)| j != y && p > 0.0)
        .map(|(_, p)| {
            let q = p / rest;
            -q * q.ln()
        })
        .sum::<f64>();
    Ok(h.max(0.0))
}

/// Immutable per-instance feature table for a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    raw_loss: Vec<f64>,
    raw_er: Vec<f64>,
    loss_cdf: Vec<f64>,
    er_cdf: Vec<f64>,
    grad_norm: Vec<f64>,
    loss_table: CdfTable,
    er_table: CdfTable,
}

impl FeatureTable {
    /// Number of normalized features per instance.
    pub const NUM_FEATURES: usize = 2;

    pub fn from_raw(raw_loss: Vec<f64>, raw_er: Vec<f64>, grad_norm: Vec<f64>) -> Result<Self> {
        let n = raw_loss.len();
        for len in [raw_er.len(), grad_norm.len()] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: len,
                });
            }
        }
        if grad_norm.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
            return Err(Error::invalid(
                "gradient norms must be finite and non-negative",
            ));
        }
        let (loss_cdf, loss_table) = empirical_cdf(&raw_loss)?;
        let (er_cdf, er_table) = empirical_cdf(&raw_er)?;
        Ok(FeatureTable {
            raw_loss,
            raw_er,
            loss_cdf,
            er_cdf,
            grad_norm,
            loss_table,
            er_table,
        })
    }

    pub fn len(&self) -> usize {
        self.raw_loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw_loss.is_empty()
    }

    pub fn num_features(&self) -> usize {
        Self::NUM_FEATURES
    }

    /// Normalized feature vector `(loss_cdf, er_cdf)` of instance `i`.
    pub fn features(&self, i: usize) -> [f64; 2] {
        [self.loss_cdf[i], self.er_cdf[i]]
    }

    pub fn raw_loss(&self) -> &[f64] {
        &self.raw_loss
    }

    pub fn raw_er(&self) -> &[f64] {
        &self.raw_er
    }

    pub fn loss_cdf(&self) -> &[f64] {
        &self.loss_cdf
    }

    pub fn er_cdf(&self) -> &[f64] {
        &self.er_cdf
    }

    pub fn grad_norms(&self) -> &[f64] {
        &self.grad_norm
    }

    pub fn loss_table(&self) -> &CdfTable {
        &self.loss_table
    }

    pub fn er_table(&self) -> &CdfTable {
        &self.er_table
    }

    /// CSV with columns `index,raw_loss,raw_er,loss_cdf,er_cdf,grad_norm`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
        w.write_record([
            "index",
            "raw_loss",
            "raw_er",
            "loss_cdf",
            "er_cdf",
            "grad_norm",
        ])?;
        for i in 0..self.len() {
            w.write_record([
                i.to_string(),
                self.raw_loss[i].to_string(),
                self.raw_er[i].to_string(),
                self.loss_cdf[i].to_string(),
                self.er_cdf[i].to_string(),
                self.grad_norm[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a table written by [`write_csv`](Self::write_csv); the cdf
    /// columns are recomputed from the raw ones.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_reader(File::open(path)?);
        let header = r.headers()?.clone();
        let want = [
            "index",
            "raw_loss",
            "raw_er",
            "loss_cdf",
            "er_cdf",
            "grad_norm",
        ];
        if header.iter().ne(want) {
            return Err(Error::format(path, "unexpected feature table header"));
        }
        let (mut loss, mut er, mut grad) = (Vec::new(), Vec::new(), Vec::new());
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let num = |k: usize| -> Result<f64> {
                rec[k]
                    .parse::<f64>()
                    .map_err(|e| Error::format(path, format!("row {line}: {e}")))
            };
            loss.push(num(1)?);
            er.push(num(2)?);
            grad.push(num(5)?);
        }
        Self::from_raw(loss, er, grad)
    }
}

/// Compute the feature table of `train` under the pretrained weights.
pub fn extract_features(w_pre: &ModelWeights, train: &Dataset) -> Result<FeatureTable> {
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if train.dim() != w_pre.input_dim() || train.num_classes() != w_pre.num_classes() {
        return Err(Error::DimensionMismatch {
            expected: w_pre.input_dim(),
            found: train.dim(),
        });
    }
    let n = train.len();
    let mut loss = Vec::with_capacity(n);
    let mut er = Vec::with_capacity(n);
    let mut grad = Vec::with_capacity(n);
    for (x, &y) in train.features().iter().zip(train.labels()) {
        let prob = w_pre.forward(x)?;
        loss.push(w_pre.loss(x, y)?);
        er.push(renormed_entropy(&prob, y)?);
        grad.push(w_pre.grad_norm(x, y)?);
    }
    FeatureTable::from_raw(loss, er, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Architecture;

    #[test]
    fn cdf_of_distinct_values() {
        let (m, _) = empirical_cdf(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(m, vec![1.0, 1.0 / 3.0, 2.0 / 3.0]);
    }

    #[test]
    fn cdf_ties_share_average_rank() {
        let (m, t) = empirical_cdf(&[5.0; 4]).unwrap();
        assert_eq!(m, vec![0.625; 4]);
        assert_eq!(t.eval(-100.0), 0.625);
        assert_eq!(t.eval(100.0), 0.625);
    }

    #[test]
    fn cdf_single_value() {
        let (m, _) = empirical_cdf(&[42.0]).unwrap();
        assert_eq!(m, vec![1.0]);
        assert!(empirical_cdf(&[]).is_err());
    }

    #[test]
    fn cdf_interpolates_between_samples() {
        let (_, t) = empirical_cdf(&[0.0, 1.0, 2.0, 3.0]).unwrap();
        assert!((t.eval(0.5) - 0.375).abs() < 1e-15);
        assert_eq!(t.eval(-1.0), 0.25);
        assert_eq!(t.eval(9.0), 1.0);
    }

    #[test]
    fn renormed_entropy_cases() {
        let h = renormed_entropy(&[0.2, 0.4, 0.4], 0).unwrap();
        assert!((h - 2f64.ln()).abs() < 1e-12);
        assert_eq!(renormed_entropy(&[0.5, 0.5, 0.0], 0).unwrap(), 0.0);
        // independent hand computation: rest (0.25, 0.5, 0.25)
        let hand = -(0.25 * 0.25f64.ln() + 0.5 * 0.5f64.ln() + 0.25 * 0.25f64.ln());
        let h4 = renormed_entropy(&[0.1, 0.6, 0.2, 0.1], 1).unwrap();
        assert!((h4 - hand).abs() < 1e-12);
        assert!((h4 - 1.039721).abs() < 1e-6);
    }

    #[test]
    fn renormed_entropy_collapsed_rest_is_zero() {
        assert_eq!(renormed_entropy(&[1.0, 0.0, 0.0], 0).unwrap(), 0.0);
        assert!(renormed_entropy(&[1.0], 0).is_err());
    }

    #[test]
    fn zero_model_ties_every_loss() {
        let ds = crate::dataset::generate_blobs(&crate::dataset::BlobSpec {
            num_classes: 10,
            dim: 3,
            per_class: 4,
            separation: 1.0,
            spread: 1.0,
            seed: 0,
        })
        .unwrap();
        let w = ModelWeights::zeros(Architecture::SoftmaxRegression, 3, 10).unwrap();
        let table = extract_features(&w, &ds).unwrap();
        let n = ds.len() as f64;
        for i in 0..table.len() {
            assert!((table.raw_loss()[i] - 10f64.ln()).abs() < 1e-12);
            assert!((table.loss_cdf()[i] - 0.5 * (n + 1.0) / n).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_round_trip() {
        let t = FeatureTable::from_raw(
            vec![0.5, 0.1, 2.0],
            vec![1.0, 0.3, 0.3],
            vec![0.2, 0.0, 1.4],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        t.write_csv(&p).unwrap();
        assert_eq!(FeatureTable::read_csv(&p).unwrap(), t);
    }

    #[test]
    fn flipped_instances_have_higher_loss() {
        use crate::dataset::{generate_blobs, inject_label_noise, BlobSpec};
        use crate::model::{train, TrainHyper};
        let clean = generate_blobs(&BlobSpec {
            num_classes: 10,
            dim: 16,
            per_class: 100,
            separation: 4.0,
            spread: 1.0,
            seed: 3,
        })
        .unwrap();
        let noisy = inject_label_noise(&clean, 0.4, 4).unwrap();
        let w0 = ModelWeights::init(Architecture::SoftmaxRegression, 16, 10, 0).unwrap();
        let w = train(&w0, &noisy, None, &TrainHyper::default()).unwrap();
        let t = extract_features(&w, &noisy).unwrap();
        let flags = noisy.noise_flags().unwrap();
        let mean = |flipped: bool| {
            let v: Vec<f64> = (0..t.len())
                .filter(|&i| flags[i] == flipped)
                .map(|i| t.raw_loss()[i])
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!(mean(true) > mean(false));
        let mut by_loss: Vec<usize> = (0..t.len()).collect();
        by_loss.sort_by(|&a, &b| t.raw_loss()[a].total_cmp(&t.raw_loss()[b]));
        assert!(by_loss
            .windows(2)
            .all(|p| t.loss_cdf()[p[0]] <= t.loss_cdf()[p[1]]));
        let n = t.len() as f64;
        assert!(t
            .loss_cdf()
            .iter()
            .chain(t.er_cdf())
            .all(|&c| c >= 1.0 / n && c <= 1.0));
    }
}
