//! Walker/Vose alias table for O(1) draws from a discrete distribution.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct AliasTable {
    threshold: Vec<f64>,
    alias: Vec<usize>,
}

/// Checks that `probs` is a finite, non-negative vector summing to 1 within
/// 1e-9.
pub fn validate_probs(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::InvalidProbabilities("empty".into()));
    }
    if let Some((i, p)) = probs
        .iter()
        .enumerate()
        .find(|(_, p)| !(**p >= 0.0 && p.is_finite()))
    {
        return Err(Error::InvalidProbabilities(format!("entry {i} is {p}")));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidProbabilities(format!("sum is {sum}")));
    }
    Ok(())
}

impl AliasTable {
    pub fn new(probs: &[f64]) -> Result<Self> {
        validate_probs(probs)?;
        let n = probs.len();
        let mut scaled: Vec<f64> = probs.iter().map(|p| p * n as f64).collect();
        let mut threshold = vec![0.0; n];
        let mut alias: Vec<usize> = (0..n).collect();
        let (mut small, mut large): (Vec<usize>, Vec<usize>) =
            (0..n).partition(|&i| scaled[i] < 1.0);
        // pop from the back, so reverse to serve low indices first
        small.reverse();
        large.reverse();
        while let (Some(&l), Some(&g)) = (small.last(), large.last()) {
            small.pop();
            large.pop();
            threshold[l] = scaled[l];
            alias[l] = g;
            scaled[g] -= 1.0 - scaled[l];
            if scaled[g] < 1.0 {
                small.push(g);
            } else {
                large.push(g);
            }
        }
        let heaviest = (0..n)
            .max_by(|&a, &b| probs[a].total_cmp(&probs[b]).then(b.cmp(&a)))
            .expect("non-empty");
        for i in large.into_iter().chain(small) {
            // leftovers are full columns up to rounding; never promote a
            // zero-probability entry
            if probs[i] > 0.0 {
                threshold[i] = 1.0;
            } else {
                threshold[i] = 0.0;
                alias[i] = heaviest;
            }
        }
        Ok(AliasTable { threshold, alias })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidProbabilities("empty".into()));
        }
        Ok(AliasTable {
            threshold: vec![1.0; n],
            alias: (0..n).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.threshold.len()
    }

    pub fn is_empty(&self) -> bool {
        self.threshold.is_empty()
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let column = rng.random_range(0..self.threshold.len());
        if rng.random::<f64>() < self.threshold[column] {
            column
        } else {
            self.alias[column]
        }
    }

    /// Draw `batch_size` indices with replacement.
    pub fn sample_batch<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Vec<usize> {
        let mut out = Vec::with_capacity(batch_size);
        self.sample_into(batch_size, rng, &mut out);
        out
    }

    pub fn sample_into<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
        out: &mut Vec<usize>,
    ) {
        out.clear();
        out.extend((0..batch_size).map(|_| self.sample(rng)));
    }
}
