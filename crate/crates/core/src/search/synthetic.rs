//! Training-free evaluators for exercising outer-loop agents.

use super::Evaluator;
use crate::error::{Error, Result};
use crate::sampler::SamplerParams;

/// `Q(z) = max(0, 1 - ||z - target||^2 / dim)`, read off the sampler's
/// encoding. Ignores the sampling distribution entirely.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    target: Vec<f64>,
}

impl Quadratic {
    pub fn new(target: Vec<f64>) -> Result<Self> {
        if target.is_empty() || target.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::invalid(
                "quadratic target must be a non-empty point of the unit cube",
            ));
        }
        Ok(Quadratic { target })
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        let d2: f64 = z
            .iter()
            .zip(&self.target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        (1.0 - d2 / self.target.len() as f64).max(0.0)
    }
}

impl Evaluator for Quadratic {
    fn evaluate(&mut self, params: &SamplerParams, _probs: &[f64]) -> Result<f64> {
        let z = params.encode();
        if z.len() != self.target.len() {
            return Err(Error::DimensionMismatch {
                expected: self.target.len(),
                found: z.len(),
            });
        }
        Ok(self.value(&z))
    }
}

/// Stand-in for validation accuracy under label noise: the probability mass
/// on clean instances, discounted when the distribution concentrates on fewer
/// instances than there are clean ones (effective sample size `1 / sum p^2`).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseProxy {
    clean: Vec<bool>,
    num_clean: usize,
}

impl NoiseProxy {
    /// `flipped[i]` marks a corrupted label.
    pub fn new(flipped: &[bool]) -> Result<Self> {
        let clean: Vec<bool> = flipped.iter().map(|f| !f).collect();
        let num_clean = clean.iter().filter(|&&c| c).count();
        if num_clean == 0 {
            return Err(Error::invalid(
                "noise proxy needs at least one clean instance",
            ));
        }
        Ok(NoiseProxy { clean, num_clean })
    }

    pub fn value(&self, probs: &[f64]) -> Result<f64> {
        if probs.len() != self.clean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.clean.len(),
                found: probs.len(),
            });
        }
        let clean_mass: f64 = probs
            .iter()
            .zip(&self.clean)
            .filter(|(_, &c)| c)
            .map(|(p, _)| p)
            .sum();
        let sum_sq: f64 = probs.iter().map(|p| p * p).sum();
        let ess = if sum_sq > 0.0 { 1.0 / sum_sq } else { 0.0 };
        Ok((clean_mass * (ess / self.num_clean as f64).min(1.0)).clamp(0.0, 1.0))
    }
}

impl Evaluator for NoiseProxy {
    fn evaluate(&mut self, _params: &SamplerParams, probs: &[f64]) -> Result<f64> {
        self.value(probs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_peaks_at_target() {
        let q = Quadratic::new(vec![0.2, 0.8]).unwrap();
        assert_eq!(q.value(&[0.2, 0.8]), 1.0);
        assert!((q.value(&[0.2, 0.3]) - (1.0 - 0.125)).abs() < 1e-15);
        assert!(Quadratic::new(vec![1.5]).is_err());
    }

    #[test]
    fn noise_proxy_hand_cases() {
        let np = NoiseProxy::new(&[false, false, true, true]).unwrap();
        // uniform: clean mass 0.5, ess 4 >= 2
        assert!((np.value(&[0.25; 4]).unwrap() - 0.5).abs() < 1e-15);
        // uniform over clean: mass 1, ess 2
        assert!((np.value(&[0.5, 0.5, 0.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        // point mass on one clean instance: ess 1 of 2
        assert!((np.value(&[1.0, 0.0, 0.0, 0.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(np.value(&[1.0]).is_err());
        assert!(NoiseProxy::new(&[true]).is_err());
    }
}
