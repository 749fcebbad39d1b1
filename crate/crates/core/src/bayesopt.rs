//! Gaussian-process UCB agent over the unit cube.
//!
//! The GP uses an RBF kernel with fixed hyperparameters and a constant prior
//! mean equal to the average of all observed scores (0.5 before the first
//! observation). The kernel matrix is factorized once per update; queries
//! reuse the cached Cholesky factor.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prior mean used before any score has been observed.
pub const EMPTY_PRIOR_MEAN: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpConfig {
    pub lengthscale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
    pub ucb_kappa: f64,
    /// Observations collected from the random initial design before UCB
    /// takes over.
    pub n_init: usize,
    pub acq_candidates: usize,
    pub acq_refine_top: usize,
    pub acq_refine_sweeps: usize,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            lengthscale: 0.3,
            signal_variance: 0.01,
            noise_variance: 1e-4,
            ucb_kappa: 2.0,
            n_init: 8,
            acq_candidates: 2048,
            acq_refine_top: 8,
            acq_refine_sweeps: 2,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lengthscale > 0.0) || !(self.signal_variance > 0.0) {
            return Err(Error::invalid(
                "lengthscale and signal_variance must be positive",
            ));
        }
        if !(self.noise_variance >= 0.0) || !(self.ucb_kappa >= 0.0) {
            return Err(Error::invalid(
                "noise_variance and ucb_kappa must be non-negative",
            ));
        }
        if self.acq_candidates == 0 || self.acq_refine_top == 0 {
            return Err(Error::invalid("acquisition needs at least one candidate"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub z: Vec<f64>,
    #[serde(rename = "Q")]
    pub q: f64,
}

pub fn rbf_kernel(z1: &[f64], z2: &[f64], cfg: &GpConfig) -> Result<f64> {
    if z1.len() != z2.len() {
        return Err(Error::DimensionMismatch {
            expected: z1.len(),
            found: z2.len(),
        });
    }
    Ok(rbf(z1, z2, cfg))
}

#[inline]
fn rbf(z1: &[f64], z2: &[f64], cfg: &GpConfig) -> f64 {
    let d2: f64 = z1.iter().zip(z2).map(|(a, b)| (a - b) * (a - b)).sum();
    cfg.signal_variance * (-d2 / (2.0 * cfg.lengthscale * cfg.lengthscale)).exp()
}

pub fn ucb(mean: f64, variance: f64, kappa: f64) -> f64 {
    mean + kappa * variance.max(0.0).sqrt()
}

/// In-place lower Cholesky factor of a row-major `n x n` SPD matrix.
fn cholesky(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        if !(diag > 0.0) {
            return false;
        }
        let ljj = diag.sqrt();
        a[j * n + j] = ljj;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / ljj;
        }
        for k in j + 1..n {
            a[j * n + k] = 0.0;
        }
    }
    true
}

/// Solve `L x = b` in place.
fn forward_sub(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Solve `L^T x = b` in place.
fn backward_sub(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Observation set plus the cached factorization of `K + noise * I`.
#[derive(Debug, Clone)]
pub struct BoState {
    dim: usize,
    config: GpConfig,
    observations: Vec<Observation>,
    prior_mean: f64,
    chol: Vec<f64>,
    alpha: Vec<f64>,
    jitter: f64,
}

impl BoState {
    pub fn new(dim: usize, config: GpConfig) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid(
                "search space must have at least one dimension",
            ));
        }
        config.validate()?;
        Ok(BoState {
            dim,
            config,
            observations: Vec::new(),
            prior_mean: EMPTY_PRIOR_MEAN,
            chol: Vec::new(),
            alpha: Vec::new(),
            jitter: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn config(&self) -> &GpConfig {
        &self.config
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    /// Diagonal jitter added on top of the noise variance by the last
    /// factorization.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    fn check_point(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: z.len(),
            });
        }
        if z.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("observation outside the unit cube"));
        }
        Ok(())
    }

    /// Append `(z, q)` and refresh the prior mean and factorization.
    pub fn update(&mut self, z: Vec<f64>, q: f64) -> Result<()> {
        self.check_point(&z)?;
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::invalid(format!("score {q} outside [0, 1]")));
        }
        self.observations.push(Observation { z, q });
        self.refactor()
    }

    fn refactor(&mut self) -> Result<()> {
        let n = self.observations.len();
        self.prior_mean = self.observations.iter().map(|o| o.q).sum::<f64>() / n as f64;
        let mut base = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let k = rbf(
                    &self.observations[i].z,
                    &self.observations[j].z,
                    &self.config,
                );
                base[i * n + j] = k;
                base[j * n + i] = k;
            }
        }
        let jitters = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];
        for &jitter in &jitters {
            let mut a = base.clone();
            for i in 0..n {
                a[i * n + i] += self.config.noise_variance + jitter;
            }
            if cholesky(&mut a, n) {
                let mut alpha: Vec<f64> = self
                    .observations
                    .iter()
                    .map(|o| o.q - self.prior_mean)
                    .collect();
                forward_sub(&a, n, &mut alpha);
                backward_sub(&a, n, &mut alpha);
                self.chol = a;
                self.alpha = alpha;
                self.jitter = jitter;
                return Ok(());
            }
        }
        Err(Error::NotPositiveDefinite)
    }

    /// Posterior mean and variance at `z`.
    pub fn posterior(&self, z: &[f64]) -> Result<(f64, f64)> {
        if z.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: z.len(),
            });
        }
        Ok(self.posterior_unchecked(z))
    }

    fn posterior_unchecked(&self, z: &[f64]) -> (f64, f64) {
        let n = self.observations.len();
        if n == 0 {
            return (EMPTY_PRIOR_MEAN, self.config.signal_variance);
        }
        let mut k: Vec<f64> = self
            .observations
            .iter()
            .map(|o| rbf(&o.z, z, &self.config))
            .collect();
        let mean = self.prior_mean + k.iter().zip(&self.alpha).map(|(a, b)| a * b).sum::<f64>();
        forward_sub(&self.chol, n, &mut k);
        let var = self.config.signal_variance - k.iter().map(|v| v * v).sum::<f64>();
        (mean, var.max(0.0))
    }

    pub fn acquisition(&self, z: &[f64]) -> f64 {
        let (m, v) = self.posterior_unchecked(z);
        ucb(m, v, self.config.ucb_kappa)
    }

    /// Next point to evaluate: a random initial-design point while fewer than
    /// `n_init` observations exist, otherwise the UCB maximizer found by
    /// random multistart plus cyclic golden-section coordinate ascent.
    pub fn propose_next<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        if self.observations.len() < self.config.n_init {
            return (0..self.dim).map(|_| rng.random::<f64>()).collect();
        }
        let candidates: Vec<Vec<f64>> = (0..self.config.acq_candidates)
            .map(|_| (0..self.dim).map(|_| rng.random::<f64>()).collect())
            .collect();
        let scores: Vec<f64> = candidates.iter().map(|z| self.acquisition(z)).collect();
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        // stable sort keeps the lowest index first among equal scores
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

        let mut best: Option<(Vec<f64>, f64)> = None;
        for &i in order.iter().take(self.config.acq_refine_top) {
            let (z, score) = self.coordinate_ascent(candidates[i].clone(), scores[i]);
            if best.as_ref().is_none_or(|(_, s)| score > *s) {
                best = Some((z, score));
            }
        }
        best.expect("at least one candidate").0
    }

    fn coordinate_ascent(&self, mut z: Vec<f64>, mut score: f64) -> (Vec<f64>, f64) {
        for _ in 0..self.config.acq_refine_sweeps {
            for j in 0..self.dim {
                let original = z[j];
                let mut along = |t: f64| {
                    z[j] = t;
                    self.acquisition(&z)
                };
                let (t, s) = golden_section_max(&mut along, 0.0, 1.0, 1e-4);
                if s > score {
                    z[j] = t;
                    score = s;
                } else {
                    z[j] = original;
                }
            }
        }
        (z, score)
    }
}

/// Maximize a univariate function on `[lo, hi]`, also checking both ends.
fn golden_section_max<F: FnMut(f64) -> f64>(f: &mut F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    let mut best = if fc >= fd { (c, fc) } else { (d, fd) };
    for t in [lo, hi] {
        let ft = f(t);
        if ft > best.1 {
            best = (t, ft);
        }
    }
    best
}
