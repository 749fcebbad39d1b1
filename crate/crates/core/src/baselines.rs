//! Comparison agents for the sampler search: uniform random proposals and a
//! score-function policy gradient. Both run through the same loop and
//! evaluator as the GP agent.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::rng::{rng_from_seed, Rng};
use crate::search::{run_agent, Agent, AgentKind, Evaluator, SearchConfig, SearchResult};

/// Random-search baseline under the same protocol.
pub fn random_search<E: Evaluator + ?Sized>(
    cfg: &SearchConfig,
    evaluator: &mut E,
    table: &FeatureTable,
) -> Result<SearchResult> {
    run_agent(AgentKind::Random, cfg, evaluator, table)
}

/// Policy-gradient baseline under the same protocol.
pub fn rl_search<E: Evaluator + ?Sized>(
    cfg: &SearchConfig,
    evaluator: &mut E,
    table: &FeatureTable,
) -> Result<SearchResult> {
    run_agent(AgentKind::Rl, cfg, evaluator, table)
}

/// Uniform proposals, blind to every observed score.
pub struct RandomAgent {
    dim: usize,
    rng: Rng,
}

impl RandomAgent {
    pub fn new(dim: usize, seed: u64) -> Self {
        RandomAgent {
            dim,
            rng: rng_from_seed(seed),
        }
    }
}

impl Agent for RandomAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Random
    }

    fn propose(&mut self) -> Vec<f64> {
        (0..self.dim).map(|_| self.rng.random::<f64>()).collect()
    }

    fn observe(&mut self, _z: &[f64], _q: f64) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlConfig {
    /// Initial policy mean (every coordinate). `None` draws it uniformly
    /// from the cube.
    pub init_mean: Option<f64>,
    pub init_std: f64,
    pub learning_rate: f64,
    pub std_floor: f64,
    pub std_decay: f64,
    /// Step size of the exponential running mean used as reward baseline.
    pub baseline_rate: f64,
    /// Divide advantages by a running RMS of past advantages.
    pub normalize_advantage: bool,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            init_mean: None,
            init_std: 0.25,
            learning_rate: 0.05,
            std_floor: 0.02,
            std_decay: 0.97,
            baseline_rate: 0.3,
            normalize_advantage: true,
        }
    }
}

impl RlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.init_mean.is_some_and(|m| !(0.0..=1.0).contains(&m)) {
            return Err(Error::invalid("rl init_mean must be in [0, 1]"));
        }
        if !(self.std_floor > 0.0 && self.init_std >= self.std_floor) {
            return Err(Error::invalid("rl needs 0 < std_floor <= init_std"));
        }
        if !(self.learning_rate >= 0.0) || !(0.0..=1.0).contains(&self.std_decay) {
            return Err(Error::invalid(
                "rl learning_rate must be >= 0 and std_decay in [0, 1]",
            ));
        }
        if !(0.0..=1.0).contains(&self.baseline_rate) || self.baseline_rate == 0.0 {
            return Err(Error::invalid("rl baseline_rate must be in (0, 1]"));
        }
        Ok(())
    }
}

/// Score-function policy gradient with a diagonal Gaussian policy over the
/// cube, one sample per update.
pub struct RlAgent {
    cfg: RlConfig,
    mean: Vec<f64>,
    std: Vec<f64>,
    baseline: Option<f64>,
    adv_sq: Option<f64>,
    pending: Option<Vec<f64>>,
    rng: Rng,
}

impl RlAgent {
    pub fn new(dim: usize, cfg: RlConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = rng_from_seed(seed);
        let mean = match cfg.init_mean {
            Some(m) => vec![m; dim],
            None => (0..dim).map(|_| rng.random::<f64>()).collect(),
        };
        Ok(RlAgent {
            mean,
            std: vec![cfg.init_std; dim],
            cfg,
            baseline: None,
            adv_sq: None,
            pending: None,
            rng,
        })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }
}

impl Agent for RlAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Rl
    }

    fn propose(&mut self) -> Vec<f64> {
        let raw: Vec<f64> = self
            .mean
            .iter()
            .zip(&self.std)
            .map(|(m, s)| {
                let eps: f64 = StandardNormal.sample(&mut self.rng);
                m + s * eps
            })
            .collect();
        let z = raw.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        self.pending = Some(raw);
        z
    }

    fn observe(&mut self, z: &[f64], q: f64) -> Result<()> {
        let raw = self.pending.take().unwrap_or_else(|| z.to_vec());
        let Some(baseline) = self.baseline else {
            self.baseline = Some(q);
            return Ok(());
        };
        let mut advantage = q - baseline;
        self.baseline = Some(baseline + self.cfg.baseline_rate * (q - baseline));
        if self.cfg.normalize_advantage {
            let sq = advantage * advantage;
            let rms = match self.adv_sq {
                None => sq,
                Some(prev) => prev + self.cfg.baseline_rate * (sq - prev),
            };
            self.adv_sq = Some(rms);
            if rms > 0.0 {
                advantage /= rms.sqrt();
            }
        }
        for ((m, s), r) in self.mean.iter_mut().zip(self.std.iter_mut()).zip(&raw) {
            // score (r - m) / s^2 scaled by s, i.e. along the standardized noise
            *m = (*m + self.cfg.learning_rate * advantage * (r - *m) / *s).clamp(0.0, 1.0);
            *s = (*s * self.cfg.std_decay).max(self.cfg.std_floor);
        }
        Ok(())
    }
}
