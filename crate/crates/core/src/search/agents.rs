use serde::{Deserialize, Serialize};

use super::SearchConfig;
use crate::baselines::{RandomAgent, RlAgent};
use crate::bayesopt::BoState;
use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    /// Gaussian-process UCB.
    Ss,
    Random,
    Rl,
}

impl std::fmt::Display for AgentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AgentKind::Ss => "ss",
            AgentKind::Random => "random",
            AgentKind::Rl => "rl",
        })
    }
}

impl std::str::FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ss" => Ok(AgentKind::Ss),
            "random" => Ok(AgentKind::Random),
            "rl" => Ok(AgentKind::Rl),
            other => Err(Error::invalid(format!("unknown agent `{other}`"))),
        }
    }
}

/// An outer-loop optimizer over the unit cube.
pub trait Agent {
    fn kind(&self) -> AgentKind;
    fn propose(&mut self) -> Vec<f64>;
    fn observe(&mut self, z: &[f64], q: f64) -> Result<()>;
}

pub(super) fn build(kind: AgentKind, cfg: &SearchConfig) -> Result<Box<dyn Agent>> {
    let dim = cfg.encoded_dim();
    let seed = cfg.agent_seed();
    Ok(match kind {
        AgentKind::Ss => Box::new(BoAgent::new(dim, cfg.gp.clone(), seed)?),
        AgentKind::Random => Box::new(RandomAgent::new(dim, seed)),
        AgentKind::Rl => Box::new(RlAgent::new(dim, cfg.rl.clone(), seed)?),
    })
}

pub struct BoAgent {
    state: BoState,
    rng: Rng,
}

impl BoAgent {
    pub fn new(dim: usize, gp: crate::bayesopt::GpConfig, seed: u64) -> Result<Self> {
        Ok(BoAgent {
            state: BoState::new(dim, gp)?,
            rng: rng_from_seed(seed),
        })
    }

    pub fn state(&self) -> &BoState {
        &self.state
    }
}

impl Agent for BoAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Ss
    }

    fn propose(&mut self) -> Vec<f64> {
        self.state.propose_next(&mut self.rng)
    }

    fn observe(&mut self, z: &[f64], q: f64) -> Result<()> {
        self.state.update(z.to_vec(), q)
    }
}
