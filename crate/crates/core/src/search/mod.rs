//! The bilevel search: an outer agent proposes unit-cube points, each point is
//! decoded into a sampler, and an [`Evaluator`] scores the sampler (by default
//! by fine-tuning a shared checkpoint and measuring validation accuracy).

mod agents;
mod pipeline;
pub mod synthetic;

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use crate::baselines::{random_search, rl_search, RandomAgent, RlAgent, RlConfig};
pub use agents::{Agent, AgentKind, BoAgent};
pub use pipeline::{pretrain_shared, retrain_final, run_ss, FineTuneEvaluator, RetrainOutcome};

use crate::bayesopt::GpConfig;
use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::model::TrainHyper;
use crate::rng::derive_seed;
use crate::sampler::{self, SamplerParams, TransformMode};

/// Scores one candidate sampler. Implementations must be deterministic.
pub trait Evaluator {
    fn evaluate(&mut self, params: &SamplerParams, probs: &[f64]) -> Result<f64>;
}

impl<F> Evaluator for F
where
    F: FnMut(&SamplerParams, &[f64]) -> Result<f64>,
{
    fn evaluate(&mut self, params: &SamplerParams, probs: &[f64]) -> Result<f64> {
        self(params, probs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Outer steps (number of evaluated candidates).
    pub outer_steps: usize,
    /// Fine-tune epochs per candidate.
    pub finetune_epochs: usize,
    pub segments: usize,
    pub num_features: usize,
    pub transform: TransformMode,
    /// Optimizer for candidate fine-tunes. `epochs` is overridden by
    /// `finetune_epochs`, the learning rate is held constant and `seed` is
    /// replaced by a stream of the master seed. Every candidate shares that
    /// stream.
    pub finetune: TrainHyper,
    pub top_k: usize,
    pub seed: u64,
    /// Score the uniform-equivalent sampler as the first observation
    /// (GP agent only).
    pub insert_reference: bool,
    pub gp: GpConfig,
    pub rl: RlConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            outer_steps: 40,
            finetune_epochs: 5,
            segments: 4,
            num_features: FeatureTable::NUM_FEATURES,
            transform: TransformMode::Cgf,
            finetune: TrainHyper {
                lr: 0.05,
                lr_decay_epochs: Vec::new(),
                ..TrainHyper::default()
            },
            top_k: 3,
            seed: 0,
            insert_reference: true,
            gp: GpConfig::default(),
            rl: RlConfig::default(),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.outer_steps == 0 || self.finetune_epochs == 0 {
            return Err(Error::invalid(
                "outer_steps and finetune_epochs must be at least 1",
            ));
        }
        if self.top_k == 0 || self.top_k > self.outer_steps {
            return Err(Error::invalid("top_k must be in [1, outer_steps]"));
        }
        if self.segments == 0 || self.num_features == 0 {
            return Err(Error::invalid(
                "segments and num_features must be at least 1",
            ));
        }
        self.gp.validate()?;
        self.rl.validate()
    }

    pub fn encoded_dim(&self) -> usize {
        sampler::encoded_dim(self.segments, self.num_features)
    }

    /// Fine-tune optimizer with the per-candidate epoch count applied and a
    /// flat learning rate.
    pub fn finetune_hyper(&self) -> TrainHyper {
        TrainHyper {
            epochs: self.finetune_epochs,
            lr_decay_epochs: Vec::new(),
            seed: derive_seed(self.seed, 2),
            ..self.finetune.clone()
        }
    }

    pub fn agent_seed(&self) -> u64 {
        derive_seed(self.seed, 1)
    }
}

/// One scored sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub step: usize,
    pub z: Vec<f64>,
    pub params: SamplerParams,
    #[serde(rename = "Q")]
    pub q: f64,
    pub degenerate: bool,
    /// True for the forced uniform-equivalent reference point.
    pub reference: bool,
    /// Transform actually used (falls back to cdf if gradient mass is zero).
    pub transform_used: TransformMode,
    pub eval_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub pretrain_seconds: Option<f64>,
    pub search_seconds: f64,
    pub retrain_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub agent: AgentKind,
    pub config: SearchConfig,
    pub candidates: Vec<Candidate>,
    pub evaluations: usize,
    pub best_step: Option<usize>,
    pub best: Option<SamplerParams>,
    #[serde(rename = "best_Q")]
    pub best_q: Option<f64>,
    pub top: Vec<usize>,
    pub pretrain_accuracy: Option<f64>,
    pub final_val_accuracy: Option<f64>,
    pub final_test_accuracy: Option<f64>,
    pub times: PhaseTimes,
}

/// One line of the observation log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub step: usize,
    pub z: Vec<f64>,
    #[serde(rename = "Q")]
    pub q: f64,
    pub wall_time: f64,
}

impl SearchResult {
    pub fn best_candidate(&self) -> Option<&Candidate> {
        self.best_step.map(|s| &self.candidates[s])
    }

    /// Running maximum of `Q` over steps.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::NEG_INFINITY;
        self.candidates
            .iter()
            .map(|c| {
                best = best.max(c.q);
                best
            })
            .collect()
    }

    pub fn observation_log(&self) -> Vec<ObservationRecord> {
        self.candidates
            .iter()
            .map(|c| ObservationRecord {
                step: c.step,
                z: c.z.clone(),
                q: c.q,
                wall_time: c.eval_seconds,
            })
            .collect()
    }

    /// Observation log as JSON lines.
    pub fn write_observation_log<W: Write>(&self, mut w: W) -> Result<()> {
        for rec in self.observation_log() {
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Copy with every wall-time field zeroed, for determinism comparisons.
    pub fn without_timings(&self) -> SearchResult {
        let mut r = self.clone();
        r.times = PhaseTimes {
            pretrain_seconds: r.times.pretrain_seconds.map(|_| 0.0),
            search_seconds: 0.0,
            retrain_seconds: r.times.retrain_seconds.map(|_| 0.0),
        };
        r.candidates.iter_mut().for_each(|c| c.eval_seconds = 0.0);
        r
    }
}

/// Score one encoded point: decode, build the transform, normalize, and run
/// the evaluator unless the sampler is degenerate.
pub fn score_point<E: Evaluator + ?Sized>(
    z: &[f64],
    cfg: &SearchConfig,
    table: &FeatureTable,
    evaluator: &mut E,
) -> Result<(SamplerParams, f64, bool, TransformMode)> {
    let mut params = SamplerParams::decode(z, cfg.segments, cfg.num_features, cfg.transform)?;
    let transform = match sampler::build_transform(&params, table) {
        Err(Error::ZeroGradientMass) => {
            params.transform_mode = TransformMode::Cdf;
            sampler::build_transform(&params, table)?
        }
        other => other?,
    };
    let used = params.transform_mode;
    params.transform_mode = cfg.transform;
    let tau = sampler::eval_tau(&params, &transform, table)?;
    match sampler::normalize(&tau) {
        Ok(probs) => {
            let q = evaluator.evaluate(&params, &probs)?;
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::invalid(format!(
                    "evaluator returned {q} outside [0, 1]"
                )));
            }
            Ok((params, q, false, used))
        }
        Err(Error::DegenerateSampler(_)) => Ok((params, 0.0, true, used)),
        Err(e) => Err(e),
    }
}

/// Run `cfg.outer_steps` propose/evaluate/observe rounds.
pub fn run_search<A, E>(
    agent: &mut A,
    evaluator: &mut E,
    table: &FeatureTable,
    cfg: &SearchConfig,
) -> Result<SearchResult>
where
    A: Agent + ?Sized,
    E: Evaluator + ?Sized,
{
    cfg.validate()?;
    if cfg.num_features != table.num_features() {
        return Err(Error::DimensionMismatch {
            expected: table.num_features(),
            found: cfg.num_features,
        });
    }
    let started = Instant::now();
    let reference = cfg.insert_reference && agent.kind() == AgentKind::Ss;
    let mut candidates = Vec::with_capacity(cfg.outer_steps);
    for step in 0..cfg.outer_steps {
        let is_reference = reference && step == 0;
        let z = if is_reference {
            SamplerParams::uniform(cfg.segments, cfg.num_features, cfg.transform).encode()
        } else {
            agent.propose()
        };
        let t0 = Instant::now();
        let (params, q, degenerate, used) = score_point(&z, cfg, table, evaluator)?;
        let eval_seconds = t0.elapsed().as_secs_f64();
        agent.observe(&z, q)?;
        candidates.push(Candidate {
            step,
            z,
            params,
            q,
            degenerate,
            reference: is_reference,
            transform_used: used,
            eval_seconds,
        });
    }

    let mut ranked: Vec<usize> = (0..candidates.len())
        .filter(|&i| !candidates[i].degenerate)
        .collect();
    // stable: earliest step wins ties
    ranked.sort_by(|&a, &b| candidates[b].q.total_cmp(&candidates[a].q));
    let best_step = ranked.first().copied();
    Ok(SearchResult {
        agent: agent.kind(),
        config: cfg.clone(),
        evaluations: candidates.len(),
        best_step,
        best: best_step.map(|s| candidates[s].params.clone()),
        best_q: best_step.map(|s| candidates[s].q),
        top: ranked.into_iter().take(cfg.top_k).collect(),
        candidates,
        pretrain_accuracy: None,
        final_val_accuracy: None,
        final_test_accuracy: None,
        times: PhaseTimes {
            search_seconds: started.elapsed().as_secs_f64(),
            ..PhaseTimes::default()
        },
    })
}

/// Build the agent for `kind` from `cfg` and run the search.
pub fn run_agent<E: Evaluator + ?Sized>(
    kind: AgentKind,
    cfg: &SearchConfig,
    evaluator: &mut E,
    table: &FeatureTable,
) -> Result<SearchResult> {
    let mut agent = agents::build(kind, cfg)?;
    run_search(agent.as_mut(), evaluator, table, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> FeatureTable {
        let n = 120;
        let loss: Vec<f64> = (0..n).map(|i| ((i * 37) % n) as f64 * 0.05).collect();
        let er: Vec<f64> = (0..n).map(|i| ((i * 53) % n) as f64 * 0.01).collect();
        let grad: Vec<f64> = (0..n).map(|i| 0.1 + ((i * 7) % 13) as f64).collect();
        FeatureTable::from_raw(loss, er, grad).unwrap()
    }

    /// Rewards mass on low-loss instances.
    fn low_loss_mass(
        table: &FeatureTable,
    ) -> impl FnMut(&SamplerParams, &[f64]) -> Result<f64> + '_ {
        move |_, probs| {
            Ok(probs
                .iter()
                .zip(table.loss_cdf())
                .map(|(p, f)| p * (1.0 - f))
                .sum::<f64>()
                .clamp(0.0, 1.0))
        }
    }

    fn cfg(steps: usize) -> SearchConfig {
        SearchConfig {
            outer_steps: steps,
            top_k: 1,
            gp: GpConfig {
                acq_candidates: 128,
                n_init: 3,
                ..GpConfig::default()
            },
            ..SearchConfig::default()
        }
    }

    #[test]
    fn single_step_logs_one_candidate() {
        let t = table();
        let mut eval = low_loss_mass(&t);
        let r = run_agent(AgentKind::Ss, &cfg(1), &mut eval, &t).unwrap();
        assert_eq!(r.candidates.len(), 1);
        assert_eq!(r.evaluations, 1);
        assert!(r.candidates[0].reference);
    }

    #[test]
    fn degenerate_candidates_score_zero_without_evaluation() {
        let t = table();
        let mut calls = 0;
        let mut eval = |_: &SamplerParams, _: &[f64]| {
            calls += 1;
            Ok(0.5)
        };
        let mut z = vec![0.3; 10];
        z[3..8].iter_mut().for_each(|v| *v = 0.0);
        let (_, q, degenerate, _) = score_point(&z, &cfg(1), &t, &mut eval).unwrap();
        assert_eq!(q, 0.0);
        assert!(degenerate);
        assert_eq!(calls, 0);
    }

    #[test]
    fn zero_gradient_mass_falls_back_to_cdf() {
        let t =
            FeatureTable::from_raw(vec![0.1, 0.2, 0.3], vec![0.3, 0.1, 0.2], vec![0.0; 3]).unwrap();
        let mut eval = |_: &SamplerParams, _: &[f64]| Ok(0.5);
        let (params, _, _, used) = score_point(&[0.7; 10], &cfg(1), &t, &mut eval).unwrap();
        assert_eq!(used, TransformMode::Cdf);
        assert_eq!(params.transform_mode, TransformMode::Cgf);
    }

    #[test]
    fn all_agents_use_the_same_budget() {
        let t = table();
        for kind in [AgentKind::Ss, AgentKind::Random, AgentKind::Rl] {
            let mut eval = low_loss_mass(&t);
            let r = run_agent(kind, &cfg(6), &mut eval, &t).unwrap();
            assert_eq!(r.evaluations, 6, "{kind:?}");
            assert_eq!(r.agent, kind);
        }
    }

    #[test]
    fn best_is_max_nondegenerate() {
        let t = table();
        let mut eval = low_loss_mass(&t);
        let r = run_agent(AgentKind::Random, &cfg(12), &mut eval, &t).unwrap();
        let max = r
            .candidates
            .iter()
            .filter(|c| !c.degenerate)
            .map(|c| c.q)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(r.best_q, Some(max));
        let curve = r.best_so_far();
        assert!(curve.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn search_is_deterministic() {
        let t = table();
        let run = || {
            let mut eval = low_loss_mass(&t);
            run_agent(AgentKind::Ss, &cfg(10), &mut eval, &t)
                .unwrap()
                .without_timings()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn observation_log_is_json_lines() {
        let t = table();
        let mut eval = low_loss_mass(&t);
        let r = run_agent(AgentKind::Random, &cfg(3), &mut eval, &t).unwrap();
        let mut buf = Vec::new();
        r.write_observation_log(&mut buf).unwrap();
        let lines: Vec<&str> = std::str::from_utf8(&buf).unwrap().lines().collect();
        assert_eq!(lines.len(), 3);
        let rec: ObservationRecord = serde_json::from_str(lines[2]).unwrap();
        assert_eq!(rec.step, 2);
        assert_eq!(rec.z.len(), 10);
    }

    #[test]
    fn config_rejects_bad_top_k() {
        let mut c = cfg(3);
        c.top_k = 4;
        assert!(c.validate().is_err());
    }
}
