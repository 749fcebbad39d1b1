use std::time::Instant;

use super::{run_agent, AgentKind, Evaluator, SearchConfig, SearchResult};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::model::{self, ModelWeights, TrainHyper};
use crate::sampler::{self, SamplerParams};

/// Scores a sampler by fine-tuning a copy of the shared checkpoint (with
/// fresh momentum) and measuring validation accuracy. `w_share` itself is
/// never modified.
pub struct FineTuneEvaluator<'a> {
    pub train: &'a Dataset,
    pub val: &'a Dataset,
    pub w_share: &'a ModelWeights,
    pub hyper: TrainHyper,
}

impl<'a> FineTuneEvaluator<'a> {
    pub fn new(
        cfg: &SearchConfig,
        train: &'a Dataset,
        val: &'a Dataset,
        w_share: &'a ModelWeights,
    ) -> Self {
        FineTuneEvaluator {
            train,
            val,
            w_share,
            hyper: cfg.finetune_hyper(),
        }
    }
}

impl Evaluator for FineTuneEvaluator<'_> {
    fn evaluate(&mut self, _params: &SamplerParams, probs: &[f64]) -> Result<f64> {
        let mut w = self.w_share.clone();
        w.reset_momentum();
        let w = model::train(&w, self.train, Some(probs), &self.hyper)?;
        model::evaluate(&w, self.val)
    }
}

/// Train `w_init` from scratch with uniform sampling; returns the weights and
/// their validation accuracy.
pub fn pretrain_shared(
    w_init: &ModelWeights,
    train: &Dataset,
    val: &Dataset,
    hyper: &TrainHyper,
) -> Result<(ModelWeights, f64)> {
    let w = model::train(w_init, train, None, hyper)?;
    let acc = model::evaluate(&w, val)?;
    Ok((w, acc))
}

/// Run the GP-UCB search with the fine-tune evaluator.
pub fn run_ss(
    cfg: &SearchConfig,
    train: &Dataset,
    val: &Dataset,
    w_share: &ModelWeights,
    table: &FeatureTable,
) -> Result<SearchResult> {
    if table.len() != train.len() {
        return Err(Error::DimensionMismatch {
            expected: train.len(),
            found: table.len(),
        });
    }
    let mut eval = FineTuneEvaluator::new(cfg, train, val, w_share);
    let eval: &mut dyn Evaluator = &mut eval;
    run_agent(AgentKind::Ss, cfg, eval, table)
}

#[derive(Debug, Clone)]
pub struct RetrainOutcome {
    pub weights: ModelWeights,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub seconds: f64,
}

/// Train from `w_init` with the sampler's probabilities fixed throughout.
pub fn retrain_final(
    w_init: &ModelWeights,
    train: &Dataset,
    val: &Dataset,
    test: &Dataset,
    best: &SamplerParams,
    table: &FeatureTable,
    hyper: &TrainHyper,
) -> Result<RetrainOutcome> {
    let t0 = Instant::now();
    let probs = sampler::sampling_probs(best, table)?;
    let weights = model::train(w_init, train, Some(&probs), hyper)?;
    Ok(RetrainOutcome {
        val_accuracy: model::evaluate(&weights, val)?,
        test_accuracy: model::evaluate(&weights, test)?,
        weights,
        seconds: t0.elapsed().as_secs_f64(),
    })
}
