use std::path::{Path, PathBuf};

use sampler_search::model::Architecture;
use sampler_search::rng::derive_seed;
use sampler_search::{BlobSpec, Error, SearchConfig, TrainHyper};
use serde::{Deserialize, Serialize};

/// The single JSON document every command reads.
///
/// Only `seed` and `out_dir` are required. Seeds inside `pretrain` and
/// `search` are ignored: every stage seed is derived from `seed` and reported
/// under `seeds` in each output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default = "default_architecture")]
    pub architecture: Architecture,
    #[serde(default)]
    pub pretrain: TrainHyper,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default)]
    pub sr_tr: RankStudyConfig,
}

fn default_architecture() -> Architecture {
    Architecture::SoftmaxRegression
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub num_classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub separation: f64,
    pub spread: f64,
    /// Symmetric label-noise rate, applied to the train split only.
    pub noise_rate: f64,
    /// Train / val / test fractions.
    pub split: [f64; 3],
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            num_classes: 10,
            dim: 16,
            per_class: 600,
            separation: 4.0,
            spread: 1.0,
            noise_rate: 0.4,
            split: [5.0 / 6.0, 0.5 / 6.0, 0.5 / 6.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankStudyConfig {
    /// Number of most recent non-degenerate candidates studied.
    pub last_m: usize,
    /// From-scratch retrains per candidate.
    pub retrain_seeds: usize,
}

impl Default for RankStudyConfig {
    fn default() -> Self {
        RankStudyConfig {
            last_m: 10,
            retrain_seeds: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub data: u64,
    pub split: u64,
    pub noise: u64,
    pub init: u64,
    pub train: u64,
    pub search: u64,
    pub rank_study: u64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), Error> {
        let d = &self.data;
        if d.num_classes < 2 || d.dim == 0 || d.per_class == 0 {
            return Err(Error::InvalidParameter(
                "data needs num_classes >= 2, dim >= 1 and per_class >= 1".into(),
            ));
        }
        if !(d.separation >= 0.0) || !(d.spread > 0.0) {
            return Err(Error::InvalidParameter(
                "data needs separation >= 0 and spread > 0".into(),
            ));
        }
        if !(0.0..=1.0).contains(&d.noise_rate) {
            return Err(Error::InvalidParameter(
                "noise_rate must be in [0, 1]".into(),
            ));
        }
        if d.split.iter().any(|f| !(*f > 0.0)) || (d.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(
                "split fractions must be positive and sum to 1".into(),
            ));
        }
        if self.sr_tr.last_m < 2 || self.sr_tr.retrain_seeds == 0 {
            return Err(Error::InvalidParameter(
                "sr_tr needs last_m >= 2 and retrain_seeds >= 1".into(),
            ));
        }
        self.search.validate()
    }

    pub fn seeds(&self) -> Seeds {
        let s = |k: u64| derive_seed(self.seed, 10 + k);
        Seeds {
            data: s(0),
            split: s(1),
            noise: s(2),
            init: s(3),
            train: s(4),
            search: s(5),
            rank_study: s(6),
        }
    }

    pub fn blob_spec(&self) -> BlobSpec {
        BlobSpec {
            num_classes: self.data.num_classes,
            dim: self.data.dim,
            per_class: self.data.per_class,
            separation: self.data.separation,
            spread: self.data.spread,
            seed: self.seeds().data,
        }
    }

    pub fn pretrain_hyper(&self) -> TrainHyper {
        TrainHyper {
            seed: self.seeds().train,
            ..self.pretrain.clone()
        }
    }

    pub fn search_config(&self) -> SearchConfig {
        SearchConfig {
            seed: self.seeds().search,
            ..self.search.clone()
        }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.out_dir.join("data")
    }

    pub fn split_path(&self, name: &str) -> PathBuf {
        self.data_dir().join(format!("{name}.csv"))
    }

    pub fn w_init_path(&self) -> PathBuf {
        self.out_dir.join("w_init.json")
    }

    pub fn w_share_path(&self) -> PathBuf {
        self.out_dir.join("w_share.json")
    }

    pub fn pretrain_path(&self) -> PathBuf {
        self.out_dir.join("pretrain.json")
    }

    pub fn features_path(&self) -> PathBuf {
        self.out_dir.join("features.csv")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"seed": 3, "out_dir": "x"}"#).unwrap();
        assert_eq!(cfg.data, DataConfig::default());
        assert_eq!(cfg.search.outer_steps, 40);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            r#"{"seed": 3, "out_dir": "x", "extra": 1}"#,
            r#"{"seed": 3, "out_dir": "x", "data": {"classes": 4}}"#,
            r#"{"seed": 3, "out_dir": "x", "search": {"steps": 4}}"#,
        ] {
            assert!(serde_json::from_str::<RunConfig>(text).is_err(), "{text}");
        }
    }

    #[test]
    fn bad_split_fails_validation() {
        let mut cfg: RunConfig = serde_json::from_str(r#"{"seed": 0, "out_dir": "x"}"#).unwrap();
        cfg.data.split = [0.5, 0.5, 0.5];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn stage_seeds_are_distinct() {
        let cfg: RunConfig = serde_json::from_str(r#"{"seed": 0, "out_dir": "x"}"#).unwrap();
        let s = cfg.seeds();
        let mut all = vec![
            s.data,
            s.split,
            s.noise,
            s.init,
            s.train,
            s.search,
            s.rank_study,
        ];
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 7);
    }
}
