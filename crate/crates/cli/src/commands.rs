use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use sampler_search::dataset::{self, generate_blobs, inject_label_noise, split};
use sampler_search::metrics::{aggregate_report, sr_tr_study, RankReport, Report};
use sampler_search::model::{self, Checkpoint};
use sampler_search::rng::derive_seed;
use sampler_search::sampler;
use sampler_search::search::{run_agent, AgentKind, FineTuneEvaluator};
use sampler_search::{
    extract_features, Dataset, Error, FeatureTable, ModelWeights, SamplerParams, SearchResult,
    TransformMode,
};
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, Seeds};

type Result<T> = std::result::Result<T, Error>;

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| missing(path, e))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

fn missing(path: &Path, e: std::io::Error) -> Error {
    Error::Format {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Format {
            path: path.display().to_string(),
            reason: "file not found; run the earlier pipeline stage first".into(),
        })
    }
}

fn load_split(cfg: &RunConfig, name: &str) -> Result<Dataset> {
    let path = cfg.split_path(name);
    require(&path)?;
    dataset::load(&path)
}

fn load_weights(path: &Path) -> Result<ModelWeights> {
    require(path)?;
    ModelWeights::from_checkpoint(read_json::<Checkpoint>(path)?)
}

fn load_features(cfg: &RunConfig) -> Result<FeatureTable> {
    let path = cfg.features_path();
    require(&path)?;
    FeatureTable::read_csv(&path)
}

/// Every JSON output starts with the config and derived seeds that made it.
#[derive(Debug, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub config: RunConfig,
    pub seeds: Seeds,
    #[serde(flatten)]
    pub body: T,
}

impl<T> Stamped<T> {
    fn new(cfg: &RunConfig, body: T) -> Self {
        Stamped {
            config: cfg.clone(),
            seeds: cfg.seeds(),
            body,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DataManifest {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub flipped: usize,
}

pub fn gen_data(cfg: &RunConfig) -> Result<PathBuf> {
    let seeds = cfg.seeds();
    let full = generate_blobs(&cfg.blob_spec())?;
    let (train, val, test) = split(&full, cfg.data.split, seeds.split)?;
    let train = inject_label_noise(&train, cfg.data.noise_rate, seeds.noise)?;
    std::fs::create_dir_all(cfg.data_dir())?;
    for (name, ds) in [("train", &train), ("val", &val), ("test", &test)] {
        dataset::save(ds, &cfg.split_path(name))?;
    }
    let manifest = DataManifest {
        train: train.len(),
        val: val.len(),
        test: test.len(),
        flipped: train
            .noise_flags()
            .map_or(0, |f| f.iter().filter(|&&x| x).count()),
    };
    let path = cfg.data_dir().join("manifest.json");
    write_json(&path, &Stamped::new(cfg, manifest))?;
    Ok(path)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PretrainOutput {
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub seconds: f64,
}

pub fn pretrain(cfg: &RunConfig) -> Result<PathBuf> {
    let train = load_split(cfg, "train")?;
    let val = load_split(cfg, "val")?;
    let test = load_split(cfg, "test")?;
    let hyper = cfg.pretrain_hyper();
    hyper.validate(train.len())?;
    let w0 = ModelWeights::init(
        cfg.architecture,
        train.dim(),
        train.num_classes(),
        cfg.seeds().init,
    )?;
    let t0 = Instant::now();
    let w = model::train(&w0, &train, None, &hyper)?;
    let out = PretrainOutput {
        val_accuracy: model::evaluate(&w, &val)?,
        test_accuracy: model::evaluate(&w, &test)?,
        seconds: t0.elapsed().as_secs_f64(),
    };
    write_json(&cfg.w_init_path(), &w0.to_checkpoint())?;
    write_json(&cfg.w_share_path(), &w.to_checkpoint())?;
    write_json(&cfg.pretrain_path(), &Stamped::new(cfg, out))?;
    Ok(cfg.pretrain_path())
}

pub fn features(cfg: &RunConfig) -> Result<PathBuf> {
    let train = load_split(cfg, "train")?;
    let w = load_weights(&cfg.w_share_path())?;
    let table = extract_features(&w, &train)?;
    let path = cfg.features_path();
    table.write_csv(&path)?;
    Ok(path)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SearchOutput {
    pub result: SearchResult,
}

pub fn search_path(cfg: &RunConfig, agent: AgentKind, transform: TransformMode) -> PathBuf {
    cfg.out_dir.join(format!("search_{agent}_{transform}.json"))
}

pub fn search(cfg: &RunConfig, agent: AgentKind, transform: TransformMode) -> Result<PathBuf> {
    let train = load_split(cfg, "train")?;
    let val = load_split(cfg, "val")?;
    let w_share = load_weights(&cfg.w_share_path())?;
    let table = load_features(cfg)?;
    let scfg = sampler_search::SearchConfig {
        transform,
        ..cfg.search_config()
    };
    scfg.finetune_hyper().validate(train.len())?;
    let mut eval = FineTuneEvaluator::new(&scfg, &train, &val, &w_share);
    let mut result = run_agent(agent, &scfg, &mut eval, &table)?;
    if cfg.pretrain_path().exists() {
        let pre: Stamped<PretrainOutput> = read_json(&cfg.pretrain_path())?;
        result.pretrain_accuracy = Some(pre.body.val_accuracy);
    }
    let path = search_path(cfg, agent, transform);
    let log = path.with_file_name(format!("observations_{agent}_{transform}.jsonl"));
    let mut w = BufWriter::new(File::create(&log)?);
    result.write_observation_log(&mut w)?;
    w.flush()?;
    write_json(&path, &Stamped::new(cfg, SearchOutput { result }))?;
    Ok(path)
}

/// A sampler file is either a search output (its best sampler is used) or a
/// bare sampler parameter object.
fn read_sampler(path: &Path) -> Result<SamplerParams> {
    require(path)?;
    let value: serde_json::Value = read_json(path)?;
    if value.get("result").is_some() {
        let out: Stamped<SearchOutput> = serde_json::from_value(value)?;
        out.body
            .result
            .best
            .ok_or(Error::Empty("search result has no non-degenerate sampler"))
    } else {
        let params: SamplerParams = serde_json::from_value(value)?;
        params.validate()?;
        Ok(params)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RetrainOutput {
    pub sampler_file: PathBuf,
    pub sampler: SamplerParams,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub pretrain_val_accuracy: Option<f64>,
    pub val_gain: Option<f64>,
    pub seconds: f64,
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "input".into(), |s| s.to_string_lossy().into_owned())
}

pub fn retrain(cfg: &RunConfig, sampler_file: &Path, out: Option<&Path>) -> Result<PathBuf> {
    let params = read_sampler(sampler_file)?;
    let train = load_split(cfg, "train")?;
    let val = load_split(cfg, "val")?;
    let test = load_split(cfg, "test")?;
    let table = load_features(cfg)?;
    let w0 = load_weights(&cfg.w_init_path())?;
    let hyper = cfg.pretrain_hyper();
    hyper.validate(train.len())?;
    let outcome =
        sampler_search::search::retrain_final(&w0, &train, &val, &test, &params, &table, &hyper)?;
    let pre = if cfg.pretrain_path().exists() {
        Some(
            read_json::<Stamped<PretrainOutput>>(&cfg.pretrain_path())?
                .body
                .val_accuracy,
        )
    } else {
        None
    };
    let body = RetrainOutput {
        sampler_file: sampler_file.to_path_buf(),
        sampler: params,
        val_accuracy: outcome.val_accuracy,
        test_accuracy: outcome.test_accuracy,
        pretrain_val_accuracy: pre,
        val_gain: pre.map(|p| outcome.val_accuracy - p),
        seconds: outcome.seconds,
    };
    let path = out.map_or_else(
        || {
            cfg.out_dir
                .join(format!("retrain_{}.json", stem(sampler_file)))
        },
        Path::to_path_buf,
    );
    write_json(&path, &Stamped::new(cfg, body))?;
    Ok(path)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RankOutput {
    pub result_file: PathBuf,
    pub report: RankReport,
}

pub fn sr_tr(cfg: &RunConfig, result_file: &Path, out: Option<&Path>) -> Result<PathBuf> {
    require(result_file)?;
    let run: Stamped<SearchOutput> = read_json(result_file)?;
    let train = load_split(cfg, "train")?;
    let val = load_split(cfg, "val")?;
    let table = load_features(cfg)?;
    let base = cfg.pretrain_hyper();
    base.validate(train.len())?;
    let rank_seed = cfg.seeds().rank_study;
    let seeds: Vec<u64> = (0..cfg.sr_tr.retrain_seeds as u64)
        .map(|k| derive_seed(rank_seed, k))
        .collect();
    let report = sr_tr_study(&run.body.result, cfg.sr_tr.last_m, &seeds, |p, s| {
        let w0 = ModelWeights::init(cfg.architecture, train.dim(), train.num_classes(), s)?;
        let probs = sampler::sampling_probs(p, &table)?;
        let hyper = sampler_search::TrainHyper {
            seed: s,
            ..base.clone()
        };
        let w = model::train(&w0, &train, Some(&probs), &hyper)?;
        model::evaluate(&w, &val)
    })?;
    let body = RankOutput {
        result_file: result_file.to_path_buf(),
        report,
    };
    let path = out.map_or_else(
        || {
            cfg.out_dir
                .join(format!("sr_tr_{}.json", stem(result_file)))
        },
        Path::to_path_buf,
    );
    write_json(&path, &Stamped::new(cfg, body))?;
    Ok(path)
}

#[derive(Debug, Serialize)]
struct ReportOutput<'a> {
    inputs: &'a [PathBuf],
    config: Option<&'a RunConfig>,
    #[serde(flatten)]
    report: &'a Report,
}

/// Aggregates search outputs. With a config, the noise table is filled from
/// the train split's flip flags.
pub fn report(files: &[PathBuf], out_dir: &Path, cfg: Option<&RunConfig>) -> Result<PathBuf> {
    if files.is_empty() {
        return Err(Error::Empty("report inputs"));
    }
    let mut runs = Vec::with_capacity(files.len());
    for f in files {
        require(f)?;
        let run: Stamped<SearchOutput> = read_json(f)?;
        runs.push((stem(f), run.body.result));
    }
    let noise = match cfg {
        Some(c) => {
            let train = load_split(c, "train")?;
            let table = load_features(c)?;
            train.noise_flags().map(|f| (table, f.to_vec()))
        }
        None => None,
    };
    let report = aggregate_report(&runs, noise.as_ref().map(|(t, f)| (t, f.as_slice())))?;
    report.write_csvs(out_dir)?;
    let path = out_dir.join("report.json");
    write_json(
        &path,
        &ReportOutput {
            inputs: files,
            config: cfg,
            report: &report,
        },
    )?;
    Ok(path)
}
