//! Rank agreement between the fine-tune proxy and from-scratch accuracy, and
//! summary tables over search runs.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::rng::Rng;
use crate::sampler::{self, SamplerParams};
use crate::search::{AgentKind, SearchResult};

/// 1-based ranks (ascending), ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let r = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

/// Spearman's rank correlation: Pearson correlation of average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::invalid("spearman needs at least 2 pairs"));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::invalid("spearman input contains NaN"));
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::ConstantInput);
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Ordinal ranks, 1 = best (highest value), ties broken by position.
fn descending_positions(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut rank = vec![0; values.len()];
    for (pos, &i) in order.iter().enumerate() {
        rank[i] = pos + 1;
    }
    rank
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    /// Search steps of the studied samplers.
    pub steps: Vec<usize>,
    /// Fine-tune scores from the search log.
    pub approx_q: Vec<f64>,
    /// From-scratch accuracy, averaged over the retrain seeds.
    pub truth_accuracy: Vec<f64>,
    pub approx_rank: Vec<usize>,
    pub truth_rank: Vec<usize>,
    pub retrain_seeds: Vec<u64>,
    #[serde(rename = "SR")]
    pub sr: f64,
    /// Competition rank (1 + number of strictly better samplers) under the
    /// ground truth of the sampler ranked first by the approximation.
    #[serde(rename = "TR")]
    pub tr: usize,
}

impl RankReport {
    pub fn from_scores(
        steps: Vec<usize>,
        approx_q: Vec<f64>,
        truth_accuracy: Vec<f64>,
        retrain_seeds: Vec<u64>,
    ) -> Result<Self> {
        if steps.len() != approx_q.len() || approx_q.len() != truth_accuracy.len() {
            return Err(Error::DimensionMismatch {
                expected: steps.len(),
                found: truth_accuracy.len(),
            });
        }
        let approx_rank = descending_positions(&approx_q);
        let truth_rank = descending_positions(&truth_accuracy);
        let top = approx_rank
            .iter()
            .position(|&r| r == 1)
            .ok_or(Error::Empty("rank study"))?;
        let tr = 1 + truth_accuracy
            .iter()
            .filter(|&&t| t > truth_accuracy[top])
            .count();
        let sr = match spearman(&approx_q, &truth_accuracy) {
            Err(Error::ConstantInput) => 0.0,
            other => other?,
        };
        Ok(RankReport {
            steps,
            approx_q,
            truth_accuracy,
            approx_rank,
            truth_rank,
            retrain_seeds,
            sr,
            tr,
        })
    }
}

/// Retrain the last `last_m` non-degenerate samplers of `run` from scratch
/// once per seed (via `retrain(params, seed) -> accuracy`) and compare the
/// rankings. A study where either side is constant reports SR = 0.
pub fn sr_tr_study<F>(
    run: &SearchResult,
    last_m: usize,
    seeds: &[u64],
    mut retrain: F,
) -> Result<RankReport>
where
    F: FnMut(&SamplerParams, u64) -> Result<f64>,
{
    if last_m < 2 {
        return Err(Error::invalid("rank study needs last_m >= 2"));
    }
    if seeds.is_empty() {
        return Err(Error::Empty("retrain seeds"));
    }
    let usable: Vec<_> = run.candidates.iter().filter(|c| !c.degenerate).collect();
    if usable.len() < last_m {
        return Err(Error::InsufficientCandidates {
            needed: last_m,
            found: usable.len(),
        });
    }
    let chosen = &usable[usable.len() - last_m..];
    let mut truth = Vec::with_capacity(last_m);
    for c in chosen {
        let mut total = 0.0;
        for &s in seeds {
            total += retrain(&c.params, s)?;
        }
        truth.push(total / seeds.len() as f64);
    }
    RankReport::from_scores(
        chosen.iter().map(|c| c.step).collect(),
        chosen.iter().map(|c| c.q).collect(),
        truth,
        seeds.to_vec(),
    )
}

/// SR between independent uniformly random permutations of length `m`, one
/// value per pair.
pub fn random_permutation_sr(m: usize, pairs: usize, rng: &mut Rng) -> Result<Vec<f64>> {
    let base: Vec<f64> = (0..m).map(|i| i as f64).collect();
    (0..pairs)
        .map(|_| {
            let mut a = base.clone();
            let mut b = base.clone();
            a.shuffle(rng);
            b.shuffle(rng);
            spearman(&a, &b)
        })
        .collect()
}

/// Mean probability over clean and over flipped instances. Either side is
/// `None` if that group is empty.
pub fn clean_flipped_means(probs: &[f64], flipped: &[bool]) -> Result<(Option<f64>, Option<f64>)> {
    if probs.len() != flipped.len() {
        return Err(Error::DimensionMismatch {
            expected: flipped.len(),
            found: probs.len(),
        });
    }
    let (mut sc, mut nc, mut sf, mut nf) = (0.0, 0usize, 0.0, 0usize);
    for (p, &f) in probs.iter().zip(flipped) {
        if f {
            sf += p;
            nf += 1;
        } else {
            sc += p;
            nc += 1;
        }
    }
    let mean = |s: f64, n: usize| (n > 0).then(|| s / n as f64);
    Ok((mean(sc, nc), mean(sf, nf)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub run: String,
    pub agent: AgentKind,
    pub transform: String,
    pub seed: u64,
    pub evaluations: usize,
    pub best_step: Option<usize>,
    #[serde(rename = "best_Q")]
    pub best_q: Option<f64>,
    pub pretrain_accuracy: Option<f64>,
    pub final_val_accuracy: Option<f64>,
    pub final_test_accuracy: Option<f64>,
    /// Final validation accuracy minus pretrain (uniform) accuracy.
    pub val_gain: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub run: String,
    pub agent: AgentKind,
    pub step: usize,
    #[serde(rename = "Q")]
    pub q: f64,
    pub best_so_far: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub run: String,
    pub clean_mean_prob: Option<f64>,
    pub flipped_mean_prob: Option<f64>,
    /// flipped / clean.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub summary: Vec<SummaryRow>,
    pub curves: Vec<CurveRow>,
    pub noise: Vec<NoiseRow>,
}

/// Summarize named runs. With `noise = Some((table, flipped))` the best
/// sampler of each run is scored on the clean/flipped split.
pub fn aggregate_report(
    runs: &[(String, SearchResult)],
    noise: Option<(&FeatureTable, &[bool])>,
) -> Result<Report> {
    if runs.is_empty() {
        return Err(Error::Empty("report runs"));
    }
    if let Some((table, flipped)) = noise {
        if table.len() != flipped.len() {
            return Err(Error::DimensionMismatch {
                expected: table.len(),
                found: flipped.len(),
            });
        }
    }
    let mut report = Report::default();
    for (name, r) in runs {
        if r.candidates.len() != r.evaluations {
            return Err(Error::invalid(format!(
                "run `{name}`: candidate log length differs from evaluation count"
            )));
        }
        report.summary.push(SummaryRow {
            run: name.clone(),
            agent: r.agent,
            transform: r.config.transform.to_string(),
            seed: r.config.seed,
            evaluations: r.evaluations,
            best_step: r.best_step,
            best_q: r.best_q,
            pretrain_accuracy: r.pretrain_accuracy,
            final_val_accuracy: r.final_val_accuracy,
            final_test_accuracy: r.final_test_accuracy,
            val_gain: r
                .final_val_accuracy
                .zip(r.pretrain_accuracy)
                .map(|(f, p)| f - p),
        });
        for (c, best) in r.candidates.iter().zip(r.best_so_far()) {
            report.curves.push(CurveRow {
                run: name.clone(),
                agent: r.agent,
                step: c.step,
                q: c.q,
                best_so_far: best,
            });
        }
        if let (Some((table, flipped)), Some(best)) = (noise, &r.best) {
            let probs = sampler::sampling_probs(best, table)?;
            let (clean, flip) = clean_flipped_means(&probs, flipped)?;
            report.noise.push(NoiseRow {
                run: name.clone(),
                clean_mean_prob: clean,
                flipped_mean_prob: flip,
                ratio: clean.zip(flip).map(|(c, f)| f / c),
            });
        }
    }
    Ok(report)
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

impl Report {
    /// Writes `summary.csv`, `curves.csv`, `noise.csv` (if any rows) and
    /// `report.json` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        self.write_csvs(dir)?;
        serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join("report.json"))?), self)?;
        Ok(())
    }

    /// The CSV half of [`Report::write_dir`].
    pub fn write_csvs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_rows(&dir.join("summary.csv"), &self.summary)?;
        write_rows(&dir.join("curves.csv"), &self.curves)?;
        if !self.noise.is_empty() {
            write_rows(&dir.join("noise.csv"), &self.noise)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;

    #[test]
    fn spearman_hand_cases() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!((spearman(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&a, &[5.0, 4.0, 3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        let b = [1.0, 3.0, 2.0, 5.0, 4.0];
        let textbook = 1.0 - 6.0 * 4.0 / (5.0 * 24.0);
        assert!((spearman(&a, &b).unwrap() - textbook).abs() < 1e-12);
    }

    #[test]
    fn spearman_errors() {
        assert!(matches!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::ConstantInput)
        ));
        assert!(spearman(&[1.0], &[1.0]).is_err());
        assert!(spearman(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn identical_orders_give_sr_one_tr_one() {
        let r = RankReport::from_scores(
            vec![0, 1, 2],
            vec![0.1, 0.3, 0.2],
            vec![0.5, 0.9, 0.7],
            vec![0],
        )
        .unwrap();
        assert_eq!(r.sr, 1.0);
        assert_eq!(r.tr, 1);
        assert_eq!(r.approx_rank, vec![3, 1, 2]);
        assert_eq!(r.truth_rank, r.approx_rank);
    }

    #[test]
    fn tr_counts_strictly_better() {
        let r = RankReport::from_scores(
            vec![0, 1, 2, 3],
            vec![0.9, 0.1, 0.2, 0.3],
            vec![0.5, 0.7, 0.5, 0.6],
            vec![0],
        )
        .unwrap();
        assert_eq!(r.tr, 3);
    }

    #[test]
    fn random_permutation_sr_is_small_on_average() {
        let mut rng = rng_from_seed(11);
        let srs = random_permutation_sr(10, 5, &mut rng).unwrap();
        assert_eq!(srs.len(), 5);
        let avg = srs.iter().sum::<f64>() / 5.0;
        assert!((-0.5..=0.5).contains(&avg), "{avg}");
    }

    #[test]
    fn clean_flipped_hand_case() {
        let (c, f) =
            clean_flipped_means(&[0.4, 0.3, 0.2, 0.1], &[false, true, false, true]).unwrap();
        assert!((c.unwrap() - 0.3).abs() < 1e-15);
        assert!((f.unwrap() - 0.2).abs() < 1e-15);
        let (c, f) = clean_flipped_means(&[0.5, 0.5], &[false, false]).unwrap();
        assert_eq!((c, f), (Some(0.5), None));
    }

    #[test]
    fn single_run_gives_one_summary_row() {
        use crate::search::{run_agent, AgentKind, SearchConfig};
        let table = FeatureTable::from_raw(
            (0..30).map(|i| i as f64 * 0.1).collect(),
            (0..30).map(|i| ((i * 7) % 30) as f64 / 30.0).collect(),
            vec![1.0; 30],
        )
        .unwrap();
        let flipped: Vec<bool> = (0..30).map(|i| i >= 20).collect();
        let cfg = SearchConfig {
            outer_steps: 5,
            top_k: 1,
            ..SearchConfig::default()
        };
        let mut eval = |_: &SamplerParams, p: &[f64]| Ok(p[..20].iter().sum::<f64>().min(1.0));
        let run = run_agent(AgentKind::Random, &cfg, &mut eval, &table).unwrap();
        let rep = aggregate_report(&[("only".into(), run)], Some((&table, &flipped))).unwrap();
        assert_eq!(rep.summary.len(), 1);
        assert_eq!(rep.curves.len(), 5);
        assert_eq!(rep.noise.len(), 1);
        let dir = tempfile::tempdir().unwrap();
        rep.write_dir(dir.path()).unwrap();
        for f in ["summary.csv", "curves.csv", "noise.csv", "report.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
    }

    proptest! {
        #[test]
        fn spearman_is_symmetric(v in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 2..30)) {
            let (a, b): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            match (spearman(&a, &b), spearman(&b, &a)) {
                (Ok(x), Ok(y)) => prop_assert!((x - y).abs() < 1e-12),
                (Err(_), Err(_)) => {}
                other => prop_assert!(false, "{other:?}"),
            }
        }

        #[test]
        fn spearman_ignores_monotone_maps(v in prop::collection::vec((-5f64..5.0, -5f64..5.0), 2..30)) {
            let (a, b): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            let ta: Vec<f64> = a.iter().map(|x| x.exp() * 3.0 + 1.0).collect();
            if let Ok(s) = spearman(&a, &b) {
                prop_assert!((s - spearman(&ta, &b).unwrap()).abs() < 1e-12);
                prop_assert!((-1.0..=1.0).contains(&s));
            }
        }

        #[test]
        fn sr_one_implies_tr_one(v in prop::collection::vec(0f64..1.0, 2..15)) {
            let r = RankReport::from_scores((0..v.len()).collect(), v.clone(), v.iter().map(|x| 2.0 * x).collect(), vec![0]).unwrap();
            if r.sr == 1.0 {
                prop_assert_eq!(r.tr, 1);
            }
        }
    }
}
