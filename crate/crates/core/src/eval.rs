//! Error metrics and the repeated random-subsampling protocol.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{random_split, DataError, Dataset, Split};
use crate::model::{HyperParams, Variant};
use crate::train::{fit, TrainError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot score an empty set of predictions")]
    Empty,
    #[error("{variant} repeat {repeat} (split seed {seed}): {source}")]
    Fit {
        variant: Variant,
        repeat: usize,
        seed: u64,
        #[source]
        source: TrainError,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("invalid experiment setup: {0}")]
    Setup(String),
}

impl EvalError {
    pub fn is_divergence(&self) -> bool {
        matches!(self, EvalError::Fit { source: TrainError::Diverged { .. }, .. })
    }
}

/// Root-mean-squared error over `(actual, predicted)` pairs.
pub fn rmse(pairs: &[(f64, f64)]) -> Result<f64, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(rmse_of(pairs.iter().copied()))
}

/// Mean absolute error over `(actual, predicted)` pairs.
pub fn mae(pairs: &[(f64, f64)]) -> Result<f64, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::Empty);
    }
    let sum: f64 = pairs.iter().map(|(r, p)| (r - p).abs()).sum();
    Ok(sum / pairs.len() as f64)
}

/// RMSE of a stream; NaN when it is empty.
pub(crate) fn rmse_of(pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for (r, p) in pairs {
        sum += (r - p) * (r - p);
        n += 1;
    }
    (sum / n as f64).sqrt()
}

/// `(baseline - ours) / baseline`; positive when `ours` is better.
pub fn improvement_rate(baseline: f64, ours: f64) -> f64 {
    (baseline - ours) / baseline
}

/// FNV-1a over the external `(user, item)` ids of a dataset view, in order.
/// Used to show that two runs scored exactly the same test set.
pub fn test_digest(ds: &Dataset) -> u64 {
    let cat = ds.catalog();
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for r in ds.ratings() {
        let ids = [cat.user_index.external(r.user), cat.item_index.external(r.item)];
        for b in ids.iter().flat_map(|id| id.to_le_bytes()) {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub ratio: f64,
    pub repeats: usize,
    pub base_seed: u64,
    /// Clip predictions to [1, 5] before scoring.
    pub clamp: bool,
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            ratio: 0.8,
            repeats: 5,
            base_seed: 42,
            clamp: false,
            jobs: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(EvalError::Setup(format!("ratio must lie in (0, 1), got {}", self.ratio)));
        }
        if self.repeats == 0 {
            return Err(EvalError::Setup("repeats must be at least 1".into()));
        }
        Ok(())
    }

    pub fn split_seed(&self, repeat: usize) -> u64 {
        self.base_seed.wrapping_add(repeat as u64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub repeat: usize,
    pub seed: u64,
    pub rmse: f64,
    pub mae: f64,
    pub test_size: usize,
    pub test_digest: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub variant: Variant,
    pub train_ratio: f64,
    pub clamp: bool,
    pub per_repeat: Vec<RepeatResult>,
    pub mean_rmse: f64,
    pub std_rmse: f64,
    pub mean_mae: f64,
    pub std_mae: f64,
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl EvalReport {
    /// Aggregate per-repeat rows. Standard deviations are population
    /// deviations, so a single repeat reports 0.
    pub fn from_repeats(dataset: &str, variant: Variant, train_ratio: f64, clamp: bool, per_repeat: Vec<RepeatResult>) -> Self {
        let (mean_rmse, std_rmse) = mean_std(per_repeat.iter().map(|r| r.rmse));
        let (mean_mae, std_mae) = mean_std(per_repeat.iter().map(|r| r.mae));
        EvalReport {
            dataset: dataset.to_string(),
            variant,
            train_ratio,
            clamp,
            per_repeat,
            mean_rmse,
            std_rmse,
            mean_mae,
            std_mae,
        }
    }

    pub const CSV_HEADER: &'static str = "dataset,variant,ratio,repeat,seed,rmse,mae,test_size,test_digest";

    /// CSV rows without header: one per repeat, then `mean` and `std` rows.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        let lead = format!("{},{},{}", self.dataset, self.variant.name(), self.train_ratio);
        for r in &self.per_repeat {
            let _ = writeln!(
                out,
                "{lead},{},{},{},{},{},{:016x}",
                r.repeat, r.seed, r.rmse, r.mae, r.test_size, r.test_digest
            );
        }
        let _ = writeln!(out, "{lead},mean,,{},{},,", self.mean_rmse, self.mean_mae);
        let _ = writeln!(out, "{lead},std,,{},{},,", self.std_rmse, self.std_mae);
        out
    }
}

pub fn reports_csv(reports: &[EvalReport]) -> String {
    let mut out = format!("{}\n", EvalReport::CSV_HEADER);
    for r in reports {
        out.push_str(&r.csv_rows());
    }
    out
}

/// Scored `(actual, predicted)` pairs of `test` under a model fit on `split.train`.
fn score(model: &crate::model::Model, test: &Dataset, clamp: bool) -> Vec<(f64, f64)> {
    let scorer = model.scorer();
    test.ratings()
        .iter()
        .map(|r| {
            let p = scorer.raw(r.user, r.item);
            (r.value, if clamp { p.clamp(1.0, 5.0) } else { p })
        })
        .collect()
}

fn run_one(hp: &HyperParams, split: &Split, repeat: usize, clamp: bool) -> Result<RepeatResult, EvalError> {
    let wrap = |source| EvalError::Fit {
        variant: hp.variant,
        repeat,
        seed: split.seed,
        source,
    };
    let (model, _) = fit(hp, &split.train, None).map_err(wrap)?;
    let pairs = score(&model, &split.test, clamp);
    Ok(RepeatResult {
        repeat,
        seed: split.seed,
        rmse: rmse(&pairs)?,
        mae: mae(&pairs)?,
        test_size: split.test.len(),
        test_digest: test_digest(&split.test),
    })
}

fn in_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T, EvalError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| EvalError::Setup(e.to_string()))?;
    Ok(pool.install(f))
}

/// Every configuration in `hps` on the same `cfg.repeats` splits. Fits run
/// concurrently up to `cfg.jobs`; results come back in input order.
pub fn run_grid(ds: &Dataset, hps: &[HyperParams], cfg: &ExperimentConfig) -> Result<Vec<EvalReport>, EvalError> {
    cfg.validate()?;
    for hp in hps {
        hp.validate().map_err(|e| EvalError::Setup(e.to_string()))?;
    }
    let splits = (0..cfg.repeats)
        .map(|r| random_split(ds, cfg.ratio, cfg.split_seed(r)))
        .collect::<Result<Vec<_>, _>>()?;
    let tasks: Vec<(usize, usize)> = (0..hps.len()).flat_map(|h| (0..cfg.repeats).map(move |r| (h, r))).collect();
    let results: Vec<Result<RepeatResult, EvalError>> = in_pool(cfg.jobs, || {
        tasks
            .par_iter()
            .map(|&(h, r)| {
                log::info!("fitting {} repeat {} (seed {})", hps[h].variant, r, splits[r].seed);
                run_one(&hps[h], &splits[r], r, cfg.clamp)
            })
            .collect()
    })?;
    let mut results = results.into_iter();
    hps.iter()
        .map(|hp| {
            let rows = results.by_ref().take(cfg.repeats).collect::<Result<Vec<_>, _>>()?;
            Ok(EvalReport::from_repeats(ds.name(), hp.variant, cfg.ratio, cfg.clamp, rows))
        })
        .collect()
}

pub fn run_experiment(ds: &Dataset, hp: &HyperParams, cfg: &ExperimentConfig) -> Result<EvalReport, EvalError> {
    Ok(run_grid(ds, std::slice::from_ref(hp), cfg)?.remove(0))
}

/// SVD++, USVD++, ISVD++ and UISVD++ on shared splits.
pub fn run_ablation(ds: &Dataset, hp: &HyperParams, cfg: &ExperimentConfig) -> Result<Vec<EvalReport>, EvalError> {
    run_variants(ds, hp, &Variant::ABLATION, cfg)
}

pub fn run_variants(ds: &Dataset, hp: &HyperParams, variants: &[Variant], cfg: &ExperimentConfig) -> Result<Vec<EvalReport>, EvalError> {
    let hps: Vec<HyperParams> = variants.iter().map(|&variant| HyperParams { variant, ..hp.clone() }).collect();
    run_grid(ds, &hps, cfg)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Lambda,
    K,
    Epochs,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Lambda => "lambda",
            SweepAxis::K => "k",
            SweepAxis::Epochs => "epochs",
        }
    }

    /// `base` with this axis set to `value`.
    pub fn apply(self, base: &HyperParams, value: f64) -> Result<HyperParams, EvalError> {
        let mut hp = base.clone();
        match self {
            SweepAxis::Lambda => hp.lambda = value,
            SweepAxis::K | SweepAxis::Epochs => {
                if value < 0.0 || value.fract() != 0.0 {
                    return Err(EvalError::Setup(format!("{} must be a whole number, got {value}", self.name())));
                }
                if self == SweepAxis::K {
                    hp.k = value as usize;
                } else {
                    hp.epochs = value as usize;
                }
            }
        }
        Ok(hp)
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lambda" => Ok(SweepAxis::Lambda),
            "k" | "factors" => Ok(SweepAxis::K),
            "epochs" => Ok(SweepAxis::Epochs),
            other => Err(format!("unknown sweep axis `{other}` (lambda|k|epochs)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub report: EvalReport,
}

/// One full experiment per value, all on the same splits.
pub fn sweep(ds: &Dataset, base: &HyperParams, axis: SweepAxis, values: &[f64], cfg: &ExperimentConfig) -> Result<Vec<SweepPoint>, EvalError> {
    if values.is_empty() {
        return Err(EvalError::Setup("sweep needs at least one value".into()));
    }
    let hps = values.iter().map(|&v| axis.apply(base, v)).collect::<Result<Vec<_>, _>>()?;
    let reports = run_grid(ds, &hps, cfg)?;
    Ok(values.iter().zip(reports).map(|(&value, report)| SweepPoint { value, report }).collect())
}

pub fn sweep_csv(axis: SweepAxis, points: &[SweepPoint]) -> String {
    let mut out = format!("{},mean_rmse,std_rmse,mean_mae,std_mae\n", axis.name());
    for p in points {
        let r = &p.report;
        let _ = writeln!(out, "{},{},{},{},{}", p.value, r.mean_rmse, r.std_rmse, r.mean_mae, r.std_mae);
    }
    out
}

/// The sweep value with the lowest mean RMSE (first on ties).
pub fn sweep_argmin(points: &[SweepPoint]) -> Option<f64> {
    points
        .iter()
        .min_by(|a, b| a.report.mean_rmse.total_cmp(&b.report.mean_rmse))
        .map(|p| p.value)
}

/// Externally published RMSE for models not implemented here.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportedBaseline {
    pub method: String,
    pub ratio: f64,
    pub ml100k: f64,
    pub ml1m: f64,
}

impl ReportedBaseline {
    pub const NOTE: &'static str = "reported, not reproduced";

    pub fn rmse_for(&self, dataset: &str) -> Option<f64> {
        match dataset {
            "ml-100k" => Some(self.ml100k),
            "ml-1m" => Some(self.ml1m),
            _ => None,
        }
    }
}

const REPORTED_BASELINES: &str = include_str!("../assets/reported_baselines.csv");

pub fn reported_baselines() -> Vec<ReportedBaseline> {
    REPORTED_BASELINES
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            ReportedBaseline {
                method: f[0].to_string(),
                ratio: f[1].parse().expect("bundled baseline table"),
                ml100k: f[2].parse().expect("bundled baseline table"),
                ml1m: f[3].parse().expect("bundled baseline table"),
            }
        })
        .collect()
}

fn ratio_label(ratio: f64) -> String {
    format!("{}%", (ratio * 100.0).round())
}

/// Aligned RMSE comparison: one row per method, one column per training
/// ratio found in `reports`. Published-only baselines are appended and
/// marked; `reference` (if any) gets an improvement-rate column against
/// every other row at its ratio.
pub fn render_comparison(dataset: &str, reports: &[EvalReport]) -> String {
    let mut ratios: Vec<f64> = reports.iter().map(|r| r.train_ratio).collect();
    ratios.sort_by(|a, b| b.total_cmp(a));
    ratios.dedup();
    let mut variants: Vec<Variant> = Vec::new();
    for r in reports {
        if !variants.contains(&r.variant) {
            variants.push(r.variant);
        }
    }
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut head = vec![format!("Method ({dataset})")];
    head.extend(ratios.iter().map(|&r| ratio_label(r)));
    head.push(String::new());
    rows.push(head);
    for v in &variants {
        let mut row = vec![v.label().to_string()];
        for &ratio in &ratios {
            let found = reports.iter().find(|r| r.variant == *v && r.train_ratio == ratio);
            row.push(cell(found.map(|r| r.mean_rmse)));
        }
        row.push(String::new());
        rows.push(row);
    }
    for name in ["FM", "FeatureMF", "ConvMF", "DHA-RS"] {
        let mut row = vec![name.to_string()];
        for &ratio in &ratios {
            let b = reported_baselines()
                .into_iter()
                .find(|b| b.method == name && (b.ratio - ratio).abs() < 1e-9)
                .and_then(|b| b.rmse_for(dataset));
            row.push(cell(b));
        }
        row.push(format!("({})", ReportedBaseline::NOTE));
        rows.push(row);
    }
    align(&rows)
}

/// Aligned RMSE/MAE table, one block per variant, plus each variant's
/// improvement over the first report.
pub fn render_ablation(reports: &[EvalReport]) -> String {
    let mut rows = vec![vec![
        "Method".to_string(),
        "Metric".to_string(),
        reports.first().map(|r| r.dataset.clone()).unwrap_or_default(),
        "std".to_string(),
        "vs first".to_string(),
    ]];
    let base = reports.first();
    for r in reports {
        let imp = |b: f64, o: f64| format!("{:+.2}%", 100.0 * improvement_rate(b, o));
        rows.push(vec![
            r.variant.label().to_string(),
            "RMSE".into(),
            format!("{:.4}", r.mean_rmse),
            format!("{:.4}", r.std_rmse),
            base.map(|b| imp(b.mean_rmse, r.mean_rmse)).unwrap_or_default(),
        ]);
        rows.push(vec![
            String::new(),
            "MAE".into(),
            format!("{:.4}", r.mean_mae),
            format!("{:.4}", r.std_mae),
            base.map(|b| imp(b.mean_mae, r.mean_mae)).unwrap_or_default(),
        ]);
    }
    align(&rows)
}

pub(crate) fn align(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row.iter().enumerate().map(|(c, s)| format!("{s:<w$}", w = widths[c])).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}
