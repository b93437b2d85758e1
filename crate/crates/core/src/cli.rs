//! Command-line front end.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::analysis::{
    all_cohorts, cohort_overlap, cohort_top_group, cohorts_csv, demographics, demographics_csv, overlap_csv, popularity_csv,
    popularity_table, render_cohorts, render_popularity, AnalysisError, CohortRanking,
};
use crate::config::{ConfigError, Overrides, RunConfig};
use crate::dataio::{load, random_split, DataError, Dataset, Flavor};
use crate::eval::{
    mae, render_ablation, render_comparison, reports_csv, rmse, run_ablation, run_grid, sweep, sweep_argmin, sweep_csv,
    EvalError, EvalReport, SweepAxis,
};
use crate::features::AgeEncoding;
use crate::features::AttrNorm;
use crate::model::{load_model, save_model, FormatError, HyperParams, ItemQuery, ModelError, UserQuery, Variant};
use crate::train::{fit_with, EpochRecord, TrainError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{0}")]
    Diverged(String),
    #[error("{0}")]
    Model(String),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) | CliError::Model(_) | CliError::Write { .. } => 2,
            CliError::Diverged(_) => 3,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Data(d) => CliError::Data(d),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            e if e.is_divergence() => CliError::Diverged(e.to_string()),
            EvalError::Data(d) => CliError::Data(d),
            EvalError::Setup(s) => CliError::Usage(s),
            other => CliError::Model(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Diverged { .. } => CliError::Diverged(e.to_string()),
            TrainError::Model(ModelError::InvalidHyperParams(s)) => CliError::Usage(s),
            other => CliError::Model(other.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        CliError::Model(e.to_string())
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        CliError::Model(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "uisvd", version, about = "Attribute-aware SVD++ rating prediction on MovieLens")]
pub struct Cli {
    /// Only print warnings and errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one model and save it with its per-epoch log.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Fit on every rating instead of the training part of a split.
        #[arg(long)]
        full: bool,
    },
    /// Repeated random-split evaluation of one or more variants and ratios.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated variants to compare.
        #[arg(long, value_delimiter = ',')]
        variants: Option<Vec<Variant>>,
        /// Comma-separated training ratios.
        #[arg(long, value_delimiter = ',')]
        ratios: Option<Vec<f64>>,
    },
    /// SVD++ / USVD++ / ISVD++ / UISVD++ on shared splits.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
    },
    /// One experiment per value of a hyperparameter.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated values, e.g. 1e-4,1e-3,1e-2,1e-1,1,10.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Popularity ranking, age-cohort favourites and demographics.
    Analyze {
        #[command(flatten)]
        run: RunArgs,
        /// Rows in the popularity table; also the number of popular items
        /// removed for the popularity-excluded cohort lists.
        #[arg(long, default_value_t = 10)]
        top: usize,
        /// Length of each cohort list.
        #[arg(long, default_value_t = 20)]
        cohort_size: usize,
        #[arg(long, default_value = "sum")]
        ranking: CohortRanking,
    },
    /// Predict one rating from a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// External user id.
        #[arg(long)]
        user: Option<u32>,
        /// Age to use when the user is unknown.
        #[arg(long)]
        age: Option<u32>,
        /// External item id.
        #[arg(long)]
        item: Option<u32>,
        /// Comma-separated genre names to use when the item is unknown.
        #[arg(long, value_delimiter = ',')]
        genres: Option<Vec<String>>,
    },
}

/// Settings shared by every data-driven command. Unset flags fall back to the
/// config file, then to the per-dataset defaults.
#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// Dataset directory (ml-100k or ml-1m layout).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Dataset layout; detected from the files when omitted.
    #[arg(long)]
    pub flavor: Option<Flavor>,
    /// TOML file with any of the settings below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Latent dimension.
    #[arg(long)]
    pub k: Option<usize>,
    /// Learning rate.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Regularization weight.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Age-term weight; beta defaults to 1 - alpha.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Implicit-feedback weight.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Parameter initialization and shuffling seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub age_encoding: Option<AgeEncoding>,
    #[arg(long)]
    pub attr_norm: Option<AttrNorm>,
    /// Training fraction of each split.
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Seed of the first split; repeat r uses base_seed + r.
    #[arg(long)]
    pub base_seed: Option<u64>,
    /// Clip predictions to [1, 5] before scoring.
    #[arg(long)]
    pub clamp: bool,
    /// Parallel fits (across repeats and sweep points).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Output root.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run directory name; defaults to a timestamp.
    #[arg(long)]
    pub tag: Option<String>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            data: self.data.clone(),
            flavor: self.flavor,
            variant: self.variant,
            k: self.k,
            gamma: self.gamma,
            lambda: self.lambda,
            alpha: self.alpha,
            beta: self.beta,
            epochs: self.epochs,
            seed: self.seed,
            age_encoding: self.age_encoding,
            attr_norm: self.attr_norm,
            ratio: self.ratio,
            repeats: self.repeats,
            base_seed: self.base_seed,
            clamp: self.clamp.then_some(true),
            jobs: self.jobs,
            out: self.out.clone(),
            tag: self.tag.clone(),
            ..Overrides::default()
        }
    }

    fn resolve(&self, extra: Overrides) -> Result<RunConfig, CliError> {
        let file = match &self.config {
            Some(path) => Overrides::from_file(path)?,
            None => Overrides::default(),
        };
        Ok(RunConfig::resolve(extra.over(self.overrides()).over(file))?)
    }
}

/// Parse arguments, run, and map the outcome to the documented exit codes.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Train { run, full } => cmd_train(&run.resolve(Overrides::default())?, full),
        Command::Evaluate { run, variants, ratios } => {
            cmd_evaluate(&run.resolve(Overrides { variants, ratios, ..Overrides::default() })?)
        }
        Command::Ablate { run } => cmd_ablate(&run.resolve(Overrides::default())?),
        Command::Sweep { run, axis, values } => cmd_sweep(&run.resolve(Overrides::default())?, axis, &values),
        Command::Analyze { run, top, cohort_size, ranking } => {
            cmd_analyze(&run.resolve(Overrides::default())?, top, cohort_size, ranking)
        }
        Command::Predict { model, user, age, item, genres } => cmd_predict(&model, user, age, item, genres.as_deref()),
    }
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Write { path: path.to_path_buf(), source })
}

/// Create the run directory and store the resolved config in it.
fn prepare(cfg: &RunConfig, group: &str) -> Result<PathBuf, CliError> {
    let dir = cfg.run_dir(group);
    fs::create_dir_all(&dir).map_err(|source| CliError::Write { path: dir.clone(), source })?;
    write(&dir.join("config.toml"), &cfg.to_toml())?;
    Ok(dir)
}

fn load_data(cfg: &RunConfig) -> Result<Dataset, CliError> {
    let ds = load(&cfg.data, cfg.flavor)?;
    log::info!(
        "{}: {} users, {} items, {} ratings, sparsity {:.2}%",
        ds.name(),
        ds.num_users(),
        ds.num_items(),
        ds.len(),
        100.0 * ds.sparsity()
    );
    Ok(ds)
}

fn finish(dir: &Path) {
    println!("outputs in {}", dir.display());
}

pub fn cmd_train(cfg: &RunConfig, full: bool) -> Result<(), CliError> {
    let ds = load_data(cfg)?;
    let dir = prepare(cfg, cfg.hp.variant.name())?;
    let split = if full { None } else { Some(random_split(&ds, cfg.experiment.ratio, cfg.experiment.base_seed)?) };
    let (train, valid) = match &split {
        Some(s) => (&s.train, Some(&s.test)),
        None => (&ds, None),
    };

    let mut log_csv = String::from("epoch,train_loss,train_rmse,valid_rmse\n");
    let (model, _) = fit_with(&cfg.hp, train, valid, |rec: &EpochRecord| {
        log::info!(
            "epoch={} train_loss={:.6} train_rmse={:.6} valid_rmse={} seconds={:.2}",
            rec.epoch,
            rec.train_loss,
            rec.train_rmse,
            rec.valid_rmse.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into()),
            rec.seconds
        );
        let valid = rec.valid_rmse.map(|v| v.to_string()).unwrap_or_default();
        log_csv.push_str(&format!("{},{},{},{}\n", rec.epoch, rec.train_loss, rec.train_rmse, valid));
    })?;
    write(&dir.join("epochs.csv"), &log_csv)?;
    let path = dir.join("model.bin");
    save_model(&model, &path)?;

    if let Some(test) = valid {
        let scorer = model.scorer();
        let pairs: Vec<(f64, f64)> = test
            .ratings()
            .iter()
            .map(|r| {
                let p = scorer.raw(r.user, r.item);
                (r.value, if cfg.experiment.clamp { p.clamp(1.0, 5.0) } else { p })
            })
            .collect();
        let (e_rmse, e_mae) = (rmse(&pairs)?, mae(&pairs)?);
        write(&dir.join("metrics.csv"), &format!("rmse,mae,test_size\n{e_rmse},{e_mae},{}\n", pairs.len()))?;
        println!("{}: test RMSE {e_rmse:.4}, MAE {e_mae:.4} on {} ratings", cfg.hp.variant.label(), pairs.len());
    }
    println!("model saved to {}", path.display());
    Ok(())
}

pub fn cmd_evaluate(cfg: &RunConfig) -> Result<(), CliError> {
    let ds = load_data(cfg)?;
    let group = match cfg.variants.as_slice() {
        [v] => v.name().to_string(),
        _ => "compare".to_string(),
    };
    let dir = prepare(cfg, &group)?;
    let mut reports: Vec<EvalReport> = Vec::new();
    for &ratio in &cfg.ratios {
        let hps: Vec<HyperParams> = cfg.variants.iter().map(|&variant| HyperParams { variant, ..cfg.hp.clone() }).collect();
        let ex = crate::eval::ExperimentConfig { ratio, ..cfg.experiment.clone() };
        reports.extend(run_grid(&ds, &hps, &ex)?);
    }
    write(&dir.join("reports.csv"), &reports_csv(&reports))?;
    let table = render_comparison(ds.name(), &reports);
    write(&dir.join("comparison.txt"), &table)?;
    print!("{table}");
    finish(&dir);
    Ok(())
}

pub fn cmd_ablate(cfg: &RunConfig) -> Result<(), CliError> {
    let ds = load_data(cfg)?;
    let dir = prepare(cfg, "ablation")?;
    let reports = run_ablation(&ds, &cfg.hp, &cfg.experiment)?;
    write(&dir.join("reports.csv"), &reports_csv(&reports))?;
    let table = render_ablation(&reports);
    write(&dir.join("ablation.txt"), &table)?;
    print!("{table}");
    finish(&dir);
    Ok(())
}

pub fn cmd_sweep(cfg: &RunConfig, axis: SweepAxis, values: &[f64]) -> Result<(), CliError> {
    let ds = load_data(cfg)?;
    let dir = prepare(cfg, &format!("{}-sweep-{}", cfg.hp.variant.name(), axis.name()))?;
    let points = sweep(&ds, &cfg.hp, axis, values, &cfg.experiment)?;
    let csv = sweep_csv(axis, &points);
    write(&dir.join("sweep.csv"), &csv)?;
    let reports: Vec<EvalReport> = points.iter().map(|p| p.report.clone()).collect();
    write(&dir.join("reports.csv"), &reports_csv(&reports))?;
    print!("{csv}");
    if let Some(best) = sweep_argmin(&points) {
        println!("lowest mean RMSE at {} = {best}", axis.name());
    }
    finish(&dir);
    Ok(())
}

pub fn cmd_analyze(cfg: &RunConfig, top: usize, cohort_size: usize, ranking: CohortRanking) -> Result<(), CliError> {
    let ds = load_data(cfg)?;
    let dir = prepare(cfg, "analysis")?;

    let popularity = popularity_table(&ds)?;
    write(&dir.join("popularity.csv"), &popularity_csv(&popularity))?;
    let head = &popularity[..top.min(popularity.len())];
    let pop_table = render_popularity(head);
    write(&dir.join("popularity_top.txt"), &pop_table)?;
    println!("Most popular items\n{pop_table}");

    let none = HashSet::new();
    let cohorts = all_cohorts(&ds, cohort_size, &none, ranking)?;
    let overlap = cohort_overlap(&cohorts)?;
    write(&dir.join("cohorts.csv"), &cohorts_csv(&cohorts))?;
    write(&dir.join("cohort_overlap.csv"), &overlap_csv(&cohorts, &overlap))?;
    let cohort_table = render_cohorts(&cohorts);
    write(&dir.join("cohorts.txt"), &cohort_table)?;
    println!("Top {cohort_size} per age cohort (ranked by {})\n{cohort_table}", ranking.name());
    println!("in every cohort: {:?}", overlap.common);

    let popular: HashSet<u32> = head.iter().map(|e| e.item_id).collect();
    let cohorts_ex = all_cohorts(&ds, cohort_size, &popular, ranking)?;
    let overlap_ex = cohort_overlap(&cohorts_ex)?;
    write(&dir.join("cohorts_excluding_popular.csv"), &cohorts_csv(&cohorts_ex))?;
    write(&dir.join("cohort_overlap_excluding_popular.csv"), &overlap_csv(&cohorts_ex, &overlap_ex))?;

    let groups = [
        cohort_top_group(&ds, &[0, 1, 2], cohort_size, &popular, ranking)?,
        cohort_top_group(&ds, &[5, 6], cohort_size, &popular, ranking)?,
    ];
    let overlap_groups = cohort_overlap(&groups)?;
    write(&dir.join("cohort_groups.csv"), &cohorts_csv(&groups))?;
    println!(
        "young ({}) vs older ({}) lists without the top {top}: {} shared",
        groups[0].label(),
        groups[1].label(),
        overlap_groups.pairwise[0][1]
    );

    let shares = demographics(&ds)?;
    write(&dir.join("demographics.csv"), &demographics_csv(&shares))?;
    finish(&dir);
    Ok(())
}

pub fn cmd_predict(path: &Path, user: Option<u32>, age: Option<u32>, item: Option<u32>, genres: Option<&[String]>) -> Result<(), CliError> {
    let model = load_model(path)?;
    let user_q = match (user.and_then(|id| model.user_index.dense(id)), user, age) {
        (Some(u), _, _) => UserQuery::Known(u),
        (None, _, Some(age)) => UserQuery::Cold { age: Some(age) },
        (None, Some(id), None) => {
            return Err(CliError::Usage(format!("user {id} is unknown to the model; pass --age for a cold-start prediction")));
        }
        (None, None, None) => UserQuery::Cold { age: None },
    };
    let genre_ids = match genres {
        Some(names) => Some(
            model
                .genres
                .resolve(names.iter().map(String::as_str))
                .map_err(|e| CliError::Usage(e.to_string()))?,
        ),
        None => None,
    };
    let item_q = match (item.and_then(|id| model.item_index.dense(id)), item, &genre_ids) {
        (Some(i), _, _) => ItemQuery::Known(i),
        (None, _, Some(g)) => ItemQuery::Cold { genres: Some(g) },
        (None, Some(id), None) => {
            return Err(CliError::Usage(format!("item {id} is unknown to the model; pass --genres for a cold-start prediction")));
        }
        (None, None, None) => ItemQuery::Cold { genres: None },
    };
    let p = model
        .cold_start_predict(user_q, item_q)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    println!("raw={} clamped={} fallback={}", p.value, p.clamped_value, p.fallback.name());
    Ok(())
}
