//! Run configuration: TOML file and command-line overrides resolved into one
//! fully specified, serializable record.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{DataError, Flavor};
use crate::eval::ExperimentConfig;
use crate::features::{AgeEncoding, AttrNorm};
use crate::model::{HyperParams, Variant};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("bad config {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("no dataset directory given (use --data or `data` in the config)")]
    NoData,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{0}")]
    Invalid(String),
}

/// Every setting optional; used both for config files and for the flags of
/// one invocation. Layers are merged with [`Overrides::over`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Overrides {
    pub data: Option<PathBuf>,
    pub flavor: Option<Flavor>,
    pub variant: Option<Variant>,
    pub variants: Option<Vec<Variant>>,
    pub k: Option<usize>,
    pub gamma: Option<f64>,
    pub lambda: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub age_encoding: Option<AgeEncoding>,
    pub attr_norm: Option<AttrNorm>,
    pub ratio: Option<f64>,
    pub ratios: Option<Vec<f64>>,
    pub repeats: Option<usize>,
    pub base_seed: Option<u64>,
    pub clamp: Option<bool>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub tag: Option<String>,
}

macro_rules! layer {
    ($top:expr, $base:expr, $($f:ident),*) => {
        Overrides { $($f: $top.$f.or($base.$f)),* }
    };
}

impl Overrides {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse { path: path.to_path_buf(), source })
    }

    /// `self` wins wherever it is set.
    pub fn over(self, base: Overrides) -> Overrides {
        layer!(
            self, base, data, flavor, variant, variants, k, gamma, lambda, alpha, beta, epochs, seed, age_encoding,
            attr_norm, ratio, ratios, repeats, base_seed, clamp, jobs, out, tag
        )
    }
}

/// A fully resolved run. Serializing it and feeding the result back as a
/// config file reproduces the run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data: PathBuf,
    pub flavor: Flavor,
    pub hp: HyperParams,
    pub variants: Vec<Variant>,
    pub experiment: ExperimentConfig,
    pub ratios: Vec<f64>,
    pub out: PathBuf,
    pub tag: String,
}

impl RunConfig {
    /// Fill unset values from the per-dataset defaults. Setting only one of
    /// `alpha` / `beta` derives the other from `alpha + beta = 1`.
    pub fn resolve(o: Overrides) -> Result<RunConfig, ConfigError> {
        let data = o.data.ok_or(ConfigError::NoData)?;
        let flavor = match o.flavor {
            Some(f) => f,
            None => Flavor::detect(&data)?,
        };
        let mut hp = HyperParams::for_flavor(flavor);
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = o.$f { hp.$f = v; })* };
        }
        set!(k, gamma, lambda, epochs, seed, variant, age_encoding, attr_norm);
        match (o.alpha, o.beta) {
            (Some(a), Some(b)) => (hp.alpha, hp.beta) = (a, b),
            (Some(a), None) => (hp.alpha, hp.beta) = (a, 1.0 - a),
            (None, Some(b)) => (hp.alpha, hp.beta) = (1.0 - b, b),
            (None, None) => {}
        }
        hp.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;

        let defaults = ExperimentConfig::default();
        let experiment = ExperimentConfig {
            ratio: o.ratio.unwrap_or(defaults.ratio),
            repeats: o.repeats.unwrap_or(defaults.repeats),
            base_seed: o.base_seed.unwrap_or(defaults.base_seed),
            clamp: o.clamp.unwrap_or(defaults.clamp),
            jobs: o.jobs.unwrap_or(defaults.jobs),
        };
        experiment.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let ratios = o.ratios.unwrap_or_else(|| vec![experiment.ratio]);
        if let Some(r) = ratios.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
            return Err(ConfigError::Invalid(format!("ratio must lie in (0, 1), got {r}")));
        }
        if ratios.is_empty() {
            return Err(ConfigError::Invalid("ratio list is empty".into()));
        }
        let variants = o.variants.unwrap_or_else(|| vec![hp.variant]);
        if variants.is_empty() {
            return Err(ConfigError::Invalid("variant list is empty".into()));
        }
        let tag = o.tag.unwrap_or_else(default_tag);
        if tag.is_empty() || tag.contains(['/', '\\']) || tag == "." || tag == ".." {
            return Err(ConfigError::Invalid(format!("tag `{tag}` is not a plain directory name")));
        }
        Ok(RunConfig {
            data,
            flavor,
            hp,
            variants,
            experiment,
            ratios,
            out: o.out.unwrap_or_else(|| PathBuf::from("runs")),
            tag,
        })
    }

    pub fn to_overrides(&self) -> Overrides {
        let hp = &self.hp;
        let ex = &self.experiment;
        Overrides {
            data: Some(self.data.clone()),
            flavor: Some(self.flavor),
            variant: Some(hp.variant),
            variants: Some(self.variants.clone()),
            k: Some(hp.k),
            gamma: Some(hp.gamma),
            lambda: Some(hp.lambda),
            alpha: Some(hp.alpha),
            beta: Some(hp.beta),
            epochs: Some(hp.epochs),
            seed: Some(hp.seed),
            age_encoding: Some(hp.age_encoding),
            attr_norm: Some(hp.attr_norm),
            ratio: Some(ex.ratio),
            ratios: Some(self.ratios.clone()),
            repeats: Some(ex.repeats),
            base_seed: Some(ex.base_seed),
            clamp: Some(ex.clamp),
            jobs: Some(ex.jobs),
            out: Some(self.out.clone()),
            tag: Some(self.tag.clone()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_overrides()).expect("config is always serializable")
    }

    /// `<out>/<dataset>/<group>/<tag>`
    pub fn run_dir(&self, group: &str) -> PathBuf {
        self.out.join(self.flavor.name()).join(group).join(&self.tag)
    }
}

fn default_tag() -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("t{secs}")
}
