//! Age buckets, genre vocabularies and their attribute encodings.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{Dataset, ItemProfile};

/// Number of age attributes `|F_a|`.
pub const AGE_BUCKETS: usize = 7;

/// Lower bound (inclusive) of each age bucket. Boundary ages belong to the
/// higher bucket, so the ml-1m age codes 1, 18, 25, ... each map to their own
/// bucket.
pub const AGE_LOWER_BOUNDS: [u32; AGE_BUCKETS] = [1, 18, 25, 35, 45, 50, 56];

pub const AGE_BUCKET_LABELS: [&str; AGE_BUCKETS] =
    ["Under 18", "18-24", "25-34", "35-44", "45-49", "50-55", "56+"];

const ML100K_GENRES: [&str; 19] = [
    "unknown",
    "Action",
    "Adventure",
    "Animation",
    "Children's",
    "Comedy",
    "Crime",
    "Documentary",
    "Drama",
    "Fantasy",
    "Film-Noir",
    "Horror",
    "Musical",
    "Mystery",
    "Romance",
    "Sci-Fi",
    "Thriller",
    "War",
    "Western",
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeatureError {
    #[error("age must be >= 1, got {0}")]
    BadAge(u32),
    #[error("age bucket {0} outside [0,{max}]", max = AGE_BUCKETS - 1)]
    BadBucket(usize),
    #[error("unknown genre `{0}`")]
    UnknownGenre(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgeEncoding {
    /// One active attribute: the user's own bucket.
    #[default]
    OneHot,
    /// Thermometer code: every bucket up to and including the user's.
    Cumulative,
}

impl AgeEncoding {
    pub fn name(self) -> &'static str {
        match self {
            AgeEncoding::OneHot => "onehot",
            AgeEncoding::Cumulative => "cumulative",
        }
    }
}

impl std::str::FromStr for AgeEncoding {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "onehot" | "one-hot" => Ok(AgeEncoding::OneHot),
            "cumulative" => Ok(AgeEncoding::Cumulative),
            other => Err(format!("unknown age encoding `{other}` (onehot|cumulative)")),
        }
    }
}

/// Normalizer applied when averaging attribute vectors into `p_a` / `q_t`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttrNorm {
    /// Divide by the number of active attributes of the entity.
    #[default]
    Active,
    /// Divide by the vocabulary size (7 for age, |genres| for genre).
    Global,
}

impl AttrNorm {
    pub fn name(self) -> &'static str {
        match self {
            AttrNorm::Active => "active",
            AttrNorm::Global => "global",
        }
    }
}

impl std::str::FromStr for AttrNorm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "active" => Ok(AttrNorm::Active),
            "global" => Ok(AttrNorm::Global),
            other => Err(format!("unknown attribute normalizer `{other}` (active|global)")),
        }
    }
}

pub fn age_to_bucket(age: u32) -> Result<usize, FeatureError> {
    if age < 1 {
        return Err(FeatureError::BadAge(age));
    }
    Ok(AGE_LOWER_BOUNDS.iter().rposition(|&lo| age >= lo).unwrap_or(0))
}

/// Seven-bit age code, bit 0 first.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AgeCode(pub [bool; AGE_BUCKETS]);

impl AgeCode {
    pub fn active(&self) -> Vec<usize> {
        (0..AGE_BUCKETS).filter(|&b| self.0[b]).collect()
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }
}

impl fmt::Display for AgeCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &bit in &self.0 {
            f.write_str(if bit { "1" } else { "0" })?;
        }
        Ok(())
    }
}

pub fn encode_age(bucket: usize, mode: AgeEncoding) -> Result<AgeCode, FeatureError> {
    if bucket >= AGE_BUCKETS {
        return Err(FeatureError::BadBucket(bucket));
    }
    let mut bits = [false; AGE_BUCKETS];
    match mode {
        AgeEncoding::OneHot => bits[bucket] = true,
        AgeEncoding::Cumulative => bits[..=bucket].iter_mut().for_each(|b| *b = true),
    }
    Ok(AgeCode(bits))
}

/// Attribute indices whose age vectors are averaged into `p_a`.
pub fn active_age_attributes(age: u32, mode: AgeEncoding) -> Result<Vec<usize>, FeatureError> {
    Ok(encode_age(age_to_bucket(age)?, mode)?.active())
}

pub fn active_genre_attributes(item: &ItemProfile) -> Vec<usize> {
    item.genre_flags
        .iter()
        .enumerate()
        .filter_map(|(k, &on)| on.then_some(k))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenreVocabulary {
    names: Vec<String>,
}

impl GenreVocabulary {
    pub fn new(names: Vec<String>) -> Self {
        GenreVocabulary { names }
    }

    /// The 19 ml-100k genres, `unknown` first, in `u.item` column order.
    pub fn ml100k() -> Self {
        Self::new(ML100K_GENRES.iter().map(|s| s.to_string()).collect())
    }

    /// The 18 named ml-1m genres (ml-100k's list without `unknown`).
    pub fn ml1m() -> Self {
        Self::new(ML100K_GENRES[1..].iter().map(|s| s.to_string()).collect())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n.eq_ignore_ascii_case(name.trim()))
    }

    /// Resolve a list of genre names to sorted attribute indices.
    pub fn resolve<'a>(&self, names: impl IntoIterator<Item = &'a str>) -> Result<Vec<usize>, FeatureError> {
        let mut out = names
            .into_iter()
            .map(|n| self.index_of(n).ok_or_else(|| FeatureError::UnknownGenre(n.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }
}

/// Per-entity active attribute lists for a whole catalog, precomputed once.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributeTable {
    /// Dense user index -> active age attributes (never empty).
    pub user_age: Vec<Vec<usize>>,
    /// Dense item index -> active genre attributes (may be empty).
    pub item_genres: Vec<Vec<usize>>,
    pub num_genres: usize,
}

impl AttributeTable {
    pub fn build(ds: &Dataset, mode: AgeEncoding) -> Result<Self, FeatureError> {
        let cat = ds.catalog();
        let user_age = cat
            .users
            .iter()
            .map(|u| active_age_attributes(u.age, mode))
            .collect::<Result<Vec<_>, _>>()?;
        let item_genres = cat.items.iter().map(active_genre_attributes).collect();
        Ok(AttributeTable {
            user_age,
            item_genres,
            num_genres: cat.genres.len(),
        })
    }
}
