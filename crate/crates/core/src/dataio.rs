//! MovieLens parsing, dense re-indexing and train/test splitting.
//!
//! A [`Dataset`] is a set of ratings over a shared [`Catalog`] of user and
//! item profiles. Splits produce two datasets over the same catalog, each
//! with its own implicit-feedback sets `N(u)` so that test ratings never leak
//! into the training view.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::GenreVocabulary;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{file}:{line}: {reason}")]
    Malformed {
        file: String,
        line: usize,
        reason: String,
    },
    #[error("{file}:{line}: rating {value} outside [1,5]")]
    RatingOutOfRange { file: String, line: usize, value: i64 },
    #[error("{file}:{line}: item {item_id} has no entry in the item file")]
    UnknownItem {
        file: String,
        line: usize,
        item_id: u32,
    },
    #[error("{file}:{line}: user {user_id} has no entry in the user file")]
    UnknownUser {
        file: String,
        line: usize,
        user_id: u32,
    },
    #[error("no ratings")]
    NoRatings,
    #[error("split ratio {0} outside (0,1)")]
    BadRatio(f64),
    #[error("could not detect dataset flavor in {0} (expected u.data or ratings.dat)")]
    UnknownFlavor(PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Flavor {
    #[serde(rename = "ml-100k")]
    Ml100k,
    #[serde(rename = "ml-1m")]
    Ml1m,
}

impl Flavor {
    pub fn name(self) -> &'static str {
        match self {
            Flavor::Ml100k => "ml-100k",
            Flavor::Ml1m => "ml-1m",
        }
    }

    /// Guess the flavor from the files present in `dir`.
    pub fn detect(dir: &Path) -> Result<Flavor, DataError> {
        if dir.join("u.data").exists() {
            Ok(Flavor::Ml100k)
        } else if dir.join("ratings.dat").exists() {
            Ok(Flavor::Ml1m)
        } else {
            Err(DataError::UnknownFlavor(dir.to_path_buf()))
        }
    }
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Flavor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ml-100k" | "ml100k" | "100k" => Ok(Flavor::Ml100k),
            "ml-1m" | "ml1m" | "1m" => Ok(Flavor::Ml1m),
            other => Err(format!("unknown dataset flavor `{other}`")),
        }
    }
}

/// One observed interaction, as it appears in the rating file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RatingRecord {
    pub user_id: u32,
    pub item_id: u32,
    pub rating: u8,
    pub timestamp: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gender {
    M,
    F,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserProfile {
    pub user_id: u32,
    pub age: u32,
    pub gender: Gender,
    pub occupation: String,
    pub zip: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ItemProfile {
    pub item_id: u32,
    pub title: String,
    pub genre_flags: Vec<bool>,
}

/// Bijection between external ids and dense `0..len` indices.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IdIndex {
    to_dense: HashMap<u32, u32>,
    to_external: Vec<u32>,
}

impl IdIndex {
    /// Build from ids already sorted and deduplicated.
    pub fn from_sorted(ids: Vec<u32>) -> Self {
        let to_dense = ids
            .iter()
            .enumerate()
            .map(|(dense, &ext)| (ext, dense as u32))
            .collect();
        IdIndex {
            to_dense,
            to_external: ids,
        }
    }

    pub fn dense(&self, external: u32) -> Option<u32> {
        self.to_dense.get(&external).copied()
    }

    pub fn external(&self, dense: u32) -> u32 {
        self.to_external[dense as usize]
    }

    pub fn externals(&self) -> &[u32] {
        &self.to_external
    }

    pub fn len(&self) -> usize {
        self.to_external.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to_external.is_empty()
    }
}

/// Profiles and id maps shared by a dataset and every view split from it.
#[derive(Debug, PartialEq)]
pub struct Catalog {
    pub name: String,
    pub genres: GenreVocabulary,
    /// Indexed by dense user index.
    pub users: Vec<UserProfile>,
    /// Indexed by dense item index.
    pub items: Vec<ItemProfile>,
    pub user_index: IdIndex,
    pub item_index: IdIndex,
}

/// A rating addressed by dense indices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rating {
    pub user: u32,
    pub item: u32,
    pub value: f64,
    pub timestamp: i64,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    catalog: Arc<Catalog>,
    ratings: Vec<Rating>,
    rated_items: Vec<Vec<u32>>,
}

impl Dataset {
    /// Assemble a dataset from dense ratings. `N(u)` is derived from `ratings`.
    pub fn new(catalog: Arc<Catalog>, ratings: Vec<Rating>) -> Self {
        let mut rated_items = vec![Vec::new(); catalog.users.len()];
        for r in &ratings {
            rated_items[r.user as usize].push(r.item);
        }
        for items in &mut rated_items {
            items.sort_unstable();
            items.dedup();
        }
        Dataset {
            catalog,
            ratings,
            rated_items,
        }
    }

    pub fn catalog(&self) -> &Arc<Catalog> {
        &self.catalog
    }

    pub fn name(&self) -> &str {
        &self.catalog.name
    }

    pub fn ratings(&self) -> &[Rating] {
        &self.ratings
    }

    pub fn num_users(&self) -> usize {
        self.catalog.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.catalog.items.len()
    }

    pub fn len(&self) -> usize {
        self.ratings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratings.is_empty()
    }

    /// Dense item indices rated by dense user `u` in this view, ascending.
    pub fn rated_items(&self, u: u32) -> &[u32] {
        &self.rated_items[u as usize]
    }

    pub fn user(&self, u: u32) -> &UserProfile {
        &self.catalog.users[u as usize]
    }

    pub fn item(&self, i: u32) -> &ItemProfile {
        &self.catalog.items[i as usize]
    }

    pub fn mean_rating(&self) -> Option<f64> {
        if self.ratings.is_empty() {
            return None;
        }
        Some(self.ratings.iter().map(|r| r.value).sum::<f64>() / self.ratings.len() as f64)
    }

    /// `1 - |ratings| / (m * n)`.
    pub fn sparsity(&self) -> f64 {
        let cells = self.num_users() as f64 * self.num_items() as f64;
        1.0 - self.ratings.len() as f64 / cells
    }

    /// Back to external-id records, in view order.
    pub fn records(&self) -> impl Iterator<Item = RatingRecord> + '_ {
        self.ratings.iter().map(|r| RatingRecord {
            user_id: self.catalog.user_index.external(r.user),
            item_id: self.catalog.item_index.external(r.item),
            rating: r.value as u8,
            timestamp: r.timestamp,
        })
    }
}

pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
    pub ratio: f64,
    pub seed: u64,
}

/// Shuffle-then-cut split: exactly `round(ratio * len)` ratings go to train.
/// Both views keep the original file order of their ratings.
pub fn random_split(ds: &Dataset, ratio: f64, seed: u64) -> Result<Split, DataError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DataError::BadRatio(ratio));
    }
    let total = ds.ratings.len();
    let mut order: Vec<usize> = (0..total).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let cut = (ratio * total as f64).round() as usize;
    let (train_idx, test_idx) = order.split_at(cut);
    let pick = |idx: &[usize]| {
        let mut idx = idx.to_vec();
        idx.sort_unstable();
        idx.into_iter().map(|k| ds.ratings[k]).collect::<Vec<_>>()
    };
    Ok(Split {
        train: Dataset::new(Arc::clone(&ds.catalog), pick(train_idx)),
        test: Dataset::new(Arc::clone(&ds.catalog), pick(test_idx)),
        ratio,
        seed,
    })
}

pub fn load(dir: &Path, flavor: Flavor) -> Result<Dataset, DataError> {
    match flavor {
        Flavor::Ml100k => load_ml100k(dir),
        Flavor::Ml1m => load_ml1m(dir),
    }
}

pub fn load_ml100k(dir: &Path) -> Result<Dataset, DataError> {
    let data = read_text(&dir.join("u.data"))?;
    let item_text = read_text(&dir.join("u.item"))?;
    let user_text = read_text(&dir.join("u.user"))?;

    let genres = GenreVocabulary::ml100k();
    let ratings = parse_ml100k_ratings(&data)?;
    let items = parse_ml100k_items(&item_text, genres.len())?;
    let users = parse_ml100k_users(&user_text)?;
    assemble(Flavor::Ml100k, genres, ratings, users, items, "u.data")
}

pub fn load_ml1m(dir: &Path) -> Result<Dataset, DataError> {
    let data = read_text(&dir.join("ratings.dat"))?;
    let movie_text = read_text(&dir.join("movies.dat"))?;
    let user_text = read_text(&dir.join("users.dat"))?;

    let genres = GenreVocabulary::ml1m();
    let ratings = parse_ml1m_ratings(&data)?;
    let items = parse_ml1m_movies(&movie_text, &genres)?;
    let users = parse_ml1m_users(&user_text)?;
    assemble(Flavor::Ml1m, genres, ratings, users, items, "ratings.dat")
}

/// Read a file as text. Invalid UTF-8 (ml-100k titles are Latin-1) is decoded
/// byte-for-byte as Latin-1.
fn read_text(path: &Path) -> Result<String, DataError> {
    let bytes = fs::read(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            DataError::MissingFile(path.to_path_buf())
        } else {
            DataError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    })?;
    Ok(match String::from_utf8(bytes) {
        Ok(s) => s,
        Err(e) => e.into_bytes().iter().map(|&b| b as char).collect(),
    })
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn malformed(file: &str, line: usize, reason: impl Into<String>) -> DataError {
    DataError::Malformed {
        file: file.to_string(),
        line,
        reason: reason.into(),
    }
}

fn field<T: std::str::FromStr>(file: &str, line: usize, name: &str, raw: &str) -> Result<T, DataError> {
    raw.trim()
        .parse()
        .map_err(|_| malformed(file, line, format!("bad {name} `{raw}`")))
}

fn rating_record(file: &str, line: usize, cols: &[&str]) -> Result<RatingRecord, DataError> {
    if cols.len() != 4 {
        return Err(malformed(file, line, format!("expected 4 fields, found {}", cols.len())));
    }
    let user_id: u32 = field(file, line, "user id", cols[0])?;
    let item_id: u32 = field(file, line, "item id", cols[1])?;
    let rating: i64 = field(file, line, "rating", cols[2])?;
    let timestamp: i64 = field(file, line, "timestamp", cols[3])?;
    if user_id == 0 || item_id == 0 {
        return Err(malformed(file, line, "ids must be >= 1"));
    }
    if !(1..=5).contains(&rating) {
        return Err(DataError::RatingOutOfRange {
            file: file.to_string(),
            line,
            value: rating,
        });
    }
    Ok(RatingRecord {
        user_id,
        item_id,
        rating: rating as u8,
        timestamp,
    })
}

/// Parsed rating line together with its 1-based line number.
type Numbered<T> = (usize, T);

pub fn parse_ml100k_ratings(text: &str) -> Result<Vec<Numbered<RatingRecord>>, DataError> {
    lines(text)
        .map(|(n, l)| {
            let cols: Vec<&str> = l.split('\t').collect();
            rating_record("u.data", n, &cols).map(|r| (n, r))
        })
        .collect()
}

pub fn parse_ml1m_ratings(text: &str) -> Result<Vec<Numbered<RatingRecord>>, DataError> {
    lines(text)
        .map(|(n, l)| {
            let cols: Vec<&str> = l.split("::").collect();
            rating_record("ratings.dat", n, &cols).map(|r| (n, r))
        })
        .collect()
}

fn parse_gender(file: &str, line: usize, raw: &str) -> Result<Gender, DataError> {
    match raw.trim() {
        "M" => Ok(Gender::M),
        "F" => Ok(Gender::F),
        other => Err(malformed(file, line, format!("bad gender `{other}`"))),
    }
}

fn user_profile(file: &str, line: usize, cols: &[&str]) -> Result<UserProfile, DataError> {
    let user_id: u32 = field(file, line, "user id", cols[0])?;
    let age: u32 = field(file, line, "age", cols[1])?;
    if age < 1 {
        return Err(malformed(file, line, "age must be >= 1"));
    }
    Ok(UserProfile {
        user_id,
        age,
        gender: parse_gender(file, line, cols[2])?,
        occupation: cols[3].to_string(),
        zip: cols[4].to_string(),
    })
}

pub fn parse_ml100k_users(text: &str) -> Result<Vec<UserProfile>, DataError> {
    lines(text)
        .map(|(n, l)| {
            let cols: Vec<&str> = l.split('|').collect();
            if cols.len() != 5 {
                return Err(malformed("u.user", n, format!("expected 5 fields, found {}", cols.len())));
            }
            user_profile("u.user", n, &cols)
        })
        .collect()
}

/// `users.dat` is `id::gender::age::occupation::zip`.
pub fn parse_ml1m_users(text: &str) -> Result<Vec<UserProfile>, DataError> {
    lines(text)
        .map(|(n, l)| {
            let cols: Vec<&str> = l.split("::").collect();
            if cols.len() != 5 {
                return Err(malformed("users.dat", n, format!("expected 5 fields, found {}", cols.len())));
            }
            user_profile("users.dat", n, &[cols[0], cols[2], cols[1], cols[3], cols[4]])
        })
        .collect()
}

pub fn parse_ml100k_items(text: &str, num_genres: usize) -> Result<Vec<ItemProfile>, DataError> {
    lines(text)
        .map(|(n, l)| {
            let cols: Vec<&str> = l.split('|').collect();
            if cols.len() != 5 + num_genres {
                return Err(malformed(
                    "u.item",
                    n,
                    format!("expected {} fields, found {}", 5 + num_genres, cols.len()),
                ));
            }
            let item_id: u32 = field("u.item", n, "item id", cols[0])?;
            let genre_flags = cols[5..]
                .iter()
                .map(|flag| match flag.trim() {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    other => Err(malformed("u.item", n, format!("bad genre flag `{other}`"))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(ItemProfile {
                item_id,
                title: cols[1].to_string(),
                genre_flags,
            })
        })
        .collect()
}

pub fn parse_ml1m_movies(text: &str, genres: &GenreVocabulary) -> Result<Vec<ItemProfile>, DataError> {
    lines(text)
        .map(|(n, l)| {
            // Titles may themselves contain ':' but never "::".
            let cols: Vec<&str> = l.split("::").collect();
            if cols.len() != 3 {
                return Err(malformed("movies.dat", n, format!("expected 3 fields, found {}", cols.len())));
            }
            let item_id: u32 = field("movies.dat", n, "movie id", cols[0])?;
            let mut genre_flags = vec![false; genres.len()];
            for name in cols[2].split('|').filter(|g| !g.is_empty()) {
                let idx = genres
                    .index_of(name)
                    .ok_or_else(|| malformed("movies.dat", n, format!("unknown genre `{name}`")))?;
                genre_flags[idx] = true;
            }
            Ok(ItemProfile {
                item_id,
                title: cols[1].to_string(),
                genre_flags,
            })
        })
        .collect()
}

/// Resolve external ids, drop duplicate (user, item) pairs keeping the last
/// occurrence, and index users/items that appear in at least one rating.
fn assemble(
    flavor: Flavor,
    genres: GenreVocabulary,
    records: Vec<Numbered<RatingRecord>>,
    users: Vec<UserProfile>,
    items: Vec<ItemProfile>,
    rating_file: &str,
) -> Result<Dataset, DataError> {
    if records.is_empty() {
        return Err(DataError::NoRatings);
    }
    let user_rows: HashMap<u32, usize> = users.iter().enumerate().map(|(k, u)| (u.user_id, k)).collect();
    let item_rows: HashMap<u32, usize> = items.iter().enumerate().map(|(k, i)| (i.item_id, k)).collect();

    let mut last_seen: HashMap<(u32, u32), usize> = HashMap::with_capacity(records.len());
    for (pos, (line, rec)) in records.iter().enumerate() {
        if !user_rows.contains_key(&rec.user_id) {
            return Err(DataError::UnknownUser {
                file: rating_file.to_string(),
                line: *line,
                user_id: rec.user_id,
            });
        }
        if !item_rows.contains_key(&rec.item_id) {
            return Err(DataError::UnknownItem {
                file: rating_file.to_string(),
                line: *line,
                item_id: rec.item_id,
            });
        }
        if let Some(prev) = last_seen.insert((rec.user_id, rec.item_id), pos) {
            log::warn!(
                "{rating_file}:{line}: duplicate rating for user {} item {} (line {} superseded)",
                rec.user_id,
                rec.item_id,
                records[prev].0
            );
        }
    }
    let kept: Vec<RatingRecord> = records
        .iter()
        .enumerate()
        .filter(|(pos, (_, rec))| last_seen[&(rec.user_id, rec.item_id)] == *pos)
        .map(|(_, (_, rec))| *rec)
        .collect();

    let mut user_ids: Vec<u32> = kept.iter().map(|r| r.user_id).collect();
    user_ids.sort_unstable();
    user_ids.dedup();
    let mut item_ids: Vec<u32> = kept.iter().map(|r| r.item_id).collect();
    item_ids.sort_unstable();
    item_ids.dedup();

    let user_index = IdIndex::from_sorted(user_ids);
    let item_index = IdIndex::from_sorted(item_ids);
    let catalog = Catalog {
        name: flavor.name().to_string(),
        genres,
        users: user_index
            .externals()
            .iter()
            .map(|id| users[user_rows[id]].clone())
            .collect(),
        items: item_index
            .externals()
            .iter()
            .map(|id| items[item_rows[id]].clone())
            .collect(),
        user_index,
        item_index,
    };
    let ratings = kept
        .iter()
        .map(|r| Rating {
            user: catalog.user_index.dense(r.user_id).expect("indexed above"),
            item: catalog.item_index.dense(r.item_id).expect("indexed above"),
            value: r.rating as f64,
            timestamp: r.timestamp,
        })
        .collect();
    Ok(Dataset::new(Arc::new(catalog), ratings))
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    fn toy() -> Dataset {
        let dir = tempfile::tempdir().unwrap();
        write_ml100k(dir.path(), U_DATA);
        load_ml100k(dir.path()).unwrap()
    }

    #[test]
    fn parses_tab_separated_line() {
        let recs = parse_ml100k_ratings("1\t5\t3\t881250949\n").unwrap();
        assert_eq!(
            recs[0].1,
            RatingRecord {
                user_id: 1,
                item_id: 5,
                rating: 3,
                timestamp: 881250949
            }
        );
    }

    #[test]
    fn loads_toy_directory() {
        let ds = toy();
        assert_eq!((ds.num_users(), ds.num_items(), ds.len()), (3, 3, 6));
        assert_eq!(ds.rated_items(0), &[0, 1]);
        assert_eq!(ds.item(2).title, "unknown");
        assert_eq!(ds.user(2).age, 9);
        assert!((ds.sparsity() - (1.0 - 6.0 / 9.0)).abs() < 1e-15);
    }

    #[test]
    fn empty_ratings_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        write_ml100k(dir.path(), "");
        assert!(matches!(load_ml100k(dir.path()), Err(DataError::NoRatings)));
    }

    #[test]
    fn missing_file_is_named() {
        let dir = tempfile::tempdir().unwrap();
        write_ml100k(dir.path(), U_DATA);
        fs::remove_file(dir.path().join("u.user")).unwrap();
        match load_ml100k(dir.path()) {
            Err(DataError::MissingFile(p)) => assert!(p.ends_with("u.user")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_out_of_range_rating() {
        let dir = tempfile::tempdir().unwrap();
        write_ml100k(dir.path(), "1\t1\t6\t0\n");
        assert!(matches!(
            load_ml100k(dir.path()),
            Err(DataError::RatingOutOfRange { line: 1, value: 6, .. })
        ));
    }

    #[test]
    fn rejects_malformed_line() {
        let dir = tempfile::tempdir().unwrap();
        write_ml100k(dir.path(), "1\t1\t5\t0\n1\tx\t5\t0\n");
        assert!(matches!(load_ml100k(dir.path()), Err(DataError::Malformed { line: 2, .. })));
        write_ml100k(dir.path(), "1\t1\t5\n");
        assert!(matches!(load_ml100k(dir.path()), Err(DataError::Malformed { line: 1, .. })));
    }

    #[test]
    fn duplicate_pair_keeps_last() {
        let dir = tempfile::tempdir().unwrap();
        write_ml100k(dir.path(), "1\t1\t5\t10\n2\t2\t3\t11\n1\t1\t2\t12\n");
        let ds = load_ml100k(dir.path()).unwrap();
        let recs: Vec<_> = ds.records().collect();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].rating, 2);
        assert_eq!(recs[1].timestamp, 12);
    }

    #[test]
    fn unknown_item_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        write_ml100k(dir.path(), "1\t9\t5\t10\n");
        assert!(matches!(load_ml100k(dir.path()), Err(DataError::UnknownItem { item_id: 9, .. })));
    }

    #[test]
    fn latin1_titles_decode() {
        let dir = tempfile::tempdir().unwrap();
        write_ml100k(dir.path(), U_DATA);
        let mut item = u_item().into_bytes();
        let pos = item.iter().position(|&b| b == b'T').unwrap();
        item[pos] = 0xC9; // 'É' in Latin-1
        fs::write(dir.path().join("u.item"), item).unwrap();
        let ds = load_ml100k(dir.path()).unwrap();
        assert!(ds.item(0).title.starts_with('É'));
    }

    #[test]
    fn ml1m_parsing() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("ratings.dat"), "1::10::5::978300760\n2::20::3::978302109\n").unwrap();
        fs::write(
            dir.path().join("movies.dat"),
            "10::Toy Story (1995)::Animation|Children's|Comedy\n20::Heat (1995)::Action|Crime|Thriller\n30::Unrated (1990)::Drama\n",
        )
        .unwrap();
        fs::write(dir.path().join("users.dat"), "1::F::1::10::48067\n2::M::25::16::70072\n").unwrap();
        let ds = load_ml1m(dir.path()).unwrap();
        assert_eq!((ds.num_users(), ds.num_items(), ds.len()), (2, 2, 2));
        assert_eq!(ds.user(1).age, 25);
        assert_eq!(ds.user(0).gender, Gender::F);
        let g = &ds.catalog().genres;
        assert!(ds.item(0).genre_flags[g.index_of("Children's").unwrap()]);
        assert_eq!(Flavor::detect(dir.path()).unwrap(), Flavor::Ml1m);

        fs::write(dir.path().join("ratings.dat"), "1::99::5::978300760\n").unwrap();
        assert!(matches!(load_ml1m(dir.path()), Err(DataError::UnknownItem { item_id: 99, .. })));
    }

    #[test]
    fn split_is_exact_and_disjoint() {
        let ds = toy();
        let split = random_split(&ds, 0.5, 3).unwrap();
        assert_eq!(split.train.len(), 3);
        assert_eq!(split.test.len(), 3);
        let mut all: Vec<_> = split
            .train
            .ratings()
            .iter()
            .chain(split.test.ratings())
            .map(|r| (r.user, r.item))
            .collect();
        all.sort_unstable();
        let mut orig: Vec<_> = ds.ratings().iter().map(|r| (r.user, r.item)).collect();
        orig.sort_unstable();
        assert_eq!(all, orig);
        for u in 0..3 {
            for &i in split.train.rated_items(u) {
                assert!(split.train.ratings().iter().any(|r| r.user == u && r.item == i));
            }
        }
    }

    #[test]
    fn split_rejects_bad_ratio() {
        let ds = toy();
        for r in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(random_split(&ds, r, 1).is_err());
        }
    }

    #[test]
    fn dense_round_trip() {
        let ds = toy();
        let idx = &ds.catalog().user_index;
        for &ext in idx.externals() {
            assert_eq!(idx.external(idx.dense(ext).unwrap()), ext);
        }
    }
}
