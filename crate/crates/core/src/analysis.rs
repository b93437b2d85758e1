//! Item popularity, per-age-cohort favourites and user demographics.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{Dataset, Gender};
use crate::eval::align;
use crate::features::{age_to_bucket, FeatureError, AGE_BUCKETS, AGE_BUCKET_LABELS};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("age bucket {0} outside [0, 6]")]
    BadBucket(usize),
    #[error("overlap needs at least two lists, got {0}")]
    TooFewLists(usize),
    #[error("dataset has no ratings")]
    Empty,
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PopularityEntry {
    pub item_id: u32,
    pub title: String,
    /// Share of the grand total of rating values.
    pub grade: f64,
    /// Share of the total rating count.
    pub unums: f64,
    /// `50 * (grade + unums)`, in percent.
    pub popularity: f64,
}

/// Every item ranked by popularity, descending, ties by ascending item id.
pub fn popularity_table(ds: &Dataset) -> Result<Vec<PopularityEntry>, AnalysisError> {
    if ds.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let n = ds.num_items();
    let mut score = vec![0.0f64; n];
    let mut count = vec![0usize; n];
    for r in ds.ratings() {
        score[r.item as usize] += r.value;
        count[r.item as usize] += 1;
    }
    let total_score: f64 = score.iter().sum();
    let total_count = ds.len() as f64;
    let cat = ds.catalog();
    let mut out: Vec<PopularityEntry> = (0..n)
        .map(|i| {
            let grade = score[i] / total_score;
            let unums = count[i] as f64 / total_count;
            PopularityEntry {
                item_id: cat.item_index.external(i as u32),
                title: cat.items[i].title.clone(),
                grade,
                unums,
                popularity: (0.5 * grade + 0.5 * unums) * 100.0,
            }
        })
        .collect();
    out.sort_by(|a, b| b.popularity.total_cmp(&a.popularity).then(a.item_id.cmp(&b.item_id)));
    Ok(out)
}

pub fn popularity_csv(entries: &[PopularityEntry]) -> String {
    let mut out = String::from("rank,item_id,title,grade,unums,popularity\n");
    for (rank, e) in entries.iter().enumerate() {
        let _ = writeln!(out, "{},{},{},{},{},{}", rank + 1, e.item_id, csv_field(&e.title), e.grade, e.unums, e.popularity);
    }
    out
}

pub fn render_popularity(entries: &[PopularityEntry]) -> String {
    let mut rows = vec![vec!["Rank".into(), "MovieID".into(), "Title".into(), "Popularity".into()]];
    for (rank, e) in entries.iter().enumerate() {
        rows.push(vec![(rank + 1).to_string(), e.item_id.to_string(), e.title.clone(), format!("{:.4}%", e.popularity)]);
    }
    align(&rows)
}

/// How items are scored inside a cohort.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CohortRanking {
    /// Number of cohort ratings.
    Count,
    /// Sum of cohort rating values.
    #[default]
    Sum,
    /// Mean cohort rating value.
    Mean,
}

impl CohortRanking {
    pub fn name(self) -> &'static str {
        match self {
            CohortRanking::Count => "count",
            CohortRanking::Sum => "sum",
            CohortRanking::Mean => "mean",
        }
    }
}

impl std::str::FromStr for CohortRanking {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "count" => Ok(CohortRanking::Count),
            "sum" => Ok(CohortRanking::Sum),
            "mean" => Ok(CohortRanking::Mean),
            other => Err(format!("unknown cohort ranking `{other}` (count|sum|mean)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CohortTopList {
    /// Age buckets pooled into this cohort (a single bucket for the usual lists).
    pub buckets: Vec<usize>,
    /// `(external item id, score)`, best first.
    pub ranked_items: Vec<(u32, f64)>,
}

impl CohortTopList {
    pub fn label(&self) -> String {
        self.buckets.iter().map(|&b| AGE_BUCKET_LABELS[b]).collect::<Vec<_>>().join("+")
    }

    pub fn item_ids(&self) -> Vec<u32> {
        self.ranked_items.iter().map(|&(i, _)| i).collect()
    }
}

/// Top `n` items among users in `bucket`.
pub fn cohort_top(ds: &Dataset, bucket: usize, n: usize, exclude: &HashSet<u32>, ranking: CohortRanking) -> Result<CohortTopList, AnalysisError> {
    cohort_top_group(ds, &[bucket], n, exclude, ranking)
}

/// Top `n` items among users whose bucket is any of `buckets`.
pub fn cohort_top_group(
    ds: &Dataset,
    buckets: &[usize],
    n: usize,
    exclude: &HashSet<u32>,
    ranking: CohortRanking,
) -> Result<CohortTopList, AnalysisError> {
    if let Some(&b) = buckets.iter().find(|&&b| b >= AGE_BUCKETS) {
        return Err(AnalysisError::BadBucket(b));
    }
    let cat = ds.catalog();
    let in_cohort = cat
        .users
        .iter()
        .map(|u| Ok(buckets.contains(&age_to_bucket(u.age)?)))
        .collect::<Result<Vec<bool>, FeatureError>>()?;
    let mut sum = vec![0.0f64; ds.num_items()];
    let mut count = vec![0usize; ds.num_items()];
    for r in ds.ratings().iter().filter(|r| in_cohort[r.user as usize]) {
        sum[r.item as usize] += r.value;
        count[r.item as usize] += 1;
    }
    let mut scored: Vec<(u32, f64)> = (0..ds.num_items())
        .filter(|&i| count[i] > 0)
        .map(|i| (cat.item_index.external(i as u32), i))
        .filter(|(id, _)| !exclude.contains(id))
        .map(|(id, i)| {
            let s = match ranking {
                CohortRanking::Count => count[i] as f64,
                CohortRanking::Sum => sum[i],
                CohortRanking::Mean => sum[i] / count[i] as f64,
            };
            (id, s)
        })
        .collect();
    if scored.is_empty() {
        log::warn!("cohort {buckets:?} has no ratings");
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(n);
    Ok(CohortTopList {
        buckets: buckets.to_vec(),
        ranked_items: scored,
    })
}

/// One list per age bucket.
pub fn all_cohorts(ds: &Dataset, n: usize, exclude: &HashSet<u32>, ranking: CohortRanking) -> Result<Vec<CohortTopList>, AnalysisError> {
    (0..AGE_BUCKETS).map(|b| cohort_top(ds, b, n, exclude, ranking)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CohortOverlap {
    /// `pairwise[a][b]` = size of the intersection of lists `a` and `b`.
    pub pairwise: Vec<Vec<usize>>,
    /// Items present in every list, ascending.
    pub common: Vec<u32>,
}

pub fn cohort_overlap(lists: &[CohortTopList]) -> Result<CohortOverlap, AnalysisError> {
    if lists.len() < 2 {
        return Err(AnalysisError::TooFewLists(lists.len()));
    }
    let sets: Vec<BTreeSet<u32>> = lists.iter().map(|l| l.item_ids().into_iter().collect()).collect();
    let pairwise = sets
        .iter()
        .map(|a| sets.iter().map(|b| a.intersection(b).count()).collect())
        .collect();
    let common = sets[0].iter().copied().filter(|id| sets[1..].iter().all(|s| s.contains(id))).collect();
    Ok(CohortOverlap { pairwise, common })
}

pub fn cohorts_csv(lists: &[CohortTopList]) -> String {
    let mut out = String::from("cohort,rank,item_id,score\n");
    for l in lists {
        for (rank, (id, s)) in l.ranked_items.iter().enumerate() {
            let _ = writeln!(out, "{},{},{},{}", csv_field(&l.label()), rank + 1, id, s);
        }
    }
    out
}

pub fn overlap_csv(lists: &[CohortTopList], overlap: &CohortOverlap) -> String {
    let labels: Vec<String> = lists.iter().map(|l| csv_field(&l.label())).collect();
    let mut out = format!("cohort,{}\n", labels.join(","));
    for (label, row) in labels.iter().zip(&overlap.pairwise) {
        let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(out, "{label},{}", cells.join(","));
    }
    out
}

/// Rank-by-cohort grid: one row per rank, one column per cohort.
pub fn render_cohorts(lists: &[CohortTopList]) -> String {
    let mut rows = vec![std::iter::once("Rank".to_string()).chain(lists.iter().map(|l| l.label())).collect::<Vec<_>>()];
    let depth = lists.iter().map(|l| l.ranked_items.len()).max().unwrap_or(0);
    for rank in 0..depth {
        let mut row = vec![(rank + 1).to_string()];
        row.extend(lists.iter().map(|l| l.ranked_items.get(rank).map(|(id, _)| id.to_string()).unwrap_or_default()));
        rows.push(row);
    }
    align(&rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Share {
    pub family: &'static str,
    pub category: String,
    pub users: usize,
    pub share: f64,
}

/// Gender and age-bucket shares over the users of `ds`.
pub fn demographics(ds: &Dataset) -> Result<Vec<Share>, AnalysisError> {
    let users = &ds.catalog().users;
    let total = users.len() as f64;
    let mut out = Vec::new();
    for (g, name) in [(Gender::M, "M"), (Gender::F, "F")] {
        let c = users.iter().filter(|u| u.gender == g).count();
        out.push(Share { family: "gender", category: name.into(), users: c, share: c as f64 / total });
    }
    let mut per_bucket = [0usize; AGE_BUCKETS];
    for u in users {
        per_bucket[age_to_bucket(u.age)?] += 1;
    }
    for (b, &c) in per_bucket.iter().enumerate() {
        out.push(Share { family: "age", category: AGE_BUCKET_LABELS[b].into(), users: c, share: c as f64 / total });
    }
    Ok(out)
}

pub fn demographics_csv(shares: &[Share]) -> String {
    let mut out = String::from("family,category,users,share\n");
    for s in shares {
        let _ = writeln!(out, "{},{},{},{}", s.family, s.category, s.users, s.share);
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
