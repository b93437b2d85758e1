//! Learnable state and rating prediction for every model variant.
//!
//! All variants share one parameter layout; the [`Variant`] decides which
//! terms take part in the prediction
//!
//! ```text
//! r(u,i) = mu + b_u + b_i + <p_u + alpha * p_a + beta * p_j, q_i + q_t>
//! ```
//!
//! where `p_a` averages the age-attribute rows of the user, `p_j` is the
//! `|N(u)|^-1/2`-scaled sum of implicit-feedback rows over the items the user
//! rated in training, and `q_t` averages the genre-attribute rows of the item.

mod file;

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{Dataset, Flavor, IdIndex};
use crate::features::{
    active_age_attributes, AgeEncoding, AttrNorm, AttributeTable, FeatureError, GenreVocabulary, AGE_BUCKETS,
};

pub use file::{load_model, save_model, write_model, read_model, FormatError, FORMAT_VERSION, MAGIC};

/// Standard deviation of the Gaussian used for every latent block.
pub const INIT_STDDEV: f64 = 0.1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperParams(String),
    #[error("user {0} is not known to the model")]
    UnknownUser(u32),
    #[error("item {0} is not known to the model")]
    UnknownItem(u32),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// `mu + b_u + b_i + <p_u, q_i>`
    BiasSvd,
    /// Unbiased L2-regularized MF, `<p_u, q_i>` (the PMF MAP estimate).
    Mf,
    /// Adds the implicit-feedback term.
    SvdPp,
    /// SVD++ plus the user age attributes.
    USvdPp,
    /// SVD++ plus the item genre attributes.
    ISvdPp,
    /// SVD++ plus both attribute sides.
    #[default]
    UISvdPp,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::BiasSvd,
        Variant::Mf,
        Variant::SvdPp,
        Variant::USvdPp,
        Variant::ISvdPp,
        Variant::UISvdPp,
    ];

    pub const ABLATION: [Variant; 4] = [Variant::SvdPp, Variant::USvdPp, Variant::ISvdPp, Variant::UISvdPp];

    pub fn name(self) -> &'static str {
        match self {
            Variant::BiasSvd => "biassvd",
            Variant::Mf => "mf",
            Variant::SvdPp => "svdpp",
            Variant::USvdPp => "usvdpp",
            Variant::ISvdPp => "isvdpp",
            Variant::UISvdPp => "uisvdpp",
        }
    }

    /// Display name used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            Variant::BiasSvd => "Bias_SVD",
            Variant::Mf => "PMF (MAP)",
            Variant::SvdPp => "SVD++",
            Variant::USvdPp => "USVD++",
            Variant::ISvdPp => "ISVD++",
            Variant::UISvdPp => "UISVD++",
        }
    }

    pub fn code(self) -> u8 {
        Variant::ALL.iter().position(|&v| v == self).unwrap() as u8
    }

    pub fn from_code(code: u8) -> Option<Variant> {
        Variant::ALL.get(code as usize).copied()
    }

    pub fn uses_mean(self) -> bool {
        self != Variant::Mf
    }

    pub fn uses_biases(self) -> bool {
        self != Variant::Mf
    }

    pub fn uses_implicit(self) -> bool {
        !matches!(self, Variant::BiasSvd | Variant::Mf)
    }

    pub fn uses_age(self) -> bool {
        matches!(self, Variant::USvdPp | Variant::UISvdPp)
    }

    pub fn uses_genre(self) -> bool {
        matches!(self, Variant::ISvdPp | Variant::UISvdPp)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .to_ascii_lowercase()
            .replace("++", "pp")
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        match key.as_str() {
            "biassvd" => Ok(Variant::BiasSvd),
            "mf" | "pmf" | "pmfmap" => Ok(Variant::Mf),
            "svdpp" => Ok(Variant::SvdPp),
            "usvdpp" => Ok(Variant::USvdPp),
            "isvdpp" => Ok(Variant::ISvdPp),
            "uisvdpp" => Ok(Variant::UISvdPp),
            _ => Err(format!(
                "unknown variant `{s}` (biassvd|mf|svdpp|usvdpp|isvdpp|uisvdpp)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub k: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub epochs: usize,
    pub seed: u64,
    pub variant: Variant,
    pub age_encoding: AgeEncoding,
    pub attr_norm: AttrNorm,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams::for_flavor(Flavor::Ml100k)
    }
}

impl HyperParams {
    /// Defaults: k=25 / 55 epochs on ml-100k, k=20 / 50 epochs on ml-1m.
    pub fn for_flavor(flavor: Flavor) -> Self {
        let (k, epochs) = match flavor {
            Flavor::Ml100k => (25, 55),
            Flavor::Ml1m => (20, 50),
        };
        HyperParams {
            k,
            gamma: 0.01,
            lambda: 0.1,
            alpha: 0.5,
            beta: 0.5,
            epochs,
            seed: 42,
            variant: Variant::UISvdPp,
            age_encoding: AgeEncoding::OneHot,
            attr_norm: AttrNorm::Active,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidHyperParams(msg));
        if self.k == 0 {
            return bad("k must be >= 1".into());
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be > 0, got {}", self.gamma));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0,1], got {}", self.alpha));
        }
        if (self.alpha + self.beta - 1.0).abs() > 1e-9 {
            return bad(format!("alpha + beta must equal 1, got {} + {}", self.alpha, self.beta));
        }
        Ok(())
    }

    /// Weight of `p_a` in the user composite, zero if the variant ignores age.
    pub fn age_weight(&self) -> f64 {
        if self.variant.uses_age() {
            self.alpha
        } else {
            0.0
        }
    }

    /// Weight of `p_j` in the user composite, zero if the variant has no
    /// implicit-feedback term.
    pub fn implicit_weight(&self) -> f64 {
        if self.variant.uses_implicit() {
            self.beta
        } else {
            0.0
        }
    }

    pub(crate) fn age_active(&self) -> bool {
        self.age_weight() != 0.0
    }

    pub(crate) fn implicit_active(&self) -> bool {
        self.implicit_weight() != 0.0
    }

    pub(crate) fn genre_active(&self) -> bool {
        self.variant.uses_genre()
    }
}

/// Dense row-major `rows x k` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Factors {
    rows: usize,
    k: usize,
    data: Vec<f64>,
}

impl Factors {
    pub fn zeros(rows: usize, k: usize) -> Self {
        Factors {
            rows,
            k,
            data: vec![0.0; rows * k],
        }
    }

    pub fn from_vec(rows: usize, k: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * k, "factor data does not match {rows}x{k}");
        Factors { rows, k, data }
    }

    fn gaussian(rows: usize, k: usize, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, INIT_STDDEV).expect("valid normal");
        Factors {
            rows,
            k,
            data: (0..rows * k).map(|_| normal.sample(rng)).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.k..(r + 1) * self.k]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.k..(r + 1) * self.k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub mu: f64,
    pub b_user: Vec<f64>,
    pub b_item: Vec<f64>,
    pub p: Factors,
    pub q: Factors,
    pub y_impl: Factors,
    pub y_age: Factors,
    pub y_genre: Factors,
}

impl ModelParams {
    pub fn k(&self) -> usize {
        self.p.k()
    }

    pub fn all_finite(&self) -> bool {
        let blocks: [&[f64]; 7] = [
            &self.b_user,
            &self.b_item,
            self.p.as_slice(),
            self.q.as_slice(),
            self.y_impl.as_slice(),
            self.y_age.as_slice(),
            self.y_genre.as_slice(),
        ];
        self.mu.is_finite() && blocks.iter().all(|b| b.iter().all(|x| x.is_finite()))
    }
}

/// Zero biases, `mu` = training mean, every latent block drawn from
/// `N(0, 0.1^2)` in the order P, Q, Y_impl, Y_age, Y_genre.
pub fn init_params(hp: &HyperParams, train: &Dataset) -> Result<ModelParams, ModelError> {
    let mu = train.mean_rating().ok_or(ModelError::EmptyTrainingSet)?;
    let (m, n, k) = (train.num_users(), train.num_items(), hp.k);
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let p = Factors::gaussian(m, k, &mut rng);
    let q = Factors::gaussian(n, k, &mut rng);
    let y_impl = Factors::gaussian(n, k, &mut rng);
    let y_age = Factors::gaussian(AGE_BUCKETS, k, &mut rng);
    let y_genre = Factors::gaussian(train.catalog().genres.len(), k, &mut rng);
    Ok(ModelParams {
        mu,
        b_user: vec![0.0; m],
        b_item: vec![0.0; n],
        p,
        q,
        y_impl,
        y_age,
        y_genre,
    })
}

/// Non-learnable data a prediction needs: attribute sets and the training
/// implicit-feedback sets `N(u)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelContext {
    pub attrs: AttributeTable,
    pub implicit: Vec<Vec<u32>>,
}

impl ModelContext {
    pub fn from_train(train: &Dataset, encoding: AgeEncoding) -> Result<Self, ModelError> {
        Ok(ModelContext {
            attrs: AttributeTable::build(train, encoding)?,
            implicit: (0..train.num_users() as u32)
                .map(|u| train.rated_items(u).to_vec())
                .collect(),
        })
    }
}

pub(crate) fn age_scale(hp: &HyperParams, active: usize) -> f64 {
    match hp.attr_norm {
        AttrNorm::Active if active == 0 => 0.0,
        AttrNorm::Active => 1.0 / active as f64,
        AttrNorm::Global => 1.0 / AGE_BUCKETS as f64,
    }
}

pub(crate) fn genre_scale(hp: &HyperParams, active: usize, vocab: usize) -> f64 {
    match hp.attr_norm {
        _ if active == 0 => 0.0,
        AttrNorm::Active => 1.0 / active as f64,
        AttrNorm::Global => 1.0 / vocab as f64,
    }
}

pub(crate) fn implicit_scale(count: usize) -> f64 {
    if count == 0 {
        0.0
    } else {
        1.0 / (count as f64).sqrt()
    }
}

/// `out = scale * sum of rows`.
pub(crate) fn scaled_row_sum<I: IntoIterator<Item = usize>>(m: &Factors, rows: I, scale: f64, out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    for r in rows {
        for (o, v) in out.iter_mut().zip(m.row(r)) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|x| *x *= scale);
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The user-side and item-side composites for one (u, i), plus the pieces
/// that the SGD step reuses.
#[derive(Clone, Debug)]
pub(crate) struct Composite {
    pub pa: Vec<f64>,
    pub pj: Vec<f64>,
    pub qt: Vec<f64>,
    pub user: Vec<f64>,
    pub item: Vec<f64>,
    pub age_scale: f64,
    pub implicit_scale: f64,
    pub genre_scale: f64,
}

impl Composite {
    pub fn new(k: usize) -> Self {
        Composite {
            pa: vec![0.0; k],
            pj: vec![0.0; k],
            qt: vec![0.0; k],
            user: vec![0.0; k],
            item: vec![0.0; k],
            age_scale: 0.0,
            implicit_scale: 0.0,
            genre_scale: 0.0,
        }
    }

    pub fn compute_user(&mut self, params: &ModelParams, hp: &HyperParams, ctx: &ModelContext, u: usize) {
        let (alpha, beta) = (hp.age_weight(), hp.implicit_weight());
        if hp.age_active() {
            let attrs = &ctx.attrs.user_age[u];
            self.age_scale = age_scale(hp, attrs.len());
            scaled_row_sum(&params.y_age, attrs.iter().copied(), self.age_scale, &mut self.pa);
        }
        if hp.implicit_active() {
            let rated = &ctx.implicit[u];
            self.implicit_scale = implicit_scale(rated.len());
            scaled_row_sum(&params.y_impl, rated.iter().map(|&j| j as usize), self.implicit_scale, &mut self.pj);
        }
        let pu = params.p.row(u);
        for f in 0..self.user.len() {
            let mut v = pu[f];
            if alpha != 0.0 {
                v += alpha * self.pa[f];
            }
            if beta != 0.0 {
                v += beta * self.pj[f];
            }
            self.user[f] = v;
        }
    }

    pub fn compute_item(&mut self, params: &ModelParams, hp: &HyperParams, ctx: &ModelContext, i: usize) {
        let qi = params.q.row(i);
        if hp.genre_active() {
            let genres = &ctx.attrs.item_genres[i];
            self.genre_scale = genre_scale(hp, genres.len(), ctx.attrs.num_genres);
            scaled_row_sum(&params.y_genre, genres.iter().copied(), self.genre_scale, &mut self.qt);
            for ((o, q), t) in self.item.iter_mut().zip(qi).zip(&self.qt) {
                *o = q + t;
            }
        } else {
            self.item.copy_from_slice(qi);
        }
    }

    pub fn rating(&self, params: &ModelParams, hp: &HyperParams, u: usize, i: usize) -> f64 {
        let mut r = dot(&self.user, &self.item);
        if hp.variant.uses_biases() {
            r += params.b_user[u] + params.b_item[i];
        }
        if hp.variant.uses_mean() {
            r += params.mu;
        }
        r
    }
}

/// `p_u + alpha p_a + beta p_j` for dense user `u` (terms per variant).
pub fn compose_user_vector(params: &ModelParams, hp: &HyperParams, ctx: &ModelContext, u: u32) -> Vec<f64> {
    let mut c = Composite::new(params.k());
    c.compute_user(params, hp, ctx, u as usize);
    c.user
}

/// `q_i + q_t` for dense item `i` (genre term per variant).
pub fn compose_item_vector(params: &ModelParams, hp: &HyperParams, ctx: &ModelContext, i: u32) -> Vec<f64> {
    let mut c = Composite::new(params.k());
    c.compute_item(params, hp, ctx, i as usize);
    c.item
}

/// Raw predicted rating for dense indices.
pub fn predict_raw(params: &ModelParams, hp: &HyperParams, ctx: &ModelContext, u: u32, i: u32) -> f64 {
    let mut c = Composite::new(params.k());
    c.compute_user(params, hp, ctx, u as usize);
    c.compute_item(params, hp, ctx, i as usize);
    c.rating(params, hp, u as usize, i as usize)
}

/// Predicts many pairs against frozen parameters, composing each user and
/// item vector once. Values are bit-identical to [`predict_raw`].
pub struct Scorer<'a> {
    params: &'a ModelParams,
    hp: &'a HyperParams,
    users: Factors,
    items: Factors,
}

impl<'a> Scorer<'a> {
    pub fn new(params: &'a ModelParams, hp: &'a HyperParams, ctx: &ModelContext) -> Self {
        let k = params.k();
        let mut c = Composite::new(k);
        let mut users = Factors::zeros(params.p.rows(), k);
        for u in 0..users.rows() {
            c.compute_user(params, hp, ctx, u);
            users.row_mut(u).copy_from_slice(&c.user);
        }
        let mut items = Factors::zeros(params.q.rows(), k);
        for i in 0..items.rows() {
            c.compute_item(params, hp, ctx, i);
            items.row_mut(i).copy_from_slice(&c.item);
        }
        Scorer { params, hp, users, items }
    }

    pub fn raw(&self, u: u32, i: u32) -> f64 {
        let (u, i) = (u as usize, i as usize);
        let mut r = dot(self.users.row(u), self.items.row(i));
        if self.hp.variant.uses_biases() {
            r += self.params.b_user[u] + self.params.b_item[i];
        }
        if self.hp.variant.uses_mean() {
            r += self.params.mu;
        }
        r
    }
}

/// Which parts of a prediction had to be substituted for an unseen entity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fallback {
    None,
    ColdUser,
    ColdItem,
    ColdBoth,
    /// Nothing about either side was known; the value is the global mean.
    GlobalMean,
}

impl Fallback {
    pub fn name(self) -> &'static str {
        match self {
            Fallback::None => "none",
            Fallback::ColdUser => "cold-user",
            Fallback::ColdItem => "cold-item",
            Fallback::ColdBoth => "cold-both",
            Fallback::GlobalMean => "global-mean-fallback",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub value: f64,
    pub clamped_value: f64,
    pub fallback: Fallback,
}

impl Prediction {
    pub fn new(value: f64, fallback: Fallback) -> Self {
        Prediction {
            value,
            clamped_value: value.clamp(1.0, 5.0),
            fallback,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UserQuery {
    Known(u32),
    Cold { age: Option<u32> },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ItemQuery<'a> {
    Known(u32),
    /// Genre attribute indices into the model's vocabulary.
    Cold { genres: Option<&'a [usize]> },
}

/// A fitted model with everything needed to predict and to be persisted.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub dataset: String,
    pub hp: HyperParams,
    pub params: ModelParams,
    pub ctx: ModelContext,
    pub genres: GenreVocabulary,
    pub user_index: IdIndex,
    pub item_index: IdIndex,
    /// Raw ages of the training users, by dense index.
    pub user_ages: Vec<u32>,
}

impl Model {
    pub fn new(hp: HyperParams, params: ModelParams, train: &Dataset) -> Result<Self, ModelError> {
        let cat = train.catalog();
        Ok(Model {
            dataset: cat.name.clone(),
            ctx: ModelContext::from_train(train, hp.age_encoding)?,
            hp,
            params,
            genres: cat.genres.clone(),
            user_index: cat.user_index.clone(),
            item_index: cat.item_index.clone(),
            user_ages: cat.users.iter().map(|u| u.age).collect(),
        })
    }

    pub fn user_vector(&self, u: u32) -> Vec<f64> {
        compose_user_vector(&self.params, &self.hp, &self.ctx, u)
    }

    pub fn item_vector(&self, i: u32) -> Vec<f64> {
        compose_item_vector(&self.params, &self.hp, &self.ctx, i)
    }

    /// Prediction for dense indices.
    pub fn predict(&self, u: u32, i: u32) -> Prediction {
        Prediction::new(predict_raw(&self.params, &self.hp, &self.ctx, u, i), Fallback::None)
    }

    /// Prediction for external ids; both must be known.
    pub fn scorer(&self) -> Scorer<'_> {
        Scorer::new(&self.params, &self.hp, &self.ctx)
    }

    pub fn predict_ids(&self, user_id: u32, item_id: u32) -> Result<Prediction, ModelError> {
        let u = self.user_index.dense(user_id).ok_or(ModelError::UnknownUser(user_id))?;
        let i = self.item_index.dense(item_id).ok_or(ModelError::UnknownItem(item_id))?;
        Ok(self.predict(u, i))
    }

    /// Prediction where either side may be unseen. An unseen user keeps only
    /// `alpha * p_a` from the supplied age; an unseen item keeps only `q_t`
    /// from the supplied genres; their biases are zero.
    pub fn cold_start_predict(&self, user: UserQuery, item: ItemQuery<'_>) -> Result<Prediction, ModelError> {
        let k = self.params.k();
        let hp = &self.hp;
        let mut value = if hp.variant.uses_mean() { self.params.mu } else { 0.0 };

        let user_vec = match user {
            UserQuery::Known(u) => {
                if u as usize >= self.user_index.len() {
                    return Err(ModelError::UnknownUser(u));
                }
                if hp.variant.uses_biases() {
                    value += self.params.b_user[u as usize];
                }
                self.user_vector(u)
            }
            UserQuery::Cold { age } => {
                let mut v = vec![0.0; k];
                if let (Some(age), true) = (age, hp.age_active()) {
                    let attrs = active_age_attributes(age, hp.age_encoding)?;
                    let scale = age_scale(hp, attrs.len()) * hp.age_weight();
                    scaled_row_sum(&self.params.y_age, attrs, scale, &mut v);
                }
                v
            }
        };
        let item_vec = match item {
            ItemQuery::Known(i) => {
                if i as usize >= self.item_index.len() {
                    return Err(ModelError::UnknownItem(i));
                }
                if hp.variant.uses_biases() {
                    value += self.params.b_item[i as usize];
                }
                self.item_vector(i)
            }
            ItemQuery::Cold { genres } => {
                let mut v = vec![0.0; k];
                if let (Some(genres), true) = (genres, hp.genre_active()) {
                    let scale = genre_scale(hp, genres.len(), self.genres.len());
                    scaled_row_sum(&self.params.y_genre, genres.iter().copied(), scale, &mut v);
                }
                v
            }
        };

        let fallback = match (user, item) {
            (UserQuery::Known(_), ItemQuery::Known(_)) => Fallback::None,
            (UserQuery::Cold { age: None }, ItemQuery::Cold { genres: None }) => {
                return Ok(Prediction::new(self.params.mu, Fallback::GlobalMean));
            }
            (UserQuery::Cold { .. }, ItemQuery::Known(_)) => Fallback::ColdUser,
            (UserQuery::Known(_), ItemQuery::Cold { .. }) => Fallback::ColdItem,
            (UserQuery::Cold { .. }, ItemQuery::Cold { .. }) => Fallback::ColdBoth,
        };
        Ok(Prediction::new(value + dot(&user_vec, &item_vec), fallback))
    }
}
