//! Stochastic gradient descent over observed ratings.
//!
//! Each rating takes one step along the negative gradient of its own
//! regularized squared error
//!
//! ```text
//! L(u,i) = e^2 + lambda * (b_u^2 + b_i^2 + |p_u|^2 + |q_i|^2
//!          + sum_{a in F_a(u)} |y_a|^2 + sum_{j in N(u)} |y_j|^2 + sum_{t in F_t(i)} |y_t|^2)
//! ```
//!
//! scaled by `gamma / 2`, i.e. `theta += gamma * (e * dr/dtheta - lambda * theta)`.
//! Every composite on the right-hand side is read once before any write.
//! Parameter families a variant does not use are never touched and are not
//! part of its loss.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataio::Dataset;
use crate::eval::rmse_of;
use crate::model::{init_params, Composite, HyperParams, Model, ModelContext, ModelError, ModelParams, Scorer};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged in epoch {epoch} (gamma = {gamma}, lambda = {lambda}); try a smaller learning rate")]
    Diverged { epoch: usize, gamma: f64, lambda: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Progress of a fit. History vectors have one entry per completed epoch.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub epoch: usize,
    pub train_loss_history: Vec<f64>,
    pub train_rmse_history: Vec<f64>,
    pub valid_rmse_history: Vec<f64>,
    order: Vec<u32>,
    rng: ChaCha8Rng,
}

impl TrainState {
    pub fn new(hp: &HyperParams, train: &Dataset) -> Self {
        // Stream 0 of this seed initializes parameters; shuffling uses stream 1.
        let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
        rng.set_stream(1);
        TrainState {
            epoch: 0,
            train_loss_history: Vec::new(),
            train_rmse_history: Vec::new(),
            valid_rmse_history: Vec::new(),
            order: (0..train.len() as u32).collect(),
            rng,
        }
    }
}

/// One line of the per-epoch training log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_rmse: f64,
    pub valid_rmse: Option<f64>,
    pub seconds: f64,
}

impl EpochRecord {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,train_rmse,valid_rmse,seconds";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.3}",
            self.epoch,
            self.train_loss,
            self.train_rmse,
            self.valid_rmse.map(|v| v.to_string()).unwrap_or_default(),
            self.seconds
        )
    }
}

/// Total regularized loss over `train`: each rating contributes its squared
/// error plus `lambda` times the squared norms of the parameters it touches.
pub fn loss(params: &ModelParams, hp: &HyperParams, ctx: &ModelContext, train: &Dataset) -> f64 {
    let scorer = Scorer::new(params, hp, ctx);
    let user_reg: Vec<f64> = (0..params.p.rows()).map(|u| user_reg(params, hp, ctx, u)).collect();
    let item_reg: Vec<f64> = (0..params.q.rows()).map(|i| item_reg(params, hp, ctx, i)).collect();
    let mut sq = 0.0;
    let mut reg = 0.0;
    for r in train.ratings() {
        let e = r.value - scorer.raw(r.user, r.item);
        sq += e * e;
        reg += user_reg[r.user as usize] + item_reg[r.item as usize];
    }
    sq + hp.lambda * reg
}

fn sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn user_reg(params: &ModelParams, hp: &HyperParams, ctx: &ModelContext, u: usize) -> f64 {
    let mut z = sq(params.p.row(u));
    if hp.variant.uses_biases() {
        z += params.b_user[u] * params.b_user[u];
    }
    if hp.age_active() {
        z += ctx.attrs.user_age[u].iter().map(|&a| sq(params.y_age.row(a))).sum::<f64>();
    }
    if hp.implicit_active() {
        z += ctx.implicit[u].iter().map(|&j| sq(params.y_impl.row(j as usize))).sum::<f64>();
    }
    z
}

fn item_reg(params: &ModelParams, hp: &HyperParams, ctx: &ModelContext, i: usize) -> f64 {
    let mut z = sq(params.q.row(i));
    if hp.variant.uses_biases() {
        z += params.b_item[i] * params.b_item[i];
    }
    if hp.genre_active() {
        z += ctx.attrs.item_genres[i].iter().map(|&t| sq(params.y_genre.row(t))).sum::<f64>();
    }
    z
}

/// `row += gamma * (coef * dir - lambda * row)`
#[inline]
fn step_row(row: &mut [f64], dir: &[f64], coef: f64, gamma: f64, lambda: f64) {
    for (x, d) in row.iter_mut().zip(dir) {
        *x += gamma * (coef * d - lambda * *x);
    }
}

/// Apply the update for a single observed rating and return its error
/// `r - r_hat` measured before the update.
pub(crate) fn sgd_step(
    params: &mut ModelParams,
    hp: &HyperParams,
    ctx: &ModelContext,
    scratch: &mut Composite,
    u: usize,
    i: usize,
    rating: f64,
) -> f64 {
    scratch.compute_user(params, hp, ctx, u);
    scratch.compute_item(params, hp, ctx, i);
    let e = rating - scratch.rating(params, hp, u, i);
    let (gamma, lambda) = (hp.gamma, hp.lambda);

    if hp.variant.uses_biases() {
        let bu = &mut params.b_user[u];
        *bu += gamma * (e - lambda * *bu);
        let bi = &mut params.b_item[i];
        *bi += gamma * (e - lambda * *bi);
    }
    step_row(params.p.row_mut(u), &scratch.item, e, gamma, lambda);
    step_row(params.q.row_mut(i), &scratch.user, e, gamma, lambda);
    if hp.age_active() {
        let coef = e * hp.age_weight() * scratch.age_scale;
        for &a in &ctx.attrs.user_age[u] {
            step_row(params.y_age.row_mut(a), &scratch.item, coef, gamma, lambda);
        }
    }
    if hp.implicit_active() {
        let coef = e * hp.implicit_weight() * scratch.implicit_scale;
        for &j in &ctx.implicit[u] {
            step_row(params.y_impl.row_mut(j as usize), &scratch.item, coef, gamma, lambda);
        }
    }
    if hp.genre_active() {
        let coef = e * scratch.genre_scale;
        for &t in &ctx.attrs.item_genres[i] {
            step_row(params.y_genre.row_mut(t), &scratch.user, coef, gamma, lambda);
        }
    }
    e
}

/// Apply the update for one rating of dense user `u` on dense item `i`.
/// Returns the error before the update. With `gamma = 1` the change of every
/// parameter equals the update direction `e * dr/dtheta - lambda * theta`.
pub fn sgd_update(params: &mut ModelParams, hp: &HyperParams, ctx: &ModelContext, u: u32, i: u32, rating: f64) -> f64 {
    let mut scratch = Composite::new(params.k());
    sgd_step(params, hp, ctx, &mut scratch, u as usize, i as usize, rating)
}

/// One pass over `train` in a freshly shuffled order.
pub fn sgd_epoch(
    params: &mut ModelParams,
    hp: &HyperParams,
    ctx: &ModelContext,
    train: &Dataset,
    state: &mut TrainState,
) -> Result<(), TrainError> {
    let diverged = |epoch| TrainError::Diverged {
        epoch,
        gamma: hp.gamma,
        lambda: hp.lambda,
    };
    let epoch = state.epoch + 1;
    state.order.shuffle(&mut state.rng);
    let mut scratch = Composite::new(params.k());
    let ratings = train.ratings();
    for &k in &state.order {
        let r = &ratings[k as usize];
        let e = sgd_step(params, hp, ctx, &mut scratch, r.user as usize, r.item as usize, r.value);
        if !e.is_finite() {
            return Err(diverged(epoch));
        }
    }
    if !params.all_finite() {
        return Err(diverged(epoch));
    }
    state.epoch = epoch;
    Ok(())
}

pub fn fit(hp: &HyperParams, train: &Dataset, valid: Option<&Dataset>) -> Result<(Model, TrainState), TrainError> {
    fit_with(hp, train, valid, |_| {})
}

/// [`fit`] with a callback invoked after every epoch.
pub fn fit_with(
    hp: &HyperParams,
    train: &Dataset,
    valid: Option<&Dataset>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(Model, TrainState), TrainError> {
    hp.validate()?;
    let mut params = init_params(hp, train)?;
    let ctx = ModelContext::from_train(train, hp.age_encoding)?;
    let mut state = TrainState::new(hp, train);
    let started = Instant::now();

    while state.epoch < hp.epochs {
        sgd_epoch(&mut params, hp, &ctx, train, &mut state)?;

        let scorer = Scorer::new(&params, hp, &ctx);
        let score = |ds: &Dataset| rmse_of(ds.ratings().iter().map(|r| (r.value, scorer.raw(r.user, r.item))));
        let train_rmse = score(train);
        let valid_rmse = valid.map(score);
        let train_loss = loss(&params, hp, &ctx, train);
        if !train_loss.is_finite() {
            return Err(TrainError::Diverged {
                epoch: state.epoch,
                gamma: hp.gamma,
                lambda: hp.lambda,
            });
        }
        state.train_loss_history.push(train_loss);
        state.train_rmse_history.push(train_rmse);
        if let Some(v) = valid_rmse {
            state.valid_rmse_history.push(v);
        }
        on_epoch(&EpochRecord {
            epoch: state.epoch,
            train_loss,
            train_rmse,
            valid_rmse,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok((Model::new(hp.clone(), params, train)?, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::toy_dataset;
    use crate::model::{predict_raw, Variant};

    fn hp(variant: Variant) -> HyperParams {
        HyperParams {
            k: 3,
            epochs: 5,
            variant,
            ..HyperParams::default()
        }
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let ds = toy_dataset();
        let h = HyperParams { gamma: 0.0, ..hp(Variant::UISvdPp) };
        let mut params = init_params(&h, &ds).unwrap();
        let before = params.clone();
        let ctx = ModelContext::from_train(&ds, h.age_encoding).unwrap();
        let mut state = TrainState::new(&h, &ds);
        sgd_epoch(&mut params, &h, &ctx, &ds, &mut state).unwrap();
        assert_eq!(params, before);
        assert_eq!(state.epoch, 1);
    }

    #[test]
    fn exact_rating_at_zero_params_is_fixed_point() {
        let ds = toy_dataset();
        let h = hp(Variant::UISvdPp);
        let mut params = init_params(&h, &ds).unwrap();
        for f in [&mut params.p, &mut params.q, &mut params.y_impl, &mut params.y_age, &mut params.y_genre] {
            f.fill(0.0);
        }
        let ctx = ModelContext::from_train(&ds, h.age_encoding).unwrap();
        let before = params.clone();
        let mut scratch = Composite::new(3);
        let mu = params.mu;
        let e = sgd_step(&mut params, &h, &ctx, &mut scratch, 0, 0, mu);
        assert_eq!(e, 0.0);
        assert_eq!(params, before);
    }

    #[test]
    fn zero_params_loss_is_sum_of_squares() {
        let ds = toy_dataset();
        let h = HyperParams { lambda: 3.0, ..hp(Variant::UISvdPp) };
        let mut params = init_params(&h, &ds).unwrap();
        params.mu = 0.0;
        for f in [&mut params.p, &mut params.q, &mut params.y_impl, &mut params.y_age, &mut params.y_genre] {
            f.fill(0.0);
        }
        let ctx = ModelContext::from_train(&ds, h.age_encoding).unwrap();
        let expected: f64 = ds.ratings().iter().map(|r| r.value * r.value).sum();
        assert_eq!(loss(&params, &h, &ctx, &ds), expected);
    }

    /// Two ratings, k = 1, hand-evaluated loss.
    #[test]
    fn two_rating_loss_by_hand() {
        let ds = toy_dataset();
        let h = HyperParams {
            k: 1,
            lambda: 0.5,
            variant: Variant::BiasSvd,
            ..HyperParams::default()
        };
        let mut params = init_params(&h, &ds).unwrap();
        params.mu = 3.0;
        params.b_user = vec![0.5, -0.5, 0.0];
        params.b_item = vec![0.25, 0.0, -0.25];
        params.p = crate::model::Factors::from_vec(3, 1, vec![1.0, 2.0, 0.0]);
        params.q = crate::model::Factors::from_vec(3, 1, vec![0.5, -1.0, 2.0]);
        let ctx = ModelContext::from_train(&ds, h.age_encoding).unwrap();
        let sub = Dataset::new(ds.catalog().clone(), ds.ratings()[..2].to_vec());
        // (u0,i0,r5): pred 3+0.5+0.25+1*0.5 = 4.25, e = 0.75, Z = 0.25+0.0625+1+0.25
        // (u0,i1,r3): pred 3+0.5+0+1*-1 = 2.5, e = 0.5, Z = 0.25+0+1+1
        let expected = 0.75f64.powi(2) + 0.5f64.powi(2) + 0.5 * ((0.25 + 0.0625 + 1.0 + 0.25) + (0.25 + 1.0 + 1.0));
        assert!((loss(&params, &h, &ctx, &sub) - expected).abs() < 1e-12);
        assert!((predict_raw(&params, &h, &ctx, 0, 0) - 4.25).abs() < 1e-12);
    }

    #[test]
    fn fit_records_history_and_is_deterministic() {
        let ds = toy_dataset();
        let h = hp(Variant::UISvdPp);
        let (a, sa) = fit(&h, &ds, Some(&ds)).unwrap();
        let (b, _) = fit(&h, &ds, None).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(sa.epoch, 5);
        assert_eq!(sa.train_loss_history.len(), 5);
        assert_eq!(sa.train_rmse_history.len(), 5);
        assert_eq!(sa.valid_rmse_history, sa.train_rmse_history);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let ds = toy_dataset();
        let h = HyperParams { epochs: 0, ..hp(Variant::SvdPp) };
        let (m, s) = fit(&h, &ds, None).unwrap();
        assert_eq!(m.params, init_params(&h, &ds).unwrap());
        assert!(s.train_loss_history.is_empty());
    }

    #[test]
    fn unused_blocks_stay_at_initialization() {
        let ds = toy_dataset();
        for (variant, impl_fixed, age_fixed, genre_fixed) in [
            (Variant::BiasSvd, true, true, true),
            (Variant::Mf, true, true, true),
            (Variant::SvdPp, false, true, true),
            (Variant::USvdPp, false, false, true),
            (Variant::ISvdPp, false, true, false),
        ] {
            let h = hp(variant);
            let init = init_params(&h, &ds).unwrap();
            let (m, _) = fit(&h, &ds, None).unwrap();
            assert_eq!(m.params.y_impl == init.y_impl, impl_fixed, "{variant}");
            assert_eq!(m.params.y_age == init.y_age, age_fixed, "{variant}");
            assert_eq!(m.params.y_genre == init.y_genre, genre_fixed, "{variant}");
            if variant == Variant::Mf {
                assert!(m.params.b_user.iter().all(|&b| b == 0.0));
            }
        }
    }

    #[test]
    fn divergence_is_reported() {
        let ds = toy_dataset();
        let h = HyperParams { gamma: 1e6, ..hp(Variant::UISvdPp) };
        match fit(&h, &ds, None) {
            Err(TrainError::Diverged { gamma, .. }) => assert_eq!(gamma, 1e6),
            other => panic!("expected divergence, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn strong_regularization_shrinks_norms() {
        // With every rating equal to its prediction's error-free target the
        // update is pure shrinkage; large lambda must shrink every block.
        let ds = toy_dataset();
        let h = HyperParams { lambda: 10.0, gamma: 0.01, ..hp(Variant::UISvdPp) };
        let mut params = init_params(&h, &ds).unwrap();
        let ctx = ModelContext::from_train(&ds, h.age_encoding).unwrap();
        let mut scratch = Composite::new(3);
        let norms = |p: &ModelParams| [p.p.sq_norm(), p.q.sq_norm(), p.y_impl.sq_norm(), p.y_age.sq_norm()];
        let mut last = norms(&params);
        for _ in 0..5 {
            for r in ds.ratings() {
                scratch.compute_user(&params, &h, &ctx, r.user as usize);
                scratch.compute_item(&params, &h, &ctx, r.item as usize);
                let target = scratch.rating(&params, &h, r.user as usize, r.item as usize);
                sgd_step(&mut params, &h, &ctx, &mut scratch, r.user as usize, r.item as usize, target);
            }
            let now = norms(&params);
            for (a, b) in now.iter().zip(&last) {
                assert!(a < b, "{now:?} vs {last:?}");
            }
            last = now;
        }
    }
}
