//! C ABI over the `uisvd` library.
//!
//! Datasets and models are opaque heap handles owned by the caller and
//! released with the matching `*_free` function. Every fallible call returns
//! a [`UisvdStatus`]; on failure, [`uisvd_last_error_message`] describes the
//! most recent error on the calling thread. Ids passed to prediction calls
//! are the external MovieLens ids.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use uisvd::dataio::{self, DataError, Dataset, Flavor};
use uisvd::eval;
use uisvd::features::{AgeEncoding, AttrNorm};
use uisvd::model::{self, Fallback, HyperParams, ItemQuery, Model, ModelError, UserQuery, Variant};
use uisvd::train::{self, TrainError};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UisvdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Data = 4,
    Diverged = 5,
    UnknownId = 6,
    Format = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UisvdFlavor {
    /// Detect from the files present.
    Auto = 0,
    Ml100k = 1,
    Ml1m = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UisvdVariant {
    BiasSvd = 0,
    Mf = 1,
    SvdPp = 2,
    USvdPp = 3,
    ISvdPp = 4,
    UISvdPp = 5,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UisvdAgeEncoding {
    OneHot = 0,
    Cumulative = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UisvdAttrNorm {
    Active = 0,
    Global = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UisvdFallback {
    None = 0,
    ColdUser = 1,
    ColdItem = 2,
    ColdBoth = 3,
    GlobalMean = 4,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UisvdHyperParams {
    pub k: u32,
    pub gamma: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub epochs: u32,
    pub seed: u64,
    pub variant: UisvdVariant,
    pub age_encoding: UisvdAgeEncoding,
    pub attr_norm: UisvdAttrNorm,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UisvdPrediction {
    pub value: f64,
    /// `value` clipped to [1, 5].
    pub clamped_value: f64,
    pub fallback: UisvdFallback,
}

/// A prediction request where either side may be unseen. Known ids take
/// precedence; otherwise `age` (0 = none) and `genres` (indices into the
/// model's genre vocabulary) describe the unseen side.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct UisvdColdQuery {
    pub has_user: bool,
    pub user_id: u32,
    pub age: u32,
    pub has_item: bool,
    pub item_id: u32,
    pub genres: *const u32,
    pub num_genres: usize,
}

pub struct UisvdDataset(Dataset);

pub struct UisvdModel(Model);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl ToString) {
    let msg = CString::new(msg.to_string().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

struct Failure(UisvdStatus, String);

impl Failure {
    fn null(what: &str) -> Self {
        Failure(UisvdStatus::NullPointer, format!("{what} is null"))
    }

    fn invalid(msg: impl ToString) -> Self {
        Failure(UisvdStatus::InvalidArgument, msg.to_string())
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        let status = match e {
            DataError::MissingFile(_) | DataError::Io { .. } => UisvdStatus::Io,
            DataError::BadRatio(_) => UisvdStatus::InvalidArgument,
            _ => UisvdStatus::Data,
        };
        Failure(status, e.to_string())
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        let status = match e {
            ModelError::UnknownUser(_) | ModelError::UnknownItem(_) => UisvdStatus::UnknownId,
            ModelError::EmptyTrainingSet => UisvdStatus::Data,
            _ => UisvdStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Diverged { .. } => Failure(UisvdStatus::Diverged, e.to_string()),
            TrainError::Model(m) => m.into(),
        }
    }
}

impl From<model::FormatError> for Failure {
    fn from(e: model::FormatError) -> Self {
        let status = match e {
            model::FormatError::Io(_) => UisvdStatus::Io,
            _ => UisvdStatus::Format,
        };
        Failure(status, e.to_string())
    }
}

impl From<eval::EvalError> for Failure {
    fn from(e: eval::EvalError) -> Self {
        Failure(UisvdStatus::InvalidArgument, e.to_string())
    }
}

/// Run `f`, converting errors and panics into a status plus a stored message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> UisvdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => UisvdStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            UisvdStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::null(what))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::null("path"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| Failure::invalid("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::null("output pointer"));
    }
    out.write(value);
    Ok(())
}

fn variant_from(v: UisvdVariant) -> Variant {
    match v {
        UisvdVariant::BiasSvd => Variant::BiasSvd,
        UisvdVariant::Mf => Variant::Mf,
        UisvdVariant::SvdPp => Variant::SvdPp,
        UisvdVariant::USvdPp => Variant::USvdPp,
        UisvdVariant::ISvdPp => Variant::ISvdPp,
        UisvdVariant::UISvdPp => Variant::UISvdPp,
    }
}

fn variant_to(v: Variant) -> UisvdVariant {
    match v {
        Variant::BiasSvd => UisvdVariant::BiasSvd,
        Variant::Mf => UisvdVariant::Mf,
        Variant::SvdPp => UisvdVariant::SvdPp,
        Variant::USvdPp => UisvdVariant::USvdPp,
        Variant::ISvdPp => UisvdVariant::ISvdPp,
        Variant::UISvdPp => UisvdVariant::UISvdPp,
    }
}

impl From<&UisvdHyperParams> for HyperParams {
    fn from(h: &UisvdHyperParams) -> Self {
        HyperParams {
            k: h.k as usize,
            gamma: h.gamma,
            lambda: h.lambda,
            alpha: h.alpha,
            beta: h.beta,
            epochs: h.epochs as usize,
            seed: h.seed,
            variant: variant_from(h.variant),
            age_encoding: match h.age_encoding {
                UisvdAgeEncoding::OneHot => AgeEncoding::OneHot,
                UisvdAgeEncoding::Cumulative => AgeEncoding::Cumulative,
            },
            attr_norm: match h.attr_norm {
                UisvdAttrNorm::Active => AttrNorm::Active,
                UisvdAttrNorm::Global => AttrNorm::Global,
            },
        }
    }
}

impl From<&HyperParams> for UisvdHyperParams {
    fn from(h: &HyperParams) -> Self {
        UisvdHyperParams {
            k: h.k as u32,
            gamma: h.gamma,
            lambda: h.lambda,
            alpha: h.alpha,
            beta: h.beta,
            epochs: h.epochs as u32,
            seed: h.seed,
            variant: variant_to(h.variant),
            age_encoding: match h.age_encoding {
                AgeEncoding::OneHot => UisvdAgeEncoding::OneHot,
                AgeEncoding::Cumulative => UisvdAgeEncoding::Cumulative,
            },
            attr_norm: match h.attr_norm {
                AttrNorm::Active => UisvdAttrNorm::Active,
                AttrNorm::Global => UisvdAttrNorm::Global,
            },
        }
    }
}

fn prediction(p: model::Prediction) -> UisvdPrediction {
    UisvdPrediction {
        value: p.value,
        clamped_value: p.clamped_value,
        fallback: match p.fallback {
            Fallback::None => UisvdFallback::None,
            Fallback::ColdUser => UisvdFallback::ColdUser,
            Fallback::ColdItem => UisvdFallback::ColdItem,
            Fallback::ColdBoth => UisvdFallback::ColdBoth,
            Fallback::GlobalMean => UisvdFallback::GlobalMean,
        },
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn uisvd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn uisvd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Default hyperparameters for a dataset layout (`Auto` means ml-100k).
#[no_mangle]
pub unsafe extern "C" fn uisvd_hyperparams_default(flavor: UisvdFlavor, out: *mut UisvdHyperParams) -> UisvdStatus {
    guard(|| {
        let f = match flavor {
            UisvdFlavor::Ml1m => Flavor::Ml1m,
            UisvdFlavor::Auto | UisvdFlavor::Ml100k => Flavor::Ml100k,
        };
        write_out(out, UisvdHyperParams::from(&HyperParams::for_flavor(f)))
    })
}

/// Load a MovieLens directory. On success `*out` owns a new dataset.
#[no_mangle]
pub unsafe extern "C" fn uisvd_dataset_load(path: *const c_char, flavor: UisvdFlavor, out: *mut *mut UisvdDataset) -> UisvdStatus {
    guard(|| {
        let dir = path_arg(path)?;
        if out.is_null() {
            return Err(Failure::null("output pointer"));
        }
        let flavor = match flavor {
            UisvdFlavor::Auto => Flavor::detect(&dir)?,
            UisvdFlavor::Ml100k => Flavor::Ml100k,
            UisvdFlavor::Ml1m => Flavor::Ml1m,
        };
        let ds = dataio::load(&dir, flavor)?;
        write_out(out, Box::into_raw(Box::new(UisvdDataset(ds))))
    })
}

#[no_mangle]
pub unsafe extern "C" fn uisvd_dataset_free(ds: *mut UisvdDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Number of indexed users; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn uisvd_dataset_num_users(ds: *const UisvdDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.num_users())
}

/// Number of indexed items; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn uisvd_dataset_num_items(ds: *const UisvdDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.num_items())
}

/// Number of ratings in this view; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn uisvd_dataset_num_ratings(ds: *const UisvdDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.len())
}

/// Seeded random split; both outputs are new datasets owned by the caller.
#[no_mangle]
pub unsafe extern "C" fn uisvd_dataset_split(
    ds: *const UisvdDataset,
    ratio: f64,
    seed: u64,
    out_train: *mut *mut UisvdDataset,
    out_test: *mut *mut UisvdDataset,
) -> UisvdStatus {
    guard(|| {
        let ds = as_ref(ds, "dataset")?;
        if out_train.is_null() || out_test.is_null() {
            return Err(Failure::null("output pointer"));
        }
        let split = dataio::random_split(&ds.0, ratio, seed)?;
        write_out(out_train, Box::into_raw(Box::new(UisvdDataset(split.train))))?;
        write_out(out_test, Box::into_raw(Box::new(UisvdDataset(split.test))))
    })
}

/// Fit a model on `train`. On success `*out` owns a new model.
#[no_mangle]
pub unsafe extern "C" fn uisvd_model_fit(hp: *const UisvdHyperParams, train: *const UisvdDataset, out: *mut *mut UisvdModel) -> UisvdStatus {
    guard(|| {
        let hp = HyperParams::from(as_ref(hp, "hyperparameters")?);
        let train = as_ref(train, "dataset")?;
        if out.is_null() {
            return Err(Failure::null("output pointer"));
        }
        let (model, _) = train::fit(&hp, &train.0, None)?;
        write_out(out, Box::into_raw(Box::new(UisvdModel(model))))
    })
}

#[no_mangle]
pub unsafe extern "C" fn uisvd_model_free(model: *mut UisvdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Hyperparameters the model was trained with.
#[no_mangle]
pub unsafe extern "C" fn uisvd_model_hyperparams(model: *const UisvdModel, out: *mut UisvdHyperParams) -> UisvdStatus {
    guard(|| write_out(out, UisvdHyperParams::from(&as_ref(model, "model")?.0.hp)))
}

#[no_mangle]
pub unsafe extern "C" fn uisvd_model_save(model: *const UisvdModel, path: *const c_char) -> UisvdStatus {
    guard(|| {
        let model = as_ref(model, "model")?;
        model::save_model(&model.0, &path_arg(path)?)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn uisvd_model_load(path: *const c_char, out: *mut *mut UisvdModel) -> UisvdStatus {
    guard(|| {
        let path = path_arg(path)?;
        if out.is_null() {
            return Err(Failure::null("output pointer"));
        }
        let model = model::load_model(&path)?;
        write_out(out, Box::into_raw(Box::new(UisvdModel(model))))
    })
}

/// Prediction for a known user and item.
#[no_mangle]
pub unsafe extern "C" fn uisvd_model_predict(model: *const UisvdModel, user_id: u32, item_id: u32, out: *mut UisvdPrediction) -> UisvdStatus {
    guard(|| {
        let model = as_ref(model, "model")?;
        let p = model.0.predict_ids(user_id, item_id)?;
        write_out(out, prediction(p))
    })
}

/// Prediction where the user, the item, or both may be unseen.
#[no_mangle]
pub unsafe extern "C" fn uisvd_model_predict_cold(model: *const UisvdModel, query: *const UisvdColdQuery, out: *mut UisvdPrediction) -> UisvdStatus {
    guard(|| {
        let m = &as_ref(model, "model")?.0;
        let q = as_ref(query, "query")?;
        let user = if q.has_user {
            UserQuery::Known(m.user_index.dense(q.user_id).ok_or(ModelError::UnknownUser(q.user_id))?)
        } else {
            UserQuery::Cold { age: (q.age > 0).then_some(q.age) }
        };
        let genres: Option<Vec<usize>> = if q.genres.is_null() {
            if q.num_genres > 0 {
                return Err(Failure::null("genres"));
            }
            None
        } else {
            let g = std::slice::from_raw_parts(q.genres, q.num_genres);
            if let Some(bad) = g.iter().find(|&&t| t as usize >= m.genres.len()) {
                return Err(Failure::invalid(format!("genre index {bad} outside the vocabulary of {}", m.genres.len())));
            }
            Some(g.iter().map(|&t| t as usize).collect())
        };
        let item = if q.has_item {
            ItemQuery::Known(m.item_index.dense(q.item_id).ok_or(ModelError::UnknownItem(q.item_id))?)
        } else {
            ItemQuery::Cold { genres: genres.as_deref() }
        };
        write_out(out, prediction(m.cold_start_predict(user, item)?))
    })
}

/// RMSE and MAE of the model on every rating of `test`.
#[no_mangle]
pub unsafe extern "C" fn uisvd_model_evaluate(
    model: *const UisvdModel,
    test: *const UisvdDataset,
    clamp: bool,
    out_rmse: *mut f64,
    out_mae: *mut f64,
) -> UisvdStatus {
    guard(|| {
        let m = &as_ref(model, "model")?.0;
        let test = &as_ref(test, "dataset")?.0;
        let mut pairs = Vec::with_capacity(test.len());
        for rec in test.records() {
            let p = m.predict_ids(rec.user_id, rec.item_id)?;
            pairs.push((rec.rating as f64, if clamp { p.clamped_value } else { p.value }));
        }
        write_out(out_rmse, eval::rmse(&pairs)?)?;
        write_out(out_mae, eval::mae(&pairs)?)
    })
}
