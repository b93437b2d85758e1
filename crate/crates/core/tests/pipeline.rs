mod common;

use uisvd::dataio::{load_ml100k, random_split};
use uisvd::eval::{reports_csv, run_ablation, run_experiment, ExperimentConfig};
use uisvd::model::{load_model, read_model, save_model, write_model, HyperParams, Variant};
use uisvd::train::fit;

fn small_hp(variant: Variant) -> HyperParams {
    HyperParams { k: 4, epochs: 6, variant, ..HyperParams::default() }
}

#[test]
fn saved_models_predict_identically() {
    let dir = tempfile::tempdir().unwrap();
    common::write_ml100k(dir.path());
    let ds = load_ml100k(dir.path()).unwrap();
    let split = random_split(&ds, 0.8, 1).unwrap();
    for variant in Variant::ALL {
        let (model, state) = fit(&small_hp(variant), &split.train, Some(&split.test)).unwrap();
        assert_eq!(state.valid_rmse_history.len(), 6);
        let path = dir.path().join(format!("{}.bin", variant.name()));
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded, model);
        for r in split.test.ratings() {
            assert_eq!(loaded.predict(r.user, r.item).value.to_bits(), model.predict(r.user, r.item).value.to_bits());
        }
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_model(&model, &mut a).unwrap();
        write_model(&read_model(&a).unwrap(), &mut b).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn experiments_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    common::write_ml100k(dir.path());
    let ds = load_ml100k(dir.path()).unwrap();
    let cfg = ExperimentConfig { repeats: 3, ..ExperimentConfig::default() };
    let a = run_experiment(&ds, &small_hp(Variant::UISvdPp), &cfg).unwrap();
    let b = run_experiment(&ds, &small_hp(Variant::UISvdPp), &cfg).unwrap();
    assert_eq!(reports_csv(&[a.clone()]), reports_csv(&[b]));
    assert!(a.per_repeat.iter().all(|r| r.test_size == 72));
    assert!(a.mean_rmse >= a.mean_mae);
}

#[test]
fn ablation_variants_share_test_sets() {
    let dir = tempfile::tempdir().unwrap();
    common::write_ml100k(dir.path());
    let ds = load_ml100k(dir.path()).unwrap();
    let cfg = ExperimentConfig { repeats: 2, ..ExperimentConfig::default() };
    let reports = run_ablation(&ds, &small_hp(Variant::UISvdPp), &cfg).unwrap();
    let variants: Vec<Variant> = reports.iter().map(|r| r.variant).collect();
    assert_eq!(variants, Variant::ABLATION);
    let digests = |i: usize| reports[i].per_repeat.iter().map(|r| r.test_digest).collect::<Vec<_>>();
    for i in 1..4 {
        assert_eq!(digests(i), digests(0));
    }
}
