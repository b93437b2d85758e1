//! Acceptance suite. Prints one `PASS` / `FAIL` line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Datasets are read from `UISVD_ML100K_DIR` and `UISVD_ML1M_DIR`, defaulting
//! to `data/ml-100k` and `data/ml-1m` under the workspace root. Pass criterion
//! numbers as arguments to run a subset, e.g.
//! `cargo test --test acceptance -- 7 8 9`.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use uisvd::analysis::{all_cohorts, popularity_table, CohortRanking};
use uisvd::dataio::{load_ml100k, load_ml1m, random_split, Catalog, Dataset, Gender, IdIndex, ItemProfile, Rating, UserProfile};
use uisvd::eval::{mae, rmse, run_experiment, run_grid, sweep_argmin, EvalReport, ExperimentConfig, SweepPoint};
use uisvd::features::{AgeEncoding, AttrNorm, GenreVocabulary, AGE_BUCKETS};
use uisvd::model::{init_params, predict_raw, Factors, HyperParams, ModelContext, ModelParams, Variant};
use uisvd::train::{fit_with, sgd_update};

type Outcome = Result<String, String>;

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn data_dir(var: &str, default: &str) -> PathBuf {
    std::env::var_os(var).map(PathBuf::from).unwrap_or_else(|| workspace_root().join("data").join(default))
}

fn ml100k() -> Result<Dataset, String> {
    let dir = data_dir("UISVD_ML100K_DIR", "ml-100k");
    load_ml100k(&dir).map_err(|e| format!("ml-100k dataset not found at {} ({e})", dir.display()))
}

fn ml1m() -> Result<Dataset, String> {
    let dir = data_dir("UISVD_ML1M_DIR", "ml-1m");
    load_ml1m(&dir).map_err(|e| format!("ml-1m dataset not found at {} ({e})", dir.display()))
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

// ---------------------------------------------------------------------------
// Shared ml-100k experiment: SVD++ and UISVD++ over the lambda grid, five
// repeats, one set of splits for every configuration.

const LAMBDAS: [f64; 6] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0];

struct Ml100kRuns {
    svdpp: EvalReport,
    uisvdpp: EvalReport,
    lambda_points: Vec<SweepPoint>,
}

fn ml100k_runs(cache: &mut Option<Result<Ml100kRuns, String>>) -> &Result<Ml100kRuns, String> {
    cache.get_or_insert_with(|| {
        let ds = ml100k()?;
        let base = HyperParams::default();
        let mut hps = vec![HyperParams { variant: Variant::SvdPp, ..base.clone() }];
        hps.extend(LAMBDAS.iter().map(|&lambda| HyperParams { lambda, ..base.clone() }));
        let cfg = ExperimentConfig::default();
        let started = Instant::now();
        let mut reports = run_grid(&ds, &hps, &cfg).map_err(|e| e.to_string())?;
        eprintln!("  (ml-100k grid: {} fits in {:.0}s)", hps.len() * cfg.repeats, started.elapsed().as_secs_f64());
        let lambda_points: Vec<SweepPoint> = LAMBDAS
            .iter()
            .zip(reports.drain(1..))
            .map(|(&value, report)| SweepPoint { value, report })
            .collect();
        let uisvdpp = lambda_points.iter().find(|p| p.value == 0.1).unwrap().report.clone();
        Ok(Ml100kRuns { svdpp: reports.remove(0), uisvdpp, lambda_points })
    })
}

fn digests(r: &EvalReport) -> Vec<u64> {
    r.per_repeat.iter().map(|x| x.test_digest).collect()
}

fn criterion_1(runs: &Result<Ml100kRuns, String>) -> Outcome {
    let runs = runs.as_ref().map_err(Clone::clone)?;
    let (s, u) = (runs.svdpp.mean_rmse, runs.uisvdpp.mean_rmse);
    let shared = digests(&runs.svdpp) == digests(&runs.uisvdpp);
    let msg = format!("mean RMSE SVD++ {s:.4} (0.9219 +/- 0.02), UISVD++ {u:.4} (0.9071 +/- 0.02), shared splits {shared}");
    if within(s, 0.9219, 0.02) && within(u, 0.9071, 0.02) && u < s && shared {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_2(runs: &Result<Ml100kRuns, String>) -> Outcome {
    let runs = runs.as_ref().map_err(Clone::clone)?;
    let (s, u) = (runs.svdpp.mean_mae, runs.uisvdpp.mean_mae);
    let msg = format!("mean MAE SVD++ {s:.4} (0.7252 +/- 0.02), UISVD++ {u:.4} (0.7159 +/- 0.02)");
    if within(s, 0.7252, 0.02) && within(u, 0.7159, 0.02) && u <= s {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_3() -> Outcome {
    let ds = ml1m()?;
    let hp = HyperParams::for_flavor(uisvd::dataio::Flavor::Ml1m);
    let r = run_experiment(&ds, &hp, &ExperimentConfig::default()).map_err(|e| e.to_string())?;
    let msg = format!("ml-1m UISVD++ mean RMSE {:.4} (0.8514 +/- 0.02)", r.mean_rmse);
    if within(r.mean_rmse, 0.8514, 0.02) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_4(runs: &Result<Ml100kRuns, String>) -> Outcome {
    let runs = runs.as_ref().map_err(Clone::clone)?;
    let curve: Vec<String> = runs
        .lambda_points
        .iter()
        .map(|p| format!("{}:{:.4}", p.value, p.report.mean_rmse))
        .collect();
    let best = sweep_argmin(&runs.lambda_points);
    let msg = format!("argmin lambda {best:?} over [{}]", curve.join(", "));
    if best == Some(0.1) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_5() -> Outcome {
    let ds = ml100k()?;
    let table = popularity_table(&ds).map_err(|e| e.to_string())?;
    let top3: Vec<u32> = table.iter().take(3).map(|e| e.item_id).collect();
    let p50 = table.iter().find(|e| e.item_id == 50).map(|e| e.popularity).unwrap_or(f64::NAN);
    let msg = format!("top-3 {top3:?} (want [50, 100, 258]), popularity(50) = {p50:.4}% (want 3.2608 +/- 0.01)");
    if top3 == [50, 100, 258] && within(p50, 3.2608, 0.01) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_6() -> Outcome {
    let ds = ml100k()?;
    let lists = all_cohorts(&ds, 20, &HashSet::new(), CohortRanking::Sum).map_err(|e| e.to_string())?;
    let missing: Vec<String> = lists.iter().filter(|l| !l.item_ids().contains(&174)).map(|l| l.label()).collect();
    if missing.is_empty() {
        Ok("item 174 in all seven cohort top-20 lists".into())
    } else {
        Err(format!("item 174 missing from cohort lists {missing:?}"))
    }
}

// ---------------------------------------------------------------------------
// Toy instance: five users in distinct age buckets, five items with zero,
// one, two, one and three genres.

fn toy() -> Dataset {
    let genres = GenreVocabulary::ml100k();
    let ages = [12, 20, 30, 47, 60];
    let users = ages
        .iter()
        .enumerate()
        .map(|(k, &age)| UserProfile {
            user_id: k as u32 + 1,
            age,
            gender: if k % 2 == 0 { Gender::M } else { Gender::F },
            occupation: "other".into(),
            zip: "00000".into(),
        })
        .collect();
    let item_genres: [&[usize]; 5] = [&[], &[1], &[3, 5], &[0], &[2, 8, 14]];
    let items = item_genres
        .iter()
        .enumerate()
        .map(|(k, gs)| {
            let mut flags = vec![false; genres.len()];
            for &g in *gs {
                flags[g] = true;
            }
            ItemProfile { item_id: k as u32 + 1, title: format!("Item {}", k + 1), genre_flags: flags }
        })
        .collect();
    let catalog = Arc::new(Catalog {
        name: "toy".into(),
        genres,
        users,
        items,
        user_index: IdIndex::from_sorted((1..=5).collect()),
        item_index: IdIndex::from_sorted((1..=5).collect()),
    });
    let pairs: [(u32, u32, f64); 14] = [
        (0, 0, 5.0),
        (0, 1, 3.0),
        (0, 2, 4.0),
        (1, 1, 2.0),
        (1, 3, 5.0),
        (1, 4, 1.0),
        (2, 0, 4.0),
        (2, 2, 3.0),
        (2, 3, 4.0),
        (2, 4, 5.0),
        (3, 2, 2.0),
        (3, 4, 3.0),
        (4, 3, 1.0),
        (0, 4, 2.0),
    ];
    let ratings = pairs
        .iter()
        .enumerate()
        .map(|(t, &(user, item, value))| Rating { user, item, value, timestamp: t as i64 })
        .collect();
    Dataset::new(catalog, ratings)
}

fn add_scaled(acc: &mut [f64], row: &[f64], s: f64) {
    for (a, r) in acc.iter_mut().zip(row) {
        *a += s * r;
    }
}

fn sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Per-sample regularized squared error, evaluated directly from its
/// definition.
fn sample_loss(p: &ModelParams, hp: &HyperParams, ctx: &ModelContext, u: usize, i: usize, r: f64) -> f64 {
    let v = hp.variant;
    let k = p.p.k();
    let ages = &ctx.attrs.user_age[u];
    let rated = &ctx.implicit[u];
    let genres = &ctx.attrs.item_genres[i];

    let mut user = p.p.row(u).to_vec();
    if v.uses_age() {
        let norm = match hp.attr_norm {
            AttrNorm::Active => ages.len() as f64,
            AttrNorm::Global => AGE_BUCKETS as f64,
        };
        for &a in ages {
            add_scaled(&mut user, p.y_age.row(a), hp.alpha / norm);
        }
    }
    if v.uses_implicit() && !rated.is_empty() {
        for &j in rated {
            add_scaled(&mut user, p.y_impl.row(j as usize), hp.beta / (rated.len() as f64).sqrt());
        }
    }
    let mut item = p.q.row(i).to_vec();
    if v.uses_genre() && !genres.is_empty() {
        let norm = match hp.attr_norm {
            AttrNorm::Active => genres.len() as f64,
            AttrNorm::Global => ctx.attrs.num_genres as f64,
        };
        for &t in genres {
            add_scaled(&mut item, p.y_genre.row(t), 1.0 / norm);
        }
    }
    let mut pred: f64 = (0..k).map(|f| user[f] * item[f]).sum();
    let mut reg = sq(p.p.row(u)) + sq(p.q.row(i));
    if v.uses_biases() {
        pred += p.b_user[u] + p.b_item[i];
        reg += p.b_user[u].powi(2) + p.b_item[i].powi(2);
    }
    if v.uses_mean() {
        pred += p.mu;
    }
    if v.uses_age() {
        reg += ages.iter().map(|&a| sq(p.y_age.row(a))).sum::<f64>();
    }
    if v.uses_implicit() {
        reg += rated.iter().map(|&j| sq(p.y_impl.row(j as usize))).sum::<f64>();
    }
    if v.uses_genre() {
        reg += genres.iter().map(|&t| sq(p.y_genre.row(t))).sum::<f64>();
    }
    (r - pred).powi(2) + hp.lambda * reg
}

/// All learnable scalars in a fixed order.
fn flatten(p: &ModelParams) -> Vec<f64> {
    let mut out = Vec::new();
    out.extend(&p.b_user);
    out.extend(&p.b_item);
    for f in [&p.p, &p.q, &p.y_impl, &p.y_age, &p.y_genre] {
        out.extend(f.as_slice());
    }
    out
}

fn with_coord(p: &ModelParams, idx: usize, delta: f64) -> ModelParams {
    let mut q = p.clone();
    let mut idx = idx;
    let nb = q.b_user.len();
    if idx < nb {
        q.b_user[idx] += delta;
        return q;
    }
    idx -= nb;
    let nb = q.b_item.len();
    if idx < nb {
        q.b_item[idx] += delta;
        return q;
    }
    idx -= nb;
    let mut hit = false;
    for f in [&mut q.p, &mut q.q, &mut q.y_impl, &mut q.y_age, &mut q.y_genre] {
        let n = f.as_slice().len();
        if idx < n {
            f.as_mut_slice()[idx] += delta;
            hit = true;
            break;
        }
        idx -= n;
    }
    assert!(hit, "coordinate out of range");
    q
}

fn criterion_7() -> Outcome {
    let ds = toy();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for variant in Variant::ALL {
        for encoding in [AgeEncoding::OneHot, AgeEncoding::Cumulative] {
            for norm in [AttrNorm::Active, AttrNorm::Global] {
                let hp = HyperParams {
                    k: 3,
                    gamma: 1.0,
                    lambda: 0.1,
                    alpha: 0.3,
                    beta: 0.7,
                    variant,
                    age_encoding: encoding,
                    attr_norm: norm,
                    ..HyperParams::default()
                };
                let mut params = init_params(&hp, &ds).map_err(|e| e.to_string())?;
                for b in params.b_user.iter_mut().chain(params.b_item.iter_mut()) {
                    *b = rng.gen_range(-0.5..0.5);
                }
                let ctx = ModelContext::from_train(&ds, encoding).map_err(|e| e.to_string())?;
                let base = flatten(&params);
                for r in ds.ratings() {
                    let (u, i) = (r.user as usize, r.item as usize);
                    let mut stepped = params.clone();
                    sgd_update(&mut stepped, &hp, &ctx, r.user, r.item, r.value);
                    let analytic: Vec<f64> = flatten(&stepped).iter().zip(&base).map(|(a, b)| a - b).collect();

                    let h = 1e-4;
                    let loss_at = |idx: usize, d: f64| sample_loss(&with_coord(&params, idx, d), &hp, &ctx, u, i, r.value);
                    let numeric: Vec<f64> = (0..base.len())
                        .map(|idx| {
                            let g = (-loss_at(idx, 2.0 * h) + 8.0 * loss_at(idx, h) - 8.0 * loss_at(idx, -h) + loss_at(idx, -2.0 * h))
                                / (12.0 * h);
                            -0.5 * g
                        })
                        .collect();
                    let diff = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
                    let rel = diff / sq(&numeric).sqrt();
                    // Parameters outside the sample must not move at all.
                    for (a, n) in analytic.iter().zip(&numeric) {
                        if n.abs() < 1e-9 && *a != 0.0 && a.abs() > 1e-9 {
                            return Err(format!("{variant}: analytic step moves a parameter the sample loss ignores"));
                        }
                    }
                    worst = worst.max(rel);
                    checked += 1;
                }
            }
        }
    }
    let msg = format!("{checked} samples over 6 variants x 2 encodings x 2 normalizers, worst relative error {worst:.2e} (< 1e-5)");
    if worst < 1e-5 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_8() -> Outcome {
    let ds = toy();
    let ui = HyperParams { k: 4, alpha: 0.0, beta: 1.0, variant: Variant::UISvdPp, ..HyperParams::default() };
    let svdpp = HyperParams { variant: Variant::SvdPp, ..ui.clone() };
    let bias = HyperParams { variant: Variant::BiasSvd, ..ui.clone() };
    let mut params = init_params(&ui, &ds).map_err(|e| e.to_string())?;
    params.y_age.fill(0.0);
    params.y_genre.fill(0.0);
    let ctx = ModelContext::from_train(&ds, ui.age_encoding).map_err(|e| e.to_string())?;
    let mut no_impl = params.clone();
    no_impl.y_impl = Factors::zeros(no_impl.y_impl.rows(), no_impl.y_impl.k());

    let mut pairs = 0;
    for u in 0..ds.num_users() as u32 {
        for i in 0..ds.num_items() as u32 {
            let a = predict_raw(&params, &ui, &ctx, u, i);
            let b = predict_raw(&params, &svdpp, &ctx, u, i);
            if a.to_bits() != b.to_bits() {
                return Err(format!("UISVD++ {a} vs SVD++ {b} at ({u},{i})"));
            }
            let c = predict_raw(&no_impl, &svdpp, &ctx, u, i);
            let d = predict_raw(&no_impl, &bias, &ctx, u, i);
            if c.to_bits() != d.to_bits() {
                return Err(format!("SVD++ {c} vs BiasSVD {d} at ({u},{i})"));
            }
            pairs += 1;
        }
    }
    Ok(format!("UISVD++ -> SVD++ and SVD++ -> BiasSVD bitwise identical on all {pairs} pairs"))
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for case in 0..100 {
        let n = rng.gen_range(1..=30);
        let pairs: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.gen_range(1..=5) as f64, rng.gen_range(0.0..6.0)))
            .collect();
        let mut se = 0.0;
        let mut ae = 0.0;
        for &(r, p) in &pairs {
            se += (r - p) * (r - p);
            ae += (r - p).abs();
        }
        let (want_rmse, want_mae) = ((se / n as f64).sqrt(), ae / n as f64);
        let got_rmse = rmse(&pairs).map_err(|e| e.to_string())?;
        let got_mae = mae(&pairs).map_err(|e| e.to_string())?;
        if (got_rmse - want_rmse).abs() > 1e-12 || (got_mae - want_mae).abs() > 1e-12 || got_rmse < got_mae {
            return Err(format!("list {case}: rmse {got_rmse} vs {want_rmse}, mae {got_mae} vs {want_mae}"));
        }
    }
    Ok("100 random lists agree with the scalar oracle; rmse >= mae throughout".into())
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_uisvd"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("uisvd {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn criterion_10() -> Outcome {
    let data = data_dir("UISVD_ML100K_DIR", "ml-100k");
    ml100k()?;
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (data, out) = (data.to_str().unwrap(), root.path().to_str().unwrap());
    let mut compared = Vec::new();
    for (cmd, extra, files) in [
        ("train", vec!["--seed", "7"], vec!["model.bin", "epochs.csv", "metrics.csv", "config.toml"]),
        ("evaluate", vec!["--repeats", "2", "--epochs", "5"], vec!["reports.csv", "comparison.txt", "config.toml"]),
    ] {
        // Both runs write to the same directory; the first run's files are
        // read back before the second overwrites them.
        let mut bytes = Vec::new();
        for _ in 0..2 {
            let mut args = vec!["-q", cmd, "--data", data, "--out", out, "--tag", "same"];
            args.extend(&extra);
            run_cli(&args)?;
            let dir = root.path().join("ml-100k/uisvdpp/same");
            let contents: Vec<Vec<u8>> = files
                .iter()
                .map(|f| std::fs::read(dir.join(f)).map_err(|e| format!("{f}: {e}")))
                .collect::<Result<_, _>>()?;
            std::fs::remove_dir_all(&dir).map_err(|e| e.to_string())?;
            bytes.push(contents);
        }
        for (k, f) in files.iter().enumerate() {
            if bytes[0][k] != bytes[1][k] {
                return Err(format!("{cmd}: {f} differs between identical runs"));
            }
            compared.push(format!("{cmd}/{f}"));
        }
    }
    Ok(format!("byte-identical across two runs: {}", compared.join(", ")))
}

fn criterion_11() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    let mut check = |name: &str, ds: Result<Dataset, String>, want: (usize, usize, usize), sparsity: f64| match ds {
        Ok(ds) => {
            let got = (ds.num_users(), ds.num_items(), ds.len());
            let s = 100.0 * ds.sparsity();
            let pass = got == want && within(s, sparsity, 0.05);
            ok &= pass;
            notes.push(format!("{name} {}/{}/{} sparsity {s:.2}%", got.0, got.1, got.2));
        }
        Err(e) => {
            ok = false;
            notes.push(e);
        }
    };
    check("ml-100k", ml100k(), (943, 1682, 100_000), 93.7);
    check("ml-1m", ml1m(), (6040, 3706, 1_000_209), 95.5);
    let msg = notes.join("; ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_12() -> Outcome {
    let ds = ml100k()?;
    let split = random_split(&ds, 0.8, 42).map_err(|e| e.to_string())?;
    let hp = HyperParams { epochs: 5, ..HyperParams::default() };
    let mut curve = Vec::new();
    fit_with(&hp, &split.train, None, |rec| curve.push(rec.train_rmse)).map_err(|e| e.to_string())?;
    let msg = format!("train RMSE {:?}", curve.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>());
    if curve.len() == 5 && curve.windows(2).all(|w| w[1] < w[0]) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let selected = |n: usize| wanted.is_empty() || wanted.contains(&n);
    let mut runs = None;
    let mut failed = Vec::new();

    for n in 1..=12 {
        if !selected(n) {
            continue;
        }
        let started = Instant::now();
        let outcome = match n {
            1 => criterion_1(ml100k_runs(&mut runs)),
            2 => criterion_2(ml100k_runs(&mut runs)),
            3 => criterion_3(),
            4 => criterion_4(ml100k_runs(&mut runs)),
            5 => criterion_5(),
            6 => criterion_6(),
            7 => criterion_7(),
            8 => criterion_8(),
            9 => criterion_9(),
            10 => criterion_10(),
            11 => criterion_11(),
            12 => criterion_12(),
            _ => unreachable!(),
        };
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS criterion {n:>2}: {msg} [{secs:.1}s]"),
            Err(msg) => {
                println!("FAIL criterion {n:>2}: {msg} [{secs:.1}s]");
                failed.push(n);
            }
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
