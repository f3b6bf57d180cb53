//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

mod common;

use std::collections::HashMap;
use std::time::{Duration, Instant};

use common::{d_measure_oracle, gradient_check, perturbed_model, random_image, random_matrix, random_symmetric, rng};
use photoscore::data::ppm::{decode, encode};
use photoscore::data::{synth_dataset, RgbImage, SynthSpec};
use photoscore::linalg::{sym_eig, Matrix};
use photoscore::measures::{
    argmax, d_measure, factor_loadings, fd_scores, pairwise_factor_distance, select_from_scores, Selection,
};
use photoscore::nn::{read_model, write_model, Mode, NetworkModel, TrainConfig};
use photoscore::rsrl::{rsrl_run, DropRule, RsrlConfig};
use photoscore::saliency::{apply_mask, extract, FeatureMapStack, Map};
use rand::seq::SliceRandom;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn d_measure_oracle_check() -> Outcome {
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (i, j) = (r.random_range(4..=64), r.random_range(2..=16));
        let w = random_matrix(&mut r, i, j);
        worst = worst.max((d_measure(&w).unwrap().d_measure - d_measure_oracle(&w)).abs());
    }
    outcome(worst < 1e-9, format!("100 matrices, max |pipeline - closed form| = {worst:.1e} (tol 1e-9)"))
}

fn eigensolver_check() -> Outcome {
    let mut r = rng(2);
    let (mut recon, mut trace): (f64, f64) = (0.0, 0.0);
    for _ in 0..200 {
        let n = r.random_range(1..=16);
        let m = random_symmetric(&mut r, n);
        let eig = sym_eig(&m).unwrap();
        recon = recon.max(eig.reconstruct().max_abs_diff(&m));
        trace = trace.max((eig.values.iter().sum::<f64>() - m.trace()).abs());
    }
    outcome(
        recon < 1e-8 && trace < 1e-8,
        format!("200 matrices, reconstruction {recon:.1e}, trace {trace:.1e} (tol 1e-8)"),
    )
}

fn invariance_check() -> Outcome {
    let mut r = rng(3);
    let (mut perm_err, mut affine_err, mut sign_err): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..50 {
        let (i, j) = (r.random_range(4..=64), r.random_range(2..=16));
        let w = random_matrix(&mut r, i, j);
        let base = d_measure(&w).unwrap();

        let mut perm: Vec<usize> = (0..j).collect();
        perm.shuffle(&mut r);
        let permuted = Matrix::from_columns(&perm.iter().map(|&c| w.column(c)).collect::<Vec<_>>()).unwrap();
        perm_err = perm_err.max((d_measure(&permuted).unwrap().d_measure - base.d_measure).abs());

        let cols: Vec<Vec<f64>> = (0..j)
            .map(|c| {
                let (a, b) = (r.random_range(0.01..100.0), r.random_range(-50.0..50.0));
                w.column(c).iter().map(|x| a * x + b).collect()
            })
            .collect();
        let affine = Matrix::from_columns(&cols).unwrap();
        affine_err = affine_err.max((d_measure(&affine).unwrap().d_measure - base.d_measure).abs());

        let mut eig = base.factors.source.clone();
        for m in 0..j {
            if r.random::<bool>() {
                for k in 0..j {
                    eig.vectors[(k, m)] = -eig.vectors[(k, m)];
                }
            }
        }
        let flipped = factor_loadings(&eig).unwrap();
        let mut total = 0.0;
        for a in 0..j {
            let min = (0..j)
                .filter(|&b| b != a)
                .map(|b| pairwise_factor_distance(&flipped, a, b).unwrap())
                .fold(f64::INFINITY, f64::min);
            total += min;
        }
        sign_err = sign_err.max((total / j as f64 - base.d_measure).abs());
    }
    let pass = perm_err < 1e-9 && affine_err < 1e-9 && sign_err < 1e-9;
    outcome(
        pass,
        format!(
            "50 cases each: permutation {perm_err:.1e}, affine {affine_err:.1e}, sign flip {sign_err:.1e} (tol 1e-9)"
        ),
    )
}

fn gradient_check_all() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut groups = 0;
    let mut empty = Vec::new();
    for (mode, seed) in [(Mode::Train, 41), (Mode::Infer, 42)] {
        let mut r = rng(seed);
        let images: Vec<RgbImage> = (0..4).map(|_| random_image(&mut r)).collect();
        let batch: Vec<&RgbImage> = images.iter().collect();
        let model = perturbed_model(seed, &batch);
        for g in gradient_check(&model, &batch, &[1, 4, 4, 6], mode, 8, 1e-5, seed) {
            if g.checked == 0 {
                empty.push(g.name.clone());
            }
            worst = worst.max(g.max_rel_err);
            groups += 1;
        }
    }
    outcome(
        worst < 1e-5 && empty.is_empty(),
        format!("{groups} parameter groups (train + infer mode), max relative error {worst:.1e} (tol 1e-5)"),
    )
}

fn shape_check() -> Outcome {
    let mut r = rng(5);
    let images: Vec<RgbImage> = (0..3).map(|_| random_image(&mut r)).collect();
    let batch: Vec<&RgbImage> = images.iter().collect();
    let model = NetworkModel::init_type_c(5);
    let trace = model.forward(&batch, Mode::Train).unwrap();
    let shapes = trace.activation_shapes();
    let want = ([(29, 29, 94), (8, 8, 36), (8, 8, 36)], 36, 8);
    let sum_err = trace.probabilities.iter().map(|p| (p.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
    outcome(shapes == want && sum_err < 1e-9, format!("shapes {shapes:?}, softmax row-sum error {sum_err:.1e}"))
}

fn selection_check() -> Outcome {
    // The F_all-best model is not the FD-best, but its FD of 0.96 clears 0.95.
    let narrative = fd_scores(&[1.0, 0.95], &[0.92, 1.0]).unwrap();
    let a = select_from_scores(&narrative, 0.95).unwrap();
    let a_ok = matches!(a, Selection::Optimal { index: 0, by_fd: 1, .. }) && (narrative.fd[0] - 0.96).abs() < 1e-15;

    let unconverged = fd_scores(&[1.0, 0.5], &[0.5, 1.0]).unwrap();
    let b = select_from_scores(&unconverged, 0.95).unwrap();
    let b_ok = matches!(b, Selection::NotConverged { by_f: 0, .. });

    let c = select_from_scores(&unconverged, 0.0).unwrap();
    let c_ok = c.optimal() == argmax(&unconverged.f_hat);
    outcome(a_ok && b_ok && c_ok, format!("threshold case {a_ok}, NotConverged case {b_ok}, T = 0 case {c_ok}"))
}

fn rsrl_end_to_end() -> Outcome {
    let mut notes = Vec::new();
    let (mut sizes_ok, mut minority_ok, mut stop_ok) = (true, true, true);
    let mut improved = 0;
    for seed in 0..5u64 {
        let ds = synth_dataset(&SynthSpec { count: 2000, seed, ..SynthSpec::default() }).unwrap();
        let cfg = RsrlConfig {
            max_iterations: 10,
            drop_rule: DropRule::Threshold(0.5),
            rng_seed: seed,
            train: TrainConfig { epochs: 3, rng_seed: seed, ..TrainConfig::default() },
            retrain_epochs: Some(1),
            ..RsrlConfig::default()
        };
        let out = rsrl_run(&ds, &cfg).unwrap();
        let records = &out.ledger.records;

        sizes_ok &= records.windows(2).all(|w| w[1].train_size <= w[0].train_size);

        let label: HashMap<&str, u8> = ds.samples.iter().map(|s| (s.id.as_str(), s.label.score())).collect();
        let minority_count =
            |ids: &[String]| ids.iter().filter(|id| !cfg.majority_classes.contains(&label[id.as_str()])).count();
        let m0 = minority_count(&out.train_ids[0]);
        minority_ok &= out.train_ids.iter().all(|ids| minority_count(ids) == m0)
            && out.drop_log.iter().all(|e| cfg.majority_classes.contains(&e.label.score()));

        // Iteration 0 always has FD 1 (a family of one), so stopping is judged from iteration 1 on.
        let over: Vec<usize> = records
            .iter()
            .filter(|r| r.iteration >= 1 && r.fd_online > cfg.fd_threshold)
            .map(|r| r.iteration)
            .collect();
        stop_ok &= match over.first() {
            Some(&first) => out.early_stopped && first == records.len() - 1,
            None => !out.early_stopped,
        };

        let minority = cfg.minority_indices();
        let selected = out.fd_selected();
        let (f0, fs) = (out.metrics[0].mean_f_over(&minority), out.metrics[selected].mean_f_over(&minority));
        if fs >= f0 {
            improved += 1;
        }
        notes.push(format!(
            "seed {seed}: {} iterations, selected {selected}, minority F {f0:.3} -> {fs:.3}",
            records.len()
        ));
    }
    for n in &notes {
        println!("      {n}");
    }
    outcome(
        sizes_ok && minority_ok && stop_ok && improved >= 3,
        format!(
            "sizes non-increasing {sizes_ok}, minorities kept {minority_ok}, early stop rule {stop_ok}, minority F not worse on {improved}/5 seeds"
        ),
    )
}

fn determinism_check() -> Outcome {
    let ds = synth_dataset(&SynthSpec { count: 300, seed: 77, ..SynthSpec::default() }).unwrap();
    let cfg = RsrlConfig {
        max_iterations: 3,
        fd_threshold: 1.0,
        rng_seed: 77,
        train: TrainConfig { epochs: 1, rng_seed: 77, ..TrainConfig::default() },
        ..RsrlConfig::default()
    };
    let a = rsrl_run(&ds, &cfg).unwrap().ledger.to_report(None);
    let b = rsrl_run(&ds, &cfg).unwrap().ledger.to_report(None);
    outcome(a == b, format!("two seeded runs, {} byte ledger reports identical: {}", a.len(), a == b))
}

fn saliency_check() -> Outcome {
    let mut r = rng(9);
    let (mut single_ok, mut identity_ok, mut dims_ok) = (true, true, true);
    for _ in 0..50 {
        let (w, h) = (r.random_range(1..64), r.random_range(1..64));
        let pixels = (0..w * h * 3).map(|_| r.random()).collect();
        let image = RgbImage::from_raw(w, h, pixels).unwrap();
        let (mw, mh, p) = (r.random_range(1..10), r.random_range(1..10), r.random_range(1..6));
        let maps = (0..p).map(|_| Map::new(mw, mh, (0..mw * mh).map(|_| r.random_range(0.0..5.0)).collect()).unwrap());
        let stack = FeatureMapStack::new(maps.collect()).unwrap();
        let out = extract(&image, &stack).unwrap();
        dims_ok &= [&out.ffp, &out.air].iter().all(|o| (o.width(), o.height()) == (w, h));
        if p == 1 {
            single_ok &= out.ffp == out.air;
        }
        let single = FeatureMapStack::new(vec![stack.maps()[0].clone()]).unwrap();
        let one = extract(&image, &single).unwrap();
        single_ok &= one.ffp == one.air;
        identity_ok &= apply_mask(&image, &Map::filled(w, h, 1.0)).unwrap() == image;
    }
    outcome(
        single_ok && identity_ok && dims_ok,
        format!(
            "50 stacks: P = 1 gives FFP = AIR {single_ok}, unit mask identity {identity_ok}, dimensions kept {dims_ok}"
        ),
    )
}

fn artifacts_check() -> Outcome {
    let mut model = NetworkModel::init_type_c(10);
    model.zerocenter = [0.1, 120.7, 3.0 / 7.0];
    let bytes = write_model(&model);
    let back = read_model(&bytes).unwrap();
    let model_ok = back == model && write_model(&back) == bytes;

    let mut r = rng(10);
    let image = random_image(&mut r);
    let ppm_ok = decode(&encode(&image)).unwrap() == image;

    let work = tempfile::tempdir().unwrap();
    let mismatched = common::golden::compare(&common::golden::session(work.path()));
    let golden_ok = mismatched.is_empty();
    outcome(
        model_ok && ppm_ok && golden_ok,
        format!(
            "model round trip {model_ok}, PPM round trip {ppm_ok}, golden reports clean {golden_ok} {mismatched:?}"
        ),
    )
}

fn main() {
    type Check = fn() -> Outcome;
    let criteria: [(&str, Check, Duration); 10] = [
        ("D-measure closed-form oracle", d_measure_oracle_check, Duration::from_secs(5)),
        ("eigensolver accuracy", eigensolver_check, Duration::from_secs(10)),
        ("D-measure invariances", invariance_check, Duration::MAX),
        ("gradient check", gradient_check_all, Duration::from_secs(60)),
        ("type (c) shape ledger", shape_check, Duration::MAX),
        ("FD selection logic", selection_check, Duration::MAX),
        ("RSRL end to end", rsrl_end_to_end, Duration::from_secs(15 * 60)),
        ("seeded determinism", determinism_check, Duration::MAX),
        ("saliency masks", saliency_check, Duration::from_secs(5)),
        ("reproducible artifacts", artifacts_check, Duration::MAX),
    ];
    let mut failures = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let in_time = elapsed < *budget;
        let pass = result.pass && in_time;
        if !pass {
            failures += 1;
        }
        let budget_note =
            if *budget == Duration::MAX { String::new() } else { format!(" / budget {}s", budget.as_secs()) };
        println!(
            "[{}] {:>2}. {name}: {} ({:.2}s{budget_note})",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            result.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
