use std::collections::HashSet;

use photoscore::data::{synth_dataset, SynthSpec};
use photoscore::nn::TrainConfig;
use photoscore::rsrl::{rsrl_run, DropRule, RsrlConfig, RsrlError};
use photoscore::ScoreClass;

fn dataset(seed: u64) -> photoscore::data::Dataset {
    synth_dataset(&SynthSpec { count: 300, seed, ..SynthSpec::default() }).unwrap()
}

fn config(seed: u64) -> RsrlConfig {
    RsrlConfig {
        rng_seed: seed,
        train: TrainConfig { epochs: 1, rng_seed: seed, ..TrainConfig::default() },
        ..RsrlConfig::default()
    }
}

#[test]
fn pruning_is_one_way_and_spares_minorities() {
    let cfg = RsrlConfig {
        max_iterations: 5,
        drop_rule: DropRule::Quantile(0.1),
        // FD never exceeds 1, so the run cannot stop early.
        fd_threshold: 1.0,
        ..config(21)
    };
    let ds = dataset(21);
    let out = rsrl_run(&ds, &cfg).unwrap();
    assert_eq!(out.ledger.len(), 5);
    assert!(!out.early_stopped);

    let sizes: Vec<usize> = out.ledger.records.iter().map(|r| r.train_size).collect();
    assert!(sizes.windows(2).all(|w| w[1] < w[0]), "{sizes:?}");

    let label: std::collections::HashMap<&str, ScoreClass> =
        ds.samples.iter().map(|s| (s.id.as_str(), s.label)).collect();
    let minority =
        |ids: &[String]| ids.iter().filter(|id| !cfg.majority_classes.contains(&label[id.as_str()].score())).count();
    let first_minority = minority(&out.train_ids[0]);
    let validation: HashSet<&String> = out.validation_ids.iter().collect();
    for l in 0..out.train_ids.len() {
        assert_eq!(minority(&out.train_ids[l]), first_minority);
        assert!(out.train_ids[l].iter().all(|id| !validation.contains(id)));
        if l > 0 {
            let prev: HashSet<&String> = out.train_ids[l - 1].iter().collect();
            assert!(out.train_ids[l].iter().all(|id| prev.contains(id)));
        }
    }
    assert!(out.drop_log.iter().all(|e| cfg.majority_classes.contains(&e.label.score())));
    let dropped: HashSet<&String> = out.drop_log.iter().map(|e| &e.id).collect();
    assert_eq!(dropped.len(), out.drop_log.len(), "a sample was dropped twice");
}

#[test]
fn single_iteration_family() {
    let out = rsrl_run(&dataset(3), &RsrlConfig { max_iterations: 1, ..config(3) }).unwrap();
    assert_eq!(out.ledger.len(), 1);
    assert_eq!(out.ledger.records[0].fd, 1.0);
    assert_eq!(out.ledger.selection.unwrap().optimal(), Some(0));
    assert_eq!(out.fd_selected(), 0);
}

#[test]
fn zero_threshold_keeps_everything() {
    let cfg = RsrlConfig { max_iterations: 3, drop_rule: DropRule::Threshold(0.0), fd_threshold: 1.0, ..config(4) };
    let out = rsrl_run(&dataset(4), &cfg).unwrap();
    let sizes: Vec<usize> = out.ledger.records.iter().map(|r| r.train_size).collect();
    assert_eq!(sizes.len(), 3);
    assert!(sizes.iter().all(|&s| s == sizes[0]));
    assert!(out.drop_log.is_empty());
}

#[test]
fn early_stop_only_above_threshold() {
    for seed in [5, 6] {
        let cfg = RsrlConfig { max_iterations: 4, ..config(seed) };
        let out = rsrl_run(&dataset(seed), &cfg).unwrap();
        assert!(out.ledger.len() <= cfg.max_iterations);
        let online: Vec<f64> = out.ledger.records.iter().map(|r| r.fd_online).collect();
        if out.early_stopped {
            assert!(*online.last().unwrap() > cfg.fd_threshold);
        }
        // No earlier iteration (past the first) exceeded the threshold.
        let last = online.len() - 1;
        assert!(online[1..last.max(1)].iter().all(|&f| f <= cfg.fd_threshold), "{online:?}");
    }
}

#[test]
fn identical_seeds_identical_ledgers() {
    let cfg = RsrlConfig { max_iterations: 2, fd_threshold: 1.0, ..config(8) };
    let a = rsrl_run(&dataset(8), &cfg).unwrap();
    let b = rsrl_run(&dataset(8), &cfg).unwrap();
    assert_eq!(a.ledger.to_report(None), b.ledger.to_report(None));
    assert_eq!(a.models, b.models);
}

#[test]
fn rejects_single_class_data() {
    let mut spec = SynthSpec { count: 20, ..SynthSpec::default() };
    spec.proportions = [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let ds = synth_dataset(&spec).unwrap();
    assert!(matches!(rsrl_run(&ds, &config(0)), Err(RsrlError::Config(_))));
    let bad = RsrlConfig { drop_rule: DropRule::Threshold(1.5), ..config(0) };
    assert!(matches!(rsrl_run(&dataset(0), &bad), Err(RsrlError::Config(_))));
}
