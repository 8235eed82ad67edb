use std::path::PathBuf;

use unilabel_train::config::DataKind;
use unilabel_train::pipeline::Problem;
use unilabel_train::ExperimentConfig;

fn config_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn every_shipped_config_parses_and_validates() {
    let mut seen = 0;
    for entry in std::fs::read_dir(config_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 7);
}

#[test]
fn toy_config_file_matches_the_builtin_default() {
    let file = ExperimentConfig::load(&config_dir().join("toy.toml")).unwrap();
    assert_eq!(file, ExperimentConfig::toy());
}

#[test]
fn digits_configs_follow_the_benchmark_splits() {
    let cfg = ExperimentConfig::load(&config_dir().join("digits-mt-reduced.toml")).unwrap();
    assert_eq!(cfg.data.kind, DataKind::Digits);
    assert_eq!(cfg.data.limit, Some(5000));
    let classes: Vec<&Vec<String>> = cfg.label_spaces.iter().map(|e| &e.classes).collect();
    assert_eq!(classes[0].join(""), "01234");
    assert_eq!(classes[1].join(""), "56789");
    assert!(classes[2].is_empty());

    let overlap = ExperimentConfig::load(&config_dir().join("digits-mt-overlap4-reduced.toml")).unwrap();
    let a: std::collections::BTreeSet<_> = overlap.label_spaces[0].classes.iter().collect();
    let shared = overlap.label_spaces[1].classes.iter().filter(|c| a.contains(c)).count();
    assert_eq!(shared, 4);
}

#[test]
fn conflict_config_declares_one_conflict() {
    let cfg = ExperimentConfig::load(&config_dir().join("toy-conflict.toml")).unwrap();
    let p = Problem::from_config(&cfg).unwrap();
    assert_eq!(p.conflicts.len(), 1);
}
