//! Binary-level checks: exit codes, generated file counts, training-example
//! pins, and the ablation table contract.

use std::path::PathBuf;
use std::process::Command;

use entropic_ood_cli::config::ExperimentConfig;
use entropic_ood_cli::pipeline;
use entropic_ood_core::heads::LossKind;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_entropic-ood"))
}

fn work_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir()
        .join("entropic_ood_cli_tests")
        .join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn invalid_config_exits_with_code_2() {
    let dir = work_dir("bad_config");
    let config_path = dir.join("config.json");
    std::fs::write(&config_path, "{\"train\": {\"epochs\": 0}}").unwrap();
    let status = bin()
        .args(["generate", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(&dir)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    let config_path = dir.join("not_json.json");
    std::fs::write(&config_path, "{nope").unwrap();
    let status = bin()
        .args(["generate", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(&dir)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn missing_data_exits_with_code_3() {
    let dir = work_dir("missing_data");
    let status = bin().arg("train").arg("--out").arg(&dir).status().unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn generate_writes_six_csvs_with_documented_names_and_counts() {
    let dir = work_dir("generate");
    let status = bin()
        .args(["generate", "--seed", "5"])
        .arg("--out")
        .arg(&dir)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    let names: Vec<String> = std::fs::read_dir(dir.join("data"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    for expected in [
        "train.csv",
        "val.csv",
        "test.csv",
        "ood_ring.csv",
        "ood_box.csv",
        "ood_id_control.csv",
    ] {
        assert!(names.contains(&expected.to_string()), "missing {expected}");
    }
    assert_eq!(names.len(), 6);

    // default split of 600 blob rows is 400/100/100; OOD sets carry 300 each
    let rows = |name: &str| {
        std::fs::read_to_string(dir.join("data").join(name))
            .unwrap()
            .lines()
            .count()
            - 1
    };
    assert_eq!(rows("train.csv"), 400);
    assert_eq!(rows("val.csv"), 100);
    assert_eq!(rows("test.csv"), 100);
    assert_eq!(rows("ood_ring.csv"), 300);
    assert_eq!(rows("ood_box.csv"), 300);
    assert_eq!(rows("ood_id_control.csv"), 300);
}

#[test]
fn thirty_epoch_isomax_reaches_95_percent_train_accuracy() {
    let dir = work_dir("isomax_30");
    let mut config = ExperimentConfig::default();
    config.loss.kind = LossKind::IsoMax;
    config.loss.alpha = 0.0;
    config.train.epochs = 30;
    config.seed = 1;
    pipeline::cmd_generate(&config, &dir).unwrap();
    pipeline::cmd_train(&config, &dir).unwrap();

    let log = std::fs::read_to_string(dir.join("train_log.csv")).unwrap();
    let final_acc: f64 = log
        .lines()
        .filter(|l| l.starts_with("isomax,30,"))
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .next_back()
        .unwrap();
    assert!(final_acc > 0.95, "final train accuracy {final_acc}");
}

#[test]
fn ablation_rejects_non_positive_scales_and_keeps_accuracy_stable() {
    let dir = work_dir("ablation");
    let config = ExperimentConfig::default();
    pipeline::cmd_generate(&config, &dir).unwrap();
    assert!(pipeline::cmd_ablate_es(&config, &dir, &[-1.0]).is_err());
    assert!(pipeline::cmd_ablate_es(&config, &dir, &[]).is_err());

    let rows = pipeline::cmd_ablate_es(&config, &dir, &[1.0, 3.0, 10.0]).unwrap();
    assert_eq!(rows.len(), 3, "one table row per entropic scale");
    let accs: Vec<f64> = rows.iter().map(|r| r.test_accuracy).collect();
    let spread = accs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - accs.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(
        spread <= 0.02,
        "accuracy spread {spread} across entropic scales"
    );
}

#[test]
fn sweep_thread_cap_is_respected_and_summary_written() {
    let dir = work_dir("sweep_capped");
    let _config = ExperimentConfig::default();
    let status = bin()
        .args(["sweep", "--seeds", "2"])
        .arg("--out")
        .arg(&dir)
        .env("ENTROPIC_OOD_THREADS", "1")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(dir.join("sweep_summary.csv").exists());
    assert!(dir.join("seed_0001").join("report.csv").exists());
    assert!(dir.join("seed_0002").join("report.csv").exists());
}
