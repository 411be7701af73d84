//! Harness behavior: config parsing with path-qualified errors, run
//! directory lifecycle, sweep and report files, and the exit-code contract.

use std::path::{Path, PathBuf};

use rdprobe::artifacts::{read_metrics_csv, METRICS_FILE, PROBE_FILE, WEIGHTS_FILE};
use rdprobe::baseline_cmd::{BASELINE_FILE, DISCARD_FILE};
use rdprobe::config::MarginalChoice;
use rdprobe::manifest::MANIFEST_FILE;
use rdprobe::report::{C_VS_D_FILE, C_VS_R_FILE, REPORT_DIR, SUMMARY_FILE};
use rdprobe::sweep::SWEEP_FILE;
use rdprobe::{
    build_dataset, emit_report, parse_args, run_baseline, run_cli, run_experiment, run_id_for,
    run_sweep, BaselineKind, Command, ConfigTree, RunManifest, RunOptions, RunStatus,
};
use rdprobe_core::Error;
use serde_json::json;

fn mini_json(out: &Path) -> serde_json::Value {
    json!({
        "dataset": {"kind": "synth", "train_n": 300, "eval_n": 100, "seed": 3},
        "model": {"encoder_hidden": [32], "decoder_hidden": [32], "latent_dim": 4},
        "train": {"beta": 1.0, "epochs": 1, "batch": 64},
        "probe": {"epochs": 2, "batch": 64, "samples": 2},
        "out": out.display().to_string(),
    })
}

fn parse(value: &serde_json::Value) -> ConfigTree {
    ConfigTree::from_text(&value.to_string()).expect("config parses")
}

fn parse_err(value: &serde_json::Value) -> String {
    ConfigTree::from_text(&value.to_string()).expect_err("config must fail").to_string()
}

fn args(parts: &[&str]) -> Vec<String> {
    parts.iter().map(|s| s.to_string()).collect()
}

#[test]
fn minimal_config_fills_documented_defaults() {
    let cfg = ConfigTree::from_text(r#"{"dataset": {"kind": "synth"}, "train": {"beta": 1}}"#)
        .expect("minimal config parses");
    assert_eq!(cfg.model.encoder_hidden, vec![512, 512]);
    assert_eq!(cfg.model.decoder_hidden, vec![512, 512]);
    assert_eq!(cfg.model.latent_dim, 16);
    assert_eq!(cfg.model.marginal, MarginalChoice::Standard);
    assert_eq!(cfg.train.beta, 1.0);
    assert_eq!(cfg.train.epochs, 20);
    assert_eq!(cfg.train.lr, 1e-3);
    assert_eq!(cfg.train.batch, 128);
    assert_eq!(cfg.train.seed, 0);
    assert_eq!(cfg.train.rate_samples, 16);
    assert_eq!(cfg.probe.epochs, 100);
    assert_eq!(cfg.probe.lr, 1e-4);
    assert_eq!(cfg.probe.decay_every, 25);
    assert_eq!(cfg.probe.decay_factor, 0.1);
    assert_eq!(cfg.baselines.pca_k, 30);
    assert_eq!(cfg.baselines.h_x, 79.78);
    assert_eq!(cfg.baselines.discard_floor, 0.0);
    assert_eq!(cfg.sweep.betas, vec![1.0]);
    assert_eq!(cfg.sweep.seeds, vec![0]);
    assert_eq!(cfg.out, PathBuf::from("runs"));
}

#[test]
fn validation_errors_name_the_key_path() {
    let err = parse_err(&json!({"dataset": {"kind": "synth"}, "train": {"beta": -1}}));
    assert!(err.contains("train.beta must be >= 0"), "{err}");

    let err = parse_err(&json!({"dataset": {"kind": "synth"}, "train": {"beta": 1}, "modle": {}}));
    assert!(err.contains("modle"), "{err}");

    let err =
        parse_err(&json!({"dataset": {"kind": "synth"}, "train": {"beta": 1, "betta": 2}}));
    assert!(err.contains("train.betta"), "{err}");

    let err = parse_err(&json!({"dataset": {"kind": "hdf5"}, "train": {"beta": 1}}));
    assert!(err.contains("dataset.kind"), "{err}");

    let err = parse_err(&json!({
        "dataset": {"kind": "synth"},
        "train": {"beta": 1},
        "probe": {"decay_factor": 0.0}
    }));
    assert!(err.contains("probe.decay_factor"), "{err}");

    let err = parse_err(&json!({
        "dataset": {"kind": "synth"},
        "train": {"beta": 1},
        "baselines": {"pca_sigmas": [0.5, 0.0]}
    }));
    assert!(err.contains("baselines.pca_sigmas"), "{err}");

    let err = parse_err(&json!({
        "dataset": {"kind": "synth"},
        "train": {"beta": 1},
        "model": {"components": 5}
    }));
    assert!(err.contains("model.components"), "{err}");

    let err = parse_err(&json!({
        "dataset": {
            "kind": "idx",
            "train_images": "a", "train_labels": "b",
            "eval_images": "c", "eval_labels": "d",
            "binarize_seed": 4
        },
        "train": {"beta": 1}
    }));
    assert!(err.contains("dataset.binarize_seed"), "{err}");

    let missing = parse_err(&json!({"dataset": {"kind": "synth"}}));
    assert!(missing.contains("train.beta is required"), "{missing}");
}

#[test]
fn syntax_errors_carry_the_line() {
    let err = ConfigTree::from_text("{\n  \"dataset\": oops\n}").expect_err("bad json");
    match err {
        Error::Parse { detail, .. } => assert!(detail.contains("line 2"), "{detail}"),
        other => panic!("expected parse error, got {other}"),
    }
}

#[test]
fn run_ids_are_pure_and_distinguish_content() {
    let base = json!({"dataset": {"kind": "synth"}, "train": {"beta": 1}});
    let a = run_id_for("train", &parse(&base));
    let b = run_id_for("train", &parse(&base));
    assert_eq!(a, b);
    assert_eq!(a.len(), 16);

    // The output directory and sweep lists are plumbing, not content.
    let mut moved = parse(&base);
    moved.out = PathBuf::from("elsewhere");
    moved.sweep.betas = vec![1.0, 2.0];
    assert_eq!(run_id_for("train", &moved), a);

    let reseeded = parse(&base).with_beta_seed(1.0, 9);
    assert_ne!(run_id_for("train", &reseeded), a);
    let reweighted = parse(&base).with_beta_seed(2.0, 0);
    assert_ne!(run_id_for("train", &reweighted), a);
    assert_ne!(run_id_for("baseline-pca", &parse(&base)), a);
}

#[test]
fn run_directory_lifecycle() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = parse(&mini_json(tmp.path()));
    let data = build_dataset(&cfg.dataset).unwrap();

    let first = run_experiment(&cfg, &data, &RunOptions::default()).unwrap();
    assert_eq!(first.status, RunStatus::Completed);
    assert!(!first.reused);
    for file in [MANIFEST_FILE, METRICS_FILE, PROBE_FILE, WEIGHTS_FILE] {
        assert!(first.dir.join(file).exists(), "missing {file}");
    }
    let manifest = RunManifest::read(&first.dir).unwrap().unwrap();
    assert_eq!(manifest.run_id, first.run_id);
    assert_eq!(manifest.command, "train");
    assert_eq!(manifest.classes, 10);
    assert_eq!(manifest.status, RunStatus::Completed);

    let metrics = read_metrics_csv(&first.dir.join(METRICS_FILE)).unwrap();
    assert_eq!(metrics.len(), 2, "epoch 0 snapshot plus one trained epoch");
    for pair in metrics.windows(2) {
        assert!(pair[1].epoch > pair[0].epoch);
    }
    for row in &metrics {
        assert!(row.rate_nats.is_finite() && row.distortion_nats.is_finite());
        assert_eq!(row.run_id, first.run_id);
    }

    // Rerun without force is a no-op; with force the bytes come out equal.
    let again = run_experiment(&cfg, &data, &RunOptions::default()).unwrap();
    assert!(again.reused);
    let before = std::fs::read(first.dir.join(METRICS_FILE)).unwrap();
    let probe_before = std::fs::read(first.dir.join(PROBE_FILE)).unwrap();
    let forced = run_experiment(&cfg, &data, &RunOptions { force: true }).unwrap();
    assert!(!forced.reused);
    assert_eq!(std::fs::read(first.dir.join(METRICS_FILE)).unwrap(), before);
    assert_eq!(std::fs::read(first.dir.join(PROBE_FILE)).unwrap(), probe_before);
}

#[test]
fn zero_epoch_run_keeps_the_initialization_row() {
    let tmp = tempfile::tempdir().unwrap();
    let mut body = mini_json(tmp.path());
    body["train"]["epochs"] = json!(0);
    let cfg = parse(&body);
    let data = build_dataset(&cfg.dataset).unwrap();
    let summary = run_experiment(&cfg, &data, &RunOptions::default()).unwrap();
    let metrics = read_metrics_csv(&summary.dir.join(METRICS_FILE)).unwrap();
    assert_eq!(metrics.len(), 1);
    assert_eq!(metrics[0].epoch, 0);
}

#[test]
fn diverged_run_is_recorded_not_retried() {
    let tmp = tempfile::tempdir().unwrap();
    let mut body = mini_json(tmp.path());
    body["train"]["lr"] = json!(1e20);
    body["train"]["epochs"] = json!(3);
    let cfg = parse(&body);
    let data = build_dataset(&cfg.dataset).unwrap();

    let summary = run_experiment(&cfg, &data, &RunOptions::default()).unwrap();
    assert_eq!(summary.status, RunStatus::AbortedNan);
    let manifest = RunManifest::read(&summary.dir).unwrap().unwrap();
    assert_eq!(manifest.status, RunStatus::AbortedNan);
    assert!(!summary.dir.join(PROBE_FILE).exists(), "no probe for a diverged encoder");
    let metrics = read_metrics_csv(&summary.dir.join(METRICS_FILE)).unwrap();
    assert!(metrics.iter().all(|r| r.loss_nats.is_finite()), "only finite rows are kept");

    let again = run_experiment(&cfg, &data, &RunOptions::default()).unwrap();
    assert!(again.reused, "aborted runs are not silently retried");
    assert_eq!(again.status, RunStatus::AbortedNan);
}

#[test]
fn manifests_are_immutable() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = parse(&mini_json(tmp.path()));
    let manifest =
        RunManifest::new("00ff00ff00ff00ff", "train", &cfg, 10, RunStatus::Completed, 1, 2)
            .unwrap();
    manifest.write(tmp.path()).unwrap();
    let err = manifest.write(tmp.path()).expect_err("second write must fail");
    assert!(err.to_string().contains("immutable"), "{err}");
    let read = RunManifest::read(tmp.path()).unwrap().unwrap();
    assert_eq!(read.run_id, "00ff00ff00ff00ff");
    assert_eq!(read.classes, 10);
}

#[test]
fn sweep_covers_the_grid_in_order_and_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let mut body = mini_json(tmp.path());
    body["sweep"] = json!({"betas": [2.0, 1.0], "seeds": [1, 0]});
    let cfg = parse(&body);
    let data = build_dataset(&cfg.dataset).unwrap();

    let (path, rows) = run_sweep(&cfg, &data, 2, &RunOptions::default()).unwrap();
    assert_eq!(rows.len(), 4);
    let order: Vec<(f64, u64)> = rows.iter().map(|r| (r.beta, r.seed)).collect();
    assert_eq!(order, vec![(1.0, 0), (1.0, 1), (2.0, 0), (2.0, 1)]);
    for row in &rows {
        assert_eq!(row.status, RunStatus::Completed);
        assert!(row.rate_nats.unwrap().is_finite());
        assert_eq!(row.epoch, Some(1));
    }

    let bytes = std::fs::read(&path).unwrap();
    let (_, rows2) = run_sweep(&cfg, &data, 1, &RunOptions::default()).unwrap();
    assert_eq!(rows2.len(), 4);
    assert_eq!(std::fs::read(&path).unwrap(), bytes, "rerun must be byte-identical");
}

#[test]
fn sweep_records_diverged_cells_and_continues() {
    let tmp = tempfile::tempdir().unwrap();
    let mut body = mini_json(tmp.path());
    body["train"]["lr"] = json!(1e20);
    body["sweep"] = json!({"betas": [1.0, 2.0], "seeds": [0]});
    let cfg = parse(&body);
    let data = build_dataset(&cfg.dataset).unwrap();
    let (path, rows) = run_sweep(&cfg, &data, 1, &RunOptions::default()).unwrap();
    assert_eq!(rows.len(), 2);
    for row in &rows {
        assert_eq!(row.status, RunStatus::AbortedNan);
        assert!(row.loss_nats.unwrap().is_finite(), "last finite row is kept");
    }
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 3, "header plus one row per cell");
    assert!(text.contains("aborted-nan"));
}

#[test]
fn report_merges_sources_and_is_pure() {
    let tmp = tempfile::tempdir().unwrap();
    let mut body = mini_json(tmp.path());
    body["baselines"] = json!({"random_kind": "fc"});
    let cfg = parse(&body);
    let data = build_dataset(&cfg.dataset).unwrap();
    run_experiment(&cfg, &data, &RunOptions::default()).unwrap();
    run_baseline(BaselineKind::RandomEncoder, &cfg, &data, &RunOptions::default()).unwrap();
    run_baseline(BaselineKind::DiscardLine, &cfg, &data, &RunOptions::default()).unwrap();

    let report_dir = emit_report(&cfg).unwrap();
    assert_eq!(report_dir, tmp.path().join(REPORT_DIR));

    let c_vs_r = std::fs::read_to_string(report_dir.join(C_VS_R_FILE)).unwrap();
    let lines: Vec<&str> = c_vs_r.lines().collect();
    assert_eq!(lines.len(), 3, "header, vae row, random row");
    assert!(lines[1].starts_with("vae,"), "vae row sorts first by rate: {}", lines[1]);
    assert!(lines[2].starts_with("random-fc,"), "{}", lines[2]);
    assert!(lines[2].contains(",79.780000,"), "references sit at H_X: {}", lines[2]);
    assert!(lines[2].ends_with(",1.000000"), "uncompressed factor is 1: {}", lines[2]);

    let discard = std::fs::read_to_string(report_dir.join(DISCARD_FILE)).unwrap();
    let dlines: Vec<&str> = discard.lines().collect();
    assert_eq!(dlines.len(), 101, "header plus 100 samples");
    assert_eq!(dlines[1], "0.000000,2.302585,3.321928");
    assert_eq!(dlines[100], "79.780000,0.000000,0.000000");

    // Purity: a second emission reproduces every byte.
    let read_all = |dir: &Path| -> Vec<(String, Vec<u8>)> {
        [C_VS_R_FILE, C_VS_D_FILE, "pca_frontier.csv", DISCARD_FILE, SUMMARY_FILE]
            .iter()
            .map(|f| (f.to_string(), std::fs::read(dir.join(f)).unwrap()))
            .collect()
    };
    let before = read_all(&report_dir);
    emit_report(&cfg).unwrap();
    assert_eq!(read_all(&report_dir), before);
}

#[test]
fn report_names_missing_files_and_requires_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = parse(&mini_json(tmp.path()));
    std::fs::create_dir_all(&cfg.out).unwrap();
    let err = emit_report(&cfg).expect_err("empty out dir");
    assert!(err.to_string().contains("no completed runs"), "{err}");

    let data = build_dataset(&cfg.dataset).unwrap();
    let summary = run_experiment(&cfg, &data, &RunOptions::default()).unwrap();
    std::fs::remove_file(summary.dir.join(METRICS_FILE)).unwrap();
    let err = emit_report(&cfg).expect_err("missing metrics");
    assert!(err.to_string().contains(METRICS_FILE), "{err}");
    assert!(err.to_string().contains(&summary.run_id), "{err}");
}

#[test]
fn baseline_directories_reuse_like_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = parse(&mini_json(tmp.path()));
    let data = build_dataset(&cfg.dataset).unwrap();
    let first = run_baseline(BaselineKind::DiscardLine, &cfg, &data, &RunOptions::default()).unwrap();
    assert!(first.dir.join(DISCARD_FILE).exists());
    let again = run_baseline(BaselineKind::DiscardLine, &cfg, &data, &RunOptions::default()).unwrap();
    assert!(again.reused);
    assert_eq!(again.run_id, first.run_id);

    let random = run_baseline(BaselineKind::RandomEncoder, &cfg, &data, &RunOptions::default()).unwrap();
    assert_ne!(random.run_id, first.run_id, "commands hash apart");
    let text = std::fs::read_to_string(random.dir.join(BASELINE_FILE)).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("random-fc,"), "{text}");
}

#[test]
fn arguments_parse_into_commands_and_flags() {
    let cli = parse_args(&args(&[
        "sweep", "--config", "c.json", "--out", "o", "--seed", "7", "--force", "--threads", "3",
    ]))
    .unwrap();
    assert_eq!(cli.command, Command::Sweep);
    assert_eq!(cli.config, Some(PathBuf::from("c.json")));
    assert_eq!(cli.out, Some(PathBuf::from("o")));
    assert_eq!(cli.seed, Some(7));
    assert!(cli.force);
    assert_eq!(cli.threads, 3);

    let cli = parse_args(&args(&["baseline", "pca", "--config", "c.json"])).unwrap();
    assert_eq!(cli.command, Command::Baseline(BaselineKind::Pca));
    assert_eq!(parse_args(&args(&["--help"])).unwrap().command, Command::Help);

    for bad in [
        vec!["frobnicate"],
        vec!["train", "--fast"],
        vec!["train", "--seed"],
        vec!["train", "--seed", "x"],
        vec!["train", "--threads", "0"],
        vec!["baseline"],
        vec!["baseline", "kmeans"],
        vec![],
    ] {
        let failure = parse_args(&args(&bad)).expect_err("must fail");
        assert_eq!(failure.exit, 1, "{bad:?}");
    }
}

#[test]
fn exit_codes_follow_the_contract() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("cfg.json");
    let out = tmp.path().join("runs");
    let mut body = mini_json(&out);
    body["train"]["epochs"] = json!(0);
    body["probe"]["epochs"] = json!(0);
    std::fs::write(&cfg_path, body.to_string()).unwrap();
    let cfg_arg = cfg_path.display().to_string();

    assert_eq!(run_cli(&args(&["train", "--config", &cfg_arg, "--seed", "9"])), 0);
    // The seed override lands in the manifest.
    let run_dirs: Vec<PathBuf> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    assert_eq!(run_dirs.len(), 1);
    assert_eq!(RunManifest::read(&run_dirs[0]).unwrap().unwrap().seed, 9);

    assert_eq!(run_cli(&args(&["train"])), 1, "missing --config is a usage error");
    assert_eq!(run_cli(&args(&["train", "--config", "/no/such.json"])), 1);

    let bad_data = tmp.path().join("bad.json");
    std::fs::write(
        &bad_data,
        json!({
            "dataset": {
                "kind": "idx",
                "train_images": "/no/img", "train_labels": "/no/lab",
                "eval_images": "/no/img2", "eval_labels": "/no/lab2"
            },
            "train": {"beta": 1},
            "out": out.display().to_string(),
        })
        .to_string(),
    )
    .unwrap();
    assert_eq!(run_cli(&args(&["train", "--config", &bad_data.display().to_string()])), 2);

    let nan_cfg = tmp.path().join("nan.json");
    let mut body = mini_json(&out);
    body["train"]["lr"] = json!(1e20);
    body["train"]["epochs"] = json!(2);
    std::fs::write(&nan_cfg, body.to_string()).unwrap();
    assert_eq!(run_cli(&args(&["train", "--config", &nan_cfg.display().to_string()])), 3);
}
