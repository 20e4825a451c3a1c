//! End-to-end command-line pipeline: generate → validate → train → evaluate
//! → plot → report → ablate, exercised through the real binary on a scaled-
//! down benchmark.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_mensa")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Small benchmark + fast training settings shared by the pipeline tests.
fn write_config(dir: &Path) -> PathBuf {
    let path = dir.join("pipeline.cfg");
    let text = format!(
        "data.root = {}\n\
         out.dir = {}\n\
         data.points = 32\n\
         synth.per_class = 12\n\
         synth.test_per_class = 6\n\
         synth.surface_points = 256\n\
         synth.classes = sphere,box\n\
         train.epochs = 2\n\
         train.batch_size = 8\n\
         train.folds = 1\n\
         model.widths = 16,24\n\
         model.embed_dim = 20\n\
         model.attention_nodes = 2\n",
        dir.join("data").display(),
        dir.join("runs").display()
    );
    fs::write(&path, text).unwrap();
    path
}

fn collect_tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                files.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn full_pipeline_produces_all_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let cfg = cfg.to_str().unwrap();

    // generate-data: default 3 domains, then the layout checks out.
    assert_ok(&run(&["generate-data", "--config", cfg]));
    for domain in ["clean", "noisy", "sparse"] {
        let dir = tmp.path().join("data").join(domain);
        assert!(dir.is_dir(), "missing domain dir {domain}");
        assert!(dir.join("manifest.txt").is_file(), "missing per-domain manifest");
        for class in ["sphere", "box"] {
            assert!(dir.join(class).join("train").is_dir());
            assert!(dir.join(class).join("test").is_dir());
        }
    }
    assert!(tmp.path().join("data").join("manifest.txt").is_file());
    let out = run(&["validate-layout", "--config", cfg]);
    assert_ok(&out);
    let text = stdout(&out);
    assert!(text.contains("domain clean: 2 classes, 24 train / 12 test files"), "{text}");
    assert!(text.contains("layout ok"), "{text}");

    // Regenerating without --force refuses; with --force succeeds.
    let out = run(&["generate-data", "--config", cfg]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    assert!(stderr(&out).contains("--force"), "{}", stderr(&out));
    assert_ok(&run(&["generate-data", "--config", cfg, "--force"]));

    // train writes config dump, checkpoint, losses, report.
    let out = run(&["train", "--config", cfg, "--mixup", "mensa", "--seed", "3"]);
    assert_ok(&out);
    let run_dir = tmp.path().join("runs").join("mtda_mensa_s3");
    for file in ["config.txt", "model.ckpt", "losses.csv", "report.json"] {
        assert!(run_dir.join(file).is_file(), "missing {file}");
    }
    let text = stdout(&out);
    assert!(text.contains("noisy:"), "{text}");
    assert!(text.contains("sparse:"), "{text}");
    assert!(text.contains("average:"), "{text}");

    // Rerunning into the same directory requires --force.
    let out = run(&["train", "--config", cfg, "--mixup", "mensa", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(1));

    // The losses CSV has one row per epoch and the expected header.
    let csv = fs::read_to_string(run_dir.join("losses.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "epoch,loss_cls,loss_dc,loss_mmd,loss_mixup,loss_total,eta");
    assert_eq!(lines.len(), 3);

    // evaluate reads the checkpoint back on each domain.
    let ckpt = run_dir.join("model.ckpt");
    let out = run(&[
        "evaluate",
        "--config",
        cfg,
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--domain",
        "noisy",
    ]);
    assert_ok(&out);
    let text = stdout(&out);
    assert!(text.contains("accuracy:"), "{text}");
    assert!(text.contains("class sphere:"), "{text}");

    // plot renders both charts, byte-identical across invocations.
    assert_ok(&run(&["plot", "--config", cfg, run_dir.to_str().unwrap()]));
    let losses_svg = fs::read(run_dir.join("losses.svg")).unwrap();
    let eta_svg = fs::read(run_dir.join("eta.svg")).unwrap();
    assert_ok(&run(&["plot", "--config", cfg, run_dir.to_str().unwrap()]));
    assert_eq!(losses_svg, fs::read(run_dir.join("losses.svg")).unwrap());
    assert_eq!(eta_svg, fs::read(run_dir.join("eta.svg")).unwrap());
    assert!(String::from_utf8_lossy(&eta_svg).contains("closed form"));

    // A second strategy plus report: two rows, shared columns.
    let out = run(&["train", "--config", cfg, "--mixup", "none", "--seed", "3"]);
    assert_ok(&out);
    let none_dir = tmp.path().join("runs").join("mtda_none_s3");
    let out = run(&[
        "report",
        "--config",
        cfg,
        run_dir.to_str().unwrap(),
        none_dir.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let md = fs::read_to_string(tmp.path().join("runs").join("comparison.md")).unwrap();
    assert!(md.contains("| Method | clean→noisy | clean→sparse | Average |"), "{md}");
    assert!(md.contains("| mensa |"), "{md}");
    assert!(md.contains("| none |"), "{md}");
    let csv = fs::read_to_string(tmp.path().join("runs").join("comparison.csv")).unwrap();
    assert!(csv.starts_with("method,clean->noisy,clean->sparse,average\n"), "{csv}");
    assert_eq!(csv.lines().count(), 3);

    // Report over a missing run warns but still succeeds.
    let out = run(&[
        "report",
        "--config",
        cfg,
        run_dir.to_str().unwrap(),
        tmp.path().join("runs").join("ghost").to_str().unwrap(),
    ]);
    assert_ok(&out);
    assert!(stderr(&out).contains("skipping"), "{}", stderr(&out));
}

#[test]
fn dataset_generation_is_byte_identical_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let cfg = cfg.to_str().unwrap();

    assert_ok(&run(&["generate-data", "--config", cfg, "--seed", "7"]));
    let first = collect_tree(&tmp.path().join("data"));
    assert_ok(&run(&["generate-data", "--config", cfg, "--seed", "7", "--force"]));
    let second = collect_tree(&tmp.path().join("data"));
    assert_eq!(first.len(), second.len());
    for ((name_a, bytes_a), (name_b, bytes_b)) in first.iter().zip(&second) {
        assert_eq!(name_a, name_b);
        assert_eq!(bytes_a, bytes_b, "file {name_a} differs between generations");
    }

    // A different seed changes the point data.
    assert_ok(&run(&["generate-data", "--config", cfg, "--seed", "8", "--force"]));
    let third = collect_tree(&tmp.path().join("data"));
    assert!(
        first
            .iter()
            .zip(&third)
            .any(|((_, a), (_, b))| a != b),
        "different seeds produced identical datasets"
    );
}

#[test]
fn invalid_synth_key_is_rejected_by_name() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("bad.cfg");
    fs::write(
        &cfg_path,
        format!(
            "data.root = {}\nsynth.sparse.occlusion_fraction = 1.5\n",
            tmp.path().join("data").display()
        ),
    )
    .unwrap();
    let out = run(&["generate-data", "--config", cfg_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("occlusion"), "{err}");
    assert!(err.contains("1.5"), "{err}");
}

#[test]
fn dumped_config_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let cfg = cfg.to_str().unwrap();
    assert_ok(&run(&["generate-data", "--config", cfg]));
    assert_ok(&run(&["train", "--config", cfg, "--mixup", "factor", "--seed", "5"]));
    let first_dir = tmp.path().join("runs").join("mtda_factor_s5");
    let dumped = first_dir.join("config.txt");

    // Feed the dumped effective config back in, into a fresh output dir.
    let out = run(&[
        "train",
        "--config",
        dumped.to_str().unwrap(),
        "--name",
        "replay",
        "--out",
        tmp.path().join("runs2").to_str().unwrap(),
    ]);
    assert_ok(&out);
    let second_dir = tmp.path().join("runs2").join("replay");
    let a = fs::read(first_dir.join("model.ckpt")).unwrap();
    let b = fs::read(second_dir.join("model.ckpt")).unwrap();
    assert_eq!(a, b, "checkpoint bytes differ under the dumped config");
    let ra = fs::read_to_string(first_dir.join("report.json")).unwrap();
    let rb = fs::read_to_string(second_dir.join("report.json")).unwrap();
    assert_eq!(ra, rb, "reports differ under the dumped config");
}

#[test]
fn no_adaptation_runs_log_zero_adaptation_losses() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let cfg = cfg.to_str().unwrap();
    assert_ok(&run(&["generate-data", "--config", cfg]));
    let out = run(&["train", "--config", cfg, "--mode", "no_adaptation"]);
    assert_ok(&out);
    let run_dir = tmp.path().join("runs").join("no_adaptation_mensa_s0");
    let csv = fs::read_to_string(run_dir.join("losses.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[2], "0", "dc loss should be zero: {line}");
        assert_eq!(fields[3], "0", "mmd loss should be zero: {line}");
        assert_eq!(fields[4], "0", "mixup loss should be zero: {line}");
        assert!(fields[1].parse::<f64>().unwrap() > 0.0);
    }
}

#[test]
fn ablate_smoke_writes_grid_and_table() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let cfg = cfg.to_str().unwrap();
    assert_ok(&run(&["generate-data", "--config", cfg]));
    let out = run(&["ablate", "--config", cfg, "--epochs", "1"]);
    assert_ok(&out);
    let dir = tmp.path().join("runs").join("ablate_mtda_mensa_s0");
    for mask in ["dc", "mmd", "mix", "dc+mmd", "dc+mix", "mmd+mix", "dc+mmd+mix"] {
        assert!(dir.join(mask).join("report.json").is_file(), "missing subset {mask}");
        assert!(dir.join(mask).join("losses.csv").is_file());
    }
    let md = fs::read_to_string(dir.join("ablation.md")).unwrap();
    assert_eq!(md.lines().count(), 9, "{md}");
    assert!(md.contains("| dc+mmd+mix |"), "{md}");
    let csv = fs::read_to_string(dir.join("ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 8, "{csv}");
}
