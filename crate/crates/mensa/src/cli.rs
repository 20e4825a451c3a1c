//! Command-line entry point.
//!
//! Commands cover the whole experiment lifecycle: benchmark generation,
//! training, checkpoint evaluation, the loss-term ablation grid, cross-run
//! comparison tables, chart rendering, and dataset-layout validation.
//! Configuration flows from profile defaults through an optional config file
//! to command-line overrides, and every run directory receives a dump of the
//! effective configuration that reproduces the run when fed back in.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::config::{help_text, Profile, RunConfig};
use crate::data::npy::{export_domain, load_domain_dir, validate_layout, write_manifest};
use crate::data::synthetic::generate_domain;
use crate::data::Split;
use crate::error::{Error, Result};
use crate::plot::plot_run;
use crate::report::{build_table, render_csv, render_markdown, ComparisonRow, ComparisonTable, REPORT_FILE};
use crate::trainer::{
    evaluate_top1, load_checkpoint, run_ablation, save_checkpoint, train_mtda, write_losses_csv,
    Corpus,
};

/// Effective-configuration dump written into every run directory.
pub const CONFIG_FILE: &str = "config.txt";
/// Checkpoint file written by `train`.
pub const CHECKPOINT_FILE: &str = "model.ckpt";
/// Per-epoch loss table written by `train` and `ablate`.
pub const LOSSES_FILE: &str = "losses.csv";

#[derive(Parser)]
#[command(
    name = "mensa",
    version,
    about = "Multi-target domain adaptation for 3D point clouds",
    after_help = help_text()
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    globals: GlobalArgs,
}

#[derive(Args)]
struct GlobalArgs {
    /// Plain-text `key = value` configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master seed, overriding `train.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Scale preset: `desk` for minutes-long CPU runs, `paper` for the
    /// full-size protocol.
    #[arg(long, global = true, default_value = "desk")]
    profile: String,
    /// Output directory, overriding `out.dir`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Replace existing outputs instead of refusing to overwrite.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic multi-domain benchmark under `data.root`.
    #[command(after_help = help_text())]
    GenerateData,
    /// Train one experiment and write checkpoint, losses, and report.
    #[command(after_help = help_text())]
    Train(TrainArgs),
    /// Evaluate a checkpoint on one domain's split.
    #[command(after_help = help_text())]
    Evaluate(EvaluateArgs),
    /// Train every loss-term subset and tabulate the grid.
    #[command(after_help = help_text())]
    Ablate(TrainArgs),
    /// Combine completed runs into one comparison table.
    #[command(after_help = help_text())]
    Report(ReportArgs),
    /// Render loss and ramp charts for a completed run.
    #[command(after_help = help_text())]
    Plot(PlotArgs),
    /// Check that a dataset directory has the expected layout.
    #[command(after_help = help_text())]
    ValidateLayout(ValidateArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Mixing strategy, overriding `mixup.strategy`.
    #[arg(long)]
    mixup: Option<String>,
    /// Training mode, overriding `train.mode`.
    #[arg(long)]
    mode: Option<String>,
    /// Epochs per fold, overriding `train.epochs`.
    #[arg(long)]
    epochs: Option<usize>,
    /// Fold count, overriding `train.folds`.
    #[arg(long)]
    folds: Option<usize>,
    /// Source domain, overriding `data.source`.
    #[arg(long)]
    source: Option<String>,
    /// Comma-separated target domains, overriding `data.targets`.
    #[arg(long)]
    targets: Option<String>,
    /// Run directory name (default derived from mode, strategy, and seed).
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Checkpoint file to evaluate.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Domain whose split is evaluated.
    #[arg(long)]
    domain: String,
    /// Split to evaluate: train | test.
    #[arg(long, default_value = "test")]
    split: String,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directories (or report files) to combine.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Run directory containing the loss CSV.
    run_dir: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    /// Dataset root to check (default: `data.root`).
    root: Option<PathBuf>,
}

/// Parse real process arguments, execute, and return the exit code.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

/// Like [`run`], but over explicit arguments.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let profile = Profile::parse(&cli.globals.profile)?;
    let mut cfg = RunConfig::new(profile);
    if let Some(path) = &cli.globals.config {
        if !path.is_file() {
            return Err(Error::Config(format!(
                "config file {} does not exist",
                path.display()
            )));
        }
        cfg.apply_file(path)?;
    }
    if let Command::Train(args) | Command::Ablate(args) = &cli.command {
        apply_train_args(&mut cfg, args)?;
    }
    if let Some(seed) = cli.globals.seed {
        cfg.apply("train.seed", &seed.to_string())?;
    }
    if let Some(out) = &cli.globals.out {
        cfg.apply("out.dir", &out.display().to_string())?;
    }
    let force = cli.globals.force;
    match cli.command {
        Command::GenerateData => cmd_generate_data(&cfg, force),
        Command::Train(args) => cmd_train(&cfg, force, args.name.as_deref()),
        Command::Evaluate(args) => cmd_evaluate(&cfg, &args),
        Command::Ablate(args) => cmd_ablate(&cfg, force, args.name.as_deref()),
        Command::Report(args) => cmd_report(&cfg, &args.runs),
        Command::Plot(args) => cmd_plot(&cfg, &args.run_dir),
        Command::ValidateLayout(args) => cmd_validate_layout(&cfg, args.root.as_deref()),
    }
}

fn apply_train_args(cfg: &mut RunConfig, args: &TrainArgs) -> Result<()> {
    if let Some(v) = &args.mixup {
        cfg.apply("mixup.strategy", v)?;
    }
    if let Some(v) = &args.mode {
        cfg.apply("train.mode", v)?;
    }
    if let Some(v) = args.epochs {
        cfg.apply("train.epochs", &v.to_string())?;
    }
    if let Some(v) = args.folds {
        cfg.apply("train.folds", &v.to_string())?;
    }
    if let Some(v) = &args.source {
        cfg.apply("data.source", v)?;
    }
    if let Some(v) = &args.targets {
        cfg.apply("data.targets", v)?;
    }
    Ok(())
}

// ── generate-data ───────────────────────────────────────────────────────────

fn dir_is_nonempty(path: &Path) -> Result<bool> {
    if !path.exists() {
        return Ok(false);
    }
    let mut entries = fs::read_dir(path).map_err(|e| Error::io(path, e))?;
    Ok(entries.next().is_some())
}

fn cmd_generate_data(cfg: &RunConfig, force: bool) -> Result<()> {
    cfg.validate()?;
    let root = &cfg.data_root;
    if dir_is_nonempty(root)? {
        if !force {
            return Err(Error::Config(format!(
                "data directory {} is not empty; pass --force to replace it",
                root.display()
            )));
        }
        fs::remove_dir_all(root).map_err(|e| Error::io(root, e))?;
    }
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;

    let spec = cfg.synth.to_spec(cfg.points, cfg.train.seed);
    for (domain_id, shift_cfg) in cfg.synth.domains.iter().enumerate() {
        let shift = shift_cfg.to_shift();
        for split in [Split::Train, Split::Test] {
            let ds = generate_domain(&spec, &shift, domain_id, split)?;
            export_domain(&ds, root)?;
        }
        let entries = vec![
            ("domain".to_string(), shift_cfg.name.clone()),
            ("density_keep".to_string(), shift_cfg.density_keep.to_string()),
            ("jitter_sigma".to_string(), shift_cfg.jitter_sigma.to_string()),
            ("occlusion_fraction".to_string(), shift_cfg.occlusion_fraction.to_string()),
            ("rot_x_deg".to_string(), shift_cfg.rot_x_deg.to_string()),
            ("rot_y_deg".to_string(), shift_cfg.rot_y_deg.to_string()),
            ("rot_z_deg".to_string(), shift_cfg.rot_z_deg.to_string()),
            ("rot_x_bias_deg".to_string(), shift_cfg.rot_x_bias_deg.to_string()),
            ("rot_y_bias_deg".to_string(), shift_cfg.rot_y_bias_deg.to_string()),
            ("rot_z_bias_deg".to_string(), shift_cfg.rot_z_bias_deg.to_string()),
            ("train_per_class".to_string(), cfg.synth.per_class.to_string()),
            ("test_per_class".to_string(), cfg.synth.test_per_class.to_string()),
            ("points".to_string(), cfg.points.to_string()),
            ("seed".to_string(), cfg.train.seed.to_string()),
        ];
        write_manifest(&root.join(&shift_cfg.name).join("manifest.txt"), &entries)?;
    }
    let classes: Vec<String> = cfg.synth.classes.iter().map(|c| c.name().to_string()).collect();
    let domains: Vec<String> = cfg.synth.domains.iter().map(|d| d.name.clone()).collect();
    let entries = vec![
        ("domains".to_string(), domains.join(",")),
        ("classes".to_string(), classes.join(",")),
        ("train_per_class".to_string(), cfg.synth.per_class.to_string()),
        ("test_per_class".to_string(), cfg.synth.test_per_class.to_string()),
        ("points".to_string(), cfg.points.to_string()),
        ("surface_points".to_string(), cfg.synth.surface_points.to_string()),
        ("seed".to_string(), cfg.train.seed.to_string()),
    ];
    write_manifest(&root.join("manifest.txt"), &entries)?;
    println!(
        "generated {} domains x {} classes ({} train + {} test per class) under {}",
        domains.len(),
        classes.len(),
        cfg.synth.per_class,
        cfg.synth.test_per_class,
        root.display()
    );
    Ok(())
}

// ── train ───────────────────────────────────────────────────────────────────

fn prepare_run_dir(cfg: &RunConfig, name: &str, force: bool) -> Result<PathBuf> {
    let run_dir = cfg.out_dir.join(name);
    if dir_is_nonempty(&run_dir)? && !force {
        return Err(Error::Config(format!(
            "run directory {} is not empty; pass --force to overwrite",
            run_dir.display()
        )));
    }
    fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;
    fs::write(run_dir.join(CONFIG_FILE), cfg.dump())
        .map_err(|e| Error::io(&run_dir.join(CONFIG_FILE), e))?;
    Ok(run_dir)
}

fn load_corpus(cfg: &RunConfig) -> Result<Corpus> {
    Corpus::load(
        &cfg.data_root,
        &cfg.experiment.source,
        &cfg.experiment.targets,
        cfg.points,
        cfg.train.seed,
    )
}

fn default_run_name(cfg: &RunConfig, prefix: Option<&str>) -> String {
    format!(
        "{}{}_{}_s{}",
        prefix.unwrap_or(""),
        cfg.experiment.mode.name(),
        cfg.experiment.mixup.strategy.name(),
        cfg.train.seed
    )
}

fn cmd_train(cfg: &RunConfig, force: bool, name: Option<&str>) -> Result<()> {
    cfg.validate()?;
    let name = match name {
        Some(n) => n.to_string(),
        None => default_run_name(cfg, None),
    };
    let run_dir = prepare_run_dir(cfg, &name, force)?;
    let corpus = load_corpus(cfg)?;
    let outcome = train_mtda(&corpus, &cfg.experiment, &cfg.train, &cfg.encoder)?;
    save_checkpoint(&outcome.model, &outcome.opt, &run_dir.join(CHECKPOINT_FILE))?;
    write_losses_csv(&run_dir.join(LOSSES_FILE), &outcome.report.epoch_losses)?;
    outcome.report.save(&run_dir.join(REPORT_FILE))?;
    for t in &outcome.report.targets {
        println!("{}: {:.2} ± {:.2}", t.name, t.mean, t.std);
    }
    println!("average: {:.2}", outcome.report.average);
    println!("run written to {}", run_dir.display());
    Ok(())
}

// ── evaluate ────────────────────────────────────────────────────────────────

fn cmd_evaluate(cfg: &RunConfig, args: &EvaluateArgs) -> Result<()> {
    let split = match args.split.as_str() {
        "train" => Split::Train,
        "test" => Split::Test,
        other => {
            return Err(Error::Config(format!(
                "unknown split `{other}`, expected train|test"
            )))
        }
    };
    let (model, _) = load_checkpoint(&args.checkpoint, None)?;
    let dataset = load_domain_dir(
        &cfg.data_root,
        &args.domain,
        0,
        split,
        cfg.points,
        cfg.train.seed,
    )?;
    if dataset.class_names.len() != model.cfg.n_classes {
        return Err(Error::Config(format!(
            "checkpoint classifies {} classes but domain `{}` has {}",
            model.cfg.n_classes,
            args.domain,
            dataset.class_names.len()
        )));
    }
    let result = evaluate_top1(&model, &dataset)?;
    println!("domain: {}", args.domain);
    println!("split: {}", args.split);
    println!("accuracy: {:.2}", result.accuracy);
    for (name, (acc, count)) in dataset
        .class_names
        .iter()
        .zip(result.per_class.iter().zip(&result.class_counts))
    {
        println!("class {name}: {acc:.2} ({count} samples)");
    }
    Ok(())
}

// ── ablate ──────────────────────────────────────────────────────────────────

fn cmd_ablate(cfg: &RunConfig, force: bool, name: Option<&str>) -> Result<()> {
    cfg.validate()?;
    let name = match name {
        Some(n) => n.to_string(),
        None => format!("ablate_{}", default_run_name(cfg, None)),
    };
    let run_dir = prepare_run_dir(cfg, &name, force)?;
    let corpus = load_corpus(cfg)?;
    let rows = run_ablation(&corpus, &cfg.experiment, &cfg.train, &cfg.encoder)?;

    let mut columns: Vec<String> = cfg
        .experiment
        .targets
        .iter()
        .map(|t| format!("{}→{}", cfg.experiment.source, t))
        .collect();
    columns.push("Average".to_string());
    let mut table = ComparisonTable { columns, rows: Vec::new(), warnings: Vec::new() };
    for (mask_name, report) in &rows {
        let subdir = run_dir.join(mask_name);
        fs::create_dir_all(&subdir).map_err(|e| Error::io(&subdir, e))?;
        report.save(&subdir.join(REPORT_FILE))?;
        write_losses_csv(&subdir.join(LOSSES_FILE), &report.epoch_losses)?;
        let mut cells: Vec<f64> = report.targets.iter().map(|t| t.mean).collect();
        cells.push(report.average);
        table.rows.push(ComparisonRow { label: mask_name.clone(), seed: report.seed, cells });
    }
    let md = render_markdown(&table);
    fs::write(run_dir.join("ablation.md"), &md)
        .map_err(|e| Error::io(&run_dir.join("ablation.md"), e))?;
    fs::write(run_dir.join("ablation.csv"), render_csv(&table))
        .map_err(|e| Error::io(&run_dir.join("ablation.csv"), e))?;
    print!("{md}");
    println!("ablation written to {}", run_dir.display());
    Ok(())
}

// ── report ──────────────────────────────────────────────────────────────────

fn cmd_report(cfg: &RunConfig, runs: &[PathBuf]) -> Result<()> {
    let table = build_table(runs)?;
    for w in &table.warnings {
        eprintln!("warning: {w}");
    }
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let md_path = cfg.out_dir.join("comparison.md");
    let csv_path = cfg.out_dir.join("comparison.csv");
    let md = render_markdown(&table);
    fs::write(&md_path, &md).map_err(|e| Error::io(&md_path, e))?;
    fs::write(&csv_path, render_csv(&table)).map_err(|e| Error::io(&csv_path, e))?;
    print!("{md}");
    println!("comparison written to {} and {}", md_path.display(), csv_path.display());
    Ok(())
}

// ── plot ────────────────────────────────────────────────────────────────────

fn cmd_plot(cfg: &RunConfig, run_dir: &Path) -> Result<()> {
    let csv = run_dir.join(LOSSES_FILE);
    if !csv.is_file() {
        return Err(Error::data(&csv, "loss CSV not found; run `train` first"));
    }
    // Prefer the run's own dumped configuration so the analytic overlay uses
    // the schedule the run actually trained with.
    let mut run_cfg = RunConfig::new(Profile::Desk);
    let dumped = run_dir.join(CONFIG_FILE);
    let (schedule, epochs) = if dumped.is_file() {
        run_cfg.apply_file(&dumped)?;
        (run_cfg.experiment.eta, run_cfg.train.epochs)
    } else {
        (cfg.experiment.eta, cfg.train.epochs)
    };
    let (losses_svg, eta_svg) = plot_run(&csv, run_dir, &schedule, epochs)?;
    println!("charts written to {} and {}", losses_svg.display(), eta_svg.display());
    Ok(())
}

// ── validate-layout ─────────────────────────────────────────────────────────

fn cmd_validate_layout(cfg: &RunConfig, root: Option<&Path>) -> Result<()> {
    let root = root.unwrap_or(&cfg.data_root);
    let summaries = validate_layout(root)?;
    for s in &summaries {
        let train: usize = s.counts.iter().map(|(t, _)| t).sum();
        let test: usize = s.counts.iter().map(|(_, t)| t).sum();
        println!(
            "domain {}: {} classes, {} train / {} test files",
            s.name,
            s.classes.len(),
            train,
            test
        );
    }
    println!("layout ok: {}", root.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(list: &[&str]) -> Vec<String> {
        std::iter::once("mensa").chain(list.iter().copied()).map(String::from).collect()
    }

    #[test]
    fn usage_and_config_errors_exit_one_help_exits_zero() {
        assert_eq!(run_from(args(&["--help"])), 0);
        assert_eq!(run_from(args(&["train", "--help"])), 0);
        assert_eq!(run_from(args(&["no-such-command"])), 1);
        assert_eq!(run_from(args(&["train", "--bogus-flag"])), 1);
        assert_eq!(run_from(args(&["train", "--profile", "galactic"])), 1);
        assert_eq!(run_from(args(&["train", "--mixup", "mashup"])), 1);
        // Missing config file is a configuration error.
        assert_eq!(run_from(args(&["train", "--config", "/no/such/file.cfg"])), 1);
    }

    #[test]
    fn missing_dataset_is_a_runtime_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("run.cfg");
        std::fs::write(
            &cfg_path,
            format!("data.root = {}\nout.dir = {}\n", dir.path().join("nodata").display(), dir.path().join("runs").display()),
        )
        .unwrap();
        let code = run_from(args(&["train", "--config", cfg_path.to_str().unwrap()]));
        assert_eq!(code, 2);
    }

    #[test]
    fn run_names_follow_mode_strategy_seed() {
        let mut cfg = RunConfig::new(Profile::Desk);
        assert_eq!(default_run_name(&cfg, None), "mtda_mensa_s0");
        cfg.apply("mixup.strategy", "none").unwrap();
        cfg.apply("train.seed", "7").unwrap();
        assert_eq!(default_run_name(&cfg, None), "mtda_none_s7");
        cfg.apply("train.mode", "no_adaptation").unwrap();
        assert_eq!(default_run_name(&cfg, None), "no_adaptation_none_s7");
    }
}
