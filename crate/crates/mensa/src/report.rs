//! Cross-run comparison tables.
//!
//! Collects the metrics reports of several completed runs into one table:
//! one row per run labeled by its method (the mixing strategy for adaptation
//! runs, the mode otherwise), one column per source→target pair, plus the
//! across-target average.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::trainer::MetricsReport;

/// Name of the per-run metrics file inside a run directory.
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub label: String,
    pub seed: u64,
    /// One accuracy per pair column, then the average.
    pub cells: Vec<f64>,
}

/// Rows of runs over identical column sets.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    /// Pair columns (`source→target`) followed by `Average`.
    pub columns: Vec<String>,
    pub rows: Vec<ComparisonRow>,
    /// Inputs that were skipped, with the reason.
    pub warnings: Vec<String>,
}

fn row_label(report: &MetricsReport) -> String {
    match report.mode.as_str() {
        "mtda" | "stda" => report.strategy.clone(),
        other => other.to_string(),
    }
}

fn report_path(input: &Path) -> PathBuf {
    if input.is_dir() {
        input.join(REPORT_FILE)
    } else {
        input.to_path_buf()
    }
}

/// Load every readable report and assemble the table; unreadable inputs
/// become warnings. Fails when no input survives or column sets differ.
pub fn build_table(inputs: &[PathBuf]) -> Result<ComparisonTable> {
    let mut columns: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for input in inputs {
        let path = report_path(input);
        let report = match MetricsReport::load(&path) {
            Ok(r) => r,
            Err(e) => {
                warnings.push(format!("skipping {}: {e}", path.display()));
                continue;
            }
        };
        let mut cols: Vec<String> = report
            .targets
            .iter()
            .map(|t| format!("{}→{}", report.source, t.name))
            .collect();
        cols.push("Average".to_string());
        match &columns {
            None => columns = Some(cols),
            Some(existing) => {
                if *existing != cols {
                    return Err(Error::Config(format!(
                        "report {} has columns {cols:?}, expected {existing:?}",
                        path.display()
                    )));
                }
            }
        }
        let mut cells: Vec<f64> = report.targets.iter().map(|t| t.mean).collect();
        cells.push(report.average);
        rows.push(ComparisonRow { label: row_label(&report), seed: report.seed, cells });
    }
    let Some(columns) = columns else {
        return Err(Error::Config(format!(
            "no readable reports among {} inputs",
            inputs.len()
        )));
    };
    Ok(ComparisonTable { columns, rows, warnings })
}

/// Human-readable table, accuracies rounded to two decimals.
pub fn render_markdown(table: &ComparisonTable) -> String {
    let mut out = String::from("| Method |");
    for c in &table.columns {
        out.push_str(&format!(" {c} |"));
    }
    out.push('\n');
    out.push_str("|---|");
    for _ in &table.columns {
        out.push_str("---|");
    }
    out.push('\n');
    for row in &table.rows {
        out.push_str(&format!("| {} |", row.label));
        for v in &row.cells {
            out.push_str(&format!(" {v:.2} |"));
        }
        out.push('\n');
    }
    out
}

/// Machine-readable table at full precision.
pub fn render_csv(table: &ComparisonTable) -> String {
    let mut out = String::from("method");
    for c in &table.columns {
        out.push(',');
        out.push_str(&c.replace('→', "->").replace(' ', "_").to_lowercase());
    }
    out.push('\n');
    for row in &table.rows {
        out.push_str(&row.label);
        for v in &row.cells {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::{LossBreakdown, TargetMetrics};
    use std::fs;

    fn sample_report(strategy: &str, mode: &str, seed: u64, means: &[f64]) -> MetricsReport {
        let targets: Vec<TargetMetrics> = means
            .iter()
            .enumerate()
            .map(|(i, &m)| TargetMetrics {
                name: format!("t{i}"),
                mean: m,
                std: 0.5,
                fold_accuracies: vec![m],
                per_class: vec![m; 3],
            })
            .collect();
        let average = means.iter().sum::<f64>() / means.len() as f64;
        MetricsReport {
            source: "src".into(),
            mode: mode.into(),
            strategy: strategy.into(),
            aggregator: "lse".into(),
            terms: "dc+mmd+mix".into(),
            seed,
            folds: 1,
            epochs: 2,
            class_names: vec!["a".into(), "b".into(), "c".into()],
            targets,
            average,
            epoch_losses: vec![LossBreakdown {
                cls: 1.0,
                dc: 0.5,
                mmd: 0.1,
                mixup: 0.2,
                adv: 3.24,
                total: 2.0,
                eta: 0.1,
            }],
        }
    }

    #[test]
    fn table_collects_rows_and_average_matches_cells() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("run_a");
        let b = dir.path().join("run_b");
        fs::create_dir_all(&a).unwrap();
        fs::create_dir_all(&b).unwrap();
        sample_report("mensa", "mtda", 0, &[60.0, 50.0])
            .save(&a.join(REPORT_FILE))
            .unwrap();
        sample_report("none", "mtda", 0, &[40.0, 30.0])
            .save(&b.join(REPORT_FILE))
            .unwrap();
        let table = build_table(&[a, b]).unwrap();
        assert_eq!(table.columns, vec!["src→t0", "src→t1", "Average"]);
        assert_eq!(table.rows.len(), 2);
        assert_eq!(table.rows[0].label, "mensa");
        assert_eq!(table.rows[1].label, "none");
        assert!(table.warnings.is_empty());
        for row in &table.rows {
            let pairs = &row.cells[..row.cells.len() - 1];
            let avg = pairs.iter().sum::<f64>() / pairs.len() as f64;
            assert!((row.cells.last().unwrap() - avg).abs() < 1e-9);
        }
    }

    #[test]
    fn missing_reports_are_skipped_with_warning() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("good");
        fs::create_dir_all(&good).unwrap();
        sample_report("factor", "mtda", 1, &[55.0])
            .save(&good.join(REPORT_FILE))
            .unwrap();
        let missing = dir.path().join("missing");
        let table = build_table(&[missing.clone(), good]).unwrap();
        assert_eq!(table.rows.len(), 1);
        assert_eq!(table.warnings.len(), 1);
        assert!(table.warnings[0].contains("missing"), "{}", table.warnings[0]);

        let err = build_table(&[missing]).unwrap_err();
        assert!(err.to_string().contains("no readable reports"), "{err}");
    }

    #[test]
    fn mismatched_column_sets_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.json");
        let b = dir.path().join("b.json");
        sample_report("mensa", "mtda", 0, &[60.0, 50.0]).save(&a).unwrap();
        sample_report("mensa", "mtda", 0, &[60.0]).save(&b).unwrap();
        let err = build_table(&[a, b]).unwrap_err();
        assert!(err.to_string().contains("columns"), "{err}");
    }

    #[test]
    fn non_adaptation_rows_are_labeled_by_mode() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.json");
        sample_report("mensa", "no_adaptation", 0, &[20.0, 25.0]).save(&a).unwrap();
        let table = build_table(&[a]).unwrap();
        assert_eq!(table.rows[0].label, "no_adaptation");
    }

    #[test]
    fn renderers_emit_all_rows_and_columns() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.json");
        sample_report("inter", "mtda", 3, &[33.333333, 44.444444]).save(&a).unwrap();
        let table = build_table(&[a]).unwrap();
        let md = render_markdown(&table);
        assert!(md.contains("| Method | src→t0 | src→t1 | Average |"), "{md}");
        assert!(md.contains("| inter | 33.33 | 44.44 | 38.89 |"), "{md}");
        let csv = render_csv(&table);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "method,src->t0,src->t1,average");
        let data = lines.next().unwrap();
        assert!(data.starts_with("inter,33.333333,44.444444,"), "{data}");
        // Full-precision average survives the round trip.
        let avg: f64 = data.rsplit(',').next().unwrap().parse().unwrap();
        assert!((avg - (33.333333 + 44.444444) / 2.0).abs() < 1e-12);
    }
}
