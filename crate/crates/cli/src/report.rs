use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mpe::evaluation::{variance_report, EvalReport, VarianceSummary};
use serde::Serialize;

use crate::pipeline::EVAL_FILE;
use crate::plots;

/// One row of the results table: a single run's macro metrics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableRow {
    pub family: String,
    pub size: String,
    pub params: usize,
    pub split: String,
    pub seed: u64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub average_precision: Option<f64>,
    pub accuracy: f64,
}

/// Reads `eval.tsv` from each run directory, or the file itself when a
/// path points at a table.
pub fn collect_reports(paths: &[PathBuf]) -> Result<Vec<EvalReport>> {
    let mut out = Vec::new();
    for p in paths {
        let file = if p.is_dir() { p.join(EVAL_FILE) } else { p.clone() };
        out.extend(EvalReport::load_tsv(&file).with_context(|| format!("reading {}", file.display()))?);
    }
    if out.is_empty() {
        bail!("no evaluation reports found");
    }
    Ok(out)
}

/// Rejects report sets that cannot share a table: one label with two
/// parameter counts, or mixed thresholds.
pub fn check_compatible(reports: &[EvalReport]) -> Result<()> {
    let mut params: BTreeMap<&str, usize> = BTreeMap::new();
    for r in reports {
        if let Some(&p) = params.get(r.model.as_str()) {
            if p != r.num_params {
                bail!("model {} appears with {p} and {} parameters", r.model, r.num_params);
            }
        }
        params.insert(&r.model, r.num_params);
        if r.threshold != reports[0].threshold {
            bail!("runs use thresholds {} and {}", reports[0].threshold, r.threshold);
        }
    }
    Ok(())
}

pub fn table_rows(reports: &[EvalReport]) -> Result<Vec<TableRow>> {
    check_compatible(reports)?;
    reports
        .iter()
        .map(|r| {
            let m = r.macro_metrics()?;
            let (family, size) = r.model.split_once(':').unwrap_or((&r.model, ""));
            Ok(TableRow {
                family: family.into(),
                size: size.into(),
                params: r.num_params,
                split: r.split.clone(),
                seed: r.seed,
                precision: m.precision,
                recall: m.recall,
                f_measure: m.f_measure,
                average_precision: m.average_precision,
                accuracy: m.accuracy,
            })
        })
        .collect()
}

fn one_decimal(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.1}"))
}

pub fn render_markdown(rows: &[TableRow]) -> String {
    let mut s = String::from("| Family | Size | Params | Split | Seed | P | R | F | AP | Acc |\n");
    s.push_str("|---|---|---:|---|---:|---:|---:|---:|---:|---:|\n");
    for r in rows {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            r.family,
            r.size,
            r.params,
            r.split,
            r.seed,
            one_decimal(Some(r.precision)),
            one_decimal(Some(r.recall)),
            one_decimal(Some(r.f_measure)),
            one_decimal(r.average_precision),
            one_decimal(Some(r.accuracy)),
        );
    }
    s
}

fn write_tsv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Groups reports by split and model label; groups with at least two runs
/// get a variance summary.
pub fn variance_groups(reports: &[EvalReport]) -> Result<Vec<VarianceSummary>> {
    let mut groups: BTreeMap<(&str, &str), Vec<EvalReport>> = BTreeMap::new();
    for r in reports {
        groups.entry((&r.split, &r.model)).or_default().push(r.clone());
    }
    groups.into_values().filter(|g| g.len() >= 2).map(|g| Ok(variance_report(&g)?)).collect()
}

#[derive(Serialize)]
struct VarianceRow<'a> {
    split: &'a str,
    model: &'a str,
    params: usize,
    runs: usize,
    metric: &'a str,
    min: f64,
    max: f64,
    mean: f64,
    spread: f64,
}

/// Files written by [`write_report`].
pub struct ReportFiles {
    pub table_tsv: PathBuf,
    pub table_md: PathBuf,
    pub variance: PathBuf,
    pub scatter: PathBuf,
    pub per_track: PathBuf,
    pub splits: PathBuf,
}

/// Writes tables, variance summaries and charts (SVG plus the plotted data
/// as TSV) for a set of reports.
pub fn write_report(reports: &[EvalReport], out: &Path) -> Result<ReportFiles> {
    fs::create_dir_all(out)?;
    let rows = table_rows(reports)?;
    let files = ReportFiles {
        table_tsv: out.join("table.tsv"),
        table_md: out.join("table.md"),
        variance: out.join("variance.tsv"),
        scatter: out.join("scatter.svg"),
        per_track: out.join("per_track.svg"),
        splits: out.join("splits.svg"),
    };
    write_tsv(&files.table_tsv, &rows)?;
    fs::write(&files.table_md, render_markdown(&rows))?;

    let summaries = variance_groups(reports)?;
    let mut vrows = Vec::new();
    for v in &summaries {
        let metrics = [
            ("precision", Some(v.precision)),
            ("recall", Some(v.recall)),
            ("f_measure", Some(v.f_measure)),
            ("average_precision", v.average_precision),
            ("accuracy", Some(v.accuracy)),
        ];
        for (name, m) in metrics {
            if let Some(m) = m {
                vrows.push(VarianceRow {
                    split: &v.split,
                    model: &v.model,
                    params: v.num_params,
                    runs: v.seeds.len(),
                    metric: name,
                    min: m.min,
                    max: m.max,
                    mean: m.mean,
                    spread: m.spread,
                });
            }
        }
    }
    write_tsv(&files.variance, &vrows)?;
    fs::write(out.join("variance.json"), serde_json::to_string_pretty(&summaries)?)?;

    let points: Vec<plots::Point> = rows
        .iter()
        .filter_map(|r| {
            r.average_precision.map(|ap| plots::Point {
                label: format!("{}:{}", r.family, r.size),
                params: r.params,
                value: ap,
            })
        })
        .collect();
    write_tsv(&out.join("scatter.tsv"), &points)?;
    plots::scatter(&files.scatter, &points)?;

    let mut per_track: Vec<plots::Bar> = Vec::new();
    for r in reports {
        for t in &r.tracks {
            if let Some(ap) = t.average_precision {
                per_track.push(plots::Bar { group: t.track_id.clone(), series: format!("{} seed {}", r.model, r.seed), value: ap });
            }
        }
    }
    write_tsv(&out.join("per_track.tsv"), &per_track)?;
    plots::grouped_bars(&files.per_track, "AP per test track", &per_track)?;

    let mut by_split: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for r in &rows {
        if let Some(ap) = r.average_precision {
            by_split.entry((format!("{}:{}", r.family, r.size), r.split.clone())).or_default().push(ap);
        }
    }
    let split_bars: Vec<plots::Bar> = by_split
        .into_iter()
        .map(|((model, split), v)| plots::Bar { group: model, series: split, value: v.iter().sum::<f64>() / v.len() as f64 })
        .collect();
    write_tsv(&out.join("splits.tsv"), &split_bars)?;
    plots::grouped_bars(&files.splits, "Mean AP by split", &split_bars)?;
    Ok(files)
}
