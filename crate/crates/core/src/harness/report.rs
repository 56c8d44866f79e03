//! Report assembly: turns training CSVs and rollout-sweep tables into the
//! comparison panels, the horizon-sweep chart, trajectory overlays, and a
//! plain-text summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::metrics::{read_metrics, MetricsRecord};
use super::svg::{Band, LinePlot, Series};
use super::{read_rollout_table, EvalRun, HarnessError, RolloutEvalRow};

/// The four training curves compared across methods, in panel order.
const PANELS: [(&str, &str, fn(&MetricsRecord) -> Option<f64>); 4] = [
    ("critic_loss", "critic loss", |r| r.critic_loss),
    ("supervised_mse", "supervised MSE", |r| r.supervised_mse),
    ("rmse_rollout", "rollout RMSE", |r| r.rmse_rollout),
    ("mean_rollout_reward", "mean rollout reward", |r| r.mean_rollout_reward),
];

/// Everything `render_report` wrote.
#[derive(Debug, Clone)]
pub struct ReportPaths {
    pub panels: Vec<PathBuf>,
    pub sweep: Option<PathBuf>,
    pub summary: PathBuf,
}

/// A named group of runs of the same method.
struct MethodRuns {
    label: &'static str,
    runs: Vec<Vec<MetricsRecord>>,
}

/// Mean curve over the runs plus the min/max envelope enclosing them.
/// Rounds where every run left the field empty are skipped, so curves stay
/// contiguous across absent cells.
fn mean_and_envelope(
    runs: &[Vec<MetricsRecord>],
    field: fn(&MetricsRecord) -> Option<f64>,
) -> (Vec<(f64, f64)>, Option<Band>) {
    let mut by_round: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for run in runs {
        for record in run {
            if let Some(v) = field(record) {
                by_round.entry(record.round).or_default().push(v);
            }
        }
    }
    let mean: Vec<(f64, f64)> = by_round
        .iter()
        .map(|(&round, vs)| (round as f64, vs.iter().sum::<f64>() / vs.len() as f64))
        .collect();
    let band = if runs.len() >= 2 && !by_round.is_empty() {
        let upper = by_round
            .iter()
            .map(|(&r, vs)| (r as f64, vs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)))
            .collect();
        let lower = by_round
            .iter()
            .map(|(&r, vs)| (r as f64, vs.iter().cloned().fold(f64::INFINITY, f64::min)))
            .collect();
        Some(Band { upper, lower })
    } else {
        None
    };
    (mean, band)
}

fn load_runs(paths: &[PathBuf]) -> Result<Vec<Vec<MetricsRecord>>, HarnessError> {
    paths.iter().map(|p| read_metrics(p).map_err(Into::into)).collect()
}

/// Reads every input, renders the four comparison panels (one SVG each), a
/// horizon-sweep chart when tables are given, and a text summary, all under
/// `out`. Panels with no data anywhere still render with labeled axes.
pub fn render_report(
    rl_csvs: &[PathBuf],
    sl_csvs: &[PathBuf],
    rollout_tables: &[PathBuf],
    out: &Path,
) -> Result<ReportPaths, HarnessError> {
    std::fs::create_dir_all(out)?;
    let methods = [
        MethodRuns { label: "rl", runs: load_runs(rl_csvs)? },
        MethodRuns { label: "sl", runs: load_runs(sl_csvs)? },
    ];

    let mut panels = Vec::with_capacity(PANELS.len());
    for (name, y_label, field) in PANELS {
        let mut plot = LinePlot::new(y_label, "round", y_label);
        for method in &methods {
            if method.runs.is_empty() {
                continue;
            }
            let (mean, band) = mean_and_envelope(&method.runs, field);
            if let Some(b) = band {
                plot.bands.push(b);
            }
            plot.series.push(Series { label: method.label.to_string(), points: mean });
        }
        let path = out.join(format!("panel_{name}.svg"));
        std::fs::write(&path, plot.render())?;
        panels.push(path);
    }

    let sweep = if rollout_tables.is_empty() {
        None
    } else {
        let mut labeled = Vec::with_capacity(rollout_tables.len());
        for table_path in rollout_tables {
            let rows = read_rollout_table(table_path)?;
            let label = table_path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| table_path.display().to_string());
            labeled.push((label, rows));
        }
        let refs: Vec<(String, &[RolloutEvalRow])> =
            labeled.iter().map(|(l, r)| (l.clone(), r.as_slice())).collect();
        let path = out.join("rollout_sweep.svg");
        std::fs::write(&path, sweep_plot(&refs).render())?;
        Some(path)
    };

    let summary = out.join("summary.txt");
    std::fs::write(&summary, summary_text(&methods, rl_csvs, sl_csvs, rollout_tables))?;
    Ok(ReportPaths { panels, sweep, summary })
}

fn summary_text(
    methods: &[MethodRuns],
    rl_csvs: &[PathBuf],
    sl_csvs: &[PathBuf],
    rollout_tables: &[PathBuf],
) -> String {
    let mut text = String::new();
    for (label, paths) in [("rl", rl_csvs), ("sl", sl_csvs)] {
        for p in paths {
            let _ = writeln!(text, "{label} run: {}", p.display());
        }
    }
    for p in rollout_tables {
        let _ = writeln!(text, "rollout table: {}", p.display());
    }
    for method in methods {
        if method.runs.is_empty() {
            continue;
        }
        let mut finals = Vec::new();
        for run in &method.runs {
            if let Some(v) = run.iter().rev().find_map(|r| r.rmse_rollout) {
                finals.push(v);
            }
        }
        if finals.is_empty() {
            let _ = writeln!(text, "{}: no rollout RMSE recorded", method.label);
        } else {
            let mean = finals.iter().sum::<f64>() / finals.len() as f64;
            let _ = writeln!(
                text,
                "{}: final rollout RMSE {mean:.6} over {} run(s)",
                method.label,
                finals.len()
            );
        }
    }
    text
}

/// Mean rollout RMSE against horizon, one series per labeled sweep, with a
/// mean ± std band wherever the spread is recorded. Absent horizons are
/// simply skipped.
pub fn sweep_plot(labeled: &[(String, &[RolloutEvalRow])]) -> LinePlot {
    let mut plot = LinePlot::new("rollout RMSE by horizon", "rollout length h", "mean RMSE");
    for (label, rows) in labeled {
        let mut mean = Vec::new();
        let mut upper = Vec::new();
        let mut lower = Vec::new();
        for row in rows.iter() {
            if let Some(m) = row.mean_rmse {
                mean.push((row.h as f64, m));
                if let Some(s) = row.std_rmse {
                    upper.push((row.h as f64, m + s));
                    lower.push((row.h as f64, m - s));
                }
            }
        }
        if upper.len() >= 2 {
            plot.bands.push(Band { upper, lower });
        }
        plot.series.push(Series { label: label.clone(), points: mean });
    }
    plot
}

/// Overlays one evaluation rollout: the logged trajectory against the
/// predictions, one pair of lines per state dimension, with dashed markers
/// at every re-grounding boundary.
pub fn overlay_plot(run: &EvalRun, h: usize, title: &str) -> LinePlot {
    let mut plot = LinePlot::new(title, "step", "state");
    let dims = run.truth.first().map_or(0, Vec::len);
    for d in 0..dims {
        plot.series.push(Series {
            label: format!("true d{d}"),
            points: run.truth.iter().enumerate().map(|(t, s)| (t as f64, s[d])).collect(),
        });
        plot.series.push(Series {
            label: format!("pred d{d}"),
            points: run.predicted.iter().enumerate().map(|(t, s)| (t as f64, s[d])).collect(),
        });
    }
    if h > 0 {
        plot.vlines = (1..).map(|k| k * h).take_while(|&x| x < run.truth.len()).map(|x| x as f64).collect();
    }
    plot
}

/// Renders [`overlay_plot`] straight to a file.
pub fn write_overlay(path: &Path, run: &EvalRun, h: usize, title: &str) -> Result<(), HarnessError> {
    std::fs::write(path, overlay_plot(run, h, title).render())?;
    Ok(())
}
