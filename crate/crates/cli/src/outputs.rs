//! Files written by a run: metrics CSV, summary, reward curve, parameters.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use darl1n_core::coordinator::wire::{decode, encode};
use darl1n_core::coordinator::{Message, ParamMsg};
use darl1n_core::learner::PolicyTable;
use darl1n_core::metrics::{detect_convergence, MetricsRow};

use crate::CliError;

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const CURVE_FILE: &str = "reward_curve.svg";
pub const PARAMS_FILE: &str = "params.bin";
pub const CONFIG_FILE: &str = "config.txt";

pub const HEADER: [&str; 5] = ["iteration", "seconds", "avg_total_reward", "collect_s", "update_s"];

/// Writes rows with shortest round-trip float formatting.
pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record([r.iteration.to_string(), r.seconds.to_string(), r.avg_total_reward.to_string(), r.collect_s.to_string(), r.update_s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>, CliError> {
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()?.iter().ne(HEADER) {
        return Err(CliError::Runtime(format!("{} has an unexpected header", path.display())));
    }
    let bad = |line: usize| CliError::Runtime(format!("{}: malformed row {line}", path.display()));
    r.records()
        .enumerate()
        .map(|(n, rec)| {
            let rec = rec?;
            let f = |k: usize| rec.get(k).and_then(|v| v.parse::<f64>().ok()).ok_or_else(|| bad(n + 2));
            Ok(MetricsRow {
                iteration: rec.get(0).and_then(|v| v.parse().ok()).ok_or_else(|| bad(n + 2))?,
                seconds: f(1)?,
                avg_total_reward: f(2)?,
                collect_s: f(3)?,
                update_s: f(4)?,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub iterations: u64,
    pub total_seconds: f64,
    pub final_reward: Option<f64>,
    /// Row closing the first window whose reward variance is within
    /// tolerance.
    pub convergence: Option<MetricsRow>,
}

pub fn summarize(rows: &[MetricsRow]) -> Summary {
    let rewards: Vec<f64> = rows.iter().map(|r| r.avg_total_reward).collect();
    Summary {
        iterations: rows.last().map_or(0, |r| r.iteration),
        total_seconds: rows.last().map_or(0.0, |r| r.seconds),
        final_reward: rows.last().map(|r| r.avg_total_reward),
        convergence: detect_convergence(&rewards).map(|k| rows[k - 1].clone()),
    }
}

pub fn summary_text(s: &Summary) -> String {
    let opt = |v: Option<f64>| v.map_or("none".to_string(), |x| x.to_string());
    let mut out = String::new();
    let _ = writeln!(out, "iterations={}", s.iterations);
    let _ = writeln!(out, "total_seconds={}", s.total_seconds);
    let _ = writeln!(out, "final_avg_total_reward={}", opt(s.final_reward));
    let _ = writeln!(out, "converged={}", s.convergence.is_some());
    let _ = writeln!(out, "convergence_iteration={}", s.convergence.as_ref().map_or("none".into(), |r| r.iteration.to_string()));
    let _ = writeln!(out, "convergence_seconds={}", opt(s.convergence.as_ref().map(|r| r.seconds)));
    let _ = writeln!(out, "convergence_reward={}", opt(s.convergence.as_ref().map(|r| r.avg_total_reward)));
    out
}

/// Line plot of reward against iteration.
pub fn reward_svg(rows: &[MetricsRow], title: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 360.0;
    const PAD: f64 = 48.0;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{}</text>\n",
        W / 2.0,
        escape(title)
    );
    let (x0, x1) = (PAD, W - PAD / 2.0);
    let (y0, y1) = (H - PAD, PAD);
    let _ = writeln!(svg, "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>");
    let _ = writeln!(svg, "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>");
    if !rows.is_empty() {
        let it_max = rows.last().map_or(1, |r| r.iteration).max(1) as f64;
        let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.avg_total_reward), hi.max(r.avg_total_reward)));
        let span = if hi > lo { hi - lo } else { 1.0 };
        let px = |it: u64| x0 + (x1 - x0) * it as f64 / it_max;
        let py = |v: f64| y0 - (y0 - y1) * (v - lo) / span;
        let points: Vec<String> = rows.iter().map(|r| format!("{:.2},{:.2}", px(r.iteration), py(r.avg_total_reward))).collect();
        let _ = writeln!(svg, "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"{}\"/>", points.join(" "));
        let label = |x: f64, y: f64, anchor: &str, text: String| format!("<text x=\"{x}\" y=\"{y}\" text-anchor=\"{anchor}\" font-family=\"sans-serif\" font-size=\"11\">{text}</text>\n");
        svg += &label(x0 - 4.0, y0, "end", format!("{lo:.1}"));
        svg += &label(x0 - 4.0, y1 + 4.0, "end", format!("{hi:.1}"));
        svg += &label(x0, y0 + 16.0, "start", "0".into());
        svg += &label(x1, y0 + 16.0, "end", format!("{}", it_max as u64));
    }
    svg += &format!("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">iteration</text>\n", W / 2.0, H - 10.0);
    svg += "<text x=\"14\" y=\"180\" transform=\"rotate(-90 14 180)\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">average total reward</text>\n";
    svg += "</svg>\n";
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes metrics, summary and reward curve into `dir`.
pub fn emit(dir: &Path, rows: &[MetricsRow], title: &str) -> Result<Summary, CliError> {
    fs::create_dir_all(dir)?;
    write_metrics(&dir.join(METRICS_FILE), rows)?;
    let summary = summarize(rows);
    fs::write(dir.join(SUMMARY_FILE), summary_text(&summary))?;
    fs::write(dir.join(CURVE_FILE), reward_svg(rows, title))?;
    Ok(summary)
}

/// Stores a policy table in the wire format.
pub fn save_params(dir: &Path, iteration: u64, table: &PolicyTable) -> Result<(), CliError> {
    let frame = encode(&Message::Params(ParamMsg { iteration, table: table.clone() }))?;
    fs::write(dir.join(PARAMS_FILE), frame)?;
    Ok(())
}

pub fn load_params(dir: &Path) -> Result<ParamMsg, CliError> {
    let path = dir.join(PARAMS_FILE);
    let bytes = fs::read(&path).map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
    match decode(&bytes)? {
        Message::Params(msg) => Ok(msg),
        _ => Err(CliError::Runtime(format!("{} does not hold parameters", path.display()))),
    }
}

/// Per-iteration mean over runs that share an evaluation schedule.
pub fn aggregate(runs: &[Vec<MetricsRow>]) -> Vec<MetricsRow> {
    let Some(first) = runs.first() else { return Vec::new() };
    let n = runs.len() as f64;
    (0..first.len())
        .filter(|&k| runs.iter().all(|r| r.get(k).is_some_and(|row| row.iteration == first[k].iteration)))
        .map(|k| {
            let mean = |f: fn(&MetricsRow) -> f64| runs.iter().map(|r| f(&r[k])).sum::<f64>() / n;
            MetricsRow {
                iteration: first[k].iteration,
                seconds: mean(|r| r.seconds),
                avg_total_reward: mean(|r| r.avg_total_reward),
                collect_s: mean(|r| r.collect_s),
                update_s: mean(|r| r.update_s),
            }
        })
        .collect()
}
