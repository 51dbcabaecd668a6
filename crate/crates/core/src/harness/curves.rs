//! Learning curves across seeds: IQM with stratified bootstrap bands.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::metrics::{read_embeddings, read_metrics, CsvStream, MetricsRow};
use super::stats::{iqm, stratified_bootstrap_ci};
use crate::rng::{self, streams};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub step: u64,
    pub iqm: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Clone, Debug)]
pub struct CurveOptions {
    /// Grid size; runs with fewer distinct episode steps use those steps.
    pub points: usize,
    pub n_resamples: usize,
    pub level: f64,
    pub seed: u64,
    pub timestamp: bool,
}

impl Default for CurveOptions {
    fn default() -> Self {
        Self {
            points: 50,
            n_resamples: 100_000,
            level: 0.95,
            seed: 0,
            timestamp: true,
        }
    }
}

/// Timepoints shared by all seeds.
fn grid(runs: &[Vec<&MetricsRow>], points: usize) -> Vec<u64> {
    let steps: BTreeSet<u64> = runs.iter().flatten().map(|r| r.step).collect();
    if steps.len() <= points {
        return steps.into_iter().collect();
    }
    let max = *steps.iter().next_back().expect("non-empty");
    let mut g: Vec<u64> = (1..=points as u64).map(|k| max * k / points as u64).collect();
    g.dedup();
    g
}

/// Mean return of the episodes ending in each grid interval; empty
/// intervals repeat the previous value (or take the first later one).
fn resample(run: &[&MetricsRow], grid: &[u64]) -> Vec<f64> {
    let mut out: Vec<Option<f64>> = Vec::with_capacity(grid.len());
    let mut i = 0;
    for &g in grid {
        let (mut sum, mut n) = (0.0, 0);
        while i < run.len() && run[i].step <= g {
            sum += run[i].episode_return;
            n += 1;
            i += 1;
        }
        out.push((n > 0).then(|| sum / n as f64));
    }
    let first = out.iter().flatten().next().copied().unwrap_or(0.0);
    let mut last = first;
    out.into_iter()
        .map(|v| {
            if let Some(v) = v {
                last = v;
            }
            last
        })
        .collect()
}

/// IQM curve over seeds for the rows accepted by `keep`.
pub fn curve(runs: &[Vec<MetricsRow>], keep: impl Fn(&MetricsRow) -> bool, opts: &CurveOptions) -> Result<Vec<CurvePoint>> {
    let runs: Vec<Vec<&MetricsRow>> = runs.iter().map(|r| r.iter().filter(|x| keep(x)).collect::<Vec<_>>()).filter(|r| !r.is_empty()).collect();
    if runs.is_empty() {
        return Ok(Vec::new());
    }
    let grid = grid(&runs, opts.points.max(1));
    let curves: Vec<Vec<f64>> = runs.iter().map(|r| resample(r, &grid)).collect();
    let mut r = rng::stream(opts.seed, streams::BOOTSTRAP);
    let ci = stratified_bootstrap_ci(&curves, opts.n_resamples, opts.level, &mut r)?;
    grid.iter()
        .enumerate()
        .map(|(t, &step)| {
            let column: Vec<f64> = curves.iter().map(|c| c[t]).collect();
            Ok(CurvePoint {
                step,
                iqm: iqm(&column)?,
                ci_lo: ci[t].0,
                ci_hi: ci[t].1,
            })
        })
        .collect()
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// A single line chart with a shaded confidence band.
pub fn render_svg(title: &str, points: &[CurvePoint]) -> String {
    let (w, h, m) = (640.0, 400.0, 50.0);
    let x_max = points.iter().map(|p| p.step).max().unwrap_or(1).max(1) as f64;
    let lo = points.iter().map(|p| p.ci_lo.min(p.iqm)).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.ci_hi.max(p.iqm)).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (lo.min(0.0) - 0.5, lo.max(0.0) + 0.5) };
    let x = |s: u64| m + (w - 2.0 * m) * s as f64 / x_max;
    let y = |v: f64| h - m - (h - 2.0 * m) * (v - lo) / (hi - lo);
    let line = |f: &dyn Fn(&CurvePoint) -> f64, pts: &mut dyn Iterator<Item = &CurvePoint>| {
        pts.map(|p| format!("{:.2},{:.2}", x(p.step), y(f(p)))).collect::<Vec<_>>().join(" ")
    };
    let band = format!(
        "{} {}",
        line(&|p| p.ci_hi, &mut points.iter()),
        line(&|p| p.ci_lo, &mut points.iter().rev())
    );
    let mean = line(&|p| p.iqm, &mut points.iter());
    let mut s = String::new();
    s.push_str(&format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"));
    s.push_str(&format!("  <rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"));
    s.push_str(&format!(
        "  <line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n  <line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        b = h - m,
        r = w - m
    ));
    if !points.is_empty() {
        s.push_str(&format!("  <polygon points=\"{band}\" fill=\"steelblue\" fill-opacity=\"0.25\" stroke=\"none\"/>\n"));
        s.push_str(&format!("  <polyline points=\"{mean}\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\"/>\n"));
    }
    s.push_str(&format!("  <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n", w / 2.0, xml_escape(title)));
    s.push_str(&format!("  <text x=\"{m}\" y=\"{}\" font-size=\"11\">0</text>\n", h - m + 15.0));
    s.push_str(&format!("  <text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"11\">{}</text>\n", w - m, h - m + 15.0, x_max));
    s.push_str(&format!("  <text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"11\">{lo:.3}</text>\n", m - 4.0, h - m));
    s.push_str(&format!("  <text x=\"{}\" y=\"{m}\" text-anchor=\"end\" font-size=\"11\">{hi:.3}</text>\n", m - 4.0));
    s.push_str("</svg>\n");
    s
}

fn write_curve(dir: &Path, stem: &str, title: &str, points: &[CurvePoint], timestamp: bool) -> Result<[PathBuf; 2]> {
    let csv = dir.join(format!("{stem}.csv"));
    let mut out = CsvStream::create(&csv, timestamp)?;
    if points.is_empty() {
        out.write_record(["step", "iqm", "ci_lo", "ci_hi"])?;
    }
    for p in points {
        out.write(p)?;
    }
    out.finish()?;
    let svg = dir.join(format!("{stem}.svg"));
    std::fs::write(&svg, render_svg(title, points)).map_err(|e| Error::io(&svg, e))?;
    Ok([csv, svg])
}

fn file_stem(task: &str) -> String {
    task.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// Writes `curves.csv` / `curves.svg` over all episodes of every metrics
/// file (one file per seed), plus `curves-<task>.*` per task when the runs
/// cover several tasks. Returns the written paths.
pub fn emit_curves(metrics_files: &[PathBuf], out_dir: &Path, opts: &CurveOptions) -> Result<Vec<PathBuf>> {
    if metrics_files.is_empty() {
        return Err(Error::Config("report needs at least one metrics file".into()));
    }
    let runs: Vec<Vec<MetricsRow>> = metrics_files.iter().map(|p| read_metrics(p)).collect::<Result<_>>()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let all = curve(&runs, |_| true, opts)?;
    written.extend(write_curve(out_dir, "curves", "team return (IQM over seeds)", &all, opts.timestamp)?);
    let tasks: BTreeSet<&str> = runs.iter().flatten().map(|r| r.task.as_str()).collect();
    if tasks.len() > 1 {
        for task in tasks {
            let pts = curve(&runs, |r| r.task == task, opts)?;
            written.extend(write_curve(out_dir, &format!("curves-{}", file_stem(task)), task, &pts, opts.timestamp)?);
        }
    }
    Ok(written)
}

/// Per-episode mixture-weight traces (`episode, task, t, w_0..`) from an
/// embedding dump; `None` when the dump carries no weights.
pub fn emit_weight_traces(embeddings: &Path, out: &Path, timestamp: bool) -> Result<Option<PathBuf>> {
    let rows = read_embeddings(embeddings)?;
    let rows: Vec<_> = rows.into_iter().filter(|r| r.encoder == 0 && !r.weights.is_empty()).collect();
    let Some(first) = rows.first() else {
        return Ok(None);
    };
    let mut w = CsvStream::create(out, timestamp)?;
    let mut header = vec!["episode".to_string(), "task".into(), "t".into()];
    header.extend((0..first.weights.len()).map(|k| format!("w_{k}")));
    w.write_record(&header)?;
    for r in &rows {
        let mut rec = vec![r.episode.to_string(), r.task.clone(), r.t.to_string()];
        rec.extend(r.weights.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.finish()?;
    Ok(Some(out.to_path_buf()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(steps_returns: &[(u64, f64)], task: &str) -> Vec<MetricsRow> {
        steps_returns
            .iter()
            .map(|&(step, ret)| MetricsRow {
                step,
                phase: "train".into(),
                task: task.into(),
                episode_return: ret,
                episode_len: 10,
                policy_loss: 0.0,
                value_loss: 0.0,
                entropy: 0.0,
                mate_loss: None,
            })
            .collect()
    }

    fn write(dir: &Path, name: &str, rows: &[MetricsRow]) -> PathBuf {
        let p = dir.join(name);
        let mut w = CsvStream::create(&p, false).unwrap();
        for r in rows {
            w.write(r).unwrap();
        }
        w.finish().unwrap();
        p
    }

    fn quick() -> CurveOptions {
        CurveOptions {
            n_resamples: 500,
            timestamp: false,
            ..CurveOptions::default()
        }
    }

    #[test]
    fn single_seed_three_points() {
        let dir = tempfile::tempdir().unwrap();
        let m = write(dir.path(), "m.csv", &rows(&[(50, 1.0), (100, 0.5), (150, 2.0)], "a"));
        let out = dir.path().join("report");
        emit_curves(&[m], &out, &quick()).unwrap();
        let text = std::fs::read_to_string(out.join("curves.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines, vec!["step,iqm,ci_lo,ci_hi", "50,1.0,1.0,1.0", "100,0.5,0.5,0.5", "150,2.0,2.0,2.0"]);
    }

    #[test]
    fn svg_is_well_formed() {
        let dir = tempfile::tempdir().unwrap();
        let a = write(dir.path(), "a.csv", &rows(&[(50, 1.0), (100, 0.5), (150, 2.0)], "x<&>"));
        let b = write(dir.path(), "b.csv", &rows(&[(50, 0.0), (120, 1.5)], "y"));
        let out = dir.path().join("r");
        let files = emit_curves(&[a, b], &out, &quick()).unwrap();
        assert_eq!(files.len(), 6);
        for f in files.iter().filter(|f| f.extension().unwrap() == "svg") {
            let text = std::fs::read_to_string(f).unwrap();
            let doc = roxmltree::Document::parse(&text).unwrap();
            assert_eq!(doc.root_element().tag_name().name(), "svg");
        }
        assert!(roxmltree::Document::parse(&render_svg("empty", &[])).is_ok());
    }

    #[test]
    fn grid_binning_averages_and_carries_forward() {
        let r = rows(&[(10, 1.0), (20, 3.0), (90, 5.0)], "a");
        let refs: Vec<&MetricsRow> = r.iter().collect();
        assert_eq!(resample(&refs, &[25, 50, 75, 100]), vec![2.0, 2.0, 2.0, 5.0]);
        assert_eq!(grid(&[refs.clone()], 2), vec![45, 90]);
        assert_eq!(resample(&refs, &[5, 25]), vec![2.0, 2.0]);
    }

    #[test]
    fn malformed_files_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "step,phase\n1,2\n").unwrap();
        assert!(emit_curves(&[p], dir.path(), &quick()).is_err());
        assert!(emit_curves(&[], dir.path(), &quick()).is_err());
    }
}
