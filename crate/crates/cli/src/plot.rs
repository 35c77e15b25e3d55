//! Success-rate curves across seeds: mean line with a min–max band, as SVG
//! plus a CSV sidecar holding the plotted numbers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use vscrl::algo::read_metrics_jsonl;

use crate::error::{CliError, CliResult};

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN: (f64, f64, f64, f64) = (64.0, 24.0, 32.0, 56.0); // left, right, top, bottom

/// One evaluation point aggregated over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub env_steps: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub label: String,
    pub points: Vec<Point>,
}

/// Finds every `metrics.jsonl` below `root`. A file inside `seed-*` belongs
/// to the run directory one level up; any other file is its own run.
fn discover(root: &Path, runs: &mut BTreeMap<PathBuf, Vec<PathBuf>>) -> CliResult<()> {
    let entries = std::fs::read_dir(root).map_err(|e| CliError::io(root, e))?;
    let mut paths: Vec<PathBuf> = entries
        .map(|e| e.map(|e| e.path()).map_err(|e| CliError::io(root, e)))
        .collect::<CliResult<_>>()?;
    paths.sort();
    for p in paths {
        if p.is_dir() {
            discover(&p, runs)?;
        } else if p.file_name().is_some_and(|n| n == "metrics.jsonl") {
            let parent = p.parent().expect("file has a parent").to_path_buf();
            let is_seed = parent
                .file_name()
                .is_some_and(|n| n.to_string_lossy().starts_with("seed-"));
            let run = match (is_seed, parent.parent()) {
                (true, Some(up)) => up.to_path_buf(),
                _ => parent,
            };
            runs.entry(run).or_default().push(p);
        }
    }
    Ok(())
}

/// Aggregates the evaluation points of each seed by position: point `i` of
/// the curve combines the `i`-th evaluation of every seed that has one.
pub fn aggregate(label: String, seeds: &[Vec<(u64, f64)>]) -> Curve {
    let longest = seeds.iter().map(Vec::len).max().unwrap_or(0);
    let points = (0..longest)
        .map(|i| {
            let at: Vec<(u64, f64)> = seeds.iter().filter_map(|s| s.get(i).copied()).collect();
            let n = at.len() as f64;
            Point {
                env_steps: at.iter().map(|p| p.0 as f64).sum::<f64>() / n,
                mean: at.iter().map(|p| p.1).sum::<f64>() / n,
                min: at.iter().map(|p| p.1).fold(f64::INFINITY, f64::min),
                max: at.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max),
                seeds: at.len(),
            }
        })
        .collect();
    Curve { label, points }
}

pub fn load_curves(inputs: &[PathBuf]) -> CliResult<Vec<Curve>> {
    let mut runs = BTreeMap::new();
    for dir in inputs {
        if !dir.is_dir() {
            return Err(CliError::Usage(format!("{} is not a directory", dir.display())));
        }
        discover(dir, &mut runs)?;
    }
    let mut curves = Vec::new();
    for (run, files) in runs {
        let mut seeds = Vec::new();
        for f in files {
            let evals: Vec<(u64, f64)> = read_metrics_jsonl(&f)?
                .iter()
                .filter_map(|r| r.eval_success.map(|e| (r.env_steps, e)))
                .collect();
            if !evals.is_empty() {
                seeds.push(evals);
            }
        }
        if !seeds.is_empty() {
            let label = run.file_name().map_or_else(|| run.display().to_string(), |n| n.to_string_lossy().into_owned());
            curves.push(aggregate(label, &seeds));
        }
    }
    if curves.is_empty() {
        return Err(CliError::Usage("no-runs-found".into()));
    }
    Ok(curves)
}

/// Plots every run found below `inputs` to `out_dir/curves.svg` and
/// `out_dir/curves.csv`.
pub fn render_dirs(inputs: &[PathBuf], out_dir: &Path) -> CliResult<(PathBuf, PathBuf)> {
    let curves = load_curves(inputs)?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let svg_path = out_dir.join("curves.svg");
    std::fs::write(&svg_path, svg(&curves)).map_err(|e| CliError::io(&svg_path, e))?;
    let csv_path = out_dir.join("curves.csv");
    write_csv(&curves, &csv_path)?;
    Ok((svg_path, csv_path))
}

fn write_csv(curves: &[Curve], path: &Path) -> CliResult<()> {
    let csv_err = |e: csv::Error| CliError::io(path, std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["run", "point", "env_steps", "mean", "min", "max", "seeds"])
        .map_err(csv_err)?;
    for c in curves {
        for (i, p) in c.points.iter().enumerate() {
            w.write_record([
                c.label.clone(),
                i.to_string(),
                format!("{:.1}", p.env_steps),
                p.mean.to_string(),
                p.min.to_string(),
                p.max.to_string(),
                p.seeds.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// A round tick step giving roughly five ticks over `0..=max`.
fn tick_step(max: f64) -> f64 {
    let raw = max / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|&s| s >= raw)
        .unwrap_or(10.0 * mag)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn svg(curves: &[Curve]) -> String {
    let (ml, mr, mt, mb) = MARGIN;
    let (pw, ph) = (WIDTH - ml - mr, HEIGHT - mt - mb);
    let x_max = curves
        .iter()
        .flat_map(|c| c.points.iter().map(|p| p.env_steps))
        .fold(1.0, f64::max);
    let step = tick_step(x_max);
    let x_end = (x_max / step).ceil() * step;
    let sx = |x: f64| ml + pw * x / x_end;
    let sy = |y: f64| mt + ph * (1.0 - y);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for i in 0..=4 {
        let y = i as f64 / 4.0;
        let _ = writeln!(
            s,
            r##"<line x1="{ml}" x2="{0}" y1="{1:.1}" y2="{1:.1}" stroke="#ddd"/><text x="{2}" y="{3:.1}" text-anchor="end">{y:.2}</text>"##,
            ml + pw,
            sy(y),
            ml - 6.0,
            sy(y) + 4.0
        );
    }
    let mut x = 0.0;
    while x <= x_end + 1e-9 {
        let _ = writeln!(
            s,
            r##"<line x1="{0:.1}" x2="{0:.1}" y1="{mt}" y2="{1}" stroke="#eee"/><text x="{0:.1}" y="{2}" text-anchor="middle">{3}</text>"##,
            sx(x),
            mt + ph,
            mt + ph + 16.0,
            x
        );
        x += step;
    }
    let _ = writeln!(
        s,
        r##"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">environment steps</text>"#,
        ml + pw / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(16,{}) rotate(-90)" text-anchor="middle">eval success rate</text>"#,
        mt + ph / 2.0
    );
    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let upper = c.points.iter().map(|p| format!("{:.1},{:.1}", sx(p.env_steps), sy(p.max)));
        let lower = c.points.iter().rev().map(|p| format!("{:.1},{:.1}", sx(p.env_steps), sy(p.min)));
        let band: Vec<String> = upper.chain(lower).collect();
        let _ = writeln!(
            s,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            band.join(" ")
        );
        let line: Vec<String> = c
            .points
            .iter()
            .map(|p| format!("{:.1},{:.1}", sx(p.env_steps), sy(p.mean)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            line.join(" ")
        );
        let ly = mt + 16.0 + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{0}" x2="{1}" y1="{ly}" y2="{ly}" stroke="{color}" stroke-width="3"/><text x="{2}" y="{3}">{4}</text>"#,
            ml + 10.0,
            ml + 30.0,
            ml + 36.0,
            ly + 4.0,
            escape(&c.label)
        );
    }
    s.push_str("</svg>\n");
    s
}
