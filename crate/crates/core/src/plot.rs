//! SVG charts for sweep and result CSVs.
//!
//! Sweep files become a line chart of `std_v0` against `T`. Result files
//! become two grouped bar charts (mean test accuracy and mean total weight),
//! one group per dataset and one bar per builder, with ±1 sd whiskers.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::spectral::SweepCurve;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(title: &str) -> String {
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    )
    .unwrap();
    s
}

struct Axes {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Axes {
    fn px(&self, x: f64) -> f64 {
        let span = if self.x1 > self.x0 { self.x1 - self.x0 } else { 1.0 };
        MARGIN + (x - self.x0) / span * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        let span = if self.y1 > self.y0 { self.y1 - self.y0 } else { 1.0 };
        HEIGHT - MARGIN - (y - self.y0) / span * (HEIGHT - 2.0 * MARGIN)
    }

    fn frame(&self, s: &mut String, xlabel: &str, ylabel: &str) {
        let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
        writeln!(s, r#"<line x1="{l}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>"#).unwrap();
        writeln!(s, r#"<line x1="{l}" y1="{t}" x2="{l}" y2="{b}" stroke="black"/>"#).unwrap();
        for i in 0..=4 {
            let v = self.y0 + (self.y1 - self.y0) * i as f64 / 4.0;
            let y = self.py(v);
            writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
                l - 6.0,
                y + 4.0,
                format_tick(v)
            )
            .unwrap();
        }
        writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 18.0,
            escape(xlabel)
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(ylabel)
        )
        .unwrap();
    }
}

fn format_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.1e}")
    } else {
        format!("{}", (v * 1000.0).round() / 1000.0)
    }
}

pub fn sweep_svg(curve: &SweepCurve, title: &str) -> Result<String> {
    if curve.points.is_empty() {
        return Err(Error::invalid("sweep curve has no points"));
    }
    let xs: Vec<f64> = curve.points.iter().map(|p| p.trees as f64).collect();
    let ys: Vec<f64> = curve.points.iter().map(|p| p.std_v0).collect();
    let axes = Axes {
        x0: xs.iter().copied().fold(f64::INFINITY, f64::min),
        x1: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        y0: 0.0,
        y1: ys.iter().copied().fold(0.0, f64::max),
    };
    let mut s = header(title);
    axes.frame(&mut s, "trees (T)", "std of v0");
    let path: Vec<String> = xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| format!("{:.2},{:.2}", axes.px(x), axes.py(y)))
        .collect();
    writeln!(
        s,
        r#"<polyline fill="none" stroke="{}" stroke-width="2" points="{}"/>"#,
        PALETTE[0],
        path.join(" ")
    )
    .unwrap();
    for (p, (&x, &y)) in curve.points.iter().zip(xs.iter().zip(&ys)) {
        let fill = if p.components > 1 { "white" } else { PALETTE[0] };
        writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{fill}" stroke="{}"/>"#,
            axes.px(x),
            axes.py(y),
            PALETTE[0]
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            axes.px(x),
            HEIGHT - MARGIN + 16.0,
            p.trees
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// One bar: group (dataset), series (builder), mean and sd.
#[derive(Debug, Clone, PartialEq)]
pub struct Bar {
    pub group: String,
    pub series: String,
    pub mean: f64,
    pub sd: f64,
}

pub fn bar_svg(bars: &[Bar], title: &str, ylabel: &str) -> Result<String> {
    if bars.is_empty() {
        return Err(Error::invalid("no bars to plot"));
    }
    let mut groups: Vec<&str> = Vec::new();
    let mut series: Vec<&str> = Vec::new();
    for b in bars {
        if !groups.contains(&b.group.as_str()) {
            groups.push(&b.group);
        }
        if !series.contains(&b.series.as_str()) {
            series.push(&b.series);
        }
    }
    let top = bars.iter().map(|b| b.mean + b.sd).fold(0.0, f64::max);
    let axes = Axes {
        x0: 0.0,
        x1: groups.len() as f64,
        y0: 0.0,
        y1: if top > 0.0 { top * 1.05 } else { 1.0 },
    };
    let mut s = header(title);
    axes.frame(&mut s, "dataset", ylabel);
    let group_w = axes.px(1.0) - axes.px(0.0);
    let bar_w = group_w * 0.8 / series.len() as f64;
    for b in bars {
        let gi = groups.iter().position(|g| *g == b.group).expect("collected");
        let si = series.iter().position(|g| *g == b.series).expect("collected");
        let x = axes.px(gi as f64) + group_w * 0.1 + bar_w * si as f64;
        let y = axes.py(b.mean.max(0.0));
        let h = axes.py(0.0) - y;
        writeln!(
            s,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{bar_w:.2}" height="{h:.2}" fill="{}"/>"#,
            PALETTE[si % PALETTE.len()]
        )
        .unwrap();
        if b.sd > 0.0 {
            let cx = x + bar_w / 2.0;
            writeln!(
                s,
                r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
                axes.py(b.mean - b.sd),
                axes.py(b.mean + b.sd)
            )
            .unwrap();
        }
    }
    for (gi, g) in groups.iter().enumerate() {
        writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            axes.px(gi as f64 + 0.5),
            HEIGHT - MARGIN + 16.0,
            escape(g)
        )
        .unwrap();
    }
    for (si, name) in series.iter().enumerate() {
        let y = MARGIN + 14.0 * si as f64;
        writeln!(
            s,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            WIDTH - MARGIN - 150.0,
            y - 9.0,
            PALETTE[si % PALETTE.len()],
            WIDTH - MARGIN - 135.0,
            y,
            escape(name)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Mean and sample sd of `column` per `(dataset, builder)` in a results CSV.
pub fn bars_from_results(text: &str, column: &str) -> Result<Vec<Bar>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            line: 1,
            reason: format!("missing column '{name}'"),
        })
    };
    let (di, bi, vi) = (find("dataset")?, find("builder")?, find(column)?);
    let mut acc: Vec<(String, String, Vec<f64>)> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let v: f64 = rec[vi].parse().map_err(|_| Error::Parse {
            line: i + 2,
            reason: format!("bad {column}"),
        })?;
        let (d, b) = (&rec[di], &rec[bi]);
        match acc.iter_mut().find(|(gd, gb, _)| gd == d && gb == b) {
            Some(entry) => entry.2.push(v),
            None => acc.push((d.to_string(), b.to_string(), vec![v])),
        }
    }
    if acc.is_empty() {
        return Err(Error::invalid("results file has no rows"));
    }
    Ok(acc
        .into_iter()
        .map(|(group, series, v)| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let sd = if v.len() > 1 {
                (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
            } else {
                0.0
            };
            Bar {
                group,
                series,
                mean: m,
                sd,
            }
        })
        .collect())
}

/// Renders every chart the CSV at `input` supports into `out_dir` and
/// returns the written paths.
pub fn plot_file(input: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let text = std::fs::read_to_string(input).map_err(|e| Error::io(input, e))?;
    let first = text.lines().next().unwrap_or("").trim();
    if first.is_empty() {
        return Err(Error::invalid(format!("{} is empty", input.display())));
    }
    let stem = input
        .file_stem()
        .map_or_else(|| "plot".into(), |s| s.to_string_lossy().into_owned());
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let write = |name: String, body: String| -> Result<PathBuf> {
        let path = out_dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    };
    if first == "T,std_v0,components" {
        let curve = SweepCurve::from_csv(&text)?;
        let svg = sweep_svg(&curve, &stem)?;
        return Ok(vec![write(format!("{stem}.svg"), svg)?]);
    }
    if first.starts_with("dataset,builder,seed,test_accuracy,total_weight") {
        let acc = bar_svg(&bars_from_results(&text, "test_accuracy")?, &stem, "test accuracy")?;
        let tw = bar_svg(&bars_from_results(&text, "total_weight")?, &stem, "total edge weight")?;
        return Ok(vec![
            write(format!("{stem}_accuracy.svg"), acc)?,
            write(format!("{stem}_total_weight.svg"), tw)?,
        ]);
    }
    Err(Error::invalid(format!(
        "{}: unrecognised header '{first}'",
        input.display()
    )))
}
