//! Report files: versioned JSON, CSV tables and fixed-size SVG plots.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

pub const SCHEMA: &str = "capillary-rig/1";

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema: &'static str,
    command: &'a str,
    scenario: &'a str,
    status: &'a str,
    result: &'a T,
}

pub fn json_report<T: Serialize>(command: &str, scenario: &str, status: &str, result: &T) -> String {
    let env = Envelope { schema: SCHEMA, command, scenario, status, result };
    serde_json::to_string_pretty(&env).expect("report serializes") + "\n"
}

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().ok_or_else(|| io::Error::other("output path has no file name"))?;
    let tmp: PathBuf = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}

pub fn csv(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        let cells: Vec<String> = r.iter().map(|x| format!("{x}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

const W: f64 = 800.0;
const H: f64 = 600.0;
const PAD: f64 = 70.0;

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 600\" width=\"800\" height=\"600\">\n\
         <rect width=\"800\" height=\"600\" fill=\"white\"/>\n\
         <text x=\"400\" y=\"30\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"18\">{}</text>\n",
        escape(title)
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v.filter(|x| x.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-300 + 1e-12 * lo.abs().max(hi.abs()) {
        let d = if lo == 0.0 { 1.0 } else { 0.5 * lo.abs() };
        return (lo - d, hi + d);
    }
    (lo, hi)
}

fn axes(x: (f64, f64), y: (f64, f64), xlabel: &str, ylabel: &str) -> String {
    let mut s = format!(
        "<g stroke=\"black\" stroke-width=\"1\"><line x1=\"{PAD}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\"/>\
         <line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{b}\"/></g>\n",
        b = H - PAD,
        r = W - PAD
    );
    let text = |x: f64, y: f64, anchor: &str, t: &str| {
        format!("<text x=\"{x:.1}\" y=\"{y:.1}\" text-anchor=\"{anchor}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n", escape(t))
    };
    s += &text(PAD, H - PAD + 18.0, "middle", &format!("{:.3e}", x.0));
    s += &text(W - PAD, H - PAD + 18.0, "middle", &format!("{:.3e}", x.1));
    s += &text(PAD - 6.0, H - PAD, "end", &format!("{:.3e}", y.0));
    s += &text(PAD - 6.0, PAD + 4.0, "end", &format!("{:.3e}", y.1));
    s += &text(W / 2.0, H - 20.0, "middle", xlabel);
    s += &format!(
        "<text x=\"20\" y=\"{}\" transform=\"rotate(-90 20 {})\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    );
    s
}

fn sx(x: f64, r: (f64, f64)) -> f64 {
    PAD + (x - r.0) / (r.1 - r.0) * (W - 2.0 * PAD)
}

fn sy(y: f64, r: (f64, f64)) -> f64 {
    H - PAD - (y - r.0) / (r.1 - r.0) * (H - 2.0 * PAD)
}

/// Line plot of `(x, y)` points.
pub fn svg_line(title: &str, xlabel: &str, ylabel: &str, pts: &[(f64, f64)]) -> String {
    let xr = range(pts.iter().map(|p| p.0));
    let yr = range(pts.iter().map(|p| p.1));
    let mut s = header(title);
    s += &axes(xr, yr, xlabel, ylabel);
    let poly: Vec<String> = pts
        .iter()
        .filter(|p| p.0.is_finite() && p.1.is_finite())
        .map(|p| format!("{:.2},{:.2}", sx(p.0, xr), sy(p.1, yr)))
        .collect();
    s += &format!("<polyline fill=\"none\" stroke=\"#1f5fa8\" stroke-width=\"2\" points=\"{}\"/>\n", poly.join(" "));
    s + "</svg>\n"
}

/// Colored grid of `(x, y, value)` cells; blue below zero, red above.
pub fn svg_heatmap(title: &str, xlabel: &str, ylabel: &str, cells: &[(f64, f64, f64)]) -> String {
    let xr = range(cells.iter().map(|c| c.0));
    let yr = range(cells.iter().map(|c| c.1));
    let vmax = cells.iter().map(|c| c.2.abs()).filter(|v| v.is_finite()).fold(0.0f64, f64::max).max(1e-300);
    let count = |f: fn(&(f64, f64, f64)) -> f64| {
        let mut v: Vec<f64> = cells.iter().map(f).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v.len().max(1) as f64
    };
    let cw = (W - 2.0 * PAD) / count(|c| c.0);
    let ch = (H - 2.0 * PAD) / count(|c| c.1);
    let mut s = header(title);
    s += &axes(xr, yr, xlabel, ylabel);
    for &(x, y, v) in cells {
        let a = if v.is_finite() { (v / vmax).clamp(-1.0, 1.0) } else { 0.0 };
        let (r, g, b) = if a >= 0.0 {
            (255.0, 255.0 * (1.0 - a), 255.0 * (1.0 - a))
        } else {
            (255.0 * (1.0 + a), 255.0 * (1.0 + a), 255.0)
        };
        s += &format!(
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"rgb({:.0},{:.0},{:.0})\"/>\n",
            sx(x, xr) - cw / 2.0,
            sy(y, yr) - ch / 2.0,
            cw,
            ch,
            r,
            g,
            b
        );
    }
    s + "</svg>\n"
}
