//! Loss-curve and metric charts as plain SVG.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Numeric columns of a CSV file keyed by header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let headers = r
            .headers()
            .map_err(|e| csv_err(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()).map_err(|e| csv_err(path, e)))
            .collect::<Result<Vec<Vec<String>>>>()?;
        if rows.is_empty() {
            return Err(Error::Config(format!("{}: no data rows", path.display())));
        }
        Ok(Self { headers, rows })
    }

    pub fn has(&self, name: &str) -> bool {
        self.headers.iter().any(|h| h == name)
    }

    pub fn column(&self, name: &str) -> Result<Vec<String>> {
        let i = self
            .headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("missing column `{name}`")))?;
        Ok(self.rows.iter().map(|r| r[i].clone()).collect())
    }

    /// Parses a column as floats; `inf`, `-inf` and `NaN` are accepted.
    pub fn numbers(&self, name: &str) -> Result<Vec<f64>> {
        self.column(name)?
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("column `{name}` row {}: `{v}` is not a number", i + 1)))
            })
            .collect()
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        if let csv::ErrorKind::Io(io) = e.into_kind() {
            return Error::io(path, io);
        }
        unreachable!("checked is_io_error");
    }
    Error::Config(format!("{}: {e}", path.display()))
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Round tick values covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= target as f64)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        esc(title)
    );
}

fn range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo > hi {
        return None;
    }
    if lo == hi {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        return Some((lo - pad, hi + pad));
    }
    Some((lo, hi))
}

/// Line chart of one or more series sharing both axes. Non-finite points
/// are skipped.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let (x0, x1) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0))).unwrap_or((0.0, 1.0));
    let (y0, y1) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1))).unwrap_or((0.0, 1.0));
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let _ = writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for t in ticks(y0, y1, 6) {
        let y = sy(t);
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0,
            fmt_num(t)
        );
    }
    for t in ticks(x0, x1, 8) {
        let x = sx(t);
        let _ = writeln!(
            out,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + ph + 16.0,
            fmt_num(t)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        H - 12.0,
        esc(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text transform="translate(16 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        TOP + ph / 2.0,
        esc(y_label)
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        if !pts.is_empty() {
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                pts.join(" ")
            );
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 18.0,
            lx + 24.0,
            ly + 4.0,
            esc(&s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Bar chart of `(label, mean, std)` with error whiskers.
pub fn bar_chart(title: &str, y_label: &str, bars: &[(String, f64, f64)]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let tops = bars.iter().flat_map(|(_, m, s)| [m - s, m + s, *m]);
    let (lo, hi) = range(tops.chain([0.0])).unwrap_or((0.0, 1.0));
    let (y0, y1) = (lo.min(0.0), hi + (hi - lo) * 0.05);
    let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let _ = writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for t in ticks(y0, y1, 6) {
        let y = sy(t);
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0,
            fmt_num(t)
        );
    }
    let _ = writeln!(
        out,
        r#"<text transform="translate(16 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        TOP + ph / 2.0,
        esc(y_label)
    );
    let slot = pw / bars.len().max(1) as f64;
    for (i, (label, mean, std)) in bars.iter().enumerate() {
        let cx = LEFT + slot * (i as f64 + 0.5);
        let color = PALETTE[i % PALETTE.len()];
        if mean.is_finite() {
            let (a, b) = (sy(mean.max(y0)), sy(0f64.max(y0)));
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#,
                cx - slot * 0.3,
                a.min(b),
                slot * 0.6,
                (a - b).abs()
            );
            if std.is_finite() && *std > 0.0 {
                let _ = writeln!(
                    out,
                    r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
                    sy(mean + std),
                    sy(mean - std)
                );
            }
        }
        let _ = writeln!(
            out,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + ph + 16.0,
            esc(label)
        );
        let _ = writeln!(
            out,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle" font-size="10">{}</text>"#,
            TOP + ph + 30.0,
            if mean.is_finite() { fmt_num(*mean) } else { "inf".into() }
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Which trainer wrote a history file, and the columns plotted for it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HistoryKind {
    Autoencoder,
    Denoiser,
}

impl HistoryKind {
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            HistoryKind::Autoencoder => &["recon", "commit", "gan", "perceptual", "semantic", "omega", "total"],
            HistoryKind::Denoiser => &["mse", "continuous", "discrete", "total"],
        }
    }

    /// Denoiser histories are recognised by their `mse` column; anything
    /// else must carry the full autoencoder set.
    pub fn detect(t: &Table) -> Self {
        if t.has("mse") {
            HistoryKind::Denoiser
        } else {
            HistoryKind::Autoencoder
        }
    }
}

/// One chart per loss column plus a summary overlay, as `(file name, svg)`.
pub fn history_charts(t: &Table) -> Result<Vec<(String, String)>> {
    let kind = HistoryKind::detect(t);
    let steps = t.numbers("step")?;
    let mut series = Vec::new();
    for &c in kind.columns() {
        let ys = t.numbers(c)?;
        series.push(Series {
            name: c.to_string(),
            points: steps.iter().copied().zip(ys).collect(),
        });
    }
    let mut files: Vec<(String, String)> = series
        .iter()
        .map(|s| (format!("loss-{}.svg", s.name), line_chart(&s.name, "step", "loss", std::slice::from_ref(s))))
        .collect();
    let overlay: Vec<Series> = series.into_iter().filter(|s| s.name != "omega").collect();
    let title = match kind {
        HistoryKind::Autoencoder => "autoencoder losses",
        HistoryKind::Denoiser => "denoiser losses",
    };
    files.push(("summary.svg".into(), line_chart(title, "step", "loss", &overlay)));
    Ok(files)
}

/// One bar chart per metric from an evaluation summary.
pub fn metric_charts(t: &Table) -> Result<Vec<(String, String)>> {
    let labels = t.column("label")?;
    let mut files = Vec::new();
    for m in ["psnr", "ssim", "fsim"] {
        let means = t.numbers(&format!("{m}_mean"))?;
        let stds = t.numbers(&format!("{m}_std"))?;
        let bars: Vec<(String, f64, f64)> = labels
            .iter()
            .cloned()
            .zip(means)
            .zip(stds)
            .map(|((l, a), b)| (l, a, b))
            .collect();
        let unit = if m == "psnr" { "dB" } else { "" };
        files.push((
            format!("metric-{m}.svg"),
            bar_chart(&m.to_uppercase(), unit, &bars),
        ));
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(headers: &[&str], rows: usize) -> Table {
        Table {
            headers: headers.iter().map(|s| s.to_string()).collect(),
            rows: (0..rows)
                .map(|r| headers.iter().enumerate().map(|(i, _)| format!("{}", r as f64 + i as f64 * 0.5)).collect())
                .collect(),
        }
    }

    #[test]
    fn ticks_are_round_and_inside() {
        let t = ticks(0.0, 1.0, 6);
        assert_eq!(t.first(), Some(&0.0));
        assert!(t.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(t.len() >= 3 && t.len() <= 7);
    }

    #[test]
    fn denoiser_history_gives_one_chart_per_component() {
        let t = table(&["step", "mse", "continuous", "discrete", "total", "lr"], 10);
        let files = history_charts(&t).unwrap();
        let names: Vec<&str> = files.iter().map(|f| f.0.as_str()).collect();
        assert_eq!(
            names,
            vec!["loss-mse.svg", "loss-continuous.svg", "loss-discrete.svg", "loss-total.svg", "summary.svg"]
        );
        assert!(files.iter().all(|(_, svg)| svg.starts_with("<svg") && svg.ends_with("</svg>\n")));
        assert_eq!(files, history_charts(&t).unwrap());
    }

    #[test]
    fn missing_column_is_named() {
        let t = table(&["step", "recon", "commit", "gan", "perceptual", "omega", "total"], 3);
        let e = history_charts(&t).unwrap_err();
        assert!(e.to_string().contains("`semantic`"), "{e}");
        assert_eq!(e.category(), crate::ErrorCategory::Config);
    }

    #[test]
    fn non_finite_points_are_skipped() {
        let s = Series {
            name: "a".into(),
            points: vec![(0.0, 1.0), (1.0, f64::NAN), (2.0, 0.5)],
        };
        let svg = line_chart("t", "x", "y", &[s]);
        assert!(!svg.contains("NaN"));
    }
}
