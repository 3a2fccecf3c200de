use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{HarnessError, ResultRow, AGGREGATE, ERROR_UNIT};
use crate::metrics::USE_CASE_ALPHAS;

pub const CSV_HEADER: [&str; 11] = [
    "dataset",
    "subsample",
    "user",
    "mechanism",
    "epsilon",
    "attack",
    "metric",
    "alpha",
    "value",
    "unit",
    "seed",
];

fn num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.dataset.as_str(),
            &r.subsample,
            &r.user,
            &r.mechanism,
            &num(r.epsilon),
            &r.attack,
            &r.metric,
            &num(r.alpha),
            &num(r.value),
            &r.unit,
            &r.seed.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn emit_csv(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<(), HarnessError> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_csv(rows, std::io::BufWriter::new(file))
}

struct Series {
    mechanism: String,
    points: Vec<(f64, f64)>,
    /// Value of a mechanism without ε, drawn as a horizontal line.
    flat: Option<f64>,
}

struct Figure {
    title: String,
    file_stem: String,
    y_label: String,
    series: Vec<Series>,
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Groups aggregate rows into figures, keeping first-appearance order.
fn figures(rows: &[ResultRow]) -> Vec<Figure> {
    let mut out: Vec<Figure> = Vec::new();
    for r in rows {
        if r.user != AGGREGATE || r.unit == ERROR_UNIT {
            continue;
        }
        let Some(value) = r.value else { continue };
        if let Some(a) = r.alpha {
            if !USE_CASE_ALPHAS.contains(&a) {
                continue;
            }
        }
        let variant = if r.subsample.is_empty() { "full" } else { &r.subsample };
        let alpha_part = r.alpha.map(|a| format!(" α={a}m")).unwrap_or_default();
        let title = format!("{} [{}] {} / {}{}", r.dataset, variant, r.attack, r.metric, alpha_part);
        let idx = match out.iter().position(|f| f.title == title) {
            Some(i) => i,
            None => {
                let mut stem = [r.dataset.as_str(), variant, &r.attack, &r.metric]
                    .iter()
                    .map(|s| sanitize(s))
                    .collect::<Vec<_>>()
                    .join("__");
                if let Some(a) = r.alpha {
                    stem.push_str(&format!("__alpha{a}"));
                }
                out.push(Figure {
                    title,
                    file_stem: stem,
                    y_label: format!("{} ({})", r.metric, r.unit),
                    series: Vec::new(),
                });
                out.len() - 1
            }
        };
        let fig = &mut out[idx];
        let s = match fig.series.iter().position(|s| s.mechanism == r.mechanism) {
            Some(i) => &mut fig.series[i],
            None => {
                fig.series.push(Series {
                    mechanism: r.mechanism.clone(),
                    points: Vec::new(),
                    flat: None,
                });
                fig.series.last_mut().expect("just pushed")
            }
        };
        match r.epsilon {
            Some(e) => s.points.push((e, value)),
            None => s.flat = Some(value),
        }
    }
    out
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn span(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        (lo - pad, hi + pad)
    }
}

fn render(fig: &Figure) -> String {
    const W: f64 = 720.0;
    const H: f64 = 440.0;
    const L: f64 = 80.0;
    const R: f64 = 170.0;
    const T: f64 = 40.0;
    const B: f64 = 60.0;
    let xs = fig.series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let ys = fig
        .series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1).chain(s.flat));
    let (x0, x1) = span(
        xs.clone().fold(f64::INFINITY, f64::min),
        xs.fold(f64::NEG_INFINITY, f64::max),
    );
    let (x0, x1) = if x0.is_finite() { (x0, x1) } else { (0.0, 1.0) };
    let (y0, y1) = span(
        ys.clone().fold(0.0, f64::min),
        ys.fold(f64::NEG_INFINITY, f64::max).max(0.0) * 1.05,
    );
    let px = |x: f64| L + (x - x0) / (x1 - x0) * (W - L - R);
    let py = |y: f64| H - B - (y - y0) / (y1 - y0) * (H - T - B);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        (L + W - R) / 2.0,
        escape(&fig.title)
    );
    let _ = writeln!(
        svg,
        r##"<path d="M{L},{T} V{} H{}" fill="none" stroke="#333"/>"##,
        H - B,
        W - R
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(
            svg,
            r##"<text x="{:.2}" y="{}" text-anchor="middle">{}</text><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
            px(xv),
            H - B + 18.0,
            format_tick(xv),
            L - 6.0,
            py(yv) + 4.0,
            format_tick(yv)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">ε (1/m)</text>"#,
        (L + W - R) / 2.0,
        H - 18.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        (T + H - B) / 2.0,
        (T + H - B) / 2.0,
        escape(&fig.y_label)
    );
    for (i, s) in fig.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if !s.points.is_empty() {
            let pts: Vec<String> = s
                .points
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                pts.join(" ")
            );
        }
        if let Some(v) = s.flat {
            let _ = writeln!(
                svg,
                r#"<line x1="{L}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="{color}" stroke-dasharray="6 4"/>"#,
                W - R,
                y = py(v)
            );
        }
        let ly = T + 10.0 + 18.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{}" y="{}" width="14" height="4" fill="{color}"/><text x="{}" y="{}">{}</text>"#,
            W - R + 16.0,
            ly - 4.0,
            W - R + 36.0,
            ly + 1.0,
            escape(&s.mechanism)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn format_tick(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 {
        "0".into()
    } else if a < 0.01 {
        format!("{v:.5}")
    } else if a < 10.0 {
        format!("{v:.3}")
    } else {
        format!("{v:.0}")
    }
}

/// Writes one SVG line chart per (dataset variant, attack, metric), and per
/// use-case α for curve metrics, from the AGGREGATE rows. Returns the
/// written paths.
pub fn emit_plots(rows: &[ResultRow], dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let figs = figures(rows);
    if figs.is_empty() {
        return Err(HarnessError::NothingToPlot);
    }
    fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut used = HashSet::new();
    let mut written = Vec::with_capacity(figs.len());
    for fig in &figs {
        let mut stem = fig.file_stem.clone();
        let mut n = 1;
        while !used.insert(stem.clone()) {
            n += 1;
            stem = format!("{}_{n}", fig.file_stem);
        }
        let path = dir.join(format!("{stem}.svg"));
        fs::write(&path, render(fig)).map_err(|source| HarnessError::Io {
            path: path.clone(),
            source,
        })?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(mechanism: &str, eps: Option<f64>, value: f64) -> ResultRow {
        ResultRow {
            dataset: "d".into(),
            subsample: String::new(),
            user: AGGREGATE.into(),
            mechanism: mechanism.into(),
            epsilon: eps,
            attack: "none".into(),
            metric: "average_error".into(),
            alpha: None,
            value: Some(value),
            unit: "m".into(),
            seed: 7,
        }
    }

    #[test]
    fn empty_rows_give_header_only() {
        let mut buf = Vec::new();
        write_csv(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "dataset,subsample,user,mechanism,epsilon,attack,metric,alpha,value,unit,seed\n"
        );
    }

    #[test]
    fn fields_are_formatted() {
        let mut r = row("pl", Some(0.00139), 1440.5);
        r.dataset = "a,b".into();
        let mut e = row("id", None, 0.0);
        e.value = None;
        e.unit = ERROR_UNIT.into();
        let mut buf = Vec::new();
        write_csv(&[r, e], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "\"a,b\",,AGGREGATE,pl,0.00139,none,average_error,,1440.5,m,7");
        assert_eq!(lines[2], "d,,AGGREGATE,id,,none,average_error,,,error,7");
    }

    #[test]
    fn plot_structure() {
        let eps: Vec<f64> = crate::mechanisms::EPSILON_SWEEP.to_vec();
        let mut rows = Vec::new();
        for m in ["pl", "memory"] {
            for (i, &e) in eps.iter().enumerate() {
                rows.push(row(m, Some(e), 100.0 * i as f64));
            }
        }
        rows.push(row("identity", None, 0.0));
        let figs = figures(&rows);
        assert_eq!(figs.len(), 1);
        let svg = render(&figs[0]);
        let polylines: Vec<&str> = svg.lines().filter(|l| l.starts_with("<polyline")).collect();
        assert_eq!(polylines.len(), 2);
        for p in polylines {
            let pts = p.split("points=\"").nth(1).unwrap().trim_end_matches("\"/>");
            assert_eq!(pts.split(' ').count(), 10);
        }
        assert!(emit_plots(&[], Path::new("/nonexistent")).is_err());
    }
}
