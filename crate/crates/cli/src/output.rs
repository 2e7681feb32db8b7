//! CSV and SVG emission. Every CSV starts with a `# config_hash=… seed=…`
//! comment line followed by a header row.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use crate::config::ExperimentConfig;

pub struct CsvOut {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvOut {
    pub fn create(path: impl AsRef<Path>, cfg: &ExperimentConfig, header: &[&str]) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut file = BufWriter::new(
            File::create(&path).with_context(|| format!("creating {}", path.display()))?,
        );
        writeln!(file, "# config_hash={} seed={}", cfg.hash(), cfg.seed)?;
        let mut writer = csv::Writer::from_writer(file);
        writer.write_record(header)?;
        Ok(Self { path, writer })
    }

    pub fn row<I, T>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        self.writer
            .write_record(fields)
            .with_context(|| format!("writing {}", self.path.display()))
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.writer
            .flush()
            .with_context(|| format!("writing {}", self.path.display()))?;
        Ok(self.path)
    }
}

/// Shortest round-trip decimal form.
pub fn num(x: f64) -> String {
    x.to_string()
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Optional symmetric error bar per point.
    pub errors: Option<Vec<f64>>,
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

/// Minimal self-contained line plot.
pub fn svg_plot(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
) -> Result<()> {
    let (w, h, m) = (720.0, 440.0, 60.0);
    let mut xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let first = xs.next().unwrap_or(0.0);
    let (mut x0, mut x1) = xs.fold((first, first), |(a, b), x| (a.min(x), b.max(x)));
    let mut y0 = f64::INFINITY;
    let mut y1 = f64::NEG_INFINITY;
    for s in series {
        for (i, p) in s.points.iter().enumerate() {
            let e = s.errors.as_ref().map_or(0.0, |e| e[i]);
            y0 = y0.min(p.1 - e);
            y1 = y1.max(p.1 + e);
        }
    }
    if !y0.is_finite() {
        (y0, y1) = (0.0, 1.0);
    }
    if x1 == x0 {
        (x0, x1) = (x0 - 0.5, x1 + 0.5);
    }
    if y1 == y0 {
        (y0, y1) = (y0 - 0.5, y1 + 0.5);
    }
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n\
         <line x1=\"{m}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{}\" stroke=\"black\"/>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n\
         <text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        w / 2.0, escape(title),
        h - m, w - m, h - m,
        h - m,
        w / 2.0, h - 16.0, escape(x_label),
        h / 2.0, h / 2.0, escape(y_label),
    ));
    for (v, anchor_x, anchor_y, is_x) in [
        (x0, sx(x0), h - m + 16.0, true),
        (x1, sx(x1), h - m + 16.0, true),
        (y0, m - 6.0, sy(y0), false),
        (y1, m - 6.0, sy(y1), false),
    ] {
        let anchor = if is_x { "middle" } else { "end" };
        out.push_str(&format!(
            "<text x=\"{anchor_x:.1}\" y=\"{anchor_y:.1}\" text-anchor=\"{anchor}\">{}</text>\n",
            short(v)
        ));
    }
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1)))
            .collect();
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
        if let Some(errs) = &s.errors {
            for (p, e) in s.points.iter().zip(errs) {
                out.push_str(&format!(
                    "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"{color}\"/>\n<circle cx=\"{x:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>\n",
                    sy(p.1 - e),
                    sy(p.1 + e),
                    sy(p.1),
                    x = sx(p.0),
                ));
            }
        }
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" fill=\"{color}\">{}</text>\n",
            w - m - 140.0,
            m + 16.0 * (i as f64 + 1.0),
            escape(&s.label)
        ));
    }
    out.push_str("</svg>\n");
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

fn short(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
