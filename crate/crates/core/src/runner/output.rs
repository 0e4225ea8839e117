//! CSV, SVG and JSON writers. Floats are written with Rust's shortest
//! round-trip formatting, so identical runs give identical bytes.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::reward::MixtureSpec;
use crate::{Result, Vec2};

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// CSV writer that keeps the header and rows in memory until `finish`.
pub struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record(header.iter().map(|h| h.as_ref()))
            .map_err(csv_err)?;
        Ok(Self { writer })
    }

    pub fn row<S: AsRef<str>>(&mut self, fields: &[S]) -> Result<()> {
        self.writer
            .write_record(fields.iter().map(|f| f.as_ref()))
            .map_err(csv_err)
    }

    pub fn into_bytes(self) -> Result<Vec<u8>> {
        self.writer
            .into_inner()
            .map_err(|e| crate::Error::Io(std::io::Error::other(e.to_string())))
    }

    pub fn finish(self, path: &Path) -> Result<()> {
        fs::write(path, self.into_bytes()?)?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> crate::Error {
    crate::Error::Io(std::io::Error::other(e.to_string()))
}

/// `x,y,assigned_mode` per sample.
pub fn write_samples_csv(path: &Path, spec: &MixtureSpec, samples: &[Vec2]) -> Result<()> {
    let mut t = Table::new(&["x", "y", "assigned_mode"])?;
    for x in samples {
        t.row(&[
            x[0].to_string(),
            x[1].to_string(),
            spec.nearest_component(*x).to_string(),
        ])?;
    }
    t.finish(path)
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Scatter plot of samples coloured by assigned mode, with component means
/// marked as crosses.
pub fn scatter_svg(title: &str, spec: &MixtureSpec, samples: &[Vec2]) -> String {
    let size = 480.0;
    let pad = 24.0;
    let extent = spec
        .components()
        .iter()
        .map(|c| c.mean[0].abs().max(c.mean[1].abs()))
        .fold(1.0, f64::max)
        + 2.0;
    let px = |v: f64| pad + (v + extent) / (2.0 * extent) * (size - 2.0 * pad);
    let py = |v: f64| size - px(v);

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" viewBox=\"0 0 {size} {size}\">\n"
    ));
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    s.push_str(&format!(
        "<text x=\"{pad}\" y=\"16\" font-family=\"sans-serif\" font-size=\"13\">{}</text>\n",
        escape(title)
    ));
    for x in samples {
        if !(x[0].abs() <= extent && x[1].abs() <= extent) {
            continue;
        }
        let mode = spec.nearest_component(*x);
        s.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"1.6\" fill=\"{}\" fill-opacity=\"0.6\"/>\n",
            px(x[0]),
            py(x[1]),
            PALETTE[mode % PALETTE.len()]
        ));
    }
    for c in spec.components() {
        let (cx, cy) = (px(c.mean[0]), py(c.mean[1]));
        let stroke = if c.reward_value > spec.background_reward() {
            "black"
        } else {
            "#999"
        };
        s.push_str(&format!(
            "<path d=\"M{:.2} {:.2}h10M{:.2} {:.2}v10\" stroke=\"{stroke}\" stroke-width=\"1.5\"/>\n",
            cx - 5.0,
            cy,
            cx,
            cy - 5.0
        ));
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
