//! Artifact emission: CSV tables, static SVG plots, and the output manifest.
//!
//! Everything here is deterministic. Numbers are printed in scientific
//! notation with 12 significant digits in CSVs and with fixed short precision
//! in SVGs, so a run with the same config and seed reproduces every artifact
//! byte for byte. The manifest carries no timestamps for the same reason.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::Path;

use crate::CliError;

pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn new(name: &str, bytes: Vec<u8>) -> Self {
        Artifact { name: name.into(), bytes }
    }
}

/// 12 significant digits, locale-independent.
pub fn fmt_sig(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.11e}")
    }
}

pub struct CsvTable {
    buf: String,
}

impl CsvTable {
    pub fn new(header: &str) -> Self {
        CsvTable { buf: format!("{header}\n") }
    }

    /// One row; numeric cells are already formatted by the caller.
    pub fn row(&mut self, cells: &[String]) {
        self.buf.push_str(&cells.join(","));
        self.buf.push('\n');
    }

    pub fn num_row(&mut self, values: &[f64]) {
        let cells: Vec<String> = values.iter().map(|&v| fmt_sig(v)).collect();
        self.row(&cells);
    }

    pub fn into_artifact(self, name: &str) -> Artifact {
        Artifact::new(name, self.buf.into_bytes())
    }
}

#[derive(Serialize)]
struct ManifestEntry {
    file: String,
    bytes: usize,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest {
    command: String,
    seed: u64,
    outputs: Vec<ManifestEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    format!("{:x}", h.finalize())
}

/// Write all artifacts into `dir`, then a manifest listing them with content
/// hashes. Returns the written file names including the manifest.
pub fn write_artifacts(
    dir: &Path,
    command: &str,
    seed: u64,
    artifacts: &[Artifact],
) -> Result<Vec<String>, CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let mut written = Vec::new();
    let mut entries = Vec::new();
    for a in artifacts {
        let path = dir.join(&a.name);
        std::fs::write(&path, &a.bytes)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        entries.push(ManifestEntry {
            file: a.name.clone(),
            bytes: a.bytes.len(),
            sha256: sha256_hex(&a.bytes),
        });
        written.push(a.name.clone());
    }
    let manifest = Manifest { command: command.into(), seed, outputs: entries };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Io(format!("manifest serialization: {e}")))?;
    let path = dir.join("manifest.json");
    std::fs::write(&path, json.as_bytes())
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    written.push("manifest.json".into());
    Ok(written)
}

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = ["#1f6feb", "#d1242f", "#2da44e", "#bf8700", "#8250df", "#57606a"];

const W: f64 = 720.0;
const H: f64 = 480.0;
const ML: f64 = 72.0;
const MR: f64 = 24.0;
const MT: f64 = 40.0;
const MB: f64 = 56.0;

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if a >= 1e4 || a < 1e-3 {
        format!("{v:.2e}")
    } else {
        // trim trailing zeros from a fixed rendering
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    }
}

/// A single-panel line plot. Ranges are padded so flat curves stay visible;
/// output is a complete standalone SVG document.
pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> Vec<u8> {
    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in &s.points {
            if x.is_finite() && y.is_finite() {
                xmin = xmin.min(x);
                xmax = xmax.max(x);
                ymin = ymin.min(y);
                ymax = ymax.max(y);
            }
        }
    }
    if !xmin.is_finite() {
        xmin = 0.0;
        xmax = 1.0;
        ymin = 0.0;
        ymax = 1.0;
    }
    if xmax - xmin < 1e-12 {
        let pad = xmin.abs().max(1.0) * 0.5;
        xmin -= pad;
        xmax += pad;
    }
    if ymax - ymin < 1e-12 {
        let pad = ymin.abs().max(1.0) * 0.5;
        ymin -= pad;
        ymax += pad;
    }
    let ypad = 0.05 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    let px = |x: f64| ML + (x - xmin) / (xmax - xmin) * (W - ML - MR);
    let py = |y: f64| H - MB - (y - ymin) / (ymax - ymin) * (H - MT - MB);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\">\n"
    ));
    svg.push_str(&format!("<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        ML + (W - ML - MR) / 2.0,
        title
    ));

    // frame and ticks
    svg.push_str(&format!(
        "<rect x=\"{ML}\" y=\"{MT}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"#333\"/>\n",
        W - ML - MR,
        H - MT - MB
    ));
    let nticks = 5;
    for i in 0..=nticks {
        let t = i as f64 / nticks as f64;
        let xv = xmin + t * (xmax - xmin);
        let yv = ymin + t * (ymax - ymin);
        let xp = px(xv);
        let yp = py(yv);
        svg.push_str(&format!(
            "<line x1=\"{xp:.1}\" y1=\"{:.1}\" x2=\"{xp:.1}\" y2=\"{:.1}\" stroke=\"#333\"/>\n",
            H - MB,
            H - MB + 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{xp:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"11\">{}</text>\n",
            H - MB + 18.0,
            fmt_tick(xv)
        ));
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{yp:.1}\" x2=\"{ML}\" y2=\"{yp:.1}\" stroke=\"#333\"/>\n",
            ML - 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-size=\"11\">{}</text>\n",
            ML - 8.0,
            yp + 4.0,
            fmt_tick(yv)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n",
        ML + (W - ML - MR) / 2.0,
        H - 12.0,
        xlabel
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"13\" \
         transform=\"rotate(-90 16 {:.1})\">{}</text>\n",
        MT + (H - MT - MB) / 2.0,
        MT + (H - MT - MB) / 2.0,
        ylabel
    ));

    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        if pts.len() > 1 {
            svg.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\"/>\n",
                pts.join(" ")
            ));
        }
        if s.points.len() <= 64 {
            for &(x, y) in s.points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()) {
                svg.push_str(&format!(
                    "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{color}\"/>\n",
                    px(x),
                    py(y)
                ));
            }
        }
        // legend swatch and label, stacked under the top frame edge
        let ly = MT + 16.0 + 16.0 * k as f64;
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            ML + 10.0,
            ML + 34.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\">{}</text>\n",
            ML + 40.0,
            ly + 4.0,
            s.label
        ));
    }
    svg.push_str("</svg>\n");
    svg.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_sig(0.25), "2.50000000000e-1");
        assert_eq!(fmt_sig(-1.0 / 3.0), "-3.33333333333e-1");
        assert_eq!(fmt_sig(0.0), "0.00000000000e0");
    }

    #[test]
    fn plot_is_deterministic_and_well_formed() {
        let s = vec![Series { label: "curve".into(), points: vec![(0.0, 0.0), (1.0, 1.0)] }];
        let a = line_plot("t", "x", "y", &s);
        let b = line_plot("t", "x", "y", &s);
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("<svg"));
        assert!(text.ends_with("</svg>\n"));
        assert!(text.contains("polyline"));
    }

    #[test]
    fn flat_curve_keeps_a_finite_range() {
        let s = vec![Series { label: "zero".into(), points: vec![(0.0, 0.0), (1.0, 0.0)] }];
        let text = String::from_utf8(line_plot("t", "x", "y", &s)).unwrap();
        assert!(!text.contains("NaN") && !text.contains("inf"));
    }
}
