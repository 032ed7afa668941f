//! File formats: diagnostics CSV, binary field dumps and SVG line charts.
//!
//! Binary dump layout (all integers and floats little-endian):
//!
//! ```text
//! b"CHNS1" | u32 dim | u32 n | phi | u_x | u_y [| u_z] | pressure
//! ```
//!
//! Each field is written as `f64`s in storage order (`x` fastest). Cell
//! fields hold `n^d` values; velocity component `a` holds `n^d + n^(d-1)`
//! values (one extra face layer along `a`).

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::diagnostics::{DiagnosticsRecord, TrajectoryLedger, COLUMNS};
use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, VectorField};
use crate::solver::State;

pub const DUMP_MAGIC: &[u8; 5] = b"CHNS1";

/// Line-oriented diagnostics CSV; every row is flushed as soon as it is
/// written so an interrupted run leaves only complete rows behind.
pub struct CsvSink {
    out: BufWriter<File>,
}

impl CsvSink {
    pub fn create(path: &Path) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", DiagnosticsRecord::csv_header())?;
        out.flush()?;
        Ok(Self { out })
    }

    pub fn write(&mut self, rec: &DiagnosticsRecord) -> Result<()> {
        writeln!(self.out, "{}", rec.to_csv_row())?;
        self.out.flush()?;
        Ok(())
    }
}

pub fn write_ledger_csv(path: &Path, ledger: &TrajectoryLedger) -> Result<()> {
    std::fs::write(path, ledger.to_csv())?;
    Ok(())
}

/// Parses a diagnostics CSV. Columns are matched by header name, so any
/// order of the schema columns is accepted; all must be present.
pub fn parse_diagnostics_csv(text: &str) -> Result<Vec<DiagnosticsRecord>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Parameter("CSV is empty".into()))?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    let mut pos = [0usize; 11];
    for (k, col) in COLUMNS.iter().enumerate() {
        pos[k] = names
            .iter()
            .position(|n| n == col)
            .ok_or_else(|| Error::Parameter(format!("CSV header lacks column {col:?}")))?;
    }
    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != names.len() {
            return Err(Error::Parameter(format!(
                "CSV line {} has {} fields, header has {}",
                lineno + 2,
                fields.len(),
                names.len()
            )));
        }
        let ordered: Vec<&str> = pos.iter().map(|&p| fields[p]).collect();
        out.push(DiagnosticsRecord::from_csv_row(&ordered.join(","))?);
    }
    if out.is_empty() {
        return Err(Error::Parameter("CSV has a header but no data rows".into()));
    }
    Ok(out)
}

pub fn encode_dump(state: &State) -> Vec<u8> {
    let grid = state.grid();
    let mut buf = Vec::new();
    buf.extend_from_slice(DUMP_MAGIC);
    buf.extend_from_slice(&(grid.dim() as u32).to_le_bytes());
    buf.extend_from_slice(&(grid.n() as u32).to_le_bytes());
    let mut push = |vals: &[f64]| vals.iter().for_each(|v| buf.extend_from_slice(&v.to_le_bytes()));
    push(state.phi.values());
    for a in 0..grid.dim() {
        push(state.u.comp(a));
    }
    push(state.pressure.values());
    buf
}

pub fn write_dump(path: &Path, state: &State) -> Result<()> {
    std::fs::write(path, encode_dump(state))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldDump {
    pub phi: ScalarField,
    pub u: VectorField,
    pub pressure: ScalarField,
}

pub fn decode_dump(bytes: &[u8]) -> Result<FieldDump> {
    let bad = |m: &str| Error::Parameter(format!("malformed field dump: {m}"));
    if bytes.len() < 13 || &bytes[..5] != DUMP_MAGIC {
        return Err(bad("missing CHNS1 header"));
    }
    let dim = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let n = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    let grid = Grid::new(dim, n)?;
    let mut off = 13;
    let mut take = |count: usize| -> Result<Vec<f64>> {
        let end = off + 8 * count;
        if end > bytes.len() {
            return Err(bad("truncated payload"));
        }
        let v = bytes[off..end].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        off = end;
        Ok(v)
    };
    let phi = ScalarField::from_values(grid, take(grid.num_cells())?)?;
    let comps = (0..dim).map(|a| take(grid.num_faces(a))).collect::<Result<Vec<_>>>()?;
    let u = VectorField::from_components(grid, comps)?;
    let pressure = ScalarField::from_values(grid, take(grid.num_cells())?)?;
    if off != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    Ok(FieldDump { phi, u, pressure })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub series: Vec<Series>,
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e-2 && v.abs() < 1e4 {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.3e}")
    }
}

/// Renders panels stacked vertically in a fixed `800 x 600` view box.
/// Non-finite points are skipped. The output depends only on the input.
pub fn render_svg(panels: &[Panel]) -> String {
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
    let k = panels.len().max(1) as f64;
    let slot = HEIGHT / k;
    for (pi, panel) in panels.iter().enumerate() {
        let top = pi as f64 * slot;
        let (left, right) = (80.0, WIDTH - 150.0);
        let (y0, y1) = (top + 24.0, top + slot - 30.0);
        let pts: Vec<(f64, f64)> =
            panel.series.iter().flat_map(|se| se.points.iter().copied()).filter(|(x, y)| x.is_finite() && y.is_finite()).collect();
        let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for (x, y) in &pts {
            xmin = xmin.min(*x);
            xmax = xmax.max(*x);
            ymin = ymin.min(*y);
            ymax = ymax.max(*y);
        }
        if pts.is_empty() {
            (xmin, xmax, ymin, ymax) = (0.0, 1.0, 0.0, 1.0);
        }
        if xmax == xmin {
            xmin -= 0.5;
            xmax += 0.5;
        }
        if ymax == ymin {
            let pad = if ymin == 0.0 { 1.0 } else { 0.05 * ymin.abs() };
            ymin -= pad;
            ymax += pad;
        }
        let sx = |x: f64| left + (x - xmin) / (xmax - xmin) * (right - left);
        let sy = |y: f64| y1 - (y - ymin) / (ymax - ymin) * (y1 - y0);
        writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="13">{}</text>"#, left, top + 16.0, escape(&panel.title)).unwrap();
        writeln!(
            s,
            r##"<rect x="{left:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#444"/>"##,
            right - left,
            y1 - y0
        )
        .unwrap();
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let yv = ymin + f * (ymax - ymin);
            let xv = xmin + f * (xmax - xmin);
            writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, left - 4.0, sy(yv) + 4.0, tick(yv)).unwrap();
            writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, sx(xv), y1 + 14.0, tick(xv)).unwrap();
        }
        writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, 0.5 * (left + right), y1 + 27.0, escape(&panel.x_label))
            .unwrap();
        for (si, se) in panel.series.iter().enumerate() {
            let color = PALETTE[si % PALETTE.len()];
            let mut path = String::new();
            for (x, y) in se.points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()) {
                if !path.is_empty() {
                    path.push(' ');
                }
                write!(path, "{:.2},{:.2}", sx(*x), sy(*y)).unwrap();
            }
            if se.points.len() == 1 {
                let (x, y) = se.points[0];
                writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(x), sy(y)).unwrap();
            } else {
                writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{path}"/>"#).unwrap();
            }
            let ly = y0 + 12.0 + 14.0 * si as f64;
            writeln!(s, r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#, right + 10.0, right + 28.0)
                .unwrap();
            writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, right + 32.0, ly + 4.0, escape(&se.label)).unwrap();
        }
    }
    s.push_str("</svg>\n");
    s
}

/// One panel per requested column, plotted against `t`.
pub fn plot_columns(records: &[DiagnosticsRecord], columns: &[&str]) -> Result<String> {
    if records.is_empty() {
        return Err(Error::Parameter("no diagnostics rows to plot".into()));
    }
    let mut panels = Vec::new();
    for col in columns {
        if !COLUMNS.contains(col) {
            return Err(Error::Parameter(format!("unknown diagnostics column {col:?}")));
        }
        let points = records.iter().map(|r| (r.t, r.get(col).unwrap())).collect();
        panels.push(Panel {
            title: (*col).to_string(),
            x_label: "t".into(),
            series: vec![Series { label: (*col).to_string(), points }],
        });
    }
    Ok(render_svg(&panels))
}
