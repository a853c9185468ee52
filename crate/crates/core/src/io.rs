//! Text file formats.
//!
//! * HMAP v1: a `HMAP <H> <W>` header line followed by `H` lines of `W`
//!   space-separated decimal reals. Heatmaps are written with 6 decimals,
//!   masks as `0`/`1`.
//! * Plain PGM (`P2`, maxval 1) for masks and boundary maps.
//! * JSON for keypoints (`[{"row", "col", "score"}]`) and polygons.
//! * CSV and JSON evaluation reports.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::heatmap::{Heatmap, Keypoint};
use crate::metrics::EvalReport;
use crate::polygonize::{Polygon, PolygonFile};
use crate::raster::Mask;

/// Write `contents` to a sibling temp file, then rename it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_to_string(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}

// ---- HMAP v1 ----

fn format_hmap<T>(grid: &Grid<T>, mut cell: impl FnMut(&mut String, &T)) -> String {
    let (h, w) = grid.dims();
    let mut out = String::with_capacity(h * w * 9 + 16);
    let _ = writeln!(out, "HMAP {h} {w}");
    for r in 0..h {
        for (c, v) in grid.row(r).iter().enumerate() {
            if c > 0 {
                out.push(' ');
            }
            cell(&mut out, v);
        }
        out.push('\n');
    }
    out
}

pub fn heatmap_to_hmap(heatmap: &Heatmap) -> String {
    format_hmap(heatmap.grid(), |out, v| {
        let _ = write!(out, "{v:.6}");
    })
}

/// Arbitrary reals (e.g. a loss gradient) in scientific notation.
pub fn grid_to_hmap(grid: &Grid<f64>) -> String {
    format_hmap(grid, |out, v| {
        let _ = write!(out, "{v:.6e}");
    })
}

pub fn mask_to_hmap(mask: &Mask) -> String {
    format_hmap(mask.grid(), |out, v| out.push(if *v != 0 { '1' } else { '0' }))
}

/// Parse an HMAP v1 grid of arbitrary reals.
pub fn parse_hmap(text: &str) -> Result<Grid<f64>> {
    const WHAT: &str = "HMAP";
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| Error::parse(WHAT, 1, "empty input"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let (h, w) = match fields.as_slice() {
        ["HMAP", h, w] => (
            h.parse::<usize>()
                .map_err(|e| Error::parse(WHAT, 1, format!("bad height '{h}': {e}")))?,
            w.parse::<usize>()
                .map_err(|e| Error::parse(WHAT, 1, format!("bad width '{w}': {e}")))?,
        ),
        _ => return Err(Error::parse(WHAT, 1, "expected header 'HMAP <H> <W>'")),
    };
    if h == 0 || w == 0 {
        return Err(Error::parse(WHAT, 1, "dimensions must be positive"));
    }
    let total = h
        .checked_mul(w)
        .filter(|&n| n <= text.len())
        .ok_or_else(|| Error::parse(WHAT, 1, format!("{h}x{w} does not match the file size")))?;

    let mut values = Vec::with_capacity(total);
    let mut rows = 0;
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        if rows == h {
            return Err(Error::parse(WHAT, lineno, format!("more than {h} rows")));
        }
        let before = values.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse(WHAT, lineno, format!("not a number: '{tok}'")))?;
            if !v.is_finite() {
                return Err(Error::parse(WHAT, lineno, format!("non-finite value '{tok}'")));
            }
            values.push(v);
        }
        let n = values.len() - before;
        if n != w {
            return Err(Error::parse(WHAT, lineno, format!("expected {w} values, found {n}")));
        }
        rows += 1;
    }
    if rows != h {
        return Err(Error::parse(WHAT, text.lines().count(), format!("expected {h} rows, found {rows}")));
    }
    Grid::from_vec(h, w, values)
}

pub fn parse_heatmap(text: &str) -> Result<Heatmap> {
    Heatmap::from_grid(parse_hmap(text)?)
}

/// Parse an HMAP grid whose values must all be 0 or 1.
pub fn parse_mask_hmap(text: &str) -> Result<Mask> {
    let grid = parse_hmap(text)?;
    if let Some(v) = grid.values().iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::Value(format!("mask HMAP value {v} is not 0 or 1")));
    }
    let (h, w) = grid.dims();
    Mask::from_vec(h, w, grid.values().iter().map(|&v| v as u8).collect())
}

// ---- PGM ----

pub fn mask_to_pgm(mask: &Mask) -> String {
    let (h, w) = mask.dims();
    let mut out = String::with_capacity(h * w * 2 + 16);
    let _ = write!(out, "P2\n{w} {h}\n1\n");
    for r in 0..h {
        for (c, v) in mask.grid().row(r).iter().enumerate() {
            if c > 0 {
                out.push(' ');
            }
            out.push(if *v != 0 { '1' } else { '0' });
        }
        out.push('\n');
    }
    out
}

/// Parse a plain (P2) PGM; any nonzero sample becomes 1.
pub fn parse_pgm(text: &str) -> Result<Mask> {
    const WHAT: &str = "PGM";
    let mut tokens = text.lines().enumerate().flat_map(|(i, line)| {
        let content = line.split('#').next().unwrap_or("");
        content.split_whitespace().map(move |t| (i + 1, t))
    });
    let mut next = |what: &str| {
        tokens
            .next()
            .ok_or_else(|| Error::parse(WHAT, text.lines().count().max(1), format!("missing {what}")))
    };
    let (line, magic) = next("magic number")?;
    if magic != "P2" {
        return Err(Error::parse(WHAT, line, format!("expected 'P2', found '{magic}'")));
    }
    let mut header = |what: &'static str| -> Result<usize> {
        let (line, tok) = next(what)?;
        tok.parse()
            .map_err(|_| Error::parse(WHAT, line, format!("bad {what} '{tok}'")))
    };
    let w = header("width")?;
    let h = header("height")?;
    let maxval = header("maxval")?;
    if w == 0 || h == 0 || maxval == 0 {
        return Err(Error::parse(WHAT, 2, "width, height and maxval must be positive"));
    }
    let total = h
        .checked_mul(w)
        .filter(|&n| n <= text.len())
        .ok_or_else(|| Error::parse(WHAT, 2, format!("{w}x{h} does not match the file size")))?;
    let mut values = Vec::with_capacity(total);
    for _ in 0..total {
        let (line, tok) = next("pixel value")?;
        let v: usize = tok
            .parse()
            .map_err(|_| Error::parse(WHAT, line, format!("bad pixel value '{tok}'")))?;
        if v > maxval {
            return Err(Error::parse(WHAT, line, format!("pixel value {v} exceeds maxval {maxval}")));
        }
        values.push(u8::from(v != 0));
    }
    if let Some((line, tok)) = tokens.next() {
        return Err(Error::parse(WHAT, line, format!("trailing data '{tok}'")));
    }
    Mask::from_vec(h, w, values)
}

/// Read a mask from `.pgm` or HMAP (any other extension).
pub fn read_mask(path: &Path) -> Result<Mask> {
    let text = read_to_string(path)?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
        parse_pgm(&text)
    } else {
        parse_mask_hmap(&text)
    }
}

pub fn read_heatmap(path: &Path) -> Result<Heatmap> {
    parse_heatmap(&read_to_string(path)?)
}

// ---- JSON ----

pub fn keypoints_to_json(keypoints: &[Keypoint]) -> String {
    let mut s = serde_json::to_string_pretty(keypoints).expect("keypoints serialize");
    s.push('\n');
    s
}

pub fn parse_keypoints(text: &str) -> Result<Vec<Keypoint>> {
    let kps: Vec<Keypoint> = serde_json::from_str(text)?;
    if let Some(k) = kps.iter().find(|k| !(0.0..=1.0).contains(&k.score)) {
        return Err(Error::Value(format!(
            "keypoint (row={}, col={}) has score {} outside [0, 1]",
            k.row, k.col, k.score
        )));
    }
    Ok(kps)
}

pub fn polygon_to_json(polygon: &Polygon) -> String {
    let mut s = serde_json::to_string_pretty(&polygon.to_file()).expect("polygon serializes");
    s.push('\n');
    s
}

pub fn parse_polygon(text: &str) -> Result<Polygon> {
    let file: PolygonFile = serde_json::from_str(text)?;
    Polygon::try_from(file)
}

// ---- reports ----

/// One labelled report row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    #[serde(flatten)]
    pub report: EvalReport,
}

/// Per-patch rows, the aggregate row and any warnings.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
    pub aggregate: Option<ReportRow>,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<u64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::Config(format!("unknown report format '{other}'"))),
        }
    }
}

pub const CSV_HEADER: &str = "method,f1,iou,ssim,boundary_f,n_patches";

fn scaled(v: f64, percent: bool) -> f64 {
    if percent {
        v * 100.0
    } else {
        v
    }
}

pub fn csv_row(row: &ReportRow, percent: bool) -> String {
    let r = &row.report;
    format!(
        "{},{:.6},{:.6},{:.6},{:.6},{}",
        csv_field(&row.method),
        scaled(r.f1, percent),
        scaled(r.iou, percent),
        scaled(r.ssim, percent),
        scaled(r.boundary_f, percent),
        r.n_patches
    )
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl ReportTable {
    pub fn to_csv(&self, percent: bool) -> String {
        let mut out = String::new();
        if let Some(ts) = self.generated_at {
            let _ = writeln!(out, "# generated_at={ts}");
        }
        out.push_str(CSV_HEADER);
        out.push('\n');
        for row in self.rows.iter().chain(&self.aggregate) {
            out.push_str(&csv_row(row, percent));
            out.push('\n');
        }
        for w in &self.warnings {
            let _ = writeln!(out, "# warning: {w}");
        }
        out
    }

    /// JSON with metric values rounded to 6 decimals.
    pub fn to_json(&self, percent: bool) -> String {
        let round = |row: &ReportRow| {
            let q = |v: f64| (scaled(v, percent) * 1e6).round() / 1e6;
            let r = &row.report;
            ReportRow {
                method: row.method.clone(),
                report: EvalReport {
                    f1: q(r.f1),
                    iou: q(r.iou),
                    ssim: q(r.ssim),
                    boundary_f: q(r.boundary_f),
                    n_patches: r.n_patches,
                },
            }
        };
        let table = ReportTable {
            rows: self.rows.iter().map(round).collect(),
            aggregate: self.aggregate.as_ref().map(round),
            warnings: self.warnings.clone(),
            generated_at: self.generated_at,
        };
        let mut s = serde_json::to_string_pretty(&table).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn render(&self, format: ReportFormat, percent: bool) -> String {
        match format {
            ReportFormat::Csv => self.to_csv(percent),
            ReportFormat::Json => self.to_json(percent),
        }
    }
}

/// Parse the data rows of a CSV report (comments and header skipped).
pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRow>> {
    const WHAT: &str = "report CSV";
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line == CSV_HEADER {
            continue;
        }
        let fields: Vec<&str> = line.rsplitn(6, ',').collect();
        if fields.len() != 6 {
            return Err(Error::parse(WHAT, i + 1, "expected 6 fields"));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::parse(WHAT, i + 1, format!("bad number '{s}'")))
        };
        rows.push(ReportRow {
            method: fields[5].trim_matches('"').replace("\"\"", "\""),
            report: EvalReport {
                f1: num(fields[4])?,
                iou: num(fields[3])?,
                ssim: num(fields[2])?,
                boundary_f: num(fields[1])?,
                n_patches: fields[0]
                    .parse()
                    .map_err(|_| Error::parse(WHAT, i + 1, "bad n_patches"))?,
            },
        });
    }
    Ok(rows)
}
