//! Token-label attribution from the final reconstructed edges, golden keyword
//! matrices, and heatmap export.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::ForwardTrace;

/// Final token-label edges scaled to sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributionMatrix {
    pub values: Matrix,
    pub tokens: Vec<String>,
    pub labels: Vec<String>,
}

/// Keyword intensities laid out as a token-label matrix; not normalized.
#[derive(Clone, Debug, PartialEq)]
pub struct GoldenAttribution {
    pub values: Matrix,
}

impl GoldenAttribution {
    /// `entries` are `(graph row, label index, intensity)`; every other cell is 0.
    pub fn from_entries(rows: usize, labels: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        let mut values = Matrix::zeros(rows, labels);
        for &(r, j, w) in entries {
            if r >= rows || j >= labels {
                return Err(Error::invalid(format!(
                    "golden entry ({r}, {j}) outside a {rows}x{labels} matrix"
                )));
            }
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::invalid(format!("golden intensity {w} outside [0, 1]")));
            }
            values.set(r, j, w);
        }
        Ok(Self { values })
    }
}

/// Divides a non-negative matrix by its total. An all-zero matrix becomes
/// uniform `1/(m·n)`.
pub fn normalize_total(a: &Matrix) -> Matrix {
    let total = a.sum();
    if total > 0.0 {
        a.map(|v| v / total)
    } else {
        warn!("token-label matrix is all zero; attribution falls back to uniform");
        Matrix::filled(a.rows(), a.cols(), 1.0 / a.len().max(1) as f64)
    }
}

pub fn build_attribution(trace: &ForwardTrace, tokens: &[String], labels: &[String]) -> Result<AttributionMatrix> {
    let last = trace.final_token_label();
    if tokens.len() != last.rows() || labels.len() != last.cols() {
        return Err(Error::shape(
            "build_attribution",
            (tokens.len(), labels.len()),
            last.shape(),
        ));
    }
    Ok(AttributionMatrix {
        values: normalize_total(last),
        tokens: tokens.to_vec(),
        labels: labels.to_vec(),
    })
}

/// Mean squared elementwise difference for one sample.
pub fn attribution_mse(pred: &AttributionMatrix, golden: &GoldenAttribution) -> Result<f64> {
    let d = pred.values.zip_map(&golden.values, "attribution_mse", |a, b| (a - b) * (a - b))?;
    Ok(d.sum() / d.len().max(1) as f64)
}

/// [`attribution_mse`] averaged over an evaluation set.
pub fn mean_attribution_mse(pairs: &[(AttributionMatrix, GoldenAttribution)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::invalid("attribution MSE over an empty set"));
    }
    let mut total = 0.0;
    for (p, g) in pairs {
        total += attribution_mse(p, g)?;
    }
    Ok(total / pairs.len() as f64)
}

/// CSV with a header of column names and row names in the first column.
pub fn matrix_to_csv(matrix: &Matrix, row_names: &[String], col_names: &[String]) -> Result<String> {
    check_names(matrix, row_names, col_names)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = std::iter::once("").chain(col_names.iter().map(String::as_str));
    w.write_record(header).map_err(csv_err)?;
    for (r, name) in row_names.iter().enumerate() {
        let mut record = vec![name.clone()];
        record.extend(matrix.row(r).iter().map(|v| v.to_string()));
        w.write_record(&record).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 input"))
}

/// Inverse of [`matrix_to_csv`].
pub fn parse_csv(text: &str) -> Result<(Matrix, Vec<String>, Vec<String>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let cols: Vec<String> = reader.headers().map_err(csv_err)?.iter().skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    let mut data = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let mut it = record.iter();
        rows.push(it.next().unwrap_or_default().to_string());
        for v in it {
            data.push(v.parse::<f64>().map_err(|e| Error::invalid(format!("bad csv value {v:?}: {e}")))?);
        }
    }
    let m = Matrix::from_vec(rows.len(), cols.len(), data)?;
    Ok((m, rows, cols))
}

fn csv_err(e: csv::Error) -> Error {
    Error::invalid(format!("csv: {e}"))
}

fn check_names(matrix: &Matrix, rows: &[String], cols: &[String]) -> Result<()> {
    if (rows.len(), cols.len()) != matrix.shape() {
        return Err(Error::shape("heatmap names", (rows.len(), cols.len()), matrix.shape()));
    }
    Ok(())
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Gray level in `0..=255`, linear between the matrix minimum and maximum.
/// A constant matrix renders at full brightness.
pub fn brightness(value: f64, min: f64, max: f64) -> u8 {
    if max <= min {
        return 255;
    }
    (255.0 * (value - min) / (max - min)).round().clamp(0.0, 255.0) as u8
}

/// SVG heatmap with one `rect` per cell, shaded by [`brightness`]. Each rect
/// carries its exact value in `data-value`.
pub fn matrix_to_svg(matrix: &Matrix, row_names: &[String], col_names: &[String]) -> Result<String> {
    check_names(matrix, row_names, col_names)?;
    const CELL: usize = 24;
    const LEFT: usize = 120;
    const TOP: usize = 120;
    let min = matrix.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
    let max = matrix.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = LEFT + CELL * matrix.cols();
    let height = TOP + CELL * matrix.rows();
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="monospace" font-size="11">"#
    )
    .unwrap();
    for (c, name) in col_names.iter().enumerate() {
        let x = LEFT + c * CELL + CELL / 2;
        writeln!(
            s,
            r#"<text x="{x}" y="{}" transform="rotate(-60 {x} {})">{}</text>"#,
            TOP - 4,
            TOP - 4,
            xml_escape(name)
        )
        .unwrap();
    }
    for (r, name) in row_names.iter().enumerate() {
        let y = TOP + r * CELL;
        writeln!(s, r#"<text x="4" y="{}">{}</text>"#, y + CELL / 2 + 4, xml_escape(name)).unwrap();
        for c in 0..matrix.cols() {
            let v = matrix.get(r, c);
            let g = brightness(v, min, max);
            writeln!(
                s,
                r#"<rect x="{}" y="{y}" width="{CELL}" height="{CELL}" fill="rgb({g},{g},{g})" data-row="{r}" data-col="{c}" data-value="{v}"/>"#,
                LEFT + c * CELL
            )
            .unwrap();
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Writes `<stem>.csv` and `<stem>.svg` next to each other. The suffix is
/// appended, so dots already in `stem` are kept.
pub fn render_heatmap(matrix: &Matrix, row_names: &[String], col_names: &[String], stem: &Path) -> Result<()> {
    let csv = matrix_to_csv(matrix, row_names, col_names)?;
    let svg = matrix_to_svg(matrix, row_names, col_names)?;
    if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let with = |ext: &str| {
        let mut p = stem.as_os_str().to_owned();
        p.push(ext);
        std::path::PathBuf::from(p)
    };
    fs::write(with(".csv"), csv)?;
    fs::write(with(".svg"), svg)?;
    Ok(())
}
