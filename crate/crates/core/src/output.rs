//! File formats: binary PPM basin images, RFC 4180 CSV tables and JSON
//! traces. All writers are deterministic for identical inputs.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::basin::{BasinReport, DirectionFieldSample, Table1};
use crate::error::{Error, Result};

/// Palette index for points that did not converge.
pub const NON_CONVERGENT: u8 = 6;
/// Palette index for points that converged to a zero outside their attractor.
pub const WRONG_ZERO: u8 = 7;

/// Colors for zero indices 0..=5, non-convergent and wrong-zero points.
pub const PALETTE: [[u8; 3]; 8] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [0, 0, 0],
    [200, 200, 200],
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasinImage {
    pub width: usize,
    pub height: usize,
    /// Palette indices, top row first.
    pub pixels: Vec<u8>,
    pub palette: [[u8; 3]; 8],
}

impl BasinImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch { expected: width * height, got: pixels.len() });
        }
        if let Some(bad) = pixels.iter().find(|&&p| p >= 8) {
            return Err(Error::InvalidArgument(format!("palette index {bad} out of range")));
        }
        Ok(Self { width, height, pixels, palette: PALETTE })
    }

    /// Colors each lattice point by its correct zero; wrong zeros and
    /// failures get their own colors. Lattice row `j` (y increasing) maps
    /// to image row `height - 1 - j`.
    pub fn from_report(report: &BasinReport) -> Self {
        let (w, h) = (report.grid.nx, report.grid.ny);
        let mut pixels = vec![NON_CONVERGENT; w * h];
        for (k, rec) in report.points.iter().enumerate() {
            let (i, j) = (k % w, k / w);
            pixels[(h - 1 - j) * w + i] = match rec.zero_index {
                Some(z) if rec.correct && z < 6 => z as u8,
                Some(_) => WRONG_ZERO,
                None => NON_CONVERGENT,
            };
        }
        Self { width: w, height: h, pixels, palette: PALETTE }
    }

    pub fn index_at(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }
}

/// Binary PPM (P6) bytes: `P6\n<w> <h>\n255\n` then RGB triples row-major.
pub fn encode_ppm(image: &BasinImage) -> Vec<u8> {
    let header = format!("P6\n{} {}\n255\n", image.width, image.height);
    let mut out = Vec::with_capacity(header.len() + 3 * image.pixels.len());
    out.extend_from_slice(header.as_bytes());
    for &p in &image.pixels {
        out.extend_from_slice(&image.palette[p as usize]);
    }
    out
}

pub fn write_ppm(image: &BasinImage, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_ppm(image))?;
    Ok(())
}

/// One column of the statistics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsColumn {
    pub label: String,
    pub convergent: f64,
    pub complexity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatsTable {
    pub columns: Vec<StatsColumn>,
}

impl From<&Table1> for StatsTable {
    fn from(t: &Table1) -> Self {
        let columns = t
            .columns
            .iter()
            .map(|c| StatsColumn {
                label: c.mode.to_string(),
                convergent: c.correct_fraction,
                complexity: c.relative_complexity,
            })
            .collect();
        StatsTable { columns }
    }
}

impl From<&BasinReport> for StatsTable {
    fn from(r: &BasinReport) -> Self {
        StatsTable {
            columns: vec![StatsColumn {
                label: r.mode.to_string(),
                convergent: r.correct_fraction,
                complexity: r.relative_complexity.unwrap_or(1.0),
            }],
        }
    }
}

const CRLF: &str = "\r\n";

/// Rows `metric,<labels>`, `convergent,...` (4 decimals) and
/// `complexity,...` (2 decimals), CRLF-terminated.
pub fn encode_csv_stats(table: &StatsTable) -> String {
    let mut s = String::from("metric");
    for c in &table.columns {
        s.push(',');
        s.push_str(&c.label);
    }
    s.push_str(CRLF);
    s.push_str("convergent");
    for c in &table.columns {
        s.push_str(&format!(",{:.4}", c.convergent));
    }
    s.push_str(CRLF);
    s.push_str("complexity");
    for c in &table.columns {
        s.push_str(&format!(",{:.2}", c.complexity));
    }
    s.push_str(CRLF);
    s
}

pub fn write_csv_stats(table: &StatsTable, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_csv_stats(table))?;
    Ok(())
}

pub fn encode_field_csv(samples: &[DirectionFieldSample]) -> String {
    let mut s = String::from("x,y,vx,vy,ux,uy,singular");
    s.push_str(CRLF);
    for p in samples {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}",
            p.point[0], p.point[1], p.vector[0], p.vector[1], p.unit[0], p.unit[1], p.singular as u8
        ));
        s.push_str(CRLF);
    }
    s
}

pub fn write_field_csv(samples: &[DirectionFieldSample], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_field_csv(samples))?;
    Ok(())
}

/// Pretty-printed UTF-8 JSON. Non-finite floats become `null`.
pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut file = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut file, value).map_err(|e| Error::Io(e.to_string()))?;
    file.write_all(b"\n")?;
    Ok(())
}
