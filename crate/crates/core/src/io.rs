//! CSV and `lgpc` binary point-cloud formats.
//!
//! `lgpc` layout: magic `LGPC`, `u32` LE point count, `u32` LE dimension,
//! then `N*D` little-endian IEEE-754 `f32`s in row-major order.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

pub const LGPC_MAGIC: &[u8; 4] = b"LGPC";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Lgpc,
}

impl Format {
    /// `.csv` is CSV; anything else is treated as `lgpc`.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Lgpc,
        }
    }
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "lgpc" | "lgpc-binary" => Ok(Format::Lgpc),
            other => Err(Error::param(format!("unknown point-cloud format `{other}`"))),
        }
    }
}

pub fn load_point_cloud(path: &Path, format: Format) -> Result<PointCloud> {
    match format {
        Format::Csv => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_csv(&text)
        }
        Format::Lgpc => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            decode_lgpc(&bytes)
        }
    }
}

pub fn save_point_cloud(cloud: &PointCloud, path: &Path, format: Format) -> Result<()> {
    let bytes = match format {
        Format::Csv => format_csv(cloud).into_bytes(),
        Format::Lgpc => encode_lgpc(cloud),
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Parses rows of comma-separated reals. Blank lines and lines starting
/// with `#` are skipped.
pub fn parse_csv(text: &str) -> Result<PointCloud> {
    let rows = parse_csv_rows(text)?;
    if rows.is_empty() {
        return Err(Error::Parse {
            row: 0,
            column: 0,
            message: "no data rows".into(),
        });
    }
    let dim = rows[0].1.len();
    let mut data = Vec::with_capacity(rows.len() * dim);
    for (line, values) in &rows {
        if values.len() != dim {
            return Err(Error::Parse {
                row: *line,
                column: 0,
                message: format!("row has {} values, expected {dim}", values.len()),
            });
        }
        data.extend_from_slice(values);
    }
    PointCloud::new(rows.len(), dim, data)
}

/// Rows of finite reals tagged with their 1-based line number.
pub(crate) fn parse_csv_rows(text: &str) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut values = Vec::new();
        for (j, field) in line.split(',').enumerate() {
            let field = field.trim();
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                row: i + 1,
                column: j + 1,
                message: format!("`{field}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: i + 1,
                    column: j + 1,
                    message: format!("non-finite value `{field}`"),
                });
            }
            values.push(v);
        }
        rows.push((i + 1, values));
    }
    Ok(rows)
}

pub fn format_csv(cloud: &PointCloud) -> String {
    let mut out = String::new();
    for p in cloud.points() {
        write_row(&mut out, p);
    }
    out
}

pub(crate) fn write_row(out: &mut String, values: &[f64]) {
    for (j, v) in values.iter().enumerate() {
        if j > 0 {
            out.push(',');
        }
        let _ = write!(out, "{v}");
    }
    out.push('\n');
}

pub fn encode_lgpc(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * cloud.as_slice().len());
    out.extend_from_slice(LGPC_MAGIC);
    out.extend_from_slice(&(cloud.len() as u32).to_le_bytes());
    out.extend_from_slice(&(cloud.dim() as u32).to_le_bytes());
    for v in cloud.as_slice() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode_lgpc(bytes: &[u8]) -> Result<PointCloud> {
    let header_err = |message: &str| Error::Parse {
        row: 0,
        column: 0,
        message: message.to_string(),
    };
    if bytes.len() < 12 {
        return Err(header_err("truncated lgpc header"));
    }
    if &bytes[0..4] != LGPC_MAGIC {
        return Err(header_err("bad magic, expected `LGPC`"));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload = &bytes[12..];
    let expected = n
        .checked_mul(dim)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| header_err("header dimensions overflow"))?;
    if payload.len() != expected {
        return Err(header_err(&format!(
            "payload is {} bytes, header N={n} D={dim} requires {expected}",
            payload.len()
        )));
    }
    let mut data = Vec::with_capacity(n * dim);
    for (k, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::Parse {
                row: k / dim + 1,
                column: k % dim + 1,
                message: format!("non-finite value {v}"),
            });
        }
        data.push(v as f64);
    }
    PointCloud::new(n, dim, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_two_points() {
        let c = parse_csv("0,0\n3,4").unwrap();
        assert_eq!((c.len(), c.dim()), (2, 2));
        assert_eq!(c.point(1), &[3.0, 4.0]);
    }

    #[test]
    fn csv_header_and_blank_lines() {
        let c = parse_csv("# x,y\n1,2\n\n3, 4\n").unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.point(1), &[3.0, 4.0]);
    }

    #[test]
    fn csv_nan_names_row_and_column() {
        match parse_csv("1,2\n3,nan\n").unwrap_err() {
            Error::Parse { row, column, .. } => assert_eq!((row, column), (2, 2)),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn csv_inconsistent_width() {
        match parse_csv("1,2\n3\n").unwrap_err() {
            Error::Parse { row, .. } => assert_eq!(row, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn csv_garbage_field() {
        assert!(matches!(
            parse_csv("1,abc\n").unwrap_err(),
            Error::Parse { row: 1, column: 2, .. }
        ));
    }

    #[test]
    fn lgpc_single_point() {
        let mut bytes = b"LGPC".to_vec();
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&3u32.to_le_bytes());
        for v in [1.0f32, 2.0, 3.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let c = decode_lgpc(&bytes).unwrap();
        assert_eq!((c.len(), c.dim()), (1, 3));
        assert_eq!(c.point(0), &[1.0, 2.0, 3.0]);
        assert_eq!(encode_lgpc(&c), bytes);
    }

    #[test]
    fn lgpc_bad_headers() {
        assert!(decode_lgpc(b"LGP").is_err());
        assert!(decode_lgpc(b"XXXX\x01\0\0\0\x01\0\0\0\0\0\x80\x3f").is_err());
        // payload shorter than N*D
        assert!(decode_lgpc(b"LGPC\x02\0\0\0\x01\0\0\0\0\0\x80\x3f").is_err());
        let mut nan = b"LGPC\x01\0\0\0\x01\0\0\0".to_vec();
        nan.extend_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode_lgpc(&nan), Err(Error::Parse { row: 1, column: 1, .. })));
    }

    #[test]
    fn format_from_path() {
        assert_eq!(Format::from_path(Path::new("a.CSV")), Format::Csv);
        assert_eq!(Format::from_path(Path::new("a.lgpc")), Format::Lgpc);
        assert_eq!("lgpc-binary".parse::<Format>().unwrap(), Format::Lgpc);
    }
}
