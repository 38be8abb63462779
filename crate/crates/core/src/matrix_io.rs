//! Matrix files.
//!
//! Text: first line `rows,cols`, then one comma-separated row per line.
//! Binary: `RIEM`, `u32` rows, `u32` cols (little endian), then row-major
//! little-endian `f64`. Readers sniff the magic bytes.

use std::fs;
use std::io::Write;
use std::path::Path;

use faer::{Mat, MatRef};

use crate::error::{Result, RieError};

const MAGIC: &[u8; 4] = b"RIEM";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Binary,
}

impl MatrixFormat {
    /// `.bin` and `.riem` select the binary format, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") | Some("riem") => MatrixFormat::Binary,
            _ => MatrixFormat::Csv,
        }
    }
}

pub fn parse_matrix(bytes: &[u8]) -> Result<Mat<f64>> {
    if bytes.starts_with(MAGIC) {
        parse_binary(bytes)
    } else {
        let text = std::str::from_utf8(bytes).map_err(|e| RieError::Format(format!("not UTF-8: {e}")))?;
        parse_csv(text)
    }
}

fn parse_dims(line: &str) -> Result<(usize, usize)> {
    let mut it = line.split(',').map(str::trim);
    let rows = it.next().and_then(|s| s.parse().ok());
    let cols = it.next().and_then(|s| s.parse().ok());
    match (rows, cols, it.next()) {
        (Some(r), Some(c), None) => Ok((r, c)),
        _ => Err(RieError::Format(format!("bad header `{line}`, expected `rows,cols`"))),
    }
}

pub fn parse_csv(text: &str) -> Result<Mat<f64>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| RieError::Format("empty matrix file".into()))?;
    let (rows, cols) = parse_dims(header)?;
    let mut m = Mat::<f64>::zeros(rows, cols);
    let mut count = 0;
    for (i, line) in lines.enumerate() {
        if i >= rows {
            return Err(RieError::Format(format!("more than {rows} data rows")));
        }
        let mut j = 0;
        for field in line.split(',') {
            if j >= cols {
                return Err(RieError::Format(format!("row {i} has more than {cols} entries")));
            }
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| RieError::Format(format!("row {i}, column {j}: cannot parse `{}`", field.trim())))?;
            m[(i, j)] = v;
            j += 1;
        }
        if j != cols {
            return Err(RieError::Format(format!("row {i} has {j} entries, expected {cols}")));
        }
        count += 1;
    }
    if count != rows {
        return Err(RieError::Format(format!("found {count} data rows, expected {rows}")));
    }
    Ok(m)
}

fn parse_binary(bytes: &[u8]) -> Result<Mat<f64>> {
    if bytes.len() < 12 {
        return Err(RieError::Format("truncated binary header".into()));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if body.len() != rows * cols * 8 {
        return Err(RieError::Format(format!(
            "binary body has {} bytes, expected {} for {rows}x{cols}",
            body.len(),
            rows * cols * 8
        )));
    }
    Ok(Mat::from_fn(rows, cols, |i, j| {
        let k = 8 * (i * cols + j);
        f64::from_le_bytes(body[k..k + 8].try_into().unwrap())
    }))
}

pub fn to_csv(m: MatRef<'_, f64>) -> String {
    let mut out = format!("{},{}\n", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            // Debug formatting of f64 is the shortest round-tripping form.
            out.push_str(&format!("{:?}", m[(i, j)]));
        }
        out.push('\n');
    }
    out
}

pub fn to_binary(m: MatRef<'_, f64>) -> Result<Vec<u8>> {
    let rows = u32::try_from(m.nrows()).map_err(|_| RieError::Dimension("too many rows".into()))?;
    let cols = u32::try_from(m.ncols()).map_err(|_| RieError::Dimension("too many columns".into()))?;
    let mut out = Vec::with_capacity(12 + 8 * m.nrows() * m.ncols());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_matrix(path: &Path) -> Result<Mat<f64>> {
    parse_matrix(&fs::read(path)?)
}

pub fn write_matrix(path: &Path, m: MatRef<'_, f64>, format: MatrixFormat) -> Result<()> {
    let bytes = match format {
        MatrixFormat::Csv => to_csv(m).into_bytes(),
        MatrixFormat::Binary => to_binary(m)?,
    };
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Mat<f64> {
        Mat::from_fn(2, 3, |i, j| (i as f64 + 1.0) * 0.1 - j as f64 * 1e-17 + j as f64)
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let m = sample();
        let back = parse_csv(&to_csv(m.as_ref())).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let m = sample();
        let back = parse_matrix(&to_binary(m.as_ref()).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        assert!(parse_csv("").is_err());
        assert!(parse_csv("2,2\n1,2\n").is_err());
        assert!(parse_csv("1,2\n1,2,3\n").is_err());
        assert!(parse_csv("1,2\n1,x\n").is_err());
        assert!(parse_csv("2\n1\n").is_err());
        assert!(parse_matrix(b"RIEM\x01\x00\x00\x00\x01\x00\x00\x00").is_err());
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = sample();
        for (name, fmt) in [("a.csv", MatrixFormat::Csv), ("a.bin", MatrixFormat::Binary)] {
            let p = dir.path().join(name);
            assert_eq!(MatrixFormat::from_path(&p), fmt);
            write_matrix(&p, m.as_ref(), fmt).unwrap();
            assert_eq!(read_matrix(&p).unwrap(), m);
        }
    }
}
