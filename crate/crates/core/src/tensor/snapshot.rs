//! Plain-text matrix snapshots: a `rows cols` header followed by one line of
//! space-separated decimals per row.

use std::io::{BufRead, Write};
use std::path::Path;

use super::Matrix;
use crate::error::{Error, Result};

/// Shortest decimal that parses back to the same `f64`.
pub fn format_f64(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn write_matrix<W: Write>(m: &Matrix, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "{} {}", m.rows(), m.cols())?;
    let mut line = String::new();
    for i in 0..m.rows() {
        line.clear();
        for (j, v) in m.row(i).iter().enumerate() {
            if j > 0 {
                line.push(' ');
            }
            line.push_str(&format_f64(*v));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Reads one matrix from `lines`, which yields `(line_number, text)`.
/// `path` only labels errors.
pub fn read_matrix<I>(lines: &mut I, path: &Path) -> Result<Matrix>
where
    I: Iterator<Item = (usize, String)>,
{
    let (hline, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "missing \"rows cols\" header"))?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(Error::parse(path, hline, "header must be \"rows cols\""));
    }
    let parse_dim = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::parse(path, hline, format!("bad dimension {s:?}")))
    };
    let (rows, cols) = (parse_dim(dims[0])?, parse_dim(dims[1])?);
    let mut data = Vec::with_capacity(rows * cols);
    if cols == 0 {
        // Zero-width rows are blank lines, which the line reader drops.
        return Ok(Matrix::zeros(rows, 0));
    }
    for r in 0..rows {
        let (lno, text) = lines.next().ok_or_else(|| {
            Error::parse(path, hline + r + 1, format!("expected {rows} rows, found {r}"))
        })?;
        let before = data.len();
        for tok in text.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse(path, lno, format!("non-numeric value {tok:?}")))?;
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(Error::parse(
                path,
                lno,
                format!("expected {cols} values, found {}", data.len() - before),
            ));
        }
    }
    Matrix::from_vec(rows, cols, data)
}

/// Numbered, non-empty lines of a reader.
pub(crate) fn numbered_lines<R: BufRead>(
    reader: R,
    path: &Path,
) -> Result<impl Iterator<Item = (usize, String)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out.into_iter())
}

pub fn save_matrix(m: &Matrix, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_matrix(m, &mut buf).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_matrix(path: &Path) -> Result<Matrix> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = numbered_lines(std::io::BufReader::new(file), path)?;
    let m = read_matrix(&mut lines, path)?;
    if let Some((lno, _)) = lines.next() {
        return Err(Error::parse(path, lno, "trailing data after matrix"));
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str) -> Result<Matrix> {
        let mut lines = numbered_lines(text.as_bytes(), Path::new("mem"))?;
        read_matrix(&mut lines, Path::new("mem"))
    }

    #[test]
    fn reads_single_row() {
        let m = parse("1 2\n0.5 -1.0\n").unwrap();
        assert_eq!(m.as_slice(), &[0.5, -1.0]);
    }

    #[test]
    fn missing_rows_and_bad_tokens_fail() {
        assert!(parse("2 1\n0.5\n").is_err());
        assert!(parse("1 2\n0.5 x\n").is_err());
        assert!(parse("1 2\n0.5\n").is_err());
    }

    proptest! {
        #[test]
        fn roundtrip_is_exact(rows in 0usize..5, cols in 0usize..5, seed in any::<u64>()) {
            let mut s = seed;
            let m = Matrix::from_fn(rows, cols, |_, _| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                f64::from_bits((s >> 2) | 0x3000_0000_0000_0000) * if s & 1 == 0 { 1.0 } else { -1.0 }
            });
            let mut buf = Vec::new();
            write_matrix(&m, &mut buf).unwrap();
            let back = parse(std::str::from_utf8(&buf).unwrap()).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
