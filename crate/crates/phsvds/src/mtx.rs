//! Matrix Market reader and writer.
//!
//! Supports the `matrix` object in `coordinate` or `array` format with
//! `real` or `integer` fields and `general` or `symmetric` symmetry, which
//! covers the test collections this solver is aimed at. `pattern`, `complex`
//! and the rarer symmetries are rejected with a clear error. All parse
//! errors carry the 1-based line number of the offending input.

use crate::sparse::SparseMatrix;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MtxError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: unsupported Matrix Market flavor: {what}")]
    Unsupported { line: usize, what: String },
    #[error("line {line}: index ({i}, {j}) outside {nrows} x {ncols}")]
    IndexOutOfBounds { line: usize, i: usize, j: usize, nrows: usize, ncols: usize },
    #[error("unexpected end of file: expected {expected} data entries, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Format {
    Coordinate,
    Array,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

/// Parses a Matrix Market stream into CSR form.
///
/// Duplicate coordinate entries are summed and symmetric storage is expanded
/// to both triangles, so the result always holds the full matrix.
pub fn parse_matrix_market(reader: impl BufRead) -> Result<SparseMatrix, MtxError> {
    let mut lines = reader.lines().enumerate();

    let (banner_no, banner) = next_content_line(&mut lines, /*allow_comment=*/ false)?
        .ok_or(MtxError::Truncated { expected: 1, found: 0 })?;
    let (format, symmetry) = parse_banner(banner_no, &banner)?;

    let (size_no, size_line) = next_content_line(&mut lines, true)?
        .ok_or(MtxError::Truncated { expected: 1, found: 0 })?;
    let dims: Vec<usize> = size_line
        .split_whitespace()
        .map(|t| {
            t.parse::<usize>().map_err(|_| MtxError::Malformed {
                line: size_no,
                msg: format!("bad size token {t:?}"),
            })
        })
        .collect::<Result<_, _>>()?;

    match format {
        Format::Coordinate => {
            if dims.len() != 3 {
                return Err(MtxError::Malformed {
                    line: size_no,
                    msg: format!("coordinate size line needs `rows cols nnz`, got {size_line:?}"),
                });
            }
            let (m, n, nnz) = (dims[0], dims[1], dims[2]);
            if symmetry == Symmetry::Symmetric && m != n {
                return Err(MtxError::Malformed {
                    line: size_no,
                    msg: format!("symmetric matrix must be square, got {m} x {n}"),
                });
            }
            let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(nnz * 2);
            for k in 0..nnz {
                let (no, line) = next_content_line(&mut lines, true)?
                    .ok_or(MtxError::Truncated { expected: nnz, found: k })?;
                let mut it = line.split_whitespace();
                let i = parse_index(no, it.next(), "row")?;
                let j = parse_index(no, it.next(), "column")?;
                if i == 0 || i > m || j == 0 || j > n {
                    return Err(MtxError::IndexOutOfBounds { line: no, i, j, nrows: m, ncols: n });
                }
                let (i, j) = (i - 1, j - 1);
                let v = parse_value(no, it.next())?;
                if it.next().is_some() {
                    return Err(MtxError::Malformed {
                        line: no,
                        msg: format!("trailing tokens in entry {line:?}"),
                    });
                }
                triplets.push((i, j, v));
                if symmetry == Symmetry::Symmetric && i != j {
                    triplets.push((j, i, v));
                }
            }
            expect_no_more_data(&mut lines)?;
            Ok(SparseMatrix::from_triplets(m, n, triplets))
        }
        Format::Array => {
            if dims.len() != 2 {
                return Err(MtxError::Malformed {
                    line: size_no,
                    msg: format!("array size line needs `rows cols`, got {size_line:?}"),
                });
            }
            let (m, n) = (dims[0], dims[1]);
            if symmetry == Symmetry::Symmetric && m != n {
                return Err(MtxError::Malformed {
                    line: size_no,
                    msg: format!("symmetric matrix must be square, got {m} x {n}"),
                });
            }
            // Dense listing, column-major; symmetric files pack the lower
            // triangle of each column.
            let expected = match symmetry {
                Symmetry::General => m * n,
                Symmetry::Symmetric => n * (n + 1) / 2,
            };
            let mut triplets = Vec::with_capacity(expected * 2);
            let mut coords: Vec<(usize, usize)> = Vec::with_capacity(expected);
            match symmetry {
                Symmetry::General => {
                    for j in 0..n {
                        for i in 0..m {
                            coords.push((i, j));
                        }
                    }
                }
                Symmetry::Symmetric => {
                    for j in 0..n {
                        for i in j..m {
                            coords.push((i, j));
                        }
                    }
                }
            }
            for (k, (i, j)) in coords.into_iter().enumerate() {
                let (no, line) = next_content_line(&mut lines, true)?
                    .ok_or(MtxError::Truncated { expected, found: k })?;
                let mut it = line.split_whitespace();
                let v = parse_value(no, it.next())?;
                if it.next().is_some() {
                    return Err(MtxError::Malformed {
                        line: no,
                        msg: format!("array entries are one value per line, got {line:?}"),
                    });
                }
                triplets.push((i, j, v));
                if symmetry == Symmetry::Symmetric && i != j {
                    triplets.push((j, i, v));
                }
            }
            expect_no_more_data(&mut lines)?;
            Ok(SparseMatrix::from_triplets(m, n, triplets))
        }
    }
}

pub fn read_matrix_market_file(path: impl AsRef<Path>) -> Result<SparseMatrix, MtxError> {
    parse_matrix_market(BufReader::new(File::open(path)?))
}

/// Writes `coordinate real general` with 17 significant digits, enough for
/// an exact f64 round trip through [`parse_matrix_market`].
pub fn write_matrix_market(m: &SparseMatrix, mut out: impl Write) -> io::Result<()> {
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(out, "{} {} {}", m.nrows(), m.ncols(), m.nnz())?;
    for i in 0..m.nrows() {
        for (j, v) in m.row(i) {
            writeln!(out, "{} {} {:.16e}", i + 1, j + 1, v)?;
        }
    }
    Ok(())
}

pub fn write_matrix_market_file(m: &SparseMatrix, path: impl AsRef<Path>) -> io::Result<()> {
    let mut f = io::BufWriter::new(File::create(path)?);
    write_matrix_market(m, &mut f)
}

type NumberedLines<'a> = &'a mut dyn Iterator<Item = (usize, io::Result<String>)>;

fn next_content_line(
    lines: NumberedLines,
    allow_comment: bool,
) -> Result<Option<(usize, String)>, MtxError> {
    for (idx, line) in lines {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with('%') {
            if allow_comment {
                continue;
            }
            return Ok(Some((idx + 1, trimmed.to_string())));
        }
        return Ok(Some((idx + 1, trimmed.to_string())));
    }
    Ok(None)
}

fn expect_no_more_data(lines: NumberedLines) -> Result<(), MtxError> {
    while let Some((idx, line)) = lines.next() {
        let line = line?;
        let t = line.trim();
        if !t.is_empty() && !t.starts_with('%') {
            return Err(MtxError::Malformed {
                line: idx + 1,
                msg: format!("unexpected data after the declared entries: {t:?}"),
            });
        }
    }
    Ok(())
}

fn parse_banner(line_no: usize, line: &str) -> Result<(Format, Symmetry), MtxError> {
    let lower = line.to_ascii_lowercase();
    let tokens: Vec<&str> = lower.split_whitespace().collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" {
        return Err(MtxError::Malformed {
            line: line_no,
            msg: format!("expected `%%MatrixMarket matrix <format> <field> <symmetry>` banner, got {line:?}"),
        });
    }
    if tokens[1] != "matrix" {
        return Err(MtxError::Unsupported { line: line_no, what: format!("object {:?}", tokens[1]) });
    }
    let format = match tokens[2] {
        "coordinate" => Format::Coordinate,
        "array" => Format::Array,
        other => {
            return Err(MtxError::Unsupported { line: line_no, what: format!("format {other:?}") })
        }
    };
    match tokens[3] {
        "real" | "integer" => {}
        other => {
            return Err(MtxError::Unsupported { line: line_no, what: format!("field {other:?}") })
        }
    }
    let symmetry = match tokens[4] {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => {
            return Err(MtxError::Unsupported {
                line: line_no,
                what: format!("symmetry {other:?}"),
            })
        }
    };
    Ok((format, symmetry))
}

/// Parses a 1-based index token; bounds are checked by the caller, which has
/// both axes in hand for the error message.
fn parse_index(line_no: usize, token: Option<&str>, what: &str) -> Result<usize, MtxError> {
    let t = token.ok_or_else(|| MtxError::Malformed {
        line: line_no,
        msg: format!("missing {what} index"),
    })?;
    t.parse().map_err(|_| MtxError::Malformed {
        line: line_no,
        msg: format!("bad {what} index {t:?}"),
    })
}

fn parse_value(line_no: usize, token: Option<&str>) -> Result<f64, MtxError> {
    let t = token
        .ok_or_else(|| MtxError::Malformed { line: line_no, msg: "missing value".into() })?;
    let v: f64 = t.parse().map_err(|_| MtxError::Malformed {
        line: line_no,
        msg: format!("bad numeric value {t:?}"),
    })?;
    if !v.is_finite() {
        return Err(MtxError::Malformed {
            line: line_no,
            msg: format!("non-finite value {t:?}"),
        });
    }
    Ok(v)
}
