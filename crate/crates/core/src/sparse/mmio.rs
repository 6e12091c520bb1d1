//! Matrix Market coordinate files (`real`, `general` or `symmetric`).
//!
//! Indices are 1-based on disk and 0-based in memory. Symmetric files store
//! one triangle; reading mirrors every off-diagonal entry.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sparse::SparseCoo;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetry {
    General,
    Symmetric,
}

pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<SparseCoo> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_matrix_market(BufReader::new(file))
}

pub fn parse_matrix_market<R: BufRead>(reader: R) -> Result<SparseCoo> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let bad = |line: usize, msg: &str| Error::MatrixMarket {
        line,
        msg: msg.to_string(),
    };
    let read_err = |line: usize, e: std::io::Error| Error::MatrixMarket {
        line,
        msg: e.to_string(),
    };

    let (ln, header) = lines.next().ok_or_else(|| bad(1, "empty file"))?;
    let header = header.map_err(|e| read_err(ln, e))?;
    let tokens: Vec<String> = header.split_whitespace().map(str::to_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" {
        return Err(bad(
            ln,
            "malformed header, expected '%%MatrixMarket matrix coordinate real <symmetry>'",
        ));
    }
    if tokens[1] != "matrix" {
        return Err(bad(ln, &format!("unsupported object '{}'", tokens[1])));
    }
    if tokens[2] != "coordinate" {
        return Err(bad(ln, &format!("non-coordinate format '{}'", tokens[2])));
    }
    if tokens[3] != "real" {
        return Err(bad(
            ln,
            &format!("unsupported field '{}', only 'real' is read", tokens[3]),
        ));
    }
    let symmetry = match tokens[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => return Err(bad(ln, &format!("unsupported symmetry '{other}'"))),
    };

    let mut size: Option<(usize, usize, usize)> = None;
    let mut rows = Vec::new();
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut entries = 0usize;

    for (ln, line) in lines {
        let line = line.map_err(|e| read_err(ln, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        match size {
            None => {
                if fields.len() != 3 {
                    return Err(bad(ln, "size line must hold 'nrows ncols nnz'"));
                }
                let parse = |s: &str| {
                    s.parse::<usize>()
                        .map_err(|_| bad(ln, &format!("invalid integer '{s}'")))
                };
                let dims = (parse(fields[0])?, parse(fields[1])?, parse(fields[2])?);
                rows.reserve(dims.2);
                cols.reserve(dims.2);
                vals.reserve(dims.2);
                size = Some(dims);
            }
            Some((nrows, ncols, nnz)) => {
                if fields.len() != 3 {
                    return Err(bad(ln, "entry line must hold 'row col value'"));
                }
                if entries == nnz {
                    return Err(bad(ln, &format!("more than the declared {nnz} entries")));
                }
                let index = |s: &str, bound: usize| -> Result<usize> {
                    let i = s
                        .parse::<usize>()
                        .map_err(|_| bad(ln, &format!("invalid index '{s}'")))?;
                    if i == 0 || i > bound {
                        return Err(bad(ln, &format!("index {i} outside 1..={bound}")));
                    }
                    Ok(i - 1)
                };
                let r = index(fields[0], nrows)?;
                let c = index(fields[1], ncols)?;
                let v = fields[2]
                    .parse::<f64>()
                    .map_err(|_| bad(ln, &format!("invalid value '{}'", fields[2])))?;
                rows.push(r);
                cols.push(c);
                vals.push(v);
                if symmetry == Symmetry::Symmetric && r != c {
                    rows.push(c);
                    cols.push(r);
                    vals.push(v);
                }
                entries += 1;
            }
        }
    }

    let (nrows, ncols, nnz) = size.ok_or_else(|| bad(0, "missing size line"))?;
    if entries != nnz {
        return Err(bad(0, &format!("declared {nnz} entries, found {entries}")));
    }
    if symmetry == Symmetry::Symmetric && nrows != ncols {
        return Err(bad(0, "symmetric matrix must be square"));
    }
    SparseCoo::new(rows, cols, vals, (nrows, ncols))
}

/// Writes `a` as a `general` coordinate file. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_matrix_market(a: &SparseCoo, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    format_matrix_market(a, &mut w).map_err(io_err)?;
    w.flush().map_err(io_err)
}

pub fn format_matrix_market<W: Write>(a: &SparseCoo, w: &mut W) -> std::io::Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", a.nrows(), a.ncols(), a.nnz())?;
    for (r, c, v) in a.iter() {
        writeln!(w, "{} {} {:?}", r + 1, c + 1, v)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<SparseCoo> {
        parse_matrix_market(s.as_bytes())
    }

    #[test]
    fn single_general_entry() {
        let a = parse("%%MatrixMarket matrix coordinate real general\n1 1 1\n1 1 2.5\n").unwrap();
        assert_eq!(a.iter().collect::<Vec<_>>(), vec![(0, 0, 2.5)]);
    }

    #[test]
    fn symmetric_expansion() {
        let a = parse(
            "%%MatrixMarket matrix coordinate real symmetric\n% lower triangle\n2 2 2\n1 1 4\n2 1 -1\n",
        )
        .unwrap();
        assert_eq!(
            a.iter().collect::<Vec<_>>(),
            vec![(0, 0, 4.0), (0, 1, -1.0), (1, 0, -1.0)]
        );
    }

    #[test]
    fn array_format_rejected() {
        let err = parse("%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n4\n").unwrap_err();
        match err {
            Error::MatrixMarket { line, msg } => {
                assert_eq!(line, 1);
                assert!(msg.contains("non-coordinate"), "{msg}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_failure_reports_line() {
        let err = parse("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n2 x 3.0\n")
            .unwrap_err();
        assert!(matches!(err, Error::MatrixMarket { line: 4, .. }), "{err}");
    }

    #[test]
    fn malformed_header() {
        assert!(parse("%%MatrixMarket matrix\n").is_err());
        assert!(parse("1 1 1\n").is_err());
    }

    #[test]
    fn entry_count_checked() {
        assert!(parse("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n").is_err());
    }

    #[test]
    fn out_of_range_index() {
        let err =
            parse("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n").unwrap_err();
        assert!(matches!(err, Error::MatrixMarket { line: 3, .. }));
    }
}
