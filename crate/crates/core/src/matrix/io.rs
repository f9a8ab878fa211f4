use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{DataMatrix, MatrixError, Storage};
use crate::scalar::Scalar;

#[derive(Clone, Copy, PartialEq)]
enum MmLayout {
    Coordinate,
    Array,
}

fn parse_err(line: usize, message: impl Into<String>) -> MatrixError {
    MatrixError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_value<T: Scalar>(token: &str, line: usize) -> Result<T, MatrixError> {
    token
        .parse::<T>()
        .map_err(|_| parse_err(line, format!("'{token}' is not a real number")))
}

fn parse_index(token: &str, bound: usize, line: usize) -> Result<usize, MatrixError> {
    let idx: usize = token
        .parse()
        .map_err(|_| parse_err(line, format!("'{token}' is not an index")))?;
    if idx == 0 || idx > bound {
        return Err(parse_err(line, format!("index {idx} outside 1..={bound}")));
    }
    Ok(idx - 1)
}

fn check_entry<T: Scalar>(value: T, row: usize, col: usize, line: usize) -> Result<(), MatrixError> {
    if value.is_finite() && value >= T::zero() {
        Ok(())
    } else {
        Err(MatrixError::Domain {
            location: format!("line {line}"),
            row,
            col,
            value: value.as_f64(),
        })
    }
}

/// Reads a real, general Matrix Market file (coordinate or array layout).
/// Coordinate files produce sparse storage, array files dense storage.
pub fn parse_matrix_market<T: Scalar, R: Read>(reader: R) -> Result<DataMatrix<T>, MatrixError> {
    let mut lines = BufReader::new(reader).lines().enumerate().map(|(i, l)| (i + 1, l));

    let (line_no, header) = match lines.next() {
        Some((n, l)) => (n, l?),
        None => return Err(parse_err(1, "empty file")),
    };
    let fields: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if fields.len() != 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(parse_err(line_no, "expected '%%MatrixMarket matrix <layout> <field> <symmetry>'"));
    }
    let layout = match fields[2].as_str() {
        "coordinate" => MmLayout::Coordinate,
        "array" => MmLayout::Array,
        other => return Err(parse_err(line_no, format!("unsupported layout '{other}'"))),
    };
    if fields[3] != "real" && fields[3] != "integer" {
        return Err(parse_err(line_no, format!("unsupported field '{}'; only real values are accepted", fields[3])));
    }
    if fields[4] != "general" {
        return Err(parse_err(line_no, format!("unsupported symmetry '{}'", fields[4])));
    }

    let mut content = lines.filter_map(|(n, l)| match l {
        Ok(text) => {
            let t = text.trim();
            if t.is_empty() || t.starts_with('%') {
                None
            } else {
                Some(Ok((n, t.to_string())))
            }
        }
        Err(e) => Some(Err(MatrixError::from(e))),
    });

    let (size_line, size) = content.next().ok_or_else(|| parse_err(line_no + 1, "missing size line"))??;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| parse_err(size_line, format!("'{t}' is not a count"))))
        .collect::<Result<_, _>>()?;

    match layout {
        MmLayout::Coordinate => {
            let [n_rows, n_cols, nnz] = dims[..] else {
                return Err(parse_err(size_line, "coordinate size line needs 'rows cols entries'"));
            };
            if n_rows == 0 || n_cols == 0 {
                return Err(parse_err(size_line, "matrix must be at least 1x1"));
            }
            let mut triplets = Vec::with_capacity(nnz);
            for item in content.by_ref().take(nnz) {
                let (n, text) = item?;
                let toks: Vec<&str> = text.split_whitespace().collect();
                if toks.len() != 3 {
                    return Err(parse_err(n, "expected 'row col value'"));
                }
                let r = parse_index(toks[0], n_rows, n)?;
                let c = parse_index(toks[1], n_cols, n)?;
                let v: T = parse_value(toks[2], n)?;
                check_entry(v, r, c, n)?;
                triplets.push((r, c, v));
            }
            if triplets.len() != nnz {
                return Err(parse_err(size_line, format!("declared {nnz} entries, found {}", triplets.len())));
            }
            if let Some(extra) = content.next() {
                let (n, _) = extra?;
                return Err(parse_err(n, "more entries than declared"));
            }
            DataMatrix::from_checked_triplets(n_rows, n_cols, triplets)
        }
        MmLayout::Array => {
            let [n_rows, n_cols] = dims[..] else {
                return Err(parse_err(size_line, "array size line needs 'rows cols'"));
            };
            if n_rows == 0 || n_cols == 0 {
                return Err(parse_err(size_line, "matrix must be at least 1x1"));
            }
            let mut values = vec![T::zero(); n_rows * n_cols];
            let mut count = 0usize;
            for item in content {
                let (n, text) = item?;
                for tok in text.split_whitespace() {
                    if count == values.len() {
                        return Err(parse_err(n, "more values than the declared shape"));
                    }
                    // column-major listing
                    let (r, c) = (count % n_rows, count / n_rows);
                    let v: T = parse_value(tok, n)?;
                    check_entry(v, r, c, n)?;
                    values[r * n_cols + c] = v;
                    count += 1;
                }
            }
            if count != values.len() {
                return Err(parse_err(size_line, format!("declared {} values, found {count}", values.len())));
            }
            DataMatrix::dense(n_rows, n_cols, values)
        }
    }
}

pub fn load_matrix_market<T: Scalar>(path: impl AsRef<Path>) -> Result<DataMatrix<T>, MatrixError> {
    parse_matrix_market(File::open(path)?)
}

/// Writes sparse matrices in coordinate layout and dense ones in array layout.
pub fn write_matrix_market<T: Scalar, W: Write>(matrix: &DataMatrix<T>, writer: W) -> Result<(), MatrixError> {
    let mut w = BufWriter::new(writer);
    let (n_rows, n_cols) = matrix.shape();
    match matrix.storage() {
        Storage::Sparse(_) => {
            writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
            writeln!(w, "{n_rows} {n_cols} {}", matrix.nnz())?;
            for r in 0..n_rows {
                let mut res = Ok(());
                matrix.for_each_in_row(r, |c, v| {
                    if res.is_ok() {
                        res = writeln!(w, "{} {} {}", r + 1, c + 1, v);
                    }
                });
                res?;
            }
        }
        Storage::Dense(values) => {
            writeln!(w, "%%MatrixMarket matrix array real general")?;
            writeln!(w, "{n_rows} {n_cols}")?;
            for c in 0..n_cols {
                for r in 0..n_rows {
                    writeln!(w, "{}", values[r * n_cols + c])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_matrix_market<T: Scalar>(matrix: &DataMatrix<T>, path: impl AsRef<Path>) -> Result<(), MatrixError> {
    write_matrix_market(matrix, File::create(path)?)
}

/// Reads a rectangular numeric CSV into dense storage.
pub fn parse_dense_csv<T: Scalar, R: Read>(reader: R, has_header: bool) -> Result<DataMatrix<T>, MatrixError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut values = Vec::new();
    let mut n_cols = None;
    let mut n_rows = 0usize;
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(n_rows + 1, |p| p.line() as usize);
        let expected = *n_cols.get_or_insert(record.len());
        if record.len() != expected {
            return Err(MatrixError::Ragged {
                line,
                expected,
                found: record.len(),
            });
        }
        for (c, field) in record.iter().enumerate() {
            let v: T = parse_value(field, line)?;
            check_entry(v, n_rows, c, line)?;
            values.push(v);
        }
        n_rows += 1;
    }
    let n_cols = n_cols.ok_or_else(|| parse_err(1, "no data rows"))?;
    DataMatrix::dense(n_rows, n_cols, values)
}

pub fn load_dense_csv<T: Scalar>(path: impl AsRef<Path>, has_header: bool) -> Result<DataMatrix<T>, MatrixError> {
    parse_dense_csv(File::open(path)?, has_header)
}
