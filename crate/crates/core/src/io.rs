//! Plain-text file formats.
//!
//! * matrix: `tridiag N` then N diagonal and N-1 off-diagonal values, one
//!   per line; or `coo N nnz` then `nnz` lines `i j value` (0-based, upper
//!   triangle only)
//! * vector: `vec N` then N values
//! * eigenvalues: `eigs N` then N ascending values
//!
//! Values are written with 17 significant digits so that reading them back
//! reproduces the same doubles.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::eigensolve::TridiagonalMatrix;
use crate::la::{HermitianOperator, LaError, Storage};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unexpected end of input: expected {expected} values, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("trailing content after the declared entries (line {0})")]
    Trailing(usize),
    #[error("dense operators have no file representation")]
    Unsupported,
    #[error(transparent)]
    La(#[from] LaError),
}

/// Canonical text form of a double: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines().enumerate(),
        }
    }

    /// Next non-blank line with its 1-based number.
    fn next_line(&mut self) -> Option<(usize, &'a str)> {
        self.inner
            .by_ref()
            .map(|(i, l)| (i + 1, l.trim()))
            .find(|(_, l)| !l.is_empty())
    }

    fn finish(mut self) -> Result<(), FormatError> {
        match self.next_line() {
            Some((line, _)) => Err(FormatError::Trailing(line)),
            None => Ok(()),
        }
    }

    fn values(&mut self, count: usize) -> Result<Vec<f64>, FormatError> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let (line, text) = self.next_line().ok_or(FormatError::Truncated {
                expected: count,
                found: out.len(),
            })?;
            out.push(parse(line, text)?);
        }
        Ok(out)
    }
}

fn parse<T: FromStr>(line: usize, token: &str) -> Result<T, FormatError> {
    token.parse().map_err(|_| FormatError::Parse {
        line,
        message: format!("cannot parse {token:?}"),
    })
}

fn header<'a>(lines: &mut Lines<'a>) -> Result<(usize, Vec<&'a str>), FormatError> {
    let (line, text) = lines.next_line().ok_or(FormatError::Truncated {
        expected: 1,
        found: 0,
    })?;
    Ok((line, text.split_whitespace().collect()))
}

pub fn write_tridiagonal(t: &TridiagonalMatrix) -> String {
    let mut out = format!("tridiag {}\n", t.dim());
    for x in t.diagonal.iter().chain(&t.off_diagonal) {
        let _ = writeln!(out, "{}", fmt_f64(*x));
    }
    out
}

/// Writes a tridiagonal or sparse operator.
pub fn write_operator(op: &HermitianOperator) -> Result<String, FormatError> {
    match op.storage() {
        Storage::Tridiagonal {
            diagonal,
            off_diagonal,
        } => Ok(write_tridiagonal(&TridiagonalMatrix {
            diagonal: diagonal.clone(),
            off_diagonal: off_diagonal.clone(),
        })),
        Storage::Sparse(s) => {
            let entries = s.upper_entries();
            let mut out = format!("coo {} {}\n", s.dim(), entries.len());
            for (i, j, v) in entries {
                let _ = writeln!(out, "{i} {j} {}", fmt_f64(v));
            }
            Ok(out)
        }
        Storage::Dense(_) => Err(FormatError::Unsupported),
    }
}

/// Parsed matrix file.
#[derive(Clone, Debug, PartialEq)]
pub enum MatrixFile {
    Tridiagonal(TridiagonalMatrix),
    Sparse(HermitianOperator),
}

impl MatrixFile {
    pub fn into_operator(self) -> Result<HermitianOperator, LaError> {
        match self {
            MatrixFile::Tridiagonal(t) => t.to_operator(),
            MatrixFile::Sparse(op) => Ok(op),
        }
    }
}

pub fn read_matrix(text: &str) -> Result<MatrixFile, FormatError> {
    let mut lines = Lines::new(text);
    let (line, fields) = header(&mut lines)?;
    let parsed = match fields.as_slice() {
        ["tridiag", n] => {
            let n: usize = parse(line, n)?;
            if n == 0 {
                return Err(FormatError::Parse {
                    line,
                    message: "dimension must be positive".into(),
                });
            }
            let diagonal = lines.values(n)?;
            let off_diagonal = lines.values(n - 1)?;
            MatrixFile::Tridiagonal(TridiagonalMatrix {
                diagonal,
                off_diagonal,
            })
        }
        ["coo", n, nnz] => {
            let n: usize = parse(line, n)?;
            let nnz: usize = parse(line, nnz)?;
            let mut entries = Vec::with_capacity(nnz);
            for found in 0..nnz {
                let (line, text) = lines.next_line().ok_or(FormatError::Truncated {
                    expected: nnz,
                    found,
                })?;
                let parts: Vec<&str> = text.split_whitespace().collect();
                let [i, j, v] = parts.as_slice() else {
                    return Err(FormatError::Parse {
                        line,
                        message: "expected `i j value`".into(),
                    });
                };
                entries.push((parse(line, i)?, parse(line, j)?, parse(line, v)?));
            }
            MatrixFile::Sparse(HermitianOperator::sparse_from_upper(n, &entries)?)
        }
        _ => {
            return Err(FormatError::Parse {
                line,
                message: "expected `tridiag N` or `coo N nnz`".into(),
            })
        }
    };
    lines.finish()?;
    Ok(parsed)
}

fn write_list(tag: &str, values: &[f64]) -> String {
    let mut out = format!("{tag} {}\n", values.len());
    for x in values {
        let _ = writeln!(out, "{}", fmt_f64(*x));
    }
    out
}

fn read_list(tag: &str, text: &str) -> Result<Vec<f64>, FormatError> {
    let mut lines = Lines::new(text);
    let (line, fields) = header(&mut lines)?;
    let n: usize = match fields.as_slice() {
        [t, n] if *t == tag => parse(line, n)?,
        _ => {
            return Err(FormatError::Parse {
                line,
                message: format!("expected `{tag} N`"),
            })
        }
    };
    let values = lines.values(n)?;
    lines.finish()?;
    Ok(values)
}

pub fn write_vector(values: &[f64]) -> String {
    write_list("vec", values)
}

pub fn read_vector(text: &str) -> Result<Vec<f64>, FormatError> {
    read_list("vec", text)
}

pub fn write_eigenvalues(values: &[f64]) -> String {
    write_list("eigs", values)
}

/// Reads an eigenvalue file; values must be ascending.
pub fn read_eigenvalues(text: &str) -> Result<Vec<f64>, FormatError> {
    let values = read_list("eigs", text)?;
    if values.windows(2).any(|w| w[0] > w[1]) {
        return Err(FormatError::Parse {
            line: 1,
            message: "eigenvalues must be sorted ascending".into(),
        });
    }
    Ok(values)
}
