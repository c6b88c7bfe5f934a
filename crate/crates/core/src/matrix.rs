//! Sparse row-major matrices of probabilities.
//!
//! Channel, observer and scheduler matrices are mostly zeros once trace sets
//! are interleaved, so rows store only their nonzero entries, sorted by
//! column.

use std::fmt;

use crate::par::Execution;

/// Tolerance on row sums for every stochastic matrix.
pub const STOCHASTIC_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    cols: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl Matrix {
    /// Builds from sparse rows. Entries are sorted, zeros dropped and
    /// duplicate columns summed.
    pub fn from_sparse_rows(cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let rows = rows
            .into_iter()
            .map(|mut r| {
                r.sort_by_key(|&(c, _)| c);
                let mut out: Vec<(usize, f64)> = Vec::with_capacity(r.len());
                for (c, v) in r {
                    match out.last_mut() {
                        Some((lc, lv)) if *lc == c => *lv += v,
                        _ => out.push((c, v)),
                    }
                }
                out.retain(|&(_, v)| v != 0.0);
                out
            })
            .collect();
        Matrix { cols, rows }
    }

    pub fn from_dense(cols: usize, dense: &[Vec<f64>]) -> Self {
        let rows = dense
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(c, &v)| (c, v))
                    .collect()
            })
            .collect();
        Matrix { cols, rows }
    }

    pub fn identity(n: usize) -> Self {
        Matrix {
            cols: n,
            rows: (0..n).map(|i| vec![(i, 1.0)]).collect(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[(usize, f64)]> {
        self.rows.iter().map(Vec::as_slice)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.rows[i];
        match row.binary_search_by_key(&j, |&(c, _)| c) {
            Ok(k) => row[k].1,
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| {
                let mut d = vec![0.0; self.cols];
                for &(c, v) in r {
                    d[c] = v;
                }
                d
            })
            .collect()
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|&(_, v)| v).sum()
    }

    /// Column-wise maxima.
    pub fn column_max(&self) -> Vec<f64> {
        let mut m = vec![0.0f64; self.cols];
        for r in &self.rows {
            for &(c, v) in r {
                m[c] = m[c].max(v);
            }
        }
        m
    }

    /// Product `self * other`.
    pub fn mul(&self, other: &Matrix) -> Matrix {
        self.mul_with(other, Execution::default())
    }

    pub fn mul_with(&self, other: &Matrix, exec: Execution) -> Matrix {
        assert_eq!(self.cols, other.nrows(), "inner dimensions differ");
        let rows = exec.map(&self.rows, |r| {
            let mut acc: Vec<(usize, f64)> = Vec::new();
            for &(k, a) in r {
                for &(c, b) in other.row(k) {
                    acc.push((c, a * b));
                }
            }
            acc
        });
        Matrix::from_sparse_rows(other.cols, rows)
    }

    /// Reorders columns: column `j` of the result is column `perm[j]` of self.
    pub fn select_columns(&self, perm: &[usize]) -> Matrix {
        let mut inv = vec![usize::MAX; self.cols];
        for (j, &p) in perm.iter().enumerate() {
            inv[p] = j;
        }
        let rows = self
            .rows
            .iter()
            .map(|r| {
                r.iter()
                    .filter(|&&(c, _)| inv[c] != usize::MAX)
                    .map(|&(c, v)| (inv[c], v))
                    .collect()
            })
            .collect();
        Matrix::from_sparse_rows(perm.len(), rows)
    }

    /// Checks that every entry lies in [0, 1] and every row sums to 1.
    pub fn validate_stochastic(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        for (i, r) in self.rows.iter().enumerate() {
            for &(c, v) in r {
                if !v.is_finite() || !(0.0..=1.0 + STOCHASTIC_TOL).contains(&v) {
                    report.push(Violation::Entry {
                        row: i,
                        col: c,
                        value: v,
                    });
                }
            }
            let sum = self.row_sum(i);
            if (sum - 1.0).abs() > STOCHASTIC_TOL || !sum.is_finite() {
                report.push(Violation::RowSum { row: i, sum });
            }
        }
        report
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    Entry { row: usize, col: usize, value: f64 },
    RowSum { row: usize, sum: f64 },
    Shape { expected: usize, found: usize, what: String },
    Duplicate { what: String, item: String },
    Other(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Entry { row, col, value } => {
                write!(f, "entry ({row}, {col}) = {value} is outside [0, 1]")
            }
            // Rounded so that 0.5 + 0.6 reads as 1.1.
            Violation::RowSum { row, sum } => {
                write!(f, "row {row} sums to {}", (sum * 1e12).round() / 1e12)
            }
            Violation::Shape {
                expected,
                found,
                what,
            } => write!(f, "{what}: expected {expected}, found {found}"),
            Violation::Duplicate { what, item } => write!(f, "duplicate {what} {item}"),
            Violation::Other(s) => f.write_str(s),
        }
    }
}

/// List of invariant violations; empty means valid.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn push(&mut self, v: Violation) {
        self.violations.push(v);
    }

    pub fn extend(&mut self, other: ValidationReport) {
        self.violations.extend(other.violations);
    }

    pub fn messages(&self) -> Vec<String> {
        self.violations.iter().map(ToString::to_string).collect()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.messages().join("; "))
    }
}
