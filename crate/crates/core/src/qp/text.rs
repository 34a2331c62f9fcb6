//! Plain-text matrix format for reproducing solver inputs.
//!
//! ```text
//! qp <n> <m>
//! H
//! <n rows of n numbers>
//! g
//! <n numbers>
//! A
//! <m rows of n numbers>
//! lbA
//! ...
//! ```
//!
//! followed by `ubA`, `lb` and `ub` sections. Numbers are written with 17
//! significant digits so a dump reloads bit-exactly; `inf`/`-inf` mark
//! missing bounds.

use std::fmt::Write;

use nalgebra::{DMatrix, DVector};

use super::{QpError, QpProblem};

fn write_row<'a>(out: &mut String, it: impl Iterator<Item = &'a f64>) {
    let cells: Vec<String> = it.map(|v| format!("{v:.16e}")).collect();
    out.push_str(&cells.join(" "));
    out.push('\n');
}

struct Reader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Reader<'a> {
    fn next(&mut self) -> Result<(usize, &'a str), QpError> {
        self.lines.next().map(|(i, l)| (i + 1, l)).ok_or(QpError::Text {
            line: 0,
            message: "unexpected end of input".into(),
        })
    }

    fn tag(&mut self, name: &str) -> Result<(), QpError> {
        let (line, tag) = self.next()?;
        if tag.trim() != name {
            return Err(QpError::Text {
                line,
                message: format!("expected section `{name}`"),
            });
        }
        Ok(())
    }

    fn numbers(&mut self, count: usize) -> Result<Vec<f64>, QpError> {
        let (line, row) = self.next()?;
        let vals: Vec<f64> = row
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect::<Result<_, _>>()
            .map_err(|_| QpError::Text {
                line,
                message: "bad number".into(),
            })?;
        if vals.len() != count {
            return Err(QpError::Text {
                line,
                message: format!("expected {count} numbers, found {}", vals.len()),
            });
        }
        Ok(vals)
    }

    fn matrix(&mut self, name: &str, rows: usize, cols: usize) -> Result<DMatrix<f64>, QpError> {
        self.tag(name)?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            data.extend(self.numbers(cols)?);
        }
        Ok(DMatrix::from_row_slice(rows, cols, &data))
    }

    fn vector(&mut self, name: &str, len: usize) -> Result<DVector<f64>, QpError> {
        self.tag(name)?;
        Ok(DVector::from_vec(self.numbers(len)?))
    }
}

impl QpProblem {
    pub fn to_text(&self) -> String {
        let (n, m) = (self.n(), self.m());
        let mut out = String::new();
        let _ = writeln!(out, "qp {n} {m}");
        out.push_str("H\n");
        for r in 0..n {
            write_row(&mut out, self.h.row(r).iter());
        }
        out.push_str("g\n");
        write_row(&mut out, self.g.iter());
        out.push_str("A\n");
        for r in 0..m {
            write_row(&mut out, self.a.row(r).iter());
        }
        for (name, vec) in [("lbA", &self.lba), ("ubA", &self.uba), ("lb", &self.lb), ("ub", &self.ub)] {
            out.push_str(name);
            out.push('\n');
            write_row(&mut out, vec.iter());
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, QpError> {
        let mut r = Reader {
            lines: text.lines().enumerate(),
        };
        let (line, header) = r.next()?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        let bad = || QpError::Text {
            line,
            message: "expected `qp <n> <m>`".into(),
        };
        if parts.len() != 3 || parts[0] != "qp" {
            return Err(bad());
        }
        let n: usize = parts[1].parse().map_err(|_| bad())?;
        let m: usize = parts[2].parse().map_err(|_| bad())?;
        let h = r.matrix("H", n, n)?;
        let g = r.vector("g", n)?;
        let a = r.matrix("A", m, n)?;
        let lba = r.vector("lbA", m)?;
        let uba = r.vector("ubA", m)?;
        let lb = r.vector("lb", n)?;
        let ub = r.vector("ub", n)?;
        Self::new(h, g, a, lba, uba, lb, ub)
    }
}
