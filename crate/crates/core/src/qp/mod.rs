//! Dense strictly convex QP in the normal form
//!
//! ```text
//!     min_a   1/2 a' H a + a' g
//!     s.t.    lbA <= A a <= ubA
//!             lb  <= a   <= ub
//! ```
//!
//! solved by a primal active-set method. Each working-set change refactors the
//! equality-constrained subproblem from scratch: Cholesky of `H` (once per
//! solve) plus a Cholesky of the Schur complement `C H^-1 C'` of the working
//! rows. Problems here are small (tens of variables and rows) so updates are
//! not worth their complexity.
//!
//! Constraint indices address bounds first (`0..n`) and general rows after
//! (`n..n+m`). Infinite bound values are allowed and never block.

mod solver;
mod text;

pub use solver::{solve, QpSolver, SolverOptions, DEFAULT_MAX_NWSR};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("H is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("H is not positive definite")]
    NotPositiveDefinite,
    #[error("inconsistent bounds at constraint {index}: lower {lower} > upper {upper}")]
    InvertedBounds { index: usize, lower: f64, upper: f64 },
    #[error("malformed problem text at line {line}: {message}")]
    Text { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a: DMatrix<f64>,
    pub lba: DVector<f64>,
    pub uba: DVector<f64>,
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
}

impl QpProblem {
    pub fn new(
        h: DMatrix<f64>,
        g: DVector<f64>,
        a: DMatrix<f64>,
        lba: DVector<f64>,
        uba: DVector<f64>,
        lb: DVector<f64>,
        ub: DVector<f64>,
    ) -> Result<Self, QpError> {
        let p = Self { h, g, a, lba, uba, lb, ub };
        p.validate()?;
        Ok(p)
    }

    /// Box-constrained problem without general rows.
    pub fn with_bounds(h: DMatrix<f64>, g: DVector<f64>, lb: DVector<f64>, ub: DVector<f64>) -> Result<Self, QpError> {
        let n = g.len();
        Self::new(h, g, DMatrix::zeros(0, n), DVector::zeros(0), DVector::zeros(0), lb, ub)
    }

    pub fn n(&self) -> usize {
        self.g.len()
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.n();
        let m = self.m();
        if self.h.shape() != (n, n) {
            return Err(QpError::Dimension(format!("H is {:?}, expected ({n}, {n})", self.h.shape())));
        }
        if self.a.ncols() != n && m > 0 {
            return Err(QpError::Dimension(format!("A has {} columns, expected {n}", self.a.ncols())));
        }
        if self.lb.len() != n || self.ub.len() != n {
            return Err(QpError::Dimension("bound vectors must have length n".into()));
        }
        if self.lba.len() != m || self.uba.len() != m {
            return Err(QpError::Dimension("constraint bound vectors must have length m".into()));
        }
        let asym = (&self.h - self.h.transpose()).abs().max();
        if asym > 1e-12 * (1.0 + self.h.abs().max()) {
            return Err(QpError::NotSymmetric(asym));
        }
        for i in 0..n + m {
            let (lo, hi) = self.constraint_bounds(i);
            if lo > hi || lo.is_nan() || hi.is_nan() {
                return Err(QpError::InvertedBounds { index: i, lower: lo, upper: hi });
            }
        }
        Ok(())
    }

    /// `(lower, upper)` of constraint `i` in the combined indexing.
    pub fn constraint_bounds(&self, i: usize) -> (f64, f64) {
        let n = self.n();
        if i < n {
            (self.lb[i], self.ub[i])
        } else {
            (self.lba[i - n], self.uba[i - n])
        }
    }

    /// Value of constraint `i` at `x`.
    pub fn constraint_value(&self, i: usize, x: &DVector<f64>) -> f64 {
        let n = self.n();
        if i < n {
            x[i]
        } else {
            self.a.row(i - n).dot(&x.transpose())
        }
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.g.dot(x)
    }

    /// Largest absolute entry of `H`, `g` and `A`; scales solver tolerances.
    pub fn data_magnitude(&self) -> f64 {
        let mut mag = self.h.abs().max().max(self.g.abs().max());
        if self.m() > 0 {
            mag = mag.max(self.a.abs().max());
        }
        mag
    }

    /// Feasibility/stationarity tolerance for this problem.
    pub fn tolerance(&self) -> f64 {
        1e-8 * (1.0 + self.data_magnitude())
    }

    /// Largest bound or constraint violation at `x`.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        (0..self.n() + self.m())
            .map(|i| {
                let (lo, hi) = self.constraint_bounds(i);
                let v = self.constraint_value(i, x);
                (lo - v).max(v - hi).max(0.0)
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    Lower,
    Upper,
}

/// A constraint held as an equality in the working set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActiveConstraint {
    /// Combined index: bounds `0..n`, general rows `n..n+m`.
    pub index: usize,
    pub side: Side,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Solved,
    MaxIterations,
    Infeasible,
}

/// Lagrange multipliers in the convention `H a + g + A' general + bounds = 0`,
/// so a constraint active at its lower side carries a non-positive multiplier
/// and one active at its upper side a non-negative one.
#[derive(Debug, Clone, PartialEq)]
pub struct Multipliers {
    pub bounds: DVector<f64>,
    pub general: DVector<f64>,
}

impl Multipliers {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            bounds: DVector::zeros(n),
            general: DVector::zeros(m),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub a_star: DVector<f64>,
    pub status: QpStatus,
    /// Working-set changes made during the solve (including phase 1).
    pub nwsr: usize,
    /// Final working set, sorted by constraint index.
    pub active_set: Vec<ActiveConstraint>,
    pub multipliers: Multipliers,
    pub kkt_residual: f64,
    pub objective: f64,
}

impl QpSolution {
    /// Number of general (non-bound) constraints in the active set.
    pub fn nac(&self) -> usize {
        let n = self.a_star.len();
        self.active_set.iter().filter(|c| c.index >= n).count()
    }
}

/// Max of stationarity, primal infeasibility and complementarity violation.
pub fn kkt_residual(p: &QpProblem, a: &DVector<f64>, mult: &Multipliers) -> f64 {
    let n = p.n();
    let mut grad = &p.h * a + &p.g + &mult.bounds;
    if p.m() > 0 {
        grad += p.a.transpose() * &mult.general;
    }
    let stationarity = grad.amax();
    let primal = p.max_violation(a);
    let mut comp: f64 = 0.0;
    for i in 0..n + p.m() {
        let mu = if i < n { mult.bounds[i] } else { mult.general[i - n] };
        if mu == 0.0 {
            continue;
        }
        let (lo, hi) = p.constraint_bounds(i);
        let v = p.constraint_value(i, a);
        let slack = if mu < 0.0 { v - lo } else { hi - v };
        let c = if slack.is_finite() { mu.abs() * slack.abs() } else { mu.abs() };
        comp = comp.max(c);
    }
    stationarity.max(primal).max(comp)
}
