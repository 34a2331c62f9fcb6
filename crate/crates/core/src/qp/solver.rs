use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};

use super::{kkt_residual, ActiveConstraint, Multipliers, QpError, QpProblem, QpSolution, QpStatus, Side};

pub const DEFAULT_MAX_NWSR: usize = 200;

/// Directional derivatives at or below this never block a step.
const DENOM_TOL: f64 = 1e-14;
/// Relative step size treated as "already at the subproblem minimizer".
const STEP_TOL: f64 = 1e-12;
/// Penalty escalations before phase 1 gives up and reports infeasibility.
const PHASE1_RETRIES: usize = 4;
/// Squared relative Schur pivot below which a row counts as dependent on
/// the working set (an angle of about 1e-3 in the `H^-1` metric).
const INDEPENDENCE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Default)]
pub struct SolverOptions {
    /// When set, every problem that does not end `Solved` is written here in
    /// the plain-text format of [`QpProblem::to_text`].
    pub dump_dir: Option<PathBuf>,
}

/// Active-set solver. Holds no state between solves apart from options and
/// a dump counter; warm starts are passed explicitly.
#[derive(Debug, Clone, Default)]
pub struct QpSolver {
    options: SolverOptions,
    dumped: usize,
}

enum LoopEnd {
    Optimal(DVector<f64>),
    MaxIterations(Option<DVector<f64>>),
}

/// Equality-constrained subproblem machinery for one problem.
struct Eqp<'a> {
    p: &'a QpProblem,
    /// Lower Cholesky factor of `H`.
    l: DMatrix<f64>,
    /// `L^-1 g`.
    linv_g: DVector<f64>,
}

impl<'a> Eqp<'a> {
    fn new(p: &'a QpProblem) -> Result<Self, QpError> {
        let l = p.h.clone().cholesky().ok_or(QpError::NotPositiveDefinite)?.unpack();
        let linv_g = l.solve_lower_triangular(&p.g).ok_or(QpError::NotPositiveDefinite)?;
        Ok(Self { p, l, linv_g })
    }

    fn row(&self, c: ActiveConstraint) -> DVector<f64> {
        let n = self.p.n();
        if c.index < n {
            let mut e = DVector::zeros(n);
            e[c.index] = 1.0;
            e
        } else {
            self.p.a.row(c.index - n).transpose()
        }
    }

    fn bound(&self, c: ActiveConstraint) -> f64 {
        let (lo, hi) = self.p.constraint_bounds(c.index);
        match c.side {
            Side::Lower => lo,
            Side::Upper => hi,
        }
    }

    /// `L^-1 C'` for the working set.
    fn y(&self, w: &[ActiveConstraint]) -> DMatrix<f64> {
        let n = self.p.n();
        let mut ct = DMatrix::zeros(n, w.len());
        for (k, &c) in w.iter().enumerate() {
            ct.set_column(k, &self.row(c));
        }
        self.l.solve_lower_triangular(&ct).expect("L has a nonzero diagonal")
    }

    /// Minimizer of the objective with the working set held as equalities,
    /// and its multipliers `lambda` in `H x + g = C' lambda`.
    fn solve(&self, w: &[ActiveConstraint]) -> Option<(DVector<f64>, DVector<f64>)> {
        let y = self.y(w);
        let lambda = if w.is_empty() {
            DVector::zeros(0)
        } else {
            let s = y.transpose() * &y;
            let b = DVector::from_iterator(w.len(), w.iter().map(|&c| self.bound(c)));
            let rhs = b + y.transpose() * &self.linv_g;
            s.cholesky()?.solve(&rhs)
        };
        let v = &y * &lambda - &self.linv_g;
        let x = self.l.tr_solve_lower_triangular(&v)?;
        if x.iter().chain(lambda.iter()).all(|v| v.is_finite()) {
            Some((x, lambda))
        } else {
            None
        }
    }

    /// Whether `w` has linearly independent rows, judged by the pivots of the
    /// Schur complement's Cholesky factor.
    fn independent(&self, w: &[ActiveConstraint]) -> bool {
        if w.is_empty() {
            return true;
        }
        let y = self.y(w);
        let s = y.transpose() * &y;
        let Some(ch) = s.clone().cholesky() else {
            return false;
        };
        let l = ch.l();
        (0..w.len()).all(|i| l[(i, i)] * l[(i, i)] > INDEPENDENCE_TOL * s[(i, i)])
    }

    /// Least-norm correction of `x` onto the affine set where every working
    /// constraint holds with equality. Start points found to within a
    /// tolerance are snapped this way so the first subproblem step is a true
    /// descent direction.
    fn project(&self, x: &DVector<f64>, w: &[ActiveConstraint]) -> DVector<f64> {
        if w.is_empty() {
            return x.clone();
        }
        let n = self.p.n();
        let mut c = DMatrix::zeros(w.len(), n);
        let mut r = DVector::zeros(w.len());
        for (k, &a) in w.iter().enumerate() {
            c.set_row(k, &self.row(a).transpose());
            r[k] = self.bound(a) - self.p.constraint_value(a.index, x);
        }
        match (&c * c.transpose()).cholesky() {
            Some(ch) => x + c.transpose() * ch.solve(&r),
            None => x.clone(),
        }
    }

    /// Primal active-set iterations from the feasible point `x`.
    fn iterate(
        &self,
        x: &mut DVector<f64>,
        w: &mut Vec<ActiveConstraint>,
        nwsr: &mut usize,
        max_nwsr: usize,
        tol: f64,
    ) -> LoopEnd {
        let p = self.p;
        let total = p.n() + p.m();
        loop {
            let Some((x_eq, lambda)) = self.solve(w) else {
                return LoopEnd::MaxIterations(None);
            };
            let step = &x_eq - &*x;
            if step.amax() <= STEP_TOL * (1.0 + x.amax()) {
                *x = x_eq;
                let mut leave: Option<(f64, usize, usize)> = None;
                for (k, &c) in w.iter().enumerate() {
                    let (lo, hi) = p.constraint_bounds(c.index);
                    if lo == hi {
                        continue;
                    }
                    let s = match c.side {
                        Side::Lower => lambda[k],
                        Side::Upper => -lambda[k],
                    };
                    if s < -tol && leave.is_none_or(|(ls, li, _)| s < ls || (s == ls && c.index < li)) {
                        leave = Some((s, c.index, k));
                    }
                }
                let Some((_, _, k)) = leave else {
                    return LoopEnd::Optimal(lambda);
                };
                if *nwsr >= max_nwsr {
                    return LoopEnd::MaxIterations(Some(lambda));
                }
                w.remove(k);
                *nwsr += 1;
                continue;
            }

            let mut in_w = vec![false; total];
            for c in w.iter() {
                in_w[c.index] = true;
            }
            // A blocker whose row depends on the working set could not be
            // added without making the subproblem singular. In exact
            // arithmetic such a row has zero slope along the step; it is
            // skipped and the ratio test rerun.
            let (alpha, blocking) = loop {
                let mut alpha = 1.0;
                let mut blocking: Option<ActiveConstraint> = None;
                for i in 0..total {
                    if in_w[i] {
                        continue;
                    }
                    let c_p = if i < p.n() { step[i] } else { p.a.row(i - p.n()).dot(&step.transpose()) };
                    let (lo, hi) = p.constraint_bounds(i);
                    let value = p.constraint_value(i, x);
                    let (limit, side) = if c_p < -DENOM_TOL && lo.is_finite() {
                        (lo, Side::Lower)
                    } else if c_p > DENOM_TOL && hi.is_finite() {
                        (hi, Side::Upper)
                    } else {
                        continue;
                    };
                    let a_i = ((limit - value) / c_p).max(0.0);
                    if a_i < alpha {
                        alpha = a_i;
                        blocking = Some(ActiveConstraint { index: i, side });
                    }
                }
                match blocking {
                    Some(c) if !self.independent(&[w.as_slice(), &[c]].concat()) => in_w[c.index] = true,
                    _ => break (alpha, blocking),
                }
            };
            let before = if cfg!(debug_assertions) { p.objective(x) } else { 0.0 };
            x.axpy(alpha, &step, 1.0);
            debug_assert!(
                p.objective(x) <= before + 1e-9 * (1.0 + before.abs()),
                "active-set step increased the objective"
            );
            if let Some(c) = blocking {
                if *nwsr >= max_nwsr {
                    return LoopEnd::MaxIterations(None);
                }
                w.push(c);
                *nwsr += 1;
                // A point within tolerance of a violated row sits slightly
                // off it; snap onto the working set so the next step starts
                // on its affine set.
                if p.constraint_value(c.index, x) != self.bound(c) {
                    *x = self.project(x, w);
                }
            }
        }
    }
}

impl QpSolver {
    pub fn new(options: SolverOptions) -> Self {
        Self { options, dumped: 0 }
    }

    pub fn options(&self) -> &SolverOptions {
        &self.options
    }

    /// Solve `p`, optionally warm-started from a previous working set.
    ///
    /// Warm constraints that no longer exist, point at infinite bounds or are
    /// linearly dependent on earlier ones are dropped. If the subproblem of
    /// the remaining set has a feasible minimizer the solve starts there;
    /// otherwise it starts from the cold feasible point with those warm
    /// constraints that are active at it.
    pub fn solve(
        &mut self,
        p: &QpProblem,
        warm: Option<&[ActiveConstraint]>,
        max_nwsr: usize,
    ) -> Result<QpSolution, QpError> {
        p.validate()?;
        let eqp = Eqp::new(p)?;
        let tol = p.tolerance();
        let n = p.n();
        let mut nwsr = 0;

        let mut start: Option<(DVector<f64>, Vec<ActiveConstraint>)> = None;
        let warm_set = warm.map(|ws| filter_warm(&eqp, ws));
        if let Some(ws) = &warm_set {
            if let Some((x_w, _)) = eqp.solve(ws) {
                if p.max_violation(&x_w) <= tol {
                    start = Some((x_w, ws.clone()));
                }
            }
        }

        let (mut x, mut w) = match start {
            Some(s) => s,
            None => {
                let x0 = p.lb.zip_map(&p.ub, |lo, hi| 0.0f64.clamp(lo, hi));
                let (x_feas, seed) = if p.max_violation(&x0) <= tol {
                    (x0, Vec::new())
                } else {
                    match phase_one(p, &x0, &mut nwsr, max_nwsr, tol)? {
                        PhaseOne::Feasible(x, active) => (x, active),
                        PhaseOne::Infeasible(x) => {
                            return Ok(self.finish(p, x, Vec::new(), None, QpStatus::Infeasible, nwsr));
                        }
                        PhaseOne::MaxIterations(x) => {
                            return Ok(self.finish(p, x, Vec::new(), None, QpStatus::MaxIterations, nwsr));
                        }
                    }
                };
                let mut w = Vec::new();
                for c in seed {
                    w.push(c);
                    if !eqp.independent(&w) {
                        w.pop();
                    }
                }
                if let Some(ws) = &warm_set {
                    for &c in ws {
                        if w.iter().any(|a| a.index == c.index) {
                            continue;
                        }
                        let active = (p.constraint_value(c.index, &x_feas) - eqp.bound(c)).abs() <= tol;
                        if active {
                            w.push(c);
                            if !eqp.independent(&w) {
                                w.pop();
                            }
                        }
                    }
                }
                (eqp.project(&x_feas, &w), w)
            }
        };

        let end = eqp.iterate(&mut x, &mut w, &mut nwsr, max_nwsr, tol);
        let (lambda, status) = match end {
            LoopEnd::Optimal(l) => (Some(l), QpStatus::Solved),
            LoopEnd::MaxIterations(l) => (l, QpStatus::MaxIterations),
        };
        debug_assert!(x.len() == n);
        Ok(self.finish(p, x, w, lambda, status, nwsr))
    }

    fn finish(
        &mut self,
        p: &QpProblem,
        x: DVector<f64>,
        w: Vec<ActiveConstraint>,
        lambda: Option<DVector<f64>>,
        status: QpStatus,
        nwsr: usize,
    ) -> QpSolution {
        let n = p.n();
        let mut mult = Multipliers::zeros(n, p.m());
        if let Some(lambda) = &lambda {
            for (k, c) in w.iter().enumerate() {
                if c.index < n {
                    mult.bounds[c.index] = -lambda[k];
                } else {
                    mult.general[c.index - n] = -lambda[k];
                }
            }
        }
        let mut active_set = w;
        active_set.sort();
        let kkt = kkt_residual(p, &x, &mult);
        if status != QpStatus::Solved {
            self.dump(p);
        }
        QpSolution {
            objective: p.objective(&x),
            a_star: x,
            status,
            nwsr,
            active_set,
            multipliers: mult,
            kkt_residual: kkt,
        }
    }

    fn dump(&mut self, p: &QpProblem) {
        let Some(dir) = &self.options.dump_dir else {
            return;
        };
        let path = dir.join(format!("qp_{:05}.txt", self.dumped));
        self.dumped += 1;
        // Best effort: a failed debug dump must not change solver results.
        let _ = std::fs::create_dir_all(dir).and_then(|_| std::fs::write(path, p.to_text()));
    }
}

/// One-shot solve with default options.
pub fn solve(p: &QpProblem, warm: Option<&[ActiveConstraint]>, max_nwsr: usize) -> Result<QpSolution, QpError> {
    QpSolver::default().solve(p, warm, max_nwsr)
}

fn filter_warm(eqp: &Eqp<'_>, ws: &[ActiveConstraint]) -> Vec<ActiveConstraint> {
    let total = eqp.p.n() + eqp.p.m();
    let mut out: Vec<ActiveConstraint> = Vec::with_capacity(ws.len());
    for &c in ws {
        if c.index >= total || out.iter().any(|o| o.index == c.index) || !eqp.bound(c).is_finite() {
            continue;
        }
        out.push(c);
        if !eqp.independent(&out) {
            out.pop();
        }
    }
    out
}

enum PhaseOne {
    /// Feasible point and the original constraints active there.
    Feasible(DVector<f64>, Vec<ActiveConstraint>),
    Infeasible(DVector<f64>),
    MaxIterations(DVector<f64>),
}

/// Find a point satisfying the general rows, starting from `x0` (which
/// already satisfies the bounds).
///
/// Solves the elastic problem
///
/// ```text
///   min 1/2 |x - x0|^2 + 1/2 t^2 + rho t
///   s.t. lbA_i <= a_i x / |a_i| + t,   a_i x / |a_i| - t <= ubA_i,   t >= 0
/// ```
///
/// with rows normalized so multipliers stay O(|x - x0|). The penalty is
/// exact once `rho` exceeds the multiplier sum; if the slack stays positive
/// `rho` is raised tenfold, and only when that stops helping is the problem
/// declared infeasible.
fn phase_one(p: &QpProblem, x0: &DVector<f64>, nwsr: &mut usize, max_nwsr: usize, tol: f64) -> Result<PhaseOne, QpError> {
    let n = p.n();
    let mut rows: Vec<(DVector<f64>, f64, f64)> = Vec::new();
    // Original constraint behind each auxiliary row.
    let mut source: Vec<ActiveConstraint> = Vec::new();
    for i in 0..p.m() {
        let r = p.a.row(i).transpose();
        let norm = r.norm();
        if norm == 0.0 {
            // An all-zero row is either satisfied everywhere or nowhere.
            if p.lba[i] > tol || p.uba[i] < -tol {
                return Ok(PhaseOne::Infeasible(x0.clone()));
            }
            continue;
        }
        let r = r / norm;
        if p.lba[i].is_finite() {
            let mut row = r.clone().resize_vertically(n + 1, 0.0);
            row[n] = 1.0;
            rows.push((row, p.lba[i] / norm, f64::INFINITY));
            source.push(ActiveConstraint { index: n + i, side: Side::Lower });
        }
        if p.uba[i].is_finite() {
            let mut row = r.resize_vertically(n + 1, 0.0);
            row[n] = -1.0;
            rows.push((row, f64::NEG_INFINITY, p.uba[i] / norm));
            source.push(ActiveConstraint { index: n + i, side: Side::Upper });
        }
    }
    let m = rows.len();
    let mut a = DMatrix::zeros(m, n + 1);
    let mut lba = DVector::zeros(m);
    let mut uba = DVector::zeros(m);
    for (k, (row, lo, hi)) in rows.into_iter().enumerate() {
        a.set_row(k, &row.transpose());
        lba[k] = lo;
        uba[k] = hi;
    }
    let lb = p.lb.clone().resize_vertically(n + 1, 0.0);
    let ub = p.ub.clone().resize_vertically(n + 1, f64::INFINITY);

    let mut rho = 1.0 + x0.amax() + (&p.ub - &p.lb).iter().filter(|v| v.is_finite()).fold(0.0, |acc: f64, v| acc.max(*v));
    let mut last = x0.clone();
    for _ in 0..PHASE1_RETRIES {
        let mut g = DVector::zeros(n + 1);
        g.rows_mut(0, n).copy_from(&(-x0));
        g[n] = rho;
        let aux = QpProblem::new(DMatrix::identity(n + 1, n + 1), g, a.clone(), lba.clone(), uba.clone(), lb.clone(), ub.clone())?;
        let mut x = x0.clone().resize_vertically(n + 1, 0.0);
        x[n] = aux_violation(&aux, &x);
        let eqp = Eqp::new(&aux)?;
        let mut w = Vec::new();
        let end = eqp.iterate(&mut x, &mut w, nwsr, max_nwsr, aux.tolerance());
        let point = x.rows(0, n).clone_owned();
        if let LoopEnd::MaxIterations(_) = end {
            return Ok(PhaseOne::MaxIterations(point));
        }
        if p.max_violation(&point) <= tol {
            let mut active: Vec<ActiveConstraint> = Vec::new();
            for c in w {
                let mapped = if c.index < n {
                    c
                } else if c.index == n {
                    continue;
                } else {
                    source[c.index - n - 1]
                };
                if !active.iter().any(|a| a.index == mapped.index) {
                    active.push(mapped);
                }
            }
            return Ok(PhaseOne::Feasible(point, active));
        }
        last = point;
        rho *= 10.0;
    }
    Ok(PhaseOne::Infeasible(last))
}

/// Slack that makes the auxiliary rows feasible at `x` (with `t` ignored).
fn aux_violation(aux: &QpProblem, x: &DVector<f64>) -> f64 {
    let n = x.len() - 1;
    let mut t: f64 = 0.0;
    for k in 0..aux.m() {
        let v: f64 = (0..n).map(|j| aux.a[(k, j)] * x[j]).sum();
        if aux.lba[k].is_finite() {
            t = t.max(aux.lba[k] - v);
        }
        if aux.uba[k].is_finite() {
            t = t.max(v - aux.uba[k]);
        }
    }
    t
}
