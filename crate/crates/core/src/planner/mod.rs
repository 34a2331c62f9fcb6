//! Velocity-level IK: one dense QP per control tick.
//!
//! Decision variable is the commanded joint velocity `qd`. Per tick,
//!
//! ```text
//!   H = J'J + dt^2 J' Gamma J + lambda I
//!   g = -J' v_d + dt J' Gamma (x - x_d)
//! ```
//!
//! which is the gradient form of `|v_d - J qd|^2 + |(x - x_d) + dt J qd|^2_Gamma
//! + lambda |qd|^2`. Position limits fold into the velocity bounds under the
//! explicit Euler rule `q_d = q + dt qd`, and each volume pair closer than
//! `d_act` adds the linearized clearance row `dt (dd/dq) qd >= d_buff - d`.

mod interp;

pub use interp::{interpolate, interpolate_pose, versine_ramp};

use std::time::Instant;

use nalgebra::{DMatrix, DVector, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{pose_error, ChainError, CompositeChain, Pose, SpatialVelocity};
use crate::collision::{ActivePair, CollisionError, CollisionWorld, PairId};
use crate::qp::{ActiveConstraint, QpError, QpProblem, QpSolver, QpStatus, Side, SolverOptions, DEFAULT_MAX_NWSR};

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("invalid planner config: {0}")]
    InvalidConfig(String),
    #[error("time {t} outside [0, {duration}]")]
    InvalidTime { t: f64, duration: f64 },
    #[error("expected {expected} per-arm entries, got {actual}")]
    ArmCount { expected: usize, actual: usize },
    #[error("initial configuration violates {0}")]
    InvalidStart(String),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Collision(#[from] CollisionError),
    #[error(transparent)]
    Qp(#[from] QpError),
}

/// Drift weight: a scalar multiple of identity or a 6-entry diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gamma {
    Scalar(f64),
    Diagonal([f64; 6]),
}

impl Gamma {
    pub fn diagonal(&self) -> Vector6<f64> {
        match *self {
            Gamma::Scalar(g) => Vector6::repeat(g),
            Gamma::Diagonal(d) => Vector6::from(d),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub dt: f64,
    pub gamma: Gamma,
    pub lambda: f64,
    pub d_buff: f64,
    pub d_act: f64,
    pub delta_q: f64,
    #[serde(rename = "ubA_big")]
    pub uba_big: f64,
    pub max_nwsr: usize,
    /// Use `lbA = d_buff` instead of `d_buff - d`; for comparison only.
    pub literal_eq12: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            dt: 0.002,
            gamma: Gamma::Scalar(1.0),
            lambda: 1e-3,
            d_buff: 0.05,
            d_act: 0.15,
            delta_q: 1e-5,
            uba_big: 1e10,
            max_nwsr: DEFAULT_MAX_NWSR,
            literal_eq12: false,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self, comp: &CompositeChain) -> Result<(), PlannerError> {
        let bad = |m: String| Err(PlannerError::InvalidConfig(m));
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.d_buff > 0.0) || !(self.d_act >= self.d_buff) {
            return bad(format!("need d_act >= d_buff > 0, got d_buff {} d_act {}", self.d_buff, self.d_act));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if self.gamma.diagonal().iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
            return bad("gamma entries must be finite and non-negative".into());
        }
        let (_, qd_ub) = comp.velocity_limits();
        let min_ub = qd_ub.iter().copied().fold(f64::INFINITY, f64::min);
        if !(self.delta_q > 0.0) || !(self.delta_q < self.dt * min_ub) {
            return bad(format!(
                "delta_q must lie in (0, dt * min qd_ub) = (0, {}), got {}",
                self.dt * min_ub,
                self.delta_q
            ));
        }
        if self.max_nwsr < 1 {
            return bad("max_nwsr must be at least 1".into());
        }
        if !(self.uba_big > 0.0) {
            return bad("ubA_big must be positive".into());
        }
        Ok(())
    }
}

/// Task-space goal for one arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub pose: Pose,
    pub terminal_velocity: SpatialVelocity,
    /// Segment duration `T_traj` in seconds.
    pub duration: f64,
}

impl Waypoint {
    pub fn at_rest(pose: Pose, duration: f64) -> Self {
        Self {
            pose,
            terminal_velocity: SpatialVelocity::zero(),
            duration,
        }
    }
}

/// Reference for every arm at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub x_d: Vec<Pose>,
    pub v_d: Vec<SpatialVelocity>,
}

impl TrajectorySample {
    /// Hold every arm at its current pose.
    pub fn stationary(t: f64, poses: Vec<Pose>) -> Self {
        let n = poses.len();
        Self {
            t,
            x_d: poses,
            v_d: vec![SpatialVelocity::zero(); n],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    /// Wall time of assembly plus solve, seconds.
    pub solve_time: f64,
    pub nwsr: usize,
    pub nac: usize,
    pub min_distance: f64,
    pub status: QpStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub q_d: Vec<f64>,
    pub qd_d: Vec<f64>,
    pub diagnostics: StepDiagnostics,
}

/// Per-tick QP plus the pair behind each general row.
#[derive(Debug, Clone)]
pub struct AssembledQp {
    pub problem: QpProblem,
    pub rows: Vec<PairId>,
    /// Pair distances at `q`, aligned with `world.pairs()`.
    pub distances: Vec<f64>,
}

/// Build the tick QP at configuration `q` for reference `sample`.
pub fn assemble_qp(
    comp: &CompositeChain,
    world: &CollisionWorld,
    q: &[f64],
    sample: &TrajectorySample,
    config: &PlannerConfig,
) -> Result<AssembledQp, PlannerError> {
    let n = comp.dof();
    let arms = comp.n_chains();
    if sample.x_d.len() != arms || sample.v_d.len() != arms {
        return Err(PlannerError::ArmCount {
            expected: arms,
            actual: sample.x_d.len().min(sample.v_d.len()),
        });
    }
    let dt = config.dt;
    let j = comp.composite_jacobian(q)?;
    let ee = comp.ee_poses(q)?;
    let gamma = config.gamma.diagonal();

    let mut v = DVector::zeros(6 * arms);
    let mut e = DVector::zeros(6 * arms);
    let mut w = DVector::zeros(6 * arms);
    for (k, ((vd, xd), pose)) in sample.v_d.iter().zip(&sample.x_d).zip(&ee).enumerate() {
        v.fixed_rows_mut::<6>(6 * k).copy_from(&vd.to_vector());
        e.fixed_rows_mut::<6>(6 * k).copy_from(&pose_error(pose, xd));
        w.fixed_rows_mut::<6>(6 * k).copy_from(&gamma);
    }

    // Gamma J, row-scaled.
    let mut gj = j.clone();
    for (r, mut row) in gj.row_iter_mut().enumerate() {
        row *= w[r];
    }
    let mut h = j.tr_mul(&j) + j.tr_mul(&gj) * (dt * dt);
    for i in 0..n {
        h[(i, i)] += config.lambda;
    }
    let h = (&h + h.transpose()) * 0.5;
    let g = -j.tr_mul(&v) + gj.tr_mul(&e) * dt;

    #[cfg(debug_assertions)]
    {
        let min_eig = h.clone().symmetric_eigenvalues().min();
        debug_assert!(
            min_eig >= config.lambda - 1e-12 * (1.0 + h.amax()),
            "H smallest eigenvalue {min_eig} below lambda"
        );
    }

    let (q_lb, q_ub) = comp.position_limits();
    let (qd_lb, qd_ub) = comp.velocity_limits();
    let mut lb = DVector::zeros(n);
    let mut ub = DVector::zeros(n);
    for i in 0..n {
        lb[i] = qd_lb[i].max((q_lb[i] - q[i]) / dt);
        ub[i] = qd_ub[i].min((q_ub[i] - q[i]) / dt);
        // Outside a position limit the merged interval can invert; keep the
        // side that heads back inside.
        if ub[i] < lb[i] {
            ub[i] = lb[i];
        }
    }

    let distances = world.pair_distances(comp, q)?;
    let active: Vec<ActivePair> = world.active_from_distances(comp, q, &distances, config.d_act, config.delta_q)?;
    let m = active.len();
    let mut a = DMatrix::zeros(m, n);
    let mut lba = DVector::zeros(m);
    let uba = DVector::from_element(m, config.uba_big);
    for (r, p) in active.iter().enumerate() {
        for c in 0..n {
            a[(r, c)] = p.gradient[c] * dt;
        }
        lba[r] = if config.literal_eq12 {
            config.d_buff
        } else {
            config.d_buff - p.distance
        };
    }
    let problem = QpProblem::new(h, g, a, lba, uba, lb, ub)?;
    Ok(AssembledQp {
        problem,
        rows: active.into_iter().map(|p| p.pair).collect(),
        distances,
    })
}

/// Previous tick's working set, with general rows keyed by pair identity so
/// they survive changes in the set of active pairs.
#[derive(Debug, Clone, Default)]
struct WarmCache {
    bounds: Vec<ActiveConstraint>,
    rows: Vec<(PairId, Side)>,
}

impl WarmCache {
    fn map(&self, n: usize, rows: &[PairId]) -> Vec<ActiveConstraint> {
        let mut out = self.bounds.clone();
        for (pair, side) in &self.rows {
            if let Some(r) = rows.iter().position(|p| p == pair) {
                out.push(ActiveConstraint { index: n + r, side: *side });
            }
        }
        out
    }
}

/// Stateful per-run planner: owns the solver workspace and the warm start.
#[derive(Debug, Clone)]
pub struct Planner {
    comp: CompositeChain,
    world: CollisionWorld,
    config: PlannerConfig,
    solver: QpSolver,
    warm: Option<WarmCache>,
}

/// Everything `plan` produced, one entry per tick.
#[derive(Debug, Clone, Default)]
pub struct PlanTrace {
    pub samples: Vec<TrajectorySample>,
    pub steps: Vec<StepResult>,
}

impl Planner {
    pub fn new(comp: CompositeChain, world: CollisionWorld, config: PlannerConfig) -> Result<Self, PlannerError> {
        config.validate(&comp)?;
        Ok(Self {
            comp,
            world,
            config,
            solver: QpSolver::default(),
            warm: None,
        })
    }

    pub fn with_solver_options(mut self, options: SolverOptions) -> Self {
        self.solver = QpSolver::new(options);
        self
    }

    pub fn comp(&self) -> &CompositeChain {
        &self.comp
    }

    pub fn world(&self) -> &CollisionWorld {
        &self.world
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.config
    }

    /// Drop the warm start so the next tick solves cold.
    pub fn reset(&mut self) {
        self.warm = None;
    }

    /// One control tick from `q` toward `sample`.
    ///
    /// If the QP is infeasible or runs out of working-set changes the tick
    /// halts in place (`qd_d = 0`, `q_d = q`) and the status records why.
    pub fn step(&mut self, q: &[f64], sample: &TrajectorySample) -> Result<StepResult, PlannerError> {
        let n = self.comp.dof();
        if q.len() != n {
            return Err(ChainError::DimensionMismatch {
                expected: n,
                actual: q.len(),
            }
            .into());
        }
        let started = Instant::now();
        let asm = assemble_qp(&self.comp, &self.world, q, sample, &self.config)?;
        let warm = self.warm.as_ref().map(|w| w.map(n, &asm.rows));
        let sol = self.solver.solve(&asm.problem, warm.as_deref(), self.config.max_nwsr)?;
        let solve_time = started.elapsed().as_secs_f64();

        let p = &asm.problem;
        let (qd_d, nac) = if sol.status == QpStatus::Solved {
            // The solver may land a few ulps outside a bound; integrate the
            // clipped velocity so limits hold exactly.
            let qd: Vec<f64> = (0..n).map(|i| sol.a_star[i].clamp(p.lb[i], p.ub[i])).collect();
            let mut cache = WarmCache::default();
            for c in &sol.active_set {
                if c.index < n {
                    cache.bounds.push(*c);
                } else {
                    cache.rows.push((asm.rows[c.index - n], c.side));
                }
            }
            self.warm = Some(cache);
            (qd, sol.nac())
        } else {
            self.warm = None;
            (vec![0.0; n], 0)
        };
        let q_d: Vec<f64> = q.iter().zip(&qd_d).map(|(qi, vi)| qi + self.config.dt * vi).collect();
        let min_distance = self.world.world_min_distance(&self.comp, &q_d)?.distance;
        Ok(StepResult {
            q_d,
            qd_d,
            diagnostics: StepDiagnostics {
                solve_time,
                nwsr: sol.nwsr,
                nac,
                min_distance,
                status: sol.status,
            },
        })
    }

    /// Track a sequence of waypoint sets (one waypoint per arm, all arms
    /// switching together) from `q0`.
    ///
    /// Each segment interpolates from the end-effector pose at the start of
    /// that segment, not from the previous waypoint, so tracking error does
    /// not accumulate. Segment `k` runs `round(T / dt)` ticks at local times
    /// `dt, 2 dt, ..., T`; the reference at a tick is sampled at the tick's
    /// end time and compared against FK at the current configuration.
    pub fn plan(&mut self, q0: &[f64], waypoints: &[Vec<Waypoint>]) -> Result<PlanTrace, PlannerError> {
        let arms = self.comp.n_chains();
        self.check_start(q0)?;
        let mut trace = PlanTrace::default();
        let mut q = q0.to_vec();
        let mut tick = 0usize;
        for set in waypoints {
            if set.len() != arms {
                return Err(PlannerError::ArmCount {
                    expected: arms,
                    actual: set.len(),
                });
            }
            let duration = set[0].duration;
            if set.iter().any(|w| w.duration != duration) {
                return Err(PlannerError::InvalidConfig("waypoints in one set must share a duration".into()));
            }
            let starts = self.comp.ee_poses(&q)?;
            let ticks = segment_ticks(duration, self.config.dt);
            for k in 1..=ticks {
                tick += 1;
                let sample = segment_sample(&starts, set, k, tick, self.config.dt)?;
                let step = self.step(&q, &sample)?;
                q.clone_from(&step.q_d);
                trace.samples.push(sample);
                trace.steps.push(step);
            }
        }
        Ok(trace)
    }

    /// Reject a start configuration outside the position limits or closer
    /// than `d_buff` to a collision.
    pub fn check_start(&self, q0: &[f64]) -> Result<(), PlannerError> {
        let n = self.comp.dof();
        if q0.len() != n {
            return Err(ChainError::DimensionMismatch {
                expected: n,
                actual: q0.len(),
            }
            .into());
        }
        let (lo, hi) = self.comp.position_limits();
        for i in 0..n {
            if q0[i] < lo[i] || q0[i] > hi[i] {
                return Err(PlannerError::InvalidStart(format!(
                    "position limit of joint {i}: {} not in [{}, {}]",
                    q0[i], lo[i], hi[i]
                )));
            }
        }
        let d = self.world.world_min_distance(&self.comp, q0)?;
        if d.distance < self.config.d_buff {
            let which = d.pair.map(|p| self.world.describe_pair(p)).unwrap_or_default();
            return Err(PlannerError::InvalidStart(format!(
                "buffer distance: {which} at {:.4} m < d_buff {}",
                d.distance, self.config.d_buff
            )));
        }
        Ok(())
    }
}

/// Reference at tick `k` (1-based) of a segment that starts at the
/// end-effector poses `starts`; `tick` is the global tick count.
pub fn segment_sample(
    starts: &[Pose],
    set: &[Waypoint],
    k: usize,
    tick: usize,
    dt: f64,
) -> Result<TrajectorySample, PlannerError> {
    let mut sample = TrajectorySample {
        t: tick as f64 * dt,
        x_d: Vec::with_capacity(set.len()),
        v_d: Vec::with_capacity(set.len()),
    };
    for (start, wp) in starts.iter().zip(set) {
        let local = (k as f64 * dt).min(wp.duration);
        let (x, v) = interpolate_pose(start, wp, local)?;
        sample.x_d.push(x);
        sample.v_d.push(v);
    }
    Ok(sample)
}

/// Number of ticks in a segment of length `duration`.
pub fn segment_ticks(duration: f64, dt: f64) -> usize {
    (duration / dt).round() as usize
}
