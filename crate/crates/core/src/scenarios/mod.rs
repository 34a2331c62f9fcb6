//! Reproducible runs: a scenario document names the arms, the collision
//! model, a waypoint sphere and the planner settings; a seed fixes the rest.

mod config;
pub mod log;
pub mod metrics;
mod waypoints;

pub use config::{
    AttachEntry, ChainEntry, CollisionSection, Overrides, Scenario, ScenarioConfig, VolumeEntry, WaypointSection,
    WORLD,
};
pub use log::{RunLog, RunMeta, TickRecord};
pub use metrics::{analyze, MetricsReport};
pub use waypoints::{generate_waypoint, random_direction, surface_orientation, waypoint_sets, Sphere};

use thiserror::Error;

use crate::collision::CollisionError;
use crate::planner::{Planner, PlannerError};
use crate::qp::SolverOptions;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario document: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("run log line {line}: {message}")]
    Log { line: usize, message: String },
    #[error("{0}")]
    Metric(String),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Collision(#[from] CollisionError),
    #[error(transparent)]
    Chain(#[from] crate::chain::ChainError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Std(#[from] std::io::Error),
}

impl Scenario {
    /// Generate the waypoints and track them from the home configuration.
    pub fn run(&self) -> Result<RunLog, ScenarioError> {
        self.run_with(SolverOptions::default())
    }

    pub fn run_with(&self, options: SolverOptions) -> Result<RunLog, ScenarioError> {
        let cfg = &self.config;
        let sets = waypoint_sets(&cfg.waypoints, self.comp.n_chains());
        let mut planner =
            Planner::new(self.comp.clone(), self.world.clone(), cfg.planner.clone())?.with_solver_options(options);
        let trace = planner.plan(&self.home, &sets)?;
        let ticks = trace
            .samples
            .iter()
            .zip(trace.steps)
            .map(|(s, step)| TickRecord {
                t: s.t,
                q_d: step.q_d,
                qd_d: step.qd_d,
                solve_time_us: step.diagnostics.solve_time * 1e6,
                nwsr: step.diagnostics.nwsr,
                nac: step.diagnostics.nac,
                min_distance: step.diagnostics.min_distance,
                status: step.diagnostics.status,
            })
            .collect();
        Ok(RunLog {
            meta: RunMeta {
                scenario: cfg.id.clone(),
                seed: cfg.waypoints.seed,
                config_hash: cfg.hash(),
                config: cfg.to_json(),
            },
            dof: self.comp.dof(),
            ticks,
        })
    }
}

/// Build and run a config in one go.
pub fn run(config: &ScenarioConfig) -> Result<RunLog, ScenarioError> {
    config.build()?.run()
}
