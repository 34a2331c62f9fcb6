//! Post-processing of run logs: solve statistics, jerk, spectrum and
//! Cartesian tracking.

use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::log::{format_f64, RunLog};
use super::waypoints::waypoint_sets;
use super::{Scenario, ScenarioConfig, ScenarioError};
use crate::chain::pose_error;
use crate::planner::{segment_sample, segment_ticks};
use crate::qp::QpStatus;

pub const JERK_BINS: usize = 1000;
/// Reference profiles: 5 s period, 1.39 rad/s amplitude, 2 ms sampling.
pub const REFERENCE_PERIOD: f64 = 5.0;
pub const REFERENCE_AMPLITUDE: f64 = 1.39;
pub const REFERENCE_DT: f64 = 0.002;
pub const REFERENCE_SEED: u64 = 0;
/// Cutoff of the low-frequency band reported in `stats.csv`.
pub const LOW_BAND_HZ: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    /// Seconds.
    pub median_solve_time: f64,
    pub mean_nwsr: f64,
    pub mean_nac: f64,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

pub fn solve_stats(log: &RunLog) -> Result<SolveStats, ScenarioError> {
    if log.is_empty() {
        return Err(ScenarioError::Metric("solve statistics need at least one tick".into()));
    }
    let n = log.ticks.len() as f64;
    let times: Vec<f64> = log.ticks.iter().map(|r| r.solve_time_us).collect();
    Ok(SolveStats {
        median_solve_time: median(&times).expect("nonempty") * 1e-6,
        mean_nwsr: log.ticks.iter().map(|r| r.nwsr as f64).sum::<f64>() / n,
        mean_nac: log.ticks.iter().map(|r| r.nac as f64).sum::<f64>() / n,
    })
}

/// Derivative with central differences inside and one-sided differences at
/// the ends (the convention of `numpy.gradient`).
pub fn gradient(x: &[f64], dt: f64) -> Vec<f64> {
    let n = x.len();
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n)
            .map(|i| {
                if i == 0 {
                    (x[1] - x[0]) / dt
                } else if i == n - 1 {
                    (x[n - 1] - x[n - 2]) / dt
                } else {
                    (x[i + 1] - x[i - 1]) / (2.0 * dt)
                }
            })
            .collect(),
    }
}

/// Jerk of a joint from its velocity series: the derivative taken twice.
pub fn jerk_series(qd: &[f64], dt: f64) -> Result<Vec<f64>, ScenarioError> {
    if qd.len() < 3 {
        return Err(ScenarioError::Metric(format!("jerk needs at least 3 ticks, got {}", qd.len())));
    }
    Ok(gradient(&gradient(qd, dt), dt))
}

/// Per-joint jerk of a run.
pub fn jerk_samples(log: &RunLog) -> Result<Vec<Vec<f64>>, ScenarioError> {
    if log.ticks.len() < 3 {
        return Err(ScenarioError::Metric(format!("jerk needs at least 3 ticks, got {}", log.ticks.len())));
    }
    let dt = log.dt().expect("at least two ticks");
    (0..log.dof).map(|j| jerk_series(&log.qd_series(j), dt)).collect()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `counts.len() + 1` equally spaced edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Equal-width histogram over the observed range. A degenerate range gets a
/// unit-wide span around the single value.
pub fn histogram(samples: &[f64], n_bins: usize) -> Result<Histogram, ScenarioError> {
    if samples.is_empty() || n_bins == 0 {
        return Err(ScenarioError::Metric("histogram needs samples and at least one bin".into()));
    }
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return Err(ScenarioError::Metric("histogram samples must be finite".into()));
    }
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    let width = (hi - lo) / n_bins as f64;
    let edges = (0..=n_bins).map(|i| if i == n_bins { hi } else { lo + width * i as f64 }).collect();
    let mut counts = vec![0u64; n_bins];
    for &s in samples {
        let b = (((s - lo) / width) as usize).min(n_bins - 1);
        counts[b] += 1;
    }
    Ok(Histogram { edges, counts })
}

/// Sinusoidal joint velocity over one period.
pub fn smooth_profile(period: f64, amplitude: f64, dt: f64) -> Vec<f64> {
    let n = segment_ticks(period, dt).max(3);
    (0..n)
        .map(|k| amplitude * (2.0 * std::f64::consts::PI * k as f64 * dt / period).sin())
        .collect()
}

/// Uniform random joint velocity in `[-amplitude, amplitude]`, one period long.
pub fn rough_profile(period: f64, amplitude: f64, dt: f64, seed: u64) -> Vec<f64> {
    let n = segment_ticks(period, dt).max(3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-amplitude..=amplitude)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JerkBounds {
    pub smooth_max: f64,
    pub rough_max: f64,
}

pub fn reference_bounds(period: f64, amplitude: f64, dt: f64, seed: u64) -> JerkBounds {
    let smooth = jerk_series(&smooth_profile(period, amplitude, dt), dt).expect("profiles have at least 3 samples");
    let rough = jerk_series(&rough_profile(period, amplitude, dt, seed), dt).expect("profiles have at least 3 samples");
    JerkBounds {
        smooth_max: max_abs(&smooth),
        rough_max: max_abs(&rough),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JerkReport {
    pub histogram: Histogram,
    pub max_abs: f64,
    pub bounds: JerkBounds,
}

pub fn jerk_report(log: &RunLog) -> Result<JerkReport, ScenarioError> {
    let all: Vec<f64> = jerk_samples(log)?.concat();
    Ok(JerkReport {
        histogram: histogram(&all, JERK_BINS)?,
        max_abs: max_abs(&all),
        bounds: reference_bounds(REFERENCE_PERIOD, REFERENCE_AMPLITUDE, REFERENCE_DT, REFERENCE_SEED),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub freq_hz: Vec<f64>,
    pub magnitude: Vec<f64>,
}

impl Spectrum {
    /// Share of the summed magnitude in bins strictly below `hz`.
    pub fn fraction_below(&self, hz: f64) -> f64 {
        let total: f64 = self.magnitude.iter().sum();
        if total == 0.0 {
            return 1.0;
        }
        let low: f64 = self.freq_hz.iter().zip(&self.magnitude).filter(|(f, _)| **f < hz).map(|(_, m)| m).sum();
        low / total
    }
}

/// Mean over series of the one-sided DFT magnitude (divided by the length)
/// after removing each series' mean. Bins run from 0 to Nyquist.
pub fn mean_spectrum(series: &[Vec<f64>], dt: f64) -> Result<Spectrum, ScenarioError> {
    let n = series.first().map_or(0, Vec::len);
    if n < 2 || series.iter().any(|s| s.len() != n) {
        return Err(ScenarioError::Metric(format!("spectrum needs at least 2 equal-length samples, got {n}")));
    }
    let fft = FftPlanner::new().plan_fft_forward(n);
    let bins = n / 2 + 1;
    let mut magnitude = vec![0.0; bins];
    for s in series {
        // Shifted by the first sample, so a constant series has exactly zero residual.
        let mean = s[0] + s.iter().map(|v| v - s[0]).sum::<f64>() / n as f64;
        let mut buf: Vec<Complex<f64>> = s.iter().map(|v| Complex::new(v - mean, 0.0)).collect();
        fft.process(&mut buf);
        for (m, c) in magnitude.iter_mut().zip(&buf) {
            *m += c.norm() / n as f64;
        }
    }
    for m in &mut magnitude {
        *m /= series.len() as f64;
    }
    let freq_hz = (0..bins).map(|k| k as f64 / (n as f64 * dt)).collect();
    Ok(Spectrum { freq_hz, magnitude })
}

/// Joint-position spectrum of a run, averaged over joints.
pub fn trajectory_fft(log: &RunLog) -> Result<Spectrum, ScenarioError> {
    if log.ticks.len() < 2 {
        return Err(ScenarioError::Metric(format!("spectrum needs at least 2 ticks, got {}", log.ticks.len())));
    }
    let series: Vec<Vec<f64>> = (0..log.dof).map(|j| log.q_series(j)).collect();
    mean_spectrum(&series, log.dt().expect("at least two ticks"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CartesianRow {
    pub t: f64,
    /// Per arm.
    pub reference: Vec<Vector3<f64>>,
    pub achieved: Vec<Vector3<f64>>,
    pub min_distance: f64,
}

impl CartesianRow {
    pub fn deviation(&self, arm: usize) -> f64 {
        (self.reference[arm] - self.achieved[arm]).norm()
    }

    pub fn max_deviation(&self) -> f64 {
        (0..self.reference.len()).map(|a| self.deviation(a)).fold(0.0, f64::max)
    }
}

/// Pose error at the last tick of a segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaypointError {
    pub waypoint: usize,
    pub arm: usize,
    pub position: f64,
    pub rotation: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Tracking {
    pub rows: Vec<CartesianRow>,
    pub waypoint_errors: Vec<WaypointError>,
}

/// Rebuild the reference stream of a run from its scenario and logged
/// joint trajectory, and compare it with the achieved end-effector path.
pub fn cartesian_deviation(scenario: &Scenario, log: &RunLog) -> Result<Tracking, ScenarioError> {
    let cfg = &scenario.config;
    let comp = &scenario.comp;
    let dt = cfg.planner.dt;
    let arms = comp.n_chains();
    let sets = waypoint_sets(&cfg.waypoints, arms);
    let per = segment_ticks(cfg.waypoints.t_traj, dt);
    if log.dof != comp.dof() || log.ticks.len() != per * sets.len() {
        return Err(ScenarioError::Metric(format!(
            "log ({} ticks, {} joints) does not match the scenario ({} ticks, {} joints)",
            log.ticks.len(),
            log.dof,
            per * sets.len(),
            comp.dof()
        )));
    }
    let mut out = Tracking::default();
    let mut q = scenario.home.clone();
    let mut tick = 0;
    for (w, set) in sets.iter().enumerate() {
        let starts = comp.ee_poses(&q)?;
        for k in 1..=per {
            let rec = &log.ticks[tick];
            tick += 1;
            let sample = segment_sample(&starts, set, k, tick, dt)?;
            let achieved = comp.ee_poses(&rec.q_d)?;
            out.rows.push(CartesianRow {
                t: rec.t,
                reference: sample.x_d.iter().map(|p| p.position).collect(),
                achieved: achieved.iter().map(|p| p.position).collect(),
                min_distance: rec.min_distance,
            });
            if k == per {
                for (arm, (x, wp)) in achieved.iter().zip(set).enumerate() {
                    let e = pose_error(x, &wp.pose);
                    out.waypoint_errors.push(WaypointError {
                        waypoint: w,
                        arm,
                        position: e.fixed_rows::<3>(0).norm(),
                        rotation: e.fixed_rows::<3>(3).norm(),
                    });
                }
            }
        }
        q.clone_from(&log.ticks[tick - 1].q_d);
    }
    Ok(out)
}

/// Everything computable from one log. Metrics that cannot be computed are
/// left out and the reason recorded in `problems`.
#[derive(Debug, Clone, Default)]
pub struct MetricsReport {
    pub ticks: usize,
    pub halted_ticks: usize,
    pub min_distance: Option<f64>,
    pub stats: Option<SolveStats>,
    pub jerk: Option<JerkReport>,
    pub fft: Option<Spectrum>,
    pub tracking: Option<Tracking>,
    pub problems: Vec<String>,
}

/// Metrics from the log alone; the Cartesian comparison uses the scenario
/// config recorded in the log's metadata, if any.
pub fn analyze(log: &RunLog) -> MetricsReport {
    let mut report = MetricsReport {
        ticks: log.ticks.len(),
        halted_ticks: log.ticks.iter().filter(|r| r.status != QpStatus::Solved).count(),
        min_distance: log.ticks.iter().map(|r| r.min_distance).reduce(f64::min),
        ..Default::default()
    };
    let note = |r: &mut MetricsReport, what: &str, e: ScenarioError| r.problems.push(format!("{what}: {e}"));
    match solve_stats(log) {
        Ok(s) => report.stats = Some(s),
        Err(e) => note(&mut report, "solve statistics", e),
    }
    match jerk_report(log) {
        Ok(j) => report.jerk = Some(j),
        Err(e) => note(&mut report, "jerk", e),
    }
    match trajectory_fft(log) {
        Ok(f) => report.fft = Some(f),
        Err(e) => note(&mut report, "spectrum", e),
    }
    if log.meta.config.is_empty() {
        report.problems.push("cartesian: log has no scenario config".into());
    } else {
        let tracking = ScenarioConfig::from_json(&log.meta.config)
            .and_then(|c| c.build())
            .and_then(|s| cartesian_deviation(&s, log));
        match tracking {
            Ok(t) => report.tracking = Some(t),
            Err(e) => note(&mut report, "cartesian", e),
        }
    }
    report
}

fn write_rows(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

impl MetricsReport {
    /// One-line summary for terminals.
    pub fn summary(&self) -> String {
        match &self.stats {
            Some(s) => format!(
                "ticks {} halted {} median_solve_time_ms {:.4} mean_nwsr {:.4} mean_nac {:.4} min_distance_m {:.4}",
                self.ticks,
                self.halted_ticks,
                s.median_solve_time * 1e3,
                s.mean_nwsr,
                s.mean_nac,
                self.min_distance.unwrap_or(f64::NAN)
            ),
            None => format!("ticks {} (no statistics)", self.ticks),
        }
    }

    /// Write `stats.csv` and whichever of `jerk_hist.csv`, `fft.csv`,
    /// `cartesian.csv` and `waypoint_errors.csv` could be computed.
    pub fn write_csv(&self, dir: &Path) -> Result<(), ScenarioError> {
        fs::create_dir_all(dir)?;
        let mut stats: Vec<(String, String)> = vec![
            ("ticks".into(), self.ticks.to_string()),
            ("halted_ticks".into(), self.halted_ticks.to_string()),
        ];
        let f = |v: f64| format_f64(v);
        if let Some(d) = self.min_distance {
            stats.push(("min_distance_m".into(), f(d)));
        }
        if let Some(s) = &self.stats {
            stats.push(("median_solve_time_s".into(), f(s.median_solve_time)));
            stats.push(("mean_nwsr".into(), f(s.mean_nwsr)));
            stats.push(("mean_nac".into(), f(s.mean_nac)));
        }
        if let Some(j) = &self.jerk {
            stats.push(("jerk_max_abs".into(), f(j.max_abs)));
            stats.push(("jerk_smooth_max".into(), f(j.bounds.smooth_max)));
            stats.push(("jerk_rough_max".into(), f(j.bounds.rough_max)));
        }
        if let Some(s) = &self.fft {
            stats.push(("fft_fraction_below_0.5hz".into(), f(s.fraction_below(LOW_BAND_HZ))));
        }
        if let Some(t) = &self.tracking {
            let max = t.rows.iter().map(|r| r.max_deviation()).fold(0.0, f64::max);
            stats.push(("max_cartesian_deviation_m".into(), f(max)));
        }
        write_rows(&dir.join("stats.csv"), &["metric", "value"], stats.into_iter().map(|(k, v)| vec![k, v]))?;

        if let Some(j) = &self.jerk {
            let rows = j
                .histogram
                .centers()
                .into_iter()
                .zip(&j.histogram.counts)
                .map(|(c, n)| vec![f(c), n.to_string()]);
            write_rows(&dir.join("jerk_hist.csv"), &["bin_center", "count"], rows)?;
        }
        if let Some(s) = &self.fft {
            let rows = s.freq_hz.iter().zip(&s.magnitude).map(|(a, b)| vec![f(*a), f(*b)]);
            write_rows(&dir.join("fft.csv"), &["freq_hz", "magnitude"], rows)?;
        }
        if let Some(t) = &self.tracking {
            let arms = t.rows.first().map_or(0, |r| r.reference.len());
            let mut header = vec!["t".to_string()];
            for a in 0..arms {
                for p in ["ref", "ach"] {
                    for c in ["x", "y", "z"] {
                        header.push(format!("{p}_{c}_{a}"));
                    }
                }
                header.push(format!("deviation_m_{a}"));
            }
            header.push("min_dist_m".into());
            let rows = t.rows.iter().map(|r| {
                let mut row = vec![f(r.t)];
                for a in 0..arms {
                    row.extend(r.reference[a].iter().map(|v| f(*v)));
                    row.extend(r.achieved[a].iter().map(|v| f(*v)));
                    row.push(f(r.deviation(a)));
                }
                row.push(f(r.min_distance));
                row
            });
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            write_rows(&dir.join("cartesian.csv"), &header, rows)?;
            let rows = t
                .waypoint_errors
                .iter()
                .map(|e| vec![e.waypoint.to_string(), e.arm.to_string(), f(e.position), f(e.rotation)]);
            write_rows(
                &dir.join("waypoint_errors.csv"),
                &["waypoint", "arm", "position_m", "rotation_rad"],
                rows,
            )?;
        }
        Ok(())
    }
}
