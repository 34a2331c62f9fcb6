// Checks written as `!(x > 0.0)` are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use qpik_core::scenarios::metrics::{jerk_series, max_abs, rough_profile, smooth_profile, REFERENCE_DT};
use qpik_core::scenarios::log::format_f64;
use qpik_core::scenarios::{analyze, Overrides, RunLog, ScenarioConfig};

/// Collision-free inverse kinematics runs and trajectory metrics.
#[derive(Debug, Parser)]
#[command(name = "qpik", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write its log and metric tables.
    Run {
        /// Bundled scenario id (s1_floor, s2_sphere, s3_twoarm) or a scenario file.
        scenario: String,
        #[command(flatten)]
        overrides: OverrideArgs,
        /// Output directory.
        #[arg(long, env = "QPIK_OUT", default_value = "qpik-out")]
        out: PathBuf,
    },
    /// Recompute metric tables from a run log.
    Analyze {
        log: PathBuf,
        /// Output directory; defaults to the log's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a scenario without running it.
    Validate {
        scenario: String,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Write the smooth and rough joint-velocity reference profiles and their jerk.
    GenReference {
        /// Profile length (and sinusoid period) in seconds.
        #[arg(long = "T", default_value_t = 5.0)]
        period: f64,
        /// Velocity amplitude in rad/s.
        #[arg(long, default_value_t = 1.39)]
        amplitude: f64,
        /// Seed of the uniform random profile.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, env = "QPIK_OUT", default_value = "qpik-out")]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct OverrideArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Seconds per waypoint segment.
    #[arg(long = "T-traj")]
    t_traj: Option<f64>,
    /// Buffer distance in meters.
    #[arg(long = "d-buff")]
    d_buff: Option<f64>,
}

impl From<&OverrideArgs> for Overrides {
    fn from(a: &OverrideArgs) -> Self {
        Overrides {
            seed: a.seed,
            t_traj: a.t_traj,
            d_buff: a.d_buff,
        }
    }
}

fn load(scenario: &str, overrides: &OverrideArgs) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::load(scenario).with_context(|| format!("loading `{scenario}`"))?;
    cfg.apply(&overrides.into());
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn run(scenario: &str, overrides: &OverrideArgs, out: &Path) -> Result<bool> {
    let cfg = load(scenario, overrides)?;
    let built = cfg.build().with_context(|| format!("scenario `{}`", cfg.id))?;
    let log = built.run()?;
    create_dir(out)?;
    let path = out.join("run.csv");
    let file = File::create(&path).with_context(|| format!("writing {}", path.display()))?;
    log.write_csv(BufWriter::new(file))?;
    let report = analyze(&log);
    report.write_csv(out)?;
    println!("{}", report.summary());
    for p in &report.problems {
        eprintln!("warning: {p}");
    }
    eprintln!("wrote {}", out.display());
    Ok(!log.any_halted())
}

fn analyze_log(path: &Path, out: Option<&Path>) -> Result<()> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let log = RunLog::read_csv(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
    let dir = match out {
        Some(d) => d.to_path_buf(),
        None => path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf),
    };
    create_dir(&dir)?;
    let report = analyze(&log);
    report.write_csv(&dir)?;
    println!("{}", report.summary());
    for p in &report.problems {
        eprintln!("warning: {p}");
    }
    Ok(())
}

fn validate(scenario: &str, overrides: &OverrideArgs) -> Result<()> {
    let cfg = load(scenario, overrides)?;
    let s = cfg.build().with_context(|| format!("scenario `{}`", cfg.id))?;
    let clearance = s.world.world_min_distance(&s.comp, &s.home)?.distance;
    println!(
        "{}: {} arm(s), {} joints, {} checked pairs, {} waypoints of {} s, home clearance {:.4} m",
        cfg.id,
        s.comp.n_chains(),
        s.comp.dof(),
        s.world.pairs().len(),
        cfg.waypoints.count,
        cfg.waypoints.t_traj,
        clearance
    );
    Ok(())
}

fn write_profile(path: &Path, qd: &[f64], jerk: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["t", "qd", "jerk"])?;
    for (k, (v, j)) in qd.iter().zip(jerk).enumerate() {
        w.write_record([format_f64(k as f64 * REFERENCE_DT), format_f64(*v), format_f64(*j)])?;
    }
    w.flush()?;
    Ok(())
}

fn gen_reference(period: f64, amplitude: f64, seed: u64, out: &Path) -> Result<()> {
    if !(period > 0.0) || !period.is_finite() {
        bail!("T must be positive, got {period}");
    }
    if !(amplitude >= 0.0) || !amplitude.is_finite() {
        bail!("amplitude must be non-negative, got {amplitude}");
    }
    create_dir(out)?;
    let smooth = smooth_profile(period, amplitude, REFERENCE_DT);
    let rough = rough_profile(period, amplitude, REFERENCE_DT, seed);
    let smooth_jerk = jerk_series(&smooth, REFERENCE_DT)?;
    let rough_jerk = jerk_series(&rough, REFERENCE_DT)?;
    write_profile(&out.join("smooth.csv"), &smooth, &smooth_jerk)?;
    write_profile(&out.join("rough.csv"), &rough, &rough_jerk)?;
    let (s, r) = (max_abs(&smooth_jerk), max_abs(&rough_jerk));
    let mut w = csv::Writer::from_path(out.join("reference_summary.csv"))?;
    w.write_record(["profile", "max_abs_jerk"])?;
    w.write_record(["smooth", &format_f64(s)])?;
    w.write_record(["rough", &format_f64(r)])?;
    w.flush()?;
    println!("smooth_max_jerk {s:.6e} rough_max_jerk {r:.6e}");
    Ok(())
}

fn main() -> ExitCode {
    // clap exits 2 on usage errors; here 2 is reserved for halted runs.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Run { scenario, overrides, out } => run(scenario, overrides, out),
        Command::Analyze { log, out } => analyze_log(log, out.as_deref()).map(|()| true),
        Command::Validate { scenario, overrides } => validate(scenario, overrides).map(|()| true),
        Command::GenReference {
            period,
            amplitude,
            seed,
            out,
        } => gen_reference(*period, *amplitude, *seed, out).map(|()| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("some ticks halted");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
