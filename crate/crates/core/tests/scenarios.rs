mod common;

use common::rng;
use nalgebra::Vector3;
use qpik_core::data::SCENARIOS;
use qpik_core::qp::QpStatus;
use qpik_core::scenarios::metrics::{self, trajectory_fft};
use qpik_core::scenarios::{
    analyze, random_direction, surface_orientation, waypoint_sets, Overrides, RunLog, ScenarioConfig, ScenarioError,
};

/// Bundled scenario cut down to `count` waypoints of `t_traj` seconds.
fn short(id: &str, count: usize, t_traj: f64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::load(id).unwrap();
    cfg.waypoints.count = count;
    cfg.waypoints.t_traj = t_traj;
    cfg
}

#[test]
fn bundled_scenarios_build() {
    let arms = [1, 1, 2];
    for (id, n) in SCENARIOS.iter().zip(arms) {
        let cfg = ScenarioConfig::load(id).unwrap();
        assert_eq!(cfg.id, *id);
        assert_eq!(cfg.waypoints.count, 5);
        assert_eq!(cfg.waypoints.t_traj, 5.0);
        let s = cfg.build().unwrap();
        assert_eq!(s.comp.n_chains(), n);
        assert_eq!(s.home.len(), 7 * n);
        let d = s.world.world_min_distance(&s.comp, &s.home).unwrap().distance;
        assert!(d >= cfg.planner.d_buff, "{id}: home clearance {d}");
    }
}

#[test]
fn sphere_directions_are_unbiased() {
    let n = 20_000;
    let mut r = rng(5);
    let mut sum = Vector3::zeros();
    let mut sq = Vector3::zeros();
    for _ in 0..n {
        let d = random_direction(&mut r);
        assert!((d.norm() - 1.0).abs() < 1e-12);
        sum += d;
        sq += d.component_mul(&d);
    }
    let mean = sum / n as f64;
    // Each coordinate of a uniform unit vector has mean 0 and variance 1/3.
    let sigma = (1.0 / 3.0 / n as f64).sqrt();
    for c in 0..3 {
        assert!(mean[c].abs() < 3.0 * sigma, "coordinate {c} mean {}", mean[c]);
        assert!((sq[c] / n as f64 - 1.0 / 3.0).abs() < 0.01);
    }
}

#[test]
fn waypoints_follow_the_config() {
    let cfg = ScenarioConfig::load("s3_twoarm").unwrap();
    let sets = waypoint_sets(&cfg.waypoints, 2);
    assert_eq!(sets.len(), 5);
    let center = Vector3::from(cfg.waypoints.center);
    for set in &sets {
        assert_eq!(set.len(), 2);
        for wp in set {
            let rel = wp.pose.position - center;
            assert!((rel.norm() - cfg.waypoints.radius).abs() < 1e-12);
            assert_eq!(wp.duration, cfg.waypoints.t_traj);
            let z = wp.pose.orientation * Vector3::z();
            let want = surface_orientation(&rel.normalize(), cfg.waypoints.outward) * Vector3::z();
            assert!((z - want).norm() < 1e-12);
            // Outward: the approach axis leaves the sphere.
            assert!(z.dot(&rel) > 0.0);
        }
    }
    assert_eq!(sets, waypoint_sets(&cfg.waypoints, 2));
}

#[test]
fn zero_waypoints_give_an_empty_log() {
    let log = short("s1_floor", 0, 5.0).build().unwrap().run().unwrap();
    assert!(log.is_empty());
    let report = analyze(&log);
    assert!(report.stats.is_none() && report.jerk.is_none() && report.fft.is_none());
    assert!(!report.problems.is_empty());
}

#[test]
fn identical_configs_give_identical_trajectories() {
    for id in SCENARIOS {
        let cfg = short(id, 2, 1.0);
        let a = cfg.build().unwrap().run().unwrap();
        let b = cfg.build().unwrap().run().unwrap();
        assert_eq!(a.ticks.len(), 1000);
        assert_eq!(a.meta, b.meta);
        for (x, y) in a.ticks.iter().zip(&b.ticks) {
            assert_eq!(x.t.to_bits(), y.t.to_bits());
            assert!(x.q_d.iter().zip(&y.q_d).all(|(u, v)| u.to_bits() == v.to_bits()), "{id}");
            assert!(x.qd_d.iter().zip(&y.qd_d).all(|(u, v)| u.to_bits() == v.to_bits()), "{id}");
            assert_eq!((x.nwsr, x.nac, x.status), (y.nwsr, y.nac, y.status));
        }
    }
}

#[test]
fn short_runs_respect_limits_and_clearance() {
    for id in SCENARIOS {
        let s = short(id, 2, 2.0).build().unwrap();
        let log = s.run().unwrap();
        let (plo, phi) = s.comp.position_limits();
        let (vlo, vhi) = s.comp.velocity_limits();
        for r in &log.ticks {
            assert_eq!(r.status, QpStatus::Solved);
            for j in 0..log.dof {
                assert!(r.q_d[j] >= plo[j] - 1e-8 && r.q_d[j] <= phi[j] + 1e-8);
                assert!(r.qd_d[j] >= vlo[j] - 1e-8 && r.qd_d[j] <= vhi[j] + 1e-8);
            }
            let d = s.world.world_min_distance(&s.comp, &r.q_d).unwrap().distance;
            assert!(d >= s.config.planner.d_buff - 1e-3, "{id} t={}: {d}", r.t);
        }
    }
}

#[test]
fn overrides_replace_seed_duration_and_buffer() {
    let mut cfg = ScenarioConfig::load("s2_sphere").unwrap();
    let margin = cfg.planner.d_act - cfg.planner.d_buff;
    let before = cfg.hash();
    cfg.apply(&Overrides {
        seed: Some(9),
        t_traj: Some(15.0),
        d_buff: Some(0.08),
    });
    assert_eq!(cfg.waypoints.seed, 9);
    assert_eq!(cfg.waypoints.t_traj, 15.0);
    assert_eq!(cfg.planner.d_buff, 0.08);
    assert!((cfg.planner.d_act - cfg.planner.d_buff - margin).abs() < 1e-15);
    assert_ne!(cfg.hash(), before);
    let back = ScenarioConfig::from_json(&cfg.to_json()).unwrap();
    assert_eq!(back.hash(), cfg.hash());
}

#[test]
fn invalid_documents_are_rejected() {
    let base = ScenarioConfig::load("s1_floor").unwrap();
    let mut bad = base.clone();
    bad.waypoints.radius = 0.0;
    assert!(matches!(bad.build(), Err(ScenarioError::Invalid(_))));
    let mut bad = base.clone();
    bad.collision.check.push(["arm".into(), "nowhere".into()]);
    assert!(bad.build().is_err());
    assert!(ScenarioConfig::parse("id = 3").is_err());
    assert!(ScenarioConfig::load("/no/such/file.toml").is_err());
}

#[test]
fn log_file_roundtrip_reproduces_metrics() {
    let log = short("s2_sphere", 1, 1.0).build().unwrap().run().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.csv");
    log.write_csv(std::fs::File::create(&path).unwrap()).unwrap();
    let back = RunLog::read_csv(std::io::BufReader::new(std::fs::File::open(&path).unwrap())).unwrap();
    assert_eq!(back, log);

    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    analyze(&log).write_csv(&a).unwrap();
    analyze(&back).write_csv(&b).unwrap();
    for name in ["stats.csv", "jerk_hist.csv", "fft.csv", "cartesian.csv", "waypoint_errors.csv"] {
        let x = std::fs::read(a.join(name)).unwrap();
        let y = std::fs::read(b.join(name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{name}");
    }
}

#[test]
fn truncated_log_still_reports_what_it_can() {
    let mut log = short("s1_floor", 1, 1.0).build().unwrap().run().unwrap();
    log.ticks.truncate(2);
    let report = analyze(&log);
    assert!(report.jerk.is_none());
    assert!(report.problems.iter().any(|p| p.starts_with("jerk")), "{:?}", report.problems);
    assert!(report.stats.is_some() && report.fft.is_some());
}

#[test]
fn constant_log_has_one_jerk_bin_and_no_spectrum() {
    let mut log = short("s1_floor", 1, 1.0).build().unwrap().run().unwrap();
    let q = log.ticks[0].q_d.clone();
    for r in &mut log.ticks {
        r.q_d = q.clone();
        r.qd_d = vec![0.0; log.dof];
    }
    let jerk = metrics::jerk_report(&log).unwrap();
    assert_eq!(jerk.max_abs, 0.0);
    assert_eq!(jerk.histogram.counts.iter().filter(|&&c| c > 0).count(), 1);
    assert_eq!(jerk.histogram.total(), (log.ticks.len() * log.dof) as u64);
    assert!(trajectory_fft(&log).unwrap().magnitude.iter().all(|m| *m == 0.0));
}

#[test]
fn obstacle_segment_deviates_and_free_segment_tracks() {
    let cfg = ScenarioConfig::load("s2_sphere").unwrap();
    let s = cfg.build().unwrap();
    let log = s.run().unwrap();
    let tracking = metrics::cartesian_deviation(&s, &log).unwrap();
    let (mut far, mut near) = (0.0f64, 0.0f64);
    for row in &tracking.rows {
        if row.min_distance > cfg.planner.d_act {
            far = far.max(row.max_deviation());
        }
        if row.min_distance <= cfg.planner.d_buff + 0.01 {
            near = near.max(row.max_deviation());
        }
    }
    assert!(far <= 1e-3, "free-space deviation {far}");
    assert!(near > 1e-3, "deviation near the obstacle {near}");
    assert!(log.ticks.iter().all(|r| r.min_distance >= cfg.planner.d_buff - 1e-3));
}
