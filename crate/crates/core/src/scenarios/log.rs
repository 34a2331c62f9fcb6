//! Per-tick run records and their CSV form.
//!
//! ```text
//! # scenario: s1_floor
//! # seed: 7
//! # config_hash: 3f2a...
//! # config: {"id":"s1_floor",...}
//! t,q_0,...,q_6,qd_0,...,qd_6,solve_time_us,nwsr,nac,min_dist_m,status
//! ```
//!
//! Floats are written with 17 significant digits so a log read back is
//! bit-identical to the one written.

use std::io::{BufRead, Write};

use super::ScenarioError;
use crate::qp::QpStatus;

#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub t: f64,
    pub q_d: Vec<f64>,
    pub qd_d: Vec<f64>,
    /// Microseconds.
    pub solve_time_us: f64,
    pub nwsr: usize,
    pub nac: usize,
    pub min_distance: f64,
    pub status: QpStatus,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMeta {
    pub scenario: String,
    pub seed: u64,
    pub config_hash: String,
    /// Effective scenario config as JSON; empty for hand-written logs.
    pub config: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub meta: RunMeta,
    pub dof: usize,
    pub ticks: Vec<TickRecord>,
}

pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn status_name(s: QpStatus) -> &'static str {
    match s {
        QpStatus::Solved => "solved",
        QpStatus::MaxIterations => "max_iterations",
        QpStatus::Infeasible => "infeasible",
    }
}

fn parse_status(s: &str) -> Option<QpStatus> {
    match s {
        "solved" => Some(QpStatus::Solved),
        "max_iterations" => Some(QpStatus::MaxIterations),
        "infeasible" => Some(QpStatus::Infeasible),
        _ => None,
    }
}

fn header(dof: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((0..dof).map(|i| format!("q_{i}")));
    h.extend((0..dof).map(|i| format!("qd_{i}")));
    h.extend(["solve_time_us", "nwsr", "nac", "min_dist_m", "status"].map(String::from));
    h
}

impl RunLog {
    pub fn is_empty(&self) -> bool {
        self.ticks.is_empty()
    }

    pub fn any_halted(&self) -> bool {
        self.ticks.iter().any(|t| t.status != QpStatus::Solved)
    }

    /// Time step from the tick stamps; `None` with fewer than two ticks.
    pub fn dt(&self) -> Option<f64> {
        match self.ticks.as_slice() {
            [a, b, ..] => Some(b.t - a.t),
            _ => None,
        }
    }

    /// Column `j` of `q_d` over all ticks.
    pub fn q_series(&self, j: usize) -> Vec<f64> {
        self.ticks.iter().map(|r| r.q_d[j]).collect()
    }

    pub fn qd_series(&self, j: usize) -> Vec<f64> {
        self.ticks.iter().map(|r| r.qd_d[j]).collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), ScenarioError> {
        let m = &self.meta;
        writeln!(out, "# scenario: {}", m.scenario)?;
        writeln!(out, "# seed: {}", m.seed)?;
        writeln!(out, "# config_hash: {}", m.config_hash)?;
        writeln!(out, "# config: {}", m.config)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(header(self.dof))?;
        for r in &self.ticks {
            let mut row = vec![format_f64(r.t)];
            row.extend(r.q_d.iter().map(|v| format_f64(*v)));
            row.extend(r.qd_d.iter().map(|v| format_f64(*v)));
            row.push(format_f64(r.solve_time_us));
            row.push(r.nwsr.to_string());
            row.push(r.nac.to_string());
            row.push(format_f64(r.min_distance));
            row.push(status_name(r.status).to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parse a log. Metadata lines are optional; errors name the line and
    /// column.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, ScenarioError> {
        let mut meta = RunMeta::default();
        let mut body = String::new();
        let mut first_body_line = 0;
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if let Some(rest) = line.strip_prefix('#') {
                if !body.is_empty() {
                    return Err(ScenarioError::Log {
                        line: i + 1,
                        message: "comment after the header".into(),
                    });
                }
                let rest = rest.trim_start();
                let (key, value) = rest.split_once(':').unwrap_or((rest, ""));
                let value = value.trim();
                match key.trim() {
                    "scenario" => meta.scenario = value.to_string(),
                    "seed" => {
                        meta.seed = value.parse().map_err(|_| ScenarioError::Log {
                            line: i + 1,
                            message: format!("seed `{value}` is not an integer"),
                        })?
                    }
                    "config_hash" => meta.config_hash = value.to_string(),
                    "config" => meta.config = value.to_string(),
                    _ => {}
                }
                continue;
            }
            if body.is_empty() {
                first_body_line = i + 1;
            }
            body.push_str(&line);
            body.push('\n');
        }
        if body.is_empty() {
            return Err(ScenarioError::Log {
                line: first_body_line.max(1),
                message: "missing header row".into(),
            });
        }

        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
        let names: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
        if names.len() < 6 || !(names.len() - 6).is_multiple_of(2) {
            return Err(ScenarioError::Log {
                line: first_body_line,
                message: format!("header has {} columns; expected t, q_*, qd_*, and 5 diagnostics", names.len()),
            });
        }
        let dof = (names.len() - 6) / 2;
        let expected = header(dof);
        for (c, (got, want)) in names.iter().zip(&expected).enumerate() {
            if got != want {
                return Err(ScenarioError::Log {
                    line: first_body_line,
                    message: format!("column {} is `{got}`, expected `{want}`", c + 1),
                });
            }
        }

        let mut ticks = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let line = first_body_line + 1 + k;
            let rec = rec?;
            if rec.len() != expected.len() {
                return Err(ScenarioError::Log {
                    line,
                    message: format!("{} fields, expected {}", rec.len(), expected.len()),
                });
            }
            let field = |c: usize| rec[c].trim();
            let float = |c: usize| -> Result<f64, ScenarioError> {
                field(c).parse::<f64>().map_err(|_| ScenarioError::Log {
                    line,
                    message: format!("column {} ({}): `{}` is not a number", c + 1, expected[c], field(c)),
                })
            };
            let int = |c: usize| -> Result<usize, ScenarioError> {
                field(c).parse::<usize>().map_err(|_| ScenarioError::Log {
                    line,
                    message: format!("column {} ({}): `{}` is not a count", c + 1, expected[c], field(c)),
                })
            };
            let base = 1 + 2 * dof;
            let status_col = base + 4;
            let status = parse_status(field(status_col)).ok_or_else(|| ScenarioError::Log {
                line,
                message: format!("column {} (status): unknown status `{}`", status_col + 1, field(status_col)),
            })?;
            ticks.push(TickRecord {
                t: float(0)?,
                q_d: (1..=dof).map(float).collect::<Result<_, _>>()?,
                qd_d: (1 + dof..base).map(float).collect::<Result<_, _>>()?,
                solve_time_us: float(base)?,
                nwsr: int(base + 1)?,
                nac: int(base + 2)?,
                min_distance: float(base + 3)?,
                status,
            });
        }
        Ok(Self { meta, dof, ticks })
    }
}
