//! Chain-description documents.
//!
//! A small TOML document per arm:
//!
//! ```text
//! name = "gen3"
//! base_transform = { xyz = [0, 0, 0], quat = [1, 0, 0, 0] }
//!
//! [[joints]]
//! name = "joint_1"
//! axis = [0, 0, 1]
//! origin = { xyz = [0, 0, 0.15643], quat = [w, x, y, z] }
//! q_limits = [-1e9, 1e9]      # continuous
//! qd_limits = [-1.39, 1.39]
//!
//! [tool_transform]
//! xyz = [0, 0, -0.0615]
//! quat = [w, x, y, z]
//! ```
//!
//! Quaternions are scalar-first. Angles in radians, lengths in meters.

use std::path::Path;

use nalgebra::{Unit, Vector3};
use serde::{Deserialize, Serialize};

use super::{ChainError, JointSpec, KinematicChain, Pose};

const AXIS_TOL: f64 = 1e-12;
const QUAT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TransformDoc {
    pub xyz: [f64; 3],
    #[serde(default = "identity_quat")]
    pub quat: [f64; 4],
}

fn identity_quat() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

impl Default for TransformDoc {
    fn default() -> Self {
        Self {
            xyz: [0.0; 3],
            quat: identity_quat(),
        }
    }
}

impl TransformDoc {
    pub(crate) fn to_pose(&self, what: &str) -> Result<Pose, ChainError> {
        let n = self.quat.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (n - 1.0).abs() > QUAT_TOL {
            return Err(ChainError::InvalidChain(format!(
                "{what}: quaternion norm {n} is not 1"
            )));
        }
        if self.xyz.iter().chain(&self.quat).any(|v| !v.is_finite()) {
            return Err(ChainError::InvalidChain(format!("{what}: non-finite value")));
        }
        Ok(Pose::from_xyz_wxyz(self.xyz, self.quat))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct JointDoc {
    pub name: String,
    pub axis: [f64; 3],
    pub origin: TransformDoc,
    pub q_limits: [f64; 2],
    pub qd_limits: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ChainDocument {
    pub name: String,
    #[serde(default)]
    pub base_transform: TransformDoc,
    pub joints: Vec<JointDoc>,
    #[serde(default)]
    pub tool_transform: TransformDoc,
}

impl ChainDocument {
    pub fn parse(text: &str) -> Result<Self, ChainError> {
        toml::from_str(text).map_err(|e| {
            let (line, column) = e
                .span()
                .map(|s| line_col(text, s.start))
                .unwrap_or((0, 0));
            ChainError::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })
    }

    pub fn build(&self) -> Result<KinematicChain, ChainError> {
        let mut joints = Vec::with_capacity(self.joints.len());
        for jd in &self.joints {
            let axis = Vector3::from(jd.axis);
            let norm = axis.norm();
            if !norm.is_finite() || (norm - 1.0).abs() > AXIS_TOL {
                return Err(ChainError::InvalidJoint {
                    joint: jd.name.clone(),
                    reason: format!("axis norm {norm} is not 1"),
                });
            }
            let origin = jd.origin.to_pose(&jd.name).map_err(|e| ChainError::InvalidJoint {
                joint: jd.name.clone(),
                reason: e.to_string(),
            })?;
            joints.push(JointSpec {
                name: jd.name.clone(),
                axis: Unit::new_normalize(axis),
                origin,
                q_lb: jd.q_limits[0],
                q_ub: jd.q_limits[1],
                qd_lb: jd.qd_limits[0],
                qd_ub: jd.qd_limits[1],
            });
        }
        KinematicChain::new(
            self.name.clone(),
            joints,
            self.base_transform.to_pose("base_transform")?,
            self.tool_transform.to_pose("tool_transform")?,
        )
    }
}

/// 1-based line and column of a byte offset.
pub(crate) fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let prefix = &text[..offset.min(text.len())];
    let line = prefix.matches('\n').count() + 1;
    let column = prefix.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Parse and validate a chain-description document.
pub fn load_chain(text: &str) -> Result<KinematicChain, ChainError> {
    ChainDocument::parse(text)?.build()
}

pub fn load_chain_file(path: &Path) -> Result<KinematicChain, ChainError> {
    let text = std::fs::read_to_string(path).map_err(|e| ChainError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    load_chain(&text)
}
