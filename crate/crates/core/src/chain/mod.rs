//! Serial-chain kinematics for all-revolute arms.
//!
//! A [`KinematicChain`] is an immutable list of revolute joints, each with a
//! fixed origin transform relative to its parent link and a rotation axis in
//! that joint frame. Link frame `0` is the chain base; link frame `k` is the
//! child link of joint `k` (1-based), and the tool frame follows the last link.
//! [`CompositeChain`] stacks several independent chains into one joint vector
//! so multi-arm problems can be written as a single QP.

mod doc;
mod pose;

pub use doc::{load_chain, load_chain_file, ChainDocument, TransformDoc};
pub use pose::{pose_error, rotation_vector, Pose, SpatialVelocity};

use nalgebra::{DMatrix, Isometry3, Matrix6xX, Unit, UnitQuaternion, Vector3};
use thiserror::Error;

/// Position limit used to encode continuous joints.
pub const CONTINUOUS_LIMIT: f64 = 1e9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("chain document parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("joint `{joint}`: {reason}")]
    InvalidJoint { joint: String, reason: String },
    #[error("invalid chain: {0}")]
    InvalidChain(String),
    #[error("expected {expected} joint values, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("failed to read {path}: {message}")]
    Io { path: String, message: String },
}

/// One revolute joint.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSpec {
    pub name: String,
    /// Rotation axis in the joint frame (unit norm).
    pub axis: Unit<Vector3<f64>>,
    /// Transform from the parent link frame to the joint frame.
    pub origin: Pose,
    pub q_lb: f64,
    pub q_ub: f64,
    pub qd_lb: f64,
    pub qd_ub: f64,
}

impl JointSpec {
    pub fn is_continuous(&self) -> bool {
        self.q_lb <= -CONTINUOUS_LIMIT && self.q_ub >= CONTINUOUS_LIMIT
    }

    pub(crate) fn validate(&self) -> Result<(), ChainError> {
        let bad = |reason: String| ChainError::InvalidJoint {
            joint: self.name.clone(),
            reason,
        };
        if !(self.q_lb <= self.q_ub) {
            return Err(bad(format!(
                "position limits out of order: [{}, {}]",
                self.q_lb, self.q_ub
            )));
        }
        if !(self.qd_lb < 0.0 && 0.0 < self.qd_ub) {
            return Err(bad(format!(
                "velocity limits must straddle zero: [{}, {}]",
                self.qd_lb, self.qd_ub
            )));
        }
        Ok(())
    }
}

/// Output of forward kinematics.
#[derive(Debug, Clone)]
pub struct FkResult {
    /// World pose of every link frame, base first (`dof + 1` entries).
    pub links: Vec<Pose>,
    /// World pose of the tool frame.
    pub ee: Pose,
}

impl FkResult {
    /// Link frame lookup where index `dof + 1` addresses the tool frame.
    pub fn frame(&self, link: usize) -> &Pose {
        if link < self.links.len() {
            &self.links[link]
        } else {
            &self.ee
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain {
    pub name: String,
    joints: Vec<JointSpec>,
    base: Pose,
    tool: Pose,
}

impl KinematicChain {
    pub fn new(
        name: impl Into<String>,
        joints: Vec<JointSpec>,
        base: Pose,
        tool: Pose,
    ) -> Result<Self, ChainError> {
        if joints.is_empty() {
            return Err(ChainError::InvalidChain("a chain needs at least one joint".into()));
        }
        for j in &joints {
            j.validate()?;
        }
        Ok(Self {
            name: name.into(),
            joints,
            base,
            tool,
        })
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn joints(&self) -> &[JointSpec] {
        &self.joints
    }

    pub fn base_transform(&self) -> &Pose {
        &self.base
    }

    pub fn tool_transform(&self) -> &Pose {
        &self.tool
    }

    /// Same chain with its base re-mounted at `mount * base`.
    pub fn mounted_at(&self, mount: &Pose) -> Self {
        let mut out = self.clone();
        out.base = mount.compose(&self.base);
        out
    }

    /// Index of the tool frame when addressing frames by link number.
    pub fn tool_link(&self) -> usize {
        self.dof() + 1
    }

    fn check_len(&self, q: &[f64]) -> Result<(), ChainError> {
        if q.len() != self.dof() {
            return Err(ChainError::DimensionMismatch {
                expected: self.dof(),
                actual: q.len(),
            });
        }
        Ok(())
    }

    fn joint_motion(joint: &JointSpec, angle: f64) -> Isometry3<f64> {
        Isometry3::from_parts(
            nalgebra::Translation3::identity(),
            UnitQuaternion::from_axis_angle(&joint.axis, angle),
        )
    }

    pub fn forward_kinematics(&self, q: &[f64]) -> Result<FkResult, ChainError> {
        self.check_len(q)?;
        let mut t = self.base.to_isometry();
        let mut links = Vec::with_capacity(self.dof() + 1);
        links.push(Pose::from_isometry(&t));
        for (joint, &angle) in self.joints.iter().zip(q) {
            t *= joint.origin.to_isometry();
            t *= Self::joint_motion(joint, angle);
            links.push(Pose::from_isometry(&t));
        }
        let ee = Pose::from_isometry(&(t * self.tool.to_isometry()));
        Ok(FkResult { links, ee })
    }

    pub fn ee_pose(&self, q: &[f64]) -> Result<Pose, ChainError> {
        Ok(self.forward_kinematics(q)?.ee)
    }

    /// World pose of a single frame (`0` = base, `dof + 1` = tool), touching
    /// only the joints that precede it.
    pub fn frame_pose(&self, q: &[f64], link: usize) -> Result<Pose, ChainError> {
        self.check_len(q)?;
        if link > self.tool_link() {
            return Err(ChainError::InvalidChain(format!(
                "link index {link} out of range 0..={}",
                self.tool_link()
            )));
        }
        let mut t = self.base.to_isometry();
        for (joint, &angle) in self.joints.iter().zip(q).take(link) {
            t *= joint.origin.to_isometry();
            t *= Self::joint_motion(joint, angle);
        }
        if link == self.tool_link() {
            t *= self.tool.to_isometry();
        }
        Ok(Pose::from_isometry(&t))
    }

    /// Geometric Jacobian of the tool frame: rows are linear then angular
    /// velocity (world axes), columns are joints.
    pub fn geometric_jacobian(&self, q: &[f64]) -> Result<Matrix6xX<f64>, ChainError> {
        self.check_len(q)?;
        let n = self.dof();
        let mut t = self.base.to_isometry();
        let mut axes = Vec::with_capacity(n);
        let mut origins = Vec::with_capacity(n);
        for (joint, &angle) in self.joints.iter().zip(q) {
            t *= joint.origin.to_isometry();
            axes.push(t.rotation * joint.axis.into_inner());
            origins.push(t.translation.vector);
            t *= Self::joint_motion(joint, angle);
        }
        let p_ee = (t * self.tool.to_isometry()).translation.vector;
        let mut jac = Matrix6xX::zeros(n);
        for i in 0..n {
            let lin = axes[i].cross(&(p_ee - origins[i]));
            jac.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
            jac.fixed_view_mut::<3, 1>(3, i).copy_from(&axes[i]);
        }
        Ok(jac)
    }
}

/// Several independent chains sharing one stacked joint vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeChain {
    chains: Vec<KinematicChain>,
    offsets: Vec<usize>,
}

impl CompositeChain {
    pub fn new(chains: Vec<KinematicChain>) -> Result<Self, ChainError> {
        if chains.is_empty() {
            return Err(ChainError::InvalidChain("composite needs at least one chain".into()));
        }
        let mut offsets = Vec::with_capacity(chains.len());
        let mut acc = 0;
        for c in &chains {
            offsets.push(acc);
            acc += c.dof();
        }
        Ok(Self { chains, offsets })
    }

    pub fn single(chain: KinematicChain) -> Self {
        Self {
            chains: vec![chain],
            offsets: vec![0],
        }
    }

    pub fn chains(&self) -> &[KinematicChain] {
        &self.chains
    }

    pub fn chain(&self, idx: usize) -> &KinematicChain {
        &self.chains[idx]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn dof(&self) -> usize {
        self.chains.iter().map(KinematicChain::dof).sum()
    }

    /// Slice of the stacked vector belonging to chain `idx`.
    pub fn split<'a>(&self, q: &'a [f64], idx: usize) -> &'a [f64] {
        let start = self.offsets[idx];
        &q[start..start + self.chains[idx].dof()]
    }

    /// Chain index and local joint index for a stacked joint index.
    pub fn locate(&self, joint: usize) -> (usize, usize) {
        let idx = self.offsets.partition_point(|&o| o <= joint) - 1;
        (idx, joint - self.offsets[idx])
    }

    fn check_len(&self, q: &[f64]) -> Result<(), ChainError> {
        if q.len() != self.dof() {
            return Err(ChainError::DimensionMismatch {
                expected: self.dof(),
                actual: q.len(),
            });
        }
        Ok(())
    }

    pub fn ee_poses(&self, q: &[f64]) -> Result<Vec<Pose>, ChainError> {
        self.check_len(q)?;
        (0..self.chains.len())
            .map(|i| self.chains[i].ee_pose(self.split(q, i)))
            .collect()
    }

    pub fn forward_kinematics(&self, q: &[f64]) -> Result<Vec<FkResult>, ChainError> {
        self.check_len(q)?;
        (0..self.chains.len())
            .map(|i| self.chains[i].forward_kinematics(self.split(q, i)))
            .collect()
    }

    /// Block-diagonal stack of per-chain Jacobians, `6 * n_chains` rows by
    /// total dof columns.
    pub fn composite_jacobian(&self, q: &[f64]) -> Result<DMatrix<f64>, ChainError> {
        self.check_len(q)?;
        let mut jac = DMatrix::zeros(6 * self.chains.len(), self.dof());
        for (i, chain) in self.chains.iter().enumerate() {
            let block = chain.geometric_jacobian(self.split(q, i))?;
            jac.view_mut((6 * i, self.offsets[i]), (6, chain.dof()))
                .copy_from(&block);
        }
        Ok(jac)
    }

    /// Stacked lower/upper position limits.
    pub fn position_limits(&self) -> (Vec<f64>, Vec<f64>) {
        let joints = self.chains.iter().flat_map(|c| c.joints());
        joints.map(|j| (j.q_lb, j.q_ub)).unzip()
    }

    /// Stacked lower/upper velocity limits.
    pub fn velocity_limits(&self) -> (Vec<f64>, Vec<f64>) {
        let joints = self.chains.iter().flat_map(|c| c.joints());
        joints.map(|j| (j.qd_lb, j.qd_ub)).unzip()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    pub(crate) fn planar_link(length: f64) -> KinematicChain {
        let joint = JointSpec {
            name: "j0".into(),
            axis: Vector3::z_axis(),
            origin: Pose::identity(),
            q_lb: -3.0,
            q_ub: 3.0,
            qd_lb: -1.0,
            qd_ub: 1.0,
        };
        KinematicChain::new(
            "planar",
            vec![joint],
            Pose::identity(),
            Pose::from_translation([length, 0.0, 0.0]),
        )
        .unwrap()
    }

    fn planar_n(n: usize, length: f64) -> KinematicChain {
        let joints = (0..n)
            .map(|i| JointSpec {
                name: format!("j{i}"),
                axis: Vector3::z_axis(),
                origin: if i == 0 {
                    Pose::identity()
                } else {
                    Pose::from_translation([length, 0.0, 0.0])
                },
                q_lb: -3.0,
                q_ub: 3.0,
                qd_lb: -1.0,
                qd_ub: 1.0,
            })
            .collect();
        KinematicChain::new("planar_n", joints, Pose::identity(), Pose::from_translation([length, 0.0, 0.0]))
            .unwrap()
    }

    #[test]
    fn fk_zero_and_quarter_turn() {
        let chain = planar_link(0.7);
        let ee = chain.ee_pose(&[0.0]).unwrap();
        assert_abs_diff_eq!(ee.position, Vector3::new(0.7, 0.0, 0.0), epsilon = 1e-15);
        let ee = chain.ee_pose(&[FRAC_PI_2]).unwrap();
        assert_abs_diff_eq!(ee.position, Vector3::new(0.0, 0.7, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn fk_rejects_wrong_length() {
        let chain = planar_link(1.0);
        assert_eq!(
            chain.forward_kinematics(&[0.0, 1.0]).unwrap_err(),
            ChainError::DimensionMismatch { expected: 1, actual: 2 }
        );
    }

    #[test]
    fn planar_jacobian() {
        let l = 0.4;
        let chain = planar_link(l);
        let j = chain.geometric_jacobian(&[0.0]).unwrap();
        let expected = [0.0, l, 0.0, 0.0, 0.0, 1.0];
        for (r, e) in expected.iter().enumerate() {
            assert_abs_diff_eq!(j[(r, 0)], *e, epsilon = 1e-15);
        }
    }

    #[test]
    fn parallel_axes_share_angular_rows() {
        let chain = planar_n(4, 0.3);
        let j = chain.geometric_jacobian(&[0.1, -0.4, 0.9, 0.2]).unwrap();
        for c in 0..4 {
            assert_abs_diff_eq!(j[(3, c)], 0.0, epsilon = 1e-15);
            assert_abs_diff_eq!(j[(4, c)], 0.0, epsilon = 1e-15);
            assert_abs_diff_eq!(j[(5, c)], 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn frame_pose_matches_full_fk() {
        let chain = planar_n(3, 0.25);
        let q = [0.3, -0.7, 1.1];
        let fk = chain.forward_kinematics(&q).unwrap();
        for link in 0..=chain.tool_link() {
            let p = chain.frame_pose(&q, link).unwrap();
            assert_abs_diff_eq!(p.position, fk.frame(link).position, epsilon = 1e-15);
        }
    }

    #[test]
    fn composite_locate_and_split() {
        let comp = CompositeChain::new(vec![planar_n(2, 0.1), planar_n(3, 0.1)]).unwrap();
        assert_eq!(comp.dof(), 5);
        assert_eq!(comp.offsets(), &[0, 2]);
        assert_eq!(comp.locate(0), (0, 0));
        assert_eq!(comp.locate(1), (0, 1));
        assert_eq!(comp.locate(2), (1, 0));
        assert_eq!(comp.locate(4), (1, 2));
        let q = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(comp.split(&q, 1), &[3.0, 4.0, 5.0]);
    }

    #[test]
    fn single_composite_matches_chain_jacobian() {
        let chain = planar_n(3, 0.2);
        let q = [0.2, 0.5, -0.1];
        let comp = CompositeChain::single(chain.clone());
        let a = comp.composite_jacobian(&q).unwrap();
        let b = chain.geometric_jacobian(&q).unwrap();
        assert_eq!(a.shape(), (6, 3));
        for r in 0..6 {
            for c in 0..3 {
                assert_eq!(a[(r, c)], b[(r, c)]);
            }
        }
    }

    #[test]
    fn rejects_bad_limits() {
        let mut j = planar_link(1.0).joints()[0].clone();
        j.qd_lb = 0.5;
        let err = KinematicChain::new("x", vec![j], Pose::identity(), Pose::identity()).unwrap_err();
        assert!(matches!(err, ChainError::InvalidJoint { .. }));
    }
}
