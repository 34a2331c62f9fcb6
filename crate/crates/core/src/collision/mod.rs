//! Collision model: trees of elementary volumes attached to chain links or to
//! the world, the set of volume pairs that must keep clearance, and distance
//! queries over them.
//!
//! Distances are evaluated per volume pair. Joint-space gradients use the
//! symmetric difference quotient on the stacked joint vector, perturbing one
//! joint at a time.

mod gjk;
mod shape;

pub use gjk::{gjk_distance, GjkResult, Support, GJK_TOLERANCE};
pub use shape::{
    closest_point_on_segment, point_segment_distance, primitive_distance,
    segment_segment_distance, Shape, WorldShape,
};

use std::collections::BTreeSet;

use thiserror::Error;

use crate::chain::{ChainError, CompositeChain, FkResult, Pose};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CollisionError {
    #[error("unsupported distance query: {0}")]
    Unsupported(String),
    #[error("volume `{name}`: {reason}")]
    InvalidVolume { name: String, reason: String },
    #[error("invalid collision world: {0}")]
    InvalidWorld(String),
    #[error("pair {0} is not a checked volume pair")]
    UnknownPair(PairId),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// Where a volume is rigidly attached.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Attachment {
    World,
    /// Link frame `link` of chain `chain` (`0` = base, `dof + 1` = tool).
    Link { chain: usize, link: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollisionVolume {
    pub name: String,
    pub shape: Shape,
    pub attachment: Attachment,
    /// Pose of the shape in its attachment frame.
    pub local: Pose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeOwner {
    Chain(usize),
    Environment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollisionTree {
    pub id: String,
    pub owner: TreeOwner,
    pub volumes: Vec<CollisionVolume>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VolumeRef {
    pub tree: usize,
    pub volume: usize,
}

/// Unordered volume pair, stored with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PairId {
    pub a: VolumeRef,
    pub b: VolumeRef,
}

impl PairId {
    pub fn new(x: VolumeRef, y: VolumeRef) -> Self {
        if x <= y {
            Self { a: x, b: y }
        } else {
            Self { a: y, b: x }
        }
    }
}

impl std::fmt::Display for PairId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "({}:{}, {}:{})",
            self.a.tree, self.a.volume, self.b.tree, self.b.volume
        )
    }
}

/// Minimum clearance over all checked pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceResult {
    pub distance: f64,
    /// `None` when no pair is checked (distance is then `+inf`).
    pub pair: Option<PairId>,
}

/// A pair inside the activation distance, with its joint-space gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivePair {
    pub pair: PairId,
    pub distance: f64,
    pub gradient: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollisionWorld {
    trees: Vec<CollisionTree>,
    pairs: Vec<PairId>,
}

impl CollisionWorld {
    /// Build a world and its checked pair list.
    ///
    /// `tree_pairs` lists which trees are checked against each other (a tree
    /// paired with itself means self-collision). Volume pairs on the same
    /// chain whose links are equal or adjacent are always excluded, as is
    /// every pair in `exclusions`.
    pub fn new(
        trees: Vec<CollisionTree>,
        tree_pairs: &[(usize, usize)],
        exclusions: &[PairId],
        comp: &CompositeChain,
    ) -> Result<Self, CollisionError> {
        for tree in &trees {
            if tree.volumes.is_empty() {
                return Err(CollisionError::InvalidWorld(format!("tree `{}` has no volumes", tree.id)));
            }
            for v in &tree.volumes {
                v.shape.validate().map_err(|reason| CollisionError::InvalidVolume {
                    name: v.name.clone(),
                    reason,
                })?;
                let ok = match (tree.owner, v.attachment) {
                    (TreeOwner::Environment, Attachment::World) => true,
                    (TreeOwner::Chain(c), Attachment::Link { chain, link }) => {
                        c == chain && c < comp.n_chains() && link <= comp.chain(c).tool_link()
                    }
                    _ => false,
                };
                if !ok {
                    return Err(CollisionError::InvalidVolume {
                        name: v.name.clone(),
                        reason: format!("attachment {:?} not valid for tree `{}`", v.attachment, tree.id),
                    });
                }
            }
        }
        let excluded: BTreeSet<PairId> = exclusions.iter().copied().collect();
        let mut pairs = BTreeSet::new();
        for &(ta, tb) in tree_pairs {
            if ta >= trees.len() || tb >= trees.len() {
                return Err(CollisionError::InvalidWorld(format!("tree pair ({ta}, {tb}) out of range")));
            }
            for va in 0..trees[ta].volumes.len() {
                for vb in 0..trees[tb].volumes.len() {
                    let x = VolumeRef { tree: ta, volume: va };
                    let y = VolumeRef { tree: tb, volume: vb };
                    if x == y {
                        continue;
                    }
                    let pair = PairId::new(x, y);
                    if excluded.contains(&pair) {
                        continue;
                    }
                    let (atx, aty) = (trees[ta].volumes[va].attachment, trees[tb].volumes[vb].attachment);
                    if let (
                        Attachment::Link { chain: c1, link: l1 },
                        Attachment::Link { chain: c2, link: l2 },
                    ) = (atx, aty)
                    {
                        if c1 == c2 && l1.abs_diff(l2) <= 1 {
                            continue;
                        }
                    }
                    pairs.insert(pair);
                }
            }
        }
        Ok(Self {
            trees,
            pairs: pairs.into_iter().collect(),
        })
    }

    pub fn trees(&self) -> &[CollisionTree] {
        &self.trees
    }

    /// Checked volume pairs in canonical order.
    pub fn pairs(&self) -> &[PairId] {
        &self.pairs
    }

    pub fn volume(&self, v: VolumeRef) -> &CollisionVolume {
        &self.trees[v.tree].volumes[v.volume]
    }

    /// Human-readable `volume_a <-> volume_b`.
    pub fn describe_pair(&self, p: PairId) -> String {
        format!("{} <-> {}", self.volume(p.a).name, self.volume(p.b).name)
    }

    pub fn tree_index(&self, id: &str) -> Option<usize> {
        self.trees.iter().position(|t| t.id == id)
    }

    pub fn find_volume(&self, name: &str) -> Option<VolumeRef> {
        self.trees.iter().enumerate().find_map(|(t, tree)| {
            tree.volumes
                .iter()
                .position(|v| v.name == name)
                .map(|volume| VolumeRef { tree: t, volume })
        })
    }

    fn pose_with_fk(&self, v: &CollisionVolume, fk: &[FkResult]) -> WorldShape {
        match v.attachment {
            Attachment::World => v.shape.posed(&v.local),
            Attachment::Link { chain, link } => v.shape.posed(&fk[chain].frame(link).compose(&v.local)),
        }
    }

    fn pose_single(&self, v: &CollisionVolume, comp: &CompositeChain, q: &[f64]) -> Result<WorldShape, CollisionError> {
        Ok(match v.attachment {
            Attachment::World => v.shape.posed(&v.local),
            Attachment::Link { chain, link } => {
                let frame = comp.chain(chain).frame_pose(comp.split(q, chain), link)?;
                v.shape.posed(&frame.compose(&v.local))
            }
        })
    }

    /// Every volume in world coordinates, indexed `[tree][volume]`.
    pub fn posed_volumes(&self, comp: &CompositeChain, q: &[f64]) -> Result<Vec<Vec<WorldShape>>, CollisionError> {
        let fk = comp.forward_kinematics(q)?;
        Ok(self
            .trees
            .iter()
            .map(|t| t.volumes.iter().map(|v| self.pose_with_fk(v, &fk)).collect())
            .collect())
    }

    /// Distance of every checked pair, aligned with [`Self::pairs`].
    pub fn pair_distances(&self, comp: &CompositeChain, q: &[f64]) -> Result<Vec<f64>, CollisionError> {
        let posed = self.posed_volumes(comp, q)?;
        self.pairs
            .iter()
            .map(|p| primitive_distance(&posed[p.a.tree][p.a.volume], &posed[p.b.tree][p.b.volume]))
            .collect()
    }

    /// Global minimum over checked pairs; ties resolve to the first pair in
    /// canonical order.
    pub fn world_min_distance(&self, comp: &CompositeChain, q: &[f64]) -> Result<DistanceResult, CollisionError> {
        let dists = self.pair_distances(comp, q)?;
        Ok(min_of(&self.pairs, &dists))
    }

    pub fn pair_distance(&self, comp: &CompositeChain, q: &[f64], pair: PairId) -> Result<f64, CollisionError> {
        if self.pairs.binary_search(&pair).is_err() {
            return Err(CollisionError::UnknownPair(pair));
        }
        self.raw_pair_distance(comp, q, pair)
    }

    fn raw_pair_distance(&self, comp: &CompositeChain, q: &[f64], pair: PairId) -> Result<f64, CollisionError> {
        let a = self.pose_single(self.volume(pair.a), comp, q)?;
        let b = self.pose_single(self.volume(pair.b), comp, q)?;
        primitive_distance(&a, &b)
    }

    /// Stacked joint indices that can move the given volume.
    fn moving_joints(&self, comp: &CompositeChain, v: VolumeRef) -> std::ops::Range<usize> {
        match self.volume(v).attachment {
            Attachment::World => 0..0,
            Attachment::Link { chain, link } => {
                let start = comp.offsets()[chain];
                start..start + link.min(comp.chain(chain).dof())
            }
        }
    }

    /// Symmetric-difference gradient of one pair distance with respect to the
    /// stacked joint vector. Joints that move neither volume get an exact zero
    /// (their perturbation leaves both poses bitwise unchanged).
    pub fn distance_gradient(
        &self,
        comp: &CompositeChain,
        q: &[f64],
        pair: PairId,
        delta_q: f64,
    ) -> Result<Vec<f64>, CollisionError> {
        if comp.dof() != q.len() {
            return Err(ChainError::DimensionMismatch {
                expected: comp.dof(),
                actual: q.len(),
            }
            .into());
        }
        let mut grad = vec![0.0; q.len()];
        let ra = self.moving_joints(comp, pair.a);
        let rb = self.moving_joints(comp, pair.b);
        let mut qp = q.to_vec();
        for i in 0..q.len() {
            if !ra.contains(&i) && !rb.contains(&i) {
                continue;
            }
            qp[i] = q[i] + delta_q;
            let plus = self.raw_pair_distance(comp, &qp, pair)?;
            qp[i] = q[i] - delta_q;
            let minus = self.raw_pair_distance(comp, &qp, pair)?;
            qp[i] = q[i];
            grad[i] = (plus - minus) / (2.0 * delta_q);
        }
        Ok(grad)
    }

    /// Pairs closer than `d_act`, each with its gradient.
    pub fn active_pairs(
        &self,
        comp: &CompositeChain,
        q: &[f64],
        d_act: f64,
        delta_q: f64,
    ) -> Result<Vec<ActivePair>, CollisionError> {
        let dists = self.pair_distances(comp, q)?;
        self.active_from_distances(comp, q, &dists, d_act, delta_q)
    }

    /// Same as [`Self::active_pairs`] with pair distances at `q` already known.
    pub fn active_from_distances(
        &self,
        comp: &CompositeChain,
        q: &[f64],
        dists: &[f64],
        d_act: f64,
        delta_q: f64,
    ) -> Result<Vec<ActivePair>, CollisionError> {
        let mut out = Vec::new();
        for (pair, &distance) in self.pairs.iter().zip(dists) {
            if distance < d_act {
                out.push(ActivePair {
                    pair: *pair,
                    distance,
                    gradient: self.distance_gradient(comp, q, *pair, delta_q)?,
                });
            }
        }
        Ok(out)
    }
}

/// Minimum over aligned pair/distance lists.
pub fn min_of(pairs: &[PairId], dists: &[f64]) -> DistanceResult {
    let mut best = DistanceResult {
        distance: f64::INFINITY,
        pair: None,
    };
    for (p, &d) in pairs.iter().zip(dists) {
        if d < best.distance {
            best = DistanceResult {
                distance: d,
                pair: Some(*p),
            };
        }
    }
    best
}
