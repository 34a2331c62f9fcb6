//! Scenario documents.
//!
//! ```text
//! id = "s1_floor"
//!
//! [[chains]]
//! name = "arm"
//! doc = "gen3"                      # bundled chain, or path = "arm.chain"
//! base = { xyz = [0, 0, 0] }
//! home = [0.0, 0.26, 3.14, -2.27, 0.0, 0.96, 1.57]
//!
//! [collision]
//! check = [["arm", "arm"], ["arm", "world"]]
//! exclude = [["arm_link0", "floor"]]
//!
//! [[collision.volumes]]
//! name = "floor"
//! attach = "world"
//! shape = "halfspace"
//! normal = [0, 0, 1]
//! offset = 0.0
//!
//! [waypoints]
//! center = [0, 0, 0.5]
//! radius = 0.3
//! count = 5
//! T_traj = 5.0
//! seed = 1
//!
//! [planner]
//! gamma = 1e5
//! ```
//!
//! Volume shapes take `radius` (sphere), `radius`, `a`, `b` (capsule),
//! `normal`, `offset` (halfspace) or `half_extents` (box), plus an optional
//! `transform` relative to the attachment frame.

use std::path::Path;

use nalgebra::{Unit, Vector3};
use serde::{Deserialize, Serialize};

use super::ScenarioError;
use crate::chain::{ChainDocument, CompositeChain, Pose, TransformDoc};
use crate::collision::{Attachment, CollisionTree, CollisionVolume, CollisionWorld, PairId, Shape, TreeOwner};
use crate::data;
use crate::planner::{Planner, PlannerConfig};

/// Tree id of the environment volumes.
pub const WORLD: &str = "world";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub id: String,
    pub chains: Vec<ChainEntry>,
    #[serde(default)]
    pub collision: CollisionSection,
    pub waypoints: WaypointSection,
    #[serde(default)]
    pub planner: PlannerConfig,
}

/// One arm: where its description comes from, where it is mounted and the
/// configuration it starts in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainEntry {
    pub name: String,
    /// Name of a bundled chain document.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc: Option<String>,
    /// Chain document on disk, relative to the scenario file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    /// Chain document text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inline: Option<String>,
    #[serde(default)]
    pub base: TransformDoc,
    pub home: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollisionSection {
    #[serde(default)]
    pub volumes: Vec<VolumeEntry>,
    /// Tree pairs to check, by chain name or `"world"`.
    #[serde(default)]
    pub check: Vec<[String; 2]>,
    /// Volume pairs never checked, by volume name.
    #[serde(default)]
    pub exclude: Vec<[String; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttachEntry {
    /// Must be `"world"`.
    Named(String),
    Link { chain: String, link: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeEntry {
    pub name: String,
    pub attach: AttachEntry,
    pub shape: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_extents: Option<[f64; 3]>,
    #[serde(default)]
    pub transform: TransformDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaypointSection {
    pub center: [f64; 3],
    pub radius: f64,
    pub count: usize,
    #[serde(rename = "T_traj")]
    pub t_traj: f64,
    pub seed: u64,
    /// Tool z along the outward surface normal instead of the inward one.
    #[serde(default)]
    pub outward: bool,
}

/// Command-line style overrides applied on top of a document.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub t_traj: Option<f64>,
    pub d_buff: Option<f64>,
}

/// A validated scenario, ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub comp: CompositeChain,
    pub world: CollisionWorld,
    pub home: Vec<f64>,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    /// Bundled scenario by id, or a scenario file. Chain paths are resolved
    /// and inlined so the resulting config is self-contained.
    pub fn load(name_or_path: &str) -> Result<Self, ScenarioError> {
        if let Some(text) = data::scenario_document(name_or_path) {
            return Self::parse(text);
        }
        let path = Path::new(name_or_path);
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut cfg = Self::parse(&text)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        for c in &mut cfg.chains {
            if let Some(rel) = c.path.take() {
                let p = dir.join(&rel);
                let doc = std::fs::read_to_string(&p).map_err(|e| ScenarioError::Io {
                    path: p.display().to_string(),
                    message: e.to_string(),
                })?;
                c.inline = Some(doc);
                if c.doc.is_some() {
                    // Leave both set so validation reports the conflict.
                    c.path = Some(rel);
                }
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.waypoints.seed = seed;
        }
        if let Some(t) = o.t_traj {
            self.waypoints.t_traj = t;
        }
        if let Some(d) = o.d_buff {
            // Keep the activation margin above the buffer.
            let margin = self.planner.d_act - self.planner.d_buff;
            self.planner.d_buff = d;
            self.planner.d_act = d + margin;
        }
    }

    /// Canonical JSON form, used for the log metadata and the config hash.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("scenario config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        Sha256::digest(self.to_json().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Check everything and build the chain, world and start configuration.
    pub fn build(&self) -> Result<Scenario, ScenarioError> {
        let invalid = |msg: String| ScenarioError::Invalid(msg);
        let w = &self.waypoints;
        if !(w.radius > 0.0) || !w.radius.is_finite() {
            return Err(invalid(format!("waypoints.radius must be positive, got {}", w.radius)));
        }
        if !(w.t_traj > 0.0) || !w.t_traj.is_finite() {
            return Err(invalid(format!("waypoints.T_traj must be positive, got {}", w.t_traj)));
        }
        if w.center.iter().any(|v| !v.is_finite()) {
            return Err(invalid("waypoints.center must be finite".into()));
        }
        if self.chains.is_empty() {
            return Err(invalid("at least one chain is required".into()));
        }

        let mut chains = Vec::new();
        let mut home = Vec::new();
        for (i, c) in self.chains.iter().enumerate() {
            let what = format!("chains[{i}] (`{}`)", c.name);
            if c.name == WORLD || self.chains[..i].iter().any(|o| o.name == c.name) {
                return Err(invalid(format!("{what}: name must be unique and not `{WORLD}`")));
            }
            let text = match (&c.doc, &c.path, &c.inline) {
                (Some(name), None, None) => data::chain_document(name)
                    .ok_or_else(|| invalid(format!("{what}: no bundled chain `{name}`")))?,
                (None, None, Some(text)) => text.as_str(),
                (None, Some(p), None) => return Err(invalid(format!("{what}: chain path `{p}` was not loaded"))),
                _ => return Err(invalid(format!("{what}: give exactly one of `doc`, `path`, `inline`"))),
            };
            let chain = ChainDocument::parse(text)
                .and_then(|d| d.build())
                .map_err(|e| invalid(format!("{what}: {e}")))?;
            let mount = c.base.to_pose(&what).map_err(|e| invalid(e.to_string()))?;
            if c.home.len() != chain.dof() {
                return Err(invalid(format!(
                    "{what}: home has {} values, chain has {} joints",
                    c.home.len(),
                    chain.dof()
                )));
            }
            home.extend_from_slice(&c.home);
            chains.push(chain.mounted_at(&mount));
        }
        let comp = CompositeChain::new(chains).map_err(|e| invalid(e.to_string()))?;
        let world = self.build_world(&comp)?;
        let planner = Planner::new(comp.clone(), world.clone(), self.planner.clone())?;
        planner
            .check_start(&home)
            .map_err(|e| invalid(format!("home configuration: {e}")))?;
        Ok(Scenario {
            config: self.clone(),
            comp,
            world,
            home,
        })
    }

    fn tree_of(&self, name: &str) -> Option<usize> {
        if name == WORLD {
            Some(self.chains.len())
        } else {
            self.chains.iter().position(|c| c.name == name)
        }
    }

    fn build_world(&self, comp: &CompositeChain) -> Result<CollisionWorld, ScenarioError> {
        let invalid = |msg: String| ScenarioError::Invalid(msg);
        let mut trees: Vec<CollisionTree> = self
            .chains
            .iter()
            .enumerate()
            .map(|(i, c)| CollisionTree {
                id: c.name.clone(),
                owner: TreeOwner::Chain(i),
                volumes: Vec::new(),
            })
            .collect();
        trees.push(CollisionTree {
            id: WORLD.into(),
            owner: TreeOwner::Environment,
            volumes: Vec::new(),
        });

        for (i, v) in self.collision.volumes.iter().enumerate() {
            let what = format!("collision.volumes[{i}] (`{}`)", v.name);
            if self.collision.volumes[..i].iter().any(|o| o.name == v.name) {
                return Err(invalid(format!("{what}: duplicate volume name")));
            }
            let (tree, attachment) = match &v.attach {
                AttachEntry::Named(n) if n == WORLD => (self.chains.len(), Attachment::World),
                AttachEntry::Named(n) => {
                    return Err(invalid(format!("{what}: attach must be \"{WORLD}\" or {{chain, link}}, got `{n}`")))
                }
                AttachEntry::Link { chain, link } => {
                    let c = self
                        .chains
                        .iter()
                        .position(|c| &c.name == chain)
                        .ok_or_else(|| invalid(format!("{what}: unknown chain `{chain}`")))?;
                    if *link > comp.chain(c).tool_link() {
                        return Err(invalid(format!(
                            "{what}: link {link} out of range (tool link is {})",
                            comp.chain(c).tool_link()
                        )));
                    }
                    (c, Attachment::Link { chain: c, link: *link })
                }
            };
            let shape = v.shape(&what)?;
            let local = v.transform.to_pose(&what).map_err(|e| invalid(e.to_string()))?;
            trees[tree].volumes.push(CollisionVolume {
                name: v.name.clone(),
                shape,
                attachment,
                local,
            });
        }

        let mut tree_pairs = Vec::new();
        for [a, b] in &self.collision.check {
            let ta = self.tree_of(a).ok_or_else(|| invalid(format!("collision.check: unknown tree `{a}`")))?;
            let tb = self.tree_of(b).ok_or_else(|| invalid(format!("collision.check: unknown tree `{b}`")))?;
            tree_pairs.push((ta, tb));
        }
        // Unused trees must not reach the world: it rejects empty ones.
        let mut used: Vec<usize> = (0..trees.len()).filter(|&t| !trees[t].volumes.is_empty()).collect();
        used.sort_unstable();
        for &(a, b) in &tree_pairs {
            for t in [a, b] {
                if trees[t].volumes.is_empty() {
                    return Err(invalid(format!("collision.check: tree `{}` has no volumes", trees[t].id)));
                }
            }
        }
        let remap = |t: usize| used.iter().position(|&u| u == t).expect("checked trees have volumes");
        let tree_pairs: Vec<(usize, usize)> = tree_pairs.iter().map(|&(a, b)| (remap(a), remap(b))).collect();
        let trees: Vec<CollisionTree> = trees
            .into_iter()
            .enumerate()
            .filter(|(t, _)| used.contains(t))
            .map(|(_, tree)| tree)
            .collect();

        let find = |name: &str| {
            trees.iter().enumerate().find_map(|(t, tree)| {
                tree.volumes
                    .iter()
                    .position(|v| v.name == name)
                    .map(|v| crate::collision::VolumeRef { tree: t, volume: v })
            })
        };
        let mut exclusions = Vec::new();
        for [a, b] in &self.collision.exclude {
            let va = find(a).ok_or_else(|| invalid(format!("collision.exclude: unknown volume `{a}`")))?;
            let vb = find(b).ok_or_else(|| invalid(format!("collision.exclude: unknown volume `{b}`")))?;
            exclusions.push(PairId::new(va, vb));
        }
        Ok(CollisionWorld::new(trees, &tree_pairs, &exclusions, comp)?)
    }
}

impl VolumeEntry {
    fn shape(&self, what: &str) -> Result<Shape, ScenarioError> {
        let need = |field: &str| ScenarioError::Invalid(format!("{what}: {} needs `{field}`", self.shape));
        let extra = |fields: &[bool]| fields.iter().any(|f| *f);
        let shape = match self.shape.as_str() {
            "sphere" => {
                if extra(&[self.a.is_some(), self.b.is_some(), self.normal.is_some(), self.offset.is_some(), self.half_extents.is_some()]) {
                    return Err(ScenarioError::Invalid(format!("{what}: sphere takes only `radius`")));
                }
                Shape::Sphere {
                    radius: self.radius.ok_or_else(|| need("radius"))?,
                }
            }
            "capsule" => {
                if extra(&[self.normal.is_some(), self.offset.is_some(), self.half_extents.is_some()]) {
                    return Err(ScenarioError::Invalid(format!("{what}: capsule takes `radius`, `a`, `b`")));
                }
                Shape::Capsule {
                    radius: self.radius.ok_or_else(|| need("radius"))?,
                    a: Vector3::from(self.a.ok_or_else(|| need("a"))?),
                    b: Vector3::from(self.b.ok_or_else(|| need("b"))?),
                }
            }
            "halfspace" => {
                if extra(&[self.radius.is_some(), self.a.is_some(), self.b.is_some(), self.half_extents.is_some()]) {
                    return Err(ScenarioError::Invalid(format!("{what}: halfspace takes `normal`, `offset`")));
                }
                let n = Vector3::from(self.normal.ok_or_else(|| need("normal"))?);
                if !(n.norm() > 0.0) || !n.norm().is_finite() {
                    return Err(ScenarioError::Invalid(format!("{what}: normal must be nonzero")));
                }
                Shape::Halfspace {
                    normal: Unit::new_normalize(n),
                    offset: self.offset.ok_or_else(|| need("offset"))?,
                }
            }
            "box" => {
                if extra(&[self.radius.is_some(), self.a.is_some(), self.b.is_some(), self.normal.is_some(), self.offset.is_some()]) {
                    return Err(ScenarioError::Invalid(format!("{what}: box takes only `half_extents`")));
                }
                Shape::Box {
                    half_extents: Vector3::from(self.half_extents.ok_or_else(|| need("half_extents"))?),
                }
            }
            other => {
                return Err(ScenarioError::Invalid(format!(
                    "{what}: unknown shape `{other}` (sphere, capsule, halfspace, box)"
                )))
            }
        };
        shape
            .validate()
            .map_err(|reason| ScenarioError::Invalid(format!("{what}: {reason}")))?;
        Ok(shape)
    }
}

impl Scenario {
    /// End-effector poses at the home configuration.
    pub fn home_poses(&self) -> Vec<Pose> {
        self.comp.ee_poses(&self.home).expect("home has the chain's dimension")
    }
}
