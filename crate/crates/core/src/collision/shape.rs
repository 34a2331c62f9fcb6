use std::cmp::Ordering;

use nalgebra::{Unit, Vector3};

use super::gjk::{gjk_distance, Support};
use super::CollisionError;
use crate::chain::Pose;

/// Elementary collision geometry in its local frame.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    /// Sphere centered at the local origin.
    Sphere { radius: f64 },
    /// Segment `a`-`b` swept by a sphere.
    Capsule {
        radius: f64,
        a: Vector3<f64>,
        b: Vector3<f64>,
    },
    /// Solid region `{x : normal . x <= offset}`; `normal` points out of the solid.
    Halfspace {
        normal: Unit<Vector3<f64>>,
        offset: f64,
    },
    /// Axis-aligned box centered at the local origin.
    Box { half_extents: Vector3<f64> },
}

impl Shape {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            Shape::Sphere { radius } | Shape::Capsule { radius, .. } => {
                if !(*radius > 0.0) || !radius.is_finite() {
                    return Err(format!("radius must be positive, got {radius}"));
                }
            }
            Shape::Halfspace { normal, offset } => {
                if (normal.norm() - 1.0).abs() > 1e-12 || !offset.is_finite() {
                    return Err("halfspace needs a unit normal and finite offset".into());
                }
            }
            Shape::Box { half_extents } => {
                if half_extents.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
                    return Err(format!("half extents must be positive, got {half_extents:?}"));
                }
            }
        }
        Ok(())
    }

    /// The shape placed in the world by `pose`.
    pub fn posed(&self, pose: &Pose) -> WorldShape {
        match self {
            Shape::Sphere { radius } => WorldShape::Sphere {
                center: pose.position,
                radius: *radius,
            },
            Shape::Capsule { radius, a, b } => WorldShape::Capsule {
                a: pose.transform_point(a),
                b: pose.transform_point(b),
                radius: *radius,
            },
            Shape::Halfspace { normal, offset } => {
                let n = pose.orientation * normal.into_inner();
                WorldShape::Halfspace {
                    normal: n,
                    offset: offset + n.dot(&pose.position),
                }
            }
            Shape::Box { half_extents } => WorldShape::Box {
                pose: *pose,
                half_extents: *half_extents,
            },
        }
    }
}

/// Shape expressed in world coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum WorldShape {
    Sphere {
        center: Vector3<f64>,
        radius: f64,
    },
    Capsule {
        a: Vector3<f64>,
        b: Vector3<f64>,
        radius: f64,
    },
    Halfspace {
        normal: Vector3<f64>,
        offset: f64,
    },
    Box {
        pose: Pose,
        half_extents: Vector3<f64>,
    },
}

impl WorldShape {
    fn rank(&self) -> u8 {
        match self {
            WorldShape::Sphere { .. } => 0,
            WorldShape::Capsule { .. } => 1,
            WorldShape::Box { .. } => 2,
            WorldShape::Halfspace { .. } => 3,
        }
    }

    fn key(&self) -> Vec<f64> {
        match self {
            WorldShape::Sphere { center, radius } => vec![center.x, center.y, center.z, *radius],
            WorldShape::Capsule { a, b, radius } => {
                vec![a.x, a.y, a.z, b.x, b.y, b.z, *radius]
            }
            WorldShape::Halfspace { normal, offset } => {
                vec![normal.x, normal.y, normal.z, *offset]
            }
            WorldShape::Box { pose, half_extents } => {
                let q = pose.wxyz();
                vec![
                    pose.position.x,
                    pose.position.y,
                    pose.position.z,
                    q[0],
                    q[1],
                    q[2],
                    q[3],
                    half_extents.x,
                    half_extents.y,
                    half_extents.z,
                ]
            }
        }
    }

    /// Total order used to canonicalize operand order, so that every
    /// distance routine sees the same argument order for `(a, b)` and `(b, a)`.
    fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.rank().cmp(&other.rank()).then_with(|| {
            let (ka, kb) = (self.key(), other.key());
            ka.iter()
                .zip(&kb)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
    }
}

/// Closest point to `p` on segment `a`-`b`.
pub fn closest_point_on_segment(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> Vector3<f64> {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 <= f64::MIN_POSITIVE {
        return *a;
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    a + ab * t
}

pub fn point_segment_distance(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    (p - closest_point_on_segment(p, a, b)).norm()
}

/// Shortest distance between segments `p1`-`q1` and `p2`-`q2`
/// (closest-point parameterization with clamping on both segments).
pub fn segment_segment_distance(
    p1: &Vector3<f64>,
    q1: &Vector3<f64>,
    p2: &Vector3<f64>,
    q2: &Vector3<f64>,
) -> f64 {
    const EPS: f64 = 1e-18;
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(&r);
    let (s, t);
    if a <= EPS && e <= EPS {
        return r.norm();
    }
    if a <= EPS {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&r);
        if e <= EPS {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > EPS * a * e {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            t = t0;
        }
    }
    let c1 = p1 + d1 * s;
    let c2 = p2 + d2 * t;
    (c1 - c2).norm()
}

struct PointSupport(Vector3<f64>);

impl Support for PointSupport {
    fn support(&self, _dir: &Vector3<f64>) -> Vector3<f64> {
        self.0
    }
}

struct SegmentSupport(Vector3<f64>, Vector3<f64>);

impl Support for SegmentSupport {
    fn support(&self, dir: &Vector3<f64>) -> Vector3<f64> {
        if self.1.dot(dir) > self.0.dot(dir) {
            self.1
        } else {
            self.0
        }
    }
}

struct BoxSupport<'a> {
    pose: &'a Pose,
    half: &'a Vector3<f64>,
}

impl BoxSupport<'_> {
    fn vertex_toward(&self, dir: &Vector3<f64>) -> Vector3<f64> {
        let local = self.pose.orientation.inverse() * dir;
        let corner = Vector3::new(
            if local.x < 0.0 { -self.half.x } else { self.half.x },
            if local.y < 0.0 { -self.half.y } else { self.half.y },
            if local.z < 0.0 { -self.half.z } else { self.half.z },
        );
        self.pose.transform_point(&corner)
    }
}

impl Support for BoxSupport<'_> {
    fn support(&self, dir: &Vector3<f64>) -> Vector3<f64> {
        self.vertex_toward(dir)
    }
}

/// Separation of the box from a convex core (point or segment); errors when
/// the core reaches into the box, since box penetration depth is not computed.
fn box_core_distance(pose: &Pose, half: &Vector3<f64>, core: &dyn Support) -> Result<f64, CollisionError> {
    let b = BoxSupport { pose, half };
    let res = gjk_distance(&b, core);
    if res.overlapping {
        return Err(CollisionError::Unsupported(
            "penetration depth between a box and an overlapping shape".into(),
        ));
    }
    Ok(res.distance)
}

/// Signed shortest distance between two posed shapes, in meters.
///
/// Negative values are penetration depths (available for the analytic
/// sphere/capsule/halfspace pairs). Pairs involving a box use GJK and only
/// support separated (or radius-overlapping) configurations.
pub fn primitive_distance(a: &WorldShape, b: &WorldShape) -> Result<f64, CollisionError> {
    let (lo, hi) = if a.canonical_cmp(b) == Ordering::Greater {
        (b, a)
    } else {
        (a, b)
    };
    use WorldShape as W;
    let d = match (lo, hi) {
        (W::Sphere { center: c1, radius: r1 }, W::Sphere { center: c2, radius: r2 }) => {
            (c1 - c2).norm() - r1 - r2
        }
        (W::Sphere { center, radius }, W::Capsule { a, b, radius: rc }) => {
            point_segment_distance(center, a, b) - radius - rc
        }
        (W::Sphere { center, radius }, W::Box { pose, half_extents }) => {
            box_core_distance(pose, half_extents, &PointSupport(*center))? - radius
        }
        (W::Sphere { center, radius }, W::Halfspace { normal, offset }) => {
            normal.dot(center) - offset - radius
        }
        (
            W::Capsule { a: a1, b: b1, radius: r1 },
            W::Capsule { a: a2, b: b2, radius: r2 },
        ) => segment_segment_distance(a1, b1, a2, b2) - r1 - r2,
        (W::Capsule { a, b, radius }, W::Box { pose, half_extents }) => {
            box_core_distance(pose, half_extents, &SegmentSupport(*a, *b))? - radius
        }
        (W::Capsule { a, b, radius }, W::Halfspace { normal, offset }) => {
            normal.dot(a).min(normal.dot(b)) - offset - radius
        }
        (
            W::Box { pose: p1, half_extents: h1 },
            W::Box { pose: p2, half_extents: h2 },
        ) => {
            let res = gjk_distance(&BoxSupport { pose: p1, half: h1 }, &BoxSupport { pose: p2, half: h2 });
            if res.overlapping {
                return Err(CollisionError::Unsupported(
                    "penetration depth between overlapping boxes".into(),
                ));
            }
            res.distance
        }
        (W::Box { pose, half_extents }, W::Halfspace { normal, offset }) => {
            let deepest = BoxSupport { pose, half: half_extents }.vertex_toward(&(-normal));
            normal.dot(&deepest) - offset
        }
        (
            W::Halfspace { normal: n1, offset: o1 },
            W::Halfspace { normal: n2, offset: o2 },
        ) => {
            if (n1 + n2).norm() <= 1e-12 {
                -o2 - o1
            } else {
                f64::NEG_INFINITY
            }
        }
        _ => unreachable!("operands are canonically ordered"),
    };
    Ok(d)
}
