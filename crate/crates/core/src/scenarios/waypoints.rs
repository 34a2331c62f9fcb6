//! Random waypoints on a sphere surface.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::WaypointSection;
use crate::chain::Pose;
use crate::planner::Waypoint;

/// Below this the projection of world x onto the tangent plane is treated as
/// degenerate and world y is used instead.
const POLE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sphere {
    pub center: Vector3<f64>,
    pub radius: f64,
}

/// Unit direction from a normalized Gaussian triple (uniform on the sphere).
pub fn random_direction<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Tool orientation at surface direction `d`: tool z along `-d` (inward) or
/// `d` (outward), tool x along world x projected onto the tangent plane.
pub fn surface_orientation(d: &Vector3<f64>, outward: bool) -> UnitQuaternion<f64> {
    let z = if outward { *d } else { -d };
    let tangent = |w: Vector3<f64>| w - d * d.dot(&w);
    let mut x = tangent(Vector3::x());
    if x.norm() < POLE_TOL {
        x = tangent(Vector3::y());
    }
    let x = x.normalize();
    let y = z.cross(&x);
    let m = Matrix3::from_columns(&[x, y, z]);
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m))
}

/// One waypoint, uniformly distributed on the sphere, arriving at rest.
pub fn generate_waypoint<R: Rng + ?Sized>(rng: &mut R, sphere: &Sphere, outward: bool, duration: f64) -> Waypoint {
    let d = random_direction(rng);
    let pose = Pose::new(sphere.center + d * sphere.radius, surface_orientation(&d, outward));
    Waypoint::at_rest(pose, duration)
}

/// `count` waypoint sets for `arms` arms. All sets share the section's seed
/// stream; within a set arms draw in order.
pub fn waypoint_sets(section: &WaypointSection, arms: usize) -> Vec<Vec<Waypoint>> {
    let mut rng = ChaCha8Rng::seed_from_u64(section.seed);
    let sphere = Sphere {
        center: Vector3::from(section.center),
        radius: section.radius,
    };
    (0..section.count)
        .map(|_| {
            (0..arms)
                .map(|_| generate_waypoint(&mut rng, &sphere, section.outward, section.t_traj))
                .collect()
        })
        .collect()
}
