//! GJK distance between convex sets described by support mappings.

use nalgebra::{Matrix3, Vector3};

/// Tolerance on the gap between the upper and lower distance bounds.
pub const GJK_TOLERANCE: f64 = 1e-9;
const MAX_ITERATIONS: usize = 64;

pub trait Support {
    /// Point of the set furthest along `dir`.
    fn support(&self, dir: &Vector3<f64>) -> Vector3<f64>;
}

#[derive(Debug, Clone, Copy)]
pub struct GjkResult {
    pub distance: f64,
    pub overlapping: bool,
    pub iterations: usize,
}

/// Minimum-norm point of the convex hull of up to four points, together with
/// the subset of points whose hull contains it.
///
/// Enumerates all nonempty subsets: the closest point of the hull lies in the
/// relative interior of one face, and that face's affine projection of the
/// origin is the smallest-norm candidate with strictly positive weights.
fn closest_on_simplex(points: &[Vector3<f64>]) -> (Vector3<f64>, Vec<Vector3<f64>>) {
    let n = points.len();
    let mut best: Option<(f64, Vector3<f64>, u32)> = None;
    for mask in 1u32..(1 << n) {
        let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let Some(point) = affine_projection(points, &idx) else {
            continue;
        };
        let norm = point.norm_squared();
        if best.is_none_or(|(b, _, _)| norm < b) {
            best = Some((norm, point, mask));
        }
    }
    let (_, point, mask) = best.expect("singleton subsets are always valid");
    let kept = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| points[i]).collect();
    (point, kept)
}

/// Projection of the origin onto the affine hull of `points[idx]`, if it has
/// strictly positive barycentric weights.
fn affine_projection(points: &[Vector3<f64>], idx: &[usize]) -> Option<Vector3<f64>> {
    let p0 = points[idx[0]];
    if idx.len() == 1 {
        return Some(p0);
    }
    let k = idx.len() - 1;
    let edges: Vec<Vector3<f64>> = idx[1..].iter().map(|&i| points[i] - p0).collect();
    // Gram system for min |p0 + E w|^2.
    let mut gram = Matrix3::identity();
    let mut rhs = Vector3::zeros();
    for r in 0..k {
        for c in 0..k {
            gram[(r, c)] = edges[r].dot(&edges[c]);
        }
        rhs[r] = -edges[r].dot(&p0);
    }
    let scale: f64 = edges.iter().map(|e| e.norm_squared()).fold(0.0, f64::max);
    let sub = gram.view((0, 0), (k, k)).clone_owned();
    let det = sub.determinant();
    if det.abs() <= 1e-18 * scale.powi(k as i32) {
        return None;
    }
    let lu = sub.lu();
    let w = lu.solve(&rhs.rows(0, k).clone_owned())?;
    let w0 = 1.0 - w.sum();
    if w0 <= 0.0 || w.iter().any(|&wi| wi <= 0.0) {
        return None;
    }
    let mut p = p0;
    for r in 0..k {
        p += edges[r] * w[r];
    }
    Some(p)
}

/// Distance between convex sets `a` and `b`.
pub fn gjk_distance(a: &dyn Support, b: &dyn Support) -> GjkResult {
    let minkowski = |d: &Vector3<f64>| a.support(d) - b.support(&(-d));
    let mut v = minkowski(&Vector3::x());
    let mut simplex: Vec<Vector3<f64>> = vec![v];
    for it in 0..MAX_ITERATIONS {
        let vn = v.norm();
        if vn <= 1e-14 {
            return GjkResult {
                distance: 0.0,
                overlapping: true,
                iterations: it,
            };
        }
        let w = minkowski(&(-v));
        let lower = v.dot(&w) / vn;
        if vn - lower <= GJK_TOLERANCE || simplex.iter().any(|s| (s - w).norm() <= 1e-15) {
            return GjkResult {
                distance: vn,
                overlapping: false,
                iterations: it,
            };
        }
        simplex.push(w);
        let (nv, kept) = closest_on_simplex(&simplex);
        if kept.len() == 4 {
            return GjkResult {
                distance: 0.0,
                overlapping: true,
                iterations: it + 1,
            };
        }
        simplex = kept;
        v = nv;
    }
    GjkResult {
        distance: v.norm(),
        overlapping: false,
        iterations: MAX_ITERATIONS,
    }
}
