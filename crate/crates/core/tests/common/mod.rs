//! Independent reference implementations used by the integration tests.
//!
//! Nothing here calls into the library's numerics: the QP oracle enumerates
//! activity patterns with a dense LU, and the FK oracle rebuilds the arm from
//! raw URDF `xyz`/`rpy` values with plain 4x4 matrices.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Vector3};
use qpik_core::collision::WorldShape;
use qpik_core::qp::QpProblem;
use qpik_core::scenarios::{AttachEntry, Scenario, ScenarioConfig, VolumeEntry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Exhaustive active-set enumeration: every constraint is free, at its
/// lower side or at its upper side. Each pattern's KKT system is solved with
/// LU; the feasible point with the least objective wins.
pub fn qp_oracle(p: &QpProblem) -> Option<(DVector<f64>, f64)> {
    let n = p.g.len();
    let m = p.a.nrows();
    let total = n + m;
    let row = |i: usize| -> DVector<f64> {
        if i < n {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            e
        } else {
            p.a.row(i - n).transpose()
        }
    };
    let bounds = |i: usize| if i < n { (p.lb[i], p.ub[i]) } else { (p.lba[i - n], p.uba[i - n]) };
    let value = |i: usize, x: &DVector<f64>| if i < n { x[i] } else { p.a.row(i - n).dot(&x.transpose()) };

    let mut best: Option<(DVector<f64>, f64)> = None;
    let patterns = 3usize.pow(total as u32);
    for code in 0..patterns {
        let mut c = code;
        let mut active: Vec<(usize, f64)> = Vec::new();
        let mut skip = false;
        for i in 0..total {
            let s = c % 3;
            c /= 3;
            let (lo, hi) = bounds(i);
            match s {
                1 if lo.is_finite() => active.push((i, lo)),
                2 if hi.is_finite() && hi != lo => active.push((i, hi)),
                0 => {}
                _ => skip = true,
            }
        }
        if skip || active.len() > n {
            continue;
        }
        let k = active.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&p.h);
        for (r, &(i, b)) in active.iter().enumerate() {
            let ci = row(i);
            for j in 0..n {
                kkt[(n + r, j)] = ci[j];
                kkt[(j, n + r)] = ci[j];
            }
            rhs[n + r] = b;
        }
        rhs.rows_mut(0, n).copy_from(&(-&p.g));
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        if sol.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let x = sol.rows(0, n).clone_owned();
        let feasible = (0..total).all(|i| {
            let (lo, hi) = bounds(i);
            let v = value(i, &x);
            v >= lo - 1e-9 && v <= hi + 1e-9
        });
        if !feasible {
            continue;
        }
        let f = 0.5 * x.dot(&(&p.h * &x)) + p.g.dot(&x);
        if best.as_ref().is_none_or(|(_, bf)| f < *bf) {
            best = Some((x, f));
        }
    }
    best
}

/// Random strictly convex QP with a nonempty feasible set: rows are built
/// around a random interior point; some sides are left infinite.
pub fn random_qp(rng: &mut ChaCha8Rng, n: usize, m: usize) -> QpProblem {
    let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
    let mut mm = DMatrix::zeros(n, n);
    for v in mm.iter_mut() {
        *v = u(-1.0, 1.0);
    }
    let h = mm.tr_mul(&mm) + DMatrix::identity(n, n) * u(0.05, 0.5);
    let h = (&h + h.transpose()) * 0.5;
    let g = DVector::from_fn(n, |_, _| u(-3.0, 3.0));
    let lb = DVector::from_fn(n, |_, _| u(-2.0, -0.1));
    let ub = DVector::from_fn(n, |_, _| u(0.1, 2.0));
    let x_f = DVector::from_fn(n, |i, _| 0.5 * (lb[i] + ub[i]) + 0.2 * (ub[i] - lb[i]) * u(-1.0, 1.0));
    let mut a = DMatrix::zeros(m, n);
    for v in a.iter_mut() {
        *v = u(-1.0, 1.0);
    }
    let ax = &a * &x_f;
    let mut lba = DVector::zeros(m);
    let mut uba = DVector::zeros(m);
    for r in 0..m {
        let kind = u(0.0, 3.0);
        lba[r] = if kind < 1.0 { f64::NEG_INFINITY } else { ax[r] - u(0.0, 0.5) };
        uba[r] = if kind > 2.0 { f64::INFINITY } else { ax[r] + u(0.0, 0.5) };
    }
    QpProblem::new(h, g, a, lba, uba, lb, ub).unwrap()
}

/// Uniform sample from the feasible set by rejection from the bound box.
pub fn feasible_sample(rng: &mut ChaCha8Rng, p: &QpProblem, tries: usize) -> Option<DVector<f64>> {
    let n = p.g.len();
    for _ in 0..tries {
        let x = DVector::from_fn(n, |i, _| rng.random_range(p.lb[i]..=p.ub[i]));
        if p.max_violation(&x) == 0.0 {
            return Some(x);
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Gen3 forward kinematics from the published URDF numbers.

/// `(xyz, rpy)` per joint origin, then the end-effector fixed joint.
// Verbatim from the URDF, including its rounded angles.
#[allow(clippy::approx_constant)]
pub const GEN3_URDF: [([f64; 3], [f64; 3]); 8] = [
    ([0.0, 0.0, 0.15643], [3.1416, 2.7629e-18, -4.9305e-36]),
    ([0.0, 0.005375, -0.12838], [1.5708, 2.1343e-17, -1.1102e-16]),
    ([0.0, -0.21038, -0.006375], [-1.5708, 1.2326e-32, -2.9122e-16]),
    ([0.0, 0.006375, -0.21038], [1.5708, -6.6954e-17, -1.6653e-16]),
    ([0.0, -0.20843, -0.006375], [-1.5708, 2.2204e-16, -6.373e-17]),
    ([0.0, 0.00017505, -0.10593], [1.5708, 9.2076e-28, -8.2157e-15]),
    ([0.0, -0.10593, -0.00017505], [-1.5708, -5.5511e-17, 9.6396e-17]),
    ([0.0, 0.0, -0.0615250000000001], [3.14159265358979, 1.09937075168372e-32, 0.0]),
];

fn rpy_matrix(rpy: [f64; 3]) -> Matrix3<f64> {
    let (r, p, y) = (rpy[0], rpy[1], rpy[2]);
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, r.cos(), -r.sin(), 0.0, r.sin(), r.cos());
    let ry = Matrix3::new(p.cos(), 0.0, p.sin(), 0.0, 1.0, 0.0, -p.sin(), 0.0, p.cos());
    let rz = Matrix3::new(y.cos(), -y.sin(), 0.0, y.sin(), y.cos(), 0.0, 0.0, 0.0, 1.0);
    rz * ry * rx
}

fn homogeneous(rot: Matrix3<f64>, t: Vector3<f64>) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rot);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
    m
}

/// End-effector transform of the Gen3 arm (base at the world origin).
pub fn gen3_fk(q: &[f64]) -> Matrix4<f64> {
    let mut t = Matrix4::identity();
    for (k, (xyz, rpy)) in GEN3_URDF.iter().enumerate() {
        t *= homogeneous(rpy_matrix(*rpy), Vector3::from(*xyz));
        if k < 7 {
            let c = q[k].cos();
            let s = q[k].sin();
            t *= homogeneous(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0), Vector3::zeros());
        }
    }
    t
}

/// Rotation vector of a proper rotation matrix (angle well below pi).
pub fn log_so3(r: &Matrix3<f64>) -> Vector3<f64> {
    let cos = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let angle = cos.acos();
    let w = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    if angle < 1e-12 {
        return w / 2.0;
    }
    w * (angle / (2.0 * angle.sin()))
}

/// Central finite-difference Jacobian of [`gen3_fk`]: linear rows from the
/// position, angular rows from the world-frame rotation increment.
pub fn gen3_fd_jacobian(q: &[f64], h: f64) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(6, 7);
    for c in 0..7 {
        let mut qp = q.to_vec();
        let mut qm = q.to_vec();
        qp[c] += h;
        qm[c] -= h;
        let tp = gen3_fk(&qp);
        let tm = gen3_fk(&qm);
        let dp = (tp.fixed_view::<3, 1>(0, 3) - tm.fixed_view::<3, 1>(0, 3)) / (2.0 * h);
        let rp: Matrix3<f64> = tp.fixed_view::<3, 3>(0, 0).into();
        let rm: Matrix3<f64> = tm.fixed_view::<3, 3>(0, 0).into();
        let dw = log_so3(&(rp * rm.transpose())) / (2.0 * h);
        for r in 0..3 {
            j[(r, c)] = dp[r];
            j[(3 + r, c)] = dw[r];
        }
    }
    j
}

// ---------------------------------------------------------------------------
// Distances by case enumeration.

fn clamped_param(p: &Vector3<f64>, a: &Vector3<f64>, d: &Vector3<f64>) -> f64 {
    let len2 = d.dot(d);
    if len2 == 0.0 {
        0.0
    } else {
        ((p - a).dot(d) / len2).clamp(0.0, 1.0)
    }
}

/// Segment-segment distance: the interior stationary point of the squared
/// distance when it exists, otherwise the best of the four edges of the
/// parameter square (one parameter pinned, the other clamped).
pub fn segment_distance_oracle(a1: &Vector3<f64>, b1: &Vector3<f64>, a2: &Vector3<f64>, b2: &Vector3<f64>) -> f64 {
    let d1 = b1 - a1;
    let d2 = b2 - a2;
    let at = |s: f64, t: f64| ((a1 + d1 * s) - (a2 + d2 * t)).norm();
    let mut best = f64::INFINITY;
    let (aa, bb, cc) = (d1.dot(&d1), d1.dot(&d2), d2.dot(&d2));
    let r = a1 - a2;
    let det = aa * cc - bb * bb;
    if det > 1e-14 * aa * cc {
        let (e, f) = (d1.dot(&r), d2.dot(&r));
        let s = (bb * f - cc * e) / det;
        let t = (aa * f - bb * e) / det;
        if (0.0..=1.0).contains(&s) && (0.0..=1.0).contains(&t) {
            best = at(s, t);
        }
    }
    for s in [0.0, 1.0] {
        let p = a1 + d1 * s;
        best = best.min(at(s, clamped_param(&p, a2, &d2)));
    }
    for t in [0.0, 1.0] {
        let p = a2 + d2 * t;
        best = best.min(at(clamped_param(&p, a1, &d1), t));
    }
    best
}

/// Signed distance for sphere, capsule and halfspace operands.
pub fn shape_distance_oracle(x: &WorldShape, y: &WorldShape) -> f64 {
    use WorldShape as W;
    // Spheres are zero-length capsules.
    let core = |s: &WorldShape| match s {
        W::Sphere { center, radius } => Some((*center, *center, *radius)),
        W::Capsule { a, b, radius } => Some((*a, *b, *radius)),
        _ => None,
    };
    match (core(x), core(y)) {
        (Some((a1, b1, r1)), Some((a2, b2, r2))) => segment_distance_oracle(&a1, &b1, &a2, &b2) - r1 - r2,
        (Some((a, b, r)), None) | (None, Some((a, b, r))) => {
            let W::Halfspace { normal, offset } = (if core(x).is_none() { x } else { y }) else {
                panic!("oracle covers spheres, capsules and halfspaces")
            };
            normal.dot(&a).min(normal.dot(&b)) - offset - r
        }
        (None, None) => panic!("halfspace pairs are not checked"),
    }
}

/// Tree name of a volume entry: its chain or `"world"`.
fn tree_name(v: &VolumeEntry) -> String {
    match &v.attach {
        AttachEntry::Named(n) => n.clone(),
        AttachEntry::Link { chain, .. } => chain.clone(),
    }
}

fn link_of(v: &VolumeEntry) -> Option<(&str, usize)> {
    match &v.attach {
        AttachEntry::Link { chain, link } => Some((chain.as_str(), *link)),
        AttachEntry::Named(_) => None,
    }
}

/// Volume-name pairs that a scenario document asks to check, enumerated
/// straight from its `check` and `exclude` lists.
pub fn checked_name_pairs(cfg: &ScenarioConfig) -> Vec<(String, String)> {
    let vols = &cfg.collision.volumes;
    let checked = |ta: &str, tb: &str| {
        cfg.collision.check.iter().any(|[a, b]| (a == ta && b == tb) || (a == tb && b == ta))
    };
    let excluded = |na: &str, nb: &str| {
        cfg.collision.exclude.iter().any(|[a, b]| (a == na && b == nb) || (a == nb && b == na))
    };
    let mut out = Vec::new();
    for i in 0..vols.len() {
        for j in i + 1..vols.len() {
            let (x, y) = (&vols[i], &vols[j]);
            if !checked(&tree_name(x), &tree_name(y)) || excluded(&x.name, &y.name) {
                continue;
            }
            if let (Some((c1, l1)), Some((c2, l2))) = (link_of(x), link_of(y)) {
                if c1 == c2 && l1.abs_diff(l2) <= 1 {
                    continue;
                }
            }
            out.push((x.name.clone(), y.name.clone()));
        }
    }
    out
}

/// Minimum clearance over every checked name pair, each evaluated with
/// [`shape_distance_oracle`] on the volumes posed at `q`.
pub fn brute_force_min_distance(s: &Scenario, q: &[f64]) -> f64 {
    let posed = s.world.posed_volumes(&s.comp, q).unwrap();
    let get = |name: &str| {
        let v = s.world.find_volume(name).unwrap();
        &posed[v.tree][v.volume]
    };
    checked_name_pairs(&s.config)
        .iter()
        .map(|(a, b)| shape_distance_oracle(get(a), get(b)))
        .fold(f64::INFINITY, f64::min)
}

/// Uniform configuration inside the composite position limits, with
/// continuous joints drawn from `[-pi, pi]`.
pub fn random_configuration(rng: &mut ChaCha8Rng, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    lo.iter()
        .zip(hi)
        .map(|(&l, &h)| {
            let (l, h) = (l.max(-std::f64::consts::PI), h.min(std::f64::consts::PI));
            rng.random_range(l..=h)
        })
        .collect()
}
