//! Task-space reference generation between the current pose and a waypoint.

use nalgebra::UnitQuaternion;

use super::{PlannerError, TrajectorySample, Waypoint};
use crate::chain::{rotation_vector, Pose, SpatialVelocity};

/// Times this close past the end of an interval are treated as the end, to
/// absorb `k * dt` rounding.
const END_SLACK: f64 = 1e-9;

fn check_time(t: f64, duration: f64) -> Result<f64, PlannerError> {
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(PlannerError::InvalidTime { t, duration });
    }
    if t < 0.0 || t > duration * (1.0 + END_SLACK) || t.is_nan() {
        return Err(PlannerError::InvalidTime { t, duration });
    }
    Ok(t.min(duration))
}

/// Cycloidal ramp `s(t) = t/T - sin(2 pi t/T) / (2 pi)` and its rate
/// `(1 - cos(2 pi t/T)) / T`: zero velocity and acceleration at both ends.
pub fn versine_ramp(t: f64, duration: f64) -> Result<(f64, f64), PlannerError> {
    let t = check_time(t, duration)?;
    let tau = t / duration;
    let w = std::f64::consts::TAU * tau;
    let s = tau - w.sin() / std::f64::consts::TAU;
    let sd = (1.0 - w.cos()) / duration;
    Ok((s, sd))
}

/// Reference pose and velocity of one arm at time `t` into a segment.
///
/// Position blends linearly with the ramp parameter; orientation rotates
/// about the fixed world axis of the start-to-goal relative rotation. A
/// nonzero terminal velocity adds a Hermite term `v T (tau^3 - tau^2)` that
/// vanishes at both ends with unit end slope, so the reference arrives at the
/// waypoint moving at exactly that velocity.
pub fn interpolate_pose(start: &Pose, wp: &Waypoint, t: f64) -> Result<(Pose, SpatialVelocity), PlannerError> {
    let t = check_time(t, wp.duration)?;
    let (s, sd) = versine_ramp(t, wp.duration)?;
    let dp = wp.pose.position - start.position;
    let rel = rotation_vector(&(wp.pose.orientation * start.orientation.inverse()));

    let mut position = start.position + dp * s;
    let mut orientation = UnitQuaternion::from_scaled_axis(rel * s) * start.orientation;
    let mut linear = dp * sd;
    let mut angular = rel * sd;

    let vt = &wp.terminal_velocity;
    if vt.linear != nalgebra::Vector3::zeros() || vt.angular != nalgebra::Vector3::zeros() {
        let tau = t / wp.duration;
        let h = wp.duration * (tau * tau * tau - tau * tau);
        let hd = 3.0 * tau * tau - 2.0 * tau;
        position += vt.linear * h;
        linear += vt.linear * hd;
        let offset = UnitQuaternion::from_scaled_axis(vt.angular * h);
        angular = vt.angular * hd + offset * angular;
        orientation = offset * orientation;
    }
    Ok((Pose::new(position, orientation), SpatialVelocity::new(linear, angular)))
}

/// Single-arm sample at time `t` into a segment.
pub fn interpolate(start: &Pose, wp: &Waypoint, t: f64) -> Result<TrajectorySample, PlannerError> {
    let (x, v) = interpolate_pose(start, wp, t)?;
    Ok(TrajectorySample {
        t,
        x_d: vec![x],
        v_d: vec![v],
    })
}
