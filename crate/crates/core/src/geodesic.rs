//! Geodesic integration: the restricted exponential map on a chart.
//!
//! The geodesic ODE y'' = -Gamma(y)(y', y') is integrated as a first order
//! system with classical fixed-step RK4. A scalar Jacobi state can be
//! co-integrated on the same grid (see the jacobi module). Sphere charts get
//! special treatment: when a trajectory approaches a coordinate pole the
//! state is re-expressed in a rotated chart (poles moved to the equator) and
//! integration continues there, so great circles through poles stay
//! computable. Reported samples are always in base chart coordinates.

use crate::metric::{MetricChart, MetricError, POLE_GUARD};
use crate::vec2::{self, Point2, Vec2};
use thiserror::Error;

/// Default RK4 step in arc length.
pub const DEFAULT_DT: f64 = 1e-3;

/// Unit-speed tolerance for initial velocities and along trajectories.
pub const TOL_NORM: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum GeodesicError {
    #[error("initial velocity is not unit: |v|_g^2 = {0}")]
    NonUnitVelocity(f64),
    #[error("geodesic length must be positive, got {0}")]
    NonPositiveLength(f64),
    #[error("start point ({0}, {1}) is outside the chart domain")]
    StartOutsideDomain(f64, f64),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy)]
pub struct GeodesicState {
    pub t: f64,
    pub y: Point2,
    pub v: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminalStatus {
    Completed,
    LeftDomain,
    StepFailure,
}

/// Samples of one normal geodesic, with an optional co-integrated scalar
/// Jacobi state (j, j') per sample.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<GeodesicState>,
    pub jacobi: Option<Vec<(f64, f64)>>,
    pub status: TerminalStatus,
    pub dt: f64,
    /// max |g(v,v) - 1| observed along the trajectory, measured in the
    /// integration frame.
    pub max_speed_drift: f64,
}

impl Trajectory {
    pub fn endpoint(&self) -> &GeodesicState {
        self.states.last().expect("trajectory has at least the initial state")
    }

    pub fn length(&self) -> f64 {
        self.endpoint().t
    }

    /// Writes the trajectory as CSV with columns t, y1, y2, v1, v2.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "t,y1,y2,v1,v2")?;
        for s in &self.states {
            writeln!(w, "{},{},{},{},{}", s.t, s.y[0], s.y[1], s.v[0], s.v[1])?;
        }
        Ok(())
    }
}

/// Integrates the unit-speed geodesic from q with initial velocity v for
/// length t_max.
pub fn shoot(
    chart: &MetricChart,
    q: Point2,
    v: Vec2,
    t_max: f64,
    dt: f64,
) -> Result<Trajectory, GeodesicError> {
    integrate(chart, q, v, t_max, dt, None)
}

/// Endpoint of the geodesic; `t = 0` returns the start point.
pub fn exp_point(
    chart: &MetricChart,
    q: Point2,
    v: Vec2,
    t: f64,
) -> Result<Point2, GeodesicError> {
    if t == 0.0 {
        if !chart.contains(q) {
            return Err(GeodesicError::StartOutsideDomain(q[0], q[1]));
        }
        let n2 = vec2::quad(&chart.metric(q)?, v, v);
        if (n2 - 1.0).abs() > TOL_NORM {
            return Err(GeodesicError::NonUnitVelocity(n2));
        }
        return Ok(chart.wrap(q));
    }
    Ok(shoot(chart, q, v, t, DEFAULT_DT)?.endpoint().y)
}

/// Full integrator; `jacobi0` co-integrates j'' + K(gamma(t)) j = 0 from the
/// given (j(0), j'(0)) on the same RK4 grid.
pub(crate) fn integrate(
    chart: &MetricChart,
    q: Point2,
    v: Vec2,
    t_max: f64,
    dt: f64,
    jacobi0: Option<(f64, f64)>,
) -> Result<Trajectory, GeodesicError> {
    if t_max <= 0.0 {
        return Err(GeodesicError::NonPositiveLength(t_max));
    }
    if !chart.contains(q) {
        return Err(GeodesicError::StartOutsideDomain(q[0], q[1]));
    }
    let q = chart.wrap(q);
    let n2 = vec2::quad(&chart.metric(q)?, v, v);
    if (n2 - 1.0).abs() > TOL_NORM {
        return Err(GeodesicError::NonUnitVelocity(n2));
    }

    let sphere = chart.sphere_radius();
    let n_steps = (t_max / dt).ceil() as usize;
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut jac = jacobi0.map(|_| Vec::with_capacity(n_steps + 1));

    let mut frame = 0u8;
    let mut y = q;
    let mut vel = v;
    let (mut j, mut jp) = jacobi0.unwrap_or((0.0, 0.0));
    let mut status = TerminalStatus::Completed;
    let mut drift_max = 0.0f64;

    states.push(GeodesicState { t: 0.0, y: q, v });
    if let Some(jv) = jac.as_mut() {
        jv.push(jacobi0.unwrap());
    }

    let mut t = 0.0;
    'steps: for k in 0..n_steps {
        let step = (t_max - t).min(dt);
        match rk4_step(chart, y, vel, j, jp, step, jacobi0.is_some()) {
            Ok((ny, nv, nj, njp)) => {
                y = ny;
                vel = nv;
                j = nj;
                jp = njp;
            }
            Err(_) => {
                status = TerminalStatus::StepFailure;
                break 'steps;
            }
        }
        t = dt * (k + 1) as f64;
        if t > t_max {
            t = t_max;
        }

        // keep the state well-conditioned on spheres
        if let Some(radius) = sphere {
            let (p3, u3) = sphere_to_3d(radius, y, vel, frame);
            let z_base = p3[2] / radius;
            let z_rot = -p3[0] / radius;
            let z_cur = if frame == 0 { z_base } else { z_rot };
            let z_other = if frame == 0 { z_rot } else { z_base };
            if z_cur.abs() > 0.8 && z_other.abs() + 0.05 < z_cur.abs() {
                frame = 1 - frame;
                let (ny, nv) = sphere_from_3d(radius, p3, u3, frame);
                y = ny;
                vel = nv;
            }
        }
        y = chart.wrap(y);

        let g = match chart.metric(y) {
            Ok(g) => g,
            Err(_) => {
                status = TerminalStatus::StepFailure;
                break 'steps;
            }
        };
        drift_max = drift_max.max((vec2::quad(&g, vel, vel) - 1.0).abs());
        if drift_max > TOL_NORM {
            status = TerminalStatus::StepFailure;
            break 'steps;
        }

        // report in base chart coordinates
        let (by, bv) = if sphere.is_some() && frame == 1 {
            let radius = sphere.unwrap();
            let (p3, u3) = sphere_to_3d(radius, y, vel, frame);
            sphere_from_3d(radius, p3, u3, 0)
        } else {
            (y, vel)
        };
        let by = chart.wrap(by);

        if exits_domain(chart, by) {
            status = TerminalStatus::LeftDomain;
            break 'steps;
        }

        states.push(GeodesicState { t, y: by, v: bv });
        if let Some(jv) = jac.as_mut() {
            jv.push((j, jp));
        }
    }

    Ok(Trajectory {
        states,
        jacobi: jac,
        status,
        dt,
        max_speed_drift: drift_max,
    })
}

/// Domain-exit test in base coordinates. On sphere charts, a bound that
/// coincides with the natural pole guard never exits: pole crossings are
/// handled by the rotated frame, the chart is only nominally clipped there.
fn exits_domain(chart: &MetricChart, y: Point2) -> bool {
    let min = chart.min();
    let max = chart.max();
    let periodic = chart.periodic();
    let sphere = chart.sphere_radius().is_some();
    for a in 0..2 {
        if periodic[a] {
            continue;
        }
        let natural_lo = sphere && a == 0 && (min[a] - POLE_GUARD).abs() < POLE_GUARD;
        let natural_hi =
            sphere && a == 0 && (max[a] - (std::f64::consts::PI - POLE_GUARD)).abs() < POLE_GUARD;
        if !natural_lo && y[a] < min[a] {
            return true;
        }
        if !natural_hi && y[a] > max[a] {
            return true;
        }
    }
    false
}

#[allow(clippy::type_complexity)]
fn rk4_step(
    chart: &MetricChart,
    y: Point2,
    v: Vec2,
    j: f64,
    jp: f64,
    dt: f64,
    with_jacobi: bool,
) -> Result<(Point2, Vec2, f64, f64), MetricError> {
    let f = |y: Point2, v: Vec2, j: f64, jp: f64| -> Result<(Vec2, Vec2, f64, f64), MetricError> {
        let gamma = chart.christoffel_unchecked(y)?;
        let mut acc = [0.0; 2];
        for k in 0..2 {
            let mut s = 0.0;
            for i in 0..2 {
                for l in 0..2 {
                    s += gamma[k][i][l] * v[i] * v[l];
                }
            }
            acc[k] = -s;
        }
        let jpp = if with_jacobi {
            -chart.gauss_curvature_unchecked(y)? * j
        } else {
            0.0
        };
        Ok((v, acc, jp, jpp))
    };

    let k1 = f(y, v, j, jp)?;
    let k2 = f(
        vec2::add(y, vec2::scale(k1.0, dt / 2.0)),
        vec2::add(v, vec2::scale(k1.1, dt / 2.0)),
        j + k1.2 * dt / 2.0,
        jp + k1.3 * dt / 2.0,
    )?;
    let k3 = f(
        vec2::add(y, vec2::scale(k2.0, dt / 2.0)),
        vec2::add(v, vec2::scale(k2.1, dt / 2.0)),
        j + k2.2 * dt / 2.0,
        jp + k2.3 * dt / 2.0,
    )?;
    let k4 = f(
        vec2::add(y, vec2::scale(k3.0, dt)),
        vec2::add(v, vec2::scale(k3.1, dt)),
        j + k3.2 * dt,
        jp + k3.3 * dt,
    )?;

    let comb = |a: f64, b: f64, c: f64, d: f64| (a + 2.0 * b + 2.0 * c + d) * dt / 6.0;
    Ok((
        [
            y[0] + comb(k1.0[0], k2.0[0], k3.0[0], k4.0[0]),
            y[1] + comb(k1.0[1], k2.0[1], k3.0[1], k4.0[1]),
        ],
        [
            v[0] + comb(k1.1[0], k2.1[0], k3.1[0], k4.1[0]),
            v[1] + comb(k1.1[1], k2.1[1], k3.1[1], k4.1[1]),
        ],
        j + comb(k1.2, k2.2, k3.2, k4.2),
        jp + comb(k1.3, k2.3, k3.3, k4.3),
    ))
}

// Sphere embedding helpers. Frame 1 is the chart of the rotated sphere
// Q p with Q(x,y,z) = (z,y,-x), whose poles sit on the base equator.

fn rot_q(p: [f64; 3]) -> [f64; 3] {
    [p[2], p[1], -p[0]]
}

fn rot_q_inv(p: [f64; 3]) -> [f64; 3] {
    [-p[2], p[1], p[0]]
}

/// Chart state -> base 3D position and velocity.
fn sphere_to_3d(radius: f64, y: Point2, v: Vec2, frame: u8) -> ([f64; 3], [f64; 3]) {
    let (st, ct) = y[0].sin_cos();
    let (sp, cp) = y[1].sin_cos();
    let p = [radius * st * cp, radius * st * sp, radius * ct];
    let j_theta = [radius * ct * cp, radius * ct * sp, -radius * st];
    let j_phi = [-radius * st * sp, radius * st * cp, 0.0];
    let u = [
        j_theta[0] * v[0] + j_phi[0] * v[1],
        j_theta[1] * v[0] + j_phi[1] * v[1],
        j_theta[2] * v[0] + j_phi[2] * v[1],
    ];
    if frame == 1 {
        (rot_q_inv(p), rot_q_inv(u))
    } else {
        (p, u)
    }
}

/// Base 3D position and velocity -> chart state in the requested frame.
fn sphere_from_3d(radius: f64, p: [f64; 3], u: [f64; 3], frame: u8) -> (Point2, Vec2) {
    let (p, u) = if frame == 1 { (rot_q(p), rot_q(u)) } else { (p, u) };
    let theta = (p[2] / radius).clamp(-1.0, 1.0).acos();
    let mut phi = p[1].atan2(p[0]);
    if phi < 0.0 {
        phi += 2.0 * std::f64::consts::PI;
    }
    let (st, ct) = (theta.sin().max(POLE_GUARD * 1e-3), theta.cos());
    let (sp, cp) = phi.sin_cos();
    let j_theta = [radius * ct * cp, radius * ct * sp, -radius * st];
    let j_phi = [-radius * st * sp, radius * st * cp, 0.0];
    let dot3 = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let v_theta = dot3(u, j_theta) / (radius * radius);
    let v_phi = dot3(u, j_phi) / (radius * radius * st * st);
    ([theta, phi], [v_theta, v_phi])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn flat_straight_line() {
        let chart = MetricChart::flat([-5.0, -5.0], [5.0, 5.0]);
        let traj = shoot(&chart, [0.0, 0.0], [1.0, 0.0], 2.0, 1e-3).unwrap();
        assert_eq!(traj.status, TerminalStatus::Completed);
        let end = traj.endpoint();
        assert!((end.y[0] - 2.0).abs() < 1e-12);
        assert!(end.y[1].abs() < 1e-12);
        assert!((end.t - 2.0).abs() < 1e-12);
    }

    #[test]
    fn flat_euclidean_ray() {
        let chart = MetricChart::flat([-6.0, -6.0], [6.0, 6.0]);
        let p = exp_point(&chart, [0.0, 0.0], [0.6, 0.8], 5.0).unwrap();
        assert!((p[0] - 3.0).abs() < 1e-10);
        assert!((p[1] - 4.0).abs() < 1e-10);
        let q = exp_point(&chart, [1.0, 1.0], [0.0, 1.0], 0.0).unwrap();
        assert_eq!(q, [1.0, 1.0]);
    }

    #[test]
    fn torus_wraps() {
        let chart = MetricChart::torus_flat(1.0, 1.0);
        let traj = shoot(&chart, [0.0, 0.0], [1.0, 0.0], 1.25, 1e-3).unwrap();
        let end = traj.endpoint();
        assert_eq!(traj.status, TerminalStatus::Completed);
        assert!((end.y[0] - 0.25).abs() < 1e-12, "y1 = {}", end.y[0]);
        assert!(end.y[1].abs() < 1e-12);
    }

    #[test]
    fn sphere_geodesic_toward_pole() {
        let chart = MetricChart::sphere(1.0);
        // from the equator, heading north (theta decreasing)
        let traj = shoot(&chart, [PI / 2.0, 1.0], [-1.0, 0.0], PI / 2.0, 1e-3).unwrap();
        assert_eq!(traj.status, TerminalStatus::Completed);
        let end = traj.endpoint();
        assert!(end.y[0] < 1e-3, "theta = {}", end.y[0]);
        assert!((end.t - PI / 2.0).abs() < 1e-12);
        assert!(traj.max_speed_drift < 1e-8, "drift {}", traj.max_speed_drift);
    }

    #[test]
    fn sphere_closed_great_circle() {
        let chart = MetricChart::sphere(1.0);
        // along the equator: phi' = 1/sin(theta) = 1
        let start = [PI / 2.0, 0.5];
        let traj = shoot(&chart, start, [0.0, 1.0], 2.0 * PI, 1e-3).unwrap();
        assert_eq!(traj.status, TerminalStatus::Completed);
        let end = traj.endpoint();
        let d = chart.wrap_diff(end.y, start);
        assert!(vec2::norm(d) < 1e-6, "offset {:?}", d);

        // a tilted great circle through the poles closes up too
        let traj = shoot(&chart, start, [-1.0, 0.0], 2.0 * PI, 1e-3).unwrap();
        assert_eq!(traj.status, TerminalStatus::Completed);
        let end = traj.endpoint();
        let d = chart.wrap_diff(end.y, start);
        assert!(vec2::norm(d) < 1e-5, "offset {:?}", d);
    }

    #[test]
    fn reversibility() {
        let chart = MetricChart::sphere(1.0);
        let q = [1.1, 0.7];
        let v = chart.unit(q, [0.4, 1.0]).unwrap();
        let t = 2.5;
        let fwd = shoot(&chart, q, v, t, 1e-3).unwrap();
        let end = fwd.endpoint();
        let back = shoot(&chart, end.y, vec2::scale(end.v, -1.0), t, 1e-3).unwrap();
        let d = chart.wrap_diff(back.endpoint().y, q);
        assert!(vec2::norm(d) < 1e-6 * t, "returned offset {:?}", d);
    }

    #[test]
    fn speed_conservation() {
        let chart = MetricChart::sphere(1.0);
        let v = chart.unit([1.0, 0.3], [0.7, -0.5]).unwrap();
        let traj = shoot(&chart, [1.0, 0.3], v, 3.0, 1e-3).unwrap();
        assert_eq!(traj.status, TerminalStatus::Completed);
        assert!(traj.max_speed_drift <= 1e-8, "drift {}", traj.max_speed_drift);
    }

    #[test]
    fn step_halving_order_on_sphere() {
        let chart = MetricChart::sphere(1.0);
        let q = [1.2, 0.4];
        let v = chart.unit(q, [0.3, 0.9]).unwrap();
        let t = 1.5;
        let end = |dt: f64| shoot(&chart, q, v, t, dt).unwrap().endpoint().y;
        let e1 = end(4e-3);
        let e2 = end(2e-3);
        let e3 = end(1e-3);
        let d12 = vec2::norm(chart.wrap_diff(e1, e2));
        let d23 = vec2::norm(chart.wrap_diff(e2, e3));
        let order = (d12 / d23).log2();
        assert!(order >= 3.5, "measured order {order} (d12={d12:.3e}, d23={d23:.3e})");
    }

    #[test]
    fn domain_exit_reported() {
        let chart = MetricChart::flat([-1.0, -1.0], [1.0, 1.0]);
        let traj = shoot(&chart, [0.0, 0.0], [1.0, 0.0], 5.0, 1e-3).unwrap();
        assert_eq!(traj.status, TerminalStatus::LeftDomain);
        assert!(traj.endpoint().y[0] <= 1.0);
    }

    #[test]
    fn bad_inputs_rejected() {
        let chart = MetricChart::flat([-1.0, -1.0], [1.0, 1.0]);
        assert!(matches!(
            shoot(&chart, [0.0, 0.0], [2.0, 0.0], 1.0, 1e-3),
            Err(GeodesicError::NonUnitVelocity(_))
        ));
        assert!(matches!(
            shoot(&chart, [0.0, 0.0], [1.0, 0.0], 0.0, 1e-3),
            Err(GeodesicError::NonPositiveLength(_))
        ));
    }
}
