//! Scalar Jacobi fields along normal geodesics.
//!
//! In two dimensions the Jacobi equation reduces to the scalar problem
//! j'' + K(gamma(t)) j = 0 along the geodesic, where K is the Gauss
//! curvature; the normal variation of the exponential map is j(t) times a
//! parallel unit normal, and the Jacobian determinant of the exponential map
//! is proportional to j(t). Initial data encode the source: curve sources
//! start from (j, j') = (1, -kappa_v), point sources from (0, 1). The first
//! zero of j is the first focal time c(q, v).

use crate::geodesic::{self, GeodesicError, TerminalStatus, Trajectory};
use crate::metric::MetricChart;
use crate::source::{NormalRay, RayParam, SourceError, SourceSet};
use crate::vec2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JacobiError {
    #[error("degenerate Jacobi state at t = {t}: j and j' vanish together")]
    DegenerateState { t: f64 },
    #[error("t = {t} is beyond the integrated horizon {horizon}")]
    BeyondHorizon { t: f64, horizon: f64 },
    #[error("no focal time located for this ray")]
    FocalNotFound,
    #[error(transparent)]
    Geodesic(#[from] GeodesicError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Metric(#[from] crate::metric::MetricError),
    #[error(transparent)]
    Expr(#[from] crate::expr::ExprError),
}

/// Outcome of the first-focal-time search on one ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FocalOutcome {
    /// First zero of j, with the slope j'(c) there.
    Focal { c: f64, j_prime: f64 },
    /// j stayed positive over the full requested horizon.
    NoneWithinHorizon { horizon: f64 },
    /// The geodesic left the domain (or failed) before any sign change.
    Unknown { reached: f64 },
}

/// A geodesic with its co-integrated scalar Jacobi state.
#[derive(Debug, Clone)]
pub struct JacobiField {
    pub trajectory: Trajectory,
}

impl JacobiField {
    /// Integrates the Jacobi field for a unit normal ray, with initial data
    /// chosen by the source kind.
    pub fn integrate(
        chart: &MetricChart,
        ray: &NormalRay,
        t_max: f64,
        dt: f64,
    ) -> Result<JacobiField, JacobiError> {
        let (j0, jp0) = initial_data(ray);
        JacobiField::integrate_with(chart, ray.q, ray.v, j0, jp0, t_max, dt)
    }

    /// Integrates with explicit initial data (used for Wronskian checks and
    /// synthetic solutions).
    pub fn integrate_with(
        chart: &MetricChart,
        q: crate::Point2,
        v: crate::Vec2,
        j0: f64,
        jp0: f64,
        t_max: f64,
        dt: f64,
    ) -> Result<JacobiField, JacobiError> {
        let trajectory = geodesic::integrate(chart, q, v, t_max, dt, Some((j0, jp0)))?;
        let field = JacobiField { trajectory };
        field.validate()?;
        Ok(field)
    }

    fn samples(&self) -> &[(f64, f64)] {
        self.trajectory.jacobi.as_deref().expect("jacobi co-state present")
    }

    /// Length actually integrated (may fall short of the request on a
    /// domain exit).
    pub fn horizon(&self) -> f64 {
        self.trajectory.length()
    }

    /// Jacobi uniqueness: j and j' may never vanish simultaneously.
    pub fn validate(&self) -> Result<(), JacobiError> {
        for (state, &(j, jp)) in self.trajectory.states.iter().zip(self.samples()) {
            if j.abs() < 1e-12 && jp.abs() < 1e-12 {
                return Err(JacobiError::DegenerateState { t: state.t });
            }
        }
        Ok(())
    }

    fn bracket(&self, t: f64) -> Result<usize, JacobiError> {
        let states = &self.trajectory.states;
        if t < 0.0 || t > self.horizon() + 1e-12 {
            return Err(JacobiError::BeyondHorizon { t, horizon: self.horizon() });
        }
        let mut k = states.partition_point(|s| s.t <= t);
        if k > 0 {
            k -= 1;
        }
        Ok(k.min(states.len().saturating_sub(2)))
    }

    /// j(t) by cubic Hermite interpolation between RK samples.
    pub fn j_at(&self, t: f64) -> Result<f64, JacobiError> {
        let k = self.bracket(t)?;
        Ok(self.hermite(k, t).0)
    }

    /// j'(t) by cubic Hermite interpolation.
    pub fn jp_at(&self, t: f64) -> Result<f64, JacobiError> {
        let k = self.bracket(t)?;
        Ok(self.hermite(k, t).1)
    }

    fn hermite(&self, k: usize, t: f64) -> (f64, f64) {
        let states = &self.trajectory.states;
        let samples = self.samples();
        if states.len() == 1 {
            return samples[0];
        }
        let (t0, t1) = (states[k].t, states[k + 1].t);
        let dt = t1 - t0;
        if dt <= 0.0 {
            return samples[k];
        }
        let (j0, jp0) = samples[k];
        let (j1, jp1) = samples[k + 1];
        let tau = ((t - t0) / dt).clamp(0.0, 1.0);
        let (t2, t3) = (tau * tau, tau * tau * tau);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + tau;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let j = h00 * j0 + h10 * dt * jp0 + h01 * j1 + h11 * dt * jp1;
        let d00 = 6.0 * t2 - 6.0 * tau;
        let d10 = 3.0 * t2 - 4.0 * tau + 1.0;
        let d01 = -6.0 * t2 + 6.0 * tau;
        let d11 = 3.0 * t2 - 2.0 * tau;
        let jp = (d00 * j0 + d01 * j1) / dt + d10 * jp0 + d11 * jp1;
        (j, jp)
    }

    /// Locates the first sign change of j after t = 0 and refines it by
    /// bisection (60 iterations on the bracketing RK cell).
    pub fn first_focal(&self) -> FocalOutcome {
        let states = &self.trajectory.states;
        let samples = self.samples();
        // point sources start at j = 0: skip the initial zero
        let mut prev: Option<(f64, f64)> = None;
        for (state, &(j, _)) in states.iter().zip(samples) {
            if let Some((tp, jprev)) = prev {
                if jprev > 0.0 && j <= 0.0 {
                    let c = self.bisect_zero(tp, state.t);
                    let j_prime = self.jp_at(c).unwrap_or(0.0);
                    return FocalOutcome::Focal { c, j_prime };
                }
            }
            if state.t > 0.0 || j != 0.0 {
                prev = Some((state.t, j));
            }
        }
        match self.trajectory.status {
            TerminalStatus::Completed => FocalOutcome::NoneWithinHorizon {
                horizon: self.horizon(),
            },
            _ => FocalOutcome::Unknown { reached: self.horizon() },
        }
    }

    fn bisect_zero(&self, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let j = self.j_at(mid).unwrap_or(0.0);
            if j > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-10 {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Jacobi initial data for a ray: (1, -kappa_v) for curve sources,
/// (0, 1) for point sources.
pub fn initial_data(ray: &NormalRay) -> (f64, f64) {
    if ray.point_source {
        (0.0, 1.0)
    } else {
        (1.0, -ray.kappa_v)
    }
}

/// Integrates the Jacobi field along the ray's normal geodesic.
pub fn integrate_jacobi(
    chart: &MetricChart,
    ray: &NormalRay,
    t_max: f64,
    dt: f64,
) -> Result<JacobiField, JacobiError> {
    JacobiField::integrate(chart, ray, t_max, dt)
}

/// The Jacobian factor of the exponential map at parameter t along the ray
/// (det dF up to a positive normalization): the scalar j(t).
pub fn jacobian_factor(
    chart: &MetricChart,
    ray: &NormalRay,
    t: f64,
    dt: f64,
) -> Result<f64, JacobiError> {
    let horizon = (t * 1.05).max(t + 10.0 * dt);
    let field = JacobiField::integrate(chart, ray, horizon, dt)?;
    field.j_at(t)
}

/// First focal time within the horizon.
pub fn first_focal_time(
    chart: &MetricChart,
    ray: &NormalRay,
    horizon: f64,
    dt: f64,
) -> Result<FocalOutcome, JacobiError> {
    Ok(JacobiField::integrate(chart, ray, horizon, dt)?.first_focal())
}

/// Slope of the Jacobian factor at the first focal time; the transversality
/// quantity that must not vanish.
#[derive(Debug, Clone, Copy)]
pub struct Transversality {
    pub c: f64,
    pub j_prime: f64,
    /// |j'(c)| > 1e-8
    pub nonzero: bool,
}

pub fn focal_transversality(
    chart: &MetricChart,
    ray: &NormalRay,
    horizon: f64,
    dt: f64,
) -> Result<Transversality, JacobiError> {
    match first_focal_time(chart, ray, horizon, dt)? {
        FocalOutcome::Focal { c, j_prime } => Ok(Transversality {
            c,
            j_prime,
            nonzero: j_prime.abs() > 1e-8,
        }),
        _ => Err(JacobiError::FocalNotFound),
    }
}

/// Finite-difference estimate of the normal-bundle pullback degeneracy
/// h(q, v, t) = |dF/dparam|^2_g / |w|^2_g across neighboring rays; h
/// vanishes exactly at focal times (h = j^2 in the scalar reduction).
pub fn pullback_degeneracy(
    chart: &MetricChart,
    source: &SourceSet,
    ray: &NormalRay,
    t: f64,
    delta: f64,
    dt: f64,
) -> Result<f64, JacobiError> {
    let shifted = |offset: f64| -> Result<crate::Point2, JacobiError> {
        let param = match ray.param {
            RayParam::Curve { s, side } => RayParam::Curve { s: s + offset, side },
            RayParam::PointAngle { alpha } => RayParam::PointAngle { alpha: alpha + offset },
        };
        let r = source.make_ray(chart, ray.component, param)?;
        Ok(geodesic::shoot(chart, r.q, r.v, t, dt)?.endpoint().y)
    };
    let plus = shifted(delta)?;
    let minus = shifted(-delta)?;
    let df = vec2::scale(chart.wrap_diff(plus, minus), 1.0 / (2.0 * delta));
    let p = geodesic::shoot(chart, ray.q, ray.v, t, dt)?.endpoint().y;
    let num = chart.inner(p, df, df)?;
    let denom = match ray.param {
        RayParam::Curve { s, .. } => {
            let w = match &source.components[ray.component] {
                crate::source::SourceComponent::Curve(c) => c.derivative(s)?,
                crate::source::SourceComponent::Polygon(p) => p.derivative(s),
                crate::source::SourceComponent::Point { .. } => [1.0, 0.0],
            };
            chart.inner(ray.q, w, w)?
        }
        // fiber parametrized by metric angle: |dv/dalpha|_g = 1
        RayParam::PointAngle { .. } => 1.0,
    };
    Ok(num / denom)
}

/// One row of the focal report.
#[derive(Debug, Clone)]
pub struct FocalReportRow {
    pub ray_index: usize,
    pub uk_coord: f64,
    pub outcome: FocalOutcome,
}

/// Computes focal outcomes for a fan of rays (parallel over rays).
pub fn focal_report(
    chart: &MetricChart,
    source: &SourceSet,
    rays: &[NormalRay],
    horizon: f64,
    dt: f64,
) -> Vec<FocalReportRow> {
    use rayon::prelude::*;
    rays.par_iter()
        .enumerate()
        .map(|(i, ray)| {
            let period = source.components[ray.component].param_period();
            let outcome = first_focal_time(chart, ray, horizon, dt)
                .unwrap_or(FocalOutcome::Unknown { reached: 0.0 });
            FocalReportRow {
                ray_index: i,
                uk_coord: ray.param.uk_coord(period),
                outcome,
            }
        })
        .collect()
}

/// Focal report CSV: ray index, UK coordinate, c, j'(c), status.
pub fn write_focal_csv<W: std::io::Write>(
    rows: &[FocalReportRow],
    w: &mut W,
) -> std::io::Result<()> {
    writeln!(w, "ray,s,c,j_prime,status")?;
    for row in rows {
        match row.outcome {
            FocalOutcome::Focal { c, j_prime } => {
                writeln!(w, "{},{},{},{},focal", row.ray_index, row.uk_coord, c, j_prime)?
            }
            FocalOutcome::NoneWithinHorizon { .. } => {
                writeln!(w, "{},{},inf,,none_within_horizon", row.ray_index, row.uk_coord)?
            }
            FocalOutcome::Unknown { .. } => {
                writeln!(w, "{},{},,,focal_unknown", row.ray_index, row.uk_coord)?
            }
        }
    }
    Ok(())
}
