//! The closed source set K: points, parametric closed curves, and closed
//! polygonal curves, with sampling of the unit normal bundle and the shape
//! data (signed geodesic curvature relative to a chosen normal).
//!
//! Sign convention: `kappa_v > 0` when K curves away from the side v points
//! to, so that in the flat plane the first focal time along v is 1/kappa_v
//! (the center of curvature). Point sources carry kappa_v = 0 with a flag;
//! their Jacobi data is j(0)=0, j'(0)=1 instead of j(0)=1, j'(0)=-kappa_v.

use crate::expr::{ExprError, Expression};
use crate::metric::{MetricChart, MetricError};
use crate::vec2::{self, Point2, Vec2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("curve component {component} is degenerate at s = {s}: |y'(s)|_g < 1e-6")]
    DegenerateCurve { component: usize, s: f64 },
    #[error("point ({0}, {1}) is not on the source set")]
    NotOnSource(f64, f64),
    #[error("need at least 4 rays, got {0}")]
    TooFewRays(usize),
    #[error("polygon needs at least 3 vertices")]
    PolygonTooSmall,
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Closed parametric curve (x(s), y(s)) with s in [0, period).
#[derive(Debug, Clone)]
pub struct CurveSource {
    pub x: Expression,
    pub y: Expression,
    pub period: f64,
}

impl CurveSource {
    pub fn point(&self, s: f64) -> Result<Point2, ExprError> {
        let s = s.rem_euclid(self.period);
        Ok([self.x.eval1(s)?, self.y.eval1(s)?])
    }

    /// First derivative by central differences, step 1e-6 * period.
    pub fn derivative(&self, s: f64) -> Result<Vec2, ExprError> {
        let h = 1e-6 * self.period;
        let p = self.point(s + h)?;
        let m = self.point(s - h)?;
        Ok(vec2::scale(vec2::sub(p, m), 1.0 / (2.0 * h)))
    }

    /// Second derivative by the five-point stencil, step 1e-4 * period
    /// (fourth-order truncation keeps curvature errors near 1e-9).
    pub fn second_derivative(&self, s: f64) -> Result<Vec2, ExprError> {
        let h = 1e-4 * self.period;
        let p2 = self.point(s + 2.0 * h)?;
        let p1 = self.point(s + h)?;
        let c = self.point(s)?;
        let m1 = self.point(s - h)?;
        let m2 = self.point(s - 2.0 * h)?;
        let mut out = [0.0; 2];
        for a in 0..2 {
            out[a] = (-p2[a] + 16.0 * p1[a] - 30.0 * c[a] + 16.0 * m1[a] - m2[a]) / (12.0 * h * h);
        }
        Ok(out)
    }
}

/// Closed polygonal curve, parametrized by chart arc length.
#[derive(Debug, Clone)]
pub struct PolygonSource {
    pub points: Vec<Point2>,
    cum: Vec<f64>,
    total: f64,
}

impl PolygonSource {
    pub fn new(points: Vec<Point2>) -> Result<PolygonSource, SourceError> {
        if points.len() < 3 {
            return Err(SourceError::PolygonTooSmall);
        }
        let mut cum = vec![0.0];
        let n = points.len();
        for i in 0..n {
            let seg = vec2::norm(vec2::sub(points[(i + 1) % n], points[i]));
            cum.push(cum[i] + seg);
        }
        let total = *cum.last().unwrap();
        Ok(PolygonSource { points, cum, total })
    }

    pub fn perimeter(&self) -> f64 {
        self.total
    }

    fn locate(&self, s: f64) -> (usize, f64) {
        let s = s.rem_euclid(self.total);
        let mut edge = match self.cum.binary_search_by(|c| c.partial_cmp(&s).unwrap()) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        if edge >= self.points.len() {
            edge = self.points.len() - 1;
        }
        (edge, s - self.cum[edge])
    }

    pub fn point(&self, s: f64) -> Point2 {
        let (edge, offset) = self.locate(s);
        let a = self.points[edge];
        let b = self.points[(edge + 1) % self.points.len()];
        let dir = vec2::scale(vec2::sub(b, a), 1.0 / vec2::norm(vec2::sub(b, a)));
        vec2::add(a, vec2::scale(dir, offset))
    }

    pub fn derivative(&self, s: f64) -> Vec2 {
        let (edge, _) = self.locate(s);
        let a = self.points[edge];
        let b = self.points[(edge + 1) % self.points.len()];
        vec2::scale(vec2::sub(b, a), 1.0 / vec2::norm(vec2::sub(b, a)))
    }

    /// Parameter distance to the nearest vertex.
    pub fn corner_distance(&self, s: f64) -> f64 {
        let s = s.rem_euclid(self.total);
        self.cum
            .iter()
            .map(|c| {
                let mut d = (s - c).abs();
                d = d.min(self.total - d);
                d
            })
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone)]
pub enum SourceComponent {
    Point { at: Point2 },
    Curve(CurveSource),
    Polygon(PolygonSource),
}

impl SourceComponent {
    pub fn is_point(&self) -> bool {
        matches!(self, SourceComponent::Point { .. })
    }

    /// Parameter period: 2*pi for point fibers, the curve period otherwise.
    pub fn param_period(&self) -> f64 {
        match self {
            SourceComponent::Point { .. } => 2.0 * std::f64::consts::PI,
            SourceComponent::Curve(c) => c.period,
            SourceComponent::Polygon(p) => p.perimeter(),
        }
    }
}

/// The closed set K as a list of components.
#[derive(Debug, Clone)]
pub struct SourceSet {
    pub components: Vec<SourceComponent>,
}

/// Side of a curve: Plus is the +90 degree rotation of the tangent
/// (the inside of a counterclockwise curve).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RayParam {
    Curve { s: f64, side: Side },
    PointAngle { alpha: f64 },
}

impl RayParam {
    /// Scalar coordinate along UK used for ordering and CSV export: curve
    /// parameter (side Minus offset by one period), or the fiber angle.
    pub fn uk_coord(&self, period: f64) -> f64 {
        match *self {
            RayParam::Curve { s, side } => match side {
                Side::Plus => s.rem_euclid(period),
                Side::Minus => s.rem_euclid(period) + period,
            },
            RayParam::PointAngle { alpha } => alpha.rem_euclid(2.0 * std::f64::consts::PI),
        }
    }
}

/// One element (q, v) of the unit normal bundle with its shape data.
#[derive(Debug, Clone)]
pub struct NormalRay {
    pub component: usize,
    pub q: Point2,
    /// Unit normal at q.
    pub v: Vec2,
    pub param: RayParam,
    /// Signed geodesic curvature of K at q relative to v; 0 for points.
    pub kappa_v: f64,
    pub point_source: bool,
}

impl SourceSet {
    pub fn new(components: Vec<SourceComponent>) -> SourceSet {
        SourceSet { components }
    }

    pub fn point(at: Point2) -> SourceSet {
        SourceSet::new(vec![SourceComponent::Point { at }])
    }

    pub fn curve(x: &str, y: &str, period: f64) -> Result<SourceSet, SourceError> {
        Ok(SourceSet::new(vec![SourceComponent::Curve(CurveSource {
            x: Expression::parse(x, &["s"])?,
            y: Expression::parse(y, &["s"])?,
            period,
        })]))
    }

    pub fn polygon(points: Vec<Point2>) -> Result<SourceSet, SourceError> {
        Ok(SourceSet::new(vec![SourceComponent::Polygon(
            PolygonSource::new(points)?,
        )]))
    }

    /// Circle of radius r centered at c, counterclockwise.
    pub fn circle(c: Point2, r: f64) -> SourceSet {
        SourceSet::curve(
            &format!("{} + {}*cos(s)", c[0], r),
            &format!("{} + {}*sin(s)", c[1], r),
            2.0 * std::f64::consts::PI,
        )
        .unwrap()
    }

    /// Axis-aligned ellipse x = a cos s, y = b sin s.
    pub fn ellipse(a: f64, b: f64) -> SourceSet {
        SourceSet::curve(
            &format!("{a}*cos(s)"),
            &format!("{b}*sin(s)"),
            2.0 * std::f64::consts::PI,
        )
        .unwrap()
    }

    /// Builds the ray for a given component and bundle parameter.
    pub fn make_ray(
        &self,
        chart: &MetricChart,
        component: usize,
        param: RayParam,
    ) -> Result<NormalRay, SourceError> {
        match (&self.components[component], param) {
            (SourceComponent::Point { at }, RayParam::PointAngle { alpha }) => {
                let v = chart.frame_vector(*at, alpha)?;
                Ok(NormalRay {
                    component,
                    q: *at,
                    v,
                    param,
                    kappa_v: 0.0,
                    point_source: true,
                })
            }
            (SourceComponent::Curve(curve), RayParam::Curve { s, side }) => {
                let q = curve.point(s)?;
                let w = curve.derivative(s)?;
                let wn = chart.norm(q, w)?;
                if wn < 1e-6 {
                    return Err(SourceError::DegenerateCurve { component, s });
                }
                let n_plus = chart.unit(q, chart.perp(q, w)?)?;
                let v = vec2::scale(n_plus, side.sign());
                let accel = curve.second_derivative(s)?;
                let kappa_plus = self.geodesic_curvature(chart, q, w, accel, n_plus)?;
                Ok(NormalRay {
                    component,
                    q,
                    v,
                    param,
                    kappa_v: side.sign() * kappa_plus,
                    point_source: false,
                })
            }
            (SourceComponent::Polygon(poly), RayParam::Curve { s, side }) => {
                let q = poly.point(s);
                let w = poly.derivative(s);
                let n_plus = chart.unit(q, chart.perp(q, w)?)?;
                let v = vec2::scale(n_plus, side.sign());
                let accel = [0.0, 0.0];
                let kappa_plus = self.geodesic_curvature(chart, q, w, accel, n_plus)?;
                Ok(NormalRay {
                    component,
                    q,
                    v,
                    param,
                    kappa_v: side.sign() * kappa_plus,
                    point_source: false,
                })
            }
            _ => Err(SourceError::NotOnSource(f64::NAN, f64::NAN)),
        }
    }

    /// kappa_v = g(a + Gamma(w,w), v) / g(w,w) for a curve with chart
    /// velocity w and chart acceleration a; v must be the unit normal.
    fn geodesic_curvature(
        &self,
        chart: &MetricChart,
        q: Point2,
        w: Vec2,
        accel: Vec2,
        v: Vec2,
    ) -> Result<f64, SourceError> {
        let gamma = chart.christoffel_unchecked(q)?;
        let mut cov = accel;
        for k in 0..2 {
            let mut s = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    s += gamma[k][i][j] * w[i] * w[j];
                }
            }
            cov[k] += s;
        }
        let g = chart.metric(q)?;
        Ok(vec2::quad(&g, cov, v) / vec2::quad(&g, w, w))
    }

    /// Samples the unit normal bundle: N rays per point component
    /// (equispaced in fiber angle), 2N per curve component (both sides,
    /// equispaced in the curve parameter). Polygon samples are offset by
    /// half a spacing so they never land on corners.
    pub fn sample_unit_normal_bundle(
        &self,
        chart: &MetricChart,
        n: usize,
    ) -> Result<Vec<NormalRay>, SourceError> {
        if n < 4 {
            return Err(SourceError::TooFewRays(n));
        }
        let mut rays = Vec::new();
        for (ci, comp) in self.components.iter().enumerate() {
            match comp {
                SourceComponent::Point { .. } => {
                    for k in 0..n {
                        let alpha = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                        rays.push(self.make_ray(chart, ci, RayParam::PointAngle { alpha })?);
                    }
                }
                SourceComponent::Curve(curve) => {
                    let period = curve.period;
                    for side in [Side::Plus, Side::Minus] {
                        for k in 0..n {
                            let s = period * k as f64 / n as f64;
                            rays.push(self.make_ray(chart, ci, RayParam::Curve { s, side })?);
                        }
                    }
                }
                SourceComponent::Polygon(poly) => {
                    let period = poly.perimeter();
                    for side in [Side::Plus, Side::Minus] {
                        for k in 0..n {
                            let mut s = period * (k as f64 + 0.5) / n as f64;
                            if poly.corner_distance(s) < 1e-9 * period {
                                s += 1e-6 * period;
                            }
                            rays.push(self.make_ray(chart, ci, RayParam::Curve { s, side })?);
                        }
                    }
                }
            }
        }
        Ok(rays)
    }

    /// Signed geodesic curvature of K at the point q relative to the unit
    /// normal v; q must lie on a curve component within tolerance.
    pub fn shape_curvature(
        &self,
        chart: &MetricChart,
        q: Point2,
        v: Vec2,
    ) -> Result<f64, SourceError> {
        let tol = 1e-6 * chart.diameter().max(1.0);
        let (ci, s) = self
            .locate_on_curves(chart, q, tol)
            .ok_or(SourceError::NotOnSource(q[0], q[1]))?;
        let plus = self.make_ray(chart, ci, RayParam::Curve { s, side: Side::Plus })?;
        let orientation = chart.inner(plus.q, plus.v, v)?;
        Ok(if orientation >= 0.0 { plus.kappa_v } else { -plus.kappa_v })
    }

    /// Finds (component, s) of the closest curve/polygon point to q, if it
    /// is within `tol`.
    pub fn locate_on_curves(
        &self,
        chart: &MetricChart,
        q: Point2,
        tol: f64,
    ) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for (ci, comp) in self.components.iter().enumerate() {
            let period = comp.param_period();
            let coarse = 512;
            let eval = |s: f64| -> Option<f64> {
                let p = match comp {
                    SourceComponent::Curve(c) => c.point(s).ok()?,
                    SourceComponent::Polygon(p) => p.point(s),
                    SourceComponent::Point { .. } => return None,
                };
                Some(chart.short_dist(p, q))
            };
            let mut local_best: Option<(f64, f64)> = None;
            for k in 0..coarse {
                let s = period * k as f64 / coarse as f64;
                if let Some(d) = eval(s) {
                    if local_best.map_or(true, |(bd, _)| d < bd) {
                        local_best = Some((d, s));
                    }
                }
            }
            if let Some((_, s0)) = local_best {
                // golden-section refinement around the coarse minimum
                let mut lo = s0 - period / coarse as f64;
                let mut hi = s0 + period / coarse as f64;
                for _ in 0..60 {
                    let m1 = lo + (hi - lo) * 0.382;
                    let m2 = lo + (hi - lo) * 0.618;
                    match (eval(m1), eval(m2)) {
                        (Some(d1), Some(d2)) => {
                            if d1 < d2 {
                                hi = m2;
                            } else {
                                lo = m1;
                            }
                        }
                        _ => break,
                    }
                }
                let s = 0.5 * (lo + hi);
                if let Some(d) = eval(s) {
                    if best.map_or(true, |(_, _, bd)| d < bd) {
                        best = Some((ci, s.rem_euclid(period), d));
                    }
                }
            }
        }
        best.and_then(|(ci, s, d)| (d <= tol).then_some((ci, s)))
    }

    /// Dense point samples of all components (m per curve component).
    pub fn dense_points(&self, m: usize) -> Result<Vec<Point2>, SourceError> {
        let mut pts = Vec::new();
        for comp in &self.components {
            match comp {
                SourceComponent::Point { at } => pts.push(*at),
                SourceComponent::Curve(c) => {
                    for k in 0..m {
                        pts.push(c.point(c.period * k as f64 / m as f64)?);
                    }
                }
                SourceComponent::Polygon(p) => {
                    for k in 0..m {
                        pts.push(p.point(p.perimeter() * k as f64 / m as f64));
                    }
                }
            }
        }
        Ok(pts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn flat() -> MetricChart {
        MetricChart::flat([-5.0, -5.0], [5.0, 5.0])
    }

    #[test]
    fn point_fiber_is_unit_circle() {
        let chart = flat();
        let k = SourceSet::point([0.0, 0.0]);
        let rays = k.sample_unit_normal_bundle(&chart, 4).unwrap();
        assert_eq!(rays.len(), 4);
        let expect = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        for (ray, e) in rays.iter().zip(expect) {
            assert!(ray.point_source);
            assert_eq!(ray.kappa_v, 0.0);
            assert!(vec2::norm(vec2::sub(ray.v, e)) < 1e-12, "{:?} vs {:?}", ray.v, e);
        }
    }

    #[test]
    fn circle_curvature_signs() {
        let chart = flat();
        let k = SourceSet::circle([0.0, 0.0], 1.0);
        let rays = k.sample_unit_normal_bundle(&chart, 8).unwrap();
        assert_eq!(rays.len(), 16);
        for ray in &rays {
            let inward = vec2::dot(ray.v, ray.q) < 0.0;
            let expect = if inward { 1.0 } else { -1.0 };
            assert!(
                (ray.kappa_v - expect).abs() < 1e-6,
                "kappa {} at {:?} side {:?}",
                ray.kappa_v,
                ray.q,
                ray.param
            );
        }
    }

    #[test]
    fn ellipse_curvature_oracle() {
        let chart = flat();
        let k = SourceSet::ellipse(2.0, 1.0);
        // at (0, 1): kappa inward = b/a^2 = 0.25
        let ray = k
            .make_ray(&chart, 0, RayParam::Curve { s: PI / 2.0, side: Side::Plus })
            .unwrap();
        assert!(vec2::norm(vec2::sub(ray.q, [0.0, 1.0])) < 1e-9);
        assert!(vec2::norm(vec2::sub(ray.v, [0.0, -1.0])) < 1e-9, "v = {:?}", ray.v);
        assert!((ray.kappa_v - 0.25).abs() < 1e-6, "kappa = {}", ray.kappa_v);
        // at (2, 0): kappa inward = a/b^2 = 2
        let ray = k
            .make_ray(&chart, 0, RayParam::Curve { s: 0.0, side: Side::Plus })
            .unwrap();
        assert!((ray.kappa_v - 2.0).abs() < 1e-5, "kappa = {}", ray.kappa_v);
        // full ellipse curvature formula at a generic parameter
        let s = 0.7f64;
        let (a, b) = (2.0f64, 1.0f64);
        let oracle = a * b / (a * a * s.sin() * s.sin() + b * b * s.cos() * s.cos()).powf(1.5);
        let ray = k
            .make_ray(&chart, 0, RayParam::Curve { s, side: Side::Plus })
            .unwrap();
        assert!((ray.kappa_v - oracle).abs() < 1e-5);
    }

    #[test]
    fn shape_curvature_lookup_and_sign_flip() {
        let chart = flat();
        let k = SourceSet::circle([0.0, 0.0], 1.0);
        let kappa_in = k.shape_curvature(&chart, [0.0, 1.0], [0.0, -1.0]).unwrap();
        let kappa_out = k.shape_curvature(&chart, [0.0, 1.0], [0.0, 1.0]).unwrap();
        assert!((kappa_in - 1.0).abs() < 1e-6);
        assert_eq!(kappa_in, -kappa_out);
        // off-source point errors
        assert!(matches!(
            k.shape_curvature(&chart, [0.5, 0.5], [1.0, 0.0]),
            Err(SourceError::NotOnSource(_, _))
        ));
    }

    #[test]
    fn polygon_edge_is_flat() {
        let chart = flat();
        let k = SourceSet::polygon(vec![[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
            .unwrap();
        let rays = k.sample_unit_normal_bundle(&chart, 16).unwrap();
        assert_eq!(rays.len(), 32);
        for ray in &rays {
            assert_eq!(ray.kappa_v, 0.0);
        }
    }

    #[test]
    fn orthogonality_invariant() {
        let chart = MetricChart::sphere(1.0);
        let k = SourceSet::curve("pi/2", "s", 2.0 * PI).unwrap(); // the equator
        let rays = k.sample_unit_normal_bundle(&chart, 32).unwrap();
        for ray in &rays {
            if let RayParam::Curve { s, .. } = ray.param {
                let comp = match &k.components[0] {
                    SourceComponent::Curve(c) => c,
                    _ => unreachable!(),
                };
                let tangent = comp.derivative(s).unwrap();
                let ortho = chart.inner(ray.q, ray.v, tangent).unwrap();
                assert!(ortho.abs() < 1e-10, "g(v, y') = {ortho}");
                // the equator is a geodesic
                assert!(ray.kappa_v.abs() < 1e-5, "kappa = {}", ray.kappa_v);
            }
        }
    }

    #[test]
    fn refinement_is_superset() {
        let chart = flat();
        let k = SourceSet::ellipse(2.0, 1.0);
        let coarse = k.sample_unit_normal_bundle(&chart, 16).unwrap();
        let fine = k.sample_unit_normal_bundle(&chart, 32).unwrap();
        for ray in coarse.iter().filter(|r| matches!(r.param, RayParam::Curve { side: Side::Plus, .. })) {
            let hit = fine.iter().any(|f| vec2::norm(vec2::sub(f.q, ray.q)) < 1e-8);
            assert!(hit, "foot point {:?} lost after refinement", ray.q);
        }
    }

    #[test]
    fn degenerate_curve_rejected() {
        let chart = flat();
        // astroid has cusps with y'(0) = 0
        let k = SourceSet::curve("cos(s)^3", "sin(s)^3", 2.0 * PI).unwrap();
        let err = k.sample_unit_normal_bundle(&chart, 8);
        assert!(matches!(err, Err(SourceError::DegenerateCurve { .. })));
    }

    #[test]
    fn too_few_rays_rejected() {
        let chart = flat();
        let k = SourceSet::point([0.0, 0.0]);
        assert!(matches!(
            k.sample_unit_normal_bundle(&chart, 3),
            Err(SourceError::TooFewRays(3))
        ));
    }
}
