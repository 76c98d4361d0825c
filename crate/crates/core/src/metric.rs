//! Metric charts: a rectangle in chart coordinates carrying a smooth
//! symmetric positive definite metric, with optional periodic axes.
//!
//! Built-in families: flat, round sphere in (theta, phi) coordinates, flat
//! torus, surface of revolution with an arc-length profile r(s), conformal
//! factors exp(2*phi) and fully expression-backed components. Christoffel
//! symbols come from the standard formula in terms of the metric derivatives;
//! Gauss curvature from the Brioschi formula, so expression-backed families
//! go through the same code path as the closed-form ones.

use crate::expr::{ExprError, Expression};
use crate::vec2::{self, Mat2, Point2, Vec2};
use thiserror::Error;

/// Guard band keeping sphere charts away from the coordinate poles.
pub const POLE_GUARD: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("point ({0}, {1}) is outside the chart domain")]
    OutOfDomain(f64, f64),
    #[error("metric not positive definite at ({0}, {1})")]
    NotPositiveDefinite(f64, f64),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("invalid chart: {0}")]
    InvalidChart(String),
}

#[derive(Debug, Clone)]
pub enum MetricFamily {
    Flat,
    Sphere { radius: f64 },
    TorusFlat { l1: f64, l2: f64 },
    /// Chart (s, phi) with metric diag(1, r(s)^2); the profile r(s) is
    /// assumed arc-length parametrized.
    SurfaceOfRevolution { profile: Expression },
    /// g = exp(2*phi(y)) * identity.
    Conformal { phi: Expression },
    Expression {
        g11: Expression,
        g12: Expression,
        g22: Expression,
    },
}

/// A coordinate chart with its metric. Immutable after construction and
/// safe to share across threads; all evaluation is pure.
#[derive(Debug, Clone)]
pub struct MetricChart {
    family: MetricFamily,
    min: Point2,
    max: Point2,
    periodic: [bool; 2],
    /// Central-difference step for first metric derivatives,
    /// 1e-5 * domain diameter.
    h_fd: f64,
    /// Step for second derivatives (larger: balances truncation against
    /// rounding for f'').
    h_fd2: f64,
}

impl MetricChart {
    pub fn new(
        family: MetricFamily,
        min: Point2,
        max: Point2,
        periodic: [bool; 2],
    ) -> Result<MetricChart, MetricError> {
        if !(min[0] < max[0] && min[1] < max[1]) {
            return Err(MetricError::InvalidChart(format!(
                "empty domain [{},{}]x[{},{}]",
                min[0], max[0], min[1], max[1]
            )));
        }
        let diam = vec2::norm(vec2::sub(max, min));
        let chart = MetricChart {
            family,
            min,
            max,
            periodic,
            h_fd: 1e-5 * diam,
            h_fd2: 2e-4 * diam,
        };
        chart.check_positive_definite(64)?;
        Ok(chart)
    }

    /// Flat plane on the given rectangle.
    pub fn flat(min: Point2, max: Point2) -> MetricChart {
        MetricChart::new(MetricFamily::Flat, min, max, [false, false]).unwrap()
    }

    /// Round sphere of the given radius in (theta, phi) coordinates; theta
    /// is clipped away from the poles by the guard band, phi is periodic.
    pub fn sphere(radius: f64) -> MetricChart {
        MetricChart::new(
            MetricFamily::Sphere { radius },
            [POLE_GUARD, 0.0],
            [std::f64::consts::PI - POLE_GUARD, 2.0 * std::f64::consts::PI],
            [false, true],
        )
        .unwrap()
    }

    /// Sphere chart restricted to a theta sub-interval (still pole-guarded).
    pub fn sphere_band(radius: f64, theta_min: f64, theta_max: f64) -> MetricChart {
        MetricChart::new(
            MetricFamily::Sphere { radius },
            [theta_min.max(POLE_GUARD), 0.0],
            [
                theta_max.min(std::f64::consts::PI - POLE_GUARD),
                2.0 * std::f64::consts::PI,
            ],
            [false, true],
        )
        .unwrap()
    }

    /// Flat torus with fundamental domain [0,l1) x [0,l2).
    pub fn torus_flat(l1: f64, l2: f64) -> MetricChart {
        MetricChart::new(MetricFamily::TorusFlat { l1, l2 }, [0.0, 0.0], [l1, l2], [true, true])
            .unwrap()
    }

    pub fn family(&self) -> &MetricFamily {
        &self.family
    }

    pub fn min(&self) -> Point2 {
        self.min
    }

    pub fn max(&self) -> Point2 {
        self.max
    }

    pub fn periodic(&self) -> [bool; 2] {
        self.periodic
    }

    pub fn diameter(&self) -> f64 {
        vec2::norm(vec2::sub(self.max, self.min))
    }

    pub fn axis_len(&self, axis: usize) -> f64 {
        self.max[axis] - self.min[axis]
    }

    pub fn period(&self, axis: usize) -> Option<f64> {
        self.periodic[axis].then(|| self.axis_len(axis))
    }

    pub fn fd_step(&self) -> f64 {
        self.h_fd
    }

    pub fn sphere_radius(&self) -> Option<f64> {
        match self.family {
            MetricFamily::Sphere { radius } => Some(radius),
            _ => None,
        }
    }

    /// Wraps periodic coordinates into the fundamental domain.
    pub fn wrap(&self, y: Point2) -> Point2 {
        let mut out = y;
        for a in 0..2 {
            if self.periodic[a] {
                let len = self.axis_len(a);
                out[a] = self.min[a] + (out[a] - self.min[a]).rem_euclid(len);
            }
        }
        out
    }

    /// Coordinate difference a - b with periodic axes reduced to the
    /// nearest representative.
    pub fn wrap_diff(&self, a: Point2, b: Point2) -> Vec2 {
        let mut d = vec2::sub(a, b);
        for axis in 0..2 {
            if self.periodic[axis] {
                let len = self.axis_len(axis);
                d[axis] -= (d[axis] / len).round() * len;
            }
        }
        d
    }

    pub fn contains(&self, y: Point2) -> bool {
        let y = self.wrap(y);
        (0..2).all(|a| self.periodic[a] || (y[a] >= self.min[a] && y[a] <= self.max[a]))
    }

    /// Metric tensor at a chart point (coordinates wrapped first).
    pub fn metric(&self, y: Point2) -> Result<Mat2, MetricError> {
        let y = self.wrap(y);
        match &self.family {
            MetricFamily::Flat => Ok([[1.0, 0.0], [0.0, 1.0]]),
            MetricFamily::TorusFlat { .. } => Ok([[1.0, 0.0], [0.0, 1.0]]),
            MetricFamily::Sphere { radius } => {
                let r2 = radius * radius;
                let s = y[0].sin();
                Ok([[r2, 0.0], [0.0, r2 * s * s]])
            }
            MetricFamily::SurfaceOfRevolution { profile } => {
                let r = profile.eval1(y[0])?;
                Ok([[1.0, 0.0], [0.0, r * r]])
            }
            MetricFamily::Conformal { phi } => {
                let f = (2.0 * phi.eval2(y[0], y[1])?).exp();
                if !f.is_finite() {
                    return Err(MetricError::NotPositiveDefinite(y[0], y[1]));
                }
                Ok([[f, 0.0], [0.0, f]])
            }
            MetricFamily::Expression { g11, g12, g22 } => {
                let a = g11.eval2(y[0], y[1])?;
                let b = g12.eval2(y[0], y[1])?;
                let c = g22.eval2(y[0], y[1])?;
                Ok([[a, b], [b, c]])
            }
        }
    }

    /// Inverse metric at a chart point.
    pub fn metric_inv(&self, y: Point2) -> Result<Mat2, MetricError> {
        let g = self.metric(y)?;
        let d = vec2::det(&g);
        if d <= 0.0 {
            let y = self.wrap(y);
            return Err(MetricError::NotPositiveDefinite(y[0], y[1]));
        }
        Ok(vec2::inverse(&g))
    }

    /// g-norm of a tangent vector at y.
    pub fn norm(&self, y: Point2, v: Vec2) -> Result<f64, MetricError> {
        Ok(vec2::quad(&self.metric(y)?, v, v).max(0.0).sqrt())
    }

    /// g-inner product of tangent vectors at y.
    pub fn inner(&self, y: Point2, v: Vec2, w: Vec2) -> Result<f64, MetricError> {
        Ok(vec2::quad(&self.metric(y)?, v, w))
    }

    /// Short metric distance estimate |a-b|_{g(midpoint)}; adequate for
    /// clustering and splatting at grid scale.
    pub fn short_dist(&self, a: Point2, b: Point2) -> f64 {
        let d = self.wrap_diff(a, b);
        let mid = self.wrap([b[0] + d[0] / 2.0, b[1] + d[1] / 2.0]);
        match self.metric(mid) {
            Ok(g) => vec2::quad(&g, d, d).max(0.0).sqrt(),
            Err(_) => vec2::norm(d),
        }
    }

    /// Rescales v to unit g-norm at y.
    pub fn unit(&self, y: Point2, v: Vec2) -> Result<Vec2, MetricError> {
        let n = self.norm(y, v)?;
        if n <= 0.0 {
            return Err(MetricError::InvalidChart("cannot normalize zero vector".into()));
        }
        Ok(vec2::scale(v, 1.0 / n))
    }

    /// Vector g-orthogonal to v with the same g-norm, rotated +90 degrees
    /// in chart orientation.
    pub fn perp(&self, y: Point2, v: Vec2) -> Result<Vec2, MetricError> {
        let ginv = self.metric_inv(y)?;
        let n = [-v[1], v[0]]; // covector annihilating v
        let p = vec2::mat_vec(&ginv, n);
        let g = self.metric(y)?;
        let np = vec2::quad(&g, p, p).max(0.0).sqrt();
        let nv = vec2::quad(&g, v, v).max(0.0).sqrt();
        if np == 0.0 {
            return Err(MetricError::NotPositiveDefinite(y[0], y[1]));
        }
        Ok(vec2::scale(p, nv / np))
    }

    /// Unit vector at metric angle `alpha` in the g-orthonormal frame
    /// obtained by Gram-Schmidt from the chart axes.
    pub fn frame_vector(&self, y: Point2, alpha: f64) -> Result<Vec2, MetricError> {
        let g = self.metric(y)?;
        if g[0][0] <= 0.0 {
            let y = self.wrap(y);
            return Err(MetricError::NotPositiveDefinite(y[0], y[1]));
        }
        let e1 = [1.0 / g[0][0].sqrt(), 0.0];
        let w = [-g[0][1] / g[0][0], 1.0];
        let wn = vec2::quad(&g, w, w).max(0.0).sqrt();
        if wn == 0.0 {
            let y = self.wrap(y);
            return Err(MetricError::NotPositiveDefinite(y[0], y[1]));
        }
        let e2 = vec2::scale(w, 1.0 / wn);
        Ok(vec2::add(
            vec2::scale(e1, alpha.cos()),
            vec2::scale(e2, alpha.sin()),
        ))
    }

    /// First partial derivatives of the metric, [d g / d y1, d g / d y2].
    pub fn metric_derivs(&self, y: Point2) -> Result<[Mat2; 2], MetricError> {
        let y = self.wrap(y);
        match &self.family {
            MetricFamily::Flat | MetricFamily::TorusFlat { .. } => {
                Ok([[[0.0; 2]; 2], [[0.0; 2]; 2]])
            }
            MetricFamily::Sphere { radius } => {
                let r2 = radius * radius;
                let d_theta = [[0.0, 0.0], [0.0, 2.0 * r2 * y[0].sin() * y[0].cos()]];
                Ok([d_theta, [[0.0; 2]; 2]])
            }
            _ => self.metric_derivs_fd(y),
        }
    }

    /// Central-difference metric derivatives; also used to cross-check the
    /// analytic families in tests.
    pub fn metric_derivs_fd(&self, y: Point2) -> Result<[Mat2; 2], MetricError> {
        let h = self.h_fd;
        let mut out = [[[0.0; 2]; 2]; 2];
        for axis in 0..2 {
            let mut yp = y;
            let mut ym = y;
            yp[axis] += h;
            ym[axis] -= h;
            let gp = self.metric(yp)?;
            let gm = self.metric(ym)?;
            for i in 0..2 {
                for j in 0..2 {
                    out[axis][i][j] = (gp[i][j] - gm[i][j]) / (2.0 * h);
                }
            }
        }
        Ok(out)
    }

    /// Christoffel symbols of the second kind, indexed [k][i][j].
    pub fn christoffel(&self, y: Point2) -> Result<[[[f64; 2]; 2]; 2], MetricError> {
        if !self.contains(y) {
            return Err(MetricError::OutOfDomain(y[0], y[1]));
        }
        self.christoffel_unchecked(y)
    }

    /// As `christoffel` but without the domain check; the geodesic
    /// integrator calls this on transient out-of-band states.
    pub fn christoffel_unchecked(&self, y: Point2) -> Result<[[[f64; 2]; 2]; 2], MetricError> {
        match &self.family {
            MetricFamily::Flat | MetricFamily::TorusFlat { .. } => Ok([[[0.0; 2]; 2]; 2]),
            _ => {
                let ginv = self.metric_inv(y)?;
                let dg = self.metric_derivs(y)?;
                let mut gamma = [[[0.0; 2]; 2]; 2];
                for k in 0..2 {
                    for i in 0..2 {
                        for j in 0..2 {
                            let mut sum = 0.0;
                            for l in 0..2 {
                                sum += ginv[k][l] * (dg[i][j][l] + dg[j][i][l] - dg[l][i][j]);
                            }
                            gamma[k][i][j] = 0.5 * sum;
                        }
                    }
                }
                Ok(gamma)
            }
        }
    }

    /// Gauss curvature via the Brioschi formula.
    pub fn gauss_curvature(&self, y: Point2) -> Result<f64, MetricError> {
        if !self.contains(y) {
            return Err(MetricError::OutOfDomain(y[0], y[1]));
        }
        self.gauss_curvature_unchecked(y)
    }

    pub fn gauss_curvature_unchecked(&self, y: Point2) -> Result<f64, MetricError> {
        match &self.family {
            MetricFamily::Flat | MetricFamily::TorusFlat { .. } => Ok(0.0),
            _ => {
                let y = self.wrap(y);
                let g = self.metric(y)?;
                let (e, f, gg) = (g[0][0], g[0][1], g[1][1]);
                let dg = self.metric_derivs(y)?;
                let (e_u, e_v) = (dg[0][0][0], dg[1][0][0]);
                let (f_u, f_v) = (dg[0][0][1], dg[1][0][1]);
                let (g_u, g_v) = (dg[0][1][1], dg[1][1][1]);
                let (e_vv, g_uu, f_uv) = self.metric_second_derivs(y)?;
                let m1 = [
                    [-e_vv / 2.0 + f_uv - g_uu / 2.0, e_u / 2.0, f_u - e_v / 2.0],
                    [f_v - g_u / 2.0, e, f],
                    [g_v / 2.0, f, gg],
                ];
                let m2 = [
                    [0.0, e_v / 2.0, g_u / 2.0],
                    [e_v / 2.0, e, f],
                    [g_u / 2.0, f, gg],
                ];
                let den = e * gg - f * f;
                if den <= 0.0 {
                    return Err(MetricError::NotPositiveDefinite(y[0], y[1]));
                }
                Ok((det3(&m1) - det3(&m2)) / (den * den))
            }
        }
    }

    /// The three second derivatives the Brioschi formula needs:
    /// (E_vv, G_uu, F_uv).
    fn metric_second_derivs(&self, y: Point2) -> Result<(f64, f64, f64), MetricError> {
        match &self.family {
            MetricFamily::Sphere { radius } => {
                let r2 = radius * radius;
                Ok((0.0, 2.0 * r2 * (2.0 * y[0]).cos(), 0.0))
            }
            _ => {
                let h = self.h_fd2;
                let gm = |p: Point2| self.metric(p);
                let at = |du: f64, dv: f64| gm([y[0] + du, y[1] + dv]);
                let e_vv =
                    (at(0.0, h)?[0][0] - 2.0 * at(0.0, 0.0)?[0][0] + at(0.0, -h)?[0][0]) / (h * h);
                let g_uu =
                    (at(h, 0.0)?[1][1] - 2.0 * at(0.0, 0.0)?[1][1] + at(-h, 0.0)?[1][1]) / (h * h);
                let f_uv = (at(h, h)?[0][1] - at(h, -h)?[0][1] - at(-h, h)?[0][1]
                    + at(-h, -h)?[0][1])
                    / (4.0 * h * h);
                Ok((e_vv, g_uu, f_uv))
            }
        }
    }

    /// Samples `n` quasi-random in-domain points and checks that both metric
    /// eigenvalues are positive at each.
    pub fn check_positive_definite(&self, n: usize) -> Result<(), MetricError> {
        for k in 0..n {
            let y = self.halton_point(k);
            let g = self.metric(y)?;
            let ev = vec2::sym_eigenvalues(&g);
            if !(ev[0] > 0.0 && ev[1] > 0.0) || (g[0][1] - g[1][0]).abs() > 1e-12 {
                return Err(MetricError::NotPositiveDefinite(y[0], y[1]));
            }
        }
        Ok(())
    }

    /// k-th point of the Halton (2,3) sequence scaled to the domain.
    pub fn halton_point(&self, k: usize) -> Point2 {
        [
            self.min[0] + halton(k + 1, 2) * self.axis_len(0),
            self.min[1] + halton(k + 1, 3) * self.axis_len(1),
        ]
    }
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub(crate) fn halton(mut index: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn flat_christoffels_vanish() {
        let chart = MetricChart::flat([-2.0, -2.0], [2.0, 2.0]);
        let gamma = chart.christoffel([0.3, -1.2]).unwrap();
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    assert_eq!(gamma[k][i][j], 0.0);
                }
            }
        }
    }

    #[test]
    fn sphere_christoffel_closed_form() {
        let chart = MetricChart::sphere(1.0);
        let gamma = chart.christoffel([PI / 4.0, 1.0]).unwrap();
        // Gamma^theta_{phi phi} = -sin(theta) cos(theta) = -0.5 at pi/4
        assert!((gamma[0][1][1] + 0.5).abs() < 1e-12, "{}", gamma[0][1][1]);
        // Gamma^phi_{theta phi} = cot(theta) = 1 at pi/4
        assert!((gamma[1][0][1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn conformal_christoffel_matches_symbolic() {
        // phi = y1: Gamma^1_11 = d1 phi = 1; general conformal identity
        // Gamma^k_ij = d^k_i dj(phi) + d^k_j di(phi) - delta_ij dk(phi).
        let phi = Expression::parse("y1", &["y1", "y2"]).unwrap();
        let chart = MetricChart::new(
            MetricFamily::Conformal { phi },
            [-1.0, -1.0],
            [1.0, 1.0],
            [false, false],
        )
        .unwrap();
        let gamma = chart.christoffel([0.2, -0.4]).unwrap();
        let dphi = [1.0, 0.0];
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    let mut expect = 0.0;
                    if k == i {
                        expect += dphi[j];
                    }
                    if k == j {
                        expect += dphi[i];
                    }
                    if i == j {
                        expect -= dphi[k];
                    }
                    assert!(
                        (gamma[k][i][j] - expect).abs() < 1e-6,
                        "Gamma^{k}_{i}{j} = {} expected {expect}",
                        gamma[k][i][j]
                    );
                }
            }
        }
    }

    #[test]
    fn christoffel_symmetry_and_fd_agreement() {
        let chart = MetricChart::sphere(1.0);
        for k in 0..50 {
            let y = [0.3 + 2.4 * halton(k + 1, 2), 6.0 * halton(k + 1, 3)];
            let gamma = chart.christoffel(y).unwrap();
            for kk in 0..2 {
                for i in 0..2 {
                    assert_eq!(gamma[kk][i][1 - i], gamma[kk][1 - i][i]);
                }
            }
            // finite-difference derivatives agree with the analytic ones
            let dg_an = chart.metric_derivs(y).unwrap();
            let dg_fd = chart.metric_derivs_fd(y).unwrap();
            for a in 0..2 {
                for i in 0..2 {
                    for j in 0..2 {
                        assert!(
                            (dg_an[a][i][j] - dg_fd[a][i][j]).abs() <= 10.0 * chart.fd_step(),
                            "axis {a} entry {i}{j}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn curvature_flat_and_sphere() {
        let flat = MetricChart::flat([-1.0, -1.0], [1.0, 1.0]);
        assert_eq!(flat.gauss_curvature([0.1, 0.9]).unwrap(), 0.0);

        let sph = MetricChart::sphere(1.0);
        let k = sph.gauss_curvature([1.0, 2.0]).unwrap();
        assert!((k - 1.0).abs() < 1e-8, "K = {k}");

        let sph2 = MetricChart::sphere(2.0);
        let k = sph2.gauss_curvature([0.7, 0.3]).unwrap();
        assert!((k - 0.25).abs() < 1e-8, "K = {k}");
    }

    #[test]
    fn curvature_surface_of_revolution() {
        // Torus of revolution with arc-length profile r(s) = 2 + cos(s):
        // K = -r''(s)/r(s), at s = 0 this is 1/3.
        let profile = Expression::parse("2 + cos(s)", &["s"]).unwrap();
        let chart = MetricChart::new(
            MetricFamily::SurfaceOfRevolution { profile },
            [0.0, 0.0],
            [2.0 * PI, 2.0 * PI],
            [true, true],
        )
        .unwrap();
        let k = chart.gauss_curvature([0.0, 1.0]).unwrap();
        assert!((k - 1.0 / 3.0).abs() < 1e-5, "K = {k}");
        // oracle K = -r''/r at another point
        let s = 0.8f64;
        let oracle = s.cos() / (2.0 + s.cos());
        let k = chart.gauss_curvature([s, 0.0]).unwrap();
        assert!((k - oracle).abs() < 1e-5, "K = {k}, oracle {oracle}");
    }

    #[test]
    fn curvature_conformal_oracle() {
        // K = -exp(-2 phi) * laplacian(phi); phi = y1^2 - y2^2 is harmonic,
        // so K = 0; phi = (y1^2 + y2^2)/4 gives K = -exp(-2 phi).
        let phi = Expression::parse("y1^2 - y2^2", &["y1", "y2"]).unwrap();
        let chart = MetricChart::new(
            MetricFamily::Conformal { phi },
            [-0.8, -0.8],
            [0.8, 0.8],
            [false, false],
        )
        .unwrap();
        let k = chart.gauss_curvature([0.3, 0.1]).unwrap();
        assert!(k.abs() < 1e-5, "K = {k}");

        let phi = Expression::parse("(y1^2 + y2^2)/4", &["y1", "y2"]).unwrap();
        let chart = MetricChart::new(
            MetricFamily::Conformal { phi },
            [-0.8, -0.8],
            [0.8, 0.8],
            [false, false],
        )
        .unwrap();
        let y = [0.5f64, -0.2f64];
        let expect = -(-2.0 * (y[0] * y[0] + y[1] * y[1]) / 4.0).exp();
        let k = chart.gauss_curvature(y).unwrap();
        assert!((k - expect).abs() < 2e-5, "K = {k}, expected {expect}");
    }

    #[test]
    fn periodic_wrap_is_consistent() {
        let chart = MetricChart::torus_flat(1.0, 2.0);
        let a = chart.metric([0.25, 0.5]).unwrap();
        let b = chart.metric([1.25, 2.5]).unwrap();
        assert_eq!(a, b);
        let d = chart.wrap_diff([0.1, 0.0], [0.9, 0.0]);
        assert!((d[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn positive_definiteness_sampled() {
        let profile = Expression::parse("2 + cos(s)", &["s"]).unwrap();
        let chart = MetricChart::new(
            MetricFamily::SurfaceOfRevolution { profile },
            [0.0, 0.0],
            [2.0 * PI, 2.0 * PI],
            [true, true],
        )
        .unwrap();
        chart.check_positive_definite(1000).unwrap();
    }

    #[test]
    fn non_spd_expression_rejected() {
        let g11 = Expression::parse("1", &["y1", "y2"]).unwrap();
        let g12 = Expression::parse("0", &["y1", "y2"]).unwrap();
        let g22 = Expression::parse("y1", &["y1", "y2"]).unwrap(); // negative for y1 < 0
        let err = MetricChart::new(
            MetricFamily::Expression { g11, g12, g22 },
            [-1.0, -1.0],
            [1.0, 1.0],
            [false, false],
        );
        assert!(matches!(err, Err(MetricError::NotPositiveDefinite(_, _))));
    }

    #[test]
    fn out_of_domain_errors() {
        let chart = MetricChart::flat([-1.0, -1.0], [1.0, 1.0]);
        assert!(matches!(
            chart.christoffel([3.0, 0.0]),
            Err(MetricError::OutOfDomain(_, _))
        ));
        assert!(matches!(
            chart.gauss_curvature([0.0, -2.0]),
            Err(MetricError::OutOfDomain(_, _))
        ));
    }
}
