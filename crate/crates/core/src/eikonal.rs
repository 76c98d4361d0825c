//! Grid-based viscosity solver for the eikonal equation |grad u|_g = 1 and
//! its anisotropic form <A(x) grad u, grad u> = 1 (the latter is the eikonal
//! equation for the metric g = A^{-1}).
//!
//! The scheme is first-order upwind fast marching on the 8-neighbor stencil
//! triangulated into simplex sectors: the update at a node minimizes
//! lambda*u_a + (1-lambda)*u_b + |lambda p_a + (1-lambda) p_b|_{g(x)} over
//! each sector, which is monotone and causal whenever the sector is
//! non-obtuse in g. Diagonal metrics are always non-obtuse on this stencil;
//! rotated anisotropy is causal up to eigenvalue ratio ~4 (larger ratios are
//! flagged). After the march a few Gauss-Seidel polish sweeps drive the
//! fixpoint residual to rounding level, so mild causality violations cannot
//! leave a residual behind.

use crate::metric::{MetricChart, MetricError};
use crate::source::{SourceComponent, SourceError, SourceSet};
use crate::vec2::{self, Mat2, Point2, Vec2};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EikonalError {
    #[error("source set does not intersect the grid neighborhood")]
    SourceOutsideGrid,
    #[error("metric not positive definite at ({0}, {1})")]
    NotPositiveDefinite(f64, f64),
    #[error("grid spacing {h} does not divide the periodic axis length {len}")]
    PeriodMismatch { h: f64, len: f64 },
    #[error("grid bounds are empty")]
    BadBounds,
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Expr(#[from] crate::expr::ExprError),
}

/// Rectangular lattice with spacing h; periodic axes wrap (the duplicate
/// end node is dropped).
#[derive(Debug, Clone)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub origin: Point2,
    pub len: [f64; 2],
    pub periodic: [bool; 2],
}

impl Grid {
    pub fn from_bounds(
        min: Point2,
        max: Point2,
        h: f64,
        periodic: [bool; 2],
    ) -> Result<Grid, EikonalError> {
        if !(min[0] < max[0] && min[1] < max[1]) || h <= 0.0 {
            return Err(EikonalError::BadBounds);
        }
        let mut n = [0usize; 2];
        for a in 0..2 {
            let len = max[a] - min[a];
            if periodic[a] {
                let k = (len / h).round();
                if (k * h - len).abs() > 1e-9 * len {
                    return Err(EikonalError::PeriodMismatch { h, len });
                }
                n[a] = k as usize;
            } else {
                n[a] = (len / h + 1e-9).floor() as usize + 1;
            }
            if n[a] < 3 {
                return Err(EikonalError::BadBounds);
            }
        }
        Ok(Grid {
            nx: n[0],
            ny: n[1],
            h,
            origin: min,
            len: [max[0] - min[0], max[1] - min[1]],
            periodic,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    pub fn pos(&self, i: usize, j: usize) -> Point2 {
        [
            self.origin[0] + i as f64 * self.h,
            self.origin[1] + j as f64 * self.h,
        ]
    }

    /// Neighbor of (i, j) with offset (di, dj), respecting periodic wrap.
    pub fn neighbor(&self, i: usize, j: usize, di: i64, dj: i64) -> Option<(usize, usize)> {
        let wrap = |v: i64, n: usize, per: bool| -> Option<usize> {
            if per {
                Some(v.rem_euclid(n as i64) as usize)
            } else if v < 0 || v >= n as i64 {
                None
            } else {
                Some(v as usize)
            }
        };
        Some((
            wrap(i as i64 + di, self.nx, self.periodic[0])?,
            wrap(j as i64 + dj, self.ny, self.periodic[1])?,
        ))
    }

    /// Fractional grid coordinates of a chart point, if inside.
    pub fn locate(&self, p: Point2) -> Option<(f64, f64)> {
        let mut f = [0.0; 2];
        let n = [self.nx, self.ny];
        for a in 0..2 {
            let mut t = (p[a] - self.origin[a]) / self.h;
            if self.periodic[a] {
                t = t.rem_euclid(self.len[a] / self.h);
            } else if !(-1e-9..=(n[a] - 1) as f64 + 1e-9).contains(&t) {
                return None;
            }
            f[a] = t.clamp(0.0, (n[a] - 1) as f64);
        }
        Some((f[0], f[1]))
    }
}

const STENCIL: [(i64, i64); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

/// Grid-sampled viscosity solution of the eikonal problem.
#[derive(Debug, Clone)]
pub struct DistanceField {
    pub grid: Grid,
    pub u: Vec<f64>,
    /// Metric tensor per node (g = A^{-1} in the anisotropic case).
    pub metrics: Vec<Mat2>,
    pub source_mask: Vec<bool>,
    /// Values were accepted in nondecreasing order during the march.
    pub accepted_monotone: bool,
    /// Fixpoint residual of the discrete update operator after polishing.
    pub max_residual: f64,
    pub polish_sweeps: usize,
    /// Largest metric eigenvalue ratio seen on the grid.
    pub anisotropy_ratio: f64,
}

impl DistanceField {
    /// Bilinear interpolation of u at a chart point.
    pub fn value_at(&self, p: Point2) -> Option<f64> {
        let (fx, fy) = self.grid.locate(p)?;
        let i0 = (fx.floor() as usize).min(self.grid.nx - 1);
        let j0 = (fy.floor() as usize).min(self.grid.ny - 1);
        let tx = fx - i0 as f64;
        let ty = fy - j0 as f64;
        let (i1, j1) = (
            self.grid.neighbor(i0, j0, 1, 0).map(|(i, _)| i).unwrap_or(i0),
            self.grid.neighbor(i0, j0, 0, 1).map(|(_, j)| j).unwrap_or(j0),
        );
        let v00 = self.u[self.grid.idx(i0, j0)];
        let v10 = self.u[self.grid.idx(i1, j0)];
        let v01 = self.u[self.grid.idx(i0, j1)];
        let v11 = self.u[self.grid.idx(i1, j1)];
        if !(v00.is_finite() && v10.is_finite() && v01.is_finite() && v11.is_finite()) {
            return None;
        }
        Some(
            v00 * (1.0 - tx) * (1.0 - ty)
                + v10 * tx * (1.0 - ty)
                + v01 * (1.0 - tx) * ty
                + v11 * tx * ty,
        )
    }

    /// Central-difference covector gradient at a node.
    pub fn gradient(&self, i: usize, j: usize) -> Option<Vec2> {
        let xp = self.grid.neighbor(i, j, 1, 0)?;
        let xm = self.grid.neighbor(i, j, -1, 0)?;
        let yp = self.grid.neighbor(i, j, 0, 1)?;
        let ym = self.grid.neighbor(i, j, 0, -1)?;
        let g = |&(a, b): &(usize, usize)| self.u[self.grid.idx(a, b)];
        let vals = [g(&xp), g(&xm), g(&yp), g(&ym)];
        if vals.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some([
            (vals[0] - vals[1]) / (2.0 * self.grid.h),
            (vals[2] - vals[3]) / (2.0 * self.grid.h),
        ])
    }

    /// |v|_g of a covector at node (i, j), via the inverse metric.
    pub fn covector_norm(&self, i: usize, j: usize, v: Vec2) -> f64 {
        let ginv = vec2::inverse(&self.metrics[self.grid.idx(i, j)]);
        vec2::quad(&ginv, v, v).max(0.0).sqrt()
    }

    /// CSV export with columns x, y, u.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "x,y,u")?;
        for j in 0..self.grid.ny {
            for i in 0..self.grid.nx {
                let p = self.grid.pos(i, j);
                writeln!(w, "{},{},{}", p[0], p[1], self.u[self.grid.idx(i, j)])?;
            }
        }
        Ok(())
    }

    /// Binary dump: 32-byte header (magic "EIK1", nx, ny u32 LE, reserved,
    /// h f64 LE, origin as 2 f32 LE) followed by row-major f64 LE values.
    pub fn write_binary<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(b"EIK1")?;
        w.write_all(&(self.grid.nx as u32).to_le_bytes())?;
        w.write_all(&(self.grid.ny as u32).to_le_bytes())?;
        w.write_all(&0u32.to_le_bytes())?;
        w.write_all(&self.grid.h.to_le_bytes())?;
        w.write_all(&(self.grid.origin[0] as f32).to_le_bytes())?;
        w.write_all(&(self.grid.origin[1] as f32).to_le_bytes())?;
        for v in &self.u {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }
}

/// Solves |grad u|_g = 1 with u = 0 on K over the whole chart domain.
pub fn solve_eikonal(
    chart: &MetricChart,
    source: &SourceSet,
    h: f64,
) -> Result<DistanceField, EikonalError> {
    solve_eikonal_on(chart, source, chart.min(), chart.max(), h)
}

/// Solves on an explicit sub-rectangle of the chart.
pub fn solve_eikonal_on(
    chart: &MetricChart,
    source: &SourceSet,
    min: Point2,
    max: Point2,
    h: f64,
) -> Result<DistanceField, EikonalError> {
    let periodic = [
        chart.periodic()[0] && (max[0] - min[0] - chart.axis_len(0)).abs() < 1e-9,
        chart.periodic()[1] && (max[1] - min[1] - chart.axis_len(1)).abs() < 1e-9,
    ];
    let grid = Grid::from_bounds(min, max, h, periodic)?;
    let mut metrics = Vec::with_capacity(grid.node_count());
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let p = grid.pos(i, j);
            let g = chart.metric(p)?;
            check_spd(&g, p)?;
            metrics.push(g);
        }
    }
    let init = source_init(&grid, &metrics, source)?;
    Ok(march(grid, metrics, init))
}

/// Symmetric positive definite matrix field A(x) for the anisotropic
/// problem, expression-backed.
#[derive(Debug, Clone)]
pub struct AnisotropyField {
    pub a11: crate::expr::Expression,
    pub a12: crate::expr::Expression,
    pub a22: crate::expr::Expression,
}

impl AnisotropyField {
    pub fn constant(a: Mat2) -> AnisotropyField {
        use crate::expr::Expression;
        AnisotropyField {
            a11: Expression::constant(a[0][0], &["y1", "y2"]),
            a12: Expression::constant(a[0][1], &["y1", "y2"]),
            a22: Expression::constant(a[1][1], &["y1", "y2"]),
        }
    }

    pub fn matrix(&self, p: Point2) -> Result<Mat2, EikonalError> {
        let a = self.a11.eval2(p[0], p[1])?;
        let b = self.a12.eval2(p[0], p[1])?;
        let c = self.a22.eval2(p[0], p[1])?;
        let m = [[a, b], [b, c]];
        check_spd(&m, p)?;
        Ok(m)
    }
}

/// Solves <A(x) grad u, grad u> = 1 with u = 0 on K, i.e. the eikonal
/// problem for the metric g = A^{-1}.
pub fn solve_anisotropic(
    min: Point2,
    max: Point2,
    aniso: &AnisotropyField,
    source: &SourceSet,
    h: f64,
) -> Result<DistanceField, EikonalError> {
    let grid = Grid::from_bounds(min, max, h, [false, false])?;
    let mut metrics = Vec::with_capacity(grid.node_count());
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let p = grid.pos(i, j);
            let a = aniso.matrix(p)?;
            let mut g = vec2::inverse(&a);
            // normalize -0.0 so A = I reproduces the isotropic field bit
            // for bit
            g[0][1] += 0.0;
            g[1][0] += 0.0;
            metrics.push(g);
        }
    }
    let init = source_init(&grid, &metrics, source)?;
    Ok(march(grid, metrics, init))
}

fn check_spd(g: &Mat2, p: Point2) -> Result<(), EikonalError> {
    let ev = vec2::sym_eigenvalues(g);
    if !(ev[0] > 0.0) {
        return Err(EikonalError::NotPositiveDefinite(p[0], p[1]));
    }
    Ok(())
}

/// Exact-to-second-order source initialization: every node within 2h
/// (metric distance) of K gets the local metric distance to K.
fn source_init(
    grid: &Grid,
    metrics: &[Mat2],
    source: &SourceSet,
) -> Result<Vec<(usize, f64)>, EikonalError> {
    let h = grid.h;
    let reach_cap = grid.nx.max(grid.ny) as i64;

    let wrap_diff = |a: Point2, b: Point2| -> Vec2 {
        let mut d = vec2::sub(a, b);
        for axis in 0..2 {
            if grid.periodic[axis] {
                d[axis] -= (d[axis] / grid.len[axis]).round() * grid.len[axis];
            }
        }
        d
    };

    let mut init: Vec<f64> = vec![f64::INFINITY; grid.node_count()];
    let mut mark = |p: Point2, init: &mut Vec<f64>, dist_fn: &dyn Fn(Point2, &Mat2) -> f64| {
        let (fx, fy) = match grid.locate(p) {
            Some(f) => f,
            None => return,
        };
        let (ci, cj) = (fx.round() as usize, fy.round() as usize);
        // chart-units search box covering metric distance 2h around p,
        // sized by the local metric
        let ev = vec2::sym_eigenvalues(&metrics[grid.idx(ci, cj)]);
        let inv_scale = if ev[0] > 0.0 { 1.0 / ev[0].sqrt() } else { 1.0 };
        let reach = (((2.0 * h * inv_scale + h) / h).ceil() as i64).min(reach_cap);
        for dj in -reach..=reach {
            for di in -reach..=reach {
                if let Some((i, j)) = grid.neighbor(ci, cj, di, dj) {
                    let idx = grid.idx(i, j);
                    let x = grid.pos(i, j);
                    let d = dist_fn(x, &metrics[idx]);
                    if d < init[idx] {
                        init[idx] = d;
                    }
                }
            }
        }
    };

    for comp in &source.components {
        match comp {
            SourceComponent::Point { at } => {
                let p = *at;
                mark(p, &mut init, &|x, g| {
                    let d = wrap_diff(x, p);
                    vec2::quad(g, d, d).max(0.0).sqrt()
                });
            }
            SourceComponent::Curve(c) => {
                let m = ((c.period / h).ceil() as usize * 4).max(1024);
                let ds = c.period / m as f64;
                for k in 0..m {
                    let s = c.period * k as f64 / m as f64;
                    let p = c.point(s)?;
                    let curve = c.clone();
                    mark(p, &mut init, &move |x, g| {
                        // refine the curve parameter around s by golden
                        // section
                        let eval = |t: f64| {
                            let q = curve.point(t).unwrap_or(p);
                            let d = wrap_diff(x, q);
                            vec2::quad(g, d, d).max(0.0).sqrt()
                        };
                        let (mut lo, mut hi) = (s - 2.0 * ds, s + 2.0 * ds);
                        for _ in 0..40 {
                            let m1 = lo + (hi - lo) * 0.382;
                            let m2 = lo + (hi - lo) * 0.618;
                            if eval(m1) < eval(m2) {
                                hi = m2;
                            } else {
                                lo = m1;
                            }
                        }
                        eval(0.5 * (lo + hi))
                    });
                }
            }
            SourceComponent::Polygon(poly) => {
                let per = poly.perimeter();
                let m = ((per / h).ceil() as usize * 2).max(512);
                let n_pts = poly.points.len();
                for k in 0..m {
                    let s = per * k as f64 / m as f64;
                    let p = poly.point(s);
                    let poly = poly.clone();
                    mark(p, &mut init, &move |x, g| {
                        // exact min over all edges in the local metric
                        let mut best = f64::INFINITY;
                        for e in 0..n_pts {
                            let a = poly.points[e];
                            let b = poly.points[(e + 1) % n_pts];
                            let ab = vec2::sub(b, a);
                            let ax = wrap_diff(x, a);
                            let denom = vec2::quad(g, ab, ab);
                            let t = if denom > 0.0 {
                                (vec2::quad(g, ax, ab) / denom).clamp(0.0, 1.0)
                            } else {
                                0.0
                            };
                            let d = vec2::sub(ax, vec2::scale(ab, t));
                            best = best.min(vec2::quad(g, d, d).max(0.0).sqrt());
                        }
                        best
                    });
                }
            }
        }
    }

    let out: Vec<(usize, f64)> = init
        .iter()
        .enumerate()
        .filter(|(_, d)| **d <= 2.0 * h)
        .map(|(i, d)| (i, *d))
        .collect();
    if out.is_empty() {
        return Err(EikonalError::SourceOutsideGrid);
    }
    Ok(out)
}

#[derive(PartialEq)]
struct HeapEntry {
    value: f64,
    idx: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap with deterministic index tie-break
        other
            .value
            .partial_cmp(&self.value)
            .unwrap_or(Ordering::Equal)
            .then(other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Minimizes lambda*ua + (1-lambda)*ub + |lambda pa + (1-lambda) pb|_g over
/// lambda in [0, 1]. Candidate interior stationary points come from the
/// squared optimality condition; evaluating f at any candidate is always a
/// valid upper bound, so spurious roots are harmless.
fn simplex_update(g: &Mat2, pa: Vec2, ua: f64, pb: Vec2, ub: f64) -> f64 {
    let dp = vec2::sub(pa, pb);
    let a = vec2::quad(g, dp, dp);
    let b = 2.0 * vec2::quad(g, dp, pb);
    let c = vec2::quad(g, pb, pb);
    let du = ua - ub;
    let f = |lam: f64| ub + lam * du + (a * lam * lam + b * lam + c).max(0.0).sqrt();
    let mut best = f(0.0).min(f(1.0));
    let k = a - du * du;
    let qa = 4.0 * a * k;
    let qb = 4.0 * b * k;
    let qc = b * b - 4.0 * du * du * c;
    if qa.abs() > f64::MIN_POSITIVE {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            for lam in [(-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa)] {
                if lam > 0.0 && lam < 1.0 {
                    best = best.min(f(lam));
                }
            }
        }
    } else if qb.abs() > f64::MIN_POSITIVE {
        let lam = -qc / qb;
        if lam > 0.0 && lam < 1.0 {
            best = best.min(f(lam));
        }
    }
    best
}

/// Best update for node (i, j) from neighbors allowed by the predicate.
fn node_update(
    grid: &Grid,
    metrics: &[Mat2],
    u: &[f64],
    usable: impl Fn(usize) -> bool,
    i: usize,
    j: usize,
) -> f64 {
    let h = grid.h;
    let g = &metrics[grid.idx(i, j)];
    let mut vals: [Option<(Vec2, f64)>; 8] = [None; 8];
    for (k, (di, dj)) in STENCIL.iter().enumerate() {
        if let Some((ni, nj)) = grid.neighbor(i, j, *di, *dj) {
            let idx = grid.idx(ni, nj);
            if usable(idx) && u[idx].is_finite() {
                vals[k] = Some(([*di as f64 * h, *dj as f64 * h], u[idx]));
            }
        }
    }
    let mut best = f64::INFINITY;
    for k in 0..8 {
        if let Some((p, uv)) = vals[k] {
            best = best.min(uv + vec2::quad(g, p, p).max(0.0).sqrt());
            if let Some((p2, uv2)) = vals[(k + 1) % 8] {
                best = best.min(simplex_update(g, p, uv, p2, uv2));
            }
        }
    }
    best
}

fn march(grid: Grid, metrics: Vec<Mat2>, init: Vec<(usize, f64)>) -> DistanceField {
    const ACCEPTED: u8 = 2;
    const TRIAL: u8 = 1;

    let n = grid.node_count();
    let mut u = vec![f64::INFINITY; n];
    let mut state = vec![0u8; n];
    let mut source_mask = vec![false; n];
    let mut heap = BinaryHeap::new();

    for &(idx, d) in &init {
        if d < u[idx] {
            u[idx] = d;
        }
        source_mask[idx] = true;
        state[idx] = TRIAL;
    }
    for &(idx, _) in &init {
        heap.push(HeapEntry { value: u[idx], idx });
    }

    let mut last_accepted = f64::NEG_INFINITY;
    let mut monotone = true;
    while let Some(entry) = heap.pop() {
        let idx = entry.idx;
        if state[idx] == ACCEPTED || entry.value > u[idx] + 1e-15 {
            continue;
        }
        state[idx] = ACCEPTED;
        if u[idx] < last_accepted - 1e-12 {
            monotone = false;
        }
        last_accepted = last_accepted.max(u[idx]);

        let (i, j) = grid.coords(idx);
        for (di, dj) in STENCIL {
            if let Some((ni, nj)) = grid.neighbor(i, j, di, dj) {
                let nidx = grid.idx(ni, nj);
                if state[nidx] == ACCEPTED || source_mask[nidx] {
                    continue;
                }
                let cand = node_update(&grid, &metrics, &u, |k| state[k] == ACCEPTED, ni, nj);
                if cand < u[nidx] - 1e-15 {
                    u[nidx] = cand;
                    state[nidx] = TRIAL;
                    heap.push(HeapEntry { value: cand, idx: nidx });
                }
            }
        }
    }

    // Gauss-Seidel polish: sweep in four orderings until the discrete
    // fixpoint residual is at rounding level.
    let mut sweeps = 0;
    for _ in 0..20 {
        let mut changed = 0.0f64;
        for pass in 0..4 {
            for jj in 0..grid.ny {
                for ii in 0..grid.nx {
                    let (i, j) = match pass {
                        0 => (ii, jj),
                        1 => (grid.nx - 1 - ii, jj),
                        2 => (ii, grid.ny - 1 - jj),
                        _ => (grid.nx - 1 - ii, grid.ny - 1 - jj),
                    };
                    let idx = grid.idx(i, j);
                    if source_mask[idx] {
                        continue;
                    }
                    let cand = node_update(&grid, &metrics, &u, |_| true, i, j);
                    if cand < u[idx] {
                        changed = changed.max(u[idx] - cand);
                        u[idx] = cand;
                    }
                }
            }
        }
        sweeps += 1;
        if changed < 1e-13 {
            break;
        }
    }

    let mut max_residual = 0.0f64;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let idx = grid.idx(i, j);
            if source_mask[idx] || !u[idx].is_finite() {
                continue;
            }
            let r = u[idx] - node_update(&grid, &metrics, &u, |_| true, i, j);
            max_residual = max_residual.max(r.abs());
        }
    }

    let mut ratio: f64 = 1.0;
    for g in &metrics {
        let ev = vec2::sym_eigenvalues(g);
        if ev[0] > 0.0 {
            ratio = ratio.max(ev[1] / ev[0]);
        }
    }
    if ratio > 4.0 {
        log::warn!("metric anisotropy ratio {ratio:.2} exceeds the documented stencil limit 4");
    }

    DistanceField {
        grid,
        u,
        metrics,
        source_mask,
        accepted_monotone: monotone,
        max_residual,
        polish_sweeps: sweeps,
        anisotropy_ratio: ratio,
    }
}

/// Results of the sub/superdifferential sign checks at one probe point.
#[derive(Debug, Clone)]
pub struct ViscosityProbe {
    pub point: Point2,
    /// | |grad u|_g - 1 | from central differences, when available.
    pub smooth_residual: Option<f64>,
    pub superdiff_count: usize,
    pub subdiff_count: usize,
    /// max over accepted v in the superdifferential of (|v|_g - 1).
    pub superdiff_violation: f64,
    /// max over accepted v in the subdifferential of (1 - |v|_g).
    pub subdiff_violation: f64,
}

/// Tests the viscosity sign conditions at probe points with touching
/// paraboloids: curvature 1/(2*10h), 64 gradient directions, magnitudes up
/// to twice the unit covector scale. A candidate covector is accepted into
/// the super(sub)differential when its paraboloid stays above (below) the
/// grid values on the 10h-ball around the probe node.
pub fn viscosity_residual_check(
    field: &DistanceField,
    probes: &[Point2],
) -> Result<Vec<ViscosityProbe>, EikonalError> {
    let grid = &field.grid;
    let h = grid.h;
    let reach = 10i64;
    let curvature = 1.0 / (20.0 * h);
    let mut out = Vec::with_capacity(probes.len());
    for &p in probes {
        let (fx, fy) = grid.locate(p).ok_or(EikonalError::BadBounds)?;
        let (pi, pj) = (fx.round() as usize, fy.round() as usize);
        let pidx = grid.idx(pi, pj);
        let up = field.u[pidx];

        // collect the neighborhood ball once
        let mut ball = Vec::new();
        for dj in -reach..=reach {
            for di in -reach..=reach {
                if di == 0 && dj == 0 {
                    continue;
                }
                if let Some((i, j)) = grid.neighbor(pi, pj, di, dj) {
                    let r = [di as f64 * h, dj as f64 * h];
                    if vec2::norm(r) <= reach as f64 * h + 1e-12 {
                        let val = field.u[grid.idx(i, j)];
                        if val.is_finite() {
                            ball.push((r, val));
                        }
                    }
                }
            }
        }

        let ginv = vec2::inverse(&field.metrics[pidx]);
        let gev = vec2::sym_eigenvalues(&field.metrics[pidx]);
        let vmax = 2.0 * gev[1].sqrt();
        let mut sup_count = 0;
        let mut sub_count = 0;
        let mut sup_viol = f64::NEG_INFINITY;
        let mut sub_viol = f64::NEG_INFINITY;
        let ndir = 64;
        let nmag = 80;
        for kd in 0..ndir {
            let th = 2.0 * std::f64::consts::PI * kd as f64 / ndir as f64;
            let dir = [th.cos(), th.sin()];
            for km in 0..=nmag {
                let v = vec2::scale(dir, vmax * km as f64 / nmag as f64);
                let mut touch_above = true;
                let mut touch_below = true;
                for &(r, val) in &ball {
                    let lin = up + vec2::dot(v, r);
                    let quad = curvature * vec2::dot(r, r);
                    if lin + quad < val - 1e-9 {
                        touch_above = false;
                    }
                    if lin - quad > val + 1e-9 {
                        touch_below = false;
                    }
                    if !(touch_above || touch_below) {
                        break;
                    }
                }
                let vnorm = vec2::quad(&ginv, v, v).max(0.0).sqrt();
                if touch_above {
                    sup_count += 1;
                    sup_viol = sup_viol.max(vnorm - 1.0);
                }
                if touch_below {
                    sub_count += 1;
                    sub_viol = sub_viol.max(1.0 - vnorm);
                }
            }
        }

        let smooth_residual = field
            .gradient(pi, pj)
            .map(|gr| (vec2::quad(&ginv, gr, gr).max(0.0).sqrt() - 1.0).abs());

        out.push(ViscosityProbe {
            point: p,
            smooth_residual,
            superdiff_count: sup_count,
            subdiff_count: sub_count,
            superdiff_violation: if sup_count > 0 { sup_viol } else { 0.0 },
            subdiff_violation: if sub_count > 0 { sub_viol } else { 0.0 },
        });
    }
    Ok(out)
}

/// The transformed field v = -exp(-u) with its residual report for
/// |grad v|_g + v = 0.
#[derive(Debug, Clone)]
pub struct KruzhkovReport {
    pub v: Vec<f64>,
    /// fraction of interior smooth nodes with residual <= 10h
    pub ok_fraction: f64,
    pub checked_nodes: usize,
    pub range_ok: bool,
    pub source_values_ok: bool,
}

pub fn kruzhkov_transform(field: &DistanceField) -> KruzhkovReport {
    let grid = &field.grid;
    let h = grid.h;
    let v: Vec<f64> = field.u.iter().map(|&u| -(-u).exp()).collect();

    let mut range_ok = true;
    for &val in &v {
        if !(-1.0..0.0).contains(&val) {
            range_ok = false;
        }
    }
    // the source band is 2h wide; v = -1 +- h is expected where u <= h
    let mut source_values_ok = true;
    for (idx, &mask) in field.source_mask.iter().enumerate() {
        if mask && field.u[idx] <= h && (v[idx] + 1.0).abs() > h {
            source_values_ok = false;
        }
    }

    // interior smooth nodes: skip grid boundary, source nodes and nodes
    // adjacent to a source node
    let mut checked = 0usize;
    let mut ok = 0usize;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let idx = grid.idx(i, j);
            if field.source_mask[idx] {
                continue;
            }
            let mut skip = false;
            let mut grad = [0.0; 2];
            let mut have = true;
            for (axis, (di, dj)) in [(1i64, 0i64), (0, 1)].iter().enumerate() {
                match (grid.neighbor(i, j, *di, *dj), grid.neighbor(i, j, -di, -dj)) {
                    (Some((ip, jp)), Some((im, jm))) => {
                        let a = grid.idx(ip, jp);
                        let b = grid.idx(im, jm);
                        if field.source_mask[a] || field.source_mask[b] {
                            skip = true;
                        }
                        grad[axis] = (v[a] - v[b]) / (2.0 * h);
                    }
                    _ => have = false,
                }
            }
            if !have || skip {
                continue;
            }
            let ginv = vec2::inverse(&field.metrics[idx]);
            let gnorm = vec2::quad(&ginv, grad, grad).max(0.0).sqrt();
            let residual = (gnorm + v[idx]).abs();
            checked += 1;
            if residual <= 10.0 * h {
                ok += 1;
            }
        }
    }

    KruzhkovReport {
        v,
        ok_fraction: if checked > 0 { ok as f64 / checked as f64 } else { 1.0 },
        checked_nodes: checked,
        range_ok,
        source_values_ok,
    }
}

/// Discrete residual check for the squared-distance problem: w = u^2/2
/// should satisfy |grad w|^2 = 2w; reports the fraction of interior nodes
/// with | |grad w|^2 - 2w | <= 20h (1 + u) and the number checked.
pub fn squared_distance_consistency(field: &DistanceField) -> (f64, usize) {
    let grid = &field.grid;
    let h = grid.h;
    let w: Vec<f64> = field.u.iter().map(|&u| 0.5 * u * u).collect();
    let mut checked = 0usize;
    let mut ok = 0usize;
    for j in 1..grid.ny.saturating_sub(1) {
        for i in 1..grid.nx.saturating_sub(1) {
            let idx = grid.idx(i, j);
            if field.source_mask[idx] || !field.u[idx].is_finite() {
                continue;
            }
            let neighbors_ok = STENCIL.iter().all(|(di, dj)| {
                grid.neighbor(i, j, *di, *dj)
                    .map(|(a, b)| !field.source_mask[grid.idx(a, b)])
                    .unwrap_or(false)
            });
            if !neighbors_ok {
                continue;
            }
            let grad = [
                (w[grid.idx(i + 1, j)] - w[grid.idx(i - 1, j)]) / (2.0 * h),
                (w[grid.idx(i, j + 1)] - w[grid.idx(i, j - 1)]) / (2.0 * h),
            ];
            let ginv = vec2::inverse(&field.metrics[idx]);
            let g2 = vec2::quad(&ginv, grad, grad);
            checked += 1;
            if (g2 - 2.0 * w[idx]).abs() <= 20.0 * h * (1.0 + field.u[idx]) {
                ok += 1;
            }
        }
    }
    (if checked > 0 { ok as f64 / checked as f64 } else { 1.0 }, checked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::MetricChart;
    use std::f64::consts::PI;

    #[test]
    fn flat_point_source_distance() {
        let chart = MetricChart::flat([-1.0, -1.0], [1.0, 1.0]);
        let k = SourceSet::point([0.0, 0.0]);
        let h = 0.01;
        let field = solve_eikonal(&chart, &k, h).unwrap();
        let u = field.value_at([0.3, 0.4]).unwrap();
        assert!((u - 0.5).abs() <= 3.0 * h, "u = {u}");
        assert!(field.accepted_monotone);
        assert!(field.max_residual <= 1e-10, "residual {}", field.max_residual);
        assert!(field.u.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn flat_circle_distance() {
        let chart = MetricChart::flat([-2.0, -2.0], [2.0, 2.0]);
        let k = SourceSet::circle([0.0, 0.0], 1.0);
        let h = 0.01;
        let field = solve_eikonal(&chart, &k, h).unwrap();
        let u = field.value_at([0.25, 0.0]).unwrap();
        assert!((u - 0.75).abs() <= 3.0 * h, "u = {u}");
        let u = field.value_at([1.5, 0.7]).unwrap();
        let expect = (1.5f64 * 1.5 + 0.7 * 0.7).sqrt() - 1.0;
        assert!((u - expect).abs() <= 3.0 * h, "u = {u}, expect {expect}");
    }

    #[test]
    fn sphere_equator_distance() {
        let chart = MetricChart::sphere(1.0);
        let k = SourceSet::curve("pi/2", "s", 2.0 * PI).unwrap();
        let h = 2.0 * PI / 256.0;
        let field = solve_eikonal(&chart, &k, h).unwrap();
        let u = field.value_at([PI / 4.0, 1.3]).unwrap();
        assert!((u - PI / 4.0).abs() <= 5.0 * h, "u = {u} vs {}", PI / 4.0);
    }

    #[test]
    fn anisotropic_closed_form() {
        let k = SourceSet::point([0.0, 0.0]);
        let aniso = AnisotropyField::constant([[1.0, 0.0], [0.0, 4.0]]);
        let h = 0.02;
        let field = solve_anisotropic([-1.5, -1.5], [1.5, 1.5], &aniso, &k, h).unwrap();
        let u = field.value_at([1.0, 1.0]).unwrap();
        let expect = 1.25f64.sqrt();
        assert!((u - expect).abs() <= 5.0 * h, "u = {u}, expect {expect}");
    }

    #[test]
    fn anisotropic_identity_matches_isotropic_bitwise() {
        let k = SourceSet::point([0.1, -0.2]);
        let aniso = AnisotropyField::constant([[1.0, 0.0], [0.0, 1.0]]);
        let h = 0.05;
        let a = solve_anisotropic([-1.0, -1.0], [1.0, 1.0], &aniso, &k, h).unwrap();
        let chart = MetricChart::flat([-1.0, -1.0], [1.0, 1.0]);
        let b = solve_eikonal(&chart, &k, h).unwrap();
        assert_eq!(a.u.len(), b.u.len());
        for (x, y) in a.u.iter().zip(b.u.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn non_spd_anisotropy_rejected() {
        let k = SourceSet::point([0.0, 0.0]);
        let aniso = AnisotropyField::constant([[1.0, 0.0], [0.0, -2.0]]);
        let err = solve_anisotropic([-1.0, -1.0], [1.0, 1.0], &aniso, &k, 0.1);
        assert!(matches!(err, Err(EikonalError::NotPositiveDefinite(_, _))));
    }

    #[test]
    fn source_outside_grid_rejected() {
        let chart = MetricChart::flat([-1.0, -1.0], [1.0, 1.0]);
        let k = SourceSet::point([5.0, 5.0]);
        assert!(matches!(
            solve_eikonal(&chart, &k, 0.1),
            Err(EikonalError::SourceOutsideGrid)
        ));
    }

    #[test]
    fn zero_set_stays_near_source() {
        let chart = MetricChart::flat([-1.0, -1.0], [1.0, 1.0]);
        let k = SourceSet::circle([0.0, 0.0], 0.5);
        let field = solve_eikonal(&chart, &k, 0.02).unwrap();
        assert!(field.accepted_monotone);
        for j in 0..field.grid.ny {
            for i in 0..field.grid.nx {
                let idx = field.grid.idx(i, j);
                let p = field.grid.pos(i, j);
                let true_d = (vec2::norm(p) - 0.5).abs();
                if field.u[idx] < 1e-12 {
                    assert!(true_d < 2.5 * 0.02, "zero u far from K at {p:?}");
                }
            }
        }
    }

    #[test]
    fn viscosity_conditions_at_probes() {
        let chart = MetricChart::flat([-2.0, -2.0], [2.0, 2.0]);
        let k = SourceSet::point([0.0, 0.0]);
        let h = 0.02;
        let field = solve_eikonal(&chart, &k, h).unwrap();
        let probes = vec![[1.0, 0.0]];
        let r = &viscosity_residual_check(&field, &probes).unwrap()[0];
        assert!(r.smooth_residual.unwrap() <= 5.0 * h, "{:?}", r.smooth_residual);
        assert!(r.superdiff_count > 0 && r.subdiff_count > 0);
        assert!(r.superdiff_violation <= 10.0 * h, "sup viol {}", r.superdiff_violation);
        assert!(r.subdiff_violation <= 10.0 * h, "sub viol {}", r.subdiff_violation);
    }

    #[test]
    fn viscosity_at_singular_midline() {
        // two point sources: the midline is singular, the subdifferential
        // must be empty there while superdifferential gradients stay
        // bounded by 1 + 10h
        let chart = MetricChart::flat([-2.0, -2.0], [2.0, 2.0]);
        let k = SourceSet::new(vec![
            SourceComponent::Point { at: [-1.0, 0.0] },
            SourceComponent::Point { at: [1.0, 0.0] },
        ]);
        let h = 0.02;
        let field = solve_eikonal(&chart, &k, h).unwrap();
        let r = &viscosity_residual_check(&field, &[[0.0, 0.0]]).unwrap()[0];
        assert_eq!(r.subdiff_count, 0, "subdifferential should be empty at a kink");
        assert!(r.superdiff_count > 0);
        assert!(r.superdiff_violation <= 10.0 * h, "sup viol {}", r.superdiff_violation);
    }

    #[test]
    fn kruzhkov_report() {
        let chart = MetricChart::flat([-2.0, -2.0], [2.0, 2.0]);
        let k = SourceSet::point([0.0, 0.0]);
        let h = 0.01;
        let field = solve_eikonal(&chart, &k, h).unwrap();
        let report = kruzhkov_transform(&field);
        assert!(report.range_ok);
        assert!(report.source_values_ok);
        assert!(report.ok_fraction >= 0.99, "ok fraction {}", report.ok_fraction);
        // v = -1/2 where u = ln 2
        let target = std::f64::consts::LN_2;
        let (idx, _) = field
            .u
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (a.1 - target)
                    .abs()
                    .partial_cmp(&(b.1 - target).abs())
                    .unwrap()
            })
            .unwrap();
        assert!((report.v[idx] + 0.5).abs() <= 2.0 * h, "v = {}", report.v[idx]);
    }

    #[test]
    fn squared_distance_residual() {
        let chart = MetricChart::flat([-2.0, -2.0], [2.0, 2.0]);
        let k = SourceSet::point([0.0, 0.0]);
        let field = solve_eikonal(&chart, &k, 0.02).unwrap();
        let (frac, checked) = squared_distance_consistency(&field);
        assert!(checked > 1000);
        assert!(frac >= 0.99, "fraction {frac}");
    }

    #[test]
    fn binary_export_layout_and_determinism() {
        let chart = MetricChart::flat([-1.0, -1.0], [1.0, 1.0]);
        let k = SourceSet::point([0.0, 0.0]);
        let field = solve_eikonal(&chart, &k, 0.1).unwrap();
        let mut buf1 = Vec::new();
        field.write_binary(&mut buf1).unwrap();
        assert_eq!(&buf1[0..4], b"EIK1");
        assert_eq!(buf1.len(), 32 + field.u.len() * 8);
        let field2 = solve_eikonal(&chart, &k, 0.1).unwrap();
        let mut buf2 = Vec::new();
        field2.write_binary(&mut buf2).unwrap();
        assert_eq!(buf1, buf2);
    }

    #[test]
    fn periodic_grid_wraps() {
        let chart = MetricChart::torus_flat(1.0, 1.0);
        let k = SourceSet::point([0.0, 0.0]);
        let h = 1.0 / 64.0;
        let field = solve_eikonal(&chart, &k, h).unwrap();
        // distance at (0.9, 0.0) wraps around: 0.1, not 0.9
        let u = field.value_at([0.9, 0.0]).unwrap();
        assert!((u - 0.1).abs() <= 3.0 * h, "u = {u}");
        let u = field.value_at([0.5, 0.5]).unwrap();
        let expect = 0.5f64 * std::f64::consts::SQRT_2;
        assert!((u - expect).abs() <= 4.0 * h, "u = {u}, expect {expect}");
    }
}
