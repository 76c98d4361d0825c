//! Cut times and the cut locus point cloud.
//!
//! A normal geodesic stops being minimal at its cut time sigma, located here
//! as the first parameter where the geodesic's arc length exceeds an
//! independent distance oracle by more than tol_min, capped by the first
//! focal time (a geodesic is never minimal past its first focal point).
//! Oracles: the eikonal grid solve, a splatted geodesic-fan field, or a
//! brute-force nearest-sample query for flat-family charts. Cut points are
//! clustered; a cluster's minimal-geodesic count is estimated from the
//! number of parameter-contiguous ray families it contains.

use crate::eikonal::{DistanceField, EikonalError, Grid};
use crate::geodesic::{self, TerminalStatus, Trajectory};
use crate::jacobi::{FocalOutcome, JacobiError, JacobiField};
use crate::metric::MetricChart;
use crate::source::{NormalRay, RayParam, Side, SourceError, SourceSet};
use crate::vec2::{self, Point2};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CutError {
    #[error("minimality oracle has no value at ({0}, {1})")]
    OracleUnavailable(f64, f64),
    #[error("geodesic fan oracle left {0} of {1} grid nodes uncovered")]
    FanCoverage(usize, usize),
    #[error(transparent)]
    Eikonal(#[from] EikonalError),
    #[error(transparent)]
    Jacobi(#[from] JacobiError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Geodesic(#[from] crate::geodesic::GeodesicError),
}

/// Numerical parameters tying cut detection to the oracle accuracy.
#[derive(Debug, Clone)]
pub struct CutParams {
    /// RK4 step for geodesic integration.
    pub rk_dt: f64,
    /// Search horizon for sigma.
    pub horizon: f64,
    /// Minimality slack: residuals below this are treated as minimal
    /// (default 3h, grid-error dominated).
    pub tol_min: f64,
    /// Cut points closer than this cluster together (default 5h).
    pub cluster_radius: f64,
    /// Coarse residual scan step, in RK steps.
    pub scan_stride: usize,
}

impl CutParams {
    /// Defaults tied to a grid spacing h.
    pub fn for_grid(h: f64, horizon: f64) -> CutParams {
        CutParams {
            rk_dt: 1e-3,
            horizon,
            tol_min: 3.0 * h,
            cluster_radius: 5.0 * h,
            scan_stride: 10,
        }
    }
}

/// Independent computation of d_K used to test minimality of geodesics.
pub enum MinimalityOracle {
    /// Upwind eikonal solve.
    Eikonal(DistanceField),
    /// Distance field splatted from a dense geodesic fan.
    Fan(FanOracle),
    /// Brute-force nearest sample of K; exact on flat-family charts.
    Exact { chart: MetricChart, points: Vec<Point2> },
}

impl MinimalityOracle {
    pub fn distance(&self, p: Point2) -> Option<f64> {
        match self {
            MinimalityOracle::Eikonal(field) => field.value_at(p),
            MinimalityOracle::Fan(fan) => fan.value_at(p),
            MinimalityOracle::Exact { chart, points } => points
                .iter()
                .map(|&q| chart.short_dist(p, q))
                .min_by(|a, b| a.partial_cmp(b).unwrap()),
        }
    }

    /// Brute-force oracle over dense source samples.
    pub fn exact(chart: &MetricChart, source: &SourceSet, samples: usize) -> Result<Self, CutError> {
        Ok(MinimalityOracle::Exact {
            chart: chart.clone(),
            points: source.dense_points(samples)?,
        })
    }
}

/// Grid field built by splatting candidate distances t + |x - p|_g along a
/// dense fan of normal geodesics; an upper bound of d_K converging with fan
/// density, independent of the upwind solver.
pub struct FanOracle {
    pub grid: Grid,
    pub d: Vec<f64>,
    pub covered: usize,
}

impl FanOracle {
    pub fn value_at(&self, p: Point2) -> Option<f64> {
        let (fx, fy) = self.grid.locate(p)?;
        let i0 = (fx.floor() as usize).min(self.grid.nx - 1);
        let j0 = (fy.floor() as usize).min(self.grid.ny - 1);
        let tx = fx - i0 as f64;
        let ty = fy - j0 as f64;
        let i1 = self.grid.neighbor(i0, j0, 1, 0).map(|(i, _)| i).unwrap_or(i0);
        let j1 = self.grid.neighbor(i0, j0, 0, 1).map(|(_, j)| j).unwrap_or(j0);
        let vals = [
            self.d[self.grid.idx(i0, j0)],
            self.d[self.grid.idx(i1, j0)],
            self.d[self.grid.idx(i0, j1)],
            self.d[self.grid.idx(i1, j1)],
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some(
            vals[0] * (1.0 - tx) * (1.0 - ty)
                + vals[1] * tx * (1.0 - ty)
                + vals[2] * (1.0 - tx) * ty
                + vals[3] * tx * ty,
        )
    }
}

/// Builds the fan oracle on the given grid rectangle.
pub fn build_fan_oracle(
    chart: &MetricChart,
    source: &SourceSet,
    min: Point2,
    max: Point2,
    h: f64,
    n_rays: usize,
    horizon: f64,
    splat_radius: f64,
) -> Result<FanOracle, CutError> {
    let periodic = [
        chart.periodic()[0] && (max[0] - min[0] - chart.axis_len(0)).abs() < 1e-9,
        chart.periodic()[1] && (max[1] - min[1] - chart.axis_len(1)).abs() < 1e-9,
    ];
    let grid = Grid::from_bounds(min, max, h, periodic)?;
    let rays = source.sample_unit_normal_bundle(chart, n_rays)?;
    let dt = 1e-3;
    let stride = ((h / (2.0 * dt)).round() as usize).max(1);

    // per-ray splat lists computed in parallel, merged sequentially
    let reach = (splat_radius / h).ceil() as i64;
    let splats: Vec<Vec<(usize, f64)>> = rays
        .par_iter()
        .map(|ray| {
            let mut out = Vec::new();
            let traj = match geodesic::shoot(chart, ray.q, ray.v, horizon, dt) {
                Ok(t) => t,
                Err(_) => return out,
            };
            for (k, state) in traj.states.iter().enumerate() {
                if k % stride != 0 && k + 1 != traj.states.len() {
                    continue;
                }
                let p = state.y;
                let g = match chart.metric(p) {
                    Ok(g) => g,
                    Err(_) => continue,
                };
                if let Some((fx, fy)) = grid.locate(p) {
                    let (ci, cj) = (fx.round() as i64, fy.round() as i64);
                    for dj in -reach..=reach {
                        for di in -reach..=reach {
                            if let Some((i, j)) =
                                grid.neighbor(ci.max(0) as usize, cj.max(0) as usize, di, dj)
                            {
                                let x = grid.pos(i, j);
                                let mut dvec = vec2::sub(x, p);
                                for axis in 0..2 {
                                    if grid.periodic[axis] {
                                        dvec[axis] -= (dvec[axis] / grid.len[axis]).round()
                                            * grid.len[axis];
                                    }
                                }
                                let cand =
                                    state.t + vec2::quad(&g, dvec, dvec).max(0.0).sqrt();
                                out.push((grid.idx(i, j), cand));
                            }
                        }
                    }
                }
            }
            out
        })
        .collect();

    let mut d = vec![f64::INFINITY; grid.node_count()];
    for list in splats {
        for (idx, cand) in list {
            if cand < d[idx] {
                d[idx] = cand;
            }
        }
    }
    let covered = d.iter().filter(|v| v.is_finite()).count();
    Ok(FanOracle { grid, d, covered })
}

/// Residual t - d_oracle(x): nonnegative up to tolerance when the geodesic
/// reaching x at arc length t is minimal, strictly positive after the cut.
pub fn minimality_residual(
    oracle: &MinimalityOracle,
    x: Point2,
    t: f64,
) -> Result<f64, CutError> {
    let d = oracle
        .distance(x)
        .ok_or(CutError::OracleUnavailable(x[0], x[1]))?;
    Ok(t - d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutReason {
    MultiGeodesic,
    Focal,
    Both,
}

impl CutReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            CutReason::MultiGeodesic => "multi_geodesic",
            CutReason::Focal => "focal",
            CutReason::Both => "both",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CutRecord {
    pub ray_index: usize,
    pub sigma: f64,
    pub point: Point2,
    pub reason: CutReason,
    pub focal_time: Option<f64>,
    /// Residual stayed below tol_min at 10 checkpoints t in (0, sigma).
    pub minimality_ok: bool,
    pub max_checkpoint_residual: f64,
}

#[derive(Debug, Clone)]
pub enum CutOutcome {
    Cut(CutRecord),
    /// The geodesic stayed minimal over the whole horizon.
    NoCutWithinHorizon,
    /// Domain exit (or oracle coverage end) before any cut.
    Escaped { reached: f64 },
}

/// Chart position along a trajectory at parameter t, linear interpolation
/// with periodic wrap.
pub fn position_at(chart: &MetricChart, traj: &Trajectory, t: f64) -> Point2 {
    let states = &traj.states;
    if states.len() == 1 || t <= 0.0 {
        return states[0].y;
    }
    let mut k = states.partition_point(|s| s.t <= t);
    if k >= states.len() {
        k = states.len() - 1;
    }
    let (a, b) = (&states[k - 1], &states[k]);
    let span = b.t - a.t;
    let frac = if span > 0.0 { ((t - a.t) / span).clamp(0.0, 1.0) } else { 0.0 };
    let step = chart.wrap_diff(b.y, a.y);
    chart.wrap(vec2::add(a.y, vec2::scale(step, frac)))
}

/// Locates the cut time of one ray: the earlier of the residual crossing
/// (refined by bisection) and the first focal time.
pub fn cut_time(
    chart: &MetricChart,
    oracle: &MinimalityOracle,
    ray: &NormalRay,
    params: &CutParams,
) -> Result<CutOutcome, CutError> {
    let field = JacobiField::integrate(chart, ray, params.horizon, params.rk_dt)?;
    let traj = &field.trajectory;
    let focal = match field.first_focal() {
        FocalOutcome::Focal { c, .. } => Some(c),
        _ => None,
    };

    // coarse scan for the residual crossing
    let residual_at = |t: f64| -> Option<f64> {
        let p = position_at(chart, traj, t);
        oracle.distance(p).map(|d| t - d)
    };
    let reached = traj.length();
    let mut crossing: Option<(f64, f64)> = None; // bracket (below, above)
    let mut prev_t = 0.0;
    let mut oracle_end: Option<f64> = None;
    let mut k = params.scan_stride;
    loop {
        let t = (k as f64 * params.rk_dt * 1.0).min(reached);
        let t = t.min(params.horizon);
        match residual_at(t) {
            Some(r) => {
                if r > params.tol_min {
                    crossing = Some((prev_t, t));
                    break;
                }
                prev_t = t;
            }
            None => {
                oracle_end = Some(prev_t);
                break;
            }
        }
        if t >= reached || t >= params.horizon {
            break;
        }
        k += params.scan_stride;
    }

    let sigma_res = crossing.map(|(mut lo, mut hi)| {
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            match residual_at(mid) {
                Some(r) if r > params.tol_min => hi = mid,
                Some(_) => lo = mid,
                None => break,
            }
            if hi - lo < 1e-10 {
                break;
            }
        }
        0.5 * (lo + hi)
    });

    let sigma = match (sigma_res, focal) {
        (Some(s), Some(c)) => Some(s.min(c)),
        (Some(s), None) => Some(s),
        (None, Some(c)) if c <= reached + 1e-9 => Some(c),
        _ => None,
    };

    let Some(sigma) = sigma else {
        return Ok(match traj.status {
            TerminalStatus::Completed if oracle_end.is_none() => CutOutcome::NoCutWithinHorizon,
            _ => CutOutcome::Escaped {
                reached: oracle_end.unwrap_or(reached),
            },
        });
    };

    let reason = match focal {
        Some(c) if (sigma - c).abs() <= 1e-3 => CutReason::Focal,
        _ => CutReason::MultiGeodesic,
    };

    // verify minimality at 10 interior checkpoints
    let mut max_res = 0.0f64;
    let mut ok = true;
    for i in 1..=10 {
        let t = sigma * i as f64 / 11.0;
        match residual_at(t) {
            Some(r) => {
                max_res = max_res.max(r);
                if r > params.tol_min {
                    ok = false;
                }
            }
            None => ok = false,
        }
    }

    Ok(CutOutcome::Cut(CutRecord {
        ray_index: 0,
        sigma,
        point: position_at(chart, traj, sigma),
        reason,
        focal_time: focal,
        minimality_ok: ok,
        max_checkpoint_residual: max_res,
    }))
}

/// One clustered cut point.
#[derive(Debug, Clone)]
pub struct CutCluster {
    pub centroid: Point2,
    pub members: Vec<usize>,
    /// Estimated number of minimal geodesics: parameter-contiguous ray
    /// families among the members.
    pub g_estimate: usize,
    pub sigma_median: f64,
    pub has_focal: bool,
}

/// The cut locus as a cloud of per-ray cut records plus clusters.
pub struct CutCloud {
    pub rays: Vec<NormalRay>,
    pub records: Vec<CutRecord>,
    pub outcomes_escaped: usize,
    pub outcomes_no_cut: usize,
    pub clusters: Vec<CutCluster>,
    pub cluster_of_record: Vec<usize>,
    pub n_rays: usize,
    pub params: CutParams,
}

/// Shoots the whole fan and clusters the finite cut points.
pub fn build_cut_cloud(
    chart: &MetricChart,
    source: &SourceSet,
    oracle: &MinimalityOracle,
    n_rays: usize,
    params: &CutParams,
) -> Result<CutCloud, CutError> {
    let rays = source.sample_unit_normal_bundle(chart, n_rays)?;
    let outcomes: Vec<CutOutcome> = rays
        .par_iter()
        .map(|ray| {
            cut_time(chart, oracle, ray, params).unwrap_or(CutOutcome::Escaped { reached: 0.0 })
        })
        .collect();

    let mut records = Vec::new();
    let mut kept_rays = Vec::new();
    let mut escaped = 0;
    let mut no_cut = 0;
    for (i, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            CutOutcome::Cut(mut r) => {
                r.ray_index = records.len();
                kept_rays.push(rays[i].clone());
                records.push(r);
            }
            CutOutcome::Escaped { .. } => escaped += 1,
            CutOutcome::NoCutWithinHorizon => no_cut += 1,
        }
    }

    // greedy metric clustering
    let mut clusters: Vec<CutCluster> = Vec::new();
    let mut cluster_of_record = vec![usize::MAX; records.len()];
    for (ri, rec) in records.iter().enumerate() {
        let mut found = None;
        for (ci, cl) in clusters.iter().enumerate() {
            if chart.short_dist(cl.centroid, rec.point) <= params.cluster_radius {
                found = Some(ci);
                break;
            }
        }
        match found {
            Some(ci) => {
                let cl = &mut clusters[ci];
                let n = cl.members.len() as f64;
                let d = chart.wrap_diff(rec.point, cl.centroid);
                cl.centroid =
                    chart.wrap(vec2::add(cl.centroid, vec2::scale(d, 1.0 / (n + 1.0))));
                cl.members.push(ri);
                cluster_of_record[ri] = ci;
            }
            None => {
                cluster_of_record[ri] = clusters.len();
                clusters.push(CutCluster {
                    centroid: rec.point,
                    members: vec![ri],
                    g_estimate: 1,
                    sigma_median: rec.sigma,
                    has_focal: false,
                });
            }
        }
    }

    for cl in &mut clusters {
        let mut sigmas: Vec<f64> = cl.members.iter().map(|&ri| records[ri].sigma).collect();
        sigmas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cl.sigma_median = sigmas[sigmas.len() / 2];
        cl.has_focal = cl
            .members
            .iter()
            .any(|&ri| records[ri].reason != CutReason::MultiGeodesic);
        cl.g_estimate = count_families(source, &kept_rays, &cl.members, n_rays);
    }

    // a focal record whose cluster also holds other rays is a cut point
    // for both reasons
    for (ri, rec) in records.iter_mut().enumerate() {
        let cl = &clusters[cluster_of_record[ri]];
        if rec.reason == CutReason::Focal && cl.members.len() >= 2 {
            rec.reason = CutReason::Both;
        }
    }

    Ok(CutCloud {
        rays: kept_rays,
        records,
        outcomes_escaped: escaped,
        outcomes_no_cut: no_cut,
        clusters,
        cluster_of_record,
        n_rays,
        params: params.clone(),
    })
}

/// Counts parameter-contiguous families among member rays: groups by
/// (component, side), sorts by parameter, splits at gaps above three fan
/// spacings (circularly).
fn count_families(
    source: &SourceSet,
    rays: &[NormalRay],
    members: &[usize],
    n_rays: usize,
) -> usize {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<(usize, u8), Vec<f64>> = BTreeMap::new();
    for &ri in members {
        let ray = &rays[ri];
        let (side_key, coord, period) = match ray.param {
            RayParam::Curve { s, side } => {
                let period = source.components[ray.component].param_period();
                (
                    if side == Side::Plus { 0u8 } else { 1u8 },
                    s.rem_euclid(period),
                    period,
                )
            }
            RayParam::PointAngle { alpha } => {
                let period = 2.0 * std::f64::consts::PI;
                (2u8, alpha.rem_euclid(period), period)
            }
        };
        groups
            .entry((ray.component, side_key))
            .or_default()
            .push(coord / period); // normalized to [0,1)
    }
    let gap_thresh = 3.0 / n_rays as f64;
    let mut families = 0;
    for (_, mut coords) in groups {
        coords.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if coords.len() == 1 {
            families += 1;
            continue;
        }
        let mut breaks = 0;
        for i in 0..coords.len() {
            let next = coords[(i + 1) % coords.len()];
            let gap = (next - coords[i]).rem_euclid(1.0);
            if gap > gap_thresh {
                breaks += 1;
            }
        }
        families += breaks.max(1);
    }
    families
}

/// Continuity diagnostic for sigma along the ordered unit normal bundle.
#[derive(Debug, Clone)]
pub struct ContinuityReport {
    pub max_jump: f64,
    pub median_gap: f64,
    pub flagged: bool,
}

/// Reports the largest jump of sigma between neighboring rays; a jump far
/// above the median signals a numerical failure of the oracle or scan, not
/// an actual discontinuity.
pub fn sigma_continuity_check(cloud: &CutCloud, source: &SourceSet) -> ContinuityReport {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<(usize, u8), Vec<(f64, f64)>> = BTreeMap::new();
    for (ri, ray) in cloud.rays.iter().enumerate() {
        let sigma = cloud.records[ri].sigma;
        let (side_key, coord) = match ray.param {
            RayParam::Curve { s, side } => {
                let period = source.components[ray.component].param_period();
                (
                    if side == Side::Plus { 0u8 } else { 1u8 },
                    s.rem_euclid(period) / period,
                )
            }
            RayParam::PointAngle { alpha } => {
                (2u8, alpha.rem_euclid(2.0 * std::f64::consts::PI) / (2.0 * std::f64::consts::PI))
            }
        };
        groups.entry((ray.component, side_key)).or_default().push((coord, sigma));
    }

    let expected_spacing = 1.0 / cloud.n_rays as f64;
    let mut gaps = Vec::new();
    for (_, mut list) in groups {
        list.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        if list.len() < 2 {
            continue;
        }
        for i in 0..list.len() {
            let a = list[i];
            let b = list[(i + 1) % list.len()];
            let coord_gap = (b.0 - a.0).rem_euclid(1.0);
            // only adjacent rays count: a missing ray in between (escaped
            // or uncut) breaks adjacency
            if coord_gap <= 1.5 * expected_spacing {
                gaps.push((b.1 - a.1).abs());
            }
        }
    }

    if gaps.is_empty() {
        return ContinuityReport { max_jump: 0.0, median_gap: 0.0, flagged: false };
    }
    let mut sorted = gaps.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[sorted.len() / 2];
    let max = *sorted.last().unwrap();
    let flagged = max > (10.0 * median).max(5.0 * cloud.params.tol_min);
    ContinuityReport { max_jump: max, median_gap: median, flagged }
}

/// Cut cloud CSV: ray_s, sigma, px, py, reason, cluster_id, multiplicity.
pub fn write_cloud_csv<W: std::io::Write>(
    cloud: &CutCloud,
    source: &SourceSet,
    w: &mut W,
) -> std::io::Result<()> {
    writeln!(w, "ray_s,sigma,px,py,reason,cluster_id,multiplicity")?;
    for (ri, rec) in cloud.records.iter().enumerate() {
        let ray = &cloud.rays[ri];
        let period = source.components[ray.component].param_period();
        let cid = cloud.cluster_of_record[ri];
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            ray.param.uk_coord(period),
            rec.sigma,
            rec.point[0],
            rec.point[1],
            rec.reason.as_str(),
            cid,
            cloud.clusters[cid].members.len()
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::MetricChart;

    fn flat(r: f64) -> MetricChart {
        MetricChart::flat([-r, -r], [r, r])
    }

    fn exact_circle_oracle(chart: &MetricChart) -> MinimalityOracle {
        let k = SourceSet::circle([0.0, 0.0], 1.0);
        MinimalityOracle::exact(chart, &k, 4096).unwrap()
    }

    #[test]
    fn residual_examples_circle() {
        let chart = flat(3.0);
        let oracle = exact_circle_oracle(&chart);
        // minimal geodesic point
        let r = minimality_residual(&oracle, [0.0, 0.5], 0.5).unwrap();
        assert!(r.abs() <= 1e-3, "residual {r}");
        // past the cut: reached at t = 1.25 from (0,1) but d = 0.75
        let r = minimality_residual(&oracle, [0.0, -0.25], 1.25).unwrap();
        assert!((r - 0.5).abs() <= 1e-3, "residual {r}");
        // on K the residual equals t
        let r = minimality_residual(&oracle, [1.0, 0.0], 0.7).unwrap();
        assert!((r - 0.7).abs() <= 1e-3, "residual {r}");
    }

    #[test]
    fn cut_time_ellipse_rays() {
        let chart = flat(5.0);
        let k = SourceSet::ellipse(2.0, 1.0);
        let oracle = MinimalityOracle::exact(&chart, &k, 8192).unwrap();
        let params = CutParams::for_grid(0.01, 3.0);

        // from (0, 1) inward: sigma = 1, cut point at the center, another
        // minimal geodesic arrives from (0, -1)
        let ray = k
            .make_ray(&chart, 0, RayParam::Curve { s: std::f64::consts::FRAC_PI_2, side: Side::Plus })
            .unwrap();
        match cut_time(&chart, &oracle, &ray, &params).unwrap() {
            CutOutcome::Cut(rec) => {
                assert!((rec.sigma - 1.0).abs() < 0.05, "sigma {}", rec.sigma);
                assert!(vec2::norm(rec.point) < 0.05, "point {:?}", rec.point);
                assert_eq!(rec.reason, CutReason::MultiGeodesic);
                assert!(rec.minimality_ok);
            }
            other => panic!("{other:?}"),
        }

        // from (2, 0) inward: sigma = c = 0.5, the focal endpoint
        let ray = k
            .make_ray(&chart, 0, RayParam::Curve { s: 0.0, side: Side::Plus })
            .unwrap();
        match cut_time(&chart, &oracle, &ray, &params).unwrap() {
            CutOutcome::Cut(rec) => {
                assert!((rec.sigma - 0.5).abs() < 1e-3, "sigma {}", rec.sigma);
                assert!(vec2::norm(vec2::sub(rec.point, [1.5, 0.0])) < 0.01);
                assert_eq!(rec.reason, CutReason::Focal);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn outward_rays_have_no_cut() {
        let chart = flat(3.0);
        let k = SourceSet::circle([0.0, 0.0], 1.0);
        let oracle = exact_circle_oracle(&chart);
        let params = CutParams::for_grid(0.01, 10.0);
        let ray = k
            .make_ray(&chart, 0, RayParam::Curve { s: 1.0, side: Side::Minus })
            .unwrap();
        match cut_time(&chart, &oracle, &ray, &params).unwrap() {
            CutOutcome::Cut(rec) => panic!("unexpected cut {rec:?}"),
            // the chart is bounded: the ray escapes before the horizon,
            // with no cut found
            CutOutcome::Escaped { .. } | CutOutcome::NoCutWithinHorizon => {}
        }
    }

    #[test]
    fn circle_cloud_clusters_at_center() {
        let chart = flat(3.0);
        let k = SourceSet::circle([0.0, 0.0], 1.0);
        let oracle = exact_circle_oracle(&chart);
        let params = CutParams::for_grid(0.01, 4.0);
        let cloud = build_cut_cloud(&chart, &k, &oracle, 64, &params).unwrap();
        assert_eq!(cloud.records.len(), 64, "only the 64 inward rays cut");
        assert_eq!(cloud.clusters.len(), 1);
        let cl = &cloud.clusters[0];
        assert_eq!(cl.members.len(), 64);
        assert!(vec2::norm(cl.centroid) < 0.02, "centroid {:?}", cl.centroid);
        assert!((cl.sigma_median - 1.0).abs() < 0.05);
        // sigma <= c pointwise
        for rec in &cloud.records {
            if let Some(c) = rec.focal_time {
                assert!(rec.sigma <= c + 1e-3);
            }
        }
    }

    #[test]
    fn ellipse_cloud_fills_medial_segment() {
        let chart = flat(5.0);
        let k = SourceSet::ellipse(2.0, 1.0);
        let oracle = MinimalityOracle::exact(&chart, &k, 8192).unwrap();
        // tol_min tracks the oracle accuracy: the brute-force oracle is
        // exact to sampling error, far below grid noise
        let mut params = CutParams::for_grid(0.01, 3.0);
        params.tol_min = 1e-3;
        let cloud = build_cut_cloud(&chart, &k, &oracle, 256, &params).unwrap();
        // every cut point lies near the segment y = 0, |x| <= 1.5
        let mut max_dev = 0.0f64;
        for rec in &cloud.records {
            let seg_dist = if rec.point[0].abs() <= 1.5 {
                rec.point[1].abs()
            } else {
                vec2::norm(vec2::sub(rec.point, [1.5f64.copysign(rec.point[0]), 0.0]))
            };
            max_dev = max_dev.max(seg_dist);
        }
        assert!(max_dev <= 0.02, "cloud deviates {max_dev} from the medial segment");
        // and the cloud covers the segment
        for xi in 0..=30 {
            let x = -1.5 + 3.0 * xi as f64 / 30.0;
            let min_d = cloud
                .records
                .iter()
                .map(|r| vec2::norm(vec2::sub(r.point, [x, 0.0])))
                .fold(f64::INFINITY, f64::min);
            assert!(min_d <= 0.05, "segment point x={x} uncovered, nearest {min_d}");
        }
        // interior clusters see exactly two ray families
        for cl in &cloud.clusters {
            if cl.centroid[0].abs() < 1.3 {
                assert_eq!(cl.g_estimate, 2, "cluster at {:?}", cl.centroid);
            }
        }
    }

    #[test]
    fn torus_cloud_is_the_dual_cross() {
        let chart = MetricChart::torus_flat(1.0, 1.0);
        let k = SourceSet::point([0.0, 0.0]);
        let oracle = MinimalityOracle::exact(&chart, &k, 1).unwrap();
        let params = CutParams::for_grid(0.005, 1.5);
        let cloud = build_cut_cloud(&chart, &k, &oracle, 256, &params).unwrap();
        assert!(cloud.records.len() > 200);
        for rec in &cloud.records {
            let d1 = (rec.point[0] - 0.5).abs();
            let d2 = (rec.point[1] - 0.5).abs();
            assert!(
                d1.min(d2) <= 0.02,
                "cut point {:?} off the cross",
                rec.point
            );
        }
        // brute-force lattice oracle: cover both circles
        for t in 0..=20 {
            let c = t as f64 / 20.0;
            for target in [[0.5, c], [c, 0.5]] {
                let min_d = cloud
                    .records
                    .iter()
                    .map(|r| vec2::norm(chart.wrap_diff(r.point, target)))
                    .fold(f64::INFINITY, f64::min);
                assert!(min_d <= 0.05, "{target:?} uncovered");
            }
        }
    }

    #[test]
    fn sigma_continuity() {
        let chart = flat(5.0);
        let k = SourceSet::ellipse(2.0, 1.0);
        let oracle = MinimalityOracle::exact(&chart, &k, 8192).unwrap();
        let params = CutParams::for_grid(0.01, 3.0);
        let cloud = build_cut_cloud(&chart, &k, &oracle, 256, &params).unwrap();
        let report = sigma_continuity_check(&cloud, &k);
        assert!(report.max_jump <= 0.05, "max jump {}", report.max_jump);
        assert!(!report.flagged);

        // circle: constant sigma
        let chart = flat(3.0);
        let k = SourceSet::circle([0.0, 0.0], 1.0);
        let oracle = exact_circle_oracle(&chart);
        let cloud = build_cut_cloud(&chart, &k, &oracle, 64, &params).unwrap();
        let report = sigma_continuity_check(&cloud, &k);
        assert!(report.max_jump <= 1e-6, "max jump {}", report.max_jump);
        assert!(!report.flagged);

        // a broken oracle (zero tolerance) must raise the flag
        let mut broken = CutParams::for_grid(0.01, 3.0);
        broken.tol_min = 0.0;
        let k = SourceSet::ellipse(2.0, 1.0);
        let chart = flat(5.0);
        let noisy = MinimalityOracle::exact(&chart, &k, 64).unwrap(); // very coarse
        let cloud = build_cut_cloud(&chart, &k, &noisy, 256, &broken).unwrap();
        let report = sigma_continuity_check(&cloud, &k);
        assert!(report.flagged, "broken oracle not flagged: {report:?}");
    }

    #[test]
    fn eikonal_and_fan_oracles_agree_with_exact() {
        let chart = flat(3.0);
        let k = SourceSet::circle([0.0, 0.0], 1.0);
        let h = 0.02;
        let eik = MinimalityOracle::Eikonal(crate::eikonal::solve_eikonal(&chart, &k, h).unwrap());
        let fan = MinimalityOracle::Fan(
            build_fan_oracle(&chart, &k, [-3.0, -3.0], [3.0, 3.0], h, 512, 4.5, 3.0 * h).unwrap(),
        );
        let exact = exact_circle_oracle(&chart);
        for p in [[0.3, 0.2], [-1.4, 0.9], [2.0, -2.0], [0.0, -0.6]] {
            let de = exact.distance(p).unwrap();
            let dg = eik.distance(p).unwrap();
            let df = fan.distance(p).unwrap();
            assert!((dg - de).abs() <= 5.0 * h + 1e-3, "eik {dg} vs exact {de} at {p:?}");
            assert!((df - de).abs() <= 5.0 * h + 1e-3, "fan {df} vs exact {de} at {p:?}");
        }
    }
}
