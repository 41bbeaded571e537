//! Coherent collections of balls and planes: multiscale nets, fitted planes
//! through refined net points, and the compatibility conditions between them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, OffendingPair, Result};
use crate::flatness::{alpha_with_normal, ScaleLadder};
use crate::geometry::{plane_local_hausdorff, AffinePlane, Ball, Vector};
use crate::index::SpatialIndex;
use crate::measure::{center_of_mass, DiscreteSurface};

/// Minimal separation of net points, in units of `r_k`.
pub const NET_SEPARATION: f64 = 4.0 / 3.0;
/// Refined points stay within this multiple of `r_k` of their net point.
pub const REFINE_RADIUS: f64 = 1.0 / 6.0;
/// Refined balls of this multiple of `r_k` cover the region.
pub const COVER_RADIUS: f64 = 1.5;
/// Level `k+1` points must lie within this multiple of `r_k` of level `k`.
pub const NEST_RADIUS: f64 = 2.0;
/// Radius of the fitting ball, in units of `r_k` (normals use twice this).
pub const PLANE_FACTOR: f64 = 120.0;
/// Same-level pairs closer than this multiple of `r_k` are compared, at that radius.
pub const SAME_SCALE_REACH: f64 = 100.0;
/// Cross-level pairs closer than this multiple of `r_k` are compared.
pub const NEXT_SCALE_REACH: f64 = 2.0;
/// Comparison radius for cross-level pairs.
pub const NEXT_SCALE_RADIUS: f64 = 20.0;
/// Averaged normals shorter than this cannot define a plane.
pub const MIN_NORMAL: f64 = 0.1;
/// Distance recorded when a plane misses the comparison ball.
pub const MISSED_BALL: f64 = 2.0;

pub const ORIGIN: &str = "origin";
pub const BASE_PLANE: &str = "base-plane";
pub const SAME_SCALE: &str = "same-scale";
pub const NEXT_SCALE: &str = "next-scale";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NetLevel {
    pub k: usize,
    pub r: f64,
    /// Net points `x̃_jk` as sample indices.
    pub centers: Vec<usize>,
    /// Refined points `x_jk` as sample indices.
    pub refined: Vec<usize>,
    /// Positions of the refined points.
    pub points: Vec<Vector>,
    /// Refined points outside the doubled balls of the previous level.
    pub boundary: Vec<bool>,
}

impl NetLevel {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }
}

/// Nets for levels `0..=J` of a scale ladder with `r_k = r0 · ratio^{-k}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MultiscaleNet {
    pub ladder: ScaleLadder,
    pub region: Ball,
    /// Sample index of the designated origin point.
    pub origin: usize,
    pub levels: Vec<NetLevel>,
}

impl MultiscaleNet {
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn radius(&self, k: usize) -> f64 {
        self.levels[k].r
    }

    pub fn boundary_count(&self) -> usize {
        self.levels.iter().map(|l| l.boundary.iter().filter(|&&b| b).count()).sum()
    }
}

fn sorted_ball(s: &DiscreteSurface, ball: &Ball) -> Vec<usize> {
    let mut idx = s.ball(&ball.center, ball.radius);
    idx.sort_unstable();
    idx
}

fn mark_boundary(levels: &mut [NetLevel]) {
    for k in 1..levels.len() {
        let (coarse, fine) = levels.split_at_mut(k);
        let prev = &coarse[k - 1];
        let reach = NEST_RADIUS * prev.r;
        let index = SpatialIndex::new(&prev.points);
        let level = &mut fine[0];
        level.boundary = level.points.iter().map(|p| index.nearest(p).is_none_or(|(_, d)| d >= reach)).collect();
    }
}

/// Greedy maximal `(4/3) r_k`-separated subsets of `S ∩ region` for `k = 0..=J`,
/// scanned in ascending index order after the sample nearest the region center.
pub fn build_net(s: &DiscreteSurface, region_center: &Vector, region_radius: f64, ladder: &ScaleLadder) -> Result<MultiscaleNet> {
    let region = Ball::new(*region_center, region_radius)?;
    let h_min = s.h_min();
    let deepest = ladder.radius(ladder.depth);
    if deepest < h_min {
        return Err(Error::ResolutionExceeded { radius: deepest, h_min });
    }
    let (origin, d0) = s
        .index()
        .nearest(region_center)
        .ok_or_else(|| Error::InvalidInput("surface has no points".into()))?;
    if d0 >= region_radius {
        return Err(Error::InvalidInput("region contains no sample point".into()));
    }
    let candidates = sorted_ball(s, &region);
    let order: Vec<usize> = std::iter::once(origin).chain(candidates.iter().copied().filter(|&i| i != origin)).collect();
    let cand_points: Vec<Vector> = order.iter().map(|&i| s.point(i)).collect();
    let local = SpatialIndex::new(&cand_points);

    let mut levels = Vec::with_capacity(ladder.depth + 1);
    for k in 0..=ladder.depth {
        let r = ladder.radius(k);
        let mut blocked = vec![false; order.len()];
        let mut centers = Vec::new();
        for pos in 0..order.len() {
            if blocked[pos] {
                continue;
            }
            centers.push(order[pos]);
            local.for_each_in_ball(&cand_points[pos], NET_SEPARATION * r, |q| blocked[q] = true);
        }
        let points = centers.iter().map(|&i| s.point(i)).collect();
        levels.push(NetLevel {
            k,
            r,
            refined: centers.clone(),
            boundary: vec![false; centers.len()],
            centers,
            points,
        });
    }
    mark_boundary(&mut levels);
    let net = MultiscaleNet {
        ladder: *ladder,
        region,
        origin,
        levels,
    };
    let bad: Vec<String> = check_net(&net, s)
        .into_iter()
        .filter(|c| c.failures > 0 && c.condition != "nesting")
        .map(|c| c.condition)
        .collect();
    if !bad.is_empty() {
        return Err(Error::HypothesisViolated(format!("net invariants failed: {}", bad.join(", "))));
    }
    Ok(net)
}

/// A fitted plane together with the quantities that certify it.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PoincarePlane {
    pub plane: AffinePlane,
    /// `⨍_{B_r} d(y, P′)/r dμ`.
    pub lhs: f64,
    /// `α(x̃, 2r)`.
    pub alpha_2r: f64,
    /// `|ν_{x̃,2r}|`.
    pub normal_norm: f64,
}

/// The plane through the center of mass of `B_r(x̃)` with normal `ν_{x̃,2r}`.
pub fn poincare_plane(s: &DiscreteSurface, x: &Vector, r: f64) -> Result<PoincarePlane> {
    let (alpha_2r, nu) = alpha_with_normal(s, x, 2.0 * r)?;
    let norm = nu.norm();
    if norm <= MIN_NORMAL {
        return Err(Error::DegenerateNormal { norm });
    }
    let c = center_of_mass(s, x, r)?;
    let plane = AffinePlane::new(c, nu)?;
    let mut mass = 0.0;
    let mut acc = 0.0;
    s.index().for_each_in_ball(x, r, |i| {
        let w = s.weights()[i];
        mass += w;
        acc += w * plane.distance(&s.point(i));
    });
    Ok(PoincarePlane {
        plane,
        lhs: acc / (mass * r),
        alpha_2r,
        normal_norm: norm,
    })
}

/// The sample in `B_{r_k/6}(x̃)` closest to `plane` (lowest index on ties) and the
/// parallel plane through it.
pub fn refine_point(s: &DiscreteSurface, x: &Vector, r_k: f64, plane: &AffinePlane) -> Result<(usize, AffinePlane)> {
    let radius = REFINE_RADIUS * r_k;
    let mut best: Option<(f64, usize)> = None;
    s.index().for_each_in_ball(x, radius, |i| {
        let d = plane.distance(&s.point(i));
        if best.is_none_or(|(bd, bi)| d < bd || (d == bd && i < bi)) {
            best = Some((d, i));
        }
    });
    let (_, i) = best.ok_or(Error::EmptyBall { radius })?;
    Ok((i, plane.through(s.point(i))))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: String,
    pub max: f64,
    pub checked: usize,
    pub worst: Option<OffendingPair>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Ccbp {
    pub sigma0: AffinePlane,
    pub net: MultiscaleNet,
    /// `P_jk`, indexed `[k][j]`.
    pub planes: Vec<Vec<AffinePlane>>,
    pub fits: Vec<Vec<PoincarePlane>>,
    /// Fitting radius per level.
    pub plane_radius: Vec<f64>,
    /// Whether the fitting radius was clamped to the region.
    pub clamped: Vec<bool>,
    /// Position of the origin within level 0.
    pub base_index: usize,
    pub eps_target: f64,
    pub achieved_eps: f64,
    pub conditions: Vec<ConditionSummary>,
    pub worst: Option<OffendingPair>,
}

impl Ccbp {
    pub fn depth(&self) -> usize {
        self.net.depth()
    }

    pub fn radius(&self, k: usize) -> f64 {
        self.net.radius(k)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn local_distance(p: &AffinePlane, q: &AffinePlane, x: &Vector, r: f64) -> f64 {
    plane_local_hausdorff(p, q, x, r).unwrap_or(MISSED_BALL)
}

/// Fitting radius for level radius `r`, clamped so the normal ball stays within the region.
pub fn fitting_radius(r: f64, region_radius: f64) -> (f64, bool) {
    let wanted = PLANE_FACTOR * r;
    let cap = 0.5 * region_radius;
    if wanted > cap {
        (cap, true)
    } else {
        (wanted, false)
    }
}

struct Tracker {
    label: &'static str,
    max: f64,
    checked: usize,
    worst: Option<OffendingPair>,
}

impl Tracker {
    fn new(label: &'static str) -> Self {
        Tracker {
            label,
            max: 0.0,
            checked: 0,
            worst: None,
        }
    }

    fn push(&mut self, level: usize, first: usize, other_level: usize, second: usize, value: f64) {
        self.checked += 1;
        if self.worst.is_none() || value > self.max {
            self.max = value;
            self.worst = Some(OffendingPair {
                condition: self.label.to_string(),
                level,
                first,
                other_level,
                second,
                value,
            });
        }
    }

    fn finish(self) -> ConditionSummary {
        ConditionSummary {
            condition: self.label.to_string(),
            max: self.max,
            checked: self.checked,
            worst: self.worst,
        }
    }
}

type PairValue = (usize, usize, f64);

/// Distances for same-level pairs within reach, in `(i, j)` scan order.
fn same_scale_pairs(level: &NetLevel, planes: &[AffinePlane]) -> Vec<PairValue> {
    let r = level.r;
    let reach = SAME_SCALE_REACH * r;
    let index = SpatialIndex::new(&level.points);
    (0..level.len())
        .into_par_iter()
        .filter(|&i| !level.boundary[i])
        .map(|i| {
            let x = level.points[i];
            let mut near = Vec::new();
            index.for_each_in_ball(&x, reach * (1.0 + 1e-12), |j| near.push(j));
            near.sort_unstable();
            near.into_iter()
                .filter(|&j| j != i && !level.boundary[j] && x.dist(&level.points[j]) <= reach)
                .map(|j| (i, j, local_distance(&planes[i], &planes[j], &x, reach)))
                .collect::<Vec<_>>()
        })
        .flatten()
        .collect()
}

fn next_scale_pairs(coarse: &NetLevel, fine: &NetLevel, coarse_planes: &[AffinePlane], fine_planes: &[AffinePlane]) -> Vec<PairValue> {
    let r = coarse.r;
    let reach = NEXT_SCALE_REACH * r;
    let index = SpatialIndex::new(&fine.points);
    (0..coarse.len())
        .into_par_iter()
        .filter(|&i| !coarse.boundary[i])
        .map(|i| {
            let x = coarse.points[i];
            let mut near = Vec::new();
            index.for_each_in_ball(&x, reach * (1.0 + 1e-12), |j| near.push(j));
            near.sort_unstable();
            near.into_iter()
                .filter(|&j| !fine.boundary[j] && x.dist(&fine.points[j]) <= reach)
                .map(|j| (i, j, local_distance(&coarse_planes[i], &fine_planes[j], &x, NEXT_SCALE_RADIUS * r)))
                .collect::<Vec<_>>()
        })
        .flatten()
        .collect()
}

fn compatibility(net: &MultiscaleNet, planes: &[Vec<AffinePlane>], sigma0: &AffinePlane) -> Vec<ConditionSummary> {
    let l0 = &net.levels[0];
    let mut origin = Tracker::new(ORIGIN);
    let mut base = Tracker::new(BASE_PLANE);
    for j in 0..l0.len() {
        if l0.boundary[j] {
            continue;
        }
        let x = l0.points[j];
        origin.push(0, j, 0, 0, sigma0.distance(&x) / l0.r);
        base.push(0, j, 0, 0, local_distance(&planes[0][j], sigma0, &x, SAME_SCALE_REACH * l0.r));
    }
    let mut same = Tracker::new(SAME_SCALE);
    let mut next = Tracker::new(NEXT_SCALE);
    for (k, level) in net.levels.iter().enumerate() {
        for (i, j, v) in same_scale_pairs(level, &planes[k]) {
            same.push(k, i, k, j, v);
        }
        if k < net.depth() {
            for (i, j, v) in next_scale_pairs(level, &net.levels[k + 1], &planes[k], &planes[k + 1]) {
                next.push(k, i, k + 1, j, v);
            }
        }
    }
    vec![origin.finish(), base.finish(), same.finish(), next.finish()]
}

fn worst_of(conditions: &[ConditionSummary]) -> (f64, Option<OffendingPair>) {
    let mut best: (f64, Option<OffendingPair>) = (0.0, None);
    for c in conditions {
        if c.worst.is_some() && (best.1.is_none() || c.max > best.0) {
            best = (c.max, c.worst.clone());
        }
    }
    best
}

/// Builds nets, fitted planes and `Σ₀`, and measures every compatibility
/// condition without comparing against the target.
pub fn assemble_ccbp(s: &DiscreteSurface, region: &Ball, ladder: &ScaleLadder, eps_target: f64) -> Result<Ccbp> {
    if !(eps_target > 0.0) {
        return Err(Error::InvalidInput(format!("eps_target = {eps_target} must be positive")));
    }
    s.normals()?;
    let mut net = build_net(s, &region.center, region.radius, ladder)?;
    let mut planes = Vec::with_capacity(net.levels.len());
    let mut fits = Vec::with_capacity(net.levels.len());
    let mut plane_radius = Vec::with_capacity(net.levels.len());
    let mut clamped = Vec::with_capacity(net.levels.len());
    for level in net.levels.iter_mut() {
        let r = level.r;
        let (rho, clamp) = fitting_radius(r, region.radius);
        let built: Vec<(PoincarePlane, usize, AffinePlane)> = level
            .centers
            .par_iter()
            .map(|&c| {
                let x = s.point(c);
                let fit = poincare_plane(s, &x, rho)?;
                let (i, plane) = refine_point(s, &x, r, &fit.plane)?;
                Ok((fit, i, plane))
            })
            .collect::<Result<_>>()?;
        level.refined = built.iter().map(|b| b.1).collect();
        level.points = level.refined.iter().map(|&i| s.point(i)).collect();
        fits.push(built.iter().map(|b| b.0).collect::<Vec<_>>());
        planes.push(built.iter().map(|b| b.2).collect::<Vec<_>>());
        plane_radius.push(rho);
        clamped.push(clamp);
        if clamp {
            log::debug!("level {}: fitting radius clamped to {rho}", level.k);
        }
    }
    mark_boundary(&mut net.levels);
    let base_index = 0;
    let sigma0 = planes[0][base_index];
    let conditions = compatibility(&net, &planes, &sigma0);
    let (achieved_eps, worst) = worst_of(&conditions);
    log::info!(
        "ccbp: {} levels, {} balls, {} boundary, achieved eps {achieved_eps:.3e}",
        net.levels.len(),
        net.levels.iter().map(NetLevel::len).sum::<usize>(),
        net.boundary_count()
    );
    Ok(Ccbp {
        sigma0,
        net,
        planes,
        fits,
        plane_radius,
        clamped,
        base_index,
        eps_target,
        achieved_eps,
        conditions,
        worst,
    })
}

/// [`assemble_ccbp`], failing with `EpsilonExceeded` when the target is missed.
pub fn build_ccbp(s: &DiscreteSurface, region: &Ball, ladder: &ScaleLadder, eps_target: f64) -> Result<Ccbp> {
    let c = assemble_ccbp(s, region, ladder, eps_target)?;
    check_target(&c)?;
    Ok(c)
}

pub fn check_target(c: &Ccbp) -> Result<()> {
    if c.achieved_eps > c.eps_target {
        return Err(Error::EpsilonExceeded {
            achieved: c.achieved_eps,
            target: c.eps_target,
            worst: c.worst.clone().expect("a positive maximum has a witness"),
        });
    }
    Ok(())
}

/// Outcome of one verified condition. `margin` is positive when it holds.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub condition: String,
    pub worst: f64,
    pub bound: f64,
    pub margin: f64,
    pub checked: usize,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub condition: String,
    pub level: usize,
    pub first: usize,
    pub other_level: usize,
    pub second: usize,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<ConditionCheck>,
    pub failures: Vec<Failure>,
    pub boundary_points: usize,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn check(&self, condition: &str) -> Option<&ConditionCheck> {
        self.checks.iter().find(|c| c.condition == condition)
    }
}

/// Accumulates a check where `value ≤ bound` (or `≥` when `lower`) must hold.
struct Checker {
    check: ConditionCheck,
    lower: bool,
    failures: Vec<Failure>,
}

impl Checker {
    fn upper(label: &str, bound: f64) -> Self {
        Checker::with(label, bound, false)
    }

    fn lower(label: &str, bound: f64) -> Self {
        Checker::with(label, bound, true)
    }

    fn with(label: &str, bound: f64, lower: bool) -> Self {
        Checker {
            check: ConditionCheck {
                condition: label.to_string(),
                worst: if lower { f64::INFINITY } else { 0.0 },
                bound,
                margin: f64::INFINITY,
                checked: 0,
                failures: 0,
            },
            lower,
            failures: Vec::new(),
        }
    }

    fn push(&mut self, level: usize, first: usize, other_level: usize, second: usize, value: f64) {
        let c = &mut self.check;
        c.checked += 1;
        let margin = if self.lower { value - c.bound } else { c.bound - value };
        if self.lower {
            c.worst = c.worst.min(value);
        } else {
            c.worst = c.worst.max(value);
        }
        c.margin = c.margin.min(margin);
        if margin < 0.0 || value.is_nan() {
            c.failures += 1;
            self.failures.push(Failure {
                condition: c.condition.clone(),
                level,
                first,
                other_level,
                second,
                value,
            });
        }
    }
}

/// Net invariants, recomputed by direct scans. Distances are in units of `r_k`.
pub fn check_net(net: &MultiscaleNet, s: &DiscreteSurface) -> Vec<ConditionCheck> {
    check_net_inner(net, s).into_iter().map(|c| c.check).collect()
}

fn check_net_inner(net: &MultiscaleNet, s: &DiscreteSurface) -> Vec<Checker> {
    let mut separation = Checker::lower("separation", NET_SEPARATION);
    let mut spacing = Checker::lower("spacing", 1.0);
    let mut refinement = Checker::upper("refinement", REFINE_RADIUS);
    let mut nesting = Checker::upper("nesting", 0.0);
    let mut coverage = Checker::upper("coverage", COVER_RADIUS);
    let in_region = sorted_ball(s, &net.region);
    for (k, level) in net.levels.iter().enumerate() {
        let r = level.r;
        let tilde: Vec<Vector> = level.centers.iter().map(|&i| s.point(i)).collect();
        for i in 0..level.len() {
            for j in (i + 1)..level.len() {
                separation.push(k, i, k, j, tilde[i].dist(&tilde[j]) / r);
                spacing.push(k, i, k, j, level.points[i].dist(&level.points[j]) / r);
            }
            refinement.push(k, i, k, i, level.points[i].dist(&tilde[i]) / r);
        }
        if k > 0 {
            // a flag must match the actual nesting status
            let prev = &net.levels[k - 1];
            for j in 0..level.len() {
                let inside = prev.points.iter().any(|p| p.dist(&level.points[j]) < NEST_RADIUS * prev.r);
                nesting.push(k, j, k - 1, 0, if inside != level.boundary[j] { 0.0 } else { 1.0 });
            }
        }
        let index = SpatialIndex::new(&level.points);
        for &p in &in_region {
            let d = index.nearest(&s.point(p)).map_or(f64::INFINITY, |(_, d)| d);
            coverage.push(k, p, k, 0, d / r);
        }
    }
    vec![separation, spacing, refinement, nesting, coverage]
}

/// Re-checks the nets, the planes and every compatibility condition from the
/// stored data, against `eps_target`.
pub fn verify_ccbp(c: &Ccbp, s: &DiscreteSurface) -> VerifyReport {
    let net = &c.net;
    let mut checkers = check_net_inner(net, s);
    let eps = c.eps_target;

    let mut through = Checker::upper("plane-through-point", 1e-9);
    let mut parallel = Checker::upper("parallel-to-fit", 1e-12);
    for (k, level) in net.levels.iter().enumerate() {
        for j in 0..level.len() {
            let p = &c.planes[k][j];
            through.push(k, j, k, j, p.distance(&level.points[j]) / level.r);
            parallel.push(k, j, k, j, 1.0 - p.normal.dot(&c.fits[k][j].plane.normal).abs());
        }
    }

    let sigma0 = &c.sigma0;
    let l0 = &net.levels[0];
    let mut origin = Checker::upper(ORIGIN, eps);
    let mut base = Checker::upper(BASE_PLANE, eps);
    let mut same = Checker::upper(SAME_SCALE, eps);
    let mut next = Checker::upper(NEXT_SCALE, eps);
    for j in (0..l0.len()).filter(|&j| !l0.boundary[j]) {
        let x = l0.points[j];
        origin.push(0, j, 0, 0, sigma0.distance(&x) / l0.r);
        base.push(0, j, 0, 0, local_distance(&c.planes[0][j], sigma0, &x, SAME_SCALE_REACH * l0.r));
    }
    for (k, level) in net.levels.iter().enumerate() {
        let r = level.r;
        let live: Vec<usize> = (0..level.len()).filter(|&j| !level.boundary[j]).collect();
        let rows: Vec<Vec<PairValue>> = live
            .par_iter()
            .map(|&i| {
                let x = level.points[i];
                live.iter()
                    .filter(|&&j| j != i && x.dist(&level.points[j]) <= SAME_SCALE_REACH * r)
                    .map(|&j| (i, j, local_distance(&c.planes[k][i], &c.planes[k][j], &x, SAME_SCALE_REACH * r)))
                    .collect()
            })
            .collect();
        for (i, j, v) in rows.into_iter().flatten() {
            same.push(k, i, k, j, v);
        }
        if k < net.depth() {
            let fine = &net.levels[k + 1];
            for &i in &live {
                let x = level.points[i];
                for j in (0..fine.len()).filter(|&j| !fine.boundary[j]) {
                    if x.dist(&fine.points[j]) <= NEXT_SCALE_REACH * r {
                        let v = local_distance(&c.planes[k][i], &c.planes[k + 1][j], &x, NEXT_SCALE_RADIUS * r);
                        next.push(k, i, k + 1, j, v);
                    }
                }
            }
        }
    }
    let recomputed = [&origin, &base, &same, &next]
        .iter()
        .filter(|ch| ch.check.checked > 0)
        .map(|ch| ch.check.worst)
        .fold(0.0, f64::max);
    let mut achieved = Checker::upper("achieved-eps", 1e-12 * recomputed.max(1.0));
    achieved.push(0, 0, 0, 0, (recomputed - c.achieved_eps).abs());

    checkers.extend([through, parallel, origin, base, same, next, achieved]);
    let mut failures = Vec::new();
    let mut checks = Vec::new();
    for ch in checkers {
        failures.extend(ch.failures);
        checks.push(ch.check);
    }
    VerifyReport {
        checks,
        failures,
        boundary_points: net.boundary_count(),
    }
}

/// One probe of `lhs ≤ 4 C_P α(x, 2r)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlaneInequalityRecord {
    pub probe: usize,
    pub r: f64,
    pub lhs: f64,
    pub alpha_2r: f64,
    pub bound: f64,
    pub holds: bool,
    /// Ball too sparsely sampled for the comparison to be meaningful.
    pub unresolved: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlaneInequalityReport {
    pub c_p: f64,
    pub records: Vec<PlaneInequalityRecord>,
    /// Probes skipped because the averaged normal was too short.
    pub degenerate: usize,
    pub holding_fraction: f64,
    /// Failures not explained by resolution.
    pub resolved_failures: usize,
}

/// Fewer sample points than this in `B_r` marks a probe unresolved.
pub const RESOLVED_POINTS: usize = 50;
const INEQUALITY_SLACK: f64 = 1e-12;

/// Checks the fitted-plane inequality at every probe and radius.
pub fn plane_inequality_audit(s: &DiscreteSurface, probes: &[usize], radii: &[f64], c_p: f64) -> Result<PlaneInequalityReport> {
    let h_min = s.h_min();
    let rows: Vec<Option<PlaneInequalityRecord>> = probes
        .par_iter()
        .flat_map_iter(|&p| radii.iter().map(move |&r| (p, r)))
        .map(|(p, r)| {
            let x = s.point(p);
            match poincare_plane(s, &x, r) {
                Ok(fit) => {
                    let bound = 4.0 * c_p * fit.alpha_2r;
                    Ok(Some(PlaneInequalityRecord {
                        probe: p,
                        r,
                        lhs: fit.lhs,
                        alpha_2r: fit.alpha_2r,
                        bound,
                        holds: fit.lhs <= bound + INEQUALITY_SLACK,
                        unresolved: r < h_min || s.ball(&x, r).len() < RESOLVED_POINTS,
                    }))
                }
                Err(Error::DegenerateNormal { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let degenerate = rows.iter().filter(|r| r.is_none()).count();
    let records: Vec<PlaneInequalityRecord> = rows.into_iter().flatten().collect();
    let holding = records.iter().filter(|r| r.holds).count();
    Ok(PlaneInequalityReport {
        c_p,
        holding_fraction: if records.is_empty() { 1.0 } else { holding as f64 / records.len() as f64 },
        resolved_failures: records.iter().filter(|r| !r.holds && !r.unresolved).count(),
        degenerate,
        records,
    })
}
