//! The multiscale flow `f_k = σ_{k−1} ∘ … ∘ σ_0` driven by a CCBP, evaluated on
//! a grid of `Σ₀`, with the quantities used to judge the resulting map.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ccbp::{Ccbp, MISSED_BALL, SAME_SCALE_REACH};
use crate::error::{Error, Result};
use crate::geometry::{orthonormal_complement, plane_local_hausdorff, AffinePlane, Ball, Vector};
use crate::index::SpatialIndex;
use crate::measure::DiscreteSurface;
use crate::sphere_search;

/// Seed for bi-Lipschitz pair sampling.
pub const PAIR_SEED: u64 = 0x5EED;
/// All pairs are checked up to this count; beyond it this many are sampled.
pub const MAX_PAIRS: usize = 1_000_000;
/// Per-level displacement above this multiple of `r_k` aborts the flow.
pub const DIVERGENCE_FACTOR: f64 = 10.0;
/// Per-level displacement expected to stay below this multiple of `r_k`.
pub const STEP_BOUND: f64 = 1.5;
/// Balls `11 B_im` used by `ε′`.
pub const EPS_REACH: f64 = 11.0;
/// Containment tolerance is `2 · spacing + CONTAINMENT_FACTOR · r_J`.
pub const CONTAINMENT_FACTOR: f64 = 5.0;
/// Grids larger than this are refused.
pub const MAX_GRID: usize = 4_000_000;

/// Radial profile equal to 1 on `[0, inner]`, 0 on `[outer, ∞)`, with a cubic
/// smoothstep in between.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpProfile {
    pub inner: f64,
    pub outer: f64,
}

impl Default for BumpProfile {
    fn default() -> Self {
        BumpProfile { inner: 8.0, outer: 10.0 }
    }
}

impl BumpProfile {
    pub fn value(&self, s: f64) -> f64 {
        if s <= self.inner {
            1.0
        } else if s >= self.outer {
            0.0
        } else {
            let t = (s - self.inner) / (self.outer - self.inner);
            1.0 - t * t * (3.0 - 2.0 * t)
        }
    }

    pub fn derivative(&self, s: f64) -> f64 {
        if s <= self.inner || s >= self.outer {
            0.0
        } else {
            let w = self.outer - self.inner;
            let t = (s - self.inner) / w;
            -6.0 * t * (1.0 - t) / w
        }
    }

    /// `sup |φ′|`.
    pub fn max_slope(&self) -> f64 {
        1.5 / (self.outer - self.inner)
    }
}

/// A CCBP with per-level search structures and the plane-distance tables behind `ε′`.
pub struct FlowField<'a> {
    c: &'a Ccbp,
    bump: BumpProfile,
    index: Vec<SpatialIndex>,
    /// `links[k][j]`: `(m, i, d)` for every ball `B_im`, `m ∈ {k, k−1}`, that can
    /// be active together with `B_jk`.
    links: Vec<Vec<Vec<(usize, usize, f64)>>>,
}

impl<'a> FlowField<'a> {
    pub fn new(c: &'a Ccbp) -> Self {
        let bump = BumpProfile::default();
        let levels = &c.net.levels;
        let index: Vec<SpatialIndex> = levels.iter().map(|l| SpatialIndex::new(&l.points)).collect();
        let mut links = vec![Vec::new()];
        for k in 1..levels.len() {
            let rk = levels[k].r;
            let row: Vec<Vec<(usize, usize, f64)>> = (0..levels[k].len())
                .into_par_iter()
                .map(|j| {
                    let x = levels[k].points[j];
                    let p = &c.planes[k][j];
                    let mut out = Vec::new();
                    for m in [k, k - 1] {
                        let rm = levels[m].r;
                        let mut near = Vec::new();
                        index[m].for_each_in_ball(&x, bump.outer * rk + EPS_REACH * rm, |i| near.push(i));
                        near.sort_unstable();
                        for i in near {
                            let xi = levels[m].points[i];
                            let d = plane_local_hausdorff(p, &c.planes[m][i], &xi, SAME_SCALE_REACH * rm).unwrap_or(MISSED_BALL);
                            out.push((m, i, d));
                        }
                    }
                    out
                })
                .collect();
            links.push(row);
        }
        FlowField { c, bump, index, links }
    }

    pub fn ccbp(&self) -> &Ccbp {
        self.c
    }

    /// Nonzero `θ_jk(y)` as `(j, θ)` pairs in ascending `j`.
    pub fn weights(&self, k: usize, y: &Vector) -> Vec<(usize, f64)> {
        let level = &self.c.net.levels[k];
        let mut raw = Vec::new();
        self.index[k].for_each_in_ball(y, self.bump.outer * level.r, |j| {
            let b = self.bump.value(y.dist(&level.points[j]) / level.r);
            if b > 0.0 {
                raw.push((j, b));
            }
        });
        raw.sort_unstable_by_key(|p| p.0);
        let total: f64 = raw.iter().map(|p| p.1).sum();
        let scale = total.max(1.0);
        raw.into_iter().map(|(j, b)| (j, b / scale)).collect()
    }

    pub fn sigma(&self, k: usize, y: &Vector) -> Vector {
        let mut out = *y;
        for (j, theta) in self.weights(k, y) {
            let p = &self.c.planes[k][j];
            out = out.axpy(theta, &(p.project(y) - *y));
        }
        out
    }

    pub fn epsilon_prime(&self, k: usize, y: &Vector) -> f64 {
        assert!(k >= 1, "ε′ is defined for k ≥ 1");
        let levels = &self.c.net.levels;
        let rk = levels[k].r;
        let mut active_j = Vec::new();
        self.index[k].for_each_in_ball(y, self.bump.outer * rk, |j| active_j.push(j));
        if active_j.is_empty() {
            return 0.0;
        }
        let mut marks: [Vec<bool>; 2] = [vec![false; levels[k].len()], vec![false; levels[k - 1].len()]];
        for (slot, m) in [k, k - 1].into_iter().enumerate() {
            let marks = &mut marks[slot];
            self.index[m].for_each_in_ball(y, EPS_REACH * levels[m].r, |i| marks[i] = true);
        }
        let mut sup = 0.0f64;
        for j in active_j {
            for &(m, i, d) in &self.links[k][j] {
                if d > sup && marks[k - m][i] {
                    sup = d;
                }
            }
        }
        sup
    }
}

/// `θ_jk(y)` for all balls of level `k`.
pub fn partition_weights(c: &Ccbp, k: usize, y: &Vector) -> Vec<(usize, f64)> {
    FlowField::new(c).weights(k, y)
}

/// `σ_k(y) = y + Σ_j θ_jk(y) (π_jk(y) − y)`.
pub fn sigma_k(c: &Ccbp, k: usize, y: &Vector) -> Vector {
    FlowField::new(c).sigma(k, y)
}

pub fn epsilon_prime(c: &Ccbp, k: usize, y: &Vector) -> f64 {
    FlowField::new(c).epsilon_prime(k, y)
}

/// Lattice points of `Σ₀` with the given spacing inside the disk of radius
/// `radius` about the projection of `center`.
pub fn sigma0_grid(sigma0: &AffinePlane, center: &Vector, radius: f64, spacing: f64) -> Result<Vec<Vector>> {
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::InvalidInput(format!("grid spacing {spacing} must be positive")));
    }
    let origin = sigma0.project(center);
    let basis = orthonormal_complement(&sigma0.normal);
    let m = (radius / spacing).floor() as i64;
    let n = basis.len();
    let estimate = (2 * m + 1) as f64;
    if estimate.powi(n as i32) > 4.0 * MAX_GRID as f64 {
        return Err(Error::InvalidInput(format!("grid with spacing {spacing} is too large")));
    }
    let mut counter = vec![-m; n];
    let mut out = Vec::new();
    loop {
        let mut y = origin;
        for (c, b) in counter.iter().zip(&basis) {
            y = y.axpy(*c as f64 * spacing, b);
        }
        if y.dist(&origin) < radius {
            out.push(y);
        }
        let mut axis = 0;
        loop {
            if axis == n {
                return if out.len() > MAX_GRID {
                    Err(Error::InvalidInput(format!("grid of {} points exceeds {MAX_GRID}", out.len())))
                } else {
                    Ok(out)
                };
            }
            counter[axis] += 1;
            if counter[axis] <= m {
                break;
            }
            counter[axis] = -m;
            axis += 1;
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowTrace {
    pub spacing: f64,
    pub depth: usize,
    /// Grid points `z` on `Σ₀`.
    pub grid: Vec<Vector>,
    /// `maps[k - 1][z] = f_k(z)` for `k = 1..=depth`.
    pub maps: Vec<Vec<Vector>>,
    /// `eps_prime[k - 1][z] = ε′_k(f_k(z))`.
    pub eps_prime: Vec<Vec<f64>>,
    /// `max_z |f_{k+1}(z) − f_k(z)|` for `k = 0..depth`.
    pub step: Vec<f64>,
    /// `step[k] / r_k`.
    pub step_ratio: Vec<f64>,
    /// Every step ratio is at most [`STEP_BOUND`].
    pub within_bound: bool,
    /// `max_z |f(z) − z|`.
    pub total_displacement: f64,
    pub achieved_eps: f64,
}

impl FlowTrace {
    /// `f(z) = f_J(z)`.
    pub fn image(&self) -> &[Vector] {
        self.maps.last().map_or(&self.grid, |m| m.as_slice())
    }

    /// Measured `C₀` in `|f(z) − z| ≤ C₀ · achieved_eps`.
    pub fn displacement_constant(&self) -> f64 {
        if self.achieved_eps > 0.0 {
            self.total_displacement / self.achieved_eps
        } else if self.total_displacement == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }

    /// Rows `z, f_1(z), …, f_J(z)`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let d = self.grid.first().map_or(0, Vector::dim);
        let mut header: Vec<String> = (0..d).map(|a| format!("z{a}")).collect();
        for k in 1..=self.maps.len() {
            header.extend((0..d).map(|a| format!("f{k}_{a}")));
        }
        w.write_record(&header)?;
        for (i, z) in self.grid.iter().enumerate() {
            let mut row: Vec<String> = z.as_slice().iter().map(|v| v.to_string()).collect();
            for m in &self.maps {
                row.extend(m[i].as_slice().iter().map(|v| v.to_string()));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `σ_0, …, σ_{J−1}` over a grid of `Σ₀ ∩ region` with spacing at most `r_J / 4`.
pub fn run_flow(c: &Ccbp, grid_spacing: f64, depth: usize) -> Result<FlowTrace> {
    if depth == 0 || depth > c.depth() {
        return Err(Error::InvalidInput(format!("flow depth {depth} outside 1..={}", c.depth())));
    }
    let r_deep = c.radius(depth);
    if grid_spacing > 0.25 * r_deep {
        return Err(Error::InvalidInput(format!(
            "grid spacing {grid_spacing} exceeds r_J/4 = {}",
            0.25 * r_deep
        )));
    }
    let region = &c.net.region;
    let grid = sigma0_grid(&c.sigma0, &region.center, region.radius, grid_spacing)?;
    let field = FlowField::new(c);
    let mut current = grid.clone();
    let mut maps = Vec::with_capacity(depth);
    let mut eps_prime = Vec::with_capacity(depth);
    let mut step = Vec::with_capacity(depth);
    let mut step_ratio = Vec::with_capacity(depth);
    for k in 0..depth {
        let rk = c.radius(k);
        let next: Vec<Vector> = current.par_iter().map(|y| field.sigma(k, y)).collect();
        let moved = current.iter().zip(&next).map(|(a, b)| a.dist(b)).fold(0.0, f64::max);
        if moved > DIVERGENCE_FACTOR * rk {
            return Err(Error::FlowDiverged {
                level: k,
                displacement: moved,
                limit: DIVERGENCE_FACTOR * rk,
            });
        }
        step.push(moved);
        step_ratio.push(moved / rk);
        eps_prime.push(next.par_iter().map(|y| field.epsilon_prime(k + 1, y)).collect());
        log::debug!("flow level {k}: step {moved:.3e} ({:.3} r_k)", moved / rk);
        maps.push(next.clone());
        current = next;
    }
    let total_displacement = grid.iter().zip(&current).map(|(a, b)| a.dist(b)).fold(0.0, f64::max);
    Ok(FlowTrace {
        spacing: grid_spacing,
        depth,
        within_bound: step_ratio.iter().all(|&s| s <= STEP_BOUND),
        grid,
        maps,
        eps_prime,
        step,
        step_ratio,
        total_displacement,
        achieved_eps: c.achieved_eps,
    })
}

/// `max_z Σ_{k=1..J} ε′_k(f_k(z))²`.
pub fn bilip_criterion(trace: &FlowTrace) -> f64 {
    criterion_terms(trace).into_iter().fold(0.0, f64::max)
}

/// `Σ_k ε′_k(f_k(z))²` per grid point.
pub fn criterion_terms(trace: &FlowTrace) -> Vec<f64> {
    (0..trace.grid.len())
        .map(|z| trace.eps_prime.iter().map(|e| e[z] * e[z]).sum())
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BilipEstimate {
    pub k_lower: f64,
    pub worst: (usize, usize),
    pub pairs: usize,
    pub sampled: bool,
}

fn pair_ratio(z: &[Vector], f: &[Vector], i: usize, j: usize) -> Result<f64> {
    let dz = z[i].dist(&z[j]);
    let df = f[i].dist(&f[j]);
    if df == 0.0 {
        return Err(Error::DegeneratePair(i, j));
    }
    Ok((df / dz).max(dz / df))
}

/// Largest distortion `max(|f(z)−f(w)|/|z−w|, |z−w|/|f(z)−f(w)|)` over grid pairs.
pub fn bilip_estimate(trace: &FlowTrace) -> Result<BilipEstimate> {
    bilip_of(&trace.grid, trace.image())
}

/// [`bilip_estimate`] for an arbitrary map given by point lists.
pub fn bilip_of(z: &[Vector], f: &[Vector]) -> Result<BilipEstimate> {
    let n = z.len();
    if n < 2 || f.len() != n {
        return Err(Error::InvalidInput("need at least two grid points and one image per point".into()));
    }
    let total = n * (n - 1) / 2;
    let mut best = (1.0f64, (0usize, 1usize));
    if total <= MAX_PAIRS {
        let rows: Vec<(f64, (usize, usize))> = (0..n - 1)
            .into_par_iter()
            .map(|i| {
                let mut row = (0.0f64, (i, i + 1));
                for j in i + 1..n {
                    let q = pair_ratio(z, f, i, j)?;
                    if q > row.0 {
                        row = (q, (i, j));
                    }
                }
                Ok(row)
            })
            .collect::<Result<_>>()?;
        for row in rows {
            if row.0 > best.0 {
                best = row;
            }
        }
        return Ok(BilipEstimate {
            k_lower: best.0,
            worst: best.1,
            pairs: total,
            sampled: false,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(PAIR_SEED);
    for _ in 0..MAX_PAIRS {
        let i = rng.gen_range(0..n);
        let mut j = rng.gen_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let q = pair_ratio(z, f, i, j)?;
        if q > best.0 {
            best = (q, (i.min(j), i.max(j)));
        }
    }
    Ok(BilipEstimate {
        k_lower: best.0,
        worst: best.1,
        pairs: MAX_PAIRS,
        sampled: true,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReifenbergConfig {
    pub radii: Vec<f64>,
    /// Sampling resolution of the point set; smaller radii are refused and
    /// gaps up to this size are not counted as holes.
    pub resolution: f64,
    /// Only centers inside this ball are audited.
    pub interior: Option<Ball>,
    /// Random subset of centers to audit.
    pub max_centers: Option<usize>,
    /// Probe lattice points per axis across the plane disk.
    pub probes_per_axis: usize,
    pub seed: u64,
}

impl ReifenbergConfig {
    pub fn new(radii: Vec<f64>, resolution: f64) -> Self {
        ReifenbergConfig {
            radii,
            resolution,
            interior: None,
            max_centers: None,
            probes_per_axis: 9,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReifenbergRecord {
    pub center: usize,
    pub r: f64,
    /// `sup` distance of points in the ball to the plane, over `r`.
    pub sup_term: f64,
    /// Largest gap between the plane disk and the point set, over `r`.
    pub hole_term: f64,
    pub score: f64,
    pub normal: Vector,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReifenbergAudit {
    pub worst: f64,
    /// `(r, worst score at r)`.
    pub per_radius: Vec<(f64, f64)>,
    pub records: Vec<ReifenbergRecord>,
}

fn principal_direction(rel: &[Vector]) -> Vector {
    use nalgebra::{DMatrix, SymmetricEigen};
    let d = rel[0].dim();
    let mut m = DMatrix::<f64>::zeros(d, d);
    for y in rel {
        for a in 0..d {
            for b in 0..d {
                m[(a, b)] += y[a] * y[b];
            }
        }
    }
    let eig = SymmetricEigen::new(m);
    let k = eig.eigenvalues.imin();
    let col: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
    Vector::from_slice(&col).normalized().unwrap_or_else(|| Vector::basis(d, d - 1))
}

/// Offsets of a lattice with `per_axis` points across `[-1, 1]^n` that fall in the unit ball.
fn disk_lattice(n: usize, per_axis: usize) -> Vec<Vec<f64>> {
    let per_axis = per_axis.max(2);
    let step = 2.0 / (per_axis - 1) as f64;
    let mut out = Vec::new();
    let mut counter = vec![0usize; n];
    loop {
        let c: Vec<f64> = counter.iter().map(|&i| -1.0 + i as f64 * step).collect();
        if c.iter().map(|v| v * v).sum::<f64>() <= 1.0 + 1e-12 {
            out.push(c);
        }
        let mut axis = 0;
        loop {
            if axis == n {
                return out;
            }
            counter[axis] += 1;
            if counter[axis] < per_axis {
                break;
            }
            counter[axis] = 0;
            axis += 1;
        }
    }
}

/// Two-sided flatness of a point set: for each center and radius, the best plane
/// through the center is scored by the larger of its deviation term and a hole term.
pub fn reifenberg_audit(points: &[Vector], cfg: &ReifenbergConfig) -> Result<ReifenbergAudit> {
    if points.is_empty() {
        return Err(Error::InvalidInput("no points to audit".into()));
    }
    for &r in &cfg.radii {
        if !(r > cfg.resolution) {
            return Err(Error::ResolutionExceeded { radius: r, h_min: cfg.resolution });
        }
    }
    let index = SpatialIndex::new(points);
    let mut centers: Vec<usize> = (0..points.len())
        .filter(|&i| cfg.interior.as_ref().is_none_or(|b| b.contains(&points[i])))
        .collect();
    if let Some(cap) = cfg.max_centers {
        if centers.len() > cap {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            for i in 0..cap {
                let j = rng.gen_range(i..centers.len());
                centers.swap(i, j);
            }
            centers.truncate(cap);
            centers.sort_unstable();
        }
    }
    let n = points[0].dim() - 1;
    let lattice = disk_lattice(n, cfg.probes_per_axis);
    let records: Vec<ReifenbergRecord> = centers
        .par_iter()
        .flat_map_iter(|&c| cfg.radii.iter().map(move |&r| (c, r)))
        .map(|(c, r)| {
            let x = points[c];
            let mut rel = Vec::new();
            index.for_each_in_ball(&x, r, |i| rel.push(points[i] - x));
            let start = principal_direction(&rel);
            let sup = |u: &Vector| rel.iter().map(|y| y.dot(u).abs()).fold(0.0, f64::max);
            let (mut u, mut value) = sphere_search::minimize(start, cfg.seed, sup);
            let v0 = sup(&start);
            if v0 < value {
                (u, value) = (start, v0);
            }
            let basis = orthonormal_complement(&u);
            let mut gap = 0.0f64;
            for offs in &lattice {
                let mut p = x;
                for (o, b) in offs.iter().zip(&basis) {
                    p = p.axpy(o * r, b);
                }
                let d = index.nearest(&p).map_or(f64::INFINITY, |(_, d)| d);
                gap = gap.max(d);
            }
            let sup_term = value / r;
            let hole_term = (gap - cfg.resolution).max(0.0) / r;
            ReifenbergRecord {
                center: c,
                r,
                sup_term,
                hole_term,
                score: sup_term.max(hole_term),
                normal: u,
            }
        })
        .collect();
    let per_radius = cfg
        .radii
        .iter()
        .map(|&r| (r, records.iter().filter(|x| x.r == r).map(|x| x.score).fold(0.0, f64::max)))
        .collect();
    Ok(ReifenbergAudit {
        worst: records.iter().map(|x| x.score).fold(0.0, f64::max),
        per_radius,
        records,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContainmentReport {
    pub checked: usize,
    pub max_distance: f64,
    pub tolerance: f64,
    pub violations: usize,
    /// Sample index attaining `max_distance`.
    pub worst: Option<usize>,
}

impl ContainmentReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

pub fn containment_tolerance(spacing: f64, r_deep: f64) -> f64 {
    2.0 * spacing + CONTAINMENT_FACTOR * r_deep
}

/// Distance from every sample in `region` to the nearest image point.
pub fn containment_check(s: &DiscreteSurface, region: &Ball, image: &[Vector], tolerance: f64) -> ContainmentReport {
    let index = SpatialIndex::new(image);
    let mut inside = s.ball(&region.center, region.radius);
    inside.sort_unstable();
    let dists: Vec<(usize, f64)> = inside
        .par_iter()
        .map(|&i| (i, index.nearest(&s.point(i)).map_or(f64::INFINITY, |(_, d)| d)))
        .collect();
    let mut report = ContainmentReport {
        checked: dists.len(),
        max_distance: 0.0,
        tolerance,
        violations: 0,
        worst: None,
    };
    for (i, d) in dists {
        if d > tolerance {
            report.violations += 1;
        }
        if report.worst.is_none() || d > report.max_distance {
            report.max_distance = d;
            report.worst = Some(i);
        }
    }
    report
}

/// Numbers reported for one flow run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowSummary {
    pub depth: usize,
    pub grid_points: usize,
    pub spacing: f64,
    pub achieved_eps: f64,
    pub criterion: f64,
    pub k_lower: f64,
    pub worst_pair: (usize, usize),
    pub pairs_sampled: bool,
    pub step: Vec<f64>,
    pub step_ratio: Vec<f64>,
    pub within_bound: bool,
    pub total_displacement: f64,
    pub displacement_constant: f64,
}

pub fn summarize(trace: &FlowTrace) -> Result<FlowSummary> {
    let est = bilip_estimate(trace)?;
    Ok(FlowSummary {
        depth: trace.depth,
        grid_points: trace.grid.len(),
        spacing: trace.spacing,
        achieved_eps: trace.achieved_eps,
        criterion: bilip_criterion(trace),
        k_lower: est.k_lower,
        worst_pair: est.worst,
        pairs_sampled: est.sampled,
        step: trace.step.clone(),
        step_ratio: trace.step_ratio.clone(),
        within_bound: trace.within_bound,
        total_displacement: trace.total_displacement,
        displacement_constant: trace.displacement_constant(),
    })
}
