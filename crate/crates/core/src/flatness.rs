//! Multiscale flatness statistics: α, β₁, β∞ and Carleson sums.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AffinePlane, Vector};
use crate::measure::{weighted_mean_vec, DiscreteSurface};
use crate::sphere_search;

const SEARCH_SEED: u64 = 0xB37A;

/// Geometric scales `r_j = r0 · ratio^{-j}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleLadder {
    pub r0: f64,
    pub ratio: f64,
    pub depth: usize,
}

impl ScaleLadder {
    pub fn new(r0: f64, ratio: f64, depth: usize) -> Result<Self> {
        if !(r0 > 0.0 && r0 <= 1.0) {
            return Err(Error::InvalidInput(format!("r0 = {r0} outside (0, 1]")));
        }
        if !(ratio > 1.0 && ratio.is_finite()) {
            return Err(Error::InvalidInput(format!("ratio = {ratio} must exceed 1")));
        }
        if depth == 0 {
            return Err(Error::InvalidInput("depth must be at least 1".into()));
        }
        Ok(ScaleLadder { r0, ratio, depth })
    }

    pub fn radius(&self, j: usize) -> f64 {
        self.r0 * self.ratio.powi(-(j as i32))
    }

    /// `r_1, ..., r_J`.
    pub fn radii(&self) -> Vec<f64> {
        (1..=self.depth).map(|j| self.radius(j)).collect()
    }
}

/// Ball points relative to the center, with weights.
struct BallSample {
    rel: Vec<Vector>,
    w: Vec<f64>,
    mass: f64,
}

fn gather(s: &DiscreteSurface, x: &Vector, r: f64) -> Result<BallSample> {
    let idx = s.ball(x, r);
    let mut rel = Vec::with_capacity(idx.len());
    let mut w = Vec::with_capacity(idx.len());
    let mut mass = 0.0;
    for i in idx {
        rel.push(s.point(i) - *x);
        w.push(s.weights()[i]);
        mass += s.weights()[i];
    }
    if mass <= 0.0 {
        return Err(Error::EmptyBall { radius: r });
    }
    Ok(BallSample { rel, w, mass })
}

/// `α(x, r)` together with the average normal `ν_{x,r}`.
pub fn alpha_with_normal(s: &DiscreteSurface, x: &Vector, r: f64) -> Result<(f64, Vector)> {
    let normals = s.normals()?;
    let idx = s.ball(x, r);
    let nu_bar = weighted_mean_vec(s, normals, &idx, r)?;
    let mut m = 0.0;
    let mut acc = 0.0;
    for &i in &idx {
        let w = s.weights()[i];
        m += w;
        acc += w * normals[i].dist_squared(&nu_bar);
    }
    Ok(((acc / m).sqrt(), nu_bar))
}

/// `α(x, r)`: root mean square deviation of the unit normal from its ball average.
pub fn alpha(s: &DiscreteSurface, x: &Vector, r: f64) -> Result<f64> {
    alpha_with_normal(s, x, r).map(|a| a.0)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LevelAlpha {
    pub j: usize,
    pub r: f64,
    pub alpha: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CarlesonSum {
    pub value: f64,
    pub levels: Vec<LevelAlpha>,
    /// Levels below the sampling resolution, left out of the sum.
    pub skipped: usize,
}

/// `Σ_{j=1..J} α²(x, r_j)` over the resolvable levels of the ladder.
pub fn carleson_dyadic_sum(s: &DiscreteSurface, x: &Vector, ladder: &ScaleLadder) -> Result<CarlesonSum> {
    let h_min = s.h_min();
    let mut levels = Vec::new();
    let mut skipped = 0;
    for j in 1..=ladder.depth {
        let r = ladder.radius(j);
        if r < h_min {
            skipped += 1;
            continue;
        }
        levels.push(LevelAlpha { j, r, alpha: alpha(s, x, r)? });
    }
    Ok(CarlesonSum {
        value: levels.iter().map(|l| l.alpha * l.alpha).sum(),
        levels,
        skipped,
    })
}

/// Log-midpoint rule for `∫_{r_lo}^{r_hi} α²(x, r) dr/r`.
pub fn carleson_integral_over(s: &DiscreteSurface, x: &Vector, r_lo: f64, r_hi: f64, quad_points: usize) -> Result<f64> {
    if quad_points == 0 {
        return Err(Error::InvalidInput("need at least one quadrature point".into()));
    }
    if !(r_lo > 0.0 && r_hi >= r_lo) {
        return Err(Error::InvalidInput(format!("bad integration range [{r_lo}, {r_hi}]")));
    }
    let span = (r_hi / r_lo).ln();
    let dt = span / quad_points as f64;
    let mut sum = 0.0;
    for k in 0..quad_points {
        let r = r_lo * ((k as f64 + 0.5) * dt).exp();
        let a = alpha(s, x, r)?;
        sum += a * a * dt;
    }
    Ok(sum)
}

/// `∫_{h_min}^{r_max} α²(x, r) dr/r`.
pub fn carleson_integral(s: &DiscreteSurface, x: &Vector, r_max: f64, quad_points: usize) -> Result<f64> {
    let h_min = s.h_min();
    if r_max < h_min {
        return Err(Error::ResolutionExceeded { radius: r_max, h_min });
    }
    carleson_integral_over(s, x, h_min, r_max, quad_points)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DyadicRecord {
    pub probe: usize,
    pub x: Vector,
    pub dyadic: f64,
    pub integral: f64,
    pub ratio: f64,
    /// Both quantities vanish; the ratio is set to 1.
    pub degenerate: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DyadicReport {
    pub ladder: ScaleLadder,
    /// Integration range shared by all probes.
    pub r_lo: f64,
    pub r_hi: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub degenerate: usize,
    pub records: Vec<DyadicRecord>,
}

const DEGENERATE: f64 = 1e-14;
const QUAD_PER_LEVEL: usize = 8;

/// Compares the dyadic sum over resolvable levels with the integral over the
/// matching range `[max(h_min, r_J'/ratio), r_1]`, `J'` the last resolvable level.
pub fn check_dyadic_equivalence(s: &DiscreteSurface, probes: &[usize], ladder: &ScaleLadder) -> Result<DyadicReport> {
    let h_min = s.h_min();
    let resolvable = (1..=ladder.depth).filter(|&j| ladder.radius(j) >= h_min).count();
    if resolvable == 0 {
        return Err(Error::ResolutionExceeded {
            radius: ladder.radius(1),
            h_min,
        });
    }
    let r_hi = ladder.radius(1);
    let r_lo = (ladder.radius(resolvable) / ladder.ratio).max(h_min);
    let quad = QUAD_PER_LEVEL * resolvable;
    let records: Vec<DyadicRecord> = probes
        .par_iter()
        .map(|&p| {
            let x = s.point(p);
            let dyadic = carleson_dyadic_sum(s, &x, ladder)?.value;
            let integral = carleson_integral_over(s, &x, r_lo, r_hi, quad)?;
            let degenerate = dyadic < DEGENERATE && integral < DEGENERATE;
            let ratio = if degenerate { 1.0 } else { dyadic / integral };
            Ok(DyadicRecord {
                probe: p,
                x,
                dyadic,
                integral,
                ratio,
                degenerate,
            })
        })
        .collect::<Result<_>>()?;
    let live = records.iter().filter(|r| !r.degenerate).map(|r| r.ratio);
    let ratio_min = live.clone().fold(f64::INFINITY, f64::min);
    let ratio_max = live.fold(f64::NEG_INFINITY, f64::max);
    let (ratio_min, ratio_max) = if ratio_min.is_finite() { (ratio_min, ratio_max) } else { (1.0, 1.0) };
    Ok(DyadicReport {
        ladder: *ladder,
        r_lo,
        r_hi,
        ratio_min,
        ratio_max,
        degenerate: records.iter().filter(|r| r.degenerate).count(),
        records,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormalRecord {
    pub probe: usize,
    pub x: Vector,
    pub r: f64,
    pub norm: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormalBoundReport {
    pub eps1_sq: f64,
    /// Largest `∫_{h_min}^{r_max} α² dr/r` over the probes.
    pub carleson_max: f64,
    /// Whether the measured Carleson integral is within `eps1_sq`.
    pub in_regime: bool,
    pub min_norm: f64,
    pub skipped_radii: Vec<f64>,
    /// Records with `|ν_{x,r}| < 1/2`.
    pub violations: Vec<NormalRecord>,
    /// In regime yet violating: a genuine failure of the lower bound.
    pub contradiction: bool,
    pub records: Vec<NormalRecord>,
}

/// Measures `|ν_{x,r}|` over probes × resolvable radii and checks it against
/// the `1/2` lower bound expected under a small Carleson integral.
pub fn check_normal_lower_bound(
    s: &DiscreteSurface,
    probes: &[usize],
    radii: &[f64],
    eps1_sq: f64,
) -> Result<NormalBoundReport> {
    s.normals()?;
    let h_min = s.h_min();
    let (radii, skipped_radii): (Vec<f64>, Vec<f64>) = radii.iter().partition(|&&r| r >= h_min);
    let r_max = radii.iter().copied().fold(0.0, f64::max);
    let per_probe: Vec<(Vec<NormalRecord>, f64)> = probes
        .par_iter()
        .map(|&p| {
            let x = s.point(p);
            let recs = radii
                .iter()
                .map(|&r| {
                    let (_, nu) = alpha_with_normal(s, &x, r)?;
                    Ok(NormalRecord { probe: p, x, r, norm: nu.norm() })
                })
                .collect::<Result<Vec<_>>>()?;
            let c = if radii.is_empty() { 0.0 } else { carleson_integral(s, &x, r_max, 24)? };
            Ok((recs, c))
        })
        .collect::<Result<_>>()?;
    let carleson_max = per_probe.iter().map(|p| p.1).fold(0.0, f64::max);
    let records: Vec<NormalRecord> = per_probe.into_iter().flat_map(|p| p.0).collect();
    let violations: Vec<NormalRecord> = records.iter().filter(|r| r.norm < 0.5).cloned().collect();
    let in_regime = carleson_max <= eps1_sq;
    Ok(NormalBoundReport {
        eps1_sq,
        carleson_max,
        in_regime,
        min_norm: records.iter().map(|r| r.norm).fold(f64::INFINITY, f64::min),
        skipped_radii,
        contradiction: in_regime && !violations.is_empty(),
        violations,
        records,
    })
}

/// Smallest-eigenvalue eigenvector of the weighted second moment of `rel` about `origin`.
fn principal_normal(rel: &[Vector], w: &[f64], origin: &Vector) -> Vector {
    let d = origin.dim();
    let mut m = DMatrix::<f64>::zeros(d, d);
    for (y, &wi) in rel.iter().zip(w) {
        let z = *y - *origin;
        for a in 0..d {
            for b in a..d {
                m[(a, b)] += wi * z[a] * z[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            m[(a, b)] = m[(b, a)];
        }
    }
    let eig = SymmetricEigen::new(m);
    let k = eig.eigenvalues.imin();
    let col: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
    Vector::from_slice(&col).normalized().unwrap_or_else(|| Vector::basis(d, d - 1))
}

/// `Σ w |⟨y, u⟩ − c|` at the optimal offset `c` (the weighted median); returns `(value, c)`.
fn l1_fit(rel: &[Vector], w: &[f64], u: &Vector, buf: &mut Vec<(f64, f64)>) -> (f64, f64) {
    buf.clear();
    buf.extend(rel.iter().zip(w).map(|(y, &wi)| (y.dot(u), wi)));
    buf.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = buf.iter().map(|p| p.1).sum();
    let mut acc = 0.0;
    let mut c = buf.last().map_or(0.0, |p| p.0);
    for &(p, wi) in buf.iter() {
        acc += wi;
        if acc >= 0.5 * total {
            c = p;
            break;
        }
    }
    (buf.iter().map(|&(p, wi)| wi * (p - c).abs()).sum(), c)
}

fn centroid(rel: &[Vector], w: &[f64], mass: f64) -> Vector {
    let mut c = Vector::zeros(rel[0].dim());
    for (y, &wi) in rel.iter().zip(w) {
        c = c.axpy(wi / mass, y);
    }
    c
}

/// Normalized `L¹` deviation of the ball sample from a given plane.
pub fn beta1_at_plane(s: &DiscreteSurface, x: &Vector, r: f64, plane: &AffinePlane) -> Result<f64> {
    let b = gather(s, x, r)?;
    let scale = r.powi(s.dim_n() as i32 + 1);
    Ok(b.rel.iter().zip(&b.w).map(|(y, &w)| w * plane.distance(&(*y + *x))).sum::<f64>() / scale)
}

/// The weighted principal-component plane through the ball's center of mass.
pub fn pca_plane(s: &DiscreteSurface, x: &Vector, r: f64) -> Result<AffinePlane> {
    let b = gather(s, x, r)?;
    let c = centroid(&b.rel, &b.w, b.mass);
    let normal = principal_normal(&b.rel, &b.w, &c);
    AffinePlane::new(c + *x, normal)
}

/// `β₁(x, r)` and an approximate minimizing plane.
pub fn beta1(s: &DiscreteSurface, x: &Vector, r: f64) -> Result<(f64, AffinePlane)> {
    let b = gather(s, x, r)?;
    let scale = r.powi(s.dim_n() as i32 + 1);
    let c = centroid(&b.rel, &b.w, b.mass);
    let pca = principal_normal(&b.rel, &b.w, &c);
    let mut buf = Vec::with_capacity(b.rel.len());
    let (u, _) = sphere_search::minimize(pca, SEARCH_SEED, |u| l1_fit(&b.rel, &b.w, u, &mut buf).0);
    let (value, offset) = l1_fit(&b.rel, &b.w, &u, &mut buf);
    // the PCA plane through the centroid is always a candidate
    let pca_value: f64 = b.rel.iter().zip(&b.w).map(|(y, &w)| w * (*y - c).dot(&pca).abs()).sum();
    if pca_value < value {
        return Ok((pca_value / scale, AffinePlane::new(c + *x, pca)?));
    }
    Ok((value / scale, AffinePlane::new(u * offset + *x, u)?))
}

/// `β∞(x, r)` over planes through `x`, with the sup taken over sample points.
pub fn beta_inf(s: &DiscreteSurface, x: &Vector, r: f64) -> Result<(f64, AffinePlane)> {
    let b = gather(s, x, r)?;
    let origin = Vector::zeros(x.dim());
    let start = principal_normal(&b.rel, &b.w, &origin);
    let sup = |u: &Vector| b.rel.iter().map(|y| y.dot(u).abs()).fold(0.0, f64::max);
    let (mut u, mut value) = sphere_search::minimize(start, SEARCH_SEED, sup);
    let v0 = sup(&start);
    if v0 < value {
        (u, value) = (start, v0);
    }
    Ok((value / r, AffinePlane::new(*x, u)?))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlatnessRecord {
    pub x: Vector,
    pub r: f64,
    pub alpha: f64,
    pub beta1: f64,
    pub beta_inf: f64,
    pub best_plane: AffinePlane,
}

/// All per-ball statistics. `alpha` is `NaN` when the surface has no normals.
pub fn flatness_record(s: &DiscreteSurface, x: &Vector, r: f64) -> Result<FlatnessRecord> {
    let alpha = match alpha(s, x, r) {
        Ok(a) => a,
        Err(Error::MissingNormals) => f64::NAN,
        Err(e) => return Err(e),
    };
    let (beta1, best_plane) = beta1(s, x, r)?;
    let (beta_inf, _) = beta_inf(s, x, r)?;
    Ok(FlatnessRecord {
        x: *x,
        r,
        alpha,
        beta1,
        beta_inf,
        best_plane,
    })
}

/// Flatness records over probes × radii, skipping radii below `h_min`.
pub fn flatness_table(s: &DiscreteSurface, probes: &[usize], radii: &[f64]) -> Result<Vec<FlatnessRecord>> {
    let h_min = s.h_min();
    let radii: Vec<f64> = radii.iter().copied().filter(|&r| r >= h_min).collect();
    let nested: Vec<Vec<FlatnessRecord>> = probes
        .par_iter()
        .map(|&p| radii.iter().map(|&r| flatness_record(s, &s.point(p), r)).collect())
        .collect::<Result<_>>()?;
    Ok(nested.into_iter().flatten().collect())
}
