//! Escape points away from low-dimensional subspaces, conditioning bounds for
//! well-separated frames, and effectively spanning ball sequences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AffinePlane, Vector};
use crate::measure::{center_of_mass, DiscreteSurface};

const RANK_TOL: f64 = 1e-12;

/// An affine subspace `origin + span(basis)` with an orthonormal basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subspace {
    pub origin: Vector,
    pub basis: Vec<Vector>,
}

impl Subspace {
    /// The zero-dimensional subspace `{origin}`.
    pub fn point(origin: Vector) -> Self {
        Subspace { origin, basis: Vec::new() }
    }

    /// Validates that `basis` is orthonormal to `1e-12`.
    pub fn new(origin: Vector, basis: Vec<Vector>) -> Result<Self> {
        for (i, a) in basis.iter().enumerate() {
            if a.dim() != origin.dim() {
                return Err(Error::InvalidInput("basis dimension mismatch".into()));
            }
            for (j, b) in basis.iter().enumerate().take(i + 1) {
                let want = if i == j { 1.0 } else { 0.0 };
                if (a.dot(b) - want).abs() > 1e-12 {
                    return Err(Error::InvalidInput(format!("basis vectors {j} and {i} are not orthonormal")));
                }
            }
        }
        Ok(Subspace { origin, basis })
    }

    /// Orthonormalizes `dirs` (twice-iterated Gram-Schmidt); fails on rank deficiency.
    pub fn spanned(origin: Vector, dirs: &[Vector]) -> Result<Self> {
        let mut basis: Vec<Vector> = Vec::with_capacity(dirs.len());
        for d in dirs {
            let mut w = *d;
            for _ in 0..2 {
                for b in &basis {
                    w = w.axpy(-w.dot(b), b);
                }
            }
            let norm = w.norm();
            if norm <= RANK_TOL * d.norm().max(1.0) {
                return Err(Error::InvalidInput("spanning vectors are linearly dependent".into()));
            }
            basis.push(w * (1.0 / norm));
        }
        Ok(Subspace { origin, basis })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }
}

/// Distance from `y` to the affine subspace.
pub fn dist_to_subspace(y: &Vector, v: &Subspace) -> f64 {
    let mut z = *y - v.origin;
    for b in &v.basis {
        z = z.axpy(-z.dot(b), b);
    }
    z.norm()
}

/// Sample point of `B_{r0}(x0)` farthest from `v` (lowest index on ties).
fn farthest_from(s: &DiscreteSurface, v: &Subspace, x0: &Vector, r0: f64) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for i in s.ball(x0, r0) {
        let d = dist_to_subspace(&s.point(i), v);
        best = match best {
            Some((bi, bd)) if bd > d || (bd == d && bi < i) => Some((bi, bd)),
            _ => Some((i, d)),
        };
    }
    best
}

fn check_subspace(s: &DiscreteSurface, v: &Subspace) -> Result<()> {
    let max = s.dim_n().saturating_sub(1);
    if v.dim() > max {
        return Err(Error::InvalidSubspace { dim: v.dim(), max });
    }
    if v.origin.dim() != s.ambient_dim() {
        return Err(Error::InvalidInput("subspace lives in the wrong ambient dimension".into()));
    }
    Ok(())
}

/// With `r = c0·r0`, a sample point `x ∈ B_{r0}(x0)` outside the `11r`-neighborhood
/// of `v` such that `B_r(x) ⊂ B_{2r0}(x0)`; the one farthest from `v` is returned.
pub fn escape_point(s: &DiscreteSurface, v: &Subspace, x0: &Vector, r0: f64, c0: f64) -> Result<(Vector, f64)> {
    check_subspace(s, v)?;
    if !(c0 > 0.0 && c0 <= 0.5) {
        return Err(Error::InvalidInput(format!("c0 = {c0} outside (0, 1/2]")));
    }
    if !(r0 > 0.0) {
        return Err(Error::InvalidInput(format!("r0 = {r0} must be positive")));
    }
    let r = c0 * r0;
    match farthest_from(s, v, x0, r0) {
        Some((i, d)) if d >= 11.0 * r && s.point(i).dist(x0) + r <= 2.0 * r0 => Ok((s.point(i), r)),
        _ => Err(Error::NoEscapePoint { neighborhood: 11.0 * r }),
    }
}

/// A random `k`-dimensional subspace through a point near `x0`.
fn random_subspace(rng: &mut ChaCha8Rng, x0: &Vector, r0: f64, k: usize) -> Subspace {
    let d = x0.dim();
    loop {
        let mut origin = *x0;
        for a in 0..d {
            origin[a] += rng.gen_range(-0.5..0.5) * r0 / (d as f64).sqrt();
        }
        let dirs: Vec<Vector> = (0..k)
            .map(|_| {
                let c: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                Vector::from_slice(&c)
            })
            .collect();
        if let Ok(v) = Subspace::spanned(origin, &dirs) {
            return v;
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct C0Calibration {
    /// Largest grid value `2^{-m}` that succeeded on every instance.
    pub c0: f64,
    /// No grid value succeeded; `c0` is then the smallest grid value.
    pub failed: bool,
    /// Smallest `max dist(x, V) / (11 r0)` over all instances.
    pub critical: f64,
    pub instances: usize,
}

/// Grid of admissible escape constants, largest first.
pub const C0_GRID_LEVELS: i32 = 16;

/// Measures the largest `c0 ∈ {1/2, 1/4, …}` for which [`escape_point`] succeeds
/// for every probe and `trials` random subspaces of each dimension `k ≤ n − 1`.
pub fn calibrate_c0(s: &DiscreteSurface, probes: &[usize], r0: f64, trials: usize, seed: u64) -> Result<C0Calibration> {
    let n = s.dim_n();
    let per_probe: Vec<f64> = probes
        .par_iter()
        .map(|&p| {
            let x0 = s.point(p);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (p as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut worst = f64::INFINITY;
            for k in 0..n {
                for t in 0..trials.max(1) {
                    let v = if k == 0 && t == 0 { Subspace::point(x0) } else { random_subspace(&mut rng, &x0, r0, k) };
                    let d = farthest_from(s, &v, &x0, r0).map_or(0.0, |b| b.1);
                    worst = worst.min(d / (11.0 * r0));
                }
            }
            worst
        })
        .collect();
    let critical = per_probe.iter().copied().fold(f64::INFINITY, f64::min);
    let mut c0 = 0.5f64.powi(C0_GRID_LEVELS);
    let mut failed = true;
    for m in 1..=C0_GRID_LEVELS {
        let c = 0.5f64.powi(m);
        if c <= critical {
            c0 = c;
            failed = false;
            break;
        }
    }
    Ok(C0Calibration {
        c0,
        failed,
        critical,
        instances: probes.len() * n * trials.max(1),
    })
}

/// `K1 = √n·K0^{n−1}·(n−1)!/k0^n`.
pub fn k1_bound(n: usize, k0: f64, big_k0: f64) -> f64 {
    let fact: f64 = (1..n).map(|i| i as f64).product();
    (n as f64).sqrt() * big_k0.powi(n as i32 - 1) * fact / k0.powi(n as i32)
}

/// Coefficients `β` with `v = Σ β_j u_j`, for a frame satisfying the
/// size and separation hypotheses `k0·R ≤ |u_1|`, `|u_j| ≤ K0·R`,
/// `dist(u_j, span{u_1..u_{j−1}}) ≥ k0·R`.
pub fn gs_decompose(u: &[Vector], v: &Vector, big_r: f64, k0: f64, big_k0: f64) -> Result<Vec<f64>> {
    let bad = |m: String| Err(Error::HypothesisViolated(m));
    if u.is_empty() {
        return bad("empty frame".into());
    }
    if !(big_r > 0.0 && k0 > 0.0 && big_k0 > 0.0) {
        return bad(format!("R, k0, K0 must be positive (got {big_r}, {k0}, {big_k0})"));
    }
    if k0 > big_k0 {
        return bad(format!("k0 = {k0} exceeds K0 = {big_k0}"));
    }
    if u.iter().any(|w| w.dim() != v.dim()) {
        return bad("frame and vector dimensions differ".into());
    }
    for (j, w) in u.iter().enumerate() {
        if w.norm() > big_k0 * big_r * (1.0 + 1e-12) {
            return bad(format!("|u_{}| = {} exceeds K0·R = {}", j + 1, w.norm(), big_k0 * big_r));
        }
    }
    // modified Gram-Schmidt: u_j = Σ_{i≤j} rmat[i][j] e_i
    let m = u.len();
    let mut e: Vec<Vector> = Vec::with_capacity(m);
    let mut rmat = vec![vec![0.0; m]; m];
    for j in 0..m {
        let mut w = u[j];
        for _ in 0..2 {
            for (i, ei) in e.iter().enumerate() {
                let c = w.dot(ei);
                rmat[i][j] += c;
                w = w.axpy(-c, ei);
            }
        }
        let d = w.norm();
        if d < k0 * big_r * (1.0 - 1e-12) {
            return if j == 0 {
                bad(format!("|u_1| = {d} is below k0·R = {}", k0 * big_r))
            } else {
                bad(format!(
                    "u_{} lies within {} of span{{u_1..u_{}}} (need {})",
                    j + 1,
                    d,
                    j,
                    k0 * big_r
                ))
            };
        }
        rmat[j][j] = d;
        e.push(w * (1.0 / d));
    }
    let mut coords: Vec<f64> = e.iter().map(|ei| v.dot(ei)).collect();
    let mut rest = *v;
    for (ei, &c) in e.iter().zip(&coords) {
        rest = rest.axpy(-c, ei);
    }
    if rest.norm() > 1e-10 * v.norm().max(f64::MIN_POSITIVE) && rest.norm() > 1e-300 {
        return bad(format!("v is not in the span of the frame (residual {})", rest.norm()));
    }
    for j in (0..m).rev() {
        let mut acc = coords[j];
        for i in j + 1..m {
            acc -= rmat[j][i] * coords[i];
        }
        coords[j] = acc / rmat[j][j];
    }
    Ok(coords)
}

/// `n + 1` sample balls whose projected centers of mass span the plane with
/// quantitative separation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EffectiveSpan {
    pub y: Vec<Vector>,
    /// Centers of mass `p(y_l)` of `B_r(y_l)`.
    pub masses: Vec<Vector>,
    /// Projections `q_l` of the centers of mass onto the plane.
    pub q: Vec<Vector>,
    pub r: f64,
    pub plane: AffinePlane,
}

impl EffectiveSpan {
    /// The frame `q_l − q_0`, `l = 1..n`.
    pub fn frame(&self) -> Vec<Vector> {
        self.q[1..].iter().map(|q| *q - self.q[0]).collect()
    }

    /// `K0` for which the frame is admissible with `R = r`, `k0 = 5`.
    pub fn admissible_k0(&self) -> f64 {
        self.frame().iter().map(|u| u.norm() / self.r).fold(5.0, f64::max)
    }

    /// Checks the containment and separation properties against `(x̃, r_k)`;
    /// returns the first failure.
    pub fn verify(&self, center: &Vector, r_k: f64) -> std::result::Result<(), String> {
        for (l, y) in self.y.iter().enumerate() {
            if y.dist(center) + self.r > 2.0 * r_k * (1.0 + 1e-12) {
                return Err(format!("B_r(y_{l}) leaves B_(2r_k)(x)"));
            }
        }
        let frame = self.frame();
        for l in 0..frame.len() {
            let v = Subspace::spanned(Vector::zeros(center.dim()), &frame[..l]).map_err(|e| e.to_string())?;
            let d = dist_to_subspace(&frame[l], &v);
            if d < 5.0 * self.r {
                return Err(format!("q_{} - q_0 is within {d} of the previous span (need {})", l + 1, 5.0 * self.r));
            }
        }
        Ok(())
    }
}

/// Builds `y_0 = x̃, y_1, …, y_n` by repeated escapes from the span of the
/// projected centers of mass found so far.
pub fn build_effective_span(
    s: &DiscreteSurface,
    center: &Vector,
    r_k: f64,
    plane: &AffinePlane,
    c0: f64,
) -> Result<EffectiveSpan> {
    if !(c0 > 0.0 && c0 <= 0.5) {
        return Err(Error::InvalidInput(format!("c0 = {c0} outside (0, 1/2]")));
    }
    let r = c0 * r_k;
    let n = s.dim_n();
    let mut y = vec![*center];
    let mut masses = vec![center_of_mass(s, center, r)?];
    let mut q = vec![plane.project(&masses[0])];
    for _ in 1..=n {
        let dirs: Vec<Vector> = q[1..].iter().map(|ql| *ql - q[0]).collect();
        let v = Subspace::spanned(q[0], &dirs)?;
        let (yl, _) = escape_point(s, &v, center, r_k, c0)?;
        let p = center_of_mass(s, &yl, r)?;
        y.push(yl);
        q.push(plane.project(&p));
        masses.push(p);
    }
    let span = EffectiveSpan {
        y,
        masses,
        q,
        r,
        plane: *plane,
    };
    span.verify(center, r_k).map_err(Error::HypothesisViolated)?;
    Ok(span)
}
