//! Tangential gradients, Lipschitz extensions and local Lipschitz constants,
//! and audits of Poincaré-type inequalities on sampled surfaces.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{orthonormal_complement, Vector};
use crate::measure::DiscreteSurface;

/// Closed-form scalar fields with analytic gradients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TestFunction {
    /// `⟨y, a⟩`.
    Linear { a: Vector },
    /// `|y − p|`.
    Distance { p: Vector },
    /// `(1 − s²)²` for `s = |y − c|/radius < 1`, else 0.
    Bump { center: Vector, radius: f64 },
    /// `Σ amp · sin(⟨k, y⟩ + phase)`.
    Trig { modes: Vec<TrigMode> },
    /// `(⟨y, d⟩ − offset)/width` clamped to `[−1, 1]`.
    Ramp { direction: Vector, offset: f64, width: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigMode {
    pub k: Vector,
    pub phase: f64,
    pub amp: f64,
}

impl TestFunction {
    pub fn value(&self, y: &Vector) -> f64 {
        match self {
            TestFunction::Linear { a } => y.dot(a),
            TestFunction::Distance { p } => y.dist(p),
            TestFunction::Bump { center, radius } => {
                let s2 = y.dist_squared(center) / (radius * radius);
                if s2 < 1.0 {
                    (1.0 - s2) * (1.0 - s2)
                } else {
                    0.0
                }
            }
            TestFunction::Trig { modes } => modes.iter().map(|m| m.amp * (m.k.dot(y) + m.phase).sin()).sum(),
            TestFunction::Ramp { direction, offset, width } => ((y.dot(direction) - offset) / width).clamp(-1.0, 1.0),
        }
    }

    pub fn gradient(&self, y: &Vector) -> Vector {
        let zero = Vector::zeros(y.dim());
        match self {
            TestFunction::Linear { a } => *a,
            TestFunction::Distance { p } => (*y - *p).normalized().unwrap_or(zero),
            TestFunction::Bump { center, radius } => {
                let r2 = radius * radius;
                let s2 = y.dist_squared(center) / r2;
                if s2 < 1.0 {
                    (*y - *center) * (-4.0 * (1.0 - s2) / r2)
                } else {
                    zero
                }
            }
            TestFunction::Trig { modes } => modes
                .iter()
                .fold(zero, |g, m| g.axpy(m.amp * (m.k.dot(y) + m.phase).cos(), &m.k)),
            TestFunction::Ramp { direction, offset, width } => {
                let t = (y.dot(direction) - offset) / width;
                if t.abs() < 1.0 {
                    *direction * (1.0 / width)
                } else {
                    zero
                }
            }
        }
    }

    /// A global Lipschitz bound.
    pub fn lipschitz(&self) -> f64 {
        match self {
            TestFunction::Linear { a } => a.norm(),
            TestFunction::Distance { .. } => 1.0,
            // max of 4 s (1 − s²) is 8/(3√3)
            TestFunction::Bump { radius, .. } => 8.0 / (3.0 * 3f64.sqrt()) / radius,
            TestFunction::Trig { modes } => modes.iter().map(|m| m.amp.abs() * m.k.norm()).sum(),
            TestFunction::Ramp { direction, width, .. } => direction.norm() / width,
        }
    }

    /// Random trigonometric sum with `modes ≤ 5` frequencies of norm at most `max_freq`.
    pub fn random_trig(dim: usize, modes: usize, max_freq: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let modes = (0..modes.min(5))
            .map(|_| {
                let mut k = Vector::zeros(dim);
                for a in 0..dim {
                    k[a] = rng.gen_range(-1.0..1.0);
                }
                let k = k.normalized().unwrap_or(Vector::basis(dim, 0)) * rng.gen_range(0.5 * max_freq..=max_freq);
                TrigMode {
                    k,
                    phase: rng.gen_range(0.0..std::f64::consts::TAU),
                    amp: rng.gen_range(0.5..1.0) / (modes.max(1) as f64),
                }
            })
            .collect();
        TestFunction::Trig { modes }
    }

    pub fn values(&self, s: &DiscreteSurface) -> Vec<f64> {
        s.points().par_iter().map(|y| self.value(y)).collect()
    }
}

/// Coordinate functions, distance to a far point, a bump and two trigonometric sums.
pub fn standard_family(dim: usize, seed: u64) -> Vec<TestFunction> {
    let mut out: Vec<TestFunction> = (0..dim).map(|a| TestFunction::Linear { a: Vector::basis(dim, a) }).collect();
    let mut far = Vector::zeros(dim);
    for a in 0..dim {
        far[a] = 3.0 + a as f64;
    }
    out.push(TestFunction::Distance { p: far });
    out.push(TestFunction::Bump {
        center: Vector::zeros(dim),
        radius: 0.8,
    });
    out.push(TestFunction::random_trig(dim, 3, 4.0, seed));
    out.push(TestFunction::random_trig(dim, 5, 6.0, seed.wrapping_add(1)));
    out
}

/// [`standard_family`] plus a steep ramp across the last coordinate at its mean
/// value. The ramp is locally constant on pieces separated by more than `h_min`
/// in that coordinate.
pub fn audit_family(s: &DiscreteSurface, seed: u64) -> Vec<TestFunction> {
    let dim = s.ambient_dim();
    let w = s.weights();
    let level = s.points().iter().zip(w).map(|(p, wi)| wi * p[dim - 1]).sum::<f64>() / s.total_weight();
    let mut out = standard_family(dim, seed);
    out.push(TestFunction::Ramp {
        direction: Vector::basis(dim, dim - 1),
        offset: level,
        width: s.h_min().max(f64::MIN_POSITIVE),
    });
    out
}

/// `∇f(y) − ⟨∇f(y), ν(y)⟩ ν(y)` at sample `i`.
pub fn tangential_gradient(s: &DiscreteSurface, f: &TestFunction, i: usize) -> Result<Vector> {
    let nu = s.normals()?[i];
    let g = f.gradient(&s.point(i));
    Ok(g.axpy(-g.dot(&nu), &nu))
}

/// `|∇^M f|²` at every sample.
pub fn tangential_gradient_sq(s: &DiscreteSurface, f: &TestFunction) -> Result<Vec<f64>> {
    let normals = s.normals()?;
    Ok(s.points()
        .par_iter()
        .zip(normals.par_iter())
        .map(|(y, nu)| {
            let g = f.gradient(y);
            g.axpy(-g.dot(nu), nu).norm_squared()
        })
        .collect())
}

/// Largest-Lipschitz extension `f̄(y) = min_a f(a) + L|y − a|` of values on a point set.
#[derive(Clone, Debug)]
pub struct McShane {
    points: Vec<Vector>,
    values: Vec<f64>,
    lipschitz: f64,
}

impl McShane {
    /// Fails with `NotLipschitz` on the first pair (in scan order) violating the bound.
    pub fn new(points: Vec<Vector>, values: Vec<f64>, lipschitz: f64) -> Result<Self> {
        if points.is_empty() || points.len() != values.len() {
            return Err(Error::InvalidInput("extension needs matching nonempty points and values".into()));
        }
        if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
            return Err(Error::InvalidInput(format!("Lipschitz constant {lipschitz} is invalid")));
        }
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                let d = points[i].dist(&points[j]);
                let df = (values[i] - values[j]).abs();
                if df > lipschitz * d * (1.0 + 1e-12) + 1e-12 {
                    return Err(Error::NotLipschitz {
                        lipschitz,
                        first: i,
                        second: j,
                        quotient: if d > 0.0 { df / d } else { f64::INFINITY },
                    });
                }
            }
        }
        Ok(McShane {
            points,
            values,
            lipschitz,
        })
    }

    pub fn eval(&self, y: &Vector) -> f64 {
        self.points
            .iter()
            .zip(&self.values)
            .map(|(a, v)| v + self.lipschitz * y.dist(a))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Extends `values` given on the samples `subset` to `y`.
pub fn mcshane_extend(s: &DiscreteSurface, subset: &[usize], values: &[f64], y: &Vector, lipschitz: f64) -> Result<f64> {
    let points = subset.iter().map(|&i| s.point(i)).collect();
    Ok(McShane::new(points, values.to_vec(), lipschitz)?.eval(y))
}

/// Neighbors needed before a radius counts as resolved for [`lip_local`].
pub const LIP_NEIGHBORS: usize = 30;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LipLocal {
    pub value: f64,
    pub radius: f64,
    /// `(r, neighbors, sup quotient)` per radius; the quotient is `None` without neighbors.
    pub profile: Vec<(f64, usize, Option<f64>)>,
}

/// Difference-quotient sup over `B_r(x)` for each radius. The reported value is
/// taken at the smallest radius with [`LIP_NEIGHBORS`] neighbors, falling back to
/// the largest radius with any neighbor.
pub fn lip_local(s: &DiscreteSurface, values: &[f64], x: usize, radii: &[f64]) -> Result<LipLocal> {
    if values.len() != s.len() {
        return Err(Error::InvalidInput("value count differs from surface size".into()));
    }
    let xp = s.point(x);
    let mut profile = Vec::with_capacity(radii.len());
    for &r in radii {
        let mut count = 0;
        let mut sup = 0.0f64;
        s.index().for_each_in_ball(&xp, r, |i| {
            if i != x {
                let d = s.point(i).dist(&xp);
                if d > 0.0 {
                    count += 1;
                    sup = sup.max((values[i] - values[x]).abs() / d);
                }
            }
        });
        profile.push((r, count, (count > 0).then_some(sup)));
    }
    let mut order: Vec<usize> = (0..radii.len()).collect();
    order.sort_by(|&a, &b| radii[a].total_cmp(&radii[b]));
    let pick = order
        .iter()
        .find(|&&i| profile[i].1 >= LIP_NEIGHBORS)
        .or_else(|| order.iter().rev().find(|&&i| profile[i].1 > 0))
        .copied()
        .ok_or(Error::NoNeighbors(x))?;
    Ok(LipLocal {
        value: profile[pick].2.unwrap_or(0.0),
        radius: radii[pick],
        profile,
    })
}

/// [`lip_local`] at every sample.
pub fn lip_field(s: &DiscreteSurface, values: &[f64], radii: &[f64]) -> Result<Vec<f64>> {
    (0..s.len()).into_par_iter().map(|i| lip_local(s, values, i, radii).map(|l| l.value)).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PoincareRecord {
    pub function: usize,
    pub probe: usize,
    pub r: f64,
    /// `⨍_{B_r} |f − f_{x,r}| dμ`.
    pub lhs: f64,
    /// `r (⨍_{B_2r} |∇^M f|² dμ)^{1/2}`.
    pub rhs_core: f64,
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PoincareAudit {
    /// Largest finite ratio; meaningless when `diverged`.
    pub c_p: f64,
    /// Some record had oscillation without gradient.
    pub diverged: bool,
    pub worst: Option<PoincareRecord>,
    pub hard_failures: Vec<PoincareRecord>,
    /// Records with zero oscillation.
    pub skipped: usize,
    pub records: Vec<PoincareRecord>,
}

impl PoincareAudit {
    /// `C_P`, infinite when a hard failure was found.
    pub fn estimate(&self) -> f64 {
        if self.diverged {
            f64::INFINITY
        } else {
            self.c_p
        }
    }
}

/// Oscillation below this is treated as zero.
pub const OSCILLATION_TOL: f64 = 1e-12;

/// Weighted mean of `f` and mean absolute deviation over `B_r(x)`.
fn oscillation(s: &DiscreteSurface, f: &[f64], x: &Vector, r: f64) -> Result<f64> {
    let idx = s.ball(x, r);
    let w = s.weights();
    let mass: f64 = idx.iter().map(|&i| w[i]).sum();
    if mass <= 0.0 {
        return Err(Error::EmptyBall { radius: r });
    }
    let mean = idx.iter().map(|&i| w[i] * f[i]).sum::<f64>() / mass;
    Ok(idx.iter().map(|&i| w[i] * (f[i] - mean).abs()).sum::<f64>() / mass)
}

fn mean_over(s: &DiscreteSurface, g: &[f64], x: &Vector, r: f64) -> Result<f64> {
    crate::measure::average(s, g, x, r)
}

/// Evaluates the Poincaré inequality for every function, probe and radius.
/// Only refutes: a finite family never certifies the inequality.
pub fn poincare_audit(s: &DiscreteSurface, functions: &[TestFunction], probes: &[usize], radii: &[f64]) -> Result<PoincareAudit> {
    let mut records = Vec::new();
    for (fi, f) in functions.iter().enumerate() {
        let values = f.values(s);
        let grad_sq = tangential_gradient_sq(s, f)?;
        let rows: Vec<PoincareRecord> = probes
            .par_iter()
            .flat_map_iter(|&p| radii.iter().map(move |&r| (p, r)))
            .map(|(p, r)| {
                let x = s.point(p);
                let lhs = oscillation(s, &values, &x, r)?;
                let rhs_core = r * mean_over(s, &grad_sq, &x, 2.0 * r)?.sqrt();
                Ok(PoincareRecord {
                    function: fi,
                    probe: p,
                    r,
                    lhs,
                    rhs_core,
                    ratio: (rhs_core > 0.0).then(|| lhs / rhs_core),
                })
            })
            .collect::<Result<_>>()?;
        records.extend(rows);
    }
    let mut audit = PoincareAudit {
        c_p: 0.0,
        diverged: false,
        worst: None,
        hard_failures: Vec::new(),
        skipped: 0,
        records: Vec::new(),
    };
    for rec in &records {
        if rec.lhs <= OSCILLATION_TOL {
            audit.skipped += 1;
            continue;
        }
        match rec.ratio {
            Some(q) if q.is_finite() => {
                if audit.worst.is_none() || q > audit.c_p {
                    audit.c_p = q;
                    audit.worst = Some(rec.clone());
                }
            }
            _ => {
                audit.diverged = true;
                audit.hard_failures.push(rec.clone());
            }
        }
    }
    audit.records = records;
    Ok(audit)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KeithRecord {
    pub probe: usize,
    pub r: f64,
    pub lhs: f64,
    /// `diam(B) (⨍_{2B} (Lip f)² dμ)^{1/2}`.
    pub lip_core: f64,
    /// `lhs / lip_core`, compared with `κ₁`.
    pub ratio: Option<f64>,
    pub violated: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KeithAudit {
    pub kappa1: f64,
    pub slack: f64,
    pub worst_ratio: f64,
    pub violations: usize,
    pub records: Vec<KeithRecord>,
}

/// Checks `⨍_B |f − f_B| ≤ κ₁ diam(B) (⨍_{2B} (Lip f)²)^{1/2}` with `κ₁ = C_P/2`,
/// allowing a relative `slack`.
pub fn keith_form_audit(
    s: &DiscreteSurface,
    values: &[f64],
    lip: &[f64],
    balls: &[(usize, f64)],
    c_p: f64,
    slack: f64,
) -> Result<KeithAudit> {
    if values.len() != s.len() || lip.len() != s.len() {
        return Err(Error::InvalidInput("field length differs from surface size".into()));
    }
    let kappa1 = c_p / 2.0;
    let lip_sq: Vec<f64> = lip.iter().map(|l| l * l).collect();
    let records: Vec<KeithRecord> = balls
        .par_iter()
        .map(|&(p, r)| {
            let x = s.point(p);
            let lhs = oscillation(s, values, &x, r)?;
            let lip_core = 2.0 * r * mean_over(s, &lip_sq, &x, 2.0 * r)?.sqrt();
            let ratio = (lip_core > 0.0).then(|| lhs / lip_core);
            let violated = lhs > OSCILLATION_TOL && ratio.is_none_or(|q| q > kappa1 * (1.0 + slack));
            Ok(KeithRecord {
                probe: p,
                r,
                lhs,
                lip_core,
                ratio,
                violated,
            })
        })
        .collect::<Result<_>>()?;
    Ok(KeithAudit {
        kappa1,
        slack,
        worst_ratio: records
            .iter()
            .filter(|r| r.lhs > OSCILLATION_TOL)
            .map(|r| r.ratio.unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max),
        violations: records.iter().filter(|r| r.violated).count(),
        records,
    })
}

/// `min_{y ∈ S} |x + h τ − y| / h` for each unit tangent axis `τ` at sample `i`,
/// maximized over the axes and both signs.
pub fn tangent_defect(s: &DiscreteSurface, i: usize, h: f64) -> Result<f64> {
    let nu = s.normals()?[i];
    let x = s.point(i);
    let mut worst = 0.0f64;
    for t in orthonormal_complement(&nu) {
        for sign in [-1.0, 1.0] {
            let q = x.axpy(sign * h, &t);
            let d = s.index().nearest(&q).map_or(f64::INFINITY, |(_, d)| d);
            worst = worst.max(d / h);
        }
    }
    Ok(worst)
}
