//! Deterministic test surfaces with analytic normals and area weights.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{unit_ball_volume, Vector, MAX_DIM};
use crate::measure::DiscreteSurface;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    Plane,
    Sphere,
    GraphSin,
    GraphMultiscale,
    SnowflakeLike,
    TwoSheet,
    HoledPlane,
}

impl Shape {
    pub const ALL: [Shape; 7] = [
        Shape::Plane,
        Shape::Sphere,
        Shape::GraphSin,
        Shape::GraphMultiscale,
        Shape::SnowflakeLike,
        Shape::TwoSheet,
        Shape::HoledPlane,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Plane => "plane",
            Shape::Sphere => "sphere",
            Shape::GraphSin => "graph-sin",
            Shape::GraphMultiscale => "graph-multiscale",
            Shape::SnowflakeLike => "snowflake-like",
            Shape::TwoSheet => "two-sheet",
            Shape::HoledPlane => "holed-plane",
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Shape {
    type Err = Error;
    fn from_str(s: &str) -> Result<Shape> {
        Shape::ALL
            .into_iter()
            .find(|sh| sh.name() == s)
            .ok_or_else(|| Error::BadSpec(format!("unknown shape `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hole {
    pub center: Vec<f64>,
    pub radius: f64,
}

/// Parameters for [`generate`]. Graph shapes live over `[-half_width, half_width]^n`
/// with the last coordinate as height.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZooSpec {
    pub shape: Shape,
    pub n: usize,
    /// Requested sample count; graph shapes round it to `m^n` grid cells.
    pub samples: usize,
    pub seed: u64,
    pub half_width: f64,
    pub amplitude: f64,
    /// `ℓ` for graph-sin, base wavelength `ℓ0` for the lacunary shapes.
    pub wavelength: f64,
    pub radius: f64,
    pub holes: Vec<Hole>,
    pub lambda: f64,
    pub gamma: f64,
    pub levels: usize,
    pub gap: f64,
}

impl ZooSpec {
    pub fn new(shape: Shape, n: usize, samples: usize) -> Self {
        let mut spec = ZooSpec {
            shape,
            n,
            samples,
            seed: 0,
            half_width: 1.0,
            amplitude: 0.0,
            wavelength: 1.0,
            radius: 1.0,
            holes: Vec::new(),
            lambda: 4.0,
            gamma: 0.0,
            levels: 6,
            gap: 0.1,
        };
        match shape {
            Shape::GraphSin => {
                spec.amplitude = 0.01;
                spec.wavelength = 0.5;
            }
            Shape::GraphMultiscale => {
                spec.amplitude = 0.05;
                spec.gamma = 1.0;
            }
            Shape::SnowflakeLike => spec.amplitude = 0.05,
            Shape::HoledPlane => spec.holes.push(Hole {
                center: vec![0.0; n],
                radius: 0.1,
            }),
            _ => {}
        }
        spec
    }

    pub fn plane(n: usize, samples: usize, half_width: f64) -> Self {
        ZooSpec {
            half_width,
            ..ZooSpec::new(Shape::Plane, n, samples)
        }
    }

    pub fn sphere(n: usize, samples: usize, radius: f64) -> Self {
        ZooSpec {
            radius,
            ..ZooSpec::new(Shape::Sphere, n, samples)
        }
    }

    pub fn graph_sin(n: usize, samples: usize, amplitude: f64, wavelength: f64) -> Self {
        ZooSpec {
            amplitude,
            wavelength,
            ..ZooSpec::new(Shape::GraphSin, n, samples)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::BadSpec(m));
        if self.n == 0 || self.n + 1 > MAX_DIM {
            return bad(format!("n = {} outside 1..={}", self.n, MAX_DIM - 1));
        }
        if self.samples < 16 || self.samples > 50_000_000 {
            return bad(format!("sample count {} outside 16..=5e7", self.samples));
        }
        let positive = [
            ("half_width", self.half_width),
            ("wavelength", self.wavelength),
            ("radius", self.radius),
            ("gap", self.gap),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return bad(format!("amplitude must be non-negative, got {}", self.amplitude));
        }
        if self.is_lacunary() {
            if !(self.lambda > 1.0 && self.lambda.is_finite()) {
                return bad(format!("lambda must exceed 1, got {}", self.lambda));
            }
            if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
                return bad(format!("gamma must be non-negative, got {}", self.gamma));
            }
            if self.levels == 0 || self.levels > 16 {
                return bad(format!("levels {} outside 1..=16", self.levels));
            }
        }
        if self.shape == Shape::HoledPlane {
            if self.holes.is_empty() {
                return bad("holed-plane needs at least one hole".into());
            }
            for (i, h) in self.holes.iter().enumerate() {
                if h.center.len() != self.n || !(h.radius > 0.0) {
                    return bad(format!("hole {i} is malformed"));
                }
                if h.center.iter().any(|c| c.abs() + h.radius >= self.half_width) {
                    return bad(format!("hole {i} leaves the domain"));
                }
                for (j, g) in self.holes.iter().enumerate().take(i) {
                    let d: f64 = h.center.iter().zip(&g.center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                    if d < h.radius + g.radius {
                        return bad(format!("holes {j} and {i} overlap"));
                    }
                }
            }
        }
        Ok(())
    }

    fn is_lacunary(&self) -> bool {
        matches!(self.shape, Shape::GraphMultiscale | Shape::SnowflakeLike)
    }

    /// Unit frequency direction of lacunary mode `m`.
    fn mode_direction(&self, m: usize) -> Vector {
        let mut d = Vector::zeros(self.n);
        if self.n == 1 {
            d[0] = 1.0;
        } else {
            let golden = PI * (3.0 - 5f64.sqrt());
            let th = m as f64 * golden;
            d[0] = th.cos();
            d[1] = th.sin();
        }
        d
    }

    fn mode_phase(m: usize) -> f64 {
        (m as f64 * 0.618_033_988_75).fract() * 2.0 * PI
    }

    /// Height and gradient of the graph function at parameter `t`.
    fn height(&self, t: &Vector) -> (f64, Vector) {
        let mut grad = Vector::zeros(self.n);
        let u = match self.shape {
            Shape::GraphSin => {
                let k = 1.0 / self.wavelength;
                grad[0] = self.amplitude * k * (k * t[0]).cos();
                self.amplitude * (k * t[0]).sin()
            }
            Shape::GraphMultiscale | Shape::SnowflakeLike => {
                let mut u = 0.0;
                for m in 1..=self.levels {
                    let d = self.mode_direction(m);
                    let freq = self.lambda.powi(m as i32) / self.wavelength;
                    let amp = self.amplitude * self.lambda.powf(-(m as f64) * (1.0 + self.gamma));
                    let arg = freq * t.dot(&d) + Self::mode_phase(m);
                    u += amp * arg.sin();
                    grad = grad.axpy(amp * freq * arg.cos(), &d);
                }
                u
            }
            _ => 0.0,
        };
        (u, grad)
    }

    /// Grid cells per axis used by the graph shapes.
    pub fn cells_per_axis(&self) -> usize {
        let per_sheet = if self.shape == Shape::TwoSheet { self.samples / 2 } else { self.samples };
        ((per_sheet as f64).powf(1.0 / self.n as f64).round() as usize).max(2)
    }

    /// Grid spacing of the parameter domain (or the mean spacing on the sphere).
    pub fn grid_spacing(&self) -> f64 {
        match self.shape {
            Shape::Sphere => (sphere_area(self.n, self.radius) / self.samples as f64).powf(1.0 / self.n as f64),
            _ => 2.0 * self.half_width / self.cells_per_axis() as f64,
        }
    }

    /// Analytic `H^n` measure of the surface, or `None` when only a quadrature is available.
    pub fn analytic_area(&self) -> Option<f64> {
        let box_area = (2.0 * self.half_width).powi(self.n as i32);
        match self.shape {
            Shape::Plane => Some(box_area),
            Shape::Sphere => Some(sphere_area(self.n, self.radius)),
            Shape::TwoSheet => Some(2.0 * box_area),
            Shape::HoledPlane => Some(
                box_area
                    - self
                        .holes
                        .iter()
                        .map(|h| unit_ball_volume(self.n) * h.radius.powi(self.n as i32))
                        .sum::<f64>(),
            ),
            _ => None,
        }
    }
}

impl FromStr for ZooSpec {
    type Err = Error;

    /// Parses `shape[:key=value,...]`, e.g. `graph-sin:a=0.02,l=0.5,samples=100000`.
    /// Keys: `n samples seed L a l R lambda gamma levels gap hole`, where
    /// `hole=c0/c1/.../radius` may repeat and replaces the default hole.
    fn from_str(s: &str) -> Result<ZooSpec> {
        let (name, rest) = s.split_once(':').unwrap_or((s, ""));
        let shape: Shape = name.trim().parse()?;
        let pairs: Vec<(&str, &str)> = rest
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| {
                p.split_once('=')
                    .map(|(k, v)| (k.trim(), v.trim()))
                    .ok_or_else(|| Error::BadSpec(format!("expected key=value, got `{p}`")))
            })
            .collect::<Result<_>>()?;
        let num = |k: &str, v: &str| -> Result<f64> {
            v.parse::<f64>().map_err(|_| Error::BadSpec(format!("bad value `{v}` for `{k}`")))
        };
        let int = |k: &str, v: &str| -> Result<u64> {
            v.parse::<u64>().map_err(|_| Error::BadSpec(format!("bad value `{v}` for `{k}`")))
        };
        let n = match pairs.iter().find(|(k, _)| *k == "n") {
            Some((k, v)) => int(k, v)? as usize,
            None => 2,
        };
        let mut spec = ZooSpec::new(shape, n, 10_000);
        let mut holes = Vec::new();
        for (k, v) in pairs {
            match k {
                "n" => {}
                "samples" => spec.samples = int(k, v)? as usize,
                "seed" => spec.seed = int(k, v)?,
                "L" => spec.half_width = num(k, v)?,
                "a" => spec.amplitude = num(k, v)?,
                "l" => spec.wavelength = num(k, v)?,
                "R" => spec.radius = num(k, v)?,
                "lambda" => spec.lambda = num(k, v)?,
                "gamma" => spec.gamma = num(k, v)?,
                "levels" => spec.levels = int(k, v)? as usize,
                "gap" => spec.gap = num(k, v)?,
                "hole" => {
                    let vals: Vec<f64> = v.split('/').map(|x| num(k, x)).collect::<Result<_>>()?;
                    let (radius, center) = vals.split_last().ok_or_else(|| Error::BadSpec("empty hole".into()))?;
                    holes.push(Hole {
                        center: center.to_vec(),
                        radius: *radius,
                    });
                }
                _ => return Err(Error::BadSpec(format!("unknown key `{k}`"))),
            }
        }
        if !holes.is_empty() {
            spec.holes = holes;
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn sphere_area(n: usize, r: f64) -> f64 {
    (n + 1) as f64 * unit_ball_volume(n + 1) * r.powi(n as i32)
}

/// Samples the surface described by `spec`. Deterministic per seed.
pub fn generate(spec: &ZooSpec) -> Result<DiscreteSurface> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (points, normals, weights) = match spec.shape {
        Shape::Sphere => sample_sphere(spec, &mut rng),
        Shape::TwoSheet => {
            let (mut p, mut nu, mut w) = sample_graph(spec, &mut rng, 0.5 * spec.gap, 1.0);
            let (p2, nu2, w2) = sample_graph(spec, &mut rng, -0.5 * spec.gap, -1.0);
            p.extend(p2);
            nu.extend(nu2);
            w.extend(w2);
            (p, nu, w)
        }
        Shape::HoledPlane => {
            let (p, nu, w) = sample_graph(spec, &mut rng, 0.0, 1.0);
            let keep: Vec<usize> = (0..p.len())
                .filter(|&i| {
                    spec.holes.iter().all(|h| {
                        let d2: f64 = h.center.iter().enumerate().map(|(a, c)| (p[i][a] - c).powi(2)).sum();
                        d2 >= h.radius * h.radius
                    })
                })
                .collect();
            let area = spec.analytic_area().unwrap_or(0.0);
            let kept: f64 = keep.iter().map(|&i| w[i]).sum();
            let scale = area / kept;
            (
                keep.iter().map(|&i| p[i]).collect(),
                keep.iter().map(|&i| nu[i]).collect(),
                keep.iter().map(|&i| w[i] * scale).collect(),
            )
        }
        _ => sample_graph(spec, &mut rng, 0.0, 1.0),
    };
    DiscreteSurface::new(points, Some(normals), Some(weights))
}

type Samples = (Vec<Vector>, Vec<Vector>, Vec<f64>);

/// Jittered stratified grid over the parameter box, lifted to the graph at `offset + u(t)`.
fn sample_graph(spec: &ZooSpec, rng: &mut ChaCha8Rng, offset: f64, orientation: f64) -> Samples {
    let n = spec.n;
    let m = spec.cells_per_axis();
    let h = 2.0 * spec.half_width / m as f64;
    let cell_area = h.powi(n as i32);
    let total = m.pow(n as u32);
    let mut points = Vec::with_capacity(total);
    let mut normals = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    let mut t = Vector::zeros(n);
    for cell in 0..total {
        let mut c = cell;
        for a in 0..n {
            let k = c % m;
            c /= m;
            t[a] = -spec.half_width + (k as f64 + rng.gen::<f64>()) * h;
        }
        let (u, grad) = spec.height(&t);
        let mut p = Vector::zeros(n + 1);
        let mut nu = Vector::zeros(n + 1);
        let g2 = grad.norm_squared();
        let inv = 1.0 / (1.0 + g2).sqrt();
        for a in 0..n {
            p[a] = t[a];
            nu[a] = orientation * (0.0 - grad[a]) * inv;
        }
        p[n] = offset + u;
        nu[n] = orientation * inv;
        points.push(p);
        normals.push(nu);
        weights.push(cell_area * (1.0 + g2).sqrt());
    }
    (points, normals, weights)
}

/// Jittered Fibonacci lattice for `n = 2`; Gaussian directions otherwise.
fn sample_sphere(spec: &ZooSpec, rng: &mut ChaCha8Rng) -> Samples {
    let n = spec.n;
    let count = spec.samples;
    let w = sphere_area(n, spec.radius) / count as f64;
    let mut normals = Vec::with_capacity(count);
    if n == 2 {
        let golden = PI * (3.0 - 5f64.sqrt());
        let spin = rng.gen_range(0.0..2.0 * PI);
        for i in 0..count {
            // z is uniform under area measure, so jittering within each band keeps the stratification
            let z = 1.0 - 2.0 * (i as f64 + rng.gen::<f64>()) / count as f64;
            let phi = spin + i as f64 * golden;
            let s = (1.0 - z * z).max(0.0).sqrt();
            normals.push(Vector::from_slice(&[s * phi.cos(), s * phi.sin(), z]));
        }
    } else {
        while normals.len() < count {
            let c: Vec<f64> = (0..=n).map(|_| gaussian(rng)).collect();
            if let Some(u) = Vector::from_slice(&c).normalized() {
                normals.push(u);
            }
        }
    }
    let points = normals.iter().map(|u| *u * spec.radius).collect();
    (points, normals, vec![w; count])
}

/// Box-Muller standard normal.
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Machine-readable expectations for a zoo surface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Expectations {
    pub shape: Shape,
    /// Exact Carleson value when known.
    pub carleson: Option<f64>,
    pub carleson_finite: bool,
    /// `"zero"`, `"bounded"` or `"linear"` growth of the dyadic sum with depth.
    pub carleson_dyadic_growth: String,
    pub connected: bool,
    pub quasiconvex: bool,
    /// Exact quasiconvexity constant when known.
    pub kappa: Option<f64>,
    /// Exponent `p` in `α(x, r) ~ r^p` at small scales.
    pub alpha_exponent: Option<f64>,
    /// Typical α at scales that see both sheets, when applicable.
    pub alpha_spanning: Option<f64>,
}

pub fn describe(spec: &ZooSpec) -> Expectations {
    let base = Expectations {
        shape: spec.shape,
        carleson: None,
        carleson_finite: true,
        carleson_dyadic_growth: "bounded".into(),
        connected: true,
        quasiconvex: true,
        kappa: None,
        alpha_exponent: Some(1.0),
        alpha_spanning: None,
    };
    match spec.shape {
        Shape::Plane => Expectations {
            carleson: Some(0.0),
            carleson_dyadic_growth: "zero".into(),
            kappa: Some(1.0),
            alpha_exponent: None,
            ..base
        },
        Shape::Sphere => Expectations {
            kappa: Some(PI / 2.0),
            ..base
        },
        Shape::GraphSin | Shape::GraphMultiscale => base,
        Shape::SnowflakeLike if spec.gamma == 0.0 => Expectations {
            carleson_finite: false,
            carleson_dyadic_growth: "linear".into(),
            alpha_exponent: Some(0.0),
            ..base
        },
        Shape::SnowflakeLike => base,
        Shape::TwoSheet => Expectations {
            carleson_finite: false,
            carleson_dyadic_growth: "linear".into(),
            connected: false,
            quasiconvex: false,
            alpha_exponent: None,
            alpha_spanning: Some(1.0),
            ..base
        },
        Shape::HoledPlane => Expectations {
            carleson: Some(0.0),
            carleson_dyadic_growth: "zero".into(),
            alpha_exponent: None,
            ..base
        },
    }
}
