//! Weighted point samples standing in for the surface measure, plus ball
//! averages and Ahlfors-regularity auditing.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{unit_ball_volume, Ball, Vector, MAX_DIM};
use crate::index::SpatialIndex;

/// Neighbor count used to estimate quadrature weights for unweighted input.
pub const WEIGHT_KNN: usize = 8;

/// Multiple of the median nearest-neighbor spacing below which radii are
/// considered unresolved.
pub const RESOLUTION_FACTOR: f64 = 3.0;

/// A weighted sample of an `n`-dimensional set in `R^{n+1}`, optionally with unit normals.
#[derive(Debug)]
pub struct DiscreteSurface {
    points: Vec<Vector>,
    normals: Option<Vec<Vector>>,
    weights: Vec<f64>,
    dim_n: usize,
    index: SpatialIndex,
    spacing: OnceLock<f64>,
}

impl Clone for DiscreteSurface {
    fn clone(&self) -> Self {
        DiscreteSurface {
            points: self.points.clone(),
            normals: self.normals.clone(),
            weights: self.weights.clone(),
            dim_n: self.dim_n,
            index: self.index.clone(),
            spacing: self.spacing.clone(),
        }
    }
}

impl DiscreteSurface {
    /// Validates and indexes a sample. Missing weights are estimated from
    /// the `k`-nearest-neighbor ball area with `k = 8`.
    pub fn new(points: Vec<Vector>, normals: Option<Vec<Vector>>, weights: Option<Vec<f64>>) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(Error::InvalidInput("surface has no points".into()));
        };
        let ambient = first.dim();
        if !(2..=MAX_DIM).contains(&ambient) {
            return Err(Error::InvalidInput(format!("ambient dimension {ambient} outside 2..={MAX_DIM}")));
        }
        if let Some(bad) = points.iter().position(|p| p.dim() != ambient || !p.is_finite()) {
            return Err(Error::InvalidInput(format!("point {bad} is malformed")));
        }
        if let Some(normals) = &normals {
            if normals.len() != points.len() {
                return Err(Error::InvalidInput("normal count differs from point count".into()));
            }
            for (i, nu) in normals.iter().enumerate() {
                if nu.dim() != ambient || (nu.norm() - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidInput(format!("normal {i} is not a unit vector")));
                }
            }
        }
        if let Some(w) = &weights {
            if w.len() != points.len() {
                return Err(Error::InvalidInput("weight count differs from point count".into()));
            }
            if let Some(bad) = w.iter().position(|&w| !(w > 0.0 && w.is_finite())) {
                return Err(Error::InvalidInput(format!("weight {bad} is not positive")));
            }
        }
        let index = SpatialIndex::new(&points);
        let dim_n = ambient - 1;
        let weights = match weights {
            Some(w) => w,
            None => estimate_weights(&index, dim_n)?,
        };
        Ok(DiscreteSurface {
            points,
            normals,
            weights,
            dim_n,
            index,
            spacing: OnceLock::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim_n(&self) -> usize {
        self.dim_n
    }

    pub fn ambient_dim(&self) -> usize {
        self.dim_n + 1
    }

    pub fn points(&self) -> &[Vector] {
        &self.points
    }

    pub fn point(&self, i: usize) -> Vector {
        self.points[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn has_normals(&self) -> bool {
        self.normals.is_some()
    }

    pub fn normals(&self) -> Result<&[Vector]> {
        self.normals.as_deref().ok_or(Error::MissingNormals)
    }

    pub fn index(&self) -> &SpatialIndex {
        &self.index
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Indices of sample points in the open ball `B_r(x)`.
    pub fn ball(&self, x: &Vector, r: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.index.for_each_in_ball(x, r, |i| out.push(i));
        out
    }

    /// Median distance from a sample point to its nearest other sample point.
    pub fn median_spacing(&self) -> f64 {
        *self.spacing.get_or_init(|| {
            if self.points.len() < 2 {
                return 0.0;
            }
            let mut d: Vec<f64> = self
                .points
                .par_iter()
                .map(|p| self.index.knn(p, 2).get(1).map_or(0.0, |n| n.1))
                .collect();
            let mid = d.len() / 2;
            *d.select_nth_unstable_by(mid, f64::total_cmp).1
        })
    }

    /// Smallest radius at which ball statistics are considered meaningful.
    pub fn h_min(&self) -> f64 {
        RESOLUTION_FACTOR * self.median_spacing()
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let mut xs = Vec::new();
        let mut nus = Vec::new();
        let mut w_col = None;
        for (c, name) in headers.iter().enumerate() {
            if let Some(k) = name.strip_prefix("nu").and_then(|s| s.parse::<usize>().ok()) {
                nus.push((k, c));
            } else if let Some(k) = name.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()) {
                xs.push((k, c));
            } else if name == "w" {
                w_col = Some(c);
            } else {
                return Err(Error::InvalidInput(format!("unknown CSV column `{name}`")));
            }
        }
        xs.sort_unstable();
        nus.sort_unstable();
        let ambient = xs.len();
        if xs.iter().enumerate().any(|(i, &(k, _))| i != k) {
            return Err(Error::InvalidInput("coordinate columns must be x0..xn".into()));
        }
        if !nus.is_empty() && (nus.len() != ambient || nus.iter().enumerate().any(|(i, &(k, _))| i != k)) {
            return Err(Error::InvalidInput("normal columns must be nu0..nun matching x0..xn".into()));
        }
        let parse = |rec: &csv::StringRecord, c: usize| -> Result<f64> {
            rec[c]
                .parse::<f64>()
                .map_err(|e| Error::InvalidInput(format!("bad number `{}`: {e}", &rec[c])))
        };
        let mut points = Vec::new();
        let mut normals = Vec::new();
        let mut weights = Vec::new();
        let mut buf = [0.0; MAX_DIM];
        for rec in rdr.records() {
            let rec = rec?;
            if ambient == 0 || ambient > MAX_DIM {
                return Err(Error::InvalidInput(format!("ambient dimension {ambient} unsupported")));
            }
            for (a, &(_, c)) in xs.iter().enumerate() {
                buf[a] = parse(&rec, c)?;
            }
            points.push(Vector::from_slice(&buf[..ambient]));
            if !nus.is_empty() {
                for (a, &(_, c)) in nus.iter().enumerate() {
                    buf[a] = parse(&rec, c)?;
                }
                normals.push(Vector::from_slice(&buf[..ambient]));
            }
            if let Some(c) = w_col {
                weights.push(parse(&rec, c)?);
            }
        }
        DiscreteSurface::new(
            points,
            (!nus.is_empty()).then_some(normals),
            w_col.is_some().then_some(weights),
        )
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(std::io::BufReader::new(file))
    }

    /// Writes `x0..xn[,nu0..nun],w`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let d = self.ambient_dim();
        let mut header: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
        if self.normals.is_some() {
            header.extend((0..d).map(|i| format!("nu{i}")));
        }
        header.push("w".into());
        wtr.write_record(&header)?;
        let mut row: Vec<String> = Vec::with_capacity(2 * d + 1);
        for i in 0..self.len() {
            row.clear();
            row.extend(self.points[i].as_slice().iter().map(|c| c.to_string()));
            if let Some(n) = &self.normals {
                row.extend(n[i].as_slice().iter().map(|c| c.to_string()));
            }
            row.push(self.weights[i].to_string());
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn estimate_weights(index: &SpatialIndex, dim_n: usize) -> Result<Vec<f64>> {
    if index.len() <= WEIGHT_KNN {
        return Err(Error::InvalidInput(format!(
            "need more than {WEIGHT_KNN} points to estimate weights"
        )));
    }
    let omega = unit_ball_volume(dim_n);
    let w: Vec<f64> = index
        .points()
        .par_iter()
        .map(|p| {
            let rho = index.knn(p, WEIGHT_KNN + 1)[WEIGHT_KNN].1;
            omega * rho.powi(dim_n as i32) / WEIGHT_KNN as f64
        })
        .collect();
    if w.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::InvalidInput("duplicate points prevent weight estimation".into()));
    }
    Ok(w)
}

/// `μ(B_r(x))`: total weight of sample points in the ball.
pub fn mu_ball(s: &DiscreteSurface, ball: &Ball) -> f64 {
    let mut m = 0.0;
    s.index.for_each_in_ball(&ball.center, ball.radius, |i| m += s.weights[i]);
    m
}

/// Weighted mean of a per-point scalar field over `B_r(x)`.
pub fn average(s: &DiscreteSurface, f: &[f64], x: &Vector, r: f64) -> Result<f64> {
    if f.len() != s.len() {
        return Err(Error::InvalidInput("field length differs from surface size".into()));
    }
    let mut m = 0.0;
    let mut acc = 0.0;
    s.index.for_each_in_ball(x, r, |i| {
        m += s.weights[i];
        acc += s.weights[i] * f[i];
    });
    if m <= 0.0 {
        return Err(Error::EmptyBall { radius: r });
    }
    Ok(acc / m)
}

/// Weighted mean of a per-point vector field over the given indices.
pub(crate) fn weighted_mean_vec(s: &DiscreteSurface, field: &[Vector], idx: &[usize], r: f64) -> Result<Vector> {
    let mut m = 0.0;
    let mut acc = Vector::zeros(s.ambient_dim());
    for &i in idx {
        m += s.weights[i];
        acc = acc.axpy(s.weights[i], &field[i]);
    }
    if m <= 0.0 {
        return Err(Error::EmptyBall { radius: r });
    }
    Ok(acc * (1.0 / m))
}

/// `ν_{x,r}`, the averaged unit normal.
pub fn average_normal(s: &DiscreteSurface, x: &Vector, r: f64) -> Result<Vector> {
    let normals = s.normals()?;
    weighted_mean_vec(s, normals, &s.ball(x, r), r)
}

/// `c_{x,r}`, the center of mass of the sample in `B_r(x)`.
pub fn center_of_mass(s: &DiscreteSurface, x: &Vector, r: f64) -> Result<Vector> {
    weighted_mean_vec(s, &s.points, &s.ball(x, r), r)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AhlforsConfig {
    pub radii: Vec<f64>,
    pub probe_count: usize,
    pub seed: u64,
    /// Probes are drawn only from sample points inside this ball, if given.
    pub probe_region: Option<Ball>,
    /// Ratios below this value are flagged as lower-bound failures.
    pub low_ratio_flag: Option<f64>,
}

impl AhlforsConfig {
    pub fn new(radii: Vec<f64>, probe_count: usize) -> Self {
        AhlforsConfig {
            radii,
            probe_count,
            seed: 0,
            probe_region: None,
            low_ratio_flag: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AhlforsRecord {
    pub probe: usize,
    pub x: Vector,
    pub r: f64,
    pub mass: f64,
    pub ratio: f64,
    /// Empty ball or ratio under the low-ratio threshold.
    pub flagged: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AhlforsAudit {
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub c_m: f64,
    pub h_min: f64,
    pub skipped_radii: Vec<f64>,
    pub flagged: usize,
    pub records: Vec<AhlforsRecord>,
}

/// Draws `count` distinct probe indices (all of them if fewer are available).
pub fn draw_probes(s: &DiscreteSurface, count: usize, seed: u64, region: Option<&Ball>) -> Vec<usize> {
    let mut pool: Vec<usize> = match region {
        Some(b) => s.ball(&b.center, b.radius),
        None => (0..s.len()).collect(),
    };
    pool.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);
    pool.truncate(count);
    pool
}

/// Records `μ(B_r(x)) / r^n` over probes × radii, skipping radii below `h_min`.
pub fn ahlfors_audit(s: &DiscreteSurface, cfg: &AhlforsConfig) -> Result<AhlforsAudit> {
    if let Some(bad) = cfg.radii.iter().find(|&&r| !(r > 0.0 && r < 1.0)) {
        return Err(Error::InvalidInput(format!("audit radius {bad} outside (0, 1)")));
    }
    let h_min = s.h_min();
    let (radii, skipped_radii): (Vec<f64>, Vec<f64>) = cfg.radii.iter().partition(|&&r| r >= h_min);
    let probes = draw_probes(s, cfg.probe_count, cfg.seed, cfg.probe_region.as_ref());
    let n = s.dim_n() as i32;
    let low = cfg.low_ratio_flag.unwrap_or(1e-2 * unit_ball_volume(s.dim_n()));
    let records: Vec<AhlforsRecord> = probes
        .par_iter()
        .flat_map_iter(|&p| {
            let x = s.point(p);
            radii
                .iter()
                .map(|&r| {
                    let mass = mu_ball(s, &Ball { center: x, radius: r });
                    let ratio = mass / r.powi(n);
                    AhlforsRecord {
                        probe: p,
                        x,
                        r,
                        mass,
                        ratio,
                        flagged: mass <= 0.0 || ratio < low,
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let ratio_min = records.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let ratio_max = records.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let c_m = if records.is_empty() {
        1.0
    } else {
        ratio_max.max(1.0 / ratio_min).max(1.0)
    };
    Ok(AhlforsAudit {
        ratio_min,
        ratio_max,
        c_m,
        h_min,
        skipped_radii,
        flagged: records.iter().filter(|r| r.flagged).count(),
        records,
    })
}
