//! Small fixed-capacity vectors, hyperplanes and balls in `R^{n+1}`.
//!
//! Every plane in this crate has codimension one and is stored as a base
//! point plus a unit normal. Balls are open.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest supported ambient dimension.
pub const MAX_DIM: usize = 8;

/// A point or direction in the ambient space. Coordinates past `dim` are zero.
#[derive(Clone, Copy, PartialEq)]
pub struct Vector {
    coords: [f64; MAX_DIM],
    dim: u8,
}

impl Vector {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "ambient dimension {dim} out of range");
        Vector {
            coords: [0.0; MAX_DIM],
            dim: dim as u8,
        }
    }

    pub fn from_slice(values: &[f64]) -> Self {
        let mut v = Vector::zeros(values.len());
        v.coords[..values.len()].copy_from_slice(values);
        v
    }

    /// The `axis`-th standard basis vector.
    pub fn basis(dim: usize, axis: usize) -> Self {
        let mut v = Vector::zeros(dim);
        v.coords[axis] = 1.0;
        v
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.coords[..self.dim()]
    }

    #[inline]
    pub fn dot(&self, other: &Vector) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        let mut s = 0.0;
        for i in 0..self.dim() {
            s += self.coords[i] * other.coords[i];
        }
        s
    }

    #[inline]
    pub fn norm_squared(&self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    #[inline]
    pub fn dist_squared(&self, other: &Vector) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim() {
            let d = self.coords[i] - other.coords[i];
            s += d * d;
        }
        s
    }

    #[inline]
    pub fn dist(&self, other: &Vector) -> f64 {
        self.dist_squared(other).sqrt()
    }

    /// Unit vector in the same direction, or `None` for (near) zero vectors.
    pub fn normalized(&self) -> Option<Vector> {
        let n = self.norm();
        if n > 1e-300 && n.is_finite() {
            Some(*self * (1.0 / n))
        } else {
            None
        }
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|c| c.is_finite())
    }

    /// Componentwise `self + t * other`.
    #[inline]
    pub fn axpy(&self, t: f64, other: &Vector) -> Vector {
        let mut out = *self;
        for i in 0..self.dim() {
            out.coords[i] += t * other.coords[i];
        }
        out
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.as_slice()).finish()
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        assert!(i < self.dim());
        &self.coords[i]
    }
}

impl IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        assert!(i < self.dim());
        &mut self.coords[i]
    }
}

impl Add for Vector {
    type Output = Vector;
    #[inline]
    fn add(mut self, rhs: Vector) -> Vector {
        self += rhs;
        self
    }
}

impl AddAssign for Vector {
    #[inline]
    fn add_assign(&mut self, rhs: Vector) {
        debug_assert_eq!(self.dim, rhs.dim);
        for i in 0..self.dim() {
            self.coords[i] += rhs.coords[i];
        }
    }
}

impl Sub for Vector {
    type Output = Vector;
    #[inline]
    fn sub(mut self, rhs: Vector) -> Vector {
        self -= rhs;
        self
    }
}

impl SubAssign for Vector {
    #[inline]
    fn sub_assign(&mut self, rhs: Vector) {
        debug_assert_eq!(self.dim, rhs.dim);
        for i in 0..self.dim() {
            self.coords[i] -= rhs.coords[i];
        }
    }
}

impl Mul<f64> for Vector {
    type Output = Vector;
    #[inline]
    fn mul(mut self, t: f64) -> Vector {
        for i in 0..self.dim() {
            self.coords[i] *= t;
        }
        self
    }
}

impl Neg for Vector {
    type Output = Vector;
    fn neg(self) -> Vector {
        self * -1.0
    }
}

impl Serialize for Vector {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.as_slice().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        if v.is_empty() || v.len() > MAX_DIM {
            return Err(serde::de::Error::custom(format!(
                "vector length {} outside 1..={MAX_DIM}",
                v.len()
            )));
        }
        Ok(Vector::from_slice(&v))
    }
}

/// Orthonormal basis of the orthogonal complement of the unit vector `normal`.
pub fn orthonormal_complement(normal: &Vector) -> Vec<Vector> {
    let dim = normal.dim();
    // Start from the standard basis, dropping the axis most aligned with the normal.
    let skip = (0..dim)
        .max_by(|&a, &b| normal[a].abs().total_cmp(&normal[b].abs()))
        .unwrap_or(0);
    let mut basis: Vec<Vector> = Vec::with_capacity(dim - 1);
    for axis in (0..dim).filter(|&a| a != skip) {
        let mut v = Vector::basis(dim, axis);
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            v = v.axpy(-v.dot(normal), normal);
            for b in &basis {
                v = v.axpy(-v.dot(b), b);
            }
        }
        basis.push(v.normalized().expect("complement vector vanished"));
    }
    basis
}

/// A codimension-one affine plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffinePlane {
    pub base: Vector,
    pub normal: Vector,
}

impl AffinePlane {
    /// Plane through `base` with normal direction `normal` (normalized here).
    pub fn new(base: Vector, normal: Vector) -> Result<Self> {
        if base.dim() != normal.dim() {
            return Err(Error::InvalidInput("plane base/normal dimension mismatch".into()));
        }
        let normal = normal
            .normalized()
            .ok_or_else(|| Error::InvalidInput("plane normal is zero".into()))?;
        Ok(AffinePlane { base, normal })
    }

    /// The plane `{x_last = 0}`-style coordinate hyperplane through the origin.
    pub fn coordinate(dim: usize, axis: usize) -> Self {
        AffinePlane {
            base: Vector::zeros(dim),
            normal: Vector::basis(dim, axis),
        }
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    #[inline]
    pub fn signed_distance(&self, y: &Vector) -> f64 {
        (*y - self.base).dot(&self.normal)
    }

    #[inline]
    pub fn distance(&self, y: &Vector) -> f64 {
        self.signed_distance(y).abs()
    }

    #[inline]
    pub fn project(&self, y: &Vector) -> Vector {
        y.axpy(-self.signed_distance(y), &self.normal)
    }

    /// Parallel plane through `point`.
    pub fn through(&self, point: Vector) -> AffinePlane {
        AffinePlane {
            base: point,
            normal: self.normal,
        }
    }

    /// Orthonormal basis of the direction space.
    pub fn tangent_basis(&self) -> Vec<Vector> {
        orthonormal_complement(&self.normal)
    }

    /// Component of `v` lying in the direction space.
    #[inline]
    pub fn tangential(&self, v: &Vector) -> Vector {
        v.axpy(-v.dot(&self.normal), &self.normal)
    }
}

pub fn project_to_plane(y: &Vector, plane: &AffinePlane) -> Vector {
    plane.project(y)
}

pub fn dist_to_plane(y: &Vector, plane: &AffinePlane) -> f64 {
    plane.distance(y)
}

/// An open ball.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vector,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vector, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidInput(format!("ball radius must be positive, got {radius}")));
        }
        Ok(Ball { center, radius })
    }

    #[inline]
    pub fn contains(&self, y: &Vector) -> bool {
        self.center.dist_squared(y) < self.radius * self.radius
    }
}

/// Largest distance from points of `from ∩ B̄_r(x)` to the plane `to`, unnormalized.
fn one_sided_sup(from: &AffinePlane, to: &AffinePlane, x: &Vector, r: f64) -> Result<f64> {
    let d = from.distance(x);
    if d >= r {
        return Err(Error::EmptyIntersection { distance: d, radius: r });
    }
    let foot = from.project(x);
    // r^2 - d^2 can be slightly negative near tangency.
    let rho = (r * r - d * d).max(0.0).sqrt();
    let tilt = from.tangential(&to.normal).norm();
    Ok(to.distance(&foot) + rho * tilt)
}

/// Normalized local Hausdorff distance `d_{x,r}(P, Q)` between two hyperplanes,
/// computed in closed form from the disk `P ∩ B_r(x)` and its counterpart.
pub fn plane_local_hausdorff(p: &AffinePlane, q: &AffinePlane, x: &Vector, r: f64) -> Result<f64> {
    let a = one_sided_sup(p, q, x, r)?;
    let b = one_sided_sup(q, p, x, r)?;
    Ok(a.max(b) / r)
}

/// Volume of the unit ball in `R^n`.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(n - 2) * 2.0 * std::f64::consts::PI / n as f64,
    }
}
