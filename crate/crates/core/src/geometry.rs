//! Small fixed-size linear algebra and signed-distance shapes.
//!
//! Every map in this crate lives in dimension 1, 2 or 3, so points and
//! Jacobians are stored inline (no heap allocation on the orbit hot paths).

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub const MAX_DIM: usize = 3;

/// A point (or vector) in R^m for m <= 3.
#[derive(Clone, Copy, PartialEq)]
pub struct Point {
    coords: [f64; MAX_DIM],
    dim: usize,
}

impl Point {
    pub fn new(coords: &[f64]) -> Self {
        assert!(
            (1..=MAX_DIM).contains(&coords.len()),
            "dimension must be 1..=3, got {}",
            coords.len()
        );
        let mut c = [0.0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Point {
            coords: c,
            dim: coords.len(),
        }
    }

    pub fn d1(x: f64) -> Self {
        Self::new(&[x])
    }

    pub fn d2(x: f64, y: f64) -> Self {
        Self::new(&[x, y])
    }

    pub fn d3(x: f64, y: f64, z: f64) -> Self {
        Self::new(&[x, y, z])
    }

    pub fn zeros(dim: usize) -> Self {
        Self::new(&[0.0; MAX_DIM][..dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords[..self.dim]
    }

    pub fn norm_sq(&self) -> f64 {
        self.as_slice().iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (*self - *other).norm()
    }

    pub fn dot(&self, other: &Point) -> f64 {
        self.as_slice()
            .iter()
            .zip(other.as_slice())
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn scale(&self, s: f64) -> Point {
        let mut out = *self;
        for v in out.coords[..self.dim].iter_mut() {
            *v *= s;
        }
        out
    }

    pub fn map_coords(&self, f: impl Fn(usize, f64) -> f64) -> Point {
        let mut out = *self;
        for i in 0..self.dim {
            out.coords[i] = f(i, self.coords[i]);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|v| v.is_finite())
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.as_slice())
    }
}

impl Index<usize> for Point {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        debug_assert!(i < self.dim);
        &self.coords[i]
    }
}

impl IndexMut<usize> for Point {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        debug_assert!(i < self.dim);
        &mut self.coords[i]
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        debug_assert_eq!(self.dim, rhs.dim);
        self.map_coords(|i, v| v + rhs.coords[i])
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        debug_assert_eq!(self.dim, rhs.dim);
        self.map_coords(|i, v| v - rhs.coords[i])
    }
}

impl Serialize for Point {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.as_slice().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v: Vec<f64> = Vec::deserialize(d)?;
        if v.is_empty() || v.len() > MAX_DIM {
            return Err(serde::de::Error::custom("point must have 1 to 3 coordinates"));
        }
        Ok(Point::new(&v))
    }
}

/// Square matrix of size dim x dim, dim <= 3.
#[derive(Clone, Copy, PartialEq)]
pub struct Mat {
    a: [[f64; MAX_DIM]; MAX_DIM],
    dim: usize,
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[f64]> = (0..self.dim).map(|i| &self.a[i][..self.dim]).collect();
        write!(f, "{rows:?}")
    }
}

impl Mat {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim));
        Mat {
            a: [[0.0; MAX_DIM]; MAX_DIM],
            dim,
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.a[i][i] = 1.0;
        }
        m
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, v) in d.iter().enumerate() {
            m.a[i][i] = *v;
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let mut m = Self::zeros(rows.len());
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), rows.len(), "matrix must be square");
            m.a[i][..r.len()].copy_from_slice(r);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i][j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i][j] = v;
    }

    pub fn det(&self) -> f64 {
        let a = &self.a;
        match self.dim {
            1 => a[0][0],
            2 => a[0][0] * a[1][1] - a[0][1] * a[1][0],
            _ => {
                a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
                    - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                    + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
            }
        }
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                t.a[j][i] = self.a[i][j];
            }
        }
        t
    }

    /// Inverse via the adjugate; `None` when the matrix is singular.
    pub fn inverse(&self) -> Option<Mat> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        let a = &self.a;
        let mut inv = Mat::zeros(self.dim);
        match self.dim {
            1 => inv.a[0][0] = 1.0 / a[0][0],
            2 => {
                inv.a[0][0] = a[1][1] / d;
                inv.a[0][1] = -a[0][1] / d;
                inv.a[1][0] = -a[1][0] / d;
                inv.a[1][1] = a[0][0] / d;
            }
            _ => {
                for i in 0..3 {
                    for j in 0..3 {
                        let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
                        let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
                        inv.a[i][j] = (a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0]) / d;
                    }
                }
            }
        }
        Some(inv)
    }

    pub fn scale(&self, s: f64) -> Mat {
        let mut m = *self;
        for row in m.a.iter_mut().take(self.dim) {
            for v in row.iter_mut().take(self.dim) {
                *v *= s;
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                m = m.max(self.a[i][j].abs());
            }
        }
        m
    }

    /// Eigenvalues of a symmetric matrix, descending.
    fn symmetric_eigenvalues(&self) -> [f64; MAX_DIM] {
        let a = &self.a;
        let mut out = [0.0; MAX_DIM];
        match self.dim {
            1 => out[0] = a[0][0],
            2 => {
                let tr = a[0][0] + a[1][1];
                let diff = a[0][0] - a[1][1];
                let disc = (diff * diff + 4.0 * a[0][1] * a[1][0]).max(0.0).sqrt();
                out[0] = 0.5 * (tr + disc);
                out[1] = 0.5 * (tr - disc);
            }
            _ => {
                // Trigonometric solution of the characteristic cubic.
                let p1 = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
                let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
                if p1 == 0.0 {
                    let mut d = [a[0][0], a[1][1], a[2][2]];
                    d.sort_by(|x, y| y.total_cmp(x));
                    return d;
                }
                let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2)
                    + 2.0 * p1;
                let p = (p2 / 6.0).sqrt();
                let b = Mat::from_rows(&[
                    &[(a[0][0] - q) / p, a[0][1] / p, a[0][2] / p],
                    &[a[1][0] / p, (a[1][1] - q) / p, a[1][2] / p],
                    &[a[2][0] / p, a[2][1] / p, (a[2][2] - q) / p],
                ]);
                let r = (b.det() / 2.0).clamp(-1.0, 1.0);
                let phi = r.acos() / 3.0;
                out[0] = q + 2.0 * p * phi.cos();
                out[2] = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
                out[1] = 3.0 * q - out[0] - out[2];
            }
        }
        out
    }

    /// Singular values, descending.
    pub fn singular_values(&self) -> [f64; MAX_DIM] {
        let gram = self.transpose() * *self;
        let mut ev = gram.symmetric_eigenvalues();
        for v in ev.iter_mut() {
            *v = v.max(0.0).sqrt();
        }
        ev
    }

    /// Operator 2-norm (largest singular value).
    pub fn operator_norm(&self) -> f64 {
        // Rescale so tiny/huge composite matrices do not under/overflow the Gram product.
        let s = self.max_abs();
        if s == 0.0 || !s.is_finite() {
            return s;
        }
        self.scale(1.0 / s).singular_values()[0] * s
    }

    pub fn mul_vec(&self, v: &Point) -> Point {
        debug_assert_eq!(v.dim(), self.dim);
        let mut out = Point::zeros(self.dim);
        for i in 0..self.dim {
            out[i] = (0..self.dim).map(|j| self.a[i][j] * v[j]).sum();
        }
        out
    }
}

impl Mul for Mat {
    type Output = Mat;
    fn mul(self, rhs: Mat) -> Mat {
        debug_assert_eq!(self.dim, rhs.dim);
        let mut out = Mat::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.a[i][j] = (0..self.dim).map(|k| self.a[i][k] * rhs.a[k][j]).sum();
            }
        }
        out
    }
}

/// Volume of the unit ball in R^m (gamma_m); gamma_0 = 1.
pub fn unit_ball_volume(m: usize) -> f64 {
    use std::f64::consts::PI;
    match m {
        0 => 1.0,
        1 => 2.0,
        2 => PI,
        3 => 4.0 * PI / 3.0,
        _ => unit_ball_volume(m - 2) * 2.0 * PI / m as f64,
    }
}

pub type SignedDistanceFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;

/// A region described by a signed distance (negative inside).
///
/// Distances for `Intersection`/`Complement` are the usual max/negation
/// bounds, exact enough for boundary-proximity tests at tolerance scale.
#[derive(Clone)]
pub enum Shape {
    Everything,
    Ball { center: Point, radius: f64 },
    /// Axis-aligned box; infinite bounds are allowed for half-spaces and slabs.
    Cuboid { lo: Point, hi: Point },
    Intersection(Vec<Shape>),
    Complement(Box<Shape>),
    Custom { label: String, sd: SignedDistanceFn },
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Everything => write!(f, "Everything"),
            Shape::Ball { center, radius } => write!(f, "Ball({center:?}, {radius})"),
            Shape::Cuboid { lo, hi } => write!(f, "Cuboid({lo:?}..{hi:?})"),
            Shape::Intersection(parts) => f.debug_tuple("Intersection").field(parts).finish(),
            Shape::Complement(inner) => f.debug_tuple("Complement").field(inner).finish(),
            Shape::Custom { label, .. } => write!(f, "Custom({label})"),
        }
    }
}

impl Shape {
    pub fn ball(center: Point, radius: f64) -> Shape {
        Shape::Ball { center, radius }
    }

    pub fn cuboid(lo: Point, hi: Point) -> Shape {
        Shape::Cuboid { lo, hi }
    }

    pub fn custom(
        label: impl Into<String>,
        sd: impl Fn(&Point) -> f64 + Send + Sync + 'static,
    ) -> Shape {
        Shape::Custom {
            label: label.into(),
            sd: Arc::new(sd),
        }
    }

    pub fn minus(self, other: Shape) -> Shape {
        Shape::Intersection(vec![self, Shape::Complement(Box::new(other))])
    }

    pub fn and(self, other: Shape) -> Shape {
        match self {
            Shape::Intersection(mut parts) => {
                parts.push(other);
                Shape::Intersection(parts)
            }
            s => Shape::Intersection(vec![s, other]),
        }
    }

    pub fn signed_distance(&self, x: &Point) -> f64 {
        match self {
            Shape::Everything => f64::NEG_INFINITY,
            Shape::Ball { center, radius } => x.dist(center) - radius,
            Shape::Cuboid { lo, hi } => {
                let mut inside_max = f64::NEG_INFINITY;
                let mut outside_sq = 0.0;
                let mut outside = false;
                for i in 0..x.dim() {
                    let d = (lo[i] - x[i]).max(x[i] - hi[i]);
                    if d > 0.0 {
                        outside = true;
                        outside_sq += d * d;
                    } else {
                        inside_max = inside_max.max(d);
                    }
                }
                if outside {
                    outside_sq.sqrt()
                } else {
                    inside_max
                }
            }
            Shape::Intersection(parts) => parts
                .iter()
                .map(|s| s.signed_distance(x))
                .fold(f64::NEG_INFINITY, f64::max),
            Shape::Complement(inner) => -inner.signed_distance(x),
            Shape::Custom { sd, .. } => sd(x),
        }
    }

    pub fn contains(&self, x: &Point) -> bool {
        self.signed_distance(x) < 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn det_and_inverse_3d() {
        let m = Mat::from_rows(&[&[2.0, 1.0, 0.0], &[0.5, 3.0, 1.0], &[0.0, -1.0, 4.0]]);
        let inv = m.inverse().unwrap();
        let prod = m * inv;
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((prod.get(i, j) - e).abs() < 1e-14);
            }
        }
        assert!((m.det() - 24.0).abs() < 1e-12);
    }

    #[test]
    fn operator_norm_matches_known_values() {
        let m = Mat::from_rows(&[&[1.0, 1.0], &[0.0, 1.0]]);
        // golden ratio is the largest singular value of the shear
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((m.operator_norm() - phi).abs() < 1e-13);
        let d = Mat::diag(&[1.0, -7.0, 3.0]);
        assert!((d.operator_norm() - 7.0).abs() < 1e-12);
        let r = Mat::from_rows(&[&[0.0, -2.0, 0.0], &[2.0, 0.0, 0.0], &[0.0, 0.0, 1.0]]);
        assert!((r.operator_norm() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn unit_ball_volumes() {
        assert_eq!(unit_ball_volume(1), 2.0);
        assert!((unit_ball_volume(2) - std::f64::consts::PI).abs() < 1e-15);
        assert!((unit_ball_volume(4) - std::f64::consts::PI.powi(2) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn cuboid_distance_with_infinite_sides() {
        let half = Shape::cuboid(
            Point::d2(f64::NEG_INFINITY, f64::NEG_INFINITY),
            Point::d2(0.5, f64::INFINITY),
        );
        assert!((half.signed_distance(&Point::d2(0.2, 100.0)) + 0.3).abs() < 1e-15);
        assert!((half.signed_distance(&Point::d2(0.7, -3.0)) - 0.2).abs() < 1e-15);
        let sq = Shape::cuboid(Point::d2(0.0, 0.0), Point::d2(1.0, 1.0));
        assert!((sq.signed_distance(&Point::d2(2.0, 2.0)) - 2f64.sqrt()).abs() < 1e-15);
        let ring = Shape::ball(Point::d2(0.0, 0.0), 1.0).minus(Shape::ball(Point::d2(0.0, 0.0), 0.5));
        assert!(ring.contains(&Point::d2(0.7, 0.0)));
        assert!(!ring.contains(&Point::d2(0.2, 0.0)));
    }
}
