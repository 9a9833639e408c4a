//! Built-in maps.
//!
//! The two- and three-dimensional maps are given by an explicit local form
//! near the origin. Away from it they are completed by coordinatewise
//! folding (a piecewise-affine tent map with `surrogate_expansion` laps per
//! axis), which gives the induced map something to return through.

use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{AcimError, Result};
use crate::geometry::{unit_ball_volume, Mat, Point, Shape};
use crate::map_model::{
    Branch, BranchInverse, PiecewiseMap, Region, ScalarProfile, StudyDomain, ToleranceConfig,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExampleId {
    One,
    Two,
    Three,
    Four,
    Neutral1d,
}

impl Serialize for ExampleId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExampleId::One => s.serialize_u8(1),
            ExampleId::Two => s.serialize_u8(2),
            ExampleId::Three => s.serialize_u8(3),
            ExampleId::Four => s.serialize_u8(4),
            ExampleId::Neutral1d => s.serialize_str("neutral1d"),
        }
    }
}

impl<'de> Deserialize<'de> for ExampleId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct IdVisitor;
        impl Visitor<'_> for IdVisitor {
            type Value = ExampleId;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("1, 2, 3, 4 or \"neutral1d\"")
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<ExampleId, E> {
                match v {
                    1 => Ok(ExampleId::One),
                    2 => Ok(ExampleId::Two),
                    3 => Ok(ExampleId::Three),
                    4 => Ok(ExampleId::Four),
                    _ => Err(E::custom(format!("unknown example id {v}"))),
                }
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<ExampleId, E> {
                if v < 0 {
                    return Err(E::custom(format!("unknown example id {v}")));
                }
                self.visit_u64(v as u64)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<ExampleId, E> {
                match v {
                    "neutral1d" | "neutral_1d" => Ok(ExampleId::Neutral1d),
                    other => other
                        .parse::<u64>()
                        .map_err(|_| E::custom(format!("unknown example id {other:?}")))
                        .and_then(|n| self.visit_u64(n)),
                }
            }
        }
        d.deserialize_any(IdVisitor)
    }
}

fn default_r0() -> f64 {
    0.5
}
fn default_region_radius() -> f64 {
    0.2
}
fn default_expansion() -> f64 {
    3.0
}
fn default_gamma() -> f64 {
    2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleSpec {
    pub example_id: ExampleId,
    #[serde(default = "default_r0")]
    pub r0: f64,
    #[serde(default = "default_region_radius")]
    pub region_radius: f64,
    #[serde(default = "default_expansion")]
    pub surrogate_expansion: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Example 4 only: 1 for the cusp below the parabola, 2 for the outside.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub component: Option<u8>,
}

impl ExampleSpec {
    pub fn new(example_id: ExampleId) -> Self {
        ExampleSpec {
            example_id,
            r0: default_r0(),
            region_radius: default_region_radius(),
            surrogate_expansion: default_expansion(),
            gamma: default_gamma(),
            component: None,
        }
    }

    /// One-dimensional map with region (0, 0.25).
    pub fn neutral1d(gamma: f64) -> Self {
        ExampleSpec {
            gamma,
            region_radius: 0.25,
            ..Self::new(ExampleId::Neutral1d)
        }
    }

    pub fn example4(component: u8) -> Self {
        ExampleSpec {
            component: Some(component),
            ..Self::new(ExampleId::Four)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AcimError::BadSpec(m));
        if !(self.r0 > 0.0 && self.r0 < 1.0) {
            return bad(format!("r0 must lie in (0, 1), got {}", self.r0));
        }
        if !(self.region_radius > 0.0 && self.region_radius < self.r0) {
            return bad(format!(
                "region_radius {} must be positive and below r0 = {}",
                self.region_radius, self.r0
            ));
        }
        let lam = self.surrogate_expansion;
        if !(lam >= 2.0 && lam.fract() == 0.0 && lam <= 64.0) {
            return bad(format!("surrogate_expansion must be an integer in [2, 64], got {lam}"));
        }
        if self.example_id == ExampleId::Neutral1d && !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if self.example_id == ExampleId::Four && !matches!(self.component, None | Some(1) | Some(2)) {
            return bad("component must be 1 or 2".into());
        }
        Ok(())
    }
}

/// Build the map described by `spec`. Example 4 uses `spec.component`
/// (default 1).
pub fn build_map(spec: &ExampleSpec) -> Result<PiecewiseMap> {
    match spec.example_id {
        ExampleId::One | ExampleId::Three => example1(spec),
        ExampleId::Two => example2(spec),
        ExampleId::Four => {
            let e = example4(spec)?;
            Ok(match spec.component.unwrap_or(1) {
                2 => e.outer,
                _ => e.inner,
            })
        }
        ExampleId::Neutral1d => neutral_1d(spec),
    }
}

/// Reflecting tent map of [-1, 1] onto itself with `lambda` affine laps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fold {
    pub lambda: usize,
}

impl Fold {
    pub fn new(lambda: usize) -> Self {
        assert!(lambda >= 2);
        Fold { lambda }
    }

    pub fn lap(&self, x: f64) -> usize {
        let u = self.lambda as f64 * (x + 1.0) / 2.0;
        (u.floor().max(0.0) as usize).min(self.lambda - 1)
    }

    /// Lap `k` is [bounds.0, bounds.1).
    pub fn bounds(&self, k: usize) -> (f64, f64) {
        let l = self.lambda as f64;
        (2.0 * k as f64 / l - 1.0, 2.0 * (k + 1) as f64 / l - 1.0)
    }

    /// Affine formula of lap `k`, valid for any real x.
    pub fn apply(&self, k: usize, x: f64) -> f64 {
        let frac = self.lambda as f64 * (x + 1.0) / 2.0 - k as f64;
        let v = if k.is_multiple_of(2) { frac } else { 1.0 - frac };
        2.0 * v - 1.0
    }

    pub fn slope(&self, k: usize) -> f64 {
        if k.is_multiple_of(2) {
            self.lambda as f64
        } else {
            -(self.lambda as f64)
        }
    }

    pub fn invert(&self, k: usize, y: f64) -> f64 {
        let v = (y + 1.0) / 2.0;
        let frac = if k.is_multiple_of(2) { v } else { 1.0 - v };
        2.0 * (k as f64 + frac) / self.lambda as f64 - 1.0
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.apply(self.lap(x), x)
    }

    /// Lap bounds with the two outermost edges pushed to infinity, so the
    /// edge of [-1, 1] is not mistaken for a branch boundary.
    fn open_bounds(&self, k: usize) -> (f64, f64) {
        let (lo, hi) = self.bounds(k);
        (
            if k == 0 { f64::NEG_INFINITY } else { lo },
            if k == self.lambda - 1 { f64::INFINITY } else { hi },
        )
    }
}

fn fold_of(spec: &ExampleSpec) -> Fold {
    Fold::new(spec.surrogate_expansion as usize)
}

fn cube(dim: usize, lo: f64, hi: f64) -> (Point, Point) {
    (Point::new(&vec![lo; dim]), Point::new(&vec![hi; dim]))
}

fn cube_domain(dim: usize) -> StudyDomain {
    let (lo, hi) = cube(dim, -1.0, 1.0);
    StudyDomain {
        shape: Shape::cuboid(lo, hi),
        lo,
        hi,
        volume: 2f64.powi(dim as i32),
    }
}

/// All multi-indices of fold laps, first axis fastest.
fn lap_cells(dim: usize, lambda: usize) -> Vec<Vec<usize>> {
    (0..lambda.pow(dim as u32))
        .map(|mut c| {
            (0..dim)
                .map(|_| {
                    let k = c % lambda;
                    c /= lambda;
                    k
                })
                .collect()
        })
        .collect()
}

fn cell_box(fold: &Fold, laps: &[usize]) -> Shape {
    let lo: Vec<f64> = laps.iter().map(|&k| fold.open_bounds(k).0).collect();
    let hi: Vec<f64> = laps.iter().map(|&k| fold.open_bounds(k).1).collect();
    Shape::cuboid(Point::new(&lo), Point::new(&hi))
}

fn cell_far_corner(fold: &Fold, laps: &[usize]) -> f64 {
    laps.iter()
        .map(|&k| {
            let (a, b) = fold.bounds(k);
            a.abs().max(b.abs()).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

/// Folding branch on a lap cell, with `excluded` (the local branch domain,
/// mapped affinely as `excluded_image`) removed from domain and image.
fn fold_branch(fold: Fold, laps: Vec<usize>, excluded: Option<(Shape, Shape)>) -> Branch {
    let dim = laps.len();
    let (mut domain, mut image) = (cell_box(&fold, &laps), cube_domain(dim).shape);
    if let Some((ex, ex_img)) = excluded {
        domain = domain.minus(ex);
        image = image.minus(ex_img);
    }
    let l1 = laps.clone();
    let l2 = laps.clone();
    let label = format!("fold{laps:?}");
    let slopes: Vec<f64> = laps.iter().map(|&k| fold.slope(k)).collect();
    let det: f64 = slopes.iter().product();
    Branch::new(
        label,
        domain,
        image,
        move |x| x.map_coords(|i, v| fold.apply(l1[i], v)),
        move |_| Mat::diag(&slopes),
        BranchInverse::Explicit(std::sync::Arc::new(move |y: &Point| {
            if y.as_slice().iter().any(|v| v.abs() > 1.0) {
                return None;
            }
            Some(y.map_coords(|i, v| fold.invert(l2[i], v)))
        })),
    )
    .with_det(move |_| det)
}

/// Pure folding map of [-1, 1]^dim: every branch is affine and full, so
/// Lebesgue measure is invariant. The region is empty.
pub fn fold_map(dim: usize, lambda: usize) -> Result<PiecewiseMap> {
    if !(1..=3).contains(&dim) || lambda < 2 {
        return Err(AcimError::BadSpec("fold map needs dim in 1..=3 and lambda >= 2".into()));
    }
    let fold = Fold::new(lambda);
    // interior fixed point of the lap map closest to the origin
    let fixed = (0..lambda)
        .filter_map(|k| {
            let c = fold.apply(k, 0.0);
            let x = c / (1.0 - fold.slope(k));
            let (a, b) = fold.bounds(k);
            (x > a && x < b).then_some(x)
        })
        .min_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap_or(0.0);
    let p = Point::new(&vec![fixed; dim]);
    let branches = lap_cells(dim, lambda)
        .into_iter()
        .map(|laps| fold_branch(fold, laps, None))
        .collect();
    let region = Region {
        shape: Shape::ball(p, 0.0),
        lo: p,
        hi: p,
        volume: 0.0,
        label: "empty".into(),
    };
    PiecewiseMap::new(
        format!("fold{lambda}-{dim}d"),
        cube_domain(dim),
        branches,
        p,
        region,
        0.0,
        ToleranceConfig::default(),
    )
}

// Local form of Example 1: T(x, y) = (x a, y a^2), a = 1 + x^2 + y^2.

pub fn ex1_forward(p: &Point) -> Point {
    let a = 1.0 + p.norm_sq();
    Point::d2(p[0] * a, p[1] * a * a)
}

pub fn ex1_jacobian(p: &Point) -> Mat {
    let (x, y) = (p[0], p[1]);
    let a = 1.0 + x * x + y * y;
    Mat::from_rows(&[
        &[a + 2.0 * x * x, 2.0 * x * y],
        &[4.0 * x * y * a, a * a + 4.0 * y * y * a],
    ])
}

pub fn ex1_det(p: &Point) -> f64 {
    let (x, y) = (p[0], p[1]);
    let a = 1.0 + x * x + y * y;
    a * a * (a + 2.0 * x * x + 4.0 * y * y)
}

fn ex1_profile() -> ScalarProfile {
    ScalarProfile::new(
        |y, s| {
            let a = 1.0 + s * s;
            let (u, v) = (y[0] / a, y[1] / (a * a));
            s - (u * u + v * v).sqrt()
        },
        |y, s| {
            let a = 1.0 + s * s;
            Point::d2(y[0] / a, y[1] / (a * a))
        },
        |y| (0.0, y.norm()),
    )
}

/// Preimage radius of `y` under the Example 1 local form.
fn ex1_preimage_radius(y: &Point) -> f64 {
    let profile = ex1_profile();
    match profile.solve(y, profile.default_bracket(y), 1e-12) {
        Ok(x) => x.norm(),
        Err(_) => f64::INFINITY,
    }
}

fn ex1_local_branch(r0: f64, restrict: Option<Shape>) -> Branch {
    let ball = Shape::ball(Point::d2(0.0, 0.0), r0);
    let image = Shape::custom("T(ball)", move |y| ex1_preimage_radius(y) - r0);
    let (domain, image) = match restrict {
        Some(s) => (ball.and(s.clone()), image.and(s)),
        None => (ball, image),
    };
    Branch::new(
        "local",
        domain,
        image,
        ex1_forward,
        ex1_jacobian,
        BranchInverse::Scalar(ex1_profile()),
    )
    .with_det(ex1_det)
}

fn ball_region(dim: usize, radius: f64) -> Region {
    let (lo, hi) = cube(dim, -radius, radius);
    Region {
        shape: Shape::ball(Point::zeros(dim), radius),
        lo,
        hi,
        volume: unit_ball_volume(dim) * radius.powi(dim as i32),
        label: format!("ball({radius})"),
    }
}

pub fn example1(spec: &ExampleSpec) -> Result<PiecewiseMap> {
    spec.validate()?;
    let r0 = spec.r0;
    let reach = r0 * (1.0 + r0 * r0).powi(2);
    if reach > 1.0 {
        return Err(AcimError::BadSpec(format!(
            "local form maps B_r0 outside the square (reach {reach:.4} > 1)"
        )));
    }
    let fold = fold_of(spec);
    let origin = Point::d2(0.0, 0.0);
    let mut branches = vec![ex1_local_branch(r0, None)];
    for laps in lap_cells(2, fold.lambda) {
        if cell_far_corner(&fold, &laps) < r0 {
            continue;
        }
        let c = Point::d2(fold.apply(laps[0], 0.0), fold.apply(laps[1], 0.0));
        let excluded = (
            Shape::ball(origin, r0),
            Shape::ball(c, fold.lambda as f64 * r0),
        );
        branches.push(fold_branch(fold, laps, Some(excluded)));
    }
    let name = if spec.example_id == ExampleId::Three {
        "example3"
    } else {
        "example1"
    };
    PiecewiseMap::new(
        name,
        cube_domain(2),
        branches,
        origin,
        ball_region(2, spec.region_radius),
        r0,
        ToleranceConfig::default(),
    )
}

// Example 2: T(x, y, z) = (x a, y a^2, z b^3), a = 1 + r^2, b = 2 + r^2.

pub fn ex2_forward(p: &Point) -> Point {
    let r2 = p.norm_sq();
    let (a, b) = (1.0 + r2, 2.0 + r2);
    Point::d3(p[0] * a, p[1] * a * a, p[2] * b * b * b)
}

pub fn ex2_jacobian(p: &Point) -> Mat {
    let r2 = p.norm_sq();
    let (a, b) = (1.0 + r2, 2.0 + r2);
    let d = [a, a * a, b * b * b];
    let u = [p[0], 2.0 * p[1] * a, 3.0 * p[2] * b * b];
    let mut m = Mat::zeros(3);
    for i in 0..3 {
        for j in 0..3 {
            let diag = if i == j { d[i] } else { 0.0 };
            m.set(i, j, diag + 2.0 * u[i] * p[j]);
        }
    }
    m
}

pub fn ex2_det(p: &Point) -> f64 {
    let (x, y, z) = (p[0], p[1], p[2]);
    let r2 = p.norm_sq();
    let (a, b) = (1.0 + r2, 2.0 + r2);
    (a * b).powi(3) * (1.0 + 2.0 * x * x / a + 4.0 * y * y / a + 6.0 * z * z / b)
}

fn ex2_profile() -> ScalarProfile {
    ScalarProfile::new(
        |y, s| {
            let (a, b) = (1.0 + s * s, 2.0 + s * s);
            let (u, v, w) = (y[0] / a, y[1] / (a * a), y[2] / (b * b * b));
            s - (u * u + v * v + w * w).sqrt()
        },
        |y, s| {
            let (a, b) = (1.0 + s * s, 2.0 + s * s);
            Point::d3(y[0] / a, y[1] / (a * a), y[2] / (b * b * b))
        },
        |y| (0.0, y.norm()),
    )
}

fn z_slab(half: f64) -> Shape {
    Shape::cuboid(
        Point::d3(f64::NEG_INFINITY, f64::NEG_INFINITY, -half),
        Point::d3(f64::INFINITY, f64::INFINITY, half),
    )
}

pub fn example2(spec: &ExampleSpec) -> Result<PiecewiseMap> {
    spec.validate()?;
    let r0 = spec.r0;
    if r0 * (1.0 + r0 * r0).powi(2) > 1.0 {
        return Err(AcimError::BadSpec("local form maps B_r0 outside the cube".into()));
    }
    // the z-coordinate is stretched by (2 + r^2)^3 >= 8, so the local branch is
    // a flat slab of the ball
    let z_cap = 0.999 / (2.0 + r0 * r0).powi(3);
    let origin = Point::zeros(3);
    let local_domain = Shape::ball(origin, r0).and(z_slab(z_cap));
    let profile = ex2_profile();
    let p2 = profile.clone();
    let local_image = Shape::custom("T(ball cap slab)", move |y| {
        match p2.solve(y, p2.default_bracket(y), 1e-12) {
            Ok(x) => (x.norm() - r0).max(x[2].abs() - z_cap),
            Err(_) => f64::INFINITY,
        }
    });
    let local = Branch::new(
        "local",
        local_domain.clone(),
        local_image,
        ex2_forward,
        ex2_jacobian,
        BranchInverse::Scalar(profile),
    )
    .with_det(ex2_det);
    let fold = fold_of(spec);
    let lam = fold.lambda as f64;
    let mut branches = vec![local];
    for laps in lap_cells(3, fold.lambda) {
        let c = Point::d3(
            fold.apply(laps[0], 0.0),
            fold.apply(laps[1], 0.0),
            fold.apply(laps[2], 0.0),
        );
        let ex_img = Shape::ball(c, lam * r0).and(Shape::cuboid(
            Point::d3(f64::NEG_INFINITY, f64::NEG_INFINITY, c[2] - lam * z_cap),
            Point::d3(f64::INFINITY, f64::INFINITY, c[2] + lam * z_cap),
        ));
        branches.push(fold_branch(fold, laps, Some((local_domain.clone(), ex_img))));
    }
    let rr = spec.region_radius;
    let h = z_cap / 2.0;
    let region = Region {
        shape: Shape::ball(origin, rr).and(z_slab(h)),
        lo: Point::d3(-rr, -rr, -h),
        hi: Point::d3(rr, rr, h),
        volume: std::f64::consts::PI * (2.0 * rr * rr * h - 2.0 * h * h * h / 3.0),
        label: format!("ball({rr}) cap slab({h:.5})"),
    };
    PiecewiseMap::new(
        "example2",
        cube_domain(3),
        branches,
        origin,
        region,
        r0,
        ToleranceConfig::default(),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Component {
    /// The cusp |y| < x^2.
    Inner,
    /// x^2 < |y|.
    Outer,
    Boundary,
}

pub struct Example4 {
    pub inner: PiecewiseMap,
    pub outer: PiecewiseMap,
    pub tol: f64,
}

impl Example4 {
    pub fn component_of(&self, x: &Point) -> Component {
        let gap = x[1].abs() - x[0] * x[0];
        if gap.abs() <= self.tol {
            Component::Boundary
        } else if gap < 0.0 {
            Component::Inner
        } else {
            Component::Outer
        }
    }
}

/// Approximate signed distance to the cusp {|y| < x^2}.
fn cusp_sd(p: &Point) -> f64 {
    let (x, y) = (p[0], p[1]);
    (y.abs() - x * x) / (1.0 + 4.0 * x * x).sqrt()
}

fn region_by_quadrature(shape: Shape, rr: f64, label: &str) -> Region {
    // midpoint rule in x, exact in y for the cusp slice
    let n = 20_000;
    let h = 2.0 * rr / n as f64;
    let cusp_area: f64 = (0..n)
        .map(|i| {
            let x = -rr + (i as f64 + 0.5) * h;
            2.0 * (x * x).min((rr * rr - x * x).max(0.0).sqrt()) * h
        })
        .sum();
    let volume = if label == "inner" {
        cusp_area
    } else {
        std::f64::consts::PI * rr * rr - cusp_area
    };
    Region {
        shape,
        lo: Point::d2(-rr, -rr),
        hi: Point::d2(rr, rr),
        volume,
        label: format!("ball({rr}) {label}"),
    }
}

/// Example 4: the Example 1 local form restricted to either side of the
/// invariant parabola pair |y| = x^2, each side completed by folding in
/// coordinates adapted to it.
pub fn example4(spec: &ExampleSpec) -> Result<Example4> {
    spec.validate()?;
    let r0 = spec.r0;
    if r0 * (1.0 + r0 * r0).powi(2) > 1.0 {
        return Err(AcimError::BadSpec("local form maps B_r0 outside the square".into()));
    }
    let fold = fold_of(spec);
    let tol = ToleranceConfig::default();
    Ok(Example4 {
        inner: example4_inner(spec, fold, tol.clone())?,
        outer: example4_outer(spec, fold, tol.clone())?,
        tol: tol.root_tol,
    })
}

fn example4_inner(spec: &ExampleSpec, fold: Fold, tol: ToleranceConfig) -> Result<PiecewiseMap> {
    let r0 = spec.r0;
    let lam = fold.lambda as f64;
    let origin = Point::d2(0.0, 0.0);
    let cusp = Shape::custom("cusp", cusp_sd);
    let mut branches = vec![ex1_local_branch(r0, Some(cusp.clone()))];
    // chart (x, w) with w = y / x^2 in (-1, 1)
    for kx in 0..fold.lambda {
        let (a, b) = fold.bounds(kx);
        let xm = a.abs().max(b.abs());
        if a < 0.0 && b > 0.0 && (xm * xm + xm.powi(4)).sqrt() < r0 {
            continue;
        }
        for kw in 0..fold.lambda {
            let (xlo, xhi) = fold.open_bounds(kx);
            let (wlo, whi) = fold.open_bounds(kw);
            let strip = Shape::cuboid(
                Point::d2(xlo, f64::NEG_INFINITY),
                Point::d2(xhi, f64::INFINITY),
            );
            let wband = Shape::custom(format!("w-lap {kw}"), move |p| {
                let x2 = p[0] * p[0];
                let w = p[1] / x2;
                (wlo - w).max(w - whi) * x2
            });
            let domain = cusp
                .clone()
                .and(strip)
                .and(wband)
                .minus(Shape::ball(origin, r0));
            let inv = move |y: &Point| -> Option<Point> {
                if y[0].abs() > 1.0 || y[0] == 0.0 {
                    return None;
                }
                let w1 = y[1] / (y[0] * y[0]);
                if w1.abs() > 1.0 {
                    return None;
                }
                let x = fold.invert(kx, y[0]);
                let w = fold.invert(kw, w1);
                Some(Point::d2(x, w * x * x))
            };
            let image = Shape::custom("inner fold image", move |y| {
                let c = cusp_sd(y);
                match inv(y) {
                    Some(x) => c.max(lam * (r0 - x.norm())),
                    None => c.max(1.0),
                }
            });
            let (sx, sw) = (fold.slope(kx), fold.slope(kw));
            branches.push(
                Branch::new(
                    format!("inner fold[{kx},{kw}]"),
                    domain,
                    image,
                    move |p| {
                        let xp = fold.apply(kx, p[0]);
                        let wp = fold.apply(kw, p[1] / (p[0] * p[0]));
                        Point::d2(xp, wp * xp * xp)
                    },
                    move |p| {
                        let (x, y) = (p[0], p[1]);
                        let xp = fold.apply(kx, x);
                        let wp = fold.apply(kw, y / (x * x));
                        let dw_dx = -2.0 * y / (x * x * x);
                        let dw_dy = 1.0 / (x * x);
                        Mat::from_rows(&[
                            &[sx, 0.0],
                            &[
                                sw * dw_dx * xp * xp + wp * 2.0 * xp * sx,
                                sw * dw_dy * xp * xp,
                            ],
                        ])
                    },
                    BranchInverse::Explicit(std::sync::Arc::new(inv)),
                )
                .with_det(move |p| {
                    let xp = fold.apply(kx, p[0]);
                    sx * sw * xp * xp / (p[0] * p[0])
                }),
            );
        }
    }
    let domain = StudyDomain {
        shape: Shape::custom("cusp", cusp_sd).and(Shape::cuboid(
            Point::d2(-1.0, -1.0),
            Point::d2(1.0, 1.0),
        )),
        lo: Point::d2(-1.0, -1.0),
        hi: Point::d2(1.0, 1.0),
        volume: 4.0 / 3.0,
    };
    let rr = spec.region_radius;
    let region = region_by_quadrature(
        Shape::ball(origin, rr).and(Shape::custom("cusp", cusp_sd)),
        rr,
        "inner",
    );
    PiecewiseMap::new("example4-inner", domain, branches, origin, region, r0, tol)
}

fn outer_sd(p: &Point) -> f64 {
    -cusp_sd(p)
}

/// Chart coordinate s = sign(y)(|y| - x^2)/(1 - x^2) on the outer component.
fn outer_chart(x: f64, y: f64) -> f64 {
    y.signum() * (y.abs() - x * x) / (1.0 - x * x)
}

fn outer_unchart(x: f64, s: f64) -> f64 {
    s.signum() * (x * x + s.abs() * (1.0 - x * x))
}

fn example4_outer(spec: &ExampleSpec, fold: Fold, tol: ToleranceConfig) -> Result<PiecewiseMap> {
    let r0 = spec.r0;
    let lam = fold.lambda as f64;
    let origin = Point::d2(0.0, 0.0);
    let outer = Shape::custom("outer", outer_sd);
    let mut branches = vec![ex1_local_branch(r0, Some(outer.clone()))];
    for kx in 0..fold.lambda {
        for ks in 0..fold.lambda {
            let (xlo, xhi) = fold.open_bounds(kx);
            let (slo, shi) = fold.open_bounds(ks);
            let strip = Shape::cuboid(
                Point::d2(xlo, f64::NEG_INFINITY),
                Point::d2(xhi, f64::INFINITY),
            );
            let sband = Shape::custom(format!("s-lap {ks}"), move |p| {
                let s = outer_chart(p[0], p[1]);
                (slo - s).max(s - shi) * (1.0 - p[0] * p[0])
            });
            let domain = outer
                .clone()
                .and(strip)
                .and(sband)
                .minus(Shape::ball(origin, r0));
            let inv = move |y: &Point| -> Option<Point> {
                if y[0].abs() >= 1.0 || y[1].abs() > 1.0 {
                    return None;
                }
                let s1 = outer_chart(y[0], y[1]);
                if s1.abs() > 1.0 {
                    return None;
                }
                let x = fold.invert(kx, y[0]);
                let s = fold.invert(ks, s1);
                Some(Point::d2(x, outer_unchart(x, s)))
            };
            let image = Shape::custom("outer fold image", move |y| {
                let c = outer_sd(y);
                match inv(y) {
                    Some(x) => c.max(lam * (r0 - x.norm())),
                    None => c.max(1.0),
                }
            });
            let (sx, ss) = (fold.slope(kx), fold.slope(ks));
            branches.push(
                Branch::new(
                    format!("outer fold[{kx},{ks}]"),
                    domain,
                    image,
                    move |p| {
                        let xp = fold.apply(kx, p[0]);
                        let sp = fold.apply(ks, outer_chart(p[0], p[1]));
                        Point::d2(xp, outer_unchart(xp, sp))
                    },
                    move |p| {
                        let (x, y) = (p[0], p[1]);
                        let xp = fold.apply(kx, x);
                        let sp = fold.apply(ks, outer_chart(x, y));
                        let one_m = 1.0 - x * x;
                        let ds_dx = y.signum() * 2.0 * x * (y.abs() - 1.0) / (one_m * one_m);
                        let ds_dy = 1.0 / one_m;
                        let dy_dxp = 2.0 * sp.signum() * xp * (1.0 - sp.abs());
                        let dy_dsp = 1.0 - xp * xp;
                        Mat::from_rows(&[
                            &[sx, 0.0],
                            &[dy_dxp * sx + dy_dsp * ss * ds_dx, dy_dsp * ss * ds_dy],
                        ])
                    },
                    BranchInverse::Explicit(std::sync::Arc::new(inv)),
                )
                .with_det(move |p| {
                    let xp = fold.apply(kx, p[0]);
                    sx * ss * (1.0 - xp * xp) / (1.0 - p[0] * p[0])
                }),
            );
        }
    }
    let domain = StudyDomain {
        shape: outer.clone().and(Shape::cuboid(
            Point::d2(-1.0, -1.0),
            Point::d2(1.0, 1.0),
        )),
        lo: Point::d2(-1.0, -1.0),
        hi: Point::d2(1.0, 1.0),
        volume: 8.0 / 3.0,
    };
    let rr = spec.region_radius;
    let region = region_by_quadrature(Shape::ball(origin, rr).and(outer), rr, "outer");
    PiecewiseMap::new("example4-outer", domain, branches, origin, region, r0, tol)
}

/// One-dimensional map t(1 + t^gamma) on [0, r0) completed by the affine
/// branch (t - r0)/(1 - r0) on [r0, 1]. Region is (0, region_radius).
pub fn neutral_1d(spec: &ExampleSpec) -> Result<PiecewiseMap> {
    spec.validate()?;
    let (r0, g) = (spec.r0, spec.gamma);
    let top = r0 * (1.0 + r0.powf(g));
    if top > 1.0 {
        return Err(AcimError::BadSpec(format!(
            "neutral branch overshoots the interval: r0(1 + r0^gamma) = {top}"
        )));
    }
    let ninf = f64::NEG_INFINITY;
    let local = Branch::new(
        "neutral",
        Shape::cuboid(Point::d1(ninf), Point::d1(r0)),
        Shape::cuboid(Point::d1(0.0), Point::d1(top)),
        move |t| Point::d1(t[0] * (1.0 + t[0].abs().powf(g))),
        move |t| Mat::diag(&[1.0 + (1.0 + g) * t[0].abs().powf(g)]),
        BranchInverse::Scalar(ScalarProfile::new(
            move |y, s| s * (1.0 + s.powf(g)) - y[0],
            |_, s| Point::d1(s),
            |y| (0.0, y[0].abs()),
        )),
    )
    .with_det(move |t| 1.0 + (1.0 + g) * t[0].abs().powf(g));
    let slope = 1.0 / (1.0 - r0);
    let affine = Branch::new(
        "affine",
        Shape::cuboid(Point::d1(r0), Point::d1(f64::INFINITY)),
        Shape::cuboid(Point::d1(0.0), Point::d1(1.0)),
        move |t| Point::d1((t[0] - r0) * slope),
        move |_| Mat::diag(&[slope]),
        BranchInverse::Explicit(std::sync::Arc::new(move |y: &Point| {
            (0.0..=1.0)
                .contains(&y[0])
                .then(|| Point::d1(r0 + y[0] / slope))
        })),
    )
    .with_det(move |_| slope);
    let rr = spec.region_radius;
    let region = Region {
        shape: Shape::cuboid(Point::d1(ninf), Point::d1(rr)),
        lo: Point::d1(0.0),
        hi: Point::d1(rr),
        volume: rr,
        label: format!("(0, {rr})"),
    };
    let domain = StudyDomain {
        shape: Shape::cuboid(Point::d1(0.0), Point::d1(1.0)),
        lo: Point::d1(0.0),
        hi: Point::d1(1.0),
        volume: 1.0,
    };
    PiecewiseMap::new(
        format!("neutral1d(gamma={g})"),
        domain,
        vec![local, affine],
        Point::d1(0.0),
        region,
        r0,
        ToleranceConfig::default(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::AcimError;

    fn ex1() -> PiecewiseMap {
        example1(&ExampleSpec::new(ExampleId::One)).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn example1_point_values() {
        let m = ex1();
        assert_eq!(m.evaluate(&Point::d2(0.0, 0.0)).unwrap(), Point::d2(0.0, 0.0));
        let v = m.evaluate(&Point::d2(0.1, 0.0)).unwrap();
        assert!(close(v[0], 0.101, 1e-15) && v[1] == 0.0);
        let v = m.evaluate(&Point::d2(0.1, 0.1)).unwrap();
        assert!(close(v[0], 0.102, 1e-15));
        assert!(close(v[1], 0.1 * 1.02 * 1.02, 1e-15));
        let v = m.evaluate(&Point::d2(0.05, 0.05)).unwrap();
        assert!(close(v[0], 0.05 * 1.005, 1e-15) && close(v[1], 0.05 * 1.005 * 1.005, 1e-15));
    }

    #[test]
    fn example1_determinants() {
        let m = ex1();
        assert!(close(m.jacobian_det(&Point::d2(0.0, 0.0)).unwrap(), 1.0, 1e-15));
        // (1 + 3x^2)(1 + x^2)^2 at x = 0.1
        assert!(close(m.jacobian_det(&Point::d2(0.1, 0.0)).unwrap(), 1.050703, 1e-12));
        assert!(m.branch_count() >= 2);
        assert_eq!(m.branch_count(), 9);
        assert_eq!(m.r_preimage_count(), 9);
    }

    #[test]
    fn example1_branch_bookkeeping() {
        let m = ex1();
        assert_eq!(m.branch_index(&Point::d2(0.0, 0.0)).unwrap(), 1);
        assert_eq!(m.branch_index(&Point::d2(0.2, -0.1)).unwrap(), 1);
        assert!(m.branch_index(&Point::d2(0.9, 0.9)).unwrap() > 1);
        // lap boundary x = 1/3 away from the ball
        let on_seam = Point::d2(1.0 / 3.0, 0.9);
        assert!(matches!(m.branch_index(&on_seam), Err(AcimError::PointOnBoundary(_))));
        assert!(matches!(
            m.branch_index(&Point::d2(1.5, 0.0)),
            Err(AcimError::OutOfDomain(_))
        ));
        // edges of the square are part of M, not branch boundaries
        assert!(m.evaluate(&Point::d2(1.0, 0.5)).is_ok());
    }

    #[test]
    fn example1_local_inverse() {
        let m = ex1();
        let x = m
            .local_inverse(1, &Point::d2(0.101, 0.0), Some((0.0, 0.101)))
            .unwrap();
        assert!(close(x[0], 0.1, 1e-14) && x[1] == 0.0);
        let x = m.local_inverse(1, &Point::d2(0.0, 0.0), None).unwrap();
        assert_eq!(x, Point::d2(0.0, 0.0));
        let y = Point::d2(0.0, 0.1 * 1.01f64.powi(2));
        let x = m.local_inverse(1, &y, None).unwrap();
        assert!(close(x[1], 0.1, 1e-14) && x[0] == 0.0);
        assert!(matches!(
            m.local_inverse(1, &Point::d2(0.101, 0.0), Some((0.2, 0.3))),
            Err(AcimError::NoRoot { .. })
        ));
    }

    #[test]
    fn example1_contraction_coefficient() {
        let m = ex1();
        let s = m
            .contraction_coefficient(&Point::d2(0.1, 0.0), 0.005, 256, 3)
            .unwrap();
        assert!(s > 0.9 && s < 1.0, "s = {s}");
        let s = m
            .contraction_coefficient(&Point::d2(0.8, 0.8), 0.005, 256, 3)
            .unwrap();
        assert!(close(s, 1.0 / 3.0, 1e-12), "s = {s}");
        assert_eq!(
            m.contraction_coefficient(&Point::d2(0.0, 0.0), 0.005, 256, 3),
            Err(AcimError::DegenerateProbe)
        );
    }

    #[test]
    fn example1_rejects_oversized_local_radius() {
        let spec = ExampleSpec {
            r0: 0.7,
            ..ExampleSpec::new(ExampleId::One)
        };
        assert!(matches!(example1(&spec), Err(AcimError::BadSpec(_))));
        let spec = ExampleSpec {
            region_radius: 0.6,
            ..ExampleSpec::new(ExampleId::One)
        };
        assert!(matches!(example1(&spec), Err(AcimError::BadSpec(_))));
    }

    #[test]
    fn example2_values() {
        let m = example2(&ExampleSpec::new(ExampleId::Two)).unwrap();
        let v = m.evaluate(&Point::d3(0.0, 0.0, 0.01)).unwrap();
        assert!(close(v[2], 0.01 * 2.0001f64.powi(3), 1e-15));
        assert_eq!((v[0], v[1]), (0.0, 0.0));
        let j = m.jacobian(&Point::zeros(3)).unwrap();
        assert_eq!(j, Mat::diag(&[1.0, 1.0, 8.0]));
        assert!(close(m.jacobian_det(&Point::zeros(3)).unwrap(), 8.0, 1e-14));
        let v = m.evaluate(&Point::d3(0.0, 0.0, -0.05)).unwrap();
        assert_eq!((v[0], v[1]), (0.0, 0.0));
        let y = ex2_forward(&Point::d3(0.1, -0.05, 0.02));
        let x = m.local_inverse(1, &y, None).unwrap();
        assert!(x.dist(&Point::d3(0.1, -0.05, 0.02)) < 1e-13);
    }

    #[test]
    fn fold_laps_and_inverse() {
        let f = Fold::new(3);
        assert!(close(f.eval(0.0), 0.0, 1e-15));
        assert!(close(f.eval(-1.0), -1.0, 1e-15));
        assert!(close(f.eval(1.0), 1.0, 1e-15));
        assert!(close(f.eval(1.0 / 3.0), -1.0, 1e-15));
        for k in 0..3 {
            for &y in &[-0.9, 0.0, 0.4] {
                let x = f.invert(k, y);
                assert_eq!(f.lap(x), k);
                assert!(close(f.apply(k, x), y, 1e-15));
            }
        }
        let m = fold_map(2, 3).unwrap();
        assert_eq!(m.branch_count(), 9);
        assert_eq!(m.evaluate(&m.neutral_point).unwrap(), m.neutral_point);
    }

    #[test]
    fn example4_components() {
        let e = example4(&ExampleSpec::example4(1)).unwrap();
        assert_eq!(e.component_of(&Point::d2(0.1, 0.0001)), Component::Inner);
        assert_eq!(e.component_of(&Point::d2(0.1, 0.1)), Component::Outer);
        assert_eq!(e.component_of(&Point::d2(0.1, 0.01)), Component::Boundary);
        let v = ex1_forward(&Point::d2(0.3, 0.09));
        assert!((v[1] - v[0] * v[0]).abs() < 1e-15);
        // the surrogate preserves each side
        for p in [Point::d2(0.7, 0.3), Point::d2(-0.9, -0.5), Point::d2(0.45, -0.1)] {
            let y = e.inner.evaluate(&p).unwrap();
            assert_eq!(e.component_of(&y), Component::Inner, "{p:?} -> {y:?}");
        }
        for p in [Point::d2(0.1, 0.9), Point::d2(-0.6, -0.5), Point::d2(0.5, 0.7)] {
            let y = e.outer.evaluate(&p).unwrap();
            assert_eq!(e.component_of(&y), Component::Outer, "{p:?} -> {y:?}");
        }
        assert_eq!(e.inner.branch_count(), 7);
        assert_eq!(e.outer.branch_count(), 10);
    }

    #[test]
    fn example4_region_volumes() {
        let e = example4(&ExampleSpec::example4(1)).unwrap();
        // adaptive quadrature of 2 min(x^2, sqrt(0.04 - x^2)) over [-0.2, 0.2]
        let v = e.inner.region.volume;
        assert!((v - 0.010_464_053).abs() < 1e-7, "{v}");
        let total = e.inner.region.volume + e.outer.region.volume;
        assert!(close(total, std::f64::consts::PI * 0.04, 1e-12));
    }

    #[test]
    fn neutral_1d_values() {
        let m = neutral_1d(&ExampleSpec::neutral1d(2.0)).unwrap();
        assert!(close(m.evaluate(&Point::d1(0.2)).unwrap()[0], 0.208, 1e-15));
        assert_eq!(m.evaluate(&Point::d1(0.0)).unwrap()[0], 0.0);
        assert!(close(m.jacobian_det(&Point::d1(0.2)).unwrap(), 1.12, 1e-15));
        assert!(close(m.evaluate(&Point::d1(0.75)).unwrap()[0], 0.5, 1e-15));
        assert!(matches!(
            m.branch_index(&Point::d1(0.5)),
            Err(AcimError::PointOnBoundary(_))
        ));
        let bad = ExampleSpec {
            r0: 0.8,
            region_radius: 0.25,
            ..ExampleSpec::neutral1d(2.0)
        };
        assert!(matches!(neutral_1d(&bad), Err(AcimError::BadSpec(_))));
    }

    #[test]
    fn example_id_json_forms() {
        let s: ExampleSpec = serde_json::from_str(
            r#"{"example_id": 1, "r0": 0.5, "region_radius": 0.2, "surrogate_expansion": 3.0, "gamma": 2.0}"#,
        )
        .unwrap();
        assert_eq!(s, ExampleSpec::new(ExampleId::One));
        let s: ExampleSpec = serde_json::from_str(r#"{"example_id": "neutral1d"}"#).unwrap();
        assert_eq!(s.example_id, ExampleId::Neutral1d);
        assert!(serde_json::from_str::<ExampleSpec>(r#"{"example_id": 7}"#).is_err());
        let back = serde_json::to_string(&ExampleSpec::neutral1d(0.5)).unwrap();
        assert!(back.contains("\"neutral1d\""));
    }
}
