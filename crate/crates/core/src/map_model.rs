//! Piecewise-smooth maps with a neutral fixed point.
//!
//! A [`PiecewiseMap`] is a list of [`Branch`]es over a study domain `M`.
//! Each branch knows its open domain, its image, its forward map and
//! Jacobian, and how to invert itself. Branch indices are 1-based and
//! branch 1 always carries the neutral point.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AcimError, Result};
use crate::geometry::{Mat, Point, Shape};
use crate::rng;

pub type PointFn = Arc<dyn Fn(&Point) -> Point + Send + Sync>;
pub type MatFn = Arc<dyn Fn(&Point) -> Mat + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;
pub type ExplicitInverseFn = Arc<dyn Fn(&Point) -> Option<Point> + Send + Sync>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToleranceConfig {
    pub root_tol: f64,
    /// Probe radii, decreasing.
    pub audit_radius_grid: Vec<f64>,
    pub n_max_orbit: usize,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        ToleranceConfig {
            root_tol: 1e-14,
            audit_radius_grid: vec![0.1, 0.05, 0.02, 0.01, 0.005],
            n_max_orbit: 100_000,
        }
    }
}

impl ToleranceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.root_tol > 0.0 && self.root_tol <= 1e-6) {
            return Err(AcimError::Config(format!(
                "root_tol must lie in (0, 1e-6], got {}",
                self.root_tol
            )));
        }
        if self.audit_radius_grid.iter().any(|r| !(*r > 0.0)) {
            return Err(AcimError::Config("audit radii must be positive".into()));
        }
        if self.audit_radius_grid.windows(2).any(|w| w[1] >= w[0]) {
            return Err(AcimError::Config("audit radii must be decreasing".into()));
        }
        Ok(())
    }

    pub fn max_audit_radius(&self) -> f64 {
        self.audit_radius_grid.first().copied().unwrap_or(f64::INFINITY)
    }
}

/// Scalar reduction of a radially monotone inverse: the preimage of `y` is
/// `reconstruct(y, s*)` where `s*` is the root of `residual(y, ·)`.
#[derive(Clone)]
pub struct ScalarProfile {
    residual: Arc<ProfileFn<f64>>,
    reconstruct: Arc<ProfileFn<Point>>,
    bracket: Arc<BracketFn>,
}

type ProfileFn<T> = dyn Fn(&Point, f64) -> T + Send + Sync;
type BracketFn = dyn Fn(&Point) -> (f64, f64) + Send + Sync;

impl ScalarProfile {
    pub fn new(
        residual: impl Fn(&Point, f64) -> f64 + Send + Sync + 'static,
        reconstruct: impl Fn(&Point, f64) -> Point + Send + Sync + 'static,
        bracket: impl Fn(&Point) -> (f64, f64) + Send + Sync + 'static,
    ) -> Self {
        ScalarProfile {
            residual: Arc::new(residual),
            reconstruct: Arc::new(reconstruct),
            bracket: Arc::new(bracket),
        }
    }

    pub fn default_bracket(&self, y: &Point) -> (f64, f64) {
        (self.bracket)(y)
    }

    pub fn solve(&self, y: &Point, bracket: (f64, f64), root_tol: f64) -> Result<Point> {
        let s = bisect(|s| (self.residual)(y, s), bracket.0, bracket.1, root_tol)?;
        Ok((self.reconstruct)(y, s))
    }
}

#[derive(Clone)]
pub enum BranchInverse {
    Scalar(ScalarProfile),
    /// Closed form; `None` when the point has no preimage in the branch.
    Explicit(ExplicitInverseFn),
}

/// Bisection on a monotone scalar function, relative tolerance `rel_tol`,
/// at most 200 halvings.
pub fn bisect(f: impl Fn(f64) -> f64, lo: f64, hi: f64, rel_tol: f64) -> Result<f64> {
    let (mut lo, mut hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let (flo, fhi) = (f(lo), f(hi));
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if !(flo.signum() != fhi.signum()) || !flo.is_finite() || !fhi.is_finite() {
        return Err(AcimError::NoRoot { lo, hi });
    }
    const PROBES: usize = 16;
    let increasing = fhi > flo;
    let mut prev = flo;
    for k in 1..=PROBES {
        let v = f(lo + (hi - lo) * k as f64 / PROBES as f64);
        if (increasing && v < prev) || (!increasing && v > prev) {
            return Err(AcimError::NotMonotone { lo, hi });
        }
        prev = v;
    }
    let lo_negative = flo < 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= rel_tol * hi.abs().max(lo.abs()) {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Clone)]
pub struct Branch {
    pub index: usize,
    pub label: String,
    pub domain: Shape,
    pub image: Shape,
    forward: PointFn,
    jacobian: MatFn,
    det: Option<ScalarFn>,
    inverse: BranchInverse,
}

impl fmt::Debug for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Branch")
            .field("index", &self.index)
            .field("label", &self.label)
            .field("domain", &self.domain)
            .finish()
    }
}

impl Branch {
    pub fn new(
        label: impl Into<String>,
        domain: Shape,
        image: Shape,
        forward: impl Fn(&Point) -> Point + Send + Sync + 'static,
        jacobian: impl Fn(&Point) -> Mat + Send + Sync + 'static,
        inverse: BranchInverse,
    ) -> Self {
        Branch {
            index: 0,
            label: label.into(),
            domain,
            image,
            forward: Arc::new(forward),
            jacobian: Arc::new(jacobian),
            det: None,
            inverse,
        }
    }

    /// Closed-form determinant; defaults to the determinant of the Jacobian.
    pub fn with_det(mut self, det: impl Fn(&Point) -> f64 + Send + Sync + 'static) -> Self {
        self.det = Some(Arc::new(det));
        self
    }

    pub fn contains(&self, x: &Point) -> bool {
        self.domain.contains(x)
    }

    pub fn forward(&self, x: &Point) -> Point {
        (self.forward)(x)
    }

    pub fn jacobian(&self, x: &Point) -> Mat {
        (self.jacobian)(x)
    }

    pub fn jacobian_det(&self, x: &Point) -> f64 {
        match &self.det {
            Some(d) => d(x),
            None => (self.jacobian)(x).det(),
        }
    }

    pub fn inverse(&self) -> &BranchInverse {
        &self.inverse
    }
}

#[derive(Clone, Debug)]
pub struct Region {
    pub shape: Shape,
    pub lo: Point,
    pub hi: Point,
    pub volume: f64,
    pub label: String,
}

impl Region {
    pub fn contains(&self, x: &Point) -> bool {
        self.shape.contains(x)
    }

    pub fn signed_distance(&self, x: &Point) -> f64 {
        self.shape.signed_distance(x)
    }
}

/// Study domain `M`: a closed set given by a shape (points with signed
/// distance up to the tolerance count as inside), its bounding box and volume.
#[derive(Clone, Debug)]
pub struct StudyDomain {
    pub shape: Shape,
    pub lo: Point,
    pub hi: Point,
    pub volume: f64,
}

#[derive(Clone, Debug)]
pub struct PiecewiseMap {
    pub name: String,
    pub dim: usize,
    pub domain: StudyDomain,
    pub branches: Vec<Branch>,
    pub neutral_point: Point,
    pub region: Region,
    pub local_radius: f64,
    pub tol: ToleranceConfig,
    r_preimage_count: usize,
}

impl PiecewiseMap {
    pub fn new(
        name: impl Into<String>,
        domain: StudyDomain,
        mut branches: Vec<Branch>,
        neutral_point: Point,
        region: Region,
        local_radius: f64,
        tol: ToleranceConfig,
    ) -> Result<Self> {
        if branches.is_empty() {
            return Err(AcimError::BadSpec("a map needs at least one branch".into()));
        }
        let dim = neutral_point.dim();
        for (i, b) in branches.iter_mut().enumerate() {
            b.index = i + 1;
        }
        let mut map = PiecewiseMap {
            name: name.into(),
            dim,
            domain,
            branches,
            neutral_point,
            region,
            local_radius,
            tol,
            r_preimage_count: 0,
        };
        map.r_preimage_count = map.count_branches_meeting_region();
        Ok(map)
    }

    /// Branches whose image meets R, detected on a probe lattice over R's box.
    fn count_branches_meeting_region(&self) -> usize {
        const PER_AXIS: usize = 17;
        let m = self.dim;
        let total = PER_AXIS.pow(m as u32);
        let probes: Vec<Point> = (0..total)
            .map(|mut k| {
                let mut x = Point::zeros(m);
                for i in 0..m {
                    let t = (k % PER_AXIS) as f64 / (PER_AXIS - 1) as f64;
                    k /= PER_AXIS;
                    x[i] = self.region.lo[i] + t * (self.region.hi[i] - self.region.lo[i]);
                }
                x
            })
            .filter(|x| self.region.contains(x))
            .collect();
        self.branches
            .iter()
            .filter(|b| probes.iter().any(|x| b.image.contains(x)))
            .count()
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    /// K': number of branches whose image meets R.
    pub fn r_preimage_count(&self) -> usize {
        self.r_preimage_count
    }

    /// Branch by 1-based index.
    pub fn branch(&self, j: usize) -> &Branch {
        &self.branches[j - 1]
    }

    pub fn in_domain(&self, x: &Point) -> bool {
        x.dim() == self.dim && self.domain.shape.signed_distance(x) <= self.tol.root_tol
    }

    pub fn branch_index(&self, x: &Point) -> Result<usize> {
        if !self.in_domain(x) || !x.is_finite() {
            return Err(AcimError::OutOfDomain(x.as_slice().to_vec()));
        }
        let tol = self.tol.root_tol;
        let mut near_boundary = false;
        for b in &self.branches {
            let d = b.domain.signed_distance(x);
            if d < -tol {
                return Ok(b.index);
            }
            if d <= tol {
                near_boundary = true;
            }
        }
        if near_boundary {
            Err(AcimError::PointOnBoundary(x.as_slice().to_vec()))
        } else {
            Err(AcimError::OutOfDomain(x.as_slice().to_vec()))
        }
    }

    pub fn evaluate(&self, x: &Point) -> Result<Point> {
        let j = self.branch_index(x)?;
        Ok(self.branch(j).forward(x))
    }

    pub fn jacobian(&self, x: &Point) -> Result<Mat> {
        let j = self.branch_index(x)?;
        Ok(self.branch(j).jacobian(x))
    }

    pub fn jacobian_det(&self, x: &Point) -> Result<f64> {
        let j = self.branch_index(x)?;
        Ok(self.branch(j).jacobian_det(x))
    }

    /// Preimage of `y` under branch `j`. `bracket` overrides the default
    /// radial bracket for scalar-profile inverses.
    pub fn local_inverse(&self, j: usize, y: &Point, bracket: Option<(f64, f64)>) -> Result<Point> {
        if j == 0 || j > self.branches.len() {
            return Err(AcimError::BadSpec(format!("no branch {j}")));
        }
        let b = self.branch(j);
        if *y == self.neutral_point && j == 1 {
            return Ok(*y);
        }
        let x = match b.inverse() {
            BranchInverse::Scalar(profile) => {
                let br = bracket.unwrap_or_else(|| profile.default_bracket(y));
                profile.solve(y, br, self.tol.root_tol)?
            }
            BranchInverse::Explicit(f) => {
                f(y).ok_or_else(|| AcimError::OutOfDomain(y.as_slice().to_vec()))?
            }
        };
        if !b.contains(&x) {
            return Err(AcimError::OutOfDomain(y.as_slice().to_vec()));
        }
        Ok(x)
    }

    /// Monte Carlo estimate of s(x,T): the largest ratio d(x,y)/d(Tx,Ty) over
    /// `n_samples` points y of the same branch in a ball around x. The radius
    /// is capped at a tenth of the distance to the neutral point. Sampling
    /// can only miss the worst direction, so this underestimates s(x).
    pub fn contraction_coefficient(
        &self,
        x: &Point,
        probe_radius: f64,
        n_samples: usize,
        seed: u64,
    ) -> Result<f64> {
        let dp = x.dist(&self.neutral_point);
        if dp < 10.0 * self.tol.root_tol {
            return Err(AcimError::DegenerateProbe);
        }
        let j = self.branch_index(x)?;
        let b = self.branch(j);
        let tx = b.forward(x);
        let radius = probe_radius.min(0.1 * dp);
        let key = x
            .as_slice()
            .iter()
            .fold(0u64, |h, v| h.rotate_left(17) ^ v.to_bits());
        let mut r = rng::stream(seed, rng::tags::PROBE, key);
        let mut best: f64 = 0.0;
        for _ in 0..n_samples {
            let y = rng::uniform_in_ball(&mut r, x, radius);
            if !b.contains(&y) {
                continue;
            }
            let d_img = b.forward(&y).dist(&tx);
            if d_img > 0.0 {
                best = best.max(x.dist(&y) / d_img);
            }
        }
        Ok(best)
    }

    /// Relative error between the closed-form determinant and the
    /// determinant of the Jacobian matrix, maximized over the given points.
    pub fn det_consistency(&self, points: &[Point]) -> f64 {
        points
            .par_iter()
            .filter_map(|x| {
                let j = self.branch_index(x).ok()?;
                let b = self.branch(j);
                let a = b.jacobian_det(x);
                let m = b.jacobian(x).det();
                Some((a - m).abs() / m.abs().max(1e-300))
            })
            .reduce(|| 0.0, f64::max)
    }
}

/// Centered finite-difference Jacobian of a single branch.
pub fn finite_difference_jacobian(b: &Branch, x: &Point, h: f64) -> Mat {
    let m = x.dim();
    let mut jac = Mat::zeros(m);
    for j in 0..m {
        let mut xp = *x;
        let mut xm = *x;
        xp[j] += h;
        xm[j] -= h;
        let (fp, fm) = (b.forward(&xp), b.forward(&xm));
        for i in 0..m {
            jac.set(i, j, (fp[i] - fm[i]) / (2.0 * h));
        }
    }
    jac
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_cubic_root() {
        let r = bisect(|t| t * (1.0 + t * t) - 0.101, 0.0, 0.101, 1e-14).unwrap();
        assert!((r - 0.1).abs() < 1e-14);
    }

    #[test]
    fn bisect_reports_missing_sign_change() {
        assert!(matches!(
            bisect(|t| t * t + 1.0, -1.0, 1.0, 1e-14),
            Err(AcimError::NoRoot { .. })
        ));
    }

    #[test]
    fn bisect_rejects_non_monotone_profile() {
        // sign change, but with a bump in between
        let f = |t: f64| (t - 0.9) + 2.0 * (-(t - 0.3).powi(2) / 0.001).exp();
        assert!(matches!(
            bisect(f, 0.0, 1.0, 1e-14),
            Err(AcimError::NotMonotone { .. })
        ));
    }

    #[test]
    fn tolerance_validation() {
        assert!(ToleranceConfig::default().validate().is_ok());
        let t = ToleranceConfig { root_tol: 1e-3, ..Default::default() };
        assert!(t.validate().is_err());
        let t = ToleranceConfig { audit_radius_grid: vec![0.01, 0.1], ..Default::default() };
        assert!(t.validate().is_err());
    }
}
