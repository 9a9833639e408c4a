//! Orbit laws near the neutral point: backward-orbit radii, determinant and
//! norm decay of the inverse branch, distortion along pairs of orbits and
//! pointwise cone inequalities.

use serde::{Deserialize, Serialize};

use crate::error::{AcimError, Result};
use crate::fit::{ols, LineFit};
use crate::geometry::{Mat, Point};
use crate::map_model::PiecewiseMap;

/// Minimum orbit length for any exponent fit.
pub const MIN_FIT_LENGTH: usize = 1000;

/// x_i = T_j^{-i} x for i = 0..=n with per-step derivative data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackwardOrbit {
    pub branch: usize,
    pub points: Vec<Point>,
    /// |x_i - p|.
    pub radii: Vec<f64>,
    /// |det DT(x_i)| for i = 1..=n, stored at i - 1.
    pub step_det: Vec<f64>,
    /// ||DT(x_i)^{-1}|| for i = 1..=n, stored at i - 1.
    pub step_inv_norm: Vec<f64>,
    /// log |det DT^{-i}(x)| for i = 0..=n.
    pub log_det_inv: Vec<f64>,
    /// log ||DT^{-i}(x)|| for i = 0..=n.
    pub log_norm_inv: Vec<f64>,
}

impl BackwardOrbit {
    pub fn len(&self) -> usize {
        self.points.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn base(&self) -> Point {
        self.points[0]
    }
}

pub fn backward_orbit(map: &PiecewiseMap, x: &Point, n: usize) -> Result<BackwardOrbit> {
    backward_orbit_on(map, 1, x, n)
}

/// Backward orbit through branch `j`. The composite inverse Jacobian is
/// carried as a normalized matrix times a log scale so long contracting
/// orbits do not underflow.
pub fn backward_orbit_on(map: &PiecewiseMap, j: usize, x: &Point, n: usize) -> Result<BackwardOrbit> {
    let b = map.branch(j);
    let p = map.neutral_point;
    let mut points = Vec::with_capacity(n + 1);
    points.push(*x);
    let mut step_det = Vec::with_capacity(n);
    let mut step_inv_norm = Vec::with_capacity(n);
    let mut log_det_inv = vec![0.0];
    let mut log_norm_inv = vec![0.0];
    let mut composite = Mat::identity(x.dim());
    let mut log_scale = 0.0;
    let mut cur = *x;
    for _ in 0..n {
        let next = map.local_inverse(j, &cur, None)?;
        let d = b.jacobian_det(&next).abs();
        let inv = b
            .jacobian(&next)
            .inverse()
            .ok_or_else(|| AcimError::InverseFailure {
                cell: points.len(),
                reason: "singular Jacobian on the backward orbit".into(),
            })?;
        step_det.push(d);
        step_inv_norm.push(inv.operator_norm());
        log_det_inv.push(log_det_inv.last().unwrap() - d.ln());
        composite = inv * composite;
        let s = composite.max_abs();
        composite = composite.scale(1.0 / s);
        log_scale += s.ln();
        log_norm_inv.push(log_scale + composite.operator_norm().ln());
        points.push(next);
        cur = next;
    }
    let radii = points.iter().map(|q| q.dist(&p)).collect();
    Ok(BackwardOrbit {
        branch: j,
        points,
        radii,
        step_det,
        step_inv_norm,
        log_det_inv,
        log_norm_inv,
    })
}

/// Default fit window: the final decade of the orbit.
pub fn final_decade(n: usize) -> (usize, usize) {
    (n / 10, n)
}

fn checked_window(len: usize, window: Option<(usize, usize)>) -> Result<(usize, usize)> {
    if len < MIN_FIT_LENGTH {
        return Err(AcimError::OrbitTooShort {
            len,
            min: MIN_FIT_LENGTH,
        });
    }
    let (lo, hi) = window.unwrap_or_else(|| final_decade(len));
    if lo == 0 || hi > len || hi <= lo {
        return Err(AcimError::EmptyWindow);
    }
    Ok((lo, hi))
}

/// Least squares of `ys[n]` against log n over n in the window.
fn fit_against_log_n(ys: &[f64], window: (usize, usize)) -> Result<LineFit> {
    let (lo, hi) = window;
    let xs: Vec<f64> = (lo..=hi).map(|n| (n as f64).ln()).collect();
    ols(&xs, &ys[lo..=hi]).ok_or(AcimError::EmptyWindow)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub stderr: f64,
    pub window: (usize, usize),
}

impl ExponentFit {
    fn from_line(f: LineFit, window: (usize, usize)) -> Self {
        ExponentFit {
            slope: f.slope,
            stderr: f.slope_stderr,
            window,
        }
    }
}

/// Germ parameters of t_{n-1} = t_n + C t_n^{1+γ}, with C' the coefficient
/// of the per-step determinant defect 1 - C' t^γ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticParams {
    pub gamma: f64,
    pub c: f64,
    pub c_prime: f64,
}

impl AsymptoticParams {
    pub fn new(gamma: f64, c: f64, c_prime: f64) -> Result<Self> {
        if !(gamma > 0.0 && c > 0.0) {
            return Err(AcimError::BadSpec(format!("need gamma > 0 and C > 0, got {gamma}, {c}")));
        }
        Ok(AsymptoticParams { gamma, c, c_prime })
    }

    pub fn beta(&self) -> f64 {
        1.0 / self.gamma
    }

    /// Prefactor of t_n ~ coeff * n^-β.
    pub fn radius_coefficient(&self) -> f64 {
        (self.gamma * self.c).powf(-self.beta())
    }

    pub fn product_exponent(&self) -> f64 {
        -self.c_prime / (self.gamma * self.c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusFit {
    pub beta_hat: f64,
    pub coeff_hat: f64,
    pub stderr: f64,
    pub window: (usize, usize),
    /// (γC)^-β when germ parameters were supplied.
    pub expected_coeff: Option<f64>,
}

/// Fit log |x_n - p| = log c - β log n.
pub fn radius_exponent(
    orbit: &BackwardOrbit,
    params: Option<&AsymptoticParams>,
    window: Option<(usize, usize)>,
) -> Result<RadiusFit> {
    let w = checked_window(orbit.len(), window)?;
    let logs: Vec<f64> = orbit.radii.iter().map(|r| r.ln()).collect();
    let f = fit_against_log_n(&logs, w)?;
    Ok(RadiusFit {
        beta_hat: -f.slope,
        coeff_hat: f.intercept.exp(),
        stderr: f.slope_stderr,
        window: w,
        expected_coeff: params.map(|p| p.radius_coefficient()),
    })
}

/// Slope of log |det DT^{-n}| against log n.
pub fn det_product_exponent(orbit: &BackwardOrbit, window: Option<(usize, usize)>) -> Result<ExponentFit> {
    let w = checked_window(orbit.len(), window)?;
    Ok(ExponentFit::from_line(fit_against_log_n(&orbit.log_det_inv, w)?, w))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormDecay {
    pub slope: f64,
    pub stderr: f64,
    pub window: (usize, usize),
    /// Per-step rate of the competing exponential fit log||.|| ~ a + r n.
    pub exponential_rate: f64,
    /// The power law fits better than the exponential.
    pub power_law: bool,
}

fn rss(xs: &[f64], ys: &[f64], f: &LineFit) -> f64 {
    xs.iter()
        .zip(ys)
        .map(|(x, y)| (y - f.intercept - f.slope * x).powi(2))
        .sum()
}

/// Slope of log ||DT^{-n}|| against log n, with a flag telling whether a
/// power law describes the decay better than an exponential.
pub fn norm_decay_check(orbit: &BackwardOrbit, window: Option<(usize, usize)>) -> Result<NormDecay> {
    let w = checked_window(orbit.len(), window)?;
    let ys = &orbit.log_norm_inv[w.0..=w.1];
    let log_n: Vec<f64> = (w.0..=w.1).map(|n| (n as f64).ln()).collect();
    let lin_n: Vec<f64> = (w.0..=w.1).map(|n| n as f64).collect();
    let pow = ols(&log_n, ys).ok_or(AcimError::EmptyWindow)?;
    let exp = ols(&lin_n, ys).ok_or(AcimError::EmptyWindow)?;
    Ok(NormDecay {
        slope: pow.slope,
        stderr: pow.slope_stderr,
        window: w,
        exponential_rate: exp.slope,
        power_law: rss(&log_n, ys, &pow) < rss(&lin_n, ys, &exp),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionCurve {
    /// log(|det DT^{-n}(z2)| / |det DT^{-n}(z1)|) for n = 0..=n_max.
    pub log_ratio: Vec<f64>,
    pub fit: Option<ExponentFit>,
}

impl DistortionCurve {
    pub fn ratio(&self, n: usize) -> f64 {
        self.log_ratio[n].exp()
    }
}

/// Determinant ratio of the inverse branch along the backward orbits of z1
/// and z2. The log-log slope is fitted when the orbits are long enough.
pub fn distortion_ratio_curve(map: &PiecewiseMap, z1: &Point, z2: &Point, n_max: usize) -> Result<DistortionCurve> {
    let o1 = backward_orbit(map, z1, n_max)?;
    let o2 = backward_orbit(map, z2, n_max)?;
    Ok(distortion_from_orbits(&o1, &o2))
}

pub fn distortion_from_orbits(o1: &BackwardOrbit, o2: &BackwardOrbit) -> DistortionCurve {
    let log_ratio: Vec<f64> = o2
        .log_det_inv
        .iter()
        .zip(&o1.log_det_inv)
        .map(|(b, a)| b - a)
        .collect();
    let n = log_ratio.len() - 1;
    let fit = checked_window(n, None)
        .ok()
        .and_then(|w| fit_against_log_n(&log_ratio, w).ok().map(|f| ExponentFit::from_line(f, w)));
    DistortionCurve { log_ratio, fit }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeReport {
    pub len_v: f64,
    pub len_vp: f64,
    /// Area distortion of DT on span(v, v') relative to the product of the
    /// length distortions; equals sin∠(Av, Av') / sin∠(v, v').
    pub det_ratio: f64,
}

fn parallelogram_area(a: &Point, b: &Point) -> f64 {
    (a.norm_sq() * b.norm_sq() - a.dot(b).powi(2)).max(0.0).sqrt()
}

pub fn cone_check(map: &PiecewiseMap, z: &Point, v: &Point, v_prime: &Point) -> Result<ConeReport> {
    let (nv, nvp) = (v.norm(), v_prime.norm());
    let area = parallelogram_area(v, v_prime);
    if !(area > 1e-12 * nv * nvp) {
        return Err(AcimError::DegenerateVectors);
    }
    let a = map.jacobian(z)?;
    let (av, avp) = (a.mul_vec(v), a.mul_vec(v_prime));
    let (len_v, len_vp) = (av.norm(), avp.norm());
    let det_ratio = parallelogram_area(&av, &avp) * nv * nvp / (area * len_v * len_vp);
    Ok(ConeReport {
        len_v,
        len_vp,
        det_ratio,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GermReport {
    /// d(x_i, y_i)^{1-θ} ≤ D1 |x_i - p| at every step i = 1..=n.
    pub admissible: bool,
    pub first_violation: Option<usize>,
    /// max_i |log(|det DT^{-i}(x)| / |det DT^{-i}(y)|)|.
    pub max_log_ratio: f64,
    /// max_log_ratio / d(x, y)^θ, the smallest J' explaining this pair.
    pub normalized: f64,
    /// normalized / J' for a calibrated J'.
    pub against_calibration: Option<f64>,
}

pub fn germ_check(
    map: &PiecewiseMap,
    x: &Point,
    y: &Point,
    n: usize,
    theta: f64,
    d1: f64,
    j_prime: Option<f64>,
) -> Result<GermReport> {
    let ox = backward_orbit(map, x, n)?;
    let oy = backward_orbit(map, y, n)?;
    let first_violation = (1..=n).find(|&i| {
        let d = ox.points[i].dist(&oy.points[i]);
        d.powf(1.0 - theta) > d1 * ox.radii[i]
    });
    let max_log_ratio = ox
        .log_det_inv
        .iter()
        .zip(&oy.log_det_inv)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let d = x.dist(y);
    let normalized = if d > 0.0 { max_log_ratio / d.powf(theta) } else { 0.0 };
    Ok(GermReport {
        admissible: first_violation.is_none(),
        first_violation,
        max_log_ratio,
        normalized,
        against_calibration: j_prime.map(|j| normalized / j),
    })
}

/// Empirical J': the largest normalized log ratio over a calibration set of pairs.
pub fn calibrate_j_prime(map: &PiecewiseMap, pairs: &[(Point, Point)], n: usize, theta: f64) -> Result<f64> {
    let mut best: f64 = 0.0;
    for (x, y) in pairs {
        best = best.max(germ_check(map, x, y, n, theta, f64::INFINITY, None)?.normalized);
    }
    Ok(best)
}

/// Inverse of the germ t -> t + C t^{1+γ} on t ≥ 0, by Newton's method from
/// above (the germ is convex, so the iterates decrease monotonically).
pub fn germ_inverse(params: &AsymptoticParams, y: f64) -> f64 {
    let (g, c) = (params.gamma, params.c);
    let mut s = y;
    for _ in 0..100 {
        let f = s + c * s.powf(1.0 + g) - y;
        let df = 1.0 + c * (1.0 + g) * s.powf(g);
        let next = s - f / df;
        if !(next < s) || next <= 0.0 {
            break;
        }
        s = next;
    }
    s
}

/// t_0 = t0 and t_{i-1} = t_i + C t_i^{1+γ}, for i up to n.
pub fn germ_orbit(params: &AsymptoticParams, t0: f64, n: usize) -> Vec<f64> {
    let mut ts = Vec::with_capacity(n + 1);
    ts.push(t0);
    for i in 0..n {
        ts.push(germ_inverse(params, ts[i]));
    }
    ts
}

/// (γCn)^{1/γ} t_n, which tends to 1.
pub fn germ_radius_ratio(params: &AsymptoticParams, ts: &[f64], n: usize) -> f64 {
    (params.gamma * params.c * n as f64).powf(params.beta()) * ts[n]
}

/// Slope of log prod_{i ≤ n} (1 - C' t_i^γ) against log n.
pub fn germ_product_exponent(params: &AsymptoticParams, ts: &[f64], window: Option<(usize, usize)>) -> Result<ExponentFit> {
    let n = ts.len() - 1;
    let w = checked_window(n, window)?;
    let mut logs = Vec::with_capacity(n + 1);
    logs.push(0.0);
    for t in &ts[1..] {
        let factor = 1.0 - params.c_prime * t.powf(params.gamma);
        if !(factor > 0.0) {
            return Err(AcimError::BadSpec(format!(
                "C' t^gamma >= 1 on the orbit (t = {t}); start closer to 0"
            )));
        }
        logs.push(logs.last().unwrap() + factor.ln());
    }
    Ok(ExponentFit::from_line(fit_against_log_n(&logs, w)?, w))
}

/// One checked claim: fitted value against an expectation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClaimCheck {
    pub claim: String,
    pub fitted: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl ClaimCheck {
    /// |fitted - expected| ≤ tolerance.
    pub fn within(claim: impl Into<String>, fitted: f64, expected: f64, tolerance: f64) -> Self {
        ClaimCheck {
            claim: claim.into(),
            fitted,
            expected,
            tolerance,
            pass: (fitted - expected).abs() <= tolerance,
        }
    }

    /// fitted ≥ expected - tolerance.
    pub fn at_least(claim: impl Into<String>, fitted: f64, expected: f64, tolerance: f64) -> Self {
        ClaimCheck {
            claim: claim.into(),
            fitted,
            expected,
            tolerance,
            pass: fitted >= expected - tolerance,
        }
    }

    /// fitted ≤ expected + tolerance.
    pub fn at_most(claim: impl Into<String>, fitted: f64, expected: f64, tolerance: f64) -> Self {
        ClaimCheck {
            claim: claim.into(),
            fitted,
            expected,
            tolerance,
            pass: fitted <= expected + tolerance,
        }
    }
}

/// The orbit laws of the planar germ (x a, y a^2), a = 1 + |z|^2, along
/// both invariant axes. `map` must carry that germ as branch 1. Fits use
/// `window`, or the final decade when it is `None`.
pub fn axis_claims(
    map: &PiecewiseMap,
    n: usize,
    start: f64,
    window: Option<(usize, usize)>,
) -> Result<Vec<ClaimCheck>> {
    let ox = backward_orbit(map, &Point::d2(start, 0.0), n)?;
    let oy = backward_orbit(map, &Point::d2(0.0, start), n)?;
    let rx = ox.radii[n];
    let ry = oy.radii[n];
    let dx = det_product_exponent(&ox, window)?;
    let dy = det_product_exponent(&oy, window)?;
    let norm = norm_decay_check(&ox, window)?;
    let dist = distortion_from_orbits(&ox, &oy);
    let slope = dist.fit.map(|f| f.slope).unwrap_or(f64::NAN);
    Ok(vec![
        ClaimCheck::within("x-axis radius: 2n|x_n|^2", 2.0 * n as f64 * rx * rx, 1.0, 0.05),
        ClaimCheck::within("y-axis radius: 4n|x_n|^2", 4.0 * n as f64 * ry * ry, 1.0, 0.05),
        ClaimCheck::within("x-axis determinant exponent", dx.slope, -2.5, 0.1),
        ClaimCheck::within("y-axis determinant exponent", dy.slope, -1.75, 0.1),
        ClaimCheck::at_most("x-axis inverse norm exponent", norm.slope, -0.5, 0.05),
        ClaimCheck::within("axis distortion exponent", slope, 0.75, 0.1),
    ])
}

/// Orbit laws of the one-dimensional germ t(1 + t^γ) on branch 1:
/// (γn)^{1/γ} t_n → 1 and |det DT^{-n}| ~ n^{-(1+γ)/γ}.
pub fn neutral_claims(
    map: &PiecewiseMap,
    gamma: f64,
    n: usize,
    start: f64,
    window: Option<(usize, usize)>,
) -> Result<Vec<ClaimCheck>> {
    // T t = t + t^{1+γ}, T' t = 1 + (1+γ) t^γ
    let params = AsymptoticParams::new(gamma, 1.0, 1.0 + gamma)?;
    let o = backward_orbit(map, &Point::d1(start), n)?;
    let radius = radius_exponent(&o, Some(&params), window)?;
    let det = det_product_exponent(&o, window)?;
    let expected = params.product_exponent();
    Ok(vec![
        ClaimCheck::within(
            "radius: (gamma n)^(1/gamma) t_n",
            germ_radius_ratio(&params, &o.radii, n),
            1.0,
            0.03,
        ),
        ClaimCheck::within("radius exponent", radius.beta_hat, params.beta(), 0.05 * params.beta()),
        ClaimCheck::within("determinant exponent", det.slope, expected, 0.05 * expected.abs()),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::example_maps::{example1, fold_map, neutral_1d, ExampleId, ExampleSpec};
    use crate::map_model::bisect;

    fn ex1() -> PiecewiseMap {
        example1(&ExampleSpec::new(ExampleId::One)).unwrap()
    }

    #[test]
    fn short_orbits() {
        let m = ex1();
        let o = backward_orbit(&m, &Point::d2(0.2, 0.0), 3).unwrap();
        assert!(o.radii.windows(2).all(|w| w[1] < w[0]));
        for i in 1..=3 {
            let back = m.evaluate(&o.points[i]).unwrap();
            assert!(back.dist(&o.points[i - 1]) <= 10.0 * m.tol.root_tol);
        }
        let n1 = neutral_1d(&ExampleSpec::neutral1d(2.0)).unwrap();
        let o = backward_orbit(&n1, &Point::d1(0.2), 1).unwrap();
        let oracle = bisect(|t| t * (1.0 + t * t) - 0.2, 0.0, 0.2, 1e-15).unwrap();
        assert!((o.points[1][0] - oracle).abs() < 1e-14);
        assert!((oracle - 0.192_829_930_962_913).abs() < 1e-14);
        assert!(matches!(
            radius_exponent(&o, None, None),
            Err(AcimError::OrbitTooShort { len: 1, .. })
        ));
    }

    #[test]
    fn neutral_radius_exponent() {
        let n1 = neutral_1d(&ExampleSpec::neutral1d(2.0)).unwrap();
        let o = backward_orbit(&n1, &Point::d1(0.2), 10_000).unwrap();
        let p = AsymptoticParams::new(2.0, 1.0, 0.0).unwrap();
        let f = radius_exponent(&o, Some(&p), None).unwrap();
        assert!((f.beta_hat - 0.5).abs() < 0.015, "{}", f.beta_hat);
        assert!((f.coeff_hat / f.expected_coeff.unwrap() - 1.0).abs() < 0.05);
    }

    #[test]
    fn norm_decay_flags_exponential_contraction() {
        let m = fold_map(1, 3).unwrap();
        let o = backward_orbit_on(&m, 2, &Point::d1(0.3), 2000).unwrap();
        let d = norm_decay_check(&o, None).unwrap();
        assert!(!d.power_law);
        assert!((d.exponential_rate + 3f64.ln()).abs() < 1e-9);
        // composite norm never exceeds the product of step norms
        let mut acc = 0.0;
        for i in 0..o.len() {
            acc += o.step_inv_norm[i].ln();
            assert!(o.log_norm_inv[i + 1] <= acc + 1e-9);
        }
    }

    #[test]
    fn distortion_identities() {
        let m = ex1();
        let z = Point::d2(0.2, 0.0);
        let c = distortion_ratio_curve(&m, &z, &z, 50).unwrap();
        assert!(c.log_ratio.iter().all(|v| *v == 0.0));
        // splitting the orbit multiplies the ratios
        let z2 = Point::d2(0.0, 0.2);
        let full = distortion_ratio_curve(&m, &z, &z2, 300).unwrap();
        let head = distortion_ratio_curve(&m, &z, &z2, 100).unwrap();
        let o1 = backward_orbit(&m, &z, 100).unwrap();
        let o2 = backward_orbit(&m, &z2, 100).unwrap();
        let tail = distortion_ratio_curve(&m, &o1.points[100], &o2.points[100], 200).unwrap();
        let lhs = full.ratio(300);
        let rhs = head.ratio(100) * tail.ratio(200);
        assert!((lhs / rhs - 1.0).abs() < 1e-9);
    }

    #[test]
    fn one_dimensional_distortion_stays_bounded() {
        let n1 = neutral_1d(&ExampleSpec::neutral1d(2.0)).unwrap();
        let c = distortion_ratio_curve(&n1, &Point::d1(0.2), &Point::d1(0.15), 4000).unwrap();
        // scipy brentq oracle for the same products
        for (n, v) in [(1000, 0.824_147_127_965), (2000, 0.831_578_658_493), (4000, 0.835_339_470_442)] {
            assert!((c.log_ratio[n] - v).abs() < 1e-8, "{n}: {}", c.log_ratio[n]);
        }
        // the increments shrink like 1/n, so the ratio has a finite limit
        let d1 = c.log_ratio[2000] - c.log_ratio[1000];
        let d2 = c.log_ratio[4000] - c.log_ratio[2000];
        assert!(d2 > 0.0 && d2 < 0.6 * d1);
    }

    #[test]
    fn cone_examples() {
        let m = ex1();
        let r = cone_check(&m, &Point::d2(0.1, 0.0), &Point::d2(0.1, 0.0), &Point::d2(0.0, -0.1)).unwrap();
        assert!((r.len_v - 0.103).abs() < 1e-15);
        assert!((r.len_vp - 0.10201).abs() < 1e-15);
        assert!(r.len_v > r.len_vp);
        assert!(r.det_ratio <= 1.0 + 1e-12);
        let v0 = Point::d2(1.0, 0.0);
        let mixed = Point::d2(3.0, 2.0);
        let s = cone_check(&m, &Point::d2(0.1, 0.0), &v0, &mixed).unwrap();
        assert!(s.det_ratio < 1.0);
        let at_p = cone_check(&m, &Point::d2(0.0, 0.0), &v0, &mixed).unwrap();
        assert!((at_p.det_ratio - 1.0).abs() < 1e-15);
        assert_eq!(
            cone_check(&m, &Point::d2(0.1, 0.0), &v0, &v0.scale(2.0)),
            Err(AcimError::DegenerateVectors)
        );
    }

    #[test]
    fn germ_check_examples() {
        let m = ex1();
        let x = Point::d2(0.2, 0.0);
        let same = germ_check(&m, &x, &x, 100, 0.5, 1.0, None).unwrap();
        assert!(same.admissible && same.max_log_ratio == 0.0);
        let y = Point::d2(0.2001, 0.0);
        let a = germ_check(&m, &x, &y, 500, 0.5, 1.0, None).unwrap();
        let b = germ_check(&m, &x, &y, 1000, 0.5, 1.0, None).unwrap();
        assert!(a.admissible && b.admissible);
        assert!(b.max_log_ratio.is_finite());
        assert!((b.max_log_ratio - a.max_log_ratio).abs() < 0.05 * a.max_log_ratio);
        let far = germ_check(&m, &x, &Point::d2(0.0, 0.2), 10, 0.5, 1.0, None).unwrap();
        assert_eq!(far.first_violation, Some(1));
    }

    #[test]
    fn germ_inverse_solves_the_recursion() {
        let p = AsymptoticParams::new(1.5, 0.7, 1.0).unwrap();
        for y in [1e-6, 0.01, 0.3] {
            let s = germ_inverse(&p, y);
            assert!((s + 0.7 * s.powf(2.5) - y).abs() < 1e-15);
        }
        let ts = germ_orbit(&p, 0.1, 5);
        assert!(ts.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn synthetic_product_exponent() {
        let p = AsymptoticParams::new(2.0, 1.0, 5.0).unwrap();
        let ts = germ_orbit(&p, 0.1, 10_000);
        let f = germ_product_exponent(&p, &ts, None).unwrap();
        assert!((f.slope + 2.5).abs() < 0.05, "{}", f.slope);
        assert!((germ_radius_ratio(&p, &ts, 10_000) - 1.0).abs() < 0.03);
    }
}
