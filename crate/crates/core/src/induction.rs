//! First-return map to M^ = M \ R and escape-time statistics of R.
//!
//! R sits inside the domain of branch 1, so an orbit inside R is iterated
//! with the branch-1 formula directly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AcimError, Result};
use crate::fit::{geometric_grid, loglog};
use crate::geometry::Point;
use crate::map_model::PiecewiseMap;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Escape {
    Exit(usize),
    Overflow,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnSample {
    pub start: Point,
    pub point: Point,
    pub return_time: usize,
    /// |det DT^{return_time}(start)|^{-1}
    pub weight: f64,
}

/// Smallest n >= 1 with T^n x outside R.
pub fn escape_time(map: &PiecewiseMap, x: &Point, n_max: usize) -> Result<Escape> {
    if !map.region.contains(x) || !map.in_domain(x) {
        return Err(AcimError::NotInRegion(x.as_slice().to_vec()));
    }
    let local = map.branch(1);
    let mut y = *x;
    for n in 1..=n_max {
        y = local.forward(&y);
        if !map.region.contains(&y) {
            return Ok(Escape::Exit(n));
        }
    }
    Ok(Escape::Overflow)
}

/// One step of the induced map from a point of M^.
pub fn first_return(map: &PiecewiseMap, x: &Point, n_max: usize) -> Result<ReturnSample> {
    if map.region.contains(x) {
        return Err(AcimError::OutOfDomain(x.as_slice().to_vec()));
    }
    let j = map.branch_index(x)?;
    let b = map.branch(j);
    let mut y = b.forward(x);
    let mut weight = 1.0 / b.jacobian_det(x).abs();
    let mut n = 1;
    let local = map.branch(1);
    while map.region.contains(&y) {
        if n >= n_max {
            return Err(AcimError::Overflow(n_max));
        }
        weight /= local.jacobian_det(&y).abs();
        y = local.forward(&y);
        n += 1;
    }
    Ok(ReturnSample {
        start: *x,
        point: y,
        return_time: n,
        weight,
    })
}

/// Escape-time histogram of R scaled to volumes.
///
/// `level_volumes[n-1]` estimates nu(R_n), the volume of points leaving R at
/// step n; `tail_volumes[n-1]` estimates nu(T_1^{-n} R), the volume still in
/// R after n steps, including the overflow residual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailProfile {
    pub n_max: usize,
    pub level_volumes: Vec<f64>,
    pub tail_volumes: Vec<f64>,
    pub level_stderr: Vec<f64>,
    pub tail_stderr: Vec<f64>,
    pub residual_volume: f64,
    pub region_volume: f64,
    pub sample_count: usize,
    pub rejected: usize,
    pub seed: u64,
}

impl TailProfile {
    /// Profile with prescribed tails (tail[n-1] for n = 1..), for tests and
    /// synthetic studies. Levels are the successive differences.
    pub fn from_tails(tails: Vec<f64>) -> Self {
        let n_max = tails.len();
        let head = tails.first().copied().unwrap_or(0.0);
        let region_volume = head * 2.0;
        let mut levels = Vec::with_capacity(n_max);
        let mut prev = region_volume;
        for t in &tails {
            levels.push(prev - t);
            prev = *t;
        }
        TailProfile {
            n_max,
            level_volumes: levels,
            level_stderr: vec![0.0; n_max],
            tail_stderr: vec![0.0; n_max],
            residual_volume: tails.last().copied().unwrap_or(0.0),
            tail_volumes: tails,
            region_volume,
            sample_count: 0,
            rejected: 0,
            seed: 0,
        }
    }

    pub fn tail(&self, n: usize) -> f64 {
        self.tail_volumes[n - 1]
    }

    pub fn level(&self, n: usize) -> f64 {
        self.level_volumes[n - 1]
    }

    /// Largest n whose tail estimate is still positive.
    pub fn last_positive(&self) -> usize {
        self.tail_volumes
            .iter()
            .rposition(|t| *t > 0.0)
            .map_or(0, |i| i + 1)
    }
}

const BLOCK: usize = 4096;

struct Histogram {
    counts: Vec<u64>,
    overflow: u64,
    rejected: u64,
}

/// Monte Carlo escape-time histogram over `n_samples` uniform points of R.
/// Start points within the boundary tolerance of R are redrawn and counted.
pub fn level_volumes(map: &PiecewiseMap, n_max: usize, n_samples: usize, seed: u64) -> TailProfile {
    let blocks = n_samples.div_ceil(BLOCK);
    let tol = map.tol.root_tol;
    let region = &map.region;
    let hist = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::stream(seed, rng::tags::ESCAPE, b as u64);
            let count = BLOCK.min(n_samples - b * BLOCK);
            let mut h = Histogram {
                counts: vec![0; n_max],
                overflow: 0,
                rejected: 0,
            };
            for _ in 0..count {
                let x = loop {
                    let x = rng::uniform_in_box(&mut r, &region.lo, &region.hi);
                    let d = region.signed_distance(&x);
                    if d < -tol {
                        break x;
                    }
                    if d <= tol {
                        h.rejected += 1;
                    }
                };
                match escape_time(map, &x, n_max) {
                    Ok(Escape::Exit(n)) => h.counts[n - 1] += 1,
                    _ => h.overflow += 1,
                }
            }
            h
        })
        .reduce(
            || Histogram {
                counts: vec![0; n_max],
                overflow: 0,
                rejected: 0,
            },
            |mut a, b| {
                for (x, y) in a.counts.iter_mut().zip(&b.counts) {
                    *x += y;
                }
                a.overflow += b.overflow;
                a.rejected += b.rejected;
                a
            },
        );
    let nf = n_samples as f64;
    let vol = region.volume;
    let binom_se = |c: u64| {
        let p = c as f64 / nf;
        vol * (p * (1.0 - p) / nf).sqrt()
    };
    let level_volumes: Vec<f64> = hist.counts.iter().map(|&c| vol * c as f64 / nf).collect();
    let level_stderr: Vec<f64> = hist.counts.iter().map(|&c| binom_se(c)).collect();
    let mut tail_counts = vec![0u64; n_max];
    let mut acc = hist.overflow;
    for n in (0..n_max).rev() {
        tail_counts[n] = acc;
        acc += hist.counts[n];
    }
    TailProfile {
        n_max,
        level_volumes,
        tail_volumes: tail_counts.iter().map(|&c| vol * c as f64 / nf).collect(),
        level_stderr,
        tail_stderr: tail_counts.iter().map(|&c| binom_se(c)).collect(),
        residual_volume: vol * hist.overflow as f64 / nf,
        region_volume: vol,
        sample_count: n_samples,
        rejected: hist.rejected as usize,
        seed,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub rho_hat: f64,
    /// Residual and sampling errors combined in quadrature.
    pub stderr: f64,
    /// Standard error from the regression residuals alone.
    pub fit_stderr: f64,
    /// Monte Carlo error of the tail estimates pushed through the fit.
    pub sampling_stderr: f64,
    pub window: (usize, usize),
    pub points: usize,
}

/// Tail exponent rho: tail_volume(n) ~ c n^{-rho}, fitted by least squares
/// on a geometric grid of n over `window`.
pub fn tail_exponent(profile: &TailProfile, window: (usize, usize)) -> Result<TailFit> {
    let (lo, hi) = window;
    if lo == 0 || hi <= lo || hi > profile.n_max {
        return Err(AcimError::EmptyWindow);
    }
    let ns = geometric_grid(lo, hi, 30);
    if ns.len() < 3 {
        return Err(AcimError::EmptyWindow);
    }
    let mut xs = Vec::with_capacity(ns.len());
    let mut ys = Vec::with_capacity(ns.len());
    let mut rel_se = Vec::with_capacity(ns.len());
    for &n in &ns {
        let t = profile.tail(n);
        if !(t > 0.0) {
            return Err(AcimError::NonPositiveTail(n));
        }
        xs.push(n as f64);
        ys.push(t);
        rel_se.push(profile.tail_stderr[n - 1] / t);
    }
    let f = loglog(&xs, &ys).ok_or(AcimError::EmptyWindow)?;
    // The slope is sum_i w_i log y_i. The tails are cumulative counts and
    // strongly correlated, so bound its spread by sum_i |w_i| se(log y_i),
    // which holds for any correlation.
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let mean = lx.iter().sum::<f64>() / lx.len() as f64;
    let sxx: f64 = lx.iter().map(|x| (x - mean).powi(2)).sum();
    let sampling_stderr: f64 = lx.iter().zip(&rel_se).map(|(x, s)| (x - mean).abs() / sxx * s).sum();
    Ok(TailFit {
        rho_hat: -f.slope,
        stderr: f.slope_stderr.hypot(sampling_stderr),
        fit_stderr: f.slope_stderr,
        sampling_stderr,
        window,
        points: ns.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::example_maps::{example1, neutral_1d, ExampleId, ExampleSpec};

    fn n1d() -> PiecewiseMap {
        neutral_1d(&ExampleSpec::neutral1d(2.0)).unwrap()
    }

    #[test]
    fn escape_time_of_neutral_orbit() {
        // 0.2 -> 0.208 -> 0.2170 -> 0.2272 -> 0.2389 -> 0.2526
        let m = n1d();
        assert_eq!(escape_time(&m, &Point::d1(0.2), 100).unwrap(), Escape::Exit(5));
        assert_eq!(escape_time(&m, &Point::d1(0.2499), 100).unwrap(), Escape::Exit(1));
        assert_eq!(escape_time(&m, &Point::d1(1e-300), 1000).unwrap(), Escape::Overflow);
        assert!(matches!(
            escape_time(&m, &Point::d1(0.3), 10),
            Err(AcimError::NotInRegion(_))
        ));
    }

    #[test]
    fn first_return_accumulates_weight() {
        let m = n1d();
        // a point of the affine branch with image 0.2 returns after 1 + 5 steps
        let x = Point::d1(0.5 + 0.2 * 0.5);
        let s = first_return(&m, &x, 1000).unwrap();
        assert_eq!(s.return_time, 6);
        let mut y = 0.2f64;
        let mut prod = 2.0;
        for _ in 0..5 {
            prod *= 1.0 + 3.0 * y * y;
            y *= 1.0 + y * y;
        }
        assert!((s.weight * prod - 1.0).abs() < 1e-12);
        assert!((s.point[0] - y).abs() < 1e-15);
        // no visit to R
        let s = first_return(&m, &Point::d1(0.9), 1000).unwrap();
        assert_eq!(s.return_time, 1);
        assert!((s.weight - 0.5).abs() < 1e-15);
    }

    #[test]
    fn synthetic_tails_recover_exponent() {
        let p = TailProfile::from_tails((1..=2000).map(|n| 3.0 / n as f64).collect());
        let f = tail_exponent(&p, (20, 200)).unwrap();
        assert!((f.rho_hat - 1.0).abs() < 1e-6);
        let p = TailProfile::from_tails((1..=2000).map(|n| 0.7 * (n as f64).powf(-1.5)).collect());
        let f = tail_exponent(&p, (20, 200)).unwrap();
        assert!((f.rho_hat - 1.5).abs() < 1e-6);
        assert!(matches!(tail_exponent(&p, (200, 20)), Err(AcimError::EmptyWindow)));
        let mut zero = p.clone();
        zero.tail_volumes[199] = 0.0;
        assert!(matches!(
            tail_exponent(&zero, (20, 200)),
            Err(AcimError::NonPositiveTail(200))
        ));
    }

    #[test]
    fn level_mass_adds_up_and_is_seeded() {
        let m = example1(&ExampleSpec::new(ExampleId::One)).unwrap();
        let p = level_volumes(&m, 2000, 20_000, 11);
        let total: f64 = p.level_volumes.iter().sum::<f64>() + p.residual_volume;
        assert!((total - p.region_volume).abs() < 1e-12);
        assert!(p.tail_volumes.windows(2).all(|w| w[1] <= w[0]));
        assert!((p.tail(1) + p.level(1) - p.region_volume).abs() < 1e-12);
        let q = level_volumes(&m, 2000, 20_000, 11);
        assert_eq!(p, q);
        let r = level_volumes(&m, 2000, 20_000, 12);
        assert_ne!(p.level_volumes, r.level_volumes);
    }
}
