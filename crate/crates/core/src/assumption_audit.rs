//! Sampled estimates of the expansion, boundary-overlap and distortion
//! constants of a piecewise map, and the resulting smallness condition
//! s^α + λ < 1.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AcimError, Result};
use crate::geometry::{unit_ball_volume, Point};
use crate::map_model::PiecewiseMap;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionAudit {
    pub s_hat: f64,
    /// Grid points attaining s_hat (up to 1e-12), with their coefficient.
    pub worst_points: Vec<(Point, f64)>,
    pub evaluated: usize,
    pub skipped_region: usize,
    pub skipped_outside: usize,
    /// Points where the probe could not be evaluated (too close to p or to a
    /// branch boundary).
    pub excluded: Vec<Point>,
}

/// Centers of a `grid`^m lattice over the bounding box of M.
fn lattice(map: &PiecewiseMap, grid: usize) -> Vec<Point> {
    let m = map.dim;
    let (lo, hi) = (map.domain.lo, map.domain.hi);
    (0..grid.pow(m as u32))
        .map(|mut c| {
            let mut x = Point::zeros(m);
            for a in 0..m {
                let i = c % grid;
                c /= grid;
                x[a] = lo[a] + (i as f64 + 0.5) * (hi[a] - lo[a]) / grid as f64;
            }
            x
        })
        .collect()
}

/// Maximum of the sampled contraction coefficient over a lattice covering
/// M \ R.
pub fn expansion_audit(
    map: &PiecewiseMap,
    grid: usize,
    probe_radius: f64,
    probe_samples: usize,
    seed: u64,
) -> Result<ExpansionAudit> {
    if grid < 32 {
        return Err(AcimError::Config(format!("audit grid needs at least 32 points per axis, got {grid}")));
    }
    let points = lattice(map, grid);
    let results: Vec<(Point, u8, f64)> = points
        .par_iter()
        .map(|x| {
            if !map.in_domain(x) {
                (*x, 1, 0.0)
            } else if map.region.contains(x) {
                (*x, 2, 0.0)
            } else {
                match map.contraction_coefficient(x, probe_radius, probe_samples, seed) {
                    Ok(s) => (*x, 0, s),
                    Err(_) => (*x, 3, 0.0),
                }
            }
        })
        .collect();
    let mut audit = ExpansionAudit {
        s_hat: 0.0,
        worst_points: Vec::new(),
        evaluated: 0,
        skipped_region: 0,
        skipped_outside: 0,
        excluded: Vec::new(),
    };
    for (x, kind, s) in &results {
        match kind {
            0 => {
                audit.evaluated += 1;
                audit.s_hat = audit.s_hat.max(*s);
            }
            1 => audit.skipped_outside += 1,
            2 => audit.skipped_region += 1,
            _ => audit.excluded.push(*x),
        }
    }
    audit.worst_points = results
        .iter()
        .filter(|(_, k, s)| *k == 0 && *s >= audit.s_hat - 1e-12)
        .map(|(x, _, s)| (*x, *s))
        .collect();
    Ok(audit)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapEstimate {
    pub eps: f64,
    pub eps0: f64,
    pub g_hat: f64,
    pub worst_center: Option<Point>,
    pub n_centers: usize,
    pub samples_per_center: usize,
}

/// Stratified centers over the bounding box of M, about `n` of them.
pub fn stratified_centers(map: &PiecewiseMap, n: usize, seed: u64) -> Vec<Point> {
    let m = map.dim;
    let k = ((n as f64).powf(1.0 / m as f64).round() as usize).max(1);
    let (lo, hi) = (map.domain.lo, map.domain.hi);
    (0..k.pow(m as u32))
        .map(|c| {
            let mut r = rng::stream(seed, rng::tags::AUDIT_CENTERS, c as u64);
            let mut idx = c;
            let mut x = Point::zeros(m);
            for a in 0..m {
                let i = idx % k;
                idx /= k;
                x[a] = lo[a] + (i as f64 + r.random::<f64>()) * (hi[a] - lo[a]) / k as f64;
            }
            x
        })
        .collect()
}

fn on_radius_grid(map: &PiecewiseMap, r: f64) -> bool {
    map.tol
        .audit_radius_grid
        .iter()
        .any(|g| (g - r).abs() <= 1e-12 * g.max(r))
}

/// Fraction of the ball B_{(1-s)ε0}(x) whose image under its own branch
/// lies within ε of the boundary of that branch's image, maximized over the
/// given centers. Boundary proximity is read off the image's signed
/// distance.
pub fn boundary_overlap_at(
    map: &PiecewiseMap,
    centers: &[Point],
    eps: f64,
    eps0: f64,
    s: f64,
    samples_per_center: usize,
    seed: u64,
) -> Result<OverlapEstimate> {
    if !(eps > 0.0 && eps <= eps0) {
        return Err(AcimError::BadRadii(format!("need 0 < eps <= eps0, got {eps}, {eps0}")));
    }
    if !(s > 0.0 && s < 1.0) {
        return Err(AcimError::BadRadii(format!("contraction s must lie in (0,1), got {s}")));
    }
    if samples_per_center == 0 {
        return Err(AcimError::Config("samples_per_center must be positive".into()));
    }
    let radius = (1.0 - s) * eps0;
    let counts: Vec<usize> = centers
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut r = rng::stream(seed, rng::tags::AUDIT_PAIRS, i as u64);
            let mut hits = 0;
            for _ in 0..samples_per_center {
                let z = rng::uniform_in_ball(&mut r, x, radius);
                if !map.in_domain(&z) {
                    continue;
                }
                let Ok(j) = map.branch_index(&z) else { continue };
                let b = map.branch(j);
                if b.image.signed_distance(&b.forward(&z)).abs() <= eps {
                    hits += 1;
                }
            }
            hits
        })
        .collect();
    // first center attaining the maximum, for a reproducible witness
    let best = counts
        .iter()
        .enumerate()
        .fold(None::<(usize, usize)>, |acc, (i, &c)| match acc {
            Some((_, bc)) if bc >= c => acc,
            _ => Some((i, c)),
        });
    Ok(OverlapEstimate {
        eps,
        eps0,
        g_hat: best.map_or(0.0, |(_, c)| c as f64 / samples_per_center as f64),
        worst_center: best.filter(|(_, c)| *c > 0).map(|(i, _)| centers[i]),
        n_centers: centers.len(),
        samples_per_center,
    })
}

/// Boundary overlap sampled at about `n_centers` stratified centers. Both
/// radii must come from the map's audit radius grid.
pub fn boundary_overlap(
    map: &PiecewiseMap,
    eps: f64,
    eps0: f64,
    s: f64,
    n_centers: usize,
    samples_per_center: usize,
    seed: u64,
) -> Result<OverlapEstimate> {
    if !on_radius_grid(map, eps) || !on_radius_grid(map, eps0) {
        return Err(AcimError::BadRadii(format!(
            "eps {eps} and eps0 {eps0} must both be on the audit radius grid {:?}",
            map.tol.audit_radius_grid
        )));
    }
    let centers = stratified_centers(map, n_centers, seed);
    boundary_overlap_at(map, &centers, eps, eps0, s, samples_per_center, seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaEstimate {
    pub lambda_hat: f64,
    /// 2 sup Ĝ(ε, ε0) (ε0/ε)^α over the table.
    pub overlap_term: f64,
    /// 3 s γ_{m-1} / ((1-s) γ_m).
    pub geometric_term: f64,
    pub condition_value: f64,
    /// λ̂ when the table is cut to ε0 ≤ ε2, for each ε2 in the table.
    pub by_eps2: Vec<(f64, f64)>,
}

pub fn lambda_estimate(dim: usize, table: &[OverlapEstimate], s_hat: f64, alpha: f64) -> Result<LambdaEstimate> {
    if table.is_empty() {
        return Err(AcimError::EmptyTable);
    }
    let geometric_term = 3.0 * s_hat * unit_ball_volume(dim - 1) / ((1.0 - s_hat) * unit_ball_volume(dim));
    let overlap = |rows: &mut dyn Iterator<Item = &OverlapEstimate>| -> f64 {
        rows.map(|r| 2.0 * r.g_hat * (r.eps0 / r.eps).powf(alpha))
            .fold(0.0, f64::max)
    };
    let overlap_term = overlap(&mut table.iter());
    let lambda_hat = overlap_term.max(geometric_term);
    let mut eps2: Vec<f64> = table.iter().map(|r| r.eps0).collect();
    eps2.sort_by(f64::total_cmp);
    eps2.dedup();
    let by_eps2 = eps2
        .into_iter()
        .map(|e2| (e2, overlap(&mut table.iter().filter(|r| r.eps0 <= e2)).max(geometric_term)))
        .collect();
    Ok(LambdaEstimate {
        lambda_hat,
        overlap_term,
        geometric_term,
        condition_value: s_hat.powf(alpha) + lambda_hat,
        by_eps2,
    })
}

/// Where distortion pairs are drawn from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairSampling {
    /// Restrict to one branch; all branches otherwise.
    pub branch: Option<usize>,
    /// Restrict base points to the ball of this radius around p.
    pub within_radius: Option<f64>,
    pub max_separation: f64,
}

impl Default for PairSampling {
    fn default() -> Self {
        PairSampling {
            branch: None,
            within_radius: None,
            max_separation: 0.05,
        }
    }
}

/// Unit directions used to pair each base point: ±1 in one dimension, 36
/// angles in the plane, normalized nonzero {-1, 0, 1}^3 vectors in space.
fn pair_directions(m: usize) -> Vec<Point> {
    match m {
        1 => vec![Point::d1(1.0), Point::d1(-1.0)],
        2 => (0..36)
            .map(|k| {
                let t = k as f64 * std::f64::consts::TAU / 36.0;
                Point::d2(t.cos(), t.sin())
            })
            .collect(),
        _ => (0..27)
            .filter(|&c| c != 13)
            .map(|c| {
                let v = Point::d3((c % 3) as f64 - 1.0, ((c / 3) % 3) as f64 - 1.0, (c / 9) as f64 - 1.0);
                v.scale(1.0 / v.norm())
            })
            .collect(),
    }
}

/// Largest |det DT_j^{-1}(x) - det DT_j^{-1}(y)| / (|det DT_j^{-1}(x)| d(x,y)^α)
/// over sampled pairs in a common image. Pairs are drawn as images x = T u,
/// y = T v of points of one branch: `n_pairs` random base points u, each
/// paired with v = u + max_separation * e along a fixed direction set.
pub fn distortion_holder_constant(
    map: &PiecewiseMap,
    n_pairs: usize,
    alpha: f64,
    sampling: &PairSampling,
    seed: u64,
) -> Result<f64> {
    let p = map.neutral_point;
    let (lo, hi) = match sampling.within_radius {
        Some(r) => (p.map_coords(|_, v| v - r), p.map_coords(|_, v| v + r)),
        None => (map.domain.lo, map.domain.hi),
    };
    let accept = |u: &Point| -> Option<usize> {
        if !map.in_domain(u) || sampling.within_radius.is_some_and(|r| u.dist(&p) >= r) {
            return None;
        }
        let j = map.branch_index(u).ok()?;
        sampling.branch.is_none_or(|b| b == j).then_some(j)
    };
    let dirs = pair_directions(map.dim);
    let worst = (0..n_pairs)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, rng::tags::AUDIT_PAIRS, (1u64 << 40) + i as u64);
            let (u, j) = loop {
                let u = rng::uniform_in_box(&mut r, &lo, &hi);
                if let Some(j) = accept(&u) {
                    break (u, j);
                }
            };
            let b = map.branch(j);
            let x = b.forward(&u);
            let gx = 1.0 / b.jacobian_det(&u).abs();
            dirs.iter()
                .filter_map(|e| {
                    let v = u + e.scale(sampling.max_separation);
                    (accept(&v) == Some(j)).then_some(v)
                })
                .map(|v| {
                    let d = x.dist(&b.forward(&v));
                    let gy = 1.0 / b.jacobian_det(&v).abs();
                    if d > 0.0 {
                        (gx - gy).abs() / (gx * d.powf(alpha))
                    } else {
                        0.0
                    }
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    pub grid: usize,
    pub probe_radius: f64,
    pub probe_samples: usize,
    /// Radii for the overlap table; the map's audit radius grid when empty.
    pub radii: Vec<f64>,
    pub n_centers: usize,
    pub samples_per_center: usize,
    pub alpha: f64,
    pub n_pairs: usize,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            grid: 32,
            probe_radius: 0.01,
            probe_samples: 64,
            radii: Vec::new(),
            n_centers: 1000,
            samples_per_center: 256,
            alpha: 0.5,
            n_pairs: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub map: String,
    pub s_hat: f64,
    pub expansion: ExpansionAudit,
    pub lambda_hat: f64,
    pub lambda: LambdaEstimate,
    pub g_table: Vec<OverlapEstimate>,
    pub c_hat: f64,
    pub condition_value: f64,
    /// condition_value < 1.
    pub verdict: bool,
    pub config: AuditConfig,
    pub seed: u64,
    /// Constants that quantify over all iterates or partitions and are not sampled.
    pub not_machine_checkable: Vec<String>,
}

pub fn run_audit(map: &PiecewiseMap, config: &AuditConfig, seed: u64) -> Result<AuditReport> {
    let expansion = expansion_audit(map, config.grid, config.probe_radius, config.probe_samples, seed)?;
    let s_hat = expansion.s_hat;
    let radii = if config.radii.is_empty() {
        map.tol.audit_radius_grid.clone()
    } else {
        config.radii.clone()
    };
    let mut g_table = Vec::new();
    if s_hat > 0.0 && s_hat < 1.0 {
        let centers = stratified_centers(map, config.n_centers, seed);
        for &eps0 in &radii {
            for &eps in radii.iter().filter(|e| **e <= eps0) {
                g_table.push(boundary_overlap_at(
                    map,
                    &centers,
                    eps,
                    eps0,
                    s_hat,
                    config.samples_per_center,
                    seed,
                )?);
            }
        }
    }
    let lambda = if g_table.is_empty() {
        // no admissible contraction: report an infinite λ rather than a table
        LambdaEstimate {
            lambda_hat: f64::INFINITY,
            overlap_term: f64::INFINITY,
            geometric_term: f64::INFINITY,
            condition_value: f64::INFINITY,
            by_eps2: Vec::new(),
        }
    } else {
        lambda_estimate(map.dim, &g_table, s_hat, config.alpha)?
    };
    let c_hat = distortion_holder_constant(map, config.n_pairs, config.alpha, &PairSampling::default(), seed)?;
    Ok(AuditReport {
        map: map.name.clone(),
        s_hat,
        expansion,
        lambda_hat: lambda.lambda_hat,
        condition_value: lambda.condition_value,
        verdict: lambda.condition_value < 1.0,
        lambda,
        g_table,
        c_hat,
        config: config.clone(),
        seed,
        not_machine_checkable: ["N_s", "N(eps)", "J", "b", "C_xi", "I"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::example_maps::{example1, fold_map, ExampleId, ExampleSpec};

    #[test]
    fn affine_expansion_is_a_third() {
        let m = fold_map(2, 3).unwrap();
        let a = expansion_audit(&m, 32, 0.01, 64, 1).unwrap();
        assert!((a.s_hat - 1.0 / 3.0).abs() < 0.01);
        assert!(matches!(expansion_audit(&m, 16, 0.01, 64, 1), Err(AcimError::Config(_))));
    }

    #[test]
    fn example1_expansion_is_weakest_next_to_the_region() {
        let m = example1(&ExampleSpec::new(ExampleId::One)).unwrap();
        let a = expansion_audit(&m, 32, 0.01, 64, 1).unwrap();
        assert!(a.s_hat < 1.0 && a.s_hat > 0.9);
        assert!(a.skipped_region > 0);
        // lattice spacing is 1/16, so the worst point is in the first ring outside R
        for (x, _) in &a.worst_points {
            assert!(x.norm() < 0.2 + 0.1, "{x:?}");
        }
    }

    #[test]
    fn hyperplane_overlap_matches_slab_volume() {
        // x2 folding of [-1, 1]: the only interior discontinuity is x = 0,
        // and both sides put a slab of width s ε around it
        let m = fold_map(1, 2).unwrap();
        let s = 0.5;
        let centers: Vec<Point> = (0..41).map(|i| Point::d1(-0.02 + i as f64 * 0.001)).collect();
        for (eps, eps0) in [(0.05, 0.1), (0.02, 0.1), (0.01, 0.05)] {
            let g = boundary_overlap_at(&m, &centers, eps, eps0, s, 20_000, 3).unwrap();
            let oracle = 2.0 * s * unit_ball_volume(0) * eps / ((1.0 - s) * unit_ball_volume(1) * eps0);
            assert!((g.g_hat / oracle - 1.0).abs() < 0.1, "{eps} {eps0}: {} vs {oracle}", g.g_hat);
        }
        // far from every discontinuity
        let quiet = boundary_overlap_at(&m, &[Point::d1(0.5)], 0.01, 0.1, s, 1000, 3).unwrap();
        assert_eq!(quiet.g_hat, 0.0);
        assert!(matches!(
            boundary_overlap(&m, 0.03, 0.1, s, 10, 10, 1),
            Err(AcimError::BadRadii(_))
        ));
        assert!(matches!(
            boundary_overlap(&m, 0.1, 0.05, s, 10, 10, 1),
            Err(AcimError::BadRadii(_))
        ));
    }

    #[test]
    fn overlap_grows_with_eps() {
        let m = example1(&ExampleSpec::new(ExampleId::One)).unwrap();
        let mut last = 0.0;
        for eps in [0.005, 0.01, 0.02, 0.05, 0.1] {
            let g = boundary_overlap(&m, eps, 0.1, 0.5, 100, 128, 9).unwrap();
            assert!(g.g_hat >= last);
            last = g.g_hat;
        }
        assert!(last > 0.0);
    }

    #[test]
    fn lambda_arithmetic() {
        let row = |g: f64| OverlapEstimate {
            eps: 0.01,
            eps0: 0.1,
            g_hat: g,
            worst_center: None,
            n_centers: 1,
            samples_per_center: 1,
        };
        let l = lambda_estimate(2, &[row(0.0)], 1.0 / 3.0, 0.5).unwrap();
        let oracle = 3.0 * (1.0 / 3.0) * 2.0 / ((2.0 / 3.0) * std::f64::consts::PI);
        assert!((l.lambda_hat - oracle).abs() < 1e-12);
        assert!((l.lambda_hat - 0.955).abs() < 5e-4);
        assert_eq!(l.overlap_term, 0.0);
        let big = lambda_estimate(2, &[row(0.3)], 1.0 / 3.0, 0.5).unwrap();
        assert!((big.overlap_term - 2.0 * 0.3 * 10f64.sqrt()).abs() < 1e-12);
        assert_eq!(lambda_estimate(2, &[], 0.3, 0.5), Err(AcimError::EmptyTable));
        let lo = lambda_estimate(2, &[row(0.0)], 0.1, 0.5).unwrap();
        let hi = lambda_estimate(2, &[row(0.0)], 0.9, 0.5).unwrap();
        assert!(lo.condition_value < 1.0 && hi.condition_value > 1.0);
    }

    #[test]
    fn holder_constant() {
        let affine = fold_map(2, 3).unwrap();
        let c = distortion_holder_constant(&affine, 1000, 0.5, &PairSampling::default(), 2).unwrap();
        assert_eq!(c, 0.0);
        let m = example1(&ExampleSpec::new(ExampleId::One)).unwrap();
        let local = PairSampling {
            branch: Some(1),
            within_radius: Some(0.3),
            max_separation: 0.05,
        };
        let c1 = distortion_holder_constant(&m, 1000, 0.5, &local, 2).unwrap();
        let c2 = distortion_holder_constant(&m, 2000, 0.5, &local, 2).unwrap();
        assert!(c1 > 0.0 && c1.is_finite());
        assert!((c2 - c1).abs() < 0.1 * c1, "{c1} {c2}");
        // pair distances are below 1, so d^α shrinks as α grows
        let c_low = distortion_holder_constant(&m, 1000, 0.25, &local, 2).unwrap();
        let c_high = distortion_holder_constant(&m, 1000, 0.75, &local, 2).unwrap();
        assert!(c_low <= c1 && c1 <= c_high);
    }

    #[test]
    fn audit_is_reproducible() {
        let m = example1(&ExampleSpec::new(ExampleId::One)).unwrap();
        let cfg = AuditConfig {
            n_centers: 64,
            samples_per_center: 32,
            n_pairs: 200,
            ..AuditConfig::default()
        };
        let a = run_audit(&m, &cfg, 5).unwrap();
        let b = run_audit(&m, &cfg, 5).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(a.s_hat < 1.0 && a.lambda_hat.is_finite());
        assert_eq!(a.verdict, a.condition_value < 1.0);
    }
}
