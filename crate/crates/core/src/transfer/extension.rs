//! Pull the induced density back into R.
//!
//! For x in R with T x = y, invariance of h under the full transfer operator
//! gives h(x) = |det DT(x)| (h(y) - sum over other branches j of
//! h(z_j) / |det DT(z_j)|) with z_j = T_j^{-1} y. Unwinding this along the
//! forward orbit of x until it leaves R expresses h(x) through the induced
//! density alone.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AcimError, Result};
use crate::fit::loglog;
use crate::geometry::Point;
use crate::map_model::PiecewiseMap;

use super::density::GridDensity;
use super::partition::CellKind;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtensionReport {
    pub n_levels: usize,
    /// R-cells whose center needs more than `n_levels` steps to leave R.
    pub unresolved_cells: Vec<usize>,
    /// Escape level of each resolved R-cell center, as (cell, level).
    pub levels: Vec<(usize, usize)>,
    /// Mass removed by clamping negative values to zero.
    pub clamped_mass: f64,
    pub clamped_cells: usize,
    /// Mass of h on the level sets 1..=n, cumulative, index n-1.
    pub partial_mass: Vec<f64>,
}

const MAX_NESTING: usize = 4;

struct Extender<'a> {
    map: &'a PiecewiseMap,
    hat: &'a GridDensity,
    n_levels: usize,
}

impl Extender<'_> {
    /// Induced density at a point of M^, averaging active neighbours when
    /// the containing cell is not a row of the chain.
    fn hat_value(&self, x: &Point) -> f64 {
        let p = &self.hat.partition;
        if let Some(c) = p.locate(x) {
            if p.is_active(c) {
                return self.hat.values[c];
            }
            let idx = p.multi_index(c);
            let m = p.dim();
            let (mut sum, mut count) = (0.0, 0usize);
            for bits in 0..3usize.pow(m as u32) {
                let mut nb = [0usize; 3];
                let mut ok = true;
                let mut b = bits;
                for a in 0..m {
                    let off = (b % 3) as isize - 1;
                    b /= 3;
                    let v = idx[a] as isize + off;
                    if v < 0 || v >= p.resolution as isize {
                        ok = false;
                        break;
                    }
                    nb[a] = v as usize;
                }
                if ok {
                    let nc = p.flat_index(&nb[..m]);
                    if p.is_active(nc) {
                        sum += self.hat.values[nc];
                        count += 1;
                    }
                }
            }
            if count > 0 {
                return sum / count as f64;
            }
        }
        0.0
    }

    fn value(&self, x: &Point, depth: usize) -> std::result::Result<Option<(f64, usize)>, String> {
        if !self.map.region.contains(x) {
            return Ok(Some((self.hat_value(x), 0)));
        }
        if depth > MAX_NESTING {
            return Err("nested preimages inside R".into());
        }
        let local = self.map.branch(1);
        let mut orbit = vec![*x];
        loop {
            let y = local.forward(orbit.last().unwrap());
            orbit.push(y);
            if !self.map.region.contains(&y) {
                break;
            }
            if orbit.len() > self.n_levels {
                return Ok(None);
            }
        }
        let level = orbit.len() - 1;
        let mut v = self.hat_value(orbit.last().unwrap());
        for k in (0..level).rev() {
            let y = orbit[k + 1];
            let mut other = 0.0;
            for b in &self.map.branches[1..] {
                if !b.image.contains(&y) {
                    continue;
                }
                let z = match self.map.local_inverse(b.index, &y, None) {
                    Ok(z) => z,
                    Err(AcimError::OutOfDomain(_)) => continue,
                    Err(e) => return Err(e.to_string()),
                };
                let hz = match self.value(&z, depth + 1)? {
                    Some((h, _)) => h,
                    None => return Ok(None),
                };
                other += hz / b.jacobian_det(&z).abs();
            }
            v = local.jacobian_det(&orbit[k]).abs() * (v - other);
        }
        Ok(Some((v, level)))
    }
}

/// Extend the induced density to the R-cells of its partition, evaluating
/// the pullback recursion at cell centers. Cells of M^ keep their values.
pub fn extend_density(
    map: &PiecewiseMap,
    density_hat: &GridDensity,
    n_levels: usize,
) -> Result<(GridDensity, ExtensionReport)> {
    let p = density_hat.partition.clone();
    let ext = Extender {
        map,
        hat: density_hat,
        n_levels,
    };
    let region_cells: Vec<usize> = (0..p.cell_count())
        .filter(|&c| p.kinds[c] == CellKind::Region)
        .collect();
    let results: Vec<_> = region_cells
        .par_iter()
        .map(|&c| (c, ext.value(&p.center(c), 0)))
        .collect();

    let mut values = density_hat.values.clone();
    let mut support: Vec<bool> = density_hat.support.to_vec();
    let mut unresolved = Vec::new();
    let mut levels = Vec::new();
    let mut clamped_mass = 0.0;
    let mut clamped_cells = 0;
    let vol = p.cell_volume();
    let mut level_mass = vec![0.0; n_levels];
    for (c, r) in results {
        match r {
            Err(reason) => return Err(AcimError::InverseFailure { cell: c, reason }),
            Ok(None) => {
                unresolved.push(c);
                values[c] = 0.0;
            }
            Ok(Some((v, level))) => {
                let v = if v < 0.0 {
                    clamped_mass += -v * vol;
                    clamped_cells += 1;
                    0.0
                } else {
                    v
                };
                values[c] = v;
                support[c] = true;
                levels.push((c, level));
                if level >= 1 && level <= n_levels {
                    level_mass[level - 1] += v * vol;
                }
            }
        }
    }
    let mut acc = 0.0;
    let partial_mass = level_mass
        .iter()
        .map(|m| {
            acc += m;
            acc
        })
        .collect();
    Ok((
        GridDensity {
            partition: p,
            values,
            support: Arc::new(support),
        },
        ExtensionReport {
            n_levels,
            unresolved_cells: unresolved,
            levels,
            clamped_mass,
            clamped_cells,
            partial_mass,
        },
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowupFit {
    pub slope: f64,
    pub stderr: f64,
    /// Distance range to the neutral point used in the fit.
    pub range: (f64, f64),
    pub cells: usize,
}

/// Log-log slope of h against the distance to the neutral point over the
/// decade starting at the closest resolved R-cell. The cell touching the
/// neutral point is skipped, since its center value samples a singularity.
pub fn blowup_slope(map: &PiecewiseMap, h: &GridDensity, report: &ExtensionReport) -> Result<BlowupFit> {
    let p = &h.partition;
    let half_diag = 0.5 * (0..p.dim()).map(|a| p.width(a).powi(2)).sum::<f64>().sqrt();
    let resolved: Vec<(f64, f64)> = report
        .levels
        .iter()
        .map(|&(c, _)| (p.center(c).dist(&map.neutral_point), h.values[c]))
        .filter(|&(d, v)| d > half_diag * 1.0001 && v > 0.0)
        .collect();
    let d_min = resolved
        .iter()
        .map(|r| r.0)
        .fold(f64::INFINITY, f64::min);
    if !d_min.is_finite() {
        return Err(AcimError::InsufficientFit("no resolved cells in R".into()));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = resolved
        .into_iter()
        .filter(|&(d, _)| d <= 10.0 * d_min * (1.0 + 1e-12))
        .unzip();
    let f = loglog(&xs, &ys).ok_or_else(|| AcimError::InsufficientFit("fewer than two cells".into()))?;
    Ok(BlowupFit {
        slope: f.slope,
        stderr: f.slope_stderr,
        range: (d_min, 10.0 * d_min),
        cells: xs.len(),
    })
}
