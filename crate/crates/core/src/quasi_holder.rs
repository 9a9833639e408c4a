//! Oscillation fields, the quasi-Hölder seminorm and empirical
//! Lasota-Yorke coefficients for grid functions.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AcimError, Result};
use crate::geometry::unit_ball_volume;
use crate::rng;
use crate::transfer::{apply_pf, GridDensity, TransferMatrix, UlamPartition};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuasiHolderConfig {
    pub alpha: f64,
    pub eps0: f64,
    /// The ε grid is eps0 * 2^-k for k = 0..=k_max.
    pub k_max: usize,
    pub dim: usize,
}

impl QuasiHolderConfig {
    pub fn new(alpha: f64, eps0: f64, k_max: usize, dim: usize) -> Result<Self> {
        let c = QuasiHolderConfig {
            alpha,
            eps0,
            k_max,
            dim,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(AcimError::Config(format!("alpha must lie in (0,1), got {}", self.alpha)));
        }
        if !(self.eps0 > 0.0 && self.eps0.is_finite()) {
            return Err(AcimError::Config(format!("eps0 must be positive, got {}", self.eps0)));
        }
        if !(1..=3).contains(&self.dim) {
            return Err(AcimError::Config(format!("dimension {} unsupported", self.dim)));
        }
        Ok(())
    }

    /// Volume of the unit ball in the working dimension.
    pub fn unit_ball_volume(&self) -> f64 {
        unit_ball_volume(self.dim)
    }

    pub fn eps_grid(&self) -> Vec<f64> {
        (0..=self.k_max).map(|k| self.eps0 / (1u64 << k) as f64).collect()
    }

    /// The part of the ε grid a partition can resolve (at least two cell widths).
    pub fn admissible_eps(&self, p: &UlamPartition) -> Result<Vec<f64>> {
        let min = 2.0 * p.min_width();
        let grid: Vec<f64> = self
            .eps_grid()
            .into_iter()
            .filter(|e| *e >= min * (1.0 - 1e-12))
            .collect();
        if grid.is_empty() {
            Err(AcimError::EpsGridEmpty)
        } else {
            Ok(grid)
        }
    }
}

/// Sliding max and min over windows [i-h, i+h] of one line.
fn line_extrema(hi: &[f64], lo: &[f64], h: usize, out_hi: &mut [f64], out_lo: &mut [f64]) {
    let n = hi.len();
    let mut qmax: VecDeque<usize> = VecDeque::new();
    let mut qmin: VecDeque<usize> = VecDeque::new();
    let mut next = 0;
    for i in 0..n {
        let right = (i + h).min(n - 1);
        while next <= right {
            while qmax.back().is_some_and(|&b| hi[b] <= hi[next]) {
                qmax.pop_back();
            }
            qmax.push_back(next);
            while qmin.back().is_some_and(|&b| lo[b] >= lo[next]) {
                qmin.pop_back();
            }
            qmin.push_back(next);
            next += 1;
        }
        let left = i.saturating_sub(h);
        while qmax.front().is_some_and(|&f| f < left) {
            qmax.pop_front();
        }
        while qmin.front().is_some_and(|&f| f < left) {
            qmin.pop_front();
        }
        out_hi[i] = hi[qmax[0]];
        out_lo[i] = lo[qmin[0]];
    }
}

/// Ball stencil split into segments along axis 0: half-width in cells for
/// each offset along the remaining axes.
fn stencil(p: &UlamPartition, eps: f64) -> BTreeMap<usize, Vec<[isize; 2]>> {
    let m = p.dim();
    let w: Vec<f64> = (0..m).map(|a| p.width(a)).collect();
    let reach = |a: usize| -> isize {
        if a < m {
            (eps / w[a] * (1.0 + 1e-12)).floor() as isize
        } else {
            0
        }
    };
    let e2 = eps * eps * (1.0 + 1e-12);
    let mut by_h: BTreeMap<usize, Vec<[isize; 2]>> = BTreeMap::new();
    for d1 in -reach(1)..=reach(1) {
        for d2 in -reach(2)..=reach(2) {
            let mut used = 0.0;
            if m > 1 {
                used += (d1 as f64 * w[1]).powi(2);
            }
            if m > 2 {
                used += (d2 as f64 * w[2]).powi(2);
            }
            let rem = e2 - used;
            if rem < 0.0 {
                continue;
            }
            let h = (rem.sqrt() / w[0] * (1.0 + 1e-12)).floor() as usize;
            by_h.entry(h).or_default().push([d1, d2]);
        }
    }
    by_h
}

/// Per-cell max minus min of f over the supported cells whose centers lie
/// within ε of the cell center. Zero off the support.
pub fn oscillation(f: &GridDensity, eps: f64) -> Result<GridDensity> {
    let p = &f.partition;
    let min = 2.0 * p.min_width();
    if !(eps >= min * (1.0 - 1e-12)) {
        return Err(AcimError::EpsTooSmall { eps, min });
    }
    let n0 = p.resolution;
    let m = p.dim();
    let lines = p.cell_count() / n0;
    let hi_in: Vec<f64> = f
        .values
        .iter()
        .zip(f.support.iter())
        .map(|(v, s)| if *s { *v } else { f64::NEG_INFINITY })
        .collect();
    let lo_in: Vec<f64> = f
        .values
        .iter()
        .zip(f.support.iter())
        .map(|(v, s)| if *s { *v } else { f64::INFINITY })
        .collect();
    let mut out_hi = vec![f64::NEG_INFINITY; p.cell_count()];
    let mut out_lo = vec![f64::INFINITY; p.cell_count()];
    let mut s_hi = vec![0.0; p.cell_count()];
    let mut s_lo = vec![0.0; p.cell_count()];
    let res = n0 as isize;
    let line_coords = |l: usize| -> (isize, isize) { ((l % n0) as isize, (l / n0) as isize) };
    for (h, offsets) in stencil(p, eps) {
        s_hi.par_chunks_mut(n0)
            .zip(s_lo.par_chunks_mut(n0))
            .enumerate()
            .for_each(|(l, (sh, sl))| {
                let r = l * n0..(l + 1) * n0;
                line_extrema(&hi_in[r.clone()], &lo_in[r], h, sh, sl);
            });
        out_hi
            .par_chunks_mut(n0)
            .zip(out_lo.par_chunks_mut(n0))
            .enumerate()
            .for_each(|(l, (oh, ol))| {
                let (j, k) = line_coords(l);
                for o in &offsets {
                    let (jj, kk) = (j + o[0], k + o[1]);
                    let inside = |v: isize, used: bool| !used || (0..res).contains(&v);
                    if !inside(jj, m > 1) || !inside(kk, m > 2) {
                        continue;
                    }
                    let src = (kk as usize * n0 + jj as usize) * n0;
                    debug_assert!(src / n0 < lines);
                    for i in 0..n0 {
                        oh[i] = oh[i].max(s_hi[src + i]);
                        ol[i] = ol[i].min(s_lo[src + i]);
                    }
                }
            });
    }
    let values = (0..p.cell_count())
        .map(|c| if f.support[c] { out_hi[c] - out_lo[c] } else { 0.0 })
        .collect();
    Ok(GridDensity {
        partition: f.partition.clone(),
        values,
        support: f.support.clone(),
    })
}

/// max - min of f over an arbitrary set of cells.
pub fn oscillation_on(f: &GridDensity, cells: &[usize]) -> f64 {
    let (lo, hi) = cells
        .iter()
        .map(|c| f.values[*c])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if cells.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

/// (ε, ε^-α ∫ osc(f, B_ε)) over the admissible ε grid, largest ε first.
pub fn seminorm_profile(f: &GridDensity, config: &QuasiHolderConfig) -> Result<Vec<(f64, f64)>> {
    config
        .admissible_eps(&f.partition)?
        .into_iter()
        .map(|eps| {
            let osc = oscillation(f, eps)?;
            Ok((eps, eps.powf(-config.alpha) * osc.mass()))
        })
        .collect()
}

pub fn seminorm_alpha(f: &GridDensity, config: &QuasiHolderConfig) -> Result<f64> {
    Ok(seminorm_profile(f, config)?
        .into_iter()
        .map(|(_, v)| v)
        .fold(0.0, f64::max))
}

pub fn norm_alpha(f: &GridDensity, config: &QuasiHolderConfig) -> Result<f64> {
    Ok(f.l1_norm() + seminorm_alpha(f, config)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LYRow {
    pub f_id: String,
    pub f_alpha: f64,
    pub f_l1: f64,
    pub pf_alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LYReport {
    pub eta_hat: f64,
    #[serde(rename = "D_hat")]
    pub d_hat: f64,
    pub family: String,
    pub rows: Vec<LYRow>,
    /// Sampled (η, D(η)) pairs the choice was made from.
    pub frontier: Vec<(f64, f64)>,
}

impl LYReport {
    /// Geometric-series bound on sup_n |P^n f|_α.
    pub fn iterate_bound(&self, f_alpha: f64, f_l1: f64) -> Option<f64> {
        (self.eta_hat < 1.0).then(|| f_alpha + self.d_hat * f_l1 / (1.0 - self.eta_hat))
    }
}

/// Named grid functions used to probe the transfer operator.
#[derive(Clone, Debug)]
pub struct TestFamily {
    pub description: String,
    pub functions: Vec<(String, GridDensity)>,
}

/// Smoothed indicator of a random ball, on the active cells.
fn smoothed_indicator<R: Rng>(p: &Arc<UlamPartition>, r: &mut R) -> GridDensity {
    let m = p.dim();
    let mut c = [0.0; 3];
    let mut span = f64::INFINITY;
    for (a, slot) in c.iter_mut().enumerate().take(m) {
        *slot = p.lo[a] + (p.hi[a] - p.lo[a]) * r.random::<f64>();
        span = span.min(p.hi[a] - p.lo[a]);
    }
    let radius = span * r.random_range(0.05..0.3);
    let blur = span * r.random_range(0.01..0.05);
    GridDensity::on_active(p.clone(), |cell| {
        let x = p.center(cell);
        let d = (0..m).map(|a| (x[a] - c[a]).powi(2)).sum::<f64>().sqrt();
        ((radius - d) / blur + 0.5).clamp(0.0, 1.0)
    })
}

/// 1 + a cos(2π k·x + φ) on the active cells.
fn trig_profile<R: Rng>(p: &Arc<UlamPartition>, r: &mut R) -> GridDensity {
    let m = p.dim();
    let mut k = [0.0; 3];
    for slot in k.iter_mut().take(m) {
        *slot = r.random_range(0..=4) as f64;
    }
    let phase = r.random_range(0.0..std::f64::consts::TAU);
    let amp = r.random_range(0.2..0.9);
    GridDensity::on_active(p.clone(), |cell| {
        let x = p.center(cell);
        let mut arg = phase;
        for a in 0..m {
            let u = (x[a] - p.lo[a]) / (p.hi[a] - p.lo[a]);
            arg += std::f64::consts::TAU * k[a] * u;
        }
        1.0 + amp * arg.cos()
    })
}

/// `n_ind` smoothed ball indicators followed by `n_trig` trigonometric profiles.
pub fn test_family(p: &Arc<UlamPartition>, n_ind: usize, n_trig: usize, seed: u64) -> TestFamily {
    let mut functions = Vec::with_capacity(n_ind + n_trig);
    for i in 0..n_ind {
        let mut r = rng::stream(seed, rng::tags::TEST_FUNCTIONS, i as u64);
        functions.push((format!("ind{i}"), smoothed_indicator(p, &mut r)));
    }
    for i in 0..n_trig {
        let mut r = rng::stream(seed, rng::tags::TEST_FUNCTIONS, (n_ind + i) as u64);
        functions.push((format!("trig{i}"), trig_profile(p, &mut r)));
    }
    TestFamily {
        description: format!("{n_ind} smoothed ball indicators + {n_trig} trigonometric profiles, seed {seed}"),
        functions,
    }
}

pub fn default_test_family(p: &Arc<UlamPartition>, seed: u64) -> TestFamily {
    test_family(p, 64, 16, seed)
}

/// Fit (η, D) to the table rows |P f|_α ≤ η |f|_α + D ‖f‖₁. For each η on
/// a grid in [0, 1) the smallest admissible D is set by the binding row;
/// the reported pair minimizes D/(1-η), the coefficient of the iterate
/// bound.
pub fn ly_estimate(matrix: &TransferMatrix, family: &TestFamily, config: &QuasiHolderConfig) -> Result<LYReport> {
    if family.functions.is_empty() {
        return Err(AcimError::DegenerateFamily);
    }
    let rows = family
        .functions
        .iter()
        .map(|(id, f)| {
            let pf = apply_pf(matrix, f)?;
            Ok(LYRow {
                f_id: id.clone(),
                f_alpha: seminorm_alpha(f, config)?,
                f_l1: f.l1_norm(),
                pf_alpha: seminorm_alpha(&pf, config)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let flat = rows.iter().all(|r| r.f_alpha < 1e-12);
    if flat && rows.iter().any(|r| r.pf_alpha >= 1e-12) {
        return Err(AcimError::DegenerateFamily);
    }
    let d_at = |eta: f64| -> f64 {
        rows.iter()
            .filter(|r| r.f_l1 > 0.0)
            .map(|r| ((r.pf_alpha - eta * r.f_alpha) / r.f_l1).max(0.0))
            .fold(0.0, f64::max)
    };
    let frontier: Vec<(f64, f64)> = (0..100).map(|i| i as f64 / 100.0).map(|e| (e, d_at(e))).collect();
    let (eta_hat, d_hat) = if flat {
        (0.0, d_at(0.0))
    } else {
        frontier
            .iter()
            .copied()
            .min_by(|a, b| (a.1 / (1.0 - a.0)).total_cmp(&(b.1 / (1.0 - b.0))))
            .unwrap()
    };
    Ok(LYReport {
        eta_hat,
        d_hat,
        family: family.description.clone(),
        rows,
        frontier,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterateCheck {
    pub f_alpha: f64,
    pub f_l1: f64,
    /// |P^n f|_α for n = 1..=n_max.
    pub iterates: Vec<f64>,
    pub bound: Option<f64>,
    pub holds: bool,
}

/// Compare sup_{n ≤ n_max} |P^n f|_α with the geometric-series bound of a report.
pub fn iterate_check(
    matrix: &TransferMatrix,
    f: &GridDensity,
    report: &LYReport,
    config: &QuasiHolderConfig,
    n_max: usize,
) -> Result<IterateCheck> {
    let f_alpha = seminorm_alpha(f, config)?;
    let f_l1 = f.l1_norm();
    let mut g = f.clone();
    let mut iterates = Vec::with_capacity(n_max);
    for _ in 0..n_max {
        g = apply_pf(matrix, &g)?;
        iterates.push(seminorm_alpha(&g, config)?);
    }
    let bound = report.iterate_bound(f_alpha, f_l1);
    let sup = iterates.iter().copied().fold(0.0, f64::max);
    let holds = bound.is_some_and(|b| sup <= b + 1e-6);
    Ok(IterateCheck {
        f_alpha,
        f_l1,
        iterates,
        bound,
        holds,
    })
}
