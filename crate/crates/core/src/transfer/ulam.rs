use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AcimError, Result};
use crate::induction::first_return;
use crate::map_model::PiecewiseMap;
use crate::rng;

use super::partition::UlamPartition;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UlamOptions {
    pub samples_per_cell: usize,
    pub seed: u64,
    /// Random offset inside each stratum; off places samples at stratum centers.
    pub jitter: bool,
    pub n_max: usize,
}

impl UlamOptions {
    pub fn new(samples_per_cell: usize, seed: u64) -> Self {
        UlamOptions {
            samples_per_cell,
            seed,
            jitter: true,
            n_max: 100_000,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectCounts {
    pub outside_domain: usize,
    pub in_region: usize,
    pub on_boundary: usize,
    pub overflow: usize,
    /// Return point fell in a cell that is not a row of the matrix.
    pub inactive_target: usize,
}

impl RejectCounts {
    fn add(&mut self, o: &RejectCounts) {
        self.outside_domain += o.outside_domain;
        self.in_region += o.in_region;
        self.on_boundary += o.on_boundary;
        self.overflow += o.overflow;
        self.inactive_target += o.inactive_target;
    }

    pub fn total(&self) -> usize {
        self.outside_domain + self.in_region + self.on_boundary + self.overflow + self.inactive_target
    }
}

/// Row-stochastic Ulam matrix of the induced map over the active cells,
/// stored as compressed rows.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferMatrix {
    pub partition: Arc<UlamPartition>,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
    pub samples_per_cell: usize,
    pub seed: u64,
    pub jitter: bool,
    /// Rows replaced by the uniform distribution because too few samples survived.
    pub starved: Vec<usize>,
    pub rejects: RejectCounts,
    pub straddle_rows: usize,
}

impl TransferMatrix {
    pub fn n(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    /// Build from dense rows; for tests and small hand-made chains.
    pub fn from_dense(partition: Arc<UlamPartition>, rows: &[Vec<f64>]) -> Self {
        let mut row_ptr = vec![0];
        let (mut cols, mut vals) = (Vec::new(), Vec::new());
        for r in rows {
            for (j, v) in r.iter().enumerate() {
                if *v != 0.0 {
                    cols.push(j);
                    vals.push(*v);
                }
            }
            row_ptr.push(cols.len());
        }
        TransferMatrix {
            partition,
            row_ptr,
            cols,
            vals,
            samples_per_cell: 0,
            seed: 0,
            jitter: false,
            starved: Vec::new(),
            rejects: RejectCounts::default(),
            straddle_rows: 0,
        }
    }

    pub fn max_row_sum_error(&self) -> f64 {
        (0..self.n())
            .map(|i| (self.row(i).map(|(_, v)| v).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_entry(&self) -> f64 {
        self.vals.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Column-major copy, for parallel gathers of v P.
    pub fn transpose(&self) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
        let n = self.n();
        let mut counts = vec![0usize; n + 1];
        for &c in &self.cols {
            counts[c + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut rows = vec![0usize; self.cols.len()];
        let mut vals = vec![0.0; self.cols.len()];
        for i in 0..n {
            for (j, v) in self.row(i) {
                rows[fill[j]] = i;
                vals[fill[j]] = v;
                fill[j] += 1;
            }
        }
        (counts, rows, vals)
    }

    /// v P for a row vector over active cells.
    pub fn left_multiply(&self, v: &[f64], t: &(Vec<usize>, Vec<usize>, Vec<f64>)) -> Vec<f64> {
        let (ptr, rows, vals) = t;
        (0..self.n())
            .into_par_iter()
            .map(|j| (ptr[j]..ptr[j + 1]).map(|k| v[rows[k]] * vals[k]).sum())
            .collect()
    }
}

/// Ulam discretization of the induced transfer operator: each active cell
/// is sampled on a stratified sub-grid and every sample is pushed through
/// the first-return map.
pub fn build_transfer(
    map: &PiecewiseMap,
    partition: Arc<UlamPartition>,
    opts: &UlamOptions,
) -> Result<TransferMatrix> {
    if opts.samples_per_cell < 16 {
        return Err(AcimError::Config(format!(
            "samples_per_cell must be at least 16, got {}",
            opts.samples_per_cell
        )));
    }
    let m = partition.dim();
    let k = (opts.samples_per_cell as f64).powf(1.0 / m as f64).ceil() as usize;
    let k = if k.pow(m as u32) < opts.samples_per_cell { k + 1 } else { k };
    let total = k.pow(m as u32);
    let p = &partition;
    let rows: Vec<_> = p
        .active
        .par_iter()
        .map(|&cell| {
            let mut r = rng::stream(opts.seed, rng::tags::ULAM, cell as u64);
            let mut hits: Vec<usize> = Vec::with_capacity(total);
            let mut rej = RejectCounts::default();
            let mut t = [0.0; 3];
            for s in 0..total {
                let mut q = s;
                for slot in t.iter_mut().take(m) {
                    let off = if opts.jitter { r.random::<f64>() } else { 0.5 };
                    *slot = ((q % k) as f64 + off) / k as f64;
                    q /= k;
                }
                let x = p.point_in_cell(cell, &t[..m]);
                if !map.in_domain(&x) {
                    rej.outside_domain += 1;
                    continue;
                }
                if map.region.contains(&x) {
                    rej.in_region += 1;
                    continue;
                }
                match first_return(map, &x, opts.n_max) {
                    Ok(ret) => match p.locate(&ret.point).filter(|c| p.is_active(*c)) {
                        Some(c) => hits.push(p.row_of[c]),
                        None => rej.inactive_target += 1,
                    },
                    Err(AcimError::Overflow(_)) => rej.overflow += 1,
                    Err(_) => rej.on_boundary += 1,
                }
            }
            let accepted = hits.len();
            hits.sort_unstable();
            let mut row: Vec<(usize, u32)> = Vec::new();
            for h in hits {
                match row.last_mut() {
                    Some((c, n)) if *c == h => *n += 1,
                    _ => row.push((h, 1)),
                }
            }
            (row, accepted, rej)
        })
        .collect();

    let n = p.active_count();
    let mut row_ptr = Vec::with_capacity(n + 1);
    row_ptr.push(0);
    let (mut cols, mut vals) = (Vec::new(), Vec::new());
    let mut starved = Vec::new();
    let mut rejects = RejectCounts::default();
    for (i, (row, accepted, rej)) in rows.into_iter().enumerate() {
        rejects.add(&rej);
        if 2 * accepted < total {
            starved.push(i);
            cols.extend(0..n);
            vals.extend(std::iter::repeat_n(1.0 / n as f64, n));
        } else {
            for (c, count) in row {
                cols.push(c);
                vals.push(count as f64 / accepted as f64);
            }
        }
        row_ptr.push(cols.len());
    }
    let straddle_rows = p.active.iter().filter(|&&c| p.straddle[c]).count();
    Ok(TransferMatrix {
        partition,
        row_ptr,
        cols,
        vals,
        samples_per_cell: total,
        seed: opts.seed,
        jitter: opts.jitter,
        starved,
        rejects,
        straddle_rows,
    })
}
