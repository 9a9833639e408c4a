use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{AcimError, Result};

use super::partition::UlamPartition;
use super::ulam::TransferMatrix;

/// Piecewise-constant function on a partition. `values` covers every cell;
/// `support` marks the cells the function lives on.
#[derive(Clone, Debug, PartialEq)]
pub struct GridDensity {
    pub partition: Arc<UlamPartition>,
    pub values: Vec<f64>,
    pub support: Arc<Vec<bool>>,
}

impl GridDensity {
    /// Function on the active cells, zero elsewhere.
    pub fn on_active(partition: Arc<UlamPartition>, mut f: impl FnMut(usize) -> f64) -> Self {
        let support = Arc::new(partition.active_mask());
        let values = (0..partition.cell_count())
            .map(|c| if support[c] { f(c) } else { 0.0 })
            .collect();
        GridDensity {
            partition,
            values,
            support,
        }
    }

    pub fn cell_volume(&self) -> f64 {
        self.partition.cell_volume()
    }

    /// Integral over the support.
    pub fn mass(&self) -> f64 {
        let v = self.cell_volume();
        self.values
            .iter()
            .zip(self.support.iter())
            .filter(|(_, s)| **s)
            .map(|(x, _)| x * v)
            .sum()
    }

    pub fn l1_norm(&self) -> f64 {
        let v = self.cell_volume();
        self.values
            .iter()
            .zip(self.support.iter())
            .filter(|(_, s)| **s)
            .map(|(x, _)| x.abs() * v)
            .sum()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values
            .iter()
            .zip(self.support.iter())
            .filter(|(_, s)| **s)
            .map(|(x, _)| x.abs())
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, c: f64) -> GridDensity {
        GridDensity {
            values: self.values.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }

    /// L1 distance on the common support.
    pub fn l1_distance(&self, other: &GridDensity) -> Result<f64> {
        if !self.partition.same_grid(&other.partition) {
            return Err(AcimError::PartitionMismatch);
        }
        let v = self.cell_volume();
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .zip(self.support.iter())
            .filter(|(_, s)| **s)
            .map(|((a, b), _)| (a - b).abs() * v)
            .sum())
    }

    /// Values on the active cells, in row order.
    pub fn active_values(&self) -> Vec<f64> {
        self.partition.active.iter().map(|&c| self.values[c]).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerReport {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    /// L1 residual after each sweep.
    pub history: Vec<f64>,
}

/// Power iteration of the measure-side action v -> v P from the uniform
/// vector, normalized to mass 1 on the active cells. Always returns the
/// last iterate; `converged` tells whether the residual fell below `tol`.
pub fn power_iterate(matrix: &TransferMatrix, tol: f64, max_iter: usize) -> (GridDensity, PowerReport) {
    let n = matrix.n();
    let t = matrix.transpose();
    let mut v = vec![1.0 / n as f64; n];
    let mut history = Vec::new();
    let mut converged = false;
    for _ in 0..max_iter {
        let mut w = matrix.left_multiply(&v, &t);
        let s: f64 = w.iter().sum();
        for x in w.iter_mut() {
            *x /= s;
        }
        let res: f64 = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
        history.push(res);
        if res < tol {
            converged = true;
            // keep the start vector exactly when it is already fixed
            if res > 0.0 {
                v = w;
            }
            break;
        }
        v = w;
    }
    let vol = matrix.partition.cell_volume();
    let rows = &matrix.partition.row_of;
    let density = GridDensity::on_active(matrix.partition.clone(), |c| v[rows[c]] / vol);
    let report = PowerReport {
        iterations: history.len(),
        residual: history.last().copied().unwrap_or(0.0),
        converged,
        history,
    };
    (density, report)
}

/// Invariant density of the discretized operator, or `NoConvergence`.
pub fn invariant_density(
    matrix: &TransferMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<(GridDensity, PowerReport)> {
    let (h, report) = power_iterate(matrix, tol, max_iter);
    if report.converged {
        Ok((h, report))
    } else {
        Err(AcimError::NoConvergence {
            iterations: report.iterations,
            residual: report.residual,
        })
    }
}

/// Discrete transfer operator on densities:
/// (P f)_j = sum_i P_ij f_i vol(A_i) / vol(A_j).
pub fn apply_pf(matrix: &TransferMatrix, f: &GridDensity) -> Result<GridDensity> {
    if !matrix.partition.same_grid(&f.partition) {
        return Err(AcimError::PartitionMismatch);
    }
    let p = &matrix.partition;
    let mut out = vec![0.0; matrix.n()];
    for (i, &cell) in p.active.iter().enumerate() {
        let fi = f.values[cell];
        if fi == 0.0 {
            continue;
        }
        for (j, w) in matrix.row(i) {
            out[j] += w * fi;
        }
    }
    let rows = &p.row_of;
    Ok(GridDensity::on_active(p.clone(), |c| out[rows[c]]))
}
