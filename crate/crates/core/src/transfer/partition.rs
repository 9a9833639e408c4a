use serde::{Deserialize, Serialize};

use crate::error::{AcimError, Result};
use crate::geometry::Point;
use crate::map_model::PiecewiseMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellKind {
    /// Center in M \ R: a state of the induced chain.
    Hat,
    /// Center in R.
    Region,
    /// Center outside M.
    Outside,
}

/// Uniform axis-aligned grid over a box, with cells flagged by where their
/// centers fall. Cells are numbered with the first axis fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UlamPartition {
    pub lo: Point,
    pub hi: Point,
    pub resolution: usize,
    pub kinds: Vec<CellKind>,
    /// Corners disagree about R, M or branch membership.
    pub straddle: Vec<bool>,
    /// Hat cells in increasing cell order; rows of the transfer matrix.
    pub active: Vec<usize>,
    /// Cell index to row, `usize::MAX` for inactive cells.
    pub row_of: Vec<usize>,
}

impl UlamPartition {
    /// Plain grid with every cell active.
    pub fn uniform(lo: Point, hi: Point, resolution: usize) -> Result<Self> {
        if resolution < 8 {
            return Err(AcimError::BadResolution(resolution));
        }
        let n = resolution.pow(lo.dim() as u32);
        Ok(UlamPartition {
            lo,
            hi,
            resolution,
            kinds: vec![CellKind::Hat; n],
            straddle: vec![false; n],
            active: (0..n).collect(),
            row_of: (0..n).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.lo.dim()
    }

    pub fn cell_count(&self) -> usize {
        self.kinds.len()
    }

    pub fn width(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / self.resolution as f64
    }

    pub fn min_width(&self) -> f64 {
        (0..self.dim()).map(|a| self.width(a)).fold(f64::INFINITY, f64::min)
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.width(a)).product()
    }

    pub fn multi_index(&self, mut cell: usize) -> [usize; 3] {
        let mut idx = [0; 3];
        for v in idx.iter_mut().take(self.dim()) {
            *v = cell % self.resolution;
            cell /= self.resolution;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .rev()
            .fold(0, |acc, &i| acc * self.resolution + i)
    }

    /// Lower corner plus fractional offsets `t` in [0,1]^m within the cell.
    pub fn point_in_cell(&self, cell: usize, t: &[f64]) -> Point {
        let idx = self.multi_index(cell);
        let mut x = Point::zeros(self.dim());
        for a in 0..self.dim() {
            x[a] = self.lo[a] + (idx[a] as f64 + t[a]) * self.width(a);
        }
        x
    }

    pub fn center(&self, cell: usize) -> Point {
        self.point_in_cell(cell, &[0.5; 3])
    }

    /// Cell containing x; points on the upper edge of the box go to the last cell.
    pub fn locate(&self, x: &Point) -> Option<usize> {
        let mut idx = [0usize; 3];
        for a in 0..self.dim() {
            let u = (x[a] - self.lo[a]) / self.width(a);
            if !(u >= 0.0 && u <= self.resolution as f64) {
                return None;
            }
            idx[a] = (u.floor() as usize).min(self.resolution - 1);
        }
        Some(self.flat_index(&idx[..self.dim()]))
    }

    pub fn is_active(&self, cell: usize) -> bool {
        self.row_of[cell] != usize::MAX
    }

    pub fn active_count(&self) -> usize {
        self.active.len()
    }

    /// Mask of active cells.
    pub fn active_mask(&self) -> Vec<bool> {
        self.row_of.iter().map(|r| *r != usize::MAX).collect()
    }

    /// Mask of cells whose center lies in M.
    pub fn domain_mask(&self) -> Vec<bool> {
        self.kinds.iter().map(|k| *k != CellKind::Outside).collect()
    }

    pub fn same_grid(&self, other: &UlamPartition) -> bool {
        self.lo == other.lo
            && self.hi == other.hi
            && self.resolution == other.resolution
            && self.active == other.active
    }
}

/// Grid over the bounding box of the map's domain, R-cells and outside
/// cells excluded from the active set.
pub fn build_partition(map: &PiecewiseMap, resolution: usize) -> Result<UlamPartition> {
    let mut p = UlamPartition::uniform(map.domain.lo, map.domain.hi, resolution)?;
    let m = p.dim();
    let n = p.cell_count();
    let classify = |x: &Point| -> (u8, usize) {
        let kind = if !map.in_domain(x) {
            2
        } else if map.region.contains(x) {
            1
        } else {
            0
        };
        let branch = map
            .branches
            .iter()
            .position(|b| b.contains(x))
            .unwrap_or(usize::MAX);
        (kind, branch)
    };
    let mut active = Vec::new();
    let mut row_of = vec![usize::MAX; n];
    #[allow(clippy::needless_range_loop)]
    for cell in 0..n {
        let c = p.center(cell);
        let (kind, _) = classify(&c);
        p.kinds[cell] = match kind {
            0 => CellKind::Hat,
            1 => CellKind::Region,
            _ => CellKind::Outside,
        };
        let corners: Vec<(u8, usize)> = (0..1usize << m)
            .map(|bits| {
                // corners pulled in slightly so a shared face is not a disagreement
                let t: Vec<f64> = (0..m)
                    .map(|a| if (bits >> a) & 1 == 1 { 1.0 - 1e-9 } else { 1e-9 })
                    .collect();
                classify(&p.point_in_cell(cell, &t))
            })
            .collect();
        p.straddle[cell] = corners.windows(2).any(|w| w[0] != w[1]);
        if p.kinds[cell] == CellKind::Hat {
            row_of[cell] = active.len();
            active.push(cell);
        }
    }
    p.active = active;
    p.row_of = row_of;
    Ok(p)
}
