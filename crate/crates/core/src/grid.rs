//! Axis-aligned cubes, dyadic trees, and piecewise-constant signals.
//!
//! Conventions used throughout the crate:
//! - cubes are half-open boxes `[lo, hi)^d`, so the children of a dyadic cube
//!   partition it exactly;
//! - spatial dimension `d` is 1 or 2, stored per object; coordinates live in
//!   `[f64; 2]` with unused axes pinned to zero;
//! - signal resolution is a power of two, so every dyadic cube down to
//!   `max_level` is a union of whole cells.

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 2;

/// Axis-aligned cube. `level` records dyadic depth relative to the root it
/// was derived from (0 at the root); dilation keeps the level of its source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cube {
    pub center: [f64; 2],
    pub side: f64,
    pub level: u32,
    pub dim: u8,
}

impl Cube {
    pub fn new(center: [f64; 2], side: f64, level: u32, dim: u8) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::InvalidArgument(format!("dim {dim} not in {{1, 2}}")));
        }
        if !(side > 0.0 && side.is_finite()) {
            return Err(Error::InvalidArgument(format!("side {side} must be positive")));
        }
        let mut c = center;
        if dim == 1 {
            c[1] = 0.0;
        }
        Ok(Cube { center: c, side, level, dim })
    }

    pub fn line(center: f64, side: f64) -> Self {
        Cube::new([center, 0.0], side, 0, 1).unwrap()
    }

    pub fn square(center: [f64; 2], side: f64) -> Self {
        Cube::new(center, side, 0, 2).unwrap()
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn lo(&self, axis: usize) -> f64 {
        self.center[axis] - 0.5 * self.side
    }

    pub fn hi(&self, axis: usize) -> f64 {
        self.center[axis] + 0.5 * self.side
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.dim as i32)
    }

    pub fn contains_point(&self, x: &[f64; 2]) -> bool {
        (0..self.dim()).all(|a| self.lo(a) <= x[a] && x[a] < self.hi(a))
    }

    pub fn contains_cube(&self, q: &Cube) -> bool {
        (0..self.dim()).all(|a| q.lo(a) >= self.lo(a) && q.hi(a) <= self.hi(a))
    }

    /// Overlap length with `q` along one axis; zero when disjoint.
    pub fn overlap_len(&self, q: &Cube, axis: usize) -> f64 {
        let lo = self.lo(axis).max(q.lo(axis));
        let hi = self.hi(axis).min(q.hi(axis));
        (hi - lo).max(0.0)
    }

    pub fn overlap_volume(&self, q: &Cube) -> f64 {
        (0..self.dim()).map(|a| self.overlap_len(q, a)).product()
    }
}

/// The 2^d children of a cube, in row-major order of their offsets.
pub fn dyadic_children(q: &Cube) -> Vec<Cube> {
    let h = 0.25 * q.side;
    let mut out = Vec::with_capacity(1 << q.dim());
    match q.dim() {
        1 => {
            for sx in [-1.0, 1.0] {
                out.push(Cube {
                    center: [q.center[0] + sx * h, 0.0],
                    side: 0.5 * q.side,
                    level: q.level + 1,
                    dim: q.dim,
                });
            }
        }
        _ => {
            for sy in [-1.0, 1.0] {
                for sx in [-1.0, 1.0] {
                    out.push(Cube {
                        center: [q.center[0] + sx * h, q.center[1] + sy * h],
                        side: 0.5 * q.side,
                        level: q.level + 1,
                        dim: q.dim,
                    });
                }
            }
        }
    }
    out
}

/// Concentric dilate: same center, side multiplied by `t >= 1`.
pub fn dilate(q: &Cube, t: f64) -> Result<Cube> {
    if !(t >= 1.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("dilation factor {t} must be >= 1")));
    }
    Ok(Cube { side: q.side * t, ..*q })
}

/// Dyadic cube in integer coordinates relative to a root: at `level` k the
/// root splits into 2^k slots per axis and `idx` names one of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicCube {
    pub level: u32,
    pub idx: [u64; 2],
}

impl DyadicCube {
    pub fn root() -> Self {
        DyadicCube { level: 0, idx: [0, 0] }
    }

    pub fn parent(&self) -> Option<DyadicCube> {
        if self.level == 0 {
            return None;
        }
        Some(DyadicCube { level: self.level - 1, idx: [self.idx[0] >> 1, self.idx[1] >> 1] })
    }

    pub fn children(&self, dim: usize) -> Vec<DyadicCube> {
        let b = [self.idx[0] << 1, self.idx[1] << 1];
        match dim {
            1 => vec![
                DyadicCube { level: self.level + 1, idx: [b[0], 0] },
                DyadicCube { level: self.level + 1, idx: [b[0] + 1, 0] },
            ],
            _ => {
                let mut out = Vec::with_capacity(4);
                for dy in 0..2u64 {
                    for dx in 0..2u64 {
                        out.push(DyadicCube { level: self.level + 1, idx: [b[0] + dx, b[1] + dy] });
                    }
                }
                out
            }
        }
    }

    /// True when `self` contains `q` (as sets; equality counts).
    pub fn contains(&self, q: &DyadicCube) -> bool {
        if q.level < self.level {
            return false;
        }
        let shift = q.level - self.level;
        (0..MAX_DIM).all(|a| (q.idx[a] >> shift) == self.idx[a])
    }
}

/// Every cube of `fine` is contained in some cube of `coarse`. Both lists must
/// refer to the same root.
pub fn covers(coarse: &[DyadicCube], fine: &[DyadicCube]) -> bool {
    fine.iter().all(|q| coarse.iter().any(|p| p.contains(q)))
}

/// Dyadic tree over a root cube, truncated at `max_level`.
#[derive(Debug, Clone, Copy)]
pub struct DyadicTree {
    pub root: Cube,
    pub max_level: u32,
}

impl DyadicTree {
    pub fn new(root: Cube, max_level: u32) -> Self {
        DyadicTree { root, max_level }
    }

    pub fn dim(&self) -> usize {
        self.root.dim()
    }

    /// Geometric realization of an integer dyadic cube.
    pub fn cube(&self, q: &DyadicCube) -> Cube {
        let side = self.root.side / (1u64 << q.level) as f64;
        let mut center = [0.0; 2];
        for a in 0..self.dim() {
            center[a] = self.root.lo(a) + (q.idx[a] as f64 + 0.5) * side;
        }
        Cube { center, side, level: q.level, dim: self.root.dim }
    }

    pub fn cubes_at_level(&self, level: u32) -> Vec<DyadicCube> {
        let per_axis = 1u64 << level;
        let mut out = Vec::new();
        match self.dim() {
            1 => {
                for ix in 0..per_axis {
                    out.push(DyadicCube { level, idx: [ix, 0] });
                }
            }
            _ => {
                for iy in 0..per_axis {
                    for ix in 0..per_axis {
                        out.push(DyadicCube { level, idx: [ix, iy] });
                    }
                }
            }
        }
        out
    }

    /// The chain of dyadic cubes containing a given cell, root first.
    pub fn chain_over_cell(&self, cell: [usize; 2], cell_level: u32) -> Vec<DyadicCube> {
        (0..=cell_level)
            .map(|k| {
                let shift = cell_level - k;
                DyadicCube { level: k, idx: [(cell[0] as u64) >> shift, (cell[1] as u64) >> shift] }
            })
            .collect()
    }
}

/// Uniform cell grid over a domain cube; `res` cells per axis, a power of two.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub domain: Cube,
    pub res: usize,
}

impl Grid {
    pub fn new(domain: Cube, res: usize) -> Result<Self> {
        if res == 0 || !res.is_power_of_two() {
            return Err(Error::InvalidArgument(format!("resolution {res} must be a power of two")));
        }
        Ok(Grid { domain, res })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn log2_res(&self) -> u32 {
        self.res.trailing_zeros()
    }

    pub fn cell_width(&self) -> f64 {
        self.domain.side / self.res as f64
    }

    /// Euclidean diameter of one cell.
    pub fn cell_diameter(&self) -> f64 {
        self.cell_width() * (self.dim() as f64).sqrt()
    }

    pub fn num_cells(&self) -> usize {
        self.res.pow(self.dim() as u32)
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_width().powi(self.dim() as i32)
    }

    pub fn linear(&self, cell: [usize; 2]) -> usize {
        match self.dim() {
            1 => cell[0],
            _ => cell[1] * self.res + cell[0],
        }
    }

    pub fn cell_of_linear(&self, i: usize) -> [usize; 2] {
        match self.dim() {
            1 => [i, 0],
            _ => [i % self.res, i / self.res],
        }
    }

    pub fn cell_center(&self, cell: [usize; 2]) -> [f64; 2] {
        let w = self.cell_width();
        let mut c = [0.0; 2];
        for a in 0..self.dim() {
            c[a] = self.domain.lo(a) + (cell[a] as f64 + 0.5) * w;
        }
        c
    }

    pub fn cell_cube(&self, cell: [usize; 2]) -> Cube {
        Cube {
            center: self.cell_center(cell),
            side: self.cell_width(),
            level: self.log2_res(),
            dim: self.domain.dim,
        }
    }

    /// The dyadic tree whose deepest level is the cell level.
    pub fn tree(&self) -> DyadicTree {
        DyadicTree::new(self.domain, self.log2_res())
    }

    /// The cell containing a point of the domain.
    pub fn cell_of_point(&self, x: &[f64; 2]) -> Option<[usize; 2]> {
        if !self.domain.contains_point(x) {
            return None;
        }
        let w = self.cell_width();
        let mut cell = [0usize; 2];
        for a in 0..self.dim() {
            let i = ((x[a] - self.domain.lo(a)) / w).floor() as isize;
            cell[a] = i.clamp(0, self.res as isize - 1) as usize;
        }
        Some(cell)
    }

    /// Half-open index ranges of cells whose closure meets `q`, clipped to the
    /// grid. Partial cells are included; exact overlap weights are computed
    /// per cell by the quadrature below.
    pub fn index_box(&self, q: &Cube) -> Option<IndexBox> {
        let w = self.cell_width();
        let mut lo = [0usize; 2];
        let mut hi = [1usize; 2];
        for a in 0..self.dim() {
            let s = ((q.lo(a) - self.domain.lo(a)) / w).floor().max(0.0) as usize;
            let e = (((q.hi(a) - self.domain.lo(a)) / w).ceil().max(0.0) as usize).min(self.res);
            if s >= e {
                return None;
            }
            lo[a] = s.min(self.res);
            hi[a] = e;
            if lo[a] >= hi[a] {
                return None;
            }
        }
        Some(IndexBox { lo, hi, dim: self.dim() as u8 })
    }

    /// Index ranges of cells whose center lies in `q` (the membership rule
    /// used for set restrictions and cutoffs).
    pub fn center_box(&self, q: &Cube) -> Option<IndexBox> {
        let w = self.cell_width();
        let mut lo = [0usize; 2];
        let mut hi = [1usize; 2];
        for a in 0..self.dim() {
            // center of cell i is at (i + 1/2) w: inside iff lo <= center < hi
            let s = ((q.lo(a) - self.domain.lo(a)) / w - 0.5).ceil().max(0.0) as usize;
            let e = (((q.hi(a) - self.domain.lo(a)) / w - 0.5).ceil().max(0.0) as usize).min(self.res);
            let s = s.min(self.res);
            if s >= e {
                return None;
            }
            lo[a] = s;
            hi[a] = e;
        }
        Some(IndexBox { lo, hi, dim: self.dim() as u8 })
    }

    /// Identifies a geometric cube with a dyadic cube of this grid's tree.
    /// Errors when the side is not a power-of-two fraction of the domain or
    /// the cube is not aligned to the tree.
    pub fn locate_dyadic(&self, q: &Cube) -> Result<DyadicCube> {
        let ratio = self.domain.side / q.side;
        let level = ratio.log2().round() as i64;
        if level < 0 || level > self.log2_res() as i64 {
            return Err(Error::InvalidArgument(format!(
                "cube side {} has no tree level inside the grid",
                q.side
            )));
        }
        let level = level as u32;
        let side = self.domain.side / (1u64 << level) as f64;
        let mut idx = [0u64; 2];
        for a in 0..self.dim() {
            let off = (q.lo(a) - self.domain.lo(a)) / side;
            let i = off.round();
            if (off - i).abs() > 1e-9 || i < 0.0 || i >= (1u64 << level) as f64 {
                return Err(Error::InvalidArgument(
                    "cube is not aligned to the dyadic tree".into(),
                ));
            }
            idx[a] = i as u64;
        }
        if (side - q.side).abs() > 1e-12 * self.domain.side {
            return Err(Error::InvalidArgument("cube side does not match its tree level".into()));
        }
        Ok(DyadicCube { level, idx })
    }

    /// Cell span of a dyadic cube of this grid's tree.
    pub fn dyadic_box(&self, q: &DyadicCube) -> IndexBox {
        let shift = self.log2_res() - q.level;
        let span = 1usize << shift;
        let mut lo = [0usize; 2];
        let mut hi = [1usize; 2];
        for a in 0..self.dim() {
            lo[a] = (q.idx[a] as usize) << shift;
            hi[a] = lo[a] + span;
        }
        IndexBox { lo, hi, dim: self.dim() as u8 }
    }
}

/// Half-open per-axis cell index ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexBox {
    pub lo: [usize; 2],
    pub hi: [usize; 2],
    pub dim: u8,
}

impl IndexBox {
    pub fn cells(&self) -> IndexBoxIter {
        IndexBoxIter { b: *self, cur: self.lo, done: self.lo[0] >= self.hi[0] }
    }

    pub fn count(&self) -> usize {
        (0..self.dim as usize).map(|a| self.hi[a] - self.lo[a]).product()
    }

    pub fn contains(&self, cell: [usize; 2]) -> bool {
        (0..self.dim as usize).all(|a| self.lo[a] <= cell[a] && cell[a] < self.hi[a])
    }
}

pub struct IndexBoxIter {
    b: IndexBox,
    cur: [usize; 2],
    done: bool,
}

impl Iterator for IndexBoxIter {
    type Item = [usize; 2];

    fn next(&mut self) -> Option<[usize; 2]> {
        if self.done {
            return None;
        }
        let out = self.cur;
        self.cur[0] += 1;
        if self.cur[0] >= self.b.hi[0] {
            self.cur[0] = self.b.lo[0];
            self.cur[1] += 1;
            if self.b.dim == 1 || self.cur[1] >= self.b.hi[1] {
                self.done = true;
            }
        }
        Some(out)
    }
}

/// Piecewise-constant scalar signal: one value per cell, zero outside the
/// domain.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarSignal {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarSignal {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_cells() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} cells",
                values.len(),
                grid.num_cells()
            )));
        }
        Ok(ScalarSignal { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        ScalarSignal { grid, values: vec![0.0; grid.num_cells()] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.num_cells())
            .map(|i| f(grid.cell_center(grid.cell_of_linear(i))))
            .collect();
        ScalarSignal { grid, values }
    }

    pub fn value(&self, cell: [usize; 2]) -> f64 {
        self.values[self.grid.linear(cell)]
    }

    pub fn l1_norm(&self) -> f64 {
        let v = self.grid.cell_volume();
        self.values.iter().map(|x| x.abs()).sum::<f64>() * v
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Integral of the signal over `q` with exact per-cell overlap weights;
    /// zero extension outside the domain.
    pub fn integral_over(&self, q: &Cube) -> f64 {
        self.weighted_sum(q, |v| v)
    }

    pub fn abs_integral_over(&self, q: &Cube) -> f64 {
        self.weighted_sum(q, |v| v.abs())
    }

    fn weighted_sum(&self, q: &Cube, map: impl Fn(f64) -> f64) -> f64 {
        let Some(b) = self.grid.index_box(q) else { return 0.0 };
        let mut acc = 0.0;
        for cell in b.cells() {
            let w = self.grid.cell_cube(cell).overlap_volume(q);
            if w > 0.0 {
                acc += map(self.value(cell)) * w;
            }
        }
        acc
    }

    /// Mean over `q` normalized by the full measure of `q` (zero extension).
    pub fn mean_extended(&self, q: &Cube) -> f64 {
        self.integral_over(q) / q.volume()
    }

    pub fn abs_mean_extended(&self, q: &Cube) -> f64 {
        self.abs_integral_over(q) / q.volume()
    }

    /// Signal multiplied by the indicator of `q` (cell-center rule).
    pub fn restricted_to(&self, q: &Cube) -> ScalarSignal {
        let mut out = ScalarSignal::zeros(self.grid);
        if let Some(b) = self.grid.center_box(q) {
            for cell in b.cells() {
                let i = self.grid.linear(cell);
                out.values[i] = self.values[i];
            }
        }
        out
    }
}

/// Mean of `f` over `q cap domain`, by exact cell-overlap quadrature. The
/// normalizer is the measure of the intersection; a cube missing the domain is
/// an error rather than a zero.
pub fn mean_value(f: &ScalarSignal, q: &Cube) -> Result<f64> {
    let inter: f64 = (0..f.grid.dim()).map(|a| f.grid.domain.overlap_len(q, a)).product();
    if inter <= 0.0 {
        return Err(Error::EmptyIntersection);
    }
    Ok(f.integral_over(q) / inter)
}

/// Piecewise-constant signal with values in R^n, n <= 3; unused components
/// are pinned to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSignal {
    pub grid: Grid,
    pub n: u8,
    pub values: Vec<[f64; 3]>,
}

impl VectorSignal {
    pub fn new(grid: Grid, n: u8, values: Vec<[f64; 3]>) -> Result<Self> {
        if !(1..=3).contains(&n) {
            return Err(Error::InvalidArgument(format!("vector dimension {n} not in 1..=3")));
        }
        if values.len() != grid.num_cells() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} cells",
                values.len(),
                grid.num_cells()
            )));
        }
        Ok(VectorSignal { grid, n, values })
    }

    pub fn zeros(grid: Grid, n: u8) -> Self {
        VectorSignal { grid, n, values: vec![[0.0; 3]; grid.num_cells()] }
    }

    pub fn value(&self, cell: [usize; 2]) -> [f64; 3] {
        self.values[self.grid.linear(cell)]
    }

    /// One scalar component as a signal.
    pub fn component(&self, k: usize) -> ScalarSignal {
        ScalarSignal {
            grid: self.grid,
            values: self.values.iter().map(|v| v[k]).collect(),
        }
    }

    /// Pointwise inner product with a fixed direction.
    pub fn dot_with(&self, e: &[f64; 3]) -> ScalarSignal {
        ScalarSignal {
            grid: self.grid,
            values: self
                .values
                .iter()
                .map(|v| v[0] * e[0] + v[1] * e[1] + v[2] * e[2])
                .collect(),
        }
    }

    pub fn from_components(parts: &[ScalarSignal]) -> Result<Self> {
        let n = parts.len();
        if !(1..=3).contains(&n) {
            return Err(Error::InvalidArgument(format!("{n} components not in 1..=3")));
        }
        let grid = parts[0].grid;
        if parts.iter().any(|p| p.grid != grid) {
            return Err(Error::DimensionMismatch("components on different grids".into()));
        }
        let mut values = vec![[0.0; 3]; grid.num_cells()];
        for (k, p) in parts.iter().enumerate() {
            for (dst, src) in values.iter_mut().zip(&p.values) {
                dst[k] = *src;
            }
        }
        Ok(VectorSignal { grid, n: n as u8, values })
    }

    /// Euclidean norm per cell as a scalar signal.
    pub fn norm_signal(&self) -> ScalarSignal {
        ScalarSignal {
            grid: self.grid,
            values: self
                .values
                .iter()
                .map(|v| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt())
                .collect(),
        }
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        let v = self.grid.cell_volume();
        let s: f64 = self
            .values
            .iter()
            .map(|x| (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt().powf(p))
            .sum();
        (s * v).powf(1.0 / p)
    }

    /// Signal multiplied by the indicator of `q` (cell-center rule).
    pub fn restricted_to(&self, q: &Cube) -> VectorSignal {
        let mut out = VectorSignal::zeros(self.grid, self.n);
        if let Some(b) = self.grid.center_box(q) {
            for cell in b.cells() {
                let i = self.grid.linear(cell);
                out.values[i] = self.values[i];
            }
        }
        out
    }
}

/// Prefix-sum table for O(1) sums over cell index boxes. Works for d = 1 and
/// d = 2 (summed-area layout).
#[derive(Debug, Clone)]
pub struct PrefixTable<T> {
    res: usize,
    dim: u8,
    // sums[(iy)(res+1) + ix] = sum over cells with x < ix, y < iy
    sums: Vec<T>,
}

impl<T> PrefixTable<T>
where
    T: Copy + Default + std::ops::Add<Output = T> + std::ops::Sub<Output = T>,
{
    pub fn new(grid: &Grid, mut val: impl FnMut([usize; 2]) -> T) -> Self {
        let res = grid.res;
        match grid.dim() {
            1 => {
                let mut sums = Vec::with_capacity(res + 1);
                sums.push(T::default());
                let mut acc = T::default();
                for i in 0..res {
                    acc = acc + val([i, 0]);
                    sums.push(acc);
                }
                PrefixTable { res, dim: 1, sums }
            }
            _ => {
                let w = res + 1;
                let mut sums = vec![T::default(); w * w];
                for iy in 0..res {
                    let mut row = T::default();
                    for ix in 0..res {
                        row = row + val([ix, iy]);
                        sums[(iy + 1) * w + (ix + 1)] = sums[iy * w + (ix + 1)] + row;
                    }
                }
                PrefixTable { res, dim: 2, sums }
            }
        }
    }

    /// Sum over the cells of `b`.
    pub fn box_sum(&self, b: &IndexBox) -> T {
        match self.dim {
            1 => self.sums[b.hi[0]] - self.sums[b.lo[0]],
            _ => {
                let w = self.res + 1;
                let (x0, x1, y0, y1) = (b.lo[0], b.hi[0], b.lo[1], b.hi[1]);
                self.sums[y1 * w + x1] + self.sums[y0 * w + x0]
                    - self.sums[y0 * w + x1]
                    - self.sums[y1 * w + x0]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_line() -> Cube {
        Cube::line(0.0, 1.0)
    }

    #[test]
    fn children_partition_volume() {
        for q in [unit_line(), Cube::square([0.5, -1.0], 4.0)] {
            let kids = dyadic_children(&q);
            assert_eq!(kids.len(), 1 << q.dim());
            let total: f64 = kids.iter().map(|c| c.volume()).sum();
            assert!((total - q.volume()).abs() <= 1e-12 * q.volume());
            for c in &kids {
                assert!(q.contains_cube(c));
                assert_eq!(c.level, q.level + 1);
            }
            // pairwise disjoint interiors
            for i in 0..kids.len() {
                for j in 0..i {
                    assert_eq!(kids[i].overlap_volume(&kids[j]), 0.0);
                }
            }
        }
    }

    #[test]
    fn dilate_composes_exactly_for_dyadic_factors() {
        let q = Cube::square([0.25, 0.75], 0.5);
        let a = dilate(&dilate(&q, 2.0).unwrap(), 4.0).unwrap();
        let b = dilate(&q, 8.0).unwrap();
        assert_eq!(a, b);
        let a = dilate(&dilate(&q, 3.0).unwrap(), 2.0).unwrap();
        let b = dilate(&q, 6.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dilate_rejects_contraction() {
        assert!(dilate(&unit_line(), 0.5).is_err());
    }

    #[test]
    fn mean_value_of_constant_is_constant() {
        let grid = Grid::new(Cube::line(0.0, 2.0), 16).unwrap();
        let f = ScalarSignal::from_fn(grid, |_| 3.0);
        // aligned dyadic cube: exact
        let q = Cube::line(-0.5, 1.0);
        assert_eq!(mean_value(&f, &q).unwrap(), 3.0);
        // misaligned cube: exact overlap quadrature still reproduces it
        let q = Cube::line(0.13, 0.61);
        assert!((mean_value(&f, &q).unwrap() - 3.0).abs() < 1e-12);
        // cube sticking out of the domain: normalizer is the intersection
        let q = Cube::line(1.0, 2.0);
        assert!((mean_value(&f, &q).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn mean_value_outside_domain_errors() {
        let grid = Grid::new(Cube::line(0.0, 2.0), 4).unwrap();
        let f = ScalarSignal::from_fn(grid, |_| 1.0);
        assert!(matches!(mean_value(&f, &Cube::line(10.0, 1.0)), Err(Error::EmptyIntersection)));
    }

    #[test]
    fn zero_extension_mean_uses_full_measure() {
        let grid = Grid::new(Cube::line(0.0, 2.0), 4).unwrap();
        let f = ScalarSignal::from_fn(grid, |_| 1.0);
        // half of q is outside the domain where f is zero
        let q = Cube::line(1.0, 2.0);
        assert!((f.mean_extended(&q) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn covers_detects_missing_cube() {
        let top = DyadicCube::root();
        let kids = top.children(1);
        assert!(covers(&[top], &kids));
        assert!(covers(&kids, &kids));
        assert!(!covers(&[kids[0]], &kids));
        let grand = kids[1].children(1);
        assert!(covers(&[kids[1]], &grand));
        assert!(!covers(&grand, &[kids[1]]));
    }

    #[test]
    fn dyadic_box_spans_whole_cube() {
        let grid = Grid::new(Cube::square([0.0, 0.0], 8.0), 16).unwrap();
        let q = DyadicCube { level: 2, idx: [3, 1] };
        let b = grid.dyadic_box(&q);
        assert_eq!(b.count(), 16);
        let geom = grid.tree().cube(&q);
        for cell in b.cells() {
            assert!(geom.contains_point(&grid.cell_center(cell)));
        }
    }

    #[test]
    fn prefix_table_matches_direct_sums() {
        let grid = Grid::new(Cube::square([0.0, 0.0], 1.0), 8).unwrap();
        let f = ScalarSignal::from_fn(grid, |x| x[0] + 2.0 * x[1] + 0.3);
        let table = PrefixTable::new(&grid, |c| f.value(c));
        let b = IndexBox { lo: [1, 2], hi: [5, 7], dim: 2 };
        let direct: f64 = b.cells().map(|c| f.value(c)).sum();
        assert!((table.box_sum(&b) - direct).abs() < 1e-12);
    }

    #[test]
    fn restriction_respects_cell_centers() {
        let grid = Grid::new(Cube::line(0.0, 1.0), 8).unwrap();
        let f = ScalarSignal::from_fn(grid, |_| 1.0);
        let r = f.restricted_to(&Cube::line(-0.25, 0.5));
        // [-1/2, 0) holds the centers of cells 0..4 at width 1/8
        let kept: Vec<usize> = r.values.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i).collect();
        assert_eq!(kept, vec![0, 1, 2, 3]);
    }

    proptest! {
        #[test]
        fn prop_children_partition_means(
            center in -4.0f64..4.0,
            side_exp in -2i32..4,
        ) {
            let side = (2.0f64).powi(side_exp);
            let q = Cube::line(center, side);
            let kids = dyadic_children(&q);
            let grid = Grid::new(q, 8).unwrap();
            let f = ScalarSignal::from_fn(grid, |x| (x[0] * 7.0).sin());
            let whole = f.integral_over(&q);
            let parts: f64 = kids.iter().map(|c| f.integral_over(c)).sum();
            prop_assert!((whole - parts).abs() <= 1e-12 * (1.0 + whole.abs()));
        }

        #[test]
        fn prop_mean_invariant_under_refinement(seed in 0u64..1000) {
            // signal constant on coarse cells, refined grid: same mean values
            let coarse = Grid::new(Cube::line(-1.0, 2.0), 8).unwrap();
            let vals: Vec<f64> = (0..8).map(|i| ((i as u64 * 2654435761 + seed) % 17) as f64 - 8.0).collect();
            let f = ScalarSignal::new(coarse, vals.clone()).unwrap();
            let fine = Grid::new(Cube::line(-1.0, 2.0), 32).unwrap();
            let g = ScalarSignal::from_fn(fine, |x| {
                let i = coarse.cell_of_point(&x).unwrap();
                vals[i[0]]
            });
            let q = Cube::line(-0.37, 0.9);
            prop_assert!((mean_value(&f, &q).unwrap() - mean_value(&g, &q).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn prop_dyadic_containment_matches_geometry(
            level_a in 0u32..4,
            level_b in 0u32..4,
            ia in 0u64..16,
            ib in 0u64..16,
        ) {
            let a = DyadicCube { level: level_a, idx: [ia % (1 << level_a).max(1), 0] };
            let b = DyadicCube { level: level_b, idx: [ib % (1 << level_b).max(1), 0] };
            let tree = DyadicTree::new(Cube::line(0.5, 4.0), 6);
            let (ga, gb) = (tree.cube(&a), tree.cube(&b));
            prop_assert_eq!(a.contains(&b), ga.contains_cube(&gb));
        }
    }
}
