//! Matrix-valued weights on a grid: joint-size constants over the cube
//! family, scalar reductions, reducing operators through ellipsoid
//! gauges, and weighted norm measurements.
//!
//! Every weight stores an eigendecomposition per cell, so fractional
//! powers are exact reassemblies `U diag(lambda^t) U^T`.  The identity
//! weight passes through every pipeline without rounding: its constants
//! come out exactly 1 and the derived integrability exponents exactly
//! `1 + 2^-12` in one dimension.

use crate::body::{mvee_symmetric, sphere_dirs};
use crate::error::{Error, Result};
use crate::grid::{dilate, Cube, Grid, PrefixTable, ScalarSignal, VectorSignal};
use crate::kernels::Kernel;
use crate::linalg::{mat_mul, mat_vec, matrix_power, norm3, operator_norm, sym_eigen, Mat};
use crate::sparse::SparseFamily;
use crate::variation::{hl_maximal_field, variation_field, VariationParams};

#[derive(Debug, Clone)]
pub struct MatrixWeight {
    pub grid: Grid,
    pub n: u8,
    /// Eigenvalues per cell, ascending, all positive.
    vals: Vec<[f64; 3]>,
    /// Matching eigenvector columns per cell.
    vecs: Vec<Mat>,
}

impl MatrixWeight {
    fn from_parts(grid: Grid, n: u8, vals: Vec<[f64; 3]>, vecs: Vec<Mat>) -> Result<Self> {
        if n == 0 || n > 3 {
            return Err(Error::InvalidArgument(format!("matrix dimension {n} out of range")));
        }
        for v in &vals {
            for lam in v.iter().take(n as usize) {
                if !(lam.is_finite() && *lam > 0.0) {
                    return Err(Error::Singularity);
                }
            }
        }
        Ok(MatrixWeight { grid, n, vals, vecs })
    }

    pub fn identity(grid: Grid, n: u8) -> Result<Self> {
        let cells = grid.num_cells();
        let mut vals = vec![[0.0; 3]; cells];
        for v in &mut vals {
            for k in 0..n as usize {
                v[k] = 1.0;
            }
        }
        let mut id = [[0.0; 3]; 3];
        for k in 0..n as usize {
            id[k][k] = 1.0;
        }
        Self::from_parts(grid, n, vals, vec![id; cells])
    }

    /// Constant positive definite weight.
    pub fn constant_pd(grid: Grid, m: &Mat, n: u8) -> Result<Self> {
        let eig = sym_eigen(m, n as usize);
        let cells = grid.num_cells();
        Self::from_parts(grid, n, vec![eig.vals; cells], vec![eig.vecs; cells])
    }

    /// `|x - x0|^alpha` times the identity.  The pole must avoid cell
    /// centers, otherwise a zero eigenvalue is rejected.
    pub fn scalar_power(grid: Grid, n: u8, x0: [f64; 2], alpha: f64) -> Result<Self> {
        let cells = grid.num_cells();
        let mut vals = vec![[0.0; 3]; cells];
        let mut id = [[0.0; 3]; 3];
        for k in 0..n as usize {
            id[k][k] = 1.0;
        }
        for i in 0..cells {
            let x = grid.cell_center(grid.cell_of_linear(i));
            let r = ((x[0] - x0[0]).powi(2) + (x[1] - x0[1]).powi(2)).sqrt();
            let lam = r.powf(alpha);
            for k in 0..n as usize {
                vals[i][k] = lam;
            }
        }
        Self::from_parts(grid, n, vals, vec![id; cells])
    }

    /// Eigenvalues `|x - x0|^alpha_k` in a frame rotating with position:
    /// angle `theta0 + omega (x_1 + x_2)`, in the plane for n = 2 and
    /// about the given axis for n = 3.
    pub fn rotated_diag(
        grid: Grid,
        n: u8,
        x0: [f64; 2],
        alphas: [f64; 3],
        theta0: f64,
        omega: f64,
        axis: usize,
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument("rotation needs dimension 2 or 3".into()));
        }
        if axis >= 3 {
            return Err(Error::InvalidArgument(format!("rotation axis {axis} out of range")));
        }
        let cells = grid.num_cells();
        let mut vals = vec![[0.0; 3]; cells];
        let mut vecs = vec![[[0.0; 3]; 3]; cells];
        for i in 0..cells {
            let x = grid.cell_center(grid.cell_of_linear(i));
            let r = ((x[0] - x0[0]).powi(2) + (x[1] - x0[1]).powi(2)).sqrt();
            for k in 0..n as usize {
                vals[i][k] = r.powf(alphas[k]);
            }
            let t = theta0 + omega * (x[0] + x[1]);
            let (s, c) = t.sin_cos();
            let u = &mut vecs[i];
            if n == 2 {
                u[0][0] = c;
                u[1][0] = s;
                u[0][1] = -s;
                u[1][1] = c;
            } else {
                let (a, b) = match axis {
                    0 => (1, 2),
                    1 => (2, 0),
                    _ => (0, 1),
                };
                u[axis][axis] = 1.0;
                u[a][a] = c;
                u[b][a] = s;
                u[a][b] = -s;
                u[b][b] = c;
            }
        }
        Self::from_parts(grid, n, vals, vecs)
    }

    /// `W(cell)^t` from the cached eigensystem.
    pub fn power_at(&self, cell: [usize; 2], t: f64) -> Mat {
        let i = self.grid.linear(cell);
        let n = self.n as usize;
        let u = &self.vecs[i];
        let lam = &self.vals[i];
        let mut out = [[0.0; 3]; 3];
        for r in 0..n {
            for c in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += u[r][k] * lam[k].powf(t) * u[c][k];
                }
                out[r][c] = s;
            }
        }
        out
    }

    pub fn value_at(&self, cell: [usize; 2]) -> Mat {
        self.power_at(cell, 1.0)
    }

    /// Scalar weight `|W(x)^s e|^exp` along a fixed direction.
    pub fn directional_weight(&self, e: &[f64; 3], s: f64, exp: f64) -> ScalarSignal {
        let grid = self.grid;
        let mut out = ScalarSignal::zeros(grid);
        for i in 0..out.values.len() {
            let cell = grid.cell_of_linear(i);
            let m = self.power_at(cell, s);
            out.values[i] = norm3(&mat_vec(&m, e, self.n as usize)).powf(exp);
        }
        out
    }
}

fn holder_conjugate(p: f64) -> Result<f64> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidArgument(format!("exponent {p} outside (1, infinity)")));
    }
    Ok(p / (p - 1.0))
}

/// The cube family shared by all constants: dyadic cubes of the chosen
/// levels and their triples, as geometric cubes.
fn family_cubes(grid: &Grid, levels: Option<(u32, u32)>) -> Vec<Cube> {
    let (lo, hi) = levels.unwrap_or((0, grid.log2_res()));
    let hi = hi.min(grid.log2_res());
    let tree = grid.tree();
    let mut out = Vec::new();
    for level in lo..=hi {
        for q in tree.cubes_at_level(level) {
            let c = tree.cube(&q);
            out.push(c);
            out.push(dilate(&c, 3.0).expect("triple"));
        }
    }
    out
}

/// Cells of a family cube: exact because family cube corners sit on the
/// cell lattice.
fn clipped_cells(grid: &Grid, q: &Cube) -> Vec<[usize; 2]> {
    match grid.center_box(q) {
        None => Vec::new(),
        Some(b) => b.cells().collect(),
    }
}

/// Joint size constant of a matrix weight over the cube family:
/// `sup_Q avg_x ( avg_t ||W^(1/p)(x) W^(-1/p)(t)||^p' )^(p/p')`.
/// Means are over the cells of `Q` inside the domain.
pub fn ap_constant(w: &MatrixWeight, p: f64, levels: Option<(u32, u32)>) -> Result<f64> {
    let pp = holder_conjugate(p)?;
    let grid = w.grid;
    let n = w.n as usize;
    let mut sup = 0.0f64;
    for q in family_cubes(&grid, levels) {
        let cells = clipped_cells(&grid, &q);
        if cells.is_empty() {
            continue;
        }
        let pos: Vec<Mat> = cells.iter().map(|c| w.power_at(*c, 1.0 / p)).collect();
        let neg: Vec<Mat> = cells.iter().map(|c| w.power_at(*c, -1.0 / p)).collect();
        let nn = cells.len() as f64;
        let mut outer = 0.0;
        for a in &pos {
            let mut inner = 0.0;
            for b in &neg {
                inner += operator_norm(&mat_mul(a, b, n), n).powf(pp);
            }
            outer += (inner / nn).powf(p / pp);
        }
        sup = sup.max(outer / nn);
    }
    Ok(sup)
}

/// Scalar two-weight constant over the same family:
/// `sup_Q (avg w)(avg w^(-1/(p-1)))^(p-1)`.
pub fn scalar_ap_constant(
    weight: &ScalarSignal,
    p: f64,
    levels: Option<(u32, u32)>,
) -> Result<f64> {
    holder_conjugate(p)?;
    let grid = weight.grid;
    let mut sup = 0.0f64;
    for q in family_cubes(&grid, levels) {
        let cells = clipped_cells(&grid, &q);
        if cells.is_empty() {
            continue;
        }
        let nn = cells.len() as f64;
        let mut mw = 0.0;
        let mut md = 0.0;
        for c in &cells {
            let v = weight.value(*c);
            if !(v > 0.0) {
                return Err(Error::Singularity);
            }
            mw += v;
            md += v.powf(-1.0 / (p - 1.0));
        }
        sup = sup.max((mw / nn) * (md / nn).powf(p - 1.0));
    }
    Ok(sup)
}

/// Largest ratio of a directional scalar constant to the matrix constant,
/// over evenly spread unit directions; stays at or under 1 up to rounding.
pub fn scalar_restriction_check(
    w: &MatrixWeight,
    p: f64,
    levels: Option<(u32, u32)>,
    dirs: usize,
) -> Result<f64> {
    let matrix = ap_constant(w, p, levels)?;
    let n = w.n as usize;
    let mut worst: f64 = 0.0;
    for e in probe_directions(n, dirs) {
        let we = w.directional_weight(&e, 1.0 / p, p);
        let scalar = scalar_ap_constant(&we, p, levels)?;
        worst = worst.max(scalar / matrix);
    }
    Ok(worst)
}

fn probe_directions(n: usize, count: usize) -> Vec<[f64; 3]> {
    match n {
        1 => vec![[1.0, 0.0, 0.0]],
        2 => (0..count)
            .map(|k| {
                let t = std::f64::consts::PI * k as f64 / count as f64;
                [t.cos(), t.sin(), 0.0]
            })
            .collect(),
        _ => {
            let all = sphere_dirs(3);
            let stride = (all.len() / count).max(1);
            all.into_iter().step_by(stride).take(count.max(1)).collect()
        }
    }
}

/// Flatness constant of a scalar weight over the family:
/// `sup_Q sum_Q M(w chi_Q) / sum_Q w` with the family maximal operator.
pub fn fujii_wilson(weight: &ScalarSignal, levels: Option<(u32, u32)>) -> Result<f64> {
    let grid = weight.grid;
    let mut sup = 0.0f64;
    for q in family_cubes(&grid, levels) {
        let cells = clipped_cells(&grid, &q);
        if cells.is_empty() {
            continue;
        }
        let cut = weight.restricted_to(&q);
        let m = hl_maximal_field(&cut);
        let mut num = 0.0;
        let mut den = 0.0;
        for c in &cells {
            num += m.value(*c);
            den += weight.value(*c);
        }
        if !(den > 0.0) {
            return Err(Error::Singularity);
        }
        sup = sup.max(num / den);
    }
    Ok(sup)
}

/// Integrability bumps derived from the flatness constants of the
/// directional slices of the weight and of its dual: each equals
/// `1 + 1 / (2^(d+11) a_inf)`.  For the identity weight both flatness
/// constants are exactly 1, so both exponents are exactly `1 + 2^-12`
/// in one dimension.
pub fn rs_exponents(
    w: &MatrixWeight,
    p: f64,
    levels: Option<(u32, u32)>,
    dirs: usize,
) -> Result<(f64, f64)> {
    let pp = holder_conjugate(p)?;
    let d = w.grid.dim() as i32;
    let n = w.n as usize;
    let mut ainf_sc = 0.0f64;
    let mut ainf_dual = 0.0f64;
    for e in probe_directions(n, dirs) {
        let we = w.directional_weight(&e, 1.0 / p, p);
        let wd = w.directional_weight(&e, -1.0 / p, pp);
        ainf_sc = ainf_sc.max(fujii_wilson(&we, levels)?);
        ainf_dual = ainf_dual.max(fujii_wilson(&wd, levels)?);
    }
    let scale = 2f64.powi(d + 11);
    Ok((1.0 + 1.0 / (scale * ainf_dual), 1.0 + 1.0 / (scale * ainf_sc)))
}

/// Ellipsoid gauge standing in for the cell-averaged norm
/// `rho(e) = (avg_Q |W^s e|^exp)^(1/exp)`: the returned matrix satisfies
/// `rho(e) <= |A e|` everywhere, with `|A e| <= sqrt(n) rho(e)` measured
/// on the probe directions.
#[derive(Debug, Clone, Copy)]
pub struct ReducingOperator {
    pub mat: Mat,
    /// min over probes of |A e| / rho(e); at least 1 up to rounding.
    pub min_ratio: f64,
    /// max over probes of |A e| / rho(e); at most sqrt(n) up to the
    /// ellipsoid solver tolerance.
    pub max_ratio: f64,
}

/// `dual = false` uses `(s, exp) = (1/p, p)`; `dual = true` uses the
/// conjugate pair `(-1/p, p')`.
pub fn reducing_operator(
    w: &MatrixWeight,
    q: &Cube,
    p: f64,
    dual: bool,
) -> Result<ReducingOperator> {
    let pp = holder_conjugate(p)?;
    let (s, exp) = if dual { (-1.0 / p, pp) } else { (1.0 / p, p) };
    let grid = w.grid;
    let n = w.n as usize;
    let cells = clipped_cells(&grid, q);
    if cells.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    let powers: Vec<Mat> = cells.iter().map(|c| w.power_at(*c, s)).collect();
    let nn = cells.len() as f64;
    let rho = |e: &[f64; 3]| -> f64 {
        let mut acc = 0.0;
        for m in &powers {
            acc += norm3(&mat_vec(m, e, n)).powf(exp);
        }
        (acc / nn).powf(1.0 / exp)
    };
    if n == 1 {
        let r = rho(&[1.0, 0.0, 0.0]);
        let mut mat = [[0.0; 3]; 3];
        mat[0][0] = r;
        return Ok(ReducingOperator { mat, min_ratio: 1.0, max_ratio: 1.0 });
    }
    let probes = sphere_dirs(n);
    let mut points = Vec::with_capacity(probes.len());
    for u in &probes {
        let r = rho(u);
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Singularity);
        }
        points.push([u[0] / r, u[1] / r, u[2] / r]);
    }
    let x = mvee_symmetric(&points, n, 1e-9, 100_000)?;
    // gauge of {x^T X^-1 x <= 1}, which sits inside the hull of the
    // boundary points, so the gauge dominates rho everywhere
    let mat = matrix_power(&x, n, -0.5)?;
    let mut min_ratio = f64::MAX;
    let mut max_ratio = 0.0f64;
    for u in &probes {
        let ratio = norm3(&mat_vec(&mat, u, n)) / rho(u);
        min_ratio = min_ratio.min(ratio);
        max_ratio = max_ratio.max(ratio);
    }
    Ok(ReducingOperator { mat, min_ratio, max_ratio })
}

/// Operator norm of the product of the two reducing operators on a cube;
/// duality keeps it at or above 1.
pub fn reducing_pair_norm(w: &MatrixWeight, q: &Cube, p: f64) -> Result<f64> {
    let a = reducing_operator(w, q, p, false)?;
    let b = reducing_operator(w, q, p, true)?;
    Ok(operator_norm(&mat_mul(&a.mat, &b.mat, w.n as usize), w.n as usize))
}

/// `( sum_cells |W^(1/p)(x) f(x)|^p cellvol )^(1/p)`.
pub fn weighted_lp_norm(f: &VectorSignal, w: &MatrixWeight, p: f64) -> Result<f64> {
    holder_conjugate(p)?;
    if f.n != w.n {
        return Err(Error::DimensionMismatch(format!(
            "signal dimension {} vs weight dimension {}",
            f.n, w.n
        )));
    }
    let grid = f.grid;
    let n = w.n as usize;
    let mut acc = 0.0;
    for i in 0..f.values.len() {
        let cell = grid.cell_of_linear(i);
        let m = w.power_at(cell, 1.0 / p);
        acc += norm3(&mat_vec(&m, &f.values[i], n)).powf(p) * grid.cell_volume();
    }
    Ok(acc.powf(1.0 / p))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedBoundReport {
    /// Weighted norm of the componentwise variation field.
    pub numerator: f64,
    /// Weighted norm of the input.
    pub denominator: f64,
    pub ap: f64,
    /// numerator / (denominator * ap^(1 + 1/(p-1) - 1/p)).
    pub normalized: f64,
}

/// Measures the weighted strength of the variation operator on one
/// instance, normalized by the expected power of the joint size constant.
pub fn verify_weighted_bound(
    k: &Kernel,
    f: &VectorSignal,
    vp: &VariationParams,
    w: &MatrixWeight,
    p: f64,
    levels: Option<(u32, u32)>,
) -> Result<WeightedBoundReport> {
    let grid = f.grid;
    let n = f.n as usize;
    let mut var = VectorSignal::zeros(grid, f.n);
    for j in 0..n {
        let comp = variation_field(k, &f.component(j), vp)?;
        for (out, v) in var.values.iter_mut().zip(&comp.values) {
            out[j] = *v;
        }
    }
    let numerator = weighted_lp_norm(&var, w, p)?;
    let denominator = weighted_lp_norm(f, w, p)?;
    if !(denominator > 0.0) {
        return Err(Error::InvalidArgument("weighted norm of the input vanishes".into()));
    }
    let ap = ap_constant(w, p, levels)?;
    let beta = 1.0 + 1.0 / (p - 1.0) - 1.0 / p;
    let normalized = numerator / (denominator * ap.powf(beta));
    Ok(WeightedBoundReport { numerator, denominator, ap, normalized })
}

/// Both sides of the pairing identity for the sparse averaging operator
/// with unit bump profiles: integrating `sum_S <f>_S chi_S` against `g`
/// equals `sum_S <f>_S <g>_S |S|`.  Means are signed and zero extended.
pub fn dual_pairing_check(
    f: &ScalarSignal,
    g: &ScalarSignal,
    family: &SparseFamily,
) -> (f64, f64) {
    let grid = f.grid;
    let pf = PrefixTable::new(&grid, |c| f.value(c));
    let pg = PrefixTable::new(&grid, |c| g.value(c));
    let cellvol = grid.cell_volume();
    let mut field = ScalarSignal::zeros(grid);
    let mut rhs = 0.0;
    for member in family.members(&grid) {
        if let Some(b) = grid.center_box(&member) {
            let mean_f = pf.box_sum(&b) * cellvol / member.volume();
            rhs += mean_f * pg.box_sum(&b) * cellvol;
            for cell in b.cells() {
                field.values[grid.linear(cell)] += mean_f;
            }
        }
    }
    let mut lhs = 0.0;
    for (t, gv) in field.values.iter().zip(&g.values) {
        lhs += t * gv * cellvol;
    }
    (lhs, rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DyadicCube;
    use crate::kernels::TruncationLadder;
    use crate::linalg::{dot3, transpose};
    use crate::sparse::{build_sparse_family, SparseConfig};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn line_grid(res: usize) -> Grid {
        Grid::new(Cube::line(0.0, 4.0), res).unwrap()
    }

    #[test]
    fn identity_constant_is_exactly_one() {
        for n in 1..=3u8 {
            let w = MatrixWeight::identity(line_grid(32), n).unwrap();
            for p in [2.0, 3.0] {
                assert_eq!(ap_constant(&w, p, None).unwrap(), 1.0);
            }
        }
        let grid2 = Grid::new(Cube::square([0.0, 0.0], 4.0), 8).unwrap();
        let w = MatrixWeight::identity(grid2, 2).unwrap();
        assert_eq!(ap_constant(&w, 2.0, None).unwrap(), 1.0);
    }

    #[test]
    fn constant_weight_constant_is_one_up_to_rounding() {
        let theta: f64 = 0.7;
        let (s, c) = theta.sin_cos();
        let u = [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 0.0]];
        let lam = [[2.0, 0.0, 0.0], [0.0, 5.0, 0.0], [0.0, 0.0, 0.0]];
        let m = mat_mul(&mat_mul(&u, &lam, 2), &transpose(&u, 2), 2);
        let w = MatrixWeight::constant_pd(line_grid(16), &m, 2).unwrap();
        let ap = ap_constant(&w, 2.0, None).unwrap();
        assert!((ap - 1.0).abs() < 1e-12, "ap {ap}");
    }

    #[test]
    fn power_weight_constant_grows_with_the_exponent() {
        let grid = line_grid(64);
        let w1 = MatrixWeight::scalar_power(grid, 2, [-0.001, 0.0], 0.5).unwrap();
        let w2 = MatrixWeight::scalar_power(grid, 2, [-0.001, 0.0], 1.5).unwrap();
        let a1 = ap_constant(&w1, 2.0, None).unwrap();
        let a2 = ap_constant(&w2, 2.0, None).unwrap();
        assert!(a1 > 1.0);
        assert!(a2 > a1);
    }

    #[test]
    fn directional_constants_stay_under_the_matrix_constant() {
        let grid = line_grid(32);
        for w in [
            MatrixWeight::scalar_power(grid, 2, [-0.001, 0.0], 0.8).unwrap(),
            MatrixWeight::rotated_diag(grid, 2, [-0.001, 0.0], [0.6, -0.4, 0.0], 0.3, 0.5, 2)
                .unwrap(),
        ] {
            let worst = scalar_restriction_check(&w, 2.0, None, 64).unwrap();
            assert!(worst <= 1.0 + 1e-9, "restriction ratio {worst}");
        }
    }

    #[test]
    fn flat_weight_flatness_is_exactly_one() {
        let grid = line_grid(32);
        let mut w = ScalarSignal::zeros(grid);
        for v in &mut w.values {
            *v = 1.0;
        }
        assert_eq!(fujii_wilson(&w, None).unwrap(), 1.0);
    }

    #[test]
    fn identity_exponents_are_exact() {
        let w = MatrixWeight::identity(line_grid(32), 2).unwrap();
        let (r, s) = rs_exponents(&w, 2.0, None, 16).unwrap();
        let expect = 1.0 + 2f64.powi(-12);
        assert_eq!(r, expect);
        assert_eq!(s, expect);
    }

    #[test]
    fn reducing_operator_certificates() {
        let grid = line_grid(32);
        let q = Cube::line(0.0, 2.0);
        let id = MatrixWeight::identity(grid, 2).unwrap();
        let a = reducing_operator(&id, &q, 2.0, false).unwrap();
        assert!(a.min_ratio >= 1.0 - 1e-12, "min {}", a.min_ratio);
        assert!(a.max_ratio <= 2f64.sqrt() * (1.0 + 1e-6), "max {}", a.max_ratio);
        let pair = reducing_pair_norm(&id, &q, 2.0).unwrap();
        assert!(pair >= 1.0 - 1e-6);

        let w = MatrixWeight::rotated_diag(grid, 2, [-0.001, 0.0], [0.7, -0.3, 0.0], 0.2, 0.4, 2)
            .unwrap();
        for dual in [false, true] {
            let r = reducing_operator(&w, &q, 2.0, dual).unwrap();
            assert!(r.min_ratio >= 1.0 - 1e-9, "min {}", r.min_ratio);
            assert!(r.max_ratio <= 2f64.sqrt() * (1.0 + 1e-6), "max {}", r.max_ratio);
        }
        assert!(reducing_pair_norm(&w, &q, 2.0).unwrap() >= 1.0 - 1e-6);
    }

    #[test]
    fn weighted_norm_reduces_to_plain_lp_for_identity() {
        let grid = line_grid(16);
        let mut f = VectorSignal::zeros(grid, 2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for v in f.values.iter_mut() {
            *v = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), 0.0];
        }
        let w = MatrixWeight::identity(grid, 2).unwrap();
        let got = weighted_lp_norm(&f, &w, 2.0).unwrap();
        let expect = f.lp_norm(2.0);
        assert!((got - expect).abs() < 1e-12 * (1.0 + expect));
    }

    #[test]
    fn rotation_frames_are_orthogonal() {
        let grid = line_grid(16);
        let w =
            MatrixWeight::rotated_diag(grid, 3, [-0.001, 0.0], [0.5, -0.2, 0.1], 0.3, 0.7, 1)
                .unwrap();
        for i in 0..grid.num_cells() {
            let cell = grid.cell_of_linear(i);
            let m = w.power_at(cell, 1.0);
            let minv = w.power_at(cell, -1.0);
            let prod = mat_mul(&m, &minv, 3);
            for r in 0..3 {
                for c in 0..3 {
                    let expect = if r == c { 1.0 } else { 0.0 };
                    assert!((prod[r][c] - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn weighted_bound_report_is_finite() {
        let grid = Grid::new(Cube::line(-2.0, 4.0), 64).unwrap();
        let mut f = VectorSignal::zeros(grid, 2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        for v in f.values.iter_mut() {
            if rng.gen_bool(0.4) {
                *v = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), 0.0];
            }
        }
        let w = MatrixWeight::rotated_diag(grid, 2, [-2.001, 0.0], [0.4, -0.3, 0.0], 0.1, 0.3, 2)
            .unwrap();
        let ladder = TruncationLadder::for_grid(&grid, 5).unwrap();
        let vp = VariationParams::new(2.5, ladder).unwrap();
        let rep =
            verify_weighted_bound(&Kernel::hilbert(), &f, &vp, &w, 2.0, Some((0, 4))).unwrap();
        assert!(rep.numerator.is_finite() && rep.numerator > 0.0);
        assert!(rep.denominator > 0.0);
        assert!(rep.ap >= 1.0);
        assert!(rep.normalized.is_finite() && rep.normalized > 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn pairing_identity_holds(seed in 0u64..500) {
            let grid = Grid::new(Cube::line(0.0, 4.0), 64).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut f = ScalarSignal::zeros(grid);
            let mut g = ScalarSignal::zeros(grid);
            for v in &mut f.values {
                if rng.gen_bool(0.5) { *v = rng.gen_range(-4.0f64..4.0); }
            }
            for v in &mut g.values {
                if rng.gen_bool(0.5) { *v = rng.gen_range(-4.0f64..4.0); }
            }
            if f.l1_norm() == 0.0 {
                return Ok(());
            }
            let cfg = SparseConfig::new(0.5, 8.0).unwrap();
            let k = Kernel::hilbert();
            let ladder = TruncationLadder::for_grid(&grid, 5).unwrap();
            let vp = VariationParams::new(3.0, ladder).unwrap();
            let family = build_sparse_family(&k, &f, &vp, DyadicCube::root(), &cfg).unwrap();
            let (lhs, rhs) = dual_pairing_check(&f, &g, &family);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs().max(rhs.abs())),
                "lhs {lhs} rhs {rhs}");
        }

        #[test]
        fn probe_directions_are_unit(n in 1usize..4, count in 4usize..80) {
            for e in probe_directions(n, count) {
                prop_assert!((dot3(&e, &e) - 1.0).abs() < 1e-9);
            }
        }
    }
}
