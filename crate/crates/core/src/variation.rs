//! Variation seminorms of truncation ladders and the maximal operators
//! built on the dyadic cube family.
//!
//! The cube family used by every maximal operator here is the set of dyadic
//! cubes of the grid's tree together with their 3-fold dilates.  A point is
//! credited with the mean over every family member containing it.  Sups over
//! this family are certified lower bounds for the sup over all axis-parallel
//! cubes; the equivalence factor is at most `6^d` and is checked against a
//! brute-force oracle in tests rather than assumed.

use crate::error::{Error, Result};
use crate::grid::{dilate, Cube, DyadicCube, Grid, IndexBox, PrefixTable, ScalarSignal, VectorSignal};
use crate::kernels::{accumulate_ladder, truncated_ladder_values, Kernel, TruncationLadder};
use rayon::prelude::*;

/// Parameters for variation operators: the variation exponent and the
/// truncation ladder it is evaluated over.
#[derive(Clone, Debug)]
pub struct VariationParams {
    pub rho: f64,
    pub ladder: TruncationLadder,
}

impl VariationParams {
    /// `rho` must exceed 2; the ladder is validated on construction.
    pub fn new(rho: f64, ladder: TruncationLadder) -> Result<Self> {
        if !(rho > 2.0) {
            return Err(Error::InvalidArgument(format!(
                "variation exponent must exceed 2, got {rho}"
            )));
        }
        Ok(Self { rho, ladder })
    }
}

/// Parameters shared by the maximal-operator based estimates: the dilation
/// exponent `r > 1`, the Lebesgue exponent `p` in (1, inf), and an optional
/// inclusive range of tree levels to scan (all levels when `None`).
#[derive(Clone, Copy, Debug)]
pub struct MaximalParams {
    pub r: f64,
    pub p: f64,
    pub levels: Option<(u32, u32)>,
}

impl MaximalParams {
    pub fn new(r: f64, p: f64) -> Result<Self> {
        if !(r > 1.0) {
            return Err(Error::InvalidArgument(format!("r must exceed 1, got {r}")));
        }
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::InvalidArgument(format!("p must lie in (1, inf), got {p}")));
        }
        Ok(Self { r, p, levels: None })
    }

    pub fn with_levels(mut self, lo: u32, hi: u32) -> Self {
        self.levels = Some((lo, hi));
        self
    }

    /// Conjugate exponent p/(p-1).
    pub fn p_prime(&self) -> f64 {
        self.p / (self.p - 1.0)
    }
}

/// Largest value of `sum |a_{j_{k+1}} - a_{j_k}|^rho` over increasing index
/// subsequences, raised to `1/rho`.  Dynamic program over end indices,
/// quadratic in the length.  Requires `rho > 1` and a nonempty slice.
pub fn rho_variation(a: &[f64], rho: f64) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::InvalidArgument("variation of an empty sequence".into()));
    }
    if !(rho > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "variation exponent must exceed 1, got {rho}"
        )));
    }
    let idx = extrema_indices(a);
    Ok(rho_variation_on(a, &idx, rho))
}

/// Full quadratic dynamic program over every index.  The fast path in
/// `rho_variation` restricts the same recursion to local extrema; this
/// entry point exists so tests can compare the two.
pub fn rho_variation_dp(a: &[f64], rho: f64) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::InvalidArgument("variation of an empty sequence".into()));
    }
    if !(rho > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "variation exponent must exceed 1, got {rho}"
        )));
    }
    let idx: Vec<usize> = (0..a.len()).collect();
    Ok(rho_variation_on(a, &idx, rho))
}

/// DP restricted to the index subset `idx` (ascending).  `best[j]` is the
/// largest sum for a subsequence ending at `idx[j]`; the answer is the max
/// over end points.
fn rho_variation_on(a: &[f64], idx: &[usize], rho: f64) -> f64 {
    let m = idx.len();
    if m < 2 {
        return 0.0;
    }
    let mut best = vec![0.0f64; m];
    let mut ans = 0.0f64;
    for j in 1..m {
        let aj = a[idx[j]];
        let mut bj = 0.0f64;
        for i in 0..j {
            let cand = best[i] + (aj - a[idx[i]]).abs().powf(rho);
            if cand > bj {
                bj = cand;
            }
        }
        best[j] = bj;
        if bj > ans {
            ans = bj;
        }
    }
    ans.powf(1.0 / rho)
}

/// Indices of the first point, the last point, and every strict local
/// extremum, with plateaus collapsed to a single representative.  For
/// `rho >= 1` an optimal subsequence never needs interior points of a
/// monotone run, so the DP restricted to these indices is exact.
pub fn extrema_indices(a: &[f64]) -> Vec<usize> {
    let m = a.len();
    if m <= 2 {
        return (0..m).collect();
    }
    let mut idx = vec![0usize];
    // Direction of the last completed move: +1 rising, -1 falling, 0 none.
    let mut dir = 0i8;
    for j in 1..m {
        let prev = a[*idx.last().unwrap()];
        if a[j] == prev {
            continue;
        }
        let d = if a[j] > prev { 1i8 } else { -1i8 };
        if d == dir {
            *idx.last_mut().unwrap() = j;
        } else {
            idx.push(j);
            dir = d;
        }
    }
    idx
}

/// Variation of the truncation ladder of `T f` at `x`.
pub fn variation_operator(
    k: &Kernel,
    f: &ScalarSignal,
    vp: &VariationParams,
    x: &[f64; 2],
) -> Result<f64> {
    let vals = truncated_ladder_values(k, f, &vp.ladder, x)?;
    rho_variation(&vals, vp.rho)
}

/// `variation_operator` at every cell center.
pub fn variation_field(k: &Kernel, f: &ScalarSignal, vp: &VariationParams) -> Result<ScalarSignal> {
    vp.ladder.check_floor(&f.grid)?;
    let grid = f.grid.clone();
    let cells: Vec<[usize; 2]> = (0..grid.num_cells()).map(|i| grid.cell_of_linear(i)).collect();
    let values = cells
        .par_iter()
        .map(|cell| {
            let x = grid.cell_center(*cell);
            variation_operator(k, f, vp, &x)
        })
        .collect::<Result<Vec<f64>>>()?;
    ScalarSignal::new(grid, values)
}

/// Componentwise variation of a vector signal: component `k` of the output
/// is the variation of the ladder of `T f_k`.
pub fn vector_variation(
    k: &Kernel,
    f: &VectorSignal,
    vp: &VariationParams,
    x: &[f64; 2],
) -> Result<[f64; 3]> {
    let mut out = [0.0f64; 3];
    for c in 0..f.n as usize {
        let comp = f.component(c);
        out[c] = variation_operator(k, &comp, vp, x)?;
    }
    Ok(out)
}

/// Euclidean length of `vector_variation` at every cell center.
pub fn vector_variation_norm_field(
    k: &Kernel,
    f: &VectorSignal,
    vp: &VariationParams,
) -> Result<ScalarSignal> {
    vp.ladder.check_floor(&f.grid)?;
    let grid = f.grid.clone();
    let n = f.n as usize;
    let comps: Vec<ScalarSignal> = (0..n).map(|c| f.component(c)).collect();
    let cells: Vec<[usize; 2]> = (0..grid.num_cells()).map(|i| grid.cell_of_linear(i)).collect();
    let values = cells
        .par_iter()
        .map(|cell| {
            let x = grid.cell_center(*cell);
            let mut s = 0.0f64;
            for comp in &comps {
                let v = variation_operator(k, comp, vp, &x)?;
                s += v * v;
            }
            Ok(s.sqrt())
        })
        .collect::<Result<Vec<f64>>>()?;
    ScalarSignal::new(grid, values)
}

/// Componentwise variation values assembled back into a vector field.
pub fn vector_variation_field(
    k: &Kernel,
    f: &VectorSignal,
    vp: &VariationParams,
) -> Result<VectorSignal> {
    vp.ladder.check_floor(&f.grid)?;
    let grid = f.grid.clone();
    let n = f.n as usize;
    let comps: Vec<ScalarSignal> = (0..n).map(|c| f.component(c)).collect();
    let cells: Vec<[usize; 2]> = (0..grid.num_cells()).map(|i| grid.cell_of_linear(i)).collect();
    let values = cells
        .par_iter()
        .map(|cell| {
            let x = grid.cell_center(*cell);
            let mut v = [0.0f64; 3];
            for (c, comp) in comps.iter().enumerate() {
                v[c] = variation_operator(k, comp, vp, &x)?;
            }
            Ok(v)
        })
        .collect::<Result<Vec<[f64; 3]>>>()?;
    VectorSignal::new(grid, f.n, values)
}

/// Inclusive level range to scan, clamped to the grid.
fn level_range(grid: &Grid, levels: Option<(u32, u32)>) -> (u32, u32) {
    let max = grid.log2_res();
    match levels {
        None => (0, max),
        Some((lo, hi)) => (lo.min(max), hi.min(max)),
    }
}

/// Per-cell sup of family means of a nonnegative cell density.  The mean
/// over a dilated cube divides by the full dilated volume, so mass outside
/// the domain counts as zero.
fn maximal_field_cells(grid: &Grid, density: &[f64], levels: Option<(u32, u32)>) -> Vec<f64> {
    let table = PrefixTable::new(grid, |cell| density[grid.linear(cell)]);
    let (lo_lvl, hi_lvl) = level_range(grid, levels);
    let d = grid.dim() as u32;
    let res = grid.res;
    let mut out = vec![0.0f64; grid.num_cells()];
    for level in lo_lvl..=hi_lvl {
        let cubes_per_axis = 1usize << level;
        let span = res >> level;
        let slots = if d == 1 { cubes_per_axis } else { cubes_per_axis * cubes_per_axis };
        // Plain and dilated means per cube slot at this level.
        let mut vq = vec![0.0f64; slots];
        let mut v3 = vec![0.0f64; slots];
        for s in 0..slots {
            let (ix, iy) = if d == 1 { (s, 0) } else { (s % cubes_per_axis, s / cubes_per_axis) };
            let lo = [ix * span, iy * span];
            let hi = [lo[0] + span, if d == 1 { 1 } else { lo[1] + span }];
            let bx = IndexBox { lo, hi, dim: d as u8 };
            let count = bx.count() as f64;
            vq[s] = table.box_sum(&bx) / count;
            // The dilate spans three cube widths per axis, clipped to the
            // grid; the normalizer stays at the full 3^d count.
            let lo3 = [lo[0].saturating_sub(span), lo[1].saturating_sub(span)];
            let hi3 = [
                (hi[0] + span).min(res),
                if d == 1 { 1 } else { (hi[1] + span).min(res) },
            ];
            let bx3 = IndexBox { lo: lo3, hi: hi3, dim: d as u8 };
            v3[s] = table.box_sum(&bx3) / (count * 3f64.powi(d as i32));
        }
        for c in 0..grid.num_cells() {
            let cell = grid.cell_of_linear(c);
            let jx = cell[0] >> (grid.log2_res() - level);
            let jy = if d == 1 { 0 } else { cell[1] >> (grid.log2_res() - level) };
            let slot = |x: usize, y: usize| if d == 1 { x } else { y * cubes_per_axis + x };
            let mut m = vq[slot(jx, jy)];
            let xlo = jx.saturating_sub(1);
            let xhi = (jx + 1).min(cubes_per_axis - 1);
            let (ylo, yhi) = if d == 1 { (0, 0) } else { (jy.saturating_sub(1), (jy + 1).min(cubes_per_axis - 1)) };
            for iy in ylo..=yhi {
                for ix in xlo..=xhi {
                    let v = v3[slot(ix, iy)];
                    if v > m {
                        m = v;
                    }
                }
            }
            if m > out[c] {
                out[c] = m;
            }
        }
    }
    out
}

/// Family means of `|f|` containing `x`, maximized.  Zero outside the domain.
pub fn hl_maximal(f: &ScalarSignal, x: &[f64; 2]) -> f64 {
    match f.grid.cell_of_point(x) {
        None => 0.0,
        Some(cell) => hl_maximal_field(f).value(cell),
    }
}

/// `hl_maximal` at every cell center.
pub fn hl_maximal_field(f: &ScalarSignal) -> ScalarSignal {
    hl_maximal_field_levels(f, None)
}

/// `hl_maximal_field` restricted to an inclusive tree-level range.
pub fn hl_maximal_field_levels(f: &ScalarSignal, levels: Option<(u32, u32)>) -> ScalarSignal {
    let density: Vec<f64> = f.values.iter().map(|v| v.abs()).collect();
    let vals = maximal_field_cells(&f.grid, &density, levels);
    ScalarSignal::new(f.grid.clone(), vals).unwrap()
}

/// Power-mean maximal value of `|f|` at `x`: the family sup of
/// `(mean of |f|^exponent)^(1/exponent)`.  Requires `exponent >= 1`.
pub fn power_maximal(f: &VectorSignal, exponent: f64, x: &[f64; 2]) -> Result<f64> {
    let field = power_maximal_field(f, exponent)?;
    Ok(match f.grid.cell_of_point(x) {
        None => 0.0,
        Some(cell) => field.value(cell),
    })
}

/// `power_maximal` at every cell center.
pub fn power_maximal_field(f: &VectorSignal, exponent: f64) -> Result<ScalarSignal> {
    power_maximal_field_levels(f, exponent, None)
}

pub fn power_maximal_field_levels(
    f: &VectorSignal,
    exponent: f64,
    levels: Option<(u32, u32)>,
) -> Result<ScalarSignal> {
    if !(exponent >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "power mean exponent must be at least 1, got {exponent}"
        )));
    }
    let norm = f.norm_signal();
    let density: Vec<f64> = norm.values.iter().map(|v| v.powf(exponent)).collect();
    let mut vals = maximal_field_cells(&f.grid, &density, levels);
    for v in &mut vals {
        *v = v.powf(1.0 / exponent);
    }
    ScalarSignal::new(f.grid.clone(), vals)
}

/// Shared engine for the grand maximal fields.  `sig` is the signal the
/// truncations act on (already restricted for the local variant) and `root`
/// the dyadic cube the sup is taken under.  For each dyadic `Q` with
/// `x in Q subset root`, the score of `Q` is the max over cell centers
/// `xi in Q` of the ladder variation of `T` applied to `sig` cut down to
/// the complement of `3Q`; the field at a cell is the max score over the
/// chain of ancestors.
///
/// Ladder values of the cut signal are recovered as full-signal values
/// minus the accumulation over the cells of `3Q`, which is exact because
/// every ladder value is a plain sum over source cells.
fn grand_maximal_field_impl(
    k: &Kernel,
    sig: &ScalarSignal,
    vp: &VariationParams,
    root: DyadicCube,
) -> Result<ScalarSignal> {
    let grid = &sig.grid;
    vp.ladder.check_floor(grid)?;
    let m = vp.ladder.len();
    let root_box = grid.dyadic_box(&root);
    let root_cells: Vec<[usize; 2]> = root_box.cells().collect();
    let cell_index: std::collections::HashMap<[usize; 2], usize> =
        root_cells.iter().enumerate().map(|(i, c)| (*c, i)).collect();

    // Full-signal ladder accumulations at every evaluation point.
    let full: Vec<Vec<f64>> = root_cells
        .par_iter()
        .map(|cell| {
            let x = grid.cell_center(*cell);
            let mut diffs = vec![0.0f64; m];
            accumulate_ladder(k, sig, &vp.ladder, &x, &mut diffs);
            let mut acc = 0.0f64;
            diffs
                .iter()
                .map(|d| {
                    acc += d;
                    acc
                })
                .collect()
        })
        .collect();

    let mut field = vec![0.0f64; root_cells.len()];
    let mut level_cubes = vec![root];
    while let Some(first) = level_cubes.first() {
        if first.level > grid.log2_res() {
            break;
        }
        let scores: Vec<(IndexBox, f64)> = level_cubes
            .par_iter()
            .map(|q| {
                let qbox = grid.dyadic_box(q);
                let qcube = grid.tree().cube(q);
                let q3 = dilate(&qcube, 3.0).unwrap();
                let inner = grid.center_box(&q3);
                let mut ladder = vec![0.0f64; m];
                let mut diffs = vec![0.0f64; m];
                let mut best = 0.0f64;
                for cell in qbox.cells() {
                    let x = grid.cell_center(cell);
                    diffs.iter_mut().for_each(|d| *d = 0.0);
                    if let Some(ib) = &inner {
                        accumulate_box(k, sig, &vp.ladder, &x, ib, &mut diffs);
                    }
                    let fx = &full[cell_index[&cell]];
                    let mut acc = 0.0f64;
                    for j in 0..m {
                        acc += diffs[j];
                        ladder[j] = fx[j] - acc;
                    }
                    let v = rho_variation(&ladder, vp.rho)?;
                    if v > best {
                        best = v;
                    }
                }
                Ok((qbox, best))
            })
            .collect::<Result<Vec<_>>>()?;
        for (qbox, best) in &scores {
            for cell in qbox.cells() {
                let i = cell_index[&cell];
                if *best > field[i] {
                    field[i] = *best;
                }
            }
        }
        level_cubes = level_cubes
            .iter()
            .flat_map(|q| q.children(grid.dim()))
            .collect();
    }

    let mut out = vec![0.0f64; grid.num_cells()];
    for (i, cell) in root_cells.iter().enumerate() {
        out[grid.linear(*cell)] = field[i];
    }
    ScalarSignal::new(grid.clone(), out)
}

/// Ladder accumulation restricted to source cells inside `ib`.
fn accumulate_box(
    k: &Kernel,
    f: &ScalarSignal,
    ladder: &TruncationLadder,
    x: &[f64; 2],
    ib: &IndexBox,
    diffs: &mut [f64],
) {
    let grid = &f.grid;
    let vol = grid.cell_volume();
    for cell in ib.cells() {
        let v = f.value(cell);
        if v == 0.0 {
            continue;
        }
        let y = grid.cell_center(cell);
        let mut r2 = 0.0f64;
        for a in 0..grid.dim() {
            let d = x[a] - y[a];
            r2 += d * d;
        }
        let r = r2.sqrt();
        let k0 = ladder.eps.partition_point(|e| *e >= r);
        if k0 >= diffs.len() {
            continue;
        }
        let kv = crate::kernels::kernel_eval(k, x, &y).unwrap_or(0.0);
        diffs[k0] += kv * v * vol;
    }
}

/// Grand maximal function relative to a dyadic cube `q0`:
/// zero off `q0`, and on `q0` the chain sup described in
/// `grand_maximal_field_impl` with the signal first cut to `3 q0`.
pub fn local_grand_maximal(
    k: &Kernel,
    f: &ScalarSignal,
    vp: &VariationParams,
    q0: &Cube,
    x: &[f64; 2],
) -> Result<f64> {
    let field = local_grand_maximal_field(k, f, vp, q0)?;
    Ok(match f.grid.cell_of_point(x) {
        None => 0.0,
        Some(cell) => {
            if q0.contains_point(x) {
                field.value(cell)
            } else {
                0.0
            }
        }
    })
}

/// Field version of `local_grand_maximal`; cells outside `q0` hold zero.
pub fn local_grand_maximal_field(
    k: &Kernel,
    f: &ScalarSignal,
    vp: &VariationParams,
    q0: &Cube,
) -> Result<ScalarSignal> {
    let root = f.grid.locate_dyadic(q0)?;
    let q3 = dilate(q0, 3.0)?;
    let sig = f.restricted_to(&q3);
    grand_maximal_field_impl(k, &sig, vp, root)
}

/// Global variant: the signal is not pre-cut and the sup runs over every
/// dyadic cube of the tree containing the point.
pub fn global_grand_maximal(
    k: &Kernel,
    f: &ScalarSignal,
    vp: &VariationParams,
    x: &[f64; 2],
) -> Result<f64> {
    let field = global_grand_maximal_field(k, f, vp)?;
    Ok(match f.grid.cell_of_point(x) {
        None => 0.0,
        Some(cell) => field.value(cell),
    })
}

pub fn global_grand_maximal_field(
    k: &Kernel,
    f: &ScalarSignal,
    vp: &VariationParams,
) -> Result<ScalarSignal> {
    let root = DyadicCube::root();
    grand_maximal_field_impl(k, f, vp, root)
}

/// Exact value of `sup_{lambda>0} lambda |{g > lambda}| / ||f||_1` for cell
/// signals.  The sup over lambda is attained in the limit at the distinct
/// values of `g`, so it is computed from the sorted values directly.
pub fn weak_norm_estimate(g: &ScalarSignal, f: &ScalarSignal) -> Result<f64> {
    let l1 = f.l1_norm();
    if l1 <= 0.0 {
        return Err(Error::InvalidArgument("weak norm against a zero signal".into()));
    }
    let vol = g.grid.cell_volume();
    let mut vals: Vec<f64> = g.values.clone();
    vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut best = 0.0f64;
    let mut i = 0usize;
    while i < vals.len() {
        let v = vals[i];
        let mut e = i;
        while e + 1 < vals.len() && vals[e + 1] == v {
            e += 1;
        }
        if v > 0.0 {
            // |{g >= v}| = |{g > lambda}| for lambda just below v.
            let measure = (e + 1) as f64 * vol;
            let cand = v * measure;
            if cand > best {
                best = cand;
            }
        }
        i = e + 1;
    }
    Ok(best / l1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Cube, Grid};
    use crate::kernels::{truncated_apply, Kernel};
    use proptest::prelude::*;

    fn brute_variation(a: &[f64], rho: f64) -> f64 {
        // Every subset of indices, kept in increasing order.
        let m = a.len();
        assert!(m <= 16);
        let mut best = 0.0f64;
        for mask in 0u32..(1 << m) {
            let mut prev: Option<f64> = None;
            let mut s = 0.0f64;
            for j in 0..m {
                if mask & (1 << j) != 0 {
                    if let Some(p) = prev {
                        s += (a[j] - p).abs().powf(rho);
                    }
                    prev = Some(a[j]);
                }
            }
            if s > best {
                best = s;
            }
        }
        best.powf(1.0 / rho)
    }

    #[test]
    fn variation_examples() {
        let v = rho_variation(&[0.0, 1.0, 3.0], 3.0).unwrap();
        assert!((v - 3.0).abs() < 1e-12);
        let v = rho_variation(&[0.0, 1.0, 0.0, 1.0], 2.0).unwrap();
        assert!((v - 3f64.sqrt()).abs() < 1e-12);
        let v = rho_variation(&[5.0; 7], 2.5).unwrap();
        assert_eq!(v, 0.0);
        assert!(rho_variation(&[], 3.0).is_err());
        assert!(rho_variation(&[1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn extrema_scan_shapes() {
        assert_eq!(extrema_indices(&[0.0, 1.0, 1.0, 0.0]), vec![0, 1, 3]);
        assert_eq!(extrema_indices(&[2.0, 2.0, 2.0]), vec![0]);
        assert_eq!(extrema_indices(&[0.0, 1.0, 2.0, 3.0]), vec![0, 3]);
        assert_eq!(extrema_indices(&[3.0, 1.0, 2.0, 0.0]), vec![0, 1, 2, 3]);
    }

    proptest! {
        #[test]
        fn dp_matches_enumeration(a in prop::collection::vec(-10.0f64..10.0, 1..11),
                                  rho in 1.5f64..4.0) {
            let dp = rho_variation_dp(&a, rho).unwrap();
            let brute = brute_variation(&a, rho);
            prop_assert!((dp - brute).abs() <= 1e-12 * (1.0 + brute));
        }

        #[test]
        fn extrema_path_matches_dp(a in prop::collection::vec(-5.0f64..5.0, 1..40),
                                   rho in prop::sample::select(vec![2.5f64, 3.0, 4.0])) {
            let fast = rho_variation(&a, rho).unwrap();
            let dp = rho_variation_dp(&a, rho).unwrap();
            prop_assert!((fast - dp).abs() <= 1e-12 * (1.0 + dp));
        }

        #[test]
        fn monotone_decreasing_in_rho(a in prop::collection::vec(-5.0f64..5.0, 2..20),
                                      lo in 1.2f64..3.0, gap in 0.1f64..2.0) {
            let v_lo = rho_variation(&a, lo).unwrap();
            let v_hi = rho_variation(&a, lo + gap).unwrap();
            prop_assert!(v_hi <= v_lo + 1e-9 * (1.0 + v_lo));
        }

        #[test]
        fn two_point_lower_bound(a in prop::collection::vec(-5.0f64..5.0, 2..20),
                                 rho in 1.5f64..4.0) {
            let v = rho_variation(&a, rho).unwrap();
            let mut span = 0.0f64;
            for i in 0..a.len() {
                for j in (i + 1)..a.len() {
                    span = span.max((a[i] - a[j]).abs());
                }
            }
            prop_assert!(v >= span - 1e-12);
        }
    }

    fn test_params(grid: &Grid, m: usize, rho: f64) -> VariationParams {
        VariationParams::new(rho, TruncationLadder::for_grid(grid, m).unwrap()).unwrap()
    }

    #[test]
    fn variation_operator_sublinear() {
        let grid = Grid::new(Cube::line(0.0, 2.0), 64).unwrap();
        let k = Kernel::hilbert();
        let vp = test_params(&grid, 8, 2.5);
        let f = ScalarSignal::from_fn(grid.clone(), |x| (3.0 * x[0]).sin());
        let g = ScalarSignal::from_fn(grid.clone(), |x| if x[0] > 0.3 { 1.0 } else { -0.5 });
        let sum = ScalarSignal::new(
            grid.clone(),
            f.values.iter().zip(&g.values).map(|(a, b)| a + b).collect(),
        )
        .unwrap();
        let x = grid.cell_center([17, 0]);
        let vf = variation_operator(&k, &f, &vp, &x).unwrap();
        let vg = variation_operator(&k, &g, &vp, &x).unwrap();
        let vs = variation_operator(&k, &sum, &vp, &x).unwrap();
        assert!(vs <= vf + vg + 1e-10);
        let half = ScalarSignal::new(grid.clone(), f.values.iter().map(|a| 0.5 * a).collect()).unwrap();
        let vh = variation_operator(&k, &half, &vp, &x).unwrap();
        assert!((vh - 0.5 * vf).abs() < 1e-10 * (1.0 + vf));
    }

    #[test]
    fn variation_zero_signal() {
        let grid = Grid::new(Cube::line(0.0, 2.0), 32).unwrap();
        let k = Kernel::hilbert();
        let vp = test_params(&grid, 6, 3.0);
        let f = ScalarSignal::zeros(grid.clone());
        let x = grid.cell_center([5, 0]);
        assert_eq!(variation_operator(&k, &f, &vp, &x).unwrap(), 0.0);
    }

    #[test]
    fn vector_variation_componentwise() {
        let grid = Grid::new(Cube::line(0.0, 2.0), 32).unwrap();
        let k = Kernel::hilbert();
        let vp = test_params(&grid, 6, 3.0);
        let mut f = VectorSignal::zeros(grid.clone(), 2);
        for i in 0..grid.num_cells() {
            let x = grid.cell_center(grid.cell_of_linear(i));
            f.values[i] = [x[0].sin(), if x[0] > 0.0 { 1.0 } else { 0.0 }, 0.0];
        }
        let x = grid.cell_center([20, 0]);
        let v = vector_variation(&k, &f, &vp, &x).unwrap();
        for c in 0..2 {
            let comp = f.component(c);
            let vc = variation_operator(&k, &comp, &vp, &x).unwrap();
            assert!((v[c] - vc).abs() < 1e-13);
        }
        assert_eq!(v[2], 0.0);
    }

    /// Brute-force sup over every axis-parallel grid-aligned interval
    /// containing x, with exact cell sums.
    fn brute_hl_1d(f: &ScalarSignal, x: &[f64; 2]) -> f64 {
        let grid = &f.grid;
        let cell = grid.cell_of_point(x).unwrap();
        let mut best = 0.0f64;
        for lo in 0..=cell[0] {
            for hi in cell[0]..grid.res {
                let mut s = 0.0f64;
                for i in lo..=hi {
                    s += f.value([i, 0]).abs();
                }
                let mean = s / (hi - lo + 1) as f64;
                if mean > best {
                    best = mean;
                }
            }
        }
        best
    }

    #[test]
    fn hl_constant_signal() {
        let grid = Grid::new(Cube::line(0.0, 2.0), 32).unwrap();
        let f = ScalarSignal::from_fn(grid.clone(), |_| 7.25);
        let x = [0.31, 0.0];
        let v = hl_maximal(&f, &x);
        assert!((v - 7.25).abs() < 1e-12);
    }

    #[test]
    fn hl_indicator_example() {
        // f = indicator of [0,1) inside [-4,4), evaluated at x = 2.  The sup
        // over real intervals is 1/2; cell-aligned intervals at 32 cells per
        // unit reach 32/65 (the interval [0, 2 + h)).  The dyadic family
        // credits x with 1/3 through the dilate of [1,2).  The family value
        // must sit inside the 6^d equivalence bracket of the interval sup.
        let grid = Grid::new(Cube::line(0.0, 8.0), 256).unwrap();
        let f = ScalarSignal::from_fn(grid.clone(), |x| {
            if x[0] >= 0.0 && x[0] < 1.0 {
                1.0
            } else {
                0.0
            }
        });
        let x = [2.0, 0.0];
        let fam = hl_maximal(&f, &x);
        let oracle = brute_hl_1d(&f, &x);
        assert!((oracle - 32.0 / 65.0).abs() < 1e-12);
        assert!((fam - 1.0 / 3.0).abs() < 1e-12);
        assert!(fam <= oracle + 1e-12);
        assert!(fam >= oracle / 6.0 - 1e-12);
    }

    proptest! {
        #[test]
        fn hl_family_brackets_oracle(seed in 0u64..200) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let grid = Grid::new(Cube::line(0.0, 4.0), 32).unwrap();
            let f = ScalarSignal::new(
                grid.clone(),
                (0..32).map(|_| rng.gen_range(-2.0f64..2.0)).collect(),
            ).unwrap();
            let ci: usize = rng.gen_range(0..32);
            let x = grid.cell_center([ci, 0]);
            let fam = hl_maximal(&f, &x);
            let oracle = brute_hl_1d(&f, &x);
            prop_assert!(fam <= oracle + 1e-12);
            prop_assert!(fam >= oracle / 6.0 - 1e-12);
            // The cell itself is in the family, so M f >= |f| pointwise.
            prop_assert!(fam >= f.value([ci, 0]).abs() - 1e-12);
        }

        #[test]
        fn power_mean_monotone_in_exponent(seed in 0u64..100) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let grid = Grid::new(Cube::line(0.0, 2.0), 16).unwrap();
            let mut g = VectorSignal::zeros(grid.clone(), 2);
            for v in &mut g.values {
                v[0] = rng.gen_range(-1.0f64..1.0);
                v[1] = rng.gen_range(-1.0f64..1.0);
            }
            let x = grid.cell_center([rng.gen_range(0..16), 0]);
            let m1 = power_maximal(&g, 1.0, &x).unwrap();
            let m2 = power_maximal(&g, 2.0, &x).unwrap();
            let m3 = power_maximal(&g, 3.5, &x).unwrap();
            prop_assert!(m1 <= m2 + 1e-10);
            prop_assert!(m2 <= m3 + 1e-10);
        }
    }

    #[test]
    fn power_maximal_rejects_small_exponent() {
        let grid = Grid::new(Cube::line(0.0, 2.0), 8).unwrap();
        let f = VectorSignal::zeros(grid, 1);
        assert!(power_maximal(&f, 0.5, &[0.1, 0.0]).is_err());
    }

    #[test]
    fn grand_maximal_matches_exhaustive_oracle() {
        // Resolution 2^5, ladder of 6 levels, full double loop over (Q, xi).
        let grid = Grid::new(Cube::line(0.0, 2.0), 32).unwrap();
        let k = Kernel::hilbert();
        let vp = test_params(&grid, 6, 2.5);
        let f = ScalarSignal::from_fn(grid.clone(), |x| {
            (5.0 * x[0]).cos() + if x[0] > 0.4 { 1.0 } else { 0.0 }
        });
        // q0 = right half of the domain, a level-1 dyadic cube.
        let q0 = Cube::line(0.5, 1.0);
        let field = local_grand_maximal_field(&k, &f, &vp, &q0).unwrap();

        let q03 = dilate(&q0, 3.0).unwrap();
        let f3 = f.restricted_to(&q03);
        let root = grid.locate_dyadic(&q0).unwrap();
        let tree = grid.tree();
        for ci in 0..grid.res {
            let cell = [ci, 0];
            let x = grid.cell_center(cell);
            let mut expect = 0.0f64;
            if q0.contains_point(&x) {
                // Walk every dyadic Q with cell(x) inside Q inside q0.
                let mut q = root;
                loop {
                    let qgeo = tree.cube(&q);
                    if qgeo.contains_point(&x) {
                        let q3 = dilate(&qgeo, 3.0).unwrap();
                        // Cut signal: f3 zeroed on cells whose centers lie in 3Q.
                        let mut cut = f3.clone();
                        for i in 0..grid.res {
                            let c = grid.cell_center([i, 0]);
                            if q3.contains_point(&c) {
                                cut.values[i] = 0.0;
                            }
                        }
                        let qb = grid.dyadic_box(&q);
                        for xic in qb.cells() {
                            let xi = grid.cell_center(xic);
                            let mut vals = Vec::with_capacity(vp.ladder.len());
                            for &eps in &vp.ladder.eps {
                                vals.push(truncated_apply(&k, &cut, eps, &xi).unwrap());
                            }
                            let v = rho_variation_dp(&vals, vp.rho).unwrap();
                            if v > expect {
                                expect = v;
                            }
                        }
                    }
                    if q.level == grid.log2_res() {
                        break;
                    }
                    let kids = q.children(grid.dim());
                    let next = kids
                        .into_iter()
                        .find(|c| tree.cube(c).contains_point(&x));
                    match next {
                        Some(c) => q = c,
                        None => break,
                    }
                }
            }
            let got = field.value(cell);
            assert!(
                (got - expect).abs() < 1e-10 * (1.0 + expect),
                "cell {ci}: field {got} oracle {expect}"
            );
        }
    }

    #[test]
    fn grand_maximal_zero_outside_root() {
        let grid = Grid::new(Cube::line(0.0, 2.0), 32).unwrap();
        let k = Kernel::hilbert();
        let vp = test_params(&grid, 6, 2.5);
        let f = ScalarSignal::from_fn(grid.clone(), |x| x[0]);
        let q0 = Cube::line(0.5, 1.0);
        let v = local_grand_maximal(&k, &f, &vp, &q0, &[-0.3, 0.0]).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn global_matches_local_at_root() {
        // With q0 = the whole domain the local cut signal equals f, so the
        // two variants agree exactly.
        let grid = Grid::new(Cube::line(0.0, 2.0), 32).unwrap();
        let k = Kernel::hilbert();
        let vp = test_params(&grid, 6, 2.5);
        let f = ScalarSignal::from_fn(grid.clone(), |x| (2.0 * x[0]).sin() + 0.3);
        let local = local_grand_maximal_field(&k, &f, &vp, &grid.domain).unwrap();
        let global = global_grand_maximal_field(&k, &f, &vp).unwrap();
        for i in 0..grid.num_cells() {
            assert!((local.values[i] - global.values[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn weak_norm_indicator() {
        let grid = Grid::new(Cube::line(0.0, 4.0), 64).unwrap();
        // g = indicator of a quarter of the domain, f with unit l1 norm.
        let g = ScalarSignal::from_fn(grid.clone(), |x| if x[0].abs() < 0.5 { 1.0 } else { 0.0 });
        let f = ScalarSignal::from_fn(grid.clone(), |_| 0.25);
        assert!((f.l1_norm() - 1.0).abs() < 1e-12);
        let w = weak_norm_estimate(&g, &f).unwrap();
        assert!((w - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weak_norm_zero_denominator() {
        let grid = Grid::new(Cube::line(0.0, 4.0), 8).unwrap();
        let g = ScalarSignal::from_fn(grid.clone(), |_| 1.0);
        let f = ScalarSignal::zeros(grid);
        assert!(weak_norm_estimate(&g, &f).is_err());
    }

    proptest! {
        #[test]
        fn weak_norm_matches_lambda_sweep(seed in 0u64..60) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let grid = Grid::new(Cube::line(0.0, 2.0), 64).unwrap();
            let g = ScalarSignal::new(
                grid.clone(),
                (0..64).map(|_| rng.gen_range(0.0f64..3.0)).collect(),
            ).unwrap();
            let f = ScalarSignal::new(
                grid.clone(),
                (0..64).map(|_| rng.gen_range(0.1f64..1.0)).collect(),
            ).unwrap();
            let exact = weak_norm_estimate(&g, &f).unwrap();
            // Dense sweep of lambda over a log grid below the max of g.
            let gmax: f64 = g.values.iter().cloned().fold(0.0, f64::max);
            let vol = grid.cell_volume();
            let mut swept = 0.0f64;
            for i in 0..10_000 {
                let lam = gmax * ((i + 1) as f64 / 10_000.0).powi(3);
                let count = g.values.iter().filter(|v| **v > lam).count();
                swept = swept.max(lam * count as f64 * vol / f.l1_norm());
            }
            prop_assert!(swept <= exact + 1e-12);
            prop_assert!(swept >= exact * (1.0 - 2e-3));
        }
    }
}
