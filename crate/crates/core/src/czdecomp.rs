//! Height-threshold decomposition of a signal into a bounded part and
//! mean-zero pieces supported on disjoint dyadic cubes.
//!
//! Selection walks the dyadic tree from the root and keeps the maximal
//! cubes where the mean of |f| strictly exceeds the threshold.  Cell
//! counts inside dyadic cubes are powers of two, so on signals whose
//! values sit on a dyadic lattice the means, the selection comparisons,
//! and the reconstruction `f = good + bad` are exact in floating point.

use crate::error::{Error, Result};
use crate::grid::{DyadicCube, PrefixTable, ScalarSignal};

#[derive(Debug, Clone)]
pub struct CzDecomposition {
    pub lambda: f64,
    /// Maximal selected cubes, pairwise disjoint.
    pub cubes: Vec<DyadicCube>,
    /// Mean of f (signed) over each selected cube.
    pub means: Vec<f64>,
    /// f outside the cubes, the cube mean inside each.
    pub good: ScalarSignal,
    /// Sum of all mean-zero pieces; supported on the cube union.
    pub bad_total: ScalarSignal,
}

impl CzDecomposition {
    /// Materializes the mean-zero piece living on `cubes[j]`.
    pub fn bad_part(&self, f: &ScalarSignal, j: usize) -> ScalarSignal {
        let mut out = ScalarSignal::zeros(f.grid);
        let b = f.grid.dyadic_box(&self.cubes[j]);
        for cell in b.cells() {
            let i = f.grid.linear(cell);
            out.values[i] = f.values[i] - self.means[j];
        }
        out
    }
}

fn abs_signal(f: &ScalarSignal) -> ScalarSignal {
    let mut out = f.clone();
    for v in &mut out.values {
        *v = v.abs();
    }
    out
}

/// Mean of the signal over a dyadic cube of the signal's own tree.
pub fn dyadic_mean(f: &ScalarSignal, q: &DyadicCube) -> f64 {
    let b = f.grid.dyadic_box(q);
    let mut s = 0.0;
    for cell in b.cells() {
        s += f.value(cell);
    }
    s / b.count() as f64
}

/// Maximal dyadic cubes where the mean of the (nonnegative) density
/// exceeds `lambda` strictly.  The walk stops at single cells.  A root
/// whose own mean already exceeds `lambda` has no maximal proper cube
/// and is reported as an error.
pub fn stopping_cubes(density: &ScalarSignal, lambda: f64) -> Result<Vec<DyadicCube>> {
    stopping_cubes_from(density, lambda, DyadicCube::root())
}

/// Same walk restricted to the subtree under `start`.
pub fn stopping_cubes_from(
    density: &ScalarSignal,
    lambda: f64,
    start: DyadicCube,
) -> Result<Vec<DyadicCube>> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("threshold {lambda} must be positive")));
    }
    let grid = density.grid;
    let prefix = PrefixTable::new(&grid, |c| density.value(c));
    let mean = |q: &DyadicCube| -> f64 {
        let b = grid.dyadic_box(q);
        prefix.box_sum(&b) / b.count() as f64
    };
    let start_mean = mean(&start);
    if start_mean > lambda {
        return Err(Error::RootSelected { lambda, root_mean: start_mean });
    }
    let max_level = grid.log2_res();
    let mut selected = Vec::new();
    let mut stack = vec![start];
    while let Some(q) = stack.pop() {
        if q.level >= max_level {
            continue;
        }
        for child in q.children(grid.dim()) {
            if mean(&child) > lambda {
                selected.push(child);
            } else if child.level < max_level {
                stack.push(child);
            }
        }
    }
    selected.sort();
    Ok(selected)
}

/// Splits `f` at height `lambda`.
pub fn cz_decompose(f: &ScalarSignal, lambda: f64) -> Result<CzDecomposition> {
    let density = abs_signal(f);
    let cubes = stopping_cubes(&density, lambda)?;
    let mut good = f.clone();
    let mut bad_total = ScalarSignal::zeros(f.grid);
    let mut means = Vec::with_capacity(cubes.len());
    for q in &cubes {
        let m = dyadic_mean(f, q);
        means.push(m);
        let b = f.grid.dyadic_box(q);
        for cell in b.cells() {
            let i = f.grid.linear(cell);
            good.values[i] = m;
            bad_total.values[i] = f.values[i] - m;
        }
    }
    Ok(CzDecomposition { lambda, cubes, means, good, bad_total })
}

/// Measured properties of a decomposition, for the caller to judge
/// against the expected constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CzReport {
    /// sup |good|; bounded by 2^d lambda.
    pub good_sup: f64,
    /// Total measure of the selected cubes.
    pub support_measure: f64,
    /// ||f||_1 / lambda, the bound support_measure must respect.
    pub measure_bound: f64,
    /// Largest mean of |f| over a selected cube, divided by lambda;
    /// lies in (1, 2^d].
    pub worst_mean_ratio: f64,
    /// Largest |integral of a single mean-zero piece|.
    pub max_bad_integral: f64,
    /// Largest ||b_j||_1 / (lambda |Q_j|); bounded by 2^{d+1}.
    pub max_bad_l1_ratio: f64,
    /// Whether good + bad_total reproduces f cell for cell, bitwise.
    pub reconstruction_exact: bool,
    /// Whether the parent of every selected cube stayed at or under
    /// the threshold (maximality) and the cubes are pairwise disjoint.
    pub selection_valid: bool,
}

pub fn verify_cz_properties(f: &ScalarSignal, dec: &CzDecomposition) -> CzReport {
    let grid = f.grid;
    let density = abs_signal(f);
    let good_sup = dec.good.max_abs();
    let cellvol = grid.cell_volume();
    let support_measure: f64 = dec
        .cubes
        .iter()
        .map(|q| grid.dyadic_box(q).count() as f64 * cellvol)
        .sum();
    let measure_bound = f.l1_norm() / dec.lambda;

    let mut worst_mean_ratio = 0.0f64;
    let mut selection_valid = true;
    for (i, q) in dec.cubes.iter().enumerate() {
        let m = dyadic_mean(&density, q);
        worst_mean_ratio = worst_mean_ratio.max(m / dec.lambda);
        if !(m > dec.lambda) {
            selection_valid = false;
        }
        if let Some(parent) = q.parent() {
            if dyadic_mean(&density, &parent) > dec.lambda {
                selection_valid = false;
            }
        } else {
            selection_valid = false;
        }
        for other in dec.cubes.iter().skip(i + 1) {
            if q.contains(other) || other.contains(q) {
                selection_valid = false;
            }
        }
    }

    let mut max_bad_integral = 0.0f64;
    let mut max_bad_l1_ratio = 0.0f64;
    for (q, m) in dec.cubes.iter().zip(&dec.means) {
        let b = grid.dyadic_box(q);
        let mut s = 0.0;
        let mut a = 0.0;
        for cell in b.cells() {
            let r = f.value(cell) - m;
            s += r;
            a += r.abs();
        }
        max_bad_integral = max_bad_integral.max((s * cellvol).abs());
        let vol = b.count() as f64 * cellvol;
        max_bad_l1_ratio = max_bad_l1_ratio.max(a * cellvol / (dec.lambda * vol));
    }

    let reconstruction_exact = dec
        .good
        .values
        .iter()
        .zip(&dec.bad_total.values)
        .zip(&f.values)
        .all(|((g, b), v)| g + b == *v);

    CzReport {
        good_sup,
        support_measure,
        measure_bound,
        worst_mean_ratio,
        max_bad_integral,
        max_bad_l1_ratio,
        reconstruction_exact,
        selection_valid,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Cube, Grid};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    const Q: f64 = 1.0 / (1 << 20) as f64;

    fn quantize(v: f64) -> f64 {
        (v / Q).round() * Q
    }

    fn grid_1d(res: usize) -> Grid {
        Grid::new(Cube::line(0.0, 8.0), res).unwrap()
    }

    #[test]
    fn indicator_splits_at_expected_cubes() {
        // one unit spike among zeros: cube means are spike/count
        let grid = grid_1d(16);
        let mut f = ScalarSignal::zeros(grid);
        f.values[5] = 1.0;
        let dec = cz_decompose(&f, 0.3).unwrap();
        // means: cell 1.0 > 0.3, pair 0.5 > 0.3, quad 0.25 <= 0.3
        assert_eq!(dec.cubes.len(), 1);
        assert_eq!(dec.cubes[0].level, 3);
        assert_eq!(dec.cubes[0].idx[0], 2);
        let rep = verify_cz_properties(&f, &dec);
        assert!(rep.selection_valid);
        assert!(rep.reconstruction_exact);
        assert!(rep.good_sup <= 2.0 * 0.3);
        assert_eq!(rep.max_bad_integral, 0.0);
    }

    #[test]
    fn root_over_threshold_is_an_error() {
        let grid = grid_1d(8);
        let mut f = ScalarSignal::zeros(grid);
        for v in &mut f.values {
            *v = 2.0;
        }
        match cz_decompose(&f, 1.0) {
            Err(Error::RootSelected { lambda, root_mean }) => {
                assert_eq!(lambda, 1.0);
                assert_eq!(root_mean, 2.0);
            }
            other => panic!("expected root selection error, got {other:?}"),
        }
    }

    #[test]
    fn no_cubes_when_signal_is_flat_under_lambda() {
        let grid = grid_1d(8);
        let mut f = ScalarSignal::zeros(grid);
        for v in &mut f.values {
            *v = 0.5;
        }
        let dec = cz_decompose(&f, 0.5).unwrap();
        assert!(dec.cubes.is_empty());
        let rep = verify_cz_properties(&f, &dec);
        assert!(rep.reconstruction_exact);
        assert_eq!(rep.good_sup, 0.5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn properties_hold_on_quantized_signals(seed in 0u64..4000, res_pow in 3u32..7, dim2 in proptest::bool::ANY) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let grid = if dim2 {
                Grid::new(Cube::square([0.0, 0.0], 4.0), 1usize << res_pow.min(5)).unwrap()
            } else {
                grid_1d(1usize << res_pow)
            };
            let mut f = ScalarSignal::zeros(grid);
            for v in &mut f.values {
                if rng.gen_bool(0.3) {
                    *v = quantize(rng.gen_range(-8.0f64..8.0));
                }
            }
            if f.l1_norm() == 0.0 {
                return Ok(());
            }
            let d = grid.dim() as i32;
            // threshold above the root mean so the walk can start
            let root_mean = f.abs_mean_extended(&grid.tree().root);
            let lambda = quantize((root_mean * 1.5).max(0.25) + Q);
            let dec = match cz_decompose(&f, lambda) {
                Ok(d) => d,
                Err(Error::RootSelected { .. }) => return Ok(()),
                Err(e) => return Err(TestCaseError::fail(format!("{e:?}"))),
            };
            let rep = verify_cz_properties(&f, &dec);
            prop_assert!(rep.selection_valid);
            prop_assert!(rep.reconstruction_exact, "reconstruction drifted");
            prop_assert!(rep.good_sup <= 2f64.powi(d) * lambda, "good part exceeds 2^d lambda");
            prop_assert!(rep.worst_mean_ratio <= 2f64.powi(d));
            prop_assert!(rep.support_measure <= rep.measure_bound * (1.0 + 1e-12));
            prop_assert!(rep.max_bad_integral <= 1e-10 * (1.0 + f.l1_norm()));
            prop_assert!(rep.max_bad_l1_ratio <= 2f64.powi(d + 1), "bad piece L1 mass exceeds 2^(d+1) lambda |Q|");
        }

        #[test]
        fn stopping_cubes_cover_every_tall_cell(seed in 0u64..200) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let grid = grid_1d(64);
            let mut f = ScalarSignal::zeros(grid);
            for v in &mut f.values {
                *v = quantize(rng.gen_range(0.0f64..1.0));
            }
            let lambda = 0.75;
            if f.abs_mean_extended(&grid.tree().root) > lambda {
                return Ok(());
            }
            let cubes = stopping_cubes(&f, lambda).unwrap();
            for cell in 0..grid.num_cells() {
                let c = grid.cell_of_linear(cell);
                if f.value(c) > lambda {
                    let covered = cubes.iter().any(|q| grid.dyadic_box(q).contains(c));
                    prop_assert!(covered, "cell {cell} above lambda escaped the cubes");
                }
            }
        }
    }

    #[test]
    fn bad_part_sums_match_total() {
        let grid = grid_1d(32);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut f = ScalarSignal::zeros(grid);
        for v in &mut f.values {
            if rng.gen_bool(0.4) {
                *v = quantize(rng.gen_range(-4.0f64..4.0));
            }
        }
        let lambda = f.abs_mean_extended(&grid.tree().root).max(0.01) * 2.0;
        let dec = cz_decompose(&f, lambda).unwrap();
        let mut acc = ScalarSignal::zeros(grid);
        for j in 0..dec.cubes.len() {
            let b = dec.bad_part(&f, j);
            for (a, v) in acc.values.iter_mut().zip(&b.values) {
                *a += v;
            }
        }
        for (a, t) in acc.values.iter().zip(&dec.bad_total.values) {
            assert_eq!(a, t);
        }
    }
}
