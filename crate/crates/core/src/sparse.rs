//! Pointwise domination of variation fields by sparse averaging sums.
//!
//! One refinement step selects, inside a dyadic cube, the maximal dyadic
//! subcubes where an exceptional set (signal too tall, or the grand
//! maximal of the variation too tall) has density above `2^-(d+1)`.
//! Iterating the step produces generations whose total measure decays
//! geometrically, so the tripled cubes together with a short ladder of
//! dilates of the starting cube form a sparse family.  All density and
//! packing statements reduce to integer cell counts and are checked
//! exactly.

use crate::body::{convex_body_average, membership_scale, merge_generators, Zonotope};
use crate::czdecomp::stopping_cubes_from;
use crate::error::{Error, Result};
use crate::grid::{dilate, Cube, DyadicCube, Grid, PrefixTable, ScalarSignal, VectorSignal};
use crate::kernels::Kernel;
use crate::linalg::{norm3, sym_eigen};
use crate::variation::{
    local_grand_maximal_field, variation_field, variation_operator, vector_variation_field,
    weak_norm_estimate, VariationParams,
};
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparseConfig {
    /// Density parameter in (0,1); each generation packs at most this
    /// fraction of its parent.
    pub delta: f64,
    /// Weak (1,1) constant granted to the grand maximal of the variation
    /// when sizing the exceptional set.  Instances whose measured ratio
    /// exceeds it are reported in the step, never silently accepted.
    pub calibration: f64,
    pub max_generations: u32,
}

impl SparseConfig {
    pub fn new(delta: f64, calibration: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidArgument(format!("delta {delta} outside (0,1)")));
        }
        if !(calibration > 0.0) {
            return Err(Error::InvalidArgument("calibration must be positive".into()));
        }
        Ok(SparseConfig { delta, calibration, max_generations: 40 })
    }
}

/// One selection step on a cube.
#[derive(Debug, Clone)]
pub struct ScalarStep {
    pub cube: DyadicCube,
    /// Mean of |f restricted to the tripled cube| over the tripled cube.
    pub mean: f64,
    pub epsilon: f64,
    /// Height cutoff multiplier `2^(d+2) 3^d / epsilon`.
    pub alpha: f64,
    pub cube_cells: usize,
    pub exceptional_cells: usize,
    pub stopping: Vec<DyadicCube>,
    /// (cells of P in E, cells of P) per stopping cube.
    pub densities: Vec<(usize, usize)>,
    /// Cells of E escaping every stopping cube; zero by maximality.
    pub uncovered_cells: usize,
    /// Measured weak (1,1) ratio of the grand maximal field used for E.
    pub weak_ratio: f64,
}

impl ScalarStep {
    fn empty(cube: DyadicCube, cube_cells: usize, epsilon: f64, alpha: f64) -> Self {
        ScalarStep {
            cube,
            mean: 0.0,
            epsilon,
            alpha,
            cube_cells,
            exceptional_cells: 0,
            stopping: Vec::new(),
            densities: Vec::new(),
            uncovered_cells: 0,
            weak_ratio: 0.0,
        }
    }
}

fn alpha_for(d: i32, epsilon: f64) -> f64 {
    2f64.powi(d + 2) * 3f64.powi(d) / epsilon
}

/// Selects the next generation below `q0` for a scalar signal: the
/// exceptional set collects cells of `q0` where `|f chi_{3Q0}|`, or the
/// grand maximal of the variation relative to `q0`, is tall against the
/// local mean, and the stopping cubes are the maximal dyadic cubes where
/// that set has density above `2^-(d+1)`.
pub fn sparse_step_scalar(
    k: &Kernel,
    f: &ScalarSignal,
    vp: &VariationParams,
    q0: &DyadicCube,
    epsilon: f64,
    calibration: f64,
) -> Result<ScalarStep> {
    let grid = f.grid;
    let d = grid.dim() as i32;
    let alpha = alpha_for(d, epsilon);
    let b0 = grid.dyadic_box(q0);
    let geom = grid.tree().cube(q0);
    let q3 = dilate(&geom, 3.0)?;
    let f_loc = f.restricted_to(&q3);
    let mean = f_loc.abs_mean_extended(&q3);
    if mean == 0.0 {
        return Ok(ScalarStep::empty(*q0, b0.count(), epsilon, alpha));
    }
    let m_field = local_grand_maximal_field(k, f, vp, &geom)?;
    let weak_ratio = weak_norm_estimate(&m_field, &f_loc)?;

    let cut_f = alpha * mean;
    let cut_m = alpha * calibration * mean;
    let mut chi = ScalarSignal::zeros(grid);
    let mut exceptional = 0usize;
    for cell in b0.cells() {
        if f_loc.value(cell).abs() > cut_f || m_field.value(cell) > cut_m {
            chi.values[grid.linear(cell)] = 1.0;
            exceptional += 1;
        }
    }
    let lambda = 2f64.powi(-(d + 1));
    let stopping = stopping_cubes_from(&chi, lambda, *q0)?;

    let mut densities = Vec::with_capacity(stopping.len());
    let mut covered = 0usize;
    for p in &stopping {
        let b = grid.dyadic_box(p);
        let mut inside = 0usize;
        for cell in b.cells() {
            if chi.value(cell) == 1.0 {
                inside += 1;
            }
        }
        densities.push((inside, b.count()));
        covered += inside;
    }
    // stopping cubes are disjoint, so covered counts each cell once
    let uncovered_cells = exceptional - covered;
    Ok(ScalarStep {
        cube: *q0,
        mean,
        epsilon,
        alpha,
        cube_cells: b0.count(),
        exceptional_cells: exceptional,
        stopping,
        densities,
        uncovered_cells,
        weak_ratio,
    })
}

/// Vector refinement on a cube: principal axes of the inscribed ellipsoid
/// of the averaged body over the tripled cube split the signal into
/// scalar slices, each sliced step runs with `epsilon = delta / n_active`,
/// and the union of all stopping cubes is pruned to its maximal members.
#[derive(Debug, Clone)]
pub struct VectorStep {
    pub cube: DyadicCube,
    pub axes: Vec<[f64; 3]>,
    pub slices: Vec<ScalarStep>,
    pub stopping: Vec<DyadicCube>,
}

pub fn sparse_step_vector(
    k: &Kernel,
    f: &VectorSignal,
    vp: &VariationParams,
    q0: &DyadicCube,
    delta: f64,
    calibration: f64,
) -> Result<VectorStep> {
    let grid = f.grid;
    let n = f.n as usize;
    let geom = grid.tree().cube(q0);
    let q3 = dilate(&geom, 3.0)?;
    let body = crate::body::convex_body_average(f, &q3)?;
    let ell = crate::body::john_ellipsoid(&body)?;
    let eig = sym_eigen(&ell.a, n);
    let top = eig.vals[n - 1].max(0.0);
    let mut axes = Vec::new();
    for k in (0..n).rev() {
        if eig.vals[k] > 1e-12 * top && eig.vals[k] > 0.0 {
            let mut e = [0.0; 3];
            for row in 0..n {
                e[row] = eig.vecs[row][k];
            }
            axes.push(e);
        }
    }
    if axes.is_empty() {
        return Ok(VectorStep { cube: *q0, axes, slices: Vec::new(), stopping: Vec::new() });
    }
    let epsilon = delta / axes.len() as f64;
    let mut slices = Vec::with_capacity(axes.len());
    let mut all = Vec::new();
    for e in &axes {
        let fk = f.dot_with(e);
        let step = sparse_step_scalar(k, &fk, vp, q0, epsilon, calibration)?;
        all.extend(step.stopping.iter().copied());
        slices.push(step);
    }
    let stopping = maximal_cubes(all);
    Ok(VectorStep { cube: *q0, axes, slices, stopping })
}

/// Keeps the maximal cubes of a set (drops any cube contained in another).
pub fn maximal_cubes(mut cubes: Vec<DyadicCube>) -> Vec<DyadicCube> {
    cubes.sort();
    cubes.dedup();
    let mut out: Vec<DyadicCube> = Vec::with_capacity(cubes.len());
    for q in cubes {
        if !out.iter().any(|m| m.contains(&q)) {
            out.push(q);
        }
    }
    out
}

/// Dyadic skeleton of a sparse family: the selected cubes with their
/// generation, plus dilation exponents for the shell members around the
/// starting cube.  Family members are the tripled cubes `3Q` and the
/// shells `3^l Q0`.
#[derive(Debug, Clone)]
pub struct SparseFamily {
    pub root: DyadicCube,
    pub delta: f64,
    pub cubes: Vec<(DyadicCube, u32)>,
    /// Shell exponents l, each member `3^l root`; starts at 2.
    pub shells: Vec<u32>,
    /// Largest weak (1,1) ratio observed across all steps.
    pub max_weak_ratio: f64,
    pub calibration: f64,
}

impl SparseFamily {
    /// Geometric member cubes: tripled selected cubes, then shells.
    pub fn members(&self, grid: &Grid) -> Vec<Cube> {
        let tree = grid.tree();
        let mut out: Vec<Cube> = self
            .cubes
            .iter()
            .map(|(q, _)| dilate(&tree.cube(q), 3.0).expect("triple of a tree cube"))
            .collect();
        let root_cube = tree.cube(&self.root);
        for l in &self.shells {
            out.push(dilate(&root_cube, 3f64.powi(*l as i32)).expect("shell dilate"));
        }
        out
    }
}

fn shell_exponents(grid: &Grid, root: &DyadicCube) -> Vec<u32> {
    let tree = grid.tree();
    let base = tree.cube(root);
    let mut l = 1u32;
    while l < 64 {
        let big = dilate(&base, 3f64.powi(l as i32)).expect("shell dilate");
        if big.contains_cube(&grid.tree().root) {
            break;
        }
        l += 1;
    }
    (2..=l).collect()
}

fn grow(
    start: DyadicCube,
    cfg: &SparseConfig,
    grid: &Grid,
    mut step: impl FnMut(&DyadicCube) -> Result<(Vec<DyadicCube>, f64)>,
) -> Result<SparseFamily> {
    let mut cubes = vec![(start, 0u32)];
    let mut current = vec![start];
    let mut max_weak_ratio = 0.0f64;
    for gen in 1..=cfg.max_generations {
        let mut next = Vec::new();
        for q in &current {
            if q.level >= grid.log2_res() {
                continue;
            }
            let (stopping, weak) = step(q)?;
            max_weak_ratio = max_weak_ratio.max(weak);
            next.extend(stopping);
        }
        if next.is_empty() {
            break;
        }
        cubes.extend(next.iter().map(|q| (*q, gen)));
        current = next;
    }
    Ok(SparseFamily {
        root: start,
        delta: cfg.delta,
        cubes,
        shells: shell_exponents(grid, &start),
        max_weak_ratio,
        calibration: cfg.calibration,
    })
}

pub fn build_sparse_family(
    k: &Kernel,
    f: &ScalarSignal,
    vp: &VariationParams,
    start: DyadicCube,
    cfg: &SparseConfig,
) -> Result<SparseFamily> {
    let grid = f.grid;
    grow(start, cfg, &grid, |q| {
        let step = sparse_step_scalar(k, f, vp, q, cfg.delta, cfg.calibration)?;
        Ok((step.stopping, step.weak_ratio))
    })
}

pub fn build_sparse_family_vector(
    k: &Kernel,
    f: &VectorSignal,
    vp: &VariationParams,
    start: DyadicCube,
    cfg: &SparseConfig,
) -> Result<SparseFamily> {
    let grid = f.grid;
    grow(start, cfg, &grid, |q| {
        let step = sparse_step_vector(k, f, vp, q, cfg.delta, cfg.calibration)?;
        let weak = step
            .slices
            .iter()
            .map(|s| s.weak_ratio)
            .fold(0.0f64, f64::max);
        Ok((step.stopping, weak))
    })
}

/// Largest packing ratio `sum_{P in family, P inside Q} |P| / |Q|` over
/// the dyadic skeleton, computed in integer cells.  Geometric generation
/// decay keeps it at or under `1/(1-delta)`.
pub fn carleson_ratio(family: &SparseFamily, grid: &Grid) -> f64 {
    let counts: Vec<usize> = family
        .cubes
        .iter()
        .map(|(q, _)| grid.dyadic_box(q).count())
        .collect();
    let mut worst = 0.0f64;
    for (i, (q, _)) in family.cubes.iter().enumerate() {
        let mut packed = 0usize;
        for (j, (p, _)) in family.cubes.iter().enumerate() {
            if q.contains(p) {
                packed += counts[j];
            }
        }
        worst = worst.max(packed as f64 / counts[i] as f64);
    }
    worst
}

/// Largest next-generation fill fraction over the skeleton cubes, in
/// integer cells; stays at or under `delta` by construction.
pub fn generation_decay(family: &SparseFamily, grid: &Grid) -> f64 {
    let mut worst = 0.0f64;
    for (q, g) in &family.cubes {
        let own = grid.dyadic_box(q).count();
        let mut filled = 0usize;
        for (p, gp) in &family.cubes {
            if *gp == g + 1 && q.contains(p) {
                filled += grid.dyadic_box(p).count();
            }
        }
        worst = worst.max(filled as f64 / own as f64);
    }
    worst
}

/// Sparseness witness report.  Each tripled member keeps the cells of its
/// own skeleton cube not claimed by the next generation; each shell keeps
/// its annulus.  Witness sets are pairwise disjoint by construction, and
/// the ratio is measured against the full member volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaReport {
    /// Smallest witness fraction across members.
    pub min_ratio: f64,
    /// The guaranteed level `(1 - delta) / 3^d`.
    pub eta: f64,
    pub pass: bool,
}

pub fn eta_report(family: &SparseFamily, grid: &Grid) -> EtaReport {
    let d = grid.dim() as u32;
    let eta = (1.0 - family.delta) / 3f64.powi(d as i32);
    let mut min_ratio = f64::MAX;
    let mut pass = true;
    for (q, g) in &family.cubes {
        let own = grid.dyadic_box(q).count();
        let mut claimed = 0usize;
        for (p, gp) in &family.cubes {
            if *gp == g + 1 && q.contains(p) {
                claimed += grid.dyadic_box(p).count();
            }
        }
        let witness = own - claimed;
        // witness cells inside Q against the tripled member volume
        let ratio = witness as f64 / (own as f64 * 3f64.powi(d as i32));
        min_ratio = min_ratio.min(ratio);
        // integer form of witness >= (1 - delta) |Q| at delta = 1/2
        if (witness as f64) < (1.0 - family.delta) * own as f64 {
            pass = false;
        }
    }
    for l in &family.shells {
        // annulus 3^l Q0 minus 3^(l-1) Q0, full geometric measure
        let outer = 3u128.pow(d * l);
        let inner = 3u128.pow(d * (l - 1));
        let ratio = (outer - inner) as f64 / outer as f64;
        min_ratio = min_ratio.min(ratio);
        // (outer - inner) / outer >= (1 - delta) / 3^d, in integers for
        // dyadic delta
        let lhs = (outer - inner) as f64 * 3f64.powi(d as i32);
        if lhs < (1.0 - family.delta) * outer as f64 {
            pass = false;
        }
    }
    if family.cubes.is_empty() && family.shells.is_empty() {
        min_ratio = 0.0;
        pass = false;
    }
    EtaReport { min_ratio, eta, pass }
}

/// `sum_{members S} <|f|>_S chi_S(x)` as a cell field.  Member means are
/// zero extended: clipped integrals divided by full member volume.
pub fn sparse_sum_scalar(f: &ScalarSignal, family: &SparseFamily) -> ScalarSignal {
    let grid = f.grid;
    let prefix = PrefixTable::new(&grid, |c| f.value(c).abs());
    let cellvol = grid.cell_volume();
    let mut out = ScalarSignal::zeros(grid);
    for member in family.members(&grid) {
        if let Some(b) = grid.center_box(&member) {
            // member corners sit on the cell lattice, so the center box
            // is the exact cell cover and the sum is the exact integral
            let mean = prefix.box_sum(&b) * cellvol / member.volume();
            if mean == 0.0 {
                continue;
            }
            for cell in b.cells() {
                out.values[grid.linear(cell)] += mean;
            }
        }
    }
    out
}

/// Cellwise ratio of the variation field to the sparse sum; the largest
/// value is the constant the family certifies for this instance.
pub fn domination_ratio_field(
    k: &Kernel,
    f: &ScalarSignal,
    vp: &VariationParams,
    family: &SparseFamily,
) -> Result<ScalarSignal> {
    let v = variation_field(k, f, vp)?;
    let s = sparse_sum_scalar(f, family);
    let mut out = ScalarSignal::zeros(f.grid);
    for i in 0..out.values.len() {
        out.values[i] = match (v.values[i], s.values[i]) {
            (0.0, _) => 0.0,
            (vv, ss) if ss > 0.0 => vv / ss,
            _ => f64::INFINITY,
        };
    }
    Ok(out)
}

pub fn domination_constant(
    k: &Kernel,
    f: &ScalarSignal,
    vp: &VariationParams,
    family: &SparseFamily,
) -> Result<f64> {
    let ratios = domination_ratio_field(k, f, vp, family)?;
    Ok(ratios.values.iter().copied().fold(0.0, f64::max))
}

/// Largest gap, relative to the local mean, between the variation field on
/// `q0` and its localized version over a disjoint dyadic cover: inside a
/// cover cube the variation of `f chi_{3P}` is subtracted, and uncovered
/// cells keep the full value.
pub fn pointwise_residual_scalar(
    k: &Kernel,
    f: &ScalarSignal,
    vp: &VariationParams,
    q0: &DyadicCube,
    cover: &[DyadicCube],
) -> Result<f64> {
    let grid = f.grid;
    let q3 = dilate(&grid.tree().cube(q0), 3.0)?;
    let mean = f.abs_mean_extended(&q3);
    if mean == 0.0 {
        return Ok(0.0);
    }
    let cells: Vec<[usize; 2]> = grid.dyadic_box(q0).cells().collect();
    let full: Vec<f64> = cells
        .par_iter()
        .map(|cell| variation_operator(k, f, vp, &grid.cell_center(*cell)))
        .collect::<Result<Vec<f64>>>()?;
    let mut residual = vec![0.0f64; grid.num_cells()];
    for (cell, v) in cells.iter().zip(full) {
        residual[grid.linear(*cell)] = v;
    }
    for p in cover {
        let p3 = dilate(&grid.tree().cube(p), 3.0)?;
        let f_loc = f.restricted_to(&p3);
        let pcells: Vec<[usize; 2]> = grid.dyadic_box(p).cells().collect();
        let locals: Vec<f64> = pcells
            .par_iter()
            .map(|cell| variation_operator(k, &f_loc, vp, &grid.cell_center(*cell)))
            .collect::<Result<Vec<f64>>>()?;
        for (cell, lv) in pcells.iter().zip(locals) {
            let i = grid.linear(*cell);
            residual[i] = (residual[i] - lv).abs();
        }
    }
    let worst = cells
        .iter()
        .map(|cell| residual[grid.linear(*cell)])
        .fold(0.0f64, f64::max);
    Ok(worst / mean)
}

/// Minkowski sum of the averaged bodies of every family member containing
/// `x`; the empty sum is the origin.
pub fn sparse_operator_eval(
    f: &VectorSignal,
    family: &SparseFamily,
    x: &[f64; 2],
) -> Result<Zonotope> {
    let grid = f.grid;
    let mut generators: Vec<[f64; 3]> = Vec::new();
    for member in family.members(&grid) {
        if member.contains_point(x) {
            generators.extend(convex_body_average(f, &member)?.generators);
        }
    }
    Zonotope::new(f.n, generators)
}

/// Per-body generator cap when evaluating the summed bodies over a grid.
const GENERATOR_BUDGET: usize = 256;
const MERGE_BASE_ANGLE: f64 = 1e-3;

/// Vector domination certificate: per cell, the smallest scale placing the
/// componentwise variation vector inside the summed body of the members
/// containing the cell.
#[derive(Debug, Clone)]
pub struct VectorDomination {
    pub field: ScalarSignal,
    pub constant: f64,
    /// Largest support-function error accepted while merging generators
    /// down to the per-body budget.
    pub merge_error: f64,
}

pub fn vector_domination(
    k: &Kernel,
    f: &VectorSignal,
    vp: &VariationParams,
    family: &SparseFamily,
) -> Result<VectorDomination> {
    let grid = f.grid;
    let v = vector_variation_field(k, f, vp)?;
    let members = family.members(&grid);
    let mut bodies = Vec::with_capacity(members.len());
    let mut merge_error = 0.0f64;
    for member in &members {
        let body = convex_body_average(f, member)?;
        let (body, report) = merge_generators(&body, GENERATOR_BUDGET, MERGE_BASE_ANGLE);
        merge_error = merge_error.max(report.support_error);
        bodies.push(body);
    }
    let cells: Vec<[usize; 2]> = (0..grid.num_cells()).map(|i| grid.cell_of_linear(i)).collect();
    let scored: Vec<(f64, f64)> = cells
        .par_iter()
        .map(|cell| {
            let x = grid.cell_center(*cell);
            let p = v.value(*cell);
            let mut generators: Vec<[f64; 3]> = Vec::new();
            for (member, body) in members.iter().zip(&bodies) {
                if member.contains_point(&x) {
                    generators.extend_from_slice(&body.generators);
                }
            }
            if generators.is_empty() {
                return (if norm3(&p) > 0.0 { f64::INFINITY } else { 0.0 }, 0.0);
            }
            let mut z = Zonotope { n: f.n, generators };
            let mut err = 0.0;
            if z.generators.len() > GENERATOR_BUDGET {
                let (merged, report) = merge_generators(&z, GENERATOR_BUDGET, MERGE_BASE_ANGLE);
                z = merged;
                err = report.support_error;
            }
            (membership_scale(&p, &z), err)
        })
        .collect();
    let mut values = Vec::with_capacity(scored.len());
    let mut constant = 0.0f64;
    for (s, e) in scored {
        merge_error = merge_error.max(e);
        constant = constant.max(s);
        values.push(s);
    }
    let field = ScalarSignal::new(grid, values)?;
    Ok(VectorDomination { field, constant, merge_error })
}

pub fn domination_constant_vector(
    k: &Kernel,
    f: &VectorSignal,
    vp: &VariationParams,
    family: &SparseFamily,
) -> Result<f64> {
    Ok(vector_domination(k, f, vp, family)?.constant)
}

/// Text form of a family, one line per member: skeleton cubes as
/// `Q <generation> <level> <ix> [iy]`, shells as `A <exponent>`.
pub fn family_to_text(family: &SparseFamily, dim: usize) -> String {
    let mut out = String::new();
    for (q, g) in &family.cubes {
        if dim == 1 {
            out.push_str(&format!("Q {g} {} {}\n", q.level, q.idx[0]));
        } else {
            out.push_str(&format!("Q {g} {} {} {}\n", q.level, q.idx[0], q.idx[1]));
        }
    }
    for l in &family.shells {
        out.push_str(&format!("A {l}\n"));
    }
    out
}

pub fn family_from_text(text: &str, root: DyadicCube, delta: f64) -> Result<SparseFamily> {
    let mut cubes = Vec::new();
    let mut shells = Vec::new();
    for line in text.lines() {
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            [] => continue,
            ["Q", g, level, rest @ ..] if !rest.is_empty() => {
                let g: u32 = g.parse().map_err(|e| Error::Parse(format!("generation: {e}")))?;
                let level: u32 =
                    level.parse().map_err(|e| Error::Parse(format!("level: {e}")))?;
                let mut idx = [0u64; 2];
                for (k, v) in rest.iter().enumerate().take(2) {
                    idx[k] = v.parse().map_err(|e| Error::Parse(format!("index: {e}")))?;
                }
                cubes.push((DyadicCube { level, idx }, g));
            }
            ["A", l] => {
                shells.push(l.parse().map_err(|e| Error::Parse(format!("shell: {e}")))?);
            }
            _ => return Err(Error::Parse(format!("unrecognized family line: {line}"))),
        }
    }
    Ok(SparseFamily {
        root,
        delta,
        cubes,
        shells,
        max_weak_ratio: 0.0,
        calibration: 0.0,
    })
}
