//! Deterministic signal corpus.
//!
//! Every value lands on the `2^-20` lattice so dyadic-cube means stay exact
//! in double precision, and every signal is supported in one fixed dyadic
//! cube so the refinement pipelines see a legal starting cube.  The same
//! seed reproduces the corpus bitwise.
//!
//! Profile-times-direction families split the lattice: directions sit on
//! `2^-6` and scalar profiles on `2^-14`, so each cell value is the exact
//! product of the two.  Cells of one instance are then exactly collinear
//! and its averaged bodies keep their true one-dimensional span.

use crate::config::{CorpusSpec, Family};
use czvar::grid::{DyadicCube, Grid, ScalarSignal, VectorSignal};
use czvar::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const Q20: f64 = 1.0 / (1 << 20) as f64;
const Q14: f64 = 1.0 / (1 << 14) as f64;
const Q6: f64 = 1.0 / (1 << 6) as f64;

pub fn quantize(v: f64) -> f64 {
    (v / Q20).round() * Q20
}

fn quantize_profile(v: f64) -> f64 {
    (v / Q14).round() * Q14
}

fn quantize_direction(v: f64) -> f64 {
    (v / Q6).round() * Q6
}

/// The dyadic cube supporting every corpus signal: second cube along each
/// axis at `level` (the root when `level` is 0), so dilate shells are
/// exercised whenever `level >= 2`.
pub fn support_cube(grid: &Grid, level: u32) -> DyadicCube {
    let level = level.min(grid.log2_res());
    let max_idx = (1u64 << level) - 1;
    let mut idx = [0u64; 2];
    for k in 0..grid.dim() {
        idx[k] = 1u64.min(max_idx);
    }
    DyadicCube { level, idx }
}

fn random_direction(rng: &mut ChaCha8Rng, n: u8) -> [f64; 3] {
    let mut u = match n {
        1 => [if rng.gen_bool(0.5) { 1.0 } else { -1.0 }, 0.0, 0.0],
        2 => {
            let t = rng.gen_range(0.0..std::f64::consts::TAU);
            [t.cos(), t.sin(), 0.0]
        }
        _ => {
            let z: f64 = rng.gen_range(-1.0f64..1.0);
            let t = rng.gen_range(0.0..std::f64::consts::TAU);
            let r = (1.0 - z * z).sqrt();
            [r * t.cos(), r * t.sin(), z]
        }
    };
    for v in &mut u {
        *v = quantize_direction(*v);
    }
    // componentwise variation vectors are nonnegative, so a rank-one
    // instance keeps them inside its body span only when the direction
    // components share a sign; fold into the positive orthant at n >= 2
    if n >= 2 {
        for v in &mut u {
            *v = v.abs();
        }
    }
    u
}

/// Uniform random dyadic subcube of `support` with level in
/// `support.level..=max_level`.
fn random_subcube(rng: &mut ChaCha8Rng, grid: &Grid, support: &DyadicCube, max_level: u32) -> DyadicCube {
    let level = rng.gen_range(support.level..=max_level.max(support.level));
    let span = 1u64 << (level - support.level);
    let mut idx = [0u64; 2];
    for k in 0..grid.dim() {
        idx[k] = support.idx[k] * span + rng.gen_range(0..span);
    }
    DyadicCube { level, idx }
}

fn indicator(rng: &mut ChaCha8Rng, grid: &Grid, support: &DyadicCube, n: u8, amp: f64) -> VectorSignal {
    let q = random_subcube(rng, grid, support, grid.log2_res());
    let u = random_direction(rng, n);
    let a = quantize_profile(rng.gen_range(0.25 * amp..amp));
    let mut f = VectorSignal::zeros(*grid, n);
    for cell in grid.dyadic_box(&q).cells() {
        let i = grid.linear(cell);
        for k in 0..n as usize {
            f.values[i][k] = a * u[k];
        }
    }
    f
}

fn bump(rng: &mut ChaCha8Rng, grid: &Grid, support: &DyadicCube, n: u8, amp: f64) -> VectorSignal {
    let sbox = grid.dyadic_box(support);
    let scube = grid.tree().cube(support);
    let u = random_direction(rng, n);
    let a = rng.gen_range(0.5 * amp..amp);
    let mut center = [0.0f64; 2];
    for k in 0..grid.dim() {
        center[k] = scube.lo(k) + scube.side * rng.gen_range(0.25..0.75);
    }
    let sigma = scube.side * rng.gen_range(0.08..0.25);
    let mut f = VectorSignal::zeros(*grid, n);
    for cell in sbox.cells() {
        let x = grid.cell_center(cell);
        let mut r2 = 0.0;
        for k in 0..grid.dim() {
            let d = x[k] - center[k];
            r2 += d * d;
        }
        let p = quantize_profile(a * (-r2 / (sigma * sigma)).exp());
        let i = grid.linear(cell);
        for k in 0..n as usize {
            f.values[i][k] = p * u[k];
        }
    }
    f
}

fn signs(rng: &mut ChaCha8Rng, grid: &Grid, support: &DyadicCube, n: u8, amp: f64) -> VectorSignal {
    let cap = grid.log2_res().min(support.level + 3);
    let q = random_subcube(rng, grid, support, cap);
    let u = random_direction(rng, n);
    let a = quantize_profile(rng.gen_range(0.5 * amp..amp));
    let mut f = VectorSignal::zeros(*grid, n);
    for cell in grid.dyadic_box(&q).cells() {
        let s = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let i = grid.linear(cell);
        for k in 0..n as usize {
            f.values[i][k] = s * a * u[k];
        }
    }
    f
}

/// Fixed two-humped profile rotated by a random frame: the shape is shared
/// by every instance, only the orientation and scale vary.
fn rotated(rng: &mut ChaCha8Rng, grid: &Grid, support: &DyadicCube, n: u8, amp: f64) -> VectorSignal {
    let sbox = grid.dyadic_box(support);
    let scube = grid.tree().cube(support);
    let a = rng.gen_range(0.5 * amp..amp);
    let theta = rng.gen_range(0.0..std::f64::consts::TAU);
    let (c, s) = (theta.cos(), theta.sin());
    let flip = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let mut f = VectorSignal::zeros(*grid, n);
    for cell in sbox.cells() {
        let x = grid.cell_center(cell);
        // normalized coordinate through the support, in [0,1]
        let mut t = 0.0;
        for k in 0..grid.dim() {
            t += (x[k] - scube.lo(k)) / scube.side;
        }
        t /= grid.dim() as f64;
        let hat = (1.0 - 2.0 * (t - 0.5).abs()).max(0.0);
        let wave = (std::f64::consts::TAU * 2.0 * t).cos() * hat;
        let p = [a * hat, a * wave, a * hat * wave];
        let v = match n {
            1 => [flip * p[0], 0.0, 0.0],
            2 => [c * p[0] - s * p[1], s * p[0] + c * p[1], 0.0],
            _ => [c * p[0] - s * p[1], s * p[0] + c * p[1], flip * p[2]],
        };
        let i = grid.linear(cell);
        for k in 0..n as usize {
            f.values[i][k] = quantize(v[k]);
        }
    }
    f
}

/// Instances are drawn sequentially from one seeded stream, cycling through
/// the configured families, so corpus content depends only on (spec, seed).
pub fn generate_corpus(grid: &Grid, spec: &CorpusSpec, seed: u64) -> Result<Vec<VectorSignal>> {
    let support = support_cube(grid, spec.support_level);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(spec.count);
    for i in 0..spec.count {
        let family = spec.families[i % spec.families.len()];
        let f = match family {
            Family::Indicator => indicator(&mut rng, grid, &support, spec.n, spec.amplitude),
            Family::Bump => bump(&mut rng, grid, &support, spec.n, spec.amplitude),
            Family::Signs => signs(&mut rng, grid, &support, spec.n, spec.amplitude),
            Family::Rotated => rotated(&mut rng, grid, &support, spec.n, spec.amplitude),
        };
        out.push(f);
    }
    Ok(out)
}

pub fn family_of(spec: &CorpusSpec, index: usize) -> Family {
    spec.families[index % spec.families.len()]
}

pub fn to_scalar(f: &VectorSignal) -> ScalarSignal {
    f.component(0)
}

/// Indicator spikes of equal mass on nested cubes whose measure shrinks by
/// `4x` from one entry to the next (two dyadic levels per step at d = 1,
/// one at d = 2).
pub fn spike_sequence(grid: &Grid, support: &DyadicCube, steps: u32, mass: f64) -> Vec<ScalarSignal> {
    let per_step = if grid.dim() == 1 { 2 } else { 1 };
    let mut out = Vec::new();
    for s in 0..steps {
        let level = (support.level + s * per_step).min(grid.log2_res());
        let span = 1u64 << (level - support.level);
        let mut idx = [0u64; 2];
        for k in 0..grid.dim() {
            idx[k] = support.idx[k] * span;
        }
        let q = DyadicCube { level, idx };
        let b = grid.dyadic_box(&q);
        let vol = b.count() as f64 * grid.cell_volume();
        let height = quantize(mass / vol);
        let mut f = ScalarSignal::zeros(*grid);
        for cell in b.cells() {
            f.values[grid.linear(cell)] = height;
        }
        out.push(f);
        if level == grid.log2_res() {
            break;
        }
    }
    out
}
