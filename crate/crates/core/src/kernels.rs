//! Singular kernels with size and smoothness envelopes, and their truncated
//! application to grid signals.
//!
//! A truncation at radius `eps` keeps exactly the cells whose center lies
//! strictly outside the ball of radius `eps` around the evaluation point.
//! Because membership is decided per cell, the difference of two truncations
//! equals the sum over the annulus cells with no boundary ambiguity.

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarSignal, VectorSignal};

/// Modulus of continuity with a finite Dini integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiniModulus {
    /// omega(t) = c t^delta with 0 < delta <= 1.
    Power { c: f64, delta: f64 },
    /// omega(t) = c t.
    Linear { c: f64 },
}

impl DiniModulus {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            DiniModulus::Power { c, delta } => c > 0.0 && delta > 0.0 && delta <= 1.0,
            DiniModulus::Linear { c } => c > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("modulus parameters out of range: {self:?}")))
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            DiniModulus::Power { c, delta } => c * t.powf(delta),
            DiniModulus::Linear { c } => c * t,
        }
    }
}

/// Closed form of `int_0^1 omega(t)/t dt`.
pub fn dini_integral(m: &DiniModulus) -> f64 {
    match *m {
        DiniModulus::Power { c, delta } => c / delta,
        DiniModulus::Linear { c } => c,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    /// K(x, y) = 1 / (pi (x - y)), dimension 1.
    Hilbert,
    /// K(x, y) = a u_1 / |x - y|^d with u = (x - y)/|x - y|; odd and smooth
    /// away from the diagonal. Dimension 1 or 2.
    RieszCos { amplitude: f64 },
}

/// Kernel together with its size constant and smoothness modulus. The stored
/// modulus is an envelope: `smoothness_check` measures the realized ratio
/// against it and stays at or below one for the shipped constructors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    pub kind: KernelKind,
    pub dim: u8,
    pub size_constant: f64,
    pub modulus: DiniModulus,
}

impl Kernel {
    pub fn hilbert() -> Self {
        Kernel {
            kind: KernelKind::Hilbert,
            dim: 1,
            size_constant: 1.0 / std::f64::consts::PI,
            // sharp for the sum over both arguments, attained as x' moves
            // halfway toward y
            modulus: DiniModulus::Linear { c: 4.0 / std::f64::consts::PI },
        }
    }

    pub fn riesz_cos(dim: u8, amplitude: f64) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::InvalidArgument(format!("kernel dim {dim} not in {{1, 2}}")));
        }
        if !(amplitude > 0.0 && amplitude.is_finite()) {
            return Err(Error::InvalidArgument(format!("amplitude {amplitude} must be positive")));
        }
        // d = 1: the kernel is a/(x - y), same envelope as the scaled Hilbert
        // kernel. d = 2: |grad K| <= 2a/r^3 gives 16at/r^2 per argument.
        let c = if dim == 1 { 4.0 * amplitude } else { 32.0 * amplitude };
        Ok(Kernel {
            kind: KernelKind::RieszCos { amplitude },
            dim,
            size_constant: amplitude,
            modulus: DiniModulus::Linear { c },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }
}

fn dist(x: &[f64; 2], y: &[f64; 2], d: usize) -> f64 {
    match d {
        1 => (x[0] - y[0]).abs(),
        _ => ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt(),
    }
}

/// Kernel value at distinct points.
pub fn kernel_eval(k: &Kernel, x: &[f64; 2], y: &[f64; 2]) -> Result<f64> {
    let d = k.dim();
    let r = dist(x, y, d);
    if r == 0.0 {
        return Err(Error::Singularity);
    }
    Ok(kernel_eval_unchecked(k, x, y, r))
}

#[inline]
fn kernel_eval_unchecked(k: &Kernel, x: &[f64; 2], y: &[f64; 2], r: f64) -> f64 {
    match k.kind {
        KernelKind::Hilbert => 1.0 / (std::f64::consts::PI * (x[0] - y[0])),
        KernelKind::RieszCos { amplitude } => {
            let d = k.dim() as i32;
            amplitude * (x[0] - y[0]) / (r * r.powi(d))
        }
    }
}

/// Samples the two-argument smoothness ratio
/// `(|K(x,y)-K(x',y)| + |K(y,x)-K(y,x')|) / (omega(t) |x-y|^{-d})`, `t =
/// |x-x'|/|x-y| <= 1/2`, over a deterministic family of admissible triples.
/// Returns the sampled supremum.
pub fn smoothness_check(k: &Kernel, samples: usize) -> f64 {
    let d = k.dim();
    let mut state = 0x2545F4914F6CDD1Du64;
    let mut unit = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let mut sup: f64 = 0.0;
    for _ in 0..samples {
        let r = 0.05 + 4.0 * unit();
        let (x, y) = match d {
            1 => ([0.0, 0.0], [r * if unit() < 0.5 { 1.0 } else { -1.0 }, 0.0]),
            _ => {
                let phi = std::f64::consts::TAU * unit();
                ([0.0, 0.0], [r * phi.cos(), r * phi.sin()])
            }
        };
        let t = 0.5 * unit().max(1e-3);
        let step = t * r;
        let xp = match d {
            1 => [x[0] + step * if unit() < 0.5 { 1.0 } else { -1.0 }, 0.0],
            _ => {
                let psi = std::f64::consts::TAU * unit();
                [x[0] + step * psi.cos(), x[1] + step * psi.sin()]
            }
        };
        let num = (kernel_eval(k, &x, &y).unwrap() - kernel_eval(k, &xp, &y).unwrap()).abs()
            + (kernel_eval(k, &y, &x).unwrap() - kernel_eval(k, &y, &xp).unwrap()).abs();
        let den = k.modulus.eval(t) / r.powi(d as i32);
        sup = sup.max(num / den);
    }
    sup
}

/// Decreasing positive truncation radii.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationLadder {
    pub eps: Vec<f64>,
}

impl TruncationLadder {
    pub fn new(eps: Vec<f64>) -> Result<Self> {
        if eps.is_empty() {
            return Err(Error::InvalidArgument("empty truncation ladder".into()));
        }
        if eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::InvalidArgument("truncation radii must be positive".into()));
        }
        if eps.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::InvalidArgument("truncation radii must strictly decrease".into()));
        }
        Ok(TruncationLadder { eps })
    }

    /// eps_k = eps_max theta^(k-1), k = 1..=m.
    pub fn geometric(eps_max: f64, theta: f64, m: usize) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::InvalidArgument(format!("theta {theta} not in (0, 1)")));
        }
        let eps = (0..m).map(|k| eps_max * theta.powi(k as i32)).collect();
        TruncationLadder::new(eps)
    }

    /// Geometric ladder spanning from half the domain side down to the grid
    /// floor of `grid`.
    pub fn for_grid(grid: &Grid, m: usize) -> Result<Self> {
        let top = 0.5 * grid.domain.side;
        let floor = truncation_floor(grid);
        if m == 1 {
            return TruncationLadder::new(vec![top]);
        }
        if floor >= top {
            return Err(Error::InvalidArgument(
                "grid too coarse for a ladder above the truncation floor".into(),
            ));
        }
        let theta = (floor / top).powf(1.0 / (m as f64 - 1.0));
        let mut ladder = TruncationLadder::geometric(top, theta, m)?;
        // Rounding in powf can land the bottom rung a few ulps under the
        // floor; pin it.
        let last = ladder.eps.last_mut().unwrap();
        if *last < floor {
            *last = floor;
        }
        if m >= 2 && ladder.eps[m - 2] <= ladder.eps[m - 1] {
            return Err(Error::InvalidArgument(
                "ladder too long for the gap between top and floor".into(),
            ));
        }
        Ok(ladder)
    }

    pub fn len(&self) -> usize {
        self.eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps.is_empty()
    }

    pub fn check_floor(&self, grid: &Grid) -> Result<()> {
        let floor = truncation_floor(grid);
        let last = *self.eps.last().unwrap();
        if last < floor {
            return Err(Error::TruncationTooFine { eps: last, floor });
        }
        Ok(())
    }
}

/// Smallest admissible truncation radius on a grid: two cell diameters.
pub fn truncation_floor(grid: &Grid) -> f64 {
    2.0 * grid.cell_diameter()
}

/// Truncated application at one point: the sum over cells whose center is
/// strictly farther than `eps` of K(x, center) value cellvol.
pub fn truncated_apply(k: &Kernel, f: &ScalarSignal, eps: f64, x: &[f64; 2]) -> Result<f64> {
    check_kernel_grid(k, &f.grid)?;
    let floor = truncation_floor(&f.grid);
    if eps < floor {
        return Err(Error::TruncationTooFine { eps, floor });
    }
    let d = k.dim();
    let vol = f.grid.cell_volume();
    let mut acc = 0.0;
    for i in 0..f.grid.num_cells() {
        let v = f.values[i];
        if v == 0.0 {
            continue;
        }
        let c = f.grid.cell_center(f.grid.cell_of_linear(i));
        let r = dist(x, &c, d);
        if r > eps {
            acc += kernel_eval_unchecked(k, x, &c, r) * v * vol;
        }
    }
    Ok(acc)
}

/// All ladder values at one point in a single pass over the cells. Entry k
/// equals `truncated_apply` at `ladder.eps[k]`.
pub fn truncated_ladder_values(
    k: &Kernel,
    f: &ScalarSignal,
    ladder: &TruncationLadder,
    x: &[f64; 2],
) -> Result<Vec<f64>> {
    check_kernel_grid(k, &f.grid)?;
    ladder.check_floor(&f.grid)?;
    let mut diffs = vec![0.0f64; ladder.len()];
    accumulate_ladder(k, f, ladder, x, &mut diffs);
    let mut acc = 0.0;
    for d in diffs.iter_mut() {
        acc += *d;
        *d = acc;
    }
    Ok(diffs)
}

/// Adds each cell's kernel contribution into the first ladder slot whose
/// radius it clears; prefix sums then produce the truncated values. Shared by
/// the point and field paths.
pub(crate) fn accumulate_ladder(
    k: &Kernel,
    f: &ScalarSignal,
    ladder: &TruncationLadder,
    x: &[f64; 2],
    diffs: &mut [f64],
) {
    let d = k.dim();
    let vol = f.grid.cell_volume();
    let eps = &ladder.eps;
    for i in 0..f.grid.num_cells() {
        let v = f.values[i];
        if v == 0.0 {
            continue;
        }
        let c = f.grid.cell_center(f.grid.cell_of_linear(i));
        let r = dist(x, &c, d);
        // radii decrease, so the slots with eps < r form a suffix
        let k0 = eps.partition_point(|e| *e >= r);
        if k0 < eps.len() {
            diffs[k0] += kernel_eval_unchecked(k, x, &c, r) * v * vol;
        }
    }
}

/// Componentwise truncated application to a vector signal.
pub fn componentwise_apply(
    k: &Kernel,
    f: &VectorSignal,
    eps: f64,
    x: &[f64; 2],
) -> Result<[f64; 3]> {
    let mut out = [0.0; 3];
    for comp in 0..f.n as usize {
        out[comp] = truncated_apply(k, &f.component(comp), eps, x)?;
    }
    Ok(out)
}

fn check_kernel_grid(k: &Kernel, grid: &Grid) -> Result<()> {
    if k.dim() != grid.dim() {
        return Err(Error::DimensionMismatch(format!(
            "kernel dim {} vs grid dim {}",
            k.dim(),
            grid.dim()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Cube;

    #[test]
    fn dini_integral_closed_forms() {
        assert_eq!(dini_integral(&DiniModulus::Linear { c: 2.0 }), 2.0);
        assert_eq!(dini_integral(&DiniModulus::Power { c: 3.0, delta: 0.5 }), 6.0);
        assert!(DiniModulus::Power { c: 1.0, delta: 1.5 }.validate().is_err());
        assert!(DiniModulus::Power { c: -1.0, delta: 0.5 }.validate().is_err());
    }

    #[test]
    fn kernel_eval_is_odd_and_singular() {
        let k = Kernel::hilbert();
        let v = kernel_eval(&k, &[1.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!((v - 1.0 / std::f64::consts::PI).abs() < 1e-15);
        let w = kernel_eval(&k, &[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!(v, -w);
        assert!(matches!(kernel_eval(&k, &[1.0, 0.0], &[1.0, 0.0]), Err(Error::Singularity)));
    }

    #[test]
    fn riesz_matches_closed_form_in_2d() {
        let k = Kernel::riesz_cos(2, 1.0).unwrap();
        let x = [2.0, 1.0];
        let y = [0.0, 0.0];
        let r = (5.0f64).sqrt();
        let expect = 2.0 / (r * r * r);
        assert!((kernel_eval(&k, &x, &y).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn smoothness_ratio_with_unit_modulus_hits_four_over_pi() {
        // with omega(t) = t the two-argument ratio for the Hilbert kernel is
        // bounded by 4/pi and the bound is approached
        let mut k = Kernel::hilbert();
        k.modulus = DiniModulus::Linear { c: 1.0 };
        let sup = smoothness_check(&k, 20_000);
        assert!(sup <= 4.0 / std::f64::consts::PI + 1e-9, "sup {sup}");
        assert!(sup > 4.0 / std::f64::consts::PI * 0.9, "sup {sup}");
    }

    #[test]
    fn shipped_moduli_dominate_sampled_ratios() {
        for k in [
            Kernel::hilbert(),
            Kernel::riesz_cos(1, 1.0).unwrap(),
            Kernel::riesz_cos(2, 0.7).unwrap(),
        ] {
            let sup = smoothness_check(&k, 5_000);
            assert!(sup <= 1.0, "kernel {:?} ratio {sup}", k.kind);
        }
    }

    #[test]
    fn ladder_construction_and_floor() {
        let l = TruncationLadder::geometric(1.0, 0.5, 4).unwrap();
        assert_eq!(l.eps, vec![1.0, 0.5, 0.25, 0.125]);
        assert!(TruncationLadder::new(vec![1.0, 1.0]).is_err());
        assert!(TruncationLadder::new(vec![]).is_err());

        let grid = Grid::new(Cube::line(0.0, 1.0), 16).unwrap();
        // cell width 1/16, floor 1/8
        assert_eq!(truncation_floor(&grid), 0.125);
        assert!(l.check_floor(&grid).is_ok());
        let fine = TruncationLadder::geometric(1.0, 0.5, 5).unwrap();
        assert!(matches!(fine.check_floor(&grid), Err(Error::TruncationTooFine { .. })));
    }

    #[test]
    fn truncated_apply_matches_log_oracle() {
        // f = indicator of [-1, 1] inside domain [-4, 4]; for x past the
        // support and eps below the gap the integral is
        // (1/pi) log((x+1)/(x-1))
        let grid = Grid::new(Cube::line(0.0, 8.0), 1 << 12).unwrap();
        let f = ScalarSignal::from_fn(grid, |x| if (-1.0..1.0).contains(&x[0]) { 1.0 } else { 0.0 });
        let k = Kernel::hilbert();
        // evaluation point at a cell center near 2.0
        let cell = grid.cell_of_point(&[2.0, 0.0]).unwrap();
        let x = grid.cell_center(cell);
        let got = truncated_apply(&k, &f, 0.5, &x).unwrap();
        let expect = ((x[0] + 1.0) / (x[0] - 1.0)).ln() / std::f64::consts::PI;
        assert!((got - expect).abs() / expect < 1e-3, "got {got} expect {expect}");
    }

    #[test]
    fn ladder_batch_equals_pointwise_truncations() {
        let grid = Grid::new(Cube::line(0.0, 2.0), 64).unwrap();
        let f = ScalarSignal::from_fn(grid, |x| (3.0 * x[0]).sin() + 0.2);
        let k = Kernel::hilbert();
        let ladder = TruncationLadder::for_grid(&grid, 9).unwrap();
        let x = grid.cell_center([17, 0]);
        let batch = truncated_ladder_values(&k, &f, &ladder, &x).unwrap();
        for (i, eps) in ladder.eps.iter().enumerate() {
            let one = truncated_apply(&k, &f, *eps, &x).unwrap();
            assert!((batch[i] - one).abs() < 1e-12, "slot {i}: {} vs {one}", batch[i]);
        }
    }

    #[test]
    fn truncation_difference_is_annulus_sum() {
        let grid = Grid::new(Cube::line(0.0, 2.0), 64).unwrap();
        let f = ScalarSignal::from_fn(grid, |x| x[0].cos());
        let k = Kernel::hilbert();
        let x = grid.cell_center([40, 0]);
        let (e_big, e_small) = (0.5, 0.21);
        let wide = truncated_apply(&k, &f, e_small, &x).unwrap();
        let narrow = truncated_apply(&k, &f, e_big, &x).unwrap();
        // direct annulus sum over cells with e_small < dist <= e_big
        let vol = grid.cell_volume();
        let mut annulus = 0.0;
        for i in 0..grid.num_cells() {
            let c = grid.cell_center(grid.cell_of_linear(i));
            let r = (x[0] - c[0]).abs();
            if r > e_small && r <= e_big {
                annulus += kernel_eval(&k, &x, &c).unwrap() * f.values[i] * vol;
            }
        }
        assert!((wide - narrow - annulus).abs() < 1e-12);
    }

    #[test]
    fn componentwise_apply_by_component() {
        let grid = Grid::new(Cube::line(0.0, 2.0), 32).unwrap();
        let a = ScalarSignal::from_fn(grid, |x| x[0]);
        let b = ScalarSignal::from_fn(grid, |x| 1.0 - x[0]);
        let f = VectorSignal::from_components(&[a.clone(), b.clone()]).unwrap();
        let k = Kernel::hilbert();
        let x = grid.cell_center([5, 0]);
        let out = componentwise_apply(&k, &f, 0.3, &x).unwrap();
        assert_eq!(out[0], truncated_apply(&k, &a, 0.3, &x).unwrap());
        assert_eq!(out[1], truncated_apply(&k, &b, 0.3, &x).unwrap());
        assert_eq!(out[2], 0.0);
    }
}
