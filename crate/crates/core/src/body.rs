//! Origin-symmetric convex bodies carried as zonotopes: support functions,
//! Minkowski sums, generator merging, membership scaling, and inscribed
//! (John) ellipsoids.
//!
//! Membership scaling has two independent routes, a normal-fan sweep and a
//! linear program, kept separate so they can certify each other.  The John
//! ellipsoid pipeline runs a symmetric minimum-volume-enclosing-ellipsoid
//! iteration on the polar body; including the exact facet normals of the
//! zonotope in the direction set makes the slab relaxation tight, and a
//! final rescale certifies containment on those normals.

use crate::error::{Error, Result};
use crate::linalg::{
    add3, cross3, dot3, inverse_spd, mat_mul, mat_vec, matrix_power, norm3, scale3, sub3,
    sym_eigen, transpose, Mat,
};
use crate::lp::{solve_lp, LpOutcome, LpProblem};

/// Zonotope `{ sum t_i g_i : |t_i| <= 1 }` in R^n, n <= 3.
#[derive(Debug, Clone, PartialEq)]
pub struct Zonotope {
    pub n: u8,
    pub generators: Vec<[f64; 3]>,
}

impl Zonotope {
    pub fn new(n: u8, generators: Vec<[f64; 3]>) -> Result<Self> {
        if n == 0 || n > 3 {
            return Err(Error::InvalidArgument(format!("ambient dimension {n} out of range")));
        }
        for g in &generators {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("generator with non-finite entry".into()));
            }
            if g[n as usize..].iter().any(|v| *v != 0.0) {
                return Err(Error::InvalidArgument(
                    "generator has components beyond the ambient dimension".into(),
                ));
            }
        }
        Ok(Zonotope { n, generators })
    }

    /// Support function `h(u) = sum_i |<g_i, u>|`.
    pub fn support(&self, u: &[f64; 3]) -> f64 {
        self.generators.iter().map(|g| dot3(g, u).abs()).sum()
    }

    /// Sum of generator lengths; an upper bound for the circumradius.
    pub fn total_length(&self) -> f64 {
        self.generators.iter().map(norm3).sum()
    }
}

/// Minkowski sum: generator lists concatenate.
pub fn minkowski_sum(a: &Zonotope, b: &Zonotope) -> Result<Zonotope> {
    if a.n != b.n {
        return Err(Error::DimensionMismatch(format!(
            "zonotope dimensions {} and {}",
            a.n, b.n
        )));
    }
    let mut generators = a.generators.clone();
    generators.extend_from_slice(&b.generators);
    Ok(Zonotope { n: a.n, generators })
}

/// Outcome of a generator merge: how many survived and a bound on the
/// support-function error introduced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeReport {
    pub kept: usize,
    pub absorbed: usize,
    /// Uniform bound on |h_before(u) - h_after(u)| over unit u.
    pub support_error: f64,
    /// Angular threshold (radians) the merge ended up using.
    pub angle: f64,
}

/// Replaces near-parallel generators by a single one with the summed length,
/// doubling the angular threshold until the count fits the budget.  Each
/// absorbed generator of length L rotated by theta contributes at most
/// L theta to the support error, which is accumulated exactly as reported.
pub fn merge_generators(z: &Zonotope, budget: usize, base_angle: f64) -> (Zonotope, MergeReport) {
    let mut angle = base_angle.max(1e-12);
    loop {
        let (out, report) = merge_once(z, angle);
        if out.generators.len() <= budget || angle > 3.2 {
            return (out, report);
        }
        angle *= 2.0;
    }
}

fn merge_once(z: &Zonotope, angle: f64) -> (Zonotope, MergeReport) {
    // Canonical orientation, longest first so cluster directions are stable.
    let mut gens: Vec<[f64; 3]> = z
        .generators
        .iter()
        .filter(|g| norm3(g) > 0.0)
        .map(|g| {
            let flip = g.iter().find(|v| **v != 0.0).map_or(1.0, |v| v.signum());
            scale3(g, flip)
        })
        .collect();
    gens.sort_by(|a, b| norm3(b).partial_cmp(&norm3(a)).unwrap());

    // cluster: (direction sum, length sum)
    let mut clusters: Vec<([f64; 3], f64)> = Vec::new();
    let mut home = vec![0usize; gens.len()];
    for (gi, g) in gens.iter().enumerate() {
        let len = norm3(g);
        let unit = scale3(g, 1.0 / len);
        let mut target = None;
        for (i, (dsum, _)) in clusters.iter().enumerate() {
            let d = scale3(dsum, 1.0 / norm3(dsum));
            let cosang = dot3(&unit, &d).clamp(-1.0, 1.0);
            if cosang.acos() < angle {
                target = Some(i);
                break;
            }
        }
        match target {
            Some(i) => {
                clusters[i].0 = add3(&clusters[i].0, g);
                clusters[i].1 += len;
                home[gi] = i;
            }
            None => {
                clusters.push((*g, len));
                home[gi] = clusters.len() - 1;
            }
        }
    }
    let mut out = Vec::with_capacity(clusters.len());
    for (dsum, len) in &clusters {
        let d = scale3(dsum, 1.0 / norm3(dsum));
        out.push(scale3(&d, *len));
    }
    // Each generator of length L replaced by L times its cluster's unit
    // direction shifts the support by at most L times the angle between them.
    let mut err = 0.0;
    for (gi, g) in gens.iter().enumerate() {
        let len = norm3(g);
        let unit = scale3(g, 1.0 / len);
        let d = scale3(&out[home[gi]], 1.0 / norm3(&out[home[gi]]));
        err += len * dot3(&unit, &d).clamp(-1.0, 1.0).acos();
    }
    let kept = out.len();
    (
        Zonotope { n: z.n, generators: out },
        MergeReport { kept, absorbed: gens.len() - kept, support_error: err, angle },
    )
}

/// Averaged body of a vector signal over a cube: the zonotope with one
/// generator `(w_cell / |q|) f(cell)` per overlapping cell, `w_cell` the
/// exact overlap measure.  The normalizer is the full measure of `q`, so
/// mass outside the domain counts as zero.
pub fn convex_body_average(f: &crate::grid::VectorSignal, q: &crate::grid::Cube) -> Result<Zonotope> {
    if q.volume() <= 0.0 {
        return Err(Error::InvalidArgument("average over a degenerate cube".into()));
    }
    let mut generators = Vec::new();
    if let Some(b) = f.grid.index_box(q) {
        for cell in b.cells() {
            let w = f.grid.cell_cube(cell).overlap_volume(q);
            if w <= 0.0 {
                continue;
            }
            let v = f.value(cell);
            if v == [0.0; 3] {
                continue;
            }
            generators.push(scale3(&v, w / q.volume()));
        }
    }
    Zonotope::new(f.n, generators)
}

/// Orthonormal basis of the generator span along with its dimension.
fn span_basis(z: &Zonotope) -> (Mat, usize) {
    let n = z.n as usize;
    let mut gram = [[0.0; 3]; 3];
    for g in &z.generators {
        for i in 0..n {
            for j in 0..n {
                gram[i][j] += g[i] * g[j];
            }
        }
    }
    let eig = sym_eigen(&gram, n);
    let top = eig.vals[n - 1].max(0.0);
    let tol = top * 1e-14;
    let mut basis = [[0.0; 3]; 3];
    let mut r = 0;
    // eigenvalues ascend; collect the significant directions from the top
    for k in (0..n).rev() {
        if eig.vals[k] > tol && eig.vals[k] > 0.0 {
            for row in 0..n {
                basis[row][r] = eig.vecs[row][k];
            }
            r += 1;
        }
    }
    (basis, r)
}

fn project(basis: &Mat, v: &[f64; 3], n: usize, r: usize) -> [f64; 3] {
    let mut out = [0.0; 3];
    for k in 0..r {
        let mut s = 0.0;
        for row in 0..n {
            s += basis[row][k] * v[row];
        }
        out[k] = s;
    }
    out
}

fn lift(basis: &Mat, v: &[f64; 3], n: usize, r: usize) -> [f64; 3] {
    let mut out = [0.0; 3];
    for row in 0..n {
        let mut s = 0.0;
        for k in 0..r {
            s += basis[row][k] * v[k];
        }
        out[row] = s;
    }
    out
}

/// `inf { c >= 0 : p in c Z }` by sweeping the extreme rays of the normal
/// fan.  Returns infinity when `p` is outside the generator span.
pub fn membership_scale(p: &[f64; 3], z: &Zonotope) -> f64 {
    let n = z.n as usize;
    if p[n..].iter().any(|v| *v != 0.0) {
        return f64::INFINITY;
    }
    if norm3(p) == 0.0 {
        return 0.0;
    }
    let (basis, r) = span_basis(z);
    if r == 0 {
        return f64::INFINITY;
    }
    // residual of p off the span
    let pr = project(&basis, p, n, r);
    let back = lift(&basis, &pr, n, r);
    let res = norm3(&sub3(p, &back));
    if res > 1e-9 * norm3(p) {
        return f64::INFINITY;
    }
    let gens: Vec<[f64; 3]> = z.generators.iter().map(|g| project(&basis, g, n, r)).collect();
    match r {
        1 => {
            let h: f64 = gens.iter().map(|g| g[0].abs()).sum();
            pr[0].abs() / h
        }
        2 => {
            let mut best = 0.0f64;
            for g in &gens {
                let u = [-g[1], g[0], 0.0];
                let nu = norm3(&u);
                if nu == 0.0 {
                    continue;
                }
                let h: f64 = gens.iter().map(|q| dot3(q, &u).abs()).sum();
                if h <= 0.0 {
                    continue;
                }
                best = best.max(dot3(&pr, &u).abs() / h);
            }
            best
        }
        3 => {
            let mut best = 0.0f64;
            for i in 0..gens.len() {
                for j in (i + 1)..gens.len() {
                    let u = cross3(&gens[i], &gens[j]);
                    if norm3(&u) < 1e-14 {
                        continue;
                    }
                    let h: f64 = gens.iter().map(|q| dot3(q, &u).abs()).sum();
                    if h <= 0.0 {
                        continue;
                    }
                    best = best.max(dot3(&pr, &u).abs() / h);
                }
            }
            best
        }
        _ => unreachable!(),
    }
}

/// Same quantity through the linear program
/// `min c` over `sum (u_i - v_i) g_i = p`, `u_i + v_i + s_i = c`, all
/// variables nonnegative.  Infeasibility means `p` is off the span.
pub fn membership_scale_lp(p: &[f64; 3], z: &Zonotope) -> Result<f64> {
    let n = z.n as usize;
    if p[n..].iter().any(|v| *v != 0.0) {
        return Ok(f64::INFINITY);
    }
    let m = z.generators.len();
    if m == 0 {
        return Ok(if norm3(p) == 0.0 { 0.0 } else { f64::INFINITY });
    }
    // columns: u_0..u_m, v_0..v_m, s_0..s_m, c
    let ncols = 3 * m + 1;
    let mut rows = Vec::with_capacity(n + m);
    let mut rhs = Vec::with_capacity(n + m);
    for k in 0..n {
        let mut row = vec![0.0; ncols];
        for (i, g) in z.generators.iter().enumerate() {
            row[i] = g[k];
            row[m + i] = -g[k];
        }
        rows.push(row);
        rhs.push(p[k]);
    }
    for i in 0..m {
        let mut row = vec![0.0; ncols];
        row[i] = 1.0;
        row[m + i] = 1.0;
        row[2 * m + i] = 1.0;
        row[3 * m] = -1.0;
        rows.push(row);
        rhs.push(0.0);
    }
    let mut cost = vec![0.0; ncols];
    cost[3 * m] = 1.0;
    match solve_lp(&LpProblem { rows, rhs, cost })? {
        LpOutcome::Optimal { value, .. } => Ok(value.max(0.0)),
        LpOutcome::Infeasible => Ok(f64::INFINITY),
        LpOutcome::Unbounded => Err(Error::InvalidArgument(
            "membership program cannot be unbounded".into(),
        )),
    }
}

/// Runs both membership routes and errors if they disagree beyond `tol`
/// (relative).  Returns the sweep value.
pub fn membership_scale_certified(p: &[f64; 3], z: &Zonotope, tol: f64) -> Result<f64> {
    let sweep = membership_scale(p, z);
    let lp = membership_scale_lp(p, z)?;
    let agree = if sweep.is_infinite() || lp.is_infinite() {
        sweep.is_infinite() && lp.is_infinite()
    } else {
        (sweep - lp).abs() <= tol * (1.0 + sweep.abs().max(lp.abs()))
    };
    if !agree {
        return Err(Error::InvalidArgument(format!(
            "membership routes disagree: sweep {sweep}, lp {lp}"
        )));
    }
    Ok(sweep)
}

/// Centered ellipsoid `{ A u : |u| <= 1 }` with `A` symmetric positive
/// semidefinite; support function `|A v|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipsoid {
    pub n: u8,
    pub a: Mat,
}

impl Ellipsoid {
    pub fn support(&self, v: &[f64; 3]) -> f64 {
        norm3(&mat_vec(&self.a, v, self.n as usize))
    }
}

/// Unit directions covering the sphere in dimension `r` (antipodes once).
pub fn sphere_dirs(r: usize) -> Vec<[f64; 3]> {
    match r {
        1 => vec![[1.0, 0.0, 0.0]],
        2 => (0..360)
            .map(|k| {
                let t = std::f64::consts::PI * k as f64 / 360.0;
                [t.cos(), t.sin(), 0.0]
            })
            .collect(),
        3 => icosphere_dirs(2),
        _ => panic!("dimension {r} out of range"),
    }
}

fn icosphere_dirs(subdiv: usize) -> Vec<[f64; 3]> {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    let verts: Vec<[f64; 3]> = raw.iter().map(|v| scale3(v, 1.0 / norm3(v))).collect();
    let faces: [[usize; 3]; 20] = [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    let mut tris: Vec<[[f64; 3]; 3]> = faces
        .iter()
        .map(|f| [verts[f[0]], verts[f[1]], verts[f[2]]])
        .collect();
    for _ in 0..subdiv {
        let mut next = Vec::with_capacity(tris.len() * 4);
        for t in &tris {
            let mid = |a: &[f64; 3], b: &[f64; 3]| {
                let m = add3(a, b);
                scale3(&m, 1.0 / norm3(&m))
            };
            let ab = mid(&t[0], &t[1]);
            let bc = mid(&t[1], &t[2]);
            let ca = mid(&t[2], &t[0]);
            next.push([t[0], ab, ca]);
            next.push([t[1], bc, ab]);
            next.push([t[2], ca, bc]);
            next.push([ab, bc, ca]);
        }
        tris = next;
    }
    let mut dirs: Vec<[f64; 3]> = tris.iter().flat_map(|t| t.iter().copied()).collect();
    // dedup by quantized key; antipodes identified by canonical sign
    dirs.iter_mut().for_each(|d| {
        let flip = d.iter().find(|v| v.abs() > 1e-12).map_or(1.0, |v| v.signum());
        *d = scale3(d, flip);
    });
    dirs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    dirs.dedup_by(|a, b| norm3(&sub3(a, b)) < 1e-9);
    dirs
}

/// Symmetric minimum-volume enclosing ellipsoid of `{±c_j}`: maximizes
/// `log det sum w_j c_j c_j^T` over the simplex, mixing ascent steps on the
/// largest leverage with decrease steps on the smallest active one.
/// Returns the weighting matrix `X`; `{x : x^T X^-1 x <= r}` encloses the
/// points up to the stopping tolerance and `{x : x^T X^-1 x <= 1}` is
/// contained in their symmetric hull.
pub(crate) fn mvee_symmetric(
    points: &[[f64; 3]],
    r: usize,
    eps: f64,
    max_iter: usize,
) -> Result<Mat> {
    let m = points.len();
    if m < r {
        return Err(Error::InvalidArgument("too few points for the ellipsoid".into()));
    }
    let rf = r as f64;
    let mut w = vec![1.0 / m as f64; m];
    let mut lev = vec![0.0f64; m];
    for _ in 0..max_iter {
        let mut x = [[0.0; 3]; 3];
        for (wj, c) in w.iter().zip(points) {
            if *wj == 0.0 {
                continue;
            }
            for i in 0..r {
                for j in 0..r {
                    x[i][j] += wj * c[i] * c[j];
                }
            }
        }
        let xinv = inverse_spd(&x, r)?;
        for (l, c) in lev.iter_mut().zip(points) {
            let y = mat_vec(&xinv, c, r);
            *l = dot3(c, &y);
        }
        let (jmax, gmax) = lev
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (j, g)| if *g > acc.1 { (j, *g) } else { acc });
        let mut jmin = usize::MAX;
        let mut gmin = f64::MAX;
        for (j, g) in lev.iter().enumerate() {
            if w[j] > 1e-12 && *g < gmin {
                gmin = *g;
                jmin = j;
            }
        }
        if gmax <= rf * (1.0 + eps) && gmin >= rf * (1.0 - eps) {
            break;
        }
        // objective change of the step w <- (1-b) w + b e_j:
        // (r-1) ln(1-b) + ln(1 - b + b g)
        let gain = |b: f64, g: f64| (rf - 1.0) * (1.0 - b).ln() + (1.0 - b + b * g).ln();
        let ba = (gmax - rf) / (rf * (gmax - 1.0));
        let mut step = (jmax, ba, gain(ba, gmax));
        if jmin != usize::MAX && gmin < rf {
            let raw = (gmin - rf) / (rf * (gmin - 1.0));
            let floor = -w[jmin] / (1.0 - w[jmin]);
            let bd = raw.max(floor);
            let gd = gain(bd, gmin);
            if gd > step.2 {
                step = (jmin, bd, gd);
            }
        }
        let (j, b, g) = step;
        if !(g > 1e-15) {
            break;
        }
        for v in w.iter_mut() {
            *v *= 1.0 - b;
        }
        w[j] += b;
        if w[j] < 0.0 {
            w[j] = 0.0;
        }
        let total: f64 = w.iter().sum();
        for v in w.iter_mut() {
            *v /= total;
        }
    }
    let mut x = [[0.0; 3]; 3];
    for (wj, c) in w.iter().zip(points) {
        for i in 0..r {
            for j in 0..r {
                x[i][j] += wj * c[i] * c[j];
            }
        }
    }
    Ok(x)
}

/// Inscribed ellipsoid of a full-rank symmetric body in dimension `r`,
/// described by support evaluations.  `dirs` must be unit vectors; the
/// caller supplies facet normals when it has them, which make the slab
/// relaxation exact.  The result satisfies `|A u| <= h(u)` on every probed
/// direction and `h(v) <= sqrt(r) |A v|` everywhere.
pub fn john_of_support(
    h: impl Fn(&[f64; 3]) -> f64,
    r: usize,
    extra_dirs: &[[f64; 3]],
) -> Result<Mat> {
    let mut dirs = sphere_dirs(r);
    dirs.extend_from_slice(extra_dirs);
    let mut points = Vec::with_capacity(dirs.len());
    let mut scale = 0.0f64;
    let mut kept_dirs = Vec::with_capacity(dirs.len());
    for u in &dirs {
        let hu = h(u);
        if !(hu.is_finite() && hu >= 0.0) {
            return Err(Error::InvalidArgument("support function must be finite".into()));
        }
        scale = scale.max(hu);
        if hu > 0.0 {
            points.push(scale3(u, 1.0 / hu));
            kept_dirs.push(*u);
        }
    }
    if scale == 0.0 {
        return Ok([[0.0; 3]; 3]);
    }
    // A zero support value on some direction means the body is flat; the
    // caller is expected to reduce to the span first.
    if points.len() < dirs.len() {
        return Err(Error::Singularity);
    }
    let x = mvee_symmetric(&points, r, 1e-9, 100_000)?;
    let mut rx = [[0.0; 3]; 3];
    for i in 0..r {
        for j in 0..r {
            rx[i][j] = x[i][j] * r as f64;
        }
    }
    let mut a = matrix_power(&rx, r, -0.5)?;
    // Certify containment on the probed directions by rescaling.
    let mut nu = 1.0f64;
    for u in &kept_dirs {
        let he = norm3(&mat_vec(&a, u, r));
        let hk = h(u);
        if hk > 0.0 {
            nu = nu.max(he / hk);
        }
    }
    if nu > 1.0 {
        for row in a.iter_mut().take(r) {
            for v in row.iter_mut().take(r) {
                *v /= nu;
            }
        }
    }
    Ok(a)
}

/// Inscribed ellipsoid of a zonotope.  Degenerate directions are projected
/// out first; the ellipsoid is returned in ambient coordinates with the
/// span's orthocomplement in its kernel.
pub fn john_ellipsoid(z: &Zonotope) -> Result<Ellipsoid> {
    let n = z.n as usize;
    let (basis, r) = span_basis(z);
    if r == 0 {
        return Ok(Ellipsoid { n: z.n, a: [[0.0; 3]; 3] });
    }
    let gens: Vec<[f64; 3]> = z.generators.iter().map(|g| project(&basis, g, n, r)).collect();
    let ar = match r {
        1 => {
            let len: f64 = gens.iter().map(|g| g[0].abs()).sum();
            let mut a = [[0.0; 3]; 3];
            a[0][0] = len;
            a
        }
        _ => {
            // exact facet normals of the projected zonotope
            let mut extra = Vec::new();
            let cap = 96.min(gens.len());
            if r == 2 {
                for g in gens.iter().take(cap) {
                    let u = [-g[1], g[0], 0.0];
                    let nu = norm3(&u);
                    if nu > 1e-14 {
                        extra.push(scale3(&u, 1.0 / nu));
                    }
                }
            } else {
                for i in 0..cap {
                    for j in (i + 1)..cap {
                        let u = cross3(&gens[i], &gens[j]);
                        let nu = norm3(&u);
                        if nu > 1e-14 {
                            extra.push(scale3(&u, 1.0 / nu));
                        }
                    }
                }
            }
            let hfn = |u: &[f64; 3]| gens.iter().map(|g| dot3(g, u).abs()).sum();
            john_of_support(hfn, r, &extra)?
        }
    };
    // lift: A = B A_r B^T
    let mut b = [[0.0; 3]; 3];
    for row in 0..n {
        for k in 0..r {
            b[row][k] = basis[row][k];
        }
    }
    let lifted = mat_mul(&mat_mul(&b, &ar, 3), &transpose(&b, 3), 3);
    Ok(Ellipsoid { n: z.n, a: lifted })
}
