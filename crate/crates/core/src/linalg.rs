//! Dense linear algebra for dimensions 1 to 3: symmetric eigensolver,
//! spectral matrix functions, operator norms, and small solves.
//!
//! The eigensolver skips rotations on entries that are already zero, so a
//! diagonal input passes through bit-exact.  Spectral functions inherit
//! that: applied to a diagonal matrix they act entrywise with no rounding
//! beyond the scalar function itself.

use crate::error::{Error, Result};

/// Row-major matrix, zero-padded beyond the active dimension.
pub type Mat = [[f64; 3]; 3];

pub fn identity(n: usize) -> Mat {
    let mut m = [[0.0; 3]; 3];
    for i in 0..n {
        m[i][i] = 1.0;
    }
    m
}

pub fn mat_vec(m: &Mat, v: &[f64; 3], n: usize) -> [f64; 3] {
    let mut out = [0.0; 3];
    for i in 0..n {
        let mut s = 0.0;
        for j in 0..n {
            s += m[i][j] * v[j];
        }
        out[i] = s;
    }
    out
}

pub fn mat_mul(a: &Mat, b: &Mat, n: usize) -> Mat {
    let mut out = [[0.0; 3]; 3];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += a[i][k] * b[k][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn transpose(m: &Mat, n: usize) -> Mat {
    let mut out = [[0.0; 3]; 3];
    for i in 0..n {
        for j in 0..n {
            out[i][j] = m[j][i];
        }
    }
    out
}

pub fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm3(a: &[f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

pub fn scale3(a: &[f64; 3], t: f64) -> [f64; 3] {
    [a[0] * t, a[1] * t, a[2] * t]
}

pub fn add3(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub3(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn cross3(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn det(m: &Mat, n: usize) -> f64 {
    match n {
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        3 => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
        _ => panic!("dimension {n} out of range"),
    }
}

/// Eigendecomposition of a symmetric matrix: `vals` ascending, `vecs`
/// holding the matching eigenvectors as columns.
#[derive(Debug, Clone, Copy)]
pub struct SymEigen {
    pub vals: [f64; 3],
    pub vecs: Mat,
}

/// Cyclic Jacobi iteration.  Rotations on entries that are exactly zero are
/// skipped, which keeps diagonal inputs untouched.
pub fn sym_eigen(m: &Mat, n: usize) -> SymEigen {
    let mut a = *m;
    let mut v = identity(n);
    if n > 1 {
        for _sweep in 0..64 {
            let mut off = 0.0f64;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += a[p][q] * a[p][q];
                }
            }
            let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>().max(1e-300);
            if off <= 1e-28 * scale {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[p][q];
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                    let t = if theta >= 0.0 {
                        1.0 / (theta + (theta * theta + 1.0).sqrt())
                    } else {
                        -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                    };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k][p];
                        let akq = a[k][q];
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p][k];
                        let aqk = a[q][k];
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                    a[p][q] = 0.0;
                    a[q][p] = 0.0;
                    for k in 0..n {
                        let vkp = v[k][p];
                        let vkq = v[k][q];
                        v[k][p] = c * vkp - s * vkq;
                        v[k][q] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }
    let mut pairs: Vec<(f64, usize)> = (0..n).map(|i| (a[i][i], i)).collect();
    pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let mut vals = [0.0; 3];
    let mut vecs = [[0.0; 3]; 3];
    for (slot, (val, col)) in pairs.iter().enumerate() {
        vals[slot] = *val;
        for k in 0..n {
            vecs[k][slot] = v[k][*col];
        }
    }
    SymEigen { vals, vecs }
}

/// `U f(L) U^T` for symmetric input with eigendecomposition `U L U^T`.
pub fn sym_apply(m: &Mat, n: usize, f: impl Fn(f64) -> f64) -> Mat {
    let eig = sym_eigen(m, n);
    let mut out = [[0.0; 3]; 3];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += eig.vecs[i][k] * f(eig.vals[k]) * eig.vecs[j][k];
            }
            out[i][j] = s;
        }
    }
    out
}

/// Spectral power `m^t` of a positive definite symmetric matrix.
pub fn matrix_power(m: &Mat, n: usize, t: f64) -> Result<Mat> {
    let eig = sym_eigen(m, n);
    if eig.vals[..n].iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Singularity);
    }
    let mut out = [[0.0; 3]; 3];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += eig.vecs[i][k] * eig.vals[k].powf(t) * eig.vecs[j][k];
            }
            out[i][j] = s;
        }
    }
    Ok(out)
}

/// Largest singular value.  Closed form through dimension 2, Jacobi on
/// `m^T m` for dimension 3.
pub fn operator_norm(m: &Mat, n: usize) -> f64 {
    match n {
        1 => m[0][0].abs(),
        2 => {
            let a = m[0][0] * m[0][0] + m[1][0] * m[1][0];
            let b = m[0][0] * m[0][1] + m[1][0] * m[1][1];
            let c = m[0][1] * m[0][1] + m[1][1] * m[1][1];
            let mid = 0.5 * (a + c);
            let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            (mid + rad).sqrt()
        }
        3 => {
            let g = mat_mul(&transpose(m, 3), m, 3);
            let eig = sym_eigen(&g, 3);
            eig.vals[2].max(0.0).sqrt()
        }
        _ => panic!("dimension {n} out of range"),
    }
}

/// Inverse of a symmetric positive definite matrix via its spectrum.
pub fn inverse_spd(m: &Mat, n: usize) -> Result<Mat> {
    matrix_power(m, n, -1.0)
}

/// Gaussian elimination with partial pivoting.
pub fn solve(a: &Mat, b: &[f64; 3], n: usize) -> Result<[f64; 3]> {
    let mut m = *a;
    let mut rhs = *b;
    for col in 0..n {
        let mut piv = col;
        for r in (col + 1)..n {
            if m[r][col].abs() > m[piv][col].abs() {
                piv = r;
            }
        }
        if m[piv][col].abs() < 1e-14 {
            return Err(Error::Singularity);
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for r in (col + 1)..n {
            let f = m[r][col] / m[col][col];
            for c in col..n {
                m[r][c] -= f * m[col][c];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut x = [0.0; 3];
    for col in (0..n).rev() {
        let mut s = rhs[col];
        for c in (col + 1)..n {
            s -= m[col][c] * x[c];
        }
        x[col] = s / m[col][col];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn eigen_known_2x2() {
        let m: Mat = [[2.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0; 3]];
        let e = sym_eigen(&m, 2);
        assert!(approx(e.vals[0], 1.0, 1e-12));
        assert!(approx(e.vals[1], 3.0, 1e-12));
        // eigenvector for 1 is (1,-1)/sqrt(2) up to sign
        let v = [e.vecs[0][0], e.vecs[1][0]];
        assert!(approx((v[0] + v[1]).abs(), 0.0, 1e-12));
    }

    #[test]
    fn eigen_known_3x3() {
        let m: Mat = [[2.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 5.0]];
        let e = sym_eigen(&m, 3);
        assert!(approx(e.vals[0], 1.0, 1e-12));
        assert!(approx(e.vals[1], 3.0, 1e-12));
        assert!(approx(e.vals[2], 5.0, 1e-12));
    }

    #[test]
    fn diagonal_input_is_bit_exact() {
        let m: Mat = [[0.25, 0.0, 0.0], [0.0, 4.0, 0.0], [0.0, 0.0, 1.0]];
        let e = sym_eigen(&m, 3);
        assert_eq!(e.vals, [0.25, 1.0, 4.0]);
        let id = identity(3);
        let p = matrix_power(&id, 3, 0.37).unwrap();
        assert_eq!(p, id);
        assert_eq!(operator_norm(&id, 3), 1.0);
        assert_eq!(operator_norm(&identity(2), 2), 1.0);
        assert_eq!(operator_norm(&identity(1), 1), 1.0);
    }

    #[test]
    fn power_of_diagonal_acts_entrywise() {
        let m: Mat = [[4.0, 0.0, 0.0], [0.0, 9.0, 0.0], [0.0; 3]];
        let r = matrix_power(&m, 2, 0.5).unwrap();
        assert_eq!(r[0][0], 2.0);
        assert_eq!(r[1][1], 3.0);
        assert_eq!(r[0][1], 0.0);
    }

    #[test]
    fn power_rejects_indefinite() {
        let m: Mat = [[1.0, 0.0, 0.0], [0.0, -2.0, 0.0], [0.0; 3]];
        assert!(matrix_power(&m, 2, 0.5).is_err());
    }

    fn random_sym(rng: &mut impl rand::Rng, n: usize) -> Mat {
        let mut m = [[0.0; 3]; 3];
        for i in 0..n {
            for j in 0..=i {
                let v = rng.gen_range(-3.0f64..3.0);
                m[i][j] = v;
                m[j][i] = v;
            }
        }
        m
    }

    proptest! {
        #[test]
        fn eigen_reconstructs(seed in 0u64..300, n in 1usize..4) {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m = random_sym(&mut rng, n);
            let e = sym_eigen(&m, n);
            // U L U^T == m and U^T U == I
            for i in 0..n {
                for j in 0..n {
                    let mut s = 0.0;
                    let mut o = 0.0;
                    for k in 0..n {
                        s += e.vecs[i][k] * e.vals[k] * e.vecs[j][k];
                        o += e.vecs[k][i] * e.vecs[k][j];
                    }
                    let expect = if i == j { 1.0 } else { 0.0 };
                    prop_assert!(approx(s, m[i][j], 1e-10));
                    prop_assert!(approx(o, expect, 1e-10));
                }
            }
            prop_assert!(e.vals[..n].windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn sqrt_squares_back(seed in 0u64..200, n in 1usize..4) {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let b = random_sym(&mut rng, n);
            // b^T b + I is safely positive definite
            let mut m = mat_mul(&transpose(&b, n), &b, n);
            for i in 0..n {
                m[i][i] += 1.0;
            }
            let r = matrix_power(&m, n, 0.5).unwrap();
            let back = mat_mul(&r, &r, n);
            for i in 0..n {
                for j in 0..n {
                    prop_assert!(approx(back[i][j], m[i][j], 1e-9));
                }
            }
        }

        #[test]
        fn operator_norm_bounds_action(seed in 0u64..200, n in 1usize..4) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut m = [[0.0; 3]; 3];
            for i in 0..n {
                for j in 0..n {
                    m[i][j] = rng.gen_range(-2.0f64..2.0);
                }
            }
            let nm = operator_norm(&m, n);
            let mut attained = 0.0f64;
            for _ in 0..200 {
                let mut v = [0.0; 3];
                for x in v.iter_mut().take(n) {
                    *x = rng.gen_range(-1.0f64..1.0);
                }
                let len = norm3(&v);
                if len < 1e-9 {
                    continue;
                }
                let img = mat_vec(&m, &v, n);
                attained = attained.max(norm3(&img) / len);
            }
            prop_assert!(attained <= nm * (1.0 + 1e-10) + 1e-12);
            // top singular vector attains the norm: check via m^T m eigenvector
            let g = mat_mul(&transpose(&m, n), &m, n);
            let e = sym_eigen(&g, n);
            let mut top = [0.0; 3];
            for k in 0..n {
                top[k] = e.vecs[k][n - 1];
            }
            let img = mat_vec(&m, &top, n);
            prop_assert!(approx(norm3(&img), nm, 1e-9));
        }

        #[test]
        fn solve_round_trips(seed in 0u64..200, n in 1usize..4) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut a = [[0.0; 3]; 3];
            for i in 0..n {
                for j in 0..n {
                    a[i][j] = rng.gen_range(-2.0f64..2.0);
                }
                a[i][i] += 4.0; // diagonally dominant, well conditioned
            }
            let mut b = [0.0; 3];
            for x in b.iter_mut().take(n) {
                *x = rng.gen_range(-2.0f64..2.0);
            }
            let x = solve(&a, &b, n).unwrap();
            let back = mat_vec(&a, &x, n);
            for i in 0..n {
                prop_assert!(approx(back[i], b[i], 1e-10));
            }
        }

        #[test]
        fn inverse_spd_inverts(seed in 0u64..100, n in 1usize..4) {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let b = random_sym(&mut rng, n);
            let mut m = mat_mul(&transpose(&b, n), &b, n);
            for i in 0..n {
                m[i][i] += 0.5;
            }
            let inv = inverse_spd(&m, n).unwrap();
            let prod = mat_mul(&m, &inv, n);
            let id = identity(n);
            for i in 0..n {
                for j in 0..n {
                    prop_assert!(approx(prod[i][j], id[i][j], 1e-9));
                }
            }
        }
    }

    #[test]
    fn det_closed_forms() {
        let m: Mat = [[1.0, 2.0, 0.0], [3.0, 4.0, 0.0], [0.0; 3]];
        assert_eq!(det(&m, 2), -2.0);
        let m3: Mat = [[1.0, 0.0, 2.0], [0.0, 3.0, 0.0], [2.0, 0.0, 1.0]];
        assert!((det(&m3, 3) - (3.0 * (1.0 - 4.0))).abs() < 1e-12);
    }

    #[test]
    fn cross_is_orthogonal() {
        let a = [1.0, 2.0, 3.0];
        let b = [-1.0, 0.5, 2.0];
        let c = cross3(&a, &b);
        assert!(dot3(&a, &c).abs() < 1e-12);
        assert!(dot3(&b, &c).abs() < 1e-12);
    }
}
