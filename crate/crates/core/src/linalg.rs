//! Complex matrix helpers and the real coordinate map for Hermitian matrices.
//!
//! A Hermitian `m × m` matrix is stored as `m²` reals: the diagonal first, then the real
//! parts of the strict upper triangle (row-major pair order), then the imaginary parts
//! of the same pairs.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const J: C64 = C64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Number of real coordinates of an `m × m` Hermitian matrix.
pub fn herm_dim(m: usize) -> usize {
    m * m
}

fn pairs(m: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..m).flat_map(move |i| (i + 1..m).map(move |j| (i, j)))
}

/// Real coordinates of a Hermitian matrix (the strict lower triangle is ignored).
pub fn herm_to_real(x: &CMat) -> Vec<f64> {
    let m = x.nrows();
    let np = m * (m - 1) / 2;
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        out[i] = x[(i, i)].re;
    }
    for (k, (i, j)) in pairs(m).enumerate() {
        out[m + k] = x[(i, j)].re;
        out[m + np + k] = x[(i, j)].im;
    }
    out
}

pub fn real_to_herm(v: &[f64], m: usize) -> CMat {
    debug_assert_eq!(v.len(), m * m);
    let np = m * (m - 1) / 2;
    let mut x = CMat::zeros(m, m);
    for i in 0..m {
        x[(i, i)] = c(v[i], 0.0);
    }
    for (k, (i, j)) in pairs(m).enumerate() {
        let z = c(v[m + k], v[m + np + k]);
        x[(i, j)] = z;
        x[(j, i)] = z.conj();
    }
    x
}

/// Coefficients `a` with `Tr(C X) = a · herm_to_real(X)` for Hermitian `C` and `X`.
pub fn trace_coeffs(cm: &CMat) -> Vec<f64> {
    let m = cm.nrows();
    let np = m * (m - 1) / 2;
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        out[i] = cm[(i, i)].re;
    }
    for (k, (i, j)) in pairs(m).enumerate() {
        // average the two triangles so slightly non-Hermitian input is symmetrized
        let z = (cm[(i, j)] + cm[(j, i)].conj()) * 0.5;
        out[m + k] = 2.0 * z.re;
        out[m + np + k] = 2.0 * z.im;
    }
    out
}

/// `(log det X, X⁻¹)` for Hermitian positive definite `X`; `None` otherwise.
pub fn hpd_logdet_inverse(x: &CMat) -> Option<(f64, CMat)> {
    let m = x.nrows();
    let mut l = CMat::zeros(m, m);
    let mut logdet = 0.0;
    for j in 0..m {
        let mut d = x[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let ljj = d.sqrt();
        l[(j, j)] = c(ljj, 0.0);
        logdet += 2.0 * ljj.ln();
        for i in j + 1..m {
            let mut z = x[(i, j)];
            for k in 0..j {
                z -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = z / ljj;
        }
    }
    // L⁻¹ by forward substitution, then X⁻¹ = L⁻ᴴ L⁻¹
    let mut linv = CMat::zeros(m, m);
    for col in 0..m {
        for i in col..m {
            let mut z = if i == col { c(1.0, 0.0) } else { c(0.0, 0.0) };
            for k in col..i {
                z -= l[(i, k)] * linv[(k, col)];
            }
            linv[(i, col)] = z / l[(i, i)].re;
        }
    }
    let inv = linv.adjoint() * &linv;
    Some((logdet, hermitian_part(&inv)))
}

/// `a bᴴ`
pub fn outer(a: &CVec, b: &CVec) -> CMat {
    a * b.adjoint()
}

pub fn dyad(a: &CVec) -> CMat {
    outer(a, a)
}

/// Real part of `Tr(A B)`.
pub fn trace_re(a: &CMat, b: &CMat) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += (a[(i, k)] * b[(k, i)]).re;
        }
    }
    acc
}

pub fn hermitian_part(x: &CMat) -> CMat {
    (x + x.adjoint()) * c(0.5, 0.0)
}

/// Largest absolute deviation from Hermitian symmetry.
pub fn hermitian_defect(x: &CMat) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            worst = worst.max((x[(i, j)] - x[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen(x: &CMat) -> (Vec<f64>, CMat) {
    let eig = nalgebra::SymmetricEigen::new(hermitian_part(x));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vecs = CMat::zeros(x.nrows(), x.nrows());
    for (col, &k) in order.iter().enumerate() {
        vecs.set_column(col, &eig.eigenvectors.column(k));
    }
    (vals, vecs)
}

pub fn min_eigenvalue(x: &CMat) -> f64 {
    hermitian_eigen(x).0.first().copied().unwrap_or(0.0)
}

pub fn norm_sqr(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Rotate `v` so that its first non-negligible component is real and positive.
pub fn fix_phase(v: &mut CVec) {
    let scale = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return;
    }
    if let Some(z) = v.iter().find(|z| z.norm() > 1e-12 * scale).copied() {
        let rot = z.conj() / z.norm();
        for e in v.iter_mut() {
            *e *= rot;
        }
    }
}

pub fn real_identity(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n)
}

#[cfg(test)]
mod tests {
    #[test]
    fn hpd_factor_matches_inverse_and_rejects_indefinite() {
        let x = CMat::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.5, -0.5), c(0.5, 0.5), c(1.0, 0.0)]);
        let (ld, inv) = hpd_logdet_inverse(&x).unwrap();
        assert!((ld - (2.0f64 - 0.5).ln()).abs() < 1e-12);
        assert!((&x * &inv - CMat::identity(2, 2)).norm() < 1e-12);
        let y = CMat::from_row_slice(2, 2, &[c(-1.0, 0.0), c(0.0, 1e-9), c(0.0, -1e-9), c(-1.0, 0.0)]);
        assert!(hpd_logdet_inverse(&y).is_none());
        let z = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(1.0, 0.0)]);
        assert!(hpd_logdet_inverse(&z).is_none());
    }

    use super::*;

    fn sample(m: usize) -> CMat {
        let mut x = CMat::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                x[(i, j)] = c((i + 2 * j) as f64 * 0.3 - 0.7, (j as f64 - i as f64) * 0.4);
            }
        }
        hermitian_part(&x)
    }

    #[test]
    fn real_coordinates_round_trip() {
        for m in 1..5 {
            let x = sample(m);
            let back = real_to_herm(&herm_to_real(&x), m);
            assert!((back - &x).norm() < 1e-14);
        }
    }

    #[test]
    fn trace_coefficients_match_trace() {
        let a = sample(3);
        let mut b = sample(3);
        b[(0, 2)] = c(0.25, -1.5);
        b[(2, 0)] = c(0.25, 1.5);
        let lhs: f64 = trace_coeffs(&a).iter().zip(herm_to_real(&b)).map(|(p, q)| p * q).sum();
        let rhs = (&a * &b).trace();
        assert!((lhs - rhs.re).abs() < 1e-12);
        assert!(rhs.im.abs() < 1e-12);
    }

    #[test]
    fn eigen_is_sorted_and_reconstructs() {
        let x = sample(3);
        let (vals, vecs) = hermitian_eigen(&x);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let d = CMat::from_diagonal(&DVector::from_iterator(3, vals.iter().map(|&v| c(v, 0.0))));
        let rebuilt = &vecs * d * vecs.adjoint();
        assert!((rebuilt - x).norm() < 1e-10);
    }

    #[test]
    fn phase_fix_makes_first_entry_real_positive() {
        let mut v = CVec::from_vec(vec![c(0.0, 0.0), c(0.0, -2.0), c(1.0, 1.0)]);
        fix_phase(&mut v);
        assert!(v[1].im.abs() < 1e-15 && v[1].re > 0.0);
        assert!((v[1].re - 2.0).abs() < 1e-15);
    }
}
