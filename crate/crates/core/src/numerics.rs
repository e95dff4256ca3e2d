//! Dense complex-matrix kernels and the real-expansion operators.
//!
//! Matrices are `nalgebra` dense matrices over `Complex64`. Everything here is a
//! pure function of its inputs, so results are reproducible bit-for-bit.

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;
pub type RMatrix = DMatrix<f64>;
pub type RVector = DVector<f64>;

/// Default relative tolerance for [`numeric_rank`].
pub const RANK_TOL: f64 = 1e-9;
/// Pivots below this fraction of the Frobenius norm are declared singular.
pub const PIVOT_TOL: f64 = 1e-12;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// `e^{i phi}`.
pub fn cis(phi: f64) -> C64 {
    C64::from_polar(1.0, phi)
}

/// Builds a complex matrix from row-major entries.
pub fn cmatrix(rows: usize, cols: usize, entries: &[C64]) -> CMatrix {
    CMatrix::from_row_slice(rows, cols, entries)
}

pub fn fro_norm(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn fro_norm_real(m: &RMatrix) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn all_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// `‖m mᴴ − I‖_F`; zero exactly for unitary `m`.
pub fn unitary_deviation(m: &CMatrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let n = m.nrows();
    fro_norm(&(m * m.adjoint() - CMatrix::identity(n, n)))
}

pub fn ensure_unitary(m: &CMatrix, tol: f64) -> Result<()> {
    let deviation = unitary_deviation(m);
    if deviation <= tol {
        Ok(())
    } else {
        Err(Error::NotUnitary { deviation })
    }
}

/// Inverse by LU factorisation with partial pivoting.
///
/// A pivot whose magnitude does not exceed `1e-12 · ‖m‖_F` is reported as
/// [`Error::SingularMatrix`].
pub fn invert(m: &CMatrix) -> Result<CMatrix> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "invert needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let n = m.nrows();
    let threshold = PIVOT_TOL * fro_norm(m);
    let mut lu = m.clone();
    let mut perm: Vec<usize> = (0..n).collect();

    for k in 0..n {
        let (p, magnitude) = (k..n)
            .map(|r| (r, lu[(r, k)].norm()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if magnitude <= threshold {
            return Err(Error::SingularMatrix {
                pivot: k,
                magnitude,
                threshold,
            });
        }
        if p != k {
            lu.swap_rows(p, k);
            perm.swap(p, k);
        }
        let pivot = lu[(k, k)];
        for r in (k + 1)..n {
            let factor = lu[(r, k)] / pivot;
            lu[(r, k)] = factor;
            for c in (k + 1)..n {
                let sub = factor * lu[(k, c)];
                lu[(r, c)] -= sub;
            }
        }
    }

    let mut inv = CMatrix::zeros(n, n);
    for col in 0..n {
        // P·m = L·U, so solve L·U·x = P·e_col.
        let mut x: Vec<C64> = perm.iter().map(|&src| if src == col { ONE } else { ZERO }).collect();
        for r in 0..n {
            let mut acc = x[r];
            for c in 0..r {
                acc -= lu[(r, c)] * x[c];
            }
            x[r] = acc;
        }
        for r in (0..n).rev() {
            let mut acc = x[r];
            for c in (r + 1)..n {
                acc -= lu[(r, c)] * x[c];
            }
            x[r] = acc / lu[(r, r)];
        }
        for r in 0..n {
            inv[(r, col)] = x[r];
        }
    }
    Ok(inv)
}

/// Eigen-decomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Sorted in non-ascending order.
    pub values: Vec<f64>,
    /// Column `j` is the eigenvector of `values[j]`.
    pub vectors: CMatrix,
}

pub fn eig_hermitian(m: &CMatrix) -> Result<HermitianEigen> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "eig_hermitian needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let deviation = fro_norm(&(m - m.adjoint()));
    if deviation > 1e-9 * fro_norm(m) {
        return Err(Error::NotHermitian { deviation });
    }
    let n = m.nrows();
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&j| eig.eigenvalues[j]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(HermitianEigen { values, vectors })
}

/// Eigenvalues and a unitary eigenbasis of a unitary matrix, `p = U·diag(λ)·Uᴴ`.
///
/// Uses the complex Schur form, which is diagonal for normal matrices.
pub fn eig_unitary(p: &CMatrix) -> Result<(Vec<C64>, CMatrix)> {
    ensure_unitary(p, 1e-9)?;
    let (q, t) = p.clone().schur().unpack();
    let values = (0..p.nrows()).map(|j| t[(j, j)]).collect();
    Ok((values, q))
}

/// Singular values in non-ascending order.
pub fn singular_values<T>(m: &DMatrix<T>) -> Vec<f64>
where
    T: ComplexField<RealField = f64>,
{
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Number of singular values above `tol` times the largest one.
pub fn numeric_rank<T>(m: &DMatrix<T>, tol: f64) -> usize
where
    T: ComplexField<RealField = f64>,
{
    let sv = singular_values(m);
    match sv.first() {
        Some(&largest) if largest > 0.0 => sv.iter().filter(|&&s| s > tol * largest).count(),
        _ => 0,
    }
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = CMatrix::zeros(ra * rb, ca * cb);
    for i in 0..ra {
        for j in 0..ca {
            let s = a[(i, j)];
            if s == ZERO {
                continue;
            }
            out.view_mut((i * rb, j * cb), (rb, cb)).copy_from(&(b * s));
        }
    }
    out
}

/// Replaces every entry `x` by the real 2×2 block `[[x_I, −x_Q], [x_Q, x_I]]`.
pub fn realify(m: &CMatrix) -> RMatrix {
    let (r, c) = m.shape();
    let mut out = RMatrix::zeros(2 * r, 2 * c);
    for i in 0..r {
        for j in 0..c {
            let z = m[(i, j)];
            out[(2 * i, 2 * j)] = z.re;
            out[(2 * i, 2 * j + 1)] = -z.im;
            out[(2 * i + 1, 2 * j)] = z.im;
            out[(2 * i + 1, 2 * j + 1)] = z.re;
        }
    }
    out
}

/// Interleaves real and imaginary parts: `[x1_I, x1_Q, …, xn_I, xn_Q]`.
pub fn tilde_vec(v: &[C64]) -> RVector {
    RVector::from_iterator(2 * v.len(), v.iter().flat_map(|z| [z.re, z.im]))
}

pub fn untilde_vec(r: &[f64]) -> CVector {
    assert!(r.len().is_multiple_of(2), "real vector length must be even");
    CVector::from_iterator(r.len() / 2, r.chunks_exact(2).map(|p| C64::new(p[0], p[1])))
}

/// Column-stacking `vec` operator.
pub fn vec_cols(m: &CMatrix) -> CVector {
    CVector::from_column_slice(m.as_slice())
}

pub fn unvec(v: &[C64], rows: usize, cols: usize) -> CMatrix {
    assert_eq!(v.len(), rows * cols, "unvec length mismatch");
    CMatrix::from_column_slice(rows, cols, v)
}

/// Entrywise conjugate.
pub fn conj(m: &CMatrix) -> CMatrix {
    m.map(|z| z.conj())
}

/// A `CN(0, 1)` sample: independent real and imaginary parts of variance 1/2.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn complex_normal_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    let mut m = CMatrix::zeros(rows, cols);
    // Fill column-major so the draw order matches `vec`.
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = complex_normal(rng);
        }
    }
    m
}

/// Haar-distributed unitary via QR of a Ginibre matrix with phase correction.
pub fn haar_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix {
    let g = complex_normal_matrix(rng, n, n);
    let (mut q, r) = g.qr().unpack();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { ONE };
        let mut col = q.column_mut(j);
        col *= phase;
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn invert_identity_and_diagonal() {
        let i3 = CMatrix::identity(3, 3);
        assert_eq!(invert(&i3).unwrap(), i3);

        let d = cmatrix(2, 2, &[c(2.0, 0.0), ZERO, ZERO, c(0.0, 4.0)]);
        let inv = invert(&d).unwrap();
        assert!((inv[(0, 0)] - c(0.5, 0.0)).norm() < 1e-15);
        assert!((inv[(1, 1)] - c(0.0, -0.25)).norm() < 1e-15);
        assert_eq!(inv[(0, 1)], ZERO);
    }

    #[test]
    fn invert_reports_singular() {
        let m = cmatrix(2, 2, &[ONE, c(2.0, 0.0), c(2.0, 0.0), c(4.0, 0.0)]);
        assert!(matches!(invert(&m), Err(Error::SingularMatrix { .. })));
        assert!(matches!(invert(&CMatrix::zeros(3, 3)), Err(Error::SingularMatrix { .. })));
        assert!(matches!(invert(&CMatrix::zeros(2, 3)), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn invert_residual_on_random_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [4usize, 1, 2, 3, 6] {
            for _ in 0..200 {
                let m = complex_normal_matrix(&mut rng, n, n);
                let a = invert(&m).unwrap();
                let residual = fro_norm(&(&m * &a - CMatrix::identity(n, n)));
                assert!(residual <= 1e-9 * fro_norm(&m) * fro_norm(&a), "residual {residual}");
            }
        }
    }

    #[test]
    fn fro_norm_examples() {
        assert_eq!(fro_norm(&CMatrix::zeros(2, 2)), 0.0);
        assert!((fro_norm(&CMatrix::identity(5, 5)) - 5f64.sqrt()).abs() < 1e-15);
        assert_eq!(fro_norm(&cmatrix(1, 2, &[c(3.0, 0.0), c(0.0, 4.0)])), 5.0);
    }

    #[test]
    fn eig_hermitian_examples() {
        let e = eig_hermitian(&CMatrix::identity(2, 2)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0]);

        let m = cmatrix(2, 2, &[c(2.0, 0.0), ZERO, ZERO, c(-1.0, 0.0)]);
        let e = eig_hermitian(&m).unwrap();
        assert!((e.values[0] - 2.0).abs() < 1e-14 && (e.values[1] + 1.0).abs() < 1e-14);
        assert!((e.vectors[(0, 0)].norm() - 1.0).abs() < 1e-14);
        assert!((e.vectors[(1, 1)].norm() - 1.0).abs() < 1e-14);

        let not_h = cmatrix(2, 2, &[ONE, c(1.0, 0.0), c(0.0, 0.0), ONE]);
        assert!(matches!(eig_hermitian(&not_h), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn eig_hermitian_gram_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let h = complex_normal_matrix(&mut rng, 3, 3);
            let g = h.adjoint() * &h;
            let e = eig_hermitian(&g).unwrap();
            assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
            assert!(e.values.iter().all(|&l| l >= -1e-12));
            let trace: f64 = (0..3).map(|j| g[(j, j)].re).sum();
            let sum: f64 = e.values.iter().sum();
            assert!((trace - sum).abs() <= 1e-9 * trace);
            let lam = CMatrix::from_diagonal(&CVector::from_iterator(
                3,
                e.values.iter().map(|&l| c(l, 0.0)),
            ));
            let recon = &e.vectors * lam * e.vectors.adjoint();
            assert!(fro_norm(&(recon - &g)) < 1e-9 * fro_norm(&g).max(1.0));
            assert!(unitary_deviation(&e.vectors) < 1e-9);
        }
    }

    #[test]
    fn numeric_rank_examples() {
        assert_eq!(numeric_rank(&CMatrix::zeros(3, 3), RANK_TOL), 0);
        assert_eq!(numeric_rank(&CMatrix::identity(3, 3), RANK_TOL), 3);
        let u = CVector::from_vec(vec![c(1.0, 2.0), c(-0.5, 0.0), c(0.0, 3.0)]);
        let v = CVector::from_vec(vec![c(0.3, -1.0), c(2.0, 2.0), ONE]);
        assert_eq!(numeric_rank(&(&u * v.adjoint()), RANK_TOL), 1);
    }

    #[test]
    fn kron_examples() {
        let five = cmatrix(1, 1, &[c(5.0, 0.0)]);
        let k = kron(&CMatrix::identity(2, 2), &five);
        assert_eq!(k, cmatrix(2, 2, &[c(5.0, 0.0), ZERO, ZERO, c(5.0, 0.0)]));

        let swap = cmatrix(2, 2, &[ZERO, ONE, ONE, ZERO]);
        let k = kron(&swap, &CMatrix::identity(2, 2));
        let mut expected = CMatrix::zeros(4, 4);
        expected.view_mut((0, 2), (2, 2)).fill_with_identity();
        expected.view_mut((2, 0), (2, 2)).fill_with_identity();
        assert_eq!(k, expected);
    }

    #[test]
    fn realify_and_tilde_examples() {
        assert_eq!(
            realify(&cmatrix(1, 1, &[I])),
            RMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])
        );
        assert_eq!(realify(&CMatrix::identity(2, 2)), RMatrix::identity(4, 4));
        assert_eq!(tilde_vec(&[c(1.0, 2.0)]).as_slice(), &[1.0, 2.0]);
        assert_eq!(tilde_vec(&[I, c(3.0, 0.0)]).as_slice(), &[0.0, 1.0, 3.0, 0.0]);
        let v = vec![c(1.5, -2.0), c(0.0, 7.0), c(-3.0, 0.25)];
        assert_eq!(untilde_vec(tilde_vec(&v).as_slice()).as_slice(), v.as_slice());
    }

    #[test]
    fn haar_unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=6 {
            assert!(unitary_deviation(&haar_unitary(&mut rng, n)) < 1e-12);
        }
    }

    #[test]
    fn eig_unitary_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in 2..=6 {
            let p = haar_unitary(&mut rng, n);
            let (vals, u) = eig_unitary(&p).unwrap();
            assert!(unitary_deviation(&u) < 1e-10);
            let d = CMatrix::from_diagonal(&CVector::from_vec(vals.clone()));
            assert!(fro_norm(&(&u * d * u.adjoint() - &p)) < 1e-10);
            assert!(vals.iter().all(|l| (l.norm() - 1.0).abs() < 1e-10));
        }
    }

    fn arb_cmatrix(rows: usize, cols: usize) -> impl Strategy<Value = CMatrix> {
        proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), rows * cols)
            .prop_map(move |e| CMatrix::from_iterator(rows, cols, e.into_iter().map(|(a, b)| c(a, b))))
    }

    proptest! {
        #[test]
        fn realify_commutes_with_tilde(m in arb_cmatrix(2, 2), v in arb_cmatrix(2, 1)) {
            let lhs = tilde_vec((&m * &v).as_slice());
            let rhs = realify(&m) * tilde_vec(v.as_slice());
            prop_assert!((lhs - rhs).amax() < 1e-12);
        }

        #[test]
        fn vec_of_product_via_kron(a in arb_cmatrix(4, 4), b in arb_cmatrix(4, 4)) {
            let lhs = vec_cols(&(&a * &b));
            let rhs = kron(&b.transpose(), &CMatrix::identity(4, 4)) * vec_cols(&a);
            let scale = 1.0 + fro_norm(&a) * fro_norm(&b);
            prop_assert!((lhs - rhs).iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-12 * scale);
        }
    }
}
