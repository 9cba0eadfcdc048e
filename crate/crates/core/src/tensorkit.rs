//! Dense complex linear algebra used throughout the crate.
//!
//! `vec` is strictly column stacking, which is also nalgebra's storage order,
//! so `vec(X)` is a copy of `X.as_slice()`. Permutations (the commutation map
//! `K` and the structure map `R`) are kept as index arrays and applied in
//! linear time; they are only materialized by the dense oracle.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{QptError, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Relative tolerance for treating a matrix as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOL: f64 = 1e-10;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Column-stacked vector of `x`.
pub fn vec(x: &CMatrix) -> CVector {
    CVector::from_column_slice(x.as_slice())
}

/// Inverse of [`vec`] for a `rows x cols` matrix.
pub fn unvec(v: &[C64], rows: usize, cols: usize) -> Result<CMatrix> {
    if v.len() != rows * cols {
        return Err(QptError::DimensionMismatch(format!(
            "cannot reshape {} entries into {rows}x{cols}",
            v.len()
        )));
    }
    Ok(CMatrix::from_column_slice(rows, cols, v))
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn frobenius(x: &CMatrix) -> f64 {
    x.norm()
}

/// Largest entry modulus.
pub fn max_abs(x: &CMatrix) -> f64 {
    x.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `(X + X^†) / 2`
pub fn hermitian_part(x: &CMatrix) -> CMatrix {
    (x + x.adjoint()).scale(0.5)
}

pub fn is_hermitian(x: &CMatrix, tol: f64) -> bool {
    x.is_square() && (x - x.adjoint()).norm() <= tol * x.norm().max(1.0)
}

pub fn all_finite(x: &CMatrix) -> bool {
    x.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Outer product `u v^†`.
pub fn outer(u: &CVector, v: &CVector) -> CMatrix {
    u * v.adjoint()
}

/// A bijection on `0..size` stored as an index array.
///
/// As a matrix this is `P[forward[i], i] = 1`, so [`apply`](Self::apply)
/// computes `P v` and [`apply_inverse`](Self::apply_inverse) computes `P^T v`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationMap {
    forward: Vec<usize>,
}

impl PermutationMap {
    pub fn from_forward(forward: Vec<usize>) -> Result<Self> {
        let n = forward.len();
        let mut seen = vec![false; n];
        for &f in &forward {
            if f >= n || seen[f] {
                return Err(QptError::DimensionMismatch(format!(
                    "index array is not a permutation of 0..{n}"
                )));
            }
            seen[f] = true;
        }
        Ok(Self { forward })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            forward: (0..n).collect(),
        }
    }

    pub fn size(&self) -> usize {
        self.forward.len()
    }

    pub fn forward(&self) -> &[usize] {
        &self.forward
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.forward.len()];
        for (i, &f) in self.forward.iter().enumerate() {
            inv[f] = i;
        }
        Self { forward: inv }
    }

    /// `out[forward[i]] = v[i]`
    pub fn apply<T: Copy>(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.size(), "permutation size mismatch");
        let mut out = v.to_vec();
        for (i, &f) in self.forward.iter().enumerate() {
            out[f] = v[i];
        }
        out
    }

    /// `out[i] = v[forward[i]]`
    pub fn apply_inverse<T: Copy>(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.size(), "permutation size mismatch");
        self.forward.iter().map(|&f| v[f]).collect()
    }

    /// Dense 0/1 matrix. Only for oracles and tests.
    pub fn to_dense(&self) -> CMatrix {
        let n = self.size();
        let mut p = CMatrix::zeros(n, n);
        for (i, &f) in self.forward.iter().enumerate() {
            p[(f, i)] = C64::new(1.0, 0.0);
        }
        p
    }
}

/// The commutation map `K` with `K vec(A) = vec(A^T)` for any `rows x cols` `A`.
pub fn commutation_map(rows: usize, cols: usize) -> PermutationMap {
    let mut forward = vec![0; rows * cols];
    for c in 0..cols {
        for r in 0..rows {
            // A[r, c] sits at r + c*rows in vec(A) and at c + r*cols in vec(A^T)
            forward[r + c * rows] = c + r * cols;
        }
    }
    PermutationMap { forward }
}

/// The structure map `R` with `(I_{d^2} ⊗ V^T) R = B` in the natural basis.
///
/// Column `j + k d^2` of `B` (with `E_j = |x><y|`, `j = x d + y`, and
/// `E_k = |u><v|`, `k = u d + v`) equals column
/// `d^2 (u d + x) + v d + y` of `I ⊗ V^T`.
pub fn r_map(d: usize) -> PermutationMap {
    let d2 = d * d;
    let mut forward = vec![0; d2 * d2];
    for u in 0..d {
        for v in 0..d {
            let k = u * d + v;
            for x in 0..d {
                for y in 0..d {
                    let j = x * d + y;
                    forward[j + k * d2] = d2 * (u * d + x) + v * d + y;
                }
            }
        }
    }
    PermutationMap { forward }
}

/// Partial trace over the first factor of a `d^2 x d^2` matrix.
///
/// Convention: `Tr_1(vec(S) vec(T)^†) = S T^†`. Index `b d + a` carries the
/// first-factor index `b`.
pub fn partial_trace_first(x: &CMatrix, d: usize) -> Result<CMatrix> {
    let d2 = d * d;
    if x.nrows() != d2 || x.ncols() != d2 {
        return Err(QptError::DimensionMismatch(format!(
            "partial trace expects {d2}x{d2}, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    let mut out = CMatrix::zeros(d, d);
    for b in 0..d {
        out += x.view((b * d, b * d), (d, d));
    }
    Ok(out)
}

/// Spectral decomposition `X = U diag(values) U^†` with values descending.
#[derive(Debug, Clone)]
pub struct HermitianEig {
    pub vectors: CMatrix,
    pub values: Vec<f64>,
}

impl HermitianEig {
    pub fn reconstruct(&self) -> CMatrix {
        from_spectrum(&self.vectors, &self.values)
    }

    pub fn max(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn min(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}

/// Eigendecomposition of the Hermitian part of `x`.
pub fn hermitian_eig(x: &CMatrix) -> Result<HermitianEig> {
    if !x.is_square() {
        return Err(QptError::NotSquare {
            rows: x.nrows(),
            cols: x.ncols(),
        });
    }
    let eig = hermitian_part(x).symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let n = x.nrows();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    Ok(HermitianEig { vectors, values })
}

/// `U diag(values) U^†`
pub fn from_spectrum(u: &CMatrix, values: &[f64]) -> CMatrix {
    let mut scaled = u.clone();
    for (j, &v) in values.iter().enumerate() {
        scaled.column_mut(j).scale_mut(v);
    }
    scaled * u.adjoint()
}

/// Principal square root of a positive semidefinite matrix.
pub fn psd_sqrt(x: &CMatrix) -> Result<CMatrix> {
    let eig = hermitian_eig(x)?;
    let scale = eig.max().abs().max(1.0);
    if eig.min() < -1e-10 * scale {
        return Err(QptError::NotPositive(eig.min()));
    }
    let floor = 1e-12 * eig.max().max(0.0);
    let roots: Vec<f64> = eig
        .values
        .iter()
        .map(|&v| if v <= floor { 0.0 } else { v.sqrt() })
        .collect();
    Ok(from_spectrum(&eig.vectors, &roots))
}

/// Singular values, descending.
pub fn singular_values(a: &CMatrix) -> Vec<f64> {
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Left pseudo-inverse `(A^† A)^{-1} A^†` of a tall full-column-rank matrix,
/// computed from the SVD rather than the normal equations.
pub fn left_pinv(a: &CMatrix) -> Result<CMatrix> {
    if a.nrows() < a.ncols() {
        return Err(QptError::NotInformationallyComplete(format!(
            "{}x{} system has fewer rows than unknowns",
            a.nrows(),
            a.ncols()
        )));
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin.partial_cmp(&(RANK_TOL * smax)) != Some(std::cmp::Ordering::Greater) {
        return Err(QptError::NotInformationallyComplete(format!(
            "smallest singular value {smin:e} vs largest {smax:e}"
        )));
    }
    svd.pseudo_inverse(0.0)
        .map_err(|e| QptError::NotInformationallyComplete(e.to_string()))
}

/// Hermitian, PSD and unit trace within `tol`.
pub fn check_density_matrix(rho: &CMatrix, tol: f64) -> Result<()> {
    if !rho.is_square() {
        return Err(QptError::NotSquare {
            rows: rho.nrows(),
            cols: rho.ncols(),
        });
    }
    if !all_finite(rho) {
        return Err(QptError::InvalidState("non-finite entry".into()));
    }
    if (rho - rho.adjoint()).norm() > tol {
        return Err(QptError::InvalidState("not Hermitian".into()));
    }
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
        return Err(QptError::InvalidState(format!("trace {tr} is not 1")));
    }
    let min = hermitian_eig(rho)?.min();
    if min < -tol {
        return Err(QptError::InvalidState(format!("eigenvalue {min:e} < 0")));
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    pub fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    pub fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> CMatrix {
        CMatrix::from_fn(rows, cols, |_, _| {
            c(rng.sample(StandardNormal), rng.sample(StandardNormal))
        })
    }

    pub fn random_hermitian(n: usize, rng: &mut impl Rng) -> CMatrix {
        hermitian_part(&random_matrix(n, n, rng))
    }

    pub fn random_psd(n: usize, rng: &mut impl Rng) -> CMatrix {
        let b = random_matrix(n, n, rng);
        &b * b.adjoint()
    }

    pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
        assert_eq!(a.shape(), b.shape());
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use proptest::prelude::*;

    fn m2(a: [f64; 4]) -> CMatrix {
        // row-major literal
        CMatrix::from_row_slice(2, 2, &a.map(|v| c(v, 0.0)))
    }

    #[test]
    fn vec_stacks_columns() {
        let x = m2([1.0, 2.0, 3.0, 4.0]);
        let v: Vec<f64> = vec(&x).iter().map(|z| z.re).collect();
        assert_eq!(v, vec![1.0, 3.0, 2.0, 4.0]);
        let id: Vec<f64> = vec(&identity(2)).iter().map(|z| z.re).collect();
        assert_eq!(id, vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(unvec(vec(&x).as_slice(), 2, 2).unwrap(), x);
        assert!(unvec(vec(&x).as_slice(), 3, 2).is_err());
    }

    #[test]
    fn vec_of_triple_product() {
        let mut r = rng(1);
        let (x, y, z) = (
            random_matrix(2, 2, &mut r),
            random_matrix(2, 2, &mut r),
            random_matrix(2, 2, &mut r),
        );
        let lhs = vec(&(&x * &y * &z));
        let rhs = kron(&z.transpose(), &x) * vec(&y);
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn commutation_map_examples() {
        assert_eq!(commutation_map(1, 1), PermutationMap::identity(1));
        let a = m2([1.0, 2.0, 3.0, 4.0]);
        let k = commutation_map(2, 2);
        let out: Vec<f64> = k.apply(vec(&a).as_slice()).iter().map(|z| z.re).collect();
        assert_eq!(out, vec![1.0, 2.0, 3.0, 4.0]);

        let mut r = rng(2);
        let a = random_matrix(3, 2, &mut r);
        let k = commutation_map(3, 2);
        let out = k.apply(vec(&a).as_slice());
        assert_eq!(out, vec(&a.transpose()).as_slice().to_vec());
        // dense form agrees with the index form
        let dense = k.to_dense() * vec(&a);
        assert_eq!(dense.as_slice(), out.as_slice());
    }

    #[test]
    fn r_map_is_bijection() {
        for d in 2..=4 {
            let r = r_map(d);
            let mut f = r.forward().to_vec();
            f.sort_unstable();
            assert_eq!(f, (0..d.pow(4)).collect::<Vec<_>>());
        }
    }

    #[test]
    fn partial_trace_examples() {
        let mut r = rng(3);
        let s = random_matrix(2, 2, &mut r);
        let x = outer(&vec(&s), &vec(&s));
        let pt = partial_trace_first(&x, 2).unwrap();
        assert!(max_abs_diff(&pt, &(&s * s.adjoint())) < 1e-12);

        let pt = partial_trace_first(&identity(4), 2).unwrap();
        assert!(max_abs_diff(&pt, &identity(2).scale(2.0)) < 1e-15);

        let h = random_hermitian(9, &mut r);
        let pt = partial_trace_first(&h, 3).unwrap();
        assert!((pt.trace() - h.trace()).norm() < 1e-12);

        assert!(partial_trace_first(&identity(5), 2).is_err());
    }

    #[test]
    fn eig_examples() {
        let e = hermitian_eig(&m2([1.0, 0.0, 0.0, -1.0])).unwrap();
        assert_eq!(e.values, vec![1.0, -1.0]);

        let mut r = rng(4);
        let h = random_hermitian(16, &mut r);
        let e = hermitian_eig(&h).unwrap();
        assert!((e.reconstruct() - &h).norm() <= 1e-10);
        let unit = e.vectors.adjoint() * &e.vectors;
        assert!((unit - identity(16)).norm() < 1e-10);
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));

        assert!(matches!(
            hermitian_eig(&CMatrix::zeros(2, 3)),
            Err(QptError::NotSquare { .. })
        ));
    }

    #[test]
    fn sqrt_examples() {
        assert!(max_abs_diff(&psd_sqrt(&identity(3)).unwrap(), &identity(3)) < 1e-14);
        let s = psd_sqrt(&m2([4.0, 0.0, 0.0, 1.0])).unwrap();
        assert!(max_abs_diff(&s, &m2([2.0, 0.0, 0.0, 1.0])) < 1e-14);

        let mut r = rng(5);
        let a = random_psd(6, &mut r);
        let s = psd_sqrt(&a).unwrap();
        assert!((&s * &s - &a).norm() <= 1e-9);

        assert!(matches!(
            psd_sqrt(&m2([1.0, 0.0, 0.0, -0.5])),
            Err(QptError::NotPositive(_))
        ));
        // tiny negative noise is clamped
        assert!(psd_sqrt(&m2([1.0, 0.0, 0.0, -1e-13])).is_ok());
    }

    #[test]
    fn pinv_rejects_rank_deficiency() {
        let mut r = rng(6);
        let a = random_matrix(8, 4, &mut r);
        let p = left_pinv(&a).unwrap();
        assert!((&p * &a - identity(4)).norm() < 1e-10);
        let mut b = a.clone();
        let col = b.column(0).clone_owned();
        b.set_column(1, &col);
        assert!(left_pinv(&b).is_err());
        assert!(left_pinv(&random_matrix(3, 4, &mut r)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn unvec_inverts_vec(seed in any::<u64>(), rows in 1usize..6, cols in 1usize..6) {
            let x = random_matrix(rows, cols, &mut rng(seed));
            prop_assert_eq!(unvec(vec(&x).as_slice(), rows, cols).unwrap(), x);
        }

        #[test]
        fn commutation_is_involution_on_square(n in 1usize..7, seed in any::<u64>()) {
            let k = commutation_map(n, n);
            let v = vec(&random_matrix(n, n, &mut rng(seed)));
            prop_assert_eq!(k.apply(&k.apply(v.as_slice())), v.as_slice().to_vec());
            prop_assert_eq!(k.inverse(), k);
        }

        #[test]
        fn permutation_inverse_round_trip(n in 1usize..40, seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut f: Vec<usize> = (0..n).collect();
            f.shuffle(&mut rng(seed));
            let p = PermutationMap::from_forward(f).unwrap();
            let v: Vec<usize> = (100..100 + n).collect();
            prop_assert_eq!(p.apply_inverse(&p.apply(&v)), v.clone());
            prop_assert_eq!(p.inverse().apply(&p.apply(&v)), v);
        }

        #[test]
        fn partial_trace_of_outer_product(d in 2usize..5, seed in any::<u64>()) {
            let mut r = rng(seed);
            let (x, y) = (random_matrix(d, d, &mut r), random_matrix(d, d, &mut r));
            let pt = partial_trace_first(&outer(&vec(&x), &vec(&y)), d).unwrap();
            prop_assert!(max_abs_diff(&pt, &(&x * y.adjoint())) < 1e-10);
        }

        #[test]
        fn partial_trace_norm_bound(d in 2usize..5, seed in any::<u64>()) {
            let x = random_matrix(d * d, d * d, &mut rng(seed));
            let pt = partial_trace_first(&x, d).unwrap();
            prop_assert!(pt.norm() <= (d as f64).sqrt() * x.norm() + 1e-12);
        }

        #[test]
        fn weyl_inequalities(n in 2usize..10, seed in any::<u64>()) {
            let mut r = rng(seed);
            let x = random_hermitian(n, &mut r);
            let y = random_hermitian(n, &mut r);
            let (ex, ey) = (hermitian_eig(&x).unwrap(), hermitian_eig(&y).unwrap());
            let diff = (&x - &y).norm();
            let max_gap = ex.values.iter().zip(&ey.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let sq: f64 = ex.values.iter().zip(&ey.values).map(|(a, b)| (a - b).powi(2)).sum();
            prop_assert!(max_gap <= diff + 1e-10);
            prop_assert!(sq <= diff * diff + 1e-10);
        }
    }
}
