//! Dense complex linear algebra at small fixed dimension.
//!
//! [`ComplexMatrix`] is a square `DMatrix<Complex64>` with the predicates the
//! rest of the crate validates against. Hermitian eigendecomposition is
//! delegated to `nalgebra`; propagators and the real matrix exponential used
//! for transition semigroups are built on top.

use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tolerances;

pub type StateVector = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Square complex matrix. Houses Hamiltonians, shock unitaries, observables
/// and density matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix(DMatrix<Complex64>);

impl ComplexMatrix {
    pub fn from_dmatrix(m: DMatrix<Complex64>) -> Result<Self> {
        if m.nrows() == 0 || m.nrows() != m.ncols() {
            return Err(Error::Shape(format!(
                "expected a non-empty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self(m))
    }

    /// Builds a `dim × dim` matrix from row-major entries.
    pub fn from_row_major(dim: usize, entries: &[Complex64]) -> Result<Self> {
        if dim == 0 || entries.len() != dim * dim {
            return Err(Error::Shape(format!(
                "dimension {dim} needs {} entries, got {}",
                dim * dim,
                entries.len()
            )));
        }
        Ok(Self(DMatrix::from_row_slice(dim, dim, entries)))
    }

    pub fn from_real_row_major(dim: usize, entries: &[f64]) -> Result<Self> {
        let entries: Vec<Complex64> = entries.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::from_row_major(dim, &entries)
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::zeros(dim, dim))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let d = DVector::from_iterator(diag.len(), diag.iter().map(|&x| Complex64::new(x, 0.0)));
        Self(DMatrix::from_diagonal(&d))
    }

    /// Single-entry matrix `|r⟩⟨c|`.
    pub fn unit(dim: usize, r: usize, c: usize) -> Self {
        let mut m = DMatrix::zeros(dim, dim);
        m[(r, c)] = ONE;
        Self(m)
    }

    /// Projector `ψψ†`.
    pub fn outer(psi: &StateVector) -> Self {
        Self(psi * psi.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.0
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.0[(r, c)]
    }

    pub fn row_major(&self) -> Vec<Complex64> {
        let n = self.dim();
        (0..n).flat_map(|r| (0..n).map(move |c| (r, c))).map(|(r, c)| self.0[(r, c)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self(&self.0 * c)
    }

    /// `U · self · U†`
    pub fn conjugate_by(&self, u: &ComplexMatrix) -> Self {
        Self(&u.0 * &self.0 * u.0.adjoint())
    }

    /// `[self, other]`
    pub fn commutator(&self, other: &ComplexMatrix) -> Self {
        Self(&self.0 * &other.0 - &other.0 * &self.0)
    }

    pub fn hermitian_defect(&self) -> f64 {
        (&self.0 - self.0.adjoint()).norm()
    }

    pub fn unitary_defect(&self) -> f64 {
        let n = self.dim();
        (self.0.adjoint() * &self.0 - DMatrix::<Complex64>::identity(n, n)).norm()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_defect() <= tol
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitary_defect() <= tol
    }

    /// Hermitian, unit trace, and no eigenvalue below `-tol`.
    pub fn is_density(&self, tol: f64) -> bool {
        self.ensure_density(tol).is_ok()
    }

    /// Smallest eigenvalue of the Hermitian part `(M + M†)/2`.
    pub fn min_eigenvalue(&self) -> f64 {
        let sym = (&self.0 + self.0.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(sym);
        eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn ensure_hermitian(&self, tol: f64) -> Result<()> {
        let defect = self.hermitian_defect();
        if defect <= tol {
            Ok(())
        } else {
            Err(Error::NotHermitian { defect, tol })
        }
    }

    pub fn ensure_unitary(&self, tol: f64) -> Result<()> {
        let defect = self.unitary_defect();
        if defect <= tol {
            Ok(())
        } else {
            Err(Error::NotUnitary { defect, tol })
        }
    }

    pub fn ensure_density(&self, tol: f64) -> Result<()> {
        self.ensure_hermitian(tol)?;
        let tr = self.trace();
        if (tr - ONE).norm() > tol {
            return Err(Error::NotDensity(format!("trace {tr} differs from 1")));
        }
        let min = self.min_eigenvalue();
        if min < -tol {
            return Err(Error::NotDensity(format!("eigenvalue {min:e} is negative")));
        }
        Ok(())
    }
}

impl Mul<&ComplexMatrix> for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 * &rhs.0)
    }
}

impl Mul<&StateVector> for &ComplexMatrix {
    type Output = StateVector;
    fn mul(self, rhs: &StateVector) -> StateVector {
        &self.0 * rhs
    }
}

impl Add<&ComplexMatrix> for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 + &rhs.0)
    }
}

impl Sub<&ComplexMatrix> for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 - &rhs.0)
    }
}

pub fn sigma_x() -> ComplexMatrix {
    ComplexMatrix::from_real_row_major(2, &[0.0, 1.0, 1.0, 0.0]).unwrap()
}

pub fn sigma_y() -> ComplexMatrix {
    ComplexMatrix::from_row_major(2, &[ZERO, -I, I, ZERO]).unwrap()
}

pub fn sigma_z() -> ComplexMatrix {
    ComplexMatrix::from_real_diagonal(&[1.0, -1.0])
}

/// Eigendecomposition `M = U Λ U†` with ascending eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianEig {
    pub eigenvalues: Vec<f64>,
    /// Columns are the eigenvectors.
    pub eigenvectors: ComplexMatrix,
}

impl HermitianEig {
    pub fn reconstruct(&self) -> ComplexMatrix {
        let d = DVector::from_iterator(
            self.eigenvalues.len(),
            self.eigenvalues.iter().map(|&x| Complex64::new(x, 0.0)),
        );
        let u = self.eigenvectors.as_matrix();
        ComplexMatrix(u * DMatrix::from_diagonal(&d) * u.adjoint())
    }

    /// `exp(−i t M / ħ)` from the stored decomposition.
    pub fn propagator(&self, t: f64, hbar: f64) -> ComplexMatrix {
        let n = self.eigenvalues.len();
        if t == 0.0 {
            return ComplexMatrix::identity(n);
        }
        let u = self.eigenvectors.as_matrix();
        let mut scaled = u.clone();
        for (j, &e) in self.eigenvalues.iter().enumerate() {
            let phase = Complex64::from_polar(1.0, -e * t / hbar);
            scaled.column_mut(j).iter_mut().for_each(|z| *z *= phase);
        }
        ComplexMatrix(scaled * u.adjoint())
    }
}

pub fn hermitian_eig(m: &ComplexMatrix) -> Result<HermitianEig> {
    m.ensure_hermitian(tolerances::HERMITIAN)?;
    let n = m.dim();
    let a = m.as_matrix();

    let diagonal = (0..n).all(|r| (0..n).all(|c| r == c || a[(r, c)] == ZERO));
    let (values, vectors): (Vec<f64>, DMatrix<Complex64>) = if diagonal {
        ((0..n).map(|i| a[(i, i)].re).collect(), DMatrix::identity(n, n))
    } else {
        // Symmetrize so round-off in the input cannot leak into the solver.
        let sym = (a + a.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(sym);
        (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
    };

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let eigenvalues = order.iter().map(|&i| values[i]).collect();
    let eigenvectors = DMatrix::from_fn(n, n, |r, c| vectors[(r, order[c])]);

    Ok(HermitianEig { eigenvalues, eigenvectors: ComplexMatrix(eigenvectors) })
}

/// `exp(−i t H / ħ)` by eigendecomposition.
pub fn unitary_propagator(h: &ComplexMatrix, t: f64, hbar: f64) -> Result<ComplexMatrix> {
    ensure_hbar(hbar)?;
    if !t.is_finite() {
        return Err(Error::InvalidArgument(format!("time {t} is not finite")));
    }
    Ok(hermitian_eig(h)?.propagator(t, hbar))
}

pub(crate) fn ensure_hbar(hbar: f64) -> Result<()> {
    if hbar.is_finite() && hbar > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("hbar must be positive and finite, got {hbar}")))
    }
}

const TAYLOR_DEGREE: u32 = 13;
const SCALED_NORM: f64 = 0.5;

/// `exp(t Q)` for a real square matrix, by scaling and squaring around a
/// degree-13 Taylor core.
pub fn real_matrix_exp(q: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    if q.nrows() != q.ncols() {
        return Err(Error::Shape(format!("expected a square matrix, got {}x{}", q.nrows(), q.ncols())));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidArgument(format!("time must be finite and non-negative, got {t}")));
    }
    let n = q.nrows();
    let mut a = q * t;
    let norm_1 = a
        .column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);

    let mut squarings = 0u32;
    let mut norm = norm_1;
    while norm > SCALED_NORM {
        norm *= 0.5;
        squarings += 1;
    }
    a *= 0.5f64.powi(squarings as i32);

    let id = DMatrix::<f64>::identity(n, n);
    let mut acc = id.clone();
    for k in (1..=TAYLOR_DEGREE).rev() {
        acc = &id + (&a * &acc) / k as f64;
    }
    for _ in 0..squarings {
        acc = &acc * &acc;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{LN_2, PI};

    fn max_abs_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
        (a.as_matrix() - b.as_matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn identity_eigendecomposition() {
        let eig = hermitian_eig(&ComplexMatrix::identity(2)).unwrap();
        assert_eq!(eig.eigenvalues, vec![1.0, 1.0]);
        assert_eq!(eig.eigenvectors, ComplexMatrix::identity(2));
    }

    #[test]
    fn sigma_z_eigenvalues_ascend() {
        let eig = hermitian_eig(&sigma_z()).unwrap();
        assert_eq!(eig.eigenvalues, vec![-1.0, 1.0]);
        assert_eq!(eig.reconstruct(), sigma_z());
    }

    #[test]
    fn random_hermitian_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let m = random::hermitian(4, &mut rng);
            let eig = hermitian_eig(&m).unwrap();
            let residual = (&m - &eig.reconstruct()).frobenius_norm();
            assert!(residual <= 1e-12 * m.frobenius_norm(), "residual {residual:e}");
            assert!(eig.eigenvectors.unitary_defect() <= 1e-12);
            assert!(eig.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn two_by_two_eigenvalues_match_characteristic_roots() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let m = random::hermitian(2, &mut rng);
            let (a, d) = (m.get(0, 0).re, m.get(1, 1).re);
            let b = m.get(0, 1).norm();
            let mean = 0.5 * (a + d);
            let radius = (0.25 * (a - d) * (a - d) + b * b).sqrt();
            let eig = hermitian_eig(&m).unwrap();
            assert_relative_eq!(eig.eigenvalues[0], mean - radius, epsilon = 1e-12);
            assert_relative_eq!(eig.eigenvalues[1], mean + radius, epsilon = 1e-12);
        }
    }

    #[test]
    fn non_hermitian_is_rejected_with_defect() {
        let m = ComplexMatrix::from_real_row_major(2, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        match hermitian_eig(&m) {
            Err(Error::NotHermitian { defect, .. }) => assert_relative_eq!(defect, 2f64.sqrt()),
            other => panic!("unexpected {other:?}"),
        }
        assert!(unitary_propagator(&m, 1.0, 1.0).is_err());
    }

    #[test]
    fn propagator_trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = random::hermitian(3, &mut rng);
        assert_eq!(unitary_propagator(&h, 0.0, 1.0).unwrap(), ComplexMatrix::identity(3));
        assert_eq!(unitary_propagator(&ComplexMatrix::zeros(3), 2.5, 1.0).unwrap(), ComplexMatrix::identity(3));
    }

    #[test]
    fn sigma_z_at_pi_is_minus_identity() {
        let u = unitary_propagator(&sigma_z(), PI, 1.0).unwrap();
        let expected = ComplexMatrix::identity(2).scale(-ONE);
        assert!(max_abs_diff(&u, &expected) < 1e-15);
    }

    #[test]
    fn propagator_rejects_bad_hbar() {
        assert!(unitary_propagator(&sigma_z(), 1.0, 0.0).is_err());
        assert!(unitary_propagator(&sigma_z(), 1.0, -1.0).is_err());
    }

    #[test]
    fn real_exp_zero_time_is_identity() {
        let q = DMatrix::from_row_slice(2, 2, &[-3.0, 3.0, 0.5, -0.5]);
        assert_eq!(real_matrix_exp(&q, 0.0).unwrap(), DMatrix::identity(2, 2));
    }

    #[test]
    fn real_exp_symmetric_two_state_closed_form() {
        // exp(tQ) = ½[[1+e^{-2t}, 1-e^{-2t}], ...]; at t = ln2/2, e^{-2t} = ½.
        let q = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]);
        let p = real_matrix_exp(&q, LN_2 / 2.0).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.75, 0.25, 0.25, 0.75]);
        assert!((p - expected).norm() <= 1e-12);
    }

    #[test]
    fn real_exp_rejects_bad_input() {
        assert!(real_matrix_exp(&DMatrix::zeros(2, 3), 1.0).is_err());
        assert!(real_matrix_exp(&DMatrix::zeros(2, 2), -1.0).is_err());
    }

    #[test]
    fn real_exp_matches_diagonal_closed_form_at_large_norm() {
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -0.3, 0.2]));
        let t = 40.0;
        let p = real_matrix_exp(&q, t).unwrap();
        for (i, &d) in [-1.0f64, -0.3, 0.2].iter().enumerate() {
            assert_relative_eq!(p[(i, i)], (d * t).exp(), max_relative = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn propagator_semigroup(seed in any::<u64>(), t in -3.0f64..3.0, s in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = random::hermitian(3, &mut rng);
            let ut = unitary_propagator(&h, t, 1.0).unwrap();
            let us = unitary_propagator(&h, s, 1.0).unwrap();
            let uts = unitary_propagator(&h, t + s, 1.0).unwrap();
            prop_assert!((&(&ut * &us) - &uts).frobenius_norm() <= 1e-10);
            prop_assert!(ut.unitary_defect() <= 1e-10);
        }

        #[test]
        fn generator_exponential_is_stochastic(seed in any::<u64>(), t in 0.0f64..50.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q = random::generator(4, &mut rng);
            let p = real_matrix_exp(&q, t).unwrap();
            for row in p.row_iter() {
                prop_assert!((row.sum() - 1.0).abs() <= 1e-12);
                prop_assert!(row.iter().all(|&x| x >= -1e-12));
            }
        }
    }
}
