//! Random ensembles used by tests, benchmarks and property checks.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::linalg::{ComplexMatrix, StateVector};

fn gaussian_like<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // Sum of uniforms is plenty for generating generic test matrices.
    (0..4).map(|_| rng.random::<f64>() - 0.5).sum()
}

fn ginibre<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<Complex64> {
    DMatrix::from_fn(n, n, |_, _| Complex64::new(gaussian_like(rng), gaussian_like(rng)))
}

pub fn hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ComplexMatrix {
    let g = ginibre(n, rng);
    let h = (&g + g.adjoint()) * Complex64::new(0.5, 0.0);
    ComplexMatrix::from_dmatrix(h).expect("square by construction")
}

/// `exp(−iH)` for a random Hermitian `H` of order-one norm.
pub fn unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ComplexMatrix {
    let h = hermitian(n, rng).scale(Complex64::new(3.0, 0.0));
    crate::linalg::unitary_propagator(&h, 1.0, 1.0).expect("hermitian by construction")
}

/// Full-rank density matrix `GG†/tr(GG†)`.
pub fn density<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ComplexMatrix {
    let g = ginibre(n, rng);
    let p = &g * g.adjoint();
    let tr = p.trace();
    let mut rho = p / tr;
    // Enforce exact Hermiticity of the stored matrix.
    rho = (&rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
    ComplexMatrix::from_dmatrix(rho).expect("square by construction")
}

pub fn state<R: Rng + ?Sized>(n: usize, rng: &mut R) -> StateVector {
    let v = StateVector::from_fn(n, |_, _| Complex64::new(gaussian_like(rng), gaussian_like(rng)));
    let norm = v.norm();
    v / Complex64::new(norm, 0.0)
}

/// Random rate matrix: non-negative off-diagonal entries, zero row sums.
pub fn generator<R: Rng + ?Sized>(k: usize, rng: &mut R) -> DMatrix<f64> {
    let mut q = DMatrix::from_fn(k, k, |r, c| if r == c { 0.0 } else { 2.0 * rng.random::<f64>() });
    for r in 0..k {
        let s: f64 = q.row(r).sum();
        q[(r, r)] = -s;
    }
    q
}

/// Random jump distribution (rows sum to one), self-jumps allowed.
pub fn jump_matrix<R: Rng + ?Sized>(k: usize, rng: &mut R) -> DMatrix<f64> {
    let mut q = DMatrix::from_fn(k, k, |_, _| rng.random::<f64>() + 0.05);
    for r in 0..k {
        let s: f64 = q.row(r).sum();
        q.row_mut(r).scale_mut(1.0 / s);
    }
    q
}
