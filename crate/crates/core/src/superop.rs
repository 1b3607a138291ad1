//! Superoperators on column-stacked density matrices.
//!
//! Entry `(r, c)` of an `N × N` matrix sits at index `c·N + r` of its
//! vectorization, which gives `vec(AρB) = (Bᵀ ⊗ A) vec(ρ)`. Every
//! superoperator in the crate uses this convention.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{ensure_hbar, ComplexMatrix, I, ZERO};
use crate::tolerances;
use crate::trajectory::QuantumModel;

pub fn vectorize(rho: &ComplexMatrix) -> DVector<Complex64> {
    // nalgebra stores matrices column-major, which is exactly column stacking.
    DVector::from_column_slice(rho.as_matrix().as_slice())
}

pub fn devectorize(v: &[Complex64]) -> Result<ComplexMatrix> {
    let n = (v.len() as f64).sqrt().round() as usize;
    if n == 0 || n * n != v.len() {
        return Err(Error::Shape(format!("vector length {} is not a positive perfect square", v.len())));
    }
    ComplexMatrix::from_dmatrix(DMatrix::from_column_slice(n, n, v))
}

/// Linear map on `N × N` matrices stored as an `N² × N²` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator {
    dim: usize,
    matrix: DMatrix<Complex64>,
}

impl Superoperator {
    pub fn from_matrix(dim: usize, matrix: DMatrix<Complex64>) -> Result<Self> {
        let n2 = dim * dim;
        if dim == 0 || matrix.nrows() != n2 || matrix.ncols() != n2 {
            return Err(Error::Shape(format!(
                "superoperator on dimension {dim} must be {n2}x{n2}, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { dim, matrix })
    }

    pub fn identity(dim: usize) -> Self {
        let n2 = dim * dim;
        Self { dim, matrix: DMatrix::identity(n2, n2) }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.matrix
    }

    pub fn apply(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        let out = &self.matrix * vectorize(rho);
        ComplexMatrix::from_dmatrix(DMatrix::from_column_slice(self.dim, self.dim, out.as_slice()))
            .expect("square by construction")
    }

    /// `self ∘ other`
    pub fn compose(&self, other: &Superoperator) -> Superoperator {
        Superoperator { dim: self.dim, matrix: &self.matrix * &other.matrix }
    }
}

/// `H^×: ρ ↦ [H, ρ] = (I ⊗ H − Hᵀ ⊗ I) vec(ρ)`.
pub fn commutator_superop(h: &ComplexMatrix) -> Result<Superoperator> {
    h.ensure_hermitian(tolerances::HERMITIAN)?;
    let n = h.dim();
    let id = DMatrix::<Complex64>::identity(n, n);
    let m = h.as_matrix();
    Superoperator::from_matrix(n, id.kronecker(m) - m.transpose().kronecker(&id))
}

/// `−(i/ħ) H^×`, the generator of `ρ ↦ e^{−itH/ħ} ρ e^{itH/ħ}`.
pub fn hamiltonian_generator(h: &ComplexMatrix, hbar: f64) -> Result<Superoperator> {
    ensure_hbar(hbar)?;
    let c = commutator_superop(h)?;
    Superoperator::from_matrix(c.dim, c.matrix * (-I / hbar))
}

/// `V^♯: ρ ↦ V ρ V† = (V̄ ⊗ V) vec(ρ)`.
pub fn conjugation_superop(v: &ComplexMatrix) -> Result<Superoperator> {
    v.ensure_unitary(tolerances::UNITARY)?;
    let m = v.as_matrix();
    Superoperator::from_matrix(v.dim(), m.conjugate().kronecker(m))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShockConvention {
    /// Every shock is the identity; the generator is `−(i/ħ)𝐇^× + 𝐪`.
    Unshocked,
    /// At least one shock is non-trivial.
    Shocked,
}

/// Generator over environment states acting on stacked vectorizations
/// `(vec ρ_1, …, vec ρ_K)`.
///
/// Block `(k, j)` is `λ_k Q(k, j) S_{k→j}` (self-jumps included) and the
/// diagonal additionally carries `−(i/ħ) H_k^× − λ_k I`. This is the
/// start-state (Kolmogorov backward) layout.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGenerator {
    states: usize,
    dim: usize,
    free: DMatrix<Complex64>,
    jumps: DMatrix<Complex64>,
    matrix: DMatrix<Complex64>,
    convention: ShockConvention,
}

pub fn block_generator(model: &QuantumModel) -> Result<BlockGenerator> {
    let k = model.states();
    let n = model.dim();
    let n2 = n * n;
    let chain = model.chain();
    let mut free = DMatrix::from_element(k * n2, k * n2, ZERO);
    let mut jumps = free.clone();

    for from in 0..k {
        let rate = chain.rate(from);
        let g = hamiltonian_generator(model.hamiltonian(from), model.hbar())?;
        let mut diag = g.into_matrix();
        for d in 0..n2 {
            diag[(d, d)] -= Complex64::new(rate, 0.0);
        }
        free.view_mut((from * n2, from * n2), (n2, n2)).copy_from(&diag);

        for to in 0..k {
            let weight = rate * chain.jump_probability(from, to);
            if weight == 0.0 {
                continue;
            }
            let s = conjugation_superop(model.shock(from, to)?)?;
            let mut block = jumps.view_mut((from * n2, to * n2), (n2, n2));
            block += s.matrix() * Complex64::new(weight, 0.0);
        }
    }

    let convention = if model.has_identity_shocks() { ShockConvention::Unshocked } else { ShockConvention::Shocked };
    let matrix = &free + &jumps;
    Ok(BlockGenerator { states: k, dim: n, free, jumps, matrix, convention })
}

impl BlockGenerator {
    pub fn states(&self) -> usize {
        self.states
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn convention(&self) -> ShockConvention {
        self.convention
    }

    /// Full `(K·N²) × (K·N²)` generator.
    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    /// Block-diagonal part `diag(−(i/ħ)H_k^× − λ_k I)`.
    pub fn free_part(&self) -> &DMatrix<Complex64> {
        &self.free
    }

    /// Jump coupling with blocks `λ_k Q(k, j) S_{k→j}`.
    pub fn jump_part(&self) -> &DMatrix<Complex64> {
        &self.jumps
    }

    pub fn block(&self, row: usize, col: usize) -> DMatrix<Complex64> {
        let n2 = self.dim * self.dim;
        self.matrix.view((row * n2, col * n2), (n2, n2)).clone_owned()
    }

    /// The same blocks arranged for the joint density
    /// `σ_j(t) = E[ρ(t) 1{ξ(t) = j}]`: block `(j, k)` of the result is
    /// block `(k, j)` of the jump part, the diagonal is unchanged.
    ///
    /// Integrating `dσ/dt = F σ` from `σ(0) = e_k ⊗ vec ρ_0` and summing the
    /// components gives `E^k[ρ(t)]` for any model. The start-state layout
    /// agrees with it only when the per-state superoperators commute or the
    /// environment has a single state.
    pub fn forward_layout(&self) -> DMatrix<Complex64> {
        let n2 = self.dim * self.dim;
        let mut out = self.free.clone();
        for from in 0..self.states {
            for to in 0..self.states {
                let block = self.jumps.view((from * n2, to * n2), (n2, n2));
                let mut target = out.view_mut((to * n2, from * n2), (n2, n2));
                target += block;
            }
        }
        out
    }

    pub fn stack(&self, rhos: &[ComplexMatrix]) -> Result<DVector<Complex64>> {
        if rhos.len() != self.states || rhos.iter().any(|r| r.dim() != self.dim) {
            return Err(Error::Shape(format!(
                "expected {} matrices of dimension {}",
                self.states, self.dim
            )));
        }
        let n2 = self.dim * self.dim;
        let mut v = DVector::from_element(self.states * n2, ZERO);
        for (k, rho) in rhos.iter().enumerate() {
            v.rows_mut(k * n2, n2).copy_from(&vectorize(rho));
        }
        Ok(v)
    }

    pub fn unstack(&self, v: &DVector<Complex64>) -> Vec<ComplexMatrix> {
        unstack(v.as_slice(), self.states, self.dim)
    }
}

pub(crate) fn unstack(v: &[Complex64], states: usize, dim: usize) -> Vec<ComplexMatrix> {
    let n2 = dim * dim;
    (0..states)
        .map(|k| devectorize(&v[k * n2..(k + 1) * n2]).expect("block length is a square"))
        .collect()
}
