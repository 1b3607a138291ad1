//! Laplace-domain analysis of the averaged propagator.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{ensure_hbar, ComplexMatrix, ZERO};
use crate::superop::{block_generator, hamiltonian_generator, BlockGenerator, Superoperator};
use crate::tolerances;
use crate::trajectory::QuantumModel;

/// A transform value at a complex frequency with `Re(s) > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacePoint<T> {
    pub s: Complex64,
    pub value: T,
}

fn ensure_right_half_plane(s: Complex64) -> Result<()> {
    if s.re > 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("Laplace variable {s} must have positive real part")))
    }
}

fn one_norm(m: &DMatrix<Complex64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
}

/// Inverse of `m` with a 1-norm condition estimate and residual check.
fn checked_inverse(m: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let inv = m.clone().lu().try_inverse().ok_or(Error::Singular { condition: f64::INFINITY })?;
    let condition = one_norm(m) * one_norm(&inv);
    if !(condition <= tolerances::MAX_CONDITION) {
        return Err(Error::Singular { condition });
    }
    let identity = DMatrix::<Complex64>::identity(m.nrows(), m.ncols());
    let residual = (m * &inv - identity).norm();
    if residual > tolerances::INVERSE_RESIDUAL {
        return Err(Error::InaccurateInverse { residual, tol: tolerances::INVERSE_RESIDUAL });
    }
    Ok(inv)
}

/// `(s + λ + (i/ħ) H^×)^{−1}`.
pub fn free_resolvent(h: &ComplexMatrix, lambda: f64, s: Complex64, hbar: f64) -> Result<Superoperator> {
    ensure_right_half_plane(s)?;
    ensure_hbar(hbar)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("rate {lambda} must be finite and non-negative")));
    }
    let g = hamiltonian_generator(h, hbar)?;
    let n2 = g.matrix().nrows();
    let m = DMatrix::<Complex64>::identity(n2, n2) * (s + lambda) - g.matrix();
    Superoperator::from_matrix(h.dim(), checked_inverse(&m)?)
}

/// `(sI − A)^{−1}` for a block generator `A`.
pub fn block_resolvent(generator: &BlockGenerator, s: Complex64) -> Result<DMatrix<Complex64>> {
    ensure_right_half_plane(s)?;
    let n = generator.matrix().nrows();
    checked_inverse(&(DMatrix::<Complex64>::identity(n, n) * s - generator.matrix()))
}

/// Laplace transform of the averaged propagator from the first-jump
/// equation `Ũ = R₀ + Ũ · J · R₀`, solved as `Ũ = R₀ (I − J R₀)^{−1}`, where
/// `R₀` is block-diagonal with the free resolvents `R_k(s + λ_k)` and `J`
/// is the jump part of the block generator.
pub fn laplace_fixed_point(model: &QuantumModel, s: Complex64) -> Result<LaplacePoint<DMatrix<Complex64>>> {
    ensure_right_half_plane(s)?;
    let generator = block_generator(model)?;
    let k = model.states();
    let n2 = model.dim() * model.dim();
    let mut r0 = DMatrix::from_element(k * n2, k * n2, ZERO);
    for state in 0..k {
        let r = free_resolvent(model.hamiltonian(state), model.chain().rate(state), s, model.hbar())?;
        r0.view_mut((state * n2, state * n2), (n2, n2)).copy_from(r.matrix());
    }
    let m = DMatrix::<Complex64>::identity(k * n2, k * n2) - generator.jump_part() * &r0;
    let value = r0 * checked_inverse(&m)?;
    Ok(LaplacePoint { s, value })
}

/// Values that can be integrated against `e^{−st}`.
pub trait LaplaceValue: Clone {
    fn zero_like(&self) -> Self;
    fn add_scaled(&mut self, other: &Self, weight: Complex64);
    fn magnitude(&self) -> f64;
}

impl LaplaceValue for Complex64 {
    fn zero_like(&self) -> Self {
        ZERO
    }

    fn add_scaled(&mut self, other: &Self, weight: Complex64) {
        *self += other * weight;
    }

    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

impl LaplaceValue for DMatrix<Complex64> {
    fn zero_like(&self) -> Self {
        DMatrix::from_element(self.nrows(), self.ncols(), ZERO)
    }

    fn add_scaled(&mut self, other: &Self, weight: Complex64) {
        self.zip_apply(other, |a, b| *a += b * weight);
    }

    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

impl LaplaceValue for ComplexMatrix {
    fn zero_like(&self) -> Self {
        ComplexMatrix::zeros(self.dim())
    }

    fn add_scaled(&mut self, other: &Self, weight: Complex64) {
        *self = &*self + &other.scale(weight);
    }

    fn magnitude(&self) -> f64 {
        self.frobenius_norm()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceQuadrature<T> {
    pub value: T,
    /// `‖f(T)‖ e^{−Re(s) T} / Re(s)`, the transform of the tail if it stayed at `‖f(T)‖`.
    pub tail_bound: f64,
}

/// Trapezoid quadrature of `∫ e^{−st} f(t) dt` over a uniform grid.
pub fn numerical_laplace<T: LaplaceValue>(grid: &[f64], values: &[T], s: Complex64) -> Result<LaplaceQuadrature<T>> {
    ensure_right_half_plane(s)?;
    if grid.len() != values.len() {
        return Err(Error::Shape(format!("{} grid points for {} values", grid.len(), values.len())));
    }
    if grid.len() < 2 {
        return Err(Error::InvalidArgument("quadrature needs at least two grid points".into()));
    }
    let h = grid[1] - grid[0];
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("grid step {h} must be positive")));
    }
    for w in grid.windows(2) {
        let step = w[1] - w[0];
        if (step - h).abs() > tolerances::UNIFORM_GRID * h {
            return Err(Error::NonUniformGrid { expected: h, found: step });
        }
    }
    let last = grid.len() - 1;
    let mut acc = values[0].zero_like();
    for (i, (&t, f)) in grid.iter().zip(values).enumerate() {
        let w = if i == 0 || i == last { 0.5 * h } else { h };
        acc.add_scaled(f, (-s * t).exp() * w);
    }
    let t_end = grid[last];
    let tail_bound = values[last].magnitude() * (-s.re * t_end).exp() / s.re;
    Ok(LaplaceQuadrature { value: acc, tail_bound })
}
