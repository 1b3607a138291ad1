//! Environment-averaged dynamics: master-equation integration, Monte Carlo
//! path averages and observable expectations.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::environment::sample_trajectory;
use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, ONE, ZERO};
use crate::rng::stream;
use crate::superop::{block_generator, devectorize, vectorize};
use crate::tolerances;
use crate::trajectory::{check_density_input, evolve_density_unchecked, EvolveOptions, QuantumModel};

/// Averaged densities `⟨ρ⟩(t, k) = E^k[ρ(t)]` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterSolution {
    pub grid: Vec<f64>,
    /// Indexed `[start state][grid index]`.
    pub components: Vec<Vec<ComplexMatrix>>,
    /// Internal step of the accepted run.
    pub step: f64,
    /// Largest output change between the accepted step and twice that step.
    pub halving_residual: f64,
}

/// Monte Carlo path average with entry-wise standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct MCEstimate {
    pub grid: Vec<f64>,
    /// Indexed `[start state][grid index]`.
    pub mean: Vec<Vec<ComplexMatrix>>,
    pub stderr_re: Vec<Vec<DMatrix<f64>>>,
    pub stderr_im: Vec<Vec<DMatrix<f64>>>,
    pub n_samples: usize,
    pub seed: u64,
}

impl MCEstimate {
    pub fn max_stderr(&self) -> f64 {
        self.stderr_re
            .iter()
            .chain(&self.stderr_im)
            .flatten()
            .flat_map(|m| m.iter().copied())
            .fold(0.0, f64::max)
    }
}

/// Common view of [`MasterSolution`] and [`MCEstimate`].
pub trait AveragedDensities {
    fn grid(&self) -> &[f64];
    fn states(&self) -> usize;
    fn density(&self, state: usize, index: usize) -> &ComplexMatrix;
}

impl AveragedDensities for MasterSolution {
    fn grid(&self) -> &[f64] {
        &self.grid
    }

    fn states(&self) -> usize {
        self.components.len()
    }

    fn density(&self, state: usize, index: usize) -> &ComplexMatrix {
        &self.components[state][index]
    }
}

impl AveragedDensities for MCEstimate {
    fn grid(&self) -> &[f64] {
        &self.grid
    }

    fn states(&self) -> usize {
        self.mean.len()
    }

    fn density(&self, state: usize, index: usize) -> &ComplexMatrix {
        &self.mean[state][index]
    }
}

/// Solution of `X' = A X` sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFlow {
    pub values: Vec<DMatrix<Complex64>>,
    pub step: f64,
    pub halving_residual: f64,
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<()> {
    let mut prev = 0.0;
    for &t in grid {
        if !t.is_finite() || t < prev {
            return Err(Error::InvalidArgument(format!(
                "grid must be finite, non-negative and non-decreasing (found {t} after {prev})"
            )));
        }
        prev = t;
    }
    Ok(())
}

fn rk4_run(a: &DMatrix<Complex64>, x0: &DMatrix<Complex64>, grid: &[f64], h: f64) -> Vec<DMatrix<Complex64>> {
    let mut x = x0.clone();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(grid.len());
    for &g in grid {
        let span = g - t;
        if span > 0.0 {
            let n = (span / h).ceil().max(1.0) as usize;
            let dt = Complex64::new(span / n as f64, 0.0);
            let half = dt * 0.5;
            let sixth = dt / 6.0;
            for _ in 0..n {
                let k1 = a * &x;
                let k2 = a * (&x + &k1 * half);
                let k3 = a * (&x + &k2 * half);
                let k4 = a * (&x + &k3 * dt);
                x += (k1 + (k2 + k3) * Complex64::new(2.0, 0.0) + k4) * sixth;
            }
        }
        t = g;
        out.push(x.clone());
    }
    out
}

fn max_difference(a: &[DMatrix<Complex64>], b: &[DMatrix<Complex64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y.iter()).map(|(p, q)| (p - q).norm()))
        .fold(0.0, f64::max)
}

/// Integrates `X' = A X` from `X(0) = x0` with classical RK4, halving the
/// step until two successive runs agree to within the halving tolerance.
pub fn integrate_linear(a: &DMatrix<Complex64>, x0: &DMatrix<Complex64>, grid: &[f64]) -> Result<LinearFlow> {
    if !a.is_square() || a.nrows() != x0.nrows() {
        return Err(Error::Shape(format!(
            "generator is {}x{}, initial value has {} rows",
            a.nrows(),
            a.ncols(),
            x0.nrows()
        )));
    }
    check_grid(grid)?;
    let max_gap = grid
        .iter()
        .scan(0.0, |prev, &t| {
            let gap = t - *prev;
            *prev = t;
            Some(gap)
        })
        .fold(0.0, f64::max);
    if max_gap == 0.0 {
        return Ok(LinearFlow { values: vec![x0.clone(); grid.len()], step: 0.0, halving_residual: 0.0 });
    }
    let norm = a.column_iter().map(|c| c.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max);
    let mut h = if norm > 0.0 { max_gap.min(0.25 / norm) } else { max_gap };
    let mut coarse = rk4_run(a, x0, grid, h);
    let mut residual = f64::INFINITY;
    for _ in 0..tolerances::MAX_HALVINGS {
        h *= 0.5;
        let fine = rk4_run(a, x0, grid, h);
        residual = max_difference(&coarse, &fine);
        if residual < tolerances::STEP_HALVING {
            return Ok(LinearFlow { values: fine, step: h, halving_residual: residual });
        }
        coarse = fine;
    }
    Err(Error::NonConvergence { residual })
}

/// Integrates the averaged master equation for every start state.
///
/// Uses the joint-density layout of the block generator: `σ_j(t) =
/// E^k[ρ(t) 1{ξ(t) = j}]` starts from `e_k ⊗ vec ρ_0(k)` and `⟨ρ⟩(t, k) =
/// Σ_j σ_j(t)`.
pub fn integrate_master(model: &QuantumModel, rho0: &[ComplexMatrix], grid: &[f64]) -> Result<MasterSolution> {
    let k = model.states();
    check_initial(model, rho0)?;
    let generator = block_generator(model)?;
    let forward = generator.forward_layout();
    let n2 = model.dim() * model.dim();
    let mut x0 = DMatrix::from_element(k * n2, k, ZERO);
    for (start, rho) in rho0.iter().enumerate() {
        x0.view_mut((start * n2, start), (n2, 1)).copy_from(&vectorize(rho));
    }
    let flow = integrate_linear(&forward, &x0, grid)?;
    let components = (0..k)
        .map(|start| {
            flow.values
                .iter()
                .map(|x| {
                    let column = x.column(start);
                    let mut sum = vec![ZERO; n2];
                    for j in 0..k {
                        for (acc, z) in sum.iter_mut().zip(column.rows(j * n2, n2).iter()) {
                            *acc += z;
                        }
                    }
                    devectorize(&sum).expect("block length is a square")
                })
                .collect()
        })
        .collect();
    Ok(MasterSolution { grid: grid.to_vec(), components, step: flow.step, halving_residual: flow.halving_residual })
}

fn check_initial(model: &QuantumModel, rho0: &[ComplexMatrix]) -> Result<()> {
    if rho0.len() != model.states() {
        return Err(Error::Shape(format!(
            "{} initial densities for {} environment states",
            rho0.len(),
            model.states()
        )));
    }
    rho0.iter().try_for_each(|rho| check_density_input(model, rho))
}

const CHUNK: usize = 64;

/// Running mean and centered second moment per real coordinate.
#[derive(Debug, Clone)]
struct Welford {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(len: usize) -> Self {
        Self { count: 0, mean: vec![0.0; len], m2: vec![0.0; len] }
    }

    fn push(&mut self, sample: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for ((mean, m2), &x) in self.mean.iter_mut().zip(&mut self.m2).zip(sample) {
            let delta = x - *mean;
            *mean += delta / n;
            *m2 += delta * (x - *mean);
        }
    }

    fn merge(&mut self, other: &Welford) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * nb / n;
            self.m2[i] += other.m2[i] + delta * delta * na * nb / n;
        }
        self.count += other.count;
    }
}

fn flatten(densities: &[ComplexMatrix], out: &mut Vec<f64>) {
    out.clear();
    for rho in densities {
        for z in rho.as_matrix().iter() {
            out.push(z.re);
            out.push(z.im);
        }
    }
}

/// Monte Carlo estimate of `E^k[ρ(t)]` for every start state `k`.
///
/// Sample `i` from start state `k` uses the stream keyed `(seed, k, i)`.
/// Samples are accumulated in fixed-size chunks that are merged in index
/// order, so the result does not depend on the number of worker threads.
pub fn mc_average(
    model: &QuantumModel,
    rho0: &[ComplexMatrix],
    grid: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<MCEstimate> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    check_initial(model, rho0)?;
    check_grid(grid)?;
    let k = model.states();
    let n = model.dim();
    let horizon = grid.last().copied().unwrap_or(0.0);
    let len = grid.len() * n * n * 2;
    let chunks = n_samples.div_ceil(CHUNK);

    let run_chunk = |(start, chunk): (usize, usize)| -> Result<Welford> {
        let mut acc = Welford::new(len);
        let mut flat = Vec::with_capacity(len);
        let first = chunk * CHUNK;
        for index in first..(first + CHUNK).min(n_samples) {
            let mut rng = stream(seed, start as u64, index as u64);
            let traj = sample_trajectory(model.chain(), start, horizon, &mut rng)?;
            let path = evolve_density_unchecked(model, &traj, &rho0[start], grid, EvolveOptions::default())?;
            flatten(&path, &mut flat);
            acc.push(&flat);
        }
        Ok(acc)
    };
    let tasks: Vec<(usize, usize)> = (0..k).flat_map(|s| (0..chunks).map(move |c| (s, c))).collect();
    let partials = tasks.into_par_iter().map(run_chunk).collect::<Result<Vec<_>>>()?;

    let scale = 1.0 / (n_samples as f64).sqrt();
    let denominator = (n_samples.max(2) - 1) as f64;
    let mut mean = Vec::with_capacity(k);
    let mut stderr_re = Vec::with_capacity(k);
    let mut stderr_im = Vec::with_capacity(k);
    for per_state in partials.chunks(chunks) {
        let mut total = Welford::new(len);
        for part in per_state {
            total.merge(part);
        }
        let se = |m2: f64| if n_samples > 1 { (m2 / denominator).sqrt() * scale } else { 0.0 };
        let block = n * n * 2;
        let mut means = Vec::with_capacity(grid.len());
        let mut se_re = Vec::with_capacity(grid.len());
        let mut se_im = Vec::with_capacity(grid.len());
        for t in 0..grid.len() {
            let m = &total.mean[t * block..(t + 1) * block];
            let v = &total.m2[t * block..(t + 1) * block];
            let entries: Vec<Complex64> = m.chunks(2).map(|p| Complex64::new(p[0], p[1])).collect();
            means.push(ComplexMatrix::from_dmatrix(DMatrix::from_column_slice(n, n, &entries))?);
            se_re.push(DMatrix::from_iterator(n, n, v.iter().step_by(2).map(|&x| se(x))));
            se_im.push(DMatrix::from_iterator(n, n, v.iter().skip(1).step_by(2).map(|&x| se(x))));
        }
        mean.push(means);
        stderr_re.push(se_re);
        stderr_im.push(se_im);
    }
    Ok(MCEstimate { grid: grid.to_vec(), mean, stderr_re, stderr_im, n_samples, seed })
}

/// `Σ_k p(k) tr(A ⟨ρ⟩(t, k))` at a grid time.
pub fn observable_expectation<S: AveragedDensities + ?Sized>(
    observable: &ComplexMatrix,
    solution: &S,
    initial_dist: &[f64],
    t: f64,
) -> Result<f64> {
    observable.ensure_hermitian(tolerances::HERMITIAN)?;
    if initial_dist.len() != solution.states() {
        return Err(Error::Shape(format!(
            "distribution has {} entries for {} states",
            initial_dist.len(),
            solution.states()
        )));
    }
    if initial_dist.iter().any(|&p| !(p >= 0.0)) {
        return Err(Error::InvalidArgument("distribution entries must be non-negative".into()));
    }
    let total: f64 = initial_dist.iter().sum();
    if (total - 1.0).abs() > tolerances::ROW_SUM {
        return Err(Error::InvalidArgument(format!("distribution sums to {total}, expected 1")));
    }
    let index = grid_index(solution.grid(), t)?;
    let mut value = ZERO;
    for (k, &p) in initial_dist.iter().enumerate() {
        if p > 0.0 {
            value += (observable * solution.density(k, index)).trace() * p;
        }
    }
    if value.im.abs() > tolerances::IMAGINARY_RESIDUAL {
        return Err(Error::InvalidArgument(format!("expectation has imaginary part {}", value.im)));
    }
    Ok(value.re)
}

/// Index of the grid point equal to `t`; no interpolation.
pub fn grid_index(grid: &[f64], t: f64) -> Result<usize> {
    let tol = tolerances::GRID_MATCH * t.abs().max(1.0);
    grid.iter().position(|&g| (g - t).abs() <= tol).ok_or(Error::NotOnGrid(t))
}

/// Worst-case conservation defects over a collection of densities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conservation {
    pub trace_drift: f64,
    pub hermiticity_defect: f64,
    pub min_eigenvalue: f64,
}

impl Default for Conservation {
    fn default() -> Self {
        Self { trace_drift: 0.0, hermiticity_defect: 0.0, min_eigenvalue: f64::INFINITY }
    }
}

impl Conservation {
    pub fn observe(&mut self, rho: &ComplexMatrix) {
        self.trace_drift = self.trace_drift.max((rho.trace() - ONE).norm());
        self.hermiticity_defect = self.hermiticity_defect.max(rho.hermitian_defect());
        self.min_eigenvalue = self.min_eigenvalue.min(rho.min_eigenvalue());
    }

    pub fn of<'a>(densities: impl IntoIterator<Item = &'a ComplexMatrix>) -> Self {
        let mut c = Self::default();
        densities.into_iter().for_each(|rho| c.observe(rho));
        c
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            trace_drift: self.trace_drift.max(other.trace_drift),
            hermiticity_defect: self.hermiticity_defect.max(other.hermiticity_defect),
            min_eigenvalue: self.min_eigenvalue.min(other.min_eigenvalue),
        }
    }

    pub fn holds(&self) -> bool {
        self.trace_drift <= tolerances::TRACE_DRIFT
            && self.hermiticity_defect <= tolerances::HERMITICITY_DEFECT
            && self.min_eigenvalue >= tolerances::MIN_EIGENVALUE
    }
}

/// Largest `|a − b| / max(se, floor)` over real and imaginary parts.
pub fn max_z_score(mc: &MCEstimate, reference: &MasterSolution) -> f64 {
    let mut worst: f64 = 0.0;
    for (k, per_state) in mc.mean.iter().enumerate() {
        for (t, mean) in per_state.iter().enumerate() {
            let exact = reference.components[k][t].as_matrix();
            for (i, (m, e)) in mean.as_matrix().iter().zip(exact.iter()).enumerate() {
                let se_re = mc.stderr_re[k][t][i].max(tolerances::STDERR_FLOOR);
                let se_im = mc.stderr_im[k][t][i].max(tolerances::STDERR_FLOOR);
                worst = worst.max((m.re - e.re).abs() / se_re).max((m.im - e.im).abs() / se_im);
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::EnvironmentChain;
    use crate::linalg::{sigma_x, sigma_y, sigma_z, unitary_propagator};
    use crate::random;
    use crate::superop::conjugation_superop;
    use crate::trajectory::Shocks;
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn uniform_grid(stop: f64, points: usize) -> Vec<f64> {
        (0..points).map(|i| stop * i as f64 / (points - 1) as f64).collect()
    }

    fn plus_state() -> ComplexMatrix {
        ComplexMatrix::from_real_row_major(2, &[0.5, 0.5, 0.5, 0.5]).unwrap()
    }

    fn goldstein(j: f64, lambda: f64) -> QuantumModel {
        let chain = EnvironmentChain::new(&[lambda, lambda], &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        let h = sigma_z().scale(Complex64::new(j, 0.0));
        QuantumModel::without_shocks(chain, vec![h.clone(), h.scale(Complex64::new(-1.0, 0.0))], 1.0).unwrap()
    }

    fn swap(lambda: f64) -> QuantumModel {
        let chain = EnvironmentChain::pulse_process(lambda).unwrap();
        QuantumModel::with_constant_shock(chain, vec![ComplexMatrix::from_real_diagonal(&[1.0, -1.0])], sigma_x(), 1.0)
            .unwrap()
    }

    /// K = 3, N = 3, non-commuting Hamiltonians and a distinct shock per transition.
    fn generic_model(seed: u64) -> QuantumModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let jumps = random::jump_matrix(3, &mut rng);
        let chain = EnvironmentChain::new(&[0.8, 1.5, 0.4], &jumps).unwrap();
        let hams = (0..3).map(|_| random::hermitian(3, &mut rng)).collect();
        let mut map = BTreeMap::new();
        for from in 0..3 {
            for to in 0..3 {
                map.insert((from, to), random::unitary(3, &mut rng));
            }
        }
        QuantumModel::new(chain, hams, Shocks::PerTransition(map), 1.0).unwrap()
    }

    #[test]
    fn no_jumps_is_unitary_evolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let chain = EnvironmentChain::new(&[0.0, 0.0], &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        let hams = vec![random::hermitian(2, &mut rng), random::hermitian(2, &mut rng)];
        let model = QuantumModel::without_shocks(chain, hams, 1.0).unwrap();
        let rho0 = vec![random::density(2, &mut rng), random::density(2, &mut rng)];
        let grid = uniform_grid(3.0, 31);
        let sol = integrate_master(&model, &rho0, &grid).unwrap();
        let mc = mc_average(&model, &rho0, &grid, 20, 7).unwrap();
        assert_eq!(mc.max_stderr(), 0.0);
        for k in 0..2 {
            for (i, &t) in grid.iter().enumerate() {
                let u = unitary_propagator(model.hamiltonian(k), t, 1.0).unwrap();
                let exact = rho0[k].conjugate_by(&u);
                assert!((&sol.components[k][i] - &exact).frobenius_norm() <= 1e-9);
                assert!((&mc.mean[k][i] - &exact).frobenius_norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn poisson_swap_closed_form() {
        let lambda = 0.7;
        let model = swap(lambda);
        let grid = uniform_grid(5.0, 51);
        let sol = integrate_master(&model, &[ComplexMatrix::unit(2, 0, 0)], &grid).unwrap();
        for (i, &t) in grid.iter().enumerate() {
            let rho = &sol.components[0][i];
            let expected = 0.5 + 0.5 * (-2.0 * lambda * t).exp();
            assert!((rho.get(0, 0).re - expected).abs() <= 1e-8);
            assert!((rho.trace() - ONE).norm() <= 1e-9);
        }
    }

    #[test]
    fn halving_converges_with_reported_residual() {
        let sol = integrate_master(&goldstein(1.0, 0.5), &[plus_state(), plus_state()], &uniform_grid(2.0, 5)).unwrap();
        assert!(sol.halving_residual < tolerances::STEP_HALVING);
        assert!(sol.step > 0.0 && sol.step <= 0.5);
    }

    #[test]
    fn integrator_matches_matrix_exponential() {
        let q = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 2.0, -2.0]);
        let a = q.map(|x| Complex64::new(x, 0.0));
        let x0 = DMatrix::identity(2, 2);
        let grid = [0.0, 0.3, 1.7];
        let flow = integrate_linear(&a, &x0, &grid).unwrap();
        for (t, x) in grid.iter().zip(&flow.values) {
            let exact = crate::linalg::real_matrix_exp(&q, *t).unwrap();
            assert!((x.map(|z| z.re) - exact).amax() <= 1e-9);
        }
    }

    #[test]
    fn grid_and_input_validation() {
        let model = goldstein(1.0, 0.5);
        let rho = vec![plus_state(), plus_state()];
        assert!(integrate_master(&model, &rho, &[0.0, -1.0]).is_err());
        assert!(integrate_master(&model, &rho, &[1.0, 0.5]).is_err());
        assert!(integrate_master(&model, &rho[..1], &[1.0]).is_err());
        assert!(mc_average(&model, &rho, &[1.0], 0, 1).is_err());
        let empty = integrate_master(&model, &rho, &[]).unwrap();
        assert!(empty.components.iter().all(Vec::is_empty));
    }

    #[test]
    fn mc_mean_has_unit_trace_and_is_reproducible() {
        let model = goldstein(1.0, 0.5);
        let rho = vec![plus_state(), plus_state()];
        let grid = uniform_grid(2.0, 11);
        let a = mc_average(&model, &rho, &grid, 300, 42).unwrap();
        let b = mc_average(&model, &rho, &grid, 300, 42).unwrap();
        assert_eq!(a, b);
        for m in a.mean.iter().flatten() {
            assert!((m.trace() - ONE).norm() <= 1e-12);
        }
        assert!(a.stderr_re.iter().chain(&a.stderr_im).flatten().all(|m| m.iter().all(|&x| x >= 0.0)));
        let c = mc_average(&model, &rho, &grid, 300, 43).unwrap();
        assert_ne!(a.mean, c.mean);
    }

    #[test]
    fn mc_is_independent_of_thread_count() {
        let model = generic_model(3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rho: Vec<_> = (0..3).map(|_| random::density(3, &mut rng)).collect();
        let grid = uniform_grid(2.0, 6);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| mc_average(&model, &rho, &grid, 200, 9).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn welford_merge_matches_single_pass() {
        let data: Vec<f64> = (0..37).map(|i| ((i * 7919) % 101) as f64 / 13.0).collect();
        let mut whole = Welford::new(1);
        data.iter().for_each(|&x| whole.push(&[x]));
        let mut left = Welford::new(1);
        let mut right = Welford::new(1);
        data[..20].iter().for_each(|&x| left.push(&[x]));
        data[20..].iter().for_each(|&x| right.push(&[x]));
        left.merge(&right);
        let mean = data.iter().sum::<f64>() / 37.0;
        let m2: f64 = data.iter().map(|x| (x - mean).powi(2)).sum();
        assert!((left.mean[0] - mean).abs() <= 1e-12 && (whole.mean[0] - mean).abs() <= 1e-12);
        assert!((left.m2[0] - m2).abs() <= 1e-9 && (whole.m2[0] - m2).abs() <= 1e-9);
    }

    #[test]
    fn mc_agrees_with_ode_on_generic_model() {
        let model = generic_model(11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let rho: Vec<_> = (0..3).map(|_| random::density(3, &mut rng)).collect();
        let grid = uniform_grid(3.0, 13);
        let ode = integrate_master(&model, &rho, &grid).unwrap();
        let mc = mc_average(&model, &rho, &grid, 10_000, 5).unwrap();
        let z = max_z_score(&mc, &ode);
        assert!(z <= tolerances::Z_LIMIT, "max z = {z}");
        assert!(Conservation::of(ode.components.iter().flatten()).holds());
    }

    #[test]
    fn start_state_layout_is_not_the_path_average_for_generic_models() {
        // Solving with the start-state layout directly reverses the operator
        // order along each path; the Monte Carlo average rules it out.
        let model = generic_model(11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let rho: Vec<_> = (0..3).map(|_| random::density(3, &mut rng)).collect();
        let grid = uniform_grid(3.0, 13);
        let generator = block_generator(&model).unwrap();
        let v0 = generator.stack(&rho).unwrap();
        let x0 = DMatrix::from_column_slice(v0.len(), 1, v0.as_slice());
        let flow = integrate_linear(generator.matrix(), &x0, &grid).unwrap();
        let backward = MasterSolution {
            grid: grid.clone(),
            components: (0..3)
                .map(|k| {
                    flow.values
                        .iter()
                        .map(|x| generator.unstack(&DVector::from_column_slice(x.as_slice())).swap_remove(k))
                        .collect()
                })
                .collect(),
            step: flow.step,
            halving_residual: flow.halving_residual,
        };
        let mc = mc_average(&model, &rho, &grid, 10_000, 5).unwrap();
        assert!(max_z_score(&mc, &backward) > 10.0);
    }

    #[test]
    fn layouts_coincide_for_goldstein() {
        let g = block_generator(&goldstein(1.0, 0.5)).unwrap();
        assert!((g.forward_layout() - g.matrix()).camax() == 0.0);
    }

    #[test]
    fn renewal_equation_on_poisson_swap() {
        let lambda = 0.7;
        let model = swap(lambda);
        let rho0 = ComplexMatrix::from_real_row_major(2, &[0.8, 0.3, 0.3, 0.2]).unwrap();
        let t_max = 3.0;
        let points = 2048;
        let grid = uniform_grid(t_max, points);
        let h = t_max / (points - 1) as f64;
        let averaged = integrate_master(&model, std::slice::from_ref(&rho0), &grid).unwrap();
        // Averaged propagator as a superoperator at every grid time.
        let g = block_generator(&model).unwrap();
        let propagator = integrate_linear(&g.forward_layout(), &DMatrix::identity(4, 4), &grid).unwrap();
        let shock = conjugation_superop(&sigma_x()).unwrap();
        let free = |s: f64| {
            conjugation_superop(&unitary_propagator(model.hamiltonian(0), s, 1.0).unwrap()).unwrap().into_matrix()
        };
        let v0 = vectorize(&rho0);
        for &n in &[0usize, 700, 1500, points - 1] {
            let t = grid[n];
            let mut integral = DVector::from_element(4, ZERO);
            for m in 0..=n {
                let s = grid[m];
                let weight = if n == 0 { 0.0 } else if m == 0 || m == n { 0.5 * h } else { h };
                let term = &propagator.values[n - m] * (shock.matrix() * (free(s) * &v0));
                integral += term * Complex64::new(weight * (-lambda * s).exp(), 0.0);
            }
            let rhs = free(t) * &v0 * Complex64::new((-lambda * t).exp(), 0.0) + integral * Complex64::new(lambda, 0.0);
            let lhs = vectorize(&averaged.components[0][n]);
            assert!((lhs - rhs).camax() <= 1e-5, "t = {t}");
        }
    }

    #[test]
    fn averaged_solutions_stay_positive() {
        for model in [goldstein(1.0, 0.5), generic_model(21)] {
            let k = model.states();
            let n = model.dim();
            let mut rng = ChaCha8Rng::seed_from_u64(22);
            let rho: Vec<_> = (0..k).map(|_| ComplexMatrix::outer(&random::state(n, &mut rng))).collect();
            let sol = integrate_master(&model, &rho, &uniform_grid(6.0, 61)).unwrap();
            let c = Conservation::of(sol.components.iter().flatten());
            assert!(c.holds(), "{c:?}");
        }
    }

    #[test]
    fn observable_examples() {
        let model = goldstein(1.0, 0.5);
        let rho = vec![plus_state(), plus_state()];
        let grid = uniform_grid(1.0, 11);
        let sol = integrate_master(&model, &rho, &grid).unwrap();
        let id = ComplexMatrix::identity(2);
        for &t in &grid {
            assert!((observable_expectation(&id, &sol, &[0.3, 0.7], t).unwrap() - 1.0).abs() <= 1e-9);
        }
        assert_eq!(observable_expectation(&id, &sol, &[0.5, 0.5], 0.05), Err(Error::NotOnGrid(0.05)));
        assert!(observable_expectation(&ComplexMatrix::unit(2, 0, 1), &sol, &[0.5, 0.5], 0.0).is_err());
        assert!(observable_expectation(&id, &sol, &[0.5, 0.6], 0.0).is_err());

        let still = QuantumModel::without_shocks(
            EnvironmentChain::pulse_process(0.0).unwrap(),
            vec![sigma_z().scale(Complex64::new(0.8, 0.0))],
            1.0,
        )
        .unwrap();
        let sol = integrate_master(&still, &[plus_state()], &grid).unwrap();
        for &t in &grid {
            assert!(observable_expectation(&sigma_z(), &sol, &[1.0], t).unwrap().abs() <= 1e-12);
        }
    }

    #[test]
    fn observable_taylor_coefficients_from_generator() {
        let model = goldstein(1.0, 0.5);
        let rho = vec![plus_state(), plus_state()];
        let h = 1e-4;
        let grid = [0.0, h, 2.0 * h];
        let sol = integrate_master(&model, &rho, &grid).unwrap();
        let g = block_generator(&model).unwrap();
        let forward = g.forward_layout();
        for observable in [sigma_x(), sigma_y()] {
            for k in 0..2 {
                let mut dist = [0.0; 2];
                dist[k] = 1.0;
                let mut sigma0 = DVector::from_element(8, ZERO);
                sigma0.rows_mut(k * 4, 4).copy_from(&vectorize(&rho[k]));
                let derivative: ComplexMatrix = g
                    .unstack(&(&forward * sigma0))
                    .iter()
                    .fold(ComplexMatrix::zeros(2), |acc, x| &acc + x);
                let d0 = (&observable * &rho[k]).trace().re;
                let d1 = (&observable * &derivative).trace().re;
                let f: Vec<f64> =
                    grid.iter().map(|&t| observable_expectation(&observable, &sol, &dist, t).unwrap()).collect();
                let fd = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
                assert!((f[0] - d0).abs() <= 1e-12);
                assert!((fd - d1).abs() <= 1e-6, "{fd} vs {d1}");
            }
        }
    }
}
