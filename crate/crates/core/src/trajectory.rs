//! Path-wise quantum evolution.
//!
//! Between environment jumps the system evolves under the Hamiltonian of the
//! current environment state; at a jump `from → to` the shock `M(to, from)`
//! is applied before evolution under the new Hamiltonian begins. Paths are
//! right-continuous, so a grid time that coincides with a jump reports the
//! post-shock value.

use std::collections::{BTreeMap, HashMap};

use crate::environment::{EnvTrajectory, EnvironmentChain};
use crate::error::{Error, Result};
use crate::linalg::{ensure_hbar, hermitian_eig, unitary_propagator, ComplexMatrix, HermitianEig, StateVector};
use crate::tolerances;

/// Unitary shocks applied at environment jumps.
#[derive(Debug, Clone, PartialEq)]
pub enum Shocks {
    /// The same unitary at every jump.
    Constant(ComplexMatrix),
    /// Keyed by `(from, to)`; the operator applied on a jump `from → to` is
    /// the one usually written `M(to, from)`.
    PerTransition(BTreeMap<(usize, usize), ComplexMatrix>),
}

#[derive(Debug, Clone)]
pub struct QuantumModel {
    hbar: f64,
    chain: EnvironmentChain,
    hamiltonians: Vec<ComplexMatrix>,
    spectra: Vec<HermitianEig>,
    shocks: Shocks,
}

impl QuantumModel {
    pub fn new(chain: EnvironmentChain, hamiltonians: Vec<ComplexMatrix>, shocks: Shocks, hbar: f64) -> Result<Self> {
        ensure_hbar(hbar)?;
        if hamiltonians.len() != chain.states() {
            return Err(Error::Shape(format!(
                "{} Hamiltonians for {} environment states",
                hamiltonians.len(),
                chain.states()
            )));
        }
        let n = hamiltonians[0].dim();
        if let Some(k) = hamiltonians.iter().position(|h| h.dim() != n) {
            return Err(Error::Shape(format!("Hamiltonian {k} has dimension {}, expected {n}", hamiltonians[k].dim())));
        }
        let spectra = hamiltonians.iter().map(hermitian_eig).collect::<Result<Vec<_>>>()?;

        let check_shock = |v: &ComplexMatrix| -> Result<()> {
            if v.dim() != n {
                return Err(Error::Shape(format!("shock has dimension {}, expected {n}", v.dim())));
            }
            v.ensure_unitary(tolerances::UNITARY)
        };
        match &shocks {
            Shocks::Constant(v) => check_shock(v)?,
            Shocks::PerTransition(map) => {
                for (&(from, to), v) in map {
                    if from >= chain.states() || to >= chain.states() {
                        return Err(Error::InvalidArgument(format!("shock key ({from}, {to}) out of range")));
                    }
                    check_shock(v)?;
                }
            }
        }
        Ok(Self { hbar, chain, hamiltonians, spectra, shocks })
    }

    pub fn without_shocks(chain: EnvironmentChain, hamiltonians: Vec<ComplexMatrix>, hbar: f64) -> Result<Self> {
        let n = hamiltonians.first().map_or(1, ComplexMatrix::dim);
        Self::new(chain, hamiltonians, Shocks::Constant(ComplexMatrix::identity(n)), hbar)
    }

    pub fn with_constant_shock(
        chain: EnvironmentChain,
        hamiltonians: Vec<ComplexMatrix>,
        shock: ComplexMatrix,
        hbar: f64,
    ) -> Result<Self> {
        Self::new(chain, hamiltonians, Shocks::Constant(shock), hbar)
    }

    pub fn dim(&self) -> usize {
        self.hamiltonians[0].dim()
    }

    pub fn states(&self) -> usize {
        self.chain.states()
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn chain(&self) -> &EnvironmentChain {
        &self.chain
    }

    pub fn hamiltonian(&self, state: usize) -> &ComplexMatrix {
        &self.hamiltonians[state]
    }

    pub fn hamiltonians(&self) -> &[ComplexMatrix] {
        &self.hamiltonians
    }

    pub fn spectrum(&self, state: usize) -> &HermitianEig {
        &self.spectra[state]
    }

    pub fn shocks(&self) -> &Shocks {
        &self.shocks
    }

    /// Shock applied on the jump `from → to`.
    pub fn shock(&self, from: usize, to: usize) -> Result<&ComplexMatrix> {
        match &self.shocks {
            Shocks::Constant(v) => Ok(v),
            Shocks::PerTransition(map) => map.get(&(from, to)).ok_or(Error::MissingShock { from, to }),
        }
    }

    pub fn has_identity_shocks(&self) -> bool {
        let id = ComplexMatrix::identity(self.dim());
        match &self.shocks {
            Shocks::Constant(v) => *v == id,
            Shocks::PerTransition(map) => map.values().all(|v| *v == id),
        }
    }

    /// Every transition the chain can make has a shock.
    pub fn check_shock_coverage(&self) -> Result<()> {
        for from in 0..self.states() {
            for to in 0..self.states() {
                if self.chain.rate(from) * self.chain.jump_probability(from, to) > 0.0 {
                    self.shock(from, to)?;
                }
            }
        }
        Ok(())
    }

    fn check_state(&self, s: usize) -> Result<()> {
        if s < self.states() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("environment state {s} out of range")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSolution<T> {
    pub grid: Vec<f64>,
    pub values: Vec<T>,
    pub trajectory: EnvTrajectory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvolveOptions {
    /// Memoize `exp(−iΔt H_k/ħ)` per `(state, Δt)` within one call.
    pub cache_propagators: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { cache_propagators: true }
    }
}

pub fn apply_jump_state(model: &QuantumModel, from: usize, to: usize, psi: &StateVector) -> Result<StateVector> {
    model.check_state(from)?;
    model.check_state(to)?;
    Ok(model.shock(from, to)? * psi)
}

pub fn apply_jump_density(model: &QuantumModel, from: usize, to: usize, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
    model.check_state(from)?;
    model.check_state(to)?;
    Ok(rho.conjugate_by(model.shock(from, to)?))
}

struct Propagators<'a> {
    model: &'a QuantumModel,
    table: Option<HashMap<(usize, u64), ComplexMatrix>>,
}

impl<'a> Propagators<'a> {
    fn new(model: &'a QuantumModel, options: EvolveOptions) -> Self {
        Self { model, table: options.cache_propagators.then(HashMap::new) }
    }

    fn get(&mut self, state: usize, dt: f64) -> Result<ComplexMatrix> {
        let model = self.model;
        match &mut self.table {
            Some(table) => Ok(table
                .entry((state, dt.to_bits()))
                .or_insert_with(|| model.spectrum(state).propagator(dt, model.hbar()))
                .clone()),
            None => unitary_propagator(model.hamiltonian(state), dt, model.hbar()),
        }
    }
}

fn check_path(model: &QuantumModel, traj: &EnvTrajectory, grid: &[f64]) -> Result<()> {
    model.check_state(traj.initial_state())?;
    for e in traj.events() {
        model.check_state(e.to)?;
    }
    let mut prev = 0.0;
    for &t in grid {
        if !(t >= 0.0 && t <= traj.horizon()) {
            return Err(Error::GridOutsideHorizon { time: t, horizon: traj.horizon() });
        }
        if t < prev {
            return Err(Error::InvalidArgument(format!("grid is not increasing at {t}")));
        }
        prev = t;
    }
    Ok(())
}

fn walk<T: Clone>(
    model: &QuantumModel,
    traj: &EnvTrajectory,
    x0: T,
    grid: &[f64],
    options: EvolveOptions,
    propagate: impl Fn(&ComplexMatrix, &T) -> T,
    jump: impl Fn(usize, usize, &T) -> Result<T>,
) -> Result<Vec<T>> {
    let mut propagators = Propagators::new(model, options);
    let mut x = x0;
    let mut t = 0.0;
    let mut state = traj.initial_state();
    let mut events = traj.events().iter().peekable();
    let mut out = Vec::with_capacity(grid.len());
    for &g in grid {
        while let Some(e) = events.next_if(|e| e.time <= g) {
            if e.time > t {
                x = propagate(&propagators.get(state, e.time - t)?, &x);
            }
            x = jump(e.from, e.to, &x)?;
            t = e.time;
            state = e.to;
        }
        if g > t {
            x = propagate(&propagators.get(state, g - t)?, &x);
            t = g;
        }
        out.push(x.clone());
    }
    Ok(out)
}

pub fn evolve_state(
    model: &QuantumModel,
    traj: &EnvTrajectory,
    psi0: &StateVector,
    grid: &[f64],
) -> Result<PathSolution<StateVector>> {
    evolve_state_with(model, traj, psi0, grid, EvolveOptions::default())
}

pub fn evolve_state_with(
    model: &QuantumModel,
    traj: &EnvTrajectory,
    psi0: &StateVector,
    grid: &[f64],
    options: EvolveOptions,
) -> Result<PathSolution<StateVector>> {
    if psi0.len() != model.dim() {
        return Err(Error::Shape(format!("state has length {}, expected {}", psi0.len(), model.dim())));
    }
    let norm = psi0.norm();
    if (norm - 1.0).abs() > tolerances::STATE_NORM {
        return Err(Error::InvalidArgument(format!("initial state has norm {norm}, expected 1")));
    }
    check_path(model, traj, grid)?;
    let values = walk(
        model,
        traj,
        psi0.clone(),
        grid,
        options,
        |u, psi| u * psi,
        |from, to, psi| Ok(model.shock(from, to)? * psi),
    )?;
    Ok(PathSolution { grid: grid.to_vec(), values, trajectory: traj.clone() })
}

pub fn evolve_density(
    model: &QuantumModel,
    traj: &EnvTrajectory,
    rho0: &ComplexMatrix,
    grid: &[f64],
) -> Result<PathSolution<ComplexMatrix>> {
    evolve_density_with(model, traj, rho0, grid, EvolveOptions::default())
}

pub fn evolve_density_with(
    model: &QuantumModel,
    traj: &EnvTrajectory,
    rho0: &ComplexMatrix,
    grid: &[f64],
    options: EvolveOptions,
) -> Result<PathSolution<ComplexMatrix>> {
    check_density_input(model, rho0)?;
    check_path(model, traj, grid)?;
    let values = evolve_density_unchecked(model, traj, rho0, grid, options)?;
    Ok(PathSolution { grid: grid.to_vec(), values, trajectory: traj.clone() })
}

pub(crate) fn check_density_input(model: &QuantumModel, rho0: &ComplexMatrix) -> Result<()> {
    if rho0.dim() != model.dim() {
        return Err(Error::Shape(format!("density has dimension {}, expected {}", rho0.dim(), model.dim())));
    }
    rho0.ensure_density(tolerances::DENSITY)
}

/// Density evolution without input validation, for callers that validated
/// the model, initial state and grid once up front.
pub(crate) fn evolve_density_unchecked(
    model: &QuantumModel,
    traj: &EnvTrajectory,
    rho0: &ComplexMatrix,
    grid: &[f64],
    options: EvolveOptions,
) -> Result<Vec<ComplexMatrix>> {
    walk(
        model,
        traj,
        rho0.clone(),
        grid,
        options,
        |u, rho| rho.conjugate_by(u),
        |from, to, rho| Ok(rho.conjugate_by(model.shock(from, to)?)),
    )
}
