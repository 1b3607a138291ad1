//! Quantum systems driven by a switching Markov environment.
//!
//! A finite-dimensional system evolves under a Hamiltonian selected by a
//! continuous-time Markov chain and receives a unitary shock at every jump of
//! the chain. The environment-averaged density matrix is computed by path
//! sampling, by integrating the averaged master equation and in the Laplace
//! domain.

pub mod environment;
pub mod error;
pub mod linalg;
pub mod master;
pub mod models;
pub mod random;
pub mod resolvent;
pub mod rng;
pub mod superop;
pub mod tolerances;
pub mod trajectory;

pub use environment::{EnvTrajectory, EnvironmentChain, JumpEvent};
pub use error::{Error, ErrorKind, Result};
pub use linalg::{ComplexMatrix, HermitianEig, StateVector};
pub use master::{AveragedDensities, Conservation, MCEstimate, MasterSolution};
pub use models::{ResidualSeries, TelegraphMode};
pub use num_complex::Complex64;
pub use resolvent::{LaplacePoint, LaplaceQuadrature};
pub use superop::{BlockGenerator, ShockConvention, Superoperator};
pub use trajectory::{EvolveOptions, PathSolution, QuantumModel, Shocks};
pub use nalgebra;
