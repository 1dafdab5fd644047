//! Probability currents and pilot-wave guidance equations for Hamiltonians
//! written as finite sums `Σ h_n(q, t) D^n` of partial derivatives.

pub mod altcurrent;
pub mod current;
pub mod epstein;
pub mod error;
pub mod expr;
pub mod grid;
pub mod io;
pub mod multiindex;
pub mod operator;
pub mod solver;
pub mod state;
pub mod trajectory;

pub use current::{CurrentTable, TableJson};
pub use error::{Error, Result};
pub use expr::{CoefficientExpression, SampleSpec};
pub use grid::{Grid, GridState, VectorField};
pub use multiindex::MultiIndex;
pub use num_complex::Complex64;
pub use operator::{parse_hamiltonian, DifferentialOperator};
pub use solver::{evolve, Evolution, EvolutionSpec};
pub use state::{Preset, StateSpec};
pub use trajectory::{Ensemble, EquivarianceReport, Trajectories};
