//! Numerical simulation of helium supercooling as a phase transition.
//!
//! The state is the absolute temperature `θ` and the He I volume fraction
//! `β ∈ [0, 1]`. Temperature obeys a degenerate nonlinear heat equation with a
//! mixed Fourier / power-law flux; the phase obeys a constrained gradient flow
//! driven by `(θ − θ_c)/θ_c`. Each time step solves the phase obstacle problem
//! for a frozen temperature and then the temperature equation for the new
//! phase, optionally iterated to a fixed point.
//!
//! Modules, bottom up:
//!
//! * [`constitutive`]: constants and pointwise laws
//! * [`grid`]: 1D/2D box grids, staggered operators, discrete norms
//! * [`phase`]: the constrained phase step (projected SOR, Yosida)
//! * [`heat`]: the temperature step (Picard + preconditioned CG)
//! * [`simulator`]: time integration, diagnostics ledger and verification studies
//! * [`cli`]: configuration files, CSV formats and command implementations

pub mod cli;
pub mod constitutive;
pub mod error;
pub mod expr;
pub mod grid;
pub mod heat;
pub mod linalg;
pub mod phase;
pub mod simulator;

pub use constitutive::{ModelParams, ModelVariant};
pub use error::{CryoError, Result};
pub use grid::{Field, Grid, GridSpec, VectorField};
