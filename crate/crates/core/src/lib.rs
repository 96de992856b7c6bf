//! Relaxation Crank–Nicolson solver for the Alber equation on a periodic square,
//! with invariant diagnostics, soliton and Fourier-oracle validation, a
//! Penrose-type stability analysis and experiment drivers.
//!
//! The unknown is the inhomogeneous part `u(x, y, t)` of a two-point
//! autocorrelation; the homogeneous background enters through its
//! autocorrelation `Γ` sampled on the grid.

pub mod error;
pub mod grid;
pub mod operators;
pub mod solver;
pub mod sparse;
pub mod spectra;
pub mod scheme;
pub mod diagnostics;
pub mod validation;
pub mod stability;
pub mod experiments;

pub use error::{Error, Result};
pub use grid::{ComplexField, Grid, RealField};
pub use scheme::{evolve, Dynamics, InitMode, Observer, SchemeConfig, State, Stepper};
