//! Paradifferential normal forms for derivative NLS on generic tori, at finite Fourier truncation.
//!
//! Every object lives on the box `|ξ_i| ≤ K` of [`torus_grid::GridSpec`]. Symbols are quantized
//! to dense operators, normal-form conjugations are measured as operator residuals, and the
//! evolution module runs the quadratic-lifespan experiment.

pub mod cli;
pub mod evolution;
pub mod nonlinearity;
pub mod normal_form;
pub mod paradiff;
pub mod small_divisors;
pub mod torus_grid;

pub use num_complex::Complex64;
