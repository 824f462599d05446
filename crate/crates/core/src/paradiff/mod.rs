//! Symbols on the truncated lattice, Bony–Weyl quantization, symbolic calculus,
//! structure residuals and paradifferential flows.
//!
//! Symbols hold plain Fourier-series coefficients in `x`, so the quantization kernel is
//! `η_ε(|j−k|/⟨j+k⟩) c(j−k, (j+k)/2)` with no further normalization and
//! `Op(Λ) = diag Λ` exactly.

mod calculus;
mod family;
mod flows;
mod linop;
mod quantize;
mod symbol;

pub use calculus::{compose_expansion, composition_residual, derivative, multi_indices, poisson_bracket, seminorm};
pub use family::{LinearFamily, Table};
pub use flows::{
    expm, flow, flow_at, flow_offdiag, flow_smoothing, is_hamiltonian, is_selfadjoint, offdiag_generator, pair_exp,
    symplectic_residual, unitarity_residual, FlowError,
};
pub use linop::{
    conj_op, pair_weights, probe_pair_linop, sobolev_weights, spectral_norm, weighted_norm, LinOp, PairLinOp,
    NORM_MAX_ITER, NORM_REL_TOL,
};
pub use quantize::{chi, eta, quantize_bw, quantize_bw_with, quantize_ie, quantize_lambda, quantize_matrix, smooth_cutoff};
pub use symbol::{Fiber, MatrixSymbol, Symbol};

/// Adjoint of a dense operator.
pub fn adjoint(a: &LinOp) -> LinOp {
    a.adjoint()
}
