use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use super::linop::{spectral_norm, LinOp, PairLinOp};
use super::quantize::quantize_bw;
use super::symbol::Symbol;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("flow generator must be real-valued (reality defect {0:e})")]
    NotReal(f64),
}

/// `exp(τ M)` as `(exp(τM/n))^n`.
pub fn expm(m: &DMatrix<Complex64>, tau: f64, substeps: usize) -> DMatrix<Complex64> {
    let n = substeps.max(1);
    let step = (m * Complex64::new(tau / n as f64, 0.0)).exp();
    let mut out = step.clone();
    for _ in 1..n {
        out = &out * &step;
    }
    out
}

fn check_real(g: &Symbol) -> Result<(), FlowError> {
    let defect = g.reality_defect();
    if defect > 1e-12 * (1.0 + g.max_abs()) {
        return Err(FlowError::NotReal(defect));
    }
    Ok(())
}

/// Time-one map of `∂_τ Φ = i Op(g) Φ`.
pub fn flow(g: &Symbol, substeps: usize) -> Result<LinOp, FlowError> {
    flow_at(g, 1.0, substeps)
}

/// Time-`τ` map; `τ = −1` is the inverse of [`flow`].
pub fn flow_at(g: &Symbol, tau: f64, substeps: usize) -> Result<LinOp, FlowError> {
    check_real(g)?;
    let gen = quantize_bw(g).scale(Complex64::new(0.0, 1.0));
    Ok(LinOp::from_matrix(g.grid(), expm(gen.matrix(), tau, substeps)))
}

/// Generator `i Op([[0, ψ], [−conj ψ(x,−ξ), 0]])`.
pub fn offdiag_generator(psi: &Symbol) -> PairLinOp {
    PairLinOp::new(LinOp::zeros(psi.grid()), quantize_bw(psi).scale(Complex64::new(0.0, 1.0)))
}

/// Time-one map of `∂_τ Φ = i Op([[0, ψ], [−conj ψ(x,−ξ), 0]]) Φ`.
pub fn flow_offdiag(psi: &Symbol, substeps: usize) -> PairLinOp {
    pair_exp(&offdiag_generator(psi), 1.0, substeps)
}

/// Time-one map of `∂_τ Φ = F Φ`.
pub fn flow_smoothing(f: &PairLinOp, substeps: usize) -> PairLinOp {
    pair_exp(f, 1.0, substeps)
}

pub fn pair_exp(gen: &PairLinOp, tau: f64, substeps: usize) -> PairLinOp {
    PairLinOp::from_dense(gen.grid(), &expm(&gen.to_dense(), tau, substeps))
}

/// `‖A − A*‖`.
pub fn is_selfadjoint(a: &LinOp) -> f64 {
    spectral_norm(&(a.matrix() - a.matrix().adjoint()))
}

/// `‖Φ*Φ − I‖`.
pub fn unitarity_residual(phi: &LinOp) -> f64 {
    let n = phi.matrix().nrows();
    spectral_norm(&(phi.matrix().adjoint() * phi.matrix() - DMatrix::identity(n, n)))
}

/// `‖H − H*‖` for `H = −iE M`; zero iff `M` is Hamiltonian.
pub fn is_hamiltonian(m: &PairLinOp) -> f64 {
    let h = m.left_phase(Complex64::new(0.0, -1.0)).to_dense();
    spectral_norm(&(&h - h.adjoint()))
}

fn minus_ie(n: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        if i != j {
            Complex64::new(0.0, 0.0)
        } else if i < n {
            Complex64::new(0.0, -1.0)
        } else {
            Complex64::new(0.0, 1.0)
        }
    })
}

/// `‖Q*(−iE)Q + iE‖`.
pub fn symplectic_residual(q: &PairLinOp) -> f64 {
    let n = q.grid().len();
    let j = minus_ie(n);
    let qd = q.to_dense();
    spectral_norm(&(qd.adjoint() * &j * &qd - j))
}
