//! Flows generated by a real order-0 symbol and by an off-diagonal symbol, with their
//! unitarity and symplecticity residuals and the inverse-flow round trip.
use torus_nf::cli::test_symbol;
use torus_nf::paradiff::{flow, flow_at, flow_offdiag, symplectic_residual, unitarity_residual, LinOp};
use torus_nf::torus_grid::GridSpec;
use torus_nf::Complex64;

fn main() {
    let g = GridSpec::flat(1, 12, 0.5).unwrap();
    let a = test_symbol(&g, 3, 0.0).scale(Complex64::new(0.5, 0.0));
    let phi = flow(&a, 4).unwrap();
    let inv = flow_at(&a, -1.0, 4).unwrap();
    let round = phi.compose(&inv).sub(&LinOp::identity(&g)).max_abs();
    println!("real symbol:   ‖Φ*Φ − I‖ = {:.2e}   ‖Φ Φ⁻¹ − I‖ = {round:.2e}", unitarity_residual(&phi));

    let psi = test_symbol(&g, 4, 0.0).scale(Complex64::new(0.2, 0.0));
    let psi = psi.add(&psi.reflect_xi()).scale(Complex64::new(0.5, 0.0));
    let q = flow_offdiag(&psi, 4);
    println!("off-diagonal:  symplectic residual = {:.2e}", symplectic_residual(&q));
}
