//! Quantization checks on a small grid: exactness of `Op(Λ)`, self-adjointness and the
//! composition residual ladder.
use torus_nf::cli::composition_ladder;
use torus_nf::paradiff::{is_selfadjoint, quantize_bw, quantize_lambda, Symbol};
use torus_nf::torus_grid::GridSpec;

fn main() {
    for (d, k) in [(1, 8), (1, 16), (2, 8)] {
        let g = GridSpec::flat(d, k, 0.5).unwrap();
        let err = quantize_bw(&Symbol::lambda(&g)).sub(&quantize_lambda(&g)).max_abs();
        let sa = is_selfadjoint(&quantize_bw(&Symbol::lambda(&g)));
        let [ab, ba] = composition_ladder(&g, 1.0);
        println!("d={d} K={k:2}  |Op(Λ) - diag Λ| = {err:.1e}  self-adjointness {sa:.1e}");
        println!("    residual ρ=1..3  (Λ,b): {:.3e} {:.3e} {:.3e}", ab[0], ab[1], ab[2]);
        println!("                     (b,Λ): {:.3e} {:.3e} {:.3e}", ba[0], ba[1], ba[2]);
    }
}
