//! Splitting a symbol into averaged, non-resonant, resonant and smoothing parts, solving the
//! homological equation on the non-resonant part and checking the normal-form condition.
use torus_nf::cli::test_symbol;
use torus_nf::normal_form::{decompose, homological_g, is_normal_form, NFParams};
use torus_nf::torus_grid::GridSpec;

fn main() {
    for d in [1, 2] {
        let g = GridSpec::flat(d, if d == 1 { 16 } else { 6 }, 0.5).unwrap();
        let p = NFParams::default_for(d);
        let a = test_symbol(&g, 5, 1.0);
        let dec = decompose(&a, &p);
        println!("d={d}  δ={} τ={} ε_nf={}", p.delta, p.tau, p.eps_nf);
        println!("  parts max |·|: avg {:.3e} nr {:.3e} res {:.3e} smooth {:.3e}", dec.avg.max_abs(), dec.nr.max_abs(), dec.res.max_abs(), dec.smooth.max_abs());
        println!("  |sum − a| = {:.1e}", dec.sum().sub(&a).max_abs());
        let (_, residual) = homological_g(&dec.nr, &p);
        println!("  homological residual {residual:.2e}");
        let nf = dec.avg.add(&dec.res);
        let chk = is_normal_form(&nf, &p);
        println!("  avg + res in normal form: {} (worst ratio {:.3})", chk.ok, chk.worst_ratio);
        let chk = is_normal_form(&a, &p);
        println!("  a itself in normal form:  {} (worst offender {:?})", chk.ok, chk.worst);
    }
}
