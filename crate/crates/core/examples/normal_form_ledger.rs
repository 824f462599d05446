//! Diag, nf and Birkhoff conjugations on the paralinearized system at a seeded `U`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use torus_nf::evolution::initial_data;
use torus_nf::nonlinearity::CubicDensity;
use torus_nf::normal_form::{run_ledger, NFParams, NfSystem};
use torus_nf::torus_grid::{GridSpec, PairField};

fn main() {
    let grid = GridSpec::flat(1, 16, 0.5).unwrap();
    let u = initial_data(&grid, 1.0, 0.05, &mut ChaCha8Rng::seed_from_u64(1));
    let sys = NfSystem::new(&CubicDensity::canonical(1), &PairField::from_u(u), NFParams::default_for(1), 1.0).unwrap();
    let (_, ledger) = run_ledger(&sys, 3).unwrap();
    println!("{:>9} {:>11} {:>11} {:>11} {:>11}", "step", "offdiag", "non-nf", "remainder", "quadratic");
    let m = ledger.initial;
    println!("{:>9} {:11.3e} {:11.3e} {:11.3e} {:11.3e}", "initial", m.offdiag, m.non_normal_form, m.remainder, m.quadratic);
    for r in &ledger.steps {
        let m = r.after;
        println!("{:>9} {:11.3e} {:11.3e} {:11.3e} {:11.3e}  jet {:.1e}", r.kind.to_string(), m.offdiag, m.non_normal_form, m.remainder, m.quadratic, r.jet_defect);
    }
}
