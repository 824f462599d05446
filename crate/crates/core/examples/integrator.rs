//! Strang splitting on the canonical equation: self-convergence order and Hamiltonian drift.
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use torus_nf::evolution::{initial_data, run, step, SimConfig};
use torus_nf::nonlinearity::CubicDensity;
use torus_nf::torus_grid::{Field, GridSpec};

fn evolve(u: &Field, f: &CubicDensity, dt: f64, t: f64) -> Field {
    let n = (t / dt).round() as usize;
    (0..n).fold(u.clone(), |v, _| step(&v, f, dt).unwrap())
}

fn main() {
    let g = GridSpec::flat(1, 32, 0.5).unwrap();
    let f = CubicDensity::canonical(1);
    let u0 = initial_data(&g, 4.0, 0.05, &mut ChaCha8Rng::seed_from_u64(1));
    let t = 1.0;
    let (a, b, c) = (evolve(&u0, &f, 4e-3, t), evolve(&u0, &f, 2e-3, t), evolve(&u0, &f, 1e-3, t));
    let ratio = a.sub(&b).l2() / b.sub(&c).l2();
    println!("self-convergence ratio {ratio:.3} (2 for first order, 4 for second)");

    let drift = |dt: f64, eps: f64| {
        let u = initial_data(&g, 4.0, eps, &mut ChaCha8Rng::seed_from_u64(1));
        run(&u, &f, &SimConfig::new(dt, 1.0, 4.0, vec![8.0]).unwrap()).unwrap().hamiltonian_drift()
    };
    for eps in [0.05, 0.2, 0.5] {
        let d: Vec<f64> = [0.04, 0.02, 0.01, 0.005].iter().map(|&dt| drift(dt, eps)).collect();
        println!("ε={eps}: H drift at dt = 0.04..0.005: {:.2e} {:.2e} {:.2e} {:.2e}  ratios {:.2} {:.2} {:.2}", d[0], d[1], d[2], d[3], d[0] / d[1], d[1] / d[2], d[2] / d[3]);
    }

    let cfg = SimConfig::new(1e-3, 10.0, 4.0, vec![8.0]).unwrap();
    let tr = run(&u0, &f, &cfg).unwrap();
    println!("t ∈ [0, 10]: relative H drift {:.2e}, max H^4 norm {:.4e}, exit {:?}", tr.hamiltonian_drift(), tr.max_low(), tr.exit);
}
