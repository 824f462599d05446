//! Lifespan study: runs over `t ≤ window·ε⁻²` for a halving sequence of amplitudes and
//! records the first time the `H^ρ` norm exceeds twice its initial size.
use torus_nf::evolution::{lifespan_study, SimConfig};
use torus_nf::nonlinearity::CubicDensity;
use torus_nf::torus_grid::GridSpec;

fn main() {
    let g = GridSpec::flat(1, 32, 0.5).unwrap();
    let cfg = SimConfig::new(0.01, 1.0, 4.0, vec![8.0]).unwrap();
    let study = lifespan_study(&CubicDensity::canonical(1), &g, &cfg, &[0.1, 0.05, 0.025], &[1, 2], 0.1).unwrap();
    println!("{:>7} {:>5} {:>10} {:>10} {:>9} {:>10} {:>11}", "eps", "seed", "t_max", "t_star", "censored", "low/eps", "high growth");
    for r in &study.rows {
        println!(
            "{:7.3} {:5} {:10.1} {:10.1} {:>9} {:10.4} {:11.4}",
            r.eps, r.seed, r.t_max, r.t_star, r.censored, r.low_ratio, r.high_growth.iter().cloned().fold(0.0, f64::max)
        );
    }
    for q in &study.ratios {
        println!("{q:?}");
    }
}
