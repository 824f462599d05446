//! Building a run configuration from text and overrides, and running the calculus suite.
use torus_nf::cli::{calculus_suite, Fault, RunConfig};

fn main() {
    let cfg = RunConfig::from_text("grid.d = 1\ngrid.K = 8\n# comment\nnf.eps = 0.02\n").unwrap();
    let cfg = cfg.with("seed", 3).unwrap();
    print!("{}", cfg.to_text());
    println!("unknown key: {}", RunConfig::from_text("grid.size = 3").unwrap_err());
    for c in calculus_suite(&cfg.grid, Fault::None, cfg.seed) {
        println!("{:28} {:10.3e}  ≤ {:8.1e}  {}", c.name, c.value, c.threshold, if c.pass { "ok" } else { "FAIL" });
    }
}
