//! Paralinearization of the canonical density for a low band plus one high mode: the
//! high-frequency output of `Q(u)` is carried by `Op(a)u + Op(b)ū`.
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use torus_nf::nonlinearity::{CubicDensity, Nonlinearity};
use torus_nf::paradiff::quantize_bw;
use torus_nf::torus_grid::{random_field, Field, GridSpec, PairField};
use torus_nf::Complex64;

fn main() {
    let g = GridSpec::flat(1, 24, 0.5).unwrap();
    let f = CubicDensity::canonical(1);
    let nl = Nonlinearity::new(&f, &g).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let u = random_field(&g, &mut rng, 1, 0.05).axpy(Complex64::new(0.05, 0.0), &Field::single_mode(&g, &[10, 0, 0], Complex64::new(1.0, 0.0)));
    let uu = PairField::from_u(u.clone());
    let ms = nl.paralinearize(&uu);
    let q = nl.q(&u);
    let defect = q.sub(&quantize_bw(&ms.a).apply(&u)).sub(&quantize_bw(&ms.b).apply(&uu.ubar));
    let band = |f: &Field| {
        g.points().zip(f.coeffs()).filter(|(p, _)| (8..=12).contains(&p[0].abs())).map(|(_, v)| v.norm_sqr()).sum::<f64>().sqrt()
    };
    println!("‖Q(u)‖ on 8 ≤ |k| ≤ 12 : {:.3e}", band(&q));
    println!("defect there          : {:.3e}", band(&defect));
    println!("defect, all modes     : {:.3e}", defect.l2());
    println!("H(u) = {:.6e}", nl.hamiltonian(&u).unwrap());
}
