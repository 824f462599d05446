use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use super::linop::{LinOp, PairLinOp};
use super::symbol::{MatrixSymbol, Symbol};
use crate::torus_grid::{add_pt, japanese, sub_pt, to_f, GridSpec};

fn h(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

/// Even `C^∞` cutoff: 1 on `|y| ≤ lo`, 0 on `|y| ≥ hi`, monotone in between.
pub fn smooth_cutoff(y: f64, lo: f64, hi: f64) -> f64 {
    let a = y.abs();
    if a <= lo {
        1.0
    } else if a >= hi {
        0.0
    } else {
        let t = (hi - a) / (hi - lo);
        h(t) / (h(t) + h(1.0 - t))
    }
}

/// Quantization cutoff: 1 on `[0, 5/4]`, 0 on `[8/5, ∞)`.
pub fn eta(y: f64) -> f64 {
    smooth_cutoff(y, 1.25, 1.6)
}

/// Normal-form cutoff: 1 on `[0, 1/2]`, 0 on `[1, ∞)`.
pub fn chi(y: f64) -> f64 {
    smooth_cutoff(y, 0.5, 1.0)
}

/// Bony–Weyl quantization with the standard cutoff [`eta`].
pub fn quantize_bw(a: &Symbol) -> LinOp {
    quantize_bw_with(a, eta)
}

/// `M[j,k] = cutoff(|j−k| / (eps_q ⟨j+k⟩)) · c(j−k, (j+k)/2)`, zero when `j−k` leaves the box.
pub fn quantize_bw_with(a: &Symbol, cutoff: impl Fn(f64) -> f64 + Sync) -> LinOp {
    let g = *a.grid();
    let n = g.len();
    let eps = g.eps_q();
    let support = a.support();
    let fib = a.fiber();
    let rows: Vec<Vec<(usize, Complex64)>> = (0..n)
        .into_par_iter()
        .map(|ji| {
            let j = g.point(ji);
            let mut out = Vec::new();
            for &ni in &support {
                let nn = g.point(ni);
                let Some(ki) = g.index(&sub_pt(&j, &nn)) else { continue };
                let k = g.point(ki);
                let hsum = add_pt(&j, &k);
                let nabs = nn.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt();
                let w = cutoff(nabs / (eps * japanese(&to_f(&hsum))));
                if w == 0.0 {
                    continue;
                }
                let zi = fib.index(&hsum).expect("midpoint on the fiber");
                let v = a.row(ni).expect("support row")[zi];
                out.push((ki, v * w));
            }
            out
        })
        .collect();
    let mut m = DMatrix::zeros(n, n);
    for (ji, row) in rows.into_iter().enumerate() {
        for (ki, v) in row {
            m[(ji, ki)] += v;
        }
    }
    LinOp::from_matrix(&g, m)
}

/// `Op([[a, b], [conj b(x,−ξ), conj a(x,−ξ)]])` as a real-to-real pair operator.
pub fn quantize_matrix(ms: &MatrixSymbol) -> PairLinOp {
    PairLinOp::new(quantize_bw(&ms.a), quantize_bw(&ms.b))
}

/// `iE · Op(ms)`.
pub fn quantize_ie(ms: &MatrixSymbol) -> PairLinOp {
    quantize_matrix(ms).left_phase(Complex64::new(0.0, 1.0))
}

/// Helper used by tests and the calculus suite: `Op(Λ)` on a grid.
pub fn quantize_lambda(grid: &GridSpec) -> LinOp {
    quantize_bw(&Symbol::lambda(grid))
}
