use num_complex::Complex64;
use rayon::prelude::*;

use super::quantize::quantize_bw;
use super::symbol::Symbol;
use crate::torus_grid::{Field, Sampler};

/// Multi-indices in `N^d` with `|α| ≤ max`.
pub fn multi_indices(d: usize, max: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![0; d]];
    for _ in 0..max {
        let mut next = out.clone();
        for a in &out {
            for i in 0..d {
                let mut b = a.clone();
                b[i] += 1;
                if !next.contains(&b) {
                    next.push(b);
                }
            }
        }
        out = next;
    }
    out.sort_by_key(|a| (a.iter().sum::<usize>(), a.clone()));
    out
}

fn factorial(a: &[usize]) -> f64 {
    a.iter().map(|&k| (1..=k).product::<usize>() as f64).product()
}

/// `∂_x^{αx} ∂_ζ^{αξ} a`; `x` exact, `ζ` by repeated differences.
pub fn derivative(a: &Symbol, alpha_x: &[usize], alpha_xi: &[usize]) -> Symbol {
    let mut s = a.clone();
    for (j, &k) in alpha_x.iter().enumerate() {
        for _ in 0..k {
            s = s.dx(j);
        }
    }
    for (j, &k) in alpha_xi.iter().enumerate() {
        for _ in 0..k {
            s = s.dxi(j);
        }
    }
    s
}

/// `{a, b} = Σ_j ∂_{ζ_j}a ∂_{x_j}b − ∂_{x_j}a ∂_{ζ_j}b`.
pub fn poisson_bracket(a: &Symbol, b: &Symbol) -> Symbol {
    let d = a.grid().d();
    let mut out = Symbol::zeros(a.grid(), a.order() + b.order() - 1.0);
    for j in 0..d {
        out = out.add(&a.dxi(j).mul(&b.dx(j))).sub(&a.dx(j).mul(&b.dxi(j)));
    }
    out.with_order(a.order() + b.order() - 1.0)
}

/// `a #_ρ b = Σ_{|β|+|γ|<ρ} (−i/2)^{|β|+|γ|} (−1)^{|γ|} / (β!γ!) (∂_ζ^β ∂_x^γ a)(∂_x^β ∂_ζ^γ b)`.
///
/// `ρ = 1` is the product; `ρ = 2` adds `(1/2i){a, b}`.
pub fn compose_expansion(a: &Symbol, b: &Symbol, rho: usize) -> Symbol {
    assert!(rho >= 1);
    let d = a.grid().d();
    let order = a.order() + b.order();
    let idx = multi_indices(d, rho - 1);
    let mut out = Symbol::zeros(a.grid(), order);
    for beta in &idx {
        for gamma in &idx {
            let nb: usize = beta.iter().sum();
            let ng: usize = gamma.iter().sum();
            if nb + ng >= rho {
                continue;
            }
            let c = Complex64::new(0.0, -0.5).powu((nb + ng) as u32) * if ng % 2 == 1 { -1.0 } else { 1.0 }
                / (factorial(beta) * factorial(gamma));
            let left = derivative(a, gamma, beta);
            let right = derivative(b, beta, gamma);
            out = out.axpy(c, &left.mul(&right));
        }
    }
    out.with_order(order)
}

/// `H^s → H^{s−m₁−m₂+ρ}` norm of `Op(a)Op(b) − Op(a #_ρ b)`.
pub fn composition_residual(a: &Symbol, b: &Symbol, rho: usize, s: f64) -> f64 {
    let lhs = quantize_bw(a).compose(&quantize_bw(b));
    let rhs = quantize_bw(&compose_expansion(a, b, rho));
    let s_out = s - a.order() - b.order() + rho as f64;
    lhs.sub(&rhs).norm(s, s_out)
}

/// Discrete `|a|_{m,s}`: sup over sampled `x` and fiber `ζ` of
/// `|∂_x^{α₁}∂_ζ^{α₂} a| ⟨ζ⟩^{−m+δ|α₂|}`, `|α₁|+|α₂| ≤ s`.
pub fn seminorm(a: &Symbol, m: f64, s: usize, delta: f64) -> f64 {
    let g = *a.grid();
    let d = g.d();
    let sampler = Sampler::dealiased(&g);
    let fib = a.fiber();
    let to_coeff = (2.0 * std::f64::consts::PI).powf(d as f64 / 2.0);
    let mut best = 0.0f64;
    for ax in multi_indices(d, s) {
        for axi in multi_indices(d, s) {
            let tot: usize = ax.iter().sum::<usize>() + axi.iter().sum::<usize>();
            if tot > s {
                continue;
            }
            let der = derivative(a, &ax, &axi);
            let support = der.support();
            if support.is_empty() {
                continue;
            }
            let na2 = axi.iter().sum::<usize>() as f64;
            let local = (0..fib.len())
                .into_par_iter()
                .map(|zi| {
                    let z = fib.zeta(zi);
                    let mut f = Field::zeros(&g);
                    for &ki in &support {
                        f.coeffs_mut()[ki] = der.row(ki).expect("support")[zi] * to_coeff;
                    }
                    let sup = sampler.synthesize(&f).iter().map(|v| v.norm()).fold(0.0, f64::max);
                    let jz = (1.0 + z.iter().map(|v| v * v).sum::<f64>()).sqrt();
                    sup * jz.powf(-m + delta * na2)
                })
                .reduce(|| 0.0, f64::max);
            best = best.max(local);
        }
    }
    best
}
