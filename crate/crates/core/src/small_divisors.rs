//! Three-wave divisors, Diophantine mass scans and the Birkhoff homological solver.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::paradiff::{LinearFamily, Table};
use crate::torus_grid::{add_pt, sub_pt, GridSpec, Pt};

#[derive(Debug, Error, PartialEq)]
pub enum DivisorError {
    #[error("zero divisor Λ(k)+σΛ(k−ξ)+σ'Λ(ξ) = {value:e} at k={k:?}, ξ={xi:?}, (σ,σ')=({sigma},{sigma_p})")]
    ZeroDivisor { k: Vec<i64>, xi: Vec<i64>, sigma: i8, sigma_p: i8, value: f64 },
    #[error("invalid scan configuration: {0}")]
    Config(String),
}

/// Divisors below this (relative to `Λ(k)`) count as zero.
pub const ZERO_DIVISOR_TOL: f64 = 1e-12;

/// `d* = d(d−1)/2 + d`.
pub fn d_star(d: usize) -> usize {
    d * (d - 1) / 2 + d
}

/// `(g_11, …, g_1d, g_22, …, g_dd)`.
pub fn omega_g(grid: &GridSpec) -> Vec<f64> {
    let d = grid.d();
    let mut out = Vec::with_capacity(d_star(d));
    for i in 0..d {
        for j in i..d {
            out.push(grid.metric(i, j));
        }
    }
    out
}

/// `φ^{σ,σ'}(ξ, k) = Λ(ξ+k) + σΛ(ξ) + σ'Λ(k)`.
pub fn three_wave(grid: &GridSpec, xi: &Pt, k: &Pt, sigma: f64, sigma_p: f64) -> f64 {
    grid.lambda(&add_pt(xi, k)) + sigma * grid.lambda(xi) + sigma_p * grid.lambda(k)
}

pub const SIGNS: [(f64, f64); 4] = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)];

fn box_points(d: usize, r: i64) -> Vec<Pt> {
    let side = (2 * r + 1) as usize;
    (0..side.pow(d as u32))
        .map(|mut idx| {
            let mut p = [0i64; 3];
            for i in (0..d).rev() {
                p[i] = (idx % side) as i64 - r;
                idx /= side;
            }
            p
        })
        .collect()
}

fn jap(p: &Pt) -> f64 {
    (1.0 + p.iter().map(|&v| (v * v) as f64).sum::<f64>()).sqrt()
}

#[derive(Clone, Debug, Serialize)]
pub struct FamilyMin {
    pub sigma: f64,
    pub sigma_p: f64,
    /// `min |φ|` over the box.
    pub min_abs: f64,
    pub argmin: (Vec<i64>, Vec<i64>),
}

#[derive(Clone, Debug, Serialize)]
pub struct LowerBoundReport {
    pub gamma: f64,
    pub tau: f64,
    pub radius: usize,
    /// `min |φ| ⟨ξ⟩^τ ⟨k⟩^τ` over all sign pairs.
    pub min_weighted: f64,
    pub argmin: (Vec<i64>, Vec<i64>),
    pub argmin_signs: (f64, f64),
    pub per_family: Vec<FamilyMin>,
    /// Smallest `τ` for which the bound with this `γ` holds on the box (infinite if some `φ` vanishes).
    pub empirical_tau: f64,
    pub pass: bool,
}

/// Exhaustive scan of `|φ^{σ,σ'}(ξ,k)| ⟨ξ⟩^τ ⟨k⟩^τ ≥ γ` over `|ξ_i|, |k_i| ≤ R`.
pub fn certify_lower_bound(grid: &GridSpec, gamma: f64, tau: f64, radius: usize) -> LowerBoundReport {
    assert!(radius >= 1);
    let d = grid.d();
    let pts = box_points(d, radius as i64);
    let lam: Vec<f64> = pts.iter().map(|p| grid.lambda(p)).collect();
    let jw: Vec<f64> = pts.iter().map(jap).collect();
    // (min_weighted, xi, k, family, min_abs per family, argmin per family, tau needed)
    #[derive(Clone)]
    struct Acc {
        wmin: f64,
        warg: (usize, usize, usize),
        fam: [(f64, usize, usize); 4],
        tau_need: f64,
    }
    let init = || Acc { wmin: f64::INFINITY, warg: (0, 0, 0), fam: [(f64::INFINITY, 0, 0); 4], tau_need: 0.0 };
    let merge = |mut a: Acc, b: Acc| {
        if b.wmin < a.wmin || (b.wmin == a.wmin && b.warg < a.warg) {
            a.wmin = b.wmin;
            a.warg = b.warg;
        }
        for f in 0..4 {
            if b.fam[f].0 < a.fam[f].0 || (b.fam[f].0 == a.fam[f].0 && (b.fam[f].1, b.fam[f].2) < (a.fam[f].1, a.fam[f].2)) {
                a.fam[f] = b.fam[f];
            }
        }
        a.tau_need = a.tau_need.max(b.tau_need);
        a
    };
    let acc = (0..pts.len())
        .into_par_iter()
        .map(|xi| {
            let mut a = init();
            for ki in 0..pts.len() {
                let s = add_pt(&pts[xi], &pts[ki]);
                let ls = grid.lambda(&s);
                let w = jw[xi] * jw[ki];
                for (f, &(sg, sp)) in SIGNS.iter().enumerate() {
                    let phi = (ls + sg * lam[xi] + sp * lam[ki]).abs();
                    let wv = phi * w.powf(tau);
                    if wv < a.wmin {
                        a.wmin = wv;
                        a.warg = (xi, ki, f);
                    }
                    if phi < a.fam[f].0 {
                        a.fam[f] = (phi, xi, ki);
                    }
                    if phi < gamma {
                        let need = if phi == 0.0 || w == 1.0 { f64::INFINITY } else { (gamma / phi).ln() / w.ln() };
                        a.tau_need = a.tau_need.max(need);
                    }
                }
            }
            a
        })
        .reduce(init, merge);
    let v = |i: usize| pts[i][..d].to_vec();
    LowerBoundReport {
        gamma,
        tau,
        radius,
        min_weighted: acc.wmin,
        argmin: (v(acc.warg.0), v(acc.warg.1)),
        argmin_signs: SIGNS[acc.warg.2],
        per_family: (0..4)
            .map(|f| FamilyMin {
                sigma: SIGNS[f].0,
                sigma_p: SIGNS[f].1,
                min_abs: acc.fam[f].0,
                argmin: (v(acc.fam[f].1), v(acc.fam[f].2)),
            })
            .collect(),
        empirical_tau: acc.tau_need,
        pass: acc.wmin >= gamma,
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct DiophantineResult {
    pub pass: bool,
    pub worst_ell: Vec<i64>,
    /// `min |ω·ℓ ± m| ⟨ℓ⟩^{τ*}` over the ℓ-box.
    pub worst_value: f64,
}

/// The ℓ-box `|ℓ_i| ≤ cutoff` in `Z^{d*}` with `(ω·ℓ, ⟨ℓ⟩^{τ*})` precomputed.
#[derive(Clone, Debug)]
pub struct EllTable {
    ells: Vec<Vec<i64>>,
    dots: Vec<f64>,
    weights: Vec<f64>,
}

impl EllTable {
    pub fn new(omega: &[f64], tau_star: f64, cutoff: usize) -> Self {
        let n = omega.len();
        let side = 2 * cutoff + 1;
        let total = side.pow(n as u32);
        let mut ells = Vec::with_capacity(total);
        let mut dots = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        for mut idx in 0..total {
            let mut l = vec![0i64; n];
            for i in (0..n).rev() {
                l[i] = (idx % side) as i64 - cutoff as i64;
                idx /= side;
            }
            dots.push(l.iter().zip(omega).map(|(&a, &w)| a as f64 * w).sum());
            weights.push((1.0 + l.iter().map(|&a| (a * a) as f64).sum::<f64>()).sqrt().powf(tau_star));
            ells.push(l);
        }
        EllTable { ells, dots, weights }
    }

    /// Worst `|ω·ℓ ± m| ⟨ℓ⟩^{τ*}` and its `ℓ` (first in box order on ties).
    pub fn worst(&self, m: f64) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0);
        for (i, (&v, &w)) in self.dots.iter().zip(&self.weights).enumerate() {
            let a = (v + m).abs().min((v - m).abs()) * w;
            if a < best.0 {
                best = (a, i);
            }
        }
        best
    }
}

/// `|ω·ℓ ± m| ≥ γ/⟨ℓ⟩^{τ*}` for every `ℓ` in the box and both signs.
pub fn diophantine_test(m: f64, omega: &[f64], gamma: f64, tau_star: f64, cutoff: usize) -> DiophantineResult {
    let table = EllTable::new(omega, tau_star, cutoff);
    let (worst, i) = table.worst(m);
    DiophantineResult { pass: worst >= gamma, worst_ell: table.ells[i].clone(), worst_value: worst }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanConfig {
    pub gamma: f64,
    pub tau_star: f64,
    pub ell_cutoff: usize,
    pub mass_lo: f64,
    pub mass_hi: f64,
    pub mass_count: usize,
}

impl ScanConfig {
    /// `γ`, `τ* = d* + 1`, cutoff 20, `10⁴` masses in `(0, 1)`.
    pub fn default_for(d: usize) -> Self {
        ScanConfig { gamma: 1e-3, tau_star: d_star(d) as f64 + 1.0, ell_cutoff: 20, mass_lo: 0.0, mass_hi: 1.0, mass_count: 10_000 }
    }

    pub fn validate(&self, d: usize) -> Result<(), DivisorError> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(DivisorError::Config(format!("gamma must lie in (0,1), got {}", self.gamma)));
        }
        if self.tau_star < d_star(d) as f64 {
            return Err(DivisorError::Config(format!("tau_star must be ≥ d* = {}", d_star(d))));
        }
        if self.ell_cutoff == 0 {
            return Err(DivisorError::Config("ell_cutoff must be positive".into()));
        }
        if !(self.mass_lo >= 0.0 && self.mass_hi > self.mass_lo && self.mass_count > 0) {
            return Err(DivisorError::Config("mass grid must be a nonempty interval in [0, ∞)".into()));
        }
        Ok(())
    }

    /// Cell midpoints, so every mass is strictly inside `(lo, hi)`.
    pub fn masses(&self) -> Vec<f64> {
        let h = (self.mass_hi - self.mass_lo) / self.mass_count as f64;
        (0..self.mass_count).map(|i| self.mass_lo + (i as f64 + 0.5) * h).collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MassRow {
    pub m: f64,
    pub pass: bool,
    pub worst_ell: Vec<i64>,
    pub worst_value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MassScan {
    pub gamma: f64,
    pub rows: Vec<MassRow>,
    pub excluded_fraction: f64,
}

impl MassScan {
    /// Fraction failing at another `γ`; the worst values do not depend on `γ`.
    pub fn fraction_at(&self, gamma: f64) -> f64 {
        self.rows.iter().filter(|r| r.worst_value < gamma).count() as f64 / self.rows.len() as f64
    }
}

/// Fraction of the mass grid failing [`diophantine_test`].
pub fn excluded_measure_scan(cfg: &ScanConfig, omega: &[f64]) -> MassScan {
    let table = EllTable::new(omega, cfg.tau_star, cfg.ell_cutoff);
    let rows: Vec<MassRow> = cfg
        .masses()
        .into_par_iter()
        .map(|m| {
            let (w, i) = table.worst(m);
            MassRow { m, pass: w >= cfg.gamma, worst_ell: table.ells[i].clone(), worst_value: w }
        })
        .collect();
    let failed = rows.iter().filter(|r| !r.pass).count();
    MassScan { gamma: cfg.gamma, excluded_fraction: failed as f64 / rows.len() as f64, rows }
}

/// `G = I + perturbation·S` with `S` symmetric, entries uniform in `[−1, 1]`, redrawn until
/// `m` passes the Diophantine test at `(γ, τ*, cutoff)`.
pub fn generic_metric<R: Rng>(
    d: usize,
    k: usize,
    m: f64,
    perturbation: f64,
    cfg: &ScanConfig,
    rng: &mut R,
) -> Result<GridSpec, crate::torus_grid::GridError> {
    loop {
        let mut g = vec![0.0; d * d];
        for i in 0..d {
            for j in i..d {
                let v: f64 = rng.random_range(-1.0..1.0) * perturbation;
                g[i * d + j] = v + if i == j { 1.0 } else { 0.0 };
                g[j * d + i] = g[i * d + j];
            }
        }
        let grid = match GridSpec::new(d, k, &g, m, 0.25) {
            Ok(g) => g,
            Err(crate::torus_grid::GridError::MetricIndefinite(_)) => continue,
            Err(e) => return Err(e),
        };
        if diophantine_test(m, &omega_g(&grid), cfg.gamma, cfg.tau_star, cfg.ell_cutoff).pass {
            return Ok(grid);
        }
    }
}

fn divisor(grid: &GridSpec, k: &Pt, xi: &Pt, sigma: f64, sigma_p: f64) -> f64 {
    grid.lambda(k) + sigma * grid.lambda(&sub_pt(k, xi)) + sigma_p * grid.lambda(xi)
}

/// `F(k, ξ) = −r(k, ξ) / (i(Λ(k) + σΛ(k−ξ) + σ'Λ(ξ)))` on box indices `(k, ξ)` with `k−ξ` in the box.
pub fn birkhoff_f(r: &DMatrix<Complex64>, sigma: f64, sigma_p: f64, grid: &GridSpec) -> Result<DMatrix<Complex64>, DivisorError> {
    let n = grid.len();
    assert_eq!(r.shape(), (n, n));
    let mut out = DMatrix::zeros(n, n);
    for xi in 0..n {
        let x = grid.point(xi);
        for ki in 0..n {
            let k = grid.point(ki);
            if grid.index(&sub_pt(&k, &x)).is_none() {
                continue;
            }
            let div = divisor(grid, &k, &x, sigma, sigma_p);
            if div.abs() <= ZERO_DIVISOR_TOL * grid.lambda(&k) {
                return Err(DivisorError::ZeroDivisor {
                    k: k[..grid.d()].to_vec(),
                    xi: x[..grid.d()].to_vec(),
                    sigma: sigma as i8,
                    sigma_p: sigma_p as i8,
                    value: div,
                });
            }
            out[(ki, xi)] = -r[(ki, xi)] / Complex64::new(0.0, div);
        }
    }
    Ok(out)
}

/// Solves `−F(iE Op(Λ) U) + [iE Op(Λ), F(U)] + R(U) = 0` table by table.
pub fn birkhoff_matrix_solve(r: &LinearFamily) -> Result<LinearFamily, DivisorError> {
    let g = *r.grid();
    let mut out = LinearFamily::zeros(&g);
    for t in Table::ALL {
        let (s, sp) = t.signs();
        *out.table_mut(t) = birkhoff_f(r.table(t), s, sp, &g)?;
    }
    Ok(out)
}

/// `L(F) = −F(T₀ ·) + [T₀, F(·)]` with `T₀ = iE Op(Λ)`, as a family.
pub fn homological_operator(f: &LinearFamily) -> LinearFamily {
    let g = *f.grid();
    f.map(|t, k, x, v| {
        let (s, sp) = t.signs();
        Complex64::new(0.0, divisor(&g, k, x, s, sp)) * v
    })
}

/// Relative residual `max|L(F) + R| / max|R|` on the tables.
pub fn birkhoff_residual(r: &LinearFamily, f: &LinearFamily) -> f64 {
    let res = homological_operator(f).add(r);
    res.max_abs() / r.max_abs().max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paradiff::{PairLinOp, LinOp};
    use crate::torus_grid::{random_field, Field, PairField};
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn omega_examples() {
        let g = GridSpec::new(2, 2, &[1.5, 0.25, 0.25, 0.75], 0.5, 0.25).unwrap();
        assert_eq!(omega_g(&g), vec![1.5, 0.25, 0.75]);
        assert_eq!(omega_g(&GridSpec::new(1, 2, &[1.7], 0.5, 0.25).unwrap()), vec![1.7]);
        assert_eq!(omega_g(&GridSpec::flat(3, 1, 0.5).unwrap()).len(), 6);
        assert_eq!(d_star(1), 1);
        assert_eq!(d_star(2), 3);
    }

    #[test]
    fn three_wave_examples() {
        let g = GridSpec::flat(2, 4, 0.5).unwrap();
        let xi = [2, -1, 0];
        let k = [-3, 4, 0];
        let dot = (2 * -3 + -4) as f64;
        assert_eq!(three_wave(&g, &xi, &k, -1.0, -1.0), 2.0 * dot - 0.5);
        assert_eq!(three_wave(&g, &[0; 3], &[0; 3], -1.0, -1.0), -0.5);
        assert!(three_wave(&g, &xi, &k, 1.0, 1.0) >= 1.5);
    }

    #[test]
    fn lower_bound_flat_torus() {
        let g = GridSpec::flat(1, 4, 0.5).unwrap();
        let rep = certify_lower_bound(&g, 0.1, 0.0, 32);
        let mm = rep.per_family.iter().find(|f| f.sigma < 0.0 && f.sigma_p < 0.0).unwrap();
        assert_eq!(mm.min_abs, 0.5);
        let pp = rep.per_family.iter().find(|f| f.sigma > 0.0 && f.sigma_p > 0.0).unwrap();
        assert_eq!(pp.min_abs, 1.5);
        assert_eq!(pp.argmin, (vec![0], vec![0]));
        assert!(rep.pass);
        let fail = certify_lower_bound(&g, 0.6, 0.0, 8);
        assert!(!fail.pass);
        assert!(fail.min_weighted < 0.6);
    }

    #[test]
    fn lower_bound_monotone_in_radius() {
        let g = GridSpec::new(2, 2, &[1.0, 0.13, 0.13, 0.91], 0.37, 0.25).unwrap();
        let mut prev = f64::INFINITY;
        for r in 1..=5 {
            let rep = certify_lower_bound(&g, 1e-3, 1.0, r);
            assert!(rep.min_weighted <= prev);
            prev = rep.min_weighted;
        }
    }

    #[test]
    fn diophantine_examples() {
        assert!(diophantine_test(0.5, &[1.0], 0.4, 1.0, 10).pass);
        let r = diophantine_test(0.75, &[0.25, 0.5], 1e-3, 3.0, 5);
        assert!(!r.pass);
        assert_eq!(r.worst_value, 0.0);
        assert!(diophantine_test(0.75, &[0.25, 0.5], 0.0, 3.0, 5).pass);
    }

    #[test]
    fn scan_matches_pointwise_test() {
        let cfg = ScanConfig { gamma: 2e-2, tau_star: 4.0, ell_cutoff: 4, mass_lo: 0.0, mass_hi: 1.0, mass_count: 200 };
        let omega = [1.03, -0.07, 0.96];
        let scan = excluded_measure_scan(&cfg, &omega);
        for row in &scan.rows {
            let direct = diophantine_test(row.m, &omega, cfg.gamma, cfg.tau_star, cfg.ell_cutoff);
            assert_eq!(direct.pass, row.pass);
        }
        let mut prev = 1.0;
        for gamma in [1e-1, 1e-2, 1e-3, 1e-4] {
            let f = scan.fraction_at(gamma);
            assert!(f <= prev);
            prev = f;
        }
    }

    #[test]
    fn birkhoff_single_entry() {
        let g = GridSpec::flat(1, 4, 1.0).unwrap();
        let n = g.len();
        let (k0, x0) = ([2i64, 0, 0], [1i64, 0, 0]);
        let mut r = DMatrix::zeros(n, n);
        r[(g.index(&k0).unwrap(), g.index(&x0).unwrap())] = c(1.0, 0.0);
        let f = birkhoff_f(&r, 1.0, 1.0, &g).unwrap();
        let want = -c(1.0, 0.0) / c(0.0, g.lambda(&k0) + g.lambda(&[1, 0, 0]) + g.lambda(&x0));
        assert!((f[(g.index(&k0).unwrap(), g.index(&x0).unwrap())] - want).norm() < 1e-15);
        assert_eq!(birkhoff_f(&DMatrix::zeros(n, n), 1.0, 1.0, &g).unwrap(), DMatrix::zeros(n, n));
    }

    #[test]
    fn resonant_mass_is_rejected() {
        // G = I, m = 2: Λ(k) − Λ(k−ξ) − Λ(ξ) = 2(k−ξ)·ξ − 2 vanishes at k−ξ = ξ = 1.
        let g = GridSpec::flat(1, 4, 2.0).unwrap();
        let n = g.len();
        let r = DMatrix::from_element(n, n, c(1.0, 0.0));
        assert!(matches!(birkhoff_f(&r, -1.0, -1.0, &g), Err(DivisorError::ZeroDivisor { .. })));
    }

    fn random_family(g: &GridSpec, seed: u64) -> LinearFamily {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = g.len();
        let mut fam = LinearFamily::zeros(g);
        for t in Table::ALL {
            *fam.table_mut(t) = DMatrix::from_fn(n, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        }
        fam.map(|_, _, _, v| v)
    }

    /// Dense check of `−F(T₀U) + [T₀, F(U)] + R(U)` at a random `U`, independent of the table algebra.
    fn dense_residual(r: &LinearFamily, f: &LinearFamily, u: &PairField) -> f64 {
        let g = *r.grid();
        let t0 = PairLinOp::new(LinOp::diagonal(&g, |i| c(0.0, g.lambda(&g.point(i)))), LinOp::zeros(&g));
        let t0u = t0.apply(u);
        let lhs = f.eval(&t0u).scale(-1.0).add(&t0.commutator(&f.eval(u))).add(&r.eval(u));
        lhs.norm(0.0, 0.0) / r.eval(u).norm(0.0, 0.0)
    }

    #[test]
    fn birkhoff_identity_dense() {
        let g = GridSpec::flat(1, 8, 0.5).unwrap();
        let r = random_family(&g, 7);
        let f = birkhoff_matrix_solve(&r).unwrap();
        assert!(birkhoff_residual(&r, &f) < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = PairField::from_u(random_field(&g, &mut rng, 8, 1.0));
        assert!(dense_residual(&r, &f, &u) < 1e-12);
        let zero = LinearFamily::zeros(&g);
        assert_eq!(birkhoff_matrix_solve(&zero).unwrap().max_abs(), 0.0);
        let _ = Field::zeros(&g);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn three_wave_symmetric(a in -20i64..20, b in -20i64..20, x in -20i64..20, y in -20i64..20,
                                g12 in -0.3f64..0.3, m in 0.1f64..3.0, plus in proptest::bool::ANY) {
            let g = GridSpec::new(2, 2, &[1.0, g12, g12, 1.2], m, 0.25).unwrap();
            let s = if plus { 1.0 } else { -1.0 };
            let (p, q) = ([a, b, 0], [x, y, 0]);
            prop_assert!((three_wave(&g, &p, &q, s, s) - three_wave(&g, &q, &p, s, s)).abs() < 1e-12);
            prop_assert!(three_wave(&g, &p, &q, 1.0, 1.0) >= 3.0 * m - 1e-12);
        }
    }
}
