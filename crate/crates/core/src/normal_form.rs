//! Normal-form cutoffs, symbol decomposition, homological equations and one-step conjugations.
//!
//! The linearized system is `∂_t + iE Op(Λ) + T₁(U) + T₂(U)` with `T₁` linear in `U` (stored as
//! two [`LinearFamily`] tables: the paradifferential part and the smoothing remainder) and `T₂`
//! quadratic in `U` (stored as a dense operator at the base point `U`).

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::nonlinearity::{CubicDensity, Nonlinearity, NonlinearityError};
use crate::paradiff::{
    chi, pair_exp, poisson_bracket, probe_pair_linop, quantize_ie, LinearFamily, PairLinOp, Symbol, Table,
};
use crate::small_divisors::{birkhoff_matrix_solve, homological_operator, DivisorError};
use crate::torus_grid::{add_pt, japanese, sub_pt, to_f, GridSpec, PairField, Pt, MAX_DIM};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Error)]
pub enum NfError {
    #[error("invalid normal-form parameters: {0}")]
    Params(String),
    #[error("cutoffs need k ≠ 0")]
    ZeroMode,
    #[error(transparent)]
    Divisor(#[from] DivisorError),
    #[error(transparent)]
    Nonlinearity(#[from] NonlinearityError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NFParams {
    pub delta: f64,
    pub tau: f64,
    pub eps_nf: f64,
}

impl NFParams {
    /// Requires `2/3 < δ < 1`, `τ > d − 1` and `0 < eps_nf < δ/(τ+1)`.
    pub fn new(d: usize, delta: f64, tau: f64, eps_nf: f64) -> Result<Self, NfError> {
        if !(delta > 2.0 / 3.0 && delta < 1.0) {
            return Err(NfError::Params(format!("delta = {delta} not in (2/3, 1)")));
        }
        if !(tau > d as f64 - 1.0) {
            return Err(NfError::Params(format!("tau = {tau} must exceed d − 1 = {}", d - 1)));
        }
        if !(eps_nf > 0.0 && eps_nf < delta / (tau + 1.0)) {
            return Err(NfError::Params(format!("eps_nf = {eps_nf} not in (0, {})", delta / (tau + 1.0))));
        }
        Ok(NFParams { delta, tau, eps_nf })
    }

    pub fn default_for(d: usize) -> Self {
        match d {
            1 => NFParams { delta: 0.75, tau: 1.0, eps_nf: 0.3 },
            2 => NFParams { delta: 0.75, tau: 1.5, eps_nf: 0.25 },
            _ => NFParams { delta: 0.75, tau: d as f64 - 0.5, eps_nf: 0.75 / (d as f64 + 1.0) },
        }
    }
}

/// `𝔢 = min{δ, 3δ−2, 2δ−1}`.
pub fn regularization_gain(delta: f64) -> Result<f64, NfError> {
    if !(delta > 2.0 / 3.0 && delta < 1.0) {
        return Err(NfError::Params(format!("delta = {delta} not in (2/3, 1)")));
    }
    Ok(delta.min(3.0 * delta - 2.0).min(2.0 * delta - 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cutoffs {
    pub chi: f64,
    pub chi_tilde: f64,
    /// `(1 − χ_k) / (2(ξ;k))`, zero where `χ_k = 1`.
    pub d: f64,
}

fn norm_pt(k: &Pt) -> f64 {
    k.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt()
}

/// `χ_k(ξ) = χ(2|k|^τ (ξ;k)/⟨ξ⟩^δ)`, `χ̃_k(ξ) = χ(|k|/⟨ξ⟩^{eps_nf})` and `d_k(ξ)`.
pub fn cutoffs(grid: &GridSpec, k: &Pt, xi: &[f64; MAX_DIM], p: &NFParams) -> Result<Cutoffs, NfError> {
    let kn = norm_pt(k);
    if kn == 0.0 {
        return Err(NfError::ZeroMode);
    }
    let dot = grid.form(xi, &to_f(k));
    let jx = japanese(xi);
    let c = chi(2.0 * kn.powf(p.tau) * dot / jx.powf(p.delta));
    let ct = chi(kn / jx.powf(p.eps_nf));
    let d = if c == 1.0 { 0.0 } else { (1.0 - c) / (2.0 * dot) };
    Ok(Cutoffs { chi: c, chi_tilde: ct, d })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    pub avg: Symbol,
    pub nr: Symbol,
    pub res: Symbol,
    pub smooth: Symbol,
}

impl Decomposition {
    pub fn sum(&self) -> Symbol {
        self.avg.add(&self.nr).add(&self.res).add(&self.smooth)
    }
}

/// `a = ⟨a⟩ + a^nr + a^res + a^S` by the row weights `(1−χ_k)χ̃_k`, `χ_k χ̃_k`, `1−χ̃_k`.
pub fn decompose(a: &Symbol, p: &NFParams) -> Decomposition {
    let g = *a.grid();
    let order = a.order();
    let part = |w: &(dyn Fn(&Cutoffs) -> f64 + Sync)| {
        a.map_entries(order, |k, z, v| {
            if k.iter().all(|&c| c == 0) {
                ZERO
            } else {
                v * w(&cutoffs(&g, k, z, p).expect("k ≠ 0"))
            }
        })
    };
    let avg = a.map_entries(order, |k, _, v| if k.iter().all(|&c| c == 0) { v } else { ZERO });
    Decomposition {
        nr: part(&|c| (1.0 - c.chi) * c.chi_tilde),
        res: part(&|c| c.chi * c.chi_tilde),
        smooth: part(&|c| 1.0 - c.chi_tilde),
        avg,
    }
}

/// Solution of `{Λ, g} + a^nr = 0` and the residual `max |{Λ, g} + a^nr|`.
///
/// Row `k` of `g` is `i d_k χ̃_k â(k, ·)`; the factor `i` makes the identity hold with
/// `{a, b} = ∂_ξa·∂_xb − ∂_xa·∂_ξb`, since `{Λ, e^{ikx}h} = 2i(ξ;k) h e^{ikx}`.
pub fn homological_g(a: &Symbol, p: &NFParams) -> (Symbol, f64) {
    let g = *a.grid();
    let gen = a.map_entries(a.order(), |k, z, v| {
        if k.iter().all(|&c| c == 0) {
            return ZERO;
        }
        let c = cutoffs(&g, k, z, p).expect("k ≠ 0");
        Complex64::new(0.0, c.d * c.chi_tilde) * v
    });
    let nr = decompose(a, p).nr;
    let residual = poisson_bracket(&Symbol::lambda(&g), &gen).add(&nr).max_abs();
    (gen, residual)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormalFormCheck {
    pub ok: bool,
    /// Violating `(k, ζ)` with the largest excess ratio.
    pub worst: Option<(Vec<i64>, Vec<f64>)>,
    pub worst_ratio: f64,
}

/// Entries above this magnitude count as nonzero.
pub const NF_THRESHOLD: f64 = 1e-14;

/// Excess of `(k, ξ)` over the bare normal-form support, `≤ 1` inside.
fn nf_ratio(grid: &GridSpec, k: &Pt, z: &[f64; MAX_DIM], p: &NFParams) -> f64 {
    let kn = norm_pt(k);
    if kn == 0.0 {
        return 0.0;
    }
    let jx = japanese(z);
    let r1 = grid.form(z, &to_f(k)).abs() * kn.powf(p.tau) / jx.powf(p.delta);
    let r2 = kn / jx.powf(p.eps_nf);
    r1.max(r2)
}

/// `ẑ(k, ξ) ≠ 0 ⟹ |(ξ;k)| ≤ ⟨ξ⟩^δ |k|^{−τ}` and `|k| ≤ ⟨ξ⟩^{eps_nf}`.
pub fn is_normal_form(z: &Symbol, p: &NFParams) -> NormalFormCheck {
    let g = *z.grid();
    let fib = z.fiber();
    let d = g.d();
    let mut worst: Option<(Vec<i64>, Vec<f64>)> = None;
    let mut worst_ratio = 0.0;
    for ki in z.support() {
        let k = g.point(ki);
        for (zi, v) in z.row(ki).unwrap().iter().enumerate() {
            if v.norm() <= NF_THRESHOLD {
                continue;
            }
            let zeta = fib.zeta(zi);
            let r = nf_ratio(&g, &k, &zeta, p);
            if r > 1.0 && r > worst_ratio {
                worst_ratio = r;
                worst = Some((k[..d].to_vec(), zeta[..d].to_vec()));
            }
        }
    }
    NormalFormCheck { ok: worst.is_none(), worst, worst_ratio }
}

/// `ψ = b / (2Λ(ξ))`.
pub fn diag_step_psi(b: &Symbol) -> Symbol {
    let g = *b.grid();
    b.map_entries(b.order() - 2.0, |_, z, v| v / (2.0 * g.lambda_at(z)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StepKind {
    Diag,
    Nf,
    Birkhoff,
}

impl std::fmt::Display for StepKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StepKind::Diag => "diag",
            StepKind::Nf => "nf",
            StepKind::Birkhoff => "birkhoff",
        })
    }
}

/// Linear-in-`U` generator of `Φ = exp(X(U))`, split like `T₁`.
#[derive(Clone, Debug)]
pub struct Generator {
    pub kind: StepKind,
    pub para: LinearFamily,
    pub rem: LinearFamily,
}

impl Generator {
    pub fn zero(grid: &GridSpec, kind: StepKind) -> Self {
        Generator { kind, para: LinearFamily::zeros(grid), rem: LinearFamily::zeros(grid) }
    }

    pub fn total(&self) -> LinearFamily {
        self.para.add(&self.rem)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Metrics {
    /// `‖12 block of the paradifferential part‖_{H^s→H^s}`.
    pub offdiag: f64,
    /// `‖non-normal-form 11 content‖_{H^s→H^s}`.
    pub non_normal_form: f64,
    /// `‖linear-in-U remainder‖_{H^s→H^{s+1}}`.
    pub remainder: f64,
    /// `‖T₂(U)‖_{H^s→H^s}`.
    pub quadratic: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StepReport {
    pub kind: StepKind,
    pub before: Metrics,
    pub after: Metrics,
    /// Largest remaining non-normal-form 11 entry, as `(k, ξ)`.
    pub worst_offender: Option<(Vec<i64>, Vec<i64>)>,
    /// Relative residual of the homological equation the generator solves.
    pub homological_residual: f64,
    /// `‖Φ⁻¹(T₀+T₁)Φ − jet‖_{H^s→H^{s−2}} / ‖T₁‖_{H^s→H^{s−2}}` at `U`.
    pub jet_defect: f64,
}

/// Mask of the 11 tables onto `avg + res` (`keep = true`) or `nr` alone.
fn mask11(fam: &LinearFamily, p: &NFParams, keep: bool) -> LinearFamily {
    let g = *fam.grid();
    fam.map(|t, k, x, v| {
        if matches!(t, Table::T2Plus | Table::T2Minus) {
            return ZERO;
        }
        let n = sub_pt(k, x);
        let s = add_pt(k, x);
        if n.iter().all(|&c| c == 0) {
            return if keep { v } else { ZERO };
        }
        let z = to_f(&s).map(|c| 0.5 * c);
        let c = cutoffs(&g, &n, &z, p).expect("n ≠ 0");
        v * if keep { c.chi * c.chi_tilde } else { (1.0 - c.chi) * c.chi_tilde }
    })
}

/// The system `iE Op(Λ) + T₁(U) + T₂` at a base point `U`.
#[derive(Clone, Debug)]
pub struct NfSystem {
    grid: GridSpec,
    params: NFParams,
    s: f64,
    u: PairField,
    pub para: LinearFamily,
    pub rem: LinearFamily,
    pub quad: PairLinOp,
}

impl NfSystem {
    /// Paradifferential part `iE Op(a(U), b(U))` and remainder
    /// `W ↦ B(U, W) − ½(A(U)W + A(W)U)`, with `B` the polarization of `(iQ, −iQ̄)`.
    pub fn new(f: &CubicDensity, u: &PairField, params: NFParams, s: f64) -> Result<Self, NfError> {
        let g = *u.grid();
        let nl = Nonlinearity::new(f, &g)?;
        let para = LinearFamily::probe(&g, |uu| quantize_ie(&nl.paralinearize(uu)));
        let iq = |w: &PairField| nl.q(&w.u).scale(Complex64::new(0.0, 1.0));
        let bilinear = LinearFamily::probe(&g, |uu| {
            probe_pair_linop(&g, |w| {
                let plus = PairField::from_u(uu.u.axpy(Complex64::new(1.0, 0.0), &w.u));
                let minus = PairField::from_u(uu.u.sub(&w.u));
                iq(&plus).sub(&iq(&minus)).scale(Complex64::new(0.25, 0.0))
            })
        });
        let rem = bilinear.sub(&para.add(&para.swapped()).scale(Complex64::new(0.5, 0.0)));
        Ok(NfSystem { grid: g, params, s, u: u.clone(), para, rem, quad: PairLinOp::zeros(&g) })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn params(&self) -> &NFParams {
        &self.params
    }

    pub fn base_point(&self) -> &PairField {
        &self.u
    }

    /// `T₁(U)`.
    pub fn linear_at(&self) -> PairLinOp {
        self.para.add(&self.rem).eval(&self.u)
    }

    pub fn metrics(&self) -> Metrics {
        let s = self.s;
        let para = self.para.eval(&self.u);
        Metrics {
            offdiag: para.offdiag_norm(s, s),
            non_normal_form: mask11(&self.para, &self.params, false).eval(&self.u).norm(s, s),
            remainder: self.rem.eval(&self.u).norm(s, s + 1.0),
            quadratic: self.quad.norm(s, s),
        }
    }

    fn worst_offender(&self) -> Option<(Vec<i64>, Vec<i64>)> {
        let nr = mask11(&self.para, &self.params, false);
        let g = self.grid;
        let d = g.d();
        let mut best = (NF_THRESHOLD, None);
        for t in [Table::T1Plus, Table::T1Minus] {
            for (idx, v) in nr.table(t).iter().enumerate() {
                let (ki, xi) = (idx % g.len(), idx / g.len());
                if v.norm() > best.0 {
                    best = (v.norm(), Some((g.point(ki)[..d].to_vec(), g.point(xi)[..d].to_vec())));
                }
            }
        }
        best.1
    }

    /// Generator for one step of the given kind.
    ///
    /// `diag`: `X₁₂ = −T₁₂ / (2iΛ(ζ))` on the paradifferential part, i.e. the flow of `ψ = b/(2Λ)`.
    /// `nf`: `X₁₁ = −T₁₁^nr / (2i(ζ;n))`, i.e. `i Op(g)` with `g` from [`homological_g`].
    /// `birkhoff`: exact table solution for everything but the normal form `⟨a⟩ + a^res`.
    pub fn generator(&self, kind: StepKind) -> Result<Generator, NfError> {
        let g = self.grid;
        let zeta = |k: &Pt, x: &Pt| to_f(&add_pt(k, x)).map(|c| 0.5 * c);
        match kind {
            StepKind::Diag => {
                let para = self.para.offdiag_part().map(|_, k, x, v| {
                    v / Complex64::new(0.0, -2.0 * g.lambda_at(&zeta(k, x)))
                });
                Ok(Generator { kind, para, rem: LinearFamily::zeros(&g) })
            }
            StepKind::Nf => {
                let nr = mask11(&self.para, &self.params, false);
                let para = nr.map(|_, k, x, v| {
                    let n = sub_pt(k, x);
                    let dot = g.form(&zeta(k, x), &to_f(&n));
                    if v == ZERO {
                        ZERO
                    } else {
                        v / Complex64::new(0.0, -2.0 * dot)
                    }
                });
                Ok(Generator { kind, para, rem: LinearFamily::zeros(&g) })
            }
            StepKind::Birkhoff => {
                let keep = mask11(&self.para, &self.params, true);
                let para = birkhoff_matrix_solve(&self.para.sub(&keep))?;
                let rem = birkhoff_matrix_solve(&self.rem)?;
                Ok(Generator { kind, para, rem })
            }
        }
    }

    /// Relative residual of the equation the generator is meant to solve.
    fn homological_residual(&self, gen: &Generator) -> f64 {
        let target = match gen.kind {
            StepKind::Diag | StepKind::Nf => return f64::NAN,
            StepKind::Birkhoff => self.para.sub(&mask11(&self.para, &self.params, true)).add(&self.rem),
        };
        let res = homological_operator(&gen.total()).add(&target);
        res.max_abs() / target.max_abs().max(f64::MIN_POSITIVE)
    }

    /// Conjugation by `Φ = exp(X(U))` to second order in `U`:
    ///
    /// `T₁ ↦ T₁ + [T₀, X] − X(T₀U)`,
    /// `T₂ ↦ T₂ + [T₁ + ½([T₀, X] − X(T₀U)), X] − X(T₁(U)U)`, with `T₀ = iE Op(Λ)`.
    pub fn conjugation_step(&self, gen: &Generator) -> (NfSystem, StepReport) {
        let before = self.metrics();
        let x_tot = gen.total();
        let u = &self.u;
        let lx = homological_operator(&x_tot);
        let x = x_tot.eval(u);
        let t1 = self.linear_at();
        let t1u = t1.apply(u);
        let quad = self
            .quad
            .add(&t1.add(&lx.eval(u).scale(0.5)).commutator(&x))
            .sub(&x_tot.eval(&t1u));
        let next = NfSystem {
            grid: self.grid,
            params: self.params,
            s: self.s,
            u: u.clone(),
            para: self.para.add(&homological_operator(&gen.para)),
            rem: self.rem.add(&homological_operator(&gen.rem)),
            quad,
        };
        let jet_defect = self.jet_defect(&x, &t1);
        let report = StepReport {
            kind: gen.kind,
            before,
            after: next.metrics(),
            worst_offender: next.worst_offender(),
            homological_residual: self.homological_residual(gen),
            jet_defect,
        };
        (next, report)
    }

    /// Dense route: `Φ⁻¹(T₀ + T₁)Φ` against `T₀ + T₁ + [T₀ + T₁, X] + ½[[T₀, X], X]`.
    fn jet_defect(&self, x: &PairLinOp, t1: &PairLinOp) -> f64 {
        let g = self.grid;
        if x.max_abs() == 0.0 {
            return 0.0;
        }
        let t0 = t0_op(&g);
        let phi = pair_exp(x, 1.0, 8);
        let phi_inv = pair_exp(x, -1.0, 8);
        let full = t0.add(t1);
        let exact = phi_inv.compose(&full).compose(&phi);
        let c0 = t0.commutator(x);
        let jet = full.add(&full.commutator(x)).add(&c0.commutator(x).scale(0.5));
        let (s, s2) = (self.s, self.s - 2.0);
        exact.sub(&jet).norm(s, s2) / t1.norm(s, s2).max(f64::MIN_POSITIVE)
    }
}

/// `iE Op(Λ)`.
pub fn t0_op(grid: &GridSpec) -> PairLinOp {
    use crate::paradiff::LinOp;
    let g = *grid;
    PairLinOp::new(LinOp::diagonal(&g, |i| Complex64::new(0.0, g.lambda(&g.point(i)))), LinOp::zeros(&g))
}

#[derive(Clone, Debug, Serialize)]
pub struct Ledger {
    pub initial: Metrics,
    pub steps: Vec<StepReport>,
}

impl Ledger {
    /// Metrics after each step, starting with the initial state.
    pub fn series(&self) -> Vec<Metrics> {
        std::iter::once(self.initial).chain(self.steps.iter().map(|r| r.after)).collect()
    }
}

/// `n_steps` diag steps, then `n_steps` nf steps, then one Birkhoff step.
pub fn run_ledger(sys: &NfSystem, n_steps: usize) -> Result<(NfSystem, Ledger), NfError> {
    let mut cur = sys.clone();
    let mut steps = Vec::new();
    let initial = cur.metrics();
    if n_steps == 0 {
        return Ok((cur, Ledger { initial, steps }));
    }
    let plan = std::iter::repeat_n(StepKind::Diag, n_steps)
        .chain(std::iter::repeat_n(StepKind::Nf, n_steps))
        .chain(std::iter::once(StepKind::Birkhoff));
    for kind in plan {
        let gen = cur.generator(kind)?;
        let (next, rep) = cur.conjugation_step(&gen);
        steps.push(rep);
        cur = next;
    }
    Ok((cur, Ledger { initial, steps }))
}
