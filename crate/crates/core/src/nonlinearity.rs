//! Cubic Hamiltonian densities `f(u, ∇u)`, the nonlinearity `Q`, the energy `H`,
//! and the paralinearized symbols `a`, `b`.
//!
//! Slot `y_0` stands for `u`, slot `y_j` (`j ≥ 1`) for `∂_{x_j} u`; `ȳ` are the conjugates.
//! A density is a symbolic polynomial so that every derivative is exact.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use num_complex::Complex64;
use thiserror::Error;

use crate::paradiff::{MatrixSymbol, Symbol};
use crate::torus_grid::{Field, GridError, GridSpec, PairField, Sampler, MAX_DIM};

#[derive(Debug, Error)]
pub enum NonlinearityError {
    #[error("density is invalid: {0:?}")]
    Invalid(Vec<Violation>),
    #[error("density dimension {density} does not match grid dimension {grid}")]
    Dimension { density: usize, grid: usize },
    #[error("energy has imaginary part {im:e} against magnitude {scale:e}")]
    ComplexEnergy { im: f64, scale: f64 },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    /// Monomial at this position is not of degree 3.
    Homogeneity { monomial: usize, degree: u32 },
    /// The conjugate-reflected partner is missing or has the wrong coefficient.
    Reality { monomial: usize },
    /// `∂_{y_i}∂_{ȳ_j} f ≢ 0` for gradient slots `i, j ≥ 1`.
    MixedGradient { i: usize, j: usize },
    /// `∂_{ȳ_i}∂_{ȳ_j} f ≢ 0` for gradient slots `i, j ≥ 1`.
    ConjugateGradient { i: usize, j: usize },
}

/// Polynomial in `(y_0..y_d, ȳ_0..ȳ_d)`; terms are kept merged and nonzero.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    d: usize,
    terms: BTreeMap<Vec<u8>, Complex64>,
}

impl Poly {
    pub fn zero(d: usize) -> Self {
        Poly { d, terms: BTreeMap::new() }
    }

    pub fn from_terms(d: usize, terms: impl IntoIterator<Item = (Vec<u8>, Complex64)>) -> Self {
        let mut p = Poly::zero(d);
        for (e, c) in terms {
            assert_eq!(e.len(), 2 * (d + 1), "exponent vector has wrong length");
            p.add_term(e, c);
        }
        p
    }

    fn add_term(&mut self, e: Vec<u8>, c: Complex64) {
        let v = self.terms.entry(e.clone()).or_insert(Complex64::new(0.0, 0.0));
        *v += c;
        if *v == Complex64::new(0.0, 0.0) {
            self.terms.remove(&e);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u8>, &Complex64)> {
        self.terms.iter()
    }

    /// Slot index in the exponent vector.
    fn var(&self, slot: usize, conjugated: bool) -> usize {
        assert!(slot <= self.d);
        if conjugated {
            self.d + 1 + slot
        } else {
            slot
        }
    }

    /// Formal partial derivative in one variable.
    pub fn derive(&self, slot: usize, conjugated: bool) -> Poly {
        let v = self.var(slot, conjugated);
        let mut out = Poly::zero(self.d);
        for (e, c) in &self.terms {
            if e[v] > 0 {
                let mut e2 = e.clone();
                let k = e2[v];
                e2[v] -= 1;
                out.add_term(e2, c * k as f64);
            }
        }
        out
    }

    /// Swap `y ↔ ȳ` and conjugate coefficients.
    pub fn conj_reflect(&self) -> Poly {
        let n = self.d + 1;
        Poly::from_terms(
            self.d,
            self.terms.iter().map(|(e, c)| {
                let mut e2 = e[n..].to_vec();
                e2.extend_from_slice(&e[..n]);
                (e2, c.conj())
            }),
        )
    }

    /// Pointwise evaluation; `vars[v]` holds the samples of variable `v`.
    pub fn eval_samples(&self, vars: &[Vec<Complex64>]) -> Vec<Complex64> {
        let len = vars[0].len();
        let mut out = vec![Complex64::new(0.0, 0.0); len];
        for (e, c) in &self.terms {
            for (j, o) in out.iter_mut().enumerate() {
                let mut t = *c;
                for (v, &k) in e.iter().enumerate() {
                    for _ in 0..k {
                        t *= vars[v][j];
                    }
                }
                *o += t;
            }
        }
        out
    }

    /// Evaluation at a single point `(y, ȳ)` given as `2(d+1)` values.
    pub fn eval_point(&self, y: &[Complex64]) -> Complex64 {
        self.terms
            .iter()
            .map(|(e, c)| e.iter().zip(y).fold(*c, |acc, (&k, v)| acc * v.powu(k as u32)))
            .sum()
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let n = self.d + 1;
        let mut first = true;
        for (e, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({}{:+}i)", c.re, c.im)?;
            for (v, &k) in e.iter().enumerate() {
                if k > 0 {
                    let name = if v < n { format!("y{v}") } else { format!("ȳ{}", v - n) };
                    if k == 1 {
                        write!(f, "·{name}")?;
                    } else {
                        write!(f, "·{name}^{k}")?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// A real cubic density `f(u, ∇u)` given by its monomials.
#[derive(Clone, Debug, PartialEq)]
pub struct CubicDensity {
    poly: Poly,
}

impl CubicDensity {
    /// Builds and validates.
    pub fn new(d: usize, monomials: impl IntoIterator<Item = (Vec<u8>, Complex64)>) -> Result<Self, NonlinearityError> {
        let f = Self::unchecked(d, monomials);
        validate(&f).map_err(NonlinearityError::Invalid)?;
        Ok(f)
    }

    /// No structural checks; use [`validate`] before computing with it.
    pub fn unchecked(d: usize, monomials: impl IntoIterator<Item = (Vec<u8>, Complex64)>) -> Self {
        CubicDensity { poly: Poly::from_terms(d, monomials) }
    }

    pub fn zero(d: usize) -> Self {
        CubicDensity { poly: Poly::zero(d) }
    }

    /// `f₀ = (y_0² ȳ_1 + ȳ_0² y_1)/2`, derivative in the first direction.
    pub fn canonical(d: usize) -> Self {
        let n = d + 1;
        let mut e1 = vec![0u8; 2 * n];
        e1[0] = 2;
        e1[n + 1] = 1;
        let mut e2 = vec![0u8; 2 * n];
        e2[n] = 2;
        e2[1] = 1;
        let half = Complex64::new(0.5, 0.0);
        Self::new(d, [(e1, half), (e2, half)]).expect("canonical density is valid")
    }

    pub fn d(&self) -> usize {
        self.poly.d
    }

    pub fn poly(&self) -> &Poly {
        &self.poly
    }

    /// One line per monomial: `coeff_re coeff_im e0..ed ē0..ēd`.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (e, c) in self.poly.terms() {
            let exps: Vec<String> = e.iter().map(|k| k.to_string()).collect();
            writeln!(w, "{:e} {:e} {}", c.re, c.im, exps.join(" "))?;
        }
        Ok(())
    }

    /// Blank lines and `#` comments are skipped; the result is validated.
    pub fn read_text<R: BufRead>(d: usize, r: R) -> Result<Self, NonlinearityError> {
        let mut terms = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let toks: Vec<&str> = body.split_whitespace().collect();
            if toks.len() != 2 + 2 * (d + 1) {
                return Err(NonlinearityError::Parse {
                    line: i + 1,
                    msg: format!("expected {} fields, got {}", 2 + 2 * (d + 1), toks.len()),
                });
            }
            let num = |t: &str| {
                t.parse::<f64>().map_err(|e| NonlinearityError::Parse { line: i + 1, msg: e.to_string() })
            };
            let c = Complex64::new(num(toks[0])?, num(toks[1])?);
            let mut e = Vec::with_capacity(2 * (d + 1));
            for t in &toks[2..] {
                e.push(t.parse::<u8>().map_err(|err| NonlinearityError::Parse { line: i + 1, msg: err.to_string() })?);
            }
            terms.push((e, c));
        }
        Self::new(d, terms)
    }
}

/// Degree 3, reality, and the gradient constraint `∂_{y_i}∂_{ȳ_j} f ≡ ∂_{ȳ_i}∂_{ȳ_j} f ≡ 0`.
pub fn validate(f: &CubicDensity) -> Result<(), Vec<Violation>> {
    let p = &f.poly;
    let d = p.d;
    let mut out = Vec::new();
    let reflected = p.conj_reflect();
    for (idx, (e, c)) in p.terms().enumerate() {
        let deg: u32 = e.iter().map(|&k| k as u32).sum();
        if deg != 3 {
            out.push(Violation::Homogeneity { monomial: idx, degree: deg });
        }
        match reflected.terms.get(e) {
            Some(rc) if (rc - c).norm() <= 1e-14 * c.norm().max(1.0) => {}
            _ => out.push(Violation::Reality { monomial: idx }),
        }
    }
    for i in 1..=d {
        for j in 1..=d {
            if !p.derive(i, false).derive(j, true).is_zero() {
                out.push(Violation::MixedGradient { i, j });
            }
            if j >= i && !p.derive(i, true).derive(j, true).is_zero() {
                out.push(Violation::ConjugateGradient { i, j });
            }
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// First Wirtinger derivative in one slot.
pub fn wirtinger(f: &CubicDensity, slot: usize, conjugated: bool) -> Poly {
    f.poly.derive(slot, conjugated)
}

fn check_dim(f: &CubicDensity, g: &GridSpec) -> Result<(), NonlinearityError> {
    if f.d() != g.d() {
        return Err(NonlinearityError::Dimension { density: f.d(), grid: g.d() });
    }
    Ok(())
}

/// Pseudo-spectral evaluator on the dealiased grid.
///
/// All products of at most three box fields are exact on `P = 2(2K+1)` points.
#[derive(Clone, Debug)]
pub struct Nonlinearity {
    f: CubicDensity,
    grid: GridSpec,
    sampler: Sampler,
    dq0: Poly,
    dq: Vec<Poly>,
}

impl Nonlinearity {
    pub fn new(f: &CubicDensity, grid: &GridSpec) -> Result<Self, NonlinearityError> {
        check_dim(f, grid)?;
        validate(f).map_err(NonlinearityError::Invalid)?;
        Ok(Nonlinearity {
            f: f.clone(),
            grid: *grid,
            sampler: Sampler::dealiased(grid),
            dq0: wirtinger(f, 0, true),
            dq: (1..=grid.d()).map(|j| wirtinger(f, j, true)).collect(),
        })
    }

    pub fn density(&self) -> &CubicDensity {
        &self.f
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn sampler(&self) -> &Sampler {
        &self.sampler
    }

    /// Samples of `(u, ∇u, ū, ∇ū)` in slot order.
    pub fn jet_samples(&self, u: &Field) -> Vec<Vec<Complex64>> {
        let d = self.grid.d();
        let mut vars = Vec::with_capacity(2 * (d + 1));
        vars.push(self.sampler.synthesize(u));
        for j in 0..d {
            let du = u.apply_multiplier(|p| Complex64::new(0.0, p[j] as f64));
            vars.push(self.sampler.synthesize(&du));
        }
        for v in 0..=d {
            let conj: Vec<Complex64> = vars[v].iter().map(|z| z.conj()).collect();
            vars.push(conj);
        }
        vars
    }

    /// `Q = ∂_ū f − Σ_j ∂_{x_j}(∂_{ū_{x_j}} f)`, projected to the box.
    pub fn q(&self, u: &Field) -> Field {
        let vars = self.jet_samples(u);
        let mut out = self.sampler.analyze(&self.dq0.eval_samples(&vars)).expect("sample count");
        for (j, p) in self.dq.iter().enumerate() {
            if p.is_zero() {
                continue;
            }
            let t = self.sampler.analyze(&p.eval_samples(&vars)).expect("sample count");
            let dt = t.apply_multiplier(|pt| Complex64::new(0.0, pt[j] as f64));
            out = out.sub(&dt);
        }
        out
    }

    /// `∫ (Λu)·ū + ∫ f`, with a reality check on the result.
    pub fn hamiltonian(&self, u: &Field) -> Result<f64, NonlinearityError> {
        let g = &self.grid;
        let quad: f64 =
            u.coeffs().iter().enumerate().map(|(i, c)| g.lambda(&g.point(i)) * c.norm_sqr()).sum();
        let vars = self.jet_samples(u);
        let cubic: Complex64 =
            self.f.poly.eval_samples(&vars).iter().sum::<Complex64>() * self.sampler.weight();
        let total = Complex64::new(quad, 0.0) + cubic;
        let scale = quad.abs() + cubic.norm();
        if total.im.abs() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return Err(NonlinearityError::ComplexEnergy { im: total.im, scale });
        }
        Ok(total.re)
    }

    /// `∂_t u = −i(Λ(D)u + Q(u, ū))`.
    pub fn vector_field(&self, u: &Field) -> Field {
        let g = self.grid;
        let lin = u.apply_multiplier(|p| Complex64::new(g.lambda(p), 0.0));
        let q = self.q(u);
        lin.axpy(Complex64::new(1.0, 0.0), &q).scale(Complex64::new(0.0, -1.0))
    }

    /// Symbols `a` (affine in `ξ`) and `b` (`ξ`-independent) of the paralinearization
    ///
    /// `a = Σ_j [ i(∂_{ū u_j} f − ∂_{ū_j u} f) ξ_j − ½∂_j(∂_{ū_j u} f) − ½∂_j(∂_{ū u_j} f) ] + ∂_{u ū} f`,
    /// `b = ∂_{ū ū} f − Σ_j ∂_j(∂_{ū ū_j} f)`.
    pub fn paralinearize(&self, uu: &PairField) -> MatrixSymbol {
        let g = self.grid;
        let d = g.d();
        let p = &self.f.poly;
        let vars = self.jet_samples(&uu.u);
        // Second derivatives are linear in U, so their coefficients fit in the box.
        let coef = |poly: Poly| -> Field { self.sampler.analyze(&poly.eval_samples(&vars)).expect("sample count") };
        let dx = |f: &Field, j: usize| f.apply_multiplier(|pt| Complex64::new(0.0, pt[j] as f64));
        let i = Complex64::new(0.0, 1.0);
        let half = Complex64::new(-0.5, 0.0);

        let mut a0 = coef(p.derive(0, false).derive(0, true));
        let mut a1: Vec<Field> = Vec::with_capacity(d);
        for j in 1..=d {
            let ubar_uj = coef(p.derive(0, true).derive(j, false));
            let ubarj_u = coef(p.derive(j, true).derive(0, false));
            a1.push(ubar_uj.sub(&ubarj_u).scale(i));
            a0 = a0.axpy(half, &dx(&ubarj_u, j - 1)).axpy(half, &dx(&ubar_uj, j - 1));
        }
        let mut b0 = coef(p.derive(0, true).derive(0, true));
        for j in 1..=d {
            let t = coef(p.derive(0, true).derive(j, true));
            b0 = b0.sub(&dx(&t, j - 1));
        }

        // Symbols store plain Fourier-series coefficients c(k), a(x) = Σ c(k) e^{ik·x}.
        let to_series = (2.0 * std::f64::consts::PI).powf(-(d as f64) / 2.0);
        let a = Symbol::from_fn(&g, 1.0, |k, z| {
            let mut v = a0.get(k);
            for (j, c) in a1.iter().enumerate() {
                v += c.get(k) * z[j];
            }
            v * to_series
        });
        let b = Symbol::from_fn(&g, 0.0, |k, _| b0.get(k) * to_series);
        MatrixSymbol::new(a, b)
    }
}

/// `Q(u, ū)` for a validated density.
pub fn eval_q(f: &CubicDensity, u: &Field) -> Result<Field, NonlinearityError> {
    Ok(Nonlinearity::new(f, u.grid())?.q(u))
}

pub fn hamiltonian(f: &CubicDensity, u: &Field) -> Result<f64, NonlinearityError> {
    Nonlinearity::new(f, u.grid())?.hamiltonian(u)
}

pub fn vector_field(f: &CubicDensity, u: &Field) -> Result<Field, NonlinearityError> {
    Ok(Nonlinearity::new(f, u.grid())?.vector_field(u))
}

pub fn paralinearize(f: &CubicDensity, uu: &PairField) -> Result<MatrixSymbol, NonlinearityError> {
    Ok(Nonlinearity::new(f, uu.grid())?.paralinearize(uu))
}

/// Slot order used by [`Poly::eval_point`]: `(y_0..y_d, ȳ_0..ȳ_d)`.
pub fn point_vars(y: &[Complex64; MAX_DIM + 1], d: usize) -> Vec<Complex64> {
    let mut v: Vec<Complex64> = y[..=d].to_vec();
    v.extend(y[..=d].iter().map(|z| z.conj()));
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paradiff::quantize_bw;
    use crate::torus_grid::Pt;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_field(g: &GridSpec, seed: u64, band: i64, amp: f64) -> Field {
        crate::torus_grid::random_field(g, &mut ChaCha8Rng::seed_from_u64(seed), band, amp)
    }

    /// Direct monomial arithmetic on `(y, ȳ)` exponent vectors, independent of `Poly`.
    fn oracle_derive(terms: &[(Vec<u8>, Complex64)], var: usize) -> Vec<(Vec<u8>, Complex64)> {
        terms
            .iter()
            .filter(|(e, _)| e[var] > 0)
            .map(|(e, c)| {
                let mut e2 = e.clone();
                e2[var] -= 1;
                (e2, c * e[var] as f64)
            })
            .collect()
    }

    #[test]
    fn canonical_is_valid() {
        let f = CubicDensity::canonical(1);
        assert!(validate(&f).is_ok());
        assert!(validate(&CubicDensity::canonical(2)).is_ok());
    }

    #[test]
    fn gradient_violation_detected() {
        // y_1² ȳ_1 plus its reflection ȳ_1² y_1.
        let f = CubicDensity::unchecked(1, [(vec![0, 2, 0, 1], c(1.0, 0.0)), (vec![0, 1, 0, 2], c(1.0, 0.0))]);
        let errs = validate(&f).unwrap_err();
        assert!(errs.contains(&Violation::MixedGradient { i: 1, j: 1 }));
        let alone = CubicDensity::unchecked(1, [(vec![3, 0, 0, 0], c(1.0, 0.0))]);
        let errs = validate(&alone).unwrap_err();
        assert!(matches!(errs[0], Violation::Reality { .. }));
        let quad = CubicDensity::unchecked(1, [(vec![1, 0, 1, 0], c(1.0, 0.0))]);
        assert!(validate(&quad).unwrap_err().contains(&Violation::Homogeneity { monomial: 0, degree: 2 }));
    }

    #[test]
    fn wirtinger_examples() {
        let f = CubicDensity::canonical(1);
        let terms = vec![(vec![2u8, 0, 0, 1], c(0.5, 0.0)), (vec![0u8, 1, 2, 0], c(0.5, 0.0))];
        // ∂_{ȳ0} f = ȳ0 y1.
        let want = Poly::from_terms(1, oracle_derive(&terms, 2));
        assert_eq!(wirtinger(&f, 0, true), want);
        assert_eq!(want, Poly::from_terms(1, [(vec![0, 1, 1, 0], c(1.0, 0.0))]));
        // ∂_{ȳ1} f = y0²/2.
        assert_eq!(wirtinger(&f, 1, true), Poly::from_terms(1, [(vec![2, 0, 0, 0], c(0.5, 0.0))]));
        let f2 = CubicDensity::canonical(2);
        assert!(wirtinger(&f2, 2, false).is_zero());
    }

    #[test]
    fn text_roundtrip() {
        let f = CubicDensity::canonical(2);
        let mut buf = Vec::new();
        f.write_text(&mut buf).unwrap();
        let back = CubicDensity::read_text(2, buf.as_slice()).unwrap();
        assert_eq!(back, f);
        assert!(CubicDensity::read_text(1, "1 0 3 0 0 0\n".as_bytes()).is_err());
    }

    #[test]
    fn q_canonical_matches_closed_form() {
        let g = GridSpec::flat(1, 8, 0.5).unwrap();
        let u = random_field(&g, 3, 8, 0.3);
        let nl = Nonlinearity::new(&CubicDensity::canonical(1), &g).unwrap();
        let q = nl.q(&u);
        // ū u_x − u u_x evaluated by direct convolution of coefficients.
        let ux = u.apply_multiplier(|p| c(0.0, p[0] as f64));
        let ub = u.conj_reflect();
        let k = g.k() as i64;
        let norm = (2.0 * std::f64::consts::PI).powf(-0.5);
        let want = Field::from_fn(&g, |p| {
            let mut acc = c(0.0, 0.0);
            for a in -k..=k {
                let b = p[0] - a;
                if b.abs() <= k {
                    acc += (ub.get(&[a, 0, 0]) - u.get(&[a, 0, 0])) * ux.get(&[b, 0, 0]);
                }
            }
            acc * norm
        });
        assert!(q.sub(&want).l2() < 1e-13 * (1.0 + want.l2()));
    }

    #[test]
    fn q_trivial_cases() {
        let g = GridSpec::flat(2, 4, 1.0).unwrap();
        let u = random_field(&g, 5, 4, 0.2);
        assert_eq!(eval_q(&CubicDensity::zero(2), &u).unwrap().l2(), 0.0);
        let cst = Field::single_mode(&g, &[0, 0, 0], c(0.7, -0.2));
        assert!(eval_q(&CubicDensity::canonical(2), &cst).unwrap().l2() < 1e-15);
    }

    #[test]
    fn hamiltonian_linear_part() {
        let g = GridSpec::new(2, 4, &[1.2, 0.3, 0.3, 0.9], 0.5, 0.25).unwrap();
        let n: Pt = [2, -1, 0];
        let amp = 0.7;
        let u = Field::single_mode(&g, &n, c(0.0, amp));
        let h = hamiltonian(&CubicDensity::zero(2), &u).unwrap();
        // Quadrature oracle: ∫ |∇_g u|² + m|u|² over the sampled plane wave.
        let s = Sampler::new(&g, 16);
        let samples = s.synthesize(&u);
        let grad = |i: usize| s.synthesize(&u.apply_multiplier(|p| c(0.0, p[i] as f64)));
        let (g0, g1) = (grad(0), grad(1));
        let mut quad = 0.0;
        for j in 0..samples.len() {
            let v = [g0[j], g1[j]];
            let mut e = 0.5 * samples[j].norm_sqr();
            for a in 0..2 {
                for b in 0..2 {
                    e += g.metric(a, b) * (v[a] * v[b].conj()).re;
                }
            }
            quad += e * s.weight();
        }
        assert!((h - quad).abs() < 1e-12 * quad);
        assert!((h - g.lambda(&n) * amp * amp).abs() < 1e-12);
        assert_eq!(hamiltonian(&CubicDensity::zero(2), &Field::zeros(&g)).unwrap(), 0.0);
    }

    #[test]
    fn hamiltonian_cubic_against_quadrature() {
        let g = GridSpec::flat(1, 6, 0.5).unwrap();
        let u = random_field(&g, 9, 6, 0.4);
        let f = CubicDensity::canonical(1);
        let h = hamiltonian(&f, &u).unwrap();
        // Fine midpoint quadrature of the density evaluated from the Fourier series.
        let mpts = 4096;
        let norm = (2.0 * std::f64::consts::PI).powf(-0.5);
        let mut cubic = 0.0;
        for j in 0..mpts {
            let x = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / mpts as f64;
            let (mut v, mut vx) = (c(0.0, 0.0), c(0.0, 0.0));
            for (i, cf) in u.coeffs().iter().enumerate() {
                let k = g.point(i)[0] as f64;
                let e = Complex64::from_polar(norm, k * x);
                v += cf * e;
                vx += cf * e * c(0.0, k);
            }
            let fy = f.poly().eval_point(&[v, vx, v.conj(), vx.conj()]);
            cubic += fy.re * 2.0 * std::f64::consts::PI / mpts as f64;
        }
        let quad: f64 = u.coeffs().iter().enumerate().map(|(i, cf)| g.lambda(&g.point(i)) * cf.norm_sqr()).sum();
        assert!((h - quad - cubic).abs() < 1e-11 * (1.0 + h.abs()));
    }

    #[test]
    fn vector_field_linear_and_fd() {
        let g = GridSpec::flat(1, 8, 0.5).unwrap();
        let n: Pt = [3, 0, 0];
        let u = Field::single_mode(&g, &n, c(1.0, 0.0));
        let v = vector_field(&CubicDensity::zero(1), &u).unwrap();
        assert!((v.get(&n) - c(0.0, -g.lambda(&n))).norm() < 1e-14);
        let nl = Nonlinearity::new(&CubicDensity::canonical(1), &g).unwrap();
        assert_eq!(nl.vector_field(&Field::zeros(&g)).l2(), 0.0);
        // Finite-difference oracle: RK4 flow over dt against the vector field.
        let u = random_field(&g, 11, 4, 0.2);
        let vf = nl.vector_field(&u);
        let mut prev = f64::INFINITY;
        for &dt in &[1e-3, 5e-4] {
            let k1 = nl.vector_field(&u);
            let k2 = nl.vector_field(&u.axpy(c(dt / 2.0, 0.0), &k1));
            let k3 = nl.vector_field(&u.axpy(c(dt / 2.0, 0.0), &k2));
            let k4 = nl.vector_field(&u.axpy(c(dt, 0.0), &k3));
            let step = k1.axpy(c(2.0, 0.0), &k2).axpy(c(2.0, 0.0), &k3).axpy(c(1.0, 0.0), &k4);
            let next = u.axpy(c(dt / 6.0, 0.0), &step);
            let fd = next.sub(&u).scale(c(1.0 / dt, 0.0));
            let err = fd.sub(&vf).l2();
            assert!(err < prev * 0.6);
            prev = err;
        }
    }

    #[test]
    fn paralinearize_canonical() {
        let g = GridSpec::flat(1, 8, 0.5).unwrap();
        let u = random_field(&g, 13, 4, 0.3);
        let uu = PairField::from_u(u.clone());
        let ms = paralinearize(&CubicDensity::canonical(1), &uu).unwrap();
        // a = i(ū − u)ξ − (u_x + ū_x)/2, b = u_x, as series coefficients.
        let norm = (2.0 * std::f64::consts::PI).powf(-0.5);
        let ub = u.conj_reflect();
        for kk in -8i64..=8 {
            let k = [kk, 0, 0];
            for &z in &[-3.5, 0.0, 2.5] {
                let want_a = (c(0.0, 1.0) * (ub.get(&k) - u.get(&k)) * z
                    - c(0.0, kk as f64) * (u.get(&k) + ub.get(&k)) * 0.5)
                    * norm;
                let got = ms.a.eval(&k, &[z, 0.0, 0.0]);
                assert!((got - want_a).norm() < 1e-14);
                let want_b = c(0.0, kk as f64) * u.get(&k) * norm;
                assert!((ms.b.eval(&k, &[z, 0.0, 0.0]) - want_b).norm() < 1e-14);
            }
        }
        let zero = paralinearize(&CubicDensity::zero(1), &uu).unwrap();
        assert_eq!(zero.a.max_abs(), 0.0);
        assert_eq!(zero.b.max_abs(), 0.0);
        assert!(ms.b.evenness_defect() == 0.0);
    }

    #[test]
    fn paralinearization_defect_is_smoothing() {
        // Low band plus one high mode: the high-low output of Q is carried by Op(a)u + Op(b)ū.
        let g = GridSpec::flat(1, 24, 0.5).unwrap();
        let u = random_field(&g, 17, 1, 0.05).axpy(c(0.05, 0.0), &Field::single_mode(&g, &[10, 0, 0], c(1.0, 0.0)));
        let uu = PairField::from_u(u.clone());
        let nl = Nonlinearity::new(&CubicDensity::canonical(1), &g).unwrap();
        let ms = nl.paralinearize(&uu);
        let q = nl.q(&u);
        let pa = quantize_bw(&ms.a).apply(&u);
        let pb = quantize_bw(&ms.b).apply(&uu.ubar);
        let defect = q.sub(&pa).sub(&pb);
        let band = |f: &Field| {
            g.points()
                .zip(f.coeffs())
                .filter(|(p, _)| (8..=12).contains(&p[0].abs()))
                .map(|(_, v)| v.norm_sqr())
                .sum::<f64>()
                .sqrt()
        };
        assert!(band(&q) > 1e-4);
        assert!(band(&defect) < 1e-3 * band(&q));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn q_is_quadratic(seed in 0u64..1000, lam in -2.0f64..2.0) {
            let g = GridSpec::flat(1, 6, 0.5).unwrap();
            let u = random_field(&g, seed, 6, 0.5);
            let nl = Nonlinearity::new(&CubicDensity::canonical(1), &g).unwrap();
            let lhs = nl.q(&u.scale(c(lam, 0.0)));
            let rhs = nl.q(&u).scale(c(lam * lam, 0.0));
            prop_assert!(lhs.sub(&rhs).l2() <= 1e-13 * (1.0 + rhs.l2()));
        }

        #[test]
        fn hamiltonian_is_real(seed in 0u64..1000) {
            let g = GridSpec::flat(2, 3, 0.5).unwrap();
            let u = random_field(&g, seed, 3, 0.5);
            prop_assert!(hamiltonian(&CubicDensity::canonical(2), &u).is_ok());
        }

        #[test]
        fn energy_scales_quadratically_without_f(seed in 0u64..1000, eps in 0.01f64..2.0) {
            let g = GridSpec::flat(1, 5, 0.5).unwrap();
            let u = random_field(&g, seed, 5, 1.0);
            let f = CubicDensity::zero(1);
            let h1 = hamiltonian(&f, &u).unwrap();
            let h2 = hamiltonian(&f, &u.scale(c(eps, 0.0))).unwrap();
            prop_assert!((h2 - eps * eps * h1).abs() <= 1e-12 * h1.abs());
        }
    }
}
