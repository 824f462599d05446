//! Truncated Fourier lattice, dispersion, fields and the sample/coefficient transform.
//!
//! Coefficients follow `û(ξ) = (2π)^{-d/2} ∫ u(x) e^{-iξ·x} dx`, so Parseval reads
//! `‖u‖²_{L²} = Σ |û(ξ)|²` and the constant function 1 has `û(0) = (2π)^{d/2}`.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

/// Maximum supported space dimension.
pub const MAX_DIM: usize = 3;

/// Lattice point; only the first `d` entries are meaningful, the rest are zero.
pub type Pt = [i64; MAX_DIM];

#[derive(Debug, Error)]
pub enum GridError {
    #[error("dimension must be in 1..={MAX_DIM}, got {0}")]
    Dimension(usize),
    #[error("truncation K must be positive")]
    Truncation,
    #[error("metric has {got} entries, expected {expected}")]
    MetricShape { got: usize, expected: usize },
    #[error("metric is not symmetric at ({0},{1})")]
    MetricAsymmetric(usize, usize),
    #[error("metric is not positive definite (smallest eigenvalue {0})")]
    MetricIndefinite(f64),
    #[error("mass must be positive, got {0}")]
    Mass(f64),
    #[error("quantization cutoff must lie in (0, 1/2), got {0}")]
    EpsQ(f64),
    #[error("expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("coefficient table violates the reality coupling (defect {0:e})")]
    Reality(f64),
    #[error("field grids differ")]
    GridMismatch,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed field row: {0}")]
    Row(String),
}

/// Lattice box `|ξ_i| ≤ K` in `d` dimensions with metric `G`, mass `m`
/// and quantization cutoff `eps_q`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    d: usize,
    k: usize,
    g: [[f64; MAX_DIM]; MAX_DIM],
    m: f64,
    eps_q: f64,
    c0: f64,
}

impl GridSpec {
    /// `metric` is the row-major `d×d` table of `G`.
    pub fn new(d: usize, k: usize, metric: &[f64], m: f64, eps_q: f64) -> Result<Self, GridError> {
        if d == 0 || d > MAX_DIM {
            return Err(GridError::Dimension(d));
        }
        if k == 0 {
            return Err(GridError::Truncation);
        }
        if metric.len() != d * d {
            return Err(GridError::MetricShape { got: metric.len(), expected: d * d });
        }
        for i in 0..d {
            for j in 0..d {
                if metric[i * d + j] != metric[j * d + i] {
                    return Err(GridError::MetricAsymmetric(i, j));
                }
            }
        }
        let c0 = SymmetricEigen::new(DMatrix::from_row_slice(d, d, metric)).eigenvalues.min();
        if !(c0 > 0.0) {
            return Err(GridError::MetricIndefinite(c0));
        }
        if !(m > 0.0) {
            return Err(GridError::Mass(m));
        }
        if !(eps_q > 0.0 && eps_q < 0.5) {
            return Err(GridError::EpsQ(eps_q));
        }
        let mut g = [[0.0; MAX_DIM]; MAX_DIM];
        for i in 0..d {
            for j in 0..d {
                g[i][j] = metric[i * d + j];
            }
        }
        Ok(GridSpec { d, k, g, m, eps_q, c0 })
    }

    /// Flat torus `G = I` with the default cutoff `eps_q = 0.25`.
    pub fn flat(d: usize, k: usize, m: f64) -> Result<Self, GridError> {
        let mut metric = vec![0.0; d * d];
        for i in 0..d {
            metric[i * d + i] = 1.0;
        }
        Self::new(d, k, &metric, m, 0.25)
    }

    /// Same metric and mass with a different truncation.
    pub fn with_k(&self, k: usize) -> Self {
        assert!(k > 0);
        GridSpec { k, ..*self }
    }

    pub fn with_mass(&self, m: f64) -> Result<Self, GridError> {
        if !(m > 0.0) {
            return Err(GridError::Mass(m));
        }
        Ok(GridSpec { m, ..*self })
    }

    pub fn with_eps_q(&self, eps_q: f64) -> Result<Self, GridError> {
        if !(eps_q > 0.0 && eps_q < 0.5) {
            return Err(GridError::EpsQ(eps_q));
        }
        Ok(GridSpec { eps_q, ..*self })
    }

    pub fn d(&self) -> usize {
        self.d
    }
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn m(&self) -> f64 {
        self.m
    }
    pub fn eps_q(&self) -> f64 {
        self.eps_q
    }
    /// Smallest eigenvalue of `G`.
    pub fn c0(&self) -> f64 {
        self.c0
    }
    pub fn metric(&self, i: usize, j: usize) -> f64 {
        self.g[i][j]
    }
    /// Row-major copy of `G`.
    pub fn metric_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.d * self.d);
        for i in 0..self.d {
            for j in 0..self.d {
                out.push(self.g[i][j]);
            }
        }
        out
    }

    /// Points per axis, `2K+1`.
    pub fn side(&self) -> usize {
        2 * self.k + 1
    }

    /// Number of lattice points in the box.
    pub fn len(&self) -> usize {
        self.side().pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Row-major decoding, axis 0 slowest.
    pub fn point(&self, idx: usize) -> Pt {
        let side = self.side();
        let mut p = [0i64; MAX_DIM];
        let mut rest = idx;
        for i in (0..self.d).rev() {
            p[i] = (rest % side) as i64 - self.k as i64;
            rest /= side;
        }
        p
    }

    pub fn index(&self, p: &Pt) -> Option<usize> {
        let k = self.k as i64;
        let side = self.side();
        let mut idx = 0usize;
        for &c in p.iter().take(self.d) {
            if c < -k || c > k {
                return None;
            }
            idx = idx * side + (c + k) as usize;
        }
        Some(idx)
    }

    /// Index of `−p` given the index of `p`; the box is symmetric so this never fails.
    pub fn neg_index(&self, idx: usize) -> usize {
        self.len() - 1 - idx
    }

    pub fn points(&self) -> impl Iterator<Item = Pt> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }

    /// `Gx·y` for real vectors.
    pub fn form(&self, x: &[f64; MAX_DIM], y: &[f64; MAX_DIM]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.d {
            for j in 0..self.d {
                acc += self.g[i][j] * x[i] * y[j];
            }
        }
        acc
    }

    /// `Λ(ζ) = Gζ·ζ + m` at a real point.
    pub fn lambda_at(&self, z: &[f64; MAX_DIM]) -> f64 {
        self.form(z, z) + self.m
    }

    pub fn lambda(&self, p: &Pt) -> f64 {
        self.lambda_at(&to_f(p))
    }
}

/// `Λ(ξ) = Gξ·ξ + m`, defined on all of `Z^d`.
pub fn lambda_of(grid: &GridSpec, xi: &Pt) -> f64 {
    grid.lambda(xi)
}

/// Euclidean `⟨ζ⟩ = (1 + |ζ|²)^{1/2}`.
pub fn japanese(z: &[f64; MAX_DIM]) -> f64 {
    (1.0 + z.iter().map(|v| v * v).sum::<f64>()).sqrt()
}

pub fn to_f(p: &Pt) -> [f64; MAX_DIM] {
    [p[0] as f64, p[1] as f64, p[2] as f64]
}

pub fn add_pt(a: &Pt, b: &Pt) -> Pt {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub_pt(a: &Pt, b: &Pt) -> Pt {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn neg_pt(a: &Pt) -> Pt {
    [-a[0], -a[1], -a[2]]
}

/// Fourier coefficient table on the full box; absent modes are explicit zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: GridSpec,
    coeffs: Vec<Complex64>,
}

impl Field {
    pub fn zeros(grid: &GridSpec) -> Self {
        Field { grid: *grid, coeffs: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub fn from_coeffs(grid: &GridSpec, coeffs: Vec<Complex64>) -> Result<Self, GridError> {
        if coeffs.len() != grid.len() {
            return Err(GridError::Shape { expected: grid.len(), got: coeffs.len() });
        }
        Ok(Field { grid: *grid, coeffs })
    }

    pub fn from_fn(grid: &GridSpec, f: impl Fn(&Pt) -> Complex64) -> Self {
        Field { grid: *grid, coeffs: grid.points().map(|p| f(&p)).collect() }
    }

    /// `û(n) = value`, all other modes zero.
    pub fn single_mode(grid: &GridSpec, n: &Pt, value: Complex64) -> Self {
        let mut f = Self::zeros(grid);
        if let Some(i) = grid.index(n) {
            f.coeffs[i] = value;
        }
        f
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }
    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }
    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    pub fn get(&self, p: &Pt) -> Complex64 {
        self.grid.index(p).map_or(Complex64::new(0.0, 0.0), |i| self.coeffs[i])
    }

    /// Coefficients of `ū`: `k ↦ conj(û(−k))`.
    pub fn conj_reflect(&self) -> Field {
        let n = self.coeffs.len();
        Field { grid: self.grid, coeffs: (0..n).map(|i| self.coeffs[n - 1 - i].conj()).collect() }
    }

    pub fn scale(&self, c: Complex64) -> Field {
        Field { grid: self.grid, coeffs: self.coeffs.iter().map(|v| v * c).collect() }
    }

    pub fn axpy(&self, c: Complex64, other: &Field) -> Field {
        assert_eq!(self.grid, other.grid);
        Field {
            grid: self.grid,
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + c * b).collect(),
        }
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.axpy(Complex64::new(-1.0, 0.0), other)
    }

    /// `ℓ²` norm of the coefficients, equal to the `L²` norm.
    pub fn l2(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn sobolev_norm(&self, s: f64) -> f64 {
        sobolev_norm(self, s)
    }

    pub fn apply_multiplier(&self, phi: impl Fn(&Pt) -> Complex64) -> Field {
        apply_multiplier(self, phi)
    }

    /// Rows `ξ_1..ξ_d, re, im` with a header.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), GridError> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.grid.d).map(|i| format!("xi{i}")).collect();
        header.push("re".into());
        header.push("im".into());
        wr.write_record(&header)?;
        for (idx, c) in self.coeffs.iter().enumerate() {
            let p = self.grid.point(idx);
            let mut rec: Vec<String> = p[..self.grid.d].iter().map(|v| v.to_string()).collect();
            rec.push(format!("{:e}", c.re));
            rec.push(format!("{:e}", c.im));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Inverse of [`Field::write_csv`]; rows outside the box are rejected, missing rows stay zero.
    pub fn read_csv<R: Read>(grid: &GridSpec, r: R) -> Result<Field, GridError> {
        let mut rd = csv::Reader::from_reader(r);
        let mut f = Field::zeros(grid);
        let d = grid.d;
        for rec in rd.records() {
            let rec = rec?;
            if rec.len() != d + 2 {
                return Err(GridError::Row(format!("{rec:?}")));
            }
            let mut p = [0i64; MAX_DIM];
            for i in 0..d {
                p[i] = rec[i].trim().parse().map_err(|_| GridError::Row(format!("{rec:?}")))?;
            }
            let re: f64 = rec[d].trim().parse().map_err(|_| GridError::Row(format!("{rec:?}")))?;
            let im: f64 = rec[d + 1].trim().parse().map_err(|_| GridError::Row(format!("{rec:?}")))?;
            let idx = grid.index(&p).ok_or_else(|| GridError::Row(format!("{rec:?}")))?;
            f.coeffs[idx] = Complex64::new(re, im);
        }
        Ok(f)
    }
}

/// Independent uniform coefficients in `[−amp, amp]²` on modes with `max_i |ξ_i| ≤ band`.
pub fn random_field<R: rand::Rng>(grid: &GridSpec, rng: &mut R, band: i64, amp: f64) -> Field {
    let coeffs = grid
        .points()
        .map(|p| {
            let (a, b): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if p.iter().all(|v| v.abs() <= band) {
                Complex64::new(a, b) * amp
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    Field { grid: *grid, coeffs }
}

/// `(Σ ⟨ξ⟩^{2s} |û(ξ)|²)^{1/2}` with the Euclidean `⟨ξ⟩`.
pub fn sobolev_norm(f: &Field, s: f64) -> f64 {
    let g = &f.grid;
    f.coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let p = to_f(&g.point(i));
            (1.0 + p.iter().map(|v| v * v).sum::<f64>()).powf(s) * c.norm_sqr()
        })
        .sum::<f64>()
        .sqrt()
}

pub fn apply_multiplier(f: &Field, phi: impl Fn(&Pt) -> Complex64) -> Field {
    let g = f.grid;
    Field {
        grid: g,
        coeffs: f.coeffs.iter().enumerate().map(|(i, c)| phi(&g.point(i)) * c).collect(),
    }
}

/// `U = (u, ū)` with `ubar[k] = conj(u[−k])`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairField {
    pub u: Field,
    pub ubar: Field,
}

impl PairField {
    pub fn from_u(u: Field) -> Self {
        let ubar = u.conj_reflect();
        PairField { u, ubar }
    }

    /// Checks the coupling to `tol` in max norm.
    pub fn from_parts(u: Field, ubar: Field, tol: f64) -> Result<Self, GridError> {
        if u.grid != ubar.grid {
            return Err(GridError::GridMismatch);
        }
        let pf = PairField { u, ubar };
        let defect = pf.reality_defect();
        if defect > tol {
            return Err(GridError::Reality(defect));
        }
        Ok(pf)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.u.grid
    }

    /// `max_k |ubar[k] − conj(u[−k])|`.
    pub fn reality_defect(&self) -> f64 {
        let r = self.u.conj_reflect();
        r.coeffs.iter().zip(&self.ubar.coeffs).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Concatenation `(û, \hat ū)`.
    pub fn to_vec(&self) -> Vec<Complex64> {
        let mut v = self.u.coeffs.clone();
        v.extend_from_slice(&self.ubar.coeffs);
        v
    }

    pub fn sobolev_norm(&self, s: f64) -> f64 {
        sobolev_norm(&self.u, s)
    }
}

/// Uniform grid of `P^d` samples with cached FFT plans.
///
/// Points are `x_j = 2π j / P`, row-major with axis 0 slowest.
#[derive(Clone)]
pub struct Sampler {
    grid: GridSpec,
    p: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// Sample-grid offset of each box mode.
    slot: Vec<usize>,
}

impl std::fmt::Debug for Sampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Sampler").field("grid", &self.grid).field("p", &self.p).finish()
    }
}

impl Sampler {
    /// `p ≥ 2K+1` points per axis.
    pub fn new(grid: &GridSpec, p: usize) -> Self {
        assert!(p >= grid.side(), "sample grid must resolve the box");
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(p);
        let inv = planner.plan_fft_inverse(p);
        let slot = grid
            .points()
            .map(|pt| {
                let mut s = 0usize;
                for &c in pt.iter().take(grid.d) {
                    s = s * p + c.rem_euclid(p as i64) as usize;
                }
                s
            })
            .collect();
        Sampler { grid: *grid, p, fwd, inv, slot }
    }

    /// Exact grid, `P = 2K+1`.
    pub fn exact(grid: &GridSpec) -> Self {
        Self::new(grid, grid.side())
    }

    /// Oversampled grid, `P = 2(2K+1)`, alias-free for cubic products of box fields.
    pub fn dealiased(grid: &GridSpec) -> Self {
        Self::new(grid, 2 * grid.side())
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n_samples(&self) -> usize {
        self.p.pow(self.grid.d as u32)
    }

    /// Quadrature weight `(2π/P)^d`.
    pub fn weight(&self) -> f64 {
        (2.0 * PI / self.p as f64).powi(self.grid.d as i32)
    }

    fn fftn(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let p = self.p;
        let d = self.grid.d;
        let total = data.len();
        let mut line = vec![Complex64::new(0.0, 0.0); p];
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        for axis in 0..d {
            let stride = p.pow((d - 1 - axis) as u32);
            let block = stride * p;
            for base in (0..total).step_by(block) {
                for off in 0..stride {
                    let start = base + off;
                    for (t, v) in line.iter_mut().enumerate() {
                        *v = data[start + t * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (t, v) in line.iter().enumerate() {
                        data[start + t * stride] = *v;
                    }
                }
            }
        }
    }

    /// Point values `u(x_j) = (2π)^{-d/2} Σ û(ξ) e^{iξ·x_j}`.
    pub fn synthesize(&self, f: &Field) -> Vec<Complex64> {
        self.synthesize_coeffs(&f.coeffs)
    }

    pub fn synthesize_coeffs(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let mut data = vec![Complex64::new(0.0, 0.0); self.n_samples()];
        for (c, &s) in coeffs.iter().zip(&self.slot) {
            data[s] = *c;
        }
        self.fftn(&mut data, &self.inv);
        let norm = (2.0 * PI).powf(-(self.grid.d as f64) / 2.0);
        data.iter_mut().for_each(|v| *v *= norm);
        data
    }

    /// Box projection of `û(ξ) = (2π)^{d/2} P^{-d} Σ u(x_j) e^{-iξ·x_j}`.
    pub fn analyze(&self, samples: &[Complex64]) -> Result<Field, GridError> {
        if samples.len() != self.n_samples() {
            return Err(GridError::Shape { expected: self.n_samples(), got: samples.len() });
        }
        let mut data = samples.to_vec();
        self.fftn(&mut data, &self.fwd);
        let norm = (2.0 * PI).powf(self.grid.d as f64 / 2.0) / self.n_samples() as f64;
        Ok(Field { grid: self.grid, coeffs: self.slot.iter().map(|&s| data[s] * norm).collect() })
    }

    /// Sample coordinates `x_j`.
    pub fn coords(&self, j: usize) -> [f64; MAX_DIM] {
        let mut x = [0.0; MAX_DIM];
        let mut rest = j;
        for i in (0..self.grid.d).rev() {
            x[i] = 2.0 * PI * (rest % self.p) as f64 / self.p as f64;
            rest /= self.p;
        }
        x
    }
}

/// Samples on the `(2K+1)^d` grid to coefficients.
pub fn transform_forward(grid: &GridSpec, samples: &[Complex64]) -> Result<Field, GridError> {
    Sampler::exact(grid).analyze(samples)
}

/// Coefficients to samples on the `(2K+1)^d` grid.
pub fn transform_inverse(f: &Field) -> Vec<Complex64> {
    Sampler::exact(&f.grid).synthesize(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn lambda_examples() {
        let g = GridSpec::flat(2, 4, 1.0).unwrap();
        assert_eq!(lambda_of(&g, &[1, 0, 0]), 2.0);
        assert_eq!(lambda_of(&g, &[0, 0, 0]), 1.0);
        let g = GridSpec::new(2, 4, &[2.0, 1.0, 1.0, 3.0], 0.5, 0.25).unwrap();
        assert_eq!(lambda_of(&g, &[1, 1, 0]), 7.5);
        // Outside the box is fine.
        assert_eq!(lambda_of(&g, &[10, 0, 0]), 200.5);
    }

    #[test]
    fn grid_validation() {
        assert!(matches!(
            GridSpec::new(2, 4, &[1.0, 0.1, 0.2, 1.0], 1.0, 0.25),
            Err(GridError::MetricAsymmetric(..))
        ));
        assert!(matches!(
            GridSpec::new(2, 4, &[1.0, 2.0, 2.0, 1.0], 1.0, 0.25),
            Err(GridError::MetricIndefinite(_))
        ));
        assert!(matches!(GridSpec::flat(1, 4, 0.0), Err(GridError::Mass(_))));
        assert!(matches!(
            GridSpec::new(1, 4, &[1.0], 1.0, 0.5),
            Err(GridError::EpsQ(_))
        ));
        assert!(matches!(GridSpec::flat(4, 4, 1.0), Err(GridError::Dimension(4))));
    }

    #[test]
    fn indexing_roundtrip() {
        let g = GridSpec::flat(3, 2, 1.0).unwrap();
        for i in 0..g.len() {
            let p = g.point(i);
            assert_eq!(g.index(&p), Some(i));
            assert_eq!(g.index(&neg_pt(&p)), Some(g.neg_index(i)));
        }
        assert_eq!(g.index(&[3, 0, 0]), None);
    }

    #[test]
    fn sobolev_examples() {
        let g = GridSpec::flat(2, 3, 1.0).unwrap();
        let f = Field::single_mode(&g, &[2, -1, 0], c(1.0, 0.0));
        assert!((f.sobolev_norm(1.5) - 6f64.powf(0.75)).abs() < 1e-14);
        assert_eq!(Field::zeros(&g).sobolev_norm(3.0), 0.0);
        let h = Field::from_fn(&g, |p| c(p[0] as f64, 0.5));
        assert!((h.sobolev_norm(0.0) - h.l2()).abs() < 1e-14);
    }

    #[test]
    fn transform_normalization() {
        for d in 1..=2 {
            let g = GridSpec::flat(d, 3, 1.0).unwrap();
            let s = Sampler::exact(&g);
            let ones = vec![c(1.0, 0.0); s.n_samples()];
            let f = transform_forward(&g, &ones).unwrap();
            let zero = g.index(&[0, 0, 0]).unwrap();
            assert!((f.coeffs()[zero].re - (2.0 * PI).powf(d as f64 / 2.0)).abs() < 1e-12);
            let n: Pt = [2, if d == 2 { -1 } else { 0 }, 0];
            let wave: Vec<_> = (0..s.n_samples())
                .map(|j| {
                    let x = s.coords(j);
                    let ph: f64 = (0..d).map(|i| n[i] as f64 * x[i]).sum();
                    Complex64::from_polar(1.0, ph)
                })
                .collect();
            let f = transform_forward(&g, &wave).unwrap();
            for (i, v) in f.coeffs().iter().enumerate() {
                let want = if g.point(i) == n { (2.0 * PI).powf(d as f64 / 2.0) } else { 0.0 };
                assert!((v - c(want, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn transform_rejects_shape() {
        let g = GridSpec::flat(1, 3, 1.0).unwrap();
        assert!(transform_forward(&g, &[c(0.0, 0.0); 5]).is_err());
    }

    #[test]
    fn multiplier_matches_sampled_derivative() {
        let g = GridSpec::flat(2, 5, 1.0).unwrap();
        let n: Pt = [3, -2, 0];
        let f = Field::single_mode(&g, &n, c(1.0, 0.0));
        let df = apply_multiplier(&f, |p| c(0.0, p[0] as f64));
        let s = Sampler::exact(&g);
        let got = s.synthesize(&df);
        let amp = (2.0 * PI).powf(-1.0);
        for (j, v) in got.iter().enumerate() {
            let x = s.coords(j);
            let ph = 3.0 * x[0] - 2.0 * x[1];
            let want = c(0.0, 3.0) * Complex64::from_polar(amp, ph);
            assert!((v - want).norm() < 1e-13);
        }
        let lam = apply_multiplier(&f, |p| c(g.lambda(p), 0.0));
        assert!((lam.get(&n) - c(14.0, 0.0)).norm() < 1e-14);
        assert_eq!(apply_multiplier(&f, |_| c(1.0, 0.0)), f);
    }

    #[test]
    fn field_csv_roundtrip() {
        let g = GridSpec::flat(2, 2, 1.0).unwrap();
        let f = Field::from_fn(&g, |p| c(p[0] as f64 * 0.25, p[1] as f64 - 0.125));
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let back = Field::read_csv(&g, buf.as_slice()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn pair_field_coupling() {
        let g = GridSpec::flat(1, 3, 1.0).unwrap();
        let u = Field::from_fn(&g, |p| c(p[0] as f64, 1.0));
        let pf = PairField::from_u(u.clone());
        assert_eq!(pf.reality_defect(), 0.0);
        assert!(PairField::from_parts(u.clone(), u, 1e-12).is_err());
    }

    fn random_field(g: &GridSpec, vals: &[(f64, f64)]) -> Field {
        Field::from_coeffs(g, vals.iter().take(g.len()).map(|&(a, b)| c(a, b)).collect()).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn roundtrip_is_identity(
            d in 1usize..=2,
            k in 1usize..=12,
            vals in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 625),
        ) {
            let g = GridSpec::flat(d, k, 1.0).unwrap();
            prop_assume!(vals.len() >= g.len());
            let f = random_field(&g, &vals);
            let back = transform_forward(&g, &transform_inverse(&f)).unwrap();
            let err = back.sub(&f).l2();
            prop_assert!(err <= 1e-12 * f.l2().max(1e-300));
        }

        #[test]
        fn sobolev_monotone_and_homogeneous(
            vals in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 81),
            s in 0.0f64..4.0,
            lam in -3.0f64..3.0,
        ) {
            let g = GridSpec::flat(2, 4, 1.0).unwrap();
            let f = random_field(&g, &vals);
            prop_assert!(f.sobolev_norm(s) <= f.sobolev_norm(s + 0.5) * (1.0 + 1e-14));
            let scaled = f.scale(c(lam, 0.0)).sobolev_norm(s);
            prop_assert!((scaled - lam.abs() * f.sobolev_norm(s)).abs() <= 1e-12 * (1.0 + scaled));
        }

        #[test]
        fn lambda_coercive(a in 0.5f64..3.0, b in -0.4f64..0.4, cc in 0.5f64..3.0,
                           x in -20i64..20, y in -20i64..20) {
            let g = GridSpec::new(2, 4, &[a, b, b, cc], 0.7, 0.25).unwrap();
            let p = [x, y, 0];
            let bound = 0.7 + g.c0() * (x * x + y * y) as f64;
            prop_assert!(g.lambda(&p) >= bound - 1e-9 * bound);
        }
    }
}
