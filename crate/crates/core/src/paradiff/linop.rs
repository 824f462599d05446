use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::torus_grid::{Field, GridSpec, PairField};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Power-iteration budget for weighted operator norms.
pub const NORM_MAX_ITER: usize = 200;
pub const NORM_REL_TOL: f64 = 1e-10;

/// Dense operator on the box, indexed `(output mode, input mode)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinOp {
    grid: GridSpec,
    matrix: DMatrix<Complex64>,
}

impl LinOp {
    pub fn zeros(grid: &GridSpec) -> Self {
        LinOp { grid: *grid, matrix: DMatrix::zeros(grid.len(), grid.len()) }
    }

    pub fn identity(grid: &GridSpec) -> Self {
        LinOp { grid: *grid, matrix: DMatrix::identity(grid.len(), grid.len()) }
    }

    pub fn from_matrix(grid: &GridSpec, matrix: DMatrix<Complex64>) -> Self {
        assert_eq!(matrix.nrows(), grid.len());
        assert_eq!(matrix.ncols(), grid.len());
        LinOp { grid: *grid, matrix }
    }

    pub fn diagonal(grid: &GridSpec, phi: impl Fn(usize) -> Complex64) -> Self {
        let n = grid.len();
        LinOp { grid: *grid, matrix: DMatrix::from_diagonal(&DVector::from_fn(n, |i, _| phi(i))) }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.matrix
    }

    pub fn apply(&self, f: &Field) -> Field {
        let v = DVector::from_column_slice(f.coeffs());
        Field::from_coeffs(&self.grid, (&self.matrix * v).as_slice().to_vec()).expect("shape")
    }

    pub fn adjoint(&self) -> LinOp {
        LinOp { grid: self.grid, matrix: self.matrix.adjoint() }
    }

    pub fn compose(&self, other: &LinOp) -> LinOp {
        LinOp { grid: self.grid, matrix: &self.matrix * &other.matrix }
    }

    pub fn add(&self, other: &LinOp) -> LinOp {
        LinOp { grid: self.grid, matrix: &self.matrix + &other.matrix }
    }

    pub fn sub(&self, other: &LinOp) -> LinOp {
        LinOp { grid: self.grid, matrix: &self.matrix - &other.matrix }
    }

    pub fn scale(&self, c: Complex64) -> LinOp {
        LinOp { grid: self.grid, matrix: &self.matrix * c }
    }

    /// `R ↦ \overline{R}`, `\overline{R}[j,k] = conj(R[−j,−k])`.
    pub fn conj_op(&self) -> LinOp {
        LinOp { grid: self.grid, matrix: conj_op(&self.matrix) }
    }

    pub fn max_abs(&self) -> f64 {
        self.matrix.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `H^s → H^{s'}` norm.
    pub fn norm(&self, s: f64, s_out: f64) -> f64 {
        let w_in = sobolev_weights(&self.grid, s);
        let w_out = sobolev_weights(&self.grid, s_out);
        weighted_norm(&self.matrix, &w_in, &w_out)
    }

    /// Rows `row, col, re, im` over nonzero entries (flat box indices).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        write_matrix_csv(&self.matrix, w)
    }
}

pub(crate) fn write_matrix_csv<W: Write>(m: &DMatrix<Complex64>, w: W) -> Result<(), csv::Error> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["row", "col", "re", "im"])?;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if v != ZERO {
                wr.write_record([i.to_string(), j.to_string(), format!("{:e}", v.re), format!("{:e}", v.im)])?;
            }
        }
    }
    wr.flush()?;
    Ok(())
}

/// `conj(M[−j,−k])`; the box ordering makes `−j` the reversed index.
pub fn conj_op(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let (r, c) = m.shape();
    DMatrix::from_fn(r, c, |i, j| m[(r - 1 - i, c - 1 - j)].conj())
}

/// `⟨ξ⟩^s` in box order.
pub fn sobolev_weights(grid: &GridSpec, s: f64) -> Vec<f64> {
    grid.points()
        .map(|p| (1.0 + p.iter().map(|&v| (v * v) as f64).sum::<f64>()).powf(s))
        .collect()
}

/// Spectral norm of `diag(w_out) M diag(w_in)^{-1}` by power iteration on `W*W`.
pub fn weighted_norm(m: &DMatrix<Complex64>, w_in: &[f64], w_out: &[f64]) -> f64 {
    let (r, c) = m.shape();
    assert_eq!(w_in.len(), c);
    assert_eq!(w_out.len(), r);
    let w = DMatrix::from_fn(r, c, |i, j| m[(i, j)] * (w_out[i] / w_in[j]));
    spectral_norm(&w)
}

/// Largest singular value by power iteration (at most [`NORM_MAX_ITER`] rounds).
pub fn spectral_norm(w: &DMatrix<Complex64>) -> f64 {
    let c = w.ncols();
    if c == 0 || w.iter().all(|v| *v == ZERO) {
        return 0.0;
    }
    let wh = w.adjoint();
    // Deterministic start with no special alignment to lattice symmetries.
    let mut v = DVector::from_fn(c, |i, _| Complex64::new(1.0 + 0.37 * (i as f64 * 0.7).sin(), 0.11 * (i as f64).cos()));
    v /= Complex64::new(v.norm(), 0.0);
    let mut sigma = 0.0;
    for _ in 0..NORM_MAX_ITER {
        let y = w * &v;
        let z = &wh * &y;
        let zn = z.norm();
        if zn == 0.0 {
            return y.norm();
        }
        let next = zn.sqrt();
        v = z / Complex64::new(zn, 0.0);
        let done = (next - sigma).abs() <= NORM_REL_TOL * next;
        sigma = next;
        if done {
            break;
        }
    }
    sigma
}

/// Real-to-real operator `[[A11, A12], [\overline{A12}, \overline{A11}]]` on `(w, w̄)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairLinOp {
    pub a11: LinOp,
    pub a12: LinOp,
}

impl PairLinOp {
    pub fn new(a11: LinOp, a12: LinOp) -> Self {
        assert_eq!(a11.grid, a12.grid);
        PairLinOp { a11, a12 }
    }

    pub fn zeros(grid: &GridSpec) -> Self {
        PairLinOp { a11: LinOp::zeros(grid), a12: LinOp::zeros(grid) }
    }

    pub fn identity(grid: &GridSpec) -> Self {
        PairLinOp { a11: LinOp::identity(grid), a12: LinOp::zeros(grid) }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.a11.grid
    }

    /// The full `2n × 2n` matrix.
    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let n = self.grid().len();
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(&self.a11.matrix);
        m.view_mut((0, n), (n, n)).copy_from(&self.a12.matrix);
        m.view_mut((n, 0), (n, n)).copy_from(&conj_op(&self.a12.matrix));
        m.view_mut((n, n), (n, n)).copy_from(&conj_op(&self.a11.matrix));
        m
    }

    /// Keeps the top row; the bottom row of `m` is assumed consistent.
    pub fn from_dense(grid: &GridSpec, m: &DMatrix<Complex64>) -> Self {
        let n = grid.len();
        PairLinOp {
            a11: LinOp::from_matrix(grid, m.view((0, 0), (n, n)).into_owned()),
            a12: LinOp::from_matrix(grid, m.view((0, n), (n, n)).into_owned()),
        }
    }

    /// Max-entry mismatch between the bottom row of `m` and the conjugation rule.
    pub fn dense_reality_defect(grid: &GridSpec, m: &DMatrix<Complex64>) -> f64 {
        let n = grid.len();
        let top = PairLinOp::from_dense(grid, m).to_dense();
        (m.view((n, 0), (n, 2 * n)) - top.view((n, 0), (n, 2 * n))).iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn apply(&self, w: &PairField) -> PairField {
        let top = self.a11.apply(&w.u).axpy(Complex64::new(1.0, 0.0), &self.a12.apply(&w.ubar));
        PairField::from_u(top)
    }

    /// Both output components, computed independently of the coupling.
    pub fn apply_raw(&self, w: &PairField) -> (Field, Field) {
        let n = self.grid().len();
        let v = DVector::from_vec(w.to_vec());
        let out = self.to_dense() * v;
        let g = *self.grid();
        (
            Field::from_coeffs(&g, out.as_slice()[..n].to_vec()).expect("shape"),
            Field::from_coeffs(&g, out.as_slice()[n..].to_vec()).expect("shape"),
        )
    }

    pub fn compose(&self, other: &PairLinOp) -> PairLinOp {
        let b11 = &other.a11.matrix;
        let b12 = &other.a12.matrix;
        let a11 = &self.a11.matrix;
        let a12 = &self.a12.matrix;
        let g = *self.grid();
        PairLinOp {
            a11: LinOp::from_matrix(&g, a11 * b11 + a12 * conj_op(b12)),
            a12: LinOp::from_matrix(&g, a11 * b12 + a12 * conj_op(b11)),
        }
    }

    /// `[A, B] = AB − BA`.
    pub fn commutator(&self, other: &PairLinOp) -> PairLinOp {
        self.compose(other).sub(&other.compose(self))
    }

    pub fn add(&self, other: &PairLinOp) -> PairLinOp {
        PairLinOp { a11: self.a11.add(&other.a11), a12: self.a12.add(&other.a12) }
    }

    pub fn sub(&self, other: &PairLinOp) -> PairLinOp {
        PairLinOp { a11: self.a11.sub(&other.a11), a12: self.a12.sub(&other.a12) }
    }

    /// Real scaling.
    pub fn scale(&self, c: f64) -> PairLinOp {
        let c = Complex64::new(c, 0.0);
        PairLinOp { a11: self.a11.scale(c), a12: self.a12.scale(c) }
    }

    /// `diag(c, c̄) · A`; `c = i` gives `iE·A`.
    pub fn left_phase(&self, c: Complex64) -> PairLinOp {
        PairLinOp { a11: self.a11.scale(c), a12: self.a12.scale(c) }
    }

    pub fn adjoint(&self) -> PairLinOp {
        PairLinOp { a11: self.a11.adjoint(), a12: self.a12.conj_op().adjoint() }
    }

    pub fn max_abs(&self) -> f64 {
        self.a11.max_abs().max(self.a12.max_abs())
    }

    /// `H^s → H^{s'}` norm on the pair space.
    pub fn norm(&self, s: f64, s_out: f64) -> f64 {
        let w_in = pair_weights(self.grid(), s);
        let w_out = pair_weights(self.grid(), s_out);
        weighted_norm(&self.to_dense(), &w_in, &w_out)
    }

    /// Norm of the off-diagonal block `A12` alone, `H^s → H^{s'}`.
    pub fn offdiag_norm(&self, s: f64, s_out: f64) -> f64 {
        self.a12.norm(s, s_out)
    }

    /// CSV of the top row: `block, row, col, re, im`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["block", "row", "col", "re", "im"])?;
        for (name, m) in [("11", &self.a11.matrix), ("12", &self.a12.matrix)] {
            for j in 0..m.ncols() {
                for i in 0..m.nrows() {
                    let v = m[(i, j)];
                    if v != ZERO {
                        wr.write_record([
                            name.to_string(),
                            i.to_string(),
                            j.to_string(),
                            format!("{:e}", v.re),
                            format!("{:e}", v.im),
                        ])?;
                    }
                }
            }
        }
        wr.flush()?;
        Ok(())
    }
}

pub fn pair_weights(grid: &GridSpec, s: f64) -> Vec<f64> {
    let w = sobolev_weights(grid, s);
    let mut out = w.clone();
    out.extend_from_slice(&w);
    out
}

/// Matrix of a real-linear, real-to-real map `W ↦ out(W)` by probing with `e_m` and `i e_m`.
///
/// `A11[:, m] = (out(e_m) − i·out(i e_m))/2`, `A12[:, −m] = (out(e_m) + i·out(i e_m))/2`.
pub fn probe_pair_linop(grid: &GridSpec, out: impl Fn(&PairField) -> Field + Sync) -> PairLinOp {
    use rayon::prelude::*;
    let n = grid.len();
    let i = Complex64::new(0.0, 1.0);
    let cols: Vec<(Vec<Complex64>, Vec<Complex64>)> = (0..n)
        .into_par_iter()
        .map(|m| {
            let p = grid.point(m);
            let e = out(&PairField::from_u(Field::single_mode(grid, &p, Complex64::new(1.0, 0.0))));
            let ie = out(&PairField::from_u(Field::single_mode(grid, &p, i)));
            let c11 = e.coeffs().iter().zip(ie.coeffs()).map(|(a, b)| (a - i * b) * 0.5).collect();
            let c12 = e.coeffs().iter().zip(ie.coeffs()).map(|(a, b)| (a + i * b) * 0.5).collect();
            (c11, c12)
        })
        .collect();
    let mut a11 = DMatrix::zeros(n, n);
    let mut a12 = DMatrix::zeros(n, n);
    for (m, (c11, c12)) in cols.iter().enumerate() {
        a11.set_column(m, &DVector::from_column_slice(c11));
        a12.set_column(n - 1 - m, &DVector::from_column_slice(c12));
    }
    PairLinOp::new(LinOp::from_matrix(grid, a11), LinOp::from_matrix(grid, a12))
}
