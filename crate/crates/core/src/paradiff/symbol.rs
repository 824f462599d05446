use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::torus_grid::{GridSpec, Pt, MAX_DIM};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Half-integer fiber lattice `ζ = h/2`, `|h_i| ≤ 2K`.
///
/// Every midpoint `(j+k)/2` of two box points lies on it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fiber {
    d: usize,
    k: usize,
}

impl Fiber {
    pub fn new(grid: &GridSpec) -> Self {
        Fiber { d: grid.d(), k: grid.k() }
    }

    pub fn side(&self) -> usize {
        4 * self.k + 1
    }

    pub fn len(&self) -> usize {
        self.side().pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of the doubled coordinate `h = 2ζ`.
    pub fn index(&self, h: &Pt) -> Option<usize> {
        let r = 2 * self.k as i64;
        let side = self.side();
        let mut idx = 0;
        for &c in h.iter().take(self.d) {
            if c < -r || c > r {
                return None;
            }
            idx = idx * side + (c + r) as usize;
        }
        Some(idx)
    }

    pub fn doubled(&self, idx: usize) -> Pt {
        let side = self.side();
        let r = 2 * self.k as i64;
        let mut h = [0i64; MAX_DIM];
        let mut rest = idx;
        for i in (0..self.d).rev() {
            h[i] = (rest % side) as i64 - r;
            rest /= side;
        }
        h
    }

    pub fn zeta(&self, idx: usize) -> [f64; MAX_DIM] {
        let h = self.doubled(idx);
        [h[0] as f64 / 2.0, h[1] as f64 / 2.0, h[2] as f64 / 2.0]
    }

    /// Flat stride of axis `i`.
    pub fn stride(&self, i: usize) -> usize {
        self.side().pow((self.d - 1 - i) as u32)
    }
}

/// Symbol `a(x, ζ) = Σ_k c(k, ζ) e^{ik·x}` with `k` in the box and `ζ` on the half lattice.
///
/// Rows are stored per x-frequency `k`; an empty row is identically zero.
#[derive(Clone, Debug, PartialEq)]
pub struct Symbol {
    grid: GridSpec,
    order: f64,
    rows: Vec<Vec<Complex64>>,
}

impl Symbol {
    pub fn zeros(grid: &GridSpec, order: f64) -> Self {
        Symbol { grid: *grid, order, rows: vec![Vec::new(); grid.len()] }
    }

    /// Tabulates `c(k, ζ)` at every box `k` and half-lattice `ζ`.
    pub fn from_fn(grid: &GridSpec, order: f64, f: impl Fn(&Pt, &[f64; MAX_DIM]) -> Complex64 + Sync) -> Self {
        let fib = Fiber::new(grid);
        let rows = (0..grid.len())
            .into_par_iter()
            .map(|ki| {
                let k = grid.point(ki);
                let row: Vec<Complex64> = (0..fib.len()).map(|zi| f(&k, &fib.zeta(zi))).collect();
                if row.iter().all(|v| *v == ZERO) {
                    Vec::new()
                } else {
                    row
                }
            })
            .collect();
        Symbol { grid: *grid, order, rows }
    }

    /// x-independent symbol `φ(ζ)`.
    pub fn multiplier(grid: &GridSpec, order: f64, phi: impl Fn(&[f64; MAX_DIM]) -> Complex64 + Sync) -> Self {
        let zero = grid.index(&[0; MAX_DIM]).expect("origin");
        let fib = Fiber::new(grid);
        let mut s = Self::zeros(grid, order);
        s.rows[zero] = (0..fib.len()).map(|zi| phi(&fib.zeta(zi))).collect();
        s
    }

    /// `Λ(ζ) = Gζ·ζ + m`, order 2.
    pub fn lambda(grid: &GridSpec) -> Self {
        Self::multiplier(grid, 2.0, |z| Complex64::new(grid.lambda_at(z), 0.0))
    }

    /// From values on the integer lattice; half-integer points are filled by multilinear interpolation.
    pub fn from_integer_table(grid: &GridSpec, order: f64, f: impl Fn(&Pt, &Pt) -> Complex64 + Sync) -> Self {
        let d = grid.d();
        Self::from_fn(grid, order, |k, z| {
            let mut acc = ZERO;
            let halves: Vec<usize> = (0..d).filter(|&i| z[i].fract() != 0.0).collect();
            let n = 1usize << halves.len();
            for mask in 0..n {
                let mut xi = [0i64; MAX_DIM];
                for i in 0..d {
                    xi[i] = z[i].floor() as i64;
                }
                for (b, &i) in halves.iter().enumerate() {
                    if mask >> b & 1 == 1 {
                        xi[i] += 1;
                    }
                }
                acc += f(k, &xi);
            }
            acc / n as f64
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn with_order(mut self, order: f64) -> Self {
        self.order = order;
        self
    }

    pub fn fiber(&self) -> Fiber {
        Fiber::new(&self.grid)
    }

    pub fn row(&self, ki: usize) -> Option<&[Complex64]> {
        let r = &self.rows[ki];
        if r.is_empty() {
            None
        } else {
            Some(r)
        }
    }

    /// Materializes the row if it was zero.
    pub fn row_mut(&mut self, ki: usize) -> &mut Vec<Complex64> {
        let len = self.fiber().len();
        let r = &mut self.rows[ki];
        if r.is_empty() {
            r.resize(len, ZERO);
        }
        r
    }

    /// Indices of the stored nonzero rows.
    pub fn support(&self) -> Vec<usize> {
        (0..self.rows.len()).filter(|&i| !self.rows[i].is_empty()).collect()
    }

    /// Value at a box `k` and half-lattice `ζ`; zero outside.
    pub fn eval(&self, k: &Pt, z: &[f64; MAX_DIM]) -> Complex64 {
        let Some(ki) = self.grid.index(k) else { return ZERO };
        let mut h = [0i64; MAX_DIM];
        for i in 0..self.grid.d() {
            let v = 2.0 * z[i];
            assert!((v - v.round()).abs() < 1e-9, "ζ must lie on the half lattice");
            h[i] = v.round() as i64;
        }
        self.get_doubled(ki, &h)
    }

    /// Value at row `ki` and doubled fiber coordinate `h`.
    pub fn get_doubled(&self, ki: usize, h: &Pt) -> Complex64 {
        let r = &self.rows[ki];
        if r.is_empty() {
            return ZERO;
        }
        self.fiber().index(h).map_or(ZERO, |zi| r[zi])
    }

    pub fn map_rows(&self, order: f64, f: impl Fn(usize, &[Complex64]) -> Vec<Complex64> + Sync) -> Symbol {
        let rows = (0..self.rows.len())
            .into_par_iter()
            .map(|ki| {
                if self.rows[ki].is_empty() {
                    Vec::new()
                } else {
                    let r = f(ki, &self.rows[ki]);
                    if r.iter().all(|v| *v == ZERO) {
                        Vec::new()
                    } else {
                        r
                    }
                }
            })
            .collect();
        Symbol { grid: self.grid, order, rows }
    }

    /// Entrywise `c(k, ζ) ↦ f(k, ζ, c)` over stored rows.
    pub fn map_entries(&self, order: f64, f: impl Fn(&Pt, &[f64; MAX_DIM], Complex64) -> Complex64 + Sync) -> Symbol {
        let fib = self.fiber();
        let g = self.grid;
        self.map_rows(order, |ki, row| {
            let k = g.point(ki);
            row.iter().enumerate().map(|(zi, v)| f(&k, &fib.zeta(zi), *v)).collect()
        })
    }

    pub fn scale(&self, c: Complex64) -> Symbol {
        self.map_rows(self.order, |_, r| r.iter().map(|v| v * c).collect())
    }

    pub fn axpy(&self, c: Complex64, other: &Symbol) -> Symbol {
        assert_eq!(self.grid, other.grid);
        let mut out = self.clone();
        out.order = self.order.max(other.order);
        for ki in other.support() {
            let src = &other.rows[ki];
            let dst = out.row_mut(ki);
            for (a, b) in dst.iter_mut().zip(src) {
                *a += c * b;
            }
        }
        out.prune();
        out
    }

    pub fn add(&self, other: &Symbol) -> Symbol {
        self.axpy(Complex64::new(1.0, 0.0), other)
    }

    pub fn sub(&self, other: &Symbol) -> Symbol {
        self.axpy(Complex64::new(-1.0, 0.0), other)
    }

    fn prune(&mut self) {
        for r in &mut self.rows {
            if !r.is_empty() && r.iter().all(|v| *v == ZERO) {
                r.clear();
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.rows.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Coefficients of `conj(a(x, ζ))`: `c'(k, ζ) = conj(c(−k, ζ))`.
    pub fn conj_x(&self) -> Symbol {
        let n = self.rows.len();
        let rows = (0..n).map(|ki| self.rows[n - 1 - ki].iter().map(|v| v.conj()).collect()).collect();
        Symbol { grid: self.grid, order: self.order, rows }
    }

    /// Coefficients of `a(x, −ζ)`.
    pub fn reflect_xi(&self) -> Symbol {
        self.map_rows(self.order, |_, r| r.iter().rev().copied().collect())
    }

    /// `max |a − conj(a)|` over coefficients; zero iff `a(x, ζ)` is real.
    pub fn reality_defect(&self) -> f64 {
        max_diff(self, &self.conj_x())
    }

    /// `max |a(x, −ζ) − a(x, ζ)|` over coefficients.
    pub fn evenness_defect(&self) -> f64 {
        max_diff(self, &self.reflect_xi())
    }

    /// `∂_{x_j}`, exact: multiply row `k` by `i k_j`.
    pub fn dx(&self, j: usize) -> Symbol {
        let g = self.grid;
        self.map_rows(self.order, |ki, r| {
            let f = Complex64::new(0.0, g.point(ki)[j] as f64);
            r.iter().map(|v| v * f).collect()
        })
    }

    /// `∂_{ζ_j}` by central differences with step `1/2`; second-order one-sided at the edges.
    pub fn dxi(&self, j: usize) -> Symbol {
        let fib = self.fiber();
        let side = fib.side();
        let stride = fib.stride(j);
        let h = 0.5;
        self.map_rows(self.order - 1.0, |_, r| {
            let mut out = vec![ZERO; r.len()];
            for (zi, o) in out.iter_mut().enumerate() {
                let pos = (zi / stride) % side;
                *o = if pos == 0 {
                    (-3.0 * r[zi] + 4.0 * r[zi + stride] - r[zi + 2 * stride]) / (2.0 * h)
                } else if pos == side - 1 {
                    (3.0 * r[zi] - 4.0 * r[zi - stride] + r[zi - 2 * stride]) / (2.0 * h)
                } else {
                    (r[zi + stride] - r[zi - stride]) / (2.0 * h)
                };
            }
            out
        })
    }

    /// Pointwise product in `x` (convolution of rows), projected to the box.
    pub fn mul(&self, other: &Symbol) -> Symbol {
        assert_eq!(self.grid, other.grid);
        let g = self.grid;
        let fib = self.fiber();
        let sa = self.support();
        let pa: Vec<Pt> = sa.iter().map(|&i| g.point(i)).collect();
        let rows = (0..g.len())
            .into_par_iter()
            .map(|ki| {
                let k = g.point(ki);
                let mut acc: Vec<Complex64> = Vec::new();
                for (ia, ka) in sa.iter().zip(&pa) {
                    let kb = crate::torus_grid::sub_pt(&k, ka);
                    let Some(jb) = g.index(&kb) else { continue };
                    if other.rows[jb].is_empty() {
                        continue;
                    }
                    if acc.is_empty() {
                        acc = vec![ZERO; fib.len()];
                    }
                    let ra = &self.rows[*ia];
                    let rb = &other.rows[jb];
                    for zi in 0..acc.len() {
                        acc[zi] += ra[zi] * rb[zi];
                    }
                }
                if acc.iter().all(|v| *v == ZERO) {
                    Vec::new()
                } else {
                    acc
                }
            })
            .collect();
        Symbol { grid: g, order: self.order + other.order, rows }
    }

    /// Rows `k, ζ` (as `k_1..k_d, zeta_1..zeta_d, re, im`) over stored rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let d = self.grid.d();
        let fib = self.fiber();
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=d).map(|i| format!("k{i}")).collect();
        header.extend((1..=d).map(|i| format!("zeta{i}")));
        header.push("re".into());
        header.push("im".into());
        wr.write_record(&header)?;
        for ki in self.support() {
            let k = self.grid.point(ki);
            for (zi, v) in self.rows[ki].iter().enumerate() {
                if *v == ZERO {
                    continue;
                }
                let z = fib.zeta(zi);
                let mut rec: Vec<String> = k[..d].iter().map(|x| x.to_string()).collect();
                rec.extend(z[..d].iter().map(|x| x.to_string()));
                rec.push(format!("{:e}", v.re));
                rec.push(format!("{:e}", v.im));
                wr.write_record(&rec)?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

fn max_diff(a: &Symbol, b: &Symbol) -> f64 {
    let len = a.fiber().len();
    let zeros = vec![ZERO; len];
    (0..a.rows.len())
        .map(|ki| {
            let ra = if a.rows[ki].is_empty() { &zeros } else { &a.rows[ki] };
            let rb = if b.rows[ki].is_empty() { &zeros } else { &b.rows[ki] };
            ra.iter().zip(rb).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// The real-to-real matrix symbol `[[a, b], [conj b(x,−ξ), conj a(x,−ξ)]]`.
///
/// Only the top row is stored; the bottom row is implied.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixSymbol {
    pub a: Symbol,
    pub b: Symbol,
}

impl MatrixSymbol {
    pub fn new(a: Symbol, b: Symbol) -> Self {
        assert_eq!(a.grid(), b.grid());
        MatrixSymbol { a, b }
    }

    /// Bottom-left entry `conj(b(x, −ξ))`.
    pub fn lower_left(&self) -> Symbol {
        self.b.conj_x().reflect_xi()
    }

    /// Bottom-right entry `conj(a(x, −ξ))`.
    pub fn lower_right(&self) -> Symbol {
        self.a.conj_x().reflect_xi()
    }
}
