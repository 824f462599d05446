use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use super::linop::{LinOp, PairLinOp};
use crate::torus_grid::{sub_pt, Field, GridSpec, PairField, Pt};

/// Which of the four coefficient tables of a [`LinearFamily`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Table {
    /// `11` block, multiplies `û(k−ξ)`.
    T1Plus,
    /// `11` block, multiplies `\hat ū(k−ξ)`.
    T1Minus,
    /// `12` block, multiplies `û(k−ξ)`.
    T2Plus,
    /// `12` block, multiplies `\hat ū(k−ξ)`.
    T2Minus,
}

impl Table {
    pub const ALL: [Table; 4] = [Table::T1Plus, Table::T1Minus, Table::T2Plus, Table::T2Minus];

    /// Signs `(σ, σ')` of the three-wave divisor `Λ(k) + σΛ(k−ξ) + σ'Λ(ξ)` attached to the table.
    pub fn signs(self) -> (f64, f64) {
        match self {
            Table::T1Plus => (-1.0, -1.0),
            Table::T1Minus => (1.0, -1.0),
            Table::T2Plus => (-1.0, 1.0),
            Table::T2Minus => (1.0, 1.0),
        }
    }
}

/// Pair operator depending real-linearly on `U`:
///
/// `(F(U)W)^(k) = Σ_ξ [t1⁺ û(k−ξ) + t1⁻ \hat ū(k−ξ)] ŵ(ξ) + [t2⁺ û(k−ξ) + t2⁻ \hat ū(k−ξ)] \hat{w̄}(ξ)`.
///
/// Tables are indexed by box indices `(k, ξ)`; entries with `k−ξ` outside the box never act.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearFamily {
    grid: GridSpec,
    pub t1p: DMatrix<Complex64>,
    pub t1m: DMatrix<Complex64>,
    pub t2p: DMatrix<Complex64>,
    pub t2m: DMatrix<Complex64>,
}

impl LinearFamily {
    pub fn zeros(grid: &GridSpec) -> Self {
        let n = grid.len();
        let z = DMatrix::zeros(n, n);
        LinearFamily { grid: *grid, t1p: z.clone(), t1m: z.clone(), t2p: z.clone(), t2m: z }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn table(&self, t: Table) -> &DMatrix<Complex64> {
        match t {
            Table::T1Plus => &self.t1p,
            Table::T1Minus => &self.t1m,
            Table::T2Plus => &self.t2p,
            Table::T2Minus => &self.t2m,
        }
    }

    pub fn table_mut(&mut self, t: Table) -> &mut DMatrix<Complex64> {
        match t {
            Table::T1Plus => &mut self.t1p,
            Table::T1Minus => &mut self.t1m,
            Table::T2Plus => &mut self.t2p,
            Table::T2Minus => &mut self.t2m,
        }
    }

    /// Entrywise map `f(table, k, ξ, value)`; out-of-box `k−ξ` entries are left at zero.
    pub fn map(&self, f: impl Fn(Table, &Pt, &Pt, Complex64) -> Complex64 + Sync) -> LinearFamily {
        let g = self.grid;
        let n = g.len();
        let mut out = LinearFamily::zeros(&g);
        for t in Table::ALL {
            let src = self.table(t);
            let cols: Vec<Vec<Complex64>> = (0..n)
                .into_par_iter()
                .map(|xi| {
                    let x = g.point(xi);
                    (0..n)
                        .map(|ki| {
                            let k = g.point(ki);
                            if g.index(&sub_pt(&k, &x)).is_none() {
                                Complex64::new(0.0, 0.0)
                            } else {
                                f(t, &k, &x, src[(ki, xi)])
                            }
                        })
                        .collect()
                })
                .collect();
            let dst = out.table_mut(t);
            for (xi, col) in cols.into_iter().enumerate() {
                for (ki, v) in col.into_iter().enumerate() {
                    dst[(ki, xi)] = v;
                }
            }
        }
        out
    }

    pub fn add(&self, o: &LinearFamily) -> LinearFamily {
        LinearFamily {
            grid: self.grid,
            t1p: &self.t1p + &o.t1p,
            t1m: &self.t1m + &o.t1m,
            t2p: &self.t2p + &o.t2p,
            t2m: &self.t2m + &o.t2m,
        }
    }

    pub fn sub(&self, o: &LinearFamily) -> LinearFamily {
        self.add(&o.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, c: Complex64) -> LinearFamily {
        LinearFamily { grid: self.grid, t1p: &self.t1p * c, t1m: &self.t1m * c, t2p: &self.t2p * c, t2m: &self.t2m * c }
    }

    /// Only the `11` tables.
    pub fn diagonal_part(&self) -> LinearFamily {
        let mut out = self.clone();
        out.t2p.fill(Complex64::new(0.0, 0.0));
        out.t2m.fill(Complex64::new(0.0, 0.0));
        out
    }

    /// Only the `12` tables.
    pub fn offdiag_part(&self) -> LinearFamily {
        let mut out = self.clone();
        out.t1p.fill(Complex64::new(0.0, 0.0));
        out.t1m.fill(Complex64::new(0.0, 0.0));
        out
    }

    pub fn max_abs(&self) -> f64 {
        Table::ALL
            .iter()
            .flat_map(|&t| self.table(t).iter())
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }

    /// The operator `F(U)`.
    pub fn eval(&self, uu: &PairField) -> PairLinOp {
        let g = self.grid;
        let n = g.len();
        let u = uu.u.coeffs();
        let ub = uu.ubar.coeffs();
        let mut a11 = DMatrix::zeros(n, n);
        let mut a12 = DMatrix::zeros(n, n);
        for xi in 0..n {
            let x = g.point(xi);
            for ki in 0..n {
                let k = g.point(ki);
                if let Some(di) = g.index(&sub_pt(&k, &x)) {
                    a11[(ki, xi)] = self.t1p[(ki, xi)] * u[di] + self.t1m[(ki, xi)] * ub[di];
                    a12[(ki, xi)] = self.t2p[(ki, xi)] * u[di] + self.t2m[(ki, xi)] * ub[di];
                }
            }
        }
        PairLinOp::new(LinOp::from_matrix(&g, a11), LinOp::from_matrix(&g, a12))
    }

    /// `F(U)W`.
    pub fn apply(&self, uu: &PairField, w: &PairField) -> PairField {
        self.eval(uu).apply(w)
    }

    /// Tables of a real-linear map `U ↦ A(U)` that has the family form, by probing `U = e_n, i e_n`.
    pub fn probe(grid: &GridSpec, a: impl Fn(&PairField) -> PairLinOp + Sync) -> LinearFamily {
        let g = *grid;
        let n = g.len();
        let i = Complex64::new(0.0, 1.0);
        let parts: Vec<(usize, PairLinOp, PairLinOp)> = (0..n)
            .into_par_iter()
            .map(|p| {
                let pt = g.point(p);
                let ae = a(&PairField::from_u(Field::single_mode(&g, &pt, Complex64::new(1.0, 0.0))));
                let aie = a(&PairField::from_u(Field::single_mode(&g, &pt, i)));
                (p, ae, aie)
            })
            .collect();
        let mut out = LinearFamily::zeros(&g);
        for (p, ae, aie) in parts {
            let np = g.point(p);
            for xi in 0..n {
                let x = g.point(xi);
                for ki in 0..n {
                    let d = sub_pt(&g.point(ki), &x);
                    let e11 = ae.a11.matrix()[(ki, xi)];
                    let ie11 = aie.a11.matrix()[(ki, xi)];
                    let e12 = ae.a12.matrix()[(ki, xi)];
                    let ie12 = aie.a12.matrix()[(ki, xi)];
                    if d == np {
                        out.t1p[(ki, xi)] = (e11 - i * ie11) * 0.5;
                        out.t2p[(ki, xi)] = (e12 - i * ie12) * 0.5;
                    }
                    if d == crate::torus_grid::neg_pt(&np) {
                        out.t1m[(ki, xi)] = (e11 + i * ie11) * 0.5;
                        out.t2m[(ki, xi)] = (e12 + i * ie12) * 0.5;
                    }
                }
            }
        }
        out
    }

    /// The family `U ↦ (W ↦ F(W)U)`, i.e. the same bilinear map with arguments swapped.
    pub fn swapped(&self) -> LinearFamily {
        let g = self.grid;
        // (F(W)U)^(k) = Σ_η [t1⁺(k,η) ŵ(k−η) + t1⁻(k,η) \hat w̄(k−η)] û(η) + [t2⁺ ŵ(k−η) + t2⁻ \hat w̄(k−η)] \hat ū(η).
        // With ξ = k−η this is a family in U acting on W:
        //   s1⁺(k,ξ) = t1⁺(k,k−ξ), s2⁺(k,ξ) = t1⁻(k,k−ξ), s1⁻(k,ξ) = t2⁺(k,k−ξ), s2⁻(k,ξ) = t2⁻(k,k−ξ).
        let pick = |t: &DMatrix<Complex64>, k: &Pt, x: &Pt| -> Complex64 {
            let ki = g.index(k).expect("box");
            match g.index(&sub_pt(k, x)) {
                Some(eta) => t[(ki, eta)],
                None => Complex64::new(0.0, 0.0),
            }
        };
        self.map(|t, k, x, _| match t {
            Table::T1Plus => pick(&self.t1p, k, x),
            Table::T2Plus => pick(&self.t1m, k, x),
            Table::T1Minus => pick(&self.t2p, k, x),
            Table::T2Minus => pick(&self.t2m, k, x),
        })
    }
}
