//! Conic programs `min cᵀx  s.t.  Ax + s = b, s ∈ K` and an operator-splitting
//! solver for them.
//!
//! Problems are assembled through [`ConicBuilder`] from affine expressions:
//! every constraint says "this affine expression lies in that cone".

pub mod cones;
pub mod io;
pub mod scs;
pub mod sparse;

use serde::{Deserialize, Serialize};

pub use cones::ConeSpec;
pub use scs::{solve_conic, ScsSettings, ScsSolver};
pub use sparse::CscMatrix;

use crate::linalg::Mat;

/// `Σ coef·x[var] + constant`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn var(i: usize) -> Self {
        Self { terms: vec![(i, 1.0)], constant: 0.0 }
    }

    pub fn add_scaled(&mut self, other: &LinExpr, s: f64) {
        if s == 0.0 {
            return;
        }
        self.terms.extend(other.terms.iter().map(|&(i, c)| (i, c * s)));
        self.constant += other.constant * s;
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = LinExpr::default();
        out.add_scaled(self, s);
        out
    }

    pub fn plus(&self, other: &LinExpr) -> Self {
        let mut out = self.clone();
        out.add_scaled(other, 1.0);
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>()
    }

    /// Merges repeated variables.
    pub fn compact(&mut self) {
        self.terms.sort_by_key(|t| t.0);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for &(i, c) in &self.terms {
            match out.last_mut() {
                Some(last) if last.0 == i => last.1 += c,
                _ => out.push((i, c)),
            }
        }
        out.retain(|t| t.1 != 0.0);
        self.terms = out;
    }
}

/// Dense matrix of affine expressions, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ExprMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<LinExpr>,
}

impl ExprMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![LinExpr::default(); rows * cols] }
    }

    pub fn constant(m: &Mat) -> Self {
        let mut e = Self::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                e.data[i * m.ncols() + j].constant = m[(i, j)];
            }
        }
        e
    }

    /// Matrix whose entries are consecutive variables from `start`, row-major.
    pub fn vars(start: usize, rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: (0..rows * cols).map(|k| LinExpr::var(start + k)).collect() }
    }

    pub fn at(&self, i: usize, j: usize) -> &LinExpr {
        &self.data[i * self.cols + j]
    }

    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut LinExpr {
        &mut self.data[i * self.cols + j]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                *t.at_mut(j, i) = self.at(i, j).clone();
            }
        }
        t
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|e| e.scaled(s)).collect() }
    }

    pub fn plus(&self, other: &ExprMat) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a.plus(b)).collect(),
        }
    }

    /// `M · self` for a constant matrix `M`.
    pub fn left_mul(&self, m: &Mat) -> Self {
        assert_eq!(m.ncols(), self.rows);
        let mut out = Self::zeros(m.nrows(), self.cols);
        for i in 0..m.nrows() {
            for k in 0..self.rows {
                let c = m[(i, k)];
                if c == 0.0 {
                    continue;
                }
                for j in 0..self.cols {
                    out.data[i * self.cols + j].add_scaled(&self.data[k * self.cols + j], c);
                }
            }
        }
        out.data.iter_mut().for_each(LinExpr::compact);
        out
    }

    pub fn vstack(blocks: &[&ExprMat]) -> Self {
        let cols = blocks[0].cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for b in blocks {
            assert_eq!(b.cols, cols);
            data.extend(b.data.iter().cloned());
            rows += b.rows;
        }
        Self { rows, cols, data }
    }

    pub fn hstack(blocks: &[&ExprMat]) -> Self {
        let t: Vec<ExprMat> = blocks.iter().map(|b| b.transpose()).collect();
        let refs: Vec<&ExprMat> = t.iter().collect();
        Self::vstack(&refs).transpose()
    }

    pub fn eval(&self, x: &[f64]) -> Mat {
        Mat::from_fn(self.rows, self.cols, |i, j| self.at(i, j).eval(x))
    }
}

/// Handle to rows added by a fragment, counted within the zero-cone block
/// (which always comes first in the assembled row order).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FragmentRows {
    pub zero_rows: Vec<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct ConicBuilder {
    n_vars: usize,
    c: Vec<f64>,
    zero: Vec<LinExpr>,
    nonneg: Vec<LinExpr>,
    soc: Vec<Vec<LinExpr>>,
    psd: Vec<(usize, Vec<LinExpr>)>,
}

impl ConicBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Allocates `k` fresh variables, returning the first index.
    pub fn new_vars(&mut self, k: usize) -> usize {
        let start = self.n_vars;
        self.n_vars += k;
        self.c.resize(self.n_vars, 0.0);
        start
    }

    /// Symmetric `d×d` matrix of fresh variables (one per lower-triangle entry).
    pub fn new_sym(&mut self, d: usize) -> ExprMat {
        let start = self.new_vars(cones::svec_len(d));
        let mut m = ExprMat::zeros(d, d);
        for j in 0..d {
            for i in j..d {
                let e = LinExpr::var(start + cones::svec_index(i, j, d));
                *m.at_mut(i, j) = e.clone();
                *m.at_mut(j, i) = e;
            }
        }
        m
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn set_cost(&mut self, var: usize, coef: f64) {
        self.c[var] = coef;
    }

    /// `expr = 0`; returns the row index within the zero block.
    pub fn add_zero(&mut self, expr: LinExpr) -> usize {
        self.zero.push(expr);
        self.zero.len() - 1
    }

    /// `expr ≥ 0`.
    pub fn add_nonneg(&mut self, expr: LinExpr) {
        self.nonneg.push(expr);
    }

    /// `‖(e₁, …)‖₂ ≤ e₀`.
    pub fn add_soc(&mut self, exprs: Vec<LinExpr>) {
        assert!(!exprs.is_empty());
        self.soc.push(exprs);
    }

    /// `M ⪰ 0` for a symmetric expression matrix (the lower triangle is used).
    pub fn add_psd(&mut self, m: &ExprMat) {
        assert_eq!(m.rows, m.cols, "PSD block must be square");
        let d = m.rows;
        let mut entries = Vec::with_capacity(cones::svec_len(d));
        for j in 0..d {
            for i in j..d {
                let e = if i == j { m.at(i, i).clone() } else { m.at(i, j).scaled(std::f64::consts::SQRT_2) };
                entries.push(e);
            }
        }
        self.psd.push((d, entries));
    }

    pub fn build(&self) -> ConicProblem {
        let mut trip = Vec::new();
        let mut b = Vec::new();
        let push_row = |e: &LinExpr, trip: &mut Vec<(usize, usize, f64)>, b: &mut Vec<f64>| {
            let row = b.len();
            for &(i, c) in &e.terms {
                trip.push((row, i, -c));
            }
            b.push(e.constant);
        };
        for e in &self.zero {
            push_row(e, &mut trip, &mut b);
        }
        for e in &self.nonneg {
            push_row(e, &mut trip, &mut b);
        }
        for cone in &self.soc {
            for e in cone {
                push_row(e, &mut trip, &mut b);
            }
        }
        for (_, entries) in &self.psd {
            for e in entries {
                push_row(e, &mut trip, &mut b);
            }
        }
        let m = b.len();
        ConicProblem {
            a: CscMatrix::from_triplets(m, self.n_vars, &trip),
            b,
            c: self.c.clone(),
            cones: ConeSpec {
                zero: self.zero.len(),
                nonneg: self.nonneg.len(),
                soc: self.soc.iter().map(Vec::len).collect(),
                psd: self.psd.iter().map(|p| p.0).collect(),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConicProblem {
    pub a: CscMatrix,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub cones: ConeSpec,
}

impl ConicProblem {
    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn m(&self) -> usize {
        self.b.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIters,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConicSolution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    pub status: Status,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub iterations: usize,
}

/// `‖V‖₂ ≤ c` as `[[cI, V], [Vᵀ, cI]] ⪰ 0`.
pub fn spectral_norm_constraint(builder: &mut ConicBuilder, v: &ExprMat, bound: f64) {
    assert!(bound >= 0.0);
    let (r, c) = (v.rows, v.cols);
    let mut m = ExprMat::zeros(r + c, r + c);
    for i in 0..r + c {
        m.at_mut(i, i).constant = bound;
    }
    for i in 0..r {
        for j in 0..c {
            *m.at_mut(r + j, i) = v.at(i, j).clone();
            *m.at_mut(i, r + j) = v.at(i, j).clone();
        }
    }
    builder.add_psd(&m);
}

/// `‖Σ_k H_k z^{-k}‖_{H∞} ≤ γ` for taps `H_0..H_T` of size `p×m`, through a
/// block matrix `Q ⪰ 0` of side `p(T+1)` with block-Toeplitz trace sums and
/// the coupling `[[Q, H̄], [H̄ᵀ, I_m]] ⪰ 0`.
///
/// `gamma_sq` may be a constant or an affine expression in decision
/// variables. The returned zero rows are the `p` diagonal entries of
/// `Σ_t Q_tt = γ² I`; their right-hand side equals `−γ²` when `γ` is constant,
/// which lets a caller sweep `γ` by rewriting `b` only.
pub fn hinf_lmi_block(builder: &mut ConicBuilder, taps: &[ExprMat], gamma_sq: &LinExpr) -> FragmentRows {
    let t = taps.len() - 1;
    let (p, m) = (taps[0].rows, taps[0].cols);
    let side = p * (t + 1);
    // Q variables: lower triangle only, indexed through a helper.
    let q_start = builder.new_vars(cones::svec_len(side));
    let q = |i: usize, j: usize| LinExpr::var(q_start + cones::svec_index(i, j, side));
    let mut rows = FragmentRows::default();
    for k in 0..=t {
        for a in 0..p {
            for b in 0..p {
                if k == 0 && b < a {
                    continue;
                }
                let mut e = LinExpr::default();
                for s in 0..=t - k {
                    e.add_scaled(&q(s * p + a, (s + k) * p + b), 1.0);
                }
                if k == 0 && a == b {
                    e.add_scaled(gamma_sq, -1.0);
                    let r = builder.add_zero(e);
                    rows.zero_rows.push(r);
                } else {
                    builder.add_zero(e);
                }
            }
        }
    }
    let dim = side + m;
    let mut big = ExprMat::zeros(dim, dim);
    for i in 0..side {
        for j in 0..=i {
            *big.at_mut(i, j) = q(i, j);
            *big.at_mut(j, i) = q(i, j);
        }
    }
    for (k, h) in taps.iter().enumerate() {
        assert_eq!((h.rows, h.cols), (p, m), "taps must share a shape");
        for a in 0..p {
            for j in 0..m {
                let e = h.at(a, j).clone();
                *big.at_mut(k * p + a, side + j) = e.clone();
                *big.at_mut(side + j, k * p + a) = e;
            }
        }
    }
    for j in 0..m {
        big.at_mut(side + j, side + j).constant = 1.0;
    }
    builder.add_psd(&big);
    rows
}
