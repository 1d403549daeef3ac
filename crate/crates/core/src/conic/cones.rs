//! Cone layout and Euclidean projections.
//!
//! Rows of a conic problem are ordered zero cone, nonnegative orthant,
//! second-order cones, then PSD cones. A PSD cone of side `d` occupies
//! `d(d+1)/2` rows holding the lower triangle column by column, with
//! off-diagonal entries scaled by `√2` so that inner products are preserved.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::linalg::Mat;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConeSpec {
    pub zero: usize,
    pub nonneg: usize,
    pub soc: Vec<usize>,
    pub psd: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    Zero,
    NonNeg,
    Soc,
    Psd(usize),
}

impl ConeSpec {
    pub fn rows(&self) -> usize {
        self.zero + self.nonneg + self.soc.iter().sum::<usize>() + self.psd.iter().map(|&d| svec_len(d)).sum::<usize>()
    }

    /// `(start, len, kind)` for each block; zero and nonnegative rows form one
    /// block each.
    pub fn blocks(&self) -> Vec<(usize, usize, BlockKind)> {
        let mut out = Vec::new();
        let mut at = 0;
        if self.zero > 0 {
            out.push((at, self.zero, BlockKind::Zero));
            at += self.zero;
        }
        if self.nonneg > 0 {
            out.push((at, self.nonneg, BlockKind::NonNeg));
            at += self.nonneg;
        }
        for &q in &self.soc {
            out.push((at, q, BlockKind::Soc));
            at += q;
        }
        for &d in &self.psd {
            let len = svec_len(d);
            out.push((at, len, BlockKind::Psd(d)));
            at += len;
        }
        out
    }
}

pub fn svec_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Packs the lower triangle of a symmetric matrix.
pub fn svec(m: &Mat) -> Vec<f64> {
    let d = m.nrows();
    let mut out = Vec::with_capacity(svec_len(d));
    for j in 0..d {
        for i in j..d {
            let v = if i == j { m[(i, j)] } else { std::f64::consts::SQRT_2 * 0.5 * (m[(i, j)] + m[(j, i)]) };
            out.push(v);
        }
    }
    out
}

pub fn smat(v: &[f64], d: usize) -> Mat {
    let mut m = Mat::zeros(d, d);
    let mut k = 0;
    for j in 0..d {
        for i in j..d {
            if i == j {
                m[(i, i)] = v[k];
            } else {
                let x = v[k] * std::f64::consts::FRAC_1_SQRT_2;
                m[(i, j)] = x;
                m[(j, i)] = x;
            }
            k += 1;
        }
    }
    m
}

/// Index of entry `(i, j)` of a `d×d` symmetric matrix in its svec.
pub fn svec_index(i: usize, j: usize, d: usize) -> usize {
    let (i, j) = if i >= j { (i, j) } else { (j, i) };
    // The first j columns hold d + (d-1) + ... + (d-j+1) entries.
    j * d - j * j.saturating_sub(1) / 2 + (i - j)
}

pub fn project_soc(v: &mut [f64]) {
    let t = v[0];
    let norm = v[1..].iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= t {
        return;
    }
    if norm <= -t {
        v.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let alpha = 0.5 * (t + norm);
    v[0] = alpha;
    let s = alpha / norm;
    v[1..].iter_mut().for_each(|x| *x *= s);
}

pub fn project_psd(v: &mut [f64], d: usize) {
    if d == 1 {
        v[0] = v[0].max(0.0);
        return;
    }
    let m = smat(v, d);
    let eig = SymmetricEigen::new(m);
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return;
    }
    let mut out = Mat::zeros(d, d);
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l > 0.0 {
            let col = eig.eigenvectors.column(k);
            out.ger(l, &col, &col, 1.0);
        }
    }
    v.copy_from_slice(&svec(&out));
}

/// Projection onto the dual cone `K*` (the zero cone's dual is free).
pub fn project_dual(y: &mut [f64], spec: &ConeSpec) {
    project_blocks(y, spec, false);
}

/// Projection onto `K` itself.
pub fn project_primal(s: &mut [f64], spec: &ConeSpec) {
    project_blocks(s, spec, true);
}

fn project_blocks(v: &mut [f64], spec: &ConeSpec, primal: bool) {
    for (start, len, kind) in spec.blocks() {
        let block = &mut v[start..start + len];
        match kind {
            BlockKind::Zero => {
                if primal {
                    block.iter_mut().for_each(|x| *x = 0.0);
                }
            }
            BlockKind::NonNeg => block.iter_mut().for_each(|x| *x = x.max(0.0)),
            BlockKind::Soc => project_soc(block),
            BlockKind::Psd(d) => project_psd(block, d),
        }
    }
}

/// Distance-style violation of `K`: for PSD blocks the negated minimum
/// eigenvalue, for SOC `‖v‖ − t`, for the orthant `−min`, for zero `max|·|`.
pub fn cone_violation(s: &[f64], spec: &ConeSpec) -> f64 {
    let mut worst: f64 = 0.0;
    for (start, len, kind) in spec.blocks() {
        let block = &s[start..start + len];
        let v = match kind {
            BlockKind::Zero => block.iter().fold(0.0_f64, |m, x| m.max(x.abs())),
            BlockKind::NonNeg => block.iter().fold(0.0_f64, |m, x| m.max(-x)),
            BlockKind::Soc => block[1..].iter().map(|x| x * x).sum::<f64>().sqrt() - block[0],
            BlockKind::Psd(d) => -SymmetricEigen::new(smat(block, d)).eigenvalues.min(),
        };
        worst = worst.max(v);
    }
    worst
}
