//! Compressed sparse column storage and a sparse LDLᵀ factorization for the
//! quasi-definite normal matrix `I + AᵀA`.

use std::collections::BTreeSet;

#[derive(Clone, Debug, PartialEq)]
pub struct CscMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub colptr: Vec<usize>,
    pub rowval: Vec<usize>,
    pub nzval: Vec<f64>,
}

impl CscMatrix {
    /// Builds from `(row, col, value)` triplets, summing duplicates and
    /// dropping exact zeros.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        let mut colptr = vec![0usize; ncols + 1];
        let mut rowval = Vec::with_capacity(sorted.len());
        let mut nzval: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        let mut cols = Vec::with_capacity(sorted.len());
        for (r, c, v) in sorted {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *nzval.last_mut().unwrap() += v;
            } else {
                rowval.push(r);
                nzval.push(v);
                cols.push(c);
                last = Some((r, c));
            }
        }
        let mut keep_rows = Vec::with_capacity(rowval.len());
        let mut keep_vals = Vec::with_capacity(rowval.len());
        for ((r, v), c) in rowval.into_iter().zip(nzval).zip(cols) {
            if v != 0.0 {
                keep_rows.push(r);
                keep_vals.push(v);
                colptr[c + 1] += 1;
            }
        }
        for j in 0..ncols {
            colptr[j + 1] += colptr[j];
        }
        Self { nrows, ncols, colptr, rowval: keep_rows, nzval: keep_vals }
    }

    pub fn nnz(&self) -> usize {
        self.nzval.len()
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for j in 0..self.ncols {
            for p in self.colptr[j]..self.colptr[j + 1] {
                out.push((self.rowval[p], j, self.nzval[p]));
            }
        }
        out
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        self.mul_vec_add(x, y);
    }

    /// `y += A x`.
    pub fn mul_vec_add(&self, x: &[f64], y: &mut [f64]) {
        for j in 0..self.ncols {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            for p in self.colptr[j]..self.colptr[j + 1] {
                y[self.rowval[p]] += self.nzval[p] * xj;
            }
        }
    }

    /// `y = Aᵀ x`.
    pub fn tmul_vec(&self, x: &[f64], y: &mut [f64]) {
        for j in 0..self.ncols {
            let mut acc = 0.0;
            for p in self.colptr[j]..self.colptr[j + 1] {
                acc += self.nzval[p] * x[self.rowval[p]];
            }
            y[j] = acc;
        }
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<(usize, usize, f64)> =
            self.triplets().into_iter().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, &t)
    }

    /// Scales row `i` by `d[i]` and column `j` by `e[j]`.
    pub fn scale(&mut self, d: &[f64], e: &[f64]) {
        for j in 0..self.ncols {
            for p in self.colptr[j]..self.colptr[j + 1] {
                self.nzval[p] *= d[self.rowval[p]] * e[j];
            }
        }
    }

    /// `diag·I + AᵀA` as a full symmetric CSC matrix.
    pub fn normal_matrix(&self, diag: f64) -> CscMatrix {
        let at = self.transpose();
        // Row i of A is column i of Aᵀ; each pair of columns sharing a row
        // contributes to (AᵀA).
        let mut trip: Vec<(usize, usize, f64)> = (0..self.ncols).map(|j| (j, j, diag)).collect();
        for i in 0..at.ncols {
            let range = at.colptr[i]..at.colptr[i + 1];
            for p in range.clone() {
                for q in range.clone() {
                    trip.push((at.rowval[p], at.rowval[q], at.nzval[p] * at.nzval[q]));
                }
            }
        }
        CscMatrix::from_triplets(self.ncols, self.ncols, &trip)
    }
}

/// Greedy minimum-degree ordering on the explicit elimination graph of a
/// symmetric pattern. Quadratic in the worst case, fine for a few thousand
/// columns.
pub fn minimum_degree_order(sym: &CscMatrix) -> Vec<usize> {
    let n = sym.ncols;
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for j in 0..n {
        for p in sym.colptr[j]..sym.colptr[j + 1] {
            let i = sym.rowval[p];
            if i != j {
                adj[i].insert(j);
                adj[j].insert(i);
            }
        }
    }
    let mut eliminated = vec![false; n];
    // Buckets keyed by degree.
    let mut by_degree: BTreeSet<(usize, usize)> = (0..n).map(|v| (adj[v].len(), v)).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(&(deg, v)) = by_degree.iter().next() {
        by_degree.remove(&(deg, v));
        eliminated[v] = true;
        order.push(v);
        let nbrs: Vec<usize> = adj[v].iter().copied().filter(|&u| !eliminated[u]).collect();
        for &u in &nbrs {
            by_degree.remove(&(adj[u].len(), u));
            adj[u].remove(&v);
        }
        for (a, &u) in nbrs.iter().enumerate() {
            for &w in &nbrs[a + 1..] {
                adj[u].insert(w);
                adj[w].insert(u);
            }
        }
        for &u in &nbrs {
            by_degree.insert((adj[u].len(), u));
        }
        adj[v].clear();
    }
    order
}

/// `P K Pᵀ = L D Lᵀ` with unit lower-triangular `L`, after Davis' LDL.
#[derive(Clone, Debug)]
pub struct LdlFactor {
    n: usize,
    perm: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
}

impl LdlFactor {
    /// Factors a full symmetric matrix. Returns `None` on a zero pivot.
    pub fn new(k: &CscMatrix) -> Option<Self> {
        let perm = minimum_degree_order(k);
        Self::with_order(k, perm)
    }

    pub fn with_order(k: &CscMatrix, perm: Vec<usize>) -> Option<Self> {
        let n = k.ncols;
        let mut pinv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            pinv[old] = new;
        }
        const NONE: usize = usize::MAX;
        let mut parent = vec![NONE; n];
        let mut flag = vec![0usize; n];
        let mut lnz = vec![0usize; n];
        for kk in 0..n {
            flag[kk] = kk;
            let col = perm[kk];
            for p in k.colptr[col]..k.colptr[col + 1] {
                let mut i = pinv[k.rowval[p]];
                if i < kk {
                    while flag[i] != kk {
                        if parent[i] == NONE {
                            parent[i] = kk;
                        }
                        lnz[i] += 1;
                        flag[i] = kk;
                        i = parent[i];
                    }
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for j in 0..n {
            lp[j + 1] = lp[j] + lnz[j];
        }
        let total = lp[n];
        let mut li = vec![0usize; total];
        let mut lx = vec![0.0; total];
        let mut d = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut pattern = vec![0usize; n];
        lnz.iter_mut().for_each(|v| *v = 0);
        for kk in 0..n {
            y[kk] = 0.0;
            let mut top = n;
            flag[kk] = kk;
            let col = perm[kk];
            for p in k.colptr[col]..k.colptr[col + 1] {
                let mut i = pinv[k.rowval[p]];
                if i <= kk {
                    y[i] += k.nzval[p];
                    let mut len = 0;
                    while flag[i] != kk {
                        pattern[len] = i;
                        len += 1;
                        flag[i] = kk;
                        i = parent[i];
                    }
                    while len > 0 {
                        top -= 1;
                        len -= 1;
                        pattern[top] = pattern[len];
                    }
                }
            }
            d[kk] = y[kk];
            y[kk] = 0.0;
            while top < n {
                let i = pattern[top];
                let yi = y[i];
                y[i] = 0.0;
                let end = lp[i] + lnz[i];
                for p in lp[i]..end {
                    y[li[p]] -= lx[p] * yi;
                }
                let l_ki = yi / d[i];
                d[kk] -= l_ki * yi;
                li[end] = kk;
                lx[end] = l_ki;
                lnz[i] += 1;
                top += 1;
            }
            if d[kk] == 0.0 || !d[kk].is_finite() {
                return None;
            }
        }
        Some(Self { n, perm, lp, li, lx, d })
    }

    pub fn nnz(&self) -> usize {
        self.lx.len()
    }

    /// Solves `K x = b` in place.
    pub fn solve(&self, b: &mut [f64], work: &mut Vec<f64>) {
        let n = self.n;
        work.resize(n, 0.0);
        for k in 0..n {
            work[k] = b[self.perm[k]];
        }
        for j in 0..n {
            let xj = work[j];
            for p in self.lp[j]..self.lp[j + 1] {
                work[self.li[p]] -= self.lx[p] * xj;
            }
        }
        for j in 0..n {
            work[j] /= self.d[j];
        }
        for j in (0..n).rev() {
            let mut acc = work[j];
            for p in self.lp[j]..self.lp[j + 1] {
                acc -= self.lx[p] * work[self.li[p]];
            }
            work[j] = acc;
        }
        for k in 0..n {
            b[self.perm[k]] = work[k];
        }
    }
}
