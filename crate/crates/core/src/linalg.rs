//! Dense linear-algebra helpers shared by the solver, synthesis and
//! validation code.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Systems larger than this use power iteration for the spectral radius.
const DENSE_EIG_LIMIT: usize = 256;

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Largest absolute eigenvalue.
pub fn spectral_radius(m: &Mat) -> f64 {
    assert!(m.is_square(), "spectral radius of a non-square matrix");
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    if n <= DENSE_EIG_LIMIT {
        return m
            .clone()
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
    }
    spectral_radius_power(m, 1e-12, 100_000)
}

/// Gelfand-formula iteration `||M^k||^(1/k)` with repeated squaring guards.
/// Works for complex dominant pairs where plain power iteration oscillates.
pub fn spectral_radius_power(m: &Mat, rel_tol: f64, max_iter: usize) -> f64 {
    let n = m.nrows();
    let mut v = Vector::from_fn(n, |i, _| 1.0 + (i as f64) * 1e-3);
    v /= v.norm();
    let mut log_growth = 0.0;
    let mut estimate = f64::NAN;
    for k in 1..=max_iter {
        v = m * &v;
        let nv = v.norm();
        if nv == 0.0 {
            return 0.0;
        }
        log_growth += nv.ln();
        v /= nv;
        let next = (log_growth / k as f64).exp();
        if k > 50 && (next - estimate).abs() <= rel_tol * next.max(f64::MIN_POSITIVE) {
            return next;
        }
        estimate = next;
    }
    estimate
}

/// Largest singular value, by power iteration on `MᵀM` with a dense
/// eigen-solve fallback when the iteration stalls.
pub fn spectral_norm(m: &Mat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let gram = if m.nrows() < m.ncols() {
        m * m.transpose()
    } else {
        m.transpose() * m
    };
    let scale = gram.amax();
    if scale == 0.0 {
        return 0.0;
    }
    let n = gram.nrows();
    let mut v = Vector::from_fn(n, |i, _| 1.0 / (1.0 + i as f64));
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..500 {
        let w = &gram * &v;
        let next = v.dot(&w);
        let nw = w.norm();
        if nw == 0.0 {
            break;
        }
        v = w / nw;
        if (next - lambda).abs() <= 1e-15 * next.abs() {
            let resid = (&gram * &v - &v * next).norm();
            if resid <= 1e-7 * scale {
                return next.max(0.0).sqrt();
            }
        }
        lambda = next;
    }
    SymmetricEigen::new(gram).eigenvalues.max().max(0.0).sqrt()
}

pub fn min_singular_value(m: &Mat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.min()
}

pub fn min_eigenvalue_sym(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

pub fn max_eigenvalue_sym(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(m)).eigenvalues.max()
}

/// Principal square root of a symmetric PSD matrix (negative eigenvalues clipped).
pub fn sym_sqrt(m: &Mat) -> Mat {
    let eig = SymmetricEigen::new(symmetrize(m));
    let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * Mat::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Inverse principal square root of a symmetric PD matrix.
pub fn sym_inv_sqrt(m: &Mat) -> Option<Mat> {
    let eig = SymmetricEigen::new(symmetrize(m));
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return None;
    }
    let d = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
    Some(&eig.eigenvectors * Mat::from_diagonal(&d) * eig.eigenvectors.transpose())
}

/// Solves `P = M P Mᵀ + W` for stable `M` by squared-doubling of the series
/// `Σ M^k W (Mᵀ)^k`, followed by one residual-correction sweep.
/// Returns `None` when `ρ(M) ≥ 1`.
pub fn stein_solve(m: &Mat, w: &Mat) -> Option<Mat> {
    if spectral_radius(m) >= 1.0 {
        return None;
    }
    let p = stein_doubling(m, w);
    // One refinement pass on the residual equation recovers the bits lost in
    // the doubling sums when ρ(M) is close to one.
    let resid = m * &p * m.transpose() + w - &p;
    let correction = stein_doubling(m, &resid);
    Some(symmetrize(&(p + correction)))
}

fn stein_doubling(m: &Mat, w: &Mat) -> Mat {
    let mut a = m.clone();
    let mut p = w.clone();
    for _ in 0..200 {
        let step = &a * &p * a.transpose();
        let step_norm = step.amax();
        p += step;
        a = &a * &a;
        if step_norm <= 1e-18 * p.amax().max(f64::MIN_POSITIVE) || a.amax() < 1e-300 {
            break;
        }
    }
    p
}

/// `σ_max` of the transfer matrix `Σ_k H_k e^{-i k θ}` at one frequency,
/// computed through the real embedding `[[X, -Y], [Y, X]]`.
pub fn fir_gain_at(taps: &[Mat], theta: f64) -> f64 {
    let (r, c) = taps.first().map(|t| t.shape()).unwrap_or((0, 0));
    let mut re = Mat::zeros(r, c);
    let mut im = Mat::zeros(r, c);
    for (k, h) in taps.iter().enumerate() {
        let phase = -(k as f64) * theta;
        re += h * phase.cos();
        im += h * phase.sin();
    }
    let mut big = Mat::zeros(2 * r, 2 * c);
    big.view_mut((0, 0), (r, c)).copy_from(&re);
    big.view_mut((r, c), (r, c)).copy_from(&re);
    big.view_mut((0, c), (r, c)).copy_from(&(-&im));
    big.view_mut((r, 0), (r, c)).copy_from(&im);
    spectral_norm(&big)
}

/// H∞ norm of an FIR filter `Σ_{k≥0} taps[k] z^{-k}` evaluated on a uniform
/// grid of `grid` points on `[0, π]` (real coefficients make the response
/// conjugate-symmetric) and refined by golden-section around the best point.
pub fn fir_hinf_norm(taps: &[Mat], grid: usize) -> f64 {
    if taps.is_empty() {
        return 0.0;
    }
    let grid = grid.max(2);
    let step = std::f64::consts::PI / (grid - 1) as f64;
    let mut best = (0.0, f64::NEG_INFINITY);
    for i in 0..grid {
        let th = i as f64 * step;
        let g = fir_gain_at(taps, th);
        if g > best.1 {
            best = (th, g);
        }
    }
    let (mut lo, mut hi) = ((best.0 - step).max(0.0), (best.0 + step).min(std::f64::consts::PI));
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = fir_gain_at(taps, x1);
    let mut f2 = fir_gain_at(taps, x2);
    for _ in 0..60 {
        if f1 > f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = fir_gain_at(taps, x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = fir_gain_at(taps, x2);
        }
    }
    best.1.max(f1).max(f2)
}

/// `ℓ∞ → ℓ∞` gain of an FIR map: the max absolute row sum of the
/// horizontally stacked taps.
pub fn fir_l1_norm(taps: &[Mat]) -> f64 {
    let rows = taps.first().map(|t| t.nrows()).unwrap_or(0);
    (0..rows)
        .map(|i| {
            taps.iter()
                .map(|t| t.row(i).iter().map(|v| v.abs()).sum::<f64>())
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

/// Max absolute row sum of a matrix (the `ℓ∞` induced norm).
pub fn inf_norm(m: &Mat) -> f64 {
    fir_l1_norm(std::slice::from_ref(m))
}

pub fn is_symmetric(m: &Mat, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= tol * (1.0 + m.amax())
}
