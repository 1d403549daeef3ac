//! Numerical checks of the lemma-level identities and bounds behind the
//! regret analysis. Every check returns the statistic it measured next to
//! the bound it is compared with.

use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::linalg::{self, Mat, Vector};
use crate::linsys::{self, LinearSystem};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct CancelCheck {
    pub lhs: f64,
    /// The closed form with the `P`-weighted cross terms.
    pub rhs: f64,
    pub deviation: f64,
    /// `Σ_j ν_jᵀ(BᵀPB+R)ν_j` alone. The input-cost coupling
    /// `2ν_iᵀBᵀ(Mᵀ)^{j−i−1}KᵀRν_j` cancels those cross terms exactly because
    /// `KᵀR = −MᵀPB`, so this is what the excess cost really equals.
    pub rhs_diagonal: f64,
    pub deviation_diagonal: f64,
}

/// Covariance of `x₀`: the stationary covariance of the optimal closed loop.
pub fn stationary_covariance(sys: &LinearSystem, m: &Mat) -> Result<Mat> {
    let n = sys.n();
    linsys::lyapunov_solve(m, &(Mat::identity(n, n) * sys.sigma_w.powi(2)))
}

/// `E[x_TᵀP⋆x_T + Σ_{t<T} x_tᵀQx_t + u_tᵀRu_t]` under `u_t = K⋆x_t + ν_t`,
/// `x₀ ~ N(0, Σ₀)`, by exact mean and covariance propagation.
pub fn finite_horizon_cost(sys: &LinearSystem, p: &Mat, k: &Mat, sigma0: &Mat, nu: &[Vector]) -> f64 {
    let n = sys.n();
    let m = &sys.a + &sys.b * k;
    let w = Mat::identity(n, n) * sys.sigma_w.powi(2);
    let mut mean = Vector::zeros(n);
    let mut cov = sigma0.clone();
    let mut total = 0.0;
    for v in nu {
        let u_mean = k * &mean + v;
        total += mean.dot(&(&sys.q * &mean)) + (&sys.q * &cov).trace();
        total += u_mean.dot(&(&sys.r * &u_mean)) + (k.transpose() * &sys.r * k * &cov).trace();
        mean = &m * &mean + &sys.b * v;
        cov = &m * &cov * m.transpose() + &w;
    }
    total + mean.dot(&(p * &mean)) + (p * &cov).trace()
}

/// Sample-average version of [`finite_horizon_cost`], returning the mean
/// and its standard error.
pub fn finite_horizon_cost_mc<R: Rng + ?Sized>(
    sys: &LinearSystem,
    p: &Mat,
    k: &Mat,
    sigma0: &Mat,
    nu: &[Vector],
    samples: usize,
    rng: &mut R,
) -> (f64, f64) {
    let n = sys.n();
    let l0 = nalgebra::Cholesky::new(linalg::symmetrize(sigma0)).map(|c| c.l()).unwrap_or_else(|| linalg::sym_sqrt(sigma0));
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        let mut x = &l0 * rng::gaussian_vector(rng, n, 1.0);
        let mut cost = 0.0;
        for v in nu {
            let u = k * &x + v;
            cost += x.dot(&(&sys.q * &x)) + u.dot(&(&sys.r * &u));
            x = &sys.a * &x + &sys.b * u + rng::gaussian_vector(rng, n, sys.sigma_w);
        }
        cost += x.dot(&(p * &x));
        sum += cost;
        sum_sq += cost * cost;
    }
    let s = samples as f64;
    let mean = sum / s;
    let var = (sum_sq / s - mean * mean).max(0.0) * s / (s - 1.0).max(1.0);
    (mean, (var / s).sqrt())
}

/// Excess finite-horizon cost of deterministic input deviations `ν`
/// against its closed form
/// `Σ_j ν_jᵀ(BᵀPB+R)ν_j + 2Σ_{i<j} ν_iᵀBᵀ(Mᵀ)^{j−i}PBν_j`.
pub fn check_cancel_identity(sys: &LinearSystem, nu: &[Vector]) -> Result<CancelCheck> {
    let lqr = linsys::dare_default(sys)?;
    let (p, k) = (&lqr.p, &lqr.k);
    let m = &sys.a + &sys.b * k;
    let sigma0 = stationary_covariance(sys, &m)?;
    let zero = vec![Vector::zeros(sys.p()); nu.len()];
    let lhs = finite_horizon_cost(sys, p, k, &sigma0, nu) - finite_horizon_cost(sys, p, k, &sigma0, &zero);

    let h = sys.b.transpose() * p * &sys.b + &sys.r;
    let diag: f64 = nu.iter().map(|v| v.dot(&(&h * v))).sum();
    let mut rhs = diag;
    for (j, vj) in nu.iter().enumerate() {
        let pbv = p * &sys.b * vj;
        // (Mᵀ)^{j−i} P B ν_j for i = j−1, j−2, …
        let mut acc = pbv;
        for i in (0..j).rev() {
            acc = m.transpose() * acc;
            rhs += 2.0 * nu[i].dot(&(sys.b.transpose() * &acc));
        }
    }
    Ok(CancelCheck { lhs, rhs, deviation: (lhs - rhs).abs(), rhs_diagonal: diag, deviation_diagonal: (lhs - diag).abs() })
}

/// `Σ_{k=0}^{m} (Mᵀ)^k N M^k`.
fn weighted_sum(m: &Mat, n: &Mat, upto: usize) -> Mat {
    let mut s = n.clone();
    let mut term = n.clone();
    for _ in 0..upto {
        term = m.transpose() * term * m;
        s += &term;
    }
    s
}

/// The `nT × nT` block matrix with diagonal blocks `S_{T−j}`, upper blocks
/// `(Mᵀ)^{j−i} S_{T−j}` and lower blocks `S_{T−i} M^{i−j}`, where
/// `S_m = Σ_{k=0}^{m} (Mᵀ)^k N M^k` (blocks indexed from 1).
pub fn psd_block_matrix(m: &Mat, n_mat: &Mat, t: usize) -> Mat {
    let n = m.nrows();
    let mut d = Mat::zeros(n * t, n * t);
    let mut pow = vec![Mat::identity(n, n)];
    for k in 1..t {
        let next = &pow[k - 1] * m;
        pow.push(next);
    }
    for i in 1..=t {
        for j in 1..=t {
            let block = if i <= j {
                pow[j - i].transpose() * weighted_sum(m, n_mat, t - j)
            } else {
                weighted_sum(m, n_mat, t - i) * &pow[i - j]
            };
            d.view_mut(((i - 1) * n, (j - 1) * n), (n, n)).copy_from(&block);
        }
    }
    d
}

/// Minimum eigenvalue of the symmetrized [`psd_block_matrix`].
pub fn check_psd_block(m: &Mat, n_mat: &Mat, t: usize) -> f64 {
    linalg::min_eigenvalue_sym(&psd_block_matrix(m, n_mat, t))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
}

impl BoundCheck {
    /// `lhs ≥ rhs` up to `tol·(1 + |rhs|)`.
    pub fn holds(&self, tol: f64) -> bool {
        self.lhs >= self.rhs - tol * (1.0 + self.rhs.abs())
    }
}

/// `Σ‖ν_t‖²` against `(1 + σ_min(K)²)·λ_min(Σ z_t z_tᵀ)` for
/// `z_t = [x_t; K x_t + ν_t]`.
pub fn check_perturbation_bound(k: &Mat, states: &[Vector], nu: &[Vector]) -> BoundCheck {
    let (n, p) = (k.ncols(), k.nrows());
    let mut gram = Mat::zeros(n + p, n + p);
    let mut energy = 0.0;
    for (x, v) in states.iter().zip(nu) {
        let z = crate::sysid::regressor(x, &(k * x + v));
        gram.ger(1.0, &z, &z, 1.0);
        energy += v.norm_squared();
    }
    let s_min = if p <= n { linalg::min_singular_value(k) } else { 0.0 };
    BoundCheck { lhs: energy, rhs: (1.0 + s_min * s_min) * linalg::min_eigenvalue_sym(&gram) }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RiccatiRate {
    /// `‖P_t − P⋆‖` for `t = 0..=T`, starting from `P₀ = 0`.
    pub errors: Vec<f64>,
    /// Largest `e_{t+1}/e_t` over the second half (`0` once errors vanish).
    pub tail_ratio: f64,
}

impl RiccatiRate {
    pub fn geometric(&self) -> bool {
        self.tail_ratio < 1.0
    }
}

pub fn check_riccati_rate(sys: &LinearSystem, t: usize) -> Result<RiccatiRate> {
    let p_star = linsys::dare_solve(sys, 1e-14, 1_000_000)?.p;
    let n = sys.n();
    let mut p = Mat::zeros(n, n);
    let mut errors = vec![linalg::spectral_norm(&(&p - &p_star))];
    for _ in 0..t {
        p = linsys::riccati_map(sys, &p).ok_or(crate::Error::Unstabilizable)?;
        errors.push(linalg::spectral_norm(&(&p - &p_star)));
    }
    let tail_ratio = errors[t / 2..]
        .windows(2)
        .map(|w| if w[0] > 1e-10 * (1.0 + linalg::spectral_norm(&p_star)) { w[1] / w[0] } else { 0.0 })
        .fold(0.0, f64::max);
    Ok(RiccatiRate { errors, tail_ratio })
}

/// Grid H∞ norm of an FIR filter against `C/(1−ρ)`. Returns `None` when the
/// filter is not inside the decay class.
pub fn check_hinf_decay_bound(taps: &[Mat], c: f64, rho: f64) -> Option<BoundCheck> {
    let inside = taps.iter().enumerate().all(|(k, g)| linalg::spectral_norm(g) <= c * rho.powi(k as i32) * (1.0 + 1e-12));
    if !inside || !(rho < 1.0) {
        return None;
    }
    // lhs is the bound here so `holds` reads bound ≥ norm.
    Some(BoundCheck { lhs: c / (1.0 - rho), rhs: linalg::fir_hinf_norm(taps, 512) })
}

/// `λ_min([[Σ, ΣKᵀ], [KΣ, KΣKᵀ + σ_u²I]])` against
/// `σ_u²·min(1/2, λ_min(Σ)/(2‖KΣKᵀ‖ + σ_u²))`.
pub fn check_schur_lemma(sigma: &Mat, k: &Mat, sigma_u: f64) -> BoundCheck {
    let (n, p) = (sigma.nrows(), k.nrows());
    let ks = k * sigma;
    let ksk = &ks * k.transpose();
    let mut big = Mat::zeros(n + p, n + p);
    big.view_mut((0, 0), (n, n)).copy_from(sigma);
    big.view_mut((0, n), (n, p)).copy_from(&ks.transpose());
    big.view_mut((n, 0), (p, n)).copy_from(&ks);
    big.view_mut((n, n), (p, p)).copy_from(&(&ksk + Mat::identity(p, p) * sigma_u.powi(2)));
    let s2 = sigma_u * sigma_u;
    let rhs = if s2 == 0.0 {
        0.0
    } else {
        s2 * 0.5f64.min(linalg::min_eigenvalue_sym(sigma) / (2.0 * linalg::spectral_norm(&ksk) + s2))
    };
    BoundCheck { lhs: linalg::min_eigenvalue_sym(&big), rhs }
}

/// One line of the suite report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub instances: usize,
    /// Worst value of the check statistic over the instances.
    pub worst: f64,
    pub passed: bool,
}

fn random_stable(rng: &mut impl Rng, n: usize, radius: f64) -> Mat {
    let a = rng::gaussian_matrix(rng, n, n);
    let r = linalg::spectral_radius(&a).max(1e-6);
    a * (radius / r)
}

fn random_pd(rng: &mut impl Rng, n: usize) -> Mat {
    let g = rng::gaussian_matrix(rng, n, n);
    &g * g.transpose() + Mat::identity(n, n) * 0.1
}

/// Random system with `A` at spectral radius 1.1 and a generic `B`.
pub fn random_system(rng: &mut impl Rng, n: usize, p: usize) -> LinearSystem {
    let a = random_stable(rng, n, 1.1);
    let b = rng::gaussian_matrix(rng, n, p);
    let (q, r) = (random_pd(rng, n), random_pd(rng, p));
    LinearSystem::new(a, b, q, r, 1.0).expect("shapes are consistent")
}

/// Random FIR filter with `‖G(k)‖ ≤ Cρ^k`.
pub fn random_decay_filter(rng: &mut impl Rng, len: usize, rows: usize, cols: usize, c: f64, rho: f64) -> Vec<Mat> {
    (0..len)
        .map(|k| {
            let g = rng::gaussian_matrix(rng, rows, cols);
            let scale: f64 = rng.random_range(0.0..1.0) * c * rho.powi(k as i32);
            let norm = linalg::spectral_norm(&g).max(1e-12);
            g * (scale / norm)
        })
        .collect()
}

/// Runs every check on seeded random instances (counts as in the
/// acceptance criteria).
pub fn run_suite(seed: u64) -> Vec<CheckReport> {
    let mut out = Vec::new();
    let mut rng = rng::trial_rng(seed, 0);

    let (mut worst, mut worst_diag) = (0.0f64, 0.0f64);
    let mut ok = true;
    for _ in 0..20 {
        let n = rng.random_range(1..=3);
        let p = rng.random_range(1..=2);
        let sys = random_system(&mut rng, n, p);
        let t = rng.random_range(1..=8);
        let nu: Vec<Vector> = (0..t).map(|_| rng::gaussian_vector(&mut rng, p, 1.0)).collect();
        match check_cancel_identity(&sys, &nu) {
            Ok(c) => {
                worst = worst.max(c.deviation / (1.0 + c.rhs.abs()));
                worst_diag = worst_diag.max(c.deviation_diagonal / (1.0 + c.rhs_diagonal.abs()));
            }
            Err(_) => ok = false,
        }
    }
    out.push(CheckReport { name: "cancel_identity".into(), instances: 20, worst, passed: ok && worst <= 1e-8 });
    out.push(CheckReport {
        name: "cancel_identity_diagonal".into(),
        instances: 20,
        worst: worst_diag,
        passed: ok && worst_diag <= 1e-8,
    });

    let mut worst = f64::INFINITY;
    for _ in 0..50 {
        let n = rng.random_range(1..=3);
        let radius = rng.random_range(0.0..0.99);
        let m = random_stable(&mut rng, n, radius);
        let nm = random_pd(&mut rng, n);
        let t = rng.random_range(1..=6);
        worst = worst.min(check_psd_block(&m, &nm, t));
    }
    out.push(CheckReport { name: "psd_block".into(), instances: 50, worst, passed: worst >= -1e-8 });

    let mut worst = f64::INFINITY;
    let mut ok = true;
    for _ in 0..50 {
        let n = rng.random_range(1..=4);
        let p = rng.random_range(1..=4);
        let sigma = random_pd(&mut rng, n);
        let k = rng::gaussian_matrix(&mut rng, p, n);
        let su = rng.random_range(0.0..2.0);
        let c = check_schur_lemma(&sigma, &k, su);
        worst = worst.min(c.lhs - c.rhs);
        ok &= c.holds(1e-10);
    }
    out.push(CheckReport { name: "schur_lemma".into(), instances: 50, worst, passed: ok });

    let mut worst = f64::INFINITY;
    let mut ok = true;
    for _ in 0..50 {
        let len = rng.random_range(1..=6);
        let c = rng.random_range(0.5..3.0);
        let rho = rng.random_range(0.1..0.95);
        let taps = random_decay_filter(&mut rng, len, 2, 2, c, rho);
        match check_hinf_decay_bound(&taps, c, rho) {
            Some(b) => {
                worst = worst.min(b.lhs - b.rhs);
                ok &= b.lhs + 1e-9 >= b.rhs;
            }
            None => ok = false,
        }
    }
    out.push(CheckReport { name: "hinf_decay_bound".into(), instances: 50, worst, passed: ok });

    let mut worst = f64::INFINITY;
    let mut ok = true;
    for _ in 0..20 {
        let sys = random_system(&mut rng, 2, 1);
        let Ok(k) = linsys::dare_default(&sys).map(|s| s.k) else { continue };
        let states: Vec<Vector> = (0..30).map(|_| rng::gaussian_vector(&mut rng, 2, 1.0)).collect();
        let nu: Vec<Vector> = (0..30).map(|_| rng::gaussian_vector(&mut rng, 1, 1.0)).collect();
        let b = check_perturbation_bound(&k, &states, &nu);
        worst = worst.min(b.lhs - b.rhs);
        ok &= b.holds(1e-10);
    }
    out.push(CheckReport { name: "perturbation_bound".into(), instances: 20, worst, passed: ok });

    let mut worst: f64 = 0.0;
    let mut ok = true;
    for _ in 0..20 {
        let n = rng.random_range(1..=3);
        let sys = random_system(&mut rng, n, 1);
        match check_riccati_rate(&sys, 200) {
            Ok(r) => {
                worst = worst.max(r.tail_ratio);
                ok &= r.geometric();
            }
            Err(_) => ok = false,
        }
    }
    out.push(CheckReport { name: "riccati_rate".into(), instances: 20, worst, passed: ok });
    out
}
