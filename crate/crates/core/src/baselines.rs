//! Optimistic (projected gradient), Thompson sampling and certainty
//! equivalent controllers, and the determinant-based epoch switch.

use nalgebra::SymmetricEigen;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::linsys::{self, LinearSystem};
use crate::rng;
use crate::sysid::{split_theta, ConfidenceEllipsoid, ParamEstimate};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchParams {
    pub min_epoch: usize,
    pub det_factor: f64,
}

impl Default for SwitchParams {
    fn default() -> Self {
        Self { min_epoch: 10, det_factor: 2.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OfuConfig {
    pub armijo_shrink: f64,
    pub armijo_c: f64,
    pub initial_step: f64,
    pub max_iters: usize,
    /// Stop once the projected-gradient norm drops below `grad_tol·(1+|J|)`.
    pub grad_tol: f64,
    pub projection_tol: f64,
    pub random_starts: usize,
    pub switch: SwitchParams,
}

impl Default for OfuConfig {
    fn default() -> Self {
        Self {
            armijo_shrink: 0.5,
            armijo_c: 1e-4,
            initial_step: 1e-2,
            max_iters: 200,
            grad_tol: 1e-6,
            projection_tol: 1e-12,
            random_starts: 20,
            switch: SwitchParams::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TsConfig {
    pub tau: usize,
    pub max_resamples: usize,
    pub switch: SwitchParams,
}

impl Default for TsConfig {
    fn default() -> Self {
        Self { tau: 500, max_resamples: 50, switch: SwitchParams::default() }
    }
}

/// `J(A, B) = Tr(P(A, B))` and the optimal gain, or `None` where the DARE
/// fails.
pub fn ofu_objective(costs: &LinearSystem, theta: &Mat) -> Option<(f64, linsys::LqrSolution)> {
    let (a, b) = split_theta(theta, costs.n());
    let sys = costs.with_dynamics(a, b);
    let sol = linsys::dare_solve(&sys, 1e-12, 100_000).ok()?;
    let j = sol.p.trace();
    j.is_finite().then_some((j, sol))
}

/// Gradient of `Θ ↦ Tr(P(A, B))`.
///
/// Entry `(i, j)` is `Tr(E_ij)` with `E_ij = A_cᵀE_ijA_c + 2Sym(A_cᵀPe_ie_jᵀL)`
/// and `L = [I; K]`. Summing the Lyapunov series against the identity gives
/// all entries at once: `D = 2 P A_c Y Lᵀ` with `Y = A_c Y A_cᵀ + I`.
pub fn ofu_cost_gradient(costs: &LinearSystem, theta: &Mat) -> Result<Mat> {
    let (_, sol) = ofu_objective(costs, theta).ok_or(Error::Unstabilizable)?;
    gradient_at(costs, theta, &sol)
}

fn gradient_at(costs: &LinearSystem, theta: &Mat, sol: &linsys::LqrSolution) -> Result<Mat> {
    let n = costs.n();
    let (a, b) = split_theta(theta, n);
    let ac = &a + &b * &sol.k;
    let y = linsys::lyapunov_solve(&ac, &Mat::identity(n, n)).map_err(|_| Error::Unstabilizable)?;
    let mut l = Mat::zeros(theta.ncols(), n);
    l.view_mut((0, 0), (n, n)).fill_with_identity();
    l.view_mut((n, 0), (b.ncols(), n)).copy_from(&sol.k);
    Ok(2.0 * &sol.p * ac * y * l.transpose())
}

/// Frobenius projection onto the ellipsoid. With `Z = UΛUᵀ` the projection
/// is `Θ̂ + D U diag(1/(1+μλ)) Uᵀ` where `D = Θ − Θ̂` and `μ ≥ 0` solves the
/// secular equation `Σ_k λ_k‖(DU)_k‖²/(1+μλ_k)² = ε`.
pub fn project_ellipsoid(theta: &Mat, ell: &ConfidenceEllipsoid) -> Mat {
    project_with_tol(theta, ell, 1e-12)
}

fn project_with_tol(theta: &Mat, ell: &ConfidenceEllipsoid, tol: f64) -> Mat {
    if ell.membership(theta) <= ell.eps {
        return theta.clone();
    }
    if ell.eps <= 0.0 {
        return ell.theta_hat.clone();
    }
    let eig = SymmetricEigen::new(linalg::symmetrize(&ell.z));
    let d = theta - &ell.theta_hat;
    let du = &d * &eig.eigenvectors;
    let lam: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0)).collect();
    let weights: Vec<f64> = (0..lam.len()).map(|k| du.column(k).norm_squared()).collect();
    let g = |mu: f64| -> (f64, f64) {
        let mut val = -ell.eps;
        let mut der = 0.0;
        for (l, w) in lam.iter().zip(&weights) {
            let s = 1.0 + mu * l;
            val += l * w / (s * s);
            der -= 2.0 * l * l * w / (s * s * s);
        }
        (val, der)
    };
    // g is convex and decreasing, so Newton from the left never overshoots;
    // the bracket guards against rounding.
    let (mut lo, mut hi) = (0.0, 1.0);
    while g(hi).0 > 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    let mut mu = lo;
    for _ in 0..200 {
        let (val, der) = g(mu);
        if val.abs() <= tol * ell.eps {
            break;
        }
        let mut next = if der < 0.0 { mu - val / der } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if g(next).0 > 0.0 {
            lo = next;
        } else {
            hi = next;
        }
        if (hi - lo) <= 1e-16 * hi {
            mu = next;
            break;
        }
        mu = next;
    }
    let scale = Mat::from_diagonal(&nalgebra::DVector::from_iterator(lam.len(), lam.iter().map(|l| 1.0 / (1.0 + mu * l))));
    &ell.theta_hat + du * scale * eig.eigenvectors.transpose()
}

/// Uniform draw from the ellipsoid:
/// `Θ̂ + √ε·(U^{1/d}/‖η‖_F)·η·Z^{−1/2}` with `d = n(n+p)`.
pub fn ts_sample<R: Rng + ?Sized>(ell: &ConfidenceEllipsoid, rng: &mut R) -> Mat {
    if ell.eps <= 0.0 {
        return ell.theta_hat.clone();
    }
    let (rows, cols) = ell.theta_hat.shape();
    let eta = rng::gaussian_matrix(rng, rows, cols);
    let u: f64 = rng.random();
    let d = (rows * cols) as f64;
    let z_inv_half = linalg::sym_inv_sqrt(&ell.z).expect("ellipsoid Gram must be positive definite");
    let radius = ell.eps.sqrt() * u.powf(1.0 / d) / eta.norm();
    &ell.theta_hat + eta * radius * z_inv_half
}

/// Result of the optimistic search.
#[derive(Clone, Debug)]
pub struct OfuSelection {
    pub theta: Mat,
    pub gain: Mat,
    pub objective: f64,
    /// Objective at the start point and after every accepted step.
    pub history: Vec<f64>,
}

/// Projected gradient descent on `Tr(P)` over the ellipsoid, started at the
/// cheapest stabilizable point among `Θ̂`, `previous` and random draws.
pub fn ofu_select<R: Rng + ?Sized>(
    ell: &ConfidenceEllipsoid,
    costs: &LinearSystem,
    previous: Option<&Mat>,
    cfg: &OfuConfig,
    rng: &mut R,
) -> Result<OfuSelection> {
    let mut candidates = vec![ell.theta_hat.clone()];
    if let Some(p) = previous {
        candidates.push(project_with_tol(p, ell, cfg.projection_tol));
    }
    for _ in 0..cfg.random_starts {
        candidates.push(ts_sample(ell, rng));
    }
    let mut best: Option<(Mat, f64, linsys::LqrSolution)> = None;
    for c in candidates {
        if let Some((j, sol)) = ofu_objective(costs, &c) {
            if best.as_ref().is_none_or(|b| j < b.1) {
                best = Some((c, j, sol));
            }
        }
    }
    let (mut theta, mut j, mut sol) = best.ok_or(Error::NoStabilizablePoint)?;
    let mut history = vec![j];
    for _ in 0..cfg.max_iters {
        let Ok(grad) = gradient_at(costs, &theta, &sol) else { break };
        let full = project_with_tol(&(&theta - &grad), ell, cfg.projection_tol);
        if (&full - &theta).norm() < cfg.grad_tol * (1.0 + j.abs()) {
            break;
        }
        let mut step = cfg.initial_step;
        let mut accepted = None;
        while step > 1e-14 {
            let trial = project_with_tol(&(&theta - &grad * step), ell, cfg.projection_tol);
            let decrease = grad.dot(&(&theta - &trial));
            if let Some((jt, st)) = ofu_objective(costs, &trial) {
                if jt <= j - cfg.armijo_c * decrease && jt <= j {
                    accepted = Some((trial, jt, st));
                    break;
                }
            }
            step *= cfg.armijo_shrink;
        }
        let Some((t, jt, st)) = accepted else { break };
        theta = t;
        j = jt;
        sol = st;
        history.push(j);
    }
    Ok(OfuSelection { gain: sol.k.clone(), theta, objective: j, history })
}

/// Thompson draw screened for stabilizability: up to `max_resamples`
/// attempts, then `None`.
pub fn ts_select<R: Rng + ?Sized>(
    ell: &ConfidenceEllipsoid,
    costs: &LinearSystem,
    cfg: &TsConfig,
    rng: &mut R,
) -> Option<(Mat, Mat)> {
    for _ in 0..cfg.max_resamples.max(1) {
        let theta = ts_sample(ell, rng);
        let (a, b) = split_theta(&theta, costs.n());
        if let Ok(sol) = linsys::dare_solve(&costs.with_dynamics(a, b), 1e-10, 100_000) {
            return Some((theta, sol.k));
        }
    }
    None
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SwitchRule {
    Det,
    DetPlusTau(usize),
}

/// Gram determinants are tracked as log-determinants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SwitchState {
    pub t: usize,
    pub t_i: usize,
    pub logdet: f64,
    pub logdet_i: f64,
}

pub fn epoch_switch(rule: SwitchRule, params: &SwitchParams, state: &SwitchState) -> bool {
    let elapsed = state.t.saturating_sub(state.t_i);
    let det = elapsed >= params.min_epoch && state.logdet > params.det_factor.ln() + state.logdet_i;
    match rule {
        SwitchRule::Det => det,
        SwitchRule::DetPlusTau(tau) => det || elapsed >= tau,
    }
}

pub fn log_det_spd(m: &Mat) -> f64 {
    match nalgebra::Cholesky::new(linalg::symmetrize(m)) {
        Some(ch) => 2.0 * ch.l().diagonal().iter().map(|d| d.ln()).sum::<f64>(),
        None => f64::NEG_INFINITY,
    }
}

/// Certainty-equivalent gain at the estimate.
pub fn nominal_controller(est: &ParamEstimate, costs: &LinearSystem) -> Result<Mat> {
    let sys = costs.with_dynamics(est.a_hat.clone(), est.b_hat.clone());
    match linsys::dare_solve(&sys, 1e-10, 100_000) {
        Ok(sol) => Ok(sol.k),
        Err(Error::NonConvergent { .. }) | Err(Error::Unstabilizable) => Err(Error::Unstabilizable),
        Err(e) => Err(e),
    }
}
