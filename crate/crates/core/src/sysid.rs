//! Least-squares identification and the confidence-set bookkeeping shared
//! by the adaptive strategies.

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::linsys::{LinearSystem, Trajectory};

/// Condition number of the regressor Gram above which identification fails.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

pub const DEFAULT_LAMBDA: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEstimate {
    pub a_hat: Mat,
    pub b_hat: Mat,
    pub eps_a: f64,
    pub eps_b: f64,
}

impl ParamEstimate {
    pub fn exact(sys: &LinearSystem) -> Self {
        Self { a_hat: sys.a.clone(), b_hat: sys.b.clone(), eps_a: 0.0, eps_b: 0.0 }
    }

    /// `[Â B̂]`.
    pub fn theta(&self) -> Mat {
        stack_theta(&self.a_hat, &self.b_hat)
    }

    pub fn with_eps(mut self, eps_a: f64, eps_b: f64) -> Self {
        self.eps_a = eps_a;
        self.eps_b = eps_b;
        self
    }

    /// Operator-norm distance to the true dynamics, `max(‖Â−A‖, ‖B̂−B‖)`.
    pub fn error_to(&self, truth: &LinearSystem) -> f64 {
        let (ea, eb) = actual_errors(self, truth);
        ea.max(eb)
    }
}

pub fn stack_theta(a: &Mat, b: &Mat) -> Mat {
    let (n, p) = (a.nrows(), b.ncols());
    let mut t = Mat::zeros(n, n + p);
    t.view_mut((0, 0), (n, n)).copy_from(a);
    t.view_mut((0, n), (n, p)).copy_from(b);
    t
}

pub fn split_theta(theta: &Mat, n: usize) -> (Mat, Mat) {
    let p = theta.ncols() - n;
    (theta.columns(0, n).into_owned(), theta.columns(n, p).into_owned())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceEllipsoid {
    pub theta_hat: Mat,
    pub z: Mat,
    pub eps: f64,
}

impl ConfidenceEllipsoid {
    /// `Tr((Θ−Θ̂) Z (Θ−Θ̂)ᵀ)`.
    pub fn membership(&self, theta: &Mat) -> f64 {
        let d = theta - &self.theta_hat;
        (&d * &self.z * d.transpose()).trace()
    }

    pub fn contains(&self, theta: &Mat, tol: f64) -> bool {
        self.membership(theta) <= self.eps * (1.0 + tol) + tol
    }
}

fn regressors(traj: &Trajectory) -> (Mat, Mat) {
    stacked_regressors(&[traj])
}

/// Rows `[x_kᵀ u_kᵀ]` and `x_{k+1}ᵀ` of every segment, in order.
fn stacked_regressors(segments: &[&Trajectory]) -> (Mat, Mat) {
    let t: usize = segments.iter().map(|s| s.len()).sum();
    let n = segments[0].states[0].len();
    let p = segments.iter().find_map(|s| s.inputs.first()).map(|u| u.len()).unwrap_or(0);
    let mut z = Mat::zeros(t, n + p);
    let mut y = Mat::zeros(t, n);
    let mut row = 0;
    for traj in segments {
        for k in 0..traj.len() {
            for i in 0..n {
                z[(row, i)] = traj.states[k][i];
                y[(row, i)] = traj.states[k + 1][i];
            }
            for j in 0..p {
                z[(row, n + j)] = traj.inputs[k][j];
            }
            row += 1;
        }
    }
    (z, y)
}

/// Unregularized least squares of `x_{k+1}` on `[x_k; u_k]` via QR.
pub fn ols_estimate(traj: &Trajectory) -> Result<ParamEstimate> {
    ols_estimate_segments(&[traj])
}

/// [`ols_estimate`] over several rollouts that need not join up.
pub fn ols_estimate_segments(segments: &[&Trajectory]) -> Result<ParamEstimate> {
    let n = segments[0].states[0].len();
    let (z, y) = stacked_regressors(segments);
    let d = z.ncols();
    if z.nrows() < d + 1 {
        return Err(Error::Degenerate(f64::INFINITY));
    }
    let sv = z.clone().svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    let cond = if smin > 0.0 { (smax / smin).powi(2) } else { f64::INFINITY };
    if !(cond <= MAX_GRAM_CONDITION) {
        return Err(Error::Degenerate(cond));
    }
    let qr = z.qr();
    let rhs = qr.q().transpose() * &y;
    let theta_t = qr
        .r()
        .solve_upper_triangular(&rhs)
        .ok_or(Error::Degenerate(f64::INFINITY))?;
    let (a_hat, b_hat) = split_theta(&theta_t.transpose(), n);
    Ok(ParamEstimate { a_hat, b_hat, eps_a: 0.0, eps_b: 0.0 })
}

/// Ridge solution `Θᵀ = (ZᵀZ + λI)⁻¹ ZᵀY`, the batch oracle for [`RlsState`].
pub fn regularized_ls(traj: &Trajectory, lambda: f64) -> Result<Mat> {
    let (z, y) = regressors(traj);
    let gram = z.transpose() * &z + Mat::identity(z.ncols(), z.ncols()) * lambda;
    let chol = Cholesky::new(gram).ok_or(Error::Degenerate(f64::INFINITY))?;
    Ok(chol.solve(&(z.transpose() * y)).transpose())
}

/// `λI + Σ_t z_t z_tᵀ` with `z_t = [x_t; u_t]`.
pub fn gram_matrix(traj: &Trajectory, lambda: f64) -> Mat {
    let n = traj.states[0].len();
    let p = traj.inputs.first().map(|u| u.len()).unwrap_or(0);
    gram_from_width(traj, n + p, lambda)
}

/// Same as [`gram_matrix`] with the regressor width given explicitly, so an
/// empty trajectory still yields a matrix of the right size.
pub fn gram_from_width(traj: &Trajectory, width: usize, lambda: f64) -> Mat {
    let mut g = Mat::identity(width, width) * lambda;
    for (x, u) in traj.states.iter().zip(&traj.inputs) {
        let z = regressor(x, u);
        g.ger(1.0, &z, &z, 1.0);
    }
    g
}

pub fn regressor(x: &Vector, u: &Vector) -> Vector {
    let mut z = Vector::zeros(x.len() + u.len());
    z.rows_mut(0, x.len()).copy_from(x);
    z.rows_mut(x.len(), u.len()).copy_from(u);
    z
}

/// Recursive least squares kept in information form (Gram and cross
/// moments), so it agrees with the batch ridge solution to rounding.
#[derive(Clone, Debug, PartialEq)]
pub struct RlsState {
    pub gram: Mat,
    pub cross: Mat,
    pub theta: Mat,
}

impl RlsState {
    pub fn new(n: usize, p: usize, lambda: f64) -> Self {
        Self {
            gram: Mat::identity(n + p, n + p) * lambda,
            cross: Mat::zeros(n + p, n),
            theta: Mat::zeros(n, n + p),
        }
    }
}

pub fn rls_update(state: &RlsState, x: &Vector, u: &Vector, x_next: &Vector) -> RlsState {
    let z = regressor(x, u);
    let mut gram = state.gram.clone();
    gram.ger(1.0, &z, &z, 1.0);
    let mut cross = state.cross.clone();
    cross.ger(1.0, &z, x_next, 1.0);
    let theta = match Cholesky::new(gram.clone()) {
        Some(ch) => ch.solve(&cross).transpose(),
        None => state.theta.clone(),
    };
    RlsState { gram, cross, theta }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ErrorPolicy {
    Actual,
    Scaled,
    Theoretical,
}

/// Constants for the theoretical radius
/// `ε = c·σ_w‖K⋆‖C⋆ / (σ_η (1−ρ⋆)³) · √((n+p)/T)`.
/// The leading constant `c` is a heuristic knob with default 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoreticalConstants {
    pub c_star: f64,
    pub rho_star: f64,
    pub k_star_norm: f64,
    pub constant: f64,
    pub sigma_w: f64,
    pub sigma_eta: f64,
    pub epoch_len: f64,
    pub dim: usize,
}

impl TheoreticalConstants {
    pub fn radius(&self) -> f64 {
        self.constant * self.sigma_w * self.k_star_norm * self.c_star
            / (self.sigma_eta * (1.0 - self.rho_star).powi(3))
            * (self.dim as f64 / self.epoch_len).sqrt()
    }
}

pub fn actual_errors(est: &ParamEstimate, truth: &LinearSystem) -> (f64, f64) {
    (
        linalg::spectral_norm(&(&est.a_hat - &truth.a)),
        linalg::spectral_norm(&(&est.b_hat - &truth.b)),
    )
}

pub fn error_schedule(
    policy: ErrorPolicy,
    truth: Option<&LinearSystem>,
    est: &ParamEstimate,
    multiplier: f64,
    theory: Option<&TheoreticalConstants>,
) -> Result<(f64, f64)> {
    match policy {
        ErrorPolicy::Actual => Ok(actual_errors(est, truth.ok_or(Error::MissingTruth)?)),
        ErrorPolicy::Scaled => {
            let (a, b) = actual_errors(est, truth.ok_or(Error::MissingTruth)?);
            Ok((a * multiplier, b * multiplier))
        }
        ErrorPolicy::Theoretical => {
            let c = theory.ok_or_else(|| Error::Invalid("theoretical constants missing".into()))?;
            let eps = c.radius();
            Ok((eps, eps))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_gram_is_lambda_identity() {
        let t = Trajectory::starting_at(Vector::zeros(2));
        assert_eq!(gram_from_width(&t, 3, 1.0), Mat::identity(3, 3));
    }

    #[test]
    fn rls_starts_at_zero() {
        let s = RlsState::new(2, 1, 1e-5);
        assert_eq!(s.theta, Mat::zeros(2, 3));
    }

    #[test]
    fn missing_truth_is_an_error() {
        let est = ParamEstimate {
            a_hat: Mat::zeros(1, 1),
            b_hat: Mat::zeros(1, 1),
            eps_a: 0.0,
            eps_b: 0.0,
        };
        assert_eq!(
            error_schedule(ErrorPolicy::Actual, None, &est, 1.0, None),
            Err(Error::MissingTruth)
        );
    }
}
