//! Linear systems, rollouts, and the Riccati/Lyapunov machinery.

use nalgebra::Cholesky;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::rng;

/// Norm above which a rollout is declared diverged.
pub const OVERFLOW_GUARD: f64 = 1e10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSystem {
    pub a: Mat,
    pub b: Mat,
    pub q: Mat,
    pub r: Mat,
    pub sigma_w: f64,
}

impl LinearSystem {
    pub fn new(a: Mat, b: Mat, q: Mat, r: Mat, sigma_w: f64) -> Result<Self> {
        let n = a.nrows();
        let p = b.ncols();
        if !a.is_square() || b.nrows() != n || q.shape() != (n, n) || r.shape() != (p, p) {
            return Err(Error::Dimension(format!(
                "A {:?}, B {:?}, Q {:?}, R {:?}",
                a.shape(),
                b.shape(),
                q.shape(),
                r.shape()
            )));
        }
        if !linalg::is_symmetric(&q, 1e-12) || linalg::min_eigenvalue_sym(&q) < -1e-12 {
            return Err(Error::Invalid("Q must be symmetric PSD".into()));
        }
        if !linalg::is_symmetric(&r, 1e-12) || linalg::min_eigenvalue_sym(&r) <= 0.0 {
            return Err(Error::Invalid("R must be symmetric PD".into()));
        }
        if !(sigma_w >= 0.0 && sigma_w.is_finite()) {
            return Err(Error::Invalid("sigma_w must be finite and nonnegative".into()));
        }
        Ok(Self { a, b, q, r, sigma_w })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn p(&self) -> usize {
        self.b.ncols()
    }

    /// Same costs and noise, different dynamics.
    pub fn with_dynamics(&self, a: Mat, b: Mat) -> Self {
        Self { a, b, q: self.q.clone(), r: self.r.clone(), sigma_w: self.sigma_w }
    }

    pub fn closed_loop(&self, k: &Mat) -> Mat {
        &self.a + &self.b * k
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LqrSolution {
    pub p: Mat,
    pub k: Mat,
    pub j_star: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayBound {
    pub c: f64,
    pub rho: f64,
}

/// Dynamic output feedback `ξ⁺ = A_K ξ + B_K x`, `u = C_K ξ + D_K x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSpaceController {
    pub a_k: Mat,
    pub b_k: Mat,
    pub c_k: Mat,
    pub d_k: Mat,
}

impl StateSpaceController {
    pub fn order(&self) -> usize {
        self.a_k.nrows()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Controller {
    Static(Mat),
    StateSpace(StateSpaceController),
}

impl Controller {
    pub fn zero(n: usize, p: usize) -> Self {
        Controller::Static(Mat::zeros(p, n))
    }

    /// Fresh runtime instance with zero internal state.
    pub fn start(&self) -> ControllerRun<'_> {
        let order = match self {
            Controller::Static(_) => 0,
            Controller::StateSpace(ss) => ss.order(),
        };
        ControllerRun { ctrl: self, xi: Vector::zeros(order) }
    }

    /// `(D_K, C_K, A_K, B_K)` with empty blocks for a static gain.
    fn parts(&self) -> (Mat, Mat, Mat, Mat) {
        match self {
            Controller::Static(k) => (
                k.clone(),
                Mat::zeros(k.nrows(), 0),
                Mat::zeros(0, 0),
                Mat::zeros(0, k.ncols()),
            ),
            Controller::StateSpace(ss) => {
                (ss.d_k.clone(), ss.c_k.clone(), ss.a_k.clone(), ss.b_k.clone())
            }
        }
    }

    /// Closed-loop transition of the augmented state `[x; ξ]` for `(a, b)`.
    pub fn augmented_closed_loop(&self, a: &Mat, b: &Mat) -> Mat {
        let (d, c, ak, bk) = self.parts();
        let n = a.nrows();
        let m = ak.nrows();
        let mut out = Mat::zeros(n + m, n + m);
        out.view_mut((0, 0), (n, n)).copy_from(&(a + b * &d));
        if m > 0 {
            out.view_mut((0, n), (n, m)).copy_from(&(b * &c));
            out.view_mut((n, 0), (m, n)).copy_from(&bk);
            out.view_mut((n, n), (m, m)).copy_from(&ak);
        }
        out
    }
}

/// Stepping state for one controller over one rollout segment.
pub struct ControllerRun<'a> {
    ctrl: &'a Controller,
    xi: Vector,
}

impl ControllerRun<'_> {
    pub fn act(&mut self, x: &Vector) -> Vector {
        match self.ctrl {
            Controller::Static(k) => k * x,
            Controller::StateSpace(ss) => {
                let u = &ss.c_k * &self.xi + &ss.d_k * x;
                self.xi = &ss.a_k * &self.xi + &ss.b_k * x;
                u
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<Vector>,
    pub inputs: Vec<Vector>,
    pub process_noise: Vec<Vector>,
    pub exploration_noise: Vec<Vector>,
    /// Set when the state norm crossed [`OVERFLOW_GUARD`]; the rollout stops there.
    pub diverged: bool,
}

impl Trajectory {
    pub fn starting_at(x0: Vector) -> Self {
        Self { states: vec![x0], ..Default::default() }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn last_state(&self) -> &Vector {
        self.states.last().expect("trajectory holds at least x0")
    }

    /// Rebuilds the states from `x0`, inputs and noise.
    pub fn replay(&self, a: &Mat, b: &Mat) -> Vec<Vector> {
        let mut out = vec![self.states[0].clone()];
        for (u, w) in self.inputs.iter().zip(&self.process_noise) {
            let x = out.last().unwrap();
            out.push(a * x + b * u + w);
        }
        out
    }

    /// Stage costs `xᵀQx + uᵀRu` for every recorded input.
    pub fn stage_costs(&self, q: &Mat, r: &Mat) -> Vec<f64> {
        self.states
            .iter()
            .zip(&self.inputs)
            .map(|(x, u)| x.dot(&(q * x)) + u.dot(&(r * u)))
            .collect()
    }
}

/// Value iteration on the Riccati map starting from `P₀ = 0`.
///
/// The stopping test is relative: `‖P_{t+1} − P_t‖_F ≤ tol·max(1, ‖P_t‖_F)`.
pub fn dare_solve(sys: &LinearSystem, tol: f64, max_iter: usize) -> Result<LqrSolution> {
    let p0 = Mat::zeros(sys.n(), sys.n());
    dare_solve_from(sys, p0, tol, max_iter)
}

pub fn dare_solve_from(sys: &LinearSystem, p0: Mat, tol: f64, max_iter: usize) -> Result<LqrSolution> {
    let mut p = p0;
    let mut residual = f64::INFINITY;
    for it in 0..max_iter {
        let next = riccati_map(sys, &p).ok_or(Error::Unstabilizable)?;
        residual = (&next - &p).norm();
        let scale = next.norm().max(1.0);
        p = next;
        if !scale.is_finite() || scale > 1e150 {
            return Err(Error::NonConvergent { iters: it + 1, residual });
        }
        if residual <= tol * scale {
            let k = optimal_gain(sys, &p).ok_or(Error::Unstabilizable)?;
            let j_star = sys.sigma_w * sys.sigma_w * p.trace();
            return Ok(LqrSolution { p, k, j_star });
        }
    }
    Err(Error::NonConvergent { iters: max_iter, residual })
}

pub fn dare_default(sys: &LinearSystem) -> Result<LqrSolution> {
    dare_solve(sys, 1e-10, 1_000_000)
}

/// One step of `P ↦ AᵀPA − AᵀPB(R+BᵀPB)⁻¹BᵀPA + Q`.
pub fn riccati_map(sys: &LinearSystem, p: &Mat) -> Option<Mat> {
    let (a, b) = (&sys.a, &sys.b);
    let pa = p * a;
    let pb = p * b;
    let s = &sys.r + b.transpose() * &pb;
    let chol = Cholesky::new(linalg::symmetrize(&s))?;
    let bpa = b.transpose() * &pa;
    let gain = chol.solve(&bpa);
    let next = a.transpose() * &pa - bpa.transpose() * gain + &sys.q;
    Some(linalg::symmetrize(&next))
}

pub fn optimal_gain(sys: &LinearSystem, p: &Mat) -> Option<Mat> {
    let b = &sys.b;
    let s = &sys.r + b.transpose() * p * b;
    let chol = Cholesky::new(linalg::symmetrize(&s))?;
    Some(-chol.solve(&(b.transpose() * p * &sys.a)))
}

/// Solves `P = M P Mᵀ + W`.
pub fn lyapunov_solve(m: &Mat, w: &Mat) -> Result<Mat> {
    let rho = linalg::spectral_radius(m);
    if rho >= 1.0 {
        return Err(Error::Unstable(rho));
    }
    linalg::stein_solve(m, w).ok_or(Error::Unstable(rho))
}

/// Rollout from `x₀ = 0` with its own seeded stream.
pub fn simulate_rollout(
    sys: &LinearSystem,
    controller: &Controller,
    horizon: usize,
    eta_std: f64,
    rng_seed: u64,
) -> Trajectory {
    let mut rng = rng::trial_rng(rng_seed, 0);
    simulate_from(sys, controller, Vector::zeros(sys.n()), horizon, eta_std, &mut rng)
}

/// Rollout with `u_k = controller(x_k) + η_k` from a given state, drawing
/// `η_k` then `w_k` at every step.
pub fn simulate_from<R: Rng + ?Sized>(
    sys: &LinearSystem,
    controller: &Controller,
    x0: Vector,
    horizon: usize,
    eta_std: f64,
    rng: &mut R,
) -> Trajectory {
    let mut traj = Trajectory::starting_at(x0);
    let mut run = controller.start();
    for _ in 0..horizon {
        let x = traj.last_state().clone();
        let eta = rng::gaussian_vector(rng, sys.p(), eta_std);
        let w = rng::gaussian_vector(rng, sys.n(), sys.sigma_w);
        let u = run.act(&x) + &eta;
        let next = &sys.a * &x + &sys.b * &u + &w;
        traj.inputs.push(u);
        traj.exploration_noise.push(eta);
        traj.process_noise.push(w);
        let diverged = !(next.norm() <= OVERFLOW_GUARD);
        traj.states.push(next);
        if diverged {
            traj.diverged = true;
            break;
        }
    }
    traj
}

/// Steady-state average cost `σ_w² Tr(Q_aug Σ)` of the controller on `sys`,
/// or `+∞` when the augmented closed loop is not Schur stable.
pub fn infinite_horizon_cost(sys: &LinearSystem, controller: &Controller) -> f64 {
    let m = controller.augmented_closed_loop(&sys.a, &sys.b);
    let dim = m.nrows();
    let n = sys.n();
    if linalg::spectral_radius(&m) >= 1.0 {
        return f64::INFINITY;
    }
    let mut w = Mat::zeros(dim, dim);
    w.view_mut((0, 0), (n, n)).fill_with_identity();
    let Some(sigma) = linalg::stein_solve(&m, &w) else {
        return f64::INFINITY;
    };
    let (d, c, _, _) = controller.parts();
    let mut out_map = Mat::zeros(sys.p(), dim);
    out_map.view_mut((0, 0), (sys.p(), n)).copy_from(&d);
    if dim > n {
        out_map.view_mut((0, n), (sys.p(), dim - n)).copy_from(&c);
    }
    let mut q_aug = out_map.transpose() * &sys.r * &out_map;
    {
        let mut top = q_aug.view_mut((0, 0), (n, n));
        top += &sys.q;
    }
    let cost = sys.sigma_w * sys.sigma_w * (q_aug * sigma).trace();
    if cost.is_finite() {
        cost
    } else {
        f64::INFINITY
    }
}

/// `rho = (ρ(M)+1)/2` and the smallest `C ≥ 1` with `‖M^k‖ ≤ C rho^k`, `k ≤ k_max`.
pub fn fit_decay_bound(m: &Mat, k_max: usize) -> Result<DecayBound> {
    let spec = linalg::spectral_radius(m);
    if spec >= 1.0 {
        return Err(Error::Unstable(spec));
    }
    let rho = 0.5 * (spec + 1.0);
    let mut c: f64 = 1.0;
    let mut power = Mat::identity(m.nrows(), m.ncols());
    let mut rho_k = 1.0;
    for _ in 1..=k_max {
        power = &power * m;
        rho_k *= rho;
        c = c.max(linalg::spectral_norm(&power) / rho_k);
    }
    Ok(DecayBound { c, rho })
}
