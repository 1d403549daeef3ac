//! Disturbance forecasting with a state cap: identify the disturbance
//! dynamics from a short record, synthesize with and without the ℓ1 caps,
//! and run both on the true augmented plant under bounded noise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::linsys::{LinearSystem, OVERFLOW_GUARD};
use crate::rng;
use crate::sls::{demand_augmented, demand_config, realize_controller, synthesize_constrained, ConstrainedSpec};
use crate::sysid::ParamEstimate;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandConfig {
    /// State cap `‖x‖∞ ≤ a`.
    pub a: f64,
    /// Noise bound `‖w‖∞ ≤ b`.
    pub b: f64,
    pub gamma: f64,
    pub f: usize,
    /// Length of the disturbance record used to fit `A_d`. Short records
    /// leave `ε̃` large enough that the `(Φz)₂₂` cap cannot be met.
    pub warmup: usize,
    pub horizon: usize,
    /// Multiplies the measured ℓ∞ error of the fit.
    pub error_multiplier: f64,
}

impl Default for DemandConfig {
    fn default() -> Self {
        Self { a: 5.0, b: 1.0, gamma: 0.98, f: 12, warmup: 500, horizon: 1000, error_multiplier: 1.0 }
    }
}

/// Outcome of one trial for one controller.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandRun {
    /// `‖x_t‖∞` for `t = 0..=horizon`; empty when the synthesis failed.
    pub state_inf: Vec<f64>,
    pub max_state: f64,
    pub failed: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandTrial {
    pub eps_inf: f64,
    pub constrained: DemandRun,
    pub unconstrained: DemandRun,
}

/// Least squares `d_{t+1} ≈ Â d_t` on one record.
pub fn fit_autonomous(states: &[Vector]) -> Result<Mat> {
    let n = states[0].len();
    let mut gram = Mat::zeros(n, n);
    let mut cross = Mat::zeros(n, n);
    for w in states.windows(2) {
        gram.ger(1.0, &w[0], &w[0], 1.0);
        cross.ger(1.0, &w[1], &w[0], 1.0);
    }
    let inv = gram.try_inverse().ok_or(Error::Degenerate(f64::INFINITY))?;
    Ok(cross * inv)
}

/// One trial: its own disturbance record, fit and noise sequence.
pub fn demand_trial(known: &LinearSystem, a_d: &Mat, cfg: &DemandConfig, seed: u64, trial: u64) -> Result<DemandTrial> {
    let nd = a_d.nrows();
    let mut rng = rng::trial_rng(seed, trial);
    let mut d = vec![Vector::zeros(nd)];
    for _ in 0..cfg.warmup {
        let next = a_d * d.last().unwrap() + rng::uniform_vector(&mut rng, nd, cfg.b);
        d.push(next);
    }
    let a_hat = fit_autonomous(&d)?;
    let eps_inf = linalg::inf_norm(&(&a_hat - a_d)) * cfg.error_multiplier;
    let est = ParamEstimate { a_hat, b_hat: Mat::zeros(nd, 0), eps_a: eps_inf, eps_b: 0.0 };
    let syn = demand_config(known, &est.a_hat, cfg.f)?;
    let spec = ConstrainedSpec { a: cfg.a, b: cfg.b, gamma: cfg.gamma };
    let noise: Vec<Vector> = (0..cfg.horizon).map(|_| rng::uniform_vector(&mut rng, nd, cfg.b)).collect();
    let run = |spec: Option<&ConstrainedSpec>| match synthesize_constrained(&est, known, &syn, spec) {
        Ok(resp) => closed_loop(known, a_d, &realize_controller(&resp), &noise),
        Err(e) => DemandRun { state_inf: Vec::new(), max_state: f64::INFINITY, failed: Some(e.to_string()) },
    };
    Ok(DemandTrial { eps_inf, constrained: run(Some(&spec)), unconstrained: run(None) })
}

fn closed_loop(known: &LinearSystem, a_d: &Mat, ctrl: &crate::sls::RealizedController, noise: &[Vector]) -> DemandRun {
    let n = known.n();
    let (a, b, w) = demand_augmented(known, a_d);
    let mut ctrl = ctrl.clone();
    ctrl.reset();
    let mut z = Vector::zeros(a.nrows());
    let mut state_inf = vec![0.0];
    for wk in noise {
        let u = ctrl.act(&z);
        z = &a * &z + &b * u + &w * wk;
        let x_inf = z.rows(0, n).amax();
        state_inf.push(x_inf);
        if !(x_inf <= OVERFLOW_GUARD) {
            break;
        }
    }
    let max_state = state_inf.iter().copied().fold(0.0, f64::max);
    DemandRun { state_inf, max_state, failed: None }
}
