//! Epoch loops for the robust method and the baselines, with regret
//! bookkeeping.

use serde::{Deserialize, Serialize};

use crate::baselines::{self, epoch_switch, log_det_spd, OfuConfig, SwitchRule, SwitchState, TsConfig};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::linsys::{self, Controller, LinearSystem, Trajectory, OVERFLOW_GUARD};
use crate::rng;
use crate::sls::{self, realize_controller, RealizedController, SynthesisConfig};
use crate::sysid::{self, ConfidenceEllipsoid, ErrorPolicy, ParamEstimate};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    Doubling,
    Linear,
}

/// How the exploration level shrinks with the epoch length.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exploration {
    /// `σ_{η,i} = C_η σ_w T_i^{−1/3}`, the setting used in the experiments.
    #[default]
    Experimental,
    /// `σ_{η,i}² = C_η² σ_w² (T_i/C_T)^{−1/3}`. With `C_η = 1` this is the
    /// schedule behind the `T^{−1/3}` estimation rate.
    Analysis,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochSchedule {
    pub mode: ScheduleMode,
    pub c_t: usize,
    pub c_eta: f64,
    #[serde(default)]
    pub exploration: Exploration,
}

impl EpochSchedule {
    pub fn doubling(c_t: usize, c_eta: f64) -> Self {
        Self { mode: ScheduleMode::Doubling, c_t, c_eta, exploration: Exploration::Experimental }
    }

    pub fn linear(c_t: usize, c_eta: f64) -> Self {
        Self { mode: ScheduleMode::Linear, ..Self::doubling(c_t, c_eta) }
    }

    pub fn epoch_len(&self, i: usize) -> usize {
        match self.mode {
            ScheduleMode::Doubling => self.c_t << i.min(40),
            ScheduleMode::Linear => self.c_t * (i + 1),
        }
    }

    pub fn sigma_eta(&self, i: usize, sigma_w: f64) -> f64 {
        let t = self.epoch_len(i) as f64;
        match self.exploration {
            Exploration::Experimental => self.c_eta * sigma_w * t.powf(-1.0 / 3.0),
            Exploration::Analysis => self.c_eta * sigma_w * (t / self.c_t as f64).powf(-1.0 / 6.0),
        }
    }

    /// Base epoch length the regret analysis asks for, up to its unstated
    /// leading constant: `(n+p)·C⋆⁴(1+‖K⋆‖)⁴/(1−ρ⋆)⁸`. Reported only; it is
    /// far too large to size epochs with.
    pub fn theoretical_c_t(n: usize, p: usize, c_star: f64, rho_star: f64, k_star_norm: f64) -> f64 {
        (n + p) as f64 * c_star.powi(4) * (1.0 + k_star_norm).powi(4) / (1.0 - rho_star).powi(8)
    }
}

/// Initial rollout that feeds the first estimate; excluded from regret.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Warmup {
    pub t0: usize,
    pub sigma_u: f64,
    pub k0: Mat,
    /// Start the counted run where the warm-up ended; otherwise from `x = 0`.
    #[serde(default = "default_true")]
    pub continue_state: bool,
}

fn default_true() -> bool {
    true
}

impl Warmup {
    pub fn new(truth: &LinearSystem, t0: usize, sigma_u: f64) -> Result<Self> {
        Ok(Self { t0, sigma_u, k0: initial_gain(truth)?, continue_state: true })
    }
}

/// A stabilizing gain that is not the optimal one: the LQR gain of the true
/// dynamics for unit costs.
pub fn initial_gain(truth: &LinearSystem) -> Result<Mat> {
    let (n, p) = (truth.n(), truth.p());
    let unit = LinearSystem::new(truth.a.clone(), truth.b.clone(), Mat::identity(n, n), Mat::identity(p, p), 1.0)?;
    Ok(linsys::dare_default(&unit)?.k)
}

/// Synthesis constants from the true closed loop, as the method assumes
/// `(C⋆, ρ⋆, ‖K⋆‖)` are known.
pub fn synthesis_config_for(truth: &LinearSystem, f: usize) -> Result<SynthesisConfig> {
    let lqr = linsys::dare_default(truth)?;
    let bound = linsys::fit_decay_bound(&truth.closed_loop(&lqr.k), 200)?;
    Ok(SynthesisConfig::from_decay(bound.c, bound.rho, linalg::spectral_norm(&lqr.k), f))
}

/// Which data the robust and nominal runners fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimation {
    /// Everything since the start of the warm-up.
    AllData,
    /// Only the epoch just finished.
    EpochOnly,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RobustConfig {
    pub schedule: EpochSchedule,
    pub synthesis: SynthesisConfig,
    pub error_multiplier: f64,
    pub estimation: Estimation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Robust,
    Nominal,
    Ofu,
    Ts,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Robust => "robust",
            Strategy::Nominal => "nominal",
            Strategy::Ofu => "ofu",
            Strategy::Ts => "ts",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "robust" => Ok(Strategy::Robust),
            "nominal" => Ok(Strategy::Nominal),
            "ofu" => Ok(Strategy::Ofu),
            "ts" => Ok(Strategy::Ts),
            other => Err(Error::Parse(format!("unknown strategy {other}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum EpochStatus {
    /// A new controller was computed at the start of the epoch.
    Updated,
    /// The update failed and the previous controller was kept.
    Kept(String),
}

/// Why an epoch stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpochEnd {
    Schedule,
    Determinant,
    Tau,
    Horizon,
    Diverged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ControllerDescriptor {
    Static(Mat),
    Fir { f: usize, gamma: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// First step of the epoch, counted from the end of the warm-up.
    pub start: usize,
    pub len: usize,
    pub sigma_eta: f64,
    /// Samples (warm-up included) behind the estimate of this epoch.
    pub data_len: usize,
    pub estimate: ParamEstimate,
    pub est_error: f64,
    pub eps: (f64, f64),
    pub status: EpochStatus,
    pub controller: ControllerDescriptor,
    /// Infinite-horizon cost of the epoch controller on the true system.
    pub cost: f64,
    pub end: EpochEnd,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochTrace {
    pub strategy: Strategy,
    pub truth: LinearSystem,
    pub j_star: f64,
    pub warmup: Trajectory,
    /// The regret-counted rollout, starting where the warm-up ended.
    pub trajectory: Trajectory,
    /// Running sum of `x_tᵀQx_t + u_tᵀRu_t − J⋆`.
    pub regret: Vec<f64>,
    pub epochs: Vec<EpochRecord>,
}

impl EpochTrace {
    pub fn diverged(&self) -> bool {
        self.trajectory.diverged
    }

    /// Index of the epoch active at step `t`.
    pub fn epoch_at(&self, t: usize) -> Option<&EpochRecord> {
        self.epochs.iter().rev().find(|e| e.start <= t)
    }
}

/// Cumulative regret at the given step counts, recomputed from the stored
/// trajectory. A diverged run is clamped at [`OVERFLOW_GUARD`] past the
/// divergence.
pub fn regret_of(trace: &EpochTrace, j_star: f64, times: &[usize]) -> Vec<f64> {
    let costs = trace.trajectory.stage_costs(&trace.truth.q, &trace.truth.r);
    let mut cum = Vec::with_capacity(costs.len());
    let mut acc = 0.0;
    for c in costs {
        acc += c - j_star;
        cum.push(acc);
    }
    times
        .iter()
        .map(|&t| {
            if t == 0 {
                0.0
            } else if t <= cum.len() {
                cum[t - 1]
            } else if trace.diverged() {
                cum.last().copied().unwrap_or(0.0).max(OVERFLOW_GUARD)
            } else {
                cum.last().copied().unwrap_or(0.0)
            }
        })
        .collect()
}

enum Active {
    Static(Mat),
    Fir(RealizedController),
}

impl Active {
    fn act(&mut self, x: &Vector) -> Vector {
        match self {
            Active::Static(k) => &*k * x,
            Active::Fir(r) => r.act(x),
        }
    }

    fn reset(&mut self) {
        if let Active::Fir(r) = self {
            r.reset();
        }
    }

    fn controller(&self) -> Controller {
        match self {
            Active::Static(k) => Controller::Static(k.clone()),
            Active::Fir(r) => r.to_controller(),
        }
    }

    fn descriptor(&self, gamma: f64) -> ControllerDescriptor {
        match self {
            Active::Static(k) => ControllerDescriptor::Static(k.clone()),
            Active::Fir(r) => ControllerDescriptor::Fir { f: r.f(), gamma },
        }
    }
}

/// Shared rollout state for every runner.
struct Runner<'a> {
    truth: &'a LinearSystem,
    j_star: f64,
    warm: Trajectory,
    traj: Trajectory,
    regret: Vec<f64>,
    rng: rng::TrialRng,
}

impl<'a> Runner<'a> {
    fn start(truth: &'a LinearSystem, warmup: &Warmup, seed: u64) -> Result<Self> {
        let j_star = linsys::dare_default(truth)?.j_star;
        let mut rng = rng::trial_rng(seed, 0);
        let ctrl = Controller::Static(warmup.k0.clone());
        let warm = linsys::simulate_from(truth, &ctrl, Vector::zeros(truth.n()), warmup.t0, warmup.sigma_u, &mut rng);
        if warm.diverged {
            return Err(Error::Invalid("warm-up rollout diverged".into()));
        }
        let x0 = if warmup.continue_state { warm.last_state().clone() } else { Vector::zeros(truth.n()) };
        Ok(Self { truth, j_star, warm, traj: Trajectory::starting_at(x0), regret: Vec::new(), rng })
    }

    fn elapsed(&self) -> usize {
        self.traj.len()
    }

    fn data_len(&self) -> usize {
        self.warm.len() + self.traj.len()
    }

    fn diverged(&self) -> bool {
        self.traj.diverged
    }

    /// One step with input `ctrl(x) + η`.
    fn step(&mut self, ctrl: &mut Active, sigma_eta: f64) {
        let sys = self.truth;
        let x = self.traj.last_state().clone();
        let eta = rng::gaussian_vector(&mut self.rng, sys.p(), sigma_eta);
        let w = rng::gaussian_vector(&mut self.rng, sys.n(), sys.sigma_w);
        let u = ctrl.act(&x) + &eta;
        let next = &sys.a * &x + &sys.b * &u + &w;
        let stage = x.dot(&(&sys.q * &x)) + u.dot(&(&sys.r * &u)) - self.j_star;
        self.regret.push(self.regret.last().copied().unwrap_or(0.0) + stage);
        self.traj.inputs.push(u);
        self.traj.exploration_noise.push(eta);
        self.traj.process_noise.push(w);
        if !(next.norm() <= OVERFLOW_GUARD) {
            self.traj.diverged = true;
        }
        self.traj.states.push(next);
    }

    /// Fit on everything so far, or on the last `len` counted steps (the
    /// warm-up when nothing has been counted yet).
    fn estimate(&self, estimation: Estimation, len: usize) -> Result<(ParamEstimate, usize)> {
        if estimation == Estimation::AllData || self.traj.is_empty() {
            let segs: Vec<&Trajectory> = if self.traj.is_empty() { vec![&self.warm] } else { vec![&self.warm, &self.traj] };
            return Ok((sysid::ols_estimate_segments(&segs)?, self.data_len()));
        }
        let total = self.traj.len();
        let from = total - len.min(total);
        let tail = Trajectory {
            states: self.traj.states[from..].to_vec(),
            inputs: self.traj.inputs[from..].to_vec(),
            process_noise: self.traj.process_noise[from..].to_vec(),
            exploration_noise: self.traj.exploration_noise[from..].to_vec(),
            diverged: false,
        };
        Ok((sysid::ols_estimate(&tail)?, tail.len()))
    }

    fn finish(self, strategy: Strategy, epochs: Vec<EpochRecord>) -> EpochTrace {
        EpochTrace {
            strategy,
            truth: self.truth.clone(),
            j_star: self.j_star,
            warmup: self.warm,
            trajectory: self.traj,
            regret: self.regret,
            epochs,
        }
    }
}

/// The robust adaptive loop: per epoch, roll out with exploration noise,
/// fit least squares, and synthesize the next controller from the FIR
/// program with the actual (scaled) errors. A failed synthesis keeps the
/// previous controller and doubles the exploration variance for the epoch.
pub fn run_robust_adaptive(
    truth: &LinearSystem,
    warmup: &Warmup,
    cfg: &RobustConfig,
    horizon: usize,
    seed: u64,
) -> Result<EpochTrace> {
    run_scheduled(truth, warmup, cfg, horizon, seed, Strategy::Robust)
}

/// Certainty equivalence on the same epoch and noise schedule as the robust
/// loop.
pub fn run_nominal(
    truth: &LinearSystem,
    warmup: &Warmup,
    cfg: &RobustConfig,
    horizon: usize,
    seed: u64,
) -> Result<EpochTrace> {
    run_scheduled(truth, warmup, cfg, horizon, seed, Strategy::Nominal)
}

fn run_scheduled(
    truth: &LinearSystem,
    warmup: &Warmup,
    cfg: &RobustConfig,
    horizon: usize,
    seed: u64,
    strategy: Strategy,
) -> Result<EpochTrace> {
    let mut run = Runner::start(truth, warmup, seed)?;
    let mut active = Active::Static(warmup.k0.clone());
    let mut active_gamma = 0.0;
    let mut epochs = Vec::new();
    let mut last_len = 0;
    let mut i = 0;
    while run.elapsed() < horizon && !run.diverged() {
        let (est, data_len) = run.estimate(cfg.estimation, last_len)?;
        let (ea, eb) = sysid::error_schedule(ErrorPolicy::Scaled, Some(truth), &est, cfg.error_multiplier, None)?;
        let est = est.with_eps(ea, eb);
        let update = match strategy {
            Strategy::Robust => sls::synthesize_robust(&est, &cfg.synthesis, &truth.q, &truth.r)
                .map(|o| (Active::Fir(realize_controller(&o.response)), o.response.gamma)),
            _ => baselines::nominal_controller(&est, truth).map(|k| (Active::Static(k), 0.0)),
        };
        let mut sigma = cfg.schedule.sigma_eta(i, truth.sigma_w);
        let status = match update {
            Ok((a, g)) => {
                active = a;
                active_gamma = g;
                EpochStatus::Updated
            }
            Err(e) => {
                sigma *= std::f64::consts::SQRT_2;
                active.reset();
                EpochStatus::Kept(e.to_string())
            }
        };
        let planned = cfg.schedule.epoch_len(i);
        let len = planned.min(horizon - run.elapsed());
        epochs.push(EpochRecord {
            start: run.elapsed(),
            len,
            sigma_eta: sigma,
            data_len,
            est_error: est.error_to(truth),
            estimate: est,
            eps: (ea, eb),
            status,
            controller: active.descriptor(active_gamma),
            cost: linsys::infinite_horizon_cost(truth, &active.controller()),
            end: if len < planned { EpochEnd::Horizon } else { EpochEnd::Schedule },
        });
        for _ in 0..len {
            run.step(&mut active, sigma);
            if run.diverged() {
                epochs.last_mut().unwrap().end = EpochEnd::Diverged;
                break;
            }
        }
        last_len = len;
        i += 1;
    }
    Ok(run.finish(strategy, epochs))
}

/// Ridge model of everything seen so far, as used by OFU and TS.
struct RidgeData {
    gram: Mat,
    cross: Mat,
}

impl RidgeData {
    fn from(traj: &Trajectory, lambda: f64) -> Self {
        let n = traj.states[0].len();
        let p = traj.inputs.first().map(|u| u.len()).unwrap_or(0);
        let mut s = Self { gram: Mat::identity(n + p, n + p) * lambda, cross: Mat::zeros(n + p, n) };
        for k in 0..traj.len() {
            s.push(&traj.states[k], &traj.inputs[k], &traj.states[k + 1]);
        }
        s
    }

    fn push(&mut self, x: &Vector, u: &Vector, next: &Vector) {
        let z = sysid::regressor(x, u);
        self.gram.ger(1.0, &z, &z, 1.0);
        self.cross.ger(1.0, &z, next, 1.0);
    }

    fn theta(&self) -> Result<Mat> {
        let ch = nalgebra::Cholesky::new(self.gram.clone()).ok_or(Error::Degenerate(f64::INFINITY))?;
        Ok(ch.solve(&self.cross).transpose())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub ofu: OfuConfig,
    pub ts: TsConfig,
    pub lambda: f64,
    /// Multiplies the estimation errors; the ellipsoid radius scales with
    /// its square.
    pub error_multiplier: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { ofu: OfuConfig::default(), ts: TsConfig::default(), lambda: sysid::DEFAULT_LAMBDA, error_multiplier: 1.0 }
    }
}

/// OFU or TS with the determinant switch rule and no injected noise.
pub fn run_switching(
    strategy: Strategy,
    truth: &LinearSystem,
    warmup: &Warmup,
    cfg: &BaselineConfig,
    horizon: usize,
    seed: u64,
) -> Result<EpochTrace> {
    let (rule, params) = match strategy {
        Strategy::Ofu => (SwitchRule::Det, cfg.ofu.switch),
        Strategy::Ts => (SwitchRule::DetPlusTau(cfg.ts.tau), cfg.ts.switch),
        _ => return Err(Error::Invalid("not a switching strategy".into())),
    };
    let mut run = Runner::start(truth, warmup, seed)?;
    let mut aux = rng::aux_rng(seed, 0);
    let mut ridge = RidgeData::from(&run.warm, cfg.lambda);
    let truth_theta = sysid::stack_theta(&truth.a, &truth.b);
    let mut active = Active::Static(warmup.k0.clone());
    let mut selected: Option<Mat> = None;
    let mut epochs: Vec<EpochRecord> = Vec::new();
    while run.elapsed() < horizon && !run.diverged() {
        let theta_hat = ridge.theta()?;
        let d = &theta_hat - &truth_theta;
        let eps = (&d * &ridge.gram * d.transpose()).trace() * cfg.error_multiplier.powi(2);
        let ell = ConfidenceEllipsoid { theta_hat: theta_hat.clone(), z: ridge.gram.clone(), eps };
        let pick = match strategy {
            Strategy::Ofu => baselines::ofu_select(&ell, truth, selected.as_ref(), &cfg.ofu, &mut aux)
                .map(|s| (s.theta, s.gain)),
            _ => baselines::ts_select(&ell, truth, &cfg.ts, &mut aux).ok_or(Error::NoStabilizablePoint),
        };
        let status = match pick {
            Ok((theta, gain)) => {
                selected = Some(theta);
                active = Active::Static(gain);
                EpochStatus::Updated
            }
            Err(e) => EpochStatus::Kept(e.to_string()),
        };
        let (a_hat, b_hat) = sysid::split_theta(&theta_hat, truth.n());
        let est = ParamEstimate { a_hat, b_hat, eps_a: 0.0, eps_b: 0.0 };
        let start = run.elapsed();
        epochs.push(EpochRecord {
            start,
            len: 0,
            sigma_eta: 0.0,
            data_len: run.data_len(),
            est_error: est.error_to(truth),
            estimate: est,
            eps: (eps, eps),
            status,
            controller: active.descriptor(0.0),
            cost: linsys::infinite_horizon_cost(truth, &active.controller()),
            end: EpochEnd::Horizon,
        });
        let logdet_i = log_det_spd(&ridge.gram);
        let end = loop {
            let x = run.traj.last_state().clone();
            run.step(&mut active, 0.0);
            let k = run.traj.len();
            ridge.push(&x, &run.traj.inputs[k - 1], &run.traj.states[k]);
            if run.diverged() {
                break EpochEnd::Diverged;
            }
            if run.elapsed() >= horizon {
                break EpochEnd::Horizon;
            }
            let state = SwitchState { t: run.elapsed(), t_i: start, logdet: log_det_spd(&ridge.gram), logdet_i };
            if epoch_switch(rule, &params, &state) {
                break if epoch_switch(SwitchRule::Det, &params, &state) { EpochEnd::Determinant } else { EpochEnd::Tau };
            }
        };
        let last = epochs.last_mut().unwrap();
        last.len = run.elapsed() - start;
        last.end = end;
    }
    Ok(run.finish(strategy, epochs))
}

/// Any strategy with its default loop.
pub fn run_baseline(
    strategy: Strategy,
    truth: &LinearSystem,
    warmup: &Warmup,
    robust: &RobustConfig,
    baseline: &BaselineConfig,
    horizon: usize,
    seed: u64,
) -> Result<EpochTrace> {
    match strategy {
        Strategy::Robust => run_robust_adaptive(truth, warmup, robust, horizon, seed),
        Strategy::Nominal => run_nominal(truth, warmup, robust, horizon, seed),
        Strategy::Ofu | Strategy::Ts => run_switching(strategy, truth, warmup, baseline, horizon, seed),
    }
}

/// Log-log least-squares slope of `(x, y)` pairs with positive entries.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
