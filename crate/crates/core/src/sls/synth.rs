use serde::{Deserialize, Serialize};

use super::{FirResponse, GammaStrategy, SynthesisConfig};
use crate::conic::{hinf_lmi_block, ConicProblem, spectral_norm_constraint, ConicBuilder, ExprMat, LinExpr, ScsSolver, Status};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::sysid::ParamEstimate;

/// Grid-then-golden-section search over `γ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaGrid {
    pub points: usize,
    pub cap: f64,
    pub refine_steps: usize,
    /// Iteration cap per grid point. Points close to the feasibility
    /// boundary converge slowly and are treated as infeasible past it.
    pub max_iters: usize,
}

impl Default for GammaGrid {
    fn default() -> Self {
        Self { points: 20, cap: 0.995, refine_steps: 12, max_iters: 5_000 }
    }
}

/// Minimizes `(1−γ)⁻¹·inner(γ)` over `[0, cap]`. `inner` returns `None`
/// where infeasible; the payload of the best evaluation is returned.
pub fn gamma_search<T, F>(mut inner: F, grid: &GammaGrid) -> Result<(f64, f64, T)>
where
    F: FnMut(f64) -> Option<(f64, T)>,
{
    assert!(grid.points >= 2 && grid.cap < 1.0);
    let mut best: Option<(f64, f64, T)> = None;
    let mut eval = |g: f64, best: &mut Option<(f64, f64, T)>| -> f64 {
        match inner(g) {
            Some((v, payload)) => {
                let score = v / (1.0 - g);
                if best.as_ref().is_none_or(|b| score < b.1) {
                    *best = Some((g, score, payload));
                }
                score
            }
            None => f64::INFINITY,
        }
    };
    let step = grid.cap / (grid.points - 1) as f64;
    let scores: Vec<f64> = (0..grid.points).map(|i| eval(i as f64 * step, &mut best)).collect();
    let Some(i_best) = (0..grid.points).filter(|&i| scores[i].is_finite()).min_by(|&a, &b| scores[a].total_cmp(&scores[b]))
    else {
        return Err(Error::Infeasible);
    };
    let mut lo = i_best.saturating_sub(1) as f64 * step;
    let mut hi = ((i_best + 1).min(grid.points - 1)) as f64 * step;
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = eval(x1, &mut best);
    let mut f2 = eval(x2, &mut best);
    for _ in 0..grid.refine_steps {
        // Infeasible points count as +∞, which pushes the bracket towards
        // the feasible side.
        if f1 <= f2 && f1.is_finite() {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = eval(x1, &mut best);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = eval(x2, &mut best);
        }
    }
    best.ok_or(Error::Infeasible)
}

/// Result of a robust synthesis.
#[derive(Clone, Debug)]
pub struct SynthesisOutcome {
    pub response: FirResponse,
    /// `(1−γ)⁻¹‖[Q^{1/2}; R^{1/2}][Φx; Φu]‖_{H2}` at the chosen `γ`.
    pub objective: f64,
    /// The inner H2 cost alone.
    pub h2: f64,
    pub solves: usize,
    pub iterations: usize,
}

/// The FIR SDP for one model, factored once and re-solved for many `γ`.
///
/// Variables are `t` and `Φu(1..F)` row-major. `Φx(k)` and the residual
/// `V = ÂΦx(F) + B̂Φu(F)` are affine expressions in `Φu`.
pub struct SlsProblem {
    a_hat: Mat,
    b_hat: Mat,
    f: usize,
    phi_u_start: usize,
    solver: ScsSolver,
    b: Vec<f64>,
    gamma_rows: Vec<usize>,
    warm: Option<(Vec<f64>, Vec<f64>, Vec<f64>)>,
    problem: ConicProblem,
    cached: Option<Option<(f64, FirResponse)>>,
    pub solves: usize,
    pub iterations: usize,
}

/// The response taps as affine expressions, for callers adding constraints.
pub struct SlsVars {
    pub n: usize,
    pub p: usize,
    pub f: usize,
    px: Vec<ExprMat>,
    pu: Vec<ExprMat>,
    v: ExprMat,
}

impl SlsVars {
    /// `Φx(k)` for `k` in `1..=F`.
    pub fn phi_x(&self, k: usize) -> ExprMat {
        self.px[k - 1].clone()
    }

    /// `Φu(k)` for `k` in `1..=F`.
    pub fn phi_u(&self, k: usize) -> ExprMat {
        self.pu[k - 1].clone()
    }

    /// The truncation residual `V = ÂΦx(F) + B̂Φu(F)`.
    pub fn residual(&self) -> &ExprMat {
        &self.v
    }
}

impl SlsProblem {
    /// Robust problem of the adaptive loop.
    pub fn robust(a_hat: &Mat, b_hat: &Mat, q: &Mat, r: &Mat, cfg: &SynthesisConfig) -> Result<Self> {
        Self::build(a_hat, b_hat, q, r, None, cfg, true, |_, _| {})
    }

    /// General builder. `noise_input` weights the H2 objective by the
    /// noise-to-state map; `hinf` toggles the robustness LMI; `extra` may add
    /// further constraints on the responses.
    #[allow(clippy::too_many_arguments)]
    pub fn build<E>(
        a_hat: &Mat,
        b_hat: &Mat,
        q: &Mat,
        r: &Mat,
        noise_input: Option<&Mat>,
        cfg: &SynthesisConfig,
        hinf: bool,
        extra: E,
    ) -> Result<Self>
    where
        E: FnOnce(&mut ConicBuilder, &SlsVars),
    {
        let (n, p, f) = (a_hat.nrows(), b_hat.ncols(), cfg.f);
        if f == 0 || !(cfg.rho > 0.0 && cfg.rho < 1.0) {
            return Err(Error::Invalid(format!("need F ≥ 1 and ρ in (0,1), got F={f} ρ={}", cfg.rho)));
        }
        // ‖Φx(1)‖ = ‖I‖ = 1 must sit inside the envelope.
        if cfg.c_x * cfg.rho < 1.0 - 1e-12 {
            return Err(Error::Infeasible);
        }
        let residual_cap = cfg.residual_cap();
        let with_hinf = hinf && (cfg.eps_a > 0.0 || cfg.eps_b > 0.0);
        if with_hinf && residual_cap >= 1.0 {
            return Err(Error::Infeasible);
        }
        let mut bld = ConicBuilder::new();
        let t_var = bld.new_vars(1);
        bld.set_cost(t_var, 1.0);
        let phi_u_start = bld.new_vars(f * p * n);
        let pu: Vec<ExprMat> = (0..f).map(|k| ExprMat::vars(phi_u_start + k * p * n, p, n)).collect();
        // Φx is eliminated through Φx(k+1) = ÂΦx(k) + B̂Φu(k); long equality
        // chains slow the splitting method down considerably.
        let mut px = vec![ExprMat::constant(&Mat::identity(n, n))];
        for k in 0..f - 1 {
            let next = px[k].left_mul(a_hat).plus(&pu[k].left_mul(b_hat));
            px.push(next);
        }
        let v = px[f - 1].left_mul(a_hat).plus(&pu[f - 1].left_mul(b_hat));

        // H2 cost through one second-order cone.
        let qh = linalg::sym_sqrt(q);
        let rh = linalg::sym_sqrt(r);
        let mut soc = vec![LinExpr::var(t_var)];
        for k in 0..f {
            let mut xk = px[k].left_mul(&qh);
            let mut uk = pu[k].left_mul(&rh);
            if let Some(w) = noise_input {
                xk = right_mul(&xk, w);
                uk = right_mul(&uk, w);
            }
            soc.extend(xk.data);
            soc.extend(uk.data);
        }
        bld.add_soc(soc);

        for k in 2..=f {
            spectral_norm_constraint(&mut bld, &px[k - 1], cfg.c_x * cfg.rho.powi(k as i32));
        }
        for k in 1..=f {
            spectral_norm_constraint(&mut bld, &pu[k - 1], cfg.c_u * cfg.rho.powi(k as i32));
        }
        spectral_norm_constraint(&mut bld, &v, residual_cap);

        let mut gamma_rows = Vec::new();
        if with_hinf {
            let kappa = 1.0 / (1.0 - residual_cap);
            let sa = kappa * cfg.eps_a / cfg.alpha.sqrt();
            let sb = kappa * cfg.eps_b / (1.0 - cfg.alpha).sqrt();
            let mut taps = vec![ExprMat::zeros(n, n + p)];
            for k in 0..f {
                let xt = px[k].transpose().scaled(sa);
                let ut = pu[k].transpose().scaled(sb);
                taps.push(ExprMat::hstack(&[&xt, &ut]));
            }
            gamma_rows = hinf_lmi_block(&mut bld, &taps, &LinExpr::constant(0.0)).zero_rows;
        }
        let vars = SlsVars { n, p, f, px, pu, v };
        extra(&mut bld, &vars);

        let prob = bld.build();
        let solver = ScsSolver::new(&prob, cfg.solver.clone());
        Ok(Self {
            a_hat: a_hat.clone(),
            b_hat: b_hat.clone(),
            f,
            phi_u_start,
            solver,
            b: prob.b.clone(),
            problem: prob,
            gamma_rows,
            warm: None,
            cached: None,
            solves: 0,
            iterations: 0,
        })
    }

    /// The assembled conic program (with `γ = 0` in the LMI rows).
    pub fn problem(&self) -> &ConicProblem {
        &self.problem
    }

    /// The assembled program with the LMI rows set for `γ`.
    pub fn problem_at(&self, gamma: f64) -> ConicProblem {
        let mut p = self.problem.clone();
        for &row in &self.gamma_rows {
            p.b[row] = -gamma * gamma;
        }
        p
    }

    pub fn set_max_iters(&mut self, iters: usize) {
        self.solver.settings_mut().max_iters = iters;
    }

    /// Whether `γ` enters the problem at all.
    pub fn depends_on_gamma(&self) -> bool {
        !self.gamma_rows.is_empty()
    }

    /// Inner H2 optimum at fixed `γ`, with the response re-propagated so the
    /// subspace equalities hold exactly.
    pub fn solve_at(&mut self, gamma: f64) -> Option<(f64, FirResponse)> {
        if !self.depends_on_gamma() {
            if let Some(c) = &self.cached {
                return c.clone().map(|(h, mut r)| {
                    r.gamma = gamma;
                    (h, r)
                });
            }
        }
        for &row in &self.gamma_rows {
            self.b[row] = -gamma * gamma;
        }
        self.solver.update_b(&self.b);
        if let Some((x, y, s)) = &self.warm {
            self.solver.warm_start(x, y, s);
        }
        let sol = self.solver.solve();
        self.solves += 1;
        self.iterations += sol.iterations;
        let accepted = match sol.status {
            Status::Optimal => true,
            // Slow tails are common on these SDPs; a nearly feasible iterate
            // is still accepted because the response is re-propagated and
            // the caller re-checks the certificate.
            Status::MaxIters => sol.primal_residual < 1e-5 && sol.dual_residual < 1e-4,
            Status::Infeasible | Status::Unbounded => false,
        };
        let out = if accepted {
            self.warm = Some((sol.x.clone(), sol.y.clone(), sol.s.clone()));
            let mut resp = self.polish(&sol.x);
            resp.gamma = gamma;
            Some((sol.x[0], resp))
        } else {
            None
        };
        if !self.depends_on_gamma() {
            self.cached = Some(out.clone());
        }
        out
    }

    fn polish(&self, x: &[f64]) -> FirResponse {
        let n = self.a_hat.nrows();
        let p = self.b_hat.ncols();
        let phi_u: Vec<Mat> =
            (0..self.f).map(|k| ExprMat::vars(self.phi_u_start + k * p * n, p, n).eval(x)).collect();
        let mut phi_x = vec![Mat::identity(n, n)];
        for k in 0..self.f - 1 {
            let next = &self.a_hat * &phi_x[k] + &self.b_hat * &phi_u[k];
            phi_x.push(next);
        }
        let v = &self.a_hat * &phi_x[self.f - 1] + &self.b_hat * &phi_u[self.f - 1];
        FirResponse { phi_x, phi_u, v, gamma: 0.0, eps_a: 0.0, eps_b: 0.0 }
    }
}

fn right_mul(e: &ExprMat, w: &Mat) -> ExprMat {
    e.transpose().left_mul(&w.transpose()).transpose()
}

/// Robust FIR synthesis on the estimate, minimizing `(1−γ)⁻¹·H2` under the
/// configured `γ` strategy.
pub fn synthesize_robust(est: &ParamEstimate, cfg: &SynthesisConfig, q: &Mat, r: &Mat) -> Result<SynthesisOutcome> {
    let mut cfg = cfg.clone();
    cfg.eps_a = est.eps_a.max(cfg.eps_a);
    cfg.eps_b = est.eps_b.max(cfg.eps_b);
    let mut prob = SlsProblem::robust(&est.a_hat, &est.b_hat, q, r, &cfg)?;
    let (gamma, objective, (h2, mut response)) = match cfg.gamma {
        GammaStrategy::Fixed(g) => {
            let (h2, resp) = prob.solve_at(g).ok_or(Error::Infeasible)?;
            (g, h2 / (1.0 - g), (h2, resp))
        }
        GammaStrategy::Search(grid) if !prob.depends_on_gamma() => {
            // Without the LMI the inner value is flat in γ, so γ = 0 wins.
            let (h2, resp) = prob.solve_at(0.0).ok_or(Error::Infeasible)?;
            let _ = grid;
            (0.0, h2, (h2, resp))
        }
        GammaStrategy::Search(grid) => {
            prob.set_max_iters(grid.max_iters);
            gamma_search(|g| prob.solve_at(g).map(|(h2, resp)| (h2, (h2, resp))), &grid)?
        }
    };
    response.gamma = gamma;
    response.eps_a = cfg.eps_a;
    response.eps_b = cfg.eps_b;
    Ok(SynthesisOutcome { response, objective, h2, solves: prob.solves, iterations: prob.iterations })
}
