//! Operator splitting on the homogeneous self-dual embedding, in the manner
//! of SCS: `u = (x, y, τ)`, `v = (r, s, κ)` and one linear solve with the
//! cached factor of `I + ÃᵀÃ` per iteration.

use super::cones::{self, BlockKind, ConeSpec};
use super::sparse::{CscMatrix, LdlFactor};
use super::{ConicProblem, ConicSolution, Status};

#[derive(Clone, Debug, PartialEq)]
pub struct ScsSettings {
    pub eps: f64,
    pub eps_infeas: f64,
    pub max_iters: usize,
    /// Over-relaxation parameter in (0, 2).
    pub alpha: f64,
    /// Multiplies the normalized `b` and `c`.
    pub scale: f64,
    /// Extra weight on the `x` block of the splitting metric.
    pub rho_x: f64,
    /// Ruiz equilibration plus normalization of `b` and `c`. Off by
    /// default: on the synthesis programs the unscaled iteration converges
    /// several times faster.
    pub normalize: bool,
    /// Iterations between residual checks.
    pub check_interval: usize,
    /// Consecutive iterations a certificate must persist.
    pub infeas_window: usize,
    /// Anderson acceleration memory; 0 disables it.
    pub anderson_memory: usize,
    /// Iterations between rebalancing of the primal/dual metric; 0 disables
    /// it. The weight of the constraint rows is multiplied by
    /// `sqrt(primal / dual residual)` whenever the two drift apart.
    pub adapt_interval: usize,
}

impl Default for ScsSettings {
    fn default() -> Self {
        Self {
            eps: 1e-7,
            eps_infeas: 1e-7,
            max_iters: 200_000,
            alpha: 1.5,
            scale: 1.0,
            rho_x: 1e-3,
            normalize: false,
            check_interval: 5,
            infeas_window: 100,
            anderson_memory: 0,
            adapt_interval: 0,
        }
    }
}

/// Factored problem ready for repeated solves with new `b` or `c`.
pub struct ScsSolver {
    settings: ScsSettings,
    cones: ConeSpec,
    n: usize,
    m: usize,
    a_orig: CscMatrix,
    b_orig: Vec<f64>,
    c_orig: Vec<f64>,
    a: CscMatrix,
    b: Vec<f64>,
    c: Vec<f64>,
    d: Vec<f64>,
    /// Row scales before the adaptive weight.
    d_base: Vec<f64>,
    row_weight: f64,
    e: Vec<f64>,
    sc_b: f64,
    sc_c: f64,
    factor: LdlFactor,
    g: Vec<f64>,
    hg: f64,
    work: Vec<f64>,
    warm: Option<(Vec<f64>, Vec<f64>, Vec<f64>)>,
}

impl ScsSolver {
    pub fn new(prob: &ConicProblem, settings: ScsSettings) -> Self {
        let n = prob.n();
        let m = prob.m();
        assert_eq!(prob.cones.rows(), m, "cone rows do not match constraint rows");
        let mut a = prob.a.clone();
        let (mut d, mut e) = (vec![1.0; m], vec![1.0; n]);
        if settings.normalize {
            equilibrate(&a, &prob.cones, &mut d, &mut e);
        }
        let sx = 1.0 / settings.rho_x.sqrt();
        e.iter_mut().for_each(|v| *v *= sx);
        a.scale(&d, &e);
        let factor = LdlFactor::new(&a.normal_matrix(1.0)).expect("I + AᵀA is positive definite");
        let d_base = d.clone();
        let mut solver = Self {
            settings,
            cones: prob.cones.clone(),
            n,
            m,
            a_orig: prob.a.clone(),
            b_orig: prob.b.clone(),
            c_orig: prob.c.clone(),
            a,
            b: vec![0.0; m],
            c: vec![0.0; n],
            d,
            d_base,
            row_weight: 1.0,
            e,
            sc_b: 1.0,
            sc_c: 1.0,
            factor,
            g: vec![0.0; n + m],
            hg: 0.0,
            work: Vec::new(),
            warm: None,
        };
        solver.rescale_data();
        solver
    }

    pub fn settings_mut(&mut self) -> &mut ScsSettings {
        &mut self.settings
    }

    /// Replaces the right-hand side; the factorization is reused.
    pub fn update_b(&mut self, b: &[f64]) {
        assert_eq!(b.len(), self.m);
        self.b_orig.copy_from_slice(b);
        self.rescale_data();
    }

    pub fn update_c(&mut self, c: &[f64]) {
        assert_eq!(c.len(), self.n);
        self.c_orig.copy_from_slice(c);
        self.rescale_data();
    }

    /// Initial point `(x, y, s)` in the original variables for the next solve.
    pub fn warm_start(&mut self, x: &[f64], y: &[f64], s: &[f64]) {
        self.warm = Some((x.to_vec(), y.to_vec(), s.to_vec()));
    }

    /// Rebuilds the scaled matrix and its factor for a new row weight.
    fn set_row_weight(&mut self, w: f64) {
        self.row_weight = w;
        self.d = self.d_base.iter().map(|v| v * w).collect();
        let mut a = self.a_orig.clone();
        a.scale(&self.d, &self.e);
        self.factor = LdlFactor::new(&a.normal_matrix(1.0)).expect("I + AᵀA is positive definite");
        self.a = a;
        self.rescale_data();
    }

    /// Embeds an original-space point as `(u, v)` with `τ = 1`, `κ = 0`.
    fn embed(&self, x: &[f64], y: &[f64], s: &[f64], u: &mut [f64], v: &mut [f64]) {
        let (n, m) = (self.n, self.m);
        for j in 0..n {
            u[j] = x[j] / self.e[j] * self.sc_b;
            v[j] = 0.0;
        }
        for i in 0..m {
            u[n + i] = y[i] / self.d[i] * self.sc_c;
            v[n + i] = s[i] * self.d[i] * self.sc_b;
        }
        u[n + m] = 1.0;
        v[n + m] = 0.0;
    }

    fn rescale_data(&mut self) {
        let (n, m) = (self.n, self.m);
        let mut b: Vec<f64> = (0..m).map(|i| self.b_orig[i] * self.d[i]).collect();
        let mut c: Vec<f64> = (0..n).map(|j| self.c_orig[j] * self.e[j]).collect();
        if self.settings.normalize {
            let (row_mean, col_mean) = mean_norms(&self.a);
            let nb = norm2(&b).max(1e-4);
            let nc = norm2(&c).max(1e-4);
            self.sc_b = col_mean / nb * self.settings.scale;
            self.sc_c = row_mean / nc * self.settings.scale;
        } else {
            self.sc_b = self.settings.scale;
            self.sc_c = self.settings.scale;
        }
        b.iter_mut().for_each(|v| *v *= self.sc_b);
        c.iter_mut().for_each(|v| *v *= self.sc_c);
        self.b = b;
        self.c = c;
        let mut h = Vec::with_capacity(n + m);
        h.extend_from_slice(&self.c);
        h.extend_from_slice(&self.b);
        let mut g = h.clone();
        self.solve_m(&mut g);
        self.hg = dot(&h, &g);
        self.g = g;
    }

    /// In place `(I + M)⁻¹ w` with `M = [[0, Aᵀ], [−A, 0]]`.
    fn solve_m(&mut self, w: &mut [f64]) {
        let (n, m) = (self.n, self.m);
        let (wx, wy) = w.split_at_mut(n);
        let mut rhs = vec![0.0; n];
        self.a.tmul_vec(wy, &mut rhs);
        for j in 0..n {
            rhs[j] = wx[j] - rhs[j];
        }
        self.factor.solve(&mut rhs, &mut self.work);
        wx.copy_from_slice(&rhs);
        let mut ax = vec![0.0; m];
        self.a.mul_vec(wx, &mut ax);
        for i in 0..m {
            wy[i] += ax[i];
        }
    }

    /// In place `(I + Q)⁻¹ w` on the full `(x, y, τ)` vector.
    fn solve_q(&mut self, w: &mut [f64]) {
        let l = self.n + self.m;
        let w_tau = w[l];
        let mut z = w[..l].to_vec();
        self.solve_m(&mut z);
        let mut hz = 0.0;
        for j in 0..self.n {
            hz += self.c[j] * z[j];
        }
        for i in 0..self.m {
            hz += self.b[i] * z[self.n + i];
        }
        let tau = (w_tau + hz) / (1.0 + self.hg);
        for k in 0..l {
            w[k] = z[k] - tau * self.g[k];
        }
        w[l] = tau;
    }

    pub fn solve(&mut self) -> ConicSolution {
        let (n, m) = (self.n, self.m);
        let l = n + m + 1;
        let alpha = self.settings.alpha;
        let mut u = vec![0.0; l];
        let mut v = vec![0.0; l];
        u[l - 1] = 1.0;
        v[l - 1] = 1.0;
        if let Some((x, y, s)) = self.warm.take() {
            self.embed(&x, &y, &s, &mut u, &mut v);
        }
        let mut ut = vec![0.0; l];
        let mut infeas_since: Option<usize> = None;
        let mut unbdd_since: Option<usize> = None;
        let mut aa = Anderson::new(self.settings.anderson_memory, l * 2);
        let mut last = None;
        for it in 0..self.settings.max_iters {
            let mut state_in = Vec::new();
            if aa.enabled() {
                state_in.reserve(2 * l);
                state_in.extend_from_slice(&u);
                state_in.extend_from_slice(&v);
            }
            for k in 0..l {
                ut[k] = u[k] + v[k];
            }
            self.solve_q(&mut ut);
            for k in 0..l {
                ut[k] = alpha * ut[k] + (1.0 - alpha) * u[k];
            }
            for k in 0..l {
                u[k] = ut[k] - v[k];
            }
            cones::project_dual(&mut u[n..n + m], &self.cones);
            if u[l - 1] < 0.0 {
                u[l - 1] = 0.0;
            }
            for k in 0..l {
                v[k] += u[k] - ut[k];
            }
            if aa.enabled() {
                let mut state_out = Vec::with_capacity(2 * l);
                state_out.extend_from_slice(&u);
                state_out.extend_from_slice(&v);
                if let Some(next) = aa.step(&state_in, &state_out) {
                    u.copy_from_slice(&next[..l]);
                    v.copy_from_slice(&next[l..]);
                }
            }
            let check = it % self.settings.check_interval == 0 || it + 1 == self.settings.max_iters;
            if !check {
                continue;
            }
            let report = self.residuals(&u, &v, it + 1);
            if report.status == Status::Optimal {
                return report;
            }
            let adapt = self.settings.adapt_interval;
            if adapt > 0 && it > 0 && it % adapt == 0 && u[l - 1] > 1e-6 * (1.0 + v[l - 1]) {
                let ratio = report.primal_residual / report.dual_residual.max(1e-300);
                if !(1.0 / 3.0..=3.0).contains(&ratio) {
                    let w = (self.row_weight * ratio.sqrt().clamp(0.1, 10.0)).clamp(1e-4, 1e4);
                    if w != self.row_weight {
                        self.set_row_weight(w);
                        self.embed(&report.x, &report.y, &report.s, &mut u, &mut v);
                        aa = Anderson::new(self.settings.anderson_memory, l * 2);
                        infeas_since = None;
                        unbdd_since = None;
                        continue;
                    }
                }
            }
            let cert = self.certificates(&u, &v);
            let eps_inf = self.settings.eps_infeas;
            infeas_since = if cert.0 <= eps_inf { infeas_since.or(Some(it)) } else { None };
            unbdd_since = if cert.1 <= eps_inf { unbdd_since.or(Some(it)) } else { None };
            let window = self.settings.infeas_window;
            if infeas_since.is_some_and(|s| it - s >= window) {
                return self.certificate_solution(&u, &v, Status::Infeasible, it + 1, report);
            }
            if unbdd_since.is_some_and(|s| it - s >= window) {
                return self.certificate_solution(&u, &v, Status::Unbounded, it + 1, report);
            }
            last = Some(report);
        }
        let mut out = last.unwrap_or_else(|| self.residuals(&u, &v, self.settings.max_iters));
        out.status = Status::MaxIters;
        out
    }

    fn unscale(&self, u: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (n, m) = (self.n, self.m);
        let x = (0..n).map(|j| u[j] * self.e[j] / self.sc_b).collect();
        let y = (0..m).map(|i| u[n + i] * self.d[i] / self.sc_c).collect();
        let s = (0..m).map(|i| v[n + i] / self.d[i] / self.sc_b).collect();
        (x, y, s)
    }

    fn residuals(&self, u: &[f64], v: &[f64], iters: usize) -> ConicSolution {
        let (n, m) = (self.n, self.m);
        let tau = u[n + m];
        let (mut x, mut y, mut s) = self.unscale(u, v);
        if tau > 0.0 {
            x.iter_mut().for_each(|t| *t /= tau);
            y.iter_mut().for_each(|t| *t /= tau);
            s.iter_mut().for_each(|t| *t /= tau);
        }
        let mut ax = vec![0.0; m];
        self.a_orig.mul_vec(&x, &mut ax);
        let mut aty = vec![0.0; n];
        self.a_orig.tmul_vec(&y, &mut aty);
        let pres_num = (0..m).map(|i| (ax[i] + s[i] - self.b_orig[i]).abs()).fold(0.0, f64::max);
        let pres = pres_num / (1.0 + inf_norm(&ax).max(inf_norm(&s)).max(inf_norm(&self.b_orig)));
        let dres_num = (0..n).map(|j| (aty[j] + self.c_orig[j]).abs()).fold(0.0, f64::max);
        let dres = dres_num / (1.0 + inf_norm(&aty).max(inf_norm(&self.c_orig)));
        let pobj = dot(&self.c_orig, &x);
        let dobj = -dot(&self.b_orig, &y);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        let eps = self.settings.eps;
        let status = if tau > 0.0 && pres <= eps && dres <= eps && gap <= eps {
            Status::Optimal
        } else {
            Status::MaxIters
        };
        ConicSolution {
            x,
            y,
            s,
            status,
            primal_residual: pres,
            dual_residual: dres,
            gap,
            primal_objective: pobj,
            dual_objective: dobj,
            iterations: iters,
        }
    }

    /// Normalized residuals of the infeasibility and unboundedness certificates.
    fn certificates(&self, u: &[f64], v: &[f64]) -> (f64, f64) {
        let (n, m) = (self.n, self.m);
        let (x, y, s) = self.unscale(u, v);
        let by = dot(&self.b_orig, &y);
        let infeas = if by < 0.0 {
            let mut aty = vec![0.0; n];
            self.a_orig.tmul_vec(&y, &mut aty);
            inf_norm(&aty) * (1.0 + inf_norm(&self.b_orig)) / -by
        } else {
            f64::INFINITY
        };
        let cx = dot(&self.c_orig, &x);
        let unbdd = if cx < 0.0 {
            let mut axs = vec![0.0; m];
            self.a_orig.mul_vec(&x, &mut axs);
            for i in 0..m {
                axs[i] += s[i];
            }
            inf_norm(&axs) * (1.0 + inf_norm(&self.c_orig)) / -cx
        } else {
            f64::INFINITY
        };
        (infeas, unbdd)
    }

    fn certificate_solution(
        &self,
        u: &[f64],
        v: &[f64],
        status: Status,
        iters: usize,
        report: ConicSolution,
    ) -> ConicSolution {
        let (x, y, s) = self.unscale(u, v);
        let (x, y, s) = match status {
            Status::Infeasible => {
                let by = -dot(&self.b_orig, &y);
                (vec![f64::NAN; x.len()], y.iter().map(|t| t / by).collect(), vec![f64::NAN; s.len()])
            }
            _ => {
                let cx = -dot(&self.c_orig, &x);
                (x.iter().map(|t| t / cx).collect(), vec![f64::NAN; y.len()], s.iter().map(|t| t / cx).collect())
            }
        };
        ConicSolution { x, y, s, status, iterations: iters, ..report }
    }
}

/// One-shot solve with the given tolerance and iteration cap.
pub fn solve_conic(prob: &ConicProblem, tol: f64, max_iters: usize) -> ConicSolution {
    let settings = ScsSettings { eps: tol, max_iters, ..ScsSettings::default() };
    ScsSolver::new(prob, settings).solve()
}

/// Ruiz equilibration with row scales tied inside each SOC and PSD block.
fn equilibrate(a: &CscMatrix, spec: &ConeSpec, d: &mut [f64], e: &mut [f64]) {
    let (m, n) = (a.nrows, a.ncols);
    let mut work = a.clone();
    for _ in 0..25 {
        let mut row = vec![0.0_f64; m];
        let mut col = vec![0.0_f64; n];
        for j in 0..n {
            for p in work.colptr[j]..work.colptr[j + 1] {
                let v = work.nzval[p].abs();
                row[work.rowval[p]] = row[work.rowval[p]].max(v);
                col[j] = col[j].max(v);
            }
        }
        for (start, len, kind) in spec.blocks() {
            if matches!(kind, BlockKind::Soc | BlockKind::Psd(_)) {
                let mean = row[start..start + len].iter().sum::<f64>() / len as f64;
                row[start..start + len].iter_mut().for_each(|r| *r = mean);
            }
        }
        let dr: Vec<f64> = row.iter().map(|&r| 1.0 / clamp_scale(r).sqrt()).collect();
        let dc: Vec<f64> = col.iter().map(|&c| 1.0 / clamp_scale(c).sqrt()).collect();
        work.scale(&dr, &dc);
        for i in 0..m {
            d[i] *= dr[i];
        }
        for j in 0..n {
            e[j] *= dc[j];
        }
    }
}

fn clamp_scale(v: f64) -> f64 {
    if v < 1e-4 {
        1.0
    } else {
        v.min(1e4)
    }
}

fn mean_norms(a: &CscMatrix) -> (f64, f64) {
    let mut row = vec![0.0; a.nrows];
    let mut col = vec![0.0; a.ncols];
    for j in 0..a.ncols {
        for p in a.colptr[j]..a.colptr[j + 1] {
            let v = a.nzval[p] * a.nzval[p];
            row[a.rowval[p]] += v;
            col[j] += v;
        }
    }
    let mean = |v: &[f64]| if v.is_empty() { 1.0 } else { v.iter().map(|x| x.sqrt()).sum::<f64>() / v.len() as f64 };
    (mean(&row), mean(&col))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Type-II Anderson acceleration on the fixed-point map of the iteration.
struct Anderson {
    mem: usize,
    dim: usize,
    prev_in: Option<Vec<f64>>,
    prev_g: Option<Vec<f64>>,
    r_hist: Vec<Vec<f64>>,
    g_hist: Vec<Vec<f64>>,
}

impl Anderson {
    fn new(mem: usize, dim: usize) -> Self {
        Self { mem, dim, prev_in: None, prev_g: None, r_hist: Vec::new(), g_hist: Vec::new() }
    }

    fn enabled(&self) -> bool {
        self.mem > 0
    }

    /// Given the iterate `x` and its image `g(x)`, returns an extrapolated
    /// next iterate, or `None` to accept `g(x)`.
    fn step(&mut self, x: &[f64], gx: &[f64]) -> Option<Vec<f64>> {
        let f: Vec<f64> = gx.iter().zip(x).map(|(g, x)| g - x).collect();
        let out = match (&self.prev_in, &self.prev_g) {
            (Some(px), Some(pg)) => {
                let pf: Vec<f64> = pg.iter().zip(px).map(|(g, x)| g - x).collect();
                self.r_hist.push(f.iter().zip(&pf).map(|(a, b)| a - b).collect());
                self.g_hist.push(gx.iter().zip(pg).map(|(a, b)| a - b).collect());
                if self.r_hist.len() > self.mem {
                    self.r_hist.remove(0);
                    self.g_hist.remove(0);
                }
                let k = self.r_hist.len();
                // Least squares min ‖f − Rγ‖ through the normal equations.
                let mut gram = nalgebra::DMatrix::<f64>::zeros(k, k);
                let mut rhs = nalgebra::DVector::<f64>::zeros(k);
                for i in 0..k {
                    for j in 0..=i {
                        let v = dot(&self.r_hist[i], &self.r_hist[j]);
                        gram[(i, j)] = v;
                        gram[(j, i)] = v;
                    }
                    rhs[i] = dot(&self.r_hist[i], &f);
                }
                let reg = 1e-10 * (0..k).map(|i| gram[(i, i)]).fold(0.0, f64::max);
                for i in 0..k {
                    gram[(i, i)] += reg;
                }
                match nalgebra::Cholesky::new(gram) {
                    Some(ch) => {
                        let gamma = ch.solve(&rhs);
                        let mut next = gx.to_vec();
                        for (i, gh) in self.g_hist.iter().enumerate() {
                            let c = gamma[i];
                            for t in 0..self.dim {
                                next[t] -= c * gh[t];
                            }
                        }
                        if next.iter().all(|v| v.is_finite()) {
                            Some(next)
                        } else {
                            None
                        }
                    }
                    None => None,
                }
            }
            _ => None,
        };
        self.prev_in = Some(x.to_vec());
        self.prev_g = Some(gx.to_vec());
        out
    }
}
