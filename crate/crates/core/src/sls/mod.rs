//! FIR-truncated system level synthesis: the robust SDP, the outer search
//! over `γ`, controller realization, and the ℓ∞-constrained variant used for
//! disturbance forecasting.

mod constrained;
mod realize;
mod synth;

use serde::{Deserialize, Serialize};

use crate::conic::ScsSettings;
use crate::linalg::{self, Mat};

pub use constrained::{constrained_problem, demand_augmented, demand_config, synthesize_constrained, ConstrainedSpec};
pub use realize::{realize_controller, validate_realization, RealizedController};
pub use synth::{gamma_search, synthesize_robust, GammaGrid, SlsProblem, SlsVars, SynthesisOutcome};

/// System responses `Φx(1..F)`, `Φu(1..F)` and the truncation residual
/// `V = ÂΦx(F) + B̂Φu(F)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FirResponse {
    pub phi_x: Vec<Mat>,
    pub phi_u: Vec<Mat>,
    pub v: Mat,
    pub gamma: f64,
    pub eps_a: f64,
    pub eps_b: f64,
}

impl FirResponse {
    pub fn f(&self) -> usize {
        self.phi_x.len()
    }

    pub fn n(&self) -> usize {
        self.phi_x[0].nrows()
    }

    pub fn p(&self) -> usize {
        self.phi_u[0].nrows()
    }

    /// One-tap response of a static gain `K` on `(Â, B̂)`.
    pub fn static_gain(k: &Mat, a_hat: &Mat, b_hat: &Mat) -> Self {
        let n = a_hat.nrows();
        Self {
            phi_x: vec![Mat::identity(n, n)],
            phi_u: vec![k.clone()],
            v: a_hat + b_hat * k,
            gamma: 0.0,
            eps_a: 0.0,
            eps_b: 0.0,
        }
    }

    /// Largest violation of `Φx(k+1) = ÂΦx(k) + B̂Φu(k)` and of the residual
    /// definition.
    pub fn subspace_residual(&self, a_hat: &Mat, b_hat: &Mat) -> f64 {
        let f = self.f();
        let mut worst: f64 = (&self.phi_x[0] - Mat::identity(self.n(), self.n())).amax();
        for k in 0..f - 1 {
            let r = &self.phi_x[k + 1] - a_hat * &self.phi_x[k] - b_hat * &self.phi_u[k];
            worst = worst.max(r.amax());
        }
        let r = &self.v - a_hat * &self.phi_x[f - 1] - b_hat * &self.phi_u[f - 1];
        worst.max(r.amax())
    }

    /// Taps of `[Φx; Φu]` with a leading zero tap for `z⁰`.
    pub fn stacked_taps(&self) -> Vec<Mat> {
        let (n, p) = (self.n(), self.p());
        let mut taps = vec![Mat::zeros(n + p, n)];
        for (x, u) in self.phi_x.iter().zip(&self.phi_u) {
            let mut t = Mat::zeros(n + p, n);
            t.view_mut((0, 0), (n, n)).copy_from(x);
            t.view_mut((n, 0), (p, n)).copy_from(u);
            taps.push(t);
        }
        taps
    }

    /// `‖[Q^{1/2}; R^{1/2}][Φx; Φu]‖_{H2}` by Parseval.
    pub fn h2_cost(&self, q: &Mat, r: &Mat) -> f64 {
        let qh = linalg::sym_sqrt(q);
        let rh = linalg::sym_sqrt(r);
        let mut acc = 0.0;
        for (x, u) in self.phi_x.iter().zip(&self.phi_u) {
            acc += (&qh * x).norm_squared() + (&rh * u).norm_squared();
        }
        acc.sqrt()
    }

    pub fn hinf_norm(&self, grid: usize) -> f64 {
        linalg::fir_hinf_norm(&self.stacked_taps(), grid)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&FirResponseJson::from(self)).expect("plain data serializes")
    }

    pub fn from_json(text: &str) -> crate::Result<Self> {
        let j: FirResponseJson = serde_json::from_str(text).map_err(|e| crate::Error::Parse(e.to_string()))?;
        j.try_into()
    }
}

/// Exchange format: every matrix is a list of rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirResponseJson {
    #[serde(rename = "F")]
    pub f: usize,
    pub n: usize,
    pub p: usize,
    pub gamma: f64,
    pub eps_a: f64,
    pub eps_b: f64,
    pub phi_x: Vec<Vec<Vec<f64>>>,
    pub phi_u: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "V")]
    pub v: Vec<Vec<f64>>,
}

pub fn rows_of(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn mat_from_rows(rows: &[Vec<f64>]) -> crate::Result<Mat> {
    let r = rows.len();
    let c = rows.first().map(Vec::len).unwrap_or(0);
    if rows.iter().any(|row| row.len() != c) {
        return Err(crate::Error::Parse("ragged matrix rows".into()));
    }
    Ok(Mat::from_fn(r, c, |i, j| rows[i][j]))
}

impl From<&FirResponse> for FirResponseJson {
    fn from(r: &FirResponse) -> Self {
        Self {
            f: r.f(),
            n: r.n(),
            p: r.p(),
            gamma: r.gamma,
            eps_a: r.eps_a,
            eps_b: r.eps_b,
            phi_x: r.phi_x.iter().map(rows_of).collect(),
            phi_u: r.phi_u.iter().map(rows_of).collect(),
            v: rows_of(&r.v),
        }
    }
}

impl TryFrom<FirResponseJson> for FirResponse {
    type Error = crate::Error;

    fn try_from(j: FirResponseJson) -> crate::Result<Self> {
        let phi_x = j.phi_x.iter().map(|m| mat_from_rows(m)).collect::<crate::Result<Vec<_>>>()?;
        let phi_u = j.phi_u.iter().map(|m| mat_from_rows(m)).collect::<crate::Result<Vec<_>>>()?;
        if phi_x.len() != j.f || phi_u.len() != j.f || j.f == 0 {
            return Err(crate::Error::Parse("tap count does not match F".into()));
        }
        Ok(Self { phi_x, phi_u, v: mat_from_rows(&j.v)?, gamma: j.gamma, eps_a: j.eps_a, eps_b: j.eps_b })
    }
}

/// How the robustness level is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum GammaStrategy {
    /// Solve once at this level.
    Fixed(f64),
    /// Coarse grid plus golden-section refinement of `(1−γ)⁻¹·inner(γ)`.
    Search(GammaGrid),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisConfig {
    pub c_x: f64,
    pub c_u: f64,
    pub rho: f64,
    pub f: usize,
    pub eps_a: f64,
    pub eps_b: f64,
    /// Split of the robustness budget between `Φx` and `Φu`.
    pub alpha: f64,
    pub gamma: GammaStrategy,
    pub solver: ScsSettings,
}

impl SynthesisConfig {
    /// Decay constants derived from a closed-loop bound `‖M^k‖ ≤ C ρ^k`:
    /// `Φx(k) = M^{k−1}` for the optimal gain, so `C_x = 2C/ρ` leaves a factor
    /// two of slack and `C_u = max(1, ‖K‖)·C_x`.
    pub fn from_decay(c: f64, rho: f64, k_norm: f64, f: usize) -> Self {
        let c_x = 2.0 * c / rho;
        Self {
            c_x,
            c_u: k_norm.max(1.0) * c_x,
            rho,
            f,
            eps_a: 0.0,
            eps_b: 0.0,
            alpha: 0.5,
            gamma: GammaStrategy::Fixed(0.98),
            solver: default_synthesis_solver(),
        }
    }

    pub fn with_eps(mut self, eps_a: f64, eps_b: f64) -> Self {
        self.eps_a = eps_a;
        self.eps_b = eps_b;
        self
    }

    /// `C_x ρ^{F+1}`, the cap on the residual norm.
    pub fn residual_cap(&self) -> f64 {
        self.c_x * self.rho.powi(self.f as i32 + 1)
    }
}

pub fn default_synthesis_solver() -> ScsSettings {
    ScsSettings { eps: 1e-7, max_iters: 50_000, ..ScsSettings::default() }
}
