use std::collections::VecDeque;

use super::FirResponse;
use crate::linalg::{Mat, Vector};
use crate::linsys::{Controller, StateSpaceController};
use crate::sysid::ParamEstimate;

/// `K = Φu Φx⁻¹` run through the disturbance-estimate recursion
///
/// ```text
/// ŵ_k = x_k − Σ_{t=2}^{F} Φx(t) ŵ_{k−t+1}
/// u_k = Σ_{t=1}^{F} Φu(t) ŵ_{k−t+1}
/// ```
///
/// The residual `V` is kept for bookkeeping but does not enter the
/// recursion, so a one-tap response is exactly the static gain `Φu(1)`.
#[derive(Clone, Debug)]
pub struct RealizedController {
    phi_x: Vec<Mat>,
    phi_u: Vec<Mat>,
    pub v: Mat,
    /// Most recent estimate first.
    history: VecDeque<Vector>,
}

pub fn realize_controller(resp: &FirResponse) -> RealizedController {
    RealizedController {
        phi_x: resp.phi_x.clone(),
        phi_u: resp.phi_u.clone(),
        v: resp.v.clone(),
        history: VecDeque::with_capacity(resp.f()),
    }
}

impl RealizedController {
    pub fn f(&self) -> usize {
        self.phi_x.len()
    }

    pub fn reset(&mut self) {
        self.history.clear();
    }

    pub fn act(&mut self, x: &Vector) -> Vector {
        let mut w_hat = x.clone();
        for (t, w) in self.history.iter().enumerate().take(self.f() - 1) {
            w_hat -= &self.phi_x[t + 1] * w;
        }
        let mut u = &self.phi_u[0] * &w_hat;
        for (t, w) in self.history.iter().enumerate().take(self.f() - 1) {
            u += &self.phi_u[t + 1] * w;
        }
        self.history.push_front(w_hat);
        self.history.truncate(self.f().saturating_sub(1));
        u
    }

    /// Equivalent state-space form with `ξ_k = [ŵ_{k−1}; …; ŵ_{k−F+1}]`.
    pub fn to_controller(&self) -> Controller {
        let f = self.f();
        let n = self.phi_x[0].nrows();
        let p = self.phi_u[0].nrows();
        if f == 1 {
            return Controller::Static(self.phi_u[0].clone());
        }
        let order = n * (f - 1);
        let mut cw = Mat::zeros(n, order);
        let mut cu = Mat::zeros(p, order);
        for t in 1..f {
            cw.view_mut((0, (t - 1) * n), (n, n)).copy_from(&(-&self.phi_x[t]));
            cu.view_mut((0, (t - 1) * n), (p, n)).copy_from(&self.phi_u[t]);
        }
        let mut a_k = Mat::zeros(order, order);
        a_k.view_mut((0, 0), (n, order)).copy_from(&cw);
        for i in n..order {
            a_k[(i, i - n)] = 1.0;
        }
        let mut b_k = Mat::zeros(order, n);
        b_k.view_mut((0, 0), (n, n)).fill_with_identity();
        let c_k = &self.phi_u[0] * &cw + cu;
        Controller::StateSpace(StateSpaceController { a_k, b_k, c_k, d_k: self.phi_u[0].clone() })
    }
}

/// Replays unit impulses through the realized controller on the estimated
/// model and returns the largest deviation from the stored responses,
/// including `x_{F+1} = V e_j`.
pub fn validate_realization(resp: &FirResponse, est: &ParamEstimate) -> f64 {
    let n = resp.n();
    let f = resp.f();
    let mut worst: f64 = 0.0;
    for j in 0..n {
        let mut ctrl = realize_controller(resp);
        let mut x = Vector::zeros(n);
        x[j] = 1.0;
        for k in 0..f {
            let u = ctrl.act(&x);
            worst = worst.max((&x - resp.phi_x[k].column(j)).amax());
            worst = worst.max((&u - resp.phi_u[k].column(j)).amax());
            x = &est.a_hat * &x + &est.b_hat * &u;
        }
        worst = worst.max((&x - resp.v.column(j)).amax());
    }
    worst
}
