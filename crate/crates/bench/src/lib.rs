//! Fixtures shared by the benches.

use adaptive_lqr::adaptive::synthesis_config_for;
use adaptive_lqr::harness::presets;
use adaptive_lqr::linsys::{simulate_from, Controller};
use adaptive_lqr::sysid::{actual_errors, ols_estimate};
use adaptive_lqr::{LinearSystem, ParamEstimate, SynthesisConfig, Vector};

/// The Laplacian plant, its estimate after a 100-step warm-up with the true
/// errors attached, and the FIR synthesis constants for length `f`.
pub fn laplacian_fixture(f: usize) -> (LinearSystem, ParamEstimate, SynthesisConfig) {
    let sys = presets::laplacian();
    let k0 = Controller::Static(-&sys.a);
    let mut rng = adaptive_lqr::rng::trial_rng(1, 0);
    let traj = simulate_from(&sys, &k0, Vector::zeros(sys.n()), 100, 1.0, &mut rng);
    let est = ols_estimate(&traj).expect("warm-up data is rich enough");
    let (ea, eb) = actual_errors(&est, &sys);
    let cfg = synthesis_config_for(&sys, f).expect("preset is stabilizable");
    (sys, est.with_eps(ea, eb), cfg)
}
