use adaptive_lqr::baselines::{
    epoch_switch, log_det_spd, nominal_controller, ofu_cost_gradient, ofu_objective, ofu_select, project_ellipsoid,
    ts_sample, OfuConfig, SwitchParams, SwitchRule, SwitchState,
};
use adaptive_lqr::harness::presets;
use adaptive_lqr::linalg::spectral_radius;
use adaptive_lqr::linsys::dare_default;
use adaptive_lqr::rng::{gaussian_matrix, trial_rng};
use adaptive_lqr::sysid::{split_theta, stack_theta};
use adaptive_lqr::{ConfidenceEllipsoid, Error, LinearSystem, Mat, ParamEstimate};
use rand::Rng;

/// Random `n`-state, `p`-input system with `A` scaled to spectral radius
/// 1.2, so it needs feedback but `B` almost surely reaches every mode.
fn random_system(rng: &mut impl Rng, n: usize, p: usize) -> LinearSystem {
    let a = gaussian_matrix(rng, n, n);
    let a = &a * (1.2 / spectral_radius(&a).max(1e-3));
    let b = gaussian_matrix(rng, n, p);
    LinearSystem::new(a, b, Mat::identity(n, n), Mat::identity(p, p), 1.0).unwrap()
}

fn random_pd(rng: &mut impl Rng, d: usize) -> Mat {
    let g = gaussian_matrix(rng, d, d);
    &g * g.transpose() + Mat::identity(d, d) * 0.1
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = trial_rng(31, 0);
    for _ in 0..20 {
        let n = rng.random_range(1..=3);
        let p = rng.random_range(1..=2);
        let sys = random_system(&mut rng, n, p);
        let theta = stack_theta(&sys.a, &sys.b);
        let grad = ofu_cost_gradient(&sys, &theta).unwrap();
        let h = 1e-5;
        for i in 0..n {
            for j in 0..n + p {
                let mut up = theta.clone();
                up[(i, j)] += h;
                let mut dn = theta.clone();
                dn[(i, j)] -= h;
                let fd = (ofu_objective(&sys, &up).unwrap().0 - ofu_objective(&sys, &dn).unwrap().0) / (2.0 * h);
                let scale = grad.amax().max(1e-8);
                assert!((fd - grad[(i, j)]).abs() <= 1e-4 * scale.max(fd.abs()), "fd {fd} vs {}", grad[(i, j)]);
            }
        }
    }
}

#[test]
fn gradient_vanishes_at_symmetric_point() {
    let one = |v| Mat::from_element(1, 1, v);
    let sys = LinearSystem::new(one(0.0), one(1.0), one(1.0), one(1.0), 1.0).unwrap();
    let theta = stack_theta(&sys.a, &sys.b);
    let g = ofu_cost_gradient(&sys, &theta).unwrap();
    assert!(g[(0, 0)].abs() < 1e-12);
}

#[test]
fn gradient_points_uphill() {
    let mut rng = trial_rng(32, 0);
    for _ in 0..10 {
        let sys = random_system(&mut rng, 2, 1);
        let theta = stack_theta(&sys.a, &sys.b);
        let g = ofu_cost_gradient(&sys, &theta).unwrap();
        let moved = &theta + &g * (1e-4 / g.norm());
        assert!(ofu_objective(&sys, &moved).unwrap().0 > ofu_objective(&sys, &theta).unwrap().0);
    }
}

#[test]
fn unstabilizable_point_has_no_gradient() {
    let one = |v| Mat::from_element(1, 1, v);
    let sys = LinearSystem::new(one(2.0), one(0.0), one(1.0), one(1.0), 1.0).unwrap();
    assert_eq!(ofu_cost_gradient(&sys, &stack_theta(&sys.a, &sys.b)).unwrap_err(), Error::Unstabilizable);
}

#[test]
fn projection_inside_is_identity() {
    let ell = ConfidenceEllipsoid { theta_hat: Mat::zeros(2, 3), z: Mat::identity(3, 3), eps: 1.0 };
    let theta = Mat::from_element(2, 3, 0.1);
    assert_eq!(project_ellipsoid(&theta, &ell), theta);
}

#[test]
fn projection_onto_sphere() {
    let mut rng = trial_rng(33, 0);
    let hat = gaussian_matrix(&mut rng, 2, 3);
    let ell = ConfidenceEllipsoid { theta_hat: hat.clone(), z: Mat::identity(3, 3), eps: 0.25 };
    let theta = &hat + gaussian_matrix(&mut rng, 2, 3) * 3.0;
    let d = &theta - &hat;
    let closed = &hat + &d * (0.5 / d.norm());
    assert!((project_ellipsoid(&theta, &ell) - closed).amax() < 1e-10);
}

#[test]
fn projection_satisfies_kkt() {
    let mut rng = trial_rng(34, 0);
    for _ in 0..20 {
        let z = random_pd(&mut rng, 4);
        let hat = gaussian_matrix(&mut rng, 3, 4);
        let ell = ConfidenceEllipsoid { theta_hat: hat.clone(), z: z.clone(), eps: 0.3 };
        let theta = &hat + gaussian_matrix(&mut rng, 3, 4) * 2.0;
        if ell.membership(&theta) <= ell.eps {
            continue;
        }
        let proj = project_ellipsoid(&theta, &ell);
        assert!((ell.membership(&proj) - ell.eps).abs() < 1e-8 * ell.eps);
        // θ − proj = μ (proj − Θ̂) Z for some μ ≥ 0.
        let normal = (&proj - &hat) * &z;
        let resid = &theta - &proj;
        let mu = resid.dot(&normal) / normal.norm_squared();
        assert!(mu >= 0.0);
        assert!((&resid - &normal * mu).amax() < 1e-8 * (1.0 + resid.amax()));
    }
}

#[test]
fn sampler_zero_radius_returns_center() {
    let mut rng = trial_rng(35, 0);
    let hat = gaussian_matrix(&mut rng, 2, 3);
    let ell = ConfidenceEllipsoid { theta_hat: hat.clone(), z: random_pd(&mut rng, 3), eps: 0.0 };
    assert_eq!(ts_sample(&ell, &mut rng), hat);
}

#[test]
fn sampler_stays_inside() {
    let mut rng = trial_rng(36, 0);
    let ell = ConfidenceEllipsoid { theta_hat: gaussian_matrix(&mut rng, 3, 6), z: random_pd(&mut rng, 6), eps: 0.7 };
    for _ in 0..10_000 {
        let s = ts_sample(&ell, &mut rng);
        assert!(ell.membership(&s) <= ell.eps * (1.0 + 1e-12));
    }
}

#[test]
fn sampler_scalar_radius_is_uniform() {
    let mut rng = trial_rng(37, 0);
    let ell = ConfidenceEllipsoid { theta_hat: Mat::zeros(1, 2), z: Mat::identity(2, 2), eps: 2.0 };
    // n = p = 1 gives d = 2, so the squared radius over ε is uniform.
    let mut r: Vec<f64> = (0..10_000).map(|_| ell.membership(&ts_sample(&ell, &mut rng)) / ell.eps).collect();
    r.sort_by(f64::total_cmp);
    let n = r.len() as f64;
    let ks = r
        .iter()
        .enumerate()
        .map(|(i, v)| (v - i as f64 / n).abs().max((v - (i + 1) as f64 / n).abs()))
        .fold(0.0, f64::max);
    assert!(ks < 0.02, "KS {ks}");
}

#[test]
fn ofu_degenerate_ellipsoid_returns_center() {
    let sys = presets::laplacian();
    let hat = stack_theta(&sys.a, &sys.b);
    let ell = ConfidenceEllipsoid { theta_hat: hat.clone(), z: Mat::identity(6, 6), eps: 0.0 };
    let mut rng = trial_rng(38, 0);
    let sel = ofu_select(&ell, &sys, None, &OfuConfig::default(), &mut rng).unwrap();
    assert_eq!(sel.theta, hat);
    let k = dare_default(&sys).unwrap().k;
    assert!((sel.gain - k).amax() < 1e-8);
}

#[test]
fn ofu_is_optimistic_and_monotone() {
    let sys = presets::laplacian();
    let truth = stack_theta(&sys.a, &sys.b);
    let mut rng = trial_rng(39, 0);
    let z = random_pd(&mut rng, 6) * 20.0;
    let hat = &truth + gaussian_matrix(&mut rng, 3, 6) * 0.05;
    let d = &hat - &truth;
    let eps = (&d * &z * d.transpose()).trace();
    let ell = ConfidenceEllipsoid { theta_hat: hat, z, eps };
    let sel = ofu_select(&ell, &sys, None, &OfuConfig::default(), &mut rng).unwrap();
    assert!(ell.contains(&sel.theta, 1e-8));
    let j_truth = ofu_objective(&sys, &truth).unwrap().0;
    assert!(sel.objective <= j_truth + 1e-6 * j_truth, "{} vs {}", sel.objective, j_truth);
    assert!(sel.history.windows(2).all(|w| w[1] <= w[0]));
    assert!(sel.history.len() > 1);
}

#[test]
fn switch_rules() {
    let p = SwitchParams::default();
    let base = 3.0;
    let tripled = SwitchState { t: 105, t_i: 100, logdet: base + 3f64.ln(), logdet_i: base };
    assert!(!epoch_switch(SwitchRule::Det, &p, &tripled));
    let later = SwitchState { t: 110, ..tripled };
    assert!(epoch_switch(SwitchRule::Det, &p, &later));
    let doubled = SwitchState { t: 200, t_i: 100, logdet: base + 2f64.ln(), logdet_i: base };
    assert!(!epoch_switch(SwitchRule::Det, &p, &doubled));
    let flat = SwitchState { t: 600, t_i: 100, logdet: base, logdet_i: base };
    assert!(!epoch_switch(SwitchRule::Det, &p, &flat));
    assert!(epoch_switch(SwitchRule::DetPlusTau(500), &p, &flat));
    assert!((log_det_spd(&(Mat::identity(3, 3) * 2.0)) - 3.0 * 2f64.ln()).abs() < 1e-14);
}

#[test]
fn nominal_gain_examples() {
    let sys = presets::laplacian();
    let k_star = dare_default(&sys).unwrap().k;
    let exact = ParamEstimate::exact(&sys);
    assert!((nominal_controller(&exact, &sys).unwrap() - &k_star).amax() < 1e-8);
    let mut rng = trial_rng(40, 0);
    let theta = stack_theta(&sys.a, &sys.b) + gaussian_matrix(&mut rng, 3, 6) * 1e-6;
    let (a_hat, b_hat) = split_theta(&theta, 3);
    let near = ParamEstimate { a_hat, b_hat, eps_a: 0.0, eps_b: 0.0 };
    assert!((nominal_controller(&near, &sys).unwrap() - &k_star).amax() < 1e-4);
    let bad = ParamEstimate { a_hat: Mat::identity(3, 3) * 1.5, b_hat: Mat::zeros(3, 3), eps_a: 0.0, eps_b: 0.0 };
    assert_eq!(nominal_controller(&bad, &sys).unwrap_err(), Error::Unstabilizable);
}
