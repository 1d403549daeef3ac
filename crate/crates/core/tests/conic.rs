use adaptive_lqr::conic::{
    self, cones, hinf_lmi_block, solve_conic, spectral_norm_constraint, ConicBuilder, ExprMat, LinExpr, Status,
};
use adaptive_lqr::linalg::{fir_hinf_norm, max_eigenvalue_sym, spectral_norm};
use adaptive_lqr::rng::{gaussian_matrix, trial_rng};
use adaptive_lqr::Mat;

#[test]
fn minimize_x_above_one() {
    let mut b = ConicBuilder::new();
    let x = b.new_vars(1);
    b.set_cost(x, 1.0);
    b.add_nonneg(LinExpr { terms: vec![(x, 1.0)], constant: -1.0 });
    let sol = solve_conic(&b.build(), 1e-9, 10_000);
    assert_eq!(sol.status, Status::Optimal);
    assert!((sol.x[x] - 1.0).abs() < 1e-7, "{}", sol.x[x]);
}

#[test]
fn pythagoras_soc() {
    let mut b = ConicBuilder::new();
    let t = b.new_vars(3);
    b.set_cost(t, 1.0);
    b.add_zero(LinExpr { terms: vec![(t + 1, 1.0)], constant: -3.0 });
    b.add_zero(LinExpr { terms: vec![(t + 2, 1.0)], constant: -4.0 });
    b.add_soc(vec![LinExpr::var(t), LinExpr::var(t + 1), LinExpr::var(t + 2)]);
    let sol = solve_conic(&b.build(), 1e-9, 10_000);
    assert_eq!(sol.status, Status::Optimal);
    assert!((sol.x[t] - 5.0).abs() < 1e-6);
}

fn lambda_max_sdp(c: &Mat) -> (f64, conic::ConicSolution) {
    let d = c.nrows();
    let mut b = ConicBuilder::new();
    let x = b.new_sym(d);
    let mut trace = LinExpr::constant(-1.0);
    for i in 0..d {
        trace.add_scaled(x.at(i, i), 1.0);
    }
    b.add_zero(trace);
    b.add_psd(&x);
    // Objective −Tr(CX) over the lower-triangle variables.
    for i in 0..d {
        for j in 0..=i {
            let var = x.at(i, j).terms[0].0;
            let w = if i == j { c[(i, i)] } else { 2.0 * c[(i, j)] };
            b.set_cost(var, -w);
        }
    }
    let sol = solve_conic(&b.build(), 1e-9, 50_000);
    (-sol.primal_objective, sol)
}

#[test]
fn lambda_max_matches_eigensolver() {
    let mut rng = trial_rng(11, 0);
    for _ in 0..5 {
        let g = gaussian_matrix(&mut rng, 4, 4);
        let c = (&g + g.transpose()) * 0.5;
        let (val, sol) = lambda_max_sdp(&c);
        assert_eq!(sol.status, Status::Optimal);
        assert!((val - max_eigenvalue_sym(&c)).abs() < 1e-6, "{val} vs {}", max_eigenvalue_sym(&c));
    }
}

fn feasibility_of_norm_bound(v: &Mat, c: f64) -> Status {
    let mut b = ConicBuilder::new();
    // A dummy variable keeps the problem non-empty.
    let z = b.new_vars(1);
    b.add_zero(LinExpr::var(z));
    spectral_norm_constraint(&mut b, &ExprMat::constant(v), c);
    solve_conic(&b.build(), 1e-8, 100_000).status
}

#[test]
fn spectral_norm_fragment() {
    assert_eq!(feasibility_of_norm_bound(&Mat::zeros(2, 2), 0.0), Status::Optimal);
    assert_eq!(feasibility_of_norm_bound(&(Mat::identity(2, 2) * 2.0), 1.0), Status::Infeasible);
    let mut rng = trial_rng(5, 0);
    let v = gaussian_matrix(&mut rng, 3, 3);
    let nv = spectral_norm(&v);
    assert_eq!(feasibility_of_norm_bound(&v, nv + 1e-6), Status::Optimal);
    assert_eq!(feasibility_of_norm_bound(&v, nv - 1e-3), Status::Infeasible);
}

/// Smallest γ² admitted by the LMI, with γ² a decision variable.
fn lmi_boundary(taps: &[Mat]) -> f64 {
    let mut b = ConicBuilder::new();
    let g = b.new_vars(1);
    b.set_cost(g, 1.0);
    let exprs: Vec<ExprMat> = taps.iter().map(ExprMat::constant).collect();
    hinf_lmi_block(&mut b, &exprs, &LinExpr::var(g));
    let sol = solve_conic(&b.build(), 1e-9, 200_000);
    assert_eq!(sol.status, Status::Optimal);
    sol.x[g].sqrt()
}

fn lmi_feasible(taps: &[Mat], gamma: f64) -> Status {
    let mut b = ConicBuilder::new();
    let exprs: Vec<ExprMat> = taps.iter().map(ExprMat::constant).collect();
    hinf_lmi_block(&mut b, &exprs, &LinExpr::constant(gamma * gamma));
    solve_conic(&b.build(), 1e-8, 200_000).status
}

#[test]
fn hinf_lmi_scalar_cases() {
    let one = |v: f64| Mat::from_element(1, 1, v);
    assert_eq!(lmi_feasible(&[one(0.0), one(0.7)], 0.71), Status::Optimal);
    assert_eq!(lmi_feasible(&[one(0.0), one(0.7)], 0.69), Status::Infeasible);
    assert_eq!(lmi_feasible(&[one(1.0), one(1.0)], 2.001), Status::Optimal);
    assert_eq!(lmi_feasible(&[one(1.0), one(1.0)], 1.999), Status::Infeasible);
}

#[test]
fn hinf_lmi_matches_grid_on_random_fir() {
    let mut rng = trial_rng(23, 0);
    let taps: Vec<Mat> = (0..5).map(|_| gaussian_matrix(&mut rng, 2, 3)).collect();
    let grid = fir_hinf_norm(&taps, 4096);
    let lmi = lmi_boundary(&taps);
    assert!((grid - lmi).abs() < 1e-4 * (1.0 + grid), "grid {grid} lmi {lmi}");
}

#[test]
fn dump_load_round_trip() {
    let mut b = ConicBuilder::new();
    let x = b.new_sym(2);
    b.add_psd(&x);
    b.add_zero(x.at(0, 0).plus(&LinExpr::constant(-1.0 / 3.0)));
    b.set_cost(1, 0.1);
    let prob = b.build();
    let text = conic::io::dump(&prob);
    let back = conic::io::load(&text).unwrap();
    assert_eq!(back, prob);
    assert_eq!(cones::svec_len(2), 3);
}
