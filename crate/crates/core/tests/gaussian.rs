use approx::assert_abs_diff_eq;
use qsd_core::gaussian::{beta_roots, coherent_overlap_sqr, reduced_moment_flow, stationary_residuals};
use qsd_core::localization::da2_drift_from_flow;
use qsd_core::{
    coherent_state, da2_drift, solve_beta, Complex64, DeviationCoords, Grid, LindbladModel, MomentState, Potential,
    QsdError,
};

const S: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn free() -> LindbladModel {
    LindbladModel::standard(1.0, 0.0, 1.0, 1.0, Potential::Free).unwrap()
}

/// Models covering free, harmonic, inverted and small-b cases.
fn test_matrix() -> Vec<LindbladModel> {
    let mut out = Vec::new();
    let pots = [
        Potential::Free,
        Potential::harmonic(0.5, 1.0),
        Potential::harmonic(1.0, 1.0),
        Potential::harmonic(2.0, 1.0),
        Potential::InvertedHarmonic { omega: 1.0, mass: 1.0 },
    ];
    for pot in pots {
        for &b in &[0.0, 0.05] {
            out.push(LindbladModel::standard(1.0, b, 1.0, 1.0, pot.clone()).unwrap());
        }
    }
    out.push(LindbladModel::standard(0.4, 0.1, 2.0, 0.7, Potential::harmonic(1.3, 2.0)).unwrap());
    out
}

#[test]
fn free_particle_fixed_point() {
    let sp = solve_beta(&free(), 0.0).unwrap();
    let k = (1.0f64 / 8.0).sqrt();
    assert_abs_diff_eq!(sp.beta.re, k, epsilon = 1e-12);
    assert_abs_diff_eq!(sp.beta.im, -k, epsilon = 1e-12);
    assert_abs_diff_eq!(sp.sigma_x2, S, epsilon = 1e-5);
    assert_abs_diff_eq!(sp.sigma_p2, S, epsilon = 1e-5);
    assert_abs_diff_eq!(sp.r0, 0.5, epsilon = 1e-12);
    let m = sp.moments_at(0.0, 0.0);
    assert_eq!((m.x_mean, m.p_mean), (0.0, 0.0));
    assert_abs_diff_eq!(m.var_x, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-5);
    assert_abs_diff_eq!(m.var_p, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-5);
    assert_abs_diff_eq!(m.r, 0.5, epsilon = 1e-12);
}

#[test]
fn identities_hold_across_test_matrix() {
    for model in test_matrix() {
        let sp = solve_beta(&model, 0.0).unwrap();
        let hbar = model.hbar;
        assert!(sp.beta.re > 0.0);
        assert!(!sp.ambiguous_root);
        // Minimum uncertainty.
        assert!((sp.sigma_x2 * sp.sigma_p2 - sp.r0 * sp.r0 - 0.25 * hbar * hbar).abs() <= 1e-10);
        // β in terms of the moments.
        let beta = Complex64::new(1.0, -2.0 * sp.r0 / hbar) / (4.0 * sp.sigma_x2);
        assert!((beta - sp.beta).norm() <= 1e-10);
        // Fixed point of the variance flow.
        for r in stationary_residuals(&model, &sp) {
            assert!(r.abs() <= 1e-8, "residual {r} for {model:?}");
        }
        // Localization coefficients.
        let [c1, c2, c3] = sp.linear_coefficients(&model);
        let c1n = sp.c1_negative_form(&model);
        assert!(c1n < 0.0);
        assert!((c1 - c1n).abs() <= 1e-10 * c1n.abs());
        assert!((c2 - c1).abs() <= 1e-10 * c1.abs(), "c2 {c2} c1 {c1}");
        let c3_expected = -2.0 * sp.r0 * sp.r0 * c1 / (sp.sigma_x2 * sp.sigma_p2);
        assert!((c3 - c3_expected).abs() <= 1e-10 * (1.0 + c3.abs()));
    }
}

#[test]
fn beta_roots_solve_the_quadratic() {
    for model in test_matrix() {
        let (r1, r2) = beta_roots(&model, 0.0);
        let (a, b, m, hbar) = (model.a, model.b, model.m, model.hbar);
        let i = Complex64::new(0.0, 1.0);
        let v2 = model.potential.d2(0.0);
        for beta in [r1, r2] {
            let f = 4.0 * (b * b + i / (m * hbar)) * hbar * hbar * beta * beta + 4.0 * hbar * a * b * beta
                - (a * a + i * v2 / hbar);
            assert!(f.norm() <= 1e-12 * (1.0 + a * a + v2.abs()));
        }
    }
}

#[test]
fn inverted_oscillator_is_solvable() {
    let m = LindbladModel::standard(1.0, 0.0, 1.0, 1.0, Potential::InvertedHarmonic { omega: 2.0, mass: 1.0 }).unwrap();
    let sp = solve_beta(&m, 0.0).unwrap();
    assert!(sp.beta.re > 0.0 && sp.sigma_x2 > 0.0);
}

#[test]
fn solve_beta_rejects_unsupported_models() {
    let none = LindbladModel::standard(0.0, 0.0, 1.0, 1.0, Potential::Free).unwrap();
    assert!(matches!(solve_beta(&none, 0.0), Err(QsdError::NoCoupling)));
    let odd_c = free().with_c(0.3);
    assert!(matches!(solve_beta(&odd_c, 0.0), Err(QsdError::NonStandardCoupling { .. })));
}

#[test]
fn coherent_state_moments_match_parameters() {
    let g = Grid::symmetric(256, 16.0, 1.0).unwrap();
    for model in test_matrix().into_iter().filter(|m| m.hbar == 1.0) {
        let sp = solve_beta(&model, 0.0).unwrap();
        let psi = coherent_state(&g, &sp, 1.5, -0.8, 1.0);
        let m = MomentState::of(&psi);
        assert!((m.x_mean - 1.5).abs() <= 1e-6);
        assert!((m.p_mean + 0.8).abs() <= 1e-6);
        assert!((m.var_x / sp.sigma_x2 - 1.0).abs() <= 1e-6);
        assert!((m.var_p / sp.sigma_p2 - 1.0).abs() <= 1e-6);
        assert!((m.r - sp.r0).abs() <= 1e-6 * (1.0 + sp.r0.abs()));
    }
}

#[test]
fn overlap_matches_grid_and_decays() {
    let g = Grid::symmetric(256, 16.0, 1.0).unwrap();
    let sp = solve_beta(&free(), 0.0).unwrap();
    let (q1, p1, q2, p2) = (-0.5, 0.3, 0.8, -0.4);
    let u = coherent_state(&g, &sp, q1, p1, 1.0);
    let v = coherent_state(&g, &sp, q2, p2, 1.0);
    let grid_val = u.inner(&v).norm_sqr();
    assert!((coherent_overlap_sqr(&sp, 1.0, q1, p1, q2, p2) - grid_val).abs() <= 1e-10);
    let far = 10.0 * sp.sigma_x();
    assert!(coherent_overlap_sqr(&sp, 1.0, 0.0, 0.0, far, 0.0) < 1e-4);
}

#[test]
fn real_beta_gives_uncorrelated_state() {
    let g = Grid::symmetric(256, 16.0, 1.0).unwrap();
    let sp = qsd_core::StationaryParams::from_beta(Complex64::new(0.4, 0.0), 1.0, 0.0);
    assert_eq!(sp.r0, 0.0);
    let m = MomentState::of(&coherent_state(&g, &sp, 0.0, 0.0, 1.0));
    assert!(m.r.abs() <= 1e-10);
}

#[test]
fn closed_system_flow_is_free_spreading() {
    let m = LindbladModel::standard(0.0, 0.0, 1.5, 1.0, Potential::Free).unwrap();
    let s = MomentState { x_mean: 0.3, p_mean: 0.2, var_x: 1.2, var_p: 0.6, r: 0.4 };
    let d = reduced_moment_flow(&m, &s);
    assert_abs_diff_eq!(d.dvar_x, 2.0 * 0.4 / 1.5, epsilon = 1e-14);
    assert_abs_diff_eq!(d.dvar_p, 0.0, epsilon = 1e-14);
    assert_abs_diff_eq!(d.dr, 0.6 / 1.5, epsilon = 1e-14);
}

#[test]
fn deviation_flow_reproduces_regrouped_drift() {
    for model in test_matrix() {
        let sp = solve_beta(&model, 0.0).unwrap();
        for dev in [
            DeviationCoords { x_dev: 0.5, y_dev: 0.2, z_dev: -0.3 },
            DeviationCoords { x_dev: 2.0, y_dev: -0.1, z_dev: 0.7 },
        ] {
            let a = da2_drift_from_flow(&sp, &dev, &model);
            let b = da2_drift(&sp, &dev, &model);
            assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{a} vs {b}");
        }
    }
}
