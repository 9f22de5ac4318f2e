use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use qsd_core::fokker_planck::{
    drift_orbit, evolve_fp_observed, l1_distance, maxwell_boltzmann, relaxation_rate, stable_dt,
};
use qsd_core::{
    coefficients, evolve_fp, fp_propagator, solve_beta, FpCoefficients, LindbladModel, PhaseSpaceField,
    PhaseSpaceLattice, Potential, QbmParams,
};

fn free() -> LindbladModel {
    LindbladModel::standard(1.0, 0.0, 1.0, 1.0, Potential::Free).unwrap()
}

fn qbm(gamma: f64, kt: f64, pot: Potential) -> LindbladModel {
    LindbladModel::from_qbm(QbmParams { gamma, kt, m: 1.0, hbar: 1.0 }, pot).unwrap()
}

#[test]
fn free_particle_coefficients() {
    let model = free();
    let c = coefficients(&model, &solve_beta(&model, 0.0).unwrap()).unwrap();
    assert_abs_diff_eq!(c.d_pp, 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(c.d_qq, 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(c.d_pq, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-5);
    assert_eq!(c.k_q, 0.0);
    assert!(c.high_t_ratio.is_none());
}

#[test]
fn high_temperature_momentum_diffusion() {
    let model = qbm(0.01, 100.0, Potential::Free);
    let c = coefficients(&model, &solve_beta(&model, 0.0).unwrap()).unwrap();
    let r = c.high_t_ratio.unwrap();
    assert!((0.9..=1.1).contains(&r), "ratio {r}");
    assert_abs_diff_eq!(c.k_p, 2.0 * 0.01, epsilon = 1e-12);
}

#[test]
fn position_diffusion_without_b() {
    for (a, pot) in [(1.0, Potential::Free), (0.6, Potential::harmonic(1.5, 1.0)), (2.0, Potential::harmonic(0.3, 1.0))] {
        let model = LindbladModel::standard(a, 0.0, 1.0, 1.0, pot).unwrap();
        let sp = solve_beta(&model, 0.0).unwrap();
        let c = coefficients(&model, &sp).unwrap();
        assert_abs_diff_eq!(c.d_qq, a * a * sp.sigma_x2 * sp.sigma_x2, epsilon = 1e-12 * (1.0 + c.d_qq));
    }
}

#[test]
fn zero_duration_is_identity() {
    let model = free();
    let c = coefficients(&model, &solve_beta(&model, 0.0).unwrap()).unwrap();
    let lat = PhaseSpaceLattice::symmetric(5.0, 20, 5.0, 20).unwrap();
    let f0 = PhaseSpaceField::gaussian(lat.clone(), 0.5, -0.5, 1.0, 1.0);
    assert_eq!(evolve_fp(&c, &model, &f0, 0.0, 0.01).unwrap().values, f0.values);
    let p = fp_propagator(&c, &model, &lat, (1.1, -0.3), 2.0, 2.0, 0.01).unwrap();
    let imp = PhaseSpaceField::impulse(lat, 1.1, -0.3).unwrap();
    assert_eq!(p.values, imp.values);
}

#[test]
fn pure_drift_follows_dissipative_orbit() {
    let model = qbm(0.2, 1.0, Potential::harmonic(1.0, 1.0));
    let c = coefficients(&model, &solve_beta(&model, 0.0).unwrap()).unwrap().drift_only();
    assert_abs_diff_eq!(c.k_p, 0.4, epsilon = 1e-12);
    let lat = PhaseSpaceLattice::symmetric(4.0, 80, 4.0, 80).unwrap();
    let start = (lat.q_center(64), lat.p_center(40));
    let f0 = PhaseSpaceField::impulse(lat.clone(), start.0, start.1).unwrap();
    let dt = stable_dt(&c, &model, &lat);
    let mut worst: f64 = 0.0;
    let (_, diag) = evolve_fp_observed(&c, &model, &f0, 4.0, dt, 20, |t, f| {
        let m = f.moments();
        let (q, p) = drift_orbit(&c, &model, start, t);
        worst = worst.max(((m.mean_q - q) / lat.dq()).abs()).max(((m.mean_p - p) / lat.dp()).abs());
    })
    .unwrap();
    assert!(worst <= 2.0, "centre off by {worst} cells");
    assert!(diag.mass_drift <= 1e-8 * 4.0);
}

#[test]
fn pure_momentum_diffusion_variance() {
    let c = FpCoefficients { d_pp: 0.5, d_qq: 0.0, d_pq: 0.0, k_q: 0.0, k_p: 0.0, high_t_ratio: None };
    let model = free();
    let lat = PhaseSpaceLattice::symmetric(6.0, 48, 8.0, 80).unwrap();
    let t = 2.0;
    let f = fp_propagator(&c, &model, &lat, (0.0, 0.0), 0.0, t, stable_dt(&c, &model, &lat)).unwrap();
    let v = f.moments().var_p;
    assert!((v / (2.0 * c.d_pp * t) - 1.0).abs() <= 0.05, "var_p {v}");
}

#[test]
fn propagator_mean_follows_damped_trajectory() {
    let model = qbm(0.2, 1.0, Potential::harmonic(1.0, 1.0));
    let c = coefficients(&model, &solve_beta(&model, 0.0).unwrap()).unwrap();
    let lat = PhaseSpaceLattice::symmetric(6.0, 60, 6.0, 60).unwrap();
    let from = (2.1, 0.5);
    let t = 3.0;
    let f = fp_propagator(&c, &model, &lat, from, 1.0, 1.0 + t, stable_dt(&c, &model, &lat)).unwrap();
    let (i, k) = lat.locate(from.0, from.1).unwrap();
    let (q, p) = drift_orbit(&c, &model, (lat.q_center(i), lat.p_center(k)), t);
    let m = f.moments();
    assert!((m.mean_q - q).abs() <= 2.0 * lat.dq(), "{} vs {q}", m.mean_q);
    assert!((m.mean_p - p).abs() <= 2.0 * lat.dp(), "{} vs {p}", m.mean_p);
}

#[test]
fn mean_position_drift_is_velocity() {
    let model = qbm(0.2, 1.0, Potential::harmonic(1.0, 1.0));
    let c = coefficients(&model, &solve_beta(&model, 0.0).unwrap()).unwrap();
    let lat = PhaseSpaceLattice::symmetric(8.0, 96, 8.0, 96).unwrap();
    let f0 = PhaseSpaceField::gaussian(lat.clone(), -0.5, 1.2, 1.0, 1.0);
    let h = 0.02;
    let f1 = evolve_fp(&c, &model, &f0, h, stable_dt(&c, &model, &lat)).unwrap();
    let (m0, m1) = (f0.moments(), f1.moments());
    let dq_dt = (m1.mean_q - m0.mean_q) / h;
    let mid_p = 0.5 * (m0.mean_p + m1.mean_p);
    assert!((dq_dt - mid_p).abs() <= 1e-3, "{dq_dt} vs {mid_p}");
}

#[test]
fn thermalizes_to_maxwell_boltzmann() {
    let (gamma, kt) = (0.2, 100.0);
    let model = qbm(gamma, kt, Potential::harmonic(1.0, 1.0));
    let c = coefficients(&model, &solve_beta(&model, 0.0).unwrap()).unwrap();
    let h = 5.0 * kt.sqrt();
    let lat = PhaseSpaceLattice::symmetric(h, 48, h, 48).unwrap();
    let mb = maxwell_boltzmann(&lat, &model, kt);
    // Displaced thermal packet: the L1 distance decays with the mean.
    let f0 = PhaseSpaceField::gaussian(lat.clone(), 1.5 * kt.sqrt(), 0.0, kt, kt);
    let dt = stable_dt(&c, &model, &lat);
    let (mut ts, mut ds) = (Vec::new(), Vec::new());
    let (f, diag) = evolve_fp_observed(&c, &model, &f0, 30.0, dt, (1.0 / dt) as usize, |t, f| {
        ts.push(t);
        ds.push(l1_distance(f, &mb).unwrap());
    })
    .unwrap();
    let d = l1_distance(&f, &mb).unwrap();
    assert!(d <= 0.05, "L1 {d}");
    let rate = relaxation_rate(&ts, &ds, 0.05, 1.0).unwrap();
    assert!(rate >= 0.5 * gamma && rate <= 2.0 * gamma, "rate {rate}");
    let m = f.moments();
    assert!((m.var_p / kt - 1.0).abs() <= 0.05, "var_p {}", m.var_p);
    assert!((m.var_q / kt - 1.0).abs() <= 0.05, "var_q {}", m.var_q);
    assert!(diag.mass_drift <= 1e-8 * 30.0, "mass drift {}", diag.mass_drift);
}

#[test]
fn cfl_bound_is_enforced() {
    let model = free();
    let c = coefficients(&model, &solve_beta(&model, 0.0).unwrap()).unwrap();
    let lat = PhaseSpaceLattice::symmetric(5.0, 40, 5.0, 40).unwrap();
    let f0 = PhaseSpaceField::gaussian(lat.clone(), 0.0, 0.0, 1.0, 1.0);
    let bound = stable_dt(&c, &model, &lat);
    assert!(evolve_fp(&c, &model, &f0, 1.0, 2.0 * bound).is_err());
    assert!(fp_propagator(&c, &model, &lat, (50.0, 0.0), 0.0, 1.0, bound).is_err());
    assert!(fp_propagator(&c, &model, &lat, (0.0, 0.0), 1.0, 0.5, bound).is_err());
}

fn psd_models() -> Vec<LindbladModel> {
    let mut out = Vec::new();
    for pot in [
        Potential::Free,
        Potential::harmonic(0.5, 1.0),
        Potential::harmonic(2.0, 1.0),
        Potential::InvertedHarmonic { omega: 1.0, mass: 1.0 },
    ] {
        for &(a, b) in &[(1.0, 0.0), (1.0, 0.05), (0.3, 0.4), (3.0, 0.01)] {
            out.push(LindbladModel::standard(a, b, 1.0, 1.0, pot.clone()).unwrap());
        }
    }
    for &(g, kt) in &[(0.01, 100.0), (0.2, 100.0), (1.0, 1.0), (0.1, 0.1)] {
        out.push(qbm(g, kt, Potential::Free));
        out.push(qbm(g, kt, Potential::harmonic(1.0, 1.0)));
    }
    out
}

#[test]
fn diffusion_matrix_is_psd_over_test_matrix() {
    for model in psd_models() {
        let c = coefficients(&model, &solve_beta(&model, 0.0).unwrap()).unwrap();
        assert!(c.d_pp >= 0.0 && c.d_qq >= 0.0);
        assert!(c.diffusion_determinant() >= -1e-12 * (1.0 + c.d_pp * c.d_qq), "{model:?}: {c:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn diffusion_matrix_is_psd(a in 0.05..4.0f64, b in 0.0..1.0f64, m in 0.3..3.0f64, hbar in 0.3..2.0f64, w in 0.0..2.0f64) {
        let pot = if w == 0.0 { Potential::Free } else { Potential::harmonic(w, m) };
        let model = LindbladModel::standard(a, b, m, hbar, pot).unwrap();
        let c = coefficients(&model, &solve_beta(&model, 0.0).unwrap()).unwrap();
        prop_assert!(c.diffusion_determinant() >= -1e-10 * (1.0 + c.d_pp * c.d_qq));
    }

    #[test]
    fn evolution_conserves_mass(q0 in -2.0..2.0f64, p0 in -2.0..2.0f64, t in 0.05..0.5f64) {
        let model = LindbladModel::standard(1.0, 0.1, 1.0, 1.0, Potential::harmonic(1.0, 1.0)).unwrap();
        let c = coefficients(&model, &solve_beta(&model, 0.0).unwrap()).unwrap();
        let lat = PhaseSpaceLattice::symmetric(6.0, 32, 6.0, 32).unwrap();
        let f0 = PhaseSpaceField::gaussian(lat.clone(), q0, p0, 0.8, 0.8);
        let f = evolve_fp(&c, &model, &f0, t, stable_dt(&c, &model, &lat)).unwrap();
        prop_assert!((f.mass() - f0.mass()).abs() <= 1e-8 * t);
    }
}
