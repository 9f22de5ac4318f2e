use qsd_core::qsd::{default_dt, moment_drift_check, run_trajectory_with, Stepper};
use qsd_core::{
    coherent_state, ito_step, run_trajectory, solve_beta, Complex64, Grid, LindbladModel,
    MomentState, NoiseProcess, Potential, Scheme, TrajectoryConfig, WaveFunction,
};

const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

fn grid() -> Grid {
    Grid::symmetric(128, 12.0, 1.0).unwrap()
}

fn free_a1() -> LindbladModel {
    LindbladModel::standard(1.0, 0.0, 1.0, 1.0, Potential::Free).unwrap()
}

fn moments_close(a: &MomentState, b: &MomentState, tol: f64) -> bool {
    (a.x_mean - b.x_mean).abs() <= tol
        && (a.p_mean - b.p_mean).abs() <= tol
        && (a.var_x - b.var_x).abs() <= tol
        && (a.var_p - b.var_p).abs() <= tol
        && (a.r - b.r).abs() <= tol
}

#[test]
fn same_seed_gives_identical_records() {
    let g = grid();
    let model = LindbladModel::standard(0.8, 0.2, 1.0, 1.0, Potential::harmonic(1.0, 1.0)).unwrap();
    let psi = WaveFunction::gaussian(&g, 1.0, 0.0, 0.8);
    for scheme in [Scheme::EulerMaruyama, Scheme::SplitExponential] {
        let cfg = TrajectoryConfig::new(0.5, 1e-3, 10).scheme(scheme);
        let r1 = run_trajectory_with(&model, &psi, &cfg, NoiseProcess::new(42)).unwrap();
        let r2 = run_trajectory_with(&model, &psi, &cfg, NoiseProcess::new(42)).unwrap();
        let r3 = run_trajectory_with(&model, &psi, &cfg, NoiseProcess::new(43)).unwrap();
        assert_eq!(r1.times, r2.times);
        assert_eq!(r1.moments, r2.moments);
        assert_eq!(r1.delta_a2, r2.delta_a2);
        assert_eq!(r1.final_state.amplitudes(), r2.final_state.amplitudes());
        assert_ne!(r1.moments, r3.moments);
    }
}

#[test]
fn record_times_increase_and_arrays_align() {
    let g = grid();
    let model = free_a1();
    let psi = WaveFunction::gaussian(&g, 0.0, 0.0, 1.0);
    let rec = run_trajectory(&model, &psi, 0.3, 1e-3, NoiseProcess::new(1), 7).unwrap();
    assert!(rec.times.windows(2).all(|w| w[1] > w[0]));
    assert_eq!(rec.times.len(), rec.moments.len());
    assert_eq!(rec.times.len(), rec.delta_a2.len());
    assert!((rec.times.last().unwrap() - 0.3).abs() <= 1e-12);
    for m in &rec.moments {
        assert!(m.var_x >= 0.0 && m.var_p >= 0.0);
        assert!(m.uncertainty() >= 0.25 - 1e-6);
    }
}

#[test]
fn zero_duration_records_only_initial_state() {
    let g = grid();
    let psi = WaveFunction::gaussian(&g, 0.5, 0.2, 1.0);
    let rec = run_trajectory(&free_a1(), &psi, 0.0, 1e-3, NoiseProcess::new(1), 1).unwrap();
    assert_eq!(rec.times, vec![0.0]);
    assert_eq!(rec.moments.len(), 1);
    assert!(moments_close(&rec.moments[0], &MomentState::of(&psi), 1e-14));
}

#[test]
fn phase_of_l_is_absorbed_by_noise() {
    let g = grid();
    let base = LindbladModel::standard(0.8, 0.3, 1.0, 1.0, Potential::harmonic(1.0, 1.0)).unwrap();
    let psi0 = WaveFunction::gaussian(&g, 1.0, -0.5, 0.6);
    let theta = 1.1;
    let rot = Complex64::from_polar(1.0, -theta);
    for scheme in [Scheme::EulerMaruyama, Scheme::SplitExponential] {
        let s0 = Stepper::new(&base, &g, scheme).unwrap();
        let s1 = Stepper::new(&base.clone().with_phase(theta), &g, scheme).unwrap();
        let mut noise = NoiseProcess::new(9);
        let (mut u, mut v) = (psi0.clone(), psi0.clone());
        for _ in 0..200 {
            let dxi = noise.increment(1e-3);
            u = s0.step(&u, 1e-3, dxi).unwrap();
            v = s1.step(&v, 1e-3, dxi * rot).unwrap();
            assert!(moments_close(&MomentState::of(&u), &MomentState::of(&v), 1e-10), "{scheme:?}");
        }
    }
}

#[test]
fn renormalized_step_and_norm_drift_order() {
    // The pre-normalization norm minus its martingale part is O(dt^{3/2}).
    let g = grid();
    let model = LindbladModel::standard(1.0, 0.3, 1.0, 1.0, Potential::harmonic(1.0, 1.0)).unwrap();
    let psi = WaveFunction::gaussian(&g, 0.8, 0.6, 0.7);
    let stepper = Stepper::new(&model, &g, Scheme::EulerMaruyama).unwrap();
    let dts = [1e-4, 3e-4, 1e-3, 3e-3, 1e-2];
    let mut pts = Vec::new();
    for &dt in &dts {
        let mut noise = NoiseProcess::new(5);
        let mut ss = 0.0;
        let n = 400;
        for _ in 0..n {
            let (out, info) = stepper.step_with_info(&psi, dt, noise.increment(dt)).unwrap();
            assert!((out.norm_sqr() - 1.0).abs() <= 1e-12);
            let r = info.norm_sq_pre - 1.0 - info.martingale;
            ss += r * r;
        }
        pts.push((dt.ln(), (ss / n as f64).sqrt().ln()));
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((slope - 1.5).abs() <= 0.2, "slope {slope}");
}

#[test]
fn unitary_limit_is_an_euler_schrodinger_step() {
    let g = grid();
    let pot = Potential::harmonic(1.0, 1.0);
    let model = LindbladModel::standard(0.0, 0.0, 1.0, 1.0, pot.clone()).unwrap();
    let psi = WaveFunction::gaussian(&g, 1.0, 0.4, 0.6);
    let dt = 1e-4;
    let out = ito_step(&model, &psi, dt, Complex64::new(0.3, -0.7)).unwrap();
    // Reference: ψ − i dt Hψ with H applied spectrally, then normalized.
    let mut kin = psi.amplitudes().to_vec();
    g.apply_k_diagonal(&mut kin, |p| Complex64::new(0.5 * p * p, 0.0));
    let amps: Vec<Complex64> = psi
        .amplitudes()
        .iter()
        .zip(&kin)
        .zip(g.x())
        .map(|((a, k), &x)| a - Complex64::new(0.0, dt) * (k + a * pot.value(x)))
        .collect();
    let reference = WaveFunction::new(g.clone(), amps).unwrap().normalized();
    let err = out.amplitudes().iter().zip(reference.amplitudes()).map(|(u, v)| (u - v).norm()).fold(0.0, f64::max);
    assert!(err <= 1e-12, "{err}");
}

#[test]
fn stationary_gaussian_has_vanishing_drifts() {
    let g = grid();
    let model = LindbladModel::standard(1.0, 0.2, 1.0, 1.0, Potential::harmonic(1.0, 1.0)).unwrap();
    let sp = solve_beta(&model, 0.0).unwrap();
    let psi = coherent_state(&g, &sp, 0.5, -0.3, 1.0);
    let rep = moment_drift_check(&model, &psi, 100_000, 1e-4).unwrap();
    for k in 2..5 {
        assert!(rep.analytic[k].abs() <= 1e-6, "analytic drift {k}: {}", rep.analytic[k]);
    }
    assert!(rep.max_abs_z() <= 3.0, "z = {:?}", rep.z);
}

#[test]
fn mean_position_drift_is_velocity() {
    let g = grid();
    let model = LindbladModel::standard(0.7, 0.2, 1.3, 1.0, Potential::Quartic { lambda: 0.1 }).unwrap();
    let psi = WaveFunction::gaussian(&g, 0.4, 0.9, 0.5);
    let p = MomentState::of(&psi).p_mean;
    let rep = moment_drift_check(&model, &psi, 10_000, 1e-4).unwrap();
    assert!((rep.analytic[0] - p / 1.3).abs() <= 1e-10);
    assert!(rep.z[0].abs() <= 3.0, "z = {}", rep.z[0]);
}

#[test]
fn wide_gaussian_contracts() {
    let g = grid();
    let model = free_a1();
    let sp = solve_beta(&model, 0.0).unwrap();
    let var = 4.0 * sp.sigma_x2;
    let psi = WaveFunction::gaussian(&g, 0.0, 0.0, var);
    let rep = moment_drift_check(&model, &psi, 20_000, 1e-4).unwrap();
    let expected = -2.0 * var * var;
    assert!((rep.analytic[2] - expected).abs() <= 1e-6 * expected.abs(), "{} vs {expected}", rep.analytic[2]);
    assert!(rep.estimate[2] < 0.0);
    assert!(rep.z[2].abs() <= 3.0);
}

#[test]
fn unitary_limit_drifts_are_ehrenfest() {
    let g = grid();
    let pot = Potential::DoubleWell { v0: 0.5, separation: 3.0 };
    let model = LindbladModel::standard(0.0, 0.0, 1.0, 1.0, pot.clone()).unwrap();
    let psi = WaveFunction::gaussian(&g, 0.9, 0.3, 0.4);
    let rep = moment_drift_check(&model, &psi, 100, 1e-5).unwrap();
    let m = MomentState::of(&psi);
    let dv = qsd_core::expectation(&psi, qsd_core::Operator::VPrime(&pot)).re;
    assert!((rep.analytic[0] - m.p_mean).abs() <= 1e-10);
    assert!((rep.analytic[1] + dv).abs() <= 1e-10);
    // Deterministic steps: the spread vanishes, so compare directly at O(dt).
    for k in 0..5 {
        assert!((rep.estimate[k] - rep.analytic[k]).abs() <= 1e-3 * (1.0 + rep.analytic[k].abs()));
    }
}

#[test]
fn free_particle_width_reaches_fixed_point() {
    let g = Grid::symmetric(128, 20.0, 1.0).unwrap();
    let model = free_a1();
    let psi = WaveFunction::gaussian(&g, 0.0, 0.0, 2.0);
    let tau = std::f64::consts::FRAC_1_SQRT_2;
    let dt = default_dt(&model, &g, Scheme::SplitExponential);
    let rec = run_trajectory(&model, &psi, 5.0 * tau, dt, NoiseProcess::new(3), 10).unwrap();
    let vx = rec.moments.last().unwrap().var_x;
    assert!((vx / std::f64::consts::FRAC_1_SQRT_2 - 1.0).abs() <= 0.1, "var_x {vx}");
}

#[test]
fn separated_superposition_collapses() {
    let g = Grid::symmetric(256, 15.0, 1.0).unwrap();
    let model = free_a1();
    let l = WaveFunction::gaussian(&g, -5.0, 0.0, 0.7);
    let r = WaveFunction::gaussian(&g, 5.0, 0.0, 0.7);
    let psi = l.combine(ONE, &r, ONE).normalized();
    assert!(MomentState::of(&psi).var_x > 20.0);
    // 1/(ℓ²a²) = 0.01.
    let rec = run_trajectory(&model, &psi, 0.2, 2e-4, NoiseProcess::new(11), 50).unwrap();
    assert!(rec.moments.last().unwrap().var_x < 2.0);
}
