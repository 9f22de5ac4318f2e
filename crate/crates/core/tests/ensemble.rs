use qsd_core::ensemble::{centered_edges, gaussian_kernel, reconstruct_from, thermal_exponents_closed_form};
use qsd_core::fokker_planck::l1_distance;
use qsd_core::{
    coherent_diagonality, coherent_state, estimate_f, evolve, husimi, reconstruct_rho, run_ensemble, solve_beta,
    trace_distance, Complex64, DensityMatrix, EnsembleSpec, Grid, LindbladModel, PhaseSpaceField, PhaseSpaceHistogram,
    PhaseSpaceLattice, Potential, QbmParams, WaveFunction,
};

const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

fn free() -> LindbladModel {
    LindbladModel::standard(1.0, 0.0, 1.0, 1.0, Potential::Free).unwrap()
}

#[test]
fn single_trajectory_reconstructs_pure_state() {
    let g = Grid::symmetric(64, 10.0, 1.0).unwrap();
    let psi = WaveFunction::gaussian(&g, 0.0, 0.0, 1.5);
    let mut spec = EnsembleSpec::new(free(), psi, 1, 0.5, 0.01);
    spec.base_seed = 3;
    let rho = reconstruct_rho(&spec, 0.5).unwrap();
    assert!((rho.purity() - 1.0).abs() <= 1e-10);
    assert!((rho.trace().re - 1.0).abs() <= 1e-12);
}

#[test]
fn reconstruction_is_reproducible() {
    let g = Grid::symmetric(64, 10.0, 1.0).unwrap();
    let psi = WaveFunction::gaussian(&g, 0.5, 0.0, 1.0);
    let mut spec = EnsembleSpec::new(free(), psi, 12, 0.3, 0.01);
    spec.snapshot_times = vec![0.3];
    let a = run_ensemble(&spec).unwrap();
    let b = run_ensemble(&spec).unwrap();
    let ra = reconstruct_from(&a, 0.3).unwrap();
    let rb = reconstruct_from(&b, 0.3).unwrap();
    assert_eq!(ra.data(), rb.data());
    assert!(reconstruct_from(&a, 0.2).is_err());
}

#[test]
fn deterministic_ensemble_fills_one_bin() {
    let g = Grid::symmetric(64, 10.0, 1.0).unwrap();
    let model = LindbladModel::standard(0.0, 0.0, 1.0, 1.0, Potential::harmonic(1.0, 1.0)).unwrap();
    let psi = WaveFunction::gaussian(&g, 1.0, 0.0, 0.5);
    let mut spec = EnsembleSpec::new(model, psi, 10, 0.5, 0.01);
    spec.params = Some(solve_beta(&free(), 0.0).unwrap());
    let h = estimate_f(&spec, 0.5, (8, 8)).unwrap();
    assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
    assert_eq!(h.outside, 0);
    assert!((h.total_mass() - 1.0).abs() <= 1e-12);
}

#[test]
fn histogram_counts_and_mass() {
    let samples = [(0.1, 0.1), (0.6, 0.2), (0.6, 0.9), (5.0, 0.0)];
    let h = PhaseSpaceHistogram::from_samples(&samples, centered_edges(0.5, 0.5, 2), centered_edges(0.5, 0.5, 2));
    assert_eq!(h.counts, vec![1, 0, 1, 1]);
    assert_eq!(h.outside, 1);
    assert!((h.total_mass() - 1.0).abs() <= 1e-12);
    assert!(h.density.iter().all(|&d| d >= 0.0));
}

#[test]
fn mixed_initial_state_is_the_weighted_ensemble() {
    let g = Grid::symmetric(64, 10.0, 1.0).unwrap();
    let model = free();
    let u = WaveFunction::gaussian(&g, -1.5, 0.0, 0.7);
    let v = WaveFunction::gaussian(&g, 2.0, 0.5, 0.7);
    let (w1, w2) = (0.3, 0.7);
    let t = 0.5;
    let dt = 0.02;
    let mut rho_ens = DensityMatrix::zeros(&g);
    for (psi, w, n, seed) in [(&u, w1, 120, 0u64), (&v, w2, 280, 1000)] {
        let mut spec = EnsembleSpec::new(model.clone(), psi.clone(), n, t, dt);
        spec.base_seed = seed;
        let r = reconstruct_rho(&spec, t).unwrap();
        rho_ens = rho_ens.axpy(Complex64::new(w, 0.0), &r);
    }
    let rho0 = DensityMatrix::mixture(&[(w1, u.clone()), (w2, v.clone())]).unwrap();
    let master_dt = qsd_core::master::stable_dt(&model, &g);
    let exact = evolve(&model, &rho0, t, master_dt).unwrap();
    let d = trace_distance(&rho_ens, &exact).unwrap();
    assert!(d <= 0.15, "trace distance {d}");
}

#[test]
fn coherent_projector_is_diagonal_and_cat_is_not() {
    let g = Grid::symmetric(128, 12.0, 1.0).unwrap();
    let sp = solve_beta(&free(), 0.0).unwrap();
    let psi = coherent_state(&g, &sp, 0.0, 0.0, 1.0);
    let rho = DensityMatrix::pure(&psi);
    let far = 10.0 * sp.sigma_x();
    // The far diagonal element underflows the 1e-12 floor and the pair is skipped.
    let rep = coherent_diagonality(&rho, &sp, &[((0.0, 0.0), (far, 0.0))]);
    assert_eq!(rep.skipped.len(), 1);
    assert!(rep.max_separated_ratio.is_none());
    let probe = coherent_state(&g, &sp, far, 0.0, 1.0);
    assert!(rho.matrix_element(&psi, &probe).norm() <= 1e-3);
    // For any pure state the normalized ratio is exactly one.
    let near = coherent_diagonality(&rho, &sp, &[((0.0, 0.0), (2.0 * sp.sigma_x(), 0.0))]);
    assert!((near.pairs[0].ratio - 1.0).abs() <= 1e-9);
    assert!(!near.pairs[0].well_separated);

    let l = coherent_state(&g, &sp, -5.0, 0.0, 1.0);
    let r = coherent_state(&g, &sp, 5.0, 0.0, 1.0);
    let cat = DensityMatrix::pure(&l.combine(ONE, &r, ONE).normalized());
    let rep = coherent_diagonality(&cat, &sp, &[((-5.0, 0.0), (5.0, 0.0))]);
    assert!((rep.pairs[0].ratio - 1.0).abs() <= 1e-6);
    assert!(rep.pairs[0].well_separated);
}

#[test]
fn decohered_cat_is_diagonal() {
    let g = Grid::symmetric(64, 10.0, 1.0).unwrap();
    let model = free();
    let sp = solve_beta(&model, 0.0).unwrap();
    let l = coherent_state(&g, &sp, -5.0, 0.0, 1.0);
    let r = coherent_state(&g, &sp, 5.0, 0.0, 1.0);
    let cat = DensityMatrix::pure(&l.combine(ONE, &r, ONE).normalized());
    // Ten superposition times 1/(ℓ²a²).
    let t = 10.0 / 100.0;
    let rho = evolve(&model, &cat, t, qsd_core::master::stable_dt(&model, &g)).unwrap();
    let rep = coherent_diagonality(&rho, &sp, &[((-5.0, 0.0), (5.0, 0.0))]);
    assert!(rep.max_separated_ratio.unwrap() <= 0.1, "{:?}", rep.max_separated_ratio);
}

#[test]
fn husimi_of_coherent_state_peaks_at_centre() {
    let g = Grid::symmetric(128, 12.0, 1.0).unwrap();
    let sp = solve_beta(&free(), 0.0).unwrap();
    let rho = DensityMatrix::pure(&coherent_state(&g, &sp, 1.5, -1.0, 1.0));
    let lat = PhaseSpaceLattice::symmetric(6.0, 48, 6.0, 48).unwrap();
    let q = husimi(&rho, &sp, &lat);
    assert!(q.min_value() >= -1e-12);
    assert!((q.mass() - 1.0).abs() <= 1e-12);
    let m = q.moments();
    assert!((m.mean_q - 1.5).abs() <= 0.05 && (m.mean_p + 1.0).abs() <= 0.05, "{m:?}");
}

#[test]
fn husimi_is_linear_in_rho() {
    let g = Grid::symmetric(64, 10.0, 1.0).unwrap();
    let sp = solve_beta(&free(), 0.0).unwrap();
    let lat = PhaseSpaceLattice::symmetric(6.0, 24, 6.0, 24).unwrap();
    let r1 = DensityMatrix::pure(&coherent_state(&g, &sp, -2.0, 0.5, 1.0));
    let r2 = DensityMatrix::pure(&WaveFunction::gaussian(&g, 1.0, -0.5, 1.5));
    let (w1, w2) = (0.25, 0.75);
    let mix = r1.axpy(Complex64::new(w2 / w1, 0.0), &r2);
    let mut mix_scaled = mix.clone();
    mix_scaled.scale(Complex64::new(w1, 0.0));
    let q_raw = qsd_core::ensemble::husimi_raw(&mix_scaled, &sp, &lat);
    let mut expected = qsd_core::ensemble::husimi_raw(&r1, &sp, &lat);
    expected.scale(w1);
    expected.add_scaled(&qsd_core::ensemble::husimi_raw(&r2, &sp, &lat), w2);
    let err = q_raw.values.iter().zip(&expected.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err <= 1e-8, "{err}");
}

#[test]
fn thermal_husimi_is_smoothed_boltzmann_density() {
    let g = Grid::symmetric(128, 20.0, 1.0).unwrap();
    let (omega, kt) = (1.0, 5.0);
    let q = QbmParams { gamma: 0.05, kt, m: 1.0, hbar: 1.0 };
    let model = LindbladModel::from_qbm(q, Potential::harmonic(omega, 1.0)).unwrap();
    let sp = solve_beta(&model, 0.0).unwrap();
    let rho = gaussian_kernel(&g, &thermal_exponents_closed_form(&sp, 1.0, 1.0, kt, omega));
    let lat = PhaseSpaceLattice::symmetric(12.0, 48, 12.0, 48).unwrap();
    let qfun = husimi(&rho, &sp, &lat);
    // Covariance of f_MB plus twice the coherent-state covariance.
    let (sqq, spp, sqp) = (kt / (omega * omega) + 2.0 * sp.sigma_x2, kt + 2.0 * sp.sigma_p2, 2.0 * sp.r0);
    let det = sqq * spp - sqp * sqp;
    let mut expected = PhaseSpaceField::from_fn(lat.clone(), |x, p| {
        (-(spp * x * x - 2.0 * sqp * x * p + sqq * p * p) / (2.0 * det)).exp()
    });
    expected.normalize();
    let d = l1_distance(&qfun, &expected).unwrap();
    assert!(d <= 0.05, "L1 {d}");
}
