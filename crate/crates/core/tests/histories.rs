use qsd_core::histories::{completeness_defect, single_slice_probabilities, tiling, MIN_CELL_AREA};
use qsd_core::{
    build_projector, coherent_state, decoherence_functional_2, solve_beta, Complex64, DensityMatrix, Grid,
    LindbladModel, PhaseSpaceCell, PhaseSpaceLattice, Potential, QsdError, StationaryParams,
};

const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

fn free() -> LindbladModel {
    LindbladModel::standard(1.0, 0.0, 1.0, 1.0, Potential::Free).unwrap()
}

fn setup() -> (Grid, StationaryParams) {
    (Grid::symmetric(64, 10.0, 1.0).unwrap(), solve_beta(&free(), 0.0).unwrap())
}

#[test]
fn projector_selects_states_in_its_cell() {
    let (g, sp) = setup();
    let cell = PhaseSpaceCell::new((-3.0, 3.0), (-3.0, 3.0));
    let p = build_projector(cell, &sp, &g).unwrap();
    let inside = p.expectation(&coherent_state(&g, &sp, 0.0, 0.0, 1.0));
    assert!(inside >= 0.9, "{inside}");
    let edge = build_projector(PhaseSpaceCell::new((-9.5, -3.5), (-3.0, 3.0)), &sp, &g).unwrap();
    let outside = edge.expectation(&coherent_state(&g, &sp, -3.5 + 10.0 * sp.sigma_x(), 0.0, 1.0));
    let outside_p = p.expectation(&coherent_state(&g, &sp, 0.0, 3.0 + 10.0 * sp.sigma_p(), 1.0));
    assert!(outside <= 0.05 && outside_p <= 0.05, "{outside} {outside_p}");
    let ev = p.eigenvalues();
    assert!(ev.iter().all(|&l| l >= -1e-10 && l <= 1.0 + 1e-10));
}

#[test]
fn projectors_are_additive() {
    let (g, sp) = setup();
    let left = build_projector(PhaseSpaceCell::new((-6.0, 0.0), (-3.0, 3.0)), &sp, &g).unwrap();
    let right = build_projector(PhaseSpaceCell::new((0.0, 6.0), (-3.0, 3.0)), &sp, &g).unwrap();
    let union = build_projector(PhaseSpaceCell::new((-6.0, 6.0), (-3.0, 3.0)), &sp, &g).unwrap();
    for &(q, p) in &[(0.0, 0.0), (-1.5, 0.7), (2.2, -1.0)] {
        let psi = coherent_state(&g, &sp, q, p, 1.0);
        let sum = left.expectation(&psi) + right.expectation(&psi);
        assert!((sum - union.expectation(&psi)).abs() <= 1e-6);
    }
}

#[test]
fn tiling_is_complete_on_interior_states() {
    let (g, sp) = setup();
    let cells = tiling((-9.0, 9.0), (-9.0, 9.0), 2, 2);
    let projectors: Vec<_> = cells.iter().map(|c| build_projector(*c, &sp, &g).unwrap()).collect();
    let probes: Vec<_> = [(0.0, 0.0), (-2.0, 1.0), (1.5, -2.5)]
        .iter()
        .map(|&(q, p)| coherent_state(&g, &sp, q, p, 1.0))
        .collect();
    let d = completeness_defect(&projectors, &probes).unwrap();
    assert!(d <= 1e-3, "completeness defect {d}");
}

#[test]
fn small_cells_and_large_grids_are_rejected() {
    let (g, sp) = setup();
    let tiny = PhaseSpaceCell::new((0.0, 1.0), (0.0, 1.0));
    assert!(tiny.area_units(1.0) < MIN_CELL_AREA);
    assert!(matches!(build_projector(tiny, &sp, &g), Err(QsdError::CellTooSmall { .. })));
    let big = Grid::symmetric(128, 10.0, 1.0).unwrap();
    let rho = DensityMatrix::pure(&coherent_state(&big, &sp, 0.0, 0.0, 1.0));
    let cells = [PhaseSpaceCell::new((-9.0, 9.0), (-9.0, 9.0))];
    let r = decoherence_functional_2(&free(), &rho, &cells, &sp, 0.1, 0.2, 0.01);
    assert!(matches!(r, Err(QsdError::GridTooLarge { .. })));
}

#[test]
fn closed_cat_keeps_interference_between_branch_histories() {
    let (g, sp) = setup();
    let cat = coherent_state(&g, &sp, -2.5, 0.0, 1.0)
        .combine(ONE, &coherent_state(&g, &sp, 2.5, 0.0, 1.0), ONE)
        .normalized();
    let rho = DensityMatrix::pure(&cat);
    let cells = [PhaseSpaceCell::new((-10.0, 0.0), (-6.0, 6.0)), PhaseSpaceCell::new((0.0, 10.0), (-6.0, 6.0))];
    let unitary = LindbladModel::standard(0.0, 0.0, 1.0, 1.0, Potential::Free).unwrap();
    let d = decoherence_functional_2(&unitary, &rho, &cells, &sp, 0.5, 1.5, 0.01).unwrap();
    let eps = d.epsilon(1e-10);
    assert!(eps >= 0.3, "closed-system epsilon {eps}");
    assert!(d.hermiticity_defect() <= 1e-10);
    assert!((d.probability_sum() - d.twice_projected_trace).abs() <= 1e-8);
    assert!(d.probabilities().iter().all(|&p| p >= -1e-8));

    let open = decoherence_functional_2(&free(), &rho, &cells, &sp, 0.5, 1.5, 0.01).unwrap();
    assert!(open.epsilon(1e-10) < eps, "open {} vs closed {eps}", open.epsilon(1e-10));
    assert!(open.hermiticity_defect() <= 1e-10);
    assert!((open.probability_sum() - open.twice_projected_trace).abs() <= 1e-8);
}

#[test]
fn single_slice_matches_husimi_masses() {
    let (g, sp) = setup();
    let rho = DensityMatrix::pure(&coherent_state(&g, &sp, 0.8, -0.4, 1.0));
    let cells = tiling((-8.0, 8.0), (-8.0, 8.0), 2, 2);
    let lat = PhaseSpaceLattice::symmetric(8.0, 64, 8.0, 64).unwrap();
    let rep = single_slice_probabilities(&free(), &rho, &cells, &sp, 0.5, 0.01, &lat).unwrap();
    assert!(rep.max_discrepancy <= 0.05, "{rep:?}");
    let total: f64 = rep.projector_probabilities.iter().sum();
    assert!((total - 1.0).abs() <= 0.05, "{total}");
}

#[test]
fn decoherence_does_not_worsen_with_cell_area() {
    let (g, sp) = setup();
    let rho = DensityMatrix::pure(&coherent_state(&g, &sp, 0.7, 0.5, 1.0));
    let mut prev = f64::INFINITY;
    for (nq, np) in [(2, 2), (2, 1)] {
        let cells = tiling((-8.0, 8.0), (-8.0, 8.0), nq, np);
        let d = decoherence_functional_2(&free(), &rho, &cells, &sp, 1.0, 2.0, 0.01).unwrap();
        let eps = d.epsilon(1e-10);
        assert!(eps <= 1.2 * prev, "area {}: {eps} after {prev}", cells[0].area_units(1.0));
        prev = eps;
    }
}
