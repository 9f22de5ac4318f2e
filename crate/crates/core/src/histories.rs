//! Two-time decoherent histories with phase-space quasi-projectors
//!
//! P_α = ∫_{Γ_α} dq dp |ψ_qp⟩⟨ψ_qp| / (2πħ)
//!
//! and the decoherence functional
//!
//! D(α₁α₂; α₁'α₂') = Tr(P_{α₂} K_{t₁→t₂}[P_{α₁} K_{0→t₁}[ρ₀] P_{α₁'}] P_{α₂'}).

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QsdError, Result};
use crate::ensemble::husimi_raw;
use crate::fokker_planck::{
    coefficients, drift_orbit, evolve_fp, PhaseSpaceField, PhaseSpaceLattice,
};
use crate::gaussian::{coherent_state, StationaryParams};
use crate::hilbert::{Grid, WaveFunction};
use crate::master::{self, DensityMatrix, EvolveOptions};
use crate::model::LindbladModel;

/// Minimum cell area in units of 2πħ.
pub const MIN_CELL_AREA: f64 = 4.0;
/// Largest grid on which the decoherence functional is evaluated.
pub const MAX_GRID: usize = 64;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Rectangle Γ_α in phase space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpaceCell {
    pub q_range: (f64, f64),
    pub p_range: (f64, f64),
}

impl PhaseSpaceCell {
    pub fn new(q_range: (f64, f64), p_range: (f64, f64)) -> Self {
        Self { q_range, p_range }
    }

    /// Area in units of 2πħ.
    pub fn area_units(&self, hbar: f64) -> f64 {
        (self.q_range.1 - self.q_range.0) * (self.p_range.1 - self.p_range.0) / (2.0 * std::f64::consts::PI * hbar)
    }

    pub fn contains(&self, q: f64, p: f64) -> bool {
        q >= self.q_range.0 && q < self.q_range.1 && p >= self.p_range.0 && p < self.p_range.1
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.q_range.0 + self.q_range.1),
            0.5 * (self.p_range.0 + self.p_range.1),
        )
    }
}

/// Regular n_q × n_p tiling of a rectangle, q-major.
pub fn tiling(q_range: (f64, f64), p_range: (f64, f64), n_q: usize, n_p: usize) -> Vec<PhaseSpaceCell> {
    let wq = (q_range.1 - q_range.0) / n_q as f64;
    let wp = (p_range.1 - p_range.0) / n_p as f64;
    let mut cells = Vec::with_capacity(n_q * n_p);
    for i in 0..n_q {
        for k in 0..n_p {
            let q0 = q_range.0 + i as f64 * wq;
            let p0 = p_range.0 + k as f64 * wp;
            cells.push(PhaseSpaceCell::new((q0, q0 + wq), (p0, p0 + wp)));
        }
    }
    cells
}

/// Riemann-sum quasi-projector on a grid.
#[derive(Clone, Debug)]
pub struct QuasiProjector {
    pub cell: PhaseSpaceCell,
    pub matrix: DensityMatrix,
    pub n_samples: usize,
}

/// Sample points of a global lattice with spacing `h` (points at integer
/// multiples of h) and their overlap lengths with `range`. Each point owns
/// the interval [x − h/2, x + h/2].
fn sample_weights(range: (f64, f64), h: f64) -> Vec<(f64, f64)> {
    let first = ((range.0 / h) - 0.5).floor() as i64;
    let last = ((range.1 / h) + 0.5).ceil() as i64;
    (first..=last)
        .filter_map(|j| {
            let x = j as f64 * h;
            let ov = (range.1.min(x + 0.5 * h) - range.0.max(x - 0.5 * h)).max(0.0);
            (ov > 0.0).then_some((x, ov))
        })
        .collect()
}

/// Lattice spacings used for the Riemann sums: the largest divisors of 1
/// not exceeding half the coherent-state widths.
fn sample_spacing(params: &StationaryParams) -> (f64, f64) {
    let fit = |s: f64| {
        let target = 0.5 * s;
        1.0 / (1.0 / target).ceil()
    };
    (fit(params.sigma_x()), fit(params.sigma_p()))
}

impl QuasiProjector {
    /// ⟨ψ|P|ψ⟩.
    pub fn expectation(&self, psi: &WaveFunction) -> f64 {
        self.matrix.matrix_element(psi, psi).re
    }

    /// Eigenvalues of the (Hermitian part of the) operator, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.matrix.eigenvalues()
    }

    /// Operator norm of P² − P, obtained from the spectrum of P.
    pub fn idempotence_defect(&self) -> f64 {
        self.eigenvalues().iter().map(|l| (l * l - l).abs()).fold(0.0, f64::max)
    }
}

/// Builds P_α for a cell from coherent states of shape `params`.
pub fn build_projector(cell: PhaseSpaceCell, params: &StationaryParams, grid: &Grid) -> Result<QuasiProjector> {
    let hbar = grid.hbar();
    let area = cell.area_units(hbar);
    if !(area >= MIN_CELL_AREA) {
        return Err(QsdError::CellTooSmall {
            area,
            min: MIN_CELL_AREA,
        });
    }
    let (hq, hp) = sample_spacing(params);
    let qs = sample_weights(cell.q_range, hq);
    let ps = sample_weights(cell.p_range, hp);
    let n = grid.n_points();
    let x = grid.x();
    let norm = 1.0 / (2.0 * std::f64::consts::PI * hbar);
    let mut data = vec![ZERO; n * n];
    for &(q, wq) in &qs {
        let g = coherent_state(grid, params, q, 0.0, hbar);
        let ga = g.amplitudes();
        // Σ_p w_p e^{ip(x−y)/ħ} depends only on the column pair, so sum it
        // into a vector of per-point phases first.
        let phases: Vec<Vec<Complex64>> = ps
            .iter()
            .map(|&(p, _)| x.iter().map(|&xi| Complex64::from_polar(1.0, p * xi / hbar)).collect())
            .collect();
        for j in 0..n {
            let col = &mut data[j * n..(j + 1) * n];
            let gj = ga[j].conj();
            for (pk, &(_, wp)) in ps.iter().enumerate() {
                let ph = &phases[pk];
                let s = gj * ph[j].conj() * (wq * wp * norm);
                for i in 0..n {
                    col[i] += ga[i] * ph[i] * s;
                }
            }
        }
    }
    Ok(QuasiProjector {
        cell,
        matrix: DensityMatrix::from_data(grid, data)?,
        n_samples: qs.len() * ps.len(),
    })
}

/// Builds the projectors of several cells in parallel.
pub fn build_projectors(
    cells: &[PhaseSpaceCell],
    params: &StationaryParams,
    grid: &Grid,
) -> Result<Vec<QuasiProjector>> {
    cells.par_iter().map(|c| build_projector(*c, params, grid)).collect()
}

/// Operator norm of Σ_α P_α − 1 restricted to the span of `probes`.
pub fn completeness_defect(projectors: &[QuasiProjector], probes: &[WaveFunction]) -> Result<f64> {
    let first = projectors
        .first()
        .ok_or_else(|| QsdError::InvalidArgument("no projectors".into()))?;
    if probes.is_empty() {
        return Err(QsdError::InvalidArgument("no probe states".into()));
    }
    let grid = first.matrix.grid();
    let n = grid.n_points();
    let mut sum = DensityMatrix::zeros(grid);
    for p in projectors {
        for (s, v) in sum.data_mut().iter_mut().zip(p.matrix.data()) {
            *s += v;
        }
    }
    // Orthonormal basis of the probe span (dx-weighted inner product).
    let sqdx = grid.dx().sqrt();
    let v = DMatrix::from_fn(n, probes.len(), |i, k| probes[k].amplitudes()[i] * sqdx);
    let qr = v.qr();
    let q = qr.q();
    let s = sum.to_matrix();
    let m = q.adjoint() * s * &q - DMatrix::<Complex64>::identity(q.ncols(), q.ncols());
    let h = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
    Ok(h.symmetric_eigenvalues().iter().map(|l| l.abs()).fold(0.0, f64::max))
}

/// Tr(AB) for two kernels on the same grid.
fn trace_product(a: &DensityMatrix, b: &DensityMatrix) -> Complex64 {
    let n = a.n();
    let dx = a.grid().dx();
    let (ad, bd) = (a.data(), b.data());
    let mut s = ZERO;
    for j in 0..n {
        for i in 0..n {
            s += ad[i + j * n] * bd[j + i * n];
        }
    }
    s * dx * dx
}

/// Decoherence functional over two-slice histories h = (α₁, α₂), indexed
/// `h = α₁ * n_cells + α₂`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecoherenceFunctional {
    pub n_cells: usize,
    /// Row-major (h, h') entries.
    pub values: Vec<Complex64>,
    /// Σ_{α₁α₂} Tr(P_{α₂} K[P_{α₁} ρ(t₁) P_{α₁}] P_{α₂}) evaluated with a
    /// single combined propagation.
    pub twice_projected_trace: f64,
}

impl DecoherenceFunctional {
    pub fn n_histories(&self) -> usize {
        self.n_cells * self.n_cells
    }

    pub fn get(&self, h: usize, hp: usize) -> Complex64 {
        self.values[h * self.n_histories() + hp]
    }

    pub fn probabilities(&self) -> Vec<f64> {
        (0..self.n_histories()).map(|h| self.get(h, h).re).collect()
    }

    pub fn probability_sum(&self) -> f64 {
        self.probabilities().iter().sum()
    }

    pub fn completeness_defect(&self) -> f64 {
        (self.probability_sum() - 1.0).abs()
    }

    /// max |D(h,h')| / √(D(h,h) D(h',h')) over h ≠ h' with both diagonal
    /// entries above `floor`.
    pub fn epsilon(&self, floor: f64) -> f64 {
        let p = self.probabilities();
        let nh = self.n_histories();
        let mut eps: f64 = 0.0;
        for h in 0..nh {
            for hp in 0..nh {
                if h == hp || p[h] <= floor || p[hp] <= floor {
                    continue;
                }
                eps = eps.max(self.get(h, hp).norm() / (p[h] * p[hp]).sqrt());
            }
        }
        eps
    }

    /// max |D(h,h') − D(h',h)*|.
    pub fn hermiticity_defect(&self) -> f64 {
        let nh = self.n_histories();
        let mut d: f64 = 0.0;
        for h in 0..nh {
            for hp in 0..nh {
                d = d.max((self.get(h, hp) - self.get(hp, h).conj()).norm());
            }
        }
        d
    }

    /// History (α₁, α₂) with the largest diagonal entry.
    pub fn modal_history(&self) -> (usize, usize) {
        let p = self.probabilities();
        let h = (0..p.len())
            .max_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap_or(0);
        (h / self.n_cells, h % self.n_cells)
    }
}

fn master_dt(model: &LindbladModel, grid: &Grid, dt: f64) -> f64 {
    dt.min(master::stable_dt(model, grid))
}

/// Evaluates D for slices at t₁ and t₂ (t₀ = 0). The projectors are
/// built from `params`.
pub fn decoherence_functional_2(
    model: &LindbladModel,
    rho0: &DensityMatrix,
    cells: &[PhaseSpaceCell],
    params: &StationaryParams,
    t1: f64,
    t2: f64,
    dt: f64,
) -> Result<DecoherenceFunctional> {
    let grid = rho0.grid();
    let n = grid.n_points();
    if n > MAX_GRID {
        return Err(QsdError::GridTooLarge { n, max: MAX_GRID });
    }
    if !(0.0 <= t1 && t1 <= t2) {
        return Err(QsdError::InvalidArgument(format!("need 0 <= t1 <= t2, got {t1}, {t2}")));
    }
    let projectors = build_projectors(cells, params, grid)?;
    let h = master_dt(model, grid, dt);
    let rho1 = master::evolve(model, rho0, t1, h)?;
    let nc = cells.len();
    // W(α₂, α₂') = P_{α₂'} P_{α₂}, so that Tr(P_{α₂} Y P_{α₂'}) = Tr(W Y).
    let w: Vec<DensityMatrix> = (0..nc * nc)
        .into_par_iter()
        .map(|k| {
            let (a2, a2p) = (k / nc, k % nc);
            projectors[a2p].matrix.matmul(&projectors[a2].matrix)
        })
        .collect();
    let left: Vec<DensityMatrix> = projectors.iter().map(|p| p.matrix.matmul(&rho1)).collect();
    let opts = EvolveOptions {
        checked: false,
        ..Default::default()
    };
    // Y(α₁, α₁') = K[P_{α₁} ρ₁ P_{α₁'}], evaluated for every ordered pair.
    let blocks: Vec<Vec<Complex64>> = (0..nc * nc)
        .into_par_iter()
        .map(|k| {
            let (a1, a1p) = (k / nc, k % nc);
            let x = left[a1].matmul(&projectors[a1p].matrix);
            let y = master::evolve_with(model, &x, t2 - t1, h, &opts, |_, _| {})?.0;
            Ok((0..nc * nc).map(|m| trace_product(&w[m], &y)).collect())
        })
        .collect::<Result<_>>()?;
    let nh = nc * nc;
    let mut values = vec![ZERO; nh * nh];
    for a1 in 0..nc {
        for a1p in 0..nc {
            let blk = &blocks[a1 * nc + a1p];
            for a2 in 0..nc {
                for a2p in 0..nc {
                    values[(a1 * nc + a2) * nh + (a1p * nc + a2p)] = blk[a2 * nc + a2p];
                }
            }
        }
    }
    // Independent evaluation of the diagonal sum for the trace identity.
    let mut z = DensityMatrix::zeros(grid);
    for (a1, p) in projectors.iter().enumerate() {
        let x = left[a1].matmul(&p.matrix);
        for (s, v) in z.data_mut().iter_mut().zip(x.data()) {
            *s += v;
        }
    }
    let z = master::evolve_with(model, &z, t2 - t1, h, &opts, |_, _| {})?.0;
    let twice_projected_trace = (0..nc).map(|a2| trace_product(&w[a2 * nc + a2], &z).re).sum();
    Ok(DecoherenceFunctional {
        n_cells: nc,
        values,
        twice_projected_trace,
    })
}

/// One-slice probabilities Tr(P_α ρ(t)) together with the Husimi mass of
/// ρ(t) in each cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SingleSliceReport {
    pub projector_probabilities: Vec<f64>,
    pub husimi_masses: Vec<f64>,
    pub max_discrepancy: f64,
}

/// Single-slice comparison. The Husimi function is sampled on `lattice`.
pub fn single_slice_probabilities(
    model: &LindbladModel,
    rho0: &DensityMatrix,
    cells: &[PhaseSpaceCell],
    params: &StationaryParams,
    t: f64,
    dt: f64,
    lattice: &PhaseSpaceLattice,
) -> Result<SingleSliceReport> {
    let grid = rho0.grid();
    let projectors = build_projectors(cells, params, grid)?;
    let rho = master::evolve(model, rho0, t, master_dt(model, grid, dt))?;
    let projector_probabilities: Vec<f64> = projectors.iter().map(|p| trace_product(&p.matrix, &rho).re).collect();
    let q = husimi_raw(&rho, params, lattice);
    let husimi_masses: Vec<f64> = cells.iter().map(|c| q.rect_mass(c.q_range, c.p_range)).collect();
    let max_discrepancy = projector_probabilities
        .iter()
        .zip(&husimi_masses)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(SingleSliceReport {
        projector_probabilities,
        husimi_masses,
        max_discrepancy,
    })
}

/// Initial phase-space distribution for the classical side of the
/// comparison.
#[derive(Clone, Debug)]
pub enum FpInitial {
    /// Husimi function of ρ₀.
    Husimi,
    /// Weighted point masses (w, q, p).
    Points(Vec<(f64, f64, f64)>),
    /// An explicit field on the comparison lattice.
    Field(PhaseSpaceField),
}

/// Classical-side setup of the comparison.
#[derive(Clone, Debug)]
pub struct FpComparison {
    pub lattice: PhaseSpaceLattice,
    pub initial: FpInitial,
    pub dt: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HistoryComparisonReport {
    pub quantum: Vec<f64>,
    pub classical: Vec<f64>,
    pub max_discrepancy: f64,
    pub epsilon: f64,
    /// Set when ε exceeds 0.2, in which case the probabilities are not
    /// expected to agree.
    pub outside_decoherent_regime: bool,
    pub modal_history: (usize, usize),
    /// Drift-orbit image at t₂ of the classical mass centre inside the
    /// first cell of the modal history.
    pub modal_orbit_end: (f64, f64),
    pub modal_classically_ordered: bool,
    pub completeness_defect: f64,
    pub hermiticity_defect: f64,
    pub trace_identity_defect: f64,
}

/// Diagonal floor used when forming the normalized off-diagonal ratio.
pub const EPSILON_FLOOR: f64 = 1e-10;

/// Compares diag D with Fokker-Planck cell-transition probabilities
/// p(α₁, α₂) = ∫_{Γα₂} K_FP[1_{Γα₁} f(t₁)].
pub fn history_probabilities_vs_fp(
    model: &LindbladModel,
    rho0: &DensityMatrix,
    cells: &[PhaseSpaceCell],
    params: &StationaryParams,
    times: (f64, f64),
    dt: f64,
    fp: &FpComparison,
) -> Result<(DecoherenceFunctional, HistoryComparisonReport)> {
    let (t1, t2) = times;
    let d = decoherence_functional_2(model, rho0, cells, params, t1, t2, dt)?;
    let coeffs = coefficients(model, params)?;
    let f0 = match &fp.initial {
        FpInitial::Husimi => {
            let mut f = husimi_raw(rho0, params, &fp.lattice);
            f.normalize();
            f
        }
        FpInitial::Points(points) => {
            let mut f = PhaseSpaceField::zeros(fp.lattice.clone());
            for &(w, q, p) in points {
                f.add_scaled(&PhaseSpaceField::impulse(fp.lattice.clone(), q, p)?, w);
            }
            f
        }
        FpInitial::Field(f) => f.clone(),
    };
    let f1 = evolve_fp(&coeffs, model, &f0, t1, fp.dt)?;
    let nc = cells.len();
    let rows: Vec<(Vec<f64>, (f64, f64), f64)> = cells
        .par_iter()
        .map(|c1| {
            let g = f1.restricted(c1.q_range, c1.p_range);
            let mass = g.mass();
            let centre = if mass > 0.0 {
                let m = g.moments();
                (m.mean_q, m.mean_p)
            } else {
                c1.center()
            };
            let g2 = evolve_fp(&coeffs, model, &g, t2 - t1, fp.dt)?;
            Ok((cells.iter().map(|c2| g2.rect_mass(c2.q_range, c2.p_range)).collect(), centre, mass))
        })
        .collect::<Result<_>>()?;
    let classical: Vec<f64> = rows.iter().flat_map(|r| r.0.iter().copied()).collect();
    let quantum = d.probabilities();
    let max_discrepancy = quantum
        .iter()
        .zip(&classical)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let epsilon = d.epsilon(EPSILON_FLOOR);
    let (m1, m2) = d.modal_history();
    let modal_orbit_end = drift_orbit(&coeffs, model, rows[m1].1, t2 - t1);
    let modal_classically_ordered = cells[m2].contains(modal_orbit_end.0, modal_orbit_end.1);
    debug_assert_eq!(classical.len(), nc * nc);
    let report = HistoryComparisonReport {
        quantum,
        classical,
        max_discrepancy,
        epsilon,
        outside_decoherent_regime: epsilon > 0.2,
        modal_history: (m1, m2),
        modal_orbit_end,
        modal_classically_ordered,
        completeness_defect: d.completeness_defect(),
        hermiticity_defect: d.hermiticity_defect(),
        trace_identity_defect: (d.probability_sum() - d.twice_projected_trace).abs(),
    };
    Ok((d, report))
}
