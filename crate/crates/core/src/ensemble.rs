//! Trajectory ensembles: reconstruction of ρ = M|ψ⟩⟨ψ|, phase-space
//! histograms of trajectory centres, and coherent-state diagnostics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QsdError, Result};
use crate::fokker_planck::{PhaseSpaceField, PhaseSpaceLattice};
use crate::gaussian::{coherent_state, StationaryParams};
use crate::hilbert::WaveFunction;
use crate::master::DensityMatrix;
use crate::model::LindbladModel;
use crate::qsd::{run_with_stepper, NoiseProcess, Scheme, Stepper, TrajectoryConfig, TrajectoryRecord};

/// Ensemble definition. Trajectory j uses seed `base_seed + j`.
#[derive(Clone, Debug)]
pub struct EnsembleSpec {
    pub n_traj: usize,
    pub base_seed: u64,
    pub model: LindbladModel,
    pub psi0: WaveFunction,
    pub t: f64,
    pub dt: f64,
    pub record_every: usize,
    pub scheme: Scheme,
    pub snapshot_times: Vec<f64>,
    pub params: Option<StationaryParams>,
}

impl EnsembleSpec {
    pub fn new(model: LindbladModel, psi0: WaveFunction, n_traj: usize, t: f64, dt: f64) -> Self {
        Self {
            n_traj,
            base_seed: 0,
            model,
            psi0,
            t,
            dt,
            record_every: 1,
            scheme: Scheme::SplitExponential,
            snapshot_times: Vec::new(),
            params: None,
        }
    }

    fn trajectory_config(&self) -> TrajectoryConfig {
        TrajectoryConfig {
            t: self.t,
            dt: self.dt,
            record_every: self.record_every,
            scheme: self.scheme,
            snapshot_times: self.snapshot_times.clone(),
            params: self.params,
            wrap_check_every: 100,
        }
    }
}

/// All trajectory records of an ensemble, ordered by seed.
#[derive(Clone, Debug)]
pub struct EnsembleResult {
    pub times: Vec<f64>,
    pub records: Vec<TrajectoryRecord>,
}

impl EnsembleResult {
    /// Mean over trajectories of `f(record, time_index)`, summed in seed order.
    pub fn mean_series(&self, f: impl Fn(&TrajectoryRecord, usize) -> f64) -> Vec<f64> {
        let n = self.records.len() as f64;
        (0..self.times.len())
            .map(|k| self.records.iter().map(|r| f(r, k)).sum::<f64>() / n)
            .collect()
    }

    /// Index of `t` on the record lattice.
    pub fn time_index(&self, t: f64) -> Result<usize> {
        let tol = 1e-9 * (1.0 + t.abs());
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= tol.max(1e-6 * step_of(&self.times)))
            .ok_or(QsdError::OffLattice(t))
    }

    /// Centres (⟨x⟩, ⟨p⟩) of every trajectory at a record index.
    pub fn centers(&self, k: usize) -> Vec<(f64, f64)> {
        self.records
            .iter()
            .map(|r| (r.moments[k].x_mean, r.moments[k].p_mean))
            .collect()
    }

    /// Count of trajectories that raised a wrap-around warning.
    pub fn wrap_warnings(&self) -> usize {
        self.records.iter().filter(|r| !r.warnings.is_empty()).count()
    }
}

fn step_of(times: &[f64]) -> f64 {
    if times.len() >= 2 {
        times[1] - times[0]
    } else {
        1.0
    }
}

/// Runs all trajectories, in parallel across the rayon pool.
pub fn run_ensemble(spec: &EnsembleSpec) -> Result<EnsembleResult> {
    if spec.n_traj < 1 {
        return Err(QsdError::InvalidArgument("n_traj must be at least 1".into()));
    }
    let stepper = Stepper::new(&spec.model, spec.psi0.grid(), spec.scheme)?;
    let cfg = spec.trajectory_config();
    let records: Vec<TrajectoryRecord> = (0..spec.n_traj)
        .into_par_iter()
        .map(|j| {
            let seed = spec.base_seed.wrapping_add(j as u64);
            run_with_stepper(&stepper, &spec.psi0, &cfg, NoiseProcess::new(seed)).map_err(|e| {
                QsdError::Trajectory {
                    seed,
                    source: Box::new(e),
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleResult {
        times: cfg.record_times(),
        records,
    })
}

/// Runs trajectories and reduces each with `f` without keeping the records.
/// Results are returned in seed order.
pub fn map_trajectories<T: Send>(
    spec: &EnsembleSpec,
    f: impl Fn(TrajectoryRecord) -> T + Sync,
) -> Result<Vec<T>> {
    let stepper = Stepper::new(&spec.model, spec.psi0.grid(), spec.scheme)?;
    let cfg = spec.trajectory_config();
    (0..spec.n_traj)
        .into_par_iter()
        .map(|j| {
            let seed = spec.base_seed.wrapping_add(j as u64);
            run_with_stepper(&stepper, &spec.psi0, &cfg, NoiseProcess::new(seed))
                .map(&f)
                .map_err(|e| QsdError::Trajectory {
                    seed,
                    source: Box::new(e),
                })
        })
        .collect()
}

/// (1/n) Σ_j |ψ_j⟩⟨ψ_j| from a list of states, summed in the given order.
pub fn average_projector(states: &[&WaveFunction]) -> Result<DensityMatrix> {
    let first = states
        .first()
        .ok_or_else(|| QsdError::InvalidArgument("no states to average".into()))?;
    let mut rho = DensityMatrix::zeros(first.grid());
    let w = 1.0 / states.len() as f64;
    for psi in states {
        rho.add_outer(psi, w)?;
    }
    Ok(rho)
}

/// Reconstructed ρ at `at_time`, which must be a snapshot time of the spec
/// (it is added when missing).
pub fn reconstruct_rho(spec: &EnsembleSpec, at_time: f64) -> Result<DensityMatrix> {
    let mut s = spec.clone();
    if !s.snapshot_times.iter().any(|&t| (t - at_time).abs() < 1e-12) {
        s.snapshot_times.push(at_time);
    }
    let ens = run_ensemble(&s)?;
    reconstruct_from(&ens, at_time)
}

/// Reconstruction from stored snapshots.
pub fn reconstruct_from(ens: &EnsembleResult, at_time: f64) -> Result<DensityMatrix> {
    let states: Vec<&WaveFunction> = ens
        .records
        .iter()
        .map(|r| {
            r.snapshots
                .iter()
                .find(|(t, _)| (t - at_time).abs() < 1e-12)
                .map(|(_, w)| w)
                .ok_or(QsdError::OffLattice(at_time))
        })
        .collect::<Result<_>>()?;
    average_projector(&states)
}

/// Normalized histogram of trajectory centres.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PhaseSpaceHistogram {
    pub q_edges: Vec<f64>,
    pub p_edges: Vec<f64>,
    /// Raw counts, q-major: index `iq * n_p + ip`.
    pub counts: Vec<u64>,
    /// Density normalized so that Σ density·ΔqΔp = 1 over the captured samples.
    pub density: Vec<f64>,
    pub n_samples: usize,
    /// Samples that fell outside the edges.
    pub outside: usize,
}

impl PhaseSpaceHistogram {
    pub fn from_samples(samples: &[(f64, f64)], q_edges: Vec<f64>, p_edges: Vec<f64>) -> Self {
        let nq = q_edges.len() - 1;
        let np = p_edges.len() - 1;
        let mut counts = vec![0u64; nq * np];
        let mut outside = 0;
        let locate = |edges: &[f64], v: f64| -> Option<usize> {
            if v < edges[0] || v >= edges[edges.len() - 1] {
                return None;
            }
            let k = edges.partition_point(|&e| e <= v);
            Some(k - 1)
        };
        for &(q, p) in samples {
            match (locate(&q_edges, q), locate(&p_edges, p)) {
                (Some(i), Some(k)) => counts[i * np + k] += 1,
                _ => outside += 1,
            }
        }
        let captured = (samples.len() - outside).max(1) as f64;
        let mut density = vec![0.0; nq * np];
        for i in 0..nq {
            for k in 0..np {
                let area = (q_edges[i + 1] - q_edges[i]) * (p_edges[k + 1] - p_edges[k]);
                density[i * np + k] = counts[i * np + k] as f64 / (captured * area);
            }
        }
        Self {
            q_edges,
            p_edges,
            counts,
            density,
            n_samples: samples.len(),
            outside,
        }
    }

    pub fn n_q(&self) -> usize {
        self.q_edges.len() - 1
    }
    pub fn n_p(&self) -> usize {
        self.p_edges.len() - 1
    }

    /// Probability mass per bin.
    pub fn masses(&self) -> Vec<f64> {
        let captured = (self.n_samples - self.outside).max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / captured).collect()
    }

    pub fn total_mass(&self) -> f64 {
        let np = self.n_p();
        let mut s = 0.0;
        for i in 0..self.n_q() {
            for k in 0..np {
                s += self.density[i * np + k]
                    * (self.q_edges[i + 1] - self.q_edges[i])
                    * (self.p_edges[k + 1] - self.p_edges[k]);
            }
        }
        s
    }

    /// Marginal variances (Var q, Var p) from the raw counts at bin centres.
    pub fn marginal_variances(&self) -> (f64, f64) {
        let m = self.masses();
        let np = self.n_p();
        let qc: Vec<f64> = self.q_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let pc: Vec<f64> = self.p_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let (mut mq, mut mp, mut q2, mut p2) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..self.n_q() {
            for k in 0..np {
                let w = m[i * np + k];
                mq += w * qc[i];
                mp += w * pc[k];
                q2 += w * qc[i] * qc[i];
                p2 += w * pc[k] * pc[k];
            }
        }
        (q2 - mq * mq, p2 - mp * mp)
    }

    /// L1 distance Σ|m_hist − m_field| between bin masses, with the field
    /// integrated over the same bins.
    pub fn l1_to_field(&self, field: &PhaseSpaceField) -> f64 {
        let fm = field.bin_masses(&self.q_edges, &self.p_edges);
        self.masses().iter().zip(&fm).map(|(a, b)| (a - b).abs()).sum()
    }
}

/// Uniform edges of `n` bins of width `w` centred at `c`.
pub fn centered_edges(c: f64, w: f64, n: usize) -> Vec<f64> {
    let start = c - 0.5 * w * n as f64;
    (0..=n).map(|k| start + w * k as f64).collect()
}

/// Histogram of trajectory centres at `at_time`. Bins have the default
/// width (σ_x, σ_p) and are centred on the ensemble mean.
pub fn estimate_f(spec: &EnsembleSpec, at_time: f64, bins: (usize, usize)) -> Result<PhaseSpaceHistogram> {
    let params = match spec.params {
        Some(p) => p,
        None => crate::gaussian::solve_beta(&spec.model, 0.0)?,
    };
    let ens = run_ensemble(spec)?;
    let k = ens.time_index(at_time)?;
    let samples = ens.centers(k);
    let n = samples.len() as f64;
    let mq = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let mp = samples.iter().map(|s| s.1).sum::<f64>() / n;
    Ok(PhaseSpaceHistogram::from_samples(
        &samples,
        centered_edges(mq, params.sigma_x(), bins.0),
        centered_edges(mp, params.sigma_p(), bins.1),
    ))
}

/// One probed pair in a coherent-diagonality report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairRatio {
    pub a: (f64, f64),
    pub b: (f64, f64),
    pub ratio: f64,
    pub well_separated: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiagonalityReport {
    pub pairs: Vec<PairRatio>,
    /// Pairs skipped because a diagonal element was below 1e-12.
    pub skipped: Vec<((f64, f64), (f64, f64))>,
    pub max_separated_ratio: Option<f64>,
}

/// r = |⟨ψ_a|ρ|ψ_b⟩| / √(⟨ψ_a|ρ|ψ_a⟩⟨ψ_b|ρ|ψ_b⟩) for coherent-state pairs.
pub fn coherent_diagonality(
    rho: &DensityMatrix,
    params: &StationaryParams,
    probe_pairs: &[((f64, f64), (f64, f64))],
) -> DiagonalityReport {
    let g = rho.grid();
    let hbar = g.hbar();
    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    for &(a, b) in probe_pairs {
        let pa = coherent_state(g, params, a.0, a.1, hbar);
        let pb = coherent_state(g, params, b.0, b.1, hbar);
        let daa = rho.matrix_element(&pa, &pa).re;
        let dbb = rho.matrix_element(&pb, &pb).re;
        if daa < 1e-12 || dbb < 1e-12 {
            skipped.push((a, b));
            continue;
        }
        let off = rho.matrix_element(&pa, &pb).norm();
        let well_separated =
            (a.0 - b.0).abs() >= 10.0 * params.sigma_x() || (a.1 - b.1).abs() >= 10.0 * params.sigma_p();
        pairs.push(PairRatio {
            a,
            b,
            ratio: off / (daa * dbb).sqrt(),
            well_separated,
        });
    }
    let max_separated_ratio = pairs
        .iter()
        .filter(|p| p.well_separated)
        .map(|p| p.ratio)
        .fold(None, |m: Option<f64>, r| Some(m.map_or(r, |v| v.max(r))));
    DiagonalityReport {
        pairs,
        skipped,
        max_separated_ratio,
    }
}

/// Husimi function Q(q, p) = ⟨ψ_qp|ρ|ψ_qp⟩/(2πħ) on a phase-space lattice,
/// renormalized to unit mass on that lattice.
pub fn husimi(rho: &DensityMatrix, params: &StationaryParams, lattice: &PhaseSpaceLattice) -> PhaseSpaceField {
    let mut f = husimi_raw(rho, params, lattice);
    let m = f.mass();
    if m > 0.0 {
        f.scale(1.0 / m);
    }
    f
}

/// Husimi function without renormalization.
pub fn husimi_raw(rho: &DensityMatrix, params: &StationaryParams, lattice: &PhaseSpaceLattice) -> PhaseSpaceField {
    let g = rho.grid();
    let hbar = g.hbar();
    let n = g.n_points();
    let qs = lattice.q_centers();
    let ps = lattice.p_centers();
    let norm = 1.0 / (2.0 * std::f64::consts::PI * hbar);
    let dx = g.dx();
    let x = g.x();
    let rows: Vec<Vec<f64>> = qs
        .par_iter()
        .map(|&q| {
            let cs = coherent_state(g, params, q, 0.0, hbar);
            let gq = cs.amplitudes();
            // M_ij = conj(g_i) ρ_ij g_j.
            let mut out = Vec::with_capacity(ps.len());
            let mut phase = vec![num_complex::Complex64::new(0.0, 0.0); n];
            let mut tmp = vec![num_complex::Complex64::new(0.0, 0.0); n];
            for &p in &ps {
                for j in 0..n {
                    phase[j] = gq[j] * num_complex::Complex64::from_polar(1.0, p * x[j] / hbar);
                }
                // tmp = ρ φ.
                for v in tmp.iter_mut() {
                    *v = num_complex::Complex64::new(0.0, 0.0);
                }
                for j in 0..n {
                    let col = rho.column(j);
                    let pj = phase[j];
                    for (t, c) in tmp.iter_mut().zip(col) {
                        *t += c * pj;
                    }
                }
                let val: num_complex::Complex64 = phase.iter().zip(&tmp).map(|(a, b)| a.conj() * b).sum();
                out.push(val.re * dx * dx * norm);
            }
            out
        })
        .collect();
    let mut field = PhaseSpaceField::zeros(lattice.clone());
    for (i, row) in rows.into_iter().enumerate() {
        for (k, v) in row.into_iter().enumerate() {
            field.set(i, k, v);
        }
    }
    field
}

/// Exponents of a Gaussian kernel
/// ρ(x, y) ∝ exp(−A(x−y)² − B(x²+y²) + iC(x²−y²)) centred at the origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermalExponents {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl ThermalExponents {
    /// Largest relative deviation of A and B from `other`.
    pub fn max_rel_dev(&self, other: &ThermalExponents) -> f64 {
        ((self.a - other.a) / other.a).abs().max(((self.b - other.b) / other.b).abs())
    }
}

/// Exponents of the thermal kernel ∫dq dp f_MB(q, p) |ψ_qp⟩⟨ψ_qp| for a
/// harmonic oscillator of frequency ω:
/// A = |β|²/Δ + mkT/(2ħ²), B = κ Re β/Δ, C = −κ Im β/Δ, with
/// κ = mω²/(2kT) and Δ = κ + β + β*.
pub fn thermal_exponents_closed_form(params: &StationaryParams, m: f64, hbar: f64, kt: f64, omega: f64) -> ThermalExponents {
    let beta = params.beta;
    let kappa = m * omega * omega / (2.0 * kt);
    let delta = kappa + 2.0 * beta.re;
    ThermalExponents {
        a: beta.norm_sqr() / delta + m * kt / (2.0 * hbar * hbar),
        b: kappa * beta.re / delta,
        c: -kappa * beta.im / delta,
    }
}

/// Centred second moments (⟨x²⟩, ⟨p²⟩, ½⟨{x,p}⟩) of a density matrix.
pub fn second_moments(rho: &DensityMatrix) -> (f64, f64, f64) {
    use crate::hilbert::Operator;
    let tr = rho.trace().re;
    let mx = rho.expectation(Operator::X).re / tr;
    let mp = rho.expectation(Operator::P).re / tr;
    let x2 = rho.expectation(Operator::X2).re / tr - mx * mx;
    let p2 = rho.expectation(Operator::P2).re / tr - mp * mp;
    let s = 0.5 * rho.expectation(Operator::SymXP).re / tr - mx * mp;
    (x2, p2, s)
}

/// Gaussian exponents matching the given centred second moments.
pub fn exponents_from_moments(x2: f64, p2: f64, s: f64, hbar: f64) -> ThermalExponents {
    let b = 1.0 / (4.0 * x2);
    ThermalExponents {
        a: (p2 - s * s / x2) / (2.0 * hbar * hbar) - 1.0 / (8.0 * x2),
        b,
        c: s / (2.0 * hbar * x2),
    }
}

/// Moment fit of a density matrix to the Gaussian kernel form.
pub fn fit_thermal_exponents(rho: &DensityMatrix) -> ThermalExponents {
    let (x2, p2, s) = second_moments(rho);
    exponents_from_moments(x2, p2, s, rho.grid().hbar())
}

/// Kernel values of the Gaussian form on a grid, normalized to unit trace.
pub fn gaussian_kernel(grid: &crate::hilbert::Grid, e: &ThermalExponents) -> DensityMatrix {
    let n = grid.n_points();
    let x = grid.x();
    let mut data = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let (xi, yj) = (x[i], x[j]);
            let d = xi - yj;
            data.push(num_complex::Complex64::new(
                -e.a * d * d - e.b * (xi * xi + yj * yj),
                e.c * (xi * xi - yj * yj),
            )
            .exp());
        }
    }
    let mut rho = DensityMatrix::from_data(grid, data).expect("size matches");
    let tr = rho.trace().re;
    rho.scale(num_complex::Complex64::new(1.0 / tr, 0.0));
    rho
}
