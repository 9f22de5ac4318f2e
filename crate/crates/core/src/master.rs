//! Lindblad master equation on the position grid, integrated with RK4.
//!
//! Density matrices are stored column-major as kernel values ρ(x_i, x_j),
//! with Tr ρ = Σ_i ρ_ii dx. Superoperators are applied matrix-free: an
//! operator O acts on the first index column by column, and right
//! multiplication uses ρO = (O†ρ†)†.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QsdError, Result};
use crate::hilbert::{Grid, Operator, WaveFunction};
use crate::model::{Discretized, LindbladModel};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Operator kernel on the grid. Holds density matrices and also the
/// non-Hermitian operators P ρ P' propagated by the histories layer.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    grid: Grid,
    /// Column-major: element (i, j) at `i + j * n`.
    data: Vec<Complex64>,
}

impl DensityMatrix {
    pub fn zeros(grid: &Grid) -> Self {
        let n = grid.n_points();
        Self {
            grid: grid.clone(),
            data: vec![ZERO; n * n],
        }
    }

    pub fn from_data(grid: &Grid, data: Vec<Complex64>) -> Result<Self> {
        let n = grid.n_points();
        if data.len() != n * n {
            return Err(QsdError::InvalidArgument(format!(
                "expected {} elements, got {}",
                n * n,
                data.len()
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            data,
        })
    }

    /// |ψ⟩⟨ψ|.
    pub fn pure(psi: &WaveFunction) -> Self {
        Self::outer(psi, psi)
    }

    /// |ψ⟩⟨φ|.
    pub fn outer(psi: &WaveFunction, phi: &WaveFunction) -> Self {
        let n = psi.grid().n_points();
        let a = psi.amplitudes();
        let b = phi.amplitudes();
        let mut data = Vec::with_capacity(n * n);
        for j in 0..n {
            let bj = b[j].conj();
            data.extend(a.iter().map(|ai| ai * bj));
        }
        Self {
            grid: psi.grid().clone(),
            data,
        }
    }

    /// Σ w_k |ψ_k⟩⟨ψ_k|.
    pub fn mixture(states: &[(f64, WaveFunction)]) -> Result<Self> {
        let first = states
            .first()
            .ok_or_else(|| QsdError::InvalidArgument("empty mixture".into()))?;
        let mut rho = Self::zeros(first.1.grid());
        for (w, psi) in states {
            rho.add_outer(psi, *w)?;
        }
        Ok(rho)
    }

    /// ρ += w |ψ⟩⟨ψ|.
    pub fn add_outer(&mut self, psi: &WaveFunction, w: f64) -> Result<()> {
        self.grid.check_same(psi.grid())?;
        let n = self.n();
        let a = psi.amplitudes();
        for j in 0..n {
            let bj = a[j].conj() * w;
            let col = &mut self.data[j * n..(j + 1) * n];
            for (c, ai) in col.iter_mut().zip(a) {
                *c += ai * bj;
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn n(&self) -> usize {
        self.grid.n_points()
    }
    pub fn data(&self) -> &[Complex64] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i + j * self.n()]
    }
    pub fn column(&self, j: usize) -> &[Complex64] {
        let n = self.n();
        &self.data[j * n..(j + 1) * n]
    }

    /// Σ ρ_ii dx.
    pub fn trace(&self) -> Complex64 {
        let n = self.n();
        (0..n).map(|i| self.data[i + i * n]).sum::<Complex64>() * self.grid.dx()
    }

    /// Tr(ρ²), equal to Σ|ρ_ij|² dx² for Hermitian ρ.
    pub fn purity(&self) -> f64 {
        purity(self)
    }

    pub fn dagger(&self) -> Self {
        let n = self.n();
        let mut data = vec![ZERO; n * n];
        for j in 0..n {
            for i in 0..n {
                data[j + i * n] = self.data[i + j * n].conj();
            }
        }
        Self {
            grid: self.grid.clone(),
            data,
        }
    }

    /// max |ρ − ρ†|.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.n();
        let mut m: f64 = 0.0;
        for j in 0..n {
            for i in 0..=j {
                let d = (self.data[i + j * n] - self.data[j + i * n].conj()).norm();
                m = m.max(d);
            }
        }
        m
    }

    pub fn scale(&mut self, s: Complex64) {
        for v in self.data.iter_mut() {
            *v *= s;
        }
    }

    /// self + s·other.
    pub fn axpy(&self, s: Complex64, other: &DensityMatrix) -> Self {
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a + s * b)
            .collect();
        Self {
            grid: self.grid.clone(),
            data,
        }
    }

    /// Max-abs element, used as a size measure.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Frobenius norm of the operator (kernel scaled by dx).
    pub fn frobenius(&self) -> f64 {
        let dx = self.grid.dx();
        (self.data.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt() * dx
    }

    /// Operator matrix ρ·dx as an nalgebra matrix.
    pub fn to_matrix(&self) -> DMatrix<Complex64> {
        let n = self.n();
        let dx = self.grid.dx();
        DMatrix::from_fn(n, n, |i, j| self.data[i + j * n] * dx)
    }

    /// Eigenvalues of the Hermitian part (as an operator), ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let m = self.to_matrix();
        let h = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
        let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().cloned().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// Tr(Oρ).
    pub fn expectation(&self, op: Operator<'_>) -> Complex64 {
        let n = self.n();
        let out = apply_left(&self.grid, &self.data, |col| op.apply_raw(&self.grid, col));
        (0..n).map(|i| out[i + i * n]).sum::<Complex64>() * self.grid.dx()
    }

    /// ⟨φ|ρ|ψ⟩ for two grid states.
    pub fn matrix_element(&self, phi: &WaveFunction, psi: &WaveFunction) -> Complex64 {
        let n = self.n();
        let dx = self.grid.dx();
        let a = phi.amplitudes();
        let b = psi.amplitudes();
        let mut s = ZERO;
        for j in 0..n {
            let col = &self.data[j * n..(j + 1) * n];
            let inner: Complex64 = a.iter().zip(col).map(|(x, y)| x.conj() * y).sum();
            s += inner * b[j];
        }
        s * dx * dx
    }

    /// Operator product AB with the dx-weighted kernel convention.
    pub fn matmul(&self, other: &DensityMatrix) -> Self {
        let n = self.n();
        let dx = self.grid.dx();
        let mut data = vec![ZERO; n * n];
        for j in 0..n {
            let bcol = &other.data[j * n..(j + 1) * n];
            let out = &mut data[j * n..(j + 1) * n];
            for (k, &bkj) in bcol.iter().enumerate() {
                if bkj == ZERO {
                    continue;
                }
                let acol = &self.data[k * n..(k + 1) * n];
                let s = bkj * dx;
                for (o, a) in out.iter_mut().zip(acol) {
                    *o += a * s;
                }
            }
        }
        Self {
            grid: self.grid.clone(),
            data,
        }
    }
}

/// Tr(ρ²)·dx² summed elementwise.
pub fn purity(rho: &DensityMatrix) -> f64 {
    let n = rho.n();
    let dx = rho.grid.dx();
    // Tr(ρρ) = Σ_ij ρ_ij ρ_ji.
    let mut s = ZERO;
    for j in 0..n {
        for i in 0..n {
            s += rho.data[i + j * n] * rho.data[j + i * n];
        }
    }
    s.re * dx * dx
}

/// ½‖ρ − σ‖₁ via the eigenvalues of the Hermitian difference.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    a.grid.check_same(&b.grid)?;
    let diff = a.axpy(Complex64::new(-1.0, 0.0), b);
    Ok(0.5 * diff.eigenvalues().iter().map(|v| v.abs()).sum::<f64>())
}

/// Applies a column operator to every column of a column-major kernel.
pub(crate) fn apply_left(
    grid: &Grid,
    data: &[Complex64],
    f: impl Fn(&[Complex64]) -> Vec<Complex64>,
) -> Vec<Complex64> {
    let n = grid.n_points();
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        out.extend(f(&data[j * n..(j + 1) * n]));
    }
    out
}

fn dagger_raw(n: usize, data: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![ZERO; n * n];
    for j in 0..n {
        for i in 0..n {
            out[j + i * n] = data[i + j * n].conj();
        }
    }
    out
}

/// dρ/dt in Lindblad form,
/// −(i/ħ)(H_eff ρ − ρ H_eff†) + LρL†, with H_eff = H − (iħ/2)L†L.
pub fn lindblad_rhs(model: &LindbladModel, rho: &DensityMatrix) -> Result<DensityMatrix> {
    if model.hbar != rho.grid.hbar() {
        return Err(QsdError::GridMismatch);
    }
    let disc = model.on_grid(&rho.grid);
    Ok(lindblad_rhs_disc(&disc, rho))
}

pub(crate) fn lindblad_rhs_disc(disc: &Discretized, rho: &DensityMatrix) -> DensityMatrix {
    let n = rho.n();
    let hbar = disc.model.hbar;
    let mi = -I / hbar;
    let k = apply_left(&rho.grid, &rho.data, |c| disc.apply_heff(c));
    let rd = dagger_raw(n, &rho.data);
    let m = apply_left(&rho.grid, &rd, |c| disc.apply_heff(c));
    // LρL† = (L (Lρ)†)†.
    let jl = apply_left(&rho.grid, &rho.data, |c| disc.apply_l(c));
    let jd = dagger_raw(n, &jl);
    let w = apply_left(&rho.grid, &jd, |c| disc.apply_l(c));
    let mut out = vec![ZERO; n * n];
    for j in 0..n {
        for i in 0..n {
            let ij = i + j * n;
            let ji = j + i * n;
            out[ij] = mi * (k[ij] - m[ji].conj()) + w[ji].conj();
        }
    }
    DensityMatrix {
        grid: rho.grid.clone(),
        data: out,
    }
}

/// dρ/dt written as commutators in x̂ and p̂:
/// −(i/ħ)[H₀ + (c − ½ħab){x̂,p̂}, ρ] − iab[x̂,{ρ,p̂}] − ½a²[x̂,[x̂,ρ]] − ½b²[p̂,[p̂,ρ]].
///
/// With `include_pp = false` the last term is dropped, which gives the
/// Caldeira–Leggett form for QBM parameters. Only valid for θ = 0 up to
/// the phase, which drops out of every term.
pub fn xp_form_rhs(model: &LindbladModel, rho: &DensityMatrix, include_pp: bool) -> Result<DensityMatrix> {
    if model.hbar != rho.grid.hbar() {
        return Err(QsdError::GridMismatch);
    }
    let g = &rho.grid;
    let n = rho.n();
    let x = g.x();
    let hbar = model.hbar;
    let (a, b) = (model.a, model.b);
    let cp = model.c - 0.5 * hbar * a * b;
    let disc = model.on_grid(g);
    let v = &disc.v;

    // H₀ + c'{x,p} applied to a column.
    let hcol = |col: &[Complex64]| -> Vec<Complex64> {
        let pk = g.apply_p_raw(col);
        let mut p2 = col.to_vec();
        g.apply_k_diagonal(&mut p2, |p| Complex64::new(p * p, 0.0));
        let xc: Vec<Complex64> = col.iter().zip(x).map(|(c, &xv)| c * xv).collect();
        let pxc = g.apply_p_raw(&xc);
        (0..n)
            .map(|i| p2[i] / (2.0 * model.m) + v[i] * col[i] + cp * (x[i] * pk[i] + pxc[i]))
            .collect()
    };
    let pcol = |col: &[Complex64]| g.apply_p_raw(col);

    let rd = dagger_raw(n, &rho.data);
    // Left products.
    let h_r = apply_left(g, &rho.data, hcol);
    let h_rd = apply_left(g, &rd, hcol);
    let p_r = apply_left(g, &rho.data, pcol);
    let p_rd = apply_left(g, &rd, pcol);
    // ρp = (pρ†)†, ρH = (Hρ†)†.
    let rp = dagger_raw(n, &p_rd);
    let rh = dagger_raw(n, &h_rd);
    // Q = {ρ, p} = ρp + pρ.
    let q: Vec<Complex64> = rp.iter().zip(p_r.iter()).map(|(u, w)| u + w).collect();

    let mut out = vec![ZERO; n * n];
    for j in 0..n {
        for i in 0..n {
            let ij = i + j * n;
            let dxij = x[i] - x[j];
            out[ij] = -I / hbar * (h_r[ij] - rh[ij]) - I * (a * b) * dxij * q[ij]
                - 0.5 * a * a * dxij * dxij * rho.data[ij];
        }
    }
    if include_pp && b != 0.0 {
        // [p,[p,ρ]] = p²ρ − 2pρp + ρp².
        let p2r = apply_left(g, &p_r, pcol);
        let prp = apply_left(g, &rp, pcol);
        let p2rd = apply_left(g, &p_rd, pcol);
        let rp2 = dagger_raw(n, &p2rd);
        for ij in 0..n * n {
            out[ij] -= 0.5 * b * b * (p2r[ij] - 2.0 * prp[ij] + rp2[ij]);
        }
    }
    Ok(DensityMatrix {
        grid: g.clone(),
        data: out,
    })
}

/// Explicit step bound: min(0.2ħ/E_max, 1/Γ_max), where E_max is the
/// largest kinetic plus potential energy on the grid and Γ_max the largest
/// decay rate ½a²L² + 2b²p_max² of the dissipator.
pub fn stable_dt(model: &LindbladModel, grid: &Grid) -> f64 {
    let disc = model.on_grid(grid);
    stable_dt_disc(&disc)
}

fn stable_dt_disc(disc: &Discretized) -> f64 {
    let md = &disc.model;
    let l = disc.grid.length();
    let pmax = disc.grid.p_max();
    let xabs = disc.grid.x_min().abs().max(disc.grid.x_max().abs());
    let e_max = disc.kinetic_scale()
        + disc.potential_range()
        + 2.0 * (md.c - 0.5 * md.hbar * md.a * md.b).abs() * xabs * pmax;
    let gamma_max = 0.5 * md.a * md.a * l * l
        + 2.0 * md.b * md.b * pmax * pmax
        + md.hbar * (md.a * md.b).abs() * xabs * pmax;
    let mut dt = 0.2 * md.hbar / e_max;
    if gamma_max > 0.0 {
        dt = dt.min(1.0 / gamma_max);
    }
    dt
}

/// Diagnostics collected during an evolution.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct EvolveDiagnostics {
    pub steps: usize,
    pub dt: f64,
    pub max_trace_drift: f64,
    pub max_hermiticity_drift: f64,
    /// Smallest eigenvalue seen at the monitored steps.
    pub min_eigenvalue: Option<f64>,
}

/// Options for [`evolve_with`].
#[derive(Clone, Debug)]
pub struct EvolveOptions {
    /// Enforce the trace and hermiticity invariants.
    pub checked: bool,
    /// Tolerance for the drift checks.
    pub tolerance: f64,
    /// Compute the minimum eigenvalue every `k` steps (and at the end).
    pub monitor_positivity_every: Option<usize>,
    /// Use the commutator form instead of the Lindblad form.
    pub xp_form: Option<bool>,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            checked: true,
            tolerance: 1e-6,
            monitor_positivity_every: None,
            xp_form: None,
        }
    }
}

fn num_steps(t: f64, dt: f64) -> usize {
    if t <= 0.0 {
        0
    } else {
        (t / dt - 1e-9).ceil().max(1.0) as usize
    }
}

fn rk4_step(
    rhs: &dyn Fn(&DensityMatrix) -> DensityMatrix,
    rho: &DensityMatrix,
    h: f64,
) -> DensityMatrix {
    let c = |v: f64| Complex64::new(v, 0.0);
    let k1 = rhs(rho);
    let k2 = rhs(&rho.axpy(c(0.5 * h), &k1));
    let k3 = rhs(&rho.axpy(c(0.5 * h), &k2));
    let k4 = rhs(&rho.axpy(c(h), &k3));
    let mut data = rho.data.clone();
    for (idx, d) in data.iter_mut().enumerate() {
        *d += (h / 6.0) * (k1.data[idx] + 2.0 * k2.data[idx] + 2.0 * k3.data[idx] + k4.data[idx]);
    }
    DensityMatrix {
        grid: rho.grid.clone(),
        data,
    }
}

/// ρ(t) by RK4 with the step rounded down so that it divides t.
pub fn evolve(model: &LindbladModel, rho0: &DensityMatrix, t: f64, dt: f64) -> Result<DensityMatrix> {
    evolve_with(model, rho0, t, dt, &EvolveOptions::default(), |_, _| {}).map(|(r, _)| r)
}

/// Linear propagation of an arbitrary operator kernel, without the
/// density-matrix invariant checks.
pub fn propagate(model: &LindbladModel, op: &DensityMatrix, t: f64, dt: f64) -> Result<DensityMatrix> {
    let opts = EvolveOptions {
        checked: false,
        ..Default::default()
    };
    evolve_with(model, op, t, dt, &opts, |_, _| {}).map(|(r, _)| r)
}

/// General driver. `observer(t, ρ)` is called after every accepted step and
/// once at t = 0.
pub fn evolve_with(
    model: &LindbladModel,
    rho0: &DensityMatrix,
    t: f64,
    dt: f64,
    opts: &EvolveOptions,
    mut observer: impl FnMut(f64, &DensityMatrix),
) -> Result<(DensityMatrix, EvolveDiagnostics)> {
    if model.hbar != rho0.grid.hbar() {
        return Err(QsdError::GridMismatch);
    }
    if !(t >= 0.0) {
        return Err(QsdError::InvalidArgument(format!("negative duration {t}")));
    }
    let disc = model.on_grid(&rho0.grid);
    let bound = stable_dt_disc(&disc);
    let steps = num_steps(t, dt);
    let h = if steps > 0 { t / steps as f64 } else { 0.0 };
    if steps > 0 && h > bound * (1.0 + 1e-9) {
        return Err(QsdError::StepTooLarge { dt: h, bound });
    }
    let rhs: Box<dyn Fn(&DensityMatrix) -> DensityMatrix> = match opts.xp_form {
        None => Box::new(|r: &DensityMatrix| lindblad_rhs_disc(&disc, r)),
        Some(pp) => Box::new(move |r: &DensityMatrix| xp_form_rhs(model, r, pp).expect("grid checked")),
    };
    let tr0 = rho0.trace();
    let herm0 = if opts.checked { rho0.hermiticity_defect() } else { 0.0 };
    let mut diag = EvolveDiagnostics {
        steps,
        dt: h,
        ..Default::default()
    };
    let mut rho = rho0.clone();
    observer(0.0, &rho);
    let monitor = |rho: &DensityMatrix, diag: &mut EvolveDiagnostics| {
        let ev = rho.min_eigenvalue();
        diag.min_eigenvalue = Some(diag.min_eigenvalue.map_or(ev, |m: f64| m.min(ev)));
    };
    if opts.monitor_positivity_every.is_some() {
        monitor(&rho, &mut diag);
    }
    for s in 1..=steps {
        rho = rk4_step(&*rhs, &rho, h);
        let now = s as f64 * h;
        if rho.data.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(QsdError::NonFinite { t: now });
        }
        if opts.checked {
            let td = (rho.trace() - tr0).norm();
            let hd = (rho.hermiticity_defect() - herm0).max(0.0) / rho.max_abs().max(1e-300);
            diag.max_trace_drift = diag.max_trace_drift.max(td);
            diag.max_hermiticity_drift = diag.max_hermiticity_drift.max(hd);
            if td > opts.tolerance || hd > opts.tolerance {
                return Err(QsdError::StabilityViolation {
                    t: now,
                    trace_drift: td,
                    herm_drift: hd,
                });
            }
        }
        if let Some(k) = opts.monitor_positivity_every {
            if s % k.max(1) == 0 || s == steps {
                monitor(&rho, &mut diag);
            }
        }
        observer(now, &rho);
    }
    Ok((rho, diag))
}

/// Default master-equation step for a model on a grid.
pub fn default_dt(model: &LindbladModel, grid: &Grid) -> f64 {
    stable_dt(model, grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Potential;

    fn grid() -> Grid {
        Grid::symmetric(32, 8.0, 1.0).unwrap()
    }

    #[test]
    fn pure_state_purity_and_trace() {
        let g = grid();
        let psi = WaveFunction::gaussian(&g, 0.5, 0.2, 0.7);
        let rho = DensityMatrix::pure(&psi);
        assert!((rho.trace().re - 1.0).abs() < 1e-12);
        assert!((rho.purity() - 1.0).abs() < 1e-10);
        assert!(rho.hermiticity_defect() < 1e-15);
    }

    #[test]
    fn orthogonal_mixture_purity() {
        let g = grid();
        let a = WaveFunction::gaussian(&g, -3.0, 0.0, 0.2);
        let b = WaveFunction::gaussian(&g, 3.0, 0.0, 0.2);
        let rho = DensityMatrix::mixture(&[(0.5, a), (0.5, b)]).unwrap();
        assert!((rho.purity() - 0.5).abs() < 1e-8);
    }

    #[test]
    fn closed_system_is_commutator() {
        let g = grid();
        let model = LindbladModel::standard(0.0, 0.0, 1.0, 1.0, Potential::harmonic(1.0, 1.0)).unwrap();
        let psi = WaveFunction::gaussian(&g, 1.0, 0.3, 0.6);
        let rho = DensityMatrix::pure(&psi);
        let r = lindblad_rhs(&model, &rho).unwrap();
        // Compare against −(i/ħ)(|Hψ⟩⟨ψ| − |ψ⟩⟨Hψ|).
        let disc = model.on_grid(&g);
        let hpsi = WaveFunction::new(g.clone(), disc.actions(psi.amplitudes()).h).unwrap();
        let expected = DensityMatrix::outer(&hpsi, &psi)
            .axpy(Complex64::new(-1.0, 0.0), &DensityMatrix::outer(&psi, &hpsi));
        for (u, w) in r.data().iter().zip(expected.data()) {
            assert!((u - (-I) * w).norm() < 1e-10);
        }
    }

    #[test]
    fn step_bound_enforced() {
        let g = grid();
        let model = LindbladModel::standard(1.0, 0.0, 1.0, 1.0, Potential::Free).unwrap();
        let rho = DensityMatrix::pure(&WaveFunction::gaussian(&g, 0.0, 0.0, 0.7));
        let err = evolve(&model, &rho, 1.0, 0.5).unwrap_err();
        assert!(matches!(err, QsdError::StepTooLarge { .. }));
        let same = evolve(&model, &rho, 0.0, 0.01).unwrap();
        assert_eq!(same.data(), rho.data());
    }
}
