//! Phase-space Fokker-Planck equation for the distribution of localized
//! wave-packet centres:
//!
//! ∂f/∂t = −∂_q(v_q f) − ∂_p(v_p f) + d_qq ∂²_q f + d_pq ∂_q∂_p f + d_pp ∂²_p f
//!
//! with v_q = p/m + k_q q and v_p = −V'(q) − k_p p. The solver is a finite
//! volume scheme on a cell-centred lattice with zero-flux walls, so mass is
//! conserved to rounding.

use serde::{Deserialize, Serialize};

use crate::error::{QsdError, Result};
use crate::gaussian::StationaryParams;
use crate::model::LindbladModel;

/// Uniform cell-centred lattice over [q_min, q_max] × [p_min, p_max].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpaceLattice {
    pub q_min: f64,
    pub q_max: f64,
    pub n_q: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub n_p: usize,
}

impl PhaseSpaceLattice {
    pub fn new(q_range: (f64, f64), n_q: usize, p_range: (f64, f64), n_p: usize) -> Result<Self> {
        if n_q < 2 || n_p < 2 {
            return Err(QsdError::InvalidArgument(format!("lattice needs at least 2×2 cells, got {n_q}×{n_p}")));
        }
        if !(q_range.0 < q_range.1) || !(p_range.0 < p_range.1) {
            return Err(QsdError::InvalidArgument("lattice ranges must be increasing".into()));
        }
        Ok(Self {
            q_min: q_range.0,
            q_max: q_range.1,
            n_q,
            p_min: p_range.0,
            p_max: p_range.1,
            n_p,
        })
    }

    /// Square-symmetric lattice [−q_half, q_half] × [−p_half, p_half].
    pub fn symmetric(q_half: f64, n_q: usize, p_half: f64, n_p: usize) -> Result<Self> {
        Self::new((-q_half, q_half), n_q, (-p_half, p_half), n_p)
    }

    pub fn dq(&self) -> f64 {
        (self.q_max - self.q_min) / self.n_q as f64
    }
    pub fn dp(&self) -> f64 {
        (self.p_max - self.p_min) / self.n_p as f64
    }
    pub fn cell_area(&self) -> f64 {
        self.dq() * self.dp()
    }
    pub fn len(&self) -> usize {
        self.n_q * self.n_p
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn q_center(&self, i: usize) -> f64 {
        self.q_min + (i as f64 + 0.5) * self.dq()
    }
    pub fn p_center(&self, k: usize) -> f64 {
        self.p_min + (k as f64 + 0.5) * self.dp()
    }
    pub fn q_centers(&self) -> Vec<f64> {
        (0..self.n_q).map(|i| self.q_center(i)).collect()
    }
    pub fn p_centers(&self) -> Vec<f64> {
        (0..self.n_p).map(|k| self.p_center(k)).collect()
    }

    /// Cell containing (q, p), if any.
    pub fn locate(&self, q: f64, p: f64) -> Option<(usize, usize)> {
        let i = ((q - self.q_min) / self.dq()).floor();
        let k = ((p - self.p_min) / self.dp()).floor();
        if i < 0.0 || k < 0.0 || i >= self.n_q as f64 || k >= self.n_p as f64 {
            return None;
        }
        Some((i as usize, k as usize))
    }
}

/// Real field on a phase-space lattice, stored q-major (`i * n_p + k`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpaceField {
    pub lattice: PhaseSpaceLattice,
    pub values: Vec<f64>,
}

/// Mean and covariance of a phase-space distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldMoments {
    pub mean_q: f64,
    pub mean_p: f64,
    pub var_q: f64,
    pub var_p: f64,
    pub cov_qp: f64,
}

impl PhaseSpaceField {
    pub fn zeros(lattice: PhaseSpaceLattice) -> Self {
        let n = lattice.len();
        Self {
            lattice,
            values: vec![0.0; n],
        }
    }

    pub fn from_fn(lattice: PhaseSpaceLattice, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(lattice.len());
        for i in 0..lattice.n_q {
            let q = lattice.q_center(i);
            for k in 0..lattice.n_p {
                values.push(f(q, lattice.p_center(k)));
            }
        }
        Self { lattice, values }
    }

    /// Unit-mass field concentrated in the cell containing (q, p).
    pub fn impulse(lattice: PhaseSpaceLattice, q: f64, p: f64) -> Result<Self> {
        let (i, k) = lattice.locate(q, p).ok_or(QsdError::OffLattice(q))?;
        let mut f = Self::zeros(lattice);
        let v = 1.0 / f.lattice.cell_area();
        f.set(i, k, v);
        Ok(f)
    }

    /// Normalized Gaussian with the given mean and diagonal variances.
    pub fn gaussian(lattice: PhaseSpaceLattice, q0: f64, p0: f64, var_q: f64, var_p: f64) -> Self {
        let mut f = Self::from_fn(lattice, |q, p| {
            (-(q - q0).powi(2) / (2.0 * var_q) - (p - p0).powi(2) / (2.0 * var_p)).exp()
        });
        f.normalize();
        f
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.lattice.n_p + k]
    }
    pub fn set(&mut self, i: usize, k: usize, v: f64) {
        let np = self.lattice.n_p;
        self.values[i * np + k] = v;
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.lattice.cell_area()
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.values {
            *v *= s;
        }
    }

    pub fn normalize(&mut self) {
        let m = self.mass();
        if m > 0.0 {
            self.scale(1.0 / m);
        }
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Pointwise sum `self + w·other` on the same lattice.
    pub fn add_scaled(&mut self, other: &PhaseSpaceField, w: f64) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += w * b;
        }
    }

    pub fn moments(&self) -> FieldMoments {
        let l = &self.lattice;
        let (mut m0, mut mq, mut mp) = (0.0, 0.0, 0.0);
        let (mut qq, mut pp, mut qp) = (0.0, 0.0, 0.0);
        for i in 0..l.n_q {
            let q = l.q_center(i);
            for k in 0..l.n_p {
                let p = l.p_center(k);
                let w = self.get(i, k);
                m0 += w;
                mq += w * q;
                mp += w * p;
                qq += w * q * q;
                pp += w * p * p;
                qp += w * q * p;
            }
        }
        let (mq, mp) = (mq / m0, mp / m0);
        FieldMoments {
            mean_q: mq,
            mean_p: mp,
            var_q: qq / m0 - mq * mq,
            var_p: pp / m0 - mp * mp,
            cov_qp: qp / m0 - mq * mp,
        }
    }

    /// Mass inside each bin of a rectangular binning, treating the field as
    /// piecewise constant over its cells. Bins are q-major.
    pub fn bin_masses(&self, q_edges: &[f64], p_edges: &[f64]) -> Vec<f64> {
        let l = &self.lattice;
        let wq = overlap_weights(l.q_min, l.dq(), l.n_q, q_edges);
        let wp = overlap_weights(l.p_min, l.dp(), l.n_p, p_edges);
        let nbq = q_edges.len() - 1;
        let nbp = p_edges.len() - 1;
        let mut out = vec![0.0; nbq * nbp];
        let area = l.cell_area();
        for (bq, wqrow) in wq.iter().enumerate() {
            for &(i, fq) in wqrow {
                for (bp, wprow) in wp.iter().enumerate() {
                    let mut s = 0.0;
                    for &(k, fp) in wprow {
                        s += self.get(i, k) * fp;
                    }
                    out[bq * nbp + bp] += s * fq * area;
                }
            }
        }
        out
    }

    /// Mass inside a rectangle.
    pub fn rect_mass(&self, q_range: (f64, f64), p_range: (f64, f64)) -> f64 {
        self.bin_masses(&[q_range.0, q_range.1], &[p_range.0, p_range.1])[0]
    }

    /// Copy of the field with everything outside the rectangle set to zero,
    /// weighting boundary cells by their overlap fraction.
    pub fn restricted(&self, q_range: (f64, f64), p_range: (f64, f64)) -> Self {
        let l = &self.lattice;
        let wq = overlap_weights(l.q_min, l.dq(), l.n_q, &[q_range.0, q_range.1]);
        let wp = overlap_weights(l.p_min, l.dp(), l.n_p, &[p_range.0, p_range.1]);
        let mut out = Self::zeros(l.clone());
        for &(i, fq) in &wq[0] {
            for &(k, fp) in &wp[0] {
                out.set(i, k, self.get(i, k) * fq * fp);
            }
        }
        out
    }
}

/// For each bin, the cells overlapping it with their fractional overlap.
fn overlap_weights(x0: f64, dx: f64, n: usize, edges: &[f64]) -> Vec<Vec<(usize, f64)>> {
    edges
        .windows(2)
        .map(|w| {
            let (lo, hi) = (w[0], w[1]);
            let first = (((lo - x0) / dx).floor().max(0.0) as usize).min(n);
            let last = (((hi - x0) / dx).ceil().max(0.0) as usize).min(n);
            (first..last)
                .filter_map(|i| {
                    let a = x0 + i as f64 * dx;
                    let b = a + dx;
                    let ov = (hi.min(b) - lo.max(a)).max(0.0) / dx;
                    (ov > 0.0).then_some((i, ov))
                })
                .collect()
        })
        .collect()
}

/// L1 distance ∫|f − g| dq dp on a common lattice.
pub fn l1_distance(f: &PhaseSpaceField, g: &PhaseSpaceField) -> Result<f64> {
    if f.lattice != g.lattice {
        return Err(QsdError::GridMismatch);
    }
    Ok(f.values.iter().zip(&g.values).map(|(a, b)| (a - b).abs()).sum::<f64>() * f.lattice.cell_area())
}

/// Normalized N exp(−p²/(2mkT) − V(q)/kT) on the lattice.
pub fn maxwell_boltzmann(lattice: &PhaseSpaceLattice, model: &LindbladModel, kt: f64) -> PhaseSpaceField {
    let v_min = lattice
        .q_centers()
        .iter()
        .map(|&q| model.potential.value(q))
        .fold(f64::INFINITY, f64::min);
    let mut f = PhaseSpaceField::from_fn(lattice.clone(), |q, p| {
        (-p * p / (2.0 * model.m * kt) - (model.potential.value(q) - v_min) / kt).exp()
    });
    f.normalize();
    f
}

/// Diffusion and drift coefficients of the phase-space equation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FpCoefficients {
    /// |σ(p, L)|².
    pub d_pp: f64,
    /// |σ(x, L)|².
    pub d_qq: f64,
    /// 2 Re(σ(x, L) σ(p, L)*).
    pub d_pq: f64,
    /// Linear q-drift rate, 2c − ħab (zero for the standard coupling).
    pub k_q: f64,
    /// Friction rate in the p-drift, 2c + ħab.
    pub k_p: f64,
    /// d_pp/(2mγkT) for models built from QBM parameters.
    pub high_t_ratio: Option<f64>,
}

impl FpCoefficients {
    /// Determinant of the diffusion matrix [[d_qq, d_pq/2], [d_pq/2, d_pp]].
    pub fn diffusion_determinant(&self) -> f64 {
        self.d_qq * self.d_pp - 0.25 * self.d_pq * self.d_pq
    }

    /// Pure-drift copy with every diffusion coefficient zeroed.
    pub fn drift_only(&self) -> Self {
        Self {
            d_pp: 0.0,
            d_qq: 0.0,
            d_pq: 0.0,
            ..*self
        }
    }
}

/// Coefficients for a model whose packets have the stationary shape `params`.
pub fn coefficients(model: &LindbladModel, params: &StationaryParams) -> Result<FpCoefficients> {
    let (a, b, hbar) = (model.a, model.b, model.hbar);
    let (sx2, sp2, r) = (params.sigma_x2, params.sigma_p2, params.r0);
    let d_qq = (a * sx2 - 0.5 * hbar * b).powi(2) + (b * r).powi(2);
    let d_pp = (a * r).powi(2) + (b * sp2 - 0.5 * hbar * a).powi(2);
    let d_pq = 2.0 * (a * a * r * sx2 - hbar * a * b * r + b * b * r * sp2);
    let coeffs = FpCoefficients {
        d_pp,
        d_qq,
        d_pq,
        k_q: 2.0 * model.c - hbar * a * b,
        k_p: 2.0 * model.c + hbar * a * b,
        high_t_ratio: model.qbm.map(|q| d_pp / (2.0 * q.m * q.gamma * q.kt)),
    };
    let scale = d_qq.abs().max(d_pp.abs()).max(1e-300);
    if !(d_qq.is_finite() && d_pp.is_finite() && d_pq.is_finite()) {
        return Err(QsdError::NegativeDiffusion("non-finite diffusion coefficient".into()));
    }
    if d_qq < 0.0 || d_pp < 0.0 || coeffs.diffusion_determinant() < -1e-10 * scale * scale {
        return Err(QsdError::NegativeDiffusion(format!(
            "d_qq={d_qq}, d_pp={d_pp}, d_pq={d_pq}, det={}",
            coeffs.diffusion_determinant()
        )));
    }
    Ok(coeffs)
}

/// Largest stable explicit step: 0.4 of the smaller of the advective and
/// diffusive limits.
pub fn stable_dt(coeffs: &FpCoefficients, model: &LindbladModel, lattice: &PhaseSpaceLattice) -> f64 {
    let (dq, dp) = (lattice.dq(), lattice.dp());
    let q_abs = lattice.q_min.abs().max(lattice.q_max.abs());
    let p_abs = lattice.p_min.abs().max(lattice.p_max.abs());
    let vq = p_abs / model.m + coeffs.k_q.abs() * q_abs;
    let vp_force = lattice
        .q_centers()
        .iter()
        .map(|&q| model.potential.d1(q).abs())
        .fold(0.0, f64::max)
        .max(model.potential.d1(lattice.q_min).abs())
        .max(model.potential.d1(lattice.q_max).abs());
    let vp = vp_force + coeffs.k_p.abs() * p_abs;
    let adv = vq / dq + vp / dp;
    let diff = 2.0 * coeffs.d_qq / (dq * dq) + 2.0 * coeffs.d_pp / (dp * dp) + coeffs.d_pq.abs() / (dq * dp);
    let adv_dt = if adv > 0.0 { 1.0 / adv } else { f64::INFINITY };
    let diff_dt = if diff > 0.0 { 0.5 / diff } else { f64::INFINITY };
    0.4 * adv_dt.min(diff_dt)
}

/// Solver diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FpDiagnostics {
    pub steps: usize,
    pub dt_used: f64,
    pub min_value: f64,
    pub mass_drift: f64,
}

/// Precomputed face velocities and the right-hand side of the scheme.
struct FpOperator {
    nq: usize,
    np: usize,
    dq: f64,
    dp: f64,
    coeffs: FpCoefficients,
    /// v_q at internal q-faces, indexed `(i * np + k)` for the face i+½.
    vq: Vec<f64>,
    /// v_p at internal p-faces, indexed `(i * (np-1) + k)` for the face k+½.
    vp: Vec<f64>,
}

fn van_leer(dm: f64, dp: f64) -> f64 {
    if dm * dp > 0.0 {
        2.0 * dm * dp / (dm + dp)
    } else {
        0.0
    }
}

impl FpOperator {
    fn new(coeffs: FpCoefficients, model: &LindbladModel, l: &PhaseSpaceLattice) -> Self {
        let (nq, np, dq, dp) = (l.n_q, l.n_p, l.dq(), l.dp());
        let mut vq = vec![0.0; (nq - 1) * np];
        for i in 0..nq - 1 {
            let qf = l.q_min + (i + 1) as f64 * dq;
            for k in 0..np {
                vq[i * np + k] = l.p_center(k) / model.m + coeffs.k_q * qf;
            }
        }
        let mut vp = vec![0.0; nq * (np - 1)];
        for i in 0..nq {
            let force = -model.potential.d1(l.q_center(i));
            for k in 0..np - 1 {
                let pf = l.p_min + (k + 1) as f64 * dp;
                vp[i * (np - 1) + k] = force - coeffs.k_p * pf;
            }
        }
        Self {
            nq,
            np,
            dq,
            dp,
            coeffs,
            vq,
            vp,
        }
    }

    /// Centred ∂_p f in cell (i, k), one-sided at the walls.
    fn dfdp(&self, f: &[f64], i: usize, k: usize) -> f64 {
        let np = self.np;
        let row = &f[i * np..(i + 1) * np];
        if k == 0 {
            (row[1] - row[0]) / self.dp
        } else if k == np - 1 {
            (row[np - 1] - row[np - 2]) / self.dp
        } else {
            (row[k + 1] - row[k - 1]) / (2.0 * self.dp)
        }
    }

    /// Centred ∂_q f in cell (i, k), one-sided at the walls.
    fn dfdq(&self, f: &[f64], i: usize, k: usize) -> f64 {
        let np = self.np;
        let nq = self.nq;
        if i == 0 {
            (f[np + k] - f[k]) / self.dq
        } else if i == nq - 1 {
            (f[i * np + k] - f[(i - 1) * np + k]) / self.dq
        } else {
            (f[(i + 1) * np + k] - f[(i - 1) * np + k]) / (2.0 * self.dq)
        }
    }

    fn rhs(&self, f: &[f64], out: &mut [f64]) {
        let (nq, np, dq, dp) = (self.nq, self.np, self.dq, self.dp);
        let c = &self.coeffs;
        for v in out.iter_mut() {
            *v = 0.0;
        }
        // Limited slopes along q and p.
        let mut sq = vec![0.0; nq * np];
        let mut sp = vec![0.0; nq * np];
        for i in 0..nq {
            for k in 0..np {
                let idx = i * np + k;
                if i > 0 && i < nq - 1 {
                    sq[idx] = van_leer(f[idx] - f[idx - np], f[idx + np] - f[idx]);
                }
                if k > 0 && k < np - 1 {
                    sp[idx] = van_leer(f[idx] - f[idx - 1], f[idx + 1] - f[idx]);
                }
            }
        }
        // q-faces.
        for i in 0..nq - 1 {
            for k in 0..np {
                let l_idx = i * np + k;
                let r_idx = l_idx + np;
                let v = self.vq[l_idx];
                let adv = if v > 0.0 {
                    v * (f[l_idx] + 0.5 * sq[l_idx])
                } else {
                    v * (f[r_idx] - 0.5 * sq[r_idx])
                };
                let mut flux = adv;
                if c.d_qq != 0.0 || c.d_pq != 0.0 {
                    let grad_q = (f[r_idx] - f[l_idx]) / dq;
                    let grad_p = 0.5 * (self.dfdp(f, i, k) + self.dfdp(f, i + 1, k));
                    flux -= c.d_qq * grad_q + 0.5 * c.d_pq * grad_p;
                }
                out[l_idx] -= flux / dq;
                out[r_idx] += flux / dq;
            }
        }
        // p-faces.
        for i in 0..nq {
            for k in 0..np - 1 {
                let l_idx = i * np + k;
                let r_idx = l_idx + 1;
                let v = self.vp[i * (np - 1) + k];
                let adv = if v > 0.0 {
                    v * (f[l_idx] + 0.5 * sp[l_idx])
                } else {
                    v * (f[r_idx] - 0.5 * sp[r_idx])
                };
                let mut flux = adv;
                if c.d_pp != 0.0 || c.d_pq != 0.0 {
                    let grad_p = (f[r_idx] - f[l_idx]) / dp;
                    let grad_q = 0.5 * (self.dfdq(f, i, k) + self.dfdq(f, i, k + 1));
                    flux -= c.d_pp * grad_p + 0.5 * c.d_pq * grad_q;
                }
                out[l_idx] -= flux / dp;
                out[r_idx] += flux / dp;
            }
        }
    }

    /// One SSP-RK2 (Heun) step.
    fn step(&self, f: &mut [f64], k1: &mut [f64], k2: &mut [f64], stage: &mut [f64], dt: f64) {
        self.rhs(f, k1);
        for ((s, &a), &b) in stage.iter_mut().zip(f.iter()).zip(k1.iter()) {
            *s = a + dt * b;
        }
        self.rhs(stage, k2);
        for ((x, &s), &b) in f.iter_mut().zip(stage.iter()).zip(k2.iter()) {
            *x = 0.5 * (*x + s + dt * b);
        }
    }
}

/// Evolves f0 for a duration t with steps no larger than dt.
pub fn evolve_fp(
    coeffs: &FpCoefficients,
    model: &LindbladModel,
    f0: &PhaseSpaceField,
    t: f64,
    dt: f64,
) -> Result<PhaseSpaceField> {
    evolve_fp_observed(coeffs, model, f0, t, dt, 0, |_, _| {}).map(|(f, _)| f)
}

/// As [`evolve_fp`], calling `observer(t, f)` every `every` steps (never when
/// `every` is zero) and at the end. Returns the final field and diagnostics.
pub fn evolve_fp_observed(
    coeffs: &FpCoefficients,
    model: &LindbladModel,
    f0: &PhaseSpaceField,
    t: f64,
    dt: f64,
    every: usize,
    mut observer: impl FnMut(f64, &PhaseSpaceField),
) -> Result<(PhaseSpaceField, FpDiagnostics)> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(QsdError::InvalidArgument(format!("duration must be non-negative, got {t}")));
    }
    if !(dt > 0.0) {
        return Err(QsdError::NonPositive { name: "dt", value: dt });
    }
    let bound = stable_dt(coeffs, model, &f0.lattice);
    if dt > bound {
        return Err(QsdError::CflViolation { dt, bound });
    }
    let mass0 = f0.mass();
    let mut f = f0.clone();
    let mut min_value = f.min_value();
    if t == 0.0 {
        observer(0.0, &f);
        return Ok((
            f,
            FpDiagnostics {
                steps: 0,
                dt_used: 0.0,
                min_value,
                mass_drift: 0.0,
            },
        ));
    }
    let steps = (t / dt).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    let op = FpOperator::new(*coeffs, model, &f.lattice);
    let n = f.values.len();
    let (mut k1, mut k2, mut stage) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for s in 1..=steps {
        op.step(&mut f.values, &mut k1, &mut k2, &mut stage, h);
        min_value = min_value.min(f.min_value());
        if f.values.iter().any(|v| !v.is_finite()) {
            return Err(QsdError::NonFinite { t: s as f64 * h });
        }
        if every > 0 && s % every == 0 && s != steps {
            observer(s as f64 * h, &f);
        }
    }
    observer(t, &f);
    let mass_drift = (f.mass() - mass0).abs();
    Ok((
        f,
        FpDiagnostics {
            steps,
            dt_used: h,
            min_value,
            mass_drift,
        },
    ))
}

/// Transition density f(·, t₂ | from, t₁): a unit impulse in the cell
/// containing `from` evolved over t₂ − t₁.
pub fn fp_propagator(
    coeffs: &FpCoefficients,
    model: &LindbladModel,
    lattice: &PhaseSpaceLattice,
    from: (f64, f64),
    t1: f64,
    t2: f64,
    dt: f64,
) -> Result<PhaseSpaceField> {
    let (i, k) = lattice.locate(from.0, from.1).ok_or(QsdError::OffLattice(from.0))?;
    if i == 0 || k == 0 || i + 1 == lattice.n_q || k + 1 == lattice.n_p {
        return Err(QsdError::OffLattice(from.0));
    }
    if t2 < t1 {
        return Err(QsdError::InvalidArgument(format!("t2 = {t2} precedes t1 = {t1}")));
    }
    let f0 = PhaseSpaceField::impulse(lattice.clone(), from.0, from.1)?;
    evolve_fp(coeffs, model, &f0, t2 - t1, dt)
}

/// Deterministic drift orbit q̇ = p/m + k_q q, ṗ = −V'(q) − k_p p after a
/// duration t, integrated with RK4.
pub fn drift_orbit(coeffs: &FpCoefficients, model: &LindbladModel, start: (f64, f64), t: f64) -> (f64, f64) {
    let f = |q: f64, p: f64| (p / model.m + coeffs.k_q * q, -model.potential.d1(q) - coeffs.k_p * p);
    let steps = ((t.abs() / 1e-3).ceil() as usize).max(1);
    let h = t / steps as f64;
    let (mut q, mut p) = start;
    for _ in 0..steps {
        let (a1, b1) = f(q, p);
        let (a2, b2) = f(q + 0.5 * h * a1, p + 0.5 * h * b1);
        let (a3, b3) = f(q + 0.5 * h * a2, p + 0.5 * h * b2);
        let (a4, b4) = f(q + h * a3, p + h * b3);
        q += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        p += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
    }
    (q, p)
}

/// Thermal-relaxation rate estimated from the log-slope of ‖f(t) − f_ref‖₁
/// between the first and last samples whose distance lies in (lo, hi).
pub fn relaxation_rate(times: &[f64], distances: &[f64], lo: f64, hi: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(distances)
        .filter(|(_, &d)| d > lo && d < hi)
        .map(|(&t, &d)| (t, d.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    (sxx > 0.0).then(|| -sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Potential;

    #[test]
    fn impulse_has_unit_mass() {
        let l = PhaseSpaceLattice::symmetric(5.0, 20, 5.0, 20).unwrap();
        let f = PhaseSpaceField::impulse(l, 0.1, -0.2).unwrap();
        assert!((f.mass() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn bin_masses_partition_mass() {
        let l = PhaseSpaceLattice::symmetric(5.0, 20, 5.0, 20).unwrap();
        let f = PhaseSpaceField::gaussian(l, 0.3, -0.1, 1.0, 2.0);
        let edges: Vec<f64> = (0..=7).map(|k| -5.0 + 10.0 * k as f64 / 7.0).collect();
        let m: f64 = f.bin_masses(&edges, &edges).iter().sum();
        assert!((m - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mass_is_conserved() {
        let model = LindbladModel::standard(1.0, 0.0, 1.0, 1.0, Potential::harmonic(1.0, 1.0)).unwrap();
        let params = crate::gaussian::solve_beta(&model, 0.0).unwrap();
        let c = coefficients(&model, &params).unwrap();
        let l = PhaseSpaceLattice::symmetric(8.0, 40, 8.0, 40).unwrap();
        let f0 = PhaseSpaceField::gaussian(l.clone(), 1.0, 0.0, 0.5, 0.5);
        let dt = stable_dt(&c, &model, &l);
        let f = evolve_fp(&c, &model, &f0, 1.0, dt).unwrap();
        assert!((f.mass() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn cfl_violation_is_reported() {
        let model = LindbladModel::standard(1.0, 0.0, 1.0, 1.0, Potential::Free).unwrap();
        let params = crate::gaussian::solve_beta(&model, 0.0).unwrap();
        let c = coefficients(&model, &params).unwrap();
        let l = PhaseSpaceLattice::symmetric(8.0, 40, 8.0, 40).unwrap();
        let f0 = PhaseSpaceField::gaussian(l, 0.0, 0.0, 1.0, 1.0);
        assert!(matches!(evolve_fp(&c, &model, &f0, 1.0, 10.0), Err(QsdError::CflViolation { .. })));
    }
}
