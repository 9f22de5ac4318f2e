//! Localization diagnostics for the operator A = p̂ − 2iħβx̂.
//!
//! Coherent states are the eigenstates of A, so the dispersion
//! (ΔA)² = σ(A, A) measures how far a state is from being localized.
//! In deviation coordinates (Δx)² = σ_x²(1+X), (Δp)² = σ_p²(1+Y),
//! R = R₀(1+Z) it reads (ΔA)² = σ_p²(X+Y) − 2R₀²Z/σ_x².

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ensemble::{run_ensemble, EnsembleSpec};
use crate::error::Result;
use crate::gaussian::StationaryParams;
use crate::hilbert::{correlation, Operator, WaveFunction};
use crate::model::LindbladModel;
use crate::qsd::{MomentState, Scheme};

/// Relative deviations of the second moments from the fixed point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationCoords {
    pub x_dev: f64,
    pub y_dev: f64,
    pub z_dev: f64,
}

impl DeviationCoords {
    pub fn origin() -> Self {
        Self {
            x_dev: 0.0,
            y_dev: 0.0,
            z_dev: 0.0,
        }
    }

    pub fn from_moments(m: &MomentState, p: &StationaryParams) -> Self {
        Self {
            x_dev: m.var_x / p.sigma_x2 - 1.0,
            y_dev: m.var_p / p.sigma_p2 - 1.0,
            z_dev: if p.r0 != 0.0 { m.r / p.r0 - 1.0 } else { 0.0 },
        }
    }

    /// Second moments these coordinates describe.
    pub fn moments(&self, p: &StationaryParams) -> (f64, f64, f64) {
        (
            p.sigma_x2 * (1.0 + self.x_dev),
            p.sigma_p2 * (1.0 + self.y_dev),
            p.r0 * (1.0 + self.z_dev),
        )
    }

    /// True if the moments respect (Δx)²(Δp)² − R² ≥ ħ²/4.
    pub fn is_admissible(&self, p: &StationaryParams, hbar: f64) -> bool {
        let (vx, vp, r) = self.moments(p);
        self.x_dev >= -1.0 && self.y_dev >= -1.0 && vx * vp - r * r >= 0.25 * hbar * hbar
    }
}

/// (ΔA)² expressed through deviation coordinates.
pub fn delta_a2_from_coords(p: &StationaryParams, d: &DeviationCoords) -> f64 {
    p.sigma_p2 * (d.x_dev + d.y_dev) - 2.0 * p.r0 * p.r0 * d.z_dev / p.sigma_x2
}

/// The localization operator A = p̂ − 2iħβx̂ as an operator tag.
pub fn a_operator(params: &StationaryParams, hbar: f64) -> Operator<'static> {
    Operator::Linear {
        x: Complex64::new(0.0, -2.0 * hbar) * params.beta,
        p: Complex64::new(1.0, 0.0),
    }
}

/// (ΔA)² = σ(A, A) evaluated directly on the grid state.
pub fn delta_a2(psi: &WaveFunction, params: &StationaryParams, hbar: f64) -> f64 {
    let a = a_operator(params, hbar);
    correlation(psi, a, a).value.re
}

/// Mean drift of (ΔA)² in the regrouped, manifestly nonpositive form:
/// (c₁/σ_p²)(ΔA)² − (ħ²a²/2)X² − 2a²R₀²(X−Z)² − 2b²σ_p⁴(Y − R₀²Z/(σ_p²σ_x²))²
/// − ħ²b²R₀²Z²/(2σ_x⁴).
pub fn da2_drift(params: &StationaryParams, dev: &DeviationCoords, model: &LindbladModel) -> f64 {
    let (a, b, hbar) = (model.a, model.b, model.hbar);
    let (sx2, sp2, r0) = (params.sigma_x2, params.sigma_p2, params.r0);
    let (x, y, z) = (dev.x_dev, dev.y_dev, dev.z_dev);
    let c1 = params.c1_negative_form(model);
    let da2 = delta_a2_from_coords(params, dev);
    let w = y - r0 * r0 * z / (sp2 * sx2);
    c1 / sp2 * da2
        - 0.5 * hbar * hbar * a * a * x * x
        - 2.0 * a * a * r0 * r0 * (x - z).powi(2)
        - 2.0 * b * b * sp2 * sp2 * w * w
        - hbar * hbar * b * b * r0 * r0 * z * z / (2.0 * sx2 * sx2)
}

/// Same drift written as c₁X + c₂Y + c₃Z plus the quadratic terms.
pub fn da2_drift_expanded(params: &StationaryParams, dev: &DeviationCoords, model: &LindbladModel) -> f64 {
    let (a, b, hbar) = (model.a, model.b, model.hbar);
    let (sx2, sp2, r0) = (params.sigma_x2, params.sigma_p2, params.r0);
    let (x, y, z) = (dev.x_dev, dev.y_dev, dev.z_dev);
    let [c1, c2, c3] = params.linear_coefficients(model);
    c1 * x + c2 * y + c3 * z
        - 2.0 * a * a * (r0 * r0 + 0.25 * hbar * hbar) * x * x
        - 2.0 * b * b * sp2 * sp2 * y * y
        - 2.0 * r0 * r0 * (a * a + b * b * sp2 / sx2) * z * z
        + 4.0 * a * a * r0 * r0 * x * z
        + 4.0 * b * b * (sp2 / sx2) * r0 * r0 * y * z
}

/// Drift obtained by inserting the deviation moments into the reduced
/// moment flow and combining d(Δp)² + (σ_p²/σ_x²)d(Δx)² − (2R₀/σ_x²)dR.
pub fn da2_drift_from_flow(params: &StationaryParams, dev: &DeviationCoords, model: &LindbladModel) -> f64 {
    let (vx, vp, r) = dev.moments(params);
    let s = MomentState {
        x_mean: params.valid_at,
        p_mean: 0.0,
        var_x: vx,
        var_p: vp,
        r,
    };
    let d = crate::gaussian::reduced_moment_flow(model, &s);
    d.dvar_p + params.sigma_p2 / params.sigma_x2 * d.dvar_x - 2.0 * params.r0 / params.sigma_x2 * d.dr
}

/// Draws deviation coordinates uniformly from the admissible part of the
/// box X, Y ∈ [−1, extent], Z ∈ [−1 − extent, 1 + extent].
pub fn sample_admissible<R: Rng>(rng: &mut R, params: &StationaryParams, hbar: f64, extent: f64) -> DeviationCoords {
    loop {
        let d = DeviationCoords {
            x_dev: rng.random_range(-1.0..extent),
            y_dev: rng.random_range(-1.0..extent),
            z_dev: rng.random_range(-1.0 - extent..1.0 + extent),
        };
        if d.is_admissible(params, hbar) {
            return d;
        }
    }
}

/// Localization timescales.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    /// (2a²σ_x² + 2b²σ_p²)⁻¹.
    pub tau: f64,
    /// (ħ/γkT)^{1/2}, QBM models only.
    pub tau_thermal: Option<f64>,
    /// 1/(ℓ²a²) for branch separation ℓ.
    pub tau_superposition: Option<f64>,
    /// ħ²/(ℓ²mγkT), QBM models only.
    pub tau_decoherence: Option<f64>,
}

pub fn estimate_rates(params: &StationaryParams, model: &LindbladModel, ell: Option<f64>) -> RateEstimate {
    let (a, b) = (model.a, model.b);
    let tau = 1.0 / (2.0 * a * a * params.sigma_x2 + 2.0 * b * b * params.sigma_p2);
    let tau_superposition = ell.map(|l| 1.0 / (l * l * a * a));
    let (tau_thermal, tau_decoherence) = match model.qbm {
        Some(q) => (
            Some((q.hbar / (q.gamma * q.kt)).sqrt()),
            ell.map(|l| q.hbar * q.hbar / (l * l * q.m * q.gamma * q.kt)),
        ),
        None => (None, None),
    };
    RateEstimate {
        tau,
        tau_thermal,
        tau_superposition,
        tau_decoherence,
    }
}

/// Least-squares nonincreasing fit (pool adjacent violators).
pub fn isotonic_decreasing(y: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(y.len());
    for &v in y {
        blocks.push((v, 1));
        while blocks.len() >= 2 {
            let (m2, n2) = blocks[blocks.len() - 1];
            let (m1, n1) = blocks[blocks.len() - 2];
            if m1 < m2 {
                blocks.pop();
                blocks.pop();
                let n = n1 + n2;
                blocks.push(((m1 * n1 as f64 + m2 * n2 as f64) / n as f64, n));
            } else {
                break;
            }
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, n)| std::iter::repeat_n(m, n))
        .collect()
}

/// First time the series falls below y₀/e, linearly interpolated.
pub fn e_folding_time(times: &[f64], y: &[f64]) -> Option<f64> {
    let y0 = *y.first()?;
    let target = y0 / std::f64::consts::E;
    for k in 1..y.len() {
        if y[k] <= target {
            let (t0, t1) = (times[k - 1], times[k]);
            let (a, b) = (y[k - 1], y[k]);
            let f = if a != b { (a - target) / (a - b) } else { 0.0 };
            return Some(t0 + f * (t1 - t0));
        }
    }
    None
}

/// Per-initial-state outcome of [`verify_localization`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalizationCase {
    pub times: Vec<f64>,
    pub mean_delta_a2: Vec<f64>,
    pub mean_var_x: Vec<f64>,
    /// Fraction of variance explained by the nonincreasing fit.
    pub isotonic_r2: f64,
    /// True when the series never exceeds the exponential envelope.
    pub envelope_ok: bool,
    /// max_t M[(ΔA)²](t) / envelope(t).
    pub envelope_ratio: f64,
    pub e_folding_time: Option<f64>,
    /// The initial state is already within the noise floor 0.05σ_p².
    pub at_fixed_point: bool,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub params: StationaryParams,
    pub rates: RateEstimate,
    pub cases: Vec<LocalizationCase>,
    pub scope_warning: Option<String>,
    pub passed: bool,
}

/// Ensemble test of the monotone decay of M[(ΔA)²].
#[allow(clippy::too_many_arguments)]
pub fn verify_localization(
    model: &LindbladModel,
    psi0_family: &[WaveFunction],
    n_traj: usize,
    t: f64,
    dt: f64,
    base_seed: u64,
    record_every: usize,
    scheme: Scheme,
) -> Result<LocalizationReport> {
    let params = crate::gaussian::solve_beta(model, 0.0)?;
    let rates = estimate_rates(&params, model, None);
    let scope_warning = if model.potential.is_quadratic() {
        None
    } else {
        Some("potential is not quadratic: the localization theorem is only a conjecture here".to_string())
    };
    let c1 = params.c1_negative_form(model);
    let slack = 1.0 + 5.0 / (n_traj as f64).sqrt();
    let mut cases = Vec::new();
    for psi0 in psi0_family {
        let spec = EnsembleSpec {
            n_traj,
            base_seed,
            model: model.clone(),
            psi0: psi0.clone(),
            t,
            dt,
            record_every,
            scheme,
            snapshot_times: Vec::new(),
            params: Some(params),
        };
        let ens = run_ensemble(&spec)?;
        let times = ens.times.clone();
        let mean_delta_a2 = ens.mean_series(|r, k| r.delta_a2[k]);
        let mean_var_x = ens.mean_series(|r, k| r.moments[k].var_x);
        let fit = isotonic_decreasing(&mean_delta_a2);
        let mean = mean_delta_a2.iter().sum::<f64>() / mean_delta_a2.len() as f64;
        let ss_tot: f64 = mean_delta_a2.iter().map(|v| (v - mean).powi(2)).sum();
        let ss_res: f64 = mean_delta_a2.iter().zip(&fit).map(|(v, f)| (v - f).powi(2)).sum();
        let floor = 0.05 * params.sigma_p2;
        let at_fixed_point = mean_delta_a2[0] <= floor;
        let isotonic_r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
        let (envelope_ok, envelope_ratio) = if at_fixed_point {
            let mx = mean_delta_a2.iter().cloned().fold(0.0, f64::max);
            (mx <= floor, mx / floor)
        } else {
            let a0 = mean_delta_a2[0];
            let mut worst: f64 = 0.0;
            for (tk, v) in times.iter().zip(&mean_delta_a2) {
                let env = a0 * (c1 * tk / params.sigma_p2).exp() * slack;
                worst = worst.max(v / env);
            }
            (worst <= 1.0, worst)
        };
        let e_fold = e_folding_time(&times, &mean_delta_a2);
        let passed = envelope_ok && (at_fixed_point || isotonic_r2 >= 0.95);
        cases.push(LocalizationCase {
            times,
            mean_delta_a2,
            mean_var_x,
            isotonic_r2,
            envelope_ok,
            envelope_ratio,
            e_folding_time: e_fold,
            at_fixed_point,
            passed,
        });
    }
    let passed = cases.iter().all(|c| c.passed);
    Ok(LocalizationReport {
        params,
        rates,
        cases,
        scope_warning,
        passed,
    })
}
