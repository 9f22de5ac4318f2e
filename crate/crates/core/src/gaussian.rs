//! Stationary Gaussian solutions and the moment dynamics in the quadratic
//! approximation.
//!
//! A generalized coherent state ⟨x|ψ⟩ ∝ exp(−β(x−q)² + ipx/ħ) keeps its
//! shape under the Ito flow when β solves
//!
//! 4(b² + i/(mħ))ħ²β² + 4ħabβ − (a² + iV''/ħ) = 0,  Re β > 0.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QsdError, Result};
use crate::hilbert::{Grid, WaveFunction};
use crate::model::LindbladModel;
use crate::qsd::{MomentDerivative, MomentState};

/// Fixed-point shape of the stationary Gaussian.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationaryParams {
    pub beta: Complex64,
    pub sigma_x2: f64,
    pub sigma_p2: f64,
    pub r0: f64,
    /// Position at which V'' was evaluated.
    pub valid_at: f64,
    /// Set when both roots had Re β > 0 and the residual picked one.
    #[serde(default)]
    pub ambiguous_root: bool,
}

impl StationaryParams {
    /// Builds the parameters from β: σ_x² = 1/(4 Re β), R₀ = −2ħσ_x² Im β,
    /// σ_p² = (ħ²/4 + R₀²)/σ_x².
    pub fn from_beta(beta: Complex64, hbar: f64, valid_at: f64) -> Self {
        let sigma_x2 = 1.0 / (4.0 * beta.re);
        let r0 = -2.0 * hbar * sigma_x2 * beta.im;
        let sigma_p2 = (0.25 * hbar * hbar + r0 * r0) / sigma_x2;
        Self {
            beta,
            sigma_x2,
            sigma_p2,
            r0,
            valid_at,
            ambiguous_root: false,
        }
    }

    pub fn sigma_x(&self) -> f64 {
        self.sigma_x2.sqrt()
    }
    pub fn sigma_p(&self) -> f64 {
        self.sigma_p2.sqrt()
    }

    /// Moment state of a coherent state centred at (q, p).
    pub fn moments_at(&self, q: f64, p: f64) -> MomentState {
        MomentState {
            x_mean: q,
            p_mean: p,
            var_x: self.sigma_x2,
            var_p: self.sigma_p2,
            r: self.r0,
        }
    }

    /// Localization coefficients (c₁, c₂, c₃) of the linear part of the
    /// (ΔA)² drift in deviation coordinates.
    pub fn linear_coefficients(&self, model: &LindbladModel) -> [f64; 3] {
        let (a, b, m, hbar) = (model.a, model.b, model.m, model.hbar);
        let v2 = model.potential.d2(self.valid_at);
        let (sx2, sp2, r0) = (self.sigma_x2, self.sigma_p2, self.r0);
        let hab = hbar * a * b;
        let c1 = -hbar * hbar * a * a + 2.0 * hab * sp2 + 2.0 * r0 * v2;
        let c2 = -2.0 * hab * sp2 - 2.0 * (r0 / m) * sp2 / sx2 - hbar * hbar * b * b * sp2 / sx2;
        let c3 = 2.0 * (r0 / m) * sp2 / sx2 - 2.0 * r0 * v2;
        [c1, c2, c3]
    }

    /// c₁ in the form −ħ²a²/2 − 2a²R₀² − 2b²σ_p⁴, manifestly negative.
    pub fn c1_negative_form(&self, model: &LindbladModel) -> f64 {
        let (a, b, hbar) = (model.a, model.b, model.hbar);
        -0.5 * hbar * hbar * a * a - 2.0 * a * a * self.r0 * self.r0 - 2.0 * b * b * self.sigma_p2 * self.sigma_p2
    }
}

/// The two roots of the stationary quadratic.
pub fn beta_roots(model: &LindbladModel, x_bar: f64) -> (Complex64, Complex64) {
    let (a, b, m, hbar) = (model.a, model.b, model.m, model.hbar);
    let i = Complex64::new(0.0, 1.0);
    let v2 = model.potential.d2(x_bar);
    let qa = 4.0 * (b * b + i / (m * hbar)) * hbar * hbar;
    let qb = Complex64::new(4.0 * hbar * a * b, 0.0);
    let qc = -(a * a + i * v2 / hbar);
    let disc = (qb * qb - 4.0 * qa * qc).sqrt();
    // Numerically stable pairing of the two roots.
    let s = if (qb.conj() * disc).re >= 0.0 { -qb - disc } else { -qb + disc };
    let r1 = s / (2.0 * qa);
    let r2 = (2.0 * qc) / s;
    (r1, r2)
}

/// Stationary shape parameters at x̄ (only V''(x̄) enters).
pub fn solve_beta(model: &LindbladModel, x_bar: f64) -> Result<StationaryParams> {
    if model.a == 0.0 && model.b == 0.0 {
        return Err(QsdError::NoCoupling);
    }
    if !model.is_standard_c() {
        return Err(QsdError::NonStandardCoupling {
            c: model.c,
            expected: 0.5 * model.hbar * model.a * model.b,
        });
    }
    let (r1, r2) = beta_roots(model, x_bar);
    let ok1 = r1.re > 0.0;
    let ok2 = r2.re > 0.0;
    let pick = |beta: Complex64| StationaryParams::from_beta(beta, model.hbar, x_bar);
    match (ok1, ok2) {
        (true, false) => Ok(pick(r1)),
        (false, true) => Ok(pick(r2)),
        (false, false) => Err(QsdError::NoStableRoot { r1, r2 }),
        (true, true) => {
            let p1 = pick(r1);
            let p2 = pick(r2);
            let mut best = if residual_norm(model, &p1) <= residual_norm(model, &p2) { p1 } else { p2 };
            best.ambiguous_root = true;
            Ok(best)
        }
    }
}

/// Residuals of the three variance fixed-point equations.
pub fn stationary_residuals(model: &LindbladModel, params: &StationaryParams) -> [f64; 3] {
    let d = reduced_moment_flow(model, &params.moments_at(params.valid_at, 0.0));
    [d.dvar_x, d.dvar_p, d.dr]
}

fn residual_norm(model: &LindbladModel, p: &StationaryParams) -> f64 {
    stationary_residuals(model, p).iter().map(|v| v.abs()).sum()
}

/// Normalized coherent state N exp(−β(x−q)² + ipx/ħ) on the grid.
pub fn coherent_state(grid: &Grid, params: &StationaryParams, q: f64, p: f64, hbar: f64) -> WaveFunction {
    let beta = params.beta;
    WaveFunction::from_fn(grid, |x| {
        let d = x - q;
        (-beta * d * d + Complex64::new(0.0, p * x / hbar)).exp()
    })
    .normalized()
}

/// |⟨ψ_{q,p}|ψ_{q',p'}⟩|² for two coherent states with the same β.
pub fn coherent_overlap_sqr(params: &StationaryParams, hbar: f64, q1: f64, p1: f64, q2: f64, p2: f64) -> f64 {
    // ∫ exp(−β*(x−q₁)² − β(x−q₂)² + i(p₂−p₁)x/ħ) over x, normalized.
    let beta = params.beta;
    let br = beta.re;
    let s = beta.conj() + beta; // 2 Re β
    let lin = 2.0 * (beta.conj() * q1 + beta * q2) + Complex64::new(0.0, (p2 - p1) / hbar);
    let cst = -(beta.conj() * q1 * q1 + beta * q2 * q2);
    let expo = lin * lin / (4.0 * s) + cst;
    // Norm factors: ∫exp(−2Re β (x−q)²) = sqrt(π/(2 Re β)).
    let norm = (std::f64::consts::PI / s.re).sqrt() / (std::f64::consts::PI / (2.0 * br)).sqrt();
    (norm * expo.exp()).norm_sqr()
}

/// Deterministic drifts of the moments with the potential expanded to
/// second order about ⟨x⟩.
pub fn reduced_moment_flow(model: &LindbladModel, s: &MomentState) -> MomentDerivative {
    let (a, b, c, hbar, m) = (model.a, model.b, model.c, model.hbar, model.m);
    let [_, v1, v2, _] = model.potential.eval(s.x_mean);
    let hab = hbar * a * b;
    let sxl2 = (a * s.var_x - 0.5 * hbar * b).powi(2) + (b * s.r).powi(2);
    let spl2 = (a * s.r).powi(2) + (b * s.var_p - 0.5 * hbar * a).powi(2);
    let cross = a * a * s.r * s.var_x - hab * s.r + b * b * s.r * s.var_p;
    MomentDerivative {
        dx_mean: s.p_mean / m + (2.0 * c - hab) * s.x_mean,
        dp_mean: -v1 - (2.0 * c + hab) * s.p_mean,
        dvar_x: 2.0 * s.r / m + (4.0 * c - 2.0 * hab) * s.var_x + hbar * hbar * b * b - 2.0 * sxl2,
        dvar_p: -2.0 * s.r * v2 - (4.0 * c + 2.0 * hab) * s.var_p + hbar * hbar * a * a - 2.0 * spl2,
        dr: s.var_p / m - s.var_x * v2 - 2.0 * hab * s.r - 2.0 * cross,
    }
}
