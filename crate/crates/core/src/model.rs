//! Open-system model: Lindblad operator L = e^{iθ}(a x̂ + i b p̂) and
//! Hamiltonian H = p̂²/2m + V(x̂) + c{x̂, p̂}.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QsdError, Result};
use crate::hilbert::Grid;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Natural cubic spline through tabulated potential values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabulatedPotential {
    xs: Vec<f64>,
    vs: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl TabulatedPotential {
    pub fn new(xs: Vec<f64>, vs: Vec<f64>) -> Result<Self> {
        if xs.len() != vs.len() || xs.len() < 3 {
            return Err(QsdError::InvalidPotential(
                "tabulated potential needs at least 3 matching (x, V) samples".into(),
            ));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(QsdError::InvalidPotential(
                "tabulated x values must be strictly increasing".into(),
            ));
        }
        if vs.iter().any(|v| !v.is_finite()) {
            return Err(QsdError::InvalidPotential("non-finite tabulated value".into()));
        }
        let n = xs.len();
        // Tridiagonal solve for natural-spline second derivatives.
        let mut m = vec![0.0; n];
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            let h0 = xs[i] - xs[i - 1];
            let h1 = xs[i + 1] - xs[i];
            let a = h0;
            let b = 2.0 * (h0 + h1);
            let r = 6.0 * ((vs[i + 1] - vs[i]) / h1 - (vs[i] - vs[i - 1]) / h0);
            let denom = b - a * c[i - 1];
            c[i] = h1 / denom;
            d[i] = (r - a * d[i - 1]) / denom;
        }
        for i in (1..n - 1).rev() {
            m[i] = d[i] - c[i] * m[i + 1];
        }
        Ok(Self { xs, vs, m })
    }

    fn segment(&self, x: f64) -> usize {
        let n = self.xs.len();
        match self.xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(n - 2),
        }
    }

    /// Returns (V, V', V'', V''') at x; outside the table the end cubic is extended.
    pub fn eval(&self, x: f64) -> [f64; 4] {
        let i = self.segment(x);
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let (y0, y1) = (self.vs[i], self.vs[i + 1]);
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        let h = x1 - x0;
        let a = x1 - x;
        let b = x - x0;
        let v = m0 * a.powi(3) / (6.0 * h) + m1 * b.powi(3) / (6.0 * h)
            + (y0 / h - m0 * h / 6.0) * a
            + (y1 / h - m1 * h / 6.0) * b;
        let d1 = -m0 * a * a / (2.0 * h) + m1 * b * b / (2.0 * h) - (y0 / h - m0 * h / 6.0)
            + (y1 / h - m1 * h / 6.0);
        let d2 = m0 * a / h + m1 * b / h;
        let d3 = (m1 - m0) / h;
        [v, d1, d2, d3]
    }
}

/// Catalog of external potentials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    Free,
    /// V = ½ m ω² x².
    Harmonic { omega: f64, mass: f64 },
    /// V = −½ m ω² x².
    InvertedHarmonic { omega: f64, mass: f64 },
    /// V = λ x⁴ / 4.
    Quartic { lambda: f64 },
    /// V = V₀((2x/s)² − 1)², minima at ±s/2.
    DoubleWell { v0: f64, separation: f64 },
    Tabulated(TabulatedPotential),
}

impl Potential {
    pub fn harmonic(omega: f64, mass: f64) -> Self {
        Self::Harmonic { omega, mass }
    }

    /// (V, V', V'', V''') at x.
    pub fn eval(&self, x: f64) -> [f64; 4] {
        match *self {
            Potential::Free => [0.0; 4],
            Potential::Harmonic { omega, mass } => {
                let k = mass * omega * omega;
                [0.5 * k * x * x, k * x, k, 0.0]
            }
            Potential::InvertedHarmonic { omega, mass } => {
                let k = -mass * omega * omega;
                [0.5 * k * x * x, k * x, k, 0.0]
            }
            Potential::Quartic { lambda } => [
                0.25 * lambda * x.powi(4),
                lambda * x.powi(3),
                3.0 * lambda * x * x,
                6.0 * lambda * x,
            ],
            Potential::DoubleWell { v0, separation } => {
                let s2 = 4.0 / (separation * separation);
                let u = s2 * x * x - 1.0;
                [
                    v0 * u * u,
                    4.0 * v0 * u * s2 * x,
                    4.0 * v0 * s2 * (3.0 * s2 * x * x - 1.0),
                    24.0 * v0 * s2 * s2 * x,
                ]
            }
            Potential::Tabulated(ref t) => t.eval(x),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.eval(x)[0]
    }
    pub fn d1(&self, x: f64) -> f64 {
        self.eval(x)[1]
    }
    pub fn d2(&self, x: f64) -> f64 {
        self.eval(x)[2]
    }
    pub fn d3(&self, x: f64) -> f64 {
        self.eval(x)[3]
    }

    /// True when V is at most quadratic, the scope of the localization theorem.
    pub fn is_quadratic(&self) -> bool {
        matches!(
            self,
            Potential::Free | Potential::Harmonic { .. } | Potential::InvertedHarmonic { .. }
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |s: &str| Err(QsdError::InvalidPotential(s.to_string()));
        match *self {
            Potential::Harmonic { omega, mass } | Potential::InvertedHarmonic { omega, mass } => {
                if !(omega > 0.0) {
                    return bad("omega must be positive");
                }
                if !(mass > 0.0) {
                    return bad("mass must be positive");
                }
            }
            Potential::Quartic { lambda } if !lambda.is_finite() => return bad("lambda not finite"),
            Potential::DoubleWell { v0, separation } => {
                if !(separation > 0.0) || !v0.is_finite() {
                    return bad("double well needs finite v0 and positive separation");
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Quantum Brownian motion parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QbmParams {
    pub gamma: f64,
    pub kt: f64,
    pub m: f64,
    pub hbar: f64,
}

impl QbmParams {
    /// D = ħ²/(8 m γ kT).
    pub fn d(&self) -> f64 {
        self.hbar * self.hbar / (8.0 * self.m * self.gamma * self.kt)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("gamma", self.gamma),
            ("kT", self.kt),
            ("m", self.m),
            ("hbar", self.hbar),
        ] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(QsdError::NonPositive { name, value });
            }
        }
        Ok(())
    }
}

/// Parameters of the single-channel Lindblad model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LindbladModel {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub m: f64,
    pub hbar: f64,
    pub potential: Potential,
    /// Global phase θ of the Lindblad operator, L = e^{iθ}(a x̂ + i b p̂).
    #[serde(default)]
    pub phase: f64,
    /// Set when the model was built from QBM parameters.
    #[serde(default)]
    pub qbm: Option<QbmParams>,
}

impl LindbladModel {
    /// Model with the Ehrenfest-preserving choice c = ħab/2.
    pub fn standard(a: f64, b: f64, m: f64, hbar: f64, potential: Potential) -> Result<Self> {
        if !(m > 0.0) {
            return Err(QsdError::NonPositiveMass(m));
        }
        if !(hbar > 0.0) {
            return Err(QsdError::NonPositiveHbar(hbar));
        }
        potential.validate()?;
        // The sign of a can be absorbed into the phase of L.
        let (a, b, phase) = if a < 0.0 {
            (-a, -b, std::f64::consts::PI)
        } else {
            (a, b, 0.0)
        };
        Ok(Self {
            a,
            b,
            c: 0.5 * hbar * a * b,
            m,
            hbar,
            potential,
            phase,
            qbm: None,
        })
    }

    /// Quantum Brownian motion: a = (2D)^{-1/2}, b = (2D)^{1/2} γ/ħ, c = γ/2.
    pub fn from_qbm(q: QbmParams, potential: Potential) -> Result<Self> {
        q.validate()?;
        potential.validate()?;
        let d = q.d();
        let a = (2.0 * d).powf(-0.5);
        let b = (2.0 * d).sqrt() * q.gamma / q.hbar;
        Ok(Self {
            a,
            b,
            c: 0.5 * q.gamma,
            m: q.m,
            hbar: q.hbar,
            potential,
            phase: 0.0,
            qbm: Some(q),
        })
    }

    /// Same model with L multiplied by e^{iθ}.
    pub fn with_phase(mut self, theta: f64) -> Self {
        self.phase += theta;
        self
    }

    /// Same model with an arbitrary anticommutator coefficient c.
    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn is_standard_c(&self) -> bool {
        (self.c - 0.5 * self.hbar * self.a * self.b).abs()
            <= 1e-12 * (1.0 + self.c.abs())
    }

    /// e^{iθ}.
    pub fn phase_factor(&self) -> Complex64 {
        Complex64::from_polar(1.0, self.phase)
    }

    /// Coefficients (α, β) of L = α x̂ + β p̂.
    pub fn l_coefficients(&self) -> (Complex64, Complex64) {
        let ph = self.phase_factor();
        (ph * self.a, ph * I * self.b)
    }

    /// Coefficient of [x̂,[x̂,ρ]] in the master equation, a²/2.
    pub fn xx_coefficient(&self) -> f64 {
        0.5 * self.a * self.a
    }

    /// Coefficient of [p̂,[p̂,ρ]], b²/2.
    pub fn pp_coefficient(&self) -> f64 {
        0.5 * self.b * self.b
    }

    /// Friction rate ħab (equal to γ for QBM models).
    pub fn friction(&self) -> f64 {
        self.hbar * self.a * self.b
    }

    /// Precomputes potential samples on a grid.
    pub fn on_grid(&self, grid: &Grid) -> Discretized {
        let v: Vec<f64> = grid.x().iter().map(|&x| self.potential.value(x)).collect();
        Discretized {
            grid: grid.clone(),
            model: self.clone(),
            v,
        }
    }
}

/// Quadratic-approximation validity ratio r = ½(Δx)²|V'''(x̄)| / max(|V'(x̄)|, ε).
pub fn validity_ratio(model: &LindbladModel, x_bar: f64, delta_x2: f64) -> f64 {
    const EPS_FLOOR: f64 = 1e-12;
    let [_, d1, _, d3] = model.potential.eval(x_bar);
    let num = 0.5 * delta_x2 * d3.abs();
    if num == 0.0 {
        return 0.0;
    }
    if d1.abs() < EPS_FLOOR {
        return f64::INFINITY;
    }
    num / d1.abs()
}

/// Model specialised to a grid, with the potential tabulated once.
#[derive(Clone, Debug)]
pub struct Discretized {
    pub grid: Grid,
    pub model: LindbladModel,
    pub v: Vec<f64>,
}

/// Results of applying the model's operators to one vector.
pub struct Actions {
    /// Hψ.
    pub h: Vec<Complex64>,
    /// Lψ.
    pub l: Vec<Complex64>,
    /// L†Lψ.
    pub ldl: Vec<Complex64>,
    /// p̂ψ.
    pub p: Vec<Complex64>,
}

impl Discretized {
    pub fn n(&self) -> usize {
        self.grid.n_points()
    }

    /// Computes Hψ, Lψ, L†Lψ and p̂ψ with five FFTs.
    pub fn actions(&self, psi: &[Complex64]) -> Actions {
        let g = &self.grid;
        let md = &self.model;
        let n = g.n_points();
        let x = g.x();
        let p = g.p();

        let mut k = psi.to_vec();
        g.forward(&mut k);
        let mut pk: Vec<Complex64> = k.iter().zip(p).map(|(a, &pv)| a * pv).collect();
        let mut p2: Vec<Complex64> = k.iter().zip(p).map(|(a, &pv)| a * (pv * pv)).collect();
        g.inverse(&mut pk);
        g.inverse(&mut p2);
        let mut px: Vec<Complex64> = psi.iter().zip(x).map(|(a, &xv)| a * xv).collect();
        g.forward(&mut px);
        for (a, &pv) in px.iter_mut().zip(p) {
            *a *= pv;
        }
        g.inverse(&mut px);

        let ph = md.phase_factor();
        let inv2m = 0.5 / md.m;
        let (a, b, c) = (md.a, md.b, md.c);
        let mut h = Vec::with_capacity(n);
        let mut l = Vec::with_capacity(n);
        let mut ldl = Vec::with_capacity(n);
        for j in 0..n {
            let xj = x[j];
            let xp = xj * pk[j];
            h.push(p2[j] * inv2m + psi[j] * self.v[j] + c * (xp + px[j]));
            l.push(ph * (a * xj * psi[j] + I * b * pk[j]));
            ldl.push(
                psi[j] * (a * a * xj * xj) + I * (a * b) * (xp - px[j]) + p2[j] * (b * b),
            );
        }
        Actions { h, l, ldl, p: pk }
    }

    /// Lψ only (two FFTs).
    pub fn apply_l(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let md = &self.model;
        let ph = md.phase_factor();
        if md.b == 0.0 {
            return psi
                .iter()
                .zip(self.grid.x())
                .map(|(v, &x)| ph * md.a * x * v)
                .collect();
        }
        let pk = self.grid.apply_p_raw(psi);
        psi.iter()
            .zip(self.grid.x())
            .zip(pk.iter())
            .map(|((v, &x), q)| ph * (md.a * x * v + I * md.b * q))
            .collect()
    }

    /// Non-Hermitian effective Hamiltonian H − (iħ/2)L†L applied to ψ.
    pub fn apply_heff(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let act = self.actions(psi);
        let s = -0.5 * I * self.model.hbar;
        act.h
            .iter()
            .zip(act.ldl.iter())
            .map(|(h, q)| h + s * q)
            .collect()
    }

    /// Estimate of the generator's spectral radius used for explicit step bounds.
    pub fn kinetic_scale(&self) -> f64 {
        let md = &self.model;
        let pmax = self.grid.p_max();
        pmax * pmax / (2.0 * md.m)
    }

    pub fn potential_range(&self) -> f64 {
        let vmax = self.v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let vmin = self.v.iter().cloned().fold(f64::INFINITY, f64::min);
        vmax - vmin
    }
}
