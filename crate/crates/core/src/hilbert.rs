//! Periodic position grid with spectral momentum operator.
//!
//! Wavefunctions are stored as samples ψ(x_j) normalized so that
//! Σ_j |ψ_j|² dx = 1. The momentum operator is applied through the FFT,
//! p̂ = F⁻¹ diag(ħ k) F, which keeps every discrete operator used here
//! Hermitian on the grid.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{QsdError, Result};
use crate::model::Potential;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

thread_local! {
    static FFT_SCRATCH: std::cell::RefCell<Vec<Complex64>> = const { std::cell::RefCell::new(Vec::new()) };
}

/// Runs `f` with a per-thread FFT scratch buffer of at least `len` elements.
fn with_scratch(len: usize, f: impl FnOnce(&mut [Complex64])) {
    FFT_SCRATCH.with(|cell| {
        let mut buf = cell.borrow_mut();
        if buf.len() < len {
            buf.resize(len, Complex64::new(0.0, 0.0));
        }
        f(&mut buf[..len]);
    });
}

/// Uniform periodic grid on `[x_min, x_max)` together with cached FFT plans.
#[derive(Clone)]
pub struct Grid {
    n: usize,
    x_min: f64,
    x_max: f64,
    dx: f64,
    hbar: f64,
    x: Arc<Vec<f64>>,
    /// Momentum values in FFT (unshifted) order.
    p: Arc<Vec<f64>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n", &self.n)
            .field("x_min", &self.x_min)
            .field("x_max", &self.x_max)
            .field("hbar", &self.hbar)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self.x_min == other.x_min
            && self.x_max == other.x_max
            && self.hbar == other.hbar
    }
}

impl Grid {
    pub fn new(n: usize, x_min: f64, x_max: f64, hbar: f64) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(QsdError::BadGridSize(n));
        }
        if !(x_min < x_max) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(QsdError::BadGridBounds { x_min, x_max });
        }
        if !(hbar > 0.0) {
            return Err(QsdError::NonPositiveHbar(hbar));
        }
        let len = x_max - x_min;
        let dx = len / n as f64;
        let x: Vec<f64> = (0..n).map(|j| x_min + j as f64 * dx).collect();
        let p: Vec<f64> = (0..n)
            .map(|j| {
                let m = if j < n / 2 { j as f64 } else { j as f64 - n as f64 };
                hbar * 2.0 * PI * m / len
            })
            .collect();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        Ok(Self {
            n,
            x_min,
            x_max,
            dx,
            hbar,
            x: Arc::new(x),
            p: Arc::new(p),
            fwd,
            inv,
        })
    }

    /// Symmetric grid `[-half_width, half_width)`.
    pub fn symmetric(n: usize, half_width: f64, hbar: f64) -> Result<Self> {
        Self::new(n, -half_width, half_width, hbar)
    }

    pub fn n_points(&self) -> usize {
        self.n
    }
    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn dx(&self) -> f64 {
        self.dx
    }
    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }
    pub fn hbar(&self) -> f64 {
        self.hbar
    }
    pub fn x(&self) -> &[f64] {
        &self.x
    }
    /// Momentum lattice in FFT order.
    pub fn p(&self) -> &[f64] {
        &self.p
    }
    /// Largest representable momentum magnitude, πħ/dx.
    pub fn p_max(&self) -> f64 {
        PI * self.hbar / self.dx
    }
    /// Momentum-lattice spacing 2πħ/L.
    pub fn dp(&self) -> f64 {
        2.0 * PI * self.hbar / self.length()
    }

    /// Unnormalized forward transform in place.
    pub fn forward(&self, buf: &mut [Complex64]) {
        with_scratch(self.fwd.get_inplace_scratch_len(), |scratch| {
            self.fwd.process_with_scratch(buf, scratch)
        });
    }

    /// Inverse transform in place, including the 1/N factor.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        with_scratch(self.inv.get_inplace_scratch_len(), |scratch| {
            self.inv.process_with_scratch(buf, scratch)
        });
        let s = 1.0 / self.n as f64;
        for v in buf.iter_mut() {
            *v *= s;
        }
    }

    /// p̂ψ for raw amplitudes.
    pub fn apply_p_raw(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let mut buf = psi.to_vec();
        self.forward(&mut buf);
        for (v, &p) in buf.iter_mut().zip(self.p.iter()) {
            *v *= p;
        }
        self.inverse(&mut buf);
        buf
    }

    /// Applies a function of momentum, multiplying each Fourier mode by `f(p_k)`.
    pub fn apply_k_diagonal(&self, psi: &mut [Complex64], f: impl Fn(f64) -> Complex64) {
        self.forward(psi);
        for (v, &p) in psi.iter_mut().zip(self.p.iter()) {
            *v *= f(p);
        }
        self.inverse(psi);
    }

    pub(crate) fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(QsdError::GridMismatch)
        }
    }
}

/// Pure state sampled on a grid.
#[derive(Clone, Debug)]
pub struct WaveFunction {
    grid: Grid,
    amps: Vec<Complex64>,
}

impl WaveFunction {
    pub fn new(grid: Grid, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != grid.n_points() {
            return Err(QsdError::InvalidArgument(format!(
                "expected {} amplitudes, got {}",
                grid.n_points(),
                amps.len()
            )));
        }
        Ok(Self { grid, amps })
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> Complex64) -> Self {
        let amps = grid.x().iter().map(|&x| f(x)).collect();
        Self {
            grid: grid.clone(),
            amps,
        }
    }

    /// Normalized Gaussian packet exp(-(x-q)²/(4 var) + i p x/ħ).
    pub fn gaussian(grid: &Grid, q: f64, p: f64, var_x: f64) -> Self {
        let hbar = grid.hbar();
        Self::from_fn(grid, |x| {
            let d = x - q;
            Complex64::new(-d * d / (4.0 * var_x), p * x / hbar).exp()
        })
        .normalized()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }
    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }
    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }
    pub(crate) fn with_amplitudes(&self, amps: Vec<Complex64>) -> Self {
        Self {
            grid: self.grid.clone(),
            amps,
        }
    }

    /// Σ|ψ_j|² dx.
    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.dx()
    }

    pub fn normalize(&mut self) {
        let n = self.norm_sqr().sqrt();
        if n > 0.0 {
            let s = 1.0 / n;
            for a in self.amps.iter_mut() {
                *a *= s;
            }
        }
    }

    pub fn normalized(mut self) -> Self {
        self.normalize();
        self
    }

    /// ⟨self|other⟩ = Σ conj(ψ_j) φ_j dx.
    pub fn inner(&self, other: &WaveFunction) -> Complex64 {
        inner_raw(&self.amps, &other.amps) * self.grid.dx()
    }

    /// Superposition c₁ψ₁ + c₂ψ₂ (not normalized).
    pub fn combine(&self, c1: Complex64, other: &WaveFunction, c2: Complex64) -> Self {
        let amps = self
            .amps
            .iter()
            .zip(other.amps.iter())
            .map(|(a, b)| c1 * a + c2 * b)
            .collect();
        self.with_amplitudes(amps)
    }
}

pub(crate) fn inner_raw(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// x̂ψ.
pub fn apply_x(psi: &WaveFunction) -> WaveFunction {
    let amps = psi
        .amps
        .iter()
        .zip(psi.grid.x())
        .map(|(a, &x)| a * x)
        .collect();
    psi.with_amplitudes(amps)
}

/// p̂ψ = (ħ/i)∂ψ/∂x computed spectrally.
pub fn apply_p(psi: &WaveFunction) -> WaveFunction {
    psi.with_amplitudes(psi.grid.apply_p_raw(&psi.amps))
}

/// Warning raised when a state has appreciable weight at the edges of the
/// position grid or of the momentum lattice, where periodic wrap-around
/// corrupts the spectral derivatives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WrapWarning {
    /// Norm fraction in the outermost two cells on each side of the x grid.
    pub x_edge_weight: f64,
    /// Norm fraction in the two outermost momentum modes on each side.
    pub p_edge_weight: f64,
}

impl fmt::Display for WrapWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "wrap-around risk: x-edge weight {:.3e}, p-edge weight {:.3e}",
            self.x_edge_weight, self.p_edge_weight
        )
    }
}

pub const WRAP_THRESHOLD: f64 = 1e-6;

/// Returns a warning if more than 1e-6 of the norm lies in the two
/// outermost cells (position or momentum).
pub fn wrap_warning(psi: &WaveFunction) -> Option<WrapWarning> {
    let n = psi.grid.n_points();
    let total: f64 = psi.amps.iter().map(|a| a.norm_sqr()).sum();
    if total == 0.0 {
        return None;
    }
    let edge_idx = [0usize, 1, n - 2, n - 1];
    let xw: f64 = edge_idx.iter().map(|&j| psi.amps[j].norm_sqr()).sum::<f64>() / total;
    let mut buf = psi.amps.clone();
    psi.grid.forward(&mut buf);
    let ktotal: f64 = buf.iter().map(|a| a.norm_sqr()).sum();
    let kedge = [n / 2 - 2, n / 2 - 1, n / 2, n / 2 + 1];
    let pw: f64 = kedge.iter().map(|&j| buf[j].norm_sqr()).sum::<f64>() / ktotal;
    if xw > WRAP_THRESHOLD || pw > WRAP_THRESHOLD {
        Some(WrapWarning {
            x_edge_weight: xw,
            p_edge_weight: pw,
        })
    } else {
        None
    }
}

/// Operator tags understood by [`expectation`] and [`correlation`].
#[derive(Clone, Copy, Debug)]
pub enum Operator<'a> {
    X,
    P,
    X2,
    P2,
    /// {x̂, p̂} = x̂p̂ + p̂x̂.
    SymXP,
    V(&'a Potential),
    VPrime(&'a Potential),
    /// x̂ V'(x̂).
    XVPrime(&'a Potential),
    /// (p̂V' + V'p̂)/2.
    PVPrimeSym(&'a Potential),
    /// αx̂ + βp̂ for complex α, β. Covers L = ax̂ + ibp̂ and A = p̂ − 2iħβx̂.
    Linear { x: Complex64, p: Complex64 },
}

/// Tag names without attached data, as they appear in config files.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatorTag {
    X,
    P,
    X2,
    P2,
    SymXP,
    V,
    VPrime,
    XVPrime,
    PVPrimeSym,
}

impl FromStr for OperatorTag {
    type Err = QsdError;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "x" => Self::X,
            "p" => Self::P,
            "x2" | "x^2" => Self::X2,
            "p2" | "p^2" => Self::P2,
            "sym_xp" => Self::SymXP,
            "V" | "v" => Self::V,
            "V'" | "dv" => Self::VPrime,
            "xV'" | "x_dv" => Self::XVPrime,
            "pV'_sym" | "p_dv_sym" => Self::PVPrimeSym,
            other => return Err(QsdError::UnknownTag(other.to_string())),
        })
    }
}

impl OperatorTag {
    pub fn with_potential(self, v: &Potential) -> Operator<'_> {
        match self {
            Self::X => Operator::X,
            Self::P => Operator::P,
            Self::X2 => Operator::X2,
            Self::P2 => Operator::P2,
            Self::SymXP => Operator::SymXP,
            Self::V => Operator::V(v),
            Self::VPrime => Operator::VPrime(v),
            Self::XVPrime => Operator::XVPrime(v),
            Self::PVPrimeSym => Operator::PVPrimeSym(v),
        }
    }
}

impl Operator<'_> {
    pub fn is_hermitian(&self) -> bool {
        match self {
            Operator::Linear { x, p } => x.im == 0.0 && p.im == 0.0,
            _ => true,
        }
    }

    /// Applies the operator to raw amplitudes.
    pub fn apply_raw(&self, grid: &Grid, psi: &[Complex64]) -> Vec<Complex64> {
        let xs = grid.x();
        let mul = |f: &dyn Fn(f64) -> f64| -> Vec<Complex64> {
            psi.iter().zip(xs).map(|(a, &x)| a * f(x)).collect()
        };
        match *self {
            Operator::X => mul(&|x| x),
            Operator::X2 => mul(&|x| x * x),
            Operator::P => grid.apply_p_raw(psi),
            Operator::P2 => {
                let mut buf = psi.to_vec();
                grid.apply_k_diagonal(&mut buf, |p| Complex64::new(p * p, 0.0));
                buf
            }
            Operator::SymXP => {
                let pp = grid.apply_p_raw(psi);
                let xpsi = mul(&|x| x);
                let pxp = grid.apply_p_raw(&xpsi);
                pp.iter()
                    .zip(xs)
                    .zip(pxp.iter())
                    .map(|((a, &x), b)| a * x + b)
                    .collect()
            }
            Operator::V(v) => mul(&|x| v.value(x)),
            Operator::VPrime(v) => mul(&|x| v.d1(x)),
            Operator::XVPrime(v) => mul(&|x| x * v.d1(x)),
            Operator::PVPrimeSym(v) => {
                let vp = mul(&|x| v.d1(x));
                let pvp = grid.apply_p_raw(&vp);
                let ppsi = grid.apply_p_raw(psi);
                pvp.iter()
                    .zip(ppsi.iter())
                    .zip(xs)
                    .map(|((a, b), &x)| 0.5 * (a + b * v.d1(x)))
                    .collect()
            }
            Operator::Linear { x: cx, p: cp } => {
                let ppsi = grid.apply_p_raw(psi);
                psi.iter()
                    .zip(xs)
                    .zip(ppsi.iter())
                    .map(|((a, &x), b)| cx * x * a + cp * b)
                    .collect()
            }
        }
    }

    pub fn apply(&self, psi: &WaveFunction) -> WaveFunction {
        psi.with_amplitudes(self.apply_raw(psi.grid(), psi.amplitudes()))
    }
}

/// ⟨ψ|Ô|ψ⟩.
pub fn expectation(psi: &WaveFunction, op: Operator<'_>) -> Complex64 {
    let o = op.apply_raw(&psi.grid, &psi.amps);
    inner_raw(&psi.amps, &o) * psi.grid.dx()
}

/// σ(B, C) = ⟨B†C⟩ − ⟨B⟩*⟨C⟩.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorCorrelation {
    pub value: Complex64,
}

pub fn correlation(psi: &WaveFunction, b: Operator<'_>, c: Operator<'_>) -> OperatorCorrelation {
    let dx = psi.grid.dx();
    let bpsi = b.apply_raw(&psi.grid, &psi.amps);
    let cpsi = c.apply_raw(&psi.grid, &psi.amps);
    let bc = inner_raw(&bpsi, &cpsi) * dx;
    let eb = inner_raw(&psi.amps, &bpsi) * dx;
    let ec = inner_raw(&psi.amps, &cpsi) * dx;
    OperatorCorrelation {
        value: bc - eb.conj() * ec,
    }
}

/// Symmetrized position-momentum correlation R = Re σ(x, p).
pub fn symmetric_xp_correlation(psi: &WaveFunction) -> f64 {
    let s = correlation(psi, Operator::X, Operator::P).value;
    let t = correlation(psi, Operator::P, Operator::X).value;
    0.5 * (s + t).re
}

/// Fourth-order centered finite-difference momentum operator; reference for
/// the spectral derivative.
pub fn apply_p_fd4(psi: &WaveFunction) -> WaveFunction {
    let n = psi.grid.n_points();
    let h = psi.grid.dx();
    let a = &psi.amps;
    let hbar = psi.grid.hbar();
    let out = (0..n)
        .map(|j| {
            let m2 = a[(j + n - 2) % n];
            let m1 = a[(j + n - 1) % n];
            let p1 = a[(j + 1) % n];
            let p2 = a[(j + 2) % n];
            let d = (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h);
            -I * hbar * d
        })
        .collect();
    psi.with_amplitudes(out)
}
