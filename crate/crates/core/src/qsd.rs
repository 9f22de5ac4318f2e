//! Stochastic integration of the nonlinear Ito equation for a single
//! normalized trajectory,
//!
//! dψ = [−(i/ħ)H + ⟨L⟩*L − ½L†L − ½|⟨L⟩|²]ψ dt + (L − ⟨L⟩)ψ dξ,
//!
//! driven by complex Wiener increments dξ = (dW₁ + i dW₂)/√2.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{QsdError, Result};
use crate::gaussian::{self, StationaryParams};
use crate::hilbert::{inner_raw, wrap_warning, Grid, WaveFunction, WrapWarning};
use crate::localization;
use crate::model::{Discretized, LindbladModel};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Seeded source of complex Wiener increments.
#[derive(Clone, Debug)]
pub struct NoiseProcess {
    seed: u64,
    rng: ChaCha8Rng,
}

impl NoiseProcess {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// dξ with M[dξ dξ*] = dt, M[dξ²] = 0.
    pub fn increment(&mut self, dt: f64) -> Complex64 {
        let s = (0.5 * dt).sqrt();
        let w1: f64 = StandardNormal.sample(&mut self.rng);
        let w2: f64 = StandardNormal.sample(&mut self.rng);
        Complex64::new(s * w1, s * w2)
    }
}

/// First and second moments of a pure state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentState {
    pub x_mean: f64,
    pub p_mean: f64,
    pub var_x: f64,
    pub var_p: f64,
    /// Symmetrized correlation R = ½⟨{x̂,p̂}⟩ − ⟨x⟩⟨p⟩.
    pub r: f64,
}

impl MomentState {
    pub fn of(psi: &WaveFunction) -> Self {
        let g = psi.grid();
        let a = psi.amplitudes();
        let dx = g.dx();
        let x = g.x();
        let mut norm = 0.0;
        let mut sx = 0.0;
        let mut sx2 = 0.0;
        for (v, &xv) in a.iter().zip(x) {
            let w = v.norm_sqr();
            norm += w;
            sx += w * xv;
            sx2 += w * xv * xv;
        }
        let mut k = a.to_vec();
        g.forward(&mut k);
        let mut knorm = 0.0;
        let mut sp = 0.0;
        let mut sp2 = 0.0;
        for (v, &pv) in k.iter().zip(g.p()) {
            let w = v.norm_sqr();
            knorm += w;
            sp += w * pv;
            sp2 += w * pv * pv;
        }
        for (v, &pv) in k.iter_mut().zip(g.p()) {
            *v *= pv;
        }
        g.inverse(&mut k);
        let xp: Complex64 = a
            .iter()
            .zip(x)
            .zip(k.iter())
            .map(|((v, &xv), w)| v.conj() * xv * w)
            .sum();
        let x_mean = sx / norm;
        let p_mean = sp / knorm;
        let n = norm * dx;
        Self {
            x_mean,
            p_mean,
            var_x: sx2 / norm - x_mean * x_mean,
            var_p: sp2 / knorm - p_mean * p_mean,
            r: xp.re * dx / n - x_mean * p_mean,
        }
    }

    /// (Δx)²(Δp)² − R², bounded below by ħ²/4.
    pub fn uncertainty(&self) -> f64 {
        self.var_x * self.var_p - self.r * self.r
    }
}

/// Time derivatives of the five moments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentDerivative {
    pub dx_mean: f64,
    pub dp_mean: f64,
    pub dvar_x: f64,
    pub dvar_p: f64,
    pub dr: f64,
}

/// Integration scheme for trajectories.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Explicit Euler–Maruyama on the full state, then renormalization.
    /// Needs a²x_max²dt ≪ 1 on the whole grid, so it is mainly useful for
    /// short runs and single-step checks.
    EulerMaruyama,
    /// Exponential splitting with the noise increment shared by all factors
    /// and the centres re-measured before each one. Weak order one, but
    /// stable for strong coupling and long runs.
    #[default]
    SplitExponential,
}

/// Extra information about a single step.
#[derive(Clone, Copy, Debug)]
pub struct StepInfo {
    /// ‖ψ + dψ‖² before renormalization.
    pub norm_sq_pre: f64,
    /// Zero-mean O(dt) part of the norm change, ⟨ΔL†ΔL⟩(|dξ|² − dt).
    pub martingale: f64,
}

/// Mean of a coordinate under the weights |v|².
fn mean_of(v: &[Complex64], coord: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (vj, &c) in v.iter().zip(coord) {
        let w = vj.norm_sqr();
        num += w * c;
        den += w;
    }
    num / den
}

/// Multiplies v[j] by exp(c₂X_j² + c₁X_j) with X_j = X₀ + j h, using the
/// recurrence F_{j+1} = F_j R_j, R_{j+1} = R_j exp(2c₂h²). Falls back to
/// direct evaluation when the exponent range could overflow or underflow.
fn apply_chirp(v: &mut [Complex64], x0: f64, h: f64, c2: f64, c1: Complex64) {
    let len = v.len();
    if len == 0 {
        return;
    }
    let x_end = x0 + (len - 1) as f64 * h;
    let reach = x0.abs().max(x_end.abs());
    let expo = |x: f64| c1 * x + c2 * x * x;
    if c2.abs() * reach * reach + c1.re.abs() * reach > 300.0 {
        for (j, vj) in v.iter_mut().enumerate() {
            *vj *= expo(x0 + j as f64 * h).exp();
        }
        return;
    }
    let mut f = expo(x0).exp();
    let mut r = (c2 * (2.0 * x0 * h + h * h) + c1 * h).exp();
    let s = (2.0 * c2 * h * h).exp();
    for vj in v.iter_mut() {
        *vj *= f;
        f *= r;
        r *= s;
    }
}

/// Phase tables of the split scheme for a fixed step size.
#[derive(Clone, Debug)]
pub struct SplitCache {
    dt: f64,
    /// exp(−ip²dt/2mħ) in FFT order.
    kinetic: Vec<Complex64>,
    /// exp(−iV dt/2ħ) on the grid.
    potential_half: Vec<Complex64>,
}

impl SplitCache {
    pub fn new(stepper: &Stepper, dt: f64) -> Self {
        let md = &stepper.disc.model;
        let hbar = md.hbar;
        let kinetic = stepper
            .disc
            .grid
            .p()
            .iter()
            .map(|&p| Complex64::from_polar(1.0, -p * p * dt / (2.0 * md.m * hbar)))
            .collect();
        let potential_half = stepper
            .disc
            .v
            .iter()
            .map(|&v| Complex64::from_polar(1.0, -0.5 * v * dt / hbar))
            .collect();
        Self {
            dt,
            kinetic,
            potential_half,
        }
    }
}

/// Model bound to a grid and a scheme.
#[derive(Clone, Debug)]
pub struct Stepper {
    disc: Discretized,
    scheme: Scheme,
}

impl Stepper {
    pub fn new(model: &LindbladModel, grid: &Grid, scheme: Scheme) -> Result<Self> {
        if model.hbar != grid.hbar() {
            return Err(QsdError::GridMismatch);
        }
        Ok(Self {
            disc: model.on_grid(grid),
            scheme,
        })
    }

    pub fn model(&self) -> &LindbladModel {
        &self.disc.model
    }
    pub fn grid(&self) -> &Grid {
        &self.disc.grid
    }
    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn step(&self, psi: &WaveFunction, dt: f64, dxi: Complex64) -> Result<WaveFunction> {
        self.step_with_info(psi, dt, dxi).map(|(w, _)| w)
    }

    pub fn step_with_info(
        &self,
        psi: &WaveFunction,
        dt: f64,
        dxi: Complex64,
    ) -> Result<(WaveFunction, StepInfo)> {
        self.step_cached(psi, dt, dxi, None)
    }

    /// Step reusing the dt-dependent phase tables of a [`SplitCache`].
    pub fn step_cached(
        &self,
        psi: &WaveFunction,
        dt: f64,
        dxi: Complex64,
        cache: Option<&SplitCache>,
    ) -> Result<(WaveFunction, StepInfo)> {
        if psi.grid() != &self.disc.grid {
            return Err(QsdError::GridMismatch);
        }
        let (mut out, info) = match self.scheme {
            Scheme::EulerMaruyama => self.euler_raw(psi.amplitudes(), dt, dxi),
            Scheme::SplitExponential => self.split_raw(psi.amplitudes(), dt, dxi, cache),
        };
        if !(info.norm_sq_pre.is_finite()) || info.norm_sq_pre < 1e-12 {
            return Err(QsdError::NormCollapse {
                norm: info.norm_sq_pre.sqrt(),
            });
        }
        let s = 1.0 / info.norm_sq_pre.sqrt();
        for v in out.iter_mut() {
            *v *= s;
        }
        Ok((psi.with_amplitudes(out), info))
    }

    fn euler_raw(&self, psi: &[Complex64], dt: f64, dxi: Complex64) -> (Vec<Complex64>, StepInfo) {
        let disc = &self.disc;
        let dx = disc.grid.dx();
        let hbar = disc.model.hbar;
        let act = disc.actions(psi);
        let norm = inner_raw(psi, psi).re * dx;
        let ell = inner_raw(psi, &act.l) * dx / norm;
        let ldl = inner_raw(psi, &act.ldl).re * dx / norm;
        let mut out = Vec::with_capacity(psi.len());
        let cst = -0.5 * ell.norm_sqr();
        for j in 0..psi.len() {
            let drift = -I / hbar * act.h[j] + ell.conj() * act.l[j] - 0.5 * act.ldl[j] + cst * psi[j];
            let noise = (act.l[j] - ell * psi[j]) * dxi;
            out.push(psi[j] + drift * dt + noise);
        }
        let norm_sq_pre = inner_raw(&out, &out).re * dx;
        // ⟨ΔL†ΔL⟩ = ⟨L†L⟩ − |⟨L⟩|².
        let dldl = ldl - ell.norm_sqr();
        let info = StepInfo {
            norm_sq_pre,
            martingale: dldl * (dxi.norm_sqr() - dt),
        };
        (out, info)
    }

    fn split_raw(
        &self,
        psi: &[Complex64],
        dt: f64,
        dxi: Complex64,
        cache: Option<&SplitCache>,
    ) -> (Vec<Complex64>, StepInfo) {
        let disc = &self.disc;
        let g = &disc.grid;
        let md = &disc.model;
        let hbar = md.hbar;
        let (a, b) = (md.a, md.b);
        let x = g.x();
        let p = g.p();
        let n = psi.len();
        let dx = g.dx();

        let norm = inner_raw(psi, psi).re * dx;
        let mut k = psi.to_vec();
        g.forward(&mut k);
        let knorm: f64 = k.iter().map(|v| v.norm_sqr()).sum();
        let p_bar = k.iter().zip(p).map(|(v, &pv)| v.norm_sqr() * pv).sum::<f64>() / knorm;
        let x_bar = psi.iter().zip(x).map(|(v, &xv)| v.norm_sqr() * xv).sum::<f64>() * dx / norm;
        let dz = md.phase_factor() * dxi;

        // Dilation −(i/2)ab{X,P} and any non-standard anticommutator part
        // −(i/ħ)c'{x,p}, applied as one explicit Euler step.
        let c_extra = md.c - 0.5 * hbar * a * b;
        let mut phi = psi.to_vec();
        if a * b != 0.0 || c_extra != 0.0 {
            let mut pk = k.clone();
            for (v, &pv) in pk.iter_mut().zip(p) {
                *v *= pv;
            }
            g.inverse(&mut pk);
            for j in 0..n {
                let xd = x[j] - x_bar;
                // {X,P}ψ = 2X(p − p̄)ψ − iħψ, from [p, X] = −iħ.
                let xp_sym = 2.0 * xd * (pk[j] - p_bar * psi[j]) - I * hbar * psi[j];
                let mut gen = -0.5 * I * (a * b) * xp_sym;
                if c_extra != 0.0 {
                    // {x,p}ψ = {X,P}ψ + 2x̄Pψ + 2p̄Xψ + 2x̄p̄ψ.
                    let full = xp_sym + 2.0 * x_bar * (pk[j] - p_bar * psi[j])
                        + 2.0 * p_bar * xd * psi[j]
                        + 2.0 * x_bar * p_bar * psi[j];
                    gen += -I / hbar * c_extra * full;
                }
                phi[j] += gen * dt;
            }
        }

        let owned;
        let cache = match cache {
            Some(c) if c.dt == dt && c.kinetic.len() == n => c,
            _ => {
                owned = SplitCache::new(self, dt);
                &owned
            }
        };
        // x-part: exp(½[(−iV/ħ − 2iab p̄X − ½a²X²)dt + aX dζ]), with the
        // potential phase cached and the rest a Gaussian chirp in X. The
        // centres are re-measured before every factor; keeping the values
        // from the start of the step adds a spurious O(dt) friction.
        let c2x = -0.25 * a * a * dt;
        let half_x = |v: &mut [Complex64], xc: f64, pc: f64| {
            for (vj, ph) in v.iter_mut().zip(&cache.potential_half) {
                *vj *= ph;
            }
            let c1x = 0.5 * (Complex64::new(0.0, -2.0 * (a * b) * pc * dt) + a * dz);
            apply_chirp(v, x[0] - xc, dx, c2x, c1x);
        };
        half_x(&mut phi, x_bar, p_bar);
        g.forward(&mut phi);
        // p-part: exp((−ip²/2mħ − ½b²P²)dt + ibP dζ), a chirp in P on each
        // of the two monotone halves of the FFT-ordered momentum lattice.
        if b != 0.0 {
            let pc = mean_of(&phi, p);
            let dp = g.dp();
            let c2p = -0.5 * b * b * dt;
            let c1p = I * b * dz;
            let (lo, hi) = phi.split_at_mut(n / 2);
            apply_chirp(lo, p[0] - pc, dp, c2p, c1p);
            apply_chirp(hi, p[n / 2] - pc, dp, c2p, c1p);
        }
        for (v, kin) in phi.iter_mut().zip(&cache.kinetic) {
            *v *= kin;
        }
        let pc = if a * b != 0.0 { mean_of(&phi, p) } else { 0.0 };
        g.inverse(&mut phi);
        let xc = if a != 0.0 { mean_of(&phi, x) } else { 0.0 };
        half_x(&mut phi, xc, pc);
        let norm_sq_pre = inner_raw(&phi, &phi).re * dx;
        (
            phi,
            StepInfo {
                norm_sq_pre,
                martingale: 0.0,
            },
        )
    }
}

/// One explicit Euler–Maruyama step followed by renormalization.
pub fn ito_step(model: &LindbladModel, psi: &WaveFunction, dt: f64, dxi: Complex64) -> Result<WaveFunction> {
    Stepper::new(model, psi.grid(), Scheme::EulerMaruyama)?.step(psi, dt, dxi)
}

/// Default step. Euler–Maruyama uses min(0.05ħ/E_max, 0.05τ, 0.05/Γ_tail),
/// where E_max includes the kinetic scale π²ħ²/(2m dx²) and the potential
/// range on the grid and Γ_tail = a²x_max² + b²p_max² bounds the growth of
/// far tails under the multiplicative noise. The split scheme uses 0.05τ.
pub fn default_dt(model: &LindbladModel, grid: &Grid, scheme: Scheme) -> f64 {
    let disc = model.on_grid(grid);
    let tau = gaussian::solve_beta(model, 0.0)
        .ok()
        .map(|sp| localization::estimate_rates(&sp, model, None).tau);
    let e_max = disc.kinetic_scale() + disc.potential_range();
    let x_abs = grid.x_min().abs().max(grid.x_max().abs());
    let tail = (model.a * x_abs).powi(2) + (model.b * grid.p_max()).powi(2);
    let mut em = 0.05 * model.hbar / e_max;
    if tail > 0.0 {
        em = em.min(0.05 / tail);
    }
    match (scheme, tau) {
        (Scheme::EulerMaruyama, Some(t)) => em.min(0.05 * t),
        (Scheme::EulerMaruyama, None) => em,
        (Scheme::SplitExponential, Some(t)) => 0.05 * t,
        (Scheme::SplitExponential, None) => 10.0 * em,
    }
}

/// Time series produced by [`run_trajectory`].
#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub times: Vec<f64>,
    pub moments: Vec<MomentState>,
    /// (ΔA)² at each record time; empty when no stationary parameters exist.
    pub delta_a2: Vec<f64>,
    pub snapshots: Vec<(f64, WaveFunction)>,
    pub final_state: WaveFunction,
    /// First wrap-around warning per kind, with its time.
    pub warnings: Vec<(f64, WrapWarning)>,
}

/// Options for [`run_trajectory_with`].
#[derive(Clone, Debug)]
pub struct TrajectoryConfig {
    pub t: f64,
    pub dt: f64,
    pub record_every: usize,
    pub scheme: Scheme,
    /// Times at which to store full wavefunctions (rounded to the step lattice).
    pub snapshot_times: Vec<f64>,
    /// Shape parameters for (ΔA)²; solved from the model when `None`.
    pub params: Option<StationaryParams>,
    /// Check for wrap-around every this many steps (0 disables).
    pub wrap_check_every: usize,
}

impl TrajectoryConfig {
    pub fn new(t: f64, dt: f64, record_every: usize) -> Self {
        Self {
            t,
            dt,
            record_every,
            scheme: Scheme::SplitExponential,
            snapshot_times: Vec::new(),
            params: None,
            wrap_check_every: 100,
        }
    }

    pub fn scheme(mut self, s: Scheme) -> Self {
        self.scheme = s;
        self
    }

    pub fn snapshots(mut self, times: Vec<f64>) -> Self {
        self.snapshot_times = times;
        self
    }

    pub fn params(mut self, p: StationaryParams) -> Self {
        self.params = Some(p);
        self
    }

    /// Number of steps and the effective step size.
    pub fn steps(&self) -> (usize, f64) {
        if self.t <= 0.0 {
            return (0, self.dt);
        }
        let n = (self.t / self.dt - 1e-9).ceil().max(1.0) as usize;
        (n, self.t / n as f64)
    }

    /// The time lattice on which moments are recorded.
    pub fn record_times(&self) -> Vec<f64> {
        let (n, h) = self.steps();
        let every = self.record_every.max(1);
        let mut out: Vec<f64> = (0..=n).filter(|s| s % every == 0).map(|s| s as f64 * h).collect();
        if n % every != 0 {
            out.push(n as f64 * h);
        }
        out
    }
}

/// Runs one trajectory with the default (split) scheme.
pub fn run_trajectory(
    model: &LindbladModel,
    psi0: &WaveFunction,
    t: f64,
    dt: f64,
    noise: NoiseProcess,
    record_every: usize,
) -> Result<TrajectoryRecord> {
    run_trajectory_with(model, psi0, &TrajectoryConfig::new(t, dt, record_every), noise)
}

pub fn run_trajectory_with(
    model: &LindbladModel,
    psi0: &WaveFunction,
    cfg: &TrajectoryConfig,
    noise: NoiseProcess,
) -> Result<TrajectoryRecord> {
    let stepper = Stepper::new(model, psi0.grid(), cfg.scheme)?;
    run_with_stepper(&stepper, psi0, cfg, noise)
}

pub fn run_with_stepper(
    stepper: &Stepper,
    psi0: &WaveFunction,
    cfg: &TrajectoryConfig,
    mut noise: NoiseProcess,
) -> Result<TrajectoryRecord> {
    let model = stepper.model();
    let params = match cfg.params {
        Some(p) => Some(p),
        None => {
            let x0 = MomentState::of(psi0).x_mean;
            gaussian::solve_beta(model, x0).ok()
        }
    };
    let (steps, h) = cfg.steps();
    let every = cfg.record_every.max(1);
    let snap_steps: Vec<usize> = cfg
        .snapshot_times
        .iter()
        .map(|&ts| ((ts / h).round().max(0.0) as usize).min(steps))
        .collect();

    let mut psi = psi0.clone().normalized();
    let mut rec = TrajectoryRecord {
        seed: noise.seed(),
        times: Vec::new(),
        moments: Vec::new(),
        delta_a2: Vec::new(),
        snapshots: Vec::new(),
        final_state: psi.clone(),
        warnings: Vec::new(),
    };
    let record = |rec: &mut TrajectoryRecord, t: f64, psi: &WaveFunction| {
        rec.times.push(t);
        rec.moments.push(MomentState::of(psi));
        if let Some(p) = &params {
            rec.delta_a2.push(localization::delta_a2(psi, p, model.hbar));
        }
    };
    let mut wrap_seen = false;
    let mut check_wrap = |rec: &mut TrajectoryRecord, t: f64, psi: &WaveFunction| {
        if !wrap_seen {
            if let Some(w) = wrap_warning(psi) {
                rec.warnings.push((t, w));
                wrap_seen = true;
            }
        }
    };
    record(&mut rec, 0.0, &psi);
    if cfg.wrap_check_every > 0 {
        check_wrap(&mut rec, 0.0, &psi);
    }
    for (k, &s) in snap_steps.iter().enumerate() {
        if s == 0 {
            rec.snapshots.push((cfg.snapshot_times[k], psi.clone()));
        }
    }
    let cache = (stepper.scheme() == Scheme::SplitExponential).then(|| SplitCache::new(stepper, h));
    for s in 1..=steps {
        let dxi = noise.increment(h);
        psi = stepper.step_cached(&psi, h, dxi, cache.as_ref())?.0;
        let t = s as f64 * h;
        if s % every == 0 || s == steps {
            record(&mut rec, t, &psi);
        }
        if cfg.wrap_check_every > 0 && s % cfg.wrap_check_every == 0 {
            check_wrap(&mut rec, t, &psi);
        }
        for (k, &ss) in snap_steps.iter().enumerate() {
            if ss == s {
                rec.snapshots.push((cfg.snapshot_times[k], psi.clone()));
            }
        }
    }
    rec.final_state = psi;
    Ok(rec)
}

/// Analytic drift of the moments for the exact grid state (general c).
///
/// Potential-dependent terms use the exact grid expectations of V',
/// x V' and the symmetrized p V'.
pub fn analytic_moment_drift(model: &LindbladModel, psi: &WaveFunction) -> MomentDerivative {
    use crate::hilbert::{expectation, Operator};
    let m = MomentState::of(psi);
    let v = &model.potential;
    let e_v1 = expectation(psi, Operator::VPrime(v)).re;
    let e_xv1 = expectation(psi, Operator::XVPrime(v)).re;
    let e_pv1 = expectation(psi, Operator::PVPrimeSym(v)).re;
    let cov_x_v1 = e_xv1 - m.x_mean * e_v1;
    let cov_p_v1 = e_pv1 - m.p_mean * e_v1;
    let (a, b, c, hbar, mass) = (model.a, model.b, model.c, model.hbar, model.m);
    let hab = hbar * a * b;
    // |σ(x,L)|², |σ(p,L)|², Re σ(x,L)σ(p,L)*.
    let sxl2 = (a * m.var_x - 0.5 * hbar * b).powi(2) + (b * m.r).powi(2);
    let spl2 = (a * m.r).powi(2) + (b * m.var_p - 0.5 * hbar * a).powi(2);
    let cross = a * a * m.r * m.var_x - hab * m.r + b * b * m.r * m.var_p;
    MomentDerivative {
        dx_mean: m.p_mean / mass + (2.0 * c - hab) * m.x_mean,
        dp_mean: -e_v1 - (2.0 * c + hab) * m.p_mean,
        dvar_x: 2.0 * m.r / mass + (4.0 * c - 2.0 * hab) * m.var_x + hbar * hbar * b * b - 2.0 * sxl2,
        dvar_p: -2.0 * cov_p_v1 - (4.0 * c + 2.0 * hab) * m.var_p + hbar * hbar * a * a - 2.0 * spl2,
        dr: m.var_p / mass - cov_x_v1 - 2.0 * hab * m.r - 2.0 * cross,
    }
}

/// Single-step Monte Carlo estimate compared with the analytic drift.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MomentDriftReport {
    pub n_samples: usize,
    pub dt: f64,
    /// Order: ⟨x⟩, ⟨p⟩, (Δx)², (Δp)², R.
    pub estimate: [f64; 5],
    pub analytic: [f64; 5],
    pub std_error: [f64; 5],
    pub z: [f64; 5],
}

impl MomentDriftReport {
    pub fn max_abs_z(&self) -> f64 {
        self.z.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }
}

pub fn moment_drift_check(model: &LindbladModel, psi: &WaveFunction, n_samples: usize, dt: f64) -> Result<MomentDriftReport> {
    moment_drift_check_seeded(model, psi, n_samples, dt, 0x5eed_0001)
}

pub fn moment_drift_check_seeded(
    model: &LindbladModel,
    psi: &WaveFunction,
    n_samples: usize,
    dt: f64,
    seed: u64,
) -> Result<MomentDriftReport> {
    if n_samples < 2 {
        return Err(QsdError::InvalidArgument("need at least two samples".into()));
    }
    let stepper = Stepper::new(model, psi.grid(), Scheme::EulerMaruyama)?;
    let psi = psi.clone().normalized();
    let m0 = MomentState::of(&psi);
    let an = analytic_moment_drift(model, &psi);
    let mut noise = NoiseProcess::new(seed);
    let mut sum = [0.0f64; 5];
    let mut sum2 = [0.0f64; 5];
    for _ in 0..n_samples {
        let out = stepper.step(&psi, dt, noise.increment(dt))?;
        let m1 = MomentState::of(&out);
        let d = [
            (m1.x_mean - m0.x_mean) / dt,
            (m1.p_mean - m0.p_mean) / dt,
            (m1.var_x - m0.var_x) / dt,
            (m1.var_p - m0.var_p) / dt,
            (m1.r - m0.r) / dt,
        ];
        for k in 0..5 {
            sum[k] += d[k];
            sum2[k] += d[k] * d[k];
        }
    }
    let n = n_samples as f64;
    let analytic = [an.dx_mean, an.dp_mean, an.dvar_x, an.dvar_p, an.dr];
    let mut estimate = [0.0; 5];
    let mut std_error = [0.0; 5];
    let mut z = [0.0; 5];
    for k in 0..5 {
        estimate[k] = sum[k] / n;
        let var = (sum2[k] / n - estimate[k] * estimate[k]).max(0.0) * n / (n - 1.0);
        std_error[k] = (var / n).sqrt();
        z[k] = if std_error[k] > 0.0 {
            (estimate[k] - analytic[k]) / std_error[k]
        } else if (estimate[k] - analytic[k]).abs() < 1e-9 * (1.0 + analytic[k].abs()) {
            0.0
        } else {
            f64::INFINITY
        };
    }
    Ok(MomentDriftReport {
        n_samples,
        dt,
        estimate,
        analytic,
        std_error,
        z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Potential;

    #[test]
    fn noise_is_deterministic_per_seed() {
        let mut a = NoiseProcess::new(7);
        let mut b = NoiseProcess::new(7);
        let mut c = NoiseProcess::new(8);
        let xa: Vec<_> = (0..5).map(|_| a.increment(0.01)).collect();
        let xb: Vec<_> = (0..5).map(|_| b.increment(0.01)).collect();
        let xc: Vec<_> = (0..5).map(|_| c.increment(0.01)).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn noise_statistics() {
        let mut nz = NoiseProcess::new(1);
        let dt = 0.01;
        let n = 200_000;
        let (mut m, mut mm, mut m2) = (Complex64::new(0.0, 0.0), 0.0, Complex64::new(0.0, 0.0));
        for _ in 0..n {
            let d = nz.increment(dt);
            m += d;
            mm += d.norm_sqr();
            m2 += d * d;
        }
        let nf = n as f64;
        // Standard errors: sqrt(dt/n) for the mean, dt/sqrt(n) for the others.
        assert!((m / nf).norm() < 4.0 * (dt / nf).sqrt());
        assert!((mm / nf - dt).abs() < 4.0 * dt / nf.sqrt());
        assert!((m2 / nf).norm() < 4.0 * dt / nf.sqrt());
    }

    #[test]
    fn zero_duration_records_initial_state_only() {
        let g = Grid::symmetric(64, 10.0, 1.0).unwrap();
        let model = LindbladModel::standard(1.0, 0.0, 1.0, 1.0, Potential::Free).unwrap();
        let psi = WaveFunction::gaussian(&g, 0.0, 0.0, 0.7);
        let rec = run_trajectory(&model, &psi, 0.0, 0.01, NoiseProcess::new(3), 1).unwrap();
        assert_eq!(rec.times, vec![0.0]);
        assert_eq!(rec.moments.len(), 1);
    }

    #[test]
    fn record_lattice_includes_final_time() {
        let cfg = TrajectoryConfig::new(1.0, 0.1, 3);
        let t = cfg.record_times();
        assert_eq!(t.len(), 5);
        assert!((t[4] - 1.0).abs() < 1e-12);
    }
}
