//! The named experiments. Each one computes its results and returns them
//! as [`Artifacts`]; nothing here touches the filesystem.

use qsd_core::ensemble::{centered_edges, exponents_from_moments, reconstruct_from, thermal_exponents_closed_form};
use qsd_core::fokker_planck::{drift_orbit, evolve_fp_observed, l1_distance, maxwell_boltzmann, relaxation_rate, stable_dt};
use qsd_core::gaussian::stationary_residuals;
use qsd_core::histories::{tiling, FpComparison, FpInitial};
use qsd_core::localization::{da2_drift_expanded, estimate_rates, sample_admissible};
use qsd_core::qsd::default_dt;
use qsd_core::{
    coefficients, coherent_state, da2_drift, history_probabilities_vs_fp, master, run_ensemble, solve_beta,
    trace_distance, verify_localization, Complex64, DensityMatrix, DeviationCoords, EnsembleResult, EnsembleSpec,
    Grid, LindbladModel, PhaseSpaceField, PhaseSpaceHistogram, PhaseSpaceLattice, StationaryParams, WaveFunction,
};
use rand::SeedableRng;
use serde_json::json;

use crate::config::{ExperimentConfig, ExperimentKind, InitialState};
use crate::error::CliError;
use crate::report::{Assertion, Artifacts};

/// Shared setup: model, grid and stationary Gaussian parameters.
struct Setup {
    model: LindbladModel,
    grid: Grid,
    sp: StationaryParams,
    tau: f64,
}

impl Setup {
    fn new(cfg: &ExperimentConfig) -> Result<Self, CliError> {
        let model = cfg.build_model()?;
        let grid = cfg.build_grid()?;
        let sp = solve_beta(&model, 0.0)?;
        let tau = estimate_rates(&sp, &model, None).tau;
        Ok(Self { model, grid, sp, tau })
    }

    fn dt(&self, cfg: &ExperimentConfig) -> f64 {
        cfg.integration
            .dt
            .unwrap_or_else(|| default_dt(&self.model, &self.grid, cfg.integration.scheme))
    }

    fn initial(&self, cfg: &ExperimentConfig) -> WaveFunction {
        let h = self.model.hbar;
        match cfg.initial.state() {
            InitialState::Coherent { q, p } => coherent_state(&self.grid, &self.sp, q, p, h),
            InitialState::Cat { separation, center, p } => {
                let one = Complex64::new(1.0, 0.0);
                coherent_state(&self.grid, &self.sp, center - separation / 2.0, p, h)
                    .combine(one, &coherent_state(&self.grid, &self.sp, center + separation / 2.0, p, h), one)
                    .normalized()
            }
            InitialState::Gaussian { q, p, var_x } => WaveFunction::gaussian(&self.grid, q, p, var_x),
        }
    }

    fn spec(&self, cfg: &ExperimentConfig, dt: f64) -> EnsembleSpec {
        let mut spec = EnsembleSpec::new(self.model.clone(), self.initial(cfg), cfg.integration.n_traj, cfg.integration.t, dt);
        spec.base_seed = cfg.integration.base_seed;
        spec.scheme = cfg.integration.scheme;
        spec.params = Some(self.sp);
        spec.record_every = cfg.integration.record_every.unwrap_or_else(|| record_every_for(cfg.integration.t, dt, 100));
        spec
    }
}

/// Step stride giving about `rows` records over `t`.
fn record_every_for(t: f64, dt: f64, rows: usize) -> usize {
    ((t / dt / rows as f64).round() as usize).max(1)
}

/// Weighted phase-space points describing the initial state classically.
fn initial_points(cfg: &ExperimentConfig) -> Vec<(f64, f64, f64)> {
    match cfg.initial.state() {
        InitialState::Coherent { q, p } | InitialState::Gaussian { q, p, .. } => vec![(1.0, q, p)],
        InitialState::Cat { separation, center, p } => {
            vec![(0.5, center - separation / 2.0, p), (0.5, center + separation / 2.0, p)]
        }
    }
}

fn points_field(lattice: &PhaseSpaceLattice, points: &[(f64, f64, f64)]) -> Result<PhaseSpaceField, CliError> {
    let mut f = PhaseSpaceField::zeros(lattice.clone());
    for &(w, q, p) in points {
        f.add_scaled(&PhaseSpaceField::impulse(lattice.clone(), q, p)?, w);
    }
    Ok(f)
}

fn mean_window(ens: &EnsembleResult, from: f64, f: impl Fn(&qsd_core::TrajectoryRecord, usize) -> f64) -> f64 {
    let series = ens.mean_series(f);
    let vals: Vec<f64> = ens.times.iter().zip(&series).filter(|(t, _)| **t >= from).map(|(_, v)| *v).collect();
    vals.iter().sum::<f64>() / vals.len() as f64
}

fn fit_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx
}

pub fn run(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    match cfg.experiment {
        ExperimentKind::Stationary => stationary(cfg),
        ExperimentKind::Localization => localization(cfg),
        ExperimentKind::Duality => duality(cfg),
        ExperimentKind::FokkerPlanck => fokker_planck(cfg),
        ExperimentKind::Thermalization => thermalization(cfg),
        ExperimentKind::Histories => histories(cfg),
        ExperimentKind::Rates => rates(cfg),
    }
}

fn stationary(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let s = Setup::new(cfg)?;
    let dt = s.dt(cfg);
    let ens = run_ensemble(&s.spec(cfg, dt))?;
    let mut out = Artifacts::new();
    out.column("t", ens.times.clone());
    out.column("x_mean", ens.mean_series(|r, k| r.moments[k].x_mean));
    out.column("p_mean", ens.mean_series(|r, k| r.moments[k].p_mean));
    out.column("var_x", ens.mean_series(|r, k| r.moments[k].var_x));
    out.column("var_p", ens.mean_series(|r, k| r.moments[k].var_p));
    out.column("r", ens.mean_series(|r, k| r.moments[k].r));
    out.column("delta_a2", ens.mean_series(|r, k| r.delta_a2[k]));

    let h = s.model.hbar;
    let residual = stationary_residuals(&s.model, &s.sp).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    out.assert(Assertion::at_most(
        "stationary_residual",
        "stationary moment equations vanish at the solver's Gaussian",
        residual,
        1e-8,
    ));
    out.assert(Assertion::close(
        "minimum_uncertainty",
        "sigma_x2 * sigma_p2 - r0^2 = hbar^2 / 4",
        s.sp.sigma_x2 * s.sp.sigma_p2 - s.sp.r0 * s.sp.r0,
        0.25 * h * h,
        1e-10,
    ));
    // Late half of the run, when trajectories have reached the fixed point.
    let from = 0.5 * cfg.integration.t;
    let scale = s.sp.sigma_x() * s.sp.sigma_p();
    let vx = mean_window(&ens, from, |r, k| r.moments[k].var_x);
    let vp = mean_window(&ens, from, |r, k| r.moments[k].var_p);
    let rr = mean_window(&ens, from, |r, k| r.moments[k].r);
    out.assert(Assertion::close(
        "ensemble_var_x",
        "trajectory position variance matches sigma_x2 within 10%",
        vx,
        s.sp.sigma_x2,
        0.1 * s.sp.sigma_x2,
    ));
    out.assert(Assertion::close(
        "ensemble_var_p",
        "trajectory momentum variance matches sigma_p2 within 10%",
        vp,
        s.sp.sigma_p2,
        0.1 * s.sp.sigma_p2,
    ));
    out.assert(Assertion::close(
        "ensemble_r",
        "trajectory x-p correlation matches r0 within 10% of sigma_x sigma_p",
        rr,
        s.sp.r0,
        0.1 * scale,
    ));
    out.details = json!({
        "sigma_x2": s.sp.sigma_x2,
        "sigma_p2": s.sp.sigma_p2,
        "r0": s.sp.r0,
        "beta": [s.sp.beta.re, s.sp.beta.im],
        "tau": s.tau,
        "dt": dt,
        "n_traj": cfg.integration.n_traj,
        "wrap_warnings": ens.wrap_warnings(),
    });
    Ok(out)
}

fn localization(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let s = Setup::new(cfg)?;
    let dt = s.dt(cfg);
    let every = cfg.integration.record_every.unwrap_or_else(|| record_every_for(cfg.integration.t, dt, 100));
    let rep = verify_localization(
        &s.model,
        &[s.initial(cfg)],
        cfg.integration.n_traj,
        cfg.integration.t,
        dt,
        cfg.integration.base_seed,
        every,
        cfg.integration.scheme,
    )?;
    let case = &rep.cases[0];
    let mut out = Artifacts::new();
    out.column("t", case.times.clone());
    out.column("delta_a2", case.mean_delta_a2.clone());
    out.column("var_x", case.mean_var_x.clone());
    out.assert(Assertion::at_most(
        "localization_envelope",
        "ensemble mean (dA)^2 stays below its exponential envelope",
        case.envelope_ratio,
        1.0,
    ));
    if !case.at_fixed_point {
        out.assert(Assertion::at_most(
            "monotone_decay",
            "ensemble mean (dA)^2 is fit by a nonincreasing sequence (1 - R^2)",
            1.0 - case.isotonic_r2,
            0.05,
        ));
    }
    let ell = cfg.localization.ell.or(match cfg.initial.state() {
        InitialState::Cat { separation, .. } => Some(separation),
        _ => None,
    });
    if let Some(ell) = ell {
        let expected = 1.0 / (ell * ell * s.model.a * s.model.a);
        let measured = case.e_folding_time.unwrap_or(f64::INFINITY);
        out.assert(Assertion::close(
            "superposition_lifetime",
            "log10 of the e-folding time of (dA)^2 is within one decade of 1/(l^2 a^2)",
            measured.log10(),
            expected.log10(),
            1.0,
        ));
    }
    out.details = json!({
        "params": rep.params,
        "rates": rep.rates,
        "scope_warning": rep.scope_warning,
        "e_folding_time": case.e_folding_time,
        "isotonic_r2": case.isotonic_r2,
        "at_fixed_point": case.at_fixed_point,
        "dt": dt,
    });
    Ok(out)
}

fn duality(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let s = Setup::new(cfg)?;
    let dt = s.dt(cfg);
    let t = cfg.integration.t;
    let psi0 = s.initial(cfg);
    let exact = master::evolve(&s.model, &DensityMatrix::pure(&psi0), t, master::default_dt(&s.model, &s.grid))?;
    let mut ns = cfg.duality.n_values.clone();
    ns.sort_unstable();
    ns.dedup();
    let n_max = *ns.last().unwrap();
    let mut spec = s.spec(cfg, dt);
    spec.n_traj = n_max;
    spec.record_every = usize::MAX;
    spec.snapshot_times = vec![t];
    let ens = run_ensemble(&spec)?;
    let mut d = Vec::new();
    for &n in &ns {
        let sub = EnsembleResult {
            times: ens.times.clone(),
            records: ens.records[..n].to_vec(),
        };
        d.push(trace_distance(&reconstruct_from(&sub, t)?, &exact)?);
    }
    let mut out = Artifacts::new();
    out.column("n_traj", ns.iter().map(|&n| n as f64).collect());
    out.column("trace_distance", d.clone());
    out.assert(Assertion::at_most(
        "trace_distance",
        "trace distance between the trajectory average and the master-equation state",
        *d.last().unwrap(),
        cfg.duality.max_trace_distance,
    ));
    let slope = if ns.len() >= 2 {
        let pts: Vec<(f64, f64)> = ns.iter().zip(&d).map(|(&n, &v)| ((n as f64).ln(), v.ln())).collect();
        let slope = fit_slope(&pts);
        out.assert(Assertion::close(
            "convergence_slope",
            "log-log slope of trace distance against ensemble size is -1/2",
            slope,
            -0.5,
            cfg.duality.slope_tolerance,
        ));
        Some(slope)
    } else {
        None
    };
    out.details = json!({
        "t": t,
        "dt": dt,
        "exact_purity": exact.purity(),
        "fit_slope": slope,
    });
    Ok(out)
}

fn default_fp_dt(cfg: &ExperimentConfig, c: &qsd_core::FpCoefficients, m: &LindbladModel, lat: &PhaseSpaceLattice) -> f64 {
    cfg.fokker_planck.dt.unwrap_or_else(|| stable_dt(c, m, lat))
}

fn fokker_planck(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let model = cfg.build_model()?;
    let sp = solve_beta(&model, 0.0)?;
    let c = coefficients(&model, &sp)?;
    let lat = cfg.build_lattice()?.expect("checked by validation");
    let points = initial_points(cfg);
    let f0 = points_field(&lat, &points)?;
    let t = cfg.integration.t;
    let dt = default_fp_dt(cfg, &c, &model, &lat);
    let rows = cfg.fokker_planck.samples.unwrap_or(100).max(1);
    let every = (((t / dt) / rows as f64).round() as usize).max(1);
    let mb = match (cfg.kt(), cfg.model.potential.harmonic_omega()) {
        (Some(kt), Some(_)) => Some(maxwell_boltzmann(&lat, &model, kt)),
        _ => None,
    };
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); 8];
    let obs = |tt: f64, f: &PhaseSpaceField, cols: &mut Vec<Vec<f64>>| {
        let m = f.moments();
        for (c, v) in cols.iter_mut().zip([tt, f.mass(), m.mean_q, m.mean_p, m.var_q, m.var_p, m.cov_qp]) {
            c.push(v);
        }
        cols[7].push(mb.as_ref().map_or(f64::NAN, |g| l1_distance(f, g).unwrap_or(f64::NAN)));
    };
    obs(0.0, &f0, &mut cols);
    let (f_end, diag) = evolve_fp_observed(&c, &model, &f0, t, dt, every, |tt, f| obs(tt, f, &mut cols))?;
    // The observer also fires at the end; drop a duplicate final row.
    if cols[0].len() >= 2 && cols[0][cols[0].len() - 1] == cols[0][cols[0].len() - 2] {
        for col in cols.iter_mut() {
            col.pop();
        }
    }

    let mut out = Artifacts::new();
    for (name, col) in ["t", "mass", "mean_q", "mean_p", "var_q", "var_p", "cov_qp", "l1_to_mb"].iter().zip(cols) {
        if *name != "l1_to_mb" || mb.is_some() {
            out.column(name, col);
        }
    }
    out.assert(Assertion::at_most(
        "mass_conservation",
        "total probability is conserved by the zero-flux scheme",
        diag.mass_drift,
        1e-8,
    ));
    let fm = f_end.moments();
    let f0m = f0.moments();
    let (oq, op) = drift_orbit(&c, &model, (f0m.mean_q, f0m.mean_p), t);
    // Linear drift: the mean follows the deterministic orbit.
    if model.potential.is_quadratic() {
        let cell = lat.dq().max(lat.dp());
        let err = ((fm.mean_q - oq).powi(2) + (fm.mean_p - op).powi(2)).sqrt();
        out.assert(Assertion::at_most(
            "mean_follows_drift",
            "phase-space mean follows the dissipative drift orbit within two cells",
            err,
            2.0 * cell,
        ));
    }
    out.field("initial", f0);
    out.field("final", f_end);
    if let Some(g) = mb {
        out.field("maxwell_boltzmann", g);
    }
    out.details = json!({
        "coefficients": c,
        "diagnostics": diag,
        "orbit_end": [oq, op],
    });
    Ok(out)
}

fn thermalization(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let kt = cfg.kt().expect("checked by validation");
    let omega = cfg.model.potential.harmonic_omega().expect("checked by validation");
    let s = Setup::new(cfg)?;
    let gamma = s.model.qbm.expect("qbm model").gamma;
    let m = s.model.m;
    let c = coefficients(&s.model, &s.sp)?;
    let lat = match cfg.build_lattice()? {
        Some(l) => l,
        None => {
            let (sq, sp) = ((kt / (m * omega * omega)).sqrt(), (m * kt).sqrt());
            PhaseSpaceLattice::symmetric(6.0 * sq, 96, 6.0 * sp, 96)?
        }
    };
    let th = &cfg.thermalization;
    let t = cfg.integration.t;
    let t_start = th.t_start.unwrap_or(0.1 * t);
    let mb = maxwell_boltzmann(&lat, &s.model, kt);
    let f0 = points_field(&lat, &initial_points(cfg))?;
    let fp_dt = default_fp_dt(cfg, &c, &s.model, &lat);

    // Fokker-Planck run, sampled on the pooling lattice.
    let every = (th.pool_every / fp_dt).ceil() as usize;
    let mut pooled = PhaseSpaceField::zeros(lat.clone());
    let mut n_pooled = 0usize;
    let (mut ts, mut snaps) = (vec![0.0], vec![f0.clone()]);
    if t_start <= 0.0 {
        pooled.add_scaled(&f0, 1.0);
        n_pooled += 1;
    }
    let (f_end, diag) = evolve_fp_observed(&c, &s.model, &f0, t, th.pool_every / every as f64, every, |tt, f| {
        if ts.last() != Some(&tt) {
            ts.push(tt);
            snaps.push(f.clone());
            if tt >= t_start - 1e-9 {
                pooled.add_scaled(f, 1.0);
                n_pooled += 1;
            }
        }
    })?;
    pooled.scale(1.0 / n_pooled.max(1) as f64);
    let fp_l1: Vec<f64> = snaps.iter().map(|f| l1_distance(f, &mb)).collect::<Result<_, _>>()?;
    let to_end: Vec<f64> = snaps.iter().map(|f| l1_distance(f, &f_end)).collect::<Result<_, _>>()?;
    let rate = relaxation_rate(&ts, &to_end, 0.01, 0.5);

    // Trajectory ensemble recorded on the same time lattice.
    let dt_guess = cfg.integration.dt.unwrap_or(0.05 * s.tau);
    let re = ((th.pool_every / dt_guess).round() as usize).max(1);
    let mut spec = s.spec(cfg, th.pool_every / re as f64);
    spec.record_every = re;
    let ens = run_ensemble(&spec)?;
    let mut samples = Vec::new();
    let late = 0.5 * (t_start + t);
    let (mut x2, mut p2, mut xp, mut w) = (0.0, 0.0, 0.0, 0.0);
    for (k, &tk) in ens.times.iter().enumerate() {
        if tk < t_start - 1e-9 {
            continue;
        }
        samples.extend(ens.centers(k));
        if tk >= late - 1e-9 {
            for r in &ens.records {
                let mo = &r.moments[k];
                x2 += mo.var_x + mo.x_mean * mo.x_mean;
                p2 += mo.var_p + mo.p_mean * mo.p_mean;
                xp += mo.r + mo.x_mean * mo.p_mean;
                w += 1.0;
            }
        }
    }
    let qe = centered_edges(0.5 * (lat.q_min + lat.q_max), (lat.q_max - lat.q_min) / th.bins as f64, th.bins);
    let pe = centered_edges(0.5 * (lat.p_min + lat.p_max), (lat.p_max - lat.p_min) / th.bins as f64, th.bins);
    let hist = PhaseSpaceHistogram::from_samples(&samples, qe, pe);
    let hist_l1 = hist.l1_to_field(&pooled);
    let fit = exponents_from_moments(x2 / w, p2 / w, xp / w, s.model.hbar);
    let closed = thermal_exponents_closed_form(&s.sp, m, s.model.hbar, kt, omega);
    let exp_dev = fit.max_rel_dev(&closed);

    let mut out = Artifacts::new();
    out.column("t", ens.times.clone());
    out.column("x_mean", ens.mean_series(|r, k| r.moments[k].x_mean));
    out.column("p_mean", ens.mean_series(|r, k| r.moments[k].p_mean));
    out.column("centre_var_x", centre_variance(&ens, |mo| mo.x_mean));
    out.column("centre_var_p", centre_variance(&ens, |mo| mo.p_mean));
    let fp_col = ens
        .times
        .iter()
        .map(|tk| ts.iter().position(|x| (x - tk).abs() <= 1e-9).map_or(f64::NAN, |i| fp_l1[i]))
        .collect();
    out.column("fp_l1_to_mb", fp_col);

    out.assert(Assertion::at_most(
        "fp_stationary_state",
        "L1 distance between the late Fokker-Planck field and Maxwell-Boltzmann",
        *fp_l1.last().unwrap(),
        th.max_fp_l1,
    ));
    out.assert(Assertion::close(
        "relaxation_rate",
        "log2 of the fitted L1 relaxation rate is within one of log2(gamma)",
        rate.map_or(f64::NAN, f64::log2),
        gamma.log2(),
        1.0,
    ));
    out.assert(Assertion::at_most(
        "centre_histogram",
        "L1 distance between the pooled centre histogram and the pooled Fokker-Planck field",
        hist_l1,
        th.max_histogram_l1,
    ));
    out.assert(Assertion::at_most(
        "thermal_exponents",
        "Gaussian exponents of the trajectory-averaged state match the closed thermal form",
        exp_dev,
        th.max_exponent_deviation,
    ));
    let mut hf = PhaseSpaceField::zeros(PhaseSpaceLattice::symmetric(
        0.5 * (lat.q_max - lat.q_min),
        th.bins,
        0.5 * (lat.p_max - lat.p_min),
        th.bins,
    )?);
    hf.lattice.q_min = lat.q_min;
    hf.lattice.q_max = lat.q_max;
    hf.lattice.p_min = lat.p_min;
    hf.lattice.p_max = lat.p_max;
    hf.values = hist.density.clone();
    out.field("histogram", hf);
    out.field("fp_pooled", pooled);
    out.field("maxwell_boltzmann", mb);
    out.details = json!({
        "gamma": gamma,
        "relaxation_rate": rate,
        "fp_diagnostics": diag,
        "n_samples": hist.n_samples,
        "outside": hist.outside,
        "fitted_exponents": fit,
        "closed_form_exponents": closed,
        "wrap_warnings": ens.wrap_warnings(),
    });
    Ok(out)
}

fn centre_variance(ens: &EnsembleResult, f: impl Fn(&qsd_core::MomentState) -> f64) -> Vec<f64> {
    let n = ens.records.len() as f64;
    (0..ens.times.len())
        .map(|k| {
            let mean = ens.records.iter().map(|r| f(&r.moments[k])).sum::<f64>() / n;
            ens.records.iter().map(|r| (f(&r.moments[k]) - mean).powi(2)).sum::<f64>() / n
        })
        .collect()
}

fn histories(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let s = Setup::new(cfg)?;
    let h = &cfg.histories;
    let lat = cfg.build_lattice()?.expect("checked by validation");
    let half = 0.95 * 0.5 * (s.grid.x_max() - s.grid.x_min());
    let mid = 0.5 * (s.grid.x_max() + s.grid.x_min());
    let q_range = h.q_range.unwrap_or((mid - half, mid + half));
    let p_range = h.p_range.unwrap_or((-half, half));
    let cells = tiling(q_range, p_range, h.n_q, h.n_p);
    let t2 = cfg.integration.t;
    let t1 = h.t1.unwrap_or(0.5 * t2);
    let rho0 = DensityMatrix::pure(&s.initial(cfg));
    let c = coefficients(&s.model, &s.sp)?;
    let fp = FpComparison {
        lattice: lat.clone(),
        initial: FpInitial::Points(initial_points(cfg)),
        dt: default_fp_dt(cfg, &c, &s.model, &lat),
    };
    let (d, rep) = history_probabilities_vs_fp(&s.model, &rho0, &cells, &s.sp, (t1, t2), h.master_dt, &fp)?;
    let n = cells.len();
    let mut out = Artifacts::new();
    out.column("alpha1", (0..n * n).map(|k| (k / n) as f64).collect());
    out.column("alpha2", (0..n * n).map(|k| (k % n) as f64).collect());
    out.column("p_quantum", rep.quantum.clone());
    out.column("p_classical", rep.classical.clone());
    out.assert(Assertion::at_most(
        "decoherence",
        "largest normalized off-diagonal element of the decoherence functional",
        rep.epsilon,
        h.max_epsilon,
    ));
    out.assert(Assertion::at_most(
        "classical_probabilities",
        "history probabilities agree with Fokker-Planck cell transitions",
        rep.max_discrepancy,
        h.max_discrepancy,
    ));
    out.assert(Assertion::holds(
        "modal_history_ordered",
        "the most probable history moves along the classical drift",
        rep.modal_classically_ordered,
    ));
    out.assert(Assertion::at_most(
        "hermiticity",
        "D(h, h') = conj(D(h', h))",
        rep.hermiticity_defect,
        1e-10,
    ));
    out.details = json!({
        "t1": t1,
        "t2": t2,
        "cells": cells,
        "cell_area_units": cells[0].area_units(s.model.hbar),
        "probability_sum": d.probability_sum(),
        "report": rep,
        "tau": s.tau,
    });
    Ok(out)
}

fn rates(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let s = Setup::new(cfg)?;
    let c = coefficients(&s.model, &s.sp)?;
    let [c1, c2, c3] = s.sp.linear_coefficients(&s.model);
    let ells: Vec<f64> = match cfg.rates.ell {
        Some(l) => vec![l],
        None => [1.0, 2.0, 5.0, 10.0, 20.0, 50.0].iter().map(|k| k * s.sp.sigma_x()).collect(),
    };
    let est: Vec<_> = ells.iter().map(|&l| estimate_rates(&s.sp, &s.model, Some(l))).collect();
    let mut out = Artifacts::new();
    out.column("ell", ells.clone());
    out.column("tau_superposition", est.iter().map(|e| e.tau_superposition.unwrap_or(f64::NAN)).collect());
    out.column("tau_decoherence", est.iter().map(|e| e.tau_decoherence.unwrap_or(f64::NAN)).collect());

    out.assert(Assertion::close(
        "c2_equals_c1",
        "second linearized drift coefficient equals the first",
        c2,
        c1,
        1e-10 * c1.abs().max(1.0),
    ));
    let c3e = -2.0 * s.sp.r0 * s.sp.r0 * c1 / (s.sp.sigma_x2 * s.sp.sigma_p2);
    out.assert(Assertion::close(
        "c3_form",
        "c3 = -2 r0^2 c1 / (sigma_x2 sigma_p2)",
        c3,
        c3e,
        1e-10 * c3e.abs().max(1.0),
    ));
    out.assert(Assertion::below("c1_negative", "c1 < 0", c1, 0.0));
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.integration.base_seed);
    let (mut max_drift, mut max_diff) = (f64::NEG_INFINITY, 0.0f64);
    for _ in 0..cfg.rates.samples {
        let dev = sample_admissible(&mut rng, &s.sp, s.model.hbar, 3.0);
        if dev == DeviationCoords::origin() {
            continue;
        }
        let d = da2_drift(&s.sp, &dev, &s.model);
        max_drift = max_drift.max(d);
        max_diff = max_diff.max((d - da2_drift_expanded(&s.sp, &dev, &s.model)).abs() / (1.0 + d.abs()));
    }
    out.assert(Assertion::at_most(
        "drift_negative",
        "drift of (dA)^2 is negative at sampled admissible deviations",
        max_drift,
        0.0,
    ));
    out.assert(Assertion::at_most(
        "drift_regrouping",
        "regrouped and expanded forms of the (dA)^2 drift agree",
        max_diff,
        1e-9,
    ));
    if let Some(r) = c.high_t_ratio {
        out.assert(Assertion::close(
            "high_temperature_diffusion",
            "momentum diffusion d_pp equals 2 m gamma kT",
            r,
            1.0,
            0.1,
        ));
    }
    out.details = json!({
        "tau": s.tau,
        "rates": est,
        "linear_coefficients": [c1, c2, c3],
        "fp_coefficients": c,
    });
    Ok(out)
}
