//! Experiment configuration files.
//!
//! Configs are TOML. Every table is parsed strictly: unknown keys are an
//! error, and errors carry the dotted path of the offending field.

use std::path::{Path, PathBuf};

use qsd_core::model::TabulatedPotential;
use qsd_core::{Grid, LindbladModel, Potential, QbmParams, Scheme};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Stationary,
    Localization,
    Duality,
    FokkerPlanck,
    Thermalization,
    Histories,
    Rates,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::Stationary,
        ExperimentKind::Localization,
        ExperimentKind::Duality,
        ExperimentKind::FokkerPlanck,
        ExperimentKind::Thermalization,
        ExperimentKind::Histories,
        ExperimentKind::Rates,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Stationary => "stationary",
            ExperimentKind::Localization => "localization",
            ExperimentKind::Duality => "duality",
            ExperimentKind::FokkerPlanck => "fokker_planck",
            ExperimentKind::Thermalization => "thermalization",
            ExperimentKind::Histories => "histories",
            ExperimentKind::Rates => "rates",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            ExperimentKind::Stationary => "stationary Gaussian solution versus long-time trajectory moments",
            ExperimentKind::Localization => "ensemble decay of the localization functional (dA)^2",
            ExperimentKind::Duality => "density matrix from trajectories versus the master equation",
            ExperimentKind::FokkerPlanck => "phase-space Fokker-Planck evolution of trajectory centres",
            ExperimentKind::Thermalization => "relaxation of QBM trajectories to the Maxwell-Boltzmann state",
            ExperimentKind::Histories => "two-time decoherence functional versus classical transitions",
            ExperimentKind::Rates => "localization timescales and linearized drift coefficients",
        }
    }

    pub fn topic(self) -> &'static str {
        match self {
            ExperimentKind::Stationary => "stationary solutions",
            ExperimentKind::Localization => "localization theorem",
            ExperimentKind::Duality => "unravelling of the master equation",
            ExperimentKind::FokkerPlanck => "classical limit",
            ExperimentKind::Thermalization => "thermal equilibrium",
            ExperimentKind::Histories => "decoherent histories",
            ExperimentKind::Rates => "timescales",
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub integration: IntegrationConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub lattice: Option<LatticeConfig>,
    #[serde(default)]
    pub localization: LocalizationConfig,
    #[serde(default)]
    pub duality: DualityConfig,
    #[serde(default)]
    pub fokker_planck: FokkerPlanckConfig,
    #[serde(default)]
    pub thermalization: ThermalizationConfig,
    #[serde(default)]
    pub histories: HistoriesConfig,
    #[serde(default)]
    pub rates: RatesConfig,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// L = a x + i b p with c = hbar a b / 2.
    #[default]
    Standard,
    /// Quantum Brownian motion from friction gamma and temperature kT.
    Qbm,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub b: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub kt: Option<f64>,
    #[serde(default = "one")]
    pub m: f64,
    #[serde(default = "one")]
    pub hbar: f64,
    #[serde(default)]
    pub potential: PotentialConfig,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    #[default]
    Free,
    Harmonic,
    InvertedHarmonic,
    Quartic,
    DoubleWell,
    Tabulated,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    #[serde(default)]
    pub kind: PotentialKind,
    #[serde(default)]
    pub omega: Option<f64>,
    /// Oscillator mass; defaults to the model mass.
    #[serde(default)]
    pub mass: Option<f64>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub v0: Option<f64>,
    #[serde(default)]
    pub separation: Option<f64>,
    #[serde(default)]
    pub x: Option<Vec<f64>>,
    #[serde(default)]
    pub v: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    /// Coherent state of the stationary Gaussian centred at (q, p).
    #[default]
    Coherent,
    /// Even superposition of coherent states at center ± separation/2.
    Cat,
    /// Plain Gaussian wave packet with position variance var_x.
    Gaussian,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default)]
    pub kind: InitialKind,
    #[serde(default)]
    pub q: Option<f64>,
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub separation: Option<f64>,
    #[serde(default)]
    pub center: Option<f64>,
    #[serde(default)]
    pub var_x: Option<f64>,
}

/// Initial wave function, resolved from [`InitialConfig`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitialState {
    Coherent { q: f64, p: f64 },
    Cat { separation: f64, center: f64, p: f64 },
    Gaussian { q: f64, p: f64, var_x: f64 },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub half_width: f64,
    #[serde(default)]
    pub center: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationConfig {
    pub t: f64,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_n_traj")]
    pub n_traj: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub record_every: Option<usize>,
    #[serde(default)]
    pub scheme: Scheme,
}

fn default_n_traj() -> usize {
    100
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub q_half: f64,
    pub n_q: usize,
    pub p_half: f64,
    pub n_p: usize,
    #[serde(default)]
    pub q_center: f64,
    #[serde(default)]
    pub p_center: f64,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizationConfig {
    /// Reference separation for the expected e-folding time 1/(l² a²).
    #[serde(default)]
    pub ell: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualityConfig {
    #[serde(default = "default_n_values")]
    pub n_values: Vec<usize>,
    #[serde(default = "default_duality_tol")]
    pub max_trace_distance: f64,
    #[serde(default = "default_slope_tol")]
    pub slope_tolerance: f64,
}

fn default_n_values() -> Vec<usize> {
    vec![50, 200, 800]
}
fn default_duality_tol() -> f64 {
    0.08
}
fn default_slope_tol() -> f64 {
    0.15
}

impl Default for DualityConfig {
    fn default() -> Self {
        Self {
            n_values: default_n_values(),
            max_trace_distance: default_duality_tol(),
            slope_tolerance: default_slope_tol(),
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FokkerPlanckConfig {
    /// FP time step; defaults to the stability bound.
    #[serde(default)]
    pub dt: Option<f64>,
    /// Number of rows written to `series.csv`.
    #[serde(default)]
    pub samples: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalizationConfig {
    /// Start of the pooling window for the ensemble histogram.
    #[serde(default)]
    pub t_start: Option<f64>,
    /// Time between pooled samples.
    #[serde(default = "default_pool_every")]
    pub pool_every: f64,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_fp_l1")]
    pub max_fp_l1: f64,
    #[serde(default = "default_hist_l1")]
    pub max_histogram_l1: f64,
    #[serde(default = "default_exp_tol")]
    pub max_exponent_deviation: f64,
}

fn default_pool_every() -> f64 {
    2.0
}
fn default_bins() -> usize {
    32
}
fn default_fp_l1() -> f64 {
    0.05
}
fn default_hist_l1() -> f64 {
    0.15
}
fn default_exp_tol() -> f64 {
    0.1
}

impl Default for ThermalizationConfig {
    fn default() -> Self {
        Self {
            t_start: None,
            pool_every: default_pool_every(),
            bins: default_bins(),
            max_fp_l1: default_fp_l1(),
            max_histogram_l1: default_hist_l1(),
            max_exponent_deviation: default_exp_tol(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoriesConfig {
    #[serde(default)]
    pub q_range: Option<(f64, f64)>,
    #[serde(default)]
    pub p_range: Option<(f64, f64)>,
    #[serde(default = "default_cells")]
    pub n_q: usize,
    #[serde(default = "default_cells")]
    pub n_p: usize,
    #[serde(default)]
    pub t1: Option<f64>,
    #[serde(default = "default_master_dt")]
    pub master_dt: f64,
    #[serde(default = "default_eps")]
    pub max_epsilon: f64,
    #[serde(default = "default_eps")]
    pub max_discrepancy: f64,
}

fn default_cells() -> usize {
    2
}
fn default_master_dt() -> f64 {
    0.01
}
fn default_eps() -> f64 {
    0.1
}

impl Default for HistoriesConfig {
    fn default() -> Self {
        Self {
            q_range: None,
            p_range: None,
            n_q: default_cells(),
            n_p: default_cells(),
            t1: None,
            master_dt: default_master_dt(),
            max_epsilon: default_eps(),
            max_discrepancy: default_eps(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesConfig {
    #[serde(default)]
    pub ell: Option<f64>,
    #[serde(default = "default_rate_samples")]
    pub samples: usize,
}

fn default_rate_samples() -> usize {
    1000
}

impl Default for RatesConfig {
    fn default() -> Self {
        Self {
            ell: None,
            samples: default_rate_samples(),
        }
    }
}

/// Parses a config from TOML text.
pub fn parse(text: &str) -> Result<ExperimentConfig, CliError> {
    let value: toml::Value = toml::from_str(text).map_err(|e| CliError::Config {
        path: String::new(),
        message: e.message().trim().to_string(),
    })?;
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let message = e.inner().to_string().trim().to_string();
        let mut path = e.path().to_string();
        // A missing field is reported at its parent; point at the field itself.
        if let Some(name) = message.strip_prefix("missing field `").and_then(|r| r.split('`').next()) {
            path = if path == "." { name.to_string() } else { format!("{path}.{name}") };
        }
        CliError::Config { path, message }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
        path: String::new(),
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    parse(&text)
}

fn bad(path: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

fn positive(path: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(path, format!("must be positive and finite, got {v}")))
    }
}

fn finite(path: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(bad(path, format!("must be finite, got {v}")))
    }
}

/// Checks that exactly the `required` optional keys of a table are set,
/// and that no key outside `allowed` is.
fn keys(table: &str, kind: &str, set: &[(&str, bool)], required: &[&str], allowed: &[&str]) -> Result<(), CliError> {
    for &(name, present) in set {
        let path = format!("{table}.{name}");
        if required.contains(&name) && !present {
            return Err(bad(&path, format!("required for kind `{kind}`")));
        }
        if present && !required.contains(&name) && !allowed.contains(&name) {
            return Err(bad(&path, format!("not used by kind `{kind}`")));
        }
    }
    Ok(())
}

impl ModelConfig {
    fn validate(&self) -> Result<(), CliError> {
        let set = [
            ("a", self.a.is_some()),
            ("b", self.b.is_some()),
            ("gamma", self.gamma.is_some()),
            ("kt", self.kt.is_some()),
        ];
        match self.kind {
            ModelKind::Standard => {
                keys("model", "standard", &set, &["a", "b"], &[])?;
                let (a, b) = (self.a.unwrap(), self.b.unwrap());
                finite("model.a", a)?;
                finite("model.b", b)?;
                if a == 0.0 && b == 0.0 {
                    return Err(bad("model.a", "a and b cannot both be zero"));
                }
            }
            ModelKind::Qbm => {
                keys("model", "qbm", &set, &["gamma", "kt"], &[])?;
                positive("model.gamma", self.gamma.unwrap())?;
                positive("model.kt", self.kt.unwrap())?;
            }
        }
        positive("model.m", self.m)?;
        positive("model.hbar", self.hbar)?;
        self.potential.validate()
    }

    pub fn build(&self) -> Result<LindbladModel, CliError> {
        let potential = self.potential.build(self.m)?;
        let r = match self.kind {
            ModelKind::Standard => LindbladModel::standard(self.a.unwrap(), self.b.unwrap(), self.m, self.hbar, potential),
            ModelKind::Qbm => LindbladModel::from_qbm(
                QbmParams {
                    gamma: self.gamma.unwrap(),
                    kt: self.kt.unwrap(),
                    m: self.m,
                    hbar: self.hbar,
                },
                potential,
            ),
        };
        r.map_err(|e| bad("model", e.to_string()))
    }
}

impl PotentialConfig {
    fn validate(&self) -> Result<(), CliError> {
        const T: &str = "model.potential";
        let set = [
            ("omega", self.omega.is_some()),
            ("mass", self.mass.is_some()),
            ("lambda", self.lambda.is_some()),
            ("v0", self.v0.is_some()),
            ("separation", self.separation.is_some()),
            ("x", self.x.is_some()),
            ("v", self.v.is_some()),
        ];
        match self.kind {
            PotentialKind::Free => keys(T, "free", &set, &[], &[])?,
            PotentialKind::Harmonic | PotentialKind::InvertedHarmonic => {
                keys(T, "harmonic", &set, &["omega"], &["mass"])?;
                positive("model.potential.omega", self.omega.unwrap())?;
                if let Some(m) = self.mass {
                    positive("model.potential.mass", m)?;
                }
            }
            PotentialKind::Quartic => {
                keys(T, "quartic", &set, &["lambda"], &[])?;
                finite("model.potential.lambda", self.lambda.unwrap())?;
            }
            PotentialKind::DoubleWell => {
                keys(T, "double_well", &set, &["v0", "separation"], &[])?;
                finite("model.potential.v0", self.v0.unwrap())?;
                positive("model.potential.separation", self.separation.unwrap())?;
            }
            PotentialKind::Tabulated => {
                keys(T, "tabulated", &set, &["x", "v"], &[])?;
                self.build(1.0)?;
            }
        }
        Ok(())
    }

    fn build(&self, model_mass: f64) -> Result<Potential, CliError> {
        let mass = self.mass.unwrap_or(model_mass);
        Ok(match self.kind {
            PotentialKind::Free => Potential::Free,
            PotentialKind::Harmonic => Potential::harmonic(self.omega.unwrap(), mass),
            PotentialKind::InvertedHarmonic => Potential::InvertedHarmonic { omega: self.omega.unwrap(), mass },
            PotentialKind::Quartic => Potential::Quartic { lambda: self.lambda.unwrap() },
            PotentialKind::DoubleWell => Potential::DoubleWell {
                v0: self.v0.unwrap(),
                separation: self.separation.unwrap(),
            },
            PotentialKind::Tabulated => Potential::Tabulated(
                TabulatedPotential::new(self.x.clone().unwrap(), self.v.clone().unwrap())
                    .map_err(|e| bad("model.potential", e.to_string()))?,
            ),
        })
    }

    /// Angular frequency of a harmonic potential.
    pub fn harmonic_omega(&self) -> Option<f64> {
        (self.kind == PotentialKind::Harmonic).then(|| self.omega.unwrap())
    }
}

impl InitialConfig {
    fn validate(&self) -> Result<(), CliError> {
        const T: &str = "initial";
        let set = [
            ("q", self.q.is_some()),
            ("p", self.p.is_some()),
            ("separation", self.separation.is_some()),
            ("center", self.center.is_some()),
            ("var_x", self.var_x.is_some()),
        ];
        match self.kind {
            InitialKind::Coherent => keys(T, "coherent", &set, &[], &["q", "p"]),
            InitialKind::Cat => {
                keys(T, "cat", &set, &["separation"], &["center", "p"])?;
                positive("initial.separation", self.separation.unwrap())
            }
            InitialKind::Gaussian => {
                keys(T, "gaussian", &set, &["var_x"], &["q", "p"])?;
                positive("initial.var_x", self.var_x.unwrap())
            }
        }
    }

    pub fn state(&self) -> InitialState {
        let q = self.q.unwrap_or(0.0);
        let p = self.p.unwrap_or(0.0);
        match self.kind {
            InitialKind::Coherent => InitialState::Coherent { q, p },
            InitialKind::Cat => InitialState::Cat {
                separation: self.separation.unwrap(),
                center: self.center.unwrap_or(0.0),
                p,
            },
            InitialKind::Gaussian => InitialState::Gaussian { q, p, var_x: self.var_x.unwrap() },
        }
    }
}

impl ExperimentConfig {
    fn validate(&self) -> Result<(), CliError> {
        self.model.validate()?;
        if self.grid.n < 8 || !self.grid.n.is_power_of_two() {
            return Err(bad("grid.n", format!("must be a power of two >= 8, got {}", self.grid.n)));
        }
        positive("grid.half_width", self.grid.half_width)?;
        finite("grid.center", self.grid.center)?;
        positive("integration.t", self.integration.t)?;
        if let Some(dt) = self.integration.dt {
            positive("integration.dt", dt)?;
        }
        if self.integration.n_traj == 0 {
            return Err(bad("integration.n_traj", "must be at least 1"));
        }
        if self.integration.record_every == Some(0) {
            return Err(bad("integration.record_every", "must be at least 1"));
        }
        self.initial.validate()?;
        if let Some(l) = &self.lattice {
            positive("lattice.q_half", l.q_half)?;
            positive("lattice.p_half", l.p_half)?;
            if l.n_q < 4 || l.n_p < 4 {
                return Err(bad("lattice", "n_q and n_p must be at least 4"));
            }
        }
        if let Some(ell) = self.localization.ell {
            positive("localization.ell", ell)?;
        }
        if self.duality.n_values.is_empty() || self.duality.n_values.contains(&0) {
            return Err(bad("duality.n_values", "needs positive ensemble sizes"));
        }
        if let Some(dt) = self.fokker_planck.dt {
            positive("fokker_planck.dt", dt)?;
        }
        positive("thermalization.pool_every", self.thermalization.pool_every)?;
        if self.thermalization.bins < 2 {
            return Err(bad("thermalization.bins", "must be at least 2"));
        }
        positive("histories.master_dt", self.histories.master_dt)?;
        if self.histories.n_q == 0 || self.histories.n_p == 0 {
            return Err(bad("histories", "n_q and n_p must be at least 1"));
        }
        if let Some(t1) = self.histories.t1 {
            positive("histories.t1", t1)?;
            if t1 >= self.integration.t {
                return Err(bad("histories.t1", "must be earlier than integration.t"));
            }
        }
        if let Some(ell) = self.rates.ell {
            positive("rates.ell", ell)?;
        }
        match self.experiment {
            ExperimentKind::Thermalization
                if self.model.kind != ModelKind::Qbm || self.model.potential.kind != PotentialKind::Harmonic =>
            {
                return Err(bad("model", "thermalization needs a qbm model with a harmonic potential"));
            }
            ExperimentKind::FokkerPlanck | ExperimentKind::Histories if self.lattice.is_none() => {
                return Err(bad("lattice", "this experiment needs a [lattice] block"));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn hbar(&self) -> f64 {
        self.model.hbar
    }

    pub fn build_model(&self) -> Result<LindbladModel, CliError> {
        self.model.build()
    }

    pub fn build_grid(&self) -> Result<Grid, CliError> {
        let g = &self.grid;
        Grid::new(g.n, g.center - g.half_width, g.center + g.half_width, self.hbar()).map_err(|e| bad("grid", e.to_string()))
    }

    pub fn build_lattice(&self) -> Result<Option<qsd_core::PhaseSpaceLattice>, CliError> {
        self.lattice
            .as_ref()
            .map(|l| {
                qsd_core::PhaseSpaceLattice::new(
                    (l.q_center - l.q_half, l.q_center + l.q_half),
                    l.n_q,
                    (l.p_center - l.p_half, l.p_center + l.p_half),
                    l.n_p,
                )
                .map_err(|e| bad("lattice", e.to_string()))
            })
            .transpose()
    }

    /// kT of a QBM model.
    pub fn kt(&self) -> Option<f64> {
        (self.model.kind == ModelKind::Qbm).then(|| self.model.kt.unwrap())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
experiment = "stationary"
[model]
kind = "standard"
a = 1.0
b = 0.0
[grid]
n = 64
half_width = 10.0
[integration]
t = 1.0
"#;

    #[test]
    fn minimal_config_parses() {
        let cfg = parse(MINIMAL).unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::Stationary);
        assert_eq!(cfg.integration.n_traj, 100);
        assert_eq!(cfg.initial.state(), InitialState::Coherent { q: 0.0, p: 0.0 });
        let m = cfg.build_model().unwrap();
        assert_eq!(m.c, 0.0);
    }

    #[test]
    fn unknown_nested_key_reports_path() {
        let text = MINIMAL.replace("half_width = 10.0", "half_width = 10.0\nhalfwidth = 3.0");
        match parse(&text) {
            Err(CliError::Config { path, message }) => {
                assert!(path.starts_with("grid"), "{path}");
                assert!(message.contains("halfwidth"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn semantic_errors_report_path() {
        let text = MINIMAL.replace("t = 1.0", "t = -1.0");
        match parse(&text) {
            Err(CliError::Config { path, .. }) => assert_eq!(path, "integration.t"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_block_and_kind_fields_report_path() {
        let text = MINIMAL.replace("[model]\nkind = \"standard\"\na = 1.0\nb = 0.0\n", "");
        match parse(&text) {
            Err(CliError::Config { path, .. }) => assert_eq!(path, "model"),
            other => panic!("{other:?}"),
        }
        let text = MINIMAL.replace("b = 0.0", "b = 0.0\ngamma = 0.1");
        match parse(&text) {
            Err(CliError::Config { path, .. }) => assert_eq!(path, "model.gamma"),
            other => panic!("{other:?}"),
        }
        let text = MINIMAL.replace("b = 0.0", "b = 0.0\n[model.potential]\nkind = \"harmonic\"\nomga = 1.0");
        match parse(&text) {
            Err(CliError::Config { path, message }) => {
                assert_eq!(path, "model.potential.omga");
                assert!(message.contains("unknown field"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn potential_kind_is_checked() {
        let text = MINIMAL.replace("b = 0.0", "b = 0.0\n[model.potential]\nkind = \"harmonik\"\nomega = 1.0");
        assert!(matches!(parse(&text), Err(CliError::Config { .. })));
    }
}
