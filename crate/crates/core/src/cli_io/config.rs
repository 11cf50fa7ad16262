//! Run configuration: a strict TOML document with every default spelled out
//! in the echo.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::discretization::{LoadState, Side};
use crate::dynamics::{DynamicOptions, TimeScheme};
use crate::error::{Error, Result};
use crate::material::MaterialParams;
use crate::statics::StaticOptions;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Static,
    Dynamic,
    AllenCahn,
    Dispersion,
    Check,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Static => "static",
            Mode::Dynamic => "dynamic",
            Mode::AllenCahn => "allen-cahn",
            Mode::Dispersion => "dispersion",
            Mode::Check => "check",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainConfig {
    /// empty means the unit box
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    /// per axis; a single entry is used for every axis
    pub elements: Vec<usize>,
    #[serde(default = "default_degree")]
    pub degree: usize,
    /// defaults to `degree`
    #[serde(default)]
    pub scalar_degree: Option<usize>,
    /// Gauss points per element and axis; defaults to max degree + 1
    #[serde(default)]
    pub quadrature: Option<usize>,
}

fn default_degree() -> usize {
    3
}

/// Time profile of a vector load (one entry per component).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LoadProfile {
    Constant { value: Vec<f64> },
    /// value · min(t / ramp_time, 1)
    Ramp { value: Vec<f64>, ramp_time: f64 },
    /// value · sin(2π frequency t)
    Harmonic { value: Vec<f64>, frequency: f64 },
}

impl LoadProfile {
    fn at(&self, t: f64) -> Vec<f64> {
        match self {
            LoadProfile::Constant { value } => value.clone(),
            LoadProfile::Ramp { value, ramp_time } => {
                let s = (t / ramp_time).min(1.0);
                value.iter().map(|v| v * s).collect()
            }
            LoadProfile::Harmonic { value, frequency } => {
                let s = (2.0 * std::f64::consts::PI * frequency * t).sin();
                value.iter().map(|v| v * s).collect()
            }
        }
    }

    fn value(&self) -> &[f64] {
        match self {
            LoadProfile::Constant { value } | LoadProfile::Ramp { value, .. } | LoadProfile::Harmonic { value, .. } => value,
        }
    }
}

/// Scalar schedule: a constant or piecewise-constant breakpoints [t, value].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Schedule {
    Constant(f64),
    Piecewise(Vec<[f64; 2]>),
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Constant(0.0)
    }
}

impl Schedule {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            Schedule::Constant(v) => *v,
            Schedule::Piecewise(points) => {
                let mut v = points.first().map(|p| p[1]).unwrap_or(0.0);
                for p in points {
                    if p[0] <= t {
                        v = p[1];
                    }
                }
                v
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TractionConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub left: Option<LoadProfile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub right: Option<LoadProfile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bottom: Option<LoadProfile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top: Option<LoadProfile>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoadsConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub body_force: Option<LoadProfile>,
    pub mu_ext: Schedule,
    pub traction: TractionConfig,
}

impl LoadsConfig {
    pub fn at(&self, t: f64) -> LoadState {
        let mut s = LoadState { mu_ext: self.mu_ext.at(t), ..Default::default() };
        let fill = |p: &Option<LoadProfile>, out: &mut [f64; 2]| {
            if let Some(p) = p {
                for (o, v) in out.iter_mut().zip(p.at(t)) {
                    *o = v;
                }
            }
        };
        fill(&self.body_force, &mut s.body_force);
        let tr = &self.traction;
        for (side, p) in [(Side::Left, &tr.left), (Side::Right, &tr.right), (Side::Bottom, &tr.bottom), (Side::Top, &tr.top)] {
            fill(p, &mut s.tractions[side as usize]);
        }
        s
    }

    fn profiles(&self) -> Vec<(&'static str, &LoadProfile)> {
        let tr = &self.traction;
        [
            ("body_force", &self.body_force),
            ("traction.left", &tr.left),
            ("traction.right", &tr.right),
            ("traction.bottom", &tr.bottom),
            ("traction.top", &tr.top),
        ]
        .into_iter()
        .filter_map(|(n, p)| p.as_ref().map(|p| (n, p)))
        .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DeformationInit {
    Identity,
    /// y = X + amplitude·e_component·Π_b sin(mode·π·(X_b − lower_b)/length_b)
    Sinusoidal {
        amplitude: f64,
        #[serde(default = "one")]
        mode: usize,
        #[serde(default)]
        component: usize,
    },
    /// y = diag(factors)·X
    Stretch { factors: Vec<f64> },
    /// coefficients, component-major, whitespace or comma separated
    File { path: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ConcentrationInit {
    Uniform { value: f64 },
    /// ζ = mean + amplitude·Π_b cos(mode·π·(X_b − lower_b)/length_b)
    Sinusoidal {
        mean: f64,
        amplitude: f64,
        #[serde(default = "one")]
        mode: usize,
    },
    File { path: String },
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    pub deformation: DeformationInit,
    /// `None` means ζ ≡ z_eq
    #[serde(skip_serializing_if = "Option::is_none")]
    pub concentration: Option<ConcentrationInit>,
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig { deformation: DeformationInit::Identity, concentration: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_end: f64,
    pub dt: f64,
    #[serde(default = "default_scheme")]
    pub scheme: TimeScheme,
}

fn default_scheme() -> TimeScheme {
    TimeScheme::ImplicitEuler
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Diffusion {
    CahnHilliard,
    Frozen,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsConfig {
    pub diffusion: Diffusion,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig { diffusion: Diffusion::CahnHilliard }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AllenCahnConfig {
    /// τ
    pub relaxation: f64,
}

impl Default for AllenCahnConfig {
    fn default() -> Self {
        AllenCahnConfig { relaxation: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StaticsConfig {
    pub dirichlet: Vec<Side>,
    /// Z; defaults to the mass of the initial concentration
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_diffusant: Option<f64>,
    pub ciarlet_samples: usize,
}

impl Default for StaticsConfig {
    fn default() -> Self {
        StaticsConfig { dirichlet: vec![Side::Left], total_diffusant: None, ciarlet_samples: 4000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DispersionConfig {
    /// h₀ of the probe; defaults to the material value
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hyper_scale: Option<f64>,
    /// wavenumbers are mode·π/L
    pub modes: Vec<usize>,
    pub elements: usize,
    pub degree: usize,
    pub amplitude: f64,
    pub periods: usize,
    pub steps_per_period: usize,
    pub tolerance: f64,
    pub check_time_step: bool,
}

impl Default for DispersionConfig {
    fn default() -> Self {
        let o = crate::oracle::DispersionOptions::default();
        DispersionConfig {
            hyper_scale: None,
            modes: vec![1, 2, 3, 4, 5],
            elements: o.elements,
            degree: o.degree,
            amplitude: o.amplitude,
            periods: o.periods,
            steps_per_period: o.steps_per_period,
            tolerance: o.tolerance,
            check_time_step: o.check_time_step,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckConfig {
    pub samples: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig { samples: 200 }
    }
}

/// Overrides of the solver defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub det_floor: f64,
    pub newton_tol: f64,
    pub max_newton_iterations: usize,
    pub retry_budget: usize,
    pub energy_tol: f64,
    pub g_tol: f64,
    pub max_static_iterations: usize,
    pub armijo: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let d = DynamicOptions::default();
        let s = StaticOptions::default();
        Tolerances {
            det_floor: d.det_floor,
            newton_tol: d.newton_tol,
            max_newton_iterations: d.max_newton_iterations,
            retry_budget: d.retry_budget,
            energy_tol: d.energy_tol,
            g_tol: s.g_tol,
            max_static_iterations: s.max_iterations,
            armijo: s.armijo,
        }
    }
}

impl Tolerances {
    pub fn dynamic(&self, scheme: TimeScheme) -> DynamicOptions {
        DynamicOptions {
            scheme,
            newton_tol: self.newton_tol,
            max_newton_iterations: self.max_newton_iterations,
            retry_budget: self.retry_budget,
            det_floor: self.det_floor,
            energy_tol: self.energy_tol,
        }
    }

    pub fn statics(&self) -> StaticOptions {
        StaticOptions {
            g_tol: self.g_tol,
            max_iterations: self.max_static_iterations,
            det_floor: self.det_floor,
            armijo: self.armijo,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: String,
    /// write snapshot_<n>.csv every this many steps (and at the end)
    pub snapshot_stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { directory: "chemomech-out".into(), snapshot_stride: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub dimension: usize,
    /// defaults to the subcommand
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub domain: DomainConfig,
    pub mesh: MeshConfig,
    #[serde(default)]
    pub material: MaterialParams,
    #[serde(default)]
    pub loads: LoadsConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<TimeConfig>,
    #[serde(default)]
    pub dynamics: DynamicsConfig,
    #[serde(default)]
    pub allen_cahn: AllenCahnConfig,
    #[serde(default)]
    pub statics: StaticsConfig,
    #[serde(default)]
    pub dispersion: DispersionConfig,
    #[serde(default)]
    pub check: CheckConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ProblemConfig {
    pub fn from_toml(text: &str) -> Result<ProblemConfig> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string().trim_end().to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(format!("cannot serialize config: {e}")))
    }

    pub fn mode(&self) -> Mode {
        self.mode.unwrap_or(Mode::Dynamic)
    }

    pub fn time(&self) -> Result<&TimeConfig> {
        self.time.as_ref().ok_or_else(|| Error::Validation("missing [time] table (t_end, dt)".into()))
    }

    /// Expand the defaults that depend on other fields.
    pub fn resolve(mut self, subcommand: Mode) -> Result<ProblemConfig> {
        match self.mode {
            Some(m) if m != subcommand => {
                return Err(Error::Validation(format!(
                    "config mode `{}` does not match subcommand `{}`",
                    m.name(),
                    subcommand.name()
                )))
            }
            _ => self.mode = Some(subcommand),
        }
        let d = self.dimension;
        if d != 1 && d != 2 {
            return Err(Error::Validation(format!("dimension must be 1 or 2 (got {d})")));
        }
        if self.domain.lower.is_empty() && self.domain.upper.is_empty() {
            self.domain.lower = vec![0.0; d];
            self.domain.upper = vec![1.0; d];
        }
        if self.mesh.elements.len() == 1 && d == 2 {
            self.mesh.elements = vec![self.mesh.elements[0]; 2];
        }
        let scalar = *self.mesh.scalar_degree.get_or_insert(self.mesh.degree);
        if self.mesh.quadrature.is_none() {
            self.mesh.quadrature = Some(self.mesh.degree.max(scalar) + 1);
        }
        if self.dispersion.hyper_scale.is_none() {
            self.dispersion.hyper_scale = Some(self.material.hyper_scale);
        }
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(m));
        let d = self.dimension;
        if self.domain.lower.len() != d || self.domain.upper.len() != d {
            return fail(format!("domain.lower and domain.upper need {d} entries"));
        }
        if self.domain.lower.iter().zip(&self.domain.upper).any(|(a, b)| !(b > a)) {
            return fail("domain.upper must exceed domain.lower on every axis".into());
        }
        if self.mesh.elements.len() != d || self.mesh.elements.contains(&0) {
            return fail(format!("mesh.elements needs {d} positive entries"));
        }
        self.material.validate(d)?;
        for (name, p) in self.loads.profiles() {
            if p.value().len() != d || p.value().iter().any(|v| !v.is_finite()) {
                return fail(format!("loads.{name} needs {d} finite components"));
            }
            match p {
                LoadProfile::Ramp { ramp_time, .. } if !(*ramp_time > 0.0) => {
                    return fail(format!("loads.{name}.ramp_time must be > 0"))
                }
                LoadProfile::Harmonic { frequency, .. } if !frequency.is_finite() => {
                    return fail(format!("loads.{name}.frequency must be finite"))
                }
                _ => {}
            }
        }
        if let Schedule::Piecewise(points) = &self.loads.mu_ext {
            if points.is_empty() || points.windows(2).any(|w| w[1][0] <= w[0][0]) {
                return fail("loads.mu_ext breakpoints must be nonempty with increasing times".into());
            }
        }
        if d == 1 && (self.loads.traction.bottom.is_some() || self.loads.traction.top.is_some()) {
            return fail("bottom/top tractions do not exist in 1D".into());
        }
        if d == 1 && self.statics.dirichlet.iter().any(|s| matches!(s, Side::Bottom | Side::Top)) {
            return fail("bottom/top Dirichlet sides do not exist in 1D".into());
        }
        let mode = self.mode();
        if matches!(mode, Mode::Dynamic | Mode::AllenCahn) {
            let t = self.time()?;
            if !(t.dt > 0.0 && t.dt.is_finite()) {
                return fail(format!("time.dt must be > 0 (got {})", t.dt));
            }
            if !(t.t_end > 0.0 && t.t_end.is_finite()) {
                return fail(format!("time.t_end must be > 0 (got {})", t.t_end));
            }
            if self.mesh.degree < 3 {
                return fail("dynamic modes need mesh.degree >= 3".into());
            }
        }
        if mode == Mode::Static && self.mesh.degree < 2 {
            return fail("static mode needs mesh.degree >= 2".into());
        }
        if mode == Mode::AllenCahn && !(self.allen_cahn.relaxation > 0.0) {
            return fail("allen_cahn.relaxation must be > 0".into());
        }
        if mode == Mode::Dispersion && d != 1 {
            return fail("the dispersion probe is one-dimensional".into());
        }
        if self.output.snapshot_stride == 0 {
            return fail("output.snapshot_stride must be >= 1".into());
        }
        if !(self.tolerances.det_floor > 0.0) {
            return fail("tolerances.det_floor must be > 0".into());
        }
        if let Some(z) = self.statics.total_diffusant {
            if !(z >= 0.0) {
                return fail("statics.total_diffusant must be >= 0".into());
            }
        }
        Ok(())
    }
}

/// Read, parse and resolve a config file for the given subcommand.
pub fn parse_config(path: &Path, subcommand: Mode) -> Result<ProblemConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    ProblemConfig::from_toml(&text)?.resolve(subcommand)
}
