//! Scenario files: one experiment per JSON document.

use std::f64::consts::PI;
use std::path::Path;

use catsim::device::DeviceParams;
use catsim::fock::required_dim;
use catsim::gates::GateModel;
use catsim::wigner::{linspace, Protocol, WignerGrid};
use catsim::Complex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Bundled scenarios, compiled into the binary.
pub const BUNDLED: [(&str, &str); 9] = [
    ("stabilize_cat", include_str!("../scenarios/stabilize_cat.json")),
    ("fig2_enhanced_tomography", include_str!("../scenarios/fig2_enhanced_tomography.json")),
    ("x_gate_sweep", include_str!("../scenarios/x_gate_sweep.json")),
    ("squeezing_sweep", include_str!("../scenarios/squeezing_sweep.json")),
    ("stabilize_bipartite", include_str!("../scenarios/stabilize_bipartite.json")),
    ("zeno_y_gate", include_str!("../scenarios/zeno_y_gate.json")),
    ("z_gate", include_str!("../scenarios/z_gate.json")),
    ("fig9_pulse_opt", include_str!("../scenarios/fig9_pulse_opt.json")),
    ("reconstruct_random", include_str!("../scenarios/reconstruct_random.json")),
];

pub const SCHEMA: &str = include_str!("../scenarios/schema.json");

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Amplitude {
    Real(f64),
    Complex([f64; 2]),
}

impl Amplitude {
    pub fn value(self) -> Complex {
        match self {
            Amplitude::Real(x) => Complex::new(x, 0.0),
            Amplitude::Complex([re, im]) => Complex::new(re, im),
        }
    }
}

/// `[lo, hi, n]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis(pub f64, pub f64, pub usize);

impl Axis {
    pub fn values(self) -> Vec<f64> {
        linspace(self.0, self.1, self.2)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub re: Axis,
    pub im: Axis,
}

impl GridSpec {
    pub fn build(&self) -> Result<WignerGrid, CliError> {
        for (name, a) in [("re", self.re), ("im", self.im)] {
            if a.2 == 0 || !(a.0 <= a.1) || (a.2 == 1 && a.0 != a.1) {
                return Err(CliError::schema(format!("grid.{name}"), "expected [lo, hi, n] with lo <= hi and n >= 1"));
            }
        }
        WignerGrid::new(self.re.values(), self.im.values()).map_err(CliError::from)
    }

    fn max_abs(&self) -> f64 {
        let re = self.re.0.abs().max(self.re.1.abs());
        let im = self.im.0.abs().max(self.im.1.abs());
        re.hypot(im)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Reduced,
    Bipartite,
}

fn default_dt() -> f64 {
    1.0
}

fn default_record_ns() -> f64 {
    10.0
}

fn default_tau() -> f64 {
    300.0
}

fn default_sigma() -> f64 {
    250.0
}

fn default_deflate() -> f64 {
    300.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilizeSettings {
    pub alpha: Amplitude,
    pub duration_ns: f64,
    #[serde(default)]
    pub model: ModelKind,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_record_ns")]
    pub record_every_ns: f64,
    /// Wigner map of the final memory state.
    #[serde(default)]
    pub grid: Option<GridSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomographySettings {
    pub alpha: Amplitude,
    /// Stabilization from vacuum before the readout.
    pub prep_ns: f64,
    pub protocols: Vec<Protocol>,
    pub grid: GridSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateXSettings {
    pub alpha: Amplitude,
    pub thetas: Vec<f64>,
    #[serde(default = "default_tau")]
    pub tau_ns: f64,
    #[serde(default = "default_sigma")]
    pub sigma_ns: f64,
    #[serde(default)]
    pub model: GateModel,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateYSettings {
    pub alpha: Amplitude,
    pub t_rots_ns: Vec<f64>,
    /// Drive amplitude in rad/ns; calibrated so `calibrate_ns` reaches `|1⟩` when absent.
    #[serde(default)]
    pub epsilon_y: Option<f64>,
    #[serde(default)]
    pub calibrate_ns: Option<f64>,
    #[serde(default = "default_deflate")]
    pub deflate_ns: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateZSettings {
    pub alpha: Amplitude,
    pub thetas: Vec<f64>,
    pub duration_ns: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSettings {
    pub alpha: Amplitude,
    pub theta: f64,
    pub taus_ns: Vec<f64>,
    pub ratios: Vec<f64>,
    #[serde(default)]
    pub model: GateModel,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SqueezeSettings {
    pub alpha: Amplitude,
    pub t_offs_ns: Vec<f64>,
    /// Span of the amplitude-equation trace written alongside the sweep.
    #[serde(default)]
    pub amplitude_span_ns: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructSettings {
    pub alpha: Amplitude,
    /// Bloch vectors to round-trip; `random` more are drawn from the seed.
    #[serde(default)]
    pub bloch: Vec<[f64; 3]>,
    #[serde(default)]
    pub random: usize,
    pub grid: GridSpec,
    /// Reconstruct from the tomography of this protocol instead of the ideal map.
    #[serde(default)]
    pub protocol: Option<Protocol>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Stabilize,
    Tomography,
    GateXSweep,
    GateY,
    GateZ,
    OptimizePulse,
    SqueezeSweep,
    Reconstruct,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Experiment {
    Stabilize(StabilizeSettings),
    Tomography(TomographySettings),
    GateXSweep(GateXSettings),
    GateY(GateYSettings),
    GateZ(GateZSettings),
    OptimizePulse(PulseSettings),
    SqueezeSweep(SqueezeSettings),
    Reconstruct(ReconstructSettings),
}

fn settings<T: serde::de::DeserializeOwned>(v: &Value) -> Result<T, CliError> {
    serde_json::from_value(v.clone()).map_err(|e| CliError::schema("settings", e.to_string()))
}

impl Experiment {
    fn decode(kind: Kind, v: &Value) -> Result<Self, CliError> {
        Ok(match kind {
            Kind::Stabilize => Experiment::Stabilize(settings(v)?),
            Kind::Tomography => Experiment::Tomography(settings(v)?),
            Kind::GateXSweep => Experiment::GateXSweep(settings(v)?),
            Kind::GateY => Experiment::GateY(settings(v)?),
            Kind::GateZ => Experiment::GateZ(settings(v)?),
            Kind::OptimizePulse => Experiment::OptimizePulse(settings(v)?),
            Kind::SqueezeSweep => Experiment::SqueezeSweep(settings(v)?),
            Kind::Reconstruct => Experiment::Reconstruct(settings(v)?),
        })
    }
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Stabilize(_) => "stabilize",
            Experiment::Tomography(_) => "tomography",
            Experiment::GateXSweep(_) => "gate_x_sweep",
            Experiment::GateY(_) => "gate_y",
            Experiment::GateZ(_) => "gate_z",
            Experiment::OptimizePulse(_) => "optimize_pulse",
            Experiment::SqueezeSweep(_) => "squeeze_sweep",
            Experiment::Reconstruct(_) => "reconstruct",
        }
    }

    fn alpha(&self) -> Complex {
        match self {
            Experiment::Stabilize(s) => s.alpha.value(),
            Experiment::Tomography(s) => s.alpha.value(),
            Experiment::GateXSweep(s) => s.alpha.value(),
            Experiment::GateY(s) => s.alpha.value(),
            Experiment::GateZ(s) => s.alpha.value(),
            Experiment::OptimizePulse(s) => s.alpha.value(),
            Experiment::SqueezeSweep(s) => s.alpha.value(),
            Experiment::Reconstruct(s) => s.alpha.value(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub kind: Kind,
    pub settings: Value,
    /// Memory and buffer truncations.
    pub dims: [usize; 2],
    #[serde(default)]
    pub params_override: Option<Value>,
    #[serde(default)]
    pub seed: u64,
}

/// A parsed scenario together with its source text.
#[derive(Clone, Debug)]
pub struct Loaded {
    pub scenario: Scenario,
    pub experiment: Experiment,
    pub params: DeviceParams,
    pub source: String,
}

impl Loaded {
    /// SHA-256 of the scenario file as read.
    pub fn hash(&self) -> String {
        Sha256::digest(self.source.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

pub fn parse(source: &str) -> Result<Loaded, CliError> {
    let scenario: Scenario = serde_json::from_str(source).map_err(|e| CliError::Schema {
        field: None,
        line: Some(e.line()),
        column: Some(e.column()),
        message: e.to_string(),
    })?;
    let experiment = Experiment::decode(scenario.kind, &scenario.settings)?;
    let params = merged_params(scenario.params_override.as_ref())?;
    Ok(Loaded {
        scenario,
        experiment,
        params,
        source: source.to_string(),
    })
}

/// Reads a scenario file, or a bundled scenario by name.
pub fn load(spec: &str) -> Result<Loaded, CliError> {
    if let Some((_, src)) = BUNDLED.iter().find(|(name, _)| *name == spec) {
        return parse(src);
    }
    let path = Path::new(spec);
    let source = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    parse(&source)
}

fn merged_params(over: Option<&Value>) -> Result<DeviceParams, CliError> {
    let Some(over) = over else {
        return Ok(DeviceParams::default());
    };
    let Value::Object(fields) = over else {
        return Err(CliError::schema("params_override", "expected an object"));
    };
    let mut base = serde_json::to_value(DeviceParams::default()).expect("params serialize");
    let table = base.as_object_mut().expect("params are an object");
    for (k, v) in fields {
        if !table.contains_key(k) {
            return Err(CliError::schema(format!("params_override.{k}"), "unknown device parameter"));
        }
        table.insert(k.clone(), v.clone());
    }
    let params: DeviceParams = serde_json::from_value(base)
        .map_err(|e| CliError::schema("params_override", e.to_string()))?;
    params
        .validate()
        .map_err(|e| CliError::schema("params_override", e.to_string()))?;
    Ok(params)
}

fn positive(field: &str, x: f64) -> Result<(), CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(CliError::schema(field, format!("must be positive, got {x}")))
    }
}

fn non_empty<T>(field: &str, v: &[T]) -> Result<(), CliError> {
    if v.is_empty() {
        Err(CliError::schema(field, "must not be empty"))
    } else {
        Ok(())
    }
}

fn guard(what: &str, dim: usize, beta_abs: f64) -> Result<(), CliError> {
    let required = required_dim(beta_abs);
    if dim < required {
        return Err(CliError::Sim(catsim::Error::Truncation {
            what: what.to_string(),
            required,
            dim,
        }));
    }
    Ok(())
}

impl Loaded {
    /// Schema-level value checks and truncation guards; runs nothing.
    pub fn validate(&self) -> Result<(), CliError> {
        let [dm, db] = self.scenario.dims;
        if dm < 2 {
            return Err(CliError::schema("dims", "memory truncation must be at least 2"));
        }
        let alpha = self.experiment.alpha();
        if !(alpha.re.is_finite() && alpha.im.is_finite()) {
            return Err(CliError::schema("settings.alpha", "must be finite"));
        }
        let a = alpha.norm();
        guard(self.experiment.kind(), dm, a)?;
        match &self.experiment {
            Experiment::Stabilize(s) => {
                positive("settings.duration_ns", s.duration_ns)?;
                positive("settings.dt", s.dt)?;
                positive("settings.record_every_ns", s.record_every_ns)?;
                if s.model == ModelKind::Bipartite && db < 2 {
                    return Err(CliError::schema("dims", "bipartite model needs a buffer truncation of at least 2"));
                }
                if let Some(g) = &s.grid {
                    g.build()?;
                }
            }
            Experiment::Tomography(s) => {
                positive("settings.prep_ns", s.prep_ns)?;
                non_empty("settings.protocols", &s.protocols)?;
                s.grid.build()?;
                guard("tomography displacement", dm, a + s.grid.max_abs())?;
            }
            Experiment::GateXSweep(s) => {
                non_empty("settings.thetas", &s.thetas)?;
                positive("settings.tau_ns", s.tau_ns)?;
                positive("settings.sigma_ns", s.sigma_ns)?;
                positive("settings.dt", s.dt)?;
            }
            Experiment::GateY(s) => {
                non_empty("settings.t_rots_ns", &s.t_rots_ns)?;
                if s.t_rots_ns.iter().any(|t| !(*t >= 0.0)) {
                    return Err(CliError::schema("settings.t_rots_ns", "times must be non-negative"));
                }
                if s.epsilon_y.is_none() {
                    let t = s.calibrate_ns.ok_or_else(|| {
                        CliError::schema("settings.calibrate_ns", "required when epsilon_y is absent")
                    })?;
                    positive("settings.calibrate_ns", t)?;
                }
                positive("settings.deflate_ns", s.deflate_ns)?;
            }
            Experiment::GateZ(s) => {
                non_empty("settings.thetas", &s.thetas)?;
                if s.thetas.iter().any(|t| !(t.abs() < PI)) {
                    return Err(CliError::schema("settings.thetas", "angles must lie in (-pi, pi)"));
                }
                positive("settings.duration_ns", s.duration_ns)?;
            }
            Experiment::OptimizePulse(s) => {
                non_empty("settings.taus_ns", &s.taus_ns)?;
                non_empty("settings.ratios", &s.ratios)?;
                for t in &s.taus_ns {
                    positive("settings.taus_ns", *t)?;
                }
                for r in &s.ratios {
                    positive("settings.ratios", *r)?;
                }
                positive("settings.dt", s.dt)?;
            }
            Experiment::SqueezeSweep(s) => {
                non_empty("settings.t_offs_ns", &s.t_offs_ns)?;
                if s.t_offs_ns.iter().any(|t| !(*t >= 0.0)) {
                    return Err(CliError::schema("settings.t_offs_ns", "times must be non-negative"));
                }
                if let Some(span) = s.amplitude_span_ns {
                    positive("settings.amplitude_span_ns", span)?;
                }
                let need = (4.0 * a * a).ceil() as usize + 1;
                if dm < need {
                    return Err(CliError::Sim(catsim::Error::Truncation {
                        what: "squeezed cat".into(),
                        required: need,
                        dim: dm,
                    }));
                }
                if db < 5 {
                    return Err(CliError::schema("dims", "squeezing needs a buffer truncation of at least 5"));
                }
            }
            Experiment::Reconstruct(s) => {
                if s.bloch.is_empty() && s.random == 0 {
                    return Err(CliError::schema("settings", "give bloch vectors or a random count"));
                }
                for r in &s.bloch {
                    if r.iter().map(|x| x * x).sum::<f64>() > 1.0 + 1e-12 {
                        return Err(CliError::schema("settings.bloch", "Bloch vectors must have length <= 1"));
                    }
                }
                s.grid.build()?;
            }
        }
        Ok(())
    }

    /// Replaces the truncations, e.g. from `--dims`.
    pub fn with_dims(mut self, dims: [usize; 2]) -> Self {
        self.scenario.dims = dims;
        self
    }
}
