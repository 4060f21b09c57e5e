//! Run configuration: a TOML document with one table per concern.
//!
//! ```toml
//! seed = 0
//!
//! [model]
//! family = "two-level"      # two-level | four-level | raw-matrices
//! omega = 4.0
//!
//! [integrator]
//! dt = 1e-3
//! t_final = 10.0
//! record_stride = 10
//! ```
//!
//! Every omitted key takes its default, and [`RunConfig::normalized`] writes
//! the filled-in document back out. Four-level Hamiltonian offsets
//! (`perturbation.delta_x/delta_z` and the matching sweep axes) are in units
//! of the total decay rate γ = γ₁ + γ₂ + γ₃.

use std::f64::consts::{FRAC_PI_4, PI};
use std::fmt;
use std::path::{Path, PathBuf};

use lyapunov_core::control::{DesignOptions, DEFAULT_GUARD_EPS};
use lyapunov_core::dynamics::IntegratorConfig;
use lyapunov_core::models::{
    FourLevelParams, FourLevelPerturbation, LindbladOrientation, ModelFamily, Perturbation,
    PerturbationAxis, TwoLevelParams, TwoLevelPerturbation,
};
use lyapunov_core::robustness::{NoiseMode, NoiseRange, NoiseSpec, SweepAxis, SweepGrid};
use serde::{Deserialize, Serialize};

/// A configuration problem, with the source line when it can be located.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<Seed>,
    model: Option<RawModel>,
    integrator: Option<RawIntegrator>,
    design: Option<RawDesign>,
    perturbation: Option<RawPerturbation>,
    noise: Option<RawNoise>,
    sweep: Option<RawSweep>,
    output: Option<RawOutput>,
}

/// TOML integers are signed, so seeds beyond `i64::MAX` are written as
/// decimal strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Seed {
    Int(i64),
    Text(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    family: Option<String>,
    omega: Option<f64>,
    beta0: Option<f64>,
    phi0: Option<f64>,
    omega_rabi: Option<f64>,
    phi: Option<f64>,
    delta: Option<Vec<f64>>,
    gamma: Option<f64>,
    gammas: Option<Vec<f64>>,
    betas: Option<Vec<f64>>,
    lindblad_orientation: Option<String>,
    h0: Option<String>,
    controls: Option<Vec<String>>,
    jumps: Option<Vec<String>>,
    rates: Option<Vec<f64>>,
    drift_cancel_index: Option<i64>,
    initial_state: Option<String>,
    target_state: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntegrator {
    dt: Option<f64>,
    t_final: Option<f64>,
    record_stride: Option<i64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDesign {
    guard_eps: Option<f64>,
    gains: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPerturbation {
    delta_x: Option<f64>,
    delta_z: Option<f64>,
    d_beta0: Option<f64>,
    d_phi0: Option<f64>,
    d_beta1: Option<f64>,
    d_beta2: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoise {
    range: Option<Vec<f64>>,
    ranges: Option<Vec<Vec<f64>>>,
    mode: Option<String>,
    trials: Option<i64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    axis1: Option<RawAxis>,
    axis2: Option<RawAxis>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAxis {
    name: Option<String>,
    lo: Option<f64>,
    hi: Option<f64>,
    count: Option<i64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<String>,
    schedule: Option<String>,
}

/// Matrices of a user-supplied model, as file paths.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMatrices {
    pub h0: String,
    pub controls: Vec<String>,
    pub jumps: Vec<String>,
    pub rates: Vec<f64>,
    pub drift_cancel_index: Option<usize>,
    pub initial_state: String,
    pub target_state: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelConfig {
    TwoLevel(TwoLevelParams),
    FourLevel(FourLevelParams),
    RawMatrices(RawMatrices),
}

impl ModelConfig {
    pub fn family_name(&self) -> &'static str {
        match self {
            Self::TwoLevel(_) => "two-level",
            Self::FourLevel(_) => "four-level",
            Self::RawMatrices(_) => "raw-matrices",
        }
    }

    /// The built-in family, if any.
    pub fn family(&self) -> Option<ModelFamily> {
        match self {
            Self::TwoLevel(p) => Some(ModelFamily::TwoLevel(*p)),
            Self::FourLevel(p) => Some(ModelFamily::FourLevel(*p)),
            Self::RawMatrices(_) => None,
        }
    }

    /// Scale from config units to energy for an axis: γ for the four-level
    /// Hamiltonian offsets, 1 otherwise.
    fn unit(&self, axis: PerturbationAxis) -> f64 {
        match (self, axis) {
            (Self::FourLevel(p), PerturbationAxis::DeltaX | PerturbationAxis::DeltaZ) => {
                p.gamma_total()
            }
            _ => 1.0,
        }
    }
}

/// Perturbation offsets in config units.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PerturbationConfig {
    pub delta_x: f64,
    pub delta_z: f64,
    pub d_beta0: f64,
    pub d_phi0: f64,
    pub d_beta1: f64,
    pub d_beta2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    pub ranges: Vec<NoiseRange>,
    pub mode: NoiseMode,
    pub trials: usize,
}

/// Sweep axis in config units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisConfig {
    pub axis: PerturbationAxis,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: String,
    pub schedule: Option<String>,
}

/// A validated configuration with every default filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub integrator: IntegratorConfig,
    pub design: DesignOptions,
    pub perturbation: PerturbationConfig,
    pub noise: NoiseConfig,
    pub sweep: Option<(AxisConfig, AxisConfig)>,
    pub output: OutputConfig,
    /// Directory that relative model file paths resolve against.
    pub base_dir: PathBuf,
}

/// Source text, used to point errors at a line.
struct Source<'a> {
    text: &'a str,
}

impl Source<'_> {
    /// Line of `key = ...` inside `[section]` (top level when empty).
    fn line_of(&self, section: &str, key: &str) -> Option<usize> {
        let mut current = String::new();
        for (i, line) in self.text.lines().enumerate() {
            let t = line.trim();
            if let Some(header) = t.strip_prefix('[').and_then(|h| h.strip_suffix(']')) {
                current = header.trim().to_string();
                continue;
            }
            if current == section {
                if let Some((k, _)) = t.split_once('=') {
                    if k.trim() == key {
                        return Some(i + 1);
                    }
                }
            }
        }
        None
    }

    fn err(&self, section: &str, key: &str, message: impl fmt::Display) -> ConfigError {
        let place = if section.is_empty() {
            key.to_string()
        } else {
            format!("[{section}] {key}")
        };
        ConfigError {
            line: self.line_of(section, key),
            message: format!("{place}: {message}"),
        }
    }
}

fn toml_error(e: toml::de::Error, text: &str) -> ConfigError {
    let line = e
        .span()
        .map(|span| text[..span.start.min(text.len())].matches('\n').count() + 1);
    ConfigError {
        line,
        message: e.message().to_string(),
    }
}

/// Applies `section.key=value` overrides to the parsed document. Values are
/// read as TOML values, falling back to a plain string.
fn apply_overrides(table: &mut toml::Table, overrides: &[String]) -> Result<()> {
    for spec in overrides {
        let (path, value) = spec.split_once('=').ok_or_else(|| ConfigError {
            line: None,
            message: format!("override `{spec}` is not of the form section.key=value"),
        })?;
        let value = value.trim();
        let parsed = format!("v = {value}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        let keys: Vec<&str> = path.trim().split('.').collect();
        let (last, parents) = keys.split_last().unwrap();
        let mut node = &mut *table;
        for k in parents {
            let entry = node
                .entry(k.to_string())
                .or_insert_with(|| toml::Value::Table(Default::default()));
            node = entry.as_table_mut().ok_or_else(|| ConfigError {
                line: None,
                message: format!("override `{spec}`: `{k}` is not a table"),
            })?;
        }
        node.insert(last.to_string(), parsed);
    }
    Ok(())
}

fn nonneg_int(src: &Source, section: &str, key: &str, v: i64) -> Result<usize> {
    usize::try_from(v).map_err(|_| src.err(section, key, format!("must be >= 0, got {v}")))
}

fn triple(src: &Source, key: &str, v: Option<Vec<f64>>, default: [f64; 3]) -> Result<[f64; 3]> {
    match v {
        None => Ok(default),
        Some(v) => <[f64; 3]>::try_from(v.as_slice())
            .map_err(|_| src.err("model", key, format!("needs 3 values, got {}", v.len()))),
    }
}

/// Rejects keys that belong to another model family.
fn forbid(src: &Source, family: &str, present: &[(&str, bool)]) -> Result<()> {
    for (key, set) in present {
        if *set {
            return Err(src.err(
                "model",
                key,
                format!("does not apply to the {family} model"),
            ));
        }
    }
    Ok(())
}

impl RunConfig {
    /// Parses, applies overrides, fills defaults, and validates.
    pub fn parse(text: &str, overrides: &[String], base_dir: &Path) -> Result<Self> {
        let raw: RawConfig = if overrides.is_empty() {
            toml::from_str(text).map_err(|e| toml_error(e, text))?
        } else {
            let mut table: toml::Table = text.parse().map_err(|e| toml_error(e, text))?;
            apply_overrides(&mut table, overrides)?;
            toml::Value::Table(table)
                .try_into()
                .map_err(|e: toml::de::Error| ConfigError {
                    line: None,
                    message: e.message().to_string(),
                })?
        };
        Self::resolve(raw, &Source { text }, base_dir)
    }

    pub fn from_file(
        path: &Path,
        overrides: &[String],
    ) -> std::result::Result<Self, ConfigFileError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ConfigFileError::Io(path.into(), e))?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        Self::parse(&text, overrides, &base).map_err(|e| ConfigFileError::Invalid(path.into(), e))
    }

    fn resolve(raw: RawConfig, src: &Source, base_dir: &Path) -> Result<Self> {
        let seed = match raw.seed {
            None => 0,
            Some(Seed::Int(s)) => {
                u64::try_from(s).map_err(|_| src.err("", "seed", "must be >= 0"))?
            }
            Some(Seed::Text(s)) => s.parse().map_err(|_| {
                src.err(
                    "",
                    "seed",
                    format!("`{s}` is not an unsigned 64-bit integer"),
                )
            })?,
        };
        let model = Self::resolve_model(raw.model.unwrap_or_default(), src)?;
        if let ModelConfig::RawMatrices(r) = &model {
            let files = [
                ("h0", &r.h0),
                ("initial_state", &r.initial_state),
                ("target_state", &r.target_state),
            ]
            .into_iter()
            .chain(r.controls.iter().map(|p| ("controls", p)))
            .chain(r.jumps.iter().map(|p| ("jumps", p)));
            for (key, path) in files {
                if !base_dir.join(path).is_file() {
                    return Err(src.err("model", key, format!("file `{path}` not found")));
                }
            }
        }

        let ri = raw.integrator.unwrap_or_default();
        let defaults = IntegratorConfig::default();
        let stride = match ri.record_stride {
            None => defaults.record_stride,
            Some(v) => nonneg_int(src, "integrator", "record_stride", v)?,
        };
        let integrator = IntegratorConfig::new(
            ri.dt.unwrap_or(defaults.dt),
            ri.t_final.unwrap_or(defaults.t_final),
            stride,
        )
        .and_then(|c| c.steps().map(|_| c))
        .map_err(|e| src.err("integrator", "dt", e))?;

        let rd = raw.design.unwrap_or_default();
        let design = DesignOptions {
            guard_eps: rd.guard_eps.unwrap_or(DEFAULT_GUARD_EPS),
            gains: rd.gains.unwrap_or_default(),
        };
        if !(design.guard_eps > 0.0 && design.guard_eps.is_finite()) {
            return Err(src.err(
                "design",
                "guard_eps",
                format!("must be > 0, got {}", design.guard_eps),
            ));
        }

        let perturbation =
            Self::resolve_perturbation(raw.perturbation.unwrap_or_default(), &model, src)?;
        let noise = Self::resolve_noise(raw.noise.unwrap_or_default(), &model, src)?;
        let sweep = Self::resolve_sweep(raw.sweep, &model, src)?;

        let ro = raw.output.unwrap_or_default();
        let output = OutputConfig {
            dir: ro.dir.unwrap_or_else(|| "out".into()),
            schedule: ro.schedule,
        };

        Ok(Self {
            seed,
            model,
            integrator,
            design,
            perturbation,
            noise,
            sweep,
            output,
            base_dir: base_dir.to_path_buf(),
        })
    }

    fn resolve_model(m: RawModel, src: &Source) -> Result<ModelConfig> {
        let family = m.family.clone().ok_or_else(|| {
            src.err(
                "model",
                "family",
                "missing (two-level | four-level | raw-matrices)",
            )
        })?;
        let two = [
            ("omega", m.omega.is_some()),
            ("beta0", m.beta0.is_some()),
            ("phi0", m.phi0.is_some()),
        ];
        let four = [
            ("omega_rabi", m.omega_rabi.is_some()),
            ("phi", m.phi.is_some()),
            ("delta", m.delta.is_some()),
            ("gamma", m.gamma.is_some()),
            ("gammas", m.gammas.is_some()),
            ("betas", m.betas.is_some()),
            ("lindblad_orientation", m.lindblad_orientation.is_some()),
        ];
        let raw = [
            ("h0", m.h0.is_some()),
            ("controls", m.controls.is_some()),
            ("jumps", m.jumps.is_some()),
            ("rates", m.rates.is_some()),
            ("drift_cancel_index", m.drift_cancel_index.is_some()),
            ("initial_state", m.initial_state.is_some()),
            ("target_state", m.target_state.is_some()),
        ];
        match family.as_str() {
            "two-level" => {
                forbid(src, "two-level", &four)?;
                forbid(src, "two-level", &raw)?;
                let omega = m
                    .omega
                    .ok_or_else(|| src.err("model", "omega", "missing"))?;
                let p = TwoLevelParams {
                    omega,
                    beta0: m.beta0.unwrap_or(FRAC_PI_4),
                    phi0: m.phi0.unwrap_or(FRAC_PI_4),
                };
                p.validate().map_err(|e| src.err("model", "omega", e))?;
                Ok(ModelConfig::TwoLevel(p))
            }
            "four-level" => {
                forbid(src, "four-level", &two)?;
                forbid(src, "four-level", &raw)?;
                let gammas = match (m.gamma, m.gammas.clone()) {
                    (Some(_), Some(_)) => {
                        return Err(src.err(
                            "model",
                            "gamma",
                            "give either gamma or gammas, not both",
                        ))
                    }
                    (Some(g), None) => [g / 3.0; 3],
                    (None, g) => triple(src, "gammas", g, [1.0 / 3.0; 3])?,
                };
                if gammas.iter().any(|g| !(*g >= 0.0)) {
                    let key = if m.gamma.is_some() { "gamma" } else { "gammas" };
                    return Err(src.err(
                        "model",
                        key,
                        format!("constraint violated: gammas ≥ 0 (got {gammas:?})"),
                    ));
                }
                let orientation = match &m.lindblad_orientation {
                    None => LindbladOrientation::Decay,
                    Some(s) => s
                        .parse()
                        .map_err(|e| src.err("model", "lindblad_orientation", e))?,
                };
                let p = FourLevelParams {
                    omega_rabi: m.omega_rabi.unwrap_or(5.0),
                    phi: m.phi.unwrap_or(PI / 5.0),
                    delta: triple(src, "delta", m.delta, [4.0, 2.0, 2.0])?,
                    gammas,
                    betas: triple(src, "betas", m.betas, [PI / 5.0, PI / 4.0, PI / 3.0])?,
                    orientation,
                };
                p.validate()
                    .map_err(|e| src.err("model", "omega_rabi", e))?;
                Ok(ModelConfig::FourLevel(p))
            }
            "raw-matrices" => {
                forbid(src, "raw-matrices", &two)?;
                forbid(src, "raw-matrices", &four)?;
                let need =
                    |v: Option<String>, key| v.ok_or_else(|| src.err("model", key, "missing"));
                let jumps = m.jumps.unwrap_or_default();
                let rates = m.rates.unwrap_or_default();
                if jumps.len() != rates.len() {
                    return Err(src.err(
                        "model",
                        "rates",
                        format!("{} rates for {} jump operators", rates.len(), jumps.len()),
                    ));
                }
                let drift_cancel_index = m
                    .drift_cancel_index
                    .map(|v| nonneg_int(src, "model", "drift_cancel_index", v))
                    .transpose()?;
                Ok(ModelConfig::RawMatrices(RawMatrices {
                    h0: need(m.h0, "h0")?,
                    controls: m.controls.unwrap_or_default(),
                    jumps,
                    rates,
                    drift_cancel_index,
                    initial_state: need(m.initial_state, "initial_state")?,
                    target_state: need(m.target_state, "target_state")?,
                }))
            }
            other => Err(src.err(
                "model",
                "family",
                format!("unknown family `{other}` (two-level | four-level | raw-matrices)"),
            )),
        }
    }

    fn resolve_perturbation(
        p: RawPerturbation,
        model: &ModelConfig,
        src: &Source,
    ) -> Result<PerturbationConfig> {
        let keys = [
            ("delta_x", p.delta_x),
            ("delta_z", p.delta_z),
            ("d_beta0", p.d_beta0),
            ("d_phi0", p.d_phi0),
            ("d_beta1", p.d_beta1),
            ("d_beta2", p.d_beta2),
        ];
        let allowed: &[PerturbationAxis] = match model.family() {
            Some(f) => f.axes(),
            None => &[],
        };
        for (key, value) in keys {
            let Some(v) = value else { continue };
            let axis: PerturbationAxis = key.parse().unwrap();
            if !allowed.contains(&axis) {
                return Err(src.err(
                    "perturbation",
                    key,
                    format!("does not apply to the {} model", model.family_name()),
                ));
            }
            if !v.is_finite() {
                return Err(src.err("perturbation", key, "must be finite"));
            }
            if v != 0.0 && model.unit(axis) == 0.0 {
                return Err(src.err("perturbation", key, "is in units of gamma, which is 0"));
            }
        }
        Ok(PerturbationConfig {
            delta_x: p.delta_x.unwrap_or(0.0),
            delta_z: p.delta_z.unwrap_or(0.0),
            d_beta0: p.d_beta0.unwrap_or(0.0),
            d_phi0: p.d_phi0.unwrap_or(0.0),
            d_beta1: p.d_beta1.unwrap_or(0.0),
            d_beta2: p.d_beta2.unwrap_or(0.0),
        })
    }

    fn resolve_noise(n: RawNoise, model: &ModelConfig, src: &Source) -> Result<NoiseConfig> {
        let pair = |v: &[f64], key: &str| -> Result<NoiseRange> {
            let [lo, hi] = <[f64; 2]>::try_from(v)
                .map_err(|_| src.err("noise", key, "each range is [lo, hi]"))?;
            NoiseRange::new(lo, hi).map_err(|e| src.err("noise", key, e))
        };
        let ranges = match (&n.range, &n.ranges) {
            (Some(_), Some(_)) => {
                return Err(src.err("noise", "range", "give either range or ranges, not both"))
            }
            (Some(r), None) => vec![pair(r, "range")?],
            (None, Some(rs)) => rs
                .iter()
                .map(|r| pair(r, "ranges"))
                .collect::<Result<_>>()?,
            (None, None) => vec![NoiseRange::ZERO],
        };
        let mode = match &n.mode {
            Some(m) => m.parse().map_err(|e| src.err("noise", "mode", e))?,
            None if matches!(model, ModelConfig::FourLevel(_)) => NoiseMode::PerRun,
            None => NoiseMode::PerStep,
        };
        let trials = match n.trials {
            None => 100,
            Some(t) if t >= 1 => t as usize,
            Some(t) => return Err(src.err("noise", "trials", format!("must be >= 1, got {t}"))),
        };
        Ok(NoiseConfig {
            ranges,
            mode,
            trials,
        })
    }

    fn resolve_sweep(
        s: Option<RawSweep>,
        model: &ModelConfig,
        src: &Source,
    ) -> Result<Option<(AxisConfig, AxisConfig)>> {
        let Some(family) = model.family() else {
            return match s {
                Some(_) => Err(src.err(
                    "sweep",
                    "axis1",
                    "sweeps need a two-level or four-level model",
                )),
                None => Ok(None),
            };
        };
        let (span, count) = match model {
            ModelConfig::FourLevel(_) => (0.5, 9),
            _ => (1.0, 41),
        };
        let s = s.unwrap_or_default();
        let axis = |raw: Option<RawAxis>,
                    section: &str,
                    default: PerturbationAxis|
         -> Result<AxisConfig> {
            let raw = raw.unwrap_or_default();
            let axis = match raw.name {
                None => default,
                Some(name) => name.parse().map_err(|e| src.err(section, "name", e))?,
            };
            if !family.axes().contains(&axis) {
                return Err(src.err(
                    section,
                    "name",
                    format!("`{axis}` is not a {} perturbation", model.family_name()),
                ));
            }
            let count = match raw.count {
                None => count,
                Some(c) => nonneg_int(src, section, "count", c)?,
            };
            let a = AxisConfig {
                axis,
                lo: raw.lo.unwrap_or(-span),
                hi: raw.hi.unwrap_or(span),
                count,
            };
            SweepAxis {
                axis,
                lo: a.lo,
                hi: a.hi,
                count,
            }
            .validate()
            .map_err(|e| src.err(section, "lo", e))?;
            if model.unit(axis) == 0.0 {
                return Err(src.err(section, "name", "is in units of gamma, which is 0"));
            }
            Ok(a)
        };
        let a1 = axis(s.axis1, "sweep.axis1", PerturbationAxis::DeltaX)?;
        let a2 = axis(s.axis2, "sweep.axis2", PerturbationAxis::DeltaZ)?;
        if a1.axis == a2.axis {
            return Err(src.err("sweep.axis2", "name", "must differ from axis1"));
        }
        Ok(Some((a1, a2)))
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        NoiseSpec {
            ranges: self.noise.ranges.clone(),
            mode: self.noise.mode,
            seed: self.seed,
        }
    }

    /// Core perturbation (energy units) carrying the configured noise.
    pub fn perturbation(&self) -> Option<Perturbation> {
        let p = &self.perturbation;
        let unit = |axis| self.model.unit(axis);
        match &self.model {
            ModelConfig::TwoLevel(_) => Some(Perturbation::TwoLevel(TwoLevelPerturbation {
                delta_x: p.delta_x,
                delta_z: p.delta_z,
                d_beta0: p.d_beta0,
                d_phi0: p.d_phi0,
                noise: self.noise_spec(),
            })),
            ModelConfig::FourLevel(_) => Some(Perturbation::FourLevel(FourLevelPerturbation {
                delta_x: p.delta_x * unit(PerturbationAxis::DeltaX),
                delta_z: p.delta_z * unit(PerturbationAxis::DeltaZ),
                d_beta1: p.d_beta1,
                d_beta2: p.d_beta2,
                noise: self.noise_spec(),
            })),
            ModelConfig::RawMatrices(_) => None,
        }
    }

    /// Sweep grid in energy units.
    pub fn sweep_grid(&self) -> Option<SweepGrid> {
        let (a1, a2) = self.sweep?;
        let scale = |a: AxisConfig| {
            let u = self.model.unit(a.axis);
            SweepAxis {
                axis: a.axis,
                lo: a.lo * u,
                hi: a.hi * u,
                count: a.count,
            }
        };
        Some(SweepGrid {
            axis1: scale(a1),
            axis2: scale(a2),
        })
    }

    pub fn resolve_input(&self, path: &str) -> PathBuf {
        self.base_dir.join(path)
    }

    /// The configuration with every default written out, as TOML.
    pub fn normalized(&self) -> String {
        let model = match &self.model {
            ModelConfig::TwoLevel(p) => RawModel {
                family: Some("two-level".into()),
                omega: Some(p.omega),
                beta0: Some(p.beta0),
                phi0: Some(p.phi0),
                ..Default::default()
            },
            ModelConfig::FourLevel(p) => RawModel {
                family: Some("four-level".into()),
                omega_rabi: Some(p.omega_rabi),
                phi: Some(p.phi),
                delta: Some(p.delta.to_vec()),
                gammas: Some(p.gammas.to_vec()),
                betas: Some(p.betas.to_vec()),
                lindblad_orientation: Some(p.orientation.to_string()),
                ..Default::default()
            },
            ModelConfig::RawMatrices(r) => RawModel {
                family: Some("raw-matrices".into()),
                h0: Some(r.h0.clone()),
                controls: Some(r.controls.clone()),
                jumps: Some(r.jumps.clone()),
                rates: Some(r.rates.clone()),
                drift_cancel_index: r.drift_cancel_index.map(|i| i as i64),
                initial_state: Some(r.initial_state.clone()),
                target_state: Some(r.target_state.clone()),
                ..Default::default()
            },
        };
        let p = &self.perturbation;
        let axes: &[PerturbationAxis] = self.model.family().map_or(&[], |f| f.axes());
        let pick = |axis: PerturbationAxis, v: f64| axes.contains(&axis).then_some(v);
        let perturbation = RawPerturbation {
            delta_x: pick(PerturbationAxis::DeltaX, p.delta_x),
            delta_z: pick(PerturbationAxis::DeltaZ, p.delta_z),
            d_beta0: pick(PerturbationAxis::DBeta0, p.d_beta0),
            d_phi0: pick(PerturbationAxis::DPhi0, p.d_phi0),
            d_beta1: pick(PerturbationAxis::DBeta1, p.d_beta1),
            d_beta2: pick(PerturbationAxis::DBeta2, p.d_beta2),
        };
        let (range, ranges) = match self.noise.ranges.as_slice() {
            [r] => (Some(vec![r.lo, r.hi]), None),
            rs => (None, Some(rs.iter().map(|r| vec![r.lo, r.hi]).collect())),
        };
        let axis = |a: AxisConfig| RawAxis {
            name: Some(a.axis.name().into()),
            lo: Some(a.lo),
            hi: Some(a.hi),
            count: Some(a.count as i64),
        };
        let raw = RawConfig {
            seed: Some(match i64::try_from(self.seed) {
                Ok(s) => Seed::Int(s),
                Err(_) => Seed::Text(self.seed.to_string()),
            }),
            model: Some(model),
            integrator: Some(RawIntegrator {
                dt: Some(self.integrator.dt),
                t_final: Some(self.integrator.t_final),
                record_stride: Some(self.integrator.record_stride as i64),
            }),
            design: Some(RawDesign {
                guard_eps: Some(self.design.guard_eps),
                gains: Some(self.design.gains.clone()),
            }),
            perturbation: Some(perturbation),
            noise: Some(RawNoise {
                range,
                ranges,
                mode: Some(self.noise.mode.to_string()),
                trials: Some(self.noise.trials as i64),
            }),
            sweep: self.sweep.map(|(a1, a2)| RawSweep {
                axis1: Some(axis(a1)),
                axis2: Some(axis(a2)),
            }),
            output: Some(RawOutput {
                dir: Some(self.output.dir.clone()),
                schedule: self.output.schedule.clone(),
            }),
        };
        toml::to_string(&raw).expect("config serializes")
    }
}

/// Failure to load a config file.
#[derive(Debug)]
pub enum ConfigFileError {
    Io(PathBuf, std::io::Error),
    Invalid(PathBuf, ConfigError),
}

impl fmt::Display for ConfigFileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Io(p, e) => write!(f, "{}: {e}", p.display()),
            Self::Invalid(p, e) => write!(f, "{}: {e}", p.display()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::parse(text, &[], Path::new(""))
    }

    fn raw_dir() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        for f in ["h.csv", "x.csv", "r.csv", "t.csv"] {
            std::fs::write(dir.path().join(f), "1,0\n").unwrap();
        }
        dir
    }

    #[test]
    fn minimal_two_level_fills_defaults() {
        let c = parse("[model]\nfamily = \"two-level\"\nomega = 4\n").unwrap();
        assert_eq!(c.integrator.dt, 1e-3);
        assert_eq!(c.integrator.t_final, 10.0);
        assert_eq!(c.integrator.record_stride, 10);
        assert_eq!(c.seed, 0);
        assert_eq!(c.noise.trials, 100);
        assert_eq!(c.noise.mode, NoiseMode::PerStep);
        assert_eq!(c.design.guard_eps, DEFAULT_GUARD_EPS);
        assert_eq!(
            c.model,
            ModelConfig::TwoLevel(TwoLevelParams {
                omega: 4.0,
                beta0: FRAC_PI_4,
                phi0: FRAC_PI_4
            })
        );
        let (a1, a2) = c.sweep.unwrap();
        assert_eq!(
            (a1.lo, a1.hi, a2.axis),
            (-1.0, 1.0, PerturbationAxis::DeltaZ)
        );
    }

    #[test]
    fn normalized_dump_round_trips() {
        let texts = [
            "[model]\nfamily = \"two-level\"\nomega = 4\n",
            "seed = 9\n[model]\nfamily = \"four-level\"\nomega_rabi = 5\nphi = 0.6283185307179586\ndelta = [4, 2, 2]\ngamma = 1\n[noise]\nranges = [[-1, 0], [-1, 1], [0, 0]]\n",
            "seed = \"18446744073709551615\"\n[model]\nfamily = \"raw-matrices\"\nh0 = \"h.csv\"\ncontrols = [\"x.csv\"]\ninitial_state = \"r.csv\"\ntarget_state = \"t.csv\"\n",
        ];
        let dir = raw_dir();
        for text in texts {
            let c = RunConfig::parse(text, &[], dir.path()).unwrap();
            let again = RunConfig::parse(&c.normalized(), &[], dir.path()).unwrap();
            assert_eq!(again, c, "dump:\n{}", c.normalized());
            assert_eq!(again.normalized(), c.normalized());
        }
    }

    #[test]
    fn negative_gamma_names_the_constraint() {
        let e = parse("[model]\nfamily = \"four-level\"\ngamma = -1\n").unwrap_err();
        assert!(e.message.contains("gammas ≥ 0"), "{e}");
        assert_eq!(e.line, Some(3));
    }

    #[test]
    fn unknown_keys_are_errors_with_lines() {
        let e = parse("[model]\nfamily = \"two-level\"\nomega = 4\nomgea = 3\n").unwrap_err();
        assert!(e.message.contains("omgea"), "{e}");
        assert_eq!(e.line, Some(4));
        let e = parse("[model]\nfamily = \"two-level\"\nomega = \"fast\"\n").unwrap_err();
        assert_eq!(e.line, Some(3));
    }

    #[test]
    fn foreign_family_keys_rejected() {
        let e =
            parse("[model]\nfamily = \"two-level\"\nomega = 4\nbetas = [0, 0, 0]\n").unwrap_err();
        assert!(e.message.contains("betas"), "{e}");
        let e =
            parse("[model]\nfamily = \"two-level\"\nomega = 4\n[perturbation]\nd_beta1 = 0.1\n")
                .unwrap_err();
        assert!(e.message.contains("d_beta1"), "{e}");
        assert_eq!(e.line, Some(5));
    }

    #[test]
    fn overrides_apply_before_validation() {
        let text = "[model]\nfamily = \"two-level\"\nomega = 4\n";
        let c = RunConfig::parse(
            text,
            &[
                "integrator.t_final=2".into(),
                "noise.mode=per-run".into(),
                "seed=7".into(),
            ],
            Path::new(""),
        )
        .unwrap();
        assert_eq!(c.integrator.t_final, 2.0);
        assert_eq!(c.noise.mode, NoiseMode::PerRun);
        assert_eq!(c.seed, 7);
        assert!(RunConfig::parse(text, &["model.omega".into()], Path::new("")).is_err());
    }

    #[test]
    fn four_level_offsets_scale_with_gamma() {
        let c = parse(
            "[model]\nfamily = \"four-level\"\ngamma = 2\n[perturbation]\ndelta_x = 0.5\n[sweep.axis1]\nname = \"delta_z\"\n[sweep.axis2]\nname = \"d_beta1\"\n",
        )
        .unwrap();
        let Some(Perturbation::FourLevel(d)) = c.perturbation() else {
            panic!()
        };
        assert_eq!(d.delta_x, 1.0);
        let grid = c.sweep_grid().unwrap();
        assert_eq!((grid.axis1.lo, grid.axis1.hi), (-1.0, 1.0));
        assert_eq!((grid.axis2.lo, grid.axis2.hi), (-0.5, 0.5));
        assert_eq!(c.noise.mode, NoiseMode::PerRun);
    }

    #[test]
    fn invalid_values_rejected() {
        let base = "[model]\nfamily = \"two-level\"\nomega = 4\n";
        for extra in [
            "[integrator]\ndt = 0.003\nt_final = 1.0001\n",
            "[noise]\nrange = [1, -1]\n",
            "[noise]\ntrials = 0\n",
            "[sweep.axis1]\nlo = 0\nhi = 0\n",
            "[sweep.axis1]\nname = \"delta_y\"\n",
            "[design]\nguard_eps = 0\n",
        ] {
            assert!(parse(&format!("{base}{extra}")).is_err(), "{extra}");
        }
        assert!(parse("[model]\nfamily = \"three-level\"\n").is_err());
        assert!(parse("[model]\nomega = 4\n").is_err());
    }

    #[test]
    fn raw_matrix_files_must_exist() {
        let dir = raw_dir();
        let text = "[model]\nfamily = \"raw-matrices\"\nh0 = \"h.csv\"\ncontrols = [\"missing.csv\"]\ninitial_state = \"r.csv\"\ntarget_state = \"t.csv\"\n";
        let e = RunConfig::parse(text, &[], dir.path()).unwrap_err();
        assert!(e.message.contains("missing.csv"), "{e}");
        assert_eq!(e.line, Some(4));
    }
}
