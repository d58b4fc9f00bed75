//! JSON run configuration. Physical parameters carry their unit in the key
//! and have no defaults; numerical knobs may be omitted.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthesis::{NoiseModel, DEFAULT_AVERAGES, DEFAULT_FLOOR};
use crate::sysmodel::{
    hz, validate_system, Cavity, CavityIndex, Drive, DriveSet, MechanicalMode, Sideband, SystemConfig, ValidationReport,
};

use super::output::sha256_hex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechSection {
    pub omega_m_hz: f64,
    pub gamma_m_hz: f64,
    pub n_th: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavitySection {
    pub omega_c_hz: f64,
    pub kappa_hz: f64,
    pub kappa_ext_hz: f64,
    pub n_cav: f64,
    pub g0_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSection {
    /// 1 = measurement cavity, 2 = control cavity.
    pub cavity: u8,
    pub sideband: Sideband,
    /// Scattering rate Γ/2π.
    pub rate_hz: f64,
    pub detuning_hz: f64,
    pub phase_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default = "default_floor")]
    pub floor: f64,
    #[serde(default = "default_averages")]
    pub averages: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_floor() -> f64 {
    DEFAULT_FLOOR
}
fn default_averages() -> f64 {
    DEFAULT_AVERAGES
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self { floor: DEFAULT_FLOOR, averages: DEFAULT_AVERAGES, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    /// Bins per synthesized spectrum.
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    /// Half-width of each spectrum window in effective mechanical linewidths.
    #[serde(default = "default_grid_linewidths")]
    pub grid_linewidths: f64,
    /// Offset of the non-QND measurement pair from the sidebands.
    #[serde(default = "default_nonqnd_detuning_hz")]
    pub nonqnd_detuning_hz: f64,
    /// Probe points of a driven-response sweep.
    #[serde(default = "default_response_points")]
    pub response_points: usize,
}

fn default_grid_points() -> usize {
    crate::dynamics::DEFAULT_GRID_POINTS
}
fn default_grid_linewidths() -> f64 {
    crate::dynamics::DEFAULT_GRID_LINEWIDTHS
}
fn default_nonqnd_detuning_hz() -> f64 {
    50e3
}
fn default_response_points() -> usize {
    2001
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            grid_points: default_grid_points(),
            grid_linewidths: default_grid_linewidths(),
            nonqnd_detuning_hz: default_nonqnd_detuning_hz(),
            response_points: default_response_points(),
        }
    }
}

/// One scenario entry. `label` names the output directory and defaults to
/// the scenario name; ratios are relative to the control-cavity lower drive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioSpec {
    BackactionSweep {
        #[serde(default)]
        label: Option<String>,
        /// Γ₁/Γ₂⁻ of the measurement drives.
        measurement_ratios: Vec<f64>,
    },
    SqueezeSweep {
        #[serde(default)]
        label: Option<String>,
        /// Γ₂⁺/Γ₂⁻.
        squeeze_ratios: Vec<f64>,
        measurement_ratio: f64,
    },
    Tomography {
        #[serde(default)]
        label: Option<String>,
        squeeze_ratio: f64,
        measurement_ratio: f64,
        phases_rad: Vec<f64>,
    },
    DrivenResponse {
        #[serde(default)]
        label: Option<String>,
        probe_cavity: u8,
        /// Probe span on either side of the window; defaults to the spectrum
        /// window width.
        #[serde(default)]
        half_span_hz: Option<f64>,
    },
    SingleSpectrum {
        #[serde(default)]
        label: Option<String>,
        cavity: u8,
    },
}

impl ScenarioSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioSpec::BackactionSweep { .. } => "backaction_sweep",
            ScenarioSpec::SqueezeSweep { .. } => "squeeze_sweep",
            ScenarioSpec::Tomography { .. } => "tomography",
            ScenarioSpec::DrivenResponse { .. } => "driven_response",
            ScenarioSpec::SingleSpectrum { .. } => "single_spectrum",
        }
    }

    pub fn label(&self) -> &str {
        let l = match self {
            ScenarioSpec::BackactionSweep { label, .. }
            | ScenarioSpec::SqueezeSweep { label, .. }
            | ScenarioSpec::Tomography { label, .. }
            | ScenarioSpec::DrivenResponse { label, .. }
            | ScenarioSpec::SingleSpectrum { label, .. } => label,
        };
        l.as_deref().unwrap_or(self.name())
    }

    fn needs_cooling_reference(&self) -> bool {
        matches!(
            self,
            ScenarioSpec::BackactionSweep { .. } | ScenarioSpec::SqueezeSweep { .. } | ScenarioSpec::Tomography { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub mech: MechSection,
    pub cavities: Vec<CavitySection>,
    pub drives: Vec<DriveSection>,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub scenarios: Vec<ScenarioSpec>,
}

/// A fully validated configuration.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub file: ConfigFile,
    pub system: SystemConfig,
    pub drives: DriveSet,
    pub noise: NoiseModel,
    pub numerics: Numerics,
    pub scenarios: Vec<ScenarioSpec>,
    pub report: ValidationReport,
    /// sha256 of the config text.
    pub digest: String,
}

impl LoadedConfig {
    /// Γ₂⁻ of the base drive set.
    pub fn cooling_rate(&self) -> f64 {
        self.drives.rate(CavityIndex::Control, Sideband::Lower)
    }
}

fn cfg_err(e: Error) -> Error {
    match e {
        Error::Domain(m) => Error::Config(m),
        other => other,
    }
}

fn cavity_index(n: u8, path: &str) -> Result<CavityIndex> {
    CavityIndex::from_number(n).map_err(|_| Error::Config(format!("{path}: cavity must be 1 or 2, got {n}")))
}

pub fn parse_config(text: &str) -> Result<LoadedConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ConfigFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path.is_empty() || path == "." {
            Error::Config(inner.to_string())
        } else {
            Error::Config(format!("{path}: {inner}"))
        }
    })?;
    build(file, sha256_hex(text.as_bytes()))
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

fn build(file: ConfigFile, digest: String) -> Result<LoadedConfig> {
    let m = &file.mech;
    let mech = MechanicalMode::new(hz(m.omega_m_hz), hz(m.gamma_m_hz), m.n_th)
        .map_err(|e| Error::Config(format!("mech: {}", cfg_err(e))))?;
    if file.cavities.len() != 2 {
        return Err(Error::Config(format!("cavities: expected exactly 2 entries, got {}", file.cavities.len())));
    }
    let mut cav = Vec::new();
    for (i, c) in file.cavities.iter().enumerate() {
        cav.push(
            Cavity::new(hz(c.omega_c_hz), hz(c.kappa_hz), hz(c.kappa_ext_hz), c.n_cav, hz(c.g0_hz))
                .map_err(|e| Error::Config(format!("cavities[{i}]: {}", cfg_err(e))))?,
        );
    }
    let system = SystemConfig::new(mech, cav[0], cav[1]).map_err(|e| Error::Config(format!("cavities: {}", cfg_err(e))))?;

    let mut drives = Vec::new();
    for (i, d) in file.drives.iter().enumerate() {
        let path = format!("drives[{i}]");
        let all = [d.rate_hz, d.detuning_hz, d.phase_rad];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("{path}: values must be finite")));
        }
        drives.push(
            Drive::new(cavity_index(d.cavity, &path)?, d.sideband, hz(d.rate_hz))
                .with_detuning(hz(d.detuning_hz))
                .with_phase(d.phase_rad),
        );
    }
    let drives = DriveSet::new(drives).map_err(|e| Error::Config(format!("drives: {}", cfg_err(e))))?;

    let n = &file.noise;
    let noise = NoiseModel::new(n.floor, n.averages, n.seed).map_err(|e| Error::Config(format!("noise: {}", cfg_err(e))))?;

    let num = &file.numerics;
    if num.grid_points < 16 || num.response_points < 16 {
        return Err(Error::Config("numerics: grids need at least 16 points".into()));
    }
    if !(num.grid_linewidths >= 3.0 && num.grid_linewidths.is_finite()) {
        return Err(Error::Config("numerics.grid_linewidths: must be ≥ 3".into()));
    }
    if !(num.nonqnd_detuning_hz > 0.0 && num.nonqnd_detuning_hz.is_finite()) {
        return Err(Error::Config("numerics.nonqnd_detuning_hz: must be positive".into()));
    }

    let mut labels = std::collections::BTreeSet::new();
    for (i, s) in file.scenarios.iter().enumerate() {
        let path = format!("scenarios[{i}]");
        check_scenario(s, &path)?;
        if !labels.insert(s.label().to_string()) {
            return Err(Error::Config(format!("{path}: duplicate scenario label `{}`", s.label())));
        }
        if s.needs_cooling_reference() && drives.rate(CavityIndex::Control, Sideband::Lower) <= 0.0 {
            return Err(Error::Config(format!(
                "{path}: {} needs a control-cavity lower-sideband drive as the rate reference",
                s.name()
            )));
        }
    }

    let report = validate_system(&system, &drives);
    Ok(LoadedConfig {
        system,
        drives,
        noise,
        numerics: num.clone(),
        scenarios: file.scenarios.clone(),
        report,
        digest,
        file,
    })
}

fn check_ratios(v: &[f64], path: &str) -> Result<()> {
    if v.is_empty() {
        return Err(Error::Config(format!("{path}: grid is empty")));
    }
    if let Some(bad) = v.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
        return Err(Error::Config(format!("{path}: ratios must be finite and ≥ 0, got {bad}")));
    }
    Ok(())
}

fn check_scenario(s: &ScenarioSpec, path: &str) -> Result<()> {
    if let Some(l) = match s {
        ScenarioSpec::BackactionSweep { label, .. }
        | ScenarioSpec::SqueezeSweep { label, .. }
        | ScenarioSpec::Tomography { label, .. }
        | ScenarioSpec::DrivenResponse { label, .. }
        | ScenarioSpec::SingleSpectrum { label, .. } => label,
    } {
        if l.is_empty() || !l.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(Error::Config(format!("{path}.label: use letters, digits, `_` or `-`")));
        }
    }
    match s {
        ScenarioSpec::BackactionSweep { measurement_ratios, .. } => {
            check_ratios(measurement_ratios, &format!("{path}.measurement_ratios"))?;
            if measurement_ratios.iter().any(|r| *r <= 0.0) {
                return Err(Error::Config(format!("{path}.measurement_ratios: must be positive")));
            }
        }
        ScenarioSpec::SqueezeSweep { squeeze_ratios, measurement_ratio, .. } => {
            check_ratios(squeeze_ratios, &format!("{path}.squeeze_ratios"))?;
            if !(*measurement_ratio > 0.0 && measurement_ratio.is_finite()) {
                return Err(Error::Config(format!("{path}.measurement_ratio: must be positive")));
            }
        }
        ScenarioSpec::Tomography { squeeze_ratio, measurement_ratio, phases_rad, .. } => {
            check_ratios(&[*squeeze_ratio], &format!("{path}.squeeze_ratio"))?;
            if !(*measurement_ratio > 0.0 && measurement_ratio.is_finite()) {
                return Err(Error::Config(format!("{path}.measurement_ratio: must be positive")));
            }
            if phases_rad.len() < 5 || phases_rad.iter().any(|p| !p.is_finite()) {
                return Err(Error::Config(format!("{path}.phases_rad: need at least 5 finite phases")));
            }
        }
        ScenarioSpec::DrivenResponse { probe_cavity, half_span_hz, .. } => {
            cavity_index(*probe_cavity, &format!("{path}.probe_cavity"))?;
            if let Some(h) = half_span_hz {
                if !(*h > 0.0 && h.is_finite()) {
                    return Err(Error::Config(format!("{path}.half_span_hz: must be positive")));
                }
            }
        }
        ScenarioSpec::SingleSpectrum { cavity, .. } => {
            cavity_index(*cavity, &format!("{path}.cavity"))?;
        }
    }
    Ok(())
}
