//! Device description, drive configuration and physical-validity checks.
//!
//! Every frequency and rate in this crate is an angular quantity in rad/s.
//! Use [`hz`] to convert from the ordinary-frequency values quoted for real
//! devices (f/2π in Hz).

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Converts an ordinary frequency in Hz to an angular frequency in rad/s.
pub fn hz(f: f64) -> f64 {
    2.0 * PI * f
}

/// Converts an angular frequency in rad/s to Hz.
pub fn to_hz(omega: f64) -> f64 {
    omega / (2.0 * PI)
}

/// Relative rate mismatch below which a sideband pair counts as balanced.
pub const QND_RATE_TOL: f64 = 1e-9;
/// Detuning tolerance for the QND predicate, in units of the mechanical damping rate.
pub const QND_DETUNING_TOL: f64 = 1e-9;

/// Resolved-sideband threshold on Ω_m/κ reported by [`validate_system`].
pub const RESOLVED_SIDEBAND_MIN: f64 = 5.0;
/// Weak-coupling threshold on Γ/κ.
pub const WEAK_COUPLING_MAX: f64 = 0.01;
/// Overcoupling threshold on κ_ext/κ.
pub const OVERCOUPLING_MIN: f64 = 0.95;
/// Drive detuning warning threshold, as a fraction of κ.
pub const DETUNING_WARN_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechanicalMode {
    pub omega_m: f64,
    /// Energy relaxation rate Γ_m.
    pub gamma_m: f64,
    /// Equilibrium thermal occupancy of the mechanical bath.
    pub n_th: f64,
}

impl MechanicalMode {
    pub fn new(omega_m: f64, gamma_m: f64, n_th: f64) -> Result<Self> {
        if !(omega_m.is_finite() && omega_m > 0.0) {
            return Err(Error::domain(format!("omega_m must be > 0, got {omega_m}")));
        }
        if !(gamma_m.is_finite() && gamma_m > 0.0) {
            return Err(Error::domain(format!("gamma_m must be > 0, got {gamma_m}")));
        }
        if !(n_th.is_finite() && n_th >= 0.0) {
            return Err(Error::domain(format!("n_th must be >= 0, got {n_th}")));
        }
        Ok(Self { omega_m, gamma_m, n_th })
    }

    /// Thermal quadrature variance 2n_th + 1.
    pub fn thermal_variance(&self) -> f64 {
        2.0 * self.n_th + 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cavity {
    pub omega_c: f64,
    /// Total linewidth κ.
    pub kappa: f64,
    /// Coupling rate to the measurement port. The remainder κ − κ_ext is internal loss.
    pub kappa_ext: f64,
    /// Thermal occupancy of both cavity baths.
    pub n_cav: f64,
    /// Vacuum optomechanical coupling g₀.
    pub g0: f64,
}

impl Cavity {
    pub fn new(omega_c: f64, kappa: f64, kappa_ext: f64, n_cav: f64, g0: f64) -> Result<Self> {
        if !(omega_c.is_finite() && omega_c > 0.0) {
            return Err(Error::domain(format!("omega_c must be > 0, got {omega_c}")));
        }
        if !(kappa_ext.is_finite() && kappa.is_finite() && kappa_ext > 0.0 && kappa_ext <= kappa) {
            return Err(Error::domain(format!(
                "need 0 < kappa_ext <= kappa, got kappa_ext = {kappa_ext}, kappa = {kappa}"
            )));
        }
        if !(n_cav.is_finite() && n_cav >= 0.0) {
            return Err(Error::domain(format!("n_cav must be >= 0, got {n_cav}")));
        }
        if !(g0.is_finite() && g0 > 0.0) {
            return Err(Error::domain(format!("g0 must be > 0, got {g0}")));
        }
        Ok(Self { omega_c, kappa, kappa_ext, n_cav, g0 })
    }

    pub fn kappa_int(&self) -> f64 {
        self.kappa - self.kappa_ext
    }

    /// Quadrature variance of the cavity input noise, 2n_cav + 1.
    pub fn input_variance(&self) -> f64 {
        2.0 * self.n_cav + 1.0
    }
}

/// Which of the two microwave cavities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CavityIndex {
    /// Cavity 1, used to read out the mechanics.
    Measurement,
    /// Cavity 2, used to cool or squeeze the mechanics.
    Control,
}

impl CavityIndex {
    pub const ALL: [CavityIndex; 2] = [CavityIndex::Measurement, CavityIndex::Control];

    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(CavityIndex::Measurement),
            2 => Ok(CavityIndex::Control),
            _ => Err(Error::domain(format!("cavity index must be 1 or 2, got {n}"))),
        }
    }

    pub fn number(self) -> u8 {
        match self {
            CavityIndex::Measurement => 1,
            CavityIndex::Control => 2,
        }
    }

    pub(crate) fn slot(self) -> usize {
        self.number() as usize - 1
    }
}

impl fmt::Display for CavityIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sideband {
    /// ω_c − Ω_m: anti-Stokes scattering, beam-splitter coupling.
    Lower,
    /// ω_c + Ω_m: Stokes scattering, two-mode-squeezing coupling.
    Upper,
}

impl fmt::Display for Sideband {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sideband::Lower => f.write_str("lower"),
            Sideband::Upper => f.write_str("upper"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SystemConfig {
    pub mech: MechanicalMode,
    pub cavities: [Cavity; 2],
}

// f64 fields are always finite after construction
impl Eq for MechanicalMode {}
impl Eq for Cavity {}

impl SystemConfig {
    pub fn new(mech: MechanicalMode, measurement: Cavity, control: Cavity) -> Result<Self> {
        for (i, c) in [measurement, control].iter().enumerate() {
            if mech.omega_m / c.kappa <= 1.0 {
                return Err(Error::domain(format!(
                    "cavity {} is not sideband resolved: omega_m/kappa = {:.3}",
                    i + 1,
                    mech.omega_m / c.kappa
                )));
            }
        }
        Ok(Self { mech, cavities: [measurement, control] })
    }

    pub fn cavity(&self, idx: CavityIndex) -> &Cavity {
        &self.cavities[idx.slot()]
    }

    /// The two-cavity device: ω₁/2π = 8.89 GHz, ω₂/2π = 9.93 GHz,
    /// κ₁/2π = 1.7 MHz, κ₂/2π = 2.1 MHz, g₁/2π = 145 Hz, g₂/2π = 170 Hz,
    /// Ω_m/2π = 14.98 MHz, Γ_m/2π = 9.2 Hz, n_th = 42, κ_ext/κ = 0.95, vacuum cavity baths.
    pub fn paper_device() -> Self {
        let mech = MechanicalMode::new(hz(14.98e6), hz(9.2), 42.0).unwrap();
        let c1 = Cavity::new(hz(8.89e9), hz(1.7e6), 0.95 * hz(1.7e6), 0.0, hz(145.0)).unwrap();
        let c2 = Cavity::new(hz(9.93e9), hz(2.1e6), 0.95 * hz(2.1e6), 0.0, hz(170.0)).unwrap();
        Self::new(mech, c1, c2).unwrap()
    }

    /// Copy with a different mechanical bath occupancy.
    pub fn with_n_th(mut self, n_th: f64) -> Self {
        self.mech.n_th = n_th;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Drive {
    pub cavity: CavityIndex,
    pub sideband: Sideband,
    /// Offset of the drive frequency from ω_c ∓ Ω_m.
    pub detuning: f64,
    pub phase: f64,
    /// Scattering rate Γ.
    pub rate: f64,
}

impl Drive {
    pub fn new(cavity: CavityIndex, sideband: Sideband, rate: f64) -> Self {
        Self { cavity, sideband, detuning: 0.0, phase: 0.0, rate }
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }

    pub fn with_detuning(mut self, detuning: f64) -> Self {
        self.detuning = detuning;
        self
    }
}

/// Up to four sideband drives, at most one per (cavity, sideband) slot.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DriveSet {
    drives: Vec<Drive>,
}

impl DriveSet {
    pub fn new(drives: impl IntoIterator<Item = Drive>) -> Result<Self> {
        let mut set = DriveSet::default();
        for d in drives {
            set.insert(d)?;
        }
        Ok(set)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    fn insert(&mut self, d: Drive) -> Result<()> {
        if !(d.rate.is_finite() && d.rate >= 0.0) {
            return Err(Error::domain(format!("drive rate must be finite and >= 0, got {}", d.rate)));
        }
        if !d.detuning.is_finite() || !d.phase.is_finite() {
            return Err(Error::domain("drive detuning and phase must be finite"));
        }
        if self.get(d.cavity, d.sideband).is_some() {
            return Err(Error::domain(format!(
                "duplicate drive on cavity {} {} sideband",
                d.cavity, d.sideband
            )));
        }
        self.drives.push(d);
        self.drives.sort_by_key(|d| (d.cavity, d.sideband));
        Ok(())
    }

    /// Adds a drive, replacing any drive already in its slot.
    pub fn with(mut self, d: Drive) -> Result<Self> {
        self.drives.retain(|x| !(x.cavity == d.cavity && x.sideband == d.sideband));
        self.insert(d)?;
        Ok(self)
    }

    /// Removes both drives of a cavity.
    pub fn without_cavity(mut self, cavity: CavityIndex) -> Self {
        self.drives.retain(|x| x.cavity != cavity);
        self
    }

    /// Balanced pair on resonance with both sidebands of `cavity`, measuring X_Φ.
    pub fn with_qnd_pair(self, cavity: CavityIndex, rate: f64, measurement_phase: f64) -> Result<Self> {
        self.without_cavity(cavity)
            .with(Drive::new(cavity, Sideband::Lower, rate).with_phase(-measurement_phase))?
            .with(Drive::new(cavity, Sideband::Upper, rate).with_phase(measurement_phase))
    }

    /// Balanced pair pushed apart symmetrically by `delta`: the lower drive sits at
    /// ω_c − Ω_m − δ and the upper at ω_c + Ω_m + δ. For δ much larger than the
    /// mechanical linewidth each drive measures both quadratures.
    pub fn with_detuned_pair(self, cavity: CavityIndex, rate: f64, delta: f64) -> Result<Self> {
        self.without_cavity(cavity)
            .with(Drive::new(cavity, Sideband::Lower, rate).with_detuning(-delta))?
            .with(Drive::new(cavity, Sideband::Upper, rate).with_detuning(delta))
    }

    pub fn drives(&self) -> &[Drive] {
        &self.drives
    }

    pub fn get(&self, cavity: CavityIndex, sideband: Sideband) -> Option<&Drive> {
        self.drives.iter().find(|d| d.cavity == cavity && d.sideband == sideband)
    }

    /// Scattering rate in a slot, zero when undriven.
    pub fn rate(&self, cavity: CavityIndex, sideband: Sideband) -> f64 {
        self.get(cavity, sideband).map_or(0.0, |d| d.rate)
    }

    pub fn is_resonant(&self) -> bool {
        self.drives.iter().all(|d| d.detuning == 0.0)
    }

    /// True when both sidebands of `cavity` carry equal, non-zero rates with no
    /// detuning, i.e. the pair measures a single mechanical quadrature.
    pub fn is_qnd(&self, cavity: CavityIndex, gamma_m: f64) -> bool {
        let (Some(lo), Some(up)) = (self.get(cavity, Sideband::Lower), self.get(cavity, Sideband::Upper)) else {
            return false;
        };
        let scale = lo.rate.max(up.rate);
        if scale <= 0.0 {
            return false;
        }
        let mismatch = (lo.rate - up.rate).abs() / scale;
        let det_tol = QND_DETUNING_TOL * gamma_m;
        mismatch < QND_RATE_TOL && lo.detuning.abs() < det_tol && up.detuning.abs() < det_tol
    }

    /// Quadrature angle Φ = (θ⁺ − θ⁻)/2 selected by the pair on `cavity`.
    pub fn pair_angle(&self, cavity: CavityIndex) -> f64 {
        match (self.get(cavity, Sideband::Lower), self.get(cavity, Sideband::Upper)) {
            (Some(lo), Some(up)) => 0.5 * (up.phase - lo.phase),
            _ => 0.0,
        }
    }

    /// Order-independent textual fingerprint, stable across runs.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for d in &self.drives {
            h.update(format!(
                "{}:{}:{:.16e}:{:.16e}:{:.16e};",
                d.cavity, d.sideband, d.detuning, d.phase, d.rate
            ));
        }
        hex::encode(&h.finalize()[..8])
    }
}

/// Γ = 4g₀²n/κ.
pub fn scattering_rate(g0: f64, n_photons: f64, kappa: f64) -> Result<f64> {
    for (name, v) in [("g0", g0), ("n_photons", n_photons), ("kappa", kappa)] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::domain(format!("{name} must be finite and >= 0, got {v}")));
        }
    }
    if kappa == 0.0 {
        return Err(Error::domain("kappa must be > 0"));
    }
    Ok(4.0 * g0 * g0 * n_photons / kappa)
}

/// Intracavity photon number that produces scattering rate `rate`.
pub fn photons_for_rate(g0: f64, rate: f64, kappa: f64) -> Result<f64> {
    if !(g0.is_finite() && g0 > 0.0) {
        return Err(Error::domain(format!("g0 must be > 0, got {g0}")));
    }
    if !(rate.is_finite() && rate >= 0.0 && kappa.is_finite() && kappa > 0.0) {
        return Err(Error::domain("rate must be >= 0 and kappa > 0"));
    }
    Ok(rate * kappa / (4.0 * g0 * g0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Warn,
    Fail,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    pub value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Fail)
    }

    pub fn find(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: String, status: CheckStatus, value: f64, threshold: f64) {
        self.checks.push(Check { name, status, value, threshold });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let tag = match c.status {
                CheckStatus::Pass => "PASS",
                CheckStatus::Warn => "WARN",
                CheckStatus::Fail => "FAIL",
            };
            writeln!(f, "[{tag}] {:<40} value = {:<12.5e} threshold = {:.5e}", c.name, c.value, c.threshold)?;
        }
        Ok(())
    }
}

/// Checks the rate hierarchy Γ_m, Γ± ≪ κ ≪ Ω_m under which the sideband model holds.
/// Failures are reported, never returned as errors.
pub fn validate_system(cfg: &SystemConfig, ds: &DriveSet) -> ValidationReport {
    let mut report = ValidationReport::default();
    let pass_if = |ok: bool| if ok { CheckStatus::Pass } else { CheckStatus::Fail };

    for idx in CavityIndex::ALL {
        let c = cfg.cavity(idx);
        let ratio = cfg.mech.omega_m / c.kappa;
        report.push(
            format!("resolved_sideband[cavity {idx}]"),
            pass_if(ratio > RESOLVED_SIDEBAND_MIN),
            ratio,
            RESOLVED_SIDEBAND_MIN,
        );
    }
    for idx in CavityIndex::ALL {
        let c = cfg.cavity(idx);
        let frac = c.kappa_ext / c.kappa;
        let status = if frac >= OVERCOUPLING_MIN * (1.0 - 1e-12) { CheckStatus::Pass } else { CheckStatus::Warn };
        report.push(format!("overcoupling[cavity {idx}]"), status, frac, OVERCOUPLING_MIN);
    }
    for d in ds.drives().iter().filter(|d| d.rate > 0.0) {
        let kappa = cfg.cavity(d.cavity).kappa;
        let slot = format!("cavity {} {}", d.cavity, d.sideband);
        report.push(
            format!("weak_coupling[{slot}]"),
            pass_if(d.rate / kappa < WEAK_COUPLING_MAX),
            d.rate / kappa,
            WEAK_COUPLING_MAX,
        );
        report.push(
            format!("rate_hierarchy[{slot}]"),
            pass_if(cfg.mech.gamma_m < d.rate),
            d.rate / cfg.mech.gamma_m,
            1.0,
        );
        let det = d.detuning.abs() / kappa;
        let status = if det < DETUNING_WARN_FRACTION { CheckStatus::Pass } else { CheckStatus::Warn };
        report.push(format!("small_detuning[{slot}]"), status, det, DETUNING_WARN_FRACTION);
    }
    report
}
