//! Single synthetic measurements: build the drive set, compute the ideal
//! output spectrum, add measurement noise, fit, and convert line areas back
//! to mechanical moments using only quantities an experimenter would know
//! (drive rates, detunings, cavity coupling).

use serde::Serialize;

use crate::analytic::{occupancy_from_variances, quadrature_variances_for, variance_of_phase};
use crate::dynamics::{build_linear_model, output_spectrum, LinearModel, Spectrum};
use crate::error::{Error, Result};
use crate::inference::{
    fit_lorentzian, fit_lorentzians_pinned, guess_peak, occupancy_from_sidebands, variance_from_qnd_line, LorentzianFit,
    Measured, MultiLorentzianFit, PeakGuess, SidebandOccupancy,
};
use crate::synthesis::{synthesize, NoiseModel, NoisySpectrum};
use crate::sysmodel::{CavityIndex, DriveSet, Sideband, SystemConfig};

use super::config::Numerics;

/// Fraction of the intracavity field that leaves through the measured port.
pub fn detection_efficiency(sys: &SystemConfig, cavity: CavityIndex) -> f64 {
    let c = sys.cavity(cavity);
    c.kappa_ext / c.kappa
}

/// Ideal and noisy spectrum of one cavity under `ds`.
pub fn simulate_spectrum(
    sys: &SystemConfig,
    ds: &DriveSet,
    cavity: CavityIndex,
    numerics: &Numerics,
    noise: &NoiseModel,
) -> Result<(LinearModel, Spectrum, NoisySpectrum)> {
    let model = build_linear_model(sys, ds)?;
    let grid = model.grid_for(cavity, ds, numerics.grid_points, numerics.grid_linewidths);
    let spectrum = output_spectrum(&model, cavity, &grid)?;
    let noisy = synthesize(&spectrum, noise);
    Ok((model, spectrum, noisy))
}

fn require_line(fit: &LorentzianFit, what: &str) -> Result<()> {
    if fit.zero_area || !(fit.area > 0.0) {
        return Err(Error::Numerical(format!("{what}: no significant line in the synthetic spectrum")));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct QuadratureMeasurement {
    pub phi: f64,
    pub rate: f64,
    pub fit: LorentzianFit,
    pub variance: Measured,
    /// Closed-form variance of X_Φ for the same drive set.
    pub theory: f64,
    #[serde(skip)]
    pub spectrum: Spectrum,
    #[serde(skip)]
    pub noisy: NoisySpectrum,
}

/// Adds a QND pair at `rate` measuring X_Φ on the measurement cavity and
/// infers the variance from the area of the single line it emits.
pub fn measure_quadrature(
    sys: &SystemConfig,
    base: &DriveSet,
    rate: f64,
    phi: f64,
    numerics: &Numerics,
    noise: &NoiseModel,
) -> Result<QuadratureMeasurement> {
    let cav = CavityIndex::Measurement;
    let ds = base.clone().with_qnd_pair(cav, rate, phi)?;
    let theory = variance_of_phase(&quadrature_variances_for(sys, &ds)?, phi);
    let (_, spectrum, noisy) = simulate_spectrum(sys, &ds, cav, numerics, noise)?;
    let (guess, _) = guess_peak(&noisy);
    let fit = fit_lorentzian(&noisy, Some(guess))?;
    require_line(&fit, "QND line")?;
    let variance = variance_from_qnd_line(&fit, detection_efficiency(sys, cav) * rate)?;
    Ok(QuadratureMeasurement { phi, rate, fit, variance, theory, spectrum, noisy })
}

#[derive(Debug, Clone, Serialize)]
pub struct SidebandMeasurement {
    pub rate: f64,
    pub delta: f64,
    pub fit: MultiLorentzianFit,
    pub occupancy: SidebandOccupancy,
    /// Closed-form occupancy with the same rates.
    pub theory: f64,
    #[serde(skip)]
    pub spectrum: Spectrum,
    #[serde(skip)]
    pub noisy: NoisySpectrum,
}

/// Adds a balanced pair detuned by ±`delta` on the measurement cavity, fits
/// the resolved anti-Stokes and Stokes lines jointly and infers the occupancy
/// from both.
pub fn measure_sidebands(
    sys: &SystemConfig,
    base: &DriveSet,
    rate: f64,
    delta: f64,
    numerics: &Numerics,
    noise: &NoiseModel,
) -> Result<SidebandMeasurement> {
    let cav = CavityIndex::Measurement;
    let ds = base.clone().with_detuned_pair(cav, rate, delta)?;
    // The scattered sidebands sit δ off the cavity resonance, which cuts both
    // scattering rates by the cavity Lorentzian.
    let kappa = sys.cavity(cav).kappa;
    let filtered = rate / (1.0 + (2.0 * delta / kappa).powi(2));
    // A detuned pair heats both quadratures, so its occupancy equals that of
    // the resonant pair at the same rates.
    let resonant = base.clone().with_qnd_pair(cav, filtered, 0.0)?;
    let theory = occupancy_from_variances(&quadrature_variances_for(sys, &resonant)?);
    let (model, spectrum, noisy) = simulate_spectrum(sys, &ds, cav, numerics, noise)?;
    let offsets = model.sideband_offsets(cav, &ds);
    if offsets.len() != 2 {
        return Err(Error::domain("detuned pair must produce two resolved lines"));
    }
    let width = model.effective_mechanical_damping();
    let area = 0.5 * guess_peak(&noisy).0.area;
    let guesses: Vec<PeakGuess> = offsets.iter().map(|&c| PeakGuess { center: c, fwhm: width, area }).collect();
    let fit = fit_lorentzians_pinned(&noisy, &guesses)?;
    let detected = detection_efficiency(sys, cav) * filtered;
    let occupancy = occupancy_from_sidebands(&fit.peaks[0], &fit.peaks[1], detected, detected)?;
    Ok(SidebandMeasurement { rate, delta, fit, occupancy, theory, spectrum, noisy })
}

#[derive(Debug, Clone, Serialize)]
pub struct CoolingMeasurement {
    pub rate: f64,
    pub fit: LorentzianFit,
    pub occupancy: Measured,
    pub theory: f64,
    #[serde(skip)]
    pub spectrum: Spectrum,
    #[serde(skip)]
    pub noisy: NoisySpectrum,
}

/// Occupancy from the anti-Stokes line of a control cavity driven only on
/// its lower sideband.
pub fn measure_cooling_line(
    sys: &SystemConfig,
    ds: &DriveSet,
    numerics: &Numerics,
    noise: &NoiseModel,
) -> Result<CoolingMeasurement> {
    let cav = CavityIndex::Control;
    let rate = ds.rate(cav, Sideband::Lower);
    if !(rate > 0.0) || ds.rate(cav, Sideband::Upper) > 0.0 {
        return Err(Error::domain("a cooling line needs the control cavity driven on its lower sideband only"));
    }
    let theory = occupancy_from_variances(&quadrature_variances_for(sys, ds)?);
    let (_, spectrum, noisy) = simulate_spectrum(sys, ds, cav, numerics, noise)?;
    let (guess, _) = guess_peak(&noisy);
    let fit = fit_lorentzian(&noisy, Some(guess))?;
    require_line(&fit, "cooling line")?;
    let detected = detection_efficiency(sys, cav) * rate;
    let occupancy = Measured::new(fit.area / detected, fit.area_err / detected);
    Ok(CoolingMeasurement { rate, fit, occupancy, theory, spectrum, noisy })
}
