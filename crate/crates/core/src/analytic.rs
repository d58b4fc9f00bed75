//! Closed-form steady-state quadrature variances of the mechanics in the
//! adiabatic limit Γ_m, Γ± ≪ κ ≪ Ω_m.
//!
//! Each cavity j driven on its sidebands with rates Γ_j⁻, Γ_j⁺ acts as an
//! engineered bath with damping Γ_j⁻ − Γ_j⁺ and diffusion
//! (√Γ_j⁻ ∓ √Γ_j⁺)²·(2n_cav,j + 1) along the quadrature selected by the pair
//! phase and its orthogonal partner. All baths share the same isotropic
//! damping, so the covariance is the summed diffusion over the summed damping:
//!
//! ```text
//! ⟨X₁²⟩ = [Γ_m(2n_th+1) + Σ_j (√Γ_j⁻ − √Γ_j⁺)² v_in,j] / [Γ_m + Σ_j (Γ_j⁻ − Γ_j⁺)]
//! ⟨X₂²⟩ = [Γ_m(2n_th+1) + Σ_j (√Γ_j⁻ + √Γ_j⁺)² v_in,j] / [Γ_m + Σ_j (Γ_j⁻ − Γ_j⁺)]
//! ```

use crate::error::{Error, Result};
use crate::sysmodel::{CavityIndex, DriveSet, MechanicalMode, Sideband, SystemConfig};

/// Symmetrized second moments of the mechanical quadratures (vacuum = 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureMoments {
    pub v1: f64,
    pub v2: f64,
    /// ⟨X₁X₂ + X₂X₁⟩/2
    pub v12: f64,
}

impl QuadratureMoments {
    pub fn new(v1: f64, v2: f64, v12: f64) -> Self {
        Self { v1, v2, v12 }
    }

    pub fn isotropic(v: f64) -> Self {
        Self { v1: v, v2: v, v12: 0.0 }
    }

    pub fn determinant(&self) -> f64 {
        self.v1 * self.v2 - self.v12 * self.v12
    }

    /// Uncertainty relation for [X₁, X₂] = 2i.
    pub fn satisfies_heisenberg(&self) -> bool {
        self.v1 > 0.0 && self.v2 > 0.0 && self.determinant() >= 1.0 - 1e-12
    }

    /// Smallest and largest eigenvalue of the 2×2 moment matrix.
    pub fn principal_variances(&self) -> (f64, f64) {
        let mean = 0.5 * (self.v1 + self.v2);
        let radius = (0.25 * (self.v1 - self.v2).powi(2) + self.v12 * self.v12).sqrt();
        (mean - radius, mean + radius)
    }

    /// Angle in [0, π) of the minimum-variance quadrature.
    pub fn squeezing_angle(&self) -> f64 {
        let max_angle = 0.5 * self.v12.atan2(0.5 * (self.v1 - self.v2));
        (max_angle + std::f64::consts::FRAC_PI_2).rem_euclid(std::f64::consts::PI)
    }

    pub fn purity(&self) -> f64 {
        1.0 / self.determinant().sqrt()
    }
}

/// Squeezed reservoir seen by the mechanics when one cavity is driven on both sidebands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathParams {
    /// Squeeze parameter, tanh r = √(Γ⁺/Γ⁻).
    pub r: f64,
    /// (√Γ⁻ − √Γ⁺)²/(Γ⁻ − Γ⁺)
    pub v_min: f64,
    /// (√Γ⁻ + √Γ⁺)²/(Γ⁻ − Γ⁺)
    pub v_max: f64,
    /// Net damping Γ⁻ − Γ⁺.
    pub rate_eff: f64,
}

/// Steady-state mechanical moments for vacuum cavity inputs.
pub fn quadrature_variances(mech: &MechanicalMode, ds: &DriveSet) -> Result<QuadratureMoments> {
    quadrature_variances_with_inputs(mech, ds, [1.0, 1.0])
}

/// Same as [`quadrature_variances`] with the cavity input variances taken from `cfg`.
pub fn quadrature_variances_for(cfg: &SystemConfig, ds: &DriveSet) -> Result<QuadratureMoments> {
    let v_in = CavityIndex::ALL.map(|c| cfg.cavity(c).input_variance());
    quadrature_variances_with_inputs(&cfg.mech, ds, v_in)
}

/// Multi-cavity closed form. `v_in[j]` is the input-noise variance 2n_cav + 1 of
/// cavity j + 1. Drive-pair phases rotate the engineered diffusion; with all
/// phases zero the result has v12 = 0.
pub fn quadrature_variances_with_inputs(
    mech: &MechanicalMode,
    ds: &DriveSet,
    v_in: [f64; 2],
) -> Result<QuadratureMoments> {
    if !ds.is_resonant() {
        return Err(Error::domain("closed-form variances need every drive on its sideband (zero detuning)"));
    }
    let thermal = mech.gamma_m * mech.thermal_variance();
    let mut damping = mech.gamma_m;
    let (mut d11, mut d22, mut d12) = (thermal, thermal, 0.0);

    for idx in CavityIndex::ALL {
        let gm = ds.rate(idx, Sideband::Lower);
        let gp = ds.rate(idx, Sideband::Upper);
        if gm == 0.0 && gp == 0.0 {
            continue;
        }
        damping += gm - gp;
        let along = (gm.sqrt() - gp.sqrt()).powi(2) * v_in[idx.slot()];
        let across = (gm.sqrt() + gp.sqrt()).powi(2) * v_in[idx.slot()];
        let (s, c) = ds.pair_angle(idx).sin_cos();
        d11 += along * c * c + across * s * s;
        d22 += along * s * s + across * c * c;
        d12 += (along - across) * s * c;
    }

    if !(damping > 0.0) {
        return Err(Error::Instability(format!(
            "total mechanical damping Γ_m + Σ(Γ⁻ − Γ⁺) = {damping:.4e} rad/s is not positive"
        )));
    }
    Ok(QuadratureMoments { v1: d11 / damping, v2: d22 / damping, v12: d12 / damping })
}

/// Variance of X_φ = cos φ·X₁ + sin φ·X₂.
pub fn variance_of_phase(m: &QuadratureMoments, phi: f64) -> f64 {
    let (s, c) = phi.sin_cos();
    m.v1 * c * c + m.v2 * s * s + m.v12 * (2.0 * phi).sin()
}

/// Measurement-induced occupancy n_ba = Γ_meas/Γ_cool.
pub fn backaction_occupancy(gamma_meas: f64, gamma_cool: f64) -> Result<f64> {
    if !(gamma_cool > 0.0) || !gamma_cool.is_finite() {
        return Err(Error::domain(format!("cooling rate must be > 0, got {gamma_cool}")));
    }
    if !(gamma_meas >= 0.0) {
        return Err(Error::domain(format!("measurement rate must be >= 0, got {gamma_meas}")));
    }
    Ok(gamma_meas / gamma_cool)
}

/// Mean phonon number (v1 + v2 − 2)/4.
pub fn occupancy_from_variances(m: &QuadratureMoments) -> f64 {
    (m.v1 + m.v2 - 2.0) / 4.0
}

pub fn squeezed_bath_params(gamma_minus: f64, gamma_plus: f64) -> Result<BathParams> {
    if !(gamma_plus >= 0.0) {
        return Err(Error::domain(format!("gamma_plus must be >= 0, got {gamma_plus}")));
    }
    if !(gamma_plus < gamma_minus) {
        return Err(Error::Instability(format!(
            "squeezed bath needs Γ⁺ < Γ⁻, got Γ⁺ = {gamma_plus:.4e}, Γ⁻ = {gamma_minus:.4e}"
        )));
    }
    let (a, b) = (gamma_minus.sqrt(), gamma_plus.sqrt());
    // (√Γ⁻ − √Γ⁺)²/(Γ⁻ − Γ⁺) without the cancellation
    let v_min = (a - b) / (a + b);
    Ok(BathParams { r: (b / a).atanh(), v_min, v_max: 1.0 / v_min, rate_eff: gamma_minus - gamma_plus })
}
