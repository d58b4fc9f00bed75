//! Linearized two-cavity optomechanics in the rotating-wave approximation.
//!
//! State vector r = (X_a1, P_a1, X_a2, P_a2, X_b, P_b). In a frame rotating with
//! each cavity near its resonance and with the mechanics near Ω_m, a drive on the
//! lower sideband of cavity j adds the beam-splitter term G e^{iθ} a_j† b + h.c.
//! and a drive on the upper sideband adds the two-mode-squeezing term
//! G e^{iθ} a_j† b† + h.c., with G = √(Γκ_j)/2. The Langevin equations are
//! ṙ = A r + B ξ with white inputs ξ, and the steady covariance solves
//! A V + V Aᵀ + D = 0 with D = B N Bᵀ.
//!
//! Drive detunings are absorbed into the frame: the mechanics and each cavity get
//! a static detuning chosen so that every coupling is time independent. This is
//! possible for every configuration with at most one detuned sideband pair,
//! which covers the backaction-evading and the detuned (two-quadrature)
//! measurement schemes.

use nalgebra::{Complex, DMatrix, DVector, SMatrix, SVector};

use crate::analytic::QuadratureMoments;
use crate::error::{Error, Result};
use crate::sysmodel::{CavityIndex, DriveSet, Sideband, SystemConfig};

pub type C64 = Complex<f64>;
pub type Mat6 = SMatrix<f64, 6, 6>;
type CMat6 = SMatrix<C64, 6, 6>;

pub const DIM: usize = 6;
/// Index of the mechanical X quadrature in the state vector.
pub const XB: usize = 4;
/// Index of the mechanical P quadrature in the state vector.
pub const PB: usize = 5;
pub const BASIS: [&str; DIM] = ["X_a1", "P_a1", "X_a2", "P_a2", "X_b", "P_b"];

/// Default number of points in a spectrum grid.
pub const DEFAULT_GRID_POINTS: usize = 2001;
/// Default half-span of a spectrum grid, in effective mechanical linewidths.
pub const DEFAULT_GRID_LINEWIDTHS: f64 = 10.0;

fn x_index(c: CavityIndex) -> usize {
    2 * c.slot()
}

/// A white-noise input port.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    External(CavityIndex),
    Internal(CavityIndex),
    MechanicalBath,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputChannel {
    pub channel: Channel,
    /// Amplitude coupling √rate into the (X, P) pair of its mode.
    pub coupling: f64,
    /// Index of the X quadrature of the mode it feeds.
    pub mode: usize,
    /// Quadrature variance 2n + 1 of the input.
    pub variance: f64,
}

/// Static frequency offsets of the rotating frame relative to the bare
/// resonances, chosen so that all drive terms are time independent.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Frame {
    pub cavity_shift: [f64; 2],
    pub mech_shift: f64,
}

impl Frame {
    fn solve(ds: &DriveSet, gamma_m: f64) -> Result<Self> {
        let tol = 1e-9 * gamma_m;
        let mut mech_shift: Option<f64> = None;
        for idx in CavityIndex::ALL {
            if let (Some(lo), Some(up)) = (ds.get(idx, Sideband::Lower), ds.get(idx, Sideband::Upper)) {
                let shift = 0.5 * (up.detuning - lo.detuning);
                match mech_shift {
                    Some(s) if (s - shift).abs() > tol + 1e-12 * s.abs() => {
                        return Err(Error::domain(
                            "sideband pairs on both cavities need equal detuning splits for a stationary frame",
                        ))
                    }
                    _ => mech_shift = Some(shift),
                }
            }
        }
        let mech_shift = mech_shift.unwrap_or(0.0);
        let mut cavity_shift = [0.0; 2];
        for idx in CavityIndex::ALL {
            let lo = ds.get(idx, Sideband::Lower).map(|d| d.detuning + mech_shift);
            let up = ds.get(idx, Sideband::Upper).map(|d| d.detuning - mech_shift);
            cavity_shift[idx.slot()] = match (lo, up) {
                (Some(a), Some(b)) => 0.5 * (a + b),
                (Some(a), None) | (None, Some(a)) => a,
                (None, None) => 0.0,
            };
        }
        // single-sided drives on both cavities with no pair: only consistent if
        // the implied mechanical shift is zero, which is what we assumed
        for d in ds.drives() {
            let implied = match d.sideband {
                Sideband::Lower => cavity_shift[d.cavity.slot()] - mech_shift,
                Sideband::Upper => cavity_shift[d.cavity.slot()] + mech_shift,
            };
            if (implied - d.detuning).abs() > tol + 1e-12 * d.detuning.abs() {
                return Err(Error::domain("drive set has no stationary rotating frame"));
            }
        }
        Ok(Frame { cavity_shift, mech_shift })
    }
}

/// Drift, diffusion and noise inputs of the linearized model.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub drift: Mat6,
    pub diffusion: Mat6,
    pub channels: Vec<InputChannel>,
    pub frame: Frame,
    /// Largest real part among the drift eigenvalues; negative iff stable.
    pub max_growth_rate: f64,
    kappa_ext: [f64; 2],
    gamma_eff: f64,
    digest: String,
}

impl LinearModel {
    pub fn is_stable(&self) -> bool {
        self.max_growth_rate < 0.0
    }

    /// Net mechanical damping Γ_m + Σ(Γ⁻ − Γ⁺) in the adiabatic limit.
    pub fn effective_mechanical_damping(&self) -> f64 {
        self.gamma_eff
    }

    pub fn drive_digest(&self) -> &str {
        &self.digest
    }

    pub fn eigenvalues(&self) -> Vec<C64> {
        self.drift.complex_eigenvalues().iter().copied().collect()
    }

    fn input_matrix(&self) -> (SMatrix<f64, 6, 10>, SVector<f64, 10>) {
        let mut b = SMatrix::<f64, 6, 10>::zeros();
        let mut n = SVector::<f64, 10>::zeros();
        for (k, ch) in self.channels.iter().enumerate() {
            b[(ch.mode, 2 * k)] = ch.coupling;
            b[(ch.mode + 1, 2 * k + 1)] = ch.coupling;
            n[2 * k] = ch.variance;
            n[2 * k + 1] = ch.variance;
        }
        (b, n)
    }

    fn require_stable(&self) -> Result<()> {
        if self.is_stable() {
            Ok(())
        } else {
            Err(Error::Instability(format!(
                "drift matrix has an eigenvalue with real part {:.4e} rad/s",
                self.max_growth_rate
            )))
        }
    }

    /// Peak offsets (from the resonance of `cavity`) of the mechanical sidebands it emits.
    pub fn sideband_offsets(&self, cavity: CavityIndex, ds: &DriveSet) -> Vec<f64> {
        let shift = self.frame.cavity_shift[cavity.slot()];
        let mut out = Vec::new();
        if ds.rate(cavity, Sideband::Lower) > 0.0 {
            out.push(shift - self.frame.mech_shift);
        }
        if ds.rate(cavity, Sideband::Upper) > 0.0 {
            let c = shift + self.frame.mech_shift;
            if out.iter().all(|&o| (o - c).abs() > 1e-9 * self.gamma_eff) {
                out.push(c);
            }
        }
        out
    }

    /// Grid of `points` offsets covering every sideband of `cavity` with
    /// `linewidths` effective linewidths on either side.
    pub fn grid_for(&self, cavity: CavityIndex, ds: &DriveSet, points: usize, linewidths: f64) -> Vec<f64> {
        let mut centers = self.sideband_offsets(cavity, ds);
        if centers.is_empty() {
            centers.push(0.0);
        }
        let lo = centers.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = centers.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let half = linewidths * self.gamma_eff;
        linspace(lo - half, hi + half, points)
    }

    pub fn default_grid(&self, cavity: CavityIndex, ds: &DriveSet) -> Vec<f64> {
        self.grid_for(cavity, ds, DEFAULT_GRID_POINTS, DEFAULT_GRID_LINEWIDTHS)
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Quadratic Hamiltonian term c·op₁·op₂ + h.c. as a real symmetric matrix H_q with
/// H = ½ rᵀ H_q r (up to a constant). `w1`, `w2` express the operators in r.
fn quadratic_term(c: C64, w1: &SVector<C64, 6>, w2: &SVector<C64, 6>) -> Mat6 {
    let m = (w1 * w2.transpose()) * c;
    let re = m.map(|z| z.re);
    (re + re.transpose()) * 2.0
}

fn annihilation(x: usize) -> SVector<C64, 6> {
    let mut u = SVector::<C64, 6>::zeros();
    u[x] = C64::new(0.5, 0.0);
    u[x + 1] = C64::new(0.0, 0.5);
    u
}

fn symplectic() -> Mat6 {
    let mut o = Mat6::zeros();
    for k in 0..3 {
        o[(2 * k, 2 * k + 1)] = 1.0;
        o[(2 * k + 1, 2 * k)] = -1.0;
    }
    o
}

/// Builds the linearized model. Unstable drive sets are allowed here and
/// flagged through [`LinearModel::is_stable`].
pub fn build_linear_model(cfg: &SystemConfig, ds: &DriveSet) -> Result<LinearModel> {
    let frame = Frame::solve(ds, cfg.mech.gamma_m)?;
    let b = annihilation(XB);
    let mut h = Mat6::zeros();

    // residual detunings of the rotating frame
    for idx in CavityIndex::ALL {
        let a = annihilation(x_index(idx));
        let shift = frame.cavity_shift[idx.slot()];
        if shift != 0.0 {
            h += quadratic_term(C64::new(-0.5 * shift, 0.0), &a.conjugate(), &a);
        }
    }
    if frame.mech_shift != 0.0 {
        h += quadratic_term(C64::new(-0.5 * frame.mech_shift, 0.0), &b.conjugate(), &b);
    }

    let mut gamma_eff = cfg.mech.gamma_m;
    for d in ds.drives() {
        let cav = cfg.cavity(d.cavity);
        let g = 0.5 * (d.rate * cav.kappa).sqrt();
        let c = C64::from_polar(g, d.phase);
        let a_dag = annihilation(x_index(d.cavity)).conjugate();
        match d.sideband {
            Sideband::Lower => {
                h += quadratic_term(c, &a_dag, &b);
                gamma_eff += d.rate;
            }
            Sideband::Upper => {
                h += quadratic_term(c, &a_dag, &b.conjugate());
                gamma_eff -= d.rate;
            }
        }
    }

    let mut drift = symplectic() * h * 2.0;
    let mut channels = Vec::with_capacity(5);
    for idx in CavityIndex::ALL {
        let cav = cfg.cavity(idx);
        let x = x_index(idx);
        drift[(x, x)] -= 0.5 * cav.kappa;
        drift[(x + 1, x + 1)] -= 0.5 * cav.kappa;
        channels.push(InputChannel {
            channel: Channel::External(idx),
            coupling: cav.kappa_ext.sqrt(),
            mode: x,
            variance: cav.input_variance(),
        });
        channels.push(InputChannel {
            channel: Channel::Internal(idx),
            coupling: cav.kappa_int().max(0.0).sqrt(),
            mode: x,
            variance: cav.input_variance(),
        });
    }
    drift[(XB, XB)] -= 0.5 * cfg.mech.gamma_m;
    drift[(PB, PB)] -= 0.5 * cfg.mech.gamma_m;
    channels.push(InputChannel {
        channel: Channel::MechanicalBath,
        coupling: cfg.mech.gamma_m.sqrt(),
        mode: XB,
        variance: cfg.mech.thermal_variance(),
    });

    let mut model = LinearModel {
        drift,
        diffusion: Mat6::zeros(),
        channels,
        frame,
        max_growth_rate: 0.0,
        kappa_ext: CavityIndex::ALL.map(|c| cfg.cavity(c).kappa_ext),
        gamma_eff,
        digest: ds.digest(),
    };
    let (bm, n) = model.input_matrix();
    model.diffusion = bm * SMatrix::<f64, 10, 10>::from_diagonal(&n) * bm.transpose();
    model.max_growth_rate = drift
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(model)
}

/// Symmetric, vacuum-normalized covariance of the six quadratures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceMatrix(pub Mat6);

impl CovarianceMatrix {
    pub fn matrix(&self) -> &Mat6 {
        &self.0
    }

    /// Mean photon number of a cavity, (V_XX + V_PP − 2)/4.
    pub fn cavity_occupancy(&self, cavity: CavityIndex) -> f64 {
        let x = x_index(cavity);
        (self.0[(x, x)] + self.0[(x + 1, x + 1)] - 2.0) / 4.0
    }

    /// Smallest eigenvalue of V + iΩ; non-negative for a physical state.
    pub fn min_symplectic_eigenvalue_check(&self) -> f64 {
        let o = symplectic();
        let h = DMatrix::<C64>::from_fn(DIM, DIM, |i, j| C64::new(self.0[(i, j)], o[(i, j)]));
        h.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Solves A V + V Aᵀ + D = 0 by a direct solve of the vectorized system.
pub fn steady_covariance(m: &LinearModel) -> Result<CovarianceMatrix> {
    m.require_stable()?;
    let v = solve_lyapunov(&m.drift, &m.diffusion)?;
    Ok(CovarianceMatrix(v))
}

/// Continuous Lyapunov solve for a 6×6 stable drift. One round of iterative
/// refinement is applied; the residual is checked against ‖D‖.
pub fn solve_lyapunov(a: &Mat6, d: &Mat6) -> Result<Mat6> {
    let n = DIM;
    let eye = DMatrix::<f64>::identity(n, n);
    let ad = DMatrix::from_column_slice(n, n, a.as_slice());
    // column-major vec: vec(AV) = (I⊗A) vec V, vec(VAᵀ) = (A⊗I) vec V
    let k = eye.kronecker(&ad) + ad.kronecker(&eye);
    let lu = k.clone().lu();
    let pivots: Vec<f64> = (0..n * n).map(|i| lu.u()[(i, i)].abs()).collect();
    let pmax = pivots.iter().cloned().fold(0.0, f64::max);
    let pmin = pivots.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(pmin > 1e-14 * pmax) {
        return Err(Error::Numerical(format!(
            "Lyapunov operator is singular to working precision (pivot ratio {:.3e})",
            pmin / pmax
        )));
    }
    let rhs = -DVector::from_column_slice(d.as_slice());
    let mut x = lu.solve(&rhs).ok_or_else(|| Error::Numerical("Lyapunov LU solve failed".into()))?;
    let r = &rhs - &k * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    let v = Mat6::from_column_slice(x.as_slice());
    let v = (v + v.transpose()) * 0.5;
    let residual = (a * v + v * a.transpose() + d).norm();
    if residual > 1e-10 * d.norm() {
        return Err(Error::Numerical(format!(
            "Lyapunov residual {residual:.3e} exceeds 1e-10·‖D‖ = {:.3e} (pivot ratio {:.3e})",
            1e-10 * d.norm(),
            pmin / pmax
        )));
    }
    Ok(v)
}

/// The 2×2 mechanical block as (v1, v2, v12).
pub fn mechanical_marginal(v: &CovarianceMatrix) -> QuadratureMoments {
    QuadratureMoments::new(v.0[(XB, XB)], v.0[(PB, PB)], v.0[(XB, PB)])
}

/// Output photon-flux spectral density of one cavity's external port,
/// symmetrized and with the vacuum floor of ½ removed.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Offsets from the cavity resonance, rad/s, strictly increasing.
    pub freq: Vec<f64>,
    /// Photons per second per unit bandwidth (dimensionless) above vacuum.
    pub flux: Vec<f64>,
    pub cavity: CavityIndex,
    pub drive_digest: String,
    pub warnings: Vec<String>,
}

impl Spectrum {
    /// ∫ flux dω/2π in photons/s: trapezoid rule on the grid plus the 1/ω²
    /// Lorentzian tails beyond both ends.
    pub fn integrated_flux(&self) -> f64 {
        integrate_with_tails(&self.freq, &self.flux)
    }
}

pub(crate) fn integrate_with_tails(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let mut area = 0.0;
    for i in 1..n {
        area += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
    }
    let total: f64 = y.iter().sum();
    let center = if total > 0.0 { x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / total } else { 0.5 * (x[0] + x[n - 1]) };
    let lo_dist = (center - x[0]).max(0.0);
    let hi_dist = (x[n - 1] - center).max(0.0);
    area += y[0].max(0.0) * lo_dist + y[n - 1].max(0.0) * hi_dist;
    area / (2.0 * std::f64::consts::PI)
}

fn resolvent(m: &LinearModel, omega: f64) -> Result<CMat6> {
    let mut k: CMat6 = m.drift.map(|x| C64::new(-x, 0.0));
    for i in 0..DIM {
        k[(i, i)] += C64::new(0.0, -omega);
    }
    k.try_inverse().ok_or_else(|| Error::Numerical(format!("(−iω − A) singular at ω = {omega:.6e}")))
}

fn flux_at(m: &LinearModel, cavity: CavityIndex, omega: f64, b: &SMatrix<C64, 6, 10>, n: &SVector<f64, 10>) -> Result<f64> {
    let t = resolvent(m, omega)? * b;
    let x = x_index(cavity);
    let root = m.kappa_ext[cavity.slot()].sqrt();
    let ext = m
        .channels
        .iter()
        .position(|c| c.channel == Channel::External(cavity))
        .expect("external channel always present");
    let mut out = SMatrix::<C64, 2, 10>::zeros();
    for col in 0..10 {
        out[(0, col)] = t[(x, col)] * root;
        out[(1, col)] = t[(x + 1, col)] * root;
    }
    out[(0, 2 * ext)] -= C64::new(1.0, 0.0);
    out[(1, 2 * ext + 1)] -= C64::new(1.0, 0.0);
    let nd = SMatrix::<C64, 10, 10>::from_diagonal(&n.map(|v| C64::new(v, 0.0)));
    let s = out * nd * out.adjoint();
    let flux = 0.25 * (s[(0, 0)].re + s[(1, 1)].re + 2.0 * s[(0, 1)].im) - 0.5;
    Ok(if flux < 0.0 && flux > -1e-9 { 0.0 } else { flux })
}

/// Output spectrum of `cavity` on `grid` (offsets from its resonance, rad/s).
pub fn output_spectrum(m: &LinearModel, cavity: CavityIndex, grid: &[f64]) -> Result<Spectrum> {
    m.require_stable()?;
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("spectrum grid must be strictly increasing"));
    }
    let (b, n) = m.input_matrix();
    let bc = b.map(|x| C64::new(x, 0.0));
    let shift = m.frame.cavity_shift[cavity.slot()];
    let flux = grid
        .iter()
        .map(|&off| flux_at(m, cavity, off - shift, &bc, &n))
        .collect::<Result<Vec<_>>>()?;
    let mut warnings = Vec::new();
    let kappa_half = cavity_kappa_from_drift(m, cavity) / 2.0;
    if grid.iter().any(|f| f.abs() > kappa_half) {
        warnings.push(format!("grid extends beyond ±κ/2 = {kappa_half:.4e} rad/s of the resonance"));
    }
    if flux.iter().any(|&f| f < 0.0) {
        warnings.push("negative flux beyond rounding".into());
    }
    Ok(Spectrum { freq: grid.to_vec(), flux, cavity, drive_digest: m.digest.clone(), warnings })
}

fn cavity_kappa_from_drift(m: &LinearModel, cavity: CavityIndex) -> f64 {
    let x = x_index(cavity);
    -2.0 * m.drift[(x, x)]
}

/// Reflection coefficient S₁₁(ω) = 1 − κ_ext χ_eff(ω) seen by a weak probe on
/// `probe_cavity`, for probe offsets `grid` from that cavity's resonance.
pub fn driven_response(cfg: &SystemConfig, ds: &DriveSet, probe_cavity: CavityIndex, grid: &[f64]) -> Result<Vec<C64>> {
    let m = build_linear_model(cfg, ds)?;
    m.require_stable()?;
    let x = x_index(probe_cavity);
    let root = cfg.cavity(probe_cavity).kappa_ext.sqrt();
    let shift = m.frame.cavity_shift[probe_cavity.slot()];
    let i = C64::new(0.0, 1.0);
    grid.iter()
        .map(|&off| {
            let t = resolvent(&m, off - shift)?;
            // probe a_in = e^{−iωt}: X_in component 1, P_in component −i
            let rx = (t[(x, x)] - i * t[(x, x + 1)]) * root;
            let rp = (t[(x + 1, x)] - i * t[(x + 1, x + 1)]) * root;
            let a = (rx + i * rp) * 0.5;
            Ok(C64::new(1.0, 0.0) - a * root)
        })
        .collect()
}
