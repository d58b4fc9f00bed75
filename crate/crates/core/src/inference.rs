//! Inverse side of the measurement chain: Lorentzian line fits, sideband
//! occupancies and their asymmetry, phase-swept tomography and squeezing
//! figures of merit.
//!
//! Line areas follow the spectrum convention A = ∫ L dω/2π (photons/s), so a
//! sideband scattered at detected rate Γ by an oscillator with occupancy n
//! has area Γ·n (anti-Stokes) or Γ·(n + 1) (Stokes). A QND pair at detected
//! rate Γ emits a single line of area Γ·⟨X_Φ²⟩.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::analytic::QuadratureMoments;
use crate::error::{Error, Result};
use crate::synthesis::NoisySpectrum;

/// Relative parameter step that ends the Levenberg–Marquardt iteration.
pub const FIT_STEP_TOL: f64 = 1e-8;
pub const FIT_MAX_ITER: usize = 500;
/// χ² improvement a peak must buy over a flat line to count (99% point of χ²₃).
pub const ZERO_AREA_DCHI2: f64 = 11.34;

/// L(x) = A·w / ((x − c)² + w²/4) + background, so that ∫(L − bg) dx/2π = A.
pub fn lorentzian(x: f64, center: f64, fwhm: f64, area: f64) -> f64 {
    let d = x - center;
    area * fwhm / (d * d + 0.25 * fwhm * fwhm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakGuess {
    pub center: f64,
    pub fwhm: f64,
    pub area: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianFit {
    pub center: f64,
    pub fwhm: f64,
    pub area: f64,
    pub background: f64,
    pub center_err: f64,
    pub fwhm_err: f64,
    pub area_err: f64,
    pub background_err: f64,
    pub chi2_dof: f64,
    /// Data show no peak; area is zero and the fit is a flat background.
    pub zero_area: bool,
    pub iterations: usize,
}

/// Several Lorentzians over one shared flat background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiLorentzianFit {
    /// Each peak carries the shared background and its error.
    pub peaks: Vec<LorentzianFit>,
    pub background: f64,
    pub background_err: f64,
    pub chi2_dof: f64,
    pub iterations: usize,
}

struct WeightedData<'a> {
    x: &'a [f64],
    y: &'a [f64],
    w: Vec<f64>,
}

impl<'a> WeightedData<'a> {
    fn new(ns: &'a NoisySpectrum) -> Result<Self> {
        let n = ns.len();
        if n == 0 || ns.flux_measured.len() != n || ns.std_err.len() != n {
            return Err(Error::domain("spectrum columns are empty or of unequal length"));
        }
        if ns.std_err.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::domain("every bin needs a positive finite standard error"));
        }
        if ns.flux_measured.iter().chain(&ns.freq).any(|v| !v.is_finite()) {
            return Err(Error::domain("spectrum contains non-finite values"));
        }
        Ok(Self { x: &ns.freq, y: &ns.flux_measured, w: ns.std_err.iter().map(|e| 1.0 / (e * e)).collect() })
    }

    fn flat(&self) -> (f64, f64, f64) {
        let sw: f64 = self.w.iter().sum();
        let bg = self.w.iter().zip(self.y).map(|(w, y)| w * y).sum::<f64>() / sw;
        let chi2 = self.w.iter().zip(self.y).map(|(w, y)| w * (y - bg).powi(2)).sum();
        (bg, sw.recip().sqrt(), chi2)
    }
}

/// params = [bg, c₁, w₁, A₁, c₂, …]
fn model_and_jacobian(x: &[f64], p: &[f64], jac: Option<&mut DMatrix<f64>>) -> Vec<f64> {
    let k = (p.len() - 1) / 3;
    let mut out = vec![p[0]; x.len()];
    let mut jac = jac;
    for (i, &xi) in x.iter().enumerate() {
        if let Some(j) = jac.as_deref_mut() {
            j[(i, 0)] = 1.0;
        }
        for m in 0..k {
            let (c, w, a) = (p[1 + 3 * m], p[2 + 3 * m], p[3 + 3 * m]);
            let d = xi - c;
            let q = d * d + 0.25 * w * w;
            out[i] += a * w / q;
            if let Some(j) = jac.as_deref_mut() {
                j[(i, 1 + 3 * m)] = 2.0 * a * w * d / (q * q);
                j[(i, 2 + 3 * m)] = a * (d * d - 0.25 * w * w) / (q * q);
                j[(i, 3 + 3 * m)] = w / q;
            }
        }
    }
    out
}

fn chi2(data: &WeightedData, p: &[f64]) -> f64 {
    let f = model_and_jacobian(data.x, p, None);
    f.iter().zip(data.y).zip(&data.w).map(|((f, y), w)| w * (y - f).powi(2)).sum()
}

/// How peak parameters map onto fit parameters. `Free` packs
/// [bg, c₁, w₁, A₁, …]; `Shared` packs [bg, w, c₁, A₁, c₂, A₂, …] with one
/// width for every peak; `Pinned` packs [bg, w, A₁, A₂, …] with the centers
/// held at the given values.
#[derive(Debug, Clone, PartialEq)]
enum Widths {
    Free,
    Shared,
    Pinned(Vec<f64>),
}

impl Widths {
    fn peaks(&self, np: usize) -> usize {
        match self {
            Widths::Free => (np - 1) / 3,
            Widths::Shared => (np - 2) / 2,
            Widths::Pinned(c) => c.len(),
        }
    }

    /// Packed indices of (center, width, area) of peak m.
    fn indices(&self, m: usize) -> (Option<usize>, usize, usize) {
        match self {
            Widths::Free => (Some(1 + 3 * m), 2 + 3 * m, 3 + 3 * m),
            Widths::Shared => (Some(2 + 2 * m), 1, 3 + 2 * m),
            Widths::Pinned(_) => (None, 1, 2 + m),
        }
    }

    fn center(&self, p: &[f64], m: usize) -> f64 {
        match (self.indices(m).0, self) {
            (Some(c), _) => p[c],
            (None, Widths::Pinned(c)) => c[m],
            (None, _) => unreachable!("only pinned layouts omit centers"),
        }
    }

    fn pack(&self, bg: f64, init: &[PeakGuess]) -> Vec<f64> {
        let mut p = vec![bg];
        let mean_width = init.iter().map(|g| g.fwhm).sum::<f64>() / init.len() as f64;
        match self {
            Widths::Free => init.iter().for_each(|g| p.extend([g.center, g.fwhm, g.area])),
            Widths::Shared => {
                p.push(mean_width);
                init.iter().for_each(|g| p.extend([g.center, g.area]));
            }
            Widths::Pinned(_) => {
                p.push(mean_width);
                p.extend(init.iter().map(|g| g.area));
            }
        }
        p
    }

    fn expand(&self, p: &[f64]) -> Vec<f64> {
        if *self == Widths::Free {
            return p.to_vec();
        }
        let mut out = vec![p[0]];
        for m in 0..self.peaks(p.len()) {
            let (_, w, a) = self.indices(m);
            out.extend([self.center(p, m), p[w], p[a]]);
        }
        out
    }

    /// Model values and, if asked, the Jacobian with respect to the packed parameters.
    fn eval(&self, x: &[f64], p: &[f64], jac: Option<&mut DMatrix<f64>>) -> Vec<f64> {
        let full = self.expand(p);
        match (self, jac) {
            (_, None) => model_and_jacobian(x, &full, None),
            (Widths::Free, Some(j)) => model_and_jacobian(x, &full, Some(j)),
            (_, Some(j)) => {
                let mut fj = DMatrix::zeros(x.len(), full.len());
                let f = model_and_jacobian(x, &full, Some(&mut fj));
                j.fill(0.0);
                for i in 0..x.len() {
                    j[(i, 0)] = fj[(i, 0)];
                    for m in 0..self.peaks(p.len()) {
                        let (c, w, a) = self.indices(m);
                        if let Some(c) = c {
                            j[(i, c)] = fj[(i, 1 + 3 * m)];
                        }
                        j[(i, w)] += fj[(i, 2 + 3 * m)];
                        j[(i, a)] = fj[(i, 3 + 3 * m)];
                    }
                }
                f
            }
        }
    }

    fn widths_positive(&self, p: &[f64]) -> bool {
        (0..self.peaks(p.len())).all(|m| p[self.indices(m).1] > 0.0)
    }

    fn step_scale(&self, p: &[f64], area_scale: f64) -> Vec<f64> {
        let mut s = vec![p[0].abs().max(area_scale * 1e-12).max(f64::MIN_POSITIVE); p.len()];
        for m in 0..self.peaks(p.len()) {
            let (c, w, a) = self.indices(m);
            if let Some(c) = c {
                s[c] = p[w].abs();
            }
            s[w] = p[w].abs();
            s[a] = p[a].abs().max(area_scale);
        }
        s
    }
}

struct LmResult {
    params: Vec<f64>,
    cov: DMatrix<f64>,
    chi2: f64,
    iterations: usize,
    widths: Widths,
}

fn levenberg_marquardt(data: &WeightedData, p0: Vec<f64>, widths: &Widths) -> Result<LmResult> {
    let n = data.x.len();
    let np = p0.len();
    if n <= np {
        return Err(Error::domain(format!("{n} bins cannot constrain {np} parameters")));
    }
    // areas are compared against the data's own scale for the convergence test
    let span = data.x[n - 1] - data.x[0];
    let area_scale = data.y.iter().map(|v| v.abs()).fold(0.0, f64::max) * span.abs() * 1e-6;
    let mut p = p0;
    let mut jac = DMatrix::zeros(n, np);
    let mut lambda: f64 = 1e-3;
    let mut current = chi2(data, &widths.expand(&p));
    for iter in 1..=FIT_MAX_ITER {
        let f = widths.eval(data.x, &p, Some(&mut jac));
        let mut jtwj = DMatrix::<f64>::zeros(np, np);
        let mut jtwr = DVector::<f64>::zeros(np);
        for i in 0..n {
            let r = data.y[i] - f[i];
            for a in 0..np {
                let ja = jac[(i, a)] * data.w[i];
                jtwr[a] += ja * r;
                for b in a..np {
                    jtwj[(a, b)] += ja * jac[(i, b)];
                }
            }
        }
        for a in 0..np {
            for b in 0..a {
                jtwj[(a, b)] = jtwj[(b, a)];
            }
        }
        let diag: Vec<f64> = (0..np).map(|a| jtwj[(a, a)].max(f64::MIN_POSITIVE).sqrt()).collect();
        // normalized system for conditioning
        let scaled = DMatrix::from_fn(np, np, |a, b| jtwj[(a, b)] / (diag[a] * diag[b]));
        let rhs = DVector::from_fn(np, |a, _| jtwr[a] / diag[a]);

        let mut accepted = None;
        for _ in 0..60 {
            let mut m = scaled.clone();
            for a in 0..np {
                m[(a, a)] *= 1.0 + lambda;
            }
            let Some(step) = m.lu().solve(&rhs) else {
                lambda *= 10.0;
                continue;
            };
            let delta: Vec<f64> = (0..np).map(|a| step[a] / diag[a]).collect();
            let trial: Vec<f64> = p.iter().zip(&delta).map(|(a, b)| a + b).collect();
            let c = if widths.widths_positive(&trial) { chi2(data, &widths.expand(&trial)) } else { f64::INFINITY };
            if c <= current {
                accepted = Some((trial, delta, c));
                lambda = (lambda / 10.0).max(1e-12);
                break;
            }
            lambda *= 10.0;
        }
        let Some((trial, delta, c)) = accepted else {
            // no downhill step at any damping: at a minimum to working precision
            return finish(data, p, current, iter, &mut jac, widths);
        };
        let scale = widths.step_scale(&trial, area_scale);
        let rel = delta.iter().zip(&scale).map(|(d, s)| (d / s).abs()).fold(0.0, f64::max);
        p = trial;
        current = c;
        if rel < FIT_STEP_TOL {
            return finish(data, p, current, iter, &mut jac, widths);
        }
    }
    Err(Error::NonConvergence(FIT_MAX_ITER))
}

fn finish(
    data: &WeightedData,
    p: Vec<f64>,
    chi2: f64,
    iterations: usize,
    jac: &mut DMatrix<f64>,
    widths: &Widths,
) -> Result<LmResult> {
    let np = p.len();
    widths.eval(data.x, &p, Some(jac));
    let mut jtwj = DMatrix::<f64>::zeros(np, np);
    for i in 0..data.x.len() {
        for a in 0..np {
            for b in 0..np {
                jtwj[(a, b)] += jac[(i, a)] * data.w[i] * jac[(i, b)];
            }
        }
    }
    let diag: Vec<f64> = (0..np).map(|a| jtwj[(a, a)].max(f64::MIN_POSITIVE).sqrt()).collect();
    let scaled = DMatrix::from_fn(np, np, |a, b| jtwj[(a, b)] / (diag[a] * diag[b]));
    let inv = scaled
        .try_inverse()
        .ok_or_else(|| Error::Numerical("fit normal matrix is singular".into()))?;
    let cov = DMatrix::from_fn(np, np, |a, b| inv[(a, b)] / (diag[a] * diag[b]));
    if (0..np).any(|a| !(cov[(a, a)] >= 0.0)) {
        return Err(Error::Numerical("fit covariance has a negative variance".into()));
    }
    Ok(LmResult { params: p, cov, chi2, iterations, widths: widths.clone() })
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Starting values for one peak: median background, smoothed maximum, and
/// width from the area-to-height ratio.
pub fn guess_peak(ns: &NoisySpectrum) -> (PeakGuess, f64) {
    let n = ns.len();
    let bg = median(&ns.flux_measured);
    let half = 2usize;
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            ns.flux_measured[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64 - bg
        })
        .collect();
    let imax = (0..n).max_by(|&a, &b| smooth[a].total_cmp(&smooth[b])).unwrap_or(0);
    let height = smooth[imax].max(f64::MIN_POSITIVE);
    let mut area = 0.0;
    for i in 1..n {
        area += 0.5 * (ns.flux_measured[i] + ns.flux_measured[i - 1] - 2.0 * bg) * (ns.freq[i] - ns.freq[i - 1]);
    }
    area /= 2.0 * std::f64::consts::PI;
    let span = (ns.freq[n - 1] - ns.freq[0]).abs();
    let dx = span / (n.max(2) - 1) as f64;
    let fwhm = (4.0 * area.abs() / height).clamp(3.0 * dx, 0.5 * span);
    (PeakGuess { center: ns.freq[imax], fwhm, area: area.abs().max(0.25 * height * fwhm) }, bg)
}

fn flat_fit(data: &WeightedData, guess: PeakGuess) -> LorentzianFit {
    let (bg, bg_err, chi2) = data.flat();
    LorentzianFit {
        center: guess.center,
        fwhm: guess.fwhm,
        area: 0.0,
        background: bg,
        center_err: 0.0,
        fwhm_err: 0.0,
        area_err: 0.0,
        background_err: bg_err,
        chi2_dof: chi2 / (data.x.len() as f64 - 1.0).max(1.0),
        zero_area: true,
        iterations: 0,
    }
}

fn peak_from(r: &LmResult, m: usize, dof: f64) -> LorentzianFit {
    let p = &r.params;
    let e = |i: usize| r.cov[(i, i)].sqrt();
    let (c, w, a) = r.widths.indices(m);
    LorentzianFit {
        center: r.widths.center(p, m),
        fwhm: p[w],
        area: p[a],
        background: p[0],
        center_err: c.map_or(0.0, e),
        fwhm_err: e(w),
        area_err: e(a),
        background_err: e(0),
        chi2_dof: r.chi2 / dof,
        zero_area: false,
        iterations: r.iterations,
    }
}

/// Weighted single-Lorentzian fit on a flat background. Peakless data give a
/// flat fit with `zero_area` set.
pub fn fit_lorentzian(ns: &NoisySpectrum, init: Option<PeakGuess>) -> Result<LorentzianFit> {
    let data = WeightedData::new(ns)?;
    let (auto, bg0) = guess_peak(ns);
    let guess = init.unwrap_or(auto);
    let (_, _, chi2_flat) = data.flat();
    let dof = (data.x.len() - 4) as f64;
    match levenberg_marquardt(&data, vec![bg0, guess.center, guess.fwhm, guess.area], &Widths::Free) {
        Ok(r) if chi2_flat - r.chi2 >= ZERO_AREA_DCHI2 && r.params[3] > 0.0 => Ok(peak_from(&r, 0, dof)),
        Ok(_) | Err(Error::Numerical(_)) => Ok(flat_fit(&data, guess)),
        Err(e) => Err(e),
    }
}

/// Joint fit of several Lorentzians sharing one background.
pub fn fit_lorentzians(ns: &NoisySpectrum, init: &[PeakGuess]) -> Result<MultiLorentzianFit> {
    fit_multi(ns, init, Widths::Free)
}

/// Joint fit of several Lorentzians sharing one background and one width,
/// as for lines scattered off the same mechanical mode. The starting width is
/// the mean of the guesses.
pub fn fit_lorentzians_shared_width(ns: &NoisySpectrum, init: &[PeakGuess]) -> Result<MultiLorentzianFit> {
    fit_multi(ns, init, Widths::Shared)
}

/// Joint fit with every line center held at its guess and one shared width,
/// for lines whose positions are set by known drive detunings.
pub fn fit_lorentzians_pinned(ns: &NoisySpectrum, init: &[PeakGuess]) -> Result<MultiLorentzianFit> {
    fit_multi(ns, init, Widths::Pinned(init.iter().map(|g| g.center).collect()))
}

fn fit_multi(ns: &NoisySpectrum, init: &[PeakGuess], widths: Widths) -> Result<MultiLorentzianFit> {
    if init.is_empty() {
        return Err(Error::domain("at least one peak guess is required"));
    }
    if init.iter().any(|g| !(g.fwhm > 0.0)) {
        return Err(Error::domain("peak guesses need positive widths"));
    }
    let data = WeightedData::new(ns)?;
    let p0 = widths.pack(median(&ns.flux_measured), init);
    let r = levenberg_marquardt(&data, p0, &widths)?;
    let dof = (data.x.len() - r.params.len()) as f64;
    let peaks = (0..init.len()).map(|m| peak_from(&r, m, dof)).collect();
    Ok(MultiLorentzianFit {
        peaks,
        background: r.params[0],
        background_err: r.cov[(0, 0)].sqrt(),
        chi2_dof: r.chi2 / dof,
        iterations: r.iterations,
    })
}

/// A value with its one-standard-deviation uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub value: f64,
    pub err: f64,
}

impl Measured {
    pub fn new(value: f64, err: f64) -> Self {
        Self { value, err }
    }

    pub fn exact(value: f64) -> Self {
        Self { value, err: 0.0 }
    }

    /// |value − truth| in units of err (infinite when err = 0 and they differ).
    pub fn pull(&self, truth: f64) -> f64 {
        let d = (self.value - truth).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.err
        }
    }
}

/// Variance of X_Φ from the area of a QND line at detected rate `gamma`.
pub fn variance_from_qnd_line(fit: &LorentzianFit, gamma: f64) -> Result<Measured> {
    if !(gamma > 0.0) {
        return Err(Error::domain("measurement rate must be positive"));
    }
    Ok(Measured::new(fit.area / gamma, fit.area_err / gamma))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SidebandOccupancy {
    pub n_anti: Measured,
    pub n_stokes: Measured,
    /// (A₋/A₊)·(Γ⁺/Γ⁻), which equals n/(n+1).
    pub calibration_factor: Measured,
    /// Inverse-variance mean of the two estimates.
    pub n_combined: Measured,
}

/// Occupancies from the anti-Stokes (area Γ⁻·n) and Stokes (area Γ⁺·(n+1))
/// lines. Rates are the detected scattering rates.
pub fn occupancy_from_sidebands(
    anti_stokes: &LorentzianFit,
    stokes: &LorentzianFit,
    gamma_minus: f64,
    gamma_plus: f64,
) -> Result<SidebandOccupancy> {
    if !(gamma_minus > 0.0) {
        return Err(Error::domain("anti-Stokes rate must be positive"));
    }
    if !(gamma_plus > 0.0) {
        return Err(Error::domain("a Stokes line needs a positive Stokes rate"));
    }
    let n_anti = Measured::new(anti_stokes.area / gamma_minus, anti_stokes.area_err / gamma_minus);
    let n_stokes = Measured::new(stokes.area / gamma_plus - 1.0, stokes.area_err / gamma_plus);
    let (am, ap) = (anti_stokes.area, stokes.area);
    let k = gamma_plus / gamma_minus;
    let cal = k * am / ap;
    let cal_err = k * ((anti_stokes.area_err / ap).powi(2) + (am * stokes.area_err / (ap * ap)).powi(2)).sqrt();
    let n_combined = inverse_variance_mean(&[n_anti, n_stokes]);
    Ok(SidebandOccupancy { n_anti, n_stokes, calibration_factor: Measured::new(cal, cal_err), n_combined })
}

pub fn inverse_variance_mean(xs: &[Measured]) -> Measured {
    if xs.iter().any(|x| x.err == 0.0) {
        let exact: Vec<f64> = xs.iter().filter(|x| x.err == 0.0).map(|x| x.value).collect();
        return Measured::exact(exact.iter().sum::<f64>() / exact.len() as f64);
    }
    let sw: f64 = xs.iter().map(|x| x.err.powi(-2)).sum();
    let mean = xs.iter().map(|x| x.value * x.err.powi(-2)).sum::<f64>() / sw;
    Measured::new(mean, sw.recip().sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TomogramFit {
    pub v1: f64,
    pub v2: f64,
    pub v12: f64,
    pub v1_err: f64,
    pub v2_err: f64,
    pub v12_err: f64,
    /// Covariance of (v1, v2, v12).
    pub covariance: [[f64; 3]; 3],
    /// Angle of minimum variance in [0, π).
    pub min_angle: f64,
    pub chi2_dof: f64,
}

impl TomogramFit {
    pub fn moments(&self) -> QuadratureMoments {
        QuadratureMoments::new(self.v1, self.v2, self.v12)
    }

    /// v(φ) = v1·cos²φ + v2·sin²φ + v12·sin 2φ
    pub fn variance_at(&self, phi: f64) -> f64 {
        crate::analytic::variance_of_phase(&self.moments(), phi)
    }
}

/// Weighted least-squares fit of v(φ) = v1·cos²φ + v2·sin²φ + v12·sin 2φ.
pub fn tomography_sweep(phases: &[f64], variances: &[Measured]) -> Result<TomogramFit> {
    if phases.len() != variances.len() {
        return Err(Error::domain("phases and variances differ in length"));
    }
    if variances.iter().any(|v| !(v.err > 0.0)) {
        return Err(Error::domain("tomography points need positive uncertainties"));
    }
    let mut nm = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    for (&phi, v) in phases.iter().zip(variances) {
        let row = Vector3::new(phi.cos().powi(2), phi.sin().powi(2), (2.0 * phi).sin());
        let w = v.err.powi(-2);
        nm += row * row.transpose() * w;
        rhs += row * (w * v.value);
    }
    let sv = nm.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 1e-10 * smax) {
        return Err(Error::DegenerateDesign(format!(
            "phases do not separate v1, v2 and v12 (singular value ratio {:.3e})",
            smin / smax
        )));
    }
    let mut distinct: Vec<f64> = phases.iter().map(|p| p.rem_euclid(std::f64::consts::PI)).collect();
    distinct.sort_by(|a, b| a.total_cmp(b));
    distinct.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    if distinct.len() < 5 {
        return Err(Error::domain(format!("tomography needs ≥ 5 distinct phases mod π, got {}", distinct.len())));
    }
    let cov = nm.try_inverse().ok_or_else(|| Error::DegenerateDesign("normal matrix not invertible".into()))?;
    let sol = cov * rhs;
    let chi2: f64 = phases
        .iter()
        .zip(variances)
        .map(|(&phi, v)| {
            let model = sol[0] * phi.cos().powi(2) + sol[1] * phi.sin().powi(2) + sol[2] * (2.0 * phi).sin();
            ((v.value - model) / v.err).powi(2)
        })
        .sum();
    let q = QuadratureMoments::new(sol[0], sol[1], sol[2]);
    let (vmin, _) = q.principal_variances();
    if vmin < 0.0 {
        return Err(Error::Numerical(format!("fitted tomogram is negative at its minimum ({vmin:.4e})")));
    }
    let dof = (phases.len() as f64 - 3.0).max(1.0);
    Ok(TomogramFit {
        v1: sol[0],
        v2: sol[1],
        v12: sol[2],
        v1_err: cov[(0, 0)].sqrt(),
        v2_err: cov[(1, 1)].sqrt(),
        v12_err: cov[(2, 2)].sqrt(),
        covariance: [
            [cov[(0, 0)], cov[(0, 1)], cov[(0, 2)]],
            [cov[(1, 0)], cov[(1, 1)], cov[(1, 2)]],
            [cov[(2, 0)], cov[(2, 1)], cov[(2, 2)]],
        ],
        min_angle: q.squeezing_angle(),
        chi2_dof: chi2 / dof,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezingMetrics {
    pub v_min: f64,
    pub squeezing_db: f64,
    pub purity: f64,
    pub determinant: Measured,
    /// v1·v2 − v12² ≥ 1 − 3σ
    pub heisenberg_ok: bool,
}

pub fn squeezing_metrics(t: &TomogramFit) -> SqueezingMetrics {
    let q = t.moments();
    let (v_min, _) = q.principal_variances();
    let det = q.determinant();
    let grad = [t.v2, t.v1, -2.0 * t.v12];
    let mut var = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            var += grad[a] * t.covariance[a][b] * grad[b];
        }
    }
    let sigma = var.max(0.0).sqrt();
    SqueezingMetrics {
        v_min,
        squeezing_db: 10.0 * (1.0 / v_min).log10(),
        purity: 1.0 / det.sqrt(),
        determinant: Measured::new(det, sigma),
        heisenberg_ok: det >= 1.0 - 3.0 * sigma,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvasionReport {
    /// 10·log₁₀(2·n_ba / max(Δv1, σ_Δ)).
    pub evasion_db: f64,
    pub delta_v1: Measured,
    pub n_ba: f64,
    /// Δv1 is within 2σ of zero, so the figure is a lower bound.
    pub lower_bound: bool,
}

/// Backaction evasion of a QND measurement: the excess of the measured v1 over
/// the unmeasured reference, against the 2·n_ba the same drive strength adds
/// to the conjugate quadrature.
pub fn backaction_evasion_report(qnd_v1: Measured, reference_v1: Option<Measured>, n_ba: f64) -> Result<EvasionReport> {
    let Some(reference) = reference_v1 else {
        return Err(Error::domain("evasion needs an unmeasured (Γ₁ = 0) reference variance"));
    };
    if !(n_ba > 0.0) {
        return Err(Error::domain(format!("injected backaction must be positive, got {n_ba}")));
    }
    let delta = qnd_v1.value - reference.value;
    let sigma = qnd_v1.err.hypot(reference.err);
    let denom = delta.max(sigma);
    if !(denom > 0.0) {
        return Err(Error::domain("exact equal variances give an unbounded evasion figure"));
    }
    Ok(EvasionReport {
        evasion_db: 10.0 * (2.0 * n_ba / denom).log10(),
        delta_v1: Measured::new(delta, sigma),
        n_ba,
        lower_bound: delta < 2.0 * sigma,
    })
}

/// Injected backaction occupancy from a non-QND measurement and the
/// unmeasured occupancy at the same measurement strength.
pub fn injected_backaction(n_tot: Measured, n_ref: Measured) -> Measured {
    Measured::new(n_tot.value - n_ref.value, n_tot.err.hypot(n_ref.err))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: Measured,
    pub intercept: Measured,
    pub covariance: f64,
    pub chi2_dof: f64,
}

/// Weighted straight-line fit y = intercept + slope·x.
pub fn weighted_linear_fit(x: &[f64], y: &[Measured]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::domain("a line fit needs at least three matched points"));
    }
    if y.iter().any(|v| !(v.err > 0.0)) {
        return Err(Error::domain("line fit points need positive uncertainties"));
    }
    let (mut s, mut sx, mut sxx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&xi, yi) in x.iter().zip(y) {
        let w = yi.err.powi(-2);
        s += w;
        sx += w * xi;
        sxx += w * xi * xi;
        sy += w * yi.value;
        sxy += w * xi * yi.value;
    }
    let det = s * sxx - sx * sx;
    if !(det > 1e-12 * s * sxx) {
        return Err(Error::DegenerateDesign("abscissae are all equal".into()));
    }
    let slope = (s * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    let chi2: f64 = x.iter().zip(y).map(|(&xi, yi)| ((yi.value - intercept - slope * xi) / yi.err).powi(2)).sum();
    Ok(LinearFit {
        slope: Measured::new(slope, (s / det).sqrt()),
        intercept: Measured::new(intercept, (sxx / det).sqrt()),
        covariance: -sx / det,
        chi2_dof: chi2 / (x.len() as f64 - 2.0),
    })
}

/// Width of the transparency window: a Lorentzian fit to |S₁₁ − S₁₁,bare|²
/// with uniform weights.
pub fn transparency_window(freq: &[f64], s11: &[nalgebra::Complex<f64>], bare: &[nalgebra::Complex<f64>]) -> Result<LorentzianFit> {
    if freq.len() != s11.len() || freq.len() != bare.len() {
        return Err(Error::domain("response arrays differ in length"));
    }
    let y: Vec<f64> = s11.iter().zip(bare).map(|(a, b)| (a - b).norm_sqr()).collect();
    let peak = y.iter().cloned().fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(Error::domain("response shows no transparency window"));
    }
    let ns = NoisySpectrum {
        freq: freq.to_vec(),
        flux: y.clone(),
        flux_measured: y,
        std_err: vec![peak * 1e-3; freq.len()],
        noise: crate::synthesis::NoiseModel::default(),
        cavity: crate::sysmodel::CavityIndex::Measurement,
        drive_digest: String::new(),
    };
    let fit = fit_lorentzian(&ns, None)?;
    if fit.zero_area {
        return Err(Error::Numerical("transparency window fit found no peak".into()));
    }
    Ok(fit)
}

/// Field descriptions and units of the JSON fit records.
pub fn fit_report_schema() -> serde_json::Value {
    serde_json::json!({
        "LorentzianFit": {
            "center": "rad/s offset from the cavity resonance",
            "fwhm": "rad/s",
            "area": "photons/s (integral of flux over dω/2π)",
            "background": "photons/s/Hz",
            "center_err": "rad/s", "fwhm_err": "rad/s", "area_err": "photons/s", "background_err": "photons/s/Hz",
            "chi2_dof": "dimensionless",
            "zero_area": "bool: no significant peak, flat fit returned",
            "iterations": "count"
        },
        "Measured": { "value": "as named by the enclosing field", "err": "one standard deviation, same unit" },
        "SidebandOccupancy": {
            "n_anti": "quanta", "n_stokes": "quanta", "n_combined": "quanta",
            "calibration_factor": "dimensionless, equals n/(n+1)"
        },
        "TomogramFit": {
            "v1": "vacuum units", "v2": "vacuum units", "v12": "vacuum units",
            "v1_err": "vacuum units", "v2_err": "vacuum units", "v12_err": "vacuum units",
            "covariance": "vacuum units squared, order (v1, v2, v12)",
            "min_angle": "rad in [0, π)", "chi2_dof": "dimensionless"
        },
        "SqueezingMetrics": {
            "v_min": "vacuum units", "squeezing_db": "dB", "purity": "dimensionless",
            "determinant": "vacuum units squared", "heisenberg_ok": "bool"
        },
        "EvasionReport": { "evasion_db": "dB", "delta_v1": "vacuum units", "n_ba": "quanta", "lower_bound": "bool" },
        "LinearFit": { "slope": "y per x", "intercept": "y", "covariance": "slope·intercept covariance", "chi2_dof": "dimensionless" }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::linspace;
    use crate::synthesis::{synthesize, NoiseModel};
    use crate::sysmodel::{hz, CavityIndex};
    use crate::dynamics::Spectrum;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn noiseless(freq: Vec<f64>, y: Vec<f64>, floor: f64) -> NoisySpectrum {
        let std_err = y.iter().map(|v| (v + floor) / 1e6).collect();
        let measured: Vec<f64> = y.iter().map(|v| v + floor).collect();
        NoisySpectrum {
            freq,
            flux: y,
            flux_measured: measured,
            std_err,
            noise: NoiseModel::new(floor, 1e12, 0).unwrap(),
            cavity: CavityIndex::Measurement,
            drive_digest: String::new(),
        }
    }

    fn lorentz_spectrum(center: f64, fwhm: f64, area: f64, n: usize, half_span: f64) -> Spectrum {
        let freq = linspace(center - half_span, center + half_span, n);
        let flux = freq.iter().map(|&x| lorentzian(x, center, fwhm, area)).collect();
        Spectrum { freq, flux, cavity: CavityIndex::Measurement, drive_digest: String::new(), warnings: vec![] }
    }

    #[test]
    fn lorentzian_area_convention() {
        let s = lorentz_spectrum(0.0, 2.0, 5.0, 200001, 20000.0);
        assert_relative_eq!(s.integrated_flux(), 5.0, max_relative = 1e-6);
        assert_relative_eq!(lorentzian(0.0, 0.0, 2.0, 5.0), 4.0 * 5.0 / 2.0);
    }

    #[test]
    fn noiseless_lorentzian_is_recovered() {
        let w = hz(5e3);
        let s = lorentz_spectrum(hz(1e3), w, 100.0, 1001, 10.0 * w);
        let ns = noiseless(s.freq, s.flux, 20.0);
        let fit = fit_lorentzian(&ns, None).unwrap();
        assert!(!fit.zero_area);
        assert_relative_eq!(fit.area, 100.0, max_relative = 1e-6);
        assert_relative_eq!(fit.fwhm, w, max_relative = 1e-6);
        assert_relative_eq!(fit.background, 20.0, max_relative = 1e-6);
        assert!((fit.center - hz(1e3)).abs() < 1e-6 * w);
        assert!(fit.chi2_dof < 1e-12);
    }

    #[test]
    fn flat_data_flagged() {
        let freq = linspace(-1e5, 1e5, 801);
        let ns = synthesize(
            &Spectrum { freq, flux: vec![0.0; 801], cavity: CavityIndex::Measurement, drive_digest: String::new(), warnings: vec![] },
            &NoiseModel::new(20.0, 1e4, 9).unwrap(),
        );
        let fit = fit_lorentzian(&ns, None).unwrap();
        assert!(fit.zero_area);
        assert_eq!(fit.area, 0.0);
        assert!((fit.background - 20.0).abs() < 0.05);
        let exact = noiseless(linspace(-1.0, 1.0, 50), vec![0.0; 50], 20.0);
        assert!(fit_lorentzian(&exact, None).unwrap().zero_area);
    }

    #[test]
    fn fitted_area_is_unbiased() {
        // a typical measured line: height 1.25 over a floor of 20
        let w = 88e3;
        let area = 1.25 * w / 4.0;
        let s = lorentz_spectrum(0.0, w, area, 2001, 10.0 * w);
        let seeds = 200;
        let mut areas = Vec::new();
        let mut pulls = Vec::new();
        for k in 0..seeds {
            let fit = fit_lorentzian(&synthesize(&s, &NoiseModel::default().with_seed(k)), None).unwrap();
            areas.push(fit.area);
            pulls.push((fit.area - area) / fit.area_err);
        }
        let mean = areas.iter().sum::<f64>() / seeds as f64;
        assert!((mean / area - 1.0).abs() < 0.01, "{mean} vs {area}");
        let pull_sd = (pulls.iter().map(|p| p * p).sum::<f64>() / seeds as f64).sqrt();
        assert!((pull_sd - 1.0).abs() < 0.15, "{pull_sd}");
    }

    #[test]
    fn joint_fit_separates_two_lines() {
        let w = 3e4;
        let freq = linspace(-6e5, 6e5, 4001);
        let flux: Vec<f64> = freq.iter().map(|&x| lorentzian(x, -3e5, w, 2000.0) + lorentzian(x, 3e5, 1.1 * w, 5000.0)).collect();
        let ns = noiseless(freq, flux, 20.0);
        let g = |c: f64, a: f64| PeakGuess { center: c * 1.01, fwhm: 0.8 * w, area: a * 0.7 };
        let fit = fit_lorentzians(&ns, &[g(-3e5, 2000.0), g(3e5, 5000.0)]).unwrap();
        assert_relative_eq!(fit.peaks[0].area, 2000.0, max_relative = 1e-6);
        assert_relative_eq!(fit.peaks[1].area, 5000.0, max_relative = 1e-6);
        assert_relative_eq!(fit.peaks[1].fwhm, 1.1 * w, max_relative = 1e-6);
        assert_relative_eq!(fit.background, 20.0, max_relative = 1e-9);
    }

    #[test]
    fn shared_width_fit_ties_lines() {
        let w = 3e4;
        let freq = linspace(-6e5, 6e5, 4001);
        let flux: Vec<f64> = freq.iter().map(|&x| lorentzian(x, -3e5, w, 300.0) + lorentzian(x, 3e5, w, 5000.0)).collect();
        let ns = noiseless(freq, flux, 20.0);
        let g = |c: f64, a: f64, f: f64| PeakGuess { center: c * 1.01, fwhm: f * w, area: a * 0.7 };
        let fit = fit_lorentzians_shared_width(&ns, &[g(-3e5, 300.0, 0.7), g(3e5, 5000.0, 1.1)]).unwrap();
        assert_relative_eq!(fit.peaks[0].area, 300.0, max_relative = 1e-6);
        assert_relative_eq!(fit.peaks[1].area, 5000.0, max_relative = 1e-6);
        assert_eq!(fit.peaks[0].fwhm, fit.peaks[1].fwhm);
        assert_eq!(fit.peaks[0].fwhm_err, fit.peaks[1].fwhm_err);
        assert_relative_eq!(fit.peaks[0].fwhm, w, max_relative = 1e-6);
        assert_relative_eq!(fit.peaks[1].center, 3e5, max_relative = 1e-9);
    }

    #[test]
    fn pinned_fit_holds_centers() {
        let w = 3e4;
        let freq = linspace(-6e5, 6e5, 4001);
        let flux: Vec<f64> = freq.iter().map(|&x| lorentzian(x, -3e5, w, 300.0) + lorentzian(x, 3e5, w, 5000.0)).collect();
        let ns = noiseless(freq, flux, 20.0);
        let g = |c: f64| PeakGuess { center: c, fwhm: 0.6 * w, area: 1.0 };
        let fit = fit_lorentzians_pinned(&ns, &[g(-3e5), g(3e5)]).unwrap();
        assert_eq!(fit.peaks[0].center, -3e5);
        assert_eq!(fit.peaks[0].center_err, 0.0);
        assert_relative_eq!(fit.peaks[0].area, 300.0, max_relative = 1e-6);
        assert_relative_eq!(fit.peaks[1].area, 5000.0, max_relative = 1e-6);
        assert_relative_eq!(fit.peaks[1].fwhm, w, max_relative = 1e-6);
    }

    #[test]
    fn pinned_fit_is_stable_on_weak_line() {
        let w = 3e4;
        let freq = linspace(-6e5, 6e5, 2001);
        let flux: Vec<f64> = freq.iter().map(|&x| lorentzian(x, -3e5, w, 300.0) + lorentzian(x, 3e5, w, 3000.0)).collect();
        let s = Spectrum { freq, flux, cavity: CavityIndex::Measurement, drive_digest: String::new(), warnings: vec![] };
        let g = [PeakGuess { center: -3e5, fwhm: w, area: 1000.0 }, PeakGuess { center: 3e5, fwhm: w, area: 1000.0 }];
        let mut pulls = Vec::new();
        for k in 0..100 {
            let fit = fit_lorentzians_pinned(&synthesize(&s, &NoiseModel::default().with_seed(k)), &g).unwrap();
            pulls.push((fit.peaks[0].area - 300.0) / fit.peaks[0].area_err);
        }
        let rms = (pulls.iter().map(|p| p * p).sum::<f64>() / pulls.len() as f64).sqrt();
        assert!((rms - 1.0).abs() < 0.2, "{rms}");
    }

    fn fake_fit(area: f64, err: f64) -> LorentzianFit {
        LorentzianFit {
            center: 0.0,
            fwhm: 1.0,
            area,
            background: 0.0,
            center_err: 0.0,
            fwhm_err: 0.0,
            area_err: err,
            background_err: 0.0,
            chi2_dof: 1.0,
            zero_area: false,
            iterations: 1,
        }
    }

    #[test]
    fn sideband_inversion() {
        let g = 3.0;
        let occ = occupancy_from_sidebands(&fake_fit(g * 1.0, 0.1), &fake_fit(g * 2.0, 0.1), g, g).unwrap();
        assert_eq!(occ.n_anti.value, 1.0);
        assert_eq!(occ.n_stokes.value, 1.0);
        assert_relative_eq!(occ.calibration_factor.value, 0.5);
        assert_relative_eq!(occ.n_combined.value, 1.0);
        assert!(occupancy_from_sidebands(&fake_fit(1.0, 0.1), &fake_fit(2.0, 0.1), g, 0.0).is_err());
        let n: f64 = 0.979;
        assert!((n / (n + 1.0) - 0.4947).abs() < 5e-5);
    }

    #[test]
    fn calibration_factor_has_no_bias() {
        // asymmetric pair of lines at n = 0.979 with realistic SNR, many seeds
        let n = 0.979;
        let (g, w) = (4e4, 3e4);
        let mk = |a: f64| lorentz_spectrum(0.0, w, a, 1001, 8.0 * w);
        let (anti, stokes) = (mk(g * n), mk(g * (n + 1.0)));
        let mut cal = Vec::new();
        for k in 0..200 {
            let fa = fit_lorentzian(&synthesize(&anti, &NoiseModel::default().with_seed(2 * k)), None).unwrap();
            let fs = fit_lorentzian(&synthesize(&stokes, &NoiseModel::default().with_seed(2 * k + 1)), None).unwrap();
            cal.push(occupancy_from_sidebands(&fa, &fs, g, g).unwrap().calibration_factor.value);
        }
        let mean = cal.iter().sum::<f64>() / cal.len() as f64;
        assert!((mean / (n / (n + 1.0)) - 1.0).abs() < 0.01, "{mean}");
    }

    fn sampled(v1: f64, v2: f64, v12: f64, n: usize, sigma: f64) -> (Vec<f64>, Vec<Measured>) {
        let q = QuadratureMoments::new(v1, v2, v12);
        let phases: Vec<f64> = (0..n).map(|k| PI * k as f64 / n as f64).collect();
        let v = phases.iter().map(|&p| Measured::new(crate::analytic::variance_of_phase(&q, p), sigma)).collect();
        (phases, v)
    }

    #[test]
    fn tomography_examples() {
        let (p, v) = sampled(1.05, 1.05, 0.0, 12, 0.05);
        let t = tomography_sweep(&p, &v).unwrap();
        assert_relative_eq!(t.v1, 1.05, max_relative = 1e-12);
        assert_relative_eq!(t.v2, 1.05, max_relative = 1e-12);
        assert!(t.v12.abs() < 1e-12);

        let (p, v) = sampled(0.6368, 1.7739, 0.0, 12, 0.05);
        let t = tomography_sweep(&p, &v).unwrap();
        assert!((t.v1 - 0.6368).abs() < 1e-9 && (t.v2 - 1.7739).abs() < 1e-9 && t.v12.abs() < 1e-9);
        assert!(t.min_angle.abs() < 1e-9 || (t.min_angle - PI).abs() < 1e-9);

        let (p, v) = sampled(0.8, 1.4, 0.2, 9, 0.05);
        let t = tomography_sweep(&p, &v).unwrap();
        assert_relative_eq!(t.variance_at(t.min_angle), t.moments().principal_variances().0, max_relative = 1e-9);
    }

    #[test]
    fn tomography_with_noise_over_seeds() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let normal = Normal::new(0.0, 0.05).unwrap();
        let (mut n_within, trials) = (0, 200);
        for seed in 0..trials {
            let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(seed);
            let (p, v) = sampled(0.6368, 1.7739, 0.0, 12, 0.05);
            let v: Vec<Measured> = v.iter().map(|m| Measured::new(m.value + normal.sample(&mut rng), m.err)).collect();
            let t = tomography_sweep(&p, &v).unwrap();
            assert!(t.v1 + 3.0 * t.v1_err < 1.0, "v1 not resolved below vacuum");
            if (t.v1 - 0.6368).abs() < 3.0 * t.v1_err && (t.v2 - 1.7739).abs() < 3.0 * t.v2_err {
                n_within += 1;
            }
        }
        // two 3σ checks per trial: ≥ 99% expected, allow a few
        assert!(n_within >= trials - 4, "{n_within}");
    }

    #[test]
    fn degenerate_designs() {
        let v = vec![Measured::new(1.0, 0.1); 6];
        let p = vec![0.0, PI / 2.0, 0.0, PI / 2.0, PI, 3.0 * PI / 2.0];
        assert!(matches!(tomography_sweep(&p, &v), Err(Error::DegenerateDesign(_))));
        let p4 = vec![0.0, 0.5, 1.0, 1.5];
        assert!(tomography_sweep(&p4, &v[..4]).is_err());
    }

    #[test]
    fn squeezing_metric_examples() {
        let exact = |v1: f64, v2: f64| TomogramFit {
            v1,
            v2,
            v12: 0.0,
            v1_err: 0.0,
            v2_err: 0.0,
            v12_err: 0.0,
            covariance: [[0.0; 3]; 3],
            min_angle: 0.0,
            chi2_dof: 0.0,
        };
        let m = squeezing_metrics(&exact(1.0, 1.0));
        assert_eq!(m.squeezing_db, 0.0);
        assert_eq!(m.purity, 1.0);
        assert!(m.heisenberg_ok);
        let m = squeezing_metrics(&exact(0.78, 2.0));
        assert!((m.squeezing_db - 1.08).abs() < 0.005);
        let m = squeezing_metrics(&exact(0.6368, 1.7739));
        assert!((m.squeezing_db - 1.96).abs() < 0.005);
        assert!((m.purity - 0.941).abs() < 0.0005);
        assert!(!squeezing_metrics(&exact(0.5, 1.5)).heisenberg_ok);
    }

    #[test]
    fn evasion_examples() {
        let r = backaction_evasion_report(Measured::new(1.16, 0.22), Some(Measured::exact(1.16)), 2.44).unwrap();
        assert!(r.lower_bound);
        assert!((r.evasion_db - 13.46).abs() < 0.01, "{}", r.evasion_db);
        let r = backaction_evasion_report(Measured::new(1.0 + 4.88, 0.01), Some(Measured::exact(1.0)), 2.44).unwrap();
        assert!(r.evasion_db.abs() < 1e-12 && !r.lower_bound);
        assert!(backaction_evasion_report(Measured::new(1.0, 0.1), Some(Measured::exact(1.0)), 0.0).is_err());
        assert!(backaction_evasion_report(Measured::new(1.0, 0.1), None, 1.0).is_err());
    }

    #[test]
    fn linear_fit_recovers_line() {
        let x = [0.1, 0.5, 1.0, 2.44];
        let y: Vec<Measured> = x.iter().map(|x| Measured::new(0.079 + x, 0.01)).collect();
        let f = weighted_linear_fit(&x, &y).unwrap();
        assert_relative_eq!(f.slope.value, 1.0, max_relative = 1e-12);
        assert_relative_eq!(f.intercept.value, 0.079, max_relative = 1e-12);
        assert!(weighted_linear_fit(&[1.0, 1.0, 1.0], &y[..3]).is_err());
    }

    #[test]
    fn schema_names_every_fit_field() {
        let schema = fit_report_schema();
        let fit = serde_json::to_value(fake_fit(1.0, 0.1)).unwrap();
        for key in fit.as_object().unwrap().keys() {
            assert!(schema["LorentzianFit"].get(key).is_some(), "{key}");
        }
        let t = serde_json::to_value(tomography_sweep(&sampled(1.0, 1.0, 0.0, 6, 0.1).0, &sampled(1.0, 1.0, 0.0, 6, 0.1).1).unwrap()).unwrap();
        for key in t.as_object().unwrap().keys() {
            assert!(schema["TomogramFit"].get(key).is_some(), "{key}");
        }
    }
}
