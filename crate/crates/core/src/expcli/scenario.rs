//! Scenario orchestration. Each scenario writes into `<out>/<label>/`; the
//! run manifest goes to `<out>/manifest.json` once everything has finished.
//! A failing sweep point is recorded and the sweep moves on.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use crate::analytic::{backaction_occupancy, occupancy_from_variances, quadrature_variances_for};
use crate::csvio::{write_noisy, write_spectrum};
use crate::dynamics::{build_linear_model, driven_response, linspace, Spectrum};
use crate::error::{Error, Result};
use crate::inference::{
    backaction_evasion_report, fit_lorentzians_shared_width, fit_report_schema, guess_peak, injected_backaction, squeezing_metrics,
    tomography_sweep, transparency_window, weighted_linear_fit, Measured, PeakGuess,
};
use crate::synthesis::{NoiseModel, NoisySpectrum};
use crate::sysmodel::{hz, to_hz, CavityIndex, CheckStatus, Drive, DriveSet, Sideband};

use super::config::{LoadedConfig, ScenarioSpec};
use super::output::{derive_seed, write_atomic, write_json, write_table};
use super::pipeline::{measure_cooling_line, measure_quadrature, measure_sidebands, simulate_spectrum};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Replaces the configured noise seed.
    pub seed: Option<u64>,
    /// Runs only scenarios whose label or name matches.
    pub scenario: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PointRecord {
    pub index: usize,
    pub label: String,
    pub ok: bool,
    pub error: Option<String>,
    pub exit_code: i32,
    pub artifacts: Vec<String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioRecord {
    pub name: String,
    pub label: String,
    pub ok: bool,
    pub error: Option<String>,
    pub exit_code: i32,
    pub artifacts: Vec<String>,
    pub points: Vec<PointRecord>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub status: String,
    pub value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub toolkit: String,
    pub version: String,
    pub config_digest: String,
    pub drive_digest: String,
    pub seed: u64,
    pub ok: bool,
    pub validation: Vec<CheckRecord>,
    pub scenarios: Vec<ScenarioRecord>,
    pub seconds: f64,
}

impl RunManifest {
    /// Exit code of the first failure, 0 when everything succeeded.
    pub fn exit_code(&self) -> i32 {
        self.scenarios
            .iter()
            .flat_map(|s| std::iter::once(s.exit_code).chain(s.points.iter().map(|p| p.exit_code)))
            .find(|&c| c != 0)
            .unwrap_or(0)
    }
}

struct Ctx<'a> {
    cfg: &'a LoadedConfig,
    root: &'a Path,
    label: String,
    seed: u64,
    record: ScenarioRecord,
}

impl<'a> Ctx<'a> {
    fn rel(&self, name: &str) -> String {
        format!("{}/{}", self.label, name)
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn noise(&self, point: usize, role: &str) -> NoiseModel {
        NoiseModel { seed: derive_seed(self.seed, &self.label, point, role), ..self.cfg.noise }
    }

    fn save_noisy(&self, name: &str, ns: &NoisySpectrum) -> Result<String> {
        let rel = self.rel(name);
        let mut buf = Vec::new();
        write_noisy(&mut buf, ns)?;
        write_atomic(&self.path(&rel), &buf)?;
        Ok(rel)
    }

    fn save_spectrum(&self, name: &str, s: &Spectrum) -> Result<String> {
        let rel = self.rel(name);
        let mut buf = Vec::new();
        write_spectrum(&mut buf, s)?;
        write_atomic(&self.path(&rel), &buf)?;
        Ok(rel)
    }

    fn table(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
        let rel = self.rel(name);
        write_table(&self.path(&rel), header, rows)?;
        self.record.artifacts.push(rel);
        Ok(())
    }

    fn json<T: Serialize + ?Sized>(&mut self, name: &str, v: &T) -> Result<()> {
        let rel = self.rel(name);
        write_json(&self.path(&rel), v)?;
        self.record.artifacts.push(rel);
        Ok(())
    }

    /// Runs one sweep point; on failure the error is recorded with the point
    /// identified and `None` is returned.
    fn point<T>(&mut self, index: usize, label: String, f: impl FnOnce(&Self) -> Result<(T, Vec<String>)>) -> Option<T> {
        let t0 = Instant::now();
        let (out, rec) = match f(self) {
            Ok((v, artifacts)) => (
                Some(v),
                PointRecord { index, label, ok: true, error: None, exit_code: 0, artifacts, seconds: 0.0 },
            ),
            Err(e) => {
                let msg = format!("{} point {index} ({label}): {e}", self.label);
                (None, PointRecord { index, label, ok: false, error: Some(msg), exit_code: e.exit_code(), artifacts: vec![], seconds: 0.0 })
            }
        };
        self.record.points.push(PointRecord { seconds: t0.elapsed().as_secs_f64(), ..rec });
        out
    }
}

fn control_lower(ds: &DriveSet) -> Result<Drive> {
    ds.get(CavityIndex::Control, Sideband::Lower)
        .copied()
        .ok_or_else(|| Error::Config("scenario needs a control-cavity lower-sideband drive".into()))
}

/// Base drives for the measurement scenarios with the control cavity set to
/// the configured cooling drive plus an upper drive at `ratio`·Γ₂⁻.
fn squeeze_drives(cfg: &LoadedConfig, ratio: f64) -> Result<DriveSet> {
    let lower = control_lower(&cfg.drives)?;
    let ds = DriveSet::new([lower])?;
    if ratio > 0.0 {
        // equal phases put the squeezed quadrature at Φ = 0
        ds.with(Drive::new(CavityIndex::Control, Sideband::Upper, ratio * lower.rate).with_phase(lower.phase))
    } else {
        Ok(ds)
    }
}

fn moments_json(q: &crate::analytic::QuadratureMoments) -> Value {
    let (vmin, vmax) = q.principal_variances();
    json!({
        "v1": q.v1, "v2": q.v2, "v12": q.v12,
        "v_min": vmin, "v_max": vmax,
        "occupancy": occupancy_from_variances(q),
        "determinant": q.determinant(),
        "purity": q.purity(),
    })
}

fn backaction_sweep(ctx: &mut Ctx, ratios: &[f64]) -> Result<()> {
    let cfg = ctx.cfg;
    let sys = &cfg.system;
    let base = cfg.drives.clone().without_cavity(CavityIndex::Measurement);
    let g2 = control_lower(&base)?.rate;
    let delta = hz(cfg.numerics.nonqnd_detuning_hz);

    let reference = ctx.point(0, "reference".into(), |c| {
        let m = measure_cooling_line(sys, &base, &cfg.numerics, &c.noise(0, "reference"))?;
        let a = c.save_noisy("reference_control.csv", &m.noisy)?;
        Ok((m, vec![a]))
    });

    let mut rows = Vec::new();
    let mut fits = Vec::new();
    let mut nonqnd_pts = Vec::new();
    let mut qnd_pts = Vec::new();
    for (i, &ratio) in ratios.iter().enumerate() {
        let idx = i + 1;
        let rate = ratio * g2;
        let res = ctx.point(idx, format!("gamma_ratio={ratio}"), |c| {
            let qnd = measure_quadrature(sys, &base, rate, 0.0, &cfg.numerics, &c.noise(idx, "qnd"))?;
            let non = measure_sidebands(sys, &base, rate, delta, &cfg.numerics, &c.noise(idx, "nonqnd"))?;
            let a = c.save_noisy(&format!("p{idx:02}_qnd.csv"), &qnd.noisy)?;
            let b = c.save_noisy(&format!("p{idx:02}_nonqnd.csv"), &non.noisy)?;
            Ok(((qnd, non), vec![a, b]))
        });
        let Some((qnd, non)) = res else { continue };
        let n_ba = backaction_occupancy(rate, g2)?;
        let n_qnd = Measured::new((qnd.variance.value - 1.0) / 2.0, qnd.variance.err / 2.0);
        let n_non = non.occupancy.n_combined;
        let injected = reference.as_ref().map(|r| injected_backaction(n_non, r.occupancy));
        let evasion = reference.as_ref().and_then(|r| {
            let v_ref = Measured::new(2.0 * r.occupancy.value + 1.0, 2.0 * r.occupancy.err);
            backaction_evasion_report(qnd.variance, Some(v_ref), n_ba).ok()
        });
        let cal = non.occupancy.calibration_factor;
        let inj = injected.unwrap_or(Measured::new(f64::NAN, f64::NAN));
        rows.push(vec![
            ratio,
            n_qnd.value,
            n_qnd.err,
            n_non.value,
            n_non.err,
            qnd.variance.value,
            qnd.variance.err,
            cal.value,
            cal.err,
            inj.value,
            inj.err,
            non.theory,
            qnd.theory,
            n_ba,
        ]);
        qnd_pts.push((ratio, n_qnd));
        nonqnd_pts.push((ratio, n_non));
        fits.push(json!({ "index": idx, "gamma_ratio": ratio, "qnd": qnd, "nonqnd": non, "evasion": evasion }));
    }
    ctx.table(
        "backaction_sweep.csv",
        &[
            "gamma_ratio",
            "n_tot_qnd",
            "n_tot_qnd_err",
            "n_tot_nonqnd",
            "n_tot_nonqnd_err",
            "v1_qnd",
            "v1_qnd_err",
            "calibration_factor",
            "calibration_factor_err",
            "n_ba_injected",
            "n_ba_injected_err",
            "n_tot_theory",
            "v1_theory",
            "n_ba",
        ],
        &rows,
    )?;
    let line = |pts: &[(f64, Measured)]| {
        let (x, y): (Vec<f64>, Vec<Measured>) = pts.iter().copied().unzip();
        weighted_linear_fit(&x, &y).ok()
    };
    let top = fits.last().map(|f| f["evasion"].clone()).unwrap_or(Value::Null);
    let summary = json!({
        "cooling_rate_hz": to_hz(g2),
        "nonqnd_detuning_hz": cfg.numerics.nonqnd_detuning_hz,
        "reference": reference,
        "n_tot_nonqnd_line": line(&nonqnd_pts),
        "n_tot_qnd_line": line(&qnd_pts),
        "evasion_at_top": top,
    });
    ctx.json("fits.json", &fits)?;
    ctx.json("summary.json", &summary)
}

fn squeeze_sweep(ctx: &mut Ctx, ratios: &[f64], measurement_ratio: f64) -> Result<()> {
    let cfg = ctx.cfg;
    let sys = &cfg.system;
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for (i, &ratio) in ratios.iter().enumerate() {
        let res = ctx.point(i, format!("squeeze_ratio={ratio}"), |c| {
            let base = squeeze_drives(cfg, ratio)?;
            let rate = measurement_ratio * control_lower(&base)?.rate;
            let x1 = measure_quadrature(sys, &base, rate, 0.0, &cfg.numerics, &c.noise(i, "x1"))?;
            let x2 = measure_quadrature(sys, &base, rate, std::f64::consts::FRAC_PI_2, &cfg.numerics, &c.noise(i, "x2"))?;
            let unmeasured = quadrature_variances_for(sys, &base)?;
            let a = c.save_noisy(&format!("p{i:02}_x1.csv"), &x1.noisy)?;
            let b = c.save_noisy(&format!("p{i:02}_x2.csv"), &x2.noisy)?;
            Ok(((x1, x2, unmeasured), vec![a, b]))
        });
        let Some((x1, x2, unmeasured)) = res else { continue };
        rows.push(vec![ratio, x1.variance.value, x1.variance.err, x2.variance.value, x2.variance.err, x1.theory, x2.theory]);
        fits.push(json!({
            "index": i, "squeeze_ratio": ratio, "x1": x1, "x2": x2,
            "theory": moments_json(&unmeasured),
        }));
    }
    ctx.table("squeeze_sweep.csv", &["squeeze_ratio", "v1", "v1_err", "v2", "v2_err", "v1_theory", "v2_theory"], &rows)?;
    ctx.json("fits.json", &fits)
}

fn tomography(ctx: &mut Ctx, squeeze_ratio: f64, measurement_ratio: f64, phases: &[f64]) -> Result<()> {
    let cfg = ctx.cfg;
    let sys = &cfg.system;
    let base = squeeze_drives(cfg, squeeze_ratio)?;
    let rate = measurement_ratio * control_lower(&base)?.rate;
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    let mut used = Vec::new();
    let mut measured = Vec::new();
    for (i, &phi) in phases.iter().enumerate() {
        let res = ctx.point(i, format!("phi={phi}"), |c| {
            let m = measure_quadrature(sys, &base, rate, phi, &cfg.numerics, &c.noise(i, "phi"))?;
            let a = c.save_noisy(&format!("p{i:02}.csv"), &m.noisy)?;
            Ok((m, vec![a]))
        });
        let Some(m) = res else { continue };
        rows.push(vec![phi, m.variance.value, m.variance.err, m.theory]);
        used.push(phi);
        measured.push(m.variance);
        fits.push(json!({ "index": i, "measurement": m }));
    }
    ctx.table("tomography.csv", &["phi", "v_measured", "v_err", "v_theory"], &rows)?;
    ctx.json("fits.json", &fits)?;

    let theory = quadrature_variances_for(sys, &base)?;
    let mut summary = json!({
        "squeeze_ratio": squeeze_ratio,
        "measurement_ratio": measurement_ratio,
        "theory": moments_json(&theory),
    });
    match tomography_sweep(&used, &measured) {
        Ok(t) => {
            let c = t.covariance;
            let occ = Measured::new((t.v1 + t.v2 - 2.0) / 4.0, (c[0][0] + c[1][1] + 2.0 * c[0][1]).max(0.0).sqrt() / 4.0);
            let asym = Measured::new(t.v2 - t.v1, (c[0][0] + c[1][1] - 2.0 * c[0][1]).max(0.0).sqrt());
            summary["tomogram"] = serde_json::to_value(t)?;
            summary["metrics"] = serde_json::to_value(squeezing_metrics(&t))?;
            summary["occupancy"] = serde_json::to_value(occ)?;
            summary["v2_minus_v1"] = serde_json::to_value(asym)?;
            ctx.json("summary.json", &summary)
        }
        Err(e) => {
            summary["error"] = Value::String(e.to_string());
            ctx.json("summary.json", &summary)?;
            Err(e)
        }
    }
}

fn driven(ctx: &mut Ctx, probe: CavityIndex, half_span_hz: Option<f64>) -> Result<()> {
    let cfg = ctx.cfg;
    let sys = &cfg.system;
    let ds = &cfg.drives;
    let res = ctx.point(0, format!("probe_cavity={}", probe.number()), |_| {
        let model = build_linear_model(sys, ds)?;
        let damping = model.effective_mechanical_damping();
        let half = half_span_hz.map(hz).unwrap_or(cfg.numerics.grid_linewidths * damping);
        let grid = linspace(-half, half, cfg.numerics.response_points);
        let s11 = driven_response(sys, ds, probe, &grid)?;
        let bare = driven_response(sys, &DriveSet::empty(), probe, &grid)?;
        let window = transparency_window(&grid, &s11, &bare)?;
        Ok(((grid, s11, bare, window, damping), vec![]))
    });
    let Some((grid, s11, bare, window, damping)) = res else { return Ok(()) };
    let rows: Vec<Vec<f64>> = (0..grid.len())
        .map(|i| vec![to_hz(grid[i]), s11[i].re, s11[i].im, bare[i].re, bare[i].im])
        .collect();
    ctx.table("driven_response.csv", &["offset_hz", "re_s11", "im_s11", "re_s11_bare", "im_s11_bare"], &rows)?;
    let summary = json!({
        "probe_cavity": probe.number(),
        "window": window,
        "fwhm_hz": to_hz(window.fwhm),
        "fwhm_err_hz": to_hz(window.fwhm_err),
        "expected_fwhm_hz": to_hz(damping),
        "relative_error": window.fwhm / damping - 1.0,
    });
    ctx.json("summary.json", &summary)
}

fn single_spectrum(ctx: &mut Ctx, cavity: CavityIndex) -> Result<()> {
    let cfg = ctx.cfg;
    let ds = &cfg.drives;
    let res = ctx.point(0, format!("cavity={}", cavity.number()), |c| {
        let (model, spectrum, noisy) = simulate_spectrum(&cfg.system, ds, cavity, &cfg.numerics, &c.noise(0, "spectrum"))?;
        let offsets = model.sideband_offsets(cavity, ds);
        let fit = if offsets.is_empty() {
            None
        } else {
            let width = model.effective_mechanical_damping();
            let area = guess_peak(&noisy).0.area / offsets.len() as f64;
            let guesses: Vec<PeakGuess> = offsets.iter().map(|&o| PeakGuess { center: o, fwhm: width, area }).collect();
            Some(fit_lorentzians_shared_width(&noisy, &guesses)?)
        };
        let a = c.save_spectrum("spectrum.csv", &spectrum)?;
        let b = c.save_noisy("noisy.csv", &noisy)?;
        Ok(((fit, spectrum.warnings), vec![a, b]))
    });
    let Some((fit, warnings)) = res else { return Ok(()) };
    ctx.json("fits.json", &json!({ "cavity": cavity.number(), "fit": fit, "warnings": warnings }))
}

fn run_one(ctx: &mut Ctx, spec: &ScenarioSpec) -> Result<()> {
    ctx.json("fit_schema.json", &fit_report_schema())?;
    match spec {
        ScenarioSpec::BackactionSweep { measurement_ratios, .. } => backaction_sweep(ctx, measurement_ratios),
        ScenarioSpec::SqueezeSweep { squeeze_ratios, measurement_ratio, .. } => {
            squeeze_sweep(ctx, squeeze_ratios, *measurement_ratio)
        }
        ScenarioSpec::Tomography { squeeze_ratio, measurement_ratio, phases_rad, .. } => {
            tomography(ctx, *squeeze_ratio, *measurement_ratio, phases_rad)
        }
        ScenarioSpec::DrivenResponse { probe_cavity, half_span_hz, .. } => {
            driven(ctx, CavityIndex::from_number(*probe_cavity)?, *half_span_hz)
        }
        ScenarioSpec::SingleSpectrum { cavity, .. } => single_spectrum(ctx, CavityIndex::from_number(*cavity)?),
    }
}

/// Runs the selected scenarios and writes the manifest. Scenario and point
/// failures are recorded in the manifest rather than returned; errors are
/// returned only when nothing can be written or the selection is empty.
pub fn run(cfg: &LoadedConfig, out: &Path, opts: &RunOptions) -> Result<RunManifest> {
    let t0 = Instant::now();
    let seed = opts.seed.unwrap_or(cfg.noise.seed);
    let selected: Vec<&ScenarioSpec> = cfg
        .scenarios
        .iter()
        .filter(|s| opts.scenario.as_deref().is_none_or(|n| s.label() == n || s.name() == n))
        .collect();
    if selected.is_empty() {
        return Err(Error::Config(match &opts.scenario {
            Some(n) => format!("no scenario named or labelled `{n}`"),
            None => "config lists no scenarios".into(),
        }));
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let mut records = Vec::new();
    for spec in selected {
        let st = Instant::now();
        let mut ctx = Ctx {
            cfg,
            root: out,
            label: spec.label().to_string(),
            seed,
            record: ScenarioRecord {
                name: spec.name().into(),
                label: spec.label().into(),
                ok: true,
                error: None,
                exit_code: 0,
                artifacts: vec![],
                points: vec![],
                seconds: 0.0,
            },
        };
        if let Err(e) = run_one(&mut ctx, spec) {
            ctx.record.error = Some(format!("{}: {e}", spec.label()));
            ctx.record.exit_code = e.exit_code();
        }
        let mut rec = ctx.record;
        rec.ok = rec.error.is_none() && rec.points.iter().all(|p| p.ok);
        if rec.exit_code == 0 {
            rec.exit_code = rec.points.iter().map(|p| p.exit_code).find(|&c| c != 0).unwrap_or(0);
        }
        rec.seconds = st.elapsed().as_secs_f64();
        records.push(rec);
    }

    let validation = cfg
        .report
        .checks
        .iter()
        .map(|c| CheckRecord {
            name: c.name.clone(),
            status: match c.status {
                CheckStatus::Pass => "pass",
                CheckStatus::Warn => "warn",
                CheckStatus::Fail => "fail",
            }
            .into(),
            value: c.value,
            threshold: c.threshold,
        })
        .collect();
    let manifest = RunManifest {
        toolkit: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_digest: cfg.digest.clone(),
        drive_digest: cfg.drives.digest(),
        seed,
        ok: records.iter().all(|r| r.ok),
        validation,
        scenarios: records,
        seconds: t0.elapsed().as_secs_f64(),
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}
