//! Acceptance criteria, one test per criterion. Each prints a single
//! `PASS`/`FAIL criterion N: ...` line before asserting.
//!
//! Scenario-level criteria run the bundled configs once per test process and
//! read the written artifacts back, the same way a user would.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use qndsim::analytic::{backaction_occupancy, quadrature_variances, quadrature_variances_for, variance_of_phase, QuadratureMoments};
use qndsim::dynamics::{build_linear_model, driven_response, linspace, mechanical_marginal, steady_covariance};
use qndsim::expcli::{load_config, run, RunManifest, RunOptions};
use qndsim::inference::transparency_window;
use qndsim::oracle::{quad_variance, steady_state_squeezed, EffectiveDissipators, TAIL_TOL};
use qndsim::sysmodel::MechanicalMode;
use qndsim::{to_hz, CavityIndex, Drive, DriveSet, Sideband, SystemConfig};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde_json::Value;
use sha2::{Digest, Sha256};

// criterion 1
const FORMULA_RTOL: f64 = 0.01;
const FORMULA_MAX_TIME: Duration = Duration::from_secs(1);
const COOLING_RATIO: f64 = 529.0;
const SQUEEZE_COOLING_RATIO: f64 = 1643.0;
const BACKACTION_RATIOS: [f64; 12] =
    [0.1, 0.133698, 0.178753, 0.23899, 0.319525, 0.4272, 0.57116, 0.763633, 1.02096, 1.36501, 1.825, 2.44];
const SQUEEZE_RATIOS: [f64; 10] = [0.0, 0.01, 0.02, 0.04, 0.07, 0.1, 0.15, 0.2, 0.25, 0.3];
const MEASUREMENT_RATIO: f64 = 0.48;

// criterion 2
const ORACLE_CONFIGS: usize = 20;
const ORACLE_SEED: u64 = 0x5eed_0002;
const ORACLE_MAX_N_TH: f64 = 3.0;
const ORACLE_MAX_MINUS_RATIO: f64 = 300.0;
const ORACLE_MAX_PLUS_RATIO: f64 = 0.9;
const ORACLE_RTOL: f64 = 0.005;
const ORACLE_MAX_N: usize = 60;
const ORACLE_START_N: usize = 16;
const ORACLE_MAX_TIME: Duration = Duration::from_secs(30);

// criterion 3
const QND_V1_RTOL: f64 = 1e-6;
const QND_V2_RTOL: f64 = 0.01;
const TOP_BACKACTION: f64 = 2.44;

// criterion 4
const SLOPE: (f64, f64) = (1.00, 0.05);
const INTERCEPT: (f64, f64) = (0.079, 0.02);
const SWEEP_MAX_TIME: Duration = Duration::from_secs(120);

// criteria 5, 6, 7, 8
const SIGMAS: f64 = 3.0;
const V1_AT_007: f64 = 0.6368;
const V1_AT_007_ATOL: f64 = 5e-5;
const MAX_THERMAL_OCCUPANCY: f64 = 0.1;
const PURITY: (f64, f64) = (0.941, 0.001);
const EXACT_DET_ATOL: f64 = 1e-9;

// criterion 9
const FWHM_RTOL: f64 = 0.01;
const WINDOW_RATIOS: [f64; 3] = [0.0, 0.07, 0.3];
const WINDOW_POINTS: usize = 2001;
const WINDOW_LINEWIDTHS: f64 = 10.0;

// criterion 10: SHA-256 over the sorted (path, SHA-256 of contents) list of
// every artifact except the manifest, for both bundled configs at their
// configured seeds.
const GOLDEN_DIGEST: &str = "ac4e57146a32e40ab238de6ea663218e2795d3917886fe00267fa695f05d6b24";

/// Written straight to stdout so the line shows up without `--nocapture`.
fn report(n: u32, ok: bool, detail: String) {
    let line = format!("{} criterion {n}: {detail}\n", if ok { "PASS" } else { "FAIL" });
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

struct Run {
    dir: PathBuf,
    manifest: RunManifest,
}

fn run_config(file: &str, out: &Path) -> RunManifest {
    let cfg = load_config(&configs_dir().join(file)).expect("bundled config loads");
    run(&cfg, out, &RunOptions::default()).expect("run writes a manifest")
}

fn shared(cell: &'static OnceLock<Run>, file: &str, name: &str) -> &'static Run {
    cell.get_or_init(|| {
        let dir = scratch(name);
        let manifest = run_config(file, &dir);
        Run { dir, manifest }
    })
}

fn device_run() -> &'static Run {
    static CELL: OnceLock<Run> = OnceLock::new();
    shared(&CELL, "paper_device.json", "device")
}

fn squeezing_run() -> &'static Run {
    static CELL: OnceLock<Run> = OnceLock::new();
    shared(&CELL, "paper_squeezing.json", "squeezing")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

/// Columns of a numeric CSV table keyed by header.
fn read_table(path: &Path) -> BTreeMap<String, Vec<f64>> {
    let mut r = csv::Reader::from_path(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    let mut cols: BTreeMap<String, Vec<f64>> = header.iter().map(|h| (h.clone(), Vec::new())).collect();
    for rec in r.records() {
        for (h, v) in header.iter().zip(rec.unwrap().iter()) {
            cols.get_mut(h).unwrap().push(v.parse().unwrap());
        }
    }
    cols
}

fn scenario_ok(run: &Run, label: &str) -> bool {
    run.manifest.scenarios.iter().any(|s| s.label == label && s.ok)
}

fn measured(v: &Value) -> (f64, f64) {
    (v["value"].as_f64().unwrap(), v["err"].as_f64().unwrap())
}

fn cooling(sys: &SystemConfig, ratio: f64) -> DriveSet {
    DriveSet::new([Drive::new(CavityIndex::Control, Sideband::Lower, ratio * sys.mech.gamma_m)]).unwrap()
}

fn squeezing(sys: &SystemConfig, ratio: f64) -> DriveSet {
    let g = SQUEEZE_COOLING_RATIO * sys.mech.gamma_m;
    let ds = cooling(sys, SQUEEZE_COOLING_RATIO);
    if ratio > 0.0 {
        ds.with(Drive::new(CavityIndex::Control, Sideband::Upper, ratio * g)).unwrap()
    } else {
        ds
    }
}

/// Every resonant drive set behind the bundled backaction and squeezing runs.
fn bundled_drive_sets(sys: &SystemConfig) -> Vec<(String, DriveSet)> {
    let mut out = Vec::new();
    let base = cooling(sys, COOLING_RATIO);
    out.push(("cooling 529".to_string(), base.clone()));
    for r in BACKACTION_RATIOS {
        let rate = r * COOLING_RATIO * sys.mech.gamma_m;
        out.push((format!("cooling 529 + QND {r}"), base.clone().with_qnd_pair(CavityIndex::Measurement, rate, 0.0).unwrap()));
    }
    for r in SQUEEZE_RATIOS {
        let ds = squeezing(sys, r);
        out.push((format!("squeeze {r}"), ds.clone()));
        let rate = MEASUREMENT_RATIO * SQUEEZE_COOLING_RATIO * sys.mech.gamma_m;
        for phi in [0.0, FRAC_PI_2] {
            let with = ds.clone().with_qnd_pair(CavityIndex::Measurement, rate, phi).unwrap();
            out.push((format!("squeeze {r} + QND φ={phi:.3}"), with));
        }
    }
    out
}

fn lyapunov_moments(sys: &SystemConfig, ds: &DriveSet) -> QuadratureMoments {
    mechanical_marginal(&steady_covariance(&build_linear_model(sys, ds).unwrap()).unwrap())
}

#[test]
fn criterion_01_formula_cross_validation() {
    let sys = SystemConfig::paper_device();
    let mut worst = (0.0f64, String::new());
    let mut slowest = Duration::ZERO;
    for (name, ds) in bundled_drive_sets(&sys) {
        let t = Instant::now();
        let exact = lyapunov_moments(&sys, &ds);
        let closed = quadrature_variances_for(&sys, &ds).unwrap();
        slowest = slowest.max(t.elapsed());
        let err = (exact.v1 / closed.v1 - 1.0).abs().max((exact.v2 / closed.v2 - 1.0).abs());
        if err > worst.0 {
            worst = (err, name);
        }
    }
    let ok = worst.0 < FORMULA_RTOL && slowest < FORMULA_MAX_TIME;
    report(
        1,
        ok,
        format!(
            "max relative v1/v2 deviation {:.3e} ({}) < {FORMULA_RTOL}; slowest config {slowest:?} < {FORMULA_MAX_TIME:?}",
            worst.0, worst.1
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_02_oracle_validation() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(ORACLE_SEED);
    let t = Instant::now();
    let (mut worst, mut max_n, mut failures) = (0.0f64, 0usize, Vec::new());
    for i in 0..ORACLE_CONFIGS {
        let n_th = rng.random_range(0.0..=ORACLE_MAX_N_TH);
        let minus = rng.random_range(0.0..=ORACLE_MAX_MINUS_RATIO);
        let plus = rng.random_range(0.0..=ORACLE_MAX_PLUS_RATIO) * minus;
        let mech = MechanicalMode::new(1.0, 1.0, n_th).unwrap();
        let ds = DriveSet::new([
            Drive::new(CavityIndex::Control, Sideband::Lower, minus),
            Drive::new(CavityIndex::Control, Sideband::Upper, plus),
        ])
        .unwrap();
        let closed = quadrature_variances(&mech, &ds).unwrap();
        let d = EffectiveDissipators::from_mech_drives(&mech, &ds, [0.0, 0.0]).unwrap();
        match steady_state_squeezed(&d, ORACLE_START_N, ORACLE_MAX_N) {
            Ok(s) => {
                max_n = max_n.max(s.n_trunc());
                assert!(s.tail() < TAIL_TOL);
                for phi in [0.0, FRAC_PI_2, PI / 4.0] {
                    let e = (quad_variance(&s, phi) / variance_of_phase(&closed, phi) - 1.0).abs();
                    worst = worst.max(e);
                }
            }
            Err(e) => failures.push(format!("config {i} (n_th {n_th:.2}, Γ⁻ {minus:.1}, Γ⁺/Γ⁻ {:.3}): {e}", plus / minus)),
        }
    }
    let elapsed = t.elapsed();
    let ok = failures.is_empty() && worst < ORACLE_RTOL && max_n <= ORACLE_MAX_N && elapsed < ORACLE_MAX_TIME;
    report(
        2,
        ok,
        format!(
            "{ORACLE_CONFIGS} configs, max relative deviation {worst:.3e} < {ORACLE_RTOL}, tail < {TAIL_TOL:e}, \
             max N {max_n} <= {ORACLE_MAX_N}, {elapsed:?} < {ORACLE_MAX_TIME:?}, unconverged {}",
            failures.len()
        ),
    );
    assert!(ok, "{failures:?}");
}

#[test]
fn criterion_03_qnd_invariance() {
    let sys = SystemConfig::paper_device();
    let gm = sys.mech.gamma_m;
    let g2 = COOLING_RATIO * gm;
    let base = cooling(&sys, COOLING_RATIO);
    let a0 = quadrature_variances_for(&sys, &base).unwrap();
    let l0 = lyapunov_moments(&sys, &base);
    let (mut v1_dev, mut v2_dev) = (0.0f64, 0.0f64);
    let mut ratios: Vec<f64> = linspace(0.0, TOP_BACKACTION, 25);
    ratios.extend(BACKACTION_RATIOS);
    for r in ratios {
        let g1 = r * g2;
        let ds = base.clone().with_qnd_pair(CavityIndex::Measurement, g1, 0.0).unwrap();
        let a = quadrature_variances_for(&sys, &ds).unwrap();
        let l = lyapunov_moments(&sys, &ds);
        v1_dev = v1_dev.max((a.v1 / a0.v1 - 1.0).abs()).max((l.v1 / l0.v1 - 1.0).abs());
        let expected = 4.0 * g1 / (gm + g2);
        if g1 > 0.0 {
            let da = a.v2 - a0.v2;
            let dl = l.v2 - l0.v2;
            v2_dev = v2_dev.max((da / expected - 1.0).abs()).max((dl / expected - 1.0).abs());
        }
    }
    let n_ba = backaction_occupancy(TOP_BACKACTION * g2, g2).unwrap();
    let ok = v1_dev < QND_V1_RTOL && v2_dev < QND_V2_RTOL && (n_ba - TOP_BACKACTION).abs() < 1e-12;
    report(
        3,
        ok,
        format!("v1 relative change {v1_dev:.3e} < {QND_V1_RTOL:e}; v2 increase deviation {v2_dev:.3e} < {QND_V2_RTOL}; n_ba at top {n_ba}"),
    );
    assert!(ok);
}

#[test]
fn criterion_04_backaction_linearity() {
    let run = device_run();
    let rec = run.manifest.scenarios.iter().find(|s| s.label == "backaction_sweep").expect("sweep recorded");
    let summary = read_json(&run.dir.join("backaction_sweep/summary.json"));
    let line = &summary["n_tot_nonqnd_line"];
    let (slope, slope_err) = measured(&line["slope"]);
    let (icpt, icpt_err) = measured(&line["intercept"]);
    let points = read_table(&run.dir.join("backaction_sweep/backaction_sweep.csv"))["gamma_ratio"].len();
    let secs = Duration::from_secs_f64(rec.seconds);
    let ok = rec.ok
        && points == BACKACTION_RATIOS.len()
        && (slope - SLOPE.0).abs() <= SLOPE.1
        && (icpt - INTERCEPT.0).abs() <= INTERCEPT.1
        && secs < SWEEP_MAX_TIME;
    report(
        4,
        ok,
        format!(
            "{points}-point sweep: slope {slope:.4} ± {slope_err:.4} (target {} ± {}), intercept {icpt:.4} ± {icpt_err:.4} \
             (target {} ± {}), {secs:?} < {SWEEP_MAX_TIME:?}",
            SLOPE.0, SLOPE.1, INTERCEPT.0, INTERCEPT.1
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_05_sideband_asymmetry() {
    let run = device_run();
    let t = read_table(&run.dir.join("backaction_sweep/backaction_sweep.csv"));
    let mut worst: f64 = 0.0;
    for i in 0..t["gamma_ratio"].len() {
        let n = t["n_tot_theory"][i];
        let pull = (t["calibration_factor"][i] - n / (n + 1.0)).abs() / t["calibration_factor_err"][i];
        worst = worst.max(pull);
    }
    let ok = scenario_ok(run, "backaction_sweep") && !t["gamma_ratio"].is_empty() && worst <= SIGMAS;
    report(
        5,
        ok,
        format!(
            "anti-Stokes/Stokes area ratio vs n/(n+1) over {} points: max pull {worst:.2}σ <= {SIGMAS}σ",
            t["gamma_ratio"].len()
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_06_squeezing_sweep() {
    let run = squeezing_run();
    let t = read_table(&run.dir.join("squeeze_sweep/squeeze_sweep.csv"));
    let rows = t["squeeze_ratio"].len();
    let inside: Vec<usize> = (0..rows).filter(|&i| t["squeeze_ratio"][i] > 0.0 && t["squeeze_ratio"][i] < 0.3).collect();
    let sub_vacuum = inside.iter().all(|&i| t["v1_theory"][i] < 1.0);
    let at = (0..rows).find(|&i| (t["squeeze_ratio"][i] - 0.07).abs() < 1e-12).expect("sweep includes 0.07");
    let v1_theory = t["v1_theory"][at];
    // the squeezed quadrature is X₁, so v1 is also the minimum over phase
    let summary = read_json(&run.dir.join("tomography_squeezed/summary.json"));
    let theory_min = summary["theory"]["v_min"].as_f64().unwrap();
    let tomo_v1 = summary["tomogram"]["v1"].as_f64().unwrap();
    let tomo_err = summary["tomogram"]["v1_err"].as_f64().unwrap();
    let tomo_sig = (1.0 - tomo_v1) / tomo_err;
    let sweep_sig = (1.0 - t["v1"][at]) / t["v1_err"][at];
    let ok = scenario_ok(run, "squeeze_sweep")
        && scenario_ok(run, "tomography_squeezed")
        && inside.len() == 8
        && sub_vacuum
        && (v1_theory - V1_AT_007).abs() < V1_AT_007_ATOL
        && (theory_min - V1_AT_007).abs() < V1_AT_007_ATOL
        && tomo_sig >= SIGMAS
        && sweep_sig >= SIGMAS;
    report(
        6,
        ok,
        format!(
            "theory v1 < 1 at all {} sweep ratios in (0, 0.3); v1 at 0.07 = {v1_theory:.4} (target {V1_AT_007}); \
             tomography v1 = {tomo_v1:.4} ± {tomo_err:.4} is {tomo_sig:.1}σ below vacuum, sweep point {sweep_sig:.1}σ (need {SIGMAS}σ)",
            inside.len()
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_07_tomography_isotropy() {
    let run = squeezing_run();
    let s = read_json(&run.dir.join("tomography_thermal/summary.json"));
    let v12 = s["tomogram"]["v12"].as_f64().unwrap();
    let v12_err = s["tomogram"]["v12_err"].as_f64().unwrap();
    let (asym, asym_err) = measured(&s["v2_minus_v1"]);
    let (occ, occ_err) = measured(&s["occupancy"]);
    let ok = scenario_ok(run, "tomography_thermal")
        && v12.abs() <= SIGMAS * v12_err
        && asym.abs() <= SIGMAS * asym_err
        && occ < MAX_THERMAL_OCCUPANCY;
    report(
        7,
        ok,
        format!(
            "v12 = {v12:.4} ± {v12_err:.4}, v2 − v1 = {asym:.4} ± {asym_err:.4} (both within {SIGMAS}σ of 0); \
             occupancy {occ:.4} ± {occ_err:.4} < {MAX_THERMAL_OCCUPANCY}"
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_08_heisenberg_and_purity() {
    let sys = SystemConfig::paper_device();
    let mut checked = 0;
    let mut violations = Vec::new();
    // simulated states: closed form and Lyapunov for every bundled drive set
    for (name, ds) in bundled_drive_sets(&sys) {
        for (kind, q) in [("closed form", quadrature_variances_for(&sys, &ds).unwrap()), ("Lyapunov", lyapunov_moments(&sys, &ds))] {
            checked += 1;
            if q.determinant() < 1.0 - EXACT_DET_ATOL {
                violations.push(format!("{kind} {name}: det {}", q.determinant()));
            }
        }
    }
    // fitted states: both tomograms, and (v1, v2) from every squeeze-sweep point
    let run = squeezing_run();
    for label in ["tomography_squeezed", "tomography_thermal"] {
        let s = read_json(&run.dir.join(label).join("summary.json"));
        let (det, sigma) = measured(&s["metrics"]["determinant"]);
        checked += 1;
        if det < 1.0 - SIGMAS * sigma {
            violations.push(format!("{label}: det {det} ± {sigma}"));
        }
    }
    let t = read_table(&run.dir.join("squeeze_sweep/squeeze_sweep.csv"));
    for i in 0..t["squeeze_ratio"].len() {
        let (v1, v2) = (t["v1"][i], t["v2"][i]);
        let sigma = (v2 * t["v1_err"][i]).hypot(v1 * t["v2_err"][i]);
        checked += 1;
        if v1 * v2 < 1.0 - SIGMAS * sigma {
            violations.push(format!("squeeze point {}: v1·v2 {} ± {sigma}", t["squeeze_ratio"][i], v1 * v2));
        }
    }
    let purity = quadrature_variances_for(&sys, &squeezing(&sys, 0.07)).unwrap().purity();
    let ok = violations.is_empty() && (purity - PURITY.0).abs() <= PURITY.1 && scenario_ok(run, "squeeze_sweep");
    report(
        8,
        ok,
        format!(
            "{checked} states checked, {} below 1 − {SIGMAS}σ; purity at squeeze ratio 0.07 = {purity:.5} (target {} ± {})",
            violations.len(),
            PURITY.0,
            PURITY.1
        ),
    );
    assert!(ok, "{violations:?}");
}

#[test]
fn criterion_09_driven_response_calibration() {
    let sys = SystemConfig::paper_device();
    let gm = sys.mech.gamma_m;
    let mut details = Vec::new();
    let mut ok = true;
    for r in WINDOW_RATIOS {
        let ds = squeezing(&sys, r);
        let expected = gm + (1.0 - r) * SQUEEZE_COOLING_RATIO * gm;
        let half = WINDOW_LINEWIDTHS * expected;
        let grid = linspace(-half, half, WINDOW_POINTS);
        let s11 = driven_response(&sys, &ds, CavityIndex::Control, &grid).unwrap();
        let bare = driven_response(&sys, &DriveSet::empty(), CavityIndex::Control, &grid).unwrap();
        let fit = transparency_window(&grid, &s11, &bare).unwrap();
        let err = fit.fwhm / expected - 1.0;
        ok &= err.abs() < FWHM_RTOL;
        details.push(format!("ratio {r}: {:.1} Hz vs {:.1} Hz ({:+.2}%)", to_hz(fit.fwhm), to_hz(expected), 100.0 * err));
    }
    report(9, ok, format!("transparency FWHM within {}%: {}", 100.0 * FWHM_RTOL, details.join("; ")));
    assert!(ok);
}

/// Relative path → SHA-256 of every file under `root`, manifest excluded.
fn tree_digests(root: &Path) -> BTreeMap<String, String> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                if rel != qndsim::expcli::scenario::MANIFEST_FILE {
                    out.insert(rel, hex::encode(Sha256::digest(std::fs::read(&p).unwrap())));
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

#[test]
fn criterion_10_determinism() {
    let mut combined = Sha256::new();
    let mut identical = true;
    let mut files = 0;
    for (file, run) in [("paper_device.json", device_run()), ("paper_squeezing.json", squeezing_run())] {
        let again = scratch(&format!("again_{file}"));
        run_config(file, &again);
        let (a, b) = (tree_digests(&run.dir), tree_digests(&again));
        identical &= a == b;
        files += a.len();
        for (path, digest) in &a {
            combined.update(format!("{file}/{path} {digest}\n"));
        }
    }
    let digest = hex::encode(combined.finalize());
    let golden = digest == GOLDEN_DIGEST;
    let ok = identical && golden;
    report(
        10,
        ok,
        format!("{files} artifacts byte-identical across two runs: {identical}; combined digest {digest} matches golden: {golden}"),
    );
    assert!(ok);
}
