//! Brute-force validator: Lindblad master equation for the mechanical mode
//! alone, with each driven cavity adiabatically eliminated into a single
//! engineered collapse operator c = c₋·b + c₊·b†.
//!
//! The Liouvillian is assembled exactly in a truncated Fock space. Every
//! dissipator linear in b, b† preserves the parity of m − n in ρ_mn, and only
//! couples elements whose m + n differ by at most 2, so the even sector is
//! banded when ordered by m + n. The steady state is found there by a banded
//! LU solve with the ρ₀₀ equation replaced by ρ₀₀ = 1.
//!
//! Strongly squeezed steady states spread over hundreds of Fock levels. The
//! master equation can instead be written in a Bogoliubov frame
//! b = cosh r·b' − e^{2iθ}·sinh r·b'†, where collapse operators stay linear
//! and the state is close to thermal, so a few tens of levels suffice.

use std::collections::BTreeMap;

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};
use crate::sysmodel::{CavityIndex, DriveSet, MechanicalMode, Sideband, SystemConfig};

pub type C64 = Complex<f64>;

/// Population allowed in the top Fock level of a converged state.
pub const TAIL_TOL: f64 = 1e-6;
pub const MIN_TRUNCATION: usize = 4;
/// Pivots below this fraction of the largest matrix entry count as zero.
const PIVOT_RTOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Collapse {
    /// Coefficient of b.
    pub c_minus: C64,
    /// Coefficient of b†.
    pub c_plus: C64,
}

impl Collapse {
    pub fn new(c_minus: C64, c_plus: C64) -> Self {
        Self { c_minus, c_plus }
    }

    /// √Γ⁻·e^{iθ⁻}·b + √Γ⁺·e^{iθ⁺}·b†
    pub fn engineered(gamma_minus: f64, theta_minus: f64, gamma_plus: f64, theta_plus: f64) -> Result<Self> {
        if !(gamma_minus >= 0.0 && gamma_plus >= 0.0) {
            return Err(Error::domain("engineered rates must be non-negative"));
        }
        Ok(Self {
            c_minus: C64::from_polar(gamma_minus.sqrt(), theta_minus),
            c_plus: C64::from_polar(gamma_plus.sqrt(), theta_plus),
        })
    }

    /// Same operator with b ↔ b† exchanged and coefficients conjugated (c†).
    pub fn adjoint(&self) -> Self {
        Self { c_minus: self.c_plus.conj(), c_plus: self.c_minus.conj() }
    }

    fn scaled(&self, k: f64) -> Self {
        Self { c_minus: self.c_minus * k, c_plus: self.c_plus * k }
    }

    fn is_zero(&self) -> bool {
        self.c_minus.norm_sqr() + self.c_plus.norm_sqr() == 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveDissipators {
    pub gamma_m: f64,
    pub n_th: f64,
    pub engineered: Vec<Collapse>,
}

impl EffectiveDissipators {
    pub fn thermal(gamma_m: f64, n_th: f64) -> Result<Self> {
        if !(gamma_m >= 0.0 && n_th >= 0.0) {
            return Err(Error::domain("thermal rate and occupancy must be non-negative"));
        }
        Ok(Self { gamma_m, n_th, engineered: Vec::new() })
    }

    pub fn with(mut self, c: Collapse) -> Self {
        self.engineered.push(c);
        self
    }

    /// One engineered operator per driven cavity. A cavity with thermal input
    /// n_cav contributes √(n_cav+1)·c and √n_cav·c†.
    pub fn from_drives(cfg: &SystemConfig, ds: &DriveSet) -> Result<Self> {
        Self::from_mech_drives(&cfg.mech, ds, [cfg.cavities[0].n_cav, cfg.cavities[1].n_cav])
    }

    pub fn from_mech_drives(mech: &MechanicalMode, ds: &DriveSet, n_cav: [f64; 2]) -> Result<Self> {
        if !ds.is_resonant() {
            return Err(Error::domain("the effective-bath oracle needs resonant drives"));
        }
        let mut d = Self::thermal(mech.gamma_m, mech.n_th)?;
        for idx in CavityIndex::ALL {
            let phase = |sb| ds.get(idx, sb).map_or(0.0, |dr| dr.phase);
            let c = Collapse::engineered(
                ds.rate(idx, Sideband::Lower),
                phase(Sideband::Lower),
                ds.rate(idx, Sideband::Upper),
                phase(Sideband::Upper),
            )?;
            if c.is_zero() {
                continue;
            }
            let n = n_cav[idx.slot()];
            if n > 0.0 {
                d.engineered.push(c.scaled((n + 1.0).sqrt()));
                d.engineered.push(c.adjoint().scaled(n.sqrt()));
            } else {
                d.engineered.push(c);
            }
        }
        Ok(d)
    }

    /// All collapse operators including the thermal pair.
    pub fn collapse_operators(&self) -> Vec<Collapse> {
        let zero = C64::new(0.0, 0.0);
        let mut ops = vec![
            Collapse::new(C64::new((self.gamma_m * (self.n_th + 1.0)).sqrt(), 0.0), zero),
            Collapse::new(zero, C64::new((self.gamma_m * self.n_th).sqrt(), 0.0)),
        ];
        ops.extend(self.engineered.iter().copied());
        ops.retain(|c| !c.is_zero());
        ops
    }

    /// Net amplitude damping Γ_m + Σ(|c₋|² − |c₊|²).
    pub fn net_damping(&self) -> f64 {
        self.collapse_operators().iter().map(|c| c.c_minus.norm_sqr() - c.c_plus.norm_sqr()).sum()
    }
}

/// Sparse N²×N² superoperator acting on vec(ρ) with index m·N + n for ρ_mn.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    pub n_trunc: usize,
    /// Frame whose Fock basis the matrix is written in.
    pub frame: SqueezedFrame,
    entries: BTreeMap<(usize, usize), C64>,
}

type SparseOp = Vec<(usize, usize, C64)>;

fn lowering(n: usize) -> SparseOp {
    (1..n).map(|k| (k - 1, k, C64::new((k as f64).sqrt(), 0.0))).collect()
}

fn dagger(op: &SparseOp) -> SparseOp {
    op.iter().map(|&(i, j, v)| (j, i, v.conj())).collect()
}

fn matmul(a: &SparseOp, b: &SparseOp) -> SparseOp {
    let mut out: BTreeMap<(usize, usize), C64> = BTreeMap::new();
    for &(i, k, va) in a {
        for &(k2, j, vb) in b {
            if k == k2 {
                *out.entry((i, j)).or_default() += va * vb;
            }
        }
    }
    out.into_iter().filter(|(_, v)| v.norm_sqr() > 0.0).map(|((i, j), v)| (i, j, v)).collect()
}

fn identity(n: usize) -> SparseOp {
    (0..n).map(|k| (k, k, C64::new(1.0, 0.0))).collect()
}

impl Liouvillian {
    pub fn dim(&self) -> usize {
        self.n_trunc * self.n_trunc
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        self.entries.iter().map(|(&(r, c), &v)| (r, c, v))
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        for (r, c, v) in self.entries() {
            m[(r, c)] = v;
        }
        m
    }

    /// L[ρ] for a density matrix in the truncated space.
    pub fn apply(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let n = self.n_trunc;
        let mut out = DMatrix::zeros(n, n);
        for (r, c, v) in self.entries() {
            out[(r / n, r % n)] += v * rho[(c / n, c % n)];
        }
        out
    }

    /// Largest |Σ_k L[(k,k), j]| over columns, relative to the largest entry.
    pub fn trace_defect(&self) -> f64 {
        let n = self.n_trunc;
        let mut col_sums: BTreeMap<usize, C64> = BTreeMap::new();
        let mut scale = 0.0f64;
        for (r, c, v) in self.entries() {
            scale = scale.max(v.norm());
            if r / n == r % n {
                *col_sums.entry(c).or_default() += v;
            }
        }
        col_sums.values().map(|s| s.norm()).fold(0.0, f64::max) / scale.max(f64::MIN_POSITIVE)
    }

    fn add_sandwich(&mut self, a: &SparseOp, b: &SparseOp, scale: C64) {
        // vec(A ρ B)[(i,l)] = Σ A_ij ρ_jk B_kl
        let n = self.n_trunc;
        for &(i, j, va) in a {
            for &(k, l, vb) in b {
                *self.entries.entry((i * n + l, j * n + k)).or_default() += scale * va * vb;
            }
        }
    }
}

pub fn build_liouvillian(d: &EffectiveDissipators, n_trunc: usize) -> Result<Liouvillian> {
    build_liouvillian_in_frame(d, SqueezedFrame::IDENTITY, n_trunc)
}

/// Liouvillian on the Fock space of the frame mode b'.
pub fn build_liouvillian_in_frame(d: &EffectiveDissipators, frame: SqueezedFrame, n_trunc: usize) -> Result<Liouvillian> {
    if n_trunc < MIN_TRUNCATION {
        return Err(Error::domain(format!(
            "truncation N = {n_trunc} is below the minimum of {MIN_TRUNCATION}"
        )));
    }
    let b = lowering(n_trunc);
    let bd = dagger(&b);
    let id = identity(n_trunc);
    let mut l = Liouvillian { n_trunc, frame, entries: BTreeMap::new() };
    let half = C64::new(-0.5, 0.0);
    let one = C64::new(1.0, 0.0);
    for c in d.collapse_operators().into_iter().map(|c| frame.transform(c)) {
        let mut op: SparseOp = Vec::new();
        op.extend(b.iter().map(|&(i, j, v)| (i, j, v * c.c_minus)));
        op.extend(bd.iter().map(|&(i, j, v)| (i, j, v * c.c_plus)));
        let op_d = dagger(&op);
        let cdc = matmul(&op_d, &op);
        l.add_sandwich(&op, &op_d, one);
        l.add_sandwich(&cdc, &id, half);
        l.add_sandwich(&id, &cdc, half);
    }
    l.entries.retain(|_, v| v.norm_sqr() > 0.0);
    Ok(l)
}

/// Density matrix in a truncated Fock space of the frame mode b'.
#[derive(Debug, Clone)]
pub struct TruncatedState {
    pub rho: DMatrix<C64>,
    pub frame: SqueezedFrame,
}

impl TruncatedState {
    pub fn n_trunc(&self) -> usize {
        self.rho.nrows()
    }

    pub fn vacuum(n: usize) -> Self {
        let mut rho = DMatrix::zeros(n, n);
        rho[(0, 0)] = C64::new(1.0, 0.0);
        Self { rho, frame: SqueezedFrame::IDENTITY }
    }

    pub fn trace(&self) -> C64 {
        self.rho.trace()
    }

    pub fn population(&self, k: usize) -> f64 {
        self.rho[(k, k)].re
    }

    pub fn tail(&self) -> f64 {
        self.population(self.n_trunc() - 1)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (&self.rho - self.rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.rho + self.rho.adjoint()).scale(0.5);
        h.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Trace, Hermiticity and positivity invariants.
    pub fn check(&self) -> Result<()> {
        let tr = self.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > 1e-10 {
            return Err(Error::Numerical(format!("state trace {tr} differs from 1")));
        }
        if self.hermiticity_defect() > 1e-10 {
            return Err(Error::Numerical("state is not Hermitian".into()));
        }
        let lam = self.min_eigenvalue();
        if lam < -1e-10 {
            return Err(Error::Numerical(format!("state has negative eigenvalue {lam:.3e}")));
        }
        Ok(())
    }

    fn expect_b(&self) -> C64 {
        (1..self.n_trunc()).map(|k| self.rho[(k, k - 1)] * (k as f64).sqrt()).sum()
    }

    fn expect_bb(&self) -> C64 {
        (2..self.n_trunc()).map(|k| self.rho[(k, k - 2)] * ((k * (k - 1)) as f64).sqrt()).sum()
    }
}

/// ⟨X_φ²⟩ − ⟨X_φ⟩² with X_φ = b·e^{−iφ} + b†·e^{iφ}.
pub fn quad_variance(s: &TruncatedState, phi: f64) -> f64 {
    let m = s.lab_moments();
    let rot = C64::from_polar(1.0, -phi);
    let mean = 2.0 * (m.b * rot).re;
    2.0 * (m.bb * rot * rot).re + 2.0 * m.n + 1.0 - mean * mean
}

/// ⟨b†b⟩ of the physical mode.
pub fn number_occupancy(s: &TruncatedState) -> f64 {
    s.lab_moments().n
}

/// Bogoliubov frame b = cosh r·b' − e^{2iθ}·sinh r·b'†. In it
/// X_θ = e^{−r}·X'_θ, so a state squeezed along X_θ by e^{−2r} looks
/// isotropic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqueezedFrame {
    pub r: f64,
    pub theta: f64,
}

impl SqueezedFrame {
    pub const IDENTITY: Self = Self { r: 0.0, theta: 0.0 };

    pub fn new(r: f64, theta: f64) -> Self {
        Self { r, theta }
    }

    /// Frame in which a state with covariance (v1, v2, v12) is isotropic.
    pub fn from_covariance(v1: f64, v2: f64, v12: f64) -> Self {
        let mean = 0.5 * (v1 + v2);
        let half = (0.25 * (v1 - v2).powi(2) + v12 * v12).sqrt();
        let (lo, hi) = (mean - half, mean + half);
        if !(lo > 0.0) || !hi.is_finite() {
            return Self::IDENTITY;
        }
        // direction of the largest variance, then rotate to the smallest
        let theta = 0.5 * (2.0 * v12).atan2(v1 - v2) + std::f64::consts::FRAC_PI_2;
        Self { r: 0.25 * (hi / lo).ln(), theta }
    }

    /// (u, v) with b = u·b' + v·b'†.
    fn coefficients(&self) -> (C64, C64) {
        (C64::new(self.r.cosh(), 0.0), -C64::from_polar(self.r.sinh(), 2.0 * self.theta))
    }

    /// The same operator expressed through b', b'†.
    pub fn transform(&self, c: Collapse) -> Collapse {
        let (u, v) = self.coefficients();
        Collapse::new(c.c_minus * u + c.c_plus * v.conj(), c.c_minus * v + c.c_plus * u.conj())
    }
}

struct Moments {
    b: C64,
    bb: C64,
    n: f64,
}

impl TruncatedState {
    /// ⟨b⟩, ⟨b²⟩ and ⟨b†b⟩ of the physical mode.
    fn lab_moments(&self) -> Moments {
        let (b1, bb1) = (self.expect_b(), self.expect_bb());
        let n1: f64 = (0..self.n_trunc()).map(|k| k as f64 * self.population(k)).sum();
        let (u, v) = self.frame.coefficients();
        Moments {
            b: u * b1 + v * b1.conj(),
            bb: u * u * bb1 + u * v * (2.0 * n1 + 1.0) + v * v * bb1.conj(),
            n: (u.norm_sqr() * n1 + v.norm_sqr() * (n1 + 1.0)) + 2.0 * (u.conj() * v * bb1.conj()).re,
        }
    }

    /// (v1, v2, v12) of the physical mode.
    pub fn covariance(&self) -> (f64, f64, f64) {
        let v1 = quad_variance(self, 0.0);
        let v2 = quad_variance(self, std::f64::consts::FRAC_PI_2);
        let v12 = 0.5 * (quad_variance(self, std::f64::consts::FRAC_PI_4) * 2.0 - v1 - v2);
        (v1, v2, v12)
    }
}

/// Steady state of L. Only the even-parity sector is solved; the odd sector
/// (which carries ⟨b⟩) is zero for a unique steady state.
pub fn steady_state(l: &Liouvillian) -> Result<TruncatedState> {
    let state = TruncatedState { rho: solve_even_sector(l)?, frame: l.frame };
    let tail = state.tail();
    if tail > TAIL_TOL {
        return Err(Error::Truncation { n: l.n_trunc, tail });
    }
    state.check()?;
    Ok(state)
}

/// Grow N from `n_start` by factors of 1.5 until the tail is below
/// [`TAIL_TOL`], giving up past `n_max`.
pub fn steady_state_adaptive(d: &EffectiveDissipators, n_start: usize, n_max: usize) -> Result<TruncatedState> {
    let mut n = n_start.max(MIN_TRUNCATION);
    loop {
        match steady_state(&build_liouvillian(d, n)?) {
            Err(Error::Truncation { .. }) if n < n_max => n = grow(n, n_max),
            other => return other,
        }
    }
}

fn grow(n: usize, n_max: usize) -> usize {
    ((n as f64 * 1.5).ceil() as usize).min(n_max)
}

/// Largest number of frame updates tried at one truncation.
const FRAME_ITERATIONS: usize = 30;

/// Like [`steady_state_adaptive`], but solved in a squeezed frame found
/// self-consistently: each solve's covariance picks the next frame until the
/// frame stops moving. The returned state carries its frame, and its tail is
/// measured in that frame's Fock basis.
pub fn steady_state_squeezed(d: &EffectiveDissipators, n_start: usize, n_max: usize) -> Result<TruncatedState> {
    let mut n = n_start.max(MIN_TRUNCATION);
    let mut frame = SqueezedFrame::IDENTITY;
    loop {
        let mut last = None;
        for _ in 0..FRAME_ITERATIONS {
            let l = build_liouvillian_in_frame(d, frame, n)?;
            let state = TruncatedState { rho: solve_even_sector(&l)?, frame };
            let (v1, v2, v12) = state.covariance();
            let next = SqueezedFrame::from_covariance(v1, v2, v12);
            let settled = (next.r - frame.r).abs() < 1e-6
                && (C64::from_polar(1.0, 2.0 * (next.theta - frame.theta)) - 1.0).norm() * next.r < 1e-6;
            frame = next;
            last = Some(state);
            if settled {
                break;
            }
        }
        let state = last.expect("at least one frame iteration");
        let tail = state.tail();
        if tail <= TAIL_TOL {
            state.check()?;
            return Ok(state);
        }
        if n >= n_max {
            return Err(Error::Truncation { n, tail });
        }
        n = grow(n, n_max);
    }
}

struct SectorIndex {
    to_sector: Vec<Option<usize>>,
    from_sector: Vec<(usize, usize)>,
}

impl SectorIndex {
    fn even(n: usize) -> Self {
        let mut to_sector = vec![None; n * n];
        let mut from_sector = Vec::new();
        for s in (0..=2 * (n - 1)).step_by(2) {
            let lo = s.saturating_sub(n - 1);
            for m in lo..=s.min(n - 1) {
                to_sector[m * n + (s - m)] = Some(from_sector.len());
                from_sector.push((m, s - m));
            }
        }
        Self { to_sector, from_sector }
    }
}

fn solve_even_sector(l: &Liouvillian) -> Result<DMatrix<C64>> {
    let n = l.n_trunc;
    let idx = SectorIndex::even(n);
    let dim = idx.from_sector.len();
    let mut triplets = Vec::new();
    let mut scale = 0.0f64;
    for (r, c, v) in l.entries() {
        if let (Some(i), Some(j)) = (idx.to_sector[r], idx.to_sector[c]) {
            scale = scale.max(v.norm());
            if i != 0 {
                triplets.push((i, j, v));
            }
        }
    }
    // row 0 is the ρ₀₀ equation; replace it by ρ₀₀ = 1
    triplets.push((0, 0, C64::new(scale.max(1.0), 0.0)));
    let mut band = BandMatrix::from_triplets(dim, &triplets);
    let mut rhs = vec![C64::new(0.0, 0.0); dim];
    rhs[0] = C64::new(scale.max(1.0), 0.0);
    let tiny = band.factor(PIVOT_RTOL * scale.max(1.0));
    if tiny > 0 {
        return Err(Error::Multiplicity(tiny + 1));
    }
    band.solve(&mut rhs);

    let mut rho = DMatrix::zeros(n, n);
    for (k, &(m, nn)) in idx.from_sector.iter().enumerate() {
        rho[(m, nn)] = rhs[k];
    }
    let tr = rho.trace();
    if !(tr.norm() > 0.0) || !tr.re.is_finite() {
        return Err(Error::Numerical("steady state has zero trace".into()));
    }
    let rho = rho.map(|z| z / tr);
    // symmetrize away rounding
    Ok((&rho + rho.adjoint()).scale(0.5))
}

/// Complex banded matrix with room for fill-in from partial pivoting.
struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    /// Row i holds columns i − kl ..= i + kl + ku.
    data: Vec<C64>,
    width: usize,
    piv: Vec<usize>,
}

impl BandMatrix {
    fn from_triplets(n: usize, t: &[(usize, usize, C64)]) -> Self {
        let (mut kl, mut ku) = (0, 0);
        for &(i, j, _) in t {
            if i > j {
                kl = kl.max(i - j);
            } else {
                ku = ku.max(j - i);
            }
        }
        let width = 2 * kl + ku + 1;
        let mut m = Self { n, kl, ku, data: vec![C64::new(0.0, 0.0); n * width], width, piv: vec![0; n] };
        for &(i, j, v) in t {
            *m.at(i, j) += v;
        }
        m
    }

    fn at(&mut self, i: usize, j: usize) -> &mut C64 {
        let off = j + self.kl - i;
        &mut self.data[i * self.width + off]
    }

    fn get(&self, i: usize, j: usize) -> C64 {
        if j + self.kl < i || j > i + self.kl + self.ku {
            return C64::new(0.0, 0.0);
        }
        self.data[i * self.width + j + self.kl - i]
    }

    /// In-place LU with partial pivoting. Returns how many pivots fell below `tol`.
    fn factor(&mut self, tol: f64) -> usize {
        let n = self.n;
        let mut tiny = 0;
        for k in 0..n {
            let last_row = (k + self.kl).min(n - 1);
            let mut p = k;
            let mut best = self.get(k, k).norm();
            for i in k + 1..=last_row {
                let v = self.get(i, k).norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            self.piv[k] = p;
            let last_col = (k + self.kl + self.ku).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let a = self.get(k, j);
                    let b = self.get(p, j);
                    *self.at(k, j) = b;
                    *self.at(p, j) = a;
                }
            }
            if best <= tol {
                tiny += 1;
                *self.at(k, k) = C64::new(tol.max(f64::MIN_POSITIVE), 0.0);
            }
            let pivot = self.get(k, k);
            for i in k + 1..=last_row {
                let f = self.get(i, k) / pivot;
                if f.norm_sqr() == 0.0 {
                    continue;
                }
                *self.at(i, k) = f;
                for j in k + 1..=last_col {
                    let u = self.get(k, j);
                    if u.norm_sqr() != 0.0 {
                        *self.at(i, j) -= f * u;
                    }
                }
            }
        }
        tiny
    }

    fn solve(&self, b: &mut [C64]) {
        let n = self.n;
        for k in 0..n {
            b.swap(k, self.piv[k]);
            let last_row = (k + self.kl).min(n - 1);
            for i in k + 1..=last_row {
                let f = self.get(i, k);
                b[i] -= f * b[k];
            }
        }
        for k in (0..n).rev() {
            let last_col = (k + self.kl + self.ku).min(n - 1);
            let mut s = b[k];
            for j in k + 1..=last_col {
                s -= self.get(k, j) * b[j];
            }
            b[k] = s / self.get(k, k);
        }
    }
}
