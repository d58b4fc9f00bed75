//! Forward measurement model: an additive flat noise floor and averaged
//! periodogram statistics.
//!
//! Each bin i is drawn independently as (flux + floor)·χ²(2M)/(2M) from a
//! Xoshiro256++ stream seeded with `seed + i·0x9E3779B97F4A7C15` (wrapping),
//! so the output for a given seed is fixed across platforms and does not
//! depend on generation order.

use rand::SeedableRng;
use rand_distr::{ChiSquared, Distribution};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::dynamics::Spectrum;
use crate::error::{Error, Result};
use crate::sysmodel::CavityIndex;

pub const DEFAULT_FLOOR: f64 = 20.0;
pub const DEFAULT_AVERAGES: f64 = 1e4;

const BIN_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub floor: f64,
    /// Number of averaged periodograms. Real-valued so that very large M can
    /// be used to approach the noiseless limit.
    pub averages: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(floor: f64, averages: f64, seed: u64) -> Result<Self> {
        if !(floor >= 0.0 && floor.is_finite()) {
            return Err(Error::domain(format!("noise floor must be finite and ≥ 0, got {floor}")));
        }
        if !(averages >= 1.0 && averages.is_finite()) {
            return Err(Error::domain(format!("averages must be ≥ 1, got {averages}")));
        }
        Ok(Self { floor, averages, seed })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { floor: DEFAULT_FLOOR, averages: DEFAULT_AVERAGES, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisySpectrum {
    /// Offsets from the cavity resonance, rad/s.
    pub freq: Vec<f64>,
    /// Noiseless flux the samples were drawn around (floor excluded).
    pub flux: Vec<f64>,
    /// Measured flux including the floor.
    pub flux_measured: Vec<f64>,
    pub std_err: Vec<f64>,
    pub noise: NoiseModel,
    pub cavity: CavityIndex,
    pub drive_digest: String,
}

impl NoisySpectrum {
    pub fn len(&self) -> usize {
        self.freq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freq.is_empty()
    }
}

fn bin_rng(seed: u64, bin: usize) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed.wrapping_add((bin as u64).wrapping_mul(BIN_STRIDE)))
}

pub fn synthesize(s: &Spectrum, nm: &NoiseModel) -> NoisySpectrum {
    let dof = 2.0 * nm.averages;
    let chi = ChiSquared::new(dof).expect("averages validated ≥ 1");
    let root_m = nm.averages.sqrt();
    let mut flux_measured = Vec::with_capacity(s.flux.len());
    let mut std_err = Vec::with_capacity(s.flux.len());
    for (i, &f) in s.flux.iter().enumerate() {
        let level = f.max(0.0) + nm.floor;
        let draw: f64 = chi.sample(&mut bin_rng(nm.seed, i));
        flux_measured.push(level * draw / dof);
        std_err.push(level / root_m);
    }
    NoisySpectrum {
        freq: s.freq.clone(),
        flux: s.flux.clone(),
        flux_measured,
        std_err,
        noise: *nm,
        cavity: s.cavity,
        drive_digest: s.drive_digest.clone(),
    }
}
