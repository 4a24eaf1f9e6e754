//! Synthetic stand-in for a pH neutralization experiment.
//!
//! A base stream of flow `u_t` enters a mixing tank holding a strong acid.
//! The tank's net acid concentration `xi` follows first-order mixing
//! dynamics, and the measured pH is the static titration curve of `xi`:
//! `[H+] - Kw / [H+] = xi`, `pH = -log10 [H+]`. The flow is a random
//! staircase so the output visits both flat ends and the steep middle of the
//! curve.

use fimgate_core::datagen::TimeSeriesPair;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PhSurrogate {
    pub n_samples: usize,
    pub acid_concentration: f64,
    pub base_concentration: f64,
    /// Fraction of the tank replaced per step.
    pub mixing: f64,
    /// Flow bounds, as a fraction of the acid stream.
    pub flow_low: f64,
    pub flow_high: f64,
    /// Expected number of steps between flow changes.
    pub hold: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for PhSurrogate {
    fn default() -> Self {
        Self {
            n_samples: 4000,
            acid_concentration: 3e-3,
            base_concentration: 3e-3,
            mixing: 0.1,
            flow_low: 0.5,
            flow_high: 1.5,
            hold: 15,
            noise_std: 0.01,
            seed: 0,
        }
    }
}

const KW: f64 = 1e-14;

pub fn titration_ph(xi: f64) -> f64 {
    let h = 0.5 * (xi + (xi * xi + 4.0 * KW).sqrt());
    -h.log10()
}

impl PhSurrogate {
    pub fn run(&self) -> Result<TimeSeriesPair> {
        if self.n_samples == 0 || !(self.flow_low < self.flow_high) || self.hold == 0 {
            return Err(Error::Config("invalid pH surrogate settings".into()));
        }
        if !(self.mixing > 0.0 && self.mixing <= 1.0) || !(self.noise_std >= 0.0) {
            return Err(Error::Config("invalid pH surrogate settings".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let noise = Normal::new(0.0, self.noise_std).map_err(|e| Error::Config(e.to_string()))?;
        let switch_p = 1.0 / self.hold as f64;
        let mut flow = rng.random_range(self.flow_low..self.flow_high);
        let mut xi = self.acid_concentration - self.base_concentration * flow;
        let mut u = Vec::with_capacity(self.n_samples);
        let mut y = Vec::with_capacity(self.n_samples);
        for _ in 0..self.n_samples {
            if rng.random::<f64>() < switch_p {
                flow = rng.random_range(self.flow_low..self.flow_high);
            }
            let target = self.acid_concentration - self.base_concentration * flow;
            xi += self.mixing * (target - xi);
            u.push(flow);
            y.push(titration_ph(xi) + noise.sample(&mut rng));
        }
        Ok(TimeSeriesPair::new(u, y)?)
    }
}
