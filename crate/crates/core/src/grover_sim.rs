// SPDX-License-Identifier: Apache-2.0

//! Binomial measurement statistics of the Grover-iterated state.
//!
//! After `n` Grover iterations the flag qubit reads `|0⟩` with probability
//! `cos²((2n+1)θ)`. Only these two-outcome statistics are simulated; there is
//! no state-vector model.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::estimator::Schedule;
use crate::{Error, Result};

/// Tolerance used when checking that an angle lies in `[0, π/2]`.
const ANGLE_SLACK: f64 = 1e-12;

/// The hidden angle the simulator knows and the estimator must recover.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueState {
    theta: f64,
}

impl TrueState {
    pub fn new(theta: f64) -> Result<Self> {
        check_theta(theta)?;
        Ok(Self {
            theta: theta.clamp(0.0, FRAC_PI_2),
        })
    }

    /// Builds the state with `sin θ = amplitude`.
    pub fn from_amplitude(amplitude: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&amplitude) {
            return Err(Error::Domain(format!(
                "amplitude {amplitude} outside [0, 1]"
            )));
        }
        Ok(Self {
            theta: amplitude.asin(),
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn amplitude(&self) -> f64 {
        self.theta.sin()
    }
}

pub(crate) fn check_theta(theta: f64) -> Result<()> {
    if theta.is_finite() && (-ANGLE_SLACK..=FRAC_PI_2 + ANGLE_SLACK).contains(&theta) {
        Ok(())
    } else {
        Err(Error::Domain(format!("theta {theta} outside [0, pi/2]")))
    }
}

/// Outcome counts of all shots taken at one Grover depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub depth: u64,
    pub shots: u64,
    pub zeros: u64,
}

impl ShotRecord {
    pub fn new(depth: u64, shots: u64, zeros: u64) -> Result<Self> {
        if shots == 0 {
            return Err(Error::Config(format!("depth {depth}: zero shots")));
        }
        if zeros > shots {
            return Err(Error::Shape(format!(
                "depth {depth}: {zeros} zeros out of {shots} shots"
            )));
        }
        Ok(Self {
            depth,
            shots,
            zeros,
        })
    }

    /// Empirical probability of reading `|0⟩`.
    pub fn p0_hat(&self) -> f64 {
        self.zeros as f64 / self.shots as f64
    }
}

/// Per-depth measurement outcomes, sorted by strictly increasing depth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementSet {
    records: Vec<ShotRecord>,
    seed: u64,
}

impl MeasurementSet {
    pub fn new(records: Vec<ShotRecord>, seed: u64) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Config("empty measurement set".into()));
        }
        if records.windows(2).any(|w| w[0].depth >= w[1].depth) {
            return Err(Error::Config(
                "measurement depths must be distinct and ascending".into(),
            ));
        }
        for r in &records {
            ShotRecord::new(r.depth, r.shots, r.zeros)?;
        }
        Ok(Self { records, seed })
    }

    pub fn records(&self) -> &[ShotRecord] {
        &self.records
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn depths(&self) -> Vec<u64> {
        self.records.iter().map(|r| r.depth).collect()
    }

    pub fn p0_hats(&self) -> Vec<f64> {
        self.records.iter().map(ShotRecord::p0_hat).collect()
    }
}

/// `cos²((2·depth+1)·θ)`.
pub fn exact_p0(theta: f64, depth: u64) -> Result<f64> {
    check_theta(theta)?;
    Ok(p0_unchecked(theta, depth))
}

pub(crate) fn p0_unchecked(theta: f64, depth: u64) -> f64 {
    let c = ((2 * depth + 1) as f64 * theta).cos();
    c * c
}

/// Draws the number of `|0⟩` outcomes among `shots` measurements at `depth`.
pub fn sample<R: Rng + ?Sized>(
    theta: f64,
    depth: u64,
    shots: u64,
    rng: &mut R,
) -> Result<ShotRecord> {
    let p = exact_p0(theta, depth)?.clamp(0.0, 1.0);
    if shots == 0 {
        return Err(Error::Config(format!("depth {depth}: zero shots")));
    }
    let zeros = Binomial::new(shots, p)
        .map_err(|e| Error::Domain(format!("binomial({shots}, {p}): {e}")))?
        .sample(rng);
    ShotRecord::new(depth, shots, zeros)
}

/// Measures every scheduled depth once, with a ChaCha stream seeded from `seed`.
pub fn sample_set(theta: f64, schedule: &Schedule, seed: u64) -> Result<MeasurementSet> {
    if schedule.depths().is_empty() {
        return Err(Error::Config("empty schedule".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = schedule
        .depths()
        .iter()
        .zip(schedule.shots())
        .map(|(&d, &s)| sample(theta, d, s, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    MeasurementSet::new(records, seed)
}
