// SPDX-License-Identifier: Apache-2.0

//! End-to-end amplitude estimation: shot schedules, query accounting and
//! the measurement → sign search → amplitude chain.

use serde::{Deserialize, Serialize};

use crate::arrays::{nested_positions, PhysicalArray};
use crate::grover_sim::{check_theta, sample_set, MeasurementSet};
use crate::signal::SignVector;
use crate::signsearch::{search, Pipeline, SearchConfig};
use crate::{Error, Result};

/// Per-depth shot allocation. Depth 0 is always first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    depths: Vec<u64>,
    shots: Vec<u64>,
    k: f64,
    n_max: u64,
}

impl Schedule {
    /// Wraps explicit depth and shot lists (e.g. published tables).
    pub fn new(depths: Vec<u64>, shots: Vec<u64>, k: f64) -> Result<Self> {
        validate_depths(&depths)?;
        if shots.len() != depths.len() {
            return Err(Error::Shape(format!(
                "{} depths but {} shot counts",
                depths.len(),
                shots.len()
            )));
        }
        if shots.contains(&0) {
            return Err(Error::Config("shot counts must be positive".into()));
        }
        let n_max = *depths.last().unwrap();
        Ok(Self {
            depths,
            shots,
            k,
            n_max,
        })
    }

    pub fn depths(&self) -> &[u64] {
        &self.depths
    }

    pub fn shots(&self) -> &[u64] {
        &self.shots
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn n_max(&self) -> u64 {
        self.n_max
    }

    pub fn total_shots(&self) -> u64 {
        self.shots.iter().sum()
    }

    /// Sequential applications of `U`: a depth-`n` shot costs `2n + 1`.
    pub fn u_applications(&self) -> u64 {
        self.depths
            .iter()
            .zip(&self.shots)
            .map(|(&n, &s)| s * (2 * n + 1))
            .sum()
    }
}

fn validate_depths(depths: &[u64]) -> Result<()> {
    if depths.first() != Some(&0) {
        return Err(Error::Config("depth list must start at 0".into()));
    }
    if depths.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(
            "depths must be distinct and ascending".into(),
        ));
    }
    Ok(())
}

/// `⌈x⌉`, ignoring floating-point dust just above an integer.
fn ceil_count(x: f64) -> u64 {
    (x - 1e-9 * x.abs().max(1.0)).ceil().max(1.0) as u64
}

/// Rank-based shot schedule.
///
/// With `m` nonzero depths, the `i`-th smallest one gets `⌈K·(m − i + 1)⌉`
/// shots and depth 0 gets `2·⌈K·(m + 1)⌉`. On a power-of-two ladder the rank
/// term equals `log₂(n_max/n) + 1`.
pub fn shot_schedule(depths: &[u64], k: f64) -> Result<Schedule> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::Config(format!(
            "shot scale K = {k} must be positive"
        )));
    }
    validate_depths(depths)?;
    let m = depths.len() - 1;
    let mut shots = Vec::with_capacity(depths.len());
    shots.push(2 * ceil_count(k * (m + 1) as f64));
    shots.extend((1..=m).map(|i| ceil_count(k * (m - i + 1) as f64)));
    Schedule::new(depths.to_vec(), shots, k)
}

/// Grover applications plus one query per depth-0 shot.
pub fn total_queries(schedule: &Schedule) -> u64 {
    schedule
        .depths
        .iter()
        .zip(&schedule.shots)
        .map(|(&n, &s)| if n == 0 { s } else { s * n })
        .sum()
}

fn queries_of(measurements: &MeasurementSet) -> u64 {
    measurements
        .records()
        .iter()
        .map(|r| {
            if r.depth == 0 {
                r.shots
            } else {
                r.shots * r.depth
            }
        })
        .sum()
}

/// Physical array, co-array order and how much of the positive ULA to use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub physical: PhysicalArray,
    pub q: u32,
    /// Use only the first this-many ULA lags (all when `None`).
    pub ula_limit: Option<usize>,
}

impl ArrayConfig {
    pub fn nested(q: u32, levels: &[u32]) -> Result<Self> {
        Ok(Self {
            physical: nested_positions(q, levels)?,
            q,
            ula_limit: None,
        })
    }

    /// Caps the ULA at the guaranteed positive half-length `∏N_k` of a
    /// level-built array; explicit arrays are left unchanged.
    pub fn with_theorem_ula(mut self) -> Self {
        if let Some(levels) = self.physical.levels() {
            self.ula_limit = Some(levels.iter().map(|&n| n as usize).product());
        }
        self
    }

    pub fn explicit(depths: &[u64], q: u32) -> Result<Self> {
        Ok(Self {
            physical: PhysicalArray::from_positions(depths, q)?,
            q,
            ula_limit: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub theta_hat: f64,
    pub a_hat: f64,
    pub signs: SignVector,
    pub nll: f64,
    pub total_queries: u64,
    pub max_depth: u64,
    /// `σ₂/σ₃` of the winning covariance; reported, never acted on.
    pub separation: f64,
    /// Positive ULA length fed to ESPRIT.
    pub ula_len: usize,
    pub evaluations: usize,
}

/// A reusable estimator for one array configuration. Building it computes
/// the co-array once; `estimate` is then cheap to call for many trials.
#[derive(Debug)]
pub struct Estimator {
    pipeline: Pipeline,
    search: SearchConfig,
}

impl Estimator {
    pub fn new(array: &ArrayConfig, search: SearchConfig) -> Result<Self> {
        Ok(Self {
            pipeline: Pipeline::new(&array.physical, array.q, array.ula_limit, &search)?,
            search,
        })
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    pub fn depths(&self) -> &[u64] {
        self.pipeline.depths()
    }

    pub fn estimate(&self, measurements: &MeasurementSet) -> Result<EstimateResult> {
        let outcome = search(&self.pipeline, measurements, &self.search)?;
        let best = outcome.best;
        Ok(EstimateResult {
            a_hat: best.theta_hat.sin().clamp(0.0, 1.0),
            theta_hat: best.theta_hat,
            signs: best.signs,
            nll: best.nll,
            total_queries: queries_of(measurements),
            max_depth: measurements.records().last().map_or(0, |r| r.depth),
            separation: best.separation,
            ula_len: self.pipeline.ula_len(),
            evaluations: outcome.evaluations,
        })
    }
}

pub fn estimate(
    measurements: &MeasurementSet,
    array: &ArrayConfig,
    search: &SearchConfig,
) -> Result<EstimateResult> {
    Estimator::new(array, *search)?.estimate(measurements)
}

/// Simulates and estimates one run on a nested array with a rank-based schedule.
pub fn run_csae(
    theta_true: f64,
    q: u32,
    levels: &[u32],
    k: f64,
    seed: u64,
) -> Result<EstimateResult> {
    run_csae_with(
        theta_true,
        &ArrayConfig::nested(q, levels)?,
        k,
        &SearchConfig::default(),
        seed,
    )
}

pub fn run_csae_with(
    theta_true: f64,
    array: &ArrayConfig,
    k: f64,
    search: &SearchConfig,
    seed: u64,
) -> Result<EstimateResult> {
    check_theta(theta_true)?;
    let schedule = shot_schedule(array.physical.positions(), k)?;
    let estimator = Estimator::new(array, *search)?;
    let measurements = sample_set(theta_true, &schedule, seed)?;
    estimator.estimate(&measurements)
}
