// SPDX-License-Identifier: Apache-2.0

//! Monte Carlo benchmarking, percentile errors, weighted constant-factor
//! fits and greedy multi-QPU scheduling.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::estimator::{shot_schedule, total_queries, ArrayConfig, Estimator, Schedule};
use crate::grover_sim::{sample_set, TrueState};
use crate::signsearch::SearchConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub amplitude: f64,
    pub a_hat: f64,
    pub error: f64,
    #[serde(rename = "queries")]
    pub total_queries: u64,
    pub max_depth: u64,
    pub seed: u64,
}

/// How trial amplitudes are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AmplitudeSpec {
    Fixed(f64),
    Uniform { low: f64, high: f64 },
}

impl AmplitudeSpec {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            AmplitudeSpec::Fixed(a) => (0.0..=1.0).contains(&a),
            AmplitudeSpec::Uniform { low, high } => 0.0 <= low && low < high && high <= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid amplitude range {self:?}")))
        }
    }

    fn draw(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            AmplitudeSpec::Fixed(a) => a,
            AmplitudeSpec::Uniform { low, high } => rng.random_range(low..high),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MonteCarloConfig {
    pub amplitude: AmplitudeSpec,
    pub trials: usize,
    pub array: ArrayConfig,
    pub schedule: Schedule,
    pub search: SearchConfig,
    pub base_seed: u64,
    /// Worker threads; `None` uses every available core.
    pub jobs: Option<usize>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of trial `i`, independent of how trials are spread over threads.
pub fn trial_seed(base_seed: u64, index: u64) -> u64 {
    splitmix64(base_seed ^ splitmix64(index))
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs independent seeded trials; output order follows the trial index.
pub fn monte_carlo(cfg: &MonteCarloConfig) -> Result<Vec<TrialRecord>> {
    if cfg.trials < 1 {
        return Err(Error::Config("at least one trial is required".into()));
    }
    cfg.amplitude.validate()?;
    if cfg.schedule.depths() != cfg.array.physical.positions() {
        return Err(Error::Shape("schedule depths differ from the array".into()));
    }
    let estimator = Estimator::new(&cfg.array, cfg.search)?;
    let queries = total_queries(&cfg.schedule);
    let run = |i: usize| -> Result<TrialRecord> {
        let seed = trial_seed(cfg.base_seed, i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amplitude = cfg.amplitude.draw(&mut rng);
        let state = TrueState::from_amplitude(amplitude)?;
        let measurements = sample_set(state.theta(), &cfg.schedule, rng.random())?;
        let est = estimator.estimate(&measurements)?;
        Ok(TrialRecord {
            amplitude,
            a_hat: est.a_hat,
            error: (amplitude - est.a_hat).abs(),
            total_queries: queries,
            max_depth: cfg.schedule.n_max(),
            seed,
        })
    };
    with_pool(cfg.jobs, || {
        (0..cfg.trials)
            .into_par_iter()
            .map(run)
            .collect::<Result<Vec<_>>>()
    })?
}

/// The `⌈δ·T⌉`-th smallest value.
pub fn percentile(values: &[f64], delta: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Config("no values".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config(format!("confidence {delta} outside (0, 1)")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((delta * sorted.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    Ok(sorted[rank.min(sorted.len()) - 1])
}

/// `ε_δ`: the error bound met by a fraction `δ` of the trials.
pub fn percentile_error(trials: &[TrialRecord], delta: f64) -> Result<f64> {
    let errors: Vec<f64> = trials.iter().map(|t| t.error).collect();
    percentile(&errors, delta)
}

/// Fit of `N = C/ε + b` with weights `w_i = ε_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub c: f64,
    pub b: f64,
    pub c_stderr: f64,
    pub b_stderr: f64,
    pub points: usize,
}

/// Weighted least squares over `(ε, N)` points via the 2×2 normal equations.
pub fn wls_fit(points: &[(f64, f64)]) -> Result<FitResult> {
    if points.len() < 3 {
        return Err(Error::Fit(format!(
            "need >= 3 points, got {}",
            points.len()
        )));
    }
    if points
        .iter()
        .any(|&(e, n)| e.is_nan() || e <= 0.0 || !n.is_finite())
    {
        return Err(Error::Fit(
            "errors must be positive and counts finite".into(),
        ));
    }
    let (mut sw, mut sx, mut sxx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(eps, n) in points {
        let (w, x) = (eps, 1.0 / eps);
        sw += w;
        sx += w * x;
        sxx += w * x * x;
        sy += w * n;
        sxy += w * x * n;
    }
    let det = sxx * sw - sx * sx;
    if det.is_nan() || det <= 1e-12 * sxx * sw {
        return Err(Error::Fit(
            "singular normal equations (all errors equal?)".into(),
        ));
    }
    let c = (sxy * sw - sx * sy) / det;
    let b = (sxx * sy - sx * sxy) / det;
    let dof = (points.len() - 2) as f64;
    let rss: f64 = points
        .iter()
        .map(|&(eps, n)| eps * (n - c / eps - b).powi(2))
        .sum();
    let s2 = rss / dof;
    Ok(FitResult {
        c,
        b,
        c_stderr: (s2 * sw / det).sqrt(),
        b_stderr: (s2 * sxx / det).sqrt(),
        points: points.len(),
    })
}

/// Result of spreading every shot over a fixed number of QPUs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QpuAssignment {
    /// Depth of each shot run on each QPU, in assignment order.
    pub shots: Vec<Vec<u64>>,
    /// Sequential `U` applications per QPU.
    pub loads: Vec<u64>,
    pub parallel_depth: u64,
}

fn shot_cost(depth: u64) -> u64 {
    2 * depth + 1
}

/// Longest-processing-time greedy: highest Grover power first, each shot to
/// the least-loaded QPU (lowest index on ties).
pub fn parallel_schedule(schedule: &Schedule, n_qpus: usize) -> Result<QpuAssignment> {
    if n_qpus < 1 {
        return Err(Error::Config("need at least one QPU".into()));
    }
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> =
        (0..n_qpus).map(|i| Reverse((0, i))).collect();
    let mut shots = vec![Vec::new(); n_qpus];
    let mut loads = vec![0u64; n_qpus];
    for (&depth, &count) in schedule.depths().iter().zip(schedule.shots()).rev() {
        for _ in 0..count {
            let Reverse((load, i)) = heap.pop().expect("non-empty heap");
            let next = load + shot_cost(depth);
            shots[i].push(depth);
            loads[i] = next;
            heap.push(Reverse((next, i)));
        }
    }
    let parallel_depth = loads.iter().copied().max().unwrap_or(0);
    Ok(QpuAssignment {
        shots,
        loads,
        parallel_depth,
    })
}

/// `(n_qpus, parallel_depth)` for every requested QPU count.
///
/// A machine may always sit idle, so each point is the best greedy
/// makespan over all QPU counts up to it.
pub fn speedup_curve(schedule: &Schedule, qpus: &[usize]) -> Result<Vec<(usize, u64)>> {
    let Some(&max) = qpus.iter().max() else {
        return Ok(Vec::new());
    };
    if qpus.contains(&0) {
        return Err(Error::Config("need at least one QPU".into()));
    }
    let mut best = Vec::with_capacity(max + 1);
    best.push(u64::MAX);
    let saturated = schedule.total_shots() as usize;
    let mut running = u64::MAX;
    for m in 1..=max {
        if m <= saturated || running == u64::MAX {
            running = running.min(parallel_schedule(schedule, m)?.parallel_depth);
        }
        best.push(running);
    }
    Ok(qpus.iter().map(|&m| (m, best[m])).collect())
}

/// One confidence-level point of a scaling sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub q: u32,
    pub epsilon: f64,
    pub queries: u64,
    pub max_depth: u64,
    pub ula_len: usize,
    pub trials: usize,
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub qs: Vec<u32>,
    pub k: f64,
    pub delta: f64,
    pub trials: usize,
    pub amplitude: AmplitudeSpec,
    pub search: SearchConfig,
    pub base_seed: u64,
    pub jobs: Option<usize>,
    /// Limit each ESPRIT input to the theorem's `2^{2q}` lags.
    pub theorem_ula: bool,
}

/// Runs Monte Carlo on the all-2 nested array for each `q` and reports `ε_δ`
/// against total queries.
pub fn scaling_sweep(cfg: &SweepConfig) -> Result<Vec<SweepPoint>> {
    cfg.qs
        .iter()
        .map(|&q| {
            let mut array = ArrayConfig::nested(q, &vec![2; 2 * q as usize])?;
            if cfg.theorem_ula {
                array = array.with_theorem_ula();
            }
            let schedule = shot_schedule(array.physical.positions(), cfg.k)?;
            let ula_len = Estimator::new(&array, cfg.search)?.pipeline().ula_len();
            let trials = monte_carlo(&MonteCarloConfig {
                amplitude: cfg.amplitude,
                trials: cfg.trials,
                array,
                schedule: schedule.clone(),
                search: cfg.search,
                base_seed: cfg.base_seed.wrapping_add(q as u64),
                jobs: cfg.jobs,
            })?;
            Ok(SweepPoint {
                q,
                epsilon: percentile_error(&trials, cfg.delta)?,
                queries: total_queries(&schedule),
                max_depth: schedule.n_max(),
                ula_len,
                trials: trials.len(),
            })
        })
        .collect()
}

pub fn write_trials_csv(path: &Path, trials: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
    for t in trials {
        w.serialize(t).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trials_csv(path: &Path) -> Result<Vec<TrialRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Io(e.to_string())))
        .collect()
}

/// `epsilon,queries` rows for an error-versus-queries plot.
pub fn write_points_csv(path: &Path, points: &[(f64, f64)]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "epsilon,queries")?;
    for (e, n) in points {
        writeln!(f, "{e:e},{n}")?;
    }
    Ok(())
}

pub fn read_points_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    #[derive(Deserialize)]
    struct Row {
        epsilon: f64,
        queries: f64,
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
    r.deserialize::<Row>()
        .map(|row| {
            row.map(|r| (r.epsilon, r.queries))
                .map_err(|e| Error::Io(e.to_string()))
        })
        .collect()
}

/// `n_qpus,parallel_depth` rows for a speedup plot.
pub fn write_speedup_csv(path: &Path, curve: &[(usize, u64)]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "n_qpus,parallel_depth")?;
    for (m, d) in curve {
        writeln!(f, "{m},{d}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::PresetName;
    use proptest::prelude::*;

    fn record(error: f64) -> TrialRecord {
        TrialRecord {
            amplitude: 0.5,
            a_hat: 0.5 + error,
            error,
            total_queries: 1,
            max_depth: 1,
            seed: 0,
        }
    }

    #[test]
    fn order_statistic() {
        let trials: Vec<_> = (1..=5).map(|i| record(i as f64 * 1e-4)).collect();
        assert_eq!(percentile_error(&trials, 0.8).unwrap(), 4e-4);
        let same: Vec<_> = (0..7).map(|_| record(3e-3)).collect();
        for d in [0.1, 0.5, 0.99] {
            assert_eq!(percentile_error(&same, d).unwrap(), 3e-3);
        }
        assert!(percentile_error(&[], 0.5).is_err());
    }

    #[test]
    fn uniform_errors_concentrate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..500).map(|_| rng.random()).collect();
        let p = percentile(&v, 0.95).unwrap();
        assert!((0.93..=0.97).contains(&p), "{p}");
    }

    #[test]
    fn exact_model_recovery() {
        let pts: Vec<_> = [1e-2, 1e-3, 1e-4].iter().map(|&e| (e, 4.0 / e)).collect();
        let f = wls_fit(&pts).unwrap();
        assert!((f.c - 4.0).abs() < 1e-9 && f.b.abs() < 1e-6);
        let pts: Vec<_> = [1e-2, 1e-3, 1e-4]
            .iter()
            .map(|&e| (e, 4.0 / e + 7.0))
            .collect();
        let f = wls_fit(&pts).unwrap();
        assert!((f.c - 4.0).abs() < 1e-9 && (f.b - 7.0).abs() < 1e-6);
        assert!(f.c_stderr < 1e-6);
    }

    #[test]
    fn fit_errors() {
        assert!(wls_fit(&[(1e-3, 1.0), (1e-2, 2.0)]).is_err());
        assert!(wls_fit(&[(1e-3, 1.0), (1e-3, 2.0), (1e-3, 3.0)]).is_err());
        assert!(wls_fit(&[(0.0, 1.0), (1e-3, 2.0), (1e-2, 3.0)]).is_err());
    }

    #[test]
    fn weighted_residuals_are_orthogonal_to_regressors() {
        let pts = [
            (3e-3, 1500.0),
            (1e-3, 4100.0),
            (4e-4, 11000.0),
            (1e-4, 41000.0),
        ];
        let f = wls_fit(&pts).unwrap();
        let (mut g1, mut g2) = (0.0, 0.0);
        for (e, n) in pts {
            let r = n - f.c / e - f.b;
            g1 += e * r / e;
            g2 += e * r;
        }
        assert!(g1.abs() < 1e-6 && g2.abs() < 1e-6, "{g1} {g2}");
        assert!(f.c_stderr > 0.0 && f.b_stderr > 0.0);
    }

    #[test]
    fn single_qpu_runs_everything() {
        let s = PresetName::Table4.load().schedule().unwrap();
        let a = parallel_schedule(&s, 1).unwrap();
        assert_eq!(a.parallel_depth, s.u_applications());
        assert!(parallel_schedule(&s, 0).is_err());
    }

    #[test]
    fn saturation_at_deepest_shot() {
        let s = PresetName::Table4.load().schedule().unwrap();
        let a = parallel_schedule(&s, s.total_shots() as usize).unwrap();
        assert_eq!(a.parallel_depth, 2 * 256 + 1);
        let curve = speedup_curve(&s, &[1, 2, 400, 1000]).unwrap();
        assert_eq!(curve[0].1, s.u_applications());
        assert_eq!(curve[3].1, 513);
    }

    #[test]
    fn trial_seeds_differ() {
        let seeds: std::collections::BTreeSet<u64> = (0..1000).map(|i| trial_seed(7, i)).collect();
        assert_eq!(seeds.len(), 1000);
    }

    proptest! {
        #[test]
        fn greedy_conserves_shots_and_meets_bounds(
            shots in proptest::collection::vec(1u64..12, 2..7),
            n_qpus in 1usize..20,
        ) {
            let depths: Vec<u64> = std::iter::once(0).chain((0..shots.len() as u32 - 1).map(|j| 1u64 << j)).collect();
            let s = Schedule::new(depths.clone(), shots.clone(), 1.0).unwrap();
            let a = parallel_schedule(&s, n_qpus).unwrap();
            let mut got: Vec<u64> = a.shots.iter().flatten().copied().collect();
            got.sort_unstable();
            let mut want: Vec<u64> = depths.iter().zip(&shots).flat_map(|(&d, &c)| std::iter::repeat_n(d, c as usize)).collect();
            want.sort_unstable();
            prop_assert_eq!(got, want);
            let total = s.u_applications();
            prop_assert!(a.parallel_depth > 2 * s.n_max());
            prop_assert!(a.parallel_depth >= total.div_ceil(n_qpus as u64));
            for (q, load) in a.shots.iter().zip(&a.loads) {
                prop_assert_eq!(q.iter().map(|&d| 2 * d + 1).sum::<u64>(), *load);
            }
        }

        #[test]
        fn percentile_monotone_in_delta(v in proptest::collection::vec(0.0f64..1.0, 1..60), d1 in 0.01f64..0.99, d2 in 0.01f64..0.99) {
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            prop_assert!(percentile(&v, lo).unwrap() <= percentile(&v, hi).unwrap());
        }
    }
}
