// SPDX-License-Identifier: Apache-2.0

//! Recovery of the unobserved signs of `sin((2n+1)·2θ)`.
//!
//! Each candidate sign vector is pushed through the whole pipeline (signal,
//! virtual array, ESPRIT) and scored by the binomial negative log-likelihood
//! of the resulting angle. A uniform angle grid seeds the search and a
//! sliding window then hill-climbs over local sign flips. The winning angle
//! is finally polished by a bounded likelihood minimization on its own fringe.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::atomic::{AtomicUsize, Ordering};

use argmin::core::{CostFunction, Executor};
use argmin::solver::brent::BrentOpt;
use serde::{Deserialize, Serialize};

use crate::arrays::{coarray, positive_ula, PhysicalArray};
use crate::esprit::{build_toeplitz, esprit_omega_with, Decomposition, LanczosConfig};
use crate::grover_sim::{check_theta, p0_unchecked, MeasurementSet};
use crate::signal::{PhysicalSignal, SignVector, SynthesisMethod, VirtualSynthesizer};
use crate::{Error, Result};

/// Probabilities are kept this far from 0 and 1 inside the logarithms.
const PROB_FLOOR: f64 = 1e-12;

/// Slack allowed when deciding whether a frequency preimage lies in `[0, π/2]`.
const RANGE_SLACK: f64 = 1e-9;

/// A scored sign assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub signs: SignVector,
    pub theta_hat: f64,
    pub nll: f64,
    pub omega: f64,
    /// `σ₂/σ₃` of the covariance behind this candidate.
    pub separation: f64,
}

impl Candidate {
    /// Lower NLL wins; ties go to the smaller angle.
    fn beats(&self, other: &Candidate) -> bool {
        match self.nll.total_cmp(&other.nll) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Equal => self.theta_hat < other.theta_hat,
            std::cmp::Ordering::Greater => false,
        }
    }
}

/// Sliding-window anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowBase {
    /// Hill-climb: each window perturbs the best vector found so far.
    #[default]
    RunningBest,
    /// Every window perturbs the grid-initialized vector.
    Initial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    /// Grid points over `[0, π/2]`; `None` means `4·|D|`.
    pub grid_size: Option<usize>,
    /// Sliding window width.
    pub window: usize,
    pub decomposition: Decomposition,
    pub synthesis: SynthesisMethod,
    /// Force every virtual sample to unit modulus after averaging.
    pub renormalize: bool,
    /// Which sign vector each window position perturbs.
    pub window_base: WindowBase,
    /// Before and after the window sweep, also score the sign pattern implied
    /// by the best estimate so far.
    pub reseed: bool,
    /// Keep the depth-0 sign at `+1`: `sin 2θ ≥ 0` on `[0, π/2]`.
    pub pin_depth_zero: bool,
    /// Minimize the NLL within a quarter fringe of the deepest depth around
    /// the winning ESPRIT angle.
    pub refine: bool,
    #[serde(skip)]
    pub lanczos: LanczosConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            grid_size: None,
            window: 5,
            decomposition: Decomposition::Dense,
            synthesis: SynthesisMethod::Auto,
            renormalize: false,
            window_base: WindowBase::RunningBest,
            reseed: true,
            pin_depth_zero: true,
            refine: true,
            lanczos: LanczosConfig::default(),
        }
    }
}

impl SearchConfig {
    pub fn grid_size_for(&self, depths: usize) -> usize {
        self.grid_size.unwrap_or(4 * depths)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=8).contains(&self.window) {
            return Err(Error::Config(format!(
                "window width {} outside 1..=8",
                self.window
            )));
        }
        if matches!(self.grid_size, Some(g) if g < 2) {
            return Err(Error::Config("grid size must be >= 2".into()));
        }
        Ok(())
    }
}

/// Binomial negative log-likelihood `−Σ [N₀ ln p + (N − N₀) ln(1 − p)]` with
/// `p = cos²((2n+1)θ̂)` clamped away from 0 and 1.
pub fn nll(measurements: &MeasurementSet, theta_hat: f64) -> Result<f64> {
    check_theta(theta_hat)?;
    Ok(nll_unchecked(measurements, theta_hat))
}

fn nll_unchecked(measurements: &MeasurementSet, theta_hat: f64) -> f64 {
    measurements
        .records()
        .iter()
        .map(|r| {
            let p = p0_unchecked(theta_hat, r.depth).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
            let ones = (r.shots - r.zeros) as f64;
            -(r.zeros as f64 * p.ln() + ones * (1.0 - p).ln())
        })
        .sum()
}

struct NllCost<'a>(&'a MeasurementSet);

impl CostFunction for NllCost<'_> {
    type Param = f64;
    type Output = f64;

    fn cost(&self, theta: &f64) -> std::result::Result<f64, argmin::core::Error> {
        Ok(nll_unchecked(self.0, *theta))
    }
}

/// Brent minimization of the NLL on `θ̂ ± π/(4(2n_max+1))`, clipped to
/// `[0, π/2]`. Returns `theta_hat` itself unless the minimizer is strictly
/// better, so the likelihood never gets worse.
pub fn refine_theta(measurements: &MeasurementSet, theta_hat: f64) -> Result<f64> {
    check_theta(theta_hat)?;
    let n_max = measurements.records().last().map_or(0, |r| r.depth);
    let half = PI / (4.0 * (2 * n_max + 1) as f64);
    let (lo, hi) = (
        (theta_hat - half).max(0.0),
        (theta_hat + half).min(FRAC_PI_2),
    );
    let solver = BrentOpt::new(lo, hi).set_tolerance(f64::EPSILON.sqrt(), 1e-13);
    let res = Executor::new(NllCost(measurements), solver)
        .configure(|s| s.max_iters(200))
        .run()
        .map_err(|e| Error::Estimation(format!("angle refinement: {e}")))?;
    let start = nll_unchecked(measurements, theta_hat);
    Ok(match res.state.best_param {
        Some(t) if res.state.best_cost < start => t.clamp(0.0, FRAC_PI_2),
        _ => theta_hat,
    })
}

/// `s_n = +1` when `sin((2n+1)·2θ) ≥ 0`, else `−1`.
pub fn signs_for_theta(theta: f64, depths: &[u64]) -> Result<SignVector> {
    check_theta(theta)?;
    Ok(signs_unchecked(theta, depths))
}

fn signs_unchecked(theta: f64, depths: &[u64]) -> SignVector {
    SignVector::new(
        depths
            .iter()
            .map(|&n| {
                if ((2 * n + 1) as f64 * 2.0 * theta).sin() >= 0.0 {
                    1
                } else {
                    -1
                }
            })
            .collect(),
    )
    .expect("only ±1 produced")
}

/// All vectors that agree with `base` outside positions `k..k+w`
/// (the window is truncated at the end of the vector).
pub fn sliding_window_signs(base: &SignVector, k: usize, w: usize) -> Vec<SignVector> {
    if k >= base.len() || w == 0 {
        return Vec::new();
    }
    let width = w.min(base.len() - k);
    (0..1usize << width)
        .map(|mask| {
            let mut s = base.clone();
            for bit in 0..width {
                s.set(k + bit, if mask >> bit & 1 == 0 { 1 } else { -1 });
            }
            s
        })
        .collect()
}

/// Maps a frequency `ω ≈ 4θ` (mod 2π) back to an angle in `[0, π/2]`.
///
/// The preimages are `ω/4` and `(ω + 2π)/4`; when both are admissible the
/// lower-NLL one wins.
pub fn disambiguate_theta(omega: f64, measurements: &MeasurementSet) -> Result<f64> {
    if !omega.is_finite() {
        return Err(Error::Estimation(format!("non-finite frequency {omega}")));
    }
    let admissible: Vec<f64> = [omega / 4.0, (omega + 2.0 * PI) / 4.0]
        .into_iter()
        .filter(|t| (-RANGE_SLACK..=FRAC_PI_2 + RANGE_SLACK).contains(t))
        .map(|t| t.clamp(0.0, FRAC_PI_2))
        .collect();
    match admissible.as_slice() {
        [] => Err(Error::Estimation(format!(
            "frequency {omega} has no preimage in [0, pi/2]"
        ))),
        [t] => Ok(*t),
        [a, b] => {
            let (na, nb) = (
                nll_unchecked(measurements, *a),
                nll_unchecked(measurements, *b),
            );
            Ok(if nb < na || (nb == na && b < a) {
                *b
            } else {
                *a
            })
        }
        _ => unreachable!(),
    }
}

/// The signal → virtual array → ESPRIT → angle chain for a fixed array.
#[derive(Debug)]
pub struct Pipeline {
    synth: VirtualSynthesizer,
    decomposition: Decomposition,
    lanczos: LanczosConfig,
    evaluations: AtomicUsize,
}

impl Pipeline {
    /// Builds the co-array of `physical` at order `q` and uses the first
    /// `ula_limit` lags of its positive ULA (all of them when `None`).
    pub fn new(
        physical: &PhysicalArray,
        q: u32,
        ula_limit: Option<usize>,
        cfg: &SearchConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let virtual_array = coarray(physical, q)?;
        let ula = positive_ula(&virtual_array)?;
        let len = ula_limit.map_or(ula.len(), |l| l.min(ula.len()));
        let synth = VirtualSynthesizer::new(
            physical,
            &virtual_array,
            len,
            cfg.synthesis,
            cfg.renormalize,
        )?;
        Ok(Self {
            synth,
            decomposition: cfg.decomposition,
            lanczos: cfg.lanczos,
            evaluations: AtomicUsize::new(0),
        })
    }

    /// Positive ULA length `M` handed to ESPRIT.
    pub fn ula_len(&self) -> usize {
        self.synth.ula_len()
    }

    pub fn depths(&self) -> &[u64] {
        self.synth.depths()
    }

    /// Number of sign vectors evaluated so far, across all callers.
    pub fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }

    pub fn evaluate(&self, measurements: &MeasurementSet, signs: &SignVector) -> Result<Candidate> {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        if measurements.depths() != self.depths() {
            return Err(Error::Shape(
                "measurement depths differ from the configured array".into(),
            ));
        }
        let y = PhysicalSignal::from_p0(self.depths(), &measurements.p0_hats(), signs)?;
        let z = self.synth.synthesize(&y)?;
        let r = build_toeplitz(&z)?;
        let est = esprit_omega_with(&r, self.decomposition, &self.lanczos)?;
        let theta_hat = disambiguate_theta(est.omega, measurements)?;
        Ok(Candidate {
            signs: signs.clone(),
            theta_hat,
            nll: nll_unchecked(measurements, theta_hat),
            omega: est.omega,
            separation: est.separation,
        })
    }
}

/// Keeps the best candidate seen; a degenerate-signal failure on one sign
/// vector only disqualifies that vector.
struct Best {
    best: Option<Candidate>,
    first_error: Option<Error>,
}

impl Best {
    fn new() -> Self {
        Self {
            best: None,
            first_error: None,
        }
    }

    fn offer(&mut self, result: Result<Candidate>) -> Result<()> {
        match result {
            Ok(c) => {
                if self.best.as_ref().is_none_or(|b| c.beats(b)) {
                    self.best = Some(c);
                }
                Ok(())
            }
            Err(e @ Error::DegenerateSignal(_)) => {
                self.first_error.get_or_insert(e);
                Ok(())
            }
            Err(e) => Err(e),
        }
    }

    fn finish(self) -> Result<Candidate> {
        self.best.ok_or_else(|| {
            self.first_error
                .unwrap_or_else(|| Error::Estimation("no candidates evaluated".into()))
        })
    }
}

/// Scores the sign patterns of `grid_size` equally spaced angles in `[0, π/2]`.
pub fn initial_candidate(
    pipeline: &Pipeline,
    measurements: &MeasurementSet,
    grid_size: usize,
) -> Result<Candidate> {
    if grid_size < 2 {
        return Err(Error::Config("grid size must be >= 2".into()));
    }
    let depths = measurements.depths();
    let step = FRAC_PI_2 / (grid_size - 1) as f64;
    let mut best = Best::new();
    for g in 0..grid_size {
        let signs = signs_unchecked(g as f64 * step, &depths);
        best.offer(pipeline.evaluate(measurements, &signs))?;
    }
    best.finish()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub best: Candidate,
    pub evaluations: usize,
}

/// Scores the signs implied by the best angle so far, repeating while that
/// improves the optimum. Returns the number of evaluations spent.
fn reseed(
    pipeline: &Pipeline,
    measurements: &MeasurementSet,
    depths: &[u64],
    best: &mut Best,
    left: &mut usize,
) -> Result<usize> {
    let mut spent = 0;
    while *left > 0 {
        let Some(current) = best.best.clone() else {
            break;
        };
        let signs = signs_unchecked(current.theta_hat, depths);
        if signs == current.signs {
            break;
        }
        *left -= 1;
        spent += 1;
        best.offer(pipeline.evaluate(measurements, &signs))?;
        if best.best.as_ref().is_some_and(|b| b.signs == current.signs) {
            break;
        }
    }
    Ok(spent)
}

/// Grid initialization followed by one sliding-window sweep over every
/// start position; `cfg.window_base` picks the vector each window perturbs.
pub fn search(
    pipeline: &Pipeline,
    measurements: &MeasurementSet,
    cfg: &SearchConfig,
) -> Result<SearchOutcome> {
    cfg.validate()?;
    let grid = cfg.grid_size_for(measurements.len());
    let mut evaluations = grid;
    let mut best = Best::new();
    best.offer(initial_candidate(pipeline, measurements, grid))?;
    let depths = measurements.depths();
    // Windows never re-score their own base, which leaves |D| evaluations of
    // the budget for reseeding.
    let mut reseeds_left = measurements.len();
    if cfg.reseed {
        evaluations += reseed(
            pipeline,
            measurements,
            &depths,
            &mut best,
            &mut reseeds_left,
        )?;
    }
    let initial = best.best.as_ref().map(|c| c.signs.clone());
    let pinned = cfg.pin_depth_zero && depths.first() == Some(&0);
    for k in 0..measurements.len() {
        let base = match cfg.window_base {
            WindowBase::RunningBest => best.best.as_ref().map(|c| c.signs.clone()),
            WindowBase::Initial => initial.clone(),
        };
        let Some(base) = base else { break };
        for signs in sliding_window_signs(&base, k, cfg.window) {
            if signs == base || (pinned && signs.get(0) < 0) {
                continue;
            }
            evaluations += 1;
            best.offer(pipeline.evaluate(measurements, &signs))?;
        }
        if cfg.reseed {
            evaluations += reseed(
                pipeline,
                measurements,
                &depths,
                &mut best,
                &mut reseeds_left,
            )?;
        }
    }
    if cfg.reseed {
        evaluations += reseed(
            pipeline,
            measurements,
            &depths,
            &mut best,
            &mut reseeds_left,
        )?;
    }
    let mut winner = best.finish()?;
    if cfg.refine {
        winner.theta_hat = refine_theta(measurements, winner.theta_hat)?;
        winner.nll = nll_unchecked(measurements, winner.theta_hat);
    }
    Ok(SearchOutcome {
        best: winner,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrays::nested_positions;
    use crate::grover_sim::{exact_p0, ShotRecord};

    fn ms(records: &[(u64, u64, u64)]) -> MeasurementSet {
        MeasurementSet::new(
            records
                .iter()
                .map(|&(d, s, z)| ShotRecord::new(d, s, z).unwrap())
                .collect(),
            0,
        )
        .unwrap()
    }

    /// Counts so large that `zeros/shots` equals the exact probability to ~1e-15.
    fn noiseless(theta: f64, depths: &[u64]) -> MeasurementSet {
        let shots = 1u64 << 50;
        ms(&depths
            .iter()
            .map(|&d| {
                (
                    d,
                    shots,
                    (exact_p0(theta, d).unwrap() * shots as f64).round() as u64,
                )
            })
            .collect::<Vec<_>>())
    }

    #[test]
    fn nll_of_perfect_fit_is_zero() {
        let m = ms(&[(0, 10, 10), (3, 7, 7)]);
        assert!(nll(&m, 0.0).unwrap() < 1e-9);
    }

    #[test]
    fn nll_uniform_likelihood() {
        // cos²(3·π/12) = 1/2
        let theta = PI / 12.0;
        for zeros in [0, 3, 10] {
            let m = ms(&[(1, 10, zeros)]);
            assert!((nll(&m, theta).unwrap() - 10.0 * 2f64.ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn nll_is_minimized_at_truth_for_exact_data() {
        let theta = 0.37;
        let depths = [0u64, 1, 2, 4, 8];
        let m = noiseless(theta, &depths);
        let at_truth = nll(&m, theta).unwrap();
        for g in 0..200 {
            let t = g as f64 * FRAC_PI_2 / 199.0;
            assert!(nll(&m, t).unwrap() >= at_truth - 1e-6);
        }
    }

    #[test]
    fn nll_rejects_bad_angle() {
        assert!(nll(&ms(&[(0, 1, 1)]), 2.0).is_err());
    }

    #[test]
    fn signs_examples() {
        let depths: Vec<u64> = vec![0, 1, 2, 4, 8, 16, 32, 64];
        assert!(signs_for_theta(0.01, &depths)
            .unwrap()
            .as_slice()
            .iter()
            .all(|&s| s == 1));
        assert_eq!(signs_for_theta(PI / 4.0, &[1]).unwrap().as_slice(), &[-1]);
        assert_eq!(
            signs_for_theta(0.4, &[0, 1, 2]).unwrap().as_slice(),
            &[1, 1, -1]
        );
    }

    #[test]
    fn window_enumeration() {
        let base = SignVector::all_positive(5);
        assert_eq!(sliding_window_signs(&base, 1, 2).len(), 4);
        assert_eq!(sliding_window_signs(&base, 4, 2).len(), 2);
        assert!(sliding_window_signs(&base, 5, 2).is_empty());
        let base = SignVector::all_positive(10);
        let set = sliding_window_signs(&base, 2, 5);
        assert_eq!(set.len(), 32);
        let unique: std::collections::BTreeSet<_> = set.iter().cloned().collect();
        assert_eq!(unique.len(), 32);
        for s in &set {
            for i in (0..2).chain(7..10) {
                assert_eq!(s.get(i), 1);
            }
        }
    }

    #[test]
    fn disambiguation() {
        let m = ms(&[(0, 4, 2)]);
        assert!((disambiguate_theta(1.2, &m).unwrap() - 0.3).abs() < 1e-15);
        assert!((disambiguate_theta(2.4, &m).unwrap() - 0.6).abs() < 1e-15);
        let wrapped = 4.0 - 2.0 * PI;
        assert!((disambiguate_theta(wrapped, &m).unwrap() - 1.0).abs() < 1e-12);
        assert!(disambiguate_theta(f64::NAN, &m).is_err());
    }

    fn pipeline(q: u32) -> Pipeline {
        let p = nested_positions(q, &vec![2; 2 * q as usize]).unwrap();
        Pipeline::new(&p, q, None, &SearchConfig::default()).unwrap()
    }

    #[test]
    fn grid_loop_bound() {
        let pl = pipeline(1);
        let m = noiseless(0.3, pl.depths());
        initial_candidate(&pl, &m, 2).unwrap();
        assert_eq!(pl.evaluations(), 2);
        assert!(initial_candidate(&pl, &m, 1).is_err());
    }

    #[test]
    fn initial_candidate_on_noiseless_data() {
        let pl = pipeline(2);
        let m = noiseless(0.3, pl.depths());
        let c = initial_candidate(&pl, &m, 64).unwrap();
        assert!(
            (c.theta_hat - 0.3).abs() < 2.0 * FRAC_PI_2 / 64.0,
            "{}",
            c.theta_hat
        );
        // Minimum over the grid.
        let step = FRAC_PI_2 / 63.0;
        for g in 0..64 {
            let s = signs_for_theta(g as f64 * step, pl.depths()).unwrap();
            assert!(pl.evaluate(&m, &s).unwrap().nll >= c.nll);
        }
    }

    #[test]
    fn zero_angle_is_recovered() {
        let pl = pipeline(2);
        let m = noiseless(0.0, pl.depths());
        let c = initial_candidate(&pl, &m, 24).unwrap();
        assert!(c.theta_hat < FRAC_PI_2 / 23.0);
    }

    #[test]
    fn noiseless_search_recovers_signs_and_angle() {
        let pl = pipeline(2);
        for theta in [0.2, 0.7, 1.3] {
            let m = noiseless(theta, pl.depths());
            let out = search(&pl, &m, &SearchConfig::default()).unwrap();
            assert_eq!(out.best.signs, signs_for_theta(theta, pl.depths()).unwrap());
            assert!(
                (out.best.theta_hat - theta).abs() < 1e-6,
                "{theta}: {}",
                out.best.theta_hat
            );
        }
    }

    #[test]
    fn refinement_recovers_noiseless_angle() {
        let depths = [0, 1, 3, 7, 15];
        let theta = 0.912_345;
        let m = noiseless(theta, &depths);
        let refined = refine_theta(&m, theta + 1e-3).unwrap();
        // A quadratic minimum is only located to about √ε relative.
        assert!((refined - theta).abs() < 1e-7, "{refined}");
    }

    #[test]
    fn refinement_stays_in_range() {
        let m = noiseless(FRAC_PI_2, &[0, 1, 3]);
        let refined = refine_theta(&m, FRAC_PI_2 - 1e-4).unwrap();
        assert!(refined <= FRAC_PI_2 && (FRAC_PI_2 - refined) < 1e-7);
        assert!(refine_theta(&m, 1.7).is_err());
    }

    #[test]
    fn depth_zero_sign_stays_positive() {
        // An early window that flips the depth-0 sign used to lock this case out.
        let pl = pipeline(2);
        let theta = 0.763_110_370_452_565_2;
        let m = noiseless(theta, pl.depths());
        let out = search(&pl, &m, &SearchConfig::default()).unwrap();
        assert_eq!(out.best.signs.get(0), 1);
        assert!((out.best.theta_hat - theta).abs() < 1e-9);
    }

    #[test]
    fn reseeding_fixes_high_depth_signs() {
        // The grid winner is 0.027 rad off; its signs are wrong at several depths.
        let pl = pipeline(3);
        let theta = 1.048_508_249;
        let m = noiseless(theta, pl.depths());
        let out = search(&pl, &m, &SearchConfig::default()).unwrap();
        assert!(
            (out.best.theta_hat - theta).abs() < 1e-9,
            "{}",
            out.best.theta_hat
        );
        let plain = SearchConfig {
            reseed: false,
            ..SearchConfig::default()
        };
        let worse = search(&pl, &m, &plain).unwrap();
        assert!(worse.best.nll >= out.best.nll);
    }

    #[test]
    fn unpinned_search_may_flip_depth_zero() {
        let cfg = SearchConfig {
            pin_depth_zero: false,
            ..SearchConfig::default()
        };
        let pl = pipeline(1);
        let m = ms(&[(0, 3, 1), (1, 2, 0), (2, 2, 2), (4, 1, 0)]);
        let pinned = search(&pl, &m, &SearchConfig::default()).unwrap();
        let free = search(&pl, &m, &cfg).unwrap();
        assert_eq!(pinned.best.signs.get(0), 1);
        assert!(free.best.nll <= pinned.best.nll);
    }

    #[test]
    fn evaluation_budget() {
        let p = nested_positions(4, &[2; 8]).unwrap();
        let depths = &p.positions()[..10];
        let p = PhysicalArray::from_positions(depths, 4).unwrap();
        let cfg = SearchConfig {
            grid_size: Some(40),
            window: 2,
            decomposition: Decomposition::Lanczos,
            ..SearchConfig::default()
        };
        let pl = Pipeline::new(&p, 4, None, &cfg).unwrap();
        let m = noiseless(0.52, pl.depths());
        let out = search(&pl, &m, &cfg).unwrap();
        assert!(out.evaluations <= 40 + 10 * 4, "{}", out.evaluations);
    }

    #[test]
    fn search_stages_never_increase_nll() {
        let pl = pipeline(2);
        let m = ms(&[
            (0, 20, 15),
            (1, 10, 2),
            (2, 9, 8),
            (4, 8, 1),
            (8, 5, 3),
            (16, 3, 1),
        ]);
        let cfg = SearchConfig::default();
        let init = initial_candidate(&pl, &m, cfg.grid_size_for(m.len())).unwrap();
        let out = search(&pl, &m, &cfg).unwrap();
        assert!(out.best.nll <= init.nll);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

        #[test]
        fn refinement_never_raises_nll(theta in 0.0..FRAC_PI_2, start in 0.0..FRAC_PI_2, seed: u64) {
            let schedule = crate::estimator::shot_schedule(&[0, 1, 2, 4, 8], 4.0).unwrap();
            let m = crate::grover_sim::sample_set(theta, &schedule, seed).unwrap();
            let refined = refine_theta(&m, start).unwrap();
            proptest::prop_assert!((0.0..=FRAC_PI_2).contains(&refined));
            proptest::prop_assert!(nll(&m, refined).unwrap() <= nll(&m, start).unwrap());
        }
    }
}
