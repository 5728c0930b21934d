// SPDX-License-Identifier: Apache-2.0

//! Single-source ESPRIT on the spatially smoothed Toeplitz covariance of a
//! virtual ULA signal.
//!
//! The covariance has the measurement vector as its first row and its
//! conjugate as its first column. Its two dominant left singular vectors form
//! `S`; the shift relation between rows `0..M−1` and `1..M` gives a 2×2
//! rotation operator `P` whose near-unit-circle eigenvalue carries the
//! frequency.

pub mod lanczos;

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::signal::VirtualSignal;
use crate::{Error, Result};

pub use lanczos::{HermitianOperator, LanczosConfig};

/// Relative cutoff below which singular values of `S₁` are treated as zero.
const PINV_RCOND: f64 = 1e-12;

/// Hermitian Toeplitz matrix `R[j][k] = z_{k−j}` for `k ≥ j`, `conj(z_{j−k})` otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct ToeplitzCovariance {
    generator: Vec<Complex64>,
}

impl ToeplitzCovariance {
    pub fn size(&self) -> usize {
        self.generator.len()
    }

    pub fn generator(&self) -> &[Complex64] {
        &self.generator
    }

    pub fn entry(&self, j: usize, k: usize) -> Complex64 {
        if k >= j {
            self.generator[k - j]
        } else {
            self.generator[j - k].conj()
        }
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let m = self.size();
        DMatrix::from_fn(m, m, |j, k| self.entry(j, k))
    }

    /// FFT-backed matrix-vector product via a `2M`-point circulant embedding.
    pub fn operator(&self) -> ToeplitzOperator {
        ToeplitzOperator::new(self)
    }
}

pub fn build_toeplitz(virtual_signal: &VirtualSignal) -> Result<ToeplitzCovariance> {
    let m = virtual_signal.len();
    if m < 3 {
        return Err(Error::Config(format!(
            "ESPRIT needs at least 3 ULA samples, got {m}"
        )));
    }
    let mut generator = virtual_signal.values().to_vec();
    // The diagonal of a Hermitian matrix is real.
    generator[0] = Complex64::new(generator[0].re, 0.0);
    Ok(ToeplitzCovariance { generator })
}

pub struct ToeplitzOperator {
    m: usize,
    size: usize,
    spectrum: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl ToeplitzOperator {
    fn new(r: &ToeplitzCovariance) -> Self {
        let m = r.size();
        let size = (2 * m).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(size);
        let inverse = planner.plan_fft_inverse(size);
        // First column of the circulant: column 0 of R, zero gap, then row 0 reversed.
        let mut spectrum = vec![Complex64::new(0.0, 0.0); size];
        for (j, slot) in spectrum.iter_mut().enumerate().take(m) {
            *slot = r.entry(j, 0);
        }
        for k in 1..m {
            spectrum[size - k] = r.entry(0, k);
        }
        forward.process(&mut spectrum);
        let scale = 1.0 / size as f64;
        spectrum.iter_mut().for_each(|c| *c *= scale);
        Self {
            m,
            size,
            spectrum,
            forward,
            inverse,
        }
    }
}

impl HermitianOperator for ToeplitzOperator {
    fn dim(&self) -> usize {
        self.m
    }

    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.size];
        buf[..self.m].copy_from_slice(x);
        self.forward.process(&mut buf);
        for (b, s) in buf.iter_mut().zip(&self.spectrum) {
            *b *= s;
        }
        self.inverse.process(&mut buf);
        y.copy_from_slice(&buf[..self.m]);
    }
}

/// Which factorization supplies the signal subspace.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decomposition {
    /// Full dense SVD of the `M×M` covariance.
    #[default]
    Dense,
    /// Top eigenpairs by Lanczos with FFT Toeplitz products.
    Lanczos,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubspaceEstimate {
    /// Frequency in `(−π, π]`.
    pub omega: f64,
    /// Eigenvalues of the rotation operator; `eigenvalues[0]` carries `omega`.
    pub eigenvalues: [(f64, f64); 2],
    /// `σ₂ / σ₃`: how far the second singular value stands above the noise floor.
    pub separation: f64,
}

pub fn esprit_omega(r: &ToeplitzCovariance) -> Result<SubspaceEstimate> {
    esprit_omega_with(r, Decomposition::Dense, &LanczosConfig::default())
}

pub fn esprit_omega_with(
    r: &ToeplitzCovariance,
    method: Decomposition,
    lanczos: &LanczosConfig,
) -> Result<SubspaceEstimate> {
    let m = r.size();
    if m < 3 {
        return Err(Error::Config(format!(
            "ESPRIT needs at least 3 ULA samples, got {m}"
        )));
    }
    let (subspace, sigma) = match method {
        Decomposition::Dense => dense_subspace(r)?,
        Decomposition::Lanczos => lanczos_subspace(r, lanczos),
    };
    let separation = match (sigma[1], sigma[2]) {
        (s2, s3) if s3 > 0.0 => (s2 / s3).max(1.0),
        (s2, _) if s2 > 0.0 => f64::INFINITY,
        _ => 1.0,
    };
    let (lambda, other) = rotation_eigenvalues(&subspace)?;
    // The dominant singular vector of this Toeplitz layout is the conjugate
    // steering vector, so the shift eigenvalue is e^{-iω}.
    let omega = wrap_angle(-lambda.arg());
    Ok(SubspaceEstimate {
        omega,
        eigenvalues: [(lambda.re, lambda.im), (other.re, other.im)],
        separation,
    })
}

/// Maps an angle into `(−π, π]`.
pub fn wrap_angle(x: f64) -> f64 {
    let mut y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    }
    y
}

fn dense_subspace(r: &ToeplitzCovariance) -> Result<(DMatrix<Complex64>, [f64; 3])> {
    let m = r.size();
    let svd = r.to_dense().svd(true, false);
    let u = svd
        .u
        .ok_or_else(|| Error::DegenerateSignal("SVD did not return U".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });
    let sigma = [
        svd.singular_values[order[0]],
        svd.singular_values[order[1]],
        svd.singular_values[order[2]],
    ];
    let s = DMatrix::from_fn(m, 2, |i, c| u[(i, order[c])]);
    Ok((s, sigma))
}

fn lanczos_subspace(r: &ToeplitzCovariance, cfg: &LanczosConfig) -> (DMatrix<Complex64>, [f64; 3]) {
    let m = r.size();
    let ritz = lanczos::top_eigenpairs(&r.operator(), 3, 2, cfg);
    let s = DMatrix::from_fn(m, 2, |i, c| ritz.vectors[c][i]);
    let sigma = [
        ritz.values[0].abs(),
        ritz.values[1].abs(),
        ritz.values.get(2).map_or(0.0, |v| v.abs()),
    ];
    (s, sigma)
}

/// Eigenvalues of `P = pinv(S₁)·S₂`, the selected one (modulus closest to 1) first.
fn rotation_eigenvalues(s: &DMatrix<Complex64>) -> Result<(Complex64, Complex64)> {
    let m = s.nrows();
    let s1 = s.rows(0, m - 1).into_owned();
    let s2 = s.rows(1, m - 1).into_owned();
    let svd = s1.svd(true, true);
    let top = svd.singular_values.max();
    let low = svd.singular_values.min();
    if top.is_nan() || top <= 0.0 || low < PINV_RCOND * top {
        return Err(Error::DegenerateSignal(format!(
            "shift submatrix is rank deficient (sigma {low:e} / {top:e})"
        )));
    }
    let pinv = svd
        .pseudo_inverse(PINV_RCOND * top)
        .map_err(|e| Error::DegenerateSignal(e.to_string()))?;
    let p = &pinv * &s2;
    let p = Matrix2::new(p[(0, 0)], p[(0, 1)], p[(1, 0)], p[(1, 1)]);
    let (a, b) = eig2(&p);
    let da = (a.norm() - 1.0).abs();
    let db = (b.norm() - 1.0).abs();
    if db < da {
        Ok((b, a))
    } else {
        Ok((a, b))
    }
}

fn eig2(p: &Matrix2<Complex64>) -> (Complex64, Complex64) {
    let half_trace = (p[(0, 0)] + p[(1, 1)]) / 2.0;
    let det = p[(0, 0)] * p[(1, 1)] - p[(0, 1)] * p[(1, 0)];
    let disc = (half_trace * half_trace - det).sqrt();
    (half_trace + disc, half_trace - disc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn omega_of(z: &VirtualSignal, method: Decomposition) -> f64 {
        esprit_omega_with(
            &build_toeplitz(z).unwrap(),
            method,
            &LanczosConfig::default(),
        )
        .unwrap()
        .omega
    }

    fn angle_diff(a: f64, b: f64) -> f64 {
        wrap_angle(a - b).abs()
    }

    #[test]
    fn toeplitz_layout() {
        let z = VirtualSignal::new(vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(-1.0, 0.0),
        ]);
        let r = build_toeplitz(&z).unwrap();
        assert_eq!(r.entry(0, 1), Complex64::new(0.0, 1.0));
        assert_eq!(r.entry(1, 0), Complex64::new(0.0, -1.0));
        assert_eq!(r.entry(0, 2), Complex64::new(-1.0, 0.0));
        let d = r.to_dense();
        assert_eq!(d, d.adjoint());
    }

    #[test]
    fn constant_signal_gives_all_ones() {
        let r = build_toeplitz(&VirtualSignal::exponential(0.0, 5)).unwrap();
        assert!(r.to_dense().iter().all(|&c| c == Complex64::new(1.0, 0.0)));
        assert!(omega_of(&VirtualSignal::exponential(0.0, 5), Decomposition::Dense).abs() < 1e-9);
    }

    #[test]
    fn pure_exponential_is_rank_one() {
        let r = build_toeplitz(&VirtualSignal::exponential(0.7, 8)).unwrap();
        let sv = r.to_dense().singular_values();
        let top = sv.max();
        let mut sorted: Vec<f64> = sv.iter().copied().collect();
        sorted.sort_by(|a, b| b.total_cmp(a));
        assert!(sorted[1..].iter().all(|&s| s < 1e-10 * top));
    }

    #[test]
    fn too_short_signal_is_rejected() {
        assert!(build_toeplitz(&VirtualSignal::exponential(0.3, 2)).is_err());
    }

    #[test]
    fn recovers_noiseless_frequencies() {
        assert!(
            angle_diff(
                omega_of(&VirtualSignal::exponential(0.7, 16), Decomposition::Dense),
                0.7
            ) < 1e-9
        );
        let edge = PI - 0.01;
        assert!(
            angle_diff(
                omega_of(&VirtualSignal::exponential(edge, 32), Decomposition::Dense),
                edge
            ) < 1e-9
        );
    }

    #[test]
    fn fft_operator_matches_dense_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z = VirtualSignal::new(
            (0..13)
                .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                .collect(),
        );
        let r = build_toeplitz(&z).unwrap();
        let x: Vec<Complex64> = (0..13).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let mut y = vec![Complex64::new(0.0, 0.0); 13];
        r.operator().apply(&x, &mut y);
        let want = r.to_dense() * nalgebra::DVector::from_column_slice(&x);
        for (a, b) in y.iter().zip(want.iter()) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn conjugated_input_negates_omega() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let w = rng.random_range(-3.0..3.0);
            let z: Vec<Complex64> = (0..24)
                .map(|v| {
                    Complex64::from_polar(1.0, w * v as f64 + 0.1 * (rng.random::<f64>() - 0.5))
                })
                .collect();
            let conj: Vec<Complex64> = z.iter().map(|c| c.conj()).collect();
            let a = omega_of(&VirtualSignal::new(z), Decomposition::Dense);
            let b = omega_of(&VirtualSignal::new(conj), Decomposition::Dense);
            assert!(angle_diff(a, -b) < 1e-9, "{a} {b}");
        }
    }

    #[test]
    fn lanczos_agrees_with_dense_on_noisy_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..10 {
            let w = rng.random_range(-3.0..3.0);
            let m = rng.random_range(16..80);
            let z: Vec<Complex64> = (0..m)
                .map(|v| {
                    let zc = Complex64::from_polar(
                        0.9,
                        w * v as f64 + 0.3 * (rng.random::<f64>() - 0.5),
                    );
                    if v == 0 {
                        Complex64::new(1.0, 0.0)
                    } else {
                        zc
                    }
                })
                .collect();
            let z = VirtualSignal::new(z);
            let a = omega_of(&z, Decomposition::Dense);
            let b = omega_of(&z, Decomposition::Lanczos);
            assert!(angle_diff(a, b) < 1e-6, "m {m}: {a} vs {b}");
        }
    }

    #[test]
    fn noise_error_shrinks_with_array_length() {
        let w = 0.9;
        let delta = 0.05;
        let median_err = |m: usize| {
            let mut errs: Vec<f64> = (0..100)
                .map(|seed| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let z: Vec<Complex64> = (0..m)
                        .map(|v| {
                            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                            Complex64::from_polar(1.0, w * v as f64 + sign * delta)
                        })
                        .collect();
                    angle_diff(omega_of(&VirtualSignal::new(z), Decomposition::Lanczos), w)
                })
                .collect();
            errs.sort_by(f64::total_cmp);
            errs[50]
        };
        let e16 = median_err(16);
        let e64 = median_err(64);
        let e256 = median_err(256);
        assert!(e16 > e64 && e64 > e256, "{e16} {e64} {e256}");
    }
}
