// SPDX-License-Identifier: Apache-2.0

//! Complex signal estimates on the physical array and their co-array
//! products on the virtual ULA.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::arrays::{coarray, PhysicalArray, VirtualArray};
use crate::grover_sim::MeasurementSet;
use crate::{Error, Result};

/// One `±1` per measured depth: the sign of `sin((2n+1)·2θ)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<i8>", into = "Vec<i8>")]
pub struct SignVector(Vec<i8>);

impl SignVector {
    pub fn new(signs: Vec<i8>) -> Result<Self> {
        if let Some(bad) = signs.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::Domain(format!("sign {bad} is not +1 or -1")));
        }
        Ok(Self(signs))
    }

    pub fn all_positive(len: usize) -> Self {
        Self(vec![1; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    pub fn get(&self, i: usize) -> i8 {
        self.0[i]
    }

    pub fn set(&mut self, i: usize, sign: i8) {
        debug_assert!(sign == 1 || sign == -1);
        self.0[i] = sign;
    }

    /// Every sign flipped.
    pub fn negated(&self) -> Self {
        Self(self.0.iter().map(|s| -s).collect())
    }
}

impl TryFrom<Vec<i8>> for SignVector {
    type Error = Error;

    fn try_from(v: Vec<i8>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SignVector> for Vec<i8> {
    fn from(s: SignVector) -> Self {
        s.0
    }
}

/// Unit-modulus estimates `y_n ≈ e^{i(2n+1)2θ}` at each measured depth.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalSignal {
    depths: Vec<u64>,
    values: Vec<Complex64>,
}

impl PhysicalSignal {
    /// Builds `y_n = c + i·s_n·√(1−c²)` with `c = clamp(2p̂0 − 1, −1, 1)`.
    pub fn from_p0(depths: &[u64], p0_hat: &[f64], signs: &SignVector) -> Result<Self> {
        if depths.len() != p0_hat.len() || depths.len() != signs.len() {
            return Err(Error::Shape(format!(
                "{} depths, {} probabilities, {} signs",
                depths.len(),
                p0_hat.len(),
                signs.len()
            )));
        }
        let values = p0_hat
            .iter()
            .zip(signs.as_slice())
            .map(|(&p, &s)| {
                let c = (2.0 * p - 1.0).clamp(-1.0, 1.0);
                Complex64::new(c, s as f64 * (1.0 - c * c).sqrt())
            })
            .collect();
        Ok(Self {
            depths: depths.to_vec(),
            values,
        })
    }

    /// Exact signal `e^{i(2n+1)2θ}` at each depth.
    pub fn noiseless(depths: &[u64], theta: f64) -> Self {
        let values = depths
            .iter()
            .map(|&n| Complex64::from_polar(1.0, (2 * n + 1) as f64 * 2.0 * theta))
            .collect();
        Self {
            depths: depths.to_vec(),
            values,
        }
    }

    pub fn depths(&self) -> &[u64] {
        &self.depths
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn conj(&self) -> Self {
        Self {
            depths: self.depths.clone(),
            values: self.values.iter().map(Complex64::conj).collect(),
        }
    }
}

pub fn form_physical_signal(
    measurements: &MeasurementSet,
    signs: &SignVector,
) -> Result<PhysicalSignal> {
    PhysicalSignal::from_p0(&measurements.depths(), &measurements.p0_hats(), signs)
}

/// Averaged co-array products `z_v` on the positive ULA `v = 0..M−1`.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualSignal {
    values: Vec<Complex64>,
}

impl VirtualSignal {
    pub fn new(values: Vec<Complex64>) -> Self {
        Self { values }
    }

    /// `z_v = e^{iωv}` for `v = 0..len`.
    pub fn exponential(omega: f64, len: usize) -> Self {
        Self::new(
            (0..len)
                .map(|v| Complex64::from_polar(1.0, omega * v as f64))
                .collect(),
        )
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// How the tuple sums `Σ ∏y_a ∏ȳ_b` are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthesisMethod {
    /// Direct for small arrays, FFT above a size threshold.
    #[default]
    Auto,
    Direct,
    Fft,
}

/// Work size `span × ula` above which `Auto` switches to the FFT route.
const DIRECT_WORK_LIMIT: usize = 1 << 18;

/// Precomputed state for turning physical signals into virtual ones on a
/// fixed array. Reused across every sign vector tried by the search.
#[derive(Clone)]
pub struct VirtualSynthesizer {
    depths: Vec<u64>,
    q: u32,
    ula_len: usize,
    counts: Vec<f64>,
    renormalize: bool,
    fft: Option<FftRoute>,
}

#[derive(Clone)]
struct FftRoute {
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for VirtualSynthesizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VirtualSynthesizer")
            .field("depths", &self.depths)
            .field("q", &self.q)
            .field("ula_len", &self.ula_len)
            .field("renormalize", &self.renormalize)
            .field("fft", &self.fft.as_ref().map(|r| r.size))
            .finish()
    }
}

impl VirtualSynthesizer {
    pub fn new(
        physical: &PhysicalArray,
        virtual_array: &VirtualArray,
        ula_len: usize,
        method: SynthesisMethod,
        renormalize: bool,
    ) -> Result<Self> {
        let q = virtual_array.order_q();
        if ula_len > virtual_array.ula_length() {
            return Err(Error::Config(format!(
                "requested ULA length {ula_len} exceeds co-array run {}",
                virtual_array.ula_length()
            )));
        }
        let counts = (0..ula_len as i64)
            .map(|v| virtual_array.multiplicity(v) as f64)
            .collect::<Vec<_>>();
        if counts.contains(&0.0) {
            return Err(Error::Estimation("ULA lag without decomposition".into()));
        }
        let span = q as usize * physical.max_position() as usize + 1;
        let use_fft = match method {
            SynthesisMethod::Direct => false,
            SynthesisMethod::Fft => true,
            SynthesisMethod::Auto => span.saturating_mul(ula_len) > DIRECT_WORK_LIMIT,
        };
        let fft = use_fft.then(|| {
            let size = (2 * span - 1).next_power_of_two();
            let mut planner = FftPlanner::new();
            FftRoute {
                size,
                forward: planner.plan_fft_forward(size),
                inverse: planner.plan_fft_inverse(size),
            }
        });
        Ok(Self {
            depths: physical.positions().to_vec(),
            q,
            ula_len,
            counts,
            renormalize,
            fft,
        })
    }

    pub fn ula_len(&self) -> usize {
        self.ula_len
    }

    pub fn depths(&self) -> &[u64] {
        &self.depths
    }

    pub fn synthesize(&self, signal: &PhysicalSignal) -> Result<VirtualSignal> {
        if signal.depths() != self.depths.as_slice() {
            return Err(Error::Shape(
                "signal depths differ from the physical array".into(),
            ));
        }
        let sums = match &self.fft {
            Some(route) => self.tuple_sums_fft(signal, route),
            None => self.tuple_sums_direct(signal),
        };
        let mut values: Vec<Complex64> =
            sums.iter().zip(&self.counts).map(|(s, &c)| s / c).collect();
        if self.renormalize {
            for z in values.iter_mut() {
                let r = z.norm();
                if r > 0.0 {
                    *z /= r;
                }
            }
        }
        // Lag zero is the empty phase difference.
        values[0] = Complex64::new(1.0, 0.0);
        Ok(VirtualSignal { values })
    }

    /// `W = Y^q` by repeated sparse convolution, then `Σ_u W[u+v]·conj(W[u])`.
    fn tuple_sums_direct(&self, signal: &PhysicalSignal) -> Vec<Complex64> {
        let mut acc = vec![Complex64::new(1.0, 0.0)];
        let max = *self.depths.last().unwrap() as usize;
        for _ in 0..self.q {
            let mut next = vec![Complex64::new(0.0, 0.0); acc.len() + max];
            for (u, a) in acc.iter().enumerate() {
                for (&x, y) in self.depths.iter().zip(signal.values()) {
                    next[u + x as usize] += a * y;
                }
            }
            acc = next;
        }
        (0..self.ula_len)
            .map(|v| {
                acc[v..]
                    .iter()
                    .zip(&acc)
                    .map(|(hi, lo)| hi * lo.conj())
                    .sum()
            })
            .collect()
    }

    /// On the unit circle `Y^q·conj(Y)^q = |Y|^{2q}`, so the tuple sums are
    /// the inverse DFT of `|DFT(y)|^{2q}`.
    fn tuple_sums_fft(&self, signal: &PhysicalSignal, route: &FftRoute) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); route.size];
        for (&x, y) in self.depths.iter().zip(signal.values()) {
            buf[x as usize] = *y;
        }
        route.forward.process(&mut buf);
        let power = 2 * self.q as i32;
        for b in buf.iter_mut() {
            *b = Complex64::new(b.norm_sqr().powi(power / 2), 0.0);
        }
        route.inverse.process(&mut buf);
        let scale = 1.0 / route.size as f64;
        buf.truncate(self.ula_len);
        buf.iter().map(|b| b * scale).collect()
    }
}

/// Builds the co-array and averages every decomposition of each ULA lag.
pub fn synthesize_virtual(
    physical_signal: &PhysicalSignal,
    physical: &PhysicalArray,
    q: u32,
    ula: &[i64],
) -> Result<VirtualSignal> {
    if ula.iter().enumerate().any(|(i, &v)| v != i as i64) {
        return Err(Error::Config("ULA must be [0, 1, ..., M-1]".into()));
    }
    let virtual_array = coarray(physical, q)?;
    VirtualSynthesizer::new(
        physical,
        &virtual_array,
        ula.len(),
        SynthesisMethod::Auto,
        false,
    )?
    .synthesize(physical_signal)
}
