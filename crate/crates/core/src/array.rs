//! Virtual-array geometry, target parameters and ideal signal synthesis.
//!
//! Channels are indexed from zero and the first element carries zero
//! phase: `s[k] = sum_q alpha_q * exp(j 2 pi f_q k)` for `k = 0..K`. A
//! zero-frequency target is therefore constant across the array. The same
//! convention is used by CLEAN and by the reconstruction step.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Uniform linear virtual array formed by `k_t` Tx and `k_r` Rx channels.
///
/// VA channel `k = t * k_r + r`, i.e. the Rx index varies fastest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry<T> {
    k_t: usize,
    k_r: usize,
    spacing_over_lambda: T,
}

impl<T: Real> ArrayGeometry<T> {
    pub fn new(k_t: usize, k_r: usize, spacing_over_lambda: T) -> Result<Self> {
        if k_t == 0 || k_r == 0 {
            return Err(Error::InvalidGeometry(format!(
                "need at least one Tx and one Rx channel, got {k_t}x{k_r}"
            )));
        }
        if !(spacing_over_lambda > T::zero()) || !spacing_over_lambda.is_finite() {
            return Err(Error::InvalidGeometry(format!(
                "spacing_over_lambda must be positive, got {spacing_over_lambda}"
            )));
        }
        Ok(Self {
            k_t,
            k_r,
            spacing_over_lambda,
        })
    }

    /// 3 Tx x 4 Rx at half-wavelength spacing.
    pub fn automotive_3x4() -> Self {
        Self::new(3, 4, T::lit(0.5)).expect("valid geometry")
    }

    pub fn k_t(&self) -> usize {
        self.k_t
    }

    pub fn k_r(&self) -> usize {
        self.k_r
    }

    /// Number of VA channels, `k_t * k_r`.
    pub fn k(&self) -> usize {
        self.k_t * self.k_r
    }

    pub fn spacing_over_lambda(&self) -> T {
        self.spacing_over_lambda
    }

    /// Zero-based (tx, rx) pair of VA channel `k`.
    pub fn split_index(&self, k: usize) -> (usize, usize) {
        (k / self.k_r, k % self.k_r)
    }
}

/// Sinusoid parameters of one signal vector.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TargetSet<T> {
    amplitudes: Vec<Complex<T>>,
    frequencies: Vec<T>,
}

impl<T: Real> TargetSet<T> {
    pub fn new(amplitudes: Vec<Complex<T>>, frequencies: Vec<T>) -> Result<Self> {
        if amplitudes.len() != frequencies.len() {
            return Err(Error::InvalidTargetSet(format!(
                "{} amplitudes but {} frequencies",
                amplitudes.len(),
                frequencies.len()
            )));
        }
        for &f in &frequencies {
            check_frequency(f)?;
        }
        Ok(Self {
            amplitudes,
            frequencies,
        })
    }

    pub fn empty() -> Self {
        Self {
            amplitudes: Vec::new(),
            frequencies: Vec::new(),
        }
    }

    pub fn push(&mut self, amplitude: Complex<T>, frequency: T) -> Result<()> {
        check_frequency(frequency)?;
        self.amplitudes.push(amplitude);
        self.frequencies.push(frequency);
        Ok(())
    }

    pub fn q(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn amplitudes(&self) -> &[Complex<T>] {
        &self.amplitudes
    }

    pub fn frequencies(&self) -> &[T] {
        &self.frequencies
    }

    pub fn iter(&self) -> impl Iterator<Item = (Complex<T>, T)> + '_ {
        self.amplitudes
            .iter()
            .copied()
            .zip(self.frequencies.iter().copied())
    }

    /// Largest `|alpha_q|`, zero for an empty set.
    pub fn dominant_amplitude(&self) -> T {
        self.amplitudes
            .iter()
            .map(|a| a.norm())
            .fold(T::zero(), T::max)
    }
}

fn check_frequency<T: Real>(f: T) -> Result<()> {
    let half = T::lit(0.5);
    if !(f >= -half && f < half) {
        return Err(Error::InvalidTargetSet(format!(
            "frequency {f} outside [-0.5, 0.5)"
        )));
    }
    Ok(())
}

/// Wraps a frequency in cycles per element into `[-0.5, 0.5)`.
pub fn wrap_frequency<T: Real>(f: T) -> T {
    let w = f - (f + T::lit(0.5)).floor();
    // rounding can land exactly on +0.5
    if w >= T::lit(0.5) {
        w - T::one()
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    Ideal,
    Measured,
    Predistorted,
    Reconstructed,
}

/// `K` complex samples along the virtual array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalVector<T> {
    pub samples: Vec<Complex<T>>,
    pub kind: SignalKind,
}

impl<T: Real> SignalVector<T> {
    pub fn new(samples: Vec<Complex<T>>, kind: SignalKind) -> Self {
        Self { samples, kind }
    }

    pub fn zeros(len: usize, kind: SignalKind) -> Self {
        Self {
            samples: vec![Complex::new(T::zero(), T::zero()); len],
            kind,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `s^H s`
    pub fn energy(&self) -> T {
        self.samples
            .iter()
            .fold(T::zero(), |acc, s| acc + s.norm_sqr())
    }

    pub fn expect_len(&self, expected: usize) -> Result<()> {
        if self.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: self.len(),
            });
        }
        Ok(())
    }
}

/// Sum of the target sinusoids on `len` channels.
pub fn synthesize<T: Real>(targets: &TargetSet<T>, len: usize) -> Vec<Complex<T>> {
    let mut out = vec![Complex::new(T::zero(), T::zero()); len];
    for (alpha, f) in targets.iter() {
        let w = T::TAU() * f;
        for (k, o) in out.iter_mut().enumerate() {
            *o = *o + alpha * Complex::from_polar(T::one(), w * T::from_usize_lossy(k));
        }
    }
    out
}

pub fn synthesize_ideal<T: Real>(targets: &TargetSet<T>, geom: &ArrayGeometry<T>) -> SignalVector<T> {
    SignalVector::new(synthesize(targets, geom.k()), SignalKind::Ideal)
}

/// Uniform-linear-array mapping `f = (d / lambda) * sin(theta)`.
pub fn angle_to_frequency<T: Real>(theta_deg: T, geom: &ArrayGeometry<T>) -> Result<T> {
    if !(theta_deg.abs() <= T::lit(90.0)) {
        return Err(Error::AngleOutOfRange(theta_deg.to_f64_lossy()));
    }
    Ok(geom.spacing_over_lambda() * theta_deg.to_radians().sin())
}

pub fn frequency_to_angle<T: Real>(freq: T, geom: &ArrayGeometry<T>) -> Result<T> {
    let d = geom.spacing_over_lambda();
    if !(freq.abs() <= d) {
        return Err(Error::UnmappableFrequency {
            freq: freq.to_f64_lossy(),
            spacing: d.to_f64_lossy(),
        });
    }
    Ok((freq / d).min(T::one()).max(-T::one()).asin().to_degrees())
}
