//! Channel imbalance algebra and the measured-signal model `x = psi . s + n`.

use num_complex::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::array::{SignalKind, SignalVector};
use crate::error::{Error, Result};
use crate::lsfit;
use crate::scalar::Real;

const REFERENCE_TOL: f64 = 1e-9;

/// Complex offsets of every VA channel together with their normalized,
/// Tx/Rx-factored and gain/phase (GPI) views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceProfile<T> {
    /// Absolute complex gain per VA channel.
    pub psi: Vec<Complex<T>>,
    /// `psi / psi[0]`
    pub xi: Vec<Complex<T>>,
    pub xi_t: Vec<Complex<T>>,
    pub xi_r: Vec<Complex<T>>,
    pub gamma: Vec<T>,
    /// Unwrapped phase of `xi`, radians.
    pub phi: Vec<T>,
    /// Least-squares slope of `phi`, cycles per element.
    pub f_delta: T,
}

impl<T: Real> ImbalanceProfile<T> {
    /// Builds the VA profile `xi = xi_t (x) xi_r` with `psi = xi`.
    pub fn from_factors(xi_t: Vec<Complex<T>>, xi_r: Vec<Complex<T>>) -> Result<Self> {
        let xi = factor_to_va(&xi_t, &xi_r)?;
        Ok(Self::assemble(xi.clone(), xi, xi_t, xi_r))
    }

    /// Factors given as gains and phases (radians) per Tx and Rx channel.
    /// Index 0 of each side must be `(0, 0)`.
    pub fn from_txrx_gpi(gamma_t: &[T], phi_t: &[T], gamma_r: &[T], phi_r: &[T]) -> Result<Self> {
        if gamma_t.len() != phi_t.len() {
            return Err(Error::LengthMismatch {
                expected: gamma_t.len(),
                actual: phi_t.len(),
            });
        }
        if gamma_r.len() != phi_r.len() {
            return Err(Error::LengthMismatch {
                expected: gamma_r.len(),
                actual: phi_r.len(),
            });
        }
        Self::from_factors(gpi_to_complex(gamma_t, phi_t), gpi_to_complex(gamma_r, phi_r))
    }

    /// No imbalance on any of the `k_t * k_r` channels.
    pub fn identity(k_t: usize, k_r: usize) -> Self {
        let one = Complex::new(T::one(), T::zero());
        Self::from_factors(vec![one; k_t], vec![one; k_r]).expect("unit factors")
    }

    /// Same imbalances behind a common complex gain, `psi = gain * xi`.
    pub fn with_common_gain(mut self, gain: Complex<T>) -> Self {
        self.psi = self.xi.iter().map(|x| x * gain).collect();
        self
    }

    pub fn k(&self) -> usize {
        self.xi.len()
    }

    /// Removes the linear phase progression.
    ///
    /// The ramp is anchored at channel 0 so the reference stays at unity,
    /// and because VA channel `k = t * k_r + r` the ramp splits exactly into
    /// a per-Rx slope and a `k_r`-times steeper per-Tx slope: the result is
    /// still a Kronecker product of unit-reference factors.
    pub fn detrended(&self) -> Self {
        let slope = lsfit::fit_line(&self.phi).slope;
        let k_r = self.xi_r.len();
        let ramp = |v: &[Complex<T>], step: T| -> Vec<Complex<T>> {
            v.iter()
                .enumerate()
                .map(|(i, x)| x * Complex::from_polar(T::one(), -step * T::from_usize_lossy(i)))
                .collect()
        };
        let xi = ramp(&self.xi, slope);
        let psi = ramp(&self.psi, slope);
        let xi_t = ramp(&self.xi_t, slope * T::from_usize_lossy(k_r));
        let xi_r = ramp(&self.xi_r, slope);
        Self::assemble(psi, xi, xi_t, xi_r)
    }

    /// Adds a phase offset (radians) to Rx channel `rx`, e.g. a solder-ball
    /// break. Affects every VA channel fed by that receiver.
    pub fn with_rx_phase_offset(&self, rx: usize, radians: T) -> Result<Self> {
        if rx == 0 || rx >= self.xi_r.len() {
            return Err(Error::InvalidConfig(format!(
                "rx offset index {rx} must be a non-reference channel below {}",
                self.xi_r.len()
            )));
        }
        let rot = Complex::from_polar(T::one(), radians);
        let k_r = self.xi_r.len();
        let mut xi_r = self.xi_r.clone();
        xi_r[rx] = xi_r[rx] * rot;
        let apply = |v: &[Complex<T>]| -> Vec<Complex<T>> {
            v.iter()
                .enumerate()
                .map(|(k, x)| if k % k_r == rx { x * rot } else { *x })
                .collect()
        };
        Ok(Self::assemble(
            apply(&self.psi),
            apply(&self.xi),
            self.xi_t.clone(),
            xi_r,
        ))
    }

    fn assemble(
        psi: Vec<Complex<T>>,
        xi: Vec<Complex<T>>,
        xi_t: Vec<Complex<T>>,
        xi_r: Vec<Complex<T>>,
    ) -> Self {
        let (gamma, mut phi) = complex_to_gpi(&xi);
        lsfit::unwrap_phase(&mut phi);
        let f_delta = lsfit::fit_line(&phi).slope / T::TAU();
        Self {
            psi,
            xi,
            xi_t,
            xi_r,
            gamma,
            phi,
            f_delta,
        }
    }
}

/// `(1 + gamma) * exp(j phi)` element-wise.
pub fn gpi_to_complex<T: Real>(gamma: &[T], phi: &[T]) -> Vec<Complex<T>> {
    gamma
        .iter()
        .zip(phi)
        .map(|(&g, &p)| Complex::from_polar(T::one() + g, p))
        .collect()
}

/// Inverse of [`gpi_to_complex`]; phases are wrapped to (-pi, pi].
pub fn complex_to_gpi<T: Real>(xi: &[Complex<T>]) -> (Vec<T>, Vec<T>) {
    xi.iter().map(|x| (x.norm() - T::one(), x.arg())).unzip()
}

/// Kronecker product `xi_t (x) xi_r` with the Rx index varying fastest.
pub fn factor_to_va<T: Real>(xi_t: &[Complex<T>], xi_r: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
    for (name, v) in [("xi_t", xi_t), ("xi_r", xi_r)] {
        match v.first() {
            None => return Err(Error::InvalidReference(format!("{name} is empty"))),
            Some(r) if (r - Complex::new(T::one(), T::zero())).norm() > T::lit(REFERENCE_TOL) => {
                return Err(Error::InvalidReference(format!("{name}[0] = {r}")))
            }
            _ => {}
        }
    }
    Ok(xi_t
        .iter()
        .flat_map(|t| xi_r.iter().map(move |r| t * r))
        .collect())
}

/// Splits unwrapped phases into a least-squares line (slope returned in
/// cycles per element) and the residual.
pub fn split_linear_phase<T: Real>(phi: &[T]) -> (T, Vec<T>) {
    let (fit, residual) = lsfit::detrend(phi);
    (fit.slope / T::TAU(), residual)
}

/// Additive receiver noise. The SNR is the power of the dominant target
/// per element over the per-element noise variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel<T> {
    pub snr_db: T,
    pub enabled: bool,
}

impl<T: Real> NoiseModel<T> {
    pub fn new(snr_db: T) -> Result<Self> {
        if !snr_db.is_finite() {
            return Err(Error::InvalidConfig(format!("snr_db must be finite, got {snr_db}")));
        }
        Ok(Self {
            snr_db,
            enabled: true,
        })
    }

    pub fn disabled() -> Self {
        Self {
            snr_db: T::infinity(),
            enabled: false,
        }
    }

    /// Per-element complex noise variance for a dominant amplitude.
    pub fn variance(&self, dominant_amplitude: T) -> T {
        if !self.enabled {
            return T::zero();
        }
        dominant_amplitude * dominant_amplitude / T::lit(10.0).powf(self.snr_db / T::lit(10.0))
    }
}

/// `x[k] = psi[k] * ideal[k] + n[k]` with circularly-symmetric complex
/// Gaussian noise scaled from `dominant_amplitude`.
pub fn apply_imbalance<T: Real, R: Rng + ?Sized>(
    ideal: &SignalVector<T>,
    profile: &ImbalanceProfile<T>,
    noise: &NoiseModel<T>,
    dominant_amplitude: T,
    rng: &mut R,
) -> Result<SignalVector<T>> {
    ideal.expect_len(profile.k())?;
    let var = noise.variance(dominant_amplitude);
    let sigma = (var / T::lit(2.0)).sqrt().to_f64_lossy();
    let samples = ideal
        .samples
        .iter()
        .zip(&profile.psi)
        .map(|(s, p)| {
            let clean = p * s;
            if noise.enabled && sigma > 0.0 {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                clean + Complex::new(T::lit(re * sigma), T::lit(im * sigma))
            } else {
                clean
            }
        })
        .collect();
    Ok(SignalVector::new(samples, SignalKind::Measured))
}
