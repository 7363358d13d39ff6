//! Estimates the undistorted signal vector from a measured one.
//!
//! Predistortion divides by the current imbalance estimate, CLEAN pulls
//! out sinusoids one peak at a time from a zero-padded FFT, and the
//! extracted parameters are re-synthesized on the array.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::array::{synthesize, ArrayGeometry, SignalKind, SignalVector, TargetSet};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Imbalance estimates below this magnitude cannot be inverted.
pub const CALIBRATION_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CleanConfig<T> {
    /// FFT length `N`, a power of two no shorter than the array.
    pub fft_len: usize,
    /// Stop once a new peak falls this many dB below the first one.
    pub stop_ratio_db: T,
    /// Hard cap on extracted sinusoids.
    pub max_targets: usize,
}

impl<T: Real> Default for CleanConfig<T> {
    fn default() -> Self {
        Self {
            fft_len: 1024,
            stop_ratio_db: T::lit(-15.0),
            max_targets: 10,
        }
    }
}

impl<T: Real> CleanConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.fft_len == 0 || !self.fft_len.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "fft_len must be a power of two, got {}",
                self.fft_len
            )));
        }
        if !(self.stop_ratio_db < T::zero()) {
            return Err(Error::InvalidConfig(format!(
                "stop_ratio_db must be negative, got {}",
                self.stop_ratio_db
            )));
        }
        if self.max_targets == 0 {
            return Err(Error::InvalidConfig("max_targets must be at least 1".into()));
        }
        Ok(())
    }

    /// Linear amplitude ratio `10^(P/20)`.
    pub fn stop_ratio(&self) -> T {
        T::lit(10.0).powf(self.stop_ratio_db / T::lit(20.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult<T> {
    pub estimated_targets: TargetSet<T>,
    pub reconstructed: SignalVector<T>,
    pub predistorted: SignalVector<T>,
}

/// CLEAN output with the residual power after each extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanTrace<T> {
    pub targets: TargetSet<T>,
    /// Residual power before the first pass followed by one entry per
    /// subtraction (including the one that triggered termination).
    pub residual_power: Vec<T>,
}

/// `x[k] / xi_hat[k]`.
pub fn predistort<T: Real>(x: &SignalVector<T>, xi_hat: &[Complex<T>]) -> Result<SignalVector<T>> {
    x.expect_len(xi_hat.len())?;
    check_invertible(xi_hat)?;
    let samples = x.samples.iter().zip(xi_hat).map(|(v, e)| v / e).collect();
    Ok(SignalVector::new(samples, SignalKind::Predistorted))
}

pub(crate) fn check_invertible<T: Real>(v: &[Complex<T>]) -> Result<()> {
    for (index, e) in v.iter().enumerate() {
        let magnitude = e.norm();
        if !(magnitude >= T::lit(CALIBRATION_FLOOR)) {
            return Err(Error::DegenerateCalibration {
                index,
                magnitude: magnitude.to_f64_lossy(),
            });
        }
    }
    Ok(())
}

/// Reusable CLEAN engine holding a planned FFT and scratch buffers. One per
/// worker; it is not shared across threads.
pub struct Reconstructor<T: Real> {
    cfg: CleanConfig<T>,
    fft: Arc<dyn Fft<T>>,
    buf: Vec<Complex<T>>,
    scratch: Vec<Complex<T>>,
    residual: Vec<Complex<T>>,
}

impl<T: Real> fmt::Debug for Reconstructor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Reconstructor").field("cfg", &self.cfg).finish()
    }
}

impl<T: Real> Clone for Reconstructor<T> {
    fn clone(&self) -> Self {
        Self::new(self.cfg).expect("validated config")
    }
}

impl<T: Real> Reconstructor<T> {
    pub fn new(cfg: CleanConfig<T>) -> Result<Self> {
        cfg.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_len);
        let zero = Complex::new(T::zero(), T::zero());
        Ok(Self {
            scratch: vec![zero; fft.get_inplace_scratch_len()],
            buf: vec![zero; cfg.fft_len],
            residual: Vec::new(),
            fft,
            cfg,
        })
    }

    pub fn config(&self) -> &CleanConfig<T> {
        &self.cfg
    }

    /// Zero-padded FFT of `x` into `self.buf`.
    fn spectrum(&mut self, x: &[Complex<T>]) {
        let zero = Complex::new(T::zero(), T::zero());
        self.buf[..x.len()].copy_from_slice(x);
        self.buf[x.len()..].fill(zero);
        self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
    }

    /// Strongest bin in fftshift order; the lowest shifted index wins ties.
    /// Returns `(bin value, frequency)`.
    fn peak(&self) -> (Complex<T>, T) {
        let n = self.cfg.fft_len;
        let half = n / 2;
        let mut best = (0usize, T::neg_infinity());
        // shifted order: negative frequencies first
        let (neg, pos) = self.buf.split_at(half);
        for (l, v) in pos.iter().chain(neg).enumerate() {
            let p = v.norm_sqr();
            if p > best.1 {
                best = (l, p);
            }
        }
        let l = best.0;
        let f = T::lit(-0.5) + T::from_usize_lossy(l) / T::from_usize_lossy(n);
        (self.buf[(l + half) % n], f)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len == 0 || len > self.cfg.fft_len {
            return Err(Error::InvalidConfig(format!(
                "signal length {len} must be in 1..={}",
                self.cfg.fft_len
            )));
        }
        Ok(())
    }

    /// CLEAN parameter estimation on a predistorted vector.
    pub fn clean(&mut self, x_pd: &[Complex<T>]) -> Result<TargetSet<T>> {
        self.clean_inner(x_pd, None)
    }

    pub fn clean_with_trace(&mut self, x_pd: &[Complex<T>]) -> Result<CleanTrace<T>> {
        let mut powers = Vec::new();
        let targets = self.clean_inner(x_pd, Some(&mut powers))?;
        Ok(CleanTrace {
            targets,
            residual_power: powers,
        })
    }

    fn clean_inner(&mut self, x_pd: &[Complex<T>], mut trace: Option<&mut Vec<T>>) -> Result<TargetSet<T>> {
        self.check_len(x_pd.len())?;
        let k = x_pd.len();
        let kf = T::from_usize_lossy(k);
        let stop = self.cfg.stop_ratio();
        let mut residual = std::mem::take(&mut self.residual);
        residual.clear();
        residual.extend_from_slice(x_pd);
        let power = |r: &[Complex<T>]| r.iter().fold(T::zero(), |a, v| a + v.norm_sqr());
        if let Some(t) = trace.as_deref_mut() {
            t.push(power(&residual));
        }

        let mut targets = TargetSet::empty();
        let mut first_mag = T::zero();
        while targets.q() < self.cfg.max_targets {
            self.spectrum(&residual);
            let (y, f) = self.peak();
            let alpha = y / kf;
            let mag = alpha.norm();
            if targets.is_empty() && mag == T::zero() {
                break;
            }
            let w = T::TAU() * f;
            for (i, r) in residual.iter_mut().enumerate() {
                *r = *r - alpha * Complex::from_polar(T::one(), w * T::from_usize_lossy(i));
            }
            if let Some(t) = trace.as_deref_mut() {
                t.push(power(&residual));
            }
            if !targets.is_empty() && mag / first_mag < stop {
                break;
            }
            if targets.is_empty() {
                first_mag = mag;
            }
            targets.push(alpha, f)?;
        }
        self.residual = residual;
        Ok(targets)
    }

    /// Non-iterative baseline: every local maximum of a single FFT within
    /// the stop ratio of the strongest bin, amplitudes read off directly.
    pub fn fft_peak_pick(&mut self, x_pd: &[Complex<T>]) -> Result<TargetSet<T>> {
        self.check_len(x_pd.len())?;
        let kf = T::from_usize_lossy(x_pd.len());
        self.spectrum(x_pd);
        let n = self.cfg.fft_len;
        let half = n / 2;
        let mag: Vec<T> = (0..n).map(|l| self.buf[(l + half) % n].norm()).collect();
        let max = mag.iter().copied().fold(T::zero(), T::max);
        if max == T::zero() {
            return Ok(TargetSet::empty());
        }
        let thr = max * self.cfg.stop_ratio();
        let mut peaks: Vec<usize> = (0..n)
            .filter(|&l| {
                let (prev, next) = (mag[(l + n - 1) % n], mag[(l + 1) % n]);
                mag[l] >= thr && mag[l] > prev && mag[l] >= next
            })
            .collect();
        peaks.sort_by(|&a, &b| mag[b].partial_cmp(&mag[a]).unwrap_or(std::cmp::Ordering::Equal));
        peaks.truncate(self.cfg.max_targets);
        let mut out = TargetSet::empty();
        for l in peaks {
            let f = T::lit(-0.5) + T::from_usize_lossy(l) / T::from_usize_lossy(n);
            out.push(self.buf[(l + half) % n] / kf, f)?;
        }
        Ok(out)
    }

    /// Predistort with `xi_hat`, run CLEAN and re-synthesize.
    pub fn reconstruct(&mut self, x: &SignalVector<T>, xi_hat: &[Complex<T>]) -> Result<ReconstructionResult<T>> {
        let predistorted = predistort(x, xi_hat)?;
        self.finish(predistorted)
    }

    /// Same as [`Reconstructor::reconstruct`] but multiplies by a
    /// calibration vector `c = 1 / xi_hat` that is already inverted.
    pub fn reconstruct_calibrated(
        &mut self,
        x: &SignalVector<T>,
        calibration: &[Complex<T>],
    ) -> Result<ReconstructionResult<T>> {
        x.expect_len(calibration.len())?;
        let samples = x.samples.iter().zip(calibration).map(|(v, c)| v * c).collect();
        self.finish(SignalVector::new(samples, SignalKind::Predistorted))
    }

    fn finish(&mut self, predistorted: SignalVector<T>) -> Result<ReconstructionResult<T>> {
        let estimated_targets = self.clean(&predistorted.samples)?;
        let reconstructed = SignalVector::new(
            synthesize(&estimated_targets, predistorted.len()),
            SignalKind::Reconstructed,
        );
        Ok(ReconstructionResult {
            estimated_targets,
            reconstructed,
            predistorted,
        })
    }
}

/// One-shot CLEAN; plans a fresh FFT on every call.
pub fn clean_estimate<T: Real>(x_pd: &SignalVector<T>, cfg: &CleanConfig<T>) -> Result<TargetSet<T>> {
    Reconstructor::new(*cfg)?.clean(&x_pd.samples)
}

/// One-shot predistort, CLEAN and integrate.
pub fn reconstruct<T: Real>(
    x: &SignalVector<T>,
    xi_hat: &[Complex<T>],
    cfg: &CleanConfig<T>,
    geom: &ArrayGeometry<T>,
) -> Result<ReconstructionResult<T>> {
    x.expect_len(geom.k())?;
    Reconstructor::new(*cfg)?.reconstruct(x, xi_hat)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn sig(v: Vec<Complex<f64>>) -> SignalVector<f64> {
        SignalVector::new(v, SignalKind::Measured)
    }

    #[test]
    fn predistort_identity_and_division() {
        let x = sig(vec![c(1.0, 2.0), c(-0.5, 0.1)]);
        let y = predistort(&x, &[c(1.0, 0.0); 2]).unwrap();
        assert_eq!(y.samples, x.samples);
        assert_eq!(y.kind, SignalKind::Predistorted);

        let ones = sig(vec![c(1.0, 0.0); 12]);
        let y = predistort(&ones, &[c(0.0, 2.0); 12]).unwrap();
        assert!(y.samples.iter().all(|v| (*v - c(0.0, -0.5)).norm() < 1e-15));
    }

    #[test]
    fn predistort_rejects_tiny_estimates() {
        let x = sig(vec![c(1.0, 0.0); 3]);
        let err = predistort(&x, &[c(1.0, 0.0), c(1e-7, 0.0), c(1.0, 0.0)]).unwrap_err();
        assert!(matches!(err, Error::DegenerateCalibration { index: 1, .. }));
        assert!(matches!(
            predistort(&x, &[c(1.0, 0.0); 2]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn on_grid_single_target_is_exact() {
        let t = TargetSet::new(vec![c(1.0, 0.0)], vec![64.0 / 1024.0]).unwrap();
        let x = synthesize(&t, 12);
        let est = Reconstructor::new(CleanConfig::default()).unwrap().clean(&x).unwrap();
        assert_eq!(est.q(), 1);
        assert_eq!(est.frequencies()[0], 0.0625);
        assert!((est.amplitudes()[0] - c(1.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn zero_input_gives_no_targets() {
        let mut r = Reconstructor::<f64>::new(CleanConfig::default()).unwrap();
        assert_eq!(r.clean(&[c(0.0, 0.0); 12]).unwrap().q(), 0);
        let out = r.reconstruct(&sig(vec![c(0.0, 0.0); 12]), &[c(1.0, 0.0); 12]).unwrap();
        assert!(out.reconstructed.samples.iter().all(|v| v.norm() == 0.0));
        assert_eq!(out.reconstructed.kind, SignalKind::Reconstructed);
    }

    #[test]
    fn lowest_bin_wins_ties() {
        // equal on-grid tones at -0.25 and +0.25 with equal amplitude
        let t = TargetSet::new(vec![c(1.0, 0.0), c(1.0, 0.0)], vec![-0.25, 0.25]).unwrap();
        let x = synthesize(&t, 8);
        let est = Reconstructor::new(CleanConfig::default()).unwrap().clean(&x).unwrap();
        assert_eq!(est.frequencies()[0], -0.25);
    }

    #[test]
    fn max_targets_caps_iterations() {
        let cfg = CleanConfig {
            max_targets: 2,
            ..CleanConfig::default()
        };
        let t = TargetSet::new(
            vec![c(1.0, 0.0), c(0.9, 0.0), c(0.8, 0.0)],
            vec![-0.25, 0.0, 0.25],
        )
        .unwrap();
        let est = Reconstructor::new(cfg).unwrap().clean(&synthesize(&t, 12)).unwrap();
        assert_eq!(est.q(), 2);
    }

    #[test]
    fn config_validation() {
        let bad = [
            CleanConfig { fft_len: 1000, ..CleanConfig::<f64>::default() },
            CleanConfig { stop_ratio_db: 0.0, ..CleanConfig::default() },
            CleanConfig { max_targets: 0, ..CleanConfig::default() },
        ];
        for cfg in bad {
            assert!(Reconstructor::new(cfg).is_err());
        }
        let mut r = Reconstructor::<f64>::new(CleanConfig { fft_len: 8, ..CleanConfig::default() }).unwrap();
        assert!(r.clean(&[c(1.0, 0.0); 12]).is_err());
    }

    #[test]
    fn f32_path_runs() {
        let t = TargetSet::new(vec![Complex::new(1.0f32, 0.0)], vec![0.125f32]).unwrap();
        let x = synthesize(&t, 12);
        let est = Reconstructor::<f32>::new(CleanConfig::default()).unwrap().clean(&x).unwrap();
        assert_eq!(est.q(), 1);
        assert_eq!(est.frequencies()[0], 0.125);
        assert!((est.amplitudes()[0].re - 1.0).abs() < 1e-5);
    }
}
