//! Splits a VA imbalance estimate into Tx and Rx factors.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::array::ArrayGeometry;
use crate::error::{Error, Result};
use crate::imbalance::complex_to_gpi;
use crate::scalar::Real;

/// Complex Tx and Rx imbalance factors with unit reference elements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TxRxFactors<T> {
    pub xi_t: Vec<Complex<T>>,
    pub xi_r: Vec<Complex<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TxRxGpi<T> {
    pub gamma_t: Vec<T>,
    /// Radians.
    pub phi_t: Vec<T>,
    pub gamma_r: Vec<T>,
    /// Radians.
    pub phi_r: Vec<T>,
}

impl<T: Real> TxRxGpi<T> {
    pub fn from_factors(f: &TxRxFactors<T>) -> Self {
        let (gamma_t, phi_t) = complex_to_gpi(&f.xi_t);
        let (gamma_r, phi_r) = complex_to_gpi(&f.xi_r);
        Self {
            gamma_t,
            phi_t,
            gamma_r,
            phi_r,
        }
    }

    pub fn zeros(k_t: usize, k_r: usize) -> Self {
        Self {
            gamma_t: vec![T::zero(); k_t],
            phi_t: vec![T::zero(); k_t],
            gamma_r: vec![T::zero(); k_r],
            phi_r: vec![T::zero(); k_r],
        }
    }
}

/// Reshapes `xi_hat` column-major into a `k_r x k_t` matrix `M` (so
/// `M[r][t] = xi_hat[t * k_r + r]`), then averages rows normalized by their
/// first element for the Tx factor and columns normalized by their first
/// element for the Rx factor.
pub fn factorize_txrx<T: Real>(xi_hat: &[Complex<T>], geom: &ArrayGeometry<T>) -> Result<TxRxFactors<T>> {
    let (k_t, k_r) = (geom.k_t(), geom.k_r());
    if xi_hat.len() != k_t * k_r {
        return Err(Error::LengthMismatch {
            expected: k_t * k_r,
            actual: xi_hat.len(),
        });
    }
    let m = |r: usize, t: usize| xi_hat[t * k_r + r];
    let zero = Complex::new(T::zero(), T::zero());

    let mut xi_t = vec![zero; k_t];
    for r in 0..k_r {
        let head = m(r, 0);
        for (t, acc) in xi_t.iter_mut().enumerate() {
            *acc = *acc + m(r, t) / head;
        }
    }
    let inv_r = T::one() / T::from_usize_lossy(k_r);
    xi_t.iter_mut().for_each(|v| *v = *v * inv_r);

    let mut xi_r = vec![zero; k_r];
    for t in 0..k_t {
        let head = m(0, t);
        for (r, acc) in xi_r.iter_mut().enumerate() {
            *acc = *acc + m(r, t) / head;
        }
    }
    let inv_t = T::one() / T::from_usize_lossy(k_t);
    xi_r.iter_mut().for_each(|v| *v = *v * inv_t);

    Ok(TxRxFactors { xi_t, xi_r })
}

/// Tx and Rx gains/phases of the averaged factors.
pub fn estimate_txrx_gpi<T: Real>(xi_hat: &[Complex<T>], geom: &ArrayGeometry<T>) -> Result<TxRxGpi<T>> {
    factorize_txrx(xi_hat, geom).map(|f| TxRxGpi::from_factors(&f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imbalance::factor_to_va;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn all_ones_has_zero_gpi() {
        let g = ArrayGeometry::<f64>::automotive_3x4();
        let gpi = estimate_txrx_gpi(&[c(1.0, 0.0); 12], &g).unwrap();
        assert!(gpi
            .gamma_t
            .iter()
            .chain(&gpi.phi_t)
            .chain(&gpi.gamma_r)
            .chain(&gpi.phi_r)
            .all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn round_trip_two_by_two() {
        let g = ArrayGeometry::new(2, 2, 0.5).unwrap();
        let xi_t = vec![c(1.0, 0.0), Complex::from_polar(1.0, std::f64::consts::PI / 6.0)];
        let xi_r = vec![c(1.0, 0.0), c(1.0, 0.1)];
        let f = factorize_txrx(&factor_to_va(&xi_t, &xi_r).unwrap(), &g).unwrap();
        for (a, b) in f.xi_t.iter().zip(&xi_t).chain(f.xi_r.iter().zip(&xi_r)) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn shape_error() {
        let g = ArrayGeometry::<f64>::automotive_3x4();
        assert!(matches!(
            estimate_txrx_gpi(&[c(1.0, 0.0); 11], &g),
            Err(Error::LengthMismatch { expected: 12, actual: 11 })
        ));
    }
}
