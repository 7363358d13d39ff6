//! Least-squares line fitting and phase unwrapping shared by the imbalance
//! algebra and the estimator's detrend step.

use crate::scalar::Real;

/// Line `z[k] = slope * k + intercept` fitted over abscissae `k = 1..=K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetrendFit<T> {
    pub slope: T,
    pub intercept: T,
}

impl<T: Real> DetrendFit<T> {
    /// Value of the line at zero-based channel `index` (abscissa `index + 1`).
    pub fn at(&self, index: usize) -> T {
        self.slope * T::from_usize_lossy(index + 1) + self.intercept
    }
}

/// Solves the 2x2 normal equations for rows `(k, 1)`, `k = 1..=K`.
///
/// With fewer than two points the slope is zero and the intercept is the
/// single value (or zero).
pub fn fit_line<T: Real>(values: &[T]) -> DetrendFit<T> {
    let n = values.len();
    match n {
        0 => {
            return DetrendFit {
                slope: T::zero(),
                intercept: T::zero(),
            }
        }
        1 => {
            return DetrendFit {
                slope: T::zero(),
                intercept: values[0],
            }
        }
        _ => {}
    }
    let nf = T::from_usize_lossy(n);
    // sum k and sum k^2 over 1..=n in closed form
    let s1 = nf * (nf + T::one()) / T::lit(2.0);
    let s2 = nf * (nf + T::one()) * (T::lit(2.0) * nf + T::one()) / T::lit(6.0);
    let (mut sy, mut sky) = (T::zero(), T::zero());
    for (i, &v) in values.iter().enumerate() {
        let k = T::from_usize_lossy(i + 1);
        sy = sy + v;
        sky = sky + k * v;
    }
    let det = nf * s2 - s1 * s1;
    let slope = (nf * sky - s1 * sy) / det;
    let intercept = (s2 * sy - s1 * sky) / det;
    DetrendFit { slope, intercept }
}

/// Removes the least-squares line; the residual has zero fitted slope and
/// zero mean.
pub fn detrend<T: Real>(values: &[T]) -> (DetrendFit<T>, Vec<T>) {
    let fit = fit_line(values);
    let residual = values
        .iter()
        .enumerate()
        .map(|(i, &v)| v - fit.at(i))
        .collect();
    (fit, residual)
}

/// Sequential unwrap: adds multiples of 2*pi so successive differences lie
/// in (-pi, pi].
pub fn unwrap_phase<T: Real>(phases: &mut [T]) {
    let two_pi = T::TAU();
    let pi = T::PI();
    let mut offset = T::zero();
    for i in 1..phases.len() {
        let raw_prev = phases[i - 1] - offset;
        let raw = phases[i];
        let mut d = raw - raw_prev;
        let mut adj = T::zero();
        while d > pi {
            d = d - two_pi;
            adj = adj - two_pi;
        }
        while d <= -pi {
            d = d + two_pi;
            adj = adj + two_pi;
        }
        offset = offset + adj;
        phases[i] = raw + offset;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_line_is_recovered() {
        let v: Vec<f64> = (1..=12).map(|k| 0.3 * k as f64 - 1.0).collect();
        let fit = fit_line(&v);
        assert!((fit.slope - 0.3).abs() < 1e-12);
        assert!((fit.intercept + 1.0).abs() < 1e-12);
        let (_, r) = detrend(&v);
        assert!(r.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn short_inputs() {
        assert_eq!(fit_line::<f64>(&[]).slope, 0.0);
        let f = fit_line(&[2.5f64]);
        assert_eq!((f.slope, f.intercept), (0.0, 2.5));
    }

    #[test]
    fn unwrap_removes_jumps() {
        let truth: Vec<f64> = (0..20).map(|k| 0.9 * k as f64).collect();
        let mut wrapped: Vec<f64> = truth
            .iter()
            .map(|p| (p.sin()).atan2(p.cos()))
            .collect();
        unwrap_phase(&mut wrapped);
        for (a, b) in wrapped.iter().zip(&truth) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn unwrap_keeps_small_steps() {
        let mut p = vec![0.1f64, -0.2, 0.3, 3.0, -3.0];
        unwrap_phase(&mut p);
        assert!((p[4] - (-3.0 + std::f64::consts::TAU)).abs() < 1e-12);
        assert_eq!(&p[..4], &[0.1, -0.2, 0.3, 3.0]);
    }
}
