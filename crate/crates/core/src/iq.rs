use num_complex::Complex;

use crate::error::{Error, Result};
use crate::num::Real;

/// Complex baseband samples tagged with their sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct IqBuffer<T> {
    samples: Vec<Complex<T>>,
    sample_rate: f64,
}

impl<T: Real> IqBuffer<T> {
    /// Wraps `samples`, rejecting non-finite values and a non-positive rate.
    pub fn new(samples: Vec<Complex<T>>, sample_rate: f64) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::Domain(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        if let Some(i) = samples
            .iter()
            .position(|s| !(s.re.is_finite() && s.im.is_finite()))
        {
            return Err(Error::Domain(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    /// Internal constructor for outputs that are finite by construction.
    pub(crate) fn from_parts(samples: Vec<Complex<T>>, sample_rate: f64) -> Self {
        debug_assert!(samples.iter().all(|s| s.re.is_finite() && s.im.is_finite()));
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn zeros(len: usize, sample_rate: f64) -> Self {
        Self::from_parts(vec![Complex::new(T::zero(), T::zero()); len], sample_rate)
    }

    pub fn samples(&self) -> &[Complex<T>] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex<T>> {
        self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean of `|s|²` over the buffer; zero for an empty buffer.
    pub fn mean_power(&self) -> T {
        if self.samples.is_empty() {
            return T::zero();
        }
        let total: T = self.samples.iter().map(|s| s.norm_sqr()).sum();
        total / T::of(self.samples.len() as f64)
    }

    /// Multiplies every sample by `k`.
    pub fn scaled(&self, k: Complex<T>) -> Self {
        Self::from_parts(
            self.samples.iter().map(|&s| s * k).collect(),
            self.sample_rate,
        )
    }

    /// Converts the sample type, e.g. `f64` to `f32` for storage.
    pub fn cast<U: Real>(&self) -> IqBuffer<U> {
        IqBuffer::from_parts(
            self.samples
                .iter()
                .map(|s| Complex::new(U::of(s.re.as_f64()), U::of(s.im.as_f64())))
                .collect(),
            self.sample_rate,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        let bad = vec![Complex::new(0.0, f64::NAN)];
        assert!(matches!(IqBuffer::new(bad, 1.0), Err(Error::Domain(_))));
        let inf = vec![Complex::new(f32::INFINITY, 0.0)];
        assert!(IqBuffer::new(inf, 1.0).is_err());
        assert!(IqBuffer::<f64>::new(vec![], 0.0).is_err());
    }

    #[test]
    fn power_of_unit_phasors() {
        let b = IqBuffer::new(vec![Complex::new(0.6, 0.8), Complex::new(0.0, -1.0)], 1.0).unwrap();
        assert!((b.mean_power() - 1.0f64).abs() < 1e-15);
        assert_eq!(IqBuffer::<f64>::zeros(0, 1.0).mean_power(), 0.0);
    }
}
