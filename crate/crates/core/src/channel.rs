//! Propagation model from the transmit array to a single receive antenna,
//! plus receiver front-end impairments.
//!
//! `r = α·aᵀ(θ)·ψ + w`, followed by an integer delay, a DC offset and an
//! IQ gain/phase imbalance.

use std::f64::consts::TAU;

use num_complex::{Complex, Complex64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::iq::IqBuffer;
use crate::num::Real;

/// How the complex channel gain evolves over a capture.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum FadingMode {
    /// `α` is used as given for every sample.
    #[default]
    Fixed,
    /// Every `block_len` transmit samples (one PRI) the gain is redrawn as
    /// `α·g` with `g ~ CN(0, 1)`.
    RayleighBlock { block_len: usize },
}

/// Channel and front-end parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelState {
    pub alpha: Complex64,
    /// Direction of the receiver seen from the array, radians.
    pub theta: f64,
    /// Complex noise variance per sample, split equally between I and Q.
    pub noise_variance: f64,
    /// Leading samples inserted before the signal.
    pub delay: usize,
    pub dc_offset: Complex64,
    /// Quadrature-path gain; 1 is ideal.
    pub iq_gain: f64,
    /// Quadrature-path phase skew, radians; 0 is ideal.
    pub iq_phase: f64,
    pub fading: FadingMode,
}

impl Default for ChannelState {
    fn default() -> Self {
        Self {
            alpha: Complex64::new(1.0, 0.0),
            theta: 0.0,
            noise_variance: 0.0,
            delay: 0,
            dc_offset: Complex64::new(0.0, 0.0),
            iq_gain: 1.0,
            iq_phase: 0.0,
            fading: FadingMode::Fixed,
        }
    }
}

impl ChannelState {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_variance.is_finite() && self.noise_variance >= 0.0) {
            return Err(Error::Domain(format!(
                "noise variance must be finite and nonnegative, got {}",
                self.noise_variance
            )));
        }
        if !(self.iq_gain.is_finite() && self.iq_gain > 0.0) {
            return Err(Error::Domain(format!(
                "IQ gain must be positive, got {}",
                self.iq_gain
            )));
        }
        if self.iq_phase.is_nan() || self.iq_phase.abs() >= std::f64::consts::FRAC_PI_2 {
            return Err(Error::Domain(format!(
                "IQ phase skew must lie in (-π/2, π/2), got {}",
                self.iq_phase
            )));
        }
        let finite = |c: Complex64| c.re.is_finite() && c.im.is_finite();
        if !finite(self.alpha) || !finite(self.dc_offset) || !self.theta.is_finite() {
            return Err(Error::Domain("channel parameters must be finite".into()));
        }
        if let FadingMode::RayleighBlock { block_len: 0 } = self.fading {
            return Err(Error::Domain("fading block length must be positive".into()));
        }
        Ok(())
    }

    pub fn has_impairments(&self) -> bool {
        self.delay != 0
            || self.dc_offset != Complex64::new(0.0, 0.0)
            || self.iq_gain != 1.0
            || self.iq_phase != 0.0
    }
}

/// Array response `a(θ)`; entry `m` is `exp(−j2π·d_m·sin θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector<T> {
    entries: Vec<Complex<T>>,
}

impl<T: Real> SteeringVector<T> {
    pub fn entries(&self) -> &[Complex<T>] {
        &self.entries
    }
}

pub fn steering_vector<T: Real>(theta: f64, positions: &[f64]) -> SteeringVector<T> {
    let s = theta.sin();
    SteeringVector {
        entries: positions.iter().map(|d| T::cis(-TAU * d * s)).collect(),
    }
}

/// Noise variance that puts `target_snr` (linear) on a signal of mean power
/// `signal_power`.
pub fn calibrate_noise_for_snr(signal_power: f64, target_snr: f64) -> Result<f64> {
    if !(signal_power > 0.0 && signal_power.is_finite()) {
        return Err(Error::Domain(format!(
            "signal power must be positive, got {signal_power}"
        )));
    }
    if target_snr.is_nan() || target_snr <= 0.0 {
        return Err(Error::Domain(format!(
            "target SNR must be positive, got {target_snr}"
        )));
    }
    Ok(signal_power / target_snr)
}

/// Adds circularly symmetric white Gaussian noise of complex variance
/// `variance` in place.
pub fn add_awgn<T: Real, R: Rng + ?Sized>(samples: &mut [Complex<T>], variance: f64, rng: &mut R) {
    if variance == 0.0 {
        return;
    }
    let sigma = (variance / 2.0).sqrt();
    for s in samples {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *s = *s + Complex::new(T::of(sigma * re), T::of(sigma * im));
    }
}

/// Front-end IQ imbalance: I passes through, Q becomes
/// `g·(Q·cos φ + I·sin φ)`.
pub fn apply_iq_imbalance<T: Real>(samples: &mut [Complex<T>], gain: f64, phase: f64) {
    if gain == 1.0 && phase == 0.0 {
        return;
    }
    let (s, c) = phase.sin_cos();
    let (gs, gc) = (T::of(gain * s), T::of(gain * c));
    for x in samples {
        *x = Complex::new(x.re, gc * x.im + gs * x.re);
    }
}

/// Combines the antenna streams through the channel.
///
/// Output length is `delay + tx length`. Processing order: steering sum and
/// channel gain, delay, additive noise (over the whole output, delay prefix
/// included), DC offset, IQ imbalance. Deterministic for a given `seed`.
pub fn apply_channel<T: Real>(
    tx: &[IqBuffer<T>],
    positions: &[f64],
    state: &ChannelState,
    seed: u64,
) -> Result<IqBuffer<T>> {
    state.validate()?;
    let first = tx
        .first()
        .ok_or_else(|| Error::Dimension("no transmit buffers".into()))?;
    if positions.len() != tx.len() {
        return Err(Error::Dimension(format!(
            "{} element positions for {} antenna streams",
            positions.len(),
            tx.len()
        )));
    }
    let len = first.len();
    let fs = first.sample_rate();
    if let Some(b) = tx.iter().find(|b| b.len() != len || b.sample_rate() != fs) {
        return Err(Error::Dimension(format!(
            "antenna streams disagree: {} samples at {} Hz vs {} samples at {} Hz",
            len,
            fs,
            b.len(),
            b.sample_rate()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gains: Vec<Complex<T>> = match state.fading {
        FadingMode::Fixed => vec![to_t(state.alpha)],
        FadingMode::RayleighBlock { block_len } => {
            let blocks = len.div_ceil(block_len).max(1);
            (0..blocks)
                .map(|_| {
                    let g = Complex64::new(
                        rng.sample::<f64, _>(StandardNormal),
                        rng.sample::<f64, _>(StandardNormal),
                    ) * std::f64::consts::FRAC_1_SQRT_2;
                    to_t(state.alpha * g)
                })
                .collect()
        }
    };
    let block_len = match state.fading {
        FadingMode::Fixed => usize::MAX,
        FadingMode::RayleighBlock { block_len } => block_len,
    };

    let steering = steering_vector::<T>(state.theta, positions);
    let zero = Complex::new(T::zero(), T::zero());
    let mut out = vec![zero; state.delay + len];
    for (k, dst) in out[state.delay..].iter_mut().enumerate() {
        let combined = if tx.len() == 1 {
            tx[0].samples()[k] * steering.entries[0]
        } else {
            tx.iter()
                .zip(&steering.entries)
                .fold(zero, |acc, (b, &a)| acc + b.samples()[k] * a)
        };
        *dst = gains[k / block_len] * combined;
    }
    add_awgn(&mut out, state.noise_variance, &mut rng);
    if state.dc_offset != Complex64::new(0.0, 0.0) {
        let dc = to_t(state.dc_offset);
        out.iter_mut().for_each(|s| *s = *s + dc);
    }
    apply_iq_imbalance(&mut out, state.iq_gain, state.iq_phase);
    Ok(IqBuffer::from_parts(out, fs))
}

fn to_t<T: Real>(c: Complex64) -> Complex<T> {
    Complex::new(T::of(c.re), T::of(c.im))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::db_to_linear;
    use crate::waveform::{synthesize_train, FhCodeMatrix, Modulation, WaveformParams};
    use proptest::prelude::*;
    use rand::Rng;
    use std::f64::consts::PI;

    fn random_buffer(len: usize, seed: u64) -> IqBuffer<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = (0..len)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        IqBuffer::new(s, 1.0).unwrap()
    }

    #[test]
    fn steering_examples() {
        let a = steering_vector::<f64>(0.0, &[0.0, 0.5, 1.7]);
        assert!(a.entries().iter().all(|&e| e == Complex64::new(1.0, 0.0)));

        let a = steering_vector::<f64>(PI / 6.0, &[0.0, 0.5]);
        assert_eq!(a.entries()[0], Complex64::new(1.0, 0.0));
        assert!((a.entries()[1] - Complex64::new(0.0, -1.0)).norm() < 1e-12);

        let t = 0.37;
        let x = steering_vector::<f64>(t, &[0.0, 0.5, 1.0, 2.25]);
        let y = steering_vector::<f64>(PI - t, &[0.0, 0.5, 1.0, 2.25]);
        for (p, q) in x.entries().iter().zip(y.entries()) {
            assert!((p - q).norm() < 1e-12);
            assert!((p.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_channel() {
        let tx = random_buffer(500, 1);
        let rx = apply_channel(
            std::slice::from_ref(&tx),
            &[0.0],
            &ChannelState::default(),
            9,
        )
        .unwrap();
        assert_eq!(rx, tx);
    }

    #[test]
    fn rotation_by_alpha() {
        let tx = random_buffer(100, 2);
        let phi = 1.234;
        let state = ChannelState {
            alpha: Complex64::from_polar(1.0, phi),
            ..Default::default()
        };
        let rx = apply_channel(std::slice::from_ref(&tx), &[0.0], &state, 0).unwrap();
        for (r, t) in rx.samples().iter().zip(tx.samples()) {
            assert!((r - t * Complex64::from_polar(1.0, phi)).norm() < 1e-12);
        }
    }

    #[test]
    fn noise_variance_matches() {
        let n = 1_000_000;
        let zeros = IqBuffer::<f64>::zeros(n, 1.0);
        let state = ChannelState {
            noise_variance: 0.01,
            ..Default::default()
        };
        let rx = apply_channel(&[zeros], &[0.0], &state, 42).unwrap();
        let p = rx.mean_power();
        // Var(|w|²) = σ⁴ for complex Gaussian noise.
        let se = 0.01 / (n as f64).sqrt();
        assert!((p - 0.01).abs() < 3.0 * se, "power {p}");
        let (mut pi, mut pq) = (0.0, 0.0);
        for s in rx.samples() {
            pi += s.re * s.re;
            pq += s.im * s.im;
        }
        assert!((pi / n as f64 - 0.005).abs() < 3.0 * 0.005 * (2.0 / n as f64).sqrt());
        assert!((pq / n as f64 - 0.005).abs() < 3.0 * 0.005 * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn deterministic_given_seed() {
        let tx = random_buffer(1000, 3);
        let state = ChannelState {
            noise_variance: 0.5,
            ..Default::default()
        };
        let a = apply_channel(std::slice::from_ref(&tx), &[0.0], &state, 77).unwrap();
        let b = apply_channel(std::slice::from_ref(&tx), &[0.0], &state, 77).unwrap();
        let c = apply_channel(std::slice::from_ref(&tx), &[0.0], &state, 78).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn delay_prefixes_zeros() {
        let c = WaveformParams::bench_default(Modulation::Dbpsk)
            .build()
            .unwrap();
        let tx = synthesize_train::<f64>(&c, &FhCodeMatrix::default_for(&c), &[1; 30]).unwrap();
        let state = ChannelState {
            delay: 37,
            ..Default::default()
        };
        let rx = apply_channel(&tx.antennas, &[0.0], &state, 0).unwrap();
        let first = rx.samples().iter().position(|s| s.norm() > 0.0).unwrap();
        assert_eq!(first, 37);
        assert_eq!(rx.len(), tx.antennas[0].len() + 37);
    }

    #[test]
    fn rejects_mismatched_streams() {
        let a = random_buffer(10, 1);
        let b = random_buffer(11, 2);
        let err = apply_channel(&[a, b], &[0.0, 0.5], &ChannelState::default(), 0);
        assert!(matches!(err, Err(Error::Dimension(_))));
        let a = random_buffer(10, 1);
        assert!(apply_channel(&[a], &[0.0, 0.5], &ChannelState::default(), 0).is_err());
        assert!(apply_channel::<f64>(&[], &[], &ChannelState::default(), 0).is_err());
    }

    #[test]
    fn imbalance_touches_only_q() {
        let mut s = vec![Complex64::new(0.7, 0.0), Complex64::new(0.0, 0.5)];
        apply_iq_imbalance(&mut s, 2.0, 0.0);
        assert_eq!(s[0], Complex64::new(0.7, 0.0));
        assert_eq!(s[1], Complex64::new(0.0, 1.0));
        let mut s = vec![Complex64::new(1.0, 0.0)];
        apply_iq_imbalance(&mut s, 1.0, 0.1);
        assert!((s[0].im - 0.1f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn calibration_examples() {
        assert_eq!(calibrate_noise_for_snr(1.0, 1.0).unwrap(), 1.0);
        assert!((calibrate_noise_for_snr(1.0, db_to_linear(10.0)).unwrap() - 0.1).abs() < 1e-15);
        assert!(calibrate_noise_for_snr(0.0, 1.0).is_err());
        assert!(calibrate_noise_for_snr(1.0, 0.0).is_err());
        assert!(calibrate_noise_for_snr(-1.0, 1.0).is_err());
    }

    #[test]
    fn invalid_state_rejected() {
        let tx = random_buffer(4, 0);
        for state in [
            ChannelState {
                noise_variance: -1.0,
                ..Default::default()
            },
            ChannelState {
                iq_gain: 0.0,
                ..Default::default()
            },
            ChannelState {
                iq_phase: 2.0,
                ..Default::default()
            },
            ChannelState {
                fading: FadingMode::RayleighBlock { block_len: 0 },
                ..Default::default()
            },
        ] {
            assert!(apply_channel(std::slice::from_ref(&tx), &[0.0], &state, 0).is_err());
        }
    }

    #[test]
    fn rayleigh_block_moments() {
        // One-sample blocks of a constant input read out |α|² directly.
        let blocks = 20_000;
        let ones = IqBuffer::new(vec![Complex64::new(1.0, 0.0); blocks], 1.0).unwrap();
        let state = ChannelState {
            fading: FadingMode::RayleighBlock { block_len: 1 },
            ..Default::default()
        };
        let rx = apply_channel(&[ones], &[0.0], &state, 5).unwrap();
        let p: Vec<f64> = rx.samples().iter().map(|s| s.norm_sqr()).collect();
        let mean = p.iter().sum::<f64>() / blocks as f64;
        // |g|² is Exp(1): standard deviation 1.
        assert!(
            (mean - 1.0).abs() < 3.0 / (blocks as f64).sqrt(),
            "mean {mean}"
        );
    }

    #[test]
    fn rayleigh_constant_within_block() {
        let ones = IqBuffer::new(vec![Complex64::new(1.0, 0.0); 40], 1.0).unwrap();
        let state = ChannelState {
            fading: FadingMode::RayleighBlock { block_len: 10 },
            ..Default::default()
        };
        let rx = apply_channel(&[ones], &[0.0], &state, 11).unwrap();
        for block in rx.samples().chunks(10) {
            assert!(block.iter().all(|&s| s == block[0]));
        }
        assert_ne!(rx.samples()[0], rx.samples()[10]);
    }

    proptest! {
        #[test]
        fn global_phase_factor(phi in -7.0f64..7.0, mag in 0.1f64..10.0, theta in -1.5f64..1.5, seed in any::<u64>()) {
            let a = random_buffer(64, seed);
            let b = random_buffer(64, seed ^ 1);
            let base = ChannelState { alpha: Complex64::from_polar(mag, 0.3), theta, ..Default::default() };
            let turned = ChannelState { alpha: base.alpha * Complex64::from_polar(1.0, phi), ..base };
            let x = apply_channel(&[a.clone(), b.clone()], &[0.0, 0.5], &base, 1).unwrap();
            let y = apply_channel(&[a, b], &[0.0, 0.5], &turned, 1).unwrap();
            let k = Complex64::from_polar(1.0, phi);
            for (p, q) in x.samples().iter().zip(y.samples()) {
                prop_assert!((p * k - q).norm() < 1e-9);
            }
        }
    }
}
