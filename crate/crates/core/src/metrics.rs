//! Error counting, capture-based SNR, and reference BER curves.

use std::fmt;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iq::IqBuffer;
use crate::num::{linear_to_db, Real};
use crate::waveform::Modulation;

/// Which quantity an SNR value refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnrConvention {
    /// Received in-pulse signal power over per-sample noise variance.
    PerSample,
    /// Energy per bit at a single matched-filter output over noise density.
    PerBit,
}

impl SnrConvention {
    pub fn name(self) -> &'static str {
        match self {
            SnrConvention::PerSample => "per-sample",
            SnrConvention::PerBit => "per-bit",
        }
    }
}

impl fmt::Display for SnrConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SnrConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-sample" => Ok(SnrConvention::PerSample),
            "per-bit" => Ok(SnrConvention::PerBit),
            _ => Err(Error::Config(format!("unknown SNR convention `{s}`"))),
        }
    }
}

/// Per-bit SNR `γ_b` at one matched-filter output for a per-sample SNR.
///
/// Each symbol integrates `L` samples and carries `log₂J` bits; with
/// `antennas` orthogonal unit-power streams the received in-pulse power is
/// split evenly among them.
pub fn per_bit_from_per_sample(
    per_sample: f64,
    samples_per_subpulse: usize,
    modulation: Modulation,
    antennas: usize,
) -> f64 {
    per_sample * samples_per_subpulse as f64 / (modulation.bits_per_symbol() * antennas) as f64
}

/// Counted bit errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BitErrorCount {
    pub bits: u64,
    pub errors: u64,
}

impl BitErrorCount {
    pub fn ber(&self) -> f64 {
        if self.bits == 0 {
            0.0
        } else {
            self.errors as f64 / self.bits as f64
        }
    }

    /// Binomial standard error `√(p̂(1−p̂)/N)`.
    pub fn standard_error(&self) -> f64 {
        binomial_standard_error(self.ber(), self.bits)
    }
}

pub fn binomial_standard_error(p: f64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Hamming distance between two equal-length bit sequences.
pub fn compute_ber(tx_bits: &[u8], rx_bits: &[u8]) -> Result<BitErrorCount> {
    if tx_bits.len() != rx_bits.len() {
        return Err(Error::Dimension(format!(
            "{} transmitted bits vs {} received",
            tx_bits.len(),
            rx_bits.len()
        )));
    }
    let errors = tx_bits.iter().zip(rx_bits).filter(|(a, b)| a != b).count();
    Ok(BitErrorCount {
        bits: tx_bits.len() as u64,
        errors: errors as u64,
    })
}

/// Capture-based SNR estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrEstimate {
    pub linear: f64,
    /// True when the estimate came out negative, which happens at very low
    /// SNR from finite-sample power fluctuations.
    pub negative: bool,
}

impl SnrEstimate {
    /// Decibels; `None` when the estimate is not positive.
    pub fn db(&self) -> Option<f64> {
        (self.linear > 0.0).then(|| linear_to_db(self.linear))
    }
}

/// `(P_noisy − P_noise)/P_noise` from a signal-present capture and a
/// noise-only capture of the same length, with `P = mean |s|²`.
pub fn estimate_snr<T: Real>(noisy: &IqBuffer<T>, noise: &IqBuffer<T>) -> Result<SnrEstimate> {
    if noisy.len() != noise.len() {
        return Err(Error::Dimension(format!(
            "captures must have equal length: {} vs {}",
            noisy.len(),
            noise.len()
        )));
    }
    let p_noise = power_f64(noise);
    if p_noise == 0.0 {
        return Err(Error::Degenerate("noise capture has zero power".into()));
    }
    let linear = (power_f64(noisy) - p_noise) / p_noise;
    if linear < 0.0 {
        log::warn!(
            "SNR estimate is negative ({linear}); signal power is below the noise fluctuation"
        );
    }
    Ok(SnrEstimate {
        linear,
        negative: linear < 0.0,
    })
}

fn power_f64<T: Real>(b: &IqBuffer<T>) -> f64 {
    if b.is_empty() {
        return 0.0;
    }
    b.samples()
        .iter()
        .map(|s| s.norm_sqr().as_f64())
        .sum::<f64>()
        / b.len() as f64
}

/// Closed-form D-BPSK bit error probability `½·exp(−γ_b)` on AWGN.
pub fn theoretical_dbpsk_ber(gamma_b: f64) -> Result<f64> {
    if gamma_b.is_nan() || gamma_b < 0.0 {
        return Err(Error::Domain(format!(
            "per-bit SNR must be nonnegative, got {gamma_b}"
        )));
    }
    Ok(0.5 * (-gamma_b).exp())
}

/// Monte Carlo BER estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleEstimate {
    pub ber: f64,
    pub standard_error: f64,
    pub bits: u64,
}

const ORACLE_BLOCK: u64 = 1 << 14;

/// Symbol-level Monte Carlo oracle for differential detection.
///
/// Each trial draws a random reference phase and a random symbol, forms two
/// unit phasors separated by the symbol's phase difference, adds complex
/// Gaussian noise at `γ_s = γ_b·log₂J`, and decides from the quadrant of
/// `y₂·conj(y₁)`. This path shares no code with the waveform or receiver
/// modules.
pub fn oracle_differential_ber(
    modulation: Modulation,
    gamma_b: f64,
    trials: u64,
    seed: u64,
) -> Result<OracleEstimate> {
    if gamma_b.is_nan() || gamma_b < 0.0 || gamma_b.is_infinite() {
        return Err(Error::Domain(format!(
            "per-bit SNR must be finite and nonnegative, got {gamma_b}"
        )));
    }
    if trials == 0 {
        return Err(Error::Domain("oracle needs at least one trial".into()));
    }
    let k = modulation.bits_per_symbol();
    // Unit-variance noise, signal amplitude √γ_s.
    let amplitude = (gamma_b * k as f64).sqrt();
    let blocks = trials.div_ceil(ORACLE_BLOCK);
    let errors: u64 = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b);
            let n = ORACLE_BLOCK.min(trials - b * ORACLE_BLOCK);
            let mut errors = 0u64;
            for _ in 0..n {
                let reference: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let symbol: u8 = rng.random_range(0..modulation.order() as u8);
                // Phase step and label, straight from the constellation table.
                let (step, label): (f64, [u8; 2]) = match (modulation, symbol) {
                    (Modulation::Dbpsk, 0) => (0.5, [0, 0]),
                    (Modulation::Dbpsk, _) => (1.5, [1, 0]),
                    (Modulation::Dqpsk, 0) => (0.25, [0, 0]),
                    (Modulation::Dqpsk, 1) => (0.75, [0, 1]),
                    (Modulation::Dqpsk, 2) => (1.25, [1, 1]),
                    (Modulation::Dqpsk, _) => (1.75, [1, 0]),
                };
                let y1 = Complex64::from_polar(amplitude, reference) + noise(&mut rng);
                let y2 = Complex64::from_polar(amplitude, reference + step * std::f64::consts::PI)
                    + noise(&mut rng);
                let z = y2 * y1.conj();
                errors += match modulation {
                    Modulation::Dbpsk => u64::from(u8::from(z.im < 0.0) != label[0]),
                    Modulation::Dqpsk => {
                        u64::from(u8::from(z.im < 0.0) != label[0])
                            + u64::from(u8::from(z.re < 0.0) != label[1])
                    }
                };
            }
            errors
        })
        .sum();
    let bits = trials * k as u64;
    let ber = errors as f64 / bits as f64;
    Ok(OracleEstimate {
        ber,
        standard_error: binomial_standard_error(ber, bits),
        bits,
    })
}

/// [`oracle_differential_ber`] for D-QPSK.
pub fn oracle_dqpsk_ber(gamma_b: f64, trials: u64, seed: u64) -> Result<OracleEstimate> {
    oracle_differential_ber(Modulation::Dqpsk, gamma_b, trials, seed)
}

fn noise<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Linear interpolation of the SNR at which a BER curve crosses `target`,
/// interpolating `log10(BER)` against SNR in dB. Points must be sorted by
/// SNR; returns `None` if the curve never brackets the target.
pub fn snr_at_ber(curve: &[(f64, f64)], target: f64) -> Option<f64> {
    let lt = target.log10();
    curve.windows(2).find_map(|w| {
        let ((s0, p0), (s1, p1)) = (w[0], w[1]);
        if p0 >= target && p1 <= target && p0 > 0.0 && p1 > 0.0 && p0 != p1 {
            let (l0, l1) = (p0.log10(), p1.log10());
            Some(s0 + (lt - l0) * (s1 - s0) / (l1 - l0))
        } else {
            None
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{apply_channel, calibrate_noise_for_snr, ChannelState};
    use crate::num::db_to_linear;
    use num_complex::Complex;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn ber_examples() {
        assert_eq!(compute_ber(&[0, 1, 1], &[0, 1, 1]).unwrap().ber(), 0.0);
        assert_eq!(
            compute_ber(&[0, 1, 1, 0], &[1, 0, 0, 1]).unwrap().ber(),
            1.0
        );
        assert_eq!(
            compute_ber(&[0, 1, 1, 0], &[0, 1, 0, 0]).unwrap().ber(),
            0.25
        );
        assert!(matches!(
            compute_ber(&[0], &[0, 1]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn snr_examples() {
        let noise = IqBuffer::new(vec![Complex::new(1.0, 0.0); 8], 1.0).unwrap();
        let noisy = IqBuffer::new(vec![Complex::new(0.0, 2f64.sqrt()); 8], 1.0).unwrap();
        let e = estimate_snr(&noisy, &noise).unwrap();
        assert!((e.linear - 1.0).abs() < 1e-12);
        assert!(e.db().unwrap().abs() < 1e-9);

        let e = estimate_snr(&noise, &noise).unwrap();
        assert_eq!(e.linear, 0.0);
        assert_eq!(e.db(), None);

        let quiet = IqBuffer::new(vec![Complex::new(0.5, 0.0); 8], 1.0).unwrap();
        let e = estimate_snr(&quiet, &noise).unwrap();
        assert!(e.negative && e.linear < 0.0);

        let zeros = IqBuffer::<f64>::zeros(8, 1.0);
        assert!(matches!(
            estimate_snr(&noise, &zeros),
            Err(Error::Degenerate(_))
        ));
        let short = IqBuffer::<f64>::zeros(7, 1.0);
        assert!(matches!(
            estimate_snr(&noise, &short),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn snr_of_calibrated_capture() {
        let n = 1_000_000;
        let signal = IqBuffer::new(
            (0..n)
                .map(|k| Complex::from_polar(1.0, 0.1 * k as f64))
                .collect(),
            1.0,
        )
        .unwrap();
        let var = calibrate_noise_for_snr(1.0, db_to_linear(10.0)).unwrap();
        let state = ChannelState {
            noise_variance: var,
            ..Default::default()
        };
        let noisy = apply_channel(&[signal], &[0.0], &state, 1).unwrap();
        let noise = apply_channel(&[IqBuffer::<f64>::zeros(n, 1.0)], &[0.0], &state, 2).unwrap();
        let db = estimate_snr(&noisy, &noise).unwrap().db().unwrap();
        assert!((db - 10.0).abs() < 0.2, "{db}");
    }

    #[test]
    fn dbpsk_closed_form() {
        assert_eq!(theoretical_dbpsk_ber(0.0).unwrap(), 0.5);
        assert_eq!(theoretical_dbpsk_ber(f64::INFINITY).unwrap(), 0.0);
        let p = theoretical_dbpsk_ber(db_to_linear(7.0)).unwrap();
        assert!((p - 3.32e-3).abs() < 0.01e-3, "{p}");
        assert!(theoretical_dbpsk_ber(-0.1).is_err());
        assert!(theoretical_dbpsk_ber(f64::NAN).is_err());
    }

    #[test]
    fn dqpsk_oracle_sanity() {
        // γ_b = 0 dB; Marcum-Q closed form for Gray D-QPSK gives 0.163908.
        let e = oracle_dqpsk_ber(1.0, 200_000, 1).unwrap();
        assert!((e.ber - 0.163908).abs() < 4.0 * e.standard_error, "{e:?}");
        assert!(e.standard_error > 0.0 && e.standard_error < 1e-3);
        // Pure noise.
        let e = oracle_dqpsk_ber(0.0, 200_000, 1).unwrap();
        assert!((e.ber - 0.5).abs() < 4.0 * e.standard_error.max(1e-3));
        let e = oracle_dqpsk_ber(db_to_linear(13.0), 200_000, 2).unwrap();
        assert!(e.ber < 1e-3, "{e:?}");
    }

    #[test]
    fn dbpsk_oracle_matches_closed_form() {
        for db in [0.0, 3.0, 6.0, 8.0] {
            let g = db_to_linear(db);
            let e = oracle_differential_ber(Modulation::Dbpsk, g, 400_000, 11).unwrap();
            let p = theoretical_dbpsk_ber(g).unwrap();
            let se = binomial_standard_error(p, e.bits);
            assert!((e.ber - p).abs() < 3.0 * se, "γ={db} dB: {} vs {p}", e.ber);
        }
    }

    #[test]
    fn oracle_is_deterministic() {
        let a = oracle_dqpsk_ber(2.0, 100_000, 5).unwrap();
        let b = oracle_dqpsk_ber(2.0, 100_000, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn interpolation() {
        let curve = [(0.0, 1e-1), (2.0, 1e-2), (4.0, 1e-4)];
        assert!((snr_at_ber(&curve, 1e-2).unwrap() - 2.0).abs() < 1e-12);
        assert!((snr_at_ber(&curve, 1e-3).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(snr_at_ber(&curve, 1e-6), None);
    }

    proptest! {
        #[test]
        fn snr_scale_invariant(a in 0.01f64..100.0, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mk = |rng: &mut ChaCha8Rng, s: f64| IqBuffer::new(
                (0..64).map(|_| Complex::new(rng.random_range(-s..s), rng.random_range(-s..s))).collect(),
                1.0,
            ).unwrap();
            let noisy = mk(&mut rng, 2.0);
            let noise = mk(&mut rng, 1.0);
            let k = Complex::new(a, 0.0);
            let x = estimate_snr(&noisy, &noise).unwrap().linear;
            let y = estimate_snr(&noisy.scaled(k), &noise.scaled(k)).unwrap().linear;
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
        }

        #[test]
        fn ber_symmetric_and_permutation_invariant(
            bits in proptest::collection::vec((0u8..2, 0u8..2), 1..200),
            seed in any::<u64>(),
        ) {
            let (a, b): (Vec<u8>, Vec<u8>) = bits.into_iter().unzip();
            let ab = compute_ber(&a, &b).unwrap();
            prop_assert_eq!(ab, compute_ber(&b, &a).unwrap());
            let mut idx: Vec<usize> = (0..a.len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..idx.len()).rev() {
                idx.swap(i, rng.random_range(0..=i));
            }
            let pa: Vec<u8> = idx.iter().map(|&i| a[i]).collect();
            let pb: Vec<u8> = idx.iter().map(|&i| b[i]).collect();
            prop_assert_eq!(ab, compute_ber(&pa, &pb).unwrap());
        }

        #[test]
        fn closed_form_decreasing(g in 0.0f64..30.0, d in 1e-6f64..5.0) {
            prop_assert!(theoretical_dbpsk_ber(g + d).unwrap() < theoretical_dbpsk_ber(g).unwrap());
        }
    }
}
