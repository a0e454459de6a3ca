//! Single-antenna receiver, from raw capture to bits, with no channel state.
//!
//! The decoder forms `y[q+1]·conj(y[q])` for consecutive matched-filter
//! outputs of the same antenna. The unknown channel gain, channel phase and
//! steering phase multiply both outputs identically and cancel, leaving the
//! transmitted phase difference.

use std::collections::HashMap;
use std::f64::consts::TAU;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::iq::IqBuffer;
use crate::num::{wrap_two_pi, Real};
use crate::waveform::{FhCodeMatrix, Modulation, PhaseRamp, SubpulseBank, WaveformConfig};

/// Matched-filter outputs `y[n][m][q]`, normalized by `1/L`.
///
/// With unit-amplitude sub-pulses and no noise, `|y| = |α|`. White noise of
/// variance `σ²` per sample becomes variance `σ²/L` per output.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedFilterOutput<T> {
    pulses: usize,
    antennas: usize,
    subpulses: usize,
    normalization: usize,
    y: Vec<Complex<T>>,
}

impl<T: Real> MatchedFilterOutput<T> {
    /// Wraps raw outputs laid out pulse-major, then antenna, then sub-pulse.
    pub fn new(
        pulses: usize,
        antennas: usize,
        subpulses: usize,
        normalization: usize,
        y: Vec<Complex<T>>,
    ) -> Result<Self> {
        if y.len() != pulses * antennas * subpulses {
            return Err(Error::Dimension(format!(
                "{} outputs for a {pulses}×{antennas}×{subpulses} bank",
                y.len()
            )));
        }
        if y.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::Domain(
                "matched-filter outputs must be finite".into(),
            ));
        }
        Ok(Self {
            pulses,
            antennas,
            subpulses,
            normalization,
            y,
        })
    }

    pub fn pulses(&self) -> usize {
        self.pulses
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn subpulses(&self) -> usize {
        self.subpulses
    }

    /// Samples per sub-pulse used as the divisor.
    pub fn normalization(&self) -> usize {
        self.normalization
    }

    pub fn get(&self, n: usize, m: usize, q: usize) -> Complex<T> {
        self.y[(n * self.antennas + m) * self.subpulses + q]
    }

    pub fn values(&self) -> &[Complex<T>] {
        &self.y
    }

    /// Multiplies every output by `k`.
    pub fn scaled(&self, k: Complex<T>) -> Self {
        Self {
            y: self.y.iter().map(|&v| v * k).collect(),
            ..self.clone()
        }
    }
}

/// `(1/L)·Σ rx[k]·conj(h[k])` over one window.
fn correlate<T: Real>(window: &[Complex<T>], template: &[Complex<T>]) -> Complex<T> {
    let acc = window
        .iter()
        .zip(template)
        .fold(Complex::new(T::zero(), T::zero()), |acc, (&x, h)| {
            acc + x * h.conj()
        });
    acc / T::of(template.len() as f64)
}

/// Runs the matched-filter bank on every pulse starting at `pulse_offsets`.
pub fn matched_filter<T: Real>(
    rx: &IqBuffer<T>,
    codes: &FhCodeMatrix,
    config: &WaveformConfig,
    pulse_offsets: &[usize],
) -> Result<MatchedFilterOutput<T>> {
    let bank = SubpulseBank::new(config, codes)?;
    matched_filter_with_bank(rx, &bank, pulse_offsets)
}

/// [`matched_filter`] with a prebuilt template bank.
pub fn matched_filter_with_bank<T: Real>(
    rx: &IqBuffer<T>,
    bank: &SubpulseBank<T>,
    pulse_offsets: &[usize],
) -> Result<MatchedFilterOutput<T>> {
    let len = bank.subpulse_len();
    let (m_count, q_count) = (bank.antennas(), bank.subpulses());
    let pulse_len = len * q_count;
    let samples = rx.samples();
    let mut y = Vec::with_capacity(pulse_offsets.len() * m_count * q_count);
    for &start in pulse_offsets {
        let pulse = samples.get(start..start + pulse_len).ok_or_else(|| {
            Error::Dimension(format!(
                "pulse window [{start}, {}) exceeds capture of {} samples",
                start + pulse_len,
                samples.len()
            ))
        })?;
        for m in 0..m_count {
            for (q, window) in pulse.chunks_exact(len).enumerate() {
                y.push(correlate(window, bank.template(m, q)));
            }
        }
    }
    Ok(MatchedFilterOutput {
        pulses: pulse_offsets.len(),
        antennas: m_count,
        subpulses: q_count,
        normalization: len,
        y,
    })
}

/// Phase estimates with known channel state, `N×M×Q` like the input:
/// `Ω̂ = ∠y − ψ_ch + 2π·d_m·sin θ_c`, wrapped into `[0, 2π)`.
pub fn estimate_phases_coherent<T: Real>(
    y: &MatchedFilterOutput<T>,
    psi_ch: f64,
    theta_c: f64,
    positions: &[f64],
) -> Result<Vec<T>> {
    if positions.len() != y.antennas {
        return Err(Error::Dimension(format!(
            "{} element positions for {} antennas",
            positions.len(),
            y.antennas
        )));
    }
    let s = theta_c.sin();
    let mut out = Vec::with_capacity(y.y.len());
    for n in 0..y.pulses {
        for (m, d) in positions.iter().enumerate() {
            let correction = T::of(TAU * d * s - psi_ch);
            for q in 0..y.subpulses {
                out.push(wrap_two_pi(y.get(n, m, q).arg() + correction));
            }
        }
    }
    Ok(out)
}

/// Nearest dictionary entry to a differential phase.
///
/// Distance is angular (shortest way round the circle). An exact tie goes
/// to the entry with the smaller phase.
pub fn hard_decision<T: Real>(delta: T, modulation: Modulation) -> usize {
    let delta = wrap_two_pi(delta);
    let tau = T::TAU();
    let mut best = (0, T::infinity());
    for (i, &e) in modulation.dictionary_eighths().iter().enumerate() {
        let p = T::of(f64::from(e)) * T::FRAC_PI_4();
        let d = (delta - p).abs();
        let d = d.min(tau - d);
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

/// Differential decisions for a capture.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedFrame<T> {
    pulses: usize,
    antennas: usize,
    modulation: Modulation,
    /// `N×M×(Q−1)` estimated phase differences in `[0, 2π)`.
    pub delta_hat: Vec<T>,
    /// Dictionary index per differential; `None` marks an erasure (one of
    /// the two matched-filter outputs was exactly zero).
    pub symbols: Vec<Option<usize>>,
    /// Demapped bits in transmit order. Erased symbols demap to zeros.
    pub bits: Vec<u8>,
}

impl<T: Real> DecodedFrame<T> {
    pub fn pulses(&self) -> usize {
        self.pulses
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn modulation(&self) -> Modulation {
        self.modulation
    }

    pub fn erasures(&self) -> usize {
        self.symbols.iter().filter(|s| s.is_none()).count()
    }

    /// Bit errors against the first `truth.len()` decoded bits. Every bit of
    /// an erased symbol counts as an error.
    pub fn count_bit_errors(&self, truth: &[u8]) -> Result<u64> {
        if truth.len() > self.bits.len() {
            return Err(Error::Dimension(format!(
                "{} reference bits but only {} decoded",
                truth.len(),
                self.bits.len()
            )));
        }
        let k = self.modulation.bits_per_symbol();
        Ok(truth
            .iter()
            .zip(&self.bits)
            .enumerate()
            .filter(|(i, (t, b))| t != b || self.symbols[i / k].is_none())
            .count() as u64)
    }
}

/// CSI-free decoder: `ΔΩ̂ = arg(y[q+1]·conj(y[q]))` for each antenna, then
/// nearest-point hard decisions and Gray demapping.
pub fn decode_differential<T: Real>(
    y: &MatchedFilterOutput<T>,
    modulation: Modulation,
) -> Result<DecodedFrame<T>> {
    if y.subpulses < 2 {
        return Err(Error::Config(
            "differential decoding needs at least two sub-pulses".into(),
        ));
    }
    let per_row = y.subpulses - 1;
    let count = y.pulses * y.antennas * per_row;
    let mut delta_hat = Vec::with_capacity(count);
    let mut symbols = Vec::with_capacity(count);
    let mut bits = Vec::with_capacity(count * modulation.bits_per_symbol());
    let zero = Complex::new(T::zero(), T::zero());
    for n in 0..y.pulses {
        for m in 0..y.antennas {
            for q in 0..per_row {
                let (a, b) = (y.get(n, m, q), y.get(n, m, q + 1));
                if a == zero || b == zero {
                    delta_hat.push(T::zero());
                    symbols.push(None);
                    bits.extend(std::iter::repeat_n(0, modulation.bits_per_symbol()));
                    continue;
                }
                let d = wrap_two_pi((b * a.conj()).arg());
                let s = hard_decision(d, modulation);
                delta_hat.push(d);
                symbols.push(Some(s));
                bits.extend_from_slice(modulation.bits_for_symbol(s));
            }
        }
    }
    Ok(DecodedFrame {
        pulses: y.pulses,
        antennas: y.antennas,
        modulation,
        delta_hat,
        symbols,
        bits,
    })
}

/// Subtracts the complex mean.
pub fn remove_dc_bias<T: Real>(rx: &IqBuffer<T>) -> Result<IqBuffer<T>> {
    if rx.is_empty() {
        return Err(Error::Domain(
            "cannot remove DC from an empty buffer".into(),
        ));
    }
    let n = T::of(rx.len() as f64);
    let sum = rx
        .samples()
        .iter()
        .fold(Complex::new(T::zero(), T::zero()), |a, &s| a + s);
    let mean = sum / n;
    Ok(IqBuffer::from_parts(
        rx.samples().iter().map(|&s| s - mean).collect(),
        rx.sample_rate(),
    ))
}

/// Inverts [`crate::channel::apply_iq_imbalance`] for known `(g, φ)`:
/// `Q = (Q'/g − I·sin φ)/cos φ`.
pub fn correct_iq_imbalance<T: Real>(
    rx: &IqBuffer<T>,
    gain: f64,
    phase: f64,
) -> Result<IqBuffer<T>> {
    if !(gain > 0.0 && gain.is_finite()) {
        return Err(Error::Domain(format!(
            "IQ gain must be positive, got {gain}"
        )));
    }
    if phase.is_nan() || phase.abs() >= std::f64::consts::FRAC_PI_2 {
        return Err(Error::Domain(format!(
            "IQ phase skew must lie in (-π/2, π/2), got {phase}"
        )));
    }
    if gain == 1.0 && phase == 0.0 {
        return Ok(rx.clone());
    }
    let (s, c) = phase.sin_cos();
    let inv_gc = T::of(1.0 / (gain * c));
    let tan = T::of(s / c);
    Ok(IqBuffer::from_parts(
        rx.samples()
            .iter()
            .map(|x| Complex::new(x.re, x.im * inv_gc - x.re * tan))
            .collect(),
        rx.sample_rate(),
    ))
}

/// Lag in `[0, rx.len() − reference.len()]` maximizing
/// `|Σ rx[τ+k]·conj(reference[k])|`; ties go to the smaller lag.
pub fn estimate_delay<T: Real>(rx: &IqBuffer<T>, reference: &IqBuffer<T>) -> Result<usize> {
    let (r, x) = (reference.samples(), rx.samples());
    if r.is_empty() {
        return Err(Error::Dimension("empty reference".into()));
    }
    if r.len() > x.len() {
        return Err(Error::Dimension(format!(
            "reference of {} samples is longer than capture of {}",
            r.len(),
            x.len()
        )));
    }
    let mut best = (0, T::neg_infinity());
    for lag in 0..=x.len() - r.len() {
        let c = x[lag..lag + r.len()]
            .iter()
            .zip(r)
            .fold(Complex::new(T::zero(), T::zero()), |acc, (&a, b)| {
                acc + a * b.conj()
            })
            .norm_sqr();
        if c > best.1 {
            best = (lag, c);
        }
    }
    Ok(best.0)
}

/// Front-end and timing options for [`decode_capture`].
#[derive(Debug, Clone, PartialEq)]
pub struct CaptureOptions {
    /// Known receiver IQ gain (1 = ideal).
    pub iq_gain: f64,
    /// Known receiver IQ phase skew (0 = ideal).
    pub iq_phase: f64,
    /// Pulses in the capture. When absent, the first pulse is assumed to
    /// start within one PRI and every pulse that fits is decoded.
    pub num_pulses: Option<usize>,
    /// Largest lag searched, if tighter than what the capture allows.
    pub max_delay: Option<usize>,
    /// Detection threshold as a multiple of the noise-only coherence `M/L`.
    pub detection_ratio: f64,
}

impl Default for CaptureOptions {
    fn default() -> Self {
        Self {
            iq_gain: 1.0,
            iq_phase: 0.0,
            num_pulses: None,
            max_delay: None,
            detection_ratio: 5.0,
        }
    }
}

/// Result of the lag search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingEstimate {
    pub delay: usize,
    pub num_pulses: usize,
    /// Coherence at the chosen lag: 1 for a clean, aligned capture with
    /// orthogonal antennas, about `M/L` for noise alone.
    pub coherence: f64,
    pub threshold: f64,
}

/// Searches for the pulse-train lag without knowing the transmitted phases.
///
/// For each candidate lag every sub-pulse window is correlated against its
/// hop templates and the squared magnitudes are summed, so the unknown PSK
/// phases and channel phase drop out. The lag capturing the most
/// matched-filter energy wins (ties to the smaller lag). Detection compares
/// the coherence at that lag against the threshold:
///
/// `ρ(τ) = Σ_{n,q} Σ_m |Σ_k rx·conj(h_mq)|² / (L·Σ_{n,q} Σ_k |rx|²)`.
pub fn acquire_timing<T: Real>(
    rx: &IqBuffer<T>,
    bank: &SubpulseBank<T>,
    config: &WaveformConfig,
    options: &CaptureOptions,
) -> Result<TimingEstimate> {
    let x = rx.samples();
    let len = bank.subpulse_len();
    let q_count = bank.subpulses();
    let m_count = bank.antennas();
    let pulse_len = config.samples_per_pulse();
    let pri = config.samples_per_pri();
    if x.len() < pulse_len {
        return Err(Error::NoPulseFound(format!(
            "capture of {} samples is shorter than one pulse ({pulse_len})",
            x.len()
        )));
    }
    let fits = |lag: usize| (x.len() - lag - pulse_len) / pri + 1;
    let mut max_lag = match options.num_pulses {
        Some(0) => return Err(Error::Domain("pulse count must be positive".into())),
        Some(n) => {
            let span = (n - 1) * pri + pulse_len;
            if span > x.len() {
                return Err(Error::NoPulseFound(format!(
                    "{n} pulses need {span} samples, capture has {}",
                    x.len()
                )));
            }
            x.len() - span
        }
        None => (pri - 1).min(x.len() - pulse_len),
    };
    if let Some(cap) = options.max_delay {
        max_lag = max_lag.min(cap);
    }

    // Window energies via prefix sums, in f64.
    let mut prefix = Vec::with_capacity(x.len() + 1);
    prefix.push(0.0f64);
    for s in x {
        prefix.push(prefix.last().unwrap() + s.norm_sqr().as_f64());
    }
    let window_energy = |start: usize| prefix[start + len] - prefix[start];

    // Distinct templates; under the local ramp equal codes share one.
    let mut template_ids: HashMap<(u32, usize), usize> = HashMap::new();
    let mut templates: Vec<&[Complex<T>]> = Vec::new();
    let mut slot = vec![0usize; m_count * q_count];
    for m in 0..m_count {
        for q in 0..q_count {
            let key = (
                bank.code(m, q),
                if config.phase_ramp() == PhaseRamp::PulseGlobal {
                    q
                } else {
                    0
                },
            );
            slot[m * q_count + q] = *template_ids.entry(key).or_insert_with(|| {
                templates.push(bank.template(m, q));
                templates.len() - 1
            });
        }
    }

    // |correlation|² for every template at every start the search can touch.
    let last_start = max_lag + (fits(0) - 1) * pri + (q_count - 1) * len;
    let starts = (last_start + 1).min(x.len() - len + 1);
    let corr: Vec<Vec<f64>> = templates
        .iter()
        .map(|h| {
            (0..starts)
                .map(|s| {
                    x[s..s + len]
                        .iter()
                        .zip(h.iter())
                        .fold(Complex::new(T::zero(), T::zero()), |acc, (&a, b)| {
                            acc + a * b.conj()
                        })
                        .norm_sqr()
                        .as_f64()
                })
                .collect()
        })
        .collect();

    let mut best: Option<(usize, usize, f64, f64)> = None;
    for lag in 0..=max_lag {
        let pulses = options.num_pulses.unwrap_or_else(|| fits(lag));
        let (mut num, mut den) = (0.0, 0.0);
        for n in 0..pulses {
            for q in 0..q_count {
                let start = lag + n * pri + q * len;
                den += window_energy(start);
                for m in 0..m_count {
                    num += corr[slot[m * q_count + q]][start];
                }
            }
        }
        if best.is_none_or(|(_, _, b, _)| num > b) {
            best = Some((lag, pulses, num, den));
        }
    }
    let (delay, num_pulses, num, den) = best.expect("lag range is nonempty");
    let coherence = if den > 0.0 {
        num / (len as f64 * den)
    } else {
        0.0
    };
    let floor = m_count as f64 / len as f64;
    let threshold = (options.detection_ratio * floor).min(0.5 * (1.0 + floor));
    if coherence.is_nan() || coherence <= threshold {
        return Err(Error::NoPulseFound(format!(
            "best coherence {coherence:.4} at lag {delay} is below threshold {threshold:.4}"
        )));
    }
    Ok(TimingEstimate {
        delay,
        num_pulses,
        coherence,
        threshold,
    })
}

/// Every stage of [`decode_capture`].
#[derive(Debug, Clone)]
pub struct CaptureDecode<T> {
    /// Capture after DC removal and IQ correction.
    pub conditioned: IqBuffer<T>,
    pub timing: TimingEstimate,
    pub pulse_offsets: Vec<usize>,
    pub outputs: MatchedFilterOutput<T>,
    pub frame: DecodedFrame<T>,
}

/// DC removal, IQ-imbalance correction, timing acquisition, matched
/// filtering and differential decoding of a raw capture.
pub fn decode_capture<T: Real>(
    rx: &IqBuffer<T>,
    codes: &FhCodeMatrix,
    config: &WaveformConfig,
    options: &CaptureOptions,
) -> Result<CaptureDecode<T>> {
    let centered = remove_dc_bias(rx)?;
    let conditioned = correct_iq_imbalance(&centered, options.iq_gain, options.iq_phase)?;
    let bank = SubpulseBank::new(config, codes)?;
    let timing = acquire_timing(&conditioned, &bank, config, options)?;
    let pulse_offsets: Vec<usize> = (0..timing.num_pulses)
        .map(|n| timing.delay + n * config.samples_per_pri())
        .collect();
    let outputs = matched_filter_with_bank(&conditioned, &bank, &pulse_offsets)?;
    let frame = decode_differential(&outputs, config.modulation())?;
    Ok(CaptureDecode {
        conditioned,
        timing,
        pulse_offsets,
        outputs,
        frame,
    })
}
