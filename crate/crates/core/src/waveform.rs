//! Transmit side: hop codes, differential phase encoding, pulse synthesis.
//!
//! A pulse is `Q` back-to-back sub-pulses of `L` samples each. Sub-pulse `q`
//! of antenna `m` is the tone `c[m][q]·Δf` multiplied by the PSK phase
//! `Ω[m][q]`. Information is carried only by the phase differences between
//! consecutive sub-pulses of the same antenna; the first sub-pulse of each
//! pulse is a zero-phase reference.

use std::f64::consts::{FRAC_PI_4, TAU};
use std::fmt;

use num_complex::Complex;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iq::IqBuffer;
use crate::num::Real;

const INTEGER_TOLERANCE: f64 = 1e-9;

/// Differential PSK alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    Dbpsk,
    Dqpsk,
}

/// Differential phase of each dictionary entry, in units of π/4.
const DBPSK_EIGHTHS: [u8; 2] = [2, 6];
const DQPSK_EIGHTHS: [u8; 4] = [1, 3, 5, 7];

/// Gray labels for the D-QPSK dictionary in ascending phase order.
const DQPSK_LABELS: [[u8; 2]; 4] = [[0, 0], [0, 1], [1, 1], [1, 0]];

impl Modulation {
    pub const ALL: [Modulation; 2] = [Modulation::Dbpsk, Modulation::Dqpsk];

    /// Dictionary size `J`.
    pub fn order(self) -> usize {
        match self {
            Modulation::Dbpsk => 2,
            Modulation::Dqpsk => 4,
        }
    }

    pub fn bits_per_symbol(self) -> usize {
        match self {
            Modulation::Dbpsk => 1,
            Modulation::Dqpsk => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modulation::Dbpsk => "dbpsk",
            Modulation::Dqpsk => "dqpsk",
        }
    }

    pub(crate) fn dictionary_eighths(self) -> &'static [u8] {
        match self {
            Modulation::Dbpsk => &DBPSK_EIGHTHS,
            Modulation::Dqpsk => &DQPSK_EIGHTHS,
        }
    }

    /// Differential phases in ascending order, radians.
    ///
    /// D-BPSK uses {π/2, 3π/2}; D-QPSK uses {π/4, 3π/4, 5π/4, 7π/4}.
    pub fn differential_phases(self) -> Vec<f64> {
        self.dictionary_eighths()
            .iter()
            .map(|&e| f64::from(e) * FRAC_PI_4)
            .collect()
    }

    /// Dictionary index for one symbol's worth of bits (MSB first).
    ///
    /// D-BPSK: `0 → π/2`, `1 → 3π/2`. D-QPSK (Gray): `00 → π/4`,
    /// `01 → 3π/4`, `11 → 5π/4`, `10 → 7π/4`.
    pub fn symbol_for_bits(self, bits: &[u8]) -> Result<usize> {
        if bits.len() != self.bits_per_symbol() {
            return Err(Error::Dimension(format!(
                "{} symbol takes {} bits, got {}",
                self.name(),
                self.bits_per_symbol(),
                bits.len()
            )));
        }
        if let Some(b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::Domain(format!("bit value {b} is not 0 or 1")));
        }
        Ok(match self {
            Modulation::Dbpsk => usize::from(bits[0]),
            Modulation::Dqpsk => DQPSK_LABELS
                .iter()
                .position(|l| l[..] == bits[..])
                .expect("all two-bit labels are present"),
        })
    }

    /// Inverse of [`Modulation::symbol_for_bits`].
    pub fn bits_for_symbol(self, symbol: usize) -> &'static [u8] {
        match self {
            Modulation::Dbpsk => [&[0u8][..], &[1u8][..]][symbol],
            Modulation::Dqpsk => &DQPSK_LABELS[symbol],
        }
    }
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Modulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "").as_str() {
            "dbpsk" => Ok(Modulation::Dbpsk),
            "dqpsk" => Ok(Modulation::Dqpsk),
            _ => Err(Error::Config(format!("unknown modulation `{s}`"))),
        }
    }
}

/// Time origin of the hop tone inside a pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseRamp {
    /// The tone restarts at phase zero at every sub-pulse boundary.
    #[default]
    SubpulseLocal,
    /// The tone runs from the start of the pulse.
    PulseGlobal,
}

/// Unvalidated transmit parameters. Use [`WaveformParams::build`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformParams {
    pub num_antennas: usize,
    pub num_subpulses: usize,
    pub freq_step_hz: f64,
    pub subpulse_duration_s: f64,
    pub pri_s: f64,
    pub sample_rate_hz: f64,
    pub modulation: Modulation,
    /// Antenna positions in wavelengths; the first must be 0.
    pub element_positions: Vec<f64>,
    pub phase_ramp: PhaseRamp,
}

/// Sub-pulses per pulse used by the defaults.
pub const DEFAULT_SUBPULSES: usize = 11;
/// Hop code used on every sub-pulse by the single-antenna defaults.
pub const DEFAULT_CODE: u32 = 10;

impl WaveformParams {
    /// Bench parameters: 250 kHz hop interval, 20 MHz sampling, one
    /// antenna, 1 µs sub-pulses for D-BPSK and 2 µs for D-QPSK so that both
    /// spend the same number of samples per bit. The PRI leaves a gap as
    /// long as the pulse.
    pub fn bench_default(modulation: Modulation) -> Self {
        let subpulse_duration_s = 1e-6 * modulation.bits_per_symbol() as f64;
        Self {
            num_antennas: 1,
            num_subpulses: DEFAULT_SUBPULSES,
            freq_step_hz: 250e3,
            subpulse_duration_s,
            pri_s: 2.0 * DEFAULT_SUBPULSES as f64 * subpulse_duration_s,
            sample_rate_hz: 20e6,
            modulation,
            element_positions: vec![0.0],
            phase_ramp: PhaseRamp::SubpulseLocal,
        }
    }

    /// Half-wavelength uniform linear array positions for `m` antennas.
    pub fn half_wavelength_array(m: usize) -> Vec<f64> {
        (0..m).map(|i| 0.5 * i as f64).collect()
    }

    pub fn build(self) -> Result<WaveformConfig> {
        WaveformConfig::new(self)
    }
}

fn integer_ratio(x: f64) -> Option<usize> {
    let r = x.round();
    if x.is_finite() && r >= 1.0 && (x - r).abs() <= INTEGER_TOLERANCE * r.max(1.0) {
        Some(r as usize)
    } else {
        None
    }
}

/// Validated transmit configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformConfig {
    params: WaveformParams,
    samples_per_subpulse: usize,
    samples_per_pri: usize,
}

impl WaveformConfig {
    pub fn new(params: WaveformParams) -> Result<Self> {
        let p = &params;
        if p.num_antennas == 0 {
            return Err(Error::Config("at least one antenna is required".into()));
        }
        if p.num_subpulses < 2 {
            return Err(Error::Config(format!(
                "at least two sub-pulses are required, got {}",
                p.num_subpulses
            )));
        }
        for (name, v) in [
            ("sample_rate_hz", p.sample_rate_hz),
            ("subpulse_duration_s", p.subpulse_duration_s),
            ("pri_s", p.pri_s),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(p.freq_step_hz.is_finite() && p.freq_step_hz >= 0.0) {
            return Err(Error::Config(format!(
                "freq_step_hz must be nonnegative, got {}",
                p.freq_step_hz
            )));
        }
        let samples_per_subpulse = integer_ratio(p.subpulse_duration_s * p.sample_rate_hz)
            .ok_or_else(|| {
                Error::Config(format!(
                    "sub-pulse duration × sample rate = {} is not a positive integer",
                    p.subpulse_duration_s * p.sample_rate_hz
                ))
            })?;
        let samples_per_pri = integer_ratio(p.pri_s * p.sample_rate_hz).ok_or_else(|| {
            Error::Config(format!(
                "PRI × sample rate = {} is not a positive integer",
                p.pri_s * p.sample_rate_hz
            ))
        })?;
        if p.num_subpulses * samples_per_subpulse > samples_per_pri {
            return Err(Error::Config(format!(
                "{} sub-pulses of {} samples do not fit in a PRI of {} samples",
                p.num_subpulses, samples_per_subpulse, samples_per_pri
            )));
        }
        if p.element_positions.len() != p.num_antennas {
            return Err(Error::Config(format!(
                "{} element positions given for {} antennas",
                p.element_positions.len(),
                p.num_antennas
            )));
        }
        if p.element_positions[0] != 0.0 {
            return Err(Error::Config("first element position must be 0".into()));
        }
        if p.element_positions.iter().any(|d| !d.is_finite())
            || p.element_positions.windows(2).any(|w| w[1] < w[0])
        {
            return Err(Error::Config(
                "element positions must be finite and nondecreasing".into(),
            ));
        }
        let config = Self {
            params,
            samples_per_subpulse,
            samples_per_pri,
        };
        if config.num_antennas() > 1 && !config.is_orthogonal() {
            log::warn!(
                "Δf·Δt = {} is not an integer: matched filters of different antennas leak into each other",
                config.freq_step_hz() * config.subpulse_duration_s()
            );
        }
        Ok(config)
    }

    pub fn params(&self) -> &WaveformParams {
        &self.params
    }

    pub fn num_antennas(&self) -> usize {
        self.params.num_antennas
    }

    pub fn num_subpulses(&self) -> usize {
        self.params.num_subpulses
    }

    pub fn freq_step_hz(&self) -> f64 {
        self.params.freq_step_hz
    }

    pub fn subpulse_duration_s(&self) -> f64 {
        self.params.subpulse_duration_s
    }

    pub fn pri_s(&self) -> f64 {
        self.params.pri_s
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.params.sample_rate_hz
    }

    pub fn modulation(&self) -> Modulation {
        self.params.modulation
    }

    pub fn element_positions(&self) -> &[f64] {
        &self.params.element_positions
    }

    pub fn phase_ramp(&self) -> PhaseRamp {
        self.params.phase_ramp
    }

    /// `L`, samples per sub-pulse.
    pub fn samples_per_subpulse(&self) -> usize {
        self.samples_per_subpulse
    }

    pub fn samples_per_pulse(&self) -> usize {
        self.samples_per_subpulse * self.params.num_subpulses
    }

    pub fn samples_per_pri(&self) -> usize {
        self.samples_per_pri
    }

    /// True when `Δf·Δt` is an integer, so sub-pulse tones on different
    /// codes are exactly orthogonal over one sub-pulse.
    pub fn is_orthogonal(&self) -> bool {
        let x = self.params.freq_step_hz * self.params.subpulse_duration_s;
        (x - x.round()).abs() <= INTEGER_TOLERANCE * x.round().max(1.0)
    }

    /// Information bits carried by one pulse across all antennas.
    pub fn bits_per_pulse(&self) -> usize {
        self.params.modulation.bits_per_symbol()
            * self.params.num_subpulses.saturating_sub(1)
            * self.params.num_antennas
    }

    /// Same configuration with another modulation.
    pub fn with_modulation(&self, modulation: Modulation) -> Result<Self> {
        let mut params = self.params.clone();
        params.modulation = modulation;
        Self::new(params)
    }
}

/// One pair of antennas sharing a hop code on the same sub-pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodeCollision {
    /// Sub-pulse index, 0-based.
    pub subpulse: usize,
    pub antenna_a: usize,
    pub antenna_b: usize,
    pub code: u32,
}

/// `M×Q` matrix of nonnegative hop codes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<u32>>", into = "Vec<Vec<u32>>")]
pub struct FhCodeMatrix {
    antennas: usize,
    subpulses: usize,
    codes: Vec<u32>,
}

impl FhCodeMatrix {
    /// Builds a matrix from rows (one row per antenna). Checks shape only.
    pub fn from_rows(rows: Vec<Vec<u32>>) -> Result<Self> {
        let antennas = rows.len();
        let subpulses = rows.first().map_or(0, Vec::len);
        if antennas == 0 || subpulses == 0 {
            return Err(Error::Dimension("code matrix must be nonempty".into()));
        }
        if let Some(i) = rows.iter().position(|r| r.len() != subpulses) {
            return Err(Error::Dimension(format!(
                "code row {i} has {} entries, expected {subpulses}",
                rows[i].len()
            )));
        }
        Ok(Self {
            antennas,
            subpulses,
            codes: rows.into_iter().flatten().collect(),
        })
    }

    /// Builds a matrix from rows and rejects any per-sub-pulse collision.
    pub fn validated(rows: Vec<Vec<u32>>) -> Result<Self> {
        let codes = Self::from_rows(rows)?;
        let collisions = validate_fh_codes(&codes, codes.antennas, codes.subpulses)?;
        if let Some(c) = collisions.first() {
            return Err(Error::Config(format!(
                "{} code collision(s), first: antennas {} and {} share code {} on sub-pulse {}",
                collisions.len(),
                c.antenna_a,
                c.antenna_b,
                c.code,
                c.subpulse
            )));
        }
        Ok(codes)
    }

    /// Every entry equal to `code`. Valid only for a single antenna.
    pub fn uniform(antennas: usize, subpulses: usize, code: u32) -> Self {
        Self {
            antennas,
            subpulses,
            codes: vec![code; antennas * subpulses],
        }
    }

    /// `c[m][q] = base + m`, valid for any number of antennas.
    pub fn staggered(antennas: usize, subpulses: usize, base: u32) -> Self {
        Self {
            antennas,
            subpulses,
            codes: (0..antennas)
                .flat_map(|m| std::iter::repeat_n(base + m as u32, subpulses))
                .collect(),
        }
    }

    /// Codes drawn from `0..alphabet`, distinct across antennas in every
    /// sub-pulse.
    pub fn random<R: Rng + ?Sized>(
        antennas: usize,
        subpulses: usize,
        alphabet: u32,
        rng: &mut R,
    ) -> Result<Self> {
        if (alphabet as usize) < antennas {
            return Err(Error::Config(format!(
                "{alphabet} codes cannot be distinct across {antennas} antennas"
            )));
        }
        let mut codes = vec![0; antennas * subpulses];
        for q in 0..subpulses {
            let picks = index::sample(rng, alphabet as usize, antennas);
            for (m, c) in picks.into_iter().enumerate() {
                codes[m * subpulses + q] = c as u32;
            }
        }
        Ok(Self {
            antennas,
            subpulses,
            codes,
        })
    }

    /// Default codes for a configuration: all 10 on one antenna, `10 + m`
    /// otherwise.
    pub fn default_for(config: &WaveformConfig) -> Self {
        if config.num_antennas() == 1 {
            Self::uniform(1, config.num_subpulses(), DEFAULT_CODE)
        } else {
            Self::staggered(config.num_antennas(), config.num_subpulses(), DEFAULT_CODE)
        }
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn subpulses(&self) -> usize {
        self.subpulses
    }

    pub fn get(&self, m: usize, q: usize) -> u32 {
        self.codes[m * self.subpulses + q]
    }

    pub fn rows(&self) -> Vec<Vec<u32>> {
        self.codes
            .chunks(self.subpulses)
            .map(<[u32]>::to_vec)
            .collect()
    }

    fn check_shape(&self, antennas: usize, subpulses: usize) -> Result<()> {
        if self.antennas != antennas || self.subpulses != subpulses {
            return Err(Error::Dimension(format!(
                "code matrix is {}×{}, expected {antennas}×{subpulses}",
                self.antennas, self.subpulses
            )));
        }
        Ok(())
    }
}

impl TryFrom<Vec<Vec<u32>>> for FhCodeMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<u32>>) -> Result<Self> {
        Self::from_rows(rows)
    }
}

impl From<FhCodeMatrix> for Vec<Vec<u32>> {
    fn from(c: FhCodeMatrix) -> Self {
        c.rows()
    }
}

/// Lists every pair of antennas that share a code on the same sub-pulse.
///
/// An empty list means the matrix is valid.
pub fn validate_fh_codes(
    codes: &FhCodeMatrix,
    antennas: usize,
    subpulses: usize,
) -> Result<Vec<CodeCollision>> {
    codes.check_shape(antennas, subpulses)?;
    let mut collisions = Vec::new();
    for q in 0..subpulses {
        for a in 0..antennas {
            for b in a + 1..antennas {
                if codes.get(a, q) == codes.get(b, q) {
                    collisions.push(CodeCollision {
                        subpulse: q,
                        antenna_a: a,
                        antenna_b: b,
                        code: codes.get(a, q),
                    });
                }
            }
        }
    }
    Ok(collisions)
}

/// Per-sub-pulse phases of one pulse, plus the differential symbols that
/// produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseFrame {
    antennas: usize,
    subpulses: usize,
    /// `M×Q`, radians in `[0, 2π)`.
    phases: Vec<f64>,
    /// `M×(Q−1)` dictionary indices, when the frame came from bits.
    symbols: Option<Vec<usize>>,
}

impl PhaseFrame {
    /// Frame with arbitrary phases (row-major, one row per antenna).
    pub fn from_phases(antennas: usize, subpulses: usize, phases: Vec<f64>) -> Result<Self> {
        if phases.len() != antennas * subpulses {
            return Err(Error::Dimension(format!(
                "{} phases for a {antennas}×{subpulses} frame",
                phases.len()
            )));
        }
        if phases.iter().any(|p| !p.is_finite()) {
            return Err(Error::Domain("phases must be finite".into()));
        }
        Ok(Self {
            antennas,
            subpulses,
            phases,
            symbols: None,
        })
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn subpulses(&self) -> usize {
        self.subpulses
    }

    pub fn phase(&self, m: usize, q: usize) -> f64 {
        self.phases[m * self.subpulses + q]
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    /// `Ω[m][q+1] − Ω[m][q]` wrapped into `[0, 2π)`.
    pub fn delta(&self, m: usize, q: usize) -> f64 {
        crate::num::wrap_two_pi(self.phase(m, q + 1) - self.phase(m, q))
    }

    /// Dictionary indices, row-major `M×(Q−1)`; `None` for frames built
    /// from raw phases.
    pub fn symbols(&self) -> Option<&[usize]> {
        self.symbols.as_deref()
    }

    /// Adds `phi` to every phase (no wrapping).
    pub fn rotated(&self, phi: f64) -> Self {
        Self {
            antennas: self.antennas,
            subpulses: self.subpulses,
            phases: self.phases.iter().map(|p| p + phi).collect(),
            symbols: self.symbols.clone(),
        }
    }
}

/// Maps bits onto per-pulse phase frames.
///
/// Bits fill antenna 0's `Q−1` differentials first, then antenna 1, and so
/// on; then the next pulse. Each antenna starts every pulse at phase 0 and
/// accumulates `Ω[q+1] = Ω[q] + ΔΩ[q] mod 2π`. The bit count must be a
/// multiple of [`WaveformConfig::bits_per_pulse`]; see [`pad_bits`].
pub fn encode_differential(bits: &[u8], config: &WaveformConfig) -> Result<Vec<PhaseFrame>> {
    let (m_count, q_count) = (config.num_antennas(), config.num_subpulses());
    if q_count < 2 {
        return Err(Error::Config(
            "differential encoding needs at least two sub-pulses".into(),
        ));
    }
    let modulation = config.modulation();
    let k = modulation.bits_per_symbol();
    let per_pulse = config.bits_per_pulse();
    if !bits.len().is_multiple_of(per_pulse) {
        return Err(Error::Alignment(format!(
            "{} bits is not a multiple of {per_pulse} bits per pulse",
            bits.len()
        )));
    }
    let dictionary = modulation.dictionary_eighths();
    bits.chunks(per_pulse)
        .map(|pulse_bits| {
            let mut phases = Vec::with_capacity(m_count * q_count);
            let mut symbols = Vec::with_capacity(m_count * (q_count - 1));
            for antenna_bits in pulse_bits.chunks(k * (q_count - 1)) {
                // Track phase in exact multiples of π/4.
                let mut eighths = 0u8;
                phases.push(0.0);
                for sym_bits in antenna_bits.chunks(k) {
                    let s = modulation.symbol_for_bits(sym_bits)?;
                    eighths = (eighths + dictionary[s]) % 8;
                    phases.push(f64::from(eighths) * FRAC_PI_4);
                    symbols.push(s);
                }
            }
            Ok(PhaseFrame {
                antennas: m_count,
                subpulses: q_count,
                phases,
                symbols: Some(symbols),
            })
        })
        .collect()
}

/// Zero-pads `bits` to a whole number of pulses. Returns the padded bits
/// and the number of pad bits appended.
pub fn pad_bits(bits: &[u8], config: &WaveformConfig) -> (Vec<u8>, usize) {
    let per_pulse = config.bits_per_pulse().max(1);
    let pad = (per_pulse - bits.len() % per_pulse) % per_pulse;
    let mut padded = bits.to_vec();
    padded.resize(bits.len() + pad, 0);
    (padded, pad)
}

/// Sampled sub-pulse tones `h[m][q][k]` for one configuration and code set.
///
/// Shared by the transmitter and the matched filter so both use the same
/// phase-ramp convention.
#[derive(Debug, Clone)]
pub struct SubpulseBank<T> {
    antennas: usize,
    subpulses: usize,
    len: usize,
    codes: FhCodeMatrix,
    taps: Vec<Complex<T>>,
}

impl<T: Real> SubpulseBank<T> {
    pub fn new(config: &WaveformConfig, codes: &FhCodeMatrix) -> Result<Self> {
        let (m_count, q_count) = (config.num_antennas(), config.num_subpulses());
        codes.check_shape(m_count, q_count)?;
        let len = config.samples_per_subpulse();
        let fs = config.sample_rate_hz();
        let mut taps = Vec::with_capacity(m_count * q_count * len);
        for m in 0..m_count {
            for q in 0..q_count {
                let freq = f64::from(codes.get(m, q)) * config.freq_step_hz();
                let origin = match config.phase_ramp() {
                    PhaseRamp::SubpulseLocal => 0,
                    PhaseRamp::PulseGlobal => q * len,
                };
                taps.extend((0..len).map(|k| {
                    // Reduce the cycle count before scaling by 2π to keep
                    // long ramps accurate.
                    let cycles = freq * (origin + k) as f64 / fs;
                    T::cis(TAU * cycles.fract())
                }));
            }
        }
        Ok(Self {
            antennas: m_count,
            subpulses: q_count,
            len,
            codes: codes.clone(),
            taps,
        })
    }

    pub fn template(&self, m: usize, q: usize) -> &[Complex<T>] {
        let start = (m * self.subpulses + q) * self.len;
        &self.taps[start..start + self.len]
    }

    pub fn code(&self, m: usize, q: usize) -> u32 {
        self.codes.get(m, q)
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn subpulses(&self) -> usize {
        self.subpulses
    }

    pub fn subpulse_len(&self) -> usize {
        self.len
    }
}

fn check_frame(config: &WaveformConfig, frame: &PhaseFrame) -> Result<()> {
    if frame.antennas != config.num_antennas() || frame.subpulses != config.num_subpulses() {
        return Err(Error::Dimension(format!(
            "phase frame is {}×{}, configuration is {}×{}",
            frame.antennas,
            frame.subpulses,
            config.num_antennas(),
            config.num_subpulses()
        )));
    }
    Ok(())
}

fn write_pulse<T: Real>(
    bank: &SubpulseBank<T>,
    frame: &PhaseFrame,
    m: usize,
    out: &mut [Complex<T>],
) {
    for (q, chunk) in out.chunks_exact_mut(bank.len).enumerate() {
        let rot = T::cis(frame.phase(m, q));
        for (dst, &h) in chunk.iter_mut().zip(bank.template(m, q)) {
            *dst = rot * h;
        }
    }
}

/// Samples of one FH/PSK pulse, one buffer of `Q·L` samples per antenna.
///
/// Sample `k` of sub-pulse `q` on antenna `m` is
/// `exp(j(Ω[m][q] + 2π·c[m][q]·Δf·k/fs))`, with `k` counted from the
/// sub-pulse start (or the pulse start under [`PhaseRamp::PulseGlobal`]).
pub fn synthesize_pulse<T: Real>(
    config: &WaveformConfig,
    codes: &FhCodeMatrix,
    frame: &PhaseFrame,
) -> Result<Vec<IqBuffer<T>>> {
    check_frame(config, frame)?;
    let bank = SubpulseBank::<T>::new(config, codes)?;
    let zero = Complex::new(T::zero(), T::zero());
    Ok((0..config.num_antennas())
        .map(|m| {
            let mut samples = vec![zero; config.samples_per_pulse()];
            write_pulse(&bank, frame, m, &mut samples);
            IqBuffer::from_parts(samples, config.sample_rate_hz())
        })
        .collect())
}

/// A synthesized pulse train with its ground truth.
#[derive(Debug, Clone)]
pub struct Transmission<T> {
    /// One buffer per antenna, `num_pulses · T₀·fs` samples each.
    pub antennas: Vec<IqBuffer<T>>,
    pub frames: Vec<PhaseFrame>,
    /// Bits as transmitted, including padding.
    pub bits: Vec<u8>,
    /// Zero bits appended to the caller's bits.
    pub pad_bits: usize,
}

impl<T> Transmission<T> {
    pub fn num_pulses(&self) -> usize {
        self.frames.len()
    }

    /// Bits supplied by the caller, without padding.
    pub fn payload_bits(&self) -> &[u8] {
        &self.bits[..self.bits.len() - self.pad_bits]
    }
}

/// Encodes `bits` (zero-padded to whole pulses) and lays the pulses out one
/// PRI apart. Samples between pulses are exactly zero.
pub fn synthesize_train<T: Real>(
    config: &WaveformConfig,
    codes: &FhCodeMatrix,
    bits: &[u8],
) -> Result<Transmission<T>> {
    let (padded, pad_bits) = pad_bits(bits, config);
    let frames = encode_differential(&padded, config)?;
    let bank = SubpulseBank::<T>::new(config, codes)?;
    let pri = config.samples_per_pri();
    let pulse_len = config.samples_per_pulse();
    let zero = Complex::new(T::zero(), T::zero());
    let antennas = (0..config.num_antennas())
        .map(|m| {
            let mut samples = vec![zero; frames.len() * pri];
            for (frame, slot) in frames.iter().zip(samples.chunks_exact_mut(pri)) {
                write_pulse(&bank, frame, m, &mut slot[..pulse_len]);
            }
            IqBuffer::from_parts(samples, config.sample_rate_hz())
        })
        .collect();
    Ok(Transmission {
        antennas,
        frames,
        bits: padded,
        pad_bits,
    })
}
