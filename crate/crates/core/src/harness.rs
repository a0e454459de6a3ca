//! Deterministic Monte Carlo BER sweeps.
//!
//! Every (point, batch) pair owns an RNG keyed by `(master seed, point
//! index, batch index)`, so the random stream a batch sees does not depend
//! on which worker runs it. Batches are evaluated in fixed-size waves and
//! folded in batch order; the stopping rule is checked after each batch,
//! which makes the result independent of the worker count.

use std::time::{SystemTime, UNIX_EPOCH};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{apply_channel, ChannelState, FadingMode};
use crate::error::{Error, Result};
use crate::metrics::{
    binomial_standard_error, oracle_differential_ber, per_bit_from_per_sample,
    theoretical_dbpsk_ber, SnrConvention,
};
use crate::num::db_to_linear;
use crate::receiver::{
    decode_capture, decode_differential, matched_filter_with_bank, CaptureOptions,
};
use crate::waveform::{
    synthesize_train, FhCodeMatrix, Modulation, SubpulseBank, WaveformConfig, WaveformParams,
};

/// Smallest allowed `min_bits`.
pub const MIN_BITS_FLOOR: u64 = 10_000;
/// Batches evaluated per parallel wave.
const WAVE: u64 = 32;

/// Channel applied at every sweep point; the noise variance comes from the
/// SNR grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelTemplate {
    pub alpha: Complex64,
    pub theta: f64,
    pub delay: usize,
    pub dc_offset: Complex64,
    pub iq_gain: f64,
    pub iq_phase: f64,
    /// Redraw the gain every pulse.
    pub rayleigh: bool,
}

impl Default for ChannelTemplate {
    fn default() -> Self {
        let s = ChannelState::default();
        Self {
            alpha: s.alpha,
            theta: s.theta,
            delay: s.delay,
            dc_offset: s.dc_offset,
            iq_gain: s.iq_gain,
            iq_phase: s.iq_phase,
            rayleigh: false,
        }
    }
}

impl ChannelTemplate {
    fn state(&self, noise_variance: f64, pri_samples: usize) -> ChannelState {
        ChannelState {
            alpha: self.alpha,
            theta: self.theta,
            noise_variance,
            delay: self.delay,
            dc_offset: self.dc_offset,
            iq_gain: self.iq_gain,
            iq_phase: self.iq_phase,
            fading: if self.rayleigh {
                FadingMode::RayleighBlock {
                    block_len: pri_samples,
                }
            } else {
                FadingMode::Fixed
            },
        }
    }
}

/// Everything that defines a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// Transmit parameters. Timing is given for one bit per symbol; with
    /// `equal_energy_per_bit`, a modulation carrying `k` bits per symbol
    /// stretches the sub-pulse and PRI by `k`. The `modulation` field is
    /// overridden per sweep point.
    pub waveform: WaveformParams,
    pub codes: Option<FhCodeMatrix>,
    pub equal_energy_per_bit: bool,
    pub modulations: Vec<Modulation>,
    /// Strictly increasing; `+inf` means noiseless.
    pub snr_db: Vec<f64>,
    pub snr_convention: SnrConvention,
    pub min_bits: u64,
    pub max_errors: Option<u64>,
    pub bits_per_batch: usize,
    pub seed: u64,
    pub channel: ChannelTemplate,
    /// Trials for the D-QPSK Monte Carlo oracle; 0 disables it.
    pub oracle_trials: u64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            waveform: WaveformParams::bench_default(Modulation::Dbpsk),
            codes: None,
            equal_energy_per_bit: true,
            modulations: Modulation::ALL.to_vec(),
            snr_db: (0..=12).map(f64::from).collect(),
            snr_convention: SnrConvention::PerBit,
            min_bits: 100_000,
            max_errors: None,
            bits_per_batch: 1000,
            seed: 1,
            channel: ChannelTemplate::default(),
            oracle_trials: 200_000,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.snr_db.is_empty() {
            return Err(Error::Config("SNR grid is empty".into()));
        }
        if self.snr_db.iter().any(|s| s.is_nan()) || self.snr_db.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("SNR grid must be strictly increasing".into()));
        }
        if self.min_bits < MIN_BITS_FLOOR {
            return Err(Error::Config(format!(
                "min_bits must be at least {MIN_BITS_FLOOR}, got {}",
                self.min_bits
            )));
        }
        if self.bits_per_batch == 0 {
            return Err(Error::Config("bits_per_batch must be positive".into()));
        }
        if self.modulations.is_empty() {
            return Err(Error::Config("no modulations to sweep".into()));
        }
        let mut m = self.modulations.clone();
        m.sort();
        m.dedup();
        if m.len() != self.modulations.len() {
            return Err(Error::Config("modulation list has duplicates".into()));
        }
        self.channel.state(0.0, 1).validate()?;
        for &m in &self.modulations {
            let config = self.config_for(m)?;
            if let Some(codes) = &self.codes {
                FhCodeMatrix::validated(codes.rows())?;
                SubpulseBank::<f64>::new(&config, codes)?;
            }
        }
        Ok(())
    }

    /// Waveform configuration used for `modulation`.
    pub fn config_for(&self, modulation: Modulation) -> Result<WaveformConfig> {
        let mut p = self.waveform.clone();
        p.modulation = modulation;
        if self.equal_energy_per_bit {
            let k = modulation.bits_per_symbol() as f64;
            p.subpulse_duration_s *= k;
            p.pri_s *= k;
        }
        p.build()
    }

    fn codes_for(&self, config: &WaveformConfig) -> FhCodeMatrix {
        self.codes
            .clone()
            .unwrap_or_else(|| FhCodeMatrix::default_for(config))
    }

    /// Short SHA-256 of the canonical JSON form.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("sweep spec serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// One simulated point of a BER curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    pub modulation: Modulation,
    pub snr_db: f64,
    pub snr_convention: SnrConvention,
    pub bits_sent: u64,
    pub bit_errors: u64,
    pub ber: f64,
    pub stderr: f64,
    pub oracle_ber: Option<f64>,
}

impl BerPoint {
    pub fn new(
        modulation: Modulation,
        snr_db: f64,
        snr_convention: SnrConvention,
        bits_sent: u64,
        bit_errors: u64,
        oracle_ber: Option<f64>,
    ) -> Result<Self> {
        if bit_errors > bits_sent {
            return Err(Error::Domain(format!(
                "{bit_errors} errors exceed {bits_sent} bits"
            )));
        }
        let ber = if bits_sent == 0 {
            0.0
        } else {
            bit_errors as f64 / bits_sent as f64
        };
        Ok(Self {
            modulation,
            snr_db,
            snr_convention,
            bits_sent,
            bit_errors,
            ber,
            stderr: binomial_standard_error(ber, bits_sent),
            oracle_ber,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub config_hash: String,
    pub seed: u64,
    pub timestamp_unix: u64,
    pub snr_convention: SnrConvention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerReport {
    pub metadata: ReportMetadata,
    /// Sorted by `(modulation, snr_db)`.
    pub points: Vec<BerPoint>,
}

impl BerReport {
    /// `(snr_db, ber)` pairs for one modulation.
    pub fn curve(&self, modulation: Modulation) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .filter(|p| p.modulation == modulation)
            .map(|p| (p.snr_db, p.ber))
            .collect()
    }
}

/// RNG for one batch. The 32-byte key is `[master, point, batch, tag]`
/// little-endian; `tag` separates the oracle's stream from the batches'.
fn keyed_rng(master: u64, point: u64, batch: u64, tag: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (chunk, v) in key.chunks_exact_mut(8).zip([master, point, batch, tag]) {
        chunk.copy_from_slice(&v.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

struct PointPlan {
    modulation: Modulation,
    snr_db: f64,
    config: WaveformConfig,
    codes: FhCodeMatrix,
    bank: SubpulseBank<f64>,
    state: ChannelState,
    gamma_b: f64,
}

fn plan_point(spec: &SweepSpec, modulation: Modulation, snr_db: f64) -> Result<PointPlan> {
    let config = spec.config_for(modulation)?;
    let codes = spec.codes_for(&config);
    let bank = SubpulseBank::new(&config, &codes)?;
    let snr = db_to_linear(snr_db);
    let gain = spec.channel.alpha.norm_sqr();
    let antennas = config.num_antennas();
    let (noise_variance, gamma_b) = match spec.snr_convention {
        SnrConvention::PerSample => (
            gain * antennas as f64 / snr,
            per_bit_from_per_sample(snr, config.samples_per_subpulse(), modulation, antennas),
        ),
        SnrConvention::PerBit => (
            gain * config.samples_per_subpulse() as f64
                / (snr * modulation.bits_per_symbol() as f64),
            snr,
        ),
    };
    if !(noise_variance.is_finite() && noise_variance >= 0.0) {
        return Err(Error::Config(format!(
            "SNR {snr_db} dB gives no usable noise variance"
        )));
    }
    let state = spec.channel.state(noise_variance, config.samples_per_pri());
    Ok(PointPlan {
        modulation,
        snr_db,
        config,
        codes,
        bank,
        state,
        gamma_b,
    })
}

fn run_batch(spec: &SweepSpec, plan: &PointPlan, point: u64, batch: u64) -> Result<u64> {
    let mut rng = keyed_rng(spec.seed, point, batch, 0);
    let bits: Vec<u8> = (0..spec.bits_per_batch)
        .map(|_| rng.random_range(0..2))
        .collect();
    let channel_seed: u64 = rng.random();
    let tx = synthesize_train::<f64>(&plan.config, &plan.codes, &bits)?;
    let rx = apply_channel(
        &tx.antennas,
        plan.config.element_positions(),
        &plan.state,
        channel_seed,
    )?;
    let frame = if spec.channel.delay != 0
        || spec.channel.dc_offset != Complex64::new(0.0, 0.0)
        || spec.channel.iq_gain != 1.0
        || spec.channel.iq_phase != 0.0
    {
        let options = CaptureOptions {
            iq_gain: spec.channel.iq_gain,
            iq_phase: spec.channel.iq_phase,
            num_pulses: Some(tx.num_pulses()),
            ..Default::default()
        };
        decode_capture(&rx, &plan.codes, &plan.config, &options)?.frame
    } else {
        let offsets: Vec<usize> = (0..tx.num_pulses())
            .map(|n| n * plan.config.samples_per_pri())
            .collect();
        let y = matched_filter_with_bank(&rx, &plan.bank, &offsets)?;
        decode_differential(&y, plan.modulation)?
    };
    frame.count_bit_errors(tx.payload_bits())
}

fn oracle_for(spec: &SweepSpec, plan: &PointPlan, point: u64) -> Result<Option<f64>> {
    let orthogonal = plan.config.num_antennas() == 1 || plan.config.is_orthogonal();
    if spec.channel.rayleigh || !orthogonal {
        return Ok(None);
    }
    if plan.gamma_b.is_infinite() {
        return Ok(Some(0.0));
    }
    match plan.modulation {
        Modulation::Dbpsk => theoretical_dbpsk_ber(plan.gamma_b).map(Some),
        Modulation::Dqpsk if spec.oracle_trials > 0 => {
            let seed = keyed_rng(spec.seed, point, 0, 1).random();
            Ok(Some(
                oracle_differential_ber(plan.modulation, plan.gamma_b, spec.oracle_trials, seed)?
                    .ber,
            ))
        }
        Modulation::Dqpsk => Ok(None),
    }
}

/// Runs the sweep on `workers` threads.
///
/// For every (modulation, SNR) point, batches of `bits_per_batch` random
/// bits go through the full link until `min_bits` have been counted or
/// `max_errors` is reached.
pub fn run_ber_sweep(spec: &SweepSpec, workers: usize) -> Result<BerReport> {
    spec.validate()?;
    let mut modulations = spec.modulations.clone();
    modulations.sort();
    let plans: Vec<PointPlan> = modulations
        .iter()
        .flat_map(|&m| spec.snr_db.iter().map(move |&s| (m, s)))
        .map(|(m, s)| plan_point(spec, m, s))
        .collect::<Result<_>>()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;

    let points = pool.install(|| {
        plans
            .iter()
            .enumerate()
            .map(|(i, plan)| run_point(spec, plan, i as u64))
            .collect::<Result<Vec<_>>>()
    })?;

    Ok(BerReport {
        metadata: ReportMetadata {
            config_hash: spec.config_hash(),
            seed: spec.seed,
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            snr_convention: spec.snr_convention,
        },
        points,
    })
}

fn run_point(spec: &SweepSpec, plan: &PointPlan, point: u64) -> Result<BerPoint> {
    let per_batch = spec.bits_per_batch as u64;
    let (mut bits, mut errors) = (0u64, 0u64);
    let mut next = 0u64;
    'waves: loop {
        let results: Vec<u64> = (next..next + WAVE)
            .into_par_iter()
            .map(|b| run_batch(spec, plan, point, b))
            .collect::<Result<_>>()?;
        next += WAVE;
        for e in results {
            bits += per_batch;
            errors += e;
            let enough_bits = bits >= spec.min_bits;
            let enough_errors = spec.max_errors.is_some_and(|m| errors >= m);
            if enough_bits || enough_errors {
                break 'waves;
            }
        }
    }
    if spec.max_errors.is_some_and(|m| errors >= m) && bits < spec.min_bits {
        log::info!(
            "{} at {} dB stopped early after {bits} bits ({errors} errors)",
            plan.modulation,
            plan.snr_db
        );
    }
    BerPoint::new(
        plan.modulation,
        plan.snr_db,
        spec.snr_convention,
        bits,
        errors,
        oracle_for(spec, plan, point)?,
    )
}
