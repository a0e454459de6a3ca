//! TOML files for waveform configurations and sweep specifications.
//!
//! Every key is optional and defaults to the bench setup; unknown keys are
//! rejected.
//!
//! Waveform file keys: `modulation` (`"dbpsk"`/`"dqpsk"`), `num_antennas`,
//! `num_subpulses`, `freq_step_hz`, `subpulse_duration_s`, `pri_s`,
//! `sample_rate_hz`, `element_positions`, `phase_ramp`
//! (`"subpulse-local"`/`"pulse-global"`), `codes` (one row per antenna).
//!
//! Sweep file keys: `seed`, `snr_db`, `snr_convention`
//! (`"per-bit"`/`"per-sample"`), `min_bits`, `max_errors`, `bits_per_batch`,
//! `modulations`, `equal_energy_per_bit`, `oracle_trials`, a `[waveform]`
//! table (waveform keys except `modulation`; timing is for D-BPSK) and a
//! `[channel]` table with `alpha`, `theta`, `delay`, `dc_offset`,
//! `iq_gain`, `iq_phase`, `rayleigh`. Complex values are strings such as
//! `"0.2+0.1j"`.

use std::path::Path;

use num_complex::Complex64;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::harness::{ChannelTemplate, SweepSpec};
use crate::metrics::SnrConvention;
use crate::waveform::{FhCodeMatrix, Modulation, PhaseRamp, WaveformConfig, WaveformParams};

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveformFile {
    pub modulation: Option<Modulation>,
    pub num_antennas: Option<usize>,
    pub num_subpulses: Option<usize>,
    pub freq_step_hz: Option<f64>,
    pub subpulse_duration_s: Option<f64>,
    pub pri_s: Option<f64>,
    pub sample_rate_hz: Option<f64>,
    pub element_positions: Option<Vec<f64>>,
    pub phase_ramp: Option<PhaseRamp>,
    pub codes: Option<Vec<Vec<u32>>>,
}

impl WaveformFile {
    pub fn params(&self) -> WaveformParams {
        let modulation = self.modulation.unwrap_or(Modulation::Dbpsk);
        let base = WaveformParams::bench_default(modulation);
        let num_antennas = self.num_antennas.unwrap_or(base.num_antennas);
        let num_subpulses = self.num_subpulses.unwrap_or(base.num_subpulses);
        let subpulse_duration_s = self.subpulse_duration_s.unwrap_or(base.subpulse_duration_s);
        WaveformParams {
            num_antennas,
            num_subpulses,
            freq_step_hz: self.freq_step_hz.unwrap_or(base.freq_step_hz),
            subpulse_duration_s,
            pri_s: self
                .pri_s
                .unwrap_or(2.0 * num_subpulses as f64 * subpulse_duration_s),
            sample_rate_hz: self.sample_rate_hz.unwrap_or(base.sample_rate_hz),
            modulation,
            element_positions: self
                .element_positions
                .clone()
                .unwrap_or_else(|| WaveformParams::half_wavelength_array(num_antennas)),
            phase_ramp: self.phase_ramp.unwrap_or_default(),
        }
    }

    pub fn build(&self) -> Result<(WaveformConfig, FhCodeMatrix)> {
        let config = self.params().build()?;
        let codes = match &self.codes {
            Some(rows) => FhCodeMatrix::validated(rows.clone())?,
            None => FhCodeMatrix::default_for(&config),
        };
        crate::waveform::SubpulseBank::<f64>::new(&config, &codes)?;
        Ok((config, codes))
    }
}

fn toml_error(text: &str, e: toml::de::Error) -> Error {
    match e.span() {
        Some(span) => {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            Error::Config(format!("line {line}: {}", e.message().trim()))
        }
        None => Error::Config(e.message().trim().to_string()),
    }
}

/// Prefixes a configuration error with the file it came from.
fn in_file(path: &Path, e: Error) -> Error {
    match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    }
}

pub fn parse_waveform_toml(text: &str) -> Result<(WaveformConfig, FhCodeMatrix)> {
    let file: WaveformFile = toml::from_str(text).map_err(|e| toml_error(text, e))?;
    file.build()
}

pub fn load_waveform(path: impl AsRef<Path>) -> Result<(WaveformConfig, FhCodeMatrix)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_waveform_toml(&text).map_err(|e| in_file(path, e))
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelFile {
    pub alpha: Option<String>,
    pub theta: Option<f64>,
    pub delay: Option<usize>,
    pub dc_offset: Option<String>,
    pub iq_gain: Option<f64>,
    pub iq_phase: Option<f64>,
    pub rayleigh: Option<bool>,
}

impl ChannelFile {
    pub fn template(&self) -> Result<ChannelTemplate> {
        let d = ChannelTemplate::default();
        Ok(ChannelTemplate {
            alpha: self
                .alpha
                .as_deref()
                .map(parse_complex)
                .transpose()?
                .unwrap_or(d.alpha),
            theta: self.theta.unwrap_or(d.theta),
            delay: self.delay.unwrap_or(d.delay),
            dc_offset: self
                .dc_offset
                .as_deref()
                .map(parse_complex)
                .transpose()?
                .unwrap_or(d.dc_offset),
            iq_gain: self.iq_gain.unwrap_or(d.iq_gain),
            iq_phase: self.iq_phase.unwrap_or(d.iq_phase),
            rayleigh: self.rayleigh.unwrap_or(d.rayleigh),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    pub seed: Option<u64>,
    pub snr_db: Option<Vec<f64>>,
    pub snr_convention: Option<SnrConvention>,
    pub min_bits: Option<u64>,
    pub max_errors: Option<u64>,
    pub bits_per_batch: Option<usize>,
    pub modulations: Option<Vec<Modulation>>,
    pub equal_energy_per_bit: Option<bool>,
    pub oracle_trials: Option<u64>,
    pub waveform: Option<WaveformFile>,
    pub channel: Option<ChannelFile>,
}

impl SweepFile {
    pub fn spec(&self) -> Result<SweepSpec> {
        let d = SweepSpec::default();
        let wf = self.waveform.clone().unwrap_or_default();
        if wf.modulation.is_some() {
            return Err(Error::Config(
                "set `modulations` at the top level, not in [waveform]".into(),
            ));
        }
        let codes = wf.codes.clone().map(FhCodeMatrix::validated).transpose()?;
        let spec = SweepSpec {
            waveform: wf.params(),
            codes,
            equal_energy_per_bit: self.equal_energy_per_bit.unwrap_or(d.equal_energy_per_bit),
            modulations: self.modulations.clone().unwrap_or(d.modulations),
            snr_db: self.snr_db.clone().unwrap_or(d.snr_db),
            snr_convention: self.snr_convention.unwrap_or(d.snr_convention),
            min_bits: self.min_bits.unwrap_or(d.min_bits),
            max_errors: self.max_errors.or(d.max_errors),
            bits_per_batch: self.bits_per_batch.unwrap_or(d.bits_per_batch),
            seed: self.seed.unwrap_or(d.seed),
            channel: self.channel.clone().unwrap_or_default().template()?,
            oracle_trials: self.oracle_trials.unwrap_or(d.oracle_trials),
        };
        spec.validate()?;
        Ok(spec)
    }
}

pub fn parse_sweep_toml(text: &str) -> Result<SweepSpec> {
    let file: SweepFile = toml::from_str(text).map_err(|e| toml_error(text, e))?;
    file.spec()
}

pub fn load_sweep(path: impl AsRef<Path>) -> Result<SweepSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sweep_toml(&text).map_err(|e| in_file(path, e))
}

/// Parses `a`, `bj`, `a+bj` or `a-bj` (`i` is accepted for `j`).
pub fn parse_complex(s: &str) -> Result<Complex64> {
    let bad = || Error::Config(format!("cannot parse complex number `{s}`"));
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    if t.is_empty() {
        return Err(bad());
    }
    let Some(body) = t.strip_suffix(['j', 'i']) else {
        return t
            .parse::<f64>()
            .ok()
            .filter(|re| re.is_finite())
            .map(|re| Complex64::new(re, 0.0))
            .ok_or_else(bad);
    };
    // Split at the last sign that is not leading and not an exponent sign.
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| matches!(bytes[k], b'+' | b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let parse_im = |x: &str| -> Result<f64> {
        match x {
            "" | "+" => Ok(1.0),
            "-" => Ok(-1.0),
            _ => x.parse().map_err(|_| bad()),
        }
    };
    let c = match split {
        Some(k) => Complex64::new(body[..k].parse().map_err(|_| bad())?, parse_im(&body[k..])?),
        None => Complex64::new(0.0, parse_im(body)?),
    };
    if c.re.is_finite() && c.im.is_finite() {
        Ok(c)
    } else {
        Err(bad())
    }
}
