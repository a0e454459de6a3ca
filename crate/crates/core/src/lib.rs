//! Baseband modem and Monte Carlo toolkit for frequency-hopped MIMO
//! dual-function radar-communications links.
//!
//! Information rides on the phase differences between consecutive
//! sub-pulses of an FH radar pulse (D-BPSK or D-QPSK). The receiver decodes
//! it from matched-filter output ratios, so it needs neither the channel
//! gain nor the direction of the transmitter.
//!
//! Signal-processing code is generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the common choices.

pub mod channel;
pub mod config;
pub mod error;
pub mod harness;
pub mod io;
pub mod iq;
pub mod metrics;
pub mod num;
pub mod receiver;
pub mod waveform;

pub use channel::{
    apply_channel, calibrate_noise_for_snr, steering_vector, ChannelState, FadingMode,
};
pub use error::{Error, Result};
pub use harness::{run_ber_sweep, BerPoint, BerReport, ChannelTemplate, SweepSpec};
pub use iq::IqBuffer;
pub use metrics::{compute_ber, estimate_snr, theoretical_dbpsk_ber, SnrConvention};
pub use num::Real;
pub use receiver::{
    decode_capture, decode_differential, estimate_delay, matched_filter, CaptureOptions,
    DecodedFrame, MatchedFilterOutput,
};
pub use waveform::{
    encode_differential, synthesize_pulse, synthesize_train, validate_fh_codes, FhCodeMatrix,
    Modulation, PhaseFrame, WaveformConfig, WaveformParams,
};

pub type IqBuffer32 = IqBuffer<f32>;
pub type IqBuffer64 = IqBuffer<f64>;
pub type MatchedFilterOutput32 = MatchedFilterOutput<f32>;
pub type MatchedFilterOutput64 = MatchedFilterOutput<f64>;
pub type DecodedFrame32 = DecodedFrame<f32>;
pub type DecodedFrame64 = DecodedFrame<f64>;
pub type Transmission64 = waveform::Transmission<f64>;
pub type Transmission32 = waveform::Transmission<f32>;
